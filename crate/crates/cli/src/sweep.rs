//! Expansion of a scenario file into sweep points.
use toml::{Table, Value};

use crate::config::{Scenario, SweepConfig};
use crate::Issue;

/// One scenario instance to run.
#[derive(Clone, Debug)]
pub struct Point {
    /// `name=value`, or the scenario name without a sweep.
    pub label: String,
    /// Output subdirectory relative to the scenario directory; empty
    /// without a sweep.
    pub dir: String,
    pub value: Option<f64>,
    pub scenario: Scenario,
}

fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), String> {
    let mut cur = root;
    let segs: Vec<&str> = path.split('.').collect();
    for (i, seg) in segs.iter().enumerate() {
        let last = i + 1 == segs.len();
        cur = match cur {
            Value::Table(t) => {
                if last {
                    t.insert(seg.to_string(), value);
                    return Ok(());
                }
                t.entry(seg.to_string()).or_insert_with(|| Value::Table(Table::new()))
            }
            Value::Array(a) => {
                let j: usize = seg.parse().map_err(|_| format!("`{path}`: `{seg}` is not an array index"))?;
                let n = a.len();
                let slot = a.get_mut(j).ok_or_else(|| format!("`{path}`: index {j} beyond {n} entries"))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(format!("`{path}`: `{seg}` is inside a scalar")),
        };
    }
    Err(format!("`{path}` is empty"))
}

/// Numbers in TOML keep their type: integer-valued floats become integers
/// when the path already holds an integer.
fn typed(root: &Value, path: &str, v: f64) -> Value {
    let mut cur = Some(root);
    for seg in path.split('.') {
        cur = match cur {
            Some(Value::Table(t)) => t.get(seg),
            Some(Value::Array(a)) => seg.parse::<usize>().ok().and_then(|j| a.get(j)),
            _ => None,
        };
    }
    match cur {
        Some(Value::Integer(_)) if v.fract() == 0.0 => Value::Integer(v as i64),
        _ => Value::Float(v),
    }
}

fn issue(field: &str, message: impl Into<String>) -> Issue {
    Issue { field: field.into(), message: message.into() }
}

/// De-serialization error with the line it points at, when known.
fn parse_issue(e: toml::de::Error, text: Option<&str>, field: &str) -> Issue {
    let mut m = e.message().trim().to_string();
    if let (Some(span), Some(text)) = (e.span(), text) {
        let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
        m = format!("line {line}: {m}");
    }
    issue(field, m)
}

/// Parse a scenario file and expand its sweep.
pub fn expand(text: &str) -> Result<(Scenario, Vec<Point>), Vec<Issue>> {
    let base: Scenario = toml::from_str(text).map_err(|e| vec![parse_issue(e, Some(text), "")])?;
    let Some(sweep) = base.sweep.clone() else {
        let label = base.name.clone();
        return Ok((base.clone(), vec![Point { label, dir: String::new(), value: None, scenario: base }]));
    };
    let mut issues = check_sweep(&sweep);
    if !issues.is_empty() {
        return Err(issues);
    }
    let mut table: Value = toml::from_str::<Table>(text).map(Value::Table).map_err(|e| vec![parse_issue(e, Some(text), "")])?;
    if let Value::Table(t) = &mut table {
        t.remove("sweep");
    }
    let width = (sweep.values.len().max(1) as f64).log10().floor() as usize + 1;
    let mut points = Vec::new();
    for (i, &v) in sweep.values.iter().enumerate() {
        let mut point = table.clone();
        for t in &sweep.targets {
            let val = typed(&point, &t.path, v * t.scale);
            if let Err(m) = set_path(&mut point, &t.path, val) {
                issues.push(issue(&format!("sweep.targets.{}", t.path), m));
            }
        }
        if let Some(extra) = sweep.per_point.get(i) {
            for (k, val) in extra {
                if let Err(m) = set_path(&mut point, k, val.clone()) {
                    issues.push(issue(&format!("sweep.per_point.{i}"), m));
                }
            }
        }
        match point.try_into::<Scenario>() {
            Ok(scenario) => points.push(Point {
                label: format!("{}={}", sweep.name, v),
                dir: format!("{}_{:0width$}", sweep.name, i),
                value: Some(v),
                scenario,
            }),
            Err(e) => issues.push(parse_issue(e, None, &format!("sweep.values.{i}"))),
        }
    }
    if issues.is_empty() {
        Ok((base, points))
    } else {
        Err(issues)
    }
}

fn check_sweep(s: &SweepConfig) -> Vec<Issue> {
    let mut out = Vec::new();
    if s.name.is_empty() || !s.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        out.push(issue("sweep.name", "must be a nonempty identifier"));
    }
    if s.values.is_empty() {
        out.push(issue("sweep.values", "needs at least one value"));
    }
    if s.values.iter().any(|v| !v.is_finite()) {
        out.push(issue("sweep.values", "values must be finite"));
    }
    if s.targets.is_empty() && s.per_point.is_empty() {
        out.push(issue("sweep.targets", "a sweep must change something"));
    }
    if !s.per_point.is_empty() && s.per_point.len() != s.values.len() {
        out.push(issue(
            "sweep.per_point",
            format!("has {} entries for {} values", s.per_point.len(), s.values.len()),
        ));
    }
    for t in &s.targets {
        if t.path.split('.').next() == Some("sweep") || t.path.is_empty() {
            out.push(issue("sweep.targets", format!("cannot target `{}`", t.path)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
name = "s"
[grid]
system = [{ label = "x", count = 16, min = -1.0, max = 1.0 }]
clock = [{ label = "phi", count = 16, angular = true, mass = 10.0 }]
[clock]
kind = "cyclic"
inertia = 10.0
momenta = [1.0]
"#;

    #[test]
    fn no_sweep_gives_one_point() {
        let (_, pts) = expand(BASE).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].dir, "");
    }

    #[test]
    fn targets_and_per_point_overrides_apply() {
        let text = format!(
            "{BASE}\n[sweep]\nname = \"m\"\nvalues = [10.0, 20.0]\ntargets = [{{ path = \"clock.inertia\" }}, \
             {{ path = \"grid.clock.0.mass\" }}, {{ path = \"clock.momenta.0\", scale = 0.1 }}]\n\
             per_point = [{{ \"grid.clock.0.count\" = 16 }}, {{ \"grid.clock.0.count\" = 32 }}]\n"
        );
        let (_, pts) = expand(&text).unwrap();
        assert_eq!(pts[1].scenario.grid.clock[0].count, 32);
        assert_eq!(pts[1].scenario.grid.clock[0].mass, 20.0);
        let c = pts[1].scenario.clock.as_ref().unwrap();
        assert_eq!((c.inertia, c.momenta[0]), (20.0, 2.0));
        assert_eq!(pts[0].label, "m=10");
        assert!(pts[0].scenario.sweep.is_none());
    }

    #[test]
    fn bad_path_is_an_issue() {
        let text = format!("{BASE}\n[sweep]\nname = \"m\"\nvalues = [1.0]\ntargets = [{{ path = \"grid.clock.3.mass\" }}]\n");
        let issues = expand(&text).unwrap_err();
        assert!(issues[0].message.contains("index 3"), "{issues:?}");
    }
}
