use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::grid::{AxisId, ProductGrid};
use crate::error::LatticeError;

/// Functional form of a potential term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    /// `0`.
    Zero,
    /// `spring/2 (q - center)^2`; `omega` may replace `spring` (uses the axis mass).
    Harmonic,
    /// `barrier ((q - center)^2 / separation^2 - 1)^2`.
    DoubleWell,
    /// `height exp(-(q - center)^2 / (2 width^2))`.
    GaussianBarrier,
    /// `strength (x - system_center) (R - clock_center)`.
    BilinearCoupling,
    /// `strength (x - system_center) cos(harmonic R + phase)`.
    CosineCoupling,
    /// Linear interpolation in `table` rows `[q, V]`.
    Tabulated,
}

impl PotentialKind {
    fn is_coupling(self) -> bool {
        matches!(self, PotentialKind::BilinearCoupling | PotentialKind::CosineCoupling)
    }

    fn allowed(self) -> &'static [&'static str] {
        match self {
            PotentialKind::Zero | PotentialKind::Tabulated => &[],
            PotentialKind::Harmonic => &["spring", "omega", "center"],
            PotentialKind::DoubleWell => &["barrier", "separation", "center"],
            PotentialKind::GaussianBarrier => &["height", "width", "center"],
            PotentialKind::BilinearCoupling => &["strength", "system_center", "clock_center"],
            PotentialKind::CosineCoupling => &["strength", "system_center", "harmonic", "phase"],
        }
    }
}

/// Which block of `H = H_S + H_C + H_I` a term belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Partition {
    System,
    Clock,
    Interaction,
}

/// One potential term as written in a configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    /// Axis labels the term depends on.
    #[serde(default)]
    pub axes: Vec<String>,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
    /// Rows `[q, V]` for [`PotentialKind::Tabulated`], sorted by `q`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub table: Vec<[f64; 2]>,
}

impl PotentialSpec {
    pub fn new(kind: PotentialKind, axes: &[&str], parameters: &[(&str, f64)]) -> Self {
        PotentialSpec {
            kind,
            axes: axes.iter().map(|s| s.to_string()).collect(),
            parameters: parameters.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            table: Vec::new(),
        }
    }

    pub fn zero() -> Self {
        Self::new(PotentialKind::Zero, &[], &[])
    }

    pub fn harmonic(axis: &str, spring: f64) -> Self {
        Self::new(PotentialKind::Harmonic, &[axis], &[("spring", spring)])
    }

    pub fn bilinear(system_axis: &str, clock_axis: &str, strength: f64) -> Self {
        Self::new(PotentialKind::BilinearCoupling, &[system_axis, clock_axis], &[("strength", strength)])
    }

    pub fn cosine(system_axis: &str, clock_axis: &str, strength: f64) -> Self {
        Self::new(PotentialKind::CosineCoupling, &[system_axis, clock_axis], &[("strength", strength)])
    }

    pub fn tabulated(axis: &str, table: Vec<[f64; 2]>) -> Self {
        PotentialSpec { table, ..Self::new(PotentialKind::Tabulated, &[axis], &[]) }
    }

    fn label(&self) -> String {
        format!("{:?}({})", self.kind, self.axes.join(","))
    }

    /// Check parameters and axis placement against `grid`.
    pub(crate) fn resolve(
        &self,
        grid: &ProductGrid,
        partition: Partition,
    ) -> Result<ResolvedTerm, LatticeError> {
        let err = |m: String| Err(LatticeError::Config(format!("{}: {m}", self.label())));
        for k in self.parameters.keys() {
            if !self.kind.allowed().contains(&k.as_str()) {
                return err(format!("unknown parameter `{k}`"));
            }
        }
        let mut ids = Vec::with_capacity(self.axes.len());
        for label in &self.axes {
            match grid.find(label) {
                Some(id) => ids.push(id),
                None => return err(format!("unknown axis `{label}`")),
            }
        }
        let expected = match self.kind {
            PotentialKind::Zero => 0,
            k if k.is_coupling() => 2,
            _ => 1,
        };
        if ids.len() != expected {
            return err(format!("expects {expected} axes, got {}", ids.len()));
        }
        let placement_ok = match (partition, self.kind) {
            (_, PotentialKind::Zero) => true,
            (Partition::Interaction, k) => {
                k.is_coupling()
                    && matches!(ids[0], AxisId::System(_))
                    && matches!(ids[1], AxisId::Clock(_))
            }
            (_, k) if k.is_coupling() => false,
            (Partition::System, _) => matches!(ids[0], AxisId::System(_)),
            (Partition::Clock, _) => matches!(ids[0], AxisId::Clock(_)),
        };
        if !placement_ok {
            return err(format!("not allowed in the {partition:?} partition"));
        }
        let p = |name: &str| self.parameters.get(name).copied();
        let need = |name: &str| p(name).ok_or_else(|| {
            LatticeError::Config(format!("{}: missing parameter `{name}`", self.label()))
        });
        let shape = match self.kind {
            PotentialKind::Zero => Shape::Zero,
            PotentialKind::Harmonic => {
                let spring = match (p("spring"), p("omega")) {
                    (Some(k), None) => k,
                    (None, Some(w)) => grid.axis(ids[0]).mass * w * w,
                    _ => return err("give exactly one of `spring`, `omega`".into()),
                };
                Shape::Harmonic { spring, center: p("center").unwrap_or(0.0) }
            }
            PotentialKind::DoubleWell => {
                let separation = need("separation")?;
                if separation == 0.0 {
                    return err("separation must be nonzero".into());
                }
                Shape::DoubleWell { barrier: need("barrier")?, separation, center: p("center").unwrap_or(0.0) }
            }
            PotentialKind::GaussianBarrier => {
                let width = need("width")?;
                if width == 0.0 {
                    return err("width must be nonzero".into());
                }
                Shape::Gaussian { height: need("height")?, width, center: p("center").unwrap_or(0.0) }
            }
            PotentialKind::BilinearCoupling => Shape::Bilinear {
                strength: need("strength")?,
                x0: p("system_center").unwrap_or(0.0),
                r0: p("clock_center").unwrap_or(0.0),
            },
            PotentialKind::CosineCoupling => Shape::Cosine {
                strength: need("strength")?,
                x0: p("system_center").unwrap_or(0.0),
                harmonic: p("harmonic").unwrap_or(1.0),
                phase: p("phase").unwrap_or(0.0),
            },
            PotentialKind::Tabulated => {
                if self.table.len() < 2 {
                    return err("table needs at least two rows".into());
                }
                if self.table.windows(2).any(|w| !(w[0][0] < w[1][0])) {
                    return err("table abscissae must be strictly increasing".into());
                }
                Shape::Table(self.table.clone())
            }
        };
        Ok(ResolvedTerm { name: self.label(), axes: ids, shape })
    }
}

#[derive(Clone, Debug)]
enum Shape {
    Zero,
    Harmonic { spring: f64, center: f64 },
    DoubleWell { barrier: f64, separation: f64, center: f64 },
    Gaussian { height: f64, width: f64, center: f64 },
    Bilinear { strength: f64, x0: f64, r0: f64 },
    Cosine { strength: f64, x0: f64, harmonic: f64, phase: f64 },
    Table(Vec<[f64; 2]>),
}

/// A term bound to grid axes.
#[derive(Clone, Debug)]
pub(crate) struct ResolvedTerm {
    pub name: String,
    axes: Vec<AxisId>,
    shape: Shape,
}

impl ResolvedTerm {
    /// Value at continuous coordinates `x` (system) and `r` (clock).
    pub fn value(&self, x: &[f64], r: &[f64]) -> f64 {
        let coord = |id: &AxisId| match *id {
            AxisId::System(i) => x[i],
            AxisId::Clock(i) => r[i],
        };
        match &self.shape {
            Shape::Zero => 0.0,
            Shape::Harmonic { spring, center } => {
                let d = coord(&self.axes[0]) - center;
                0.5 * spring * d * d
            }
            Shape::DoubleWell { barrier, separation, center } => {
                let u = (coord(&self.axes[0]) - center) / separation;
                barrier * (u * u - 1.0).powi(2)
            }
            Shape::Gaussian { height, width, center } => {
                let d = (coord(&self.axes[0]) - center) / width;
                height * (-0.5 * d * d).exp()
            }
            Shape::Bilinear { strength, x0, r0 } => {
                strength * (coord(&self.axes[0]) - x0) * (coord(&self.axes[1]) - r0)
            }
            Shape::Cosine { strength, x0, harmonic, phase } => {
                strength * (coord(&self.axes[0]) - x0) * (harmonic * coord(&self.axes[1]) + phase).cos()
            }
            Shape::Table(rows) => interpolate(rows, coord(&self.axes[0])),
        }
    }
}

/// Piecewise-linear lookup; NaN outside the table.
fn interpolate(rows: &[[f64; 2]], q: f64) -> f64 {
    let first = rows[0][0];
    let last = rows[rows.len() - 1][0];
    if !(q >= first && q <= last) {
        return f64::NAN;
    }
    let k = rows.partition_point(|r| r[0] <= q).clamp(1, rows.len() - 1);
    let [q0, v0] = rows[k - 1];
    let [q1, v1] = rows[k];
    v0 + (v1 - v0) * (q - q0) / (q1 - q0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Axis, Boundary};

    fn grid() -> ProductGrid {
        ProductGrid::new(
            vec![Axis::new("x", 8, -1.0, 1.0, Boundary::Dirichlet, 2.0).unwrap()],
            vec![Axis::new("r", 8, -1.0, 1.0, Boundary::Dirichlet, 1.0).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn omega_uses_axis_mass() {
        let s = PotentialSpec::new(PotentialKind::Harmonic, &["x"], &[("omega", 3.0)]);
        let t = s.resolve(&grid(), Partition::System).unwrap();
        // spring = 2 * 9
        assert!((t.value(&[1.0], &[0.0]) - 9.0).abs() < 1e-14);
    }

    #[test]
    fn coupling_in_system_partition_is_rejected() {
        let s = PotentialSpec::bilinear("x", "r", 1.0);
        assert!(matches!(s.resolve(&grid(), Partition::System), Err(LatticeError::Config(_))));
        assert!(s.resolve(&grid(), Partition::Interaction).is_ok());
    }

    #[test]
    fn clock_axis_in_system_term_is_rejected() {
        let s = PotentialSpec::harmonic("r", 1.0);
        assert!(s.resolve(&grid(), Partition::System).is_err());
        assert!(s.resolve(&grid(), Partition::Clock).is_ok());
    }

    #[test]
    fn unknown_parameter_and_axis_are_rejected() {
        let s = PotentialSpec::new(PotentialKind::Harmonic, &["x"], &[("sprnig", 1.0)]);
        assert!(s.resolve(&grid(), Partition::System).is_err());
        let s = PotentialSpec::harmonic("z", 1.0);
        assert!(s.resolve(&grid(), Partition::System).is_err());
    }

    #[test]
    fn table_interpolates_linearly() {
        let rows = vec![[0.0, 1.0], [1.0, 3.0], [3.0, -1.0]];
        assert_eq!(interpolate(&rows, 0.5), 2.0);
        assert_eq!(interpolate(&rows, 2.0), 1.0);
        assert_eq!(interpolate(&rows, 3.0), -1.0);
        assert!(interpolate(&rows, 3.5).is_nan());
    }

    #[test]
    fn shapes_evaluate() {
        let g = grid();
        let dw = PotentialSpec::new(PotentialKind::DoubleWell, &["x"], &[("barrier", 2.0), ("separation", 0.5)]);
        let t = dw.resolve(&g, Partition::System).unwrap();
        assert_eq!(t.value(&[0.5], &[]), 0.0);
        assert_eq!(t.value(&[0.0], &[]), 2.0);
        let c = PotentialSpec::cosine("x", "r", 0.5).resolve(&g, Partition::Interaction).unwrap();
        assert!((c.value(&[2.0], &[0.0]) - 1.0).abs() < 1e-15);
    }
}
