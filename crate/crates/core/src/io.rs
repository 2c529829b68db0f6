//! Plain-text dumps of complex fields.
//!
//! ```text
//! # timeless-state v1
//! kind: joint
//! grid: 9c1f0e2a7b3d4c11
//! points: 4096
//! energy: 5.0e-1
//! residual: 1.0e-11
//! <re> <im>
//! ...
//! ```
//! Values are written with 17 significant digits, so a dump reads back
//! bit for bit.
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::error::DumpError;
use crate::lattice::ProductGrid;
use crate::spectral::JointEigenstate;

pub const DUMP_HEADER: &str = "# timeless-state v1";

#[derive(Clone, Debug, PartialEq)]
pub struct StateDump {
    /// `joint`, `marginal` or `conditional`.
    pub kind: String,
    pub grid: String,
    pub energy: Option<f64>,
    pub residual: Option<f64>,
    pub values: Vec<Complex64>,
}

impl StateDump {
    pub fn joint(grid: &ProductGrid, state: &JointEigenstate) -> Self {
        StateDump {
            kind: "joint".into(),
            grid: grid.fingerprint(),
            energy: Some(state.energy),
            residual: Some(state.residual),
            values: state.amplitudes.clone(),
        }
    }

    pub fn field(kind: &str, grid: &ProductGrid, values: &[Complex64]) -> Self {
        StateDump { kind: kind.into(), grid: grid.fingerprint(), energy: None, residual: None, values: values.to_vec() }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(48 * self.values.len() + 128);
        let _ = writeln!(s, "{DUMP_HEADER}");
        let _ = writeln!(s, "kind: {}", self.kind);
        let _ = writeln!(s, "grid: {}", self.grid);
        let _ = writeln!(s, "points: {}", self.values.len());
        if let Some(e) = self.energy {
            let _ = writeln!(s, "energy: {e:.17e}");
        }
        if let Some(r) = self.residual {
            let _ = writeln!(s, "residual: {r:.17e}");
        }
        for z in &self.values {
            let _ = writeln!(s, "{:.17e} {:.17e}", z.re, z.im);
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, DumpError> {
        let err = |line: usize, message: &str| DumpError::Parse { line, message: message.into() };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        match lines.next() {
            Some((_, DUMP_HEADER)) => {}
            _ => return Err(err(1, "missing header")),
        }
        let (mut kind, mut grid, mut points, mut energy, mut residual) = (None, None, None, None, None);
        let mut values = Vec::new();
        for (n, line) in lines {
            if line.is_empty() {
                continue;
            }
            if let Some((key, value)) = line.split_once(':') {
                let value = value.trim();
                let num = || value.parse::<f64>().map_err(|_| err(n, "bad number"));
                match key.trim() {
                    "kind" => kind = Some(value.to_string()),
                    "grid" => grid = Some(value.to_string()),
                    "points" => points = Some(value.parse::<usize>().map_err(|_| err(n, "bad point count"))?),
                    "energy" => energy = Some(num()?),
                    "residual" => residual = Some(num()?),
                    other => return Err(err(n, &format!("unknown key `{other}`"))),
                }
                continue;
            }
            let mut parts = line.split_whitespace();
            let mut next = || -> Result<f64, DumpError> {
                parts.next().ok_or_else(|| err(n, "expected `re im`"))?.parse().map_err(|_| err(n, "bad number"))
            };
            let z = Complex64::new(next()?, next()?);
            if parts.next().is_some() {
                return Err(err(n, "expected `re im`"));
            }
            values.push(z);
        }
        let points = points.ok_or_else(|| err(0, "missing points"))?;
        if points != values.len() {
            return Err(err(0, &format!("declared {points} points, found {}", values.len())));
        }
        Ok(StateDump {
            kind: kind.ok_or_else(|| err(0, "missing kind"))?,
            grid: grid.ok_or_else(|| err(0, "missing grid"))?,
            energy,
            residual,
            values,
        })
    }
}
