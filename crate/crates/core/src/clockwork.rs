//! Ideal clock models: marginal ansatz, classical trajectories, tick
//! schedules and diagnostics of how clock-like a solved state is.
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::ClockError;
use crate::factorization::{check_grid, effective_clock_potential, mean_field_momentum, FactorizedState};
use crate::lattice::{Boundary, CompositeHamiltonian, ProductGrid};
use crate::linalg::{cdot, norm_sqr};

/// Tolerance for integer momenta of periodic clocks.
pub const QUANTIZATION_TOL: f64 = 1e-12;
pub const DEFAULT_WKB_THRESHOLD: f64 = 0.1;
pub const DEFAULT_ENVELOPE_WIDTH: f64 = 0.25;
/// The envelope interior is `|R - center| < ENVELOPE_INTERIOR * sigma`.
pub const ENVELOPE_INTERIOR: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockKind {
    Linear,
    Cyclic,
    TwoHandle,
    Harmonic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Envelope {
    Uniform,
    /// Centered Gaussian with `sigma = width_fraction * box length`.
    SlowlyVarying { width_fraction: f64 },
}

/// Sign of the plane-wave exponent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    #[default]
    Forward,
    Backward,
}

impl Sense {
    pub fn sign(self) -> f64 {
        match self {
            Sense::Forward => 1.0,
            Sense::Backward => -1.0,
        }
    }
}

fn default_threshold() -> f64 {
    DEFAULT_WKB_THRESHOLD
}

fn default_envelope() -> Envelope {
    Envelope::Uniform
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockModel {
    pub kind: ClockKind,
    /// Mass `m` or moment of inertia `I` (shared by both handles).
    pub inertia: f64,
    /// `P_Z0`, `L_Z0` or `(L_10, L_20)`; the peak momentum for harmonic clocks.
    pub momenta: Vec<f64>,
    #[serde(default)]
    pub handle_ratio: Option<u32>,
    /// `M Omega^2` of a harmonic clock.
    #[serde(default)]
    pub spring: Option<f64>,
    /// Equilibrium position of a harmonic clock.
    #[serde(default)]
    pub center: f64,
    #[serde(default = "default_envelope")]
    pub envelope: Envelope,
    #[serde(default)]
    pub sense: Sense,
    #[serde(default = "default_threshold")]
    pub wkb_threshold: f64,
}

impl ClockModel {
    fn base(kind: ClockKind, inertia: f64, momenta: Vec<f64>) -> Self {
        ClockModel {
            kind,
            inertia,
            momenta,
            handle_ratio: None,
            spring: None,
            center: 0.0,
            envelope: Envelope::Uniform,
            sense: Sense::Forward,
            wkb_threshold: DEFAULT_WKB_THRESHOLD,
        }
    }

    pub fn linear(mass: f64, momentum: f64) -> Self {
        Self::base(ClockKind::Linear, mass, vec![momentum])
    }

    pub fn cyclic(inertia: f64, angular_momentum: f64) -> Self {
        Self::base(ClockKind::Cyclic, inertia, vec![angular_momentum])
    }

    /// `L_10 = handle_ratio * slow`.
    pub fn two_handle(inertia: f64, handle_ratio: u32, slow: f64) -> Self {
        let mut m = Self::base(ClockKind::TwoHandle, inertia, vec![handle_ratio as f64 * slow, slow]);
        m.handle_ratio = Some(handle_ratio);
        m
    }

    pub fn harmonic(mass: f64, spring: f64, peak_momentum: f64) -> Self {
        let mut m = Self::base(ClockKind::Harmonic, mass, vec![peak_momentum]);
        m.spring = Some(spring);
        m
    }

    pub fn with_envelope(mut self, envelope: Envelope) -> Self {
        self.envelope = envelope;
        self
    }

    pub fn with_sense(mut self, sense: Sense) -> Self {
        self.sense = sense;
        self
    }

    /// Number of clock axes the model drives.
    pub fn dimension(&self) -> usize {
        match self.kind {
            ClockKind::TwoHandle => 2,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<(), ClockError> {
        if !(self.inertia > 0.0 && self.inertia.is_finite()) {
            return Err(ClockError::Invalid(format!("inertia {} must be positive", self.inertia)));
        }
        if self.momenta.len() != self.dimension() || self.momenta.iter().any(|p| !p.is_finite()) {
            return Err(ClockError::Invalid(format!(
                "{:?} clock needs {} finite momenta, got {:?}",
                self.kind,
                self.dimension(),
                self.momenta
            )));
        }
        let integral = |p: f64| (p - p.round()).abs() < QUANTIZATION_TOL;
        match self.kind {
            ClockKind::Cyclic | ClockKind::TwoHandle => {
                if let Some(&p) = self.momenta.iter().find(|p| !integral(**p)) {
                    return Err(ClockError::Quantization(format!("angular momentum {p} is not an integer")));
                }
                if !matches!(self.envelope, Envelope::Uniform) {
                    return Err(ClockError::Invalid("periodic clocks take a uniform envelope".into()));
                }
            }
            ClockKind::Harmonic => match self.spring {
                Some(k) if k > 0.0 => {}
                _ => return Err(ClockError::Invalid("harmonic clock needs a positive spring".into())),
            },
            ClockKind::Linear => {}
        }
        if self.kind == ClockKind::TwoHandle {
            let c1 = self.handle_ratio.ok_or_else(|| ClockError::Invalid("two-handle clock needs handle_ratio".into()))?;
            if c1 == 0 {
                return Err(ClockError::Invalid("handle_ratio must be positive".into()));
            }
            if self.momenta[0] != c1 as f64 * self.momenta[1] {
                return Err(ClockError::Constraint(format!(
                    "L10 = {} differs from C1 * L20 = {}",
                    self.momenta[0],
                    c1 as f64 * self.momenta[1]
                )));
            }
        }
        if let Envelope::SlowlyVarying { width_fraction } = self.envelope {
            if !(width_fraction > 0.0) {
                return Err(ClockError::Invalid("envelope width must be positive".into()));
            }
        }
        if !(self.wkb_threshold > 0.0) {
            return Err(ClockError::Invalid("WKB threshold must be positive".into()));
        }
        Ok(())
    }

    /// Angular frequency of a harmonic clock.
    pub fn omega(&self) -> Option<f64> {
        self.spring.map(|k| (k / self.inertia).sqrt())
    }

    /// Velocities `momentum / inertia` with the sense applied.
    pub fn velocities(&self) -> Vec<f64> {
        self.momenta.iter().map(|p| self.sense.sign() * p / self.inertia).collect()
    }

    /// Classical kinetic energy `sum p^2 / 2I` (peak value for harmonic clocks).
    pub fn kinetic_energy(&self) -> f64 {
        self.momenta.iter().map(|p| p * p).sum::<f64>() / (2.0 * self.inertia)
    }

    /// Axis count, masses and boundaries of `grid` match the model.
    pub fn check_grid(&self, grid: &ProductGrid) -> Result<(), ClockError> {
        self.validate()?;
        if grid.clock.len() != self.dimension() {
            return Err(ClockError::Invalid(format!(
                "{:?} clock needs {} clock axes, grid has {}",
                self.kind,
                self.dimension(),
                grid.clock.len()
            )));
        }
        for a in &grid.clock {
            if ((a.mass - self.inertia) / self.inertia).abs() > 1e-12 {
                return Err(ClockError::Invalid(format!(
                    "clock axis `{}` has mass {} but the model has inertia {}",
                    a.label, a.mass, self.inertia
                )));
            }
            let periodic = a.boundary == Boundary::Periodic;
            let needs = matches!(self.kind, ClockKind::Cyclic | ClockKind::TwoHandle);
            if periodic != needs {
                return Err(ClockError::Invalid(format!(
                    "{:?} clock is incompatible with the boundary of axis `{}`",
                    self.kind, a.label
                )));
            }
        }
        Ok(())
    }

    fn envelope_sigma_center(&self, grid: &ProductGrid) -> Option<(f64, f64)> {
        match self.envelope {
            Envelope::Uniform => None,
            Envelope::SlowlyVarying { width_fraction } => {
                let a = &grid.clock[0];
                Some((width_fraction * (a.max - a.min), 0.5 * (a.min + a.max)))
            }
        }
    }

    /// Clock points where the envelope is flat enough for the gauge integral.
    pub fn envelope_interior(&self, grid: &ProductGrid) -> Vec<bool> {
        match self.envelope_sigma_center(grid) {
            None => vec![true; grid.clock_len()],
            Some((sigma, c)) => (0..grid.clock_len())
                .map(|i| (grid.clock_coords(i)[0] - c).abs() < ENVELOPE_INTERIOR * sigma)
                .collect(),
        }
    }

    /// Whether a clock position lies in the envelope interior.
    pub fn in_envelope(&self, grid: &ProductGrid, r: &[f64]) -> bool {
        match self.envelope_sigma_center(grid) {
            None => true,
            Some((sigma, c)) => (r[0] - c).abs() < ENVELOPE_INTERIOR * sigma,
        }
    }
}

fn normalize(grid: &ProductGrid, x: &mut [Complex64]) {
    let n = (norm_sqr(x) * grid.clock_weight()).sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|z| *z /= n);
    }
}

/// Plane-wave clock marginal with the model's envelope, normalized on the
/// clock grid.
pub fn marginal_ansatz(model: &ClockModel, grid: &ProductGrid) -> Result<Vec<Complex64>, ClockError> {
    model.check_grid(grid)?;
    if model.kind == ClockKind::Harmonic {
        return wkb_ansatz_harmonic(model, grid, model.kinetic_energy()).map(|(x, _)| x);
    }
    let s = model.sense.sign();
    let env = model.envelope_sigma_center(grid);
    let mut x: Vec<Complex64> = (0..grid.clock_len())
        .map(|c| {
            let r = grid.clock_coords(c);
            let phase: f64 = r.iter().zip(&model.momenta).map(|(q, p)| s * p * q).sum();
            let amp = env.map_or(1.0, |(sigma, c0)| (-(r[0] - c0).powi(2) / (4.0 * sigma * sigma)).exp());
            Complex64::from_polar(amp, phase)
        })
        .collect();
    normalize(grid, &mut x);
    Ok(x)
}

/// WKB marginal of a harmonic clock at clock energy `energy`.
///
/// Returns the field and a validity mask that is false where
/// `lambda_dB |dP/dZ| / P` exceeds the model's threshold or the point is
/// classically forbidden (the field is zero there).
pub fn wkb_ansatz_harmonic(
    model: &ClockModel,
    grid: &ProductGrid,
    energy: f64,
) -> Result<(Vec<Complex64>, Vec<bool>), ClockError> {
    model.check_grid(grid)?;
    if model.kind != ClockKind::Harmonic {
        return Err(ClockError::Invalid("WKB ansatz needs a harmonic clock".into()));
    }
    if !(energy > 0.0) {
        return Err(ClockError::Invalid(format!("energy {energy} must be positive")));
    }
    let m = model.inertia;
    let k = model.spring.unwrap_or_default();
    let omega = (k / m).sqrt();
    let zt = (2.0 * energy / k).sqrt();
    let s = model.sense.sign();
    let mut x = vec![Complex64::new(0.0, 0.0); grid.clock_len()];
    let mut valid = vec![false; grid.clock_len()];
    let mut allowed = 0;
    for c in 0..grid.clock_len() {
        let z = grid.clock_coords(c)[0] - model.center;
        let p2 = 2.0 * m * (energy - 0.5 * k * z * z);
        if p2 <= 0.0 {
            continue;
        }
        allowed += 1;
        let p = p2.sqrt();
        // Closed form of the action integral from the center.
        let action = 0.5 * m * omega * (z * (zt * zt - z * z).max(0.0).sqrt() + zt * zt * (z / zt).clamp(-1.0, 1.0).asin());
        x[c] = Complex64::from_polar(p.powf(-0.5), s * action);
        valid[c] = 2.0 * PI * k * z.abs() / (p * p * p) <= model.wkb_threshold;
    }
    if allowed == 0 {
        return Err(ClockError::NoAllowedRegion(energy));
    }
    normalize(grid, &mut x);
    Ok((x, valid))
}

/// Closed-form classical clock motion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalTrajectory {
    pub kind: ClockKind,
    pub initial: Vec<f64>,
    pub window: (f64, f64),
    /// Velocities for linear and cyclic kinds.
    velocities: Vec<f64>,
    /// `(amplitude, omega, delta, center)` for the harmonic kind.
    harmonic: Option<(f64, f64, f64, f64)>,
    /// Times in the window where the velocity vanishes.
    pub turning_points: Vec<f64>,
}

impl ClassicalTrajectory {
    pub fn position(&self, t: f64) -> Vec<f64> {
        match (self.kind, self.harmonic) {
            (ClockKind::Harmonic, Some((a, w, d, c))) => vec![c + a * (w * t + d).sin()],
            (ClockKind::Linear, _) => vec![self.initial[0] + self.velocities[0] * t],
            _ => self
                .initial
                .iter()
                .zip(&self.velocities)
                .map(|(p0, v)| (p0 + v * t).rem_euclid(2.0 * PI))
                .collect(),
        }
    }

    /// Position without wrapping angles onto `[0, 2 pi)`.
    pub fn unwrapped_position(&self, t: f64) -> Vec<f64> {
        match self.kind {
            ClockKind::Cyclic | ClockKind::TwoHandle => {
                self.initial.iter().zip(&self.velocities).map(|(p0, v)| p0 + v * t).collect()
            }
            _ => self.position(t),
        }
    }

    pub fn velocity(&self, t: f64) -> Vec<f64> {
        match self.harmonic {
            Some((a, w, d, _)) => vec![a * w * (w * t + d).cos()],
            None => self.velocities.clone(),
        }
    }

    pub fn acceleration(&self, t: f64) -> Vec<f64> {
        match self.harmonic {
            Some((a, w, d, _)) => vec![-a * w * w * (w * t + d).sin()],
            None => vec![0.0; self.velocities.len()],
        }
    }

    pub fn speed(&self, t: f64) -> f64 {
        self.velocity(t).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Period of the motion; for two handles, one slow-handle cycle.
    pub fn period(&self) -> Option<f64> {
        match (self.kind, self.harmonic) {
            (ClockKind::Harmonic, Some((_, w, _, _))) => Some(2.0 * PI / w),
            (ClockKind::Cyclic, _) if self.velocities[0] != 0.0 => Some(2.0 * PI / self.velocities[0].abs()),
            (ClockKind::TwoHandle, _) if self.velocities[1] != 0.0 => Some(2.0 * PI / self.velocities[1].abs()),
            _ => None,
        }
    }

    /// Same path traversed with every velocity negated.
    pub fn reversed(&self) -> ClassicalTrajectory {
        let mut r = self.clone();
        r.velocities.iter_mut().for_each(|v| *v = -*v);
        if let Some((a, w, d, c)) = self.harmonic {
            // sin(w t + d) -> sin(-w t + d) = sin(w t + pi - d).
            r.harmonic = Some((a, w, PI - d, c));
        }
        r
    }
}

/// Exact trajectory of the model starting at `initial` over `window`.
pub fn classical_trajectory(
    model: &ClockModel,
    initial: &[f64],
    window: (f64, f64),
) -> Result<ClassicalTrajectory, ClockError> {
    model.validate()?;
    if initial.len() != model.dimension() {
        return Err(ClockError::Invalid(format!("initial position needs {} components", model.dimension())));
    }
    if !(window.0.is_finite() && window.1.is_finite() && window.1 >= window.0) {
        return Err(ClockError::Invalid(format!("window {window:?} is not a finite interval")));
    }
    let velocities = model.velocities();
    let mut harmonic = None;
    let mut turning_points = Vec::new();
    if model.kind == ClockKind::Harmonic {
        let w = model.omega().unwrap_or_default();
        let a = model.momenta[0].abs() / (model.inertia * w);
        let z0 = initial[0] - model.center;
        if z0.abs() > a * (1.0 + 1e-12) {
            return Err(ClockError::Invalid(format!("start {z0} beyond the turning point {a}")));
        }
        let s = (z0 / a).clamp(-1.0, 1.0).asin();
        let d = if model.sense == Sense::Forward { s } else { PI - s };
        harmonic = Some((a, w, d, model.center));
        // w t + d = pi/2 + n pi
        let n0 = ((w * window.0 + d - PI / 2.0) / PI).ceil() as i64;
        let mut n = n0;
        loop {
            let t = (PI / 2.0 + n as f64 * PI - d) / w;
            if t > window.1 {
                break;
            }
            turning_points.push(t);
            n += 1;
        }
    }
    Ok(ClassicalTrajectory {
        kind: model.kind,
        initial: initial.to_vec(),
        window,
        velocities,
        harmonic,
        turning_points,
    })
}

/// Regularly spaced ticks with the slow ones dropped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickSchedule {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub dropped: Vec<f64>,
    pub min_speed: f64,
}

impl TickSchedule {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Ticks `t_i = t_0 + i dt` across the window, dropping those where the
/// clock speed is below `min_speed`.
pub fn tick_schedule(traj: &ClassicalTrajectory, dt: f64, min_speed: f64) -> Result<TickSchedule, ClockError> {
    if !(dt > 0.0) {
        return Err(ClockError::Invalid(format!("tick interval {dt} must be positive")));
    }
    let (t0, t1) = traj.window;
    let count = ((t1 - t0) / dt * (1.0 + 1e-12)).floor() as usize + 1;
    let mut out = TickSchedule { times: Vec::new(), positions: Vec::new(), dropped: Vec::new(), min_speed };
    for i in 0..count {
        let t = t0 + i as f64 * dt;
        if traj.speed(t) >= min_speed {
            out.times.push(t);
            out.positions.push(traj.position(t));
        } else {
            out.dropped.push(t);
        }
    }
    if out.times.is_empty() {
        return Err(ClockError::AllTicksDropped(count));
    }
    Ok(out)
}

/// How well a solved state behaves as an ideal clock.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClockQuality {
    /// `sqrt(int rho |d_R Psi|^2) / sqrt(int |d_R X|^2)`.
    pub adiabaticity: f64,
    /// Largest `|Re <Psi|m^-1 P Psi>|` over the interior.
    pub mean_field_momentum: f64,
    /// `(max - min) / |mean|` of `U_C` over the unmasked interior.
    pub uc_flatness: f64,
    /// Model kinetic energy over `|<Phi|H_S|Phi>|`.
    pub energy_ratio: f64,
    /// `<X|T_C + V_C - min V_C|X>` over `|<Phi|H_S|Phi>|`.
    pub state_energy_ratio: f64,
}

/// Diagnostics of clock quality for a factorized state.
pub fn clock_quality(
    f: &FactorizedState,
    model: &ClockModel,
    h: &CompositeHamiltonian,
) -> Result<ClockQuality, ClockError> {
    check_grid(f, h)?;
    model.validate()?;
    let g = &f.grid;
    let (ns, nc) = (g.system_len(), g.clock_len());
    let (wx, wr) = (g.system_weight(), g.clock_weight());
    let interior = f.stencil_interior(h.fd_order().half_width());

    let (mut num, mut den, mut mf) = (0.0, 0.0, 0.0f64);
    for n in 0..g.clock.len() {
        let dpsi = h.partial_apply_clock_momentum(n, &f.conditional)?;
        let mut dx = vec![Complex64::new(0.0, 0.0); nc];
        h.clock_derivative_only(n, &f.marginal, &mut dx);
        for c in (0..nc).filter(|&c| interior[c]) {
            num += f.marginal[c].norm_sqr() * norm_sqr(&dpsi[c * ns..(c + 1) * ns]) * wx * wr;
            den += dx[c].norm_sqr() * wr;
        }
        let m = mean_field_momentum(f, h, n)?;
        mf = m.values.iter().flatten().fold(mf, |a, v| a.max(v.abs()));
    }
    let adiabaticity = if den > 0.0 { (num / den).sqrt() } else if num > 0.0 { f64::INFINITY } else { 0.0 };

    let uc: Vec<f64> = effective_clock_potential(f, h)?.values.into_iter().flatten().collect();
    let uc_flatness = if uc.is_empty() {
        f64::NAN
    } else {
        let mean = uc.iter().sum::<f64>() / uc.len() as f64;
        let (lo, hi) = uc.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), v| (l.min(*v), u.max(*v)));
        (hi - lo) / mean.abs()
    };

    let phi = f.reconstruct();
    let mut hs = vec![Complex64::new(0.0, 0.0); ns];
    let mut es = 0.0;
    for c in 0..nc {
        let col = &phi[c * ns..(c + 1) * ns];
        h.apply_system(col, None, &mut hs);
        es += cdot(col, &hs).re * wx * wr;
    }
    let mut tx = vec![Complex64::new(0.0, 0.0); nc];
    h.apply_clock_kinetic_only(&f.marginal, &mut tx);
    let vmin = h.v_clock().iter().copied().fold(f64::INFINITY, f64::min);
    let mut ec = 0.0;
    for c in 0..nc {
        ec += (f.marginal[c].conj() * tx[c]).re * wr + f.marginal[c].norm_sqr() * (h.v_clock()[c] - vmin) * wr;
    }
    Ok(ClockQuality {
        adiabaticity,
        mean_field_momentum: mf,
        uc_flatness,
        energy_ratio: model.kinetic_energy() / es.abs(),
        state_energy_ratio: ec / es.abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Axis;

    fn grid_1d(axis: Axis) -> ProductGrid {
        ProductGrid::new(vec![Axis::new("x", 8, -1.0, 1.0, Boundary::Dirichlet, 1.0).unwrap()], vec![axis]).unwrap()
    }

    #[test]
    fn cyclic_quantization_is_enforced() {
        assert!(matches!(ClockModel::cyclic(10.0, 2.5).validate(), Err(ClockError::Quantization(_))));
        assert!(ClockModel::cyclic(10.0, 5.0).validate().is_ok());
    }

    #[test]
    fn two_handle_constraint_is_exact() {
        let mut m = ClockModel::two_handle(1.0, 60, 1.0);
        assert!(m.validate().is_ok());
        m.momenta[0] = 59.0;
        assert!(matches!(m.validate(), Err(ClockError::Constraint(_))));
    }

    #[test]
    fn uniform_linear_ansatz_has_constant_density() {
        let g = grid_1d(Axis::new("z", 40, 0.0, 4.0, Boundary::Dirichlet, 2.0).unwrap());
        let x = marginal_ansatz(&ClockModel::linear(2.0, 3.0), &g).unwrap();
        let l = 40.0 * g.clock_weight();
        for z in &x {
            assert!((z.norm_sqr() - 1.0 / l).abs() < 1e-12);
        }
    }

    #[test]
    fn cyclic_ansatz_is_single_valued() {
        let g = grid_1d(Axis::angular("phi", 64, 3.0).unwrap());
        let x = marginal_ansatz(&ClockModel::cyclic(3.0, 5.0), &g).unwrap();
        let a = (2.0 * PI).powf(-0.5);
        for (j, z) in x.iter().enumerate() {
            let phi = g.clock_coords(j)[0];
            assert!((z - Complex64::from_polar(a, 5.0 * phi)).norm() < 1e-12);
        }
        // The point after the last wraps to the first.
        let h = g.clock[0].spacing();
        let next = Complex64::from_polar(a, 5.0 * (g.clock_coords(63)[0] + h));
        assert!((next - x[0]).norm() < 1e-12);
    }

    #[test]
    fn periodic_kind_rejects_walls() {
        let g = grid_1d(Axis::new("z", 40, 0.0, 4.0, Boundary::Dirichlet, 3.0).unwrap());
        assert!(marginal_ansatz(&ClockModel::cyclic(3.0, 1.0), &g).is_err());
    }

    #[test]
    fn wkb_validity_near_center_and_turning_points() {
        let g = grid_1d(Axis::new("z", 201, -3.0, 3.0, Boundary::Dirichlet, 50.0).unwrap());
        let model = ClockModel::harmonic(50.0, 50.0, 10.0);
        let e = 1.0;
        let (x, valid) = wkb_ansatz_harmonic(&model, &g, e).unwrap();
        assert!(valid[100]);
        let zt = (2.0 * e / 50.0f64).sqrt();
        for c in 0..201 {
            let z = g.clock_coords(c)[0];
            if z.abs() >= zt {
                assert!(!valid[c] && x[c].norm() == 0.0);
            }
        }
        let masked = |e: f64| {
            let (x, v) = wkb_ansatz_harmonic(&model, &g, e).unwrap();
            x.iter().zip(&v).filter(|(z, ok)| z.norm() > 0.0 && !**ok).count() as f64
                / x.iter().filter(|z| z.norm() > 0.0).count() as f64
        };
        assert!(masked(4.0 * e) < masked(e));
    }

    #[test]
    fn harmonic_trajectory_is_consistent() {
        let model = ClockModel::harmonic(2.0, 8.0, 4.0);
        let t = classical_trajectory(&model, &[0.0], (0.0, 10.0)).unwrap();
        let w = 2.0;
        for tt in [0.3, 1.1, 2.7] {
            let z = t.position(tt)[0];
            let p = (2.0 * 2.0 * (model.kinetic_energy() - 0.5 * 8.0 * z * z)).max(0.0).sqrt();
            assert!((t.velocity(tt)[0].abs() - p / 2.0).abs() < 1e-12);
        }
        assert_eq!(t.turning_points.len(), (10.0 * w / PI + 0.5).floor() as usize);
        for tp in &t.turning_points {
            assert!(t.speed(*tp) < 1e-12);
        }
    }

    #[test]
    fn ticks_skip_turning_points() {
        let model = ClockModel::harmonic(2.0, 8.0, 4.0);
        let t = classical_trajectory(&model, &[0.0], (0.0, 6.0)).unwrap();
        let ticks = tick_schedule(&t, 0.01, 0.1 * 2.0).unwrap();
        assert!(!ticks.dropped.is_empty());
        for tp in &t.turning_points {
            assert!(ticks.times.iter().all(|x| (x - tp).abs() > 0.01));
        }
        let single = tick_schedule(&t, 100.0, 0.0).unwrap();
        assert_eq!(single.times, vec![0.0]);
    }

    #[test]
    fn cyclic_period_returns_home() {
        let model = ClockModel::cyclic(4.0, 3.0);
        let t = classical_trajectory(&model, &[1.0], (0.0, 10.0)).unwrap();
        let p = t.period().unwrap();
        assert!((p - 2.0 * PI * 4.0 / 3.0).abs() < 1e-12);
        assert!((t.position(p)[0] - 1.0).abs() < 1e-12);
    }
}
