//! The stages of one sweep point.
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use timeless_core::coupled_scf::residuals;
use timeless_core::emergence::{adiabatic_reference, ansatz_phase, emergence_pipeline, mass_scaling};
use timeless_core::spectral::{degenerate_clusters, DEGENERACY_THRESHOLD};
use timeless_core::*;

use crate::config::{GaugeChoice, GuessChoice, ScfSection, SelectionConfig, Stage, Target, TickConfig};
use crate::manifest::{StageRecord, StageStatus};
use crate::{Plan, Point, RunError};

/// Version of every JSON report layout.
pub const REPORT_SCHEMA: u32 = 1;

pub(crate) struct PointOutcome {
    pub label: String,
    pub dir: String,
    pub value: Option<f64>,
    pub stages: Vec<StageRecord>,
    /// `(stage, point label, message)` of the first failure.
    pub failure: Option<(Stage, String, String)>,
    pub emergence: Option<EmergenceReport>,
}

/// Files written by one stage, relative to the point directory.
struct Out<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Out<'_> {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), String> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| format!("{}: {e}", path.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), String> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(|e| e.to_string())?;
        for r in rows {
            w.write_record(r).map_err(|e| e.to_string())?;
        }
        let bytes = w.into_inner().map_err(|e| e.to_string())?;
        self.write(name, &bytes)
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// State carried between stages.
struct Ctx<'a> {
    point: &'a Point,
    h: CompositeHamiltonian,
    model: Option<ClockModel>,
    reference: Option<Vec<Complex64>>,
    selected: Option<JointEigenstate>,
    factorized: Option<FactorizedState>,
    scf: Option<ScfOutcome>,
    emergence: Option<EmergenceReport>,
    log: BTreeMap<String, Value>,
}

pub(crate) fn scf_config(s: &ScfSection, provided: Option<FactorizedState>) -> ScfConfig {
    let initial_guess = match (s.initial_guess, provided) {
        (GuessChoice::SeparableProduct, _) => InitialGuess::SeparableProduct,
        (GuessChoice::Solved, Some(f)) => InitialGuess::Provided(f),
        _ => InitialGuess::AdiabaticBo,
    };
    ScfConfig { max_iterations: s.max_iterations, mixing: s.mixing, tolerance: s.tolerance, initial_guess }
}

fn rayleigh(h: &CompositeHamiltonian, v: &[Complex64]) -> Result<f64, String> {
    let hv = h.apply(v).map_err(|e| e.to_string())?;
    let num: f64 = v.iter().zip(&hv).map(|(a, b)| (a.conj() * b).re).sum();
    let den: f64 = v.iter().map(|a| a.norm_sqr()).sum();
    Ok(num / den)
}

fn joint_overlap(grid: &ProductGrid, a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<Complex64>().norm() * grid.weight()
}

fn coord_header(grid: &ProductGrid) -> Vec<String> {
    grid.clock.iter().map(|a| a.label.clone()).collect()
}

fn coords(grid: &ProductGrid, c: usize) -> Vec<String> {
    grid.clock_coords(c).into_iter().map(num).collect()
}

impl Ctx<'_> {
    fn model(&self) -> Result<&ClockModel, String> {
        self.model.as_ref().ok_or_else(|| "no clock model".to_string())
    }

    fn reference(&mut self) -> Result<Vec<Complex64>, String> {
        if self.reference.is_none() {
            let r = adiabatic_reference(&self.h, self.model()?).map_err(|e| e.to_string())?;
            self.reference = Some(r);
        }
        Ok(self.reference.clone().unwrap_or_default())
    }

    fn factorized(&self) -> Result<&FactorizedState, String> {
        self.factorized.as_ref().ok_or_else(|| "no factorized state".to_string())
    }

    fn solve(&mut self, out: &mut Out) -> Result<(), String> {
        let s = &self.point.scenario;
        let cfg = &s.solve;
        let mut opts = SolverOptions::new(cfg.tolerance);
        if let Some(d) = cfg.dense_limit {
            opts.dense_limit = d;
        }
        opts.krylov.seed = s.seed;
        let which = match cfg.target {
            Target::Lowest => Which::Lowest,
            Target::Nearest { energy } => Which::Nearest(energy),
            Target::Ansatz => {
                let r = self.reference()?;
                let e = rayleigh(&self.h, &r)?;
                opts.hints = vec![r];
                Which::Nearest(e)
            }
        };
        let (states, stats) = solve_eigenpairs_with(&self.h, cfg.count, which, &opts).map_err(|e| e.to_string())?;
        self.log.insert("solver_expansions".into(), json!(stats.expansions));
        let selected = match cfg.selection {
            SelectionConfig::Ground => select_state(&states, Selection::Ground),
            SelectionConfig::Index { index } => Ok(states[index].clone()),
            SelectionConfig::Ansatz { window } => {
                let r = self.reference()?;
                select_state(&states, Selection::MaxOverlapWithin(&r, window))
            }
        }
        .map_err(|e| e.to_string())?;
        let rows: Vec<Vec<String>> =
            states.iter().enumerate().map(|(i, st)| vec![i.to_string(), num(st.energy), num(st.residual)]).collect();
        out.csv("eigenpairs.csv", &["index".into(), "energy".into(), "residual".into()], &rows)?;
        out.json(
            "solve.json",
            &json!({
                "schema_version": REPORT_SCHEMA,
                "method": stats.method,
                "shift": stats.sigma,
                "energies": states.iter().map(|s| s.energy).collect::<Vec<_>>(),
                "residuals": states.iter().map(|s| s.residual).collect::<Vec<_>>(),
                "degenerate_clusters": degenerate_clusters(&states, DEGENERACY_THRESHOLD),
                "selected": { "energy": selected.energy, "residual": selected.residual, "norm": selected.norm_sqr(self.h.grid()) },
            }),
        )?;
        out.write("state.dump", StateDump::joint(self.h.grid(), &selected).to_text().as_bytes())?;
        self.selected = Some(selected);
        Ok(())
    }

    fn factorize(&mut self, out: &mut Out) -> Result<(), String> {
        let s = &self.point.scenario;
        let state = self.selected.as_ref().ok_or("no solved state")?;
        let g = self.h.grid().clone();
        let gauge = match s.factorize.gauge {
            GaugeChoice::ZeroPhase => Gauge::ZeroPhase,
            GaugeChoice::Ansatz => Gauge::Prescribed(ansatz_phase(&self.h, self.model()?).map_err(|e| e.to_string())?),
        };
        let f = factorize(&g, state, &gauge, s.factorize.node_threshold).map_err(|e| e.to_string())?;
        let (ns, nc) = (g.system_len(), g.clock_len());
        let phi = f.reconstruct();
        let dens = f.densities();
        let (mut recon, mut local, mut product) = (0.0f64, 0.0f64, 0.0f64);
        for c in (0..nc).filter(|&c| !f.is_masked(c)) {
            let n: f64 = f.conditional_slice(c).iter().map(|z| z.norm_sqr()).sum::<f64>() * g.system_weight();
            local = local.max((n - 1.0).abs());
            for i in c * ns..(c + 1) * ns {
                recon = recon.max((phi[i] - state.amplitudes[i]).norm());
                product = product.max((dens.joint[i] - state.amplitudes[i].norm_sqr()).abs());
            }
        }
        let xn: f64 = dens.marginal.iter().sum::<f64>() * g.clock_weight();
        let sys = &g.system[0].label;
        let xs = conditional_expectation(&f, &self.h, &Observable::Position(sys.clone())).map_err(|e| e.to_string())?;
        let es = conditional_expectation(&f, &self.h, &Observable::SystemEnergy).map_err(|e| e.to_string())?;
        let uc = effective_clock_potential(&f, &self.h).map_err(|e| e.to_string())?;
        let mf = mean_field_momentum(&f, &self.h, 0).map_err(|e| e.to_string())?;
        out.json(
            "factorize.json",
            &json!({
                "schema_version": REPORT_SCHEMA,
                "gauge": s.factorize.gauge,
                "masked_points": f.masked_count(),
                "clock_points": nc,
                "reconstruction_error": recon,
                "marginal_norm_error": (xn - 1.0).abs(),
                "local_norm_error": local,
                "product_identity_error": product,
                "system_position": { "axis": sys, "global": xs.global },
                "system_energy": es.global,
                "mean_field_momentum_max": mf.values.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs())),
            }),
        )?;
        let mut header = coord_header(&g);
        header.extend(["rho_mar", "re_x", "im_x", "alpha", "masked"].map(String::from));
        header.extend([format!("mean_{sys}"), "system_energy".into(), "clock_potential".into(), "mean_field_momentum".into()]);
        let rows: Vec<Vec<String>> = (0..nc)
            .map(|c| {
                let mut r = coords(&g, c);
                r.extend([
                    num(dens.marginal[c]),
                    num(f.marginal[c].re),
                    num(f.marginal[c].im),
                    num(f.gauge_phase[c]),
                    (f.is_masked(c) as u8).to_string(),
                    opt(xs.local[c]),
                    opt(es.local[c]),
                    opt(uc.values[c]),
                    opt(mf.values[c]),
                ]);
                r
            })
            .collect();
        out.csv("marginal.csv", &header, &rows)?;
        out.write("conditional.dump", StateDump::field("conditional", &g, &f.conditional).to_text().as_bytes())?;
        self.factorized = Some(f);
        Ok(())
    }

    fn scf(&mut self, out: &mut Out) -> Result<(), String> {
        let s = &self.point.scenario;
        let cfg = scf_config(&s.scf, self.factorized.clone());
        let o = scf_solve(&self.h, &cfg).map_err(|e| e.to_string())?;
        let g = self.h.grid();
        let f = &o.state;
        let m = extract_multipliers(f, &self.h).map_err(|e| e.to_string())?;
        let nc = g.clock_len();
        let mut hc = vec![Complex64::new(0.0, 0.0); nc];
        self.h.apply_clock_kinetic_only(&f.marginal, &mut hc);
        let clock_energy: f64 = (0..nc)
            .map(|c| (f.marginal[c].conj() * (hc[c] + f.marginal[c] * self.h.v_clock()[c])).re)
            .sum::<f64>()
            * g.clock_weight();
        let fidelity = self.selected.as_ref().map(|st| joint_overlap(g, &f.reconstruct(), &st.amplitudes));
        out.json(
            "scf.json",
            &json!({
                "schema_version": REPORT_SCHEMA,
                "converged": o.converged,
                "sweeps": o.trace.len(),
                "effective_mixing": o.effective_mixing,
                "monotone": o.monotone,
                "marginal_norm": o.residuals.marginal_norm,
                "conditional_norm": o.residuals.conditional_norm,
                "epsilon": m.epsilon,
                "integral_lambda": m.integral_lambda,
                "clock_energy": clock_energy,
                "system_energy": m.integral_lambda - clock_energy,
                "conditional_spread": conditional_spread(f),
                "fidelity_vs_solved": fidelity,
                "energy_vs_solved": self.selected.as_ref().map(|st| m.epsilon - st.energy),
            }),
        )?;
        let header = ["sweep", "marginal_norm", "conditional_norm", "epsilon", "mixing", "change"].map(String::from);
        let rows: Vec<Vec<String>> = o
            .trace
            .iter()
            .map(|t| {
                vec![t.sweep.to_string(), num(t.marginal_norm), num(t.conditional_norm), num(t.epsilon), num(t.mixing), num(t.change)]
            })
            .collect();
        out.csv("scf_trace.csv", &header, &rows)?;
        self.log.insert("scf_converged".into(), json!(o.converged));
        self.scf = Some(o);
        Ok(())
    }

    fn residuals(&mut self, out: &mut Out) -> Result<(), String> {
        let f = self.factorized()?;
        let g = self.h.grid();
        let m = extract_multipliers(f, &self.h).map_err(|e| e.to_string())?;
        let compact = residuals(f, &self.h, ResidualForm::Compact).map_err(|e| e.to_string())?;
        let expanded = residuals(f, &self.h, ResidualForm::Expanded).map_err(|e| e.to_string())?;
        let energy = self.selected.as_ref().map(|s| s.energy);
        let block = |r: &CoupledResiduals| {
            json!({
                "marginal_norm": r.marginal_norm,
                "conditional_norm": r.conditional_norm,
                "valid_points": r.valid.iter().filter(|&&v| v).count(),
            })
        };
        out.json(
            "residuals.json",
            &json!({
                "schema_version": REPORT_SCHEMA,
                "energy": energy,
                "epsilon_error": energy.map(|e| (m.epsilon - e).abs()),
                "integral_lambda_error": energy.map(|e| (m.integral_lambda - e).abs()),
                "clock_spacing": g.clock.iter().map(|a| a.spacing()).collect::<Vec<_>>(),
                "compact": block(&compact),
                "expanded": block(&expanded),
                "multipliers": m,
            }),
        )?;
        let mut header = coord_header(g);
        header.extend(["local_energy", "local_energy_expanded"].map(String::from));
        let rows: Vec<Vec<String>> = (0..g.clock_len())
            .map(|c| {
                let mut r = coords(g, c);
                r.push(opt(m.lambda_over_rho[c]));
                r.push(opt(m.expanded_lambda_over_rho[c]));
                r
            })
            .collect();
        out.csv("local_energy.csv", &header, &rows)
    }

    fn clock_quality(&mut self, out: &mut Out) -> Result<(), String> {
        let q = clock_quality(self.factorized()?, self.model()?, &self.h).map_err(|e| e.to_string())?;
        out.json("clock_quality.json", &json!({ "schema_version": REPORT_SCHEMA, "quality": q }))
    }

    fn emergence(&mut self, out: &mut Out) -> Result<(), String> {
        let em = &self.point.scenario.emergence;
        let model = self.model()?.clone();
        let f = self.factorized()?;
        let initial = em.initial.clone().unwrap_or_else(|| match model.kind {
            ClockKind::Harmonic => vec![model.center],
            _ => vec![0.0; model.dimension()],
        });
        let window = match em.window {
            Some([a, b]) => (a, b),
            None => {
                let probe = classical_trajectory(&model, &initial, (0.0, 0.0)).map_err(|e| e.to_string())?;
                (0.0, probe.period().ok_or("the clock has no period; give emergence.window")?)
            }
        };
        let traj = classical_trajectory(&model, &initial, window).map_err(|e| e.to_string())?;
        let dt = match &em.tick {
            TickConfig::Interval(dt) => *dt,
            TickConfig::Named(_) => self
                .h
                .grid()
                .clock
                .iter()
                .zip(model.velocities())
                .filter(|(_, v)| *v != 0.0)
                .map(|(a, v)| a.spacing() / v.abs())
                .fold(f64::INFINITY, f64::min),
        };
        if !dt.is_finite() {
            return Err("the clock does not move".into());
        }
        let ticks = tick_schedule(&traj, dt, em.min_speed).map_err(|e| e.to_string())?;
        let r = emergence_pipeline(&self.h, f, &model, &traj, &ticks, em.max_substep).map_err(|e| e.to_string())?;
        out.json(
            "emergence.json",
            &json!({
                "schema_version": REPORT_SCHEMA,
                "tick_interval": dt,
                "ticks": ticks.len(),
                "dropped_ticks": ticks.dropped,
                "turning_points": traj.turning_points,
                "report": r,
            }),
        )?;
        let rows: Vec<Vec<String>> = r.fidelity_curve.iter().map(|(t, v)| vec![num(*t), num(*v)]).collect();
        out.csv("fidelity.csv", &["time".into(), "fidelity".into()], &rows)?;
        let rows: Vec<Vec<String>> = r
            .second_order_magnitude
            .iter()
            .enumerate()
            .map(|(i, (t, v))| {
                let hc = r.harmonic_correction_magnitude.as_ref().map(|h| h[i].1);
                vec![num(*t), num(*v), opt(hc)]
            })
            .collect();
        out.csv("corrections.csv", &["time".into(), "second_order".into(), "harmonic_correction".into()], &rows)?;
        self.emergence = Some(r);
        Ok(())
    }
}

/// Largest pointwise distance between phase-aligned conditional slices.
fn conditional_spread(f: &FactorizedState) -> f64 {
    let Some(first) = (0..f.clock_len()).find(|&c| !f.is_masked(c)) else {
        return 0.0;
    };
    let a = f.conditional_slice(first);
    (0..f.clock_len())
        .filter(|&c| !f.is_masked(c))
        .map(|c| {
            let b = f.conditional_slice(c);
            let ov: Complex64 = b.iter().zip(a).map(|(x, y)| x.conj() * y).sum();
            let ph = if ov.norm() > 0.0 { ov / ov.norm() } else { Complex64::new(1.0, 0.0) };
            b.iter().zip(a).map(|(x, y)| (x * ph - y).norm()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Run every stage of `point` into `dir`; stops at the first failure.
pub(crate) fn run_point(point: &Point, dir: &Path) -> PointOutcome {
    let s = &point.scenario;
    let mut outcome = PointOutcome {
        label: point.label.clone(),
        dir: point.dir.clone(),
        value: point.value,
        stages: Vec::new(),
        failure: None,
        emergence: None,
    };
    let fail_all = |outcome: &mut PointOutcome, msg: String| {
        let first = s.pipeline[0];
        outcome.failure = Some((first, point.label.clone(), msg.clone()));
        for (i, st) in s.pipeline.iter().enumerate() {
            let (status, message) = if i == 0 { (StageStatus::Failed, Some(msg.clone())) } else { (StageStatus::Skipped, None) };
            outcome.stages.push(StageRecord::new(*st, status, 0.0, message, vec![], BTreeMap::new()));
        }
    };
    if let Err(e) = fs::create_dir_all(dir) {
        fail_all(&mut outcome, format!("{}: {e}", dir.display()));
        return outcome;
    }
    let built = s
        .grid
        .build()
        .and_then(|g| build_hamiltonian(&g, &s.hamiltonian.terms(), s.hamiltonian.fd_order).map_err(|e| e.to_string()));
    let h = match built {
        Ok(h) => h,
        Err(m) => {
            fail_all(&mut outcome, m);
            return outcome;
        }
    };
    let mut ctx = Ctx {
        point,
        h,
        model: s.clock.clone(),
        reference: None,
        selected: None,
        factorized: None,
        scf: None,
        emergence: None,
        log: BTreeMap::new(),
    };
    for &st in &s.pipeline {
        if outcome.failure.is_some() {
            outcome.stages.push(StageRecord::new(st, StageStatus::Skipped, 0.0, None, vec![], BTreeMap::new()));
            continue;
        }
        let mut out = Out { dir, files: Vec::new() };
        let t0 = Instant::now();
        let res = match st {
            Stage::Solve => ctx.solve(&mut out),
            Stage::Factorize => ctx.factorize(&mut out),
            Stage::Scf => ctx.scf(&mut out),
            Stage::Residuals => ctx.residuals(&mut out),
            Stage::ClockQuality => ctx.clock_quality(&mut out),
            Stage::Emergence => ctx.emergence(&mut out),
        };
        let secs = t0.elapsed().as_secs_f64();
        let prefix = |f: String| if point.dir.is_empty() { f } else { format!("{}/{f}", point.dir) };
        let files = out.files.into_iter().map(prefix).collect();
        let log = std::mem::take(&mut ctx.log);
        match res {
            Ok(()) => outcome.stages.push(StageRecord::new(st, StageStatus::Ok, secs, None, files, log)),
            Err(m) => {
                outcome.failure = Some((st, point.label.clone(), m.clone()));
                outcome.stages.push(StageRecord::new(st, StageStatus::Failed, secs, Some(m), files, log));
            }
        }
    }
    outcome.emergence = ctx.emergence;
    outcome
}

/// `sweep.json` and `mass_scaling.csv` for a sweep whose points all ran
/// the emergence stage. Returns the written file names.
pub(crate) fn write_sweep_summary(plan: &Plan, points: &[PointOutcome], dir: &Path) -> Result<Vec<String>, RunError> {
    let Some(sweep) = &plan.scenario.sweep else {
        return Ok(vec![]);
    };
    let mut out = Out { dir, files: Vec::new() };
    let mut reports: Vec<EmergenceReport> = points.iter().filter_map(|p| p.emergence.clone()).collect();
    let mut summary = json!({
        "schema_version": REPORT_SCHEMA,
        "name": sweep.name,
        "values": sweep.values,
        "points": points.iter().map(|p| json!({
            "label": p.label,
            "dir": p.dir,
            "value": p.value,
            "ok": p.failure.is_none(),
        })).collect::<Vec<_>>(),
    });
    if reports.len() == points.len() && !reports.is_empty() {
        let slope = mass_scaling(&mut reports);
        let fids: Vec<f64> = reports.iter().map(|r| r.min_fidelity).collect();
        let masses: Vec<f64> = reports.iter().map(|r| r.clock_mass).collect();
        let mut order: Vec<usize> = (0..reports.len()).collect();
        order.sort_by(|&a, &b| masses[a].total_cmp(&masses[b]));
        let increasing = order.windows(2).all(|w| fids[w[1]] > fids[w[0]]);
        summary["emergence"] = json!({
            "clock_mass": masses,
            "min_fidelity": fids,
            "infidelity": fids.iter().map(|f| 1.0 - f).collect::<Vec<_>>(),
            "mass_slope": slope,
            "fidelity_strictly_increasing": increasing,
        });
        let rows: Vec<Vec<String>> = reports.iter().map(|r| vec![num(r.clock_mass), num(r.min_fidelity), num(1.0 - r.min_fidelity)]).collect();
        out.csv("mass_scaling.csv", &["clock_mass".into(), "min_fidelity".into(), "infidelity".into()], &rows)
            .map_err(RunError::Report)?;
    }
    out.json("sweep.json", &summary).map_err(RunError::Report)?;
    Ok(out.files)
}
