//! Outer optimization loop: MMA updates of the time field under continuity
//! and layer volume constraints, with projection sharpness continuation.

pub mod mma;

use crate::constraints::{layer_volumes, Continuity, MinMaxViolation};
use crate::error::{Error, Result};
use crate::measures::QuadraticForm;
use crate::process::{simulate, Process};
use crate::projection::{binary_layer, Continuation};
use crate::sensitivity::{adjoint_gradient, element_to_field, objective};
use crate::timefield::{FieldLayout, TimeField};
pub use mma::{mma_update, Constraints, MmaParams, MmaState};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

/// Slack allowed on top of the constraint tolerances when judging the final
/// iterate.
pub const FEASIBILITY_SLACK: f64 = 1e-6;

/// Loop controls and constraint tolerances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub max_iters: usize,
    pub continuation: Continuation,
    /// Continuity tolerance `g0 <= gamma_c`.
    pub gamma_c: f64,
    /// Volume band `-gamma_v <= g_j <= 0`.
    pub gamma_v: f64,
    /// Divide constraint rows by their tolerance before MMA sees them.
    pub scale_constraints: bool,
    /// Keep stage factors between the forward and adjoint solves.
    pub retain_factors: bool,
    /// Tolerance of the min/max continuity diagnostic.
    pub min_max_tolerance: f64,
    /// Return the lowest-objective feasible iterate evaluated at the final
    /// sharpness instead of the last iterate.
    pub keep_best_feasible: bool,
    pub mma: MmaParams,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_iters: 500,
            continuation: Continuation::default(),
            gamma_c: 1e-3,
            gamma_v: 1e-3,
            scale_constraints: true,
            retain_factors: true,
            min_max_tolerance: 1e-9,
            keep_best_feasible: true,
            mma: MmaParams::default(),
        }
    }
}

/// Everything needed to optimize a fabrication sequence.
pub struct OptProblem<'a> {
    pub process: Process<'a>,
    pub measure: &'a QuadraticForm,
    pub continuity: &'a Continuity,
    pub settings: OptimizerSettings,
}

/// One row of the run log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    /// 1-based iteration.
    pub iteration: usize,
    pub objective: f64,
    pub g0: f64,
    /// Largest distance of any `g_j` outside `[-gamma_v, 0]`.
    pub volume_violation: f64,
    pub beta: f64,
    /// Wall time of the iteration.
    pub seconds: f64,
}

/// Append-only iteration history.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    records: Vec<IterationRecord>,
}

impl RunLog {
    pub fn push(&mut self, r: IterationRecord) {
        self.records.push(r);
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub const CSV_HEADER: &'static str = "iteration,objective,g0,max_volume_violation,beta,seconds";

    pub fn csv_row(r: &IterationRecord) -> String {
        format!(
            "{},{:e},{:e},{:e},{},{:.6}",
            r.iteration, r.objective, r.g0, r.volume_violation, r.beta, r.seconds
        )
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in &self.records {
            writeln!(w, "{}", Self::csv_row(r))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))?;
        Ok(())
    }
}

/// Objective, constraints and their field gradients at one iterate.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub objective: f64,
    pub objective_grad: Vec<f64>,
    pub g0: f64,
    pub g0_grad: Vec<f64>,
    pub volumes: Vec<f64>,
    pub volume_grads: Vec<Vec<f64>>,
}

impl Evaluation {
    pub fn volume_violation(&self, gamma_v: f64) -> f64 {
        self.volumes
            .iter()
            .map(|&g| g.max(-gamma_v - g).max(0.0))
            .fold(0.0, f64::max)
    }
}

/// Forward run, adjoint gradient and constraints at sharpness `beta`.
pub fn evaluate(problem: &OptProblem, field: &TimeField, beta: f64) -> Result<Evaluation> {
    let p = &problem.process;
    let shape = p.grid.shape();
    let sim = simulate(p, field, beta, problem.settings.retain_factors)?;
    let grad = adjoint_gradient(p, &sim, problem.measure, field)?;
    let times = field.element_times(shape);
    let (g0, g0_el) = problem.continuity.evaluate(&times);
    let (volumes, vol_el) = layer_volumes(&sim.densities, p.grid);
    Ok(Evaluation {
        objective: grad.value,
        objective_grad: grad.field,
        g0,
        g0_grad: element_to_field(shape, field.mode(), &g0_el),
        volumes,
        volume_grads: vol_el
            .iter()
            .map(|g| element_to_field(shape, field.mode(), g))
            .collect(),
    })
}

/// Constraint rows `[g0 - gc; g_j; -g_j - gv]` gathered to design order,
/// optionally divided by their tolerances.
fn constraint_rows(ev: &Evaluation, layout: &FieldLayout, s: &OptimizerSettings) -> (Vec<f64>, Vec<Vec<f64>>) {
    let (sc, sv) = if s.scale_constraints {
        (1.0 / s.gamma_c, 1.0 / s.gamma_v)
    } else {
        (1.0, 1.0)
    };
    let n = ev.volumes.len();
    let mut values = Vec::with_capacity(1 + 2 * n);
    let mut grads = Vec::with_capacity(1 + 2 * n);
    values.push((ev.g0 - s.gamma_c) * sc);
    grads.push(layout.gather_slice(&ev.g0_grad).into_iter().map(|v| v * sc).collect());
    for j in 0..n {
        values.push(ev.volumes[j] * sv);
        grads.push(layout.gather_slice(&ev.volume_grads[j]).into_iter().map(|v| v * sv).collect());
    }
    for j in 0..n {
        values.push((-ev.volumes[j] - s.gamma_v) * sv);
        grads.push(layout.gather_slice(&ev.volume_grads[j]).into_iter().map(|v| -v * sv).collect());
    }
    (values, grads)
}

/// Outcome of an optimization run.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub field: TimeField,
    pub log: RunLog,
    /// Objective at the first iterate.
    pub initial_objective: f64,
    /// Objective of the final field at the final sharpness.
    pub final_objective: f64,
    /// Objective of the final field with hard layer assignment.
    pub binary_objective: f64,
    pub final_beta: f64,
    pub g0: f64,
    pub volumes: Vec<f64>,
    /// Strict local extrema of the continuous element times.
    pub min_max: Vec<MinMaxViolation>,
    /// Local extrema of the hard layer indices, i.e. patches or voids that
    /// survive in the fabricated sequence.
    pub layer_min_max: Vec<MinMaxViolation>,
    /// Constraint violations of the final iterate, one message each.
    pub violations: Vec<String>,
    /// MMA updates that kept the previous iterate.
    pub restorations: usize,
    /// Iteration whose design is returned; `None` for the design after the
    /// last update.
    pub selected_iteration: Option<usize>,
}

impl RunReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// A run that stopped on an error; the log up to the failure is kept.
#[derive(Debug, thiserror::Error)]
#[error("optimization aborted after {} iterations: {error}", log.len())]
pub struct RunAbort {
    pub error: Error,
    pub log: RunLog,
}

/// Constraint violations of an evaluation.
pub fn feasibility_violations(ev: &Evaluation, s: &OptimizerSettings) -> Vec<String> {
    violations_with_slack(ev, s, FEASIBILITY_SLACK)
}

fn violations_with_slack(ev: &Evaluation, s: &OptimizerSettings, slack: f64) -> Vec<String> {
    let mut out = Vec::new();
    if ev.g0 > s.gamma_c + slack {
        out.push(format!("continuity g0 = {:e} exceeds {:e}", ev.g0, s.gamma_c));
    }
    for (j, &g) in ev.volumes.iter().enumerate() {
        if g > slack || g < -s.gamma_v - slack {
            out.push(format!(
                "volume constraint of layer {} = {:e} outside [{:e}, 0]",
                j + 1,
                g,
                -s.gamma_v
            ));
        }
    }
    out
}

/// Runs the optimization from `initial`.
pub fn run(problem: &OptProblem, initial: &TimeField) -> std::result::Result<RunReport, RunAbort> {
    run_with(problem, initial, |_| {})
}

/// As [`run`], calling `on_iter` after every logged iteration.
pub fn run_with(
    problem: &OptProblem,
    initial: &TimeField,
    mut on_iter: impl FnMut(&IterationRecord),
) -> std::result::Result<RunReport, RunAbort> {
    let mut log = RunLog::default();
    let abort = |error: Error, log: &RunLog| RunAbort { error, log: log.clone() };
    let p = &problem.process;
    let s = problem.settings;
    if let Err(e) = initial.validate(p.grid) {
        return Err(abort(e, &log));
    }
    let layout = FieldLayout::new(p.grid, initial.mode());
    let mut field = initial.clone();
    let mut x = layout.gather(&field);
    let n = x.len();
    let (xmin, xmax) = (vec![0.0; n], vec![1.0; n]);
    let mut state = MmaState::new(&x, s.mma);
    let mut scale = 1.0;
    let mut initial_objective = f64::NAN;
    let final_beta = s.continuation.beta_at(s.max_iters.saturating_sub(1));
    // best iterates at the final beta: [within the tolerances, within the slack]
    let mut best: [Option<(usize, TimeField, Evaluation)>; 2] = [None, None];
    let class = |ev: &Evaluation| {
        if violations_with_slack(ev, &s, 0.0).is_empty() {
            Some(0)
        } else if feasibility_violations(ev, &s).is_empty() {
            Some(1)
        } else {
            None
        }
    };
    for k in 0..s.max_iters {
        let clock = Instant::now();
        let beta = s.continuation.beta_at(k);
        let ev = match evaluate(problem, &field, beta) {
            Ok(ev) => ev,
            Err(e) => return Err(abort(e, &log)),
        };
        if !ev.objective.is_finite() {
            let e = Error::Solve { stage: None, reason: format!("objective is {}", ev.objective) };
            return Err(abort(e, &log));
        }
        if k == 0 {
            initial_objective = ev.objective;
            scale = if ev.objective > 0.0 { 1.0 / ev.objective } else { 1.0 };
        }
        let t_eval = clock.elapsed().as_secs_f64();
        let df: Vec<f64> = layout.gather_slice(&ev.objective_grad).into_iter().map(|v| v * scale).collect();
        let (values, grads) = constraint_rows(&ev, &layout, &s);
        let candidate = (s.keep_best_feasible && beta == final_beta)
            .then(|| class(&ev))
            .flatten()
            .filter(|&c| best[c].as_ref().is_none_or(|b| ev.objective < b.2.objective));
        let evaluated = candidate.map(|c| (c, field.clone()));
        x = mma_update(&mut state, &x, &xmin, &xmax, &df, &Constraints { values: &values, gradients: &grads });
        for v in x.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        layout.scatter(&x, &mut field);
        let rec = IterationRecord {
            iteration: k + 1,
            objective: ev.objective,
            g0: ev.g0,
            volume_violation: ev.volume_violation(s.gamma_v),
            beta,
            seconds: clock.elapsed().as_secs_f64(),
        };
        log::debug!(
            "iter {:4} obj {:.6e} g0 {:.3e} vol {:.3e} beta {} eval {:.3}s mma {:.3}s",
            rec.iteration,
            rec.objective,
            rec.g0,
            rec.volume_violation,
            rec.beta,
            t_eval,
            rec.seconds - t_eval
        );
        log.push(rec);
        on_iter(&rec);
        if let Some((c, f)) = evaluated {
            best[c] = Some((k + 1, f, ev));
        }
    }
    let mut ev = match evaluate(problem, &field, final_beta) {
        Ok(ev) => ev,
        Err(e) => return Err(abort(e, &log)),
    };
    let mut selected_iteration = None;
    let last_class = class(&ev);
    let [strict, slack] = best;
    if let Some((c, (k, f, b))) = strict.map(|b| (0, b)).or(slack.map(|b| (1, b))) {
        let last_ok = last_class.is_some_and(|l| l < c || (l == c && ev.objective <= b.objective));
        if !last_ok {
            log::info!("returning iterate {k}, the best feasible design at beta {final_beta}");
            field = f;
            ev = b;
            selected_iteration = Some(k);
        }
    }
    if s.max_iters == 0 {
        initial_objective = ev.objective;
    }
    let binary_objective = match objective(p, &field, None, problem.measure) {
        Ok(v) => v,
        Err(e) => return Err(abort(e, &log)),
    };
    let times = field.element_times(p.grid.shape());
    let min_max = problem.continuity.verify_min_max(p.grid, &times, s.min_max_tolerance);
    let layer_index: Vec<f64> = times
        .iter()
        .map(|&t| binary_layer(t, p.layers) as f64)
        .collect();
    let layer_min_max = problem.continuity.verify_min_max(p.grid, &layer_index, 0.5);
    let violations = feasibility_violations(&ev, &s);
    for v in &violations {
        log::warn!("final iterate infeasible: {v}");
    }
    if state.restorations > 0 {
        log::warn!("{} MMA updates fell back to the previous iterate", state.restorations);
    }
    Ok(RunReport {
        field,
        log,
        initial_objective,
        final_objective: ev.objective,
        binary_objective,
        final_beta,
        g0: ev.g0,
        volumes: ev.volumes,
        min_max,
        layer_min_max,
        violations,
        restorations: state.restorations,
        selected_iteration,
    })
}

/// Layer count for a nominal layer thickness `h` and average layer extent
/// `l`: `round(V / (h l))`, at least 2.
pub fn choose_layer_count(volume: f64, h: f64, l: f64) -> usize {
    let n = (volume / (h * l)).round();
    if n.is_finite() && n > 2.0 {
        n as usize
    } else {
        2
    }
}
