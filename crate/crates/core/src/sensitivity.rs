//! Adjoint sensitivities of distortion measures and a finite-difference
//! reference.

use crate::error::{Error, Result};
use crate::fem::gather_element;
use crate::grid::GridShape;
use crate::measures::QuadraticForm;
use crate::par;
use crate::process::{simulate_densities, stage_load, Process, Simulation};
use crate::projection::{binary_stage_densities, penalize, stage_densities, ProjectionParams};
use crate::timefield::{centroid_gradient_weights, FieldLayout, FieldMode, TimeField};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Objective value with gradients.
#[derive(Clone, Debug)]
pub struct ObjectiveGradient {
    pub value: f64,
    /// Derivative with respect to each element's (interpolated) time.
    pub element: Vec<f64>,
    /// Derivative with respect to every field entry.
    pub field: Vec<f64>,
}

/// Adjoint vectors `K_i lambda_i = -2 Q u`, one per stage, full length.
pub fn adjoint_vectors(process: &Process, sim: &Simulation, q: &QuadraticForm) -> Result<Vec<Vec<f64>>> {
    let n = process.layers;
    if sim.layers() != n {
        return Err(Error::StageMismatch { expected: n, found: sim.layers() });
    }
    let mut rhs = q.gradient(&sim.u);
    rhs.iter_mut().for_each(|v| *v = -*v);
    let fem = process.fem;
    par::try_map_range(n, |i| {
        let j = i + 1;
        let stage = |mut e: Error| {
            if let Error::Solve { stage, .. } = &mut e {
                *stage = Some(j);
            }
            e
        };
        match &sim.factors {
            Some(f) => fem.solve(&f[i], &rhs).map_err(stage),
            None => {
                let factor = fem.factorize(sim.densities.rho(j)).map_err(stage)?;
                fem.solve(&factor, &rhs).map_err(stage)
            }
        }
    })
}

/// Adds element-time derivatives to the field entries they depend on.
pub fn element_to_field(shape: &GridShape, mode: FieldMode, element: &[f64]) -> Vec<f64> {
    match mode {
        FieldMode::Element => element.to_vec(),
        FieldMode::Node => {
            let npe = shape.nodes_per_element();
            let w = 1.0 / npe as f64;
            let mut out = vec![0.0; shape.n_nodes()];
            for (e, &g) in element.iter().enumerate() {
                if g != 0.0 {
                    for &v in &shape.element_nodes(e)[..npe] {
                        out[v] += w * g;
                    }
                }
            }
            out
        }
    }
}

/// Adjoint gradient of `u^T Q u` after a forward run with retained stage
/// increments.
pub fn adjoint_gradient(
    process: &Process,
    sim: &Simulation,
    q: &QuadraticForm,
    field: &TimeField,
) -> Result<ObjectiveGradient> {
    let lambdas = adjoint_vectors(process, sim, q)?;
    let shape = process.grid.shape();
    let fem = process.fem;
    let mat = fem.material();
    let kernel = fem.kernel();
    let ndof = kernel.ndof();
    let n = process.layers;
    let sd = &sim.densities;
    let aligned = sim.strains.jacobian(0).is_some();

    // per element: (d/d t_e, d/d grad t)
    let per_element = par::map_range(shape.n_elements(), |e| {
        if !process.grid.is_active(e) {
            return (0.0, [0.0; 2]);
        }
        let mut lam = vec![0.0; ndof];
        let mut du = vec![0.0; ndof];
        let fe = kernel.forces(sim.strains.of(e));
        let mut w_acc = vec![0.0; ndof];
        let mut dt = 0.0;
        for i in 1..=n {
            gather_element(shape, e, &lambdas[i - 1], &mut lam);
            let drho = sd.rho_derivative(i)[e];
            if drho != 0.0 {
                gather_element(shape, e, &sim.du[i - 1], &mut du);
                let dk = mat.e0 * mat.simp_derivative(sd.rho(i)[e]) * drho;
                dt += dk * kernel.energy(&lam, &du);
            }
            let inc = sd.increment_at(i, e);
            let (pen, dpen) = penalize(inc, mat.q);
            let dinc = sd.increment_derivative_at(i, e);
            let lf: f64 = lam.iter().zip(&fe).map(|(a, b)| a * b).sum();
            dt -= mat.e0 * dpen * dinc * lf;
            if aligned && pen != 0.0 {
                for (a, l) in w_acc.iter_mut().zip(&lam) {
                    *a += pen * l;
                }
            }
        }
        let mut dg = [0.0; 2];
        if let Some(jac) = sim.strains.jacobian(e) {
            // d f_e / d grad = e0 * BtC * J
            let nv = kernel.nvoigt();
            let btc = kernel.load_operator();
            for c in 0..2 {
                let mut acc = 0.0;
                for r in 0..ndof {
                    let mut col = 0.0;
                    for s in 0..nv {
                        col += btc[r * nv + s] * jac[s][c];
                    }
                    acc += w_acc[r] * col;
                }
                dg[c] = -mat.e0 * acc;
            }
        }
        (dt, dg)
    });
    let element: Vec<f64> = per_element.iter().map(|p| p.0).collect();
    let mut field_grad = element_to_field(shape, field.mode(), &element);
    if aligned {
        let w = centroid_gradient_weights(shape.dim());
        let npe = shape.nodes_per_element();
        for (e, (_, dg)) in per_element.iter().enumerate() {
            if dg[0] == 0.0 && dg[1] == 0.0 {
                continue;
            }
            for (k, &v) in shape.element_nodes(e)[..npe].iter().enumerate() {
                field_grad[v] += dg[0] * w[0][k] + dg[1] * w[1][k];
            }
        }
    }
    Ok(ObjectiveGradient {
        value: q.evaluate(&sim.u),
        element,
        field: field_grad,
    })
}

/// For every stage, `lambda_i^T f_i` and `-2 u^T Q du_i`; the two agree for
/// exact solves.
pub fn adjoint_identity(process: &Process, sim: &Simulation, q: &QuadraticForm) -> Result<Vec<(f64, f64)>> {
    let lambdas = adjoint_vectors(process, sim, q)?;
    let qu = q.apply(&sim.u);
    Ok((1..=process.layers)
        .map(|i| {
            let f = stage_load(process, &sim.densities, &sim.strains, i);
            let lf: f64 = lambdas[i - 1].iter().zip(&f).map(|(a, b)| a * b).sum();
            let qd: f64 = qu.iter().zip(&sim.du[i - 1]).map(|(a, b)| a * b).sum();
            (lf, -2.0 * qd)
        })
        .collect())
}

/// Objective for an arbitrary field (no range checks), smoothed layers at
/// sharpness `beta`, or binary layers when `beta` is `None`.
pub fn objective(process: &Process, field: &TimeField, beta: Option<f64>, q: &QuadraticForm) -> Result<f64> {
    let times = field.element_times(process.grid.shape());
    let densities = match beta {
        Some(b) => stage_densities(&times, process.grid, &ProjectionParams::new(process.layers, b)),
        None => binary_stage_densities(&times, process.grid, process.layers),
    };
    let sim = simulate_densities(process, field, densities, false)?;
    Ok(q.evaluate(&sim.u))
}

/// Central difference `(d(t + h dir) - d(t - h dir)) / 2h`.
pub fn fd_gradient(
    process: &Process,
    field: &TimeField,
    direction: &[f64],
    h: f64,
    beta: f64,
    q: &QuadraticForm,
) -> Result<f64> {
    let shifted = |s: f64| {
        let values = field
            .values()
            .iter()
            .zip(direction)
            .map(|(t, d)| t + s * d)
            .collect();
        TimeField::new(field.mode(), values)
    };
    let plus = objective(process, &shifted(h), Some(beta), q)?;
    let minus = objective(process, &shifted(-h), Some(beta), q)?;
    Ok((plus - minus) / (2.0 * h))
}

/// Settings of [`check_gradient`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckOptions {
    pub beta: f64,
    pub step: f64,
    pub components: usize,
    pub directions: usize,
    pub seed: u64,
    /// Denominator floor as a fraction of the largest gradient entry; keeps
    /// components far below the gradient's scale from reporting pure
    /// cancellation noise as relative error.
    pub floor: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self { beta: 30.0, step: 1e-6, components: 20, directions: 4, seed: 1, floor: 1e-3 }
    }
}

/// One adjoint vs finite-difference comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckEntry {
    /// Field index for single components, `None` for dense directions.
    pub index: Option<usize>,
    pub adjoint: f64,
    pub finite_difference: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientCheck {
    pub objective: f64,
    pub entries: Vec<CheckEntry>,
}

impl GradientCheck {
    pub fn max_relative_error(&self) -> f64 {
        self.entries.iter().map(|e| e.relative_error).fold(0.0, f64::max)
    }
}

/// Compares the adjoint gradient with central differences along random
/// free components and random dense directions over the free entries.
pub fn check_gradient(
    process: &Process,
    field: &TimeField,
    q: &QuadraticForm,
    opts: &CheckOptions,
) -> Result<GradientCheck> {
    let layout = FieldLayout::new(process.grid, field.mode());
    let sim = crate::process::simulate(process, field, opts.beta, true)?;
    let grad = adjoint_gradient(process, &sim, q, field)?;
    let gmax = layout.free().iter().map(|&i| grad.field[i].abs()).fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n = layout.n_free();
    let mut entries = Vec::new();
    let picks = sample(&mut rng, n, opts.components.min(n));
    for k in picks.iter() {
        let i = layout.free()[k];
        let mut d = vec![0.0; field.values().len()];
        d[i] = 1.0;
        let fd = fd_gradient(process, field, &d, opts.step, opts.beta, q)?;
        let adj = grad.field[i];
        let den = fd.abs().max(opts.floor * gmax).max(f64::MIN_POSITIVE);
        entries.push(CheckEntry { index: Some(i), adjoint: adj, finite_difference: fd, relative_error: (adj - fd).abs() / den });
    }
    for _ in 0..opts.directions {
        let mut d = vec![0.0; field.values().len()];
        for &i in layout.free() {
            d[i] = rng.random_range(-1.0..1.0);
        }
        let fd = fd_gradient(process, field, &d, opts.step, opts.beta, q)?;
        let adj: f64 = d.iter().zip(&grad.field).map(|(a, b)| a * b).sum();
        let scale: f64 = d.iter().zip(&grad.field).map(|(a, b)| (a * b).abs()).sum();
        let den = fd.abs().max(opts.floor * scale).max(f64::MIN_POSITIVE);
        entries.push(CheckEntry { index: None, adjoint: adj, finite_difference: fd, relative_error: (adj - fd).abs() / den });
    }
    Ok(GradientCheck { objective: grad.value, entries })
}

/// Blends the free entries of `field` with uniform noise:
/// `(1 - w) t + w r`, `r` in `[0, 1)`.
pub fn perturb_field(field: &TimeField, layout: &FieldLayout, weight: f64, seed: u64) -> TimeField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = field.clone();
    for &i in layout.free() {
        let r: f64 = rng.random();
        out.values_mut()[i] = ((1.0 - weight) * field.values()[i] + weight * r).clamp(0.0, 1.0);
    }
    out
}
