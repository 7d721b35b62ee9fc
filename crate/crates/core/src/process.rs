//! Layer-by-layer inherent strain process simulation.

use crate::error::{Error, Result};
use crate::fem::{rotate_strain_to_global, scatter_element_vectors, voigt_len, Factor, FemModel};
use crate::grid::DomainGrid;
use crate::par;
use crate::projection::{binary_stage_densities, penalize, stage_densities, ProjectionParams, StageDensities};
use crate::timefield::{centroid_gradient, FieldMode, TimeField};
use serde::{Deserialize, Serialize};

/// Orientation model of the inherent strain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrainMode {
    /// Same strain in every element, in global axes.
    #[default]
    Isotropic,
    /// Strain given in a per-element frame whose y axis follows the time
    /// gradient (2D, node-based fields only).
    Aligned,
}

/// Inherent strain applied to newly deposited material.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InherentStrain {
    /// Voigt components with engineering shear: `[xx, yy, xy]` in 2D,
    /// `[xx, yy, zz, yz, zx, xy]` in 3D.
    pub values: Vec<f64>,
    #[serde(default)]
    pub mode: StrainMode,
}

impl InherentStrain {
    /// Uniform shrinkage `eps` along every axis.
    pub fn isotropic(dim: usize, eps: f64) -> Self {
        let mut values = vec![0.0; voigt_len(dim)];
        values[..dim].iter_mut().for_each(|v| *v = eps);
        Self {
            values,
            mode: StrainMode::Isotropic,
        }
    }

    /// Deposition-aligned 2D strain `[along, across, shear]`.
    pub fn aligned(local: [f64; 3]) -> Self {
        Self {
            values: local.to_vec(),
            mode: StrainMode::Aligned,
        }
    }

    /// Field mode required by this strain model.
    pub fn field_mode(&self) -> FieldMode {
        match self.mode {
            StrainMode::Isotropic => FieldMode::Element,
            StrainMode::Aligned => FieldMode::Node,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.values.len() != voigt_len(dim) {
            return Err(Error::config(
                "strain.values",
                format!("expected {} components for a {dim}D grid", voigt_len(dim)),
            ));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("strain.values", "components must be finite"));
        }
        if self.mode == StrainMode::Aligned && dim != 2 {
            return Err(Error::config("strain.mode", "aligned strain is only supported in 2D"));
        }
        Ok(())
    }
}

/// Per-element global strains, with their sensitivity to the local time
/// gradient in aligned mode.
#[derive(Clone, Debug)]
pub struct ElementStrains {
    nvoigt: usize,
    voigt: Vec<f64>,
    jacobian: Option<Vec<[[f64; 2]; 3]>>,
    degenerate: Vec<usize>,
}

impl ElementStrains {
    pub fn new(strain: &InherentStrain, grid: &DomainGrid, field: &TimeField) -> Result<Self> {
        let shape = grid.shape();
        let nel = shape.n_elements();
        let nv = voigt_len(shape.dim());
        strain.validate(shape.dim())?;
        match strain.mode {
            StrainMode::Isotropic => Ok(Self {
                nvoigt: nv,
                voigt: strain.values.repeat(nel),
                jacobian: None,
                degenerate: Vec::new(),
            }),
            StrainMode::Aligned => {
                if field.mode() != FieldMode::Node {
                    return Err(Error::InvalidField(
                        "aligned inherent strain needs a node-based time field".into(),
                    ));
                }
                let local = [strain.values[0], strain.values[1], strain.values[2]];
                let rotated = par::map_range(nel, |e| {
                    let g = centroid_gradient(shape, field.values(), e);
                    rotate_strain_to_global(local, [g[0], g[1]])
                });
                let degenerate = (0..nel)
                    .filter(|&e| grid.is_active(e) && rotated[e].degenerate)
                    .collect::<Vec<_>>();
                if !degenerate.is_empty() {
                    log::debug!("{} elements use the global strain frame", degenerate.len());
                }
                Ok(Self {
                    nvoigt: nv,
                    voigt: rotated.iter().flat_map(|r| r.global).collect(),
                    jacobian: Some(rotated.iter().map(|r| r.jacobian).collect()),
                    degenerate,
                })
            }
        }
    }

    #[inline]
    pub fn of(&self, e: usize) -> &[f64] {
        &self.voigt[e * self.nvoigt..(e + 1) * self.nvoigt]
    }

    pub fn jacobian(&self, e: usize) -> Option<&[[f64; 2]; 3]> {
        self.jacobian.as_ref().map(|j| &j[e])
    }

    /// Active elements whose time gradient was too short to define a frame.
    pub fn degenerate(&self) -> &[usize] {
        &self.degenerate
    }
}

/// Everything the forward model needs besides the time field.
#[derive(Clone, Copy)]
pub struct Process<'a> {
    pub grid: &'a DomainGrid,
    pub fem: &'a FemModel,
    pub strain: &'a InherentStrain,
    pub layers: usize,
}

/// Result of a forward simulation.
#[derive(Debug)]
pub struct Simulation {
    pub densities: StageDensities,
    pub strains: ElementStrains,
    /// Incremental displacement of every stage (index `j - 1`), full length.
    pub du: Vec<Vec<f64>>,
    /// Final accumulated displacement.
    pub u: Vec<f64>,
    /// Stage operators kept for adjoint solves.
    pub factors: Option<Vec<Factor>>,
}

impl Simulation {
    pub fn layers(&self) -> usize {
        self.du.len()
    }

    /// Accumulated displacement after stage `j` (`j = 0` is zero).
    pub fn accumulated(&self, j: usize) -> Vec<f64> {
        accumulate(&self.du[..j], self.u.len())
    }

    /// Sums the stage increments in the given order of stage indices
    /// (1-based).
    pub fn accumulate_in_order(&self, order: &[usize]) -> Vec<f64> {
        let mut u = vec![0.0; self.u.len()];
        for &j in order {
            for (a, b) in u.iter_mut().zip(&self.du[j - 1]) {
                *a += b;
            }
        }
        u
    }
}

/// Ascending sum of stage increments.
pub fn accumulate(du: &[Vec<f64>], n: usize) -> Vec<f64> {
    let mut u = vec![0.0; n];
    for d in du {
        for (a, b) in u.iter_mut().zip(d) {
            *a += b;
        }
    }
    u
}

/// Global load vector of stage `j`.
pub fn stage_load(
    process: &Process,
    densities: &StageDensities,
    strains: &ElementStrains,
    j: usize,
) -> Vec<f64> {
    let shape = process.grid.shape();
    let kernel = process.fem.kernel();
    let q = process.fem.material().q;
    let e0 = process.fem.material().e0;
    scatter_element_vectors(shape, |e, fe| {
        let d = densities.increment_at(j, e);
        if d == 0.0 {
            return false;
        }
        let w = e0 * penalize(d, q).0;
        kernel.forces_into(strains.of(e), fe);
        fe.iter_mut().for_each(|v| *v *= w);
        true
    })
}

/// Solves stage `j` in isolation: returns the incremental displacement and
/// the stage operator.
pub fn solve_stage(
    process: &Process,
    densities: &StageDensities,
    strains: &ElementStrains,
    j: usize,
) -> Result<(Vec<f64>, Factor)> {
    let with_stage = |mut e: Error| {
        if let Error::Solve { stage, .. } = &mut e {
            *stage = Some(j);
        }
        e
    };
    let factor = process.fem.factorize(densities.rho(j)).map_err(with_stage)?;
    let load = stage_load(process, densities, strains, j);
    let du = process.fem.solve(&factor, &load).map_err(with_stage)?;
    Ok((du, factor))
}

/// Runs all stages for given densities. Stages are solved concurrently when
/// the `parallel` feature is on; accumulation is always ascending.
pub fn simulate_densities(
    process: &Process,
    field: &TimeField,
    densities: StageDensities,
    retain_factors: bool,
) -> Result<Simulation> {
    if densities.layers() != process.layers {
        return Err(Error::StageMismatch {
            expected: process.layers,
            found: densities.layers(),
        });
    }
    let strains = ElementStrains::new(process.strain, process.grid, field)?;
    let n = process.layers;
    let results = par::try_map_range(n, |i| {
        let (du, factor) = solve_stage(process, &densities, &strains, i + 1)?;
        Ok::<_, Error>((du, retain_factors.then_some(factor)))
    })?;
    let mut du = Vec::with_capacity(n);
    let mut factors = Vec::with_capacity(n);
    for (d, f) in results {
        du.push(d);
        if let Some(f) = f {
            factors.push(f);
        }
    }
    let u = accumulate(&du, process.grid.shape().n_dofs());
    Ok(Simulation {
        densities,
        strains,
        du,
        u,
        factors: retain_factors.then_some(factors),
    })
}

/// Forward simulation with smoothed layers at sharpness `beta`.
pub fn simulate(process: &Process, field: &TimeField, beta: f64, retain_factors: bool) -> Result<Simulation> {
    field.validate(process.grid)?;
    let times = field.element_times(process.grid.shape());
    let densities = stage_densities(
        &times,
        process.grid,
        &ProjectionParams::new(process.layers, beta),
    );
    simulate_densities(process, field, densities, retain_factors)
}

/// Forward simulation with each element assigned wholly to one layer.
pub fn simulate_binary(process: &Process, field: &TimeField) -> Result<Simulation> {
    field.validate(process.grid)?;
    let times = field.element_times(process.grid.shape());
    let densities = binary_stage_densities(&times, process.grid, process.layers);
    simulate_densities(process, field, densities, false)
}

/// Recomputes the final displacement by summing the increments in a
/// shuffled order and compares it with the stored result.
pub fn stage_order_independence_check(sim: &Simulation, seed: u64) -> bool {
    let n = sim.layers();
    let mut order: Vec<usize> = (1..=n).collect();
    // small xorshift permutation; any order must give the same sum
    let mut s = seed | 1;
    for i in (1..n).rev() {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        order.swap(i, (s % (i as u64 + 1)) as usize);
    }
    let permuted = sim.accumulate_in_order(&order);
    let scale = sim.u.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    sim.u
        .iter()
        .zip(&permuted)
        .all(|(a, b)| (a - b).abs() <= 1e-12 * scale)
}
