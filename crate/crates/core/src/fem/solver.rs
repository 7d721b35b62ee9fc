//! Stage system construction and linear solves.

use super::assembly::{pair_index, SystemPattern};
use super::element::ElementKernel;
use super::multigrid::{Hierarchy, MgOperator};
use super::Material;
use crate::error::{Error, Result};
use crate::grid::{DomainGrid, GridShape};
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::LltRegularization;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, CholeskySymbolicParams, LltRef, SymbolicCholesky,
    SymmetricOrdering,
};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Par, Side};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Linear solver selection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    /// Direct factorization unless the system is very large.
    #[default]
    Auto,
    /// Sparse supernodal Cholesky.
    Direct,
    /// Jacobi-preconditioned conjugate gradients.
    Pcg,
    /// Geometric multigrid preconditioned conjugate gradients; needs even
    /// grid extents.
    Multigrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub kind: SolverKind,
    /// Relative residual target of the iterative solver.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            kind: SolverKind::Auto,
            tolerance: 1e-8,
            max_iterations: 50_000,
        }
    }
}

/// Free-DOF count above which `Auto` switches to the iterative solver.
const AUTO_DIRECT_LIMIT: usize = 400_000;
/// Free-DOF count above which `Auto` prefers multigrid on solid grids.
const AUTO_MULTIGRID_3D: usize = 50_000;

/// A stage operator ready for repeated solves.
#[derive(Debug)]
pub enum Factor {
    Cholesky(Vec<f64>),
    Iterative { values: Vec<f64>, inv_diag: Vec<f64> },
    Multigrid(MgOperator),
}

/// Discretized full-grid elasticity model shared by all stages.
#[derive(Debug)]
pub struct FemModel {
    shape: GridShape,
    material: Material,
    kernel: ElementKernel,
    ke_lower: Vec<f64>,
    pattern: SystemPattern,
    symbolic: Option<Arc<SymbolicCholesky<usize>>>,
    multigrid: Option<Arc<Hierarchy>>,
    /// Full element matrix scaled by the Young's modulus.
    ke_full: Vec<f64>,
    options: SolverOptions,
}

impl FemModel {
    pub fn new(grid: &DomainGrid, material: &Material, options: SolverOptions) -> Result<Self> {
        material.validate()?;
        let shape = *grid.shape();
        let dim = shape.dim();
        let kernel = ElementKernel::new(dim, material.nu, material.plane);
        let n = kernel.ndof();
        let mut ke_lower = vec![0.0; n * (n + 1) / 2];
        for i in 0..n {
            for j in 0..=i {
                ke_lower[pair_index(i, j)] = material.e0 * kernel.stiffness()[i * n + j];
            }
        }
        let ke_full: Vec<f64> = kernel.stiffness().iter().map(|k| material.e0 * k).collect();
        let pattern = SystemPattern::new(grid);
        let want_mg = match options.kind {
            SolverKind::Multigrid => true,
            SolverKind::Auto => dim == 3 && pattern.n() > AUTO_MULTIGRID_3D,
            _ => false,
        };
        let multigrid = if want_mg {
            let h = Hierarchy::new(&shape, grid.fixed_nodes(), &ke_full)?;
            match &h {
                Some(h) => log::debug!("multigrid levels: {:?}", h.level_dofs()),
                None if options.kind == SolverKind::Multigrid => log::warn!(
                    "grid {:?} cannot be coarsened; using Jacobi conjugate gradients",
                    shape.extents()
                ),
                None => {}
            }
            h.map(Arc::new)
        } else {
            None
        };
        let direct = multigrid.is_none()
            && match options.kind {
                SolverKind::Direct => true,
                SolverKind::Pcg | SolverKind::Multigrid => false,
                SolverKind::Auto => pattern.n() <= AUTO_DIRECT_LIMIT,
            };
        let symbolic = if direct {
            let a = SymbolicSparseColMatRef::new_checked(
                pattern.n(),
                pattern.n(),
                pattern.col_ptr(),
                None,
                pattern.row_idx(),
            );
            let sym = factorize_symbolic_cholesky(
                a,
                Side::Lower,
                SymmetricOrdering::Amd,
                CholeskySymbolicParams::default(),
            )
            .map_err(|e| Error::Solve {
                stage: None,
                reason: format!("symbolic factorization failed: {e:?}"),
            })?;
            log::debug!(
                "symbolic Cholesky: n = {}, nnz(A) = {}, nnz(L) = {}",
                pattern.n(),
                pattern.nnz(),
                sym.len_val()
            );
            Some(Arc::new(sym))
        } else {
            None
        };
        Ok(Self {
            shape,
            material: *material,
            kernel,
            ke_lower,
            pattern,
            symbolic,
            multigrid,
            ke_full,
            options,
        })
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn material(&self) -> &Material {
        &self.material
    }

    pub fn kernel(&self) -> &ElementKernel {
        &self.kernel
    }

    pub fn pattern(&self) -> &SystemPattern {
        &self.pattern
    }

    pub fn is_direct(&self) -> bool {
        self.symbolic.is_some()
    }

    pub fn is_multigrid(&self) -> bool {
        self.multigrid.is_some()
    }

    /// Bytes held by one factor.
    pub fn factor_bytes(&self) -> usize {
        if let Some(h) = &self.multigrid {
            return h.operator_bytes();
        }
        match &self.symbolic {
            Some(s) => s.len_val() * 8,
            None => self.pattern.nnz() * 8 + self.pattern.n() * 8,
        }
    }

    /// Reduced stiffness values for per-element stiffness factors.
    pub fn stiffness_values(&self, scale: &[f64]) -> Vec<f64> {
        self.pattern.assemble(scale, &self.ke_lower)
    }

    /// Builds and factorizes the stage operator for per-element densities.
    pub fn factorize(&self, densities: &[f64]) -> Result<Factor> {
        let scale: Vec<f64> = densities.iter().map(|&r| self.material.simp_scale(r)).collect();
        self.factorize_scaled(&scale)
    }

    /// Like [`factorize`](Self::factorize) with explicit stiffness factors.
    pub fn factorize_scaled(&self, scale: &[f64]) -> Result<Factor> {
        if let Some(h) = &self.multigrid {
            return Ok(Factor::Multigrid(h.operator(&self.ke_full, scale)?));
        }
        let values = self.stiffness_values(scale);
        match &self.symbolic {
            Some(sym) => {
                let n = self.pattern.n();
                let a = SparseColMatRef::new(
                    SymbolicSparseColMatRef::new_checked(
                        n,
                        n,
                        self.pattern.col_ptr(),
                        None,
                        self.pattern.row_idx(),
                    ),
                    &values,
                );
                let mut l = vec![0.0; sym.len_val()];
                let mut buf = MemBuffer::new(
                    sym.factorize_numeric_llt_scratch::<f64>(Par::Seq, Default::default()),
                );
                sym.factorize_numeric_llt(
                    &mut l,
                    a,
                    Side::Lower,
                    LltRegularization::default(),
                    Par::Seq,
                    MemStack::new(&mut buf),
                    Default::default(),
                )
                .map_err(|e| Error::Solve {
                    stage: None,
                    reason: format!("stiffness matrix not positive definite: {e:?}"),
                })?;
                Ok(Factor::Cholesky(l))
            }
            None => {
                let inv_diag = self
                    .pattern
                    .diagonal(&values)
                    .into_iter()
                    .map(|d| 1.0 / d)
                    .collect();
                Ok(Factor::Iterative { values, inv_diag })
            }
        }
    }

    /// Solves `K x = b` in reduced numbering, overwriting `b` with `x`.
    pub fn solve_reduced(&self, factor: &Factor, b: &mut [f64]) -> Result<()> {
        match factor {
            Factor::Cholesky(l) => {
                let sym = self.symbolic.as_ref().expect("direct factor without symbolic");
                let llt = LltRef::<'_, usize, f64>::new(sym, l);
                let mut buf = MemBuffer::new(sym.solve_in_place_scratch::<f64>(1, Par::Seq));
                let n = b.len();
                let rhs = MatMut::from_column_major_slice_mut(b, n, 1);
                llt.solve_in_place_with_conj(Conj::No, rhs, Par::Seq, MemStack::new(&mut buf));
                Ok(())
            }
            Factor::Iterative { values, inv_diag } => self.pcg(values, inv_diag, b),
            Factor::Multigrid(op) => {
                let h = self.multigrid.as_ref().expect("multigrid factor without hierarchy");
                let dofs = self.pattern.dofs();
                let (x, iterations) =
                    h.solve(op, &dofs.extend(b), self.options.tolerance, self.options.max_iterations)?;
                log::trace!("multigrid conjugate gradients: {iterations} iterations");
                b.copy_from_slice(&dofs.restrict(&x));
                Ok(())
            }
        }
    }

    /// Solves with a full-length load vector; fixed DOFs of the result are
    /// zero and loads on them are ignored.
    pub fn solve(&self, factor: &Factor, load: &[f64]) -> Result<Vec<f64>> {
        let mut b = self.pattern.dofs().restrict(load);
        self.solve_reduced(factor, &mut b)?;
        Ok(self.pattern.dofs().extend(&b))
    }

    /// Relative residual `|K x - b| / |b|` of a full-length solution.
    pub fn relative_residual(&self, densities: &[f64], x: &[f64], load: &[f64]) -> f64 {
        let scale: Vec<f64> = densities.iter().map(|&r| self.material.simp_scale(r)).collect();
        let values = self.stiffness_values(&scale);
        let dofs = self.pattern.dofs();
        let xr = dofs.restrict(x);
        let br = dofs.restrict(load);
        let mut kx = vec![0.0; xr.len()];
        self.pattern.sym_matvec(&values, &xr, &mut kx);
        let num: f64 = kx.iter().zip(&br).map(|(a, b)| (a - b) * (a - b)).sum();
        let den: f64 = br.iter().map(|b| b * b).sum();
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }

    fn pcg(&self, values: &[f64], inv_diag: &[f64], b: &mut [f64]) -> Result<()> {
        let n = b.len();
        let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if bnorm == 0.0 {
            return Ok(());
        }
        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(a, d)| a * d).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let tol = self.options.tolerance * bnorm;
        let mut rnorm = bnorm;
        for _ in 0..self.options.max_iterations {
            self.pattern.sym_matvec(values, &p, &mut ap);
            let alpha = rz / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rnorm <= tol {
                b.copy_from_slice(&x);
                return Ok(());
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(Error::Solve {
            stage: None,
            reason: format!(
                "conjugate gradients stopped after {} iterations at relative residual {:.3e}",
                self.options.max_iterations,
                rnorm / bnorm
            ),
        })
    }
}
