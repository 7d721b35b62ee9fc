//! Geometric multigrid preconditioned conjugate gradients on the full
//! structured grid. Fixed DOFs are kept as identity rows, coarse levels use
//! Galerkin element matrices of bilinear/trilinear interpolation, smoothing
//! is damped Jacobi and the coarsest level is factorized directly.

use crate::error::{Error, Result};
use crate::grid::GridShape;
use crate::par;
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::LltRegularization;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, CholeskySymbolicParams, LltRef, SymbolicCholesky, SymmetricOrdering,
};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Par, Side};

/// Coarsening stops once a level has at most this many DOFs.
const COARSEST_DOFS: usize = 8_000;
/// Jacobi damping.
const JACOBI_WEIGHT: f64 = 0.6;
/// Jacobi sweeps before and after each coarse correction.
const SMOOTHING_STEPS: usize = 2;

fn node_extents(s: &GridShape) -> [usize; 3] {
    let e = s.extents();
    [e[0] + 1, e[1] + 1, if s.dim() == 3 { e[2] + 1 } else { 1 }]
}

fn coarsen(s: &GridShape) -> Option<GridShape> {
    let e = s.extents();
    if e.iter().any(|&n| n % 2 != 0 || n < 2) {
        return None;
    }
    let half: Vec<usize> = e.iter().map(|&n| n / 2).collect();
    GridShape::from_extents(&half).ok()
}

/// Interpolation weight of coarse local coordinate `c` at fine offset `f`
/// (0, 1 or 2 fine cells from the coarse element origin).
fn weight(f: usize, c: usize) -> f64 {
    match f {
        0 => (c == 0) as u8 as f64,
        2 => (c == 1) as u8 as f64,
        _ => 0.5,
    }
}

/// Symmetric matrix on a structured node grid, stored as one row block per
/// node over the `3^dim` neighbouring nodes.
#[derive(Debug)]
struct Stencil {
    values: Vec<f64>,
}

/// Level geometry shared by every stage operator.
#[derive(Debug)]
struct Level {
    shape: GridShape,
    /// Neighbour node of every stencil slot (0 with a zero value when the
    /// neighbour lies outside the grid).
    nbr: Vec<u32>,
    fixed: Vec<bool>,
}

impl Level {
    fn new(shape: GridShape, fixed: Vec<bool>) -> Self {
        let dim = shape.dim();
        let ns = 3usize.pow(dim as u32);
        let nn = node_extents(&shape);
        let mut level = Self { shape, nbr: vec![0u32; shape.n_nodes() * ns], fixed };
        for v in 0..shape.n_nodes() {
            for s in 0..ns {
                if let Some(w) = level.neighbour(v, s, &nn) {
                    level.nbr[v * ns + s] = w as u32;
                }
            }
        }
        level
    }

    fn dim(&self) -> usize {
        self.shape.dim()
    }

    /// Node offset of stencil slot `s`, components in -1..=1.
    fn offset(&self, s: usize) -> [isize; 3] {
        let dz = if self.dim() == 3 { (s / 9) as isize - 1 } else { 0 };
        [(s % 3) as isize - 1, ((s / 3) % 3) as isize - 1, dz]
    }

    fn n(&self) -> usize {
        self.shape.n_dofs()
    }

    fn slots(&self) -> usize {
        3usize.pow(self.dim() as u32) * self.dim()
    }

    fn neighbour(&self, v: usize, s: usize, nn: &[usize; 3]) -> Option<usize> {
        let p = self.shape.node_ijk(v);
        let d = self.offset(s);
        let q: Vec<isize> = (0..3).map(|a| p[a] as isize + d[a]).collect();
        (0..3)
            .all(|a| q[a] >= 0 && (q[a] as usize) < nn[a])
            .then(|| self.shape.node_id(q[0] as usize, q[1] as usize, q[2] as usize))
    }

    /// Stencil slot of node offset `d` (components in -1..=1).
    fn slot_of(&self, d: [isize; 3]) -> usize {
        let z = if self.dim() == 3 { 9 * (d[2] + 1) } else { 0 };
        ((d[0] + 1) + 3 * (d[1] + 1) + z) as usize
    }

    /// Assembles `sum_e scale_e K_e` and turns fixed DOFs into identity rows.
    /// `mats` holds either one shared element matrix or one per element.
    fn assemble(&self, mats: &[f64], scale: Option<&[f64]>, nd: usize) -> Stencil {
        let dim = self.dim();
        let npe = self.shape.nodes_per_element();
        let ns = 3usize.pow(dim as u32);
        let width = self.slots();
        let shape = self.shape;
        let mut values = vec![0.0; self.n() * width];
        let shared = mats.len() == nd * nd;
        par::for_each_chunk_mut(&mut values, dim * width, |v, block| {
            let p = shape.node_ijk(v);
            let mut elems = Vec::with_capacity(8);
            shape.node_elements(v, &mut elems);
            for &e in &elems {
                let scale = scale.map_or(1.0, |s| s[e]);
                if scale == 0.0 {
                    continue;
                }
                let ke = if shared { mats } else { &mats[e * nd * nd..(e + 1) * nd * nd] };
                let nodes = shape.element_nodes(e);
                let lp = nodes[..npe].iter().position(|&w| w == v).unwrap();
                for (lq, &w) in nodes[..npe].iter().enumerate() {
                    let q = shape.node_ijk(w);
                    let s = self.slot_of([
                        q[0] as isize - p[0] as isize,
                        q[1] as isize - p[1] as isize,
                        q[2] as isize - p[2] as isize,
                    ]);
                    for a in 0..dim {
                        let row = &ke[(lp * dim + a) * nd..];
                        for b in 0..dim {
                            block[a * width + s * dim + b] += scale * row[lq * dim + b];
                        }
                    }
                }
            }
            for a in 0..dim {
                let row = &mut block[a * width..(a + 1) * width];
                if self.fixed[v * dim + a] {
                    row.iter_mut().for_each(|x| *x = 0.0);
                    row[(ns / 2) * dim + a] = 1.0;
                    continue;
                }
                for s in 0..ns {
                    let w = self.nbr[v * ns + s] as usize;
                    for b in 0..dim {
                        if self.fixed[w * dim + b] {
                            row[s * dim + b] = 0.0;
                        }
                    }
                }
            }
        });
        Stencil { values }
    }

    fn matvec(&self, m: &Stencil, x: &[f64], y: &mut [f64]) {
        let dim = self.dim();
        let ns = 3usize.pow(dim as u32);
        let width = self.slots();
        par::for_each_chunk_mut(y, dim, |v, yv| {
            let nbr = &self.nbr[v * ns..(v + 1) * ns];
            for (a, out) in yv.iter_mut().enumerate() {
                let row = &m.values[(v * dim + a) * width..(v * dim + a + 1) * width];
                let mut acc = 0.0;
                for (s, &w) in nbr.iter().enumerate() {
                    let xw = &x[w as usize * dim..w as usize * dim + dim];
                    for b in 0..dim {
                        acc += row[s * dim + b] * xw[b];
                    }
                }
                *out = acc;
            }
        });
    }

    fn diagonal(&self, m: &Stencil) -> Vec<f64> {
        let dim = self.dim();
        let centre = 3usize.pow(dim as u32) / 2;
        let width = self.slots();
        (0..self.n())
            .map(|r| m.values[r * width + centre * dim + r % dim])
            .collect()
    }
}

/// Geometry of the level hierarchy and the interpolation-weighted products
/// of the fine element matrix, built once per model.
#[derive(Debug)]
pub struct Hierarchy {
    levels: Vec<Level>,
    nd: usize,
    /// `P_c^T K0 P_c` for every child position `c` of a coarse element.
    child_products: Vec<Vec<f64>>,
    /// Interpolation from child corners to coarse corners, per child.
    child_interp: Vec<Vec<f64>>,
    coarse_symbolic: SymbolicCholesky<usize>,
    coarse_col_ptr: Vec<usize>,
    coarse_row_idx: Vec<usize>,
    /// Stencil index of every stored lower entry of the coarsest matrix.
    coarse_src: Vec<usize>,
}

impl Hierarchy {
    /// Builds the hierarchy, or `None` when the grid cannot be coarsened.
    pub fn new(shape: &GridShape, fixed_nodes: &[usize], k0: &[f64]) -> Result<Option<Self>> {
        Self::with_coarsest(shape, fixed_nodes, k0, COARSEST_DOFS)
    }

    fn with_coarsest(shape: &GridShape, fixed_nodes: &[usize], k0: &[f64], coarsest: usize) -> Result<Option<Self>> {
        let dim = shape.dim();
        let mut fixed = vec![false; shape.n_dofs()];
        for &v in fixed_nodes {
            for a in 0..dim {
                fixed[v * dim + a] = true;
            }
        }
        let mut levels = vec![Level::new(*shape, fixed)];
        while levels.last().unwrap().n() > coarsest {
            let fine = levels.last().unwrap();
            let Some(cs) = coarsen(&fine.shape) else { break };
            let cfixed: Vec<bool> = (0..cs.n_dofs())
                .map(|d| {
                    let [i, j, k] = cs.node_ijk(d / dim);
                    fine.fixed[fine.shape.node_id(2 * i, 2 * j, 2 * k) * dim + d % dim]
                })
                .collect();
            levels.push(Level::new(cs, cfixed));
        }
        if levels.len() < 2 {
            return Ok(None);
        }
        let npe = shape.nodes_per_element();
        let nd = npe * dim;
        let e0 = shape.element_nodes(0);
        let offsets: Vec<[usize; 3]> = e0[..npe].iter().map(|&v| shape.node_ijk(v)).collect();
        let children = 1usize << dim;
        let mut child_interp = Vec::with_capacity(children);
        let mut child_products = Vec::with_capacity(children);
        for c in 0..children {
            let d = [c & 1, (c >> 1) & 1, (c >> 2) & 1];
            let mut p = vec![0.0; npe * npe];
            for (q, oq) in offsets.iter().enumerate() {
                for (r, or) in offsets.iter().enumerate() {
                    p[q * npe + r] = (0..dim).map(|a| weight(d[a] + oq[a], or[a])).product();
                }
            }
            child_products.push(galerkin(k0, &p, npe, dim));
            child_interp.push(p);
        }
        let coarsest = levels.last().unwrap();
        let (coarse_col_ptr, coarse_row_idx, coarse_src) = lower_pattern(coarsest);
        let n = coarsest.n();
        let symbolic = factorize_symbolic_cholesky(
            SymbolicSparseColMatRef::new_checked(n, n, &coarse_col_ptr, None, &coarse_row_idx),
            Side::Lower,
            SymmetricOrdering::Amd,
            CholeskySymbolicParams::default(),
        )
        .map_err(|e| Error::Solve { stage: None, reason: format!("coarse symbolic factorization failed: {e:?}") })?;
        log::debug!(
            "multigrid: {} levels, DOFs {:?}",
            levels.len(),
            levels.iter().map(|l| l.n()).collect::<Vec<_>>()
        );
        Ok(Some(Self {
            levels,
            nd,
            child_products,
            child_interp,
            coarse_symbolic: symbolic,
            coarse_col_ptr,
            coarse_row_idx,
            coarse_src,
        }))
    }

    /// DOFs per level, finest first.
    pub fn level_dofs(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.n()).collect()
    }

    /// Approximate bytes of one stage operator.
    pub fn operator_bytes(&self) -> usize {
        let stencils: usize = self.levels.iter().map(|l| l.n() * (l.slots() + 1) * 8).sum();
        stencils + self.coarse_symbolic.len_val() * 8
    }

    fn child_element(fine: &GridShape, coarse: &GridShape, e: usize, c: usize) -> usize {
        let [i, j, k] = coarse.element_ijk(e);
        let kk = if coarse.dim() == 3 { 2 * k + ((c >> 2) & 1) } else { 0 };
        fine.element_id(2 * i + (c & 1), 2 * j + ((c >> 1) & 1), kk)
    }

    /// Stage operator for per-element stiffness factors `scale` applied to
    /// the fine element matrix `k0`.
    pub fn operator(&self, k0: &[f64], scale: &[f64]) -> Result<MgOperator> {
        let nd = self.nd;
        let dim = self.levels[0].dim();
        let children = 1usize << dim;
        let mut mats = Vec::with_capacity(self.levels.len());
        mats.push(self.levels[0].assemble(k0, Some(scale), nd));
        let mut elements: Vec<f64> = Vec::new();
        for l in 1..self.levels.len() {
            let coarse = &self.levels[l].shape;
            let fine = &self.levels[l - 1].shape;
            let nel = coarse.n_elements();
            let next: Vec<f64> = if l == 1 {
                let mut out = vec![0.0; nel * nd * nd];
                par::for_each_chunk_mut(&mut out, nd * nd, |e, m| {
                    for c in 0..children {
                        let s = scale[Self::child_element(fine, coarse, e, c)];
                        if s != 0.0 {
                            m.iter_mut().zip(&self.child_products[c]).for_each(|(a, b)| *a += s * b);
                        }
                    }
                });
                out
            } else {
                let npe = coarse.nodes_per_element();
                let mut out = vec![0.0; nel * nd * nd];
                let prev = &elements;
                par::for_each_chunk_mut(&mut out, nd * nd, |e, m| {
                    for c in 0..children {
                        let f = Self::child_element(fine, coarse, e, c);
                        let g = galerkin(&prev[f * nd * nd..(f + 1) * nd * nd], &self.child_interp[c], npe, dim);
                        m.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                    }
                });
                out
            };
            elements = next;
            mats.push(self.levels[l].assemble(&elements, None, nd));
        }
        let inv_diag: Vec<Vec<f64>> = self
            .levels
            .iter()
            .zip(&mats)
            .map(|(lv, m)| lv.diagonal(m).into_iter().map(|d| 1.0 / d).collect())
            .collect();
        let coarse = mats.last().unwrap();
        let lower: Vec<f64> = self.coarse_src.iter().map(|&k| coarse.values[k]).collect();
        let n = self.levels.last().unwrap().n();
        let a = SparseColMatRef::new(
            SymbolicSparseColMatRef::new_checked(n, n, &self.coarse_col_ptr, None, &self.coarse_row_idx),
            &lower,
        );
        let mut l = vec![0.0; self.coarse_symbolic.len_val()];
        let mut buf =
            MemBuffer::new(self.coarse_symbolic.factorize_numeric_llt_scratch::<f64>(Par::Seq, Default::default()));
        self.coarse_symbolic
            .factorize_numeric_llt(
                &mut l,
                a,
                Side::Lower,
                LltRegularization::default(),
                Par::Seq,
                MemStack::new(&mut buf),
                Default::default(),
            )
            .map_err(|e| Error::Solve { stage: None, reason: format!("coarse operator not positive definite: {e:?}") })?;
        Ok(MgOperator { mats, inv_diag, coarse_factor: l })
    }

    fn prolong(&self, l: usize, coarse: &[f64], fine: &mut [f64]) {
        let fl = &self.levels[l];
        let cs = self.levels[l + 1].shape;
        let dim = fl.dim();
        par::for_each_chunk_mut(fine, dim, |v, out| {
            let p = fl.shape.node_ijk(v);
            out.iter_mut().for_each(|x| *x = 0.0);
            let parents = |i: usize| -> [(usize, f64); 2] {
                if i % 2 == 0 {
                    [(i / 2, 1.0), (i / 2, 0.0)]
                } else {
                    [((i - 1) / 2, 0.5), (i.div_ceil(2), 0.5)]
                }
            };
            let (px, py) = (parents(p[0]), parents(p[1]));
            let pz = if dim == 3 { parents(p[2]) } else { [(0, 1.0), (0, 0.0)] };
            for &(k, wz) in &pz {
                for &(j, wy) in &py {
                    for &(i, wx) in &px {
                        let w = wx * wy * wz;
                        if w == 0.0 {
                            continue;
                        }
                        let c = cs.node_id(i, j, k);
                        for a in 0..dim {
                            out[a] += w * coarse[c * dim + a];
                        }
                    }
                }
            }
            for a in 0..dim {
                if fl.fixed[v * dim + a] {
                    out[a] = 0.0;
                }
            }
        });
    }

    fn restrict(&self, l: usize, fine: &[f64], coarse: &mut [f64]) {
        let fl = &self.levels[l];
        let cl = &self.levels[l + 1];
        let dim = fl.dim();
        let nn = node_extents(&fl.shape);
        par::for_each_chunk_mut(coarse, dim, |c, out| {
            let p = cl.shape.node_ijk(c);
            out.iter_mut().for_each(|x| *x = 0.0);
            let kr: &[isize] = if dim == 3 { &[-1, 0, 1] } else { &[0] };
            for &dk in kr {
                for dj in -1isize..=1 {
                    for di in -1isize..=1 {
                        let q = [2 * p[0] as isize + di, 2 * p[1] as isize + dj, 2 * p[2] as isize + dk];
                        if (0..3).any(|a| q[a] < 0 || q[a] as usize >= nn[a]) {
                            continue;
                        }
                        let w = [di, dj, dk].iter().map(|&d| if d == 0 { 1.0 } else { 0.5 }).product::<f64>();
                        let v = fl.shape.node_id(q[0] as usize, q[1] as usize, q[2] as usize);
                        for a in 0..dim {
                            if !fl.fixed[v * dim + a] {
                                out[a] += w * fine[v * dim + a];
                            }
                        }
                    }
                }
            }
            for a in 0..dim {
                if cl.fixed[c * dim + a] {
                    out[a] = 0.0;
                }
            }
        });
    }

    fn coarse_solve(&self, op: &MgOperator, b: &mut [f64]) {
        let llt = LltRef::<'_, usize, f64>::new(&self.coarse_symbolic, &op.coarse_factor);
        let mut buf = MemBuffer::new(self.coarse_symbolic.solve_in_place_scratch::<f64>(1, Par::Seq));
        let n = b.len();
        llt.solve_in_place_with_conj(Conj::No, MatMut::from_column_major_slice_mut(b, n, 1), Par::Seq, MemStack::new(&mut buf));
    }

    fn smooth(&self, op: &MgOperator, l: usize, b: &[f64], x: &mut [f64], work: &mut [f64]) {
        let lv = &self.levels[l];
        for _ in 0..SMOOTHING_STEPS {
            lv.matvec(&op.mats[l], x, work);
            let inv = &op.inv_diag[l];
            par::zip_for_each(x, work, |i, xi, ax| *xi += JACOBI_WEIGHT * inv[i] * (b[i] - *ax));
        }
    }

    /// One V-cycle from a zero initial guess.
    fn vcycle(&self, op: &MgOperator, l: usize, b: &[f64]) -> Vec<f64> {
        if l + 1 == self.levels.len() {
            let mut x = b.to_vec();
            self.coarse_solve(op, &mut x);
            return x;
        }
        let lv = &self.levels[l];
        let n = lv.n();
        let mut x = vec![0.0; n];
        let mut work = vec![0.0; n];
        self.smooth(op, l, b, &mut x, &mut work);
        lv.matvec(&op.mats[l], &x, &mut work);
        par::for_each_mut(&mut work, |i, r| *r = b[i] - *r);
        let mut rc = vec![0.0; self.levels[l + 1].n()];
        self.restrict(l, &work, &mut rc);
        let xc = self.vcycle(op, l + 1, &rc);
        self.prolong(l, &xc, &mut work);
        par::zip_for_each(&mut x, &mut work, |_, xi, e| *xi += *e);
        self.smooth(op, l, b, &mut x, &mut work);
        x
    }

    /// Solves `A x = b` on the finest level (full DOF numbering, zero fixed
    /// entries) with multigrid-preconditioned conjugate gradients.
    pub fn solve(&self, op: &MgOperator, b: &[f64], tolerance: f64, max_iterations: usize) -> Result<(Vec<f64>, usize)> {
        let lv = &self.levels[0];
        let n = lv.n();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let bnorm = dot(b, b).sqrt();
        let mut x = vec![0.0; n];
        if bnorm == 0.0 {
            return Ok((x, 0));
        }
        let mut r = b.to_vec();
        let mut z = self.vcycle(op, 0, &r);
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz = dot(&r, &z);
        let mut rnorm = bnorm;
        for it in 1..=max_iterations {
            lv.matvec(&op.mats[0], &p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            par::zip_for_each(&mut x, &mut r, |i, xi, ri| {
                *xi += alpha * p[i];
                *ri -= alpha * ap[i];
            });
            rnorm = dot(&r, &r).sqrt();
            if rnorm <= tolerance * bnorm {
                return Ok((x, it));
            }
            if it % 50 == 0 {
                log::trace!("multigrid conjugate gradients: iteration {it}, relative residual {:.3e}", rnorm / bnorm);
            }
            z = self.vcycle(op, 0, &r);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            par::zip_for_each(&mut p, &mut z, |_, pi, zi| *pi = *zi + beta * *pi);
        }
        Err(Error::Solve {
            stage: None,
            reason: format!(
                "multigrid conjugate gradients stopped after {max_iterations} iterations at relative residual {:.3e}",
                rnorm / bnorm
            ),
        })
    }
}

/// Assembled level matrices of one stage.
#[derive(Debug)]
pub struct MgOperator {
    mats: Vec<Stencil>,
    inv_diag: Vec<Vec<f64>>,
    coarse_factor: Vec<f64>,
}

/// `(P (x) I)^T K (P (x) I)` for a corner interpolation `p` (`npe x npe`,
/// child corner by coarse corner).
fn galerkin(k: &[f64], p: &[f64], npe: usize, dim: usize) -> Vec<f64> {
    let nd = npe * dim;
    let mut t = vec![0.0; nd * nd];
    for i in 0..nd {
        for r in 0..npe {
            for b in 0..dim {
                let mut acc = 0.0;
                for q in 0..npe {
                    acc += k[i * nd + q * dim + b] * p[q * npe + r];
                }
                t[i * nd + r * dim + b] = acc;
            }
        }
    }
    let mut out = vec![0.0; nd * nd];
    for qq in 0..npe {
        for a in 0..dim {
            for j in 0..nd {
                let mut acc = 0.0;
                for q in 0..npe {
                    acc += p[q * npe + qq] * t[(q * dim + a) * nd + j];
                }
                out[(qq * dim + a) * nd + j] = acc;
            }
        }
    }
    out
}

/// Lower-triangular CSC pattern of a level's stencil and the stencil index
/// of every entry.
fn lower_pattern(lv: &Level) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let dim = lv.dim();
    let ns = 3usize.pow(dim as u32);
    let width = lv.slots();
    let nn = node_extents(&lv.shape);
    let mut col_ptr = vec![0];
    let mut row_idx = Vec::new();
    let mut src = Vec::new();
    for c in 0..lv.n() {
        let v = c / dim;
        let mut entries = Vec::with_capacity(width);
        for s in 0..ns {
            let Some(w) = lv.neighbour(v, s, &nn) else { continue };
            for b in 0..dim {
                let r = w * dim + b;
                if r >= c {
                    entries.push((r, c * width + s * dim + b));
                }
            }
        }
        entries.sort_unstable();
        for (r, k) in entries {
            row_idx.push(r);
            src.push(k);
        }
        col_ptr.push(row_idx.len());
    }
    (col_ptr, row_idx, src)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{FemModel, Material, SolverKind, SolverOptions};
    use crate::grid::{build_preset, Preset};

    fn k0(dim: usize) -> Vec<f64> {
        let g = build_preset(if dim == 2 { &Preset::Rectangle } else { &Preset::Box3d }, &vec![2; dim], None).unwrap();
        let m = FemModel::new(&g, &Material::default(), SolverOptions { kind: SolverKind::Direct, ..Default::default() }).unwrap();
        m.kernel().stiffness().to_vec()
    }

    #[test]
    fn coarse_element_of_uniform_children_is_the_coarse_stiffness() {
        // Q1 stiffness is scale invariant in 2D and doubles with size in 3D
        for dim in [2, 3] {
            let k = k0(dim);
            let shape = if dim == 2 { GridShape::planar(2, 2) } else { GridShape::solid(2, 2, 2) };
            let h = Hierarchy::new(&shape, &[], &k).unwrap();
            assert!(h.is_none(), "tiny grids stay single level");
            let npe = 1 << dim;
            let nd = npe * dim;
            let e0 = shape.element_nodes(0);
            let offsets: Vec<[usize; 3]> = e0[..npe].iter().map(|&v| shape.node_ijk(v)).collect();
            let mut sum = vec![0.0; nd * nd];
            for c in 0..npe {
                let d = [c & 1, (c >> 1) & 1, (c >> 2) & 1];
                let mut p = vec![0.0; npe * npe];
                for (q, oq) in offsets.iter().enumerate() {
                    for (r, or) in offsets.iter().enumerate() {
                        p[q * npe + r] = (0..dim).map(|a| weight(d[a] + oq[a], or[a])).product();
                    }
                }
                let g = galerkin(&k, &p, npe, dim);
                sum.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            }
            let factor = if dim == 2 { 1.0 } else { 2.0 };
            for (a, b) in sum.iter().zip(&k) {
                assert!((a - factor * b).abs() < 1e-12, "{dim}D: {a} vs {}", factor * b);
            }
        }
    }
}
