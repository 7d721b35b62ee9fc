//! Sparsity pattern of the reduced (free-DOF) stiffness matrix and gather
//! assembly from element scale factors.

use crate::grid::{DomainGrid, GridShape};
use crate::par;

/// Numbering of free degrees of freedom (fixed ones are eliminated).
#[derive(Clone, Debug)]
pub struct DofMap {
    reduced: Vec<usize>,
    free: Vec<usize>,
}

impl DofMap {
    pub fn new(grid: &DomainGrid) -> Self {
        let shape = grid.shape();
        let dim = shape.dim();
        let mut fixed = vec![false; shape.n_dofs()];
        for &v in grid.fixed_nodes() {
            for a in 0..dim {
                fixed[v * dim + a] = true;
            }
        }
        let mut reduced = vec![usize::MAX; shape.n_dofs()];
        let mut free = Vec::new();
        for (d, &f) in fixed.iter().enumerate() {
            if !f {
                reduced[d] = free.len();
                free.push(d);
            }
        }
        Self { reduced, free }
    }

    pub fn n_dofs(&self) -> usize {
        self.reduced.len()
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    /// Reduced index of a global DOF, `None` if fixed.
    #[inline]
    pub fn reduced(&self, dof: usize) -> Option<usize> {
        let r = self.reduced[dof];
        (r != usize::MAX).then_some(r)
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&d| full[d]).collect()
    }

    pub fn extend(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_dofs()];
        for (&d, &v) in self.free.iter().zip(reduced) {
            full[d] = v;
        }
        full
    }
}

/// Index of the local pair `(i, j)`, `i >= j`, in packed lower storage.
#[inline]
pub(crate) fn pair_index(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

/// Lower-triangular CSC pattern over free DOFs with, for every stored entry,
/// the list of element contributions in a fixed order.
#[derive(Clone, Debug)]
pub struct SystemPattern {
    dofs: DofMap,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    contrib_ptr: Vec<usize>,
    contrib_elem: Vec<u32>,
    contrib_pair: Vec<u16>,
}

impl SystemPattern {
    pub fn new(grid: &DomainGrid) -> Self {
        let shape = *grid.shape();
        let dofs = DofMap::new(grid);
        let dim = shape.dim();
        let npe = shape.nodes_per_element();
        let n = dofs.n_free();
        // per free column: sorted (row, element, pair) triples
        let columns = par::map_range(n, |c| {
            let dof = dofs.free()[c];
            let (v, a) = (dof / dim, dof % dim);
            let mut elems = Vec::with_capacity(8);
            shape.node_elements(v, &mut elems);
            let mut entries: Vec<(usize, u32, u16)> = Vec::with_capacity(elems.len() * npe * dim);
            for &e in &elems {
                let nodes = shape.element_nodes(e);
                let kv = nodes[..npe].iter().position(|&w| w == v).unwrap();
                let lc = kv * dim + a;
                for (k, &w) in nodes[..npe].iter().enumerate() {
                    for b in 0..dim {
                        let Some(r) = dofs.reduced(w * dim + b) else {
                            continue;
                        };
                        if r < c {
                            continue;
                        }
                        let lr = k * dim + b;
                        let p = pair_index(lr.max(lc), lr.min(lc));
                        entries.push((r, e as u32, p as u16));
                    }
                }
            }
            entries.sort_unstable();
            entries
        });
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut contrib_ptr = vec![0];
        let mut contrib_elem = Vec::new();
        let mut contrib_pair = Vec::new();
        col_ptr.push(0);
        for entries in columns {
            let mut last = usize::MAX;
            for (r, e, p) in entries {
                if r != last {
                    if last != usize::MAX {
                        contrib_ptr.push(contrib_elem.len());
                    }
                    row_idx.push(r);
                    last = r;
                }
                contrib_elem.push(e);
                contrib_pair.push(p);
            }
            if last != usize::MAX {
                contrib_ptr.push(contrib_elem.len());
            }
            col_ptr.push(row_idx.len());
        }
        Self {
            dofs,
            col_ptr,
            row_idx,
            contrib_ptr,
            contrib_elem,
            contrib_pair,
        }
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn n(&self) -> usize {
        self.dofs.n_free()
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    /// Stored values of `sum_e scale[e] * K0` given the packed lower triangle
    /// of the unit element matrix.
    pub fn assemble(&self, scale: &[f64], ke_lower: &[f64]) -> Vec<f64> {
        par::map_range(self.nnz(), |k| {
            let (lo, hi) = (self.contrib_ptr[k], self.contrib_ptr[k + 1]);
            let mut acc = 0.0;
            for m in lo..hi {
                acc += scale[self.contrib_elem[m] as usize] * ke_lower[self.contrib_pair[m] as usize];
            }
            acc
        })
    }

    /// `y = A x` for the symmetric matrix stored by its lower triangle.
    pub fn sym_matvec(&self, values: &[f64], x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..self.n() {
            let xc = x[c];
            let mut acc = 0.0;
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = self.row_idx[k];
                let v = values[k];
                if r == c {
                    acc += v * xc;
                } else {
                    acc += v * x[r];
                    y[r] += v * xc;
                }
            }
            y[c] += acc;
        }
    }

    /// Diagonal of the stored matrix.
    pub fn diagonal(&self, values: &[f64]) -> Vec<f64> {
        (0..self.n())
            .map(|c| values[self.col_ptr[c]])
            .collect()
    }
}

/// Scatters element vectors `f_e` (local DOF order) into a full-length
/// global vector.
pub fn scatter_element_vectors(
    shape: &GridShape,
    mut element: impl FnMut(usize, &mut [f64]) -> bool,
) -> Vec<f64> {
    let dim = shape.dim();
    let npe = shape.nodes_per_element();
    let mut out = vec![0.0; shape.n_dofs()];
    let mut fe = vec![0.0; dim * npe];
    for e in 0..shape.n_elements() {
        if !element(e, &mut fe) {
            continue;
        }
        let nodes = shape.element_nodes(e);
        for (k, &v) in nodes[..npe].iter().enumerate() {
            for a in 0..dim {
                out[v * dim + a] += fe[k * dim + a];
            }
        }
    }
    out
}

/// Element-local copy of a global vector.
#[inline]
pub fn gather_element(shape: &GridShape, e: usize, global: &[f64], out: &mut [f64]) {
    let dim = shape.dim();
    let npe = shape.nodes_per_element();
    let nodes = shape.element_nodes(e);
    for (k, &v) in nodes[..npe].iter().enumerate() {
        for a in 0..dim {
            out[k * dim + a] = global[v * dim + a];
        }
    }
}
