//! Pseudo-time fields on elements or nodes, and the mapping between a field
//! and the optimizer's design vector.

use crate::error::{Error, Result};
use crate::grid::{DomainGrid, GridShape};
use serde::{Deserialize, Serialize};

/// Where time values live.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldMode {
    /// One value per element; used with isotropic inherent strain.
    #[default]
    Element,
    /// One value per node; needed for gradient-aligned anisotropic strain.
    Node,
}

/// Normalized fabrication time over the full grid (inactive entries are
/// ignored and kept at zero).
#[derive(Clone, Debug, PartialEq)]
pub struct TimeField {
    mode: FieldMode,
    values: Vec<f64>,
}

impl TimeField {
    pub fn new(mode: FieldMode, values: Vec<f64>) -> Self {
        Self { mode, values }
    }

    pub fn mode(&self) -> FieldMode {
        self.mode
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Checks length, range and pinning against `grid`.
    pub fn validate(&self, grid: &DomainGrid) -> Result<()> {
        let layout = FieldLayout::new(grid, self.mode);
        if self.values.len() != layout.n_total() {
            return Err(Error::InvalidField(format!(
                "{} values for a {:?} field on a grid that needs {}",
                self.values.len(),
                self.mode,
                layout.n_total()
            )));
        }
        for &i in layout.free().iter().chain(layout.pinned()) {
            let v = self.values[i];
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidField(format!("value {v} at {i} outside [0, 1]")));
            }
        }
        if let Some(&i) = layout.pinned().iter().find(|&&i| self.values[i] != 0.0) {
            return Err(Error::InvalidField(format!(
                "start-region entry {i} must be 0, found {}",
                self.values[i]
            )));
        }
        Ok(())
    }

    /// Per-element time seen by the projection: the element's own value, or
    /// the centroid interpolant of its corner values in node mode.
    pub fn element_times(&self, shape: &GridShape) -> Vec<f64> {
        match self.mode {
            FieldMode::Element => self.values.clone(),
            FieldMode::Node => (0..shape.n_elements())
                .map(|e| centroid_value(shape, &self.values, e))
                .collect(),
        }
    }
}

/// Partition of field entries into optimized (free) and pinned entries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldLayout {
    mode: FieldMode,
    n_total: usize,
    free: Vec<usize>,
    pinned: Vec<usize>,
}

impl FieldLayout {
    /// Free entries are active elements (or nodes of active elements) not in
    /// the start region.
    pub fn new(grid: &DomainGrid, mode: FieldMode) -> Self {
        let shape = grid.shape();
        let (n_total, active, pinned) = match mode {
            FieldMode::Element => (
                shape.n_elements(),
                grid.active_mask().to_vec(),
                grid.start_elements().to_vec(),
            ),
            FieldMode::Node => (shape.n_nodes(), grid.active_nodes(), grid.start_nodes()),
        };
        let mut is_pinned = vec![false; n_total];
        for &p in &pinned {
            is_pinned[p] = true;
        }
        let free = (0..n_total).filter(|&i| active[i] && !is_pinned[i]).collect();
        Self {
            mode,
            n_total,
            free,
            pinned,
        }
    }

    pub fn mode(&self) -> FieldMode {
        self.mode
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    /// Number of design variables.
    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn pinned(&self) -> &[usize] {
        &self.pinned
    }

    pub fn gather(&self, field: &TimeField) -> Vec<f64> {
        self.free.iter().map(|&i| field.values[i]).collect()
    }

    /// Gathers a full-length per-entry gradient into design-vector order.
    pub fn gather_slice(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| full[i]).collect()
    }

    pub fn scatter(&self, x: &[f64], field: &mut TimeField) {
        for (&i, &v) in self.free.iter().zip(x) {
            field.values[i] = v;
        }
        for &p in &self.pinned {
            field.values[p] = 0.0;
        }
    }
}

/// Value of the multilinear interpolant at the element centroid, i.e. the
/// mean of the corner values.
pub fn centroid_value(shape: &GridShape, nodal: &[f64], e: usize) -> f64 {
    let npe = shape.nodes_per_element();
    let nodes = shape.element_nodes(e);
    nodes[..npe].iter().map(|&v| nodal[v]).sum::<f64>() / npe as f64
}

/// Weights `w` such that the centroid gradient along axis `a` is
/// `sum_k w[a][k] * t[node_k]` for the local node order of
/// [`GridShape::element_nodes`].
pub fn centroid_gradient_weights(dim: usize) -> [[f64; 8]; 3] {
    let mut w = [[0.0; 8]; 3];
    // local corner offsets
    let corners: [[f64; 3]; 8] = [
        [0., 0., 0.],
        [1., 0., 0.],
        [1., 1., 0.],
        [0., 1., 0.],
        [0., 0., 1.],
        [1., 0., 1.],
        [1., 1., 1.],
        [0., 1., 1.],
    ];
    let npe = 1 << dim;
    let scale = 2.0 / npe as f64;
    for a in 0..dim {
        for k in 0..npe {
            // d/dx_a of the multilinear shape function at the centre
            w[a][k] = if corners[k][a] == 1.0 { scale } else { -scale };
        }
    }
    w
}

/// Gradient of the multilinear interpolant at the element centroid.
pub fn centroid_gradient(shape: &GridShape, nodal: &[f64], e: usize) -> [f64; 3] {
    let dim = shape.dim();
    let w = centroid_gradient_weights(dim);
    let nodes = shape.element_nodes(e);
    let mut g = [0.0; 3];
    let npe = 1 << dim;
    for a in 0..dim {
        // separate positive and negative sums so constant fields cancel exactly
        let (mut hi, mut lo) = (0.0, 0.0);
        for k in 0..npe {
            if w[a][k] > 0.0 {
                hi += nodal[nodes[k]];
            } else {
                lo += nodal[nodes[k]];
            }
        }
        g[a] = (hi - lo) * (2.0 / npe as f64);
    }
    g
}
