//! Structured voxel grids, component masks and fabrication start regions.
//!
//! Elements are unit squares (2D) or unit cubes (3D). The last axis is the
//! build direction: `y` in 2D and `z` in 3D, with the build plate at
//! coordinate 0. Elements and nodes are numbered lexicographically with `x`
//! varying fastest.

mod distance;
pub mod presets;
mod selector;

pub use distance::{init_node_time_field, init_time_field, planar_time_field};
pub use presets::{build_preset, Preset, StartRegion};
pub use selector::{resolve_nodes, NodeSelector, Side};

use crate::error::{Error, Result};
use std::collections::VecDeque;

/// Extents of a structured grid in elements.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridShape {
    dim: usize,
    n: [usize; 3],
}

impl GridShape {
    pub fn planar(nx: usize, ny: usize) -> Self {
        Self {
            dim: 2,
            n: [nx, ny, 1],
        }
    }

    pub fn solid(nx: usize, ny: usize, nz: usize) -> Self {
        Self {
            dim: 3,
            n: [nx, ny, nz],
        }
    }

    /// Builds a shape from a 2- or 3-entry extent list.
    pub fn from_extents(extents: &[usize]) -> Result<Self> {
        let shape = match *extents {
            [nx, ny] => Self::planar(nx, ny),
            [nx, ny, nz] => Self::solid(nx, ny, nz),
            _ => {
                return Err(Error::InvalidGrid(format!(
                    "expected 2 or 3 extents, got {}",
                    extents.len()
                )))
            }
        };
        if shape.extents().contains(&0) {
            return Err(Error::InvalidGrid(format!(
                "extents must be positive, got {extents:?}"
            )));
        }
        Ok(shape)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Element counts per axis (2 or 3 entries).
    pub fn extents(&self) -> &[usize] {
        &self.n[..self.dim]
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.n[0]
    }

    #[inline]
    pub fn ny(&self) -> usize {
        self.n[1]
    }

    #[inline]
    pub fn nz(&self) -> usize {
        if self.dim == 3 {
            self.n[2]
        } else {
            0
        }
    }

    /// Index of the build-direction axis.
    #[inline]
    pub fn vertical_axis(&self) -> usize {
        self.dim - 1
    }

    #[inline]
    pub fn n_elements(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        let nz = if self.dim == 3 { self.n[2] + 1 } else { 1 };
        (self.n[0] + 1) * (self.n[1] + 1) * nz
    }

    /// Nodes per element: 4 or 8.
    #[inline]
    pub fn nodes_per_element(&self) -> usize {
        1 << self.dim
    }

    #[inline]
    pub fn n_dofs(&self) -> usize {
        self.n_nodes() * self.dim
    }

    #[inline]
    pub fn element_id(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n[0] * (j + self.n[1] * k)
    }

    #[inline]
    pub fn node_id(&self, i: usize, j: usize, k: usize) -> usize {
        i + (self.n[0] + 1) * (j + (self.n[1] + 1) * k)
    }

    #[inline]
    pub fn element_ijk(&self, e: usize) -> [usize; 3] {
        let i = e % self.n[0];
        let r = e / self.n[0];
        [i, r % self.n[1], r / self.n[1]]
    }

    #[inline]
    pub fn node_ijk(&self, v: usize) -> [usize; 3] {
        let nx = self.n[0] + 1;
        let ny = self.n[1] + 1;
        let i = v % nx;
        let r = v / nx;
        [i, r % ny, r / ny]
    }

    /// Node coordinates (unit spacing, origin at the grid corner).
    pub fn node_coords(&self, v: usize) -> [f64; 3] {
        let [i, j, k] = self.node_ijk(v);
        [i as f64, j as f64, k as f64]
    }

    pub fn element_centroid(&self, e: usize) -> [f64; 3] {
        let [i, j, k] = self.element_ijk(e);
        let z = if self.dim == 3 { k as f64 + 0.5 } else { 0.0 };
        [i as f64 + 0.5, j as f64 + 0.5, z]
    }

    /// Corner nodes of element `e`; only the first
    /// [`nodes_per_element`](Self::nodes_per_element) entries are meaningful.
    ///
    /// Local order is counter-clockwise on the bottom face starting at the
    /// origin corner, followed (3D) by the top face in the same order.
    #[inline]
    pub fn element_nodes(&self, e: usize) -> [usize; 8] {
        let [i, j, k] = self.element_ijk(e);
        let n00 = self.node_id(i, j, k);
        let n10 = self.node_id(i + 1, j, k);
        let n11 = self.node_id(i + 1, j + 1, k);
        let n01 = self.node_id(i, j + 1, k);
        if self.dim == 2 {
            [n00, n10, n11, n01, 0, 0, 0, 0]
        } else {
            let up = (self.n[0] + 1) * (self.n[1] + 1);
            [n00, n10, n11, n01, n00 + up, n10 + up, n11 + up, n01 + up]
        }
    }

    /// Elements sharing at least a corner with `e` (8 in 2D, 26 in 3D when
    /// interior), excluding `e` itself.
    pub fn element_neighbors(&self, e: usize, out: &mut Vec<usize>) {
        out.clear();
        let [i, j, k] = self.element_ijk(e);
        let kr: &[isize] = if self.dim == 3 { &[-1, 0, 1] } else { &[0] };
        for &dk in kr {
            for dj in -1isize..=1 {
                for di in -1isize..=1 {
                    if di == 0 && dj == 0 && dk == 0 {
                        continue;
                    }
                    let (ii, jj, kk) = (i as isize + di, j as isize + dj, k as isize + dk);
                    if ii < 0
                        || jj < 0
                        || kk < 0
                        || ii >= self.n[0] as isize
                        || jj >= self.n[1] as isize
                        || kk >= self.n[2] as isize
                    {
                        continue;
                    }
                    out.push(self.element_id(ii as usize, jj as usize, kk as usize));
                }
            }
        }
    }

    /// Elements incident to node `v`.
    pub fn node_elements(&self, v: usize, out: &mut Vec<usize>) {
        out.clear();
        let [i, j, k] = self.node_ijk(v);
        let kr: &[usize] = if self.dim == 3 { &[0, 1] } else { &[1] };
        for &dk in kr {
            if self.dim == 3 && (k + dk == 0 || k + dk > self.n[2]) {
                continue;
            }
            for dj in 0..2 {
                if j + dj == 0 || j + dj > self.n[1] {
                    continue;
                }
                for di in 0..2 {
                    if i + di == 0 || i + di > self.n[0] {
                        continue;
                    }
                    let kk = if self.dim == 3 { k + dk - 1 } else { 0 };
                    out.push(self.element_id(i + di - 1, j + dj - 1, kk));
                }
            }
        }
    }
}

/// A structured discretization of the build volume with the component mask,
/// build-plate supports and the prescribed fabrication start region.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DomainGrid {
    shape: GridShape,
    active: Vec<bool>,
    fixed_nodes: Vec<usize>,
    start_elements: Vec<usize>,
}

impl DomainGrid {
    /// Validates and assembles a grid.
    ///
    /// Requires a non-empty fixed node set, active start elements and an
    /// active region connected through shared edges.
    pub fn new(
        shape: GridShape,
        active: Vec<bool>,
        mut fixed_nodes: Vec<usize>,
        mut start_elements: Vec<usize>,
    ) -> Result<Self> {
        if active.len() != shape.n_elements() {
            return Err(Error::InvalidGrid(format!(
                "mask has {} entries, grid has {} elements",
                active.len(),
                shape.n_elements()
            )));
        }
        fixed_nodes.sort_unstable();
        fixed_nodes.dedup();
        start_elements.sort_unstable();
        start_elements.dedup();
        if fixed_nodes.is_empty() {
            return Err(Error::InvalidGrid("no fixed nodes".into()));
        }
        if let Some(&v) = fixed_nodes.iter().find(|&&v| v >= shape.n_nodes()) {
            return Err(Error::InvalidGrid(format!("fixed node {v} out of range")));
        }
        if start_elements.is_empty() {
            return Err(Error::InvalidGrid("empty start region".into()));
        }
        for &e in &start_elements {
            if e >= active.len() || !active[e] {
                return Err(Error::InvalidGrid(format!(
                    "start element {e} is not an active element"
                )));
            }
        }
        let grid = Self {
            shape,
            active,
            fixed_nodes,
            start_elements,
        };
        grid.check_connected()?;
        Ok(grid)
    }

    fn check_connected(&self) -> Result<()> {
        let n_active = self.n_active();
        let Some(seed) = self.active.iter().position(|&a| a) else {
            return Err(Error::InvalidGrid("no active elements".into()));
        };
        let mut seen = vec![false; self.active.len()];
        let mut queue = VecDeque::from([seed]);
        seen[seed] = true;
        let mut count = 1;
        let mut nbrs = Vec::new();
        while let Some(e) = queue.pop_front() {
            self.shape.element_neighbors(e, &mut nbrs);
            let ce = self.shape.element_ijk(e);
            for &f in &nbrs {
                if seen[f] || !self.active[f] {
                    continue;
                }
                let cf = self.shape.element_ijk(f);
                let offsets = (0..3).filter(|&a| ce[a] != cf[a]).count();
                // edge-sharing: at most dim-1 differing coordinates
                if offsets < self.shape.dim() {
                    seen[f] = true;
                    count += 1;
                    queue.push_back(f);
                }
            }
        }
        if count != n_active {
            let orphan = (0..self.active.len())
                .find(|&e| self.active[e] && !seen[e])
                .unwrap_or(seed);
            return Err(Error::InvalidGrid(format!(
                "active region is not connected (element {orphan} is detached)"
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    #[inline]
    pub fn is_active(&self, e: usize) -> bool {
        self.active[e]
    }

    pub fn active_mask(&self) -> &[bool] {
        &self.active
    }

    pub fn n_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn active_elements(&self) -> impl Iterator<Item = usize> + '_ {
        self.active
            .iter()
            .enumerate()
            .filter_map(|(e, &a)| a.then_some(e))
    }

    pub fn fixed_nodes(&self) -> &[usize] {
        &self.fixed_nodes
    }

    pub fn start_elements(&self) -> &[usize] {
        &self.start_elements
    }

    /// Nodes touched by at least one active element.
    pub fn active_nodes(&self) -> Vec<bool> {
        let npe = self.shape.nodes_per_element();
        let mut out = vec![false; self.shape.n_nodes()];
        for e in self.active_elements() {
            for &v in &self.shape.element_nodes(e)[..npe] {
                out[v] = true;
            }
        }
        out
    }

    /// Nodes pinned to time zero in node mode: the bottom-face nodes of the
    /// start elements.
    pub fn start_nodes(&self) -> Vec<usize> {
        let half = self.shape.nodes_per_element() / 2;
        let mut out: Vec<usize> = self
            .start_elements
            .iter()
            .flat_map(|&e| {
                let n = self.shape.element_nodes(e);
                n.into_iter().take(half)
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Returns a copy with a different start region.
    pub fn with_start_elements(&self, start: Vec<usize>) -> Result<Self> {
        Self::new(
            self.shape,
            self.active.clone(),
            self.fixed_nodes.clone(),
            start,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbering_round_trips() {
        let s = GridShape::solid(4, 3, 2);
        for e in 0..s.n_elements() {
            let [i, j, k] = s.element_ijk(e);
            assert_eq!(s.element_id(i, j, k), e);
        }
        for v in 0..s.n_nodes() {
            let [i, j, k] = s.node_ijk(v);
            assert_eq!(s.node_id(i, j, k), v);
        }
    }

    #[test]
    fn neighbor_counts() {
        let s = GridShape::planar(5, 4);
        let mut out = Vec::new();
        s.element_neighbors(s.element_id(2, 2, 0), &mut out);
        assert_eq!(out.len(), 8);
        s.element_neighbors(0, &mut out);
        assert_eq!(out.len(), 3);
        let s3 = GridShape::solid(3, 3, 3);
        s3.element_neighbors(s3.element_id(1, 1, 1), &mut out);
        assert_eq!(out.len(), 26);
    }

    #[test]
    fn node_elements_inverse_of_element_nodes() {
        for s in [GridShape::planar(3, 2), GridShape::solid(2, 3, 2)] {
            let npe = s.nodes_per_element();
            let mut out = Vec::new();
            for v in 0..s.n_nodes() {
                s.node_elements(v, &mut out);
                for e in 0..s.n_elements() {
                    let has = s.element_nodes(e)[..npe].contains(&v);
                    assert_eq!(has, out.contains(&e), "node {v} element {e}");
                }
            }
        }
    }

    #[test]
    fn rejects_disconnected_mask() {
        let s = GridShape::planar(3, 1);
        let err = DomainGrid::new(s, vec![true, false, true], vec![0, 1], vec![0]);
        assert!(matches!(err, Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn rejects_corner_only_contact() {
        let s = GridShape::planar(2, 2);
        let mask = vec![true, false, false, true];
        assert!(DomainGrid::new(s, mask, vec![0, 1], vec![0]).is_err());
    }

    #[test]
    fn rejects_inactive_start_and_missing_supports() {
        let s = GridShape::planar(2, 1);
        assert!(DomainGrid::new(s, vec![true, false], vec![0], vec![1]).is_err());
        assert!(DomainGrid::new(s, vec![true, true], vec![], vec![0]).is_err());
    }
}
