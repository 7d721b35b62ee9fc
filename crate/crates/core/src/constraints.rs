//! Continuity and layer-volume constraints on per-element times.

use crate::error::{Error, Result};
use crate::grid::DomainGrid;
use crate::projection::StageDensities;

/// Neighbourhood averaging operator for the continuity constraint.
#[derive(Clone, Debug)]
pub struct Continuity {
    n_elements: usize,
    /// Constrained elements (active, not in the start region).
    members: Vec<usize>,
    nbr_ptr: Vec<usize>,
    nbr: Vec<usize>,
}

impl Continuity {
    /// Neighbours share at least a corner; inactive elements are left out of
    /// the neighbourhoods unless `include_inactive` is set.
    pub fn new(grid: &DomainGrid, include_inactive: bool) -> Result<Self> {
        let shape = grid.shape();
        let mut is_start = vec![false; shape.n_elements()];
        for &e in grid.start_elements() {
            is_start[e] = true;
        }
        let members: Vec<usize> = grid.active_elements().filter(|&e| !is_start[e]).collect();
        let mut nbr_ptr = vec![0];
        let mut nbr = Vec::new();
        let mut buf = Vec::new();
        for &e in &members {
            shape.element_neighbors(e, &mut buf);
            let before = nbr.len();
            nbr.extend(buf.iter().copied().filter(|&f| include_inactive || grid.is_active(f)));
            if nbr.len() == before {
                return Err(Error::IsolatedElement { element: e });
            }
            nbr_ptr.push(nbr.len());
        }
        Ok(Self {
            n_elements: shape.n_elements(),
            members,
            nbr_ptr,
            nbr,
        })
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn neighbors(&self, k: usize) -> &[usize] {
        &self.nbr[self.nbr_ptr[k]..self.nbr_ptr[k + 1]]
    }

    fn residual(&self, t: &[f64], k: usize) -> f64 {
        let nb = self.neighbors(k);
        let te = t[self.members[k]];
        // differences first, so uniform fields give exactly zero
        -nb.iter().map(|&i| t[i] - te).sum::<f64>() / nb.len() as f64
    }

    /// `g0 = mean over members of (t_e - neighbourhood mean)^2` and its
    /// gradient with respect to every element time.
    pub fn evaluate(&self, t: &[f64]) -> (f64, Vec<f64>) {
        let m = self.members.len() as f64;
        let mut g = 0.0;
        let mut grad = vec![0.0; self.n_elements];
        for (k, &e) in self.members.iter().enumerate() {
            let r = self.residual(t, k);
            g += r * r;
            let nb = self.neighbors(k);
            let w = 2.0 * r / m;
            grad[e] += w;
            let wn = w / nb.len() as f64;
            for &i in nb {
                grad[i] -= wn;
            }
        }
        (g / m, grad)
    }

    /// Members violating `min(nbrs) <= t_e <= max(nbrs)` by more than `tol`.
    /// Maxima on the component contour are allowed.
    pub fn verify_min_max(&self, grid: &DomainGrid, t: &[f64], tol: f64) -> Vec<MinMaxViolation> {
        let shape = grid.shape();
        let full = if grid.dim() == 2 { 8 } else { 26 };
        let mut buf = Vec::new();
        let mut out = Vec::new();
        for (k, &e) in self.members.iter().enumerate() {
            let nb = self.neighbors(k);
            let lo = nb.iter().map(|&i| t[i]).fold(f64::INFINITY, f64::min);
            let hi = nb.iter().map(|&i| t[i]).fold(f64::NEG_INFINITY, f64::max);
            if t[e] < lo - tol {
                out.push(MinMaxViolation { element: e, kind: ExtremumKind::IsolatedPatch });
            } else if t[e] > hi + tol {
                shape.element_neighbors(e, &mut buf);
                let interior = buf.len() == full && buf.iter().all(|&f| grid.is_active(f));
                if interior {
                    out.push(MinMaxViolation { element: e, kind: ExtremumKind::EnclosedVoid });
                }
            }
        }
        out
    }
}

/// Kind of local extremum in the time field.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExtremumKind {
    /// Local minimum: deposited before all its neighbours.
    IsolatedPatch,
    /// Interior local maximum: deposited after all its neighbours.
    EnclosedVoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MinMaxViolation {
    pub element: usize,
    pub kind: ExtremumKind,
}

/// Layer volume constraints `g_j = V_j / V* - j / N` and their gradients
/// with respect to element times (`grads[j - 1]`).
pub fn layer_volumes(densities: &StageDensities, grid: &DomainGrid) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = densities.layers();
    let vstar = grid.n_active() as f64;
    let mut values = Vec::with_capacity(n);
    let mut grads = Vec::with_capacity(n);
    for j in 1..=n {
        let v: f64 = grid.active_elements().map(|e| densities.rho(j)[e]).sum();
        values.push(v / vstar - j as f64 / n as f64);
        grads.push(densities.rho_derivative(j).iter().map(|d| d / vstar).collect());
    }
    (values, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_preset, init_time_field, GridShape, Preset};
    use crate::projection::{stage_densities, ProjectionParams};

    #[test]
    fn uniform_field_is_continuous() {
        let g = build_preset(&Preset::LShape2d, &[8, 6], None).unwrap();
        let c = Continuity::new(&g, false).unwrap();
        let t = vec![0.4; 48];
        assert_eq!(c.evaluate(&t).0, 0.0);
        assert!(c.verify_min_max(&g, &t, 1e-3).is_empty());
    }

    #[test]
    fn spike_value_and_gradient() {
        let g = build_preset(&Preset::Rectangle, &[5, 5], None).unwrap();
        let c = Continuity::new(&g, false).unwrap();
        let mut t = vec![0.0; 25];
        t[12] = 1.0;
        // oracle: members are the 20 non-bottom elements; residuals are 1 at
        // the spike and -1/|N_e| at each of its 8 neighbours
        let mut expect = 1.0;
        for e in [6, 7, 8, 11, 13, 16, 17, 18] {
            let [i, j, _] = g.shape().element_ijk(e);
            let ni = (if i == 0 || i == 4 { 2 } else { 3 }) * (if j == 0 || j == 4 { 2 } else { 3 }) - 1;
            expect += 1.0 / (ni * ni) as f64;
        }
        let (g0, grad) = c.evaluate(&t);
        assert!((g0 - expect / 20.0).abs() < 1e-15);
        let h = 1e-6;
        for e in 0..25 {
            let mut tp = t.clone();
            tp[e] += h;
            let mut tm = t.clone();
            tm[e] -= h;
            let fd = (c.evaluate(&tp).0 - c.evaluate(&tm).0) / (2.0 * h);
            assert!((fd - grad[e]).abs() < 1e-6 * fd.abs().max(1e-6));
        }
        let v = c.verify_min_max(&g, &t, 1e-3);
        assert_eq!(v, vec![MinMaxViolation { element: 12, kind: ExtremumKind::EnclosedVoid }]);
    }

    #[test]
    fn isolated_element_error() {
        let mut mask = vec![false; 9];
        mask[0] = true;
        let g = DomainGrid::new(GridShape::planar(3, 3), mask, vec![0, 1], vec![0]).unwrap();
        assert!(Continuity::new(&g, false).unwrap().members().is_empty());
    }

    #[test]
    fn planar_bands_have_small_volume_error() {
        let g = build_preset(&Preset::Rectangle, &[6, 8], None).unwrap();
        let t = init_time_field(&g).unwrap();
        for beta in [30.0, 100.0] {
            let sd = stage_densities(t.values(), &g, &ProjectionParams::new(4, beta));
            let (vals, _) = layer_volumes(&sd, &g);
            assert!(vals.iter().all(|v| v.abs() < 0.1));
            assert_eq!(vals[3], 0.0);
        }
        let sd = stage_densities(&vec![0.0; 48], &g, &ProjectionParams::new(4, 30.0));
        let (vals, _) = layer_volumes(&sd, &g);
        for (j, v) in vals.iter().enumerate().take(3) {
            assert!((v - (1.0 - (j + 1) as f64 / 4.0)).abs() < 1e-9);
        }
    }
}
