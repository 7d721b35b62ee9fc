//! Unit-element kernels: bilinear quadrilaterals and trilinear hexahedra on
//! unit squares/cubes with 2-point Gauss quadrature per axis.

use super::PlaneModel;

/// Number of Voigt strain components for `dim`.
pub const fn voigt_len(dim: usize) -> usize {
    if dim == 2 {
        3
    } else {
        6
    }
}

const CORNERS: [[f64; 3]; 8] = [
    [0., 0., 0.],
    [1., 0., 0.],
    [1., 1., 0.],
    [0., 1., 0.],
    [0., 0., 1.],
    [1., 0., 1.],
    [1., 1., 1.],
    [0., 1., 1.],
];

/// Elasticity matrix (row-major, unit Young's modulus) in Voigt notation with
/// engineering shear strains. 2D order is `[xx, yy, xy]`; 3D order is
/// `[xx, yy, zz, yz, zx, xy]`.
pub fn elasticity_matrix(dim: usize, nu: f64, model: PlaneModel) -> Vec<f64> {
    if dim == 2 {
        let (a, b, g) = match model {
            PlaneModel::Stress => {
                let s = 1.0 / (1.0 - nu * nu);
                (s, s * nu, s * (1.0 - nu) / 2.0)
            }
            PlaneModel::Strain => {
                let s = 1.0 / ((1.0 + nu) * (1.0 - 2.0 * nu));
                (s * (1.0 - nu), s * nu, s * (1.0 - 2.0 * nu) / 2.0)
            }
        };
        vec![a, b, 0.0, b, a, 0.0, 0.0, 0.0, g]
    } else {
        let lambda = nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
        let mu = 1.0 / (2.0 * (1.0 + nu));
        let mut c = vec![0.0; 36];
        for i in 0..3 {
            for j in 0..3 {
                c[i * 6 + j] = if i == j { lambda + 2.0 * mu } else { lambda };
            }
            c[(i + 3) * 6 + i + 3] = mu;
        }
        c
    }
}

/// Strain-displacement matrix (`voigt_len(dim)` x `dim * 2^dim`, row-major)
/// of the unit element at natural coordinates `xi` in `[-1, 1]^dim`.
pub fn strain_displacement(dim: usize, xi: [f64; 3]) -> Vec<f64> {
    let npe = 1 << dim;
    let ndof = dim * npe;
    let nv = voigt_len(dim);
    let mut dn = [[0.0; 8]; 3];
    for k in 0..npe {
        let s: Vec<f64> = (0..dim).map(|a| 2.0 * CORNERS[k][a] - 1.0).collect();
        for a in 0..dim {
            let mut v = s[a] / (1 << dim) as f64;
            for b in 0..dim {
                if b != a {
                    v *= 1.0 + s[b] * xi[b];
                }
            }
            // unit element: x = (xi + 1) / 2
            dn[a][k] = 2.0 * v;
        }
    }
    let mut bm = vec![0.0; nv * ndof];
    let mut set = |r: usize, k: usize, a: usize, v: f64| bm[r * ndof + k * dim + a] = v;
    for k in 0..npe {
        if dim == 2 {
            set(0, k, 0, dn[0][k]);
            set(1, k, 1, dn[1][k]);
            set(2, k, 0, dn[1][k]);
            set(2, k, 1, dn[0][k]);
        } else {
            set(0, k, 0, dn[0][k]);
            set(1, k, 1, dn[1][k]);
            set(2, k, 2, dn[2][k]);
            set(3, k, 1, dn[2][k]);
            set(3, k, 2, dn[1][k]);
            set(4, k, 0, dn[2][k]);
            set(4, k, 2, dn[0][k]);
            set(5, k, 0, dn[1][k]);
            set(5, k, 1, dn[0][k]);
        }
    }
    bm
}

fn gauss_points(dim: usize) -> Vec<([f64; 3], f64)> {
    let g = 1.0 / 3f64.sqrt();
    let w = 1.0 / (1 << dim) as f64; // Gauss weight 1 times det J
    let mut pts = Vec::new();
    for k in 0..(1 << dim) {
        let mut xi = [0.0; 3];
        for (a, x) in xi.iter_mut().enumerate().take(dim) {
            *x = if (k >> a) & 1 == 1 { g } else { -g };
        }
        pts.push((xi, w));
    }
    pts
}

/// Precomputed unit-element matrices for one material.
#[derive(Clone, Debug)]
pub struct ElementKernel {
    dim: usize,
    ndof: usize,
    nvoigt: usize,
    ke: Vec<f64>,
    /// `ndof x nvoigt`, row-major: the integral of `B^T C`.
    btc: Vec<f64>,
}

impl ElementKernel {
    pub fn new(dim: usize, nu: f64, model: PlaneModel) -> Self {
        let ndof = dim << dim;
        let nv = voigt_len(dim);
        let c = elasticity_matrix(dim, nu, model);
        let mut ke = vec![0.0; ndof * ndof];
        let mut btc = vec![0.0; ndof * nv];
        for (xi, w) in gauss_points(dim) {
            let b = strain_displacement(dim, xi);
            let mut cb = vec![0.0; nv * ndof];
            for r in 0..nv {
                for s in 0..nv {
                    let crs = c[r * nv + s];
                    if crs != 0.0 {
                        for k in 0..ndof {
                            cb[r * ndof + k] += crs * b[s * ndof + k];
                        }
                    }
                }
            }
            for i in 0..ndof {
                for r in 0..nv {
                    let bri = b[r * ndof + i];
                    if bri == 0.0 {
                        continue;
                    }
                    for j in 0..ndof {
                        ke[i * ndof + j] += w * bri * cb[r * ndof + j];
                    }
                    for s in 0..nv {
                        btc[i * nv + s] += w * bri * c[r * nv + s];
                    }
                }
            }
        }
        // exact symmetry
        for i in 0..ndof {
            for j in 0..i {
                let v = 0.5 * (ke[i * ndof + j] + ke[j * ndof + i]);
                ke[i * ndof + j] = v;
                ke[j * ndof + i] = v;
            }
        }
        Self {
            dim,
            ndof,
            nvoigt: nv,
            ke,
            btc,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ndof(&self) -> usize {
        self.ndof
    }

    pub fn nvoigt(&self) -> usize {
        self.nvoigt
    }

    /// Row-major `ndof x ndof` stiffness of a solid unit element.
    pub fn stiffness(&self) -> &[f64] {
        &self.ke
    }

    /// Row-major `ndof x nvoigt` load operator.
    pub fn load_operator(&self) -> &[f64] {
        &self.btc
    }

    /// Equivalent nodal forces of a uniform eigenstrain.
    pub fn forces(&self, strain: &[f64]) -> Vec<f64> {
        let mut f = vec![0.0; self.ndof];
        self.forces_into(strain, &mut f);
        f
    }

    pub fn forces_into(&self, strain: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..self.nvoigt)
                .map(|s| self.btc[i * self.nvoigt + s] * strain[s])
                .sum();
        }
    }

    /// `a^T K0 b` for element vectors.
    pub fn energy(&self, a: &[f64], b: &[f64]) -> f64 {
        let n = self.ndof;
        let mut acc = 0.0;
        for i in 0..n {
            if a[i] == 0.0 {
                continue;
            }
            let row = &self.ke[i * n..(i + 1) * n];
            acc += a[i] * row.iter().zip(b).map(|(k, x)| k * x).sum::<f64>();
        }
        acc
    }
}

/// Stiffness matrix of a solid unit element with E = 1 (plane stress in 2D).
pub fn element_stiffness_unit(dim: usize, nu: f64) -> Vec<f64> {
    ElementKernel::new(dim, nu, PlaneModel::Stress).ke
}

/// Equivalent nodal forces `int B^T C eps` of a unit element with E = 1.
pub fn equivalent_forces(strain: &[f64], dim: usize, nu: f64) -> Vec<f64> {
    ElementKernel::new(dim, nu, PlaneModel::Stress).forces(strain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::Mat;

    /// Closed-form plane-stress Q4 stiffness for a unit square.
    fn closed_form_q4(nu: f64) -> Vec<f64> {
        let k = [
            0.5 - nu / 6.0,
            0.125 + nu / 8.0,
            -0.25 - nu / 12.0,
            -0.125 + 3.0 * nu / 8.0,
            -0.25 + nu / 12.0,
            -0.125 - nu / 8.0,
            nu / 6.0,
            0.125 - 3.0 * nu / 8.0,
        ];
        let idx = [
            [0, 1, 2, 3, 4, 5, 6, 7],
            [1, 0, 7, 6, 5, 4, 3, 2],
            [2, 7, 0, 5, 6, 3, 4, 1],
            [3, 6, 5, 0, 7, 2, 1, 4],
            [4, 5, 6, 7, 0, 1, 2, 3],
            [5, 4, 3, 2, 1, 0, 7, 6],
            [6, 3, 4, 1, 2, 7, 0, 5],
            [7, 2, 1, 4, 3, 6, 5, 0],
        ];
        let s = 1.0 / (1.0 - nu * nu);
        idx.iter().flatten().map(|&i| s * k[i]).collect()
    }

    /// 3-point Gauss rule per axis: an independent integration path.
    fn hex_stiffness_3pt(nu: f64) -> Vec<f64> {
        let c = elasticity_matrix(3, nu, PlaneModel::Stress);
        let pts = [-(0.6f64).sqrt(), 0.0, 0.6f64.sqrt()];
        let ws = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        let mut ke = vec![0.0; 576];
        for (i, &x) in pts.iter().enumerate() {
            for (j, &y) in pts.iter().enumerate() {
                for (k, &z) in pts.iter().enumerate() {
                    let w = ws[i] * ws[j] * ws[k] / 8.0;
                    let b = strain_displacement(3, [x, y, z]);
                    for p in 0..24 {
                        for q in 0..24 {
                            let mut v = 0.0;
                            for r in 0..6 {
                                for s in 0..6 {
                                    v += b[r * 24 + p] * c[r * 6 + s] * b[s * 24 + q];
                                }
                            }
                            ke[p * 24 + q] += w * v;
                        }
                    }
                }
            }
        }
        ke
    }

    fn zero_modes(ke: &[f64], n: usize) -> usize {
        let m = Mat::from_fn(n, n, |i, j| ke[i * n + j]);
        let ev = m.self_adjoint_eigenvalues(faer::Side::Lower).unwrap();
        let max = ev.iter().cloned().fold(0.0, f64::max);
        assert!(ev.iter().all(|&v| v > -1e-12 * max));
        ev.iter().filter(|&&v| v.abs() < 1e-10 * max).count()
    }

    #[test]
    fn q4_matches_closed_form() {
        for nu in [0.3, 0.1, 0.45] {
            let ke = element_stiffness_unit(2, nu);
            let oracle = closed_form_q4(nu);
            for (a, b) in ke.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-14, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn hex_matches_three_point_rule() {
        let ke = element_stiffness_unit(3, 0.3);
        let oracle = hex_stiffness_3pt(0.3);
        for (a, b) in ke.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn rigid_body_modes() {
        assert_eq!(zero_modes(&element_stiffness_unit(2, 0.3), 8), 3);
        assert_eq!(zero_modes(&element_stiffness_unit(3, 0.3), 24), 6);
        for dim in [2, 3] {
            let ke = element_stiffness_unit(dim, 0.25);
            let n = dim << dim;
            for a in 0..dim {
                for i in 0..n {
                    let row: f64 = (0..n).filter(|j| j % dim == a).map(|j| ke[i * n + j]).sum();
                    assert!(row.abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn shrinkage_forces_point_inward_and_balance() {
        let f = equivalent_forces(&[-0.01, -0.01, 0.0], 2, 0.3);
        let corners = [[0., 0.], [1., 0.], [1., 1.], [0., 1.]];
        let (mut fx, mut fy, mut mz) = (0.0, 0.0, 0.0);
        for k in 0..4 {
            let (x, y) = (corners[k][0] - 0.5, corners[k][1] - 0.5);
            let (px, py) = (f[2 * k], f[2 * k + 1]);
            assert!(px * x + py * y < 0.0);
            fx += px;
            fy += py;
            mz += x * py - y * px;
        }
        assert!(fx.abs() < 1e-16 && fy.abs() < 1e-16 && mz.abs() < 1e-16);
        assert!(equivalent_forces(&[0.0; 6], 3, 0.3).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uniaxial_strain_produces_uniform_shrink() {
        // the nodal displacement of a uniform strain field satisfies K u = f
        let kern = ElementKernel::new(2, 0.3, PlaneModel::Stress);
        let eps = [-0.01, 0.0, 0.0];
        let f = kern.forces(&eps);
        let u: Vec<f64> = (0..4)
            .flat_map(|k| [eps[0] * CORNERS[k][0], 0.0])
            .collect();
        for i in 0..8 {
            let ku: f64 = (0..8).map(|j| kern.stiffness()[i * 8 + j] * u[j]).sum();
            assert!((ku - f[i]).abs() < 1e-15);
        }
    }
}
