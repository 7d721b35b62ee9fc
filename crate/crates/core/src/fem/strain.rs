//! Gradient-aligned frames for anisotropic inherent strain (2D).

/// Gradients shorter than this fall back to the global frame.
pub const DEGENERATE_GRADIENT: f64 = 1e-9;

/// Rotated strain and its sensitivity to the time gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotatedStrain {
    /// Global Voigt strain `[xx, yy, xy]` (engineering shear).
    pub global: [f64; 3],
    /// `d global[r] / d grad[c]`.
    pub jacobian: [[f64; 2]; 3],
    /// True when the gradient was too short and the global frame was used.
    pub degenerate: bool,
}

/// Voigt components of `ex a a^T + ey n n^T + (g/2)(a n^T + n a^T)`, with
/// `a = (n_y, -n_x)`, as functions of the unit normal `n`.
fn voigt_from_normal(local: [f64; 3], n: [f64; 2]) -> [f64; 3] {
    let [ex, ey, g] = local;
    let a = [n[1], -n[0]];
    let t = |i: usize, j: usize| {
        ex * a[i] * a[j] + ey * n[i] * n[j] + 0.5 * g * (a[i] * n[j] + n[i] * a[j])
    };
    [t(0, 0), t(1, 1), 2.0 * t(0, 1)]
}

/// `d voigt / d n` at fixed local strain.
fn voigt_normal_derivative(local: [f64; 3], n: [f64; 2]) -> [[f64; 2]; 3] {
    let [ex, ey, g] = local;
    let (nx, ny) = (n[0], n[1]);
    // xx = ex ny^2 + ey nx^2 + g nx ny
    // yy = ex nx^2 + ey ny^2 - g nx ny
    // xy = 2 (-ex nx ny + ey nx ny + g (ny^2 - nx^2) / 2)
    [
        [2.0 * ey * nx + g * ny, 2.0 * ex * ny + g * nx],
        [2.0 * ex * nx - g * ny, 2.0 * ey * ny - g * nx],
        [
            2.0 * (-ex * ny + ey * ny) - 2.0 * g * nx,
            2.0 * (-ex * nx + ey * nx) + 2.0 * g * ny,
        ],
    ]
}

/// Maps a strain given in the local frame (x along deposition, y along the
/// time gradient) to global axes.
pub fn rotate_strain_to_global(local: [f64; 3], grad: [f64; 2]) -> RotatedStrain {
    let norm = grad[0].hypot(grad[1]);
    if norm < DEGENERATE_GRADIENT {
        return RotatedStrain {
            global: local,
            jacobian: [[0.0; 2]; 3],
            degenerate: true,
        };
    }
    let n = [grad[0] / norm, grad[1] / norm];
    let dv = voigt_normal_derivative(local, n);
    // d n / d grad = (I - n n^T) / |grad|
    let dn = [
        [(1.0 - n[0] * n[0]) / norm, -n[0] * n[1] / norm],
        [-n[0] * n[1] / norm, (1.0 - n[1] * n[1]) / norm],
    ];
    let mut jac = [[0.0; 2]; 3];
    for r in 0..3 {
        for c in 0..2 {
            jac[r][c] = dv[r][0] * dn[0][c] + dv[r][1] * dn[1][c];
        }
    }
    RotatedStrain {
        global: voigt_from_normal(local, n),
        jacobian: jac,
        degenerate: false,
    }
}
