//! Smoothed Heaviside projection of the time field into stage densities.

use crate::grid::DomainGrid;
use crate::par;
use serde::{Deserialize, Serialize};

/// Layer count and projection sharpness.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionParams {
    pub layers: usize,
    pub beta: f64,
}

impl ProjectionParams {
    pub fn new(layers: usize, beta: f64) -> Self {
        Self { layers, beta }
    }

    /// Upper time bound of layer `j` (1-based).
    #[inline]
    pub fn threshold(&self, j: usize) -> f64 {
        j as f64 / self.layers as f64
    }
}

/// Smoothed step that is 1 for `t` well below `threshold` and 0 well above,
/// with exact values 1 at `t = 0` and 0 at `t = 1`.
#[inline]
pub fn project(t: f64, threshold: f64, beta: f64) -> f64 {
    let a = (beta * threshold).tanh();
    let den = a + (beta * (1.0 - threshold)).tanh();
    1.0 - (a + (beta * (t - threshold)).tanh()) / den
}

/// Derivative of [`project`] with respect to `t`.
#[inline]
pub fn project_derivative(t: f64, threshold: f64, beta: f64) -> f64 {
    let den = (beta * threshold).tanh() + (beta * (1.0 - threshold)).tanh();
    let th = (beta * (t - threshold)).tanh();
    -beta * (1.0 - th * th) / den
}

/// `x^q` and its derivative, treating negative round-off as zero for
/// non-integer exponents.
#[inline]
pub fn penalize(x: f64, q: f64) -> (f64, f64) {
    if q == 1.0 {
        return (x, 1.0);
    }
    if q.fract() == 0.0 && q.abs() < 64.0 {
        let qi = q as i32;
        (x.powi(qi), q * x.powi(qi - 1))
    } else if x <= 0.0 {
        (0.0, 0.0)
    } else {
        (x.powf(q), q * x.powf(q - 1.0))
    }
}

/// Layer index in `1..=layers` for a hard 0-1 partition (`t = 0` falls in
/// the first layer; values on a threshold belong to the lower layer).
#[inline]
pub fn binary_layer(t: f64, layers: usize) -> usize {
    let scaled = t * layers as f64;
    // tolerate representation error right at a threshold, e.g. 0.3 * 10
    let j = (scaled - 1e-9).ceil();
    (j.max(1.0) as usize).min(layers)
}

/// Densities of every fabrication stage and their sensitivities.
///
/// Stage `j` (0..=N) holds the layers fabricated so far; `rho(0)` is empty
/// and `rho(N)` equals the component mask exactly.
#[derive(Clone, Debug)]
pub struct StageDensities {
    layers: usize,
    rho: Vec<Vec<f64>>,
    drho_dt: Vec<Vec<f64>>,
}

impl StageDensities {
    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn rho(&self, j: usize) -> &[f64] {
        &self.rho[j]
    }

    /// Derivative of `rho(j)` with respect to each element's own time.
    pub fn rho_derivative(&self, j: usize) -> &[f64] {
        &self.drho_dt[j]
    }

    /// Density increment of layer `j` (1-based).
    pub fn increment(&self, j: usize) -> Vec<f64> {
        self.rho[j]
            .iter()
            .zip(&self.rho[j - 1])
            .map(|(a, b)| a - b)
            .collect()
    }

    #[inline]
    pub fn increment_at(&self, j: usize, e: usize) -> f64 {
        self.rho[j][e] - self.rho[j - 1][e]
    }

    #[inline]
    pub fn increment_derivative_at(&self, j: usize, e: usize) -> f64 {
        self.drho_dt[j][e] - self.drho_dt[j - 1][e]
    }
}

/// Smoothed stage densities from per-element times.
pub fn stage_densities(
    element_times: &[f64],
    grid: &DomainGrid,
    params: &ProjectionParams,
) -> StageDensities {
    let n = params.layers;
    let nel = element_times.len();
    let mut rho = Vec::with_capacity(n + 1);
    let mut drho = Vec::with_capacity(n + 1);
    rho.push(vec![0.0; nel]);
    drho.push(vec![0.0; nel]);
    for j in 1..n {
        let thr = params.threshold(j);
        let mut r = vec![0.0; nel];
        let mut d = vec![0.0; nel];
        par::zip_for_each(&mut r, &mut d, |e, re, de| {
            if grid.is_active(e) {
                *re = project(element_times[e], thr, params.beta);
                *de = project_derivative(element_times[e], thr, params.beta);
            }
        });
        rho.push(r);
        drho.push(d);
    }
    rho.push(
        grid.active_mask()
            .iter()
            .map(|&a| if a { 1.0 } else { 0.0 })
            .collect(),
    );
    drho.push(vec![0.0; nel]);
    StageDensities {
        layers: n,
        rho,
        drho_dt: drho,
    }
}

/// Hard 0-1 stage densities for post-validation (zero sensitivities).
pub fn binary_stage_densities(
    element_times: &[f64],
    grid: &DomainGrid,
    layers: usize,
) -> StageDensities {
    let nel = element_times.len();
    let assignment: Vec<usize> = (0..nel)
        .map(|e| {
            if grid.is_active(e) {
                binary_layer(element_times[e], layers)
            } else {
                usize::MAX
            }
        })
        .collect();
    let rho = (0..=layers)
        .map(|j| {
            assignment
                .iter()
                .map(|&l| if l <= j { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    StageDensities {
        layers,
        rho,
        drho_dt: vec![vec![0.0; nel]; layers + 1],
    }
}

/// Sharpness continuation: start value raised by `step` every `every`
/// iterations, capped at `max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Continuation {
    pub start: f64,
    pub step: f64,
    pub every: usize,
    pub max: f64,
}

impl Default for Continuation {
    fn default() -> Self {
        Self {
            start: 30.0,
            step: 10.0,
            every: 30,
            max: 100.0,
        }
    }
}

impl Continuation {
    /// Sharpness at iteration `iter` (0-based).
    pub fn beta_at(&self, iter: usize) -> f64 {
        let raises = iter.checked_div(self.every).unwrap_or(0);
        (self.start + self.step * raises as f64).min(self.max)
    }

    /// Constant sharpness.
    pub fn fixed(beta: f64) -> Self {
        Self {
            start: beta,
            step: 0.0,
            every: 0,
            max: beta,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_preset, init_time_field, GridShape, Preset};

    #[test]
    fn projection_endpoints_and_symmetry() {
        assert_eq!(project(0.0, 0.4, 30.0), 1.0);
        assert!(project(1.0, 0.4, 30.0).abs() < 1e-15);
        for beta in [1.0, 30.0, 77.0] {
            assert!((project(0.5, 0.5, beta) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn projection_matches_high_precision_values() {
        // (t, T, beta, value, derivative) evaluated with 50-digit arithmetic
        let cases = [
            (0.2, 0.4, 100.0, 0.9999999999999999957516457, -8.49670851058315905198157e-16),
            (0.37, 0.4, 30.0, 0.85814893513190864900462, -7.303760417500843550936805),
            (0.45, 0.4, 30.0, 0.04742587317935698054205768, -2.710599583957059003294186),
            (0.5, 0.6, 50.0, 0.9999546021312975655045034, -0.004539580773595177201508934),
            (0.9, 0.2, 30.0, 5.735305862186760993917332e-19, -3.4497345543475667868799e-17),
            (0.61, 0.6, 100.0, 0.1192029220221173694341973, -20.99871708070127506133771),
        ];
        for (t, thr, b, v, d) in cases {
            assert!((project(t, thr, b) - v).abs() < 1e-14, "{t} {thr} {b}");
            assert!((project_derivative(t, thr, b) - d).abs() < 1e-12 * (1.0 + d.abs()));
        }
        assert!((project(0.2, 0.4, 100.0) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn derivative_matches_central_differences() {
        let h = 1e-6;
        for &(t, thr, b) in &[(0.3, 0.4, 30.0), (0.55, 0.5, 60.0), (0.1, 0.25, 10.0)] {
            let fd = (project(t + h, thr, b) - project(t - h, thr, b)) / (2.0 * h);
            let an = project_derivative(t, thr, b);
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3));
        }
    }

    #[test]
    fn sharp_limit_is_indicator() {
        for &t in &[0.1, 0.39, 0.41, 0.8] {
            let p = project(t, 0.4, 5000.0);
            let want = if t <= 0.4 { 1.0 } else { 0.0 };
            assert!((p - want).abs() < 1e-10);
        }
    }

    #[test]
    fn continuation_schedule() {
        let c = Continuation::default();
        assert_eq!(c.beta_at(0), 30.0);
        assert_eq!(c.beta_at(29), 30.0);
        assert_eq!(c.beta_at(30), 40.0);
        assert_eq!(c.beta_at(10_000), 100.0);
    }

    #[test]
    fn single_element_lands_in_third_of_five_layers() {
        let g = DomainGrid::new(GridShape::planar(1, 1), vec![true], vec![0, 1], vec![0]).unwrap();
        let sd = stage_densities(&[0.5], &g, &ProjectionParams::new(5, 100.0));
        for j in 1..=5 {
            let inc = sd.increment_at(j, 0);
            // oracle: direct evaluation of the smoothed step at both thresholds
            let hi = if j == 5 { 1.0 } else { project(0.5, j as f64 / 5.0, 100.0) };
            let lo = if j == 1 { 0.0 } else { project(0.5, (j - 1) as f64 / 5.0, 100.0) };
            assert_eq!(inc, hi - lo);
            if j == 3 {
                assert!(inc > 1.0 - 1e-8);
            } else {
                assert!(inc.abs() < 1e-8);
            }
        }
    }

    #[test]
    fn planar_quarter_bands() {
        let g = build_preset(&Preset::Rectangle, &[4, 8], None).unwrap();
        let t = init_time_field(&g).unwrap();
        let sd = binary_stage_densities(t.values(), &g, 4);
        for j in 1..=4 {
            let inc = sd.increment(j);
            let rows: Vec<usize> = (0..32)
                .filter(|&e| inc[e] == 1.0)
                .map(|e| g.shape().element_ijk(e)[1])
                .collect();
            assert_eq!(rows.len(), 8);
            assert!(rows.iter().all(|&r| r / 2 == j - 1));
        }
        let smooth = stage_densities(t.values(), &g, &ProjectionParams::new(4, 100.0));
        for j in 1..=4 {
            let inc = smooth.increment(j);
            let band: f64 = (0..32)
                .filter(|&e| g.shape().element_ijk(e)[1] / 2 == j - 1)
                .map(|e| inc[e])
                .sum();
            assert!(band > 0.8 * 8.0);
        }
    }

    #[test]
    fn binary_layer_edges() {
        assert_eq!(binary_layer(0.0, 5), 1);
        assert_eq!(binary_layer(0.3, 10), 3);
        assert_eq!(binary_layer(0.30001, 10), 4);
        assert_eq!(binary_layer(1.0, 7), 7);
    }

    #[test]
    fn penalize_integer_and_fractional() {
        assert_eq!(penalize(0.5, 3.0), (0.125, 0.75));
        assert_eq!(penalize(-1e-18, 2.5), (0.0, 0.0));
        let (v, d) = penalize(0.49, 2.5);
        assert!((v - 0.49f64.powf(2.5)).abs() < 1e-15 && (d - 2.5 * 0.49f64.powf(1.5)).abs() < 1e-15);
    }
}
