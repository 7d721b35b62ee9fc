//! Method of moving asymptotes: separable convex approximations solved by a
//! primal-dual interior point method.

use faer::prelude::Solve;
use faer::Mat;
use serde::{Deserialize, Serialize};

/// MMA tuning constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MmaParams {
    /// Initial asymptote distance as a fraction of the box.
    pub asymptote_init: f64,
    pub asymptote_increase: f64,
    pub asymptote_decrease: f64,
    /// Closest an asymptote may get to the iterate, as a fraction of the box.
    pub asymptote_min: f64,
    /// Farthest an asymptote may get from the iterate.
    pub asymptote_max: f64,
    /// Move limit as a fraction of the box.
    pub move_limit: f64,
    pub albefa: f64,
    pub raa0: f64,
    /// Cost of the artificial variables.
    pub c: f64,
}

impl Default for MmaParams {
    fn default() -> Self {
        Self {
            asymptote_init: 0.5,
            asymptote_increase: 1.2,
            asymptote_decrease: 0.7,
            asymptote_min: 3e-4,
            asymptote_max: 10.0,
            move_limit: 0.1,
            albefa: 0.1,
            raa0: 1e-5,
            c: 1000.0,
        }
    }
}

/// Iteration history and asymptotes.
#[derive(Clone, Debug)]
pub struct MmaState {
    pub params: MmaParams,
    pub iter: usize,
    pub low: Vec<f64>,
    pub upp: Vec<f64>,
    pub xold1: Vec<f64>,
    pub xold2: Vec<f64>,
    /// Number of updates where the subproblem solver failed and the
    /// previous iterate was kept.
    pub restorations: usize,
}

impl MmaState {
    pub fn new(x: &[f64], params: MmaParams) -> Self {
        Self {
            params,
            iter: 0,
            low: vec![0.0; x.len()],
            upp: vec![1.0; x.len()],
            xold1: x.to_vec(),
            xold2: x.to_vec(),
            restorations: 0,
        }
    }
}

/// Constraint values `f_i(x) <= 0` and their gradients (`dfdx[i][k]`).
pub struct Constraints<'a> {
    pub values: &'a [f64],
    pub gradients: &'a [Vec<f64>],
}

/// One MMA step for `min f0(x)` s.t. `f_i(x) <= 0`, `xmin <= x <= xmax`.
/// Returns the new iterate.
pub fn mma_update(
    state: &mut MmaState,
    x: &[f64],
    xmin: &[f64],
    xmax: &[f64],
    df0dx: &[f64],
    cons: &Constraints,
) -> Vec<f64> {
    let n = x.len();
    let m = cons.values.len();
    let pr = state.params;
    state.iter += 1;
    let k = state.iter;
    let (low, upp) = (&mut state.low, &mut state.upp);
    for j in 0..n {
        let span = xmax[j] - xmin[j];
        if k < 3 {
            low[j] = x[j] - pr.asymptote_init * span;
            upp[j] = x[j] + pr.asymptote_init * span;
        } else {
            let zzz = (x[j] - state.xold1[j]) * (state.xold1[j] - state.xold2[j]);
            let factor = if zzz > 0.0 {
                pr.asymptote_increase
            } else if zzz < 0.0 {
                pr.asymptote_decrease
            } else {
                1.0
            };
            low[j] = x[j] - factor * (state.xold1[j] - low[j]);
            upp[j] = x[j] + factor * (upp[j] - state.xold1[j]);
            low[j] = low[j]
                .max(x[j] - pr.asymptote_max * span)
                .min(x[j] - pr.asymptote_min * span);
            upp[j] = upp[j]
                .min(x[j] + pr.asymptote_max * span)
                .max(x[j] + pr.asymptote_min * span);
        }
    }
    let mut alfa = vec![0.0; n];
    let mut beta = vec![0.0; n];
    let mut p0 = vec![0.0; n];
    let mut q0 = vec![0.0; n];
    let mut pm = vec![vec![0.0; n]; m];
    let mut qm = vec![vec![0.0; n]; m];
    let mut b = vec![0.0; m];
    for j in 0..n {
        let span = xmax[j] - xmin[j];
        alfa[j] = (low[j] + pr.albefa * (x[j] - low[j]))
            .max(x[j] - pr.move_limit * span)
            .max(xmin[j]);
        beta[j] = (upp[j] - pr.albefa * (upp[j] - x[j]))
            .min(x[j] + pr.move_limit * span)
            .min(xmax[j]);
        let inv = 1.0 / span.max(1e-5);
        let ux2 = (upp[j] - x[j]).powi(2);
        let xl2 = (x[j] - low[j]).powi(2);
        let (p, q) = (df0dx[j].max(0.0), (-df0dx[j]).max(0.0));
        let pq = 0.001 * (p + q) + pr.raa0 * inv;
        p0[j] = (p + pq) * ux2;
        q0[j] = (q + pq) * xl2;
        for i in 0..m {
            let g = cons.gradients[i][j];
            let (p, q) = (g.max(0.0), (-g).max(0.0));
            let pq = 0.001 * (p + q) + pr.raa0 * inv;
            pm[i][j] = (p + pq) * ux2;
            qm[i][j] = (q + pq) * xl2;
            b[i] += pm[i][j] / (upp[j] - x[j]) + qm[i][j] / (x[j] - low[j]);
        }
    }
    for i in 0..m {
        b[i] -= cons.values[i];
    }
    let sub = Subproblem {
        n,
        m,
        low,
        upp,
        alfa: &alfa,
        beta: &beta,
        p0: &p0,
        q0: &q0,
        p: &pm,
        q: &qm,
        b: &b,
        a0: 1.0,
        c: pr.c,
        d: 1.0,
    };
    let xnew = match sub.solve() {
        Some(xn) if xn.iter().all(|v| v.is_finite()) => xn,
        _ => {
            state.restorations += 1;
            log::warn!("MMA subproblem failed at update {k}; keeping the previous iterate");
            x.to_vec()
        }
    };
    state.xold2 = std::mem::replace(&mut state.xold1, x.to_vec());
    xnew
}

/// Convex subproblem in Svanberg's form with `a = 0` and artificial
/// variables `y` (cost `c y + d y^2 / 2`).
struct Subproblem<'a> {
    n: usize,
    m: usize,
    low: &'a [f64],
    upp: &'a [f64],
    alfa: &'a [f64],
    beta: &'a [f64],
    p0: &'a [f64],
    q0: &'a [f64],
    p: &'a [Vec<f64>],
    q: &'a [Vec<f64>],
    b: &'a [f64],
    a0: f64,
    c: f64,
    d: f64,
}

#[derive(Clone)]
struct Point {
    x: Vec<f64>,
    y: Vec<f64>,
    z: f64,
    lam: Vec<f64>,
    xsi: Vec<f64>,
    eta: Vec<f64>,
    mu: Vec<f64>,
    zet: f64,
    s: Vec<f64>,
}

impl Subproblem<'_> {
    fn plam_qlam(&self, pt: &Point) -> (Vec<f64>, Vec<f64>) {
        let mut plam = self.p0.to_vec();
        let mut qlam = self.q0.to_vec();
        for i in 0..self.m {
            let l = pt.lam[i];
            for j in 0..self.n {
                plam[j] += self.p[i][j] * l;
                qlam[j] += self.q[i][j] * l;
            }
        }
        (plam, qlam)
    }

    fn gvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.m)
            .map(|i| {
                (0..self.n)
                    .map(|j| self.p[i][j] / (self.upp[j] - x[j]) + self.q[i][j] / (x[j] - self.low[j]))
                    .sum()
            })
            .collect()
    }

    /// KKT residual vector of the perturbed system.
    fn residual(&self, pt: &Point, epsi: f64) -> Vec<f64> {
        let (n, m) = (self.n, self.m);
        let (plam, qlam) = self.plam_qlam(pt);
        let gvec = self.gvec(&pt.x);
        let mut r = Vec::with_capacity(3 * n + 4 * m + 2);
        for j in 0..n {
            let ux = self.upp[j] - pt.x[j];
            let xl = pt.x[j] - self.low[j];
            r.push(plam[j] / (ux * ux) - qlam[j] / (xl * xl) - pt.xsi[j] + pt.eta[j]);
        }
        for i in 0..m {
            r.push(self.c + self.d * pt.y[i] - pt.mu[i] - pt.lam[i]);
        }
        r.push(self.a0 - pt.zet);
        for i in 0..m {
            r.push(gvec[i] - pt.y[i] + pt.s[i] - self.b[i]);
        }
        for j in 0..n {
            r.push(pt.xsi[j] * (pt.x[j] - self.alfa[j]) - epsi);
        }
        for j in 0..n {
            r.push(pt.eta[j] * (self.beta[j] - pt.x[j]) - epsi);
        }
        for i in 0..m {
            r.push(pt.mu[i] * pt.y[i] - epsi);
        }
        r.push(pt.zet * pt.z - epsi);
        for i in 0..m {
            r.push(pt.lam[i] * pt.s[i] - epsi);
        }
        r
    }

    fn solve(&self) -> Option<Vec<f64>> {
        let (n, m) = (self.n, self.m);
        let epsimin = 1e-7;
        let mut epsi = 1.0;
        let x: Vec<f64> = (0..n).map(|j| 0.5 * (self.alfa[j] + self.beta[j])).collect();
        let mut pt = Point {
            xsi: (0..n).map(|j| (1.0 / (x[j] - self.alfa[j])).max(1.0)).collect(),
            eta: (0..n).map(|j| (1.0 / (self.beta[j] - x[j])).max(1.0)).collect(),
            x,
            y: vec![1.0; m],
            z: 1.0,
            lam: vec![1.0; m],
            mu: vec![(0.5 * self.c).max(1.0); m],
            zet: 1.0,
            s: vec![1.0; m],
        };
        let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let maxabs = |r: &[f64]| r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        while epsi > epsimin {
            let r = self.residual(&pt, epsi);
            let mut residunorm = norm(&r);
            let mut residumax = maxabs(&r);
            let mut ittt = 0;
            while residumax > 0.9 * epsi && ittt < 200 {
                ittt += 1;
                let (plam, qlam) = self.plam_qlam(&pt);
                let gvec = self.gvec(&pt.x);
                let mut gg = vec![vec![0.0; n]; m];
                let mut delx = vec![0.0; n];
                let mut diagx = vec![0.0; n];
                for j in 0..n {
                    let ux1 = self.upp[j] - pt.x[j];
                    let xl1 = pt.x[j] - self.low[j];
                    let (ux2, xl2) = (ux1 * ux1, xl1 * xl1);
                    for i in 0..m {
                        gg[i][j] = self.p[i][j] / ux2 - self.q[i][j] / xl2;
                    }
                    let dpsidx = plam[j] / ux2 - qlam[j] / xl2;
                    let xa = pt.x[j] - self.alfa[j];
                    let bx = self.beta[j] - pt.x[j];
                    delx[j] = dpsidx - epsi / xa + epsi / bx;
                    diagx[j] = 2.0 * (plam[j] / (ux2 * ux1) + qlam[j] / (xl2 * xl1))
                        + pt.xsi[j] / xa
                        + pt.eta[j] / bx;
                }
                let dely: Vec<f64> = (0..m)
                    .map(|i| self.c + self.d * pt.y[i] - pt.lam[i] - epsi / pt.y[i])
                    .collect();
                let delz = self.a0 - epsi / pt.z;
                let dellam: Vec<f64> = (0..m)
                    .map(|i| gvec[i] - pt.y[i] - self.b[i] + epsi / pt.lam[i])
                    .collect();
                let diagy: Vec<f64> = (0..m).map(|i| self.d + pt.mu[i] / pt.y[i]).collect();
                let diaglamyi: Vec<f64> = (0..m).map(|i| pt.s[i] / pt.lam[i] + 1.0 / diagy[i]).collect();

                let (dx, dlam, dz) = if m < n {
                    // reduced system in (lambda, z); a = 0
                    let mut alam = Mat::<f64>::zeros(m + 1, m + 1);
                    let mut bb = Mat::<f64>::zeros(m + 1, 1);
                    for i in 0..m {
                        let mut acc = 0.0;
                        for j in 0..n {
                            acc += gg[i][j] * delx[j] / diagx[j];
                        }
                        bb[(i, 0)] = dellam[i] + dely[i] / diagy[i] - acc;
                        for l in 0..=i {
                            let mut v = 0.0;
                            for j in 0..n {
                                v += gg[i][j] * gg[l][j] / diagx[j];
                            }
                            alam[(i, l)] = v;
                            alam[(l, i)] = v;
                        }
                        alam[(i, i)] += diaglamyi[i];
                    }
                    alam[(m, m)] = -pt.zet / pt.z;
                    bb[(m, 0)] = delz;
                    let sol = alam.partial_piv_lu().solve(&bb);
                    let dlam: Vec<f64> = (0..m).map(|i| sol[(i, 0)]).collect();
                    let dz = sol[(m, 0)];
                    let dx: Vec<f64> = (0..n)
                        .map(|j| {
                            let gl: f64 = (0..m).map(|i| gg[i][j] * dlam[i]).sum();
                            -delx[j] / diagx[j] - gl / diagx[j]
                        })
                        .collect();
                    (dx, dlam, dz)
                } else {
                    let dellamyi: Vec<f64> = (0..m).map(|i| dellam[i] + dely[i] / diagy[i]).collect();
                    let mut axx = Mat::<f64>::zeros(n + 1, n + 1);
                    let mut bb = Mat::<f64>::zeros(n + 1, 1);
                    for j in 0..n {
                        for l in 0..n {
                            let mut v = 0.0;
                            for i in 0..m {
                                v += gg[i][j] * gg[i][l] / diaglamyi[i];
                            }
                            axx[(j, l)] = v;
                        }
                        axx[(j, j)] += diagx[j];
                        let bx: f64 = delx[j] + (0..m).map(|i| gg[i][j] * dellamyi[i] / diaglamyi[i]).sum::<f64>();
                        bb[(j, 0)] = -bx;
                    }
                    axx[(n, n)] = pt.zet / pt.z;
                    bb[(n, 0)] = -delz;
                    let sol = axx.partial_piv_lu().solve(&bb);
                    let dx: Vec<f64> = (0..n).map(|j| sol[(j, 0)]).collect();
                    let dz = sol[(n, 0)];
                    let dlam: Vec<f64> = (0..m)
                        .map(|i| {
                            let gdx: f64 = (0..n).map(|j| gg[i][j] * dx[j]).sum();
                            gdx / diaglamyi[i] + dellamyi[i] / diaglamyi[i]
                        })
                        .collect();
                    (dx, dlam, dz)
                };
                let dy: Vec<f64> = (0..m).map(|i| -dely[i] / diagy[i] + dlam[i] / diagy[i]).collect();
                let dxsi: Vec<f64> = (0..n)
                    .map(|j| {
                        let xa = pt.x[j] - self.alfa[j];
                        -pt.xsi[j] + epsi / xa - pt.xsi[j] * dx[j] / xa
                    })
                    .collect();
                let deta: Vec<f64> = (0..n)
                    .map(|j| {
                        let bx = self.beta[j] - pt.x[j];
                        -pt.eta[j] + epsi / bx + pt.eta[j] * dx[j] / bx
                    })
                    .collect();
                let dmu: Vec<f64> = (0..m)
                    .map(|i| -pt.mu[i] + epsi / pt.y[i] - pt.mu[i] * dy[i] / pt.y[i])
                    .collect();
                let dzet = -pt.zet + epsi / pt.z - pt.zet * dz / pt.z;
                let ds: Vec<f64> = (0..m)
                    .map(|i| -pt.s[i] + epsi / pt.lam[i] - pt.s[i] * dlam[i] / pt.lam[i])
                    .collect();

                // largest step keeping all positive variables interior
                let mut stm: f64 = 1.0;
                let upd = |stm: &mut f64, v: f64, dv: f64| *stm = stm.max(-1.01 * dv / v);
                for i in 0..m {
                    upd(&mut stm, pt.y[i], dy[i]);
                    upd(&mut stm, pt.lam[i], dlam[i]);
                    upd(&mut stm, pt.mu[i], dmu[i]);
                    upd(&mut stm, pt.s[i], ds[i]);
                }
                upd(&mut stm, pt.z, dz);
                upd(&mut stm, pt.zet, dzet);
                for j in 0..n {
                    upd(&mut stm, pt.xsi[j], dxsi[j]);
                    upd(&mut stm, pt.eta[j], deta[j]);
                    stm = stm.max(-1.01 * dx[j] / (pt.x[j] - self.alfa[j]));
                    stm = stm.max(1.01 * dx[j] / (self.beta[j] - pt.x[j]));
                }
                let mut steg = 1.0 / stm;
                let old = pt.clone();
                let mut itto = 0;
                let mut resinew = 2.0 * residunorm;
                let mut r = Vec::new();
                while resinew > residunorm && itto < 50 {
                    itto += 1;
                    let ax = |a: &[f64], d: &[f64]| -> Vec<f64> {
                        a.iter().zip(d).map(|(v, dv)| v + steg * dv).collect()
                    };
                    pt = Point {
                        x: ax(&old.x, &dx),
                        y: ax(&old.y, &dy),
                        z: old.z + steg * dz,
                        lam: ax(&old.lam, &dlam),
                        xsi: ax(&old.xsi, &dxsi),
                        eta: ax(&old.eta, &deta),
                        mu: ax(&old.mu, &dmu),
                        zet: old.zet + steg * dzet,
                        s: ax(&old.s, &ds),
                    };
                    r = self.residual(&pt, epsi);
                    resinew = norm(&r);
                    steg /= 2.0;
                }
                if !resinew.is_finite() {
                    return None;
                }
                residunorm = resinew;
                residumax = maxabs(&r);
            }
            epsi *= 0.1;
        }
        Some(pt.x)
    }
}
