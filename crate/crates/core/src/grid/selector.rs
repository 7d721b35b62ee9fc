use super::DomainGrid;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Side of the component's active node cloud.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Left,
    Right,
    Front,
    Back,
    Bottom,
    Top,
}

impl Side {
    /// (axis, take maximum)
    fn axis(self, dim: usize) -> Result<(usize, bool)> {
        let v = dim - 1;
        Ok(match self {
            Side::Left => (0, false),
            Side::Right => (0, true),
            Side::Bottom => (v, false),
            Side::Top => (v, true),
            Side::Front | Side::Back if dim == 2 => {
                return Err(Error::InvalidSelector(
                    "front/back sides need a 3D grid".into(),
                ))
            }
            Side::Front => (1, false),
            Side::Back => (1, true),
        })
    }
}

/// Declarative node set, resolved against a grid with [`resolve_nodes`].
///
/// Coordinates are in element units. When `frame` is given they are
/// expressed in that reference frame and scaled to the grid extents, so a
/// selector written for one resolution works for any other.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NodeSelector {
    /// Explicit node indices.
    Nodes { ids: Vec<usize> },
    /// The grid node nearest to a point.
    Point {
        at: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        frame: Option<Vec<f64>>,
    },
    /// Active nodes that are extreme along each listed side in turn, e.g.
    /// `[top]` is the top edge/face and `[top, right]` its right end.
    /// `samples` picks equally spaced nodes (per in-plane axis) including
    /// both ends.
    Extreme {
        sides: Vec<Side>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        samples: Option<usize>,
    },
    /// Nodes on a grid-aligned segment.
    Line {
        from: Vec<f64>,
        to: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        samples: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        frame: Option<Vec<f64>>,
    },
    /// Active nodes whose distance to `center` is within `tolerance` of
    /// `radius` (2D, in-plane distance).
    Circle {
        center: Vec<f64>,
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tolerance: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        frame: Option<Vec<f64>>,
    },
}

impl NodeSelector {
    fn describe(&self) -> String {
        format!("{self:?}")
    }
}

fn scale_factors(grid: &DomainGrid, frame: &Option<Vec<f64>>) -> Result<Vec<f64>> {
    let ext = grid.shape().extents();
    match frame {
        None => Ok(vec![1.0; ext.len()]),
        Some(f) if f.len() == ext.len() && f.iter().all(|&x| x > 0.0) => {
            Ok(ext.iter().zip(f).map(|(&n, &r)| n as f64 / r).collect())
        }
        Some(f) => Err(Error::InvalidSelector(format!(
            "frame {f:?} does not match a {}D grid",
            ext.len()
        ))),
    }
}

fn check_point(grid: &DomainGrid, p: &[f64]) -> Result<()> {
    if p.len() != grid.dim() {
        return Err(Error::InvalidSelector(format!(
            "point {p:?} needs {} coordinates",
            grid.dim()
        )));
    }
    Ok(())
}

fn nearest_node(grid: &DomainGrid, p: &[f64]) -> Result<usize> {
    let s = grid.shape();
    let ext = s.extents();
    let mut ijk = [0usize; 3];
    for a in 0..grid.dim() {
        let r = p[a].round();
        if r < 0.0 || r > ext[a] as f64 {
            return Err(Error::InvalidSelector(format!("point {p:?} is outside the grid")));
        }
        ijk[a] = r as usize;
    }
    Ok(s.node_id(ijk[0], ijk[1], ijk[2]))
}

fn pick_samples(n: usize, k: usize) -> Vec<usize> {
    if k >= n {
        return (0..n).collect();
    }
    if k == 1 {
        return vec![0];
    }
    let mut idx: Vec<usize> = (0..k)
        .map(|i| ((i * (n - 1)) as f64 / (k - 1) as f64).round() as usize)
        .collect();
    idx.dedup();
    idx
}

/// Resolves a selector into sorted, unique node indices.
pub fn resolve_nodes(grid: &DomainGrid, sel: &NodeSelector) -> Result<Vec<usize>> {
    let s = grid.shape();
    let dim = grid.dim();
    let mut nodes: Vec<usize> = match sel {
        NodeSelector::Nodes { ids } => {
            if let Some(&v) = ids.iter().find(|&&v| v >= s.n_nodes()) {
                return Err(Error::InvalidSelector(format!("node {v} out of range")));
            }
            ids.clone()
        }
        NodeSelector::Point { at, frame } => {
            check_point(grid, at)?;
            let f = scale_factors(grid, frame)?;
            let p: Vec<f64> = at.iter().zip(&f).map(|(x, k)| x * k).collect();
            vec![nearest_node(grid, &p)?]
        }
        NodeSelector::Line {
            from,
            to,
            samples,
            frame,
        } => {
            check_point(grid, from)?;
            check_point(grid, to)?;
            let f = scale_factors(grid, frame)?;
            let a: Vec<f64> = from.iter().zip(&f).map(|(x, k)| (x * k).round()).collect();
            let b: Vec<f64> = to.iter().zip(&f).map(|(x, k)| (x * k).round()).collect();
            let moving: Vec<usize> = (0..dim).filter(|&i| a[i] != b[i]).collect();
            if moving.len() > 1 {
                return Err(Error::InvalidSelector(
                    "line endpoints must differ along one axis".into(),
                ));
            }
            let steps = moving.first().map(|&i| (b[i] - a[i]).abs() as usize).unwrap_or(0);
            let all: Vec<usize> = (0..=steps)
                .map(|q| {
                    let p: Vec<f64> = (0..dim)
                        .map(|i| {
                            if moving.first() == Some(&i) {
                                a[i] + (b[i] - a[i]).signum() * q as f64
                            } else {
                                a[i]
                            }
                        })
                        .collect();
                    nearest_node(grid, &p)
                })
                .collect::<Result<_>>()?;
            match samples {
                Some(k) => pick_samples(all.len(), *k).into_iter().map(|i| all[i]).collect(),
                None => all,
            }
        }
        NodeSelector::Extreme { sides, samples } => {
            if sides.is_empty() {
                return Err(Error::InvalidSelector("extreme selector needs a side".into()));
            }
            let active = grid.active_nodes();
            let mut set: Vec<usize> = (0..s.n_nodes()).filter(|&v| active[v]).collect();
            for side in sides {
                let (axis, max) = side.axis(dim)?;
                let coord = |v: usize| s.node_ijk(v)[axis];
                let target = if max {
                    set.iter().map(|&v| coord(v)).max()
                } else {
                    set.iter().map(|&v| coord(v)).min()
                };
                set.retain(|&v| Some(coord(v)) == target);
            }
            match samples {
                None => set,
                Some(k) => sample_lattice(grid, &set, *k),
            }
        }
        NodeSelector::Circle {
            center,
            radius,
            tolerance,
            frame,
        } => {
            if dim != 2 {
                return Err(Error::InvalidSelector("circle selector is 2D only".into()));
            }
            check_point(grid, center)?;
            let f = scale_factors(grid, frame)?;
            let c = [center[0] * f[0], center[1] * f[1]];
            let r = radius * f[0];
            let tol = tolerance.unwrap_or(0.5);
            let active = grid.active_nodes();
            (0..s.n_nodes())
                .filter(|&v| active[v])
                .filter(|&v| {
                    let p = s.node_coords(v);
                    let d = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt();
                    (d - r).abs() <= tol
                })
                .collect()
        }
    };
    nodes.sort_unstable();
    nodes.dedup();
    if nodes.is_empty() {
        return Err(Error::EmptySelection(sel.describe()));
    }
    Ok(nodes)
}

/// Picks `k` equally spaced coordinates along each varying axis of `set`.
fn sample_lattice(grid: &DomainGrid, set: &[usize], k: usize) -> Vec<usize> {
    let s = grid.shape();
    let dim = grid.dim();
    let mut levels: Vec<Vec<usize>> = Vec::with_capacity(dim);
    for a in 0..dim {
        let mut c: Vec<usize> = set.iter().map(|&v| s.node_ijk(v)[a]).collect();
        c.sort_unstable();
        c.dedup();
        let keep = pick_samples(c.len(), k);
        levels.push(keep.into_iter().map(|i| c[i]).collect());
    }
    set.iter()
        .copied()
        .filter(|&v| {
            let ijk = s.node_ijk(v);
            (0..dim).all(|a| levels[a].contains(&ijk[a]))
        })
        .collect()
}
