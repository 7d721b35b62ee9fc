//! Distortion measures as quadratic forms `u^T Q u` of the final
//! displacement.

use crate::error::{Error, Result};
use crate::grid::{resolve_nodes, DomainGrid, NodeSelector};
use serde::{Deserialize, Serialize};

/// Displacement component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// One summand of a distortion measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeasureTerm {
    /// Mean squared displacement magnitude over the node set.
    Displacement { nodes: NodeSelector },
    /// Mean squared deviation of one displacement component from its mean
    /// over the node set.
    Flatness { nodes: NodeSelector, axis: Axis },
}

/// Sum of measure terms.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistortionMeasure {
    pub terms: Vec<MeasureTerm>,
}

/// `w * |P x|^2` over `x = u[dofs]`, where `P` removes the mean when
/// `centered` is set.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticBlock {
    pub dofs: Vec<usize>,
    pub weight: f64,
    pub centered: bool,
}

impl QuadraticBlock {
    fn mean(&self, u: &[f64]) -> f64 {
        if self.centered {
            self.dofs.iter().map(|&d| u[d]).sum::<f64>() / self.dofs.len() as f64
        } else {
            0.0
        }
    }
}

/// Sparse symmetric positive semidefinite form, stored block-wise.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QuadraticForm {
    n: usize,
    blocks: Vec<QuadraticBlock>,
}

impl QuadraticForm {
    pub fn new(n: usize, blocks: Vec<QuadraticBlock>) -> Self {
        Self { n, blocks }
    }

    /// The zero form.
    pub fn zero(n: usize) -> Self {
        Self { n, blocks: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[QuadraticBlock] {
        &self.blocks
    }

    /// `u^T Q u`.
    pub fn evaluate(&self, u: &[f64]) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let m = b.mean(u);
                b.weight * b.dofs.iter().map(|&d| (u[d] - m) * (u[d] - m)).sum::<f64>()
            })
            .sum()
    }

    /// `Q u`, full length.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for b in &self.blocks {
            let m = b.mean(u);
            for &d in &b.dofs {
                out[d] += b.weight * (u[d] - m);
            }
        }
        out
    }

    /// Gradient `2 Q u` of [`evaluate`](Self::evaluate).
    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let mut g = self.apply(u);
        g.iter_mut().for_each(|v| *v *= 2.0);
        g
    }

    /// Explicit entries `(row, col, value)`, both triangles, duplicates
    /// merged and sorted.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut map = std::collections::BTreeMap::new();
        for b in &self.blocks {
            let n = b.dofs.len() as f64;
            for &i in &b.dofs {
                for &j in &b.dofs {
                    let mut v = if b.centered { -1.0 / n } else { 0.0 };
                    if i == j {
                        v += 1.0;
                    }
                    if v != 0.0 {
                        *map.entry((i, j)).or_insert(0.0) += b.weight * v;
                    }
                }
            }
        }
        map.into_iter().map(|((i, j), v)| (i, j, v)).collect()
    }
}

impl DistortionMeasure {
    pub fn new(terms: Vec<MeasureTerm>) -> Self {
        Self { terms }
    }

    /// Resolves node sets and builds the quadratic form.
    pub fn compile(&self, grid: &DomainGrid) -> Result<QuadraticForm> {
        let dim = grid.dim();
        let n = grid.shape().n_dofs();
        let mut blocks = Vec::with_capacity(self.terms.len());
        for term in &self.terms {
            match term {
                MeasureTerm::Displacement { nodes } => {
                    let ids = resolve_nodes(grid, nodes)?;
                    blocks.push(QuadraticBlock {
                        dofs: ids.iter().flat_map(|&v| (0..dim).map(move |a| v * dim + a)).collect(),
                        weight: 1.0 / ids.len() as f64,
                        centered: false,
                    });
                }
                MeasureTerm::Flatness { nodes, axis } => {
                    if axis.index() >= dim {
                        return Err(Error::InvalidMeasure(format!("axis {axis:?} on a {dim}D grid")));
                    }
                    let ids = resolve_nodes(grid, nodes)?;
                    if ids.len() < 2 {
                        return Err(Error::InvalidMeasure(format!(
                            "flatness needs at least two nodes, {nodes:?} gives {}",
                            ids.len()
                        )));
                    }
                    blocks.push(QuadraticBlock {
                        dofs: ids.iter().map(|&v| v * dim + axis.index()).collect(),
                        weight: 1.0 / ids.len() as f64,
                        centered: true,
                    });
                }
            }
        }
        if blocks.is_empty() {
            return Err(Error::InvalidMeasure("measure has no terms".into()));
        }
        Ok(QuadraticForm::new(n, blocks))
    }
}
