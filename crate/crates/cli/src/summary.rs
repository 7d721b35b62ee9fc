use serde::{Deserialize, Serialize};

/// Key numbers of an optimization run, written as `summary.toml`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub layers: usize,
    pub iterations: usize,
    pub design_variables: usize,
    /// Objective of the planar-layer field at `final_beta`.
    pub planar_objective: f64,
    /// Objective of the planar-layer field with hard layers.
    pub planar_binary_objective: f64,
    /// Objective of the initial field at the first sharpness.
    pub initial_objective: f64,
    /// Objective of the final field at `final_beta`.
    pub final_objective: f64,
    pub final_beta: f64,
    /// Objective of the final field with hard layers.
    pub binary_objective: f64,
    /// `final_objective / planar_objective`.
    pub reduction: f64,
    /// `binary_objective / planar_binary_objective`.
    pub binary_reduction: f64,
    pub g0: f64,
    pub volume_constraints: Vec<f64>,
    pub feasible: bool,
    pub violations: Vec<String>,
    /// Strict local extrema of the continuous time field.
    pub min_max_count: usize,
    /// Local extrema of the hard layer assignment.
    pub layer_min_max_count: usize,
    pub restorations: usize,
    /// Iteration of the returned design, 0 for the design after the last
    /// update.
    pub selected_iteration: usize,
    pub seconds: f64,
}

/// Result of a forward simulation, written as `simulation.toml`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub name: String,
    pub field: String,
    pub layers: usize,
    pub beta: f64,
    /// Objective with smoothed layers at `beta`.
    pub objective: f64,
    /// Objective with hard layers.
    pub binary_objective: f64,
}
