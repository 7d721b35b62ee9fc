//! Finite-element kernels, SIMP interpolation, sparse assembly and solves.

mod assembly;
mod element;
mod multigrid;
mod solver;
mod strain;

pub use assembly::{gather_element, scatter_element_vectors, DofMap, SystemPattern};
pub use element::{
    elasticity_matrix, element_stiffness_unit, equivalent_forces, strain_displacement, voigt_len,
    ElementKernel,
};
pub use solver::{Factor, FemModel, SolverKind, SolverOptions};
pub use strain::{rotate_strain_to_global, RotatedStrain, DEGENERATE_GRADIENT};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// 2D constitutive assumption.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlaneModel {
    #[default]
    Stress,
    Strain,
}

/// Linear elastic material with SIMP interpolation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Material {
    pub e0: f64,
    pub nu: f64,
    pub emin: f64,
    /// Stiffness penalty.
    pub p: f64,
    /// Strain penalty.
    pub q: f64,
    pub plane: PlaneModel,
}

impl Default for Material {
    fn default() -> Self {
        Self {
            e0: 1.0,
            nu: 0.3,
            emin: 1e-9,
            p: 3.0,
            q: 3.0,
            plane: PlaneModel::Stress,
        }
    }
}

impl Material {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config("material", m));
        if !(self.e0 > 0.0 && self.e0.is_finite()) {
            return bad("e0 must be positive");
        }
        if !(self.nu > 0.0 && self.nu < 0.5) {
            return bad("nu must lie in (0, 0.5)");
        }
        if !(self.emin > 0.0 && self.emin < 1e-2) {
            return bad("emin must lie in (0, 0.01)");
        }
        if !(self.p >= 1.0) || !(self.q >= 1.0) {
            return bad("penalties must be at least 1");
        }
        if self.q < self.p {
            log::warn!(
                "strain penalty q = {} is below stiffness penalty p = {}; expect excessive distortion",
                self.q,
                self.p
            );
        }
        Ok(())
    }

    /// Relative stiffness `Emin + (1 - Emin) rho^p`.
    #[inline]
    pub fn simp_scale(&self, rho: f64) -> f64 {
        self.emin + (1.0 - self.emin) * crate::projection::penalize(rho, self.p).0
    }

    #[inline]
    pub fn simp_derivative(&self, rho: f64) -> f64 {
        (1.0 - self.emin) * crate::projection::penalize(rho, self.p).1
    }
}

/// Stiffness factor `Emin + (1 - Emin) rho^p`.
pub fn simp_scale(rho: f64, m: &Material) -> f64 {
    m.simp_scale(rho)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simp_values() {
        let m = Material::default();
        assert_eq!(simp_scale(1.0, &m), 1.0);
        assert_eq!(simp_scale(0.0, &m), 1e-9);
        assert_eq!(simp_scale(0.5, &m), 0.125 * (1.0 - 1e-9) + 1e-9);
        let h = 1e-6;
        for r in [0.2, 0.5, 0.9] {
            let fd = (m.simp_scale(r + h) - m.simp_scale(r - h)) / (2.0 * h);
            assert!((fd - m.simp_derivative(r)).abs() < 1e-6 * fd.abs());
        }
    }

    #[test]
    fn material_validation() {
        assert!(Material::default().validate().is_ok());
        let m = Material { nu: 0.5, ..Default::default() };
        assert!(m.validate().is_err());
        let m = Material { q: 1.0, ..Default::default() };
        assert!(m.validate().is_ok());
    }
}
