use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Enters the model of every dataset.
    Shared,
    /// Enters only the model of the given dataset.
    Local(usize),
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    pub role: Role,
    /// Typical magnitude; finite-difference steps never shrink below
    /// `jacobian_rel_step * max(scale, |initial value|)`.
    #[serde(default)]
    pub scale: f64,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: f64) -> Self {
        Self { name: name.into(), value, lo: f64::NEG_INFINITY, hi: f64::INFINITY, role: Role::Shared, scale: 0.0 }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale.abs();
        self
    }

    pub(crate) fn step_scale(&self) -> f64 {
        self.scale.max(self.value.abs())
    }

    pub fn bounded(mut self, lo: f64, hi: f64) -> Self {
        self.lo = lo;
        self.hi = hi;
        self
    }

    pub fn local(mut self, dataset: usize) -> Self {
        self.role = Role::Local(dataset);
        self
    }

    pub fn fixed(mut self) -> Self {
        self.role = Role::Fixed;
        self
    }

    pub fn is_free(&self) -> bool {
        self.role != Role::Fixed
    }

    pub fn validate(&self) -> Result<()> {
        if !self.value.is_finite() {
            return Err(Error::Data(format!("parameter `{}` has non-finite value", self.name)));
        }
        if !(self.lo <= self.value && self.value <= self.hi) {
            return Err(Error::Data(format!(
                "parameter `{}` = {} lies outside [{}, {}]",
                self.name, self.value, self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// Looks up a parameter index by name.
pub fn index_of(params: &[Parameter], name: &str) -> Option<usize> {
    params.iter().position(|p| p.name == name)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub rel_chi2_tol: f64,
    pub step_tol: f64,
    pub jacobian_rel_step: f64,
    /// Singular-value ratio below which the scaled Jacobian counts as rank deficient.
    pub rank_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            initial_damping: 1e-3,
            rel_chi2_tol: 1e-10,
            step_tol: 1e-12,
            jacobian_rel_step: 1e-6,
            rank_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedParameter {
    pub name: String,
    pub value: f64,
    pub sigma: f64,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub parameters: Vec<FittedParameter>,
    pub chi_square: f64,
    pub dof: usize,
    /// Model values per dataset.
    pub model: Vec<Vec<f64>>,
    /// `data - model` per dataset, unweighted.
    pub residuals: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
    /// Row-major covariance of the free parameters, in `parameters` order
    /// (fixed parameters have zero rows).
    pub covariance: Vec<Vec<f64>>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<&FittedParameter> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn value(&self, name: &str) -> f64 {
        self.get(name).map_or(f64::NAN, |p| p.value)
    }

    pub fn sigma(&self, name: &str) -> f64 {
        self.get(name).map_or(f64::NAN, |p| p.sigma)
    }

    pub fn reduced_chi_square(&self) -> f64 {
        self.chi_square / self.dof.max(1) as f64
    }

    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            let residual_norm = self.chi_square.sqrt();
            Err(Error::NotConverged { iterations: self.iterations, residual_norm })
        }
    }
}

/// One-sigma uncertainties of a converged fit.
pub fn parameter_uncertainties(r: &FitResult) -> Result<Vec<(String, f64)>> {
    if !r.converged {
        return Err(Error::NotConverged { iterations: r.iterations, residual_norm: r.chi_square.sqrt() });
    }
    Ok(r.parameters.iter().map(|p| (p.name.clone(), p.sigma)).collect())
}
