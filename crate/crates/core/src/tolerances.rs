//! Default tolerances of the verification suites, in one table.
//!
//! Every check reads its threshold from [`Tolerances`]; a run may override
//! any entry by key (`--tol KEY=V` on the command line).

use std::collections::BTreeMap;

use crate::error::{LabError, Result};

/// `(key, default, meaning)`.
pub const DEFAULTS: &[(&str, f64, &str)] = &[
    ("ortho.gram", 1e-10, "max |<phi_j, phi_k> - delta_jk|, j, k <= 20"),
    ("ortho.eigen_fd", 1e-6, "relative error of the finite-difference generator on phi_k"),
    ("ladder.norm", 1e-8, "| ||delta phi_k||^2 - (lambda_k - a) | / max(1, lambda_k - a)"),
    ("ladder.pointwise", 1e-6, "p phi' + q phi against the ladder formula, relative to 1 + |values|"),
    ("assumptions.slack", 1e-10, "relative slack below which v >= 0 or q^2 <= K r counts as violated"),
    ("form1.relerr", 1e-8, "bilinear formula error relative to ||R_i f|| ||g||"),
    ("form1.t_moment", 1e-10, "closed-form t-moment against numerical quadrature"),
    ("contraction.l2", 1e-10, "||R f||_2 <= ||f||_2 (1 + tol)"),
    ("contraction.ou_isometry", 1e-8, "|best p = 2 ratio - 1| for the d = 1 Ornstein-Uhlenbeck system"),
    ("bellman.size", 1e-14, "relative slack of 0 <= beta <= (1 + gamma)(s1^p + s2^q)"),
    ("bellman.hess_margin", 1e-8, "Hessian lower bound margin >= -tol"),
    ("bellman.radial_margin", 1e-6, "radial gradient margin >= -tol, mollified with kappa = 0.01"),
    ("diffineq.identity", 1e-4, "chain-rule identity against finite differences"),
    ("diffineq.margin", 1e-6, "relative margin of the differential inequality >= -tol"),
    ("diffineq.excluded", 0.05, "largest fraction of sample points excluded near the singular set"),
    ("embedding.ratio", 0.0, "embedding ratio <= 1 + tol"),
    ("normbound.restart", 1e-3, "relative gap between best-of-restarts ascent and Boyd"),
    ("normbound.monotone", 1e-12, "relative decrease allowed per Boyd step and per truncation step"),
    ("constants.exact", 1e-12, "closed-form values such as H(1) = 5"),
];

/// Thresholds of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    values: BTreeMap<String, f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { values: DEFAULTS.iter().map(|(k, v, _)| (k.to_string(), *v)).collect() }
    }
}

impl Tolerances {
    pub fn get(&self, key: &str) -> f64 {
        *self.values.get(key).unwrap_or_else(|| panic!("no tolerance named {key}"))
    }

    /// Override one entry. Unknown keys and negative or non-finite values are rejected.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        if !self.values.contains_key(key) {
            return Err(LabError::Argument(format!("unknown tolerance key '{key}'")));
        }
        if !(value.is_finite() && value >= 0.0) {
            return Err(LabError::Argument(format!("tolerance {key} must be finite and >= 0, got {value}")));
        }
        self.values.insert(key.to_string(), value);
        Ok(())
    }

    /// Parse `KEY=V` and apply it.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| LabError::Argument(format!("tolerance override '{spec}' is not KEY=V")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| LabError::Argument(format!("tolerance override '{spec}' has a bad value")))?;
        self.set(k.trim(), v)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }
}
