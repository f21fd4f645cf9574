//! Linear constraints over the redispatch decision vector.
//!
//! The decision vector is `[dp_1 .. dp_G, shed_1 .. shed_L]` in MW, in
//! generator and load order of the [`Network`](crate::grid::Network).
//! `shed_j > 0` reduces load `j`, raising the net injection at its bus.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintTag {
    VariableLimit,
    BranchFlow,
    Balance,
    NMinus1,
    Cutset,
    Stability,
}

impl fmt::Display for ConstraintTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConstraintTag::VariableLimit => "variable-limit",
            ConstraintTag::BranchFlow => "branch-flow",
            ConstraintTag::Balance => "balance",
            ConstraintTag::NMinus1 => "n-1",
            ConstraintTag::Cutset => "cutset",
            ConstraintTag::Stability => "stability",
        };
        f.write_str(s)
    }
}

/// Where a constraint came from; two constraints with equal provenance are
/// the same constraint.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Provenance {
    pub contingency: Option<String>,
    /// Free-form key: branch ids, cut-set key, iteration number.
    pub key: String,
}

impl Provenance {
    pub fn new(contingency: Option<&str>, key: impl Into<String>) -> Self {
        Self { contingency: contingency.map(str::to_owned), key: key.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub coeffs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
    pub tag: ConstraintTag,
    pub provenance: Provenance,
}

impl LinearConstraint {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Amount by which `x` violates the constraint (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let v = self.eval(x);
        match self.sense {
            Sense::Le => (v - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - v).max(0.0),
            Sense::Eq => (v - self.rhs).abs(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.rhs.is_finite() && self.coeffs.iter().all(|c| c.is_finite())
    }
}
