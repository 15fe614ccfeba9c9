use std::fmt;

use thiserror::Error;

/// A single violated model invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    ShapeMismatch(String),
    RowNotStochastic {
        state: usize,
        action: usize,
        sum: f64,
    },
    NegativeEntry {
        table: String,
        index: Vec<usize>,
        value: f64,
    },
    EntryAboveCmax {
        table: String,
        index: Vec<usize>,
        value: f64,
    },
    NonFinite {
        table: String,
        index: Vec<usize>,
    },
    BadDiscount(f64),
    BadInitialDist {
        sum: f64,
    },
    BadCmax(f64),
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::ShapeMismatch(what) => write!(f, "shape mismatch: {what}"),
            ValidationIssue::RowNotStochastic { state, action, sum } => {
                write!(f, "RowNotStochastic({state},{action}): row sums to {sum}")
            }
            ValidationIssue::NegativeEntry {
                table,
                index,
                value,
            } => {
                write!(f, "NegativeEntry: {table}{index:?} = {value}")
            }
            ValidationIssue::EntryAboveCmax {
                table,
                index,
                value,
            } => {
                write!(f, "entry above c_max: {table}{index:?} = {value}")
            }
            ValidationIssue::NonFinite { table, index } => {
                write!(f, "non-finite entry: {table}{index:?}")
            }
            ValidationIssue::BadDiscount(g) => write!(f, "BadDiscount: gamma = {g} not in (0,1)"),
            ValidationIssue::BadInitialDist { sum } => {
                write!(
                    f,
                    "BadInitialDist: xi sums to {sum} or has negative entries"
                )
            }
            ValidationIssue::BadCmax(c) => write!(f, "c_max = {c} must be positive"),
        }
    }
}

/// Every invariant violation found in a model, in discovery order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} invalid entries", self.issues.len())?;
        for issue in &self.issues {
            write!(f, "\n  {issue}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationReport {}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(#[from] ValidationReport),
    #[error("linear system is singular (pivot {pivot:e})")]
    SingularSystem { pivot: f64 },
    #[error("induced Markov chain is not ergodic{}", iteration.map(|t| format!(" at iteration {t}")).unwrap_or_default())]
    NotErgodic { iteration: Option<usize> },
    #[error("no policy satisfies the constraints (phase-1 residual {residual:e})")]
    Infeasible { residual: f64 },
    #[error("linear program failed: {0}")]
    NumericalFailure(String),
    #[error("temperature collapsed to zero")]
    DegenerateTemperature,
    #[error("generator failed to produce a feasible model after {attempts} attempts")]
    InfeasibleGenerated { attempts: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_iteration(self, t: usize) -> Self {
        match self {
            Error::NotErgodic { .. } => Error::NotErgodic { iteration: Some(t) },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
