use thiserror::Error;

/// Errors raised by the relation calculus.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("ambient dimension must be positive")]
    EmptyAmbient,

    #[error("ambient dimension mismatch: {left} vs {right}")]
    AmbientMismatch { left: usize, right: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("requested dimension {dim} exceeds ambient dimension {ambient}")]
    DimTooLarge { dim: usize, ambient: usize },

    #[error("relation dimensions differ: ({x1}, {y1}) vs ({x2}, {y2})")]
    RelationMismatch { x1: usize, y1: usize, x2: usize, y2: usize },

    /// A point handed to a quotient-seminorm evaluation lies off the domain.
    #[error("vector is not in the domain (distance {residual:e})")]
    NotInDomain { residual: f64 },

    /// One of the standing containments `D(A) ⊆ D(B)`, `B(0) ⊆ A(0)` fails.
    #[error("hypothesis `{which}` violated (gap {gap:e})")]
    Hypothesis { which: &'static str, gap: f64 },

    #[error("infeasible instance spec: {0}")]
    InfeasibleSpec(String),

    #[error("post-hoc measurement mismatch for {what}: wanted {wanted}, measured {measured}")]
    GeneratorMismatch { what: &'static str, wanted: usize, measured: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("vector lies in the subspace it must avoid")]
    VectorInSubspace,
}

pub type Result<T> = std::result::Result<T, Error>;
