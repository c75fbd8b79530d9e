use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit index {qubit} out of range for a {n_qubits}-qubit register")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },

    #[error("two-qubit gate needs distinct qubits, got {0} twice")]
    SameQubit(usize),

    #[error("gate is not unitary (||U^dag U - I||_F = {deficit:.3e})")]
    NonUnitary { deficit: f64 },

    #[error("operator is not Hermitian (||A - A^dag||_F = {deficit:.3e})")]
    NonHermitian { deficit: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("parameter vector has length {found}, circuit expects {expected}")]
    ParamLength { expected: usize, found: usize },

    #[error("state is not normalized (|norm^2 - 1| = {deficit:.3e})")]
    NotNormalized { deficit: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Lanczos did not converge after {iterations} matrix-vector products (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("dense unitary of dimension {dim} exceeds the cap of {cap}; an explicit opt-in is required")]
    DimensionTooLarge { dim: usize, cap: usize },

    #[error("{got} samples are too few for a stable estimate (need at least {min})")]
    TooFewSamples { got: usize, min: usize },

    #[error("statevector cap exceeded: {needed} physical qubits requested, at most {cap} allowed")]
    QubitCap { needed: usize, cap: usize },

    #[error("output probability is zero; enable the depolarizing readout floor")]
    ZeroProbability,

    #[error("syndrome {0:#b} has no entry in the recovery table")]
    UnknownSyndrome(u64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
