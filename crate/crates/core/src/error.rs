use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("variable count mismatch: {0} vs {1}")]
    VarMismatch(usize, usize),
    #[error("variable index {index} out of range for {num_vars} variables")]
    VarOutOfRange { index: usize, num_vars: usize },
    #[error("arity mismatch: expected {expected}, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("inner jet {0} has a nonzero constant term; re-center the outer jet first")]
    NonzeroConstant(usize),
    #[error("singular jacobian")]
    SingularJacobian,
    #[error("system is not satisfied at the base point (F(0,0) != 0)")]
    NotAtRoot,
    #[error("insufficient jet order: need {needed}, have {have}")]
    InsufficientOrder { needed: u32, have: u32 },
    #[error("point outside the domain box of radius {0}")]
    OutsideDomain(f64),
    #[error("H1 fails: mixed hessian has rank {rank} < {needed}")]
    RankDeficient { rank: usize, needed: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-integer count: {0}")]
    NonInteger(String),
    #[error("no finite contact order up to l = {0}")]
    NoContactOrder(u32),
    #[error("newton iteration failed: {0}")]
    Newton(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
