use thiserror::Error;

use crate::algebra::Letter;

#[derive(Debug, Error)]
pub enum Error {
    #[error("detailed balance violated for generator `{gen}`: atom at x={x} with weight {w} has no partner at {partner_x} with weight {expected}")]
    DetailedBalanceViolation {
        gen: String,
        x: f64,
        w: f64,
        partner_x: f64,
        expected: f64,
    },
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("letter {0} is not an X-family letter")]
    Family(Letter),
    #[error("word of length {len} exceeds brute-force limit {limit}")]
    SizeLimit { len: usize, limit: usize },
    #[error("Gram matrix is degenerate: every singular value is below the cutoff")]
    DegenerateGram,
    #[error("invalid quadrature grid: {0}")]
    Grid(String),
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("invalid basis: {0}")]
    Basis(String),
    #[error("block positions must form a prefix or suffix of the word")]
    Block,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
