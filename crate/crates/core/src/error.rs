use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by library operations.
///
/// Input problems, budget refusals and internal consistency failures are kept
/// apart so the command line can map them onto distinct exit codes.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("market size n = {0} is unsupported (need 3 <= n <= {max})", max = crate::model::MAX_MARKET)]
    MarketSize(usize),
    #[error("{0}")]
    InvalidPreference(String),
    #[error("{item} not ranked")]
    NotRanked { item: usize },
    #[error("invalid matching: {0}")]
    InvalidMatching(String),
    #[error("market mismatch: expected n = {expected}, got n = {found}")]
    MarketMismatch { expected: usize, found: usize },
    #[error("{0}")]
    InvalidTree(String),
    #[error("node {0} not in tree")]
    UnknownNode(String),
    #[error("{0}")]
    InvalidDomain(String),
    #[error("{0}")]
    Precondition(String),
    #[error("stable-set enumeration limited to n <= {bound} (got n = {n})")]
    StableBound { n: usize, bound: usize },
    #[error("profile outside rule domain")]
    OutsideRuleDomain,
    #[error("budget exceeded: {what} requires {required} evaluations, budget is {budget}")]
    Budget {
        what: &'static str,
        required: u128,
        budget: u128,
    },
    #[error("no rich TD selection exists for this tree")]
    NoTdSelection,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("internal consistency failure: {0}")]
    Internal(String),
}

impl Error {
    pub fn is_budget(&self) -> bool {
        matches!(self, Error::Budget { .. } | Error::StableBound { .. })
    }
}
