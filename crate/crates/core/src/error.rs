use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed topology document: {0}")]
    Parse(String),

    #[error("invalid topology at {location}: {message}")]
    InvalidTopology { location: String, message: String },

    #[error("graph contains a directed cycle through nodes {0:?}")]
    Cyclic(Vec<String>),

    #[error("unsupported field size 2^{0} (supported: 2^1 ..= 2^16)")]
    FieldSize(u32),

    #[error("zero has no multiplicative inverse")]
    InverseOfZero,

    #[error("target rate {rate} is not achievable: minimum sink max-flow is {min_flow}")]
    RateUnachievable { rate: u32, min_flow: u32 },

    #[error("chromosome is infeasible: {0}")]
    Infeasible(String),

    #[error("chromosome does not match layout: {0}")]
    LayoutMismatch(String),

    #[error("instance generation failed: {0}")]
    Generation(String),

    #[error("no acyclic feasible subgraph found: {0}")]
    NoAcyclicSubgraph(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit status: 2 for bad input or arguments, 3 for instances
    /// that cannot meet the requested rate, 4 for internal failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_)
            | Error::InvalidTopology { .. }
            | Error::FieldSize(_)
            | Error::LayoutMismatch(_)
            | Error::InvalidParameter(_)
            | Error::Io(_) => 2,
            Error::Cyclic(_)
            | Error::RateUnachievable { .. }
            | Error::Infeasible(_)
            | Error::Generation(_)
            | Error::NoAcyclicSubgraph(_) => 3,
            Error::InverseOfZero | Error::Protocol(_) => 4,
        }
    }
}
