use thiserror::Error;

/// Errors raised by the curation engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("catalog load error in {record}: {reason}")]
    CatalogLoad { record: String, reason: String },

    #[error("unknown {kind} id `{id}`")]
    UnknownId { kind: &'static str, id: String },

    #[error("generation queue is at capacity ({capacity} jobs)")]
    QueueFull { capacity: usize },

    #[error("illegal job transition for {job_id}: {from} -> {to}")]
    IllegalTransition {
        job_id: String,
        from: String,
        to: String,
    },

    #[error("degenerate design matrix: {0}")]
    DegenerateDesign(String),

    #[error("candidate pool exhausted")]
    PoolExhausted,

    #[error("no strategy named `{name}` registered for {kind}")]
    UnknownStrategy { kind: &'static str, name: String },

    #[error("generator failed: {0}")]
    Generator(String),

    #[error("event replay failed at sequence {sequence}: {reason}")]
    Replay { sequence: u64, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
