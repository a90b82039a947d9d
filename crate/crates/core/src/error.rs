use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A scenario or argument failed validation. `field` is a dotted path into
    /// the configuration and `entity` names the offending task/RSU/vehicle.
    #[error("invalid `{field}`{}: {message}", fmt_entity(.entity))]
    Validation {
        field: String,
        entity: Option<String>,
        message: String,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unreachable link: channel rate is zero for a {bits}-bit payload")]
    UnreachableLink { bits: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("curve fit did not converge (best residual {residual:e})")]
    FitDiverged { residual: f64 },

    #[error("oracle refused: {cells} agent-arm cells exceed the exhaustive limit {limit}")]
    OracleLimit { cells: usize, limit: usize },

    #[error("trajectory data: {0}")]
    Trajectory(String),

    #[error("round {round}, task {task}{}: {source}", fmt_client(.client))]
    InRound {
        round: u32,
        task: usize,
        client: Option<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn fmt_entity(entity: &Option<String>) -> String {
    entity.as_ref().map(|e| format!(" ({e})")).unwrap_or_default()
}

fn fmt_client(client: &Option<usize>) -> String {
    client.map(|c| format!(", client {c}")).unwrap_or_default()
}

impl Error {
    pub(crate) fn validation(
        field: impl Into<String>,
        entity: Option<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Validation {
            field: field.into(),
            entity,
            message: message.into(),
        }
    }

    pub(crate) fn in_round(self, round: u32, task: usize, client: Option<usize>) -> Self {
        Error::InRound {
            round,
            task,
            client,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad input rather than a failure while running.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Validation { .. } | Error::Parse(_) | Error::InvalidArgument(_) => true,
            Error::InRound { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}
