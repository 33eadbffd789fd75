use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::casebook::CasebookError;
use crate::config::ConfigError;
use crate::confirmation::ConfirmationError;
use crate::ranking::RankingError;
use crate::scheduler::SchedulerError;
use crate::store::StoreError;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Ranking(#[from] RankingError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Confirmation(#[from] ConfirmationError),
    #[error(transparent)]
    Casebook(#[from] CasebookError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no schedule has been generated yet")]
    NotGenerated,
    #[error("{entity} {id} not found")]
    NotFound { entity: &'static str, id: String },
    #[error("{entity} {id} already exists")]
    AlreadyExists { entity: &'static str, id: String },
    #[error("{field}: {message}")]
    BadRequest { field: String, message: String },
    #[error("removal needs an explicit confirmation")]
    ConfirmationRequired,
}

/// Wire form of an error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub field: Option<String>,
    pub message: String,
}

impl EngineError {
    pub fn bad_request(field: &str, message: impl Into<String>) -> Self {
        Self::BadRequest { field: field.to_string(), message: message.into() }
    }

    pub fn code(&self) -> &'static str {
        match self {
            Self::Ranking(RankingError::RankOutOfRange(_)) => "rank_out_of_range",
            Self::Ranking(RankingError::Ownership { .. }) => "terminal_ownership",
            Self::Ranking(RankingError::InvalidTiers(_)) => "invalid_config",
            Self::Scheduler(SchedulerError::WindowOverflow { .. }) => "window_overflow",
            Self::Scheduler(SchedulerError::Unranked(_)) => "unranked_client",
            Self::Scheduler(SchedulerError::DayOutOfRange(_)) => "day_out_of_range",
            Self::Scheduler(_) => "invalid_parameters",
            Self::Confirmation(ConfirmationError::UnknownCandidate { .. }) => "unknown_candidate",
            Self::Confirmation(ConfirmationError::IllegalTransition { .. }) => "illegal_transition",
            Self::Casebook(CasebookError::NotEvaluated(_)) => "not_evaluated",
            Self::Casebook(CasebookError::FailedCase(_)) => "failed_case",
            Self::Casebook(CasebookError::Scheduler(SchedulerError::Unranked(_))) => "unranked_client",
            Self::Casebook(_) => "invalid_case",
            Self::Store(StoreError::Format { .. }) => "format_error",
            Self::Store(StoreError::DuplicateKey { .. }) => "duplicate_key",
            Self::Store(StoreError::Csv(_)) => "format_error",
            Self::Store(StoreError::Invalid(report)) => match report.violations.first() {
                Some(v) if v.field == "rank" => "rank_out_of_range",
                _ => "validation_failed",
            },
            Self::Store(StoreError::Version(_)) => "unsupported_version",
            Self::Store(StoreError::Parse(_)) => "snapshot_parse",
            Self::Store(StoreError::Io { .. }) => "io_error",
            Self::Config(_) => "invalid_config",
            Self::NotGenerated => "not_generated",
            Self::NotFound { .. } => "not_found",
            Self::AlreadyExists { .. } => "already_exists",
            Self::BadRequest { .. } => "bad_request",
            Self::ConfirmationRequired => "confirmation_required",
        }
    }

    pub fn field(&self) -> Option<String> {
        match self {
            Self::Ranking(RankingError::RankOutOfRange(_)) => Some("rank".into()),
            Self::Store(StoreError::Invalid(report)) => report.violations.first().map(|v| v.field.clone()),
            Self::BadRequest { field, .. } => Some(field.clone()),
            Self::ConfirmationRequired => Some("confirm".into()),
            _ => None,
        }
    }

    pub fn to_api(&self) -> ApiError {
        let message = match self {
            Self::Store(StoreError::Invalid(report)) => report
                .violations
                .iter()
                .map(|v| format!("{} {}: {}", v.entity_id, v.field, v.reason))
                .collect::<Vec<_>>()
                .join("; "),
            other => other.to_string(),
        };
        ApiError { code: self.code().to_string(), field: self.field(), message }
    }
}
