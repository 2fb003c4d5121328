use thiserror::Error;

use crate::ledger::LedgerError;
use crate::plan::PlanError;
use crate::service::ServiceError;
use crate::simulation::SimError;
use crate::survey::SurveyError;

/// Coarse classification used for process exit codes and HTTP status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed input: files, documents, schemas, site responses.
    Validation,
    /// Well-formed input the method cannot act on.
    Domain,
    /// Environment failures.
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Survey(#[from] SurveyError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Service(#[from] ServiceError),
}

fn survey_class(err: &SurveyError) -> ErrorClass {
    match err {
        SurveyError::Io { .. } => ErrorClass::Io,
        SurveyError::NoResponses(_)
        | SurveyError::TooFewDistinct { .. }
        | SurveyError::TooFewRecords { .. } => ErrorClass::Domain,
        _ => ErrorClass::Validation,
    }
}

impl Error {
    fn class_of_plan(err: &PlanError) -> ErrorClass {
        match err {
            PlanError::Io { .. } => ErrorClass::Io,
            PlanError::Estimates(e) => survey_class(e),
            _ => ErrorClass::Validation,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Survey(e) => survey_class(e),
            Error::Plan(e) => Error::class_of_plan(e),
            Error::Ledger(LedgerError::Io { .. } | LedgerError::Locked(_)) => ErrorClass::Io,
            Error::Ledger(LedgerError::DuplicateSite(_) | LedgerError::UnknownSite(_)) => {
                ErrorClass::Domain
            }
            Error::Ledger(_) => ErrorClass::Validation,
            Error::Simulation(SimError::InfeasiblePlan(_) | SimError::EmptySample) => ErrorClass::Domain,
            Error::Simulation(_) => ErrorClass::Validation,
            Error::Service(ServiceError::Plan(e)) => Error::class_of_plan(e),
            Error::Service(ServiceError::Ledger(LedgerError::Io { .. } | LedgerError::Locked(_))) => {
                ErrorClass::Io
            }
            Error::Service(ServiceError::Ledger(_) | ServiceError::Config { .. }) => ErrorClass::Validation,
            Error::Service(ServiceError::Bind { .. } | ServiceError::Server(_)) => ErrorClass::Io,
        }
    }
}
