use std::path::PathBuf;

use thiserror::Error;

use crate::ids::{CompartmentId, ResourceId};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("`{field}` references unknown id `{id}`")]
    DanglingReference { field: String, id: String },
}

impl ScenarioError {
    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn dangling(field: impl Into<String>, id: impl ToString) -> Self {
        Self::DanglingReference {
            field: field.into(),
            id: id.to_string(),
        }
    }
}

impl From<serde_json::Error> for ScenarioError {
    fn from(e: serde_json::Error) -> Self {
        ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

/// Failures of the planning pipeline (compartments, goals, fleet, lattice).
#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("structure has no segments")]
    EmptyStructure,
    #[error("compartment count {requested} is invalid for {segments} segments")]
    BadCompartmentCount { requested: u32, segments: usize },
    #[error("target compartment length must be positive, got {0}")]
    BadTargetLength(f64),
    #[error("ility set is empty")]
    EmptyIlitySet,
    #[error("ility set must contain Functionality, the tree that drives work")]
    MissingFunctionality,
    #[error("duplicate ility `{0}`")]
    DuplicateIlity(String),
    #[error("fanout template needs 5 entries each >= 1, got {0:?}")]
    BadFanout(Vec<u32>),
    #[error("{leaves} positive-work leaves need at least as many virtual drones, got {drones}")]
    InsufficientVirtualDrones { leaves: usize, drones: usize },
    #[error("fleet has no physical drone with the FieldOperation role")]
    NoFieldDrones,
    #[error("workflow lattice is missing a {0} site")]
    MissingSiteKind(&'static str),
    #[error("scenario must have exactly one CentralHQ site, found {0}")]
    CentralHqCount(usize),
    #[error("FieldOps site `{0}` is not reachable from CentralHQ")]
    Unreachable(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum CoordinationError {
    #[error("cannot elect a leader in an empty relation")]
    EmptyRelation,
    #[error("request from {compartment} references unknown resource `{resource}`")]
    UnknownResource {
        compartment: CompartmentId,
        resource: ResourceId,
    },
    #[error("{compartment} requested `{resource}` but is not a member of its relation")]
    NotAMember {
        compartment: CompartmentId,
        resource: ResourceId,
    },
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Coordination(#[from] CoordinationError),
    #[error("phase order violated: {0}")]
    PhaseOrder(&'static str),
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write report to {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}
