use alloc::string::String;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegistrationError {
    #[error("registration needs non-empty point sets")]
    EmptyPointSet,
    #[error("degenerate geometry: all points lie within {threshold} of a single point")]
    DegenerateGeometry { threshold: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssistantError {
    #[error("a demonstration needs at least 2 waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("the first demonstration waypoint must lie in free space")]
    FirstWaypointNotFree,
    #[error("transferred trajectory exhausted")]
    TrajectoryExhausted,
    #[error(transparent)]
    Registration(#[from] RegistrationError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NoviceError {
    #[error("training set is empty after sample filtering")]
    EmptyDataset,
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatingError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("deploy label {label} requires the {policy} policy")]
    MissingPolicy {
        label: &'static str,
        policy: &'static str,
    },
    #[error(transparent)]
    Assistant(#[from] AssistantError),
    #[error(transparent)]
    Novice(#[from] NoviceError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("no actions in the selected scope")]
    EmptyScope,
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty sample")]
    EmptySample,
    #[error("all paired differences are zero (p = {p})")]
    AllZeroDifferences { p: f64 },
    #[error("rating {0} outside the 1..=7 Likert range")]
    InvalidRating(i64),
}
