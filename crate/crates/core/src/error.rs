use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("time value {0} is negative")]
    NegativeTime(i64),

    #[error("bad time literal: {0:?}")]
    BadTimeLiteral(String),

    #[error("trip index {0} out of range for packed trip ref (max {max})", max = (1u64 << 24) - 1)]
    TripIndexOutOfRange(u64),

    #[error("day offset {0} out of range for packed trip ref")]
    DayOffsetOutOfRange(u64),

    #[error("bit index {index} out of range for bit set of length {len}")]
    BitIndexOutOfRange { index: usize, len: usize },

    #[error("trip has {0} stops; at least 2 required")]
    TooFewStops(usize),

    #[error("trip times are not monotone at stop index {0}")]
    NonMonotoneTrip(usize),

    #[error("trip time vectors do not match its stop sequence length")]
    MismatchedTripLengths,

    #[error("trip has no active day inside the horizon")]
    EmptyActiveDays,

    #[error("bit set length {got} does not match horizon length {want}")]
    BitsetLengthMismatch { got: usize, want: usize },

    #[error("footpath endpoints must differ (stop {0})")]
    SelfFootpath(u32),

    #[error("footpath duration must be positive")]
    NonPositiveFootpath,

    #[error("duplicate footpath for stop pair ({0}, {1})")]
    DuplicateFootpath(u32, u32),

    #[error("unknown stop index {0}")]
    UnknownStopIndex(u32),

    #[error("horizon must cover at least one day")]
    EmptyHorizon,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("missing required file: {0}")]
    MissingFile(String),

    #[error("{file}:{line}: {message}")]
    Record {
        file: String,
        line: usize,
        message: String,
    },

    #[error("schema error in {path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("invalid timetable: {0}")]
    Model(#[from] ModelError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("unknown stop id {0:?}")]
    UnknownStop(String),

    #[error("day {day} outside horizon of {horizon} days")]
    DayOutOfHorizon { day: i64, horizon: u32 },

    #[error("departure time {0} does not fall on the view's query day")]
    DepartureOutsideDay(i64),

    #[error("window [{start}, {start}+{len}) outside horizon of {horizon} days")]
    WindowOutOfHorizon { start: u32, len: u32, horizon: u32 },
}

#[derive(Debug, Error)]
pub enum UpdateError {
    #[error("unknown route index {0}")]
    UnknownRoute(u32),

    #[error("unknown trip index {trip} in route {route}")]
    UnknownTrip { route: u32, trip: u32 },

    #[error("removal days are not a subset of the trip's active days")]
    DaysNotSubset,

    #[error("day {0} is not active for this trip")]
    DayNotActive(u32),

    #[error("delay deltas must be non-negative and keep trip times monotone: {0}")]
    BadDelay(String),

    #[error("invalid trip record: {0}")]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("expansion of {events} events exceeds the oracle guard of {guard}")]
    TooLarge { events: usize, guard: usize },

    #[error(transparent)]
    Query(#[from] QueryError),
}

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("bad magic bytes; not a transfer-set artifact")]
    BadMagic,

    #[error("unsupported transfer-set version {0}")]
    BadVersion(u32),

    #[error("artifact horizon ({artifact} days) does not match timetable ({timetable} days)")]
    HorizonMismatch { artifact: u32, timetable: u32 },

    #[error("artifact shape does not match timetable: {0}")]
    ShapeMismatch(String),

    #[error("truncated or corrupt artifact: {0}")]
    Corrupt(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
