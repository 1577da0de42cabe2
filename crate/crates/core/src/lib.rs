//! Trip-based public transit routing over timetables of arbitrary length.
//!
//! A timetable spanning months or a year is kept compact by attaching a
//! service-day bit set to every trip and every precomputed transfer instead of
//! instantiating each operating day separately. Queries answer earliest-arrival
//! and full-day profile questions, Pareto-optimal in (arrival time, number of
//! transfers), over per-day extracted transfer views. Timetable changes
//! (removed, added, delayed trips) are folded in by recomputing transfers for
//! the affected trips only, reproducing from-scratch preprocessing exactly.
//!
//! The crate is organized around the pipeline:
//!
//! * [`ingest`] — GTFS subset and canonical JSON loading, synthetic instances
//! * [`preprocess`] — route partitioning, transfer computation and reduction
//! * [`extract`] — per-day transfer views, LRU cache, window flattening
//! * [`query`] — bit-set-aware profile / earliest-arrival engine
//! * [`flat`] — the flat-layout engine run on flattened windows
//! * [`update`] — incremental timetable edits with transfer repair
//! * [`oracle`] — exhaustive reference implementation for validation
//!
//! See the `examples/` directory for runnable walkthroughs of each capability.

pub mod bench;
pub mod bitset;
pub mod cli;
pub mod error;
pub mod extract;
pub mod flat;
pub mod ingest;
pub mod model;
pub mod oracle;
pub mod preprocess;
pub mod query;
pub mod time;
pub mod update;

pub use bitset::DayBitset;
pub use error::{ArtifactError, LoadError, ModelError, OracleError, QueryError, UpdateError};
pub use model::{
    pack_trip_ref, unpack_trip_ref, DraftTrip, Footpath, Route, Stop, Timetable, TimetableDraft,
    Trip, TripRef,
};
pub use time::{abs_time, AbsTime, RelTime, SECONDS_PER_DAY};
