//! Timetable ingestion: canonical line-delimited JSON, a GTFS subset, and
//! seeded synthetic instances.

pub mod canonical;
pub mod gtfs;
pub mod synthetic;

pub use canonical::{load_canonical, save_canonical};
pub use gtfs::{load_gtfs, load_gtfs_draft, GtfsLoadReport};
pub use synthetic::{gen_synthetic, ActivityPattern, SyntheticParams};
