//! Seeded benchmark and update-simulation drivers behind the CLI: random
//! full-day profile queries per engine with CSV output and quartile
//! summaries, and random delay streams for the update path.

use std::collections::HashMap;
use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::QueryError;
use crate::extract::{flatten_window, DayViewCache, FlatTimetable};
use crate::flat::flat_profile_query;
use crate::model::Timetable;
use crate::preprocess::TransferSet;
use crate::query::profile_query;
use crate::update::{DelaySpec, TimetableEdit};

pub const BENCH_CSV_SCHEMA: &str = "bench-v1";
pub const UPDATE_CSV_SCHEMA: &str = "update-v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EngineKind {
    Full,
    Flat,
}

impl EngineKind {
    pub fn name(self) -> &'static str {
        match self {
            EngineKind::Full => "full",
            EngineKind::Flat => "flat",
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchRecord {
    pub query_id: u32,
    pub source: String,
    pub destination: String,
    pub day: u32,
    pub micros: u64,
    pub journeys: usize,
    pub engine: EngineKind,
    /// A query counts as successful when it returned at least one journey;
    /// unsuccessful ones are excluded from the timing summary.
    pub success: bool,
}

#[derive(Clone, Debug)]
pub struct BenchSummary {
    pub engine: EngineKind,
    pub total: usize,
    pub successful: usize,
    pub min_micros: u64,
    pub p25_micros: u64,
    pub median_micros: u64,
    pub p75_micros: u64,
    pub max_micros: u64,
}

/// The (source, destination, day) sample for query `i` of a seeded run;
/// shared by engines so cross-engine comparisons see identical queries.
pub fn sample_queries(tt: &Timetable, n: u32, seed: u64) -> Vec<(u32, u32, u32)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_stops = tt.stops.len() as u32;
    (0..n)
        .map(|_| {
            let src = rng.gen_range(0..n_stops);
            let mut dst = rng.gen_range(0..n_stops);
            if dst == src {
                dst = (dst + 1) % n_stops;
            }
            let day = rng.gen_range(0..tt.horizon_days);
            (src, dst, day)
        })
        .collect()
}

/// Runs `n` seeded random full-day profile queries sequentially on one
/// engine. Day views (or flattened windows) are prepared outside the timed
/// section and cached, so records measure query time only.
pub fn run_profile_bench(
    tt: &Timetable,
    transfers: &TransferSet,
    engine: EngineKind,
    n: u32,
    seed: u64,
    view_horizon: u32,
    cache_capacity: usize,
) -> Result<Vec<BenchRecord>, QueryError> {
    let queries = sample_queries(tt, n, seed);
    let cache = DayViewCache::new(cache_capacity);
    let mut flat_cache: HashMap<(u32, u32), FlatTimetable> = HashMap::new();
    let mut records = Vec::with_capacity(queries.len());
    for (i, &(src, dst, day)) in queries.iter().enumerate() {
        let (micros, journeys) = match engine {
            EngineKind::Full => {
                let view = cache.get_or_build(tt, transfers, day, view_horizon)?;
                let started = Instant::now();
                let res = profile_query(tt, &view, src, dst)?;
                (started.elapsed().as_micros() as u64, res.journeys.len())
            }
            EngineKind::Flat => {
                let (w, len) = flat_window_for_day(tt, day, view_horizon);
                let flat = match flat_cache.entry((w, len)) {
                    std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                    std::collections::hash_map::Entry::Vacant(e) => {
                        e.insert(flatten_window(tt, transfers, w, len)?)
                    }
                };
                let started = Instant::now();
                let res = flat_profile_query(tt, flat, src, dst, day)?;
                (started.elapsed().as_micros() as u64, res.journeys.len())
            }
        };
        records.push(BenchRecord {
            query_id: i as u32,
            source: tt.stops[src as usize].id.clone(),
            destination: tt.stops[dst as usize].id.clone(),
            day,
            micros,
            journeys,
            engine,
            success: journeys > 0,
        });
    }
    Ok(records)
}

/// The flatten window matching a day view of the given horizon: the day
/// before the query day through the last covered day.
pub fn flat_window_for_day(tt: &Timetable, day: u32, view_horizon: u32) -> (u32, u32) {
    let w = day.saturating_sub(1);
    let end = (day + view_horizon).min(tt.horizon_days);
    (w, end - w)
}

pub fn summarize(engine: EngineKind, records: &[BenchRecord]) -> BenchSummary {
    let mut micros: Vec<u64> = records
        .iter()
        .filter(|r| r.engine == engine && r.success)
        .map(|r| r.micros)
        .collect();
    micros.sort_unstable();
    let pick = |q: f64| -> u64 {
        if micros.is_empty() {
            0
        } else {
            let idx = ((micros.len() - 1) as f64 * q).round() as usize;
            micros[idx]
        }
    };
    BenchSummary {
        engine,
        total: records.iter().filter(|r| r.engine == engine).count(),
        successful: micros.len(),
        min_micros: micros.first().copied().unwrap_or(0),
        p25_micros: pick(0.25),
        median_micros: pick(0.5),
        p75_micros: pick(0.75),
        max_micros: micros.last().copied().unwrap_or(0),
    }
}

pub fn write_bench_csv<W: Write>(mut w: W, records: &[BenchRecord]) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(&mut w);
    out.write_record([
        "schema",
        "query_id",
        "source",
        "destination",
        "day",
        "micros",
        "journeys",
        "engine",
        "success",
    ])?;
    for r in records {
        out.write_record([
            BENCH_CSV_SCHEMA.to_string(),
            r.query_id.to_string(),
            r.source.clone(),
            r.destination.clone(),
            r.day.to_string(),
            r.micros.to_string(),
            r.journeys.to_string(),
            r.engine.name().to_string(),
            r.success.to_string(),
        ])?;
    }
    out.flush()
}

#[derive(Clone, Debug)]
pub struct UpdateRecord {
    pub update_id: u32,
    pub kind: String,
    pub trips_recomputed: usize,
    pub micros: u64,
}

pub fn write_update_csv<W: Write>(mut w: W, records: &[UpdateRecord]) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(&mut w);
    out.write_record(["schema", "update_id", "kind", "trips_recomputed", "micros"])?;
    for r in records {
        out.write_record([
            UPDATE_CSV_SCHEMA.to_string(),
            r.update_id.to_string(),
            r.kind.clone(),
            r.trips_recomputed.to_string(),
            r.micros.to_string(),
        ])?;
    }
    out.flush()
}

/// Seeded random delay edits: trip and active day uniform, delay uniform over
/// {60, 120, ..., 1800} seconds. Edits are generated against the evolving
/// timetable structure so indices stay valid when applied in order.
pub fn random_delay_edits(
    tt: &Timetable,
    n: u32,
    seed: u64,
) -> Result<Vec<TimetableEdit>, crate::error::UpdateError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edits = Vec::with_capacity(n as usize);
    let mut shadow = tt.clone();
    for _ in 0..n {
        let total = shadow.total_trips();
        if total == 0 {
            break;
        }
        let pick = rng.gen_range(0..total);
        let mut acc = 0u32;
        let mut chosen = None;
        for (ri, route) in shadow.routes.iter().enumerate() {
            let len = route.trips.len() as u32;
            if pick < acc + len {
                chosen = Some((ri as u32, pick - acc));
                break;
            }
            acc += len;
        }
        let (route, trip) = chosen.expect("pick within total");
        let active: Vec<usize> = shadow.routes[route as usize].trips[trip as usize]
            .active_days
            .iter_ones()
            .collect();
        let day = active[rng.gen_range(0..active.len())] as u32;
        let delay = 60 * rng.gen_range(1..=30u32);
        let edit = TimetableEdit::Delay {
            route,
            trip,
            day,
            delay: DelaySpec::Uniform(delay),
        };
        let (next, _) = crate::update::apply_edits_structural(&shadow, std::slice::from_ref(&edit))?;
        shadow = next;
        edits.push(edit);
    }
    Ok(edits)
}
