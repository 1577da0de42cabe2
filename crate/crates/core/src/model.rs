//! Timetable data model: stops, footpaths, trips, routes, and the packed
//! trip-instance identifier scheme.
//!
//! A `Timetable` is immutable after construction and safe to share across
//! concurrent readers; edits go through the `update` module, which produces
//! a fresh snapshot.

use std::collections::HashMap;

use crate::bitset::DayBitset;
use crate::error::ModelError;
use crate::time::{abs_time, AbsTime, RelTime};

pub type StopIdx = u32;
pub type RouteIdx = u32;
pub type TripIdx = u32;

/// Bits reserved for the trip index inside a packed trip reference; the day
/// offset lives in the higher bits so that integer comparison of packed values
/// equals lexicographic comparison of (day offset, trip index).
pub const TRIP_INDEX_BITS: u32 = 24;
const TRIP_INDEX_MASK: u64 = (1 << TRIP_INDEX_BITS) - 1;
const MAX_DAY_OFFSET: u64 = 1 << 16;

/// `(day_offset << 24) | trip_index`.
///
/// Day offsets are query-relative: 1 is the query day, 2 the next day, and 0
/// the day before the query day (for trips that cross midnight into it).
pub fn pack_trip_ref(day_offset: u32, trip_index: u32) -> Result<u64, ModelError> {
    if u64::from(trip_index) > TRIP_INDEX_MASK {
        return Err(ModelError::TripIndexOutOfRange(u64::from(trip_index)));
    }
    if u64::from(day_offset) > MAX_DAY_OFFSET {
        return Err(ModelError::DayOffsetOutOfRange(u64::from(day_offset)));
    }
    Ok((u64::from(day_offset) << TRIP_INDEX_BITS) | u64::from(trip_index))
}

/// Exact inverse of [`pack_trip_ref`]: returns `(day_offset, trip_index)`.
pub fn unpack_trip_ref(packed: u64) -> (u32, u32) {
    ((packed >> TRIP_INDEX_BITS) as u32, (packed & TRIP_INDEX_MASK) as u32)
}

/// A trip instance identifier: route plus packed (day offset, trip index).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TripRef {
    pub route: RouteIdx,
    pub packed: u64,
}

impl TripRef {
    pub fn new(route: RouteIdx, day_offset: u32, trip_index: u32) -> Result<Self, ModelError> {
        Ok(TripRef {
            route,
            packed: pack_trip_ref(day_offset, trip_index)?,
        })
    }

    pub fn day_offset(self) -> u32 {
        unpack_trip_ref(self.packed).0
    }

    pub fn trip_index(self) -> u32 {
        unpack_trip_ref(self.packed).1
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stop {
    /// Opaque external identifier (GTFS stop_id or synthetic name).
    pub id: String,
    pub name: String,
    /// Minimum change time in seconds for same-stop transfers.
    pub min_change_time: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Footpath {
    pub from: StopIdx,
    pub to: StopIdx,
    /// Walk duration in seconds, strictly positive.
    pub duration: u32,
}

/// Per-(stop, route-pair) minimum change time override. Routes are identified
/// by their stop sequences so the override survives route re-partitioning.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChangeTimeOverride {
    pub stop: StopIdx,
    pub from_sequence: Vec<StopIdx>,
    pub to_sequence: Vec<StopIdx>,
    pub seconds: u32,
}

/// One vehicle run over a route's stop sequence.
///
/// By convention the arrival at the first stop is stored as 0 and the
/// departure from the last stop reads as infinite: passengers cannot alight
/// before riding nor board where the vehicle terminates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trip {
    arr: Vec<RelTime>,
    dep: Vec<RelTime>,
    pub active_days: DayBitset,
}

impl Trip {
    pub fn new(
        mut arr: Vec<RelTime>,
        mut dep: Vec<RelTime>,
        active_days: DayBitset,
    ) -> Result<Self, ModelError> {
        let n = arr.len();
        if n < 2 {
            return Err(ModelError::TooFewStops(n));
        }
        if dep.len() != n {
            return Err(ModelError::MismatchedTripLengths);
        }
        if !active_days.any() {
            return Err(ModelError::EmptyActiveDays);
        }
        for i in 1..n - 1 {
            if arr[i] > dep[i] {
                return Err(ModelError::NonMonotoneTrip(i));
            }
        }
        for i in 0..n - 1 {
            if dep[i] > arr[i + 1] {
                return Err(ModelError::NonMonotoneTrip(i));
            }
        }
        // Normalize the sentinel positions so identical schedules compare equal.
        arr[0] = RelTime::from_seconds_unchecked(0);
        dep[n - 1] = arr[n - 1];
        Ok(Trip { arr, dep, active_days })
    }

    pub fn stop_count(&self) -> usize {
        self.arr.len()
    }

    /// Arrival at stop index `i`; index 0 reads as 0 (no arrival there).
    pub fn arrival_at(&self, i: usize) -> RelTime {
        self.arr[i]
    }

    /// Departure from stop index `i`; the last index reads as infinite.
    pub fn departure_at(&self, i: usize) -> RelTime {
        if i == self.dep.len() - 1 {
            RelTime::INFINITE
        } else {
            self.dep[i]
        }
    }

    /// Raw stored departure, used only by serialization.
    pub fn raw_departure_at(&self, i: usize) -> RelTime {
        self.dep[i]
    }

    pub fn arrival_abs(&self, day: i64, i: usize) -> AbsTime {
        abs_time(day, self.arrival_at(i))
    }

    pub fn departure_abs(&self, day: i64, i: usize) -> AbsTime {
        abs_time(day, self.departure_at(i))
    }

    /// The no-overtaking order of Eq-style route grouping: true when this trip
    /// arrives and departs no later than `other` at every stop index.
    pub fn precedes_or_equal(&self, other: &Trip) -> bool {
        debug_assert_eq!(self.stop_count(), other.stop_count());
        let n = self.stop_count();
        (0..n).all(|i| {
            self.arrival_at(i) <= other.arrival_at(i)
                && self.departure_at(i) <= other.departure_at(i)
        })
    }

    /// Intrinsic sort key for deterministic route partitioning; independent of
    /// input ordering so that rebuilds reproduce identical structures.
    pub fn order_key(&self) -> (RelTime, RelTime, &[RelTime], &[RelTime], &DayBitset) {
        (
            self.dep[0],
            self.arr[self.arr.len() - 1],
            &self.dep,
            &self.arr,
            &self.active_days,
        )
    }
}

/// Maximal group of trips over one stop sequence where no trip overtakes
/// another, totally ordered by `precedes_or_equal`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Route {
    pub stops: Vec<StopIdx>,
    pub trips: Vec<Trip>,
}

impl Route {
    pub fn last_boardable_index(&self) -> usize {
        self.stops.len() - 2
    }
}

/// A trip not yet assigned to a route; what ingest produces.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DraftTrip {
    pub stops: Vec<StopIdx>,
    pub trip: Trip,
}

impl DraftTrip {
    pub fn new(
        stops: Vec<StopIdx>,
        arr: Vec<RelTime>,
        dep: Vec<RelTime>,
        active_days: DayBitset,
    ) -> Result<Self, ModelError> {
        if stops.len() != arr.len() {
            return Err(ModelError::MismatchedTripLengths);
        }
        let trip = Trip::new(arr, dep, active_days)?;
        Ok(DraftTrip { stops, trip })
    }
}

/// Everything a timetable contains before trips are partitioned into routes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TimetableDraft {
    pub horizon_days: u32,
    pub start_date: Option<chrono::NaiveDate>,
    pub stops: Vec<Stop>,
    pub footpaths: Vec<Footpath>,
    pub overrides: Vec<ChangeTimeOverride>,
    pub trips: Vec<DraftTrip>,
}

impl TimetableDraft {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.horizon_days == 0 {
            return Err(ModelError::EmptyHorizon);
        }
        let n_stops = self.stops.len() as u32;
        let mut seen_pairs = HashMap::new();
        for fp in &self.footpaths {
            if fp.from == fp.to {
                return Err(ModelError::SelfFootpath(fp.from));
            }
            if fp.duration == 0 {
                return Err(ModelError::NonPositiveFootpath);
            }
            if fp.from >= n_stops || fp.to >= n_stops {
                return Err(ModelError::UnknownStopIndex(fp.from.max(fp.to)));
            }
            if seen_pairs.insert((fp.from, fp.to), ()).is_some() {
                return Err(ModelError::DuplicateFootpath(fp.from, fp.to));
            }
        }
        for draft in &self.trips {
            for &s in &draft.stops {
                if s >= n_stops {
                    return Err(ModelError::UnknownStopIndex(s));
                }
            }
            if draft.trip.active_days.len() != self.horizon_days as usize {
                return Err(ModelError::BitsetLengthMismatch {
                    got: draft.trip.active_days.len(),
                    want: self.horizon_days as usize,
                });
            }
        }
        for ov in &self.overrides {
            if ov.stop >= n_stops {
                return Err(ModelError::UnknownStopIndex(ov.stop));
            }
        }
        Ok(())
    }
}

/// The single source of truth: stops, footpaths, and routes owning trips,
/// over a horizon of `horizon_days` days.
#[derive(Clone, Debug)]
pub struct Timetable {
    pub horizon_days: u32,
    pub start_date: Option<chrono::NaiveDate>,
    pub stops: Vec<Stop>,
    pub footpaths: Vec<Footpath>,
    pub overrides: Vec<ChangeTimeOverride>,
    pub routes: Vec<Route>,

    // Derived indexes, rebuilt whenever routes change.
    footpaths_out: Vec<Vec<(StopIdx, u32)>>,
    footpaths_in: Vec<Vec<(StopIdx, u32)>>,
    stop_routes: Vec<Vec<(RouteIdx, u16)>>,
    override_by_route: HashMap<(StopIdx, RouteIdx, RouteIdx), u32>,
    trip_row_offsets: Vec<u32>,
    stop_index: HashMap<String, StopIdx>,
}

impl PartialEq for Timetable {
    fn eq(&self, other: &Self) -> bool {
        self.horizon_days == other.horizon_days
            && self.start_date == other.start_date
            && self.stops == other.stops
            && self.footpaths == other.footpaths
            && self.overrides == other.overrides
            && self.routes == other.routes
    }
}

impl Timetable {
    /// Assembles a timetable from already-partitioned routes and rebuilds all
    /// derived indexes. `preprocess::partition_routes` is the normal entry.
    pub fn assemble(
        horizon_days: u32,
        start_date: Option<chrono::NaiveDate>,
        stops: Vec<Stop>,
        mut footpaths: Vec<Footpath>,
        mut overrides: Vec<ChangeTimeOverride>,
        routes: Vec<Route>,
    ) -> Timetable {
        footpaths.sort_by_key(|f| (f.from, f.to));
        overrides.sort_by(|a, b| {
            (a.stop, &a.from_sequence, &a.to_sequence).cmp(&(b.stop, &b.from_sequence, &b.to_sequence))
        });
        let mut tt = Timetable {
            horizon_days,
            start_date,
            stops,
            footpaths,
            overrides,
            routes,
            footpaths_out: Vec::new(),
            footpaths_in: Vec::new(),
            stop_routes: Vec::new(),
            override_by_route: HashMap::new(),
            trip_row_offsets: Vec::new(),
            stop_index: HashMap::new(),
        };
        tt.rebuild_indexes();
        tt
    }

    pub fn rebuild_indexes(&mut self) {
        let n = self.stops.len();
        self.footpaths_out = vec![Vec::new(); n];
        self.footpaths_in = vec![Vec::new(); n];
        for fp in &self.footpaths {
            self.footpaths_out[fp.from as usize].push((fp.to, fp.duration));
            self.footpaths_in[fp.to as usize].push((fp.from, fp.duration));
        }
        for v in &mut self.footpaths_out {
            v.sort_unstable();
        }
        for v in &mut self.footpaths_in {
            v.sort_unstable();
        }
        self.stop_routes = vec![Vec::new(); n];
        for (ri, route) in self.routes.iter().enumerate() {
            for (si, &s) in route.stops.iter().enumerate() {
                self.stop_routes[s as usize].push((ri as RouteIdx, si as u16));
            }
        }
        self.override_by_route.clear();
        if !self.overrides.is_empty() {
            let mut by_seq: HashMap<&[StopIdx], Vec<RouteIdx>> = HashMap::new();
            for (ri, route) in self.routes.iter().enumerate() {
                by_seq.entry(route.stops.as_slice()).or_default().push(ri as RouteIdx);
            }
            for ov in &self.overrides {
                let (Some(froms), Some(tos)) = (
                    by_seq.get(ov.from_sequence.as_slice()),
                    by_seq.get(ov.to_sequence.as_slice()),
                ) else {
                    continue;
                };
                for &fr in froms {
                    for &to in tos {
                        self.override_by_route.insert((ov.stop, fr, to), ov.seconds);
                    }
                }
            }
        }
        self.trip_row_offsets = Vec::with_capacity(self.routes.len() + 1);
        let mut acc = 0u32;
        for route in &self.routes {
            self.trip_row_offsets.push(acc);
            acc += route.trips.len() as u32;
        }
        self.trip_row_offsets.push(acc);
        self.stop_index = self
            .stops
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.clone(), i as StopIdx))
            .collect();
    }

    pub fn trip(&self, route: RouteIdx, trip: TripIdx) -> &Trip {
        &self.routes[route as usize].trips[trip as usize]
    }

    pub fn route(&self, route: RouteIdx) -> &Route {
        &self.routes[route as usize]
    }

    pub fn total_trips(&self) -> u32 {
        *self.trip_row_offsets.last().unwrap_or(&0)
    }

    /// Total number of (trip, active day) instances, the size measure used by
    /// benchmarks and test-corpus limits.
    pub fn total_trip_days(&self) -> u64 {
        self.routes
            .iter()
            .flat_map(|r| &r.trips)
            .map(|t| t.active_days.count_ones() as u64)
            .sum()
    }

    /// Dense row index for per-trip storage such as transfer sets.
    pub fn trip_row(&self, route: RouteIdx, trip: TripIdx) -> usize {
        self.trip_row_offsets[route as usize] as usize + trip as usize
    }

    pub fn trip_row_offsets(&self) -> &[u32] {
        &self.trip_row_offsets
    }

    /// Routes visiting a stop, with the stop's index in each route's sequence.
    pub fn routes_at(&self, stop: StopIdx) -> &[(RouteIdx, u16)] {
        &self.stop_routes[stop as usize]
    }

    pub fn footpaths_from(&self, stop: StopIdx) -> &[(StopIdx, u32)] {
        &self.footpaths_out[stop as usize]
    }

    pub fn footpaths_into(&self, stop: StopIdx) -> &[(StopIdx, u32)] {
        &self.footpaths_in[stop as usize]
    }

    pub fn footpath_duration(&self, from: StopIdx, to: StopIdx) -> Option<u32> {
        self.footpaths_out[from as usize]
            .iter()
            .find(|(t, _)| *t == to)
            .map(|(_, d)| *d)
    }

    /// Minimum change time for a same-stop transfer between two routes,
    /// honouring any (stop, route-pair) override.
    pub fn change_time(&self, stop: StopIdx, from_route: RouteIdx, to_route: RouteIdx) -> u32 {
        if let Some(&s) = self.override_by_route.get(&(stop, from_route, to_route)) {
            return s;
        }
        self.stops[stop as usize].min_change_time
    }

    /// Bounds for the change time at a stop across all route pairs; the
    /// reduction pass uses these to stay conservative under overrides.
    pub fn change_time_bounds(&self, stop: StopIdx) -> (u32, u32) {
        let base = self.stops[stop as usize].min_change_time;
        let mut lo = base;
        let mut hi = base;
        if !self.override_by_route.is_empty() {
            for ((s, _, _), &v) in &self.override_by_route {
                if *s == stop {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
        (lo, hi)
    }

    pub fn has_change_time_overrides(&self) -> bool {
        !self.override_by_route.is_empty()
    }

    pub fn stop_by_id(&self, id: &str) -> Option<StopIdx> {
        self.stop_index.get(id).copied()
    }

    /// Flattens routes back into draft trips (used by serialization and
    /// re-partitioning). The inverse of `partition_routes` up to grouping.
    pub fn to_draft(&self) -> TimetableDraft {
        let mut trips = Vec::with_capacity(self.total_trips() as usize);
        for route in &self.routes {
            for trip in &route.trips {
                trips.push(DraftTrip {
                    stops: route.stops.clone(),
                    trip: trip.clone(),
                });
            }
        }
        TimetableDraft {
            horizon_days: self.horizon_days,
            start_date: self.start_date,
            stops: self.stops.clone(),
            footpaths: self.footpaths.clone(),
            overrides: self.overrides.clone(),
            trips,
        }
    }

    /// Full structural invariant check: route total order, bitset lengths,
    /// stop references. Used by tests and after updates.
    pub fn check_invariants(&self) -> Result<(), String> {
        let n_stops = self.stops.len() as u32;
        for fp in &self.footpaths {
            if fp.from >= n_stops || fp.to >= n_stops {
                return Err(format!("footpath references unknown stop {:?}", fp));
            }
        }
        for (ri, route) in self.routes.iter().enumerate() {
            if route.stops.len() < 2 {
                return Err(format!("route {ri} has fewer than 2 stops"));
            }
            if route.trips.is_empty() {
                return Err(format!("route {ri} has no trips"));
            }
            for &s in &route.stops {
                if s >= n_stops {
                    return Err(format!("route {ri} references unknown stop {s}"));
                }
            }
            for (ti, trip) in route.trips.iter().enumerate() {
                if trip.stop_count() != route.stops.len() {
                    return Err(format!("route {ri} trip {ti} length mismatch"));
                }
                if trip.active_days.len() != self.horizon_days as usize {
                    return Err(format!("route {ri} trip {ti} bitset length mismatch"));
                }
                if !trip.active_days.any() {
                    return Err(format!("route {ri} trip {ti} has no active days"));
                }
            }
            for w in route.trips.windows(2) {
                if !w[0].precedes_or_equal(&w[1]) {
                    return Err(format!("route {ri} violates the no-overtaking total order"));
                }
            }
        }
        Ok(())
    }
}
