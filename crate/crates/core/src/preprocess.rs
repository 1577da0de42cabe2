//! Preprocessing: partitions trips into non-overtaking routes, computes all
//! feasible transfers with service-day bit sets, and reduces them to the
//! subset that can still contribute non-dominated journeys.

use std::collections::BTreeMap;
use std::collections::HashMap;

use rayon::prelude::*;

use crate::bitset::DayBitset;
use crate::error::{ArtifactError, ModelError};
use crate::model::{
    pack_trip_ref, Route, RouteIdx, StopIdx, Timetable, TimetableDraft, Trip, TripIdx,
};
use crate::time::SECONDS_PER_DAY;

/// Largest day shift a single transfer may span: same day, next day, or the
/// day after. Covers a midnight-crossing trip plus change-time spill.
pub const DEFAULT_MAX_DAY_SHIFT: u8 = 2;

/// Trips of one route stay within this spread of each other at every stop
/// index, so that packed (day offset, trip index) order always agrees with
/// absolute departure/arrival order across consecutive days. Candidates
/// exceeding it open a new route.
pub const MAX_ROUTE_TIME_SPREAD: i64 = SECONDS_PER_DAY;

/// A precomputed vehicle change: exit the owning trip at `from_stop_index`,
/// board trip `to_trip_index` of `to_route` at `to_stop_index`, `day_shift`
/// days later. `valid_days` is indexed by the source trip's service day.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transfer {
    pub from_stop_index: u16,
    pub to_route: RouteIdx,
    pub to_trip_index: TripIdx,
    pub to_stop_index: u16,
    pub day_shift: u8,
    pub valid_days: DayBitset,
}

/// All transfers of a timetable, one row per trip in dense row order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransferSet {
    pub reduced: bool,
    pub horizon_days: u32,
    pub max_day_shift: u8,
    /// Trips per route, mirroring the timetable shape the set was built from.
    pub route_trip_counts: Vec<u32>,
    rows: Vec<Vec<Transfer>>,
}

impl TransferSet {
    pub(crate) fn from_rows(
        reduced: bool,
        horizon_days: u32,
        max_day_shift: u8,
        route_trip_counts: Vec<u32>,
        rows: Vec<Vec<Transfer>>,
    ) -> Self {
        TransferSet {
            reduced,
            horizon_days,
            max_day_shift,
            route_trip_counts,
            rows,
        }
    }

    pub fn row(&self, row: usize) -> &[Transfer] {
        &self.rows[row]
    }

    pub fn rows(&self) -> &[Vec<Transfer>] {
        &self.rows
    }

    pub fn transfer_count(&self) -> u64 {
        self.rows.iter().map(|r| r.len() as u64).sum()
    }

    pub fn replace_row(&mut self, row: usize, transfers: Vec<Transfer>) {
        self.rows[row] = transfers;
    }

    pub fn matches_shape(&self, tt: &Timetable) -> bool {
        self.horizon_days == tt.horizon_days
            && self.route_trip_counts.len() == tt.routes.len()
            && self
                .route_trip_counts
                .iter()
                .zip(&tt.routes)
                .all(|(n, r)| *n as usize == r.trips.len())
    }
}

// ---------------------------------------------------------------------------
// Route partitioning
// ---------------------------------------------------------------------------

/// Partitions draft trips into routes: trips sharing a stop sequence are
/// sorted by an intrinsic key and greedily appended to the first route whose
/// last trip they do not overtake and whose time spread stays within a day.
///
/// The result is a deterministic function of the trip multiset, which is what
/// makes incremental updates reproduce fresh preprocessing exactly.
pub fn partition_routes(draft: TimetableDraft) -> Result<Timetable, ModelError> {
    draft.validate()?;
    let TimetableDraft {
        horizon_days,
        start_date,
        stops,
        footpaths,
        overrides,
        trips,
    } = draft;

    let mut groups: BTreeMap<Vec<StopIdx>, Vec<Trip>> = BTreeMap::new();
    for draft_trip in trips {
        groups.entry(draft_trip.stops).or_default().push(draft_trip.trip);
    }

    let mut routes = Vec::new();
    for (stop_seq, group) in groups {
        for route in partition_group(stop_seq, group) {
            routes.push(route);
        }
    }

    let tt = Timetable::assemble(horizon_days, start_date, stops, footpaths, overrides, routes);
    debug_assert_eq!(tt.check_invariants(), Ok(()));
    Ok(tt)
}

fn partition_group(stop_seq: Vec<StopIdx>, mut group: Vec<Trip>) -> Vec<Route> {
    group.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
    let mut routes: Vec<Route> = Vec::new();
    'next_trip: for trip in group {
        for route in &mut routes {
            let last = route.trips.last().unwrap();
            if last.precedes_or_equal(&trip) && within_spread(&route.trips[0], &trip) {
                route.trips.push(trip);
                continue 'next_trip;
            }
        }
        routes.push(Route {
            stops: stop_seq.clone(),
            trips: vec![trip],
        });
    }
    routes
}

fn within_spread(first: &Trip, candidate: &Trip) -> bool {
    let n = first.stop_count();
    (0..n).all(|i| {
        let arr_ok = candidate.arrival_at(i).seconds() - first.arrival_at(i).seconds()
            <= MAX_ROUTE_TIME_SPREAD;
        let dep_ok = candidate.departure_at(i).is_infinite()
            || candidate.departure_at(i).seconds() - first.departure_at(i).seconds()
                <= MAX_ROUTE_TIME_SPREAD;
        arr_ok && dep_ok
    })
}

/// Re-partitions only the trips sharing `stop_seq`, leaving other routes
/// untouched. Returns the edited route list in canonical order.
pub(crate) fn repartition_sequence(
    routes: Vec<Route>,
    stop_seq: &[StopIdx],
    extra: Vec<Trip>,
) -> Vec<Route> {
    let mut grouped: Vec<Trip> = extra;
    let mut rest: Vec<Route> = Vec::new();
    for route in routes {
        if route.stops == stop_seq {
            grouped.extend(route.trips);
        } else {
            rest.push(route);
        }
    }
    if !grouped.is_empty() {
        rest.extend(partition_group(stop_seq.to_vec(), grouped));
    }
    // canonical global order: by stop sequence, then opening order inside the
    // group (partition_group already emits opening order; stable sort keeps it)
    rest.sort_by(|a, b| a.stops.cmp(&b.stops));
    rest
}

// ---------------------------------------------------------------------------
// Transfer computation
// ---------------------------------------------------------------------------

/// Computes the full transfer set: for every trip, exit index, and reachable
/// (route, boarding index) — directly at the exit stop or via one footpath —
/// the earliest reachable trip instance per source day, merged over days into
/// bit sets. Per-trip work is independent and runs in parallel.
pub fn compute_transfers(tt: &Timetable) -> TransferSet {
    compute_transfers_with(tt, DEFAULT_MAX_DAY_SHIFT)
}

pub fn compute_transfers_with(tt: &Timetable, max_day_shift: u8) -> TransferSet {
    let keys: Vec<(RouteIdx, TripIdx)> = trip_keys(tt);
    let rows: Vec<Vec<Transfer>> = keys
        .par_iter()
        .map(|&(route, trip)| compute_trip_transfers(tt, route, trip, max_day_shift))
        .collect();
    TransferSet {
        reduced: false,
        horizon_days: tt.horizon_days,
        max_day_shift,
        route_trip_counts: tt.routes.iter().map(|r| r.trips.len() as u32).collect(),
        rows,
    }
}

fn trip_keys(tt: &Timetable) -> Vec<(RouteIdx, TripIdx)> {
    let mut keys = Vec::with_capacity(tt.total_trips() as usize);
    for (ri, route) in tt.routes.iter().enumerate() {
        for ti in 0..route.trips.len() {
            keys.push((ri as RouteIdx, ti as TripIdx));
        }
    }
    keys
}

/// Transfers leaving one trip. Deterministic: output sorted by
/// (from_stop_index, to_route, day_shift, to_trip_index, to_stop_index).
pub fn compute_trip_transfers(
    tt: &Timetable,
    route: RouteIdx,
    trip_index: TripIdx,
    max_day_shift: u8,
) -> Vec<Transfer> {
    let horizon = tt.horizon_days as usize;
    let src_route = tt.route(route);
    let trip = &src_route.trips[trip_index as usize];
    let mut merged: BTreeMap<(u16, RouteIdx, u8, TripIdx, u16), DayBitset> = BTreeMap::new();

    for e in 1..src_route.stops.len() {
        let exit_stop = src_route.stops[e];
        let arr = trip.arrival_at(e).seconds();

        // Same-stop boardings, then boardings one footpath away.
        collect_targets(tt, route, exit_stop, None, arr, trip, max_day_shift, e, &mut merged);
        for &(walk_to, walk_secs) in tt.footpaths_from(exit_stop) {
            collect_targets(
                tt,
                route,
                walk_to,
                Some(walk_secs),
                arr,
                trip,
                max_day_shift,
                e,
                &mut merged,
            );
        }
    }

    merged
        .into_iter()
        .map(|((from_idx, to_route, shift, to_trip, to_idx), bits)| Transfer {
            from_stop_index: from_idx,
            to_route,
            to_trip_index: to_trip,
            to_stop_index: to_idx,
            day_shift: shift,
            valid_days: bits,
        })
        .filter(|t| {
            debug_assert_eq!(t.valid_days.len(), horizon);
            t.valid_days.any()
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn collect_targets(
    tt: &Timetable,
    from_route: RouteIdx,
    board_stop: StopIdx,
    walk: Option<u32>,
    arr_seconds: i64,
    trip: &Trip,
    max_day_shift: u8,
    exit_index: usize,
    merged: &mut BTreeMap<(u16, RouteIdx, u8, TripIdx, u16), DayBitset>,
) {
    let horizon = tt.horizon_days as i64;
    for &(to_route, b) in tt.routes_at(board_stop) {
        let target = tt.route(to_route);
        if b as usize > target.last_boardable_index() {
            continue;
        }
        let cost = match walk {
            Some(w) => i64::from(w),
            None => i64::from(tt.change_time(board_stop, from_route, to_route)),
        };
        let threshold = arr_seconds + cost;

        // Earliest time-feasible trip per day shift; departures at a fixed
        // index are non-decreasing in trip order, so binary search applies.
        let first_feasible: Vec<usize> = (0..=max_day_shift)
            .map(|shift| {
                let need = threshold - i64::from(shift) * SECONDS_PER_DAY;
                target
                    .trips
                    .partition_point(|u| u.departure_at(b as usize).seconds() < need)
            })
            .collect();

        for d in trip.active_days.iter_ones() {
            'shifts: for shift in 0..=max_day_shift {
                let target_day = d as i64 + i64::from(shift);
                if target_day >= horizon {
                    break;
                }
                for (u_idx, u) in target.trips.iter().enumerate().skip(first_feasible[shift as usize]) {
                    if u.active_days.get(target_day as usize) {
                        merged
                            .entry((exit_index as u16, to_route, shift, u_idx as TripIdx, b))
                            .or_insert_with(|| DayBitset::new(horizon as usize))
                            .set(d)
                            .unwrap();
                        break 'shifts;
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Transfer reduction
// ---------------------------------------------------------------------------

/// Removes transfers that cannot contribute a non-dominated journey. For each
/// trip and each of its active days, stops are swept in reverse order while
/// per-stop earliest-arrival and earliest-boarding labels accumulate what the
/// trip's own ride and already-kept transfers achieve; a transfer survives a
/// day only if simulating its target ride improves some label or reaches an
/// earlier trip (or earlier stop index) of its target route than recorded.
/// Query results are identical under the full and the reduced set.
pub fn reduce_transfers(tt: &Timetable, full: &TransferSet) -> TransferSet {
    let keys = trip_keys(tt);
    let rows: Vec<Vec<Transfer>> = keys
        .par_iter()
        .map(|&(route, trip)| {
            reduce_trip_transfers(tt, route, trip, full.row(tt.trip_row(route, trip)))
        })
        .collect();
    TransferSet {
        reduced: true,
        horizon_days: full.horizon_days,
        max_day_shift: full.max_day_shift,
        route_trip_counts: full.route_trip_counts.clone(),
        rows,
    }
}

struct ReduceLabels {
    vehicle: Vec<i64>,
    arrival: Vec<i64>,
    boarding: Vec<i64>,
    dirty: Vec<StopIdx>,
}

impl ReduceLabels {
    fn new(n_stops: usize) -> Self {
        ReduceLabels {
            vehicle: vec![i64::MAX; n_stops],
            arrival: vec![i64::MAX; n_stops],
            boarding: vec![i64::MAX; n_stops],
            dirty: Vec::new(),
        }
    }

    fn reset(&mut self) {
        for &s in &self.dirty {
            self.vehicle[s as usize] = i64::MAX;
            self.arrival[s as usize] = i64::MAX;
            self.boarding[s as usize] = i64::MAX;
        }
        self.dirty.clear();
    }

    fn touch(&mut self, stop: StopIdx) {
        if self.vehicle[stop as usize] == i64::MAX
            && self.arrival[stop as usize] == i64::MAX
            && self.boarding[stop as usize] == i64::MAX
        {
            self.dirty.push(stop);
        }
    }
}

/// Reduces one trip's transfer row; `full_row` must be the computed full row.
pub fn reduce_trip_transfers(
    tt: &Timetable,
    route: RouteIdx,
    trip_index: TripIdx,
    full_row: &[Transfer],
) -> Vec<Transfer> {
    let horizon = tt.horizon_days as usize;
    let src_route = tt.route(route);
    let trip = &src_route.trips[trip_index as usize];
    let n_stops = src_route.stops.len();

    let mut kept_bits: Vec<DayBitset> = vec![DayBitset::new(horizon); full_row.len()];
    let mut labels = ReduceLabels::new(tt.stops.len());

    // transfer positions grouped by exit index (rows are sorted by it)
    let mut by_exit: Vec<(usize, usize)> = vec![(0, 0); n_stops];
    {
        let mut i = 0;
        for e in 0..n_stops {
            let start = i;
            while i < full_row.len() && full_row[i].from_stop_index as usize == e {
                i += 1;
            }
            by_exit[e] = (start, i);
        }
        debug_assert_eq!(i, full_row.len());
    }

    for day in trip.active_days.iter_ones() {
        labels.reset();
        // reached target instances: per route, Pareto pairs (packed, board index)
        let mut reached: HashMap<RouteIdx, Vec<(u64, u16)>> = HashMap::new();

        for e in (1..n_stops).rev() {
            commit_vehicle_arrival(tt, &mut labels, src_route.stops[e], trip.arrival_at(e).seconds());

            let (lo, hi) = by_exit[e];
            for pos in lo..hi {
                let transfer = &full_row[pos];
                if !transfer.valid_days.get(day) {
                    continue;
                }
                let packed = pack_trip_ref(u32::from(transfer.day_shift), transfer.to_trip_index)
                    .expect("packed transfer target in range");
                let records = reached.entry(transfer.to_route).or_default();
                let reach_improves = records.iter().any(|&(p, i)| {
                    packed <= p
                        && transfer.to_stop_index <= i
                        && (packed < p || transfer.to_stop_index < i)
                });
                let ride_improves = target_ride_improves(tt, &labels, transfer);

                if ride_improves || reach_improves {
                    kept_bits[pos].set(day).unwrap();
                    commit_target_ride(tt, &mut labels, transfer);
                    pareto_insert_record(records, packed, transfer.to_stop_index);
                }
            }
        }
    }

    full_row
        .iter()
        .zip(kept_bits)
        .filter(|(_, bits)| bits.any())
        .map(|(t, bits)| Transfer {
            valid_days: bits,
            ..t.clone()
        })
        .collect()
}

fn pareto_insert_record(records: &mut Vec<(u64, u16)>, packed: u64, index: u16) {
    if records.iter().any(|&(p, i)| p <= packed && i <= index) {
        return;
    }
    records.retain(|&(p, i)| !(packed <= p && index <= i));
    records.push((packed, index));
}

/// Folds a vehicle arrival at `stop` into the labels: presence for journey
/// ends, boarding enablement after the change time, and both again one
/// footpath away (footpath boardings need no change time).
fn commit_vehicle_arrival(tt: &Timetable, labels: &mut ReduceLabels, stop: StopIdx, at: i64) {
    if at >= labels.vehicle[stop as usize] {
        return;
    }
    labels.touch(stop);
    labels.vehicle[stop as usize] = at;
    if at < labels.arrival[stop as usize] {
        labels.arrival[stop as usize] = at;
    }
    let (_, chg_hi) = tt.change_time_bounds(stop);
    let enable = at + i64::from(chg_hi);
    if enable < labels.boarding[stop as usize] {
        labels.boarding[stop as usize] = enable;
    }
    for &(next, walk) in tt.footpaths_from(stop) {
        let there = at + i64::from(walk);
        labels.touch(next);
        if there < labels.arrival[next as usize] {
            labels.arrival[next as usize] = there;
        }
        if there < labels.boarding[next as usize] {
            labels.boarding[next as usize] = there;
        }
    }
}

/// Dry run of riding the transfer target from its boarding index to the end:
/// true when any stop becomes reachable earlier, boardable earlier, or a
/// footpath extension of it improves. Labels are not modified.
fn target_ride_improves(tt: &Timetable, labels: &ReduceLabels, transfer: &Transfer) -> bool {
    let target = tt.route(transfer.to_route);
    let u = &target.trips[transfer.to_trip_index as usize];
    let shift = i64::from(transfer.day_shift) * SECONDS_PER_DAY;
    for k in transfer.to_stop_index as usize + 1..target.stops.len() {
        let stop = target.stops[k];
        let at = u.arrival_at(k).seconds() + shift;
        if at < labels.vehicle[stop as usize] {
            if at < labels.arrival[stop as usize] {
                return true;
            }
            let (chg_lo, _) = tt.change_time_bounds(stop);
            if at + i64::from(chg_lo) < labels.boarding[stop as usize] {
                return true;
            }
            for &(next, walk) in tt.footpaths_from(stop) {
                let there = at + i64::from(walk);
                if there < labels.arrival[next as usize] || there < labels.boarding[next as usize] {
                    return true;
                }
            }
        } else if tt.has_change_time_overrides() {
            // A later vehicle may still enable an earlier boarding for some
            // route pair when per-pair change times differ.
            let (chg_lo, _) = tt.change_time_bounds(stop);
            if at + i64::from(chg_lo) < labels.boarding[stop as usize] {
                return true;
            }
        }
    }
    false
}

fn commit_target_ride(tt: &Timetable, labels: &mut ReduceLabels, transfer: &Transfer) {
    let target = tt.route(transfer.to_route);
    let u = &target.trips[transfer.to_trip_index as usize];
    let shift = i64::from(transfer.day_shift) * SECONDS_PER_DAY;
    for k in transfer.to_stop_index as usize + 1..target.stops.len() {
        commit_vehicle_arrival(tt, labels, target.stops[k], u.arrival_at(k).seconds() + shift);
    }
}

// ---------------------------------------------------------------------------
// Binary serialization
// ---------------------------------------------------------------------------

const MAGIC: &[u8; 4] = b"TBTS";
const VERSION: u32 = 1;

impl TransferSet {
    /// Canonical little-endian encoding; byte-identical for identical inputs,
    /// which is what the rebuild-equivalence contract of updates is tested
    /// against.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(u8::from(self.reduced));
        out.push(self.max_day_shift);
        out.extend_from_slice(&self.horizon_days.to_le_bytes());
        out.extend_from_slice(&(self.route_trip_counts.len() as u32).to_le_bytes());
        for &n in &self.route_trip_counts {
            out.extend_from_slice(&n.to_le_bytes());
        }
        for row in &self.rows {
            out.extend_from_slice(&(row.len() as u32).to_le_bytes());
            for t in row {
                out.extend_from_slice(&t.from_stop_index.to_le_bytes());
                out.extend_from_slice(&t.to_route.to_le_bytes());
                out.extend_from_slice(&t.to_trip_index.to_le_bytes());
                out.extend_from_slice(&t.to_stop_index.to_le_bytes());
                out.push(t.day_shift);
                for block in t.valid_days.blocks() {
                    out.extend_from_slice(&block.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(data: &[u8]) -> Result<TransferSet, ArtifactError> {
        let mut r = Reader { data, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(ArtifactError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(ArtifactError::BadVersion(version));
        }
        let reduced = r.u8()? != 0;
        let max_day_shift = r.u8()?;
        let horizon_days = r.u32()?;
        let n_routes = r.u32()? as usize;
        let mut route_trip_counts = Vec::with_capacity(n_routes);
        for _ in 0..n_routes {
            route_trip_counts.push(r.u32()?);
        }
        let total: u64 = route_trip_counts.iter().map(|&n| u64::from(n)).sum();
        let blocks_per_set = (horizon_days as usize).div_ceil(64);
        let mut rows = Vec::with_capacity(total as usize);
        for _ in 0..total {
            let n = r.u32()? as usize;
            let mut row = Vec::with_capacity(n);
            for _ in 0..n {
                let from_stop_index = r.u16()?;
                let to_route = r.u32()?;
                let to_trip_index = r.u32()?;
                let to_stop_index = r.u16()?;
                let day_shift = r.u8()?;
                let mut blocks = Vec::with_capacity(blocks_per_set);
                for _ in 0..blocks_per_set {
                    blocks.push(r.u64()?);
                }
                let valid_days = DayBitset::from_blocks(horizon_days as usize, blocks)
                    .map_err(|e| ArtifactError::Corrupt(e.to_string()))?;
                row.push(Transfer {
                    from_stop_index,
                    to_route,
                    to_trip_index,
                    to_stop_index,
                    day_shift,
                    valid_days,
                });
            }
            rows.push(row);
        }
        if r.pos != data.len() {
            return Err(ArtifactError::Corrupt("trailing bytes".into()));
        }
        Ok(TransferSet {
            reduced,
            horizon_days,
            max_day_shift,
            route_trip_counts,
            rows,
        })
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ArtifactError> {
        if self.pos + n > self.data.len() {
            return Err(ArtifactError::Corrupt(format!(
                "unexpected end of data at byte {}",
                self.pos
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, ArtifactError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, ArtifactError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, ArtifactError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, ArtifactError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

// ---------------------------------------------------------------------------
// Feasibility checks (used by tests and the update verifier)
// ---------------------------------------------------------------------------

/// Re-derives the feasibility inequality of a stored transfer from the
/// timetable alone: change-time form at a shared stop, footpath form
/// otherwise. Also checks the day-set inclusion invariant.
pub fn check_transfer(
    tt: &Timetable,
    from_route: RouteIdx,
    from_trip: TripIdx,
    t: &Transfer,
) -> Result<(), String> {
    let src_route = tt.route(from_route);
    let dst_route = tt.route(t.to_route);
    let e = t.from_stop_index as usize;
    let b = t.to_stop_index as usize;
    if e == 0 || e >= src_route.stops.len() {
        return Err(format!("exit index {e} out of range"));
    }
    if b > dst_route.last_boardable_index() {
        return Err(format!("boarding index {b} not boardable"));
    }
    let trip = &src_route.trips[from_trip as usize];
    let u = &dst_route.trips[t.to_trip_index as usize];
    let from_stop = src_route.stops[e];
    let to_stop = dst_route.stops[b];
    let cost = if from_stop == to_stop {
        i64::from(tt.change_time(from_stop, from_route, t.to_route))
    } else {
        match tt.footpath_duration(from_stop, to_stop) {
            Some(w) => i64::from(w),
            None => return Err(format!("no footpath {from_stop} -> {to_stop}")),
        }
    };
    let lhs = trip.arrival_at(e).seconds() + cost;
    let rhs = u.departure_at(b).seconds() + i64::from(t.day_shift) * SECONDS_PER_DAY;
    if lhs > rhs {
        return Err(format!("infeasible transfer: {lhs} > {rhs}"));
    }
    if !t.valid_days.any() {
        return Err("empty valid_days".into());
    }
    let allowed = trip
        .active_days
        .and(&u.active_days.shifted_down(t.day_shift as usize));
    if !t.valid_days.is_subset_of(&allowed) {
        return Err("valid_days exceed source/target activity".into());
    }
    Ok(())
}

/// Checks every stored transfer of a set against the timetable.
pub fn check_transfer_set(tt: &Timetable, ts: &TransferSet) -> Result<(), String> {
    if !ts.matches_shape(tt) {
        return Err("transfer set shape does not match timetable".into());
    }
    for (ri, route) in tt.routes.iter().enumerate() {
        for ti in 0..route.trips.len() {
            let row = ts.row(tt.trip_row(ri as RouteIdx, ti as TripIdx));
            for t in row {
                check_transfer(tt, ri as RouteIdx, ti as TripIdx, t)
                    .map_err(|e| format!("route {ri} trip {ti}: {e}"))?;
            }
            for w in row.windows(2) {
                let ka = (
                    w[0].from_stop_index,
                    w[0].to_route,
                    w[0].day_shift,
                    w[0].to_trip_index,
                    w[0].to_stop_index,
                );
                let kb = (
                    w[1].from_stop_index,
                    w[1].to_route,
                    w[1].day_shift,
                    w[1].to_trip_index,
                    w[1].to_stop_index,
                );
                if ka >= kb {
                    return Err(format!("route {ri} trip {ti}: row not in canonical order"));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DraftTrip, Stop};
    use crate::time::RelTime;

    fn rel(s: i64) -> RelTime {
        RelTime::new(s).unwrap()
    }

    fn stop(n: &str) -> Stop {
        Stop {
            id: n.to_string(),
            name: n.to_string(),
            min_change_time: 0,
        }
    }

    fn draft_trip(stops: Vec<u32>, times: &[(i64, i64)], days: &[usize], horizon: usize) -> DraftTrip {
        let arr = times.iter().map(|&(a, _)| rel(a)).collect();
        let dep = times.iter().map(|&(_, d)| rel(d)).collect();
        DraftTrip::new(
            stops,
            arr,
            dep,
            DayBitset::from_days(horizon, days.iter().copied()).unwrap(),
        )
        .unwrap()
    }

    fn two_stop_draft(trips: Vec<DraftTrip>, n_stops: u32, horizon: u32) -> TimetableDraft {
        TimetableDraft {
            horizon_days: horizon,
            start_date: None,
            stops: (0..n_stops).map(|i| stop(&format!("S{i}"))).collect(),
            footpaths: vec![],
            overrides: vec![],
            trips,
        }
    }

    #[test]
    fn partition_keeps_ordered_trips_together() {
        let t1 = draft_trip(vec![0, 1], &[(0, 36000), (39600, 39600)], &[0], 1);
        let t2 = draft_trip(vec![0, 1], &[(0, 37800), (41400, 41400)], &[0], 1);
        let tt = partition_routes(two_stop_draft(vec![t1, t2], 2, 1)).unwrap();
        assert_eq!(tt.routes.len(), 1);
        assert_eq!(tt.routes[0].trips.len(), 2);
    }

    #[test]
    fn partition_splits_overtaking_trips() {
        // A departs 10:00 arrives 11:00; B departs 10:30 arrives 10:45 — B overtakes A.
        let a = draft_trip(vec![0, 1], &[(0, 36000), (39600, 39600)], &[0], 1);
        let b = draft_trip(vec![0, 1], &[(0, 37800), (38700, 38700)], &[0], 1);
        let tt = partition_routes(two_stop_draft(vec![a, b], 2, 1)).unwrap();
        assert_eq!(tt.routes.len(), 2);
    }

    #[test]
    fn partition_random_group_matches_greedy_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let mut trips = Vec::new();
        for _ in 0..100 {
            let d0 = rng.gen_range(0..50_000i64);
            let ride = rng.gen_range(300..5_000i64);
            trips.push(draft_trip(
                vec![0, 1],
                &[(0, d0), (d0 + ride, d0 + ride)],
                &[0],
                1,
            ));
        }
        let expected = greedy_chain_count(&trips);
        let tt = partition_routes(two_stop_draft(trips, 2, 1)).unwrap();
        assert_eq!(tt.routes.len(), expected);
        assert_eq!(tt.total_trips(), 100);
        tt.check_invariants().unwrap();
    }

    /// Independent re-implementation of the greedy chain decomposition over
    /// the same sort order, kept deliberately naive.
    fn greedy_chain_count(trips: &[DraftTrip]) -> usize {
        let mut sorted: Vec<&DraftTrip> = trips.iter().collect();
        sorted.sort_by(|a, b| a.trip.order_key().cmp(&b.trip.order_key()));
        let mut chains: Vec<Vec<&DraftTrip>> = Vec::new();
        'outer: for t in sorted {
            for chain in &mut chains {
                let last = chain.last().unwrap();
                let n = t.stops.len();
                let fits = (0..n).all(|i| {
                    last.trip.arrival_at(i) <= t.trip.arrival_at(i)
                        && last.trip.departure_at(i) <= t.trip.departure_at(i)
                });
                let spread_ok = (0..n).all(|i| {
                    let f = &chain[0].trip;
                    (t.trip.arrival_at(i).seconds() - f.arrival_at(i).seconds()
                        <= MAX_ROUTE_TIME_SPREAD)
                        && (t.trip.departure_at(i).is_infinite()
                            || t.trip.departure_at(i).seconds() - f.departure_at(i).seconds()
                                <= MAX_ROUTE_TIME_SPREAD)
                });
                if fits && spread_ok {
                    chain.push(t);
                    continue 'outer;
                }
            }
            chains.push(vec![t]);
        }
        chains.len()
    }

    /// Timetable: trip t on stops 0->1 arriving at 100; route r on stops 1->2.
    fn transfer_fixture(u_dep: i64, chg: u32, u_days: &[usize], horizon: u32) -> Timetable {
        let mut stops: Vec<Stop> = (0..3).map(|i| stop(&format!("S{i}"))).collect();
        stops[1].min_change_time = chg;
        let t = draft_trip(vec![0, 1], &[(0, 0), (100, 100)], &[0], horizon as usize);
        let u = draft_trip(
            vec![1, 2],
            &[(0, u_dep), (u_dep + 300, u_dep + 300)],
            u_days,
            horizon as usize,
        );
        partition_routes(TimetableDraft {
            horizon_days: horizon,
            start_date: None,
            stops,
            footpaths: vec![],
            overrides: vec![],
            trips: vec![t, u],
        })
        .unwrap()
    }

    fn route_of(tt: &Timetable, first_stop: u32) -> RouteIdx {
        tt.routes
            .iter()
            .position(|r| r.stops[0] == first_stop)
            .unwrap() as RouteIdx
    }

    #[test]
    fn transfer_equality_boundary() {
        // arr 100 + chg 60 <= dep 160: feasible with equality
        let tt = transfer_fixture(160, 60, &[0], 1);
        let full = compute_transfers(&tt);
        let from = route_of(&tt, 0);
        let row = full.row(tt.trip_row(from, 0));
        // one real transfer to the other route plus possibly a self-target
        let to_other: Vec<_> = row.iter().filter(|t| t.to_route != from).collect();
        assert_eq!(to_other.len(), 1);
        assert_eq!(to_other[0].day_shift, 0);
        assert_eq!(to_other[0].valid_days.to_bit_string(), "1");
    }

    #[test]
    fn transfer_misses_by_one_second_rolls_to_next_day() {
        // dep 159 < 160: no same-day transfer; with the target active on day 1
        // a one-day shift applies.
        let tt = transfer_fixture(159, 60, &[0, 1], 2);
        let from = route_of(&tt, 0);
        let full = compute_transfers(&tt);
        let row = full.row(tt.trip_row(from, 0));
        let to_other: Vec<_> = row.iter().filter(|t| t.to_route != from).collect();
        assert_eq!(to_other.len(), 1);
        assert_eq!(to_other[0].day_shift, 1);
        assert!(to_other[0].valid_days.get(0));
    }

    #[test]
    fn transfer_day_gaps_pick_per_day_earliest() {
        // t active days {0,1}; u1 early active {0}, u2 later active {0,1}:
        // day 0 reaches u1, day 1 reaches u2.
        let horizon = 2usize;
        let t = draft_trip(vec![0, 1], &[(0, 0), (100, 100)], &[0, 1], horizon);
        let u1 = draft_trip(vec![1, 2], &[(0, 200), (500, 500)], &[0], horizon);
        let u2 = draft_trip(vec![1, 2], &[(0, 300), (600, 600)], &[0, 1], horizon);
        let tt = partition_routes(TimetableDraft {
            horizon_days: horizon as u32,
            start_date: None,
            stops: (0..3).map(|i| stop(&format!("S{i}"))).collect(),
            footpaths: vec![],
            overrides: vec![],
            trips: vec![t, u1, u2],
        })
        .unwrap();
        let from = route_of(&tt, 0);
        let full = compute_transfers(&tt);
        let row = full.row(tt.trip_row(from, 0));
        let hits: Vec<_> = row
            .iter()
            .filter(|t| t.to_route != from && t.day_shift == 0)
            .collect();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].to_trip_index, 0);
        assert_eq!(hits[0].valid_days.to_bit_string(), "10");
        assert_eq!(hits[1].to_trip_index, 1);
        assert_eq!(hits[1].valid_days.to_bit_string(), "01");
    }

    #[test]
    fn reduction_drops_dominated_same_route_target() {
        // Two reachable trips of the same target route; only the earlier is kept.
        let horizon = 1usize;
        let t = draft_trip(vec![0, 1], &[(0, 0), (100, 100)], &[0], horizon);
        let u1 = draft_trip(vec![1, 2], &[(0, 200), (500, 500)], &[0], horizon);
        let u2 = draft_trip(vec![1, 2], &[(0, 300), (600, 600)], &[0], horizon);
        let tt = partition_routes(TimetableDraft {
            horizon_days: 1,
            start_date: None,
            stops: (0..3).map(|i| stop(&format!("S{i}"))).collect(),
            footpaths: vec![],
            overrides: vec![],
            trips: vec![t, u1, u2],
        })
        .unwrap();
        let from = route_of(&tt, 0);
        let full = compute_transfers(&tt);
        // the full set only records the per-day earliest, so force the point
        // with the reduced set: exactly one cross-route transfer survives
        let reduced = reduce_transfers(&tt, &full);
        let row = reduced.row(tt.trip_row(from, 0));
        let cross: Vec<_> = row.iter().filter(|t| t.to_route != from).collect();
        assert_eq!(cross.len(), 1);
        assert_eq!(cross[0].to_trip_index, 0);
    }

    #[test]
    fn reduction_drops_transfer_covered_by_own_ride() {
        // t covers stops 1 and 2 itself, faster than the target u does.
        let horizon = 1usize;
        let t = draft_trip(
            vec![0, 1, 2],
            &[(0, 0), (100, 110), (200, 200)],
            &[0],
            horizon,
        );
        let u = draft_trip(vec![1, 2], &[(0, 150), (400, 400)], &[0], horizon);
        let tt = partition_routes(TimetableDraft {
            horizon_days: 1,
            start_date: None,
            stops: (0..3).map(|i| stop(&format!("S{i}"))).collect(),
            footpaths: vec![],
            overrides: vec![],
            trips: vec![t, u],
        })
        .unwrap();
        let from = route_of(&tt, 0);
        let full = compute_transfers(&tt);
        let reduced = reduce_transfers(&tt, &full);
        let row = reduced.row(tt.trip_row(from, 0));
        assert!(
            row.iter().all(|tr| tr.to_route == from),
            "cross-route transfer should be dropped: {row:?}"
        );
    }

    #[test]
    fn serialization_round_trip() {
        let tt = transfer_fixture(160, 60, &[0], 1);
        let full = compute_transfers(&tt);
        let reduced = reduce_transfers(&tt, &full);
        for ts in [&full, &reduced] {
            let bytes = ts.to_bytes();
            let back = TransferSet::from_bytes(&bytes).unwrap();
            assert_eq!(&back, ts);
            assert_eq!(back.to_bytes(), bytes);
        }
        assert!(TransferSet::from_bytes(b"nope").is_err());
    }

    #[test]
    fn stored_transfers_are_feasible() {
        let tt = transfer_fixture(160, 60, &[0], 1);
        let full = compute_transfers(&tt);
        check_transfer_set(&tt, &full).unwrap();
        let reduced = reduce_transfers(&tt, &full);
        check_transfer_set(&tt, &reduced).unwrap();
    }
}
