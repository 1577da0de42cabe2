//! Per-query-day extraction of reduced transfers, an LRU cache of the
//! extracted views, and flattening of day windows into the flat single-horizon
//! layout consumed by the flat query engine.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::QueryError;
use crate::model::{pack_trip_ref, RouteIdx, StopIdx, Timetable, TripIdx};
use crate::preprocess::TransferSet;
use crate::time::{abs_time, AbsTime};

/// Number of day offsets past the query day a view covers by default
/// (offsets 0..=H, where offset 0 is the day before the query day and
/// offset 1 the query day itself).
pub const DEFAULT_VIEW_HORIZON: u32 = 2;

/// A transfer instance with both endpoints resolved to concrete day offsets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResolvedTransfer {
    pub from_stop_index: u16,
    pub to_route: RouteIdx,
    /// Packed (day offset, trip index) of the boarded instance.
    pub to_packed: u64,
    pub to_stop_index: u16,
    /// Departure of the boarded trip at the boarding stop, as absolute time.
    pub board_departure: AbsTime,
}

/// The transfers valid for one query day and the following days, resolved to
/// (day offset, trip) instances. Immutable once built; queries share it.
#[derive(Debug)]
pub struct DayView {
    pub query_day: u32,
    /// Highest day offset covered; offsets run 0..=horizon.
    pub horizon: u32,
    pub horizon_days: u32,
    /// True when some transfer valid on a covered source day had to be left
    /// out because its target fell past the view horizon. Queries on such a
    /// view report their fronts as truncated.
    pub clipped: bool,
    routes: Vec<RouteView>,
}

#[derive(Debug)]
struct RouteView {
    n_trips: u32,
    instances: Vec<Vec<ResolvedTransfer>>,
}

impl DayView {
    /// Concrete horizon day of a view offset; may fall outside [0, D).
    pub fn day_of_offset(&self, offset: u32) -> i64 {
        i64::from(self.query_day) - 1 + i64::from(offset)
    }

    pub fn offset_of_day(&self, day: i64) -> Option<u32> {
        let off = day - i64::from(self.query_day) + 1;
        (0..=i64::from(self.horizon)).contains(&off).then_some(off as u32)
    }

    pub fn transfers(&self, route: RouteIdx, offset: u32, trip: TripIdx) -> &[ResolvedTransfer] {
        let rv = &self.routes[route as usize];
        &rv.instances[offset as usize * rv.n_trips as usize + trip as usize]
    }

    /// Total resolved transfer instances, all routes and offsets.
    pub fn instance_count(&self) -> u64 {
        self.routes
            .iter()
            .flat_map(|r| &r.instances)
            .map(|v| v.len() as u64)
            .sum()
    }
}

/// Materializes the transfers valid on `query_day`'s window: offset 0 is the
/// day before (when it exists), offset 1 the query day, up to offset
/// `horizon`. Every transfer instance whose source day is covered and whose
/// target stays inside the view appears exactly once.
pub fn extract_day_view(
    tt: &Timetable,
    transfers: &TransferSet,
    query_day: u32,
    horizon: u32,
) -> Result<DayView, QueryError> {
    if query_day >= tt.horizon_days {
        return Err(QueryError::DayOutOfHorizon {
            day: i64::from(query_day),
            horizon: tt.horizon_days,
        });
    }
    let horizon = horizon.max(1);
    let mut clipped = false;
    let mut routes = Vec::with_capacity(tt.routes.len());
    for (ri, route) in tt.routes.iter().enumerate() {
        let n_trips = route.trips.len() as u32;
        let mut instances = vec![Vec::new(); (horizon as usize + 1) * n_trips as usize];
        for ti in 0..route.trips.len() {
            let row = transfers.row(tt.trip_row(ri as RouteIdx, ti as TripIdx));
            for tr in row {
                for offset in 0..=horizon {
                    let source_day = i64::from(query_day) - 1 + i64::from(offset);
                    if source_day < 0 || source_day >= i64::from(tt.horizon_days) {
                        continue;
                    }
                    if !tr.valid_days.get(source_day as usize) {
                        continue;
                    }
                    let target_offset = offset + u32::from(tr.day_shift);
                    if target_offset > horizon {
                        clipped = true;
                        continue;
                    }
                    let target_day = source_day + i64::from(tr.day_shift);
                    debug_assert!(target_day < i64::from(tt.horizon_days));
                    let target_trip =
                        &tt.route(tr.to_route).trips[tr.to_trip_index as usize];
                    instances[offset as usize * n_trips as usize + ti].push(ResolvedTransfer {
                        from_stop_index: tr.from_stop_index,
                        to_route: tr.to_route,
                        to_packed: pack_trip_ref(target_offset, tr.to_trip_index)
                            .expect("view offsets fit packed layout"),
                        to_stop_index: tr.to_stop_index,
                        board_departure: abs_time(
                            target_day,
                            target_trip.departure_at(tr.to_stop_index as usize),
                        ),
                    });
                }
            }
        }
        routes.push(RouteView { n_trips, instances });
    }
    Ok(DayView {
        query_day,
        horizon,
        horizon_days: tt.horizon_days,
        clipped,
        routes,
    })
}

/// LRU cache of extracted day views keyed by (query day, view horizon).
/// Thread-safe; concurrent readers share built views via `Arc`.
pub struct DayViewCache {
    capacity: usize,
    inner: Mutex<CacheInner>,
    hits: AtomicU64,
    misses: AtomicU64,
}

struct CacheInner {
    map: HashMap<(u32, u32), Arc<DayView>>,
    order: VecDeque<(u32, u32)>,
}

impl DayViewCache {
    pub fn new(capacity: usize) -> Self {
        DayViewCache {
            capacity: capacity.max(1),
            inner: Mutex::new(CacheInner {
                map: HashMap::new(),
                order: VecDeque::new(),
            }),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn get_or_build(
        &self,
        tt: &Timetable,
        transfers: &TransferSet,
        query_day: u32,
        horizon: u32,
    ) -> Result<Arc<DayView>, QueryError> {
        let key = (query_day, horizon);
        let mut inner = self.inner.lock().unwrap();
        if let Some(view) = inner.map.get(&key).cloned() {
            self.hits.fetch_add(1, Ordering::Relaxed);
            let pos = inner.order.iter().position(|k| *k == key).unwrap();
            inner.order.remove(pos);
            inner.order.push_back(key);
            return Ok(view);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let view = Arc::new(extract_day_view(tt, transfers, query_day, horizon)?);
        inner.map.insert(key, view.clone());
        inner.order.push_back(key);
        while inner.map.len() > self.capacity {
            if let Some(oldest) = inner.order.pop_front() {
                inner.map.remove(&oldest);
            }
        }
        Ok(view)
    }

    /// Drops every cached view; updates call this because edits invalidate
    /// views wholesale.
    pub fn clear(&self) {
        let mut inner = self.inner.lock().unwrap();
        inner.map.clear();
        inner.order.clear();
    }

    /// (hits, misses) counters since construction.
    pub fn stats(&self) -> (u64, u64) {
        (self.hits.load(Ordering::Relaxed), self.misses.load(Ordering::Relaxed))
    }
}

// ---------------------------------------------------------------------------
// Flattening
// ---------------------------------------------------------------------------

/// A day window materialized into flat integer-identified trip instances with
/// absolute times, the layout of the original single-horizon algorithm.
#[derive(Debug)]
pub struct FlatTimetable {
    pub window_start: u32,
    pub window_len: u32,
    pub routes: Vec<FlatRoute>,
    pub trips: Vec<FlatTrip>,
    rows: Vec<Vec<FlatTransfer>>,
    stop_routes: Vec<Vec<(u32, u16)>>,
}

#[derive(Debug)]
pub struct FlatRoute {
    pub orig_route: RouteIdx,
    pub stops: Vec<StopIdx>,
    pub first_trip: u32,
    pub n_trips: u32,
}

#[derive(Debug)]
pub struct FlatTrip {
    pub flat_route: u32,
    pub pos_in_route: u32,
    pub orig_route: RouteIdx,
    pub orig_trip: TripIdx,
    pub day: u32,
    arr: Vec<i64>,
    dep: Vec<i64>,
}

impl FlatTrip {
    pub fn arrival_at(&self, i: usize) -> i64 {
        self.arr[i]
    }

    pub fn departure_at(&self, i: usize) -> i64 {
        if i == self.dep.len() - 1 {
            i64::MAX
        } else {
            self.dep[i]
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlatTransfer {
    pub from_stop_index: u16,
    pub to_flat_trip: u32,
    pub to_stop_index: u16,
}

impl FlatTimetable {
    pub fn transfers_of(&self, flat_trip: u32) -> &[FlatTransfer] {
        &self.rows[flat_trip as usize]
    }

    pub fn routes_at(&self, stop: StopIdx) -> &[(u32, u16)] {
        &self.stop_routes[stop as usize]
    }

    pub fn trips_of_route(&self, flat_route: u32) -> &[FlatTrip] {
        let r = &self.routes[flat_route as usize];
        &self.trips[r.first_trip as usize..(r.first_trip + r.n_trips) as usize]
    }

    pub fn transfer_count(&self) -> u64 {
        self.rows.iter().map(|r| r.len() as u64).sum()
    }
}

/// Instantiates every (trip, day) pair of the window as a flat trip with
/// absolute times and every valid (transfer, source day) pair whose target
/// also lies inside the window as a flat transfer. Flat trips of one original
/// route are ordered by (day, trip order); the no-overtaking check is re-run
/// on the absolute times and a violating instance opens a new flat route.
pub fn flatten_window(
    tt: &Timetable,
    transfers: &TransferSet,
    window_start: u32,
    window_len: u32,
) -> Result<FlatTimetable, QueryError> {
    if window_len == 0 || window_start + window_len > tt.horizon_days {
        return Err(QueryError::WindowOutOfHorizon {
            start: window_start,
            len: window_len,
            horizon: tt.horizon_days,
        });
    }
    let mut flat_routes: Vec<FlatRoute> = Vec::new();
    let mut flat_trips: Vec<FlatTrip> = Vec::new();
    let mut id_of: HashMap<(RouteIdx, u32, TripIdx), u32> = HashMap::new();

    for (ri, route) in tt.routes.iter().enumerate() {
        let n = route.stops.len();
        // open flat routes for this original route: (route idx, last trip idx)
        let mut open: Vec<usize> = Vec::new();
        for day in window_start..window_start + window_len {
            for (ti, trip) in route.trips.iter().enumerate() {
                if !trip.active_days.get(day as usize) {
                    continue;
                }
                let arr: Vec<i64> = (0..n)
                    .map(|i| abs_time(i64::from(day), trip.arrival_at(i)).seconds())
                    .collect();
                let dep: Vec<i64> = (0..n)
                    .map(|i| {
                        let d = trip.departure_at(i);
                        if d.is_infinite() {
                            i64::MAX
                        } else {
                            abs_time(i64::from(day), d).seconds()
                        }
                    })
                    .collect();
                let flat_id = flat_trips.len() as u32;
                let mut placed = None;
                for &fr in &open {
                    let last = flat_routes[fr].first_trip + flat_routes[fr].n_trips - 1;
                    if flat_precedes(&flat_trips[last as usize], &arr, &dep) {
                        placed = Some(fr);
                        break;
                    }
                }
                match placed {
                    Some(fr) if flat_routes[fr].first_trip + flat_routes[fr].n_trips
                        == flat_id =>
                    {
                        flat_routes[fr].n_trips += 1;
                    }
                    _ => {
                        // contiguity of trip storage forces a new flat route
                        // whenever instances interleave; in practice a single
                        // flat route per original route is emitted
                        open.push(flat_routes.len());
                        flat_routes.push(FlatRoute {
                            orig_route: ri as RouteIdx,
                            stops: route.stops.clone(),
                            first_trip: flat_id,
                            n_trips: 1,
                        });
                    }
                }
                let fr = *open
                    .iter()
                    .find(|&&fr| {
                        flat_routes[fr].first_trip + flat_routes[fr].n_trips == flat_id + 1
                    })
                    .unwrap();
                flat_trips.push(FlatTrip {
                    flat_route: fr as u32,
                    pos_in_route: flat_id - flat_routes[fr].first_trip,
                    orig_route: ri as RouteIdx,
                    orig_trip: ti as TripIdx,
                    day,
                    arr,
                    dep,
                });
                id_of.insert((ri as RouteIdx, day, ti as TripIdx), flat_id);
            }
        }
    }

    let mut rows: Vec<Vec<FlatTransfer>> = vec![Vec::new(); flat_trips.len()];
    for (ri, route) in tt.routes.iter().enumerate() {
        for ti in 0..route.trips.len() {
            let row = transfers.row(tt.trip_row(ri as RouteIdx, ti as TripIdx));
            for tr in row {
                for source_day in tr.valid_days.iter_ones() {
                    let source_day = source_day as u32;
                    if source_day < window_start || source_day >= window_start + window_len {
                        continue;
                    }
                    let target_day = source_day + u32::from(tr.day_shift);
                    if target_day >= window_start + window_len {
                        continue;
                    }
                    let from = id_of[&(ri as RouteIdx, source_day, ti as TripIdx)];
                    let to = id_of[&(tr.to_route, target_day, tr.to_trip_index)];
                    rows[from as usize].push(FlatTransfer {
                        from_stop_index: tr.from_stop_index,
                        to_flat_trip: to,
                        to_stop_index: tr.to_stop_index,
                    });
                }
            }
        }
    }
    for row in &mut rows {
        row.sort_by_key(|t| (t.from_stop_index, t.to_flat_trip, t.to_stop_index));
    }

    let mut stop_routes = vec![Vec::new(); tt.stops.len()];
    for (fi, fr) in flat_routes.iter().enumerate() {
        for (si, &s) in fr.stops.iter().enumerate() {
            stop_routes[s as usize].push((fi as u32, si as u16));
        }
    }

    Ok(FlatTimetable {
        window_start,
        window_len,
        routes: flat_routes,
        trips: flat_trips,
        rows,
        stop_routes,
    })
}

fn flat_precedes(a: &FlatTrip, arr: &[i64], dep: &[i64]) -> bool {
    (0..arr.len()).all(|i| {
        a.arr[i] <= arr[i] && (a.dep[i] == i64::MAX && dep[i] == i64::MAX || a.dep[i] <= dep[i])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::synthetic::{gen_synthetic, ActivityPattern, SyntheticParams};
    use crate::preprocess::{compute_transfers, reduce_transfers};

    fn fixture() -> (Timetable, TransferSet) {
        let tt = gen_synthetic(&SyntheticParams {
            seed: 5,
            n_stops: 15,
            n_routes: 6,
            trips_per_route: 3,
            horizon_days: 7,
            footpath_density: 0.1,
            activity: ActivityPattern::Random(0.6),
        })
        .unwrap();
        let reduced = reduce_transfers(&tt, &compute_transfers(&tt));
        (tt, reduced)
    }

    #[test]
    fn out_of_horizon_day_is_rejected() {
        let (tt, reduced) = fixture();
        assert!(extract_day_view(&tt, &reduced, 7, 2).is_err());
        assert!(extract_day_view(&tt, &reduced, 6, 2).is_ok());
    }

    #[test]
    fn union_of_views_reconstructs_reduced_set() {
        let (tt, reduced) = fixture();
        // offsets up to max_day_shift + 1 guarantee no target clipping at
        // offset 1, so collecting every view at its query day covers the set
        let horizon = u32::from(reduced.max_day_shift) + 1;
        let mut seen: std::collections::HashSet<(u32, u32, u16, u32, u32, u16, u8, usize)> =
            std::collections::HashSet::new();
        for q in 0..tt.horizon_days {
            let view = extract_day_view(&tt, &reduced, q, horizon).unwrap();
            for (ri, route) in tt.routes.iter().enumerate() {
                for ti in 0..route.trips.len() as u32 {
                    for tr in view.transfers(ri as u32, 1, ti) {
                        let (t_off, t_idx) = crate::model::unpack_trip_ref(tr.to_packed);
                        seen.insert((
                            ri as u32,
                            ti,
                            tr.from_stop_index,
                            tr.to_route,
                            t_idx,
                            tr.to_stop_index,
                            (t_off - 1) as u8,
                            q as usize,
                        ));
                    }
                }
            }
        }
        let mut expected = std::collections::HashSet::new();
        for (ri, route) in tt.routes.iter().enumerate() {
            for ti in 0..route.trips.len() as u32 {
                for tr in reduced.row(tt.trip_row(ri as u32, ti)) {
                    for d in tr.valid_days.iter_ones() {
                        expected.insert((
                            ri as u32,
                            ti,
                            tr.from_stop_index,
                            tr.to_route,
                            tr.to_trip_index,
                            tr.to_stop_index,
                            tr.day_shift,
                            d,
                        ));
                    }
                }
            }
        }
        assert_eq!(seen, expected);
    }

    #[test]
    fn lru_cache_counts_and_evicts() {
        let (tt, reduced) = fixture();
        let cache = DayViewCache::new(1);
        cache.get_or_build(&tt, &reduced, 0, 2).unwrap();
        cache.get_or_build(&tt, &reduced, 0, 2).unwrap();
        assert_eq!(cache.stats(), (1, 1));
        cache.get_or_build(&tt, &reduced, 1, 2).unwrap();
        cache.get_or_build(&tt, &reduced, 0, 2).unwrap();
        // q=0 was evicted by q=1 under capacity 1
        assert_eq!(cache.stats(), (1, 3));
    }

    #[test]
    fn cached_views_equal_fresh_ones() {
        let (tt, reduced) = fixture();
        let cache = DayViewCache::new(4);
        for q in [0u32, 3, 0, 5, 3, 1, 0] {
            let cached = cache.get_or_build(&tt, &reduced, q, 2).unwrap();
            let fresh = extract_day_view(&tt, &reduced, q, 2).unwrap();
            assert_eq!(cached.instance_count(), fresh.instance_count());
            for (ri, route) in tt.routes.iter().enumerate() {
                for ti in 0..route.trips.len() as u32 {
                    for off in 0..=2u32 {
                        assert_eq!(
                            cached.transfers(ri as u32, off, ti),
                            fresh.transfers(ri as u32, off, ti)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn flatten_window_bounds_checked() {
        let (tt, reduced) = fixture();
        assert!(flatten_window(&tt, &reduced, 6, 2).is_err());
        assert!(flatten_window(&tt, &reduced, 0, 0).is_err());
        let flat = flatten_window(&tt, &reduced, 2, 3).unwrap();
        for ft in &flat.trips {
            assert!((2..5).contains(&ft.day));
            let orig = tt.trip(ft.orig_route, ft.orig_trip);
            assert!(orig.active_days.get(ft.day as usize));
        }
        // every flat transfer's endpoints stay inside the window
        for (fi, row) in flat.rows.iter().enumerate() {
            for tr in row {
                assert!(flat.trips[fi].day >= 2);
                assert!(flat.trips[tr.to_flat_trip as usize].day < 5);
            }
        }
        // flat routes keep the no-overtaking order on absolute times
        for fr in 0..flat.routes.len() as u32 {
            let trips = flat.trips_of_route(fr);
            for w in trips.windows(2) {
                let n = w[0].arr.len();
                assert!((0..n).all(|i| {
                    w[0].arrival_at(i) <= w[1].arrival_at(i)
                        && w[0].departure_at(i) <= w[1].departure_at(i)
                }));
            }
        }
    }
}
