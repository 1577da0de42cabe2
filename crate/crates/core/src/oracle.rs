//! Exhaustive reference implementation used to validate query and
//! preprocessing contracts at desk scale.
//!
//! Journeys are searched by multi-criteria label correcting over an event
//! expansion built directly from the timetable — never from transfer sets —
//! so its answers are independent of the preprocessing path under test. It is
//! deliberately slow and guarded against accidental full-scale use.

use std::collections::{BinaryHeap, HashMap};
use std::cmp::Reverse;

use crate::error::OracleError;
use crate::model::{RouteIdx, StopIdx, Timetable, TripIdx};
use crate::time::{abs_time, SECONDS_PER_DAY};

/// Transfer bound mirroring the query engine's; asserted non-binding on all
/// test corpora.
pub const ORACLE_MAX_TRANSFERS: u32 = 15;

/// Refuse expansions beyond this many events (instance stop visits).
pub const DEFAULT_EVENT_GUARD: usize = 100_000;

/// (departure, arrival, transfers) rows of the exact Pareto front, sorted.
pub type ProfileFront = Vec<(i64, i64, u32)>;

/// (arrival, transfers) rows of the exact earliest-arrival front, sorted.
pub type ArrivalFront = Vec<(i64, u32)>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Node {
    /// Standing at the source before any boarding: no change time applies,
    /// one initial footpath is allowed.
    Source,
    /// Just alighted from a vehicle of the given route at this stop.
    Vehicle(StopIdx, RouteIdx),
    /// Arrived on foot; may only board (footpaths are non-transitive).
    Walked(StopIdx),
}

#[derive(Clone, Copy, Debug)]
struct Instance {
    route: RouteIdx,
    trip: TripIdx,
    day: i64,
}

struct Expansion {
    instances: Vec<Instance>,
}

fn expand(
    tt: &Timetable,
    query_day: u32,
    horizon: u32,
    guard: usize,
) -> Result<Expansion, OracleError> {
    let day_lo = (i64::from(query_day) - 1).max(0);
    let day_hi = (i64::from(query_day) - 1 + i64::from(horizon)).min(i64::from(tt.horizon_days) - 1);
    let mut instances = Vec::new();
    let mut events = 0usize;
    for (ri, route) in tt.routes.iter().enumerate() {
        for (ti, trip) in route.trips.iter().enumerate() {
            for day in day_lo..=day_hi {
                if trip.active_days.get(day as usize) {
                    events += route.stops.len();
                    instances.push(Instance {
                        route: ri as RouteIdx,
                        trip: ti as TripIdx,
                        day,
                    });
                }
            }
        }
    }
    if events > guard {
        return Err(OracleError::TooLarge { events, guard });
    }
    Ok(Expansion { instances })
}

struct Search<'a> {
    tt: &'a Timetable,
    exp: &'a Expansion,
    source_stop: StopIdx,
    destination: StopIdx,
    node_ids: HashMap<Node, usize>,
    nodes: Vec<Node>,
    labels: Vec<Vec<(i64, u32)>>,
    queue: BinaryHeap<Reverse<(i64, u32, usize)>>,
}

impl<'a> Search<'a> {
    fn new(tt: &'a Timetable, exp: &'a Expansion, source: StopIdx, destination: StopIdx) -> Self {
        Search {
            tt,
            exp,
            source_stop: source,
            destination,
            node_ids: HashMap::new(),
            nodes: Vec::new(),
            labels: Vec::new(),
            queue: BinaryHeap::new(),
        }
    }

    fn node_id(&mut self, node: Node) -> usize {
        if let Some(&id) = self.node_ids.get(&node) {
            return id;
        }
        let id = self.nodes.len();
        self.node_ids.insert(node, id);
        self.nodes.push(node);
        self.labels.push(Vec::new());
        id
    }

    fn relax(&mut self, node: Node, time: i64, boardings: u32) {
        let id = self.node_id(node);
        let set = &mut self.labels[id];
        if set
            .iter()
            .any(|&(t, b)| t <= time && b <= boardings)
        {
            return;
        }
        set.retain(|&(t, b)| !(time <= t && boardings <= b));
        set.push((time, boardings));
        self.queue.push(Reverse((time, boardings, id)));
    }

    fn run(&mut self, start_time: i64) {
        self.relax(Node::Source, start_time, 0);
        while let Some(Reverse((time, boardings, id))) = self.queue.pop() {
            let node = self.nodes[id];
            if !self.labels[id].contains(&(time, boardings)) {
                continue;
            }
            match node {
                Node::Source => {
                    let stop = self.source_stop;
                    self.board_all(stop, time, boardings, None);
                    for &(next, walk) in self.tt.footpaths_from(stop) {
                        self.relax(Node::Walked(next), time + i64::from(walk), boardings);
                    }
                }
                Node::Vehicle(stop, from_route) => {
                    self.board_all(stop, time, boardings, Some(from_route));
                    for &(next, walk) in self.tt.footpaths_from(stop) {
                        self.relax(Node::Walked(next), time + i64::from(walk), boardings);
                    }
                }
                Node::Walked(stop) => {
                    self.board_all(stop, time, boardings, None);
                }
            }
        }
    }

    /// Boards every feasible instance at `stop` and relaxes all its onward
    /// arrival events. `from_route` carries the change-time context of a
    /// vehicle-to-vehicle transfer; footpath arrivals and the source apply
    /// none.
    fn board_all(&mut self, stop: StopIdx, time: i64, boardings: u32, from_route: Option<RouteIdx>) {
        if boardings >= ORACLE_MAX_TRANSFERS + 1 {
            return;
        }
        for &(r, i) in self.tt.routes_at(stop) {
            let route = self.tt.route(r);
            if i as usize > route.last_boardable_index() {
                continue;
            }
            let ready = match from_route {
                Some(fr) => time + i64::from(self.tt.change_time(stop, fr, r)),
                None => time,
            };
            for inst in self
                .exp
                .instances
                .iter()
                .filter(|inst| inst.route == r)
            {
                let trip = &route.trips[inst.trip as usize];
                let dep = abs_time(inst.day, trip.departure_at(i as usize));
                if dep.is_infinite() || dep.seconds() < ready {
                    continue;
                }
                for j in i as usize + 1..route.stops.len() {
                    let arr = abs_time(inst.day, trip.arrival_at(j)).seconds();
                    self.relax(Node::Vehicle(route.stops[j], r), arr, boardings + 1);
                }
            }
        }
    }

    fn destination_labels(&self) -> Vec<(i64, u32)> {
        let mut out = Vec::new();
        for (id, node) in self.nodes.iter().enumerate() {
            let at_dest = matches!(node, Node::Vehicle(s, _) | Node::Walked(s) if *s == self.destination);
            if at_dest {
                for &(t, b) in &self.labels[id] {
                    if b >= 1 {
                        out.push((t, b - 1)); // transfers = boardings - 1
                    }
                }
            }
        }
        out
    }
}

/// Exhaustive full-day profile reference: the exact Pareto set over
/// (departure, arrival, transfers) for journeys leaving the source within the
/// query day, confined to the same day window a view of `horizon` covers.
pub fn oracle_profile(
    tt: &Timetable,
    source: StopIdx,
    destination: StopIdx,
    query_day: u32,
    horizon: u32,
) -> Result<ProfileFront, OracleError> {
    oracle_profile_guarded(tt, source, destination, query_day, horizon, DEFAULT_EVENT_GUARD)
}

pub fn oracle_profile_guarded(
    tt: &Timetable,
    source: StopIdx,
    destination: StopIdx,
    query_day: u32,
    horizon: u32,
    guard: usize,
) -> Result<ProfileFront, OracleError> {
    if query_day >= tt.horizon_days {
        return Err(crate::error::QueryError::DayOutOfHorizon {
            day: i64::from(query_day),
            horizon: tt.horizon_days,
        }
        .into());
    }
    let q = i64::from(query_day);
    if source == destination {
        let t = q * SECONDS_PER_DAY;
        return Ok(vec![(t, t, 0)]);
    }
    let exp = expand(tt, query_day, horizon, guard)?;

    // distinct leave instants within the query day
    let window = q * SECONDS_PER_DAY..(q + 1) * SECONDS_PER_DAY;
    let mut leaves: Vec<i64> = Vec::new();
    let mut collect = |stop: StopIdx, walk: i64| {
        for &(r, i) in tt.routes_at(stop) {
            let route = tt.route(r);
            if i as usize > route.last_boardable_index() {
                continue;
            }
            for inst in exp.instances.iter().filter(|inst| inst.route == r) {
                let trip = &route.trips[inst.trip as usize];
                let dep = abs_time(inst.day, trip.departure_at(i as usize));
                if !dep.is_infinite() && window.contains(&(dep.seconds() - walk)) {
                    leaves.push(dep.seconds() - walk);
                }
            }
        }
    };
    collect(source, 0);
    for &(next, walk) in tt.footpaths_from(source) {
        collect(next, i64::from(walk));
    }
    leaves.sort_unstable();
    leaves.dedup();

    let mut rows: Vec<(i64, i64, u32)> = Vec::new();
    for &leave in &leaves {
        let mut search = Search::new(tt, &exp, source, destination);
        search.run(leave);
        let mut max_boardings = 0;
        for (arr, transfers) in search.destination_labels() {
            rows.push((leave, arr, transfers));
            max_boardings = max_boardings.max(transfers + 1);
        }
        debug_assert!(
            max_boardings <= ORACLE_MAX_TRANSFERS,
            "oracle transfer bound is binding"
        );
    }

    Ok(pareto_rows(rows))
}

fn pareto_rows(rows: Vec<(i64, i64, u32)>) -> ProfileFront {
    let mut front: Vec<(i64, i64, u32)> = Vec::new();
    for &(dep, arr, n) in &rows {
        if rows
            .iter()
            .any(|&(d2, a2, n2)| dominates(d2, a2, n2, dep, arr, n))
        {
            continue;
        }
        if !front.contains(&(dep, arr, n)) {
            front.push((dep, arr, n));
        }
    }
    front.sort_unstable();
    front
}

/// Independent re-statement of the profile domination order.
fn dominates(d1: i64, a1: i64, n1: u32, d2: i64, a2: i64, n2: u32) -> bool {
    d1 >= d2 && a1 <= a2 && n1 <= n2 && (d1 > d2 || a1 < a2 || n1 < n2)
}

/// Exhaustive earliest-arrival reference from one departure instant.
pub fn oracle_earliest_arrival(
    tt: &Timetable,
    source: StopIdx,
    destination: StopIdx,
    departure: i64,
    horizon: u32,
) -> Result<ArrivalFront, OracleError> {
    let query_day = departure.div_euclid(SECONDS_PER_DAY);
    if query_day < 0 || query_day >= i64::from(tt.horizon_days) {
        return Err(crate::error::QueryError::DayOutOfHorizon {
            day: query_day,
            horizon: tt.horizon_days,
        }
        .into());
    }
    if source == destination {
        return Ok(vec![(departure, 0)]);
    }
    let exp = expand(tt, query_day as u32, horizon, DEFAULT_EVENT_GUARD)?;
    let mut search = Search::new(tt, &exp, source, destination);
    search.run(departure);
    let rows = search.destination_labels();
    let mut front: Vec<(i64, u32)> = Vec::new();
    for &(arr, n) in &rows {
        if rows
            .iter()
            .any(|&(a2, n2)| a2 <= arr && n2 <= n && (a2 < arr || n2 < n))
        {
            continue;
        }
        if !front.contains(&(arr, n)) {
            front.push((arr, n));
        }
    }
    front.sort_unstable();
    Ok(front)
}

/// Splits every trip into single-day copies: the same schedule with the
/// bit-set factorization removed. Query fronts must be invariant under this
/// transformation; used by the day-merge soundness checks.
pub fn explode_per_day(tt: &Timetable) -> Timetable {
    use crate::bitset::DayBitset;
    use crate::model::DraftTrip;
    let mut draft = tt.to_draft();
    let mut exploded = Vec::new();
    for dt in draft.trips {
        for day in dt.trip.active_days.iter_ones() {
            let bits = DayBitset::from_days(tt.horizon_days as usize, [day]).unwrap();
            let n = dt.stops.len();
            let arr = (0..n).map(|i| dt.trip.arrival_at(i)).collect();
            let dep = (0..n).map(|i| dt.trip.raw_departure_at(i)).collect();
            exploded.push(DraftTrip::new(dt.stops.clone(), arr, dep, bits).unwrap());
        }
    }
    draft.trips = exploded;
    crate::preprocess::partition_routes(draft).expect("exploded timetable stays valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitset::DayBitset;
    use crate::model::{DraftTrip, Stop, TimetableDraft};
    use crate::preprocess::partition_routes;
    use crate::time::RelTime;

    fn rel(s: i64) -> RelTime {
        RelTime::new(s).unwrap()
    }

    #[test]
    fn empty_network_empty_result() {
        let tt = partition_routes(TimetableDraft {
            horizon_days: 1,
            start_date: None,
            stops: vec![
                Stop { id: "a".into(), name: "a".into(), min_change_time: 0 },
                Stop { id: "b".into(), name: "b".into(), min_change_time: 0 },
            ],
            footpaths: vec![],
            overrides: vec![],
            trips: vec![],
        })
        .unwrap();
        assert!(oracle_profile(&tt, 0, 1, 0, 2).unwrap().is_empty());
    }

    #[test]
    fn single_direct_trip() {
        let tt = partition_routes(TimetableDraft {
            horizon_days: 1,
            start_date: None,
            stops: vec![
                Stop { id: "a".into(), name: "a".into(), min_change_time: 0 },
                Stop { id: "b".into(), name: "b".into(), min_change_time: 0 },
            ],
            footpaths: vec![],
            overrides: vec![],
            trips: vec![DraftTrip::new(
                vec![0, 1],
                vec![rel(0), rel(200)],
                vec![rel(100), rel(200)],
                DayBitset::from_days(1, [0]).unwrap(),
            )
            .unwrap()],
        })
        .unwrap();
        assert_eq!(oracle_profile(&tt, 0, 1, 0, 2).unwrap(), vec![(100, 200, 0)]);
    }

    #[test]
    fn guard_refuses_oversized_expansion() {
        let tt = crate::ingest::synthetic::gen_synthetic(&crate::ingest::synthetic::SyntheticParams {
            seed: 3,
            n_stops: 10,
            n_routes: 5,
            trips_per_route: 4,
            horizon_days: 5,
            footpath_density: 0.0,
            activity: crate::ingest::synthetic::ActivityPattern::Daily,
        })
        .unwrap();
        let err = oracle_profile_guarded(&tt, 0, 1, 1, 2, 10).unwrap_err();
        assert!(matches!(err, OracleError::TooLarge { .. }));
    }
}
