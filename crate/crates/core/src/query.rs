//! Earliest-arrival and full-day profile queries over a [`DayView`],
//! Pareto-optimal in (arrival time, number of transfers).
//!
//! The search is round-based over trip segments. Which trip instances were
//! already reached is tracked per route as an explicit Pareto set of
//! (packed instance id, stop index, transfers) tuples, so a query may span
//! several days without a fixed per-trip slot layout.

use std::collections::HashMap;

use crate::error::QueryError;
use crate::extract::DayView;
use crate::model::{unpack_trip_ref, RouteIdx, StopIdx, Timetable, TripIdx};
use crate::time::{abs_time, AbsTime, SECONDS_PER_DAY};

/// Hard bound on transfers per journey; generously above anything a sane
/// timetable produces and asserted non-binding in the test corpora.
pub const MAX_TRANSFERS: usize = 15;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Leg {
    Trip {
        route: RouteIdx,
        trip: TripIdx,
        day: u32,
        board_index: u16,
        exit_index: u16,
        board_stop: StopIdx,
        exit_stop: StopIdx,
        board_time: AbsTime,
        exit_time: AbsTime,
    },
    Foot {
        from: StopIdx,
        to: StopIdx,
        duration: u32,
        start: AbsTime,
        end: AbsTime,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Journey {
    pub departure: AbsTime,
    pub arrival: AbsTime,
    pub transfers: u32,
    pub legs: Vec<Leg>,
}

#[derive(Clone, Debug)]
pub struct QueryResult {
    pub journeys: Vec<Journey>,
    /// Set when the day view clipped transfers past its horizon, meaning
    /// journeys spanning more days than the view covers are missing.
    pub truncated: bool,
}

/// Profile order: a journey is dominated by one departing no earlier,
/// arriving no later, with no more transfers, strictly better in one.
pub fn dominates_profile(a: (i64, i64, u32), b: (i64, i64, u32)) -> bool {
    a.0 >= b.0 && a.1 <= b.1 && a.2 <= b.2 && (a.0 > b.0 || a.1 < b.1 || a.2 < b.2)
}

/// Earliest-arrival order ignores the departure component.
pub fn dominates_arrival(a: (i64, u32), b: (i64, u32)) -> bool {
    a.0 <= b.0 && a.1 <= b.1 && (a.0 < b.0 || a.1 < b.1)
}

#[derive(Clone, Copy, Debug)]
enum Parent {
    Initial { walk: Option<u32> },
    Transfer { parent_seg: u32, exit_index: u16 },
}

#[derive(Clone, Copy, Debug)]
struct Segment {
    route: RouteIdx,
    packed: u64,
    board: u16,
    scan_cap: u16,
    transfers: u8,
    root_departure: AbsTime,
    parent: Parent,
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    departure: AbsTime,
    arrival: AbsTime,
    transfers: u8,
    seg: u32,
    exit_index: u16,
    walk_to_dest: Option<u32>,
}

struct Engine<'a> {
    tt: &'a Timetable,
    view: &'a DayView,
    source: StopIdx,
    destination: StopIdx,
    dest_routes: HashMap<RouteIdx, Vec<(u16, u32)>>,
    reached: Vec<Vec<(u64, u16, u8)>>,
    segments: Vec<Segment>,
    rounds: Vec<Vec<u32>>,
    best_arrival: [i64; MAX_TRANSFERS + 1],
    candidates: Vec<Candidate>,
}

impl<'a> Engine<'a> {
    fn new(tt: &'a Timetable, view: &'a DayView, source: StopIdx, destination: StopIdx) -> Self {
        // Destination routes: (exit index, walk seconds) per route that either
        // visits the destination or a stop with a footpath to it.
        let mut dest_routes: HashMap<RouteIdx, Vec<(u16, u32)>> = HashMap::new();
        for &(r, i) in tt.routes_at(destination) {
            if i >= 1 {
                dest_routes.entry(r).or_default().push((i, 0));
            }
        }
        for &(from, walk) in tt.footpaths_into(destination) {
            for &(r, i) in tt.routes_at(from) {
                if i >= 1 {
                    dest_routes.entry(r).or_default().push((i, walk));
                }
            }
        }
        for v in dest_routes.values_mut() {
            v.sort_unstable();
        }
        Engine {
            tt,
            view,
            source,
            destination,
            dest_routes,
            reached: vec![Vec::new(); tt.routes.len()],
            segments: Vec::new(),
            rounds: vec![Vec::new(); MAX_TRANSFERS + 2],
            best_arrival: [i64::MAX; MAX_TRANSFERS + 1],
            candidates: Vec::new(),
        }
    }

    fn try_insert(
        &mut self,
        route: RouteIdx,
        packed: u64,
        board: u16,
        transfers: u8,
        root_departure: AbsTime,
        parent: Parent,
    ) {
        if transfers as usize > MAX_TRANSFERS {
            return;
        }
        let set = &mut self.reached[route as usize];
        if set
            .iter()
            .any(|&(p, i, m)| p <= packed && i <= board && m <= transfers)
        {
            return;
        }
        // Scan cap: an entry at least as early with no more transfers already
        // scanned everything past its own index.
        let mut cap = (self.tt.route(route).stops.len() - 1) as u16;
        for &(p, i, m) in set.iter() {
            if p <= packed && m <= transfers {
                cap = cap.min(i);
            }
        }
        set.retain(|&(p, i, m)| !(packed <= p && board <= i && transfers <= m));
        set.push((packed, board, transfers));
        debug_assert!(
            {
                let s = &self.reached[route as usize];
                !s.iter().enumerate().any(|(x, &a)| {
                    s.iter().enumerate().any(|(y, &b)| {
                        x != y && a.0 <= b.0 && a.1 <= b.1 && a.2 <= b.2
                    })
                })
            },
            "reached set holds a dominated tuple"
        );
        let id = self.segments.len() as u32;
        self.segments.push(Segment {
            route,
            packed,
            board,
            scan_cap: cap,
            transfers,
            root_departure,
            parent,
        });
        self.rounds[transfers as usize].push(id);
    }

    /// Runs the round loop until every queued segment is processed.
    fn run_rounds(&mut self) {
        for n in 0..=MAX_TRANSFERS {
            let queue = std::mem::take(&mut self.rounds[n]);
            for seg_id in queue {
                self.process_segment(seg_id);
            }
        }
    }

    fn process_segment(&mut self, seg_id: u32) {
        let seg = self.segments[seg_id as usize];
        let route = self.tt.route(seg.route);
        let (offset, trip_idx) = unpack_trip_ref(seg.packed);
        let day = self.view.day_of_offset(offset);
        let trip = &route.trips[trip_idx as usize];
        let n = seg.transfers as usize;

        // Prune: nothing reachable from here can beat an arrival already
        // achieved with no more transfers.
        let first_reachable = trip.arrival_abs(day, seg.board as usize + 1).seconds();
        if first_reachable >= self.best_arrival[n] {
            return;
        }

        if let Some(records) = self.dest_routes.get(&seg.route) {
            for &(exit, walk) in records {
                if exit > seg.board {
                    let arrival =
                        trip.arrival_abs(day, exit as usize).seconds() + i64::from(walk);
                    if arrival < self.best_arrival[n] {
                        for m in n..=MAX_TRANSFERS {
                            self.best_arrival[m] = self.best_arrival[m].min(arrival);
                        }
                        self.candidates.push(Candidate {
                            departure: seg.root_departure,
                            arrival: AbsTime::from_seconds(arrival),
                            transfers: seg.transfers,
                            seg: seg_id,
                            exit_index: exit,
                            walk_to_dest: (walk > 0).then_some(walk),
                        });
                    }
                }
            }
        }

        let row = self.view.transfers(seg.route, offset, trip_idx);
        let lo = row.partition_point(|t| t.from_stop_index <= seg.board);
        let hi = row.partition_point(|t| t.from_stop_index <= seg.scan_cap);
        for k in lo..hi {
            let tr = row[k];
            self.try_insert(
                tr.to_route,
                tr.to_packed,
                tr.to_stop_index,
                seg.transfers + 1,
                seg.root_departure,
                Parent::Transfer {
                    parent_seg: seg_id,
                    exit_index: tr.from_stop_index,
                },
            );
        }
    }

    fn reconstruct(&self, cand: &Candidate) -> Journey {
        let mut chain = Vec::new();
        let mut cur = cand.seg;
        loop {
            chain.push(cur);
            match self.segments[cur as usize].parent {
                Parent::Transfer { parent_seg, .. } => cur = parent_seg,
                Parent::Initial { .. } => break,
            }
        }
        chain.reverse();

        let mut legs = Vec::new();
        let first = &self.segments[chain[0] as usize];
        if let Parent::Initial { walk: Some(w) } = first.parent {
            let board_stop = self.tt.route(first.route).stops[first.board as usize];
            legs.push(Leg::Foot {
                from: self.source,
                to: board_stop,
                duration: w,
                start: first.root_departure,
                end: first.root_departure.plus(i64::from(w)),
            });
        }
        for (k, &sid) in chain.iter().enumerate() {
            let seg = &self.segments[sid as usize];
            let route = self.tt.route(seg.route);
            let (offset, trip_idx) = unpack_trip_ref(seg.packed);
            let day = self.view.day_of_offset(offset);
            let trip = &route.trips[trip_idx as usize];
            let exit_index = if k + 1 < chain.len() {
                match self.segments[chain[k + 1] as usize].parent {
                    Parent::Transfer { exit_index, .. } => exit_index,
                    Parent::Initial { .. } => unreachable!("interior segment without parent link"),
                }
            } else {
                cand.exit_index
            };
            let exit_stop = route.stops[exit_index as usize];
            let exit_time = trip.arrival_abs(day, exit_index as usize);
            legs.push(Leg::Trip {
                route: seg.route,
                trip: trip_idx,
                day: day as u32,
                board_index: seg.board,
                exit_index,
                board_stop: route.stops[seg.board as usize],
                exit_stop,
                board_time: trip.departure_abs(day, seg.board as usize),
                exit_time,
            });
            if k + 1 < chain.len() {
                let next = &self.segments[chain[k + 1] as usize];
                let next_board_stop = self.tt.route(next.route).stops[next.board as usize];
                if next_board_stop != exit_stop {
                    let w = self
                        .tt
                        .footpath_duration(exit_stop, next_board_stop)
                        .expect("transfer implies a footpath between distinct stops");
                    legs.push(Leg::Foot {
                        from: exit_stop,
                        to: next_board_stop,
                        duration: w,
                        start: exit_time,
                        end: exit_time.plus(i64::from(w)),
                    });
                }
            } else if let Some(w) = cand.walk_to_dest {
                legs.push(Leg::Foot {
                    from: exit_stop,
                    to: self.destination,
                    duration: w,
                    start: exit_time,
                    end: exit_time.plus(i64::from(w)),
                });
            }
        }
        Journey {
            departure: first.root_departure,
            arrival: cand.arrival,
            transfers: u32::from(cand.transfers),
            legs,
        }
    }
}

fn identity_result(departure: AbsTime) -> QueryResult {
    QueryResult {
        journeys: vec![Journey {
            departure,
            arrival: departure,
            transfers: 0,
            legs: vec![],
        }],
        truncated: false,
    }
}

type Boarding = (i64, RouteIdx, u64, u16, Option<u32>);

/// All boardable (instance, index) pairs adjacent to the source whose
/// source-departure instant lies in the query day's window.
fn profile_boardings(tt: &Timetable, view: &DayView, source: StopIdx) -> Vec<Boarding> {
    let q = i64::from(view.query_day);
    let window = q * SECONDS_PER_DAY..(q + 1) * SECONDS_PER_DAY;
    let mut out = Vec::new();
    let mut collect = |stop: StopIdx, walk: Option<u32>| {
        for &(r, i) in tt.routes_at(stop) {
            let route = tt.route(r);
            if i as usize > route.last_boardable_index() {
                continue;
            }
            // all covered days: footpath boardings can pull even a next-day
            // departure's leave time back into the query day
            for offset in 0..=view.horizon {
                let day = view.day_of_offset(offset);
                if day < 0 || day >= i64::from(tt.horizon_days) {
                    continue;
                }
                for (ti, trip) in route.trips.iter().enumerate() {
                    if !trip.active_days.get(day as usize) {
                        continue;
                    }
                    let dep = abs_time(day, trip.departure_at(i as usize)).seconds();
                    let leave = dep - i64::from(walk.unwrap_or(0));
                    if window.contains(&leave) {
                        let packed = crate::model::pack_trip_ref(offset, ti as TripIdx).unwrap();
                        out.push((leave, r, packed, i, walk));
                    }
                }
            }
        }
    };
    collect(source, None);
    for &(next, walk) in tt.footpaths_from(source) {
        collect(next, Some(walk));
    }
    // latest departures first; the rest of the key only for determinism
    out.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| (a.1, a.2, a.3, a.4).cmp(&(b.1, b.2, b.3, b.4))));
    out.dedup();
    out
}

/// Full-day profile query: all Pareto-optimal journeys departing the source
/// within the view's query day, under (departure, arrival, transfers).
pub fn profile_query(
    tt: &Timetable,
    view: &DayView,
    source: StopIdx,
    destination: StopIdx,
) -> Result<QueryResult, QueryError> {
    let q = view.query_day;
    if q >= tt.horizon_days {
        return Err(QueryError::DayOutOfHorizon {
            day: i64::from(q),
            horizon: tt.horizon_days,
        });
    }
    if source == destination {
        return Ok(identity_result(AbsTime::from_seconds(
            i64::from(q) * SECONDS_PER_DAY,
        )));
    }

    let boardings = profile_boardings(tt, view, source);
    let mut engine = Engine::new(tt, view, source, destination);
    let mut idx = 0;
    while idx < boardings.len() {
        let leave = boardings[idx].0;
        while idx < boardings.len() && boardings[idx].0 == leave {
            let (_, r, packed, i, walk) = boardings[idx];
            engine.try_insert(
                r,
                packed,
                i,
                0,
                AbsTime::from_seconds(leave),
                Parent::Initial { walk },
            );
            idx += 1;
        }
        engine.run_rounds();
    }

    let journeys = finish_profile(&engine);
    Ok(QueryResult {
        journeys,
        truncated: view.clipped,
    })
}

/// Earliest-arrival query from a departure instant on the view's query day:
/// the Pareto set over (arrival, transfers).
pub fn earliest_arrival_query(
    tt: &Timetable,
    view: &DayView,
    source: StopIdx,
    destination: StopIdx,
    departure: AbsTime,
) -> Result<QueryResult, QueryError> {
    if departure.day() != i64::from(view.query_day) {
        return Err(QueryError::DepartureOutsideDay(departure.seconds()));
    }
    if source == destination {
        return Ok(identity_result(departure));
    }
    let mut engine = Engine::new(tt, view, source, destination);
    let seed = |stop: StopIdx, walk: Option<u32>, engine: &mut Engine| {
        let need = departure.seconds() + i64::from(walk.unwrap_or(0));
        for &(r, i) in tt.routes_at(stop) {
            let route = tt.route(r);
            if i as usize > route.last_boardable_index() {
                continue;
            }
            // earliest reachable instance in packed order
            'found: for offset in 0..=view.horizon {
                let day = view.day_of_offset(offset);
                if day < 0 || day >= i64::from(tt.horizon_days) {
                    continue;
                }
                for (ti, trip) in route.trips.iter().enumerate() {
                    if !trip.active_days.get(day as usize) {
                        continue;
                    }
                    let dep = abs_time(day, trip.departure_at(i as usize)).seconds();
                    if dep >= need {
                        let packed = crate::model::pack_trip_ref(offset, ti as TripIdx).unwrap();
                        engine.try_insert(
                            r,
                            packed,
                            i,
                            0,
                            AbsTime::from_seconds(dep - i64::from(walk.unwrap_or(0))),
                            Parent::Initial { walk },
                        );
                        break 'found;
                    }
                }
            }
        }
    };
    seed(source, None, &mut engine);
    for &(next, walk) in tt.footpaths_from(source) {
        seed(next, Some(walk), &mut engine);
    }
    engine.run_rounds();

    let mut keep: Vec<&Candidate> = Vec::new();
    for c in &engine.candidates {
        let key = (c.arrival.seconds(), u32::from(c.transfers));
        if engine
            .candidates
            .iter()
            .any(|o| dominates_arrival((o.arrival.seconds(), u32::from(o.transfers)), key))
        {
            continue;
        }
        if keep
            .iter()
            .any(|o| (o.arrival, o.transfers) == (c.arrival, c.transfers))
        {
            continue;
        }
        keep.push(c);
    }
    keep.sort_by_key(|c| (c.arrival, c.transfers));
    let journeys = keep.iter().map(|c| engine.reconstruct(c)).collect();
    Ok(QueryResult {
        journeys,
        truncated: view.clipped,
    })
}

fn finish_profile(engine: &Engine) -> Vec<Journey> {
    let cands = &engine.candidates;
    let mut keep: Vec<&Candidate> = Vec::new();
    for c in cands {
        let key = (
            c.departure.seconds(),
            c.arrival.seconds(),
            u32::from(c.transfers),
        );
        if cands.iter().any(|o| {
            dominates_profile(
                (
                    o.departure.seconds(),
                    o.arrival.seconds(),
                    u32::from(o.transfers),
                ),
                key,
            )
        }) {
            continue;
        }
        // one representative per (departure, arrival, transfers): first found
        if keep
            .iter()
            .any(|o| (o.departure, o.arrival, o.transfers) == (c.departure, c.arrival, c.transfers))
        {
            continue;
        }
        keep.push(c);
    }
    keep.sort_by(|a, b| {
        b.departure
            .cmp(&a.departure)
            .then(a.arrival.cmp(&b.arrival))
            .then(a.transfers.cmp(&b.transfers))
    });
    keep.iter().map(|c| engine.reconstruct(c)).collect()
}

/// Checks a reconstructed journey against the timetable: leg alternation,
/// boarding feasibility (change time at a shared stop, footpath duration
/// otherwise), endpoint stops, and the transfer count convention.
pub fn validate_journey(
    tt: &Timetable,
    journey: &Journey,
    source: StopIdx,
    destination: StopIdx,
) -> Result<(), String> {
    if journey.legs.is_empty() {
        if source != destination || journey.departure != journey.arrival {
            return Err("empty journey only valid for source == destination".into());
        }
        return Ok(());
    }
    let trip_legs = journey
        .legs
        .iter()
        .filter(|l| matches!(l, Leg::Trip { .. }))
        .count();
    if trip_legs == 0 {
        return Err("journey without trip legs".into());
    }
    if journey.transfers as usize != trip_legs - 1 {
        return Err(format!(
            "transfer count {} != trip legs {} - 1",
            journey.transfers, trip_legs
        ));
    }

    let mut at_stop = source;
    let mut ready_time = journey.departure;
    let mut last_was_foot = false;
    let mut prev_route: Option<RouteIdx> = None;
    let mut came_from_vehicle = false;

    for leg in &journey.legs {
        match leg {
            Leg::Foot {
                from,
                to,
                duration,
                start,
                end,
            } => {
                if last_was_foot {
                    return Err("two consecutive footpath legs".into());
                }
                if *from != at_stop {
                    return Err("footpath does not start at current stop".into());
                }
                match tt.footpath_duration(*from, *to) {
                    Some(d) if d == *duration => {}
                    other => return Err(format!("footpath duration mismatch: {other:?}")),
                }
                if start.seconds() < ready_time.seconds() {
                    return Err("footpath starts before arrival".into());
                }
                if end.seconds() != start.seconds() + i64::from(*duration) {
                    return Err("footpath leg times inconsistent".into());
                }
                at_stop = *to;
                ready_time = *end;
                last_was_foot = true;
                came_from_vehicle = false;
            }
            Leg::Trip {
                route,
                trip,
                day,
                board_index,
                exit_index,
                board_stop,
                exit_stop,
                board_time,
                exit_time,
            } => {
                if board_index >= exit_index {
                    return Err("board index not before exit index".into());
                }
                let r = tt.route(*route);
                if r.stops[*board_index as usize] != *board_stop
                    || r.stops[*exit_index as usize] != *exit_stop
                {
                    return Err("trip leg stops do not match route".into());
                }
                if *board_stop != at_stop {
                    return Err("trip leg does not board at current stop".into());
                }
                let t = &r.trips[*trip as usize];
                if !t.active_days.get(*day as usize) {
                    return Err("trip not active on the leg's day".into());
                }
                if t.departure_abs(i64::from(*day), *board_index as usize) != *board_time
                    || t.arrival_abs(i64::from(*day), *exit_index as usize) != *exit_time
                {
                    return Err("trip leg times do not match timetable".into());
                }
                // boarding feasibility: change time only applies between two
                // vehicle legs at the same stop (never after a footpath or at
                // the journey's first boarding)
                let min_board = if came_from_vehicle {
                    ready_time
                        .seconds()
                        .saturating_add(i64::from(tt.change_time(
                            at_stop,
                            prev_route.unwrap(),
                            *route,
                        )))
                } else {
                    ready_time.seconds()
                };
                if board_time.seconds() < min_board {
                    return Err(format!(
                        "boarding at {} before feasibility threshold {}",
                        board_time.seconds(),
                        min_board
                    ));
                }
                at_stop = *exit_stop;
                ready_time = *exit_time;
                last_was_foot = false;
                came_from_vehicle = true;
                prev_route = Some(*route);
            }
        }
    }
    if at_stop != destination {
        return Err("journey does not end at the destination".into());
    }
    if ready_time != journey.arrival {
        return Err("journey arrival does not match last leg".into());
    }
    Ok(())
}

/// (departure, arrival, transfers) triples of a result, the comparable core
/// of a Pareto front.
pub fn front_triples(result: &QueryResult) -> Vec<(i64, i64, u32)> {
    let mut v: Vec<(i64, i64, u32)> = result
        .journeys
        .iter()
        .map(|j| (j.departure.seconds(), j.arrival.seconds(), j.transfers))
        .collect();
    v.sort_unstable();
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitset::DayBitset;
    use crate::extract::extract_day_view;
    use crate::ingest::synthetic::{gen_synthetic, ActivityPattern, SyntheticParams};
    use crate::model::{DraftTrip, Stop, TimetableDraft};
    use crate::preprocess::{compute_transfers, partition_routes, reduce_transfers};
    use crate::time::RelTime;

    fn rel(s: i64) -> RelTime {
        RelTime::new(s).unwrap()
    }

    fn stops(n: u32) -> Vec<Stop> {
        (0..n)
            .map(|i| Stop {
                id: format!("S{i}"),
                name: format!("S{i}"),
                min_change_time: 0,
            })
            .collect()
    }

    fn trip(stops: Vec<u32>, times: &[(i64, i64)], days: &[usize], horizon: usize) -> DraftTrip {
        DraftTrip::new(
            stops,
            times.iter().map(|&(a, _)| rel(a)).collect(),
            times.iter().map(|&(_, d)| rel(d)).collect(),
            DayBitset::from_days(horizon, days.iter().copied()).unwrap(),
        )
        .unwrap()
    }

    fn prep(tt: &Timetable, q: u32) -> crate::extract::DayView {
        let reduced = reduce_transfers(tt, &compute_transfers(tt));
        extract_day_view(tt, &reduced, q, 2).unwrap()
    }

    #[test]
    fn identity_query() {
        let tt = partition_routes(TimetableDraft {
            horizon_days: 1,
            start_date: None,
            stops: stops(2),
            footpaths: vec![],
            overrides: vec![],
            trips: vec![trip(vec![0, 1], &[(0, 100), (200, 200)], &[0], 1)],
        })
        .unwrap();
        let view = prep(&tt, 0);
        let res = earliest_arrival_query(&tt, &view, 0, 0, AbsTime::from_seconds(50)).unwrap();
        assert_eq!(res.journeys.len(), 1);
        assert_eq!(res.journeys[0].arrival, res.journeys[0].departure);
        assert_eq!(res.journeys[0].transfers, 0);
    }

    #[test]
    fn direct_ride() {
        let tt = partition_routes(TimetableDraft {
            horizon_days: 1,
            start_date: None,
            stops: stops(2),
            footpaths: vec![],
            overrides: vec![],
            trips: vec![trip(vec![0, 1], &[(0, 100), (200, 200)], &[0], 1)],
        })
        .unwrap();
        let view = prep(&tt, 0);
        let res = earliest_arrival_query(&tt, &view, 0, 1, AbsTime::from_seconds(50)).unwrap();
        assert_eq!(res.journeys.len(), 1);
        let j = &res.journeys[0];
        assert_eq!(j.transfers, 0);
        assert_eq!(j.departure.seconds(), 100);
        assert_eq!(j.arrival.seconds(), 200);
        validate_journey(&tt, j, 0, 1).unwrap();
        // departing after the only trip leaves: no journey
        let res = earliest_arrival_query(&tt, &view, 0, 1, AbsTime::from_seconds(150)).unwrap();
        assert!(res.journeys.is_empty());
    }

    #[test]
    fn pareto_front_keeps_express_and_fast_connection() {
        // Express 0 -> 2 arriving 10:30 with 0 transfers; local + connection
        // arriving 10:00 with 1 transfer. Both are optimal.
        let h = 1usize;
        let express = trip(vec![0, 2], &[(0, 28800), (37800, 37800)], &[0], h);
        let local = trip(vec![0, 1], &[(0, 28800), (30600, 30600)], &[0], h);
        let conn = trip(vec![1, 2], &[(0, 31200), (36000, 36000)], &[0], h);
        let tt = partition_routes(TimetableDraft {
            horizon_days: 1,
            start_date: None,
            stops: stops(3),
            footpaths: vec![],
            overrides: vec![],
            trips: vec![express, local, conn],
        })
        .unwrap();
        let view = prep(&tt, 0);
        let res = earliest_arrival_query(&tt, &view, 0, 2, AbsTime::from_seconds(28800)).unwrap();
        let triples: Vec<(i64, u32)> = res
            .journeys
            .iter()
            .map(|j| (j.arrival.seconds(), j.transfers))
            .collect();
        assert_eq!(triples, vec![(36000, 1), (37800, 0)]);
        for j in &res.journeys {
            validate_journey(&tt, j, 0, 2).unwrap();
        }
    }

    #[test]
    fn profile_three_departures() {
        // one route, three departures over the day, no domination between them
        let h = 1usize;
        let mk = |s: i64| trip(vec![0, 1], &[(0, s), (s + 1800, s + 1800)], &[0], h);
        let tt = partition_routes(TimetableDraft {
            horizon_days: 1,
            start_date: None,
            stops: stops(2),
            footpaths: vec![],
            overrides: vec![],
            trips: vec![mk(28800), mk(32400), mk(36000)],
        })
        .unwrap();
        let view = prep(&tt, 0);
        let res = profile_query(&tt, &view, 0, 1).unwrap();
        assert_eq!(res.journeys.len(), 3);
        for j in &res.journeys {
            assert_eq!(j.transfers, 0);
            validate_journey(&tt, j, 0, 1).unwrap();
        }
        // latest departure first
        assert!(res.journeys[0].departure > res.journeys[1].departure);
    }

    #[test]
    fn cross_midnight_transfer_is_found() {
        // trip arrives day d late; connection departs next morning (day d+1)
        let h = 3usize;
        let late = trip(vec![0, 1], &[(0, 85000), (86000, 86000)], &[0, 1, 2], h);
        let morning = trip(vec![1, 2], &[(0, 21600), (25200, 25200)], &[0, 1, 2], h);
        let tt = partition_routes(TimetableDraft {
            horizon_days: h as u32,
            start_date: None,
            stops: stops(3),
            footpaths: vec![],
            overrides: vec![],
            trips: vec![late, morning],
        })
        .unwrap();
        let view = prep(&tt, 0);
        let res = profile_query(&tt, &view, 0, 2).unwrap();
        assert_eq!(res.journeys.len(), 1);
        let j = &res.journeys[0];
        assert_eq!(j.transfers, 1);
        assert_eq!(j.arrival.seconds(), SECONDS_PER_DAY + 25200);
        validate_journey(&tt, j, 0, 2).unwrap();
    }

    #[test]
    fn previous_day_trip_crossing_into_query_day_is_used() {
        // a trip of day q-1 departing the source after midnight (relative
        // time past 24h) is boardable within day q
        let h = 3usize;
        let owl = trip(
            vec![0, 1],
            &[(0, 87000), (88800, 88800)],
            &[0, 1, 2],
            h,
        );
        let tt = partition_routes(TimetableDraft {
            horizon_days: h as u32,
            start_date: None,
            stops: stops(2),
            footpaths: vec![],
            overrides: vec![],
            trips: vec![owl],
        })
        .unwrap();
        let view = prep(&tt, 1);
        let res = profile_query(&tt, &view, 0, 1).unwrap();
        // departures within day 1: the day-0 instance at 87000 (= day1 600)
        // and the day-1 instance at 87000+86400 which leaves day 1? no: day-1
        // instance departs at abs 87000+86400 which is day 2 — excluded.
        assert_eq!(res.journeys.len(), 1);
        assert_eq!(res.journeys[0].departure.seconds(), 87000);
        validate_journey(&tt, &res.journeys[0], 0, 1).unwrap();
    }

    #[test]
    fn footpath_boarding_and_final_walk() {
        // 0 --walk--> 1 --trip--> 2 --walk--> 3
        let h = 1usize;
        let t = trip(vec![1, 2], &[(0, 1000), (2000, 2000)], &[0], h);
        let tt = partition_routes(TimetableDraft {
            horizon_days: 1,
            start_date: None,
            stops: stops(4),
            footpaths: vec![
                crate::model::Footpath { from: 0, to: 1, duration: 300 },
                crate::model::Footpath { from: 2, to: 3, duration: 200 },
            ],
            overrides: vec![],
            trips: vec![t],
        })
        .unwrap();
        let view = prep(&tt, 0);
        let res = earliest_arrival_query(&tt, &view, 0, 3, AbsTime::from_seconds(0)).unwrap();
        assert_eq!(res.journeys.len(), 1);
        let j = &res.journeys[0];
        assert_eq!(j.departure.seconds(), 700); // leave at dep - walk
        assert_eq!(j.arrival.seconds(), 2200);
        assert_eq!(j.legs.len(), 3);
        validate_journey(&tt, j, 0, 3).unwrap();
    }

    #[test]
    fn random_instances_have_consistent_journeys() {
        for seed in 0..5u64 {
            let tt = gen_synthetic(&SyntheticParams {
                seed,
                n_stops: 20,
                n_routes: 8,
                trips_per_route: 3,
                horizon_days: 7,
                footpath_density: 0.1,
                activity: ActivityPattern::Random(0.7),
            })
            .unwrap();
            let reduced = reduce_transfers(&tt, &compute_transfers(&tt));
            for q in [0u32, 3] {
                let view = extract_day_view(&tt, &reduced, q, 2).unwrap();
                for (src, dst) in [(0u32, 5u32), (3, 17), (10, 2)] {
                    let res = profile_query(&tt, &view, src, dst).unwrap();
                    for j in &res.journeys {
                        validate_journey(&tt, j, src, dst)
                            .unwrap_or_else(|e| panic!("seed {seed} q {q}: {e}\n{j:#?}"));
                        // day-offset soundness of every trip leg
                        for leg in &j.legs {
                            if let Leg::Trip { route, trip, day, .. } = leg {
                                assert!(tt
                                    .route(*route)
                                    .trips[*trip as usize]
                                    .active_days
                                    .get(*day as usize));
                            }
                        }
                    }
                    // no dominated pair in the front
                    let triples = front_triples(&res);
                    for a in &triples {
                        for b in &triples {
                            assert!(
                                a == b || !dominates_profile(*a, *b),
                                "dominated pair in front: {a:?} vs {b:?}"
                            );
                        }
                    }
                }
            }
        }
    }
}
