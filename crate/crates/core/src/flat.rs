//! Query engine over a flattened window: the original flat-identifier
//! trip-based algorithm with per-round first-reached-index arrays, used for
//! comparison and as the fast path for frequently queried periods.

use std::collections::HashMap;

use crate::error::QueryError;
use crate::extract::{FlatTimetable, FlatTransfer};
use crate::model::{StopIdx, Timetable};
use crate::query::{
    dominates_arrival, dominates_profile, Journey, Leg, QueryResult, MAX_TRANSFERS,
};
use crate::time::{AbsTime, SECONDS_PER_DAY};

#[derive(Clone, Copy, Debug)]
enum Parent {
    Initial { walk: Option<u32> },
    Transfer { parent_seg: u32, exit_index: u16 },
}

#[derive(Clone, Copy, Debug)]
struct Segment {
    flat_trip: u32,
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

struct FlatEngine<'a> {
    tt: &'a Timetable,
    flat: &'a FlatTimetable,
    source: StopIdx,
    destination: StopIdx,
    dest_routes: HashMap<u32, Vec<(u16, u32)>>,
    /// reached[n][flat trip] = first stop index reached with <= n transfers;
    /// updates are unrolled over all later trips of the flat route.
    reached: Vec<Vec<u16>>,
    segments: Vec<Segment>,
    rounds: Vec<Vec<u32>>,
    best_arrival: [i64; MAX_TRANSFERS + 1],
    candidates: Vec<Candidate>,
}

const UNREACHED: u16 = u16::MAX;

impl<'a> FlatEngine<'a> {
    fn new(
        tt: &'a Timetable,
        flat: &'a FlatTimetable,
        source: StopIdx,
        destination: StopIdx,
    ) -> Self {
        let mut dest_routes: HashMap<u32, Vec<(u16, u32)>> = HashMap::new();
        for &(fr, i) in flat.routes_at(destination) {
            if i >= 1 {
                dest_routes.entry(fr).or_default().push((i, 0));
            }
        }
        for &(from, walk) in tt.footpaths_into(destination) {
            for &(fr, i) in flat.routes_at(from) {
                if i >= 1 {
                    dest_routes.entry(fr).or_default().push((i, walk));
                }
            }
        }
        for v in dest_routes.values_mut() {
            v.sort_unstable();
        }
        FlatEngine {
            tt,
            flat,
            source,
            destination,
            dest_routes,
            reached: vec![vec![UNREACHED; flat.trips.len()]; MAX_TRANSFERS + 1],
            segments: Vec::new(),
            rounds: vec![Vec::new(); MAX_TRANSFERS + 2],
            best_arrival: [i64::MAX; MAX_TRANSFERS + 1],
            candidates: Vec::new(),
        }
    }

    fn try_insert(
        &mut self,
        flat_trip: u32,
        board: u16,
        transfers: u8,
        root_departure: AbsTime,
        parent: Parent,
    ) {
        if transfers as usize > MAX_TRANSFERS {
            return;
        }
        let n = transfers as usize;
        let cap = self.reached[n][flat_trip as usize];
        if board >= cap {
            return;
        }
        let ft = &self.flat.trips[flat_trip as usize];
        let route = &self.flat.routes[ft.flat_route as usize];
        // unrolled update: this and every later trip of the flat route is now
        // reached at `board` for every round >= n
        for level in &mut self.reached[n..] {
            for u in flat_trip..route.first_trip + route.n_trips {
                let slot = &mut level[u as usize];
                *slot = (*slot).min(board);
            }
        }
        let id = self.segments.len() as u32;
        self.segments.push(Segment {
            flat_trip,
            board,
            scan_cap: cap.min((route.stops.len() - 1) as u16),
            transfers,
            root_departure,
            parent,
        });
        self.rounds[n].push(id);
    }

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
        let ft = &self.flat.trips[seg.flat_trip as usize];
        let n = seg.transfers as usize;

        if ft.arrival_at(seg.board as usize + 1) >= self.best_arrival[n] {
            return;
        }

        if let Some(records) = self.dest_routes.get(&ft.flat_route) {
            for &(exit, walk) in records {
                if exit > seg.board {
                    let arrival = ft.arrival_at(exit as usize) + i64::from(walk);
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

        let row = self.flat.transfers_of(seg.flat_trip);
        let lo = row.partition_point(|t: &FlatTransfer| t.from_stop_index <= seg.board);
        let hi = row.partition_point(|t: &FlatTransfer| t.from_stop_index <= seg.scan_cap);
        for tr in &row[lo..hi] {
            self.try_insert(
                tr.to_flat_trip,
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
        {
            let ft = &self.flat.trips[first.flat_trip as usize];
            let route = &self.flat.routes[ft.flat_route as usize];
            if let Parent::Initial { walk: Some(w) } = first.parent {
                legs.push(Leg::Foot {
                    from: self.source,
                    to: route.stops[first.board as usize],
                    duration: w,
                    start: first.root_departure,
                    end: first.root_departure.plus(i64::from(w)),
                });
            }
        }
        for (k, &sid) in chain.iter().enumerate() {
            let seg = &self.segments[sid as usize];
            let ft = &self.flat.trips[seg.flat_trip as usize];
            let route = &self.flat.routes[ft.flat_route as usize];
            let exit_index = if k + 1 < chain.len() {
                match self.segments[chain[k + 1] as usize].parent {
                    Parent::Transfer { exit_index, .. } => exit_index,
                    Parent::Initial { .. } => unreachable!("interior segment without parent link"),
                }
            } else {
                cand.exit_index
            };
            let exit_stop = route.stops[exit_index as usize];
            let exit_time = AbsTime::from_seconds(ft.arrival_at(exit_index as usize));
            legs.push(Leg::Trip {
                route: ft.orig_route,
                trip: ft.orig_trip,
                day: ft.day,
                board_index: seg.board,
                exit_index,
                board_stop: route.stops[seg.board as usize],
                exit_stop,
                board_time: AbsTime::from_seconds(ft.departure_at(seg.board as usize)),
                exit_time,
            });
            if k + 1 < chain.len() {
                let next = &self.segments[chain[k + 1] as usize];
                let next_ft = &self.flat.trips[next.flat_trip as usize];
                let next_board_stop =
                    self.flat.routes[next_ft.flat_route as usize].stops[next.board as usize];
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

/// Full-day profile query over the flattened window; `query_day` must lie
/// inside the window. Journeys are confined to the window's instances, which
/// matches a day view covering the same days.
pub fn flat_profile_query(
    tt: &Timetable,
    flat: &FlatTimetable,
    source: StopIdx,
    destination: StopIdx,
    query_day: u32,
) -> Result<QueryResult, QueryError> {
    if query_day < flat.window_start || query_day >= flat.window_start + flat.window_len {
        return Err(QueryError::DayOutOfHorizon {
            day: i64::from(query_day),
            horizon: flat.window_start + flat.window_len,
        });
    }
    if source == destination {
        return Ok(identity_result(AbsTime::from_seconds(
            i64::from(query_day) * SECONDS_PER_DAY,
        )));
    }
    let window = i64::from(query_day) * SECONDS_PER_DAY
        ..(i64::from(query_day) + 1) * SECONDS_PER_DAY;

    let mut boardings: Vec<(i64, u32, u16, Option<u32>)> = Vec::new();
    let mut collect = |stop: StopIdx, walk: Option<u32>| {
        for &(fr, i) in flat.routes_at(stop) {
            let route = &flat.routes[fr as usize];
            if i as usize + 2 > route.stops.len() {
                continue;
            }
            for (pos, ft) in flat.trips_of_route(fr).iter().enumerate() {
                let dep = ft.departure_at(i as usize);
                if dep == i64::MAX {
                    continue;
                }
                let leave = dep - i64::from(walk.unwrap_or(0));
                if window.contains(&leave) {
                    boardings.push((leave, route.first_trip + pos as u32, i, walk));
                }
            }
        }
    };
    collect(source, None);
    for &(next, walk) in tt.footpaths_from(source) {
        collect(next, Some(walk));
    }
    boardings.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| (a.1, a.2, a.3).cmp(&(b.1, b.2, b.3))));
    boardings.dedup();

    let mut engine = FlatEngine::new(tt, flat, source, destination);
    let mut idx = 0;
    while idx < boardings.len() {
        let leave = boardings[idx].0;
        while idx < boardings.len() && boardings[idx].0 == leave {
            let (_, ftrip, i, walk) = boardings[idx];
            engine.try_insert(
                ftrip,
                i,
                0,
                AbsTime::from_seconds(leave),
                Parent::Initial { walk },
            );
            idx += 1;
        }
        engine.run_rounds();
    }

    Ok(QueryResult {
        journeys: finish_profile(&engine),
        truncated: false,
    })
}

/// Earliest-arrival query over the flattened window.
pub fn flat_earliest_arrival_query(
    tt: &Timetable,
    flat: &FlatTimetable,
    source: StopIdx,
    destination: StopIdx,
    departure: AbsTime,
) -> Result<QueryResult, QueryError> {
    let day = departure.day();
    if day < i64::from(flat.window_start)
        || day >= i64::from(flat.window_start + flat.window_len)
    {
        return Err(QueryError::DepartureOutsideDay(departure.seconds()));
    }
    if source == destination {
        return Ok(identity_result(departure));
    }
    let mut engine = FlatEngine::new(tt, flat, source, destination);
    let seed = |stop: StopIdx, walk: Option<u32>, engine: &mut FlatEngine| {
        let need = departure.seconds() + i64::from(walk.unwrap_or(0));
        for &(fr, i) in flat.routes_at(stop) {
            let route = &flat.routes[fr as usize];
            if i as usize + 2 > route.stops.len() {
                continue;
            }
            let trips = flat.trips_of_route(fr);
            let pos = trips.partition_point(|ft| ft.departure_at(i as usize) < need);
            if pos < trips.len() {
                let dep = trips[pos].departure_at(i as usize);
                engine.try_insert(
                    route.first_trip + pos as u32,
                    i,
                    0,
                    AbsTime::from_seconds(dep - i64::from(walk.unwrap_or(0))),
                    Parent::Initial { walk },
                );
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
    Ok(QueryResult {
        journeys: keep.iter().map(|c| engine.reconstruct(c)).collect(),
        truncated: false,
    })
}

fn finish_profile(engine: &FlatEngine) -> Vec<Journey> {
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::{extract_day_view, flatten_window};
    use crate::ingest::synthetic::{gen_synthetic, ActivityPattern, SyntheticParams};
    use crate::preprocess::{compute_transfers, reduce_transfers};
    use crate::query::{front_triples, profile_query, validate_journey};

    #[test]
    fn flat_profile_matches_full_engine_on_random_instances() {
        for seed in 0..6u64 {
            let tt = gen_synthetic(&SyntheticParams {
                seed: 100 + seed,
                n_stops: 18,
                n_routes: 7,
                trips_per_route: 3,
                horizon_days: 6,
                footpath_density: 0.12,
                activity: ActivityPattern::Random(0.7),
            })
            .unwrap();
            let reduced = reduce_transfers(&tt, &compute_transfers(&tt));
            for q in [0u32, 2, 4] {
                let horizon = 2u32;
                let view = extract_day_view(&tt, &reduced, q, horizon).unwrap();
                let w = q.saturating_sub(1);
                let end = (q + horizon).min(tt.horizon_days);
                let flat = flatten_window(&tt, &reduced, w, end - w).unwrap();
                for (src, dst) in [(0u32, 9u32), (4, 16), (11, 2), (7, 7)] {
                    let full = profile_query(&tt, &view, src, dst).unwrap();
                    let flat_res = flat_profile_query(&tt, &flat, src, dst, q).unwrap();
                    assert_eq!(
                        front_triples(&full),
                        front_triples(&flat_res),
                        "seed {seed} q {q} {src}->{dst}"
                    );
                    for j in &flat_res.journeys {
                        validate_journey(&tt, j, src, dst).unwrap();
                    }
                }
            }
        }
    }
}
