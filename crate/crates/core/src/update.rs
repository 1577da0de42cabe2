//! Incremental timetable updates: remove trips on given days, add trips,
//! delay trips, and batches thereof. Only transfers of affected trips are
//! recomputed and re-reduced; the resulting reduced transfer set is
//! byte-identical to preprocessing the edited timetable from scratch.
//!
//! Updates are pure: they take the current snapshot and return a fresh one,
//! so in-flight queries finish on the old immutable data. Trip and route
//! indices are not stable across updates; cached day views must be dropped.

use std::collections::{BTreeSet, HashMap, HashSet};

use rayon::prelude::*;

use crate::bitset::DayBitset;
use crate::error::UpdateError;
use crate::model::{DraftTrip, RouteIdx, StopIdx, Timetable, Trip, TripIdx};
use crate::preprocess::{
    compute_trip_transfers, reduce_trip_transfers, repartition_sequence, Transfer, TransferSet,
};
use crate::time::RelTime;

/// One timetable change. Trip references are (route index, trip index) in
/// the timetable state the edit is applied to; within a batch, later edits
/// see the structural effect of earlier ones.
#[derive(Clone, Debug)]
pub enum TimetableEdit {
    Remove {
        route: RouteIdx,
        trip: TripIdx,
        days: Vec<u32>,
    },
    Add {
        trip: DraftTrip,
    },
    Delay {
        route: RouteIdx,
        trip: TripIdx,
        day: u32,
        delay: DelaySpec,
    },
}

#[derive(Clone, Debug)]
pub enum DelaySpec {
    /// Every stop shifted by the same non-negative number of seconds.
    Uniform(u32),
    /// Per-stop shifts; must keep the trip's times monotone.
    PerStop(Vec<u32>),
}

/// Result of applying edits: the new snapshot plus recompute accounting.
pub struct Updated {
    pub timetable: Timetable,
    pub transfers: TransferSet,
    /// Trips whose transfers were recomputed and re-reduced; the cost measure
    /// update reports are normalized by.
    pub trips_recomputed: usize,
}

pub fn remove_trip(
    tt: &Timetable,
    transfers: &TransferSet,
    route: RouteIdx,
    trip: TripIdx,
    days: &DayBitset,
) -> Result<Updated, UpdateError> {
    apply_batch(
        tt,
        transfers,
        &[TimetableEdit::Remove {
            route,
            trip,
            days: days.iter_ones().map(|d| d as u32).collect(),
        }],
    )
}

pub fn add_trip(
    tt: &Timetable,
    transfers: &TransferSet,
    trip: DraftTrip,
) -> Result<Updated, UpdateError> {
    apply_batch(tt, transfers, &[TimetableEdit::Add { trip }])
}

/// Removes the trip on the given day and re-adds a copy, shifted by the
/// delay, active on that day only.
pub fn delay_trip(
    tt: &Timetable,
    transfers: &TransferSet,
    route: RouteIdx,
    trip: TripIdx,
    day: u32,
    delay: DelaySpec,
) -> Result<Updated, UpdateError> {
    apply_batch(
        tt,
        transfers,
        &[TimetableEdit::Delay {
            route,
            trip,
            day,
            delay,
        }],
    )
}

/// Applies all structural edits first, then recomputes the union of affected
/// trips once. Equivalent to applying the edits one at a time, and to fresh
/// preprocessing of the final timetable. The first invalid edit aborts the
/// whole batch; the inputs are never modified.
pub fn apply_batch(
    tt: &Timetable,
    transfers: &TransferSet,
    edits: &[TimetableEdit],
) -> Result<Updated, UpdateError> {
    if !transfers.matches_shape(tt) || !transfers.reduced {
        return Err(UpdateError::BadDelay(
            "transfer set does not match timetable or is not reduced".into(),
        ));
    }
    let (new_tt, touched) = apply_edits_structural(tt, edits)?;

    // Affected trips: any trip visiting a touched stop or a stop with a
    // footpath into one. Transfers are stored on the origin trip, so this
    // covers both outgoing and incoming edges of the modified trips.
    let mut affected_stops: HashSet<StopIdx> = touched.stops.clone();
    for &s in &touched.stops {
        for &(from, _) in tt.footpaths_into(s) {
            affected_stops.insert(from);
        }
    }

    let route_map = map_untouched_routes(tt, &new_tt, &touched.sequences);

    let mut rows: Vec<Option<Vec<Transfer>>> = vec![None; new_tt.total_trips() as usize];
    let mut recompute: Vec<(RouteIdx, TripIdx)> = Vec::new();
    for (ri, route) in new_tt.routes.iter().enumerate() {
        let is_affected = route.stops.iter().any(|s| affected_stops.contains(s));
        if is_affected {
            for ti in 0..route.trips.len() {
                recompute.push((ri as RouteIdx, ti as TripIdx));
            }
        } else {
            let old_route = route_map
                .new_to_old
                .get(&(ri as RouteIdx))
                .copied()
                .expect("unaffected route must map to an old route");
            for ti in 0..route.trips.len() {
                let old_row = transfers.row(tt.trip_row(old_route, ti as TripIdx));
                let remapped = old_row
                    .iter()
                    .map(|t| Transfer {
                        to_route: *route_map
                            .old_to_new
                            .get(&t.to_route)
                            .expect("unaffected rows never target edited routes"),
                        ..t.clone()
                    })
                    .collect();
                rows[new_tt.trip_row(ri as RouteIdx, ti as TripIdx)] = Some(remapped);
            }
        }
    }

    let max_day_shift = transfers.max_day_shift;
    let recomputed: Vec<((RouteIdx, TripIdx), Vec<Transfer>)> = recompute
        .par_iter()
        .map(|&(r, t)| {
            let full = compute_trip_transfers(&new_tt, r, t, max_day_shift);
            ((r, t), reduce_trip_transfers(&new_tt, r, t, &full))
        })
        .collect();
    let trips_recomputed = recomputed.len();
    for ((r, t), row) in recomputed {
        rows[new_tt.trip_row(r, t)] = Some(row);
    }

    let rows: Vec<Vec<Transfer>> = rows
        .into_iter()
        .map(|r| r.expect("every trip row filled"))
        .collect();
    let out = TransferSet::from_rows(
        true,
        new_tt.horizon_days,
        max_day_shift,
        new_tt.routes.iter().map(|r| r.trips.len() as u32).collect(),
        rows,
    );
    Ok(Updated {
        timetable: new_tt,
        transfers: out,
        trips_recomputed,
    })
}

/// Stops and stop sequences touched by a batch of structural edits.
pub(crate) struct Touched {
    pub stops: HashSet<StopIdx>,
    pub sequences: BTreeSet<Vec<StopIdx>>,
}

/// Applies the edits to the routes only (no transfer work), validating each
/// against the evolving timetable. Used by `apply_batch` and by random-edit
/// generators that must produce index-valid edit streams.
pub(crate) fn apply_edits_structural(
    tt: &Timetable,
    edits: &[TimetableEdit],
) -> Result<(Timetable, Touched), UpdateError> {
    let mut work = tt.clone();
    let mut touched = Touched {
        stops: HashSet::new(),
        sequences: BTreeSet::new(),
    };
    for edit in edits {
        match edit {
            TimetableEdit::Remove { route, trip, days } => {
                let (seq, _) = lookup(&work, *route, *trip)?;
                let mut bits = DayBitset::new(work.horizon_days as usize);
                for &d in days {
                    bits.set(d as usize)
                        .map_err(|_| UpdateError::DayNotActive(d))?;
                }
                let active = &work.routes[*route as usize].trips[*trip as usize].active_days;
                if !bits.is_subset_of(active) {
                    return Err(UpdateError::DaysNotSubset);
                }
                touch(&mut touched, &seq);
                structural_remove(&mut work, *route, *trip, &bits);
            }
            TimetableEdit::Add { trip } => {
                validate_new_trip(&work, trip)?;
                touch(&mut touched, &trip.stops);
                structural_add(&mut work, trip.clone());
            }
            TimetableEdit::Delay {
                route,
                trip,
                day,
                delay,
            } => {
                let (seq, t) = lookup(&work, *route, *trip)?;
                if !t.active_days.get(*day as usize) {
                    return Err(UpdateError::DayNotActive(*day));
                }
                let delayed = delayed_copy(&work, &seq, &t, *day, delay)?;
                touch(&mut touched, &seq);
                let mut bits = DayBitset::new(work.horizon_days as usize);
                bits.set(*day as usize).unwrap();
                structural_remove(&mut work, *route, *trip, &bits);
                structural_add(&mut work, delayed);
            }
        }
    }
    Ok((work, touched))
}

fn lookup(tt: &Timetable, route: RouteIdx, trip: TripIdx) -> Result<(Vec<StopIdx>, Trip), UpdateError> {
    let r = tt
        .routes
        .get(route as usize)
        .ok_or(UpdateError::UnknownRoute(route))?;
    let t = r
        .trips
        .get(trip as usize)
        .ok_or(UpdateError::UnknownTrip { route, trip })?;
    Ok((r.stops.clone(), t.clone()))
}

fn touch(touched: &mut Touched, seq: &[StopIdx]) {
    touched.stops.extend(seq.iter().copied());
    touched.sequences.insert(seq.to_vec());
}

fn validate_new_trip(tt: &Timetable, draft: &DraftTrip) -> Result<(), UpdateError> {
    for &s in &draft.stops {
        if s >= tt.stops.len() as u32 {
            return Err(UpdateError::Model(
                crate::error::ModelError::UnknownStopIndex(s),
            ));
        }
    }
    if draft.trip.active_days.len() != tt.horizon_days as usize {
        return Err(UpdateError::Model(
            crate::error::ModelError::BitsetLengthMismatch {
                got: draft.trip.active_days.len(),
                want: tt.horizon_days as usize,
            },
        ));
    }
    Ok(())
}

fn delayed_copy(
    tt: &Timetable,
    seq: &[StopIdx],
    trip: &Trip,
    day: u32,
    delay: &DelaySpec,
) -> Result<DraftTrip, UpdateError> {
    let n = seq.len();
    let shift_at = |i: usize| -> Result<i64, UpdateError> {
        match delay {
            DelaySpec::Uniform(s) => Ok(i64::from(*s)),
            DelaySpec::PerStop(v) => {
                if v.len() != n {
                    return Err(UpdateError::BadDelay(format!(
                        "{} deltas for {} stops",
                        v.len(),
                        n
                    )));
                }
                Ok(i64::from(v[i]))
            }
        }
    };
    let mut arr = Vec::with_capacity(n);
    let mut dep = Vec::with_capacity(n);
    for i in 0..n {
        let s = shift_at(i)?;
        arr.push(RelTime::new(trip.arrival_at(i).seconds() + s).map_err(to_bad_delay)?);
        let d = trip.raw_departure_at(i);
        dep.push(RelTime::new(d.seconds() + s).map_err(to_bad_delay)?);
    }
    let mut bits = DayBitset::new(tt.horizon_days as usize);
    bits.set(day as usize).unwrap();
    DraftTrip::new(seq.to_vec(), arr, dep, bits).map_err(to_bad_delay)
}

fn to_bad_delay(e: crate::error::ModelError) -> UpdateError {
    UpdateError::BadDelay(e.to_string())
}

fn structural_remove(tt: &mut Timetable, route: RouteIdx, trip: TripIdx, days: &DayBitset) {
    let seq = tt.routes[route as usize].stops.clone();
    let now_empty = {
        let t = &mut tt.routes[route as usize].trips[trip as usize];
        t.active_days = t.active_days.and_not(days);
        !t.active_days.any()
    };
    if now_empty {
        tt.routes[route as usize].trips.remove(trip as usize);
    }
    // repartitioning the group drops empty routes and restores canonical order
    renormalize(tt, &seq, vec![]);
}

fn structural_add(tt: &mut Timetable, draft: DraftTrip) {
    let DraftTrip { stops, trip } = draft;
    renormalize(tt, &stops, vec![trip]);
}

/// Re-partitions the touched stop-sequence group and restores the canonical
/// global route order, exactly as fresh preprocessing would produce it.
fn renormalize(tt: &mut Timetable, seq: &[StopIdx], extra: Vec<Trip>) {
    let routes = std::mem::take(&mut tt.routes);
    let new_routes = repartition_sequence(routes, seq, extra);
    *tt = Timetable::assemble(
        tt.horizon_days,
        tt.start_date,
        std::mem::take(&mut tt.stops),
        std::mem::take(&mut tt.footpaths),
        std::mem::take(&mut tt.overrides),
        new_routes,
    );
}

struct RouteMap {
    old_to_new: HashMap<RouteIdx, RouteIdx>,
    new_to_old: HashMap<RouteIdx, RouteIdx>,
}

/// Pairs up routes of untouched stop sequences between the old and new
/// timetable. Both lists are canonically ordered, so matching is positional
/// after skipping touched sequences.
fn map_untouched_routes(
    old: &Timetable,
    new: &Timetable,
    touched: &BTreeSet<Vec<StopIdx>>,
) -> RouteMap {
    let mut old_to_new = HashMap::new();
    let mut new_to_old = HashMap::new();
    let mut i = 0usize;
    let mut j = 0usize;
    while i < old.routes.len() && j < new.routes.len() {
        if touched.contains(&old.routes[i].stops) {
            i += 1;
            continue;
        }
        if touched.contains(&new.routes[j].stops) {
            j += 1;
            continue;
        }
        debug_assert_eq!(
            old.routes[i].stops, new.routes[j].stops,
            "untouched routes out of sync"
        );
        old_to_new.insert(i as RouteIdx, j as RouteIdx);
        new_to_old.insert(j as RouteIdx, i as RouteIdx);
        i += 1;
        j += 1;
    }
    RouteMap {
        old_to_new,
        new_to_old,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::synthetic::{gen_synthetic, ActivityPattern, SyntheticParams};
    use crate::preprocess::{compute_transfers, reduce_transfers};

    fn preprocessed(seed: u64, days: u32) -> (Timetable, TransferSet) {
        let tt = gen_synthetic(&SyntheticParams {
            seed,
            n_stops: 16,
            n_routes: 7,
            trips_per_route: 3,
            horizon_days: days,
            footpath_density: 0.12,
            activity: ActivityPattern::Random(0.7),
        })
        .unwrap();
        let reduced = reduce_transfers(&tt, &compute_transfers(&tt));
        (tt, reduced)
    }

    fn fresh_bytes(tt: &Timetable, max_shift: u8) -> Vec<u8> {
        reduce_transfers(tt, &crate::preprocess::compute_transfers_with(tt, max_shift)).to_bytes()
    }

    #[test]
    fn remove_only_trip_empties_transfer_set() {
        let tt = crate::preprocess::partition_routes(crate::model::TimetableDraft {
            horizon_days: 1,
            start_date: None,
            stops: (0..2)
                .map(|i| crate::model::Stop {
                    id: format!("S{i}"),
                    name: String::new(),
                    min_change_time: 0,
                })
                .collect(),
            footpaths: vec![],
            overrides: vec![],
            trips: vec![DraftTrip::new(
                vec![0, 1],
                vec![RelTime::new(0).unwrap(), RelTime::new(100).unwrap()],
                vec![RelTime::new(0).unwrap(), RelTime::new(100).unwrap()],
                DayBitset::from_days(1, [0]).unwrap(),
            )
            .unwrap()],
        })
        .unwrap();
        let reduced = reduce_transfers(&tt, &compute_transfers(&tt));
        let days = DayBitset::from_days(1, [0]).unwrap();
        let updated = remove_trip(&tt, &reduced, 0, 0, &days).unwrap();
        assert_eq!(updated.timetable.total_trips(), 0);
        assert_eq!(updated.transfers.transfer_count(), 0);
    }

    #[test]
    fn remove_days_not_subset_rejected() {
        let (tt, reduced) = preprocessed(1, 5);
        // find a trip with an inactive day
        let mut found = None;
        'outer: for (ri, route) in tt.routes.iter().enumerate() {
            for (ti, trip) in route.trips.iter().enumerate() {
                for d in 0..5 {
                    if !trip.active_days.get(d) {
                        found = Some((ri as u32, ti as u32, d as u32));
                        break 'outer;
                    }
                }
            }
        }
        let (r, t, d) = found.expect("some inactive day exists");
        let days = DayBitset::from_days(5, [d as usize]).unwrap();
        assert!(matches!(
            remove_trip(&tt, &reduced, r, t, &days),
            Err(UpdateError::DaysNotSubset)
        ));
        assert!(matches!(
            remove_trip(&tt, &reduced, 999, 0, &days),
            Err(UpdateError::UnknownRoute(_))
        ));
    }

    #[test]
    fn removals_match_fresh_preprocessing() {
        let (tt, reduced) = preprocessed(2, 6);
        let route = 0u32;
        let day = tt.routes[0].trips[0].active_days.first_one().unwrap();
        let days = DayBitset::from_days(6, [day]).unwrap();
        let updated = remove_trip(&tt, &reduced, route, 0, &days).unwrap();
        assert_eq!(
            updated.transfers.to_bytes(),
            fresh_bytes(&updated.timetable, reduced.max_day_shift)
        );
    }

    #[test]
    fn add_to_empty_timetable() {
        let tt = crate::preprocess::partition_routes(crate::model::TimetableDraft {
            horizon_days: 2,
            start_date: None,
            stops: (0..3)
                .map(|i| crate::model::Stop {
                    id: format!("S{i}"),
                    name: String::new(),
                    min_change_time: 0,
                })
                .collect(),
            footpaths: vec![],
            overrides: vec![],
            trips: vec![],
        })
        .unwrap();
        let reduced = reduce_transfers(&tt, &compute_transfers(&tt));
        let trip = DraftTrip::new(
            vec![0, 1],
            vec![RelTime::new(0).unwrap(), RelTime::new(600).unwrap()],
            vec![RelTime::new(0).unwrap(), RelTime::new(600).unwrap()],
            DayBitset::from_days(2, [0]).unwrap(),
        )
        .unwrap();
        let updated = add_trip(&tt, &reduced, trip).unwrap();
        assert_eq!(updated.timetable.routes.len(), 1);
        assert_eq!(updated.timetable.total_trips(), 1);
        assert_eq!(updated.transfers.transfer_count(), 0);
        assert_eq!(
            updated.transfers.to_bytes(),
            fresh_bytes(&updated.timetable, reduced.max_day_shift)
        );
    }

    #[test]
    fn adds_and_delays_match_fresh_preprocessing() {
        let (tt, reduced) = preprocessed(3, 6);
        // add: an overtaking copy of an existing trip opens a new route
        let src = &tt.routes[1];
        let n = src.stops.len();
        let base = &src.trips[0];
        let fast = DraftTrip::new(
            src.stops.clone(),
            (0..n)
                .map(|i| RelTime::new(base.arrival_at(i).seconds() + if i == 0 { 600 } else { 0 }).unwrap())
                .collect(),
            (0..n)
                .map(|i| {
                    RelTime::new(base.raw_departure_at(i).seconds() + if i == 0 { 600 } else { 0 })
                        .unwrap()
                })
                .collect(),
            base.active_days.clone(),
        )
        .unwrap();
        let updated = add_trip(&tt, &reduced, fast).unwrap();
        updated.timetable.check_invariants().unwrap();
        assert_eq!(
            updated.transfers.to_bytes(),
            fresh_bytes(&updated.timetable, reduced.max_day_shift)
        );

        // zero delay keeps semantics: recompute equals fresh, and the total
        // per-day schedule is unchanged
        let day = updated.timetable.routes[0].trips[0]
            .active_days
            .first_one()
            .unwrap() as u32;
        let delayed = delay_trip(
            &updated.timetable,
            &updated.transfers,
            0,
            0,
            day,
            DelaySpec::Uniform(0),
        )
        .unwrap();
        assert_eq!(
            delayed.transfers.to_bytes(),
            fresh_bytes(&delayed.timetable, reduced.max_day_shift)
        );
        assert_eq!(
            delayed.timetable.total_trip_days(),
            updated.timetable.total_trip_days()
        );

        let delayed2 = delay_trip(
            &updated.timetable,
            &updated.transfers,
            0,
            0,
            day,
            DelaySpec::Uniform(300),
        )
        .unwrap();
        assert_eq!(
            delayed2.transfers.to_bytes(),
            fresh_bytes(&delayed2.timetable, reduced.max_day_shift)
        );
    }

    #[test]
    fn batch_equals_sequential() {
        let (tt, reduced) = preprocessed(4, 6);
        let day0 = tt.routes[0].trips[0].active_days.first_one().unwrap() as u32;
        let day1 = tt.routes[2].trips[0].active_days.first_one().unwrap() as u32;
        let edits = vec![
            TimetableEdit::Delay {
                route: 0,
                trip: 0,
                day: day0,
                delay: DelaySpec::Uniform(120),
            },
            TimetableEdit::Delay {
                route: 2,
                trip: 0,
                day: day1,
                delay: DelaySpec::Uniform(600),
            },
        ];
        let batched = apply_batch(&tt, &reduced, &edits).unwrap();
        let step1 = apply_batch(&tt, &reduced, &edits[..1]).unwrap();
        let step2 = apply_batch(&step1.timetable, &step1.transfers, &edits[1..]).unwrap();
        assert_eq!(batched.timetable, step2.timetable);
        assert_eq!(batched.transfers.to_bytes(), step2.transfers.to_bytes());
        assert_eq!(
            batched.transfers.to_bytes(),
            fresh_bytes(&batched.timetable, reduced.max_day_shift)
        );
        // batching overlapping edits recomputes fewer trips than the sum
        assert!(batched.trips_recomputed <= step1.trips_recomputed + step2.trips_recomputed);
    }

    #[test]
    fn batch_aborts_atomically() {
        let (tt, reduced) = preprocessed(5, 6);
        let day = tt.routes[0].trips[0].active_days.first_one().unwrap() as u32;
        let edits = vec![
            TimetableEdit::Delay {
                route: 0,
                trip: 0,
                day,
                delay: DelaySpec::Uniform(60),
            },
            TimetableEdit::Remove {
                route: 9999,
                trip: 0,
                days: vec![0],
            },
        ];
        assert!(apply_batch(&tt, &reduced, &edits).is_err());
    }
}
