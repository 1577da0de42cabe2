//! Seeded synthetic timetable instances for tests and desk-scale benchmarks.
//!
//! Generation is fully deterministic for a fixed seed. Produced route groups
//! satisfy the no-overtaking order by construction (shifted copies of one
//! travel profile), and instances deliberately include midnight-crossing
//! trips and repeated-stop circular routes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bitset::DayBitset;
use crate::error::ModelError;
use crate::model::{DraftTrip, Footpath, Stop, Timetable, TimetableDraft};
use crate::preprocess::partition_routes;
use crate::time::RelTime;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ActivityPattern {
    /// All trips run every day.
    Daily,
    /// Trips run on days 0..4 of each week (day 0 is a Monday).
    Weekday,
    /// Each day is active independently with the given probability; at least
    /// one day is forced.
    Random(f64),
}

#[derive(Clone, Debug)]
pub struct SyntheticParams {
    pub seed: u64,
    pub n_stops: u32,
    pub n_routes: u32,
    pub trips_per_route: u32,
    pub horizon_days: u32,
    pub footpath_density: f64,
    pub activity: ActivityPattern,
}

pub fn gen_synthetic(params: &SyntheticParams) -> Result<Timetable, ModelError> {
    if params.n_stops == 0 || params.n_routes == 0 || params.trips_per_route == 0 {
        return Err(ModelError::TooFewStops(0));
    }
    if params.horizon_days == 0 {
        return Err(ModelError::EmptyHorizon);
    }
    if !(0.0..=1.0).contains(&params.footpath_density) {
        return Err(ModelError::NonPositiveFootpath);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let horizon = params.horizon_days as usize;

    let stops: Vec<Stop> = (0..params.n_stops)
        .map(|i| Stop {
            id: format!("S{i:03}"),
            name: format!("Stop {i}"),
            min_change_time: *[0u32, 0, 60, 120].get(rng.gen_range(0..4)).unwrap(),
        })
        .collect();

    let mut footpaths = Vec::new();
    for from in 0..params.n_stops {
        for to in 0..params.n_stops {
            if from != to && rng.gen_bool(params.footpath_density) {
                footpaths.push(Footpath {
                    from,
                    to,
                    duration: rng.gen_range(1..=10) * 60,
                });
            }
        }
    }

    let mut trips = Vec::new();
    for route_no in 0..params.n_routes {
        let path = route_path(&mut rng, params, route_no);
        let n = path.len();

        // one travel profile per route; trips are shifted copies of it
        let mut ride: Vec<(i64, i64)> = Vec::with_capacity(n);
        let mut t = 0i64;
        for i in 0..n {
            if i > 0 {
                t += rng.gen_range(3..=30) * 60;
            }
            let arr = t;
            if i > 0 && i < n - 1 {
                t += rng.gen_range(0..=2) * 60;
            }
            ride.push((arr, t));
        }

        // force a late start on every third route so some trips cross midnight
        let first_start = if route_no % 3 == 2 && n >= 2 {
            rng.gen_range(22 * 3600..25 * 3600)
        } else {
            rng.gen_range(4 * 3600..21 * 3600)
        };
        let mut starts = Vec::with_capacity(params.trips_per_route as usize);
        let mut start = first_start;
        for _ in 0..params.trips_per_route {
            starts.push(start);
            start += rng.gen_range(15..=120) * 60;
        }
        // keep a route's trips within one day of each other at every index
        let spread_cap = first_start + crate::time::SECONDS_PER_DAY - 1;
        for s in &mut starts {
            *s = (*s).min(spread_cap);
        }

        for &s in &starts {
            let arr: Vec<RelTime> = ride
                .iter()
                .map(|&(a, _)| RelTime::new(s + a).unwrap())
                .collect();
            let dep: Vec<RelTime> = ride
                .iter()
                .map(|&(_, d)| RelTime::new(s + d).unwrap())
                .collect();
            let active = activity_bits(&mut rng, params.activity, horizon)?;
            trips.push(DraftTrip::new(path.clone(), arr, dep, active)?);
        }
    }

    partition_routes(TimetableDraft {
        horizon_days: params.horizon_days,
        start_date: None,
        stops,
        footpaths,
        overrides: vec![],
        trips,
    })
}

fn route_path(rng: &mut ChaCha8Rng, params: &SyntheticParams, route_no: u32) -> Vec<u32> {
    let n_stops = params.n_stops;
    if n_stops == 1 {
        return vec![0, 0];
    }
    let max_len = 6.min(n_stops + 1).max(2);
    let len = rng.gen_range(2..=max_len) as usize;
    let mut path = Vec::with_capacity(len);
    path.push(rng.gen_range(0..n_stops));
    while path.len() < len {
        let prev = *path.last().unwrap();
        let mut next = rng.gen_range(0..n_stops);
        if next == prev {
            next = (next + 1) % n_stops;
        }
        path.push(next);
    }
    // every fourth route is circular: it revisits its first stop at the end
    if route_no % 4 == 3 && path.len() >= 3 && path[0] != *path.last().unwrap() {
        let first = path[0];
        path.push(first);
    }
    path
}

fn activity_bits(
    rng: &mut ChaCha8Rng,
    pattern: ActivityPattern,
    horizon: usize,
) -> Result<DayBitset, ModelError> {
    let bits = match pattern {
        ActivityPattern::Daily => DayBitset::full(horizon),
        ActivityPattern::Weekday => {
            DayBitset::from_days(horizon, (0..horizon).filter(|d| d % 7 < 5))?
        }
        ActivityPattern::Random(p) => {
            let mut b = DayBitset::new(horizon);
            for d in 0..horizon {
                if rng.gen_bool(p.clamp(0.0, 1.0)) {
                    b.set(d)?;
                }
            }
            if !b.any() {
                b.set(rng.gen_range(0..horizon))?;
            }
            b
        }
    };
    Ok(bits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_instance() {
        let tt = gen_synthetic(&SyntheticParams {
            seed: 1,
            n_stops: 2,
            n_routes: 1,
            trips_per_route: 1,
            horizon_days: 1,
            footpath_density: 0.0,
            activity: ActivityPattern::Daily,
        })
        .unwrap();
        assert_eq!(tt.total_trips(), 1);
        assert_eq!(
            tt.routes[0].trips[0].active_days.to_bit_string(),
            "1"
        );
    }

    #[test]
    fn same_seed_same_timetable() {
        let params = SyntheticParams {
            seed: 99,
            n_stops: 20,
            n_routes: 8,
            trips_per_route: 4,
            horizon_days: 14,
            footpath_density: 0.15,
            activity: ActivityPattern::Random(0.5),
        };
        let a = gen_synthetic(&params).unwrap();
        let b = gen_synthetic(&params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn routes_satisfy_total_order() {
        let tt = gen_synthetic(&SyntheticParams {
            seed: 7,
            n_stops: 30,
            n_routes: 10,
            trips_per_route: 5,
            horizon_days: 14,
            footpath_density: 0.1,
            activity: ActivityPattern::Weekday,
        })
        .unwrap();
        tt.check_invariants().unwrap();
        assert_eq!(tt.total_trips(), 50);
    }

    #[test]
    fn includes_edge_case_shapes() {
        let tt = gen_synthetic(&SyntheticParams {
            seed: 11,
            n_stops: 15,
            n_routes: 8,
            trips_per_route: 3,
            horizon_days: 7,
            footpath_density: 0.1,
            activity: ActivityPattern::Daily,
        })
        .unwrap();
        let has_repeat = tt.routes.iter().any(|r| {
            let mut seen = std::collections::HashSet::new();
            r.stops.iter().any(|s| !seen.insert(*s))
        });
        let crosses_midnight = tt.routes.iter().flat_map(|r| &r.trips).any(|t| {
            (0..t.stop_count()).any(|i| t.arrival_at(i).seconds() >= crate::time::SECONDS_PER_DAY)
        });
        assert!(has_repeat, "expected at least one circular route");
        assert!(crosses_midnight, "expected at least one midnight-crossing trip");
    }
}
