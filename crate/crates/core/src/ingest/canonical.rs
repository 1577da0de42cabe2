//! Canonical timetable serialization: UTF-8 line-delimited JSON with a header
//! line, then stop, footpath, override, and trip records. Output is
//! deterministic and load(save(T)) == T for every valid timetable.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bitset::DayBitset;
use crate::error::LoadError;
use crate::model::{ChangeTimeOverride, DraftTrip, Footpath, Stop, Timetable, TimetableDraft};
use crate::preprocess::partition_routes;
use crate::time::RelTime;

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    horizon_days: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    start_date: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Record {
    Stop {
        id: String,
        name: String,
        min_change_time: u32,
    },
    Footpath {
        from: String,
        to: String,
        duration: u32,
    },
    ChangeTimeOverride {
        stop: String,
        from_sequence: Vec<String>,
        to_sequence: Vec<String>,
        seconds: u32,
    },
    Trip {
        stops: Vec<String>,
        arr: Vec<i64>,
        dep: Vec<i64>,
        active_days: String,
    },
}

pub fn save_canonical(tt: &Timetable, path: &Path) -> Result<(), LoadError> {
    let io_err = |source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    write_canonical(tt, &mut w).map_err(io_err)?;
    w.flush().map_err(io_err)
}

fn write_canonical<W: Write>(tt: &Timetable, w: &mut W) -> std::io::Result<()> {
    let header = Header {
        version: 1,
        horizon_days: tt.horizon_days,
        start_date: tt.start_date.map(|d| d.format("%Y-%m-%d").to_string()),
    };
    writeln!(w, "{}", serde_json::to_string(&header).unwrap())?;

    let stop_id = |i: u32| tt.stops[i as usize].id.clone();
    for s in &tt.stops {
        let rec = Record::Stop {
            id: s.id.clone(),
            name: s.name.clone(),
            min_change_time: s.min_change_time,
        };
        writeln!(w, "{}", serde_json::to_string(&rec).unwrap())?;
    }
    for fp in &tt.footpaths {
        let rec = Record::Footpath {
            from: stop_id(fp.from),
            to: stop_id(fp.to),
            duration: fp.duration,
        };
        writeln!(w, "{}", serde_json::to_string(&rec).unwrap())?;
    }
    for ov in &tt.overrides {
        let rec = Record::ChangeTimeOverride {
            stop: stop_id(ov.stop),
            from_sequence: ov.from_sequence.iter().map(|&s| stop_id(s)).collect(),
            to_sequence: ov.to_sequence.iter().map(|&s| stop_id(s)).collect(),
            seconds: ov.seconds,
        };
        writeln!(w, "{}", serde_json::to_string(&rec).unwrap())?;
    }
    for route in &tt.routes {
        for trip in &route.trips {
            let n = route.stops.len();
            let rec = Record::Trip {
                stops: route.stops.iter().map(|&s| stop_id(s)).collect(),
                arr: (0..n).map(|i| trip.arrival_at(i).seconds()).collect(),
                dep: (0..n).map(|i| trip.raw_departure_at(i).seconds()).collect(),
                active_days: trip.active_days.to_bit_string(),
            };
            writeln!(w, "{}", serde_json::to_string(&rec).unwrap())?;
        }
    }
    Ok(())
}

pub fn load_canonical(path: &Path) -> Result<Timetable, LoadError> {
    let io_err = |source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let reader = BufReader::new(file);
    let schema = |line: usize, message: String| LoadError::Record {
        file: path.display().to_string(),
        line,
        message,
    };

    let mut lines = reader.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| schema(1, "empty file".into()))?;
    let first = first.map_err(io_err)?;
    let header: Header =
        serde_json::from_str(&first).map_err(|e| schema(1, format!("bad header: {e}")))?;
    if header.version != 1 {
        return Err(schema(1, format!("unsupported version {}", header.version)));
    }
    if header.horizon_days == 0 {
        return Err(schema(1, "horizon_days must be positive".into()));
    }
    let start_date = match &header.start_date {
        None => None,
        Some(s) => Some(
            chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .map_err(|e| schema(1, format!("bad start_date: {e}")))?,
        ),
    };

    let horizon = header.horizon_days as usize;
    let mut stops: Vec<Stop> = Vec::new();
    let mut stop_lookup = std::collections::HashMap::new();
    let mut footpaths = Vec::new();
    let mut overrides = Vec::new();
    let mut trips = Vec::new();

    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line)
            .map_err(|e| schema(line_no, format!("bad record: {e}")))?;
        match rec {
            Record::Stop {
                id,
                name,
                min_change_time,
            } => {
                if stop_lookup.contains_key(&id) {
                    return Err(schema(line_no, format!("duplicate stop id {id:?}")));
                }
                stop_lookup.insert(id.clone(), stops.len() as u32);
                stops.push(Stop {
                    id,
                    name,
                    min_change_time,
                });
            }
            Record::Footpath { from, to, duration } => {
                let resolve = |id: &str| {
                    stop_lookup
                        .get(id)
                        .copied()
                        .ok_or_else(|| schema(line_no, format!("unknown stop id {id:?}")))
                };
                footpaths.push(Footpath {
                    from: resolve(&from)?,
                    to: resolve(&to)?,
                    duration,
                });
            }
            Record::ChangeTimeOverride {
                stop,
                from_sequence,
                to_sequence,
                seconds,
            } => {
                let resolve = |id: &str| {
                    stop_lookup
                        .get(id)
                        .copied()
                        .ok_or_else(|| schema(line_no, format!("unknown stop id {id:?}")))
                };
                overrides.push(ChangeTimeOverride {
                    stop: resolve(&stop)?,
                    from_sequence: from_sequence
                        .iter()
                        .map(|s| resolve(s))
                        .collect::<Result<_, _>>()?,
                    to_sequence: to_sequence
                        .iter()
                        .map(|s| resolve(s))
                        .collect::<Result<_, _>>()?,
                    seconds,
                });
            }
            Record::Trip {
                stops: trip_stops,
                arr,
                dep,
                active_days,
            } => {
                let resolved: Vec<u32> = trip_stops
                    .iter()
                    .map(|s| {
                        stop_lookup
                            .get(s)
                            .copied()
                            .ok_or_else(|| schema(line_no, format!("unknown stop id {s:?}")))
                    })
                    .collect::<Result<_, _>>()?;
                let bits = DayBitset::from_bit_string(&active_days, horizon)
                    .map_err(|e| schema(line_no, e.to_string()))?;
                let to_rel = |v: &[i64]| -> Result<Vec<RelTime>, LoadError> {
                    v.iter()
                        .map(|&s| RelTime::new(s).map_err(|e| schema(line_no, e.to_string())))
                        .collect()
                };
                let draft = DraftTrip::new(resolved, to_rel(&arr)?, to_rel(&dep)?, bits)
                    .map_err(|e| schema(line_no, e.to_string()))?;
                trips.push(draft);
            }
        }
    }

    let draft = TimetableDraft {
        horizon_days: header.horizon_days,
        start_date,
        stops,
        footpaths,
        overrides,
        trips,
    };
    partition_routes(draft).map_err(LoadError::Model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::synthetic::{gen_synthetic, ActivityPattern, SyntheticParams};

    #[test]
    fn empty_timetable_round_trips() {
        let tt = partition_routes(TimetableDraft {
            horizon_days: 1,
            start_date: None,
            stops: vec![],
            footpaths: vec![],
            overrides: vec![],
            trips: vec![],
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tt.jsonl");
        save_canonical(&tt, &path).unwrap();
        let back = load_canonical(&path).unwrap();
        assert_eq!(back, tt);
    }

    #[test]
    fn generated_instances_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for seed in 0..20 {
            let tt = gen_synthetic(&SyntheticParams {
                seed,
                n_stops: 12,
                n_routes: 4,
                trips_per_route: 3,
                horizon_days: 7,
                footpath_density: 0.1,
                activity: ActivityPattern::Random(0.6),
            })
            .unwrap();
            let path = dir.path().join(format!("tt{seed}.jsonl"));
            save_canonical(&tt, &path).unwrap();
            let back = load_canonical(&path).unwrap();
            assert_eq!(back, tt, "round trip failed for seed {seed}");
        }
    }

    #[test]
    fn bitset_length_mismatch_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            concat!(
                "{\"version\":1,\"horizon_days\":3}\n",
                "{\"type\":\"stop\",\"id\":\"a\",\"name\":\"A\",\"min_change_time\":0}\n",
                "{\"type\":\"stop\",\"id\":\"b\",\"name\":\"B\",\"min_change_time\":0}\n",
                "{\"type\":\"trip\",\"stops\":[\"a\",\"b\"],\"arr\":[0,60],\"dep\":[0,60],\"active_days\":\"1\"}\n",
            ),
        )
        .unwrap();
        let err = load_canonical(&path).unwrap_err();
        assert!(err.to_string().contains("does not match"), "{err}");
    }
}
