//! Loader for the GTFS subset: stops.txt, trips.txt, stop_times.txt,
//! calendar.txt / calendar_dates.txt, and optionally transfers.txt.
//!
//! GTFS trips that share a stop sequence and stop-time pattern on different
//! service days are merged into one trip with a combined day bit set; route
//! partitioning happens afterwards in preprocessing (provider line ids play
//! no role in routing).

use std::collections::HashMap;
use std::path::Path;

use chrono::{Datelike, NaiveDate};

use crate::bitset::DayBitset;
use crate::error::LoadError;
use crate::model::{DraftTrip, Footpath, Stop, Timetable, TimetableDraft};
use crate::preprocess::partition_routes;
use crate::time::{parse_hms, RelTime};

/// What the loader dropped or rewrote, for operator visibility.
#[derive(Debug, Default)]
pub struct GtfsLoadReport {
    /// (trip_id, reason) for trips rejected due to non-monotone stop times.
    pub rejected_trips: Vec<(String, String)>,
    /// Trips whose service days all fall outside the horizon.
    pub out_of_horizon_trips: usize,
    /// transfers.txt records skipped (no usable minimum transfer time).
    pub skipped_transfers: usize,
    /// GTFS trips merged into an existing identical trip.
    pub merged_trips: usize,
}

pub fn load_gtfs(
    dir: &Path,
    start_date: NaiveDate,
    horizon_days: u32,
) -> Result<(Timetable, GtfsLoadReport), LoadError> {
    let (draft, report) = load_gtfs_draft(dir, start_date, horizon_days)?;
    let tt = partition_routes(draft)?;
    Ok((tt, report))
}

/// Like [`load_gtfs`] but stops before route partitioning.
pub fn load_gtfs_draft(
    dir: &Path,
    start_date: NaiveDate,
    horizon_days: u32,
) -> Result<(TimetableDraft, GtfsLoadReport), LoadError> {
    let mut report = GtfsLoadReport::default();

    let mut stops = read_stops(dir)?;
    stops.sort_by(|a, b| a.id.cmp(&b.id));
    let stop_lookup: HashMap<String, u32> = stops
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.clone(), i as u32))
        .collect();

    let trip_services = read_trips(dir)?;
    let services = read_services(dir, start_date, horizon_days)?;
    let stop_times = read_stop_times(dir, &trip_services, &stop_lookup)?;

    // Merge identical (stop sequence, times) trips, OR-ing their day bits.
    let mut merged: HashMap<(Vec<u32>, Vec<i64>, Vec<i64>), DayBitset> = HashMap::new();
    let mut order: Vec<(Vec<u32>, Vec<i64>, Vec<i64>)> = Vec::new();
    let mut trip_ids: Vec<String> = stop_times.keys().cloned().collect();
    trip_ids.sort();
    for trip_id in trip_ids {
        let rows = &stop_times[&trip_id];
        let service_id = &trip_services[&trip_id];
        let Some(days) = services.get(service_id) else {
            report.out_of_horizon_trips += 1;
            continue;
        };
        if !days.any() {
            report.out_of_horizon_trips += 1;
            continue;
        }
        match validate_rows(rows) {
            Err(reason) => report.rejected_trips.push((trip_id, reason)),
            Ok(()) => {
                let key = (
                    rows.iter().map(|r| r.stop).collect::<Vec<_>>(),
                    rows.iter().map(|r| r.arr.seconds()).collect::<Vec<_>>(),
                    rows.iter().map(|r| r.dep.seconds()).collect::<Vec<_>>(),
                );
                match merged.get_mut(&key) {
                    Some(bits) => {
                        bits.or_with(days);
                        report.merged_trips += 1;
                    }
                    None => {
                        merged.insert(key.clone(), days.clone());
                        order.push(key);
                    }
                }
            }
        }
    }

    let mut trips = Vec::with_capacity(order.len());
    for key in order {
        let bits = merged.remove(&key).unwrap();
        let (stop_seq, arr, dep) = key;
        let arr = arr.into_iter().map(RelTime::from_seconds_unchecked).collect();
        let dep = dep.into_iter().map(RelTime::from_seconds_unchecked).collect();
        trips.push(DraftTrip::new(stop_seq, arr, dep, bits)?);
    }

    let (footpaths, change_times) = read_transfers(dir, &stop_lookup, &mut report)?;
    for (stop, secs) in change_times {
        stops[stop as usize].min_change_time = secs;
    }

    Ok((
        TimetableDraft {
            horizon_days,
            start_date: Some(start_date),
            stops,
            footpaths,
            overrides: vec![],
            trips,
        },
        report,
    ))
}

struct StopTimeRow {
    seq: u32,
    stop: u32,
    arr: RelTime,
    dep: RelTime,
}

fn validate_rows(rows: &[StopTimeRow]) -> Result<(), String> {
    if rows.len() < 2 {
        return Err("fewer than 2 stop_times".into());
    }
    for (i, w) in rows.windows(2).enumerate() {
        if w[0].dep > w[1].arr {
            return Err(format!("departure after next arrival at sequence {}", w[0].seq));
        }
        let _ = i;
    }
    for (i, r) in rows.iter().enumerate() {
        if i != 0 && i != rows.len() - 1 && r.arr > r.dep {
            return Err(format!("arrival after departure at sequence {}", r.seq));
        }
    }
    Ok(())
}

fn open_csv(dir: &Path, name: &str, required: bool) -> Result<Option<csv::Reader<std::fs::File>>, LoadError> {
    let path = dir.join(name);
    if !path.exists() {
        if required {
            return Err(LoadError::MissingFile(name.to_string()));
        }
        return Ok(None);
    }
    let file = std::fs::File::open(&path).map_err(|source| LoadError::Io { path, source })?;
    Ok(Some(
        csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(file),
    ))
}

fn field<'a>(
    headers: &csv::StringRecord,
    record: &'a csv::StringRecord,
    name: &str,
) -> Option<&'a str> {
    headers
        .iter()
        .position(|h| h.trim_start_matches('\u{feff}') == name)
        .and_then(|i| record.get(i))
}

fn record_err(file: &str, line: usize, message: impl Into<String>) -> LoadError {
    LoadError::Record {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

fn read_stops(dir: &Path) -> Result<Vec<Stop>, LoadError> {
    let mut reader = open_csv(dir, "stops.txt", true)?.unwrap();
    let headers = reader.headers().map_err(|e| record_err("stops.txt", 1, e.to_string()))?.clone();
    let mut stops = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| record_err("stops.txt", line, e.to_string()))?;
        let id = field(&headers, &rec, "stop_id")
            .filter(|s| !s.is_empty())
            .ok_or_else(|| record_err("stops.txt", line, "missing stop_id"))?;
        let name = field(&headers, &rec, "stop_name").unwrap_or(id);
        stops.push(Stop {
            id: id.to_string(),
            name: name.to_string(),
            min_change_time: 0,
        });
    }
    Ok(stops)
}

fn read_trips(dir: &Path) -> Result<HashMap<String, String>, LoadError> {
    let mut reader = open_csv(dir, "trips.txt", true)?.unwrap();
    let headers = reader.headers().map_err(|e| record_err("trips.txt", 1, e.to_string()))?.clone();
    let mut map = HashMap::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| record_err("trips.txt", line, e.to_string()))?;
        let trip_id = field(&headers, &rec, "trip_id")
            .filter(|s| !s.is_empty())
            .ok_or_else(|| record_err("trips.txt", line, "missing trip_id"))?;
        let service_id = field(&headers, &rec, "service_id")
            .filter(|s| !s.is_empty())
            .ok_or_else(|| record_err("trips.txt", line, "missing service_id"))?;
        map.insert(trip_id.to_string(), service_id.to_string());
    }
    Ok(map)
}

fn parse_gtfs_date(text: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(text, "%Y%m%d").ok()
}

fn read_services(
    dir: &Path,
    start_date: NaiveDate,
    horizon_days: u32,
) -> Result<HashMap<String, DayBitset>, LoadError> {
    let horizon = horizon_days as usize;
    let mut services: HashMap<String, DayBitset> = HashMap::new();

    let calendar = open_csv(dir, "calendar.txt", false)?;
    let dates = open_csv(dir, "calendar_dates.txt", false)?;
    if calendar.is_none() && dates.is_none() {
        return Err(LoadError::MissingFile(
            "calendar.txt or calendar_dates.txt".to_string(),
        ));
    }

    if let Some(mut reader) = calendar {
        let headers = reader
            .headers()
            .map_err(|e| record_err("calendar.txt", 1, e.to_string()))?
            .clone();
        let weekday_cols = [
            "monday",
            "tuesday",
            "wednesday",
            "thursday",
            "friday",
            "saturday",
            "sunday",
        ];
        for (i, rec) in reader.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| record_err("calendar.txt", line, e.to_string()))?;
            let service_id = field(&headers, &rec, "service_id")
                .filter(|s| !s.is_empty())
                .ok_or_else(|| record_err("calendar.txt", line, "missing service_id"))?;
            let from = field(&headers, &rec, "start_date")
                .and_then(parse_gtfs_date)
                .ok_or_else(|| record_err("calendar.txt", line, "bad start_date"))?;
            let until = field(&headers, &rec, "end_date")
                .and_then(parse_gtfs_date)
                .ok_or_else(|| record_err("calendar.txt", line, "bad end_date"))?;
            let mut weekly = [false; 7];
            for (w, col) in weekday_cols.iter().enumerate() {
                weekly[w] = field(&headers, &rec, col) == Some("1");
            }
            let bits = services
                .entry(service_id.to_string())
                .or_insert_with(|| DayBitset::new(horizon));
            for d in 0..horizon {
                let date = start_date + chrono::Days::new(d as u64);
                if date >= from && date <= until {
                    let w = date.weekday().num_days_from_monday() as usize;
                    if weekly[w] {
                        bits.set(d).unwrap();
                    }
                }
            }
        }
    }

    if let Some(mut reader) = dates {
        let headers = reader
            .headers()
            .map_err(|e| record_err("calendar_dates.txt", 1, e.to_string()))?
            .clone();
        for (i, rec) in reader.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| record_err("calendar_dates.txt", line, e.to_string()))?;
            let service_id = field(&headers, &rec, "service_id")
                .filter(|s| !s.is_empty())
                .ok_or_else(|| record_err("calendar_dates.txt", line, "missing service_id"))?;
            let date = field(&headers, &rec, "date")
                .and_then(parse_gtfs_date)
                .ok_or_else(|| record_err("calendar_dates.txt", line, "bad date"))?;
            let exception = field(&headers, &rec, "exception_type")
                .ok_or_else(|| record_err("calendar_dates.txt", line, "missing exception_type"))?;
            let day = (date - start_date).num_days();
            if day < 0 || day >= horizon as i64 {
                continue;
            }
            let bits = services
                .entry(service_id.to_string())
                .or_insert_with(|| DayBitset::new(horizon));
            match exception {
                "1" => bits.set(day as usize).unwrap(),
                "2" => bits.clear(day as usize).unwrap(),
                other => {
                    return Err(record_err(
                        "calendar_dates.txt",
                        line,
                        format!("bad exception_type {other:?}"),
                    ))
                }
            }
        }
    }

    Ok(services)
}

fn read_stop_times(
    dir: &Path,
    trip_services: &HashMap<String, String>,
    stop_lookup: &HashMap<String, u32>,
) -> Result<HashMap<String, Vec<StopTimeRow>>, LoadError> {
    let mut reader = open_csv(dir, "stop_times.txt", true)?.unwrap();
    let headers = reader
        .headers()
        .map_err(|e| record_err("stop_times.txt", 1, e.to_string()))?
        .clone();
    let mut by_trip: HashMap<String, Vec<StopTimeRow>> = HashMap::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| record_err("stop_times.txt", line, e.to_string()))?;
        let trip_id = field(&headers, &rec, "trip_id")
            .filter(|s| !s.is_empty())
            .ok_or_else(|| record_err("stop_times.txt", line, "missing trip_id"))?;
        if !trip_services.contains_key(trip_id) {
            return Err(record_err(
                "stop_times.txt",
                line,
                format!("unknown trip_id {trip_id:?}"),
            ));
        }
        let stop_id = field(&headers, &rec, "stop_id")
            .filter(|s| !s.is_empty())
            .ok_or_else(|| record_err("stop_times.txt", line, "missing stop_id"))?;
        let Some(&stop) = stop_lookup.get(stop_id) else {
            return Err(record_err(
                "stop_times.txt",
                line,
                format!("unknown stop_id {stop_id:?}"),
            ));
        };
        let seq: u32 = field(&headers, &rec, "stop_sequence")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| record_err("stop_times.txt", line, "bad stop_sequence"))?;
        let arr_text = field(&headers, &rec, "arrival_time").unwrap_or("");
        let dep_text = field(&headers, &rec, "departure_time").unwrap_or("");
        let (arr_text, dep_text) = match (arr_text.is_empty(), dep_text.is_empty()) {
            (false, false) => (arr_text, dep_text),
            (false, true) => (arr_text, arr_text),
            (true, false) => (dep_text, dep_text),
            (true, true) => {
                return Err(record_err(
                    "stop_times.txt",
                    line,
                    "both arrival_time and departure_time missing",
                ))
            }
        };
        let arr = parse_hms(arr_text)
            .map_err(|e| record_err("stop_times.txt", line, e.to_string()))?;
        let dep = parse_hms(dep_text)
            .map_err(|e| record_err("stop_times.txt", line, e.to_string()))?;
        by_trip
            .entry(trip_id.to_string())
            .or_default()
            .push(StopTimeRow { seq, stop, arr, dep });
    }
    for rows in by_trip.values_mut() {
        rows.sort_by_key(|r| r.seq);
    }
    Ok(by_trip)
}

type ChangeTimes = Vec<(u32, u32)>;

fn read_transfers(
    dir: &Path,
    stop_lookup: &HashMap<String, u32>,
    report: &mut GtfsLoadReport,
) -> Result<(Vec<Footpath>, ChangeTimes), LoadError> {
    let Some(mut reader) = open_csv(dir, "transfers.txt", false)? else {
        return Ok((vec![], vec![]));
    };
    let headers = reader
        .headers()
        .map_err(|e| record_err("transfers.txt", 1, e.to_string()))?
        .clone();
    let mut footpaths: HashMap<(u32, u32), u32> = HashMap::new();
    let mut change_times = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| record_err("transfers.txt", line, e.to_string()))?;
        let resolve = |name: &str| -> Result<u32, LoadError> {
            let id = field(&headers, &rec, name)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| record_err("transfers.txt", line, format!("missing {name}")))?;
            stop_lookup.get(id).copied().ok_or_else(|| {
                record_err("transfers.txt", line, format!("unknown stop_id {id:?}"))
            })
        };
        let from = resolve("from_stop_id")?;
        let to = resolve("to_stop_id")?;
        let transfer_type = field(&headers, &rec, "transfer_type").unwrap_or("0");
        let min_time: Option<u32> = field(&headers, &rec, "min_transfer_time")
            .filter(|s| !s.is_empty())
            .and_then(|s| s.parse().ok());
        match transfer_type {
            "2" if from == to => {
                change_times.push((from, min_time.unwrap_or(0)));
            }
            "0" | "2" => {
                match min_time.filter(|&t| t > 0) {
                    Some(t) => {
                        let entry = footpaths.entry((from, to)).or_insert(t);
                        *entry = (*entry).min(t);
                    }
                    None => report.skipped_transfers += 1,
                }
            }
            _ => report.skipped_transfers += 1,
        }
    }
    let mut fps: Vec<Footpath> = footpaths
        .into_iter()
        .map(|((from, to), duration)| Footpath { from, to, duration })
        .collect();
    fps.sort_by_key(|f| (f.from, f.to));
    Ok((fps, change_times))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write_feed(dir: &Path, files: &[(&str, &str)]) {
        for (name, content) in files {
            fs::write(dir.join(name), content).unwrap();
        }
    }

    fn monday() -> NaiveDate {
        // 2026-08-03 is a Monday
        NaiveDate::from_ymd_opt(2026, 8, 3).unwrap()
    }

    const BASIC_STOPS: &str = "stop_id,stop_name\nA,Alpha\nB,Beta\n";
    const BASIC_TRIPS: &str = "route_id,service_id,trip_id\nr1,wk,t1\n";
    const BASIC_TIMES: &str = "trip_id,arrival_time,departure_time,stop_id,stop_sequence\n\
t1,08:00:00,08:00:00,A,1\nt1,08:30:00,08:30:00,B,2\n";

    #[test]
    fn weekday_calendar_maps_to_bits() {
        let dir = tempfile::tempdir().unwrap();
        write_feed(
            dir.path(),
            &[
                ("stops.txt", BASIC_STOPS),
                ("trips.txt", BASIC_TRIPS),
                ("stop_times.txt", BASIC_TIMES),
                (
                    "calendar.txt",
                    "service_id,monday,tuesday,wednesday,thursday,friday,saturday,sunday,start_date,end_date\n\
wk,1,1,1,1,1,0,0,20260803,20261231\n",
                ),
            ],
        );
        let (tt, report) = load_gtfs(dir.path(), monday(), 7).unwrap();
        assert!(report.rejected_trips.is_empty());
        assert_eq!(tt.total_trips(), 1);
        assert_eq!(tt.routes[0].trips[0].active_days.to_bit_string(), "1111100");
    }

    #[test]
    fn calendar_dates_removes_a_day() {
        let dir = tempfile::tempdir().unwrap();
        write_feed(
            dir.path(),
            &[
                ("stops.txt", BASIC_STOPS),
                ("trips.txt", BASIC_TRIPS),
                ("stop_times.txt", BASIC_TIMES),
                (
                    "calendar.txt",
                    "service_id,monday,tuesday,wednesday,thursday,friday,saturday,sunday,start_date,end_date\n\
wk,1,1,1,1,1,0,0,20260803,20261231\n",
                ),
                (
                    "calendar_dates.txt",
                    "service_id,date,exception_type\nwk,20260805,2\n",
                ),
            ],
        );
        let (tt, _) = load_gtfs(dir.path(), monday(), 7).unwrap();
        assert_eq!(tt.routes[0].trips[0].active_days.to_bit_string(), "1101100");
    }

    #[test]
    fn identical_trips_merge_into_one_bitset() {
        let dir = tempfile::tempdir().unwrap();
        write_feed(
            dir.path(),
            &[
                ("stops.txt", BASIC_STOPS),
                (
                    "trips.txt",
                    "route_id,service_id,trip_id\nr1,d0,t1\nr1,d3,t2\n",
                ),
                (
                    "stop_times.txt",
                    "trip_id,arrival_time,departure_time,stop_id,stop_sequence\n\
t1,08:00:00,08:00:00,A,1\nt1,08:30:00,08:30:00,B,2\n\
t2,08:00:00,08:00:00,A,1\nt2,08:30:00,08:30:00,B,2\n",
                ),
                (
                    "calendar_dates.txt",
                    "service_id,date,exception_type\nd0,20260803,1\nd3,20260806,1\n",
                ),
            ],
        );
        let (tt, report) = load_gtfs(dir.path(), monday(), 7).unwrap();
        assert_eq!(report.merged_trips, 1);
        assert_eq!(tt.total_trips(), 1);
        assert_eq!(tt.routes[0].trips[0].active_days.to_bit_string(), "1001000");
    }

    #[test]
    fn missing_required_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        write_feed(dir.path(), &[("stops.txt", BASIC_STOPS)]);
        let err = load_gtfs(dir.path(), monday(), 7).unwrap_err();
        assert!(err.to_string().contains("trips.txt"), "{err}");
    }

    #[test]
    fn unknown_stop_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        write_feed(
            dir.path(),
            &[
                ("stops.txt", BASIC_STOPS),
                ("trips.txt", BASIC_TRIPS),
                (
                    "stop_times.txt",
                    "trip_id,arrival_time,departure_time,stop_id,stop_sequence\n\
t1,08:00:00,08:00:00,A,1\nt1,08:30:00,08:30:00,NOPE,2\n",
                ),
                (
                    "calendar_dates.txt",
                    "service_id,date,exception_type\nwk,20260803,1\n",
                ),
            ],
        );
        let err = load_gtfs(dir.path(), monday(), 7).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("stop_times.txt:3"), "{text}");
    }

    #[test]
    fn non_monotone_trip_rejected_and_reported() {
        let dir = tempfile::tempdir().unwrap();
        write_feed(
            dir.path(),
            &[
                ("stops.txt", BASIC_STOPS),
                ("trips.txt", BASIC_TRIPS),
                (
                    "stop_times.txt",
                    "trip_id,arrival_time,departure_time,stop_id,stop_sequence\n\
t1,08:00:00,08:00:00,A,1\nt1,07:30:00,07:30:00,B,2\n",
                ),
                (
                    "calendar_dates.txt",
                    "service_id,date,exception_type\nwk,20260803,1\n",
                ),
            ],
        );
        let (tt, report) = load_gtfs(dir.path(), monday(), 7).unwrap();
        assert_eq!(tt.total_trips(), 0);
        assert_eq!(report.rejected_trips.len(), 1);
    }

    #[test]
    fn transfers_become_overrides_and_footpaths() {
        let dir = tempfile::tempdir().unwrap();
        write_feed(
            dir.path(),
            &[
                ("stops.txt", BASIC_STOPS),
                ("trips.txt", BASIC_TRIPS),
                ("stop_times.txt", BASIC_TIMES),
                (
                    "calendar_dates.txt",
                    "service_id,date,exception_type\nwk,20260803,1\n",
                ),
                (
                    "transfers.txt",
                    "from_stop_id,to_stop_id,transfer_type,min_transfer_time\n\
A,A,2,120\nA,B,2,300\nB,A,0,\n",
                ),
            ],
        );
        let (tt, report) = load_gtfs(dir.path(), monday(), 7).unwrap();
        let a = tt.stop_by_id("A").unwrap();
        let b = tt.stop_by_id("B").unwrap();
        assert_eq!(tt.stops[a as usize].min_change_time, 120);
        assert_eq!(tt.footpath_duration(a, b), Some(300));
        assert_eq!(tt.footpath_duration(b, a), None);
        assert_eq!(report.skipped_transfers, 1);
    }
}
