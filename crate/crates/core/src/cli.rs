//! Command-line front end: preprocess, query, profile, bench, update-sim,
//! generate. Exit codes: 0 ok, 1 usage, 2 data error, 3 verification failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bench::{
    self, flat_window_for_day, random_delay_edits, run_profile_bench, summarize, BenchRecord,
    EngineKind, UpdateRecord,
};
use crate::extract::{extract_day_view, flatten_window, DEFAULT_VIEW_HORIZON};
use crate::flat::{flat_earliest_arrival_query, flat_profile_query};
use crate::ingest::{gen_synthetic, load_canonical, load_gtfs, save_canonical, ActivityPattern, SyntheticParams};
use crate::model::{DraftTrip, StopIdx, Timetable};
use crate::preprocess::{compute_transfers_with, reduce_transfers, TransferSet, DEFAULT_MAX_DAY_SHIFT};
use crate::query::{earliest_arrival_query, profile_query, Journey, Leg, QueryResult};
use crate::time::{format_hms, parse_hms, AbsTime, SECONDS_PER_DAY};
use crate::update::{apply_batch, DelaySpec, TimetableEdit};

const EXIT_OK: i32 = 0;
const EXIT_USAGE: i32 = 1;
const EXIT_DATA: i32 = 2;
const EXIT_VERIFY: i32 = 3;

#[derive(Parser)]
#[command(name = "tripspan", version, about = "Trip-based transit routing over long timetable horizons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic timetable in canonical format
    Generate(GenerateArgs),
    /// Load a feed, compute and reduce transfers, write artifacts
    Preprocess(PreprocessArgs),
    /// Earliest-arrival query from a departure time
    Query(QueryArgs),
    /// Full-day profile query
    Profile(ProfileArgs),
    /// Seeded random profile-query benchmark with CSV output
    Bench(BenchArgs),
    /// Apply an edit stream (or random delays) with incremental repair
    UpdateSim(UpdateSimArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 30)]
    stops: u32,
    #[arg(long, default_value_t = 10)]
    routes: u32,
    #[arg(long = "trips-per-route", default_value_t = 5)]
    trips_per_route: u32,
    #[arg(long, default_value_t = 14)]
    days: u32,
    #[arg(long = "footpath-density", default_value_t = 0.1)]
    footpath_density: f64,
    /// daily, weekday, or random:<p>
    #[arg(long, default_value = "weekday")]
    activity: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PreprocessArgs {
    /// Canonical .jsonl file or a GTFS directory
    #[arg(long)]
    input: PathBuf,
    /// Horizon start date (YYYY-MM-DD), required for GTFS input
    #[arg(long = "start-date")]
    start_date: Option<String>,
    /// Horizon length in days, required for GTFS input
    #[arg(long)]
    days: Option<u32>,
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
    #[arg(long = "max-day-shift", default_value_t = DEFAULT_MAX_DAY_SHIFT)]
    max_day_shift: u8,
    /// Also write the unreduced transfer set
    #[arg(long = "keep-full", default_value_t = false)]
    keep_full: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Full,
    Flat,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchEngineArg {
    Full,
    Flat,
    Both,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    artifacts: PathBuf,
    #[arg(long)]
    from: String,
    #[arg(long)]
    to: String,
    /// Query day as a horizon day index
    #[arg(long)]
    day: Option<u32>,
    /// Query date (YYYY-MM-DD); needs a feed with a start date
    #[arg(long)]
    date: Option<String>,
    /// Departure time of day, H:MM:SS
    #[arg(long, default_value = "00:00:00")]
    time: String,
    #[arg(long, value_enum, default_value_t = EngineArg::Full)]
    engine: EngineArg,
    /// Day offsets past the query day included in the search
    #[arg(long, default_value_t = DEFAULT_VIEW_HORIZON)]
    horizon: u32,
    #[arg(long, default_value_t = false)]
    json: bool,
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long)]
    artifacts: PathBuf,
    #[arg(long)]
    from: String,
    #[arg(long)]
    to: String,
    #[arg(long)]
    day: Option<u32>,
    #[arg(long)]
    date: Option<String>,
    #[arg(long, value_enum, default_value_t = EngineArg::Full)]
    engine: EngineArg,
    #[arg(long, default_value_t = DEFAULT_VIEW_HORIZON)]
    horizon: u32,
    #[arg(long, default_value_t = false)]
    json: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    artifacts: PathBuf,
    #[arg(short = 'n', long = "queries", default_value_t = 100)]
    n: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = BenchEngineArg::Both)]
    engine: BenchEngineArg,
    #[arg(long, default_value_t = DEFAULT_VIEW_HORIZON)]
    horizon: u32,
    #[arg(long = "cache-capacity", default_value_t = 8)]
    cache_capacity: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct UpdateSimArgs {
    #[arg(long)]
    artifacts: PathBuf,
    /// JSON-lines edit stream; one edit per line
    #[arg(long)]
    edits: Option<PathBuf>,
    /// Generate this many random delay edits instead
    #[arg(long)]
    random: Option<u32>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Apply edits in batches of this size
    #[arg(long, default_value_t = 1)]
    batch: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Re-preprocess from scratch afterwards and compare byte-for-byte
    #[arg(long, default_value_t = false)]
    verify: bool,
    /// Write the updated artifacts back
    #[arg(long, default_value_t = false)]
    save: bool,
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version through the error path with status 0
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    init_threads();
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Preprocess(args) => cmd_preprocess(args),
        Command::Query(args) => cmd_query(args),
        Command::Profile(args) => cmd_profile(args),
        Command::Bench(args) => cmd_bench(args),
        Command::UpdateSim(args) => cmd_update_sim(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

fn init_threads() {
    if let Ok(text) = std::env::var("TRIPSPAN_THREADS") {
        if let Ok(n) = text.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

type CmdResult = Result<i32, Box<dyn std::error::Error>>;

fn cmd_generate(args: GenerateArgs) -> CmdResult {
    let activity = parse_activity(&args.activity)?;
    let tt = gen_synthetic(&SyntheticParams {
        seed: args.seed,
        n_stops: args.stops,
        n_routes: args.routes,
        trips_per_route: args.trips_per_route,
        horizon_days: args.days,
        footpath_density: args.footpath_density,
        activity,
    })?;
    save_canonical(&tt, &args.out)?;
    println!(
        "wrote {} ({} stops, {} routes, {} trips, {} trip-day instances, {} days)",
        args.out.display(),
        tt.stops.len(),
        tt.routes.len(),
        tt.total_trips(),
        tt.total_trip_days(),
        tt.horizon_days
    );
    Ok(EXIT_OK)
}

fn parse_activity(text: &str) -> Result<ActivityPattern, String> {
    match text {
        "daily" => Ok(ActivityPattern::Daily),
        "weekday" => Ok(ActivityPattern::Weekday),
        other => match other.strip_prefix("random:") {
            Some(p) => p
                .parse::<f64>()
                .map(ActivityPattern::Random)
                .map_err(|e| format!("bad activity probability: {e}")),
            None => Err(format!("unknown activity pattern {other:?}")),
        },
    }
}

fn load_input(args: &PreprocessArgs) -> Result<Timetable, Box<dyn std::error::Error>> {
    if args.input.is_dir() {
        let start = args
            .start_date
            .as_deref()
            .ok_or("GTFS input requires --start-date")?;
        let days = args.days.ok_or("GTFS input requires --days")?;
        let start = chrono::NaiveDate::parse_from_str(start, "%Y-%m-%d")?;
        let (tt, report) = load_gtfs(&args.input, start, days)?;
        for (trip_id, reason) in &report.rejected_trips {
            eprintln!("rejected trip {trip_id}: {reason}");
        }
        if report.out_of_horizon_trips > 0 {
            eprintln!("dropped {} trips outside the horizon", report.out_of_horizon_trips);
        }
        Ok(tt)
    } else {
        Ok(load_canonical(&args.input)?)
    }
}

fn cmd_preprocess(args: PreprocessArgs) -> CmdResult {
    let tt = load_input(&args)?;
    fs::create_dir_all(&args.out_dir)?;

    let started = Instant::now();
    let full = compute_transfers_with(&tt, args.max_day_shift);
    let compute_time = started.elapsed();
    let started = Instant::now();
    let reduced = reduce_transfers(&tt, &full);
    let reduce_time = started.elapsed();

    save_canonical(&tt, &args.out_dir.join("timetable.jsonl"))?;
    fs::write(args.out_dir.join("transfers.bin"), reduced.to_bytes())?;
    if args.keep_full {
        fs::write(args.out_dir.join("transfers.full.bin"), full.to_bytes())?;
    }

    let total = full.transfer_count();
    let kept = reduced.transfer_count();
    let ratio = if total == 0 {
        0.0
    } else {
        kept as f64 / total as f64 * 100.0
    };
    println!("stops:             {}", tt.stops.len());
    println!("routes:            {}", tt.routes.len());
    println!("trips:             {}", tt.total_trips());
    println!("trip-day instances:{}", tt.total_trip_days());
    println!("total transfers:   {total}");
    println!("reduced transfers: {kept}");
    println!("ratio:             {ratio:.2}%");
    println!("computation time:  {:.3}s", compute_time.as_secs_f64());
    println!("reduction time:    {:.3}s", reduce_time.as_secs_f64());
    Ok(EXIT_OK)
}

fn load_artifacts(dir: &Path) -> Result<(Timetable, TransferSet), Box<dyn std::error::Error>> {
    let tt = load_canonical(&dir.join("timetable.jsonl"))?;
    let bytes = fs::read(dir.join("transfers.bin"))?;
    let transfers = TransferSet::from_bytes(&bytes)?;
    if !transfers.matches_shape(&tt) {
        return Err("transfer artifact does not match the timetable".into());
    }
    Ok((tt, transfers))
}

fn resolve_stop(tt: &Timetable, id: &str) -> Result<StopIdx, Box<dyn std::error::Error>> {
    tt.stop_by_id(id)
        .ok_or_else(|| format!("unknown stop id {id:?}").into())
}

fn resolve_day(
    tt: &Timetable,
    day: Option<u32>,
    date: Option<&str>,
) -> Result<u32, Box<dyn std::error::Error>> {
    let day = match (day, date) {
        (Some(d), None) => d,
        (None, Some(text)) => {
            let date = chrono::NaiveDate::parse_from_str(text, "%Y-%m-%d")?;
            let start = tt
                .start_date
                .ok_or("feed has no start date; use --day instead of --date")?;
            let delta = (date - start).num_days();
            if delta < 0 {
                return Err(format!("date {text} precedes the horizon start").into());
            }
            delta as u32
        }
        _ => return Err("exactly one of --day or --date is required".into()),
    };
    if day >= tt.horizon_days {
        return Err(format!(
            "day {day} outside horizon of {} days",
            tt.horizon_days
        )
        .into());
    }
    Ok(day)
}

fn time_string(tt: &Timetable, t: AbsTime) -> String {
    let day = t.day();
    let hms = format_hms(t.time_of_day());
    match tt.start_date {
        Some(start) => {
            let date = start + chrono::Days::new(day as u64);
            format!("{date}T{hms}")
        }
        None => format!("d{day}T{hms}"),
    }
}

#[derive(Serialize)]
struct JourneyJson {
    departure: String,
    arrival: String,
    transfers: u32,
    truncated: bool,
    legs: Vec<LegJson>,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LegJson {
    Trip {
        route: u32,
        trip: u32,
        day: u32,
        from: String,
        to: String,
        departure: String,
        arrival: String,
    },
    Foot {
        from: String,
        to: String,
        seconds: u32,
    },
}

fn journey_json(tt: &Timetable, j: &Journey, truncated: bool) -> JourneyJson {
    let stop_id = |s: StopIdx| tt.stops[s as usize].id.clone();
    JourneyJson {
        departure: time_string(tt, j.departure),
        arrival: time_string(tt, j.arrival),
        transfers: j.transfers,
        truncated,
        legs: j
            .legs
            .iter()
            .map(|leg| match leg {
                Leg::Trip {
                    route,
                    trip,
                    day,
                    board_stop,
                    exit_stop,
                    board_time,
                    exit_time,
                    ..
                } => LegJson::Trip {
                    route: *route,
                    trip: *trip,
                    day: *day,
                    from: stop_id(*board_stop),
                    to: stop_id(*exit_stop),
                    departure: time_string(tt, *board_time),
                    arrival: time_string(tt, *exit_time),
                },
                Leg::Foot { from, to, duration, .. } => LegJson::Foot {
                    from: stop_id(*from),
                    to: stop_id(*to),
                    seconds: *duration,
                },
            })
            .collect(),
    }
}

fn print_result(tt: &Timetable, res: &QueryResult, json: bool) {
    if json {
        for j in &res.journeys {
            println!(
                "{}",
                serde_json::to_string(&journey_json(tt, j, res.truncated)).unwrap()
            );
        }
        return;
    }
    if res.journeys.is_empty() {
        println!("no journey found");
        return;
    }
    for (i, j) in res.journeys.iter().enumerate() {
        println!(
            "journey {}: dep {}  arr {}  transfers {}",
            i,
            time_string(tt, j.departure),
            time_string(tt, j.arrival),
            j.transfers
        );
        for leg in &j.legs {
            match leg {
                Leg::Trip {
                    route,
                    trip,
                    day,
                    board_stop,
                    exit_stop,
                    board_time,
                    exit_time,
                    ..
                } => println!(
                    "  ride route {route} trip {trip} (day {day})  {} {} -> {} {}",
                    tt.stops[*board_stop as usize].id,
                    time_string(tt, *board_time),
                    tt.stops[*exit_stop as usize].id,
                    time_string(tt, *exit_time),
                ),
                Leg::Foot { from, to, duration, .. } => println!(
                    "  walk {} -> {}  {}s",
                    tt.stops[*from as usize].id, tt.stops[*to as usize].id, duration
                ),
            }
        }
    }
    if res.truncated {
        println!("(front truncated at the view horizon)");
    }
}

fn cmd_query(args: QueryArgs) -> CmdResult {
    let (tt, transfers) = load_artifacts(&args.artifacts)?;
    let src = resolve_stop(&tt, &args.from)?;
    let dst = resolve_stop(&tt, &args.to)?;
    let day = resolve_day(&tt, args.day, args.date.as_deref())?;
    let tod = parse_hms(&args.time)?;
    if tod.seconds() >= SECONDS_PER_DAY {
        return Err("departure time of day must be below 24:00:00".into());
    }
    let departure = AbsTime::from_seconds(i64::from(day) * SECONDS_PER_DAY + tod.seconds());
    let res = match args.engine {
        EngineArg::Full => {
            let view = extract_day_view(&tt, &transfers, day, args.horizon)?;
            earliest_arrival_query(&tt, &view, src, dst, departure)?
        }
        EngineArg::Flat => {
            let (w, len) = flat_window_for_day(&tt, day, args.horizon.max(1));
            let flat = flatten_window(&tt, &transfers, w, len)?;
            flat_earliest_arrival_query(&tt, &flat, src, dst, departure)?
        }
    };
    print_result(&tt, &res, args.json);
    Ok(EXIT_OK)
}

fn cmd_profile(args: ProfileArgs) -> CmdResult {
    let (tt, transfers) = load_artifacts(&args.artifacts)?;
    let src = resolve_stop(&tt, &args.from)?;
    let dst = resolve_stop(&tt, &args.to)?;
    let day = resolve_day(&tt, args.day, args.date.as_deref())?;
    let res = match args.engine {
        EngineArg::Full => {
            let view = extract_day_view(&tt, &transfers, day, args.horizon)?;
            profile_query(&tt, &view, src, dst)?
        }
        EngineArg::Flat => {
            let (w, len) = flat_window_for_day(&tt, day, args.horizon.max(1));
            let flat = flatten_window(&tt, &transfers, w, len)?;
            flat_profile_query(&tt, &flat, src, dst, day)?
        }
    };
    print_result(&tt, &res, args.json);
    Ok(EXIT_OK)
}

fn cmd_bench(args: BenchArgs) -> CmdResult {
    let (tt, transfers) = load_artifacts(&args.artifacts)?;
    let engines: Vec<EngineKind> = match args.engine {
        BenchEngineArg::Full => vec![EngineKind::Full],
        BenchEngineArg::Flat => vec![EngineKind::Flat],
        BenchEngineArg::Both => vec![EngineKind::Full, EngineKind::Flat],
    };
    let mut records: Vec<BenchRecord> = Vec::new();
    for &engine in &engines {
        let recs = run_profile_bench(
            &tt,
            &transfers,
            engine,
            args.n,
            args.seed,
            args.horizon,
            args.cache_capacity,
        )?;
        records.extend(recs);
    }
    if let Some(path) = &args.out {
        let file = fs::File::create(path)?;
        bench::write_bench_csv(file, &records)?;
    }
    let mut medians = Vec::new();
    for &engine in &engines {
        let s = summarize(engine, &records);
        println!(
            "{}: {} queries, {} successful | micros min {} p25 {} median {} p75 {} max {}",
            s.engine.name(),
            s.total,
            s.successful,
            s.min_micros,
            s.p25_micros,
            s.median_micros,
            s.p75_micros,
            s.max_micros
        );
        medians.push((engine, s.median_micros));
    }
    if medians.len() == 2 && medians[1].1 > 0 {
        println!(
            "full/flat median ratio: {:.2}",
            medians[0].1 as f64 / medians[1].1 as f64
        );
    }
    Ok(EXIT_OK)
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum EditJson {
    Remove {
        route: u32,
        trip: u32,
        days: Vec<u32>,
    },
    Add {
        stops: Vec<String>,
        arr: Vec<i64>,
        dep: Vec<i64>,
        active_days: String,
    },
    Delay {
        route: u32,
        trip: u32,
        day: u32,
        #[serde(skip_serializing_if = "Option::is_none")]
        delta: Option<u32>,
        #[serde(skip_serializing_if = "Option::is_none")]
        deltas: Option<Vec<u32>>,
    },
}

fn edit_from_json(tt: &Timetable, e: EditJson) -> Result<TimetableEdit, Box<dyn std::error::Error>> {
    Ok(match e {
        EditJson::Remove { route, trip, days } => TimetableEdit::Remove { route, trip, days },
        EditJson::Add {
            stops,
            arr,
            dep,
            active_days,
        } => {
            let stop_idx: Vec<StopIdx> = stops
                .iter()
                .map(|id| resolve_stop(tt, id))
                .collect::<Result<_, _>>()?;
            let bits = crate::bitset::DayBitset::from_bit_string(
                &active_days,
                tt.horizon_days as usize,
            )?;
            let to_rel = |v: Vec<i64>| -> Result<Vec<crate::time::RelTime>, crate::error::ModelError> {
                v.into_iter().map(crate::time::RelTime::new).collect()
            };
            TimetableEdit::Add {
                trip: DraftTrip::new(stop_idx, to_rel(arr)?, to_rel(dep)?, bits)?,
            }
        }
        EditJson::Delay {
            route,
            trip,
            day,
            delta,
            deltas,
        } => {
            let delay = match (delta, deltas) {
                (Some(d), None) => DelaySpec::Uniform(d),
                (None, Some(v)) => DelaySpec::PerStop(v),
                _ => return Err("delay needs exactly one of delta or deltas".into()),
            };
            TimetableEdit::Delay {
                route,
                trip,
                day,
                delay,
            }
        }
    })
}

fn cmd_update_sim(args: UpdateSimArgs) -> CmdResult {
    let (tt, transfers) = load_artifacts(&args.artifacts)?;
    let edits: Vec<TimetableEdit> = match (&args.edits, args.random) {
        (Some(path), None) => {
            let text = fs::read_to_string(path)?;
            let mut edits = Vec::new();
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let parsed: EditJson = serde_json::from_str(line)
                    .map_err(|e| format!("{}:{}: {e}", path.display(), i + 1))?;
                edits.push(edit_from_json(&tt, parsed)?);
            }
            edits
        }
        (None, Some(n)) => random_delay_edits(&tt, n, args.seed)?,
        (None, None) => Vec::new(),
        (Some(_), Some(_)) => return Err("use either --edits or --random, not both".into()),
    };

    let batch = args.batch.max(1);
    let mut current_tt = tt;
    let mut current_ts = transfers;
    let mut records: Vec<UpdateRecord> = Vec::new();
    for (i, chunk) in edits.chunks(batch).enumerate() {
        let started = Instant::now();
        let updated = apply_batch(&current_tt, &current_ts, chunk)?;
        let micros = started.elapsed().as_micros() as u64;
        let kind = if chunk.len() == 1 {
            match &chunk[0] {
                TimetableEdit::Remove { .. } => "remove".to_string(),
                TimetableEdit::Add { .. } => "add".to_string(),
                TimetableEdit::Delay { .. } => "delay".to_string(),
            }
        } else {
            format!("batch[{}]", chunk.len())
        };
        records.push(UpdateRecord {
            update_id: i as u32,
            kind,
            trips_recomputed: updated.trips_recomputed,
            micros,
        });
        current_tt = updated.timetable;
        current_ts = updated.transfers;
    }

    if let Some(path) = &args.out {
        let file = fs::File::create(path)?;
        bench::write_update_csv(file, &records)?;
    }
    let total_recomputed: usize = records.iter().map(|r| r.trips_recomputed).sum();
    println!(
        "applied {} edits in {} updates; {} trip recomputations",
        edits.len(),
        records.len(),
        total_recomputed
    );

    if args.verify {
        let fresh = reduce_transfers(
            &current_tt,
            &compute_transfers_with(&current_tt, current_ts.max_day_shift),
        );
        if fresh.to_bytes() != current_ts.to_bytes() {
            eprintln!(
                "verification FAILED: incremental transfer set differs from fresh preprocessing \
                 ({} vs {} transfers)",
                current_ts.transfer_count(),
                fresh.transfer_count()
            );
            return Ok(EXIT_VERIFY);
        }
        println!("verification passed: byte-identical to fresh preprocessing");
    }

    if args.save {
        save_canonical(&current_tt, &args.artifacts.join("timetable.jsonl"))?;
        fs::write(args.artifacts.join("transfers.bin"), current_ts.to_bytes())?;
        println!("saved updated artifacts");
    }
    Ok(EXIT_OK)
}
