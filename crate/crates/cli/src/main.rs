mod config;

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use zonecat::catalog::{image_id_parts, FrameBatch, SkyCoord, SourceRecord};
use zonecat::crossmatch::{crossmatch_throughput, range_join, ThroughputSample, ZoneIndex};
use zonecat::lightcurve::{query_curve, EpochRange};
use zonecat::mining::{write_alerts_csv, FrequencyGrid, NewSourceTracker, OnlineDetector};
use zonecat::pipeline::{self, NightConfig, Predicate, MATCH_CSV_HEADER};
use zonecat::skygen::{
    build_template, observe_frame, parse_truth_log, random_injections, write_truth_log, FrameClock, InjectionPlan,
    SkyModel, TemplateCatalog,
};
use zonecat::store::capacity::{capacity_plan, CapacityRow};
use zonecat::store::format::{self, StoredRecord};
use zonecat::store::{Durability, NightStore, StoreOptions, StoreReader, RECORD_SIZE};
use zonecat::{Error, Result};

use config::{EngineArgs, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "zonecat", version, about = "Time-domain star catalog engine", arg_required_else_help = true)]
struct Cli {
    #[command(flatten)]
    engine: EngineArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Bin,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one camera: template catalog, frames and optional injections
    Generate {
        #[arg(long, default_value_t = 1)]
        camera: u16,
        #[arg(long, default_value_t = 0)]
        night: u32,
        #[arg(long, default_value_t = 10)]
        frames: u32,
        /// Number of random transients to inject
        #[arg(long, default_value_t = 0)]
        inject: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-match frames against a template and append them to a partition's night
    Ingest {
        #[arg(long)]
        partition: u16,
        #[arg(long)]
        night: u32,
        /// Frame file, or a directory of frame files
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Template CSV; defaults to the simulated template for --seed/--density
        #[arg(long)]
        template: Option<PathBuf>,
    },
    /// Fold a night's delta log into the partition's base run
    Merge {
        #[arg(long)]
        partition: u16,
        #[arg(long)]
        night: u32,
    },
    /// Match one frame CSV against a template CSV; writes match rows
    Crossmatch {
        #[arg(long)]
        template: PathBuf,
        #[arg(long)]
        frame: PathBuf,
        /// Output file (default stdout)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full pipeline on N partitions for one night
    RunNight {
        #[arg(long, default_value_t = 1)]
        partitions: u16,
        #[arg(long, default_value_t = 1920)]
        frames: u32,
        #[arg(long, default_value_t = 0)]
        night: u32,
        /// Truth log of injections to apply
        #[arg(long)]
        inject: Option<PathBuf>,
        /// Directory for match, alert and timing files (default DATA_DIR/out-night-NNNNN)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Skip fsync on appends
        #[arg(long)]
        no_sync: bool,
    },
    /// Query stored history across partitions
    Query {
        /// Light curve of one star as CSV
        #[arg(long, conflicts_with_all = ["cone", "candidates"])]
        star: Option<u64>,
        /// Records within a cone: RA,DEC,RADIUS in degrees
        #[arg(long, value_name = "RA,DEC,RADIUS", conflicts_with = "candidates")]
        cone: Option<String>,
        /// Unmatched (transient-candidate) records
        #[arg(long)]
        candidates: bool,
        #[arg(long)]
        from: Option<f64>,
        #[arg(long)]
        to: Option<f64>,
        /// Partitions to search (default: all under the data directory)
        #[arg(long, value_delimiter = ',')]
        partitions: Option<Vec<u16>>,
        #[arg(long, default_value_t = 4)]
        threads: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Transient mining
    #[command(subcommand)]
    Mine(MineCommand),
    /// Benchmarks
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Project catalog volume for a camera array
    Plan {
        #[arg(long, default_value_t = 36)]
        cameras: u16,
        #[arg(long, default_value_t = 1)]
        days: u32,
        /// Bytes per stored record (default: the binary record size)
        #[arg(long)]
        bytes_per_record: Option<f64>,
    },
}

#[derive(Subcommand, Debug)]
enum MineCommand {
    /// Replay a stored night through the online detectors and write alerts
    Online {
        #[arg(long)]
        partition: u16,
        #[arg(long)]
        night: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lomb-Scargle period search on one star's stored curve
    Period {
        #[arg(long)]
        star: u64,
        #[arg(long, default_value_t = 10.0)]
        oversample: f64,
        #[arg(long, requires = "f_max")]
        f_min: Option<f64>,
        #[arg(long, requires = "f_min")]
        f_max: Option<f64>,
        #[arg(long, default_value_t = 10_000)]
        n_freq: usize,
        #[arg(long)]
        partitions: Option<Vec<u16>>,
        /// (frequency, power) CSV output (default stdout)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum BenchCommand {
    /// Parallel efficiency at fixed total load
    Scaling {
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        workers: Vec<usize>,
        /// Total frames split across the workers
        #[arg(long, default_value_t = 240)]
        frames: u32,
    },
    /// Index build + join throughput at fixed sky density
    Crossmatch {
        #[arg(long, value_delimiter = ',', default_value = "1756,17560,175600")]
        sizes: Vec<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("zonecat: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let rc = RunConfig::resolve(&cli.engine)?;
    // Planning is about the real instrument: full density unless asked otherwise.
    let plan_density = cli.engine.density.unwrap_or(zonecat::Density::Full);
    match cli.command {
        Command::Generate {
            camera,
            night,
            frames,
            inject,
            format,
            out,
        } => generate(&rc, camera, night, frames, inject, format, &out),
        Command::Ingest {
            partition,
            night,
            input,
            format,
            template,
        } => ingest(&rc, partition, night, &input, format, template.as_deref()),
        Command::Merge { partition, night } => {
            let mut store = NightStore::open(rc.data_dir()?, partition, night, StoreOptions::default())?;
            let r = store.nightly_merge()?;
            println!("night,records_merged,base_records,base_bytes,duration_s");
            println!(
                "{},{},{},{},{:.6}",
                r.night_id, r.records_merged, r.base_records, r.base_bytes, r.duration_s
            );
            Ok(())
        }
        Command::Crossmatch { template, frame, out } => crossmatch(&rc, &template, &frame, out.as_deref()),
        Command::RunNight {
            partitions,
            frames,
            night,
            inject,
            out,
            no_sync,
        } => run_night(&rc, partitions, frames, night, inject.as_deref(), out, no_sync),
        Command::Query {
            star,
            cone,
            candidates,
            from,
            to,
            partitions,
            threads,
            out,
        } => {
            let range = EpochRange::new(from.unwrap_or(f64::NEG_INFINITY), to.unwrap_or(f64::INFINITY))?;
            let root = rc.data_dir()?;
            let partitions = match partitions {
                Some(p) => p,
                None => list_partitions(root)?,
            };
            if let Some(star) = star {
                let readers = partitions
                    .iter()
                    .map(|&p| StoreReader::open(root, p))
                    .collect::<Result<Vec<_>>>()?;
                return emit(out.as_deref(), &query_curve(&readers, star, range)?.to_csv());
            }
            let predicate = match (cone, candidates) {
                (Some(c), _) => {
                    let v: Vec<f64> = c
                        .split(',')
                        .map(|x| x.trim().parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::Config(format!("--cone {c:?}: {e}")))?;
                    let [ra, dec, radius_deg] = v[..] else {
                        return Err(Error::Config(format!("--cone expects RA,DEC,RADIUS, got {c:?}")));
                    };
                    Predicate::Cone {
                        center: SkyCoord::new(ra, dec)?,
                        radius_deg,
                    }
                }
                (None, true) => Predicate::Candidates,
                (None, false) => Predicate::Epochs(range),
            };
            let rows = pipeline::scatter_gather_query(root, &partitions, &predicate, threads)?;
            let records: Vec<StoredRecord> = rows
                .into_iter()
                .map(|r| r.record)
                .filter(|r| range.contains(r.epoch))
                .collect();
            emit(out.as_deref(), &format::write_stored_csv(&records))
        }
        Command::Mine(MineCommand::Online { partition, night, out }) => mine_online(&rc, partition, night, out.as_deref()),
        Command::Mine(MineCommand::Period {
            star,
            oversample,
            f_min,
            f_max,
            n_freq,
            partitions,
            out,
        }) => {
            let root = rc.data_dir()?;
            let partitions = match partitions {
                Some(p) => p,
                None => list_partitions(root)?,
            };
            let readers = partitions
                .iter()
                .map(|&p| StoreReader::open(root, p))
                .collect::<Result<Vec<_>>>()?;
            let curve = query_curve(&readers, star, EpochRange::all())?;
            let grid = match (f_min, f_max) {
                (Some(lo), Some(hi)) => FrequencyGrid::new(lo, hi, n_freq)?,
                _ => {
                    let (a, b) = curve.span().ok_or(Error::InsufficientData { needed: 8, got: 0 })?;
                    FrequencyGrid::auto(b - a, rc.engine.cadence_s, oversample)?
                }
            };
            let pg = zonecat::mining::period_search(&curve, &grid)?;
            emit(out.as_deref(), &pg.to_csv())?;
            eprintln!(
                "star {star}: {} points, best period {:.6} s (frequency {:.9} Hz, power {:.3})",
                curve.len(),
                pg.best_period,
                pg.best_frequency,
                pg.best_power
            );
            if out.is_some() {
                println!("best_period_s,{}", pg.best_period);
            }
            Ok(())
        }
        Command::Bench(BenchCommand::Scaling { workers, frames }) => {
            let rows = pipeline::scaling_benchmark(&workers, frames, rc.density, rc.seed)?;
            let mut text = format!("{}\n", pipeline::ScalingRow::CSV_HEADER);
            for r in rows {
                text.push_str(&r.csv_row());
                text.push('\n');
            }
            emit(None, &text)
        }
        Command::Bench(BenchCommand::Crossmatch { sizes }) => {
            let mut text = format!("{}\n", ThroughputSample::CSV_HEADER);
            for n in sizes {
                let s = crossmatch_throughput(n, n, rc.engine.match_radius_deg, rc.seed)?;
                text.push_str(&s.csv_row());
                text.push('\n');
            }
            emit(None, &text)
        }
        Command::Plan {
            cameras,
            days,
            bytes_per_record,
        } => {
            let engine = zonecat::EngineConfig {
                cameras,
                ..rc.engine.clone()
            }
            .with_density(plan_density);
            let rows = capacity_plan(&engine, days, bytes_per_record.unwrap_or(RECORD_SIZE as f64))?;
            let mut text = format!("{}\n", CapacityRow::CSV_HEADER);
            for r in rows {
                text.push_str(&r.csv_row());
                text.push('\n');
            }
            emit(None, &text)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_file(path, text.as_bytes()),
        None => {
            let mut stdout = io::stdout().lock();
            match stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
                // A closed pipe (e.g. `| head`) is not a failure.
                Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
                r => r.map_err(|e| storage(Path::new("<stdout>"), e)),
            }
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| storage(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| storage(path, e))
}

fn storage(path: &Path, source: io::Error) -> Error {
    Error::Storage {
        path: path.to_path_buf(),
        source,
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| storage(path, e))
}

fn list_partitions(root: &Path) -> Result<Vec<u16>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| storage(root, e))? {
        let name = entry.map_err(|e| storage(root, e))?.file_name();
        if let Some(p) = name.to_str().and_then(|n| n.strip_prefix('p')).and_then(|n| n.parse().ok()) {
            out.push(p);
        }
    }
    out.sort_unstable();
    Ok(out)
}

fn simulated(rc: &RunConfig, camera: u16) -> Result<(SkyModel, TemplateCatalog)> {
    let model = SkyModel::for_camera(camera, rc.density, rc.seed)?;
    let template = build_template(&model, &rc.engine)?;
    Ok((model, template))
}

fn generate(rc: &RunConfig, camera: u16, night: u32, frames: u32, inject: usize, format: Format, out: &Path) -> Result<()> {
    let (model, template) = simulated(rc, camera)?;
    let clock = FrameClock::for_night(night, rc.engine.cadence_s)?;
    let injections = if inject > 0 {
        // Warm windows where the night allows it, leaving room for the events.
        let warmup = (rc.online.window as u32).min(frames / 2);
        let plan = InjectionPlan {
            count: inject,
            frames,
            warmup_frames: warmup,
            duration_frames: (2, (frames - warmup).clamp(2, 60)),
            delta_mag_abs: (0.3, 1.0),
            isolation_deg: 2.0 * rc.engine.match_radius_deg,
        };
        random_injections(&template, &model, &clock, &plan, rc.seed)?
    } else {
        Vec::new()
    };
    write_file(&out.join(format!("template-p{camera:02}.csv")), format::write_csv(&template.records).as_bytes())?;
    if !injections.is_empty() {
        write_file(&out.join("truth.csv"), write_truth_log(&injections).as_bytes())?;
    }
    let mut csv = format::csv_header();
    csv.push('\n');
    for seq in 0..frames {
        let frame = observe_frame(&template, &model, &rc.engine, &clock, clock.epoch(seq), &injections)?;
        match format {
            Format::Csv => {
                let rows = format::write_csv(&frame.records);
                csv.push_str(rows.split_once('\n').map_or("", |(_, body)| body));
            }
            Format::Bin => {
                let stored: Vec<StoredRecord> = frame
                    .records
                    .into_iter()
                    .map(|record| StoredRecord {
                        record,
                        star_id: None,
                        epoch: frame.epoch,
                    })
                    .collect();
                write_file(
                    &out.join(format!("frame-p{camera:02}-{seq:06}.tds")),
                    &format::encode_segment(&stored),
                )?;
            }
        }
    }
    if format == Format::Csv {
        write_file(&out.join(format!("frames-p{camera:02}.csv")), csv.as_bytes())?;
    }
    eprintln!(
        "camera {camera}: {} template stars, {frames} frames, {} injections -> {}",
        template.len(),
        injections.len(),
        out.display()
    );
    Ok(())
}

/// Groups records into frames by image id; epochs come from the exposure
/// number in the image id.
fn frames_from_records(records: Vec<SourceRecord>, partition: u16, cadence_s: f64) -> Result<Vec<FrameBatch>> {
    let mut by_image: BTreeMap<u32, Vec<SourceRecord>> = BTreeMap::new();
    for r in records {
        by_image.entry(r.imageid).or_default().push(r);
    }
    by_image
        .into_iter()
        .map(|(imageid, records)| {
            let (camera, exposure) = image_id_parts(imageid);
            if camera != partition {
                return Err(Error::Config(format!(
                    "image {imageid} belongs to camera {camera}, not partition {partition}"
                )));
            }
            Ok(FrameBatch {
                camera_id: camera,
                imageid,
                epoch: f64::from(exposure) * cadence_s,
                records,
            })
        })
        .collect()
}

fn input_files(input: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    if input.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(input)
            .map_err(|e| storage(input, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == ext))
            .collect();
        files.sort();
        Ok(files)
    } else {
        Ok(vec![input.to_path_buf()])
    }
}

fn load_template(rc: &RunConfig, partition: u16, path: Option<&Path>) -> Result<TemplateCatalog> {
    match path {
        Some(p) => Ok(TemplateCatalog::from_records(
            partition,
            format::parse_csv(&read_text(p)?)?,
            rc.engine.zone_height_deg,
        )),
        None => Ok(simulated(rc, partition)?.1),
    }
}

fn ingest(rc: &RunConfig, partition: u16, night: u32, input: &Path, fmt: Format, template: Option<&Path>) -> Result<()> {
    let template = load_template(rc, partition, template)?;
    let mut frames = Vec::new();
    match fmt {
        Format::Csv => {
            let mut records = Vec::new();
            for f in input_files(input, "csv")? {
                records.extend(format::parse_csv(&read_text(&f)?)?);
            }
            frames = frames_from_records(records, partition, rc.engine.cadence_s)?;
        }
        Format::Bin => {
            for f in input_files(input, "tds")? {
                let bytes = fs::read(&f).map_err(|e| storage(&f, e))?;
                let stored = format::decode_segment(&bytes, &f)?;
                let Some(first) = stored.first() else { continue };
                let epoch = first.epoch;
                let records: Vec<SourceRecord> = stored.into_iter().map(|s| s.record).collect();
                let mut batch = frames_from_records(records, partition, rc.engine.cadence_s)?;
                for b in &mut batch {
                    b.epoch = epoch;
                }
                frames.extend(batch);
            }
            frames.sort_by(|a, b| a.epoch.total_cmp(&b.epoch));
        }
    }
    let mut store = NightStore::open(rc.data_dir()?, partition, night, StoreOptions::default())?;
    let (mut records, mut matched) = (0usize, 0usize);
    for frame in &frames {
        let m = range_join(frame, &template.index, rc.engine.match_radius_deg)?;
        store.delta_insert(frame, &m)?;
        records += frame.len();
        matched += m.matched.len();
    }
    println!("partition,night,frames,records,matched,unmatched");
    println!("{partition},{night},{},{records},{matched},{}", frames.len(), records - matched);
    Ok(())
}

fn crossmatch(rc: &RunConfig, template: &Path, frame: &Path, out: Option<&Path>) -> Result<()> {
    let template = format::parse_csv(&read_text(template)?)?;
    let index = ZoneIndex::build(&template, rc.engine.zone_height_deg);
    let records = format::parse_csv(&read_text(frame)?)?;
    let mut text = format!("{MATCH_CSV_HEADER}\n");
    let mut by_image: BTreeMap<u32, Vec<SourceRecord>> = BTreeMap::new();
    for r in records {
        by_image.entry(r.imageid).or_default().push(r);
    }
    for (imageid, records) in by_image {
        let frame = FrameBatch {
            camera_id: image_id_parts(imageid).0,
            imageid,
            epoch: 0.0,
            records,
        };
        let m = range_join(&frame, &index, rc.engine.match_radius_deg)?;
        let mut pairs = m.matched.iter().peekable();
        for r in &frame.records {
            match pairs.peek() {
                Some(p) if p.record_id == r.id => {
                    text.push_str(&format!("{imageid},{},{},{:.9e}\n", r.id, p.star_id, p.separation_deg));
                    pairs.next();
                }
                _ => text.push_str(&format!("{imageid},{},,\n", r.id)),
            }
        }
    }
    emit(out, &text)
}

fn run_night(
    rc: &RunConfig,
    partitions: u16,
    frames: u32,
    night: u32,
    inject: Option<&Path>,
    out: Option<PathBuf>,
    no_sync: bool,
) -> Result<()> {
    let root = rc.data_dir()?.to_path_buf();
    let injections = match inject {
        Some(p) => parse_truth_log(&read_text(p)?)?,
        None => Vec::new(),
    };
    if partitions == 0 {
        return Err(Error::Config("--partitions must be at least 1".into()));
    }
    let out = out.unwrap_or_else(|| root.join(format!("out-night-{night:05}")));
    let cfg = NightConfig {
        engine: rc.engine.clone(),
        density: rc.density,
        seed: rc.seed,
        night_id: night,
        frames,
        online: rc.online.clone(),
        data_root: Some(root),
        durability: if no_sync { Durability::Buffered } else { Durability::Sync },
        output_dir: Some(out.clone()),
    };
    let cameras: Vec<u16> = (0..partitions).collect();
    let outcomes = pipeline::run_night(&cameras, &cfg, &injections)?;
    let mut summary = String::from(
        "camera,frames,records,matched,unmatched,alerts,budget_violations,max_frame_s,records_per_s\n",
    );
    let mut first_error = None;
    for o in outcomes {
        match o.result {
            Ok(r) => {
                let c = &r.cadence;
                summary.push_str(&format!(
                    "{},{},{},{},{},{},{},{:.6},{:.1}\n",
                    o.camera_id,
                    c.frames.len(),
                    c.records,
                    c.matched,
                    c.unmatched,
                    c.alerts,
                    c.budget_violations,
                    c.max_frame_s(),
                    c.throughput()
                ));
            }
            Err(e) => {
                eprintln!("zonecat: {e}");
                first_error.get_or_insert(e);
            }
        }
    }
    write_file(&out.join("summary.csv"), summary.as_bytes())?;
    emit(None, &summary)?;
    first_error.map_or(Ok(()), Err)
}

fn mine_online(rc: &RunConfig, partition: u16, night: u32, out: Option<&Path>) -> Result<()> {
    let reader = StoreReader::open(rc.data_dir()?, partition)?;
    let range = EpochRange::new(f64::from(night) * 86_400.0, f64::from(night + 1) * 86_400.0)?;
    let mut by_epoch: BTreeMap<u64, Vec<StoredRecord>> = BTreeMap::new();
    reader.for_each(|r| {
        if range.contains(r.epoch) {
            by_epoch.entry(r.epoch.to_bits()).or_default().push(r);
        }
    })?;
    let mut detector = OnlineDetector::new(rc.online.clone())?;
    let mut tracker = NewSourceTracker::new(&rc.online)?;
    let mut alerts = Vec::new();
    for (bits, mut stored) in by_epoch {
        stored.sort_by_key(|s| s.record.id);
        let epoch = f64::from_bits(bits);
        let assignments: Vec<Option<u64>> = stored.iter().map(|s| s.star_id).collect();
        let unmatched: Vec<SkyCoord> = stored.iter().filter(|s| s.is_candidate()).map(|s| s.record.coord()).collect();
        let frame = FrameBatch {
            camera_id: partition,
            imageid: stored[0].record.imageid,
            epoch,
            records: stored.into_iter().map(|s| s.record).collect(),
        };
        alerts.extend(detector.process_frame(&frame, &assignments)?);
        alerts.extend(tracker.process_frame(epoch, &unmatched));
    }
    let default = rc.data_dir()?.join(format!("alerts-p{partition:02}-night-{night:05}.csv"));
    let path = out.map_or(default, Path::to_path_buf);
    write_file(&path, write_alerts_csv(&alerts).as_bytes())?;
    println!("{} alerts -> {}", alerts.len(), path.display());
    Ok(())
}
