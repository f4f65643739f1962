//! Per-camera shared-nothing pipeline: generate → cross-match → delta insert
//! → light curves → online mining, one worker per partition, plus
//! scatter-gather queries over the partition stores.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::catalog::{angular_separation, Density, EngineConfig, Epoch, FrameBatch, SkyCoord};
use crate::crossmatch::{range_join, MatchResult};
use crate::error::{Error, Result};
use crate::lightcurve::{CurveSet, EpochRange};
use crate::mining::{Alert, NewSourceTracker, OnlineConfig, OnlineDetector};
use crate::skygen::{build_template, observe_frame, FrameClock, SkyModel, TemplateCatalog, TransientInjection};
use crate::store::{Durability, NightStore, StorageStats, StoreOptions, StoreReader, StoredRecord};

pub const MATCH_CSV_HEADER: &str = "imageid,record_id,star_id,separation_deg";

/// Wall time of each stage for one frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrameTiming {
    pub seq: u32,
    pub epoch: Epoch,
    pub records: usize,
    pub generate_s: f64,
    pub match_s: f64,
    pub insert_s: f64,
    pub curve_s: f64,
    pub mine_s: f64,
    pub total_s: f64,
}

impl FrameTiming {
    pub const CSV_HEADER: &'static str = "camera,seq,epoch,records,generate_s,match_s,insert_s,curve_s,mine_s,total_s";

    pub fn csv_row(&self, camera_id: u16) -> String {
        format!(
            "{camera_id},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.seq,
            self.epoch,
            self.records,
            self.generate_s,
            self.match_s,
            self.insert_s,
            self.curve_s,
            self.mine_s,
            self.total_s
        )
    }

    /// Everything except generation, which stands in for the camera.
    pub fn processing_s(&self) -> f64 {
        self.total_s - self.generate_s
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CadenceReport {
    pub camera_id: u16,
    pub cadence_s: f64,
    pub frames: Vec<FrameTiming>,
    /// Frames whose total exceeded the cadence.
    pub budget_violations: usize,
    pub records: u64,
    pub matched: u64,
    pub unmatched: u64,
    pub curve_points: u64,
    /// Extra matches to a star already measured in the same frame.
    pub duplicate_matches: u64,
    pub ambiguous: u64,
    pub alerts: u64,
    pub wall_s: f64,
}

impl CadenceReport {
    /// Records per second of wall time.
    pub fn throughput(&self) -> f64 {
        if self.wall_s > 0.0 {
            self.records as f64 / self.wall_s
        } else {
            0.0
        }
    }

    pub fn max_frame_s(&self) -> f64 {
        self.frames.iter().map(|f| f.total_s).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(FrameTiming::CSV_HEADER);
        out.push('\n');
        for f in &self.frames {
            out.push_str(&f.csv_row(self.camera_id));
            out.push('\n');
        }
        out
    }
}

/// Settings shared by every partition of a night.
#[derive(Clone, Debug)]
pub struct NightConfig {
    pub engine: EngineConfig,
    pub density: Density,
    pub seed: u64,
    pub night_id: u32,
    pub frames: u32,
    pub online: OnlineConfig,
    /// Data root for the partition stores; `None` keeps everything in memory.
    pub data_root: Option<PathBuf>,
    pub durability: Durability,
    /// Where match, alert and timing files go.
    pub output_dir: Option<PathBuf>,
}

impl Default for NightConfig {
    fn default() -> Self {
        NightConfig {
            engine: EngineConfig::default(),
            density: Density::Hundredth,
            seed: 0,
            night_id: 0,
            frames: 1920,
            online: OnlineConfig::default(),
            data_root: None,
            durability: Durability::Sync,
            output_dir: None,
        }
    }
}

impl NightConfig {
    pub fn validate(&self) -> Result<()> {
        self.engine.validate()?;
        self.online.validate()
    }

    fn engine(&self) -> EngineConfig {
        self.engine.clone().with_density(self.density)
    }
}

/// One camera's pipeline. Owns its template, store, curves and detectors and
/// touches no other partition's state.
#[derive(Debug)]
pub struct PartitionWorker {
    camera_id: u16,
    config: EngineConfig,
    model: SkyModel,
    template: TemplateCatalog,
    clock: FrameClock,
    injections: Vec<TransientInjection>,
    store: Option<NightStore>,
    curves: CurveSet,
    detector: OnlineDetector,
    tracker: NewSourceTracker,
    match_out: Option<BufWriter<File>>,
    alerts: Vec<Alert>,
    report: CadenceReport,
}

impl PartitionWorker {
    pub fn new(camera_id: u16, night: &NightConfig) -> Result<Self> {
        night.validate()?;
        let config = night.engine();
        let mut model = SkyModel::for_camera(camera_id, night.density, night.seed)?;
        model.star_count = config.sources_per_frame;
        let template = build_template(&model, &config)?;
        let store = match &night.data_root {
            Some(root) => Some(NightStore::open(
                root,
                camera_id,
                night.night_id,
                StoreOptions {
                    durability: night.durability,
                    fault: None,
                },
            )?),
            None => None,
        };
        PartitionWorker::assemble(camera_id, config, model, template, store, night)
    }

    /// Worker over an existing template (e.g. one loaded from disk).
    pub fn with_template(
        model: SkyModel,
        template: TemplateCatalog,
        store: Option<NightStore>,
        night: &NightConfig,
    ) -> Result<Self> {
        night.validate()?;
        let config = night.engine();
        PartitionWorker::assemble(template.camera_id, config, model, template, store, night)
    }

    fn assemble(
        camera_id: u16,
        config: EngineConfig,
        model: SkyModel,
        template: TemplateCatalog,
        store: Option<NightStore>,
        night: &NightConfig,
    ) -> Result<Self> {
        let match_out = match &night.output_dir {
            Some(dir) => {
                fs::create_dir_all(dir).map_err(|e| Error::storage(dir, e))?;
                let path = dir.join(format!("matches-p{camera_id:02}.csv"));
                let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::storage(&path, e))?);
                writeln!(w, "{MATCH_CSV_HEADER}").map_err(|e| Error::storage(&path, e))?;
                Some(w)
            }
            None => None,
        };
        Ok(PartitionWorker {
            camera_id,
            clock: FrameClock::for_night(night.night_id, config.cadence_s)?,
            detector: OnlineDetector::new(night.online.clone())?,
            tracker: NewSourceTracker::new(&night.online)?,
            curves: CurveSet::bounded(night.online.window),
            report: CadenceReport {
                camera_id,
                cadence_s: config.cadence_s,
                ..CadenceReport::default()
            },
            config,
            model,
            template,
            injections: Vec::new(),
            store,
            match_out,
            alerts: Vec::new(),
        })
    }

    pub fn camera_id(&self) -> u16 {
        self.camera_id
    }

    pub fn template(&self) -> &TemplateCatalog {
        &self.template
    }

    pub fn model(&self) -> &SkyModel {
        &self.model
    }

    pub fn clock(&self) -> &FrameClock {
        &self.clock
    }

    pub fn curves(&self) -> &CurveSet {
        &self.curves
    }

    pub fn alerts(&self) -> &[Alert] {
        &self.alerts
    }

    pub fn report(&self) -> &CadenceReport {
        &self.report
    }

    pub fn store(&self) -> Option<&NightStore> {
        self.store.as_ref()
    }

    pub fn store_mut(&mut self) -> Option<&mut NightStore> {
        self.store.as_mut()
    }

    /// Keeps the injections that belong to this camera.
    pub fn set_injections(&mut self, injections: &[TransientInjection]) {
        self.injections = injections
            .iter()
            .filter(|i| i.camera() == Some(self.camera_id))
            .cloned()
            .collect();
    }

    pub fn generate(&self, seq: u32) -> Result<FrameBatch> {
        observe_frame(
            &self.template,
            &self.model,
            &self.config,
            &self.clock,
            self.clock.epoch(seq),
            &self.injections,
        )
    }

    /// Generates and processes frame `seq`.
    pub fn step(&mut self, seq: u32) -> Result<FrameTiming> {
        let start = Instant::now();
        let frame = self.generate(seq)?;
        let generate_s = start.elapsed().as_secs_f64();
        let mut timing = self.process_frame(&frame)?;
        timing.seq = seq;
        timing.generate_s = generate_s;
        timing.total_s += generate_s;
        self.record(&timing);
        Ok(timing)
    }

    /// Runs an already generated frame through match, insert, curve and
    /// mining. The timing returned has no generate stage.
    pub fn process_frame(&mut self, frame: &FrameBatch) -> Result<FrameTiming> {
        let t0 = Instant::now();
        let matches = range_join(frame, &self.template.index, self.config.match_radius_deg)?;
        let t1 = Instant::now();
        if let Some(store) = self.store.as_mut() {
            store.delta_insert(frame, &matches)?;
        }
        let t2 = Instant::now();
        let summary = self.curves.append_points(frame, &matches)?;
        let t3 = Instant::now();
        let assignments = matches.assignments(frame)?;
        let mut alerts = self.detector.process_frame(frame, &assignments)?;
        let unmatched: Vec<SkyCoord> = frame
            .records
            .iter()
            .zip(&assignments)
            .filter(|(_, s)| s.is_none())
            .map(|(r, _)| r.coord())
            .collect();
        alerts.extend(self.tracker.process_frame(frame.epoch, &unmatched));
        let t4 = Instant::now();
        if let Some(out) = self.match_out.as_mut() {
            write_match_rows(out, frame, &matches).map_err(|e| Error::storage("matches", e))?;
        }

        self.report.records += frame.len() as u64;
        self.report.matched += matches.matched.len() as u64;
        self.report.unmatched += matches.unmatched.len() as u64;
        self.report.ambiguous += matches.ambiguous_count as u64;
        self.report.curve_points += summary.points as u64;
        self.report.duplicate_matches += summary.duplicates as u64;
        self.report.alerts += alerts.len() as u64;
        self.alerts.extend(alerts);
        let secs = |a: Instant, b: Instant| (b - a).as_secs_f64();
        Ok(FrameTiming {
            seq: self.clock.seq(frame.epoch).unwrap_or(0),
            epoch: frame.epoch,
            records: frame.len(),
            generate_s: 0.0,
            match_s: secs(t0, t1),
            insert_s: secs(t1, t2),
            curve_s: secs(t2, t3),
            mine_s: secs(t3, t4),
            total_s: secs(t0, t4),
        })
    }

    fn record(&mut self, timing: &FrameTiming) {
        if timing.total_s > self.config.cadence_s {
            self.report.budget_violations += 1;
        }
        self.report.frames.push(timing.clone());
    }

    /// Processes frames `0..frames` of the night.
    pub fn run(&mut self, frames: u32) -> Result<()> {
        let start = Instant::now();
        for seq in 0..frames {
            self.step(seq)?;
        }
        self.report.wall_s += start.elapsed().as_secs_f64();
        if let Some(out) = self.match_out.as_mut() {
            out.flush().map_err(|e| Error::storage("matches", e))?;
        }
        Ok(())
    }

    pub fn storage_stats(&self) -> Option<StorageStats> {
        self.store.as_ref().map(|s| s.stats().clone())
    }
}

fn write_match_rows(out: &mut impl Write, frame: &FrameBatch, matches: &MatchResult) -> std::io::Result<()> {
    let mut m = matches.matched.iter().peekable();
    for r in &frame.records {
        match m.peek() {
            Some(p) if p.record_id == r.id => {
                writeln!(out, "{},{},{},{:.9e}", frame.imageid, r.id, p.star_id, p.separation_deg)?;
                m.next();
            }
            _ => writeln!(out, "{},{},,", frame.imageid, r.id)?,
        }
    }
    Ok(())
}

/// Result of one partition's night.
#[derive(Debug)]
pub struct PartitionOutcome {
    pub camera_id: u16,
    pub result: Result<PartitionReport>,
}

#[derive(Clone, Debug)]
pub struct PartitionReport {
    pub cadence: CadenceReport,
    pub alerts: Vec<Alert>,
    pub storage: Option<StorageStats>,
}

/// Runs `night.frames` frames on every camera in `cameras`, one thread per
/// partition. A failing partition reports its error without stopping the
/// others. When `night.output_dir` is set, each partition writes
/// `matches-pNN.csv`, `alerts-pNN.csv` and `timing-pNN.csv` there.
pub fn run_night(cameras: &[u16], night: &NightConfig, injections: &[TransientInjection]) -> Result<Vec<PartitionOutcome>> {
    night.validate()?;
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = cameras.iter().find(|c| !seen.insert(**c)) {
        return Err(Error::Config(format!("camera {dup} listed twice")));
    }
    for inj in injections {
        inj.validate()?;
    }
    let outcomes = std::thread::scope(|scope| {
        let handles: Vec<_> = cameras
            .iter()
            .map(|&camera_id| {
                scope.spawn(move || PartitionOutcome {
                    camera_id,
                    result: run_partition(camera_id, night, injections).map_err(|e| Error::Partition {
                        partition: camera_id,
                        source: Box::new(e),
                    }),
                })
            })
            .collect();
        handles
            .into_iter()
            .zip(cameras)
            .map(|(h, &camera_id)| {
                h.join().unwrap_or_else(|_| PartitionOutcome {
                    camera_id,
                    result: Err(Error::Partition {
                        partition: camera_id,
                        source: Box::new(Error::Interrupted("worker panicked")),
                    }),
                })
            })
            .collect()
    });
    Ok(outcomes)
}

fn run_partition(camera_id: u16, night: &NightConfig, injections: &[TransientInjection]) -> Result<PartitionReport> {
    let mut worker = PartitionWorker::new(camera_id, night)?;
    worker.set_injections(injections);
    worker.run(night.frames)?;
    if let Some(dir) = &night.output_dir {
        let write = |name: String, body: String| {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::storage(&path, e))
        };
        write(format!("alerts-p{camera_id:02}.csv"), crate::mining::write_alerts_csv(worker.alerts()))?;
        write(format!("timing-p{camera_id:02}.csv"), worker.report().to_csv())?;
    }
    Ok(PartitionReport {
        cadence: worker.report().clone(),
        alerts: worker.alerts().to_vec(),
        storage: worker.storage_stats(),
    })
}

/// Filter evaluated independently on each partition.
#[derive(Clone, Debug, PartialEq)]
pub enum Predicate {
    /// Records within `radius_deg` of `center`.
    Cone { center: SkyCoord, radius_deg: f64 },
    /// History of one template star.
    Star(u64),
    Epochs(EpochRange),
    /// Unmatched (transient-candidate) records.
    Candidates,
}

impl Predicate {
    pub fn validate(&self) -> Result<()> {
        match self {
            Predicate::Cone { radius_deg, .. } if !(*radius_deg >= 0.0 && *radius_deg <= 180.0) => Err(
                Error::Config(format!("cone radius must be in [0, 180], got {radius_deg}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn matches(&self, r: &StoredRecord) -> bool {
        match self {
            Predicate::Cone { center, radius_deg } => angular_separation(center, &r.record) <= *radius_deg,
            Predicate::Star(id) => r.star_id == Some(*id),
            Predicate::Epochs(range) => range.contains(r.epoch),
            Predicate::Candidates => r.is_candidate(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryRow {
    pub partition: u16,
    pub record: StoredRecord,
}

fn query_partition(root: &Path, partition: u16, predicate: &Predicate) -> Result<Vec<QueryRow>> {
    let reader = StoreReader::open(root, partition)?;
    let records = match predicate {
        Predicate::Star(id) => reader.star_history(*id)?,
        _ => {
            let mut out = Vec::new();
            reader.for_each(|r| {
                if predicate.matches(&r) {
                    out.push(r);
                }
            })?;
            out
        }
    };
    Ok(records
        .into_iter()
        .map(|record| QueryRow { partition, record })
        .collect())
}

/// Evaluates `predicate` on each partition under `root` using up to
/// `threads` threads, and merges the results by (epoch, partition, id).
/// The result does not depend on `threads`.
pub fn scatter_gather_query(root: &Path, partitions: &[u16], predicate: &Predicate, threads: usize) -> Result<Vec<QueryRow>> {
    predicate.validate()?;
    let threads = threads.clamp(1, partitions.len().max(1));
    let chunk = partitions.len().div_ceil(threads).max(1);
    let parts: Vec<Result<Vec<QueryRow>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = partitions
            .chunks(chunk)
            .map(|group| {
                scope.spawn(move || {
                    let mut rows = Vec::new();
                    for &p in group {
                        rows.extend(query_partition(root, p, predicate).map_err(|e| Error::Partition {
                            partition: p,
                            source: Box::new(e),
                        })?);
                    }
                    Ok(rows)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or(Err(Error::Interrupted("query worker panicked"))))
            .collect()
    });
    let mut rows = Vec::new();
    for part in parts {
        rows.extend(part?);
    }
    rows.sort_by(|a, b| {
        a.record
            .epoch
            .total_cmp(&b.record.epoch)
            .then(a.partition.cmp(&b.partition))
            .then(a.record.record.id.cmp(&b.record.record.id))
    });
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingRow {
    pub workers: usize,
    pub records: u64,
    pub seconds: f64,
    pub records_per_s: f64,
    /// Throughput relative to `workers ×` the single-worker throughput.
    pub efficiency: f64,
}

impl ScalingRow {
    pub const CSV_HEADER: &'static str = "workers,records,seconds,records_per_s,efficiency";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.1},{:.4}",
            self.workers, self.records, self.seconds, self.records_per_s, self.efficiency
        )
    }
}

/// Splits a fixed load of `total_frames` frames evenly over `w` in-memory
/// partitions for each `w` in `worker_counts` and times the full chain.
/// Template construction is not timed.
pub fn scaling_benchmark(worker_counts: &[usize], total_frames: u32, density: Density, seed: u64) -> Result<Vec<ScalingRow>> {
    if worker_counts.is_empty() || worker_counts.contains(&0) {
        return Err(Error::Config("worker counts must be positive".into()));
    }
    let night = NightConfig {
        density,
        seed,
        frames: total_frames,
        ..NightConfig::default()
    };
    let mut rows: Vec<ScalingRow> = Vec::new();
    let mut base_rate = None;
    for &w in worker_counts {
        if w > usize::from(crate::skygen::CAMERA_FIELDS) {
            return Err(Error::Config(format!(
                "at most {} workers (one per camera field), got {w}",
                crate::skygen::CAMERA_FIELDS
            )));
        }
        let per_worker = total_frames / w as u32;
        let mut workers = (0..w as u16)
            .map(|c| PartitionWorker::new(c, &night))
            .collect::<Result<Vec<_>>>()?;
        let start = Instant::now();
        std::thread::scope(|scope| -> Result<()> {
            let handles: Vec<_> = workers
                .iter_mut()
                .map(|worker| scope.spawn(move || worker.run(per_worker)))
                .collect();
            for h in handles {
                h.join().map_err(|_| Error::Interrupted("benchmark worker panicked"))??;
            }
            Ok(())
        })?;
        let seconds = start.elapsed().as_secs_f64();
        let records: u64 = workers.iter().map(|w| w.report().records).sum();
        let rate = records as f64 / seconds.max(1e-12);
        let base = *base_rate.get_or_insert(if w == 1 { rate } else { f64::NAN });
        rows.push(ScalingRow {
            workers: w,
            records,
            seconds,
            records_per_s: rate,
            efficiency: if w == 1 { 1.0 } else { rate / (w as f64 * base) },
        });
    }
    if base_rate.is_some_and(f64::is_nan) {
        // no single-worker row first: measure the baseline separately
        let baseline = scaling_benchmark(&[1], total_frames, density, seed)?[0].records_per_s;
        for row in &mut rows {
            row.efficiency = row.records_per_s / (row.workers as f64 * baseline);
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_night(frames: u32) -> NightConfig {
        NightConfig {
            frames,
            durability: Durability::Buffered,
            engine: EngineConfig::default(),
            ..NightConfig::default()
        }
    }

    #[test]
    fn ten_frames_no_injections() {
        let dir = tempfile::tempdir().unwrap();
        let night = NightConfig {
            data_root: Some(dir.path().join("data")),
            output_dir: Some(dir.path().join("out")),
            ..small_night(10)
        };
        let out = run_night(&[1], &night, &[]).unwrap();
        let report = out[0].result.as_ref().unwrap();
        assert_eq!(report.cadence.frames.len(), 10);
        assert_eq!(report.cadence.records, 10 * 1756);
        assert_eq!(report.cadence.matched + report.cadence.unmatched, report.cadence.records);
        assert!(report.alerts.is_empty());
        assert_eq!(report.storage.as_ref().unwrap().records_ingested, 10 * 1756);
        let alerts = fs::read_to_string(dir.path().join("out/alerts-p01.csv")).unwrap();
        assert_eq!(alerts, format!("{}\n", Alert::CSV_HEADER));
        let matches = fs::read_to_string(dir.path().join("out/matches-p01.csv")).unwrap();
        assert_eq!(matches.lines().count(), 1 + 10 * 1756);
    }

    #[test]
    fn failing_partition_does_not_stop_others() {
        let night = small_night(3);
        let out = run_night(&[2, 99], &night, &[]).unwrap();
        assert!(out[0].result.is_ok());
        let err = out[1].result.as_ref().unwrap_err();
        assert!(matches!(err, Error::Partition { partition: 99, .. }));
        assert!(err.is_config());
    }

    #[test]
    fn duplicate_cameras_rejected() {
        assert!(run_night(&[1, 1], &small_night(1), &[]).is_err());
    }

    #[test]
    fn stage_timings_fit_total() {
        let mut w = PartitionWorker::new(3, &small_night(4)).unwrap();
        w.run(4).unwrap();
        for f in &w.report().frames {
            let sum = f.generate_s + f.match_s + f.insert_s + f.curve_s + f.mine_s;
            assert!(sum <= f.total_s + 1e-9);
        }
        assert!(w.report().throughput() > 0.0);
    }

    #[test]
    fn empty_query_result() {
        let dir = tempfile::tempdir().unwrap();
        let night = NightConfig {
            data_root: Some(dir.path().to_path_buf()),
            ..small_night(2)
        };
        run_night(&[0, 1], &night, &[]).unwrap();
        let rows = scatter_gather_query(dir.path(), &[0, 1], &Predicate::Candidates, 2).unwrap();
        assert!(rows.is_empty());
        let rows = scatter_gather_query(dir.path(), &[0, 1], &Predicate::Star(u64::MAX - 1), 2).unwrap();
        assert!(rows.is_empty());
    }

    #[test]
    fn missing_partition_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let err = scatter_gather_query(dir.path(), &[4], &Predicate::Candidates, 1).unwrap_err();
        assert!(matches!(err, Error::Partition { partition: 4, .. }));
    }

    #[test]
    fn scaling_single_worker_is_unit_efficiency() {
        let rows = scaling_benchmark(&[1], 2, Density::Hundredth, 1).unwrap();
        assert_eq!(rows[0].efficiency, 1.0);
        assert_eq!(rows[0].records, 2 * 1756);
        assert!(scaling_benchmark(&[0], 2, Density::Hundredth, 1).is_err());
    }
}
