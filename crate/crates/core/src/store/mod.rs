//! Per-partition catalog storage: an append-only delta log for the current
//! night (`DeltaInsert`) and a base run that the night is folded into
//! during the daytime low cycle.
//!
//! Directory layout under the data root:
//!
//! ```text
//! p07/base.tdb                              merged history
//! p07/night-00012/seg-000042-<epoch>.tds    one delta segment per frame
//! p07/MERGING                               present while a merge runs
//! ```
//!
//! Every file becomes visible through an atomic rename, so readers only
//! ever see complete segments and complete base runs.

pub mod capacity;
pub mod format;

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::catalog::{Epoch, FrameBatch};
use crate::crossmatch::MatchResult;
use crate::error::{Error, Result};

pub use capacity::{capacity_plan, CapacityRow};
pub use format::{StoredRecord, NO_STAR, RECORD_SIZE};

use format::{SortKey, BASE_HEADER_SIZE, BASE_MAGIC, INDEX_ENTRY_SIZE};

const BASE_FILE: &str = "base.tdb";
const STAGING_FILE: &str = "base.tdb.staging";
const MERGE_MARKER: &str = "MERGING";
const SEGMENT_EXT: &str = "tds";
const TMP_SUFFIX: &str = ".tmp";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Durability {
    /// fsync every segment and directory entry before acknowledging.
    #[default]
    Sync,
    /// Leave flushing to the OS; for simulations that regenerate their data.
    Buffered,
}

/// Crash simulation points.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// The next append runs out of space after this many bytes.
    AppendFailsAfter(usize),
    /// Merge stops after the staging run is written, before it is committed.
    MergeCrashAfterStaging,
    /// Merge stops after the base is committed, before the delta is dropped.
    MergeCrashAfterCommit,
}

#[derive(Clone, Debug, Default)]
pub struct StoreOptions {
    pub durability: Durability,
    #[doc(hidden)]
    pub fault: Option<Fault>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StorageStats {
    pub records_ingested: u64,
    pub segments: u64,
    pub bytes_on_disk: u64,
    /// Wall time of the last append.
    pub ingest_latency_s: f64,
    /// Wall time of the last merge.
    pub merge_duration_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AppendAck {
    pub segment: PathBuf,
    pub seq: u32,
    pub records: usize,
    pub latency_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MergeReport {
    pub night_id: u32,
    pub records_merged: u64,
    pub base_records: u64,
    pub base_bytes: u64,
    pub duration_s: f64,
}

pub fn partition_dir(root: &Path, partition_id: u16) -> PathBuf {
    root.join(format!("p{partition_id:02}"))
}

fn night_dir(partition: &Path, night_id: u32) -> PathBuf {
    partition.join(format!("night-{night_id:05}"))
}

fn segment_name(seq: u32, epoch: Epoch) -> String {
    format!("seg-{seq:06}-{:016x}.{SEGMENT_EXT}", epoch.to_bits())
}

fn parse_segment_name(name: &str) -> Option<(u32, Epoch)> {
    let stem = name.strip_prefix("seg-")?.strip_suffix(".tds")?;
    let (seq, bits) = stem.split_once('-')?;
    Some((seq.parse().ok()?, f64::from_bits(u64::from_str_radix(bits, 16).ok()?)))
}

fn parse_night_name(name: &str) -> Option<u32> {
    name.strip_prefix("night-")?.parse().ok()
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |e| Error::storage(path, e)
}

fn sync_dir(dir: &Path) -> Result<()> {
    File::open(dir)
        .and_then(|d| d.sync_all())
        .map_err(io_err(dir))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentInfo {
    pub path: PathBuf,
    pub night_id: u32,
    pub seq: u32,
    pub epoch: Epoch,
}

/// Complete segments of every unmerged night, in (night, seq) order.
fn list_segments(partition: &Path, after_night: Option<u32>) -> Result<Vec<SegmentInfo>> {
    let mut out = Vec::new();
    let entries = match fs::read_dir(partition) {
        Ok(e) => e,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(Error::storage(partition, e)),
    };
    for entry in entries {
        let entry = entry.map_err(io_err(partition))?;
        let Some(night_id) = entry.file_name().to_str().and_then(parse_night_name) else {
            continue;
        };
        if after_night.is_some_and(|last| night_id <= last) {
            continue;
        }
        let dir = entry.path();
        for seg in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let seg = seg.map_err(io_err(&dir))?;
            if let Some((seq, epoch)) = seg.file_name().to_str().and_then(parse_segment_name) {
                out.push(SegmentInfo {
                    path: seg.path(),
                    night_id,
                    seq,
                    epoch,
                });
            }
        }
    }
    out.sort_by_key(|s| (s.night_id, s.seq));
    Ok(out)
}

/// Header and run index of a base file.
#[derive(Clone, Debug)]
struct BaseRun {
    path: PathBuf,
    records: u64,
    last_night: u32,
    /// (star_id, first record, count), sorted by star_id.
    index: Vec<(u64, u64, u64)>,
}

impl BaseRun {
    fn open(partition: &Path) -> Result<Option<BaseRun>> {
        let path = partition.join(BASE_FILE);
        let mut file = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::storage(&path, e)),
        };
        let mut header = [0u8; BASE_HEADER_SIZE];
        file.read_exact(&mut header).map_err(io_err(&path))?;
        if header[0..4] != BASE_MAGIC {
            return Err(Error::format(&path, "missing TDB1 header"));
        }
        let records = u64::from_le_bytes(header[4..12].try_into().unwrap());
        let last_night = u32::from_le_bytes(header[12..16].try_into().unwrap());
        let entries = u64::from_le_bytes(header[16..24].try_into().unwrap());
        let index_at = BASE_HEADER_SIZE as u64 + records * RECORD_SIZE as u64;
        let len = file.metadata().map_err(io_err(&path))?.len();
        if len != index_at + entries * INDEX_ENTRY_SIZE as u64 {
            return Err(Error::format(&path, "file length disagrees with header"));
        }
        file.seek(SeekFrom::Start(index_at)).map_err(io_err(&path))?;
        let mut raw = vec![0u8; entries as usize * INDEX_ENTRY_SIZE];
        file.read_exact(&mut raw).map_err(io_err(&path))?;
        let index = raw
            .chunks_exact(INDEX_ENTRY_SIZE)
            .map(|c| {
                let u = |at: usize| u64::from_le_bytes(c[at..at + 8].try_into().unwrap());
                (u(0), u(8), u(16))
            })
            .collect();
        Ok(Some(BaseRun {
            path,
            records,
            last_night,
            index,
        }))
    }

    fn read_records(&self, first: u64, count: u64) -> Result<Vec<StoredRecord>> {
        let mut file = File::open(&self.path).map_err(io_err(&self.path))?;
        file.seek(SeekFrom::Start(BASE_HEADER_SIZE as u64 + first * RECORD_SIZE as u64))
            .map_err(io_err(&self.path))?;
        let mut raw = vec![0u8; count as usize * RECORD_SIZE];
        file.read_exact(&mut raw).map_err(io_err(&self.path))?;
        Ok(raw.chunks_exact(RECORD_SIZE).map(format::decode_record).collect())
    }

    fn star(&self, star_id: u64) -> Result<Vec<StoredRecord>> {
        match self.index.binary_search_by_key(&star_id, |e| e.0) {
            Ok(i) => self.read_records(self.index[i].1, self.index[i].2),
            Err(_) => Ok(Vec::new()),
        }
    }
}

/// Writer for one partition's current night.
///
/// Exactly one `NightStore` may exist per partition; it is the only writer
/// of the delta log and the only party that runs merges.
#[derive(Debug)]
pub struct NightStore {
    partition: PathBuf,
    partition_id: u16,
    night_id: u32,
    options: StoreOptions,
    next_seq: u32,
    last_epoch: Option<Epoch>,
    merged_through: Option<u32>,
    stats: StorageStats,
}

impl NightStore {
    /// Opens (creating if needed) the partition under `root`, finishing or
    /// discarding any merge that was interrupted.
    pub fn open(root: &Path, partition_id: u16, night_id: u32, options: StoreOptions) -> Result<Self> {
        let partition = partition_dir(root, partition_id);
        fs::create_dir_all(&partition).map_err(io_err(&partition))?;
        recover(&partition)?;
        let base = BaseRun::open(&partition)?;
        let merged_through = base.as_ref().map(|b| b.last_night);
        let night = night_dir(&partition, night_id);
        let mut store = NightStore {
            partition,
            partition_id,
            night_id,
            options,
            next_seq: 0,
            last_epoch: None,
            merged_through,
            stats: StorageStats::default(),
        };
        if night.exists() {
            for entry in fs::read_dir(&night).map_err(io_err(&night))? {
                let entry = entry.map_err(io_err(&night))?;
                let name = entry.file_name();
                let name = name.to_string_lossy();
                if name.ends_with(TMP_SUFFIX) {
                    // crashed append: never acknowledged, never visible
                    let _ = fs::remove_file(entry.path());
                }
            }
            for seg in list_segments(&store.partition, merged_through)?
                .into_iter()
                .filter(|s| s.night_id == night_id)
            {
                store.next_seq = seg.seq + 1;
                store.last_epoch = Some(seg.epoch);
                let len = fs::metadata(&seg.path).map_err(io_err(&seg.path))?.len();
                store.stats.segments += 1;
                store.stats.bytes_on_disk += len;
                store.stats.records_ingested +=
                    (len.saturating_sub(format::SEGMENT_HEADER_SIZE as u64)) / RECORD_SIZE as u64;
            }
        }
        if let Some(base) = &base {
            store.stats.bytes_on_disk += fs::metadata(&base.path).map_err(io_err(&base.path))?.len();
        }
        Ok(store)
    }

    pub fn partition_id(&self) -> u16 {
        self.partition_id
    }

    pub fn night_id(&self) -> u32 {
        self.night_id
    }

    pub fn partition_path(&self) -> &Path {
        &self.partition
    }

    pub fn stats(&self) -> &StorageStats {
        &self.stats
    }

    pub fn last_epoch(&self) -> Option<Epoch> {
        self.last_epoch
    }

    #[doc(hidden)]
    pub fn set_fault(&mut self, fault: Option<Fault>) {
        self.options.fault = fault;
    }

    /// Durably appends one frame and its match assignments as a new
    /// segment. The segment is written to a temporary file and renamed into
    /// place, so a failure at any point leaves nothing visible.
    pub fn delta_insert(&mut self, frame: &FrameBatch, matches: &MatchResult) -> Result<AppendAck> {
        let start = Instant::now();
        if self.merged_through.is_some_and(|n| n >= self.night_id) {
            return Err(Error::Config(format!(
                "night {} of partition {} is already merged",
                self.night_id, self.partition_id
            )));
        }
        if self.partition.join(MERGE_MARKER).exists() {
            return Err(Error::Overlap {
                partition: self.partition_id,
            });
        }
        if let Some(last) = self.last_epoch {
            if !(frame.epoch > last) {
                return Err(Error::Sequencing {
                    epoch: frame.epoch,
                    last,
                    context: format!("partition {} delta log", self.partition_id),
                });
            }
        }
        if matches.imageid != frame.imageid {
            return Err(Error::Mismatch {
                imageid: frame.imageid,
                detail: format!("result is for image {}", matches.imageid),
            });
        }
        let assignments = matches.assignments(frame)?;

        let mut bytes = Vec::with_capacity(format::SEGMENT_HEADER_SIZE + frame.len() * RECORD_SIZE);
        bytes.extend_from_slice(&format::SEGMENT_MAGIC);
        bytes.extend_from_slice(&(frame.len() as u64).to_le_bytes());
        for (record, star_id) in frame.records.iter().zip(assignments) {
            format::encode_record(
                &StoredRecord {
                    record: record.clone(),
                    star_id,
                    epoch: frame.epoch,
                },
                &mut bytes,
            );
        }

        let dir = night_dir(&self.partition, self.night_id);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let name = segment_name(self.next_seq, frame.epoch);
        let path = dir.join(&name);
        let tmp = dir.join(format!("{name}{TMP_SUFFIX}"));
        let fault = self.options.fault.take();
        if let Err(e) = self.write_file(&tmp, &bytes, fault) {
            let _ = fs::remove_file(&tmp);
            return Err(e);
        }
        fs::rename(&tmp, &path).map_err(|e| {
            let _ = fs::remove_file(&tmp);
            Error::storage(&path, e)
        })?;
        if self.options.durability == Durability::Sync {
            sync_dir(&dir)?;
        }

        self.next_seq += 1;
        self.last_epoch = Some(frame.epoch);
        let latency_s = start.elapsed().as_secs_f64();
        self.stats.records_ingested += frame.len() as u64;
        self.stats.segments += 1;
        self.stats.bytes_on_disk += bytes.len() as u64;
        self.stats.ingest_latency_s = latency_s;
        Ok(AppendAck {
            segment: path,
            seq: self.next_seq - 1,
            records: frame.len(),
            latency_s,
        })
    }

    fn write_file(&self, path: &Path, bytes: &[u8], fault: Option<Fault>) -> Result<()> {
        let mut file = File::create(path).map_err(io_err(path))?;
        if let Some(Fault::AppendFailsAfter(limit)) = fault {
            let n = limit.min(bytes.len());
            file.write_all(&bytes[..n]).map_err(io_err(path))?;
            return Err(Error::storage(
                path,
                io::Error::new(io::ErrorKind::StorageFull, "simulated disk full"),
            ));
        }
        file.write_all(bytes).map_err(io_err(path))?;
        if self.options.durability == Durability::Sync {
            file.sync_all().map_err(io_err(path))?;
        }
        Ok(())
    }

    /// Folds the current night's delta log into the base run.
    ///
    /// The new base (old base ∪ delta, sorted by star then epoch) is written
    /// to a staging file and renamed over the old one; only then is the
    /// delta log removed. An interrupted merge leaves either the old base
    /// with the delta intact, or the new base with a stale delta that the
    /// next [`NightStore::open`] discards.
    pub fn nightly_merge(&mut self) -> Result<MergeReport> {
        let start = Instant::now();
        let segments: Vec<SegmentInfo> = list_segments(&self.partition, self.merged_through)?
            .into_iter()
            .filter(|s| s.night_id <= self.night_id)
            .collect();
        if segments.is_empty() {
            let base = BaseRun::open(&self.partition)?;
            return Ok(MergeReport {
                night_id: self.night_id,
                records_merged: 0,
                base_records: base.as_ref().map_or(0, |b| b.records),
                base_bytes: match &base {
                    Some(b) => fs::metadata(&b.path).map_err(io_err(&b.path))?.len(),
                    None => 0,
                },
                duration_s: start.elapsed().as_secs_f64(),
            });
        }

        let marker = self.partition.join(MERGE_MARKER);
        OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&marker)
            .map_err(|e| match e.kind() {
                io::ErrorKind::AlreadyExists => Error::Overlap {
                    partition: self.partition_id,
                },
                _ => Error::storage(&marker, e),
            })?;

        let result = self.merge_segments(&segments);
        let fault = self.options.fault;
        let (records_merged, base_records, base_bytes) = match result {
            Ok(v) => v,
            Err(e) => {
                if !matches!(e, Error::Interrupted(_)) {
                    let _ = fs::remove_file(self.partition.join(STAGING_FILE));
                    let _ = fs::remove_file(&marker);
                }
                return Err(e);
            }
        };
        self.merged_through = Some(self.night_id);
        if fault == Some(Fault::MergeCrashAfterCommit) {
            self.options.fault = None;
            return Err(Error::Interrupted("after base commit"));
        }
        let mut nights: Vec<u32> = segments.iter().map(|s| s.night_id).collect();
        nights.dedup();
        for night in nights {
            let dir = night_dir(&self.partition, night);
            fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
        }
        fs::remove_file(&marker).map_err(io_err(&marker))?;
        if self.options.durability == Durability::Sync {
            sync_dir(&self.partition)?;
        }

        let duration_s = start.elapsed().as_secs_f64();
        self.stats.merge_duration_s = duration_s;
        self.stats.bytes_on_disk = base_bytes;
        Ok(MergeReport {
            night_id: self.night_id,
            records_merged,
            base_records,
            base_bytes,
            duration_s,
        })
    }

    fn merge_segments(&mut self, segments: &[SegmentInfo]) -> Result<(u64, u64, u64)> {
        // Delta records stay raw; only their sort keys are decoded.
        let mut raw = Vec::new();
        for seg in segments {
            let bytes = fs::read(&seg.path).map_err(io_err(&seg.path))?;
            raw.extend_from_slice(format::segment_body(&bytes, &seg.path)?);
        }
        let mut order: Vec<(SortKey, usize)> = raw
            .chunks_exact(RECORD_SIZE)
            .enumerate()
            .map(|(i, r)| (SortKey::of_raw(r), i))
            .collect();
        order.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        let merged = order.len() as u64;

        let old_base = BaseRun::open(&self.partition)?;
        let staging = self.partition.join(STAGING_FILE);
        let file = File::create(&staging).map_err(io_err(&staging))?;
        let mut out = BufWriter::with_capacity(1 << 20, file);
        out.write_all(&[0u8; BASE_HEADER_SIZE]).map_err(io_err(&staging))?;

        let mut index: Vec<(u64, u64, u64)> = Vec::new();
        let mut written = 0u64;
        let mut emit = |out: &mut BufWriter<File>, rec: &[u8], star: u64| -> Result<()> {
            out.write_all(rec).map_err(io_err(&staging))?;
            match index.last_mut() {
                Some(last) if last.0 == star => last.2 += 1,
                _ => index.push((star, written, 1)),
            }
            written += 1;
            Ok(())
        };

        let mut old = match &old_base {
            Some(b) => {
                let mut r = BufReader::with_capacity(1 << 20, File::open(&b.path).map_err(io_err(&b.path))?);
                r.seek(SeekFrom::Start(BASE_HEADER_SIZE as u64)).map_err(io_err(&b.path))?;
                Some((r, b.records, b.path.clone()))
            }
            None => None,
        };
        let mut old_buf = [0u8; RECORD_SIZE];
        let mut old_left = old.as_ref().map_or(0, |o| o.1);
        let mut read_old = |buf: &mut [u8; RECORD_SIZE]| -> Result<bool> {
            if old_left == 0 {
                return Ok(false);
            }
            let (reader, _, path) = old.as_mut().expect("records left implies a base");
            reader.read_exact(buf).map_err(io_err(path))?;
            old_left -= 1;
            Ok(true)
        };
        let mut have_old = read_old(&mut old_buf)?;
        let mut delta = order.iter().peekable();
        loop {
            let take_old = match (have_old, delta.peek()) {
                (false, None) => break,
                (true, None) => true,
                (false, Some(_)) => false,
                (true, Some((key, _))) => SortKey::of_raw(&old_buf).cmp(key).is_lt(),
            };
            if take_old {
                let star = SortKey::of_raw(&old_buf).star;
                emit(&mut out, &old_buf, star)?;
                have_old = read_old(&mut old_buf)?;
            } else {
                let (key, i) = delta.next().expect("peeked");
                emit(&mut out, &raw[i * RECORD_SIZE..(i + 1) * RECORD_SIZE], key.star)?;
            }
        }
        for (star, first, count) in &index {
            for v in [star, first, count] {
                out.write_all(&v.to_le_bytes()).map_err(io_err(&staging))?;
            }
        }
        let mut header = Vec::with_capacity(BASE_HEADER_SIZE);
        header.extend_from_slice(&BASE_MAGIC);
        header.extend_from_slice(&written.to_le_bytes());
        header.extend_from_slice(&self.night_id.to_le_bytes());
        header.extend_from_slice(&(index.len() as u64).to_le_bytes());
        let mut file = out.into_inner().map_err(|e| Error::storage(&staging, e.into_error()))?;
        file.seek(SeekFrom::Start(0)).map_err(io_err(&staging))?;
        file.write_all(&header).map_err(io_err(&staging))?;
        if self.options.durability == Durability::Sync {
            file.sync_all().map_err(io_err(&staging))?;
        }
        let base_bytes = file.metadata().map_err(io_err(&staging))?.len();
        drop(file);

        if self.options.fault == Some(Fault::MergeCrashAfterStaging) {
            self.options.fault = None;
            return Err(Error::Interrupted("after staging write"));
        }
        let base = self.partition.join(BASE_FILE);
        fs::rename(&staging, &base).map_err(io_err(&base))?;
        if self.options.durability == Durability::Sync {
            sync_dir(&self.partition)?;
        }
        Ok((merged, written, base_bytes))
    }
}

/// Restores a partition to a consistent state after a crash: drops an
/// uncommitted staging run and any delta nights the base already contains.
fn recover(partition: &Path) -> Result<()> {
    let staging = partition.join(STAGING_FILE);
    if staging.exists() {
        fs::remove_file(&staging).map_err(io_err(&staging))?;
    }
    if let Some(base) = BaseRun::open(partition)? {
        for entry in fs::read_dir(partition).map_err(io_err(partition))? {
            let entry = entry.map_err(io_err(partition))?;
            if let Some(night) = entry.file_name().to_str().and_then(parse_night_name) {
                if night <= base.last_night {
                    fs::remove_dir_all(entry.path()).map_err(io_err(partition))?;
                }
            }
        }
    }
    let marker = partition.join(MERGE_MARKER);
    if marker.exists() {
        fs::remove_file(&marker).map_err(io_err(&marker))?;
    }
    Ok(())
}

/// Read-only snapshot of one partition: the base run plus the delta
/// segments that existed when it was opened.
#[derive(Clone, Debug)]
pub struct StoreReader {
    partition_id: u16,
    base: Option<BaseRun>,
    segments: Vec<SegmentInfo>,
}

impl StoreReader {
    pub fn open(root: &Path, partition_id: u16) -> Result<Self> {
        let partition = partition_dir(root, partition_id);
        if !partition.is_dir() {
            return Err(Error::storage(
                &partition,
                io::Error::new(io::ErrorKind::NotFound, "partition directory missing"),
            ));
        }
        let base = BaseRun::open(&partition)?;
        let segments = list_segments(&partition, base.as_ref().map(|b| b.last_night))?;
        Ok(StoreReader {
            partition_id,
            base,
            segments,
        })
    }

    pub fn partition_id(&self) -> u16 {
        self.partition_id
    }

    pub fn segments(&self) -> &[SegmentInfo] {
        &self.segments
    }

    pub fn base_records(&self) -> u64 {
        self.base.as_ref().map_or(0, |b| b.records)
    }

    /// Records of one delta segment, in frame order.
    pub fn read_segment(&self, seg: &SegmentInfo) -> Result<Vec<StoredRecord>> {
        let bytes = fs::read(&seg.path).map_err(io_err(&seg.path))?;
        format::decode_segment(&bytes, &seg.path)
    }

    /// Visits the full history: base run first, then delta segments.
    pub fn for_each(&self, mut visit: impl FnMut(StoredRecord)) -> Result<()> {
        if let Some(base) = &self.base {
            let file = File::open(&base.path).map_err(io_err(&base.path))?;
            let mut reader = BufReader::with_capacity(1 << 20, file);
            reader
                .seek(SeekFrom::Start(BASE_HEADER_SIZE as u64))
                .map_err(io_err(&base.path))?;
            let mut buf = [0u8; RECORD_SIZE];
            for _ in 0..base.records {
                reader.read_exact(&mut buf).map_err(io_err(&base.path))?;
                visit(format::decode_record(&buf));
            }
        }
        for seg in &self.segments {
            for rec in self.read_segment(seg)? {
                visit(rec);
            }
        }
        Ok(())
    }

    pub fn all_records(&self) -> Result<Vec<StoredRecord>> {
        let mut out = Vec::new();
        self.for_each(|r| out.push(r))?;
        Ok(out)
    }

    /// Every stored record of one star, from both layers, in epoch order.
    pub fn star_history(&self, star_id: u64) -> Result<Vec<StoredRecord>> {
        let mut out = match &self.base {
            Some(base) => base.star(star_id)?,
            None => Vec::new(),
        };
        for seg in &self.segments {
            let bytes = fs::read(&seg.path).map_err(io_err(&seg.path))?;
            for raw in format::segment_body(&bytes, &seg.path)?.chunks_exact(RECORD_SIZE) {
                if SortKey::of_raw(raw).star == star_id {
                    out.push(format::decode_record(raw));
                }
            }
        }
        out.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        Ok(out)
    }
}
