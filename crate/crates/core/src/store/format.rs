//! On-disk layouts.
//!
//! # Delta segment (`*.tds`)
//!
//! One file per appended frame, all integers and floats little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "TDS1"
//! 4       8     record count (u64)
//! 12      178n  records
//! ```
//!
//! # Record (178 bytes)
//!
//! The 22 extraction columns in catalog order (162 bytes), followed by the
//! match assignment and the frame epoch:
//!
//! ```text
//! 0   id u64        8   imageid u32     12  zone u16
//! 14  ra f64        22  dec f64         30  mag f64
//! 38  mag_error     46  pixel_x         54  pixel_y
//! 62  ra_err        70  dec_err         78  x
//! 86  y             94  z               102 flux
//! 110 flux_err      118 calmag          126 flag u32
//! 130 background    138 threshold       146 ellipticity
//! 154 class_star    162 star_id u64     170 epoch f64
//! ```
//!
//! `star_id == u64::MAX` marks an unmatched transient candidate.
//!
//! # Base run (`base.tdb`)
//!
//! ```text
//! 0   4     magic "TDB1"
//! 4   8     record count n (u64)
//! 12  4     last merged night (u32)
//! 16  8     index entry count m (u64)
//! 24  178n  records sorted by (star_id, epoch, id)
//! ..  24m   index entries: star_id u64, first record u64, record count u64
//! ```
//!
//! # CSV interchange
//!
//! Header row with the 22 column names in catalog order; floats use the
//! shortest representation that round-trips exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::catalog::{Epoch, SourceRecord};
use crate::error::{Error, Result};

pub const SEGMENT_MAGIC: [u8; 4] = *b"TDS1";
pub const BASE_MAGIC: [u8; 4] = *b"TDB1";
pub const SEGMENT_HEADER_SIZE: usize = 12;
pub const BASE_HEADER_SIZE: usize = 24;
/// Serialized size of the 22 extraction columns.
pub const CATALOG_COLUMNS_SIZE: usize = 162;
pub const RECORD_SIZE: usize = CATALOG_COLUMNS_SIZE + 16;
pub const INDEX_ENTRY_SIZE: usize = 24;
pub const NO_STAR: u64 = u64::MAX;

pub const CATALOG_COLUMNS: [&str; 22] = [
    "id",
    "imageid",
    "zone",
    "ra",
    "dec",
    "mag",
    "mag_error",
    "pixel_x",
    "pixel_y",
    "ra_err",
    "dec_err",
    "x",
    "y",
    "z",
    "flux",
    "flux_err",
    "calmag",
    "flag",
    "background",
    "threshold",
    "ellipticity",
    "class_star",
];

/// A catalog row as persisted: the measurement plus its template match.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredRecord {
    pub record: SourceRecord,
    /// `None` for transient candidates.
    pub star_id: Option<u64>,
    pub epoch: Epoch,
}

impl StoredRecord {
    pub fn is_candidate(&self) -> bool {
        self.star_id.is_none()
    }

    pub(crate) fn sort_key(&self) -> SortKey {
        SortKey {
            star: self.star_id.unwrap_or(NO_STAR),
            epoch: self.epoch,
            id: self.record.id,
        }
    }
}

/// Base-run ordering: (star_id, epoch, id).
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct SortKey {
    pub star: u64,
    pub epoch: f64,
    pub id: u64,
}

impl SortKey {
    pub fn of_raw(raw: &[u8]) -> SortKey {
        SortKey {
            star: u64::from_le_bytes(raw[162..170].try_into().unwrap()),
            epoch: f64::from_le_bytes(raw[170..178].try_into().unwrap()),
            id: u64::from_le_bytes(raw[0..8].try_into().unwrap()),
        }
    }

    pub fn cmp(&self, other: &SortKey) -> std::cmp::Ordering {
        self.star
            .cmp(&other.star)
            .then(self.epoch.total_cmp(&other.epoch))
            .then(self.id.cmp(&other.id))
    }
}

pub fn encode_record(stored: &StoredRecord, out: &mut Vec<u8>) {
    let r = &stored.record;
    out.extend_from_slice(&r.id.to_le_bytes());
    out.extend_from_slice(&r.imageid.to_le_bytes());
    out.extend_from_slice(&r.zone.to_le_bytes());
    for v in [
        r.ra, r.dec, r.mag, r.mag_error, r.pixel_x, r.pixel_y, r.ra_err, r.dec_err, r.x, r.y, r.z,
        r.flux, r.flux_err, r.calmag,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&r.flag.to_le_bytes());
    for v in [r.background, r.threshold, r.ellipticity, r.class_star] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&stored.star_id.unwrap_or(NO_STAR).to_le_bytes());
    out.extend_from_slice(&stored.epoch.to_le_bytes());
}

/// Decodes one record; `raw` must hold at least [`RECORD_SIZE`] bytes.
pub fn decode_record(raw: &[u8]) -> StoredRecord {
    let f = |at: usize| f64::from_le_bytes(raw[at..at + 8].try_into().unwrap());
    let star = u64::from_le_bytes(raw[162..170].try_into().unwrap());
    StoredRecord {
        record: SourceRecord {
            id: u64::from_le_bytes(raw[0..8].try_into().unwrap()),
            imageid: u32::from_le_bytes(raw[8..12].try_into().unwrap()),
            zone: u16::from_le_bytes(raw[12..14].try_into().unwrap()),
            ra: f(14),
            dec: f(22),
            mag: f(30),
            mag_error: f(38),
            pixel_x: f(46),
            pixel_y: f(54),
            ra_err: f(62),
            dec_err: f(70),
            x: f(78),
            y: f(86),
            z: f(94),
            flux: f(102),
            flux_err: f(110),
            calmag: f(118),
            flag: u32::from_le_bytes(raw[126..130].try_into().unwrap()),
            background: f(130),
            threshold: f(138),
            ellipticity: f(146),
            class_star: f(154),
        },
        star_id: (star != NO_STAR).then_some(star),
        epoch: f(170),
    }
}

pub fn encode_segment(records: &[StoredRecord]) -> Vec<u8> {
    let mut out = Vec::with_capacity(SEGMENT_HEADER_SIZE + records.len() * RECORD_SIZE);
    out.extend_from_slice(&SEGMENT_MAGIC);
    out.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for r in records {
        encode_record(r, &mut out);
    }
    out
}

/// Validates a segment header and returns the raw record bytes.
pub fn segment_body<'a>(bytes: &'a [u8], path: &Path) -> Result<&'a [u8]> {
    if bytes.len() < SEGMENT_HEADER_SIZE || bytes[0..4] != SEGMENT_MAGIC {
        return Err(Error::format(path, "missing TDS1 header"));
    }
    let count = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    let body = &bytes[SEGMENT_HEADER_SIZE..];
    if body.len() != count * RECORD_SIZE {
        return Err(Error::format(
            path,
            format!("header says {count} records but body has {} bytes", body.len()),
        ));
    }
    Ok(body)
}

pub fn decode_segment(bytes: &[u8], path: &Path) -> Result<Vec<StoredRecord>> {
    Ok(segment_body(bytes, path)?
        .chunks_exact(RECORD_SIZE)
        .map(decode_record)
        .collect())
}

fn push_row(out: &mut String, r: &SourceRecord) {
    let _ = write!(
        out,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.id,
        r.imageid,
        r.zone,
        r.ra,
        r.dec,
        r.mag,
        r.mag_error,
        r.pixel_x,
        r.pixel_y,
        r.ra_err,
        r.dec_err,
        r.x,
        r.y,
        r.z,
        r.flux,
        r.flux_err,
        r.calmag,
        r.flag,
        r.background,
        r.threshold,
        r.ellipticity,
        r.class_star
    );
}

pub fn csv_header() -> String {
    CATALOG_COLUMNS.join(",")
}

/// Interchange CSV for extraction rows (templates and frames).
pub fn write_csv(records: &[SourceRecord]) -> String {
    let mut out = csv_header();
    out.push('\n');
    for r in records {
        push_row(&mut out, r);
        out.push('\n');
    }
    out
}

/// Interchange CSV plus the `star_id` and `epoch` columns; candidates have
/// an empty `star_id`.
pub fn write_stored_csv(records: &[StoredRecord]) -> String {
    let mut out = csv_header();
    out.push_str(",star_id,epoch\n");
    for s in records {
        push_row(&mut out, &s.record);
        let star = s.star_id.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, ",{star},{}", s.epoch);
    }
    out
}

fn parse_row(fields: &[&str], line_no: usize) -> Result<SourceRecord> {
    let bad = |col: usize| {
        Error::Config(format!(
            "csv line {line_no}: bad value {:?} for {}",
            fields[col], CATALOG_COLUMNS[col]
        ))
    };
    let f = |col: usize| fields[col].trim().parse::<f64>().map_err(|_| bad(col));
    Ok(SourceRecord {
        id: fields[0].trim().parse().map_err(|_| bad(0))?,
        imageid: fields[1].trim().parse().map_err(|_| bad(1))?,
        zone: fields[2].trim().parse().map_err(|_| bad(2))?,
        ra: f(3)?,
        dec: f(4)?,
        mag: f(5)?,
        mag_error: f(6)?,
        pixel_x: f(7)?,
        pixel_y: f(8)?,
        ra_err: f(9)?,
        dec_err: f(10)?,
        x: f(11)?,
        y: f(12)?,
        z: f(13)?,
        flux: f(14)?,
        flux_err: f(15)?,
        calmag: f(16)?,
        flag: fields[17].trim().parse().map_err(|_| bad(17))?,
        background: f(18)?,
        threshold: f(19)?,
        ellipticity: f(20)?,
        class_star: f(21)?,
    })
}

fn check_header(line: Option<&str>, extra: &[&str]) -> Result<()> {
    let expected: Vec<&str> = CATALOG_COLUMNS.iter().copied().chain(extra.iter().copied()).collect();
    let got: Vec<&str> = line.unwrap_or("").trim().split(',').map(str::trim).collect();
    if got == expected {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "csv header mismatch: expected {:?}",
            expected.join(",")
        )))
    }
}

pub fn parse_csv(text: &str) -> Result<Vec<SourceRecord>> {
    let mut lines = text.lines();
    check_header(lines.next(), &[])?;
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != CATALOG_COLUMNS.len() {
            return Err(Error::Config(format!(
                "csv line {}: expected {} fields, got {}",
                n + 2,
                CATALOG_COLUMNS.len(),
                fields.len()
            )));
        }
        out.push(parse_row(&fields, n + 2)?);
    }
    Ok(out)
}

pub fn parse_stored_csv(text: &str) -> Result<Vec<StoredRecord>> {
    let mut lines = text.lines();
    check_header(lines.next(), &["star_id", "epoch"])?;
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != CATALOG_COLUMNS.len() + 2 {
            return Err(Error::Config(format!("csv line {}: wrong field count", n + 2)));
        }
        let record = parse_row(&fields[..22], n + 2)?;
        let star_id = match fields[22].trim() {
            "" => None,
            s => Some(
                s.parse()
                    .map_err(|_| Error::Config(format!("csv line {}: bad star_id", n + 2)))?,
            ),
        };
        let epoch = fields[23]
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("csv line {}: bad epoch", n + 2)))?;
        out.push(StoredRecord {
            record,
            star_id,
            epoch,
        });
    }
    Ok(out)
}
