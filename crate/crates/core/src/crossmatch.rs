//! Zone-partitioned index and the `RangeJoin` cross-match operator.
//!
//! The sky is cut into horizontal declination strips of fixed height. Each
//! strip keeps its sources sorted by right ascension, so a radius search
//! touches only the strips spanned by `dec ± r` and, inside each strip, a
//! binary-searched RA window of half-width `asin(sin r / cos dec)`.

use std::collections::HashMap;
use std::ops::Range;
use std::time::Instant;

use crate::catalog::{
    chord, chord_to_degrees, zone_of_unchecked, FrameBatch, SkyPoint, SourceRecord,
};
use crate::error::{Error, Result};

/// Beyond this |dec| the RA window degenerates and whole strips are scanned.
const POLE_CLAMP_DEG: f64 = 89.9;

/// Slack added to search windows so floating-point rounding never prunes a
/// source that sits exactly on a window edge.
const WINDOW_SLACK_DEG: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IndexEntry {
    pub id: u64,
    pub ra: f64,
    pub dec: f64,
    pub v: [f64; 3],
}

/// Immutable strip index over a set of sources keyed by their `id`.
#[derive(Clone, Debug)]
pub struct ZoneIndex {
    zone_height_deg: f64,
    first_zone: u16,
    /// `offsets[k]..offsets[k + 1]` is zone `first_zone + k` in `entries`.
    offsets: Vec<usize>,
    entries: Vec<IndexEntry>,
    ras: Vec<f64>,
}

impl ZoneIndex {
    pub fn build(records: &[SourceRecord], zone_height_deg: f64) -> Self {
        let entries = records.iter().map(|r| {
            (
                zone_of_unchecked(r.dec, zone_height_deg),
                IndexEntry {
                    id: r.id,
                    ra: r.ra,
                    dec: r.dec,
                    v: [r.x, r.y, r.z],
                },
            )
        });
        Self::from_zoned(entries.collect(), zone_height_deg)
    }

    fn from_zoned(mut zoned: Vec<(u16, IndexEntry)>, zone_height_deg: f64) -> Self {
        zoned.sort_unstable_by(|(za, a), (zb, b)| {
            za.cmp(zb).then(a.ra.total_cmp(&b.ra)).then(a.id.cmp(&b.id))
        });
        let (first_zone, offsets) = match (zoned.first(), zoned.last()) {
            (Some(&(lo, _)), Some(&(hi, _))) => {
                let span = usize::from(hi - lo) + 1;
                let mut offsets = vec![0usize; span + 1];
                for (zone, _) in &zoned {
                    offsets[usize::from(zone - lo) + 1] += 1;
                }
                for k in 1..offsets.len() {
                    offsets[k] += offsets[k - 1];
                }
                (lo, offsets)
            }
            _ => (0, vec![0]),
        };
        let entries: Vec<IndexEntry> = zoned.into_iter().map(|(_, e)| e).collect();
        let ras = entries.iter().map(|e| e.ra).collect();
        ZoneIndex {
            zone_height_deg,
            first_zone,
            offsets,
            entries,
            ras,
        }
    }

    pub fn zone_height_deg(&self) -> f64 {
        self.zone_height_deg
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of non-empty zones.
    pub fn zone_count(&self) -> usize {
        self.offsets.windows(2).filter(|w| w[1] > w[0]).count()
    }

    fn zone_range(&self, zone: u16) -> Range<usize> {
        if self.entries.is_empty() || zone < self.first_zone {
            return 0..0;
        }
        let k = usize::from(zone - self.first_zone);
        if k + 1 >= self.offsets.len() {
            return 0..0;
        }
        self.offsets[k]..self.offsets[k + 1]
    }

    /// Entries of one zone, sorted by ra.
    pub fn zone(&self, zone: u16) -> &[IndexEntry] {
        &self.entries[self.zone_range(zone)]
    }

    /// Non-empty zones in ascending order.
    pub fn zones(&self) -> impl Iterator<Item = (u16, &[IndexEntry])> + '_ {
        self.offsets.windows(2).enumerate().filter_map(|(k, w)| {
            (w[1] > w[0]).then(|| (self.first_zone + k as u16, &self.entries[w[0]..w[1]]))
        })
    }

    /// Visits every entry within `radius_deg` of the point, passing its
    /// separation in degrees.
    pub fn for_each_within(
        &self,
        ra: f64,
        dec: f64,
        v: &[f64; 3],
        radius_deg: f64,
        mut visit: impl FnMut(&IndexEntry, f64),
    ) {
        if self.entries.is_empty() {
            return;
        }
        let h = self.zone_height_deg;
        let lo_zone = zone_of_unchecked((dec - radius_deg - WINDOW_SLACK_DEG).max(-90.0), h);
        let hi_zone = zone_of_unchecked((dec + radius_deg + WINDOW_SLACK_DEG).min(90.0), h);
        let last_zone = self.first_zone + (self.offsets.len() - 2) as u16;
        if hi_zone < self.first_zone || lo_zone > last_zone {
            return;
        }
        let lo_zone = lo_zone.max(self.first_zone);
        let hi_zone = hi_zone.min(last_zone);

        let half_width = ra_half_width(dec, radius_deg);
        let mut scan = |range: Range<usize>| {
            for entry in &self.entries[range] {
                let sep = chord_to_degrees(chord(v, &entry.v));
                if sep <= radius_deg {
                    visit(entry, sep);
                }
            }
        };
        for zone in lo_zone..=hi_zone {
            let zr = self.zone_range(zone);
            if zr.is_empty() {
                continue;
            }
            let Some(alpha) = half_width else {
                scan(zr);
                continue;
            };
            let ras = &self.ras[zr.clone()];
            let window = |lo: f64, hi: f64| {
                let start = ras.partition_point(|&x| x < lo);
                let end = ras.partition_point(|&x| x <= hi);
                zr.start + start..zr.start + end.max(start)
            };
            let (lo, hi) = (ra - alpha, ra + alpha);
            if lo < 0.0 {
                scan(window(0.0, hi));
                scan(window(lo + 360.0, 360.0));
            } else if hi >= 360.0 {
                scan(window(lo, 360.0));
                scan(window(0.0, hi - 360.0));
            } else {
                scan(window(lo, hi));
            }
        }
    }

    /// All entries within the radius as `(id, separation)`, ordered by
    /// separation then id.
    pub fn cone(&self, center: &impl SkyPoint, radius_deg: f64) -> Vec<(u64, f64)> {
        let v = center.unit_vector();
        let c = crate::catalog::cartesian_to_radec(v);
        let mut hits = Vec::new();
        self.for_each_within(c.ra, c.dec, &v, radius_deg, |e, sep| hits.push((e.id, sep)));
        hits.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        hits
    }
}

/// RA half-width of the search window at this declination, or `None` when
/// the window wraps the pole and the whole strip must be scanned.
fn ra_half_width(dec: f64, radius_deg: f64) -> Option<f64> {
    if dec.abs() > POLE_CLAMP_DEG || dec.abs() + radius_deg >= 90.0 {
        return None;
    }
    let ratio = radius_deg.to_radians().sin() / dec.to_radians().cos();
    if ratio >= 1.0 {
        return None;
    }
    let alpha = ratio.asin().to_degrees() * (1.0 + 1e-9) + WINDOW_SLACK_DEG;
    (alpha < 180.0).then_some(alpha)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchPair {
    pub record_id: u64,
    pub star_id: u64,
    pub separation_deg: f64,
}

/// Outcome of joining one frame against the template.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MatchResult {
    pub imageid: u32,
    /// In frame record order.
    pub matched: Vec<MatchPair>,
    /// Frame record ids with no template star in range (transient candidates).
    pub unmatched: Vec<u64>,
    /// Records that had more than one template star in range.
    pub ambiguous_count: usize,
}

impl MatchResult {
    /// Matched star id per frame record, in frame order. Fails if the result
    /// does not partition the frame's record ids.
    pub fn assignments(&self, frame: &FrameBatch) -> Result<Vec<Option<u64>>> {
        let mismatch = |detail: String| Error::Mismatch {
            imageid: frame.imageid,
            detail,
        };
        if self.matched.len() + self.unmatched.len() != frame.records.len() {
            return Err(mismatch(format!(
                "{} matched + {} unmatched for {} records",
                self.matched.len(),
                self.unmatched.len(),
                frame.records.len()
            )));
        }
        // Fast path: both lists in frame order.
        let mut out = Vec::with_capacity(frame.records.len());
        let (mut m, mut u) = (0, 0);
        for record in &frame.records {
            if m < self.matched.len() && self.matched[m].record_id == record.id {
                out.push(Some(self.matched[m].star_id));
                m += 1;
            } else if u < self.unmatched.len() && self.unmatched[u] == record.id {
                out.push(None);
                u += 1;
            } else {
                break;
            }
        }
        if out.len() == frame.records.len() {
            return Ok(out);
        }

        let mut lookup: HashMap<u64, Option<u64>> = HashMap::with_capacity(frame.records.len());
        for pair in &self.matched {
            if lookup.insert(pair.record_id, Some(pair.star_id)).is_some() {
                return Err(mismatch(format!("record {} listed twice", pair.record_id)));
            }
        }
        for &id in &self.unmatched {
            if lookup.insert(id, None).is_some() {
                return Err(mismatch(format!("record {id} listed twice")));
            }
        }
        frame
            .records
            .iter()
            .map(|r| {
                lookup
                    .get(&r.id)
                    .copied()
                    .ok_or_else(|| mismatch(format!("record {} missing from result", r.id)))
            })
            .collect()
    }
}

fn check_radius(radius_deg: f64) -> Result<()> {
    if radius_deg > 0.0 && radius_deg <= 90.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "match radius must be in (0, 90] degrees, got {radius_deg}"
        )))
    }
}

struct Joined {
    nearest: Option<(u64, f64)>,
    ambiguous: bool,
}

fn join_one(record: &SourceRecord, index: &ZoneIndex, radius_deg: f64) -> Joined {
    let mut nearest: Option<(u64, f64)> = None;
    let mut hits = 0usize;
    index.for_each_within(
        record.ra,
        record.dec,
        &[record.x, record.y, record.z],
        radius_deg,
        |entry, sep| {
            hits += 1;
            let better = match nearest {
                None => true,
                Some((id, best)) => sep < best || (sep == best && entry.id < id),
            };
            if better {
                nearest = Some((entry.id, sep));
            }
        },
    );
    Joined {
        nearest,
        ambiguous: hits > 1,
    }
}

fn collect(imageid: u32, records: &[SourceRecord], joined: Vec<Joined>) -> MatchResult {
    let mut result = MatchResult {
        imageid,
        ..MatchResult::default()
    };
    for (record, j) in records.iter().zip(joined) {
        if j.ambiguous {
            result.ambiguous_count += 1;
        }
        match j.nearest {
            Some((star_id, separation_deg)) => result.matched.push(MatchPair {
                record_id: record.id,
                star_id,
                separation_deg,
            }),
            None => result.unmatched.push(record.id),
        }
    }
    result
}

/// Matches every frame record to its nearest template star within
/// `radius_deg` (ties go to the smaller star id).
pub fn range_join(frame: &FrameBatch, index: &ZoneIndex, radius_deg: f64) -> Result<MatchResult> {
    check_radius(radius_deg)?;
    let joined = frame
        .records
        .iter()
        .map(|r| join_one(r, index, radius_deg))
        .collect();
    Ok(collect(frame.imageid, &frame.records, joined))
}

/// [`range_join`] split over `workers` threads; the result is identical for
/// any worker count.
pub fn range_join_parallel(
    frame: &FrameBatch,
    index: &ZoneIndex,
    radius_deg: f64,
    workers: usize,
) -> Result<MatchResult> {
    check_radius(radius_deg)?;
    let workers = workers.max(1);
    if workers == 1 || frame.records.len() < 2 * workers {
        return range_join(frame, index, radius_deg);
    }
    let chunk = frame.records.len().div_ceil(workers);
    let joined: Vec<Joined> = std::thread::scope(|s| {
        let handles: Vec<_> = frame
            .records
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|r| join_one(r, index, radius_deg))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("join worker panicked"))
            .collect()
    });
    Ok(collect(frame.imageid, &frame.records, joined))
}

/// One wall-clock measurement of index build plus join.
#[derive(Clone, Debug, PartialEq)]
pub struct ThroughputSample {
    pub frame_size: usize,
    pub template_size: usize,
    pub radius_deg: f64,
    pub build_s: f64,
    pub join_s: f64,
    pub matched: usize,
    pub records_per_s: f64,
}

impl ThroughputSample {
    pub fn total_s(&self) -> f64 {
        self.build_s + self.join_s
    }

    pub const CSV_HEADER: &'static str =
        "frame_size,template_size,radius_deg,build_s,join_s,total_s,matched,records_per_s";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6},{:.6},{},{:.1}",
            self.frame_size,
            self.template_size,
            self.radius_deg,
            self.build_s,
            self.join_s,
            self.total_s(),
            self.matched,
            self.records_per_s
        )
    }
}

/// Times `ZoneIndex::build` + [`range_join`] on synthetic data at fixed sky
/// density: the template footprint scales with `template_size`, and the
/// frame observes the first `frame_size` template stars (plus padding
/// stars when the frame is larger than the template).
pub fn crossmatch_throughput(
    frame_size: usize,
    template_size: usize,
    radius_deg: f64,
    seed: u64,
) -> Result<ThroughputSample> {
    use crate::skygen::{build_template, Footprint, FrameClock, SkyModel};

    check_radius(radius_deg)?;
    let config = crate::catalog::EngineConfig::default();
    // ~1264 stars/deg^2, the full-density per-camera field.
    let area_per_star = 138.9 / crate::catalog::SOURCES_PER_FRAME_FULL as f64;
    let stars = template_size.max(frame_size);
    let side = (area_per_star * stars.max(1) as f64).sqrt().max(0.01);
    let model = SkyModel {
        seed,
        star_count: stars,
        footprint: Footprint::new(100.0, 100.0 + side, 10.0, 10.0 + side)?,
        ..SkyModel::default()
    };
    let full = build_template(&model, &config)?;
    let clock = FrameClock::new(0.0, config.cadence_s)?;
    let mut frame = crate::skygen::observe_frame(&full, &model, &config, &clock, 0.0, &[])?;
    frame.records.truncate(frame_size);
    let template_records: Vec<SourceRecord> =
        full.records.iter().take(template_size).cloned().collect();

    let start = Instant::now();
    let index = ZoneIndex::build(&template_records, config.zone_height_deg);
    let build_s = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let result = range_join(&frame, &index, radius_deg)?;
    let join_s = start.elapsed().as_secs_f64();
    let total = build_s + join_s;
    Ok(ThroughputSample {
        frame_size,
        template_size,
        radius_deg,
        build_s,
        join_s,
        matched: result.matched.len(),
        records_per_s: if total > 0.0 {
            frame_size as f64 / total
        } else {
            0.0
        },
    })
}
