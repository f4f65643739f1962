//! Per-star light curves, built live from match results or materialized
//! from stored history.

use std::collections::HashMap;

use crate::catalog::{Epoch, FrameBatch, SourceRecord};
use crate::crossmatch::MatchResult;
use crate::error::{Error, Result};
use crate::store::{StoreReader, StoredRecord};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub epoch: Epoch,
    pub calmag: f64,
    pub mag_error: f64,
    pub flux: f64,
    pub flux_err: f64,
    /// Measurement the point came from.
    pub record_id: u64,
}

impl CurvePoint {
    pub fn from_record(record: &SourceRecord, epoch: Epoch) -> Self {
        CurvePoint {
            epoch,
            calmag: record.calmag,
            mag_error: record.mag_error,
            flux: record.flux,
            flux_err: record.flux_err,
            record_id: record.id,
        }
    }
}

/// Time-ordered photometry of one template star.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LightCurve {
    pub star_id: u64,
    pub points: Vec<CurvePoint>,
}

impl LightCurve {
    pub fn new(star_id: u64) -> Self {
        LightCurve {
            star_id,
            points: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// First and last epoch.
    pub fn span(&self) -> Option<(Epoch, Epoch)> {
        Some((self.points.first()?.epoch, self.points.last()?.epoch))
    }

    pub fn epochs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.epoch).collect()
    }

    pub fn mags(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.calmag).collect()
    }

    pub const CSV_HEADER: &'static str = "epoch,calmag,mag_error,flux,flux_err";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                p.epoch, p.calmag, p.mag_error, p.flux, p.flux_err
            ));
        }
        out
    }

    /// Builds a curve from stored records of one star. Records of the same
    /// epoch collapse to the one with the lowest measurement id.
    pub fn from_stored(star_id: u64, mut records: Vec<StoredRecord>) -> Self {
        records.sort_by(|a, b| a.epoch.total_cmp(&b.epoch).then(a.record.id.cmp(&b.record.id)));
        let mut points: Vec<CurvePoint> = Vec::with_capacity(records.len());
        for r in &records {
            if points.last().is_some_and(|p| p.epoch == r.epoch) {
                continue;
            }
            points.push(CurvePoint::from_record(&r.record, r.epoch));
        }
        LightCurve { star_id, points }
    }
}

/// Half-open epoch interval `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRange {
    pub start: Epoch,
    pub end: Epoch,
}

impl EpochRange {
    pub fn new(start: Epoch, end: Epoch) -> Result<Self> {
        if start.is_nan() || end.is_nan() || start > end {
            return Err(Error::Config(format!("invalid epoch range [{start}, {end})")));
        }
        Ok(EpochRange { start, end })
    }

    pub fn all() -> Self {
        EpochRange {
            start: f64::NEG_INFINITY,
            end: f64::INFINITY,
        }
    }

    pub fn contains(&self, epoch: Epoch) -> bool {
        self.start <= epoch && epoch < self.end
    }
}

/// What one call to [`CurveSet::append_points`] did.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AppendSummary {
    pub points: usize,
    pub unmatched: usize,
    /// Extra records matched to a star that already got a point this frame.
    pub duplicates: usize,
}

/// Live curves for every star a partition has seen.
#[derive(Clone, Debug, Default)]
pub struct CurveSet {
    curves: HashMap<u64, LightCurve>,
    /// Points kept per star; 0 keeps everything.
    limit: usize,
}

impl CurveSet {
    pub fn new() -> Self {
        CurveSet::default()
    }

    /// A set that keeps only the newest `limit` points of each curve; the
    /// full history stays in the store.
    pub fn bounded(limit: usize) -> Self {
        CurveSet {
            curves: HashMap::new(),
            limit,
        }
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn get(&self, star_id: u64) -> Option<&LightCurve> {
        self.curves.get(&star_id)
    }

    pub fn total_points(&self) -> usize {
        self.curves.values().map(LightCurve::len).sum()
    }

    /// Star ids in ascending order.
    pub fn star_ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.curves.keys().copied().collect();
        ids.sort_unstable();
        ids
    }

    /// Appends one point per matched star. When several records of the frame
    /// match the same star, the lowest measurement id wins. Nothing is
    /// changed if any star would go back in time.
    pub fn append_points(&mut self, frame: &FrameBatch, matches: &MatchResult) -> Result<AppendSummary> {
        if matches.imageid != frame.imageid {
            return Err(Error::Mismatch {
                imageid: frame.imageid,
                detail: format!("result is for image {}", matches.imageid),
            });
        }
        let assignments = matches.assignments(frame)?;
        let mut chosen: HashMap<u64, &SourceRecord> = HashMap::with_capacity(matches.matched.len());
        let mut summary = AppendSummary::default();
        for (record, star) in frame.records.iter().zip(&assignments) {
            let Some(star) = *star else {
                summary.unmatched += 1;
                continue;
            };
            if let Some(last) = self.curves.get(&star).and_then(|c| c.points.last()) {
                if !(frame.epoch > last.epoch) {
                    return Err(Error::Sequencing {
                        epoch: frame.epoch,
                        last: last.epoch,
                        context: format!("light curve of star {star}"),
                    });
                }
            }
            match chosen.entry(star) {
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(record);
                }
                std::collections::hash_map::Entry::Occupied(mut e) => {
                    summary.duplicates += 1;
                    if record.id < e.get().id {
                        e.insert(record);
                    }
                }
            }
        }
        for (star, record) in chosen {
            let points = &mut self.curves.entry(star).or_insert_with(|| LightCurve::new(star)).points;
            points.push(CurvePoint::from_record(record, frame.epoch));
            if self.limit > 0 && points.len() > self.limit {
                points.remove(0);
            }
            summary.points += 1;
        }
        Ok(summary)
    }
}

/// All points of `star_id` inside `range`, gathered from the base and delta
/// layers of every given partition. Unknown stars give an empty curve.
pub fn query_curve(readers: &[StoreReader], star_id: u64, range: EpochRange) -> Result<LightCurve> {
    let mut records = Vec::new();
    for reader in readers {
        records.extend(
            reader
                .star_history(star_id)?
                .into_iter()
                .filter(|r| range.contains(r.epoch)),
        );
    }
    Ok(LightCurve::from_stored(star_id, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{image_id, measurement_id, EngineConfig};
    use crate::crossmatch::{range_join, MatchPair};
    use crate::skygen::{build_template, observe_frame, FrameClock, SkyModel};

    fn rec(id: u64, imageid: u32, mag: f64) -> SourceRecord {
        SourceRecord::from_measurement(id, imageid, 20.0, 20.0, mag, 0.02, 0.01, 25.0).unwrap()
    }

    fn frame_with(epoch: f64, seq: u32, mags: &[f64]) -> FrameBatch {
        let imageid = image_id(1, seq);
        FrameBatch {
            camera_id: 1,
            imageid,
            epoch,
            records: mags
                .iter()
                .enumerate()
                .map(|(i, &m)| rec(measurement_id(imageid, i as u32), imageid, m))
                .collect(),
        }
    }

    fn result_for(frame: &FrameBatch, stars: &[Option<u64>]) -> MatchResult {
        let mut m = MatchResult {
            imageid: frame.imageid,
            ..MatchResult::default()
        };
        for (r, s) in frame.records.iter().zip(stars) {
            match s {
                Some(s) => m.matched.push(MatchPair {
                    record_id: r.id,
                    star_id: *s,
                    separation_deg: 0.0,
                }),
                None => m.unmatched.push(r.id),
            }
        }
        m
    }

    #[test]
    fn matched_stars_grow_by_one() {
        let mut set = CurveSet::new();
        for s in 0..3u32 {
            let f = frame_with(f64::from(s) * 15.0, s, &[10.0, 11.0, 12.0]);
            let sum = set.append_points(&f, &result_for(&f, &[Some(1), Some(2), None])).unwrap();
            assert_eq!(sum.points, 2);
            assert_eq!(sum.unmatched, 1);
        }
        assert_eq!(set.get(1).unwrap().len(), 3);
        assert_eq!(set.get(2).unwrap().len(), 3);
        assert!(set.get(3).is_none());
        assert_eq!(set.get(1).unwrap().span(), Some((0.0, 30.0)));
    }

    #[test]
    fn duplicate_match_keeps_lowest_id() {
        let mut set = CurveSet::new();
        let f = frame_with(0.0, 0, &[10.0, 11.0]);
        let sum = set.append_points(&f, &result_for(&f, &[Some(7), Some(7)])).unwrap();
        assert_eq!(sum, AppendSummary { points: 1, unmatched: 0, duplicates: 1 });
        assert_eq!(set.get(7).unwrap().points[0].calmag, 10.0);
    }

    #[test]
    fn regression_leaves_set_untouched() {
        let mut set = CurveSet::new();
        let f = frame_with(30.0, 2, &[10.0]);
        set.append_points(&f, &result_for(&f, &[Some(1)])).unwrap();
        let g = frame_with(15.0, 1, &[10.0, 11.0]);
        let err = set.append_points(&g, &result_for(&g, &[Some(2), Some(1)])).unwrap_err();
        assert!(matches!(err, Error::Sequencing { .. }));
        assert!(set.get(2).is_none());
        assert_eq!(set.total_points(), 1);
    }

    #[test]
    fn points_carry_consistent_flux() {
        let mut set = CurveSet::new();
        let f = frame_with(0.0, 0, &[14.2]);
        set.append_points(&f, &result_for(&f, &[Some(1)])).unwrap();
        let p = set.get(1).unwrap().points[0];
        assert!((p.flux - crate::catalog::mag_to_flux(p.calmag, 25.0)).abs() <= 1e-9 * p.flux);
    }

    #[test]
    fn steady_star_scatter_matches_noise() {
        let config = EngineConfig::default();
        let model = SkyModel {
            star_count: 50,
            seed: 3,
            ..SkyModel::default()
        };
        let template = build_template(&model, &config).unwrap();
        let clock = FrameClock::new(0.0, config.cadence_s).unwrap();
        let mut set = CurveSet::new();
        for s in 0..1920 {
            let f = observe_frame(&template, &model, &config, &clock, clock.epoch(s), &[]).unwrap();
            let m = range_join(&f, &template.index, config.match_radius_deg).unwrap();
            set.append_points(&f, &m).unwrap();
        }
        let star = template.records[0].id;
        let curve = set.get(star).unwrap();
        assert_eq!(curve.len(), 1920);
        let mags = curve.mags();
        let mean = mags.iter().sum::<f64>() / mags.len() as f64;
        let sd = (mags.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (mags.len() - 1) as f64).sqrt();
        assert!((sd - 0.02).abs() < 0.002, "sd {sd}");
    }

    #[test]
    fn bounded_set_keeps_newest() {
        let mut set = CurveSet::bounded(2);
        for s in 0..5u32 {
            let f = frame_with(f64::from(s), s, &[10.0 + f64::from(s)]);
            set.append_points(&f, &result_for(&f, &[Some(1)])).unwrap();
        }
        assert_eq!(set.get(1).unwrap().epochs(), vec![3.0, 4.0]);
    }

    #[test]
    fn epoch_range_rules() {
        assert!(EpochRange::new(5.0, 1.0).is_err());
        assert!(EpochRange::new(f64::NAN, 1.0).is_err());
        let r = EpochRange::new(1.0, 1.0).unwrap();
        assert!(!r.contains(1.0));
        assert!(EpochRange::all().contains(-1e300));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let mut set = CurveSet::new();
        let f = frame_with(0.0, 0, &[10.0]);
        set.append_points(&f, &result_for(&f, &[Some(1)])).unwrap();
        let csv = set.get(1).unwrap().to_csv();
        assert!(csv.starts_with("epoch,calmag,mag_error,flux,flux_err\n0,10,"));
        assert_eq!(csv.lines().count(), 2);
    }
}
