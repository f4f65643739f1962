//! Independent oracles shared by the integration tests. Nothing here uses
//! the engine's index, vector math or storage code.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zonecat::catalog::{image_id, measurement_id, FrameBatch, SourceRecord};

/// Great-circle distance in degrees from the haversine formula.
pub fn haversine_deg(ra1: f64, dec1: f64, ra2: f64, dec2: f64) -> f64 {
    let (p1, p2) = (dec1.to_radians(), dec2.to_radians());
    let dp = p2 - p1;
    let dl = (ra2 - ra1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * a.sqrt().min(1.0).asin().to_degrees()
}

/// O(n·m) nearest template star within `radius` for every frame record,
/// ties to the smaller star id.
pub fn brute_force_match(frame: &[SourceRecord], template: &[SourceRecord], radius: f64) -> Vec<Option<u64>> {
    frame
        .iter()
        .map(|r| {
            let mut best: Option<(f64, u64)> = None;
            for s in template {
                let d = haversine_deg(r.ra, r.dec, s.ra, s.dec);
                if d <= radius && best.is_none_or(|(bd, bid)| d < bd || (d == bd && s.id < bid)) {
                    best = Some((d, s.id));
                }
            }
            best.map(|b| b.1)
        })
        .collect()
}

/// Number of template stars within `radius` of each record.
pub fn brute_force_counts(frame: &[SourceRecord], template: &[SourceRecord], radius: f64) -> Vec<usize> {
    frame
        .iter()
        .map(|r| {
            template
                .iter()
                .filter(|s| haversine_deg(r.ra, r.dec, s.ra, s.dec) <= radius)
                .count()
        })
        .collect()
}

pub fn record(id: u64, ra: f64, dec: f64) -> SourceRecord {
    SourceRecord::from_measurement(id, 0, ra, dec, 12.0, 0.02, 0.01, 25.0).unwrap()
}

pub fn frame_of(camera: u16, seq: u32, epoch: f64, positions: &[(f64, f64)]) -> FrameBatch {
    let imageid = image_id(camera, seq);
    let records = positions
        .iter()
        .enumerate()
        .map(|(i, &(ra, dec))| {
            let mut r = record(measurement_id(imageid, i as u32), ra, dec);
            r.imageid = imageid;
            r
        })
        .collect();
    FrameBatch {
        camera_id: camera,
        imageid,
        epoch,
        records,
    }
}

pub fn wrap_ra(ra: f64) -> f64 {
    let r = ra.rem_euclid(360.0);
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Kinds of randomized cross-match instances.
#[derive(Clone, Copy, Debug)]
pub enum Region {
    Generic,
    /// Declinations straddling zone boundaries.
    ZoneBoundary,
    /// Right ascensions straddling 0/360.
    RaSeam,
    /// Within a degree of a pole.
    NearPole,
}

/// A random template of `n` stars and a frame of jittered copies plus
/// strays, sized so that matches, misses and ambiguities all occur.
pub fn random_instance(seed: u64, region: Region, n: usize, radius: f64, zone_h: f64) -> (Vec<SourceRecord>, Vec<(f64, f64)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = (n as f64).sqrt() * radius * 1.5;
    let draw = |rng: &mut ChaCha8Rng| -> (f64, f64) {
        match region {
            Region::Generic => (100.0 + rng.random::<f64>() * side, -20.0 + rng.random::<f64>() * side),
            Region::ZoneBoundary => {
                let k = rng.random_range(-3..=3) as f64;
                let dec = 10.0 + k * zone_h + rng.random_range(-1.5..1.5) * radius;
                (200.0 + rng.random::<f64>() * side, dec)
            }
            Region::RaSeam => (
                wrap_ra(rng.random_range(-0.5..0.5) * side),
                30.0 + rng.random::<f64>() * side * 0.5,
            ),
            Region::NearPole => {
                let sign = if seed % 2 == 0 { 1.0 } else { -1.0 };
                let dec = sign * (90.0 - rng.random::<f64>() * 3.0 * radius.max(0.01));
                (rng.random::<f64>() * 360.0, dec.clamp(-90.0, 90.0))
            }
        }
    };
    let template: Vec<SourceRecord> = (0..n)
        .map(|i| {
            let (ra, dec) = draw(&mut rng);
            record(1_000_000 + i as u64, ra, dec)
        })
        .collect();
    let mut frame = Vec::with_capacity(n);
    for s in template.iter().take(n * 3 / 4) {
        let dra = rng.random_range(-1.0..1.0) * radius;
        let ddec = rng.random_range(-1.0..1.0) * radius;
        let dec = (s.dec + ddec).clamp(-90.0, 90.0);
        frame.push((wrap_ra(s.ra + dra / dec.to_radians().cos().max(0.01)), dec));
    }
    while frame.len() < n {
        frame.push(draw(&mut rng));
    }
    (template, frame)
}
