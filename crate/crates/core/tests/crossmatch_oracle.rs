mod support;

use support::{brute_force_counts, brute_force_match, frame_of, haversine_deg, random_instance, record, Region};
use zonecat::crossmatch::{range_join, range_join_parallel, ZoneIndex};

const H: f64 = 0.01;

fn check(seed: u64, region: Region, n: usize, radius: f64) {
    let (template, positions) = random_instance(seed, region, n, radius, H);
    let frame = frame_of(1, 0, 0.0, &positions);
    let index = ZoneIndex::build(&template, H);
    let got = range_join(&frame, &index, radius).unwrap();
    let want = brute_force_match(&frame.records, &template, radius);
    assert_eq!(got.assignments(&frame).unwrap(), want, "seed {seed} {region:?}");
    let ambiguous = brute_force_counts(&frame.records, &template, radius)
        .into_iter()
        .filter(|&c| c > 1)
        .count();
    assert_eq!(got.ambiguous_count, ambiguous, "seed {seed} {region:?}");
    for pair in &got.matched {
        let r = frame.records.iter().find(|r| r.id == pair.record_id).unwrap();
        let s = template.iter().find(|s| s.id == pair.star_id).unwrap();
        assert!((pair.separation_deg - haversine_deg(r.ra, r.dec, s.ra, s.dec)).abs() < 1e-9);
    }
}

#[test]
fn generic_fields_match_brute_force() {
    for seed in 0..6 {
        check(seed, Region::Generic, 400, 0.003);
        check(seed + 100, Region::Generic, 300, 0.05);
    }
}

#[test]
fn zone_boundaries_match_brute_force() {
    for seed in 0..6 {
        check(seed, Region::ZoneBoundary, 500, 0.003);
        check(seed + 50, Region::ZoneBoundary, 200, 0.02);
    }
}

#[test]
fn ra_seam_matches_brute_force() {
    for seed in 0..6 {
        check(seed, Region::RaSeam, 500, 0.003);
        check(seed + 50, Region::RaSeam, 200, 0.1);
    }
}

#[test]
fn near_pole_matches_brute_force() {
    for seed in 0..6 {
        check(seed, Region::NearPole, 300, 0.003);
        check(seed + 50, Region::NearPole, 200, 0.2);
    }
}

#[test]
fn exact_pole_and_wide_radius() {
    let template = vec![
        record(1, 0.0, 90.0),
        record(2, 180.0, 89.999),
        record(3, 90.0, -89.9995),
        record(4, 359.9999, 0.0),
    ];
    let frame = frame_of(0, 0, 0.0, &[(45.0, 89.9995), (270.0, -90.0), (0.00005, 0.0), (10.0, 10.0)]);
    let index = ZoneIndex::build(&template, H);
    for radius in [0.001, 0.003, 1.0, 45.0, 90.0] {
        let got = range_join(&frame, &index, radius).unwrap();
        assert_eq!(
            got.assignments(&frame).unwrap(),
            brute_force_match(&frame.records, &template, radius),
            "radius {radius}"
        );
    }
}

#[test]
fn parallel_join_is_identical() {
    let (template, positions) = random_instance(9, Region::Generic, 2000, 0.003, H);
    let frame = frame_of(1, 0, 0.0, &positions);
    let index = ZoneIndex::build(&template, H);
    let serial = range_join(&frame, &index, 0.003).unwrap();
    for workers in [2, 3, 8] {
        assert_eq!(range_join_parallel(&frame, &index, 0.003, workers).unwrap(), serial);
    }
}

#[test]
fn cone_matches_scan() {
    let (template, _) = random_instance(4, Region::RaSeam, 1000, 0.01, H);
    let index = ZoneIndex::build(&template, H);
    let center = record(0, 0.001, 30.02);
    for radius in [0.005, 0.02, 0.3] {
        let mut got: Vec<u64> = index.cone(&center, radius).into_iter().map(|h| h.0).collect();
        got.sort_unstable();
        let want: Vec<u64> = template
            .iter()
            .filter(|s| haversine_deg(center.ra, center.dec, s.ra, s.dec) <= radius)
            .map(|s| s.id)
            .collect();
        assert_eq!(got, want);
    }
}
