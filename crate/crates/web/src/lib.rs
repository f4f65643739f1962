//! Browser demo: cross-match sky plot, online transient detection on one
//! star, and a Lomb-Scargle period search. Each export has a plain Rust
//! twin (`*_impl`) so the logic is testable off the browser.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use wasm_bindgen::prelude::*;
use zonecat::mining::{lomb_scargle, OnlineConfig, OnlineDetector};
use zonecat::skygen::{build_template, observe_frame, Footprint, FrameClock, SkyModel, TransientInjection};
use zonecat::{range_join, EngineConfig, Error, Result, SkyCoord};

const ARCSEC: f64 = 1.0 / 3600.0;
const CADENCE_S: f64 = 15.0;

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

/// One frame matched against its template over a 1°×1° patch.
#[wasm_bindgen]
pub struct SkyMatch {
    template_ra: Vec<f64>,
    template_dec: Vec<f64>,
    frame_ra: Vec<f64>,
    frame_dec: Vec<f64>,
    /// 1 if the frame record matched a template star.
    frame_matched: Vec<u8>,
    ambiguous: usize,
}

#[wasm_bindgen]
impl SkyMatch {
    #[wasm_bindgen(getter)]
    pub fn template_ra(&self) -> Vec<f64> {
        self.template_ra.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn template_dec(&self) -> Vec<f64> {
        self.template_dec.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn frame_ra(&self) -> Vec<f64> {
        self.frame_ra.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn frame_dec(&self) -> Vec<f64> {
        self.frame_dec.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn frame_matched(&self) -> Vec<u8> {
        self.frame_matched.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn matched(&self) -> usize {
        self.frame_matched.iter().filter(|&&m| m == 1).count()
    }
    #[wasm_bindgen(getter)]
    pub fn unmatched(&self) -> usize {
        self.frame_matched.len() - self.matched()
    }
    #[wasm_bindgen(getter)]
    pub fn ambiguous(&self) -> usize {
        self.ambiguous
    }
}

#[wasm_bindgen]
pub fn crossmatch_sky(
    seed: u64,
    stars: u32,
    radius_arcsec: f64,
    jitter_arcsec: f64,
    new_sources: u32,
) -> std::result::Result<SkyMatch, JsError> {
    crossmatch_sky_impl(seed, stars, radius_arcsec, jitter_arcsec, new_sources).map_err(js)
}

pub fn crossmatch_sky_impl(
    seed: u64,
    stars: u32,
    radius_arcsec: f64,
    jitter_arcsec: f64,
    new_sources: u32,
) -> Result<SkyMatch> {
    let footprint = Footprint::new(150.0, 151.0, 20.0, 21.0)?;
    let model = SkyModel {
        seed,
        camera_id: 0,
        star_count: stars as usize,
        footprint,
        astrometric_sigma_deg: jitter_arcsec * ARCSEC,
        ..SkyModel::default()
    };
    let config = EngineConfig {
        match_radius_deg: radius_arcsec * ARCSEC,
        ..EngineConfig::default()
    };
    let template = build_template(&model, &config)?;
    let clock = FrameClock::new(0.0, CADENCE_S)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e65_775f_7372_63);
    let injections = (0..new_sources)
        .map(|_| {
            let pos = SkyCoord::new(
                rng.random_range(footprint.ra_min..footprint.ra_max),
                rng.random_range(footprint.dec_min..footprint.dec_max),
            )?;
            Ok(TransientInjection::new_source(0.0, CADENCE_S, pos, 12.0))
        })
        .collect::<Result<Vec<_>>>()?;
    let frame = observe_frame(&template, &model, &config, &clock, 0.0, &injections)?;
    let result = range_join(&frame, &template.index, config.match_radius_deg)?;
    let assignments = result.assignments(&frame)?;
    Ok(SkyMatch {
        template_ra: template.records.iter().map(|r| r.ra).collect(),
        template_dec: template.records.iter().map(|r| r.dec).collect(),
        frame_ra: frame.records.iter().map(|r| r.ra).collect(),
        frame_dec: frame.records.iter().map(|r| r.dec).collect(),
        frame_matched: assignments.iter().map(|a| u8::from(a.is_some())).collect(),
        ambiguous: result.ambiguous_count,
    })
}

/// Magnitudes of one star through a night, with the frames that alerted.
#[wasm_bindgen]
pub struct OnlineTrace {
    mags: Vec<f64>,
    alert_frames: Vec<u32>,
    alert_scores: Vec<f64>,
    injected_on: u32,
    injected_off: u32,
}

#[wasm_bindgen]
impl OnlineTrace {
    #[wasm_bindgen(getter)]
    pub fn mags(&self) -> Vec<f64> {
        self.mags.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn alert_frames(&self) -> Vec<u32> {
        self.alert_frames.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn alert_scores(&self) -> Vec<f64> {
        self.alert_scores.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn injected_on(&self) -> u32 {
        self.injected_on
    }
    #[wasm_bindgen(getter)]
    pub fn injected_off(&self) -> u32 {
        self.injected_off
    }
}

/// Simulates `frames` exposures of a single star and brightens it by
/// `delta_mag` (negative is brighter) for `duration` frames from `onset`.
#[wasm_bindgen]
pub fn online_detection(
    seed: u64,
    frames: u32,
    onset: u32,
    duration: u32,
    delta_mag: f64,
    k: f64,
    window: usize,
) -> std::result::Result<OnlineTrace, JsError> {
    online_detection_impl(seed, frames, onset, duration, delta_mag, k, window).map_err(js)
}

pub fn online_detection_impl(
    seed: u64,
    frames: u32,
    onset: u32,
    duration: u32,
    delta_mag: f64,
    k: f64,
    window: usize,
) -> Result<OnlineTrace> {
    let model = SkyModel {
        seed,
        camera_id: 0,
        star_count: 1,
        footprint: Footprint::new(150.0, 150.1, 20.0, 20.1)?,
        mag_range: (11.9, 12.1),
        ..SkyModel::default()
    };
    let config = EngineConfig::default();
    let template = build_template(&model, &config)?;
    let clock = FrameClock::new(0.0, CADENCE_S)?;
    let off = onset.saturating_add(duration.max(1));
    let injection = TransientInjection::brightening(clock.epoch(onset), clock.epoch(off), &template.records[0], delta_mag);
    let online = OnlineConfig {
        k,
        window,
        min_points: OnlineConfig::default().min_points.min(window),
        ..OnlineConfig::default()
    };
    let mut detector = OnlineDetector::new(online)?;
    let mut trace = OnlineTrace {
        mags: Vec::with_capacity(frames as usize),
        alert_frames: Vec::new(),
        alert_scores: Vec::new(),
        injected_on: onset,
        injected_off: off,
    };
    for seq in 0..frames {
        let frame = observe_frame(&template, &model, &config, &clock, clock.epoch(seq), &[injection.clone()])?;
        let result = range_join(&frame, &template.index, config.match_radius_deg)?;
        let alerts = detector.process_frame(&frame, &result.assignments(&frame)?)?;
        trace.mags.push(frame.records.first().map_or(f64::NAN, |r| r.mag));
        for a in alerts {
            trace.alert_frames.push(seq);
            trace.alert_scores.push(a.score);
        }
    }
    Ok(trace)
}

/// Irregularly sampled sinusoid and its periodogram.
#[wasm_bindgen]
pub struct PeriodDemo {
    times: Vec<f64>,
    mags: Vec<f64>,
    frequencies: Vec<f64>,
    power: Vec<f64>,
    best_period: f64,
}

#[wasm_bindgen]
impl PeriodDemo {
    #[wasm_bindgen(getter)]
    pub fn times(&self) -> Vec<f64> {
        self.times.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn mags(&self) -> Vec<f64> {
        self.mags.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn frequencies(&self) -> Vec<f64> {
        self.frequencies.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn power(&self) -> Vec<f64> {
        self.power.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn best_period(&self) -> f64 {
        self.best_period
    }
}

/// `points` samples on the 15 s cadence with `dropout` of frames missing.
#[wasm_bindgen]
pub fn period_search(
    seed: u64,
    period_s: f64,
    amplitude: f64,
    noise: f64,
    points: u32,
    dropout: f64,
) -> std::result::Result<PeriodDemo, JsError> {
    period_search_impl(seed, period_s, amplitude, noise, points, dropout).map_err(js)
}

pub fn period_search_impl(
    seed: u64,
    period_s: f64,
    amplitude: f64,
    noise: f64,
    points: u32,
    dropout: f64,
) -> Result<PeriodDemo> {
    if !(period_s > 0.0 && (0.0..1.0).contains(&dropout)) {
        return Err(Error::Config(format!(
            "need period > 0 and dropout in [0, 1), got {period_s}, {dropout}"
        )));
    }
    let gauss = Normal::new(0.0, noise).map_err(|e| Error::Config(format!("noise {noise}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut times, mut mags) = (Vec::new(), Vec::new());
    let mut seq = 0u64;
    while times.len() < points as usize {
        let t = seq as f64 * CADENCE_S;
        seq += 1;
        if rng.random::<f64>() < dropout {
            continue;
        }
        times.push(t);
        mags.push(12.0 + amplitude * (std::f64::consts::TAU * t / period_s).sin() + gauss.sample(&mut rng));
    }
    let span = times.last().copied().unwrap_or(0.0) - times.first().copied().unwrap_or(0.0);
    let grid = zonecat::FrequencyGrid::auto(span, CADENCE_S, 5.0)?;
    let pg = lomb_scargle(&times, &mags, &grid)?;
    Ok(PeriodDemo {
        times,
        mags,
        frequencies: pg.frequencies,
        power: pg.power,
        best_period: pg.best_period,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sky_match_counts_new_sources_as_unmatched() {
        let m = crossmatch_sky_impl(3, 400, 10.8, 1.0, 5).unwrap();
        assert_eq!(m.template_ra.len(), 400);
        assert_eq!(m.frame_ra.len(), 405);
        assert!(m.unmatched() >= 5 - m.ambiguous.min(5));
        assert!(m.matched() >= 395);
    }

    #[test]
    fn strong_brightening_alerts_inside_the_window() {
        let t = online_detection_impl(1, 120, 60, 5, -1.0, 5.0, 40).unwrap();
        assert_eq!(t.mags.len(), 120);
        assert!(!t.alert_frames.is_empty());
        assert!(t.alert_frames.iter().all(|&f| (60..65).contains(&f)));
        let quiet = online_detection_impl(1, 120, 60, 5, 0.0, 5.0, 40).unwrap();
        assert!(quiet.alert_frames.is_empty());
    }

    #[test]
    fn period_recovered() {
        let d = period_search_impl(9, 300.0, 0.3, 0.02, 1000, 0.2).unwrap();
        assert!((d.best_period - 300.0).abs() / 300.0 < 0.01, "{}", d.best_period);
        assert!(period_search_impl(9, -1.0, 0.3, 0.02, 10, 0.0).is_err());
    }
}
