//! Online transient detection over sliding windows, and offline period
//! search on stored curves.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use crate::catalog::{angular_separation, Epoch, FrameBatch, SkyCoord, DEFAULT_MATCH_RADIUS_DEG};
use crate::error::{Error, Result};
use crate::lightcurve::LightCurve;

pub const DEFAULT_WINDOW: usize = 40;
pub const DEFAULT_MIN_POINTS: usize = 10;
pub const DEFAULT_K: f64 = 5.0;
pub const DEFAULT_PERSISTENCE: u32 = 2;
/// Shortest curve the periodogram accepts.
pub const MIN_PERIOD_POINTS: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct OnlineConfig {
    /// Points kept per star (W).
    pub window: usize,
    /// No alert until the window holds this many points.
    pub min_points: usize,
    /// Alert threshold in sigma.
    pub k: f64,
    /// Consecutive frames an unmatched detection must persist.
    pub persistence_n: u32,
    /// Radius linking unmatched detections across frames.
    pub match_radius_deg: f64,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        OnlineConfig {
            window: DEFAULT_WINDOW,
            min_points: DEFAULT_MIN_POINTS,
            k: DEFAULT_K,
            persistence_n: DEFAULT_PERSISTENCE,
            match_radius_deg: DEFAULT_MATCH_RADIUS_DEG,
        }
    }
}

impl OnlineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 || self.min_points < 2 || self.min_points > self.window {
            return Err(Error::Config(format!(
                "need 2 <= min_points <= window, got min_points {} window {}",
                self.min_points, self.window
            )));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::Config(format!("k must be positive, got {}", self.k)));
        }
        if self.persistence_n == 0 {
            return Err(Error::Config("persistence_n must be at least 1".into()));
        }
        if !(self.match_radius_deg > 0.0 && self.match_radius_deg <= 90.0) {
            return Err(Error::Config(format!(
                "match_radius_deg must be in (0, 90], got {}",
                self.match_radius_deg
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AlertKind {
    NewSource,
    Brightening,
    Dimming,
}

impl AlertKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AlertKind::NewSource => "new_source",
            AlertKind::Brightening => "brightening",
            AlertKind::Dimming => "dimming",
        }
    }
}

impl fmt::Display for AlertKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlertKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "new_source" => Ok(AlertKind::NewSource),
            "brightening" => Ok(AlertKind::Brightening),
            "dimming" => Ok(AlertKind::Dimming),
            other => Err(Error::Config(format!("unknown alert kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Alert {
    pub kind: AlertKind,
    /// Template star for brightness changes.
    pub star_id: Option<u64>,
    pub position: SkyCoord,
    pub epoch: Epoch,
    /// Deviation in sigma; for new sources, the number of frames seen.
    pub score: f64,
}

impl Alert {
    pub const CSV_HEADER: &'static str = "kind,star_id,ra,dec,epoch,score";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.8},{:.8},{},{:.4}",
            self.kind,
            self.star_id.map(|s| s.to_string()).unwrap_or_default(),
            self.position.ra,
            self.position.dec,
            self.epoch,
            self.score
        )
    }

    fn order_key(&self) -> (u64, AlertKind, u64) {
        (self.epoch.to_bits(), self.kind, self.star_id.unwrap_or(u64::MAX))
    }
}

pub fn write_alerts_csv(alerts: &[Alert]) -> String {
    let mut out = String::from(Alert::CSV_HEADER);
    out.push('\n');
    for a in alerts {
        out.push_str(&a.csv_row());
        out.push('\n');
    }
    out
}

pub fn parse_alerts_csv(text: &str) -> Result<Vec<Alert>> {
    let mut lines = text.lines();
    if lines.next() != Some(Alert::CSV_HEADER) {
        return Err(Error::Config("alerts file must start with the alerts header".into()));
    }
    let bad = |n: usize| Error::Config(format!("malformed alerts line {}", n + 2));
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(n, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad(n));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(n));
            Ok(Alert {
                kind: f[0].parse()?,
                star_id: if f[1].is_empty() {
                    None
                } else {
                    Some(f[1].parse().map_err(|_| bad(n))?)
                },
                position: SkyCoord {
                    ra: num(f[2])?,
                    dec: num(f[3])?,
                },
                epoch: num(f[4])?,
                score: num(f[5])?,
            })
        })
        .collect()
}

/// Last W magnitudes of one star with their mean and sample variance.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowState {
    pub star_id: u64,
    window: VecDeque<(Epoch, f64)>,
    capacity: usize,
    baseline_mean: f64,
    baseline_var: f64,
}

impl WindowState {
    pub fn new(star_id: u64, capacity: usize) -> Self {
        WindowState {
            star_id,
            window: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
            baseline_mean: 0.0,
            baseline_var: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = &(Epoch, f64)> + '_ {
        self.window.iter()
    }

    pub fn baseline_mean(&self) -> f64 {
        self.baseline_mean
    }

    pub fn baseline_var(&self) -> f64 {
        self.baseline_var
    }

    pub fn last_epoch(&self) -> Option<Epoch> {
        self.window.back().map(|p| p.0)
    }

    /// Scores a point against the current window, then slides it in.
    ///
    /// Alerts when the window holds at least `min_points` and
    /// `|mag - mean| > k * sqrt(var + mag_error^2)`.
    pub fn update(&mut self, epoch: Epoch, mag: f64, mag_error: f64, config: &OnlineConfig) -> Result<Option<Alert>> {
        if let Some(last) = self.last_epoch() {
            if !(epoch > last) {
                return Err(Error::Sequencing {
                    epoch,
                    last,
                    context: format!("online window of star {}", self.star_id),
                });
            }
        }
        let mut alert = None;
        if self.window.len() >= config.min_points {
            let sigma = (self.baseline_var + mag_error * mag_error).sqrt();
            let deviation = mag - self.baseline_mean;
            if sigma > 0.0 && deviation.abs() > config.k * sigma {
                alert = Some(Alert {
                    kind: if deviation < 0.0 {
                        AlertKind::Brightening
                    } else {
                        AlertKind::Dimming
                    },
                    star_id: Some(self.star_id),
                    position: SkyCoord { ra: 0.0, dec: 0.0 },
                    epoch,
                    score: deviation.abs() / sigma,
                });
            }
        }
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back((epoch, mag));
        self.recompute();
        Ok(alert)
    }

    fn recompute(&mut self) {
        let n = self.window.len() as f64;
        let mean = self.window.iter().map(|p| p.1).sum::<f64>() / n;
        self.baseline_mean = mean;
        self.baseline_var = if self.window.len() > 1 {
            self.window.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
    }
}

/// Window states for every star of one partition.
#[derive(Clone, Debug)]
pub struct OnlineDetector {
    config: OnlineConfig,
    states: HashMap<u64, WindowState>,
}

impl OnlineDetector {
    pub fn new(config: OnlineConfig) -> Result<Self> {
        config.validate()?;
        Ok(OnlineDetector {
            config,
            states: HashMap::new(),
        })
    }

    pub fn config(&self) -> &OnlineConfig {
        &self.config
    }

    pub fn state(&self, star_id: u64) -> Option<&WindowState> {
        self.states.get(&star_id)
    }

    pub fn observe(&mut self, star_id: u64, epoch: Epoch, mag: f64, mag_error: f64) -> Result<Option<Alert>> {
        let window = self.config.window;
        self.states
            .entry(star_id)
            .or_insert_with(|| WindowState::new(star_id, window))
            .update(epoch, mag, mag_error, &self.config)
    }

    /// Feeds every matched record of a frame (`assignments` from
    /// `MatchResult::assignments`). A star matched more than once uses its
    /// lowest measurement id. Alerts come back in star order.
    pub fn process_frame(&mut self, frame: &FrameBatch, assignments: &[Option<u64>]) -> Result<Vec<Alert>> {
        let mut chosen: HashMap<u64, usize> = HashMap::with_capacity(assignments.len());
        for (i, star) in assignments.iter().enumerate() {
            if let Some(star) = *star {
                chosen
                    .entry(star)
                    .and_modify(|j| {
                        if frame.records[i].id < frame.records[*j].id {
                            *j = i;
                        }
                    })
                    .or_insert(i);
            }
        }
        let mut alerts = Vec::new();
        for (star, i) in chosen {
            let r = &frame.records[i];
            if let Some(mut alert) = self.observe(star, frame.epoch, r.calmag, r.mag_error)? {
                alert.position = r.coord();
                alerts.push(alert);
            }
        }
        alerts.sort_by_key(Alert::order_key);
        Ok(alerts)
    }
}

#[derive(Clone, Debug)]
struct Track {
    position: SkyCoord,
    frames: u32,
}

/// Links unmatched detections across consecutive frames and alerts once a
/// position has persisted for `persistence_n` frames.
#[derive(Clone, Debug)]
pub struct NewSourceTracker {
    persistence_n: u32,
    radius_deg: f64,
    /// Tracks seen in the previous frame, sorted by dec.
    tracks: Vec<Track>,
}

impl NewSourceTracker {
    pub fn new(config: &OnlineConfig) -> Result<Self> {
        config.validate()?;
        Ok(NewSourceTracker {
            persistence_n: config.persistence_n,
            radius_deg: config.match_radius_deg,
            tracks: Vec::new(),
        })
    }

    pub fn active_tracks(&self) -> usize {
        self.tracks.len()
    }

    /// Processes the unmatched detections of one frame, in the given order.
    /// Each detection continues the nearest unclaimed track of the previous
    /// frame within the radius; tracks that are not continued end.
    pub fn process_frame(&mut self, epoch: Epoch, unmatched: &[SkyCoord]) -> Vec<Alert> {
        let mut claimed = vec![false; self.tracks.len()];
        let mut next = Vec::with_capacity(unmatched.len());
        let mut alerts = Vec::new();
        for pos in unmatched {
            let lo = self
                .tracks
                .partition_point(|t| t.position.dec < pos.dec - self.radius_deg);
            let mut best: Option<(usize, f64)> = None;
            for (j, t) in self.tracks.iter().enumerate().skip(lo) {
                if t.position.dec > pos.dec + self.radius_deg {
                    break;
                }
                if claimed[j] {
                    continue;
                }
                let sep = angular_separation(&t.position, pos);
                if sep <= self.radius_deg && best.is_none_or(|(_, b)| sep < b) {
                    best = Some((j, sep));
                }
            }
            let frames = match best {
                Some((j, _)) => {
                    claimed[j] = true;
                    self.tracks[j].frames + 1
                }
                None => 1,
            };
            if frames == self.persistence_n {
                alerts.push(Alert {
                    kind: AlertKind::NewSource,
                    star_id: None,
                    position: *pos,
                    epoch,
                    score: f64::from(frames),
                });
            }
            next.push(Track {
                position: *pos,
                frames,
            });
        }
        next.sort_by(|a, b| a.position.dec.total_cmp(&b.position.dec));
        self.tracks = next;
        alerts
    }
}

/// Linear frequency grid, inclusive of both ends.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrequencyGrid {
    pub f_min: f64,
    pub f_max: f64,
    pub n: usize,
}

impl FrequencyGrid {
    pub fn new(f_min: f64, f_max: f64, n: usize) -> Result<Self> {
        let grid = FrequencyGrid { f_min, f_max, n };
        grid.validate()?;
        Ok(grid)
    }

    /// From one cycle per span up to the Nyquist rate of the cadence,
    /// sampled `oversample` times finer than the natural resolution 1/span.
    pub fn auto(span_s: f64, cadence_s: f64, oversample: f64) -> Result<Self> {
        if !(span_s > 0.0 && cadence_s > 0.0 && oversample >= 1.0) {
            return Err(Error::Config(format!(
                "auto grid needs positive span and cadence and oversample >= 1, got {span_s}, {cadence_s}, {oversample}"
            )));
        }
        let f_min = 1.0 / span_s;
        let f_max = 0.5 / cadence_s;
        let n = ((f_max - f_min) * span_s * oversample).ceil() as usize + 1;
        FrequencyGrid::new(f_min, f_max.max(f_min), n.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.f_min > 0.0
            && self.f_min.is_finite()
            && self.f_max.is_finite()
            && self.f_max >= self.f_min
            && self.n >= 1
            && (self.n > 1 || self.f_max == self.f_min);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid frequency grid {self:?}")))
        }
    }

    pub fn frequency(&self, i: usize) -> f64 {
        if self.n == 1 {
            self.f_min
        } else {
            self.f_min + (self.f_max - self.f_min) * i as f64 / (self.n - 1) as f64
        }
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.frequency(i)).collect()
    }

    /// Number of independent frequencies the grid spans for a curve of
    /// length `span_s`.
    pub fn independent_frequencies(&self, span_s: f64) -> f64 {
        ((self.f_max - self.f_min) * span_s).ceil().max(1.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Periodogram {
    pub frequencies: Vec<f64>,
    pub power: Vec<f64>,
    pub best_frequency: f64,
    pub best_period: f64,
    pub best_power: f64,
}

impl Periodogram {
    pub const CSV_HEADER: &'static str = "frequency,power";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for (f, p) in self.frequencies.iter().zip(&self.power) {
            out.push_str(&format!("{f},{p}\n"));
        }
        out
    }
}

/// Normalized Lomb-Scargle periodogram of a light curve's calibrated
/// magnitudes.
pub fn period_search(curve: &LightCurve, grid: &FrequencyGrid) -> Result<Periodogram> {
    lomb_scargle(&curve.epochs(), &curve.mags(), grid)
}

/// Normalized Lomb-Scargle periodogram of samples `y` at times `t`.
///
/// Power is mean-subtracted and divided by twice the sample variance, so a
/// pure sinusoid peaks near N/2 and a constant series has zero power
/// everywhere.
pub fn lomb_scargle(t: &[f64], y: &[f64], grid: &FrequencyGrid) -> Result<Periodogram> {
    grid.validate()?;
    if t.len() != y.len() {
        return Err(Error::Config(format!(
            "{} times but {} values",
            t.len(),
            y.len()
        )));
    }
    if t.len() < MIN_PERIOD_POINTS {
        return Err(Error::InsufficientData {
            needed: MIN_PERIOD_POINTS,
            got: t.len(),
        });
    }
    if t.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Config("curve contains non-finite values".into()));
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let dy: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let var = dy.iter().map(|v| v * v).sum::<f64>() / (n - 1.0);
    // shift times to curb phase round-off at large epochs
    let t0 = t[0];
    let ts: Vec<f64> = t.iter().map(|v| v - t0).collect();

    let frequencies = grid.frequencies();
    let mut power = Vec::with_capacity(frequencies.len());
    for &f in &frequencies {
        if var <= 0.0 {
            power.push(0.0);
            continue;
        }
        let w = std::f64::consts::TAU * f;
        let (mut yc, mut ys, mut cc, mut ss, mut cs) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&ti, &yi) in ts.iter().zip(&dy) {
            let (s, c) = (w * ti).sin_cos();
            yc += yi * c;
            ys += yi * s;
            cc += c * c;
            ss += s * s;
            cs += c * s;
        }
        // rotate to the time offset tau that decouples the two terms
        let two_wtau = (2.0 * cs).atan2(cc - ss);
        let (s2, c2) = two_wtau.sin_cos();
        let (st, ct) = (0.5 * two_wtau).sin_cos();
        let yc_t = yc * ct + ys * st;
        let ys_t = ys * ct - yc * st;
        let cc_t = 0.5 * (n + c2 * (cc - ss) + s2 * 2.0 * cs);
        let ss_t = n - cc_t;
        let mut p = 0.0;
        if cc_t > 1e-12 {
            p += yc_t * yc_t / cc_t;
        }
        if ss_t > 1e-12 {
            p += ys_t * ys_t / ss_t;
        }
        power.push(p / (2.0 * var));
    }
    let (best, best_power) = power
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, p)| if p > acc.1 { (i, p) } else { acc });
    let best_frequency = frequencies[best];
    Ok(Periodogram {
        best_frequency,
        best_period: 1.0 / best_frequency,
        best_power,
        frequencies,
        power,
    })
}

/// Power a periodogram over `independent` frequencies exceeds by chance
/// with probability `fap`.
pub fn false_alarm_level(fap: f64, independent: f64) -> Result<f64> {
    if !(fap > 0.0 && fap < 1.0 && independent >= 1.0) {
        return Err(Error::Config(format!(
            "false alarm level needs fap in (0, 1) and >= 1 frequency, got {fap}, {independent}"
        )));
    }
    Ok(-(1.0 - (1.0 - fap).powf(1.0 / independent)).ln())
}
