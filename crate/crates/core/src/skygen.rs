//! Deterministic synthetic sky: template catalogs, per-exposure frames and
//! injected transients with a ground-truth log.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::catalog::{
    checked_image_id, exposure_number, measurement_id, Density, EngineConfig, Epoch, FrameBatch, SkyCoord, SourceRecord,
    CCD_PIXELS,
};
use crate::crossmatch::ZoneIndex;
use crate::error::{Error, Result};

/// Gaussian jitter is redrawn beyond this many sigma.
const TRUNCATION_SIGMA: f64 = 5.0;
const ARCSEC: f64 = 1.0 / 3600.0;

/// Dec centers of the per-camera field rows; each row holds 12 fields.
const FIELD_ROWS_DEC: [f64; 5] = [0.0, 30.0, 60.0, -30.0, -60.0];
const FIELD_HALF_HEIGHT_DEG: f64 = 6.0;
const FIELDS_PER_ROW: u16 = 12;
/// Number of distinct camera fields; camera ids run `0..CAMERA_FIELDS`.
pub const CAMERA_FIELDS: u16 = FIELD_ROWS_DEC.len() as u16 * FIELDS_PER_ROW;

/// Sky rectangle. RA may start below 0 or end above 360 to straddle the
/// seam; positions are wrapped into [0, 360).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Footprint {
    pub ra_min: f64,
    pub ra_max: f64,
    pub dec_min: f64,
    pub dec_max: f64,
}

impl Footprint {
    pub fn new(ra_min: f64, ra_max: f64, dec_min: f64, dec_max: f64) -> Result<Self> {
        let fp = Footprint {
            ra_min,
            ra_max,
            dec_min,
            dec_max,
        };
        fp.validate()?;
        Ok(fp)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.ra_min < self.ra_max
            && self.ra_max - self.ra_min <= 360.0
            && self.ra_min >= -360.0
            && self.ra_max <= 720.0
            && -90.0 <= self.dec_min
            && self.dec_min < self.dec_max
            && self.dec_max <= 90.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("empty or invalid footprint {self:?}")))
        }
    }

    pub fn ra_width(&self) -> f64 {
        self.ra_max - self.ra_min
    }

    /// Solid angle in square degrees.
    pub fn area_deg2(&self) -> f64 {
        let rad = self.ra_width().to_radians()
            * (self.dec_max.to_radians().sin() - self.dec_min.to_radians().sin());
        rad * (180.0 / std::f64::consts::PI).powi(2)
    }

    pub fn contains(&self, ra: f64, dec: f64) -> bool {
        let offset = (ra - self.ra_min).rem_euclid(360.0);
        offset < self.ra_width() && (self.dec_min..=self.dec_max).contains(&dec)
    }

    /// CCD pixel position, linear in RA offset and dec, clamped to the chip.
    pub fn pixel(&self, ra: f64, dec: f64) -> (f64, f64) {
        let max = CCD_PIXELS - 1e-6;
        let u = (ra - self.ra_min).rem_euclid(360.0) / self.ra_width() * CCD_PIXELS;
        let v = (dec - self.dec_min) / (self.dec_max - self.dec_min) * CCD_PIXELS;
        (u.clamp(0.0, max), v.clamp(0.0, max))
    }

    /// Uniform point: uniform in RA and in sin(dec).
    fn sample(&self, rng: &mut impl Rng) -> (f64, f64) {
        let ra = (self.ra_min + rng.random::<f64>() * self.ra_width()).rem_euclid(360.0);
        let (s0, s1) = (self.dec_min.to_radians().sin(), self.dec_max.to_radians().sin());
        let dec = (s0 + rng.random::<f64>() * (s1 - s0))
            .clamp(-1.0, 1.0)
            .asin()
            .to_degrees();
        (wrap_ra(ra), dec.clamp(self.dec_min, self.dec_max))
    }

    fn shrink(&self, margin_deg: f64) -> Footprint {
        let mut fp = *self;
        if fp.ra_width() > 2.0 * margin_deg {
            fp.ra_min += margin_deg;
            fp.ra_max -= margin_deg;
        }
        if fp.dec_max - fp.dec_min > 2.0 * margin_deg {
            fp.dec_min += margin_deg;
            fp.dec_max -= margin_deg;
        }
        fp
    }
}

fn wrap_ra(ra: f64) -> f64 {
    let ra = ra.rem_euclid(360.0);
    if ra >= 360.0 {
        0.0
    } else {
        ra
    }
}

/// Fixed field of one camera: ~144 deg^2, disjoint from every other camera.
/// Camera 0 straddles the RA 0/360 seam.
pub fn camera_footprint(camera_id: u16) -> Result<Footprint> {
    let row = usize::from(camera_id / FIELDS_PER_ROW);
    let Some(&dec_center) = FIELD_ROWS_DEC.get(row) else {
        return Err(Error::Config(format!(
            "camera {camera_id} has no field; at most {} cameras are laid out",
            FIELD_ROWS_DEC.len() * usize::from(FIELDS_PER_ROW)
        )));
    };
    let col = f64::from(camera_id % FIELDS_PER_ROW);
    let width = 2.0 * FIELD_HALF_HEIGHT_DEG / dec_center.to_radians().cos();
    let ra_center = col * 30.0;
    Footprint::new(
        ra_center - width / 2.0,
        ra_center + width / 2.0,
        dec_center - FIELD_HALF_HEIGHT_DEG,
        dec_center + FIELD_HALF_HEIGHT_DEG,
    )
}

/// Parameters of the simulated sky for one camera.
#[derive(Clone, Debug, PartialEq)]
pub struct SkyModel {
    pub seed: u64,
    /// Camera whose field this models; namespaces the star ids.
    pub camera_id: u16,
    pub star_count: usize,
    pub footprint: Footprint,
    /// (bright, faint) magnitude limits.
    pub mag_range: (f64, f64),
    /// Per-epoch positional jitter. The 1 arcsec default is a placeholder,
    /// not a measured instrument value.
    pub astrometric_sigma_deg: f64,
    /// Per-epoch magnitude jitter. The 0.02 mag default is a placeholder.
    pub photometric_sigma_mag: f64,
}

impl Default for SkyModel {
    fn default() -> Self {
        SkyModel {
            seed: 0,
            camera_id: 1,
            star_count: Density::Hundredth.sources_per_frame(),
            footprint: camera_footprint(1).expect("camera 1 has a field"),
            mag_range: (6.0, 16.0),
            astrometric_sigma_deg: ARCSEC,
            photometric_sigma_mag: 0.02,
        }
    }
}

impl SkyModel {
    pub fn for_camera(camera_id: u16, density: Density, seed: u64) -> Result<Self> {
        Ok(SkyModel {
            seed,
            camera_id,
            star_count: density.sources_per_frame(),
            footprint: camera_footprint(camera_id)?,
            ..SkyModel::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.footprint.validate()?;
        if !(self.mag_range.0 < self.mag_range.1) {
            return Err(Error::Config(format!(
                "mag_range must have bright < faint, got {:?}",
                self.mag_range
            )));
        }
        if !(self.astrometric_sigma_deg >= 0.0 && self.photometric_sigma_mag >= 0.0) {
            return Err(Error::Config("noise sigmas must be >= 0".into()));
        }
        Ok(())
    }
}

/// Reference stars of one camera field, with their zone index. Each
/// template row is a [`SourceRecord`] whose `id` is the stable star id and
/// whose `mag` is the true mean magnitude.
#[derive(Clone, Debug)]
pub struct TemplateCatalog {
    pub camera_id: u16,
    pub records: Vec<SourceRecord>,
    pub index: ZoneIndex,
}

/// Star ids are `camera << 32 | ordinal`, stable across runs for a seed.
pub fn star_id(camera_id: u16, ordinal: u32) -> u64 {
    (u64::from(camera_id) << 32) | u64::from(ordinal)
}

impl TemplateCatalog {
    pub fn from_records(camera_id: u16, records: Vec<SourceRecord>, zone_height_deg: f64) -> Self {
        let index = ZoneIndex::build(&records, zone_height_deg);
        TemplateCatalog {
            camera_id,
            records,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn star(&self, star_id: u64) -> Option<&SourceRecord> {
        if (star_id >> 32) as u16 != self.camera_id {
            return None;
        }
        self.records
            .get((star_id & 0xffff_ffff) as usize)
            .filter(|r| r.id == star_id)
    }
}

fn mix_seed(parts: &[u64]) -> u64 {
    // splitmix64 over the parts
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    for &p in parts {
        state = state.wrapping_add(p).wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        state = z ^ (z >> 31);
    }
    state
}

const STREAM_TEMPLATE: u64 = 1;
const STREAM_FRAME: u64 = 2;
const STREAM_INJECTIONS: u64 = 3;

fn truncated_normal(rng: &mut impl Rng, sigma: f64) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= TRUNCATION_SIGMA {
            return z * sigma;
        }
    }
}

/// Draws the template population: `star_count` stars uniform over the
/// footprint, magnitudes uniform over `mag_range`.
pub fn build_template(model: &SkyModel, config: &EngineConfig) -> Result<TemplateCatalog> {
    model.validate()?;
    config.validate()?;
    if model.footprint.area_deg2() <= 0.0 {
        return Err(Error::Config("footprint has zero area".into()));
    }
    let camera_id = model.camera_id;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[model.seed, STREAM_TEMPLATE]));
    let (bright, faint) = model.mag_range;
    let mut records = Vec::with_capacity(model.star_count);
    for ordinal in 0..model.star_count {
        let (ra, dec) = model.footprint.sample(&mut rng);
        let mag = bright + rng.random::<f64>() * (faint - bright);
        let id = star_id(camera_id, ordinal as u32);
        let mut rec = SourceRecord::from_measurement(
            id,
            0,
            ra,
            dec,
            mag,
            0.0,
            config.zone_height_deg,
            config.mag_zero_point,
        )?;
        let (px, py) = model.footprint.pixel(ra, dec);
        rec.pixel_x = px;
        rec.pixel_y = py;
        rec.class_star = 1.0;
        records.push(rec);
    }
    Ok(TemplateCatalog::from_records(
        camera_id,
        records,
        config.zone_height_deg,
    ))
}

/// Logical frame clock: exposure `seq` happens at `origin + seq * cadence`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameClock {
    pub origin: Epoch,
    pub cadence_s: f64,
}

impl FrameClock {
    pub fn new(origin: Epoch, cadence_s: f64) -> Result<Self> {
        if !(cadence_s > 0.0 && cadence_s.is_finite() && origin.is_finite()) {
            return Err(Error::Config(format!("invalid frame clock {origin} / {cadence_s}")));
        }
        Ok(FrameClock { origin, cadence_s })
    }

    /// Clock for night `night_id`: nights start a day apart.
    pub fn for_night(night_id: u32, cadence_s: f64) -> Result<Self> {
        FrameClock::new(f64::from(night_id) * 86_400.0, cadence_s)
    }

    pub fn epoch(&self, seq: u32) -> Epoch {
        self.origin + f64::from(seq) * self.cadence_s
    }

    pub fn seq(&self, epoch: Epoch) -> Result<u32> {
        let err = || Error::Cadence {
            epoch,
            cadence_s: self.cadence_s,
            origin: self.origin,
        };
        let steps = (epoch - self.origin) / self.cadence_s;
        let seq = steps.round();
        if !steps.is_finite() || seq < 0.0 || seq > f64::from(u32::MAX) {
            return Err(err());
        }
        if (self.epoch(seq as u32) - epoch).abs() > 1e-6 {
            return Err(err());
        }
        Ok(seq as u32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InjectionKind {
    NewSource,
    Brightening,
}

impl InjectionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InjectionKind::NewSource => "new_source",
            InjectionKind::Brightening => "brightening",
        }
    }
}

impl FromStr for InjectionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "new_source" => Ok(InjectionKind::NewSource),
            "brightening" => Ok(InjectionKind::Brightening),
            other => Err(Error::Config(format!("unknown injection kind {other:?}"))),
        }
    }
}

/// Box-profile transient active on `[epoch_on, epoch_off)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransientInjection {
    pub kind: InjectionKind,
    pub epoch_on: Epoch,
    pub epoch_off: Epoch,
    /// New-source position, or the target star's position.
    pub position: SkyCoord,
    /// New-source magnitude, or the target star's true magnitude.
    pub mag: f64,
    /// Brightness change for brightenings; negative is brighter.
    pub delta_mag: f64,
    pub target_star: Option<u64>,
}

impl TransientInjection {
    pub fn new_source(epoch_on: Epoch, epoch_off: Epoch, position: SkyCoord, mag: f64) -> Self {
        TransientInjection {
            kind: InjectionKind::NewSource,
            epoch_on,
            epoch_off,
            position,
            mag,
            delta_mag: 0.0,
            target_star: None,
        }
    }

    pub fn brightening(
        epoch_on: Epoch,
        epoch_off: Epoch,
        target: &SourceRecord,
        delta_mag: f64,
    ) -> Self {
        TransientInjection {
            kind: InjectionKind::Brightening,
            epoch_on,
            epoch_off,
            position: target.coord(),
            mag: target.mag,
            delta_mag,
            target_star: Some(target.id),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epoch_on < self.epoch_off) {
            return Err(Error::Config(format!(
                "injection needs epoch_on < epoch_off, got {} .. {}",
                self.epoch_on, self.epoch_off
            )));
        }
        if self.kind == InjectionKind::Brightening && self.target_star.is_none() {
            return Err(Error::Config("brightening injection needs a target star".into()));
        }
        Ok(())
    }

    pub fn is_active(&self, epoch: Epoch) -> bool {
        self.epoch_on <= epoch && epoch < self.epoch_off
    }

    /// Camera owning the injection: the target star's camera, or the field
    /// containing the new source.
    pub fn camera(&self) -> Option<u16> {
        match self.target_star {
            Some(id) => Some((id >> 32) as u16),
            None => (0..(FIELD_ROWS_DEC.len() as u16 * FIELDS_PER_ROW)).find(|&c| {
                camera_footprint(c).is_ok_and(|fp| fp.contains(self.position.ra, self.position.dec))
            }),
        }
    }
}

/// Simulates one exposure of the template's field at `epoch`.
///
/// Every template star is detected with truncated Gaussian position and
/// magnitude jitter; active new sources add records and active
/// brightenings shift their target's magnitude. The random stream depends
/// only on (seed, camera, frame sequence), so frames can be regenerated in
/// any order.
pub fn observe_frame(
    template: &TemplateCatalog,
    model: &SkyModel,
    config: &EngineConfig,
    clock: &FrameClock,
    epoch: Epoch,
    injections: &[TransientInjection],
) -> Result<FrameBatch> {
    let seq = clock.seq(epoch)?;
    let camera_id = template.camera_id;
    let imageid = checked_image_id(camera_id, exposure_number(epoch, clock.cadence_s)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[
        model.seed,
        STREAM_FRAME,
        u64::from(camera_id),
        u64::from(seq),
        clock.origin.to_bits(),
    ]));
    let active: Vec<&TransientInjection> =
        injections.iter().filter(|inj| inj.is_active(epoch)).collect();

    let sigma_pos = model.astrometric_sigma_deg;
    let sigma_mag = model.photometric_sigma_mag;
    let mut records = Vec::with_capacity(template.len() + active.len());

    let observe = |rng: &mut ChaCha8Rng, ra: f64, dec: f64, mag: f64| -> Result<SourceRecord> {
        let d_dec = truncated_normal(rng, sigma_pos);
        let d_ra_tangent = truncated_normal(rng, sigma_pos);
        let d_mag = truncated_normal(rng, sigma_mag);
        let obs_dec = (dec + d_dec).clamp(-90.0, 90.0);
        let cos_dec = dec.to_radians().cos();
        let obs_ra = if cos_dec > 1e-9 {
            wrap_ra(ra + d_ra_tangent / cos_dec)
        } else {
            ra
        };
        let mut rec = SourceRecord::from_measurement(
            0,
            imageid,
            obs_ra,
            obs_dec,
            mag + d_mag,
            sigma_mag,
            config.zone_height_deg,
            config.mag_zero_point,
        )?;
        let (px, py) = model.footprint.pixel(obs_ra, obs_dec);
        rec.pixel_x = px;
        rec.pixel_y = py;
        rec.ra_err = sigma_pos;
        rec.dec_err = sigma_pos;
        rec.background = 1000.0 + 10.0 * rng.sample::<f64, _>(StandardNormal);
        rec.threshold = 1.5;
        rec.ellipticity = 0.3 * rng.random::<f64>();
        rec.class_star = 0.8 + 0.2 * rng.random::<f64>();
        Ok(rec)
    };

    for star in &template.records {
        let mut mag = star.mag;
        for inj in &active {
            if inj.target_star == Some(star.id) {
                mag += inj.delta_mag;
            }
        }
        records.push(observe(&mut rng, star.ra, star.dec, mag)?);
    }
    for inj in &active {
        if inj.kind == InjectionKind::NewSource {
            records.push(observe(&mut rng, inj.position.ra, inj.position.dec, inj.mag)?);
        }
    }

    // stable: ties keep generation order
    records.sort_by(|a, b| a.zone.cmp(&b.zone).then(a.ra.total_cmp(&b.ra)));
    for (index, rec) in records.iter_mut().enumerate() {
        rec.id = measurement_id(imageid, index as u32);
    }
    Ok(FrameBatch {
        camera_id,
        imageid,
        epoch,
        records,
    })
}

/// How to draw random injections for a night.
#[derive(Clone, Debug, PartialEq)]
pub struct InjectionPlan {
    pub count: usize,
    pub frames: u32,
    /// No injection starts before this frame, so online windows are warm.
    pub warmup_frames: u32,
    /// Inclusive range of active frames.
    pub duration_frames: (u32, u32),
    /// Range of |delta_mag| for brightenings.
    pub delta_mag_abs: (f64, f64),
    /// Targets and new sources keep at least this distance from other stars.
    pub isolation_deg: f64,
}

/// Draws `plan.count` injections alternating new sources and brightenings.
/// Targets are distinct isolated stars; new sources are placed away from
/// every template star.
pub fn random_injections(
    template: &TemplateCatalog,
    model: &SkyModel,
    clock: &FrameClock,
    plan: &InjectionPlan,
    seed: u64,
) -> Result<Vec<TransientInjection>> {
    let (dmin, dmax) = plan.duration_frames;
    if dmin == 0 || dmin > dmax || plan.warmup_frames + dmax > plan.frames {
        return Err(Error::Config(format!("injection plan does not fit the night: {plan:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[
        seed,
        STREAM_INJECTIONS,
        u64::from(template.camera_id),
    ]));
    let inner = model.footprint.shrink(0.05);
    let mut used_targets = std::collections::HashSet::new();
    let mut new_positions: Vec<SkyCoord> = Vec::new();
    let mut out = Vec::with_capacity(plan.count);
    for k in 0..plan.count {
        let duration = rng.random_range(dmin..=dmax);
        let start = rng.random_range(plan.warmup_frames..=plan.frames - duration);
        let (on, off) = (clock.epoch(start), clock.epoch(start + duration));
        let want_new = k % 2 == 0 || template.is_empty();
        let mut placed = false;
        for _ in 0..10_000 {
            if want_new {
                let (ra, dec) = inner.sample(&mut rng);
                let pos = SkyCoord { ra, dec };
                let crowded = !template.index.cone(&pos, plan.isolation_deg).is_empty()
                    || new_positions
                        .iter()
                        .any(|p| crate::catalog::angular_separation(p, &pos) < plan.isolation_deg);
                if crowded {
                    continue;
                }
                let (bright, faint) = model.mag_range;
                let mag = bright + rng.random::<f64>() * (faint - bright);
                new_positions.push(pos);
                out.push(TransientInjection::new_source(on, off, pos, mag));
            } else {
                let star = &template.records[rng.random_range(0..template.len())];
                if used_targets.contains(&star.id)
                    || template.index.cone(star, plan.isolation_deg).len() > 1
                {
                    continue;
                }
                used_targets.insert(star.id);
                let (lo, hi) = plan.delta_mag_abs;
                let delta = -(lo + rng.random::<f64>() * (hi - lo));
                out.push(TransientInjection::brightening(on, off, star, delta));
            }
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::Config(
                "could not place an isolated injection; field too crowded".into(),
            ));
        }
    }
    Ok(out)
}

pub const TRUTH_LOG_HEADER: &str = "kind,epoch_on,epoch_off,ra,dec,mag,delta_mag,target_star";

/// Renders injections as the truth log: one event per line.
pub fn write_truth_log(injections: &[TransientInjection]) -> String {
    let mut out = String::from(TRUTH_LOG_HEADER);
    out.push('\n');
    for inj in injections {
        let target = inj.target_star.map(|t| t.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            inj.kind.as_str(),
            inj.epoch_on,
            inj.epoch_off,
            inj.position.ra,
            inj.position.dec,
            inj.mag,
            inj.delta_mag,
            target
        );
    }
    out
}

pub fn parse_truth_log(text: &str) -> Result<Vec<TransientInjection>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line == TRUTH_LOG_HEADER {
            continue;
        }
        let bad = |what: &str| Error::Config(format!("truth log line {}: {what}", n + 1));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(bad("expected 8 fields"));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .trim()
                .parse::<f64>()
                .map_err(|_| bad(&format!("bad number {:?}", fields[i])))
        };
        let target_star = match fields[7].trim() {
            "" => None,
            t => Some(t.parse::<u64>().map_err(|_| bad("bad target_star"))?),
        };
        let inj = TransientInjection {
            kind: fields[0].trim().parse()?,
            epoch_on: num(1)?,
            epoch_off: num(2)?,
            position: SkyCoord::new(num(3)?, num(4)?)?,
            mag: num(5)?,
            delta_mag: num(6)?,
            target_star,
        };
        inj.validate()?;
        out.push(inj);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> EngineConfig {
        EngineConfig::default()
    }

    fn small_model(seed: u64, n: usize) -> SkyModel {
        SkyModel {
            seed,
            star_count: n,
            ..SkyModel::default()
        }
    }

    #[test]
    fn empty_template() {
        let t = build_template(&small_model(1, 0), &config()).unwrap();
        assert!(t.is_empty());
        assert_eq!(t.index.zone_count(), 0);
    }

    #[test]
    fn template_is_deterministic() {
        let a = build_template(&small_model(42, 500), &config()).unwrap();
        let b = build_template(&small_model(42, 500), &config()).unwrap();
        assert_eq!(a.records, b.records);
        let c = build_template(&small_model(43, 500), &config()).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn template_stays_in_footprint() {
        let model = small_model(3, 2000);
        let t = build_template(&model, &config()).unwrap();
        for r in &t.records {
            assert!(model.footprint.contains(r.ra, r.dec), "{r:?}");
            r.audit(&config()).unwrap();
        }
        assert_eq!(t.star(t.records[17].id).unwrap().id, t.records[17].id);
        assert!(t.star(star_id(t.camera_id + 1, 17)).is_none());
    }

    #[test]
    fn zero_area_footprint_rejected() {
        let mut model = small_model(1, 10);
        model.footprint.dec_max = model.footprint.dec_min;
        assert!(build_template(&model, &config()).is_err());
    }

    #[test]
    fn camera_fields_are_disjoint() {
        let fps: Vec<Footprint> = (0..60).map(|c| camera_footprint(c).unwrap()).collect();
        for (i, a) in fps.iter().enumerate() {
            assert!((a.area_deg2() - 144.0).abs() < 2.0, "{i}: {}", a.area_deg2());
            for b in &fps[i + 1..] {
                let center_ra = (a.ra_min + a.ra_width() / 2.0).rem_euclid(360.0);
                let center_dec = (a.dec_min + a.dec_max) / 2.0;
                assert!(!b.contains(center_ra, center_dec));
            }
        }
        assert!(camera_footprint(60).is_err());
        // camera 0 straddles the seam
        assert!(fps[0].contains(359.0, 0.0) && fps[0].contains(1.0, 0.0));
    }

    #[test]
    fn noiseless_frame_reproduces_template() {
        let mut model = small_model(5, 300);
        model.astrometric_sigma_deg = 0.0;
        model.photometric_sigma_mag = 0.0;
        let t = build_template(&model, &config()).unwrap();
        let clock = FrameClock::new(0.0, 15.0).unwrap();
        let f = observe_frame(&t, &model, &config(), &clock, 30.0, &[]).unwrap();
        assert_eq!(f.len(), 300);
        let mut by_pos: Vec<(f64, f64, f64)> = f.records.iter().map(|r| (r.ra, r.dec, r.mag)).collect();
        let mut truth: Vec<(f64, f64, f64)> = t.records.iter().map(|r| (r.ra, r.dec, r.mag)).collect();
        by_pos.sort_by(|a, b| a.partial_cmp(b).unwrap());
        truth.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(by_pos, truth);
    }

    #[test]
    fn frames_are_sorted_and_deterministic() {
        let model = small_model(6, 400);
        let t = build_template(&model, &config()).unwrap();
        let clock = FrameClock::new(0.0, 15.0).unwrap();
        let a = observe_frame(&t, &model, &config(), &clock, 15.0, &[]).unwrap();
        let b = observe_frame(&t, &model, &config(), &clock, 15.0, &[]).unwrap();
        assert_eq!(a, b);
        assert!(a
            .records
            .windows(2)
            .all(|w| (w[0].zone, w[0].ra) <= (w[1].zone, w[1].ra)));
        assert!(a.records.iter().all(|r| r.imageid == a.imageid));
        let c = observe_frame(&t, &model, &config(), &clock, 30.0, &[]).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn misaligned_epoch_rejected() {
        let model = small_model(6, 10);
        let t = build_template(&model, &config()).unwrap();
        let clock = FrameClock::new(0.0, 15.0).unwrap();
        assert!(matches!(
            observe_frame(&t, &model, &config(), &clock, 16.0, &[]),
            Err(Error::Cadence { .. })
        ));
    }

    #[test]
    fn new_source_adds_one_record() {
        let model = small_model(7, 100);
        let t = build_template(&model, &config()).unwrap();
        let clock = FrameClock::new(0.0, 15.0).unwrap();
        let pos = SkyCoord::new(31.0, 30.0).unwrap();
        let inj = [TransientInjection::new_source(15.0, 45.0, pos, 12.0)];
        assert_eq!(observe_frame(&t, &model, &config(), &clock, 0.0, &inj).unwrap().len(), 100);
        assert_eq!(observe_frame(&t, &model, &config(), &clock, 15.0, &inj).unwrap().len(), 101);
        assert_eq!(observe_frame(&t, &model, &config(), &clock, 45.0, &inj).unwrap().len(), 100);
    }

    #[test]
    fn brightening_shifts_target() {
        let mut model = small_model(8, 50);
        model.astrometric_sigma_deg = 0.0;
        model.photometric_sigma_mag = 0.0;
        let t = build_template(&model, &config()).unwrap();
        let target = &t.records[10];
        let inj = [TransientInjection::brightening(0.0, 15.0, target, -1.0)];
        let clock = FrameClock::new(0.0, 15.0).unwrap();
        let f = observe_frame(&t, &model, &config(), &clock, 0.0, &inj).unwrap();
        let seen = f
            .records
            .iter()
            .find(|r| r.ra == target.ra && r.dec == target.dec)
            .unwrap();
        assert!((seen.mag - (target.mag - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn photometric_noise_has_requested_sigma() {
        let mut model = small_model(9, 1);
        model.photometric_sigma_mag = 0.1;
        let t = build_template(&model, &config()).unwrap();
        let clock = FrameClock::new(0.0, 15.0).unwrap();
        let truth = t.records[0].mag;
        let diffs: Vec<f64> = (0..1000)
            .map(|s| {
                observe_frame(&t, &model, &config(), &clock, clock.epoch(s), &[]).unwrap().records[0]
                    .mag
                    - truth
            })
            .collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64;
        let sd = var.sqrt();
        assert!((0.09..=0.11).contains(&sd), "sd = {sd}");
    }

    #[test]
    fn generated_records_pass_audit() {
        let model = small_model(10, 2500);
        let t = build_template(&model, &config()).unwrap();
        let clock = FrameClock::new(0.0, 15.0).unwrap();
        let mut n = 0;
        for s in 0..4 {
            let f = observe_frame(&t, &model, &config(), &clock, clock.epoch(s), &[]).unwrap();
            for r in &f.records {
                r.audit(&config()).unwrap();
                n += 1;
            }
        }
        assert!(n >= 10_000);
    }

    #[test]
    fn truth_log_round_trip() {
        let model = small_model(11, 300);
        let t = build_template(&model, &config()).unwrap();
        let clock = FrameClock::new(0.0, 15.0).unwrap();
        let plan = InjectionPlan {
            count: 6,
            frames: 100,
            warmup_frames: 40,
            duration_frames: (2, 20),
            delta_mag_abs: (0.3, 1.0),
            isolation_deg: 0.006,
        };
        let inj = random_injections(&t, &model, &clock, &plan, 99).unwrap();
        assert_eq!(inj.len(), 6);
        for i in &inj {
            assert!(i.epoch_on >= clock.epoch(40));
            assert!(i.epoch_off <= clock.epoch(100));
        }
        let text = write_truth_log(&inj);
        assert_eq!(text.lines().count(), 7);
        assert_eq!(parse_truth_log(&text).unwrap(), inj);
        assert!(parse_truth_log("new_source,1,0,1,1,1,0,\n").is_err());
    }
}
