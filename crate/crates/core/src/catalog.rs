//! Catalog rows, sky coordinates and photometric conversions.
//!
//! [`SourceRecord`] carries the 22 columns produced by point-source
//! extraction, in extraction order. Everything downstream (matching,
//! storage, light curves) consumes these rows.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Observation time in seconds on the logical frame clock.
pub type Epoch = f64;

pub const DEFAULT_CADENCE_S: f64 = 15.0;
pub const DEFAULT_ZONE_HEIGHT_DEG: f64 = 0.01;
pub const DEFAULT_MATCH_RADIUS_DEG: f64 = 0.003;
pub const DEFAULT_MAG_ZERO_POINT: f64 = 25.0;
pub const DEFAULT_CAMERAS: u16 = 36;
pub const SOURCES_PER_FRAME_FULL: usize = 175_600;
pub const CCD_PIXELS: f64 = 4096.0;

/// Frames per camera are numbered below this inside an image id.
/// Low bits of an image id hold the exposure number.
pub const EXPOSURE_BITS: u32 = 26;
const EXPOSURE_MASK: u32 = (1 << EXPOSURE_BITS) - 1;

/// Smallest zone height whose zone ids still fit in 16 bits.
const MIN_ZONE_HEIGHT_DEG: f64 = 180.0 / 65_536.0;

/// A point on the celestial sphere, in degrees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SkyCoord {
    pub ra: f64,
    pub dec: f64,
}

impl SkyCoord {
    pub fn new(ra: f64, dec: f64) -> Result<Self> {
        check_ra(ra)?;
        check_dec(dec)?;
        Ok(SkyCoord { ra, dec })
    }

    pub fn unit_vector(&self) -> [f64; 3] {
        cartesian(self.ra, self.dec)
    }
}

/// Anything with a direction on the unit sphere.
pub trait SkyPoint {
    fn unit_vector(&self) -> [f64; 3];
}

impl SkyPoint for SkyCoord {
    fn unit_vector(&self) -> [f64; 3] {
        SkyCoord::unit_vector(self)
    }
}

impl SkyPoint for [f64; 3] {
    fn unit_vector(&self) -> [f64; 3] {
        *self
    }
}

impl SkyPoint for SourceRecord {
    fn unit_vector(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// One extracted source measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceRecord {
    pub id: u64,
    pub imageid: u32,
    pub zone: u16,
    pub ra: f64,
    pub dec: f64,
    pub mag: f64,
    pub mag_error: f64,
    pub pixel_x: f64,
    pub pixel_y: f64,
    pub ra_err: f64,
    pub dec_err: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub flux: f64,
    pub flux_err: f64,
    pub calmag: f64,
    pub flag: u32,
    pub background: f64,
    pub threshold: f64,
    pub ellipticity: f64,
    pub class_star: f64,
}

impl SourceRecord {
    /// Builds a record from its measured quantities and fills every derived
    /// column (zone, unit vector, flux, flux error, calmag). Extraction
    /// diagnostics start at zero.
    pub fn from_measurement(
        id: u64,
        imageid: u32,
        ra: f64,
        dec: f64,
        mag: f64,
        mag_error: f64,
        zone_height_deg: f64,
        mag_zero_point: f64,
    ) -> Result<Self> {
        let [x, y, z] = radec_to_cartesian(ra, dec)?;
        let zone = zone_of(dec, zone_height_deg)?;
        if !mag.is_finite() {
            return Err(Error::Domain {
                field: "mag",
                value: mag,
                expected: "finite",
            });
        }
        let flux = mag_to_flux(mag, mag_zero_point);
        let flux_err = propagate_flux_error(flux, mag_error)?;
        Ok(SourceRecord {
            id,
            imageid,
            zone,
            ra,
            dec,
            mag,
            mag_error,
            pixel_x: 0.0,
            pixel_y: 0.0,
            ra_err: 0.0,
            dec_err: 0.0,
            x,
            y,
            z,
            flux,
            flux_err,
            calmag: mag,
            flag: 0,
            background: 0.0,
            threshold: 0.0,
            ellipticity: 0.0,
            class_star: 0.0,
        })
    }

    pub fn coord(&self) -> SkyCoord {
        SkyCoord {
            ra: self.ra,
            dec: self.dec,
        }
    }

    /// Checks every row invariant against the given engine settings.
    pub fn audit(&self, config: &EngineConfig) -> Result<()> {
        check_ra(self.ra)?;
        check_dec(self.dec)?;
        let norm = self.x * self.x + self.y * self.y + self.z * self.z;
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::Domain {
                field: "x,y,z",
                value: norm,
                expected: "unit norm",
            });
        }
        let zone = zone_of(self.dec, config.zone_height_deg)?;
        if zone != self.zone {
            return Err(Error::Domain {
                field: "zone",
                value: f64::from(self.zone),
                expected: "zone_of(dec)",
            });
        }
        let flux = mag_to_flux(self.mag, config.mag_zero_point);
        if ((self.flux - flux) / flux).abs() > 1e-9 {
            return Err(Error::Domain {
                field: "flux",
                value: self.flux,
                expected: "10^(-0.4 (mag - zero point))",
            });
        }
        for (field, value) in [("pixel_x", self.pixel_x), ("pixel_y", self.pixel_y)] {
            if !(0.0..CCD_PIXELS).contains(&value) {
                return Err(Error::Domain {
                    field,
                    value,
                    expected: "[0, 4096)",
                });
            }
        }
        for (field, value) in [
            ("mag_error", self.mag_error),
            ("ra_err", self.ra_err),
            ("dec_err", self.dec_err),
        ] {
            if value.is_nan() || value < 0.0 {
                return Err(Error::Domain {
                    field,
                    value,
                    expected: ">= 0",
                });
            }
        }
        for (field, value) in [("ellipticity", self.ellipticity), ("class_star", self.class_star)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::Domain {
                    field,
                    value,
                    expected: "[0, 1]",
                });
            }
        }
        Ok(())
    }
}

/// All sources extracted from one exposure of one camera.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameBatch {
    pub camera_id: u16,
    pub imageid: u32,
    pub epoch: Epoch,
    pub records: Vec<SourceRecord>,
}

impl FrameBatch {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Orders records by (zone, ra, id), the emission order.
    pub fn sort_for_emission(&mut self) {
        self.records.sort_by(|a, b| {
            a.zone
                .cmp(&b.zone)
                .then(a.ra.total_cmp(&b.ra))
                .then(a.id.cmp(&b.id))
        });
    }
}

/// Image id layout: `camera << 26 | exposure`. The exposure number counts
/// cadence steps since epoch 0, so an image id names one exposure of one
/// camera for the whole survey (2^26 exposures is 32 years at 15 s).
/// Out-of-range parts are masked; use [`checked_image_id`] on input data.
pub fn image_id(camera_id: u16, exposure: u32) -> u32 {
    (u32::from(camera_id) << EXPOSURE_BITS) | (exposure & EXPOSURE_MASK)
}

pub fn checked_image_id(camera_id: u16, exposure: u32) -> Result<u32> {
    if camera_id >= 1 << (32 - EXPOSURE_BITS) || exposure > EXPOSURE_MASK {
        return Err(Error::Config(format!(
            "camera {camera_id} / exposure {exposure} does not fit an image id"
        )));
    }
    Ok(image_id(camera_id, exposure))
}

/// Exposure number of `epoch` for a clock ticking every `cadence_s`.
pub fn exposure_number(epoch: Epoch, cadence_s: f64) -> Result<u32> {
    let n = (epoch / cadence_s).round();
    if !(n >= 0.0 && n <= f64::from(EXPOSURE_MASK)) {
        return Err(Error::Domain {
            field: "epoch",
            value: epoch,
            expected: "within the exposure-number range",
        });
    }
    Ok(n as u32)
}

pub fn image_id_parts(imageid: u32) -> (u16, u32) {
    ((imageid >> EXPOSURE_BITS) as u16, imageid & EXPOSURE_MASK)
}

/// Measurement ids are `imageid << 32 | index within frame`, unique per survey.
pub fn measurement_id(imageid: u32, index: u32) -> u64 {
    (u64::from(imageid) << 32) | u64::from(index)
}

/// Per-camera source density presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Density {
    Full,
    Tenth,
    Hundredth,
}

impl Density {
    pub fn sources_per_frame(self) -> usize {
        match self {
            Density::Full => SOURCES_PER_FRAME_FULL,
            Density::Tenth => SOURCES_PER_FRAME_FULL / 10,
            Density::Hundredth => SOURCES_PER_FRAME_FULL / 100,
        }
    }
}

impl FromStr for Density {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" | "1" => Ok(Density::Full),
            "1/10" | "tenth" => Ok(Density::Tenth),
            "1/100" | "hundredth" => Ok(Density::Hundredth),
            other => Err(Error::Config(format!(
                "unknown density {other:?}, expected one of full, 1/10, 1/100"
            ))),
        }
    }
}

impl fmt::Display for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Density::Full => "full",
            Density::Tenth => "1/10",
            Density::Hundredth => "1/100",
        })
    }
}

/// Engine-wide settings.
#[derive(Clone, Debug, PartialEq)]
pub struct EngineConfig {
    /// Exposure cadence in seconds.
    pub cadence_s: f64,
    pub zone_height_deg: f64,
    pub match_radius_deg: f64,
    pub mag_zero_point: f64,
    /// Number of camera partitions.
    pub cameras: u16,
    pub sources_per_frame: usize,
    /// Length of one observing night.
    pub night_hours: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            cadence_s: DEFAULT_CADENCE_S,
            zone_height_deg: DEFAULT_ZONE_HEIGHT_DEG,
            match_radius_deg: DEFAULT_MATCH_RADIUS_DEG,
            mag_zero_point: DEFAULT_MAG_ZERO_POINT,
            cameras: DEFAULT_CAMERAS,
            sources_per_frame: SOURCES_PER_FRAME_FULL,
            night_hours: 8.0,
        }
    }
}

impl EngineConfig {
    pub fn with_density(mut self, density: Density) -> Self {
        self.sources_per_frame = density.sources_per_frame();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cadence_s > 0.0 && self.cadence_s.is_finite()) {
            return Err(Error::Config(format!(
                "cadence_s must be positive, got {}",
                self.cadence_s
            )));
        }
        if !(self.zone_height_deg > 0.0 && self.zone_height_deg <= 90.0) {
            return Err(Error::Config(format!(
                "zone_height_deg must be in (0, 90], got {}",
                self.zone_height_deg
            )));
        }
        if self.zone_height_deg < MIN_ZONE_HEIGHT_DEG {
            return Err(Error::Config(format!(
                "zone_height_deg {} yields more than 65536 zones",
                self.zone_height_deg
            )));
        }
        if !(self.match_radius_deg > 0.0 && self.match_radius_deg <= 90.0) {
            return Err(Error::Config(format!(
                "match_radius_deg must be in (0, 90], got {}",
                self.match_radius_deg
            )));
        }
        if !self.mag_zero_point.is_finite() {
            return Err(Error::Config("mag_zero_point must be finite".into()));
        }
        if self.cameras == 0 {
            return Err(Error::Config("cameras must be at least 1".into()));
        }
        if !(self.night_hours > 0.0 && self.night_hours <= 24.0) {
            return Err(Error::Config(format!(
                "night_hours must be in (0, 24], got {}",
                self.night_hours
            )));
        }
        Ok(())
    }

    /// Exposures per camera per night: 8 h at 15 s gives 1920.
    pub fn frames_per_night(&self) -> u64 {
        (self.night_hours * 3600.0 / self.cadence_s).round() as u64
    }
}

fn check_ra(ra: f64) -> Result<()> {
    if (0.0..360.0).contains(&ra) {
        Ok(())
    } else {
        Err(Error::Domain {
            field: "ra",
            value: ra,
            expected: "[0, 360)",
        })
    }
}

fn check_dec(dec: f64) -> Result<()> {
    if (-90.0..=90.0).contains(&dec) {
        Ok(())
    } else {
        Err(Error::Domain {
            field: "dec",
            value: dec,
            expected: "[-90, 90]",
        })
    }
}

fn cartesian(ra: f64, dec: f64) -> [f64; 3] {
    let (sin_ra, cos_ra) = ra.to_radians().sin_cos();
    let (sin_dec, cos_dec) = dec.to_radians().sin_cos();
    [cos_dec * cos_ra, cos_dec * sin_ra, sin_dec]
}

pub fn radec_to_cartesian(ra: f64, dec: f64) -> Result<[f64; 3]> {
    check_ra(ra)?;
    check_dec(dec)?;
    Ok(cartesian(ra, dec))
}

/// Inverse of [`radec_to_cartesian`]; the input need not be normalized.
pub fn cartesian_to_radec(v: [f64; 3]) -> SkyCoord {
    let [x, y, z] = v;
    let r = (x * x + y * y + z * z).sqrt();
    let mut ra = y.atan2(x).to_degrees().rem_euclid(360.0);
    if ra >= 360.0 {
        ra = 0.0;
    }
    let dec = (z / r).clamp(-1.0, 1.0).asin().to_degrees();
    SkyCoord { ra, dec }
}

/// Great-circle separation in degrees, computed from the chord length.
pub fn angular_separation(a: &impl SkyPoint, b: &impl SkyPoint) -> f64 {
    chord_to_degrees(chord(&a.unit_vector(), &b.unit_vector()))
}

#[inline]
pub(crate) fn chord(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

#[inline]
pub(crate) fn chord_to_degrees(chord: f64) -> f64 {
    (2.0 * (chord / 2.0).min(1.0).asin()).to_degrees()
}

/// Highest zone id for a given strip height; +90 is folded into it.
pub fn max_zone(zone_height_deg: f64) -> u16 {
    ((180.0 / zone_height_deg).ceil() as u32).saturating_sub(1) as u16
}

pub fn zone_of(dec: f64, zone_height_deg: f64) -> Result<u16> {
    if !(zone_height_deg > 0.0) {
        return Err(Error::Config(format!(
            "zone height must be positive, got {zone_height_deg}"
        )));
    }
    check_dec(dec)?;
    Ok(zone_of_unchecked(dec, zone_height_deg))
}

#[inline]
pub(crate) fn zone_of_unchecked(dec: f64, zone_height_deg: f64) -> u16 {
    let raw = ((dec + 90.0) / zone_height_deg).floor().max(0.0) as u32;
    raw.min(u32::from(max_zone(zone_height_deg))) as u16
}

/// Linear flux relative to the zero point: `10^(-0.4 (mag - zp))`.
pub fn mag_to_flux(mag: f64, zero_point: f64) -> f64 {
    10f64.powf(-0.4 * (mag - zero_point))
}

/// First-order propagation of a magnitude error into flux.
pub fn propagate_flux_error(flux: f64, mag_error: f64) -> Result<f64> {
    if mag_error.is_nan() || mag_error < 0.0 {
        return Err(Error::Domain {
            field: "mag_error",
            value: mag_error,
            expected: ">= 0",
        });
    }
    Ok(0.4 * std::f64::consts::LN_10 * flux * mag_error)
}
