//! Data-volume projections for a camera array.

use crate::catalog::EngineConfig;
use crate::error::{Error, Result};

/// Observing nights per year.
pub const NIGHTS_PER_YEAR: u32 = 260;

#[derive(Clone, Debug, PartialEq)]
pub struct CapacityRow {
    pub cameras: u16,
    /// "day", "year", "10 years" or "N days".
    pub horizon: String,
    pub days: u32,
    pub records: u64,
    pub bytes: f64,
}

impl CapacityRow {
    pub const CSV_HEADER: &'static str = "cameras,horizon,days,records,bytes,size";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.0},{}",
            self.cameras,
            self.horizon,
            self.days,
            sci(self.records as f64),
            self.bytes,
            human_bytes(self.bytes)
        )
    }
}

/// Projected volume for one camera and for the whole array over a day,
/// a year of 260 nights, ten years, and `days` nights.
///
/// `records = cameras × frames_per_night × sources_per_frame × days`.
pub fn capacity_plan(config: &EngineConfig, days: u32, bytes_per_record: f64) -> Result<Vec<CapacityRow>> {
    config.validate()?;
    if !(bytes_per_record >= 0.0 && bytes_per_record.is_finite()) {
        return Err(Error::Config(format!(
            "bytes_per_record must be a non-negative number, got {bytes_per_record}"
        )));
    }
    let mut cameras = vec![1u16];
    if config.cameras != 1 {
        cameras.push(config.cameras);
    }
    let mut horizons = vec![
        ("day".to_string(), 1),
        ("year".to_string(), NIGHTS_PER_YEAR),
        ("10 years".to_string(), NIGHTS_PER_YEAR * 10),
    ];
    if !horizons.iter().any(|&(_, d)| d == days) {
        horizons.push((format!("{days} days"), days));
    }
    let per_camera_night = config.frames_per_night() * config.sources_per_frame as u64;
    let mut rows = Vec::new();
    for &n in &cameras {
        for (horizon, d) in &horizons {
            let records = u64::from(n) * per_camera_night * u64::from(*d);
            rows.push(CapacityRow {
                cameras: n,
                horizon: horizon.clone(),
                days: *d,
                records,
                bytes: records as f64 * bytes_per_record,
            });
        }
    }
    Ok(rows)
}

/// Three significant figures in scientific notation: `3.37e8`.
pub fn sci(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    format!("{x:.2e}")
}

/// Binary-unit size (KiB = 1024 B) printed with the decimal-looking suffixes
/// used in storage planning tables, e.g. `61.88GB`.
pub fn human_bytes(bytes: f64) -> String {
    const UNITS: [&str; 6] = ["B", "KB", "MB", "GB", "TB", "PB"];
    let mut v = bytes;
    let mut unit = 0;
    while v >= 1024.0 && unit + 1 < UNITS.len() {
        v /= 1024.0;
        unit += 1;
    }
    format!("{v:.2}{}", UNITS[unit])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_camera_one_day() {
        let rows = capacity_plan(&EngineConfig::default(), 1, 197.0).unwrap();
        assert_eq!(rows[0].records, 337_152_000);
        assert_eq!(sci(rows[0].records as f64), "3.37e8");
    }

    #[test]
    fn array_year_and_decade() {
        let rows = capacity_plan(&EngineConfig::default(), 1, 197.0).unwrap();
        let year = rows.iter().find(|r| r.cameras == 36 && r.horizon == "year").unwrap();
        assert_eq!(sci(year.records as f64), "3.16e12");
        let decade = rows.iter().find(|r| r.cameras == 36 && r.horizon == "10 years").unwrap();
        assert_eq!(sci(decade.records as f64), "3.16e13");
    }

    #[test]
    fn zero_days_is_zero() {
        let rows = capacity_plan(&EngineConfig::default(), 0, 178.0).unwrap();
        for r in rows.iter().filter(|r| r.days == 0) {
            assert_eq!(r.records, 0);
            assert_eq!(r.bytes, 0.0);
        }
    }

    #[test]
    fn single_camera_config_has_no_duplicate_rows() {
        let config = EngineConfig {
            cameras: 1,
            ..EngineConfig::default()
        };
        assert_eq!(capacity_plan(&config, 3, 1.0).unwrap().len(), 4);
    }

    #[test]
    fn binary_units() {
        assert_eq!(human_bytes(1536.0), "1.50KB");
        assert_eq!(human_bytes(337_152_000.0 * 197.07), "61.88GB");
        assert_eq!(human_bytes(0.0), "0.00B");
    }

    #[test]
    fn rejects_bad_record_size() {
        assert!(capacity_plan(&EngineConfig::default(), 1, -1.0).is_err());
        assert!(capacity_plan(&EngineConfig::default(), 1, f64::NAN).is_err());
    }
}
