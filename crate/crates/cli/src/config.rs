//! Settings resolution: flags > `--config` file > built-in defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use zonecat::catalog::{Density, EngineConfig};
use zonecat::mining::OnlineConfig;
use zonecat::{Error, Result};

pub const DATA_DIR_ENV: &str = "ZONECAT_DATA_DIR";

/// Engine settings shared by every subcommand. Any of them may also be set
/// in the `--config` file as `key = value` using the long flag name.
#[derive(Args, Debug, Clone, Default)]
pub struct EngineArgs {
    /// key=value settings file; flags override it
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Data directory root [env: ZONECAT_DATA_DIR]
    #[arg(long, global = true, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    /// Sources per frame: full, 1/10 or 1/100
    #[arg(long, global = true)]
    pub density: Option<Density>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Exposure cadence in seconds
    #[arg(long, global = true)]
    pub cadence: Option<f64>,
    /// Declination zone height in degrees
    #[arg(long, global = true)]
    pub zone_height: Option<f64>,
    /// Cross-match radius in degrees
    #[arg(long, global = true)]
    pub radius: Option<f64>,
    /// Online alert threshold in sigma
    #[arg(long, global = true)]
    pub k: Option<f64>,
    /// Online window length in frames
    #[arg(long, global = true)]
    pub window: Option<usize>,
    /// Points needed before the online detector may alert
    #[arg(long, global = true)]
    pub min_points: Option<usize>,
    /// Frames a new source must persist before it is alerted
    #[arg(long, global = true)]
    pub persistence: Option<u32>,
}

/// Fully validated settings for one invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub engine: EngineConfig,
    pub online: OnlineConfig,
    pub density: Density,
    pub seed: u64,
    data_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn resolve(args: &EngineArgs) -> Result<Self> {
        let file = match &args.config {
            Some(path) => parse_config_file(path)?,
            None => BTreeMap::new(),
        };
        for key in file.keys() {
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "unknown key {key:?} in config file; known keys: {}",
                    KEYS.join(", ")
                )));
            }
        }
        let mut engine = EngineConfig::default();
        let mut online = OnlineConfig::default();
        engine.cadence_s = pick(args.cadence, &file, "cadence", engine.cadence_s)?;
        engine.zone_height_deg = pick(args.zone_height, &file, "zone-height", engine.zone_height_deg)?;
        engine.match_radius_deg = pick(args.radius, &file, "radius", engine.match_radius_deg)?;
        online.match_radius_deg = engine.match_radius_deg;
        online.k = pick(args.k, &file, "k", online.k)?;
        online.window = pick(args.window, &file, "window", online.window)?;
        online.min_points = pick(args.min_points, &file, "min-points", online.min_points)?;
        online.persistence_n = pick(args.persistence, &file, "persistence", online.persistence_n)?;
        let density = pick(args.density, &file, "density", Density::Hundredth)?;
        let seed = pick(args.seed, &file, "seed", 0)?;
        let data_dir = match &args.data_dir {
            Some(d) => Some(d.clone()),
            None => match file.get("data-dir") {
                Some(d) => Some(PathBuf::from(d)),
                None => std::env::var_os(DATA_DIR_ENV).map(PathBuf::from),
            },
        };
        let engine = engine.with_density(density);
        engine.validate()?;
        online.validate()?;
        Ok(RunConfig {
            engine,
            online,
            density,
            seed,
            data_dir,
        })
    }

    pub fn data_dir(&self) -> Result<&Path> {
        self.data_dir.as_deref().ok_or_else(|| {
            Error::Config(format!("no data directory: pass --data-dir or set {DATA_DIR_ENV}"))
        })
    }
}

const KEYS: [&str; 11] = [
    "data-dir",
    "density",
    "seed",
    "cadence",
    "zone-height",
    "radius",
    "k",
    "window",
    "min-points",
    "persistence",
    "config",
];

fn pick<T: std::str::FromStr>(flag: Option<T>, file: &BTreeMap<String, String>, key: &str, default: T) -> Result<T> {
    if let Some(v) = flag {
        return Ok(v);
    }
    match file.get(key) {
        Some(raw) => raw
            .parse()
            .map_err(|_| Error::Config(format!("config key {key}: cannot parse {raw:?}"))),
        None => Ok(default),
    }
}

/// `key = value` lines; `#` starts a comment. Underscores in keys are
/// accepted in place of dashes.
pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
    parse_config_text(&text)
}

pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!("config line {}: expected key = value", n + 1)));
        };
        out.insert(key.trim().replace('_', "-"), value.trim().to_string());
    }
    Ok(out)
}
