//! Time-domain star catalog engine: zone cross-match against a template
//! catalog, per-partition delta storage with nightly merges, light curves,
//! online transient detection and offline period search.

pub mod catalog;
pub mod crossmatch;
pub mod error;
pub mod lightcurve;
pub mod mining;
pub mod pipeline;
pub mod skygen;
pub mod store;

pub use catalog::{Density, EngineConfig, Epoch, FrameBatch, SkyCoord, SourceRecord};
pub use crossmatch::{range_join, MatchResult, ZoneIndex};
pub use error::{Error, Result};
pub use lightcurve::{query_curve, CurveSet, EpochRange, LightCurve};
pub use mining::{period_search, Alert, AlertKind, FrequencyGrid, OnlineConfig};
pub use pipeline::{run_night, scatter_gather_query, scaling_benchmark, NightConfig, Predicate};
pub use skygen::{build_template, observe_frame, FrameClock, SkyModel, TemplateCatalog, TransientInjection};
pub use store::{capacity_plan, NightStore, StoreReader, StoredRecord};
