//! Detection of sparsely inhabited housing areas from anonymized
//! positioning logs and residential points of interest.
//!
//! The pipeline stages, in dependency order:
//!
//! 1. [`ingest`] parses positioning logs and POI tables with validation.
//! 2. [`locus`] clusters each user's night and workday fixes to infer home
//!    and work anchor points.
//! 3. [`vacancy`] bins homes onto a 100 m national grid, assesses each
//!    residential POI's neighborhood, and ranks counties.
//! 4. [`dynamics`] builds population time series and classifies holiday
//!    tourism sites.
//! 5. [`mobility`] derives home-work crosstabs and inter-city migration
//!    edges from day-level city sequences.
//! 6. [`render`] emits GeoJSON overlays, dot-density rasters, and
//!    delimited tables.
//! 7. [`synth`] generates seeded synthetic worlds with ground truth for
//!    end-to-end verification.
//!
//! [`geo`], [`time`], and [`par`] supply the shared grid, clock, and
//! worker primitives.

pub mod dynamics;
pub mod error;
pub mod geo;
pub mod ingest;
pub mod locus;
pub mod mobility;
pub mod par;
pub mod render;
pub mod synth;
pub mod time;
pub mod vacancy;

pub use dynamics::{DaySeries, HolidayPair, HourProfile, TourismVerdict};
pub use error::{Error, Result};
pub use geo::{GeoPoint, GridIndex, GridPopulation, ProjectionParams, Region, RegionLevel};
pub use ingest::{Poi, PoiCategory, PointFormat, PositioningPoint, RejectionReport, StudyWindow};
pub use locus::{DbscanParams, HomeWorkAssignment, LocusParams, TimedPoint};
pub use mobility::{CrosstabRow, DayCity, FirstFixRule, FlowDirection, MigrationEdge};
pub use render::RasterSpec;
pub use synth::{DetectedOutputs, GroundTruth, ScoreReport, World, WorldSpec};
pub use vacancy::{CapacityParams, VacancyParams, VacancyRecord, Verdict};
