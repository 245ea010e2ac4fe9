//! Run configuration. One TOML file covers every stage; any key can be
//! overridden on the command line with `--set section.key=value`.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use ghostgrid_core::dynamics::{default_holiday_pairs, HolidayPair};
use ghostgrid_core::error::{Error, Result};
use ghostgrid_core::geo::ProjectionParams;
use ghostgrid_core::ingest::{PointFormat, StudyWindow};
use ghostgrid_core::locus::LocusParams;
use ghostgrid_core::mobility::FirstFixRule;
use ghostgrid_core::vacancy::{CapacityParams, RankingMode, VacancyParams};

/// Input file locations. Unset paths default to the `gen` stage outputs
/// under the configured outdir, so a generated world feeds the pipeline
/// without any path plumbing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputsConfig {
    pub points: Option<PathBuf>,
    pub pois: Option<PathBuf>,
    pub regions: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub format: PointFormat,
}

impl Default for InputsConfig {
    fn default() -> Self {
        InputsConfig {
            points: None,
            pois: None,
            regions: None,
            truth: None,
            format: PointFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    pub holiday_pairs: Vec<HolidayPair>,
    /// Holiday pairs that must show a population lift for a Tourism call.
    pub min_positive: usize,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig { holiday_pairs: default_holiday_pairs(), min_positive: 2 }
    }
}

/// Region of interest for the crosstab and flow reports. An empty focal
/// id disables both (the pipeline command notes the skip and moves on).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrosstabConfig {
    pub focal: String,
    pub named: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MigrateConfig {
    pub first_fix: FirstFixRule,
}

impl Default for MigrateConfig {
    fn default() -> Self {
        MigrateConfig { first_fix: FirstFixRule::FirstMapped }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub width_px: usize,
    /// [lat_min, lon_min, lat_max, lon_max]; omitted means the padded
    /// bounding box of the inferred anchors.
    pub bbox: Option<[f64; 4]>,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig { width_px: 512, bbox: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeriesConfig {
    /// First day of the hourly-profile week; defaults to the window start.
    pub week_start: Option<NaiveDate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankingConfig {
    pub mode: RankingMode,
}

impl Default for RankingConfig {
    fn default() -> Self {
        RankingConfig { mode: RankingMode::PoiCount }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: InputsConfig,
    pub outdir: PathBuf,
    pub workers: usize,
    /// Abort on the first malformed input row instead of counting it.
    pub strict: bool,
    #[serde(deserialize_with = "window_over_default")]
    pub window: StudyWindow,
    pub projection: ProjectionParams,
    pub locus: LocusParams,
    pub vacancy: VacancyParams,
    pub capacity: CapacityParams,
    pub classify: ClassifyConfig,
    pub crosstab: CrosstabConfig,
    pub migrate: MigrateConfig,
    pub render: RenderConfig,
    pub series: SeriesConfig,
    pub ranking: RankingConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            inputs: InputsConfig::default(),
            outdir: PathBuf::from("out"),
            workers: 1,
            strict: false,
            window: default_window(),
            projection: ProjectionParams::default(),
            locus: LocusParams::default(),
            vacancy: VacancyParams::default(),
            capacity: CapacityParams::default(),
            classify: ClassifyConfig::default(),
            crosstab: CrosstabConfig::default(),
            migrate: MigrateConfig::default(),
            render: RenderConfig::default(),
            series: SeriesConfig::default(),
            ranking: RankingConfig::default(),
        }
    }
}

fn default_window() -> StudyWindow {
    StudyWindow {
        start_date: NaiveDate::from_ymd_opt(2014, 9, 8).unwrap(),
        end_date: NaiveDate::from_ymd_opt(2015, 4, 22).unwrap(),
        utc_offset_minutes: 480,
    }
}

/// Lets a config or `--set` override name only some window fields; the
/// rest keep their defaults.
fn window_over_default<'de, D>(de: D) -> std::result::Result<StudyWindow, D::Error>
where
    D: serde::Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(default)]
    struct Partial {
        start_date: NaiveDate,
        end_date: NaiveDate,
        utc_offset_minutes: i32,
    }
    impl Default for Partial {
        fn default() -> Self {
            let w = default_window();
            Partial {
                start_date: w.start_date,
                end_date: w.end_date,
                utc_offset_minutes: w.utc_offset_minutes,
            }
        }
    }
    let p = Partial::deserialize(de)?;
    Ok(StudyWindow {
        start_date: p.start_date,
        end_date: p.end_date,
        utc_offset_minutes: p.utc_offset_minutes,
    })
}

impl PipelineConfig {
    /// The study window owns the UTC offset; anchor inference follows it
    /// so the two can never disagree.
    pub fn normalize(&mut self) {
        self.locus.utc_offset_minutes = self.window.utc_offset_minutes;
    }

    pub fn validate(&self) -> Result<()> {
        StudyWindow::new(
            self.window.start_date,
            self.window.end_date,
            self.window.utc_offset_minutes,
        )?;
        self.projection.validate()?;
        self.locus.validate()?;
        self.vacancy.validate()?;
        self.capacity.validate()?;
        for pair in &self.classify.holiday_pairs {
            pair.validate()?;
        }
        if self.classify.min_positive == 0 {
            return Err(Error::parameter("classify.min_positive must be >= 1"));
        }
        if self.workers == 0 {
            return Err(Error::parameter("workers must be >= 1"));
        }
        if self.render.width_px == 0 {
            return Err(Error::parameter("render.width_px must be >= 1"));
        }
        if let Some([lat_min, lon_min, lat_max, lon_max]) = self.render.bbox {
            if !(lat_min < lat_max && lon_min < lon_max) {
                return Err(Error::parameter(
                    "render.bbox must be [lat_min, lon_min, lat_max, lon_max] with min < max",
                ));
            }
        }
        Ok(())
    }

    pub fn points_path(&self) -> PathBuf {
        self.input_or_gen(&self.inputs.points, "points.csv")
    }

    pub fn pois_path(&self) -> PathBuf {
        self.input_or_gen(&self.inputs.pois, "pois.csv")
    }

    pub fn regions_path(&self) -> PathBuf {
        self.input_or_gen(&self.inputs.regions, "regions.geojson")
    }

    pub fn truth_path(&self) -> PathBuf {
        self.input_or_gen(&self.inputs.truth, "truth.json")
    }

    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.outdir.join(stage)
    }

    fn input_or_gen(&self, set: &Option<PathBuf>, name: &str) -> PathBuf {
        match set {
            Some(p) => p.clone(),
            None => self.outdir.join("gen").join(name),
        }
    }
}

/// Loads the configuration, applies `--set` overrides, and validates.
/// A missing path means pure defaults plus overrides.
pub fn load_config(path: Option<&Path>, sets: &[String]) -> Result<PipelineConfig> {
    let mut root: toml::Table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            toml::from_str(&text)
                .map_err(|e| Error::validation(format!("config {}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for spec in sets {
        apply_set(&mut root, spec)?;
    }
    let mut cfg: PipelineConfig = toml::Value::Table(root)
        .try_into()
        .map_err(|e| Error::validation(format!("config: {e}")))?;
    cfg.normalize();
    cfg.validate()?;
    Ok(cfg)
}

/// Applies one `key.path=value` override onto the parsed config tree,
/// creating intermediate tables as needed.
fn apply_set(root: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::parameter(format!("--set {spec:?} is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::parameter(format!("--set {spec:?} has an empty key segment")));
    }
    let mut table = root;
    for key in &keys[..keys.len() - 1] {
        table = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::parameter(format!("--set {path}: {key:?} is not a table")))?;
    }
    table.insert(keys[keys.len() - 1].to_string(), parse_override(raw));
    Ok(())
}

/// Parses an override literal as the value of a one-key TOML document.
/// Bare words fall back to strings so `--set crosstab.focal=metro` works
/// without nested quoting; dates become strings because every date field
/// here deserializes from one.
fn parse_override(raw: &str) -> toml::Value {
    let trimmed = raw.trim();
    match toml::from_str::<toml::Table>(&format!("v = {trimmed}")) {
        Ok(mut t) => match t.remove("v") {
            Some(toml::Value::Datetime(d)) => toml::Value::String(d.to_string()),
            Some(v) => v,
            None => toml::Value::String(trimmed.to_string()),
        },
        Err(_) => toml::Value::String(trimmed.to_string()),
    }
}
