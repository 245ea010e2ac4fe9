//! Stage commands. Each one reads its inputs, writes one artifact
//! directory under the configured outdir, and prints a one-line summary.
//! Stages communicate only through those files, so any stage can be rerun
//! in isolation and `pipeline` is nothing more than the fixed order.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ghostgrid_core::dynamics::{self, TourismVerdict};
use ghostgrid_core::error::{Error, Result};
use ghostgrid_core::geo::{self, cell_window, GeoPoint, GridIndex, RegionLevel, RegionSet};
use ghostgrid_core::ingest::{self, Poi, PositioningPoint};
use ghostgrid_core::locus::{self, HomeWorkAssignment};
use ghostgrid_core::mobility::{self, FlowDirection};
use ghostgrid_core::render::{self, RasterSpec};
use ghostgrid_core::synth::{self, DetectedOutputs, GroundTruth, WorldSpec};
use ghostgrid_core::vacancy::{self, VacancyRecord, VacancyRow, Verdict};

use crate::config::PipelineConfig;

fn open(path: &Path) -> Result<BufReader<File>> {
    let file = File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    Ok(BufReader::new(file))
}

fn ensure_stage_dir(cfg: &PipelineConfig, stage: &str) -> Result<PathBuf> {
    let dir = cfg.stage_dir(stage);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_with<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let file = File::create(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    let mut w = BufWriter::new(file);
    write(&mut w)?;
    w.flush()?;
    Ok(())
}

fn read_points(cfg: &PipelineConfig) -> Result<Vec<PositioningPoint>> {
    let path = cfg.points_path();
    let reader = open(&path)?;
    let (points, report) =
        ingest::parse_points(reader, cfg.inputs.format, Some(&cfg.window), cfg.strict)?;
    if !report.is_empty() {
        println!("points: {} accepted, {} rejected", points.len(), report.total());
    }
    Ok(points)
}

fn read_pois(cfg: &PipelineConfig) -> Result<Vec<Poi>> {
    let (pois, report) = ingest::parse_pois(open(&cfg.pois_path())?, cfg.strict)?;
    if !report.is_empty() {
        println!("pois: {} accepted, {} rejected", pois.len(), report.total());
    }
    Ok(pois)
}

fn region_set(cfg: &PipelineConfig, level: RegionLevel) -> Result<RegionSet> {
    let path = cfg.regions_path();
    let text = fs::read_to_string(&path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    let set = RegionSet::new(geo::parse_regions_geojson(&text)?, level)?;
    if set.regions().is_empty() {
        return Err(Error::validation(format!(
            "{}: no regions at the {level} level",
            path.display()
        )));
    }
    Ok(set)
}

fn read_assignments_artifact(cfg: &PipelineConfig) -> Result<Vec<HomeWorkAssignment>> {
    locus::read_assignments(open(&cfg.stage_dir("locus").join("assignments.csv"))?)
}

fn read_records_artifact(cfg: &PipelineConfig) -> Result<Vec<VacancyRow>> {
    vacancy::read_records(open(&cfg.stage_dir("vacancy").join("records.csv"))?)
}

/// Villa exclusion plus per-site assessment, shared by the vacancy and
/// render stages (the records table drops the ranked cells, so outlines
/// must re-derive them from the same inputs).
fn assess_all(
    cfg: &PipelineConfig,
    assignments: &[HomeWorkAssignment],
) -> Result<Vec<VacancyRecord>> {
    let pois = read_pois(cfg)?;
    let sites = vacancy::exclude_villa_adjacent(&pois, cfg.vacancy.villa_radius)?;
    let grid = vacancy::bin_homes_par(assignments, &cfg.projection, cfg.workers)?;
    sites
        .iter()
        .map(|p| vacancy::assess_site(p, &grid, &cfg.vacancy, &cfg.projection))
        .collect()
}

pub fn cmd_gen(cfg: &PipelineConfig, spec_path: &Path, seed: Option<u64>) -> Result<()> {
    let text = fs::read_to_string(spec_path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", spec_path.display())))
    })?;
    let mut spec: WorldSpec = toml::from_str(&text)
        .map_err(|e| Error::validation(format!("world spec {}: {e}", spec_path.display())))?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let world = synth::generate(&spec)?;
    let dir = ensure_stage_dir(cfg, "gen")?;
    write_with(&dir.join("points.csv"), |w| ingest::write_points(&world.points, w))?;
    write_with(&dir.join("pois.csv"), |w| ingest::write_pois(&world.pois, w))?;
    fs::write(dir.join("regions.geojson"), geo::write_regions_geojson(&world.regions))?;
    let truth = serde_json::to_string_pretty(&world.truth)
        .map_err(|e| Error::Internal(e.to_string()))?;
    fs::write(dir.join("truth.json"), truth + "\n")?;
    println!(
        "gen: {} points, {} pois, {} regions, {} users",
        world.points.len(),
        world.pois.len(),
        world.regions.len(),
        world.truth.users.len()
    );
    Ok(())
}

pub fn cmd_locus(cfg: &PipelineConfig) -> Result<()> {
    let points = read_points(cfg)?;
    let groups = locus::group_by_user(points);
    let assignments = locus::infer_all(&groups, &cfg.locus, cfg.workers)?;
    let dir = ensure_stage_dir(cfg, "locus")?;
    write_with(&dir.join("assignments.csv"), |w| {
        locus::write_assignments(&assignments, w)
    })?;
    println!("locus: {} of {} users anchored", assignments.len(), groups.len());
    Ok(())
}

pub fn cmd_vacancy(cfg: &PipelineConfig) -> Result<()> {
    let assignments = read_assignments_artifact(cfg)?;
    let records = assess_all(cfg, &assignments)?;
    let counties = region_set(cfg, RegionLevel::County)?;
    let ranking = vacancy::county_ranking(&records, &counties, cfg.ranking.mode, &cfg.projection)?;
    let dir = ensure_stage_dir(cfg, "vacancy")?;
    write_with(&dir.join("records.csv"), |w| vacancy::write_records(&records, w))?;
    write_with(&dir.join("ranking.csv"), |w| vacancy::write_ranking(&ranking, w))?;
    let vacant = records.iter().filter(|r| r.verdict == Verdict::Vacant).count();
    println!("vacancy: {} sites assessed, {} vacant", records.len(), vacant);
    Ok(())
}

pub fn cmd_classify(cfg: &PipelineConfig) -> Result<()> {
    let rows = read_records_artifact(cfg)?;
    let points = read_points(cfg)?;
    let mut table = Vec::new();
    let mut tourism_count = 0usize;
    for row in rows.iter().filter(|r| r.verdict == Verdict::Vacant) {
        let cells: HashSet<GridIndex> =
            cell_window(row.center_cell, cfg.vacancy.window_k)?.into_iter().collect();
        let member = |p: &PositioningPoint| cells.contains(&geo::cell_of(p.location, &cfg.projection));
        let series = dynamics::daily_population(&points, member, &cfg.window);
        let verdict =
            dynamics::classify_tourism(&series, &cfg.classify.holiday_pairs, cfg.classify.min_positive)?;
        if verdict == TourismVerdict::Tourism {
            tourism_count += 1;
        }
        table.push(vec![row.poi_name.clone(), verdict.to_string()]);
    }
    let dir = ensure_stage_dir(cfg, "classify")?;
    let header = vec!["site".to_string(), "verdict".to_string()];
    fs::write(dir.join("tourism.csv"), render::export_table(&header, &table)?)?;
    println!("classify: {} vacant sites, {} tourism", table.len(), tourism_count);
    Ok(())
}

pub fn cmd_series(cfg: &PipelineConfig) -> Result<()> {
    let points = read_points(cfg)?;
    let cities = region_set(cfg, RegionLevel::City)?;
    let week_start = cfg.series.week_start.unwrap_or(cfg.window.start_date);
    let dir = ensure_stage_dir(cfg, "series")?;
    let total = dynamics::daily_population(&points, |_| true, &cfg.window);
    write_with(&dir.join("daily_total.csv"), |w| dynamics::write_series(&total, w))?;
    for region in cities.regions() {
        let member = |p: &PositioningPoint| region.contains(p.location);
        let series = dynamics::daily_population(&points, member, &cfg.window);
        write_with(&dir.join(format!("daily_{}.csv", region.region_id)), |w| {
            dynamics::write_series(&series, w)
        })?;
        let profile =
            dynamics::hourly_profile(&points, member, week_start, cfg.window.utc_offset_minutes);
        write_with(&dir.join(format!("hourly_{}.csv", region.region_id)), |w| {
            dynamics::write_profile(&profile, w)
        })?;
    }
    println!("series: {} days, {} regions", total.len(), cities.regions().len());
    Ok(())
}

pub fn cmd_crosstab(cfg: &PipelineConfig) -> Result<()> {
    if cfg.crosstab.focal.is_empty() {
        return Err(Error::parameter("crosstab.focal is not set"));
    }
    let assignments = read_assignments_artifact(cfg)?;
    let cities = region_set(cfg, RegionLevel::City)?;
    let rows = mobility::homework_crosstab(
        &assignments,
        &cfg.crosstab.focal,
        &cfg.crosstab.named,
        &cities,
    )?;
    let dir = ensure_stage_dir(cfg, "crosstab")?;
    write_with(&dir.join("crosstab.csv"), |w| mobility::write_crosstab(&rows, w))?;
    println!("crosstab: {} rows for {}", rows.len(), cfg.crosstab.focal);
    Ok(())
}

pub fn cmd_migrate(cfg: &PipelineConfig) -> Result<()> {
    let points = read_points(cfg)?;
    let groups = locus::group_by_user(points);
    let cities = region_set(cfg, RegionLevel::City)?;
    let edges = mobility::all_migration_edges(
        &groups,
        &cities,
        cfg.migrate.first_fix,
        cfg.window.utc_offset_minutes,
        cfg.workers,
    );
    let dir = ensure_stage_dir(cfg, "migrate")?;
    write_with(&dir.join("edges.csv"), |w| mobility::write_edges(&edges, w))?;
    if !cfg.crosstab.focal.is_empty() {
        let focal = cfg.crosstab.focal.as_str();
        let (inflow, outflow) = mobility::flow_series(&edges, focal, &cfg.window);
        write_with(&dir.join("flow_in.csv"), |w| dynamics::write_series(&inflow, w))?;
        write_with(&dir.join("flow_out.csv"), |w| dynamics::write_series(&outflow, w))?;
        let range = (cfg.window.start_date, cfg.window.end_date);
        let header = vec!["region".to_string(), "share".to_string()];
        for (direction, name) in [
            (FlowDirection::Inflow, "partners_in.csv"),
            (FlowDirection::Outflow, "partners_out.csv"),
        ] {
            let partners = mobility::top_partners(&edges, focal, range, direction)?;
            let rows: Vec<Vec<String>> = partners
                .iter()
                .map(|(region, share)| vec![region.clone(), format!("{share}")])
                .collect();
            fs::write(dir.join(name), render::export_table(&header, &rows)?)?;
        }
    }
    println!("migrate: {} edges", edges.len());
    Ok(())
}

fn padded_bbox(points: &[GeoPoint]) -> Result<(GeoPoint, GeoPoint)> {
    let (mut lat_min, mut lon_min) = (f64::INFINITY, f64::INFINITY);
    let (mut lat_max, mut lon_max) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        lat_min = lat_min.min(p.lat);
        lon_min = lon_min.min(p.lon);
        lat_max = lat_max.max(p.lat);
        lon_max = lon_max.max(p.lon);
    }
    // Degenerate spans still need a visible frame. Longitude is half-open
    // at the antimeridian, so the east edge clamps just short of 180.
    let dlat = ((lat_max - lat_min) * 0.05).max(1e-3);
    let dlon = ((lon_max - lon_min) * 0.05).max(1e-3);
    let min = GeoPoint::new((lat_min - dlat).max(-90.0), (lon_min - dlon).max(-180.0))?;
    let max = GeoPoint::new((lat_max + dlat).min(90.0), (lon_max + dlon).min(179.999_999))?;
    Ok((min, max))
}

pub fn cmd_render(cfg: &PipelineConfig) -> Result<()> {
    let assignments = read_assignments_artifact(cfg)?;
    let mut homes = Vec::new();
    let mut works = Vec::new();
    for a in &assignments {
        homes.extend(a.homes.iter().map(|h| h.location));
        works.extend(a.work);
    }
    let (bbox_min, bbox_max) = match cfg.render.bbox {
        Some([lat_min, lon_min, lat_max, lon_max]) => {
            (GeoPoint::new(lat_min, lon_min)?, GeoPoint::new(lat_max, lon_max)?)
        }
        None => {
            let mut all = homes.clone();
            all.extend_from_slice(&works);
            if all.is_empty() {
                return Err(Error::parameter(
                    "render.bbox is required when no anchors were inferred",
                ));
            }
            padded_bbox(&all)?
        }
    };
    let spec = RasterSpec::new(bbox_min, bbox_max, cfg.render.width_px)?;
    let ppm = render::render_dot_density(&homes, &works, &spec)?;
    let dir = ensure_stage_dir(cfg, "render")?;
    fs::write(dir.join("dots.ppm"), &ppm)?;
    let records = assess_all(cfg, &assignments)?;
    fs::write(
        dir.join("vacant_cells.geojson"),
        render::export_vacancy_geojson(&records, &cfg.projection),
    )?;
    println!(
        "render: {}x{} px, {} homes, {} works",
        spec.width_px,
        spec.height_px(),
        homes.len(),
        works.len()
    );
    Ok(())
}

pub fn cmd_pipeline(cfg: &PipelineConfig) -> Result<()> {
    cmd_locus(cfg)?;
    cmd_vacancy(cfg)?;
    cmd_classify(cfg)?;
    cmd_series(cfg)?;
    if cfg.crosstab.focal.is_empty() {
        println!("crosstab: skipped, crosstab.focal is not set");
    } else {
        cmd_crosstab(cfg)?;
    }
    cmd_migrate(cfg)?;
    cmd_render(cfg)?;
    Ok(())
}

fn parse_tourism(s: &str) -> Result<TourismVerdict> {
    match s {
        "tourism" => Ok(TourismVerdict::Tourism),
        "not_tourism" => Ok(TourismVerdict::NotTourism),
        other => Err(Error::validation(format!("unknown tourism verdict {other:?}"))),
    }
}

pub fn cmd_score(cfg: &PipelineConfig) -> Result<()> {
    let truth_path = cfg.truth_path();
    let text = fs::read_to_string(&truth_path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", truth_path.display())))
    })?;
    let truth: GroundTruth = serde_json::from_str(&text)
        .map_err(|e| Error::validation(format!("truth {}: {e}", truth_path.display())))?;

    let records = read_records_artifact(cfg)?;
    let site_verdicts = records.iter().map(|r| (r.poi_name.clone(), r.verdict)).collect();

    let tourism_path = cfg.stage_dir("classify").join("tourism.csv");
    let (header, rows) = render::parse_table(open(&tourism_path)?)?;
    if header != ["site", "verdict"] {
        return Err(Error::validation(format!(
            "{}: unexpected header {header:?}",
            tourism_path.display()
        )));
    }
    let mut tourism = Vec::new();
    for row in &rows {
        tourism.push((row[0].clone(), parse_tourism(&row[1])?));
    }

    let edges = mobility::read_edges(open(&cfg.stage_dir("migrate").join("edges.csv"))?)?;

    let (crosstab, truth_crosstab) = if cfg.crosstab.focal.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        let detected =
            mobility::read_crosstab(open(&cfg.stage_dir("crosstab").join("crosstab.csv"))?)?;
        let cities = region_set(cfg, RegionLevel::City)?;
        let truth_rows = mobility::homework_crosstab(
            &synth::truth_assignments(&truth),
            &cfg.crosstab.focal,
            &cfg.crosstab.named,
            &cities,
        )?;
        (detected, truth_rows)
    };

    let detected = DetectedOutputs { site_verdicts, tourism, edges, crosstab };
    let report = synth::score(&detected, &truth, &truth_crosstab)?;
    let dir = ensure_stage_dir(cfg, "score")?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Internal(e.to_string()))?;
    fs::write(dir.join("report.json"), json + "\n")?;
    println!(
        "score: perfect={} edge_f1={:.4} crosstab_l1={:.4}",
        report.is_perfect(),
        report.edge_f1,
        report.crosstab_l1
    );
    Ok(())
}
