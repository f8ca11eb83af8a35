//! Configured experiment runs: stages, CSV/JSON artifacts and the run
//! manifest.
//!
//! Every stage is a pure function of the config and seed. Replicates fan out
//! over the rayon pool and are merged in replicate order, so outputs do not
//! depend on scheduling. Floats are written in shortest round-trip form.

mod config;

pub use config::{AnalysisConfig, CdiMethod, ExperimentConfig, FamilyName, MeasureConfig, SimulationConfig, Stage};

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::cdi::{
    cdi_gamma_series, cdi_psi_integral, check_condition, default_psi_levels, default_series_levels, estimate_tm,
    verdicts_agree, CdiVerdict, Condition,
};
use crate::coalescent::{simulate_coalescent, RateTable};
use crate::error::{Error, Result};
use crate::lookdown::{empirical_support, simulate_lookdown, LookdownOptions, LookdownTrajectory};
use crate::measures::LambdaMeasure;
use crate::streams::StreamKey;
use crate::support::{
    box_counting_dimension, dyadic_scales, dyadic_times, modulus_envelope, radius_profile, range_times, range_union,
    DimensionEstimate, ModulusReport, PointCloud, RadiusReport,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.json";

/// Series levels never go below this table size in the `cdi` stage.
const CDI_TABLE_BLOCKS: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub config_hash: String,
    pub toolkit_version: String,
    pub seed: u64,
    /// Stream keys of every replicate; each role draws from its own stream
    /// under the key.
    pub replicate_streams: Vec<StreamKey>,
    pub stages: Vec<StageTiming>,
    pub wall_seconds: f64,
    pub files: Vec<OutputFile>,
    pub complete: bool,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Decimal text of `x`, shortest form that parses back to the same value.
pub fn format_float(x: f64) -> String {
    format!("{x}")
}

/// A CSV table held in memory until written.
struct Table {
    file: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(file: impl Into<String>, header: &[&str]) -> Self {
        Self {
            file: file.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

macro_rules! row {
    ($($cell:expr),* $(,)?) => {
        vec![$(Cell::text(&$cell)),*]
    };
}

/// Uniform text conversion for CSV cells.
trait Cell {
    fn text(&self) -> String;
}

impl Cell for f64 {
    fn text(&self) -> String {
        format_float(*self)
    }
}

macro_rules! display_cell {
    ($($t:ty),*) => {
        $(impl Cell for $t {
            fn text(&self) -> String {
                self.to_string()
            }
        })*
    };
}

display_cell!(usize, u32, u64, bool, &str, String);

struct Run<'a> {
    config: &'a ExperimentConfig,
    measure: LambdaMeasure,
    out: &'a Path,
    files: Vec<OutputFile>,
    summary: Map<String, Value>,
}

impl Run<'_> {
    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.files.push(OutputFile {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    fn write_table(&mut self, table: Table) -> Result<()> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let path = self.out.join(&table.file);
        let csv_err = |e: csv::Error| Error::io(&path, std::io::Error::other(e));
        writer.write_record(&table.header).map_err(csv_err)?;
        for row in &table.rows {
            writer.write_record(row).map_err(csv_err)?;
        }
        let bytes = writer.into_inner().map_err(|e| Error::io(&path, std::io::Error::other(e.to_string())))?;
        self.write_bytes(&table.file, &bytes)
    }

    fn key(&self, replicate: usize) -> StreamKey {
        StreamKey::new(self.config.seed, replicate as u64)
    }

    /// Run `f` for every replicate in parallel, collecting in replicate order.
    fn replicates<T: Send>(&self, f: impl Fn(usize, StreamKey) -> Result<T> + Sync) -> Result<Vec<T>> {
        (0..self.config.analysis.replicates)
            .into_par_iter()
            .map(|r| f(r, self.key(r)).map_err(|e| e.in_replicate(r)))
            .collect()
    }

    fn lookdown(&self, n: usize, times: Vec<f64>, keep_log: bool, key: StreamKey) -> Result<LookdownTrajectory> {
        let sim = &self.config.simulation;
        let options = LookdownOptions {
            sample_times: times,
            keep_event_log: keep_log,
            event_budget: sim.event_budget,
            check_shifts: false,
            tol: self.config.analysis.tol,
        };
        simulate_lookdown(&self.measure, n, sim.d, sim.horizon, &sim.init, &options, key)
    }

    fn box_dimension(&self, cloud: &PointCloud) -> Result<DimensionEstimate> {
        let scales = match &self.config.analysis.scales {
            Some(s) => s.clone(),
            None => dyadic_scales(cloud, self.config.analysis.scale_count),
        };
        box_counting_dimension(cloud, &scales)
    }

    fn rates(&mut self) -> Result<()> {
        let n = self.config.simulation.n;
        let table = RateTable::build(&self.measure, n, self.config.analysis.tol)?;
        let mut rates = Table::new("rates.csv", &["b", "k", "lambda", "weight"]);
        let mut totals = Table::new("rate_totals.csv", &["b", "total_rate", "decrease_rate"]);
        for b in 2..=n {
            let row = table.row(b);
            for k in 2..=b {
                rates.push(row![b, k, row.lambda(k), row.weight(k)]);
            }
            totals.push(row![b, table.total_rate(b)?, table.decrease_rate(b)?]);
        }
        self.summary.insert(
            "rates".into(),
            json!({ "max_blocks": n, "consistency_defect": table.consistency_defect() }),
        );
        self.write_table(rates)?;
        self.write_table(totals)
    }

    fn simulate_coalescent(&mut self) -> Result<()> {
        let config = self.config;
        let sim = &config.simulation;
        let table = RateTable::build(&self.measure, sim.n, self.config.analysis.tol)?;
        let paths = self.replicates(|_, key| simulate_coalescent(&table, sim.n, sim.horizon, key))?;
        let mut out = Table::new(
            "coalescent_paths.csv",
            &["replicate", "event_index", "time", "block_count_after", "merge_size"],
        );
        for (r, path) in paths.iter().enumerate() {
            for (i, e) in path.events.iter().enumerate() {
                out.push(row![r, i, e.time, e.partition.block_count(), e.merged.len()]);
            }
        }
        let finals: Vec<f64> = paths.iter().map(|p| p.final_partition().block_count() as f64).collect();
        self.summary.insert(
            "simulate-coalescent".into(),
            json!({ "mean_final_blocks": finals.iter().sum::<f64>() / finals.len() as f64 }),
        );
        self.write_table(out)
    }

    fn simulate_lookdown(&mut self) -> Result<()> {
        let config = self.config;
        let sim = &config.simulation;
        let mut times = dyadic_times(sim.horizon, self.config.analysis.grid_depth);
        times.extend_from_slice(&sim.snapshot_times);
        times.sort_by(f64::total_cmp);
        times.dedup();
        let trajs = self.replicates(|_, key| self.lookdown(sim.n, times.clone(), true, key))?;
        let mut header = vec!["replicate", "t", "level"];
        let coords: Vec<String> = (1..=sim.d).map(|i| format!("x_{i}")).collect();
        header.extend(coords.iter().map(String::as_str));
        let mut snaps = Table::new("snapshots.csv", &header);
        for (r, traj) in trajs.iter().enumerate() {
            for snap in &traj.snapshots {
                for (level, x) in snap.positions.chunks_exact(sim.d).enumerate() {
                    let mut line = row![r, snap.time, level + 1];
                    line.extend(x.iter().map(Cell::text));
                    snaps.push(line);
                }
            }
        }
        self.write_table(snaps)?;
        for (r, traj) in trajs.iter().enumerate() {
            let mut events = Table::new(format!("events_r{r:04}.csv"), &["time", "kind", "levels", "parent"]);
            for e in traj.event_log()? {
                let levels: Vec<String> = e.levels.iter().map(usize::to_string).collect();
                events.push(row![e.time, e.kind.as_str(), levels.join(" "), e.parent_level()]);
            }
            self.write_table(events)?;
        }
        let counts: Vec<usize> = trajs.iter().map(|t| t.event_count).collect();
        self.summary.insert("simulate-lookdown".into(), json!({ "event_counts": counts }));
        Ok(())
    }

    fn cdi(&mut self) -> Result<()> {
        let config = self.config;
        let (sim, an) = (&config.simulation, &config.analysis);
        let table = RateTable::build(&self.measure, sim.n.max(CDI_TABLE_BLOCKS), an.tol)?;
        let mut verdicts: Vec<CdiVerdict> = Vec::new();
        if an.cdi_method != CdiMethod::Psi {
            verdicts.push(cdi_gamma_series(&table, &default_series_levels())?);
        }
        if an.cdi_method != CdiMethod::Gamma {
            verdicts.push(cdi_psi_integral(&self.measure, 1.0, &default_psi_levels(), an.tol)?);
        }
        let mut cdi = Table::new("cdi.csv", &["method", "level", "value", "verdict"]);
        for v in &verdicts {
            for p in &v.evidence {
                cdi.push(row![v.method.as_str(), p.level, p.value, v.verdict.as_str()]);
            }
        }
        let mut tm = Table::new(
            "tm.csv",
            &["n", "m", "mean", "stderr", "censored_fraction", "replicates", "horizon", "gamma_bound", "lambda_bound"],
        );
        for &m in &an.m_grid {
            let e = estimate_tm(&table, m, sim.n, None, an.replicates, self.config.seed)?;
            tm.push(row![e.n, e.m, e.mean, e.stderr, e.censored_fraction, e.replicates, e.horizon, e.gamma_bound, e.lambda_bound]);
        }
        let mut conditions = Table::new(
            "conditions.csv",
            &["condition", "alpha", "m", "value", "truncation_tail", "growth_exponent", "verdict"],
        );
        let mut condition_verdicts = Map::new();
        for (condition, name) in [(Condition::A, "A"), (Condition::B, "B")] {
            let report = check_condition(&table, condition, an.alpha, &an.m_grid)?;
            for r in &report.rows {
                conditions.push(row![name, an.alpha, r.m, r.value, r.truncation_tail, report.growth_exponent, format!("{:?}", report.verdict)]);
            }
            condition_verdicts.insert(name.into(), json!(format!("{:?}", report.verdict)));
        }
        let agree = verdicts.len() == 2 && verdicts_agree(verdicts[0].verdict, verdicts[1].verdict);
        self.summary.insert(
            "cdi".into(),
            json!({
                "verdicts": verdicts.iter().map(|v| json!({"method": v.method.as_str(), "verdict": v.verdict.as_str(), "decay_ratios": v.decay_ratios})).collect::<Vec<_>>(),
                "methods_agree": agree,
                "conditions": condition_verdicts,
            }),
        );
        self.write_table(cdi)?;
        self.write_table(tm)?;
        self.write_table(conditions)
    }

    fn modulus(&mut self) -> Result<()> {
        let config = self.config;
        let (sim, an) = (&config.simulation, &config.analysis);
        let times = dyadic_times(sim.horizon, an.grid_depth);
        let parts = self.replicates(|_, key| {
            let traj = self.lookdown(sim.n, times.clone(), false, key)?;
            modulus_envelope(std::slice::from_ref(&traj), an.grid_depth, an.alpha)
        })?;
        let report = ModulusReport::combine(parts)?;
        let mut scales = Table::new("modulus.csv", &["scale", "c_hat", "c_theory", "pass", "depth", "pass_fraction"]);
        let mut reps = Table::new("modulus_replicates.csv", &["replicate", "depth", "scale", "ratio"]);
        for s in &report.scales {
            scales.push(row![s.delta, s.c_hat, report.c_theory, s.c_hat < report.c_theory, s.depth, s.pass_fraction]);
            for (r, &ratio) in s.per_replicate.iter().enumerate() {
                reps.push(row![r, s.depth, s.delta, ratio]);
            }
        }
        self.summary.insert(
            "modulus".into(),
            json!({
                "n": report.n,
                "c_theory": report.c_theory,
                "trend_slope": report.trend_slope,
                "bounded_trend": report.bounded_trend,
                "all_scales_pass_fraction": report.all_scales_pass_fraction(0..=an.grid_depth),
            }),
        );
        self.write_table(scales)?;
        self.write_table(reps)
    }

    fn dimension(&mut self) -> Result<()> {
        let config = self.config;
        let (sim, an) = (&config.simulation, &config.analysis);
        let t = self.config.dimension_time();
        let mut sizes = vec![sim.n];
        if an.doubling_check {
            sizes.push(2 * sim.n);
        }
        let mut main = Table::new("dimension.csv", &["scale", "count", "slope", "ci_lo", "ci_hi", "replicate", "n"]);
        let mut doubling = Table::new("dimension_sensitivity.csv", &["n", "replicate", "slope", "ci_lo", "ci_hi"]);
        let mut mean_slopes = Map::new();
        for &n in &sizes {
            let estimates = self.replicates(|r, key| {
                let traj = self.lookdown(n, vec![t], false, key)?;
                self.box_dimension(&empirical_support(&traj, t, r)?)
            })?;
            for (r, e) in estimates.iter().enumerate() {
                doubling.push(row![n, r, e.slope, e.ci.0, e.ci.1]);
                if n == sim.n {
                    for (scale, count) in e.scales.iter().zip(&e.counts) {
                        main.push(row![*scale, *count, e.slope, e.ci.0, e.ci.1, r, n]);
                    }
                }
            }
            let mean = estimates.iter().map(|e| e.slope).sum::<f64>() / estimates.len() as f64;
            mean_slopes.insert(n.to_string(), json!(mean));
        }
        self.summary.insert(
            "dimension".into(),
            json!({ "t": t, "mean_slope_by_n": mean_slopes, "upper_bound": 2.0 / an.alpha }),
        );
        self.write_table(main)?;
        self.write_table(doubling)
    }

    fn radius(&mut self) -> Result<()> {
        let config = self.config;
        let (sim, an) = (&config.simulation, &config.analysis);
        let grid = self.config.radius_grid();
        let parts = self.replicates(|_, key| {
            let traj = self.lookdown(sim.n, grid.clone(), false, key)?;
            radius_profile(std::slice::from_ref(&traj), &grid, an.alpha)
        })?;
        let report = RadiusReport::combine(parts)?;
        let mut out = Table::new("radius.csv", &["t", "ratio", "replicate"]);
        for row in &report.rows {
            for (r, &ratio) in row.ratios.iter().enumerate() {
                out.push(row![row.t, ratio, r]);
            }
        }
        self.summary.insert(
            "radius".into(),
            json!({ "c_theory": report.c_theory, "bounded_fraction": report.bounded_fraction }),
        );
        self.write_table(out)
    }

    fn range(&mut self) -> Result<()> {
        let config = self.config;
        let (sim, an) = (&config.simulation, &config.analysis);
        let (t0, t1) = self.config.range_window();
        let times = range_times(t0, t1, an.snapshot_count);
        let estimates = self.replicates(|r, key| {
            let traj = self.lookdown(sim.n, times.clone(), false, key)?;
            self.box_dimension(&range_union(&traj, t0, t1, an.snapshot_count, r)?)
        })?;
        let mut out = Table::new("range.csv", &["scale", "count", "slope", "ci_lo", "ci_hi", "replicate", "n"]);
        for (r, e) in estimates.iter().enumerate() {
            for (scale, count) in e.scales.iter().zip(&e.counts) {
                out.push(row![*scale, *count, e.slope, e.ci.0, e.ci.1, r, sim.n]);
            }
        }
        let mean = estimates.iter().map(|e| e.slope).sum::<f64>() / estimates.len() as f64;
        self.summary.insert(
            "range".into(),
            json!({ "window": [t0, t1], "snapshots": an.snapshot_count, "mean_slope": mean, "upper_bound": 2.0 + 2.0 / an.alpha }),
        );
        self.write_table(out)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("json.partial");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Execute the configured stages and write all artifacts plus the manifest
/// into `config.output_dir`.
///
/// Any stale manifest is removed first, so a directory only carries a
/// manifest once a run has finished.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunManifest> {
    config.validate()?;
    let started = Instant::now();
    let out = config.output_dir.as_path();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let manifest_path = out.join(MANIFEST_FILE);
    if manifest_path.exists() {
        fs::remove_file(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    }
    let config_json = config.to_json();
    let mut run = Run {
        config,
        measure: config.measure.to_measure()?,
        out,
        files: Vec::new(),
        summary: Map::new(),
    };
    run.write_bytes(CONFIG_FILE, config_json.as_bytes())?;
    let mut stages = Vec::with_capacity(config.stages.len());
    for &stage in &config.stages {
        let clock = Instant::now();
        match stage {
            Stage::Rates => run.rates()?,
            Stage::SimulateCoalescent => run.simulate_coalescent()?,
            Stage::SimulateLookdown => run.simulate_lookdown()?,
            Stage::Cdi => run.cdi()?,
            Stage::Modulus => run.modulus()?,
            Stage::Dimension => run.dimension()?,
            Stage::Radius => run.radius()?,
            Stage::Range => run.range()?,
        }
        stages.push(StageTiming {
            stage,
            wall_seconds: clock.elapsed().as_secs_f64(),
        });
    }
    let summary = serde_json::to_vec_pretty(&Value::Object(std::mem::take(&mut run.summary))).expect("summary serializes");
    run.write_bytes(SUMMARY_FILE, &summary)?;
    let manifest = RunManifest {
        name: config.name.clone(),
        config_hash: sha256_hex(config_json.as_bytes()),
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        replicate_streams: (0..config.analysis.replicates).map(|r| run.key(r)).collect(),
        stages,
        wall_seconds: started.elapsed().as_secs_f64(),
        files: run.files,
        complete: true,
    };
    let bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_atomic(&manifest_path, &bytes)?;
    Ok(manifest)
}

/// Load the manifest of a finished run.
pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::config(MANIFEST_FILE, e.to_string()))
}

/// Files whose current checksum differs from the manifest, or are missing.
pub fn verify_manifest(dir: &Path, manifest: &RunManifest) -> Vec<PathBuf> {
    manifest
        .files
        .iter()
        .filter(|f| fs::read(dir.join(&f.path)).map_or(true, |bytes| sha256_hex(&bytes) != f.sha256))
        .map(|f| dir.join(&f.path))
        .collect()
}
