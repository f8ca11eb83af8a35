use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lookdown::Init;
use crate::measures::{Density, LambdaMeasure, DEFAULT_TOL};

/// Pipeline stages, also the CLI subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Rates,
    SimulateCoalescent,
    SimulateLookdown,
    Cdi,
    Modulus,
    Dimension,
    Radius,
    Range,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Rates,
        Stage::SimulateCoalescent,
        Stage::SimulateLookdown,
        Stage::Cdi,
        Stage::Modulus,
        Stage::Dimension,
        Stage::Radius,
        Stage::Range,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Rates => "rates",
            Stage::SimulateCoalescent => "simulate-coalescent",
            Stage::SimulateLookdown => "simulate-lookdown",
            Stage::Cdi => "cdi",
            Stage::Modulus => "modulus",
            Stage::Dimension => "dimension",
            Stage::Radius => "radius",
            Stage::Range => "range",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyName {
    Kingman,
    Beta,
    Uniform,
    Custom,
}

/// Measure block. Kingman reads `atom0` (default 1); Beta needs `beta`;
/// Custom reads both atoms and an optional piecewise-linear density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    pub family: FamilyName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atom0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atom1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_table: Option<Vec<(f64, f64)>>,
}

impl MeasureConfig {
    pub fn to_measure(&self) -> Result<LambdaMeasure> {
        let field_err = |field: &str, e: Error| Error::config(format!("measure.{field}"), e.to_string());
        match self.family {
            FamilyName::Kingman => LambdaMeasure::kingman(self.atom0.unwrap_or(1.0)).map_err(|e| field_err("atom0", e)),
            FamilyName::Beta => {
                let beta = self
                    .beta
                    .ok_or_else(|| Error::config("measure.beta", "required for the beta family"))?;
                LambdaMeasure::beta(beta).map_err(|e| field_err("beta", e))
            }
            FamilyName::Uniform => Ok(LambdaMeasure::uniform()),
            FamilyName::Custom => {
                let density = match &self.density_table {
                    Some(table) => Density::Table(table.clone()),
                    None => Density::None,
                };
                LambdaMeasure::custom(self.atom0.unwrap_or(0.0), self.atom1.unwrap_or(0.0), density)
                    .map_err(|e| field_err("density_table", e))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub n: usize,
    pub d: usize,
    #[serde(rename = "T", alias = "horizon")]
    pub horizon: f64,
    pub init: Init,
    /// Extra snapshot times for `simulate-lookdown`, on top of the dyadic
    /// grid of depth `analysis.grid_depth`.
    pub snapshot_times: Vec<f64>,
    pub event_budget: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n: 50,
            d: 2,
            horizon: 1.0,
            init: Init::Origin,
            snapshot_times: Vec::new(),
            event_budget: 5e7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CdiMethod {
    Gamma,
    Psi,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub replicates: usize,
    pub tol: f64,
    /// Dyadic depth of the snapshot grid used by `modulus` and
    /// `simulate-lookdown`.
    pub grid_depth: u32,
    pub alpha: f64,
    pub m_grid: Vec<usize>,
    pub cdi_method: CdiMethod,
    /// Explicit box sizes; when absent, `scale_count` halvings from half the
    /// cloud's extent.
    pub scales: Option<Vec<f64>>,
    pub scale_count: usize,
    /// Time of the support snapshot for `dimension`; defaults to `T`.
    pub dimension_time: Option<f64>,
    /// Also estimate dimensions at `2n`.
    pub doubling_check: bool,
    /// Radius grid `T 2^-k` for `k` in this inclusive range.
    pub radius_depths: (u32, u32),
    /// Range window; defaults to `[T/2, T)`.
    pub range_window: Option<(f64, f64)>,
    pub snapshot_count: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            replicates: 10,
            tol: DEFAULT_TOL,
            grid_depth: 6,
            alpha: 1.0,
            m_grid: vec![5, 10, 20],
            cdi_method: CdiMethod::Both,
            scales: None,
            scale_count: 6,
            dimension_time: None,
            doubling_check: true,
            radius_depths: (3, 10),
            range_window: None,
            snapshot_count: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub measure: MeasureConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default = "all_stages")]
    pub stages: Vec<Stage>,
}

fn default_name() -> String {
    "experiment".into()
}

fn all_stages() -> Vec<Stage> {
    Stage::ALL.to_vec()
}

fn require(ok: bool, field: &str, message: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(field, message))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::config("<document>", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let (sim, an) = (&self.simulation, &self.analysis);
        self.measure.to_measure()?;
        require(sim.n >= 2, "simulation.n", format!("must be at least 2, got {}", sim.n))?;
        require(sim.d >= 1, "simulation.d", "must be at least 1")?;
        require(sim.horizon > 0.0 && sim.horizon.is_finite(), "simulation.T", format!("must be positive, got {}", sim.horizon))?;
        require(sim.event_budget > 0.0, "simulation.event_budget", "must be positive")?;
        require(
            sim.snapshot_times.iter().all(|t| (0.0..=sim.horizon).contains(t)),
            "simulation.snapshot_times",
            format!("times must lie in [0, {}]", sim.horizon),
        )?;
        if let Init::Points(points) = &sim.init {
            require(points.len() == sim.n, "simulation.init.points", format!("need {} points", sim.n))?;
            require(points.iter().all(|p| p.len() == sim.d), "simulation.init.points", format!("points must have {} coordinates", sim.d))?;
        }
        require(an.replicates >= 1, "analysis.replicates", "must be at least 1")?;
        require(
            an.replicates >= 2 || !self.stages.contains(&Stage::Cdi),
            "analysis.replicates",
            "the cdi stage estimates T_m and needs at least 2",
        )?;
        require(an.tol > 0.0 && an.tol < 1e-2, "analysis.tol", format!("must lie in (0, 0.01), got {}", an.tol))?;
        require((2..=16).contains(&an.grid_depth), "analysis.grid_depth", format!("must lie in 2..=16, got {}", an.grid_depth))?;
        require(an.alpha > 0.0 && an.alpha.is_finite(), "analysis.alpha", format!("must be positive, got {}", an.alpha))?;
        require(
            !an.m_grid.is_empty() && an.m_grid.iter().all(|&m| m >= 2 && m < sim.n),
            "analysis.m_grid",
            format!("needs values in 2..{}", sim.n),
        )?;
        require(an.scale_count >= 4, "analysis.scale_count", "must be at least 4")?;
        if let Some(scales) = &an.scales {
            require(scales.len() >= 4 && scales.iter().all(|&s| s > 0.0), "analysis.scales", "need at least 4 positive sizes")?;
        }
        if let Some(t) = an.dimension_time {
            require((0.0..=sim.horizon).contains(&t), "analysis.dimension_time", format!("must lie in [0, {}]", sim.horizon))?;
        }
        let (lo, hi) = an.radius_depths;
        require(
            lo <= hi && hi <= 30 && sim.horizon / 2f64.powi(lo as i32) < 1.0,
            "analysis.radius_depths",
            "need lo <= hi <= 30 with T 2^-lo < 1",
        )?;
        if let Some((t0, t1)) = an.range_window {
            require(0.0 <= t0 && t0 <= t1 && t1 <= sim.horizon, "analysis.range_window", format!("must satisfy 0 <= t0 <= t1 <= {}", sim.horizon))?;
        }
        require(an.snapshot_count >= 1, "analysis.snapshot_count", "must be at least 1")?;
        require(!self.stages.is_empty(), "stages", "at least one stage is needed")?;
        Ok(())
    }

    pub fn range_window(&self) -> (f64, f64) {
        self.analysis
            .range_window
            .unwrap_or((self.simulation.horizon / 2.0, self.simulation.horizon))
    }

    pub fn dimension_time(&self) -> f64 {
        self.analysis.dimension_time.unwrap_or(self.simulation.horizon)
    }

    pub fn radius_grid(&self) -> Vec<f64> {
        let (lo, hi) = self.analysis.radius_depths;
        (lo..=hi).map(|k| self.simulation.horizon / 2f64.powi(k as i32)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SMOKE: &str = r#"{
        "seed": 7,
        "output_dir": "out",
        "measure": {"family": "kingman"},
        "simulation": {"n": 50, "T": 0.5},
        "analysis": {"replicates": 10}
    }"#;

    #[test]
    fn smoke_config_parses_with_defaults() {
        let c = ExperimentConfig::from_json(SMOKE).unwrap();
        assert_eq!(c.simulation.horizon, 0.5);
        assert_eq!(c.simulation.d, 2);
        assert_eq!(c.stages, Stage::ALL.to_vec());
        assert_eq!(c.range_window(), (0.25, 0.5));
    }

    #[test]
    fn errors_name_the_field() {
        let bad = SMOKE.replace(r#""replicates": 10"#, r#""replicates": 0"#);
        match ExperimentConfig::from_json(&bad) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "analysis.replicates"),
            other => panic!("{other:?}"),
        }
        let bad = SMOKE.replace(r#"{"family": "kingman"}"#, r#"{"family": "beta", "beta": 2.5}"#);
        assert!(matches!(ExperimentConfig::from_json(&bad), Err(Error::Config { field, .. }) if field == "measure.beta"));
        let bad = SMOKE.replace(r#""n": 50"#, r#""n": 50, "colour": 1"#);
        assert!(matches!(ExperimentConfig::from_json(&bad), Err(Error::Config { .. })));
    }

    fn arb_config() -> impl Strategy<Value = ExperimentConfig> {
        (
            any::<u64>(),
            prop_oneof![Just(FamilyName::Kingman), Just(FamilyName::Beta), Just(FamilyName::Uniform)],
            0.01f64..1.99,
            20usize..400,
            1usize..4,
            0.01f64..0.99,
            2usize..500,
            0.1f64..2.0,
        )
            .prop_map(|(seed, family, beta, n, d, horizon, replicates, alpha)| ExperimentConfig {
                name: "prop".into(),
                seed,
                output_dir: PathBuf::from("out"),
                measure: MeasureConfig {
                    family,
                    beta: (family == FamilyName::Beta).then_some(beta),
                    atom0: None,
                    atom1: None,
                    density_table: None,
                },
                simulation: SimulationConfig {
                    n,
                    d,
                    horizon,
                    snapshot_times: vec![horizon / 3.0],
                    ..Default::default()
                },
                analysis: AnalysisConfig {
                    replicates,
                    alpha,
                    m_grid: vec![2, n / 2],
                    range_window: Some((horizon / 7.0, horizon)),
                    ..Default::default()
                },
                stages: vec![Stage::Cdi, Stage::Modulus],
            })
    }

    proptest! {
        #[test]
        fn config_round_trips(c in arb_config()) {
            c.validate().unwrap();
            let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
