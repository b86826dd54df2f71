//! Synthetic seven-table herd generator. Marginals are truncated-normal
//! draws matched to the published statistics; a planted, mode-dependent
//! signal ties herd life to the feature trajectories so models can be
//! validated end to end.
//!
//! Signal modes:
//! - `linear`: herd life is an exact affine function of always-present
//!   latest-record features, so least squares recovers the coefficients.
//! - `nonlinear-sequential` (default): the record window ends at a random
//!   life fraction per cow; lactose declines and somatic cell count rises
//!   with that fraction, so herd life is a ratio of current life to a
//!   trend readable across records - invisible to a latest-record linear
//!   model.
//! - `dominant-feature`: one designated feature carries most of the
//!   explainable variance, for importance-ranking checks.

mod generate;
mod report;

use std::collections::BTreeMap;
use std::path::Path;

pub use generate::generate;
pub use report::{marginal_report, FeatureRealization, MarginalReport};

use serde::{Deserialize, Serialize};

use crate::error::{HerdError, Result};
use crate::features::{Feature, Marginal, HL_MARGINAL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalMode {
    Linear,
    NonlinearSequential,
    DominantFeature,
}

impl std::str::FromStr for SignalMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "linear" => Ok(SignalMode::Linear),
            "nonlinear-sequential" | "nonlinear" => Ok(SignalMode::NonlinearSequential),
            "dominant-feature" | "dominant" => Ok(SignalMode::DominantFeature),
            other => Err(format!("unknown signal mode {other:?}")),
        }
    }
}

/// Records-per-cow distribution targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordTargets {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
    pub min_frac_over_5: f64,
    /// Log-normal shape; the location is derived from `mean`.
    pub lognormal_sigma: f64,
}

impl Default for RecordTargets {
    fn default() -> Self {
        RecordTargets {
            min: 1,
            max: 200,
            mean: 40.0,
            min_frac_over_5: 0.92,
            lognormal_sigma: 0.85,
        }
    }
}

/// Exact affine ground truth for linear mode. Coefficients sit on
/// features present in every latest record (current life, the three
/// breeding-value traits, and the event flags) so the tabular view sees
/// the full signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSignal {
    pub intercept: f64,
    pub coefficients: BTreeMap<String, f64>,
    pub noise_sd: f64,
}

impl Default for LinearSignal {
    fn default() -> Self {
        let mut coefficients = BTreeMap::new();
        coefficients.insert(Feature::CurrentLifeDays.name().to_string(), 1.05);
        coefficients.insert(Feature::Hwi.name().to_string(), 1.0);
        coefficients.insert(Feature::MammarySystem.name().to_string(), 4.0);
        coefficients.insert(Feature::AbvMastitisResistance.name().to_string(), 12.0);
        coefficients.insert(Feature::TestedFlag.name().to_string(), 40.0);
        coefficients.insert(Feature::BredFlag.name().to_string(), 20.0);
        coefficients.insert(Feature::TreatedFlag.name().to_string(), -60.0);
        LinearSignal {
            intercept: -500.0,
            coefficients,
            noise_sd: 250.0,
        }
    }
}

/// Trajectory parameters for nonlinear-sequential mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlinearSignal {
    /// Lactose percentage at the start of life; declines linearly with
    /// the life fraction.
    pub lactose_base: f64,
    pub lactose_slope: f64,
    pub lactose_cow_jitter: f64,
    pub lactose_record_noise: f64,
    /// Somatic cell count rises exponentially with the life fraction.
    pub scc_base: f64,
    pub scc_slope: f64,
    pub scc_cow_jitter: f64,
    pub scc_record_noise: f64,
    pub scc_spike_prob: f64,
    /// Milk-305 growth across lactations scales with the standardized
    /// herd life.
    pub milk_gamma: f64,
}

impl Default for NonlinearSignal {
    fn default() -> Self {
        NonlinearSignal {
            lactose_base: 5.5,
            lactose_slope: 1.5,
            lactose_cow_jitter: 0.10,
            lactose_record_noise: 0.15,
            scc_base: 45.0,
            scc_slope: 2.5,
            scc_cow_jitter: 0.15,
            scc_record_noise: 0.25,
            scc_spike_prob: 0.03,
            milk_gamma: 0.12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominantSignal {
    pub feature: Feature,
    pub intercept: f64,
    pub coefficient: f64,
    pub noise_sd: f64,
}

impl Default for DominantSignal {
    fn default() -> Self {
        DominantSignal {
            feature: Feature::Hwi,
            intercept: 2400.0,
            coefficient: 6.0,
            noise_sd: 350.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_cows: usize,
    pub n_farms: usize,
    pub signal_mode: SignalMode,
    /// Scales every noise channel; 0 produces noiseless planted signal.
    pub noise_scale: f64,
    /// Spread of the centered farm-level herd-life offsets.
    pub farm_effect_sd: f64,
    pub hl: Marginal,
    pub records: RecordTargets,
    /// Interpreted upper bounds for the two typographically ambiguous
    /// published maxima, recorded here so they can be changed in one
    /// place.
    pub scc_max: f64,
    pub milk305_max: f64,
    pub linear: LinearSignal,
    pub nonlinear: NonlinearSignal,
    pub dominant: DominantSignal,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_cows: 2000,
            n_farms: 7,
            signal_mode: SignalMode::NonlinearSequential,
            noise_scale: 1.0,
            farm_effect_sd: 150.0,
            hl: HL_MARGINAL,
            records: RecordTargets::default(),
            scc_max: 13125.0,
            milk305_max: 17910.0,
            linear: LinearSignal::default(),
            nonlinear: NonlinearSignal::default(),
            dominant: DominantSignal::default(),
        }
    }
}

/// Desk-scale default configuration (2000 cows, 7 farms, nonlinear
/// signal); full scale is a matter of raising `n_cows`.
pub fn default_config() -> GeneratorConfig {
    GeneratorConfig::default()
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let infeasible = |msg: String| Err(HerdError::InfeasibleTargets(msg));
        if self.n_cows == 0 {
            return infeasible("n_cows must be positive".into());
        }
        if self.n_farms == 0 {
            return infeasible("n_farms must be positive".into());
        }
        if self.noise_scale < 0.0 {
            return infeasible("noise_scale must be non-negative".into());
        }
        let check = |name: &str, m: &Marginal| -> Result<()> {
            if !(m.min <= m.mean && m.mean <= m.max) {
                return infeasible(format!(
                    "{name}: mean {} outside [{}, {}]",
                    m.mean, m.min, m.max
                ));
            }
            if m.sd < 0.0 {
                return infeasible(format!("{name}: negative sd"));
            }
            Ok(())
        };
        check("hl", &self.hl)?;
        for f in Feature::ALL {
            if let Some(m) = f.marginal() {
                check(f.name(), &m)?;
            }
        }
        let r = &self.records;
        if r.min > r.max || r.mean < r.min as f64 || r.mean > r.max as f64 {
            return infeasible(format!(
                "records per cow: mean {} outside [{}, {}]",
                r.mean, r.min, r.max
            ));
        }
        for name in self.linear.coefficients.keys() {
            if !Feature::ALL.iter().any(|f| f.name() == name) {
                return infeasible(format!("linear coefficient on unknown feature {name:?}"));
            }
        }
        Ok(())
    }
}

/// Planted ground truth recorded next to the generated tables for test
/// oracles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub mode: SignalMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linear: Option<LinearSignal>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nonlinear: Option<NonlinearSignal>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dominant_feature: Option<String>,
    /// Determination achievable by the exact inverse model at zero
    /// noise.
    pub noiseless_r2_ceiling: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config: GeneratorConfig,
    pub planted: PlantedTruth,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, json).map_err(|e| HerdError::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Manifest> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| HerdError::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
