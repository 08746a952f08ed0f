//! Versioned TOML run configuration.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::charge::{ChargeRateModel, PhotonFluxModel};
use crate::coherence::{linspace, LineShape};
use crate::defect::{ChargeSpinPopulation, MeasurementSettings, NsDefect};
use crate::error::{Error, Result};
use crate::inference::{NoiseModel, ScoreOptions, SearchPrior};
use crate::spin_dynamics::{EvolveOptions, PumpProbeProtocol};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    SimulateDeer,
    SimulateOdmr,
    SimulatePumpProbe,
    SimulateCharge,
    FitDeer,
    Reconstruct,
    FitSaturation,
    FitChargeRelaxation,
    ExtractNoise,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::SimulateDeer,
        Experiment::SimulateOdmr,
        Experiment::SimulatePumpProbe,
        Experiment::SimulateCharge,
        Experiment::FitDeer,
        Experiment::Reconstruct,
        Experiment::FitSaturation,
        Experiment::FitChargeRelaxation,
        Experiment::ExtractNoise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::SimulateDeer => "simulate-deer",
            Experiment::SimulateOdmr => "simulate-odmr",
            Experiment::SimulatePumpProbe => "simulate-pump-probe",
            Experiment::SimulateCharge => "simulate-charge",
            Experiment::FitDeer => "fit-deer",
            Experiment::Reconstruct => "reconstruct",
            Experiment::FitSaturation => "fit-saturation",
            Experiment::FitChargeRelaxation => "fit-charge-relaxation",
            Experiment::ExtractNoise => "extract-noise",
        }
    }
}

impl std::fmt::Display for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub experiment: Experiment,
    /// Master seed, at most 2⁶³ − 1.
    #[serde(default)]
    pub seed: u64,
    /// Worker count; absent means one per logical core.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub parameters: toml::Table,
}

impl RunConfig {
    pub fn new(experiment: Experiment) -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            experiment,
            seed: 0,
            threads: None,
            parameters: toml::Table::new(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.check_header()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn check_header(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (this build reads {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be >= 1".into()));
        }
        // TOML integers are signed 64-bit.
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config(format!("seed {} exceeds {}", self.seed, i64::MAX)));
        }
        Ok(())
    }

    /// Typed parameters for the configured experiment.
    pub fn parameters<T: DeserializeOwned>(&self) -> Result<T> {
        toml::Value::Table(self.parameters.clone())
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("[parameters] for {}: {}", self.experiment, e.message())))
    }

    /// Parses and validates the parameters without running anything.
    pub fn validate(&self) -> Result<()> {
        self.check_header()?;
        match self.experiment {
            Experiment::SimulateDeer => self.parameters::<SimulateDeerParams>()?.validate(),
            Experiment::SimulateOdmr => self.parameters::<SimulateOdmrParams>()?.validate(),
            Experiment::SimulatePumpProbe => self.parameters::<SimulatePumpProbeParams>()?.validate(),
            Experiment::SimulateCharge => self.parameters::<SimulateChargeParams>()?.validate(),
            Experiment::FitDeer => self.parameters::<FitDeerParams>()?.validate(),
            Experiment::Reconstruct => self.parameters::<ReconstructParams>()?.validate(),
            Experiment::FitSaturation => self.parameters::<FitSaturationParams>()?.validate(),
            Experiment::FitChargeRelaxation => self.parameters::<FitChargeRelaxationParams>().map(|_| ()),
            Experiment::ExtractNoise => self.parameters::<ExtractNoiseParams>()?.validate(),
        }
    }
}

/// Uniform grid `start..=stop` with `points` samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        linspace(self.start, self.stop, self.points)
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        if self.points < 2 || !(self.stop > self.start) || !self.start.is_finite() || !self.stop.is_finite() {
            return Err(Error::Config(format!("{what}: need points >= 2 and stop > start")));
        }
        Ok(())
    }
}

fn check_defects(defects: &[NsDefect], min: usize, max: usize) -> Result<()> {
    if defects.len() < min || defects.len() > max {
        return Err(Error::Config(format!("expected {min} to {max} defects, got {}", defects.len())));
    }
    for (i, d) in defects.iter().enumerate() {
        d.validate().map_err(|e| Error::Config(format!("defects[{i}]: {e}")))?;
    }
    Ok(())
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Config(format!("eta {eta} outside (0, 1]")));
    }
    Ok(())
}

fn default_eta() -> f64 {
    MeasurementSettings::ETA_TWO_TONE
}

fn default_stretch() -> f64 {
    1.0
}

fn default_tau() -> Grid {
    Grid {
        start: 0.0,
        stop: 10e-6,
        points: 200,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateDeerParams {
    pub defects: Vec<NsDefect>,
    /// Dark-spin polarization per defect; zeros when omitted.
    #[serde(default)]
    pub polarizations: Vec<f64>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub gamma_bg: f64,
    #[serde(default = "default_stretch")]
    pub stretch_n: f64,
    /// Delay grid; replaced by the data's `tau_s` column when data is given.
    #[serde(default = "default_tau")]
    pub tau: Grid,
    /// Standard deviation of Gaussian noise added to the `deer-data` output.
    #[serde(default)]
    pub noise_sigma: f64,
}

impl SimulateDeerParams {
    pub fn validate(&self) -> Result<()> {
        check_defects(&self.defects, 0, usize::MAX)?;
        if !self.polarizations.is_empty() && self.polarizations.len() != self.defects.len() {
            return Err(Error::Config("polarizations must have one entry per defect".into()));
        }
        if self.polarizations.iter().any(|p| !(-1.0..=1.0).contains(p)) {
            return Err(Error::Config("polarizations must lie in [-1, 1]".into()));
        }
        check_eta(self.eta)?;
        crate::defect::ProbeSpin::new(self.gamma_bg, self.stretch_n).map_err(|e| Error::Config(e.to_string()))?;
        self.tau.validate("tau")?;
        if self.tau.start < 0.0 {
            return Err(Error::Config("tau must start at >= 0".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config("noise_sigma must be >= 0".into()));
        }
        Ok(())
    }
}

fn default_linewidth() -> f64 {
    20e3
}

fn default_contrast() -> f64 {
    1.0
}

fn default_freq() -> Grid {
    Grid {
        start: -300e3,
        stop: 300e3,
        points: 601,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateOdmrParams {
    pub defects: Vec<NsDefect>,
    #[serde(default)]
    pub line_shape: LineShape,
    #[serde(default = "default_linewidth")]
    pub linewidth_hz: f64,
    #[serde(default = "default_contrast")]
    pub contrast: f64,
    #[serde(default = "default_freq")]
    pub freq: Grid,
}

impl SimulateOdmrParams {
    pub fn validate(&self) -> Result<()> {
        check_defects(&self.defects, 0, crate::coherence::MAX_ODMR_DEFECTS)?;
        if !(self.linewidth_hz > 0.0) {
            return Err(Error::Config("linewidth_hz must be positive".into()));
        }
        self.freq.validate("freq")
    }
}

fn default_eta_one() -> f64 {
    1.0
}

fn default_tau_sl() -> Grid {
    Grid {
        start: 0.0,
        stop: 10e-6,
        points: 41,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatePumpProbeParams {
    pub defects: Vec<NsDefect>,
    #[serde(default = "default_eta_one")]
    pub eta: f64,
    #[serde(default)]
    pub protocol: PumpProbeProtocol,
    #[serde(default = "default_tau_sl")]
    pub tau_sl: Grid,
    #[serde(default)]
    pub evolve: EvolveOptions,
}

impl SimulatePumpProbeParams {
    pub fn validate(&self) -> Result<()> {
        check_defects(&self.defects, 1, crate::spin_dynamics::register::MAX_DARK_SPINS)?;
        check_eta(self.eta)?;
        self.tau_sl.validate("tau_sl")?;
        if self.tau_sl.start < 0.0 {
            return Err(Error::Config("tau_sl must start at >= 0".into()));
        }
        if !(self.protocol.rabi_hz > 0.0) {
            return Err(Error::Config("protocol.rabi_hz must be positive".into()));
        }
        Ok(())
    }
}

fn default_initial() -> ChargeSpinPopulation {
    ChargeSpinPopulation {
        p_up: 1.0,
        p_down: 0.0,
        p_plus: 0.0,
    }
}

fn default_power() -> f64 {
    1e-3
}

fn default_duration() -> f64 {
    200e-6
}

fn default_charge_points() -> usize {
    41
}

fn default_trajectories() -> u64 {
    10_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateChargeParams {
    #[serde(default)]
    pub rates: ChargeRateModel,
    #[serde(default = "default_initial")]
    pub initial: ChargeSpinPopulation,
    #[serde(default = "default_power")]
    pub power_w: f64,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default = "default_charge_points")]
    pub points: usize,
    /// Stochastic trajectories averaged alongside the exact solution; 0 skips them.
    #[serde(default = "default_trajectories")]
    pub trajectories: u64,
}

impl SimulateChargeParams {
    pub fn validate(&self) -> Result<()> {
        self.rates.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.initial.check(1e-9).map_err(|e| Error::Config(e.to_string()))?;
        self.rates.r_ion(self.power_w).map_err(|e| Error::Config(e.to_string()))?;
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) || self.points < 2 {
            return Err(Error::Config("need duration_s > 0 and points >= 2".into()));
        }
        Ok(())
    }
}

fn default_etas() -> Vec<f64> {
    vec![MeasurementSettings::ETA_ONE_TONE, MeasurementSettings::ETA_TWO_TONE]
}

/// Fits ρ per defect plus the shared background for fixed couplings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitDeerParams {
    /// η of each `--data` table, in order.
    #[serde(default = "default_etas")]
    pub etas: Vec<f64>,
    pub couplings_hz: Vec<f64>,
    #[serde(default)]
    pub score: ScoreOptions,
}

impl FitDeerParams {
    pub fn validate(&self) -> Result<()> {
        if self.etas.is_empty() {
            return Err(Error::Config("etas must not be empty".into()));
        }
        self.etas.iter().try_for_each(|&e| check_eta(e))?;
        if self.couplings_hz.iter().any(|a| !a.is_finite()) {
            return Err(Error::Config("couplings must be finite".into()));
        }
        Ok(())
    }
}

fn default_budget() -> u64 {
    1_000_000
}

fn default_top_k() -> usize {
    100
}

fn default_chunk() -> u64 {
    4096
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructParams {
    #[serde(default = "default_etas")]
    pub etas: Vec<f64>,
    #[serde(default = "default_budget")]
    pub budget: u64,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_chunk")]
    pub chunk_size: u64,
    #[serde(default)]
    pub prior: SearchPrior,
    #[serde(default)]
    pub score: ScoreOptions,
}

impl ReconstructParams {
    pub fn validate(&self) -> Result<()> {
        if self.etas.is_empty() {
            return Err(Error::Config("etas must not be empty".into()));
        }
        self.etas.iter().try_for_each(|&e| check_eta(e))?;
        if self.budget == 0 || self.top_k == 0 || self.chunk_size == 0 {
            return Err(Error::Config("budget, top_k and chunk_size must be >= 1".into()));
        }
        self.prior.validate().map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSaturationParams {
    #[serde(default)]
    pub flux: PhotonFluxModel,
}

impl FitSaturationParams {
    pub fn validate(&self) -> Result<()> {
        self.flux.validate().map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitChargeRelaxationParams {}

/// Scalar rates, or a table with `gamma_sq` and `gamma_dq` columns via `--data`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractNoiseParams {
    pub gamma_sq: Option<f64>,
    pub gamma_dq: Option<f64>,
    #[serde(default)]
    pub model: NoiseModel,
}

impl ExtractNoiseParams {
    pub fn validate(&self) -> Result<()> {
        if self.gamma_sq.is_some() != self.gamma_dq.is_some() {
            return Err(Error::Config("give both gamma_sq and gamma_dq, or neither".into()));
        }
        self.model.validate().map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const DEER: &str = r#"
schema_version = 1
experiment = "simulate-deer"
seed = 11

[parameters]
eta = 0.75
gamma_bg = 2e4
stretch_n = 1.5
defects = [
  { rho = 0.474, a_dipolar = 158.6e3, d_stark = -41e3 },
  { rho = 0.302, a_dipolar = 125e3, d_stark = -33e3 },
]
"#;

    #[test]
    fn parses_and_validates() {
        let c = RunConfig::from_toml_str(DEER).unwrap();
        assert_eq!(c.experiment, Experiment::SimulateDeer);
        c.validate().unwrap();
        let p: SimulateDeerParams = c.parameters().unwrap();
        assert_eq!(p.defects.len(), 2);
        assert_eq!(p.tau.points, 200);
    }

    #[test]
    fn rejects_out_of_range_rho_and_unknown_keys() {
        let bad = DEER.replace("rho = 0.474", "rho = 1.2");
        assert!(matches!(RunConfig::from_toml_str(&bad).unwrap().validate(), Err(Error::Config(_))));
        let typo = DEER.replace("gamma_bg", "gama_bg");
        assert!(RunConfig::from_toml_str(&typo).unwrap().validate().is_err());
        let version = DEER.replace("schema_version = 1", "schema_version = 7");
        assert!(RunConfig::from_toml_str(&version).is_err());
    }

    #[test]
    fn experiment_names_match_serde() {
        for e in Experiment::ALL {
            let v = toml::Value::try_from(e).unwrap();
            assert_eq!(v.as_str(), Some(e.name()));
        }
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(seed in 0..=i64::MAX as u64, threads in proptest::option::of(1usize..64), k in 0usize..9, x in -1e6..1e6f64) {
            let mut c = RunConfig::new(Experiment::ALL[k]);
            c.seed = seed;
            c.threads = threads;
            c.parameters.insert("value".into(), toml::Value::Float(x));
            c.parameters.insert("name".into(), toml::Value::String("p".into()));
            let text = c.to_toml_string().unwrap();
            let back = RunConfig::from_toml_str(&text).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(back.to_toml_string().unwrap(), text);
        }
    }
}
