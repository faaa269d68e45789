//! Experiment configuration: a TOML file with nested sections, validated into
//! core types before any run starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use sbl_core::channel::RandomChannelMode;
use sbl_core::geometry::{Position, Scenario};
use sbl_core::sbl::{AxisSpec, RefineOptions, SearchGrid};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}:\n{message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scenario: ScenarioSection,
    pub source: SourceSection,
    #[serde(default)]
    pub waveform: WaveformSection,
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub noise: NoiseSection,
    pub snr: SnrSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub estimators: EstimatorsSection,
    pub grid: GridSection,
    #[serde(default)]
    pub refine: RefineSection,
    pub run: RunSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    /// `[x, y, z]` per receiver, meters, z = depth.
    pub receivers: Vec<[f64; 3]>,
    pub bottom_depth: f64,
    pub sound_speed: f64,
    pub sample_period: f64,
    pub sample_count: usize,
    #[serde(default = "default_bottom_reflection")]
    pub bottom_reflection: f64,
}

fn default_bottom_reflection() -> f64 {
    0.85
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub position: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WaveformKindCfg {
    FlatRandomPhase,
    StandardCn,
    GaussianPulse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RedrawCfg {
    /// Fresh draw on every trial (comparison experiments).
    PerTrial,
    /// One draw shared by all trials (CRLB validation).
    Fixed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformSection {
    #[serde(default = "default_waveform_kind")]
    pub kind: WaveformKindCfg,
    #[serde(default = "default_redraw")]
    pub redraw: RedrawCfg,
    /// Gaussian pulse center (seconds); defaults to mid-window.
    pub center_time: Option<f64>,
    /// Gaussian pulse width (seconds).
    pub width: Option<f64>,
}

fn default_waveform_kind() -> WaveformKindCfg {
    WaveformKindCfg::StandardCn
}

fn default_redraw() -> RedrawCfg {
    RedrawCfg::PerTrial
}

impl Default for WaveformSection {
    fn default() -> Self {
        Self {
            kind: WaveformKindCfg::StandardCn,
            redraw: RedrawCfg::PerTrial,
            center_time: None,
            width: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelModelCfg {
    /// Attenuations from the path lengths and `kappa_b`.
    Physical,
    /// Standard CN entries, drawn once per experiment.
    RandomCn,
    /// Near-unit ray gains (random phase, small CN scatter), drawn once.
    RandomNearUnit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub model: ChannelModelCfg,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self { model: ChannelModelCfg::Physical }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKindCfg {
    SyntheticCn,
    ExternalSamples,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default = "default_noise_kind")]
    pub kind: NoiseKindCfg,
    /// Sample file for `external-samples` (interleaved re/im f64; `.csv` or
    /// flat little-endian binary). Successive trials consume successive
    /// non-overlapping blocks of `N * L` samples.
    pub file: Option<PathBuf>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { kind: NoiseKindCfg::SyntheticCn, file: None }
    }
}

fn default_noise_kind() -> NoiseKindCfg {
    NoiseKindCfg::SyntheticCn
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnrConventionCfg {
    /// `sigma_v^2 = ||s||^2 / snr`, equal across receivers.
    TotalEnergy,
    /// `sigma_{v,l}^2 = P_s ||b_l||^2 / snr`: per-bin SNR of `1/sigma_v^2`.
    PerBin,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnrSection {
    pub convention: SnrConventionCfg,
    pub value_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepVariableCfg {
    Snr,
    Mismatch,
    Occlusion,
    None,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "default_sweep_variable")]
    pub variable: SweepVariableCfg,
    #[serde(default)]
    pub values: Vec<f64>,
    /// 1-based receiver numbers whose LOS the occluder blocks.
    #[serde(default)]
    pub occluded_receivers: Vec<usize>,
}

fn default_sweep_variable() -> SweepVariableCfg {
    SweepVariableCfg::None
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { variable: SweepVariableCfg::None, values: Vec::new(), occluded_receivers: Vec::new() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorsSection {
    #[serde(default = "yes")]
    pub sbl: bool,
    #[serde(default = "yes")]
    pub mfp3: bool,
    #[serde(default)]
    pub mfp3_imperfect: bool,
    #[serde(default = "yes")]
    pub gcc_phat: bool,
}

fn yes() -> bool {
    true
}

impl Default for EstimatorsSection {
    fn default() -> Self {
        Self { sbl: true, mfp3: true, mfp3_imperfect: false, gcc_phat: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// `[min, max, step]`, or `[value]` to pin the axis.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineSection {
    #[serde(default = "default_step_tolerance")]
    pub step_tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub initial_step: Option<f64>,
}

fn default_step_tolerance() -> f64 {
    1e-6
}

fn default_max_iterations() -> usize {
    200
}

impl Default for RefineSection {
    fn default() -> Self {
        Self { step_tolerance: 1e-6, max_iterations: 200, initial_step: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub trials: usize,
    pub master_seed: u64,
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: Config = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let sc = self.scenario()?;
        let src = self.source_position();
        if !src.is_finite() {
            return Err(ConfigError::Invalid("source position must be finite".into()));
        }
        if src.z < 0.0 || src.z > sc.bottom_depth {
            return Err(ConfigError::Invalid(format!(
                "source depth {} outside water column [0, {}]",
                src.z, sc.bottom_depth
            )));
        }
        if self.run.trials == 0 {
            return Err(ConfigError::Invalid("run.trials must be at least 1".into()));
        }
        if !self.snr.value_db.is_finite() {
            return Err(ConfigError::Invalid("snr.value_db must be finite".into()));
        }
        self.grid()?;
        match self.sweep.variable {
            SweepVariableCfg::None => {}
            SweepVariableCfg::Snr => {
                if self.sweep.values.is_empty() {
                    return Err(ConfigError::Invalid("snr sweep needs sweep.values".into()));
                }
            }
            SweepVariableCfg::Mismatch => {
                for &v in &self.sweep.values {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(ConfigError::Invalid(format!(
                            "mismatch value {v} outside [0, 1]"
                        )));
                    }
                }
            }
            SweepVariableCfg::Occlusion => {
                for &v in &self.sweep.values {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(ConfigError::Invalid(format!(
                            "occlusion value {v} outside [0, 1]"
                        )));
                    }
                }
                if self.sweep.occluded_receivers.is_empty() {
                    return Err(ConfigError::Invalid(
                        "occlusion sweep needs sweep.occluded_receivers".into(),
                    ));
                }
                for &r in &self.sweep.occluded_receivers {
                    if r == 0 || r > self.scenario.receivers.len() {
                        return Err(ConfigError::Invalid(format!(
                            "occluded receiver {r} out of range 1..={}",
                            self.scenario.receivers.len()
                        )));
                    }
                }
            }
        }
        if self.waveform.kind == WaveformKindCfg::GaussianPulse && self.waveform.width.is_none() {
            return Err(ConfigError::Invalid("gaussian-pulse waveform needs waveform.width".into()));
        }
        if self.noise.kind == NoiseKindCfg::ExternalSamples && self.noise.file.is_none() {
            return Err(ConfigError::Invalid(
                "external-samples noise needs noise.file".into(),
            ));
        }
        if !self.estimators.sbl
            && !self.estimators.mfp3
            && !self.estimators.mfp3_imperfect
            && !self.estimators.gcc_phat
        {
            return Err(ConfigError::Invalid("no estimator enabled".into()));
        }
        Ok(())
    }

    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        Scenario::new(
            self.scenario
                .receivers
                .iter()
                .map(|&[x, y, z]| Position::new(x, y, z))
                .collect(),
            self.scenario.bottom_depth,
            self.scenario.sound_speed,
            self.scenario.sample_period,
            self.scenario.sample_count,
            self.scenario.bottom_reflection,
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn source_position(&self) -> Position {
        let [x, y, z] = self.source.position;
        Position::new(x, y, z)
    }

    pub fn grid(&self) -> Result<SearchGrid, ConfigError> {
        let axis = |name: &str, v: &[f64]| -> Result<AxisSpec, ConfigError> {
            match v {
                [value] => Ok(AxisSpec::fixed(*value)),
                [min, max, step] => AxisSpec::new(*min, *max, *step)
                    .map_err(|e| ConfigError::Invalid(format!("grid.{name}: {e}"))),
                _ => Err(ConfigError::Invalid(format!(
                    "grid.{name} must be [min, max, step] or [value]"
                ))),
            }
        };
        Ok(SearchGrid::box_3d(
            axis("x", &self.grid.x)?,
            axis("y", &self.grid.y)?,
            axis("z", &self.grid.z)?,
        ))
    }

    pub fn refine_options(&self) -> RefineOptions {
        RefineOptions {
            step_tolerance: self.refine.step_tolerance,
            max_iterations: self.refine.max_iterations,
            initial_step: self.refine.initial_step,
        }
    }

    pub fn channel_mode(&self) -> Option<RandomChannelMode> {
        match self.channel.model {
            ChannelModelCfg::Physical => None,
            ChannelModelCfg::RandomCn => Some(RandomChannelMode::StandardCn),
            ChannelModelCfg::RandomNearUnit => Some(RandomChannelMode::NearUnit),
        }
    }

    /// 0-based occluded receiver indices.
    pub fn occluded_indices(&self) -> Vec<usize> {
        self.sweep.occluded_receivers.iter().map(|&r| r - 1).collect()
    }
}
