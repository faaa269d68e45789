//! Monte-Carlo experiment runners.
//!
//! Every random draw is keyed by `(master_seed, trial, purpose)`, so the same
//! trial index reproduces the same waveform and noise across sweep points and
//! across sweep kinds: the mismatch sweep at `eps = 0` is bit-identical to the
//! SNR sweep at the configured SNR, and the occlusion sweep at `beta = 1`
//! reproduces the unperturbed records. Trials run in parallel; reductions are
//! index-ordered, so reports are deterministic.

use rand::RngCore;
use rayon::prelude::*;
use thiserror::Error;

use sbl_core::baselines::{gccphat_localize, mfp3_localize, MfpChannelModel};
use sbl_core::channel::{
    perturb_mismatch, perturb_occlusion, physical_channel, random_channel, synthesize,
    ChannelCoefficients, ChannelError, FrequencyRecord,
};
use sbl_core::crlb::{fisher_information, position_crlb, CrlbError, PositionBound};
use sbl_core::geometry::{Position, Scenario};
use sbl_core::sbl::{
    localize_objective, sbl_localize, sbl_objective, LocalizationResult, LocalizeError,
    ObjectiveMap, RefineOptions, SearchGrid,
};
use sbl_core::seeds::{self, Purpose};
use sbl_core::waveform::{
    make_cn_waveform, make_flat_waveform, make_gaussian_pulse, ExternalNoise, NoiseModel,
    Waveform, WaveformError,
};

use crate::config::{
    ChannelModelCfg, Config, ConfigError, NoiseKindCfg, RedrawCfg, SnrConventionCfg,
    SweepVariableCfg, WaveformKindCfg,
};
use crate::report::{
    CrlbValidationReport, EstimatorSummary, ExperimentReport, HeatmapReport, SweepPoint,
    TrialOutcome,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Waveform(#[from] WaveformError),
    #[error(transparent)]
    Crlb(#[from] CrlbError),
    #[error("experiment setup: {0}")]
    Setup(String),
}

/// Estimators the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Sbl,
    Mfp3,
    Mfp3Imperfect,
    GccPhat,
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Sbl => "sbl",
            Estimator::Mfp3 => "mfp3",
            Estimator::Mfp3Imperfect => "mfp3-imperfect",
            Estimator::GccPhat => "gcc-phat",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "sbl" => Some(Estimator::Sbl),
            "mfp3" => Some(Estimator::Mfp3),
            "mfp3-imperfect" => Some(Estimator::Mfp3Imperfect),
            "gcc-phat" => Some(Estimator::GccPhat),
            _ => None,
        }
    }
}

fn derived_seed(master: u64, trial: u64, purpose: Purpose) -> u64 {
    seeds::stream(master, trial, purpose).next_u64()
}

/// A fully validated experiment, ready to run.
pub struct Experiment {
    cfg: Config,
    scenario: Scenario,
    source: Position,
    grid: SearchGrid,
    refine: RefineOptions,
    master_seed: u64,
    external_noise: Option<ExternalNoise>,
}

impl Experiment {
    /// Build from a validated config, applying optional CLI overrides.
    pub fn new(
        cfg: Config,
        seed_override: Option<u64>,
        trials_override: Option<usize>,
    ) -> Result<Self, ExperimentError> {
        let mut cfg = cfg;
        if let Some(seed) = seed_override {
            cfg.run.master_seed = seed;
        }
        if let Some(trials) = trials_override {
            cfg.run.trials = trials.max(1);
        }
        cfg.validate()?;
        let scenario = cfg.scenario()?;
        let source = cfg.source_position();
        let grid = cfg.grid()?;
        let refine = cfg.refine_options();
        let external_noise = match cfg.noise.kind {
            NoiseKindCfg::SyntheticCn => None,
            NoiseKindCfg::ExternalSamples => {
                let path = cfg.noise.file.clone().expect("validated");
                Some(ExternalNoise::load(&path)?)
            }
        };
        let master_seed = cfg.run.master_seed;
        Ok(Self { cfg, scenario, source, grid, refine, master_seed, external_noise })
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    fn enabled_estimators(&self) -> Vec<Estimator> {
        let e = &self.cfg.estimators;
        let mut v = Vec::new();
        if e.sbl {
            v.push(Estimator::Sbl);
        }
        if e.mfp3 {
            v.push(Estimator::Mfp3);
        }
        if e.mfp3_imperfect {
            v.push(Estimator::Mfp3Imperfect);
        }
        if e.gcc_phat {
            v.push(Estimator::GccPhat);
        }
        v
    }

    fn waveform(&self, trial: u64) -> Result<Waveform, ExperimentError> {
        let idx = match self.cfg.waveform.redraw {
            RedrawCfg::Fixed => 0,
            RedrawCfg::PerTrial => trial,
        };
        let seed = derived_seed(self.master_seed, idx, Purpose::Waveform);
        let n = self.scenario.sample_count;
        Ok(match self.cfg.waveform.kind {
            WaveformKindCfg::FlatRandomPhase => make_flat_waveform(n, seed)?,
            WaveformKindCfg::StandardCn => make_cn_waveform(n, seed)?,
            WaveformKindCfg::GaussianPulse => {
                let window = n as f64 * self.scenario.sample_period;
                let center = self.cfg.waveform.center_time.unwrap_or(0.5 * window);
                let width = self.cfg.waveform.width.expect("validated");
                make_gaussian_pulse(n, self.scenario.sample_period, center, width)?
            }
        })
    }

    /// The experiment-level channel (drawn once for random models).
    fn base_channel(&self) -> Result<ChannelCoefficients, ExperimentError> {
        Ok(match self.cfg.channel.model {
            ChannelModelCfg::Physical => physical_channel(&self.scenario, &self.source)?,
            _ => random_channel(
                self.scenario.num_receivers(),
                self.cfg.channel_mode().expect("random model"),
                derived_seed(self.master_seed, 0, Purpose::Channel),
            ),
        })
    }

    /// Per-receiver noise variances for a synthesis channel at a given SNR.
    ///
    /// The per-bin convention keys the level to the squared column norms of
    /// `norm_reference` (kept at the unoccluded channel during occlusion
    /// sweeps; an occluder blocks signal, not ambient noise).
    fn noise_variances(&self, snr_db: f64, waveform: &Waveform, norm_reference: &ChannelCoefficients) -> Vec<f64> {
        let snr = 10f64.powf(snr_db / 10.0);
        let l = self.scenario.num_receivers();
        match self.cfg.snr.convention {
            SnrConventionCfg::TotalEnergy => {
                let energy: f64 = waveform.dft.iter().map(|s| s.norm_sqr()).sum();
                vec![energy / snr; l]
            }
            SnrConventionCfg::PerBin => {
                let p_s = waveform.average_power();
                (0..l).map(|li| p_s * norm_reference.column_energy(li) / snr).collect()
            }
        }
    }

    fn noise_model(&self, variances: Vec<f64>) -> Result<NoiseModel, ExperimentError> {
        Ok(match &self.external_noise {
            None => NoiseModel::synthetic(variances)?,
            Some(ext) => NoiseModel::external(variances, ext.clone())?,
        })
    }

    /// Synthesize the record of one trial at one sweep point.
    fn trial_record(
        &self,
        sweep: SweepVariableCfg,
        value: f64,
        base: &ChannelCoefficients,
        trial: u64,
    ) -> Result<FrequencyRecord, ExperimentError> {
        let waveform = self.waveform(trial)?;
        let mut snr_db = self.cfg.snr.value_db;
        let synthesis_channel;
        let mut norm_reference = base.clone();
        match sweep {
            SweepVariableCfg::None => synthesis_channel = base.clone(),
            SweepVariableCfg::Snr => {
                snr_db = value;
                synthesis_channel = base.clone();
            }
            SweepVariableCfg::Mismatch => {
                let seed = derived_seed(self.master_seed, trial, Purpose::Mismatch);
                let (b, _) = perturb_mismatch(base, value, seed)?;
                norm_reference = b.clone();
                synthesis_channel = b;
            }
            SweepVariableCfg::Occlusion => {
                let seed = derived_seed(self.master_seed, trial, Purpose::Occlusion);
                let (b, _) =
                    perturb_occlusion(base, value, &self.cfg.occluded_indices(), seed)?;
                synthesis_channel = b;
            }
        }
        let variances = self.noise_variances(snr_db, &waveform, &norm_reference);
        let noise = self.noise_model(variances)?;
        Ok(synthesize(
            &self.scenario,
            &self.source,
            &synthesis_channel,
            &waveform,
            &noise,
            trial as usize,
            derived_seed(self.master_seed, trial, Purpose::Noise),
        )?)
    }

    fn localize_with(
        &self,
        estimator: Estimator,
        record: &FrequencyRecord,
        trial: u64,
    ) -> Result<LocalizationResult, LocalizeError> {
        let ms = record.measurements();
        match estimator {
            Estimator::Sbl => sbl_localize(&ms, &self.grid, &self.refine),
            Estimator::Mfp3 => {
                mfp3_localize(&ms, &self.grid, &MfpChannelModel::perfect(), &self.refine)
            }
            Estimator::Mfp3Imperfect => {
                let seed = derived_seed(self.master_seed, trial, Purpose::MfpPhaseCorruption);
                let model = MfpChannelModel::imperfect(self.scenario.num_receivers(), seed);
                mfp3_localize(&ms, &self.grid, &model, &self.refine)
            }
            Estimator::GccPhat => gccphat_localize(&ms, &self.grid, &self.refine),
        }
    }

    fn is_planar(&self) -> bool {
        matches!(&self.grid, SearchGrid::Box { z, .. } if z.min == z.max)
    }

    fn miss_distance(&self, estimate: &Position) -> f64 {
        if self.is_planar() {
            estimate.horizontal_distance_to(&self.source)
        } else {
            estimate.distance_to(&self.source)
        }
    }

    fn run_sweep(
        &self,
        kind: &str,
        sweep: SweepVariableCfg,
        values: &[f64],
    ) -> Result<ExperimentReport, ExperimentError> {
        let base = self.base_channel()?;
        let estimators = self.enabled_estimators();
        let trials = self.cfg.run.trials as u64;
        let mut points = Vec::with_capacity(values.len());
        for &value in values {
            // trials are independent; keep the reduction index-ordered
            let per_trial: Vec<Vec<TrialOutcome>> = (0..trials)
                .into_par_iter()
                .map(|trial| {
                    let record = match self.trial_record(sweep, value, &base, trial) {
                        Ok(r) => r,
                        Err(e) => {
                            return estimators
                                .iter()
                                .map(|est| TrialOutcome::failed(trial, est.name(), e.to_string()))
                                .collect();
                        }
                    };
                    estimators
                        .iter()
                        .map(|est| match self.localize_with(*est, &record, trial) {
                            Ok(res) => TrialOutcome::success(
                                trial,
                                est.name(),
                                &res,
                                self.miss_distance(&res.estimate),
                            ),
                            Err(e) => TrialOutcome::failed(trial, est.name(), e.to_string()),
                        })
                        .collect()
                })
                .collect();

            let estimator_reports = estimators
                .iter()
                .enumerate()
                .map(|(ei, est)| {
                    let trials: Vec<TrialOutcome> =
                        per_trial.iter().map(|row| row[ei].clone()).collect();
                    EstimatorSummary::from_trials(est.name(), trials)
                })
                .collect();
            points.push(SweepPoint { value, estimators: estimator_reports });
        }
        Ok(ExperimentReport {
            kind: kind.to_string(),
            sweep_variable: sweep_name(sweep).to_string(),
            master_seed: self.master_seed,
            trials: self.cfg.run.trials,
            points,
        })
    }

    pub fn run_snr_sweep(&self) -> Result<ExperimentReport, ExperimentError> {
        let values = if self.cfg.sweep.variable == SweepVariableCfg::Snr {
            self.cfg.sweep.values.clone()
        } else {
            vec![self.cfg.snr.value_db]
        };
        self.run_sweep("snr-sweep", SweepVariableCfg::Snr, &values)
    }

    pub fn run_mismatch_sweep(&self) -> Result<ExperimentReport, ExperimentError> {
        let values = self.sweep_values_for(SweepVariableCfg::Mismatch, &[0.0, 0.25, 0.5, 0.75, 1.0]);
        self.run_sweep("mismatch-sweep", SweepVariableCfg::Mismatch, &values)
    }

    pub fn run_occlusion_sweep(&self) -> Result<ExperimentReport, ExperimentError> {
        if self.cfg.occluded_indices().is_empty() {
            return Err(ExperimentError::Setup(
                "occlusion sweep needs sweep.occluded_receivers".into(),
            ));
        }
        let values = self.sweep_values_for(SweepVariableCfg::Occlusion, &[1.0, 0.75, 0.5, 0.25, 0.0]);
        self.run_sweep("occlusion-sweep", SweepVariableCfg::Occlusion, &values)
    }

    fn sweep_values_for(&self, variable: SweepVariableCfg, default: &[f64]) -> Vec<f64> {
        if self.cfg.sweep.variable == variable && !self.cfg.sweep.values.is_empty() {
            self.cfg.sweep.values.clone()
        } else {
            default.to_vec()
        }
    }

    /// CRLB validation: fixed flat waveform, fresh noise per trial, SBL
    /// estimates against the 95% ellipsoid from the analytic bound.
    pub fn run_crlb_validation(&self) -> Result<CrlbValidationReport, ExperimentError> {
        if self.cfg.waveform.kind != WaveformKindCfg::FlatRandomPhase {
            return Err(ExperimentError::Setup(
                "crlb-validate requires waveform.kind = \"flat-random-phase\"".into(),
            ));
        }
        if self.cfg.waveform.redraw != RedrawCfg::Fixed {
            return Err(ExperimentError::Setup(
                "crlb-validate requires waveform.redraw = \"fixed\" (the bound is for one waveform)"
                    .into(),
            ));
        }
        let base = self.base_channel()?;
        let waveform = self.waveform(0)?;
        let variances = self.noise_variances(self.cfg.snr.value_db, &waveform, &base);
        let fim = fisher_information(&self.scenario, &self.source, &base, &waveform, &variances)?;
        let bound = position_crlb(&fim)?;

        let trials = self.cfg.run.trials as u64;
        let outcomes: Vec<TrialOutcome> = (0..trials)
            .into_par_iter()
            .map(|trial| {
                let record =
                    match self.trial_record(SweepVariableCfg::None, 0.0, &base, trial) {
                        Ok(r) => r,
                        Err(e) => return TrialOutcome::failed(trial, "sbl", e.to_string()),
                    };
                match self.localize_with(Estimator::Sbl, &record, trial) {
                    Ok(res) => TrialOutcome::success(
                        trial,
                        "sbl",
                        &res,
                        self.miss_distance(&res.estimate),
                    ),
                    Err(e) => TrialOutcome::failed(trial, "sbl", e.to_string()),
                }
            })
            .collect();

        Ok(CrlbValidationReport::new(
            self.master_seed,
            &self.source,
            bound,
            variances,
            outcomes,
        ))
    }

    /// The position bound alone (used by tests and tooling).
    pub fn position_bound(&self) -> Result<PositionBound, ExperimentError> {
        let base = self.base_channel()?;
        let waveform = self.waveform(0)?;
        let variances = self.noise_variances(self.cfg.snr.value_db, &waveform, &base);
        let fim = fisher_information(&self.scenario, &self.source, &base, &waveform, &variances)?;
        Ok(position_crlb(&fim)?)
    }

    /// Objective map of one estimator on a fixed-depth slice for a single
    /// synthesized record (trial 0 of the unswept configuration).
    pub fn render_heatmap(
        &self,
        estimator: Estimator,
        z_plane: Option<f64>,
    ) -> Result<HeatmapReport, ExperimentError> {
        let base = self.base_channel()?;
        let record = self.trial_record(SweepVariableCfg::None, 0.0, &base, 0)?;
        let z = z_plane.unwrap_or(self.source.z);
        let (x, y) = match &self.grid {
            SearchGrid::Box { x, y, .. } => (*x, *y),
            SearchGrid::Points(_) => {
                return Err(ExperimentError::Setup(
                    "heatmap needs a box grid in the config".into(),
                ))
            }
        };
        if z < 0.0 || z > self.scenario.bottom_depth {
            return Err(ExperimentError::Setup(format!(
                "heatmap depth {z} outside water column [0, {}]",
                self.scenario.bottom_depth
            )));
        }
        let plane = SearchGrid::plane(x, y, z);
        let map = self.objective_map(estimator, &record, &plane)?;
        Ok(HeatmapReport {
            estimator: estimator.name().to_string(),
            z,
            map,
            true_source: [self.source.x, self.source.y, self.source.z],
        })
    }

    /// Evaluate an estimator objective over a grid, keeping the map.
    pub fn objective_map(
        &self,
        estimator: Estimator,
        record: &FrequencyRecord,
        grid: &SearchGrid,
    ) -> Result<ObjectiveMap, ExperimentError> {
        let ms = record.measurements();
        let refine = RefineOptions { max_iterations: 0, ..self.refine };
        let result = match estimator {
            Estimator::Sbl => {
                localize_objective(&self.scenario, grid, &refine, true, |p| sbl_objective(&ms, p))
            }
            Estimator::Mfp3 => {
                let model = MfpChannelModel::perfect();
                localize_objective(&self.scenario, grid, &refine, true, |p| {
                    sbl_core::baselines::mfp3_objective(&ms, p, &model)
                })
            }
            Estimator::Mfp3Imperfect => {
                let seed = derived_seed(self.master_seed, 0, Purpose::MfpPhaseCorruption);
                let model = MfpChannelModel::imperfect(self.scenario.num_receivers(), seed);
                localize_objective(&self.scenario, grid, &refine, true, |p| {
                    sbl_core::baselines::mfp3_objective(&ms, p, &model)
                })
            }
            Estimator::GccPhat => {
                let obj = sbl_core::baselines::GccPhatObjective::new(&ms)
                    .map_err(|e| ExperimentError::Setup(e.to_string()))?;
                localize_objective(&self.scenario, grid, &refine, true, |p| obj.evaluate(&ms, p))
            }
        }
        .map_err(|e| ExperimentError::Setup(e.to_string()))?;
        Ok(result.map.expect("map retained"))
    }

    /// Synthesize the record a given trial would see (diagnostics, tests).
    pub fn record_for_trial(
        &self,
        sweep: SweepVariableCfg,
        value: f64,
        trial: u64,
    ) -> Result<FrequencyRecord, ExperimentError> {
        let base = self.base_channel()?;
        self.trial_record(sweep, value, &base, trial)
    }
}

fn sweep_name(sweep: SweepVariableCfg) -> &'static str {
    match sweep {
        SweepVariableCfg::Snr => "snr",
        SweepVariableCfg::Mismatch => "mismatch",
        SweepVariableCfg::Occlusion => "occlusion",
        SweepVariableCfg::None => "none",
    }
}
