//! Channel attenuation coefficients and forward synthesis of frequency-domain
//! records.
//!
//! The physical model attenuates each ray by its path length, flips the sign
//! of the surface bounce (perfectly reflecting surface), and scales the bottom
//! bounce by the reflection coefficient:
//!
//! `b_1l = 1/R_1l`, `b_2l = -1/R_2l`, `b_3l = kappa_b / R_3l`.
//!
//! Mismatch and occlusion perturbations modify a coefficient matrix
//! entrywise and keep their uniform draws so experiments can replay them.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::geometry::{ray_geometry, steering_matrices, GeometryError, Position, Scenario};
use crate::seeds;
use crate::waveform::{draw_noise, NoiseModel, Waveform, WaveformError};
use crate::C64;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Waveform(#[from] WaveformError),
    #[error("perturbation parameter {name} = {value} outside [0, 1]")]
    ParameterOutOfRange { name: &'static str, value: f64 },
    #[error("occluded receiver index {index} out of range for {receivers} receivers")]
    ReceiverIndexOutOfRange { index: usize, receivers: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// The `3 x L` complex attenuation matrix, stored per receiver column.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelCoefficients {
    /// `columns[l] = b_l = (b_1l, b_2l, b_3l)`.
    pub columns: Vec<[C64; 3]>,
}

impl ChannelCoefficients {
    pub fn num_receivers(&self) -> usize {
        self.columns.len()
    }

    /// `||b_l||^2` for one receiver.
    pub fn column_energy(&self, l: usize) -> f64 {
        self.columns[l].iter().map(|b| b.norm_sqr()).sum()
    }

    pub fn zeros(l: usize) -> Self {
        Self { columns: vec![[C64::new(0.0, 0.0); 3]; l] }
    }
}

/// Physical-model coefficients for a hypothesized source position.
pub fn physical_channel(
    scenario: &Scenario,
    source: &Position,
) -> Result<ChannelCoefficients, ChannelError> {
    let rays = ray_geometry(scenario, source)?;
    let kb = scenario.bottom_reflection;
    let columns = rays
        .distances
        .iter()
        .map(|r| {
            [
                C64::new(1.0 / r[0], 0.0),
                C64::new(-1.0 / r[1], 0.0),
                C64::new(kb / r[2], 0.0),
            ]
        })
        .collect();
    Ok(ChannelCoefficients { columns })
}

/// How random channel coefficients are drawn; both satisfy `E|b|^2 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RandomChannelMode {
    /// Each entry i.i.d. standard circularly-symmetric CN(0, 1).
    #[default]
    StandardCn,
    /// Unit-magnitude random phase times `1 + w`, `w ~ CN(0, 0.01)`:
    /// near-unit ray gains with a small scatter.
    NearUnit,
}

/// Draw a random coefficient matrix (once per experiment, typically).
pub fn random_channel(l: usize, mode: RandomChannelMode, rng_seed: u64) -> ChannelCoefficients {
    let mut rng = seeds::from_u64(rng_seed);
    fn cn<R: Rng>(rng: &mut R, scale: f64) -> C64 {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) * (scale * std::f64::consts::FRAC_1_SQRT_2)
    }
    let columns = (0..l)
        .map(|_| {
            std::array::from_fn(|_| match mode {
                RandomChannelMode::StandardCn => cn(&mut rng, 1.0),
                RandomChannelMode::NearUnit => {
                    let w = cn(&mut rng, 0.1);
                    let phase = rng.random_range(0.0..2.0 * std::f64::consts::PI);
                    C64::new(phase.cos(), phase.sin()) * (C64::new(1.0, 0.0) + w)
                }
            })
        })
        .collect();
    ChannelCoefficients { columns }
}

/// Uniform draws behind a mismatch perturbation, kept for replay.
#[derive(Debug, Clone)]
pub struct MismatchDraws {
    /// `gamma_rl ~ U(0, 0.5)`, indexed `[l][r]`.
    pub gamma: Vec<[f64; 3]>,
    /// `phi_rl ~ U(0, 1)`, indexed `[l][r]`.
    pub phi: Vec<[f64; 3]>,
}

/// Deviation from the physical model:
/// `b_rl(eps) = (1 - eps gamma_rl) b_rl exp(j 2 pi eps phi_rl)`.
///
/// `eps = 0` returns the matrix bit-exactly unchanged.
pub fn perturb_mismatch(
    b: &ChannelCoefficients,
    eps: f64,
    rng_seed: u64,
) -> Result<(ChannelCoefficients, MismatchDraws), ChannelError> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(ChannelError::ParameterOutOfRange { name: "eps", value: eps });
    }
    let mut rng = seeds::from_u64(rng_seed);
    let l = b.num_receivers();
    let mut gamma = Vec::with_capacity(l);
    let mut phi = Vec::with_capacity(l);
    for _ in 0..l {
        gamma.push(std::array::from_fn(|_| rng.random_range(0.0..0.5)));
        phi.push(std::array::from_fn(|_| rng.random_range(0.0..1.0)));
    }
    let columns = b
        .columns
        .iter()
        .enumerate()
        .map(|(li, col)| {
            std::array::from_fn(|r| {
                if eps == 0.0 {
                    col[r]
                } else {
                    let angle = 2.0 * std::f64::consts::PI * eps * phi[li][r];
                    (1.0 - eps * gamma[li][r]) * col[r] * C64::new(angle.cos(), angle.sin())
                }
            })
        })
        .collect();
    Ok((ChannelCoefficients { columns }, MismatchDraws { gamma, phi }))
}

/// Uniform draws behind an occlusion perturbation.
#[derive(Debug, Clone)]
pub struct OcclusionDraws {
    /// `phi_1l ~ U(0, 1)` for each occluded receiver, in the order given.
    pub phi: Vec<f64>,
}

/// LOS occlusion on the selected receivers (0-based indices):
/// `b_1l(beta) = beta b_1l exp(j 2 pi (1 - beta) phi_1l)`; other entries are
/// untouched. `beta = 1` is a bit-exact no-op, `beta = 0` removes the LOS.
pub fn perturb_occlusion(
    b: &ChannelCoefficients,
    beta: f64,
    occluded_receivers: &[usize],
    rng_seed: u64,
) -> Result<(ChannelCoefficients, OcclusionDraws), ChannelError> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(ChannelError::ParameterOutOfRange { name: "beta", value: beta });
    }
    for &idx in occluded_receivers {
        if idx >= b.num_receivers() {
            return Err(ChannelError::ReceiverIndexOutOfRange {
                index: idx,
                receivers: b.num_receivers(),
            });
        }
    }
    let mut rng = seeds::from_u64(rng_seed);
    let phi: Vec<f64> = occluded_receivers
        .iter()
        .map(|_| rng.random_range(0.0..1.0))
        .collect();
    let mut columns = b.columns.clone();
    if beta != 1.0 {
        for (&idx, &ph) in occluded_receivers.iter().zip(&phi) {
            let angle = 2.0 * std::f64::consts::PI * (1.0 - beta) * ph;
            columns[idx][0] = beta * columns[idx][0] * C64::new(angle.cos(), angle.sin());
        }
    }
    Ok((ChannelCoefficients { columns }, OcclusionDraws { phi }))
}

/// Estimator-facing view of a record: measurements and environment only.
#[derive(Debug, Clone, Copy)]
pub struct MeasurementSet<'a> {
    /// `x[l][k]`, the normalized-DFT baseband measurement of receiver `l`.
    pub x: &'a [Vec<C64>],
    pub scenario: &'a Scenario,
}

impl MeasurementSet<'_> {
    pub fn num_receivers(&self) -> usize {
        self.x.len()
    }

    pub fn num_bins(&self) -> usize {
        self.scenario.sample_count
    }

    /// `sum_l ||x_l||^2`.
    pub fn total_energy(&self) -> f64 {
        self.x.iter().flatten().map(|s| s.norm_sqr()).sum()
    }
}

/// A synthesized record: measurements plus the generating quantities.
///
/// Estimators only ever see [`FrequencyRecord::measurements`]; the generating
/// waveform, channel, and source stay on the evaluation side.
#[derive(Debug, Clone)]
pub struct FrequencyRecord {
    measurements: Vec<Vec<C64>>,
    scenario: Scenario,
    truth: Option<RecordTruth>,
}

/// Ground truth retained for scoring and diagnostics.
#[derive(Debug, Clone)]
pub struct RecordTruth {
    pub source: Position,
    pub waveform: Waveform,
    pub channel: ChannelCoefficients,
    pub noise_variances: Vec<f64>,
}

impl FrequencyRecord {
    /// Wrap externally produced measurements (no ground truth attached).
    pub fn from_measurements(
        scenario: Scenario,
        measurements: Vec<Vec<C64>>,
    ) -> Result<Self, ChannelError> {
        if measurements.len() != scenario.num_receivers() {
            return Err(ChannelError::DimensionMismatch(format!(
                "{} measurement vectors for {} receivers",
                measurements.len(),
                scenario.num_receivers()
            )));
        }
        if let Some(bad) = measurements.iter().find(|m| m.len() != scenario.sample_count) {
            return Err(ChannelError::DimensionMismatch(format!(
                "measurement vector of length {} for {} bins",
                bad.len(),
                scenario.sample_count
            )));
        }
        Ok(Self { measurements, scenario, truth: None })
    }

    pub fn measurements(&self) -> MeasurementSet<'_> {
        MeasurementSet { x: &self.measurements, scenario: &self.scenario }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Evaluation-side ground truth; absent for wrapped measurements.
    pub fn truth(&self) -> Option<&RecordTruth> {
        self.truth.as_ref()
    }

    /// Superpose another record's measurements (coordinated multi-source
    /// synthesis). The ground truth of the sum is no longer a single source.
    pub fn superpose(&self, other: &FrequencyRecord) -> Result<Self, ChannelError> {
        if self.measurements.len() != other.measurements.len()
            || self.scenario.sample_count != other.scenario.sample_count
        {
            return Err(ChannelError::DimensionMismatch(
                "superposed records must share dimensions".into(),
            ));
        }
        let measurements = self
            .measurements
            .iter()
            .zip(&other.measurements)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
        Ok(Self { measurements, scenario: self.scenario.clone(), truth: None })
    }
}

/// Synthesize `x_l[k] = s[k] (D_l b_l)[k] + v_l[k]` per bin.
pub fn synthesize(
    scenario: &Scenario,
    source: &Position,
    b: &ChannelCoefficients,
    waveform: &Waveform,
    noise: &NoiseModel,
    noise_block: usize,
    noise_seed: u64,
) -> Result<FrequencyRecord, ChannelError> {
    let n = scenario.sample_count;
    let l = scenario.num_receivers();
    if b.num_receivers() != l {
        return Err(ChannelError::DimensionMismatch(format!(
            "channel has {} columns for {} receivers",
            b.num_receivers(),
            l
        )));
    }
    if waveform.len() != n {
        return Err(ChannelError::DimensionMismatch(format!(
            "waveform has {} bins, scenario has {}",
            waveform.len(),
            n
        )));
    }
    if noise.variances.len() != l {
        return Err(ChannelError::DimensionMismatch(format!(
            "noise model has {} variances for {} receivers",
            noise.variances.len(),
            l
        )));
    }
    let steering = steering_matrices(scenario, source)?;
    let v = draw_noise(noise, n, noise_block, noise_seed)?;
    let measurements = (0..l)
        .map(|li| {
            (0..n)
                .map(|k| waveform.dft[k] * steering[li].response(k, &b.columns[li]) + v[li][k])
                .collect()
        })
        .collect();
    Ok(FrequencyRecord {
        measurements,
        scenario: scenario.clone(),
        truth: Some(RecordTruth {
            source: *source,
            waveform: waveform.clone(),
            channel: b.clone(),
            noise_variances: noise.variances.clone(),
        }),
    })
}
