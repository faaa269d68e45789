//! Source waveforms and additive receiver noise.
//!
//! Waveforms are represented by their normalized-DFT coefficient vectors and
//! are unit `l2`-normalized: the model has an inherent scaling ambiguity
//! between the waveform and the channel coefficients, so the normalization
//! loses nothing. Noise is circularly-symmetric complex normal per bin, or
//! ingested from an external sample file (recorded ambient noise), normalized
//! to unit variance and rescaled to the requested level.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::seeds;
use crate::C64;

#[derive(Debug, Error)]
pub enum WaveformError {
    #[error("waveform length must be at least 1, got {0}")]
    BadLength(usize),
    #[error("gaussian pulse requires a positive width, got {0}")]
    BadPulseWidth(f64),
    #[error(
        "gaussian pulse energy outside the observation window ({spill:.3e}) exceeds {limit:.1e}"
    )]
    PulseTruncated { spill: f64, limit: f64 },
    #[error("noise variance must be positive and finite, got {0}")]
    BadVariance(f64),
    #[error("external noise file: {0}")]
    ExternalIo(String),
    #[error(
        "external noise file holds {available} samples; trial block {block} needs samples [{start}, {end})"
    )]
    ExternalTooShort {
        available: usize,
        block: usize,
        start: usize,
        end: usize,
    },
}

/// How a waveform's DFT coefficients were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveformKind {
    /// Unit magnitude `1/sqrt(N)` per bin, uniform random phases, first phase zero.
    FlatRandomPhase,
    /// Standard complex-normal draw per bin, then unit-normalized.
    StandardCn,
    /// Sampled baseband Gaussian envelope, DFT'd and unit-normalized.
    GaussianPulse,
    /// Supplied by the caller.
    External,
}

/// A source waveform as its normalized-DFT coefficient vector, `||s||_2 = 1`.
#[derive(Debug, Clone)]
pub struct Waveform {
    pub dft: Vec<C64>,
    pub kind: WaveformKind,
}

/// The deviation of a waveform's power spectrum from a constant level:
/// `Diag(|s|^2) = P_s (I + Sigma_eps)` with `P_s = ||s||^2 / N`.
#[derive(Debug, Clone)]
pub struct SpectralFlatnessDeviation {
    /// Diagonal of `Sigma_eps`.
    pub diagonal: Vec<f64>,
    /// Largest magnitude on the diagonal.
    pub eps_max: f64,
}

impl Waveform {
    pub fn len(&self) -> usize {
        self.dft.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dft.is_empty()
    }

    /// Average per-bin power `P_s = ||s||^2 / N` (equals `1/N` for unit norm).
    pub fn average_power(&self) -> f64 {
        self.dft.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.len() as f64
    }

    /// `Sigma_eps` of the power spectrum relative to its average level.
    pub fn flatness_deviation(&self) -> SpectralFlatnessDeviation {
        let p = self.average_power();
        let diagonal: Vec<f64> = self.dft.iter().map(|s| s.norm_sqr() / p - 1.0).collect();
        let eps_max = diagonal.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        SpectralFlatnessDeviation { diagonal, eps_max }
    }

    /// True when every bin magnitude equals `1/sqrt(N)` up to `tol` (relative).
    pub fn is_spectrally_flat(&self, tol: f64) -> bool {
        self.flatness_deviation().eps_max <= tol
    }

    pub fn from_dft(dft: Vec<C64>, kind: WaveformKind) -> Result<Self, WaveformError> {
        if dft.is_empty() {
            return Err(WaveformError::BadLength(0));
        }
        let mut w = Self { dft, kind };
        w.normalize();
        Ok(w)
    }

    fn normalize(&mut self) {
        let norm = self.dft.iter().map(|s| s.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            for s in &mut self.dft {
                *s /= norm;
            }
        }
    }
}

/// Spectrally flat waveform: `|s[k]| = 1/sqrt(N)`, phases `U(0, 2 pi)` with
/// the reference phase `s[0]` real positive.
pub fn make_flat_waveform(n: usize, rng_seed: u64) -> Result<Waveform, WaveformError> {
    if n < 2 {
        return Err(WaveformError::BadLength(n));
    }
    let mut rng = seeds::from_u64(rng_seed);
    let amp = 1.0 / (n as f64).sqrt();
    let dft = (0..n)
        .map(|k| {
            let phase = if k == 0 { 0.0 } else { rng.random_range(0.0..2.0 * PI) };
            C64::new(amp * phase.cos(), amp * phase.sin())
        })
        .collect();
    Ok(Waveform { dft, kind: WaveformKind::FlatRandomPhase })
}

/// Per-bin standard complex-normal draw, unit-normalized.
pub fn make_cn_waveform(n: usize, rng_seed: u64) -> Result<Waveform, WaveformError> {
    if n < 1 {
        return Err(WaveformError::BadLength(n));
    }
    let mut rng = seeds::from_u64(rng_seed);
    let dft: Vec<C64> = (0..n).map(|_| standard_cn(&mut rng)).collect();
    Waveform::from_dft(dft, WaveformKind::StandardCn)
}

const PULSE_SPILL_LIMIT: f64 = 1e-6;

/// Baseband Gaussian pulse `exp(-(t - t0)^2 / (2 w^2))` sampled at `n T_s`,
/// transformed with the normalized DFT and unit-normalized. Errors when more
/// than `1e-6` of the pulse energy falls outside the observation window.
pub fn make_gaussian_pulse(
    n: usize,
    sample_period: f64,
    center_time: f64,
    width: f64,
) -> Result<Waveform, WaveformError> {
    if n < 2 {
        return Err(WaveformError::BadLength(n));
    }
    if !(width.is_finite() && width > 0.0) {
        return Err(WaveformError::BadPulseWidth(width));
    }
    let samples: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 * sample_period;
            (-(t - center_time).powi(2) / (2.0 * width * width)).exp()
        })
        .collect();
    // energy spill outside [0, N T_s): the squared envelope is a Gaussian of
    // width w/sqrt(2), so its mass inside the window is an erf pair in x/w
    let window = n as f64 * sample_period;
    let total = 0.5 * (erf(center_time / width) + erf((window - center_time) / width));
    let spill = 1.0 - total;
    if spill > PULSE_SPILL_LIMIT {
        return Err(WaveformError::PulseTruncated { spill, limit: PULSE_SPILL_LIMIT });
    }
    // normalized DFT, direct evaluation
    let mut dft = Vec::with_capacity(n);
    let scale = 1.0 / (n as f64).sqrt();
    for k in 0..n {
        let mut acc = C64::new(0.0, 0.0);
        for (i, &s) in samples.iter().enumerate() {
            let phase = -2.0 * PI * (k as f64) * (i as f64) / n as f64;
            acc += s * C64::new(phase.cos(), phase.sin());
        }
        dft.push(acc * scale);
    }
    Waveform::from_dft(dft, WaveformKind::GaussianPulse)
}

fn erf(x: f64) -> f64 {
    // Abramowitz & Stegun 7.1.26, |err| < 1.5e-7; only used for the spill guard
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let y = 1.0
        - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t - 0.284496736) * t
            + 0.254829592)
            * t
            * (-x * x).exp();
    sign * y
}

fn standard_cn<R: Rng>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Where noise samples come from.
#[derive(Debug, Clone)]
pub enum NoiseSource {
    /// I.i.d. circularly-symmetric complex normal per bin.
    SyntheticCn,
    /// Recorded samples, already normalized to unit variance; trial `t` reads
    /// block `t` of `N * L` consecutive samples.
    ExternalSamples(ExternalNoise),
}

/// Per-receiver noise variances plus the sample source.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    /// `sigma_v^2` per receiver; all entries positive (zero allowed for
    /// noiseless synthesis).
    pub variances: Vec<f64>,
    pub source: NoiseSource,
}

impl NoiseModel {
    pub fn synthetic(variances: Vec<f64>) -> Result<Self, WaveformError> {
        for &v in &variances {
            if !(v.is_finite() && v >= 0.0) {
                return Err(WaveformError::BadVariance(v));
            }
        }
        Ok(Self { variances, source: NoiseSource::SyntheticCn })
    }

    pub fn noiseless(l: usize) -> Self {
        Self { variances: vec![0.0; l], source: NoiseSource::SyntheticCn }
    }

    pub fn external(variances: Vec<f64>, noise: ExternalNoise) -> Result<Self, WaveformError> {
        for &v in &variances {
            if !(v.is_finite() && v >= 0.0) {
                return Err(WaveformError::BadVariance(v));
            }
        }
        Ok(Self { variances, source: NoiseSource::ExternalSamples(noise) })
    }
}

/// Recorded noise samples, unit-variance normalized at load time.
#[derive(Debug, Clone)]
pub struct ExternalNoise {
    samples: std::sync::Arc<Vec<C64>>,
}

impl ExternalNoise {
    /// Load interleaved re/im `f64` samples. `.csv` files hold one
    /// `re,im` pair per line; any other extension is read as flat
    /// little-endian binary. The sample set is normalized to unit variance.
    pub fn load(path: &Path) -> Result<Self, WaveformError> {
        let io = |e: std::io::Error| WaveformError::ExternalIo(format!("{}: {e}", path.display()));
        let raw: Vec<f64> = if path.extension().is_some_and(|e| e == "csv") {
            let text = std::fs::read_to_string(path).map_err(io)?;
            let mut vals = Vec::new();
            for (ln, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                for field in line.split(',') {
                    let v: f64 = field.trim().parse().map_err(|e| {
                        WaveformError::ExternalIo(format!(
                            "{}:{}: bad float {field:?}: {e}",
                            path.display(),
                            ln + 1
                        ))
                    })?;
                    vals.push(v);
                }
            }
            vals
        } else {
            let bytes = std::fs::read(path).map_err(io)?;
            if bytes.len() % 8 != 0 {
                return Err(WaveformError::ExternalIo(format!(
                    "{}: length {} is not a multiple of 8 bytes",
                    path.display(),
                    bytes.len()
                )));
            }
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect()
        };
        if raw.len() < 2 || raw.len() % 2 != 0 {
            return Err(WaveformError::ExternalIo(format!(
                "{}: need an even, nonzero count of floats (interleaved re/im), got {}",
                path.display(),
                raw.len()
            )));
        }
        let mut samples: Vec<C64> = raw.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect();
        let var = samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64;
        if var <= 0.0 {
            return Err(WaveformError::ExternalIo(format!(
                "{}: samples have zero variance",
                path.display()
            )));
        }
        let scale = 1.0 / var.sqrt();
        for s in &mut samples {
            *s *= scale;
        }
        Ok(Self { samples: std::sync::Arc::new(samples) })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Draw one record's worth of noise: `L` complex `N`-vectors.
///
/// Synthetic noise is keyed by `rng_seed`; external noise reads block `block`
/// (one block per trial, non-overlapping) and scales by each receiver's
/// standard deviation.
pub fn draw_noise(
    model: &NoiseModel,
    n: usize,
    block: usize,
    rng_seed: u64,
) -> Result<Vec<Vec<C64>>, WaveformError> {
    let l = model.variances.len();
    match &model.source {
        NoiseSource::SyntheticCn => {
            let mut rng = seeds::from_u64(rng_seed);
            Ok(model
                .variances
                .iter()
                .map(|&var| {
                    let sd = var.sqrt();
                    (0..n).map(|_| standard_cn(&mut rng) * sd).collect()
                })
                .collect())
        }
        NoiseSource::ExternalSamples(ext) => {
            let start = block * n * l;
            let end = start + n * l;
            if end > ext.samples.len() {
                return Err(WaveformError::ExternalTooShort {
                    available: ext.samples.len(),
                    block,
                    start,
                    end,
                });
            }
            Ok(model
                .variances
                .iter()
                .enumerate()
                .map(|(li, &var)| {
                    let sd = var.sqrt();
                    ext.samples[start + li * n..start + (li + 1) * n]
                        .iter()
                        .map(|&s| s * sd)
                        .collect()
                })
                .collect())
        }
    }
}
