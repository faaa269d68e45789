//! MFP3 and steered GCC-PHAT baselines.
//!
//! MFP3 assumes the channel response is fully predictable from a candidate
//! position via the physical attenuation rule and scores
//!
//! `sum_k |x[k]^H h_k(p)|^2 / ||h_k(p)||^2`
//!
//! with `x[k]` the across-receiver measurement vector of bin `k` and `h_k(p)`
//! the modeled per-bin response. The "imperfect model" variant replaces the
//! modeled coefficient phases by fixed uniform draws.
//!
//! GCC-PHAT is realized as steered-response power over all receiver pairs with
//! phase-transform weights, steered by the direct-path delays only (the method
//! ignores the multipath structure by design). Bins where the cross-spectrum
//! vanishes contribute nothing.

use rand::Rng;
use thiserror::Error;

use crate::channel::{physical_channel, ChannelCoefficients, MeasurementSet};
use crate::geometry::{ray_geometry, steering_matrices, Position, RAY_LOS};
use crate::sbl::{localize_objective, LocalizationResult, LocalizeError, RefineOptions, SearchGrid};
use crate::seeds;
use crate::C64;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("GCC-PHAT requires at least two receivers, got {0}")]
    TooFewReceivers(usize),
}

/// Channel model used by MFP3 to predict `h_k(p)`.
#[derive(Debug, Clone, Default)]
pub struct MfpChannelModel {
    /// Per-receiver, per-ray unit phasors replacing the modeled phases
    /// ("imperfect model"); `None` keeps the physical rule exact.
    phase_corruption: Option<Vec<[C64; 3]>>,
}

impl MfpChannelModel {
    /// Exact physical attenuation rule.
    pub fn perfect() -> Self {
        Self { phase_corruption: None }
    }

    /// Physical magnitudes with phases replaced by fixed `U(0, 2 pi)` draws,
    /// stored so a trial can be replayed.
    pub fn imperfect(num_receivers: usize, rng_seed: u64) -> Self {
        let mut rng = seeds::from_u64(rng_seed);
        let corruption = (0..num_receivers)
            .map(|_| {
                std::array::from_fn(|_| {
                    let th = rng.random_range(0.0..2.0 * std::f64::consts::PI);
                    C64::new(th.cos(), th.sin())
                })
            })
            .collect();
        Self { phase_corruption: Some(corruption) }
    }

    /// The stored phase draws, if this is an imperfect model.
    pub fn stored_phases(&self) -> Option<&[[C64; 3]]> {
        self.phase_corruption.as_deref()
    }

    /// Modeled coefficients at a candidate position.
    pub fn coefficients(
        &self,
        ms: &MeasurementSet<'_>,
        candidate: &Position,
    ) -> Option<ChannelCoefficients> {
        let mut b = physical_channel(ms.scenario, candidate).ok()?;
        if let Some(corr) = &self.phase_corruption {
            for (col, phases) in b.columns.iter_mut().zip(corr) {
                for r in 0..3 {
                    col[r] = C64::new(col[r].norm(), 0.0) * phases[r];
                }
            }
        }
        Some(b)
    }
}

/// MFP3 objective; `None` marks a degenerate candidate (geometry failure or a
/// vanishing modeled response).
pub fn mfp3_objective(
    ms: &MeasurementSet<'_>,
    candidate: &Position,
    model: &MfpChannelModel,
) -> Option<f64> {
    let b = model.coefficients(ms, candidate)?;
    let steering = steering_matrices(ms.scenario, candidate).ok()?;
    let n = ms.num_bins();
    let l = ms.num_receivers();
    let mut acc = 0.0;
    for k in 0..n {
        let mut num = C64::new(0.0, 0.0);
        let mut den = 0.0;
        for li in 0..l {
            let h = steering[li].response(k, &b.columns[li]);
            num += ms.x[li][k].conj() * h;
            den += h.norm_sqr();
        }
        if den == 0.0 {
            return None;
        }
        acc += num.norm_sqr() / den;
    }
    Some(acc)
}

/// MFP3 localization with the given channel model.
pub fn mfp3_localize(
    ms: &MeasurementSet<'_>,
    grid: &SearchGrid,
    model: &MfpChannelModel,
    refine: &RefineOptions,
) -> Result<LocalizationResult, LocalizeError> {
    localize_objective(ms.scenario, grid, refine, false, |p| mfp3_objective(ms, p, model))
}

/// Steered GCC-PHAT with the phase-transform weights precomputed per record.
pub struct GccPhatObjective {
    /// `(l1, l2, w)` with `w[k]` the unit-modulus PHAT weight, or zero where
    /// the cross-spectrum vanishes.
    pairs: Vec<(usize, usize, Vec<C64>)>,
}

impl GccPhatObjective {
    pub fn new(ms: &MeasurementSet<'_>) -> Result<Self, BaselineError> {
        let l = ms.num_receivers();
        if l < 2 {
            return Err(BaselineError::TooFewReceivers(l));
        }
        let n = ms.num_bins();
        let mut pairs = Vec::with_capacity(l * (l - 1) / 2);
        for l1 in 0..l {
            for l2 in l1 + 1..l {
                let w = (0..n)
                    .map(|k| {
                        let cross = ms.x[l1][k] * ms.x[l2][k].conj();
                        let mag = cross.norm();
                        if mag == 0.0 {
                            C64::new(0.0, 0.0)
                        } else {
                            cross / mag
                        }
                    })
                    .collect();
                pairs.push((l1, l2, w));
            }
        }
        Ok(Self { pairs })
    }

    /// `sum_{pairs} Re sum_k w[k] exp(j w_k (tau_1,l1(p) - tau_1,l2(p)))`.
    pub fn evaluate(&self, ms: &MeasurementSet<'_>, candidate: &Position) -> Option<f64> {
        let rays = ray_geometry(ms.scenario, candidate).ok()?;
        let n = ms.num_bins();
        let w1 = ms.scenario.angular_frequency(1);
        let mut acc = 0.0;
        for (l1, l2, w) in &self.pairs {
            let dtau = rays.delays[*l1][RAY_LOS] - rays.delays[*l2][RAY_LOS];
            // steer = exp(j w_k dtau), advanced by recurrence over bins
            let rot = C64::new((w1 * dtau).cos(), (w1 * dtau).sin());
            let mut steer = C64::new(1.0, 0.0);
            let mut sum = C64::new(0.0, 0.0);
            for wk in w.iter().take(n) {
                sum += wk * steer;
                steer *= rot;
            }
            acc += sum.re;
        }
        Some(acc)
    }
}

/// Convenience one-shot GCC-PHAT objective.
pub fn gccphat_objective(
    ms: &MeasurementSet<'_>,
    candidate: &Position,
) -> Result<Option<f64>, BaselineError> {
    Ok(GccPhatObjective::new(ms)?.evaluate(ms, candidate))
}

/// GCC-PHAT localization (steered-response power over the grid).
pub fn gccphat_localize(
    ms: &MeasurementSet<'_>,
    grid: &SearchGrid,
    refine: &RefineOptions,
) -> Result<LocalizationResult, LocalizeError> {
    let obj = GccPhatObjective::new(ms)
        .map_err(|e| LocalizeError::Configuration(e.to_string()))?;
    localize_objective(ms.scenario, grid, refine, false, |p| obj.evaluate(ms, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{synthesize, FrequencyRecord};
    use crate::geometry::Scenario;
    use crate::sbl::AxisSpec;
    use crate::waveform::{make_flat_waveform, NoiseModel};
    use approx::assert_relative_eq;

    fn scenario(n: usize) -> Scenario {
        Scenario::new(
            vec![
                Position::new(60.0, -40.0, 12.0),
                Position::new(-45.0, -55.0, 18.0),
                Position::new(10.0, 70.0, 25.0),
            ],
            80.0,
            1500.0,
            1e-3,
            n,
            0.85,
        )
        .unwrap()
    }

    fn noiseless_record(sc: &Scenario, src: &Position, seed: u64) -> FrequencyRecord {
        let w = make_flat_waveform(sc.sample_count, seed).unwrap();
        let b = physical_channel(sc, src).unwrap();
        synthesize(sc, src, &b, &w, &NoiseModel::noiseless(sc.num_receivers()), 0, 0).unwrap()
    }

    #[test]
    fn mfp3_objective_at_truth_is_total_energy() {
        let sc = scenario(32);
        let src = Position::new(12.0, 9.0, 33.0);
        let rec = noiseless_record(&sc, &src, 3);
        let ms = rec.measurements();
        let v = mfp3_objective(&ms, &src, &MfpChannelModel::perfect()).unwrap();
        assert_relative_eq!(v, ms.total_energy(), max_relative = 1e-12);
        // any other candidate scores at most the total energy
        let off = mfp3_objective(&ms, &Position::new(0.0, 0.0, 20.0), &MfpChannelModel::perfect())
            .unwrap();
        assert!(off <= ms.total_energy() * (1.0 + 1e-12));
    }

    #[test]
    fn mfp3_matches_residual_concentration_oracle_on_tiny_instance() {
        // independent route: shat[k] = x[k]^H h_k / ||h_k||^2, then
        // objective = sum_k ||x[k]||^2 - sum_k ||x[k] - h_k shat[k]||^2
        let sc = Scenario::new(
            vec![Position::new(30.0, -20.0, 12.0), Position::new(-25.0, 15.0, 30.0)],
            80.0,
            1500.0,
            1e-3,
            4,
            0.85,
        )
        .unwrap();
        let src = Position::new(5.0, 8.0, 40.0);
        let w = make_flat_waveform(4, 9).unwrap();
        let b = physical_channel(&sc, &src).unwrap();
        let noise = NoiseModel::synthetic(vec![0.2, 0.4]).unwrap();
        let rec = synthesize(&sc, &src, &b, &w, &noise, 0, 31).unwrap();
        let ms = rec.measurements();
        for cand in [src, Position::new(-4.0, 12.0, 25.0)] {
            let model = MfpChannelModel::perfect();
            let got = mfp3_objective(&ms, &cand, &model).unwrap();
            let bc = model.coefficients(&ms, &cand).unwrap();
            let steering = steering_matrices(&sc, &cand).unwrap();
            let mut total = 0.0;
            let mut resid = 0.0;
            for k in 0..4 {
                let h: Vec<C64> =
                    (0..2).map(|l| steering[l].response(k, &bc.columns[l])).collect();
                let hn: f64 = h.iter().map(|v| v.norm_sqr()).sum();
                let inner: C64 =
                    (0..2).map(|l| ms.x[l][k].conj() * h[l]).sum();
                let shat = inner.conj() / hn;
                for l in 0..2 {
                    total += ms.x[l][k].norm_sqr();
                    resid += (ms.x[l][k] - h[l] * shat).norm_sqr();
                }
            }
            assert_relative_eq!(got, total - resid, max_relative = 1e-10);
        }
    }

    #[test]
    fn mfp3_objective_scaling_invariance_of_argmax() {
        let sc = scenario(16);
        let src = Position::new(12.0, 9.0, 33.0);
        let rec = noiseless_record(&sc, &src, 5);
        let alpha = C64::new(0.4, -2.1);
        let scaled: Vec<Vec<C64>> =
            rec.measurements().x.iter().map(|xs| xs.iter().map(|s| s * alpha).collect()).collect();
        let ms1 = rec.measurements();
        let ms2 = MeasurementSet { x: &scaled, scenario: &sc };
        let p = Position::new(10.0, 10.0, 30.0);
        let model = MfpChannelModel::perfect();
        let (v1, v2) = (
            mfp3_objective(&ms1, &p, &model).unwrap(),
            mfp3_objective(&ms2, &p, &model).unwrap(),
        );
        assert_relative_eq!(v2, alpha.norm_sqr() * v1, max_relative = 1e-12);
    }

    #[test]
    fn mfp3_imperfect_model_degrades_objective_at_truth() {
        let sc = scenario(32);
        let src = Position::new(12.0, 9.0, 33.0);
        let rec = noiseless_record(&sc, &src, 7);
        let ms = rec.measurements();
        let perfect = mfp3_objective(&ms, &src, &MfpChannelModel::perfect()).unwrap();
        let imperfect =
            mfp3_objective(&ms, &src, &MfpChannelModel::imperfect(3, 99)).unwrap();
        assert!(imperfect < 0.9 * perfect, "imperfect {imperfect} vs perfect {perfect}");
        // imperfect model is reproducible
        let a = MfpChannelModel::imperfect(3, 99);
        let b = MfpChannelModel::imperfect(3, 99);
        assert_eq!(a.stored_phases().unwrap(), b.stored_phases().unwrap());
    }

    #[test]
    fn mfp3_noiseless_grid_recovery() {
        let sc = scenario(16);
        let src = Position::new(10.0, 20.0, 30.0);
        let rec = noiseless_record(&sc, &src, 11);
        let grid = SearchGrid::box_3d(
            AxisSpec::new(-10.0, 30.0, 5.0).unwrap(),
            AxisSpec::new(0.0, 40.0, 5.0).unwrap(),
            AxisSpec::new(10.0, 50.0, 5.0).unwrap(),
        );
        let res = mfp3_localize(
            &rec.measurements(),
            &grid,
            &MfpChannelModel::perfect(),
            &RefineOptions::default(),
        )
        .unwrap();
        assert_eq!(res.grid_maximizer, src);
        assert!(res.estimate.distance_to(&src) <= 1e-5);
    }

    #[test]
    fn gcc_phat_peaks_on_equal_delay_locus() {
        // two receivers fed identical signals: every candidate equidistant
        // from both receivers attains the maximum N per pair
        let sc = Scenario::new(
            vec![Position::new(-50.0, 0.0, 20.0), Position::new(50.0, 0.0, 20.0)],
            80.0,
            1500.0,
            1e-3,
            32,
            0.85,
        )
        .unwrap();
        let w = make_flat_waveform(32, 3).unwrap();
        let x0: Vec<C64> = w.dft.iter().map(|s| s * 2.0).collect();
        let x = vec![x0.clone(), x0];
        let ms = MeasurementSet { x: &x, scenario: &sc };
        let obj = GccPhatObjective::new(&ms).unwrap();
        let on = obj.evaluate(&ms, &Position::new(0.0, 37.0, 31.0)).unwrap();
        assert_relative_eq!(on, 32.0, max_relative = 1e-9);
        let off = obj.evaluate(&ms, &Position::new(20.0, 37.0, 31.0)).unwrap();
        assert!(off < on);
    }

    #[test]
    fn gcc_phat_matches_direct_summation_oracle() {
        let sc = scenario(6);
        let src = Position::new(12.0, 9.0, 33.0);
        let noise = NoiseModel::synthetic(vec![0.1; 3]).unwrap();
        let w = make_flat_waveform(6, 21).unwrap();
        let b = physical_channel(&sc, &src).unwrap();
        let rec = synthesize(&sc, &src, &b, &w, &noise, 0, 77).unwrap();
        let ms = rec.measurements();
        let obj = GccPhatObjective::new(&ms).unwrap();
        let cand = Position::new(8.0, 14.0, 28.0);
        let got = obj.evaluate(&ms, &cand).unwrap();
        // literal nested-loop evaluation of the definition
        let rays = ray_geometry(&sc, &cand).unwrap();
        let mut want = 0.0;
        for l1 in 0..3 {
            for l2 in l1 + 1..3 {
                let dtau = rays.delays[l1][RAY_LOS] - rays.delays[l2][RAY_LOS];
                for k in 0..6 {
                    let cross = ms.x[l1][k] * ms.x[l2][k].conj();
                    if cross.norm() == 0.0 {
                        continue;
                    }
                    let wk = cross / cross.norm();
                    let ph = sc.angular_frequency(k) * dtau;
                    want += (wk * C64::new(ph.cos(), ph.sin())).re;
                }
            }
        }
        assert_relative_eq!(got, want, max_relative = 1e-10);
    }

    #[test]
    fn gcc_phat_ignores_per_receiver_magnitude_scaling() {
        // PHAT normalization strips per-receiver attenuation: real rescaling
        // of whole channel columns leaves the weights, and hence the
        // objective, bit-exactly unchanged
        let sc = scenario(16);
        let src = Position::new(12.0, 9.0, 33.0);
        let w = make_flat_waveform(16, 2).unwrap();
        let b = physical_channel(&sc, &src).unwrap();
        // power-of-two scales keep the rescaled synthesis bit-reproducible
        let mut bu = b.clone();
        for (l, scale) in [(0usize, 0.5), (1, 0.25), (2, 4.0)] {
            for r in 0..3 {
                bu.columns[l][r] = b.columns[l][r] * scale;
            }
        }
        let ra = synthesize(&sc, &src, &b, &w, &NoiseModel::noiseless(3), 0, 0).unwrap();
        let ru = synthesize(&sc, &src, &bu, &w, &NoiseModel::noiseless(3), 0, 0).unwrap();
        let msa = ra.measurements();
        let msu = ru.measurements();
        let oa = GccPhatObjective::new(&msa).unwrap();
        let ou = GccPhatObjective::new(&msu).unwrap();
        for p in [Position::new(4.0, 4.0, 44.0), src, Position::new(-30.0, 12.0, 10.0)] {
            assert_eq!(oa.evaluate(&msa, &p).unwrap(), ou.evaluate(&msu, &p).unwrap());
        }
    }

    #[test]
    fn gcc_phat_rejects_single_receiver() {
        let sc = Scenario::new(vec![Position::new(0.0, 0.0, 10.0)], 80.0, 1500.0, 1e-3, 8, 0.85)
            .unwrap();
        let x = vec![vec![C64::new(1.0, 0.0); 8]];
        let ms = MeasurementSet { x: &x, scenario: &sc };
        assert!(matches!(
            GccPhatObjective::new(&ms),
            Err(BaselineError::TooFewReceivers(1))
        ));
        let grid = SearchGrid::box_3d(
            AxisSpec::new(0.0, 10.0, 5.0).unwrap(),
            AxisSpec::new(0.0, 10.0, 5.0).unwrap(),
            AxisSpec::new(20.0, 30.0, 5.0).unwrap(),
        );
        assert!(matches!(
            gccphat_localize(&ms, &grid, &RefineOptions::default()),
            Err(LocalizeError::Configuration(_))
        ));
    }

    #[test]
    fn zero_cross_spectrum_bins_contribute_zero() {
        let sc = Scenario::new(
            vec![Position::new(-50.0, 0.0, 20.0), Position::new(50.0, 0.0, 20.0)],
            80.0,
            1500.0,
            1e-3,
            8,
            0.85,
        )
        .unwrap();
        let mut x0 = vec![C64::new(0.0, 0.0); 8];
        x0[3] = C64::new(1.0, 1.0);
        let x = vec![x0.clone(), x0];
        let ms = MeasurementSet { x: &x, scenario: &sc };
        let obj = GccPhatObjective::new(&ms).unwrap();
        // only bin 3 carries weight; objective magnitude is bounded by 1
        let v = obj.evaluate(&ms, &Position::new(0.0, 30.0, 30.0)).unwrap();
        assert!(v.abs() <= 1.0 + 1e-12);
        assert_relative_eq!(v, 1.0, max_relative = 1e-9);
    }
}
