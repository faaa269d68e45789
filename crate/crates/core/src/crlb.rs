//! Fisher information and the position Cramér-Rao bound for spectrally flat
//! waveforms.
//!
//! The measurement stack `x = H s + v` is complex normal with mean `mu = H s`
//! and covariance `Diag(sigma_v^2) (x) I_N`. Mean and covariance depend on
//! disjoint parameters, so the information matrix is block diagonal: the
//! noise-variance block decouples from everything else and never enters the
//! position bound. The signal block is
//!
//! `J[i, j] = 2 Re{ (d mu / d theta_i)^H Diag^{-1}(sigma^2) (d mu / d theta_j) }`
//!
//! over `theta = [p; phi_s[2..N]; vec(Re B); vec(Im B)]` (the first waveform
//! phase is the reference and is excluded). The delay derivatives come from
//! differentiating the three path lengths directly:
//!
//! `d tau_r / d x_p = (x_p - x_l) / (c R_r)` (same for y), and in depth
//! `(z_p - z_l) / (c R_1)`, `(z_p + z_l) / (c R_2)`,
//! `(z_p + z_l - 2h) / (c R_3)`.
//!
//! Every analytic derivative is checkable against central finite differences
//! through [`finite_difference_check`]; that check is the arbiter for the
//! depth-derivative forms.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::geometry::{ray_geometry, steering_matrices, GeometryError, Position, Scenario};
use crate::channel::ChannelCoefficients;
use crate::waveform::Waveform;
use crate::C64;

/// Spectral-flatness tolerance for CRLB inputs.
const FLATNESS_TOL: f64 = 1e-9;
/// Condition-number limit for inverting the signal block.
const IDENTIFIABILITY_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Error)]
pub enum CrlbError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("CRLB requires a spectrally flat waveform (eps_max = {eps_max:.3e})")]
    NonFlatWaveform { eps_max: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("noise variance must be positive, got {0}")]
    BadVariance(f64),
    #[error("signal FIM block is not identifiable (condition number {condition:.3e})")]
    NonIdentifiable { condition: f64 },
}

/// Index layout of the real parameter vector
/// `theta = [p (3); phi_s[2..N] (N-1); vec(Re B) (3L); vec(Im B) (3L); sigma_v^2 (L)]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParameterLayout {
    pub n: usize,
    pub l: usize,
}

impl ParameterLayout {
    pub fn k_theta(&self) -> usize {
        3 + (self.n - 1) + 6 * self.l + self.l
    }

    /// Dimension of the signal-parameter block (everything except `sigma^2`).
    pub fn signal_dim(&self) -> usize {
        3 + (self.n - 1) + 6 * self.l
    }

    /// Index of the phase of bin `k` (1-based like the bins; bin 0 is the
    /// excluded reference).
    pub fn phase(&self, k: usize) -> usize {
        debug_assert!((1..self.n).contains(&k));
        2 + k
    }

    /// Index of `Re b_{r,l}` under column-major `vec(Re B)`.
    pub fn re_b(&self, ray: usize, receiver: usize) -> usize {
        3 + (self.n - 1) + 3 * receiver + ray
    }

    /// Index of `Im b_{r,l}`.
    pub fn im_b(&self, ray: usize, receiver: usize) -> usize {
        self.re_b(ray, receiver) + 3 * self.l
    }

    /// Index of `sigma_{v_l}^2`.
    pub fn sigma(&self, receiver: usize) -> usize {
        self.signal_dim() + receiver
    }
}

/// Derivatives of the stacked mean `mu = H s` with respect to every signal
/// parameter; column `i` is `d mu / d theta_i` in the layout order.
pub struct MeanDerivatives {
    pub layout: ParameterLayout,
    /// `NL x signal_dim`, receiver-major rows (block `l` covers bins of
    /// receiver `l`).
    pub matrix: DMatrix<C64>,
}

fn check_inputs(
    scenario: &Scenario,
    b: &ChannelCoefficients,
    waveform: &Waveform,
) -> Result<(), CrlbError> {
    if b.num_receivers() != scenario.num_receivers() {
        return Err(CrlbError::DimensionMismatch(format!(
            "channel has {} columns for {} receivers",
            b.num_receivers(),
            scenario.num_receivers()
        )));
    }
    if waveform.len() != scenario.sample_count {
        return Err(CrlbError::DimensionMismatch(format!(
            "waveform has {} bins, scenario has {}",
            waveform.len(),
            scenario.sample_count
        )));
    }
    let dev = waveform.flatness_deviation();
    if dev.eps_max > FLATNESS_TOL {
        return Err(CrlbError::NonFlatWaveform { eps_max: dev.eps_max });
    }
    Ok(())
}

/// Delay derivatives `d tau_{r,l} / d coordinate`, indexed `[l][r][coord]`.
fn delay_gradients(scenario: &Scenario, source: &Position) -> Result<Vec<[[f64; 3]; 3]>, CrlbError> {
    let rays = ray_geometry(scenario, source)?;
    let c = scenario.sound_speed;
    let h = scenario.bottom_depth;
    Ok(scenario
        .receivers
        .iter()
        .enumerate()
        .map(|(l, rx)| {
            let r = &rays.distances[l];
            let dx = source.x - rx.x;
            let dy = source.y - rx.y;
            let dz = [
                source.z - rx.z,
                source.z + rx.z,
                source.z + rx.z - 2.0 * h,
            ];
            std::array::from_fn(|ray| [dx / (c * r[ray]), dy / (c * r[ray]), dz[ray] / (c * r[ray])])
        })
        .collect())
}

/// Analytic derivatives of `H s` for all signal parameters.
pub fn mean_derivatives(
    scenario: &Scenario,
    source: &Position,
    b: &ChannelCoefficients,
    waveform: &Waveform,
) -> Result<MeanDerivatives, CrlbError> {
    check_inputs(scenario, b, waveform)?;
    let n = scenario.sample_count;
    let l = scenario.num_receivers();
    let layout = ParameterLayout { n, l };
    let steering = steering_matrices(scenario, source)?;
    let grads = delay_gradients(scenario, source)?;
    let s = &waveform.dft;

    let mut g = DMatrix::<C64>::zeros(n * l, layout.signal_dim());

    // position coordinates: d D[k,r] / d C = -j w_k D[k,r] dtau_r/dC
    for coord in 0..3 {
        for li in 0..l {
            for k in 0..n {
                let wk = scenario.angular_frequency(k);
                let mut acc = C64::new(0.0, 0.0);
                for r in 0..3 {
                    acc += steering[li].entry(k, r) * b.columns[li][r]
                        * C64::new(0.0, -wk * grads[li][r][coord]);
                }
                g[(li * n + k, coord)] = s[k] * acc;
            }
        }
    }

    // waveform phases: d mu / d phi_k = j s[k] (D b)[k] on bin k of every block
    for k in 1..n {
        let col = layout.phase(k);
        for li in 0..l {
            let resp = steering[li].response(k, &b.columns[li]);
            g[(li * n + k, col)] = C64::new(0.0, 1.0) * s[k] * resp;
        }
    }

    // channel coefficients: support on block l only
    for li in 0..l {
        for r in 0..3 {
            let re_col = layout.re_b(r, li);
            let im_col = layout.im_b(r, li);
            for k in 0..n {
                let v = s[k] * steering[li].entry(k, r);
                g[(li * n + k, re_col)] = v;
                g[(li * n + k, im_col)] = C64::new(0.0, 1.0) * v;
            }
        }
    }

    Ok(MeanDerivatives { layout, matrix: g })
}

/// The full Fisher information matrix in the [`ParameterLayout`] order.
pub struct FisherInformation {
    pub layout: ParameterLayout,
    /// `K_theta x K_theta`, symmetric positive semidefinite.
    pub matrix: DMatrix<f64>,
}

impl FisherInformation {
    /// The signal-parameter block (noise variances excluded).
    pub fn signal_block(&self) -> DMatrix<f64> {
        let d = self.layout.signal_dim();
        self.matrix.view((0, 0), (d, d)).into_owned()
    }
}

/// Assemble the FIM: signal block `2 Re{G^H W G}` with per-receiver weights
/// `1/sigma_l^2`, noise block `N` per receiver, zero cross terms.
pub fn fisher_information(
    scenario: &Scenario,
    source: &Position,
    b: &ChannelCoefficients,
    waveform: &Waveform,
    noise_variances: &[f64],
) -> Result<FisherInformation, CrlbError> {
    if noise_variances.len() != scenario.num_receivers() {
        return Err(CrlbError::DimensionMismatch(format!(
            "{} noise variances for {} receivers",
            noise_variances.len(),
            scenario.num_receivers()
        )));
    }
    for &v in noise_variances {
        if !(v.is_finite() && v > 0.0) {
            return Err(CrlbError::BadVariance(v));
        }
    }
    let derivs = mean_derivatives(scenario, source, b, waveform)?;
    let layout = derivs.layout;
    let n = layout.n;
    let d = layout.signal_dim();

    // weight the rows by 1/sigma_l and form 2 Re{(WG)^H (WG)}
    let mut gw = derivs.matrix;
    for (li, &var) in noise_variances.iter().enumerate() {
        let w = 1.0 / var.sqrt();
        for k in 0..n {
            for c in 0..d {
                gw[(li * n + k, c)] *= w;
            }
        }
    }
    let gram = gw.adjoint() * &gw;

    let mut j = DMatrix::<f64>::zeros(layout.k_theta(), layout.k_theta());
    for rr in 0..d {
        for cc in 0..d {
            j[(rr, cc)] = 2.0 * gram[(rr, cc)].re;
        }
    }
    // exact symmetrization: Re{a^H b} is symmetric by construction, tidy the
    // last-bit asymmetry from the accumulation order
    for rr in 0..d {
        for cc in rr + 1..d {
            let v = 0.5 * (j[(rr, cc)] + j[(cc, rr)]);
            j[(rr, cc)] = v;
            j[(cc, rr)] = v;
        }
    }
    for li in 0..layout.l {
        let idx = layout.sigma(li);
        j[(idx, idx)] = n as f64;
    }
    Ok(FisherInformation { layout, matrix: j })
}

/// 95%-style confidence ellipsoid of the position bound.
#[derive(Debug, Clone)]
pub struct ConfidenceEllipsoid {
    /// Columns are the principal directions.
    pub axes: Matrix3<f64>,
    /// Semi-axis lengths, same order as the columns of `axes`.
    pub semi_axes: Vector3<f64>,
    /// Chi-squared quantile the ellipsoid is scaled to.
    pub chi2_quantile: f64,
    /// Confidence level behind the quantile.
    pub confidence: f64,
}

/// Position block of the CRLB with its scalar bound and ellipsoid.
#[derive(Debug, Clone)]
pub struct PositionBound {
    /// 3x3 covariance lower bound for the position estimate.
    pub covariance: Matrix3<f64>,
    /// Trace of the block: lower bound on the position MSE (m^2).
    pub mse_bound: f64,
    pub ellipsoid: ConfidenceEllipsoid,
}

impl PositionBound {
    /// Squared Mahalanobis distance of an estimation error under the bound.
    pub fn mahalanobis_sq(&self, error: &Vector3<f64>) -> f64 {
        let inv = self.covariance.try_inverse().expect("covariance is positive definite");
        (error.transpose() * inv * error)[(0, 0)]
    }

    /// Whether an estimate falls inside the confidence ellipsoid around truth.
    pub fn covers(&self, truth: &Position, estimate: &Position) -> bool {
        let e = Vector3::new(estimate.x - truth.x, estimate.y - truth.y, estimate.z - truth.z);
        self.mahalanobis_sq(&e) <= self.ellipsoid.chi2_quantile
    }

    /// Ellipsoid volume `4/3 pi prod(semi_axes)`.
    pub fn ellipsoid_volume(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.ellipsoid.semi_axes.iter().product::<f64>()
    }

    /// The (x, y) marginal ellipse at the same confidence, for planar plots:
    /// returns principal directions (columns) and semi-axes.
    pub fn xy_ellipse(&self, confidence: f64) -> (nalgebra::Matrix2<f64>, nalgebra::Vector2<f64>) {
        let c2 = self.covariance.fixed_view::<2, 2>(0, 0).into_owned();
        let se = nalgebra::SymmetricEigen::new(c2);
        let q = ChiSquared::new(2.0).unwrap().inverse_cdf(confidence);
        let semi = se.eigenvalues.map(|v| (v.max(0.0) * q).sqrt());
        (se.eigenvectors, semi)
    }
}

/// Invert the signal block, extract the position covariance, and build the
/// confidence ellipsoid at `confidence` (chi-squared with 3 dof).
pub fn position_crlb_with_confidence(
    fim: &FisherInformation,
    confidence: f64,
) -> Result<PositionBound, CrlbError> {
    let block = fim.signal_block();
    let se = nalgebra::SymmetricEigen::new(block.clone());
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in se.eigenvalues.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let condition = if lo <= 0.0 { f64::INFINITY } else { hi / lo };
    if !condition.is_finite() || condition > IDENTIFIABILITY_CONDITION_LIMIT {
        return Err(CrlbError::NonIdentifiable { condition });
    }
    let inv = block.try_inverse().ok_or(CrlbError::NonIdentifiable { condition })?;
    let covariance = inv.view((0, 0), (3, 3)).into_owned();
    let covariance = Matrix3::from_fn(|r, c| 0.5 * (covariance[(r, c)] + covariance[(c, r)]));
    let mse_bound = covariance.trace();

    let se3 = nalgebra::SymmetricEigen::new(covariance);
    let q = ChiSquared::new(3.0).unwrap().inverse_cdf(confidence);
    let semi_axes = se3.eigenvalues.map(|v| (v.max(0.0) * q).sqrt());
    Ok(PositionBound {
        covariance,
        mse_bound,
        ellipsoid: ConfidenceEllipsoid {
            axes: se3.eigenvectors,
            semi_axes,
            chi2_quantile: q,
            confidence,
        },
    })
}

/// Position CRLB with the default 95% ellipsoid.
pub fn position_crlb(fim: &FisherInformation) -> Result<PositionBound, CrlbError> {
    position_crlb_with_confidence(fim, 0.95)
}

/// Worst relative errors of the analytic derivatives against central finite
/// differences, grouped by parameter kind.
#[derive(Debug, Clone)]
pub struct FdCheckReport {
    pub max_rel_err_position: f64,
    pub max_rel_err_phase: f64,
    pub max_rel_err_coeff: f64,
}

impl FdCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.max_rel_err_position
            .max(self.max_rel_err_phase)
            .max(self.max_rel_err_coeff)
    }
}

fn mean_vector(
    scenario: &Scenario,
    source: &Position,
    b: &ChannelCoefficients,
    waveform: &Waveform,
) -> Result<DVector<C64>, CrlbError> {
    let steering = steering_matrices(scenario, source)?;
    let n = scenario.sample_count;
    let l = scenario.num_receivers();
    let mut mu = DVector::<C64>::zeros(n * l);
    for li in 0..l {
        for k in 0..n {
            mu[li * n + k] = waveform.dft[k] * steering[li].response(k, &b.columns[li]);
        }
    }
    Ok(mu)
}

/// Built-in self check: every analytic derivative column against a central
/// finite difference (position step `1e-4` m, phase step `1e-6` rad,
/// coefficient step `1e-6`).
pub fn finite_difference_check(
    scenario: &Scenario,
    source: &Position,
    b: &ChannelCoefficients,
    waveform: &Waveform,
) -> Result<FdCheckReport, CrlbError> {
    let derivs = mean_derivatives(scenario, source, b, waveform)?;
    let layout = derivs.layout;
    let rel = |fd: &DVector<C64>, col: usize| -> f64 {
        let an = derivs.matrix.column(col);
        let mut diff = 0.0;
        let mut norm = 0.0;
        for (i, fdi) in fd.iter().enumerate() {
            diff += (fdi - an[i]).norm_sqr();
            norm += an[i].norm_sqr();
        }
        (diff / norm.max(f64::MIN_POSITIVE)).sqrt()
    };

    // position
    let hp = 1e-4;
    let mut max_pos = 0.0f64;
    for coord in 0..3 {
        let mut plus = *source;
        let mut minus = *source;
        match coord {
            0 => {
                plus.x += hp;
                minus.x -= hp;
            }
            1 => {
                plus.y += hp;
                minus.y -= hp;
            }
            _ => {
                plus.z += hp;
                minus.z -= hp;
            }
        }
        let fd = (mean_vector(scenario, &plus, b, waveform)?
            - mean_vector(scenario, &minus, b, waveform)?)
            / C64::new(2.0 * hp, 0.0);
        max_pos = max_pos.max(rel(&fd, coord));
    }

    // waveform phases
    let hf = 1e-6;
    let mut max_phase = 0.0f64;
    for k in 1..layout.n {
        let rotate = |delta: f64| {
            let mut w = waveform.clone();
            w.dft[k] *= C64::new(delta.cos(), delta.sin());
            w
        };
        let fd = (mean_vector(scenario, source, b, &rotate(hf))?
            - mean_vector(scenario, source, b, &rotate(-hf))?)
            / C64::new(2.0 * hf, 0.0);
        max_phase = max_phase.max(rel(&fd, layout.phase(k)));
    }

    // channel coefficients
    let hb = 1e-6;
    let mut max_coeff = 0.0f64;
    for li in 0..layout.l {
        for r in 0..3 {
            for (im, col) in [(false, layout.re_b(r, li)), (true, layout.im_b(r, li))] {
                let bump = |delta: f64| {
                    let mut bb = b.clone();
                    bb.columns[li][r] +=
                        if im { C64::new(0.0, delta) } else { C64::new(delta, 0.0) };
                    bb
                };
                let fd = (mean_vector(scenario, source, &bump(hb), waveform)?
                    - mean_vector(scenario, source, &bump(-hb), waveform)?)
                    / C64::new(2.0 * hb, 0.0);
                max_coeff = max_coeff.max(rel(&fd, col));
            }
        }
    }

    Ok(FdCheckReport {
        max_rel_err_position: max_pos,
        max_rel_err_phase: max_phase,
        max_rel_err_coeff: max_coeff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{physical_channel, random_channel, RandomChannelMode};
    use crate::waveform::{make_cn_waveform, make_flat_waveform};
    use approx::assert_relative_eq;

    fn scenario(n: usize, receivers: Vec<Position>) -> Scenario {
        Scenario::new(receivers, 100.0, 1500.0, 1e-3, n, 0.85).unwrap()
    }

    fn spread_array() -> (Scenario, Position) {
        (
            scenario(
                30,
                vec![
                    Position::new(150.0, -175.0, 20.0),
                    Position::new(75.0, -225.0, 20.0),
                    Position::new(-50.0, -200.0, 20.0),
                    Position::new(-150.0, -150.0, 20.0),
                ],
            ),
            Position::new(200.7240, 100.1661, 30.6374),
        )
    }

    #[test]
    fn layout_indices_cover_k_theta() {
        let lay = ParameterLayout { n: 8, l: 3 };
        assert_eq!(lay.k_theta(), 3 + 7 + 18 + 3);
        assert_eq!(lay.signal_dim(), 3 + 7 + 18);
        assert_eq!(lay.phase(1), 3);
        assert_eq!(lay.phase(7), 9);
        assert_eq!(lay.re_b(0, 0), 10);
        assert_eq!(lay.re_b(2, 2), 18);
        assert_eq!(lay.im_b(0, 0), 19);
        assert_eq!(lay.sigma(0), 28);
        assert_eq!(lay.sigma(2), 30);
    }

    #[test]
    fn phase_derivative_support_pattern() {
        let (sc, src) = spread_array();
        let b = random_channel(4, RandomChannelMode::StandardCn, 1);
        let w = make_flat_waveform(30, 2).unwrap();
        let d = mean_derivatives(&sc, &src, &b, &w).unwrap();
        let k = 7usize;
        let col = d.layout.phase(k);
        for li in 0..4 {
            for bin in 0..30 {
                let v = d.matrix[(li * 30 + bin, col)];
                if bin == k {
                    assert!(v.norm() > 0.0);
                } else {
                    assert_eq!(v, C64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn coefficient_derivative_supported_on_own_block() {
        let (sc, src) = spread_array();
        let b = random_channel(4, RandomChannelMode::StandardCn, 3);
        let w = make_flat_waveform(30, 4).unwrap();
        let d = mean_derivatives(&sc, &src, &b, &w).unwrap();
        let col = d.layout.re_b(1, 2);
        for li in 0..4 {
            for bin in 0..30 {
                let v = d.matrix[(li * 30 + bin, col)];
                if li == 2 {
                    assert_relative_eq!(v.norm(), w.dft[bin].norm(), max_relative = 1e-12);
                } else {
                    assert_eq!(v, C64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn finite_difference_agreement_on_random_scenarios() {
        use rand::Rng;
        let mut rng = crate::seeds::from_u64(2024);
        for _ in 0..10 {
            let l = rng.random_range(2..5usize);
            let n = rng.random_range(8..24usize);
            let receivers = (0..l)
                .map(|_| {
                    Position::new(
                        rng.random_range(-300.0..300.0),
                        rng.random_range(-300.0..300.0),
                        rng.random_range(5.0..95.0),
                    )
                })
                .collect();
            let sc = scenario(n, receivers);
            let src = Position::new(
                rng.random_range(-300.0..300.0),
                rng.random_range(-300.0..300.0),
                rng.random_range(5.0..95.0),
            );
            let b = random_channel(l, RandomChannelMode::StandardCn, rng.random());
            let w = make_flat_waveform(n, rng.random()).unwrap();
            let rep = finite_difference_check(&sc, &src, &b, &w).unwrap();
            assert!(rep.max_rel_err() <= 1e-6, "fd report {rep:?}");
        }
    }

    #[test]
    fn non_flat_waveform_is_rejected() {
        let (sc, src) = spread_array();
        let b = random_channel(4, RandomChannelMode::StandardCn, 1);
        let w = make_cn_waveform(30, 2).unwrap();
        assert!(matches!(
            mean_derivatives(&sc, &src, &b, &w),
            Err(CrlbError::NonFlatWaveform { .. })
        ));
    }

    #[test]
    fn fim_symmetry_block_structure_and_noise_scaling() {
        let (sc, src) = spread_array();
        let b = random_channel(4, RandomChannelMode::NearUnit, 5);
        let w = make_flat_waveform(30, 6).unwrap();
        let j1 = fisher_information(&sc, &src, &b, &w, &[0.1; 4]).unwrap();
        let m = &j1.matrix;
        for r in 0..j1.layout.k_theta() {
            for c in 0..j1.layout.k_theta() {
                assert_relative_eq!(m[(r, c)], m[(c, r)], max_relative = 1e-12);
            }
        }
        // cross block exactly zero, noise block N delta
        for li in 0..4 {
            let si = j1.layout.sigma(li);
            for c in 0..j1.layout.signal_dim() {
                assert_eq!(m[(si, c)], 0.0);
            }
            assert_eq!(m[(si, si)], 30.0);
        }
        // scaling all variances by alpha scales the signal block by 1/alpha
        let alpha = 3.7;
        let j2 = fisher_information(&sc, &src, &b, &w, &[0.1 * alpha; 4]).unwrap();
        for r in 0..j1.layout.signal_dim() {
            for c in 0..j1.layout.signal_dim() {
                assert_relative_eq!(
                    j2.matrix[(r, c)] * alpha,
                    j1.matrix[(r, c)],
                    max_relative = 1e-12,
                );
            }
        }
        // and the position bound scales by alpha
        let b1 = position_crlb(&j1).unwrap();
        let b2 = position_crlb(&j2).unwrap();
        assert_relative_eq!(b2.mse_bound, alpha * b1.mse_bound, max_relative = 1e-9);
        // PSD: eigenvalues >= -1e-10 lambda_max
        let se = nalgebra::SymmetricEigen::new(j1.signal_block());
        let hi = se.eigenvalues.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        for &v in se.eigenvalues.iter() {
            assert!(v >= -1e-10 * hi);
        }
    }

    #[test]
    fn single_receiver_is_non_identifiable() {
        let sc = scenario(16, vec![Position::new(100.0, -50.0, 20.0)]);
        let src = Position::new(10.0, 30.0, 40.0);
        let b = random_channel(1, RandomChannelMode::StandardCn, 9);
        let w = make_flat_waveform(16, 10).unwrap();
        let j = fisher_information(&sc, &src, &b, &w, &[0.1]).unwrap();
        assert!(matches!(position_crlb(&j), Err(CrlbError::NonIdentifiable { .. })));
    }

    #[test]
    fn doubling_n_does_not_worsen_the_bound() {
        let (sc30, src) = spread_array();
        let b = random_channel(4, RandomChannelMode::NearUnit, 11);
        let w30 = make_flat_waveform(30, 12).unwrap();
        let j30 = fisher_information(&sc30, &src, &b, &w30, &[0.1; 4]).unwrap();
        let t30 = position_crlb(&j30).unwrap().mse_bound;
        let mut sc60 = sc30.clone();
        sc60.sample_count = 60;
        let w60 = make_flat_waveform(60, 13).unwrap();
        let j60 = fisher_information(&sc60, &src, &b, &w60, &[0.1; 4]).unwrap();
        let t60 = position_crlb(&j60).unwrap().mse_bound;
        assert!(t60 < t30, "trace N=60 {t60} vs N=30 {t30}");
    }

    #[test]
    fn ellipsoid_volume_scales_with_noise_to_three_halves() {
        let (sc, src) = spread_array();
        let b = random_channel(4, RandomChannelMode::NearUnit, 21);
        let w = make_flat_waveform(30, 22).unwrap();
        let j1 = fisher_information(&sc, &src, &b, &w, &[0.1; 4]).unwrap();
        let j2 = fisher_information(&sc, &src, &b, &w, &[0.4; 4]).unwrap();
        let v1 = position_crlb(&j1).unwrap().ellipsoid_volume();
        let v2 = position_crlb(&j2).unwrap().ellipsoid_volume();
        assert_relative_eq!(v2 / v1, 4.0f64.powf(1.5), max_relative = 1e-9);
    }

    #[test]
    fn mc_fim_oracle_tiny_instance() {
        // E[score score^T] estimated by simulation matches the analytic FIM.
        use rand::Rng;
        use rand_distr::StandardNormal;
        let sc = scenario(
            4,
            vec![Position::new(10.0, 0.0, 5.0), Position::new(0.0, 12.0, 8.0)],
        );
        let src = Position::new(3.0, 4.0, 6.0);
        let b = random_channel(2, RandomChannelMode::StandardCn, 31);
        let w = make_flat_waveform(4, 32).unwrap();
        let sigma2 = 0.25;
        let j = fisher_information(&sc, &src, &b, &w, &[sigma2; 2]).unwrap();
        let g = mean_derivatives(&sc, &src, &b, &w).unwrap();
        let d = g.layout.signal_dim();
        let trials = 100_000;
        let mut rng = crate::seeds::from_u64(99);
        let mut acc = DMatrix::<f64>::zeros(d, d);
        let mut score = vec![0.0; d];
        for _ in 0..trials {
            // score_i = (2/sigma^2) Re{ (d mu/d theta_i)^H v }
            let v: Vec<C64> = (0..8)
                .map(|_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    C64::new(re, im) * (sigma2 / 2.0).sqrt()
                })
                .collect();
            for (i, s) in score.iter_mut().enumerate() {
                let mut inner = C64::new(0.0, 0.0);
                for (row, vv) in v.iter().enumerate() {
                    inner += g.matrix[(row, i)].conj() * vv;
                }
                *s = 2.0 / sigma2 * inner.re;
            }
            for r in 0..d {
                for c in 0..d {
                    acc[(r, c)] += score[r] * score[c];
                }
            }
        }
        acc /= trials as f64;
        let js = j.signal_block();
        let scale = js.amax();
        let mut worst = 0.0f64;
        for r in 0..d {
            for c in 0..d {
                worst = worst.max((acc[(r, c)] - js[(r, c)]).abs() / scale);
            }
        }
        assert!(worst < 0.03, "MC-vs-analytic FIM deviation {worst}");
    }

    #[test]
    fn physical_channel_bound_is_finite_on_spread_array() {
        let (sc, src) = spread_array();
        let b = physical_channel(&sc, &src).unwrap();
        let w = make_flat_waveform(30, 41).unwrap();
        let j = fisher_information(&sc, &src, &b, &w, &[1e-7; 4]).unwrap();
        let bound = position_crlb(&j).unwrap();
        assert!(bound.mse_bound.is_finite() && bound.mse_bound > 0.0);
        let (axes, semi) = bound.xy_ellipse(0.95);
        assert!(semi.iter().all(|s| s.is_finite() && *s > 0.0));
        assert_relative_eq!(axes.determinant().abs(), 1.0, max_relative = 1e-9);
    }
}
