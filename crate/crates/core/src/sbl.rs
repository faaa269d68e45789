//! The semi-blind localization estimator.
//!
//! A candidate position `p` is scored by the largest eigenvalue of the reduced
//! data matrix
//!
//! `Qt(p) = U(p)^H U(p)`,  `U(p) = [X_1 D_1^* G_1^{-1} ... X_L D_L^* G_L^{-1}]`,
//!
//! where `X_l = Diag(x_l)`, `D_l` is the steering matrix at `p`, and `G_l` is
//! the upper Cholesky factor of `D_l^T D_l^*`. The `3L x 3L` matrix `Qt` has
//! exactly the nonzero spectrum of the dense `N x N` matrix
//! `Q = sum_l X_l D_l^* (D_l^T D_l^*)^{-1} (X_l D_l^*)^H`, so the objective
//! costs `O(N L^2)` instead of `O(N^2)`.
//!
//! Estimation runs a coarse grid search followed by a derivative-free local
//! refinement (deterministic compass search, monotone in the objective,
//! box-constrained to the grid volume). Grid points with numerically singular
//! `D_l^T D_l^*` are skipped and counted, never fatal.

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{ChannelCoefficients, MeasurementSet};
use crate::geometry::{steering_matrices, Position, Scenario};
use crate::linalg::{cholesky3, hermitian_eig_max, hermitian_eig_max_power};
use crate::waveform::Waveform;
use crate::C64;

/// Grid points whose Gram condition proxy exceeds this are skipped.
pub const DEGENERACY_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Error)]
pub enum LocalizeError {
    #[error("search grid is empty")]
    EmptyGrid,
    #[error("grid step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("grid axis has min {min} > max {max}")]
    BadAxis { min: f64, max: f64 },
    #[error("grid depth range [{zmin}, {zmax}] leaves the water column [0, {h}]")]
    OutsideWaterColumn { zmin: f64, zmax: f64, h: f64 },
    #[error("every grid point was skipped as degenerate")]
    AllPointsSkipped,
    #[error("estimator configuration: {0}")]
    Configuration(String),
    #[error("rank-deficient regressor at the requested position")]
    RankDeficient,
}

/// How the largest eigenvalue of `Qt` is computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EigMethod {
    /// Full Hermitian eigendecomposition (default; `3L` is small).
    Full,
    /// Power iteration, offered for benchmarking.
    Power { tol: f64, max_iters: usize },
}

impl Default for EigMethod {
    fn default() -> Self {
        EigMethod::Full
    }
}

/// The reduction behind the SBL objective at one candidate position.
pub struct ReducedObjectiveMatrix {
    /// `N x 3L`.
    pub u: DMatrix<C64>,
    /// `U^H U`, `3L x 3L` Hermitian positive semidefinite.
    pub q_tilde: DMatrix<C64>,
}

/// Build `U(p)` and `Qt(p)`; `None` marks a degenerate candidate (skip).
pub fn reduced_objective_matrix(
    ms: &MeasurementSet<'_>,
    candidate: &Position,
) -> Option<ReducedObjectiveMatrix> {
    let n = ms.num_bins();
    let l = ms.num_receivers();
    let rows = build_u_rows(ms, candidate)?;
    let u = DMatrix::<C64>::from_fn(n, 3 * l, |k, c| rows[k * 3 * l + c]);
    let q_tilde = q_tilde_from_rows(&rows, n, 3 * l);
    Some(ReducedObjectiveMatrix { u, q_tilde })
}

/// `U(p)` stored row-major (`rows[k * 3L + column]`).
fn build_u_rows(ms: &MeasurementSet<'_>, candidate: &Position) -> Option<Vec<C64>> {
    let n = ms.num_bins();
    let l = ms.num_receivers();
    let steering = steering_matrices(ms.scenario, candidate).ok()?;
    let width = 3 * l;
    let mut rows = vec![C64::new(0.0, 0.0); n * width];
    for (li, d) in steering.iter().enumerate() {
        let gram = d.gram();
        let gamma = cholesky3(&gram, 1e-15)?;
        if gamma.condition_proxy() > DEGENERACY_CONDITION_LIMIT {
            return None;
        }
        let x = &ms.x[li];
        for k in 0..n {
            let row = d.row(k);
            // m = x_l[k] * conj(D_l[k, :]), then right-solve by Gamma
            let m = [x[k] * row[0].conj(), x[k] * row[1].conj(), x[k] * row[2].conj()];
            let ur = gamma.solve_row(&m);
            let base = k * width + 3 * li;
            rows[base] = ur[0];
            rows[base + 1] = ur[1];
            rows[base + 2] = ur[2];
        }
    }
    Some(rows)
}

/// Hermitian Gram `U^H U` accumulated in one pass over the rows.
fn q_tilde_from_rows(rows: &[C64], n: usize, width: usize) -> DMatrix<C64> {
    let mut acc = vec![C64::new(0.0, 0.0); width * width];
    for k in 0..n {
        let row = &rows[k * width..(k + 1) * width];
        for i in 0..width {
            let ci = row[i].conj();
            let dst = &mut acc[i * width..(i + 1) * width];
            for j in i..width {
                dst[j] += ci * row[j];
            }
        }
    }
    DMatrix::from_fn(width, width, |r, c| {
        if r <= c {
            acc[r * width + c]
        } else {
            acc[c * width + r].conj()
        }
    })
}

/// SBL objective `lambda_max(Qt(p))`; `None` marks a degenerate candidate.
pub fn sbl_objective(ms: &MeasurementSet<'_>, candidate: &Position) -> Option<f64> {
    sbl_objective_with(ms, candidate, EigMethod::Full)
}

/// SBL objective with an explicit eigenvalue method.
pub fn sbl_objective_with(
    ms: &MeasurementSet<'_>,
    candidate: &Position,
    method: EigMethod,
) -> Option<f64> {
    let n = ms.num_bins();
    let width = 3 * ms.num_receivers();
    let rows = build_u_rows(ms, candidate)?;
    let q_tilde = q_tilde_from_rows(&rows, n, width);
    let lambda = match method {
        EigMethod::Full => hermitian_eig_max(q_tilde),
        EigMethod::Power { tol, max_iters } => hermitian_eig_max_power(&q_tilde, tol, max_iters),
    };
    Some(lambda.max(0.0))
}

/// Energy captured by the hypothesized three-ray subspaces at `candidate` for
/// a known flat waveform: `sum_l || P_{S D_l} x_l ||^2 = N || U^H s ||^2`.
///
/// At the true position of a noiseless record this equals the total record
/// energy exactly; elsewhere it is smaller.
pub fn sbl_captured_energy(
    ms: &MeasurementSet<'_>,
    candidate: &Position,
    waveform: &Waveform,
) -> Option<f64> {
    let n = ms.num_bins();
    let width = 3 * ms.num_receivers();
    let rows = build_u_rows(ms, candidate)?;
    let mut proj = vec![C64::new(0.0, 0.0); width];
    for k in 0..n {
        let s = waveform.dft[k];
        let row = &rows[k * width..(k + 1) * width];
        for (p, u) in proj.iter_mut().zip(row) {
            *p += u.conj() * s;
        }
    }
    Some(n as f64 * proj.iter().map(|p| p.norm_sqr()).sum::<f64>())
}

/// Least-squares channel estimate per receiver for a hypothesized position
/// and waveform: `b_l = ((S D_l)^H S D_l)^{-1} (S D_l)^H x_l`.
pub fn estimate_channel_given(
    ms: &MeasurementSet<'_>,
    candidate: &Position,
    waveform: &Waveform,
) -> Result<ChannelCoefficients, LocalizeError> {
    let n = ms.num_bins();
    if waveform.len() != n {
        return Err(LocalizeError::Configuration(format!(
            "waveform has {} bins, record has {n}",
            waveform.len()
        )));
    }
    let steering =
        steering_matrices(ms.scenario, candidate).map_err(|_| LocalizeError::RankDeficient)?;
    let mut columns = Vec::with_capacity(ms.num_receivers());
    for (li, d) in steering.iter().enumerate() {
        // G = S D_l, Gram = G^H G, rhs = G^H x_l
        let mut gram = [[C64::new(0.0, 0.0); 3]; 3];
        let mut rhs = [C64::new(0.0, 0.0); 3];
        for k in 0..n {
            let row = d.row(k);
            let s = waveform.dft[k];
            let g = [s * row[0], s * row[1], s * row[2]];
            for r in 0..3 {
                rhs[r] += g[r].conj() * ms.x[li][k];
                for c in 0..3 {
                    gram[r][c] += g[r].conj() * g[c];
                }
            }
        }
        let chol = cholesky3(&gram, 1e-15).ok_or(LocalizeError::RankDeficient)?;
        if chol.condition_proxy() > DEGENERACY_CONDITION_LIMIT {
            return Err(LocalizeError::RankDeficient);
        }
        columns.push(chol.solve_spd(&rhs));
    }
    Ok(ChannelCoefficients { columns })
}

/// One axis of a search box; `min == max` collapses the axis to a plane.
#[derive(Debug, Clone, Copy)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl AxisSpec {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self, LocalizeError> {
        if !(min.is_finite() && max.is_finite()) || min > max {
            return Err(LocalizeError::BadAxis { min, max });
        }
        if !(step.is_finite() && step > 0.0) {
            return Err(LocalizeError::BadStep(step));
        }
        Ok(Self { min, max, step })
    }

    pub fn fixed(value: f64) -> Self {
        Self { min: value, max: value, step: 1.0 }
    }

    fn count(&self) -> usize {
        if self.min == self.max {
            1
        } else {
            ((self.max - self.min) / self.step).floor() as usize + 1
        }
    }

    fn value(&self, i: usize) -> f64 {
        if i == 0 {
            self.min
        } else {
            (self.min + i as f64 * self.step).min(self.max)
        }
    }
}

/// Search volume: an axis-aligned box with per-axis steps, or explicit points.
#[derive(Debug, Clone)]
pub enum SearchGrid {
    Box { x: AxisSpec, y: AxisSpec, z: AxisSpec },
    Points(Vec<Position>),
}

impl SearchGrid {
    pub fn box_3d(x: AxisSpec, y: AxisSpec, z: AxisSpec) -> Self {
        SearchGrid::Box { x, y, z }
    }

    /// Depth-known planar grid at `z0`.
    pub fn plane(x: AxisSpec, y: AxisSpec, z0: f64) -> Self {
        SearchGrid::Box { x, y, z: AxisSpec::fixed(z0) }
    }

    pub fn num_points(&self) -> usize {
        match self {
            SearchGrid::Box { x, y, z } => x.count() * y.count() * z.count(),
            SearchGrid::Points(p) => p.len(),
        }
    }

    /// Point at linear index (x-major, then y, then z).
    pub fn point(&self, i: usize) -> Position {
        match self {
            SearchGrid::Box { x, y, z } => {
                let (ny, nz) = (y.count(), z.count());
                let ix = i / (ny * nz);
                let iy = (i / nz) % ny;
                let iz = i % nz;
                Position::new(x.value(ix), y.value(iy), z.value(iz))
            }
            SearchGrid::Points(p) => p[i],
        }
    }

    /// Bounding box used to constrain refinement.
    fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        match self {
            SearchGrid::Box { x, y, z } => ([x.min, y.min, z.min], [x.max, y.max, z.max]),
            SearchGrid::Points(pts) => {
                let mut lo = [f64::INFINITY; 3];
                let mut hi = [f64::NEG_INFINITY; 3];
                for p in pts {
                    for (i, v) in [p.x, p.y, p.z].into_iter().enumerate() {
                        lo[i] = lo[i].min(v);
                        hi[i] = hi[i].max(v);
                    }
                }
                (lo, hi)
            }
        }
    }

    /// Largest axis step (refinement's default initial step).
    fn max_step(&self) -> f64 {
        match self {
            SearchGrid::Box { x, y, z } => {
                let mut s: f64 = 0.0;
                if x.min < x.max {
                    s = s.max(x.step);
                }
                if y.min < y.max {
                    s = s.max(y.step);
                }
                if z.min < z.max {
                    s = s.max(z.step);
                }
                if s == 0.0 {
                    1.0
                } else {
                    s
                }
            }
            SearchGrid::Points(_) => 1.0,
        }
    }

    fn validate(&self, scenario: &Scenario) -> Result<(), LocalizeError> {
        if self.num_points() == 0 {
            return Err(LocalizeError::EmptyGrid);
        }
        let ([_, _, zmin], [_, _, zmax]) = self.bounds();
        if zmin < 0.0 || zmax > scenario.bottom_depth {
            return Err(LocalizeError::OutsideWaterColumn {
                zmin,
                zmax,
                h: scenario.bottom_depth,
            });
        }
        Ok(())
    }
}

/// Options for the derivative-free local refinement.
#[derive(Debug, Clone, Copy)]
pub struct RefineOptions {
    /// Stop once the compass step drops below this (meters).
    pub step_tolerance: f64,
    /// Iteration cap.
    pub max_iterations: usize,
    /// Initial step; defaults to half the largest grid step.
    pub initial_step: Option<f64>,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self { step_tolerance: 1e-6, max_iterations: 200, initial_step: None }
    }
}

/// Objective values over a grid, for heatmap export. Skipped points are NaN.
#[derive(Debug, Clone)]
pub struct ObjectiveMap {
    pub grid: SearchGrid,
    pub values: Vec<f64>,
    /// Linear index of the maximizer, if any point evaluated.
    pub max_index: Option<usize>,
}

/// Outcome of grid search plus refinement.
#[derive(Debug, Clone)]
pub struct LocalizationResult {
    pub estimate: Position,
    pub objective_at_estimate: f64,
    pub grid_maximizer: Position,
    pub objective_at_grid_maximizer: f64,
    pub refine_iterations: usize,
    pub converged: bool,
    /// Degenerate grid points skipped during the scan.
    pub skipped_points: usize,
    /// Grid points whose objective tied the maximum bit-exactly.
    pub tie_count: usize,
    pub map: Option<ObjectiveMap>,
}

/// Grid search + compass refinement over an arbitrary position objective.
///
/// The objective returns `None` for degenerate candidates. Grid ties keep the
/// lowest linear index. Refinement is monotone nondecreasing, deterministic,
/// and clamped to the grid bounding box.
pub fn localize_objective<F>(
    scenario: &Scenario,
    grid: &SearchGrid,
    refine: &RefineOptions,
    keep_map: bool,
    objective: F,
) -> Result<LocalizationResult, LocalizeError>
where
    F: Fn(&Position) -> Option<f64> + Sync,
{
    grid.validate(scenario)?;
    let npts = grid.num_points();
    let values: Vec<f64> = (0..npts)
        .into_par_iter()
        .map(|i| objective(&grid.point(i)).unwrap_or(f64::NAN))
        .collect();

    let mut best: Option<(usize, f64)> = None;
    let mut ties = 0usize;
    let mut skipped = 0usize;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            skipped += 1;
            continue;
        }
        match best {
            None => best = Some((i, v)),
            Some((_, bv)) if v > bv => {
                best = Some((i, v));
                ties = 0;
            }
            Some((_, bv)) if v == bv => ties += 1,
            _ => {}
        }
    }
    let (best_idx, best_val) = best.ok_or(LocalizeError::AllPointsSkipped)?;
    let grid_maximizer = grid.point(best_idx);

    let (lo, hi) = grid.bounds();
    let clamp = |p: Position| {
        Position::new(p.x.clamp(lo[0], hi[0]), p.y.clamp(lo[1], hi[1]), p.z.clamp(lo[2], hi[2]))
    };

    let mut p = grid_maximizer;
    let mut f = best_val;
    let mut step = refine.initial_step.unwrap_or(grid.max_step() * 0.5);
    let mut iters = 0usize;
    while step > refine.step_tolerance && iters < refine.max_iterations {
        let mut improved = false;
        for axis in 0..3 {
            if hi[axis] == lo[axis] {
                continue;
            }
            for sign in [1.0, -1.0] {
                let mut q = p;
                match axis {
                    0 => q.x += sign * step,
                    1 => q.y += sign * step,
                    _ => q.z += sign * step,
                }
                let q = clamp(q);
                if q == p {
                    continue;
                }
                if let Some(fq) = objective(&q) {
                    if fq > f {
                        p = q;
                        f = fq;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
        iters += 1;
    }

    Ok(LocalizationResult {
        estimate: p,
        objective_at_estimate: f,
        grid_maximizer,
        objective_at_grid_maximizer: best_val,
        refine_iterations: iters,
        converged: step <= refine.step_tolerance,
        skipped_points: skipped,
        tie_count: ties,
        map: keep_map.then(|| ObjectiveMap {
            grid: grid.clone(),
            values,
            max_index: Some(best_idx),
        }),
    })
}

/// SBL localization: grid search on `lambda_max(Qt)` plus local refinement.
pub fn sbl_localize(
    ms: &MeasurementSet<'_>,
    grid: &SearchGrid,
    refine: &RefineOptions,
) -> Result<LocalizationResult, LocalizeError> {
    localize_objective(ms.scenario, grid, refine, false, |p| sbl_objective(ms, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{physical_channel, synthesize};
    use crate::geometry::Position;
    use crate::waveform::{make_flat_waveform, NoiseModel};
    use approx::assert_relative_eq;

    fn small_scenario(n: usize) -> Scenario {
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

    #[test]
    fn zero_measurements_give_zero_objective() {
        let sc = small_scenario(16);
        let x = vec![vec![C64::new(0.0, 0.0); 16]; 3];
        let ms = MeasurementSet { x: &x, scenario: &sc };
        let v = sbl_objective(&ms, &Position::new(5.0, 6.0, 30.0)).unwrap();
        assert!(v.abs() <= 1e-30);
    }

    #[test]
    fn square_steering_reduces_to_max_bin_power() {
        // L = 1, N = 3: D is 3x3 and invertible, so Q = X X^H and the
        // objective is the largest |x[k]|^2
        let sc = Scenario::new(
            vec![Position::new(30.0, -20.0, 12.0)],
            80.0,
            1500.0,
            1e-3,
            3,
            0.85,
        )
        .unwrap();
        let x = vec![vec![C64::new(0.4, 0.3), C64::new(-1.2, 0.1), C64::new(0.2, -0.9)]];
        let ms = MeasurementSet { x: &x, scenario: &sc };
        let v = sbl_objective(&ms, &Position::new(3.0, 4.0, 35.0)).unwrap();
        let want = x[0].iter().map(|s| s.norm_sqr()).fold(0.0f64, f64::max);
        assert_relative_eq!(v, want, max_relative = 1e-10);
    }

    #[test]
    fn objective_scales_quadratically_with_record_scaling() {
        let sc = small_scenario(32);
        let src = Position::new(12.0, 9.0, 33.0);
        let w = make_flat_waveform(32, 3).unwrap();
        let b = physical_channel(&sc, &src).unwrap();
        let rec = synthesize(&sc, &src, &b, &w, &NoiseModel::noiseless(3), 0, 0).unwrap();
        let alpha = C64::new(-1.5, 2.0);
        let scaled: Vec<Vec<C64>> =
            rec.measurements().x.iter().map(|xs| xs.iter().map(|s| s * alpha).collect()).collect();
        let ms = rec.measurements();
        let ms2 = MeasurementSet { x: &scaled, scenario: &sc };
        let p = Position::new(15.0, 5.0, 30.0);
        let (v1, v2) = (sbl_objective(&ms, &p).unwrap(), sbl_objective(&ms2, &p).unwrap());
        assert_relative_eq!(v2, alpha.norm_sqr() * v1, max_relative = 1e-10);
    }

    #[test]
    fn noiseless_grid_recovery_on_small_grid() {
        // N large enough that the c N T_s path ambiguity (96 m) clears the box
        let sc = small_scenario(64);
        let src = Position::new(10.0, 20.0, 30.0); // a grid point
        let w = make_flat_waveform(64, 5).unwrap();
        let b = physical_channel(&sc, &src).unwrap();
        let rec = synthesize(&sc, &src, &b, &w, &NoiseModel::noiseless(3), 0, 0).unwrap();
        let grid = SearchGrid::box_3d(
            AxisSpec::new(-15.0, 35.0, 5.0).unwrap(),
            AxisSpec::new(-5.0, 45.0, 5.0).unwrap(),
            AxisSpec::new(5.0, 55.0, 5.0).unwrap(),
        );
        let res = sbl_localize(&rec.measurements(), &grid, &RefineOptions::default()).unwrap();
        assert_eq!(res.grid_maximizer, src);
        // the eigenvalue relaxation may place its exact peak a small distance
        // off the true position; refinement must stay inside the truth cell
        assert!(res.estimate.distance_to(&src) <= 2.5, "refined {:?}", res.estimate);
        assert!(res.objective_at_estimate >= res.objective_at_grid_maximizer);
        assert!(res.converged);
    }

    #[test]
    fn captured_energy_equals_total_at_noiseless_truth() {
        let sc = small_scenario(24);
        let src = Position::new(-8.0, 14.0, 41.0);
        let w = make_flat_waveform(24, 7).unwrap();
        let b = physical_channel(&sc, &src).unwrap();
        let rec = synthesize(&sc, &src, &b, &w, &NoiseModel::noiseless(3), 0, 0).unwrap();
        let ms = rec.measurements();
        let total = ms.total_energy();
        let captured = sbl_captured_energy(&ms, &src, &w).unwrap();
        assert_relative_eq!(captured, total, max_relative = 1e-12);
        // elsewhere it drops
        let off = sbl_captured_energy(&ms, &Position::new(5.0, -20.0, 20.0), &w).unwrap();
        assert!(off < total);
        // and lambda_max respects the energy bound
        let lam = sbl_objective(&ms, &src).unwrap();
        assert!(lam <= total * (1.0 + 1e-12));
    }

    #[test]
    fn channel_estimate_recovers_truth_noiselessly() {
        let sc = small_scenario(24);
        let src = Position::new(18.0, -12.0, 22.0);
        let w = make_flat_waveform(24, 11).unwrap();
        let b = physical_channel(&sc, &src).unwrap();
        let rec = synthesize(&sc, &src, &b, &w, &NoiseModel::noiseless(3), 0, 0).unwrap();
        let ms = rec.measurements();
        let bhat = estimate_channel_given(&ms, &src, &w).unwrap();
        for l in 0..3 {
            for r in 0..3 {
                assert!((bhat.columns[l][r] - b.columns[l][r]).norm() <= 1e-10);
            }
        }
    }

    #[test]
    fn channel_estimate_residual_is_orthogonal_to_regressors() {
        let sc = small_scenario(20);
        let src = Position::new(18.0, -12.0, 22.0);
        let w = make_flat_waveform(20, 13).unwrap();
        let b = physical_channel(&sc, &src).unwrap();
        let noise = NoiseModel::synthetic(vec![0.05; 3]).unwrap();
        let rec = synthesize(&sc, &src, &b, &w, &noise, 0, 42).unwrap();
        let ms = rec.measurements();
        // evaluate at a slightly wrong position too: normal equations still hold
        for p in [src, Position::new(17.0, -10.0, 24.0)] {
            let bhat = estimate_channel_given(&ms, &p, &w).unwrap();
            let steering = steering_matrices(&sc, &p).unwrap();
            for l in 0..3 {
                for r in 0..3 {
                    let mut inner = C64::new(0.0, 0.0);
                    for k in 0..20 {
                        let g = w.dft[k] * steering[l].entry(k, r);
                        let fit = w.dft[k] * steering[l].response(k, &bhat.columns[l]);
                        inner += g.conj() * (ms.x[l][k] - fit);
                    }
                    assert!(inner.norm() <= 1e-10, "receiver {l} ray {r}: {inner}");
                }
            }
        }
    }

    #[test]
    fn occluded_synthesis_yields_near_zero_los_estimate() {
        let sc = small_scenario(32);
        let src = Position::new(18.0, -12.0, 22.0);
        let w = make_flat_waveform(32, 17).unwrap();
        let mut b = physical_channel(&sc, &src).unwrap();
        b.columns[1][0] = C64::new(0.0, 0.0); // receiver 1 LOS fully occluded
        let rec = synthesize(&sc, &src, &b, &w, &NoiseModel::noiseless(3), 0, 0).unwrap();
        let bhat = estimate_channel_given(&rec.measurements(), &src, &w).unwrap();
        assert!(bhat.columns[1][0].norm() <= 1e-10);
        assert!((bhat.columns[1][1] - b.columns[1][1]).norm() <= 1e-10);
    }

    #[test]
    fn power_method_option_agrees_with_full_eig() {
        let sc = small_scenario(48);
        let src = Position::new(18.0, -12.0, 22.0);
        let w = make_flat_waveform(48, 23).unwrap();
        let b = physical_channel(&sc, &src).unwrap();
        let noise = NoiseModel::synthetic(vec![0.02; 3]).unwrap();
        let rec = synthesize(&sc, &src, &b, &w, &noise, 0, 9).unwrap();
        let ms = rec.measurements();
        let p = Position::new(16.0, -10.0, 25.0);
        let full = sbl_objective_with(&ms, &p, EigMethod::Full).unwrap();
        let power =
            sbl_objective_with(&ms, &p, EigMethod::Power { tol: 1e-13, max_iters: 20_000 })
                .unwrap();
        assert_relative_eq!(full, power, max_relative = 1e-9);
    }

    #[test]
    fn grid_validation() {
        let sc = small_scenario(8);
        let x = vec![vec![C64::new(1.0, 0.0); 8]; 3];
        let ms = MeasurementSet { x: &x, scenario: &sc };
        let grid = SearchGrid::box_3d(
            AxisSpec::new(0.0, 10.0, 5.0).unwrap(),
            AxisSpec::new(0.0, 10.0, 5.0).unwrap(),
            AxisSpec::new(70.0, 95.0, 5.0).unwrap(),
        );
        let err = sbl_localize(&ms, &grid, &RefineOptions::default()).unwrap_err();
        assert!(matches!(err, LocalizeError::OutsideWaterColumn { .. }));
        assert!(AxisSpec::new(3.0, 1.0, 1.0).is_err());
        assert!(AxisSpec::new(1.0, 3.0, 0.0).is_err());
        let empty = SearchGrid::Points(vec![]);
        assert!(matches!(
            sbl_localize(&ms, &empty, &RefineOptions::default()).unwrap_err(),
            LocalizeError::EmptyGrid
        ));
    }

    #[test]
    fn planar_grid_keeps_depth_fixed() {
        let sc = small_scenario(64);
        let src = Position::new(10.0, 20.0, 30.0);
        let w = make_flat_waveform(64, 5).unwrap();
        let b = physical_channel(&sc, &src).unwrap();
        let rec = synthesize(&sc, &src, &b, &w, &NoiseModel::noiseless(3), 0, 0).unwrap();
        let grid = SearchGrid::plane(
            AxisSpec::new(0.0, 20.0, 2.0).unwrap(),
            AxisSpec::new(10.0, 30.0, 2.0).unwrap(),
            30.0,
        );
        let res = sbl_localize(&rec.measurements(), &grid, &RefineOptions::default()).unwrap();
        assert_eq!(res.estimate.z, 30.0);
        assert_eq!(res.grid_maximizer, src);
        assert!(res.estimate.distance_to(&src) <= 1.0, "refined {:?}", res.estimate);
    }

    #[test]
    fn grid_of_degenerate_points_is_an_estimation_failure() {
        let sc = small_scenario(8);
        let x = vec![vec![C64::new(1.0, 0.0); 8]; 3];
        let ms = MeasurementSet { x: &x, scenario: &sc };
        // every candidate coincides with a receiver
        let grid = SearchGrid::Points(sc.receivers.clone());
        let err = sbl_localize(&ms, &grid, &RefineOptions::default()).unwrap_err();
        assert!(matches!(err, LocalizeError::AllPointsSkipped));
    }

    #[test]
    fn all_zero_channel_grid_is_flat_but_not_skipped() {
        let sc = small_scenario(8);
        let x = vec![vec![C64::new(0.0, 0.0); 8]; 3];
        let ms = MeasurementSet { x: &x, scenario: &sc };
        let grid = SearchGrid::box_3d(
            AxisSpec::new(0.0, 10.0, 5.0).unwrap(),
            AxisSpec::new(0.0, 10.0, 5.0).unwrap(),
            AxisSpec::new(20.0, 30.0, 5.0).unwrap(),
        );
        let res = sbl_localize(&ms, &grid, &RefineOptions::default()).unwrap();
        // everything ties at zero; lowest linear index wins
        assert_eq!(res.grid_maximizer, grid.point(0));
        assert!(res.tie_count > 0);
    }
}
