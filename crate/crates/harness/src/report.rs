//! Experiment reports and their CSV/JSON serializations.
//!
//! CSV floats use Rust's shortest round-trip formatting, so identical runs
//! produce byte-identical files. Failed trials are counted and dumped with
//! their error text; they never enter an RMS silently.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use sbl_core::crlb::PositionBound;
use sbl_core::geometry::Position;
use sbl_core::sbl::{LocalizationResult, ObjectiveMap};

/// One estimator run on one trial.
#[derive(Debug, Clone, Serialize)]
pub struct TrialOutcome {
    pub trial: u64,
    pub estimator: String,
    pub estimate: Option<[f64; 3]>,
    pub miss: Option<f64>,
    pub objective: Option<f64>,
    pub grid_maximizer: Option<[f64; 3]>,
    pub converged: Option<bool>,
    pub skipped_points: Option<usize>,
    pub error: Option<String>,
}

impl TrialOutcome {
    pub fn success(trial: u64, estimator: &str, res: &LocalizationResult, miss: f64) -> Self {
        Self {
            trial,
            estimator: estimator.to_string(),
            estimate: Some([res.estimate.x, res.estimate.y, res.estimate.z]),
            miss: Some(miss),
            objective: Some(res.objective_at_estimate),
            grid_maximizer: Some([
                res.grid_maximizer.x,
                res.grid_maximizer.y,
                res.grid_maximizer.z,
            ]),
            converged: Some(res.converged),
            skipped_points: Some(res.skipped_points),
            error: None,
        }
    }

    pub fn failed(trial: u64, estimator: &str, error: String) -> Self {
        Self {
            trial,
            estimator: estimator.to_string(),
            estimate: None,
            miss: None,
            objective: None,
            grid_maximizer: None,
            converged: None,
            skipped_points: None,
            error: Some(error),
        }
    }
}

/// Aggregate over the trials of one estimator at one sweep point.
#[derive(Debug, Clone, Serialize)]
pub struct EstimatorSummary {
    pub estimator: String,
    /// RMS miss distance over successful trials; absent if none succeeded.
    pub rms_miss: Option<f64>,
    pub trials_ok: usize,
    pub trials_failed: usize,
    pub trials: Vec<TrialOutcome>,
}

impl EstimatorSummary {
    pub fn from_trials(estimator: &str, trials: Vec<TrialOutcome>) -> Self {
        let mut sq = 0.0;
        let mut ok = 0usize;
        let mut failed = 0usize;
        for t in &trials {
            match t.miss {
                Some(m) => {
                    sq += m * m;
                    ok += 1;
                }
                None => failed += 1,
            }
        }
        Self {
            estimator: estimator.to_string(),
            rms_miss: (ok > 0).then(|| (sq / ok as f64).sqrt()),
            trials_ok: ok,
            trials_failed: failed,
            trials,
        }
    }

    /// Standard error of the RMS miss (delta method over squared misses).
    pub fn rms_standard_error(&self) -> Option<f64> {
        let rms = self.rms_miss?;
        if self.trials_ok < 2 || rms == 0.0 {
            return None;
        }
        let sq: Vec<f64> = self.trials.iter().filter_map(|t| t.miss).map(|m| m * m).collect();
        let mean = sq.iter().sum::<f64>() / sq.len() as f64;
        let var = sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (sq.len() - 1) as f64;
        Some((var / sq.len() as f64).sqrt() / (2.0 * rms))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub estimators: Vec<EstimatorSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub kind: String,
    pub sweep_variable: String,
    pub master_seed: u64,
    pub trials: usize,
    pub points: Vec<SweepPoint>,
}

impl ExperimentReport {
    pub fn summary(&self, value: f64, estimator: &str) -> Option<&EstimatorSummary> {
        self.points
            .iter()
            .find(|p| p.value == value)?
            .estimators
            .iter()
            .find(|e| e.estimator == estimator)
    }

    /// Sweep curve CSV: one row per (sweep value, estimator).
    pub fn write_sweep_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut out = String::from("sweep_variable,value,estimator,rms_miss_m,trials_ok,trials_failed\n");
        for point in &self.points {
            for est in &point.estimators {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    self.sweep_variable,
                    point.value,
                    est.estimator,
                    est.rms_miss.map_or_else(|| "NaN".to_string(), fmt_f64),
                    est.trials_ok,
                    est.trials_failed
                ));
            }
        }
        std::fs::write(path, out)
    }

    /// Full per-trial dump.
    pub fn write_trials_json(&self, path: &Path) -> std::io::Result<()> {
        write_json(path, self)
    }
}

/// CRLB-validation outcome: the bound, the estimates, and the coverage.
#[derive(Debug, Clone, Serialize)]
pub struct CrlbValidationReport {
    pub master_seed: u64,
    pub true_source: [f64; 3],
    pub covariance: [[f64; 3]; 3],
    pub mse_bound_trace: f64,
    pub ellipsoid_semi_axes: [f64; 3],
    pub ellipsoid_axes_columns: [[f64; 3]; 3],
    pub chi2_quantile: f64,
    pub confidence: f64,
    pub noise_variances: Vec<f64>,
    pub coverage: f64,
    pub rmse: Option<f64>,
    pub trials_ok: usize,
    pub trials_failed: usize,
    pub inside: Vec<bool>,
    pub trials: Vec<TrialOutcome>,
}

impl CrlbValidationReport {
    pub fn new(
        master_seed: u64,
        truth: &Position,
        bound: PositionBound,
        noise_variances: Vec<f64>,
        trials: Vec<TrialOutcome>,
    ) -> Self {
        let mut inside = Vec::with_capacity(trials.len());
        let mut hits = 0usize;
        let mut ok = 0usize;
        let mut failed = 0usize;
        let mut sq = 0.0f64;
        for t in &trials {
            match t.estimate {
                Some([x, y, z]) => {
                    let est = Position::new(x, y, z);
                    let covered = bound.covers(truth, &est);
                    inside.push(covered);
                    hits += covered as usize;
                    ok += 1;
                    sq += t.miss.unwrap_or(0.0).powi(2);
                }
                None => {
                    inside.push(false);
                    failed += 1;
                }
            }
        }
        let covariance =
            std::array::from_fn(|r| std::array::from_fn(|c| bound.covariance[(r, c)]));
        let semi = &bound.ellipsoid.semi_axes;
        let axes = &bound.ellipsoid.axes;
        Self {
            master_seed,
            true_source: [truth.x, truth.y, truth.z],
            covariance,
            mse_bound_trace: bound.mse_bound,
            ellipsoid_semi_axes: [semi[0], semi[1], semi[2]],
            ellipsoid_axes_columns: std::array::from_fn(|c| {
                std::array::from_fn(|r| axes[(r, c)])
            }),
            chi2_quantile: bound.ellipsoid.chi2_quantile,
            confidence: bound.ellipsoid.confidence,
            noise_variances,
            coverage: if ok > 0 { hits as f64 / ok as f64 } else { 0.0 },
            rmse: (ok > 0).then(|| (sq / ok as f64).sqrt()),
            trials_ok: ok,
            trials_failed: failed,
            inside,
            trials,
        }
    }

    pub fn write_json(&self, path: &Path) -> std::io::Result<()> {
        write_json(path, self)
    }

    /// Per-trial estimates CSV with the coverage flag.
    pub fn write_estimates_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut out = String::from("trial,x_m,y_m,z_m,miss_m,inside_ellipsoid\n");
        for (t, covered) in self.trials.iter().zip(&self.inside) {
            match (t.estimate, t.miss) {
                (Some([x, y, z]), Some(m)) => out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    t.trial,
                    fmt_f64(x),
                    fmt_f64(y),
                    fmt_f64(z),
                    fmt_f64(m),
                    covered
                )),
                _ => out.push_str(&format!("{},NaN,NaN,NaN,NaN,false\n", t.trial)),
            }
        }
        std::fs::write(path, out)
    }
}

/// A fixed-depth objective slice for one estimator.
#[derive(Debug, Clone)]
pub struct HeatmapReport {
    pub estimator: String,
    pub z: f64,
    pub map: ObjectiveMap,
    pub true_source: [f64; 3],
}

impl HeatmapReport {
    /// `x,y,z,value` rows over the slice; skipped points print `NaN`.
    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut out = String::from("x_m,y_m,z_m,value\n");
        for (i, v) in self.map.values.iter().enumerate() {
            let p = self.map.grid.point(i);
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt_f64(p.x),
                fmt_f64(p.y),
                fmt_f64(p.z),
                fmt_f64(*v)
            ));
        }
        std::fs::write(path, out)
    }

    /// Companion metadata: the annotated maximizer and skip count.
    pub fn write_meta_json(&self, path: &Path) -> std::io::Result<()> {
        #[derive(Serialize)]
        struct Meta<'a> {
            estimator: &'a str,
            z: f64,
            true_source: [f64; 3],
            maximizer: Option<[f64; 3]>,
            maximizer_value: Option<f64>,
            skipped_points: usize,
            grid_points: usize,
        }
        let maximizer = self.map.max_index.map(|i| {
            let p = self.map.grid.point(i);
            [p.x, p.y, p.z]
        });
        let maximizer_value = self.map.max_index.map(|i| self.map.values[i]);
        let skipped = self.map.values.iter().filter(|v| v.is_nan()).count();
        write_json(
            path,
            &Meta {
                estimator: &self.estimator,
                z: self.z,
                true_source: self.true_source,
                maximizer,
                maximizer_value,
                skipped_points: skipped,
                grid_points: self.map.grid.num_points(),
            },
        )
    }
}

/// Run manifest: what ran, with which seed, against which config.
#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub master_seed: u64,
    pub trials: usize,
    pub config: &'a C,
}

pub fn write_manifest<C: Serialize>(path: &Path, manifest: &Manifest<'_, C>) -> std::io::Result<()> {
    write_json(path, manifest)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    let text = serde_json::to_string_pretty(value).expect("serializable");
    file.write_all(text.as_bytes())?;
    file.write_all(b"\n")
}

/// Shortest round-trip decimal form; stable across runs.
fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Recompute an RMS from a trial dump (used to cross-check aggregation).
pub fn rms_from_trials(trials: &[TrialOutcome]) -> Option<f64> {
    let misses: Vec<f64> = trials.iter().filter_map(|t| t.miss).collect();
    if misses.is_empty() {
        return None;
    }
    Some((misses.iter().map(|m| m * m).sum::<f64>() / misses.len() as f64).sqrt())
}

