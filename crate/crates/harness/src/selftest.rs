//! Built-in numerical self checks: the reduced/dense eigenvalue equality and
//! the analytic-derivative finite-difference oracle, on random instances.

use nalgebra::DMatrix;
use rand::Rng;

use sbl_core::channel::{random_channel, synthesize, MeasurementSet, RandomChannelMode};
use sbl_core::crlb::finite_difference_check;
use sbl_core::geometry::{steering_matrices, Position, Scenario};
use sbl_core::sbl::sbl_objective;
use sbl_core::waveform::{make_flat_waveform, NoiseModel};
use sbl_core::{seeds, C64};

pub struct SelftestOutcome {
    pub reduction_instances: usize,
    pub reduction_worst_rel_err: f64,
    pub derivative_instances: usize,
    pub derivative_worst_rel_err: f64,
}

impl SelftestOutcome {
    pub fn passed(&self) -> bool {
        self.reduction_worst_rel_err <= 1e-9 && self.derivative_worst_rel_err <= 1e-6
    }
}

fn random_scenario(rng: &mut impl Rng, n: usize, l: usize) -> (Scenario, Position) {
    let receivers = (0..l)
        .map(|_| {
            Position::new(
                rng.random_range(-300.0..300.0),
                rng.random_range(-300.0..300.0),
                rng.random_range(5.0..95.0),
            )
        })
        .collect();
    let sc = Scenario::new(receivers, 100.0, 1500.0, 1e-3, n, 0.85).unwrap();
    let src = Position::new(
        rng.random_range(-300.0..300.0),
        rng.random_range(-300.0..300.0),
        rng.random_range(5.0..95.0),
    );
    (sc, src)
}

fn dense_eig_max(ms: &MeasurementSet<'_>, p: &Position) -> f64 {
    let n = ms.num_bins();
    let steering = steering_matrices(ms.scenario, p).unwrap();
    let mut q = DMatrix::<C64>::zeros(n, n);
    for (li, d) in steering.iter().enumerate() {
        let dm = DMatrix::<C64>::from_fn(n, 3, |k, r| d.entry(k, r));
        let a = dm.transpose() * dm.conjugate();
        let ainv = a.try_inverse().expect("gram invertible");
        let m = DMatrix::<C64>::from_fn(n, 3, |k, r| ms.x[li][k] * d.entry(k, r).conj());
        q += &m * ainv * m.adjoint();
    }
    let se = nalgebra::SymmetricEigen::new(q);
    se.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Run both suites; prints one line per suite on `verbose`.
pub fn run(seed: u64, verbose: bool) -> SelftestOutcome {
    let mut rng = seeds::from_u64(seed);
    let reduction_instances = 20;
    let mut worst_red = 0.0f64;
    for _ in 0..reduction_instances {
        let n = rng.random_range(16..=48usize);
        let l = rng.random_range(2..=4usize);
        let (sc, src) = random_scenario(&mut rng, n, l);
        let w = make_flat_waveform(n, rng.random()).unwrap();
        let b = random_channel(l, RandomChannelMode::StandardCn, rng.random());
        let noise = NoiseModel::synthetic(vec![0.05; l]).unwrap();
        let rec = synthesize(&sc, &src, &b, &w, &noise, 0, rng.random()).unwrap();
        let ms = rec.measurements();
        let cand = Position::new(
            src.x + rng.random_range(-15.0..15.0),
            src.y + rng.random_range(-15.0..15.0),
            (src.z + rng.random_range(-8.0..8.0)).clamp(1.0, 99.0),
        );
        let reduced = sbl_objective(&ms, &cand).unwrap();
        let dense = dense_eig_max(&ms, &cand);
        worst_red = worst_red.max((reduced - dense).abs() / dense.abs().max(f64::MIN_POSITIVE));
    }
    if verbose {
        println!(
            "selftest reduction equality: {reduction_instances} instances, worst relative error {worst_red:.3e}"
        );
    }

    let derivative_instances = 10;
    let mut worst_fd = 0.0f64;
    for _ in 0..derivative_instances {
        let n = rng.random_range(8..=20usize);
        let l = rng.random_range(2..=4usize);
        let (sc, src) = random_scenario(&mut rng, n, l);
        let w = make_flat_waveform(n, rng.random()).unwrap();
        let b = random_channel(l, RandomChannelMode::StandardCn, rng.random());
        let rep = finite_difference_check(&sc, &src, &b, &w).unwrap();
        worst_fd = worst_fd.max(rep.max_rel_err());
    }
    if verbose {
        println!(
            "selftest derivative oracle: {derivative_instances} instances, worst relative error {worst_fd:.3e}"
        );
    }

    SelftestOutcome {
        reduction_instances,
        reduction_worst_rel_err: worst_red,
        derivative_instances,
        derivative_worst_rel_err: worst_fd,
    }
}
