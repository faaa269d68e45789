//! Three-ray path geometry, propagation delays, and steering matrices.
//!
//! Coordinates: `z` is depth, positive downward, with the surface at `z = 0`
//! and the flat bottom at `z = h`. For a source at `p` and receiver at `p_l`,
//! the three modeled rays travel
//!
//! - LOS:      `R_1 = |p_l - p|`
//! - surface:  `R_2 = sqrt(rho^2 + (z_p + z_l)^2)`   (image source at `-z_p`)
//! - bottom:   `R_3 = sqrt(rho^2 + (2h - z_p - z_l)^2)` (image at `2h - z_p`)
//!
//! with `rho` the horizontal source-receiver distance, and delays `tau = R/c`.
//!
//! The steering matrix of receiver `l` is `N x 3` with entries
//! `D_l[k, r] = exp(-j w_k tau_rl)`, `w_k = 2 pi k / (N T_s)` for DFT bin
//! `k in 0..N`. This storage convention is the one that makes the noiseless
//! synthesis identity `x_l = Diag(s) D_l b_l` hold verbatim; the baseband
//! model multiplies bin `k` of a signal delayed by `tau` with
//! `exp(-j w_k tau)`.

use thiserror::Error;

use crate::C64;

/// Ray indices into the rows of [`RayGeometry`] and steering-matrix columns.
pub const RAY_LOS: usize = 0;
/// Surface-reflected ray.
pub const RAY_SURFACE: usize = 1;
/// Bottom-reflected ray.
pub const RAY_BOTTOM: usize = 2;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("source coincides with receiver {receiver}")]
    CoincidentSourceReceiver { receiver: usize },
    #[error("non-finite coordinate in position ({x}, {y}, {z})")]
    NonFinitePosition { x: f64, y: f64, z: f64 },
}

/// A point in the water column; `z` is depth in meters, positive downward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Euclidean distance.
    pub fn distance_to(&self, other: &Position) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    /// Horizontal (x, y) distance.
    pub fn horizontal_distance_to(&self, other: &Position) -> f64 {
        let (dx, dy) = (self.x - other.x, self.y - other.y);
        (dx * dx + dy * dy).sqrt()
    }
}

/// Immutable description of the environment and the receiver array.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// Receiver positions, all with depth in `[0, bottom_depth]`.
    pub receivers: Vec<Position>,
    /// Bottom depth `h` in meters.
    pub bottom_depth: f64,
    /// Sound speed `c` in meters/second (isovelocity).
    pub sound_speed: f64,
    /// Sampling period `T_s` in seconds.
    pub sample_period: f64,
    /// Number of DFT bins `N`.
    pub sample_count: usize,
    /// Bottom reflection coefficient `kappa_b` in `[0, 1]`.
    pub bottom_reflection: f64,
}

impl Scenario {
    pub fn new(
        receivers: Vec<Position>,
        bottom_depth: f64,
        sound_speed: f64,
        sample_period: f64,
        sample_count: usize,
        bottom_reflection: f64,
    ) -> Result<Self, GeometryError> {
        let s = Self {
            receivers,
            bottom_depth,
            sound_speed,
            sample_period,
            sample_count,
            bottom_reflection,
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), GeometryError> {
        let err = |m: String| Err(GeometryError::InvalidScenario(m));
        if self.receivers.is_empty() {
            return err("at least one receiver is required".into());
        }
        if !(self.bottom_depth.is_finite() && self.bottom_depth > 0.0) {
            return err(format!("bottom depth must be positive, got {}", self.bottom_depth));
        }
        if !(self.sound_speed.is_finite() && self.sound_speed > 0.0) {
            return err(format!("sound speed must be positive, got {}", self.sound_speed));
        }
        if !(self.sample_period.is_finite() && self.sample_period > 0.0) {
            return err(format!("sample period must be positive, got {}", self.sample_period));
        }
        if self.sample_count < 2 {
            return err(format!("sample count must be at least 2, got {}", self.sample_count));
        }
        if !(0.0..=1.0).contains(&self.bottom_reflection) {
            return err(format!(
                "bottom reflection coefficient must lie in [0, 1], got {}",
                self.bottom_reflection
            ));
        }
        for (l, r) in self.receivers.iter().enumerate() {
            if !r.is_finite() {
                return err(format!("receiver {l} has a non-finite coordinate"));
            }
            if r.z < 0.0 || r.z > self.bottom_depth {
                return err(format!(
                    "receiver {l} depth {} outside water column [0, {}]",
                    r.z, self.bottom_depth
                ));
            }
        }
        for a in 0..self.receivers.len() {
            for b in a + 1..self.receivers.len() {
                if self.receivers[a] == self.receivers[b] {
                    return err(format!("receivers {a} and {b} coincide"));
                }
            }
        }
        Ok(())
    }

    pub fn num_receivers(&self) -> usize {
        self.receivers.len()
    }

    /// Angular frequency of DFT bin `k` (0-based): `2 pi k / (N T_s)`.
    pub fn angular_frequency(&self, k: usize) -> f64 {
        2.0 * std::f64::consts::PI * k as f64 / (self.sample_count as f64 * self.sample_period)
    }
}

/// Per-receiver path lengths and delays for the three rays.
///
/// `distances[l][r]` and `delays[l][r]` index receiver `l`, ray `r`
/// (see [`RAY_LOS`], [`RAY_SURFACE`], [`RAY_BOTTOM`]).
#[derive(Debug, Clone)]
pub struct RayGeometry {
    pub distances: Vec<[f64; 3]>,
    pub delays: Vec<[f64; 3]>,
}

/// Compute the three-ray distances and delays from `source` to every receiver.
pub fn ray_geometry(scenario: &Scenario, source: &Position) -> Result<RayGeometry, GeometryError> {
    if !source.is_finite() {
        return Err(GeometryError::NonFinitePosition {
            x: source.x,
            y: source.y,
            z: source.z,
        });
    }
    let h = scenario.bottom_depth;
    let c = scenario.sound_speed;
    let mut distances = Vec::with_capacity(scenario.num_receivers());
    let mut delays = Vec::with_capacity(scenario.num_receivers());
    for (l, rx) in scenario.receivers.iter().enumerate() {
        let rho2 = {
            let (dx, dy) = (source.x - rx.x, source.y - rx.y);
            dx * dx + dy * dy
        };
        let r1 = (rho2 + (source.z - rx.z).powi(2)).sqrt();
        if r1 == 0.0 {
            return Err(GeometryError::CoincidentSourceReceiver { receiver: l });
        }
        let r2 = (rho2 + (source.z + rx.z).powi(2)).sqrt();
        let r3 = (rho2 + (2.0 * h - source.z - rx.z).powi(2)).sqrt();
        distances.push([r1, r2, r3]);
        delays.push([r1 / c, r2 / c, r3 / c]);
    }
    Ok(RayGeometry { distances, delays })
}

/// The `N x 3` matrix of unit-modulus phase factors for one receiver:
/// `entry(k, r) = exp(-j w_k tau_r)`.
#[derive(Debug, Clone)]
pub struct SteeringMatrix {
    n: usize,
    /// Row-major, `data[k * 3 + r]`.
    data: Vec<C64>,
}

impl SteeringMatrix {
    fn build(delays: &[f64; 3], n: usize, sample_period: f64) -> Self {
        let mut data = Vec::with_capacity(n * 3);
        let w1 = 2.0 * std::f64::consts::PI / (n as f64 * sample_period);
        for k in 0..n {
            let wk = w1 * k as f64;
            for tau in delays {
                let phase = -wk * tau;
                data.push(C64::new(phase.cos(), phase.sin()));
            }
        }
        Self { n, data }
    }

    pub fn num_bins(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn entry(&self, k: usize, r: usize) -> C64 {
        self.data[k * 3 + r]
    }

    #[inline]
    pub fn row(&self, k: usize) -> &[C64] {
        &self.data[k * 3..k * 3 + 3]
    }

    /// `(D b)[k] = sum_r D[k, r] b_r`, the per-bin channel response for
    /// coefficients `b`.
    #[inline]
    pub fn response(&self, k: usize, b: &[C64; 3]) -> C64 {
        let row = self.row(k);
        row[0] * b[0] + row[1] * b[1] + row[2] * b[2]
    }

    /// The 3x3 Hermitian Gram matrix `A = D^T D^*` with `A[r, c] =
    /// sum_k D[k, r] conj(D[k, c])`. Its diagonal is exactly `N`.
    pub fn gram(&self) -> [[C64; 3]; 3] {
        let mut a = [[C64::new(0.0, 0.0); 3]; 3];
        for k in 0..self.n {
            let row = self.row(k);
            for r in 0..3 {
                for c in 0..3 {
                    a[r][c] += row[r] * row[c].conj();
                }
            }
        }
        // the diagonal is a sum of exact ones
        for (r, ar) in a.iter_mut().enumerate() {
            ar[r] = C64::new(self.n as f64, 0.0);
        }
        a
    }
}

/// Build the steering matrices for every receiver at a hypothesized source.
pub fn steering_matrices(
    scenario: &Scenario,
    source: &Position,
) -> Result<Vec<SteeringMatrix>, GeometryError> {
    let rays = ray_geometry(scenario, source)?;
    Ok(rays
        .delays
        .iter()
        .map(|d| SteeringMatrix::build(d, scenario.sample_count, scenario.sample_period))
        .collect())
}
