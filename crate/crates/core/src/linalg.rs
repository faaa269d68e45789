//! Small dense helpers shared by the estimators.

use nalgebra::DMatrix;

use crate::C64;

/// Upper-triangular Cholesky factor of a 3x3 Hermitian positive definite
/// matrix: `A = G^H G`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct UpperTri3 {
    /// `[g00, g01, g02, g11, g12, g22]`; diagonal entries are real positive.
    pub e: [C64; 6],
}

/// Cholesky-factor a 3x3 Hermitian matrix given as `a[r][c]`.
///
/// Returns `None` when a pivot drops below `tol` times the diagonal scale,
/// i.e. the matrix is numerically not positive definite.
pub(crate) fn cholesky3(a: &[[C64; 3]; 3], tol: f64) -> Option<UpperTri3> {
    let scale = a[0][0].re.max(a[1][1].re).max(a[2][2].re).max(f64::MIN_POSITIVE);
    let floor = tol * scale;

    // lower factor L with A = L L^H
    let d0 = a[0][0].re;
    if d0 <= floor {
        return None;
    }
    let l00 = d0.sqrt();
    let l10 = a[1][0] / l00;
    let l20 = a[2][0] / l00;
    let d1 = a[1][1].re - l10.norm_sqr();
    if d1 <= floor {
        return None;
    }
    let l11 = d1.sqrt();
    let l21 = (a[2][1] - l20 * l10.conj()) / l11;
    let d2 = a[2][2].re - l20.norm_sqr() - l21.norm_sqr();
    if d2 <= floor {
        return None;
    }
    let l22 = d2.sqrt();

    // G = L^H (upper triangular)
    Some(UpperTri3 {
        e: [
            C64::new(l00, 0.0),
            l10.conj(),
            l20.conj(),
            C64::new(l11, 0.0),
            l21.conj(),
            C64::new(l22, 0.0),
        ],
    })
}

impl UpperTri3 {
    /// Proxy for the condition number of `A = G^H G` from the pivots; lies
    /// within a factor 3 of the true spectral condition number because the
    /// trace bounds the largest eigenvalue and the smallest pivot bounds the
    /// smallest one.
    pub fn condition_proxy(&self) -> f64 {
        let p = [self.e[0].re, self.e[3].re, self.e[5].re];
        let pmin = p[0].min(p[1]).min(p[2]).powi(2);
        let trace = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
        // trace(A) >= sum of squared pivots
        3.0 * trace / pmin
    }

    /// Solve `u G = m` for the row 3-vector `u` (right division by the upper
    /// factor).
    #[inline]
    pub fn solve_row(&self, m: &[C64; 3]) -> [C64; 3] {
        let [g00, g01, g02, g11, g12, g22] = self.e;
        let u0 = m[0] / g00;
        let u1 = (m[1] - u0 * g01) / g11;
        let u2 = (m[2] - u0 * g02 - u1 * g12) / g22;
        [u0, u1, u2]
    }

    /// Solve `A b = r` with `A = G^H G`: forward then back substitution.
    pub fn solve_spd(&self, r: &[C64; 3]) -> [C64; 3] {
        let [g00, g01, g02, g11, g12, g22] = self.e;
        // G^H y = r (lower triangular with conjugated entries)
        let y0 = r[0] / g00.conj();
        let y1 = (r[1] - g01.conj() * y0) / g11.conj();
        let y2 = (r[2] - g02.conj() * y0 - g12.conj() * y1) / g22.conj();
        // G b = y
        let b2 = y2 / g22;
        let b1 = (y1 - g12 * b2) / g11;
        let b0 = (y0 - g01 * b1 - g02 * b2) / g00;
        [b0, b1, b2]
    }
}

/// Largest eigenvalue of a complex Hermitian matrix.
pub(crate) fn hermitian_eig_max(m: DMatrix<C64>) -> f64 {
    let se = nalgebra::SymmetricEigen::new(m);
    se.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Largest eigenvalue by power iteration on a Hermitian PSD matrix, with a
/// fixed deterministic start vector.
pub(crate) fn hermitian_eig_max_power(m: &DMatrix<C64>, tol: f64, max_iters: usize) -> f64 {
    let n = m.nrows();
    let mut v = nalgebra::DVector::<C64>::from_fn(n, |i, _| {
        C64::new(1.0 + i as f64 / (n as f64 + 1.0), 0.0)
    });
    v /= C64::new(v.norm(), 0.0);
    let mut lambda = 0.0f64;
    for _ in 0..max_iters {
        let w = m * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = w.dotc(&v).re;
        v = w / C64::new(norm, 0.0);
        if (next - lambda).abs() <= tol * next.abs().max(1.0) {
            return next;
        }
        lambda = next;
    }
    lambda
}
