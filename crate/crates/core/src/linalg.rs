//! Dense complex linear-algebra kernels shared by every module.
//!
//! Everything that decides a rank goes through [`rank_cut`], so the whole
//! crate agrees on one tolerance policy: a singular value counts as nonzero
//! when it exceeds `max(rel_tol * s_max, ABS_FLOOR)`.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Default relative rank tolerance.
pub const RANK_TOL: f64 = 1e-9;
/// Absolute floor under which a matrix is treated as zero.
pub const ABS_FLOOR: f64 = 1e-12;
/// Relative singular values below this are unambiguous zeros.
pub const ZERO_BAND: f64 = 1e-10;
/// Margins below this mark a rank decision as unreliable.
pub const MARGIN_OK: f64 = 1e-6;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

/// Builds a complex matrix from real rows.
pub fn from_real_rows(rows: &[&[f64]]) -> CMatrix {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    CMatrix::from_fn(nrows, ncols, |i, j| c64(rows[i][j], 0.0))
}

/// Real diagonal matrix embedded in the complex field.
pub fn real_diag(d: &[f64]) -> CMatrix {
    let n = d.len();
    CMatrix::from_fn(n, n, |i, j| if i == j { c64(d[i], 0.0) } else { C64::new(0.0, 0.0) })
}

pub fn real_vector(v: &[f64]) -> CVector {
    CVector::from_iterator(v.len(), v.iter().map(|&x| c64(x, 0.0)))
}

/// Standard basis vector `e_i` of length `n`.
pub fn unit(n: usize, i: usize) -> CVector {
    let mut v = CVector::zeros(n);
    v[i] = c64(1.0, 0.0);
    v
}

/// Matrix with i.i.d. standard complex Gaussian entries.
pub fn complex_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c64(re * s, im * s)
    })
}

pub fn complex_gaussian_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVector {
    let m = complex_gaussian(n, 1, rng);
    m.column(0).into_owned()
}

/// Singular values in descending order; empty for degenerate shapes.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    svd(m).0
}

pub fn spectral_norm(m: &CMatrix) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Outcome of a rank decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankCut {
    pub rank: usize,
    /// Smallest relative singular value lying outside the numerical-zero band.
    pub margin: f64,
}

/// Rank decision on a descending list of singular values.
pub fn rank_cut(sv: &[f64], rel_tol: f64) -> RankCut {
    let s_max = sv.first().copied().unwrap_or(0.0);
    if s_max <= ABS_FLOOR {
        return RankCut { rank: 0, margin: 1.0 };
    }
    let cut = (rel_tol * s_max).max(ABS_FLOOR);
    let mut rank = 0;
    let mut margin: f64 = 1.0;
    for &s in sv {
        let rel = s / s_max;
        if s > cut {
            rank += 1;
            margin = margin.min(rel);
        } else if rel > ZERO_BAND {
            margin = margin.min(rel);
        }
    }
    RankCut { rank, margin }
}

/// Thin SVD with sorted singular values; `(s, U, V)` with `V` holding right
/// singular vectors as columns.
///
/// One-sided Jacobi. nalgebra's bidiagonal complex SVD occasionally returns a
/// factorization that is off by percents on small well-conditioned inputs
/// (see `svd_regression_rank_one_block` below).
pub fn svd(m: &CMatrix) -> (Vec<f64>, CMatrix, CMatrix) {
    let (r, c) = m.shape();
    if r.min(c) == 0 {
        return (Vec::new(), CMatrix::zeros(r, 0), CMatrix::zeros(c, 0));
    }
    if r < c {
        let (s, u, v) = jacobi_svd(m.adjoint());
        return (s, v, u);
    }
    jacobi_svd(m.clone())
}

const JACOBI_SWEEPS: usize = 80;

/// Tall-or-square input only.
fn jacobi_svd(mut a: CMatrix) -> (Vec<f64>, CMatrix, CMatrix) {
    let (r, n) = a.shape();
    let mut v = CMatrix::identity(n, n);
    // Columns below this are left alone: their squared norms sit near the
    // subnormal range, where the rotation phase loses unit modulus.
    let floor = (1e-20 * a.norm()).powi(2);
    for _ in 0..JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dotc(&a.column(q));
                let g = gamma.norm();
                if alpha <= floor || beta <= floor || g <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                // Rotate (a_p, a_q·ḡ/|g|), whose inner product is real.
                let phase = gamma.conj() / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for mat in [&mut a, &mut v] {
                    for i in 0..mat.nrows() {
                        let x = mat[(i, p)];
                        let y = mat[(i, q)] * phase;
                        mat[(i, p)] = x * cs - y * sn;
                        mat[(i, q)] = x * sn + y * cs;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let s_max = s[0];
    // Columns this far below the top are rounding noise; their directions
    // get replaced by an orthonormal completion.
    let mut u = CMatrix::zeros(r, n);
    let mut vs = CMatrix::zeros(n, n);
    let mut filled = 0;
    for (k, &j) in order.iter().enumerate() {
        vs.set_column(k, &v.column(j));
        if s[k] > s_max * 1e-15 {
            u.set_column(k, &(a.column(j) / C64::new(s[k], 0.0)));
            filled += 1;
        }
    }
    complete_orthonormal(&mut u, filled);
    (s, u, vs)
}

/// Fills columns `from..` with an orthonormal completion of the first `from`.
fn complete_orthonormal(u: &mut CMatrix, from: usize) {
    let (r, n) = u.shape();
    let mut k = from;
    let mut e = 0;
    while k < n && e < r {
        let mut w = unit(r, e);
        for _ in 0..2 {
            for j in 0..k {
                let proj = u.column(j).dotc(&w);
                w -= u.column(j) * proj;
            }
        }
        let nw = w.norm();
        if nw > 0.5 {
            u.set_column(k, &(w / C64::new(nw, 0.0)));
            k += 1;
        }
        e += 1;
    }
}

/// Moore–Penrose inverse with singular values at or below `abs_tol` dropped.
pub fn pseudo_inverse(m: &CMatrix, abs_tol: f64) -> CMatrix {
    let (s, u, v) = svd(m);
    let mut out = CMatrix::zeros(m.ncols(), m.nrows());
    for (k, &sk) in s.iter().enumerate() {
        if sk > abs_tol {
            out += v.column(k) * u.column(k).adjoint() / C64::new(sk, 0.0);
        }
    }
    out
}

/// Orthonormal basis of the column space of `m`.
pub fn column_space(m: &CMatrix, rel_tol: f64) -> (CMatrix, RankCut) {
    if m.nrows() == 0 || m.ncols() == 0 {
        return (CMatrix::zeros(m.nrows(), 0), RankCut { rank: 0, margin: 1.0 });
    }
    let (s, u, _) = svd(m);
    let cut = rank_cut(&s, rel_tol);
    (u.columns(0, cut.rank).into_owned(), cut)
}

/// Orthonormal basis of the null space of `m`.
pub fn null_space(m: &CMatrix, rel_tol: f64) -> (CMatrix, RankCut) {
    let (r, n) = m.shape();
    if n == 0 {
        return (CMatrix::zeros(0, 0), RankCut { rank: 0, margin: 1.0 });
    }
    if r == 0 {
        return (CMatrix::identity(n, n), RankCut { rank: 0, margin: 1.0 });
    }
    // Thin SVD only yields the full right factor for tall-or-square input.
    let work = if r < n {
        let mut p = CMatrix::zeros(n, n);
        p.rows_mut(0, r).copy_from(m);
        p
    } else {
        m.clone()
    };
    let (s, _, v) = svd(&work);
    let cut = rank_cut(&s, rel_tol);
    (v.columns(cut.rank, n - cut.rank).into_owned(), cut)
}

/// Euclidean norm of a complex vector.
pub fn norm(v: &CVector) -> f64 {
    v.norm()
}

/// Entrywise complex conjugate.
pub fn conj(m: &CMatrix) -> CMatrix {
    m.map(|z| z.conj())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn check_svd(m: &CMatrix) {
        let (s, u, v) = svd(m);
        let k = s.len();
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
        let sd = CMatrix::from_diagonal(&CVector::from_iterator(k, s.iter().map(|&x| c64(x, 0.0))));
        let scale = s.first().copied().unwrap_or(0.0).max(1.0);
        assert!((&u * sd * v.adjoint() - m).norm() < 1e-12 * scale);
        assert!((u.adjoint() * &u - CMatrix::identity(k, k)).norm() < 1e-12);
        assert!((v.adjoint() * &v - CMatrix::identity(v.ncols(), v.ncols())).norm() < 1e-12);
    }

    #[test]
    fn svd_regression_rank_one_block() {
        let rows: [[(f64, f64); 3]; 6] = [
            [(-1.5364614626584444e-1, -2.740629953704479e-2), (1.7867683589663985e-1, 8.364401712985921e-2), (3.5604546278960214e-1, 4.6744260837804014e-1)],
            [(-5.914745422342719e-3, 9.184002611989489e-2), (3.7215209122672184e-2, -1.1022003342401326e-1), (2.503955006304095e-1, -2.394907751457251e-1)],
            [(4.121546851287727e-2, 7.061333903466225e-3), (-4.802476495740746e-2, -2.2082838666828294e-2), (-9.624882113067407e-2, -1.2458625515825728e-1)],
            [(1.1050664486779715e-1, -5.6366749125644086e-2), (-1.5335437928735451e-1, 3.274464647246308e-2), (-4.499189772986405e-1, -1.253254653661065e-1)],
            [(-7.614802956794958e-2, -1.562168515858454e-3), (9.247897927272253e-2, 2.677544416370253e-2), (2.0708590820216694e-1, 1.9834912158131898e-1)],
            [(-5.479270745929392e-2, -2.9198293244359106e-2), (5.737548201961643e-2, 5.3549609706794316e-2), (7.74788367761523e-2, 2.2053893664618046e-1)],
        ];
        let m = CMatrix::from_fn(6, 3, |i, j| c64(rows[i][j].0, rows[i][j].1));
        let s = singular_values(&m);
        assert!((s[0] - 1.0).abs() < 1e-12 && s[1] < 1e-12, "{s:?}");
        check_svd(&m);
    }

    #[test]
    fn svd_factors_random_shapes() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for (r, c) in [(1, 1), (3, 5), (5, 3), (8, 8), (10, 4), (2, 9)] {
            check_svd(&complex_gaussian(r, c, &mut rng));
            // Rank-deficient input.
            let low = complex_gaussian(r, 1, &mut rng) * complex_gaussian(1, c, &mut rng);
            check_svd(&low);
        }
        check_svd(&CMatrix::zeros(3, 2));
    }

    #[test]
    fn pseudo_inverse_inverts_on_range() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let m = complex_gaussian(5, 3, &mut rng);
        let p = pseudo_inverse(&m, 1e-12);
        assert!((&p * &m - CMatrix::identity(3, 3)).norm() < 1e-10);
    }

    #[test]
    fn rank_cut_uses_relative_threshold() {
        let c = rank_cut(&[1.0, 1e-8, 1e-15], RANK_TOL);
        assert_eq!(c.rank, 2);
        assert!((c.margin - 1e-8).abs() < 1e-20);
    }

    #[test]
    fn rank_cut_flags_ambiguous_dropped_value() {
        let c = rank_cut(&[1.0, 5e-10], RANK_TOL);
        assert_eq!(c.rank, 1);
        assert!(c.margin < MARGIN_OK);
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let c = rank_cut(&[1e-13, 0.0], RANK_TOL);
        assert_eq!(c.rank, 0);
    }

    #[test]
    fn null_space_of_wide_matrix() {
        let m = from_real_rows(&[&[1.0, 0.0, 0.0]]);
        let (n, cut) = null_space(&m, RANK_TOL);
        assert_eq!(cut.rank, 1);
        assert_eq!(n.ncols(), 2);
        assert!((&m * &n).norm() < 1e-14);
        let gram = n.adjoint() * &n;
        assert!((gram - CMatrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn empty_shapes() {
        let m = CMatrix::zeros(3, 0);
        assert_eq!(column_space(&m, RANK_TOL).0.ncols(), 0);
        assert!(singular_values(&m).is_empty());
        let z = CMatrix::zeros(0, 2);
        assert_eq!(null_space(&z, RANK_TOL).0.ncols(), 2);
    }
}
