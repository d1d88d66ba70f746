//! Subspaces of a complex coordinate space, stored by an orthonormal basis.
//!
//! Every derived subspace carries a `margin`: the smallest relative singular
//! value that any rank decision along its construction had to classify. A
//! margin under [`MARGIN_OK`](crate::linalg::MARGIN_OK) means some rank cut
//! was close enough to the tolerance that the dimension cannot be trusted.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, RankCut, RANK_TOL};

/// Default tolerance for containment and equality tests.
pub const CONTAIN_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Subspace {
    ambient: usize,
    basis: CMatrix,
    tol: f64,
    margin: f64,
}

impl Subspace {
    /// Orthonormal basis of the column span of `vectors`.
    pub fn span(vectors: &CMatrix, tol: f64) -> Result<Self> {
        let ambient = vectors.nrows();
        if ambient == 0 {
            return Err(Error::EmptyAmbient);
        }
        if tol.is_nan() || tol < 0.0 {
            return Err(Error::InvalidArgument(format!("rank tolerance {tol} must be non-negative")));
        }
        for j in 0..vectors.ncols() {
            for i in 0..ambient {
                let z = vectors[(i, j)];
                if !z.re.is_finite() || !z.im.is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
            }
        }
        let (basis, cut) = linalg::column_space(vectors, tol);
        Ok(Self { ambient, basis, tol, margin: cut.margin })
    }

    /// [`span`](Self::span) with the default relative tolerance.
    pub fn span_default(vectors: &CMatrix) -> Result<Self> {
        Self::span(vectors, RANK_TOL)
    }

    pub fn zero(ambient: usize) -> Self {
        Self { ambient, basis: CMatrix::zeros(ambient, 0), tol: RANK_TOL, margin: 1.0 }
    }

    pub fn full(ambient: usize) -> Self {
        Self { ambient, basis: CMatrix::identity(ambient, ambient), tol: RANK_TOL, margin: 1.0 }
    }

    /// Wraps columns that are already orthonormal.
    pub(crate) fn from_orthonormal(basis: CMatrix, tol: f64, margin: f64) -> Self {
        Self { ambient: basis.nrows(), basis, tol, margin }
    }

    fn derived(&self, basis: CMatrix, cut: RankCut, others: &[&Subspace]) -> Self {
        let margin = others.iter().fold(self.margin.min(cut.margin), |m, s| m.min(s.margin));
        Self { ambient: basis.nrows(), basis, tol: self.tol, margin }
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_zero(&self) -> bool {
        self.dim() == 0
    }

    pub fn basis(&self) -> &CMatrix {
        &self.basis
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    /// Orthogonal projector `U Uᴴ`.
    pub fn projector(&self) -> CMatrix {
        &self.basis * self.basis.adjoint()
    }

    pub fn project(&self, v: &CVector) -> CVector {
        &self.basis * (self.basis.adjoint() * v)
    }

    fn check_ambient(&self, other: &Subspace) -> Result<()> {
        if self.ambient != other.ambient {
            return Err(Error::AmbientMismatch { left: self.ambient, right: other.ambient });
        }
        Ok(())
    }

    fn check_vector(&self, v: &CVector) -> Result<()> {
        if v.len() != self.ambient {
            return Err(Error::AmbientMismatch { left: self.ambient, right: v.len() });
        }
        Ok(())
    }

    pub fn sum(&self, other: &Subspace) -> Result<Self> {
        self.check_ambient(other)?;
        let mut stacked = CMatrix::zeros(self.ambient, self.dim() + other.dim());
        stacked.columns_mut(0, self.dim()).copy_from(&self.basis);
        stacked.columns_mut(self.dim(), other.dim()).copy_from(&other.basis);
        let (basis, cut) = linalg::column_space(&stacked, self.tol);
        Ok(self.derived(basis, cut, &[other]))
    }

    /// Intersection as the common null space of both complementary projectors.
    pub fn intersect(&self, other: &Subspace) -> Result<Self> {
        self.check_ambient(other)?;
        let n = self.ambient;
        let eye = CMatrix::identity(n, n);
        let mut stacked = CMatrix::zeros(2 * n, n);
        stacked.rows_mut(0, n).copy_from(&(&eye - self.projector()));
        stacked.rows_mut(n, n).copy_from(&(&eye - other.projector()));
        let (basis, cut) = linalg::null_space(&stacked, self.tol);
        Ok(self.derived(basis, cut, &[other]))
    }

    pub fn orth_complement(&self) -> Self {
        let (basis, cut) = linalg::null_space(&self.basis.adjoint(), self.tol);
        self.derived(basis, cut, &[])
    }

    /// `{f : Σ fᵢ sᵢ = 0 for all s}` under the bilinear pairing; the entrywise
    /// conjugate of the orthogonal complement.
    pub fn annihilator(&self) -> Self {
        let comp = self.orth_complement();
        Self { basis: linalg::conj(&comp.basis), ..comp }
    }

    /// Pre-annihilator of a subspace of the dual; with the dual identified
    /// coordinate-wise this is the same computation as [`annihilator`](Self::annihilator).
    pub fn pre_annihilator(&self) -> Self {
        self.annihilator()
    }

    pub fn conjugate(&self) -> Self {
        Self { basis: linalg::conj(&self.basis), ..self.clone() }
    }

    /// `‖v − P v‖`.
    pub fn distance(&self, v: &CVector) -> Result<f64> {
        self.check_vector(v)?;
        Ok((v - self.project(v)).norm())
    }

    /// One-sided gap `sup_{u ∈ self, ‖u‖=1} dist(u, other)`; zero when `self = {0}`.
    pub fn gap(&self, other: &Subspace) -> Result<f64> {
        self.check_ambient(other)?;
        if self.is_zero() {
            return Ok(0.0);
        }
        let residual = &self.basis - other.project_matrix(&self.basis);
        Ok(linalg::spectral_norm(&residual).clamp(0.0, 1.0))
    }

    fn project_matrix(&self, m: &CMatrix) -> CMatrix {
        &self.basis * (self.basis.adjoint() * m)
    }

    /// `inner ⊆ self` up to `tol` in the gap metric.
    pub fn contains(&self, inner: &Subspace, tol: f64) -> Result<bool> {
        Ok(inner.gap(self)? <= tol)
    }

    pub fn contains_default(&self, inner: &Subspace) -> Result<bool> {
        self.contains(inner, CONTAIN_TOL)
    }

    pub fn contains_vector(&self, v: &CVector, tol: f64) -> Result<bool> {
        Ok(self.distance(v)? <= tol * v.norm())
    }

    /// Mutual containment.
    pub fn same_as(&self, other: &Subspace, tol: f64) -> Result<bool> {
        Ok(self.dim() == other.dim() && self.contains(other, tol)? && other.contains(self, tol)?)
    }

    /// Larger of the two one-sided gaps; zero exactly for equal subspaces.
    pub fn symmetric_gap(&self, other: &Subspace) -> Result<f64> {
        Ok(self.gap(other)?.max(other.gap(self)?))
    }

    /// Image `F(S)` of the subspace under a linear map.
    pub fn apply_map(&self, f: &CMatrix) -> Result<Self> {
        if f.ncols() != self.ambient {
            return Err(Error::ShapeMismatch {
                expected: format!("{} columns", self.ambient),
                got: format!("{}x{}", f.nrows(), f.ncols()),
            });
        }
        if f.nrows() == 0 {
            return Err(Error::EmptyAmbient);
        }
        let (basis, cut) = linalg::column_space(&(f * &self.basis), self.tol);
        Ok(self.derived(basis, cut, &[]))
    }

    /// Haar-distributed subspace from an orthonormalized Gaussian matrix.
    pub fn random(ambient: usize, dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random_with(ambient, dim, &mut rng)
    }

    pub fn random_with<R: rand::Rng + ?Sized>(ambient: usize, dim: usize, rng: &mut R) -> Result<Self> {
        if ambient == 0 {
            return Err(Error::EmptyAmbient);
        }
        if dim > ambient {
            return Err(Error::DimTooLarge { dim, ambient });
        }
        if dim == 0 {
            return Ok(Self::zero(ambient));
        }
        Self::span_default(&linalg::complex_gaussian(ambient, dim, rng))
    }

    /// Rows `offset..offset+len` of the basis, spanned again (coordinate projection).
    pub(crate) fn project_block(&self, offset: usize, len: usize) -> Self {
        let block = self.basis.rows(offset, len).into_owned();
        let (basis, cut) = linalg::column_space(&block, self.tol);
        self.derived(basis, cut, &[])
    }

    /// Embeds into a larger ambient space at the given coordinate offset.
    pub(crate) fn embed(&self, offset: usize, total: usize) -> Self {
        let mut basis = CMatrix::zeros(total, self.dim());
        basis.rows_mut(offset, self.ambient).copy_from(&self.basis);
        Self { ambient: total, basis, tol: self.tol, margin: self.margin }
    }

    /// `self ⊕ other` in the product space, coordinates stacked self-then-other.
    pub(crate) fn direct_sum(&self, other: &Subspace) -> Self {
        let total = self.ambient + other.ambient;
        let mut basis = CMatrix::zeros(total, self.dim() + other.dim());
        basis.view_mut((0, 0), (self.ambient, self.dim())).copy_from(&self.basis);
        basis.view_mut((self.ambient, self.dim()), (other.ambient, other.dim())).copy_from(&other.basis);
        Self { ambient: total, basis, tol: self.tol, margin: self.margin.min(other.margin) }
    }

    /// Copies the subspace with its rows permuted by `perm` (new row `i` is old row `perm[i]`).
    pub(crate) fn permute_rows(&self, perm: &[usize]) -> Self {
        let basis = CMatrix::from_fn(self.ambient, self.dim(), |i, j| self.basis[(perm[i], j)]);
        Self { basis, ..self.clone() }
    }

    pub(crate) fn with_margin_floor(mut self, margin: f64) -> Self {
        self.margin = self.margin.min(margin);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, from_real_rows, real_vector, unit};
    use proptest::prelude::*;

    fn e(n: usize, i: usize) -> Subspace {
        Subspace::span_default(&CMatrix::from_column_slice(n, 1, unit(n, i).as_slice())).unwrap()
    }

    fn line(v: &[f64]) -> Subspace {
        let v = real_vector(v);
        Subspace::span_default(&CMatrix::from_column_slice(v.len(), 1, v.as_slice())).unwrap()
    }

    fn proj_eq(a: &Subspace, b: &Subspace) -> bool {
        (a.projector() - b.projector()).norm() < 1e-10
    }

    #[test]
    fn span_of_unit_vector() {
        let s = Subspace::span_default(&from_real_rows(&[&[1.0], &[0.0]])).unwrap();
        assert_eq!(s.dim(), 1);
        assert!(proj_eq(&s, &e(2, 0)));
    }

    #[test]
    fn span_drops_dependent_column() {
        let s = Subspace::span_default(&from_real_rows(&[&[1.0, 2.0], &[0.0, 0.0]])).unwrap();
        assert_eq!(s.dim(), 1);
    }

    #[test]
    fn span_drops_nearly_dependent_column() {
        // σ₂/σ₁ ≈ 5e-16 for [[1,1],[0,1e-15]].
        let m = from_real_rows(&[&[1.0, 1.0], &[0.0, 1e-15]]);
        let sv = linalg::singular_values(&m);
        assert!(sv[1] / sv[0] < 1e-9);
        assert_eq!(Subspace::span(&m, 1e-9).unwrap().dim(), 1);
    }

    #[test]
    fn span_rejects_empty_ambient_and_nan() {
        assert_eq!(Subspace::span_default(&CMatrix::zeros(0, 1)).unwrap_err(), Error::EmptyAmbient);
        let mut m = CMatrix::zeros(2, 1);
        m[(1, 0)] = c64(f64::NAN, 0.0);
        assert!(matches!(Subspace::span_default(&m), Err(Error::NonFinite { row: 1, col: 0 })));
    }

    #[test]
    fn sum_examples() {
        let plane = e(3, 0).sum(&e(3, 1)).unwrap();
        assert_eq!(plane.dim(), 2);
        assert!(plane.contains_default(&e(3, 0)).unwrap());
        assert!(plane.contains_default(&e(3, 1)).unwrap());
        let s = Subspace::random(4, 2, 3).unwrap();
        assert!(proj_eq(&s.sum(&s).unwrap(), &s));
        let diag = line(&[1.0, 1.0]);
        assert_eq!(e(2, 0).sum(&diag).unwrap().dim(), 2);
        assert!(e(2, 0).sum(&Subspace::zero(3)).is_err());
    }

    #[test]
    fn intersect_examples() {
        let p12 = e(3, 0).sum(&e(3, 1)).unwrap();
        let p23 = e(3, 1).sum(&e(3, 2)).unwrap();
        assert!(proj_eq(&p12.intersect(&p23).unwrap(), &e(3, 1)));
        assert!(proj_eq(&p12.intersect(&Subspace::full(3)).unwrap(), &p12));
        assert!(e(3, 0).intersect(&e(3, 1)).unwrap().is_zero());
    }

    #[test]
    fn complement_examples() {
        assert!(proj_eq(&e(2, 0).orth_complement(), &e(2, 1)));
        assert_eq!(Subspace::zero(3).orth_complement().dim(), 3);
        let s = Subspace::random(5, 2, 11).unwrap();
        assert!(proj_eq(&s.orth_complement().orth_complement(), &s));
        let c = s.orth_complement();
        assert!((s.basis().adjoint() * c.basis()).norm() < 1e-10);
    }

    #[test]
    fn annihilator_uses_bilinear_pairing() {
        assert!(proj_eq(&e(2, 0).annihilator(), &e(2, 1)));
        // f = (i, 1)/√2 satisfies fᵀ(1, i) = i + i = 2i ≠ 0, while (1, i)/√2
        // itself satisfies fᵀs = 1 + i² = 0.
        let mut v = CMatrix::zeros(2, 1);
        v[(0, 0)] = c64(1.0, 0.0);
        v[(1, 0)] = c64(0.0, 1.0);
        let s = Subspace::span_default(&v).unwrap();
        let ann = s.annihilator();
        assert_eq!(ann.dim(), 1);
        let f = ann.basis().column(0);
        let pairing = f[0] * v[(0, 0)] + f[1] * v[(1, 0)];
        assert!(pairing.norm() < 1e-12);
        assert!(proj_eq(&ann, &s));
        let r = Subspace::random(4, 3, 5).unwrap();
        assert!(proj_eq(&r.annihilator().annihilator(), &r));
    }

    #[test]
    fn distance_examples() {
        assert!(e(2, 0).distance(&unit(2, 0)).unwrap() < 1e-15);
        assert!((e(2, 1).distance(&unit(2, 0)).unwrap() - 1.0).abs() < 1e-15);
        let d = line(&[1.0, 1.0]).distance(&unit(2, 0)).unwrap();
        // Oracle: minimize |(1,0) − t(1,1)/√2| over a dense grid of t.
        let oracle = (0..=200_000)
            .map(|k| {
                let t = -2.0 + 4.0 * k as f64 / 200_000.0;
                let s = t / 2f64.sqrt();
                ((1.0 - s).powi(2) + s * s).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        assert!((d - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((d - oracle).abs() < 1e-8);
    }

    #[test]
    fn gap_examples() {
        let m = Subspace::random(4, 2, 1).unwrap();
        assert!(m.gap(&m).unwrap() < 1e-12);
        assert!((e(2, 0).gap(&e(2, 1)).unwrap() - 1.0).abs() < 1e-15);
        let g = e(2, 0).gap(&line(&[1.0, 1.0])).unwrap();
        assert!((g - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(Subspace::zero(3).gap(&e(3, 0)).unwrap(), 0.0);
    }

    #[test]
    fn contains_examples() {
        let plane = e(3, 0).sum(&e(3, 1)).unwrap();
        assert!(plane.contains_default(&e(3, 0)).unwrap());
        assert!(!e(3, 0).contains_default(&plane).unwrap());
        assert!(e(3, 0).contains_default(&Subspace::zero(3)).unwrap());
    }

    #[test]
    fn apply_map_examples() {
        let s = Subspace::random(3, 2, 9).unwrap();
        assert!(proj_eq(&s.apply_map(&CMatrix::identity(3, 3)).unwrap(), &s));
        assert!(s.apply_map(&CMatrix::zeros(3, 3)).unwrap().is_zero());
        let plane = Subspace::full(2);
        let img = plane.apply_map(&linalg::real_diag(&[1.0, 0.0])).unwrap();
        assert!(proj_eq(&img, &e(2, 0)));
        assert!(s.apply_map(&CMatrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn random_examples() {
        assert!(Subspace::random(4, 0, 1).unwrap().is_zero());
        assert_eq!(Subspace::random(4, 4, 1).unwrap().dim(), 4);
        let a = Subspace::random(6, 3, 42).unwrap();
        let b = Subspace::random(6, 3, 42).unwrap();
        assert_eq!(a.projector(), b.projector());
        assert_eq!(Subspace::random(2, 3, 1).unwrap_err(), Error::DimTooLarge { dim: 3, ambient: 2 });
    }

    #[test]
    fn gap_asymmetry_witness() {
        // A line inside a plane: δ(line, plane) = 0 but δ(plane, line) = 1.
        let mut found = false;
        for seed in 0..50 {
            let m = Subspace::random(4, 1, seed).unwrap();
            let n = Subspace::random(4, 2, seed + 1000).unwrap();
            if m.gap(&n).unwrap() < 1.0 - 1e-6 && n.gap(&m).unwrap() > 1.0 - 1e-12 {
                found = true;
                break;
            }
        }
        assert!(found);
    }

    fn pair() -> impl Strategy<Value = (usize, usize, usize, u64)> {
        (1usize..=10).prop_flat_map(|n| (Just(n), 0..=n, 0..=n, any::<u64>()))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn projector_is_idempotent_and_hermitian((n, k, _, seed) in pair()) {
            let s = Subspace::random(n, k, seed).unwrap();
            let p = s.projector();
            prop_assert!((&p * &p - &p).norm() < 1e-10);
            prop_assert!((p.adjoint() - &p).norm() < 1e-10);
            let gram = s.basis().adjoint() * s.basis();
            prop_assert!((gram - CMatrix::identity(k, k)).norm() < 1e-12);
        }

        #[test]
        fn dimension_formula((n, k1, k2, seed) in pair()) {
            let a = Subspace::random(n, k1, seed).unwrap();
            // Share a random common part so intersections are nontrivial.
            let common = Subspace::random(n, k1.min(k2) / 2, seed ^ 0x55).unwrap();
            let b = Subspace::random(n, k2 - common.dim().min(k2), seed.wrapping_add(1)).unwrap().sum(&common).unwrap();
            let a = a.sum(&common).unwrap();
            let s = a.sum(&b).unwrap();
            let i = a.intersect(&b).unwrap();
            prop_assert_eq!(s.dim() + i.dim(), a.dim() + b.dim());
        }

        #[test]
        fn gap_bounds_and_dimension((n, k1, k2, seed) in pair()) {
            let m = Subspace::random(n, k1, seed).unwrap();
            let nn = Subspace::random(n, k2, seed.wrapping_add(7)).unwrap();
            let g = m.gap(&nn).unwrap();
            prop_assert!((0.0..=1.0).contains(&g));
            if g < 1.0 - 1e-6 {
                prop_assert!(m.dim() <= nn.dim());
            }
            prop_assert_eq!(m.annihilator().dim(), n - k1);
        }
    }
}
