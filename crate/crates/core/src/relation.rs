//! Linear relations `X → Y` represented by their graph in `X ⊕ Y`.
//!
//! Graph coordinates are stacked x-then-y. The structural pieces (domain,
//! kernel, range, multivalued part and a single-valued operator part) are
//! derived lazily once per relation and shared by clones.

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, C64};
use crate::metrics::OperatorPart;
use crate::subspace::{Subspace, CONTAIN_TOL};

#[derive(Debug, Clone)]
pub struct LinearRelation {
    x_dim: usize,
    y_dim: usize,
    graph: Subspace,
    structure: OnceLock<Arc<Structure>>,
    operator: OnceLock<Arc<OperatorPart>>,
}

#[derive(Debug)]
pub(crate) struct Structure {
    pub domain: Subspace,
    pub kernel: Subspace,
    pub range: Subspace,
    pub mv: Subspace,
    /// Column `i` is a value of the relation at domain basis vector `i`,
    /// projected onto the orthogonal complement of the multivalued part.
    pub op: CMatrix,
}

impl LinearRelation {
    /// Graph of an everywhere-defined single-valued map; `a` is `y_dim × x_dim`.
    pub fn from_matrix(a: &CMatrix) -> Self {
        let (y_dim, x_dim) = a.shape();
        assert!(x_dim > 0 && y_dim > 0, "relation spaces must be nonzero");
        let mut g = CMatrix::zeros(x_dim + y_dim, x_dim);
        g.rows_mut(0, x_dim).copy_from(&CMatrix::identity(x_dim, x_dim));
        g.rows_mut(x_dim, y_dim).copy_from(a);
        let graph = Subspace::span_default(&g).expect("graph columns are finite");
        Self::with_graph(graph, x_dim, y_dim)
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        Self::from_matrix(&linalg::from_real_rows(rows))
    }

    pub fn identity(n: usize) -> Self {
        Self::from_matrix(&CMatrix::identity(n, n))
    }

    pub fn from_graph(graph: Subspace, x_dim: usize, y_dim: usize) -> Result<Self> {
        if x_dim == 0 || y_dim == 0 {
            return Err(Error::EmptyAmbient);
        }
        if graph.ambient() != x_dim + y_dim {
            return Err(Error::AmbientMismatch { left: x_dim + y_dim, right: graph.ambient() });
        }
        Ok(Self::with_graph(graph, x_dim, y_dim))
    }

    /// The relation with graph `{0} ⊕ {0}`.
    pub fn zero_graph(x_dim: usize, y_dim: usize) -> Self {
        Self::with_graph(Subspace::zero(x_dim + y_dim), x_dim, y_dim)
    }

    /// The relation with graph `X ⊕ Y`: every `x` maps to all of `Y`.
    pub fn full_graph(x_dim: usize, y_dim: usize) -> Self {
        Self::with_graph(Subspace::full(x_dim + y_dim), x_dim, y_dim)
    }

    fn with_graph(graph: Subspace, x_dim: usize, y_dim: usize) -> Self {
        Self { x_dim, y_dim, graph, structure: OnceLock::new(), operator: OnceLock::new() }
    }

    /// Graph spanned by `(d_i, images_i)` for the columns of an orthonormal
    /// `domain` basis together with `{0} ⊕ mv`.
    pub(crate) fn from_parts(domain: &CMatrix, images: &CMatrix, mv: &Subspace, margin: f64) -> Result<Self> {
        let x_dim = domain.nrows();
        let y_dim = images.nrows();
        let d = domain.ncols();
        let mut g = CMatrix::zeros(x_dim + y_dim, d + mv.dim());
        g.view_mut((0, 0), (x_dim, d)).copy_from(domain);
        g.view_mut((x_dim, 0), (y_dim, d)).copy_from(images);
        g.view_mut((x_dim, d), (y_dim, mv.dim())).copy_from(mv.basis());
        let graph = Subspace::span_default(&g)?.with_margin_floor(margin.min(mv.margin()));
        Self::from_graph(graph, x_dim, y_dim)
    }

    pub fn x_dim(&self) -> usize {
        self.x_dim
    }

    pub fn y_dim(&self) -> usize {
        self.y_dim
    }

    pub fn graph(&self) -> &Subspace {
        &self.graph
    }

    pub(crate) fn structure(&self) -> &Structure {
        self.structure.get_or_init(|| Arc::new(self.build_structure()))
    }

    pub(crate) fn operator_cell(&self) -> &OnceLock<Arc<OperatorPart>> {
        &self.operator
    }

    fn build_structure(&self) -> Structure {
        let (x, y) = (self.x_dim, self.y_dim);
        let g = self.graph.basis();
        let gx = g.rows(0, x).into_owned();
        let gy = g.rows(x, y).into_owned();
        let tol = self.graph.tol();

        // Domain = column space of the x-block; x-block · v_i = s_i u_i lets
        // every domain basis vector u_i be lifted to the graph element G v_i / s_i.
        let (s, u, v) = linalg::svd(&gx);
        let cut = linalg::rank_cut(&s, tol);
        let d = cut.rank;
        let domain_margin = self.graph.margin().min(cut.margin);
        let domain = Subspace::from_orthonormal(u.columns(0, d).into_owned(), tol, domain_margin);
        let mut particular = CMatrix::zeros(y, d);
        for i in 0..d {
            let col = &gy * v.column(i) / C64::new(s[i], 0.0);
            particular.set_column(i, &col);
        }

        let x_axis = Subspace::full(x).embed(0, x + y);
        let y_axis = Subspace::full(y).embed(x, x + y);
        let kernel = self.graph.intersect(&x_axis).expect("same ambient").project_block(0, x);
        let mv = self.graph.intersect(&y_axis).expect("same ambient").project_block(x, y);
        let range = self.graph.project_block(x, y);

        let op = &particular - mv.basis() * (mv.basis().adjoint() * &particular);
        Structure { domain, kernel, range, mv, op }
    }

    /// `D(T)`: projection of the graph onto `X`.
    pub fn domain(&self) -> &Subspace {
        &self.structure().domain
    }

    /// `R(T)`: projection of the graph onto `Y`.
    pub fn range(&self) -> &Subspace {
        &self.structure().range
    }

    /// `N(T) = T⁻¹(0)`.
    pub fn kernel(&self) -> &Subspace {
        &self.structure().kernel
    }

    /// `T(0)`.
    pub fn multivalued_part(&self) -> &Subspace {
        &self.structure().mv
    }

    /// Smallest rank margin met while building the relation and its parts.
    pub fn margin(&self) -> f64 {
        let s = self.structure();
        [&self.graph, &s.domain, &s.kernel, &s.range, &s.mv]
            .iter()
            .map(|sub| sub.margin())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_single_valued(&self) -> bool {
        self.multivalued_part().is_zero()
    }

    pub fn is_everywhere_defined(&self) -> bool {
        self.domain().dim() == self.x_dim
    }

    fn check_x(&self, x: &CVector) -> Result<()> {
        if x.len() != self.x_dim {
            return Err(Error::AmbientMismatch { left: self.x_dim, right: x.len() });
        }
        Ok(())
    }

    /// A particular `y ∈ T(x)`, orthogonal to `T(0)`.
    pub fn fiber_point(&self, x: &CVector) -> Result<CVector> {
        self.check_x(x)?;
        let s = self.structure();
        let coords = s.domain.basis().adjoint() * x;
        let residual = (x - s.domain.basis() * &coords).norm();
        if residual > CONTAIN_TOL * x.norm() {
            return Err(Error::NotInDomain { residual });
        }
        Ok(&s.op * coords)
    }

    /// Whether `(x, y)` lies in the graph.
    pub fn relates(&self, x: &CVector, y: &CVector, tol: f64) -> Result<bool> {
        self.check_x(x)?;
        if y.len() != self.y_dim {
            return Err(Error::AmbientMismatch { left: self.y_dim, right: y.len() });
        }
        let mut pair = CVector::zeros(self.x_dim + self.y_dim);
        pair.rows_mut(0, self.x_dim).copy_from(x);
        pair.rows_mut(self.x_dim, self.y_dim).copy_from(y);
        self.graph.contains_vector(&pair, tol)
    }

    /// Block swap `(x, y) ↦ (y, x)`.
    pub fn inverse(&self) -> Self {
        let perm: Vec<usize> = (self.x_dim..self.x_dim + self.y_dim).chain(0..self.x_dim).collect();
        Self::with_graph(self.graph.permute_rows(&perm), self.y_dim, self.x_dim)
    }

    /// `λT`; for `λ = 0` the multivalued part collapses to `{0}`.
    pub fn scalar_mul(&self, lambda: C64) -> Self {
        let s = self.structure();
        let margin = self.margin();
        let result = if lambda == C64::new(0.0, 0.0) {
            let zeros = CMatrix::zeros(self.y_dim, s.domain.dim());
            Self::from_parts(s.domain.basis(), &zeros, &Subspace::zero(self.y_dim), margin)
        } else {
            Self::from_parts(s.domain.basis(), &(&s.op * lambda), &s.mv, margin)
        };
        result.expect("parts share the relation's dimensions")
    }

    fn check_same_dims(&self, other: &Self) -> Result<()> {
        if self.x_dim != other.x_dim || self.y_dim != other.y_dim {
            return Err(Error::RelationMismatch { x1: self.x_dim, y1: self.y_dim, x2: other.x_dim, y2: other.y_dim });
        }
        Ok(())
    }

    /// `S + T`: `{(x, y + z) : (x, y) ∈ G(S), (x, z) ∈ G(T)}`, computed by
    /// intersecting both lifts inside `X ⊕ Y ⊕ Y`.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_dims(other)?;
        let (x, y) = (self.x_dim, self.y_dim);
        let n = x + 2 * y;
        let lift = |rel: &Self, slot: usize, free: usize| {
            let g = rel.graph.basis();
            let k = g.ncols();
            let mut b = CMatrix::zeros(n, k + y);
            b.view_mut((0, 0), (x, k)).copy_from(&g.rows(0, x));
            b.view_mut((slot, 0), (y, k)).copy_from(&g.rows(x, y));
            b.view_mut((free, k), (y, y)).copy_from(&CMatrix::identity(y, y));
            Subspace::from_orthonormal(b, rel.graph.tol(), rel.graph.margin())
        };
        let first = lift(self, x, x + y);
        let second = lift(other, x + y, x);
        let common = first.intersect(&second)?;
        let mut collapse = CMatrix::zeros(x + y, n);
        collapse.view_mut((0, 0), (x, x)).copy_from(&CMatrix::identity(x, x));
        collapse.view_mut((x, x), (y, y)).copy_from(&CMatrix::identity(y, y));
        collapse.view_mut((x, x + y), (y, y)).copy_from(&CMatrix::identity(y, y));
        let graph = common.apply_map(&collapse)?;
        Self::from_graph(graph, x, y)
    }

    /// The pencil `A − λB`.
    pub fn pencil(a: &Self, b: &Self, lambda: C64) -> Result<Self> {
        a.add(&b.scalar_mul(-lambda))
    }

    /// `T(M)`: all values taken on `M ∩ D(T)`.
    pub fn image(&self, m: &Subspace) -> Result<Subspace> {
        if m.ambient() != self.x_dim {
            return Err(Error::AmbientMismatch { left: self.x_dim, right: m.ambient() });
        }
        let slab = m.direct_sum(&Subspace::full(self.y_dim));
        Ok(self.graph.intersect(&slab)?.project_block(self.x_dim, self.y_dim))
    }

    /// `T⁻¹(N) = {x ∈ D(T) : N ∩ T(x) ≠ ∅}`.
    pub fn preimage(&self, n: &Subspace) -> Result<Subspace> {
        if n.ambient() != self.y_dim {
            return Err(Error::AmbientMismatch { left: self.y_dim, right: n.ambient() });
        }
        self.inverse().image(n)
    }

    /// `T′` from `Y′ ≅ Y` to `X′ ≅ X`: `(y′, x′) ∈ G(T′)` iff
    /// `[y, y′] − [x, x′] = 0` for every `(x, y) ∈ G(T)`. Stored y-then-x.
    pub fn adjoint(&self) -> Self {
        let (x, y) = (self.x_dim, self.y_dim);
        let g = self.graph.basis();
        let mut flipped = CMatrix::zeros(x + y, g.ncols());
        flipped.rows_mut(0, y).copy_from(&g.rows(x, y));
        flipped.rows_mut(y, x).copy_from(&(-g.rows(0, x).into_owned()));
        let w = Subspace::from_orthonormal(flipped, self.graph.tol(), self.graph.margin());
        Self::with_graph(w.annihilator(), y, x)
    }

    /// Mutual graph containment within `tol`.
    pub fn equals(&self, other: &Self, tol: f64) -> Result<bool> {
        self.check_same_dims(other)?;
        self.graph.same_as(&other.graph, tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, real_diag, unit};

    fn e(n: usize, i: usize) -> Subspace {
        Subspace::span_default(&CMatrix::from_column_slice(n, 1, unit(n, i).as_slice())).unwrap()
    }

    fn same(a: &Subspace, b: &Subspace) -> bool {
        a.same_as(b, 1e-8).unwrap()
    }

    /// Graph span{(e1, e2), (0, e1)} in ℂ² ⊕ ℂ².
    fn e3() -> LinearRelation {
        let g = linalg::from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0], &[0.0, 1.0], &[1.0, 0.0]]);
        LinearRelation::from_graph(Subspace::span_default(&g).unwrap(), 2, 2).unwrap()
    }

    fn diag(d: &[f64]) -> LinearRelation {
        LinearRelation::from_matrix(&real_diag(d))
    }

    #[test]
    fn from_matrix_examples() {
        let id = LinearRelation::identity(2);
        assert_eq!(id.graph().dim(), 2);
        assert!(id.kernel().is_zero());
        let z = diag(&[0.0, 0.0]);
        assert_eq!(z.kernel().dim(), 2);
        let t = diag(&[0.0, 1.0]);
        assert!(same(t.kernel(), &e(2, 0)));
        assert!(same(t.range(), &e(2, 1)));
        assert_eq!(t.domain().dim(), 2);
        assert!(t.multivalued_part().is_zero());
    }

    #[test]
    fn from_graph_examples() {
        let z = LinearRelation::zero_graph(2, 2);
        assert!(z.domain().is_zero() && z.multivalued_part().is_zero());
        assert!(z.kernel().is_zero() && z.range().is_zero());
        let f = LinearRelation::full_graph(2, 3);
        assert_eq!(f.multivalued_part().dim(), 3);
        assert_eq!(f.kernel().dim(), 2);
        let t = e3();
        assert!(same(t.domain(), &e(2, 0)));
        assert!(same(t.multivalued_part(), &e(2, 0)));
        assert!(t.kernel().is_zero());
        assert_eq!(t.range().dim(), 2);
        // T(e1) = e2 + span e1.
        let y = t.fiber_point(&unit(2, 0)).unwrap();
        assert!((y - unit(2, 1)).norm() < 1e-12);
        assert!(LinearRelation::from_graph(Subspace::zero(3), 2, 2).is_err());
    }

    #[test]
    fn fiber_point_off_domain_reports_residual() {
        match e3().fiber_point(&unit(2, 1)) {
            Err(Error::NotInDomain { residual }) => assert!((residual - 1.0).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inverse_examples() {
        let inv = diag(&[2.0, 4.0]).inverse();
        assert!(inv.equals(&diag(&[0.5, 0.25]), 1e-10).unwrap());
        let t = e3();
        assert!(t.inverse().inverse().equals(&t, 1e-12).unwrap());
        let ti = t.inverse();
        assert_eq!(ti.domain().dim(), 2);
        assert!(same(ti.kernel(), &e(2, 0)));
    }

    #[test]
    fn scalar_mul_examples() {
        let t = e3();
        assert!(t.scalar_mul(c64(1.0, 0.0)).equals(&t, 1e-10).unwrap());
        let a = linalg::from_real_rows(&[&[1.0, 2.0], &[3.0, -1.0]]);
        let two = LinearRelation::from_matrix(&a).scalar_mul(c64(2.0, 0.0));
        assert!(two.equals(&LinearRelation::from_matrix(&(a * c64(2.0, 0.0))), 1e-10).unwrap());
        let zero = t.scalar_mul(c64(0.0, 0.0));
        let expected = Subspace::span_default(&linalg::from_real_rows(&[&[1.0], &[0.0], &[0.0], &[0.0]])).unwrap();
        assert!(same(zero.graph(), &expected));
    }

    #[test]
    fn scalar_mul_keeps_multivalued_part_for_tiny_lambda() {
        let t = e3().scalar_mul(c64(1e-13, 0.0));
        assert!(same(t.multivalued_part(), &e(2, 0)));
        assert!(same(t.domain(), &e(2, 0)));
    }

    #[test]
    fn add_examples() {
        let a = linalg::from_real_rows(&[&[1.0, 2.0], &[0.0, -1.0]]);
        let b = linalg::from_real_rows(&[&[0.5, 0.0], &[3.0, 1.0]]);
        let s = LinearRelation::from_matrix(&a).add(&LinearRelation::from_matrix(&b)).unwrap();
        assert!(s.equals(&LinearRelation::from_matrix(&(a + b)), 1e-10).unwrap());

        let s = e3().add(&LinearRelation::identity(2)).unwrap();
        assert!(same(s.domain(), &e(2, 0)));
        assert!(same(s.multivalued_part(), &e(2, 0)));

        let t = e3();
        let d = t.add(&t.scalar_mul(c64(-1.0, 0.0))).unwrap();
        assert!(same(d.kernel(), t.domain()));

        assert!(t.add(&LinearRelation::identity(3)).is_err());
    }

    #[test]
    fn pencil_examples() {
        let a = diag(&[0.0, 1.0]);
        let b = LinearRelation::identity(2);
        assert!(LinearRelation::pencil(&a, &b, c64(0.0, 0.0)).unwrap().equals(&a, 1e-10).unwrap());
        let lam = c64(0.3, -0.2);
        let p = LinearRelation::pencil(&a, &b, lam).unwrap();
        let expected = CMatrix::from_diagonal(&CVector::from_vec(vec![-lam, c64(1.0, 0.0) - lam]));
        assert!(p.equals(&LinearRelation::from_matrix(&expected), 1e-10).unwrap());
        let t = e3();
        let p = LinearRelation::pencil(&t, &t, c64(1.0, 0.0)).unwrap();
        assert!(same(p.kernel(), t.domain()));
    }

    #[test]
    fn image_and_preimage_examples() {
        let t = diag(&[0.0, 1.0]);
        assert!(t.image(&e(2, 0)).unwrap().is_zero());
        assert!(same(&t.image(&Subspace::full(2)).unwrap(), t.range()));
        assert_eq!(e3().image(&e(2, 0)).unwrap().dim(), 2);

        let s = Subspace::random(2, 1, 4).unwrap();
        assert!(same(&LinearRelation::identity(2).preimage(&s).unwrap(), &s));
        assert_eq!(t.preimage(&e(2, 1)).unwrap().dim(), 2);
        assert!(same(&t.preimage(&Subspace::zero(2)).unwrap(), t.kernel()));
        assert!(t.image(&Subspace::zero(3)).is_err());
    }

    #[test]
    fn adjoint_examples() {
        let m = linalg::from_real_rows(&[&[1.0, 2.0, 0.0], &[0.0, -1.0, 4.0]]);
        let mut mc = m.clone();
        mc[(0, 1)] = c64(2.0, 1.5);
        let adj = LinearRelation::from_matrix(&mc).adjoint();
        assert_eq!((adj.x_dim(), adj.y_dim()), (2, 3));
        assert!(adj.equals(&LinearRelation::from_matrix(&mc.transpose()), 1e-10).unwrap());

        let t = e3();
        assert!(t.adjoint().adjoint().equals(&t, 1e-10).unwrap());
        let ta = t.adjoint();
        assert_eq!(ta.graph().dim(), 2);
        assert!(ta.kernel().is_zero());
        assert!(same(ta.multivalued_part(), &e(2, 1)));
        // y′₁ = 0 and x′₁ = y′₂ on the whole graph (stored y′-then-x′).
        for col in ta.graph().basis().column_iter() {
            assert!(col[0].norm() < 1e-12);
            assert!((col[2] - col[1]).norm() < 1e-12);
        }
    }

    #[test]
    fn equals_examples() {
        let t = e3();
        assert!(t.equals(&t, 1e-8).unwrap());
        assert!(t.equals(&t.inverse().inverse(), 1e-8).unwrap());
        // Graph gap between diag(1,1) and diag(1,1+1e-6) is ≈ 1e-6/√2·... ≫ 1e-8.
        let a = diag(&[1.0, 1.0]);
        let b = diag(&[1.0, 1.0 + 1e-6]);
        let g = a.graph().gap(b.graph()).unwrap();
        assert!(g > 1e-7 && g < 1e-6);
        assert!(!a.equals(&b, 1e-8).unwrap());
    }
}
