//! Quotient seminorms, minimum modulus, nullity/deficiency and relative bounds.
//!
//! `Y / T(0)` is identified isometrically with `T(0)^⊥` and `X / N(T)` with
//! `D(T) ∩ N(T)^⊥`, so every supremum and infimum below is a singular value.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, C64};
use crate::relation::LinearRelation;
use crate::subspace::{Subspace, CONTAIN_TOL};

/// Slack allowed when testing an inequality between computed norms.
pub const INEQ_SLACK: f64 = 1e-9;

/// Single-valued operator induced by a relation on its domain.
#[derive(Debug)]
pub struct OperatorPart {
    pub dom_basis: CMatrix,
    /// Orthonormal basis of `D(T) ∩ N(T)^⊥`.
    pub quot_dom_basis: CMatrix,
    /// `x ↦ P_{T(0)^⊥} y(x)` in `dom_basis` coordinates.
    pub matrix_full: CMatrix,
    /// The same map in `quot_dom_basis` coordinates.
    pub matrix_quot: CMatrix,
    quot_singular_values: Vec<f64>,
}

impl OperatorPart {
    pub fn of(t: &LinearRelation) -> &OperatorPart {
        t.operator_cell().get_or_init(|| Arc::new(Self::build(t)))
    }

    fn build(t: &LinearRelation) -> Self {
        let s = t.structure();
        let dom_basis = s.domain.basis().clone();
        let quot = s.domain.intersect(&s.kernel.orth_complement()).expect("same ambient");
        let quot_dom_basis = quot.basis().clone();
        let matrix_full = s.op.clone();
        let matrix_quot = &matrix_full * (dom_basis.adjoint() * &quot_dom_basis);
        let quot_singular_values = linalg::singular_values(&matrix_quot);
        Self { dom_basis, quot_dom_basis, matrix_full, matrix_quot, quot_singular_values }
    }

    /// Singular values of `matrix_quot`, descending.
    pub fn quot_singular_values(&self) -> &[f64] {
        &self.quot_singular_values
    }
}

/// `‖Tx‖ = dist(y, T(0))` for any `y ∈ T(x)`.
pub fn relation_norm_at(t: &LinearRelation, x: &CVector) -> Result<f64> {
    Ok(t.fiber_point(x)?.norm())
}

/// `‖T‖`, with `0` for an empty domain.
pub fn norm(t: &LinearRelation) -> f64 {
    linalg::spectral_norm(&OperatorPart::of(t).matrix_full)
}

/// Minimum modulus; `f64::INFINITY` when `D(T) ⊆ N(T)`.
pub fn gamma(t: &LinearRelation) -> f64 {
    OperatorPart::of(t).quot_singular_values().last().copied().unwrap_or(f64::INFINITY)
}

pub fn alpha(t: &LinearRelation) -> usize {
    t.kernel().dim()
}

pub fn beta(t: &LinearRelation) -> usize {
    t.y_dim() - t.range().dim()
}

/// Largest dimension of a subspace of `D(T)` on which `‖Tx‖ ≤ eps‖x‖`.
pub fn alpha_prime_eps(t: &LinearRelation, eps: f64) -> Result<usize> {
    if !eps.is_finite() || eps < 0.0 {
        return Err(Error::InvalidArgument(format!("eps must be finite and non-negative, got {eps}")));
    }
    let small = OperatorPart::of(t).quot_singular_values().iter().filter(|&&s| s <= eps).count();
    Ok(alpha(t) + small)
}

/// Limit of [`alpha_prime_eps`] as `eps → 0⁺`.
pub fn alpha_prime(t: &LinearRelation) -> usize {
    alpha_prime_eps(t, 0.0).expect("zero is a valid eps")
}

/// `α′` of the adjoint.
pub fn beta_prime(t: &LinearRelation) -> usize {
    alpha_prime(&t.adjoint())
}

/// `‖x‖ + ‖Tx‖`.
pub fn graph_norm_at(t: &LinearRelation, x: &CVector) -> Result<f64> {
    Ok(x.norm() + relation_norm_at(t, x)?)
}

/// Matrix of `x ↦ P_{T(0)^⊥} y(x)` on the columns of `sub_basis ⊆ D(T)`.
pub fn restricted_operator(t: &LinearRelation, sub_basis: &CMatrix) -> CMatrix {
    let part = OperatorPart::of(t);
    &part.matrix_full * (part.dom_basis.adjoint() * sub_basis)
}

/// Checks `D(A) ⊆ D(B)` and `B(0) ⊆ A(0)`.
pub fn check_standing_hypotheses(a: &LinearRelation, b: &LinearRelation) -> Result<()> {
    if a.x_dim() != b.x_dim() || a.y_dim() != b.y_dim() {
        return Err(Error::RelationMismatch { x1: a.x_dim(), y1: a.y_dim(), x2: b.x_dim(), y2: b.y_dim() });
    }
    let gap = a.domain().gap(b.domain())?;
    if gap > CONTAIN_TOL {
        return Err(Error::Hypothesis { which: "D(A) ⊆ D(B)", gap });
    }
    let gap = b.multivalued_part().gap(a.multivalued_part())?;
    if gap > CONTAIN_TOL {
        return Err(Error::Hypothesis { which: "B(0) ⊆ A(0)", gap });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Exact,
    Heuristic,
    Supplied,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Exact => "exact",
            Provenance::Heuristic => "heuristic",
            Provenance::Supplied => "supplied",
        })
    }
}

/// Constants in `‖Bx‖ ≤ σ‖x‖ + τ‖Ax‖` on `D(A)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeBound {
    pub sigma: f64,
    pub tau: f64,
    pub provenance: Provenance,
    /// For heuristic fits, the exact `τ = 0` constant, which is always valid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certified_sigma: Option<f64>,
    #[serde(skip)]
    pub witness: Option<CVector>,
}

impl RelativeBound {
    pub fn supplied(sigma: f64, tau: f64) -> Result<Self> {
        if !(sigma.is_finite() && tau.is_finite() && sigma >= 0.0 && tau >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sigma and tau must be finite and non-negative, got ({sigma}, {tau})"
            )));
        }
        Ok(Self { sigma, tau, provenance: Provenance::Supplied, certified_sigma: None, witness: None })
    }
}

/// `B`'s quotient-seminorm matrix on an orthonormal basis of `D(A)`.
fn b_on_domain_of_a(a: &LinearRelation, b: &LinearRelation) -> CMatrix {
    restricted_operator(b, a.domain().basis())
}

const ASCENT_STARTS: u64 = 32;
const ASCENT_STEPS: usize = 300;

/// Minimal `σ` for the given `τ`. Exact for `τ = 0`; for `τ > 0` the maximum
/// of `(‖Bx‖ − τ‖Ax‖)/‖x‖` is approximated by multi-start projected ascent.
pub fn fit_relative_bound(a: &LinearRelation, b: &LinearRelation, tau: f64) -> Result<RelativeBound> {
    check_standing_hypotheses(a, b)?;
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be finite and non-negative, got {tau}")));
    }
    let mb = b_on_domain_of_a(a, b);
    let ma = OperatorPart::of(a).matrix_full.clone();
    let dom = a.domain().basis();
    let (s, _, v) = linalg::svd(&mb);
    let exact = s.first().copied().unwrap_or(0.0);
    if tau == 0.0 {
        let witness = (v.ncols() > 0).then(|| dom * v.column(0));
        return Ok(RelativeBound { sigma: exact, tau, provenance: Provenance::Exact, certified_sigma: None, witness });
    }
    let d = ma.ncols();
    if d == 0 {
        return Ok(RelativeBound { sigma: 0.0, tau, provenance: Provenance::Heuristic, certified_sigma: Some(0.0), witness: None });
    }

    let objective = |c: &CVector| (&mb * c).norm() - tau * (&ma * c).norm();
    let gradient = |m: &CMatrix, c: &CVector| {
        let mc = m * c;
        let n = mc.norm();
        if n > 0.0 {
            m.adjoint() * mc / C64::new(n, 0.0)
        } else {
            CVector::zeros(c.len())
        }
    };
    let scale = linalg::spectral_norm(&mb) + tau * linalg::spectral_norm(&ma);
    let step = if scale > 0.0 { 0.25 / scale } else { 0.0 };

    let mut best = f64::NEG_INFINITY;
    let mut best_c = CVector::zeros(d);
    for start in 0..ASCENT_STARTS {
        let mut c = if (start as usize) < v.ncols() {
            v.column(start as usize).into_owned()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5151_0000 + start);
            linalg::complex_gaussian_vector(d, &mut rng)
        };
        c /= C64::new(c.norm(), 0.0);
        for _ in 0..ASCENT_STEPS {
            let value = objective(&c);
            if value > best {
                best = value;
                best_c = c.clone();
            }
            let g = gradient(&mb, &c) - gradient(&ma, &c) * C64::new(tau, 0.0);
            let next = &c + g * C64::new(step, 0.0);
            let n = next.norm();
            if n == 0.0 {
                break;
            }
            c = next / C64::new(n, 0.0);
        }
        let value = objective(&c);
        if value > best {
            best = value;
            best_c = c;
        }
    }
    Ok(RelativeBound {
        sigma: best.max(0.0),
        tau,
        provenance: Provenance::Heuristic,
        certified_sigma: Some(exact),
        witness: Some(dom * best_c),
    })
}

#[derive(Debug, Clone)]
pub struct BoundCheck {
    pub holds: bool,
    /// Largest `‖Bx‖ − σ‖x‖ − τ‖Ax‖` over tested unit vectors.
    pub worst_residual: f64,
    pub witness: Option<CVector>,
}

/// Tests the bound on random unit vectors of `D(A)` plus the singular
/// directions of both operator parts and the kernel of `A`.
pub fn check_relative_bound(
    a: &LinearRelation,
    b: &LinearRelation,
    bound: &RelativeBound,
    trials: usize,
    seed: u64,
) -> Result<BoundCheck> {
    check_standing_hypotheses(a, b)?;
    let dom = a.domain().basis();
    let d = dom.ncols();
    if d == 0 {
        return Ok(BoundCheck { holds: true, worst_residual: f64::NEG_INFINITY, witness: None });
    }
    let part_a = OperatorPart::of(a);
    let mut candidates: Vec<CVector> = Vec::new();
    let (_, _, va) = linalg::svd(&part_a.matrix_quot);
    candidates.extend(va.column_iter().map(|c| &part_a.quot_dom_basis * c));
    let (_, _, vb) = linalg::svd(&b_on_domain_of_a(a, b));
    candidates.extend(vb.column_iter().map(|c| dom * c));
    candidates.extend(a.kernel().basis().column_iter().map(|c| c.into_owned()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        candidates.push(dom * linalg::complex_gaussian_vector(d, &mut rng));
    }

    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    for x in candidates {
        let n = x.norm();
        if n == 0.0 {
            continue;
        }
        let x = x / C64::new(n, 0.0);
        let residual = relation_norm_at(b, &x)? - bound.sigma - bound.tau * relation_norm_at(a, &x)?;
        if residual > worst {
            worst = residual;
            witness = Some(x);
        }
    }
    Ok(BoundCheck { holds: worst <= INEQ_SLACK, worst_residual: worst, witness })
}

/// Multiplier `k` of `σ` in `γ / (kσ + τγ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RadiusKind {
    /// Pencil well-behaved (`k = 1`).
    Pencil,
    /// Nullity constant (`k = 2`).
    Alpha,
    /// Nullity and deficiency constant (`k = 3`).
    Full,
    /// Closed range of the pencil with the quantitative `γ` bound (`k = 3`).
    Range,
}

impl RadiusKind {
    pub fn multiplier(self) -> f64 {
        match self {
            RadiusKind::Pencil => 1.0,
            RadiusKind::Alpha => 2.0,
            RadiusKind::Full | RadiusKind::Range => 3.0,
        }
    }
}

/// `γ / (kσ + τγ)`; `1/τ` in the limit `γ = ∞`, and `∞` when the
/// denominator vanishes.
pub fn stability_radius(gamma_val: f64, bound: &RelativeBound, kind: RadiusKind) -> f64 {
    let k = kind.multiplier();
    if gamma_val.is_infinite() {
        return if bound.tau > 0.0 { 1.0 / bound.tau } else { f64::INFINITY };
    }
    let denom = k * bound.sigma + bound.tau * gamma_val;
    if denom == 0.0 {
        f64::INFINITY
    } else {
        gamma_val / denom
    }
}

/// `(1, 2, 3)`-multiplier radii together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Radii {
    #[serde(with = "crate::io::extended")]
    pub pencil: f64,
    #[serde(with = "crate::io::extended")]
    pub alpha: f64,
    #[serde(with = "crate::io::extended")]
    pub full: f64,
}

impl Radii {
    pub fn new(gamma_val: f64, bound: &RelativeBound) -> Self {
        Self {
            pencil: stability_radius(gamma_val, bound, RadiusKind::Pencil),
            alpha: stability_radius(gamma_val, bound, RadiusKind::Alpha),
            full: stability_radius(gamma_val, bound, RadiusKind::Full),
        }
    }
}

/// Subspace helper used by callers that need `D(T) ∩ N(T)^⊥` as a value.
pub fn quotient_domain(t: &LinearRelation) -> Subspace {
    t.domain().intersect(&t.kernel().orth_complement()).expect("same ambient")
}
