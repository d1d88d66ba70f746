//! Structured random instances, pencil sweeps and the perturbation/stability
//! checkers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chains::{self, Nu};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, C64, MARGIN_OK};
use crate::metrics::{self, Radii, RelativeBound};
use crate::relation::LinearRelation;
use crate::subspace::Subspace;
use crate::verdict::{Audit, Verdict};

/// Slack for the gap bound and the minimum-modulus lower bound.
pub const BOUND_SLACK: f64 = 1e-7;
/// Relative distance from a radius inside which a point counts as on the
/// boundary and is not asserted.
pub const RADIUS_MARGIN: f64 = 1e-9;
/// Modulus cap for grids when the radius is infinite.
pub const INFINITE_RADIUS_CAP: f64 = 10.0;

const GENERATOR_ATTEMPTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub x_dim: usize,
    pub y_dim: usize,
    pub alpha: usize,
    pub beta: usize,
    pub mv_dim: usize,
    pub dom_codim: usize,
    #[serde(default)]
    pub force_nu_infinite: bool,
    pub seed: u64,
}

impl InstanceSpec {
    /// Rank of `A`'s operator part forced by the requested dimensions.
    fn operator_rank(&self) -> Result<usize> {
        let s = self;
        if s.x_dim == 0 || s.y_dim == 0 {
            return Err(Error::InfeasibleSpec("x_dim and y_dim must be positive".into()));
        }
        if s.alpha + s.dom_codim > s.x_dim {
            return Err(Error::InfeasibleSpec(format!(
                "alpha + dom_codim <= x_dim violated: {} + {} > {}",
                s.alpha, s.dom_codim, s.x_dim
            )));
        }
        if s.beta + s.mv_dim > s.y_dim {
            return Err(Error::InfeasibleSpec(format!(
                "beta + mv_dim <= y_dim violated: {} + {} > {}",
                s.beta, s.mv_dim, s.y_dim
            )));
        }
        let from_x = s.x_dim - s.dom_codim - s.alpha;
        let from_y = s.y_dim - s.mv_dim - s.beta;
        if from_x != from_y {
            return Err(Error::InfeasibleSpec(format!(
                "x_dim - dom_codim - alpha = y_dim - mv_dim - beta violated: {from_x} != {from_y}"
            )));
        }
        Ok(from_x)
    }

    /// A feasible spec with dimensions drawn from `1..=max_dim`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, max_dim: usize, force_nu_infinite: bool) -> Self {
        let x_dim = rng.random_range(1..=max_dim);
        let y_dim = rng.random_range(1..=max_dim);
        let rank = rng.random_range(0..=x_dim.min(y_dim));
        let alpha = rng.random_range(0..=x_dim - rank);
        let mv_dim = rng.random_range(0..=y_dim - rank);
        Self {
            x_dim,
            y_dim,
            alpha,
            beta: y_dim - rank - mv_dim,
            mv_dim,
            dom_codim: x_dim - rank - alpha,
            force_nu_infinite,
            seed: rng.random(),
        }
    }
}

impl InstanceSpec {
    /// A feasible spec with `dom_codim = 0`.
    pub fn random_everywhere_defined<R: Rng + ?Sized>(rng: &mut R, max_dim: usize, force_nu_infinite: bool) -> Self {
        let x_dim = rng.random_range(1..=max_dim);
        let y_dim = rng.random_range(1..=max_dim);
        let alpha = rng.random_range(x_dim.saturating_sub(y_dim)..=x_dim);
        let rank = x_dim - alpha;
        let mv_dim = rng.random_range(0..=y_dim - rank);
        Self { x_dim, y_dim, alpha, beta: y_dim - rank - mv_dim, mv_dim, dom_codim: 0, force_nu_infinite, seed: rng.random() }
    }
}

fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    if n == 0 {
        return CMatrix::zeros(0, 0);
    }
    linalg::complex_gaussian(n, n, rng).qr().q()
}

fn draw_pair<R: Rng + ?Sized>(spec: &InstanceSpec, rank: usize, rng: &mut R) -> Result<(LinearRelation, LinearRelation)> {
    let (x, y) = (spec.x_dim, spec.y_dim);
    let ux = random_unitary(x, rng);
    let uy = random_unitary(y, rng);
    let kernel = ux.columns(0, spec.alpha).into_owned();
    let quot = ux.columns(spec.alpha, rank).into_owned();
    let mv = uy.columns(0, spec.mv_dim).into_owned();
    let targets = uy.columns(spec.mv_dim, rank).into_owned();

    let singular: Vec<f64> = (0..rank).map(|_| rng.random_range(0.5..=2.0)).collect();
    let mixer = random_unitary(rank, rng);
    let images = &targets * linalg::real_diag(&singular) * &mixer;

    let mut g = CMatrix::zeros(x + y, spec.alpha + rank + spec.mv_dim);
    g.view_mut((0, 0), (x, spec.alpha)).copy_from(&kernel);
    g.view_mut((0, spec.alpha), (x, rank)).copy_from(&quot);
    g.view_mut((x, spec.alpha), (y, rank)).copy_from(&images);
    g.view_mut((x, spec.alpha + rank), (y, spec.mv_dim)).copy_from(&mv);
    let a = LinearRelation::from_graph(Subspace::span_default(&g)?, x, y)?;

    let mut op = linalg::complex_gaussian(y, x, rng);
    if spec.force_nu_infinite {
        // Factor through the complement of N(A) so B vanishes there exactly;
        // subtracting a projection would leave rounding noise that the
        // rescaling below blows up when N(A) = X.
        let off = ux.columns(spec.alpha, x - spec.alpha).into_owned();
        op = &op * &off * off.adjoint();
    }
    let scale = linalg::spectral_norm(&op);
    if scale > 0.0 {
        op *= C64::new(rng.random_range(0.2..=2.0) / scale, 0.0);
    }
    let b_mv_dim = rng.random_range(0..=spec.mv_dim);
    let mixer = random_unitary(spec.mv_dim.max(1), rng);
    let b_mv = &mv * mixer.view((0, 0), (spec.mv_dim, b_mv_dim));
    let mut gb = CMatrix::zeros(x + y, x + b_mv_dim);
    gb.view_mut((0, 0), (x, x)).copy_from(&CMatrix::identity(x, x));
    gb.view_mut((x, 0), (y, x)).copy_from(&op);
    gb.view_mut((x, x), (y, b_mv_dim)).copy_from(&b_mv);
    let b = LinearRelation::from_graph(Subspace::span_default(&gb)?, x, y)?;
    Ok((a, b))
}

fn measure(spec: &InstanceSpec, a: &LinearRelation, b: &LinearRelation) -> Result<()> {
    let checks = [
        ("alpha", spec.alpha, metrics::alpha(a)),
        ("beta", spec.beta, metrics::beta(a)),
        ("mv_dim", spec.mv_dim, a.multivalued_part().dim()),
        ("dom_codim", spec.dom_codim, spec.x_dim - a.domain().dim()),
        ("dim D(B)", spec.x_dim, b.domain().dim()),
    ];
    for (what, wanted, measured) in checks {
        if wanted != measured {
            return Err(Error::GeneratorMismatch { what, wanted, measured });
        }
    }
    metrics::check_standing_hypotheses(a, b)?;
    if spec.force_nu_infinite {
        let nu = chains::nu(a, b)?;
        if nu != Nu::Infinite {
            let measured = match nu {
                Nu::Finite(n) => n,
                Nu::Infinite => 0,
            };
            return Err(Error::GeneratorMismatch { what: "nu = inf", wanted: 0, measured });
        }
    }
    Ok(())
}

/// `(A, B)` with the requested structure for `A`, `B` everywhere defined and
/// `B(0) ⊆ A(0)`. Draws are repeated (deterministically) until every rank
/// decision has margin at least [`MARGIN_OK`].
pub fn generate(spec: &InstanceSpec) -> Result<(LinearRelation, LinearRelation)> {
    let rank = spec.operator_rank()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut last_err = None;
    for _ in 0..GENERATOR_ATTEMPTS {
        let (a, b) = draw_pair(spec, rank, &mut rng)?;
        if a.margin() < MARGIN_OK || b.margin() < MARGIN_OK {
            continue;
        }
        match measure(spec, &a, &b) {
            Ok(()) => return Ok((a, b)),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::InfeasibleSpec("no well-conditioned draw found".into())))
}

/// `λ = 0` followed by `points` log-spaced moduli in `[1e-3·r, 0.999·r]`
/// times `phases` equally spaced arguments. An infinite `radius` is capped
/// at [`INFINITE_RADIUS_CAP`]; `points = 0` gives an empty grid.
pub fn default_grid(radius: f64, points: usize, phases: usize) -> Vec<C64> {
    if points == 0 || phases == 0 {
        return Vec::new();
    }
    let r = if radius.is_finite() { radius } else { INFINITE_RADIUS_CAP };
    if r.is_nan() || r <= 0.0 {
        return vec![C64::new(0.0, 0.0)];
    }
    let (lo, hi) = ((1e-3 * r).ln(), (0.999 * r).ln());
    let mut grid = vec![C64::new(0.0, 0.0)];
    for i in 0..points {
        let t = if points == 1 { 1.0 } else { i as f64 / (points - 1) as f64 };
        let modulus = (lo + t * (hi - lo)).exp();
        for j in 0..phases {
            grid.push(C64::from_polar(modulus, std::f64::consts::TAU * j as f64 / phases as f64));
        }
    }
    grid
}

fn strictly_inside(modulus: f64, radius: f64) -> bool {
    radius.is_infinite() || modulus < radius * (1.0 - RADIUS_MARGIN)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaFlags {
    pub inside_pencil: bool,
    pub inside_alpha: bool,
    pub inside_full: bool,
    /// Some rank decision for this pencil had margin below the threshold.
    pub indeterminate: bool,
    /// `D ⊆ N` for the pencil, i.e. infinite minimum modulus.
    pub degenerate: bool,
}

impl LambdaFlags {
    pub fn names(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        for (on, name) in [
            (self.inside_pencil, "inside_pencil"),
            (self.inside_alpha, "inside_alpha"),
            (self.inside_full, "inside_full"),
            (self.indeterminate, "indeterminate"),
            (self.degenerate, "degenerate"),
        ] {
            if on {
                v.push(name);
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaRecord {
    #[serde(with = "crate::io::complex")]
    pub lambda: C64,
    pub alpha: usize,
    pub beta: usize,
    #[serde(with = "crate::io::extended")]
    pub gamma: f64,
    /// `δ(N(A), N(A − λB))`.
    pub gap_fwd: f64,
    /// `δ(N(A − λB), N(A))`.
    pub gap_bwd: f64,
    /// `σ|λ| / (γ − |λ|(σ + τγ))` where the denominator is positive.
    pub bound: Option<f64>,
    pub flags: LambdaFlags,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub alpha_a: usize,
    pub beta_a: usize,
    #[serde(with = "crate::io::extended")]
    pub gamma_a: f64,
    pub radii: Radii,
    pub bound: RelativeBound,
    pub records: Vec<LambdaRecord>,
}

/// The finishing-bound value at `|λ|`, when its denominator is positive.
pub fn finishing_bound(gamma_a: f64, bound: &RelativeBound, modulus: f64) -> Option<f64> {
    let (s, t) = (bound.sigma, bound.tau);
    if gamma_a.is_infinite() {
        return (modulus * t < 1.0).then_some(0.0);
    }
    let denom = gamma_a - modulus * (s + t * gamma_a);
    (denom > 0.0).then(|| s * modulus / denom)
}

/// Per-`λ` nullity, deficiency, minimum modulus and kernel gaps of `A − λB`.
pub fn sweep(a: &LinearRelation, b: &LinearRelation, bound: &RelativeBound, grid: &[C64]) -> Result<SweepReport> {
    metrics::check_standing_hypotheses(a, b)?;
    let gamma_a = metrics::gamma(a);
    let radii = Radii::new(gamma_a, bound);
    let records = grid
        .par_iter()
        .map(|&lambda| {
            let p = LinearRelation::pencil(a, b, lambda)?;
            let modulus = lambda.norm();
            let gamma = metrics::gamma(&p);
            let margin = p.margin().min(a.margin());
            Ok(LambdaRecord {
                lambda,
                alpha: metrics::alpha(&p),
                beta: metrics::beta(&p),
                gamma,
                gap_fwd: a.kernel().gap(p.kernel())?,
                gap_bwd: p.kernel().gap(a.kernel())?,
                bound: finishing_bound(gamma_a, bound, modulus),
                flags: LambdaFlags {
                    inside_pencil: strictly_inside(modulus, radii.pencil),
                    inside_alpha: strictly_inside(modulus, radii.alpha),
                    inside_full: strictly_inside(modulus, radii.full),
                    indeterminate: margin < MARGIN_OK,
                    degenerate: gamma.is_infinite(),
                },
                margin,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { alpha_a: metrics::alpha(a), beta_a: metrics::beta(a), gamma_a, radii, bound: bound.clone(), records })
}

/// Result of one assertion applied across a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub verdict: Verdict,
    /// Grid points at which the assertion was evaluated.
    pub checked: usize,
    /// Grid points skipped as indeterminate.
    pub excluded: usize,
    /// Largest violation amount seen (`≤ 0` when everything held).
    #[serde(with = "crate::io::extended")]
    pub worst_excess: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
}

impl CheckReport {
    pub fn not_applicable(reason: impl Into<String>) -> Self {
        Self {
            verdict: Verdict::NotApplicable,
            checked: 0,
            excluded: 0,
            worst_excess: f64::NEG_INFINITY,
            reason: Some(reason.into()),
            failures: Vec::new(),
        }
    }

    fn indeterminate(reason: impl Into<String>) -> Self {
        Self { verdict: Verdict::Indeterminate, ..Self::not_applicable(reason) }
    }
}

/// Accumulates per-`λ` assertions.
struct Tally {
    checked: usize,
    excluded: usize,
    worst: f64,
    failures: Vec<String>,
}

impl Tally {
    fn new() -> Self {
        Self { checked: 0, excluded: 0, worst: f64::NEG_INFINITY, failures: Vec::new() }
    }

    fn record(&mut self, rec: &LambdaRecord, excess: f64, what: &str) {
        self.checked += 1;
        self.worst = self.worst.max(excess);
        if excess > 0.0 && self.failures.len() < 8 {
            self.failures.push(format!("lambda = {}{:+}i: {what} (excess {excess:e})", rec.lambda.re, rec.lambda.im));
        }
    }

    fn finish(self) -> CheckReport {
        let verdict = if !self.failures.is_empty() {
            Verdict::Fail
        } else if self.checked == 0 && self.excluded > 0 {
            Verdict::Indeterminate
        } else {
            Verdict::Pass
        };
        CheckReport {
            verdict,
            checked: self.checked,
            excluded: self.excluded,
            worst_excess: self.worst,
            reason: None,
            failures: self.failures,
        }
    }
}

/// Gate shared by the `ν = ∞` checks. `None` admits the instance.
fn nu_gate(a: &LinearRelation, b: &LinearRelation) -> Result<Option<CheckReport>> {
    let report = chains::chain_report(a, b, a.x_dim() + 1)?;
    if !report.audit.reliable() {
        return Ok(Some(CheckReport::indeterminate("chain decisions ill-conditioned")));
    }
    if report.nu != Nu::Infinite {
        return Ok(Some(CheckReport::not_applicable(format!("nu(A:B) = {}", report.nu))));
    }
    Ok(None)
}

fn instance_gate(a: &LinearRelation, b: &LinearRelation, bound: &RelativeBound) -> Result<Option<CheckReport>> {
    if let Err(e) = metrics::check_standing_hypotheses(a, b) {
        return match e {
            Error::Hypothesis { .. } => Ok(Some(CheckReport::not_applicable(e.to_string()))),
            other => Err(other),
        };
    }
    if a.margin() < MARGIN_OK || b.margin() < MARGIN_OK {
        return Ok(Some(CheckReport::indeterminate("instance ill-conditioned")));
    }
    let check = metrics::check_relative_bound(a, b, bound, 16, 0)?;
    if !check.holds {
        return Ok(Some(CheckReport::not_applicable(format!(
            "relative bound does not hold (residual {:e})",
            check.worst_residual
        ))));
    }
    Ok(None)
}

/// `δ(N(A), N(A − λB))` is bounded by the finishing bound when `ν(A:B) = ∞`.
pub fn verify_gap_bound(a: &LinearRelation, b: &LinearRelation, bound: &RelativeBound, grid: &[C64]) -> Result<CheckReport> {
    if let Some(r) = instance_gate(a, b, bound)? {
        return Ok(r);
    }
    if let Some(r) = nu_gate(a, b)? {
        return Ok(r);
    }
    let report = sweep(a, b, bound, grid)?;
    Ok(gap_bound_on(&report))
}

pub fn gap_bound_on(report: &SweepReport) -> CheckReport {
    let mut tally = Tally::new();
    for rec in &report.records {
        let Some(value) = rec.bound else { continue };
        if rec.flags.indeterminate {
            tally.excluded += 1;
            continue;
        }
        tally.record(rec, rec.gap_fwd - value - BOUND_SLACK, "gap exceeds finishing bound");
    }
    tally.finish()
}

/// `δ(N(A − λB), N(A)) ≤ σ|λ| / ((1 − τ|λ|)γ)` inside the pencil radius;
/// holds under the standing hypotheses alone.
pub fn backward_gap_on(report: &SweepReport) -> CheckReport {
    let mut tally = Tally::new();
    let (s, t) = (report.bound.sigma, report.bound.tau);
    for rec in &report.records {
        if !rec.flags.inside_pencil {
            continue;
        }
        if rec.flags.indeterminate {
            tally.excluded += 1;
            continue;
        }
        let m = rec.lambda.norm();
        let value = if report.gamma_a.is_infinite() { 0.0 } else { s * m / ((1.0 - t * m) * report.gamma_a) };
        tally.record(rec, rec.gap_bwd - value - BOUND_SLACK, "backward gap exceeds bound");
    }
    tally.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub verdict: Verdict,
    /// `α` and `β` equal those of `A` inside the full radius (`ν = ∞`).
    pub constancy: CheckReport,
    /// `α(A − λB) ≤ α(A)` inside the pencil radius.
    pub one_sided: CheckReport,
    /// `γ(A − λB) ≥ γ(A) − (3σ + τγ(A))|λ|` inside the full radius (`ν = ∞`).
    pub gamma_lower_bound: CheckReport,
    /// No pencil with infinite minimum modulus inside the pencil radius when
    /// `R(A) ≠ A(0)`.
    pub dichotomy: CheckReport,
    /// Finishing gap bound (`ν = ∞`).
    pub finishing_gap_bound: CheckReport,
    /// Backward gap bound inside the pencil radius.
    pub backward_gap_bound: CheckReport,
}

/// Combined verdict: any failure fails; otherwise any pass passes.
pub fn combine(verdicts: &[Verdict]) -> Verdict {
    if verdicts.contains(&Verdict::Fail) {
        Verdict::Fail
    } else if verdicts.contains(&Verdict::Pass) {
        Verdict::Pass
    } else if verdicts.contains(&Verdict::Indeterminate) {
        Verdict::Indeterminate
    } else {
        Verdict::NotApplicable
    }
}

/// Stability of nullity and deficiency of `A − λB` for small `|λ|`, plus the
/// side conditions that hold without `ν = ∞`.
pub fn verify_stability(a: &LinearRelation, b: &LinearRelation, bound: &RelativeBound, grid: &[C64]) -> Result<StabilityReport> {
    if let Some(r) = instance_gate(a, b, bound)? {
        return Ok(StabilityReport {
            verdict: r.verdict,
            constancy: r.clone(),
            one_sided: r.clone(),
            gamma_lower_bound: r.clone(),
            dichotomy: r.clone(),
            finishing_gap_bound: r.clone(),
            backward_gap_bound: r,
        });
    }
    let report = sweep(a, b, bound, grid)?;
    let one_sided = one_sided_on(&report);
    let backward_gap_bound = backward_gap_on(&report);
    let dichotomy = if a.range().same_as(a.multivalued_part(), crate::subspace::CONTAIN_TOL)? {
        CheckReport::not_applicable("R(A) = A(0)")
    } else {
        dichotomy_on(&report)
    };
    let (constancy, gamma_lower_bound, finishing_gap_bound) = match nu_gate(a, b)? {
        Some(r) => (r.clone(), r.clone(), r),
        None => (constancy_on(&report), gamma_lower_bound_on(&report), gap_bound_on(&report)),
    };
    let verdict = combine(&[
        constancy.verdict,
        one_sided.verdict,
        gamma_lower_bound.verdict,
        dichotomy.verdict,
        finishing_gap_bound.verdict,
        backward_gap_bound.verdict,
    ]);
    Ok(StabilityReport { verdict, constancy, one_sided, gamma_lower_bound, dichotomy, finishing_gap_bound, backward_gap_bound })
}

fn asserted<'a>(report: &'a SweepReport, tally: &mut Tally, inside: impl Fn(&LambdaFlags) -> bool) -> Vec<&'a LambdaRecord> {
    let mut out = Vec::new();
    for rec in &report.records {
        if !inside(&rec.flags) {
            continue;
        }
        if rec.flags.indeterminate {
            tally.excluded += 1;
        } else {
            out.push(rec);
        }
    }
    out
}

pub fn constancy_on(report: &SweepReport) -> CheckReport {
    let mut tally = Tally::new();
    for rec in asserted(report, &mut tally, |f| f.inside_full) {
        let excess = (rec.alpha != report.alpha_a || rec.beta != report.beta_a) as u8 as f64;
        tally.record(
            rec,
            excess,
            &format!("(alpha, beta) = ({}, {}) vs ({}, {})", rec.alpha, rec.beta, report.alpha_a, report.beta_a),
        );
    }
    tally.finish()
}

pub fn one_sided_on(report: &SweepReport) -> CheckReport {
    let mut tally = Tally::new();
    for rec in asserted(report, &mut tally, |f| f.inside_pencil) {
        let excess = rec.alpha as f64 - report.alpha_a as f64;
        tally.record(rec, excess, &format!("alpha = {} > {}", rec.alpha, report.alpha_a));
    }
    tally.finish()
}

pub fn gamma_lower_bound_on(report: &SweepReport) -> CheckReport {
    let mut tally = Tally::new();
    let (s, t) = (report.bound.sigma, report.bound.tau);
    for rec in asserted(report, &mut tally, |f| f.inside_full) {
        if rec.gamma.is_infinite() || report.gamma_a.is_infinite() {
            tally.record(rec, f64::NEG_INFINITY, "");
            continue;
        }
        let lower = report.gamma_a - (3.0 * s + t * report.gamma_a) * rec.lambda.norm();
        tally.record(rec, lower - rec.gamma - BOUND_SLACK, &format!("gamma = {:e} below {lower:e}", rec.gamma));
    }
    tally.finish()
}

pub fn dichotomy_on(report: &SweepReport) -> CheckReport {
    let mut tally = Tally::new();
    for rec in asserted(report, &mut tally, |f| f.inside_pencil) {
        tally.record(rec, rec.flags.degenerate as u8 as f64, "pencil has infinite minimum modulus");
    }
    tally.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationReport {
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// `‖B‖ < γ(A)`.
    pub norm_gate: bool,
    /// Exact `σ` (with `τ = 0`) satisfies `σ < γ(A)`.
    pub relative_gate: bool,
    pub alpha_a: usize,
    pub beta_a: usize,
    pub alpha_sum: usize,
    pub beta_sum: usize,
}

/// Nullity and deficiency of `A + B` do not exceed those of `A` when `B` is
/// small relative to `γ(A)`.
pub fn verify_perturbation(a: &LinearRelation, b: &LinearRelation) -> Result<PerturbationReport> {
    let mut report = PerturbationReport {
        verdict: Verdict::NotApplicable,
        reason: None,
        norm_gate: false,
        relative_gate: false,
        alpha_a: metrics::alpha(a),
        beta_a: metrics::beta(a),
        alpha_sum: 0,
        beta_sum: 0,
    };
    if let Err(e) = metrics::check_standing_hypotheses(a, b) {
        return match e {
            Error::Hypothesis { .. } => Ok(PerturbationReport { reason: Some(e.to_string()), ..report }),
            other => Err(other),
        };
    }
    let gamma_a = metrics::gamma(a);
    report.norm_gate = metrics::norm(b) < gamma_a;
    report.relative_gate = metrics::fit_relative_bound(a, b, 0.0)?.sigma < gamma_a;
    if !report.norm_gate && !report.relative_gate {
        report.reason = Some("B not small relative to gamma(A)".into());
        return Ok(report);
    }
    let sum = a.add(b)?;
    report.alpha_sum = metrics::alpha(&sum);
    report.beta_sum = metrics::beta(&sum);
    let mut audit = Audit::new();
    audit.note_relation(a);
    audit.note_relation(b);
    audit.note_relation(&sum);
    report.verdict = audit.verdict(report.alpha_sum <= report.alpha_a && report.beta_sum <= report.beta_a);
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct AffineWitness {
    pub x0: CVector,
    pub ratio: f64,
    pub required: f64,
    pub delta: f64,
    /// `Pass` when a witness above the required ratio was found,
    /// `Indeterminate` otherwise (the search can only under-report).
    pub verdict: Verdict,
}

/// Searches the coset `x + N` for `x0` maximizing `dist(x0, M)/‖x0‖`, and
/// compares against `(1 − eps)(1 − δ(M,N))/(1 + δ(M,N))`.
pub fn affine_gap_witness(x: &CVector, m: &Subspace, n: &Subspace, eps: f64) -> Result<AffineWitness> {
    if m.ambient() != n.ambient() || x.len() != n.ambient() {
        return Err(Error::AmbientMismatch { left: n.ambient(), right: x.len().min(m.ambient()) });
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0, 1), got {eps}")));
    }
    if n.contains_vector(x, crate::subspace::CONTAIN_TOL)? {
        return Err(Error::VectorInSubspace);
    }
    let delta = m.gap(n)?;
    let required = (1.0 - eps) * (1.0 - delta) / (1.0 + delta);
    let nb = n.basis();
    let q = CMatrix::identity(x.len(), x.len()) - m.projector();
    let ratio_sq = |z: &CVector| {
        let zz = z.norm_squared();
        if zz == 0.0 {
            0.0
        } else {
            (&q * z).norm_squared() / zz
        }
    };

    let k = nb.ncols();
    let mut starts: Vec<CVector> = vec![CVector::zeros(k), -(nb.adjoint() * x)];
    if k > 0 {
        let (_, _, v) = linalg::svd(&(&q * nb));
        for scale in [1.0, 10.0, 100.0] {
            starts.push(v.column(0) * C64::new(scale * x.norm(), 0.0));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0xaff1);
        for _ in 0..8 {
            starts.push(linalg::complex_gaussian_vector(k, &mut rng) * C64::new(x.norm(), 0.0));
        }
    }

    let mut best_z = x.clone();
    let mut best = ratio_sq(x);
    for c0 in starts {
        let mut c = c0;
        let mut z = x + nb * &c;
        let mut value = ratio_sq(&z);
        let mut step = 1.0;
        for _ in 0..200 {
            if k == 0 {
                break;
            }
            let zz = z.norm_squared();
            let grad = nb.adjoint() * (&q * &z - &z * C64::new(value, 0.0)) * C64::new(2.0 / zz, 0.0);
            if grad.norm() < 1e-14 {
                break;
            }
            let mut improved = false;
            while step > 1e-12 {
                let trial_c = &c + &grad * C64::new(step * zz, 0.0);
                let trial_z = x + nb * &trial_c;
                let trial = ratio_sq(&trial_z);
                if trial > value {
                    c = trial_c;
                    z = trial_z;
                    value = trial;
                    step *= 2.0;
                    improved = true;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        if value > best {
            best = value;
            best_z = z;
        }
    }
    let ratio = best.max(0.0).sqrt();
    let verdict = if ratio >= required { Verdict::Pass } else { Verdict::Indeterminate };
    Ok(AffineWitness { x0: best_z, ratio, required, delta, verdict })
}
