//! Randomized property suites behind `linrel verify`.
//!
//! Each trial draws its own instance from a seed mixed out of the run seed,
//! the suite and the trial index, so trials run in parallel and merge in
//! order. Summaries contain no timing and are byte-identical across runs.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chains::{self, Nu};
use crate::error::{Error, Result};
use crate::io::{self, InstanceFile};
use crate::lab::{self, InstanceSpec};
use crate::linalg::{self, c64, CMatrix, CVector, C64, ABS_FLOOR, MARGIN_OK, RANK_TOL, ZERO_BAND};
use crate::metrics::{self, Radii, RelativeBound, INEQ_SLACK};
use crate::relation::LinearRelation;
use crate::subspace::{Subspace, CONTAIN_TOL};
use crate::verdict::{Audit, Verdict, AMBIGUOUS_GAP_HIGH};

pub const SCHEMA: &str = "linrel.verify/1";

/// Subspace pairs drawn per `gap` trial.
pub const GAP_PAIRS_PER_TRIAL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Algebra,
    Duality,
    Chains,
    Perturbation,
    Stability,
    Gap,
}

impl Suite {
    pub const ALL: [Suite; 6] =
        [Suite::Algebra, Suite::Duality, Suite::Chains, Suite::Perturbation, Suite::Stability, Suite::Gap];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Algebra => "algebra",
            Suite::Duality => "duality",
            Suite::Chains => "chains",
            Suite::Perturbation => "perturbation",
            Suite::Stability => "stability",
            Suite::Gap => "gap",
        }
    }

    fn id(self) -> u64 {
        self as u64 + 1
    }

    /// Expands `all` into every suite.
    /// `all`, a single suite name, or a comma-separated list.
    pub fn parse_list(names: &str) -> Result<Vec<Suite>> {
        let mut out = Vec::new();
        for name in names.split(',').map(str::trim) {
            if name == "all" {
                out.extend(Self::ALL);
            } else {
                out.push(name.parse()?);
            }
        }
        out.sort();
        out.dedup();
        Ok(out)
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown suite `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub pass: usize,
    pub not_applicable: usize,
    pub indeterminate: usize,
    pub fail: usize,
}

impl Counts {
    fn add(&mut self, v: Verdict) {
        match v {
            Verdict::Pass => self.pass += 1,
            Verdict::NotApplicable => self.not_applicable += 1,
            Verdict::Indeterminate => self.indeterminate += 1,
            Verdict::Fail => self.fail += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.pass + self.not_applicable + self.indeterminate + self.fail
    }
}

/// Everything needed to rerun one failing trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub suite: Suite,
    pub lemma: String,
    pub trial: u64,
    pub trial_seed: u64,
    pub detail: String,
    pub instance_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<InstanceFile>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub schema: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub trials: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replay: Option<ReplayOf>,
    pub tolerances: BTreeMap<&'static str, f64>,
    pub results: BTreeMap<Suite, BTreeMap<String, Counts>>,
    pub instance_digest: String,
    pub failures: Vec<FailureRecord>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReplayOf {
    pub suite: Suite,
    pub trial: u64,
    pub trial_seed: u64,
}

impl Summary {
    pub fn failed(&self) -> bool {
        !self.failures.is_empty()
    }

    /// Counts for one lemma, summed over nothing if absent.
    pub fn counts(&self, suite: Suite, lemma: &str) -> Counts {
        self.results.get(&suite).and_then(|m| m.get(lemma)).copied().unwrap_or_default()
    }
}

pub fn tolerances() -> BTreeMap<&'static str, f64> {
    BTreeMap::from([
        ("rank_rel_tol", RANK_TOL),
        ("rank_abs_floor", ABS_FLOOR),
        ("contain_tol", CONTAIN_TOL),
        ("ineq_slack", INEQ_SLACK),
        ("bound_slack", lab::BOUND_SLACK),
        ("radius_margin", lab::RADIUS_MARGIN),
        ("margin_ok", MARGIN_OK),
        ("zero_band", ZERO_BAND),
        ("ambiguous_gap_high", AMBIGUOUS_GAP_HIGH),
    ])
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn trial_seed(seed: u64, suite: Suite, trial: u64) -> u64 {
    splitmix(splitmix(seed ^ splitmix(suite.id())) ^ trial)
}

struct Outcome {
    lemma: &'static str,
    verdict: Verdict,
    detail: Option<String>,
    /// Index of the instance current when the outcome was recorded.
    instance: Option<usize>,
}

struct TrialResult {
    outcomes: Vec<Outcome>,
    instances: Vec<InstanceFile>,
    digest: [u8; 32],
}

/// Collects lemma outcomes for one trial. Every check starts from the
/// instance's own audit so ill-conditioned instances come out
/// `Indeterminate` rather than pass or fail.
struct Recorder {
    base: Audit,
    outcomes: Vec<Outcome>,
    instances: Vec<InstanceFile>,
    fingerprint: Vec<String>,
}

impl Recorder {
    fn new() -> Self {
        Self { base: Audit::new(), outcomes: Vec::new(), instances: Vec::new(), fingerprint: Vec::new() }
    }

    /// Makes `(a, b)` the current instance; its audit replaces the base.
    fn note_instance(&mut self, a: &LinearRelation, b: &LinearRelation, spec: Option<InstanceSpec>) -> Result<()> {
        self.base = Audit::new();
        self.base.note_relation(a);
        self.base.note_relation(b);
        let file = InstanceFile::new(a, b, spec)?;
        self.fingerprint.push(io::to_json_string(&file));
        self.instances.push(file);
        Ok(())
    }

    fn note_subspaces(&mut self, subs: &[&Subspace]) {
        let parts: Vec<_> = subs.iter().map(|s| io::SubspaceJson::from_subspace(s)).collect();
        self.fingerprint.push(serde_json::to_string(&parts).expect("subspaces serialize"));
    }

    fn push(&mut self, lemma: &'static str, verdict: Verdict, detail: Option<String>) {
        let instance = self.instances.len().checked_sub(1);
        self.outcomes.push(Outcome { lemma, verdict, detail, instance });
    }

    /// Runs a boolean check; errors are recorded as failures with the message.
    fn check(&mut self, lemma: &'static str, f: impl FnOnce(&mut Audit) -> Result<bool>) {
        let mut audit = self.base;
        match f(&mut audit) {
            Ok(ok) => {
                let v = audit.verdict(ok);
                let detail = (v == Verdict::Fail).then(|| "property violated".to_string());
                self.push(lemma, v, detail);
            }
            Err(e) => self.push(lemma, Verdict::Fail, Some(e.to_string())),
        }
    }

    fn record(&mut self, lemma: &'static str, result: Result<(Verdict, Option<String>)>) {
        match result {
            Ok((v, detail)) => self.push(lemma, v, detail),
            Err(e) => self.push(lemma, Verdict::Fail, Some(e.to_string())),
        }
    }

    fn finish(self) -> TrialResult {
        let mut h = Sha256::new();
        for part in &self.fingerprint {
            h.update(part.as_bytes());
        }
        TrialResult { outcomes: self.outcomes, instances: self.instances, digest: h.finalize().into() }
    }
}

fn run_trial(suite: Suite, seed: u64) -> TrialResult {
    let mut rec = Recorder::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let result = match suite {
        Suite::Algebra => algebra_trial(&mut rec, &mut rng),
        Suite::Duality => duality_trial(&mut rec, &mut rng),
        Suite::Chains => chains_trial(&mut rec, &mut rng),
        Suite::Perturbation => perturbation_trial(&mut rec, &mut rng),
        Suite::Stability => stability_trial(&mut rec, &mut rng, seed),
        Suite::Gap => gap_trial(&mut rec, &mut rng),
    };
    if let Err(e) = result {
        // A generator that cannot reach the well-conditioned regime says
        // nothing about the properties; anything else is a bug.
        let verdict = match e {
            Error::GeneratorMismatch { .. } | Error::InfeasibleSpec(_) => Verdict::Indeterminate,
            _ => Verdict::Fail,
        };
        rec.push("instance", verdict, Some(e.to_string()));
    }
    rec.finish()
}

struct Accumulator {
    results: BTreeMap<Suite, BTreeMap<String, Counts>>,
    hasher: Sha256,
    failures: Vec<FailureRecord>,
}

impl Accumulator {
    fn new() -> Self {
        Self { results: BTreeMap::new(), hasher: Sha256::new(), failures: Vec::new() }
    }

    fn absorb(&mut self, suite: Suite, trial: u64, seed: u64, r: TrialResult) {
        self.hasher.update(r.digest);
        let lemmas = self.results.entry(suite).or_default();
        for o in &r.outcomes {
            lemmas.entry(o.lemma.to_string()).or_default().add(o.verdict);
            if o.verdict == Verdict::Fail {
                self.failures.push(FailureRecord {
                    suite,
                    lemma: o.lemma.to_string(),
                    trial,
                    trial_seed: seed,
                    detail: o.detail.clone().unwrap_or_default(),
                    instance_sha256: hex::encode(r.digest),
                    instance: o.instance.map(|i| r.instances[i].clone()),
                });
            }
        }
    }

    fn finish(self, seed: u64, trials: u64, replay: Option<ReplayOf>) -> Summary {
        Summary {
            schema: SCHEMA,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            trials,
            replay,
            tolerances: tolerances(),
            results: self.results,
            instance_digest: hex::encode(self.hasher.finalize()),
            failures: self.failures,
        }
    }
}

/// Runs `trials` trials of every listed suite.
pub fn run(suites: &[Suite], trials: u64, seed: u64) -> Summary {
    let mut acc = Accumulator::new();
    for &suite in suites {
        let results: Vec<_> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let s = trial_seed(seed, suite, t);
                (t, s, run_trial(suite, s))
            })
            .collect();
        for (t, s, r) in results {
            acc.absorb(suite, t, s, r);
        }
    }
    acc.finish(seed, trials, None)
}

/// Reruns the single trial a failure record points at.
pub fn replay(record: &FailureRecord) -> Summary {
    let mut acc = Accumulator::new();
    acc.absorb(record.suite, record.trial, record.trial_seed, run_trial(record.suite, record.trial_seed));
    let of = ReplayOf { suite: record.suite, trial: record.trial, trial_seed: record.trial_seed };
    acc.finish(record.trial_seed, 1, Some(of))
}

// ---------------------------------------------------------------------------
// helpers

fn random_in(s: &Subspace, rng: &mut ChaCha8Rng) -> CVector {
    let c = linalg::complex_gaussian_vector(s.dim(), rng);
    s.basis() * c
}

fn random_subspace_of(s: &Subspace, rng: &mut ChaCha8Rng) -> Result<Subspace> {
    let k = rng.random_range(0..=s.dim());
    if s.dim() == 0 || k == 0 {
        return Ok(Subspace::zero(s.ambient()));
    }
    let inner = Subspace::random_with(s.dim(), k, rng)?;
    Subspace::span_default(&(s.basis() * inner.basis()))
}

fn random_subspace(ambient: usize, rng: &mut ChaCha8Rng) -> Result<Subspace> {
    let k = rng.random_range(0..=ambient);
    Subspace::random_with(ambient, k, rng)
}

fn random_lambda(rng: &mut ChaCha8Rng, max_modulus: f64) -> C64 {
    let r = rng.random_range(0.05..max_modulus);
    C64::from_polar(r, rng.random_range(0.0..std::f64::consts::TAU))
}

fn same_relation(audit: &mut Audit, s: &LinearRelation, t: &LinearRelation) -> Result<bool> {
    audit.note_relation(s);
    audit.note_relation(t);
    audit.same(s.graph(), t.graph())
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        return a == b;
    }
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

fn from_check(r: &lab::CheckReport) -> (Verdict, Option<String>) {
    let detail = match r.verdict {
        Verdict::Fail => Some(r.failures.join("; ")),
        _ => r.reason.clone(),
    };
    (r.verdict, detail)
}

/// `{(x1, x2) : A(x1) ∩ B(x2) ≠ ∅}` together with a common value, as a
/// subspace of `X ⊕ X ⊕ Y`.
fn intersecting_fibers(a: &LinearRelation, b: &LinearRelation) -> Result<Subspace> {
    let (x, y) = (a.x_dim(), a.y_dim());
    let lift = |t: &LinearRelation, first: bool| -> Result<Subspace> {
        let g = t.graph().basis();
        let k = g.ncols();
        let mut m = CMatrix::zeros(2 * x + y, k + x);
        let (own, free) = if first { (0, x) } else { (x, 0) };
        m.view_mut((own, 0), (x, k)).copy_from(&g.rows(0, x));
        m.view_mut((2 * x, 0), (y, k)).copy_from(&g.rows(x, y));
        m.view_mut((free, k), (x, x)).copy_from(&CMatrix::identity(x, x));
        Subspace::span_default(&m)
    };
    lift(a, true)?.intersect(&lift(b, false)?)
}

fn draw_pair(rng: &mut ChaCha8Rng, max_dim: usize, force_nu: bool) -> Result<(InstanceSpec, LinearRelation, LinearRelation)> {
    let spec = InstanceSpec::random(rng, max_dim, force_nu);
    let (a, b) = lab::generate(&spec)?;
    Ok((spec, a, b))
}

// ---------------------------------------------------------------------------
// algebra: relation calculus identities and operator-part metrics

fn algebra_trial(rec: &mut Recorder, rng: &mut ChaCha8Rng) -> Result<()> {
    // `t` is partial and multivalued, `s` everywhere defined with s(0) ⊆ t(0).
    let (spec, t, s) = draw_pair(rng, 8, false)?;
    rec.note_instance(&t, &s, Some(spec))?;
    let (x, y) = (t.x_dim(), t.y_dim());

    rec.check("fiber_dimension", |_| {
        let g = t.graph().dim();
        Ok(g == t.domain().dim() + t.multivalued_part().dim() && g == t.range().dim() + t.kernel().dim())
    });

    let m_y = random_subspace(y, rng)?;
    rec.check("image_of_preimage", |au| {
        let lhs = t.image(&t.preimage(&m_y)?)?;
        let rhs = m_y.intersect(t.range())?.sum(t.multivalued_part())?;
        au.same(&lhs, &rhs)
    });

    let m_x = random_subspace(x, rng)?;
    rec.check("preimage_of_image", |au| {
        let lhs = t.preimage(&t.image(&m_x)?)?;
        let rhs = m_x.intersect(t.domain())?.sum(t.kernel())?;
        au.same(&lhs, &rhs)
    });

    let n_x = random_subspace_of(t.domain(), rng)?;
    rec.check("image_of_sum", |au| {
        let lhs = t.image(&m_x.sum(&n_x)?)?;
        let rhs = t.image(&m_x)?.sum(&t.image(&n_x)?)?;
        au.same(&lhs, &rhs)
    });

    let xd = random_in(t.domain(), rng);
    rec.check("fiber_is_coset", |au| {
        // The slice of the graph over span{x} is span{(x, y0)} ⊕ ({0} × T(0)).
        let y0 = t.fiber_point(&xd)?;
        let mut over = CMatrix::zeros(x + y, 1 + y);
        over.view_mut((0, 0), (x, 1)).copy_from(&xd);
        over.view_mut((x, 1), (y, y)).copy_from(&CMatrix::identity(y, y));
        let slice = t.graph().intersect(&Subspace::span_default(&over)?)?;
        let mut expect = CMatrix::zeros(x + y, 1 + t.multivalued_part().dim());
        expect.view_mut((0, 0), (x, 1)).copy_from(&xd);
        expect.view_mut((x, 0), (y, 1)).copy_from(&y0);
        expect.view_mut((x, 1), (y, t.multivalued_part().dim())).copy_from(t.multivalued_part().basis());
        au.same(&slice, &Subspace::span_default(&expect)?)
    });

    rec.check("double_inverse", |au| same_relation(au, &t.inverse().inverse(), &t));
    rec.check("double_adjoint", |au| same_relation(au, &t.adjoint().adjoint(), &t));
    rec.check("inverse_swaps_parts", |au| {
        let inv = t.inverse();
        Ok(au.same(inv.domain(), t.range())?
            && au.same(inv.kernel(), t.multivalued_part())?
            && au.same(inv.multivalued_part(), t.kernel())?)
    });

    let lambda = random_lambda(rng, 3.0);
    rec.check("adjoint_of_scalar", |au| {
        same_relation(au, &t.scalar_mul(lambda).adjoint(), &t.adjoint().scalar_mul(lambda))
    });
    rec.check("adjoint_of_sum", |au| {
        let lhs = t.add(&s)?.adjoint();
        let rhs = t.adjoint().add(&s.adjoint())?;
        same_relation(au, &lhs, &rhs)
    });
    rec.check("sum_parts", |au| {
        let sum = t.add(&s)?;
        au.note_relation(&sum);
        let mv = t.multivalued_part().sum(s.multivalued_part())?;
        let dom = t.domain().intersect(s.domain())?;
        Ok(au.same(sum.multivalued_part(), &mv)? && au.same(sum.domain(), &dom)?)
    });

    let pairs = intersecting_fibers(&t, &s)?;
    for _ in 0..2 {
        let w = random_in(&pairs, rng);
        rec.check("intersecting_fibers_differ_in_multivalued_part", |au| {
            // Both halves lie in the domains up to rounding.
            let x1 = t.domain().project(&w.rows(0, x).into_owned());
            let x2 = s.domain().project(&w.rows(x, x).into_owned());
            let diff = t.fiber_point(&x1)? - s.fiber_point(&x2)?;
            let scale = diff.norm().max(w.norm()).max(1.0);
            let d = t.multivalued_part().distance(&diff)? / scale;
            au.note_gap(d);
            Ok(d <= CONTAIN_TOL)
        });
    }

    let nt = metrics::norm(&t);
    rec.check("norm_bounds_values", |_| {
        let v = metrics::relation_norm_at(&t, &xd)?;
        Ok(v <= nt * xd.norm() * (1.0 + INEQ_SLACK) + INEQ_SLACK)
    });
    rec.check("norm_reverse_triangle", |_| {
        // D(t) ⊆ D(s) and s(0) ⊆ t(0).
        let sum = t.add(&s)?;
        let lhs = metrics::relation_norm_at(&sum, &xd)?;
        let rhs = metrics::relation_norm_at(&t, &xd)? - metrics::relation_norm_at(&s, &xd)?;
        Ok(lhs >= rhs - INEQ_SLACK * (1.0 + xd.norm() * (1.0 + nt)))
    });
    rec.check("gamma_inverse_norm", |_| {
        let g = metrics::gamma(&t);
        let part = metrics::OperatorPart::of(&t);
        if g.is_infinite() {
            return Ok(part.matrix_quot.ncols() == 0 || linalg::spectral_norm(&part.matrix_quot) == 0.0);
        }
        let pinv = linalg::pseudo_inverse(&part.matrix_quot, ABS_FLOOR);
        Ok(close(g * linalg::spectral_norm(&pinv), 1.0, 1e-8))
    });
    rec.check("alpha_prime_monotone", |_| {
        let mut last = metrics::alpha(&t);
        if metrics::alpha_prime(&t) != last {
            return Ok(false);
        }
        for eps in [1e-6, 1e-3, 0.1, 1.0, 10.0] {
            let next = metrics::alpha_prime_eps(&t, eps)?;
            if next < last {
                return Ok(false);
            }
            last = next;
        }
        Ok(true)
    });

    let mu = random_lambda(rng, 2.0);
    rec.check("pencil_kernel_is_eigen_set", |au| {
        let p = LinearRelation::pencil(&t, &s, mu)?;
        au.note_relation(&p);
        let allowed = t.multivalued_part().sum(s.multivalued_part())?;
        let residual = |v: &CVector| -> Result<f64> {
            let diff = t.fiber_point(v)? - s.fiber_point(v)? * mu;
            let scale = v.norm().max(ABS_FLOOR);
            Ok(allowed.distance(&diff)? / scale)
        };
        if p.kernel().dim() > 0 {
            let v = random_in(p.kernel(), rng);
            let r = residual(&v)?;
            au.note_gap(r);
            if r > CONTAIN_TOL {
                return Ok(false);
            }
        }
        let off = p.kernel().orth_complement().intersect(t.domain())?;
        if off.dim() > 0 {
            let v = random_in(&off, rng);
            let r = residual(&v)?;
            au.note_gap(r);
            if r <= CONTAIN_TOL {
                return Ok(false);
            }
        }
        Ok(true)
    });
    Ok(())
}

// ---------------------------------------------------------------------------
// duality: adjoints against annihilators and the metrics

fn duality_trial(rec: &mut Recorder, rng: &mut ChaCha8Rng) -> Result<()> {
    let (spec, t, s) = draw_pair(rng, 8, false)?;
    rec.note_instance(&t, &s, Some(spec))?;
    let ta = t.adjoint();

    rec.check("kernel_of_adjoint", |au| au.same(ta.kernel(), &t.range().annihilator()));
    rec.check("multivalued_part_of_adjoint", |au| au.same(ta.multivalued_part(), &t.domain().annihilator()));
    rec.check("kernel_from_adjoint_range", |au| au.same(t.kernel(), &ta.range().pre_annihilator()));
    rec.check("multivalued_part_from_adjoint_domain", |au| {
        au.same(t.multivalued_part(), &ta.domain().pre_annihilator())
    });
    rec.check("adjoint_nullity_is_deficiency", |_| Ok(metrics::alpha(&ta) == metrics::beta(&t)));
    rec.check("adjoint_deficiency_is_nullity", |_| Ok(metrics::beta(&ta) == metrics::alpha(&t)));
    rec.check("beta_prime_is_beta", |_| Ok(metrics::beta_prime(&t) == metrics::beta(&t)));
    rec.check("adjoint_norm", |_| Ok(close(metrics::norm(&ta), metrics::norm(&t), 1e-8)));
    rec.check("adjoint_gamma", |_| Ok(close(metrics::gamma(&ta), metrics::gamma(&t), 1e-8)));
    rec.check("adjoint_multivalued_containment", |au| {
        au.contains(t.adjoint().multivalued_part(), s.adjoint().multivalued_part())
    });
    let lambda = random_lambda(rng, 3.0);
    rec.check("adjoint_of_pencil", |au| {
        let lhs = LinearRelation::pencil(&t, &s, lambda)?.adjoint();
        let rhs = LinearRelation::pencil(&ta, &s.adjoint(), lambda)?;
        same_relation(au, &lhs, &rhs)
    });
    Ok(())
}

// ---------------------------------------------------------------------------
// chains

fn chains_trial(rec: &mut Recorder, rng: &mut ChaCha8Rng) -> Result<()> {
    let force = rng.random_bool(0.5);
    let (spec, a, b) = draw_pair(rng, 6, force)?;
    rec.note_instance(&a, &b, Some(spec))?;
    let x = a.x_dim();
    let report = chains::chain_report(&a, &b, x + 1)?;
    let base = report.audit;

    rec.check("chains_monotone", |au| {
        au.merge(&base);
        let (m, n) = (&report.m_chain, &report.n_chain);
        for k in m.first_index() + 1..=m.last_index() {
            if !au.contains(m.at(k - 1), m.at(k))? {
                return Ok(false);
            }
        }
        for k in n.first_index() + 1..=n.last_index() {
            if !au.contains(n.at(k), n.at(k - 1))? {
                return Ok(false);
            }
        }
        Ok(report.stabilized_at.is_some_and(|s| s <= x + 1))
    });
    rec.check("chains_sandwich", |au| {
        au.merge(&base);
        let (m, n) = (&report.m_chain, &report.n_chain);
        for k in 1..=m.last_index() {
            if !au.contains(m.at(k), b.kernel())? || !au.contains(b.domain(), m.at(k))? {
                return Ok(false);
            }
        }
        for k in n.first_index()..=n.last_index() {
            if !au.contains(n.at(k), a.kernel())? || !au.contains(a.domain(), n.at(k))? {
                return Ok(false);
            }
        }
        Ok(true)
    });
    rec.check("nu_infinite_iff_all_contained", |au| {
        au.merge(&base);
        let all = report.containment_table.iter().flatten().all(|&c| c);
        Ok(all == (report.nu == Nu::Infinite))
    });

    let mut verdicts = Vec::new();
    let mut detail = None;
    for n in 1..=x {
        let r = chains::check_equivalent_conditions(&a, &b, n)?;
        if r.verdict == Verdict::Fail && detail.is_none() {
            detail = Some(format!("n = {n}: conditions {:?}, kappa {:?}", r.conditions, r.kappa));
        }
        verdicts.push(r.verdict);
    }
    rec.push("equivalent_conditions", lab::combine(&verdicts), detail);

    let force = rng.random_bool(0.5);
    let spec = InstanceSpec::random_everywhere_defined(rng, 6, force);
    let (a2, b2) = lab::generate(&spec)?;
    rec.note_instance(&a2, &b2, Some(spec))?;
    rec.record("nu_duality", {
        chains::verify_nu_duality(&a2, &b2).map(|r| {
            let detail = match r.verdict {
                Verdict::Fail => Some(format!("nu = {}, nu(adjoints) = {}", r.nu, r.nu_dual)),
                Verdict::NotApplicable => r.reason.map(str::to_string),
                _ => None,
            };
            (r.verdict, detail)
        })
    });
    Ok(())
}

// ---------------------------------------------------------------------------
// perturbation

fn perturbation_trial(rec: &mut Recorder, rng: &mut ChaCha8Rng) -> Result<()> {
    let (spec, a, b0) = draw_pair(rng, 6, false)?;
    let g = metrics::gamma(&a);
    let nb = metrics::norm(&b0);
    // The first draw keeps ‖B‖ below γ(A); the second spreads ‖B‖/γ(A) over
    // (0.05, 1.5) so the gates also see rejected instances.
    for ratio_max in [0.98, 1.5] {
        let b = if g.is_finite() && nb > 0.0 {
            b0.scalar_mul(c64(rng.random_range(0.05..ratio_max) * g / nb, 0.0))
        } else {
            b0.clone()
        };
        rec.note_instance(&a, &b, Some(spec))?;
        perturbation_checks(rec, rng, &a, &b);
    }
    Ok(())
}

fn perturbation_checks(rec: &mut Recorder, rng: &mut ChaCha8Rng, a: &LinearRelation, b: &LinearRelation) {
    rec.check("exact_relative_bound_holds", |_| {
        let exact = metrics::fit_relative_bound(a, b, 0.0)?;
        Ok(metrics::check_relative_bound(a, b, &exact, 16, 1)?.holds)
    });
    let tau = rng.random_range(0.1..1.0);
    rec.check("heuristic_bound_below_certified", |_| {
        let h = metrics::fit_relative_bound(a, b, tau)?;
        Ok(h.certified_sigma.is_some_and(|c| h.sigma <= c + INEQ_SLACK))
    });

    let base = rec.base;
    match lab::verify_perturbation(a, b) {
        Ok(r) => {
            let verdict = if r.verdict == Verdict::Pass { base.verdict(true) } else { r.verdict };
            let detail = (verdict == Verdict::Fail)
                .then(|| format!("alpha {} -> {}, beta {} -> {}", r.alpha_a, r.alpha_sum, r.beta_a, r.beta_sum));
            for (lemma, gate) in [("small_norm_perturbation", r.norm_gate), ("small_relative_perturbation", r.relative_gate)] {
                if gate {
                    rec.push(lemma, verdict, detail.clone());
                } else {
                    rec.push(lemma, Verdict::NotApplicable, r.reason.clone());
                }
            }
        }
        Err(e) => {
            rec.push("small_norm_perturbation", Verdict::Fail, Some(e.to_string()));
            rec.push("small_relative_perturbation", Verdict::Fail, Some(e.to_string()));
        }
    }
}

// ---------------------------------------------------------------------------
// stability

/// `ν = ∞` families with bounds known exactly.
fn stability_instance(
    rng: &mut ChaCha8Rng,
    family: u64,
) -> Result<(LinearRelation, LinearRelation, RelativeBound, InstanceSpec)> {
    match family {
        0 => {
            let (spec, a, b) = draw_pair(rng, 6, true)?;
            let bound = metrics::fit_relative_bound(&a, &b, 0.0)?;
            Ok((a, b, bound, spec))
        }
        1 => {
            let (spec, a, _) = draw_pair(rng, 6, false)?;
            Ok((a.clone(), a, RelativeBound::supplied(0.0, 1.0)?, spec))
        }
        _ => {
            // B = A + C with C vanishing on N(A): ‖Bx‖ ≤ ‖C|D(A)‖‖x‖ + ‖Ax‖.
            let (spec, a, _) = draw_pair(rng, 6, false)?;
            // Factoring through N(A)^⊥ keeps C exactly zero when N(A) = X.
            let off = a.kernel().orth_complement();
            let mut c = linalg::complex_gaussian(a.y_dim(), off.dim(), rng) * off.basis().adjoint();
            let n = linalg::spectral_norm(&c);
            if n > 0.0 {
                c *= c64(rng.random_range(0.1..1.0) / n, 0.0);
            }
            let sigma = linalg::spectral_norm(&(&c * a.domain().basis()));
            let b = a.add(&LinearRelation::from_matrix(&c))?;
            Ok((a, b, RelativeBound::supplied(sigma, 1.0)?, spec))
        }
    }
}

/// Dense near the full radius, sparser out to the pencil radius.
pub fn stability_grid(gamma_a: f64, bound: &RelativeBound) -> Vec<C64> {
    let radii = Radii::new(gamma_a, bound);
    let mut grid = lab::default_grid(radii.full, 10, 8);
    if radii.pencil > radii.full {
        grid.extend(lab::default_grid(radii.pencil, 4, 8).into_iter().skip(1));
    }
    grid
}

fn stability_trial(rec: &mut Recorder, rng: &mut ChaCha8Rng, seed: u64) -> Result<()> {
    let (a, b, bound, spec) = stability_instance(rng, seed % 3)?;
    rec.note_instance(&a, &b, Some(spec))?;
    let grid = stability_grid(metrics::gamma(&a), &bound);
    let r = lab::verify_stability(&a, &b, &bound, &grid)?;
    for (lemma, check) in [
        ("nullity_deficiency_constancy", &r.constancy),
        ("one_sided_nullity", &r.one_sided),
        ("minimum_modulus_lower_bound", &r.gamma_lower_bound),
        ("degenerate_dichotomy", &r.dichotomy),
        ("finishing_gap_bound", &r.finishing_gap_bound),
        ("backward_gap_bound", &r.backward_gap_bound),
    ] {
        let (v, d) = from_check(check);
        rec.push(lemma, v, d);
    }

    // A generic pair for the checks that need no `ν` gate.
    let (spec, a, b) = draw_pair(rng, 6, false)?;
    rec.note_instance(&a, &b, Some(spec))?;
    let bound = metrics::fit_relative_bound(&a, &b, 0.0)?;
    let radius = Radii::new(metrics::gamma(&a), &bound).pencil;
    let r = lab::verify_stability(&a, &b, &bound, &lab::default_grid(radius, 4, 8))?;
    for (lemma, check) in [
        ("one_sided_nullity", &r.one_sided),
        ("degenerate_dichotomy", &r.dichotomy),
        ("backward_gap_bound", &r.backward_gap_bound),
    ] {
        let (v, d) = from_check(check);
        rec.push(lemma, v, d);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// gap

/// A pair that is often close: `N` perturbs `M`, a subspace of it, or a
/// superspace of it. Independent draws are nearly always at gap 1.
fn gap_pair(rng: &mut ChaCha8Rng) -> Result<(Subspace, Subspace)> {
    let n = rng.random_range(1..=8);
    let m = Subspace::random_with(n, rng.random_range(0..=n), rng)?;
    let mode = rng.random_range(0..4);
    if mode == 0 || m.dim() == 0 {
        return Ok((m, random_subspace(n, rng)?));
    }
    let eps = 10f64.powf(rng.random_range(-4.0..0.3));
    let k = m.dim();
    let keep = match mode {
        1 => k,
        2 => rng.random_range(0..k),
        _ => k,
    };
    let extra = if mode == 3 { rng.random_range(0..=n - k) } else { 0 };
    let mut cols = CMatrix::zeros(n, keep + extra);
    if keep > 0 {
        let q = m.basis().columns(0, keep) + linalg::complex_gaussian(n, keep, rng) * c64(eps, 0.0);
        cols.view_mut((0, 0), (n, keep)).copy_from(&q);
    }
    if extra > 0 {
        cols.view_mut((0, keep), (n, extra)).copy_from(&linalg::complex_gaussian(n, extra, rng));
    }
    Ok((m, Subspace::span_default(&cols)?))
}

fn gap_trial(rec: &mut Recorder, rng: &mut ChaCha8Rng) -> Result<()> {
    for _ in 0..GAP_PAIRS_PER_TRIAL {
        let (m, n) = gap_pair(rng)?;
        rec.note_subspaces(&[&m, &n]);
        for (p, q) in [(&m, &n), (&n, &m)] {
            rec.check("gap_below_one_bounds_dimension", |au| {
                au.note_subspace(p);
                au.note_subspace(q);
                let d = p.gap(q)?;
                Ok(d >= 1.0 - AMBIGUOUS_GAP_HIGH || p.dim() <= q.dim())
            });
        }
        rec.check("gap_bounds_distances", |au| {
            au.note_subspace(&m);
            au.note_subspace(&n);
            let d = m.gap(&n)?;
            if !(0.0..=1.0 + INEQ_SLACK).contains(&d) {
                return Ok(false);
            }
            if m.dim() == 0 {
                return Ok(d == 0.0);
            }
            let u = random_in(&m, rng);
            Ok(n.distance(&u)? <= (d + INEQ_SLACK) * u.norm())
        });
        rec.check("gap_of_subspace_is_zero", |au| {
            let inner = random_subspace_of(&m, rng)?;
            let d = inner.gap(&m)?;
            au.note_gap(d);
            Ok(d <= CONTAIN_TOL)
        });
        let ambient = m.ambient();
        let x = linalg::complex_gaussian_vector(ambient, rng);
        rec.record("affine_gap_witness", {
            if n.distance(&x)? <= 1e-3 * x.norm() {
                Ok((Verdict::NotApplicable, Some("x lies in N".into())))
            } else {
                lab::affine_gap_witness(&x, &m, &n, 0.1).map(|w| (w.verdict, None))
            }
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trial_seeds_differ_by_suite_and_trial() {
        let a = trial_seed(1, Suite::Algebra, 0);
        assert_ne!(a, trial_seed(1, Suite::Gap, 0));
        assert_ne!(a, trial_seed(1, Suite::Algebra, 1));
        assert_ne!(a, trial_seed(2, Suite::Algebra, 0));
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert_eq!(Suite::parse_list("all").unwrap().len(), 6);
        assert!("bogus".parse::<Suite>().is_err());
    }

    #[test]
    fn intersecting_fibers_example() {
        // A = diag(1, 0), B = 0: pairs with A(x1) ∋ 0 are x1 ∈ span{e2}.
        let a = LinearRelation::from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let b = LinearRelation::from_real_rows(&[&[0.0, 0.0], &[0.0, 0.0]]);
        let w = intersecting_fibers(&a, &b).unwrap();
        assert_eq!(w.dim(), 3);
    }

    #[test]
    fn small_runs_are_clean_and_deterministic() {
        let s1 = run(&Suite::ALL, 4, 7);
        let s2 = run(&Suite::ALL, 4, 7);
        assert_eq!(io::to_json_string(&s1), io::to_json_string(&s2));
        let brief: Vec<_> = s1.failures.iter().map(|f| (f.suite, &f.lemma, &f.detail)).collect();
        assert!(!s1.failed(), "{brief:?}");
    }

    #[test]
    fn replay_reproduces_trial() {
        let seed = trial_seed(3, Suite::Duality, 2);
        let rec = FailureRecord {
            suite: Suite::Duality,
            lemma: "kernel_of_adjoint".into(),
            trial: 2,
            trial_seed: seed,
            detail: String::new(),
            instance_sha256: String::new(),
            instance: None,
        };
        let a = replay(&rec);
        let b = replay(&rec);
        assert_eq!(a.instance_digest, b.instance_digest);
        assert_eq!(a.counts(Suite::Duality, "kernel_of_adjoint").total(), 1);
    }
}
