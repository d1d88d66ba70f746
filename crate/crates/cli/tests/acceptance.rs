//! Acceptance criteria 1–8. Prints one line per criterion and fails if any
//! criterion fails.
//!
//! Criteria 1, 2, 4, 5, 6 and 8 read the summary of the reproducibility run;
//! criteria 3 and 7 compare the library against brute-force oracles written
//! here with nothing but QR factorizations and sampling.

use std::collections::BTreeMap;
use std::io::Write;
use std::process::Command;
use std::time::{Duration, Instant};

use linrel::{c64, CMatrix, CVector, LinearRelation, Nu, Subspace, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const TRIALS: u64 = 200;

struct Line {
    ok: bool,
    detail: String,
}

fn line(ok: bool, detail: impl Into<String>) -> Line {
    Line { ok, detail: detail.into() }
}

// --- verify runs -------------------------------------------------------------

struct VerifyRun {
    code: i32,
    stdout: Vec<u8>,
    elapsed: Duration,
}

fn verify_all() -> VerifyRun {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_linrel"))
        .args(["verify", "--suite", "all", "--trials", &TRIALS.to_string(), "--seed", "1"])
        .output()
        .expect("binary runs");
    VerifyRun { code: out.status.code().unwrap_or(-1), stdout: out.stdout, elapsed: start.elapsed() }
}

#[derive(Debug, Default, Clone, Copy)]
struct Counts {
    pass: u64,
    not_applicable: u64,
    indeterminate: u64,
    fail: u64,
}

fn counts(summary: &Value, suite: &str, lemma: &str) -> Counts {
    let c = &summary["results"][suite][lemma];
    let get = |k: &str| c[k].as_u64().unwrap_or(0);
    Counts { pass: get("pass"), not_applicable: get("not_applicable"), indeterminate: get("indeterminate"), fail: get("fail") }
}

/// Every listed lemma passed at least `min_pass` times with no failures.
fn lemmas_hold(summary: &Value, suite: &str, lemmas: &[&str], min_pass: u64) -> (bool, Vec<String>) {
    let mut ok = true;
    let mut notes = Vec::new();
    for &l in lemmas {
        let c = counts(summary, suite, l);
        if c.fail > 0 || c.pass < min_pass {
            ok = false;
            notes.push(format!("{l}: {c:?}"));
        }
    }
    (ok, notes)
}

fn criterion_1(summary: &Value) -> Line {
    let lemmas = [
        "kernel_of_adjoint",
        "multivalued_part_of_adjoint",
        "kernel_from_adjoint_range",
        "multivalued_part_from_adjoint_domain",
        "adjoint_nullity_is_deficiency",
        "adjoint_norm",
        "adjoint_gamma",
    ];
    let (ok, notes) = lemmas_hold(summary, "duality", &lemmas, TRIALS);
    line(ok, format!("duality identities on {TRIALS} relations {}", notes.join("; ")))
}

fn criterion_2(summary: &Value) -> Line {
    let lemmas = [
        "image_of_preimage",
        "preimage_of_image",
        "fiber_dimension",
        "fiber_is_coset",
        "double_adjoint",
        "double_inverse",
        "adjoint_of_sum",
    ];
    let (ok, notes) = lemmas_hold(summary, "algebra", &lemmas, TRIALS);
    let total_fail: u64 = summary["results"]["algebra"]
        .as_object()
        .map(|m| m.values().map(|c| c["fail"].as_u64().unwrap_or(0)).sum())
        .unwrap_or(1);
    line(ok && total_fail == 0, format!("algebra suite, {total_fail} failures {}", notes.join("; ")))
}

fn criterion_4(summary: &Value) -> Line {
    let (ok, notes) = lemmas_hold(summary, "chains", &["equivalent_conditions", "nu_duality"], TRIALS);
    let diag = LinearRelation::from_real_rows(&[&[0.0, 0.0], &[0.0, 1.0]]);
    let nu_diag = linrel::chains::nu(&diag, &LinearRelation::identity(2)).unwrap();
    let nu_same = linrel::chains::nu(&diag, &diag).unwrap();
    let worked = nu_diag == Nu::Finite(1) && nu_same == Nu::Infinite;
    line(
        ok && worked,
        format!("chain conditions and nu duality on {TRIALS} instances; nu(diag(0,1):I)={nu_diag}, nu(A:A)={nu_same} {}", notes.join("; ")),
    )
}

fn criterion_5(summary: &Value) -> Line {
    let lemmas = ["small_norm_perturbation", "small_relative_perturbation"];
    let (ok, notes) = lemmas_hold(summary, "perturbation", &lemmas, TRIALS);
    let rates: Vec<String> = lemmas
        .iter()
        .map(|l| {
            let c = counts(summary, "perturbation", l);
            let n = c.pass + c.not_applicable + c.indeterminate + c.fail;
            format!("{l} {}/{} applicable, not-applicable rate {:.3}", c.pass + c.fail, n, c.not_applicable as f64 / n.max(1) as f64)
        })
        .collect();
    line(ok, format!("{} {}", rates.join(", "), notes.join("; ")))
}

fn criterion_6(summary: &Value) -> Line {
    let lemmas = ["nullity_deficiency_constancy", "finishing_gap_bound", "minimum_modulus_lower_bound"];
    let (ok, notes) = lemmas_hold(summary, "stability", &lemmas, TRIALS);

    // A = B = diag(0,1) with τ = 1, σ = 0: the pencil radius is 1.
    let a = LinearRelation::from_real_rows(&[&[0.0, 0.0], &[0.0, 1.0]]);
    let bound = linrel::metrics::RelativeBound::supplied(0.0, 1.0).unwrap();
    let grid = linrel::lab::default_grid(1.0, 12, 8);
    let max_modulus = grid.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let report = linrel::lab::sweep(&a, &a, &bound, &grid).unwrap();
    let constant = report.records.iter().all(|r| r.alpha == 1 && r.beta == 1);
    let worked = constant && (max_modulus - 0.999).abs() < 1e-12 && report.records.len() == 1 + 12 * 8;
    line(
        ok && worked,
        format!(
            "constancy, finishing gap and gamma bounds on {TRIALS} nu=inf instances; diag(0,1) pencil alpha=beta=1 on {} points up to |lambda|={max_modulus} {}",
            report.records.len(),
            notes.join("; ")
        ),
    )
}

// --- oracle helpers ----------------------------------------------------------

/// Orthonormal basis of the column span of a full-rank matrix, by QR.
fn orthonormal(m: &CMatrix) -> CMatrix {
    if m.ncols() == 0 {
        return CMatrix::zeros(m.nrows(), 0);
    }
    let q = m.clone().qr().q();
    let err = (q.adjoint() * &q - CMatrix::identity(m.ncols(), m.ncols())).norm();
    assert!(err < 1e-12, "QR lost orthonormality: {err}");
    q
}

fn residual_norm(q: &CMatrix, v: &CVector) -> f64 {
    (v - q * (q.adjoint() * v)).norm()
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    linrel::linalg::complex_gaussian(rows, cols, rng)
}

// --- criterion 3: gap ---------------------------------------------------------

/// `sup` over unit `x ∈ M` of `dist(x, N)` by dense sampling of the unit
/// sphere of `M` (complex dimension ≤ 2) followed by local grid refinement.
fn sampled_gap(qm: &CMatrix, qn: &CMatrix) -> f64 {
    let f = |theta: f64, phi: f64| -> f64 {
        let x = match qm.ncols() {
            1 => qm.column(0).into_owned(),
            _ => qm.column(0) * c64(theta.cos(), 0.0) + qm.column(1) * C64::from_polar(theta.sin(), phi),
        };
        residual_norm(qn, &x)
    };
    match qm.ncols() {
        0 => return 0.0,
        1 => return f(0.0, 0.0),
        2 => {}
        k => panic!("sampling oracle handles dim M <= 2, got {k}"),
    }
    let (nt, np) = (64, 128);
    let (mut best, mut bt, mut bp) = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..=nt {
        let theta = std::f64::consts::FRAC_PI_2 * i as f64 / nt as f64;
        for j in 0..np {
            let phi = std::f64::consts::TAU * j as f64 / np as f64;
            let v = f(theta, phi);
            if v > best {
                (best, bt, bp) = (v, theta, phi);
            }
        }
    }
    let (mut ht, mut hp) = (std::f64::consts::FRAC_PI_2 / nt as f64, std::f64::consts::TAU / np as f64);
    while ht > 1e-10 {
        let (ct, cp) = (bt, bp);
        for i in -4..=4 {
            for j in -4..=4 {
                let theta = (ct + i as f64 * ht / 4.0).clamp(0.0, std::f64::consts::FRAC_PI_2);
                let phi = cp + j as f64 * hp / 4.0;
                let v = f(theta, phi);
                if v > best {
                    (best, bt, bp) = (v, theta, phi);
                }
            }
        }
        ht /= 2.0;
        hp /= 2.0;
    }
    best.min(1.0)
}

/// `log_scale` is the range of log10 of the perturbation size for near pairs.
fn random_pair(rng: &mut ChaCha8Rng, max_ambient: usize, max_dim_m: usize, log_scale: (f64, f64)) -> (CMatrix, CMatrix) {
    let n = rng.random_range(1..=max_ambient);
    let dm = rng.random_range(0..=max_dim_m.min(n));
    let dn = rng.random_range(0..=n);
    let m_raw = gaussian(n, dm, rng);
    let n_raw = match rng.random_range(0..3) {
        // N near M, padded with extra directions when there is room.
        0 if dn >= dm => {
            let scale = 10f64.powf(rng.random_range(log_scale.0..log_scale.1));
            let mut near = CMatrix::zeros(n, dn);
            near.columns_mut(0, dm).copy_from(&(&m_raw + gaussian(n, dm, rng) * c64(scale, 0.0)));
            near.columns_mut(dm, dn - dm).copy_from(&gaussian(n, dn - dm, rng));
            near
        }
        // N inside M's neighbourhood but smaller.
        1 if dn <= dm && dn > 0 => {
            let scale = 10f64.powf(rng.random_range(log_scale.0..log_scale.1));
            &m_raw * gaussian(dm, dn, rng) + gaussian(n, dn, rng) * c64(scale, 0.0)
        }
        _ => gaussian(n, dn, rng),
    };
    (m_raw, n_raw)
}

fn span(raw: &CMatrix) -> Subspace {
    Subspace::span_default(raw).unwrap()
}

fn criterion_3(summary: &Value) -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6a70);
    // Dimension bound for small gaps, on 500 independently drawn pairs.
    let (mut applicable, mut violations) = (0, 0);
    for _ in 0..500 {
        let (m_raw, n_raw) = random_pair(&mut rng, 8, 8, (-6.0, 0.0));
        let (m, n) = (span(&m_raw), span(&n_raw));
        let d = m.gap(&n).unwrap();
        if d < 1.0 - 1e-6 {
            applicable += 1;
            if m.dim() > n.dim() {
                violations += 1;
            }
        }
    }
    let suite = counts(summary, "gap", "gap_below_one_bounds_dimension");

    // Gap formula against dense sampling.
    let mut worst: f64 = 0.0;
    let mut spread = Vec::new();
    for _ in 0..50 {
        let (m_raw, n_raw) = random_pair(&mut rng, 4, 2, (-2.0, 0.0));
        let lib = span(&m_raw).gap(&span(&n_raw)).unwrap();
        let oracle = sampled_gap(&orthonormal(&m_raw), &orthonormal(&n_raw));
        worst = worst.max((lib - oracle).abs());
        spread.push(oracle);
    }
    let interior = spread.iter().filter(|g| **g > 1e-3 && **g < 1.0 - 1e-3).count();
    let ok = violations == 0 && applicable > 0 && suite.fail == 0 && worst <= 1e-6 && interior >= 10;
    line(
        ok,
        format!(
            "dimension bound: {violations} violations in 500 pairs ({applicable} with gap < 1), suite {}/{} pass; sampled gap max error {worst:.2e} on 50 pairs ({interior} with gap strictly inside (0,1))",
            suite.pass,
            suite.pass + suite.fail + suite.indeterminate + suite.not_applicable
        ),
    )
}

// --- criterion 7: approximate nullity ------------------------------------------

/// A relation assembled from explicit parts: domain `span(dom)`, action
/// `x ↦ op·x + span(mv)`.
struct Parts {
    dom: CMatrix,
    op: CMatrix,
    mv: CMatrix,
}

impl Parts {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let x = rng.random_range(1..=4usize);
        let y = rng.random_range(1..=4usize);
        let d = rng.random_range(1..=x.min(3));
        let m = rng.random_range(0..y);
        let dom = gaussian(x, d, rng);
        let rank = rng.random_range(0..=d.min(y));
        let scales = [1e-5, 1e-3, 0.03, 0.3, 1.0, 4.0];
        let mut inner = CMatrix::zeros(rank, x);
        for i in 0..rank {
            let s = scales[rng.random_range(0..scales.len())];
            inner.row_mut(i).copy_from(&(gaussian(1, x, rng) * c64(s, 0.0)));
        }
        let op = gaussian(y, rank, rng) * inner;
        let mv = gaussian(y, m, rng);
        Self { dom, op, mv }
    }

    fn relation(&self) -> LinearRelation {
        let (x, y) = (self.op.ncols(), self.op.nrows());
        let (d, m) = (self.dom.ncols(), self.mv.ncols());
        let mut g = CMatrix::zeros(x + y, d + m);
        g.view_mut((0, 0), (x, d)).copy_from(&self.dom);
        g.view_mut((x, 0), (y, d)).copy_from(&(&self.op * &self.dom));
        g.view_mut((x, d), (y, m)).copy_from(&self.mv);
        LinearRelation::from_graph(span(&g), x, y).unwrap()
    }

    /// Hermitian form of `‖Tx‖²` in an orthonormal basis of the domain.
    fn form(&self) -> CMatrix {
        let qd = orthonormal(&self.dom);
        let qm = orthonormal(&self.mv);
        let values = &self.op * &qd;
        let quotient = &values - &qm * (qm.adjoint() * &values);
        quotient.adjoint() * quotient
    }
}

/// Largest eigenvalue of a small positive semidefinite matrix, by power
/// iteration from several starts.
fn top_eigenvalue(h: &CMatrix) -> f64 {
    let k = h.nrows();
    let mut best: f64 = 0.0;
    for start in 0..k {
        let mut v = CVector::from_fn(k, |i, _| c64(1.0 + (i == start) as u8 as f64 * 3.0, 0.1 * i as f64));
        for _ in 0..300 {
            let w = h * &v;
            let n = w.norm();
            if n == 0.0 {
                break;
            }
            v = w / c64(n, 0.0);
        }
        let v = &v / c64(v.norm(), 0.0);
        best = best.max((v.adjoint() * h * &v)[(0, 0)].re);
    }
    best
}

/// `min` over `k`-dimensional subspaces `V` of `max_{x ∈ V} ‖Tx‖²/‖x‖²`,
/// estimated by random subspaces followed by random-walk descent.
fn minmax(h: &CMatrix, k: usize, rng: &mut ChaCha8Rng) -> f64 {
    let d = h.nrows();
    if k == 0 {
        return 0.0;
    }
    let value = |w: &CMatrix| {
        let q = orthonormal(w);
        top_eigenvalue(&(q.adjoint() * h * &q))
    };
    let mut best_w = gaussian(d, k, rng);
    let mut best = value(&best_w);
    for _ in 0..200 {
        let w = gaussian(d, k, rng);
        let v = value(&w);
        if v < best {
            (best, best_w) = (v, w);
        }
    }
    let mut step = 0.5;
    for _ in 0..600 {
        let w = &best_w + gaussian(d, k, rng) * c64(step * best_w.norm(), 0.0);
        let v = value(&w);
        if v < best {
            (best, best_w) = (v, w);
        } else {
            step = (step * 0.97).max(1e-6);
        }
    }
    best
}

fn criterion_7() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(0xa1fa);
    let candidates = [1e-4, 3e-3, 2e-2, 0.1, 0.5, 2.0, 10.0];
    let (mut instances, mut comparisons, mut mismatches) = (0, 0, Vec::new());
    let mut seen = BTreeMap::new();
    while instances < 50 {
        let parts = Parts::random(&mut rng);
        let t = parts.relation();
        let sv: Vec<f64> = linrel::metrics::OperatorPart::of(&t).quot_singular_values().to_vec();
        let eps: Vec<f64> = candidates
            .iter()
            .copied()
            .filter(|e| sv.iter().all(|s| (e - s).abs() >= 0.2 * s.max(*e)))
            .collect();
        if eps.is_empty() {
            continue;
        }
        instances += 1;
        let h = parts.form();
        let d = h.nrows();
        let levels: Vec<f64> = (0..=d).map(|k| minmax(&h, k, &mut rng)).collect();
        for e in eps {
            let oracle = (0..=d).filter(|&k| levels[k] <= e * e).max().unwrap_or(0);
            let lib = linrel::metrics::alpha_prime_eps(&t, e).unwrap();
            comparisons += 1;
            *seen.entry(oracle).or_insert(0) += 1;
            if lib != oracle {
                mismatches.push(format!("eps={e}: library {lib}, oracle {oracle}, sv {sv:?}"));
            }
        }
    }
    line(
        mismatches.is_empty(),
        format!(
            "alpha_prime_eps vs min-max oracle: {} mismatches in {comparisons} comparisons on {instances} instances, oracle values {seen:?} {}",
            mismatches.len(),
            mismatches.join("; ")
        ),
    )
}

// --- criterion 8 ----------------------------------------------------------------

fn criterion_8(first: &VerifyRun, second: &VerifyRun) -> Line {
    let same = first.stdout == second.stdout;
    let ok = first.code == 0 && second.code == 0 && same && !first.stdout.is_empty();
    line(
        ok,
        format!(
            "exit codes {} and {}, summaries byte-identical: {same}, run times {:.1}s and {:.1}s",
            first.code,
            second.code,
            first.elapsed.as_secs_f64(),
            second.elapsed.as_secs_f64()
        ),
    )
}

#[test]
fn acceptance() {
    let first = verify_all();
    let second = verify_all();
    let summary: Value = serde_json::from_slice(&first.stdout).expect("summary is JSON");

    let lines = [
        criterion_1(&summary),
        criterion_2(&summary),
        criterion_3(&summary),
        criterion_4(&summary),
        criterion_5(&summary),
        criterion_6(&summary),
        criterion_7(),
        criterion_8(&first, &second),
    ];
    // Straight to the stderr handle: the test harness captures print! output.
    let mut err = std::io::stderr().lock();
    for (i, l) in lines.iter().enumerate() {
        writeln!(err, "criterion {}: {} {}", i + 1, if l.ok { "PASS" } else { "FAIL" }, l.detail.trim_end()).unwrap();
    }
    let runtime_ok = first.elapsed < Duration::from_secs(60);
    writeln!(err, "verify --suite all runtime {:.1}s (target < 60s)", first.elapsed.as_secs_f64()).unwrap();
    drop(err);
    let failed: Vec<usize> = lines.iter().enumerate().filter(|(_, l)| !l.ok).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
    assert!(runtime_ok, "verify run exceeded 60 s");
}
