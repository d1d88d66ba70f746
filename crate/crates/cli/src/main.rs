//! `linrel`: generate instances, analyze them, sweep pencils and run the
//! property suites.
//!
//! Exit codes: 0 when every checked conclusion holds, 1 when some conclusion
//! failed (a falsification candidate), 2 for unusable input.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use linrel::chains::{self, ChainSummary, EquivalenceReport, NuDualityReport};
use linrel::io::{self, InstanceFile};
use linrel::lab::{self, InstanceSpec, StabilityReport, SweepReport};
use linrel::metrics::{self, Radii, RelativeBound};
use linrel::suites::{self, FailureRecord, Suite};
use linrel::{Audit, LinearRelation, Nu, Verdict};

#[derive(Parser)]
#[command(name = "linrel", version, about = "Linear relations: instances, metrics, pencil sweeps and property suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded (A, B) instance with prescribed structure for A.
    Gen(GenArgs),
    /// Indices, minimum modulus, norms, duality checks and radii of an instance.
    Analyze(AnalyzeArgs),
    /// Evaluate A − λB over a grid of λ; CSV rows plus a JSON verdict report.
    Sweep(SweepArgs),
    /// The M and N chains, ν(A:B) and the chain-condition checks.
    Chains(ChainsArgs),
    /// Run property suites over generated instances.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct GenArgs {
    /// JSON InstanceSpec; replaces the inline structure flags.
    #[arg(long, conflicts_with_all = ["xdim", "ydim", "alpha", "beta"])]
    spec: Option<PathBuf>,
    #[arg(long, required_unless_present = "spec")]
    xdim: Option<usize>,
    #[arg(long, required_unless_present = "spec")]
    ydim: Option<usize>,
    #[arg(long, required_unless_present = "spec")]
    alpha: Option<usize>,
    #[arg(long, required_unless_present = "spec")]
    beta: Option<usize>,
    #[arg(long, default_value_t = 0)]
    mv_dim: usize,
    #[arg(long, default_value_t = 0)]
    dom_codim: usize,
    /// Make B vanish on N(A), which forces ν(A:B) = ∞.
    #[arg(long)]
    force_nu_infinite: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (stdout when absent).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BoundArgs {
    /// Use the supplied constant σ in ‖Bx‖ ≤ σ‖x‖ + τ‖Ax‖ (requires --tau).
    #[arg(long, requires = "tau")]
    sigma: Option<f64>,
    /// τ for the bound; without --sigma, σ is fitted (exactly when τ = 0).
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Args)]
struct AnalyzeArgs {
    input: PathBuf,
    /// Thresholds for α′_ε.
    #[arg(long, value_delimiter = ',', default_values_t = [1e-6, 1e-3, 1e-1])]
    eps: Vec<f64>,
    #[command(flatten)]
    bound: BoundArgs,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    input: PathBuf,
    #[command(flatten)]
    bound: BoundArgs,
    /// Moduli per phase (0 gives an empty grid and a header-only CSV).
    #[arg(long, default_value_t = 12)]
    grid_points: usize,
    #[arg(long, default_value_t = 8)]
    phases: usize,
    /// Largest modulus is 0.999 × this; defaults to the pencil radius.
    #[arg(long)]
    radius: Option<f64>,
    /// CSV output (stdout when absent).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// JSON report with radii and stability verdicts.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct ChainsArgs {
    input: PathBuf,
    /// Chain length cap; defaults to dim X + 1.
    #[arg(long)]
    max_n: Option<usize>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// algebra, duality, chains, perturbation, stability, gap or all.
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = 200)]
    trials: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Rerun the single trial recorded in a failure file.
    #[arg(long, conflicts_with_all = ["suite", "trials", "seed"])]
    replay: Option<PathBuf>,
    /// Summary output (stdout when absent).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Write each failure as a standalone replay file here.
    #[arg(long)]
    failures_dir: Option<PathBuf>,
}

/// How a command ended when it did not hit an input error.
enum Outcome {
    Holds,
    Falsified,
}

struct InputError(String);

impl<E: std::fmt::Display> From<E> for InputError {
    fn from(e: E) -> Self {
        InputError(e.to_string())
    }
}

type CmdResult = Result<Outcome, InputError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Chains(a) => cmd_chains(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(Outcome::Holds) => ExitCode::SUCCESS,
        Ok(Outcome::Falsified) => ExitCode::from(1),
        Err(InputError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

/// Common report header: everything needed to reproduce the report.
#[derive(Serialize)]
struct Header {
    tool: &'static str,
    version: &'static str,
    schema: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    tolerances: BTreeMap<&'static str, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    instance_sha256: Option<String>,
}

impl Header {
    fn new(schema: &'static str, seed: Option<u64>, instance: Option<&InstanceFile>) -> Self {
        Self {
            tool: "linrel",
            version: env!("CARGO_PKG_VERSION"),
            schema,
            seed,
            tolerances: suites::tolerances(),
            instance_sha256: instance.map(io::instance_sha256),
        }
    }
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), InputError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| InputError(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, InputError> {
    let text = fs::read_to_string(path).map_err(|e| InputError(format!("cannot read {}: {e}", path.display())))?;
    io::from_json_str(&text).map_err(|e| InputError(format!("{}: {e}", path.display())))
}

fn load_instance(path: &Path) -> Result<(InstanceFile, LinearRelation, LinearRelation), InputError> {
    let file: InstanceFile = read_json(path)?;
    let (a, b) = file.relations().map_err(|e| InputError(format!("{}: {e}", path.display())))?;
    Ok((file, a, b))
}

// --- gen -------------------------------------------------------------------

fn cmd_gen(args: GenArgs) -> CmdResult {
    let spec = match &args.spec {
        Some(path) => read_json::<InstanceSpec>(path)?,
        None => InstanceSpec {
            x_dim: args.xdim.unwrap_or_default(),
            y_dim: args.ydim.unwrap_or_default(),
            alpha: args.alpha.unwrap_or_default(),
            beta: args.beta.unwrap_or_default(),
            mv_dim: args.mv_dim,
            dom_codim: args.dom_codim,
            force_nu_infinite: args.force_nu_infinite,
            seed: args.seed,
        },
    };
    let (a, b) = lab::generate(&spec)?;
    let file = InstanceFile::new(&a, &b, Some(spec))?;
    write_out(args.output.as_deref(), &io::to_json_string(&file))?;
    Ok(Outcome::Holds)
}

// --- bounds ----------------------------------------------------------------

fn resolve_bound(args: &BoundArgs, a: &LinearRelation, b: &LinearRelation) -> Result<RelativeBound, InputError> {
    match (args.sigma, args.tau) {
        (Some(sigma), Some(tau)) => Ok(RelativeBound::supplied(sigma, tau)?),
        (None, tau) => Ok(metrics::fit_relative_bound(a, b, tau.unwrap_or(0.0))?),
        (Some(_), None) => Err(InputError("--sigma requires --tau".into())),
    }
}

#[derive(Serialize)]
struct BoundReport {
    #[serde(flatten)]
    bound: RelativeBound,
    radii: Radii,
}

// --- analyze ---------------------------------------------------------------

#[derive(Serialize)]
struct EpsCount {
    eps: f64,
    alpha_prime: usize,
}

#[derive(Serialize)]
struct Dims {
    domain: usize,
    kernel: usize,
    range: usize,
    multivalued_part: usize,
}

#[derive(Serialize)]
struct RelationSummary {
    x_dim: usize,
    y_dim: usize,
    dims: Dims,
    alpha: usize,
    beta: usize,
    alpha_prime: Vec<EpsCount>,
    beta_prime: usize,
    #[serde(with = "io::extended")]
    gamma: f64,
    #[serde(with = "io::extended")]
    norm: f64,
    duality: BTreeMap<&'static str, Verdict>,
}

fn summarize(t: &LinearRelation, eps: &[f64]) -> Result<RelationSummary, InputError> {
    let alpha_prime = eps
        .iter()
        .map(|&e| Ok(EpsCount { eps: e, alpha_prime: metrics::alpha_prime_eps(t, e)? }))
        .collect::<Result<Vec<_>, linrel::Error>>()?;
    Ok(RelationSummary {
        x_dim: t.x_dim(),
        y_dim: t.y_dim(),
        dims: Dims {
            domain: t.domain().dim(),
            kernel: t.kernel().dim(),
            range: t.range().dim(),
            multivalued_part: t.multivalued_part().dim(),
        },
        alpha: metrics::alpha(t),
        beta: metrics::beta(t),
        alpha_prime,
        beta_prime: metrics::beta_prime(t),
        gamma: metrics::gamma(t),
        norm: metrics::norm(t),
        duality: duality_checks(t)?,
    })
}

fn duality_checks(t: &LinearRelation) -> Result<BTreeMap<&'static str, Verdict>, linrel::Error> {
    let ta = t.adjoint();
    let mut out = BTreeMap::new();
    let mut same = |name, x: &linrel::Subspace, y: &linrel::Subspace| -> Result<(), linrel::Error> {
        let mut audit = Audit::new();
        audit.note_relation(t);
        let ok = audit.same(x, y)?;
        out.insert(name, audit.verdict(ok));
        Ok(())
    };
    same("kernel_of_adjoint", ta.kernel(), &t.range().annihilator())?;
    same("multivalued_part_of_adjoint", ta.multivalued_part(), &t.domain().annihilator())?;
    same("kernel_from_adjoint_range", t.kernel(), &ta.range().pre_annihilator())?;
    same("multivalued_part_from_adjoint_domain", t.multivalued_part(), &ta.domain().pre_annihilator())?;
    let mut audit = Audit::new();
    audit.note_relation(t);
    audit.note_relation(&ta);
    out.insert("adjoint_nullity_is_deficiency", audit.verdict(metrics::alpha(&ta) == metrics::beta(t)));
    Ok(out)
}

#[derive(Serialize)]
struct AnalyzeReport {
    header: Header,
    #[serde(rename = "A")]
    a: RelationSummary,
    #[serde(rename = "B")]
    b: RelationSummary,
    nu: Nu,
    /// `None` when D(A) ⊆ D(B) and B(0) ⊆ A(0) hold.
    #[serde(skip_serializing_if = "Option::is_none")]
    hypotheses_violated: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact_bound: Option<BoundReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    requested_bound: Option<BoundReport>,
}

fn cmd_analyze(args: AnalyzeArgs) -> CmdResult {
    if args.eps.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(InputError("--eps values must be finite and non-negative".into()));
    }
    let (file, a, b) = load_instance(&args.input)?;
    let gamma_a = metrics::gamma(&a);
    let (hypotheses_violated, exact_bound, requested_bound) = match metrics::check_standing_hypotheses(&a, &b) {
        Err(e) => (Some(e.to_string()), None, None),
        Ok(()) => {
            let exact = metrics::fit_relative_bound(&a, &b, 0.0)?;
            let exact = BoundReport { radii: Radii::new(gamma_a, &exact), bound: exact };
            let requested = if args.bound.sigma.is_some() || args.bound.tau.is_some() {
                let bound = resolve_bound(&args.bound, &a, &b)?;
                Some(BoundReport { radii: Radii::new(gamma_a, &bound), bound })
            } else {
                None
            };
            (None, Some(exact), requested)
        }
    };
    let report = AnalyzeReport {
        header: Header::new("linrel.analyze/1", None, Some(&file)),
        a: summarize(&a, &args.eps)?,
        b: summarize(&b, &args.eps)?,
        nu: chains::nu(&a, &b)?,
        hypotheses_violated,
        exact_bound,
        requested_bound,
    };
    write_out(args.output.as_deref(), &io::to_json_string(&report))?;
    let failed = report.a.duality.values().chain(report.b.duality.values()).any(|v| *v == Verdict::Fail);
    Ok(if failed { Outcome::Falsified } else { Outcome::Holds })
}

// --- sweep -----------------------------------------------------------------

#[derive(Serialize)]
struct SweepJson {
    header: Header,
    sweep: SweepReport,
    stability: StabilityReport,
}

fn cmd_sweep(args: SweepArgs) -> CmdResult {
    let (file, a, b) = load_instance(&args.input)?;
    metrics::check_standing_hypotheses(&a, &b)?;
    let bound = resolve_bound(&args.bound, &a, &b)?;
    let radius = match args.radius {
        Some(r) if r.is_finite() && r > 0.0 => r,
        Some(r) => return Err(InputError(format!("--radius must be positive and finite, got {r}"))),
        None => Radii::new(metrics::gamma(&a), &bound).pencil,
    };
    let grid = lab::default_grid(radius, args.grid_points, args.phases);
    let report = lab::sweep(&a, &b, &bound, &grid)?;
    write_out(args.csv.as_deref(), &io::sweep_csv(&report))?;
    let stability = lab::verify_stability(&a, &b, &bound, &grid)?;
    let failed = stability.verdict == Verdict::Fail;
    if let Some(path) = &args.json {
        let json = SweepJson { header: Header::new("linrel.sweep/1", None, Some(&file)), sweep: report, stability };
        write_out(Some(path), &io::to_json_string(&json))?;
    }
    // Not-applicable theorems leave the exit code alone; a failed conclusion
    // is a falsification candidate.
    Ok(if failed { Outcome::Falsified } else { Outcome::Holds })
}

// --- chains ----------------------------------------------------------------

#[derive(Serialize)]
struct ChainsJson {
    header: Header,
    chains: ChainSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    equivalent_conditions: Option<Vec<EquivalenceReport>>,
    nu_duality: NuDualityReport,
}

fn cmd_chains(args: ChainsArgs) -> CmdResult {
    let (file, a, b) = load_instance(&args.input)?;
    let max_n = args.max_n.unwrap_or(a.x_dim() + 1);
    let report = chains::chain_report(&a, &b, max_n)?;
    let equivalent_conditions = match metrics::check_standing_hypotheses(&a, &b) {
        Ok(()) => Some((1..=a.x_dim()).map(|n| chains::check_equivalent_conditions(&a, &b, n)).collect::<Result<Vec<_>, _>>()?),
        Err(_) => None,
    };
    let json = ChainsJson {
        header: Header::new("linrel.chains/1", None, Some(&file)),
        chains: report.summary(),
        equivalent_conditions,
        nu_duality: chains::verify_nu_duality(&a, &b)?,
    };
    write_out(args.output.as_deref(), &io::to_json_string(&json))?;
    let failed = json.nu_duality.verdict == Verdict::Fail
        || json.equivalent_conditions.iter().flatten().any(|r| r.verdict == Verdict::Fail);
    Ok(if failed { Outcome::Falsified } else { Outcome::Holds })
}

// --- verify ----------------------------------------------------------------

fn cmd_verify(args: VerifyArgs) -> CmdResult {
    let summary = match &args.replay {
        Some(path) => suites::replay(&read_json::<FailureRecord>(path)?),
        None => suites::run(&Suite::parse_list(&args.suite)?, args.trials, args.seed),
    };
    write_out(args.output.as_deref(), &io::to_json_string(&summary))?;
    if let Some(dir) = &args.failures_dir {
        fs::create_dir_all(dir).map_err(|e| InputError(format!("cannot create {}: {e}", dir.display())))?;
        for (i, f) in summary.failures.iter().enumerate() {
            let name = format!("{:03}-{}-{}-trial{}.json", i, f.suite, f.lemma, f.trial);
            write_out(Some(&dir.join(name)), &io::to_json_string(f))?;
        }
    }
    for f in &summary.failures {
        eprintln!("FAIL {} {} trial {} (seed {}): {}", f.suite, f.lemma, f.trial, f.trial_seed, f.detail);
    }
    Ok(if summary.failed() { Outcome::Falsified } else { Outcome::Holds })
}
