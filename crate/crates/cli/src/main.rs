//! Command-line front-end. Every result is a documented library call; this
//! file only parses arguments, reads configuration and writes files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use enrand::bellmap;
use enrand::certify::{self, ProtocolConfig};
use enrand::config::{AlgorithmSection, OutputSection, ProblemSection, RunConfig};
use enrand::entropy::InputDistribution;
use enrand::qset::{self, Behaviour, EnergyBounds};
use enrand::sim::{self, Decision};
use enrand::sweep;

const THREADS_VAR: &str = "ENRAND_THREADS";

#[derive(Parser)]
#[command(name = "enrand", version, about = "Randomness certification for energy-bounded prepare-and-measure devices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide whether (E, ω) is a quantum behaviour; exit 0 member, 1 not.
    Membership(PointArgs),
    /// Entropy bounds at one behaviour or along a configured sweep, as CSV.
    Entropy(ProblemArgs),
    /// Trade-off function at the expected behaviour, as JSON.
    Tradeoff(ProblemArgs),
    /// Simulate the protocol and report; exit 0 pass, 1 abort.
    Certify(RunArgs),
    /// Two-party correlator image of (E, ω) and its Bell-side verdicts.
    Bellmap(PointArgs),
    /// Repeated runs checked against the true surprisal.
    Montecarlo(RunArgs),
}

#[derive(Args)]
struct PointArgs {
    /// Correlators E₁ E₂.
    #[arg(long, num_args = 2, allow_negative_numbers = true, value_names = ["E1", "E2"])]
    e: Vec<f64>,
    /// Energies ω₁ ω₂.
    #[arg(long, num_args = 2, value_names = ["W1", "W2"])]
    w: Vec<f64>,
    #[arg(long, default_value_t = qset::CLOSED_FORM_TOL)]
    tol: f64,
}

#[derive(Args)]
struct ProblemArgs {
    /// JSON run configuration; supersedes the other flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, num_args = 2, allow_negative_numbers = true, value_names = ["E1", "E2"])]
    e: Option<Vec<f64>>,
    /// Average energy bounds; default to the peak bounds.
    #[arg(long, num_args = 2, value_names = ["A1", "A2"])]
    avg: Option<Vec<f64>>,
    /// Peak energy bounds; default to 1.
    #[arg(long, num_args = 2, value_names = ["P1", "P2"])]
    pk: Option<Vec<f64>>,
    #[arg(long, num_args = 2, value_names = ["P1", "P2"])]
    inputs: Option<Vec<f64>>,
    /// Chord counts.
    #[arg(long, num_args = 1.., default_values_t = [16])]
    k: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    grid: usize,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides protocol.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides protocol.trials.
    #[arg(long)]
    trials: Option<u64>,
}

struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type Outcome = Result<ExitCode, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {}", e.0);
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Membership(a) => membership(&a),
        Command::Entropy(a) => entropy(&a),
        Command::Tradeoff(a) => tradeoff(&a),
        Command::Certify(a) => run_certify(&a),
        Command::Bellmap(a) => bellmap_cmd(&a),
        Command::Montecarlo(a) => montecarlo(&a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {}", e.0);
        ExitCode::from(2)
    })
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var(THREADS_VAR) else { return Ok(()) };
    let n: usize = v.parse().map_err(|_| Failure(format!("{THREADS_VAR}={v:?} is not a thread count")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn pair(v: &[f64]) -> [f64; 2] {
    [v[0], v[1]]
}

fn point(a: &PointArgs) -> Result<(Behaviour, [f64; 2]), Failure> {
    let e = pair(&a.e);
    Ok((Behaviour::new(e[0], e[1])?, qset::clamp_energies(pair(&a.w))?))
}

fn verdict(member: bool) -> ExitCode {
    if member {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn membership(a: &PointArgs) -> Outcome {
    let (b, w) = point(a)?;
    let closed = qset::in_quantum_set_closed_form(&b, w, a.tol)?;
    let sdp = qset::in_quantum_set_sdp(&b, w, a.tol)?;
    println!("closed-form: {}", if closed { "member" } else { "non-member" });
    println!("sdp: {}", if sdp { "member" } else { "non-member" });
    println!("margin: {}", qset::closed_form_margin(&b, w));
    println!("boundary-distance: {}", qset::boundary_distance(&b, w));
    println!("classical: {}", qset::is_classical(&b, w, qset::EnergyMode::MaxAverage));
    Ok(verdict(closed))
}

fn bellmap_cmd(a: &PointArgs) -> Outcome {
    let (b, w) = point(a)?;
    let img = bellmap::pm_to_bell(&b, w)?;
    let [plus, minus] = bellmap::chsh_values(&img);
    let quantum = bellmap::bell_quantum_membership(&img, a.tol)?;
    println!("correlators: {:?}", img.correlators());
    println!("chsh: {plus} {minus}");
    println!("bell-quantum: {quantum}");
    println!("bell-classical: {}", bellmap::bell_classical(&img, 1e-9));
    println!("member-via-bell: {}", bellmap::pm_membership_via_bell(&b, w, a.tol)?);
    Ok(verdict(quantum))
}

fn load(path: &Path) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    RunConfig::from_json(&text).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn from_flags(a: &ProblemArgs) -> Result<RunConfig, Failure> {
    let e = a.e.as_deref().ok_or_else(|| Failure("give --e E1 E2 or --config".into()))?;
    let pk = a.pk.as_deref().map(pair).unwrap_or([1.0, 1.0]);
    let avg = a.avg.as_deref().map(pair).unwrap_or(pk);
    let inputs = match a.inputs.as_deref() {
        Some(p) => InputDistribution::new(p[0], p[1])?,
        None => InputDistribution::uniform(),
    };
    let cfg = RunConfig {
        problem: ProblemSection {
            behaviour: Some(pair(e)),
            functional: None,
            energies: Some(EnergyBounds::new(avg, pk)?),
            inputs,
            average: None,
            sweep: None,
            device: None,
        },
        algorithm: AlgorithmSection { ks: a.k.clone(), grid: a.grid, ..AlgorithmSection::default() },
        protocol: None,
        output: OutputSection::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn problem_config(a: &ProblemArgs) -> Result<RunConfig, Failure> {
    match &a.config {
        Some(p) => load(p),
        None => from_flags(a),
    }
}

/// Writes to `<directory>/<prefix>-<name>` when a directory is configured,
/// otherwise to standard output.
fn emit(out: &OutputSection, name: &str, text: &str) -> Result<(), Failure> {
    match &out.directory {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = dir.join(format!("{}-{name}", out.prefix()));
            fs::write(&path, text).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn entropy(a: &ProblemArgs) -> Outcome {
    let cfg = problem_config(a)?;
    let (name, rows) = match &cfg.problem.sweep {
        Some(s) => (s.parameter_name(), sweep::run_sweep(&cfg)?),
        None => ("e1", vec![sweep::run_single(&cfg)?]),
    };
    emit(&cfg.output, "entropy.csv", &sweep::to_csv(&cfg, name, &rows))?;
    Ok(ExitCode::SUCCESS)
}

fn tradeoff(a: &ProblemArgs) -> Outcome {
    let cfg = problem_config(a)?;
    let prob = cfg.resolve()?.entropy_problem(cfg.algorithm.design_k());
    let (tf, value) = certify::make_tradeoff_function_for(&prob, cfg.algorithm.alpha_split)?;
    let vb = certify::variance_bound_with(&tf, cfg.algorithm.variance_form);
    let report = serde_json::json!({
        "tradeoff": tf,
        "value": value,
        "variance": vb,
        "config_sha256": cfg.hash(),
    });
    emit(&cfg.output, "tradeoff.json", &format!("{}\n", serde_json::to_string_pretty(&report)?))?;
    Ok(ExitCode::SUCCESS)
}

fn run_config(a: &RunArgs) -> Result<RunConfig, Failure> {
    let mut cfg = load(&a.config)?;
    if let Some(pr) = cfg.protocol.as_mut() {
        if let Some(s) = a.seed {
            pr.seed = s;
        }
        if let Some(t) = a.trials {
            pr.trials = t;
        }
    }
    Ok(cfg)
}

fn certificate_report(cfg: &RunConfig, pc: &ProtocolConfig, expected: f64, t: &sim::ProtocolTranscript) -> String {
    let eps = pc.eps;
    let sigma = t.extractor.map_or(0, |p| p.sigma);
    let mut s = String::new();
    let _ = writeln!(s, "# enrand {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "# config-sha256 {}", cfg.hash());
    let _ = writeln!(s, "decision: {}", if t.decision == Decision::Pass { "pass" } else { "abort" });
    let _ = writeln!(s, "rounds: {}", pc.n);
    let _ = writeln!(s, "seed: {}", t.seed);
    let _ = writeln!(s, "expected-tradeoff-value: {expected}");
    let _ = writeln!(s, "test-value: {}", t.test_value);
    let _ = writeln!(s, "threshold-r: {}", t.threshold);
    let _ = writeln!(s, "error-term-t: {}", t.error_term);
    let _ = writeln!(s, "variance-v: {}", pc.variance().v);
    let _ = writeln!(s, "min-entropy-budget-sigma_h: {}", t.min_entropy_budget);
    let _ = writeln!(s, "key-length-sigma: {sigma}");
    let _ = writeln!(s, "eps: t={} m={} ext={} omega={}", eps.t, eps.m, eps.ext, eps.omega);
    let _ = writeln!(s, "soundness-eps: {}", eps.total());
    s
}

fn run_certify(a: &RunArgs) -> Outcome {
    let cfg = run_config(a)?;
    let design = cfg.design()?;
    let dev = cfg.device()?;
    let seed = cfg.protocol()?.seed;
    let t = sim::run_protocol(dev, &design.config, seed)?;
    let report = certificate_report(&cfg, &design.config, design.expected_value, &t);
    match &cfg.output.directory {
        Some(_) => {
            let header = format!("# enrand {}\n# config-sha256 {}\n", env!("CARGO_PKG_VERSION"), cfg.hash());
            emit(&cfg.output, "rounds.csv", &format!("{header}{}", t.rounds_csv()))?;
            let key = t.key.as_ref().map(|k| k.to_hex()).unwrap_or_default();
            emit(&cfg.output, "key.hex", &format!("{key}\n"))?;
            if let Some(s) = &t.extractor_seed {
                emit(&cfg.output, "seed.hex", &format!("{}\n", s.to_hex()))?;
            }
            emit(&cfg.output, "report.txt", &report)?;
            print!("{report}");
        }
        None => {
            print!("{report}");
            if let Some(k) = &t.key {
                println!("key: {}", k.to_hex());
            }
        }
    }
    Ok(verdict(t.decision == Decision::Pass))
}

fn montecarlo(a: &RunArgs) -> Outcome {
    let cfg = run_config(a)?;
    let design = cfg.design()?;
    let pr = cfg.protocol()?;
    let report = sim::monte_carlo_soundness(cfg.device()?, &design.config, pr.trials, pr.seed)?;
    let json = serde_json::json!({
        "report": report,
        "eps_t": design.config.eps.t,
        "eps_omega": design.config.eps.omega,
        "config_sha256": cfg.hash(),
    });
    emit(&cfg.output, "montecarlo.json", &format!("{}\n", serde_json::to_string_pretty(&json)?))?;
    Ok(ExitCode::SUCCESS)
}
