//! Command-line surface: JSON config parsing, JSON/CSV emission, and run
//! manifests.
//!
//! Exit codes: 0 success, 2 config/usage validation failure, 1 numerical
//! failure (non-convergence, unreachable target). Every file output is
//! written atomically and accompanied by a `<output>.manifest.json` recording
//! the command, a SHA-256 digest of the input configuration, the seed, and
//! the tool version. Floats in CSV output carry 17 significant digits so the
//! emitted data round-trips exactly.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Once;

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::core::{
    mixture_loss, Method, MixingSolution, MixtureProblem, SimplexVec,
};
use crate::error::{Error, Result};
use crate::pds::{ErrorFieldProbe, ProblemField, StationarityVerdict};
use crate::simulate::{blend, McConfig, SkillWorld};
use crate::solver::{QStarMode, SolverConfig};
use crate::{memorization, powerlaw, simulate, solver, transfer};

#[derive(Parser)]
#[command(name = "mixshift", version, about = "Optimal data mixing for mixture test targets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an all-power-law problem (closed form and/or KKT bisection).
    Powerlaw {
        #[arg(long)]
        config: Option<PathBuf>,
        /// asymptotic | lagrange | numeric
        #[arg(long, default_value = "lagrange")]
        method: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Sweep specification `p_major=START:STOP:STEP`; emits CSV instead
        /// of a single solution.
        #[arg(long)]
        sweep: Option<String>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long = "K")]
        k: Option<usize>,
        #[arg(long = "A", default_value_t = 1.0)]
        a: f64,
        #[arg(long = "N")]
        n: Option<u64>,
    },
    /// Water-filling for memorization components, or scaling-law sweeps.
    Memorize {
        /// Comma-separated test proportions, e.g. "0.6,0.3,0.1".
        #[arg(long)]
        p: Option<String>,
        #[arg(long = "N")]
        n: Option<u64>,
        /// Scaling mode: `alpha=1.5` fits log-log slopes instead.
        #[arg(long)]
        scaling: Option<String>,
        /// Component count rule for scaling mode, e.g. "4N".
        #[arg(long = "k-rule", default_value = "4N")]
        k_rule: String,
        /// Budget grid `START:STOP:logPOINTS` or `START:STOP:STEP`.
        #[arg(long, default_value = "100:100000:log10")]
        grid: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reduce an all-transfer problem and solve it.
    Transfer {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo estimate of the mixture loss at a given q.
    Mc {
        #[arg(long)]
        config: PathBuf,
        /// Training proportions; defaults to the problem's p.
        #[arg(long)]
        q: Option<String>,
        #[arg(long, default_value_t = 100_000)]
        draws: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        streams: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Skill-composition experiment with an idealized memorizing learner.
    Compose {
        #[arg(long)]
        world: PathBuf,
        /// matched | waterfill | blend:GAMMA
        #[arg(long, default_value = "matched")]
        mix: String,
        #[arg(long = "N")]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2_000)]
        draws: u64,
        #[arg(long, default_value_t = 4)]
        streams: usize,
        /// Skip the Monte Carlo pass and report the prediction only.
        #[arg(long, default_value_t = false)]
        predicted_only: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference stationarity test at a point p.
    CheckPds {
        #[arg(long)]
        config: PathBuf,
        /// Probe point; defaults to the problem's p.
        #[arg(long)]
        p: Option<String>,
        #[arg(long, default_value_t = 1e-4)]
        h: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve any problem, dispatching to the family solver or the numeric
    /// oracle.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        /// Force the model-agnostic numeric path.
        #[arg(long, default_value_t = false)]
        numeric: bool,
        #[arg(long, default_value_t = 1e-2)]
        grid_resolution: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample-complexity ratio at a target epsilon.
    Nratio {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 1 << 40)]
        n_max: u64,
        /// Freeze q* at the matched-budget optimum instead of reoptimizing
        /// per probed N.
        #[arg(long, default_value_t = false)]
        fixed_qstar: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Majority/minority sweep CSV: p, q1_star, L_same, L_star, N_ratio.
    Sweep {
        /// Range `p_major=START:STOP:STEP`.
        #[arg(long, default_value = "p_major=0.01:0.99:0.01")]
        range: String,
        #[arg(long)]
        alpha: f64,
        #[arg(long = "K")]
        k: usize,
        #[arg(long = "A", default_value_t = 1.0)]
        a: f64,
        #[arg(long = "N", default_value_t = 1_000_000)]
        n: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Two-topic exam curve: loss as a function of the study split q at
    /// alpha = 1 and alpha = 2, N = 100.
    Fig1 {
        #[arg(long = "N", default_value_t = 100)]
        n: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Majority-mass sweep for A = 1, alpha = 0.28, K = 100.
    Fig2 {
        #[arg(long = "N", default_value_t = 1_000_000)]
        n: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Entry point shared by the binary and the tests. Returns the process exit
/// code instead of exiting so it can be driven in-process.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_thread_pool();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successes, everything else is a
            // usage error.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NonConvergence { context, residual } => {
                    // Numerical failures still produce a machine-readable
                    // record with their diagnostics.
                    println!(
                        "{}",
                        serde_json::json!({
                            "error": "non-convergence",
                            "context": context,
                            "residual": residual,
                        })
                    );
                    1
                }
                Error::TargetUnreachable { epsilon, n_max } => {
                    println!(
                        "{}",
                        serde_json::json!({
                            "error": "target-unreachable",
                            "epsilon": epsilon,
                            "n_max": n_max,
                        })
                    );
                    1
                }
                Error::ContractViolation(detail) => {
                    println!(
                        "{}",
                        serde_json::json!({
                            "error": "contract-violation",
                            "detail": detail,
                        })
                    );
                    1
                }
                _ => 2,
            }
        }
    }
}

fn init_thread_pool() {
    static INIT: Once = Once::new();
    INIT.call_once(|| {
        if let Ok(v) = std::env::var("MIXSHIFT_THREADS") {
            if let Ok(threads) = v.parse::<usize>() {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads.max(1))
                    .build_global();
            }
        }
    });
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Powerlaw { config, method, out, sweep, alpha, k, a, n } => {
            if let Some(spec) = sweep {
                let (alpha, k) = match (alpha, k) {
                    (Some(alpha), Some(k)) => (alpha, k),
                    _ => {
                        return Err(Error::Config(
                            "--sweep needs --alpha and --K".into(),
                        ))
                    }
                };
                return run_sweep(&spec, alpha, k, a, n.unwrap_or(1_000_000), out, "powerlaw");
            }
            let path = config.ok_or_else(|| Error::Config("--config is required".into()))?;
            run_powerlaw(&path, &method, out)
        }
        Command::Memorize { p, n, scaling, k_rule, grid, out } => {
            if let Some(spec) = scaling {
                run_memorize_scaling(&spec, &k_rule, &grid, out)
            } else {
                let p = p.ok_or_else(|| Error::Config("--p is required".into()))?;
                let n = n.ok_or_else(|| Error::Config("--N is required".into()))?;
                run_memorize(&p, n, out)
            }
        }
        Command::Transfer { config, out } => run_transfer(&config, out),
        Command::Mc { config, q, draws, seed, streams, out } => {
            run_mc(&config, q.as_deref(), draws, seed, streams, out)
        }
        Command::Compose { world, mix, n, seed, draws, streams, predicted_only, out } => {
            run_compose(&world, &mix, n, seed, draws, streams, predicted_only, out)
        }
        Command::CheckPds { config, p, h, out } => run_check_pds(&config, p.as_deref(), h, out),
        Command::Optimize { config, numeric, grid_resolution, out } => {
            run_optimize(&config, numeric, grid_resolution, out)
        }
        Command::Nratio { config, epsilon, n_max, fixed_qstar, out } => {
            run_nratio(&config, epsilon, n_max, fixed_qstar, out)
        }
        Command::Sweep { range, alpha, k, a, n, out } => {
            run_sweep(&range, alpha, k, a, n, out, "sweep")
        }
        Command::Fig1 { n, out } => run_fig1(n, out),
        Command::Fig2 { n, out } => run_fig2(n, out),
    }
}

// ---------------------------------------------------------------------------
// Output plumbing

#[derive(Serialize)]
struct RunManifest {
    command: String,
    config_digest: String,
    seed: u64,
    tool_version: String,
    outputs: Vec<String>,
}

fn digest_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)
        .and_then(|()| fs::rename(&tmp, path))
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

struct Emitter {
    command: String,
    config_digest: String,
    seed: u64,
}

impl Emitter {
    fn new(command: &str, config_bytes: &[u8], seed: u64) -> Self {
        Self {
            command: command.to_string(),
            config_digest: digest_bytes(config_bytes),
            seed,
        }
    }

    /// Writes `contents` to `out` (or stdout) and, for file outputs, the
    /// manifest right next to it.
    fn emit(&self, out: Option<PathBuf>, contents: &str) -> Result<()> {
        match out {
            None => {
                println!("{contents}");
                Ok(())
            }
            Some(path) => {
                atomic_write(&path, contents)?;
                let manifest = RunManifest {
                    command: self.command.clone(),
                    config_digest: self.config_digest.clone(),
                    seed: self.seed,
                    tool_version: env!("CARGO_PKG_VERSION").to_string(),
                    outputs: vec![path.display().to_string()],
                };
                let manifest_path = manifest_path(&path);
                let body = serde_json::to_string_pretty(&manifest)
                    .expect("manifest serialization cannot fail");
                atomic_write(&manifest_path, &body)
            }
        }
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// 17 significant digits: enough for exact f64 round-trips.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_document(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut doc = String::new();
    doc.push_str(&header.join(","));
    doc.push('\n');
    for row in rows {
        doc.push_str(&row.join(","));
        doc.push('\n');
    }
    doc
}

fn read_config(path: &Path) -> Result<(String, Vec<u8>)> {
    let bytes = fs::read(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| Error::Config(format!("{} is not UTF-8", path.display())))?;
    Ok((text, bytes))
}

fn parse_simplex(text: &str) -> Result<SimplexVec> {
    let entries = text
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("cannot parse proportion {tok:?}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    SimplexVec::new(entries)
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("result serialization cannot fail")
}

// ---------------------------------------------------------------------------
// Subcommands

fn solution_json(sol: &MixingSolution) -> String {
    to_json(sol)
}

fn powerlaw_diagnostics(sol: &powerlaw::PowerLawSolution) -> BTreeMap<String, f64> {
    let mut d = BTreeMap::new();
    d.insert("lambda".into(), sol.lambda);
    d.insert("s_minimal_exponents".into(), sol.s as f64);
    d.insert("kkt_rel_residual".into(), sol.max_rel_residual);
    d.insert("alpha_warning".into(), f64::from(sol.alpha_warning));
    for (i, (t, ok)) in sol
        .n0
        .thresholds
        .iter()
        .zip(sol.n0.satisfied)
        .enumerate()
    {
        d.insert(format!("n0_threshold_{}", i + 1), *t);
        d.insert(format!("n0_ok_{}", i + 1), f64::from(ok));
    }
    d
}

fn run_powerlaw(config: &Path, method: &str, out: Option<PathBuf>) -> Result<()> {
    let (text, bytes) = read_config(config)?;
    let problem = MixtureProblem::from_json(&text)?;
    let sol = powerlaw::solve(&problem)?;
    let diagnostics = powerlaw_diagnostics(&sol);
    let mixing = match method {
        "asymptotic" => MixingSolution::new(
            sol.q_star_asymptotic.clone(),
            sol.l_star_leading,
            sol.l_same_leading,
            Method::ClosedForm,
            diagnostics,
        )?,
        "lagrange" => {
            let l_star = powerlaw::approximate_loss(&problem, &sol.q_star_numeric)?;
            let l_same = powerlaw::approximate_loss(&problem, &problem.p)?;
            MixingSolution::new(
                sol.q_star_numeric.clone(),
                l_star,
                l_same,
                Method::Lagrange,
                diagnostics,
            )?
        }
        "numeric" => numeric_solution(&problem, &SolverConfig::default())?,
        other => {
            return Err(Error::Config(format!(
                "unknown method {other:?}; expected asymptotic, lagrange, or numeric"
            )))
        }
    };
    Emitter::new("powerlaw", &bytes, 0).emit(out, &solution_json(&mixing))
}

fn numeric_solution(problem: &MixtureProblem, cfg: &SolverConfig) -> Result<MixingSolution> {
    let min = solver::minimize_simplex(
        |q| mixture_loss(problem, q).unwrap_or(f64::INFINITY),
        problem.k(),
        cfg,
    )?;
    let l_same = mixture_loss(problem, &problem.p)?;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("residual".into(), min.residual);
    diagnostics.insert("iterations".into(), min.iterations as f64);
    diagnostics.insert("converged".into(), f64::from(min.converged));
    // The matched mixture is always a candidate.
    let (q, l_star) = if min.value <= l_same {
        (min.q, min.value)
    } else {
        (problem.p.clone(), l_same)
    };
    MixingSolution::new(q, l_star, l_same, Method::Numeric, diagnostics)
}

fn run_memorize(p: &str, n: u64, out: Option<PathBuf>) -> Result<()> {
    let p = parse_simplex(p)?;
    let wf = memorization::water_fill(&p, n)?;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("beta_N".into(), wf.beta_n);
    diagnostics.insert("delta_N".into(), wf.delta_n);
    diagnostics.insert("K_N".into(), wf.k_n as f64);
    let sol = MixingSolution::new(
        wf.q_star.clone(),
        wf.l_star,
        wf.l_same,
        Method::WaterFilling,
        diagnostics,
    )?;
    let config = format!("p={p:?} N={n}", p = p.as_slice());
    Emitter::new("memorize", config.as_bytes(), 0).emit(out, &solution_json(&sol))
}

fn parse_scaling_alpha(spec: &str) -> Result<f64> {
    let rest = spec
        .strip_prefix("alpha=")
        .ok_or_else(|| Error::Config(format!("expected alpha=VALUE, got {spec:?}")))?;
    rest.parse::<f64>()
        .map_err(|_| Error::Config(format!("cannot parse alpha value {rest:?}")))
}

fn parse_k_rule(rule: &str) -> Result<f64> {
    let trimmed = rule.trim().trim_end_matches(['N', 'n']);
    if trimmed.is_empty() {
        return Ok(1.0);
    }
    trimmed
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("cannot parse K rule {rule:?}; expected e.g. 4N")))
}

fn parse_grid(spec: &str) -> Result<Vec<u64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "grid {spec:?} must be START:STOP:STEP or START:STOP:logPOINTS"
        )));
    }
    let start: u64 = parts[0]
        .parse()
        .map_err(|_| Error::Config(format!("bad grid start {:?}", parts[0])))?;
    let stop: u64 = parts[1]
        .parse()
        .map_err(|_| Error::Config(format!("bad grid stop {:?}", parts[1])))?;
    if start < 1 || stop <= start {
        return Err(Error::Config("grid needs 1 <= START < STOP".into()));
    }
    let mut grid = Vec::new();
    if let Some(count) = parts[2].strip_prefix("log") {
        let count: usize = count
            .parse()
            .map_err(|_| Error::Config(format!("bad log point count {:?}", parts[2])))?;
        if count < 2 {
            return Err(Error::Config("log grid needs at least 2 points".into()));
        }
        let (ls, le) = ((start as f64).ln(), (stop as f64).ln());
        for i in 0..count {
            let x = (ls + (le - ls) * i as f64 / (count - 1) as f64).exp().round() as u64;
            if grid.last() != Some(&x) {
                grid.push(x);
            }
        }
    } else {
        let step: u64 = parts[2]
            .parse()
            .map_err(|_| Error::Config(format!("bad grid step {:?}", parts[2])))?;
        if step == 0 {
            return Err(Error::Config("grid step must be positive".into()));
        }
        let mut x = start;
        while x <= stop {
            grid.push(x);
            x += step;
        }
    }
    Ok(grid)
}

fn run_memorize_scaling(
    spec: &str,
    k_rule: &str,
    grid: &str,
    out: Option<PathBuf>,
) -> Result<()> {
    let alpha = parse_scaling_alpha(spec)?;
    let factor = parse_k_rule(k_rule)?;
    let budgets = parse_grid(grid)?;
    let slopes = memorization::scaling_exponents(alpha, &budgets, factor)?;
    let rows: Vec<Vec<String>> = slopes
        .points
        .iter()
        .map(|&(n, same, star)| vec![n.to_string(), fmt_f64(same), fmt_f64(star)])
        .collect();
    let mut doc = csv_document(&["N", "L_same", "L_star"], &rows);
    doc.push_str(&format!(
        "# slope_same,{},slope_star,{}\n",
        fmt_f64(slopes.slope_same),
        fmt_f64(slopes.slope_star)
    ));
    let config = format!("alpha={alpha} k_rule={k_rule} grid={grid}");
    Emitter::new("memorize-scaling", config.as_bytes(), 0).emit(out, &doc)
}

fn run_transfer(config: &Path, out: Option<PathBuf>) -> Result<()> {
    let (text, bytes) = read_config(config)?;
    let problem = MixtureProblem::from_json(&text)?;
    let sol = transfer::solve(&problem)?;
    let mixing = sol.into_mixing_solution()?;
    Emitter::new("transfer", &bytes, 0).emit(out, &solution_json(&mixing))
}

#[derive(Serialize)]
struct McOutput {
    estimate: f64,
    stderr: f64,
    draws: u64,
    seed: u64,
}

fn run_mc(
    config: &Path,
    q: Option<&str>,
    draws: u64,
    seed: u64,
    streams: usize,
    out: Option<PathBuf>,
) -> Result<()> {
    let (text, bytes) = read_config(config)?;
    let problem = MixtureProblem::from_json(&text)?;
    let q = match q {
        Some(text) => parse_simplex(text)?,
        None => problem.p.clone(),
    };
    let mc = McConfig { draws, seed, parallel_streams: streams };
    let est = simulate::multinomial_estimate(&problem, &q, &mc)?;
    let result = McOutput { estimate: est.estimate, stderr: est.stderr, draws, seed };
    Emitter::new("mc", &bytes, seed).emit(out, &to_json(&result))
}

#[derive(Serialize)]
struct ComposeOutput {
    mix_spec: String,
    /// Full mixture, only embedded for small worlds.
    #[serde(skip_serializing_if = "Option::is_none")]
    mix: Option<Vec<f64>>,
    predicted_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mc_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mc_stderr: Option<f64>,
}

const COMPOSE_MIX_EMBED_LIMIT: usize = 1_000;

#[allow(clippy::too_many_arguments)]
fn run_compose(
    world_path: &Path,
    mix_spec: &str,
    n: u64,
    seed: u64,
    draws: u64,
    streams: usize,
    predicted_only: bool,
    out: Option<PathBuf>,
) -> Result<()> {
    let (text, bytes) = read_config(world_path)?;
    let world = SkillWorld::from_json(&text)?;
    let mix = match mix_spec {
        "matched" => world.test_freq.clone(),
        "waterfill" => memorization::water_fill(&world.test_freq, n)?.q_star,
        other => match other.strip_prefix("blend:") {
            Some(gamma) => {
                let gamma: f64 = gamma
                    .parse()
                    .map_err(|_| Error::Config(format!("bad blend weight {gamma:?}")))?;
                blend(gamma, &SimplexVec::uniform(world.m()), &world.test_freq)?
            }
            None => {
                return Err(Error::Config(format!(
                    "unknown mix {other:?}; expected matched, waterfill, or blend:GAMMA"
                )))
            }
        },
    };
    let embedded = (mix.len() <= COMPOSE_MIX_EMBED_LIMIT).then(|| mix.as_slice().to_vec());
    let result = if predicted_only {
        ComposeOutput {
            mix_spec: mix_spec.to_string(),
            mix: embedded,
            predicted_accuracy: simulate::predicted_accuracy(&world, &mix, n)?,
            mc_accuracy: None,
            mc_stderr: None,
        }
    } else {
        let mc = McConfig { draws, seed, parallel_streams: streams };
        let outcome = simulate::run_composition_experiment(&world, &mix, n, &mc)?;
        ComposeOutput {
            mix_spec: mix_spec.to_string(),
            mix: embedded,
            predicted_accuracy: outcome.predicted_accuracy,
            mc_accuracy: Some(outcome.mc_accuracy),
            mc_stderr: Some(outcome.mc_stderr),
        }
    };
    Emitter::new("compose", &bytes, seed).emit(out, &to_json(&result))
}

#[derive(Serialize)]
struct PdsOutput {
    verdict: &'static str,
    is_stationary: bool,
    norm: f64,
    tolerance: f64,
    certificate: Vec<f64>,
}

fn run_check_pds(config: &Path, p: Option<&str>, h: f64, out: Option<PathBuf>) -> Result<()> {
    let (text, bytes) = read_config(config)?;
    let problem = MixtureProblem::from_json(&text)?;
    let point = match p {
        Some(text) => parse_simplex(text)?,
        None => problem.p.clone(),
    };
    let field = ProblemField::new(&problem)?;
    let probe = ErrorFieldProbe::with_step(&field, h)?;
    let report = probe.stationarity_test(&point)?;
    let result = PdsOutput {
        verdict: match report.verdict {
            StationarityVerdict::Stationary => "stationary",
            StationarityVerdict::NonStationary => "non-stationary",
            StationarityVerdict::Inconclusive => "inconclusive",
        },
        is_stationary: report.is_stationary(),
        norm: report.tangent_norm,
        tolerance: report.tolerance,
        certificate: report.certificate,
    };
    Emitter::new("check-pds", &bytes, 0).emit(out, &to_json(&result))
}

fn run_optimize(
    config: &Path,
    numeric: bool,
    grid_resolution: f64,
    out: Option<PathBuf>,
) -> Result<()> {
    let (text, bytes) = read_config(config)?;
    let problem = MixtureProblem::from_json(&text)?;
    let cfg = SolverConfig { grid_resolution, ..SolverConfig::default() };
    let sol = if numeric {
        numeric_solution(&problem, &cfg)?
    } else if problem.all_kind("memorization") {
        let wf = memorization::water_fill(&problem.p, problem.budget)?;
        let mut diagnostics = BTreeMap::new();
        diagnostics.insert("beta_N".into(), wf.beta_n);
        diagnostics.insert("delta_N".into(), wf.delta_n);
        diagnostics.insert("K_N".into(), wf.k_n as f64);
        MixingSolution::new(wf.q_star, wf.l_star, wf.l_same, Method::WaterFilling, diagnostics)?
    } else if problem.all_kind("powerlaw") {
        let sol = powerlaw::solve(&problem)?;
        let l_star = powerlaw::approximate_loss(&problem, &sol.q_star_numeric)?;
        let l_same = powerlaw::approximate_loss(&problem, &problem.p)?;
        let diagnostics = powerlaw_diagnostics(&sol);
        MixingSolution::new(sol.q_star_numeric, l_star, l_same, Method::Lagrange, diagnostics)?
    } else if problem.all_kind("transfer") {
        transfer::solve(&problem)?.into_mixing_solution()?
    } else {
        numeric_solution(&problem, &cfg)?
    };
    Emitter::new("optimize", &bytes, 0).emit(out, &solution_json(&sol))
}

#[derive(Serialize)]
struct NratioOutput {
    n_same: u64,
    n_star: u64,
    ratio: f64,
    epsilon: f64,
}

fn run_nratio(
    config: &Path,
    epsilon: f64,
    n_max: u64,
    fixed_qstar: bool,
    out: Option<PathBuf>,
) -> Result<()> {
    let (text, bytes) = read_config(config)?;
    let problem = MixtureProblem::from_json(&text)?;
    let mode = if fixed_qstar {
        QStarMode::FixedAtMatchedBudget
    } else {
        QStarMode::ReoptimizePerN
    };
    let rep = solver::sample_complexity_ratio_with(&problem, epsilon, n_max, mode)?;
    let result = NratioOutput {
        n_same: rep.n_same,
        n_star: rep.n_star,
        ratio: rep.ratio,
        epsilon,
    };
    Emitter::new("nratio", &bytes, 0).emit(out, &to_json(&result))
}

fn parse_sweep_range(spec: &str) -> Result<(f64, f64, f64)> {
    let body = spec.strip_prefix("p_major=").unwrap_or(spec);
    let parts: Vec<&str> = body.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "sweep range {spec:?} must be p_major=START:STOP:STEP"
        )));
    }
    let nums = parts
        .iter()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad sweep number {tok:?}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if !(0.0 < start && start <= stop && stop < 1.0 && step > 0.0) {
        return Err(Error::Config(
            "sweep needs 0 < START <= STOP < 1 and STEP > 0".into(),
        ));
    }
    Ok((start, stop, step))
}

fn run_sweep(
    range: &str,
    alpha: f64,
    k: usize,
    a: f64,
    n: u64,
    out: Option<PathBuf>,
    command: &str,
) -> Result<()> {
    let (start, stop, step) = parse_sweep_range(range)?;
    let mut rows = Vec::new();
    let mut i = 0u64;
    loop {
        let p_major = start + step * i as f64;
        if p_major > stop + 1e-12 {
            break;
        }
        let mm = powerlaw::majority_minority_ratio(p_major, k, alpha)?;
        let mut p = vec![(1.0 - p_major) / (k as f64 - 1.0); k];
        p[0] = p_major;
        let curves = vec![
            crate::core::LearningCurve::PowerLaw { a, b: powerlaw::B_FLOOR, alpha };
            k
        ];
        let problem = MixtureProblem::new(SimplexVec::new(p)?, curves, n)?;
        let (l_same, l_star) = powerlaw::asymptotic_losses(&problem)?;
        rows.push(vec![
            fmt_f64(p_major),
            fmt_f64(mm.q_star[0]),
            fmt_f64(l_same),
            fmt_f64(l_star),
            fmt_f64(mm.n_ratio),
        ]);
        i += 1;
    }
    let doc = csv_document(&["p", "q1_star", "L_same", "L_star", "N_ratio"], &rows);
    let config = format!("range={range} alpha={alpha} K={k} A={a} N={n}");
    Emitter::new(command, config.as_bytes(), 0).emit(out, &doc)
}

fn run_fig1(n: u64, out: Option<PathBuf>) -> Result<()> {
    let p = SimplexVec::new(vec![0.9, 0.1])?;
    let mut rows = Vec::new();
    for i in 1..200u32 {
        let q1 = i as f64 * 0.005;
        let q = SimplexVec::new(vec![q1, 1.0 - q1])?;
        let mut losses = Vec::with_capacity(2);
        for alpha in [1.0, 2.0] {
            let curves = vec![
                crate::core::LearningCurve::PowerLaw { a: 1.0, b: powerlaw::B_FLOOR, alpha };
                2
            ];
            let problem = MixtureProblem::new(p.clone(), curves, n)?;
            losses.push(powerlaw::approximate_loss(&problem, &q)?);
        }
        rows.push(vec![fmt_f64(q1), fmt_f64(losses[0]), fmt_f64(losses[1])]);
    }
    let doc = csv_document(&["q", "loss_alpha_1", "loss_alpha_2"], &rows);
    let config = format!("fig1 N={n}");
    Emitter::new("fig1", config.as_bytes(), 0).emit(out, &doc)
}

fn run_fig2(n: u64, out: Option<PathBuf>) -> Result<()> {
    run_sweep("p_major=0.01:0.99:0.01", 0.28, 100, 1.0, n, out, "fig2")
}
