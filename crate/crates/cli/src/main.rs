use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hcb_core::adversary::{theoretical_lower_bound, Shape};
use hcb_core::harness::{
    estimate_simple_regret, family_for, random_instance, sweep, verify_lemmas, worst_member_regret, write_reports,
    ExperimentConfig, GeneratorSpec, HarnessError, RegretReport,
};
use hcb_core::rng::{Purpose, StreamKey};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "hcb", version, about = "Hierarchical causal bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the simple regret of the first configured algorithm at one horizon.
    Run {
        #[command(flatten)]
        common: Common,
        /// Horizon; defaults to the largest T in the grid.
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Regret for every (algorithm, T) cell of the config; writes CSV and JSON.
    Sweep(Common),
    /// Built-in identity, oracle, concentration, separation and KL checks.
    VerifyLemmas(Common),
    /// Worst-member regret on the lower-bound family against the theoretical bound.
    Adversary(Common),
    /// Draw an instance from a generator spec.
    GenInstance(Common),
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; all available cores by default.
    #[arg(long)]
    workers: Option<usize>,
    /// Divide replication counts by ten.
    #[arg(long)]
    quick: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Suite(String),
    Runtime(HarnessError),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome = Result<(), Failure>;

fn quick_reps(reps: usize) -> usize {
    (reps / 10).max(2)
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Failure::Usage("--config is required".into()))?;
    if !path.is_file() {
        return Err(Failure::Usage(format!("config not found: {}", path.display())));
    }
    let mut config = ExperimentConfig::load(path).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if common.quick {
        config.reps = quick_reps(config.reps);
    }
    if let Some(out) = &common.out {
        config.out = Some(out.clone());
    }
    Ok(config)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let io = |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io)
}

fn report_line(r: &RegretReport) -> String {
    format!(
        "algorithm={} mode={} N={} K={} T={} reps={} regret_hat={} stderr={} mu_star={} optimal_action={} seed={}",
        r.algorithm,
        r.mode,
        r.n,
        r.k,
        r.horizon,
        r.reps,
        r.regret_hat,
        r.stderr,
        r.mu_star,
        r.optimal_action,
        r.seed
    )
}

fn run(common: &Common, horizon: Option<usize>) -> Outcome {
    let config = load_config(common)?;
    let t = horizon.unwrap_or(*config.t_grid.last().expect("validated grid"));
    let name = config.algorithms[0];
    let instance = config.instance()?;
    let (k, mode) = (instance.k(), name.mode(config.mode));
    let report = estimate_simple_regret(&instance, || name.build(t, k, mode), t, config.reps, config.seed, 0)?;
    println!("{}", report_line(&report));
    println!("wall_clock_ms={}", report.wall_clock.as_millis());
    if let Some(out) = &config.out {
        let path = out.join("run.json");
        write_json(&path, &report)?;
        println!("json={}", path.display());
    }
    Ok(())
}

fn run_sweep(common: &Common) -> Outcome {
    let mut config = load_config(common)?;
    let out = config.out.take();
    let reports = sweep(&config)?;
    for r in &reports {
        println!("{}", report_line(r));
    }
    if let Some(out) = out {
        let (csv, json) = write_reports(&reports, &out)?;
        println!("csv={}", csv.display());
        println!("json={}", json.display());
    }
    Ok(())
}

fn run_verify(common: &Common) -> Outcome {
    if common.config.is_some() {
        return Err(Failure::Usage("verify-lemmas runs a built-in instance set and takes no --config".into()));
    }
    let seed = common.seed.unwrap_or(7);
    let checks = verify_lemmas(seed, common.quick)?;
    let mut failed = Vec::new();
    for c in &checks {
        let detail: Vec<String> = c.detail.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("check={} pass={} {}", c.name, c.pass, detail.join(" "));
        if !c.pass {
            failed.push(c.name);
        }
    }
    println!("suite=verify-lemmas seed={seed} quick={} pass={} failed={}", common.quick, failed.is_empty(), failed.len());
    if let Some(out) = &common.out {
        write_json(&out.join("verify.json"), &checks)?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Suite(format!("failed checks: {}", failed.join(", "))))
    }
}

#[derive(Serialize)]
struct WedgeRow {
    horizon: usize,
    epsilon: f64,
    hard_set: Vec<usize>,
    worst_member: usize,
    regret_hat: f64,
    stderr: f64,
    bound: f64,
    m_tilde: f64,
    regime: String,
    pass: bool,
}

fn run_adversary(common: &Common) -> Outcome {
    let config = load_config(common)?;
    let base = config.instance()?;
    let shape = config.adversary.as_ref().map_or(Shape::Coordinate, |a| a.shape);
    let name = config.algorithms[0];
    let mut rows = Vec::new();
    for (g, &t) in config.t_grid.iter().enumerate() {
        let family = family_for(&base, shape, t)?;
        let members = match config.adversary.as_ref().and_then(|a| a.member) {
            Some(i) => vec![i],
            None => family.hard_set.clone(),
        };
        let (worst, rep) = worst_member_regret(&family, &members, name, config.mode, config.reps, config.seed, g as u64)?;
        let lb = theoretical_lower_bound(family.alpha, &family.p, &family.q, t).map_err(HarnessError::from)?;
        let pass = rep.regret_hat + 3.0 * rep.stderr >= lb.bound;
        println!(
            "algorithm={name} shape={shape} T={t} epsilon={} members={} worst_member={worst} regret_hat={} stderr={} bound={} regime={:?} wedge={}",
            family.epsilon,
            members.len(),
            rep.regret_hat,
            rep.stderr,
            lb.bound,
            lb.regime,
            if pass { "pass" } else { "fail" }
        );
        if let Some(out) = &config.out {
            write_json(&out.join(format!("family_T{t}.json")), &family)?;
        }
        rows.push(WedgeRow {
            horizon: t,
            epsilon: family.epsilon,
            hard_set: family.hard_set.clone(),
            worst_member: worst,
            regret_hat: rep.regret_hat,
            stderr: rep.stderr,
            bound: lb.bound,
            m_tilde: lb.m_tilde,
            regime: format!("{:?}", lb.regime),
            pass,
        });
    }
    if let Some(out) = &config.out {
        write_json(&out.join("adversary.json"), &rows)?;
    }
    let failed = rows.iter().filter(|r| !r.pass).count();
    println!("suite=adversary pass={} failed={failed}", failed == 0);
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Suite(format!("{failed} horizons below the lower bound")))
    }
}

fn run_gen(common: &Common) -> Outcome {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Failure::Usage("--config (a generator spec) is required".into()))?;
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let spec: GeneratorSpec =
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let seed = common.seed.unwrap_or(0);
    let mut rng = StreamKey::new(seed, 0, 0, Purpose::Generator).stream();
    let instance = random_instance(&spec, &mut rng).map_err(|e| Failure::Usage(e.to_string()))?;
    match &common.out {
        Some(out) => {
            write_json(out, &instance)?;
            println!("instance={} N={} K={} seed={seed}", out.display(), instance.n(), instance.k());
        }
        None => println!("{}", serde_json::to_string_pretty(&instance).expect("instances serialize")),
    }
    Ok(())
}

fn dispatch(command: &Command) -> Outcome {
    match command {
        Command::Run { common, horizon } => run(common, *horizon),
        Command::Sweep(c) => run_sweep(c),
        Command::VerifyLemmas(c) => run_verify(c),
        Command::Adversary(c) => run_adversary(c),
        Command::GenInstance(c) => run_gen(c),
    }
}

fn common(command: &Command) -> &Common {
    match command {
        Command::Run { common, .. } => common,
        Command::Sweep(c) | Command::VerifyLemmas(c) | Command::Adversary(c) | Command::GenInstance(c) => c,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HCB_LOG", "warn")).init();
    let cli = Cli::parse();

    let outcome = match common(&cli.command).workers {
        Some(0) => Err(Failure::Usage("--workers must be positive".into())),
        Some(w) => match rayon::ThreadPoolBuilder::new().num_threads(w).build() {
            Ok(pool) => pool.install(|| dispatch(&cli.command)),
            Err(e) => Err(Failure::Usage(format!("cannot start {w} workers: {e}"))),
        },
        None => dispatch(&cli.command),
    };

    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Suite(msg)) => {
            eprintln!("FAILED: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            eprintln!("usage: hcb <run|sweep|verify-lemmas|adversary|gen-instance> [--config PATH] [--seed U64] [--workers INT] [--quick] [--out DIR]");
            ExitCode::from(2)
        }
    }
}
