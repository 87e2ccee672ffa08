//! Command-line front end: configuration, commands, artifacts and the run log.

pub mod config;
pub mod plot;

use std::ffi::OsString;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use coxperc_core::analysis::{
    estimate_influences_with, estimate_lambda_c, estimate_revealment, estimate_theta,
    fit_sharpness, theta_table, theta_table_text, verify_many, InequalityKind, VerifyOptions,
    THETA_HEADER,
};
use coxperc_core::environment::{check_conditions_with, ConditionConfig, EnvBuilder};
use coxperc_core::lattice::BlockRange;
use serde::Serialize;

use config::{RawConfig, RunConfig};
use plot::PlotKind;

pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(s) => write!(f, "config error: {s}"),
            CliError::Runtime(s) => write!(f, "error: {s}"),
        }
    }
}

impl From<config::ConfigError> for CliError {
    fn from(e: config::ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<coxperc_core::Error> for CliError {
    fn from(e: coxperc_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "coxperc",
    version,
    about = "Cox continuum percolation on Delaunay street systems",
    after_help = "Any config key can be overridden with --key value (see README)."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    threads: Option<usize>,
    /// `--key value` overrides of config keys.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0..)]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build an environment and check its structural conditions.
    CheckEnv(Common),
    /// theta_n(lambda) at one (lambda, n).
    Theta(Common),
    /// Coupled theta table over lambda_list x n_list.
    Sweep(Common),
    /// Finite-size lambda_c bracket by bisection.
    LambdaC(Common),
    /// Subcritical decay and supercritical growth fits.
    Sharpness(Common),
    /// Resampling influences and pivotality of the target block.
    Influence(Common),
    /// Revealment of the randomized exploration.
    Reveal(Common),
    /// Check an inequality: osss, efron_stein, russo, piv_lemma, inf_lemma, differential or all.
    Verify {
        kind: String,
        #[command(flatten)]
        common: Common,
    },
    /// Render a table as SVG.
    Plot {
        /// theta_vs_lambda, theta_vs_n_log or revealment_map.
        #[arg(long)]
        kind: String,
        /// Input table.
        #[arg(long)]
        input: PathBuf,
        /// Output file (default <output_dir>/<kind>.svg).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::CheckEnv(c)
            | Command::Theta(c)
            | Command::Sweep(c)
            | Command::LambdaC(c)
            | Command::Sharpness(c)
            | Command::Influence(c)
            | Command::Reveal(c) => c,
            Command::Verify { common, .. } | Command::Plot { common, .. } => common,
        }
    }

    fn name(&self) -> String {
        match self {
            Command::CheckEnv(_) => "check-env".into(),
            Command::Theta(_) => "theta".into(),
            Command::Sweep(_) => "sweep".into(),
            Command::LambdaC(_) => "lambda-c".into(),
            Command::Sharpness(_) => "sharpness".into(),
            Command::Influence(_) => "influence".into(),
            Command::Reveal(_) => "reveal".into(),
            Command::Verify { kind, .. } => format!("verify {kind}"),
            Command::Plot { .. } => "plot".into(),
        }
    }
}

/// One line of the run log.
#[derive(Serialize, Debug)]
pub struct RunRecord {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub start: String,
    pub end: String,
    pub outputs: Vec<String>,
    pub version: String,
    pub config: Vec<(String, String)>,
}

pub const RUN_LOG: &str = "runs.jsonl";

fn append_record(dir: &Path, rec: &RunRecord) -> Result<(), CliError> {
    let mut line = serde_json::to_string(rec).map_err(|e| CliError::Runtime(e.to_string()))?;
    line.push('\n');
    // One write on an O_APPEND handle keeps records whole.
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join(RUN_LOG))?;
    f.write_all(line.as_bytes())?;
    Ok(())
}

struct Artifacts {
    dir: PathBuf,
    header: String,
    written: Vec<String>,
}

impl Artifacts {
    fn write(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, format!("{}{body}", self.header))?;
        self.written.push(path.display().to_string());
        Ok(())
    }
}

fn load(common: &Common) -> Result<(RunConfig, Option<usize>), CliError> {
    let mut overrides = common.overrides.clone();
    let mut config_path = common.config.clone();
    let mut threads = common.threads;
    // --config and --threads may also follow the overrides.
    let mut i = 0;
    while i < overrides.len() {
        let flag = overrides[i].as_str();
        let (name, inline) = match flag.split_once('=') {
            Some((a, b)) => (a, Some(b.to_string())),
            None => (flag, None),
        };
        if name == "--config" || name == "--threads" {
            let take = if inline.is_some() { 1 } else { 2 };
            let value = match inline {
                Some(v) => v,
                None => overrides
                    .get(i + 1)
                    .cloned()
                    .ok_or_else(|| CliError::Config(format!("{}: missing value", &name[2..])))?,
            };
            if name == "--config" {
                config_path = Some(value.into());
            } else {
                threads = Some(value.parse().map_err(|_| {
                    CliError::Config(format!("threads: cannot parse '{value}'"))
                })?);
            }
            overrides.drain(i..i + take);
        } else {
            i += 1;
        }
    }
    let mut raw = match &config_path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| {
                CliError::Config(format!("config: cannot read {}: {e}", p.display()))
            })?;
            RawConfig::parse(&text)?
        }
        None => RawConfig::default(),
    };
    raw.apply_overrides(&overrides)?;
    Ok((RunConfig::resolve(&raw)?, threads))
}

fn parse_kinds(kind: &str) -> Result<Vec<InequalityKind>, CliError> {
    if kind.eq_ignore_ascii_case("all") {
        return Ok(InequalityKind::ALL.to_vec());
    }
    kind.split(',')
        .map(|k| {
            k.parse::<InequalityKind>()
                .map_err(|e| CliError::Config(format!("kind: {e}")))
        })
        .collect()
}

fn execute(cmd: &Command, cfg: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let lambda = cfg.lambda();
    match cmd {
        Command::Plot {
            kind, input, out: o, ..
        } => {
            let kind: PlotKind = kind
                .parse()
                .map_err(|e: String| CliError::Config(format!("kind: {e}")))?;
            let table = fs::read_to_string(input)
                .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", input.display())))?;
            let svg = plot::render(kind, &table).map_err(|e| CliError::Runtime(e.to_string()))?;
            let path = o
                .clone()
                .unwrap_or_else(|| out.dir.join(format!("{}.svg", kind.name())));
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(&path, svg)?;
            out.written.push(path.display().to_string());
            return Ok(());
        }
        Command::Verify { kind, .. } => {
            let kinds = parse_kinds(kind)?;
            let p = cfg.params()?;
            let mut opts = VerifyOptions::new(cfg.trials, cfg.seed);
            opts.probes = cfg.probes;
            opts.reveal_trials = cfg.reveal_trials;
            if let Some(h) = cfg.h {
                if lambda > 0.0 {
                    opts.h_frac = h / lambda;
                }
            }
            let reports = verify_many(&kinds, &p, lambda, cfg.n, &opts)?;
            for r in reports {
                out.write(&format!("verify_{}.txt", r.kind.name().to_ascii_lowercase()), &r.to_text())?;
            }
            return Ok(());
        }
        _ => {}
    }
    let p = cfg.params()?;
    match cmd {
        Command::CheckEnv(_) => {
            let env = EnvBuilder::new(&p, BlockRange::around([0, 0], cfg.env_radius))
                .seed(cfg.seed)
                .build()?;
            let cc = ConditionConfig {
                eta: p.eta,
                q0: cfg.q0,
                coverage_blocks: cfg.coverage_blocks,
                one_dep_sites: cfg.one_dep_sites,
                conn_blocks: cfg.conn_blocks,
            };
            let r = check_conditions_with(&env, &cc, cfg.seed)?;
            out.write("check_env.txt", &r.to_text())
        }
        Command::Theta(_) => {
            let t = estimate_theta(&p, lambda, cfg.n, cfg.trials, cfg.seed)?;
            out.write("theta.csv", &format!("{THETA_HEADER}\n{}\n", t.row()))
        }
        Command::Sweep(_) => {
            let rows = theta_table(&p, &cfg.lambda_list, &cfg.n_list, cfg.trials, cfg.seed)?;
            out.write("sweep.csv", &theta_table_text(&rows))
        }
        Command::LambdaC(_) => {
            let r = estimate_lambda_c(
                &p,
                cfg.n,
                cfg.trials,
                cfg.threshold,
                cfg.tol,
                cfg.bracket,
                cfg.seed,
            )?;
            out.write("lambda_c.txt", &r.to_text())
        }
        Command::Sharpness(_) => {
            let r = fit_sharpness(&p, &cfg.lambda_list, &cfg.n_list, cfg.trials, cfg.seed)?;
            out.write("sharpness.txt", &r.to_text())
        }
        Command::Influence(_) => {
            let r = estimate_influences_with(
                &p,
                lambda,
                cfg.n,
                cfg.target,
                cfg.trials,
                cfg.probes,
                cfg.seed,
            )?;
            out.write("influence.txt", &r.to_text())
        }
        Command::Reveal(_) => {
            let r = estimate_revealment(&p, lambda, cfg.n, cfg.trials, cfg.seed)?;
            out.write("reveal.csv", &r.to_table())?;
            out.write("reveal.txt", &r.to_text())
        }
        Command::Verify { .. } | Command::Plot { .. } => unreachable!(),
    }
}

fn run_parsed(cli: Cli) -> Result<(), CliError> {
    let start = chrono::Utc::now().to_rfc3339();
    let (cfg, threads) = load(cli.command.common())?;
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::Config("threads: must be at least 1".into()));
        }
        // Fails only if a pool already exists (repeated in-process runs).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    fs::create_dir_all(&cfg.output_dir)?;
    let name = cli.command.name();
    let mut out = Artifacts {
        dir: cfg.output_dir.clone(),
        header: cfg.header(&name),
        written: Vec::new(),
    };
    execute(&cli.command, &cfg, &mut out)?;
    append_record(
        &cfg.output_dir,
        &RunRecord {
            command: name,
            config_hash: cfg.hash(),
            seed: cfg.seed,
            start,
            end: chrono::Utc::now().to_rfc3339(),
            outputs: out.written,
            version: env!("CARGO_PKG_VERSION").into(),
            config: cfg.resolved.clone(),
        },
    )
}

/// Entry point; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match run_parsed(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.code()
        }
    }
}
