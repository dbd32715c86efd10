//! Command-line front end: configuration loading, subcommand dispatch and
//! file output.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::config::ScenarioConfig;
use crate::dynamics::IntegrationError;
use crate::experiment::{critical_lambda, figure_lambdas, friction_sweep, CriticalLambda, ExperimentError, Scenario};
use crate::validation::{run_suite, SuiteOptions};

/// Overrides `[output] dir` when set.
pub const OUTPUT_DIR_ENV: &str = "LINDBLAD_TUNNEL_OUTPUT_DIR";

/// Name of the configuration echo written next to every run's output.
pub const EFFECTIVE_CONFIG: &str = "effective-config.toml";

const DEFAULTS_HELP: &str = "\
Configuration (TOML; unknown keys are rejected). Units: fm, MeV, MeV/c, T = 1e-22 s.

  [potential]  q_a, q_b, barrier_height, barrier_stiffness   (required)
               v_a = 0, q_c (adds a second well), v_c = v_a
  [dynamics]   mass = 13.57, friction = 0, mode = \"centroid\" | \"gaussian_smeared\",
               rate = \"flux\" | \"verbatim\", dt = 0.001, t_end = 100, stride = 10,
               rtol (enables adaptive stepping), atol = 1e-12, min_step = 1e-8
  [initial]    momentum   (required, MeV/c)
  [sweep]      lambdas = [] (empty: {0, 0.25, 0.75, 1.25} x critical friction),
               lambda_lo = 0, lambda_hi = 5, tol = 1e-4, window = 20, asymptote_tol = 1e-4,
               q_c_values = [16.5, 18, 20, 22], v_c_values = [] (empty: {v_a, 0})
  [output]     dir = \"out\"   (overridden by LINDBLAD_TUNNEL_OUTPUT_DIR)

Exit codes: 0 success, 1 output I/O error, 2 configuration error, 3 numerical failure.";

#[derive(Debug, Parser)]
#[command(name = "lindblad-tunnel", version, about = "Dissipative tunneling of Gaussian wave packets", after_help = DEFAULTS_HELP)]
pub struct Cli {
    /// Maximum number of worker threads for sweeps and ensembles.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one trajectory and write its moments, P and the decay rate.
    Simulate {
        config: PathBuf,
        /// Friction (1/T); defaults to `dynamics.friction`.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Asymptotic tunneling probability over a friction grid.
    Sweep { config: PathBuf },
    /// Bisect for the critical friction.
    Critical { config: PathBuf },
    /// Write one CSV per curve of a figure panel.
    Figures {
        config: PathBuf,
        #[arg(long, value_parser = ["2", "3", "4", "6", "7"])]
        which: String,
    },
    /// Run the oracle suite and write a JSON report.
    Validate {
        config: PathBuf,
        /// Langevin ensemble size.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Print the segments and joins of the configured potential.
    Describe { config: PathBuf },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("reading {path}: {source}")]
    ConfigRead {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} of the oracle checks failed")]
    ChecksFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::ConfigRead { .. } | CliError::Validation(_) => 2,
            CliError::Numerical(_) | CliError::ChecksFailed(_) => 3,
            CliError::Io { .. } => 1,
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Domain(_) | ExperimentError::Potential(_) => CliError::Validation(e.to_string()),
            ExperimentError::Integration(IntegrationError::InvalidControls(_)) => CliError::Validation(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Parses and validates a configuration text; `origin` labels errors.
pub fn parse_config_str(text: &str, origin: &str) -> Result<ScenarioConfig, CliError> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        CliError::Parse {
            path: origin.to_string(),
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    cfg.validate().map_err(CliError::Validation)?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::ConfigRead {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_str(&text, &path.display().to_string())
}

/// TOML echo of the configuration with every default filled in.
pub fn effective_config(cfg: &ScenarioConfig) -> String {
    toml::to_string(cfg).expect("configuration is always representable as TOML")
}

/// `env` wins over the configured directory.
pub fn output_dir(cfg: &ScenarioConfig, env: Option<String>) -> PathBuf {
    env.filter(|s| !s.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(io_err(format!("creating {}", path.display())))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Io {
        context: format!("writing {name}"),
        source: e.into(),
    })?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(format!("writing {name}")))
}

/// Runs the CLI with the output-directory override taken from the environment.
pub fn run(cli: Cli) -> Result<(), CliError> {
    run_with_output_override(cli, std::env::var(OUTPUT_DIR_ENV).ok())
}

pub fn run_with_output_override(cli: Cli, out_env: Option<String>) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be >= 1".into()));
        }
        // Fails only if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let config_path = match &cli.command {
        Command::Simulate { config, .. }
        | Command::Sweep { config }
        | Command::Critical { config }
        | Command::Figures { config, .. }
        | Command::Validate { config, .. }
        | Command::Describe { config } => config.clone(),
    };
    let cfg = parse_config(&config_path)?;
    if let Command::Describe { .. } = cli.command {
        print!("{}", cfg.build_potential().map_err(|e| CliError::Validation(e.to_string()))?.describe());
        return Ok(());
    }

    let dir = output_dir(&cfg, out_env);
    fs::create_dir_all(&dir).map_err(io_err(format!("creating {}", dir.display())))?;
    let mut echo = create(&dir, EFFECTIVE_CONFIG)?;
    echo.write_all(effective_config(&cfg).as_bytes())
        .and_then(|_| echo.flush())
        .map_err(io_err(EFFECTIVE_CONFIG))?;

    let scenario = Scenario::from_config(&cfg)?;
    match cli.command {
        Command::Simulate { lambda, .. } => {
            let lambda = lambda.unwrap_or(cfg.dynamics.friction);
            let run = scenario.run(lambda)?;
            let name = format!("simulate_lambda_{lambda}.csv");
            let mut w = create(&dir, &name)?;
            run.series
                .write_csv(&mut w)
                .and_then(|_| w.flush())
                .map_err(io_err(name.clone()))?;
            println!(
                "lambda={lambda} classification={} P_final={} -> {}",
                run.classification,
                run.final_probability(),
                dir.join(name).display()
            );
        }
        Command::Sweep { .. } => {
            let (grid, critical) = sweep_grid(&cfg, &scenario)?;
            let result = friction_sweep(&scenario, &grid)?;
            let mut w = create(&dir, "sweep.csv")?;
            result
                .write_csv(&mut w)
                .and_then(|_| w.flush())
                .map_err(io_err("sweep.csv"))?;
            #[derive(Serialize)]
            struct Summary<'a> {
                critical: Option<&'a CriticalLambda>,
                entries: &'a [crate::experiment::SweepEntry],
            }
            write_json(&dir, "sweep.json", &Summary {
                critical: critical.as_ref(),
                entries: &result.entries,
            })?;
            for e in &result.entries {
                if let Some(err) = &e.error {
                    log::warn!("lambda={}: {err}", e.lambda);
                }
            }
            println!("{} sweep points -> {}", result.entries.len(), dir.join("sweep.csv").display());
        }
        Command::Critical { .. } => {
            let cr = critical(&cfg, &scenario)?;
            write_json(&dir, "critical.json", &cr)?;
            println!("lambda_cr={} ({} evaluations)", cr.lambda, cr.evaluations);
        }
        Command::Figures { which, .. } => {
            let files = figures(&cfg, &which, &dir)?;
            println!("{} files -> {}", files.len(), dir.display());
        }
        Command::Validate { samples, seed, .. } => {
            let report = run_suite(&cfg, &SuiteOptions { samples, seed }).map_err(|e| CliError::Numerical(e.to_string()))?;
            write_json(&dir, "validate.json", &report)?;
            for c in &report.checks {
                println!(
                    "{} {}: measured {:e}, tolerance {:e}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.measured,
                    c.tolerance
                );
            }
            let failed = report.checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(CliError::ChecksFailed(failed));
            }
        }
        Command::Describe { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn critical(cfg: &ScenarioConfig, scenario: &Scenario) -> Result<CriticalLambda, CliError> {
    let cr = critical_lambda(scenario, cfg.sweep.lambda_lo, cfg.sweep.lambda_hi, cfg.sweep.tol)?;
    for w in &cr.warnings {
        log::warn!("{w}");
    }
    Ok(cr)
}

fn sweep_grid(cfg: &ScenarioConfig, scenario: &Scenario) -> Result<(Vec<f64>, Option<CriticalLambda>), CliError> {
    if cfg.sweep.lambdas.is_empty() {
        let cr = critical(cfg, scenario)?;
        Ok((figure_lambdas(cr.lambda), Some(cr)))
    } else {
        Ok((cfg.sweep.lambdas.clone(), None))
    }
}

/// Writes the CSV files of one figure and returns their names.
pub fn figures(cfg: &ScenarioConfig, which: &str, dir: &Path) -> Result<Vec<String>, CliError> {
    let mut names = Vec::new();
    let mut emit = |name: String, header: &str, rows: Vec<Vec<f64>>| -> Result<(), CliError> {
        let mut w = create(dir, &name)?;
        let mut body = String::with_capacity(rows.len() * 64);
        body.push_str(header);
        body.push('\n');
        for row in rows {
            let cells: Vec<String> = row.into_iter().map(crate::potential::fmt17).collect();
            body.push_str(&cells.join(","));
            body.push('\n');
        }
        w.write_all(body.as_bytes())
            .and_then(|_| w.flush())
            .map_err(io_err(name.clone()))?;
        names.push(name);
        Ok(())
    };
    match which {
        "2" | "3" | "4" => {
            let mut two = cfg.clone();
            two.potential.q_c = None;
            two.potential.v_c = None;
            let scenario = Scenario::from_config(&two)?;
            let (grid, _) = sweep_grid(&two, &scenario)?;
            for lambda in grid {
                let run = scenario.run(lambda)?;
                let states = run.series.states();
                let (name, header, rows) = match which {
                    "2" => (
                        format!("fig2_lambda_{lambda}.csv"),
                        "t,sigma_q,sigma_p",
                        states.iter().map(|s| vec![s.t, s.q, s.p]).collect(),
                    ),
                    "3" => (
                        format!("fig3_lambda_{lambda}.csv"),
                        "t,sigma_qq,sigma_pp,sigma_pq",
                        states.iter().map(|s| vec![s.t, s.qq, s.pp, s.pq]).collect(),
                    ),
                    _ => (
                        format!("fig4_lambda_{lambda}.csv"),
                        "t,P",
                        states.iter().zip(run.tunneling()).map(|(s, &p)| vec![s.t, p]).collect(),
                    ),
                };
                emit(name, header, rows)?;
            }
        }
        "6" | "7" => {
            for v_c in cfg.v_c_values() {
                for &q_c in &cfg.sweep.q_c_values {
                    let mut three = cfg.clone();
                    three.potential.q_c = Some(q_c);
                    three.potential.v_c = Some(v_c);
                    let scenario = Scenario::from_config(&three)?;
                    let grid = if three.sweep.lambdas.is_empty() {
                        let cr = critical(&three, &scenario)?.lambda;
                        if which == "6" {
                            vec![0.0, 0.25 * cr, 1.25 * cr]
                        } else {
                            figure_lambdas(cr)
                        }
                    } else {
                        three.sweep.lambdas.clone()
                    };
                    for lambda in grid {
                        let run = scenario.run(lambda)?;
                        let states = run.series.states();
                        if which == "6" {
                            emit(
                                format!("fig6_vc_{v_c}_qc_{q_c}_lambda_{lambda}.csv"),
                                "t,sigma_q",
                                states.iter().map(|s| vec![s.t, s.q]).collect(),
                            )?;
                        } else {
                            emit(
                                format!("fig7_vc_{v_c}_qc_{q_c}_lambda_{lambda}.csv"),
                                "t,P",
                                states.iter().zip(run.tunneling()).map(|(s, &p)| vec![s.t, p]).collect(),
                            )?;
                        }
                    }
                }
            }
        }
        other => return Err(CliError::Validation(format!("unknown figure {other}"))),
    }
    Ok(names)
}
