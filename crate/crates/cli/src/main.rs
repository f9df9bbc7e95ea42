use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use currencynet::engine::{run_scenario, EngineError, RunOutput};
use currencynet::justice::{convergence_report, predicted_mint_fraction};
use currencynet::repro::{self, Suite, SuiteReport};
use currencynet::scenario::{validate_config, ConfigError, Level, RateSpec, ScenarioConfig};
use serde_json::json;
use sha2::{Digest, Sha256};

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_REPRO_FAIL: u8 = 3;

/// Simulate egalitarian currency networks and check their justice metrics.
#[derive(Debug, Parser)]
#[command(name = "currencynet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write its output bundle.
    Run(RunArgs),
    /// Validate a scenario and print warnings and predictions.
    Check {
        #[command(flatten)]
        source: Source,
    },
    /// Run a built-in reproduction suite (lemma1, thm1, sybil, solver or all).
    Repro {
        suite: String,
        /// Also write the suite reports as JSON into this directory.
        #[arg(long, env = "CURRENCYNET_OUT")]
        out: Option<PathBuf>,
        /// Print the reports as a table or as JSON.
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Print nothing; only the exit code reports the outcome.
        #[arg(long)]
        quiet: bool,
    },
    /// List the built-in scenarios, or print one of them.
    Scenarios { name: Option<String> },
}

#[derive(Debug, clap::Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Scenario file (.json or .toml).
    #[arg(long, value_name = "PATH")]
    scenario: Option<PathBuf>,
    /// A built-in scenario by name (see `currencynet scenarios`).
    #[arg(long, value_name = "NAME")]
    builtin: Option<String>,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    /// Override the number of steps.
    #[arg(long)]
    steps: Option<u64>,
    /// Override the random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to `out/<scenario name>`.
    #[arg(long, env = "CURRENCYNET_OUT")]
    out: Option<PathBuf>,
    /// Table format of the bundle.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Print nothing on success.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// A failure and the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl ToString) -> Self {
        Failure { code: EXIT_CONFIG, message: message.to_string() }
    }

    fn runtime(message: impl ToString) -> Self {
        Failure { code: EXIT_RUNTIME, message: message.to_string() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::config(e)
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(e) => Failure::config(e),
            other => Failure::runtime(other),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::runtime(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Check { source } => cmd_check(&source),
        Command::Repro { suite, out, format, quiet } => cmd_repro(&suite, out.as_deref(), format, quiet),
        Command::Scenarios { name } => cmd_scenarios(name.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load(source: &Source) -> Result<ScenarioConfig, Failure> {
    match (&source.scenario, &source.builtin) {
        (Some(path), _) => ScenarioConfig::load(path).map_err(|e| match e {
            ConfigError::Parse { .. } | ConfigError::Invalid(_) => Failure::config(format!("{}: {e}", path.display())),
            other => other.into(),
        }),
        (None, Some(name)) => repro::scenario(name).ok_or_else(|| {
            let known: Vec<&str> = repro::SCENARIOS.iter().map(|(n, _)| *n).collect();
            Failure::config(format!("no built-in scenario `{name}` (known: {})", known.join(", ")))
        }),
        (None, None) => unreachable!("clap requires one source"),
    }
}

fn cmd_check(source: &Source) -> Result<u8, Failure> {
    let config = load(source)?;
    let diagnostics = validate_config(&config);
    for d in &diagnostics {
        println!("{d}");
    }
    let errors = diagnostics.iter().filter(|d| d.level == Level::Error).count();
    let warnings = diagnostics.iter().filter(|d| d.level == Level::Warning).count();
    println!("{}: {errors} error(s), {warnings} warning(s)", config.name);
    Ok(if errors == 0 { 0 } else { EXIT_CONFIG })
}

fn cmd_run(args: RunArgs) -> Result<u8, Failure> {
    let mut config = load(&args.source)?;
    if let Some(steps) = args.steps {
        config.steps = steps;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let dir = args.out.clone().or_else(|| config.output.clone()).unwrap_or_else(|| Path::new("out").join(&config.name));
    for d in validate_config(&config).iter().filter(|d| d.level == Level::Warning) {
        if !args.quiet {
            eprintln!("{d}");
        }
    }
    let out = run_scenario(&config)?;
    fs::create_dir_all(&dir).map_err(|e| Failure::runtime(format!("cannot create {}: {e}", dir.display())))?;
    let summary = summary(&out)?;
    let files = write_bundle(&out, &dir, args.format, &summary)?;
    if !args.quiet {
        print_summary(&out, &summary);
        println!("wrote {} files to {}", files, dir.display());
    }
    Ok(0)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), Failure> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(Failure::runtime)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes the tables, the final network, the effective scenario and a
/// manifest with content hashes. Returns the number of files written.
fn write_bundle(out: &RunOutput, dir: &Path, format: Format, summary: &serde_json::Value) -> Result<usize, Failure> {
    let mut names: Vec<&str> = Vec::new();
    match format {
        Format::Csv => {
            type Writer = fn(&RunOutput, &mut BufWriter<File>) -> io::Result<()>;
            let tables: [(&str, Writer); 5] = [
                ("metrics.csv", |o, w| o.write_metrics_csv(w)),
                ("rates.csv", |o, w| o.write_rates_csv(w)),
                ("series.csv", |o, w| o.write_series_csv(w)),
                ("solver.csv", |o, w| o.write_solver_csv(w)),
                ("justice.csv", |o, w| o.write_justice_csv(w)),
            ];
            for (name, write) in tables {
                let mut w = create(dir, name)?;
                write(out, &mut w)?;
                w.flush()?;
                names.push(name);
            }
        }
        Format::Json => {
            let metrics: Vec<_> = out.history.metric_rows(|a| out.name(a)).collect();
            write_json(dir, "metrics.json", &metrics)?;
            write_json(dir, "steps.json", &out.records)?;
            write_json(dir, "solver.json", &out.equilibria)?;
            let justice: Vec<_> = out
                .justice
                .samples
                .iter()
                .map(|s| {
                    json!({
                        "t": s.t,
                        "agent": out.name(s.agent),
                        "value": s.value,
                        "target": s.target,
                        "deviation": (s.value - s.target).abs(),
                    })
                })
                .collect();
            write_json(dir, "justice.json", &justice)?;
            names.extend(["metrics.json", "steps.json", "solver.json", "justice.json"]);
        }
    }
    write_json(dir, "summary.json", summary)?;
    write_json(dir, "network.json", out.history.current())?;
    let scenario = serde_json::to_vec_pretty(&out.config).map_err(Failure::runtime)?;
    fs::write(dir.join("scenario.json"), &scenario)?;
    names.extend(["summary.json", "network.json", "scenario.json"]);

    let mut hashes = serde_json::Map::new();
    for name in &names {
        hashes.insert(name.to_string(), json!(sha256_hex(&fs::read(dir.join(name))?)));
    }
    let manifest = json!({
        "scenario": out.config.name,
        "seed": out.config.seed,
        "steps": out.config.steps,
        "config_sha256": sha256_hex(&scenario),
        "format": match format { Format::Csv => "csv", Format::Json => "json" },
        "versions": {
            "currencynet": env!("CARGO_PKG_VERSION"),
        },
        "reproduce": "currencynet run --scenario scenario.json",
        "files": hashes,
    });
    write_json(dir, "manifest.json", &manifest)?;
    Ok(names.len() + 1)
}

fn summary(out: &RunOutput) -> Result<serde_json::Value, Failure> {
    let window = out.config.window_fraction();
    let limit = |series: Vec<f64>| convergence_report(&series, window).ok();
    let members = out.config.final_members();
    let mrs = limit(out.mrs12_series());
    // the scripted limit when there is one, else the measured trailing mean
    let mrs_limit = match &out.config.rates {
        RateSpec::Exogenous { schedule } => schedule.limit12(),
        RateSpec::Endogenous { .. } => mrs.as_ref().map(|c| c.limit),
    };
    let prediction = match (members.as_slice(), mrs_limit) {
        ([v1, v2], Some(mrs)) => predicted_mint_fraction(v1, v2, mrs).ok().map(|p| p.fraction),
        _ => None,
    };
    let sybil = if out.config.owners.is_empty() { None } else { Some(out.sybil_report().map_err(Failure::runtime)?) };
    Ok(json!({
        "scenario": out.config.name,
        "steps": out.config.steps,
        "seed": out.config.seed,
        "agents": out.names,
        "window": window,
        "justice": out.justice_summary(None),
        "ex12": limit(out.ex12_series()),
        "mrs12": mrs,
        "a_over_t": if out.config.k() == 2 { limit(out.a_over_t_series()) } else { None },
        "predicted_x": prediction,
        "equilibria": out.equilibria.len(),
        "skipped_equilibria": out.skipped,
        "sybil": sybil,
    }))
}

fn print_summary(out: &RunOutput, summary: &serde_json::Value) {
    let justice = out.justice_summary(None);
    println!("{}: {} steps, seed {}, {} agents", out.config.name, out.config.steps, out.config.seed, out.names.len());
    println!("  justice: target {:.6}, max |J - target| = {:.3e}", justice.target, justice.max_deviation);
    for key in ["ex12", "mrs12", "a_over_t"] {
        if let Some(limit) = summary[key]["limit"].as_f64() {
            println!("  {key}: trailing mean {limit:.6}");
        }
    }
    if let Some(x) = summary["predicted_x"].as_f64() {
        println!("  predicted x = {x:.6}");
    }
    let skipped = out.skipped.iter().filter(|s| s.t > 0).count();
    if skipped > 0 {
        println!("  {skipped} equilibration step(s) after t = 0 kept the rates in force");
    }
    if let Some(spread) = summary["sybil"]["genuine_spread"].as_f64() {
        println!("  genuine owners' value spread {spread:.3e}");
        for d in summary["sybil"]["duplicates"].as_array().into_iter().flatten() {
            println!("  duplicate owner {} share ratio {:.4}", d["person"].as_str().unwrap_or("?"), d["ratio"].as_f64().unwrap_or(f64::NAN));
        }
    }
}

fn cmd_repro(suite: &str, out: Option<&Path>, format: Format, quiet: bool) -> Result<u8, Failure> {
    let suites: Vec<Suite> = if suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![suite.parse().map_err(Failure::config)?]
    };
    // Suites are independent, so they run side by side.
    let reports: Vec<SuiteReport> = std::thread::scope(|s| {
        let handles: Vec<_> = suites.iter().map(|&suite| s.spawn(move || repro::run_suite(suite))).collect();
        handles.into_iter().map(|h| h.join().expect("suite thread panicked")).collect::<Result<_, _>>()
    })
    .map_err(Failure::runtime)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        for r in &reports {
            write_json(dir, &format!("repro-{}.json", r.suite), r)?;
        }
    }
    if !quiet {
        match format {
            Format::Csv => reports.iter().for_each(|r| print!("{r}")),
            Format::Json => println!("{}", serde_json::to_string_pretty(&reports).map_err(Failure::runtime)?),
        }
    }
    let pass = reports.iter().all(SuiteReport::pass);
    if !quiet {
        println!("{}", if pass { "PASS" } else { "FAIL" });
    }
    Ok(if pass { 0 } else { EXIT_REPRO_FAIL })
}

fn cmd_scenarios(name: Option<&str>) -> Result<u8, Failure> {
    match name {
        None => {
            for (name, _) in repro::SCENARIOS {
                println!("{name}");
            }
        }
        Some(name) => {
            let (_, text) = repro::SCENARIOS
                .iter()
                .find(|(n, _)| *n == name)
                .ok_or_else(|| Failure::config(format!("no built-in scenario `{name}`")))?;
            print!("{text}");
        }
    }
    Ok(0)
}
