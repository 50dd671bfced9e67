use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use heatlab::config::{bundled, ExperimentConfig, BUNDLED};
use heatlab::harnack::PhiMode;
use heatlab::render::{ensure_writable, write_run};
use heatlab::suite::{run_suite, Experiment, SuiteOptions, SuiteReport};

/// Exit code for runs that could not complete.
const EXIT_ERROR: u8 = 3;

#[derive(Parser)]
#[command(name = "heatlab", version, about = "Heat kernel and Harnack checks for discrete jump-diffusion forms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a configuration without building anything.
    Validate(Common),
    /// Build the space and form, compute the heat kernel and write it out.
    Build(Common),
    /// Run a single configured check by key.
    Check {
        name: String,
        #[command(flatten)]
        common: Common,
    },
    /// Run every configured check and the implication matrix.
    Suite(Common),
    /// Summarize a report written by `suite` or `check`.
    Report {
        #[arg(long, env = "HEATLAB_OUT")]
        out: PathBuf,
    },
    /// List bundled configurations.
    List,
}

#[derive(Args)]
struct Common {
    /// Config path (TOML or .json), or the name of a bundled config.
    #[arg(long)]
    config: String,
    /// Output directory; defaults to `output_dir` in the config, then `heatlab-out/<name>`.
    #[arg(long, env = "HEATLAB_OUT")]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Keep every k-th interior point in envelope fits.
    #[arg(long)]
    grid_thin: Option<usize>,
    /// Override the Harnack check mode.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    Necessary,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, String> {
        let path = Path::new(&self.config);
        if path.exists() {
            ExperimentConfig::load(path).map_err(|e| e.to_string())
        } else {
            bundled(&self.config).map_err(|e| format!("{e} (and no file at {})", path.display()))
        }
    }

    fn out_dir(&self, config: &ExperimentConfig) -> PathBuf {
        self.out
            .clone()
            .or_else(|| config.output_dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("heatlab-out").join(&config.name))
    }

    fn options(&self, only: Option<String>) -> SuiteOptions {
        SuiteOptions {
            threads: self.threads,
            grid_thin: self.grid_thin,
            mode: self.mode.map(|m| match m {
                ModeArg::Full => PhiMode::Full,
                ModeArg::Necessary => PhiMode::Necessary,
            }),
            only,
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn run(cli: Cli) -> Result<u8, String> {
    match cli.command {
        Command::List => {
            for (name, _) in BUNDLED {
                println!("{name}");
            }
            Ok(0)
        }
        Command::Validate(common) => {
            let config = common.load()?;
            let warnings = config.validate().map_err(|e| e.to_string())?;
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            let n = config.point_count().map_err(|e| e.to_string())?;
            println!("{}: {} points, {} checks, hash {}", config.name, n, config.checks.len(), config.hash());
            Ok(0)
        }
        Command::Build(common) => {
            let config = common.load()?;
            let dir = common.out_dir(&config);
            ensure_writable(&dir).map_err(|e| e.to_string())?;
            let exp = Experiment::build(&config).map_err(|e| e.to_string())?;
            let kernel = exp.kernel().map_err(|e| e.to_string())?;
            let write = |name: &str, bytes: &[u8]| {
                std::fs::write(dir.join(name), bytes).map_err(|e| format!("{}: {e}", dir.join(name).display()))
            };
            write("points.csv", exp.space().points_csv().as_bytes())?;
            write("kernel.bin", &kernel.to_binary())?;
            write("kernel.csv", kernel.to_csv().as_bytes())?;
            println!("{}: {} points, {} times, written to {}", config.name, exp.space().len(), exp.times.len(), dir.display());
            Ok(0)
        }
        Command::Check { name, common } => run_and_write(&common, Some(name)),
        Command::Suite(common) => run_and_write(&common, None),
        Command::Report { out } => {
            let path = out.join("report.json");
            let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            let report: SuiteReport = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
            print_summary(&report);
            Ok(report.exit_code() as u8)
        }
    }
}

fn run_and_write(common: &Common, only: Option<String>) -> Result<u8, String> {
    let config = common.load()?;
    let dir = common.out_dir(&config);
    ensure_writable(&dir).map_err(|e| e.to_string())?;
    let run = run_suite(&config, &common.options(only)).map_err(|e| e.to_string())?;
    write_run(&run, &dir).map_err(|e| e.to_string())?;
    print_summary(&run.report);
    println!("written to {}", dir.display());
    Ok(run.report.exit_code() as u8)
}

fn print_summary(report: &SuiteReport) {
    println!("{} ({} points)", report.name, report.points);
    let secs = &report.provenance.timestamp.check_seconds;
    for (i, c) in report.checks.iter().enumerate() {
        let seconds = secs.get(i).filter(|(k, _)| *k == c.key).map_or(f64::NAN, |(_, s)| *s);
        let mark = if c.matched { "ok " } else { "DEV" };
        let constants: Vec<String> =
            c.report.constants.iter().take(4).map(|(k, v)| format!("{k}={:.4}", v.0)).collect();
        println!(
            "  {mark} {:<24} {:<22} expect {:<9} {:>7.2}s  {}",
            c.key,
            format!("{:?}", c.report.verdict),
            format!("{:?}", c.expect),
            seconds,
            constants.join(" ")
        );
        for n in &c.report.notes {
            println!("        note: {n}");
        }
    }
    for i in &report.implications {
        println!("  {} => {:?}: {:?}", i.antecedent, i.consequents.keys().collect::<Vec<_>>(), i.status);
    }
    for o in &report.observations {
        println!("  observation {}: {:?}", o.name, o.observed);
    }
    for d in &report.deviations {
        println!("  deviation: {d}");
    }
}
