use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use lipobs::apps::{
    compare_report, grid_configs, run_batch, run_scenario, RunMode, RunOutcome, ScenarioConfig, SynthesisRecord, SYNTHESIS_FILE,
};
use lipobs::lmi::{assemble, SynthesisProblem};
use lipobs::sdp::write_sdpa;

const OUT_ENV: &str = "LIPOBS_OUT_DIR";
const USAGE: u8 = 2;
const FAILED: u8 = 1;

/// H∞ observer synthesis for discrete-time systems with slope-bounded nonlinearities.
#[derive(Parser, Debug)]
#[command(name = "lipobs", version)]
struct Cli {
    /// Print every pipeline stage.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the synthesis LMIs and verify the gain.
    Design(RunArgs),
    /// Simulate plant, observer and EKF; designs first unless --synthesis is given.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// A synthesis.json (or a bundle directory containing one) to reuse.
        #[arg(long)]
        synthesis: Option<PathBuf>,
    },
    /// Tabulate two or more result bundles.
    Compare {
        #[arg(required = true, num_args = 1..)]
        bundles: Vec<PathBuf>,
        /// Also write the table as CSV to this file (suffixed if it exists).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write the assembled SDP in SDPA sparse format without solving.
    ExportSdpa {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Destination file (suffixed if it exists); stdout when omitted.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Design on the example-1 (θ₁, θ₂) grid under both conditions.
    Bench {
        #[command(flatten)]
        run: RunArgs,
        /// Worker threads; defaults to the number of logical cores.
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    /// Scenario file (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Override a config value: a dotted path or a unique key, e.g. theta1=0.1.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Seed of the first simulation run.
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; falls back to the config, then $LIPOBS_OUT_DIR, then ./runs.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Run(String),
}

fn load(args: &ScenarioArgs, seed: Option<u64>) -> Result<ScenarioConfig, Failure> {
    if !args.config.is_file() {
        return Err(Failure::Usage(format!("config file {} does not exist", args.config.display())));
    }
    let mut overrides = args.overrides.clone();
    if let Some(s) = seed {
        overrides.push(format!("simulation.seed={s}"));
    }
    ScenarioConfig::load(&args.config, &overrides).map_err(|e| Failure::Usage(e.to_string()))
}

fn out_root(cli: Option<&Path>, cfg: &ScenarioConfig) -> PathBuf {
    cli.map(Path::to_path_buf)
        .or_else(|| cfg.output.dir.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn fresh_path(path: &Path) -> PathBuf {
    if !path.exists() {
        return path.to_path_buf();
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    (1..)
        .map(|i| path.with_file_name(format!("{stem}-{i}{ext}")))
        .find(|p| !p.exists())
        .expect("unbounded suffix search")
}

fn report(out: &RunOutcome, verbose: u8) {
    if verbose > 0 {
        for st in &out.stages {
            eprintln!("[{}] {}: {}", st.stage, if st.ok { "ok" } else { "FAILED" }, st.message);
        }
    }
    let sqrt_mu = out.synthesis.as_ref().and_then(|r| r.sqrt_mu).map_or("-".to_string(), |s| format!("{s:.6e}"));
    println!("{}  status={:?}  sqrt_mu={sqrt_mu}", out.dir.display(), out.status);
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let v = cli.verbose;
    match cli.command {
        Command::Design(args) => {
            let cfg = load(&args.scenario, args.seed)?;
            let out = run_scenario(&cfg, &out_root(args.out.as_deref(), &cfg), RunMode::Design).map_err(|e| Failure::Run(e.to_string()))?;
            report(&out, v);
            Ok(out.exit_code() as u8)
        }
        Command::Simulate { run, synthesis } => {
            let cfg = load(&run.scenario, run.seed)?;
            let mode = match synthesis {
                Some(p) => {
                    let file = if p.is_dir() { p.join(SYNTHESIS_FILE) } else { p };
                    let rec = SynthesisRecord::read(&file).map_err(|e| Failure::Usage(e.to_string()))?;
                    RunMode::Simulate(Box::new(rec))
                }
                None => RunMode::Full,
            };
            let out = run_scenario(&cfg, &out_root(run.out.as_deref(), &cfg), mode).map_err(|e| Failure::Run(e.to_string()))?;
            report(&out, v);
            if let Some(m) = &out.metrics {
                println!("observer RMSE {:?}", m.observer_rmse_mean);
                if let Some(e) = &m.ekf_rmse_mean {
                    println!("EKF RMSE      {e:?}");
                }
            }
            Ok(out.exit_code() as u8)
        }
        Command::Compare { bundles, csv } => {
            let cmp = compare_report(&bundles).map_err(|e| Failure::Usage(e.to_string()))?;
            print!("{}", cmp.to_text());
            if let Some(p) = csv {
                let p = fresh_path(&p);
                std::fs::write(&p, cmp.to_csv()).map_err(|e| Failure::Run(format!("{}: {e}", p.display())))?;
                eprintln!("wrote {}", p.display());
            }
            Ok(0)
        }
        Command::ExportSdpa { scenario, output } => {
            let cfg = load(&scenario, None)?;
            let bs = cfg.build_system().map_err(|e| Failure::Usage(e.to_string()))?;
            let compiled = SynthesisProblem::normalized(&bs, cfg.synthesis.options())
                .and_then(|p| assemble(&p))
                .map_err(|e| Failure::Run(e.to_string()))?;
            let text = write_sdpa(&compiled.sdp, &format!("{} {}", cfg.name, cfg.synthesis.theorem));
            match output {
                Some(p) => {
                    let p = fresh_path(&p);
                    std::fs::write(&p, text).map_err(|e| Failure::Run(format!("{}: {e}", p.display())))?;
                    println!("{}", p.display());
                }
                None => print!("{text}"),
            }
            Ok(0)
        }
        Command::Bench { run, workers } => {
            let cfg = load(&run.scenario, run.seed)?;
            let root = out_root(run.out.as_deref(), &cfg);
            let bench_dir = lipobs::apps::create_run_dir(&root, &format!("{}-bench", cfg.name)).map_err(|e| Failure::Run(e.to_string()))?;
            let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let results = run_batch(&grid_configs(&cfg), &bench_dir, &RunMode::Design, workers);
            let mut dirs = Vec::new();
            for r in results {
                let out = r.map_err(|e| Failure::Run(e.to_string()))?;
                if v > 0 {
                    report(&out, v);
                }
                dirs.push(out.dir);
            }
            let cmp = compare_report(&dirs).map_err(|e| Failure::Run(e.to_string()))?;
            let text = cmp.to_text();
            print!("{text}");
            for (name, body) in [("comparison.txt", text), ("comparison.csv", cmp.to_csv())] {
                std::fs::write(bench_dir.join(name), body).map_err(|e| Failure::Run(e.to_string()))?;
            }
            eprintln!("bundles in {}", bench_dir.display());
            Ok(0)
        }
    }
}

fn subcommand_help(args: &[String]) -> Option<String> {
    let mut cmd = Cli::command();
    let name = args.iter().skip(1).find(|a| !a.starts_with('-'))?;
    let sub = cmd.find_subcommand_mut(name)?;
    Some(sub.render_help().to_string())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            eprintln!("{e}");
            if let Some(h) = subcommand_help(&argv) {
                eprintln!("{h}");
            }
            return ExitCode::from(USAGE);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            if let Some(h) = subcommand_help(&argv) {
                eprintln!("\n{h}");
            }
            ExitCode::from(USAGE)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(FAILED)
        }
    }
}
