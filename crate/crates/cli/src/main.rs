use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use decopt::harness::{self, experiment, Completion, ExperimentConfig};
use decopt::metrics::Metric;
use decopt::registry::Registry;
use decopt::schedule::StepSchedule;
use decopt::Error;

#[derive(Parser)]
#[command(name = "decopt", version, about = "Decentralized optimization experiments")]
struct Cli {
    /// Worker threads for independent runs (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Added to every seed in the config.
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured graph as an edge list plus its weight matrices.
    GenGraph(Common),
    /// Run every algorithm and seed; write CSVs and plots.
    Run(Common),
    /// Repeat `run` once per constant step size.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated step sizes replacing every constant schedule.
        #[arg(long, value_delimiter = ',', required = true)]
        alphas: Vec<f64>,
    },
    /// Iterations-to-target speedup study from the config's `speedup` section.
    Speedup(Common),
    /// Redraw charts from trace CSVs in a directory.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
    Partial,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::UnknownMethod(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf), Failure> {
    let mut cfg = harness::load_config(&common.config)?;
    if let Some(base) = common.config.parent() {
        experiment::resolve_paths(&mut cfg, base);
    }
    if common.seed_offset != 0 {
        cfg.seeds = cfg
            .seeds
            .iter()
            .map(|s| s.checked_add(common.seed_offset))
            .collect::<Option<Vec<u64>>>()
            .ok_or_else(|| Failure::Config("seed offset overflows".into()))?;
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| Path::new("out").join(harness::slug(&cfg.name)));
    Ok((cfg, out))
}

fn run_once(cfg: &ExperimentConfig, out: &Path, registry: &Registry) -> Result<Completion, Failure> {
    let result = harness::run_experiment(cfg, registry)?;
    let files = harness::write_results(&result, cfg, out)?;
    let plots = harness::write_plots(&result, out)?;
    log::info!("wrote {} files to {}", files.len() + plots.len(), out.display());
    for l in &result.labels {
        let last: Vec<String> = l
            .mean
            .as_ref()
            .and_then(|t| t.values.last())
            .map(|row| result.metrics.iter().zip(row).map(|(m, v)| format!("{m}={v:.3e}")).collect())
            .unwrap_or_default();
        println!("{:<20} {}/{} ok  {}", l.label, l.completed, l.total, last.join("  "));
    }
    Ok(result.completion())
}

fn finish(c: Completion) -> Result<(), Failure> {
    match c {
        Completion::Complete => Ok(()),
        Completion::Partial => Err(Failure::Partial),
        Completion::Failed => Err(Failure::Runtime("every run failed".into())),
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let registry = Registry::with_builtin();
    match cli.command {
        Command::GenGraph(common) => {
            let (cfg, out) = load(&common)?;
            let g = experiment::build_graph(&cfg.graph)?;
            std::fs::create_dir_all(&out).map_err(Error::from)?;
            std::fs::write(out.join("graph.txt"), g.to_edge_list()).map_err(Error::from)?;
            println!("{} nodes, {} edges", g.n(), g.edge_count());
            for (name, rule) in [("w", cfg.weights.w), ("a", cfg.weights.a), ("b", cfg.weights.b)] {
                match experiment::build_weights(rule, &g) {
                    Ok(m) => {
                        std::fs::write(out.join(format!("{name}.csv")), m.to_csv()).map_err(Error::from)?;
                        println!("{name}: {rule:?}, digest {}", m.digest());
                    }
                    Err(e) => log::warn!("{name}: {e}"),
                }
            }
            Ok(())
        }
        Command::Run(common) => {
            let (cfg, out) = load(&common)?;
            finish(run_once(&cfg, &out, &registry)?)
        }
        Command::Sweep { common, alphas } => {
            let (cfg, out) = load(&common)?;
            let mut worst = Completion::Complete;
            for alpha in alphas {
                let mut c = cfg.clone();
                for alg in &mut c.algorithms {
                    if let StepSchedule::Constant { .. } = alg.schedule {
                        alg.schedule = StepSchedule::constant(alpha);
                    }
                }
                println!("alpha = {alpha:e}");
                let status = run_once(&c, &out.join(format!("alpha_{alpha:e}")), &registry)?;
                if status != Completion::Complete {
                    worst = Completion::Partial;
                }
            }
            finish(worst)
        }
        Command::Speedup(common) => {
            let (cfg, out) = load(&common)?;
            let cells = harness::run_speedup(&cfg, &registry)?;
            std::fs::create_dir_all(&out).map_err(Error::from)?;
            std::fs::write(out.join("speedup.csv"), harness::speedup_csv(&cells)).map_err(Error::from)?;
            let method = cfg.speedup.as_ref().map(|s| s.method.clone()).unwrap_or_default();
            match harness::speedup_svg(&cells, &method) {
                Ok(svg) => std::fs::write(out.join("speedup.svg"), svg).map_err(Error::from)?,
                Err(e) => log::warn!("no speedup chart: {e}"),
            }
            print!("{}", harness::speedup_csv(&cells));
            if cells.iter().any(|c| c.speedup.is_none()) {
                return Err(Failure::Partial);
            }
            Ok(())
        }
        Command::Plot { input, out } => {
            let out = out.unwrap_or_else(|| input.clone());
            let mut paths: Vec<PathBuf> = std::fs::read_dir(&input)
                .map_err(Error::from)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .filter(|p| {
                    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                    stem != "summary" && stem != "speedup" && !stem.contains("_seed")
                })
                .collect();
            paths.sort();
            let mut traces = Vec::new();
            let mut metrics: Vec<Metric> = Vec::new();
            for p in paths {
                let t = harness::read_trace(&p)?;
                for &m in &t.metrics {
                    if !metrics.contains(&m) {
                        metrics.push(m);
                    }
                }
                traces.push((t.method.clone(), t));
            }
            if traces.is_empty() {
                return Err(Failure::Runtime(format!("no trace CSVs in {}", input.display())));
            }
            let files = harness::plot_traces(&traces, &metrics, &out)?;
            println!("wrote {} charts to {}", files.len(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Partial) => {
            eprintln!("warning: some runs did not complete");
            ExitCode::from(3)
        }
    }
}
