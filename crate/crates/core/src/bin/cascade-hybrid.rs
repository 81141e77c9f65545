use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cascade_hybrid::experiment::{
    aggregate, load_instance, parse_summary, parse_traces, render_plots, run_experiment, summary_to_csv,
    validate_bundle, CellSummary, ExperimentConfig, InstanceSource,
};
use cascade_hybrid::pipeline::{prepare, synthesize_instance, BuildReport, InstanceBundle, PrepareConfig, SynthConfig};
use cascade_hybrid::{Error, Result};

const DEFAULT_OUT: &str = "results";

#[derive(Parser)]
#[command(
    name = "cascade-hybrid",
    version,
    about = "Relevance and diversity aware online learning to rank"
)]
struct Cli {
    /// Settings file of `key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed overriding the one in the settings.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads; defaults to every available core.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Print the resolved settings and exit.
    #[arg(long, global = true)]
    print_config: bool,
    /// Extra `key=value` setting applied after the settings file; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an instance bundle from a ratings file and a topic file.
    Prepare {
        #[arg(long, value_name = "PATH")]
        ratings: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        topics: Option<PathBuf>,
    },
    /// Build a synthetic instance bundle with planted structure.
    Synth,
    /// Run the experiment matrix and write per-run regret traces.
    Run,
    /// Average traces per cell into a summary table.
    Aggregate {
        /// Trace table; defaults to `traces.csv` in the output directory.
        #[arg(long, value_name = "PATH")]
        traces: Option<PathBuf>,
    },
    /// Render SVG regret plots from a summary table.
    Plot {
        /// Summary table; defaults to `summary.csv` in the output directory.
        #[arg(long, value_name = "PATH")]
        summary: Option<PathBuf>,
    },
    /// Check the invariants of an instance.
    Validate {
        /// Bundle directory; defaults to the instance of the experiment settings.
        #[arg(long, value_name = "DIR")]
        bundle: Option<PathBuf>,
    },
}

fn split_setting(s: &str) -> Result<(&str, &str)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{s}'")))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

fn experiment_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    for s in &cli.set {
        let (key, value) = split_setting(s)?;
        config.set(key, value)?;
    }
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn required_out(cli: &Cli) -> Result<&Path> {
    cli.out
        .as_deref()
        .ok_or_else(|| Error::Config("this command needs --out DIR".into()))
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn print_report(bundle: &InstanceBundle, report: &BuildReport, dir: &Path) {
    println!("wrote {}", dir.display());
    println!(
        "items {}  topics {}  relevance dim {}  users {}",
        bundle.catalog().len(),
        bundle.catalog().d(),
        bundle.catalog().m(),
        bundle.users().len()
    );
    println!("positive rate {:.4}", report.positive_rate);
    println!(
        "dropped: {} items without topic, {} items without signal, {} users, topics [{}]",
        report.items_without_topic,
        report.items_without_signal,
        report.dropped_users,
        report.dropped_topics.join(", ")
    );
    println!("negative relevance pairs {}", report.negative_pairs);
    println!("config hash {}", bundle.provenance().config_hash);
}

fn cmd_prepare(cli: &Cli, ratings: Option<&Path>, topics: Option<&Path>) -> Result<()> {
    let mut config = PrepareConfig::new("", "");
    if let Some(path) = &cli.config {
        config.apply(&read_text(path)?)?;
    }
    if let Some(r) = ratings {
        config.ratings = r.to_owned();
    }
    if let Some(t) = topics {
        config.topics = t.to_owned();
    }
    for s in &cli.set {
        let (key, value) = split_setting(s)?;
        config.set(key, value)?;
    }
    if let Some(seed) = cli.seed {
        config.build.seed = seed;
    }
    if cli.print_config {
        print!("{config}");
        return Ok(());
    }
    if config.ratings.as_os_str().is_empty() || config.topics.as_os_str().is_empty() {
        return Err(Error::Config("prepare needs a ratings file and a topic file".into()));
    }
    let out = required_out(cli)?;
    let (bundle, report) = prepare(&config)?;
    bundle.write(out)?;
    print_report(&bundle, &report, out);
    Ok(())
}

fn cmd_synth(cli: &Cli) -> Result<()> {
    let config = experiment_config(cli)?;
    let mut synth = match config.instance {
        InstanceSource::Synthetic(s) => s,
        InstanceSource::Bundle(_) => return Err(Error::Config("synth needs synth.* settings, not 'bundle'".into())),
    };
    if let Some(seed) = cli.seed {
        synth.seed = seed;
    }
    if cli.print_config {
        let SynthConfig {
            users,
            items,
            topics,
            m,
            sparsity,
            topic_share,
            seed,
        } = synth;
        println!("synth.users = {users}\nsynth.items = {items}\nsynth.topics = {topics}\nsynth.m = {m}");
        println!("synth.sparsity = {sparsity}\nsynth.topic_share = {topic_share}\nsynth.seed = {seed}");
        return Ok(());
    }
    let out = required_out(cli)?;
    let (bundle, report, moved) = synthesize_instance(&synth)?;
    bundle.write(out)?;
    print_report(&bundle, &report, out);
    println!("users with shifted relevance preference {moved}");
    Ok(())
}

fn print_finals(summary: &[CellSummary]) {
    println!(
        "{:<12} {:>6} {:>4} {:>4} {:>5} {:>12} {:>9}",
        "policy", "lambda", "K", "d", "runs", "final_regret", "stderr"
    );
    for s in summary {
        if let Some(p) = s.final_point() {
            let stderr = p.stderr.map_or_else(|| "-".to_owned(), |e| format!("{e:.3}"));
            println!(
                "{:<12} {:>6} {:>4} {:>4} {:>5} {:>12.3} {:>9}",
                s.cell.policy.policy_name(),
                s.cell.lambda,
                s.cell.k,
                s.cell.d,
                p.runs,
                p.mean,
                stderr
            );
        }
    }
}

fn cmd_run(cli: &Cli) -> Result<()> {
    let config = experiment_config(cli)?;
    if cli.print_config {
        print!("{config}");
        return Ok(());
    }
    let out = out_dir(cli);
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let traces = run_experiment(&config, Some(&out), jobs)?;
    println!("wrote {} runs to {}", traces.len(), out.join("traces.csv").display());
    print_finals(&aggregate(&traces)?);
    Ok(())
}

fn cmd_aggregate(cli: &Cli, traces: Option<&Path>) -> Result<()> {
    let out = out_dir(cli);
    let path = traces.map_or_else(|| out.join("traces.csv"), Path::to_owned);
    let summary = aggregate(&parse_traces(&read_text(&path)?, &path)?)?;
    fs::create_dir_all(&out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    let dest = out.join("summary.csv");
    write_text(&dest, &summary_to_csv(&summary))?;
    println!("wrote {}", dest.display());
    print_finals(&summary);
    Ok(())
}

fn cmd_plot(cli: &Cli, summary: Option<&Path>) -> Result<()> {
    let out = out_dir(cli);
    let path = summary.map_or_else(|| out.join("summary.csv"), Path::to_owned);
    let cells = parse_summary(&read_text(&path)?, &path)?;
    for file in render_plots(&cells, &out.join("plots"))? {
        println!("wrote {}", file.display());
    }
    Ok(())
}

fn cmd_validate(cli: &Cli, bundle: Option<&Path>) -> Result<bool> {
    let seed = cli.seed.unwrap_or(0);
    let instance = match bundle {
        Some(dir) => InstanceBundle::read(dir)?,
        None => load_instance(&experiment_config(cli)?)?,
    };
    let checks = validate_bundle(&instance, seed)?;
    for c in &checks {
        println!("{c}");
    }
    let passed = checks.iter().filter(|c| c.passed).count();
    println!("{passed} of {} checks passed", checks.len());
    Ok(passed == checks.len())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Prepare { ratings, topics } => cmd_prepare(&cli, ratings.as_deref(), topics.as_deref()).map(|_| true),
        Command::Synth => cmd_synth(&cli).map(|_| true),
        Command::Run => cmd_run(&cli).map(|_| true),
        Command::Aggregate { traces } => cmd_aggregate(&cli, traces.as_deref()).map(|_| true),
        Command::Plot { summary } => cmd_plot(&cli, summary.as_deref()).map(|_| true),
        Command::Validate { bundle } => cmd_validate(&cli, bundle.as_deref()),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
