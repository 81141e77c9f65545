use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::environment::{run_rng, run_seed, run_step};
use crate::error::{Error, Result};
use crate::oracle::{greedy_benchmark, list_reward};
use crate::pipeline::{synthesize_instance, InstanceBundle};
use crate::policy::{theoretical_gamma, CascadeLearner, FeatureKind, FeatureMap};

use super::config::{ExperimentConfig, GammaSetting, InstanceSource};

pub const TRACE_HEADER: &str = "policy,lambda,K,d,user,repeat,step,cum_regret,clicks,clamps";

/// Identifies one simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunKey {
    pub policy: FeatureKind,
    pub lambda: f64,
    pub k: usize,
    pub d: usize,
    /// Original id of the simulated user.
    pub user: u64,
    pub repeat: usize,
}

impl RunKey {
    fn file_name(&self) -> String {
        format!(
            "{}_l{}_k{}_d{}_u{}_r{}.csv",
            self.policy.policy_name(),
            self.lambda,
            self.k,
            self.d,
            self.user,
            self.repeat
        )
    }
}

/// Cumulative counters at one logged step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub step: u64,
    pub cum_regret: f64,
    pub clicks: u64,
    pub clamps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub key: RunKey,
    pub seed: u64,
    pub points: Vec<TracePoint>,
}

impl RegretTrace {
    pub fn final_regret(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.cum_regret)
    }

    fn write_rows(&self, out: &mut String) {
        let k = &self.key;
        for p in &self.points {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                k.policy.policy_name(),
                k.lambda,
                k.k,
                k.d,
                k.user,
                k.repeat,
                p.step,
                p.cum_regret,
                p.clicks,
                p.clamps
            )
            .expect("writing to a string cannot fail");
        }
    }
}

/// Renders traces as CSV with [`TRACE_HEADER`].
pub fn traces_to_csv(traces: &[RegretTrace]) -> String {
    let mut out = format!("{TRACE_HEADER}\n");
    for t in traces {
        t.write_rows(&mut out);
    }
    out
}

/// Parses CSV written by [`traces_to_csv`]. Consecutive rows with the same
/// run key form one trace.
pub fn parse_traces(text: &str, path: &Path) -> Result<Vec<RegretTrace>> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_owned(),
        line,
        message,
    };
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(TRACE_HEADER) {
        return Err(err(1, format!("expected header '{TRACE_HEADER}'")));
    }
    let mut traces: Vec<RegretTrace> = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 10 {
            return Err(err(line_no, format!("expected 10 columns, found {}", f.len())));
        }
        let bad = |what: &str| err(line_no, format!("bad {what}"));
        let key = RunKey {
            policy: f[0].parse().map_err(|_| bad("policy"))?,
            lambda: f[1].parse().map_err(|_| bad("lambda"))?,
            k: f[2].parse().map_err(|_| bad("K"))?,
            d: f[3].parse().map_err(|_| bad("d"))?,
            user: f[4].parse().map_err(|_| bad("user"))?,
            repeat: f[5].parse().map_err(|_| bad("repeat"))?,
        };
        let point = TracePoint {
            step: f[6].parse().map_err(|_| bad("step"))?,
            cum_regret: f[7].parse().map_err(|_| bad("cum_regret"))?,
            clicks: f[8].parse().map_err(|_| bad("clicks"))?,
            clamps: f[9].parse().map_err(|_| bad("clamps"))?,
        };
        match traces.last_mut() {
            Some(t) if t.key == key => t.points.push(point),
            _ => traces.push(RegretTrace {
                seed: 0,
                key,
                points: vec![point],
            }),
        }
    }
    Ok(traces)
}

/// Loads the instance named by the configuration.
pub fn load_instance(config: &ExperimentConfig) -> Result<InstanceBundle> {
    match &config.instance {
        InstanceSource::Bundle(path) => InstanceBundle::read(path),
        InstanceSource::Synthetic(s) => Ok(synthesize_instance(s)?.0),
    }
}

/// All runs of the matrix, in output order: policy, lambda, K, d, user,
/// repeat. Each entry carries the user's index in the restricted bundle.
fn plan(config: &ExperimentConfig, bundles: &[InstanceBundle]) -> Result<Vec<(RunKey, usize, usize)>> {
    let mut runs = Vec::new();
    for &policy in &config.policies {
        for &lambda in &config.lambdas {
            for &k in &config.k_values {
                for (di, (&d, bundle)) in config.d_values.iter().zip(bundles).enumerate() {
                    if k > bundle.catalog().len() {
                        return Err(Error::Config(format!(
                            "K = {k} exceeds the {} items of the instance",
                            bundle.catalog().len()
                        )));
                    }
                    for (ui, user) in bundle.users().iter().take(config.users).enumerate() {
                        for repeat in 0..config.repeats {
                            let key = RunKey {
                                policy,
                                lambda,
                                k,
                                d,
                                user: user.id,
                                repeat,
                            };
                            runs.push((key, di, ui));
                        }
                    }
                }
            }
        }
    }
    Ok(runs)
}

/// Simulates one run and logs every `log_stride` steps.
pub fn simulate_run(
    config: &ExperimentConfig,
    bundle: &InstanceBundle,
    user_index: usize,
    key: &RunKey,
) -> Result<RegretTrace> {
    let catalog = bundle.catalog();
    let user = bundle.user_model(user_index, key.lambda)?;
    let greedy = greedy_benchmark(&user, catalog, key.k)?;
    let benchmark = list_reward(&user, &greedy, catalog)?;
    let features = FeatureMap::with_transform(key.policy, catalog, config.xz_transform);
    let gamma = match config.gamma {
        GammaSetting::Fixed(g) => g,
        GammaSetting::Theoretical => {
            theoretical_gamma(features.m(), features.d(), config.n_steps, key.k, user.weight_norm())?
        }
    };
    let mut learner = CascadeLearner::from_features(features, gamma)?;
    let seed = run_seed(config.master_seed, key.user, key.repeat as u64);
    let mut rng = run_rng(config.master_seed, key.user, key.repeat as u64);

    let mut points = Vec::with_capacity(config.trace_len());
    let (mut cum_regret, mut clicks, mut clamps) = (0.0, 0u64, 0u64);
    for step in 1..=config.n_steps {
        let outcome = run_step(&mut learner, &user, catalog, key.k, &mut rng)?;
        cum_regret += benchmark - outcome.expected_reward;
        clicks += outcome.feedback.clicked_index(key.k).is_some() as u64;
        clamps += outcome.clamp_count as u64;
        if step % config.log_stride == 0 {
            points.push(TracePoint {
                step,
                cum_regret,
                clicks,
                clamps,
            });
        }
    }
    if learner.state().rebuilds() > 0 {
        log::warn!(
            "{}: inverses were rebuilt {} times",
            key.file_name(),
            learner.state().rebuilds()
        );
    }
    Ok(RegretTrace {
        key: key.clone(),
        seed,
        points,
    })
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_run(path: &Path, seed: u64, expected_len: usize) -> Result<Option<RegretTrace>> {
    let Ok(text) = fs::read_to_string(path) else {
        return Ok(None);
    };
    let mut traces = parse_traces(&text, path)?;
    match traces.pop() {
        Some(mut t) if traces.is_empty() && t.points.len() == expected_len => {
            t.seed = seed;
            Ok(Some(t))
        }
        _ => Ok(None),
    }
}

/// Output files of [`run_experiment`] under `out`.
pub struct RunOutputs {
    pub traces_csv: PathBuf,
    pub runs_dir: PathBuf,
}

impl RunOutputs {
    pub fn new(out: &Path) -> Self {
        Self {
            traces_csv: out.join("traces.csv"),
            runs_dir: out.join("runs"),
        }
    }
}

/// Runs the whole matrix on `jobs` threads.
///
/// With an output directory, every finished run is written to its own file
/// under `runs/` right away and runs already on disk are reused, so an
/// interrupted experiment resumes where it stopped. The merged `traces.csv`,
/// the resolved `config.txt` and `metadata.txt` are written at the end. The
/// output bytes do not depend on `jobs`.
pub fn run_experiment(config: &ExperimentConfig, out: Option<&Path>, jobs: usize) -> Result<Vec<RegretTrace>> {
    config.validate()?;
    let instance = load_instance(config)?;
    let bundles = config
        .d_values
        .iter()
        .map(|&d| {
            instance
                .restrict_topics(d)
                .map_err(|e| Error::Config(format!("d = {d}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    for (bundle, d) in bundles.iter().zip(&config.d_values) {
        if bundle.users().len() < config.users {
            return Err(Error::Config(format!(
                "d = {d}: instance has {} users, {} requested",
                bundle.users().len(),
                config.users
            )));
        }
    }
    let runs = plan(config, &bundles)?;

    let outputs = out.map(RunOutputs::new);
    if let (Some(dir), Some(o)) = (out, &outputs) {
        fs::create_dir_all(&o.runs_dir).map_err(|e| Error::io(&o.runs_dir, e))?;
        let stamp = o.runs_dir.join("config.txt");
        let resolved = config.to_string();
        match fs::read_to_string(&stamp) {
            Ok(existing) if existing != resolved => {
                return Err(Error::Config(format!(
                    "{} holds runs of a different configuration",
                    dir.display()
                )));
            }
            Ok(_) => {}
            Err(_) => write_atomic(&stamp, &resolved)?,
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))?;
    let total = runs.len();
    let finished = AtomicUsize::new(0);
    let traces = pool.install(|| {
        runs.par_iter()
            .map(|(key, di, ui)| {
                let seed = run_seed(config.master_seed, key.user, key.repeat as u64);
                let file = outputs.as_ref().map(|o| o.runs_dir.join(key.file_name()));
                if let Some(path) = &file {
                    if let Some(done) = read_run(path, seed, config.trace_len())? {
                        return Ok(done);
                    }
                }
                let trace = simulate_run(config, &bundles[*di], *ui, key)?;
                if let Some(path) = &file {
                    write_atomic(path, &traces_to_csv(std::slice::from_ref(&trace)))?;
                }
                let n = finished.fetch_add(1, Ordering::Relaxed) + 1;
                log::info!("run {n}/{total} done: {}", key.file_name());
                Ok(trace)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    if let (Some(dir), Some(o)) = (out, &outputs) {
        write_atomic(&o.traces_csv, &traces_to_csv(&traces))?;
        write_atomic(&dir.join("config.txt"), &config.to_string())?;
        write_atomic(&dir.join("metadata.txt"), &metadata(config, &instance))?;
    }
    Ok(traces)
}

fn metadata(config: &ExperimentConfig, instance: &InstanceBundle) -> String {
    format!(
        "instance_hash = {}\n\
         regret = expected reward of the greedy benchmark list minus expected reward of the displayed list, summed over steps\n\
         log_stride = {}\n\
         error_band = mean +/- 1 standard error (sample standard deviation / sqrt(runs))\n\
         run_seed = first 8 bytes (little endian) of sha256(master seed, user id, repeat), shared across policies and cells\n",
        instance.provenance().config_hash,
        config.log_stride
    )
}
