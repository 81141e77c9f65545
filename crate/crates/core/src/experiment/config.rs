//! Experiment configuration files.
//!
//! One `key = value` pair per line; `#` starts a comment; list values are
//! comma separated. Unknown keys are rejected. See [`ExperimentConfig`] for
//! the keys and their defaults.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::pipeline::SynthConfig;
use crate::policy::{FeatureKind, XzTransform};

/// Where the experiment instance comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum InstanceSource {
    /// A bundle directory written by `prepare` or `synth`.
    Bundle(PathBuf),
    /// A synthetic instance built in memory.
    Synthetic(SynthConfig),
}

/// Exploration parameter of every policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaSetting {
    Fixed(f64),
    /// The confidence radius of the regret bound, per run.
    Theoretical,
}

impl fmt::Display for GammaSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fixed(g) => write!(f, "{g}"),
            Self::Theoretical => f.write_str("theoretical"),
        }
    }
}

impl FromStr for GammaSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "theoretical" {
            return Ok(Self::Theoretical);
        }
        match s.parse::<f64>() {
            Ok(g) if g.is_finite() && g >= 0.0 => Ok(Self::Fixed(g)),
            _ => Err(Error::Config(format!(
                "gamma must be a nonnegative number or 'theoretical', got '{s}'"
            ))),
        }
    }
}

/// A full experiment matrix.
///
/// | key | meaning | default |
/// |---|---|---|
/// | `bundle` | instance directory (replaces the synthetic instance) | unset |
/// | `synth.users`, `synth.items`, `synth.topics`, `synth.m`, `synth.sparsity`, `synth.topic_share`, `synth.seed` | synthetic instance | see [`SynthConfig`] |
/// | `policies` | any of `hybrid, linucb, linucb-full, lsb, lsb-full` | all five |
/// | `lambdas` | mixing weights in `[0, 1]` | `0.0, 0.5, 1.0` |
/// | `k` | list lengths | `10` |
/// | `d` | topic counts | `10` |
/// | `steps` | interactions per run | `20000` |
/// | `users` | simulated users per cell | `25` |
/// | `repeats` | runs per user | `2` |
/// | `gamma` | number or `theoretical` | `1` |
/// | `seed` | master seed | `0` |
/// | `log_stride` | steps between logged points; must divide `steps` | `50` |
/// | `xz_transform` | `clamp` or `minmax` for `lsb-full` | `clamp` |
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub instance: InstanceSource,
    pub policies: Vec<FeatureKind>,
    pub lambdas: Vec<f64>,
    pub k_values: Vec<usize>,
    pub d_values: Vec<usize>,
    pub n_steps: u64,
    pub users: usize,
    pub repeats: usize,
    pub gamma: GammaSetting,
    pub master_seed: u64,
    pub log_stride: u64,
    pub xz_transform: XzTransform,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            instance: InstanceSource::Synthetic(SynthConfig::default()),
            policies: FeatureKind::ALL.to_vec(),
            lambdas: vec![0.0, 0.5, 1.0],
            k_values: vec![10],
            d_values: vec![10],
            n_steps: 20_000,
            users: 25,
            repeats: 2,
            gamma: GammaSetting::Fixed(1.0),
            master_seed: 0,
            log_stride: 50,
            xz_transform: XzTransform::default(),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| parse_value(key, v))
        .collect()
}

fn join<T: fmt::Display>(values: &[T]) -> String {
    values.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if let Some(field) = key.strip_prefix("synth.") {
            let synth = match &mut self.instance {
                InstanceSource::Synthetic(s) => s,
                InstanceSource::Bundle(_) => {
                    return Err(Error::Config(format!("'{key}' conflicts with 'bundle'")));
                }
            };
            match field {
                "users" => synth.users = parse_value(key, value)?,
                "items" => synth.items = parse_value(key, value)?,
                "topics" => synth.topics = parse_value(key, value)?,
                "m" => synth.m = parse_value(key, value)?,
                "sparsity" => synth.sparsity = parse_value(key, value)?,
                "topic_share" => synth.topic_share = parse_value(key, value)?,
                "seed" => synth.seed = parse_value(key, value)?,
                _ => return Err(Error::Config(format!("unknown key '{key}'"))),
            }
            return Ok(());
        }
        match key {
            "bundle" => {
                if matches!(&self.instance, InstanceSource::Synthetic(s) if *s != SynthConfig::default()) {
                    return Err(Error::Config("'bundle' conflicts with 'synth.*' settings".into()));
                }
                self.instance = InstanceSource::Bundle(PathBuf::from(value));
            }
            "policies" => self.policies = parse_list(key, value)?,
            "lambdas" => self.lambdas = parse_list(key, value)?,
            "k" => self.k_values = parse_list(key, value)?,
            "d" => self.d_values = parse_list(key, value)?,
            "steps" => self.n_steps = parse_value(key, value)?,
            "users" => self.users = parse_value(key, value)?,
            "repeats" => self.repeats = parse_value(key, value)?,
            "gamma" => self.gamma = value.parse()?,
            "seed" => self.master_seed = parse_value(key, value)?,
            "log_stride" => self.log_stride = parse_value(key, value)?,
            "xz_transform" => self.xz_transform = parse_value(key, value)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("policies", self.policies.is_empty()),
            ("lambdas", self.lambdas.is_empty()),
            ("k", self.k_values.is_empty()),
            ("d", self.d_values.is_empty()),
        ];
        if let Some((key, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::Config(format!("'{key}' must list at least one value")));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(Error::Config(format!("lambda {l} outside [0, 1]")));
        }
        if self.k_values.contains(&0) || self.d_values.contains(&0) {
            return Err(Error::Config("list lengths and topic counts must be positive".into()));
        }
        if self.n_steps == 0 || self.users == 0 || self.repeats == 0 {
            return Err(Error::Config("steps, users and repeats must be positive".into()));
        }
        if self.log_stride == 0 || !self.n_steps.is_multiple_of(self.log_stride) {
            return Err(Error::Config(format!(
                "log_stride {} must divide steps {}",
                self.log_stride, self.n_steps
            )));
        }
        Ok(())
    }

    /// Number of logged points per run.
    pub fn trace_len(&self) -> usize {
        (self.n_steps / self.log_stride) as usize
    }
}

impl FromStr for ExperimentConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", idx + 1)))?;
            config
                .set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", idx + 1)))?;
        }
        config.validate()?;
        Ok(config)
    }
}

/// The fully resolved configuration, in the file grammar.
impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.instance {
            InstanceSource::Bundle(path) => writeln!(f, "bundle = {}", path.display())?,
            InstanceSource::Synthetic(s) => {
                writeln!(f, "synth.users = {}", s.users)?;
                writeln!(f, "synth.items = {}", s.items)?;
                writeln!(f, "synth.topics = {}", s.topics)?;
                writeln!(f, "synth.m = {}", s.m)?;
                writeln!(f, "synth.sparsity = {}", s.sparsity)?;
                writeln!(f, "synth.topic_share = {}", s.topic_share)?;
                writeln!(f, "synth.seed = {}", s.seed)?;
            }
        }
        let policies: Vec<&str> = self.policies.iter().map(|p| p.policy_name()).collect();
        writeln!(f, "policies = {}", policies.join(", "))?;
        writeln!(f, "lambdas = {}", join(&self.lambdas))?;
        writeln!(f, "k = {}", join(&self.k_values))?;
        writeln!(f, "d = {}", join(&self.d_values))?;
        writeln!(f, "steps = {}", self.n_steps)?;
        writeln!(f, "users = {}", self.users)?;
        writeln!(f, "repeats = {}", self.repeats)?;
        writeln!(f, "gamma = {}", self.gamma)?;
        writeln!(f, "seed = {}", self.master_seed)?;
        writeln!(f, "log_stride = {}", self.log_stride)?;
        writeln!(f, "xz_transform = {}", self.xz_transform)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_prints_round_trip() {
        let text = "# desk run\npolicies = hybrid, linucb\nlambdas = 0.2,0.8\nk = 5, 10\nsteps = 1000 # short\nlog_stride = 100\ngamma = theoretical\nsynth.items = 50\n";
        let config: ExperimentConfig = text.parse().unwrap();
        assert_eq!(config.policies, vec![FeatureKind::Hybrid, FeatureKind::LinearZ]);
        assert_eq!(config.lambdas, vec![0.2, 0.8]);
        assert_eq!(config.k_values, vec![5, 10]);
        assert_eq!(config.gamma, GammaSetting::Theoretical);
        assert_eq!(config.trace_len(), 10);
        match &config.instance {
            InstanceSource::Synthetic(s) => assert_eq!(s.items, 50),
            other => panic!("unexpected {other:?}"),
        }
        let again: ExperimentConfig = config.to_string().parse().unwrap();
        assert_eq!(again, config);
        assert_eq!(
            ExperimentConfig::default()
                .to_string()
                .parse::<ExperimentConfig>()
                .unwrap(),
            ExperimentConfig::default()
        );
    }

    #[test]
    fn bundle_source() {
        let config: ExperimentConfig = "bundle = data/ml\n".parse().unwrap();
        assert_eq!(config.instance, InstanceSource::Bundle("data/ml".into()));
        assert!("synth.items = 10\nbundle = x\n".parse::<ExperimentConfig>().is_err());
        assert!("bundle = x\nsynth.items = 10\n".parse::<ExperimentConfig>().is_err());
    }

    #[test]
    fn rejects_bad_settings() {
        for bad in [
            "steps = 1000\nlog_stride = 300",
            "lambdas = 1.5",
            "policies =",
            "nonsense = 1",
            "gamma = -1",
            "k = 0",
            "just words",
            "policies = ucb",
        ] {
            assert!(
                matches!(bad.parse::<ExperimentConfig>(), Err(Error::Config(_))),
                "{bad}"
            );
        }
    }
}
