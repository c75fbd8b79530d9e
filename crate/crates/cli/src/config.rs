//! Run configuration: one TOML section per subcommand, strict keys, and
//! command-line flags layered on top of the file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::CliError;

/// Comma-separated list on the command line; a scalar, an array or the same
/// comma syntax in the config file. Integer items also accept inclusive
/// ranges `a..b` and stepped ranges `a..b:s`.
#[derive(Clone, Debug, PartialEq)]
pub struct List<T>(pub Vec<T>);

pub trait ListItem: Sized {
    fn parse_item(s: &str) -> Result<Vec<Self>, String>;
}

impl ListItem for usize {
    fn parse_item(s: &str) -> Result<Vec<Self>, String> {
        let int = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("bad integer {t:?}: {e}"));
        let Some((lo, rest)) = s.split_once("..") else {
            return Ok(vec![int(s)?]);
        };
        let (hi, step) = match rest.split_once(':') {
            Some((hi, step)) => (int(hi)?, int(step)?),
            None => (int(rest)?, 1),
        };
        let lo = int(lo)?;
        if step == 0 || hi < lo {
            return Err(format!("empty range {s:?}"));
        }
        Ok((lo..=hi).step_by(step).collect())
    }
}

impl ListItem for f64 {
    fn parse_item(s: &str) -> Result<Vec<Self>, String> {
        s.trim().parse().map(|x| vec![x]).map_err(|e| format!("bad number {s:?}: {e}"))
    }
}

impl ListItem for String {
    fn parse_item(s: &str) -> Result<Vec<Self>, String> {
        Ok(vec![s.trim().to_string()])
    }
}

impl<T> List<T> {
    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.0.iter()
    }
}

impl<T: ListItem> FromStr for List<T> {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut out = Vec::new();
        for piece in s.split(',').filter(|p| !p.trim().is_empty()) {
            out.extend(T::parse_item(piece)?);
        }
        if out.is_empty() {
            return Err(format!("empty list {s:?}"));
        }
        Ok(List(out))
    }
}

impl<T: Serialize> Serialize for List<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de, T: Deserialize<'de> + ListItem> Deserialize<'de> for List<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw<T> {
            Many(Vec<T>),
            Text(String),
            One(T),
        }
        match Raw::<T>::deserialize(d)? {
            Raw::Many(v) if v.is_empty() => Err(serde::de::Error::custom("empty list")),
            Raw::Many(v) => Ok(List(v)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
            Raw::One(x) => Ok(List(vec![x])),
        }
    }
}

impl<T: fmt::Display> fmt::Display for List<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

// ---------------------------------------------------------------------------
// Sections. Every field has a default so a section may be omitted entirely.

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenDataConfig {
    pub n: usize,
    pub count: usize,
    pub seed: u64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub margin: f64,
}

impl Default for GenDataConfig {
    fn default() -> Self {
        Self { n: 8, count: 250, seed: 1, lambda_min: 0.0, lambda_max: 2.0, margin: 0.1 }
    }
}

/// Where a command's data comes from: a dataset file, or a fresh dataset
/// generated from `n`, `count` and `data_seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dataset: Option<PathBuf>,
    pub n: usize,
    pub count: usize,
    pub data_seed: u64,
    pub train_fraction: f64,
    pub loss: String,
    pub layers: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub iterations_per_epoch: usize,
    /// 0 trains on the full batch.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            n: 8,
            count: 250,
            data_seed: 1,
            train_fraction: 0.8,
            loss: "kl".into(),
            layers: 10,
            learning_rate: 0.05,
            epochs: 100,
            iterations_per_epoch: 10,
            batch_size: 0,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub model: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub count: usize,
    pub data_seed: u64,
    pub loss: String,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { model: None, dataset: None, count: 200, data_seed: 2, loss: "kl".into() }
    }
}

/// Encoder names: `none`, `global-haar`, `block-haar` (uses `block_size`)
/// and `pvqc` (uses `pvqc_depth`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    /// Without a model a random classifier with `classifier_layers` layers
    /// is attacked.
    pub model: Option<PathBuf>,
    pub n: usize,
    pub classifier_layers: usize,
    pub dataset: Option<PathBuf>,
    pub count: usize,
    pub data_seed: u64,
    pub encoders: List<String>,
    pub block_size: usize,
    pub pvqc_depth: usize,
    pub loss: String,
    pub steps: usize,
    pub step_size: f64,
    pub budget: f64,
    pub layers: usize,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            model: None,
            n: 8,
            classifier_layers: 10,
            dataset: None,
            count: 200,
            data_seed: 2,
            encoders: List(vec!["none".into(), "global-haar".into()]),
            block_size: 2,
            pvqc_depth: 4,
            loss: "kl".into(),
            steps: 50,
            step_size: 0.1,
            budget: 0.5,
            layers: 2,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradStatsConfig {
    pub n: List<usize>,
    pub encoder: String,
    pub block_size: usize,
    pub pvqc_depth: usize,
    pub samples: usize,
    /// Extra runs at these sample counts (at the first `n`) tabulating how
    /// the gradient mean shrinks with the sample size.
    pub sample_sweep: Vec<usize>,
    pub loss: String,
    /// A trained checkpoint; otherwise a random classifier per `n`.
    pub model: Option<PathBuf>,
    pub classifier_layers: usize,
    pub inputs: usize,
    pub adversary_layers: usize,
    pub seed: u64,
}

impl Default for GradStatsConfig {
    fn default() -> Self {
        Self {
            n: List(vec![4, 6, 8, 10]),
            encoder: "global-haar".into(),
            block_size: 2,
            pvqc_depth: 4,
            samples: 1000,
            sample_sweep: Vec::new(),
            loss: "kl".into(),
            model: None,
            classifier_layers: 10,
            inputs: 10,
            adversary_layers: 1,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HaarVerifyConfig {
    pub d: List<usize>,
    pub samples: usize,
    pub seed: u64,
}

impl Default for HaarVerifyConfig {
    fn default() -> Self {
        Self { d: List(vec![2, 4]), samples: 200_000, seed: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskConfig {
    pub model: Option<PathBuf>,
    pub n: usize,
    pub classifier_layers: usize,
    pub tau: List<f64>,
    pub strategy: String,
    pub trials: usize,
    /// Class measures (descending) and target risk for the threshold.
    pub measures: Vec<f64>,
    pub target_risk: f64,
    pub seed: u64,
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self {
            model: None,
            n: 8,
            classifier_layers: 10,
            tau: List(vec![0.125, 0.25, 0.5]),
            strategy: "greedy".into(),
            trials: 200,
            measures: vec![0.5, 0.5],
            target_risk: 0.5,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConcentrationConfig {
    pub n: List<usize>,
    pub tau: List<f64>,
    pub samples: usize,
    pub predicate: String,
    pub alphabet: String,
    pub candidates: usize,
    pub restarts: usize,
    /// Largest `n` at which the discretized exhaustive oracle also runs.
    pub exhaustive_max_n: usize,
    pub seed: u64,
}

impl Default for ConcentrationConfig {
    fn default() -> Self {
        Self {
            n: List(vec![10]),
            tau: List(vec![0.5]),
            samples: 2000,
            predicate: "first_qubit_fidelity".into(),
            alphabet: "haar".into(),
            candidates: 4,
            restarts: 2,
            exhaustive_max_n: 6,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QecSimConfig {
    pub code: List<String>,
    pub levels: List<usize>,
    /// `bit_flip`, `depolarizing` or `random_unitary`.
    pub noise: String,
    /// Error probabilities, or angle bounds for `random_unitary`.
    pub p: List<f64>,
    /// Fraction of exposed qubits; 0 exposes every qubit independently.
    pub tau: f64,
    pub trials: usize,
    /// Random single-qubit unitary errors tried on each distance-3 code.
    pub single_error_trials: usize,
    pub seed: u64,
}

impl Default for QecSimConfig {
    fn default() -> Self {
        Self {
            code: List(vec!["repetition3".into()]),
            levels: List(vec![1, 2]),
            noise: "bit_flip".into(),
            p: List(vec![0.02, 0.05, 0.1]),
            tau: 0.0,
            trials: 100_000,
            single_error_trials: 500,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QdpConfig {
    /// Logical qubits of the toy classifier.
    pub n: usize,
    pub classifier_layers: usize,
    pub floor: List<f64>,
    pub tau: List<f64>,
    pub pairs: usize,
    pub inputs: usize,
    pub candidates: usize,
    pub code: String,
    pub qec_tau: f64,
    pub delta: f64,
    pub qec_pairs: usize,
    pub curve_pairs: usize,
    /// Logical distance the outcome-ratio check is evaluated at; 0 uses
    /// the code's own bound.
    pub distance: f64,
    pub seed: u64,
}

impl Default for QdpConfig {
    fn default() -> Self {
        Self {
            n: 4,
            classifier_layers: 2,
            floor: List(vec![0.02, 0.05, 0.1, 0.2]),
            tau: List(vec![0.25, 0.5, 0.75, 1.0]),
            pairs: 200,
            inputs: 200,
            candidates: 8,
            code: "repetition3".into(),
            qec_tau: 0.01,
            delta: 0.1,
            qec_pairs: 2000,
            curve_pairs: 200,
            distance: 0.02,
            seed: 1,
        }
    }
}

/// The whole config file. Only the running subcommand's section is used,
/// but every section is validated.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub gen_data: Option<toml::Table>,
    pub train: Option<toml::Table>,
    pub eval: Option<toml::Table>,
    pub attack: Option<toml::Table>,
    pub grad_stats: Option<toml::Table>,
    pub haar_verify: Option<toml::Table>,
    pub risk: Option<toml::Table>,
    pub concentration: Option<toml::Table>,
    pub qec_sim: Option<toml::Table>,
    pub qdp: Option<toml::Table>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        file.gen_data.clone().map(|t| typed::<GenDataConfig>("gen_data", t)).transpose()?;
        file.train.clone().map(|t| typed::<TrainConfig>("train", t)).transpose()?;
        file.eval.clone().map(|t| typed::<EvalConfig>("eval", t)).transpose()?;
        file.attack.clone().map(|t| typed::<AttackConfig>("attack", t)).transpose()?;
        file.grad_stats.clone().map(|t| typed::<GradStatsConfig>("grad_stats", t)).transpose()?;
        file.haar_verify.clone().map(|t| typed::<HaarVerifyConfig>("haar_verify", t)).transpose()?;
        file.risk.clone().map(|t| typed::<RiskConfig>("risk", t)).transpose()?;
        file.concentration.clone().map(|t| typed::<ConcentrationConfig>("concentration", t)).transpose()?;
        file.qec_sim.clone().map(|t| typed::<QecSimConfig>("qec_sim", t)).transpose()?;
        file.qdp.clone().map(|t| typed::<QdpConfig>("qdp", t)).transpose()?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn section(&self, key: &str) -> Option<&toml::Table> {
        match key {
            "gen_data" => self.gen_data.as_ref(),
            "train" => self.train.as_ref(),
            "eval" => self.eval.as_ref(),
            "attack" => self.attack.as_ref(),
            "grad_stats" => self.grad_stats.as_ref(),
            "haar_verify" => self.haar_verify.as_ref(),
            "risk" => self.risk.as_ref(),
            "concentration" => self.concentration.as_ref(),
            "qec_sim" => self.qec_sim.as_ref(),
            "qdp" => self.qdp.as_ref(),
            _ => None,
        }
    }
}

fn typed<T: DeserializeOwned>(key: &str, table: toml::Table) -> Result<T, CliError> {
    T::deserialize(toml::Value::Table(table)).map_err(|e| CliError::Config(format!("[{key}] {e}")))
}

/// Section `key` of `file` with every flag that was given layered on top.
pub fn resolve<T: DeserializeOwned, F: Serialize>(file: Option<&ConfigFile>, key: &str, flags: &F) -> Result<T, CliError> {
    let mut table = file.and_then(|f| f.section(key)).cloned().unwrap_or_default();
    let overrides = toml::Table::try_from(flags).map_err(|e| CliError::Config(format!("flag conversion: {e}")))?;
    table.extend(overrides);
    typed(key, table)
}

// ---------------------------------------------------------------------------
// Command-line flags. Each mirrors its section; absent flags leave the file
// (or default) value alone.

#[derive(Clone, Debug, Default, Args, Serialize)]
pub struct GenDataFlags {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lambda_min: Option<f64>,
    #[arg(long)]
    pub lambda_max: Option<f64>,
    #[arg(long)]
    pub margin: Option<f64>,
}

#[derive(Clone, Debug, Default, Args, Serialize)]
pub struct TrainFlags {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub iterations_per_epoch: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, Args, Serialize)]
pub struct EvalFlags {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long)]
    pub loss: Option<String>,
}

#[derive(Clone, Debug, Default, Args, Serialize)]
pub struct AttackFlags {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub classifier_layers: Option<usize>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long)]
    pub encoders: Option<List<String>>,
    #[arg(long)]
    pub block_size: Option<usize>,
    #[arg(long)]
    pub pvqc_depth: Option<usize>,
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub step_size: Option<f64>,
    #[arg(long)]
    pub budget: Option<f64>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, Args, Serialize)]
pub struct GradStatsFlags {
    #[arg(long)]
    pub n: Option<List<usize>>,
    #[arg(long)]
    pub encoder: Option<String>,
    #[arg(long)]
    pub block_size: Option<usize>,
    #[arg(long)]
    pub pvqc_depth: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub sample_sweep: Option<List<usize>>,
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub classifier_layers: Option<usize>,
    #[arg(long)]
    pub inputs: Option<usize>,
    #[arg(long)]
    pub adversary_layers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, Args, Serialize)]
pub struct HaarVerifyFlags {
    #[arg(long)]
    pub d: Option<List<usize>>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, Args, Serialize)]
pub struct RiskFlags {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub classifier_layers: Option<usize>,
    #[arg(long)]
    pub tau: Option<List<f64>>,
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub measures: Option<List<f64>>,
    #[arg(long)]
    pub target_risk: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, Args, Serialize)]
pub struct ConcentrationFlags {
    #[arg(long)]
    pub n: Option<List<usize>>,
    #[arg(long)]
    pub tau: Option<List<f64>>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub predicate: Option<String>,
    #[arg(long)]
    pub alphabet: Option<String>,
    #[arg(long)]
    pub candidates: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub exhaustive_max_n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, Args, Serialize)]
pub struct QecSimFlags {
    #[arg(long)]
    pub code: Option<List<String>>,
    #[arg(long)]
    pub levels: Option<List<usize>>,
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long)]
    pub p: Option<List<f64>>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub single_error_trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, Args, Serialize)]
pub struct QdpFlags {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub classifier_layers: Option<usize>,
    #[arg(long)]
    pub floor: Option<List<f64>>,
    #[arg(long)]
    pub tau: Option<List<f64>>,
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long)]
    pub inputs: Option<usize>,
    #[arg(long)]
    pub candidates: Option<usize>,
    #[arg(long)]
    pub code: Option<String>,
    #[arg(long)]
    pub qec_tau: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub qec_pairs: Option<usize>,
    #[arg(long)]
    pub curve_pairs: Option<usize>,
    #[arg(long)]
    pub distance: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}
