//! Experiment harness: strict TOML configs with flag overrides, run
//! directories keyed by the config hash, and CSV/JSON/gnuplot outputs.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Subcommand;
use serde::Serialize;

use config::*;
pub use error::CliError;
pub use output::{Check, Outcome, Table};

#[derive(Clone, Debug, Subcommand)]
pub enum CommandFlags {
    /// Generate a labelled cluster-Ising ground-state dataset.
    GenData(GenDataFlags),
    /// Train the ancilla classifier.
    Train(TrainFlags),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalFlags),
    /// Gradient attacks on plain and encoded classifiers.
    Attack(AttackFlags),
    /// Encoded-gradient statistics at the attacker's starting point.
    GradStats(GradStatsFlags),
    /// Monte Carlo Haar moments against the closed forms.
    HaarVerify(HaarVerifyFlags),
    /// Adversarial risk under local product-state attacks.
    Risk(RiskFlags),
    /// Concentration-of-measure probe on product states.
    Concentration(ConcentrationFlags),
    /// Logical error rates and single-error correction checks.
    QecSim(QecSimFlags),
    /// Empirical privacy, the risk bound and amplification through a code.
    Qdp(QdpFlags),
}

/// A subcommand with its fully resolved config section.
#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    GenData(GenDataConfig),
    Train(TrainConfig),
    Eval(EvalConfig),
    Attack(AttackConfig),
    GradStats(GradStatsConfig),
    HaarVerify(HaarVerifyConfig),
    Risk(RiskConfig),
    Concentration(ConcentrationConfig),
    QecSim(QecSimConfig),
    Qdp(QdpConfig),
}

impl Command {
    pub fn resolve(file: Option<&ConfigFile>, flags: &CommandFlags) -> Result<Self, CliError> {
        Ok(match flags {
            CommandFlags::GenData(f) => Command::GenData(resolve(file, "gen_data", f)?),
            CommandFlags::Train(f) => Command::Train(resolve(file, "train", f)?),
            CommandFlags::Eval(f) => Command::Eval(resolve(file, "eval", f)?),
            CommandFlags::Attack(f) => Command::Attack(resolve(file, "attack", f)?),
            CommandFlags::GradStats(f) => Command::GradStats(resolve(file, "grad_stats", f)?),
            CommandFlags::HaarVerify(f) => Command::HaarVerify(resolve(file, "haar_verify", f)?),
            CommandFlags::Risk(f) => Command::Risk(resolve(file, "risk", f)?),
            CommandFlags::Concentration(f) => Command::Concentration(resolve(file, "concentration", f)?),
            CommandFlags::QecSim(f) => Command::QecSim(resolve(file, "qec_sim", f)?),
            CommandFlags::Qdp(f) => Command::Qdp(resolve(file, "qdp", f)?),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Attack(_) => "attack",
            Command::GradStats(_) => "grad-stats",
            Command::HaarVerify(_) => "haar-verify",
            Command::Risk(_) => "risk",
            Command::Concentration(_) => "concentration",
            Command::QecSim(_) => "qec-sim",
            Command::Qdp(_) => "qdp",
        }
    }

    fn section_key(&self) -> String {
        self.name().replace('-', "_")
    }

    pub fn seed(&self) -> u64 {
        match self {
            Command::GenData(c) => c.seed,
            Command::Train(c) => c.seed,
            Command::Eval(c) => c.data_seed,
            Command::Attack(c) => c.seed,
            Command::GradStats(c) => c.seed,
            Command::HaarVerify(c) => c.seed,
            Command::Risk(c) => c.seed,
            Command::Concentration(c) => c.seed,
            Command::QecSim(c) => c.seed,
            Command::Qdp(c) => c.seed,
        }
    }

    /// Files the run reads; their digests enter the config hash.
    pub fn inputs(&self) -> Vec<PathBuf> {
        let v: Vec<&Option<PathBuf>> = match self {
            Command::Train(c) => vec![&c.dataset],
            Command::Eval(c) => vec![&c.model, &c.dataset],
            Command::Attack(c) => vec![&c.model, &c.dataset],
            Command::GradStats(c) => vec![&c.model],
            Command::Risk(c) => vec![&c.model],
            _ => vec![],
        };
        v.into_iter().flatten().cloned().collect()
    }

    fn section<T: Serialize>(&self, c: &T) -> Result<String, CliError> {
        let mut doc = toml::Table::new();
        let body = toml::Table::try_from(c).map_err(|e| CliError::Config(e.to_string()))?;
        doc.insert(self.section_key(), toml::Value::Table(body));
        toml::to_string(&doc).map_err(|e| CliError::Config(e.to_string()))
    }

    /// The resolved section as a standalone config file.
    pub fn to_toml(&self) -> Result<String, CliError> {
        match self {
            Command::GenData(c) => self.section(c),
            Command::Train(c) => self.section(c),
            Command::Eval(c) => self.section(c),
            Command::Attack(c) => self.section(c),
            Command::GradStats(c) => self.section(c),
            Command::HaarVerify(c) => self.section(c),
            Command::Risk(c) => self.section(c),
            Command::Concentration(c) => self.section(c),
            Command::QecSim(c) => self.section(c),
            Command::Qdp(c) => self.section(c),
        }
    }

    pub fn execute(&self) -> Result<Outcome, CliError> {
        match self {
            Command::GenData(c) => commands::gen_data(c),
            Command::Train(c) => commands::train(c),
            Command::Eval(c) => commands::eval(c),
            Command::Attack(c) => commands::attack(c),
            Command::GradStats(c) => commands::grad_stats(c),
            Command::HaarVerify(c) => commands::haar_verify(c),
            Command::Risk(c) => commands::risk(c),
            Command::Concentration(c) => commands::concentration(c),
            Command::QecSim(c) => commands::qec_sim(c),
            Command::Qdp(c) => commands::qdp(c),
        }
    }
}

/// Digests of the input files, in order.
fn input_digests(cmd: &Command) -> Result<Vec<(String, String)>, CliError> {
    cmd.inputs()
        .iter()
        .map(|p| {
            let bytes = std::fs::read(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            Ok((p.display().to_string(), output::sha256_hex(&bytes)))
        })
        .collect()
}

/// SHA-256 over the command name, the canonical config and input digests.
pub fn config_hash(cmd: &Command) -> Result<String, CliError> {
    let mut text = format!("{}\n{}", cmd.name(), cmd.to_toml()?);
    for (p, d) in input_digests(cmd)? {
        text.push_str(&format!("input {p} {d}\n"));
    }
    Ok(output::sha256_hex(text.as_bytes()))
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub dir: PathBuf,
    pub outcome: Outcome,
}

/// Runs `cmd` into its own directory under `root`.
pub fn run(cmd: &Command, root: &Path, force: bool) -> Result<RunReport, CliError> {
    let config_toml = cmd.to_toml()?;
    let hash = config_hash(cmd)?;
    let dir = output::run_dir(root, cmd.name(), &hash);
    output::prepare_run_dir(&dir, force)?;
    let start = Instant::now();
    let result = cmd.execute().and_then(|outcome| {
        let config: toml::Value = toml::from_str(&config_toml).map_err(|e| CliError::Config(e.to_string()))?;
        let prov = output::Provenance {
            command: cmd.name().into(),
            version: output::version_string(),
            config_hash: hash.clone(),
            seed: cmd.seed(),
            rng: qshield::rng::RNG_ALGORITHM.into(),
            config: serde_json::to_value(config).map_err(|e| CliError::Io(e.to_string()))?,
            inputs: input_digests(cmd)?,
        };
        output::write_outcome(&dir, &config_toml, &prov, &outcome, start.elapsed())?;
        Ok(outcome)
    });
    match result {
        Ok(outcome) => Ok(RunReport { dir, outcome }),
        Err(e) => {
            output::mark_failed(&dir, &e);
            Err(e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolved_config_round_trips_through_its_file() {
        let flags = CommandFlags::GradStats(GradStatsFlags { samples: Some(50), n: Some("2..4:2".parse().unwrap()), ..Default::default() });
        let cmd = Command::resolve(None, &flags).unwrap();
        let text = cmd.to_toml().unwrap();
        let file = ConfigFile::parse(&text).unwrap();
        let again = Command::resolve(Some(&file), &CommandFlags::GradStats(GradStatsFlags::default())).unwrap();
        assert_eq!(cmd, again);
        assert_eq!(config_hash(&cmd).unwrap(), config_hash(&again).unwrap());
    }

    #[test]
    fn hash_depends_on_config() {
        let a = Command::resolve(None, &CommandFlags::HaarVerify(HaarVerifyFlags { samples: Some(100), ..Default::default() })).unwrap();
        let b = Command::resolve(None, &CommandFlags::HaarVerify(HaarVerifyFlags { samples: Some(101), ..Default::default() })).unwrap();
        assert_ne!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
    }
}
