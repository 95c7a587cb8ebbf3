//! Run configuration: one TOML file with `[synth]`, `[train]`,
//! `[train.ablation]` and `[oodgen]` sections plus a few top-level keys.
//!
//! ```toml
//! seed = 0              # corpus seed
//! seeds = [0, 1, 2, 3, 4]
//! scorer = "mahalanobis"  # or "all"
//!
//! [synth.text]
//! len = 6
//! dim = 16
//! radius = 1.5
//! noise = 1.0
//!
//! [train]
//! epochs = 100
//! ```
//!
//! Missing keys take their defaults; unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mintood::corpus::SynthConfig;
use mintood::oodgen::OodGenConfig;
use mintood::scoring::Scorer;
use mintood::train::{TrainConfig, Variant};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Which scorers a command evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ScorerSelection {
    All,
    One(Scorer),
}

impl ScorerSelection {
    pub fn scorers(self) -> Vec<Scorer> {
        match self {
            ScorerSelection::All => Scorer::ALL.to_vec(),
            ScorerSelection::One(s) => vec![s],
        }
    }

    /// The scorer used for one-row-per-run tables. `all` reports Mahalanobis.
    pub fn primary(self) -> Scorer {
        match self {
            ScorerSelection::All => Scorer::Mahalanobis,
            ScorerSelection::One(s) => s,
        }
    }
}

impl Default for ScorerSelection {
    fn default() -> Self {
        ScorerSelection::One(Scorer::Mahalanobis)
    }
}

impl fmt::Display for ScorerSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScorerSelection::All => f.write_str("all"),
            ScorerSelection::One(s) => write!(f, "{s}"),
        }
    }
}

impl FromStr for ScorerSelection {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(ScorerSelection::All);
        }
        s.parse::<Scorer>()
            .map(ScorerSelection::One)
            .map_err(|_| CliError::param("scorer", format!("unknown scorer '{s}'")))
    }
}

impl TryFrom<String> for ScorerSelection {
    type Error = CliError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ScorerSelection> for String {
    fn from(s: ScorerSelection) -> String {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seed of the synthetic corpus.
    pub seed: u64,
    /// Training seeds; each produces one result row.
    pub seeds: Vec<u64>,
    pub scorer: ScorerSelection,
    pub out: Option<PathBuf>,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub oodgen: OodGenConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            seeds: vec![0, 1, 2, 3, 4],
            scorer: ScorerSelection::default(),
            out: None,
            synth: SynthConfig::default(),
            train: TrainConfig::default(),
            oodgen: OodGenConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub scorer: Option<ScorerSelection>,
    pub ablation: Option<Variant>,
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config {
            path: origin.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Loads `path` when given, otherwise starts from the defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// `--seed` picks the corpus seed for `synth` (`corpus_seed = true`) and
    /// a single training seed otherwise.
    pub fn apply(&mut self, o: &Overrides, corpus_seed: bool) {
        if let Some(s) = o.seed {
            if corpus_seed {
                self.seed = s;
            } else {
                self.seeds = vec![s];
            }
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(s) = o.scorer {
            self.scorer = s;
        }
        if let Some(v) = o.ablation {
            self.train = v.apply(&self.train);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.train.validate()?;
        self.oodgen.validate()?;
        if self.seeds.is_empty() {
            return Err(CliError::param("seeds", "at least one training seed is required"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(CliError::param("seeds", "training seeds must be distinct"));
        }
        Ok(())
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::param("out", "no output directory given (use --out)"))
    }

    /// Training configuration for one seed.
    pub fn train_for(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.train.clone()
        }
    }
}
