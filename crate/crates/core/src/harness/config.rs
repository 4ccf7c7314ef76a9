use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::evolve::MCESConfig;
use crate::model::ModelConfig;
use crate::simlake::GenConfig;
use crate::{Error, Result};

/// Pipeline variant for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "full")]
    Full,
    /// Skip refinement on observed labels.
    #[serde(rename = "-refine")]
    NoRefine,
    /// One population per task over all lakes.
    #[serde(rename = "-multi")]
    NoMulti,
    /// No gene exchange between populations.
    #[serde(rename = "-inter")]
    NoInter,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoRefine, Variant::NoMulti, Variant::NoInter];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoRefine => "-refine",
            Variant::NoMulti => "-multi",
            Variant::NoInter => "-inter",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        match s {
            "full" => Ok(Variant::Full),
            "-refine" | "no-refine" => Ok(Variant::NoRefine),
            "-multi" | "no-multi" => Ok(Variant::NoMulti),
            "-inter" | "no-inter" => Ok(Variant::NoInter),
            other => Err(Error::Config(format!("unknown variant '{other}'"))),
        }
    }

    /// Directory-safe name.
    pub fn slug(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoRefine => "no-refine",
            Variant::NoMulti => "no-multi",
            Variant::NoInter => "no-inter",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where lake data comes from. Without `dir`, a benchmark is generated
/// from the `[generator]` section.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory holding `meta.csv` and `schema.txt`.
    pub dir: Option<PathBuf>,
}

/// Inclusive end dates of the three chronological splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_end: NaiveDate,
    pub validation_end: NaiveDate,
    pub test_end: NaiveDate,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_end: NaiveDate::from_ymd_opt(2017, 12, 31).expect("valid date"),
            validation_end: NaiveDate::from_ymd_opt(2018, 12, 31).expect("valid date"),
            test_end: NaiveDate::from_ymd_opt(2019, 12, 31).expect("valid date"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    /// Weight of simulated labels where no observation exists.
    pub rho: f64,
    pub epochs: usize,
    /// Adam learning rate for refinement; the search rate when absent.
    pub lr: Option<f64>,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig { rho: 0.1, epochs: 5, lr: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Context days fed before each scored segment.
    pub burn_in: usize,
    /// Segments per evaluation batch.
    pub batch: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { burn_in: 30, batch: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub max_iters: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig { max_iters: 100 }
    }
}

/// Full experiment description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; run `r` uses `seed + r`.
    pub seed: u64,
    pub runs: usize,
    pub variant: Variant,
    pub threads: usize,
    pub out: PathBuf,
    pub data: DataConfig,
    pub generator: GenConfig,
    pub model: ModelConfig,
    pub mces: MCESConfig,
    pub refine: RefineConfig,
    pub split: SplitConfig,
    pub eval: EvalConfig,
    pub cluster: ClusterConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            runs: 5,
            variant: Variant::Full,
            threads: 1,
            out: PathBuf::from("out"),
            data: DataConfig::default(),
            generator: GenConfig::default(),
            model: ModelConfig::default(),
            mces: MCESConfig::default(),
            refine: RefineConfig::default(),
            split: SplitConfig::default(),
            eval: EvalConfig::default(),
            cluster: ClusterConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = ExperimentConfig::parse(&text).map_err(|e| e.at_stage(&path.display().to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(dir) = &cfg.data.dir {
            if dir.is_relative() {
                cfg.data.dir = Some(base.join(dir));
            }
        }
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        let s = &self.split;
        if !(s.train_end < s.validation_end && s.validation_end < s.test_end) {
            return Err(Error::Config(format!(
                "splits must be chronological: train_end {} < validation_end {} < test_end {}",
                s.train_end, s.validation_end, s.test_end
            )));
        }
        if let Some(lr) = self.refine.lr {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("refine.lr must be positive, got {lr}")));
            }
        }
        if !(self.refine.rho >= 0.0 && self.refine.rho.is_finite()) {
            return Err(Error::Config(format!("refine.rho must be non-negative, got {}", self.refine.rho)));
        }
        if self.eval.batch == 0 || self.cluster.max_iters == 0 {
            return Err(Error::Config("eval.batch and cluster.max_iters must be positive".into()));
        }
        self.model.validate()?;
        self.mces.validate()?;
        if self.data.dir.is_none() {
            self.generator.validate()?;
        }
        Ok(())
    }
}
