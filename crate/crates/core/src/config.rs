//! Experiment configuration files (TOML).
//!
//! One seed drives everything: it becomes the scene seed, the model
//! initialization seed and the training seed. A `seed` key inside `[scene]`
//! or `[train]` is rejected so that no second source of randomness can creep
//! in.
//!
//! ```toml
//! seed = 7
//! count = 20000
//!
//! [scene]
//! n_rb = 1
//! n_subbands = 1
//! array = { n1 = 2, n2 = 2, o1 = 4, o2 = 4, nr = 2 }
//!
//! [model]
//! architecture = "imcsinet_s"
//! feedback_bits = [2, 4, 6, 8]
//!
//! [train]
//! epochs = 200
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::SceneConfig;
use crate::error::{ensure, Error, Result};
use crate::nn::spec::{Architecture, ModelSpec, DEFAULT_LEAKY_SLOPE};
use crate::nn::train::TrainConfig;
use crate::quant::QuantizerSpec;
use crate::type2::Type2Config;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    Type1,
    Type2,
    #[default]
    Nn,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(usize),
    Many(Vec<usize>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<usize> {
        match self {
            OneOrMany::One(x) => vec![*x],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

fn default_slope() -> f64 {
    DEFAULT_LEAKY_SLOPE
}

fn default_divisor() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub architecture: Architecture,
    /// Total feedback bits; a list trains one model per entry.
    pub feedback_bits: OneOrMany,
    /// Bits per element of the uniform quantizer (multi-RB networks only).
    #[serde(default)]
    pub quantizer_bits: Option<u32>,
    #[serde(default = "default_slope")]
    pub leaky_slope: f64,
    #[serde(default = "default_divisor")]
    pub width_divisor: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Evaluate binarized networks with the stochastic training quantizer
    /// instead of the sign function.
    #[serde(default)]
    pub stochastic: bool,
}

fn default_count() -> usize {
    20_000
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub mode: Option<FeedbackMode>,
    /// Samples synthesized by `gen`, before the split.
    pub count: usize,
    pub scene: SceneConfig,
    pub model: Option<ModelSection>,
    pub train: TrainConfig,
    pub type2: Type2Config,
    pub eval: EvalSection,
    pub report_format: ReportFormat,
    /// Dataset directory; defaults to the output directory.
    pub data_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Everything but the seeded sections, as written in the file.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    mode: Option<FeedbackMode>,
    #[serde(default = "default_count")]
    count: usize,
    scene: toml::Table,
    #[serde(default)]
    model: Option<ModelSection>,
    #[serde(default)]
    train: toml::Table,
    #[serde(default)]
    type2: Type2Config,
    #[serde(default)]
    eval: EvalSection,
    #[serde(default)]
    report_format: ReportFormat,
    #[serde(default)]
    data_dir: Option<PathBuf>,
    #[serde(default)]
    out: Option<PathBuf>,
}

fn seeded<T: for<'de> Deserialize<'de>>(mut table: toml::Table, section: &str, seed: u64) -> Result<T> {
    ensure!(
        !table.contains_key("seed"),
        Config,
        "[{section}] may not set its own seed; use the top-level seed"
    );
    table.insert("seed".into(), toml::Value::Integer(seed as i64));
    toml::Value::Table(table)
        .try_into()
        .map_err(|e| Error::Config(format!("[{section}]: {e}")))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        let mut cfg = Self {
            seed: raw.seed,
            mode: raw.mode,
            count: raw.count,
            scene: seeded(raw.scene, "scene", raw.seed)?,
            model: raw.model,
            train: seeded(raw.train, "train", raw.seed)?,
            type2: raw.type2,
            eval: raw.eval,
            report_format: raw.report_format,
            data_dir: raw.data_dir,
            out: raw.out,
        };
        cfg.set_seed(raw.seed);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a file; relative `data_dir` and `out` resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.data_dir, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Replaces the experiment seed everywhere it is used.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.scene.seed = seed;
        self.train.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.train.validate()?;
        if self.model.is_some() {
            self.model_specs()?;
        }
        Ok(())
    }

    /// Fails when the file declares a different feedback mode.
    pub fn expect_mode(&self, mode: FeedbackMode) -> Result<()> {
        match self.mode {
            Some(m) if m != mode => Err(Error::Config(format!(
                "config declares mode {m:?}, the command needs {mode:?}"
            ))),
            _ => Ok(()),
        }
    }

    /// One spec per requested feedback-bit budget.
    pub fn model_specs(&self) -> Result<Vec<ModelSpec>> {
        let m = self
            .model
            .as_ref()
            .ok_or_else(|| Error::Config("the config has no [model] section".into()))?;
        let quantizer = match (m.architecture, m.quantizer_bits) {
            (Architecture::ImcsinetS, None | Some(1)) => QuantizerSpec::Binarize,
            (Architecture::ImcsinetS, Some(b)) => {
                return Err(Error::Config(format!(
                    "imcsinet_s binarizes its codeword; quantizer_bits = {b} is not supported"
                )))
            }
            (_, Some(bits)) => QuantizerSpec::Uniform { bits },
            (a, None) => return Err(Error::Config(format!("{a} needs quantizer_bits"))),
        };
        let bits = m.feedback_bits.values();
        ensure!(!bits.is_empty(), Config, "feedback_bits is empty");
        let (nt, ns) = (self.scene.array.nt(), self.scene.n_subbands);
        bits.into_iter()
            .map(|n| {
                let mut spec = ModelSpec::with_feedback_bits(m.architecture, nt, ns, n, quantizer)?
                    .with_width_divisor(m.width_divisor)?;
                spec.leaky_slope = m.leaky_slope;
                spec.validate()?;
                Ok(spec)
            })
            .collect()
    }

    pub fn data_dir(&self, out: &Path) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| out.to_path_buf())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
seed = 9
count = 50
[scene]
n_rb = 4
n_subbands = 2
array = { n1 = 2, n2 = 1, o1 = 4, o2 = 1, nr = 2 }
[model]
architecture = "imcsinet_m"
feedback_bits = [8, 16]
quantizer_bits = 2
[train]
epochs = 3
"#;

    #[test]
    fn one_seed_feeds_every_consumer() {
        let cfg = ExperimentConfig::from_toml(BASE).unwrap();
        assert_eq!((cfg.scene.seed, cfg.train.seed), (9, 9));
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, 256);
        let specs = cfg.model_specs().unwrap();
        assert_eq!(specs.iter().map(|s| s.feedback_bits()).collect::<Vec<_>>(), vec![8, 16]);
        assert_eq!(specs[0].compressed_dim, 4);
        let mut c2 = cfg.clone();
        c2.set_seed(1);
        assert_eq!((c2.scene.seed, c2.train.seed), (1, 1));
    }

    #[test]
    fn stray_seeds_and_keys_are_config_errors() {
        let bad = BASE.replace("[train]", "[train]\nseed = 3");
        assert_eq!(ExperimentConfig::from_toml(&bad).unwrap_err().class(), "config");
        let bad = BASE.replace("n_rb = 4", "n_rb = 4\nseed = 3");
        assert_eq!(ExperimentConfig::from_toml(&bad).unwrap_err().class(), "config");
        let bad = BASE.replace("count = 50", "count = 50\ncolour = 1");
        assert_eq!(ExperimentConfig::from_toml(&bad).unwrap_err().class(), "config");
        let bad = BASE.replace("quantizer_bits = 2", "");
        assert_eq!(ExperimentConfig::from_toml(&bad).unwrap_err().class(), "config");
        let bad = BASE.replace("n_rb = 4", "n_rb = 5");
        assert_eq!(ExperimentConfig::from_toml(&bad).unwrap_err().class(), "config");
    }

    #[test]
    fn single_budget_and_mode_check() {
        let text = BASE.replace("feedback_bits = [8, 16]", "feedback_bits = 8").replace("seed = 9", "seed = 9\nmode = \"type1\"");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.model_specs().unwrap().len(), 1);
        assert!(cfg.expect_mode(FeedbackMode::Type1).is_ok());
        assert_eq!(cfg.expect_mode(FeedbackMode::Nn).unwrap_err().class(), "config");
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        std::fs::write(&path, format!("data_dir = \"data\"\n{BASE}")).unwrap();
        let cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg.data_dir.unwrap(), dir.path().join("data"));
    }
}
