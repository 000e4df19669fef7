//! Training configuration and its flat `key = value` file format.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! ignored. Command-line overrides go through the same [`TrainConfig::set`].

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use signdpo_core::objectives::{Branch, Branches, LossWeights, ObjectivePlan};
use signdpo_core::perturb::PerturbConfig;
use signdpo_policy::{AdamWConfig, ModelConfig};

use crate::error::{HarnessError, Result};

/// Component switched off or narrowed by an ablation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    /// Keep one granularity branch of the spatial level.
    SpatialOnly(Branch),
    /// Keep one granularity branch of the temporal level.
    TemporalOnly(Branch),
    NoSpatial,
    NoTemporal,
    NoLanguage,
}

impl Ablation {
    pub const NAMES: [&'static str; 7] = [
        "spatial_global",
        "spatial_local",
        "temporal_global",
        "temporal_local",
        "no_spatial",
        "no_temporal",
        "no_language",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Ablation::SpatialOnly(Branch::Global) => "spatial_global",
            Ablation::SpatialOnly(Branch::Local) => "spatial_local",
            Ablation::TemporalOnly(Branch::Global) => "temporal_global",
            Ablation::TemporalOnly(Branch::Local) => "temporal_local",
            Ablation::NoSpatial => "no_spatial",
            Ablation::NoTemporal => "no_temporal",
            Ablation::NoLanguage => "no_language",
        }
    }
}

impl FromStr for Ablation {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "spatial_global" => Ablation::SpatialOnly(Branch::Global),
            "spatial_local" => Ablation::SpatialOnly(Branch::Local),
            "temporal_global" => Ablation::TemporalOnly(Branch::Global),
            "temporal_local" => Ablation::TemporalOnly(Branch::Local),
            "no_spatial" => Ablation::NoSpatial,
            "no_temporal" => Ablation::NoTemporal,
            "no_language" => Ablation::NoLanguage,
            other => {
                return Err(HarnessError::Config(format!(
                    "unknown ablation '{other}', expected one of {}",
                    Ablation::NAMES.join(", ")
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Cross-entropy only.
    Sft,
    /// Output-level DPO against language negatives.
    Dpo,
    /// The full multi-level objective.
    SignDpo,
    Ablation(Ablation),
}

impl Mode {
    /// Loss components the mode trains. `None` for plain cross-entropy.
    pub fn plan(&self) -> Option<ObjectivePlan> {
        let full = ObjectivePlan::default();
        match self {
            Mode::Sft => None,
            Mode::Dpo => Some(ObjectivePlan {
                spatial: None,
                temporal: None,
                language: true,
                lm: false,
            }),
            Mode::SignDpo => Some(full),
            Mode::Ablation(a) => Some(match a {
                Ablation::SpatialOnly(b) => ObjectivePlan {
                    spatial: Some(Branches::Only(*b)),
                    ..full
                },
                Ablation::TemporalOnly(b) => ObjectivePlan {
                    temporal: Some(Branches::Only(*b)),
                    ..full
                },
                Ablation::NoSpatial => ObjectivePlan { spatial: None, ..full },
                Ablation::NoTemporal => ObjectivePlan { temporal: None, ..full },
                Ablation::NoLanguage => ObjectivePlan {
                    language: false,
                    ..full
                },
            }),
        }
    }

    /// Whether the mode reads language negatives.
    pub fn needs_negatives(&self) -> bool {
        self.plan().is_some_and(|p| p.language)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Sft => f.write_str("sft"),
            Mode::Dpo => f.write_str("dpo"),
            Mode::SignDpo => f.write_str("signdpo"),
            Mode::Ablation(a) => write!(f, "ablation:{}", a.name()),
        }
    }
}

impl FromStr for Mode {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sft" => Ok(Mode::Sft),
            "dpo" => Ok(Mode::Dpo),
            "signdpo" => Ok(Mode::SignDpo),
            _ => match s.strip_prefix("ablation:") {
                Some(spec) => Ok(Mode::Ablation(spec.parse()?)),
                None => Err(HarnessError::Config(format!(
                    "unknown mode '{s}', expected sft, dpo, signdpo or ablation:<component>"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: Mode,
    pub weights: LossWeights,
    /// `lr` here is the peak of the cosine schedule.
    pub optimizer: AdamWConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Per-epoch checkpoints and logs go here when set.
    pub checkpoint_dir: Option<PathBuf>,
    /// Evaluate on the dev split every this many epochs; 0 disables.
    pub eval_every: usize,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    /// Language negatives file for the train split.
    pub negatives: Option<PathBuf>,
    /// Start from this checkpoint instead of a fresh model.
    pub init_checkpoint: Option<PathBuf>,
    /// Vocabulary file; built from the train texts when absent.
    pub vocab: Option<PathBuf>,
    /// Worker threads; 0 uses the rayon default. Results do not depend on it.
    pub threads: usize,
    /// Centre inputs on the train-set joint means before training a fresh model.
    pub fit_input_centre: bool,
    /// Shape of a fresh model; `vocab_size` is filled in from the vocabulary.
    pub model: ModelConfig,
    pub perturb: PerturbConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Sft,
            weights: LossWeights::default(),
            optimizer: AdamWConfig::default(),
            epochs: 10,
            batch_size: 8,
            seed: 0,
            checkpoint_dir: None,
            eval_every: 1,
            train: None,
            dev: None,
            negatives: None,
            init_checkpoint: None,
            vocab: None,
            threads: 0,
            fit_input_centre: true,
            model: ModelConfig::desk(0),
            perturb: PerturbConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| HarnessError::Config(format!("invalid value '{value}' for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(HarnessError::Config(format!("invalid boolean '{value}' for {key}"))),
    }
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl TrainConfig {
    pub const KEYS: [&'static str; 34] = [
        "mode",
        "alpha",
        "rho",
        "lambda",
        "beta",
        "label_smoothing",
        "beta_on_negatives",
        "lr",
        "adam_beta1",
        "adam_beta2",
        "adam_eps",
        "weight_decay",
        "grad_clip",
        "epochs",
        "batch_size",
        "seed",
        "checkpoint_dir",
        "eval_every",
        "train",
        "dev",
        "negatives",
        "init_checkpoint",
        "vocab",
        "threads",
        "fit_input_centre",
        "model_dim",
        "part_dim",
        "decoder_layers",
        "heads",
        "ffn_dim",
        "beam_width",
        "max_gen_len",
        "window_ratio",
        "right_hand_prob",
    ];

    /// Sets one key. Unknown keys are configuration errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "mode" => self.mode = value.parse()?,
            "alpha" => self.weights.alpha = parse(key, value)?,
            "rho" => self.weights.rho = parse(key, value)?,
            "lambda" => self.weights.lambda = parse(key, value)?,
            "beta" => self.weights.beta = parse(key, value)?,
            "label_smoothing" => self.weights.label_smoothing = parse(key, value)?,
            "beta_on_negatives" => self.weights.beta_on_negatives = parse_bool(key, value)?,
            "lr" => self.optimizer.lr = parse(key, value)?,
            "adam_beta1" => self.optimizer.beta1 = parse(key, value)?,
            "adam_beta2" => self.optimizer.beta2 = parse(key, value)?,
            "adam_eps" => self.optimizer.eps = parse(key, value)?,
            "weight_decay" => self.optimizer.weight_decay = parse(key, value)?,
            "grad_clip" => {
                self.optimizer.grad_clip = match value {
                    "" | "none" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "checkpoint_dir" => self.checkpoint_dir = opt_path(value),
            "eval_every" => self.eval_every = parse(key, value)?,
            "train" => self.train = opt_path(value),
            "dev" => self.dev = opt_path(value),
            "negatives" => self.negatives = opt_path(value),
            "init_checkpoint" => self.init_checkpoint = opt_path(value),
            "vocab" => self.vocab = opt_path(value),
            "threads" => self.threads = parse(key, value)?,
            "fit_input_centre" => self.fit_input_centre = parse_bool(key, value)?,
            "model_dim" => self.model.model_dim = parse(key, value)?,
            "part_dim" => self.model.part_dim = parse(key, value)?,
            "decoder_layers" => self.model.decoder_layers = parse(key, value)?,
            "heads" => self.model.heads = parse(key, value)?,
            "ffn_dim" => self.model.ffn_dim = parse(key, value)?,
            "beam_width" => self.model.beam_width = parse(key, value)?,
            "max_gen_len" => self.model.max_gen_len = parse(key, value)?,
            "window_ratio" => self.perturb.window_ratio = parse(key, value)?,
            "right_hand_prob" => self.perturb.right_hand_prob = parse(key, value)?,
            other => {
                return Err(HarnessError::Config(format!(
                    "unknown configuration key '{other}'"
                )))
            }
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`. `origin` names the source
    /// in error messages.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| HarnessError::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: format!("expected key = value, got '{line}'"),
            })?;
            self.set(key, value).map_err(|e| match e {
                HarnessError::Config(m) => HarnessError::Config(format!("{}:{}: {m}", origin.display(), i + 1)),
                e => e,
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(HarnessError::io(path))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    /// Renders the config in the file format; `from_file` reads it back.
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let o = &self.optimizer;
        let w = &self.weights;
        let m = &self.model;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        put("mode", self.mode.to_string());
        put("alpha", w.alpha.to_string());
        put("rho", w.rho.to_string());
        put("lambda", w.lambda.to_string());
        put("beta", w.beta.to_string());
        put("label_smoothing", w.label_smoothing.to_string());
        put("beta_on_negatives", w.beta_on_negatives.to_string());
        put("lr", o.lr.to_string());
        put("adam_beta1", o.beta1.to_string());
        put("adam_beta2", o.beta2.to_string());
        put("adam_eps", o.eps.to_string());
        put("weight_decay", o.weight_decay.to_string());
        put("grad_clip", o.grad_clip.map(|c| c.to_string()).unwrap_or_else(|| "none".into()));
        put("epochs", self.epochs.to_string());
        put("batch_size", self.batch_size.to_string());
        put("seed", self.seed.to_string());
        put("checkpoint_dir", path(&self.checkpoint_dir));
        put("eval_every", self.eval_every.to_string());
        put("train", path(&self.train));
        put("dev", path(&self.dev));
        put("negatives", path(&self.negatives));
        put("init_checkpoint", path(&self.init_checkpoint));
        put("vocab", path(&self.vocab));
        put("threads", self.threads.to_string());
        put("fit_input_centre", self.fit_input_centre.to_string());
        put("model_dim", m.model_dim.to_string());
        put("part_dim", m.part_dim.to_string());
        put("decoder_layers", m.decoder_layers.to_string());
        put("heads", m.heads.to_string());
        put("ffn_dim", m.ffn_dim.to_string());
        put("beam_width", m.beam_width.to_string());
        put("max_gen_len", m.max_gen_len.to_string());
        put("window_ratio", self.perturb.window_ratio.to_string());
        put("right_hand_prob", self.perturb.right_hand_prob.to_string());
        out
    }

    /// Checks ranges and that the mode has what it needs.
    pub fn validate(&self) -> Result<()> {
        if !(self.optimizer.lr > 0.0 && self.optimizer.lr.is_finite()) {
            return Err(HarnessError::Config(format!("lr must be positive, got {}", self.optimizer.lr)));
        }
        if self.epochs == 0 {
            return Err(HarnessError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(HarnessError::Config("batch_size must be at least 1".into()));
        }
        self.optimizer.validate()?;
        self.weights.validate()?;
        self.perturb.validate()?;
        if self.mode.needs_negatives() && self.negatives.is_none() {
            return Err(HarnessError::Config(format!(
                "mode {} needs a language negatives source (set negatives = <file>, e.g. from build-prefs)",
                self.mode
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_training_recipe() {
        let c = TrainConfig::default();
        assert_eq!(c.optimizer.lr, 3e-4);
        assert_eq!((c.optimizer.beta1, c.optimizer.beta2), (0.9, 0.999));
        assert_eq!(c.optimizer.weight_decay, 1e-4);
        assert_eq!(c.epochs, 10);
        assert_eq!(c.batch_size, 8);
        assert_eq!(c.weights.beta, 0.1);
    }

    #[test]
    fn text_round_trip() {
        let mut c = TrainConfig::default();
        c.set("mode", "ablation:temporal_local").unwrap();
        c.set("grad_clip", "1.5").unwrap();
        c.set("negatives", "n.jsonl").unwrap();
        c.set("lr", "0.002").unwrap();
        let mut back = TrainConfig::default();
        back.apply_text(&c.to_text(), Path::new("mem")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn every_listed_key_is_settable() {
        let text = TrainConfig::default().to_text();
        let keys: Vec<&str> = text.lines().map(|l| l.split(" = ").next().unwrap()).collect();
        assert_eq!(keys, TrainConfig::KEYS);
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let mut c = TrainConfig::default();
        c.apply_text("# run\n\nseed = 9\n  epochs=2\n", Path::new("mem")).unwrap();
        assert_eq!((c.seed, c.epochs), (9, 2));
    }

    #[test]
    fn unknown_key_is_a_config_error() {
        let err = TrainConfig::default().set("lerning_rate", "1").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let err = TrainConfig::default()
            .apply_text("seed = 1\nepochs\n", Path::new("c.cfg"))
            .unwrap_err();
        assert!(matches!(err, HarnessError::Parse { line: 2, .. }));
    }

    #[test]
    fn preference_modes_need_negatives() {
        for mode in ["signdpo", "dpo", "ablation:spatial_local"] {
            let mut c = TrainConfig::default();
            c.set("mode", mode).unwrap();
            let err = c.validate().unwrap_err();
            assert_eq!(err.exit_code(), 2, "{mode}");
            c.set("negatives", "n.jsonl").unwrap();
            c.validate().unwrap();
        }
        let mut c = TrainConfig::default();
        c.set("mode", "ablation:no_language").unwrap();
        c.validate().unwrap();
    }

    #[test]
    fn invalid_ranges_are_rejected() {
        for (k, v) in [("lr", "0"), ("epochs", "0"), ("batch_size", "0"), ("beta", "-1"), ("label_smoothing", "0.5")] {
            let mut c = TrainConfig::default();
            c.set(k, v).unwrap();
            assert!(c.validate().is_err(), "{k}={v}");
        }
    }

    #[test]
    fn ablation_plans_keep_one_branch() {
        let m: Mode = "ablation:spatial_global".parse().unwrap();
        let p = m.plan().unwrap();
        assert_eq!(p.spatial, Some(Branches::Only(Branch::Global)));
        assert_eq!(p.temporal, Some(Branches::Both));
        assert!(Mode::Sft.plan().is_none());
        assert!("ablation:everything".parse::<Mode>().is_err());
    }
}
