//! Training configuration and its flat `key = value` file format.

use std::fmt::Write as _;

use crate::encoder::{TokenUnit, TokenizerConfig};
use crate::error::{Error, Result};
use crate::graph::WalkConfig;
use crate::objective::LossConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    Sgd,
    /// Adam with lazily updated embedding rows.
    #[default]
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::Adam),
            other => Err(Error::config("optimizer", format!("unknown optimizer `{other}` (sgd|adam)"))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Sgd => "sgd",
            Self::Adam => "adam",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub total_epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Epochs on the unpruned graphs before the first prune.
    pub warmup_epochs: usize,
    pub refine_epochs_per_cycle: usize,
    pub cluster_refresh_epochs: usize,
    pub cluster_size_doubling_epochs: usize,
    /// `None` disables cluster-based batching.
    pub initial_cluster_size: Option<usize>,
    /// Densify graphs with random walks before training.
    pub augment_graphs: bool,
    pub prune: bool,
    pub prune_threshold: f64,
    /// Stop once the relative objective change over a cycle drops below this.
    pub convergence_tol: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 1024,
            total_epochs: 300,
            learning_rate: 2e-4,
            optimizer: OptimizerKind::Adam,
            warmup_epochs: 10,
            refine_epochs_per_cycle: 5,
            cluster_refresh_epochs: 5,
            cluster_size_doubling_epochs: 25,
            initial_cluster_size: None,
            augment_graphs: true,
            prune: true,
            prune_threshold: 0.0,
            convergence_tol: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::config("batch_size", "must be at least 2"));
        }
        if self.total_epochs == 0 {
            return Err(Error::config("total_epochs", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive and finite"));
        }
        if self.refine_epochs_per_cycle == 0 {
            return Err(Error::config("refine_epochs_per_cycle", "must be at least 1"));
        }
        if let Some(c) = self.initial_cluster_size {
            if c == 0 || c >= self.batch_size {
                return Err(Error::config("initial_cluster_size", "must lie in [1, batch_size)"));
            }
            if self.cluster_refresh_epochs == 0 {
                return Err(Error::config("cluster_refresh_epochs", "must be at least 1"));
            }
            if self.cluster_size_doubling_epochs == 0 {
                return Err(Error::config("cluster_size_doubling_epochs", "must be at least 1"));
            }
        }
        if !self.prune_threshold.is_finite() || self.prune_threshold.abs() > 1.0 {
            return Err(Error::config("prune_threshold", "must lie in [-1, 1]"));
        }
        if !(self.convergence_tol >= 0.0) {
            return Err(Error::config("convergence_tol", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub tokenizer: TokenizerConfig,
    pub hidden_dim: usize,
    pub output_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            tokenizer: TokenizerConfig::default(),
            hidden_dim: 64,
            output_dim: 64,
        }
    }
}

/// Everything a training run needs besides the data.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub walk: WalkConfig,
    pub encoder: EncoderConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.loss.validate()?;
        self.walk.validate()?;
        self.encoder.tokenizer.validate()?;
        if self.encoder.hidden_dim == 0 {
            return Err(Error::config("hidden_dim", "must be at least 1"));
        }
        if self.encoder.output_dim < 2 {
            return Err(Error::config("output_dim", "must be at least 2"));
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. Blank lines and lines
    /// starting with `#` are skipped; unknown keys are errors.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(format!("line {}", i + 1), format!("expected `key = value`, found `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            cfg.set(key, value).map_err(|e| match e {
                Error::Config { key, message } => Error::config(key, format!("line {}: {message}", i + 1)),
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e| Error::config(key, format!("bad value `{value}`: {e}")))
        }
        fn opt(key: &str, value: &str) -> Result<Option<usize>> {
            if value == "none" {
                Ok(None)
            } else {
                num(key, value).map(Some)
            }
        }
        let (t, l, w, e) = (&mut self.train, &mut self.loss, &mut self.walk, &mut self.encoder);
        match key {
            "batch_size" => t.batch_size = num(key, value)?,
            "total_epochs" => t.total_epochs = num(key, value)?,
            "learning_rate" => t.learning_rate = num(key, value)?,
            "optimizer" => t.optimizer = value.parse()?,
            "warmup_epochs" => t.warmup_epochs = num(key, value)?,
            "refine_epochs_per_cycle" => t.refine_epochs_per_cycle = num(key, value)?,
            "cluster_refresh_epochs" => t.cluster_refresh_epochs = num(key, value)?,
            "cluster_size_doubling_epochs" => t.cluster_size_doubling_epochs = num(key, value)?,
            "initial_cluster_size" => t.initial_cluster_size = opt(key, value)?,
            "augment_graphs" => t.augment_graphs = num(key, value)?,
            "prune" => t.prune = num(key, value)?,
            "prune_threshold" => t.prune_threshold = num(key, value)?,
            "convergence_tol" => t.convergence_tol = num(key, value)?,
            "seed" => t.seed = num(key, value)?,
            "margin" => l.margin = num(key, value)?,
            "lambda_x" => l.lambda_x = num(key, value)?,
            "lambda_z" => l.lambda_z = num(key, value)?,
            "num_positives" => l.num_positives = num(key, value)?,
            "num_hard_negatives" => l.num_hard_negatives = num(key, value)?,
            "hops" => w.hops = num(key, value)?,
            "restart_prob" => w.restart_prob = num(key, value)?,
            "top_k_keep" => w.top_k_keep = opt(key, value)?,
            "walk_seed" => w.seed = num(key, value)?,
            "hash_buckets" => e.tokenizer.hash_buckets = num(key, value)?,
            "max_len" => e.tokenizer.max_len = num(key, value)?,
            "lowercase" => e.tokenizer.lowercase = num(key, value)?,
            "ngram" => e.tokenizer.unit = value.parse::<TokenUnit>()?,
            "hidden_dim" => e.hidden_dim = num(key, value)?,
            "output_dim" => e.output_dim = num(key, value)?,
            _ => {
                if let Some(set) = key.strip_prefix("lambda_x.") {
                    l.lambda_x_overrides.insert(set.to_string(), num(key, value)?);
                } else if let Some(set) = key.strip_prefix("lambda_z.") {
                    l.lambda_z_overrides.insert(set.to_string(), num(key, value)?);
                } else {
                    return Err(Error::config(key, "unknown key"));
                }
            }
        }
        Ok(())
    }

    /// Every field as `key = value` lines; `parse(to_text())` restores `self`.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<usize>| v.map_or("none".to_string(), |c| c.to_string());
        let (t, l, w, e) = (&self.train, &self.loss, &self.walk, &self.encoder);
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("batch_size", t.batch_size.to_string());
        kv("total_epochs", t.total_epochs.to_string());
        kv("learning_rate", format!("{:?}", t.learning_rate));
        kv("optimizer", t.optimizer.to_string());
        kv("warmup_epochs", t.warmup_epochs.to_string());
        kv("refine_epochs_per_cycle", t.refine_epochs_per_cycle.to_string());
        kv("cluster_refresh_epochs", t.cluster_refresh_epochs.to_string());
        kv("cluster_size_doubling_epochs", t.cluster_size_doubling_epochs.to_string());
        kv("initial_cluster_size", opt(t.initial_cluster_size));
        kv("augment_graphs", t.augment_graphs.to_string());
        kv("prune", t.prune.to_string());
        kv("prune_threshold", format!("{:?}", t.prune_threshold));
        kv("convergence_tol", format!("{:?}", t.convergence_tol));
        kv("seed", t.seed.to_string());
        kv("margin", format!("{:?}", l.margin));
        kv("lambda_x", format!("{:?}", l.lambda_x));
        kv("lambda_z", format!("{:?}", l.lambda_z));
        for (set, v) in &l.lambda_x_overrides {
            kv(&format!("lambda_x.{set}"), format!("{v:?}"));
        }
        for (set, v) in &l.lambda_z_overrides {
            kv(&format!("lambda_z.{set}"), format!("{v:?}"));
        }
        kv("num_positives", l.num_positives.to_string());
        kv("num_hard_negatives", l.num_hard_negatives.to_string());
        kv("hops", w.hops.to_string());
        kv("restart_prob", format!("{:?}", w.restart_prob));
        kv("top_k_keep", opt(w.top_k_keep));
        kv("walk_seed", w.seed.to_string());
        kv("hash_buckets", e.tokenizer.hash_buckets.to_string());
        kv("max_len", e.tokenizer.max_len.to_string());
        kv("lowercase", e.tokenizer.lowercase.to_string());
        kv("ngram", e.tokenizer.unit.to_string());
        kv("hidden_dim", e.hidden_dim.to_string());
        kv("output_dim", e.output_dim.to_string());
        s
    }

    /// Hex SHA-256 of [`RunConfig::to_text`].
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        Sha256::digest(self.to_text().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Applies ablation switches. AugGT also needs [`augment_ground_truth`]
    /// on the corpus.
    ///
    /// [`augment_ground_truth`]: super::augment_ground_truth
    pub fn with_ablation(mut self, ablation: Ablation) -> RunConfig {
        let zero = |l: &mut f64, o: &mut std::collections::BTreeMap<String, f64>| {
            *l = 0.0;
            o.values_mut().for_each(|v| *v = 0.0);
        };
        if ablation.no_prune || ablation.aug_gt {
            self.train.prune = false;
        }
        if ablation.no_doc_graph || ablation.aug_gt {
            zero(&mut self.loss.lambda_x, &mut self.loss.lambda_x_overrides);
        }
        if ablation.no_lbl_graph || ablation.aug_gt {
            zero(&mut self.loss.lambda_z, &mut self.loss.lambda_z_overrides);
        }
        self
    }
}

/// Component switches for ablation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Ablation {
    pub no_prune: bool,
    pub no_doc_graph: bool,
    pub no_lbl_graph: bool,
    /// Plain task loss on label-propagated ground truth.
    pub aug_gt: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_parse_from_empty() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
        assert_eq!(RunConfig::parse("# comment\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_key_names_key_and_line() {
        let err = RunConfig::parse("seed = 1\nbatch = 3\n").unwrap_err().to_string();
        assert!(err.contains("batch") && err.contains("line 2"), "{err}");
    }

    #[test]
    fn bad_value_names_key() {
        let err = RunConfig::parse("learning_rate = fast").unwrap_err().to_string();
        assert!(err.contains("learning_rate") && err.contains("line 1"), "{err}");
        let err = RunConfig::parse("no equals sign").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn invariants_checked() {
        assert!(RunConfig::parse("batch_size = 1").is_err());
        assert!(RunConfig::parse("total_epochs = 0").is_err());
        assert!(RunConfig::parse("batch_size = 8\ninitial_cluster_size = 8").is_err());
        assert!(RunConfig::parse("batch_size = 8\ninitial_cluster_size = 4").is_ok());
    }

    #[test]
    fn per_set_lambdas() {
        let cfg = RunConfig::parse("lambda_x = 0.5\nlambda_x.category = 2\n").unwrap();
        assert_eq!(cfg.loss.lambda_x_for("category"), 2.0);
        assert_eq!(cfg.loss.lambda_x_for("hyperlink"), 0.5);
        let ablated = cfg.with_ablation(Ablation { no_doc_graph: true, ..Default::default() });
        assert_eq!(ablated.loss.lambda_x_for("category"), 0.0);
        assert_eq!(ablated.loss.lambda_z_for("category"), 1.0);
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.train.seed = 9;
        assert_eq!(a.hash(), RunConfig::default().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    proptest! {
        #[test]
        fn text_round_trip(
            seed in any::<u64>(),
            lr in 1e-6f64..1.0,
            s in 3usize..5000,
            c in proptest::option::of(1usize..3),
            margin in 0.0f64..2.0,
            lx in 0.0f64..5.0,
            sgd in any::<bool>(),
        ) {
            let mut cfg = RunConfig::default();
            cfg.train.seed = seed;
            cfg.train.learning_rate = lr;
            cfg.train.batch_size = s;
            cfg.train.initial_cluster_size = c;
            cfg.train.optimizer = if sgd { OptimizerKind::Sgd } else { OptimizerKind::Adam };
            cfg.loss.margin = margin;
            cfg.loss.lambda_x_overrides.insert("hyperlink".into(), lx);
            prop_assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
        }
    }
}
