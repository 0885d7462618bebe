//! Run configuration file (TOML).
//!
//! ```toml
//! seed = 7
//!
//! [paths]
//! corpus = "data/corpus.tsv"
//! queries = "data/queries.tsv"
//! qrels = "data/qrels.txt"
//! model = "out/model.bin"
//! output = "out"
//!
//! [model]
//! d_emb = 32
//! hidden = 64
//! dim = 64
//! num_subvectors = 8
//! num_centroids = 16
//! min_count = 1
//!
//! [train]
//! lambda = 0.05
//! lr_encoder = 0.05
//! lr_codebook = 0.2
//! batch_size = 4
//! warmup_epochs = 10
//! joint_epochs = 20
//! kmeans_iters = 25
//! balanced = true
//! straight_through = true
//!
//! [attribution]
//! steps = 64
//! keep_words = []
//!
//! [mask_eval]
//! rho = 0.05
//! methods = ["Tail", "Rand", "Head", "IDF", "TF", "TF-IDF", "RandT", "GlobalT", "MoT"]
//! metric = "euclidean"
//! pairing = "per_entry"
//! include_tensor = false
//!
//! [retrieval]
//! k = 100
//! asymmetric = false
//! balanced_index = false
//! ```
//!
//! Every key is optional; missing keys take the defaults shown above. The
//! top-level `seed` overrides the training seed and seeds the masking
//! evaluation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{DistanceMetric, MaskEvalConfig, MaskMethod, TestPairing};
use crate::attribution::AttributionConfig;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::synthetic::SynthConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttributionSection {
    pub steps: usize,
    /// Words that keep their identity in the baseline input.
    pub keep_words: Vec<String>,
}

impl Default for AttributionSection {
    fn default() -> Self {
        Self { steps: AttributionConfig::default().steps, keep_words: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskSection {
    pub rho: f64,
    pub methods: Vec<String>,
    pub metric: DistanceMetric,
    pub pairing: TestPairing,
    pub include_tensor: bool,
}

impl Default for MaskSection {
    fn default() -> Self {
        Self {
            rho: 0.05,
            methods: MaskMethod::ALL.iter().map(|m| m.name().to_string()).collect(),
            metric: DistanceMetric::Euclidean,
            pairing: TestPairing::PerEntry,
            include_tensor: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSection {
    pub k: usize,
    pub asymmetric: bool,
    pub balanced_index: bool,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        Self { k: 100, asymmetric: false, balanced_index: false }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub paths: Paths,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub attribution: AttributionSection,
    pub mask_eval: MaskSection,
    pub retrieval: RetrievalSection,
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn parse(content: &str) -> Result<Self> {
        toml::from_str(content).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&content)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    /// Pushes the top-level seed into the sections that use one.
    pub fn resolve_seed(&mut self) {
        if let Some(seed) = self.seed {
            self.train.seed = seed;
            self.synth.seed = seed;
        } else {
            self.seed = Some(self.train.seed);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.mask_config()?.validate()?;
        if self.retrieval.k == 0 {
            return Err(Error::Config("retrieval k must be at least 1".into()));
        }
        Ok(())
    }

    pub fn methods(&self) -> Result<Vec<MaskMethod>> {
        self.mask_eval.methods.iter().map(|m| m.parse()).collect()
    }

    /// Masking configuration; the keep-word baseline is resolved by the caller.
    pub fn mask_config(&self) -> Result<MaskEvalConfig> {
        Ok(MaskEvalConfig {
            methods: self.methods()?,
            rho: self.mask_eval.rho,
            seed: self.seed.unwrap_or(self.train.seed),
            metric: self.mask_eval.metric,
            pairing: self.mask_eval.pairing,
            attribution: AttributionConfig::with_steps(self.attribution.steps),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_round_trip() {
        let mut c = RunConfig::parse("").unwrap();
        assert_eq!(c.model, ModelConfig::default());
        assert_eq!(c.train.lambda, 0.05);
        assert_eq!(c.mask_eval.rho, 0.05);
        assert_eq!(c.methods().unwrap(), MaskMethod::ALL.to_vec());
        c.resolve_seed();
        let back = RunConfig::parse(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn sections_and_seed() {
        let mut c = RunConfig::parse("seed = 3\n[model]\nnum_subvectors = 4\n[mask_eval]\nmethods = [\"Head\", \"MoT\"]\n").unwrap();
        c.resolve_seed();
        assert_eq!(c.train.seed, 3);
        assert_eq!(c.model.num_subvectors, 4);
        assert_eq!(c.methods().unwrap(), vec![MaskMethod::Head, MaskMethod::MoT]);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::parse("[model]\nbogus = 1\n").is_err());
        let c = RunConfig::parse("[model]\ndim = 63\n").unwrap();
        assert!(c.validate().is_err());
        let c = RunConfig::parse("[mask_eval]\nrho = 0.0\n").unwrap();
        assert!(c.validate().is_err());
        let c = RunConfig::parse("[mask_eval]\nmethods = [\"Nope\"]\n").unwrap();
        assert!(c.validate().is_err());
    }
}
