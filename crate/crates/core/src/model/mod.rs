//! Trainable model: modality encoders, fusion network and heads over a
//! shared parameter store.

mod encoders;
mod fusion;
mod heads;
mod params;

use serde::{Deserialize, Serialize};

pub use encoders::{sinusoidal, ModalityEncoder};
pub use fusion::{Fusion, FusionMode, FusionOut, ScoreNet};
pub use heads::{cosine_logits, BinaryHead, Classifier, ClassifierKind, Projection, NORM_EPS};
pub use params::{dropout, Graph, Init, Linear, ParamBuilder, ParamId, ParamStore};

use crate::corpus::{Modality, SeqShape, Sequences};
use crate::error::{Error, Result};
use crate::numerics::{RngState, Tensor2, Var};

/// Architecture of a [`Model`]. Stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub k: usize,
    pub shapes: [SeqShape; 3],
    pub heads: usize,
    pub ffn_mult: usize,
    pub positional: bool,
    pub fusion_hidden: usize,
    pub fusion: FusionMode,
    pub dropout: f64,
    pub classifier: ClassifierKind,
    pub gamma: f64,
    pub contrast_dim: usize,
}

impl ModelConfig {
    /// Defaults for a corpus with `k` classes and the given shapes.
    pub fn for_corpus(k: usize, shapes: [SeqShape; 3]) -> Self {
        Self {
            k,
            shapes,
            heads: 4,
            ffn_mult: 2,
            positional: false,
            fusion_hidden: 256,
            fusion: FusionMode::Weighted,
            dropout: 0.1,
            classifier: ClassifierKind::Cosine,
            gamma: 16.0,
            contrast_dim: shapes[Modality::Text.index()].dim,
        }
    }

    /// Shared feature width (the text width).
    pub fn width(&self) -> usize {
        self.shapes[Modality::Text.index()].dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::param("model", "k", format!("need at least 2 classes, got {}", self.k)));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::param("heads_losses", "gamma", format!("must be positive, got {}", self.gamma)));
        }
        if self.contrast_dim == 0 {
            return Err(Error::param("heads_losses", "contrast_dim", "must be positive"));
        }
        if self.ffn_mult == 0 {
            return Err(Error::param("encoders", "ffn_mult", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub encoders: [ModalityEncoder; 3],
    pub fusion: Fusion,
    pub binary: BinaryHead,
    pub classifier: Classifier,
    pub projection: Projection,
}

/// Eval-mode outputs for a list of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    /// Fused features, one row per sample.
    pub features: Tensor2,
    pub logits: Tensor2,
    /// Modality weights (`n × 3`) when the fusion mode defines them.
    pub weights: Option<Tensor2>,
}

const INFER_CHUNK: usize = 64;

impl Model {
    /// Fresh model with initialization drawn from `rng`.
    pub fn new(config: ModelConfig, rng: &mut RngState) -> Result<Self> {
        let mut store = ParamStore::new();
        let parts = {
            let mut pb = ParamBuilder::init(&mut store, rng);
            Self::layers(&config, &mut pb)?
        };
        Ok(Self::assemble(config, store, parts))
    }

    /// Rebuilds a model around stored parameters.
    pub fn from_store(config: ModelConfig, mut store: ParamStore) -> Result<Self> {
        let parts = {
            let mut pb = ParamBuilder::restore(&mut store);
            Self::layers(&config, &mut pb)?
        };
        Ok(Self::assemble(config, store, parts))
    }

    #[allow(clippy::type_complexity)]
    fn layers(
        config: &ModelConfig,
        pb: &mut ParamBuilder<'_>,
    ) -> Result<([ModalityEncoder; 3], Fusion, BinaryHead, Classifier, Projection)> {
        config.validate()?;
        let width = config.width();
        let mut encs = Vec::with_capacity(3);
        for m in Modality::ALL {
            encs.push(ModalityEncoder::new(
                pb,
                m,
                config.shapes[m.index()],
                width,
                config.heads,
                config.ffn_mult,
                config.positional,
            )?);
        }
        let encoders: [ModalityEncoder; 3] = encs.try_into().unwrap_or_else(|_| unreachable!());
        let fusion = Fusion::new(pb, config.fusion, width, config.fusion_hidden, config.dropout)?;
        let binary = BinaryHead::new(pb, width)?;
        let classifier = Classifier::new(pb, config.classifier, width, config.k, config.gamma)?;
        let projection = Projection::new(pb, width, config.contrast_dim, config.dropout)?;
        Ok((encoders, fusion, binary, classifier, projection))
    }

    fn assemble(
        config: ModelConfig,
        store: ParamStore,
        (encoders, fusion, binary, classifier, projection): ([ModalityEncoder; 3], Fusion, BinaryHead, Classifier, Projection),
    ) -> Self {
        Self {
            config,
            store,
            encoders,
            fusion,
            binary,
            classifier,
            projection,
        }
    }

    /// Encodes every modality of `samples`; each result is `B × D_T`.
    pub fn encode(&self, g: &mut Graph<'_>, samples: &[&Sequences]) -> Result<[Var; 3]> {
        let mut out = Vec::with_capacity(3);
        for m in Modality::ALL {
            let seqs: Vec<&Tensor2> = samples.iter().map(|s| &s[m.index()]).collect();
            out.push(self.encoders[m.index()].encode(g, &seqs)?);
        }
        Ok(out.try_into().unwrap_or_else(|_| unreachable!()))
    }

    pub fn fuse(&self, g: &mut Graph<'_>, xs: [Var; 3], rng: Option<&mut RngState>) -> FusionOut {
        self.fusion.fuse(g, xs, rng)
    }

    pub fn binary_logits(&self, g: &mut Graph<'_>, z: Var) -> Var {
        self.binary.logits(g, z)
    }

    pub fn class_logits(&self, g: &mut Graph<'_>, z: Var) -> Var {
        self.classifier.logits(g, z)
    }

    pub fn contrast_view(&self, g: &mut Graph<'_>, z: Var, rng: Option<&mut RngState>) -> Var {
        self.projection.forward(g, z, rng)
    }

    /// Deterministic eval-mode pass (dropout off).
    pub fn infer(&self, samples: &[&Sequences]) -> Result<Inference> {
        let width = self.config.width();
        let mut features = Vec::with_capacity(samples.len() * width);
        let mut logits = Vec::with_capacity(samples.len() * self.config.k);
        let mut weights = Vec::new();
        let mut has_weights = false;
        for chunk in samples.chunks(INFER_CHUNK) {
            let mut g = Graph::new(&self.store);
            let xs = self.encode(&mut g, chunk)?;
            let fused = self.fuse(&mut g, xs, None);
            let l = self.class_logits(&mut g, fused.z);
            features.extend_from_slice(g.value(fused.z).data());
            logits.extend_from_slice(g.value(l).data());
            if let Some(w) = fused.weights {
                has_weights = true;
                weights.extend_from_slice(g.value(w).data());
            }
        }
        let n = samples.len();
        Ok(Inference {
            features: Tensor2::from_vec(n, width, features)?,
            logits: Tensor2::from_vec(n, self.config.k, logits)?,
            weights: if has_weights { Some(Tensor2::from_vec(n, 3, weights)?) } else { None },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shapes() -> [SeqShape; 3] {
        [
            SeqShape { len: 3, dim: 8 },
            SeqShape { len: 2, dim: 4 },
            SeqShape { len: 2, dim: 4 },
        ]
    }

    #[test]
    fn ablation_switches_change_parameter_sets() {
        let mut cfg = ModelConfig::for_corpus(3, shapes());
        cfg.fusion_hidden = 5;
        let full = Model::new(cfg.clone(), &mut RngState::new(0)).unwrap();
        assert!(full.store.by_name("classifier.cosine_weight").is_some());
        assert!(full.store.by_name("fusion.text.score_hidden.weight").is_some());
        assert!(full.store.by_name("fusion.concat.weight").is_none());

        let mut lin = cfg.clone();
        lin.classifier = ClassifierKind::Linear;
        let lin = Model::new(lin, &mut RngState::new(0)).unwrap();
        assert!(lin.store.by_name("classifier.cosine_weight").is_none());
        assert!(lin.store.by_name("classifier.linear.weight").is_some());

        let mut cat = cfg;
        cat.fusion = FusionMode::Concat;
        let cat = Model::new(cat, &mut RngState::new(0)).unwrap();
        assert!(cat.store.by_name("fusion.concat.weight").is_some());
        assert!(cat.store.by_name("fusion.text.score_hidden.weight").is_none());
    }

    #[test]
    fn infer_is_deterministic_and_restorable() {
        let mut cfg = ModelConfig::for_corpus(2, shapes());
        cfg.fusion_hidden = 6;
        let m = Model::new(cfg.clone(), &mut RngState::new(1)).unwrap();
        let mut rng = RngState::new(2);
        let samples: Vec<Sequences> = (0..70)
            .map(|_| {
                shapes().map(|s| Tensor2::from_raw(s.len, s.dim, (0..s.len * s.dim).map(|_| rng.normal()).collect()))
            })
            .collect();
        let refs: Vec<&Sequences> = samples.iter().collect();
        let a = m.infer(&refs).unwrap();
        let b = m.infer(&refs).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.features.shape(), (70, 8));
        assert_eq!(a.logits.shape(), (70, 2));
        let w = a.weights.as_ref().unwrap();
        for r in w.iter_rows() {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let restored = Model::from_store(cfg, m.store.clone()).unwrap();
        assert_eq!(restored.infer(&refs).unwrap(), a);
    }
}
