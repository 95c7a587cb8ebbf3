//! Pseudo-OOD synthesis: Dirichlet convex combinations of ID embedding
//! sequences drawn from at least two classes.

use serde::{Deserialize, Serialize};

use crate::corpus::{Batch, Label, Modality, Sequences};
use crate::error::{Error, Result};
use crate::numerics::{dirichlet_sample, RngState, Tensor2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OodGenConfig {
    /// Number of ID samples mixed into each pseudo-OOD sample.
    pub k: usize,
    /// Symmetric Dirichlet concentration.
    pub alpha: f64,
    /// Cap on redraws of the index set while enforcing the two-class rule.
    pub max_resample: usize,
    /// One weight vector for all modalities; when false each modality draws
    /// its own.
    pub share_weights: bool,
}

impl Default for OodGenConfig {
    fn default() -> Self {
        Self {
            k: 3,
            alpha: 2.0,
            max_resample: 100,
            share_weights: true,
        }
    }
}

impl OodGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::param("oodgen", "k", format!("must be at least 2, got {}", self.k)));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::param("oodgen", "alpha", format!("must be positive, got {}", self.alpha)));
        }
        if self.max_resample == 0 {
            return Err(Error::param("oodgen", "max_resample", "must be positive"));
        }
        Ok(())
    }
}

/// A generated sample together with how it was made.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoOod {
    pub seqs: Sequences,
    /// Indices into the ID batch.
    pub sources: Vec<usize>,
    /// Mixing weights per modality (identical rows when shared).
    pub weights: [Vec<f64>; 3],
}

/// `Σ_j λ_j · sources_j` elementwise for one modality.
pub fn mix(sources: &[&Tensor2], weights: &[f64]) -> Tensor2 {
    assert_eq!(sources.len(), weights.len(), "one weight per source");
    let (r, c) = sources[0].shape();
    let mut out = Tensor2::zeros(r, c);
    for (s, &w) in sources.iter().zip(weights) {
        assert_eq!(s.shape(), (r, c), "mixed sequences must share a shape");
        for (o, v) in out.data_mut().iter_mut().zip(s.data()) {
            *o += w * v;
        }
    }
    out
}

fn distinct_classes(labels: &[Label], idx: &[usize]) -> usize {
    let mut seen: Vec<usize> = idx.iter().filter_map(|&i| labels[i].class()).collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

fn select(n: usize, k: usize, rng: &mut RngState) -> Vec<usize> {
    if n >= k {
        let mut all: Vec<usize> = (0..n).collect();
        // Partial Fisher-Yates.
        for i in 0..k {
            let j = i + rng.index(n - i);
            all.swap(i, j);
        }
        all.truncate(k);
        all
    } else {
        (0..k).map(|_| rng.index(n)).collect()
    }
}

/// Mixes `cfg.k` samples of `id_batch`, redrawing the index set until it
/// spans at least two classes.
pub fn sample_pseudo_ood(id_batch: &Batch, cfg: &OodGenConfig, rng: &mut RngState) -> Result<PseudoOod> {
    cfg.validate()?;
    let all: Vec<usize> = (0..id_batch.len()).collect();
    if id_batch.labels.iter().any(|l| !l.is_id()) {
        return Err(Error::Generation("source batch contains OOD samples".into()));
    }
    if distinct_classes(&id_batch.labels, &all) < 2 {
        return Err(Error::Generation("source batch has fewer than two distinct classes".into()));
    }
    let mut sources = None;
    for _ in 0..cfg.max_resample {
        let idx = select(id_batch.len(), cfg.k, rng);
        if distinct_classes(&id_batch.labels, &idx) >= 2 {
            sources = Some(idx);
            break;
        }
    }
    let sources = sources.ok_or_else(|| {
        Error::Generation(format!("no two-class selection after {} draws", cfg.max_resample))
    })?;

    let shared = dirichlet_sample(cfg.alpha, cfg.k, rng)?;
    let weights: [Vec<f64>; 3] = if cfg.share_weights {
        [shared.clone(), shared.clone(), shared]
    } else {
        let v = dirichlet_sample(cfg.alpha, cfg.k, rng)?;
        let a = dirichlet_sample(cfg.alpha, cfg.k, rng)?;
        [shared, v, a]
    };
    let seqs = Modality::ALL.map(|m| {
        let src: Vec<&Tensor2> = sources.iter().map(|&i| &id_batch.seqs[i][m.index()]).collect();
        mix(&src, &weights[m.index()])
    });
    Ok(PseudoOod { seqs, sources, weights })
}

/// Pads an ID half-batch with the same number of pseudo-OOD samples and
/// shuffles the result.
pub fn build_mixed_batch(id_half: &Batch, cfg: &OodGenConfig, rng: &mut RngState) -> Result<Batch> {
    if id_half.is_empty() {
        return Err(Error::Generation("empty ID half-batch".into()));
    }
    let mut seqs: Vec<Sequences> = id_half.seqs.clone();
    let mut labels = id_half.labels.clone();
    for _ in 0..id_half.len() {
        let p = sample_pseudo_ood(id_half, cfg, rng)?;
        seqs.push(p.seqs);
        labels.push(Label::Ood);
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    rng.shuffle(&mut order);
    let mut slots: Vec<Option<Sequences>> = seqs.into_iter().map(Some).collect();
    Ok(Batch {
        seqs: order.iter().map(|&i| slots[i].take().expect("each index once")).collect(),
        labels: order.iter().map(|&i| labels[i]).collect(),
    })
}
