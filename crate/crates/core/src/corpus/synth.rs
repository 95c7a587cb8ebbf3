use serde::{Deserialize, Serialize};

use super::{Corpus, Label, Modality, SeqShape, Split, UtteranceRecord};
use crate::error::{Error, Result};
use crate::numerics::{RngState, Tensor2};

/// Generation settings for one modality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalitySynth {
    pub len: usize,
    pub dim: usize,
    /// Norm of every class (and OOD cluster) mean.
    pub radius: f64,
    /// Per-timestep Gaussian noise standard deviation.
    pub noise: f64,
    /// Class `c` uses noise `noise · (1 + spread · c / (K − 1))`.
    #[serde(default)]
    pub class_noise_spread: f64,
}

/// Gaussian-cluster stand-in for extracted multimodal features.
///
/// Record counts are totals per split; ID records are assigned to classes
/// round-robin and OOD records to clusters round-robin, so per-class counts
/// are deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub k: usize,
    pub text: ModalitySynth,
    pub video: ModalitySynth,
    pub audio: ModalitySynth,
    pub train: usize,
    pub valid: usize,
    pub test_id: usize,
    pub test_ood: usize,
    pub ood_clusters: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let m = |len, dim| ModalitySynth {
            len,
            dim,
            radius: 5.0,
            noise: 0.3,
            class_noise_spread: 0.0,
        };
        Self {
            k: 3,
            text: m(6, 16),
            video: m(6, 12),
            audio: m(6, 8),
            train: 600,
            valid: 200,
            test_id: 200,
            test_ood: 100,
            ood_clusters: 2,
        }
    }
}

impl SynthConfig {
    /// Tiny corpus for tests.
    pub fn small(k: usize) -> Self {
        let m = |len, dim| ModalitySynth {
            len,
            dim,
            radius: 5.0,
            noise: 0.3,
            class_noise_spread: 0.0,
        };
        Self {
            k,
            text: m(3, 8),
            video: m(2, 8),
            audio: m(2, 4),
            train: 12 * k,
            valid: 4 * k,
            test_id: 4 * k,
            test_ood: 6,
            ood_clusters: 2,
        }
    }

    pub fn modality(&self, m: Modality) -> &ModalitySynth {
        match m {
            Modality::Text => &self.text,
            Modality::Video => &self.video,
            Modality::Audio => &self.audio,
        }
    }

    pub fn shapes(&self) -> [SeqShape; 3] {
        Modality::ALL.map(|m| {
            let s = self.modality(m);
            SeqShape { len: s.len, dim: s.dim }
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::param("corpus", "k", format!("need at least 2 classes, got {}", self.k)));
        }
        for m in Modality::ALL {
            let s = self.modality(m);
            if s.len == 0 || s.dim == 0 {
                return Err(Error::param("corpus", "len/dim", format!("{m} shape must be non-empty")));
            }
            if !(s.radius >= 0.0) || !(s.noise >= 0.0) || !(s.class_noise_spread >= 0.0) {
                return Err(Error::param("corpus", "radius/noise", format!("{m} values must be non-negative")));
            }
        }
        if self.test_ood > 0 && self.ood_clusters == 0 {
            return Err(Error::param("corpus", "ood_clusters", "OOD records requested without clusters"));
        }
        Ok(())
    }
}

fn sphere_point(dim: usize, radius: f64, rng: &mut RngState) -> Vec<f64> {
    if radius == 0.0 {
        return vec![0.0; dim];
    }
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let n = crate::numerics::norm(&v);
        if n > 1e-8 {
            return v.iter().map(|x| x * radius / n).collect();
        }
    }
}

/// Draws class and OOD-cluster means, then emits records whose timesteps
/// are `mean + N(0, σ²)` rounded to `f32` precision.
pub fn synth_corpus(cfg: &SynthConfig, rng: &mut RngState) -> Result<Corpus> {
    cfg.validate()?;
    let draw_means = |n: usize, rng: &mut RngState| -> Vec<[Vec<f64>; 3]> {
        (0..n)
            .map(|_| Modality::ALL.map(|m| {
                let s = cfg.modality(m);
                sphere_point(s.dim, s.radius, rng)
            }))
            .collect()
    };
    let class_means = draw_means(cfg.k, rng);
    let ood_means = draw_means(cfg.ood_clusters, rng);

    let noise_for = |m: Modality, class: Option<usize>| {
        let s = cfg.modality(m);
        match class {
            Some(c) if cfg.k > 1 => s.noise * (1.0 + s.class_noise_spread * c as f64 / (cfg.k - 1) as f64),
            _ => s.noise,
        }
    };

    let emit = |id: String, split: Split, label: Label, means: &[Vec<f64>; 3], rng: &mut RngState| {
        let seqs = Modality::ALL.map(|m| {
            let s = cfg.modality(m);
            let sigma = noise_for(m, label.class());
            let mut data = Vec::with_capacity(s.len * s.dim);
            for _ in 0..s.len {
                for &mu in &means[m.index()] {
                    let v = if sigma > 0.0 { mu + sigma * rng.normal() } else { mu };
                    data.push(v as f32 as f64);
                }
            }
            Tensor2::from_raw(s.len, s.dim, data)
        });
        UtteranceRecord { id, split, label, seqs }
    };

    let mut records = Vec::with_capacity(cfg.train + cfg.valid + cfg.test_id + cfg.test_ood);
    for (split, n) in [(Split::Train, cfg.train), (Split::Valid, cfg.valid), (Split::Test, cfg.test_id)] {
        for i in 0..n {
            let c = i % cfg.k;
            records.push(emit(format!("{}-{i:05}", split.name()), split, Label::Id(c), &class_means[c], rng));
        }
    }
    for i in 0..cfg.test_ood {
        let cl = i % cfg.ood_clusters;
        records.push(emit(format!("test-ood-{i:05}"), Split::Test, Label::Ood, &ood_means[cl], rng));
    }
    Corpus::new(cfg.k, cfg.shapes(), records)
}
