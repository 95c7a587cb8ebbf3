//! Binary ID/OOD head, cosine (or affine) classifier, and contrastive
//! projection.

use serde::{Deserialize, Serialize};

use super::params::{dropout, Graph, Init, Linear, ParamBuilder, ParamId};
use crate::error::Result;
use crate::numerics::{l2_normalize, RngState, Tensor2, Var};

pub const NORM_EPS: f64 = 1e-12;

/// Two affine layers with a ReLU between; column 0 is OOD, column 1 is ID.
#[derive(Debug, Clone)]
pub struct BinaryHead {
    pub hidden: Linear,
    pub out: Linear,
}

impl BinaryHead {
    pub fn new(pb: &mut ParamBuilder<'_>, dim: usize) -> Result<Self> {
        Ok(Self {
            hidden: Linear::new(pb, "binary.hidden", dim, dim, true)?,
            out: Linear::new(pb, "binary.out", dim, 2, true)?,
        })
    }

    pub fn logits(&self, g: &mut Graph<'_>, z: Var) -> Var {
        let h = self.hidden.forward(g, z);
        let h = g.tape.relu(h);
        self.out.forward(g, h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Cosine,
    Linear,
}

#[derive(Debug, Clone)]
pub enum Classifier {
    /// `γ · ⟨z/‖z‖, w_k/‖w_k‖⟩` with `W: K × D`.
    Cosine { weight: ParamId, gamma: f64 },
    Linear(Linear),
}

impl Classifier {
    pub fn new(pb: &mut ParamBuilder<'_>, kind: ClassifierKind, dim: usize, k: usize, gamma: f64) -> Result<Self> {
        Ok(match kind {
            ClassifierKind::Cosine => Classifier::Cosine {
                weight: pb.param("classifier.cosine_weight", k, dim, Init::Glorot)?,
                gamma,
            },
            ClassifierKind::Linear => Classifier::Linear(Linear::new(pb, "classifier.linear", dim, k, true)?),
        })
    }

    pub fn logits(&self, g: &mut Graph<'_>, z: Var) -> Var {
        match self {
            Classifier::Cosine { weight, gamma } => {
                let zn = g.tape.l2_normalize_rows(z, NORM_EPS);
                let w = g.param(*weight);
                let wn = g.tape.l2_normalize_rows(w, NORM_EPS);
                let cos = g.tape.matmul_t(zn, wn);
                g.tape.scale(cos, *gamma)
            }
            Classifier::Linear(l) => l.forward(g, z),
        }
    }
}

/// Cosine logits for a single feature vector against the rows of `weight`.
pub fn cosine_logits(z: &[f64], weight: &Tensor2, gamma: f64) -> Vec<f64> {
    let zn = l2_normalize(z, NORM_EPS);
    weight
        .iter_rows()
        .map(|w| gamma * crate::numerics::dot(&zn, &l2_normalize(w, NORM_EPS)))
        .collect()
}

/// Linear map into the contrastive space, with dropout on its input so two
/// passes give two views.
#[derive(Debug, Clone)]
pub struct Projection {
    pub map: Linear,
    pub dropout: f64,
}

impl Projection {
    pub fn new(pb: &mut ParamBuilder<'_>, dim: usize, out: usize, dropout: f64) -> Result<Self> {
        Ok(Self {
            map: Linear::new(pb, "contrast.project", dim, out, true)?,
            dropout,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, z: Var, rng: Option<&mut RngState>) -> Var {
        let z = dropout(g, z, self.dropout, rng);
        self.map.forward(g, z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_logit_examples() {
        let w = Tensor2::from_rows(&[vec![2.0, 0.0], vec![0.0, -3.0]]).unwrap();
        let l = cosine_logits(&[5.0, 0.0], &w, 16.0);
        assert_eq!(l, vec![16.0, 0.0]);
        let z = [0.3, -1.2];
        let scaled: Vec<f64> = z.iter().map(|v| v * 7.0).collect();
        let a = cosine_logits(&z, &w, 16.0);
        let b = cosine_logits(&scaled, &w, 16.0);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10);
            assert!(x.abs() <= 16.0);
        }
    }
}
