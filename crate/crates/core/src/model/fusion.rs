//! Weighted feature fusion plus the add/concat ablation variants.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::params::{dropout, Graph, Linear, ParamBuilder};
use crate::corpus::Modality;
use crate::error::{Error, Result};
use crate::numerics::{RngState, Tensor2, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    Weighted,
    Add,
    Concat,
}

impl FromStr for FusionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted" => Ok(FusionMode::Weighted),
            "add" => Ok(FusionMode::Add),
            "concat" => Ok(FusionMode::Concat),
            _ => Err(Error::param("fusion", "mode", format!("unknown fusion mode `{s}`"))),
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionMode::Weighted => "weighted",
            FusionMode::Add => "add",
            FusionMode::Concat => "concat",
        })
    }
}

/// `s = W₂ · Dropout(ReLU(W₁ · x))` for one modality.
#[derive(Debug, Clone)]
pub struct ScoreNet {
    pub hidden: Linear,
    pub out: Linear,
}

#[derive(Debug, Clone)]
pub struct Fusion {
    pub mode: FusionMode,
    pub dropout: f64,
    /// Weighted mode only, indexed by [`Modality::index`].
    pub scorers: Option<[ScoreNet; 3]>,
    /// Concat mode only: `3·D → D`.
    pub concat: Option<Linear>,
}

pub struct FusionOut {
    pub z: Var,
    /// `B × 3` modality weights; absent for concat.
    pub weights: Option<Var>,
}

impl Fusion {
    pub fn new(pb: &mut ParamBuilder<'_>, mode: FusionMode, dim: usize, hidden: usize, dropout: f64) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::param("fusion", "hidden", "must be positive"));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::param("fusion", "dropout", format!("must be in [0, 1), got {dropout}")));
        }
        let scorers = match mode {
            FusionMode::Weighted => {
                let mut nets = Vec::with_capacity(3);
                for m in Modality::ALL {
                    nets.push(ScoreNet {
                        hidden: Linear::new(pb, &format!("fusion.{}.score_hidden", m.name()), dim, hidden, true)?,
                        out: Linear::new(pb, &format!("fusion.{}.score_out", m.name()), hidden, 1, true)?,
                    });
                }
                Some(nets.try_into().unwrap_or_else(|_| unreachable!()))
            }
            _ => None,
        };
        let concat = match mode {
            FusionMode::Concat => Some(Linear::new(pb, "fusion.concat", 3 * dim, dim, true)?),
            _ => None,
        };
        Ok(Self {
            mode,
            dropout,
            scorers,
            concat,
        })
    }

    /// Per-modality importance scores, each `B × 1`. Weighted mode only.
    pub fn modality_scores(&self, g: &mut Graph<'_>, xs: [Var; 3], mut rng: Option<&mut RngState>) -> Option<[Var; 3]> {
        let nets = self.scorers.as_ref()?;
        Some(Modality::ALL.map(|m| {
            let net = &nets[m.index()];
            let h = net.hidden.forward(g, xs[m.index()]);
            let h = g.tape.relu(h);
            let h = dropout(g, h, self.dropout, rng.as_deref_mut());
            net.out.forward(g, h)
        }))
    }

    pub fn fuse(&self, g: &mut Graph<'_>, xs: [Var; 3], rng: Option<&mut RngState>) -> FusionOut {
        match self.mode {
            FusionMode::Weighted => {
                let scores = self.modality_scores(g, xs, rng).expect("weighted mode has scorers");
                let s = g.tape.concat_cols(scores.to_vec());
                let w = g.tape.softmax_rows(s);
                let mut parts = Vec::with_capacity(3);
                for m in Modality::ALL {
                    let wm = g.tape.slice_cols(w, m.index(), 1);
                    parts.push(g.tape.mul_column(xs[m.index()], wm));
                }
                let z = g.tape.add(parts[0], parts[1]);
                let z = g.tape.add(z, parts[2]);
                FusionOut { z, weights: Some(w) }
            }
            FusionMode::Add => {
                let z = g.tape.add(xs[0], xs[1]);
                let z = g.tape.add(z, xs[2]);
                let n = g.value(z).rows();
                let w = g.input(Tensor2::filled(n, 3, 1.0 / 3.0));
                FusionOut { z, weights: Some(w) }
            }
            FusionMode::Concat => {
                let cat = g.tape.concat_cols(xs.to_vec());
                let z = self.concat.as_ref().expect("concat mode has a projection").forward(g, cat);
                FusionOut { z, weights: None }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::{ParamId, ParamStore};
    use crate::numerics::gradcheck::{assert_gradients_match, finite_difference};

    fn build(mode: FusionMode, dim: usize, hidden: usize) -> (ParamStore, Fusion) {
        let mut store = ParamStore::new();
        let mut rng = RngState::new(5);
        let f = {
            let mut pb = ParamBuilder::init(&mut store, &mut rng);
            Fusion::new(&mut pb, mode, dim, hidden, 0.1).unwrap()
        };
        (store, f)
    }

    fn rows(rng: &mut RngState, n: usize, d: usize) -> Tensor2 {
        Tensor2::from_raw(n, d, (0..n * d).map(|_| rng.normal()).collect())
    }

    fn relu_affine(x: &[f64], w1: &Tensor2, b1: &Tensor2, w2: &Tensor2, b2: &Tensor2) -> f64 {
        let mut h = vec![0.0; w1.cols()];
        for (j, hj) in h.iter_mut().enumerate() {
            let mut s = b1.data()[j];
            for (i, &xi) in x.iter().enumerate() {
                s += xi * w1[(i, j)];
            }
            *hj = s.max(0.0);
        }
        b2.data()[0] + h.iter().enumerate().map(|(j, &hj)| hj * w2[(j, 0)]).sum::<f64>()
    }

    #[test]
    fn scores_match_hand_composition() {
        let (store, f) = build(FusionMode::Weighted, 5, 7);
        let mut rng = RngState::new(1);
        let xs_t = [rows(&mut rng, 3, 5), rows(&mut rng, 3, 5), rows(&mut rng, 3, 5)];
        let mut g = Graph::new(&store);
        let xs = xs_t.clone().map(|x| g.input(x));
        let s = f.modality_scores(&mut g, xs, None).unwrap();
        for m in Modality::ALL {
            let net = &f.scorers.as_ref().unwrap()[m.index()];
            for i in 0..3 {
                let expect = relu_affine(
                    xs_t[m.index()].row(i),
                    store.get(net.hidden.w),
                    store.get(net.hidden.b.unwrap()),
                    store.get(net.out.w),
                    store.get(net.out.b.unwrap()),
                );
                assert!((g.value(s[m.index()])[(i, 0)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_input_zero_bias_scores_are_zero() {
        let (store, f) = build(FusionMode::Weighted, 4, 3);
        let mut g = Graph::new(&store);
        let xs = [0, 1, 2].map(|_| g.input(Tensor2::zeros(2, 4)));
        let s = f.modality_scores(&mut g, xs, None).unwrap();
        for v in s {
            assert!(g.value(v).data().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn identical_nets_and_inputs_give_identical_scores() {
        let (mut store, f) = build(FusionMode::Weighted, 4, 3);
        let nets = f.scorers.clone().unwrap();
        for m in [1, 2] {
            for (src, dst) in [
                (nets[0].hidden.w, nets[m].hidden.w),
                (nets[0].hidden.b.unwrap(), nets[m].hidden.b.unwrap()),
                (nets[0].out.w, nets[m].out.w),
                (nets[0].out.b.unwrap(), nets[m].out.b.unwrap()),
            ] {
                *store.get_mut(dst) = store.get(src).clone();
            }
        }
        let x = rows(&mut RngState::new(2), 2, 4);
        let mut g = Graph::new(&store);
        let xs = [0, 1, 2].map(|_| g.input(x.clone()));
        let s = f.modality_scores(&mut g, xs, None).unwrap();
        assert_eq!(g.value(s[0]), g.value(s[1]));
        assert_eq!(g.value(s[1]), g.value(s[2]));
    }

    /// Zeroes the score networks, then sets the text output bias.
    fn with_scores(store: &mut ParamStore, f: &Fusion, text_bias: f64, common: f64) {
        for (k, net) in f.scorers.as_ref().unwrap().iter().enumerate() {
            store.get_mut(net.out.w).data_mut().iter_mut().for_each(|v| *v = 0.0);
            store.get_mut(net.out.b.unwrap()).data_mut()[0] = common + if k == 0 { text_bias } else { 0.0 };
        }
    }

    #[test]
    fn equal_scores_average_and_saturated_scores_select() {
        let (mut store, f) = build(FusionMode::Weighted, 3, 4);
        let mut rng = RngState::new(3);
        let xs_t = [rows(&mut rng, 2, 3), rows(&mut rng, 2, 3), rows(&mut rng, 2, 3)];

        with_scores(&mut store, &f, 0.0, 0.7);
        let mut g = Graph::new(&store);
        let xs = xs_t.clone().map(|x| g.input(x));
        let out = f.fuse(&mut g, xs, None);
        for w in g.value(out.weights.unwrap()).data() {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
        for i in 0..2 {
            for j in 0..3 {
                let mean = (xs_t[0][(i, j)] + xs_t[1][(i, j)] + xs_t[2][(i, j)]) / 3.0;
                assert!((g.value(out.z)[(i, j)] - mean).abs() < 1e-12);
            }
        }

        with_scores(&mut store, &f, 50.0, 0.0);
        let mut g = Graph::new(&store);
        let xs = xs_t.clone().map(|x| g.input(x));
        let out = f.fuse(&mut g, xs, None);
        let w = g.value(out.weights.unwrap());
        assert!(w[(0, 0)] > 0.999);
        for (a, b) in g.value(out.z).data().iter().zip(xs_t[0].data()) {
            assert!((a - b).abs() <= 1e-3 * b.abs().max(1.0));
        }
    }

    #[test]
    fn add_mode_sums() {
        let (store, f) = build(FusionMode::Add, 2, 4);
        let mut g = Graph::new(&store);
        let xs = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]].map(|r| g.input(Tensor2::row_vector(&r)));
        let out = f.fuse(&mut g, xs, None);
        assert_eq!(g.value(out.z).data(), &[2.0, 2.0]);
        assert!(f.scorers.is_none() && f.concat.is_none());
        assert!("sum".parse::<FusionMode>().is_err());
    }

    #[test]
    fn concat_mode_projects_to_width() {
        let (store, f) = build(FusionMode::Concat, 4, 4);
        let mut g = Graph::new(&store);
        let xs = [0, 1, 2].map(|_| g.input(Tensor2::filled(3, 4, 1.0)));
        let out = f.fuse(&mut g, xs, None);
        assert_eq!(g.value(out.z).shape(), (3, 4));
        assert!(out.weights.is_none());
    }

    #[test]
    fn weights_and_z_gradients_match_finite_differences() {
        let (store, f) = build(FusionMode::Weighted, 3, 4);
        let mut rng = RngState::new(9);
        let xs_t = [rows(&mut rng, 2, 3), rows(&mut rng, 2, 3), rows(&mut rng, 2, 3)];
        let rz = rows(&mut rng, 2, 3);
        let rw = rows(&mut rng, 2, 3);
        let loss = |s: &ParamStore| -> (f64, Vec<(ParamId, Tensor2)>) {
            let mut g = Graph::new(s);
            let xs = xs_t.clone().map(|x| g.input(x));
            // Fixed dropout masks across evaluations.
            let mut drng = RngState::new(1);
            let out = f.fuse(&mut g, xs, Some(&mut drng));
            let a = g.tape.weighted_sum(out.z, rz.clone());
            let b = g.tape.weighted_sum(out.weights.unwrap(), rw.clone());
            let l = g.tape.add(a, b);
            (g.tape.scalar(l), g.param_grads(l))
        };
        let (_, grads) = loss(&store);
        assert!(!grads.is_empty());
        for (id, analytic) in grads {
            let numeric = finite_difference(store.get(id), 1e-5, |p| {
                let mut s = store.clone();
                *s.get_mut(id) = p.clone();
                loss(&s).0
            });
            assert_gradients_match(store.name(id), &analytic, &numeric);
        }
    }
}
