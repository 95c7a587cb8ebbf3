//! Single-layer transformer-style modality encoders.
//!
//! Text prepends a learned class token and returns its output row. Video
//! and audio mean-pool the layer output over time and project to the text
//! width.

use super::params::{Graph, Init, Linear, ParamBuilder, ParamId};
use crate::corpus::{Modality, SeqShape};
use crate::error::{Error, Result};
use crate::numerics::{Tensor2, Var};

#[derive(Debug, Clone)]
pub struct ModalityEncoder {
    pub modality: Modality,
    pub shape: SeqShape,
    pub heads: usize,
    pub positional: bool,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub attn_out: Linear,
    pub ff_in: Linear,
    pub ff_out: Linear,
    /// Text only.
    pub class_token: Option<ParamId>,
    /// Video/audio only: `D_M × D_T` output projection.
    pub project: Option<Linear>,
}

impl ModalityEncoder {
    pub fn new(
        pb: &mut ParamBuilder<'_>,
        modality: Modality,
        shape: SeqShape,
        out_dim: usize,
        heads: usize,
        ffn_mult: usize,
        positional: bool,
    ) -> Result<Self> {
        let d = shape.dim;
        if heads == 0 || d % heads != 0 {
            return Err(Error::param(
                "encoders",
                "heads",
                format!("{modality} width {d} is not divisible by {heads} heads"),
            ));
        }
        if modality == Modality::Text && d != out_dim {
            return Err(Error::param("encoders", "dim", "text width defines the shared width"));
        }
        let p = |s: &str| format!("encoder.{}.{s}", modality.name());
        let ffn = (ffn_mult * d).max(1);
        Ok(Self {
            modality,
            shape,
            heads,
            positional,
            query: Linear::new(pb, &p("query"), d, d, true)?,
            key: Linear::new(pb, &p("key"), d, d, true)?,
            value: Linear::new(pb, &p("value"), d, d, true)?,
            attn_out: Linear::new(pb, &p("attn_out"), d, d, true)?,
            ff_in: Linear::new(pb, &p("ff_in"), d, ffn, true)?,
            ff_out: Linear::new(pb, &p("ff_out"), ffn, d, true)?,
            class_token: if modality == Modality::Text {
                Some(pb.param(&p("class_token"), 1, d, Init::Glorot)?)
            } else {
                None
            },
            project: if modality == Modality::Text {
                None
            } else {
                Some(Linear::new(pb, &p("project"), d, out_dim, true)?)
            },
        })
    }

    /// Encodes `seqs` (each `L × D_M`) into a `B × D_T` matrix.
    pub fn encode(&self, g: &mut Graph<'_>, seqs: &[&Tensor2]) -> Result<Var> {
        let (l, d) = (self.shape.len, self.shape.dim);
        for s in seqs {
            if s.shape() != (l, d) {
                return Err(Error::param(
                    "encoders",
                    "seq",
                    format!("{} sequence is {}x{}, expected {l}x{d}", self.modality, s.rows(), s.cols()),
                ));
            }
        }
        let pe = self.positional.then(|| sinusoidal(l, d));
        let inputs: Vec<Tensor2> = seqs
            .iter()
            .map(|s| match &pe {
                Some(pe) => s.zip_map(pe, |a, b| a + b),
                None => (*s).clone(),
            })
            .collect();

        // Stack every sample (with its class token for text) so the
        // position-wise maps run once per batch.
        let rows_per = if self.class_token.is_some() { l + 1 } else { l };
        let stacked = match self.class_token {
            Some(cls) => {
                let cls = g.param(cls);
                let mut parts = Vec::with_capacity(2 * inputs.len());
                for x in inputs {
                    parts.push(cls);
                    parts.push(g.input(x));
                }
                g.tape.concat_rows(parts)
            }
            None => {
                let refs: Vec<&Tensor2> = inputs.iter().collect();
                g.input(Tensor2::vstack(&refs))
            }
        };

        let dh = d / self.heads;
        let q = self.query.forward(g, stacked);
        let q = g.tape.scale(q, 1.0 / (dh as f64).sqrt());
        let k = self.key.forward(g, stacked);
        let v = self.value.forward(g, stacked);

        let mut sample_outs = Vec::with_capacity(seqs.len());
        for s in 0..seqs.len() {
            let qs = g.tape.slice_rows(q, s * rows_per, rows_per);
            let ks = g.tape.slice_rows(k, s * rows_per, rows_per);
            let vs = g.tape.slice_rows(v, s * rows_per, rows_per);
            let heads: Vec<Var> = (0..self.heads)
                .map(|h| {
                    let qh = if self.heads == 1 { qs } else { g.tape.slice_cols(qs, h * dh, dh) };
                    let kh = if self.heads == 1 { ks } else { g.tape.slice_cols(ks, h * dh, dh) };
                    let vh = if self.heads == 1 { vs } else { g.tape.slice_cols(vs, h * dh, dh) };
                    let scores = g.tape.matmul_t(qh, kh);
                    let attn = g.tape.softmax_rows(scores);
                    g.tape.matmul(attn, vh)
                })
                .collect();
            sample_outs.push(if heads.len() == 1 { heads[0] } else { g.tape.concat_cols(heads) });
        }
        let attn = g.tape.concat_rows(sample_outs);
        let attn = self.attn_out.forward(g, attn);
        let h = g.tape.add(stacked, attn);
        let ff = self.ff_in.forward(g, h);
        let ff = g.tape.relu(ff);
        let ff = self.ff_out.forward(g, ff);
        let out = g.tape.add(h, ff);

        Ok(match &self.project {
            None => {
                let cls_rows = (0..seqs.len()).map(|s| s * rows_per).collect();
                g.tape.gather_rows(out, cls_rows)
            }
            Some(project) => {
                let n = seqs.len();
                let mut pool = Tensor2::zeros(n, n * l);
                for s in 0..n {
                    for t in 0..l {
                        pool[(s, s * l + t)] = 1.0 / l as f64;
                    }
                }
                let pool = g.input(pool);
                let pooled = g.tape.matmul(pool, out);
                project.forward(g, pooled)
            }
        })
    }
}

/// Standard sine/cosine position table.
pub fn sinusoidal(len: usize, dim: usize) -> Tensor2 {
    let mut t = Tensor2::zeros(len, dim);
    for pos in 0..len {
        for i in 0..dim {
            let freq = 1.0 / 10_000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            let a = pos as f64 * freq;
            t[(pos, i)] = if i % 2 == 0 { a.sin() } else { a.cos() };
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::ParamStore;
    use crate::numerics::gradcheck::{assert_gradients_match, finite_difference};
    use crate::numerics::RngState;

    fn build(m: Modality, shape: SeqShape, out: usize, positional: bool) -> (ParamStore, ModalityEncoder) {
        let mut store = ParamStore::new();
        let mut rng = RngState::new(17);
        let enc = {
            let mut pb = ParamBuilder::init(&mut store, &mut rng);
            ModalityEncoder::new(&mut pb, m, shape, out, 2, 2, positional).unwrap()
        };
        (store, enc)
    }

    fn rand_seq(shape: SeqShape, rng: &mut RngState) -> Tensor2 {
        Tensor2::from_raw(shape.len, shape.dim, (0..shape.len * shape.dim).map(|_| rng.normal()).collect())
    }

    fn run(store: &ParamStore, enc: &ModalityEncoder, seqs: &[&Tensor2]) -> Tensor2 {
        let mut g = Graph::new(store);
        let v = enc.encode(&mut g, seqs).unwrap();
        g.value(v).clone()
    }

    #[test]
    fn output_width_is_shared_width() {
        let mut rng = RngState::new(0);
        for (m, shape) in [
            (Modality::Text, SeqShape { len: 3, dim: 6 }),
            (Modality::Video, SeqShape { len: 4, dim: 4 }),
            (Modality::Audio, SeqShape { len: 2, dim: 8 }),
        ] {
            let (store, enc) = build(m, shape, 6, false);
            let a = rand_seq(shape, &mut rng);
            let b = rand_seq(shape, &mut rng);
            let out = run(&store, &enc, &[&a, &b]);
            assert_eq!(out.shape(), (2, 6));
            // Batched encoding equals one-at-a-time encoding.
            let solo = run(&store, &enc, &[&b]);
            for (x, y) in out.row(1).iter().zip(solo.row(0)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let (store, enc) = build(Modality::Video, SeqShape { len: 4, dim: 4 }, 6, false);
        let mut g = Graph::new(&store);
        assert!(enc.encode(&mut g, &[&Tensor2::zeros(3, 4)]).is_err());
    }

    #[test]
    fn single_step_pooling_is_that_step() {
        let shape = SeqShape { len: 1, dim: 4 };
        let (store, enc) = build(Modality::Audio, shape, 4, false);
        let x = rand_seq(shape, &mut RngState::new(2));
        // With L = 1 attention is a weight of 1 on the only step, so the
        // pooled vector is the position-wise transform of that step.
        let lin = |l: &Linear, v: &Tensor2| {
            let mut y = v.matmul(store.get(l.w));
            y.add_assign(store.get(l.b.unwrap()));
            y
        };
        let v = lin(&enc.value, &x);
        let mut h = x.clone();
        h.add_assign(&lin(&enc.attn_out, &v));
        let ff = lin(&enc.ff_out, &lin(&enc.ff_in, &h).map(|a| a.max(0.0)));
        h.add_assign(&ff);
        let expect = lin(enc.project.as_ref().unwrap(), &h);
        let got = run(&store, &enc, &[&x]);
        assert!(got.max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn zero_params_and_input_give_zero() {
        let shape = SeqShape { len: 3, dim: 4 };
        let (mut store, enc) = build(Modality::Text, shape, 4, false);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            store.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let out = run(&store, &enc, &[&Tensor2::zeros(3, 4)]);
        assert!(out.data().iter().all(|&v| v == 0.0));

        let (mut store, enc) = build(Modality::Video, shape, 4, false);
        // Zero input and zero biases: only the projection bias survives.
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            if store.name(id).ends_with(".bias") {
                store.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let pb = enc.project.as_ref().unwrap().b.unwrap();
        store.get_mut(pb).data_mut().copy_from_slice(&[1.0, -2.0, 0.5, 3.0]);
        let out = run(&store, &enc, &[&Tensor2::zeros(3, 4)]);
        assert_eq!(out.data(), &[1.0, -2.0, 0.5, 3.0]);
    }

    #[test]
    fn mean_pool_is_permutation_invariant() {
        let shape = SeqShape { len: 5, dim: 4 };
        let (store, enc) = build(Modality::Audio, shape, 6, false);
        let x = rand_seq(shape, &mut RngState::new(3));
        let perm = [3usize, 0, 4, 1, 2];
        let xp = x.select_rows(&perm);
        let a = run(&store, &enc, &[&x]);
        let b = run(&store, &enc, &[&xp]);
        assert!(a.max_abs_diff(&b) < 1e-10);

        let (store, enc) = build(Modality::Audio, shape, 6, true);
        let a = run(&store, &enc, &[&x]);
        let b = run(&store, &enc, &[&xp]);
        assert!(a.max_abs_diff(&b) > 1e-6);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = RngState::new(4);
        for (m, shape) in [(Modality::Text, SeqShape { len: 3, dim: 4 }), (Modality::Video, SeqShape { len: 3, dim: 4 })] {
            let (store, enc) = build(m, shape, 4, true);
            let seqs = [rand_seq(shape, &mut rng), rand_seq(shape, &mut rng)];
            let readout = Tensor2::from_raw(2, 4, (0..8).map(|_| rng.normal()).collect());
            let loss = |s: &ParamStore| -> (f64, Vec<(ParamId, Tensor2)>) {
                let mut g = Graph::new(s);
                let refs: Vec<&Tensor2> = seqs.iter().collect();
                let out = enc.encode(&mut g, &refs).unwrap();
                let l = g.tape.weighted_sum(out, readout.clone());
                (g.tape.scalar(l), g.param_grads(l))
            };
            let (_, grads) = loss(&store);
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
}
