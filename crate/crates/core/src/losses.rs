//! Training objectives: coarse ID/OOD cross-entropy, multi-class
//! cross-entropy and the ID/OOD contrastive losses.
//!
//! Each loss has a tape form used in training and a plain `f64` form that
//! builds a throwaway tape around constant inputs.

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor2, Var};

/// Probabilities are clamped at this value before the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Norm guard when normalizing contrastive features.
const VIEW_EPS: f64 = 1e-12;

fn check_len(module: &'static str, what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Contract(format!("{module}: {what} has {got} rows, expected {want}")));
    }
    Ok(())
}

/// Mean binary cross-entropy on `B × 2` logits. Column 0 is OOD, column 1
/// is ID; `is_id[i]` selects the target column.
pub fn coarse_loss(tape: &mut Tape, logits: Var, is_id: &[bool]) -> Result<Var> {
    let (b, c) = tape.value(logits).shape();
    if c != 2 {
        return Err(Error::Contract(format!("coarse loss needs 2 logit columns, got {c}")));
    }
    check_len("coarse loss", "label list", is_id.len(), b)?;
    if b == 0 {
        return Err(Error::Contract("coarse loss on an empty batch".into()));
    }
    let lp = tape.log_softmax_rows(logits, None, PROB_FLOOR.ln());
    let mut w = Tensor2::zeros(b, 2);
    for (i, &id) in is_id.iter().enumerate() {
        w[(i, usize::from(id))] = -1.0 / b as f64;
    }
    Ok(tape.weighted_sum(lp, w))
}

/// Mean softmax cross-entropy over ID samples.
pub fn multiclass_loss(tape: &mut Tape, logits: Var, labels: &[Label]) -> Result<Var> {
    let (b, k) = tape.value(logits).shape();
    check_len("multi-class loss", "label list", labels.len(), b)?;
    if b == 0 {
        return Err(Error::Contract("multi-class loss on an empty batch".into()));
    }
    let mut w = Tensor2::zeros(b, k);
    for (i, l) in labels.iter().enumerate() {
        match *l {
            Label::Id(c) if c < k => w[(i, c)] = -1.0 / b as f64,
            Label::Id(c) => {
                return Err(Error::Contract(format!("multi-class loss: label {c} out of range for {k} classes")))
            }
            Label::Ood => return Err(Error::Contract(format!("multi-class loss: sample {i} is OOD"))),
        }
    }
    let lp = tape.log_softmax_rows(logits, None, f64::NEG_INFINITY);
    Ok(tape.weighted_sum(lp, w))
}

/// Coefficients applied to the `2B × 2B` log-probability matrix.
///
/// Rows `0..B` are the first views, rows `B..2B` their augmentations. ID
/// anchors take every other view with the same class as a positive; OOD
/// anchors take only their own counterpart view.
pub fn contrastive_weights(labels: &[Label]) -> Tensor2 {
    let b = labels.len();
    let n = 2 * b;
    let label_of = |v: usize| labels[v % b];
    let mut w = Tensor2::zeros(n, n);
    for i in 0..n {
        match label_of(i) {
            Label::Id(c) => {
                let pos: Vec<usize> = (0..n).filter(|&p| p != i && label_of(p) == Label::Id(c)).collect();
                let coef = -1.0 / (n as f64 * pos.len() as f64);
                for p in pos {
                    w[(i, p)] = coef;
                }
            }
            Label::Ood => w[(i, (i + b) % n)] = -1.0 / n as f64,
        }
    }
    w
}

/// Contrastive loss over stacked views (`2B × D`): the first `B` rows
/// correspond to `labels`, the last `B` to their augmented copies.
pub fn contrastive_loss(tape: &mut Tape, views: Var, labels: &[Label], tau: f64) -> Result<Var> {
    if !(tau > 0.0) {
        return Err(Error::param("heads_losses", "tau", format!("must be positive, got {tau}")));
    }
    let n = tape.value(views).rows();
    check_len("contrastive loss", "view matrix", n, 2 * labels.len())?;
    if labels.is_empty() {
        return Err(Error::Contract("contrastive loss on an empty batch".into()));
    }
    let unit = tape.l2_normalize_rows(views, VIEW_EPS);
    let sim = tape.matmul_t(unit, unit);
    let sim = tape.scale(sim, 1.0 / tau);
    Ok(contrastive_from_similarity(tape, sim, labels))
}

/// Contrastive loss given the temperature-scaled `2B × 2B` similarity
/// matrix. The diagonal is ignored.
pub fn contrastive_from_similarity(tape: &mut Tape, sim: Var, labels: &[Label]) -> Var {
    let n = tape.value(sim).rows();
    let mask: Vec<bool> = (0..n * n).map(|e| e / n != e % n).collect();
    let lp = tape.log_softmax_rows(sim, Some(mask), f64::NEG_INFINITY);
    tape.weighted_sum(lp, contrastive_weights(labels))
}

fn eval_const(input: &Tensor2, f: impl FnOnce(&mut Tape, Var) -> Result<Var>) -> Result<f64> {
    let mut tape = Tape::new();
    let x = tape.leaf(input.clone());
    let out = f(&mut tape, x)?;
    let v = tape.scalar(out);
    if !v.is_finite() {
        return Err(Error::Numerical(format!("loss evaluated to {v}")));
    }
    Ok(v)
}

pub fn coarse_loss_value(logits: &Tensor2, is_id: &[bool]) -> Result<f64> {
    eval_const(logits, |t, x| coarse_loss(t, x, is_id))
}

pub fn multiclass_loss_value(logits: &Tensor2, labels: &[Label]) -> Result<f64> {
    eval_const(logits, |t, x| multiclass_loss(t, x, labels))
}

pub fn contrastive_loss_value(views: &Tensor2, labels: &[Label], tau: f64) -> Result<f64> {
    eval_const(views, |t, x| contrastive_loss(t, x, labels, tau))
}
