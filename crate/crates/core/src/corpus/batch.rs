use super::{Label, Sequences};
use crate::error::{Error, Result};
use crate::numerics::RngState;

/// Training batch: per-sample sequences with labels. Binary flags are
/// derived from the labels (`true` = ID, `false` = OOD).
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub seqs: Vec<Sequences>,
    pub labels: Vec<Label>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn flags(&self) -> Vec<bool> {
        self.labels.iter().map(|l| l.is_id()).collect()
    }
}

/// One epoch of ID half-batches: a seeded permutation of `0..records.len()`
/// chunked into groups of `batch_size / 2`, dropping the partial tail. The
/// other half of every training batch is filled with pseudo-OOD samples.
pub fn make_batches<T>(records: &[T], batch_size: usize, rng: &mut RngState) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 || batch_size % 2 != 0 {
        return Err(Error::param("corpus", "batch_size", format!("must be even and positive, got {batch_size}")));
    }
    let half = batch_size / 2;
    if half > records.len() {
        return Err(Error::param(
            "corpus",
            "batch_size",
            format!("{batch_size} exceeds twice the {} training records", records.len()),
        ));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    rng.shuffle(&mut order);
    Ok(order.chunks_exact(half).map(<[usize]>::to_vec).collect())
}
