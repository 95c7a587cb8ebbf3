//! Central finite-difference checking of analytical gradients.
//!
//! Evaluates only the forward function, so it stays independent of every
//! backward transform it checks.

use super::Tensor2;

pub const STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-3;
pub const ABS_TOL: f64 = 1e-6;
/// Below this gradient magnitude the absolute tolerance applies.
pub const SMALL_GRADIENT: f64 = 1e-3;

/// Central-difference gradient of `f` at `x`.
pub fn finite_difference(x: &Tensor2, h: f64, mut f: impl FnMut(&Tensor2) -> f64) -> Tensor2 {
    let mut out = Tensor2::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for i in 0..x.data().len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        out.data_mut()[i] = (up - down) / (2.0 * h);
    }
    out
}

/// Worst violation found when comparing `analytic` to `numeric`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mismatch {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Entry-wise comparison under the relative/absolute tolerance rule.
pub fn compare(analytic: &Tensor2, numeric: &Tensor2) -> Result<(), Mismatch> {
    assert_eq!(analytic.shape(), numeric.shape(), "gradient shape mismatch");
    for (index, (&a, &n)) in analytic.data().iter().zip(numeric.data()).enumerate() {
        let mag = a.abs().max(n.abs());
        let ok = if mag < SMALL_GRADIENT {
            (a - n).abs() <= ABS_TOL
        } else {
            (a - n).abs() / mag <= REL_TOL
        };
        if !ok {
            return Err(Mismatch {
                index,
                analytic: a,
                numeric: n,
            });
        }
    }
    Ok(())
}

pub fn assert_gradients_match(label: &str, analytic: &Tensor2, numeric: &Tensor2) {
    if let Err(m) = compare(analytic, numeric) {
        panic!(
            "{label}: gradient mismatch at flat index {}: analytic {:e} vs numeric {:e}",
            m.index, m.analytic, m.numeric
        );
    }
}
