//! Stable elementwise reductions.

use crate::error::{Error, Result};

/// Softmax with max subtraction; never overflows for finite input.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = v.iter().map(|&x| (x - m).exp()).collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= z);
    out
}

pub fn logsumexp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::param("numerics", "v", "logsumexp of an empty vector"));
    }
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = v.iter().map(|&x| (x - m).exp()).sum();
    Ok(m + s.ln())
}

/// Unit-norm copy of `v`, or the zero vector when `‖v‖ ≤ eps`.
pub fn l2_normalize(v: &[f64], eps: f64) -> Vec<f64> {
    let n = super::norm(v);
    if n <= eps {
        vec![0.0; v.len()]
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_examples() {
        for p in softmax(&[0.0, 0.0, 0.0]) {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        for p in softmax(&[1000.0, 1000.0, 1000.0]) {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax(&[2f64.ln(), 0.0]);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn logsumexp_examples() {
        assert!((logsumexp(&[0.0, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(logsumexp(&[-3.25]).unwrap(), -3.25);
        assert!((logsumexp(&[1e4, 1e4]).unwrap() - (1e4 + 2f64.ln())).abs() < 1e-10);
        assert!(logsumexp(&[]).is_err());
    }

    #[test]
    fn l2_normalize_examples() {
        assert_eq!(l2_normalize(&[3.0, 4.0], 1e-12), vec![0.6, 0.8]);
        let u = [0.6, 0.8];
        assert_eq!(l2_normalize(&u, 1e-12), u.to_vec());
        assert_eq!(l2_normalize(&[0.0; 4], 1e-12), vec![0.0; 4]);
    }

    proptest! {
        #[test]
        fn softmax_shift_invariant(v in prop::collection::vec(-50.0f64..50.0, 1..8), c in -500.0f64..500.0) {
            let a = softmax(&v);
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let b = softmax(&shifted);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn softmax_permutation_equivariant(v in prop::collection::vec(-20.0f64..20.0, 2..8), seed in 0u64..1000) {
            let mut perm: Vec<usize> = (0..v.len()).collect();
            crate::numerics::RngState::new(seed).shuffle(&mut perm);
            let permuted: Vec<f64> = perm.iter().map(|&i| v[i]).collect();
            let a = softmax(&v);
            let b = softmax(&permuted);
            for (k, &i) in perm.iter().enumerate() {
                prop_assert!((b[k] - a[i]).abs() < 1e-15);
            }
        }

        #[test]
        fn logsumexp_bounds(v in prop::collection::vec(-1e3f64..1e3, 1..10)) {
            let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let l = logsumexp(&v).unwrap();
            prop_assert!(l >= m - 1e-12);
            prop_assert!(l <= m + (v.len() as f64).ln() + 1e-12);
        }

        #[test]
        fn l2_normalize_unit(v in prop::collection::vec(-10.0f64..10.0, 1..10)) {
            prop_assume!(crate::numerics::norm(&v) > 1e-6);
            let u = l2_normalize(&v, 1e-12);
            prop_assert!((crate::numerics::norm(&u) - 1.0).abs() < 1e-12);
        }
    }
}
