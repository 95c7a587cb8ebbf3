use rand_distr::{Distribution, Gamma};

use super::RngState;
use crate::error::{Error, Result};

/// One draw from the symmetric Dirichlet `Dir(alpha · 1_k)` by normalizing
/// `k` independent `Gamma(alpha, 1)` draws.
pub fn dirichlet_sample(alpha: f64, k: usize, rng: &mut RngState) -> Result<Vec<f64>> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::param("numerics", "alpha", format!("must be positive, got {alpha}")));
    }
    if k < 2 {
        return Err(Error::param("numerics", "k", format!("must be at least 2, got {k}")));
    }
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::param("numerics", "alpha", e.to_string()))?;
    // Tiny alpha can underflow every component to zero; redraw in that case.
    for _ in 0..64 {
        let mut draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            draws.iter_mut().for_each(|d| *d /= total);
            return Ok(draws);
        }
    }
    Err(Error::Numerical(format!("Dirichlet draws underflowed for alpha = {alpha}")))
}
