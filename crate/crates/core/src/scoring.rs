//! OOD confidence scores. Every scorer returns larger values for inputs
//! that look more in-distribution.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    covariance, default_ridge, dot, l2_normalize, logsumexp, norm, principal_subspace, regularized_inverse, softmax,
    Tensor2,
};

/// Ridge added to each class covariance is `RIDGE_RELATIVE · tr(Σ)/D`,
/// but never below [`RIDGE_FLOOR`].
pub const RIDGE_RELATIVE: f64 = 1e-6;
pub const RIDGE_FLOOR: f64 = 1e-9;

const FEATURE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassGaussian {
    pub mean: Vec<f64>,
    pub cov: Tensor2,
    pub count: usize,
    pub eps: f64,
    /// `(Σ + eps·I)⁻¹`
    pub precision: Tensor2,
}

impl ClassGaussian {
    pub fn distance(&self, z: &[f64]) -> f64 {
        let d: Vec<f64> = z.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let mut q = 0.0;
        for (i, &di) in d.iter().enumerate() {
            q += di * dot(self.precision.row(i), &d);
        }
        q
    }
}

/// Per-class means and unbiased covariances of training features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub classes: Vec<ClassGaussian>,
}

pub fn fit_class_stats(features: &Tensor2, labels: &[usize], k: usize) -> Result<ClassStats> {
    if labels.len() != features.rows() {
        return Err(Error::param(
            "scoring",
            "labels",
            format!("{} labels for {} feature rows", labels.len(), features.rows()),
        ));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &c) in labels.iter().enumerate() {
        if c >= k {
            return Err(Error::param("scoring", "labels", format!("label {c} out of range for {k} classes")));
        }
        members[c].push(i);
    }
    let mut classes = Vec::with_capacity(k);
    for (c, idx) in members.iter().enumerate() {
        if idx.len() < 2 {
            return Err(Error::InsufficientData {
                module: "scoring",
                reason: format!("class {c} has {} training features, need at least 2", idx.len()),
            });
        }
        let x = features.select_rows(idx);
        let cov = covariance(&x)?;
        let eps = default_ridge(&cov, RIDGE_RELATIVE, RIDGE_FLOOR);
        let precision = regularized_inverse(&cov, eps)?;
        classes.push(ClassGaussian {
            mean: x.mean_rows(),
            cov,
            count: idx.len(),
            eps,
            precision,
        });
    }
    Ok(ClassStats { classes })
}

/// Negated minimum class-conditional Mahalanobis distance.
pub fn score_mahalanobis(z: &[f64], stats: &ClassStats) -> f64 {
    let d = stats
        .classes
        .iter()
        .map(|c| c.distance(z))
        .fold(f64::INFINITY, f64::min);
    -d
}

pub fn score_energy(logits: &[f64]) -> f64 {
    logsumexp(logits).unwrap_or(f64::NEG_INFINITY)
}

pub fn score_msp(logits: &[f64]) -> f64 {
    softmax(logits).into_iter().fold(f64::NEG_INFINITY, f64::max)
}

pub fn score_maxlogit(logits: &[f64]) -> f64 {
    logits.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Principal subspace of the L2-normalized, centered training features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualState {
    pub mean: Vec<f64>,
    /// `D × K` orthonormal basis; `None` when `K ≥ D` and the residual is
    /// identically zero.
    pub basis: Option<Tensor2>,
}

impl ResidualState {
    pub fn is_degenerate(&self) -> bool {
        self.basis.is_none()
    }

    /// Norm of the component of `z_n − mean` outside the subspace.
    pub fn residual(&self, z: &[f64]) -> f64 {
        let Some(basis) = &self.basis else { return 0.0 };
        let zn = l2_normalize(z, FEATURE_EPS);
        let c: Vec<f64> = zn.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let mut r = c.clone();
        for j in 0..basis.cols() {
            let b = basis.column(j);
            let p = dot(&b, &c);
            for (ri, bi) in r.iter_mut().zip(&b) {
                *ri -= p * bi;
            }
        }
        norm(&r)
    }
}

pub fn fit_residual(features: &Tensor2, k: usize) -> Result<ResidualState> {
    if features.rows() < 2 {
        return Err(Error::InsufficientData {
            module: "scoring",
            reason: format!("residual fit needs at least 2 features, got {}", features.rows()),
        });
    }
    let d = features.cols();
    let normed = Tensor2::from_rows(&features.iter_rows().map(|r| l2_normalize(r, FEATURE_EPS)).collect::<Vec<_>>())?;
    let mean = normed.mean_rows();
    if k >= d {
        return Ok(ResidualState { mean, basis: None });
    }
    let cov = covariance(&normed)?;
    let basis = principal_subspace(&cov, k)?;
    Ok(ResidualState {
        mean,
        basis: Some(basis),
    })
}

pub fn score_residual(z: &[f64], state: &ResidualState) -> f64 {
    -state.residual(z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VimState {
    pub residual: ResidualState,
    pub alpha: f64,
}

/// Scale matching mean training residuals to mean maximum training logits.
pub fn fit_vim(features: &Tensor2, logits: &Tensor2, residual: ResidualState) -> Result<VimState> {
    if features.rows() != logits.rows() || features.rows() == 0 {
        return Err(Error::param(
            "scoring",
            "logits",
            format!("{} logit rows for {} feature rows", logits.rows(), features.rows()),
        ));
    }
    let n = features.rows() as f64;
    let mean_max = logits.iter_rows().map(score_maxlogit).sum::<f64>() / n;
    let mean_res = features.iter_rows().map(|z| residual.residual(z)).sum::<f64>() / n;
    if !(mean_res > 0.0) {
        return Err(Error::Numerical(format!(
            "mean training residual is {mean_res}; the virtual-logit scale is undefined"
        )));
    }
    Ok(VimState {
        residual,
        alpha: mean_max / mean_res,
    })
}

/// Negated softmax mass of the virtual logit `alpha · residual(z)` appended
/// to the class logits.
pub fn score_vim(z: &[f64], logits: &[f64], state: &VimState) -> f64 {
    vim_from_virtual(logits, state.alpha * state.residual.residual(z))
}

pub fn vim_from_virtual(logits: &[f64], virtual_logit: f64) -> f64 {
    let mut all = logits.to_vec();
    all.push(virtual_logit);
    -softmax(&all)[logits.len()]
}

/// Min-max scaling into `[0, 1]`; constant input maps to 0.5.
pub fn normalize_scores(scores: &[f64]) -> Vec<f64> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.5; scores.len()];
    }
    scores.iter().map(|s| (s - lo) / (hi - lo)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scorer {
    Mahalanobis,
    Energy,
    Msp,
    MaxLogit,
    Residual,
    Vim,
}

impl Scorer {
    pub const ALL: [Scorer; 6] = [
        Scorer::Mahalanobis,
        Scorer::Energy,
        Scorer::Msp,
        Scorer::MaxLogit,
        Scorer::Residual,
        Scorer::Vim,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scorer::Mahalanobis => "mahalanobis",
            Scorer::Energy => "energy",
            Scorer::Msp => "msp",
            Scorer::MaxLogit => "maxlogit",
            Scorer::Residual => "residual",
            Scorer::Vim => "vim",
        }
    }
}

impl fmt::Display for Scorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scorer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scorer::ALL
            .into_iter()
            .find(|v| v.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::param("scoring", "scorer", format!("unknown scorer '{s}'")))
    }
}

/// Every scorer fitted on one set of training features and logits.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedScorers {
    pub stats: ClassStats,
    pub residual: ResidualState,
    /// Fit failure is kept so the other scorers stay usable.
    pub vim: std::result::Result<VimState, String>,
}

impl FittedScorers {
    pub fn fit(features: &Tensor2, labels: &[usize], logits: &Tensor2, k: usize) -> Result<Self> {
        let stats = fit_class_stats(features, labels, k)?;
        let residual = fit_residual(features, k)?;
        let vim = fit_vim(features, logits, residual.clone()).map_err(|e| e.to_string());
        Ok(Self { stats, residual, vim })
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.residual.is_degenerate() {
            w.push("residual: number of classes is at least the feature width; residual is identically zero".into());
        }
        if let Err(e) = &self.vim {
            w.push(format!("vim: {e}"));
        }
        w
    }

    pub fn score(&self, scorer: Scorer, z: &[f64], logits: &[f64]) -> Result<f64> {
        Ok(match scorer {
            Scorer::Mahalanobis => score_mahalanobis(z, &self.stats),
            Scorer::Energy => score_energy(logits),
            Scorer::Msp => score_msp(logits),
            Scorer::MaxLogit => score_maxlogit(logits),
            Scorer::Residual => score_residual(z, &self.residual),
            Scorer::Vim => match &self.vim {
                Ok(v) => score_vim(z, logits, v),
                Err(e) => return Err(Error::Numerical(format!("vim scorer unavailable: {e}"))),
            },
        })
    }

    /// Scores every row of `features` / `logits`.
    pub fn score_all(&self, scorer: Scorer, features: &Tensor2, logits: &Tensor2) -> Result<Vec<f64>> {
        features
            .iter_rows()
            .zip(logits.iter_rows())
            .map(|(z, l)| self.score(scorer, z, l))
            .collect()
    }
}
