//! Test-split evaluation: ID classification on the ID records and OOD
//! detection over the whole test split for each requested scorer.

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Sequences, Split};
use crate::error::{Error, Result};
use crate::metrics::{id_metrics, ood_metrics, EvalReport, IdMetrics};
use crate::model::Inference;
use crate::numerics::argmax;
use crate::scoring::{normalize_scores, Scorer};
use crate::train::TrainedModel;

/// One line of the score dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    pub scorer: Scorer,
    pub is_id: bool,
    /// Ground-truth class for ID records.
    pub label: Option<usize>,
    pub score: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub id: IdMetrics,
    pub reports: Vec<EvalReport>,
    pub scores: Vec<ScoreRecord>,
    /// Modality weights of the test records, when the fusion mode has them.
    pub inference: Inference,
    pub warnings: Vec<String>,
}

impl Evaluation {
    pub fn report(&self, scorer: Scorer) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.scorer == scorer.name())
    }
}

pub fn evaluate(trained: &TrainedModel, corpus: &Corpus, scorers: &[Scorer]) -> Result<Evaluation> {
    let test = corpus.split(Split::Test);
    if test.is_empty() {
        return Err(Error::InsufficientData {
            module: "metrics",
            reason: "test split is empty".into(),
        });
    }
    let refs: Vec<&Sequences> = test.iter().map(|r| &r.seqs).collect();
    let inference = trained.model.infer(&refs)?;
    let flags: Vec<bool> = test.iter().map(|r| r.label.is_id()).collect();

    let (mut preds, mut golds) = (Vec::new(), Vec::new());
    for (i, r) in test.iter().enumerate() {
        if let Some(c) = r.label.class() {
            preds.push(argmax(inference.logits.row(i)));
            golds.push(c);
        }
    }
    let id = id_metrics(&preds, &golds, trained.model.config.k)?;

    let mut warnings = trained.scorers.warnings();
    let mut reports = Vec::with_capacity(scorers.len());
    let mut dump = Vec::new();
    for &s in scorers {
        let raw = match trained.scorers.score_all(s, &inference.features, &inference.logits) {
            Ok(v) => v,
            Err(e) if scorers.len() > 1 => {
                warnings.push(format!("{s}: skipped: {e}"));
                continue;
            }
            Err(e) => return Err(e),
        };
        let ood = ood_metrics(&raw, &flags)?;
        let report = EvalReport::new(s.name(), &id, &ood);
        warnings.extend(report.warnings.iter().map(|w| format!("{s}: {w}")));
        reports.push(report);
        let norm = normalize_scores(&raw);
        for (i, r) in test.iter().enumerate() {
            dump.push(ScoreRecord {
                id: r.id.clone(),
                scorer: s,
                is_id: flags[i],
                label: r.label.class(),
                score: raw[i],
                normalized: norm[i],
            });
        }
    }
    warnings.dedup();
    Ok(Evaluation {
        id,
        reports,
        scores: dump,
        inference,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synth_corpus, SynthConfig};
    use crate::numerics::RngState;
    use crate::oodgen::OodGenConfig;
    use crate::train::{train, TrainConfig};

    #[test]
    fn all_scorers_in_one_pass() {
        let corpus = synth_corpus(&SynthConfig::small(3), &mut RngState::new(3)).unwrap();
        let cfg = TrainConfig {
            batch_size: 8,
            epochs: 3,
            heads: 2,
            fusion_hidden: 6,
            ..TrainConfig::default()
        };
        let out = train(&corpus, &cfg, &OodGenConfig::default()).unwrap();
        let ev = evaluate(&out.trained, &corpus, &Scorer::ALL).unwrap();
        assert_eq!(ev.reports.len(), 6);
        let n_test = corpus.split(Split::Test).len();
        assert_eq!(ev.scores.len(), 6 * n_test);
        for r in &ev.reports {
            assert_eq!(r.per_class_accuracy.len(), 3);
            for v in r.csv_row() {
                assert!((0.0..=1.0).contains(&v), "{}: {v}", r.scorer);
            }
        }
        // Few ID test records: the FPR95 resolution warning is raised.
        assert!(ev.warnings.iter().any(|w| w.contains("FPR95")));
        let again = evaluate(&out.trained, &corpus, &Scorer::ALL).unwrap();
        assert_eq!(ev.reports, again.reports);
        assert_eq!(ev.scores, again.scores);
    }
}
