//! The five subcommands. Each returns its results and writes its artifacts
//! under the configured output directory.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use mintood::checkpoint::{load_checkpoint, save_checkpoint, HEADER_FILE};
use mintood::corpus::{load_corpus, save_corpus, synth_corpus, Corpus, MANIFEST_FILE};
use mintood::eval::{evaluate, Evaluation};
use mintood::metrics::{roc_auroc, EvalReport, IdMetrics, REPORT_COLUMNS};
use mintood::train::{train, EpochRecord, TrainConfig, TrainOutcome, Variant};
use mintood::RngState;
use serde::Serialize;

use crate::config::{RunConfig, ScorerSelection};
use crate::error::{CliError, Result};
use crate::table::{self, aggregate, ordering_checks, Aggregate, OrderingCheck, RunRow};

pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const TRAIN_LOG: &str = "train_log.jsonl";
pub const RESULTS_FILE: &str = "results.csv";
pub const RUNS_FILE: &str = "runs.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const ORDERING_FILE: &str = "ordering.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const SCORES_FILE: &str = "scores.jsonl";
pub const ROC_FILE: &str = "roc.csv";
pub const CONFIG_FILE: &str = "config.toml";

/// Loads the corpus at `path` (a manifest or the directory holding one), or
/// synthesizes it from the config when no path is given.
pub fn resolve_corpus(cfg: &RunConfig, path: Option<&Path>) -> Result<Corpus> {
    match path {
        Some(p) if p.is_dir() => Ok(load_corpus(&p.join(MANIFEST_FILE))?),
        Some(p) => Ok(load_corpus(p)?),
        None => {
            cfg.synth.validate()?;
            Ok(synth_corpus(&cfg.synth, &mut RngState::new(cfg.seed))?)
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable value");
    write_text(path, &(text + "\n"))
}

fn write_jsonl<T: Serialize>(path: &Path, header: Option<&serde_json::Value>, items: &[T]) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(f);
    let mut line = |s: String| writeln!(w, "{s}").map_err(|e| CliError::io(path, e));
    if let Some(h) = header {
        line(h.to_string())?;
    }
    for it in items {
        line(serde_json::to_string(it).expect("serializable item"))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Runs `f(0..n)` on a pool of scoped threads and returns the results in
/// index order; the first error by index wins.
fn run_jobs<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let workers = std::thread::available_parallelism().map_or(1, |p| p.get()).clamp(1, n.max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<T>>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = f(i);
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every job ran"))
        .collect()
}

// ---------------------------------------------------------------- synth

/// Synthesizes the configured corpus into `out`, reloads it to verify the
/// files, and returns the manifest path.
pub fn cmd_synth(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.synth.validate()?;
    let out = cfg.out_dir()?;
    let corpus = synth_corpus(&cfg.synth, &mut RngState::new(cfg.seed))?;
    let manifest = save_corpus(&corpus, out)?;
    let back = load_corpus(&manifest)?;
    if back != corpus {
        return Err(CliError::param("out", format!("{} did not reload identically", manifest.display())));
    }
    Ok(manifest)
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub dir: PathBuf,
    pub outcome: TrainOutcome,
    pub report: EvalReport,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub variant: String,
    pub runs: Vec<SeedRun>,
    pub rows: Vec<RunRow>,
    pub aggregates: Vec<Aggregate>,
}

/// The named variant whose ablation flags match `cfg`, if any.
pub fn variant_of(cfg: &TrainConfig) -> Option<Variant> {
    Variant::ALL.into_iter().find(|v| v.apply(cfg).ablation == cfg.ablation)
}

#[derive(Serialize)]
struct LogLine<'a> {
    kind: &'static str,
    #[serde(flatten)]
    record: &'a EpochRecord,
}

fn train_one(cfg: &RunConfig, corpus: &Corpus, seed: u64, dir: &Path, variant: &str) -> Result<SeedRun> {
    let tc = cfg.train_for(seed);
    let outcome = train(corpus, &tc, &cfg.oodgen)?;
    create_dir(dir)?;
    save_checkpoint(&outcome.trained, &tc, &dir.join(CHECKPOINT_DIR))?;
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let header = serde_json::json!({
        "kind": "header",
        "created_unix": created,
        "seed": seed,
        "variant": variant,
        "best_epoch": outcome.trained.best_epoch,
        "best_valid_wf1": outcome.trained.best_valid_wf1,
        "train": tc,
        "oodgen": cfg.oodgen,
    });
    let lines: Vec<LogLine> = outcome.log.iter().map(|record| LogLine { kind: "epoch", record }).collect();
    write_jsonl(&dir.join(TRAIN_LOG), Some(&header), &lines)?;

    let scorer = cfg.scorer.primary();
    let ev = evaluate(&outcome.trained, corpus, &[scorer])?;
    let report = ev.reports.into_iter().next().expect("one scorer requested");
    Ok(SeedRun {
        seed,
        dir: dir.to_path_buf(),
        outcome,
        report,
    })
}

/// Trains one model per configured seed. Each seed gets
/// `<out>/seed-<s>/{checkpoint/, train_log.jsonl}`; the test-split results
/// go to `results.csv` (one row per seed) and `summary.csv` (mean ± std).
pub fn cmd_train(cfg: &RunConfig, corpus: &Corpus) -> Result<TrainSummary> {
    cfg.validate()?;
    let out = cfg.out_dir()?;
    create_dir(out)?;
    write_text(&out.join(CONFIG_FILE), &cfg.to_toml())?;
    let variant = variant_of(&cfg.train);
    let (name, label) = variant.map_or(("custom", "Custom"), |v| (v.name(), v.label()));

    let runs = run_jobs(cfg.seeds.len(), |i| {
        let seed = cfg.seeds[i];
        train_one(cfg, corpus, seed, &out.join(format!("seed-{seed}")), name)
    })?;
    let rows: Vec<RunRow> = runs.iter().map(|r| RunRow::new(name, label, r.seed, &r.report)).collect();
    let aggregates = aggregate(&rows);
    table::write_runs(&out.join(RESULTS_FILE), &rows)?;
    table::write_summary(&out.join(SUMMARY_FILE), &aggregates)?;
    Ok(TrainSummary {
        variant: name.into(),
        runs,
        rows,
        aggregates,
    })
}

// ---------------------------------------------------------------- eval

/// Resolves a checkpoint given either its own directory or a seed directory
/// that contains one.
pub fn checkpoint_dir(path: &Path) -> PathBuf {
    if !path.join(HEADER_FILE).exists() && path.join(CHECKPOINT_DIR).join(HEADER_FILE).exists() {
        path.join(CHECKPOINT_DIR)
    } else {
        path.to_path_buf()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalDocument {
    pub classification: IdMetrics,
    pub reports: Vec<EvalReport>,
    /// Mean fusion weight per modality (text, video, audio) over the test
    /// split, when the fusion mode has weights.
    pub modality_weights_mean: Option<[f64; 3]>,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct RocRow<'a> {
    scorer: &'a str,
    threshold: f64,
    fpr: f64,
    tpr: f64,
}

/// Evaluates a checkpoint on the test split with the selected scorers.
///
/// Writes `report.json` (all metrics, per-class accuracy and confusion
/// matrix), `report.csv` (one row per scorer), `scores.jsonl` (one line per
/// test record and scorer) and `roc.csv` (curve points per scorer).
pub fn cmd_eval(checkpoint: &Path, corpus: &Corpus, selection: ScorerSelection, out: &Path) -> Result<Evaluation> {
    let ckpt = load_checkpoint(&checkpoint_dir(checkpoint))?;
    let ev = evaluate(&ckpt.trained, corpus, &selection.scorers())?;
    create_dir(out)?;

    let weights = ev.inference.weights.as_ref().map(|w| {
        let mut m = [0.0; 3];
        for row in w.iter_rows() {
            for (acc, v) in m.iter_mut().zip(row) {
                *acc += v;
            }
        }
        m.map(|s| s / w.rows() as f64)
    });
    let doc = EvalDocument {
        classification: ev.id.clone(),
        reports: ev.reports.clone(),
        modality_weights_mean: weights,
        warnings: ev.warnings.clone(),
    };
    write_json(&out.join(REPORT_JSON), &doc)?;

    let path = out.join(REPORT_CSV);
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    let header: Vec<&str> = std::iter::once("scorer").chain(REPORT_COLUMNS).collect();
    w.write_record(&header).map_err(|e| csv_err(&path, e))?;
    for r in &ev.reports {
        let rec: Vec<String> = std::iter::once(r.scorer.clone())
            .chain(r.csv_row().iter().map(|v| v.to_string()))
            .collect();
        w.write_record(&rec).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;

    write_jsonl(&out.join(SCORES_FILE), None, &ev.scores)?;

    let path = out.join(ROC_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    for r in &ev.reports {
        let (scores, flags): (Vec<f64>, Vec<bool>) = ev
            .scores
            .iter()
            .filter(|s| s.scorer.name() == r.scorer)
            .map(|s| (s.score, s.is_id))
            .unzip();
        let curve = roc_auroc(&scores, &flags)?;
        for p in &curve.points {
            w.serialize(RocRow {
                scorer: &r.scorer,
                threshold: p.threshold,
                fpr: p.fpr,
                tpr: p.tpr,
            })
            .map_err(|e| csv_err(&path, e))?;
        }
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    Ok(ev)
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Table {
        path: path.into(),
        reason: e.to_string(),
    }
}

// ---------------------------------------------------------------- ablate

#[derive(Debug, Clone, Serialize)]
pub struct AblationOutcome {
    pub rows: Vec<RunRow>,
    pub aggregates: Vec<Aggregate>,
    pub checks: Vec<OrderingCheck>,
}

/// Trains every variant for every seed and compares them on the test split
/// with the primary scorer. Writes `runs.csv`, `summary.csv`,
/// `ordering.json` and `table.md`; failed orderings are reported, not
/// treated as errors.
pub fn cmd_ablate(cfg: &RunConfig, corpus: &Corpus) -> Result<AblationOutcome> {
    cfg.validate()?;
    let out = cfg.out_dir()?;
    create_dir(out)?;
    write_text(&out.join(CONFIG_FILE), &cfg.to_toml())?;
    let scorer = cfg.scorer.primary();
    let jobs: Vec<(Variant, u64)> = Variant::ALL
        .into_iter()
        .flat_map(|v| cfg.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let rows = run_jobs(jobs.len(), |i| {
        let (v, seed) = jobs[i];
        let tc = v.apply(&cfg.train_for(seed));
        let outcome = train(corpus, &tc, &cfg.oodgen)?;
        let ev = evaluate(&outcome.trained, corpus, &[scorer])?;
        Ok(RunRow::new(v.name(), v.label(), seed, &ev.reports[0]))
    })?;
    finish_comparison(rows, out, RUNS_FILE)
}

fn finish_comparison(rows: Vec<RunRow>, out: &Path, runs_file: &str) -> Result<AblationOutcome> {
    let aggregates = aggregate(&rows);
    let checks = ordering_checks(&aggregates);
    table::write_runs(&out.join(runs_file), &rows)?;
    table::write_summary(&out.join(SUMMARY_FILE), &aggregates)?;
    write_json(&out.join(ORDERING_FILE), &checks)?;
    write_text(&out.join("table.md"), &table::render(&aggregates))?;
    Ok(AblationOutcome {
        rows,
        aggregates,
        checks,
    })
}

// ---------------------------------------------------------------- report

/// Re-aggregates a `runs.csv` or `results.csv` file into `out`.
pub fn cmd_report(input: &Path, out: &Path) -> Result<AblationOutcome> {
    let rows = table::read_runs(input)?;
    if rows.is_empty() {
        return Err(CliError::param("input", format!("{} has no rows", input.display())));
    }
    create_dir(out)?;
    let aggregates = aggregate(&rows);
    let checks = ordering_checks(&aggregates);
    table::write_summary(&out.join(SUMMARY_FILE), &aggregates)?;
    write_json(&out.join(ORDERING_FILE), &checks)?;
    write_text(&out.join("table.md"), &table::render(&aggregates))?;
    Ok(AblationOutcome {
        rows,
        aggregates,
        checks,
    })
}
