use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mintood::train::Variant;
use mintood_cli::commands::{cmd_ablate, cmd_eval, cmd_report, cmd_synth, cmd_train, resolve_corpus};
use mintood_cli::table::render;
use mintood_cli::{CliError, Overrides, RunConfig, ScorerSelection};

#[derive(Parser)]
#[command(name = "mintood", version, about = "Multimodal intent classification with OOD detection")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Corpus seed for `synth`; single training seed for `train` and `ablate`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Scorer name or `all`.
    #[arg(long, global = true)]
    scorer: Option<String>,
    /// Variant applied on top of the configuration
    /// (full, add, concat, no_contrast, no_cosine, no_binary).
    #[arg(long, global = true)]
    ablation: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus.
    Synth,
    /// Train one model per seed and evaluate it.
    Train {
        /// Corpus manifest or directory; synthesized from the config if omitted.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Evaluate a checkpoint with one or all scorers.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Train and compare every ablation variant.
    Ablate {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Aggregate a runs.csv or results.csv table.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

fn overrides(g: &Global) -> Result<Overrides, CliError> {
    Ok(Overrides {
        seed: g.seed,
        out: g.out.clone(),
        scorer: g.scorer.as_deref().map(str::parse).transpose()?,
        ablation: g.ablation.as_deref().map(str::parse::<Variant>).transpose()?,
    })
}

fn load(g: &Global, corpus_seed: bool) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load_or_default(g.config.as_deref())?;
    cfg.apply(&overrides(g)?, corpus_seed);
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::Synth => {
            let cfg = load(g, true)?;
            let manifest = cmd_synth(&cfg)?;
            println!("wrote {}", manifest.display());
        }
        Command::Train { corpus } => {
            let cfg = load(g, false)?;
            let corpus = resolve_corpus(&cfg, corpus.as_deref())?;
            let summary = cmd_train(&cfg, &corpus)?;
            for r in &summary.runs {
                println!(
                    "seed {}: best epoch {:?}, {} acc {:.4} auroc {:.4} -> {}",
                    r.seed,
                    r.outcome.trained.best_epoch,
                    r.report.scorer,
                    r.report.acc,
                    r.report.auroc,
                    r.dir.display()
                );
            }
            print!("{}", render(&summary.aggregates));
        }
        Command::Eval { checkpoint, corpus } => {
            let cfg = load(g, false)?;
            let selection = g.scorer.as_deref().map_or(Ok(ScorerSelection::All), str::parse)?;
            let out = cfg.out_dir()?;
            let corpus = resolve_corpus(&cfg, corpus.as_deref())?;
            let ev = cmd_eval(checkpoint, &corpus, selection, out)?;
            println!("{:<12} {:>7} {:>7} {:>7} {:>7} {:>7}", "scorer", "acc", "wf1", "fpr95", "aupr_in", "auroc");
            for r in &ev.reports {
                println!(
                    "{:<12} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4}",
                    r.scorer, r.acc, r.wf1, r.fpr95, r.aupr_in, r.auroc
                );
            }
            for w in &ev.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::Ablate { corpus } => {
            let cfg = load(g, false)?;
            let corpus = resolve_corpus(&cfg, corpus.as_deref())?;
            let outcome = cmd_ablate(&cfg, &corpus)?;
            print!("{}", render(&outcome.aggregates));
            print_checks(&outcome.checks);
        }
        Command::Report { input } => {
            let out = g.out.clone().unwrap_or_else(|| input.parent().unwrap_or(Path::new(".")).to_path_buf());
            let outcome = cmd_report(input, &out)?;
            print!("{}", render(&outcome.aggregates));
            print_checks(&outcome.checks);
        }
    }
    Ok(())
}

fn print_checks(checks: &[mintood_cli::OrderingCheck]) {
    for c in checks {
        let tag = if c.holds { "holds" } else { "VIOLATED" };
        println!("{}: {:.4} vs {:.4} ({tag})", c.name, c.lhs_mean, c.rhs_mean);
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
