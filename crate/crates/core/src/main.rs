use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use tidyworld::agent::ActMode;
use tidyworld::embedding::EmbeddingStore;
use tidyworld::game::{load_games, Level, Split};
use tidyworld::harness::{
    evaluate_with, generate_games, load_vocab, oracle_baseline, plot_curves, random_baseline,
    read_metrics, train, EvalOptions, EvalReport, TrainConfig,
};
use tidyworld::knowledge::{load_kb, write_stats_csv, KbFormat};
use tidyworld::similarity::{compare_report, write_compare_csv, PairUnit, Thresholds};
use tidyworld::{Error, Result};

#[derive(Parser)]
#[command(
    name = "tidyworld",
    version,
    about = "Commonsense knowledge graphs and cleanup text games"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Knowledge base statistics and similarity to a reference.
    Analyze {
        #[command(subcommand)]
        command: Analyze,
    },
    /// Game generation.
    Games {
        #[command(subcommand)]
        command: Games,
    },
    /// Train agents from a JSON config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate checkpoints (or a baseline policy) on a directory of games.
    Eval {
        /// Repeat to aggregate several runs (mean ± std across runs).
        #[arg(long, required_unless_present = "baseline")]
        checkpoint: Vec<PathBuf>,
        #[arg(long, conflicts_with = "checkpoint")]
        baseline: Option<Baseline>,
        #[arg(long)]
        games: PathBuf,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        /// Seed of the random baseline or of sampled actions.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "greedy")]
        mode: Mode,
        /// Write one JSONL transcript per episode under this directory.
        #[arg(long)]
        transcripts: Option<PathBuf>,
        /// Include each step's commonsense subgraph in the transcripts.
        #[arg(long, requires = "transcripts")]
        dump_subgraphs: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Smoothed training curves as SVG.
    Plot {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum Analyze {
    Stats {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        format: Format,
        #[arg(long)]
        out: PathBuf,
        /// Also print the most frequent relations.
        #[arg(long, default_value_t = 15)]
        top: usize,
    },
    Compare {
        /// Repeat for several candidates; formats pair up by position.
        #[arg(long, required = true)]
        candidate: Vec<PathBuf>,
        #[arg(long = "candidate-format", required = true)]
        candidate_format: Vec<Format>,
        #[arg(long)]
        manual: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long = "entity-threshold", default_value_t = 0.7)]
        entity_threshold: f64,
        #[arg(long = "pair-threshold", default_value_t = 0.65)]
        pair_threshold: f64,
        #[arg(long = "pair-unit", default_value = "pair")]
        pair_unit: Unit,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum Games {
    Generate {
        #[arg(long)]
        level: LevelArg,
        #[arg(long)]
        split: SplitArg,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Entity vocabulary; the bundled one when omitted.
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long = "split-fraction", default_value_t = 0.8)]
        split_fraction: f64,
        #[arg(long = "split-seed", default_value_t = 0)]
        split_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Conceptnet,
    Vg,
    Jsonl,
}

impl From<Format> for KbFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Conceptnet => KbFormat::ConceptNet,
            Format::Vg => KbFormat::Vg,
            Format::Jsonl => KbFormat::Jsonl,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Unit {
    Pair,
    Triplet,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Random,
    Oracle,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Greedy,
    Sample,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Easy,
    Medium,
    Hard,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    In,
    Out,
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| Error::Data(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, text).map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))
}

fn finish_eval(report: EvalReport, out: &Path) -> Result<()> {
    let text = report.to_csv();
    write_file(out, &text)?;
    print!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze {
            command:
                Analyze::Stats {
                    kb,
                    format,
                    out,
                    top,
                },
        } => {
            let format = KbFormat::from(format);
            let base = load_kb(&kb, format)?;
            let stats = base.stats();
            let mut buf = Vec::new();
            write_stats_csv(&mut buf, format.default_tag().as_str(), &stats).expect("vec write");
            write_file(&out, &String::from_utf8(buf).expect("utf8"))?;
            println!(
                "{}: {} entities, {} relations, {} triplets",
                kb.display(),
                stats.n_entities,
                stats.n_relations,
                stats.n_triplets
            );
            if top > 0 && !base.is_empty() {
                for (rel, count) in base.relation_histogram(top)? {
                    println!("  {rel}\t{count}");
                }
            }
        }
        Command::Analyze {
            command:
                Analyze::Compare {
                    candidate,
                    candidate_format,
                    manual,
                    embeddings,
                    entity_threshold,
                    pair_threshold,
                    pair_unit,
                    out,
                },
        } => {
            if candidate.len() != candidate_format.len() {
                return Err(Error::Config(format!(
                    "{} candidates but {} candidate formats",
                    candidate.len(),
                    candidate_format.len()
                )));
            }
            let manual = load_kb(&manual, KbFormat::Jsonl)?;
            let store = EmbeddingStore::load(&embeddings, None)?;
            let kbs = candidate
                .iter()
                .zip(&candidate_format)
                .map(|(p, f)| load_kb(p, KbFormat::from(*f)))
                .collect::<Result<Vec<_>>>()?;
            let labels: Vec<String> = candidate
                .iter()
                .zip(&kbs)
                .map(|(p, kb)| {
                    let stem = p
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default();
                    format!("{}:{stem}", kb.source().as_str())
                })
                .collect();
            let pairs: Vec<(&str, _)> = labels.iter().map(String::as_str).zip(&kbs).collect();
            let unit = match pair_unit {
                Unit::Pair => PairUnit::Pair,
                Unit::Triplet => PairUnit::Triplet,
            };
            let thresholds = Thresholds {
                entity: entity_threshold,
                pair: pair_threshold,
            };
            let reports = compare_report(&pairs, &manual, &store, thresholds, unit)?;
            let mut buf = Vec::new();
            write_compare_csv(&mut buf, &reports).expect("vec write");
            let text = String::from_utf8(buf).expect("utf8");
            write_file(&out, &text)?;
            print!("{text}");
        }
        Command::Games {
            command:
                Games::Generate {
                    level,
                    split,
                    count,
                    seed,
                    vocab,
                    split_fraction,
                    split_seed,
                    out,
                },
        } => {
            let vocab = load_vocab(vocab.as_deref().and_then(Path::to_str))?;
            let level = match level {
                LevelArg::Easy => Level::Easy,
                LevelArg::Medium => Level::Medium,
                LevelArg::Hard => Level::Hard,
            };
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::In => Split::In,
                SplitArg::Out => Split::Out,
            };
            let paths = generate_games(
                &vocab,
                level,
                split,
                count,
                seed,
                split_fraction,
                split_seed,
                &out,
            )?;
            println!("wrote {} games under {}", paths.len(), out.display());
        }
        Command::Train { config } => {
            let cfg = TrainConfig::load(&config)?;
            let report = train(&cfg)?;
            println!(
                "wrote {} and {} checkpoints",
                report.metrics_path.display(),
                report.checkpoint_paths.len()
            );
        }
        Command::Eval {
            checkpoint,
            baseline,
            games,
            episodes,
            seed,
            mode,
            transcripts,
            dump_subgraphs,
            out,
        } => {
            if episodes == 0 {
                return Err(Error::Config("episodes must be at least 1".into()));
            }
            let report = match baseline {
                Some(kind) => {
                    let specs = load_games(&games)?;
                    if specs.is_empty() {
                        return Err(Error::Data(format!("no games under {}", games.display())));
                    }
                    match kind {
                        Baseline::Random => EvalReport::from_episodes(
                            "random",
                            random_baseline(&specs, episodes, seed)?,
                        ),
                        Baseline::Oracle => {
                            EvalReport::from_episodes("oracle", oracle_baseline(&specs)?)
                        }
                    }
                }
                None => {
                    let mode = match mode {
                        Mode::Greedy => ActMode::Greedy,
                        Mode::Sample => ActMode::Sample,
                    };
                    let mut runs = checkpoint
                        .iter()
                        .enumerate()
                        .map(|(i, c)| {
                            let options = EvalOptions {
                                mode,
                                seed,
                                // One transcript tree per checkpoint.
                                transcripts: transcripts.as_ref().map(|d| {
                                    if checkpoint.len() == 1 {
                                        d.clone()
                                    } else {
                                        d.join(format!("run{}", i + 1))
                                    }
                                }),
                                dump_subgraphs,
                            };
                            evaluate_with(c, &games, episodes, &options)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    if runs.len() == 1 {
                        runs.pop().expect("one run")
                    } else {
                        let method = runs[0]
                            .rows
                            .first()
                            .map(|r| r.method.clone())
                            .unwrap_or_default();
                        EvalReport::across_runs(&method, &runs)
                    }
                }
            };
            finish_eval(report, &out)?;
        }
        Command::Plot {
            metrics,
            alpha,
            out,
        } => {
            let rows = read_metrics(&metrics)?;
            for path in plot_curves(&rows, alpha, &out)? {
                info!("wrote {}", path.display());
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
