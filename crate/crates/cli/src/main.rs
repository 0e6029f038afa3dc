use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use csrnnt_cli::commands::{
    self, CorpusKind, DecodeRequest, LmKind, RescoreRequest, TrainRequest, BEST_CHECKPOINT, NBEST_FILE, VOCAB_FILE,
};
use csrnnt_cli::config::RunConfig;
use csrnnt_cli::selftest::run_selftest;
use csrnnt_cli::{CliError, Result};

#[derive(Parser)]
#[command(
    name = "csrnnt",
    version,
    about = "Code-switching transducer: synthesize, train, decode, rescore, score"
)]
struct Cli {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Preset to start from (desk or seame-paper).
    #[arg(long, global = true)]
    preset: Option<String>,
    /// TOML file overlaid on the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one field, e.g. `--set decode.lambda_mode=fixed`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus and features.
    Synth {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the speed-perturbed training split.
        #[arg(long)]
        speed_perturb: bool,
    },
    /// Insert language-ID tags into a word-level corpus.
    Tag {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Learn English BPE merges and build the output vocabulary.
    BpeTrain {
        /// Tagged corpus; defaults to the training split of the data directory.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a transducer.
    Train {
        #[arg(long, default_value = "tagged")]
        corpus: CorpusKind,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Directory holding bpe.txt and vocab.txt; defaults to the data directory.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long, default_value = "dev")]
        valid_split: String,
        /// Run directory; defaults to `<runs>/<corpus>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from the run directory's last checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Beam-search decode a split with a trained model.
    Decode {
        /// Run directory written by `train`.
        #[arg(long)]
        run: PathBuf,
        /// Checkpoint file; defaults to the run's best checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a word-level language model.
    LmTrain {
        #[arg(long, default_value = "ngram")]
        kind: LmKind,
        /// Word corpus; defaults to the tagged training split.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-rank an N-best list with a language model.
    Rescore {
        /// N-best file, or a decode output directory.
        #[arg(long)]
        nbest: PathBuf,
        #[arg(long)]
        lm: PathBuf,
        /// Require every utterance of this manifest to be present.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mixed error rate of hypotheses against references.
    Score {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
        /// Also report language-ID accuracy (both files must be tagged).
        #[arg(long)]
        lid: bool,
    },
    /// Run the built-in oracle checks.
    Selftest {
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

/// Prints a line to stdout; a closed pipe ends the program quietly.
macro_rules! out {
    ($($arg:tt)*) => {{
        let mut stdout = io::stdout().lock();
        if let Err(e) = writeln!(stdout, $($arg)*).and_then(|_| stdout.flush()) {
            if e.kind() == io::ErrorKind::BrokenPipe {
                std::process::exit(0);
            }
        }
    }};
}

fn or_default(path: Option<PathBuf>, default: &Path) -> PathBuf {
    path.unwrap_or_else(|| default.to_path_buf())
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.config;
    let cfg = RunConfig::resolve(c.preset.as_deref(), c.config.as_deref(), &c.overrides)?;
    let data_default = cfg.paths.data.clone();
    match cli.command {
        Command::Synth { out, speed_perturb } => {
            let out = or_default(out, &data_default);
            let summary = commands::cmd_synth(&cfg, &out, speed_perturb)?;
            for (split, n) in summary.splits {
                out!("{split}\t{n} utterances");
            }
            out!("wrote {}", out.display());
        }
        Command::Tag { input, output } => {
            let n = commands::cmd_tag(&input, &output)?;
            out!("tagged {n} utterances into {}", output.display());
        }
        Command::BpeTrain { corpus, out } => {
            let corpus = corpus.unwrap_or_else(|| commands::transcript_path(&data_default, "train", true));
            let out = or_default(out, &data_default);
            let lex = commands::cmd_bpe_train(&cfg, &corpus, &out)?;
            out!(
                "{} merges, {} symbols, vocabulary hash {}",
                lex.bpe.merges().len(),
                lex.vocab.len(),
                lex.vocab.hash()
            );
        }
        Command::Train {
            corpus,
            data,
            lexicon,
            split,
            valid_split,
            out,
            resume,
        } => {
            let data = or_default(data, &data_default);
            let lexicon = or_default(lexicon, &data);
            let name = match corpus {
                CorpusKind::Tagged => "tagged",
                CorpusKind::Untagged => "untagged",
            };
            let out = out.unwrap_or_else(|| cfg.paths.runs.join(name));
            let req = TrainRequest {
                data: &data,
                lexicon: &lexicon,
                corpus,
                train_split: &split,
                valid_split: &valid_split,
                out: &out,
                resume,
            };
            commands::cmd_train(&cfg, &req, &mut |s| {
                eprintln!(
                    "epoch {}\ttrain {:.4}\tvalid {:.4}\tlr {}{}",
                    s.epoch,
                    s.train_loss,
                    s.valid_loss,
                    s.learning_rate,
                    if s.improved { "\t*" } else { "" }
                );
            })?;
            out!("wrote {}", out.display());
        }
        Command::Decode {
            run,
            checkpoint,
            data,
            split,
            out,
        } => {
            let data = or_default(data, &data_default);
            let checkpoint = checkpoint.unwrap_or_else(|| run.join(BEST_CHECKPOINT));
            let run_name = run
                .file_name()
                .map_or("run".into(), |n| n.to_string_lossy().into_owned());
            let out = out.unwrap_or_else(|| cfg.paths.outputs.join(format!("{run_name}-{split}")));
            let req = DecodeRequest {
                checkpoint: &checkpoint,
                vocab: &run.join(VOCAB_FILE),
                data: &data,
                split: &split,
                out: &out,
            };
            let nbest = commands::cmd_decode(&cfg, &req)?;
            out!("decoded {} utterances into {}", nbest.utterances.len(), out.display());
        }
        Command::LmTrain { kind, corpus, out } => {
            let corpus = corpus.unwrap_or_else(|| commands::transcript_path(&data_default, "train", true));
            let out = out.unwrap_or_else(|| cfg.paths.outputs.join("lm"));
            let path = commands::cmd_lm_train(&cfg, &corpus, kind, &out)?;
            out!("wrote {}", path.display());
        }
        Command::Rescore {
            nbest,
            lm,
            manifest,
            out,
        } => {
            let nbest = if nbest.is_dir() { nbest.join(NBEST_FILE) } else { nbest };
            let req = RescoreRequest {
                nbest: &nbest,
                lm: &lm,
                manifest: manifest.as_deref(),
                out: &out,
            };
            let best = commands::cmd_rescore(&cfg, &req)?;
            out!("rescored {} utterances into {}", best.len(), out.display());
        }
        Command::Score { reference, hyp, lid } => {
            out!("{}", commands::cmd_score(&reference, &hyp, lid)?.to_string().trim_end());
        }
        Command::Selftest { seed } => {
            let results = run_selftest(seed)?;
            let mut failed = Vec::new();
            for r in &results {
                out!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
                if !r.passed {
                    failed.push(r.name);
                }
            }
            if !failed.is_empty() {
                return Err(CliError::SelfTest(failed.join("; ")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
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
