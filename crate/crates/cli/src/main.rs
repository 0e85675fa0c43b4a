use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use semcom::harness::config::{ExperimentConfig, Overrides};
use semcom::harness::corpus::{load_corpus, DEFAULT_MAX_CHARS, DEFAULT_MIN_CHARS};
use semcom::harness::run::{run_experiment, write_results, ResultSet};
use semcom::harness::synth::synth_corpus;
use semcom::prior::{train_ngram, DEFAULT_DISCOUNT};
use semcom::tokenizer::{encode, train_vocabulary, Vocabulary};
use semcom::{ChannelKind, Error, Modulation, PriorKind};

const EXIT_PARTIAL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "semcom", version, about = "Token-level semantic communication experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a byte-level BPE vocabulary on a line-per-sentence corpus.
    TrainVocab {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 4096)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        bounds: Bounds,
    },
    /// Train an n-gram prior over a vocabulary.
    TrainNgram {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, default_value_t = 3)]
        order: usize,
        #[arg(long, default_value_t = DEFAULT_DISCOUNT)]
        discount: f64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        bounds: Bounds,
    },
    /// Run an SNR x beam-width sweep.
    Run(RunArgs),
    /// Print a finished result set and re-emit its plot data.
    Report {
        /// Output directory of a previous run.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic parliamentary-style corpus.
    SynthCorpus {
        #[arg(long, default_value_t = 60_000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Bounds {
    #[arg(long, default_value_t = DEFAULT_MIN_CHARS)]
    min_chars: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_CHARS)]
    max_chars: usize,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated SNR grid in dB.
    #[arg(long, value_delimiter = ',')]
    snr: Option<Vec<f64>>,
    /// Comma-separated beam widths.
    #[arg(long, value_delimiter = ',')]
    beam: Option<Vec<usize>>,
    #[arg(long)]
    prior: Option<PriorKind>,
    #[arg(long)]
    constellation: Option<Modulation>,
    #[arg(long)]
    channel: Option<ChannelKind>,
    #[arg(long)]
    sentences: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    min_chars: Option<usize>,
    #[arg(long)]
    max_chars: Option<usize>,
    /// Bridge endpoint (host:port); overrides SEMCOM_BRIDGE.
    #[arg(long)]
    bridge: Option<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn execute(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::TrainVocab { corpus, size, out, bounds } => {
            let sentences = load_corpus(&corpus, bounds.min_chars, bounds.max_chars)?;
            let vocab = train_vocabulary(&sentences, size)?;
            vocab.save(&out)?;
            info!("{} entries ({} bits) -> {}", vocab.len(), vocab.bits_per_token(), out.display());
        }
        Command::TrainNgram { corpus, vocab, order, discount, out, bounds } => {
            let vocab = Vocabulary::load(&vocab)?;
            let sentences = load_corpus(&corpus, bounds.min_chars, bounds.max_chars)?;
            let encoded = sentences.iter().map(|s| encode(s.as_bytes(), &vocab)).collect::<Result<Vec<_>, _>>()?;
            let model = train_ngram(&encoded, order, discount, vocab.len())?;
            model.save(&out)?;
            info!("order-{order} model over {} sentences -> {}", encoded.len(), out.display());
        }
        Command::Run(args) => return run(args),
        Command::Report { out } => {
            let results = ResultSet::load(&out)?;
            write_results(&results, &out)?;
            print_table(&results);
            if results.failed() > 0 {
                return Ok(ExitCode::from(EXIT_PARTIAL));
            }
        }
        Command::SynthCorpus { count, seed, out } => {
            let mut text = synth_corpus(count, seed).join("\n");
            text.push('\n');
            std::fs::write(&out, text)?;
            info!("{count} sentences -> {}", out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run(args: RunArgs) -> Result<ExitCode, Error> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    Overrides {
        snr_grid: args.snr,
        beam_grid: args.beam,
        prior: args.prior,
        constellation: args.constellation,
        channel: args.channel,
        sentences: args.sentences,
        seed: args.seed,
        output_dir: args.out,
    }
    .apply(&mut cfg);
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(v) = args.min_chars {
        cfg.min_chars = v;
    }
    if let Some(v) = args.max_chars {
        cfg.max_chars = v;
    }
    if args.bridge.is_some() {
        cfg.prior.endpoint = args.bridge;
    }
    let summary = run_experiment(&cfg)?;
    info!(
        "{} cells ({} computed, {} reused) -> {}",
        summary.results.cells.len(),
        summary.computed,
        summary.reused,
        cfg.output_dir.display()
    );
    print_table(&summary.results);
    Ok(if summary.results.failed() > 0 { ExitCode::from(EXIT_PARTIAL) } else { ExitCode::SUCCESS })
}

fn print_table(results: &ResultSet) {
    println!(
        "{:<10} {:<10} {:<9} {:<6} {:>4} {:>7} {:>10} {:>10} {:>8} {:>8}",
        "receiver", "prior", "channel", "mod", "K", "snr_db", "ber", "ter", "bleu1", "bleu4"
    );
    for cell in &results.cells {
        let k = &cell.key;
        let head = format!(
            "{:<10} {:<10} {:<9} {:<6} {:>4} {:>7}",
            k.receiver.as_str(),
            k.prior,
            k.channel,
            k.constellation,
            k.beam_width,
            k.snr_db
        );
        match (&cell.report, &cell.error) {
            (Some(r), _) => println!(
                "{head} {:>10.3e} {:>10.3e} {:>8.4} {:>8.4}",
                r.ber,
                r.ter,
                r.bleu.get(&1).copied().unwrap_or(0.0),
                r.bleu.get(&4).copied().unwrap_or(0.0)
            ),
            (None, e) => println!("{head} FAILED: {}", e.as_deref().unwrap_or("unknown")),
        }
    }
}
