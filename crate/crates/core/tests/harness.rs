mod common;

use std::fs;

use semcom::harness::config::{ExperimentConfig, Receiver};
use semcom::harness::plot::{emit_plot_data, validate_plot_csv, PLOT_CSV};
use semcom::harness::run::{run_experiment, Assets, RESULTS_FILE};
use semcom::tokenizer::{encode, train_vocabulary};
use semcom::{ChannelKind, PriorKind};

fn setup(sentences: usize) -> (tempfile::TempDir, ExperimentConfig) {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::write_corpus(dir.path(), 400, 21);
    let mut cfg = common::base_config(dir.path(), corpus);
    cfg.sentences = sentences;
    (dir, cfg)
}

#[test]
fn zero_noise_is_exact_for_every_prior() {
    for prior in [PriorKind::Uniform, PriorKind::Ngram] {
        let (_dir, mut cfg) = setup(1);
        cfg.prior.kind = prior;
        cfg.channel.noiseless = true;
        let summary = run_experiment(&cfg).unwrap();
        let r = summary.results.cells[0].report.as_ref().unwrap();
        assert_eq!((r.ber, r.ter), (0.0, 0.0));
        assert!(r.bleu.values().all(|&b| b == 1.0));
    }
}

#[test]
fn uniform_map_cells_equal_hard_token_cells() {
    let (_dir, mut cfg) = setup(8);
    cfg.prior.kind = PriorKind::Uniform;
    cfg.snr_grid = vec![2.0, 6.0];
    cfg.beam_grid = vec![3];
    let map = run_experiment(&cfg).unwrap().results;
    cfg.receiver = Receiver::HardToken;
    cfg.output_dir = cfg.output_dir.with_file_name("hard");
    let hard = run_experiment(&cfg).unwrap().results;
    for (m, h) in map.cells.iter().zip(&hard.cells) {
        assert_eq!(m.key.snr_db, h.key.snr_db);
        assert_eq!(m.received, h.received);
        assert_eq!(m.report, h.report);
    }
}

#[test]
fn runs_are_deterministic_and_resumable() {
    let (dir, mut cfg) = setup(4);
    cfg.snr_grid = vec![0.0, 5.0];
    cfg.beam_grid = vec![1, 3];
    cfg.workers = 2;
    let first = run_experiment(&cfg).unwrap();
    assert_eq!((first.computed, first.reused), (4, 0));
    let bytes = fs::read(cfg.output_dir.join(RESULTS_FILE)).unwrap();

    // Simulate an interruption: drop the summary and one finished cell.
    fs::remove_file(cfg.output_dir.join(RESULTS_FILE)).unwrap();
    let cell = fs::read_dir(cfg.output_dir.join("cells")).unwrap().next().unwrap().unwrap().path();
    fs::remove_file(cell).unwrap();
    let resumed = run_experiment(&cfg).unwrap();
    assert_eq!((resumed.computed, resumed.reused), (1, 3));
    assert_eq!(fs::read(cfg.output_dir.join(RESULTS_FILE)).unwrap(), bytes);

    // A fresh directory with one worker gives the same bytes.
    cfg.output_dir = dir.path().join("again");
    cfg.workers = 1;
    run_experiment(&cfg).unwrap();
    assert_eq!(fs::read(cfg.output_dir.join(RESULTS_FILE)).unwrap(), bytes);
}

#[test]
fn sentence_token_counts_are_recorded() {
    let (_dir, cfg) = setup(3);
    let assets = Assets::prepare(&cfg).unwrap();
    let vocab = assets.vocab.as_deref().unwrap();
    let want: Vec<usize> = assets.test_sentences.iter().map(|s| encode(s.as_bytes(), vocab).unwrap().len()).collect();
    let results = run_experiment(&cfg).unwrap().results;
    assert_eq!(results.cells[0].sentence_tokens, want);
}

#[test]
fn plot_data_is_tidy_stable_and_valid() {
    let (_dir, mut cfg) = setup(2);
    cfg.snr_grid = vec![3.0, 9.0];
    cfg.beam_grid = vec![1, 2];
    let results = run_experiment(&cfg).unwrap().results;
    let text = fs::read_to_string(cfg.output_dir.join(PLOT_CSV)).unwrap();
    let rows = validate_plot_csv(&text).unwrap();
    assert_eq!(rows, 4 * 8);
    assert_eq!(text.lines().filter(|l| l.contains(",ber,")).count(), 4);
    emit_plot_data(&results, &cfg.output_dir).unwrap();
    assert_eq!(fs::read_to_string(cfg.output_dir.join(PLOT_CSV)).unwrap(), text);
    assert!(validate_plot_csv("prior,channel\nx,y\n").is_err());
    let broken = text.replacen(",ber,", ",nonsense,", 1);
    assert!(validate_plot_csv(&broken).is_err());
}

#[test]
fn utf8_receiver_runs_without_a_vocabulary() {
    let (_dir, mut cfg) = setup(3);
    cfg.receiver = Receiver::Utf8Hard;
    cfg.channel.kind = ChannelKind::Rayleigh;
    cfg.snr_grid = vec![30.0];
    let results = run_experiment(&cfg).unwrap().results;
    let cell = &results.cells[0];
    assert_eq!(cell.key.bits_per_token, 8);
    assert!(cell.report.as_ref().unwrap().ber < 0.01);
}

#[test]
fn lost_bridge_marks_cells_failed_and_the_run_continues() {
    let (dir, mut cfg) = setup(1);
    let sentences = semcom::harness::corpus::load_corpus(&cfg.corpus, cfg.min_chars, cfg.max_chars).unwrap();
    let vocab = train_vocabulary(&sentences, 512).unwrap();
    let vocab_path = dir.path().join("vocab.json");
    vocab.save(&vocab_path).unwrap();
    let assets = Assets::prepare(&cfg).unwrap();
    let t = encode(assets.test_sentences[0].as_bytes(), &vocab).unwrap().len();

    // The probe plus exactly one greedy cell's worth of queries.
    let addr = common::mock_service(vocab.len(), 1 + t);
    cfg.vocab.path = Some(vocab_path);
    cfg.prior.kind = PriorKind::Bridge;
    cfg.prior.endpoint = Some(addr);
    cfg.snr_grid = vec![4.0, 8.0];
    cfg.beam_grid = vec![1];
    let results = run_experiment(&cfg).unwrap().results;
    assert_eq!(results.cells.len(), 2);
    assert_eq!(results.failed(), 1);
    assert_eq!(results.cells[0].key.prior, "bridge:mock");
    assert!(results.cells.iter().any(|c| c.error.as_deref().is_some_and(|e| e.contains("unavailable"))));
}

#[test]
fn missing_bridge_is_a_startup_error() {
    let (dir, mut cfg) = setup(1);
    let sentences = semcom::harness::corpus::load_corpus(&cfg.corpus, cfg.min_chars, cfg.max_chars).unwrap();
    let path = dir.path().join("vocab.json");
    train_vocabulary(&sentences, 256).unwrap().save(&path).unwrap();
    cfg.vocab.path = Some(path);
    cfg.prior.kind = PriorKind::Bridge;
    cfg.prior.endpoint = Some("127.0.0.1:1".into());
    assert!(matches!(run_experiment(&cfg), Err(semcom::Error::PriorUnavailable(_))));
}

#[test]
fn fading_block_is_reported() {
    let (dir, mut cfg) = setup(2);
    cfg.channel.kind = ChannelKind::Rayleigh;
    let per_token = run_experiment(&cfg).unwrap().results;
    assert_eq!(per_token.cells[0].key.fading_block, Some(4));
    cfg.channel.block_fading_len = Some(1);
    cfg.output_dir = dir.path().join("per-symbol");
    let per_symbol = run_experiment(&cfg).unwrap().results;
    assert_eq!(per_symbol.cells[0].key.fading_block, Some(1));
    assert_ne!(per_token.cells[0].received, per_symbol.cells[0].received);
    let csv = fs::read_to_string(cfg.output_dir.join("cells.csv")).unwrap();
    assert!(csv.lines().next().unwrap().contains("fading_block"));
}
