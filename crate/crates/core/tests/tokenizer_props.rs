use proptest::prelude::*;

use semcom::harness::synth::synth_corpus;
use semcom::tokenizer::{bits_to_tokens, decode, encode, tokens_to_bits, train_vocabulary, TokenSequence};

proptest! {
    #[test]
    fn packing_round_trips(width in 1u32..=20, raw in proptest::collection::vec(any::<u32>(), 0..40)) {
        let ids: Vec<u32> = raw.iter().map(|x| x & ((1u32 << width) - 1)).collect();
        let seq = TokenSequence::new(ids.clone());
        let frame = tokens_to_bits(&seq, width).unwrap();
        prop_assert_eq!(frame.len(), ids.len() * width as usize);
        prop_assert_eq!(bits_to_tokens(&frame).unwrap().into_ids(), ids);
    }

    #[test]
    fn encode_decode_is_identity(text in "[a-e ]{1,60}") {
        let vocab = train_vocabulary(["abcde edcba aabbccddee", "bad cab dab ace"], 40).unwrap();
        let tokens = encode(text.as_bytes(), &vocab).unwrap();
        prop_assert_eq!(decode(&tokens, &vocab).unwrap(), text.as_bytes());
    }

    #[test]
    fn oversized_ids_are_rejected(width in 1u32..=20) {
        let seq = TokenSequence::new(vec![1u32 << width]);
        prop_assert!(tokens_to_bits(&seq, width).is_err());
    }
}

#[test]
fn training_is_deterministic() {
    let corpus = synth_corpus(300, 4);
    let a = train_vocabulary(&corpus, 600).unwrap();
    let b = train_vocabulary(&corpus, 600).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert!(a.len() <= 600);
}

#[test]
fn frame_length_never_exceeds_raw_bytes() {
    // m * t <= 8 * n for every sentence at the default target size.
    let corpus = synth_corpus(1000, 9);
    let vocab = train_vocabulary(&corpus, 4096).unwrap();
    let m = vocab.bits_per_token() as usize;
    assert!(m <= 12);
    for s in &corpus {
        let t = encode(s.as_bytes(), &vocab).unwrap().len();
        assert!(m * t <= 8 * s.len(), "{m} * {t} > 8 * {} for {s:?}", s.len());
    }
}

#[test]
fn vocabulary_json_round_trip_preserves_encoding() {
    let corpus = synth_corpus(200, 2);
    let vocab = train_vocabulary(&corpus, 500).unwrap();
    let back = semcom::Vocabulary::from_json(&vocab.to_json().unwrap()).unwrap();
    for s in corpus.iter().take(50) {
        assert_eq!(encode(s.as_bytes(), &vocab).unwrap(), encode(s.as_bytes(), &back).unwrap());
    }
}
