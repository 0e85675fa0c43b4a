mod common;

use std::sync::Arc;
use std::thread;
use std::time::Duration;

use proptest::prelude::*;

use semcom::bridge::{BridgeClient, BridgeRequest, BridgeResponse, RequestBody, PROTOCOL_VERSION};
use semcom::{Error, TokenPrior};

fn body_strategy() -> impl Strategy<Value = RequestBody> {
    prop_oneof![
        proptest::collection::vec(any::<u32>(), 0..20).prop_map(|context_ids| RequestBody::Logprobs { context_ids }),
        (".{0,30}", ".{0,30}").prop_map(|(a, b)| RequestBody::Similarity { pair: [a, b] }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn messages_round_trip(id in any::<u64>(), body in body_strategy(), lp in proptest::collection::vec(-50.0f64..0.0, 0..8)) {
        let req = BridgeRequest { version: PROTOCOL_VERSION.into(), request_id: id, body };
        let line = serde_json::to_string(&req).unwrap();
        prop_assert!(!line.contains('\n'));
        prop_assert_eq!(serde_json::from_str::<BridgeRequest>(&line).unwrap(), req);
        let resp = BridgeResponse { request_id: id, logprobs: Some(lp), ..Default::default() };
        let back: BridgeResponse = serde_json::from_str(&serde_json::to_string(&resp).unwrap()).unwrap();
        prop_assert_eq!(back, resp);
    }
}

#[test]
fn logprobs_are_normalized_and_follow_context() {
    let addr = common::mock_service(16, usize::MAX);
    let client = BridgeClient::connect(&addr, 16, Duration::from_secs(5)).unwrap();
    assert_eq!(client.model_name().as_deref(), Some("mock"));
    for ctx in [vec![], vec![3], vec![1, 15]] {
        let lp = client.logprobs(&ctx).unwrap();
        assert!((lp.iter().map(|x| x.exp()).sum::<f64>() - 1.0).abs() < 1e-6);
        let top = (0..16).max_by(|&a, &b| lp[a].total_cmp(&lp[b])).unwrap();
        assert_eq!(top, ctx.last().map_or(0, |&w| (w as usize + 1) % 16));
    }
    // As a prior the begin-of-sequence sentinel is stripped.
    let mut out = vec![0.0; 16];
    client.fill_logprobs(&[16, 4], &mut out).unwrap();
    assert_eq!(out, client.logprobs(&[4]).unwrap());
    assert_eq!(client.name(), "bridge:mock");
}

#[test]
fn vocabulary_mismatch_fails_at_startup() {
    let addr = common::mock_service(16, usize::MAX);
    assert!(matches!(BridgeClient::connect(&addr, 32, Duration::from_secs(5)), Err(Error::PriorUnavailable(_))));
}

#[test]
fn self_similarity_is_one() {
    let addr = common::mock_service(4, usize::MAX);
    let client = BridgeClient::connect(&addr, 4, Duration::from_secs(5)).unwrap();
    for s in ["the council must act", "we agree", "a"] {
        assert!((client.similarity(s, s).unwrap() - 1.0).abs() < 1e-6);
    }
    assert!(client.similarity("abc", "xyz").unwrap() < 0.5);
}

#[test]
fn concurrent_queries_get_their_own_answers() {
    let addr = common::mock_service(8, usize::MAX);
    let client = Arc::new(BridgeClient::connect(&addr, 8, Duration::from_secs(5)).unwrap());
    let handles: Vec<_> = (0..4u32)
        .map(|k| {
            let client = client.clone();
            thread::spawn(move || {
                for _ in 0..25 {
                    let lp = client.logprobs(&[k]).unwrap();
                    let top = (0..8).max_by(|&a, &b| lp[a].total_cmp(&lp[b])).unwrap();
                    assert_eq!(top as u32, k + 1);
                }
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
}

#[test]
fn dropped_service_surfaces_as_unavailable() {
    // One probe is answered, then the service goes quiet.
    let addr = common::mock_service(8, 1);
    let client = BridgeClient::connect(&addr, 8, Duration::from_millis(500)).unwrap();
    assert!(matches!(client.logprobs(&[1]), Err(Error::PriorUnavailable(_))));
}
