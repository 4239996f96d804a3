use std::collections::HashMap;

use proptest::prelude::*;
use qfuzz::mdp::{extract_state, Input};
use qfuzz::mutation::{
    apply_action, build_dictionary, locate_object_bounds, ActionKind, Effect, MutationContext,
    ObjectMarkers, TokenDictionary, DEFAULT_MAX_TOKENS, DEFAULT_MIN_TOKEN_LEN,
};
use qfuzz::sample::SAMPLE_SEED;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const MUTATORS: [ActionKind; 7] = [
    ActionKind::BitFlip { ratio: 0.01 },
    ActionKind::InsertToken,
    ActionKind::ShuffleWindow,
    ActionKind::ShuffleObjectSegments,
    ActionKind::CopyWindowInsert,
    ActionKind::CopyWindowOverwrite,
    ActionKind::DeleteWindow,
];

fn dict() -> TokenDictionary {
    TokenDictionary::from_tokens(["obj", "endobj", "trailer", "/Length"]).unwrap()
}

fn case() -> impl Strategy<Value = (Vec<u8>, usize, usize, usize, u64)> {
    (2usize..300)
        .prop_flat_map(|n| {
            (
                proptest::collection::vec(any::<u8>(), n),
                1..n,
                0..MUTATORS.len(),
                any::<u64>(),
            )
        })
        .prop_flat_map(|(bytes, width, action, seed)| {
            let n = bytes.len();
            (Just(bytes), 0..=n - width, Just(width), Just(action), Just(seed))
        })
}

fn mutate(bytes: &[u8], offset: usize, width: usize, action: ActionKind, seed: u64) -> qfuzz::mutation::Mutation {
    let input = Input::new(bytes.to_vec()).unwrap();
    let window = extract_state(&input, offset, width).unwrap();
    apply_action(
        &input,
        &window,
        &action,
        &dict(),
        &MutationContext::default(),
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
    .unwrap()
}

proptest! {
    #[test]
    fn length_laws((bytes, offset, width, a, seed) in case()) {
        let action = MUTATORS[a];
        let n = bytes.len();
        let m = mutate(&bytes, offset, width, action, seed);
        let out = m.input.len();
        match (action, m.effect) {
            (ActionKind::InsertToken, Effect::Inserted { len, .. }) => prop_assert_eq!(out, n + len),
            (ActionKind::CopyWindowInsert, _) => prop_assert_eq!(out, n + width),
            (ActionKind::DeleteWindow, _) => prop_assert_eq!(out, n - width),
            _ => prop_assert_eq!(out, n),
        }
    }

    #[test]
    fn writes_stay_in_their_region((bytes, offset, width, a, seed) in case()) {
        let action = MUTATORS[a];
        let m = mutate(&bytes, offset, width, action, seed);
        let out = m.input.as_bytes();
        match m.effect {
            Effect::Rewrote { start, end } => {
                prop_assert_eq!(&out[..start], &bytes[..start]);
                prop_assert_eq!(&out[end..], &bytes[end..]);
                if matches!(action, ActionKind::BitFlip { .. } | ActionKind::ShuffleWindow) {
                    prop_assert_eq!((start, end), (offset, offset + width));
                }
            }
            Effect::Inserted { at, len } => {
                prop_assert_eq!(&out[..at], &bytes[..at]);
                prop_assert_eq!(&out[at + len..], &bytes[at..]);
                if action == ActionKind::InsertToken {
                    prop_assert!(at >= offset && at <= offset + width);
                }
                if action == ActionKind::CopyWindowInsert {
                    prop_assert_eq!(&out[at..at + len], &bytes[offset..offset + width]);
                }
            }
            Effect::Deleted { at, len } => {
                prop_assert_eq!((at, len), (offset, width));
                prop_assert_eq!(&out[..at], &bytes[..at]);
                prop_assert_eq!(&out[at..], &bytes[at + len..]);
            }
            Effect::NoOp => prop_assert_eq!(out, &bytes[..]),
            other => prop_assert!(false, "unexpected effect {:?}", other),
        }
    }

    #[test]
    fn shuffles_preserve_byte_multisets((bytes, offset, width, _a, seed) in case()) {
        for action in [ActionKind::ShuffleWindow, ActionKind::ShuffleObjectSegments] {
            let m = mutate(&bytes, offset, width, action, seed);
            let mut before = bytes.clone();
            let mut after = m.input.as_bytes().to_vec();
            before.sort_unstable();
            after.sort_unstable();
            prop_assert_eq!(before, after);
        }
    }

    #[test]
    fn equal_seeds_equal_results((bytes, offset, width, a, seed) in case()) {
        let action = MUTATORS[a];
        let x = mutate(&bytes, offset, width, action, seed);
        let y = mutate(&bytes, offset, width, action, seed);
        prop_assert_eq!(x.input, y.input);
        prop_assert_eq!(x.effect, y.effect);
    }

    #[test]
    fn view_actions_leave_input_alone((bytes, offset, width, _a, seed) in case()) {
        for action in [ActionKind::ShiftOffsetLeft, ActionKind::ShiftOffsetRight, ActionKind::GrowWidth, ActionKind::ShrinkWidth] {
            let m = mutate(&bytes, offset, width, action, seed);
            prop_assert_eq!(m.input.as_bytes(), &bytes[..]);
            match m.effect {
                Effect::View { offset: o, width: w } => prop_assert!(w >= 1 && o + w <= bytes.len()),
                other => prop_assert!(false, "unexpected effect {:?}", other),
            }
        }
    }
}

#[test]
fn insert_token_splice_back() {
    let seed = Input::new(SAMPLE_SEED).unwrap();
    let dict = build_dictionary(std::slice::from_ref(&seed), DEFAULT_MIN_TOKEN_LEN, DEFAULT_MAX_TOKENS).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..500 {
        let offset = (i * 331) % (seed.len() - 32);
        let window = extract_state(&seed, offset, 32).unwrap();
        let m = apply_action(&seed, &window, &ActionKind::InsertToken, &dict, &MutationContext::default(), &mut rng).unwrap();
        let Effect::Inserted { at, len } = m.effect else {
            panic!("expected an insertion");
        };
        let out = m.input.as_bytes();
        assert!(dict.tokens().iter().any(|t| t.as_slice() == &out[at..at + len]));
        let mut spliced = out[..at].to_vec();
        spliced.extend_from_slice(&out[at + len..]);
        assert!(spliced == SAMPLE_SEED);
    }
}

#[test]
fn full_ratio_clears_an_all_ones_window() {
    let input = Input::new(vec![0xffu8; 64]).unwrap();
    let window = extract_state(&input, 16, 32).unwrap();
    let m = apply_action(
        &input,
        &window,
        &ActionKind::BitFlip { ratio: 1.0 },
        &dict(),
        &MutationContext::default(),
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap();
    let out = m.input.as_bytes();
    assert!(out[16..48].iter().all(|&b| b == 0));
    assert!(out[..16].iter().chain(&out[48..]).all(|&b| b == 0xff));
}

/// Expected flips are 8 * w * p = 2.56 per application; the mean over 10^4
/// applications must be within 5% of that.
#[test]
fn bit_flip_rate_monte_carlo() {
    let input = Input::new(vec![0u8; 96]).unwrap();
    let window = extract_state(&input, 32, 32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let trials = 10_000;
    let mut flips = 0u64;
    for _ in 0..trials {
        let m = apply_action(&input, &window, &ActionKind::BitFlip { ratio: 0.01 }, &dict(), &MutationContext::default(), &mut rng).unwrap();
        flips += m.input.as_bytes().iter().map(|b| u64::from(b.count_ones())).sum::<u64>();
    }
    let mean = flips as f64 / trials as f64;
    let expected = 8.0 * 32.0 * 0.01;
    assert!((mean - expected).abs() / expected < 0.05, "mean flips {mean}");
}

fn chi_square_p(observed: &[u64]) -> f64 {
    let total: u64 = observed.iter().sum();
    let expected = total as f64 / observed.len() as f64;
    let stat: f64 = observed.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    let dist = ChiSquared::new((observed.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

/// Over 10^4 shuffles of a 4-byte window, every byte histogram is preserved
/// and all 24 orderings occur uniformly.
#[test]
fn shuffle_window_histogram_and_uniformity() {
    let input = Input::new(b"xx\x01\x02\x03\x04yy".to_vec()).unwrap();
    let window = extract_state(&input, 2, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut orders: HashMap<Vec<u8>, u64> = HashMap::new();
    for _ in 0..10_000 {
        let m = apply_action(&input, &window, &ActionKind::ShuffleWindow, &dict(), &MutationContext::default(), &mut rng).unwrap();
        let out = m.input.as_bytes();
        let mut w = out[2..6].to_vec();
        *orders.entry(w.clone()).or_default() += 1;
        w.sort_unstable();
        assert_eq!(w, [1, 2, 3, 4]);
        assert_eq!(&out[..2], b"xx");
        assert_eq!(&out[6..], b"yy");
    }
    assert_eq!(orders.len(), 24);
    let counts: Vec<u64> = orders.values().copied().collect();
    assert!(chi_square_p(&counts) > 0.01);
}

/// A three-byte object has exactly one pair of cut points, so the result is
/// one of the six segment orders, each equally likely.
#[test]
fn object_segment_orders_are_uniform() {
    let input = Input::new(b"ab<x>cd".to_vec()).unwrap();
    let window = extract_state(&input, 3, 1).unwrap();
    let ctx = MutationContext {
        markers: ObjectMarkers { open: "<".into(), close: ">".into() },
        ..MutationContext::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut seen: HashMap<Vec<u8>, u64> = HashMap::new();
    for _ in 0..12_000 {
        let m = apply_action(&input, &window, &ActionKind::ShuffleObjectSegments, &dict(), &ctx, &mut rng).unwrap();
        assert_eq!(m.effect, Effect::Rewrote { start: 2, end: 5 });
        *seen.entry(m.input.as_bytes().to_vec()).or_default() += 1;
    }
    assert_eq!(seen.len(), 6);
    assert!(seen.contains_key(input.as_bytes()));
    let counts: Vec<u64> = seen.values().copied().collect();
    assert!(chi_square_p(&counts) > 0.01);
}

#[test]
fn sample_object_bounds_match_a_linear_scan() {
    let find = |hay: &[u8], needle: &[u8], from: usize| {
        hay[from..].windows(needle.len()).position(|w| w == needle).map(|p| p + from)
    };
    for num in [1usize, 3, 20, 57, 101] {
        let header = format!("\n{num} 0 obj\n");
        let at = find(SAMPLE_SEED, header.as_bytes(), 0).unwrap();
        let start = at + header.len() - 4;
        let end = find(SAMPLE_SEED, b"endobj", start).unwrap() + 6;
        for offset in [start, (start + end) / 2, end - 1] {
            let b = locate_object_bounds(SAMPLE_SEED, offset, b"obj", b"endobj");
            assert_eq!((b.start, b.end), (start, end), "object {num}, offset {offset}");
        }
    }
}

#[test]
fn sample_dictionary_has_structure_tokens() {
    let seed = Input::new(SAMPLE_SEED).unwrap();
    let dict = build_dictionary(&[seed], DEFAULT_MIN_TOKEN_LEN, DEFAULT_MAX_TOKENS).unwrap();
    let has = |s: &str| dict.tokens().iter().any(|t| t.windows(s.len()).any(|w| w == s.as_bytes()));
    for token in ["obj", "endobj", "trailer", "startxref", "xref"] {
        assert!(has(token), "missing {token}");
    }
    assert!(dict.len() <= DEFAULT_MAX_TOKENS);
    assert!(dict.tokens().iter().all(|t| t.iter().all(|b| (0x20..=0x7e).contains(b))));
}
