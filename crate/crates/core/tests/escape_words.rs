use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rotor_core::acceptance::realized_words;
use rotor_core::escape::{
    extend_for_root, extends_validly, factor_blocks, first_violation, is_escape_branch, is_escape_tree, phi,
    psi, random_branch_word, random_tree_word, satisfies_all, satisfies_pk, simulate, simulate_branch,
    synthesize_branch, synthesize_tree, BinaryWord, Block, ConfigDescriptor, EscapeError, RootDirection,
};
use rotor_core::tree::Arena;

fn w(s: &str) -> BinaryWord {
    s.parse().unwrap()
}

#[test]
fn spec_window_examples() {
    assert!(!satisfies_pk(&w("111"), 2));
    assert!(satisfies_pk(&w("111"), 1));
    assert!(!satisfies_pk(&w("1101101"), 3));
    assert!(satisfies_pk(&w("110110"), 2));
    let v = first_violation(&w("0111")).unwrap();
    assert_eq!((v.k, v.start, v.end), (2, 2, 4));
    assert!("10a".parse::<BinaryWord>().is_err());
}

#[test]
fn spec_block_examples() {
    let f = factor_blocks(&w("110100")).unwrap();
    assert_eq!(f.blocks, vec![Block::OneOneZero, Block::OneZero, Block::Zero]);
    assert!(!f.appended_zero);
    let f = factor_blocks(&w("1")).unwrap();
    assert_eq!(f.blocks, vec![Block::OneZero]);
    assert!(f.appended_zero);
    assert!(matches!(factor_blocks(&w("0111")), Err(EscapeError::ThreeConsecutiveOnes(_))));

    assert_eq!(psi(&w("110100")).unwrap(), (w("110"), w("100")));
    assert_eq!(psi(&w("000")).unwrap(), (w("000"), w("000")));
    assert_eq!(psi(&w("1010")).unwrap(), (w("10"), w("01")));
    assert_eq!(phi(&w("110"), &w("100")).unwrap(), w("110100"));
    assert!(matches!(phi(&w("1"), &w("10")), Err(EscapeError::LengthMismatch(1, 2))));

    assert_eq!(extend_for_root(&w("1"), &w("1"), RootDirection::Up), (w("1"), w("1")));
    assert_eq!(extend_for_root(&w("1"), &w("1"), RootDirection::Left), (w("01"), w("1")));
    assert_eq!(extend_for_root(&w("1"), &w("1"), RootDirection::Right), (w("01"), w("01")));
}

#[test]
fn spec_validity_examples() {
    assert!(is_escape_branch(&w(&"10".repeat(20))));
    assert!(is_escape_branch(&w("0000001")));
    assert!(is_escape_branch(&w("110110")));
    assert!(is_escape_tree(&w("111111")));
    assert!(!is_escape_tree(&w("100100100")));
    assert!(is_escape_tree(&BinaryWord::zeros(30)));
}

#[test]
fn spec_synthesis_examples() {
    assert_eq!(simulate_branch(&synthesize_branch(&w("0")).unwrap(), 1).unwrap(), w("0"));
    let ten = synthesize_branch(&w("10")).unwrap();
    assert!(matches!(ten, ConfigDescriptor::Node { root: RootDirection::Up, .. }));
    assert_eq!(simulate_branch(&ten, 2).unwrap(), w("10"));
    for word in ["101010", "11", "000000000"] {
        let config = synthesize_tree(&w(word)).unwrap();
        assert_eq!(simulate(&config, Arena::FullTree, word.len()).unwrap(), w(word));
    }
    assert!(matches!(synthesize_branch(&w("111")), Err(EscapeError::NotRealizable(_))));
    assert!(matches!(synthesize_tree(&w("100100100")), Err(EscapeError::NotRealizable(_))));
    assert_eq!(synthesize_branch(&BinaryWord::default()).unwrap(), ConfigDescriptor::level(0));
}

#[test]
fn level_rules_return_then_escape() {
    for h in 0..12u32 {
        let mut expected = BinaryWord::zeros(h as usize);
        expected.push(true);
        assert_eq!(simulate_branch(&ConfigDescriptor::level(h), h as usize + 1).unwrap(), expected);
    }
}

#[test]
fn descriptor_json_shape() {
    let d = ConfigDescriptor::node(RootDirection::Up, ConfigDescriptor::level(2), ConfigDescriptor::level(0));
    let json = serde_json::to_value(&d).unwrap();
    assert_eq!(json["rule"], "node");
    assert_eq!(json["root"], "up");
    assert_eq!(json["left"], serde_json::json!({"rule": "level", "h": 2}));
    let back: ConfigDescriptor = serde_json::from_value(json).unwrap();
    assert_eq!(back, d);
}

#[test]
fn full_tree_round_trip_is_exhaustive_for_short_words() {
    for len in 0..=9 {
        for a in BinaryWord::all(len) {
            match synthesize_tree(&a) {
                Ok(config) => assert_eq!(simulate(&config, Arena::FullTree, len).unwrap(), a),
                Err(_) => assert!(!is_escape_tree(&a)),
            }
        }
    }
}

#[test]
fn shallow_descriptors_only_realize_valid_words() {
    for word in realized_words(10, 1, 10).unwrap() {
        assert!(satisfies_all(&word), "{word}");
    }
}

fn descriptor() -> impl Strategy<Value = ConfigDescriptor> {
    let leaf = (0u32..7).prop_map(ConfigDescriptor::level);
    leaf.prop_recursive(3, 15, 2, |inner| {
        (0usize..3, inner.clone(), inner).prop_map(|(r, left, right)| {
            ConfigDescriptor::node(RootDirection::ALL[r], left, right)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn phi_inverts_psi(seed in any::<u64>(), len in 0usize..60) {
        let a = random_branch_word(&mut ChaCha8Rng::seed_from_u64(seed), len);
        let (c, d) = psi(&a).unwrap();
        let back = phi(&c, &d).unwrap();
        prop_assert!(back == a || (back.len() == a.len() + 1 && back.starts_with(&a) && !back.bits()[a.len()]));
    }

    #[test]
    fn psi_lowers_the_window_level(seed in any::<u64>(), len in 1usize..80) {
        let a = random_branch_word(&mut ChaCha8Rng::seed_from_u64(seed), len);
        let (c, d) = psi(&a).unwrap();
        prop_assert!(satisfies_all(&c) && satisfies_all(&d));
    }

    #[test]
    fn valid_prefixes_and_extensions(seed in any::<u64>(), len in 0usize..60) {
        let a = random_branch_word(&mut ChaCha8Rng::seed_from_u64(seed), len);
        prop_assert!(satisfies_all(&a));
        for k in 0..=a.len() {
            prop_assert!(satisfies_all(&a.prefix(k)));
        }
        for bit in [false, true] {
            let mut b = a.clone();
            b.push(bit);
            prop_assert_eq!(extends_validly(&a, bit), satisfies_all(&b));
        }
    }

    #[test]
    fn branch_synthesis_round_trips(seed in any::<u64>(), len in 0usize..120) {
        let a = random_branch_word(&mut ChaCha8Rng::seed_from_u64(seed), len);
        let desc = synthesize_branch(&a).unwrap();
        prop_assert_eq!(simulate_branch(&desc, len).unwrap(), a);
    }

    #[test]
    fn tree_synthesis_round_trips(seed in any::<u64>(), len in 0usize..150) {
        let a = random_tree_word(&mut ChaCha8Rng::seed_from_u64(seed), len);
        prop_assert!(is_escape_tree(&a));
        let config = synthesize_tree(&a).unwrap();
        prop_assert_eq!(simulate(&config, Arena::FullTree, len).unwrap(), a);
    }

    #[test]
    fn simulated_words_are_valid(desc in descriptor(), m in 0usize..40) {
        prop_assert!(satisfies_all(&simulate_branch(&desc, m).unwrap()));
    }

    #[test]
    fn branch_word_composes_from_sub_branch_words(
        root in 0usize..3,
        left in descriptor(),
        right in descriptor(),
        n in 0usize..25,
    ) {
        let root = RootDirection::ALL[root];
        let (lc, ld) = match root {
            RootDirection::Left => (n, n + 1),
            _ => (n, n),
        };
        let c = simulate_branch(&left, lc).unwrap();
        let d = simulate_branch(&right, ld).unwrap();
        let (c, d) = extend_for_root(&c, &d, root);
        let expected = phi(&c, &d).unwrap();
        let node = ConfigDescriptor::node(root, left, right);
        prop_assert_eq!(simulate_branch(&node, expected.len()).unwrap(), expected);
    }
}
