//! Property tests for the structural invariants.

mod common;

use proptest::prelude::*;

use sciphrase::corpus::{class_distribution, Dataset, Document, KeyphraseInstance, Label};
use sciphrase::embeddings::{embed_window, EmbeddingTable};
use sciphrase::model::argmax_label;
use sciphrase::nn::ops::softmax;
use sciphrase::window::{extract_window, tokenize, ContextWindow, Slot};

fn word() -> impl Strategy<Value = String> {
    proptest::string::string_regex("[A-Za-z0-9α-ω]{1,8}").unwrap()
}

fn text() -> impl Strategy<Value = String> {
    proptest::collection::vec(
        prop_oneof![
            word(),
            word().prop_map(|w| format!("({w})")),
            word().prop_map(|w| format!("{w}.")),
            word().prop_map(|w| format!("{w}-{w}")),
        ],
        0..12,
    )
    .prop_map(|ws| ws.join(" "))
}

proptest! {
    #[test]
    fn tokenize_is_idempotent_under_rejoining(t in text()) {
        let first: Vec<String> = tokenize(&t).into_iter().map(|t| t.text).collect();
        let rejoined = first.join(" ");
        let second: Vec<String> = tokenize(&rejoined).into_iter().map(|t| t.text).collect();
        prop_assert_eq!(first, second);
    }

    #[test]
    fn tokens_are_ordered_and_non_overlapping(t in text()) {
        let tokens = tokenize(&t);
        for w in tokens.windows(2) {
            prop_assert!(w[0].end <= w[1].start);
        }
        for tok in &tokens {
            prop_assert!(tok.start < tok.end);
            prop_assert!(!tok.text.is_empty());
        }
    }

    #[test]
    fn windows_always_have_the_requested_shape(
        words in proptest::collection::vec(word(), 1..15),
        l in 1usize..5,
        c in 1usize..5,
        r in 1usize..5,
        pick in 0usize..14,
    ) {
        let text = words.join(" ");
        let tokens = tokenize(&text);
        prop_assume!(!tokens.is_empty());
        let tok = &tokens[pick % tokens.len()];
        let inst = KeyphraseInstance {
            id: "T1".into(),
            start: tok.start,
            end: tok.end,
            surface: tok.text.clone(),
            gold_label: Some(Label::Material),
        };
        let doc = Document {
            doc_id: "d".into(),
            text,
            instances: vec![inst.clone()],
        };
        let w = extract_window(&doc, &inst, l, c, r).unwrap();
        prop_assert_eq!(w.shape(), (l, c, r));
        prop_assert_eq!(w.len(), l + c + r);
        // pads form a prefix of left and suffixes of center/right
        let lp: Vec<bool> = w.left.iter().map(Slot::is_pad).collect();
        prop_assert!(lp.windows(2).all(|p| p[0] >= p[1]));
        for ctx in [&w.center, &w.right] {
            let p: Vec<bool> = ctx.iter().map(Slot::is_pad).collect();
            prop_assert!(p.windows(2).all(|q| q[0] <= q[1]));
        }
        // the first center slot is real: the span overlaps its own token
        prop_assert!(!w.center[0].is_pad());
    }

    #[test]
    fn embedding_scales_linearly(
        alpha in -3.0f64..3.0,
        vals in proptest::collection::vec(-1.0f64..1.0, 6),
    ) {
        let entries = vec![
            ("a".to_string(), vals[0..3].to_vec()),
            ("b".to_string(), vals[3..6].to_vec()),
        ];
        let mut table = EmbeddingTable::from_entries("t", 3, entries).unwrap();
        let w = ContextWindow::new(
            vec![Slot::word("a")],
            vec![Slot::word("b"), Slot::word("oov")],
            vec![Slot::Pad],
        );
        let before = embed_window(&w, &table);
        table.scale(alpha);
        let after = embed_window(&w, &table);
        for (x, y) in before.values.iter().zip(&after.values) {
            prop_assert!((x * alpha - y).abs() < 1e-9);
        }
    }

    #[test]
    fn class_distribution_sums_to_one(
        labels in proptest::collection::vec(0usize..3, 1..40),
    ) {
        let instances: Vec<KeyphraseInstance> = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| KeyphraseInstance {
                id: format!("T{i}"),
                start: 0,
                end: 1,
                surface: "x".into(),
                gold_label: Label::from_index(l),
            })
            .collect();
        let ds = Dataset {
            split_name: "p".into(),
            documents: vec![Document {
                doc_id: "d".into(),
                text: "x".into(),
                instances,
            }],
        };
        let dist = class_distribution(&ds).unwrap();
        let sum: f64 = dist.values().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert!(dist.values().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn argmax_is_consistent_with_probabilities(
        logits in proptest::collection::vec(-10.0f64..10.0, 3),
    ) {
        let p = softmax(&logits);
        let probs = [p[0], p[1], p[2]];
        let label = argmax_label(&probs);
        for k in 0..3 {
            prop_assert!(probs[label.index()] >= probs[k]);
        }
    }
}
