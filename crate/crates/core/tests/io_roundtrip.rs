use std::io::Cursor;

use ood_core::store::{format_score, LEB1_MAGIC};
use ood_core::*;
use proptest::prelude::*;

fn embedding_strategy() -> impl Strategy<Value = EmbeddingSet> {
    (1usize..5, 1usize..4, 1usize..6, any::<bool>()).prop_flat_map(|(n, l, d, cls)| {
        prop::collection::vec(-1e6f32..1e6, n * l * d).prop_map(move |data| {
            let ids = (0..n).map(|i| format!("id-{i}")).collect();
            let pooling = if cls { Pooling::Cls } else { Pooling::Avg };
            EmbeddingSet::new(ids, l, d, pooling, data).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn embeddings_round_trip(set in embedding_strategy()) {
        let mut buf = Vec::new();
        write_embeddings(&set, &mut buf).unwrap();
        prop_assert_eq!(&buf[..4], LEB1_MAGIC);
        let back = read_embeddings(Cursor::new(&buf)).unwrap();
        prop_assert_eq!(&back, &set);
        let mut again = Vec::new();
        write_embeddings(&back, &mut again).unwrap();
        prop_assert_eq!(buf, again);
    }

    #[test]
    fn truncated_embeddings_are_rejected(set in embedding_strategy(), cut in 1usize..8) {
        let mut buf = Vec::new();
        write_embeddings(&set, &mut buf).unwrap();
        let keep = buf.len().saturating_sub(cut);
        prop_assert!(read_embeddings(Cursor::new(&buf[..keep])).is_err());
    }

    #[test]
    fn scores_round_trip_bit_exact(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..20)) {
        let set = ScoreSet::from_pairs(values.iter().enumerate().map(|(i, &v)| (format!("s{i}"), v))).unwrap();
        let mut buf = Vec::new();
        write_scores(&set, &mut buf).unwrap();
        let back = read_scores(Cursor::new(&buf)).unwrap();
        for ((_, a), (_, b)) in set.iter().zip(back.iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn logits_round_trip(rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 3), 1..10)) {
        let mut set = LogitSet::new();
        for (i, r) in rows.iter().enumerate() {
            set.insert(format!("x{i}"), r.clone()).unwrap();
        }
        let mut buf = Vec::new();
        write_logits(&set, &mut buf).unwrap();
        let back = read_logits(Cursor::new(&buf)).unwrap();
        prop_assert_eq!(back, set);
    }
}

#[test]
fn labels_round_trip_with_text() {
    let mut set = LabelSet::new();
    set.insert("a", Domain::In, Some("book a flight".into())).unwrap();
    set.insert("b", Domain::Out, None).unwrap();
    let mut buf = Vec::new();
    write_labels(&set, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert_eq!(read_labels(Cursor::new(&buf)).unwrap(), set);
}

#[test]
fn malformed_inputs_are_errors() {
    assert!(read_labels(Cursor::new("{\"id\":\"a\",\"label\":\"maybe\"}\n")).is_err());
    assert!(read_labels(Cursor::new("{\"id\":\"a\",\"label\":\"in\"}\n{\"id\":\"a\",\"label\":\"out\"}\n")).is_err());
    assert!(read_logits(Cursor::new("{\"id\":\"a\",\"logits\":[1.0]}\n")).is_err());
    assert!(read_logits(Cursor::new("{\"id\":\"a\",\"logits\":[1,2]}\n{\"id\":\"b\",\"logits\":[1,2,3]}\n")).is_err());
    assert!(read_scores(Cursor::new("name,value\na,1\n")).is_err());
    assert!(read_scores(Cursor::new("id,score\na,NaN\n")).is_err());
    assert!(read_embeddings(Cursor::new(b"LEB2\x02\x00\x00\x00{}".to_vec())).is_err());
}

#[test]
fn score_format_has_seventeen_significant_digits() {
    assert_eq!(format_score(0.1), "1.0000000000000001e-1");
    assert_eq!(format_score(-2.0), "-2.0000000000000000e0");
    assert_eq!(format_score(0.1).parse::<f64>().unwrap(), 0.1);
}
