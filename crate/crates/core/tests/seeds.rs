use std::sync::Arc;

use metasynth::corpus::{Document, DocumentSource};
use metasynth::gateway::ScriptedEmbedder;
use metasynth::seeds::{nearest_neighbors, refresh_seeds, EmbeddedPool, PoolEntry, SeedError, SeedPoolState};
use proptest::prelude::*;

fn at_angle(deg: f64) -> Vec<f64> {
    let r = deg.to_radians();
    vec![r.cos(), r.sin()]
}

fn entry(id: &str, topic: &str, v: Vec<f64>) -> PoolEntry {
    PoolEntry { id: id.into(), text: id.into(), topic: topic.into(), embedding: v }
}

fn batch(texts: &[&str]) -> Vec<Document> {
    texts.iter().map(|t| Document::new(*t, *t, DocumentSource::Metasynth, "finance")).collect()
}

fn state(pool: Vec<PoolEntry>, seeds: &[&str], topics: &[&str], period: usize) -> SeedPoolState {
    let mut s = SeedPoolState::new(Arc::new(EmbeddedPool::new(pool).unwrap()), seeds.iter().map(|s| s.to_string()).collect());
    s.refresh_period = period;
    for t in topics {
        s.record_topic(t);
    }
    s
}

#[test]
fn k_grows_until_a_new_topic_appears() {
    // Five same-topic documents within 5 degrees of the query; the sixth
    // nearest (20 degrees) has a different topic; more lie further out.
    let mut pool: Vec<PoolEntry> = (0..5).map(|i| entry(&format!("p{i}"), "payments", at_angle(i as f64))).collect();
    pool.push(entry("p5", "lending", at_angle(20.0)));
    pool.push(entry("p6", "insurance", at_angle(60.0)));
    pool.push(entry("p7", "tax", at_angle(90.0)));
    let mut s = state(pool, &["old"], &["payments"], 1);
    let emb = ScriptedEmbedder::new([("new doc".to_string(), at_angle(0.0))]);
    let out = refresh_seeds(&mut s, &batch(&["new doc"]), &emb).unwrap();
    assert_eq!(out.attempted_k, vec![5, 6]);
    assert_eq!(out.seeds, vec!["p5"]);
    assert_eq!(s.k, 5);
    assert!(s.recent_topics.is_empty());
    assert_eq!(s.current_seeds, vec!["p5"]);
}

#[test]
fn batch_topic_is_excluded() {
    let pool: Vec<PoolEntry> = (1..=6).map(|i| entry(&format!("d{i}"), &format!("t{i}"), at_angle(i as f64 * 10.0))).collect();
    let mut s = state(pool, &["a", "b"], &["t1", "t1"], 2);
    let emb = ScriptedEmbedder::new([("x".to_string(), at_angle(10.0)), ("y".to_string(), at_angle(12.0))]);
    let out = refresh_seeds(&mut s, &batch(&["x", "y"]), &emb).unwrap();
    assert_eq!(out.seeds.len(), 2);
    assert!(!out.seeds.contains(&"d1".to_string()));
    assert_eq!(out.attempted_k, vec![5]);
}

#[test]
fn all_same_topic_saturates() {
    let pool: Vec<PoolEntry> = (0..7).map(|i| entry(&format!("d{i}"), "T1", at_angle(i as f64))).collect();
    let mut s = state(pool, &["a"], &["t1"], 1);
    let emb = ScriptedEmbedder::new([("x".to_string(), at_angle(0.0))]);
    match refresh_seeds(&mut s, &batch(&["x"]), &emb) {
        Err(SeedError::TopicSaturation { attempted_k }) => assert_eq!(attempted_k, vec![5, 6, 7]),
        other => panic!("expected saturation, got {other:?}"),
    }
}

#[test]
fn batch_size_must_match_period() {
    let pool = vec![entry("a", "t", at_angle(0.0))];
    let mut s = state(pool, &["a"], &[], 3);
    let emb = ScriptedEmbedder::hashing(2);
    assert!(matches!(refresh_seeds(&mut s, &batch(&["x"]), &emb), Err(SeedError::Precondition(_))));
}

fn brute_force(query: &[f64], pool: &[PoolEntry], k: usize) -> Vec<String> {
    let qn = query.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut scored: Vec<(f64, String)> = pool
        .iter()
        .map(|e| {
            let en = e.embedding.iter().map(|x| x * x).sum::<f64>().sqrt();
            let cos = query.iter().zip(&e.embedding).map(|(a, b)| a * b).sum::<f64>() / (qn * en);
            (1.0 - cos, e.id.clone())
        })
        .collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    scored.into_iter().take(k).map(|(_, id)| id).collect()
}

fn nonzero_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, dim).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

fn pool_and_query() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, usize)> {
    (1usize..6, 1usize..50).prop_flat_map(|(dim, n)| {
        (prop::collection::vec(nonzero_vec(dim), n), nonzero_vec(dim), 1..=n)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn knn_matches_brute_force((vectors, query, k) in pool_and_query()) {
        let pool: Vec<PoolEntry> = vectors.into_iter().enumerate().map(|(i, v)| entry(&format!("{i:03}"), "t", v)).collect();
        let embedded = EmbeddedPool::new(pool.clone()).unwrap();
        let got = nearest_neighbors(&query, &embedded, k).unwrap();
        let want = brute_force(&query, &pool, k);
        // Distances equal up to rounding may be ordered differently by the
        // two computations; compare as multisets of distances instead.
        if got != want {
            let d = |ids: &[String]| -> Vec<f64> {
                ids.iter().map(|id| {
                    let e = pool.iter().find(|e| &e.id == id).unwrap();
                    brute_force_distance(&query, &e.embedding)
                }).collect()
            };
            for (a, b) in d(&got).iter().zip(d(&want).iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn refresh_never_returns_recent_topics_and_k_increases(
        vectors in prop::collection::vec(nonzero_vec(3), 6..30),
        topics in prop::collection::vec(0u8..4, 30),
        query in nonzero_vec(3),
        recent in 0u8..4,
    ) {
        let pool: Vec<PoolEntry> = vectors.iter().enumerate()
            .map(|(i, v)| entry(&format!("{i:03}"), &format!("t{}", topics[i]), v.clone()))
            .collect();
        let recent = format!("t{recent}");
        let mut s = state(pool.clone(), &["a", "b"], &[recent.as_str()], 1);
        let emb = ScriptedEmbedder::new([("q".to_string(), query)]);
        match refresh_seeds(&mut s, &batch(&["q"]), &emb) {
            Ok(out) => {
                for id in &out.seeds {
                    let e = pool.iter().find(|e| &e.id == id).unwrap();
                    prop_assert_ne!(&e.topic, &recent);
                }
                prop_assert_eq!(out.attempted_k[0], 5);
                prop_assert!(out.attempted_k.windows(2).all(|w| w[1] == w[0] + 1));
            }
            Err(SeedError::TopicSaturation { attempted_k }) => {
                prop_assert!(pool.iter().all(|e| e.topic == recent));
                prop_assert_eq!(*attempted_k.last().unwrap(), pool.len());
            }
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }
}

fn brute_force_distance(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    1.0 - a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}
