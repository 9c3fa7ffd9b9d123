use std::collections::{HashMap, HashSet};

use metasynth::metrics::{
    bootstrap_ci, chamfer, compression_ratio, length_histogram, measure_corpus, mif, ngd_sum, ngram_diversity, remote_clique,
    task2vec_coefficient, EmbeddingSet, MeasureInputs, MeasureOptions, ReferenceFrequencies,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn cos_dist(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    1.0 - dot / (na * nb)
}

fn brute_remote_clique(v: &[Vec<f64>]) -> f64 {
    let n = v.len() as f64;
    let mut s = 0.0;
    for i in 0..v.len() {
        for j in 0..v.len() {
            if i != j {
                s += cos_dist(&v[i], &v[j]);
            }
        }
    }
    s / (n * n)
}

fn brute_chamfer(v: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for i in 0..v.len() {
        let mut best = f64::INFINITY;
        for j in 0..v.len() {
            if i != j {
                best = best.min(cos_dist(&v[i], &v[j]));
            }
        }
        s += best;
    }
    s / v.len() as f64
}

fn brute_task2vec(v: &[Vec<f64>]) -> f64 {
    let m = v.len() as f64;
    let mut s = 0.0;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            s += cos_dist(&v[i], &v[j]);
        }
    }
    s * 2.0 / (m * (m - 1.0))
}

fn vector_sets() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..=64, 2usize..=100).prop_flat_map(|(dim, n)| {
        prop::collection::vec(
            prop::collection::vec(-1.0f64..1.0, dim).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3)),
            n,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn embedding_metrics_match_brute_force(v in vector_sets()) {
        let set = EmbeddingSet::new(&v).unwrap();
        prop_assert!((remote_clique(&set).unwrap() - brute_remote_clique(&v)).abs() < 1e-12);
        prop_assert!((chamfer(&set).unwrap() - brute_chamfer(&v)).abs() < 1e-12);
        prop_assert!((task2vec_coefficient(&set).unwrap() - brute_task2vec(&v)).abs() < 1e-12);
    }

    #[test]
    fn cosine_metrics_are_bounded(v in vector_sets()) {
        let set = EmbeddingSet::new(&v).unwrap();
        for x in [remote_clique(&set).unwrap(), chamfer(&set).unwrap(), task2vec_coefficient(&set).unwrap()] {
            prop_assert!((0.0..=2.0).contains(&x));
        }
    }

    #[test]
    fn order_invariance_except_compression(docs in prop::collection::vec("[a-d]{1,3}( [a-d]{1,3}){3,8}", 2..10)) {
        let mut rev = docs.clone();
        rev.reverse();
        // Higher orders see n-grams spanning record boundaries, so only
        // unigram diversity is strictly order free.
        prop_assert_eq!(ngram_diversity(&docs, 1).unwrap(), ngram_diversity(&rev, 1).unwrap());
        let reference = ReferenceFrequencies::from_corpus(&docs[..1]);
        prop_assert!((mif(&docs, &reference).unwrap() - mif(&rev, &reference).unwrap()).abs() < 1e-12);
    }
}

fn count_ngrams(corpus: &[String], n: usize) -> (usize, usize) {
    let tokens: Vec<String> = corpus.join("\n").split_whitespace().map(|t| t.to_lowercase()).collect();
    let mut seen = HashSet::new();
    let mut total = 0;
    let mut i = 0;
    while i + n <= tokens.len() {
        seen.insert(tokens[i..i + n].join("\u{1}"));
        total += 1;
        i += 1;
    }
    (seen.len(), total)
}

fn toy_corpus(rng: &mut ChaCha8Rng) -> Vec<String> {
    let words = ["the", "cat", "sat", "on", "mat", "dog", "ran", "a", "The", "Cat,"];
    (0..rng.gen_range(1..6))
        .map(|_| (0..rng.gen_range(4..15)).map(|_| words[rng.gen_range(0..words.len())]).collect::<Vec<_>>().join(" "))
        .collect()
}

#[test]
fn ngram_diversity_matches_counting() {
    assert_eq!(ngram_diversity(&["a b a b"], 1).unwrap(), 0.5);
    assert_eq!(ngram_diversity(&["a b a b"], 2).unwrap(), 2.0 / 3.0);
    assert_eq!(ngram_diversity(&["alpha beta gamma delta"], 4).unwrap(), 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let corpus = toy_corpus(&mut rng);
        let expected: f64 = (1..=4)
            .map(|n| {
                let (u, t) = count_ngrams(&corpus, n);
                u as f64 / t as f64
            })
            .sum();
        assert!((ngd_sum(&corpus).unwrap() - expected).abs() < 1e-12);
    }
}

#[test]
fn compression_reference_values_and_randomness() {
    // Byte counts from Python's gzip.compress(data, 9, mtime=0).
    assert_eq!(compression_ratio(&["ab".repeat(500)]).unwrap(), 33.333333333333336);
    assert_eq!(compression_ratio(&["a"]).unwrap(), 0.047619047619047616);
    let alphabet: Vec<char> = ('A'..='Z').chain('a'..='z').chain('0'..='9').chain(['+', '/']).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise: String = (0..1000).map(|_| alphabet[rng.gen_range(0..64)]).collect();
    let cr = compression_ratio(&[noise]).unwrap();
    assert!((0.8..=1.3).contains(&cr), "{cr}");
}

#[test]
fn duplication_raises_compression_and_lowers_4gd() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let base = toy_corpus(&mut rng);
        let dup: Vec<String> = (0..5).flat_map(|_| base.clone()).collect();
        assert!(compression_ratio(&dup).unwrap() > compression_ratio(&base).unwrap());
        let tokens: usize = base.iter().map(|d| d.split_whitespace().count()).sum();
        if tokens >= 4 {
            assert!(ngram_diversity(&dup, 4).unwrap() < ngram_diversity(&base, 4).unwrap());
        }
    }
}

#[test]
fn compression_is_bit_stable() {
    let corpus: Vec<String> = (0..200).map(|i| format!("record {i} with some shared words and a number {}", i * 31 % 17)).collect();
    let first = compression_ratio(&corpus).unwrap().to_bits();
    for _ in 0..10 {
        assert_eq!(compression_ratio(&corpus).unwrap().to_bits(), first);
    }
}

#[test]
fn mif_matches_recomputation() {
    let reference_docs = ["the cat sat on the mat", "the dog ran", "a cat and a dog"];
    let reference = ReferenceFrequencies::from_corpus(&reference_docs);
    let corpus = ["The cat ran far", "zebras graze", "the the the"];
    let mut counts: HashMap<&str, f64> = HashMap::new();
    for w in reference_docs.iter().flat_map(|d| d.split(' ')) {
        *counts.entry(w).or_default() += 1.0;
    }
    let total: f64 = counts.values().sum();
    let doc_score = |d: &str| {
        let toks: Vec<String> = d.split(' ').map(|t| t.to_lowercase()).collect();
        toks.iter().map(|t| (total / (1.0 + counts.get(t.as_str()).copied().unwrap_or(0.0))).ln()).sum::<f64>() / toks.len() as f64
    };
    let expected = corpus.iter().map(|d| doc_score(d)).sum::<f64>() / 3.0;
    assert!((mif(&corpus, &reference).unwrap() - expected).abs() < 1e-9);
}

#[test]
fn mif_of_unseen_tokens_is_log_total() {
    // A reference of 148 tokens; every corpus token is absent from it.
    let reference = ReferenceFrequencies::from_counts(HashMap::from([("x".to_string(), 148)]));
    assert_eq!(mif(&["alpha beta", "gamma"], &reference).unwrap(), 148f64.ln());
}

#[test]
fn reference_tsv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ref.tsv");
    let r = ReferenceFrequencies::from_corpus(&["a b b c"]);
    r.write_tsv(&path).unwrap();
    let back = ReferenceFrequencies::load_tsv(&path).unwrap();
    assert_eq!(back, r);
    assert_eq!(back.total_tokens(), 4);
}

#[test]
fn histogram_counts_everything() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let docs: Vec<String> = (0..1000).map(|_| vec!["w"; rng.gen_range(0..600)].join(" ")).collect();
    assert_eq!(length_histogram(&docs).iter().map(|b| b.count).sum::<usize>(), 1000);
}

#[test]
fn parallel_results_match_single_thread() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let v: Vec<Vec<f64>> = (0..300).map(|_| (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let texts: Vec<String> = (0..40).map(|i| format!("item {} of set {}", i % 7, i % 3)).collect();
    let run = || {
        let set = EmbeddingSet::new(&v).unwrap();
        let report = measure_corpus(
            MeasureInputs { corpus_id: "p", texts: &texts, embeddings: Some(&v[..40]), batch_embeddings: None, reference: None },
            MeasureOptions { n_resamples: 200, ..MeasureOptions::default() },
        )
        .unwrap();
        (remote_clique(&set).unwrap().to_bits(), chamfer(&set).unwrap().to_bits(), task2vec_coefficient(&set).unwrap().to_bits(), report)
    };
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(run);
    let many = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap().install(run);
    assert_eq!(single, many);
}

#[test]
fn bootstrap_covers_true_mean() {
    let normal = Normal::new(10.0, 3.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut covered = 0;
    for trial in 0..200 {
        let sample: Vec<f64> = (0..1000).map(|_| normal.sample(&mut rng)).collect();
        let est = bootstrap_ci(&sample, 1000, 0.95, trial).unwrap();
        if est.lo <= 10.0 && 10.0 <= est.hi {
            covered += 1;
        }
    }
    let coverage = covered as f64 / 200.0;
    assert!((0.90..=0.99).contains(&coverage), "coverage {coverage}");
}
