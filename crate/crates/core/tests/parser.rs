mod common;

use std::time::{Duration, Instant};

use common::{right_branching, right_branching_sentence, CORPUS};
use langmotion::chart::Chart;
use langmotion::grammar::{tokenize, Dictionary};
use langmotion::resolver::classify;
use proptest::prelude::*;

#[test]
fn corpus_is_large_enough() {
    assert!(CORPUS.len() >= 20);
}

#[test]
fn incremental_chart_equals_batch_chart_on_corpus() {
    let dict = Dictionary::shipped();
    for s in CORPUS {
        let words = tokenize(s);
        let mut inc = Chart::new();
        for (i, w) in words.iter().enumerate() {
            inc.feed_word(w, &dict);
            // every prefix agrees too
            let batch = Chart::parse_batch(&words[..=i], &dict);
            assert_eq!(inc.contents(), batch.contents(), "`{s}` after {} words", i + 1);
        }
    }
}

proptest! {
    #[test]
    fn incremental_equals_batch_on_random_word_strings(idx in proptest::collection::vec(0usize..40, 1..9)) {
        let dict = Dictionary::shipped();
        let vocab: Vec<&str> = dict.words().collect();
        let words: Vec<&str> = idx.iter().map(|i| vocab[i % vocab.len()]).collect();
        let mut inc = Chart::new();
        for w in &words {
            inc.feed_word(w, &dict);
        }
        prop_assert_eq!(inc.contents(), Chart::parse_batch(&words, &dict).contents());
    }
}

#[test]
fn combine_attempts_grow_at_most_cubically() {
    let dict = right_branching();
    let attempts = |n: usize| {
        let mut c = Chart::new();
        for w in right_branching_sentence(n) {
            c.feed_word(&w, &dict);
        }
        // the spanning cell holds the full chain
        assert_eq!(c.result().alternatives.len(), 1);
        c.combine_attempts() as f64
    };
    let (a10, a20, a40) = (attempts(10), attempts(20), attempts(40));
    assert!(a20 / a10 <= 9.0, "{a10} -> {a20}");
    assert!(a40 / a20 <= 9.0, "{a20} -> {a40}");
}

#[test]
fn every_feed_is_fast() {
    let dict = Dictionary::shipped();
    let mut worst = Duration::ZERO;
    for s in CORPUS {
        let mut c = Chart::new();
        for w in tokenize(s) {
            let t = Instant::now();
            c.feed_word(&w, &dict);
            worst = worst.max(t.elapsed());
        }
    }
    assert!(worst < Duration::from_millis(10), "slowest feed {worst:?}");
}

/// Every modifier of every complete corpus parse maps to a taxonomy kind,
/// except clauses that are themselves arguments of another construction.
#[test]
fn corpus_modifiers_are_classified() {
    let dict = Dictionary::shipped();
    for s in CORPUS {
        let c = Chart::parse_batch(&tokenize(s), &dict);
        let Some(best) = c.result().best else { continue };
        let Some(frame) = best.frame() else { continue };
        for (src, kind) in classify(frame) {
            assert!(kind.is_some(), "`{s}`: unclassified modifier {src}");
        }
    }
}
