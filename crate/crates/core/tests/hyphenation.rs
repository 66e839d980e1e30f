//! Liang hyphenation against a brute-force pattern scan.

mod support;

use proptest::prelude::*;
use sublm_core::segment::{
    char_segment, hyphenate, load_segmentation_overrides, PatternSet, Segmenter, EN_US_EXCEPTIONS, EN_US_PATTERNS,
};

use support::hyph::{corpus, Oracle, REAL_WORDS};

#[test]
fn bundled_patterns_load_cleanly() {
    let ps = PatternSet::with_defaults(EN_US_PATTERNS, EN_US_EXCEPTIONS).unwrap();
    assert!(ps.pattern_count() > 4400, "{} patterns", ps.pattern_count());
    assert!(ps.exception_count() > 1000);
}

#[test]
fn fig_one_example() {
    let ps = PatternSet::english();
    assert_eq!(hyphenate("unconstitutional", &ps).parts, ["un", "con", "sti", "tu", "tional"]);
    assert_eq!(hyphenate("a", &ps).parts, ["a"]);
}

#[test]
fn real_words_match_the_brute_force_oracle() {
    let ps = PatternSet::english();
    let oracle = Oracle::new(EN_US_PATTERNS, EN_US_EXCEPTIONS);
    let words: Vec<&str> = REAL_WORDS.split_whitespace().collect();
    assert!(words.len() >= 100);
    for w in words {
        assert_eq!(hyphenate(w, &ps).parts, oracle.parts(w), "{w}");
    }
}

#[test]
fn ten_thousand_token_corpus_matches_the_oracle() {
    let ps = PatternSet::english();
    let oracle = Oracle::new(EN_US_PATTERNS, EN_US_EXCEPTIONS);
    let words = corpus();
    assert_eq!(words.len(), 10_000);
    let mut split = 0;
    for w in &words {
        let got = hyphenate(w, &ps);
        assert_eq!(got.parts, oracle.parts(w), "{w}");
        assert_eq!(got.parts.concat(), *w);
        split += (got.len() > 1) as usize;
    }
    assert!(split > 5000, "only {split} words were split");
}

#[test]
fn pattern_priority_rules() {
    let ps = PatternSet::load("a1b", "", 1, 1).unwrap();
    assert_eq!(hyphenate("aab", &ps).parts, ["aa", "b"]);
    let ps = PatternSet::load("a1b\na2b", "", 1, 1);
    assert!(ps.is_err(), "duplicate letters are rejected");
    let ps = PatternSet::load("a1b\nb2", "", 1, 1).unwrap();
    assert_eq!(hyphenate("abba", &ps).parts, ["a", "bba"]);
}

#[test]
fn override_examples() {
    let (map, rejected) = load_segmentation_overrides("unconstitutional\tun constitution al\ncat\tdo g\n");
    assert_eq!(map["unconstitutional"], ["un", "constitution", "al"]);
    assert_eq!(rejected.len(), 1);
    assert_eq!(rejected[0].line, 2);
}

#[test]
fn char_mode_concatenates_over_corpus() {
    for w in corpus() {
        assert_eq!(char_segment(&w).parts.concat(), w);
    }
}

fn segmenters() -> Vec<Segmenter> {
    let (overrides, _) = load_segmentation_overrides("cats\tcat s\n");
    vec![
        Segmenter::Liang(PatternSet::english()),
        Segmenter::Characters,
        Segmenter::External {
            overrides,
            fallback: Some(PatternSet::english()),
        },
    ]
}

proptest! {
    #[test]
    fn parts_concatenate_to_the_word(word in "\\PC{1,24}") {
        for s in segmenters() {
            let seg = s.segment(&word);
            prop_assert!(seg.parts.iter().all(|p| !p.is_empty()));
            prop_assert_eq!(seg.parts.concat(), word.clone());
            prop_assert_eq!(s.segment(&word), seg);
        }
    }

    #[test]
    fn liang_respects_margins(word in "[a-zA-Z]{1,20}") {
        let ps = PatternSet::english();
        let seg = hyphenate(&word, &ps);
        let mut at = 0;
        let n = word.chars().count();
        for p in &seg.parts[..seg.parts.len() - 1] {
            at += p.chars().count();
            prop_assert!(at >= ps.left_min() && at <= n - ps.right_min(), "{:?}", seg.parts);
        }
    }
}
