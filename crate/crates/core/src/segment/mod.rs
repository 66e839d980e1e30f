//! Word-to-subword segmentation.
//!
//! Three modes share one contract: the parts of a [`Segmentation`] are
//! non-empty and concatenate back to the word exactly.

mod patterns;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

pub use patterns::{PatternSet, DEFAULT_LEFT_MIN, DEFAULT_RIGHT_MIN, EN_US_EXCEPTIONS, EN_US_PATTERNS};

/// Pseudo-tokens that are never split.
pub const UNK: &str = "<unk>";
pub const EOS: &str = "<eos>";

pub fn is_pseudo_token(word: &str) -> bool {
    word == UNK || word == EOS
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    pub word: String,
    pub parts: Vec<String>,
}

impl Segmentation {
    fn whole(word: &str) -> Self {
        Segmentation {
            word: word.to_string(),
            parts: alloc::vec![word.to_string()],
        }
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// Parts joined by `sep`, e.g. `un-con-sti-tu-tional`.
    pub fn joined(&self, sep: &str) -> String {
        self.parts.join(sep)
    }
}

/// Liang hyphenation applied to every maximal letter run of `word`; each
/// maximal non-letter run becomes its own part. Matching is case-insensitive,
/// the emitted parts keep the original characters.
pub fn hyphenate(word: &str, patterns: &PatternSet) -> Segmentation {
    if word.is_empty() || is_pseudo_token(word) {
        return Segmentation::whole(word);
    }
    let mut parts = Vec::new();
    for (is_letters, run) in letter_runs(word) {
        if !is_letters {
            parts.push(run.to_string());
            continue;
        }
        let mut last = 0usize;
        let offsets: Vec<usize> = run.char_indices().map(|(i, _)| i).collect();
        for b in patterns.break_points(run) {
            let at = offsets[b];
            parts.push(run[last..at].to_string());
            last = at;
        }
        parts.push(run[last..].to_string());
    }
    Segmentation {
        word: word.to_string(),
        parts,
    }
}

/// One part per Unicode scalar value.
pub fn char_segment(word: &str) -> Segmentation {
    if word.is_empty() || is_pseudo_token(word) {
        return Segmentation::whole(word);
    }
    Segmentation {
        word: word.to_string(),
        parts: word.chars().map(|c| c.to_string()).collect(),
    }
}

fn letter_runs(word: &str) -> Vec<(bool, &str)> {
    let mut runs = Vec::new();
    let mut start = 0;
    let mut current: Option<bool> = None;
    for (i, c) in word.char_indices() {
        let letter = c.is_alphabetic();
        match current {
            Some(k) if k == letter => {}
            Some(k) => {
                runs.push((k, &word[start..i]));
                start = i;
                current = Some(letter);
            }
            None => current = Some(letter),
        }
    }
    if let Some(k) = current {
        runs.push((k, &word[start..]));
    }
    runs
}

pub type Overrides = BTreeMap<String, Vec<String>>;

/// A line of an overrides file that was not accepted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedLine {
    pub line: usize,
    pub reason: String,
}

/// Parses `word<TAB>part1 part2 ...` lines. Lines whose parts do not
/// concatenate to the word are rejected individually; the rest are kept.
pub fn load_segmentation_overrides(text: &str) -> (Overrides, Vec<RejectedLine>) {
    let mut map = Overrides::new();
    let mut rejected = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let reject = |reason: String| RejectedLine { line: i + 1, reason };
        let Some((word, rest)) = line.split_once('\t') else {
            rejected.push(reject("missing tab separator".into()));
            continue;
        };
        let parts: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
        if word.is_empty() || parts.is_empty() {
            rejected.push(reject("empty word or segmentation".into()));
            continue;
        }
        if parts.concat() != word {
            rejected.push(reject(format!("parts {parts:?} do not concatenate to `{word}`")));
            continue;
        }
        map.insert(word.to_string(), parts);
    }
    (map, rejected)
}

/// Segmentation strategy used to build subword vocabularies.
#[derive(Debug, Clone)]
pub enum Segmenter {
    Liang(PatternSet),
    Characters,
    /// Externally produced segmentations. Words without an entry fall back to
    /// Liang hyphenation when patterns are given, otherwise stay whole.
    External {
        overrides: Overrides,
        fallback: Option<PatternSet>,
    },
}

impl Segmenter {
    pub fn segment(&self, word: &str) -> Segmentation {
        if is_pseudo_token(word) {
            return Segmentation::whole(word);
        }
        match self {
            Segmenter::Liang(ps) => hyphenate(word, ps),
            Segmenter::Characters => char_segment(word),
            Segmenter::External { overrides, fallback } => match overrides.get(word) {
                Some(parts) => Segmentation {
                    word: word.to_string(),
                    parts: parts.clone(),
                },
                None => match fallback {
                    Some(ps) => hyphenate(word, ps),
                    None => Segmentation::whole(word),
                },
            },
        }
    }

    pub fn mode_name(&self) -> &'static str {
        match self {
            Segmenter::Liang(_) => "liang",
            Segmenter::Characters => "chars",
            Segmenter::External { .. } => "external",
        }
    }
}
