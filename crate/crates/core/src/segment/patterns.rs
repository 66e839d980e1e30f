//! Liang's hyphenation algorithm over TeX-style pattern lists.
//!
//! A pattern such as `.un1c` or `4tio` interleaves letters with single-digit
//! priorities. For a word, every pattern that matches a substring of
//! `.word.` contributes its priorities; each inter-letter position keeps the
//! maximum, and odd values mark permitted breaks.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

pub const DEFAULT_LEFT_MIN: usize = 2;
pub const DEFAULT_RIGHT_MIN: usize = 3;

/// US-English TeX hyphenation patterns.
pub const EN_US_PATTERNS: &str = include_str!("../../data/hyph-en-us.pat.txt");
/// Exception words accompanying [`EN_US_PATTERNS`].
pub const EN_US_EXCEPTIONS: &str = include_str!("../../data/hyph-en-us.hyp.txt");

#[derive(Debug, Clone, Default)]
struct TrieNode {
    /// Sorted by character.
    children: Vec<(char, u32)>,
    levels: Option<u32>,
}

impl TrieNode {
    fn child(&self, c: char) -> Option<u32> {
        self.children
            .binary_search_by_key(&c, |&(k, _)| k)
            .ok()
            .map(|i| self.children[i].1)
    }
}

/// Compiled patterns plus exceptions. Immutable once loaded.
#[derive(Debug, Clone)]
pub struct PatternSet {
    nodes: Vec<TrieNode>,
    levels: Vec<Vec<u8>>,
    exceptions: BTreeMap<String, Vec<usize>>,
    left_min: usize,
    right_min: usize,
}

fn is_pattern_letter(c: char) -> bool {
    c.is_alphabetic() || c == '\'' || c == '\u{2019}'
}

fn parse_pattern(token: &str, line: usize) -> Result<(Vec<char>, Vec<u8>)> {
    let err = |message: String| Error::Parse { line, message };
    let mut letters = Vec::new();
    let mut levels = Vec::new();
    let mut pending: Option<u8> = None;
    let count = token.chars().filter(|c| !c.is_ascii_digit()).count();
    for c in token.chars() {
        if let Some(d) = c.to_digit(10) {
            if pending.is_some() {
                return Err(err(format!("`{token}`: priorities are single digits")));
            }
            pending = Some(d as u8);
        } else if c == '.' || is_pattern_letter(c) {
            if c == '.' && !(letters.is_empty() || letters.len() + 1 == count) {
                return Err(err(format!("`{token}`: `.` may only appear at a pattern edge")));
            }
            levels.push(pending.take().unwrap_or(0));
            letters.extend(c.to_lowercase());
        } else {
            return Err(err(format!("`{token}`: unexpected character {c:?}")));
        }
    }
    levels.push(pending.unwrap_or(0));
    if letters.iter().all(|&c| c == '.') {
        return Err(err(format!("`{token}`: pattern has no letters")));
    }
    Ok((letters, levels))
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(i) => &line[..i],
        None => line,
    }
}

impl PatternSet {
    /// Parses a pattern list and an exception list.
    ///
    /// Both inputs are whitespace-separated tokens with `%` comments. Pattern
    /// tokens look like `1ba` or `.ach4`; exception tokens mark every break
    /// with `-`, e.g. `ta-ble`.
    pub fn load(patterns: &str, exceptions: &str, left_min: usize, right_min: usize) -> Result<Self> {
        let mut set = PatternSet {
            nodes: vec![TrieNode::default()],
            levels: Vec::new(),
            exceptions: BTreeMap::new(),
            left_min,
            right_min,
        };
        for (i, raw) in patterns.lines().enumerate() {
            for token in strip_comment(raw).split_whitespace() {
                let (letters, levels) = parse_pattern(token, i + 1)?;
                if !set.insert(&letters, levels) {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: format!("duplicate pattern `{token}`"),
                    });
                }
            }
        }
        for (i, raw) in exceptions.lines().enumerate() {
            for token in strip_comment(raw).split_whitespace() {
                let (key, breaks) = parse_exception(token, i + 1)?;
                set.exceptions.insert(key, breaks);
            }
        }
        Ok(set)
    }

    pub fn with_defaults(patterns: &str, exceptions: &str) -> Result<Self> {
        Self::load(patterns, exceptions, DEFAULT_LEFT_MIN, DEFAULT_RIGHT_MIN)
    }

    /// The bundled US-English patterns with default margins.
    pub fn english() -> Self {
        Self::with_defaults(EN_US_PATTERNS, EN_US_EXCEPTIONS).expect("bundled patterns parse")
    }

    fn insert(&mut self, letters: &[char], levels: Vec<u8>) -> bool {
        let mut node = 0usize;
        for &c in letters {
            node = match self.nodes[node].child(c) {
                Some(n) => n as usize,
                None => {
                    let id = self.nodes.len() as u32;
                    self.nodes.push(TrieNode::default());
                    let children = &mut self.nodes[node].children;
                    let at = children.partition_point(|&(k, _)| k < c);
                    children.insert(at, (c, id));
                    id as usize
                }
            };
        }
        if self.nodes[node].levels.is_some() {
            return false;
        }
        self.nodes[node].levels = Some(self.levels.len() as u32);
        self.levels.push(levels);
        true
    }

    pub fn pattern_count(&self) -> usize {
        self.levels.len()
    }

    pub fn exception_count(&self) -> usize {
        self.exceptions.len()
    }

    pub fn left_min(&self) -> usize {
        self.left_min
    }

    pub fn right_min(&self) -> usize {
        self.right_min
    }

    /// Permitted break offsets (in characters) inside a run of letters.
    /// Offset `b` means a break between characters `b - 1` and `b`.
    pub fn break_points(&self, letters: &str) -> Vec<usize> {
        let lower: Vec<char> = letters
            .chars()
            .map(|c| c.to_lowercase().next().unwrap_or(c))
            .collect();
        let len = lower.len();
        if len < self.left_min + self.right_min {
            return Vec::new();
        }
        let hi = len - self.right_min;
        let key: String = lower.iter().collect();
        if let Some(breaks) = self.exceptions.get(&key) {
            return breaks
                .iter()
                .copied()
                .filter(|&b| b >= self.left_min && b <= hi)
                .collect();
        }
        let mut wrapped = Vec::with_capacity(len + 2);
        wrapped.push('.');
        wrapped.extend_from_slice(&lower);
        wrapped.push('.');
        let mut priority = vec![0u8; wrapped.len() + 1];
        for start in 0..wrapped.len() {
            let mut node = 0usize;
            for &c in &wrapped[start..] {
                match self.nodes[node].child(c) {
                    Some(n) => node = n as usize,
                    None => break,
                }
                if let Some(li) = self.nodes[node].levels {
                    for (k, &v) in self.levels[li as usize].iter().enumerate() {
                        let p = &mut priority[start + k];
                        if v > *p {
                            *p = v;
                        }
                    }
                }
            }
        }
        // priority[i] sits before wrapped[i]; a word break at b is before wrapped[b + 1].
        (self.left_min.max(1)..=hi)
            .filter(|&b| priority[b + 1] % 2 == 1)
            .collect()
    }
}

fn parse_exception(token: &str, line: usize) -> Result<(String, Vec<usize>)> {
    let mut key = String::new();
    let mut breaks = Vec::new();
    let mut count = 0usize;
    let mut last_was_break = true;
    for c in token.chars() {
        if c == '-' {
            if last_was_break {
                return Err(Error::Parse {
                    line,
                    message: format!("exception `{token}` has an empty segment"),
                });
            }
            breaks.push(count);
            last_was_break = true;
        } else {
            key.extend(c.to_lowercase().next());
            count += 1;
            last_was_break = false;
        }
    }
    if last_was_break {
        return Err(Error::Parse {
            line,
            message: format!("exception `{token}` has an empty segment"),
        });
    }
    Ok((key, breaks))
}
