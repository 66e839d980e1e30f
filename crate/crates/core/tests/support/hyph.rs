//! Brute-force hyphenation oracle and a 10k-word test corpus.
#![allow(dead_code)]

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sublm_core::segment::EN_US_EXCEPTIONS;

/// Applies every pattern at every offset with plain string comparison.
pub struct Oracle {
    patterns: Vec<(Vec<char>, Vec<u8>)>,
    exceptions: HashMap<String, Vec<usize>>,
    left_min: usize,
    right_min: usize,
}

impl Oracle {
    pub fn new(patterns: &str, exceptions: &str) -> Self {
        let mut ps = Vec::new();
        for line in patterns.lines() {
            let line = line.split('%').next().unwrap();
            for tok in line.split_whitespace() {
                let mut letters = Vec::new();
                let mut levels = vec![0u8];
                for c in tok.chars() {
                    match c.to_digit(10) {
                        Some(d) => *levels.last_mut().unwrap() = d as u8,
                        None => {
                            letters.push(c);
                            levels.push(0);
                        }
                    }
                }
                ps.push((letters, levels));
            }
        }
        let mut ex = HashMap::new();
        for tok in exceptions.split_whitespace() {
            let mut breaks = Vec::new();
            let mut n = 0;
            for c in tok.chars() {
                if c == '-' {
                    breaks.push(n);
                } else {
                    n += 1;
                }
            }
            ex.insert(tok.replace('-', "").to_lowercase(), breaks);
        }
        Oracle {
            patterns: ps,
            exceptions: ex,
            left_min: 2,
            right_min: 3,
        }
    }

    pub fn breaks(&self, run: &str) -> Vec<usize> {
        let lower: Vec<char> = run.chars().flat_map(char::to_lowercase).collect();
        let len = lower.len();
        if len < self.left_min + self.right_min {
            return vec![];
        }
        let allowed = |b: &usize| *b >= self.left_min && *b <= len - self.right_min;
        if let Some(b) = self.exceptions.get(&lower.iter().collect::<String>()) {
            return b.iter().copied().filter(allowed).collect();
        }
        let mut w = vec!['.'];
        w.extend(&lower);
        w.push('.');
        let mut pr = vec![0u8; w.len() + 1];
        for (letters, levels) in &self.patterns {
            if letters.len() > w.len() {
                continue;
            }
            for s in 0..=w.len() - letters.len() {
                if w[s..s + letters.len()] == letters[..] {
                    for (k, &v) in levels.iter().enumerate() {
                        pr[s + k] = pr[s + k].max(v);
                    }
                }
            }
        }
        (1..len).filter(|b| pr[b + 1] % 2 == 1).filter(allowed).collect()
    }

    pub fn parts(&self, word: &str) -> Vec<String> {
        let chars: Vec<char> = word.chars().collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let letter = chars[i].is_alphabetic();
            let mut j = i;
            while j < chars.len() && chars[j].is_alphabetic() == letter {
                j += 1;
            }
            let run: String = chars[i..j].iter().collect();
            if letter {
                let mut last = 0;
                let rc: Vec<char> = run.chars().collect();
                for b in self.breaks(&run) {
                    out.push(rc[last..b].iter().collect());
                    last = b;
                }
                out.push(rc[last..].iter().collect());
            } else {
                out.push(run);
            }
            i = j;
        }
        out
    }
}

pub const REAL_WORDS: &str = "the of and to in is that for it as was with be by on not he this are or his \
from at which but have an they you were her she there been one all we their its has more would \
when will other no if out so said what up about into than them can only time new some could these \
two may first then do any like my now over such our man me even most made after also did many \
before must through back years where much your way well down should because each just those \
people how too little state good very make world still own see men work long get here between \
both life being under never day same another know while last might us great old year off come \
since against go came right used take three hyphenation computer algorithm language syllable \
character vocabulary perplexity dictionary information morphology international education \
president government microphone photography understanding university";

pub fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    const ONSETS: [&str; 14] = ["", "b", "c", "d", "t", "tr", "st", "pl", "ch", "m", "n", "qu", "gr", "sh"];
    const NUCLEI: [&str; 8] = ["a", "e", "i", "o", "u", "ou", "ea", "y"];
    const CODAS: [&str; 9] = ["", "", "n", "r", "s", "t", "ng", "ck", "x"];
    let syllables = rng.gen_range(1..=5);
    let mut w = String::new();
    for _ in 0..syllables {
        w += ONSETS[rng.gen_range(0..ONSETS.len())];
        w += NUCLEI[rng.gen_range(0..NUCLEI.len())];
        w += CODAS[rng.gen_range(0..CODAS.len())];
    }
    if rng.gen_bool(0.05) {
        w = w[..1].to_uppercase() + &w[1..];
    }
    if rng.gen_bool(0.03) {
        w += "'s";
    }
    w
}

pub fn corpus() -> Vec<String> {
    let mut words: Vec<String> = REAL_WORDS.split_whitespace().map(String::from).collect();
    words.extend(EN_US_EXCEPTIONS.split_whitespace().map(|t| t.replace('-', "")));
    words.extend(["n't", "1990s", "u.s.", "mid-1980s", "$", "e-mail"].map(String::from));
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    while words.len() < 10_000 {
        words.push(pseudo_word(&mut rng));
    }
    words
}
