//! Word and subword vocabularies, corpus encoding and BPTT batching.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use sha2::{Digest, Sha256};

use crate::segment::{Segmenter, EOS, UNK};
use crate::{Error, Result};

pub const PAD: &str = "<pad>";
pub const UNK_SUB: &str = "<unk_sub>";
pub const PAD_ID: usize = 0;
pub const UNK_SUB_ID: usize = 1;

/// Word vocabulary `W` (ids ranked by training frequency) and subword
/// vocabulary `S`, plus the segmentation of every word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabularies {
    words: Vec<String>,
    word_index: BTreeMap<String, usize>,
    word_freq: Vec<u64>,
    subwords: Vec<String>,
    subword_index: BTreeMap<String, usize>,
    subword_freq: Vec<u64>,
    segments: Vec<Vec<usize>>,
    max_subwords: usize,
}

fn lines_tokens(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .flat_map(|line| line.split_whitespace().chain(core::iter::once(EOS)))
}

/// Builds the vocabularies from a tokenized training split.
///
/// Every line ends with an implicit `<eos>`. Word ids are assigned by
/// decreasing training count (ties broken lexicographically), so id order is
/// frequency rank. With `word_cap`, only the `word_cap` most frequent entries
/// are kept (`<unk>` and `<eos>` always among them) and the remaining counts
/// fold into `<unk>`. `subword_cap`, when set, fixes `n` below the observed
/// maximum; longer words are truncated at encoding time.
pub fn build_vocabs(
    train_text: &str,
    segmenter: &Segmenter,
    word_cap: Option<usize>,
    subword_cap: Option<usize>,
) -> Result<Vocabularies> {
    if train_text.split_whitespace().next().is_none() {
        return Err(Error::EmptyCorpus);
    }
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for tok in lines_tokens(train_text) {
        *counts.entry(tok).or_insert(0) += 1;
    }
    counts.entry(UNK).or_insert(0);
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    if let Some(cap) = word_cap {
        if cap < 2 {
            return Err(Error::Config(format!("word cap {cap} cannot hold <unk> and <eos>")));
        }
        if ranked.len() > cap {
            let mut kept: Vec<(&str, u64)> = Vec::with_capacity(cap);
            let mut folded = 0u64;
            let mut unk = 0u64;
            let mut room = cap - 2;
            for (w, c) in ranked {
                if w == UNK {
                    unk += c;
                } else if w == EOS {
                    kept.push((w, c));
                } else if room > 0 {
                    kept.push((w, c));
                    room -= 1;
                } else {
                    folded += c;
                }
            }
            kept.push((UNK, unk + folded));
            kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
            ranked = kept;
        }
    }

    let segmented: Vec<(String, u64, Vec<String>)> = ranked
        .iter()
        .map(|&(w, c)| (w.to_string(), c, segmenter.segment(w).parts))
        .collect();
    Vocabularies::from_parts(segmented, subword_cap)
}

impl Vocabularies {
    /// Assembles vocabularies from `(word, count, parts)` rows in id order.
    pub fn from_parts(rows: Vec<(String, u64, Vec<String>)>, subword_cap: Option<usize>) -> Result<Self> {
        let mut words = Vec::with_capacity(rows.len());
        let mut word_index = BTreeMap::new();
        let mut word_freq = Vec::with_capacity(rows.len());
        let mut subwords = vec![PAD.to_string(), UNK_SUB.to_string()];
        let mut subword_index: BTreeMap<String, usize> = BTreeMap::new();
        subword_index.insert(PAD.to_string(), PAD_ID);
        subword_index.insert(UNK_SUB.to_string(), UNK_SUB_ID);
        let mut subword_freq = vec![0u64, 0u64];
        let mut segments = Vec::with_capacity(rows.len());
        let mut longest = 0;

        for (word, count, parts) in rows {
            if parts.is_empty() || parts.concat() != word {
                return Err(Error::Contract(format!("segmentation {parts:?} does not spell `{word}`")));
            }
            if word_index.insert(word.clone(), words.len()).is_some() {
                return Err(Error::Contract(format!("duplicate word `{word}`")));
            }
            let ids: Vec<usize> = parts
                .into_iter()
                .map(|p| {
                    let next = subwords.len();
                    let id = *subword_index.entry(p.clone()).or_insert(next);
                    if id == next {
                        subwords.push(p);
                        subword_freq.push(0);
                    }
                    subword_freq[id] += count;
                    id
                })
                .collect();
            longest = longest.max(ids.len());
            segments.push(ids);
            words.push(word);
            word_freq.push(count);
        }
        for special in [UNK, EOS] {
            if !word_index.contains_key(special) {
                return Err(Error::Contract(format!("word vocabulary lacks `{special}`")));
            }
        }
        let max_subwords = subword_cap.map_or(longest, |cap| cap.min(longest)).max(1);
        Ok(Vocabularies {
            words,
            word_index,
            word_freq,
            subwords,
            subword_index,
            subword_freq,
            segments,
            max_subwords,
        })
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn subword_count(&self) -> usize {
        self.subwords.len()
    }

    /// `n`: the longest word in subwords (after any cap).
    pub fn max_subwords(&self) -> usize {
        self.max_subwords
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn subword(&self, id: usize) -> &str {
        &self.subwords[id]
    }

    pub fn word_id(&self, word: &str) -> Option<usize> {
        self.word_index.get(word).copied()
    }

    pub fn subword_id(&self, subword: &str) -> Option<usize> {
        self.subword_index.get(subword).copied()
    }

    pub fn unk_id(&self) -> usize {
        self.word_index[UNK]
    }

    pub fn eos_id(&self) -> usize {
        self.word_index[EOS]
    }

    pub fn word_freq(&self) -> &[u64] {
        &self.word_freq
    }

    pub fn subword_freq(&self) -> &[u64] {
        &self.subword_freq
    }

    /// Full (untruncated) subword ids of word `id`.
    pub fn segments(&self, id: usize) -> &[usize] {
        &self.segments[id]
    }

    /// Training token count `K`.
    pub fn token_count(&self) -> u64 {
        self.word_freq.iter().sum()
    }

    pub fn words(&self) -> impl Iterator<Item = (usize, &str, u64)> {
        self.words
            .iter()
            .zip(&self.word_freq)
            .enumerate()
            .map(|(i, (w, &c))| (i, w.as_str(), c))
    }

    pub fn subwords(&self) -> impl Iterator<Item = (usize, &str, u64)> {
        self.subwords
            .iter()
            .zip(&self.subword_freq)
            .enumerate()
            .map(|(i, (w, &c))| (i, w.as_str(), c))
    }

    /// SHA-256 over words and their counts, hex encoded.
    pub fn word_hash(&self) -> String {
        let mut h = Sha256::new();
        for (w, c) in self.words.iter().zip(&self.word_freq) {
            h.update(w.as_bytes());
            h.update([0u8]);
            h.update(c.to_le_bytes());
        }
        hex(&h.finalize())
    }

    /// SHA-256 over the subword inventory and every word's segmentation.
    pub fn subword_hash(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.subwords {
            h.update(s.as_bytes());
            h.update([0u8]);
        }
        h.update((self.max_subwords as u64).to_le_bytes());
        for seg in &self.segments {
            h.update((seg.len() as u64).to_le_bytes());
            for &id in seg {
                h.update((id as u64).to_le_bytes());
            }
        }
        hex(&h.finalize())
    }

    /// Token ids for a tokenized text, `<eos>` appended per line and
    /// out-of-vocabulary words mapped to `<unk>`.
    pub fn encode_text(&self, text: &str) -> Vec<usize> {
        let unk = self.unk_id();
        lines_tokens(text)
            .map(|t| self.word_id(t).unwrap_or(unk))
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<&str> {
        ids.iter().map(|&i| self.words[i].as_str()).collect()
    }
}

fn hex(bytes: &[u8]) -> String {
    use core::fmt::Write;
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Word-id streams per split plus the padded `|W| × n` subword matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedCorpus {
    pub splits: Vec<Vec<usize>>,
    pub subword_table: SubwordTable,
    pub truncated_words: usize,
}

/// Row `w` holds the first `lengths[w]` subword ids of word `w`, left
/// aligned, the rest filled with `<pad>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubwordTable {
    pub n: usize,
    pub ids: Vec<usize>,
    pub lengths: Vec<usize>,
}

impl SubwordTable {
    pub fn from_vocabs(vocabs: &Vocabularies) -> (Self, usize) {
        let n = vocabs.max_subwords();
        let mut ids = vec![PAD_ID; vocabs.word_count() * n];
        let mut lengths = Vec::with_capacity(vocabs.word_count());
        let mut truncated = 0;
        for w in 0..vocabs.word_count() {
            let seg = vocabs.segments(w);
            if seg.len() > n {
                truncated += 1;
            }
            let len = seg.len().min(n);
            ids[w * n..w * n + len].copy_from_slice(&seg[..len]);
            lengths.push(len);
        }
        (SubwordTable { n, ids, lengths }, truncated)
    }

    pub fn row(&self, word: usize) -> &[usize] {
        &self.ids[word * self.n..(word + 1) * self.n]
    }

    pub fn words(&self) -> usize {
        self.lengths.len()
    }
}

/// Encodes each text into a word-id stream. Words with more than `n`
/// subwords keep their first `n`; the number of such words is reported.
pub fn encode_corpus(texts: &[&str], vocabs: &Vocabularies) -> EncodedCorpus {
    let (subword_table, truncated_words) = SubwordTable::from_vocabs(vocabs);
    if truncated_words > 0 {
        log::warn!(
            "{truncated_words} words exceed {} subwords and were truncated",
            subword_table.n
        );
    }
    EncodedCorpus {
        splits: texts.iter().map(|t| vocabs.encode_text(t)).collect(),
        subword_table,
        truncated_words,
    }
}

/// Segments with `segmenter` and builds vocabularies and the encoded corpus
/// in one go; `texts[0]` is the training split.
pub fn prepare(
    texts: &[&str],
    segmenter: &Segmenter,
    word_cap: Option<usize>,
    subword_cap: Option<usize>,
) -> Result<(Vocabularies, EncodedCorpus)> {
    let train = texts.first().ok_or(Error::EmptyCorpus)?;
    let vocabs = build_vocabs(train, segmenter, word_cap, subword_cap)?;
    let corpus = encode_corpus(texts, &vocabs);
    Ok((vocabs, corpus))
}

/// `b × t` window of a lane-major stream layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub batch: usize,
    pub steps: usize,
    /// Row-major `batch × steps`.
    pub inputs: Vec<usize>,
    pub targets: Vec<usize>,
    /// `false` only for the first window, where recurrent state starts at zero.
    pub continues: bool,
}

impl Batch {
    pub fn input(&self, lane: usize, step: usize) -> usize {
        self.inputs[lane * self.steps + step]
    }

    pub fn target(&self, lane: usize, step: usize) -> usize {
        self.targets[lane * self.steps + step]
    }
}

/// Splits `stream` into `batch` contiguous lanes and walks them `steps` at a time.
#[derive(Debug, Clone)]
pub struct BatchStream<'a> {
    stream: &'a [usize],
    batch: usize,
    steps: usize,
    lane_len: usize,
    next: usize,
    total: usize,
}

pub fn batch_stream(stream: &[usize], batch: usize, steps: usize) -> Result<BatchStream<'_>> {
    if batch == 0 || steps == 0 {
        return Err(Error::Config("batch size and BPTT steps must be positive".into()));
    }
    let required = batch * (steps + 1);
    if stream.len() < required {
        return Err(Error::StreamTooShort {
            len: stream.len(),
            required,
        });
    }
    let lane_len = stream.len() / batch;
    Ok(BatchStream {
        stream,
        batch,
        steps,
        lane_len,
        next: 0,
        total: (lane_len - 1) / steps,
    })
}

impl BatchStream<'_> {
    pub fn batch_count(&self) -> usize {
        self.total
    }
}

impl Iterator for BatchStream<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.next >= self.total {
            return None;
        }
        let (b, t) = (self.batch, self.steps);
        let mut inputs = Vec::with_capacity(b * t);
        let mut targets = Vec::with_capacity(b * t);
        for lane in 0..b {
            let start = lane * self.lane_len + self.next * t;
            inputs.extend_from_slice(&self.stream[start..start + t]);
            targets.extend_from_slice(&self.stream[start + 1..start + t + 1]);
        }
        let batch = Batch {
            batch: b,
            steps: t,
            inputs,
            targets,
            continues: self.next > 0,
        };
        self.next += 1;
        Some(batch)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.total - self.next;
        (left, Some(left))
    }
}

impl ExactSizeIterator for BatchStream<'_> {}
