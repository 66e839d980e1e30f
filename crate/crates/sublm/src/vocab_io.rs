//! Vocabulary directories written by `build-vocab` and read by the other verbs.
//!
//! - `words.tsv`: `id<TAB>token<TAB>freq`, id order.
//! - `subwords.tsv`: the same for subwords, `<pad>` and `<unk_sub>` first.
//! - `segments.tsv`: `word<TAB>space-separated parts`, id order.
//! - `meta.txt`: `n`, segmenter mode and both hashes.

use std::fmt::Write as _;
use std::path::Path;

use sublm_core::compose::VocabShape;
use sublm_core::vocab::{SubwordTable, Vocabularies};

use crate::error::{read_to_string, write, CliError, CliResult};

fn bad(file: &Path, line: usize, m: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}:{line}: {m}", file.display()))
}

pub fn shape(vocabs: &Vocabularies) -> VocabShape {
    VocabShape {
        words: vocabs.word_count(),
        subwords: vocabs.subword_count(),
        n: vocabs.max_subwords(),
    }
}

pub fn table(vocabs: &Vocabularies) -> SubwordTable {
    SubwordTable::from_vocabs(vocabs).0
}

fn dump<'a>(rows: impl Iterator<Item = (usize, &'a str, u64)>) -> String {
    let mut s = String::new();
    for (i, t, c) in rows {
        let _ = writeln!(s, "{i}\t{t}\t{c}");
    }
    s
}

pub fn save(dir: &Path, vocabs: &Vocabularies, mode: &str) -> CliResult<()> {
    write(&dir.join("words.tsv"), dump(vocabs.words()))?;
    write(&dir.join("subwords.tsv"), dump(vocabs.subwords()))?;
    let mut seg = String::new();
    for (i, w, _) in vocabs.words() {
        let parts: Vec<&str> = vocabs.segments(i).iter().map(|&s| vocabs.subword(s)).collect();
        let _ = writeln!(seg, "{w}\t{}", parts.join(" "));
    }
    write(&dir.join("segments.tsv"), seg)?;
    let meta = format!(
        "n = {}\nmode = {mode}\nword_hash = {}\nsubword_hash = {}\n",
        vocabs.max_subwords(),
        vocabs.word_hash(),
        vocabs.subword_hash()
    );
    write(&dir.join("meta.txt"), meta)
}

fn read_dump(path: &Path) -> CliResult<Vec<(String, u64)>> {
    let text = read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let cols: Vec<&str> = line.split('\t').collect();
        let [id, tok, freq] = cols[..] else {
            return Err(bad(path, i + 1, "expected id, token and frequency"));
        };
        if id.parse::<usize>().ok() != Some(out.len()) {
            return Err(bad(path, i + 1, format!("expected id {}, got `{id}`", out.len())));
        }
        let freq = freq.parse().map_err(|_| bad(path, i + 1, format!("bad frequency `{freq}`")))?;
        out.push((tok.to_string(), freq));
    }
    Ok(out)
}

/// Reloads a vocabulary directory and checks it against its own metadata.
pub fn load(dir: &Path) -> CliResult<Vocabularies> {
    let words = read_dump(&dir.join("words.tsv"))?;
    let seg_path = dir.join("segments.tsv");
    let seg_text = read_to_string(&seg_path)?;
    let segs: Vec<(&str, Vec<String>)> = seg_text
        .lines()
        .enumerate()
        .map(|(i, l)| {
            let (w, p) = l.split_once('\t').ok_or_else(|| bad(&seg_path, i + 1, "expected word and parts"))?;
            Ok((w, p.split(' ').map(str::to_string).collect()))
        })
        .collect::<CliResult<_>>()?;
    if segs.len() != words.len() {
        return Err(bad(&seg_path, segs.len(), format!("{} segmentations for {} words", segs.len(), words.len())));
    }
    let meta_path = dir.join("meta.txt");
    let meta = read_to_string(&meta_path)?;
    let field = |key: &str| {
        meta.lines()
            .filter_map(|l| l.split_once(" = "))
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v.trim().to_string())
            .ok_or_else(|| bad(&meta_path, 0, format!("missing `{key}`")))
    };
    let n: usize = field("n")?.parse().map_err(|_| bad(&meta_path, 0, "bad `n`"))?;

    let mut rows = Vec::with_capacity(words.len());
    for (i, ((word, freq), (sw, parts))) in words.into_iter().zip(segs).enumerate() {
        if word != sw {
            return Err(bad(&seg_path, i + 1, format!("`{sw}` where words.tsv has `{word}`")));
        }
        rows.push((word, freq, parts));
    }
    let vocabs = Vocabularies::from_parts(rows, Some(n))?;

    let subs = read_dump(&dir.join("subwords.tsv"))?;
    let rebuilt: Vec<(String, u64)> = vocabs.subwords().map(|(_, s, c)| (s.to_string(), c)).collect();
    if subs != rebuilt {
        return Err(CliError::VocabMismatch(format!(
            "{} disagrees with the subwords implied by segments.tsv",
            dir.join("subwords.tsv").display()
        )));
    }
    for (key, actual) in [("word_hash", vocabs.word_hash()), ("subword_hash", vocabs.subword_hash())] {
        if field(key)? != actual {
            return Err(CliError::VocabMismatch(format!("{} `{key}` does not match the files", meta_path.display())));
        }
    }
    Ok(vocabs)
}
