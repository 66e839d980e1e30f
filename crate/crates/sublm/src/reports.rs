//! Tab-separated reports and aligned text tables.

use std::fmt::Write as _;

use sublm_core::analysis::{FrequencyBreakdown, PcaSummary, SharedErrors, TokenRecord};
use sublm_core::search::TrialResult;
use sublm_core::train::EpochLog;

/// One line per epoch: `epoch<TAB>lr<TAB>train_ppl<TAB>val_ppl`.
pub fn training_log(history: &[EpochLog]) -> String {
    let mut s = String::new();
    for e in history {
        let _ = writeln!(s, "{}\t{}\t{}\t{}", e.epoch, e.lr, e.train_ppl, e.val_ppl);
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub model: String,
    pub split: String,
    pub tokens: usize,
    pub ppl: f64,
    pub params: usize,
    /// Omitted when timing is disabled.
    pub tokens_per_sec: Option<f64>,
}

fn fmt_rate(r: Option<f64>) -> String {
    r.map_or_else(|| "-".into(), |r| format!("{r:.1}"))
}

pub fn eval_tsv(rows: &[EvalRow]) -> String {
    let mut s = String::from("model\tsplit\ttokens\tppl\tparams\ttokens_per_sec\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.model,
            r.split,
            r.tokens,
            r.ppl,
            r.params,
            fmt_rate(r.tokens_per_sec)
        );
    }
    s
}

/// Rows as left-aligned text columns.
pub fn aligned(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut s = String::new();
    let mut line = |cells: &mut dyn Iterator<Item = &str>| {
        let parts: Vec<String> = cells.zip(&widths).map(|(c, &w)| format!("{c:<w$}")).collect();
        let _ = writeln!(s, "{}", parts.join("  ").trim_end());
    };
    line(&mut header.iter().copied());
    for r in rows {
        line(&mut r.iter().map(String::as_str));
    }
    s
}

pub fn eval_text(rows: &[EvalRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                r.split.clone(),
                r.tokens.to_string(),
                format!("{:.2}", r.ppl),
                r.params.to_string(),
                fmt_rate(r.tokens_per_sec),
            ]
        })
        .collect();
    aligned(&["model", "split", "tokens", "ppl", "params", "tokens/sec"], &body)
}

pub fn probability_records(records: &[TokenRecord]) -> String {
    let mut s = String::from("position\tword_id\tprob\n");
    for r in records {
        let _ = writeln!(s, "{}\t{}\t{}", r.position, r.word_id, r.prob);
    }
    s
}

pub fn shared_errors_tsv(model_a: &str, model_b: &str, sweep: &[SharedErrors]) -> String {
    let mut s = String::from("model_a\tmodel_b\tp_star\tfrac_shared\terr_a\terr_b\n");
    for e in sweep {
        let _ = writeln!(s, "{model_a}\t{model_b}\t{}\t{}\t{}\t{}", e.p_star, e.frac_shared, e.err_a, e.err_b);
    }
    s
}

/// Per-bin rows followed by an `all` row; empty bins report `nan`.
pub fn frequency_tsv(model: &str, b: &FrequencyBreakdown) -> String {
    let mut s = String::from("model\tfreq_low\tfreq_high\ttokens\tppl\n");
    for bin in &b.bins {
        let _ = writeln!(s, "{model}\t{}\t{}\t{}\t{}", bin.low, bin.high, bin.tokens, bin.perplexity());
    }
    let _ = writeln!(s, "{model}\tall\tall\t{}\t{}", b.tokens, b.perplexity());
    s
}

pub fn pca_tsv(model: &str, dims: usize, p: &PcaSummary) -> String {
    let mut s = String::from("model\tdims\tdropped\tthreshold\tcomponents\n");
    for &(t, c) in &p.counts {
        let _ = writeln!(s, "{model}\t{dims}\t{}\t{t}\t{c}", p.dropped.len());
    }
    s
}

pub fn trials_tsv(results: &[TrialResult]) -> String {
    let mut s = String::from("rank\ttrial\tseed\td_s\td_hw\td_lm\tparams\tepochs\tval_ppl\n");
    for (rank, r) in results.iter().enumerate() {
        let t = &r.trial;
        let ppl = r.val_ppl.map_or_else(|| "aborted".into(), |p| p.to_string());
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{ppl}",
            rank + 1,
            t.index,
            t.seed,
            t.draw.d_s,
            t.draw.d_hw,
            t.draw.d_lm,
            t.parameters,
            r.epochs
        );
    }
    s
}
