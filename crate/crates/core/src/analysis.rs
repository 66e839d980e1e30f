//! Model-comparison measures over per-token probabilities and embeddings.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};
use num_traits::Float;

use crate::{Error, Result};

/// Probability one model gave the correct word at one test position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenRecord {
    pub position: usize,
    pub word_id: usize,
    pub prob: f64,
    /// Training count of the word.
    pub freq: u64,
}

/// Builds records from an evaluation's per-token probabilities.
pub fn token_records(targets: &[usize], probs: &[f64], word_freq: &[u64]) -> Result<Vec<TokenRecord>> {
    if targets.len() != probs.len() {
        return Err(Error::dim("token records", &[targets.len()], &[probs.len()]));
    }
    targets
        .iter()
        .zip(probs)
        .enumerate()
        .map(|(position, (&word_id, &prob))| {
            let freq = *word_freq.get(word_id).ok_or(Error::Index {
                what: "word id",
                index: word_id,
                bound: word_freq.len(),
            })?;
            Ok(TokenRecord {
                position,
                word_id,
                prob,
                freq,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharedErrors {
    pub p_star: f64,
    /// `|E_a ∩ E_b| / |E_a ∪ E_b|`; 1 when both sets are empty.
    pub frac_shared: f64,
    /// Fraction of tokens that are errors of each model.
    pub err_a: f64,
    pub err_b: f64,
}

fn check_aligned(a: &[TokenRecord], b: &[TokenRecord]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Mismatch(format!("{} records versus {}", a.len(), b.len())));
    }
    for (x, y) in a.iter().zip(b) {
        if x.position != y.position || x.word_id != y.word_id {
            return Err(Error::Mismatch(format!(
                "position {} / word {} does not line up with position {} / word {}",
                x.position, x.word_id, y.position, y.word_id
            )));
        }
    }
    Ok(())
}

/// Errors are tokens whose correct word got probability below `p_star`.
pub fn shared_errors(a: &[TokenRecord], b: &[TokenRecord], p_star: f64) -> Result<SharedErrors> {
    check_aligned(a, b)?;
    let (mut both, mut either, mut ea, mut eb) = (0usize, 0usize, 0usize, 0usize);
    for (x, y) in a.iter().zip(b) {
        let (u, v) = (x.prob < p_star, y.prob < p_star);
        ea += u as usize;
        eb += v as usize;
        both += (u && v) as usize;
        either += (u || v) as usize;
    }
    let total = a.len().max(1) as f64;
    Ok(SharedErrors {
        p_star,
        frac_shared: if either == 0 { 1.0 } else { both as f64 / either as f64 },
        err_a: ea as f64 / total,
        err_b: eb as f64 / total,
    })
}

pub fn shared_errors_sweep(a: &[TokenRecord], b: &[TokenRecord], grid: &[f64]) -> Result<Vec<SharedErrors>> {
    grid.iter().map(|&p| shared_errors(a, b, p)).collect()
}

/// `0.1, 0.2, …, 0.9`.
pub fn default_p_star_grid() -> Vec<f64> {
    (1..10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyBin {
    /// Inclusive lower and exclusive upper training-count bound.
    pub low: u64,
    pub high: u64,
    pub tokens: usize,
    pub nll_sum: f64,
}

impl FrequencyBin {
    pub fn perplexity(&self) -> f64 {
        if self.tokens == 0 {
            f64::NAN
        } else {
            libm::exp(self.nll_sum / self.tokens as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyBreakdown {
    pub bins: Vec<FrequencyBin>,
    pub tokens: usize,
    pub nll_sum: f64,
}

impl FrequencyBreakdown {
    pub fn perplexity(&self) -> f64 {
        libm::exp(self.nll_sum / self.tokens as f64)
    }
}

/// Edges `0, 1, 10, 100, …` up to the first power of ten above `max_freq`.
pub fn default_frequency_edges(max_freq: u64) -> Vec<u64> {
    let mut edges = vec![0, 1];
    let mut e = 1u64;
    while e <= max_freq {
        e = e.saturating_mul(10);
        edges.push(e);
        if e == u64::MAX {
            break;
        }
    }
    edges
}

/// Per-bin perplexity with bins `[edges[i], edges[i+1])`.
pub fn ppl_by_frequency(records: &[TokenRecord], edges: &[u64]) -> Result<FrequencyBreakdown> {
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!("bin edges {edges:?} must be strictly increasing, at least two")));
    }
    let mut bins: Vec<FrequencyBin> = edges
        .windows(2)
        .map(|w| FrequencyBin {
            low: w[0],
            high: w[1],
            tokens: 0,
            nll_sum: 0.0,
        })
        .collect();
    let mut nll_sum = 0.0;
    for r in records {
        if !(r.prob > 0.0 && r.prob <= 1.0) {
            return Err(Error::Contract(format!("probability {} at position {} outside (0, 1]", r.prob, r.position)));
        }
        let i = edges.partition_point(|&e| e <= r.freq);
        if i == 0 || i == edges.len() {
            return Err(Error::Config(format!(
                "training frequency {} at position {} falls outside the bins",
                r.freq, r.position
            )));
        }
        let nll = -libm::log(r.prob);
        bins[i - 1].tokens += 1;
        bins[i - 1].nll_sum += nll;
        nll_sum += nll;
    }
    Ok(FrequencyBreakdown {
        bins,
        tokens: records.len(),
        nll_sum,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaSummary {
    /// Descending eigenvalues of the standardized covariance.
    pub eigenvalues: Vec<f64>,
    /// Dimensions dropped for having zero variance.
    pub dropped: Vec<usize>,
    /// `(threshold, components)` pairs.
    pub counts: Vec<(f64, usize)>,
}

/// Z-scores each column, eigendecomposes the covariance, and reports the
/// smallest number of components whose explained variance reaches each
/// threshold. `rows` is row-major `n × d`.
pub fn pca_component_counts(rows: &[f64], d: usize, thresholds: &[f64]) -> Result<PcaSummary> {
    if d < 2 || rows.is_empty() || rows.len() % d != 0 {
        return Err(Error::dim("pca", &[rows.len()], &[d]));
    }
    if let Some(&t) = thresholds.iter().find(|&&t| !(t > 0.0 && t < 1.0)) {
        return Err(Error::Config(format!("variance threshold {t} outside (0, 1)")));
    }
    let n = rows.len() / d;
    if n < 2 {
        return Err(Error::Contract("pca needs at least two rows".into()));
    }
    let mut keep = Vec::with_capacity(d);
    let mut dropped = Vec::new();
    let mut stats = Vec::with_capacity(d);
    for j in 0..d {
        let mean = (0..n).map(|i| rows[i * d + j]).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (rows[i * d + j] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        if var <= 1e-300 || !var.is_finite() {
            dropped.push(j);
        } else {
            keep.push(j);
            stats.push((mean, Float::sqrt(var)));
        }
    }
    if !dropped.is_empty() {
        log::warn!("pca: dropping {} zero-variance dimension(s)", dropped.len());
    }
    let k = keep.len();
    if k == 0 {
        return Err(Error::Contract("every dimension has zero variance".into()));
    }
    let z = DMatrix::from_fn(n, k, |i, c| {
        let (m, s) = stats[c];
        (rows[i * d + keep[c]] - m) / s
    });
    let cov = (z.transpose() * &z) / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
    let trace: f64 = eigenvalues.iter().sum();
    let counts = thresholds
        .iter()
        .map(|&t| {
            let mut acc = 0.0;
            let mut count = eigenvalues.len();
            for (i, &l) in eigenvalues.iter().enumerate() {
                acc += l.max(0.0) / trace;
                if acc >= t - 1e-12 {
                    count = i + 1;
                    break;
                }
            }
            (t, count)
        })
        .collect();
    Ok(PcaSummary {
        eigenvalues,
        dropped,
        counts,
    })
}
