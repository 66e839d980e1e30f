//! Word-level LSTM language model and its softmax losses.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::compute::{Graph, LstmCell, ParamId, ParamStore, Real, Tensor, Var};
use crate::{Error, Result};

/// Recurrent state per layer; always `batch × d_LM`, detached from any graph.
#[derive(Debug, Clone, PartialEq)]
pub struct LmState<T> {
    pub h: Vec<Tensor<T>>,
    pub c: Vec<Tensor<T>>,
}

impl<T: Real> LmState<T> {
    pub fn zeros(layers: usize, batch: usize, hidden: usize) -> Self {
        LmState {
            h: vec![Tensor::zeros(&[batch, hidden]); layers],
            c: vec![Tensor::zeros(&[batch, hidden]); layers],
        }
    }

    pub fn batch(&self) -> usize {
        self.h[0].rows()
    }
}

/// Stacked LSTM layers followed by the output layer `softmax(h·W + b)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordLm {
    pub layers: Vec<LstmCell>,
    pub w_out: ParamId,
    pub b_out: ParamId,
    pub hidden: usize,
    pub vocab: usize,
}

/// Output of [`WordLm::forward`]: per-step top-layer outputs (after output
/// dropout) and the final state nodes.
pub struct LmOutput {
    pub outputs: Vec<Var>,
    pub h: Vec<Var>,
    pub c: Vec<Var>,
}

impl WordLm {
    pub fn register<T: Real>(
        store: &mut ParamStore<T>,
        input: usize,
        hidden: usize,
        vocab: usize,
        depth: usize,
    ) -> Result<Self> {
        if input == 0 || hidden == 0 || vocab == 0 || depth == 0 {
            return Err(Error::Config("language model sizes must be positive".into()));
        }
        let layers = (0..depth)
            .map(|l| {
                let inp = if l == 0 { input } else { hidden };
                LstmCell::register(store, &format!("lm.lstm{l}"), inp, hidden)
            })
            .collect();
        Ok(WordLm {
            layers,
            w_out: store.add("lm.softmax.w", Tensor::zeros(&[hidden, vocab])),
            b_out: store.add("lm.softmax.b", Tensor::zeros(&[vocab])),
            hidden,
            vocab,
        })
    }

    pub fn parameter_count(input: usize, hidden: usize, vocab: usize, depth: usize) -> usize {
        let lstm: usize = (0..depth)
            .map(|l| LstmCell::parameter_count(if l == 0 { input } else { hidden }, hidden))
            .sum();
        lstm + hidden * vocab + vocab
    }

    pub fn set_forget_bias<T: Real>(&self, store: &mut ParamStore<T>, value: f64) {
        for cell in &self.layers {
            cell.set_forget_bias(store, value);
        }
    }

    pub fn zero_state<T: Real>(&self, batch: usize) -> LmState<T> {
        LmState::zeros(self.layers.len(), batch, self.hidden)
    }

    /// Runs the stack over `inputs` (one `batch × d_in` node per step).
    /// Dropout is applied to the output of every layer, i.e. between layers and
    /// before the softmax; the graph's mode decides whether it is active.
    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        inputs: &[Var],
        state: &LmState<T>,
        dropout: f64,
    ) -> Result<LmOutput> {
        if state.h.len() != self.layers.len() {
            return Err(Error::dim(
                "lm state",
                &[state.h.len()],
                &[self.layers.len()],
            ));
        }
        let mut h: Vec<Var> = state.h.iter().map(|t| g.constant(t.clone())).collect();
        let mut c: Vec<Var> = state.c.iter().map(|t| g.constant(t.clone())).collect();
        let mut outputs = Vec::with_capacity(inputs.len());
        for &x in inputs {
            let mut below = x;
            for (l, cell) in self.layers.iter().enumerate() {
                let (hn, cn) = cell.step(g, below, h[l], c[l])?;
                h[l] = hn;
                c[l] = cn;
                below = g.dropout(hn, dropout)?;
            }
            outputs.push(below);
        }
        Ok(LmOutput { outputs, h, c })
    }

    /// Copies the final state out of the graph, cutting its history.
    pub fn detach<T: Real>(&self, g: &Graph<'_, T>, out: &LmOutput) -> LmState<T> {
        LmState {
            h: out.h.iter().map(|&v| g.value(v).clone()).collect(),
            c: out.c.iter().map(|&v| g.value(v).clone()).collect(),
        }
    }

    /// Full-vocabulary logits `h·W + b`.
    pub fn logits<T: Real>(&self, g: &mut Graph<'_, T>, h: Var) -> Result<Var> {
        let (w, b) = (g.param(self.w_out), g.param(self.b_out));
        g.affine(h, w, b)
    }

    /// Mean per-token NLL under the full softmax.
    pub fn full_nll<T: Real>(&self, g: &mut Graph<'_, T>, h: Var, targets: &[usize]) -> Result<Var> {
        let z = self.logits(g, h)?;
        g.softmax_xent(z, targets)
    }

    /// Sampled-softmax estimate of the mean per-token NLL.
    ///
    /// All distinct targets of the batch form the positive part of one shared
    /// candidate set; `sample_count` distinct further ids are drawn from the
    /// proposal excluding those targets. Sampled logits are shifted by
    /// `-log E[c]`, with `E[c] = 1 - (1 - q_c)^T` the probability that `c`
    /// shows up within the `T` draws it took. If the remaining pool is no
    /// larger than `sample_count`, every word is a candidate and the loss is
    /// exactly the full softmax.
    pub fn sampled_nll<T: Real, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'_, T>,
        h: Var,
        targets: &[usize],
        sample_count: usize,
        proposal: Proposal,
        rng: &mut R,
    ) -> Result<Var> {
        if sample_count >= self.vocab {
            log::warn!(
                "sample count {sample_count} is not below the vocabulary size {}; using the full softmax",
                self.vocab
            );
            return self.full_nll(g, h, targets);
        }
        let draw = sample_candidates(targets, self.vocab, sample_count, proposal, rng)?;
        let w = g.param(self.w_out);
        let b = g.param(self.b_out);
        let w_c = g.select_cols(w, &draw.candidates)?;
        let b_row = g.reshape(b, &[1, self.vocab])?;
        let b_c = g.select_cols(b_row, &draw.candidates)?;
        let b_c = g.reshape(b_c, &[draw.candidates.len()])?;
        let z = g.matmul(h, w_c)?;
        let z = g.add_bias(z, b_c)?;
        let corr = g.constant(Tensor::new(&[draw.correction.len()], draw.correction)?);
        let z = g.add_bias(z, corr)?;
        g.softmax_xent(z, &draw.local_targets)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Proposal {
    /// `P(k) = (ln(k+2) - ln(k+1)) / ln(V+1)` over frequency rank `k`.
    LogUniform,
    Uniform,
}

impl Proposal {
    pub fn prob(self, k: usize, v: usize) -> f64 {
        match self {
            Proposal::LogUniform => {
                let k = k as f64;
                (libm::log(k + 2.0) - libm::log(k + 1.0)) / libm::log(v as f64 + 1.0)
            }
            Proposal::Uniform => 1.0 / v as f64,
        }
    }

    pub fn draw<R: Rng + ?Sized>(self, v: usize, rng: &mut R) -> usize {
        match self {
            Proposal::LogUniform => {
                let u: f64 = rng.gen();
                let k = libm::exp(u * libm::log(v as f64 + 1.0)) as usize;
                k.saturating_sub(1).min(v - 1)
            }
            Proposal::Uniform => rng.gen_range(0..v),
        }
    }
}

/// Shared candidate set of one sampled-softmax evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateDraw<T> {
    pub candidates: Vec<usize>,
    /// Additive logit correction per candidate (zero for the batch targets).
    pub correction: Vec<T>,
    /// Index of each row's target within `candidates`.
    pub local_targets: Vec<usize>,
    pub tries: usize,
}

pub fn sample_candidates<T: Real, R: Rng + ?Sized>(
    targets: &[usize],
    vocab: usize,
    sample_count: usize,
    proposal: Proposal,
    rng: &mut R,
) -> Result<CandidateDraw<T>> {
    if let Some(&bad) = targets.iter().find(|&&t| t >= vocab) {
        return Err(Error::Index {
            what: "target",
            index: bad,
            bound: vocab,
        });
    }
    let positives: BTreeSet<usize> = targets.iter().copied().collect();
    let mut candidates: Vec<usize> = positives.iter().copied().collect();
    let pool = vocab - positives.len();
    let mut correction = vec![T::zero(); candidates.len()];
    let mut tries = 0;
    if sample_count >= pool {
        candidates.extend((0..vocab).filter(|w| !positives.contains(w)));
        correction.resize(candidates.len(), T::zero());
    } else if sample_count > 0 {
        let mut chosen = BTreeSet::new();
        let mut order = Vec::with_capacity(sample_count);
        while order.len() < sample_count {
            let k = proposal.draw(vocab, rng);
            tries += 1;
            if !positives.contains(&k) && chosen.insert(k) {
                order.push(k);
            }
        }
        for k in order {
            let q = proposal.prob(k, vocab);
            let expected = -libm::expm1(tries as f64 * libm::log1p(-q));
            candidates.push(k);
            correction.push(T::of(-libm::log(expected)));
        }
    }
    let local_targets = targets
        .iter()
        .map(|t| positives.iter().position(|p| p == t).unwrap_or(0))
        .collect();
    Ok(CandidateDraw {
        candidates,
        correction,
        local_targets,
        tries,
    })
}
