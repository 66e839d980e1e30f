//! Composition model plus word-level LM, with loss construction and evaluation.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::Rng;

use crate::compose::{Composer, CompositionConfig, VocabShape};
use crate::compute::{nll_from_logits, Graph, Mode, ParamStore, Real, Tensor, Var};
use crate::lm::{LmState, Proposal, WordLm};
use crate::vocab::{Batch, SubwordTable};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub composition: CompositionConfig,
    pub d_lm: usize,
    pub lm_layers: usize,
    pub dropout: f64,
}

impl ModelConfig {
    pub fn new(composition: CompositionConfig, d_lm: usize) -> Self {
        ModelConfig {
            composition,
            d_lm,
            lm_layers: 2,
            dropout: 0.5,
        }
    }

    /// Closed-form trainable scalar count; agrees with [`Model::count_parameters`].
    pub fn parameter_count(&self, shape: VocabShape) -> usize {
        self.composition.parameter_count(shape)
            + WordLm::parameter_count(self.composition.output_dim(), self.d_lm, shape.words, self.lm_layers)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoftmaxMode {
    Full,
    Sampled { count: usize, proposal: Proposal },
}

/// NLL totals of an evaluation pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<T> {
    pub nll_sum: f64,
    pub tokens: usize,
    /// Probability of each target, in order, when requested.
    pub probs: Vec<f64>,
    pub state: LmState<T>,
}

impl<T> Evaluation<T> {
    pub fn perplexity(&self) -> f64 {
        libm::exp(self.nll_sum / self.tokens as f64)
    }
}

/// Output of [`Model::window_loss`].
pub struct WindowLoss<T> {
    /// Summed over time, averaged over lanes: the quantity that is differentiated.
    pub loss: Var,
    /// Mean per-token NLL (or its sampled estimate).
    pub mean_nll: Var,
    pub state: LmState<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T: Real> {
    pub config: ModelConfig,
    pub shape: VocabShape,
    pub params: ParamStore<T>,
    pub composer: Composer,
    pub lm: WordLm,
}

impl<T: Real> Model<T> {
    /// Registers every array, zero-filled. See [`Model::initialize`].
    pub fn new(config: ModelConfig, shape: VocabShape) -> Result<Self> {
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(Error::Config(alloc::format!("dropout {} outside [0, 1)", config.dropout)));
        }
        let mut params = ParamStore::new();
        let composer = Composer::register(&mut params, config.composition.clone(), shape)?;
        let lm = WordLm::register(&mut params, composer.output_dim(), config.d_lm, shape.words, config.lm_layers)?;
        Ok(Model {
            config,
            shape,
            params,
            composer,
            lm,
        })
    }

    /// Draws everything from `U(-range, range)`, then sets the forget biases
    /// of the word-level and subword LSTMs to 1.
    pub fn initialize<R: Rng + ?Sized>(&mut self, range: f64, rng: &mut R) {
        self.params.init_uniform(range, rng);
        self.lm.set_forget_bias(&mut self.params, 1.0);
        self.composer.init_special(&mut self.params);
    }

    pub fn count_parameters(&self) -> usize {
        self.params.scalar_count()
    }

    pub fn check_table(&self, table: &SubwordTable) -> Result<()> {
        if table.words() != self.shape.words || table.n != self.shape.n {
            return Err(Error::Mismatch(alloc::format!(
                "subword table is {}×{}, model expects {}×{}",
                table.words(),
                table.n,
                self.shape.words,
                self.shape.n
            )));
        }
        Ok(())
    }

    /// Composed vectors of every vocabulary word (eval mode), `|W| × d_x`.
    pub fn embed_vocab(&self, table: &SubwordTable) -> Result<Tensor<T>> {
        self.check_table(table)?;
        let d = self.composer.output_dim();
        let mut data = Vec::with_capacity(self.shape.words * d);
        let ids: Vec<usize> = (0..self.shape.words).collect();
        for chunk in ids.chunks(512) {
            let mut g = Graph::new(&self.params, Mode::Eval, 0);
            let x = self.composer.compose(&mut g, table, chunk)?;
            data.extend_from_slice(g.value(x).data());
        }
        Tensor::new(&[self.shape.words, d], data)
    }

    /// Builds the loss of one BPTT window into `g`.
    ///
    /// Word vectors are composed once per distinct input word of the window
    /// and then looked up per time step.
    pub fn window_loss<R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'_, T>,
        table: &SubwordTable,
        batch: &Batch,
        state: &LmState<T>,
        softmax: SoftmaxMode,
        rng: &mut R,
    ) -> Result<WindowLoss<T>> {
        let (b, t) = (batch.batch, batch.steps);
        if state.batch() != b {
            return Err(Error::dim("lm state", &[state.batch()], &[b]));
        }
        let unique: Vec<usize> = batch.inputs.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let vectors = self.composer.compose(g, table, &unique)?;
        let mut inputs = Vec::with_capacity(t);
        for step in 0..t {
            let rows: Vec<Option<usize>> = (0..b)
                .map(|lane| unique.binary_search(&batch.input(lane, step)).ok())
                .collect();
            inputs.push(g.gather_rows(vectors, &rows)?);
        }
        let out = self.lm.forward(g, &inputs, state, self.config.dropout)?;
        let h = g.concat_rows(&out.outputs)?;
        let targets: Vec<usize> = (0..t)
            .flat_map(|step| (0..b).map(move |lane| (lane, step)))
            .map(|(lane, step)| batch.target(lane, step))
            .collect();
        let mean_nll = match softmax {
            SoftmaxMode::Full => self.lm.full_nll(g, h, &targets)?,
            SoftmaxMode::Sampled { count, proposal } => self.lm.sampled_nll(g, h, &targets, count, proposal, rng)?,
        };
        let loss = g.scale(mean_nll, T::of(t as f64));
        let state = self.lm.detach(g, &out);
        Ok(WindowLoss { loss, mean_nll, state })
    }

    /// Exact NLL of `targets[i]` given `inputs[..=i]` at batch size 1, full
    /// softmax, eval mode, processed in windows of `window` steps with the
    /// state carried across windows.
    pub fn evaluate(
        &self,
        table: &SubwordTable,
        inputs: &[usize],
        targets: &[usize],
        state: Option<LmState<T>>,
        window: usize,
        record_probs: bool,
    ) -> Result<Evaluation<T>> {
        if inputs.len() != targets.len() {
            return Err(Error::dim("evaluate", &[inputs.len()], &[targets.len()]));
        }
        if window == 0 {
            return Err(Error::Config("evaluation window must be positive".into()));
        }
        let vectors = self.embed_vocab(table)?;
        self.evaluate_embedded(&vectors, inputs, targets, state, window, record_probs)
    }

    /// As [`Model::evaluate`], with word vectors already computed by
    /// [`Model::embed_vocab`].
    pub fn evaluate_embedded(
        &self,
        vectors: &Tensor<T>,
        inputs: &[usize],
        targets: &[usize],
        state: Option<LmState<T>>,
        window: usize,
        record_probs: bool,
    ) -> Result<Evaluation<T>> {
        let mut state = state.unwrap_or_else(|| self.lm.zero_state(1));
        let d = vectors.cols();
        let mut nll_sum = 0.0;
        let mut probs = Vec::new();
        for (xs, ys) in inputs.chunks(window).zip(targets.chunks(window)) {
            let mut g = Graph::new(&self.params, Mode::Eval, 0);
            let steps: Vec<Var> = xs
                .iter()
                .map(|&w| {
                    if w >= vectors.rows() {
                        return Err(Error::Index {
                            what: "word id",
                            index: w,
                            bound: vectors.rows(),
                        });
                    }
                    Ok(g.constant(Tensor::new(&[1, d], vectors.row(w).to_vec())?))
                })
                .collect::<Result<_>>()?;
            let out = self.lm.forward(&mut g, &steps, &state, 0.0)?;
            let h = g.concat_rows(&out.outputs)?;
            let z = self.lm.logits(&mut g, h)?;
            let logits = g.value(z);
            for (r, &y) in ys.iter().enumerate() {
                if y >= logits.cols() {
                    return Err(Error::Index {
                        what: "target",
                        index: y,
                        bound: logits.cols(),
                    });
                }
                let nll = nll_from_logits(logits.row(r), y).as_f64();
                nll_sum += nll;
                if record_probs {
                    probs.push(libm::exp(-nll));
                }
            }
            state = self.lm.detach(&g, &out);
        }
        Ok(Evaluation {
            nll_sum,
            tokens: targets.len(),
            probs,
            state,
        })
    }

    /// Perplexity of a whole split. The first token is predicted from `<eos>`,
    /// so every token of `stream` is scored exactly once.
    pub fn perplexity(&self, table: &SubwordTable, stream: &[usize], eos: usize, window: usize) -> Result<f64> {
        Ok(self.score_stream(table, stream, eos, window, false)?.perplexity())
    }

    pub fn score_stream(
        &self,
        table: &SubwordTable,
        stream: &[usize],
        eos: usize,
        window: usize,
        record_probs: bool,
    ) -> Result<Evaluation<T>> {
        if stream.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let inputs: Vec<usize> = core::iter::once(eos).chain(stream[..stream.len() - 1].iter().copied()).collect();
        self.evaluate(table, &inputs, stream, None, window, record_probs)
    }
}
