//! SGD training with truncated BPTT, gradient clipping and learning-rate halving.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::compose::VocabShape;
use crate::compute::{Graph, Mode, ParamStore, Real};
use crate::lm::Proposal;
use crate::model::{Model, ModelConfig, SoftmaxMode};
use crate::vocab::{batch_stream, SubwordTable};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SoftmaxKind {
    Full,
    /// Sample `fraction · |W|` negatives per window.
    Sampled { fraction: f64, proposal: Proposal },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub bptt: usize,
    pub batch: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Multiplier applied when validation perplexity fails to improve.
    pub lr_decay: f64,
    pub clip_norm: f64,
    pub init_range: f64,
    pub seed: u64,
    pub budget: Option<usize>,
    pub tolerance: f64,
    pub softmax: SoftmaxKind,
    /// Window length used when scoring validation and test streams.
    pub eval_window: usize,
}

impl TrainConfig {
    /// Small-data recipe: 50 epochs, batch 20, 70 BPTT steps.
    pub fn small_data(model: ModelConfig) -> Self {
        TrainConfig {
            model,
            bptt: 70,
            batch: 20,
            epochs: 50,
            lr: 1.0,
            lr_decay: 0.5,
            clip_norm: 5.0,
            init_range: 0.05,
            seed: 0,
            budget: None,
            tolerance: 0.05,
            softmax: SoftmaxKind::Full,
            eval_window: 70,
        }
    }

    /// Large-data recipe: 25 epochs, batch 100, 35 BPTT steps, sampled
    /// softmax with 20% of the vocabulary.
    pub fn large_data(model: ModelConfig) -> Self {
        TrainConfig {
            bptt: 35,
            batch: 100,
            epochs: 25,
            softmax: SoftmaxKind::Sampled {
                fraction: 0.2,
                proposal: Proposal::LogUniform,
            },
            eval_window: 35,
            ..Self::small_data(model)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("bptt", self.bptt),
            ("batch", self.batch),
            ("epochs", self.epochs),
            ("eval_window", self.eval_window),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for (name, v) in [
            ("lr", self.lr),
            ("clip_norm", self.clip_norm),
            ("init_range", self.init_range),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay)));
        }
        if !(0.0..1.0).contains(&self.tolerance) {
            return Err(Error::Config(format!("tolerance must lie in [0, 1), got {}", self.tolerance)));
        }
        if let SoftmaxKind::Sampled { fraction, .. } = self.softmax {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(Error::Config(format!("sample fraction must lie in (0, 1], got {fraction}")));
            }
        }
        Ok(())
    }

    pub fn softmax_mode(&self, vocab: usize) -> SoftmaxMode {
        match self.softmax {
            SoftmaxKind::Full => SoftmaxMode::Full,
            SoftmaxKind::Sampled { fraction, proposal } => SoftmaxMode::Sampled {
                count: ((vocab as f64 * fraction).round() as usize).max(1),
                proposal,
            },
        }
    }
}

/// Fails unless `count` lies in `budget · (1 ± tolerance)`.
pub fn check_budget(count: usize, budget: usize, tolerance: f64) -> Result<()> {
    let low = (budget as f64 * (1.0 - tolerance)).ceil() as usize;
    let high = (budget as f64 * (1.0 + tolerance)).floor() as usize;
    if count < low || count > high {
        return Err(Error::Budget { count, low, high });
    }
    Ok(())
}

/// Scales all gradients so their joint L2 norm is at most `max_norm` and
/// returns the factor used (1 when no clipping happened).
pub fn clip_global_norm<T: Real>(grads: &mut [Option<Vec<T>>], names: &[&str], max_norm: f64) -> Result<f64> {
    let mut sq = 0.0;
    for (i, g) in grads.iter().enumerate() {
        let Some(g) = g else { continue };
        for &v in g {
            let v = v.as_f64();
            if !v.is_finite() {
                return Err(Error::NonFiniteGradient {
                    name: names.get(i).map_or_else(|| format!("#{i}"), |n| String::from(*n)),
                });
            }
            sq += v * v;
        }
    }
    let norm = Float::sqrt(sq);
    if norm <= max_norm {
        return Ok(1.0);
    }
    let scale = max_norm / norm;
    let s = T::of(scale);
    for g in grads.iter_mut().flatten() {
        for v in g.iter_mut() {
            *v *= s;
        }
    }
    Ok(scale)
}

pub fn global_norm<T: Real>(grads: &[Option<Vec<T>>]) -> f64 {
    let sq: f64 = grads.iter().flatten().flatten().map(|&v| v.as_f64() * v.as_f64()).sum();
    Float::sqrt(sq)
}

/// Learning rate that is multiplied by `decay` whenever a validation
/// perplexity is not strictly below the best seen so far.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub lr: f64,
    pub decay: f64,
    pub best: Option<f64>,
}

impl LrSchedule {
    pub fn new(lr: f64, decay: f64) -> Self {
        LrSchedule { lr, decay, best: None }
    }

    /// Records one epoch's validation perplexity; returns whether it improved.
    pub fn observe(&mut self, val_ppl: f64) -> bool {
        match self.best {
            Some(b) if val_ppl >= b => {
                self.lr *= self.decay;
                false
            }
            _ => {
                self.best = Some(val_ppl);
                true
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Rate used during this epoch.
    pub lr: f64,
    pub train_ppl: f64,
    pub val_ppl: f64,
}

/// Trained parameters plus the bookkeeping saved alongside them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T: Real> {
    pub model: Model<T>,
    pub epoch: usize,
    pub best_val_ppl: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T: Real> {
    pub best: Checkpoint<T>,
    pub history: Vec<EpochLog>,
}

/// A run that stopped early; `last_good` is the best checkpoint so far, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Aborted<T: Real> {
    pub error: Error,
    pub last_good: Option<Checkpoint<T>>,
    pub history: Vec<EpochLog>,
}

impl<T: Real> From<Error> for Aborted<T> {
    fn from(error: Error) -> Self {
        Aborted {
            error,
            last_good: None,
            history: Vec::new(),
        }
    }
}

/// The three encoded streams training needs.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub table: &'a SubwordTable,
    /// `|S|`, including the reserved subword ids.
    pub subwords: usize,
    pub train: &'a [usize],
    pub valid: &'a [usize],
    pub eos: usize,
}

impl TrainData<'_> {
    pub fn shape(&self) -> VocabShape {
        VocabShape {
            words: self.table.words(),
            subwords: self.subwords,
            n: self.table.n,
        }
    }
}

/// 64-bit mix used to derive independent seeds from one master seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn build_model<T: Real>(config: &TrainConfig, shape: VocabShape) -> Result<Model<T>> {
    config.validate()?;
    let mut model = Model::new(config.model.clone(), shape)?;
    if let Some(budget) = config.budget {
        check_budget(model.count_parameters(), budget, config.tolerance)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0));
    model.initialize(config.init_range, &mut rng);
    Ok(model)
}

/// Total NLL and token count of one pass of SGD over the training stream.
fn train_epoch<T: Real>(
    model: &mut Model<T>,
    config: &TrainConfig,
    data: &TrainData<'_>,
    epoch: usize,
    lr: f64,
    sampler: &mut ChaCha8Rng,
) -> Result<(f64, usize)> {
    let softmax = config.softmax_mode(model.shape.words);
    let names: Vec<String> = model.params.iter().map(|(n, _)| String::from(n)).collect();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut state = model.lm.zero_state(config.batch);
    let (mut nll, mut tokens) = (0.0, 0usize);
    for (step, batch) in batch_stream(data.train, config.batch, config.bptt)?.enumerate() {
        let graph_seed = derive_seed(config.seed, ((epoch as u64) << 32) | (step as u64 + 1));
        let mut g = Graph::new(&model.params, Mode::Train, graph_seed);
        let wl = model.window_loss(&mut g, data.table, &batch, &state, softmax, sampler)?;
        let mean = g.value(wl.mean_nll).item().as_f64();
        if !mean.is_finite() {
            return Err(Error::Diverged { epoch, step, loss: mean });
        }
        g.backward(wl.loss)?;
        let mut grads = g.take_param_grads();
        drop(g);
        clip_global_norm(&mut grads, &names, config.clip_norm)?;
        model.params.sgd_step(&grads, T::of(lr));
        state = wl.state;
        let n = batch.batch * batch.steps;
        nll += mean * n as f64;
        tokens += n;
    }
    Ok((nll, tokens))
}

/// Full recipe: build, initialize, then SGD epochs with validation-driven
/// halving. The returned checkpoint is the epoch with the best validation
/// perplexity. `on_epoch` sees every epoch log as it is produced.
pub fn train<T: Real>(
    config: &TrainConfig,
    data: &TrainData<'_>,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> core::result::Result<TrainOutcome<T>, Aborted<T>> {
    let mut model: Model<T> = build_model(config, data.shape())?;
    fit(&mut model, config, data, on_epoch)
}

/// Runs the SGD epochs on an already initialized model.
pub fn fit<T: Real>(
    model: &mut Model<T>,
    config: &TrainConfig,
    data: &TrainData<'_>,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> core::result::Result<TrainOutcome<T>, Aborted<T>> {
    config.validate()?;
    model.check_table(data.table)?;
    let mut sampler = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1));
    let mut schedule = LrSchedule::new(config.lr, config.lr_decay);
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<Checkpoint<T>> = None;
    for epoch in 1..=config.epochs {
        let lr = schedule.lr;
        let step = train_epoch(model, config, data, epoch, lr, &mut sampler).and_then(|(nll, tokens)| {
            let val = model.perplexity(data.table, data.valid, data.eos, config.eval_window)?;
            Ok((libm::exp(nll / tokens as f64), val))
        });
        let (train_ppl, val_ppl) = match step {
            Ok(v) => v,
            Err(error) => {
                return Err(Aborted {
                    error,
                    last_good: best,
                    history,
                })
            }
        };
        if !val_ppl.is_finite() {
            return Err(Aborted {
                error: Error::Diverged {
                    epoch,
                    step: 0,
                    loss: val_ppl,
                },
                last_good: best,
                history,
            });
        }
        let log = EpochLog {
            epoch,
            lr,
            train_ppl,
            val_ppl,
        };
        log::info!("epoch {epoch}: lr {lr} train ppl {train_ppl:.3} val ppl {val_ppl:.3}");
        on_epoch(&log);
        history.push(log);
        if schedule.observe(val_ppl) {
            best = Some(Checkpoint {
                model: model.clone(),
                epoch,
                best_val_ppl: val_ppl,
            });
        }
    }
    let best = best.ok_or_else(|| Aborted::from(Error::Contract("no epoch completed".into())))?;
    Ok(TrainOutcome { best, history })
}

/// Per-parameter names in registration order.
pub fn parameter_names<T: Real>(params: &ParamStore<T>) -> Vec<String> {
    params.iter().map(|(n, _)| String::from(n)).collect()
}
