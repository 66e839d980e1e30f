//! Random hyperparameter search under a parameter budget.

use alloc::vec::Vec;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::compose::{Variant, VocabShape};
use crate::compute::Real;
use crate::train::{derive_seed, train, TrainConfig, TrainData};
use crate::{Error, Result};

/// Marginals of the search: `d_S` uniform, `d_HW` and `d_LM` log-uniform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchSpace {
    pub d_s: (f64, f64),
    pub d_hw: (f64, f64),
    pub d_lm: (f64, f64),
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            d_s: (20.0, 650.0),
            d_hw: (160.0, 2000.0),
            d_lm: (300.0, 2000.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Draw {
    pub d_s: usize,
    pub d_hw: usize,
    pub d_lm: usize,
}

impl SearchSpace {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Draw {
        let log_uniform = |(lo, hi): (f64, f64), rng: &mut R| libm::exp(rng.gen_range(libm::log(lo)..libm::log(hi)));
        let d_s = rng.gen_range(self.d_s.0..self.d_s.1);
        let d_hw = log_uniform(self.d_hw, rng);
        let d_lm = log_uniform(self.d_lm, rng);
        Draw {
            d_s: Float::round(d_s) as usize,
            d_hw: Float::round(d_hw) as usize,
            d_lm: Float::round(d_lm) as usize,
        }
    }
}

/// Applies a draw to a base configuration. For `syl-cnn` the highway width
/// fixes the unit depth `c = round(d_HW / ΣL)`; for `word-direct` and
/// `syl-lstm` it sets the word-vector size.
pub fn apply_draw(base: &TrainConfig, draw: Draw) -> TrainConfig {
    let mut cfg = base.clone();
    let comp = &mut cfg.model.composition;
    comp.d_s = draw.d_s;
    match comp.variant {
        Variant::SylCnn => {
            let widths: usize = comp.filters.iter().map(|f| f.width).sum::<usize>().max(1);
            let unit = ((draw.d_hw as f64 / widths as f64).round() as usize).max(1);
            let filters = comp
                .filters
                .iter()
                .map(|f| crate::compose::Filter {
                    width: f.width,
                    depth: unit * f.width,
                })
                .collect();
            comp.set_filters(filters);
        }
        Variant::WordDirect | Variant::SylLstm => comp.d_w = draw.d_hw,
        _ => comp.d_hw = draw.d_hw,
    }
    cfg.model.d_lm = draw.d_lm;
    cfg
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub index: usize,
    pub seed: u64,
    pub draw: Draw,
    pub config: TrainConfig,
    pub parameters: usize,
}

/// Draws `trials` configurations that satisfy `d_S < d_LM` and the
/// parameter budget. Gives up after `max_attempts` draws in total.
#[allow(clippy::too_many_arguments)]
pub fn sample_trials(
    base: &TrainConfig,
    shape: VocabShape,
    space: &SearchSpace,
    budget: usize,
    tolerance: f64,
    trials: usize,
    seed: u64,
    max_attempts: usize,
) -> Result<Vec<Trial>> {
    if trials == 0 {
        return Err(Error::Config("at least one trial is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(trials);
    let mut attempts = 0;
    while out.len() < trials {
        if attempts >= max_attempts {
            if out.is_empty() {
                return Err(Error::NoAcceptedDraws { attempts });
            }
            log::warn!("accepted only {} of {trials} trials after {attempts} draws", out.len());
            break;
        }
        attempts += 1;
        let draw = space.draw(&mut rng);
        if draw.d_s >= draw.d_lm {
            continue;
        }
        let mut config = apply_draw(base, draw);
        if config.model.composition.validate(shape).is_err() {
            continue;
        }
        let parameters = config.model.parameter_count(shape);
        if crate::train::check_budget(parameters, budget, tolerance).is_err() {
            continue;
        }
        let index = out.len();
        let trial_seed = derive_seed(seed, 1000 + index as u64);
        config.seed = trial_seed;
        config.budget = Some(budget);
        config.tolerance = tolerance;
        out.push(Trial {
            index,
            seed: trial_seed,
            draw,
            config,
            parameters,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: Trial,
    /// Best validation perplexity, or `None` if the run aborted.
    pub val_ppl: Option<f64>,
    pub epochs: usize,
}

/// Orders by validation perplexity (aborted runs last), ties by trial index.
pub fn rank_trials(results: &mut [TrialResult]) {
    results.sort_by(|a, b| {
        let key = |r: &TrialResult| r.val_ppl.unwrap_or(f64::INFINITY);
        key(a)
            .partial_cmp(&key(b))
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.trial.index.cmp(&b.trial.index))
    });
}

/// Trains one trial and reports its best validation perplexity.
pub fn run_trial<T: Real>(trial: &Trial, data: &TrainData<'_>) -> TrialResult {
    match train::<T>(&trial.config, data, &mut |_| {}) {
        Ok(outcome) => TrialResult {
            trial: trial.clone(),
            val_ppl: Some(outcome.best.best_val_ppl),
            epochs: outcome.history.len(),
        },
        Err(aborted) => {
            log::warn!("trial {} aborted: {}", trial.index, aborted.error);
            TrialResult {
                trial: trial.clone(),
                val_ppl: aborted.last_good.map(|c| c.best_val_ppl),
                epochs: aborted.history.len(),
            }
        }
    }
}

/// Sequential search: sample, train each trial, rank.
#[allow(clippy::too_many_arguments)]
pub fn random_search<T: Real>(
    base: &TrainConfig,
    data: &TrainData<'_>,
    space: &SearchSpace,
    budget: usize,
    tolerance: f64,
    trials: usize,
    seed: u64,
    max_attempts: usize,
) -> Result<Vec<TrialResult>> {
    let sampled = sample_trials(base, data.shape(), space, budget, tolerance, trials, seed, max_attempts)?;
    let mut results: Vec<TrialResult> = sampled.iter().map(|t| run_trial::<T>(t, data)).collect();
    rank_trials(&mut results);
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compose::CompositionConfig;
    use crate::model::ModelConfig;

    fn base(variant: Variant) -> TrainConfig {
        TrainConfig::small_data(ModelConfig::new(CompositionConfig::preselection(variant), 300))
    }

    const PTB: VocabShape = VocabShape {
        words: 10_000,
        subwords: 6_000,
        n: 8,
    };

    #[test]
    fn marginals_respect_bounds() {
        let space = SearchSpace::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let d = space.draw(&mut rng);
            assert!((20..=650).contains(&d.d_s));
            assert!((160..=2000).contains(&d.d_hw));
            assert!((300..=2000).contains(&d.d_lm));
        }
    }

    #[test]
    fn accepted_trials_keep_ds_below_dlm() {
        let trials = sample_trials(&base(Variant::SylConcat), PTB, &SearchSpace::default(), 20_000_000, 0.05, 10, 1, 200_000).unwrap();
        assert_eq!(trials.len(), 10);
        for t in &trials {
            assert!(t.draw.d_s < t.draw.d_lm);
            assert!((19_000_000..=21_000_000).contains(&t.parameters));
        }
    }

    #[test]
    fn impossible_budget_errors() {
        let r = sample_trials(&base(Variant::SylSum), PTB, &SearchSpace::default(), 10, 0.05, 3, 1, 500);
        assert_eq!(r, Err(Error::NoAcceptedDraws { attempts: 500 }));
    }

    #[test]
    fn ranking_is_by_ppl_then_index() {
        let t = sample_trials(&base(Variant::SylSum), PTB, &SearchSpace::default(), 20_000_000, 0.05, 3, 2, 200_000).unwrap();
        let mut results: Vec<TrialResult> = t
            .into_iter()
            .zip([Some(90.0), None, Some(80.0)])
            .map(|(trial, val_ppl)| TrialResult {
                trial,
                val_ppl,
                epochs: 1,
            })
            .collect();
        rank_trials(&mut results);
        let order: Vec<usize> = results.iter().map(|r| r.trial.index).collect();
        assert_eq!(order, [2, 0, 1]);
    }
}
