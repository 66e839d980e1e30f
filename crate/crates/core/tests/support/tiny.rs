//! Small random models and batches for gradient and property checks.
#![allow(dead_code)]

use rand::Rng;
use sublm_core::compose::{filter_schedule, CompositionConfig, Variant, VocabShape};
use sublm_core::compute::{Graph, Mode};
use sublm_core::lm::LmState;
use sublm_core::model::{Model, ModelConfig, SoftmaxMode};
use sublm_core::vocab::{Batch, SubwordTable, PAD_ID};

pub const WORDS: usize = 7;
pub const SUBWORDS: usize = 9;
pub const N: usize = 3;

pub fn shape() -> VocabShape {
    VocabShape {
        words: WORDS,
        subwords: SUBWORDS,
        n: N,
    }
}

pub fn random_table<R: Rng>(rng: &mut R, words: usize, subwords: usize, n: usize) -> SubwordTable {
    let mut ids = vec![PAD_ID; words * n];
    let mut lengths = Vec::with_capacity(words);
    for w in 0..words {
        let len = rng.gen_range(1..=n);
        for t in 0..len {
            ids[w * n + t] = rng.gen_range(1..subwords);
        }
        lengths.push(len);
    }
    SubwordTable { n, ids, lengths }
}

pub fn config(variant: Variant) -> CompositionConfig {
    let mut c = CompositionConfig::preselection(variant);
    c.d_s = 3;
    c.d_w = 3;
    c.d_hw = 3;
    c.highway_layers = if matches!(variant, Variant::WordDirect | Variant::SylLstm) { 1 } else { 2 };
    if variant == Variant::SylCnn {
        c.set_filters(filter_schedule(2, 2));
    }
    if variant == Variant::SylAvgB {
        c.d_hw = 4;
    }
    c
}

pub fn tiny_model<R: Rng>(variant: Variant, dropout: f64, rng: &mut R) -> (Model<f64>, SubwordTable) {
    let mut mc = ModelConfig::new(config(variant), 3);
    mc.dropout = dropout;
    let mut m = Model::new(mc, shape()).unwrap();
    m.initialize(0.6, rng);
    (m, random_table(rng, WORDS, SUBWORDS, N))
}

pub fn random_batch<R: Rng>(rng: &mut R, words: usize, batch: usize, steps: usize) -> Batch {
    let n = batch * steps;
    Batch {
        batch,
        steps,
        inputs: (0..n).map(|_| rng.gen_range(0..words)).collect(),
        targets: (0..n).map(|_| rng.gen_range(0..words)).collect(),
        continues: true,
    }
}

pub fn random_state<R: Rng>(rng: &mut R, layers: usize, batch: usize, hidden: usize) -> LmState<f64> {
    let mut s = LmState::zeros(layers, batch, hidden);
    for t in s.h.iter_mut().chain(s.c.iter_mut()) {
        for v in t.data_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
    }
    s
}

/// Loss value and parameter gradients of one window with a fixed dropout seed.
pub fn window_loss_and_grads(
    model: &Model<f64>,
    table: &SubwordTable,
    batch: &Batch,
    state: &LmState<f64>,
    seed: u64,
) -> (f64, Vec<Option<Vec<f64>>>) {
    let mut g = Graph::new(&model.params, Mode::Train, seed);
    let mut rng = rand::rngs::mock::StepRng::new(0, 1);
    let wl = model
        .window_loss(&mut g, table, batch, state, SoftmaxMode::Full, &mut rng)
        .unwrap();
    let value = g.value(wl.loss).item();
    g.backward(wl.loss).unwrap();
    (value, g.take_param_grads())
}

pub fn window_loss_value(model: &Model<f64>, table: &SubwordTable, batch: &Batch, state: &LmState<f64>, seed: u64) -> f64 {
    let mut g = Graph::new(&model.params, Mode::Train, seed);
    let mut rng = rand::rngs::mock::StepRng::new(0, 1);
    let wl = model
        .window_loss(&mut g, table, batch, state, SoftmaxMode::Full, &mut rng)
        .unwrap();
    g.value(wl.loss).item()
}
