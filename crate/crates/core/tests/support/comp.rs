//! Standalone composers and hand-built subword tables.
#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sublm_core::compose::{filter_schedule, Composer, CompositionConfig, Variant, VocabShape};
use sublm_core::compute::{Graph, Mode, ParamStore};
use sublm_core::vocab::{SubwordTable, PAD_ID};

use super::tiny;

pub fn plain(variant: Variant, d: usize) -> CompositionConfig {
    let mut c = tiny::config(variant);
    c.d_s = d;
    c.d_hw = d;
    c.d_w = d;
    c.highway_layers = 0;
    if variant == Variant::SylCnn {
        c.set_filters(filter_schedule(2, 2));
    }
    c
}

pub fn build(config: CompositionConfig, shape: VocabShape, seed: u64) -> (ParamStore<f64>, Composer) {
    let mut store = ParamStore::new();
    let composer = Composer::register(&mut store, config, shape).unwrap();
    store.init_uniform(0.7, &mut ChaCha8Rng::seed_from_u64(seed));
    (store, composer)
}

pub fn compose(store: &ParamStore<f64>, composer: &Composer, table: &SubwordTable, words: &[usize]) -> Vec<f64> {
    let mut g = Graph::new(store, Mode::Eval, 0);
    let y = composer.compose(&mut g, table, words).unwrap();
    g.value(y).data().to_vec()
}

pub fn table(n: usize, rows: &[&[usize]]) -> SubwordTable {
    let mut ids = vec![PAD_ID; rows.len() * n];
    for (w, r) in rows.iter().enumerate() {
        ids[w * n..w * n + r.len()].copy_from_slice(r);
    }
    SubwordTable {
        n,
        ids,
        lengths: rows.iter().map(|r| r.len()).collect(),
    }
}

pub fn shape(words: usize, n: usize) -> VocabShape {
    VocabShape { words, subwords: 6, n }
}

/// Copies the leading block of every array of `from` into the same-named array of `to`.
pub fn copy_leading(from: &ParamStore<f64>, to: &mut ParamStore<f64>) {
    for id in from.ids() {
        let src = from.get(id);
        let dst_id = to.find(from.name(id)).unwrap();
        let dst = to.get_mut(dst_id);
        let (sr, sc) = (src.shape()[0], src.shape().get(1).copied().unwrap_or(1));
        let dc = dst.shape().get(1).copied().unwrap_or(1);
        for r in 0..sr {
            for c in 0..sc {
                dst.data_mut()[r * dc + c] = src.data()[r * sc + c];
            }
        }
    }
}
