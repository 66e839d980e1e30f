//! Random search with trials spread over a scoped worker pool.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use sublm_core::compute::{DType, Real};
use sublm_core::search::{rank_trials, run_trial, Trial, TrialResult};
use sublm_core::train::TrainData;

/// Worker count: `SUBLM_THREADS` if set and positive, else the machine's
/// available parallelism.
pub fn thread_count() -> usize {
    std::env::var("SUBLM_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Trains every trial and ranks the results. Each trial carries its own
/// derived seed, so the ranking does not depend on `threads`.
pub fn run_trials(trials: &[Trial], data: &TrainData<'_>, dtype: DType, threads: usize) -> Vec<TrialResult> {
    match dtype {
        DType::F64 => run_typed::<f64>(trials, data, threads),
        DType::F32 => run_typed::<f32>(trials, data, threads),
    }
}

fn run_typed<T: Real>(trials: &[Trial], data: &TrainData<'_>, threads: usize) -> Vec<TrialResult> {
    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::with_capacity(trials.len()));
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, trials.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(t) = trials.get(i) else { break };
                log::info!("trial {} (d_s {}, d_hw {}, d_lm {})", t.index, t.draw.d_s, t.draw.d_hw, t.draw.d_lm);
                let r = run_trial::<T>(t, data);
                results.lock().expect("result lock").push(r);
            });
        }
    });
    let mut results = results.into_inner().expect("result lock");
    rank_trials(&mut results);
    results
}
