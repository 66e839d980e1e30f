//! Central finite-difference oracle for analytic gradients.
#![allow(dead_code)]

use rand::Rng;
use sublm_core::compute::{Graph, Mode, ParamStore, Tensor, Var};
use sublm_core::model::Model;

pub const STEP: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, floor)`; the floor keeps vanishing gradients
/// from turning rounding noise into huge relative errors.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Report {
    pub checked: usize,
    pub max_rel: f64,
}

impl Report {
    pub fn merge(&mut self, other: Report) {
        self.checked += other.checked;
        self.max_rel = self.max_rel.max(other.max_rel);
    }
}

/// Compares leaf gradients of the scalar built by `build` with central
/// differences on every input coordinate.
pub fn check_leaves(inputs: &[Tensor<f64>], build: impl Fn(&mut Graph<'_, f64>, &[Var]) -> Var) -> Report {
    check_graph(&mut ParamStore::new(), inputs, build)
}

/// As [`check_leaves`], additionally checking every coordinate of every
/// array in `store`.
pub fn check_graph(
    store: &mut ParamStore<f64>,
    inputs: &[Tensor<f64>],
    build: impl Fn(&mut Graph<'_, f64>, &[Var]) -> Var,
) -> Report {
    let eval = |store: &ParamStore<f64>, ins: &[Tensor<f64>]| -> f64 {
        let mut g = Graph::new(store, Mode::Train, 11);
        let vars: Vec<Var> = ins.iter().map(|t| g.leaf(t.clone())).collect();
        let out = build(&mut g, &vars);
        g.value(out).item()
    };
    let (leaf_grads, param_grads) = {
        let mut g = Graph::new(store, Mode::Train, 11);
        let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
        let out = build(&mut g, &vars);
        g.backward(out).expect("scalar output");
        let leaves: Vec<Vec<f64>> = vars
            .iter()
            .zip(inputs)
            .map(|(&v, t)| g.grad(v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
            .collect();
        (leaves, g.take_param_grads())
    };
    let mut report = Report::default();
    let mut work = inputs.to_vec();
    for i in 0..inputs.len() {
        for k in 0..inputs[i].len() {
            let orig = work[i].data()[k];
            work[i].data_mut()[k] = orig + STEP;
            let up = eval(store, &work);
            work[i].data_mut()[k] = orig - STEP;
            let down = eval(store, &work);
            work[i].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            report.checked += 1;
            report.max_rel = report.max_rel.max(rel_err(leaf_grads[i][k], numeric));
        }
    }
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let len = store.get(id).len();
        for k in 0..len {
            let a = param_grads[id.index()].as_ref().map_or(0.0, |g| g[k]);
            let orig = store.get(id).data()[k];
            store.get_mut(id).data_mut()[k] = orig + STEP;
            let up = eval(store, inputs);
            store.get_mut(id).data_mut()[k] = orig - STEP;
            let down = eval(store, inputs);
            store.get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            report.checked += 1;
            report.max_rel = report.max_rel.max(rel_err(a, numeric));
        }
    }
    report
}

/// Checks `analytic` (indexed like the model's parameter store) against
/// central differences of `loss` on up to `per_array` coordinates of every
/// parameter array, half of them drawn among coordinates with non-zero
/// analytic gradient.
pub fn check_model<R: Rng>(
    model: &mut Model<f64>,
    analytic: &[Option<Vec<f64>>],
    per_array: usize,
    rng: &mut R,
    loss: impl Fn(&Model<f64>) -> f64,
) -> Report {
    let mut report = Report::default();
    let ids: Vec<_> = model.params.ids().collect();
    for id in ids {
        let len = model.params.get(id).len();
        let grad = analytic[id.index()].clone().unwrap_or_else(|| vec![0.0; len]);
        let nonzero: Vec<usize> = (0..len).filter(|&k| grad[k] != 0.0).collect();
        let mut coords = Vec::new();
        for j in 0..per_array.min(len) {
            if j % 2 == 0 && !nonzero.is_empty() {
                coords.push(nonzero[rng.gen_range(0..nonzero.len())]);
            } else {
                coords.push(rng.gen_range(0..len));
            }
        }
        for k in coords {
            let orig = model.params.get(id).data()[k];
            model.params.get_mut(id).data_mut()[k] = orig + STEP;
            let up = loss(model);
            model.params.get_mut(id).data_mut()[k] = orig - STEP;
            let down = loss(model);
            model.params.get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let err = rel_err(grad[k], numeric);
            if err > 1e-4 {
                eprintln!(
                    "gradient mismatch in {}[{k}]: analytic {} numeric {numeric}",
                    model.params.name(id),
                    grad[k]
                );
            }
            report.checked += 1;
            report.max_rel = report.max_rel.max(err);
        }
    }
    report
}

pub fn random_tensor<R: Rng>(shape: &[usize], scale: f64, rng: &mut R) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}
