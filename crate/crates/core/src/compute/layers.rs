use alloc::format;

use super::{Graph, ParamId, ParamStore, Real, Tensor, Var};
use crate::{Error, Result};

/// Standard four-gate LSTM cell (input, forget, output, candidate).
///
/// Parameters: `W_x: p×4d`, `W_h: d×4d`, `b: 4d`, gate blocks in that order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LstmCell {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn register<T: Real>(store: &mut ParamStore<T>, prefix: &str, input: usize, hidden: usize) -> Self {
        LstmCell {
            w_x: store.add(format!("{prefix}.w_x"), Tensor::zeros(&[input, 4 * hidden])),
            w_h: store.add(format!("{prefix}.w_h"), Tensor::zeros(&[hidden, 4 * hidden])),
            bias: store.add(format!("{prefix}.b"), Tensor::zeros(&[4 * hidden])),
            input,
            hidden,
        }
    }

    pub fn parameter_count(input: usize, hidden: usize) -> usize {
        4 * hidden * (input + hidden + 1)
    }

    pub fn set_forget_bias<T: Real>(&self, store: &mut ParamStore<T>, value: f64) {
        let d = self.hidden;
        for x in &mut store.get_mut(self.bias).data_mut()[d..2 * d] {
            *x = T::of(value);
        }
    }

    /// One step: returns `(h_t, c_t)`.
    pub fn step<T: Real>(&self, g: &mut Graph<'_, T>, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let d = self.hidden;
        if g.shape(x).len() != 2 || g.shape(x)[1] != self.input || g.shape(h) != [g.shape(x)[0], d] {
            return Err(Error::dim("lstm_cell", g.shape(x), g.shape(h)));
        }
        let (wx, wh, b) = (g.param(self.w_x), g.param(self.w_h), g.param(self.bias));
        let zx = g.matmul(x, wx)?;
        let zh = g.matmul(h, wh)?;
        let z = g.add(zx, zh)?;
        let z = g.add_bias(z, b)?;
        let i = g.slice_cols(z, 0, d)?;
        let f = g.slice_cols(z, d, d)?;
        let o = g.slice_cols(z, 2 * d, d)?;
        let cand = g.slice_cols(z, 3 * d, d)?;
        let (i, f, o) = (g.sigmoid(i), g.sigmoid(f), g.sigmoid(o));
        let cand = g.tanh(cand);
        let keep = g.mul(f, c)?;
        let write = g.mul(i, cand)?;
        let c_next = g.add(keep, write)?;
        let squashed = g.tanh(c_next);
        let h_next = g.mul(o, squashed)?;
        Ok((h_next, c_next))
    }
}
