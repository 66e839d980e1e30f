//! Word-embedding composition: from a word's subword vectors to one word vector.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::compute::{Graph, LstmCell, ParamId, ParamStore, Real, Tensor, Var};
use crate::vocab::{SubwordTable, PAD_ID};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    WordDirect,
    SylLstm,
    SylCnn,
    SylSum,
    SylAvg,
    SylAvgA,
    SylAvgB,
    SylConcat,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::WordDirect,
        Variant::SylLstm,
        Variant::SylCnn,
        Variant::SylSum,
        Variant::SylAvg,
        Variant::SylAvgA,
        Variant::SylAvgB,
        Variant::SylConcat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::WordDirect => "word-direct",
            Variant::SylLstm => "syl-lstm",
            Variant::SylCnn => "syl-cnn",
            Variant::SylSum => "syl-sum",
            Variant::SylAvg => "syl-avg",
            Variant::SylAvgA => "syl-avg-a",
            Variant::SylAvgB => "syl-avg-b",
            Variant::SylConcat => "syl-concat",
        }
    }

    /// Members of the weighted-sum family `x = Σ α_t s_t`.
    pub fn is_linear(self) -> bool {
        matches!(self, Variant::SylSum | Variant::SylAvg | Variant::SylAvgA | Variant::SylAvgB)
    }

    pub fn uses_subwords(self) -> bool {
        self != Variant::WordDirect
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown composition variant `{s}`")))
    }
}

/// One bank of convolution filters of a given width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Filter {
    pub width: usize,
    pub depth: usize,
}

/// Widths `1..=max_width` with depths `unit·width`.
pub fn filter_schedule(max_width: usize, unit: usize) -> Vec<Filter> {
    (1..=max_width)
        .map(|w| Filter {
            width: w,
            depth: unit * w,
        })
        .collect()
}

/// Sizes fixed by the data rather than the architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VocabShape {
    pub words: usize,
    pub subwords: usize,
    /// Maximum subwords per word.
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositionConfig {
    pub variant: Variant,
    pub d_s: usize,
    /// Word vector size of `word-direct` and the hidden size of `syl-lstm`.
    pub d_w: usize,
    /// Highway width. Derived for `syl-cnn`; for the linear family a value
    /// other than `d_s` inserts a projection before the highway stack.
    pub d_hw: usize,
    pub highway_layers: usize,
    pub filters: Vec<Filter>,
}

impl CompositionConfig {
    /// Small-budget settings with `d_LM = 300` in mind.
    pub fn preselection(variant: Variant) -> Self {
        let mut c = CompositionConfig {
            variant,
            d_s: 50,
            d_w: 300,
            d_hw: 300,
            highway_layers: 2,
            filters: Vec::new(),
        };
        match variant {
            Variant::WordDirect => {
                c.d_w = 108;
                c.highway_layers = 0;
            }
            Variant::SylLstm => c.highway_layers = 0,
            Variant::SylCnn => c.set_filters(filter_schedule(3, 60)),
            Variant::SylSum | Variant::SylAvg | Variant::SylAvgA => {
                c.d_s = 175;
                c.d_hw = 175;
            }
            Variant::SylAvgB => {
                c.d_s = 160;
                c.d_hw = 160;
            }
            Variant::SylConcat => {}
        }
        c
    }

    /// `syl-cnn` with widths `1..=max_width`; the unit depth fits a 5M budget.
    pub fn preselection_cnn(max_width: usize) -> Result<Self> {
        let unit = match max_width {
            2 => 120,
            3 => 60,
            4 => 35,
            _ => return Err(Error::Config(format!("no preset unit depth for width {max_width}"))),
        };
        let mut c = Self::preselection(Variant::SylCnn);
        c.set_filters(filter_schedule(max_width, unit));
        Ok(c)
    }

    /// Replaces the filter banks and re-derives `d_hw`.
    pub fn set_filters(&mut self, filters: Vec<Filter>) {
        self.d_hw = filters.iter().map(|f| f.depth).sum();
        self.filters = filters;
    }

    /// Width of the composed word vector.
    pub fn output_dim(&self) -> usize {
        match self.variant {
            Variant::WordDirect | Variant::SylLstm => self.d_w,
            _ => self.d_hw,
        }
    }

    fn needs_projection(&self) -> bool {
        self.variant.is_linear() && self.d_hw != self.d_s
    }

    pub fn validate(&self, shape: VocabShape) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if shape.words == 0 || shape.n == 0 {
            return bad("empty vocabulary".into());
        }
        match self.variant {
            Variant::WordDirect | Variant::SylLstm if self.d_w == 0 => return bad("d_w must be positive".into()),
            _ => {}
        }
        if self.variant.uses_subwords() && (self.d_s == 0 || shape.subwords == 0) {
            return bad("d_s must be positive".into());
        }
        if self.variant != Variant::SylLstm && self.output_dim() == 0 {
            return bad("d_hw must be positive".into());
        }
        if self.variant == Variant::SylCnn {
            if self.filters.is_empty() {
                return bad("syl-cnn needs at least one filter bank".into());
            }
            for f in &self.filters {
                if f.width == 0 || f.depth == 0 {
                    return bad(format!("filter {f:?} must have positive width and depth"));
                }
                if f.width > shape.n {
                    return bad(format!(
                        "filter width {} exceeds the maximum word length of {} subwords",
                        f.width, shape.n
                    ));
                }
            }
            let total: usize = self.filters.iter().map(|f| f.depth).sum();
            if total != self.d_hw {
                return bad(format!("d_hw {} differs from total filter depth {total}", self.d_hw));
            }
        }
        Ok(())
    }

    /// Trainable scalars, computed from the shapes in closed form.
    pub fn parameter_count(&self, shape: VocabShape) -> usize {
        let (s, n, ds) = (shape.subwords, shape.n, self.d_s);
        let hw = |d: usize| self.highway_layers * 2 * (d * d + d);
        match self.variant {
            Variant::WordDirect => shape.words * self.d_w + hw(self.d_w),
            Variant::SylLstm => s * ds + LstmCell::parameter_count(ds, self.d_w) + hw(self.d_w),
            Variant::SylCnn => {
                let conv: usize = self.filters.iter().map(|f| f.width * ds * f.depth + f.depth).sum();
                s * ds + conv + hw(self.d_hw)
            }
            Variant::SylConcat => s * ds + n * ds * self.d_hw + self.d_hw + hw(self.d_hw),
            _ => {
                let extra = match self.variant {
                    Variant::SylAvgA => n,
                    Variant::SylAvgB => s * n + n,
                    _ => 0,
                };
                let proj = if self.needs_projection() { ds * self.d_hw + self.d_hw } else { 0 };
                s * ds + extra + proj + hw(self.d_hw)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct HighwayLayer {
    w_t: ParamId,
    b_t: ParamId,
    w_h: ParamId,
    b_h: ParamId,
}

/// Stack of highway layers `y' = t⊙relu(y·W_H + b_H) + (1−t)⊙y`, `t = σ(y·W_T + b_T)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Highway {
    layers: Vec<HighwayLayer>,
    pub dim: usize,
}

impl Highway {
    pub fn register<T: Real>(store: &mut ParamStore<T>, prefix: &str, dim: usize, depth: usize) -> Self {
        let layers = (0..depth)
            .map(|l| HighwayLayer {
                w_t: store.add(format!("{prefix}.{l}.w_t"), Tensor::zeros(&[dim, dim])),
                b_t: store.add(format!("{prefix}.{l}.b_t"), Tensor::zeros(&[dim])),
                w_h: store.add(format!("{prefix}.{l}.w_h"), Tensor::zeros(&[dim, dim])),
                b_h: store.add(format!("{prefix}.{l}.b_h"), Tensor::zeros(&[dim])),
            })
            .collect();
        Highway { layers, dim }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Sets every transform-gate bias to `value`.
    pub fn set_gate_bias<T: Real>(&self, store: &mut ParamStore<T>, value: f64) {
        for l in &self.layers {
            store.get_mut(l.b_t).data_mut().fill(T::of(value));
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        if !self.layers.is_empty() && g.shape(x).get(1) != Some(&self.dim) {
            return Err(Error::Config(format!(
                "highway width {} does not match input {:?}",
                self.dim,
                g.shape(x)
            )));
        }
        let mut y = x;
        for l in &self.layers {
            let (w_t, b_t, w_h, b_h) = (g.param(l.w_t), g.param(l.b_t), g.param(l.w_h), g.param(l.b_h));
            let gate = g.affine(y, w_t, b_t)?;
            let gate = g.sigmoid(gate);
            let h = g.affine(y, w_h, b_h)?;
            let h = g.relu(h);
            let moved = g.mul(gate, h)?;
            let carry = g.one_minus(gate);
            let kept = g.mul(carry, y)?;
            y = g.add(moved, kept)?;
        }
        Ok(y)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Body {
    Direct,
    Lstm(LstmCell),
    Cnn(Vec<(ParamId, ParamId, usize)>),
    Linear {
        scores: Option<(ParamId, Option<ParamId>)>,
        projection: Option<(ParamId, ParamId)>,
    },
    Concat {
        w: ParamId,
        b: ParamId,
    },
}

/// A registered composition model; its arrays live in a shared [`ParamStore`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Composer {
    pub config: CompositionConfig,
    pub shape: VocabShape,
    embedding: ParamId,
    body: Body,
    highway: Highway,
}

impl Composer {
    /// Validates the configuration and registers every array (zero-filled)
    /// under names prefixed with `compose.`.
    pub fn register<T: Real>(store: &mut ParamStore<T>, config: CompositionConfig, shape: VocabShape) -> Result<Self> {
        config.validate(shape)?;
        let (s, n, ds) = (shape.subwords, shape.n, config.d_s);
        let embedding = if config.variant == Variant::WordDirect {
            store.add("compose.word_embedding", Tensor::zeros(&[shape.words, config.d_w]))
        } else {
            store.add("compose.subword_embedding", Tensor::zeros(&[s, ds]))
        };
        let body = match config.variant {
            Variant::WordDirect => Body::Direct,
            Variant::SylLstm => Body::Lstm(LstmCell::register(store, "compose.lstm", ds, config.d_w)),
            Variant::SylCnn => Body::Cnn(
                config
                    .filters
                    .iter()
                    .map(|f| {
                        let w = store.add(
                            format!("compose.conv{}.w", f.width),
                            Tensor::zeros(&[f.width * ds, f.depth]),
                        );
                        let b = store.add(format!("compose.conv{}.b", f.width), Tensor::zeros(&[f.depth]));
                        (w, b, f.width)
                    })
                    .collect(),
            ),
            Variant::SylConcat => Body::Concat {
                w: store.add("compose.concat.w", Tensor::zeros(&[n * ds, config.d_hw])),
                b: store.add("compose.concat.b", Tensor::zeros(&[config.d_hw])),
            },
            v => {
                let scores = match v {
                    Variant::SylAvgA => Some((store.add("compose.avg_a.a", Tensor::zeros(&[1, n])), None)),
                    Variant::SylAvgB => Some((
                        store.add("compose.avg_b.a", Tensor::zeros(&[s, n])),
                        Some(store.add("compose.avg_b.b", Tensor::zeros(&[n]))),
                    )),
                    _ => None,
                };
                let projection = config.needs_projection().then(|| {
                    (
                        store.add("compose.proj.w", Tensor::zeros(&[ds, config.d_hw])),
                        store.add("compose.proj.b", Tensor::zeros(&[config.d_hw])),
                    )
                });
                Body::Linear { scores, projection }
            }
        };
        let highway = Highway::register(store, "compose.highway", config.output_dim(), config.highway_layers);
        Ok(Composer {
            config,
            shape,
            embedding,
            body,
            highway,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    pub fn highway(&self) -> &Highway {
        &self.highway
    }

    pub fn embedding(&self) -> ParamId {
        self.embedding
    }

    pub fn subword_lstm(&self) -> Option<&LstmCell> {
        match &self.body {
            Body::Lstm(cell) => Some(cell),
            _ => None,
        }
    }

    /// Word vectors (`words.len() × output_dim`) for the given word ids.
    pub fn compose<T: Real>(&self, g: &mut Graph<'_, T>, table: &SubwordTable, words: &[usize]) -> Result<Var> {
        if words.is_empty() {
            return Err(Error::Contract("compose called with no words".into()));
        }
        if let Some(&bad) = words.iter().find(|&&w| w >= self.shape.words || w >= table.words()) {
            return Err(Error::Index {
                what: "word id",
                index: bad,
                bound: self.shape.words,
            });
        }
        let e = g.param(self.embedding);
        if let Body::Direct = self.body {
            let ids: Vec<Option<usize>> = words.iter().map(|&w| Some(w)).collect();
            let x = g.gather_rows(e, &ids)?;
            return self.highway.forward(g, x);
        }
        let n = table.n;
        let b = words.len();
        let ds = self.config.d_s;
        let lengths: Vec<usize> = words.iter().map(|&w| table.lengths[w]).collect();
        let mut ids: Vec<Option<usize>> = Vec::with_capacity(b * n);
        for &w in words {
            ids.extend(table.row(w).iter().map(|&s| (s != PAD_ID).then_some(s)));
        }
        let x = match &self.body {
            Body::Direct => unreachable!(),
            Body::Lstm(cell) => {
                let d = cell.hidden;
                let steps = lengths.iter().copied().max().unwrap_or(1);
                let mut h = g.constant(Tensor::zeros(&[b, d]));
                let mut c = g.constant(Tensor::zeros(&[b, d]));
                for t in 0..steps {
                    let col: Vec<Option<usize>> = (0..b).map(|r| ids[r * n + t]).collect();
                    let xt = g.gather_rows(e, &col)?;
                    let (h_new, c_new) = cell.step(g, xt, h, c)?;
                    if lengths.iter().all(|&l| l > t) {
                        h = h_new;
                        c = c_new;
                    } else {
                        let live: Vec<bool> = lengths.iter().map(|&l| l > t).collect();
                        h = g.where_rows(&live, h_new, h)?;
                        c = g.where_rows(&live, c_new, c)?;
                    }
                }
                h
            }
            Body::Cnn(banks) => {
                let seq = g.gather_rows(e, &ids)?;
                let seq = g.reshape(seq, &[b, n * ds])?;
                let mut outs = Vec::with_capacity(banks.len());
                for &(w, bias, width) in banks {
                    let positions: Vec<usize> = lengths.iter().map(|&l| l.max(width)).collect();
                    let (wv, bv) = (g.param(w), g.param(bias));
                    outs.push(g.conv_max_over_time(seq, wv, bv, width, n, &positions)?);
                }
                if outs.len() == 1 {
                    outs[0]
                } else {
                    g.concat_cols(&outs)?
                }
            }
            Body::Concat { w, b: bias } => {
                let (wv, bv) = (g.param(*w), g.param(*bias));
                if n * ds != g.shape(wv)[0] {
                    return Err(Error::dim("concat composition", &[n, ds], g.shape(wv)));
                }
                let seq = g.gather_rows(e, &ids)?;
                let seq = g.reshape(seq, &[b, n * ds])?;
                g.affine(seq, wv, bv)?
            }
            Body::Linear { scores, projection } => {
                let seq = g.gather_rows(e, &ids)?;
                let seq = g.reshape(seq, &[b, n * ds])?;
                let alpha = self.alpha(g, scores, &ids, &lengths, n)?;
                let x = g.weighted_sum(alpha, seq)?;
                match projection {
                    Some((pw, pb)) => {
                        let (pw, pb) = (g.param(*pw), g.param(*pb));
                        g.affine(x, pw, pb)?
                    }
                    None => x,
                }
            }
        };
        self.highway.forward(g, x)
    }

    fn alpha<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        scores: &Option<(ParamId, Option<ParamId>)>,
        ids: &[Option<usize>],
        lengths: &[usize],
        n: usize,
    ) -> Result<Var> {
        let b = lengths.len();
        match scores {
            None => {
                let mut alpha = vec![T::zero(); b * n];
                for (r, &l) in lengths.iter().enumerate() {
                    let w = if self.config.variant == Variant::SylAvg {
                        T::one() / T::of(l as f64)
                    } else {
                        T::one()
                    };
                    alpha[r * n..r * n + l].fill(w);
                }
                Ok(g.constant(Tensor::new(&[b, n], alpha)?))
            }
            Some((a, None)) => {
                let av = g.param(*a);
                if g.shape(av)[1] != n {
                    return Err(Error::dim("avg-a scores", g.shape(av), &[1, n]));
                }
                let tiled = g.gather_rows(av, &vec![Some(0); b])?;
                g.masked_softmax(tiled, lengths)
            }
            Some((a, Some(bias))) => {
                let (av, bv) = (g.param(*a), g.param(*bias));
                if g.shape(av)[1] != n {
                    return Err(Error::dim("avg-b scores", g.shape(av), &[self.shape.subwords, n]));
                }
                let z = g.positional(av, ids)?;
                let z = g.add_bias(z, bv)?;
                g.masked_softmax(z, lengths)
            }
        }
    }

    /// Applies the initialization rule specific to composition: a unit
    /// forget bias for the subword LSTM.
    pub fn init_special<T: Real>(&self, store: &mut ParamStore<T>) {
        if let Some(cell) = self.subword_lstm() {
            cell.set_forget_bias(store, 1.0);
        }
    }
}
