//! Flat `key = value` run configurations.
//!
//! `#` starts a comment. Every key may appear once; unknown keys are errors.
//! `recipe` (`small` or `large`) and `variant` pick the starting point, the
//! remaining keys override it. Relative data paths resolve against the
//! directory holding the file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sublm_core::compose::{filter_schedule, CompositionConfig, Filter, Variant};
use sublm_core::compute::DType;
use sublm_core::lm::Proposal;
use sublm_core::model::ModelConfig;
use sublm_core::train::{SoftmaxKind, TrainConfig};

use crate::error::{read_to_string, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmenterKind {
    Liang,
    Chars,
    External,
}

impl FromStr for SegmenterKind {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "liang" => Ok(SegmenterKind::Liang),
            "chars" => Ok(SegmenterKind::Chars),
            "external" => Ok(SegmenterKind::External),
            _ => Err(CliError::Config(format!("unknown segmenter `{s}` (liang, chars, external)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub segmenter: SegmenterKind,
    pub patterns: Option<PathBuf>,
    pub exceptions: Option<PathBuf>,
    pub overrides: Option<PathBuf>,
    pub word_cap: Option<usize>,
    pub subword_cap: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train: None,
            valid: None,
            test: None,
            segmenter: SegmenterKind::Liang,
            patterns: None,
            exceptions: None,
            overrides: None,
            word_cap: None,
            subword_cap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataConfig,
    pub train: TrainConfig,
    pub dtype: DType,
}

const KEYS: &[&str] = &[
    "recipe",
    "variant",
    "train",
    "valid",
    "test",
    "segmenter",
    "patterns",
    "exceptions",
    "overrides",
    "word_cap",
    "subword_cap",
    "d_s",
    "d_w",
    "d_hw",
    "highway_layers",
    "cnn_max_width",
    "cnn_unit",
    "filters",
    "d_lm",
    "lm_layers",
    "dropout",
    "bptt",
    "batch",
    "epochs",
    "lr",
    "lr_decay",
    "clip_norm",
    "init_range",
    "seed",
    "budget",
    "tolerance",
    "softmax",
    "sample_fraction",
    "proposal",
    "eval_window",
    "dtype",
];

fn bad(m: impl Into<String>) -> CliError {
    CliError::Config(m.into())
}

/// Parses `text` into `key → (line, value)`.
fn entries(text: &str) -> CliResult<BTreeMap<String, (usize, String)>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("line {}: expected `key = value`, got `{line}`", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(bad(format!("line {}: unknown key `{k}`", i + 1)));
        }
        if v.is_empty() {
            return Err(bad(format!("line {}: `{k}` has no value", i + 1)));
        }
        if map.insert(k.to_string(), (i + 1, v.to_string())).is_some() {
            return Err(bad(format!("line {}: `{k}` set twice", i + 1)));
        }
    }
    Ok(map)
}

/// Integer with an optional `k`/`M` suffix, e.g. `5M`.
pub fn parse_count(v: &str) -> Option<usize> {
    let (digits, mult) = match v.as_bytes().last()? {
        b'k' | b'K' => (&v[..v.len() - 1], 1_000.0),
        b'm' | b'M' => (&v[..v.len() - 1], 1_000_000.0),
        _ => (v, 1.0),
    };
    if mult == 1.0 {
        return digits.parse().ok();
    }
    let x: f64 = digits.parse().ok()?;
    (x >= 0.0).then(|| (x * mult).round() as usize)
}

fn parse_filters(v: &str) -> Option<Vec<Filter>> {
    v.split(',')
        .map(|p| {
            let (w, d) = p.trim().split_once(':')?;
            Some(Filter {
                width: w.trim().parse().ok()?,
                depth: d.trim().parse().ok()?,
            })
        })
        .collect()
}

struct Reader {
    map: BTreeMap<String, (usize, String)>,
}

impl Reader {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.map.remove(key)
    }

    fn parse<T: FromStr>(&mut self, key: &str, what: &str) -> CliResult<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| bad(format!("line {line}: `{key}` must be {what}, got `{v}`"))),
        }
    }

    fn set<T: FromStr>(&mut self, key: &str, what: &str, slot: &mut T) -> CliResult<()> {
        if let Some(v) = self.parse(key, what)? {
            *slot = v;
        }
        Ok(())
    }

    fn count(&mut self, key: &str) -> CliResult<Option<usize>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => parse_count(&v)
                .map(Some)
                .ok_or_else(|| bad(format!("line {line}: `{key}` must be a count such as 5M, got `{v}`"))),
        }
    }

    fn path(&mut self, key: &str, base: Option<&Path>) -> Option<PathBuf> {
        self.take(key).map(|(_, v)| match base {
            Some(b) if Path::new(&v).is_relative() => b.join(v),
            _ => PathBuf::from(v),
        })
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = read_to_string(path)?;
        Self::parse(&text, path.parent())
    }

    pub fn parse(text: &str, base: Option<&Path>) -> CliResult<Self> {
        let mut r = Reader { map: entries(text)? };
        let variant: Variant = match r.take("variant") {
            None => return Err(bad("`variant` is required")),
            Some((line, v)) => v.parse().map_err(|_| {
                let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
                bad(format!("line {line}: unknown variant `{v}` ({})", names.join(", ")))
            })?,
        };
        let mut comp = CompositionConfig::preselection(variant);
        let d_hw_given = r.map.contains_key("d_hw");
        r.set("d_s", "a positive integer", &mut comp.d_s)?;
        r.set("d_w", "a positive integer", &mut comp.d_w)?;
        r.set("d_hw", "a positive integer", &mut comp.d_hw)?;
        r.set("highway_layers", "an integer", &mut comp.highway_layers)?;
        let max_width: Option<usize> = r.parse("cnn_max_width", "an integer")?;
        let unit: Option<usize> = r.parse("cnn_unit", "an integer")?;
        let filters = match r.take("filters") {
            None => None,
            Some((line, v)) => Some(
                parse_filters(&v).ok_or_else(|| bad(format!("line {line}: filters look like `1:50,2:100`, got `{v}`")))?,
            ),
        };
        if variant == Variant::SylCnn {
            let banks = match (filters, max_width, unit) {
                (Some(f), None, None) => f,
                (Some(_), _, _) => return Err(bad("give either `filters` or `cnn_max_width`/`cnn_unit`, not both")),
                (None, l, Some(c)) => filter_schedule(l.unwrap_or(3), c),
                (None, Some(l), None) => CompositionConfig::preselection_cnn(l)
                    .map_err(|e| bad(format!("{e}; set `cnn_unit`")))?
                    .filters,
                (None, None, None) => comp.filters.clone(),
            };
            let total: usize = banks.iter().map(|f| f.depth).sum();
            if d_hw_given && comp.d_hw != total {
                return Err(bad(format!("syl-cnn d_hw is the total filter depth {total}; drop `d_hw` = {}", comp.d_hw)));
            }
            comp.set_filters(banks);
        } else if filters.is_some() || max_width.is_some() || unit.is_some() {
            return Err(bad(format!("filter settings only apply to syl-cnn, not {variant}")));
        }

        let recipe = r.take("recipe").map(|(_, v)| v);
        let model = ModelConfig::new(comp, 300);
        let mut train = match recipe.as_deref() {
            None | Some("small") => TrainConfig::small_data(model),
            Some("large") => TrainConfig::large_data(model),
            Some(other) => return Err(bad(format!("unknown recipe `{other}` (small, large)"))),
        };
        r.set("d_lm", "a positive integer", &mut train.model.d_lm)?;
        r.set("lm_layers", "a positive integer", &mut train.model.lm_layers)?;
        r.set("dropout", "a number", &mut train.model.dropout)?;
        r.set("bptt", "a positive integer", &mut train.bptt)?;
        r.set("batch", "a positive integer", &mut train.batch)?;
        r.set("epochs", "a positive integer", &mut train.epochs)?;
        r.set("lr", "a number", &mut train.lr)?;
        r.set("lr_decay", "a number", &mut train.lr_decay)?;
        r.set("clip_norm", "a number", &mut train.clip_norm)?;
        r.set("init_range", "a number", &mut train.init_range)?;
        r.set("seed", "an integer", &mut train.seed)?;
        r.set("tolerance", "a number", &mut train.tolerance)?;
        r.set("eval_window", "a positive integer", &mut train.eval_window)?;
        match r.take("budget") {
            Some((_, v)) if v == "none" => train.budget = None,
            Some((line, v)) => {
                train.budget = Some(
                    parse_count(&v).ok_or_else(|| bad(format!("line {line}: `budget` must be a count such as 5M, got `{v}`")))?,
                )
            }
            None => {}
        }
        let softmax = r.take("softmax").map(|(_, v)| v);
        let fraction: Option<f64> = r.parse("sample_fraction", "a number")?;
        let proposal = match r.take("proposal") {
            None => None,
            Some((_, v)) if v == "log-uniform" => Some(Proposal::LogUniform),
            Some((_, v)) if v == "uniform" => Some(Proposal::Uniform),
            Some((line, v)) => return Err(bad(format!("line {line}: unknown proposal `{v}` (log-uniform, uniform)"))),
        };
        let (def_fraction, def_proposal) = match train.softmax {
            SoftmaxKind::Sampled { fraction, proposal } => (fraction, proposal),
            SoftmaxKind::Full => (0.2, Proposal::LogUniform),
        };
        let sampled = match softmax.as_deref() {
            Some("full") => false,
            Some("sampled") => true,
            None => matches!(train.softmax, SoftmaxKind::Sampled { .. }),
            Some(other) => return Err(bad(format!("unknown softmax `{other}` (full, sampled)"))),
        };
        if !sampled && (fraction.is_some() || proposal.is_some()) {
            return Err(bad("`sample_fraction` and `proposal` need `softmax = sampled`"));
        }
        train.softmax = if sampled {
            SoftmaxKind::Sampled {
                fraction: fraction.unwrap_or(def_fraction),
                proposal: proposal.unwrap_or(def_proposal),
            }
        } else {
            SoftmaxKind::Full
        };
        let dtype = match r.take("dtype") {
            None => DType::F64,
            Some((_, v)) if v == "f64" => DType::F64,
            Some((_, v)) if v == "f32" => DType::F32,
            Some((line, v)) => return Err(bad(format!("line {line}: unknown dtype `{v}` (f64, f32)"))),
        };

        let mut data = DataConfig {
            train: r.path("train", base),
            valid: r.path("valid", base),
            test: r.path("test", base),
            patterns: r.path("patterns", base),
            exceptions: r.path("exceptions", base),
            overrides: r.path("overrides", base),
            ..DataConfig::default()
        };
        if let Some((_, v)) = r.take("segmenter") {
            data.segmenter = v.parse()?;
        }
        data.word_cap = r.count("word_cap")?;
        data.subword_cap = r.count("subword_cap")?;
        debug_assert!(r.map.is_empty(), "unread keys {:?}", r.map.keys());

        train.validate()?;
        if train.model.lm_layers == 0 || train.model.d_lm == 0 {
            return Err(bad("d_lm and lm_layers must be positive"));
        }
        Ok(RunConfig { data, train, dtype })
    }
}

/// Canonical text of the model and optimization settings (no data paths).
/// Parsing it back yields the same [`TrainConfig`] and dtype.
pub fn echo(train: &TrainConfig, dtype: DType) -> String {
    let c = &train.model.composition;
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv("variant", c.variant.name().into());
    kv("d_s", c.d_s.to_string());
    kv("d_w", c.d_w.to_string());
    if c.variant == Variant::SylCnn {
        let f: Vec<String> = c.filters.iter().map(|f| format!("{}:{}", f.width, f.depth)).collect();
        kv("filters", f.join(","));
    } else {
        kv("d_hw", c.d_hw.to_string());
    }
    kv("highway_layers", c.highway_layers.to_string());
    kv("d_lm", train.model.d_lm.to_string());
    kv("lm_layers", train.model.lm_layers.to_string());
    kv("dropout", format!("{:?}", train.model.dropout));
    kv("bptt", train.bptt.to_string());
    kv("batch", train.batch.to_string());
    kv("epochs", train.epochs.to_string());
    kv("lr", format!("{:?}", train.lr));
    kv("lr_decay", format!("{:?}", train.lr_decay));
    kv("clip_norm", format!("{:?}", train.clip_norm));
    kv("init_range", format!("{:?}", train.init_range));
    kv("seed", train.seed.to_string());
    kv("budget", train.budget.map_or_else(|| "none".into(), |b| b.to_string()));
    kv("tolerance", format!("{:?}", train.tolerance));
    match train.softmax {
        SoftmaxKind::Full => kv("softmax", "full".into()),
        SoftmaxKind::Sampled { fraction, proposal } => {
            kv("softmax", "sampled".into());
            kv("sample_fraction", format!("{fraction:?}"));
            kv(
                "proposal",
                match proposal {
                    Proposal::LogUniform => "log-uniform".into(),
                    Proposal::Uniform => "uniform".into(),
                },
            );
        }
    }
    kv("eval_window", train.eval_window.to_string());
    kv(
        "dtype",
        match dtype {
            DType::F64 => "f64".into(),
            DType::F32 => "f32".into(),
        },
    );
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_uses_presets() {
        let c = RunConfig::parse("variant = syl-concat\n", None).unwrap();
        assert_eq!(c.train.model.composition, CompositionConfig::preselection(Variant::SylConcat));
        assert_eq!(c.train.bptt, 70);
        assert_eq!(c.dtype, DType::F64);
        let l = RunConfig::parse("variant = syl-sum\nrecipe = large", None).unwrap();
        assert_eq!(l.train.batch, 100);
        assert!(matches!(l.train.softmax, SoftmaxKind::Sampled { .. }));
    }

    #[test]
    fn unknown_and_duplicate_keys_fail() {
        assert!(RunConfig::parse("variant = syl-sum\nwidth = 3", None).is_err());
        assert!(RunConfig::parse("variant = syl-sum\nd_s = 3\nd_s = 4", None).is_err());
        assert!(RunConfig::parse("d_s = 3", None).is_err());
        assert!(RunConfig::parse("variant = syl-sum\nd_s = three", None).is_err());
        assert!(RunConfig::parse("variant = syl-sum\nfilters = 1:3", None).is_err());
    }

    #[test]
    fn echo_round_trips() {
        let texts = [
            "variant = syl-cnn\ncnn_max_width = 2\nd_lm = 650\nbudget = 20M\ndtype = f32\nseed = 9",
            "variant = syl-avg-b\nrecipe = large\nsample_fraction = 0.25\nproposal = uniform\nlr = 0.7",
            "variant = word-direct\nd_w = 200\ndropout = 0.25\nbudget = 5000000",
        ];
        for t in texts {
            let c = RunConfig::parse(t, None).unwrap();
            let again = RunConfig::parse(&echo(&c.train, c.dtype), None).unwrap();
            assert_eq!(again.train, c.train, "{t}");
            assert_eq!(again.dtype, c.dtype);
        }
    }

    #[test]
    fn cnn_settings() {
        let c = RunConfig::parse("variant = syl-cnn\ncnn_max_width = 4", None).unwrap();
        assert_eq!(c.train.model.composition.d_hw, 350);
        let c = RunConfig::parse("variant = syl-cnn\nfilters = 1:10, 2:20", None).unwrap();
        assert_eq!(c.train.model.composition.d_hw, 30);
        assert!(RunConfig::parse("variant = syl-cnn\nfilters = 1:10\nd_hw = 11", None).is_err());
        assert!(RunConfig::parse("variant = syl-cnn\ncnn_max_width = 5", None).is_err());
    }

    #[test]
    fn relative_paths_resolve_against_the_file() {
        let c = RunConfig::parse("variant = syl-sum\ntrain = data/train.txt\ntest = /abs/test.txt", Some(Path::new("/cfg"))).unwrap();
        assert_eq!(c.data.train.unwrap(), Path::new("/cfg/data/train.txt"));
        assert_eq!(c.data.test.unwrap(), Path::new("/abs/test.txt"));
    }

    #[test]
    fn counts_with_suffixes() {
        assert_eq!(parse_count("5M"), Some(5_000_000));
        assert_eq!(parse_count("1.5k"), Some(1500));
        assert_eq!(parse_count("42"), Some(42));
        assert_eq!(parse_count("x"), None);
    }
}
