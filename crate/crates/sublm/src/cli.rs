//! Verbs of the `sublm` binary. Stdout carries data, logs go to stderr.

use std::ffi::OsString;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use sublm_core::analysis::{
    default_frequency_edges, default_p_star_grid, pca_component_counts, ppl_by_frequency, shared_errors_sweep,
    token_records, TokenRecord,
};
use sublm_core::compose::VocabShape;
use sublm_core::compute::{DType, Real};
use sublm_core::lm::WordLm;
use sublm_core::search::{sample_trials, SearchSpace};
use sublm_core::segment::{load_segmentation_overrides, PatternSet, Segmenter, EN_US_PATTERNS};
use sublm_core::train::{check_budget, train, Checkpoint, EpochLog, TrainData};
use sublm_core::vocab::{build_vocabs, Vocabularies};

use crate::checkpoint::{AnyModel, SavedModel};
use crate::config::{parse_count, RunConfig, SegmenterKind};
use crate::error::{read_to_string, write, CliError, CliResult};
use crate::{reports, tune, vocab_io, with_model};

#[derive(Debug, Parser)]
#[command(name = "sublm", version, about = "Subword-aware word-level language modeling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default, Clone)]
struct SegArgs {
    /// Segmentation mode: liang, chars or external.
    #[arg(long)]
    mode: Option<String>,
    /// TeX hyphenation pattern file (defaults to the bundled en-US set).
    #[arg(long)]
    patterns: Option<PathBuf>,
    /// Hyphenation exceptions, one hyphenated word per line.
    #[arg(long)]
    exceptions: Option<PathBuf>,
    /// `word<TAB>parts` segmentations for external mode.
    #[arg(long)]
    overrides: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Vocabulary directory from `build-vocab`; built from the config's
    /// training split when absent.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Parameter budget, e.g. 5M; `none` disables the check.
    #[arg(long)]
    budget: Option<String>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[command(flatten)]
    seg: SegArgs,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Hyphenate whitespace-separated words, keeping the line layout.
    Syllabify {
        #[command(flatten)]
        seg: SegArgs,
        #[arg(long, default_value = "-")]
        separator: String,
        /// Input file; stdin when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build word and subword vocabularies from a training corpus.
    BuildVocab {
        #[arg(long)]
        train: PathBuf,
        #[command(flatten)]
        seg: SegArgs,
        #[arg(long, value_parser = count)]
        word_cap: Option<usize>,
        #[arg(long, value_parser = count)]
        subword_cap: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model; writes model.slm, train.log and vocab/ into --out.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Perplexity of checkpoints on corpus splits.
    Eval {
        #[arg(long, required = true)]
        checkpoint: Vec<PathBuf>,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, required = true)]
        split: Vec<PathBuf>,
        /// Leave the tokens/sec column empty so output is reproducible.
        #[arg(long)]
        no_timing: bool,
        /// Also write the table as TSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for `position<TAB>word_id<TAB>prob` dumps.
        #[arg(long)]
        probs: Option<PathBuf>,
    },
    /// Random hyperparameter search under a parameter budget.
    Tune {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 100_000)]
        max_attempts: usize,
        /// Ranked trial table as TSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Shared-error, frequency and PCA reports for checkpoints on one split.
    Analyze {
        #[arg(long, required = true)]
        checkpoint: Vec<PathBuf>,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        split: PathBuf,
        /// Comma-separated thresholds, default 0.1,...,0.9.
        #[arg(long)]
        p_star_grid: Option<String>,
        /// Comma-separated training-count edges, default 0,1,10,100,...
        #[arg(long)]
        freq_bins: Option<String>,
        /// Comma-separated explained-variance fractions.
        #[arg(long, default_value = "0.5,0.8,0.9,0.95,0.99")]
        pca_thresholds: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parameter count of a configuration without training.
    Params {
        #[arg(long)]
        config: PathBuf,
        /// Take the vocabulary shape from a vocabulary directory.
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        words: usize,
        #[arg(long, default_value_t = 6_000)]
        subwords: usize,
        #[arg(long, default_value_t = 8)]
        max_subwords: usize,
        #[arg(long)]
        budget: Option<String>,
        #[arg(long)]
        tolerance: Option<f64>,
    },
}

fn count(v: &str) -> Result<usize, String> {
    parse_count(v).ok_or_else(|| format!("`{v}` is not a count such as 10000 or 5M"))
}

/// Parses arguments, runs the verb and returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match execute(cli.command, &mut out).and_then(|()| out.flush().map_err(|e| CliError::io(Path::new("<stdout>"), e))) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn emit(out: &mut dyn Write, text: &str) -> CliResult<()> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

fn execute(command: Command, out: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::Syllabify {
            seg,
            separator,
            input,
            out: path,
        } => syllabify(&seg, &separator, input.as_deref(), path.as_deref(), out),
        Command::BuildVocab {
            train,
            seg,
            word_cap,
            subword_cap,
            out: dir,
        } => {
            let segmenter = make_segmenter(&seg, None)?;
            let text = read_to_string(&train)?;
            let vocabs = build_vocabs(&text, &segmenter, word_cap, subword_cap)?;
            vocab_io::save(&dir, &vocabs, segmenter.mode_name())?;
            emit(out, &vocab_summary(&vocabs))
        }
        Command::Train { run, out: dir } => train_cmd(&run, &dir, out),
        Command::Eval {
            checkpoint,
            vocab,
            split,
            no_timing,
            out: path,
            probs,
        } => eval_cmd(&checkpoint, &vocab, &split, no_timing, path.as_deref(), probs.as_deref(), out),
        Command::Tune {
            run,
            trials,
            max_attempts,
            out: path,
        } => tune_cmd(&run, trials, max_attempts, path.as_deref(), out),
        Command::Analyze {
            checkpoint,
            vocab,
            split,
            p_star_grid,
            freq_bins,
            pca_thresholds,
            out: dir,
        } => analyze_cmd(
            &checkpoint,
            &vocab,
            &split,
            p_star_grid.as_deref(),
            freq_bins.as_deref(),
            &pca_thresholds,
            &dir,
            out,
        ),
        Command::Params {
            config,
            vocab,
            words,
            subwords,
            max_subwords,
            budget,
            tolerance,
        } => {
            let cfg = RunConfig::load(&config)?;
            let shape = match vocab {
                Some(dir) => vocab_io::shape(&vocab_io::load(&dir)?),
                None => VocabShape {
                    words,
                    subwords,
                    n: max_subwords,
                },
            };
            let budget = match budget {
                Some(b) => parse_budget(&b)?,
                None => cfg.train.budget,
            };
            params_cmd(&cfg, shape, budget, tolerance.unwrap_or(cfg.train.tolerance), out)
        }
    }
}

fn parse_budget(v: &str) -> CliResult<Option<usize>> {
    if v == "none" {
        return Ok(None);
    }
    count(v).map(Some).map_err(CliError::Usage)
}

fn parse_list<T: std::str::FromStr>(v: &str, flag: &str) -> CliResult<Vec<T>> {
    v.split(',')
        .map(|x| x.trim().parse().map_err(|_| CliError::Usage(format!("--{flag}: cannot parse `{x}`"))))
        .collect()
}

fn make_segmenter(seg: &SegArgs, cfg: Option<&RunConfig>) -> CliResult<Segmenter> {
    let data = cfg.map(|c| c.data.clone()).unwrap_or_default();
    let kind = match &seg.mode {
        Some(m) => m.parse()?,
        None => data.segmenter,
    };
    let patterns = seg.patterns.clone().or(data.patterns);
    let exceptions = seg.exceptions.clone().or(data.exceptions);
    let overrides = seg.overrides.clone().or(data.overrides);
    let pattern_set = |required: bool| -> CliResult<Option<PatternSet>> {
        let exc = exceptions.as_deref().map(read_to_string).transpose()?;
        match (&patterns, exc) {
            (Some(p), exc) => Ok(Some(PatternSet::with_defaults(&read_to_string(p)?, exc.as_deref().unwrap_or(""))?)),
            (None, Some(exc)) => Ok(Some(PatternSet::with_defaults(EN_US_PATTERNS, &exc)?)),
            (None, None) if required => Ok(Some(PatternSet::english())),
            (None, None) => Ok(None),
        }
    };
    match kind {
        SegmenterKind::Liang => Ok(Segmenter::Liang(pattern_set(true)?.expect("patterns"))),
        SegmenterKind::Chars => Ok(Segmenter::Characters),
        SegmenterKind::External => {
            let path = overrides.ok_or_else(|| CliError::Usage("external mode needs --overrides".into()))?;
            let (map, rejected) = load_segmentation_overrides(&read_to_string(&path)?);
            for r in &rejected {
                log::warn!("{}:{}: skipped: {}", path.display(), r.line, r.reason);
            }
            Ok(Segmenter::External {
                overrides: map,
                fallback: pattern_set(false)?,
            })
        }
    }
}

fn syllabify(seg: &SegArgs, sep: &str, input: Option<&Path>, path: Option<&Path>, out: &mut dyn Write) -> CliResult<()> {
    let segmenter = make_segmenter(seg, None)?;
    let text = match input {
        Some(p) => read_to_string(p)?,
        None => {
            let mut s = String::new();
            std::io::stdin()
                .read_to_string(&mut s)
                .map_err(|e| CliError::io(Path::new("<stdin>"), e))?;
            s
        }
    };
    let mut result = String::with_capacity(text.len() * 2);
    for line in text.lines() {
        let words: Vec<String> = line.split_whitespace().map(|w| segmenter.segment(w).joined(sep)).collect();
        result.push_str(&words.join(" "));
        result.push('\n');
    }
    match path {
        Some(p) => write(p, result),
        None => emit(out, &result),
    }
}

fn vocab_summary(v: &Vocabularies) -> String {
    format!(
        "words\t{}\nsubwords\t{}\nmax_subwords\t{}\ntokens\t{}\nword_hash\t{}\nsubword_hash\t{}\n",
        v.word_count(),
        v.subword_count(),
        v.max_subwords(),
        v.token_count(),
        v.word_hash(),
        v.subword_hash()
    )
}

/// Config with command-line overrides applied.
fn load_run(run: &RunArgs) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load(&run.config)?;
    if let Some(s) = run.seed {
        cfg.train.seed = s;
    }
    if let Some(b) = &run.budget {
        cfg.train.budget = parse_budget(b)?;
    }
    if let Some(t) = run.tolerance {
        cfg.train.tolerance = t;
    }
    cfg.train.validate()?;
    Ok(cfg)
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> CliResult<&'a Path> {
    p.as_deref()
        .ok_or_else(|| CliError::Config(format!("the config must set `{key}`")))
}

fn vocabulary(run: &RunArgs, cfg: &RunConfig) -> CliResult<(Vocabularies, &'static str)> {
    match &run.vocab {
        Some(dir) => {
            let meta = read_to_string(&dir.join("meta.txt"))?;
            let mode = match meta.lines().find_map(|l| l.strip_prefix("mode = ")) {
                Some("chars") => "chars",
                Some("external") => "external",
                _ => "liang",
            };
            Ok((vocab_io::load(dir)?, mode))
        }
        None => {
            let segmenter = make_segmenter(&run.seg, Some(cfg))?;
            let text = read_to_string(required(&cfg.data.train, "train")?)?;
            let v = build_vocabs(&text, &segmenter, cfg.data.word_cap, cfg.data.subword_cap)?;
            Ok((v, segmenter.mode_name()))
        }
    }
}

fn encode(vocabs: &Vocabularies, path: &Path) -> CliResult<Vec<usize>> {
    let ids = vocabs.encode_text(&read_to_string(path)?);
    if ids.is_empty() {
        return Err(CliError::Core(sublm_core::Error::EmptyCorpus));
    }
    Ok(ids)
}

struct Prepared {
    cfg: RunConfig,
    vocabs: Vocabularies,
    mode: &'static str,
    table: sublm_core::vocab::SubwordTable,
    train: Vec<usize>,
    valid: Vec<usize>,
}

impl Prepared {
    fn new(run: &RunArgs) -> CliResult<Self> {
        let cfg = load_run(run)?;
        let (vocabs, mode) = vocabulary(run, &cfg)?;
        let train = encode(&vocabs, required(&cfg.data.train, "train")?)?;
        let valid = encode(&vocabs, required(&cfg.data.valid, "valid")?)?;
        let table = vocab_io::table(&vocabs);
        Ok(Prepared {
            cfg,
            vocabs,
            mode,
            table,
            train,
            valid,
        })
    }

    fn data(&self) -> TrainData<'_> {
        TrainData {
            table: &self.table,
            subwords: self.vocabs.subword_count(),
            train: &self.train,
            valid: &self.valid,
            eos: self.vocabs.eos_id(),
        }
    }
}

fn trained<T: Real>(p: &Prepared, on_epoch: &mut dyn FnMut(&EpochLog)) -> Result<(SavedModel, Vec<EpochLog>), (CliError, Option<SavedModel>, Vec<EpochLog>)> {
    let wrap = |c: Checkpoint<T>| SavedModel {
        train: p.cfg.train.clone(),
        model: AnyModel::from_model(c.model),
        word_hash: p.vocabs.word_hash(),
        subword_hash: p.vocabs.subword_hash(),
        epoch: c.epoch,
        best_val_ppl: c.best_val_ppl,
    };
    match train::<T>(&p.cfg.train, &p.data(), on_epoch) {
        Ok(o) => Ok((wrap(o.best), o.history)),
        Err(a) => Err((a.error.into(), a.last_good.map(wrap), a.history)),
    }
}

fn train_cmd(run: &RunArgs, dir: &Path, out: &mut dyn Write) -> CliResult<()> {
    let p = Prepared::new(run)?;
    let params = p.cfg.train.model.parameter_count(p.data().shape());
    log::info!(
        "{} with {params} parameters, |W| {} |S| {} n {}",
        p.cfg.train.model.composition.variant,
        p.vocabs.word_count(),
        p.vocabs.subword_count(),
        p.vocabs.max_subwords()
    );
    vocab_io::save(&dir.join("vocab"), &p.vocabs, p.mode)?;
    let mut lines = Vec::new();
    let mut on_epoch = |e: &EpochLog| {
        let line = reports::training_log(std::slice::from_ref(e));
        let _ = out.write_all(line.as_bytes());
        lines.push(line);
    };
    let result = match p.cfg.dtype {
        DType::F64 => trained::<f64>(&p, &mut on_epoch),
        DType::F32 => trained::<f32>(&p, &mut on_epoch),
    };
    drop(on_epoch);
    match result {
        Ok((saved, history)) => {
            write(&dir.join("train.log"), reports::training_log(&history))?;
            saved.save(&dir.join("model.slm"))?;
            if let Some(test) = &p.cfg.data.test {
                let stream = encode(&p.vocabs, test)?;
                let ppl = with_model!(&saved.model, m => m.perplexity(&p.table, &stream, p.vocabs.eos_id(), p.cfg.train.eval_window))?;
                log::info!("test ppl {ppl:.3} (epoch {} checkpoint)", saved.epoch);
            }
            Ok(())
        }
        Err((error, last_good, history)) => {
            write(&dir.join("train.log"), reports::training_log(&history))?;
            if let Some(s) = last_good {
                let path = dir.join("last_good.slm");
                s.save(&path)?;
                log::warn!("saved the epoch {} checkpoint to {}", s.epoch, path.display());
            }
            Err(error)
        }
    }
}

fn label(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    match path.parent().and_then(Path::file_name) {
        Some(parent) if stem == "model" => parent.to_string_lossy().into_owned(),
        _ => stem,
    }
}

fn load_checked(path: &Path, vocabs: &Vocabularies) -> CliResult<SavedModel> {
    let saved = SavedModel::load(path)?;
    saved
        .check_vocab(vocabs)
        .map_err(|e| CliError::VocabMismatch(format!("{}: {e}", path.display())))?;
    Ok(saved)
}

#[allow(clippy::too_many_arguments)]
fn eval_cmd(
    checkpoints: &[PathBuf],
    vocab: &Path,
    splits: &[PathBuf],
    no_timing: bool,
    tsv: Option<&Path>,
    probs: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult<()> {
    let vocabs = vocab_io::load(vocab)?;
    let table = vocab_io::table(&vocabs);
    let streams: Vec<(String, Vec<usize>)> = splits.iter().map(|s| Ok((label(s), encode(&vocabs, s)?))).collect::<CliResult<_>>()?;
    let mut rows = Vec::new();
    for path in checkpoints {
        let saved = load_checked(path, &vocabs)?;
        let name = label(path);
        for (split, stream) in &streams {
            let start = Instant::now();
            let ev = with_model!(&saved.model, m => m
                .score_stream(&table, stream, vocabs.eos_id(), saved.train.eval_window, probs.is_some())
                .map(|e| (e.perplexity(), e.tokens, e.probs)))?;
            let secs = start.elapsed().as_secs_f64();
            if let Some(dir) = probs {
                let recs = token_records(stream, &ev.2, vocabs.word_freq())?;
                write(&dir.join(format!("{name}.{split}.probs.tsv")), reports::probability_records(&recs))?;
            }
            rows.push(reports::EvalRow {
                model: name.clone(),
                split: split.clone(),
                tokens: ev.1,
                ppl: ev.0,
                params: saved.model.count_parameters(),
                tokens_per_sec: (!no_timing).then(|| ev.1 as f64 / secs.max(1e-9)),
            });
        }
    }
    if let Some(p) = tsv {
        write(p, reports::eval_tsv(&rows))?;
    }
    emit(out, &reports::eval_text(&rows))
}

fn tune_cmd(run: &RunArgs, trials: usize, max_attempts: usize, tsv: Option<&Path>, out: &mut dyn Write) -> CliResult<()> {
    let p = Prepared::new(run)?;
    let budget = p
        .cfg
        .train
        .budget
        .ok_or_else(|| CliError::Usage("tune needs a parameter budget (--budget or `budget` in the config)".into()))?;
    let data = p.data();
    let sampled = sample_trials(
        &p.cfg.train,
        data.shape(),
        &SearchSpace::default(),
        budget,
        p.cfg.train.tolerance,
        trials,
        p.cfg.train.seed,
        max_attempts,
    )?;
    let threads = tune::thread_count();
    log::info!("{} trials on {threads} thread(s)", sampled.len());
    let results = tune::run_trials(&sampled, &data, p.cfg.dtype, threads);
    let table = reports::trials_tsv(&results);
    if let Some(path) = tsv {
        write(path, &table)?;
    }
    emit(out, &table)
}

/// Joins TSV reports, keeping only the first header row.
fn concat_tsv(parts: &[String]) -> String {
    let mut s = String::new();
    for (i, p) in parts.iter().enumerate() {
        if i == 0 {
            s.push_str(p);
        } else if let Some((_, body)) = p.split_once('\n') {
            s.push_str(body);
        }
    }
    s
}

struct Analyzed {
    name: String,
    records: Vec<TokenRecord>,
    embeddings: Vec<f64>,
    dims: usize,
}

fn analyze_one<T: Real>(
    m: &sublm_core::model::Model<T>,
    table: &sublm_core::vocab::SubwordTable,
    vocabs: &Vocabularies,
    stream: &[usize],
    window: usize,
) -> CliResult<(Vec<TokenRecord>, Vec<f64>, usize)> {
    let ev = m.score_stream(table, stream, vocabs.eos_id(), window, true)?;
    let records = token_records(stream, &ev.probs, vocabs.word_freq())?;
    let e = m.embed_vocab(table)?;
    Ok((records, e.data().iter().map(|x| x.as_f64()).collect(), e.cols()))
}

#[allow(clippy::too_many_arguments)]
fn analyze_cmd(
    checkpoints: &[PathBuf],
    vocab: &Path,
    split: &Path,
    grid: Option<&str>,
    bins: Option<&str>,
    thresholds: &str,
    dir: &Path,
    out: &mut dyn Write,
) -> CliResult<()> {
    let vocabs = vocab_io::load(vocab)?;
    let table = vocab_io::table(&vocabs);
    let stream = encode(&vocabs, split)?;
    let grid = match grid {
        Some(g) => parse_list(g, "p-star-grid")?,
        None => default_p_star_grid(),
    };
    let edges: Vec<u64> = match bins {
        Some(b) => parse_list(b, "freq-bins")?,
        None => default_frequency_edges(vocabs.word_freq().iter().copied().max().unwrap_or(0)),
    };
    let thresholds: Vec<f64> = parse_list(thresholds, "pca-thresholds")?;

    let mut models = Vec::new();
    for path in checkpoints {
        let saved = load_checked(path, &vocabs)?;
        let window = saved.train.eval_window;
        let (records, embeddings, dims) = with_model!(&saved.model, m => analyze_one(m, &table, &vocabs, &stream, window))?;
        models.push(Analyzed {
            name: label(path),
            records,
            embeddings,
            dims,
        });
    }

    let mut freq = Vec::new();
    let mut pca = Vec::new();
    for m in &models {
        write(&dir.join(format!("probs_{}.tsv", m.name)), reports::probability_records(&m.records))?;
        freq.push(reports::frequency_tsv(&m.name, &ppl_by_frequency(&m.records, &edges)?));
        pca.push(reports::pca_tsv(&m.name, m.dims, &pca_component_counts(&m.embeddings, m.dims, &thresholds)?));
    }
    let mut shared = Vec::new();
    for (i, a) in models.iter().enumerate() {
        for b in &models[i + 1..] {
            let sweep = shared_errors_sweep(&a.records, &b.records, &grid)?;
            shared.push(reports::shared_errors_tsv(&a.name, &b.name, &sweep));
        }
    }
    let freq = concat_tsv(&freq);
    let pca = concat_tsv(&pca);
    write(&dir.join("frequency.tsv"), &freq)?;
    write(&dir.join("pca.tsv"), &pca)?;
    let mut summary = format!("{freq}\n{pca}");
    if !shared.is_empty() {
        let shared = concat_tsv(&shared);
        write(&dir.join("shared_errors.tsv"), &shared)?;
        summary.push('\n');
        summary.push_str(&shared);
    }
    emit(out, &summary)
}

fn params_cmd(cfg: &RunConfig, shape: VocabShape, budget: Option<usize>, tolerance: f64, out: &mut dyn Write) -> CliResult<()> {
    let model = &cfg.train.model;
    model.composition.validate(shape)?;
    let composition = model.composition.parameter_count(shape);
    let lm = WordLm::parameter_count(model.composition.output_dim(), model.d_lm, shape.words, model.lm_layers);
    let total = composition + lm;
    let text = format!(
        "variant\t{}\nwords\t{}\nsubwords\t{}\nmax_subwords\t{}\ncomposition\t{composition}\nlm\t{lm}\ntotal\t{total}\n",
        model.composition.variant, shape.words, shape.subwords, shape.n
    );
    emit(out, &text)?;
    if let Some(b) = budget {
        check_budget(total, b, tolerance)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(label(Path::new("runs/syl-concat/model.slm")), "syl-concat");
        assert_eq!(label(Path::new("a/b/best.slm")), "best");
        assert_eq!(label(Path::new("data/test.txt")), "test");
    }

    #[test]
    fn tsv_concatenation_keeps_one_header() {
        let parts = ["h\n1\n".to_string(), "h\n2\n".to_string()];
        assert_eq!(concat_tsv(&parts), "h\n1\n2\n");
    }

    #[test]
    fn unknown_verbs_and_flags_are_usage_errors() {
        assert_eq!(run(["sublm", "frobnicate"]), 2);
        assert_eq!(run(["sublm", "params", "--nope"]), 2);
        assert_eq!(run(["sublm", "--help"]), 0);
    }
}
