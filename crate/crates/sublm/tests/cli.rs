use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sublm"));
    c.env("RUST_LOG", "warn");
    c
}

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn sublm")
}

fn run_stdin(args: &[&str], input: &str) -> Output {
    let mut child = bin()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn sublm");
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "exit {:?}\n{}", o.status.code(), String::from_utf8_lossy(&o.stderr));
    stdout(o)
}

fn corpus(seed: u64, lines: usize) -> String {
    let words = [
        "the", "people", "constitution", "unite", "river", "table", "garden", "yellow", "morning", "quickly", "window",
        "paper",
    ];
    let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
    let mut s = String::new();
    for _ in 0..lines {
        let len = 3 + (x >> 60) as usize % 4;
        let line: Vec<&str> = (0..len)
            .map(|_| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                words[(x >> 33) as usize % words.len()]
            })
            .collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

const TINY: &str = "variant = syl-concat
d_s = 6
d_hw = 8
highway_layers = 1
d_lm = 12
epochs = 2
bptt = 5
batch = 2
eval_window = 8
train = train.txt
valid = valid.txt
test = test.txt
";

fn workspace(cfg: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("train.txt"), corpus(1, 40)).unwrap();
    std::fs::write(dir.path().join("valid.txt"), corpus(2, 8)).unwrap();
    std::fs::write(dir.path().join("test.txt"), corpus(3, 8)).unwrap();
    std::fs::write(dir.path().join("run.cfg"), cfg).unwrap();
    dir
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn syllabify_with_the_pattern_file() {
    let pat = repo().join("crates/core/data/hyph-en-us.pat.txt");
    let o = run_stdin(&["syllabify", "--patterns", pat.to_str().unwrap()], "unconstitutional\n");
    assert_eq!(ok(&o), "un-con-sti-tu-tional\n");
    let o = run_stdin(&["syllabify", "--mode", "chars", "--separator", " "], "cat dog\n\nab\n");
    assert_eq!(ok(&o), "c a t d o g\n\na b\n");
}

#[test]
fn params_for_the_preset_configs() {
    for v in ["word-direct", "syl-lstm", "syl-cnn", "syl-sum", "syl-avg", "syl-avg-a", "syl-avg-b", "syl-concat"] {
        let cfg = repo().join(format!("configs/{v}-5m.cfg"));
        let out = ok(&run(&["params", "--config", cfg.to_str().unwrap()]));
        let total: usize = out
            .lines()
            .find_map(|l| l.strip_prefix("total\t"))
            .and_then(|t| t.parse().ok())
            .unwrap_or_else(|| panic!("{out}"));
        assert!((4_500_000..=5_500_000).contains(&total), "{v}: {total}");
        assert!(out.contains(&format!("variant\t{v}")));
    }
    let cfg = repo().join("configs/syl-concat-13m.cfg");
    ok(&run(&["params", "--config", cfg.to_str().unwrap()]));
}

#[test]
fn params_outside_the_budget_is_a_config_error() {
    let dir = workspace("variant = syl-sum\n");
    let o = run(&["params", "--config", &p(dir.path(), "run.cfg"), "--budget", "1M"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stdout(&o).contains("total\t"));
}

#[test]
fn error_exit_codes() {
    let dir = workspace("variant = syl-sum\nwidth = 3\n");
    assert_eq!(run(&["params", "--config", &p(dir.path(), "run.cfg")]).status.code(), Some(4));
    assert_eq!(run(&["params", "--config", &p(dir.path(), "missing.cfg")]).status.code(), Some(3));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["train", "--config", &p(dir.path(), "run.cfg")]).status.code(), Some(2));
}

#[test]
fn build_train_eval_analyze() {
    let dir = workspace(TINY);
    let d = dir.path();
    let vocab = p(d, "vocab");
    let summary = ok(&run(&["build-vocab", "--train", &p(d, "train.txt"), "--out", &vocab]));
    assert!(summary.starts_with("words\t14\n"), "{summary}");

    let log = ok(&run(&["train", "--config", &p(d, "run.cfg"), "--vocab", &vocab, "--out", &p(d, "a")]));
    assert_eq!(log.lines().count(), 2);
    assert_eq!(std::fs::read_to_string(d.join("a/train.log")).unwrap(), log);
    assert!(d.join("a/model.slm").exists());
    ok(&run(&["train", "--config", &p(d, "run.cfg"), "--seed", "5", "--out", &p(d, "b")]));

    let eval = |ck: &str| {
        run(&["eval", "--checkpoint", &p(d, ck), "--vocab", &vocab, "--split", &p(d, "test.txt"), "--split", &p(d, "valid.txt"), "--no-timing", "--out", &p(d, "eval.tsv"), "--probs", &p(d, "probs")])
    };
    let table = ok(&eval("a/model.slm"));
    assert!(table.starts_with("model"), "{table}");
    let tsv = std::fs::read_to_string(d.join("eval.tsv")).unwrap();
    let rows: Vec<&str> = tsv.lines().collect();
    assert_eq!(rows.len(), 3);
    let cols: Vec<&str> = rows[1].split('\t').collect();
    let tokens = corpus(3, 8).split_whitespace().count() + 8;
    assert_eq!(cols[..3], ["a", "test", tokens.to_string().as_str()]);
    let ppl: f64 = cols[3].parse().unwrap();
    assert!(ppl > 1.0 && ppl < 100.0, "{ppl}");
    assert_eq!(cols[5], "-");
    let probs = std::fs::read_to_string(d.join("probs/a.test.probs.tsv")).unwrap();
    assert!(probs.starts_with("position\tword_id\tprob\n"));
    let mean_nll = probs
        .lines()
        .skip(1)
        .map(|l| -l.split('\t').nth(2).unwrap().parse::<f64>().unwrap().ln())
        .sum::<f64>()
        / (probs.lines().count() - 1) as f64;
    assert!((mean_nll.exp() - ppl).abs() < 1e-9 * ppl);
    assert_eq!(ok(&eval("a/model.slm")), table);

    let out = p(d, "report");
    ok(&run(&["analyze", "--checkpoint", &p(d, "a/model.slm"), "--checkpoint", &p(d, "b/model.slm"), "--vocab", &vocab, "--split", &p(d, "test.txt"), "--out", &out]));
    let shared = std::fs::read_to_string(d.join("report/shared_errors.tsv")).unwrap();
    assert_eq!(shared.lines().count(), 10);
    assert!(shared.starts_with("model_a\tmodel_b\tp_star\tfrac_shared\terr_a\terr_b\na\tb\t0.1\t"));
    let freq = std::fs::read_to_string(d.join("report/frequency.tsv")).unwrap();
    let all: Vec<&str> = freq.lines().filter(|l| l.starts_with("a\tall")).collect();
    let overall: f64 = all[0].split('\t').nth(4).unwrap().parse().unwrap();
    assert!((overall - ppl).abs() < 1e-9 * ppl);
    let pca = std::fs::read_to_string(d.join("report/pca.tsv")).unwrap();
    assert_eq!(pca.lines().count(), 11);
    let counts: Vec<usize> = pca.lines().skip(1).take(5).map(|l| l.split('\t').nth(4).unwrap().parse().unwrap()).collect();
    assert!(counts.windows(2).all(|w| w[0] <= w[1]) && counts[4] <= 8);
}

#[test]
fn eval_with_a_different_vocabulary_fails() {
    let dir = workspace(TINY);
    let d = dir.path();
    ok(&run(&["train", "--config", &p(d, "run.cfg"), "--out", &p(d, "run")]));
    std::fs::write(d.join("other.txt"), corpus(9, 40) + "zebra\n").unwrap();
    ok(&run(&["build-vocab", "--train", &p(d, "other.txt"), "--out", &p(d, "other")]));
    let o = run(&["eval", "--checkpoint", &p(d, "run/model.slm"), "--vocab", &p(d, "other"), "--split", &p(d, "test.txt")]);
    assert_eq!(o.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&o.stderr).contains("vocabulary mismatch"));
    ok(&run(&["eval", "--checkpoint", &p(d, "run/model.slm"), "--vocab", &p(d, "run/vocab"), "--split", &p(d, "test.txt")]));
}

#[test]
fn training_twice_gives_identical_files() {
    let dir = workspace(TINY);
    let d = dir.path();
    for out in ["x", "y"] {
        ok(&run(&["train", "--config", &p(d, "run.cfg"), "--seed", "3", "--out", &p(d, out)]));
    }
    for f in ["model.slm", "train.log", "vocab/words.tsv", "vocab/segments.tsv"] {
        assert_eq!(std::fs::read(d.join("x").join(f)).unwrap(), std::fs::read(d.join("y").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn tune_ranking_ignores_the_thread_count() {
    let cfg = TINY.replace("epochs = 2", "epochs = 1") + "budget = 2M\ntolerance = 0.5\n";
    let dir = workspace(&cfg);
    let d = dir.path();
    let mut tables = Vec::new();
    for threads in ["1", "3"] {
        let o = bin()
            .env("SUBLM_THREADS", threads)
            .args(["tune", "--config", &p(d, "run.cfg"), "--trials", "3", "--seed", "7", "--out", &p(d, "trials.tsv")])
            .output()
            .unwrap();
        tables.push(ok(&o));
    }
    assert_eq!(tables[0], tables[1]);
    let rows: Vec<&str> = tables[0].lines().collect();
    assert_eq!(rows.len(), 4);
    let ppl: Vec<f64> = rows[1..].iter().map(|r| r.split('\t').nth(8).unwrap().parse().unwrap()).collect();
    assert!(ppl.windows(2).all(|w| w[0] <= w[1]));
    for r in &rows[1..] {
        let params: usize = r.split('\t').nth(6).unwrap().parse().unwrap();
        assert!((1_000_000..=3_000_000).contains(&params));
    }
}
