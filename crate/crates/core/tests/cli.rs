use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use lcd::model::read_model;

fn lcd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lcd"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn work_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: [&str; 6] = ["--hidden", "32", "--epochs", "3", "--patience", "3"];

/// Synthetic corpus plus a small trained model, built once.
struct Fixture {
    dir: PathBuf,
    model: PathBuf,
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let dir = work_dir("fixture");
        let o = lcd(&["synth", "--out", s(&dir), "--documents", "150", "--seed", "1"]);
        assert!(o.status.success(), "{o:?}");
        let model = dir.join("model.lcdm");
        let (train, dev, embeddings) = (dir.join("train.txt"), dir.join("dev.txt"), dir.join("embeddings.txt"));
        let mut args = vec![
            "train",
            "--train",
            s(&train),
            "--dev",
            s(&dev),
            "--embeddings",
            s(&embeddings),
            "--model",
            s(&model),
            "--out",
            s(&dir),
        ];
        args.extend(SMALL);
        let o = lcd(&args);
        assert!(o.status.success(), "{o:?}");
        Fixture { dir, model }
    })
}

impl Fixture {
    fn path(&self, name: &str) -> String {
        s(&self.dir.join(name)).to_string()
    }

    fn eval(&self, task: &str, out: &Path, extra: &[&str]) -> Output {
        let mut args = vec![
            "eval".to_string(),
            "--task".into(),
            task.into(),
            "--model".into(),
            s(&self.model).into(),
            "--test".into(),
            self.path("test.txt"),
            "--embeddings".into(),
            self.path("embeddings.txt"),
            "--out".into(),
            s(out).into(),
        ];
        args.extend(extra.iter().map(|a| a.to_string()));
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        lcd(&args)
    }
}

#[test]
fn missing_embeddings_is_a_usage_error() {
    let o = lcd(&["train", "--train", "a.txt", "--dev", "b.txt"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn unknown_task_is_a_usage_error() {
    let o = lcd(&["eval", "--task", "summarize", "--test", "t", "--embeddings", "e", "--model", "m"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_input_file_is_a_data_error() {
    let o = lcd(&["train", "--train", "/nonexistent/a", "--dev", "/nonexistent/b", "--embeddings", "/nonexistent/e"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn train_writes_a_reloadable_model_and_reports() {
    let f = fixture();
    let bytes = fs::read(&f.model).unwrap();
    let model = read_model(bytes.as_slice()).unwrap();
    assert_eq!((model.dim, model.hidden), (50, 32));
    let csv = fs::read_to_string(f.dir.join("train_report.csv")).unwrap();
    assert!(csv.starts_with("epoch,loss,dev_accuracy\n"));
    assert!(fs::read_to_string(f.dir.join("train.log")).unwrap().contains("best epoch"));
}

#[test]
fn same_seed_gives_identical_model_files() {
    let f = fixture();
    let dir = work_dir("seed");
    let run = |name: &str| {
        let model = dir.join(name);
        let mut args = vec![
            "train".to_string(),
            "--train".into(),
            f.path("train.txt"),
            "--dev".into(),
            f.path("dev.txt"),
            "--embeddings".into(),
            f.path("embeddings.txt"),
            "--model".into(),
            s(&model).into(),
            "--out".into(),
            s(&dir).into(),
            "--seed".into(),
            "7".into(),
            "--hidden".into(),
            "16".into(),
            "--epochs".into(),
            "1".into(),
        ];
        args.push("--lr".into());
        args.push("0.001".into());
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = lcd(&args);
        assert!(o.status.success(), "{o:?}");
        let out = stdout(&o);
        assert!(out.contains("lr = 0.001") && out.contains("seed = 7") && out.contains("margin = 5"));
        fs::read(model).unwrap()
    };
    assert_eq!(run("a.lcdm"), run("b.lcdm"));
}

#[test]
fn discrimination_prints_aggregate_in_range() {
    let f = fixture();
    let out = work_dir("disc");
    let o = f.eval("discrimination", &out, &["--permutations", "20"]);
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    let line = text.lines().find(|l| l.starts_with("discrimination accuracy")).unwrap();
    let value: f64 = line.split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&value));
    assert!(text.contains("permutations = 20"));
    let csv = fs::read_to_string(out.join("discrimination.csv")).unwrap();
    assert!(csv.lines().count() > 1);
}

#[test]
fn wider_beam_reconstructs_at_least_as_well() {
    let f = fixture();
    let tau = |width: &str| -> f64 {
        let out = work_dir(&format!("beam{width}"));
        let o = f.eval("reconstruct", &out, &["--beam-width", width]);
        assert!(o.status.success(), "{o:?}");
        let text = stdout(&o);
        let line = text.lines().find(|l| l.starts_with("reconstruction")).unwrap();
        line.split_whitespace().nth(4).unwrap().parse().unwrap()
    };
    let (narrow, wide) = (tau("1"), tau("8"));
    assert!(wide >= narrow, "beam 8 {wide} < beam 1 {narrow}");
}

#[test]
fn insertion_task_runs() {
    let f = fixture();
    let out = work_dir("ins");
    let o = f.eval("insertion", &out, &[]);
    assert!(o.status.success(), "{o:?}");
    assert!(out.join("insertion.csv").exists());
}

#[test]
fn coverage_writes_one_row_per_fraction() {
    let f = fixture();
    let out = work_dir("coverage");
    let mut args = vec![
        "eval".to_string(),
        "--task".into(),
        "coverage".into(),
        "--train".into(),
        f.path("train.txt"),
        "--dev".into(),
        f.path("dev.txt"),
        "--test".into(),
        f.path("test.txt"),
        "--embeddings".into(),
        f.path("embeddings.txt"),
        "--out".into(),
        s(&out).into(),
        "--fractions".into(),
        "0.05,0.2,1.0".into(),
        "--hidden".into(),
        "8".into(),
        "--epochs".into(),
        "1".into(),
    ];
    let a: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = lcd(&a);
    assert!(o.status.success(), "{o:?}");
    let csv = fs::read_to_string(out.join("coverage.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "phi,accuracy");
    assert_eq!(rows.len(), 4);

    args.truncate(args.len() - 6);
    args.extend(["--fractions".into(), "0".into()]);
    let a: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_eq!(lcd(&a).status.code(), Some(2));
}

#[test]
fn coverage_requires_train_and_dev() {
    let f = fixture();
    let out = work_dir("coverage-usage");
    let o = lcd(&[
        "eval",
        "--task",
        "coverage",
        "--test",
        &f.path("test.txt"),
        "--embeddings",
        &f.path("embeddings.txt"),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

fn score(f: &Fixture, flag: &str, input: &Path) -> Output {
    lcd(&[
        "score",
        "--model",
        s(&f.model),
        "--embeddings",
        &f.path("embeddings.txt"),
        flag,
        s(input),
    ])
}

fn score_value(o: &Output) -> f64 {
    let text = stdout(o);
    let line = text.lines().find(|l| l.starts_with("score ")).unwrap();
    line[6..].parse().unwrap()
}

#[test]
fn score_doc_and_article_agree_on_one_paragraph() {
    let f = fixture();
    let dir = work_dir("score");
    let test = fs::read_to_string(f.dir.join("test.txt")).unwrap();
    let first = test.split("\n\n").next().unwrap();
    let doc = dir.join("doc.txt");
    fs::write(&doc, format!("{first}\n")).unwrap();
    let by_doc = score(f, "--doc", &doc);
    let by_article = score(f, "--article", &doc);
    assert!(by_doc.status.success() && by_article.status.success());
    assert_eq!(score_value(&by_doc), score_value(&by_article));
    assert_eq!(stdout(&by_doc), stdout(&score(f, "--doc", &doc)));
}

#[test]
fn score_rejects_single_sentence_document() {
    let f = fixture();
    let dir = work_dir("score-short");
    let doc = dir.join("one.txt");
    let test = fs::read_to_string(f.dir.join("test.txt")).unwrap();
    fs::write(&doc, format!("{}\n", test.lines().next().unwrap())).unwrap();
    let o = score(f, "--doc", &doc);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
}
