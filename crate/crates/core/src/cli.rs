//! Command-line front end: `train`, `eval`, `score` and `synth`.
//!
//! Exit codes: 0 on success, 1 for data or runtime errors, 2 for usage
//! errors.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

use crate::corpus::{parse_corpus, split_dataset, Corpus};
use crate::encoder::{load_embeddings, EmbeddingTable};
use crate::error::Error;
use crate::evaluation::{
    aggregate_article_score, coverage_csv, coverage_sweep, discrimination, insertion, reconstruction,
    CoherenceScorer, LcdScorer,
};
use crate::model::{read_model, write_model, BidirectionalModel, DirectionMode, FeatureMode};
use crate::rng::{self, Stream};
use crate::synthetic::{generate, SyntheticConfig};
use crate::training::{train, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "lcd", version, about = "Local coherence discriminator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write it with its training report.
    Train(TrainArgs),
    /// Evaluate a model, or run the coverage sweep.
    Eval(EvalArgs),
    /// Print the coherence score of one document or article.
    Score(ScoreArgs),
    /// Write a planted-coherence corpus split and its embeddings.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeatureArg {
    Full,
    Concat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    Bi,
    Forward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Discrimination,
    Insertion,
    Reconstruct,
    Coverage,
}

#[derive(Debug, Clone, Args)]
pub struct HyperArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 5.0)]
    pub margin: f64,
    #[arg(long, default_value_t = 500)]
    pub hidden: usize,
    #[arg(long = "dropout-input", default_value_t = 0.6)]
    pub dropout_input: f64,
    #[arg(long = "dropout-hidden", default_value_t = 0.3)]
    pub dropout_hidden: f64,
    #[arg(long = "triplets-per-doc", default_value_t = 50)]
    pub triplets_per_doc: usize,
    /// Maximum training epochs.
    #[arg(long, default_value_t = TrainConfig::default().max_epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().patience)]
    pub patience: usize,
    /// Fraction of each document's negatives available for sampling.
    #[arg(long, default_value_t = 1.0)]
    pub coverage: f64,
    #[arg(long = "feature-mode", value_enum, default_value_t = FeatureArg::Full)]
    pub feature_mode: FeatureArg,
    #[arg(long, value_enum, default_value_t = DirectionArg::Bi)]
    pub direction: DirectionArg,
}

impl HyperArgs {
    pub fn train_config(&self, dev_permutations: usize) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            margin: self.margin,
            hidden: self.hidden,
            p_input: self.dropout_input,
            p_hidden: self.dropout_hidden,
            triplets_per_doc: self.triplets_per_doc,
            max_epochs: self.epochs,
            patience: self.patience,
            seed: self.seed,
            coverage: self.coverage,
            feature_mode: match self.feature_mode {
                FeatureArg::Full => FeatureMode::Full,
                FeatureArg::Concat => FeatureMode::ConcatOnly,
            },
            direction_mode: match self.direction {
                DirectionArg::Bi => DirectionMode::Bidirectional,
                DirectionArg::Forward => DirectionMode::ForwardOnly,
            },
            dev_permutations,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Where to write the model.
    #[arg(long, default_value = "model.lcdm")]
    pub model: PathBuf,
    /// Directory for reports.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Permutations per dev document for early stopping.
    #[arg(long, default_value_t = 20)]
    pub permutations: usize,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub task: TaskArg,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Trained model; required for every task except coverage.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Training corpus; coverage only.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Dev corpus; coverage only.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub permutations: usize,
    #[arg(long = "beam-width", default_value_t = 8)]
    pub beam_width: usize,
    /// Coverage fractions, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.02, 0.05, 0.1, 0.2, 0.5, 1.0])]
    pub fractions: Vec<f64>,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Clone, Args)]
#[command(group(ArgGroup::new("input").required(true).args(["doc", "article"])))]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    /// File holding one document, one sentence per line.
    #[arg(long)]
    pub doc: Option<PathBuf>,
    /// File holding an article, paragraphs separated by blank lines.
    #[arg(long)]
    pub article: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Output directory for train.txt, dev.txt, test.txt and embeddings.txt.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub documents: usize,
    #[arg(long, default_value_t = SyntheticConfig::default().fillers_per_sentence)]
    pub fillers: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Fully resolved settings of one invocation, echoed before any results.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub subcommand: &'static str,
    pub paths: Vec<(&'static str, PathBuf)>,
    pub train: Option<TrainConfig>,
    pub task: Vec<(&'static str, String)>,
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "command = {}", self.subcommand)?;
        for (k, p) in &self.paths {
            writeln!(f, "{k} = {}", p.display())?;
        }
        if let Some(t) = &self.train {
            writeln!(f, "{t}")?;
        }
        for (k, v) in &self.task {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(e) => write!(f, "error: {e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(Error::Io(e))
    }
}

fn read_corpus(path: &Path) -> Result<Corpus, CliError> {
    let file = File::open(path).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    Ok(parse_corpus(BufReader::new(file))?)
}

fn read_embeddings(path: &Path) -> Result<EmbeddingTable, CliError> {
    let file = File::open(path).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    Ok(load_embeddings(BufReader::new(file), None)?)
}

fn read_model_file(path: &Path, encoder: &EmbeddingTable) -> Result<BidirectionalModel, CliError> {
    let file = File::open(path).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    let model = read_model(BufReader::new(file))?;
    if model.dim != encoder.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            got: encoder.dim(),
        }
        .into());
    }
    Ok(model)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

/// Runs one parsed invocation, writing human-readable output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Train(args) => cmd_train(args, out),
        Command::Eval(args) => cmd_eval(args, out),
        Command::Score(args) => cmd_score(args, out),
        Command::Synth(args) => cmd_synth(args, out),
    }
}

fn cmd_train(args: TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = args.hyper.train_config(args.permutations);
    let run = RunConfig {
        subcommand: "train",
        paths: vec![
            ("train", args.train.clone()),
            ("dev", args.dev.clone()),
            ("embeddings", args.embeddings.clone()),
            ("model", args.model.clone()),
            ("out", args.out.clone()),
        ],
        train: Some(config.clone()),
        task: vec![],
    };
    write!(out, "{run}")?;
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let embeddings = read_embeddings(&args.embeddings)?;
    let train_corpus = read_corpus(&args.train)?;
    let dev = read_corpus(&args.dev)?;
    let (model, report) = train(&config, &train_corpus, &dev, &embeddings)?;

    if let Some(parent) = args.model.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut file = BufWriter::new(File::create(&args.model)?);
    write_model(&model, &mut file)?;
    file.flush()?;
    write_file(&args.out.join("train_report.csv"), &report.to_csv())?;
    write_file(&args.out.join("train.log"), &format!("{run}{}", report.to_log()))?;
    writeln!(
        out,
        "best dev accuracy {:.4} at epoch {}",
        report.best_dev_accuracy(),
        report.best_epoch
    )?;
    Ok(())
}

fn cmd_eval(args: EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let task_name = match args.task {
        TaskArg::Discrimination => "discrimination",
        TaskArg::Insertion => "insertion",
        TaskArg::Reconstruct => "reconstruct",
        TaskArg::Coverage => "coverage",
    };
    let mut paths = vec![("test", args.test.clone()), ("embeddings", args.embeddings.clone())];
    for (k, p) in [("model", &args.model), ("train", &args.train), ("dev", &args.dev)] {
        if let Some(p) = p {
            paths.push((k, p.clone()));
        }
    }
    paths.push(("out", args.out.clone()));
    let mut task = vec![("task", task_name.to_string()), ("seed", args.hyper.seed.to_string())];
    match args.task {
        TaskArg::Discrimination => task.push(("permutations", args.permutations.to_string())),
        TaskArg::Reconstruct => task.push(("beam_width", args.beam_width.to_string())),
        TaskArg::Coverage => {
            task.push(("permutations", args.permutations.to_string()));
            let f: Vec<String> = args.fractions.iter().map(|f| f.to_string()).collect();
            task.push(("fractions", f.join(",")));
        }
        TaskArg::Insertion => {}
    }
    let config = args.hyper.train_config(args.permutations);
    let run = RunConfig {
        subcommand: "eval",
        paths,
        train: (args.task == TaskArg::Coverage).then(|| config.clone()),
        task,
    };
    write!(out, "{run}")?;

    if args.permutations == 0 {
        return Err(CliError::Usage("--permutations must be positive".into()));
    }
    if args.beam_width == 0 {
        return Err(CliError::Usage("--beam-width must be positive".into()));
    }
    let seed = args.hyper.seed;

    if args.task == TaskArg::Coverage {
        let (Some(train_path), Some(dev_path)) = (&args.train, &args.dev) else {
            return Err(CliError::Usage("--task coverage requires --train and --dev".into()));
        };
        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let embeddings = read_embeddings(&args.embeddings)?;
        let train_corpus = read_corpus(train_path)?;
        let dev = read_corpus(dev_path)?;
        let test = read_corpus(&args.test)?;
        let points = coverage_sweep(
            &config,
            &train_corpus,
            &dev,
            &test,
            &embeddings,
            &args.fractions,
            args.permutations,
        )
        .map_err(|e| match e {
            Error::InvalidConfig(m) => CliError::Usage(m),
            e => CliError::Data(e),
        })?;
        write_file(&args.out.join("coverage.csv"), &coverage_csv(&points))?;
        for p in &points {
            writeln!(out, "coverage {} accuracy {:.4}", p.phi, p.accuracy)?;
        }
        return Ok(());
    }

    let Some(model_path) = &args.model else {
        return Err(CliError::Usage(format!("--task {task_name} requires --model")));
    };
    let embeddings = read_embeddings(&args.embeddings)?;
    let model = read_model_file(model_path, &embeddings)?;
    let test = read_corpus(&args.test)?;
    let scorer = LcdScorer::new(&model, &embeddings);
    let mut perm_rng = rng::stream(seed, Stream::Permutations);
    let report = match args.task {
        TaskArg::Discrimination => discrimination(&scorer, &test, args.permutations, &mut perm_rng)?,
        TaskArg::Insertion => insertion(&scorer, &test)?,
        TaskArg::Reconstruct => reconstruction(&scorer, &test, args.beam_width, &mut perm_rng)?,
        TaskArg::Coverage => unreachable!("handled above"),
    }
    .with_seed(seed);
    write_file(&args.out.join(format!("{task_name}.csv")), &report.to_csv())?;
    writeln!(out, "{}", report.summary())?;
    Ok(())
}

fn cmd_score(args: ScoreArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let input = args.doc.as_ref().or(args.article.as_ref()).expect("clap enforces one input");
    let run = RunConfig {
        subcommand: "score",
        paths: vec![
            ("model", args.model.clone()),
            ("embeddings", args.embeddings.clone()),
            (if args.doc.is_some() { "doc" } else { "article" }, input.clone()),
        ],
        train: None,
        task: vec![],
    };
    write!(out, "{run}")?;
    let embeddings = read_embeddings(&args.embeddings)?;
    let model = read_model_file(&args.model, &embeddings)?;
    let scorer = LcdScorer::new(&model, &embeddings);
    let corpus = read_corpus(input)?;
    let score = if args.doc.is_some() {
        if corpus.len() != 1 {
            return Err(Error::InvalidConfig(format!(
                "--doc expects a single document, found {} blocks",
                corpus.len()
            ))
            .into());
        }
        scorer.score_document(&corpus.documents[0])?
    } else {
        aggregate_article_score(&scorer, &corpus.documents)?
    };
    writeln!(out, "score {score}")?;
    Ok(())
}

fn cmd_synth(args: SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = SyntheticConfig {
        documents: args.documents,
        fillers_per_sentence: args.fillers,
        seed: args.seed,
        ..SyntheticConfig::default()
    };
    writeln!(out, "command = synth")?;
    writeln!(out, "out = {}", args.out.display())?;
    writeln!(out, "documents = {}\nfillers = {}\nseed = {}", args.documents, args.fillers, args.seed)?;
    let data = generate(&config).map_err(|e| CliError::Usage(e.to_string()))?;
    let (train_corpus, dev, test) = split_dataset(&data.corpus, (0.8, 0.1, 0.1), &mut rng::stream(args.seed, Stream::Split))?;
    fs::create_dir_all(&args.out)?;
    for (name, corpus) in [("train.txt", &train_corpus), ("dev.txt", &dev), ("test.txt", &test)] {
        fs::write(args.out.join(name), corpus.to_text())?;
    }
    fs::write(args.out.join("embeddings.txt"), data.embeddings.to_text())?;
    writeln!(
        out,
        "wrote {} train, {} dev, {} test documents",
        train_corpus.len(),
        dev.len(),
        test.len()
    )?;
    Ok(())
}
