//! Command-line front end. Results go to stdout; diagnostics, the echoed
//! configuration and progress go to stderr.

mod config;

pub use config::{same_file, RunConfig, Settings, KEYS};

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::check::{check_variant, format_check_report};
use crate::data::{
    load_pretrained, parse_classification, parse_qa, read_classification_tsv, read_qa_tsv, ClassificationRecord,
    QaGroup, Vocabulary,
};
use crate::error::{Error, Result};
use crate::metrics::format_report;
use crate::model::{export_filters, format_filter_rows, Network, Task, Variant};
use crate::synth::{
    classification_tsv, gen_context_keyed, gen_toy_qa, qa_tsv, split_three, SynthSpec,
};
use crate::train::{
    classification_accuracy, encode_classification, encode_groups, flatten_pairs, group_texts, holdout_split,
    ranking_metrics, train, vocab_from_texts, Checkpoint, EpochRecord, TrainReport,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "acnn", version, about = "Train and evaluate adaptive convolutional text models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write its checkpoint and log.
    Train(TrainArgs),
    /// Report test metrics of a checkpoint.
    Eval(EvalArgs),
    /// Finite-difference check of every parameter group on a tiny model.
    Gradcheck(GradcheckArgs),
    /// Write synthetic train/dev/test files.
    Synth(SynthArgs),
    /// Export generated filter banks for every input line.
    DumpFilters(DumpArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub variant: Option<String>,
    /// `key=value` file; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Checkpoint path; the log is written next to it with a `.log` extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Pretrained vectors, one `token v1 ... vd` line each.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Any other configuration key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub variant: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SynthTask {
    ContextKeyed,
    ToyQa,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub task: SynthTask,
    /// Sentences (context-keyed) or question groups (toy-qa).
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub contexts: Option<usize>,
    #[arg(long)]
    pub patterns: Option<usize>,
    #[arg(long)]
    pub min_len: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub filler: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Classification TSV for classifiers, QA TSV (question column) for matchers.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
}

/// Process exit code for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Divergence { .. } => EXIT_DIVERGED,
        _ => EXIT_USAGE,
    }
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Tensor(_) => "tensor",
        Error::Io { .. } => "io",
        Error::Parse { .. } => "parse",
        Error::Config(_) => "config",
        Error::Checkpoint(_) => "checkpoint",
        Error::MissingGrad(_) => "missing_grad",
        Error::Divergence { .. } => "divergence",
        Error::Metric(_) => "metric",
    }
}

/// The one-line diagnostic printed for a failed command.
pub fn diagnostic(err: &Error) -> String {
    let message = err.to_string().replace(['\n', '\t'], " ");
    format!("error\tkind={}\texit={}\t{message}", error_kind(err), exit_code(err))
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match cli.command {
        Command::Train(a) => cmd_train(&a, out, err),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Gradcheck(a) => cmd_gradcheck(&a, out, err),
        Command::Synth(a) => cmd_synth(&a, err),
        Command::DumpFilters(a) => cmd_dump_filters(&a, err),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "{}", diagnostic(&e));
            exit_code(&e)
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

/// Creates the directory that will hold `path`, so a long run cannot fail at the last write.
fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(io_err(dir)),
        _ => Ok(()),
    }
}

fn stream_err(e: std::io::Error) -> Error {
    Error::io(Path::new("<stdio>"), e)
}

/// Merges the config file, the dedicated flags and `--set` pairs, in that order.
pub fn train_settings(args: &TrainArgs) -> Result<Settings> {
    let mut s = match &args.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    let flags = [
        ("task", args.task.clone()),
        ("variant", args.variant.clone()),
        ("train", path(&args.train)),
        ("dev", path(&args.dev)),
        ("out", path(&args.out)),
        ("embeddings", path(&args.embeddings)),
        ("seed", args.seed.map(|v| v.to_string())),
        ("epochs", args.epochs.map(|v| v.to_string())),
        ("lr", args.lr.map(|v| v.to_string())),
        ("batch_size", args.batch_size.map(|v| v.to_string())),
        ("workers", args.workers.map(|v| v.to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            s.set(key, v)?;
        }
    }
    for pair in &args.set {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{pair}`")))?;
        s.set(k.trim(), v.trim())?;
    }
    if let Some(config) = &args.config {
        if ["train", "dev", "embeddings"].iter().any(|k| s.get(k).is_some_and(|p| same_file(Path::new(p), config))) {
            return Err(Error::Config("config file named as a data file".into()));
        }
        if s.get("out").is_some_and(|p| same_file(Path::new(p), config)) {
            return Err(Error::Config("output would overwrite the config file".into()));
        }
    }
    Ok(s)
}

fn split_records<T: Clone>(items: Vec<T>, fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if items.len() < 2 {
        return Err(Error::Config("need at least two training examples to hold out a validation set".into()));
    }
    let (train_idx, val_idx) = holdout_split(items.len(), fraction, seed);
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect();
    Ok((pick(&train_idx), pick(&val_idx)))
}

fn attach_embeddings(network: &mut Network, cfg: &RunConfig, vocab: &Vocabulary, err: &mut dyn Write) -> Result<()> {
    if let Some(path) = &cfg.embeddings {
        let pre = load_pretrained(path, vocab, cfg.model.d, cfg.plan.seed)?;
        network.params_mut().set("embedding", pre.table)?;
        writeln!(err, "embeddings\tcoverage={}/{}", pre.coverage, vocab.len()).map_err(stream_err)?;
    }
    Ok(())
}

fn cmd_train(args: &TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let settings = train_settings(args)?;
    writeln!(err, "config\t{}", settings.echo()).map_err(stream_err)?;
    let cfg = RunConfig::from_settings(&settings)?;
    ensure_parent(&cfg.out)?;
    let plan = cfg.plan.clone();

    let (network, vocab, report): (Network, Vocabulary, TrainReport) = match cfg.task {
        Task::Classify => {
            let records = read_classification_tsv(&cfg.train, cfg.n_classes)?;
            let n_classes = cfg
                .n_classes
                .unwrap_or_else(|| records.iter().map(|r| r.label + 1).max().unwrap_or(2).max(2));
            let (train_recs, dev_recs): (Vec<ClassificationRecord>, _) = match &cfg.dev {
                Some(dev) => (records, read_classification_tsv(dev, Some(n_classes))?),
                None => split_records(records, plan.val_fraction, plan.seed)?,
            };
            let vocab = vocab_from_texts(train_recs.iter().map(|r| r.text.as_str()), cfg.max_vocab, cfg.min_count);
            let mut model = cfg.model.clone();
            model.vocab_size = vocab.len();
            model.n_classes = n_classes;
            let mut network = Network::new(model, cfg.variant, plan.seed)?;
            attach_embeddings(&mut network, &cfg, &vocab, err)?;
            let Network::Classifier(m) = &mut network else { unreachable!("classify variant") };
            let train_set = encode_classification(&vocab, &train_recs, cfg.max_len);
            let dev_set = encode_classification(&vocab, &dev_recs, cfg.max_len);
            let report = train(m, &train_set, &dev_set[..], &plan, |r: &EpochRecord| {
                let _ = writeln!(err, "epoch\t{r}");
            })?;
            (network, vocab, report)
        }
        Task::Match => {
            let groups = read_qa_tsv(&cfg.train)?;
            let (train_groups, dev_groups): (Vec<QaGroup>, _) = match &cfg.dev {
                Some(dev) => (groups, read_qa_tsv(dev)?),
                None => split_records(groups, plan.val_fraction, plan.seed)?,
            };
            let vocab = vocab_from_texts(group_texts(&train_groups), cfg.max_vocab, cfg.min_count);
            let mut model = cfg.model.clone();
            model.vocab_size = vocab.len();
            let mut network = Network::new(model, cfg.variant, plan.seed)?;
            attach_embeddings(&mut network, &cfg, &vocab, err)?;
            let Network::Matcher(m) = &mut network else { unreachable!("match variant") };
            let train_groups = encode_groups(&vocab, &train_groups, cfg.max_len);
            let dev_groups = encode_groups(&vocab, &dev_groups, cfg.max_len);
            let pairs = flatten_pairs(&train_groups);
            let report = train(m, &pairs, &dev_groups[..], &plan, |r: &EpochRecord| {
                let _ = writeln!(err, "epoch\t{r}");
            })?;
            (network, vocab, report)
        }
    };

    let log_path = cfg.log_path();
    std::fs::write(&log_path, report.log_text()).map_err(io_err(&log_path))?;
    Checkpoint { network, vocab, max_len: cfg.max_len }.save(&cfg.out)?;
    let summary = format!("best_epoch\t{}\n{}", report.best_epoch, format_report(&[("best_val", report.best_metric)]));
    out.write_all(summary.as_bytes()).map_err(stream_err)?;
    Ok(EXIT_OK)
}

/// Task implied by the column count of the first non-blank line.
pub fn sniff_task(content: &str) -> Option<Task> {
    let line = content.lines().find(|l| !l.trim().is_empty())?;
    match line.matches('\t').count() {
        1 => Some(Task::Classify),
        3 => Some(Task::Match),
        _ => None,
    }
}

fn read_checked(path: &Path, task: Task) -> Result<String> {
    let content = std::fs::read_to_string(path).map_err(io_err(path))?;
    if let Some(found) = sniff_task(&content) {
        if found != task {
            return Err(Error::Config(format!(
                "task mismatch: checkpoint is `{task}` but `{}` holds `{found}` data",
                path.display()
            )));
        }
    }
    Ok(content)
}

fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<i32> {
    let ck = Checkpoint::load(&args.model)?;
    let content = read_checked(&args.test, ck.network.task())?;
    let report = match &ck.network {
        Network::Classifier(m) => {
            let records = parse_classification(&args.test, &content, Some(m.config().n_classes))?;
            let data = encode_classification(&ck.vocab, &records, ck.max_len);
            let acc = classification_accuracy(m, &data, args.batch_size, args.workers)?;
            format_report(&[("accuracy", acc), ("error_rate", 1.0 - acc)])
        }
        Network::Matcher(m) => {
            let groups = crate::data::group_qa(parse_qa(&args.test, &content)?);
            let data = encode_groups(&ck.vocab, &groups, ck.max_len);
            let metrics = ranking_metrics(m, &data, args.batch_size, args.workers)?;
            format_report(&[("map", metrics.map), ("mrr", metrics.mrr)])
        }
    };
    out.write_all(report.as_bytes()).map_err(stream_err)?;
    Ok(EXIT_OK)
}

fn cmd_gradcheck(args: &GradcheckArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let variant: Variant = args.variant.parse()?;
    if !(args.eps > 0.0 && args.eps.is_finite()) || args.tol.is_nan() || args.tol < 0.0 {
        return Err(Error::Config("eps must be positive and tol non-negative".into()));
    }
    let report = check_variant(variant, args.seed, args.eps, args.tol)?;
    out.write_all(format_check_report(&report).as_bytes()).map_err(stream_err)?;
    writeln!(
        err,
        "gradcheck\tvariant={variant}\tmax_rel_error={:.3e}\ttol={}\tpassed={}",
        report.max_rel_error, args.tol, report.passed
    )
    .map_err(stream_err)?;
    Ok(if report.passed { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn cmd_synth(args: &SynthArgs, err: &mut dyn Write) -> Result<i32> {
    let base = match args.task {
        SynthTask::ContextKeyed => SynthSpec::context_keyed(args.n, args.seed),
        SynthTask::ToyQa => SynthSpec::toy_qa(args.n, args.seed),
    };
    let spec = SynthSpec {
        n_contexts: args.contexts.unwrap_or(base.n_contexts),
        n_patterns: args.patterns.unwrap_or(base.n_patterns),
        min_len: args.min_len.unwrap_or(base.min_len),
        max_len: args.max_len.unwrap_or(base.max_len),
        filler_vocab: args.filler.unwrap_or(base.filler_vocab),
        ..base
    };
    spec.validate()?;
    let files: [(&str, String); 3] = match args.task {
        SynthTask::ContextKeyed => {
            let (tr, dv, te) = split_three(&gen_context_keyed(&spec)?, spec.seed);
            [("train.tsv", classification_tsv(&tr)), ("dev.tsv", classification_tsv(&dv)), ("test.tsv", classification_tsv(&te))]
        }
        SynthTask::ToyQa => {
            let (tr, dv, te) = split_three(&gen_toy_qa(&spec)?, spec.seed);
            [("train.tsv", qa_tsv(&tr)), ("dev.tsv", qa_tsv(&dv)), ("test.tsv", qa_tsv(&te))]
        }
    };
    std::fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    for (name, text) in files {
        let path = args.out.join(name);
        std::fs::write(&path, &text).map_err(io_err(&path))?;
        writeln!(err, "wrote\t{}\t{} lines", path.display(), text.lines().count()).map_err(stream_err)?;
    }
    Ok(EXIT_OK)
}

fn cmd_dump_filters(args: &DumpArgs, err: &mut dyn Write) -> Result<i32> {
    if same_file(&args.out, &args.input) || same_file(&args.out, &args.model) {
        return Err(Error::Config("output would overwrite an input".into()));
    }
    let ck = Checkpoint::load(&args.model)?;
    if !ck.network.variant().is_adaptive() {
        return Err(Error::Config(format!(
            "variant `{}` has no filter generator",
            ck.network.variant()
        )));
    }
    let content = read_checked(&args.input, ck.network.task())?;
    let texts: Vec<String> = match ck.network.task() {
        Task::Classify => parse_classification(&args.input, &content, None)?
            .into_iter()
            .map(|r| r.text)
            .collect(),
        Task::Match => parse_qa(&args.input, &content)?.into_iter().map(|r| r.question).collect(),
    };
    let sentences: Vec<Vec<usize>> = texts
        .iter()
        .map(|t| {
            let tokens = crate::data::tokenize(t);
            ck.vocab.encode(&tokens[..tokens.len().min(ck.max_len)])
        })
        .collect();
    let rows = export_filters(&ck.network, &sentences, args.batch_size)?
        .ok_or_else(|| Error::Config("model has no filter generator".into()))?;
    ensure_parent(&args.out)?;
    std::fs::write(&args.out, format_filter_rows(&rows)).map_err(io_err(&args.out))?;
    writeln!(err, "wrote\t{}\t{} rows", args.out.display(), rows.len()).map_err(stream_err)?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sniffs_by_column_count() {
        assert_eq!(sniff_task("\n1\tgood food\n"), Some(Task::Classify));
        assert_eq!(sniff_task("q1\twhat\tthat\t0\n"), Some(Task::Match));
        assert_eq!(sniff_task(""), None);
    }

    #[test]
    fn diagnostics_are_one_line() {
        let d = diagnostic(&Error::Config("bad\nthing".into()));
        assert_eq!(d.lines().count(), 1);
        assert!(d.starts_with("error\tkind=config\texit=2"));
        assert_eq!(exit_code(&Error::Divergence { epoch: 1, batch: 2 }), 3);
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "variant=cnn\nepochs=3\nk=7\n").unwrap();
        let args = TrainArgs {
            task: None,
            variant: Some("acnn".into()),
            config: Some(cfg),
            train: Some("t.tsv".into()),
            dev: None,
            out: Some("m.ckpt".into()),
            embeddings: None,
            seed: None,
            epochs: Some(5),
            lr: None,
            batch_size: None,
            workers: None,
            set: vec!["k=9".into()],
        };
        let s = train_settings(&args).unwrap();
        assert_eq!(s.get("variant"), Some("acnn"));
        assert_eq!(s.get("epochs"), Some("5"));
        assert_eq!(s.get("k"), Some("9"));
    }
}
