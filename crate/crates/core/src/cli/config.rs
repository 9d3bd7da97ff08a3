use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, Task, Variant};
use crate::train::TrainPlan;

/// Every key a run configuration may set.
pub const KEYS: &[&str] = &[
    "task",
    "variant",
    "train",
    "dev",
    "out",
    "embeddings",
    "d",
    "h",
    "k",
    "l",
    "n_classes",
    "mlp_hidden",
    "share_generators",
    "adaptive_bias",
    "emb_init",
    "dropout",
    "max_vocab",
    "min_count",
    "max_len",
    "epochs",
    "batch_size",
    "lr",
    "val_fraction",
    "patience",
    "seed",
    "clip_norm",
    "workers",
];

/// Raw `key=value` settings, file first and flags layered on top.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    /// Parses `key=value` lines; `#` starts a comment, blank lines are skipped.
    pub fn parse(path: &Path, content: &str) -> Result<Self> {
        let mut s = Settings::default();
        for (i, raw) in content.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, i + 1, "expected key=value"))?;
            s.set(k.trim(), v.trim())
                .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(path, &content)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        self.values.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn typed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|raw| {
                raw.parse()
                    .map_err(|_| Error::Config(format!("bad value `{raw}` for `{key}`")))
            })
            .transpose()
    }

    /// Single-line `key=value ...` rendering, in key order.
    pub fn echo(&self) -> String {
        self.values
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Fully resolved training run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub variant: Variant,
    pub train: PathBuf,
    pub dev: Option<PathBuf>,
    pub out: PathBuf,
    pub embeddings: Option<PathBuf>,
    /// Model settings; `vocab_size` is filled in once the vocabulary exists.
    pub model: ModelConfig,
    /// `None` infers the class count from the training labels.
    pub n_classes: Option<usize>,
    pub max_vocab: usize,
    pub min_count: usize,
    pub max_len: usize,
    pub plan: TrainPlan,
}

impl RunConfig {
    pub fn from_settings(s: &Settings) -> Result<Self> {
        let required = |key: &str| {
            s.get(key)
                .ok_or_else(|| Error::Config(format!("missing required `{key}`")))
        };
        let variant: Variant = required("variant")?.parse()?;
        let task = match s.typed::<Task>("task")? {
            Some(t) => t,
            None => variant.task(),
        };
        if variant.task() != task {
            return Err(Error::Config(format!(
                "variant `{variant}` belongs to task `{}`, not `{task}`",
                variant.task()
            )));
        }
        let or = |key: &str, default: usize| -> Result<usize> { Ok(s.typed(key)?.unwrap_or(default)) };

        let mut model = ModelConfig::new(task, 2, or("d", 50)?, or("h", 5)?, or("k", 100)?, or("l", 100)?);
        model.mlp_hidden = or("mlp_hidden", model.k)?;
        if let Some(v) = s.typed("share_generators")? {
            model.share_generators = v;
        }
        if let Some(v) = s.typed("adaptive_bias")? {
            model.adaptive_bias = v;
        }
        if let Some(v) = s.typed("emb_init")? {
            model.emb_init = v;
        }
        if let Some(v) = s.typed("dropout")? {
            model.dropout = v;
        }
        let n_classes = s.typed("n_classes")?;
        if task == Task::Match && n_classes.is_some_and(|n| n != 2) {
            return Err(Error::Config("matching models are binary".into()));
        }

        let defaults = TrainPlan::default();
        let plan = TrainPlan {
            epochs: or("epochs", defaults.epochs)?,
            batch_size: or("batch_size", defaults.batch_size)?,
            lr: s.typed("lr")?.unwrap_or(defaults.lr),
            val_fraction: s.typed("val_fraction")?.unwrap_or(defaults.val_fraction),
            patience: or("patience", defaults.patience)?,
            seed: s.typed("seed")?.unwrap_or(defaults.seed),
            clip_norm: s.typed("clip_norm")?,
            workers: or("workers", defaults.workers)?,
        };
        plan.validate()?;

        let cfg = RunConfig {
            task,
            variant,
            train: PathBuf::from(required("train")?),
            dev: s.get("dev").map(PathBuf::from),
            out: PathBuf::from(required("out")?),
            embeddings: s.get("embeddings").map(PathBuf::from),
            model,
            n_classes,
            max_vocab: or("max_vocab", 20_000)?,
            min_count: or("min_count", 1)?,
            max_len: or("max_len", if task == Task::Match { 40 } else { 400 })?,
            plan,
        };
        if cfg.max_vocab < 2 || cfg.max_len == 0 {
            return Err(Error::Config("max_vocab must be at least 2 and max_len positive".into()));
        }
        let mut probe = cfg.model.clone();
        probe.n_classes = cfg.n_classes.unwrap_or(2);
        probe.validate()?;
        cfg.check_paths()?;
        Ok(cfg)
    }

    /// Training log path: the checkpoint path with a `.log` extension.
    pub fn log_path(&self) -> PathBuf {
        self.out.with_extension("log")
    }

    fn check_paths(&self) -> Result<()> {
        let inputs: Vec<&Path> = [Some(self.train.as_path()), self.dev.as_deref(), self.embeddings.as_deref()]
            .into_iter()
            .flatten()
            .collect();
        let log = self.log_path();
        if self.out == log {
            return Err(Error::Config("checkpoint path must not end in .log".into()));
        }
        for output in [self.out.as_path(), log.as_path()] {
            if inputs.iter().any(|i| same_file(i, output)) {
                return Err(Error::Config(format!(
                    "output `{}` would overwrite an input",
                    output.display()
                )));
            }
        }
        Ok(())
    }
}

/// True when both paths name the same file, resolving them when they exist.
pub fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(text: &str) -> Result<Settings> {
        Settings::parse(Path::new("run.cfg"), text)
    }

    #[test]
    fn parses_comments_and_overrides() {
        let mut s = settings("# model\nvariant = acnn\nk=8 # small\n\ntrain=t.tsv\nout=m.ckpt\n").unwrap();
        s.set("k", "12").unwrap();
        let cfg = RunConfig::from_settings(&s).unwrap();
        assert_eq!(cfg.task, Task::Classify);
        assert_eq!(cfg.model.k, 12);
        assert_eq!(cfg.model.f_s, 12);
        assert_eq!(cfg.plan.lr, 3e-4);
        assert_eq!(cfg.log_path(), PathBuf::from("m.log"));
        assert_eq!(s.echo(), "k=12 out=m.ckpt train=t.tsv variant=acnn");
    }

    #[test]
    fn unknown_keys_report_the_line() {
        let err = settings("variant=acnn\nlearning_rate=1\n").unwrap_err().to_string();
        assert!(err.contains(":2"), "{err}");
    }

    #[test]
    fn variant_must_match_task() {
        let s = settings("task=classify\nvariant=two_way\ntrain=a\nout=b").unwrap();
        assert!(RunConfig::from_settings(&s).is_err());
        let s = settings("task=match\nvariant=two_way\ntrain=a\nout=b").unwrap();
        let cfg = RunConfig::from_settings(&s).unwrap();
        assert!(cfg.model.adaptive_bias);
        assert_eq!(cfg.max_len, 40);
    }

    #[test]
    fn outputs_may_not_clobber_inputs() {
        let s = settings("variant=cnn\ntrain=data.tsv\nout=data.tsv").unwrap();
        assert!(RunConfig::from_settings(&s).is_err());
        let s = settings("variant=cnn\ntrain=m.log\nout=m.ckpt").unwrap();
        assert!(RunConfig::from_settings(&s).is_err());
    }

    #[test]
    fn plan_invariants_are_enforced() {
        let s = settings("variant=cnn\ntrain=a\nout=b\nval_fraction=0").unwrap();
        assert!(RunConfig::from_settings(&s).is_err());
        let s = settings("variant=cnn\ntrain=a\nout=b\npatience=0").unwrap();
        assert!(RunConfig::from_settings(&s).is_err());
    }
}
