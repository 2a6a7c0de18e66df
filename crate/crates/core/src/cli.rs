//! Command-line front end. Settings come from a flat JSON config file, then
//! command-line flags override individual keys.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::PoolingMode;
use crate::corpus::{corpus_stats, load_pan_directory, load_truth, Corpus, Label};
use crate::encoder::{EncoderConfig, PrecomputedEmbeddingStore};
use crate::error::{Error, Result};
use crate::explain::{emit_html, emit_json, explain_author};
use crate::gradsuite::run_suite;
use crate::model::{BaselineMode, EncoderMode, Model, ModelConfig};
use crate::training::{cross_validate, predict_ensemble, train_model, Hyperparams, ModelBundle, TrainingData};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    En,
    Es,
    #[default]
    All,
}

impl std::str::FromStr for Lang {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "en" => Ok(Lang::En),
            "es" => Ok(Lang::Es),
            "all" => Ok(Lang::All),
            other => Err(Error::Config(format!("unknown language {other:?}"))),
        }
    }
}

impl Lang {
    fn codes(self) -> &'static [&'static str] {
        match self {
            Lang::En => &["en"],
            Lang::Es => &["es"],
            Lang::All => &["en", "es"],
        }
    }
}

/// Every setting of a run. Serialised with flat keys; unknown keys are
/// rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus_en: Option<PathBuf>,
    pub truth_en: Option<PathBuf>,
    pub corpus_es: Option<PathBuf>,
    pub truth_es: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Bundles for predict/explain/export; defaults to `*.bundle` in out_dir.
    pub bundles: Vec<PathBuf>,
    pub lang: Lang,
    pub encoder: EncoderMode,
    pub pooling: PoolingMode,
    pub baseline: BaselineMode,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_post_len: usize,
    pub join_max_len: usize,
    pub join_markers: bool,
    pub embedding_dim: usize,
    pub hidden: Option<usize>,
    pub dropout_p: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub folds: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub freeze_encoder: bool,
    pub min_token_freq: usize,
    pub threads: Option<usize>,
    pub top_k: Option<usize>,
    /// Any of "json", "html".
    pub explain_formats: Vec<String>,
    pub gradcheck_seeds: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let enc = EncoderConfig::desk(0);
        let hp = Hyperparams::default();
        RunConfig {
            corpus_en: None,
            truth_en: None,
            corpus_es: None,
            truth_es: None,
            embeddings: None,
            out_dir: PathBuf::from("out"),
            bundles: Vec::new(),
            lang: Lang::All,
            encoder: EncoderMode::Toy,
            pooling: PoolingMode::Attention,
            baseline: BaselineMode::PerPost,
            d_model: enc.d_model,
            n_layers: enc.n_layers,
            n_heads: enc.n_heads,
            d_ff: enc.d_ff,
            max_post_len: enc.max_post_len,
            join_max_len: 500,
            join_markers: true,
            embedding_dim: 64,
            hidden: None,
            dropout_p: enc.dropout_p,
            learning_rate: hp.learning_rate,
            batch_size: hp.batch_size,
            epochs: hp.epochs,
            folds: hp.folds,
            weight_decay: hp.weight_decay,
            beta1: hp.beta1,
            beta2: hp.beta2,
            eps: hp.eps,
            seed: hp.seed,
            freeze_encoder: hp.freeze_encoder,
            min_token_freq: hp.min_token_freq,
            threads: None,
            top_k: None,
            explain_formats: vec!["json".into(), "html".into()],
            gradcheck_seeds: 50,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            file: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn model_config(&self) -> ModelConfig {
        let joined = self.baseline == BaselineMode::Joined;
        ModelConfig {
            encoder_mode: self.encoder,
            baseline: self.baseline,
            pooling: self.pooling,
            encoder: EncoderConfig {
                d_model: self.d_model,
                n_layers: self.n_layers,
                n_heads: self.n_heads,
                d_ff: self.d_ff,
                max_post_len: if joined { self.join_max_len } else { self.max_post_len },
                vocab_size: 0,
                dropout_p: self.dropout_p,
            },
            embedding_dim: self.embedding_dim,
            hidden: self.hidden,
            dropout_p: self.dropout_p,
            join_markers: self.join_markers,
        }
    }

    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            folds: self.folds,
            weight_decay: self.weight_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            seed: self.seed,
            freeze_encoder: self.freeze_encoder,
            min_token_freq: self.min_token_freq,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        if self.encoder == EncoderMode::Toy {
            // the vocabulary size is only known once a corpus is loaded
            EncoderConfig {
                vocab_size: 1,
                ..self.model_config().encoder
            }
            .validate()?;
        }
        for f in &self.explain_formats {
            if f != "json" && f != "html" {
                return Err(Error::Config(format!("unknown explain format {f:?}")));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }

    fn corpus_paths(&self, code: &str) -> (Option<&PathBuf>, Option<&PathBuf>) {
        match code {
            "en" => (self.corpus_en.as_ref(), self.truth_en.as_ref()),
            _ => (self.corpus_es.as_ref(), self.truth_es.as_ref()),
        }
    }

    /// Loads the selected languages. Truth comes from the configured file,
    /// else from `truth.txt` inside the corpus directory when present.
    pub fn load_corpus(&self) -> Result<Corpus> {
        let mut merged: Option<Corpus> = None;
        for &code in self.lang.codes() {
            let (dir, truth) = self.corpus_paths(code);
            let Some(dir) = dir else {
                if self.lang == Lang::All {
                    continue;
                }
                return Err(Error::Config(format!("no corpus_{code} directory configured")));
            };
            let mut corpus = load_pan_directory(dir, code)?;
            let truth = truth.cloned().or_else(|| Some(dir.join("truth.txt")).filter(|p| p.is_file()));
            if let Some(t) = truth {
                corpus = corpus.with_truth(&load_truth(&t)?)?;
            }
            info!("loaded {} {code} authors from {}", corpus.len(), dir.display());
            merged = Some(match merged {
                Some(m) => m.merge(corpus)?,
                None => corpus,
            });
        }
        merged.ok_or_else(|| Error::Config("no corpus directory configured".into()))
    }

    pub fn load_embeddings(&self) -> Result<Option<PrecomputedEmbeddingStore>> {
        match (self.encoder, &self.embeddings) {
            (EncoderMode::Precomputed, Some(p)) => Ok(Some(PrecomputedEmbeddingStore::load(p)?)),
            (EncoderMode::Precomputed, None) => Err(Error::Config("precomputed encoder needs an embeddings file".into())),
            (EncoderMode::Toy, _) => Ok(None),
        }
    }

    /// Configured bundle paths, or every `*.bundle` in out_dir (sorted).
    pub fn bundle_paths(&self) -> Result<Vec<PathBuf>> {
        if !self.bundles.is_empty() {
            return Ok(self.bundles.clone());
        }
        let dir = &self.out_dir;
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.extension().is_some_and(|x| x == "bundle") {
                paths.push(path);
            }
        }
        paths.sort();
        if paths.is_empty() {
            return Err(Error::Config(format!("no .bundle files in {}", dir.display())));
        }
        Ok(paths)
    }
}

#[derive(Debug, Parser)]
#[command(name = "profiler", version, about = "Author profiling for hate-speech spreader detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON file with flat configuration keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Cap on evaluation threads; training always runs on one thread.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// en, es or all.
    #[arg(long, global = true)]
    pub lang: Option<Lang>,
    /// toy or precomputed.
    #[arg(long, global = true)]
    pub encoder: Option<EncoderMode>,
    /// attention or mean.
    #[arg(long, global = true)]
    pub pooling: Option<PoolingMode>,
    /// per-post or joined.
    #[arg(long, global = true)]
    pub baseline: Option<BaselineMode>,
    #[arg(long, global = true)]
    pub corpus_en: Option<PathBuf>,
    #[arg(long, global = true)]
    pub truth_en: Option<PathBuf>,
    #[arg(long, global = true)]
    pub corpus_es: Option<PathBuf>,
    #[arg(long, global = true)]
    pub truth_es: Option<PathBuf>,
    #[arg(long, global = true)]
    pub embeddings: Option<PathBuf>,
    /// Model bundle to load; repeat for an ensemble.
    #[arg(long = "bundle", global = true)]
    pub bundles: Vec<PathBuf>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub learning_rate: Option<f64>,
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    #[arg(long, global = true)]
    pub freeze_encoder: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Corpus statistics per language.
    Stats {
        /// Print JSON only.
        #[arg(long)]
        json: bool,
    },
    /// Train one model on every labeled author.
    Train,
    /// Stratified k-fold cross-validation; writes one bundle per fold.
    Cv,
    /// Majority-vote labels as `id:::label` lines.
    Predict,
    /// Post and token attention reports.
    Explain {
        /// Only this author.
        #[arg(long)]
        author: Option<String>,
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Finite-difference check of every graph operation.
    Gradcheck {
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Post embeddings from a trained toy encoder, in SEMB1 format.
    ExportEmbeddings {
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

impl CommonArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    c.$field = v.clone().into();
                }
            )*};
        }
        set!(seed, out_dir, lang, encoder, pooling, baseline, epochs, learning_rate, folds);
        set!(corpus_en, truth_en, corpus_es, truth_es, embeddings);
        if self.threads.is_some() {
            c.threads = self.threads;
        }
        if !self.bundles.is_empty() {
            c.bundles = self.bundles.clone();
        }
        if self.freeze_encoder {
            c.freeze_encoder = true;
        }
        c.validate()?;
        Ok(c)
    }
}

/// Process exit status for an error: 3 for divergence, 2 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Diverged { .. } => 3,
        _ => 2,
    }
}

/// Parses arguments, runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = std::env::var("PROFILER_LOG").unwrap_or_else(|_| "info".into());
    let _ = env_logger::Builder::new()
        .parse_filters(&level)
        .format_timestamp(None)
        .try_init();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cli: &Cli) -> Result<i32> {
    let config = cli.common.resolve()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = config.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(&cli.command, &config))
}

fn dispatch(command: &Command, config: &RunConfig) -> Result<i32> {
    match command {
        Command::Stats { json } => cmd_stats(config, *json),
        Command::Train => cmd_train(config),
        Command::Cv => cmd_cv(config),
        Command::Predict => cmd_predict(config),
        Command::Explain { author, top_k } => cmd_explain(config, author.as_deref(), top_k.or(config.top_k)),
        Command::Gradcheck { seeds } => cmd_gradcheck(config, seeds.unwrap_or(config.gradcheck_seeds)),
        Command::ExportEmbeddings { output } => cmd_export_embeddings(config, output.as_deref()),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn record_config(config: &RunConfig, command: &str) -> Result<()> {
    let path = config.out_dir.join(format!("{command}_config.json"));
    write_file(&path, serde_json::to_string_pretty(config)?)
}

fn load_models(config: &RunConfig) -> Result<(Vec<Model>, Vec<String>)> {
    let mut models = Vec::new();
    let mut ids = Vec::new();
    for path in config.bundle_paths()? {
        let bundle = ModelBundle::load(&path)?;
        info!("loaded bundle {} from {}", bundle.id(), path.display());
        ids.push(bundle.id());
        models.push(bundle.to_model()?);
    }
    Ok((models, ids))
}

pub fn cmd_stats(config: &RunConfig, json_only: bool) -> Result<i32> {
    let stats = corpus_stats(&config.load_corpus()?)?;
    let json = serde_json::to_string_pretty(&stats)?;
    if json_only {
        println!("{json}");
    } else {
        print!("{}", stats.to_table());
        println!("{json}");
    }
    Ok(0)
}

pub fn cmd_train(config: &RunConfig) -> Result<i32> {
    let corpus = config.load_corpus()?;
    let embeddings = config.load_embeddings()?;
    let hp = config.hyperparams();
    let data = TrainingData {
        corpus: &corpus,
        embeddings: embeddings.as_ref(),
    };
    let ids: Vec<String> = corpus.profiles().iter().map(|p| p.author_id.clone()).collect();
    let seed = hp.model_seed(None);
    let model = train_model(data, &ids, &config.model_config(), &hp, seed)?;
    let bundle = ModelBundle::from_model(&model, None, seed, hp.freeze_encoder);
    let path = config.out_dir.join("model.bundle");
    write_file(&path, bundle.to_bytes()?)?;
    record_config(config, "train")?;
    println!("wrote {}", path.display());
    Ok(0)
}

pub fn cmd_cv(config: &RunConfig) -> Result<i32> {
    let corpus = config.load_corpus()?;
    let embeddings = config.load_embeddings()?;
    let data = TrainingData {
        corpus: &corpus,
        embeddings: embeddings.as_ref(),
    };
    let outcome = cross_validate(data, &config.model_config(), &config.hyperparams())?;
    for b in &outcome.bundles {
        let fold = b.header.fold.unwrap_or(0);
        write_file(&config.out_dir.join(format!("fold{fold}.bundle")), b.to_bytes()?)?;
    }
    let table = outcome.report.to_table();
    write_file(&config.out_dir.join("cv_report.json"), outcome.report.to_json()?)?;
    write_file(&config.out_dir.join("cv_report.txt"), &table)?;
    write_file(
        &config.out_dir.join("folds.json"),
        serde_json::to_string_pretty(&outcome.splits)?,
    )?;
    record_config(config, "cv")?;
    print!("{table}");
    Ok(0)
}

#[derive(Serialize)]
struct VoteRecord<'a> {
    author_id: &'a str,
    label: Label,
    votes: [usize; 2],
    tie: bool,
}

pub fn cmd_predict(config: &RunConfig) -> Result<i32> {
    let corpus = config.load_corpus()?;
    let embeddings = config.load_embeddings()?;
    let (models, _) = load_models(config)?;
    let votes = corpus
        .profiles()
        .par_iter()
        .map(|p| predict_ensemble(&models, p, embeddings.as_ref()).map(|(v, _)| v))
        .collect::<Result<Vec<_>>>()?;
    let mut lines = String::new();
    let mut records = Vec::new();
    for (p, v) in corpus.profiles().iter().zip(&votes) {
        if v.tie {
            warn!("tied vote for {}; predicting {}", p.author_id, v.label);
        }
        lines.push_str(&format!("{}:::{}\n", p.author_id, v.label.index()));
        records.push(VoteRecord {
            author_id: &p.author_id,
            label: v.label,
            votes: v.counts,
            tie: v.tie,
        });
    }
    write_file(&config.out_dir.join("predictions.txt"), &lines)?;
    write_file(&config.out_dir.join("votes.json"), serde_json::to_string_pretty(&records)?)?;
    print!("{lines}");
    Ok(0)
}

fn file_stem_for(author_id: &str) -> String {
    author_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn cmd_explain(config: &RunConfig, author: Option<&str>, top_k: Option<usize>) -> Result<i32> {
    let corpus = config.load_corpus()?;
    let embeddings = config.load_embeddings()?;
    let (models, ids) = load_models(config)?;
    let profiles: Vec<_> = match author {
        Some(a) => vec![corpus
            .get(a)
            .ok_or_else(|| Error::Lookup(format!("no author {a} in the corpus")))?],
        None => corpus.profiles().iter().collect(),
    };
    let reports = profiles
        .par_iter()
        .map(|p| explain_author(&models, &ids, p, embeddings.as_ref(), top_k))
        .collect::<Result<Vec<_>>>()?;
    let dir = config.out_dir.join("explain");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for r in &reports {
        let stem = file_stem_for(&r.author_id);
        if config.explain_formats.iter().any(|f| f == "json") {
            emit_json(r, &dir.join(format!("{stem}.json")))?;
        }
        if config.explain_formats.iter().any(|f| f == "html") {
            emit_html(r, &dir.join(format!("{stem}.html")))?;
        }
    }
    println!("wrote {} explanation(s) to {}", reports.len(), dir.display());
    Ok(0)
}

pub fn cmd_gradcheck(config: &RunConfig, seeds: usize) -> Result<i32> {
    let report = run_suite(config.seed, seeds.max(1))?;
    print!("{}", report.to_table());
    if report.passed {
        println!("all operations within relative error {:e}", report.tolerance);
        Ok(0)
    } else {
        println!("gradient check failed");
        Ok(1)
    }
}

pub fn cmd_export_embeddings(config: &RunConfig, output: Option<&Path>) -> Result<i32> {
    let corpus = config.load_corpus()?;
    let paths = config.bundle_paths()?;
    let bundle = ModelBundle::load(&paths[0])?;
    let model = bundle.to_model()?;
    if model.encoder().is_none() || model.config().baseline != BaselineMode::PerPost {
        return Err(Error::Config("export needs a per-post toy-encoder bundle".into()));
    }
    let matrices = corpus
        .profiles()
        .par_iter()
        .map(|p| model.post_embeddings(p, None))
        .collect::<Result<Vec<_>>>()?;
    let mut store = PrecomputedEmbeddingStore::new(model.config().dim())?;
    for (p, hp) in corpus.profiles().iter().zip(&matrices) {
        store.insert_tensor(p.author_id.clone(), hp)?;
    }
    let path = output
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.out_dir.join("embeddings.semb"));
    write_file(&path, store.to_bytes())?;
    println!("wrote {} authors to {}", store.len(), path.display());
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("c.json");
        std::fs::write(&path, r#"{"seed": 7, "epochs": 2, "pooling": "mean", "corpus_en": "x"}"#).unwrap();
        let cli = Cli::try_parse_from([
            "profiler",
            "cv",
            "--config",
            path.to_str().unwrap(),
            "--seed",
            "99",
            "--baseline",
            "per-post",
        ])
        .unwrap();
        let c = cli.common.resolve().unwrap();
        assert_eq!(c.seed, 99);
        assert_eq!(c.epochs, 2);
        assert_eq!(c.pooling, PoolingMode::Mean);
        assert_eq!(c.corpus_en, Some(PathBuf::from("x")));
    }

    #[test]
    fn unknown_keys_and_bad_modes_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("c.json");
        std::fs::write(&path, r#"{"sed": 7}"#).unwrap();
        assert!(matches!(RunConfig::load(&path), Err(Error::Parse { .. })));
        assert!(Cli::try_parse_from(["profiler", "cv", "--pooling", "max"]).is_err());
        let joined_precomputed = RunConfig {
            encoder: EncoderMode::Precomputed,
            baseline: BaselineMode::Joined,
            ..RunConfig::default()
        };
        assert!(joined_precomputed.validate().is_err());
    }

    #[test]
    fn config_roundtrips_through_json() {
        let c = RunConfig::default();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.hyperparams(), Hyperparams::default());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Diverged { step: 1, loss: f64::NAN }), 3);
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(file_stem_for("a/b c"), "a_b_c");
    }
}
