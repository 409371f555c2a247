//! File-backed batch pipeline: generate, train encoders, featurize, train
//! rankers, evaluate, report.
//!
//! Every artifact carries the hash of the config slice that produced it.
//! Hashes chain: each stage's hash covers its own settings plus the hash of
//! the stage it consumes, so an artifact left over from a different config is
//! rejected instead of silently mixed in.

use std::fmt::Write as _;
use std::fs;
use std::hash::Hasher;
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{parse_session_log, split_by_epoch, write_session_log, Session};
use crate::datagen::{generate_catalog, generate_sessions, GeneratorConfig};
use crate::embed::{load_embedding_table, EmbeddingTable, HashEmbedder, TextEmbedder};
use crate::error::{Error, Result};
use crate::eval::{build_report, ladder, split_for_eval, train_variants, LiftReport, Variant};
use crate::features::{FeaturizedSet, Featurizer};
use crate::ltr::{RankerHyperParams, RankerModel};
use crate::seq::{
    mean_ndcg, train_sequence_encoder, EncoderConfig, EncoderHyperParams, EncoderMode, EncoderProvenance,
    EncoderWeights,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub data: PathBuf,
    pub models: PathBuf,
    pub reports: PathBuf,
    pub logs: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            data: "data".into(),
            models: "models".into(),
            reports: "reports".into(),
            logs: "logs".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// First epoch of ranker data; encoders train on earlier epochs.
    pub boundary: u32,
    /// Fraction of ranker sessions held out for evaluation.
    pub eval_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            boundary: 4,
            eval_fraction: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub dim: usize,
    /// Hash key of the embedder; the FNV offset basis when absent.
    pub seed: Option<u64>,
    /// Precomputed table to use instead of the hashed embedder.
    pub table: Option<PathBuf>,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            dim: HashEmbedder::DEFAULT_DIM,
            seed: None,
            table: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub steps: usize,
    pub lr: f64,
    pub batch: usize,
    pub clip: f64,
    pub heads: usize,
    pub tau: f64,
}

impl Default for EncoderSection {
    fn default() -> Self {
        let hp = EncoderHyperParams::default();
        EncoderSection {
            steps: hp.steps,
            lr: hp.lr,
            batch: hp.batch,
            clip: hp.clip,
            heads: 4,
            tau: EncoderConfig::DEFAULT_TAU,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankerSection {
    pub steps: usize,
    pub lr: f64,
    pub batch: usize,
    pub clip: f64,
    /// Hidden width of the scorer; 0 selects the linear scorer.
    pub hidden: usize,
}

impl Default for RankerSection {
    fn default() -> Self {
        let hp = RankerHyperParams::default();
        RankerSection {
            steps: hp.steps,
            lr: hp.lr,
            batch: hp.batch,
            clip: hp.clip,
            hidden: hp.hidden.unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LadderConfig {
    /// Include the sequence-encoder features and the P2 rung that uses them.
    pub sequence: bool,
}

impl Default for LadderConfig {
    fn default() -> Self {
        LadderConfig { sequence: true }
    }
}

/// Everything a run needs. Read from TOML; see the README for the format.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed. Required here or on the command line. It replaces
    /// `generator.seed`, and the encoder seeds derive from it.
    pub seed: Option<u64>,
    pub paths: PathsConfig,
    pub generator: GeneratorConfig,
    pub split: SplitConfig,
    pub embedding: EmbeddingConfig,
    pub encoder: EncoderSection,
    pub ranker: RankerSection,
    pub ladder: LadderConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_owned()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.generator.validate()?;
        let s = &self.split;
        if s.boundary == 0 || s.boundary >= self.generator.epochs {
            return bad(format!(
                "split.boundary must lie in 1..{}, got {}",
                self.generator.epochs, s.boundary
            ));
        }
        if !(s.eval_fraction > 0.0 && s.eval_fraction < 1.0) {
            return bad("split.eval_fraction must lie in (0, 1)".into());
        }
        if self.embedding.dim == 0 {
            return bad("embedding.dim must be positive".into());
        }
        let e = &self.encoder;
        let r = &self.ranker;
        for (name, steps, lr, batch, clip) in [
            ("encoder", e.steps, e.lr, e.batch, e.clip),
            ("ranker", r.steps, r.lr, r.batch, r.clip),
        ] {
            if steps == 0 || batch == 0 {
                return bad(format!("{name}.steps and {name}.batch must be positive"));
            }
            if !(lr > 0.0 && lr.is_finite()) || !(clip > 0.0) {
                return bad(format!("{name}.lr and {name}.clip must be positive"));
            }
        }
        if self.ladder.sequence {
            EncoderConfig {
                heads: e.heads,
                tau: e.tau,
                ..EncoderConfig::new(EncoderMode::Trans, self.embedding.dim, 0)
            }
            .validate()
            .map_err(|err| Error::Config(format!("encoder: {err}")))?;
        }
        Ok(())
    }
}

/// Pinned seed splitting: a child seed per named purpose.
pub fn derive_seed(master: u64, purpose: &str) -> u64 {
    let mut h = FnvHasher::with_key(master ^ 0x9e37_79b9_7f4a_7c15);
    h.write(purpose.as_bytes());
    h.finish()
}

fn digest(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Per-stage config hashes. Paths and the ladder's effect on stages that do
/// not depend on it are excluded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageHashes {
    pub data: String,
    pub seq: String,
    pub features: String,
    pub ranker: String,
    pub report: String,
}

impl StageHashes {
    fn compute(cfg: &RunConfig, seed: u64, table_digest: &str) -> Self {
        let generator = GeneratorConfig {
            seed,
            ..cfg.generator.clone()
        };
        let data = digest(&["data", &format!("{generator:?}")]);
        let embed = format!("{:?}|{:?}|{table_digest}", cfg.embedding.dim, cfg.embedding.seed);
        let split = format!("{}", cfg.split.boundary);
        let seq = digest(&["seq", &data, &split, &embed, &format!("{:?}", cfg.encoder)]);
        let upstream = if cfg.ladder.sequence { seq.as_str() } else { "no-seq" };
        let features = digest(&["features", &data, &split, &embed, upstream]);
        let ranker = digest(&[
            "ranker",
            &features,
            &format!("{:?}|{}|{seed}", cfg.ranker, cfg.split.eval_fraction),
        ]);
        let report = digest(&["report", &ranker]);
        StageHashes {
            data,
            seq,
            features,
            ranker,
            report,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    GenData,
    TrainSeq,
    Featurize,
    TrainRanker,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::GenData,
        Stage::TrainSeq,
        Stage::Featurize,
        Stage::TrainRanker,
        Stage::Evaluate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::GenData => "gen-data",
            Stage::TrainSeq => "train-seq",
            Stage::Featurize => "featurize",
            Stage::TrainRanker => "train-ranker",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOutput {
    pub stage: Stage,
    /// Lines also written to the stage's log file.
    pub log: Vec<String>,
    pub written: Vec<PathBuf>,
    /// Rendered table, for the report stage.
    pub rendered: Option<String>,
}

enum Embedder {
    Hash(HashEmbedder),
    Table(EmbeddingTable<f64>),
}

impl Embedder {
    fn as_dyn(&self) -> &dyn TextEmbedder<f64> {
        match self {
            Embedder::Hash(e) => e,
            Embedder::Table(t) => t,
        }
    }
}

/// The two trained sequence encoders.
#[derive(Debug, Clone)]
pub struct EncoderPair {
    pub trans: EncoderWeights<f64>,
    pub perc: EncoderWeights<f64>,
}

/// A resolved run: config with its seed fixed, output locations, and hashes.
pub struct Pipeline {
    cfg: RunConfig,
    seed: u64,
    out: PathBuf,
    hashes: StageHashes,
    embedder: Embedder,
}

fn model_slug(variant: &str) -> String {
    let mut slug = String::new();
    for ch in variant.chars() {
        if ch.is_ascii_alphanumeric() {
            slug.push(ch.to_ascii_lowercase());
        } else if !slug.ends_with('_') {
            slug.push('_');
        }
    }
    slug.trim_matches('_').to_owned()
}

fn stamp(kind: &str, hash: &str, seed: u64) -> String {
    format!("#artifact={kind}\n#config_hash={hash}\n#seed={seed}\n")
}

fn stamped_hash(text: &str) -> Option<&str> {
    text.lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.strip_prefix("#config_hash="))
}

fn read_artifact(path: &Path) -> Result<String> {
    match fs::read_to_string(path) {
        Ok(t) => Ok(t),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingArtifact(path.to_owned())),
        Err(e) => Err(e.into()),
    }
}

fn check_hash(path: &Path, expected: &str, found: Option<&str>) -> Result<()> {
    if found == Some(expected) {
        return Ok(());
    }
    Err(Error::ConfigHashMismatch {
        artifact: path.to_owned(),
        expected: expected.to_owned(),
        found: found.unwrap_or("none").to_owned(),
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

impl Pipeline {
    /// `seed` overrides the config's seed; `out` is prefixed to every path.
    pub fn new(mut cfg: RunConfig, seed: Option<u64>, out: Option<&Path>) -> Result<Self> {
        let seed = seed
            .or(cfg.seed)
            .ok_or_else(|| Error::Config("a seed is required (config `seed` or --seed)".into()))?;
        cfg.seed = Some(seed);
        cfg.generator.seed = seed;
        cfg.validate()?;
        let (embedder, table_digest) = match &cfg.embedding.table {
            Some(path) => {
                let text = read_artifact(path)?;
                let table = load_embedding_table::<f64>(&text)?;
                if TextEmbedder::dim(&table) != cfg.embedding.dim {
                    return Err(Error::Config(format!(
                        "embedding table has dim {}, config says {}",
                        TextEmbedder::dim(&table),
                        cfg.embedding.dim
                    )));
                }
                (Embedder::Table(table), digest(&[&text]))
            }
            None => {
                let e = HashEmbedder::new(
                    cfg.embedding.dim,
                    cfg.embedding.seed.unwrap_or(HashEmbedder::DEFAULT_SEED),
                )?;
                (Embedder::Hash(e), String::new())
            }
        };
        let hashes = StageHashes::compute(&cfg, seed, &table_digest);
        Ok(Pipeline {
            cfg,
            seed,
            out: out.map(Path::to_path_buf).unwrap_or_default(),
            hashes,
            embedder,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn hashes(&self) -> &StageHashes {
        &self.hashes
    }

    pub fn sessions_path(&self) -> PathBuf {
        self.out.join(&self.cfg.paths.data).join("sessions.log")
    }

    pub fn features_path(&self) -> PathBuf {
        self.out.join(&self.cfg.paths.data).join("features.tsv")
    }

    pub fn encoder_path(&self, mode: EncoderMode) -> PathBuf {
        self.out
            .join(&self.cfg.paths.models)
            .join(format!("encoder_{}.txt", mode.as_str()))
    }

    pub fn model_path(&self, variant: &str) -> PathBuf {
        self.out
            .join(&self.cfg.paths.models)
            .join(format!("ranker_{}.txt", model_slug(variant)))
    }

    pub fn report_path(&self) -> PathBuf {
        self.out.join(&self.cfg.paths.reports).join("lift_report.tsv")
    }

    pub fn rendered_report_path(&self) -> PathBuf {
        self.out.join(&self.cfg.paths.reports).join("lift_report.txt")
    }

    pub fn log_path(&self, stage: Stage) -> PathBuf {
        self.out.join(&self.cfg.paths.logs).join(format!("{}.log", stage.name()))
    }

    fn variants(&self) -> Vec<Variant> {
        ladder(self.cfg.ladder.sequence).0
    }

    fn ranker_hp(&self) -> RankerHyperParams {
        let r = &self.cfg.ranker;
        RankerHyperParams {
            steps: r.steps,
            lr: r.lr,
            batch: r.batch,
            clip: r.clip,
            seed: self.seed,
            hidden: (r.hidden > 0).then_some(r.hidden),
        }
    }

    // in-memory stage bodies, shared by the file-backed stages and `run_in_memory`

    pub fn generate(&self) -> Result<Vec<Session>> {
        let catalog = generate_catalog(&self.cfg.generator)?;
        generate_sessions(&self.cfg.generator, &catalog)
    }

    pub fn train_encoders(&self, sessions: &[Session], log: &mut Vec<String>) -> Result<EncoderPair> {
        let boundary = self.cfg.split.boundary;
        let train: Vec<Session> = sessions.iter().filter(|s| s.epoch < boundary).cloned().collect();
        let max_epoch = train
            .iter()
            .map(|s| s.epoch)
            .max()
            .ok_or_else(|| Error::InvalidArgument(format!("no sessions before epoch {boundary}")))?;
        let examples = Featurizer::new(self.embedder.as_dyn()).seq_examples(&train)?;
        log.push(format!(
            "encoder sessions={} examples={} max_train_epoch={max_epoch}",
            train.len(),
            examples.len()
        ));
        let e = &self.cfg.encoder;
        let mut train_one = |mode: EncoderMode| -> Result<EncoderWeights<f64>> {
            let config = EncoderConfig {
                heads: e.heads,
                tau: e.tau,
                ..EncoderConfig::new(mode, self.cfg.embedding.dim, derive_seed(self.seed, mode.as_str()))
            };
            let init = EncoderWeights::init(config)?;
            let hp = EncoderHyperParams {
                steps: e.steps,
                lr: e.lr,
                batch: e.batch,
                clip: e.clip,
                seed: derive_seed(self.seed, &format!("{}-sgd", mode.as_str())),
            };
            let before = mean_ndcg(&init, &examples, 10)?;
            let mut trained = train_sequence_encoder(init, &examples, &hp)?;
            let after = mean_ndcg(&trained.weights, &examples, 10)?;
            log.push(format!(
                "encoder {} steps={} ndcg@10 {before:.6} -> {after:.6}",
                mode.as_str(),
                e.steps
            ));
            trained.weights.provenance = EncoderProvenance {
                max_train_epoch: Some(max_epoch),
                config_hash: Some(self.hashes.seq.clone()),
            };
            Ok(trained.weights)
        };
        Ok(EncoderPair {
            trans: train_one(EncoderMode::Trans)?,
            perc: train_one(EncoderMode::Perc)?,
        })
    }

    pub fn featurize_sessions(&self, sessions: Vec<Session>, encoders: Option<&EncoderPair>) -> Result<FeaturizedSet> {
        let boundary = self.cfg.split.boundary;
        let split = split_by_epoch(sessions, boundary);
        if split.ranker_data.is_empty() {
            return Err(Error::InvalidArgument(format!("no sessions at or after epoch {boundary}")));
        }
        let featurizer = Featurizer::new(self.embedder.as_dyn());
        let mut featurizer = match (self.cfg.ladder.sequence, encoders) {
            (false, _) => featurizer,
            (true, Some(enc)) => featurizer.with_encoders(&enc.trans, &enc.perc, boundary)?,
            (true, None) => return Err(Error::InvalidArgument("sequence features need trained encoders".into())),
        };
        featurizer.featurize_sessions(&split.ranker_data)
    }

    pub fn train_rankers(&self, set: &FeaturizedSet) -> Result<Vec<RankerModel<f64>>> {
        let (train, _) = split_for_eval(set, self.seed, self.cfg.split.eval_fraction);
        let mut models = train_variants(&train, &self.variants(), &self.ranker_hp())?;
        for m in &mut models {
            m.config_hash = Some(self.hashes.ranker.clone());
        }
        Ok(models)
    }

    pub fn evaluate_models(&self, set: &FeaturizedSet, models: &[RankerModel<f64>]) -> Result<LiftReport> {
        let (_, comparisons) = ladder(self.cfg.ladder.sequence);
        let (_, test) = split_for_eval(set, self.seed, self.cfg.split.eval_fraction);
        let mut report = build_report(models, &comparisons, &test, self.seed)?;
        report.meta = vec![
            ("artifact".into(), "lift_report".into()),
            ("config_hash".into(), self.hashes.report.clone()),
            ("seed".into(), self.seed.to_string()),
        ];
        Ok(report)
    }

    /// The whole pipeline without touching the filesystem.
    pub fn run_in_memory(&self) -> Result<LiftReport> {
        let sessions = self.generate()?;
        let encoders = if self.cfg.ladder.sequence {
            Some(self.train_encoders(&sessions, &mut Vec::new())?)
        } else {
            None
        };
        let set = self.featurize_sessions(sessions, encoders.as_ref())?;
        let models = self.train_rankers(&set)?;
        self.evaluate_models(&set, &models)
    }

    // artifact readers

    pub fn load_sessions(&self) -> Result<Vec<Session>> {
        let path = self.sessions_path();
        let text = read_artifact(&path)?;
        check_hash(&path, &self.hashes.data, stamped_hash(&text))?;
        parse_session_log(&text)
    }

    pub fn load_encoders(&self) -> Result<EncoderPair> {
        let load = |mode| -> Result<EncoderWeights<f64>> {
            let path = self.encoder_path(mode);
            let w = EncoderWeights::<f64>::from_text(&read_artifact(&path)?)?;
            check_hash(&path, &self.hashes.seq, w.provenance.config_hash.as_deref())?;
            Ok(w)
        };
        Ok(EncoderPair {
            trans: load(EncoderMode::Trans)?,
            perc: load(EncoderMode::Perc)?,
        })
    }

    pub fn load_features(&self) -> Result<FeaturizedSet> {
        let path = self.features_path();
        let text = read_artifact(&path)?;
        check_hash(&path, &self.hashes.features, stamped_hash(&text))?;
        FeaturizedSet::from_text(&text)
    }

    pub fn load_models(&self) -> Result<Vec<RankerModel<f64>>> {
        self.variants()
            .iter()
            .map(|v| {
                let path = self.model_path(&v.name);
                let m = RankerModel::<f64>::from_text(&read_artifact(&path)?)?;
                check_hash(&path, &self.hashes.ranker, m.config_hash.as_deref())?;
                if m.variant != v.name {
                    return Err(Error::Parse {
                        line: 0,
                        msg: format!("{} holds variant {:?}, expected {:?}", path.display(), m.variant, v.name),
                    });
                }
                Ok(m)
            })
            .collect()
    }

    pub fn load_report(&self) -> Result<LiftReport> {
        let path = self.report_path();
        let report = LiftReport::from_tsv(&read_artifact(&path)?)?;
        let found = report.meta.iter().find(|(k, _)| k == "config_hash").map(|(_, v)| v.as_str());
        check_hash(&path, &self.hashes.report, found)?;
        Ok(report)
    }

    // file-backed stages

    fn stage_hash(&self, stage: Stage) -> &str {
        match stage {
            Stage::GenData => &self.hashes.data,
            Stage::TrainSeq => &self.hashes.seq,
            Stage::Featurize => &self.hashes.features,
            Stage::TrainRanker => &self.hashes.ranker,
            Stage::Evaluate | Stage::Report => &self.hashes.report,
        }
    }

    pub fn run(&self, stage: Stage) -> Result<StageOutput> {
        let mut log = Vec::new();
        let mut written = Vec::new();
        let mut rendered = None;
        let mut put = |path: PathBuf, contents: &str| -> Result<()> {
            write_file(&path, contents)?;
            written.push(path);
            Ok(())
        };
        match stage {
            Stage::GenData => {
                let sessions = self.generate()?;
                let impressions: usize = sessions.iter().map(|s| s.impressions().count()).sum();
                let clicks: usize = sessions.iter().map(|s| s.clicks().count()).sum();
                log.push(format!(
                    "sessions={} impressions={impressions} clicks={clicks}",
                    sessions.len()
                ));
                let text = stamp("sessions", &self.hashes.data, self.seed) + &write_session_log(&sessions);
                put(self.sessions_path(), &text)?;
            }
            Stage::TrainSeq => {
                let sessions = self.load_sessions()?;
                let pair = self.train_encoders(&sessions, &mut log)?;
                put(self.encoder_path(EncoderMode::Trans), &pair.trans.to_text())?;
                put(self.encoder_path(EncoderMode::Perc), &pair.perc.to_text())?;
            }
            Stage::Featurize => {
                let sessions = self.load_sessions()?;
                let encoders = if self.cfg.ladder.sequence {
                    Some(self.load_encoders()?)
                } else {
                    None
                };
                let set = self.featurize_sessions(sessions, encoders.as_ref())?;
                log.push(format!(
                    "impressions={} columns={}",
                    set.impressions.len(),
                    set.layout.len()
                ));
                let text = stamp("features", &self.hashes.features, self.seed) + &set.to_text();
                put(self.features_path(), &text)?;
            }
            Stage::TrainRanker => {
                let set = self.load_features()?;
                let models = self.train_rankers(&set)?;
                for m in &models {
                    let fmt = |v: Option<f64>| v.map_or("n/a".to_owned(), |v| format!("{v:.6}"));
                    log.push(format!(
                        "{}: steps={} val_ndcg {} -> {}",
                        m.variant,
                        m.summary.steps,
                        fmt(m.summary.val_ndcg_before),
                        fmt(m.summary.val_ndcg_after)
                    ));
                    put(self.model_path(&m.variant), &m.to_text())?;
                }
            }
            Stage::Evaluate => {
                let set = self.load_features()?;
                let models = self.load_models()?;
                let report = self.evaluate_models(&set, &models)?;
                for r in &report.rows {
                    log.push(format!("{}: lift {:+.4}% se {:.4}%", r.comparison, r.lift_pct, r.lift_se_pct));
                }
                put(self.report_path(), &report.to_tsv())?;
            }
            Stage::Report => {
                let text = self.load_report()?.render();
                put(self.rendered_report_path(), &text)?;
                rendered = Some(text);
            }
        }
        let mut text = format!(
            "stage={}\nconfig_hash={}\nseed={}\n",
            stage.name(),
            self.stage_hash(stage),
            self.seed
        );
        for line in &log {
            writeln!(text, "{line}").unwrap();
        }
        let log_path = self.log_path(stage);
        write_file(&log_path, &text)?;
        written.push(log_path);
        Ok(StageOutput {
            stage,
            log,
            written,
            rendered,
        })
    }

    /// Every stage in order; `train-seq` is skipped when the ladder has no
    /// sequence features.
    pub fn run_all(&self) -> Result<Vec<StageOutput>> {
        Stage::ALL
            .into_iter()
            .filter(|&s| s != Stage::TrainSeq || self.cfg.ladder.sequence)
            .map(|s| self.run(s))
            .collect()
    }
}
