//! Batch evaluation runner: every (item x condition) of a corpus is routed,
//! translated, judged and written out in a deterministic order.
//!
//! Output directory layout:
//!
//! ```text
//! pairing.jsonl         adversarial donor map (only when C4 runs)
//! captions.jsonl        frozen caption store
//! trials.partial.jsonl  append log while the run is in progress
//! trials.jsonl          final records sorted by (item_id, condition)
//! errors.json           per-trial failures
//! manifest.json         run manifest
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clock::Clock;
use crate::corpus::{generate_adversarial, load_corpus, AdversarialPairing, Corpus, CorpusError, CorpusItem};
use crate::evalstats::{judge, parse_overrides, parse_trials, trials_to_jsonl, JudgementOverride, TrialRecord};
use crate::gateway::{ErrorKind, Gateway};
use crate::prompting::{fixtures, route_condition, CaptionRecord, CaptionStore, Condition, DecodingParams, ImageStore};
use crate::vision::{caption_scene, encode_image, CaptionStyle, EncodeSettings};

pub const PAIRING_FILE: &str = "pairing.jsonl";
pub const CAPTIONS_FILE: &str = "captions.jsonl";
pub const TRIALS_FILE: &str = "trials.jsonl";
pub const PARTIAL_FILE: &str = "trials.partial.jsonl";
pub const ERRORS_FILE: &str = "errors.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub corpus_path: PathBuf,
    pub conditions: Vec<Condition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adversarial_seed: Option<u64>,
    /// Existing pairing file to use instead of generating one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairing_path: Option<PathBuf>,
    /// Existing caption store; entries found there are not regenerated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub captions_path: Option<PathBuf>,
    pub caption_style: CaptionStyle,
    pub output_dir: PathBuf,
    pub resume: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overrides_path: Option<PathBuf>,
    pub encode: EncodeSettings,
    /// Trials in flight at once; the gateway applies its own provider limit
    /// on top.
    pub max_inflight: usize,
}

impl RunConfig {
    pub fn new(corpus_path: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            corpus_path: corpus_path.into(),
            conditions: Condition::ALL.to_vec(),
            adversarial_seed: None,
            pairing_path: None,
            captions_path: None,
            caption_style: CaptionStyle::Generic,
            output_dir: output_dir.into(),
            resume: false,
            overrides_path: None,
            encode: EncodeSettings::default(),
            max_inflight: 4,
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.conditions.is_empty() {
            return Err(RunError::Config("no conditions selected".into()));
        }
        if self.conditions.contains(&Condition::Adversarial) && self.adversarial_seed.is_none() {
            return Err(RunError::Config("condition C4 requires an adversarial seed".into()));
        }
        if self.max_inflight == 0 {
            return Err(RunError::Config("max_inflight must be at least 1".into()));
        }
        if self.encode.max_edge == 0 || !(1..=100).contains(&self.encode.quality) {
            return Err(RunError::Config(format!(
                "invalid image encoding settings (max_edge {}, quality {})",
                self.encode.max_edge, self.encode.quality
            )));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A trial that produced no record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub item_id: String,
    pub condition: Condition,
    /// `caption`, `image`, `prompt` or `translate`.
    pub stage: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ErrorKind>,
    pub detail: String,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelIds {
    pub translation: String,
    pub caption: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounts {
    pub planned: usize,
    pub completed: usize,
    pub reused: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config: RunConfig,
    pub corpus_digest: String,
    pub prompt_fixture_version: String,
    pub model_ids: ModelIds,
    pub provider_base_url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairing_digest: Option<String>,
    pub captions_digest: String,
    pub counts: RunCounts,
    pub started_at: String,
    pub finished_at: String,
}

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub manifest: RunManifest,
    pub trials: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Identifier derived from everything that determines the trial contents.
pub fn run_id(
    corpus_digest: &str,
    conditions: &[Condition],
    seed: Option<u64>,
    model_id: &str,
    style: CaptionStyle,
) -> String {
    let mut h = Sha256::new();
    for part in [
        "vgi-run",
        corpus_digest,
        fixtures::VERSION,
        &conditions.iter().map(|c| c.code()).collect::<Vec<_>>().join(","),
        &seed.map(|s| s.to_string()).unwrap_or_default(),
        model_id,
        &style.to_string(),
    ] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

fn read_optional(path: &Path) -> Result<Option<String>, RunError> {
    match fs::read_to_string(path) {
        Ok(text) => Ok(Some(text)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(path)(e)),
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), RunError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn resolve_pairing(config: &RunConfig, corpus: &Corpus) -> Result<Option<AdversarialPairing>, RunError> {
    if !config.conditions.contains(&Condition::Adversarial) {
        return Ok(None);
    }
    let seed = config.adversarial_seed.expect("validated");
    let pairing = match &config.pairing_path {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            let pairing = AdversarialPairing::from_jsonl(&text)?;
            if pairing.seed != seed {
                return Err(RunError::Config(format!(
                    "pairing file seed {} differs from requested seed {seed}",
                    pairing.seed
                )));
            }
            let problems = pairing.check(corpus);
            if !problems.is_empty() {
                return Err(RunError::Config(format!("pairing file: {}", problems.join("; "))));
            }
            pairing
        }
        None => generate_adversarial(corpus, seed)?,
    };
    Ok(Some(pairing))
}

/// Item ids whose caption the selected conditions need.
fn caption_owners(config: &RunConfig, corpus: &Corpus, pairing: Option<&AdversarialPairing>) -> BTreeSet<String> {
    let mut owners = BTreeSet::new();
    for item in &corpus.items {
        if config.conditions.contains(&Condition::Caption) {
            owners.insert(item.id.clone());
        }
        if let Some(donor) = pairing.and_then(|p| p.donor(&item.id)) {
            owners.insert(donor.to_string());
        }
    }
    owners
}

fn load_image(
    corpus: &Corpus,
    item: &CorpusItem,
    settings: EncodeSettings,
) -> Result<crate::vision::EncodedImage, String> {
    let path = corpus.image_path(item);
    let bytes = fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    encode_image(&bytes, settings).map_err(|e| format!("{}: {e}", path.display()))
}

/// Fills the caption store: gold captions first, then any supplied or
/// previously written store, then fresh captions from the provider.
async fn prepare_captions(
    config: &RunConfig,
    corpus: &Corpus,
    owners: &BTreeSet<String>,
    gateway: &Gateway,
    clock: &Arc<dyn Clock>,
) -> Result<(CaptionStore, BTreeMap<String, String>), RunError> {
    let mut existing = CaptionStore::new();
    let mut sources: Vec<PathBuf> = config.captions_path.iter().cloned().collect();
    if config.resume {
        sources.push(config.output_dir.join(CAPTIONS_FILE));
    }
    for path in sources {
        if let Some(text) = read_optional(&path)? {
            let store = CaptionStore::from_jsonl(&text).map_err(RunError::Config)?;
            for rec in store.iter() {
                if existing.get(&rec.item_id).is_none() {
                    existing.insert(rec.clone());
                }
            }
        }
    }

    let mut store = CaptionStore::new();
    let mut missing = Vec::new();
    for id in owners {
        let item = corpus.get(id).expect("owners come from the corpus");
        if let Some(gold) = &item.caption_gold {
            store.insert(CaptionRecord {
                item_id: id.clone(),
                caption: gold.clone(),
                model_id: "gold".into(),
                created_at: String::new(),
            });
        } else if let Some(rec) = existing.get(id) {
            store.insert(rec.clone());
        } else {
            missing.push(item);
        }
    }

    let style = config.caption_style;
    let generated: Vec<(String, Result<CaptionRecord, String>)> = stream::iter(missing)
        .map(|item| async move {
            let result = async {
                let image = load_image(corpus, item, config.encode)?;
                let caption = caption_scene(&image, style, &item.id, gateway)
                    .await
                    .map_err(|e| e.to_string())?;
                Ok(CaptionRecord {
                    item_id: item.id.clone(),
                    caption: caption.text,
                    model_id: caption.model_id,
                    created_at: clock.now_rfc3339(),
                })
            }
            .await;
            (item.id.clone(), result)
        })
        .buffer_unordered(config.max_inflight)
        .collect()
        .await;

    let mut failed = BTreeMap::new();
    for (id, result) in generated {
        match result {
            Ok(rec) => store.insert(rec),
            Err(detail) => {
                tracing::warn!(item = %id, %detail, "caption generation failed");
                failed.insert(id, detail);
            }
        }
    }
    Ok((store, failed))
}

struct Planned<'a> {
    item: &'a CorpusItem,
    condition: Condition,
    bundle: crate::prompting::PromptBundle,
}

enum Outcome {
    Done(Box<TrialRecord>, bool),
    Failed(TrialFailure),
}

fn failure(item: &CorpusItem, condition: Condition, stage: &str, detail: impl Into<String>) -> TrialFailure {
    TrialFailure {
        item_id: item.id.clone(),
        condition,
        stage: stage.into(),
        kind: None,
        detail: detail.into(),
        attempts: 0,
    }
}

fn apply_judgement(
    trial: &mut TrialRecord,
    item: &CorpusItem,
    overrides: &BTreeMap<(String, Condition), JudgementOverride>,
) {
    match overrides.get(&(trial.item_id.clone(), trial.condition)) {
        Some(o) => trial.set_judgement(o.judgement()),
        None => trial.set_judgement(judge(&trial.translation_text, item)),
    }
}

fn load_previous(config: &RunConfig) -> Result<BTreeMap<(String, Condition), TrialRecord>, RunError> {
    let mut previous = BTreeMap::new();
    if !config.resume {
        return Ok(previous);
    }
    for name in [TRIALS_FILE, PARTIAL_FILE] {
        let path = config.output_dir.join(name);
        if let Some(text) = read_optional(&path)? {
            for trial in parse_trials(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))? {
                previous.insert((trial.item_id.clone(), trial.condition), trial);
            }
        }
    }
    Ok(previous)
}

/// Runs the configured batch. Per-trial failures are collected, not fatal;
/// configuration and corpus problems abort before any provider call.
pub async fn run_batch(config: &RunConfig, gateway: &Gateway, clock: Arc<dyn Clock>) -> Result<BatchOutcome, RunError> {
    config.validate()?;
    let corpus = load_corpus(&config.corpus_path)?;
    let pairing = resolve_pairing(config, &corpus)?;
    let overrides: BTreeMap<(String, Condition), JudgementOverride> = match &config.overrides_path {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            parse_overrides(&text)
                .map_err(RunError::Config)?
                .into_iter()
                .map(|o| ((o.item_id.clone(), o.condition), o))
                .collect()
        }
        None => BTreeMap::new(),
    };
    fs::create_dir_all(&config.output_dir).map_err(io_err(&config.output_dir))?;
    let previous = load_previous(config)?;

    let mut conditions = config.conditions.clone();
    conditions.sort();
    conditions.dedup();
    let started_at = clock.now_rfc3339();
    let decoding = DecodingParams::greedy(gateway.config().model_id.clone());
    let corpus_digest = corpus.digest();
    let run_id = run_id(
        &corpus_digest,
        &conditions,
        config.adversarial_seed.filter(|_| pairing.is_some()),
        &decoding.model_id,
        config.caption_style,
    );

    if let Some(p) = &pairing {
        write_file(&config.output_dir.join(PAIRING_FILE), p.to_jsonl().as_bytes())?;
    }
    let owners = caption_owners(config, &corpus, pairing.as_ref());
    let (captions, caption_failures) = prepare_captions(config, &corpus, &owners, gateway, &clock).await?;
    write_file(&config.output_dir.join(CAPTIONS_FILE), captions.to_jsonl().as_bytes())?;

    let mut images = ImageStore::new();
    let mut image_failures = BTreeMap::new();
    if conditions.contains(&Condition::Multimodal) {
        for item in &corpus.items {
            match load_image(&corpus, item, config.encode) {
                Ok(img) => {
                    images.insert(item.id.clone(), img);
                }
                Err(detail) => {
                    image_failures.insert(item.id.clone(), detail);
                }
            }
        }
    }

    let mut failures = Vec::new();
    let mut planned = Vec::new();
    for item in &corpus.items {
        for &condition in &conditions {
            let owner = match condition {
                Condition::Caption => Some(item.id.as_str()),
                Condition::Adversarial => pairing.as_ref().and_then(|p| p.donor(&item.id)),
                _ => None,
            };
            if let Some(detail) = owner.and_then(|o| caption_failures.get(o)) {
                failures.push(failure(item, condition, "caption", detail.clone()));
                continue;
            }
            if condition == Condition::Multimodal {
                if let Some(detail) = image_failures.get(&item.id) {
                    failures.push(failure(item, condition, "image", detail.clone()));
                    continue;
                }
            }
            match route_condition(item, condition, pairing.as_ref(), &captions, &images, &decoding) {
                Ok(bundle) => planned.push(Planned {
                    item,
                    condition,
                    bundle,
                }),
                Err(e) => failures.push(failure(item, condition, "prompt", e.to_string())),
            }
        }
    }
    let planned_count = planned.len() + failures.len();

    let partial_path = config.output_dir.join(PARTIAL_FILE);
    let partial = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&partial_path)
        .map_err(io_err(&partial_path))?;
    if !config.resume {
        partial.set_len(0).map_err(io_err(&partial_path))?;
    }
    let partial = Mutex::new(partial);

    let outcomes: Vec<Outcome> = stream::iter(planned)
        .map(|p| {
            let previous = &previous;
            let overrides = &overrides;
            let captions = &captions;
            let pairing = pairing.as_ref();
            let clock = &clock;
            let run_id = &run_id;
            let partial = &partial;
            async move {
                if let Some(prev) = previous.get(&(p.item.id.clone(), p.condition)) {
                    if prev.prompt_digest == p.bundle.digest && prev.run_id == *run_id {
                        let mut trial = prev.clone();
                        apply_judgement(&mut trial, p.item, overrides);
                        return Outcome::Done(Box::new(trial), true);
                    }
                }
                let started_at = clock.now_rfc3339();
                let result = gateway.translate(&p.bundle).await;
                let finished_at = clock.now_rfc3339();
                let translation = match result {
                    Ok(t) => t,
                    Err(e) => {
                        return Outcome::Failed(TrialFailure {
                            item_id: p.item.id.clone(),
                            condition: p.condition,
                            stage: "translate".into(),
                            kind: Some(e.kind),
                            detail: e.detail,
                            attempts: e.attempts,
                        })
                    }
                };
                let donor = match p.condition {
                    Condition::Adversarial => pairing.and_then(|pr| pr.donor(&p.item.id)).map(str::to_string),
                    _ => None,
                };
                let caption_used = match p.condition {
                    Condition::Caption => captions.caption(&p.item.id).map(str::to_string),
                    Condition::Adversarial => donor.as_deref().and_then(|d| captions.caption(d)).map(str::to_string),
                    _ => None,
                };
                let judgement = judge(&translation.text, p.item);
                let mut trial = TrialRecord {
                    run_id: run_id.clone(),
                    item_id: p.item.id.clone(),
                    trigger: p.item.trigger,
                    condition: p.condition,
                    prompt_digest: p.bundle.digest.clone(),
                    model_id: translation.model_id,
                    translation_text: translation.text,
                    correct: judgement.correct(),
                    judgement,
                    caption_used,
                    seed: donor.as_ref().map(|_| pairing.map(|pr| pr.seed).unwrap_or_default()),
                    donor_item_id: donor,
                    started_at,
                    finished_at,
                    latency_ms: translation.latency_ms,
                };
                apply_judgement(&mut trial, p.item, overrides);
                let line = serde_json::to_string(&trial).expect("trial serializes") + "\n";
                if let Err(e) = partial.lock().expect("partial log lock").write_all(line.as_bytes()) {
                    tracing::warn!(error = %e, "failed to append to partial trial log");
                }
                Outcome::Done(Box::new(trial), false)
            }
        })
        .buffer_unordered(config.max_inflight)
        .collect()
        .await;

    let mut trials = Vec::new();
    let mut reused = 0;
    for outcome in outcomes {
        match outcome {
            Outcome::Done(trial, was_reused) => {
                reused += usize::from(was_reused);
                trials.push(*trial);
            }
            Outcome::Failed(f) => failures.push(f),
        }
    }
    trials.sort_by(|a, b| (&a.item_id, a.condition).cmp(&(&b.item_id, b.condition)));
    failures.sort_by(|a, b| (&a.item_id, a.condition).cmp(&(&b.item_id, b.condition)));

    write_file(
        &config.output_dir.join(TRIALS_FILE),
        trials_to_jsonl(&trials).as_bytes(),
    )?;
    let errors = serde_json::to_string_pretty(&failures).expect("failures serialize") + "\n";
    write_file(&config.output_dir.join(ERRORS_FILE), errors.as_bytes())?;
    drop(partial);
    let _ = fs::remove_file(&partial_path);

    let manifest = RunManifest {
        run_id,
        config: RunConfig {
            conditions,
            ..config.clone()
        },
        corpus_digest,
        prompt_fixture_version: fixtures::VERSION.to_string(),
        model_ids: ModelIds {
            translation: decoding.model_id.clone(),
            caption: gateway.config().model_id.clone(),
        },
        provider_base_url: gateway.config().base_url.clone(),
        pairing_digest: pairing.as_ref().map(|p| sha256_hex(p.to_jsonl().as_bytes())),
        captions_digest: sha256_hex(captions.to_jsonl().as_bytes()),
        counts: RunCounts {
            planned: planned_count,
            completed: trials.len(),
            reused,
            failed: failures.len(),
        },
        started_at,
        finished_at: clock.now_rfc3339(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_file(&config.output_dir.join(MANIFEST_FILE), text.as_bytes())?;

    Ok(BatchOutcome {
        manifest,
        trials,
        failures,
    })
}
