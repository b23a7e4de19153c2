//! Diagnostic ambiguity corpus: items, validation, length statistics and
//! adversarial image reassignment.
//!
//! A corpus manifest is a JSON Lines file with one [`CorpusItem`] per line.
//! Image paths inside the manifest are resolved relative to the directory
//! that holds the manifest.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Token range observed for the utterances of the diagnostic corpus.
pub const MIN_TOKENS: usize = 5;
pub const MAX_TOKENS: usize = 13;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("empty corpus")]
    Empty,
    #[error("corpus failed validation with {} problem(s):\n{}", .0.len(), render_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("corpus of {0} item(s) admits no derangement")]
    TooSmall(usize),
    #[error("pairing file line {line}: {message}")]
    Pairing { line: usize, message: String },
}

fn render_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("  - {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// One problem found while loading or validating a manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// 1-based manifest line, when known.
    pub line: Option<usize>,
    pub item_id: Option<String>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(id) = &self.item_id {
            write!(f, "item {id}: ")?;
        }
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TriggerCategory {
    Lexical,
    Gender,
    Syntactic,
}

impl TriggerCategory {
    pub const ALL: [TriggerCategory; 3] = [Self::Lexical, Self::Gender, Self::Syntactic];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Lexical => "lexical",
            Self::Gender => "gender",
            Self::Syntactic => "syntactic",
        }
    }

    /// Human-readable heading used in reports.
    pub fn title(self) -> &'static str {
        match self {
            Self::Lexical => "Lexical ambiguity",
            Self::Gender => "Gender agreement",
            Self::Syntactic => "Syntactic ambiguity",
        }
    }
}

impl fmt::Display for TriggerCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TriggerCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lexical" => Ok(Self::Lexical),
            "gender" => Ok(Self::Gender),
            "syntactic" => Ok(Self::Syntactic),
            other => Err(format!("unknown trigger category {other:?}")),
        }
    }
}

/// One admissible reading of an ambiguous utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SenseSpec {
    pub label: String,
    pub description: String,
    /// Target-language word forms whose presence signals this sense.
    pub markers: Vec<String>,
    pub gold_reference: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusItem {
    pub id: String,
    pub trigger: TriggerCategory,
    pub source_lang: String,
    pub target_lang: String,
    pub source_text: String,
    pub senses: Vec<SenseSpec>,
    /// Label of the sense the paired image supports.
    pub intended_sense: String,
    pub image_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption_gold: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub relaxed_length: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl CorpusItem {
    pub fn intended(&self) -> Option<&SenseSpec> {
        self.senses.iter().find(|s| s.label == self.intended_sense)
    }

    /// Senses other than the intended one.
    pub fn competing(&self) -> impl Iterator<Item = &SenseSpec> {
        self.senses.iter().filter(move |s| s.label != self.intended_sense)
    }

    pub fn token_count(&self) -> usize {
        token_count(&self.source_text)
    }
}

/// Number of maximal whitespace-delimited segments. Punctuation stays
/// attached to the neighbouring word.
pub fn token_count(utterance: &str) -> usize {
    utterance.split_whitespace().count()
}

/// Checks every item-level invariant and returns the list of violations
/// (empty when the item is valid). `base_dir` is the directory image paths
/// are resolved against.
pub fn validate_item(item: &CorpusItem, base_dir: &Path) -> Vec<String> {
    let mut problems = Vec::new();

    if item.id.trim().is_empty() {
        problems.push("id is empty".to_string());
    }
    if item.source_text.trim().is_empty() {
        problems.push("source_text is empty".to_string());
    }
    for (field, tag) in [("source_lang", &item.source_lang), ("target_lang", &item.target_lang)] {
        if !is_plausible_bcp47(tag) {
            problems.push(format!("{field} {tag:?} is not a BCP-47 tag"));
        }
    }

    if item.senses.len() < 2 {
        problems.push(format!("needs at least 2 senses, found {}", item.senses.len()));
    }

    let mut labels = HashSet::new();
    let mut marker_owner: BTreeMap<String, &str> = BTreeMap::new();
    for sense in &item.senses {
        if sense.label.trim().is_empty() {
            problems.push("sense with empty label".to_string());
        }
        if !labels.insert(sense.label.as_str()) {
            problems.push(format!("duplicate sense label {:?}", sense.label));
        }
        if sense.markers.is_empty() {
            problems.push(format!("sense {:?} has no markers", sense.label));
        }
        if sense.gold_reference.trim().is_empty() {
            problems.push(format!("sense {:?} has an empty gold_reference", sense.label));
        }
        let mut own = HashSet::new();
        for marker in &sense.markers {
            let key = marker.trim().to_lowercase();
            if key.is_empty() {
                problems.push(format!("sense {:?} has a blank marker", sense.label));
                continue;
            }
            if !own.insert(key.clone()) {
                continue;
            }
            if let Some(other) = marker_owner.insert(key.clone(), sense.label.as_str()) {
                if other != sense.label {
                    problems.push(format!(
                        "marker {key:?} belongs to both senses {other:?} and {:?}",
                        sense.label
                    ));
                }
            }
        }
    }

    let matching = item.senses.iter().filter(|s| s.label == item.intended_sense).count();
    if matching != 1 {
        problems.push(format!(
            "intended_sense {:?} must name exactly one sense (matches {matching})",
            item.intended_sense
        ));
    }

    let tokens = item.token_count();
    if !item.relaxed_length && !(MIN_TOKENS..=MAX_TOKENS).contains(&tokens) {
        problems.push(format!(
            "source_text has {tokens} tokens, outside [{MIN_TOKENS}, {MAX_TOKENS}] (set relaxed_length to allow)"
        ));
    }

    if item.image_path.trim().is_empty() {
        problems.push("image_path is empty".to_string());
    } else {
        let path = base_dir.join(&item.image_path);
        match fs::metadata(&path) {
            Ok(meta) if meta.is_file() && meta.len() > 0 => {}
            Ok(_) => problems.push(format!("image {} is empty or not a file", path.display())),
            Err(_) => problems.push(format!("image {} is missing", path.display())),
        }
    }

    problems
}

fn is_plausible_bcp47(tag: &str) -> bool {
    let mut parts = tag.split('-');
    let primary = parts.next().unwrap_or("");
    (2..=8).contains(&primary.len())
        && primary.chars().all(|c| c.is_ascii_alphabetic())
        && parts.all(|p| (1..=8).contains(&p.len()) && p.chars().all(|c| c.is_ascii_alphanumeric()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub items: Vec<CorpusItem>,
    pub manifest_path: PathBuf,
}

impl Corpus {
    /// Builds a corpus from in-memory items without touching the filesystem.
    pub fn from_items(items: Vec<CorpusItem>, manifest_path: impl Into<PathBuf>) -> Self {
        Self {
            items,
            manifest_path: manifest_path.into(),
        }
    }

    pub fn base_dir(&self) -> PathBuf {
        self.manifest_path.parent().map(Path::to_path_buf).unwrap_or_default()
    }

    pub fn image_path(&self, item: &CorpusItem) -> PathBuf {
        self.base_dir().join(&item.image_path)
    }

    pub fn get(&self, id: &str) -> Option<&CorpusItem> {
        self.items.iter().find(|i| i.id == id)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn count_by_trigger(&self) -> BTreeMap<TriggerCategory, usize> {
        let mut counts = BTreeMap::new();
        for item in &self.items {
            *counts.entry(item.trigger).or_insert(0) += 1;
        }
        counts
    }

    /// JSON Lines serialization, one item per line, in corpus order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            out.push_str(&serde_json::to_string(item).expect("corpus items serialize"));
            out.push('\n');
        }
        out
    }

    /// SHA-256 over the canonical JSONL serialization.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }
}

/// Reads, parses and validates a manifest. All problems are collected before
/// returning, so a broken file reports every bad line at once.
pub fn load_corpus(manifest_path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = manifest_path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_corpus(&text, path)
}

/// Parses manifest text as if it had been read from `manifest_path`.
pub fn parse_corpus(text: &str, manifest_path: &Path) -> Result<Corpus, CorpusError> {
    let base_dir = manifest_path.parent().unwrap_or(Path::new(""));
    let mut items = Vec::new();
    let mut violations = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let item: CorpusItem = match serde_json::from_str(raw) {
            Ok(item) => item,
            Err(e) => {
                violations.push(Violation {
                    line: Some(line),
                    item_id: None,
                    message: format!("parse error: {e}"),
                });
                continue;
            }
        };
        if let Some(first) = seen.insert(item.id.clone(), line) {
            violations.push(Violation {
                line: Some(line),
                item_id: Some(item.id.clone()),
                message: format!("duplicate id (first defined on line {first})"),
            });
        }
        for message in validate_item(&item, base_dir) {
            violations.push(Violation {
                line: Some(line),
                item_id: Some(item.id.clone()),
                message,
            });
        }
        items.push(item);
    }

    if items.is_empty() && violations.is_empty() {
        return Err(CorpusError::Empty);
    }
    if !violations.is_empty() {
        return Err(CorpusError::Invalid(violations));
    }
    Ok(Corpus {
        items,
        manifest_path: manifest_path.to_path_buf(),
    })
}

/// Token-length summary for one group of utterances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (divisor n-1). Zero when `degenerate`.
    pub sd: f64,
    /// Set when fewer than two values make the sample SD undefined.
    #[serde(default, skip_serializing_if = "is_false")]
    pub degenerate: bool,
}

impl LengthStats {
    pub fn from_lengths(lengths: &[usize]) -> Option<Self> {
        if lengths.is_empty() {
            return None;
        }
        let n = lengths.len() as f64;
        let mean = lengths.iter().map(|&x| x as f64).sum::<f64>() / n;
        if lengths.len() < 2 {
            return Some(Self {
                count: lengths.len(),
                mean,
                sd: 0.0,
                degenerate: true,
            });
        }
        let ss: f64 = lengths.iter().map(|&x| (x as f64 - mean).powi(2)).sum();
        Some(Self {
            count: lengths.len(),
            mean,
            sd: (ss / (n - 1.0)).sqrt(),
            degenerate: false,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub per_trigger: BTreeMap<TriggerCategory, LengthStats>,
    pub overall: LengthStats,
    pub min_tokens: usize,
    pub max_tokens: usize,
}

pub fn corpus_stats(corpus: &Corpus) -> Result<CorpusStats, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut groups: BTreeMap<TriggerCategory, Vec<usize>> = BTreeMap::new();
    let mut all = Vec::with_capacity(corpus.len());
    for item in &corpus.items {
        let n = item.token_count();
        groups.entry(item.trigger).or_default().push(n);
        all.push(n);
    }
    let per_trigger = groups
        .into_iter()
        .filter_map(|(t, lens)| LengthStats::from_lengths(&lens).map(|s| (t, s)))
        .collect();
    Ok(CorpusStats {
        per_trigger,
        overall: LengthStats::from_lengths(&all).expect("non-empty"),
        min_tokens: *all.iter().min().expect("non-empty"),
        max_tokens: *all.iter().max().expect("non-empty"),
    })
}

/// Image-source reassignment for the adversarial condition: each item borrows
/// the image (and hence the caption) of a donor item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversarialPairing {
    pub seed: u64,
    /// item id -> donor item id
    pub entries: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairingLine {
    item_id: String,
    donor_item_id: String,
    seed: u64,
}

impl AdversarialPairing {
    pub fn donor(&self, item_id: &str) -> Option<&str> {
        self.entries.get(item_id).map(String::as_str)
    }

    /// Number of entries whose donor has a different trigger category.
    pub fn cross_trigger_count(&self, corpus: &Corpus) -> usize {
        self.entries
            .iter()
            .filter(|(item, donor)| {
                let a = corpus.get(item).map(|i| i.trigger);
                let b = corpus.get(donor).map(|i| i.trigger);
                a.is_some() && b.is_some() && a != b
            })
            .count()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (item_id, donor) in &self.entries {
            let line = PairingLine {
                item_id: item_id.clone(),
                donor_item_id: donor.clone(),
                seed: self.seed,
            };
            out.push_str(&serde_json::to_string(&line).expect("pairing serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, CorpusError> {
        let mut entries = BTreeMap::new();
        let mut seed = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let parsed: PairingLine = serde_json::from_str(raw).map_err(|e| CorpusError::Pairing {
                line,
                message: e.to_string(),
            })?;
            match seed {
                None => seed = Some(parsed.seed),
                Some(s) if s != parsed.seed => {
                    return Err(CorpusError::Pairing {
                        line,
                        message: format!("seed {} differs from earlier seed {s}", parsed.seed),
                    })
                }
                _ => {}
            }
            if entries.insert(parsed.item_id.clone(), parsed.donor_item_id).is_some() {
                return Err(CorpusError::Pairing {
                    line,
                    message: format!("duplicate item_id {:?}", parsed.item_id),
                });
            }
        }
        Ok(Self {
            seed: seed.ok_or(CorpusError::Empty)?,
            entries,
        })
    }

    /// Checks totality, existence of donors and absence of fixed points
    /// against `corpus`.
    pub fn check(&self, corpus: &Corpus) -> Vec<String> {
        let ids: BTreeSet<&str> = corpus.items.iter().map(|i| i.id.as_str()).collect();
        let mut problems = Vec::new();
        for id in &ids {
            match self.entries.get(*id) {
                None => problems.push(format!("item {id} has no donor")),
                Some(d) if d == id => problems.push(format!("item {id} is its own donor")),
                Some(d) if !ids.contains(d.as_str()) => problems.push(format!("item {id} has unknown donor {d}")),
                _ => {}
            }
        }
        for id in self.entries.keys() {
            if !ids.contains(id.as_str()) {
                problems.push(format!("pairing names unknown item {id}"));
            }
        }
        problems
    }
}

/// Seeded derangement over item ids.
///
/// When no trigger class holds more than half of the items, every donor is
/// drawn from a different trigger class; otherwise the only constraint is
/// that no item keeps its own image. The result depends only on the set of
/// (id, trigger) pairs and the seed.
pub fn generate_adversarial(corpus: &Corpus, seed: u64) -> Result<AdversarialPairing, CorpusError> {
    let mut nodes: Vec<(&str, TriggerCategory)> = corpus.items.iter().map(|i| (i.id.as_str(), i.trigger)).collect();
    nodes.sort_unstable();
    nodes.dedup_by(|a, b| a.0 == b.0);
    let n = nodes.len();
    if n < 2 {
        return Err(CorpusError::TooSmall(n));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trigger_of = |i: usize| nodes[i].1;

    let mut groups: BTreeMap<TriggerCategory, Vec<usize>> = BTreeMap::new();
    for (i, (_, t)) in nodes.iter().enumerate() {
        groups.entry(*t).or_default().push(i);
    }
    let largest = groups.values().map(Vec::len).max().unwrap_or(0);
    let cross_trigger = 2 * largest <= n;

    // donor[i] = index of the item whose image i receives
    let mut donor = vec![0usize; n];
    if cross_trigger {
        // Lay the groups out contiguously, largest first, and shift by the
        // largest group size: position p and p + largest never share a group.
        let mut ordered: Vec<Vec<usize>> = groups.into_values().collect();
        for g in &mut ordered {
            g.shuffle(&mut rng);
        }
        ordered.sort_by_key(|g| std::cmp::Reverse(g.len()));
        let layout: Vec<usize> = ordered.into_iter().flatten().collect();
        for p in 0..n {
            donor[layout[p]] = layout[(p + largest) % n];
        }
    } else {
        let mut layout: Vec<usize> = (0..n).collect();
        layout.shuffle(&mut rng);
        for p in 0..n {
            donor[layout[p]] = layout[(p + 1) % n];
        }
    }

    // Random donor swaps that keep every constraint satisfied.
    let admissible = |item: usize, d: usize| item != d && (!cross_trigger || trigger_of(item) != trigger_of(d));
    for _ in 0..(8 * n) {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a == b {
            continue;
        }
        if admissible(a, donor[b]) && admissible(b, donor[a]) {
            donor.swap(a, b);
        }
    }

    let entries = (0..n)
        .map(|i| (nodes[i].0.to_string(), nodes[donor[i]].0.to_string()))
        .collect();
    Ok(AdversarialPairing { seed, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn item(id: &str, trigger: TriggerCategory, text: &str) -> CorpusItem {
        CorpusItem {
            id: id.to_string(),
            trigger,
            source_lang: "it".into(),
            target_lang: "en".into(),
            source_text: text.to_string(),
            senses: vec![
                SenseSpec {
                    label: "key".into(),
                    description: "a key for a lock".into(),
                    markers: vec!["key".into()],
                    gold_reference: "Give me the key".into(),
                },
                SenseSpec {
                    label: "wrench".into(),
                    description: "a spanner".into(),
                    markers: vec!["wrench".into(), "spanner".into()],
                    gold_reference: "Give me the wrench".into(),
                },
            ],
            intended_sense: "wrench".into(),
            image_path: "img.png".into(),
            caption_gold: None,
            notes: None,
            relaxed_length: false,
        }
    }

    fn dir_with_image() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("img.png"), b"\x89PNG fake").unwrap();
        dir
    }

    #[test]
    fn token_count_examples() {
        assert_eq!(token_count("Passami la chiave"), 3);
        assert_eq!(token_count("Paul bought green shirts and shoes."), 6);
        assert_eq!(token_count(""), 0);
        assert_eq!(token_count("  spaced \t out\n"), 2);
    }

    #[test]
    fn figure_item_is_valid() {
        let dir = dir_with_image();
        let mut it = item("lex-001", TriggerCategory::Lexical, "Passami la chiave");
        it.relaxed_length = true;
        assert_eq!(validate_item(&it, dir.path()), Vec::<String>::new());
    }

    #[test]
    fn shared_marker_is_one_violation() {
        let dir = dir_with_image();
        let mut it = item("x", TriggerCategory::Lexical, "one two three four five");
        it.senses[1].markers.push("Key".into());
        let problems = validate_item(&it, dir.path());
        assert_eq!(problems.len(), 1, "{problems:?}");
        assert!(problems[0].contains("belongs to both"));
    }

    #[test]
    fn long_utterance_needs_relaxed_flag() {
        let dir = dir_with_image();
        let text = vec!["word"; 20].join(" ");
        let mut it = item("x", TriggerCategory::Syntactic, &text);
        let problems = validate_item(&it, dir.path());
        assert_eq!(problems.len(), 1);
        assert!(problems[0].contains("20 tokens"));
        it.relaxed_length = true;
        assert!(validate_item(&it, dir.path()).is_empty());
    }

    #[test]
    fn missing_image_reported() {
        let dir = tempfile::tempdir().unwrap();
        let it = item("x", TriggerCategory::Lexical, "one two three four five");
        let problems = validate_item(&it, dir.path());
        assert!(problems.iter().any(|p| p.contains("missing")), "{problems:?}");
    }

    #[test]
    fn empty_manifest_is_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        fs::write(&path, "").unwrap();
        let err = load_corpus(&path).unwrap_err();
        assert_eq!(err.to_string(), "empty corpus");
    }

    #[test]
    fn one_item_round_trips() {
        let dir = dir_with_image();
        let path = dir.path().join("c.jsonl");
        let it = item("lex-1", TriggerCategory::Lexical, "Passami la chiave inglese adesso");
        fs::write(&path, serde_json::to_string(&it).unwrap() + "\n").unwrap();
        let corpus = load_corpus(&path).unwrap();
        assert_eq!(corpus.items, vec![it]);
        assert_eq!(fs::read_to_string(&path).unwrap(), corpus.to_jsonl());
    }

    #[test]
    fn bad_intended_sense_names_item() {
        let dir = dir_with_image();
        let path = dir.path().join("c.jsonl");
        let mut it = item("lex-9", TriggerCategory::Lexical, "Passami la chiave inglese adesso");
        it.intended_sense = "hammer".into();
        fs::write(&path, serde_json::to_string(&it).unwrap()).unwrap();
        let err = load_corpus(&path).unwrap_err();
        let CorpusError::Invalid(v) = &err else {
            panic!("unexpected {err}")
        };
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].item_id.as_deref(), Some("lex-9"));
        assert!(err.to_string().contains("lex-9"));
    }

    #[test]
    fn all_failures_are_collected() {
        let dir = dir_with_image();
        let path = dir.path().join("c.jsonl");
        let good = item("a", TriggerCategory::Lexical, "one two three four five");
        let text = format!(
            "{}\nnot json\n{}\n",
            serde_json::to_string(&good).unwrap(),
            serde_json::to_string(&good).unwrap()
        );
        fs::write(&path, text).unwrap();
        let CorpusError::Invalid(v) = load_corpus(&path).unwrap_err() else {
            panic!()
        };
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].line, Some(2));
        assert!(v[1].message.contains("duplicate id"));
    }

    #[test]
    fn stats_of_5_8_11() {
        let s = LengthStats::from_lengths(&[5, 8, 11]).unwrap();
        assert_eq!(s.mean, 8.0);
        assert!((s.sd - 3.0).abs() < 1e-12);
        assert!(!s.degenerate);
    }

    #[test]
    fn single_item_stats_are_degenerate() {
        let c = Corpus::from_items(
            vec![item("a", TriggerCategory::Gender, "one two three four five")],
            "c.jsonl",
        );
        let s = corpus_stats(&c).unwrap();
        assert!(s.overall.degenerate);
        assert_eq!(s.overall.sd, 0.0);
        assert_eq!(s.min_tokens, 5);
    }

    #[test]
    fn empty_corpus_stats_error() {
        let c = Corpus::from_items(vec![], "c.jsonl");
        assert!(matches!(corpus_stats(&c), Err(CorpusError::Empty)));
    }

    #[test]
    fn pairing_of_two_swaps() {
        let c = Corpus::from_items(
            vec![
                item("a", TriggerCategory::Lexical, "x"),
                item("b", TriggerCategory::Lexical, "y"),
            ],
            "c.jsonl",
        );
        for seed in 0..20 {
            let p = generate_adversarial(&c, seed).unwrap();
            assert_eq!(p.donor("a"), Some("b"));
            assert_eq!(p.donor("b"), Some("a"));
        }
    }

    #[test]
    fn pairing_needs_two_items() {
        let c = Corpus::from_items(vec![item("a", TriggerCategory::Lexical, "x")], "c.jsonl");
        assert!(matches!(generate_adversarial(&c, 1), Err(CorpusError::TooSmall(1))));
    }

    #[test]
    fn three_items_seed_zero_is_frozen() {
        // The two derangements of {a, b, c} are the 3-cycles
        // a->b->c->a and a->c->b->a.
        let c = Corpus::from_items(
            vec![
                item("a", TriggerCategory::Lexical, "x"),
                item("b", TriggerCategory::Lexical, "y"),
                item("c", TriggerCategory::Lexical, "z"),
            ],
            "c.jsonl",
        );
        let cycle_abc: BTreeMap<String, String> = [("a", "b"), ("b", "c"), ("c", "a")]
            .map(|(x, y)| (x.into(), y.into()))
            .into();
        let cycle_acb: BTreeMap<String, String> = [("a", "c"), ("c", "b"), ("b", "a")]
            .map(|(x, y)| (x.into(), y.into()))
            .into();
        let p = generate_adversarial(&c, 0).unwrap();
        assert!(p.entries == cycle_abc || p.entries == cycle_acb);
        assert_eq!(p.entries, cycle_abc);
        assert_eq!(generate_adversarial(&c, 0).unwrap(), p);
    }

    #[test]
    fn balanced_corpus_gets_cross_trigger_donors() {
        let mut items = Vec::new();
        for t in TriggerCategory::ALL {
            for k in 0..40 {
                items.push(item(&format!("{t}-{k:03}"), t, "one two three four five"));
            }
        }
        let c = Corpus::from_items(items, "c.jsonl");
        let p = generate_adversarial(&c, 42).unwrap();
        assert!(p.check(&c).is_empty());
        assert_eq!(p.cross_trigger_count(&c), 120);
    }

    #[test]
    fn pairing_file_round_trip() {
        let c = Corpus::from_items(
            (0..7)
                .map(|k| item(&format!("i{k}"), TriggerCategory::ALL[k % 3], "x"))
                .collect(),
            "c.jsonl",
        );
        let p = generate_adversarial(&c, 7).unwrap();
        let text = p.to_jsonl();
        assert_eq!(AdversarialPairing::from_jsonl(&text).unwrap(), p);
        assert!(text.lines().all(|l| l.contains("\"seed\":7")));
    }
}
