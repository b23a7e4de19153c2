#![allow(dead_code)]

pub mod props;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use vgi_core::corpus::{load_corpus, Corpus, CorpusItem};
use vgi_core::gateway::{CallPurpose, ChatCall};
use vgi_core::{Clock, Condition, FixedClock, Gateway, MockProvider, MockScript, ProviderConfig};

pub fn fixture_corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/fixture/corpus.jsonl")
}

pub fn reference_corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/reference/corpus.jsonl")
}

/// Copies the named fixture items and their images into `dir`.
pub fn subset_corpus(ids: &[&str], dir: &Path) -> PathBuf {
    let corpus = load_corpus(fixture_corpus()).unwrap();
    let items: Vec<CorpusItem> = ids.iter().map(|id| corpus.get(id).unwrap().clone()).collect();
    fs::create_dir_all(dir.join("images")).unwrap();
    for item in &items {
        fs::copy(corpus.image_path(item), dir.join(&item.image_path)).unwrap();
    }
    let path = dir.join("corpus.jsonl");
    fs::write(&path, Corpus::from_items(items, &path).to_jsonl()).unwrap();
    path
}

pub fn clock() -> Arc<dyn Clock> {
    Arc::new(FixedClock::new(1_700_000_000_000))
}

pub fn gateway(script: MockScript, max_inflight: usize) -> (Arc<MockProvider>, Gateway) {
    let mock = Arc::new(MockProvider::new(script));
    let config = ProviderConfig {
        model_id: mock.model().to_string(),
        max_inflight,
        backoff_base_ms: 0,
        backoff_max_ms: 0,
        ..ProviderConfig::default()
    };
    let gw = Gateway::new(mock.clone(), config).with_clock(clock());
    (mock, gw)
}

/// Recovers the item and condition a translation prompt was built for. The
/// condition is read off the prompt: an image part means C3, the item's own
/// caption C2, some other item's caption C4, no caption C1.
pub fn identify(corpus: &Corpus, call: &ChatCall) -> Option<(CorpusItem, Condition)> {
    if call.purpose != CallPurpose::Translate {
        return None;
    }
    let text = call.body.text();
    let item = corpus
        .items
        .iter()
        .filter(|i| text.contains(&i.source_text))
        .max_by_key(|i| i.source_text.len())?
        .clone();
    let condition = if call.body.image_part_count() > 0 {
        Condition::Multimodal
    } else if item.caption_gold.as_ref().is_some_and(|c| text.contains(c.as_str())) {
        Condition::Caption
    } else if corpus
        .items
        .iter()
        .filter_map(|i| i.caption_gold.as_ref())
        .any(|c| text.contains(c.as_str()))
    {
        Condition::Adversarial
    } else {
        Condition::SpeechOnly
    };
    Some((item, condition))
}

/// Mock script that answers each translation with the gold reference of the
/// intended sense when `correct(item, condition)` holds and with a competing
/// sense's reference otherwise.
pub fn scripted_outcomes(
    corpus: Corpus,
    correct: impl Fn(&CorpusItem, Condition) -> bool + Send + Sync + 'static,
) -> MockScript {
    MockScript::default()
        .default_caption("an unremarkable scene")
        .responder(move |call| {
            let (item, condition) = identify(&corpus, call)?;
            let sense = if correct(&item, condition) {
                item.intended()?
            } else {
                item.competing().next()?
            };
            Some(sense.gold_reference.clone())
        })
}
