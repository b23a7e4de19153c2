//! Inputs shared by the benchmarks.

use std::path::PathBuf;

use vgi_core::corpus::load_corpus;
use vgi_core::Corpus;

pub fn reference_corpus() -> Corpus {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/reference/corpus.jsonl");
    load_corpus(path).expect("reference corpus loads")
}
