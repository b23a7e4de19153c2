//! Property checks shared by the property tests and the acceptance report.
//! Each returns a one-line summary on success and the failing case on error.

use std::collections::BTreeSet;

use image::{DynamicImage, RgbImage};
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use vgi_core::corpus::{generate_adversarial, parse_corpus, Corpus, CorpusItem, SenseSpec, TriggerCategory};
use vgi_core::evalstats::{exact_binomial_p, judge, mcnemar_exact, wilson_ci};
use vgi_core::prompting::{route_condition, CaptionRecord, CaptionStore, DecodingParams, ImageStore};
use vgi_core::vision::{encode_dynamic, frame_delta, EncodeSettings, SamplerSettings};
use vgi_core::{Condition, Frame, SamplerState};

pub type Check = Result<String, String>;

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Wilson mirror symmetry, bounds and shrinking width, exhaustively.
pub fn wilson_properties(max_n: u64) -> Check {
    let mut checked = 0;
    for n in 1..=max_n {
        for k in 0..=n {
            let (lo, hi) = wilson_ci(k, n).map_err(|e| e.to_string())?;
            let (mlo, mhi) = wilson_ci(n - k, n).map_err(|e| e.to_string())?;
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
                return Err(format!("wilson({k},{n}) = [{lo},{hi}] out of bounds"));
            }
            if !close(lo, 1.0 - mhi, 1e-12) || !close(hi, 1.0 - mlo, 1e-12) {
                return Err(format!("wilson({k},{n}) not the mirror of wilson({},{n})", n - k));
            }
            checked += 1;
        }
    }
    let mut prev = f64::INFINITY;
    for n in (2..=2 * max_n).step_by(2) {
        let (lo, hi) = wilson_ci(n / 2, n).map_err(|e| e.to_string())?;
        if hi - lo >= prev {
            return Err(format!("width does not shrink at n={n}"));
        }
        prev = hi - lo;
    }
    Ok(format!("{checked} (k, n) pairs, n <= {max_n}"))
}

/// Binomial symmetry and clamping, McNemar symmetry, exhaustively.
pub fn binomial_properties(max_n: u64) -> Check {
    for n in 1..=max_n {
        for k in 0..=n {
            let p = exact_binomial_p(k, n).map_err(|e| e.to_string())?;
            let q = exact_binomial_p(n - k, n).map_err(|e| e.to_string())?;
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("p({k},{n}) = {p} outside [0, 1]"));
            }
            if p != q {
                return Err(format!("p({k},{n}) = {p} but p({},{n}) = {q}", n - k));
            }
        }
        if n % 2 == 0 && exact_binomial_p(n / 2, n).unwrap() != 1.0 {
            return Err(format!("p({},{n}) is not clamped to 1", n / 2));
        }
    }
    for b in 0..=60 {
        for c in 0..=60 {
            if mcnemar_exact(b, c) != mcnemar_exact(c, b) {
                return Err(format!("mcnemar({b},{c}) asymmetric"));
            }
        }
    }
    Ok(format!("n <= {max_n}; McNemar b, c <= 60"))
}

fn sense(label: &str, marker: &str) -> SenseSpec {
    SenseSpec {
        label: label.into(),
        description: format!("{label} reading"),
        markers: vec![marker.into()],
        gold_reference: format!("a {marker} here"),
    }
}

fn item(id: String, trigger: TriggerCategory, text: String, caption: Option<String>) -> CorpusItem {
    CorpusItem {
        id,
        trigger,
        source_lang: "en".into(),
        target_lang: "it".into(),
        source_text: text,
        senses: vec![sense("a", "alfa"), sense("b", "beta")],
        intended_sense: "a".into(),
        image_path: "img.png".into(),
        caption_gold: caption,
        notes: None,
        relaxed_length: false,
    }
}

fn trigger_strategy() -> impl Strategy<Value = TriggerCategory> {
    prop_oneof![
        Just(TriggerCategory::Lexical),
        Just(TriggerCategory::Gender),
        Just(TriggerCategory::Syntactic)
    ]
}

/// Random corpora of 2 to 200 items; some skewed so one trigger dominates.
fn corpus_strategy() -> impl Strategy<Value = Vec<TriggerCategory>> {
    prop_oneof![
        prop::collection::vec(trigger_strategy(), 2..=200),
        (2usize..=200, 0.5f64..1.0).prop_map(|(n, share)| {
            let major = (n as f64 * share).ceil() as usize;
            (0..n)
                .map(|i| {
                    if i < major {
                        TriggerCategory::Gender
                    } else {
                        TriggerCategory::Lexical
                    }
                })
                .collect()
        }),
    ]
}

fn corpus_of(triggers: &[TriggerCategory]) -> Corpus {
    let items = triggers
        .iter()
        .enumerate()
        .map(|(i, &t)| item(format!("it-{i:03}"), t, "one two three four five".into(), None))
        .collect();
    Corpus::from_items(items, "corpus.jsonl")
}

/// Derangement, permutation, cross-trigger preference and determinism of the
/// adversarial pairing.
pub fn derangement_properties(cases: u32) -> Check {
    let cross = std::cell::Cell::new(0u32);
    runner(cases)
        .run(&(corpus_strategy(), any::<u64>()), |(triggers, seed)| {
            let corpus = corpus_of(&triggers);
            let p = generate_adversarial(&corpus, seed).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert!(p.check(&corpus).is_empty(), "{:?}", p.check(&corpus));
            let donors: BTreeSet<&String> = p.entries.values().collect();
            prop_assert_eq!(donors.len(), corpus.len(), "donors are not a permutation");
            for (id, donor) in &p.entries {
                prop_assert_ne!(id, donor);
            }
            let n = triggers.len();
            let largest = [
                TriggerCategory::Lexical,
                TriggerCategory::Gender,
                TriggerCategory::Syntactic,
            ]
            .iter()
            .map(|t| triggers.iter().filter(|x| *x == t).count())
            .max()
            .unwrap();
            if 2 * largest <= n {
                prop_assert_eq!(p.cross_trigger_count(&corpus), n);
                cross.set(cross.get() + 1);
            }
            let again = generate_adversarial(&corpus, seed).unwrap();
            prop_assert_eq!(again.to_jsonl(), p.to_jsonl());
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!(
        "{cases} random corpora of 2-200 items ({} with all donors cross-trigger)",
        cross.get()
    ))
}

fn uniform(value: f32, ts: u64) -> Frame {
    Frame::filled(8, 8, value, ts).unwrap()
}

fn frames_strategy() -> impl Strategy<Value = Vec<(f32, u64)>> {
    prop::collection::vec((0.0f32..=1.0, 0u64..1500), 1..40)
}

fn timeline(steps: &[(f32, u64)]) -> Vec<Frame> {
    let mut ts = 0;
    steps
        .iter()
        .map(|&(v, dt)| {
            ts += dt;
            uniform(v, ts)
        })
        .collect()
}

fn sampled(settings: SamplerSettings, frames: &[Frame]) -> Vec<u64> {
    let mut s = SamplerState::new(settings).unwrap();
    frames
        .iter()
        .filter_map(|f| s.should_sample(f.clone()).unwrap().map(|x| x.frame.timestamp_ms))
        .collect()
}

/// One sampling decision from a shared state: a frame taken at the higher
/// threshold is also taken at the lower one.
pub fn sampler_step_monotonicity(cases: u32) -> Check {
    let strategy = (
        prop::collection::vec(0.0f32..=1.0, 16),
        prop::collection::vec(0.0f32..=1.0, 16),
        0.001f64..=1.0,
        0.001f64..=1.0,
        0u64..3000,
        0u64..3000,
    );
    runner(cases)
        .run(&strategy, |(a, b, t1, t2, interval, dt)| {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let last = Frame::new(4, 4, a, 0).unwrap();
            let next = Frame::new(4, 4, b, dt).unwrap();
            let mut s_lo = SamplerState::new(SamplerSettings {
                threshold: lo,
                min_interval_ms: interval,
            })
            .unwrap();
            let mut s_hi = SamplerState::new(SamplerSettings {
                threshold: hi,
                min_interval_ms: interval,
            })
            .unwrap();
            s_lo.force_sample(last.clone()).unwrap();
            s_hi.force_sample(last).unwrap();
            let took_hi = s_hi.should_sample(next.clone()).unwrap().is_some();
            let took_lo = s_lo.should_sample(next).unwrap().is_some();
            prop_assert!(!took_hi || took_lo, "taken at {hi} but not at {lo}");
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("{cases} random (state, frame, tau1 <= tau2) cases"))
}

/// Consecutive samples are at least `min_interval_ms` apart.
pub fn sampler_debounce(cases: u32) -> Check {
    runner(cases)
        .run(
            &(frames_strategy(), 0.01f64..=1.0, 0u64..4000),
            |(steps, tau, interval)| {
                let frames = timeline(&steps);
                let times = sampled(
                    SamplerSettings {
                        threshold: tau,
                        min_interval_ms: interval,
                    },
                    &frames,
                );
                for w in times.windows(2) {
                    prop_assert!(
                        w[1] - w[0] >= interval,
                        "samples at {} and {} closer than {interval}",
                        w[0],
                        w[1]
                    );
                }
                Ok(())
            },
        )
        .map_err(|e| e.to_string())?;
    Ok(format!("{cases} random frame sequences"))
}

/// The whole-sequence form: samples(tau2) subset of samples(tau1) whenever
/// tau1 <= tau2. Returns the number of random sequences that violate it
/// together with a fixed counterexample.
pub fn sampler_sequence_monotonicity(cases: usize) -> (usize, String) {
    let fixed = [uniform(0.0, 0), uniform(0.3, 1000), uniform(0.35, 2000)];
    let low = sampled(
        SamplerSettings {
            threshold: 0.2,
            min_interval_ms: 0,
        },
        &fixed,
    );
    let high = sampled(
        SamplerSettings {
            threshold: 0.32,
            min_interval_ms: 0,
        },
        &fixed,
    );
    let witness = format!("frames 0.0/0.3/0.35: tau 0.2 samples {low:?} ms, tau 0.32 samples {high:?} ms");

    let mut violations = 0;
    let mut r = runner(1);
    let strategy = (frames_strategy(), 0.01f64..=1.0, 0.01f64..=1.0, 0u64..2000);
    for _ in 0..cases {
        let (steps, a, b, interval) = strategy.new_tree(&mut r).unwrap().current();
        let (t1, t2) = if a <= b { (a, b) } else { (b, a) };
        let frames = timeline(&steps);
        let s1: BTreeSet<u64> = sampled(
            SamplerSettings {
                threshold: t1,
                min_interval_ms: interval,
            },
            &frames,
        )
        .into_iter()
        .collect();
        let s2 = sampled(
            SamplerSettings {
                threshold: t2,
                min_interval_ms: interval,
            },
            &frames,
        );
        if s2.iter().any(|t| !s1.contains(t)) {
            violations += 1;
        }
    }
    (violations, witness)
}

fn random_image(w: u32, h: u32, bytes: &[u8]) -> DynamicImage {
    let mut img = RgbImage::new(w, h);
    for (i, p) in img.pixels_mut().enumerate() {
        let v = bytes[i % bytes.len()];
        *p = image::Rgb([v, v.wrapping_mul(3), v.wrapping_add(91)]);
    }
    DynamicImage::ImageRgb8(img)
}

/// C1 prompts do not change when captions, images or the pairing change.
pub fn c1_invariance(cases: u32) -> Check {
    let base_item = item(
        "x-1".into(),
        TriggerCategory::Lexical,
        "The bat is under the table.".into(),
        None,
    );
    let other = item(
        "x-2".into(),
        TriggerCategory::Gender,
        "The doctor is waiting outside.".into(),
        None,
    );
    let corpus = Corpus::from_items(vec![base_item.clone(), other], "c.jsonl");
    let decoding = DecodingParams::greedy("m");
    let reference = route_condition(
        &base_item,
        Condition::SpeechOnly,
        None,
        &CaptionStore::new(),
        &ImageStore::new(),
        &decoding,
    )
    .map_err(|e| e.to_string())?;
    let strategy = (
        ".{0,80}",
        prop::collection::vec(any::<u8>(), 1..64),
        1u32..24,
        1u32..24,
        any::<u64>(),
    );
    runner(cases)
        .run(&strategy, |(caption, bytes, w, h, seed)| {
            let mut captions = CaptionStore::new();
            for id in ["x-1", "x-2"] {
                captions.insert(CaptionRecord {
                    item_id: id.into(),
                    caption: caption.clone(),
                    model_id: "m".into(),
                    created_at: String::new(),
                });
            }
            let mut images = ImageStore::new();
            let encoded = encode_dynamic(&random_image(w, h, &bytes), EncodeSettings::default()).unwrap();
            images.insert("x-1".into(), encoded);
            let pairing = generate_adversarial(&corpus, seed).unwrap();
            let bundle = route_condition(
                &base_item,
                Condition::SpeechOnly,
                Some(&pairing),
                &captions,
                &images,
                &decoding,
            )
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(&bundle, &reference);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("{cases} random caption/image/seed mutations"))
}

/// frame_delta is symmetric and zero on identical frames.
pub fn frame_delta_symmetry(cases: u32) -> Check {
    let strategy = (
        prop::collection::vec(0.0f32..=1.0, 36),
        prop::collection::vec(0.0f32..=1.0, 36),
    );
    runner(cases)
        .run(&strategy, |(a, b)| {
            let fa = Frame::new(6, 6, a, 0).unwrap();
            let fb = Frame::new(6, 6, b, 0).unwrap();
            prop_assert_eq!(frame_delta(&fa, &fb).unwrap(), frame_delta(&fb, &fa).unwrap());
            prop_assert_eq!(frame_delta(&fa, &fa).unwrap(), 0.0);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("{cases} random frame pairs"))
}

/// The judge's verdict does not depend on marker order.
pub fn judge_order_independence(cases: u32) -> Check {
    let words = prop::sample::subsequence(
        vec!["cerotto", "gesso", "ingessatura", "intonaco", "banca", "riva"],
        0..6,
    );
    let strategy = (words, any::<u64>());
    runner(cases)
        .run(&strategy, |(present, seed)| {
            let text = format!("Il dottore {} oggi.", present.join(" e "));
            let mut it = item(
                "j".into(),
                TriggerCategory::Lexical,
                "The doctor gave him a plaster.".into(),
                None,
            );
            it.senses = vec![
                SenseSpec {
                    markers: vec!["cerotto".into(), "banca".into()],
                    ..sense("a", "x")
                },
                SenseSpec {
                    markers: vec!["gesso".into(), "ingessatura".into(), "intonaco".into()],
                    ..sense("b", "y")
                },
            ];
            let reference = judge(&text, &it);
            let mut shuffled = it.clone();
            for s in &mut shuffled.senses {
                let k = (seed as usize) % s.markers.len();
                s.markers.rotate_left(k);
                if seed % 2 == 1 {
                    s.markers.reverse();
                }
            }
            prop_assert_eq!(judge(&text, &shuffled).verdict, reference.verdict);
            prop_assert_eq!(judge(&text, &it), reference);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("{cases} marker permutations"))
}

/// Serializing and re-loading a valid corpus gives the same items.
pub fn corpus_round_trip(cases: u32) -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    std::fs::write(dir.path().join("img.png"), b"\x89PNG placeholder").map_err(|e| e.to_string())?;
    let manifest = dir.path().join("corpus.jsonl");
    let word = "[a-zA-Zàèéìòù',.?]{1,10}";
    let strategy = prop::collection::vec(
        (
            trigger_strategy(),
            prop::collection::vec(word, 5..=13),
            prop::option::of(".{1,60}"),
        ),
        1..30,
    );
    runner(cases)
        .run(&strategy, |rows| {
            let items: Vec<CorpusItem> = rows
                .into_iter()
                .enumerate()
                .map(|(i, (t, words, caption))| item(format!("r{i}"), t, words.join(" "), caption))
                .collect();
            let corpus = Corpus::from_items(items, &manifest);
            let parsed = parse_corpus(&corpus.to_jsonl(), &manifest).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(&parsed.items, &corpus.items);
            prop_assert_eq!(parsed.to_jsonl(), corpus.to_jsonl());
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("{cases} random corpora"))
}
