//! Marker-based scoring of a translation against the senses of an item.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusItem;
use crate::prompting::Condition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    Incorrect,
    Unjudged,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Correct => "correct",
            Self::Incorrect => "incorrect",
            Self::Unjudged => "unjudged",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgement {
    pub verdict: Verdict,
    /// Markers found in the translation, sorted.
    pub matched_markers: Vec<String>,
    pub rationale: String,
}

impl Judgement {
    pub fn correct(&self) -> Option<bool> {
        match self.verdict {
            Verdict::Correct => Some(true),
            Verdict::Incorrect => Some(false),
            Verdict::Unjudged => None,
        }
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Byte ranges of whole-word occurrences of `needle` in `hay`.
fn whole_word_matches(hay: &str, needle: &str) -> Vec<(usize, usize)> {
    hay.match_indices(needle)
        .map(|(start, m)| (start, start + m.len()))
        .filter(|&(start, end)| {
            let before_ok = hay[..start].chars().next_back().is_none_or(|c| !is_word_char(c));
            let after_ok = hay[end..].chars().next().is_none_or(|c| !is_word_char(c));
            before_ok && after_ok
        })
        .collect()
}

/// Scores `translation` against `item`.
///
/// Markers of every sense are matched case-insensitively as whole words,
/// longest first, and a matched span is consumed so a shorter marker
/// cannot re-match inside it. Any competing-sense marker makes the
/// translation incorrect; otherwise an intended-sense marker makes it
/// correct; with no marker at all it stays unjudged.
pub fn judge(translation: &str, item: &CorpusItem) -> Judgement {
    let text = translation.to_lowercase();

    let mut candidates: Vec<(String, bool, &str)> = Vec::new();
    for sense in &item.senses {
        let intended = sense.label == item.intended_sense;
        for marker in &sense.markers {
            let m = marker.trim().to_lowercase();
            if !m.is_empty() {
                candidates.push((m, intended, sense.label.as_str()));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.chars()
            .count()
            .cmp(&a.0.chars().count())
            .then_with(|| a.0.cmp(&b.0))
            .then_with(|| a.1.cmp(&b.1))
    });
    candidates.dedup_by(|a, b| a.0 == b.0);

    let mut consumed: Vec<(usize, usize)> = Vec::new();
    let mut intended_hits = BTreeSet::new();
    let mut competing_hits = BTreeSet::new();
    let mut competing_labels = BTreeSet::new();
    for (marker, intended, label) in &candidates {
        let fresh: Vec<_> = whole_word_matches(&text, marker)
            .into_iter()
            .filter(|&(s, e)| consumed.iter().all(|&(cs, ce)| e <= cs || s >= ce))
            .collect();
        if fresh.is_empty() {
            continue;
        }
        consumed.extend(fresh);
        if *intended {
            intended_hits.insert(marker.clone());
        } else {
            competing_hits.insert(marker.clone());
            competing_labels.insert(*label);
        }
    }

    let matched_markers: Vec<String> = intended_hits.union(&competing_hits).cloned().collect();
    if !competing_hits.is_empty() {
        let rationale = format!(
            "competing sense {} marker(s) {} present",
            competing_labels.into_iter().collect::<Vec<_>>().join("/"),
            competing_hits
                .iter()
                .map(|m| format!("{m:?}"))
                .collect::<Vec<_>>()
                .join(", ")
        );
        Judgement {
            verdict: Verdict::Incorrect,
            matched_markers,
            rationale,
        }
    } else if !intended_hits.is_empty() {
        Judgement {
            verdict: Verdict::Correct,
            rationale: format!("intended sense {} marker(s) present", item.intended_sense),
            matched_markers,
        }
    } else {
        Judgement {
            verdict: Verdict::Unjudged,
            matched_markers: Vec::new(),
            rationale: "no sense marker found".to_string(),
        }
    }
}

/// Manual correction of one judgement, read from an override file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgementOverride {
    pub item_id: String,
    pub condition: Condition,
    pub verdict: Verdict,
    pub rationale: String,
}

impl JudgementOverride {
    pub fn judgement(&self) -> Judgement {
        Judgement {
            verdict: self.verdict,
            matched_markers: Vec::new(),
            rationale: format!("manual override: {}", self.rationale),
        }
    }
}

pub fn parse_overrides(text: &str) -> Result<Vec<JudgementOverride>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("override line {}: {e}", i + 1)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{SenseSpec, TriggerCategory};

    fn sense(label: &str, markers: &[&str]) -> SenseSpec {
        SenseSpec {
            label: label.into(),
            description: String::new(),
            markers: markers.iter().map(|m| m.to_string()).collect(),
            gold_reference: format!("ref {label}"),
        }
    }

    fn item(senses: Vec<SenseSpec>, intended: &str) -> CorpusItem {
        CorpusItem {
            id: "t".into(),
            trigger: TriggerCategory::Lexical,
            source_lang: "it".into(),
            target_lang: "en".into(),
            source_text: "Passami la chiave".into(),
            senses,
            intended_sense: intended.into(),
            image_path: "x.png".into(),
            caption_gold: None,
            notes: None,
            relaxed_length: true,
        }
    }

    fn wrench_item() -> CorpusItem {
        item(
            vec![sense("key", &["key"]), sense("wrench", &["wrench", "spanner"])],
            "wrench",
        )
    }

    #[test]
    fn wrench_is_correct() {
        let j = judge("Give me the wrench", &wrench_item());
        assert_eq!(j.verdict, Verdict::Correct);
        assert_eq!(j.matched_markers, vec!["wrench"]);
        assert_eq!(j.correct(), Some(true));
    }

    #[test]
    fn both_senses_is_incorrect() {
        let j = judge("Give me the key or the wrench", &wrench_item());
        assert_eq!(j.verdict, Verdict::Incorrect);
        assert_eq!(j.matched_markers, vec!["key", "wrench"]);
        assert!(j.rationale.contains("key"));
    }

    #[test]
    fn no_marker_is_unjudged() {
        let j = judge("Pass it to me", &wrench_item());
        assert_eq!(j.verdict, Verdict::Unjudged);
        assert!(j.matched_markers.is_empty());
        assert_eq!(j.correct(), None);
    }

    #[test]
    fn whole_words_only_and_case_insensitive() {
        assert_eq!(judge("The KEYBOARD is here", &wrench_item()).verdict, Verdict::Unjudged);
        assert_eq!(
            judge("Hand me the Spanner, please.", &wrench_item()).verdict,
            Verdict::Correct
        );
        assert_eq!(judge("key.", &wrench_item()).verdict, Verdict::Incorrect);
    }

    #[test]
    fn longer_gendered_form_wins() {
        let it = item(
            vec![
                sense("female", &["la dottoressa", "dottoressa"]),
                sense("male", &["il dottore", "dottore"]),
            ],
            "female",
        );
        assert_eq!(judge("La dottoressa arriva subito.", &it).verdict, Verdict::Correct);
        assert_eq!(judge("Il dottore arriva subito.", &it).verdict, Verdict::Incorrect);
    }

    #[test]
    fn multiword_marker_consumes_its_span() {
        let it = item(
            vec![
                sense("both", &["camicie e scarpe verdi"]),
                sense("shirts", &["camicie verdi"]),
            ],
            "both",
        );
        assert_eq!(
            judge("Paul ha comprato camicie e scarpe verdi.", &it).verdict,
            Verdict::Correct
        );
        assert_eq!(
            judge("Paul ha comprato camicie verdi e scarpe.", &it).verdict,
            Verdict::Incorrect
        );
    }

    #[test]
    fn marker_order_does_not_matter() {
        let a = item(
            vec![sense("key", &["key", "keys"]), sense("wrench", &["wrench", "spanner"])],
            "wrench",
        );
        let b = item(
            vec![sense("wrench", &["spanner", "wrench"]), sense("key", &["keys", "key"])],
            "wrench",
        );
        for t in ["the keys and a spanner", "a wrench", "nothing", "KEY"] {
            assert_eq!(judge(t, &a), judge(t, &b), "{t}");
        }
    }

    #[test]
    fn override_lines_parse() {
        let o =
            parse_overrides(r#"{"item_id":"x","condition":"C2","verdict":"correct","rationale":"checked by hand"}"#)
                .unwrap();
        assert_eq!(o[0].judgement().verdict, Verdict::Correct);
        assert!(o[0].judgement().rationale.starts_with("manual override"));
        assert!(parse_overrides("{}").is_err());
    }
}
