use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::judge::{Judgement, Verdict};
use super::stats::{exact_binomial_p, mcnemar_exact, wilson_ci, StatsError};
use crate::corpus::TriggerCategory;
use crate::prompting::Condition;

/// One (item x condition) translation attempt and its judgement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub run_id: String,
    pub item_id: String,
    pub trigger: TriggerCategory,
    pub condition: Condition,
    pub prompt_digest: String,
    pub model_id: String,
    pub translation_text: String,
    pub judgement: Judgement,
    pub correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption_used: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub donor_item_id: Option<String>,
    pub started_at: String,
    pub finished_at: String,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl TrialRecord {
    /// Replaces the judgement, keeping `correct` consistent with it.
    pub fn set_judgement(&mut self, judgement: Judgement) {
        self.correct = judgement.correct();
        self.judgement = judgement;
    }

    /// Record-level invariants; empty when consistent.
    pub fn check(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.correct != self.judgement.correct() {
            problems.push(format!(
                "{}/{}: correct flag disagrees with verdict {}",
                self.item_id, self.condition, self.judgement.verdict
            ));
        }
        if self.donor_item_id.is_some() != (self.condition == Condition::Adversarial) {
            problems.push(format!(
                "{}/{}: donor must be present exactly for C4",
                self.item_id, self.condition
            ));
        }
        problems
    }
}

pub fn parse_trials(text: &str) -> Result<Vec<TrialRecord>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("trial line {}: {e}", i + 1)))
        .collect()
}

pub fn trials_to_jsonl(trials: &[TrialRecord]) -> String {
    trials
        .iter()
        .map(|t| serde_json::to_string(t).expect("trial serializes") + "\n")
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub trigger: TriggerCategory,
    pub condition: Condition,
    pub k: u64,
    pub n: u64,
    /// Unjudged trials left out of `n`.
    pub excluded: u64,
    pub accuracy: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    pub binom_p: f64,
}

impl ConditionSummary {
    pub fn from_counts(
        trigger: TriggerCategory,
        condition: Condition,
        k: u64,
        n: u64,
        excluded: u64,
    ) -> Result<Self, StatsError> {
        let (wilson_lo, wilson_hi) = wilson_ci(k, n)?;
        Ok(Self {
            trigger,
            condition,
            k,
            n,
            excluded,
            accuracy: k as f64 / n as f64,
            wilson_lo,
            wilson_hi,
            binom_p: exact_binomial_p(k, n)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SummaryError {
    #[error("no judged trials for {trigger}/{condition} ({excluded} unjudged excluded)")]
    NoJudged {
        trigger: TriggerCategory,
        condition: Condition,
        excluded: u64,
    },
    #[error("trial {item_id} is {found_trigger}/{found_condition}, expected {trigger}/{condition}")]
    MixedCell {
        item_id: String,
        trigger: TriggerCategory,
        condition: Condition,
        found_trigger: TriggerCategory,
        found_condition: Condition,
    },
    #[error("paired comparison needs trials on both sides")]
    EmptySide,
    #[error("judged item sets differ: only in A {only_a:?}, only in B {only_b:?}")]
    ItemSetMismatch { only_a: Vec<String>, only_b: Vec<String> },
    #[error("duplicate trial for item {0} within one condition")]
    DuplicateItem(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Accuracy, Wilson interval and binomial test for one trigger x condition
/// cell. Unjudged trials are excluded from `n`.
pub fn summarize(
    trials: &[TrialRecord],
    trigger: TriggerCategory,
    condition: Condition,
) -> Result<ConditionSummary, SummaryError> {
    let mut k = 0u64;
    let mut n = 0u64;
    let mut excluded = 0u64;
    for t in trials {
        if t.trigger != trigger || t.condition != condition {
            return Err(SummaryError::MixedCell {
                item_id: t.item_id.clone(),
                trigger,
                condition,
                found_trigger: t.trigger,
                found_condition: t.condition,
            });
        }
        match t.judgement.verdict {
            Verdict::Correct => {
                k += 1;
                n += 1;
            }
            Verdict::Incorrect => n += 1,
            Verdict::Unjudged => excluded += 1,
        }
    }
    if n == 0 {
        return Err(SummaryError::NoJudged {
            trigger,
            condition,
            excluded,
        });
    }
    Ok(ConditionSummary::from_counts(trigger, condition, k, n, excluded)?)
}

/// Paired 2x2 table over shared items. `b` counts items correct under A
/// but not B, `c` the reverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    pub condition_a: Condition,
    pub condition_b: Condition,
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
    pub p_exact: f64,
}

impl McNemarResult {
    pub fn from_table(condition_a: Condition, condition_b: Condition, a: u64, b: u64, c: u64, d: u64) -> Self {
        Self {
            condition_a,
            condition_b,
            a,
            b,
            c,
            d,
            p_exact: mcnemar_exact(b, c),
        }
    }

    pub fn n(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }
}

fn judged_outcomes(trials: &[TrialRecord]) -> Result<BTreeMap<&str, bool>, SummaryError> {
    let mut out = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for t in trials {
        if !seen.insert(t.item_id.as_str()) {
            return Err(SummaryError::DuplicateItem(t.item_id.clone()));
        }
        if let Some(c) = t.judgement.correct() {
            out.insert(t.item_id.as_str(), c);
        }
    }
    Ok(out)
}

pub fn paired_mcnemar(trials_a: &[TrialRecord], trials_b: &[TrialRecord]) -> Result<McNemarResult, SummaryError> {
    let (Some(first_a), Some(first_b)) = (trials_a.first(), trials_b.first()) else {
        return Err(SummaryError::EmptySide);
    };
    let a = judged_outcomes(trials_a)?;
    let b = judged_outcomes(trials_b)?;
    let keys_a: BTreeSet<&str> = a.keys().copied().collect();
    let keys_b: BTreeSet<&str> = b.keys().copied().collect();
    if keys_a != keys_b {
        return Err(SummaryError::ItemSetMismatch {
            only_a: keys_a.difference(&keys_b).map(|s| s.to_string()).collect(),
            only_b: keys_b.difference(&keys_a).map(|s| s.to_string()).collect(),
        });
    }
    let (mut both, mut only_a, mut only_b, mut neither) = (0, 0, 0, 0);
    for (id, ca) in &a {
        match (*ca, b[id]) {
            (true, true) => both += 1,
            (true, false) => only_a += 1,
            (false, true) => only_b += 1,
            (false, false) => neither += 1,
        }
    }
    Ok(McNemarResult::from_table(
        first_a.condition,
        first_b.condition,
        both,
        only_a,
        only_b,
        neither,
    ))
}
