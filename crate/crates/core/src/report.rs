//! Per-trigger accuracy tables, paired comparisons and hypothesis verdicts
//! computed from a trial file.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::TriggerCategory;
use crate::evalstats::{
    format_accuracy, format_ci, format_p, paired_mcnemar, summarize, ConditionSummary, McNemarResult, TrialRecord,
};
use crate::prompting::Condition;

/// Significance level for every verdict.
pub const ALPHA: f64 = 0.05;

/// Condition pairs compared within items.
pub const PAIRS: [(Condition, Condition); 4] = [
    (Condition::SpeechOnly, Condition::Caption),
    (Condition::Caption, Condition::Multimodal),
    (Condition::SpeechOnly, Condition::Multimodal),
    (Condition::SpeechOnly, Condition::Adversarial),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Cell {
    Ok(ConditionSummary),
    /// No trials for this trigger and condition.
    Absent {
        trigger: TriggerCategory,
        condition: Condition,
    },
    /// Trials exist but none could be summarized (e.g. all unjudged).
    Empty {
        trigger: TriggerCategory,
        condition: Condition,
        reason: String,
    },
}

impl Cell {
    pub fn summary(&self) -> Option<&ConditionSummary> {
        match self {
            Self::Ok(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub trigger: TriggerCategory,
    pub condition_a: Condition,
    pub condition_b: Condition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<McNemarResult>,
    /// Items judged under only one of the two conditions, left out of the
    /// table.
    pub dropped_items: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    Supported,
    PartiallySupported,
    NotSupported,
    InsufficientData,
}

impl Support {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Supported => "supported",
            Self::PartiallySupported => "partially supported",
            Self::NotSupported => "not supported",
            Self::InsufficientData => "insufficient data",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerVerdict {
    pub trigger: TriggerCategory,
    pub support: Support,
    pub evidence: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisVerdict {
    /// `H1`, `H2` or `H3`.
    pub id: String,
    pub statement: String,
    pub support: Support,
    pub per_trigger: Vec<TriggerVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub alpha: f64,
    pub triggers: Vec<TriggerCategory>,
    pub cells: Vec<Cell>,
    pub comparisons: Vec<PairedComparison>,
    pub hypotheses: Vec<HypothesisVerdict>,
}

impl RunReport {
    pub fn cell(&self, trigger: TriggerCategory, condition: Condition) -> Option<&Cell> {
        self.cells.iter().find(|c| match c {
            Cell::Ok(s) => s.trigger == trigger && s.condition == condition,
            Cell::Absent {
                trigger: t,
                condition: c,
            }
            | Cell::Empty {
                trigger: t,
                condition: c,
                ..
            } => *t == trigger && *c == condition,
        })
    }

    pub fn comparison(&self, trigger: TriggerCategory, a: Condition, b: Condition) -> Option<&PairedComparison> {
        self.comparisons
            .iter()
            .find(|p| p.trigger == trigger && p.condition_a == a && p.condition_b == b)
    }

    pub fn hypothesis(&self, id: &str) -> Option<&HypothesisVerdict> {
        self.hypotheses.iter().find(|h| h.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

type Groups = BTreeMap<(TriggerCategory, Condition), Vec<TrialRecord>>;

fn compare(groups: &Groups, trigger: TriggerCategory, a: Condition, b: Condition) -> PairedComparison {
    let empty = Vec::new();
    let side_a = groups.get(&(trigger, a)).unwrap_or(&empty);
    let side_b = groups.get(&(trigger, b)).unwrap_or(&empty);
    let judged = |side: &[TrialRecord]| -> BTreeSet<String> {
        side.iter()
            .filter(|t| t.judgement.correct().is_some())
            .map(|t| t.item_id.clone())
            .collect()
    };
    let (ja, jb) = (judged(side_a), judged(side_b));
    let shared: BTreeSet<&String> = ja.intersection(&jb).collect();
    let dropped: Vec<String> = ja.symmetric_difference(&jb).cloned().collect();
    let keep = |side: &[TrialRecord]| -> Vec<TrialRecord> {
        side.iter().filter(|t| shared.contains(&t.item_id)).cloned().collect()
    };
    let (ka, kb) = (keep(side_a), keep(side_b));
    let (result, note) = if ka.is_empty() {
        (None, Some("no shared judged items".to_string()))
    } else {
        match paired_mcnemar(&ka, &kb) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };
    PairedComparison {
        trigger,
        condition_a: a,
        condition_b: b,
        result,
        dropped_items: dropped,
        note,
    }
}

/// Outcome of testing "B is better than A" within items.
enum Improvement {
    Significant,
    NotSignificant,
    Unknown,
}

fn accuracy(
    report_cells: &BTreeMap<(TriggerCategory, Condition), ConditionSummary>,
    t: TriggerCategory,
    c: Condition,
) -> Option<f64> {
    report_cells.get(&(t, c)).map(|s| s.accuracy)
}

fn improvement(
    cells: &BTreeMap<(TriggerCategory, Condition), ConditionSummary>,
    cmp: Option<&PairedComparison>,
    trigger: TriggerCategory,
    a: Condition,
    b: Condition,
) -> (Improvement, String) {
    let (Some(acc_a), Some(acc_b), Some(r)) = (
        accuracy(cells, trigger, a),
        accuracy(cells, trigger, b),
        cmp.and_then(|c| c.result.as_ref()),
    ) else {
        return (Improvement::Unknown, format!("{b} vs {a}: missing data"));
    };
    let evidence = format!(
        "{b} {:.1}% vs {a} {:.1}%, McNemar b={} c={} p={}",
        100.0 * acc_b,
        100.0 * acc_a,
        r.b,
        r.c,
        format_p(r.p_exact)
    );
    // b counts items right under A only, c items right under B only.
    if acc_b > acc_a && r.c > r.b && r.p_exact < ALPHA {
        (Improvement::Significant, evidence)
    } else {
        (Improvement::NotSignificant, evidence)
    }
}

fn combine(per_trigger: &[TriggerVerdict]) -> Support {
    let known: Vec<Support> = per_trigger
        .iter()
        .map(|v| v.support)
        .filter(|s| *s != Support::InsufficientData)
        .collect();
    if known.is_empty() {
        Support::InsufficientData
    } else if known.iter().all(|s| *s == Support::Supported) && known.len() == per_trigger.len() {
        Support::Supported
    } else if known
        .iter()
        .any(|s| matches!(s, Support::Supported | Support::PartiallySupported))
    {
        Support::PartiallySupported
    } else {
        Support::NotSupported
    }
}

fn hypotheses(
    triggers: &[TriggerCategory],
    cells: &BTreeMap<(TriggerCategory, Condition), ConditionSummary>,
    comparisons: &[PairedComparison],
) -> Vec<HypothesisVerdict> {
    use Condition::*;
    let find = |t: TriggerCategory, a: Condition, b: Condition| {
        comparisons
            .iter()
            .find(|p| p.trigger == t && p.condition_a == a && p.condition_b == b)
    };

    let mut h1 = Vec::new();
    let mut h2 = Vec::new();
    let mut h3 = Vec::new();
    for &t in triggers {
        let (i2, e2) = improvement(cells, find(t, SpeechOnly, Caption), t, SpeechOnly, Caption);
        let (i3, e3) = improvement(cells, find(t, SpeechOnly, Multimodal), t, SpeechOnly, Multimodal);
        let support = match (&i2, &i3) {
            (Improvement::Unknown, _) | (_, Improvement::Unknown) => Support::InsufficientData,
            (Improvement::Significant, Improvement::Significant) => Support::Supported,
            (Improvement::Significant, _) | (_, Improvement::Significant) => Support::PartiallySupported,
            _ => Support::NotSupported,
        };
        h1.push(TriggerVerdict {
            trigger: t,
            support,
            evidence: format!("{e2}; {e3}"),
        });

        let (i, e) = improvement(cells, find(t, Caption, Multimodal), t, Caption, Multimodal);
        h2.push(TriggerVerdict {
            trigger: t,
            support: match i {
                Improvement::Unknown => Support::InsufficientData,
                Improvement::Significant => Support::Supported,
                Improvement::NotSignificant => Support::NotSupported,
            },
            evidence: e,
        });

        // Degradation: C1 significantly better than C4 within items.
        let c14 = find(t, SpeechOnly, Adversarial).and_then(|p| p.result.as_ref());
        let (support, evidence) = match (c14, accuracy(cells, t, SpeechOnly), accuracy(cells, t, Adversarial)) {
            (Some(r), Some(a1), Some(a4)) => {
                let degraded = a4 < a1 && r.b > r.c && r.p_exact < ALPHA;
                let evidence = format!(
                    "C4 {:.1}% vs C1 {:.1}%, McNemar b={} c={} p={}",
                    100.0 * a4,
                    100.0 * a1,
                    r.b,
                    r.c,
                    format_p(r.p_exact)
                );
                (
                    if degraded {
                        Support::NotSupported
                    } else {
                        Support::Supported
                    },
                    evidence,
                )
            }
            _ => (Support::InsufficientData, "C4 vs C1: missing data".to_string()),
        };
        h3.push(TriggerVerdict {
            trigger: t,
            support,
            evidence,
        });
    }

    vec![
        HypothesisVerdict {
            id: "H1".into(),
            statement: "visual helps: C2, C3 > C1 on adequacy".into(),
            support: combine(&h1),
            per_trigger: h1,
        },
        HypothesisVerdict {
            id: "H2".into(),
            statement: "caption vs multimodal direct: C3 ≥ C2".into(),
            support: combine(&h2),
            per_trigger: h2,
        },
        HypothesisVerdict {
            id: "H3".into(),
            statement: "robustness: C4 does not degrade vs. C1".into(),
            support: combine(&h3),
            per_trigger: h3,
        },
    ]
}

/// Builds the report. Missing or all-unjudged cells are marked, never
/// fatal.
pub fn run_report(trials: &[TrialRecord]) -> RunReport {
    let mut groups: Groups = BTreeMap::new();
    for t in trials {
        groups.entry((t.trigger, t.condition)).or_default().push(t.clone());
    }
    let triggers: Vec<TriggerCategory> = TriggerCategory::ALL
        .into_iter()
        .filter(|t| trials.iter().any(|r| r.trigger == *t))
        .collect();

    let mut cells = Vec::new();
    let mut summaries = BTreeMap::new();
    for &trigger in &triggers {
        for condition in Condition::ALL {
            let cell = match groups.get(&(trigger, condition)) {
                None => Cell::Absent { trigger, condition },
                Some(group) => match summarize(group, trigger, condition) {
                    Ok(s) => {
                        summaries.insert((trigger, condition), s.clone());
                        Cell::Ok(s)
                    }
                    Err(e) => Cell::Empty {
                        trigger,
                        condition,
                        reason: e.to_string(),
                    },
                },
            };
            cells.push(cell);
        }
    }

    let comparisons: Vec<PairedComparison> = triggers
        .iter()
        .flat_map(|&t| PAIRS.iter().map(move |&(a, b)| (t, a, b)))
        .map(|(t, a, b)| compare(&groups, t, a, b))
        .collect();
    let hypotheses = hypotheses(&triggers, &summaries, &comparisons);
    RunReport {
        alpha: ALPHA,
        triggers,
        cells,
        comparisons,
        hypotheses,
    }
}

/// Plain-text rendering: one accuracy table per trigger, the paired
/// comparisons, then the hypothesis verdict lines.
pub fn render_text(report: &RunReport) -> String {
    let mut out = String::new();
    for &trigger in &report.triggers {
        let _ = writeln!(out, "{}", trigger.title());
        let _ = writeln!(
            out,
            "  {:<4} {:<30} {:<16} {:<14} {:>6}",
            "cond", "label", "accuracy", "95% CI", "p"
        );
        for condition in Condition::ALL {
            match report.cell(trigger, condition) {
                Some(Cell::Ok(s)) => {
                    let mut line = format!(
                        "  {:<4} {:<30} {:<16} {:<14} {:>6}",
                        condition.code(),
                        condition.label(),
                        format_accuracy(s.k, s.n),
                        format_ci(s.wilson_lo, s.wilson_hi),
                        format_p(s.binom_p)
                    );
                    if s.excluded > 0 {
                        let _ = write!(line, "  ({} unjudged excluded)", s.excluded);
                    }
                    let _ = writeln!(out, "{line}");
                }
                Some(Cell::Empty { reason, .. }) => {
                    let _ = writeln!(
                        out,
                        "  {:<4} {:<30} empty: {reason}",
                        condition.code(),
                        condition.label()
                    );
                }
                _ => {
                    let _ = writeln!(out, "  {:<4} {:<30} absent", condition.code(), condition.label());
                }
            }
        }
        for cmp in report.comparisons.iter().filter(|c| c.trigger == trigger) {
            let head = format!("  McNemar {} vs {}:", cmp.condition_a, cmp.condition_b);
            match &cmp.result {
                Some(r) => {
                    let _ = write!(
                        out,
                        "{head} a={} b={} c={} d={} p={}",
                        r.a,
                        r.b,
                        r.c,
                        r.d,
                        format_p(r.p_exact)
                    );
                    if !cmp.dropped_items.is_empty() {
                        let _ = write!(out, " ({} unpaired item(s) left out)", cmp.dropped_items.len());
                    }
                    let _ = writeln!(out);
                }
                None => {
                    let _ = writeln!(out, "{head} n/a ({})", cmp.note.as_deref().unwrap_or("no data"));
                }
            }
        }
        let _ = writeln!(out);
    }
    for h in &report.hypotheses {
        let _ = writeln!(out, "{} ({}): {}", h.id, h.statement, h.support.as_str());
        for v in &h.per_trigger {
            let _ = writeln!(out, "  {}: {} ({})", v.trigger, v.support.as_str(), v.evidence);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalstats::summary::tests::trial;
    use crate::evalstats::Verdict;

    fn outcomes(trigger: TriggerCategory, condition: Condition, correct: &[bool]) -> Vec<TrialRecord> {
        correct
            .iter()
            .enumerate()
            .map(|(i, &ok)| {
                let v = if ok { Verdict::Correct } else { Verdict::Incorrect };
                trial(&format!("{}-{i:02}", trigger.as_str()), trigger, condition, v)
            })
            .collect()
    }

    fn first_k(k: usize, n: usize) -> Vec<bool> {
        (0..n).map(|i| i < k).collect()
    }

    #[test]
    fn cell_prints_accuracy_ci_and_p() {
        let trials = outcomes(TriggerCategory::Lexical, Condition::Caption, &first_k(34, 40));
        let report = run_report(&trials);
        let s = report
            .cell(TriggerCategory::Lexical, Condition::Caption)
            .unwrap()
            .summary()
            .unwrap();
        assert_eq!((s.k, s.n), (34, 40));
        let text = render_text(&report);
        let line = text.lines().find(|l| l.trim_start().starts_with("C2")).unwrap();
        assert!(line.contains("85.0% (34/40)"), "{line}");
        assert!(line.contains("[71.0, 92.9]") || line.contains("[70.9, 92.9]"), "{line}");
        assert!(line.contains("<.001"), "{line}");
    }

    #[test]
    fn identical_outcomes_support_nothing() {
        let pattern = first_k(25, 40);
        let mut trials = Vec::new();
        for c in Condition::ALL {
            trials.extend(outcomes(TriggerCategory::Gender, c, &pattern));
        }
        let report = run_report(&trials);
        for cmp in &report.comparisons {
            let r = cmp.result.as_ref().unwrap();
            assert_eq!((r.b, r.c), (0, 0));
            assert_eq!(r.p_exact, 1.0);
        }
        assert_eq!(report.hypothesis("H1").unwrap().support, Support::NotSupported);
        assert_eq!(report.hypothesis("H2").unwrap().support, Support::NotSupported);
        assert_eq!(report.hypothesis("H3").unwrap().support, Support::Supported);
    }

    #[test]
    fn missing_condition_is_marked_absent() {
        let mut trials = Vec::new();
        for c in [Condition::SpeechOnly, Condition::Caption, Condition::Adversarial] {
            trials.extend(outcomes(TriggerCategory::Lexical, c, &first_k(20, 40)));
        }
        let report = run_report(&trials);
        assert!(matches!(
            report.cell(TriggerCategory::Lexical, Condition::Multimodal),
            Some(Cell::Absent { .. })
        ));
        assert!(report
            .cell(TriggerCategory::Lexical, Condition::Caption)
            .unwrap()
            .summary()
            .is_some());
        let cmp = report
            .comparison(TriggerCategory::Lexical, Condition::Caption, Condition::Multimodal)
            .unwrap();
        assert!(cmp.result.is_none());
        assert_eq!(report.hypothesis("H2").unwrap().support, Support::InsufficientData);
        let text = render_text(&report);
        let line = text.lines().find(|l| l.trim_start().starts_with("C3")).unwrap();
        assert!(line.ends_with("absent"), "{line}");
    }

    #[test]
    fn significant_gain_and_degradation() {
        let t = TriggerCategory::Lexical;
        let mut trials = outcomes(t, Condition::SpeechOnly, &first_k(20, 40));
        // C2 and C3 right on every item C1 got right plus twelve more.
        trials.extend(outcomes(t, Condition::Caption, &first_k(32, 40)));
        trials.extend(outcomes(t, Condition::Multimodal, &first_k(32, 40)));
        // C4 wrong on ten items C1 got right.
        trials.extend(outcomes(t, Condition::Adversarial, &first_k(10, 40)));
        let report = run_report(&trials);

        let r = report
            .comparison(t, Condition::SpeechOnly, Condition::Caption)
            .unwrap()
            .result
            .clone()
            .unwrap();
        assert_eq!((r.a, r.b, r.c, r.d), (20, 0, 12, 8));
        assert!((r.p_exact - 2.0 / 4096.0).abs() < 1e-12);
        assert_eq!(report.hypothesis("H1").unwrap().support, Support::Supported);
        assert_eq!(report.hypothesis("H2").unwrap().support, Support::NotSupported);
        assert_eq!(report.hypothesis("H3").unwrap().support, Support::NotSupported);
    }

    #[test]
    fn one_visual_condition_is_partial_support() {
        let t = TriggerCategory::Syntactic;
        let mut trials = outcomes(t, Condition::SpeechOnly, &first_k(20, 40));
        trials.extend(outcomes(t, Condition::Caption, &first_k(32, 40)));
        trials.extend(outcomes(t, Condition::Multimodal, &first_k(22, 40)));
        let report = run_report(&trials);
        let h1 = report.hypothesis("H1").unwrap();
        assert_eq!(h1.support, Support::PartiallySupported);
        assert_eq!(h1.per_trigger[0].support, Support::PartiallySupported);
    }

    #[test]
    fn unpaired_items_are_dropped_and_listed() {
        let t = TriggerCategory::Gender;
        let mut trials = outcomes(t, Condition::SpeechOnly, &first_k(3, 4));
        let mut c2 = outcomes(t, Condition::Caption, &first_k(1, 4));
        c2[3].set_judgement(crate::evalstats::Judgement {
            verdict: Verdict::Unjudged,
            matched_markers: Vec::new(),
            rationale: String::new(),
        });
        trials.extend(c2);
        let report = run_report(&trials);
        let cmp = report.comparison(t, Condition::SpeechOnly, Condition::Caption).unwrap();
        assert_eq!(cmp.dropped_items, vec!["gender-03".to_string()]);
        assert_eq!(cmp.result.as_ref().unwrap().n(), 3);
    }

    #[test]
    fn all_unjudged_cell_is_empty_not_fatal() {
        let t = TriggerCategory::Lexical;
        let mut trials = outcomes(t, Condition::SpeechOnly, &first_k(2, 4));
        trials.extend((0..4).map(|i| trial(&format!("lexical-{i:02}"), t, Condition::Caption, Verdict::Unjudged)));
        let report = run_report(&trials);
        assert!(matches!(report.cell(t, Condition::Caption), Some(Cell::Empty { .. })));
        assert!(render_text(&report).contains("empty:"));
    }

    #[test]
    fn json_round_trips() {
        let trials = outcomes(TriggerCategory::Lexical, Condition::SpeechOnly, &first_k(21, 40));
        let report = run_report(&trials);
        let back: RunReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back, report);
    }
}
