//! Judging and the statistics used to compare conditions: accuracy with a
//! Wilson 95% interval, an exact binomial test against the 50% chance
//! baseline, and exact McNemar tests on paired items.

mod judge;
mod stats;
pub(crate) mod summary;

pub use judge::{judge, parse_overrides, Judgement, JudgementOverride, Verdict};
pub use stats::{
    binomial_half_cdf, exact_binomial_p, format_accuracy, format_ci, format_p, mcnemar_exact, wilson_ci, wilson_ci_z,
    StatsError, Z_95,
};
pub use summary::{
    paired_mcnemar, parse_trials, summarize, trials_to_jsonl, ConditionSummary, McNemarResult, SummaryError,
    TrialRecord,
};
