//! Exact tests against the 50% chance baseline and Wilson score intervals.

/// Two-sided 95% normal quantile used for Wilson intervals.
pub const Z_95: f64 = 1.959964;

/// Above this size the pmf recurrence runs in log space; 0.5^n underflows
/// near n = 1075.
const LINEAR_PMF_LIMIT: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("no trials (n = 0)")]
    ZeroTrials,
    #[error("invalid count: k = {k} exceeds n = {n}")]
    InvalidCount { k: u64, n: u64 },
}

fn check(k: u64, n: u64) -> Result<(), StatsError> {
    if n == 0 {
        return Err(StatsError::ZeroTrials);
    }
    if k > n {
        return Err(StatsError::InvalidCount { k, n });
    }
    Ok(())
}

/// Wilson score interval `(lo, hi)` for `k` successes in `n` trials.
pub fn wilson_ci(k: u64, n: u64) -> Result<(f64, f64), StatsError> {
    wilson_ci_z(k, n, Z_95)
}

pub fn wilson_ci_z(k: u64, n: u64, z: f64) -> Result<(f64, f64), StatsError> {
    check(k, n)?;
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (center + half).min(1.0) };
    Ok((lo, hi))
}

/// Pr{X <= k} for X ~ Binomial(n, 1/2), by summing the pmf built with the
/// multiplicative recurrence pmf(i+1) = pmf(i) * (n-i)/(i+1).
pub fn binomial_half_cdf(k: u64, n: u64) -> f64 {
    if k >= n {
        return 1.0;
    }
    if n <= LINEAR_PMF_LIMIT {
        let mut pmf = 0.5f64.powi(n as i32);
        let mut sum = pmf;
        for i in 0..k {
            pmf *= (n - i) as f64 / (i + 1) as f64;
            sum += pmf;
        }
        sum.min(1.0)
    } else {
        let mut log_pmf = n as f64 * 0.5f64.ln();
        let mut sum = log_pmf.exp();
        for i in 0..k {
            log_pmf += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
            sum += log_pmf.exp();
        }
        sum.min(1.0)
    }
}

/// Two-sided exact binomial test of H0: p = 1/2. The smaller tail is
/// doubled and the result clamped to 1 (doubling at k = n/2 overshoots).
pub fn exact_binomial_p(k: u64, n: u64) -> Result<f64, StatsError> {
    check(k, n)?;
    // Pr{X >= k} = Pr{X <= n - k} by symmetry of the fair binomial.
    let tail = if 2 * k <= n {
        binomial_half_cdf(k, n)
    } else {
        binomial_half_cdf(n - k, n)
    };
    Ok((2.0 * tail).min(1.0))
}

/// Exact McNemar test on discordant counts `b` and `c`.
pub fn mcnemar_exact(b: u64, c: u64) -> f64 {
    let m = b + c;
    if m == 0 {
        return 1.0;
    }
    (2.0 * binomial_half_cdf(b.min(c), m)).min(1.0)
}

/// `52.5% (21/40)`
pub fn format_accuracy(k: u64, n: u64) -> String {
    if n == 0 {
        return "n/a".to_string();
    }
    format!("{:.1}% ({k}/{n})", 100.0 * k as f64 / n as f64)
}

/// `[37.5, 67.1]` in percentage points.
pub fn format_ci(lo: f64, hi: f64) -> String {
    format!("[{:.1}, {:.1}]", 100.0 * lo, 100.0 * hi)
}

/// APA-style p-value: `<.001`, three decimals below .10, two above, `1.0`
/// at the ceiling.
pub fn format_p(p: f64) -> String {
    if p < 0.001 {
        return "<.001".to_string();
    }
    let s = if p < 0.1 { format!("{p:.3}") } else { format!("{p:.2}") };
    if s == "1.00" {
        return "1.0".to_string();
    }
    s.trim_start_matches('0').to_string()
}
