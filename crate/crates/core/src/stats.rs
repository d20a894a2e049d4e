//! Mann-Whitney U test and the rating-to-metric ratio estimate.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("both samples must be non-empty")]
    EmptySample,
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("model rating must be positive")]
    DivisionByZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// The first sample tends to be smaller.
    Less,
    /// The first sample tends to be larger.
    Greater,
    TwoSided,
}

impl Alternative {
    pub fn flipped(self) -> Self {
        match self {
            Alternative::Less => Alternative::Greater,
            Alternative::Greater => Alternative::Less,
            Alternative::TwoSided => Alternative::TwoSided,
        }
    }
}

impl std::fmt::Display for Alternative {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Alternative::Less => "less",
            Alternative::Greater => "greater",
            Alternative::TwoSided => "two_sided",
        })
    }
}

impl std::str::FromStr for Alternative {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "less" => Ok(Alternative::Less),
            "greater" => Ok(Alternative::Greater),
            "two_sided" | "twosided" => Ok(Alternative::TwoSided),
            other => Err(format!("unknown alternative `{other}` (less, greater, two-sided)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MwuMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MwuResult {
    /// U statistic of the first sample.
    pub u1: f64,
    pub u2: f64,
    /// `min(u1, u2)`, the value reported in tables.
    pub u_min: f64,
    pub p: f64,
    pub n1: usize,
    pub n2: usize,
    pub alternative: Alternative,
    pub method: MwuMethod,
}

/// Largest `n1 + n2` for which the exact null distribution is used.
pub const EXACT_MAX_TOTAL: usize = 20;

/// Midranks (1-based) of the pooled sample and the tie-group sizes.
fn midranks(pooled: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        let r = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        if j > i {
            ties.push(j - i + 1);
        }
        i = j + 1;
    }
    (ranks, ties)
}

/// Number of ways to choose `n1` of `n1 + n2` ranks with `U = u`, for every
/// `u` in `0..=n1*n2`.
pub fn exact_u_counts(n1: usize, n2: usize) -> Vec<u128> {
    // counts[m][n][u] via f(u; m, n) = f(u - n; m - 1, n) + f(u; m, n - 1).
    let max_u = n1 * n2;
    let mut table: Vec<Vec<Vec<u128>>> = vec![vec![Vec::new(); n2 + 1]; n1 + 1];
    for m in 0..=n1 {
        for n in 0..=n2 {
            let mut f = vec![0u128; m * n + 1];
            if m == 0 || n == 0 {
                f[0] = 1;
            } else {
                for (u, slot) in f.iter_mut().enumerate() {
                    let from_m = if u >= n { table[m - 1][n].get(u - n).copied().unwrap_or(0) } else { 0 };
                    let from_n = table[m][n - 1].get(u).copied().unwrap_or(0);
                    *slot = from_m + from_n;
                }
            }
            table[m][n] = f;
        }
    }
    let out = std::mem::take(&mut table[n1][n2]);
    debug_assert_eq!(out.len(), max_u + 1);
    out
}

/// Exact `P(U <= u)` under the null hypothesis.
pub fn exact_cdf(n1: usize, n2: usize, u: f64) -> f64 {
    let counts = exact_u_counts(n1, n2);
    let total: u128 = counts.iter().sum();
    if u < 0.0 {
        return 0.0;
    }
    let k = u.floor() as usize;
    let below: u128 = counts.iter().take(k + 1).sum();
    below as f64 / total as f64
}

/// Mann-Whitney U test of sample `a` against sample `b`.
///
/// Exact p-values come from the full null distribution when
/// `n1 + n2 <= 20` and there are no ties; otherwise the normal
/// approximation with continuity and tie correction is used.
pub fn mann_whitney_u(a: &[f64], b: &[f64], alternative: Alternative) -> Result<MwuResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let (n1, n2) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u1 = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let nn = (n1 * n2) as f64;
    let u2 = nn - u1;

    let (p, method) = if n1 + n2 <= EXACT_MAX_TOTAL && ties.is_empty() {
        let p_less = exact_cdf(n1, n2, u1);
        let p_greater = exact_cdf(n1, n2, u2);
        let p = match alternative {
            Alternative::Less => p_less,
            Alternative::Greater => p_greater,
            Alternative::TwoSided => (2.0 * p_less.min(p_greater)).min(1.0),
        };
        (p, MwuMethod::Exact)
    } else {
        (normal_p(u1, n1, n2, &ties, alternative), MwuMethod::NormalApprox)
    };

    Ok(MwuResult {
        u1,
        u2,
        u_min: u1.min(u2),
        p,
        n1,
        n2,
        alternative,
        method,
    })
}

fn normal_p(u1: f64, n1: usize, n2: usize, ties: &[usize], alternative: Alternative) -> f64 {
    let (f1, f2) = (n1 as f64, n2 as f64);
    let n = f1 + f2;
    let mu = f1 * f2 / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
    let var = f1 * f2 / 12.0 * ((n + 1.0) - tie_term);
    if var <= 0.0 {
        return 1.0;
    }
    let sd = var.sqrt();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let p = match alternative {
        Alternative::Less => std_normal.cdf((u1 - mu + 0.5) / sd),
        Alternative::Greater => std_normal.sf((u1 - mu - 0.5) / sd),
        Alternative::TwoSided => {
            let z = ((u1 - mu).abs() - 0.5).max(0.0) / sd;
            2.0 * std_normal.sf(z)
        }
    };
    p.clamp(f64::MIN_POSITIVE, 1.0)
}

/// Scales an expert rating onto the metric scale using a reference
/// model's rating/metric ratio (assumes a linear relation).
pub fn estimate_expert_benchmark(model_rating: f64, model_metric: f64, expert_rating: f64) -> Result<f64, StatsError> {
    if model_rating <= 0.0 || !model_rating.is_finite() {
        return Err(StatsError::DivisionByZero);
    }
    Ok(expert_rating * (model_metric / model_rating))
}
