//! Paired Wilcoxon signed-rank test and a KS normality check.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use super::ToolsError;

/// Largest effective sample size for which the exact null distribution is used.
pub const EXACT_MAX_N: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// `x` tends to be smaller than `y`.
    Less,
    Greater,
    TwoSided,
}

impl std::str::FromStr for Alternative {
    type Err = ToolsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "less" => Ok(Self::Less),
            "greater" => Ok(Self::Greater),
            "two_sided" => Ok(Self::TwoSided),
            _ => Err(ToolsError::Invalid(format!("unknown alternative `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WilcoxonResult {
    pub alternative: Alternative,
    /// Pairs left after discarding zero differences.
    pub n: usize,
    pub zeros: usize,
    /// Sum of ranks of positive `x − y`.
    pub w_plus: f64,
    pub w_minus: f64,
    /// Normal-approximation score (tie-corrected), reported in both regimes.
    pub z: f64,
    pub p_value: f64,
    /// `p_value` from the exact null distribution rather than the normal one.
    pub exact: bool,
    /// Every difference was zero; the test carries no information.
    pub degenerate: bool,
}

/// 1-based mid-ranks of `v`.
pub fn mid_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Number of sign assignments giving each doubled positive-rank sum.
fn signed_rank_counts(doubled: &[usize]) -> Vec<f64> {
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    counts
}

fn normal_cdf(z: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").cdf(z)
}

pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64], alternative: Alternative) -> Result<WilcoxonResult, ToolsError> {
    if x.len() != y.len() {
        return Err(ToolsError::Invalid(format!(
            "paired samples differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(ToolsError::Invalid("samples must be finite".into()));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    let n = d.len();
    let zeros = x.len() - n;
    if n == 0 {
        return Ok(WilcoxonResult {
            alternative,
            n,
            zeros,
            w_plus: 0.0,
            w_minus: 0.0,
            z: 0.0,
            p_value: 1.0,
            exact: true,
            degenerate: true,
        });
    }
    let ranks = mid_ranks(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let w_plus: f64 = ranks.iter().zip(&d).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let nf = n as f64;
    let w_minus = nf * (nf + 1.0) / 2.0 - w_plus;

    let mean = nf * (nf + 1.0) / 4.0;
    let ties: f64 = {
        let mut sorted = ranks.clone();
        sorted.sort_by(f64::total_cmp);
        sorted
            .chunk_by(|a, b| a == b)
            .map(|g| {
                let t = g.len() as f64;
                t * t * t - t
            })
            .sum()
    };
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
    let z = if var > 0.0 { (w_plus - mean) / var.sqrt() } else { 0.0 };

    let exact = n <= EXACT_MAX_N;
    let (lower, upper) = if exact {
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let counts = signed_rank_counts(&doubled);
        let all = 2f64.powi(n as i32);
        let w2 = (2.0 * w_plus).round() as usize;
        let below: f64 = counts[..=w2].iter().sum();
        let above: f64 = counts[w2..].iter().sum();
        (below / all, above / all)
    } else {
        (normal_cdf(z), 1.0 - normal_cdf(z))
    };
    let p_value = match alternative {
        Alternative::Less => lower,
        Alternative::Greater => upper,
        Alternative::TwoSided => (2.0 * lower.min(upper)).min(1.0),
    };
    Ok(WilcoxonResult {
        alternative,
        n,
        zeros,
        w_plus,
        w_minus,
        z,
        p_value,
        exact,
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KsResult {
    pub n: usize,
    /// Largest gap between the empirical CDF and the fitted normal CDF.
    pub statistic: f64,
    /// Lilliefors p-value (Dallal–Wilkinson approximation), accounting for
    /// the mean and deviation being estimated from the sample. Most accurate
    /// below 0.1.
    pub p_value: f64,
    /// Asymptotic Kolmogorov p-value that ignores the estimation; conservative.
    pub p_kolmogorov: f64,
    /// Always true: the reference normal is fitted to the sample.
    pub lilliefors: bool,
    /// Zero sample variance; statistic and p-values are NaN.
    pub degenerate: bool,
}

/// Asymptotic Kolmogorov tail `P(K > λ)`.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn lilliefors_p(d: f64, n: usize) -> f64 {
    let (d, n) = if n > 100 {
        (d * (n as f64 / 100.0).powf(0.49), 100.0)
    } else {
        (d, n as f64)
    };
    let m = n + 2.78019;
    (-7.01256 * d * d * m + 2.99587 * d * m.sqrt() - 0.122119 + 0.974598 / n.sqrt() + 1.67997 / n)
        .exp()
        .min(1.0)
}

pub fn ks_normality_test(sample: &[f64]) -> Result<KsResult, ToolsError> {
    let n = sample.len();
    if n < 3 {
        return Err(ToolsError::Invalid(format!("normality test needs at least 3 values, got {n}")));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(ToolsError::Invalid("sample must be finite".into()));
    }
    let nf = n as f64;
    let mean = sample.iter().sum::<f64>() / nf;
    let var = sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    if !(var > 0.0) {
        return Ok(KsResult {
            n,
            statistic: f64::NAN,
            p_value: f64::NAN,
            p_kolmogorov: f64::NAN,
            lilliefors: true,
            degenerate: true,
        });
    }
    let sd = var.sqrt();
    let mut z: Vec<f64> = sample.iter().map(|v| (v - mean) / sd).collect();
    z.sort_by(f64::total_cmp);
    let statistic = z
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let f = normal_cdf(*v);
            (f - i as f64 / nf).max((i + 1) as f64 / nf - f)
        })
        .fold(0.0, f64::max);
    let root = nf.sqrt();
    Ok(KsResult {
        n,
        statistic,
        p_value: lilliefors_p(statistic, n),
        p_kolmogorov: kolmogorov_tail((root + 0.12 + 0.11 / root) * statistic),
        lilliefors: true,
        degenerate: false,
    })
}
