//! Finite-stage diagnostics for sequences: increment verdicts, power-law
//! fits and Richardson extrapolation.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Cauchy,
    Divergent,
    Inconclusive,
}

/// Thresholds of the increment verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerdictRules {
    /// `δ_{J-2}/δ_J` must reach this for a Cauchy verdict.
    pub min_two_octave_decrease: f64,
    /// Geometric tail estimate over the norm of the last iterate must stay
    /// below this for a Cauchy verdict.
    pub max_tail_ratio: f64,
    /// Increments below this are treated as exact zeros.
    pub zero_floor: f64,
}

impl Default for VerdictRules {
    fn default() -> Self {
        Self { min_two_octave_decrease: 1.5, max_tail_ratio: 0.25, zero_floor: 1e-300 }
    }
}

/// `y ≈ a·x^p` by least squares in log-log coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub points: usize,
}

pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Option<PowerLawFit> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && y.abs() > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.abs().ln()))
        .collect();
    let (a, b) = linear_fit(&pts)?;
    Some(PowerLawFit { exponent: b, prefactor: a.exp(), points: pts.len() })
}

/// Least-squares line `y = a + b x`.
pub fn linear_fit(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    Some((my - b * mx, b))
}

/// Limit of `s(λ) ≈ L + C λ^{-p}` from the last three terms of a geometric
/// schedule with ratio `ratio`; returns `(L, p)` when the differences shrink.
pub fn richardson(values: &[f64], ratio: f64) -> Option<(f64, f64)> {
    let n = values.len();
    if n < 3 {
        return None;
    }
    let d1 = values[n - 2] - values[n - 3];
    let d2 = values[n - 1] - values[n - 2];
    if d1 == 0.0 || d2 == 0.0 || d1.signum() != d2.signum() || d2.abs() >= d1.abs() {
        return None;
    }
    let p = (d1 / d2).ln() / ratio.ln();
    let limit = values[n - 1] + d2 / (ratio.powf(p) - 1.0);
    Some((limit, p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// Sequence indices `n_0 < n_1 < …` of the iterates.
    pub schedule: Vec<usize>,
    /// `‖x_{n_k}‖`.
    pub norms: Vec<f64>,
    /// `δ_k = ‖x_{n_{k+1}} - x_{n_k}‖`.
    pub increments: Vec<f64>,
    /// Fit `δ_k ≈ a · n_{k+1}^p`.
    pub fit: Option<PowerLawFit>,
    /// Geometric extrapolation `δ_J r/(1-r)` with `r = δ_J/δ_{J-1}`.
    pub tail_estimate: Option<f64>,
    pub tail_ratio: Option<f64>,
    pub verdict: Verdict,
    pub rules: VerdictRules,
}

/// Cauchy: the last increment is at least `min_two_octave_decrease` times
/// smaller than the one two steps earlier, the log-log slope is negative and
/// the geometric tail is finite and below `max_tail_ratio` of the last norm.
/// Divergent: the last three increments do not decrease and the slope is
/// positive. Everything else is inconclusive.
pub fn classify(schedule: Vec<usize>, norms: Vec<f64>, increments: Vec<f64>, rules: VerdictRules) -> ConvergenceReport {
    let ups: Vec<f64> = schedule.iter().skip(1).map(|&n| n as f64).collect();
    let fit = fit_power_law(&ups, &increments);
    let j = increments.len();
    let last_norm = norms.last().copied().unwrap_or(0.0);
    let all_zero = increments.iter().all(|d| d.abs() <= rules.zero_floor);
    let (tail_estimate, tail_ratio) = if all_zero {
        (Some(0.0), Some(0.0))
    } else if j >= 2 && increments[j - 2] > rules.zero_floor {
        let r = increments[j - 1] / increments[j - 2];
        if r < 1.0 {
            let t = increments[j - 1] * r / (1.0 - r);
            (Some(t), if last_norm > 0.0 { Some(t / last_norm) } else { None })
        } else {
            (None, None)
        }
    } else {
        (None, None)
    };
    let slope = fit.map(|f| f.exponent);
    let verdict = if all_zero && j >= 1 {
        Verdict::Cauchy
    } else if j >= 3
        && increments[j - 1] > 0.0
        && increments[j - 3] / increments[j - 1] >= rules.min_two_octave_decrease
        && slope.is_some_and(|s| s < 0.0)
        && tail_ratio.is_some_and(|t| t <= rules.max_tail_ratio)
    {
        Verdict::Cauchy
    } else if j >= 3
        && increments[j - 3] <= increments[j - 2]
        && increments[j - 2] <= increments[j - 1]
        && slope.is_some_and(|s| s > 0.0)
    {
        Verdict::Divergent
    } else {
        Verdict::Inconclusive
    };
    ConvergenceReport { schedule, norms, increments, fit, tail_estimate, tail_ratio, verdict, rules }
}

/// Powers of two `1, 2, 4, …` not exceeding `n_max`.
pub fn dyadic_schedule(n_max: usize) -> Vec<usize> {
    let mut out = vec![1];
    while 2 * out[out.len() - 1] <= n_max {
        out.push(2 * out[out.len() - 1]);
    }
    out
}
