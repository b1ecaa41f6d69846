//! Univariate normality tests: Shapiro-Wilk and Ryan-Joiner.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats;

#[derive(Debug, Error, PartialEq)]
pub enum NormalityError {
    #[error("{test:?} needs {min} <= n <= {max}, got n = {n}")]
    UnsupportedSize {
        test: NormalityTest,
        n: usize,
        min: usize,
        max: usize,
    },
    #[error("all values are equal")]
    Degenerate,
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("alpha {0} outside the tabled range [0.01, 0.10]")]
    InvalidAlpha(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalityTest {
    ShapiroWilk,
    RyanJoiner,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    RejectNormality,
    FailToReject,
}

/// Whether `p_value` is a point value or the endpoint of a one-sided bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueBound {
    Exact,
    /// The true p-value is at least `p_value`.
    AtLeast,
    /// The true p-value is at most `p_value`.
    AtMost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityResult {
    pub test: NormalityTest,
    pub statistic: f64,
    pub p_value: f64,
    pub p_bound: PValueBound,
    pub n: usize,
    pub alpha: f64,
    pub decision: Decision,
}

impl NormalityResult {
    /// Three-decimal p display; bounded values get a `>`/`<` prefix.
    pub fn p_display(&self) -> String {
        let p = stats::display3(self.p_value);
        match self.p_bound {
            PValueBound::Exact => p,
            PValueBound::AtLeast => format!(">{p}"),
            PValueBound::AtMost => format!("<{p}"),
        }
    }
}

fn check_finite(values: &[f64]) -> Result<(), NormalityError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(NormalityError::NonFinite(i)),
        None => Ok(()),
    }
}

// Polynomial with coefficients in ascending order.
fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

/// Royston's approximation to the Shapiro-Wilk coefficients for the upper
/// half of the order statistics (`a[i]` pairs `x[n-1-i]` with `x[i]`).
fn sw_coefficients(n: usize) -> Vec<f64> {
    const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
    const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
    if n == 3 {
        return vec![std::f64::consts::FRAC_1_SQRT_2];
    }
    let half = n / 2;
    let an = n as f64;
    let m: Vec<f64> = (0..half)
        .map(|i| stats::normal_quantile((i as f64 + 1.0 - 0.375) / (an + 0.25)))
        .collect();
    let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / an.sqrt();
    let a1 = poly(&C1, rsn) - m[0] / ssumm2;
    let mut a = vec![0.0; half];
    a[0] = a1;
    let (first, fac) = if n > 5 {
        let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
        let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1])
            / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
            .sqrt();
        a[1] = a2;
        (2, fac)
    } else {
        let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
        (1, fac)
    };
    for i in first..half {
        a[i] = -m[i] / fac;
    }
    a
}

fn shapiro_p(w: f64, n: usize) -> f64 {
    if n == 3 {
        let p = 1.0 - 6.0 / std::f64::consts::PI * w.max(0.75).sqrt().acos();
        return p.clamp(0.0, 1.0);
    }
    let an = n as f64;
    let y = (1.0 - w).ln();
    if n <= 11 {
        let gamma = poly(&[-2.273, 0.459], an);
        if y >= gamma {
            return 1e-19;
        }
        let y = -(gamma - y).ln();
        let m = poly(&[0.5440, -0.39978, 0.025054, -0.0006714], an);
        let s = poly(&[1.3822, -0.77857, 0.062767, -0.0020322], an).exp();
        return stats::normal_sf((y - m) / s);
    }
    let ln_n = an.ln();
    let m = poly(&[-1.5861, -0.31082, -0.083751, 0.0038915], ln_n);
    let s = poly(&[-0.4803, -0.082676, 0.0030302], ln_n).exp();
    stats::normal_sf((y - m) / s)
}

/// Shapiro-Wilk W with Royston's coefficient and p-value approximations.
/// Rejects normality when `p < alpha`.
pub fn shapiro_wilk(values: &[f64], alpha: f64) -> Result<NormalityResult, NormalityError> {
    let n = values.len();
    if !(3..=5000).contains(&n) {
        return Err(NormalityError::UnsupportedSize {
            test: NormalityTest::ShapiroWilk,
            n,
            min: 3,
            max: 5000,
        });
    }
    check_finite(values)?;
    let x = stats::sorted(values);
    if x[n - 1] == x[0] {
        return Err(NormalityError::Degenerate);
    }
    let a = sw_coefficients(n);
    let mean = stats::mean(&x);
    let ss: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    let b: f64 = a.iter().enumerate().map(|(i, ai)| ai * (x[n - 1 - i] - x[i])).sum();
    let w = (b * b / ss).min(1.0);
    let p = shapiro_p(w, n);
    Ok(NormalityResult {
        test: NormalityTest::ShapiroWilk,
        statistic: w,
        p_value: p,
        p_bound: PValueBound::Exact,
        n,
        alpha,
        decision: if p < alpha {
            Decision::RejectNormality
        } else {
            Decision::FailToReject
        },
    })
}

/// Tabled significance levels for Ryan-Joiner, loosest first.
pub const RJ_LEVELS: [f64; 3] = [0.10, 0.05, 0.01];

/// Ryan-Joiner critical values of r at 0.10, 0.05 and 0.01.
pub fn ryan_joiner_critical(n: usize) -> [f64; 3] {
    let n = n as f64;
    let s = n.sqrt();
    [
        1.0071 - 0.1371 / s - 0.3682 / n + 0.7780 / (n * n),
        1.0063 - 0.1288 / s - 0.6118 / n + 1.3505 / (n * n),
        0.9963 - 0.0211 / s - 1.4106 / n + 3.1791 / (n * n),
    ]
}

/// Ryan-Joiner probability-plot correlation test.
///
/// `r` correlates the order statistics with normal scores at plotting
/// positions `(i - 3/8)/(n + 1/4)`. The critical value at `alpha` and the
/// p-value are interpolated linearly between the three tabled levels; outside
/// them the p-value is reported as a bound.
pub fn ryan_joiner(values: &[f64], alpha: f64) -> Result<NormalityResult, NormalityError> {
    let n = values.len();
    if n < 4 {
        return Err(NormalityError::UnsupportedSize {
            test: NormalityTest::RyanJoiner,
            n,
            min: 4,
            max: usize::MAX,
        });
    }
    if !(0.01..=0.10).contains(&alpha) {
        return Err(NormalityError::InvalidAlpha(alpha));
    }
    check_finite(values)?;
    let x = stats::sorted(values);
    if x[n - 1] == x[0] {
        return Err(NormalityError::Degenerate);
    }
    let an = n as f64;
    let scores: Vec<f64> = (1..=n)
        .map(|i| stats::normal_quantile((i as f64 - 0.375) / (an + 0.25)))
        .collect();
    let r = stats::pearson(&x, &scores).min(1.0);
    let cv = ryan_joiner_critical(n);

    let (p, bound) = if r >= cv[0] {
        (RJ_LEVELS[0], PValueBound::AtLeast)
    } else if r < cv[2] {
        (RJ_LEVELS[2], PValueBound::AtMost)
    } else {
        let k = if r >= cv[1] { 0 } else { 1 };
        let t = (r - cv[k + 1]) / (cv[k] - cv[k + 1]);
        (RJ_LEVELS[k + 1] + t * (RJ_LEVELS[k] - RJ_LEVELS[k + 1]), PValueBound::Exact)
    };

    let k = if alpha >= RJ_LEVELS[1] { 0 } else { 1 };
    let t = (alpha - RJ_LEVELS[k + 1]) / (RJ_LEVELS[k] - RJ_LEVELS[k + 1]);
    let critical = cv[k + 1] + t * (cv[k] - cv[k + 1]);

    Ok(NormalityResult {
        test: NormalityTest::RyanJoiner,
        statistic: r,
        p_value: p,
        p_bound: bound,
        n,
        alpha,
        decision: if r < critical {
            Decision::RejectNormality
        } else {
            Decision::FailToReject
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    // Reference values computed with scipy.stats.shapiro.
    const SCIPY: [(&[f64], f64, f64); 5] = [
        (
            &[148.0, 154.0, 158.0, 160.0, 161.0, 162.0, 166.0, 170.0, 182.0, 195.0],
            0.9080491141028906,
            0.2678575575376505,
        ),
        (&[1.0, 1.0, 1.0, 1.0, 10.0], 0.552181683501241, 0.00013097817774592973),
        (
            &[2.1, 3.4, 1.9, 5.6, 4.4, 3.3, 2.8, 3.9, 4.1, 3.0, 2.5, 3.7, 4.8, 2.2, 3.1],
            0.9706634979260499,
            0.8677578505911557,
        ),
        (&[0.1, 0.4, 0.35, 0.9], 0.9246965267796929, 0.5635902991929986),
        (
            &[
                1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0, 13.0, 14.0, 15.0,
                16.0, 17.0, 18.0, 19.0, 20.0,
            ],
            0.9603751832429884,
            0.5513717457916771,
        ),
    ];

    #[test]
    fn shapiro_matches_reference() {
        for (x, w, p) in SCIPY {
            let r = shapiro_wilk(x, 0.05).unwrap();
            assert!((r.statistic - w).abs() < 1e-5, "W {} vs {w}", r.statistic);
            assert!((r.p_value - p).abs() < 1e-3 * p.max(0.01), "p {} vs {p}", r.p_value);
        }
    }

    #[test]
    fn outlier_is_rejected() {
        let r = shapiro_wilk(&[1.0, 1.0, 1.0, 1.0, 10.0], 0.05).unwrap();
        assert_eq!(r.decision, Decision::RejectNormality);
    }

    #[test]
    fn normal_quantiles_are_near_perfect() {
        let n = 50;
        let q: Vec<f64> = (1..=n)
            .map(|i| stats::normal_quantile((i as f64 - 0.375) / (n as f64 + 0.25)))
            .collect();
        let sw = shapiro_wilk(&q, 0.05).unwrap();
        assert!(sw.statistic > 0.99);
        let rj = ryan_joiner(&q, 0.05).unwrap();
        assert!(rj.statistic >= 0.999);
        assert_eq!(rj.decision, Decision::FailToReject);
        assert_eq!(rj.p_bound, PValueBound::AtLeast);
        assert_eq!(rj.p_display(), ">.100");
    }

    #[test]
    fn size_and_degeneracy_errors() {
        assert!(matches!(
            ryan_joiner(&[1.0, 2.0, 3.0], 0.05),
            Err(NormalityError::UnsupportedSize { n: 3, .. })
        ));
        assert!(matches!(
            shapiro_wilk(&[1.0, 2.0], 0.05),
            Err(NormalityError::UnsupportedSize { n: 2, .. })
        ));
        assert_eq!(shapiro_wilk(&[2.0; 6], 0.05), Err(NormalityError::Degenerate));
        assert_eq!(ryan_joiner(&[2.0; 6], 0.05), Err(NormalityError::Degenerate));
        assert_eq!(ryan_joiner(&[1.0, 2.0, 3.0, 4.0], 0.2), Err(NormalityError::InvalidAlpha(0.2)));
    }

    #[test]
    fn uniform_sample_fails_ryan_joiner() {
        // Null 5% critical value of r at n = 200 by simulation, compared with
        // the closed-form approximation, then the decision on a uniform draw.
        let n = 200;
        let mut rng = crate::rng::stream(2024, 0, 0);
        let scores: Vec<f64> = (1..=n)
            .map(|i| stats::normal_quantile((i as f64 - 0.375) / (n as f64 + 0.25)))
            .collect();
        let mut rs: Vec<f64> = (0..4000)
            .map(|_| {
                let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                stats::pearson(&stats::sorted(&x), &scores)
            })
            .collect();
        rs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let simulated = rs[200];
        assert!((simulated - ryan_joiner_critical(n)[1]).abs() < 0.002);

        let u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let r = ryan_joiner(&u, 0.05).unwrap();
        assert!(r.statistic < simulated);
        assert_eq!(r.decision, Decision::RejectNormality);
    }
}
