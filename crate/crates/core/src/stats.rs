//! Small summary-statistics helpers shared by the estimators.

use serde::{Deserialize, Serialize};

/// 97.5% standard normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Sample mean with a normal-approximation 95% interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator); 0 for `n < 2`.
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n >= 2 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let half = Z95 * sd / (n as f64).sqrt();
        Some(Summary {
            count: n,
            mean,
            sd,
            ci_low: mean - half,
            ci_high: mean + half,
        })
    }

    pub fn half_width(&self) -> f64 {
        (self.ci_high - self.ci_low) / 2.0
    }

    pub fn overlaps(&self, other: &Summary) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

/// Proportion with a Wilson score 95% interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Proportion {
    pub fn new(successes: u64, trials: u64) -> Self {
        assert!(successes <= trials);
        if trials == 0 {
            return Proportion {
                successes,
                trials,
                estimate: f64::NAN,
                ci_low: 0.0,
                ci_high: 1.0,
            };
        }
        let n = trials as f64;
        let p = successes as f64 / n;
        let z2 = Z95 * Z95;
        let denom = 1.0 + z2 / n;
        let center = (p + z2 / (2.0 * n)) / denom;
        let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
        Proportion {
            successes,
            trials,
            estimate: p,
            ci_low: if successes == 0 { 0.0 } else { (center - half).max(0.0) },
            ci_high: if successes == trials { 1.0 } else { (center + half).min(1.0) },
        }
    }

    /// Standard deviation of the frequency under probability `p`.
    pub fn binomial_sigma(p: f64, trials: u64) -> f64 {
        (p * (1.0 - p) / trials as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_constant_has_zero_width() {
        let s = Summary::of(&[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.half_width(), 0.0);
        assert!(Summary::of(&[]).is_none());
    }

    #[test]
    fn summary_known_values() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((s.sd - 1.290_994_448_735_805_6).abs() < 1e-12);
        assert!((s.half_width() - Z95 * s.sd / 2.0).abs() < 1e-12);
    }

    #[test]
    fn wilson_interval_contains_estimate() {
        for (k, n) in [(0, 10), (5, 10), (10, 10), (37, 200)] {
            let p = Proportion::new(k, n);
            assert!(p.ci_low <= p.estimate && p.estimate <= p.ci_high);
            assert!(p.ci_low >= 0.0 && p.ci_high <= 1.0);
        }
        // the reference value for 5/10
        let p = Proportion::new(5, 10);
        assert!((p.ci_low - 0.236_593).abs() < 1e-5);
    }
}
