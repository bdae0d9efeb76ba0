//! Confidence intervals, a one-sample KS normality test, and the concentration
//! bounds used by the probes.

use serde::Serialize;
use statrs::function::erf::erfc;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("all weights are zero")]
    DegenerateWeights,
    #[error("argument out of domain: {0}")]
    Domain(&'static str),
}

/// Two-sided normal-approximation confidence levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConfidenceLevel {
    P95,
    P99,
}

impl ConfidenceLevel {
    /// Standard normal quantile `z` with `P(|Z| <= z)` equal to the level.
    pub fn z(self) -> f64 {
        match self {
            Self::P95 => 1.959_963_984_540_054,
            Self::P99 => 2.575_829_303_548_900_4,
        }
    }
}

impl TryFrom<f64> for ConfidenceLevel {
    type Error = StatsError;

    fn try_from(level: f64) -> Result<Self, StatsError> {
        if level == 0.95 {
            Ok(Self::P95)
        } else if level == 0.99 {
            Ok(Self::P99)
        } else {
            Err(StatsError::Domain("confidence level must be 0.95 or 0.99"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance (0 for a single sample).
    pub variance: f64,
    pub min: f64,
    pub max: f64,
}

impl SampleSummary {
    pub fn from_slice(samples: &[f64]) -> Result<Self, StatsError> {
        if samples.is_empty() {
            return Err(StatsError::TooFewSamples { needed: 1, got: 0 });
        }
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let ss: f64 = samples.iter().map(|x| (x - mean).powi(2)).sum();
        let variance = if n > 1 { ss / (n - 1) as f64 } else { 0.0 };
        let (min, max) = samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        Ok(Self {
            n,
            mean,
            variance,
            min,
            max,
        })
    }

    pub fn std_error(&self) -> f64 {
        (self.variance / self.n as f64).sqrt()
    }
}

/// Sample mean and CI half-width `z s / sqrt(n)`.
pub fn mean_ci(samples: &[f64], level: ConfidenceLevel) -> Result<(f64, f64), StatsError> {
    if samples.len() < 2 {
        return Err(StatsError::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let summary = SampleSummary::from_slice(samples)?;
    Ok((summary.mean, level.z() * summary.std_error()))
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `P(K > x)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.18 {
        // Small-argument theta-function form of the CDF.
        let pi = std::f64::consts::PI;
        let a = -pi * pi / (8.0 * x * x);
        let cdf: f64 = (1..=20)
            .map(|k| {
                let odd = f64::from(2 * k - 1);
                (a * odd * odd).exp()
            })
            .sum::<f64>()
            * (2.0 * pi).sqrt()
            / x;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let tail: f64 = (1..=100)
            .map(|k| {
                let k = f64::from(k);
                let sign = if k as u32 % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * k * k * x * x).exp()
            })
            .sum();
        (2.0 * tail).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov-Smirnov test against the standard normal.
///
/// The p-value is the asymptotic Kolmogorov tail evaluated at Stephens'
/// finite-sample scaling `(sqrt(n) + 0.12 + 0.11 / sqrt(n)) D`.
pub fn ks_normal(samples: &[f64]) -> Result<KsResult, StatsError> {
    const MIN_SAMPLES: usize = 20;
    if samples.len() < MIN_SAMPLES {
        return Err(StatsError::TooFewSamples {
            needed: MIN_SAMPLES,
            got: samples.len(),
        });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let statistic = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = normal_cdf(x);
            let below = cdf - i as f64 / n;
            let above = (i + 1) as f64 / n - cdf;
            below.max(above)
        })
        .fold(0.0, f64::max);
    let root = n.sqrt();
    let p_value = kolmogorov_survival((root + 0.12 + 0.11 / root) * statistic);
    Ok(KsResult { statistic, p_value })
}

/// `2 exp(-t^2 / (2 sum b_j^2))`: tail bound for `|sum b_j zeta_j| > t` with
/// i.i.d. centred `|zeta_j| <= 1`.
pub fn hoeffding_bound(weights: &[f64], threshold: f64) -> Result<f64, StatsError> {
    if !(threshold > 0.0) {
        return Err(StatsError::Domain("threshold must be positive"));
    }
    let sum_sq: f64 = weights.iter().map(|b| b * b).sum();
    if sum_sq == 0.0 {
        return Err(StatsError::DegenerateWeights);
    }
    Ok(2.0 * (-threshold * threshold / (2.0 * sum_sq)).exp())
}

/// `sqrt(2 pi s2) exp(-delta^2 / (2 s2))`, dominating `int_delta^inf exp(-x^2 / (2 s2)) dx`.
pub fn gaussian_tail_bound(delta: f64, variance: f64) -> Result<f64, StatsError> {
    if !(delta > 0.0) || !(variance > 0.0) {
        return Err(StatsError::Domain("delta and variance must be positive"));
    }
    Ok((2.0 * std::f64::consts::PI * variance).sqrt() * (-delta * delta / (2.0 * variance)).exp())
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, trials: usize, level: ConfidenceLevel) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z = level.z();
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::{derive_stream, SeedSpec};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    /// Composite Simpson rule on `[a, b]` with `n` (even) panels.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let inner: f64 = (1..n)
            .map(|i| {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                w * f(a + i as f64 * h)
            })
            .sum();
        (f(a) + f(b) + inner) * h / 3.0
    }

    fn gaussian_tail_quadrature(delta: f64, variance: f64) -> f64 {
        let upper = delta + 40.0 * variance.sqrt();
        simpson(|x| (-x * x / (2.0 * variance)).exp(), delta, upper, 20_000)
    }

    #[test]
    fn mean_ci_examples() {
        let (m, half) = mean_ci(&[3.0; 10], ConfidenceLevel::P99).unwrap();
        assert_eq!((m, half), (3.0, 0.0));
        assert_eq!(
            mean_ci(&[1.0], ConfidenceLevel::P95),
            Err(StatsError::TooFewSamples { needed: 2, got: 1 })
        );
        assert!(ConfidenceLevel::try_from(0.9).is_err());
        assert_eq!(ConfidenceLevel::try_from(0.99), Ok(ConfidenceLevel::P99));
    }

    #[test]
    fn fair_coin_mean_within_band() {
        // Binomial(10^4, 1/2)/10^4 has sd 0.005; 0.015 is three of them.
        let mut rng = derive_stream(&SeedSpec::new(11, 0));
        let coins: Vec<f64> = (0..10_000)
            .map(|_| f64::from(u8::from(rng.random::<bool>())))
            .collect();
        let (mean, half) = mean_ci(&coins, ConfidenceLevel::P99).unwrap();
        assert!((mean - 0.5).abs() < 0.015);
        assert!((half - 2.5758 * 0.005).abs() < 1e-3);
    }

    #[test]
    fn summary_fields() {
        let s = SampleSummary::from_slice(&[1.0, 2.0, 3.0, 6.0]).unwrap();
        assert_eq!(s.n, 4);
        assert_eq!(s.mean, 3.0);
        assert!((s.variance - 14.0 / 3.0).abs() < 1e-12);
        assert_eq!((s.min, s.max), (1.0, 6.0));
    }

    #[test]
    fn kolmogorov_branches_agree() {
        // Both series converge near the switch point; compare them there.
        for x in [0.9, 1.0, 1.18, 1.3] {
            let theta = {
                let pi = std::f64::consts::PI;
                1.0 - (1..=20)
                    .map(|k| (-(f64::from(2 * k - 1)).powi(2) * pi * pi / (8.0 * x * x)).exp())
                    .sum::<f64>()
                    * (2.0 * pi).sqrt()
                    / x
            };
            let alternating = 2.0
                * (1..=100)
                    .map(|k| {
                        let k = f64::from(k);
                        (if k as u32 % 2 == 1 { 1.0 } else { -1.0 }) * (-2.0 * k * k * x * x).exp()
                    })
                    .sum::<f64>();
            assert!((theta - alternating).abs() < 1e-12, "{x}: {theta} vs {alternating}");
        }
        // Tabulated critical values of the Kolmogorov distribution.
        assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_survival(1.6276) - 0.01).abs() < 1e-4);
    }

    #[test]
    fn ks_accepts_normals_and_rejects_uniforms() {
        let mut rng = derive_stream(&SeedSpec::new(5, 1));
        let normals: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let res = ks_normal(&normals).unwrap();
        assert!(res.p_value > 0.01, "{res:?}");

        let uniforms: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        assert!(ks_normal(&uniforms).unwrap().p_value < 1e-6);

        assert_eq!(
            ks_normal(&[0.0; 5]),
            Err(StatsError::TooFewSamples { needed: 20, got: 5 })
        );
    }

    #[test]
    fn ks_p_values_are_uniform_under_null() {
        let mut rng = derive_stream(&SeedSpec::new(0xC0FFEE, 2));
        let reps = 2000;
        let mut deciles = [0usize; 10];
        for _ in 0..reps {
            let sample: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut rng)).collect();
            let p = ks_normal(&sample).unwrap().p_value;
            deciles[((p * 10.0) as usize).min(9)] += 1;
        }
        let expected = reps as f64 / 10.0;
        let stat: f64 = deciles
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        let critical = ChiSquared::new(9.0).unwrap().inverse_cdf(0.999);
        assert!(stat < critical, "deciles {deciles:?}, chi2 {stat}");
    }

    #[test]
    fn hoeffding_examples() {
        let b = vec![1.0; 100];
        assert!((hoeffding_bound(&b, 20.0).unwrap() - 2.0 * (-2.0f64).exp()).abs() < 1e-15);
        assert!((hoeffding_bound(&b, 1e-9).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(hoeffding_bound(&[0.0, 0.0], 1.0), Err(StatsError::DegenerateWeights));
    }

    #[test]
    fn hoeffding_dominates_empirical_exceedance() {
        let mut rng = derive_stream(&SeedSpec::new(0xBEEF, 3));
        let draws = 100_000;
        for _ in 0..20 {
            let n = rng.random_range(2..12);
            let weights: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = weights.iter().map(|b| b * b).sum::<f64>().sqrt();
            let threshold = rng.random_range(0.5..2.5) * norm;
            let bound = hoeffding_bound(&weights, threshold).unwrap();
            let exceed = (0..draws)
                .filter(|_| {
                    let s: f64 = weights
                        .iter()
                        .map(|b| b * if rng.random::<bool>() { 1.0 } else { -1.0 })
                        .sum();
                    s.abs() > threshold
                })
                .count();
            let (lo, _) = wilson_interval(exceed, draws, ConfidenceLevel::P99);
            assert!(lo <= bound, "empirical {exceed}/{draws} above bound {bound}");
        }
    }

    #[test]
    fn gaussian_tail_examples() {
        let b = gaussian_tail_bound(1.0, 1.0).unwrap();
        assert!((b - 1.5203).abs() < 1e-4);
        assert!(gaussian_tail_bound(60.0, 1.0).unwrap() < 1e-300);
        let tail = gaussian_tail_quadrature(2.0, 1.0);
        assert!((tail - 0.0570).abs() < 1e-4);
        let bound = gaussian_tail_bound(2.0, 1.0).unwrap();
        assert!((bound - 0.3392).abs() < 1e-4);
        assert!(tail <= bound);
        assert!(gaussian_tail_bound(0.0, 1.0).is_err());
    }

    #[test]
    fn gaussian_tail_dominates_quadrature() {
        let mut rng = derive_stream(&SeedSpec::new(99, 4));
        for _ in 0..100 {
            let delta = rng.random_range(0.01..5.0);
            let variance = rng.random_range(0.05..4.0);
            let tail = gaussian_tail_quadrature(delta, variance);
            assert!(tail <= gaussian_tail_bound(delta, variance).unwrap() * (1.0 + 1e-9));
        }
    }

    #[test]
    fn wilson_covers_boundaries() {
        let (lo, hi) = wilson_interval(0, 400, ConfidenceLevel::P95);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.01);
        let (lo, hi) = wilson_interval(200, 400, ConfidenceLevel::P95);
        assert!(lo < 0.5 && hi > 0.5);
    }
}
