use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

const MIN_SAMPLES: usize = 8;

/// One-sample Kolmogorov–Smirnov test of `samples` against the standard
/// normal CDF. Returns `(D, p)`.
pub fn ks_statistic(samples: &[f64]) -> Result<(f64, f64)> {
    let normal = Normal::standard();
    ks_against(samples, |t| normal.cdf(t))
}

/// KS test against an arbitrary continuous CDF, with the asymptotic
/// Kolmogorov p-value at the effective size `√n + 0.12 + 0.11/√n`.
pub fn ks_against(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<(f64, f64)> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::domain(format!("KS needs at least {MIN_SAMPLES} samples, got {}", samples.len())));
    }
    if samples.iter().any(|s| s.is_nan()) {
        return Err(Error::domain("KS samples contain NaN"));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).max((i + 1) as f64 / n - c)
        })
        .fold(0.0, f64::max);
    let sn = n.sqrt();
    Ok((d, kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d)))
}

/// `P(K > x)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(x: f64) -> f64 {
    use std::f64::consts::PI;
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.18 {
        // Theta-function form converges fast for small x.
        let mut cdf = 0.0;
        for k in 1..=20 {
            let j = (2 * k - 1) as f64;
            cdf += (-(j * j) * PI * PI / (8.0 * x * x)).exp();
        }
        (1.0 - (2.0 * PI).sqrt() / x * cdf).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        for k in 1..=100 {
            let term = (-2.0 * (k * k) as f64 * x * x).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < 1e-18 {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn survival_known_values() {
        // Standard critical values of the Kolmogorov distribution.
        assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_survival(1.6276) - 0.01).abs() < 1e-4);
        assert!((kolmogorov_survival(0.8276) - 0.5).abs() < 1e-3);
        // Both series agree where they meet.
        let x = 1.18;
        let lo = kolmogorov_survival(x - 1e-12);
        let hi = kolmogorov_survival(x);
        assert!((lo - hi).abs() < 1e-9);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
    }

    #[test]
    fn normal_samples_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (d, p) = ks_statistic(&xs).unwrap();
        assert!(d < 0.03);
        assert!(p >= 0.001);
    }

    #[test]
    fn constant_samples_fail() {
        let (d, p) = ks_statistic(&[5.0; 100]).unwrap();
        assert!(d >= 0.5);
        assert!(p < 1e-10);
    }

    #[test]
    fn short_input_rejected() {
        assert!(ks_statistic(&[]).is_err());
        assert!(ks_statistic(&[0.0; 7]).is_err());
    }
}
