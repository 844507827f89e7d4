//! Sample statistics and goodness-of-fit tests used to check Monte Carlo
//! output against closed forms.

use statrs::distribution::{ContinuousCDF, Normal};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Asymptotic Kolmogorov critical coefficient at α = 0.01.
pub const KS_C_ALPHA_01: f64 = 1.627_6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// Standard error of the mean.
    pub mean_se: f64,
    /// Standard error of the sample variance, `sqrt((m4 - s^4) / n)`.
    pub variance_se: f64,
    /// Excess kurtosis `m4 / m2² - 3`.
    pub excess_kurtosis: f64,
    /// Delta-method standard error of the excess kurtosis.
    pub kurtosis_se: f64,
}

pub fn moments(xs: &[f64]) -> Moments {
    let n = xs.len();
    assert!(n >= 2, "need at least two samples");
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let variance = m2 / (nf - 1.0);
    let m2n = m2 / nf;
    let m3n = m3 / nf;
    let m4n = m4 / nf;
    // influence function of m4 / m2²
    let (mut s1, mut s2) = (0.0, 0.0);
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        let inf = (d2 * d2 - m4n) / (m2n * m2n) - 2.0 * m4n * (d2 - m2n) / (m2n * m2n * m2n) - 4.0 * m3n * d / (m2n * m2n);
        s1 += inf;
        s2 += inf * inf;
    }
    let inf_var = (s2 / nf - (s1 / nf).powi(2)).max(0.0);
    Moments {
        n,
        mean,
        variance,
        mean_se: (variance / nf).sqrt(),
        variance_se: ((m4n - m2n * m2n).max(0.0) / nf).sqrt(),
        excess_kurtosis: m4n / (m2n * m2n) - 3.0,
        kurtosis_se: (inf_var / nf).sqrt(),
    }
}

/// Sample covariance of paired draws together with its standard error,
/// estimated from the variance of the centred products.
pub fn covariance(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let prods: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let m = moments(&prods);
    (m.mean * n / (n - 1.0), m.mean_se)
}

pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    sxy / (sxx * syy).sqrt()
}

/// Kolmogorov–Smirnov distance between the empirical CDF of `xs` and
/// `N(mean, sd²)`.
pub fn ks_normal(xs: &[f64], mean: f64, sd: f64) -> f64 {
    let normal = Normal::new(mean, sd).expect("valid normal parameters");
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// KS distance of the standardized sample against `N(0, 1)`.
pub fn ks_standardized(xs: &[f64]) -> f64 {
    let m = moments(xs);
    ks_normal(xs, m.mean, m.variance.sqrt())
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// One-sample KS critical distance at α = 0.01.
pub fn ks_critical(n: usize) -> f64 {
    KS_C_ALPHA_01 / (n as f64).sqrt()
}

/// Two-sample KS critical distance at α = 0.01.
pub fn ks_critical_two_sample(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    KS_C_ALPHA_01 * ((n + m) / (n * m)).sqrt()
}

/// Linear-interpolation quantile of an already sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_of_small_sample() {
        let m = moments(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.variance - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn kurtosis_se_matches_gaussian_asymptote() {
        let mut rng = crate::RngStream::new(3, 0).rng();
        let xs = crate::rng::standard_normals(&mut rng, 200_000);
        let m = moments(&xs);
        let want = (24.0 / 200_000f64).sqrt();
        assert!((m.kurtosis_se / want - 1.0).abs() < 0.05, "{} vs {want}", m.kurtosis_se);
        assert!(m.excess_kurtosis.abs() < 4.0 * want);
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(quantile_sorted(&v, 0.0), 0.0);
        assert_eq!(quantile_sorted(&v, 1.0), 3.0);
        assert!((quantile_sorted(&v, 0.5) - 1.5).abs() < 1e-15);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn ks_distances() {
        // uniform grid quantiles of N(0,1) have KS distance 1/(2n)
        let n = 1000;
        let normal = Normal::new(0.0, 1.0).unwrap();
        let xs: Vec<f64> = (0..n)
            .map(|i| normal.inverse_cdf((i as f64 + 0.5) / n as f64))
            .collect();
        assert!((ks_normal(&xs, 0.0, 1.0) - 0.5 / n as f64).abs() < 1e-9);
        assert_eq!(ks_two_sample(&xs, &xs), 0.0);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 10.0).collect();
        assert_eq!(ks_two_sample(&xs, &shifted), 1.0);
    }

    #[test]
    fn correlation_of_linear_data() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| -2.0 * x + 1.0).collect();
        assert!((correlation(&xs, &ys) + 1.0).abs() < 1e-14);
        let (c, _) = covariance(&xs, &xs);
        assert!((c - moments(&xs).variance).abs() < 1e-12);
    }
}
