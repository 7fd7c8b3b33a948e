//! Estimators and distribution tests used by the experiments.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, Result};

/// Minimum expected count per pooled bin.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Number of bins after pooling.
    pub bins: usize,
}

fn chi_square_p(statistic: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    ChiSquared::new(dof as f64).map(|c| c.sf(statistic)).unwrap_or(f64::NAN)
}

/// Merges adjacent bins left to right until `ready` holds for the accumulated
/// bin; a short remainder is folded into the last pooled bin.
fn pool<T: Copy + Default + std::ops::AddAssign>(
    rows: impl Iterator<Item = T>,
    ready: impl Fn(&T) -> bool,
) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    let mut acc = T::default();
    let mut open = false;
    for r in rows {
        acc += r;
        open = true;
        if ready(&acc) {
            out.push(acc);
            acc = T::default();
            open = false;
        }
    }
    if open {
        match out.last_mut() {
            Some(last) => *last += acc,
            None => out.push(acc),
        }
    }
    out
}

#[derive(Clone, Copy, Default)]
struct Pair(f64, f64);

impl std::ops::AddAssign for Pair {
    fn add_assign(&mut self, o: Self) {
        self.0 += o.0;
        self.1 += o.1;
    }
}

/// Pearson goodness of fit of observed counts against expected counts.
pub fn chi_square_gof(observed: &[u64], expected: &[f64]) -> Result<ChiSquareReport> {
    if observed.len() != expected.len() || observed.is_empty() {
        return Err(invalid("observed and expected counts must be non-empty and of equal length"));
    }
    if expected.iter().any(|&e| !(e >= 0.0)) {
        return Err(invalid("expected counts must be non-negative"));
    }
    let rows = observed.iter().zip(expected).map(|(&o, &e)| Pair(o as f64, e));
    let pooled = pool(rows, |p| p.1 >= MIN_EXPECTED);
    let statistic = pooled
        .iter()
        .filter(|p| p.1 > 0.0)
        .map(|p| (p.0 - p.1).powi(2) / p.1)
        .sum();
    let dof = pooled.len() - 1;
    Ok(ChiSquareReport { statistic, dof, p_value: chi_square_p(statistic, dof), bins: pooled.len() })
}

/// Homogeneity test of two histograms over the same support.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> Result<ChiSquareReport> {
    let len = a.len().max(b.len());
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    if na == 0 || nb == 0 {
        return Err(invalid("both samples must be non-empty"));
    }
    let (na, nb) = (na as f64, nb as f64);
    let share = na / (na + nb);
    let at = |h: &[u64], i: usize| h.get(i).copied().unwrap_or(0) as f64;
    let rows = (0..len).map(|i| Pair(at(a, i), at(b, i)));
    let pooled = pool(rows, |p| {
        let total = p.0 + p.1;
        (total * share).min(total * (1.0 - share)) >= MIN_EXPECTED
    });
    let (ra, rb) = ((nb / na).sqrt(), (na / nb).sqrt());
    let statistic = pooled
        .iter()
        .filter(|p| p.0 + p.1 > 0.0)
        .map(|p| (ra * p.0 - rb * p.1).powi(2) / (p.0 + p.1))
        .sum();
    let dof = pooled.len() - 1;
    Ok(ChiSquareReport { statistic, dof, p_value: chi_square_p(statistic, dof), bins: pooled.len() })
}

/// Counts of each value `0..=max`.
pub fn histogram(values: &[u64]) -> Vec<u64> {
    let top = values.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut h = vec![0u64; top];
    for &v in values {
        h[v as usize] += 1;
    }
    h
}

/// Dvoretzky–Kiefer–Wolfowitz radius `sqrt(ln(2/δ) / (2N))`.
pub fn dkw_epsilon(n: usize, delta: f64) -> f64 {
    ((2.0 / delta).ln() / (2.0 * n as f64)).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DkwReport {
    pub sup_deviation: f64,
    pub epsilon: f64,
    pub pass: bool,
}

/// Sup distance between the empirical CDF of integer samples and `cdf(x) = P(X <= x)`.
pub fn dkw_test(samples: &[u64], cdf: impl Fn(u64) -> f64, delta: f64) -> Result<DkwReport> {
    if samples.is_empty() {
        return Err(invalid("no samples"));
    }
    let h = histogram(samples);
    let n = samples.len() as f64;
    let mut below = 0u64;
    let mut sup = 0f64;
    for (x, &c) in h.iter().enumerate() {
        below += c;
        sup = sup.max((below as f64 / n - cdf(x as u64)).abs());
    }
    let epsilon = dkw_epsilon(samples.len(), delta);
    Ok(DkwReport { sup_deviation: sup, epsilon, pass: sup <= epsilon })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    /// Sample variance with the `n - 1` divisor (0 for a single value).
    pub variance: f64,
    pub se: f64,
}

pub fn moments(xs: &[f64]) -> Moments {
    let count = xs.len();
    if count == 0 {
        return Moments { count, mean: f64::NAN, variance: f64::NAN, se: f64::NAN };
    }
    let mean = xs.iter().sum::<f64>() / count as f64;
    let variance = if count > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64
    } else {
        0.0
    };
    Moments { count, mean, variance, se: (variance / count as f64).sqrt() }
}

pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let m = moments(xs);
    (m.mean, m.se)
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Propagated from the standard errors of the fitted points.
    pub se: f64,
}

/// Ordinary least squares of `ys` on `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64], ses: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() || xs.len() != ses.len() || xs.len() < 2 {
        return Err(invalid("slope fit needs at least two points with matching errors"));
    }
    let n = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("slope fit needs distinct abscissae"));
    }
    let weights: Vec<f64> = xs.iter().map(|x| (x - xbar) / sxx).collect();
    let slope: f64 = weights.iter().zip(ys).map(|(c, y)| c * y).sum();
    let se = weights.iter().zip(ses).map(|(c, s)| (c * s).powi(2)).sum::<f64>().sqrt();
    Ok(SlopeFit { slope, intercept: ybar - slope * xbar, se })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::{geometric_max_cdf, sample_geometric};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pooling_merges_small_bins() {
        let r = chi_square_gof(&[3, 3, 3, 3, 100], &[3.0, 3.0, 3.0, 3.0, 100.0]).unwrap();
        assert_eq!(r.bins, 3);
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        let r = chi_square_gof(&[1], &[1.0]).unwrap();
        assert_eq!((r.bins, r.dof, r.p_value), (1, 0, 1.0));
        assert!(chi_square_gof(&[1, 2], &[1.0]).is_err());
    }

    #[test]
    fn gof_reference_value() {
        // 2 bins, (60-50)^2/50 * 2 = 4, P(chi2_1 > 4) = 0.0455
        let r = chi_square_gof(&[60, 40], &[50.0, 50.0]).unwrap();
        assert!((r.statistic - 4.0).abs() < 1e-12);
        assert!((r.p_value - 0.04550026389635842).abs() < 1e-9);
    }

    #[test]
    fn two_sample_equal_sizes_matches_textbook() {
        // equal sizes: sum (a-b)^2/(a+b)
        let r = chi_square_two_sample(&[30, 70], &[50, 50]).unwrap();
        let want = 400.0 / 80.0 + 400.0 / 120.0;
        assert!((r.statistic - want).abs() < 1e-12);
        assert_eq!(r.dof, 1);
        let same = chi_square_two_sample(&[10, 20, 30], &[20, 40, 60]).unwrap();
        assert!(same.statistic.abs() < 1e-12);
    }

    #[test]
    fn two_sample_calibration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut rejections = 0;
        for _ in 0..200 {
            let a: Vec<u64> = (0..2000).map(|_| sample_geometric(&mut rng) as u64).collect();
            let b: Vec<u64> = (0..3000).map(|_| sample_geometric(&mut rng) as u64).collect();
            let r = chi_square_two_sample(&histogram(&a), &histogram(&b)).unwrap();
            if r.p_value < 0.01 {
                rejections += 1;
            }
        }
        assert!(rejections <= 8, "{rejections} rejections out of 200");
    }

    #[test]
    fn dkw_calibration() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let runs = 300;
        let passes = (0..runs)
            .filter(|_| {
                let s: Vec<u64> = (0..2000).map(|_| rng.random_range(0..10u64)).collect();
                dkw_test(&s, |x| ((x + 1) as f64 / 10.0).min(1.0), 0.01).unwrap().pass
            })
            .count();
        assert!(passes as f64 >= 0.99 * runs as f64, "{passes}/{runs}");
    }

    #[test]
    fn dkw_identity_and_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let s: Vec<u64> = (0..100_000).map(|_| sample_geometric(&mut rng) as u64).collect();
        // P(V <= x) = P(V < x + 1)
        let k1 = |x: u64| geometric_max_cdf(1, x as u32 + 1);
        let k2 = |x: u64| geometric_max_cdf(2, x as u32 + 1);
        assert!(dkw_test(&s, k1, 0.01).unwrap().pass);
        assert!(!dkw_test(&s, k2, 0.01).unwrap().pass);
    }

    #[test]
    fn moments_and_intervals() {
        let m = moments(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.variance - 5.0 / 3.0).abs() < 1e-15);
        assert!((m.se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert_eq!(moments(&[7.0]).variance, 0.0);
        let (lo, hi) = wilson_interval(0, 100, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
        let (lo, hi) = wilson_interval(50, 100, 1.96);
        assert!(lo < 0.5 && hi > 0.5 && (0.5 - lo - (hi - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn se_scales_with_trials() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut draw = |n: usize| -> f64 {
            let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            moments(&xs).se
        };
        let ratio = draw(10_000) / draw(40_000);
        assert!((ratio - 2.0).abs() <= 0.4, "ratio {ratio}");
    }

    #[test]
    fn slope_exact_line() {
        let f = ols_slope(&[1.0, 2.0, 3.0], &[2.5, 3.0, 3.5], &[0.1, 0.1, 0.1]).unwrap();
        assert!((f.slope - 0.5).abs() < 1e-15);
        assert!((f.intercept - 2.0).abs() < 1e-15);
        assert!((f.se - 0.1 / 2f64.sqrt()).abs() < 1e-15);
        assert!(ols_slope(&[1.0, 1.0], &[0.0, 1.0], &[0.0, 0.0]).is_err());
    }
}
