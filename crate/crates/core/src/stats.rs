//! Statistical test helpers for the Monte Carlo verification suites:
//! sample moments with standard errors, one- and two-sample
//! Kolmogorov–Smirnov tests, chi-square goodness-of-fit and
//! independence tests, and a zero-correlation z-test.

use statrs::function::gamma::gamma_ur;

/// Sample mean, standard error of the mean, and z-score against a target.
#[derive(Debug, Clone, Copy)]
pub struct MeanSe {
    pub n: usize,
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        assert!(n >= 2, "need at least two samples");
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
        MeanSe { n, mean, se: (var / n as f64).sqrt() }
    }

    /// (mean - target) / se; infinite if se is zero and mean != target.
    pub fn z_against(&self, target: f64) -> f64 {
        if self.se == 0.0 {
            if self.mean == target {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - target) / self.se
        }
    }
}

/// z-score for the difference of two independent sample means.
pub fn z_mean_difference(a: &MeanSe, b: &MeanSe) -> f64 {
    let se = (a.se * a.se + b.se * b.se).sqrt();
    if se == 0.0 {
        0.0
    } else {
        (a.mean - b.mean) / se
    }
}

/// Survival function of the Kolmogorov distribution,
/// Q(lambda) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lambda^2).
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample KS test of `samples` against the CDF closure.
/// Uses the Stephens small-sample correction on the asymptotic
/// Kolmogorov distribution, accurate for n in the hundreds and up.
pub fn ks_test_cdf(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("NaN in KS samples"));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let c = cdf(*x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((c - lo).abs()).max((hi - c).abs());
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    KsResult { statistic: d, p_value: kolmogorov_sf(lambda) }
}

/// Two-sample KS test.
pub fn ks_test_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).expect("NaN in KS samples"));
    ys.sort_by(|p, q| p.partial_cmp(q).expect("NaN in KS samples"));
    let (n, m) = (xs.len(), ys.len());
    let mut i = 0;
    let mut j = 0;
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = xs[i];
        let y = ys[j];
        if x <= y {
            i += 1;
        }
        if y <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n as f64 * m as f64) / (n as f64 + m as f64);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    KsResult { statistic: d, p_value: kolmogorov_sf(lambda) }
}

#[derive(Debug, Clone, Copy)]
pub struct Chi2Result {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

fn chi2_sf(x: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    gamma_ur(dof as f64 / 2.0, x / 2.0)
}

/// Goodness-of-fit chi-square of observed counts against expected
/// probabilities (renormalised to the observed total).
pub fn chi2_gof(observed: &[u64], expected_probs: &[f64]) -> Chi2Result {
    assert_eq!(observed.len(), expected_probs.len());
    let total: u64 = observed.iter().sum();
    let psum: f64 = expected_probs.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&o, &p) in observed.iter().zip(expected_probs) {
        let e = total as f64 * p / psum;
        if e > 0.0 {
            stat += (o as f64 - e) * (o as f64 - e) / e;
            cells += 1;
        } else if o > 0 {
            stat += f64::INFINITY;
        }
    }
    let dof = cells.saturating_sub(1);
    Chi2Result { statistic: stat, dof, p_value: chi2_sf(stat, dof) }
}

/// Chi-square independence test on a contingency table (rows x cols).
pub fn chi2_independence(table: &[Vec<u64>]) -> Chi2Result {
    let rows = table.len();
    let cols = table[0].len();
    let row_sums: Vec<f64> = table.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let col_sums: Vec<f64> =
        (0..cols).map(|j| table.iter().map(|r| r[j]).sum::<u64>() as f64).collect();
    let total: f64 = row_sums.iter().sum();
    let mut stat = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let e = row_sums[i] * col_sums[j] / total;
            if e > 0.0 {
                let o = table[i][j] as f64;
                stat += (o - e) * (o - e) / e;
            }
        }
    }
    let dof = (rows - 1) * (cols - 1);
    Chi2Result { statistic: stat, dof, p_value: chi2_sf(stat, dof) }
}

/// Pearson correlation with the z-score against zero correlation
/// (standard error 1/sqrt(n) under independence).
pub fn correlation_z(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    let r = sxy / (sxx * syy).sqrt();
    (r, r * n.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::replicate_rng;
    use rand::Rng;

    #[test]
    fn ks_accepts_uniform_and_rejects_shifted() {
        let mut rng = replicate_rng(1, "stats-ks", 0);
        let xs: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        let ok = ks_test_cdf(&xs, |x| x.clamp(0.0, 1.0));
        assert!(ok.p_value > 0.01, "p = {}", ok.p_value);
        let bad = ks_test_cdf(&xs, |x| (x * x).clamp(0.0, 1.0));
        assert!(bad.p_value < 1e-6);
    }

    #[test]
    fn two_sample_ks_on_same_distribution() {
        let mut rng = replicate_rng(2, "stats-ks2", 0);
        let xs: Vec<f64> = (0..3000).map(|_| rng.random::<f64>()).collect();
        let ys: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
        let r = ks_test_two_sample(&xs, &ys);
        assert!(r.p_value > 0.01, "p = {}", r.p_value);
    }

    #[test]
    fn chi2_uniform_counts() {
        let mut rng = replicate_rng(3, "stats-chi2", 0);
        let mut counts = [0u64; 10];
        for _ in 0..10000 {
            counts[rng.random_range(0..10)] += 1;
        }
        let r = chi2_gof(&counts, &[0.1; 10]);
        assert!(r.p_value > 0.001, "p = {}", r.p_value);
        let skewed = chi2_gof(&counts, &[0.2, 0.2, 0.2, 0.1, 0.1, 0.05, 0.05, 0.04, 0.03, 0.03]);
        assert!(skewed.p_value < 1e-9);
    }

    #[test]
    fn correlation_of_independent_streams_is_small() {
        let mut rng = replicate_rng(4, "stats-corr", 0);
        let xs: Vec<f64> = (0..20000).map(|_| rng.random::<f64>()).collect();
        let ys: Vec<f64> = (0..20000).map(|_| rng.random::<f64>()).collect();
        let (r, z) = correlation_z(&xs, &ys);
        assert!(r.abs() < 0.05);
        assert!(z.abs() < 4.0);
    }

    #[test]
    fn mean_se_basics() {
        let m = MeanSe::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m.mean - 2.5).abs() < 1e-12);
        assert!((m.se - (5.0f64 / 12.0).sqrt()).abs() < 1e-12);
        assert!(m.z_against(2.5).abs() < 1e-12);
    }
}
