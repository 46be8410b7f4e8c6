//! Poisson sampling of multiplicative jump factors.
//!
//! The jump factors of a fragmenter form a Poisson point process on
//! (0, infinity) x (0, 1) with intensity ds * u f(u) du. The intensity
//! diverges at u -> 1 (small jumps), so simulation truncates factors
//! above 1 - eps and reports the induced bias bound
//! int_(1-eps)^1 (-log u) u f(u) du on discarded log-mass per unit time.
//!
//! Factors are drawn by inverse CDF on a precomputed piecewise-cubic
//! table in substituted coordinates (u = s^2 below 1/2, u = 1 - s^2
//! above), which keeps the table accurate for endpoint-singular
//! densities such as the Brownian one. Panel selection goes through a
//! Walker alias table, so a draw costs O(1).

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use thiserror::Error;

use crate::density::{SplittingDensity, SwitchingFunction};
use crate::quad::{self, QuadError};

/// -log u evaluated from whichever of (u, 1-u) is exact on its side.
#[inline]
pub fn neg_log(u: f64, one_minus_u: f64) -> f64 {
    if u <= 0.5 {
        -u.ln()
    } else {
        -f64::ln_1p(-one_minus_u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpPoint {
    pub time: f64,
    /// Multiplicative factor in (0, 1).
    pub factor: f64,
}

#[derive(Debug, Clone, Error)]
pub enum PointError {
    #[error("truncated intensity m_eps diverges (epsilon too small for this density): {source}")]
    IntensityDiverges { source: QuadError },
    #[error("truncation bias bound diverges: {source}")]
    BiasBoundDiverges { source: QuadError },
    #[error("invalid truncation epsilon {0}; need 0 < eps < 1")]
    BadEpsilon(f64),
    #[error("factor table construction failed on panel [{lo}, {hi}]: {source}")]
    Table { lo: f64, hi: f64, source: QuadError },
}

/// Jumps with factor above 1 - epsilon are discarded; `bias_bound` is
/// the discarded log-mass intensity per unit time, computed by
/// quadrature at construction.
#[derive(Debug, Clone, Copy)]
pub struct TruncationPolicy {
    pub epsilon: f64,
    pub bias_bound: f64,
}

impl TruncationPolicy {
    pub fn new(f: &SplittingDensity, epsilon: f64) -> Result<Self, PointError> {
        if !(0.0 < epsilon && epsilon < 1.0) {
            return Err(PointError::BadEpsilon(epsilon));
        }
        let bias_bound = f
            .integrate_weighted(|u, omu| neg_log(u, omu) * u, 1.0 - epsilon, 1.0)
            .map_err(|source| PointError::BiasBoundDiverges { source })?;
        Ok(TruncationPolicy { epsilon, bias_bound })
    }
}

/// Walker/Vose alias table over nonnegative weights.
#[derive(Debug, Clone)]
struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    fn new(weights: &[f64]) -> AliasTable {
        let n = weights.len();
        let total: f64 = weights.iter().sum();
        let mut prob = vec![0.0f64; n];
        let mut alias = vec![0u32; n];
        if total <= 0.0 {
            return AliasTable { prob, alias };
        }
        let scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut small: Vec<usize> = Vec::with_capacity(n);
        let mut large: Vec<usize> = Vec::with_capacity(n);
        let mut rem = scaled.clone();
        for (i, &s) in scaled.iter().enumerate() {
            if s < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        while let Some(s) = small.pop() {
            match large.pop() {
                Some(l) => {
                    prob[s] = rem[s];
                    alias[s] = l as u32;
                    rem[l] = (rem[l] + rem[s]) - 1.0;
                    if rem[l] < 1.0 {
                        small.push(l);
                    } else {
                        large.push(l);
                    }
                }
                None => {
                    // rounding left this one unpaired; by conservation
                    // its remainder is 1 up to float drift
                    prob[s] = 1.0;
                    alias[s] = s as u32;
                }
            }
        }
        for i in large {
            prob[i] = 1.0;
            alias[i] = i as u32;
        }
        AliasTable { prob, alias }
    }

    #[inline]
    fn sample(&self, rng: &mut impl Rng) -> usize {
        let i = rng.random_range(0..self.prob.len());
        if rng.random::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i] as usize
        }
    }

    /// Selection probability of each index implied by the table;
    /// must reproduce weights/total. Used by construction checks.
    #[cfg(test)]
    fn implied_probs(&self) -> Vec<f64> {
        let n = self.prob.len();
        let mut out = vec![0.0f64; n];
        for i in 0..n {
            out[i] += self.prob[i] / n as f64;
            out[self.alias[i] as usize] += (1.0 - self.prob[i]) / n as f64;
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
enum PanelMap {
    /// u = (s_lo + x h)^2
    Sq,
    /// u = 1 - (s_hi - x h)^2, complement s^2 kept exact
    OneMinusSq,
}

/// One inversion panel: the restricted CDF G on local coordinate
/// x in [0,1] is a monotone Hermite cubic with exact end slopes.
#[derive(Debug, Clone, Copy)]
struct Panel {
    map: PanelMap,
    s_lo: f64,
    s_hi: f64,
    weight: f64,
    d0: f64,
    d1: f64,
}

impl Panel {
    #[inline]
    fn u_of_x(&self, x: f64) -> f64 {
        let h = self.s_hi - self.s_lo;
        match self.map {
            PanelMap::Sq => {
                let s = self.s_lo + x * h;
                s * s
            }
            PanelMap::OneMinusSq => {
                let s = self.s_hi - x * h;
                1.0 - s * s
            }
        }
    }

    #[inline]
    fn hermite(&self, x: f64) -> f64 {
        let x2 = x * x;
        let x3 = x2 * x;
        self.d0 * (x3 - 2.0 * x2 + x) + self.weight * (3.0 * x2 - 2.0 * x3) + self.d1 * (x3 - x2)
    }

    /// Invert H(x) = q by safeguarded Newton.
    fn invert(&self, q: f64) -> f64 {
        let w = self.weight;
        if w <= 0.0 {
            return self.u_of_x(0.5);
        }
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        let mut x = (q / w).clamp(0.0, 1.0);
        for _ in 0..40 {
            let hx = self.hermite(x) - q;
            if hx > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let x2 = x * x;
            let dh = self.d0 * (3.0 * x2 - 4.0 * x + 1.0)
                + w * (6.0 * x - 6.0 * x2)
                + self.d1 * (3.0 * x2 - 2.0 * x);
            let mut next = if dh > 0.0 { x - hx / dh } else { 0.5 * (lo + hi) };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() < 1e-13 {
                x = next;
                break;
            }
            x = next;
        }
        self.u_of_x(x)
    }
}

/// Inverse-CDF sampler for a measure with density g on (lo, hi) within
/// (0, 1). `total` is int g, computed panel by panel at construction.
#[derive(Debug, Clone)]
pub struct FactorSampler {
    panels: Vec<Panel>,
    alias: AliasTable,
    total: f64,
}

pub const FACTOR_TABLE_PANELS: usize = 4096;

impl FactorSampler {
    pub fn new(
        g: &(dyn Fn(f64, f64) -> f64 + Sync),
        lo: f64,
        hi: f64,
    ) -> Result<FactorSampler, PointError> {
        assert!((0.0..=1.0).contains(&lo) && lo <= hi && hi <= 1.0);
        let per_side = FACTOR_TABLE_PANELS / 2;
        let mut panels: Vec<Panel> = Vec::with_capacity(FACTOR_TABLE_PANELS);

        // left half (0, 1/2] in u = s^2 coordinates
        let left_hi = hi.min(0.5);
        if left_hi > lo {
            let s0 = lo.sqrt();
            let s1 = left_hi.sqrt();
            for i in 0..per_side {
                let a = s0 + (s1 - s0) * i as f64 / per_side as f64;
                let b = s0 + (s1 - s0) * (i + 1) as f64 / per_side as f64;
                panels.push(Self::build_panel(g, PanelMap::Sq, a, b)?);
            }
        }
        // right half [1/2, 1) in u = 1 - s^2 coordinates
        let right_lo = lo.max(0.5);
        if hi > right_lo {
            let s1 = (1.0 - right_lo).sqrt();
            let s0 = (1.0 - hi).sqrt();
            // walk u upward, i.e. s downward
            for i in 0..per_side {
                let b = s1 - (s1 - s0) * i as f64 / per_side as f64;
                let a = s1 - (s1 - s0) * (i + 1) as f64 / per_side as f64;
                panels.push(Self::build_panel(g, PanelMap::OneMinusSq, a, b)?);
            }
        }

        let weights: Vec<f64> = panels.iter().map(|p| p.weight).collect();
        let total = weights.iter().sum();
        let alias = AliasTable::new(&weights);
        Ok(FactorSampler { panels, alias, total })
    }

    fn build_panel(
        g: &(dyn Fn(f64, f64) -> f64 + Sync),
        map: PanelMap,
        s_lo: f64,
        s_hi: f64,
    ) -> Result<Panel, PointError> {
        let h = s_hi - s_lo;
        let integrand = |s: f64| g(1.0 - s * s, s * s) * 2.0 * s;
        let integrand_sq = |s: f64| g(s * s, 1.0 - s * s) * 2.0 * s;
        let (value, err_budget) = match map {
            PanelMap::Sq => {
                let first = quad::adaptive_with_budget(&integrand_sq, s_lo, s_hi, f64::INFINITY, 1);
                let est = first.map(|q| q.value.abs()).unwrap_or(1.0);
                (
                    quad::adaptive_with_budget(
                        &integrand_sq,
                        s_lo,
                        s_hi,
                        (est * 1e-10).max(1e-15),
                        256,
                    ),
                    est,
                )
            }
            PanelMap::OneMinusSq => {
                let first = quad::adaptive_with_budget(&integrand, s_lo, s_hi, f64::INFINITY, 1);
                let est = first.map(|q| q.value.abs()).unwrap_or(1.0);
                (
                    quad::adaptive_with_budget(
                        &integrand,
                        s_lo,
                        s_hi,
                        (est * 1e-10).max(1e-15),
                        256,
                    ),
                    est,
                )
            }
        };
        let _ = err_budget;
        let q = value.map_err(|source| {
            let (lo, hi) = match map {
                PanelMap::Sq => (s_lo * s_lo, s_hi * s_hi),
                PanelMap::OneMinusSq => (1.0 - s_hi * s_hi, 1.0 - s_lo * s_lo),
            };
            PointError::Table { lo, hi, source }
        })?;
        let w = q.value.max(0.0);
        // CDF slopes in the local coordinate, evaluated just inside the
        // panel edges (the exact edge may sit on the singular endpoint
        // u = 0 or u = 1), Fritsch-Carlson clamped for monotonicity
        let slope = |x: f64| {
            let (u, omu, duds) = match map {
                PanelMap::Sq => {
                    let s = s_lo + x * h;
                    (s * s, 1.0 - s * s, 2.0 * s * h)
                }
                PanelMap::OneMinusSq => {
                    let s = s_hi - x * h;
                    (1.0 - s * s, s * s, 2.0 * s * h)
                }
            };
            let raw = g(u, omu) * duds;
            if raw.is_finite() {
                raw.max(0.0)
            } else {
                w
            }
        };
        let d0 = slope(1e-9).min(3.0 * w);
        let d1 = slope(1.0 - 1e-9).min(3.0 * w);
        Ok(Panel { map, s_lo, s_hi, weight: w, d0, d1 })
    }

    /// Total mass int g over the table's support.
    pub fn total(&self) -> f64 {
        self.total
    }

    #[inline]
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        let i = self.alias.sample(rng);
        let p = &self.panels[i];
        let q = rng.random::<f64>() * p.weight;
        p.invert(q)
    }

    /// Largest CDF discrepancy between the table (panel sums plus the
    /// in-panel Hermite interpolant at midpoints) and direct adaptive
    /// quadrature, sampled over `checks` panels. Used by tests to hold
    /// the table to its 1e-6 error budget.
    pub fn max_cdf_error(&self, g: &(dyn Fn(f64, f64) -> f64 + Sync)) -> f64 {
        let mut cum = 0.0;
        let mut worst: f64 = 0.0;
        let stride = (self.panels.len() / 64).max(1);
        let u_start = self.panels.first().map(|p| p.u_of_x(0.0)).unwrap_or(0.0);
        let tol = (1e-9 * self.total.abs()).max(1e-12);
        for (i, p) in self.panels.iter().enumerate() {
            if i % stride == 0 && p.weight > 0.0 {
                let u_mid = p.u_of_x(0.5);
                let table_cdf = cum + p.hermite(0.5);
                let direct = quad::integrate_unit(g, u_start, u_mid, true, true, tol)
                    .map(|q| q.value)
                    .unwrap_or(f64::NAN);
                worst = worst.max((table_cdf - direct).abs());
            }
            cum += p.weight;
        }
        worst
    }
}

/// Sampler for the truncated jump point process of one density.
#[derive(Debug, Clone)]
pub struct JumpSampler {
    policy: TruncationPolicy,
    table: FactorSampler,
    rate: f64,
}

/// Result of a fixed-horizon draw; `degenerate` flags m_eps = 0.
#[derive(Debug, Clone)]
pub struct SampledPoints {
    pub points: Vec<JumpPoint>,
    pub degenerate: bool,
}

impl JumpSampler {
    pub fn new(f: &SplittingDensity, policy: &TruncationPolicy) -> Result<Self, PointError> {
        let eval = f.eval2_fn();
        let g = move |u: f64, omu: f64| u * eval(u, omu);
        let table = FactorSampler::new(&g, 0.0, 1.0 - policy.epsilon)
            .map_err(|e| match e {
                PointError::Table { lo, hi, source } => {
                    if hi > 0.999 {
                        PointError::IntensityDiverges { source }
                    } else {
                        PointError::Table { lo, hi, source }
                    }
                }
                other => other,
            })?;
        let rate = table.total();
        Ok(JumpSampler { policy: *policy, table, rate })
    }

    /// Truncated intensity m_eps = int_0^(1-eps) u f(u) du.
    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn policy(&self) -> TruncationPolicy {
        self.policy
    }

    pub fn is_degenerate(&self) -> bool {
        self.rate <= 0.0
    }

    #[inline]
    pub fn sample_factor(&self, rng: &mut impl Rng) -> f64 {
        self.table.sample(rng)
    }

    /// Next inter-jump waiting time, Exp(m_eps).
    #[inline]
    pub fn next_gap(&self, rng: &mut impl Rng) -> f64 {
        Exp::new(self.rate).expect("positive rate").sample(rng)
    }

    /// Poisson(horizon * m_eps) points with uniform times, time-sorted.
    pub fn sample_points(&self, horizon: f64, rng: &mut impl Rng) -> SampledPoints {
        assert!(horizon >= 0.0);
        if self.is_degenerate() || horizon == 0.0 {
            return SampledPoints { points: Vec::new(), degenerate: self.is_degenerate() };
        }
        let mean = self.rate * horizon;
        let count = Poisson::new(mean).expect("positive mean").sample(rng) as usize;
        let mut points: Vec<JumpPoint> = (0..count)
            .map(|_| JumpPoint {
                time: rng.random::<f64>() * horizon,
                factor: self.table.sample(rng),
            })
            .collect();
        points.sort_by(|a, b| a.time.partial_cmp(&b.time).expect("finite times"));
        SampledPoints { points, degenerate: false }
    }

    pub fn factor_table(&self) -> &FactorSampler {
        &self.table
    }
}

/// Convenience one-shot form of [`JumpSampler::sample_points`].
pub fn sample_points(
    f: &SplittingDensity,
    horizon: f64,
    policy: &TruncationPolicy,
    rng: &mut impl Rng,
) -> Result<SampledPoints, PointError> {
    Ok(JumpSampler::new(f, policy)?.sample_points(horizon, rng))
}

/// First point whose independent Bernoulli(p(factor)) mark comes up 1,
/// as (time, index), or None. This realizes the switching time
/// tau = inf { s : F_s != F-hat_s } by thinning.
pub fn first_marked_time(
    points: &[JumpPoint],
    p: &SwitchingFunction,
    rng: &mut impl Rng,
) -> Option<(f64, usize)> {
    for (i, pt) in points.iter().enumerate() {
        if rng.random::<f64>() < p.eval(pt.factor) {
            return Some((pt.time, i));
        }
    }
    None
}

/// P(tau > t | M) = prod_(s <= t) (1 - p(F_s)) over the realized points.
pub fn conditional_survival(points: &[JumpPoint], p: &SwitchingFunction, t: f64) -> f64 {
    points
        .iter()
        .take_while(|pt| pt.time <= t)
        .map(|pt| 1.0 - p.eval(pt.factor))
        .product()
}
