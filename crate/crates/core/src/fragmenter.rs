//! Fragmenter paths M_t = prod_(s<=t) F_s built from jump points, and
//! their path functionals: evaluation, exponential functionals
//! int M_t^rho dt with analytic tail correction, and the self-similar
//! time change.

use rand::Rng;
use thiserror::Error;

use crate::pointproc::{JumpPoint, JumpSampler};

#[derive(Debug, Clone, Error)]
pub enum FragmenterError {
    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("tail threshold not reached within {budget} jumps; partial value {partial:.6e}")]
    TailBudgetExceeded { budget: usize, partial: f64 },
    #[error("degenerate sampler cannot reach the tail threshold")]
    DegenerateSampler,
}

/// A finite realization of a fragmenter: time-sorted jumps on
/// [0, horizon] with cached running products.
#[derive(Debug, Clone)]
pub struct FragmenterPath {
    jumps: Vec<JumpPoint>,
    /// cum[k] = product of the first k+1 factors.
    cum: Vec<f64>,
    horizon: f64,
    epsilon: f64,
    stopped_mass: f64,
}

impl FragmenterPath {
    pub fn from_points(points: Vec<JumpPoint>, horizon: f64, epsilon: f64) -> Self {
        debug_assert!(points.windows(2).all(|w| w[0].time <= w[1].time));
        let mut cum = Vec::with_capacity(points.len());
        let mut m = 1.0f64;
        for p in &points {
            m *= p.factor;
            cum.push(m);
        }
        FragmenterPath { jumps: points, cum, horizon, epsilon, stopped_mass: m }
    }

    pub fn empty(horizon: f64, epsilon: f64) -> Self {
        Self::from_points(Vec::new(), horizon, epsilon)
    }

    pub fn jumps(&self) -> &[JumpPoint] {
        &self.jumps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// M at the horizon: the product of all factors.
    pub fn stopped_mass(&self) -> f64 {
        self.stopped_mass
    }

    /// Right-continuous evaluation M_t.
    pub fn evaluate(&self, t: f64) -> Result<f64, FragmenterError> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(FragmenterError::TimeOutOfRange { t, horizon: self.horizon });
        }
        let k = self.jumps.partition_point(|p| p.time <= t);
        Ok(if k == 0 { 1.0 } else { self.cum[k - 1] })
    }

    /// Exact step integral int_0^t M_s^rho ds.
    pub fn step_integral_upto(&self, rho: f64, t: f64) -> f64 {
        let mut acc = 0.0;
        let mut prev_t = 0.0;
        let mut m = 1.0f64;
        for (p, c) in self.jumps.iter().zip(&self.cum) {
            if p.time >= t {
                break;
            }
            acc += (p.time - prev_t) * m.powf(rho);
            prev_t = p.time;
            m = *c;
        }
        acc + (t - prev_t) * m.powf(rho)
    }

    pub fn step_integral(&self, rho: f64) -> f64 {
        self.step_integral_upto(rho, self.horizon)
    }

    /// Append one jump beyond the current horizon.
    pub fn push_jump(&mut self, gap: f64, factor: f64) {
        debug_assert!(gap >= 0.0 && (0.0..1.0).contains(&factor));
        self.horizon += gap;
        self.stopped_mass *= factor;
        self.jumps.push(JumpPoint { time: self.horizon, factor });
        self.cum.push(self.stopped_mass);
    }

    /// Move the horizon forward without adding jumps.
    pub fn extend_horizon(&mut self, to: f64) {
        if to > self.horizon {
            self.horizon = to;
        }
    }

    /// Multiset of factors (sorted), used by invariance checks.
    pub fn factor_multiset(&self) -> Vec<f64> {
        let mut fs: Vec<f64> = self.jumps.iter().map(|p| p.factor).collect();
        fs.sort_by(|a, b| a.partial_cmp(b).expect("finite factors"));
        fs
    }

    /// Columnar dump of the jump records for debugging and replay:
    /// a header line, one `time,factor` line per jump, with horizon
    /// and truncation epsilon in the header comment.
    pub fn dump_csv(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "# horizon={} epsilon={}", self.horizon, self.epsilon);
        let _ = writeln!(out, "time,factor");
        for p in &self.jumps {
            let _ = writeln!(out, "{},{}", p.time, p.factor);
        }
        out
    }

    /// Rebuild a path from a [`dump_csv`](Self::dump_csv) dump.
    pub fn parse_csv(text: &str) -> Option<Self> {
        let mut horizon = None;
        let mut epsilon = 0.0;
        let mut points = Vec::new();
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix('#') {
                for field in rest.split_whitespace() {
                    if let Some(v) = field.strip_prefix("horizon=") {
                        horizon = v.parse().ok();
                    } else if let Some(v) = field.strip_prefix("epsilon=") {
                        epsilon = v.parse().ok()?;
                    }
                }
            } else if line != "time,factor" && !line.is_empty() {
                let (t, f) = line.split_once(',')?;
                points.push(JumpPoint { time: t.parse().ok()?, factor: f.parse().ok()? });
            }
        }
        Some(FragmenterPath::from_points(points, horizon?, epsilon))
    }
}

/// Simulate a fragmenter on [0, horizon] by sequential exponential gaps.
pub fn sample_fragmenter(
    sampler: &JumpSampler,
    horizon: f64,
    rng: &mut impl Rng,
) -> FragmenterPath {
    let mut path = FragmenterPath::empty(0.0, sampler.policy().epsilon);
    if sampler.is_degenerate() {
        path.extend_horizon(horizon);
        return path;
    }
    let mut t = 0.0;
    loop {
        let gap = sampler.next_gap(rng);
        if t + gap > horizon {
            break;
        }
        t += gap;
        let f = sampler.sample_factor(rng);
        path.push_jump(t - path.horizon(), f);
    }
    path.extend_horizon(horizon);
    path
}

/// How the divergent tail of int_0^infinity M^rho dt is closed: extend
/// the path until M_T^rho / phi_tail < tail_tol, then add the exact
/// conditional tail mean M_T^rho / phi_tail. `phi_tail` should be
/// Phi(rho) of the process actually simulated (the truncated exponent
/// for truncated paths; callers may pass the untruncated exponent to
/// quantify sensitivity).
#[derive(Debug, Clone, Copy)]
pub struct TailSpec {
    pub tail_tol: f64,
    pub phi_tail: f64,
    pub jump_budget: usize,
}

impl TailSpec {
    pub fn new(tail_tol: f64, phi_tail: f64) -> Self {
        TailSpec { tail_tol, phi_tail, jump_budget: 1_000_000 }
    }
}

/// int_0^infinity M_t^rho dt: exact step sum over the (extended) path
/// plus the analytic tail correction. Extends `path` in place.
pub fn exponential_functional(
    path: &mut FragmenterPath,
    sampler: &JumpSampler,
    rho: f64,
    tail: &TailSpec,
    rng: &mut impl Rng,
) -> Result<f64, FragmenterError> {
    assert!(rho > 0.0);
    let m_threshold = (tail.tail_tol * tail.phi_tail).powf(1.0 / rho);
    let mut acc = path.step_integral(rho);
    let mut m = path.stopped_mass();
    if m >= m_threshold && sampler.is_degenerate() {
        return Err(FragmenterError::DegenerateSampler);
    }
    while m >= m_threshold {
        if path.jumps().len() >= tail.jump_budget {
            return Err(FragmenterError::TailBudgetExceeded {
                budget: tail.jump_budget,
                partial: acc + m.powf(rho) / tail.phi_tail,
            });
        }
        let gap = sampler.next_gap(rng);
        acc += gap * m.powf(rho);
        let f = sampler.sample_factor(rng);
        path.push_jump(gap, f);
        m = path.stopped_mass();
    }
    Ok(acc + m.powf(rho) / tail.phi_tail)
}

/// The alpha-self-similar time change: jump k moves from time s_k to
/// int_0^(s_k) M_w^alpha dw, keeping its factor; defined on
/// [0, int_0^horizon M^alpha).
pub fn time_change_self_similar(path: &FragmenterPath, alpha: f64) -> FragmenterPath {
    assert!(alpha > 0.0);
    let mut new_points = Vec::with_capacity(path.jumps().len());
    let mut acc = 0.0;
    let mut prev_t = 0.0;
    let mut m = 1.0f64;
    for p in path.jumps() {
        acc += (p.time - prev_t) * m.powf(alpha);
        new_points.push(JumpPoint { time: acc, factor: p.factor });
        prev_t = p.time;
        m *= p.factor;
    }
    let new_horizon = acc + (path.horizon() - prev_t) * m.powf(alpha);
    FragmenterPath::from_points(new_points, new_horizon, path.epsilon())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::SplittingDensity;
    use crate::pointproc::TruncationPolicy;
    use crate::seed::replicate_rng;
    use crate::stats::MeanSe;
    use proptest::prelude::*;

    fn two_jump_path() -> FragmenterPath {
        FragmenterPath::from_points(
            vec![
                JumpPoint { time: 0.2, factor: 0.5 },
                JumpPoint { time: 0.7, factor: 0.4 },
            ],
            1.0,
            0.0,
        )
    }

    #[test]
    fn evaluate_examples() {
        let empty = FragmenterPath::empty(1.0, 0.0);
        assert_eq!(empty.evaluate(0.3).unwrap(), 1.0);
        let p = two_jump_path();
        assert_eq!(p.evaluate(0.5).unwrap(), 0.5);
        assert_eq!(p.evaluate(0.2).unwrap(), 0.5); // right-continuous at the jump
        assert!((p.evaluate(0.9).unwrap() - 0.2).abs() < 1e-15);
        assert!((p.stopped_mass() - 0.2).abs() < 1e-15);
        assert!(p.evaluate(1.5).is_err());
        assert!(p.evaluate(-0.1).is_err());
    }

    #[test]
    fn single_jump_to_negligible_mass_gives_unit_functional() {
        let mut path = FragmenterPath::from_points(
            vec![JumpPoint { time: 1.0, factor: 1e-300 }],
            1.0,
            0.0,
        );
        let f = SplittingDensity::brownian();
        let policy = TruncationPolicy::new(&f, 0.01).unwrap();
        let sampler = JumpSampler::new(&f, &policy).unwrap();
        let mut rng = replicate_rng(20, "frag-unit", 0);
        let tail = TailSpec::new(1e-6, f.laplace_exponent(1.0).unwrap());
        let v = exponential_functional(&mut path, &sampler, 1.0, &tail, &mut rng).unwrap();
        assert!((v - 1.0).abs() < 1e-12, "v = {v}");
    }

    #[test]
    fn time_change_two_jump_case_by_hand() {
        // jumps at times 1 and 2 with factors 0.5 and 0.25, horizon 3
        let p = FragmenterPath::from_points(
            vec![
                JumpPoint { time: 1.0, factor: 0.5 },
                JumpPoint { time: 2.0, factor: 0.25 },
            ],
            3.0,
            0.0,
        );
        let q = time_change_self_similar(&p, 1.0);
        // int_0^1 1 = 1; int_1^2 0.5 = 0.5; int_2^3 0.125
        assert!((q.jumps()[0].time - 1.0).abs() < 1e-15);
        assert!((q.jumps()[1].time - 1.5).abs() < 1e-15);
        assert!((q.horizon() - 1.625).abs() < 1e-15);
        assert_eq!(q.factor_multiset(), p.factor_multiset());
        // lifetime equals the step integral of the original path
        assert!((q.horizon() - p.step_integral(1.0)).abs() < 1e-15);
        // empty path maps to empty path
        let e = time_change_self_similar(&FragmenterPath::empty(2.0, 0.0), 0.5);
        assert!(e.jumps().is_empty());
        assert!((e.horizon() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn mellin_identity_monte_carlo() {
        let f = SplittingDensity::brownian();
        let policy = TruncationPolicy::new(&f, 0.01).unwrap();
        let sampler = JumpSampler::new(&f, &policy).unwrap();
        let t = 1.0;
        for rho in [1.0, 2.0] {
            let phi_eps = f.laplace_exponent_truncated(rho, 0.01).unwrap();
            let vals: Vec<f64> = (0..10_000u64)
                .map(|i| {
                    let mut rng = replicate_rng(21, "frag-mellin", i);
                    sample_fragmenter(&sampler, t, &mut rng)
                        .stopped_mass()
                        .powf(rho)
                })
                .collect();
            let stat = MeanSe::from_samples(&vals);
            let target = (-t * phi_eps).exp();
            assert!(
                stat.z_against(target).abs() < 3.0,
                "rho={rho}: mean {} vs {target}, z = {}",
                stat.mean,
                stat.z_against(target)
            );
        }
    }

    #[test]
    fn exponential_functional_moments() {
        let f = SplittingDensity::brownian();
        let eps = 0.01;
        let policy = TruncationPolicy::new(&f, eps).unwrap();
        let sampler = JumpSampler::new(&f, &policy).unwrap();
        let rho = 1.0;
        let phi1 = f.laplace_exponent_truncated(rho, eps).unwrap();
        let phi2 = f.laplace_exponent_truncated(2.0 * rho, eps).unwrap();
        let tail = TailSpec::new(1e-6, phi1);
        let vals: Vec<f64> = (0..10_000u64)
            .map(|i| {
                let mut rng = replicate_rng(22, "frag-ef", i);
                let mut path = FragmenterPath::empty(0.0, eps);
                exponential_functional(&mut path, &sampler, rho, &tail, &mut rng).unwrap()
            })
            .collect();
        let m1 = MeanSe::from_samples(&vals);
        assert!(m1.z_against(1.0 / phi1).abs() < 3.0, "E L: z = {}", m1.z_against(1.0 / phi1));
        let sq: Vec<f64> = vals.iter().map(|v| v * v).collect();
        let m2 = MeanSe::from_samples(&sq);
        let target2 = 2.0 / (phi1 * phi2);
        assert!(m2.z_against(target2).abs() < 3.0, "E L^2: z = {}", m2.z_against(target2));
    }

    #[test]
    fn csv_dump_replays_exactly() {
        let f = SplittingDensity::brownian();
        let policy = TruncationPolicy::new(&f, 0.01).unwrap();
        let sampler = JumpSampler::new(&f, &policy).unwrap();
        let mut rng = replicate_rng(24, "frag-dump", 0);
        let path = sample_fragmenter(&sampler, 2.0, &mut rng);
        let replay = FragmenterPath::parse_csv(&path.dump_csv()).unwrap();
        assert_eq!(replay.jumps(), path.jumps());
        assert_eq!(replay.horizon(), path.horizon());
        assert_eq!(replay.stopped_mass(), path.stopped_mass());
    }

    #[test]
    fn tail_budget_error_carries_partial_value() {
        let f = SplittingDensity::brownian();
        let policy = TruncationPolicy::new(&f, 0.01).unwrap();
        let sampler = JumpSampler::new(&f, &policy).unwrap();
        let mut rng = replicate_rng(23, "frag-budget", 0);
        let mut path = FragmenterPath::empty(0.0, 0.01);
        let tail = TailSpec {
            tail_tol: 1e-12,
            phi_tail: f.laplace_exponent(1.0).unwrap(),
            jump_budget: 5,
        };
        match exponential_functional(&mut path, &sampler, 1.0, &tail, &mut rng) {
            Err(FragmenterError::TailBudgetExceeded { partial, .. }) => {
                assert!(partial > 0.0)
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn path_is_nonincreasing_and_positive(
            factors in proptest::collection::vec(1e-6f64..0.999999, 0..40),
            times in proptest::collection::vec(0.0f64..10.0, 0..40),
        ) {
            let n = factors.len().min(times.len());
            let mut ts = times[..n].to_vec();
            ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let pts: Vec<JumpPoint> = ts
                .iter()
                .zip(&factors[..n])
                .map(|(&time, &factor)| JumpPoint { time, factor })
                .collect();
            let p = FragmenterPath::from_points(pts, 10.0, 0.0);
            let mut prev = f64::INFINITY;
            for i in 0..=100 {
                let t = 10.0 * i as f64 / 100.0;
                let m = p.evaluate(t).unwrap();
                prop_assert!(m > 0.0);
                prop_assert!(m <= prev);
                prev = m;
            }
            // time change preserves the factor multiset
            let q = time_change_self_similar(&p, 0.7);
            prop_assert_eq!(q.factor_multiset(), p.factor_multiset());
        }
    }
}
