//! Brownian CRT reference laws, used as oracles against the generic
//! bead-splitting machinery: line-breaking lengths sqrt(2 Gamma_n),
//! Poisson-Dirichlet atom masses, the 1/2-diversity, Dirichlet segment
//! lengths and the uniform leaf-labeled shape law.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Beta as BetaDist, Distribution, Exp};
use statrs::distribution::{Beta, ContinuousCDF};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::beads::BeadTree;
use crate::stats::{chi2_gof, chi2_independence, Chi2Result, KsResult};

#[derive(Debug, Clone, Error)]
pub enum BrownianError {
    #[error("{what} requires {requirement}")]
    Domain { what: &'static str, requirement: &'static str },
    #[error("need at least {needed} atoms, got {got}")]
    TooFewAtoms { needed: usize, got: usize },
    #[error("trees have mixed leaf counts ({0} vs {1})")]
    MixedLeafCounts(usize, usize),
    #[error("shape census supports n <= 6, got {0}")]
    CensusTooLarge(usize),
}

/// Cumulative subtree lengths sqrt(2 Gamma_k), k = 1..n, for standard
/// exponential increments; the law of (lambda(R_1), ..., lambda(R_n))
/// in Aldous's line-breaking construction.
pub fn line_breaking_lengths(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    assert!(n >= 1);
    let exp = Exp::new(1.0).expect("unit rate");
    let mut gamma = 0.0f64;
    (0..n)
        .map(|_| {
            gamma += exp.sample(rng);
            (2.0 * gamma).sqrt()
        })
        .collect()
}

/// E(lambda(R_n)^rho) = 2^(rho/2) Gamma(n + rho/2) / Gamma(n).
pub fn expected_length_moment(n: usize, rho: f64) -> f64 {
    (0.5 * rho * std::f64::consts::LN_2 + ln_gamma(n as f64 + 0.5 * rho) - ln_gamma(n as f64))
        .exp()
}

/// E(S_(alpha,theta)^rho) for the alpha-diversity of PD(alpha, theta),
/// Gamma(theta/alpha + rho + 1) Gamma(theta + 1) /
/// (Gamma(theta + rho alpha + 1) Gamma(theta/alpha + 1)).
pub fn pd_diversity_moment(alpha: f64, theta: f64, rho: f64) -> f64 {
    (ln_gamma(theta / alpha + rho + 1.0) + ln_gamma(theta + 1.0)
        - ln_gamma(theta + rho * alpha + 1.0)
        - ln_gamma(theta / alpha + 1.0))
    .exp()
}

/// A stick-breaking sample from PD(alpha, theta): the first `k` sticks
/// ranked decreasingly, plus the unbroken residual.
#[derive(Debug, Clone)]
pub struct PDSample {
    pub alpha: f64,
    pub theta: f64,
    /// Ranked (decreasing) atom masses.
    pub atoms: Vec<f64>,
    /// Mass not covered by the first k sticks.
    pub residual: f64,
    /// The sticks in size-biased (generation) order.
    pub sticks: Vec<f64>,
}

/// Stick-breaking with W_j ~ Beta(1 - alpha, theta + j alpha).
pub fn pd_sample(
    alpha: f64,
    theta: f64,
    k_atoms: usize,
    rng: &mut impl Rng,
) -> Result<PDSample, BrownianError> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(BrownianError::Domain { what: "pd_sample", requirement: "0 <= alpha < 1" });
    }
    if theta <= -alpha {
        return Err(BrownianError::Domain { what: "pd_sample", requirement: "theta > -alpha" });
    }
    if k_atoms < 1 {
        return Err(BrownianError::Domain { what: "pd_sample", requirement: "k_atoms >= 1" });
    }
    let mut sticks = Vec::with_capacity(k_atoms);
    let mut remaining = 1.0f64;
    for j in 1..=k_atoms {
        let w = BetaDist::new(1.0 - alpha, theta + j as f64 * alpha)
            .expect("valid Beta parameters")
            .sample(rng);
        let piece = w * remaining;
        sticks.push(piece);
        remaining *= 1.0 - w;
    }
    let mut atoms = sticks.clone();
    atoms.sort_by(|a, b| b.partial_cmp(a).expect("finite atoms"));
    Ok(PDSample { alpha, theta, atoms, residual: remaining, sticks })
}

/// 1/2-diversity estimator sqrt(pi) k P_k^(1/2), summarized by the
/// median over the last quartile of available ranks; returns the
/// estimate and the interquartile spread of the same window as a
/// dispersion measure.
///
/// The caller must pass only ranks at which the list is faithful to
/// the full ranked distribution. A stick-breaking sample of m sticks
/// captures the true top-k atoms only for k up to about sqrt(m)/2
/// (an atom of mass s is missed with probability ~ exp(-m s)), and a
/// truncated bead tree is likewise faithful only above its dust
/// scale; pass the corresponding prefix.
pub fn diversity_estimate(atoms: &[f64]) -> Result<(f64, f64), BrownianError> {
    if atoms.len() < 50 {
        return Err(BrownianError::TooFewAtoms { needed: 50, got: atoms.len() });
    }
    debug_assert!(atoms.windows(2).all(|w| w[0] >= w[1]), "atoms must be ranked");
    let k0 = 3 * atoms.len() / 4;
    let mut window: Vec<f64> = (k0..atoms.len())
        .map(|i| std::f64::consts::PI.sqrt() * (i + 1) as f64 * atoms[i].sqrt())
        .collect();
    window.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let median = window[window.len() / 2];
    let q1 = window[window.len() / 4];
    let q3 = window[3 * window.len() / 4];
    Ok((median, q3 - q1))
}

/// Canonical code of the leaf-labeled combinatorial shape of a bead
/// tree: recursive minimal-label ordering of the nested cherry
/// structure, unique per rooted binary leaf-labeled topology.
pub fn shape_code(tree: &BeadTree) -> String {
    // children of each string, sorted by attachment offset
    let n = tree.leaf_count();
    let mut children: Vec<Vec<(f64, usize)>> = vec![Vec::new(); n];
    for (sid, s) in tree.strings().iter().enumerate().skip(1) {
        let a = s.parent.expect("non-spine string has a parent");
        children[a.string].push((a.offset, sid));
    }
    for c in &mut children {
        c.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite offsets"));
    }

    fn code_of(sid: usize, children: &[Vec<(f64, usize)>]) -> (usize, String) {
        let leaf_label = sid + 1;
        let mut acc: (usize, String) = (leaf_label, leaf_label.to_string());
        // walk junctions from the leaf end toward the root
        for &(_, child) in children[sid].iter().rev() {
            let sub = code_of(child, children);
            acc = if sub.0 < acc.0 {
                (sub.0, format!("({},{})", sub.1, acc.1))
            } else {
                (acc.0, format!("({},{})", acc.1, sub.1))
            };
        }
        acc
    }

    code_of(0, &children).1
}

/// (2n - 3)!! shapes for n labeled leaves.
pub fn shape_count(n: usize) -> u64 {
    let mut c = 1u64;
    let mut k = 1i64;
    while k <= 2 * n as i64 - 3 {
        c *= k as u64;
        k += 2;
    }
    c
}

#[derive(Debug, Clone)]
pub struct ShapeCensus {
    pub n: usize,
    pub counts: BTreeMap<String, u64>,
    pub chi2: Chi2Result,
}

/// Frequency table of canonical shapes with a chi-square test against
/// the uniform law on all (2n-3)!! shapes.
pub fn shape_census(trees: &[BeadTree]) -> Result<ShapeCensus, BrownianError> {
    let n = trees.first().map(|t| t.leaf_count()).unwrap_or(0);
    if n < 2 {
        return Err(BrownianError::Domain { what: "shape_census", requirement: "n >= 2" });
    }
    if n > 6 {
        return Err(BrownianError::CensusTooLarge(n));
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for t in trees {
        if t.leaf_count() != n {
            return Err(BrownianError::MixedLeafCounts(n, t.leaf_count()));
        }
        *counts.entry(shape_code(t)).or_insert(0) += 1;
    }
    let total_shapes = shape_count(n) as usize;
    assert!(counts.len() <= total_shapes, "more shapes than (2n-3)!!");
    let mut observed: Vec<u64> = counts.values().copied().collect();
    observed.resize(total_shapes, 0);
    let probs = vec![1.0 / total_shapes as f64; total_shapes];
    Ok(ShapeCensus { n, counts: counts.clone(), chi2: chi2_gof(&observed, &probs) })
}

/// Relative segment lengths in depth-first order: for each string in
/// birth order, its pieces between consecutive junctions. A tree with
/// n leaves yields 2n - 1 segments.
pub fn segment_lengths_depth_first(tree: &BeadTree) -> Vec<f64> {
    let n = tree.leaf_count();
    let mut cuts: Vec<Vec<f64>> = vec![Vec::new(); n];
    for s in tree.strings().iter().skip(1) {
        let a = s.parent.expect("non-spine string has a parent");
        cuts[a.string].push(a.offset);
    }
    let total = tree.total_length();
    let mut out = Vec::with_capacity(2 * n - 1);
    for (sid, s) in tree.strings().iter().enumerate() {
        let mut boundaries = cuts[sid].clone();
        boundaries.sort_by(|a, b| a.partial_cmp(b).expect("finite offsets"));
        let mut prev = 0.0;
        for b in boundaries {
            out.push((b - prev) / total);
            prev = b;
        }
        out.push((s.length - prev) / total);
    }
    out
}

#[derive(Debug, Clone)]
pub struct SegmentLengthReport {
    pub n: usize,
    /// Per-coordinate KS against Beta(1, 2n - 2).
    pub marginal_ks: Vec<KsResult>,
    /// Independence of shape and the first segment-length quartile.
    pub shape_independence: Chi2Result,
}

/// Marginal Dirichlet(1, ..., 1) checks for the relative segment
/// lengths, plus a shape x first-segment-quartile contingency test.
pub fn segment_length_test(trees: &[BeadTree]) -> Result<SegmentLengthReport, BrownianError> {
    let n = trees.first().map(|t| t.leaf_count()).unwrap_or(0);
    if n < 2 {
        return Err(BrownianError::Domain { what: "segment_length_test", requirement: "n >= 2" });
    }
    let coords = 2 * n - 1;
    let mut per_coord: Vec<Vec<f64>> = vec![Vec::with_capacity(trees.len()); coords];
    let mut firsts: Vec<f64> = Vec::with_capacity(trees.len());
    let mut shapes: Vec<String> = Vec::with_capacity(trees.len());
    for t in trees {
        if t.leaf_count() != n {
            return Err(BrownianError::MixedLeafCounts(n, t.leaf_count()));
        }
        let segs = segment_lengths_depth_first(t);
        debug_assert_eq!(segs.len(), coords);
        for (c, v) in segs.iter().enumerate() {
            per_coord[c].push(*v);
        }
        firsts.push(segs[0]);
        shapes.push(shape_code(t));
    }
    let beta = Beta::new(1.0, (2 * n - 2) as f64).expect("valid Beta");
    let marginal_ks = per_coord
        .iter()
        .map(|xs| crate::stats::ks_test_cdf(xs, |x| beta.cdf(x)))
        .collect();

    // contingency: shape vs quartile of the first relative length
    let mut sorted = firsts.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let q = |p: f64| sorted[((sorted.len() as f64 * p) as usize).min(sorted.len() - 1)];
    let (q1, q2, q3) = (q(0.25), q(0.5), q(0.75));
    let shape_ids: BTreeMap<&String, usize> = {
        let mut m = BTreeMap::new();
        for s in &shapes {
            let next = m.len();
            m.entry(s).or_insert(next);
        }
        m
    };
    let mut table = vec![vec![0u64; 4]; shape_ids.len()];
    for (s, &x) in shapes.iter().zip(&firsts) {
        let col = if x < q1 {
            0
        } else if x < q2 {
            1
        } else if x < q3 {
            2
        } else {
            3
        };
        table[shape_ids[s]][col] += 1;
    }
    let shape_independence = chi2_independence(&table);
    Ok(SegmentLengthReport { n, marginal_ks, shape_independence })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beads::{Attachment, TreeString};
    use crate::seed::replicate_rng;
    use crate::stats::{ks_test_cdf, MeanSe};
    use std::sync::Arc;

    #[test]
    fn first_length_is_rayleigh() {
        let mut rng = replicate_rng(60, "bcrt-rayleigh", 0);
        let xs: Vec<f64> = (0..100_000).map(|_| line_breaking_lengths(1, &mut rng)[0]).collect();
        let ks = ks_test_cdf(&xs, |x| 1.0 - (-0.5 * x * x).exp());
        assert!(ks.p_value > 0.01, "KS p = {}", ks.p_value);
    }

    #[test]
    fn length_moments_match_gamma_formula() {
        let n_samples = 20_000u64;
        for n in [1usize, 2, 5] {
            let mut draws: Vec<Vec<f64>> = vec![Vec::new(); 2];
            for i in 0..n_samples {
                let mut rng = replicate_rng(61, "bcrt-rmoms", i * 10 + n as u64);
                let l = line_breaking_lengths(n, &mut rng)[n - 1];
                draws[0].push(l);
                draws[1].push(l * l);
            }
            for (idx, rho) in [1.0, 2.0].into_iter().enumerate() {
                let target = expected_length_moment(n, rho);
                let stat = MeanSe::from_samples(&draws[idx]);
                assert!(
                    stat.z_against(target).abs() < 3.0,
                    "n={n} rho={rho}: mean {} vs {target}",
                    stat.mean
                );
            }
        }
        // formula value at n=1, rho=2 is exactly 2
        assert!((expected_length_moment(1, 2.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_duplication_identity_grid() {
        // 2^rho Gamma(n + rho/2)/Gamma(n) equals
        // Gamma(2n + rho) Gamma(n + 1/2) / (Gamma(n + rho/2 + 1/2) Gamma(2n))
        for n in 1..=5usize {
            for rho in [0.5, 1.0, 1.5, 2.0] {
                let lhs = rho * std::f64::consts::LN_2 + ln_gamma(n as f64 + 0.5 * rho)
                    - ln_gamma(n as f64);
                let rhs = ln_gamma(2.0 * n as f64 + rho) + ln_gamma(n as f64 + 0.5)
                    - ln_gamma(n as f64 + 0.5 * rho + 0.5)
                    - ln_gamma(2.0 * n as f64);
                assert!((lhs - rhs).abs() < 1e-10, "n={n} rho={rho}");
                // and pd_diversity_moment agrees at alpha=1/2, theta=(2n-1)/2
                let via_pd = pd_diversity_moment(0.5, (2.0 * n as f64 - 1.0) / 2.0, rho);
                assert!(((via_pd.ln() - lhs) as f64).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn pd_sample_invariants_and_uniform_first_stick() {
        let mut rng = replicate_rng(62, "bcrt-pd", 0);
        for (alpha, theta) in [(0.5, 0.5), (0.5, 2.5), (0.0, 1.0), (0.3, 0.9)] {
            let s = pd_sample(alpha, theta, 300, &mut rng).unwrap();
            assert!((s.atoms.iter().sum::<f64>() + s.residual - 1.0).abs() < 1e-12);
            for w in s.atoms.windows(2) {
                assert!(w[0] >= w[1]);
            }
        }
        // PD(0, 1): first stick is uniform
        let firsts: Vec<f64> = (0..10_000u64)
            .map(|i| {
                let mut rng = replicate_rng(62, "bcrt-pd-first", i);
                pd_sample(0.0, 1.0, 1, &mut rng).unwrap().sticks[0]
            })
            .collect();
        let ks = ks_test_cdf(&firsts, |x| x.clamp(0.0, 1.0));
        assert!(ks.p_value > 0.01, "KS p = {}", ks.p_value);
        // size-biased first atom of PD(1/2, 1/2) is Beta(1/2, 1)
        let beta = Beta::new(0.5, 1.0).unwrap();
        let firsts: Vec<f64> = (0..10_000u64)
            .map(|i| {
                let mut rng = replicate_rng(62, "bcrt-pd-sb", i);
                pd_sample(0.5, 0.5, 1, &mut rng).unwrap().sticks[0]
            })
            .collect();
        let ks = ks_test_cdf(&firsts, |x| beta.cdf(x));
        assert!(ks.p_value > 0.01, "KS p = {}", ks.p_value);
        assert!(pd_sample(1.0, 1.0, 10, &mut rng).is_err());
        assert!(pd_sample(0.5, -0.6, 10, &mut rng).is_err());
    }

    #[test]
    fn diversity_estimator_plugin_exactness() {
        // atoms P_k = (c / (k sqrt(pi)))^2 recover c exactly
        let c = 2.0;
        let atoms: Vec<f64> = (1..=400)
            .map(|k| (c / (k as f64 * std::f64::consts::PI.sqrt())).powi(2))
            .collect();
        let (est, disp) = diversity_estimate(&atoms).unwrap();
        assert!((est - c).abs() < 1e-12);
        assert!(disp < 1e-12);
        assert!(diversity_estimate(&atoms[..40]).is_err());
    }

    #[test]
    fn diversity_of_pd_half_half_matches_moment_formula() {
        // 20000 sticks are rank-faithful to about k = 74; estimate on
        // the top 72 ranks
        let n_rep = 200u64;
        let ests: Vec<f64> = (0..n_rep)
            .map(|i| {
                let mut rng = replicate_rng(63, "bcrt-div", i);
                let s = pd_sample(0.5, 0.5, 20_000, &mut rng).unwrap();
                diversity_estimate(&s.atoms[..72]).unwrap().0
            })
            .collect();
        let stat = MeanSe::from_samples(&ests);
        // E(S_(1/2,1/2)) = sqrt(pi)
        let target = pd_diversity_moment(0.5, 0.5, 1.0);
        assert!((target - std::f64::consts::PI.sqrt()).abs() < 1e-12);
        assert!(
            stat.z_against(target).abs() < 3.0,
            "mean {} vs {target}, z = {}",
            stat.mean,
            stat.z_against(target)
        );
    }

    #[test]
    fn ranked_tail_statistic_stabilizes_with_rank() {
        // k P_k^(1/2) settles: spread across high-rank windows is
        // smaller than across low-rank windows
        let n_rep = 200u64;
        let mut early = 0.0;
        let mut late = 0.0;
        for i in 0..n_rep {
            let mut rng = replicate_rng(64, "bcrt-stab", i);
            let s = pd_sample(0.5, 0.5, 20_000, &mut rng).unwrap();
            let w = |k: usize| std::f64::consts::PI.sqrt() * k as f64 * s.atoms[k - 1].sqrt();
            early += (w(15) - w(5)).abs();
            late += (w(60) - w(40)).abs();
        }
        assert!(late < early, "late spread {late} vs early {early}");
    }

    fn hand_tree(strings: Vec<TreeString>) -> BeadTree {
        BeadTree {
            strings: strings.into_iter().map(Arc::new).collect(),
            log: vec![],
            extensions: 0,
        }
    }

    #[test]
    fn shape_codes_distinguish_the_three_topologies() {
        let mk = |parent, depth, length| TreeString { parent, depth, length, beads: vec![] };
        // leaf 3 splits off nearer the root: (3,(1,2))
        let a = hand_tree(vec![
            mk(None, 0.0, 1.0),
            mk(Some(Attachment { string: 0, offset: 0.7 }), 0.7, 0.5),
            mk(Some(Attachment { string: 0, offset: 0.2 }), 0.2, 0.4),
        ]);
        // leaf 2 splits off nearer the root: (2,(1,3))
        let b = hand_tree(vec![
            mk(None, 0.0, 1.0),
            mk(Some(Attachment { string: 0, offset: 0.2 }), 0.2, 0.5),
            mk(Some(Attachment { string: 0, offset: 0.7 }), 0.7, 0.4),
        ]);
        // leaves 2 and 3 form a cherry: (1,(2,3))
        let c = hand_tree(vec![
            mk(None, 0.0, 1.0),
            mk(Some(Attachment { string: 0, offset: 0.7 }), 0.7, 0.5),
            mk(Some(Attachment { string: 1, offset: 0.3 }), 1.0, 0.4),
        ]);
        let codes = [shape_code(&a), shape_code(&b), shape_code(&c)];
        assert_eq!(codes[0], "((1,2),3)");
        assert_eq!(codes[1], "((1,3),2)");
        assert_eq!(codes[2], "(1,(2,3))");
        assert_eq!(shape_count(2), 1);
        assert_eq!(shape_count(3), 3);
        assert_eq!(shape_count(4), 15);

        let segs = segment_lengths_depth_first(&a);
        assert_eq!(segs.len(), 5);
        let total = 1.9f64;
        let expect = [0.2, 0.5, 0.3, 0.5, 0.4].map(|x| x / total);
        for (s, e) in segs.iter().zip(expect) {
            assert!((s - e).abs() < 1e-12);
        }
    }

    #[test]
    fn single_leaf_tree_is_one_full_segment() {
        let mk = |parent, depth, length| TreeString { parent, depth, length, beads: vec![] };
        let t = hand_tree(vec![mk(None, 0.0, 0.8)]);
        let segs = segment_lengths_depth_first(&t);
        assert_eq!(segs, vec![1.0]);
    }

    #[test]
    fn two_leaf_trees_have_one_shape() {
        let mk = |parent, depth, length| TreeString { parent, depth, length, beads: vec![] };
        let t = hand_tree(vec![
            mk(None, 0.0, 1.0),
            mk(Some(Attachment { string: 0, offset: 0.4 }), 0.4, 0.5),
        ]);
        let census = shape_census(std::slice::from_ref(&t)).unwrap();
        assert_eq!(census.counts.len(), 1);
        assert_eq!(segment_lengths_depth_first(&t).len(), 3);
    }
}
