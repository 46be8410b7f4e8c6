//! Distances and convergence diagnostics for nested bead trees.
//!
//! For two snapshots of one growth chain the step-k tree embeds in the
//! step-n tree, so the Hausdorff distance is exact: the height of the
//! tallest pruned subtree above its attachment point. Projecting the
//! atom measure moves each atom along the tree by at most that
//! distance, which bounds the Prohorov distance too, so the combined
//! value is an upper bound on the Gromov-Hausdorff-Prohorov distance
//! between the embedded trees.

use serde::Serialize;
use thiserror::Error;

use crate::beads::BeadTree;

#[derive(Debug, Clone, Error)]
pub enum TreeMetricError {
    #[error("trees are not nested states of one growth chain")]
    NotNested,
    #[error("checkpoint {0} outside the chain (length {1})")]
    BadCheckpoint(usize, usize),
}

fn check_nested(tree_k: &BeadTree, tree_n: &BeadTree) -> Result<(), TreeMetricError> {
    let k = tree_k.leaf_count();
    if k > tree_n.leaf_count() {
        return Err(TreeMetricError::NotNested);
    }
    let a = tree_k.log();
    let b = &tree_n.log()[..k - 1];
    let same = a.len() == k - 1
        && a.iter().zip(b).all(|(x, y)| {
            x.step == y.step
                && x.string == y.string
                && x.bead_index == y.bead_index
                && x.bead_mass == y.bead_mass
        });
    if same {
        Ok(())
    } else {
        Err(TreeMetricError::NotNested)
    }
}

/// Exact Hausdorff distance between the step-k tree and the step-n
/// tree of one chain: the largest height of a pruned subtree above its
/// attachment point (plus any tail extension of a shared string).
pub fn nested_hausdorff(tree_k: &BeadTree, tree_n: &BeadTree) -> Result<f64, TreeMetricError> {
    check_nested(tree_k, tree_n)?;
    let k = tree_k.leaf_count();
    let mut worst: f64 = 0.0;
    for sid in k..tree_n.leaf_count() {
        let anchor = tree_n.anchor_on_prefix(sid, k);
        let anchor_depth = tree_n.strings()[anchor.string].depth + anchor.offset;
        worst = worst.max(tree_n.strings()[sid].leaf_depth() - anchor_depth);
    }
    for sid in 0..k {
        let extension = tree_n.strings()[sid].length - tree_k.strings()[sid].length;
        worst = worst.max(extension);
    }
    Ok(worst)
}

/// Upper bound on d_GHP between the embedded step-k and step-n trees:
/// the maximum of the exact Hausdorff distance and the mass-transport
/// displacement of the atom projection.
pub fn ghp_bound_nested(tree_k: &BeadTree, tree_n: &BeadTree) -> Result<f64, TreeMetricError> {
    let hausdorff = nested_hausdorff(tree_k, tree_n)?;
    let k = tree_k.leaf_count();
    let mut transport: f64 = 0.0;
    for sid in k..tree_n.leaf_count() {
        let anchor = tree_n.anchor_on_prefix(sid, k);
        let anchor_depth = tree_n.strings()[anchor.string].depth + anchor.offset;
        let s = &tree_n.strings()[sid];
        for b in &s.beads {
            transport = transport.max(s.depth + b.offset - anchor_depth);
        }
    }
    Ok(hausdorff.max(transport))
}

/// Prohorov-style bound between the uniform leaf measure and the atom
/// measure: greedily feed each leaf's 1/n mass from its own string's
/// atoms, nearest first. A feasible partial coupling moving mass
/// 1 - eta by at most delta bounds the Prohorov distance by
/// max(delta, eta); this is an upper bound, not the exact distance.
pub fn leaf_measure_gap(tree: &BeadTree) -> f64 {
    let n = tree.leaf_count() as f64;
    let need_per_leaf = 1.0 / n;
    let mut max_move: f64 = 0.0;
    let mut unmatched = 0.0;
    for s in tree.strings() {
        let mut need = need_per_leaf;
        for b in s.beads.iter().rev() {
            if need <= 0.0 {
                break;
            }
            let used = need.min(b.mass);
            if used > 0.0 {
                max_move = max_move.max(s.length - b.offset);
                need -= used;
            }
        }
        unmatched += need.max(0.0);
    }
    max_move.max(unmatched)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub hausdorff_bound: f64,
    pub ghp_bound: f64,
    pub largest_atom: f64,
    pub total_length: f64,
    pub leaf_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
}

/// Per-checkpoint diagnostics against the final tree of the chain.
/// `chain[i]` must be the tree with i + 1 leaves.
pub fn convergence_report(
    chain: &[BeadTree],
    checkpoints: &[usize],
) -> Result<ConvergenceReport, TreeMetricError> {
    let last = chain.last().ok_or(TreeMetricError::BadCheckpoint(0, 0))?;
    let mut rows = Vec::with_capacity(checkpoints.len());
    for &n in checkpoints {
        if n < 1 || n > chain.len() {
            return Err(TreeMetricError::BadCheckpoint(n, chain.len()));
        }
        let tree = &chain[n - 1];
        rows.push(ConvergenceRow {
            n,
            hausdorff_bound: nested_hausdorff(tree, last)?,
            ghp_bound: ghp_bound_nested(tree, last)?,
            largest_atom: tree.largest_atom(),
            total_length: tree.total_length(),
            leaf_gap: leaf_measure_gap(tree),
        });
    }
    Ok(ConvergenceReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beads::{grow_chain, GrowthContext};
    use crate::density::SplittingDensity;
    use crate::pointproc::TruncationPolicy;
    use crate::seed::replicate_rng;

    fn chain_of(n: usize, seed: u64) -> Vec<BeadTree> {
        let f = SplittingDensity::brownian();
        let policy = TruncationPolicy::new(&f, 1e-2).unwrap();
        let ctx = GrowthContext::new(&f, &policy, 0.5, 1e-6).unwrap();
        let mut rng = replicate_rng(seed, "treemetric-chain", 0);
        grow_chain(&ctx, n, &mut rng).unwrap()
    }

    #[test]
    fn identical_trees_are_at_distance_zero() {
        let chain = chain_of(6, 50);
        assert_eq!(nested_hausdorff(&chain[5], &chain[5]).unwrap(), 0.0);
        assert_eq!(ghp_bound_nested(&chain[5], &chain[5]).unwrap(), 0.0);
    }

    #[test]
    fn two_step_distance_is_attached_string_length() {
        let chain = chain_of(2, 51);
        let d = nested_hausdorff(&chain[0], &chain[1]).unwrap();
        assert_eq!(d, chain[1].strings()[1].length);
        assert_eq!(ghp_bound_nested(&chain[0], &chain[1]).unwrap(), d);
    }

    #[test]
    fn hausdorff_is_nonincreasing_in_k() {
        let chain = chain_of(14, 52);
        let last = &chain[13];
        let mut prev = f64::INFINITY;
        for k in 1..=13 {
            let d = nested_hausdorff(&chain[k - 1], last).unwrap();
            assert!(d <= prev, "k={k}: {d} > {prev}");
            prev = d;
        }
    }

    #[test]
    fn ghp_bound_dominates_hausdorff() {
        let chain = chain_of(10, 53);
        for k in [1, 3, 7] {
            let h = nested_hausdorff(&chain[k - 1], &chain[9]).unwrap();
            let g = ghp_bound_nested(&chain[k - 1], &chain[9]).unwrap();
            assert!(g >= h);
        }
    }

    #[test]
    fn unrelated_chains_are_rejected() {
        let a = chain_of(5, 54);
        let b = chain_of(5, 55);
        assert!(matches!(
            nested_hausdorff(&a[3], &b[4]),
            Err(TreeMetricError::NotNested)
        ));
    }

    #[test]
    fn report_basics() {
        let chain = chain_of(8, 56);
        let report = convergence_report(&chain, &[1, 4, 8]).unwrap();
        assert_eq!(report.rows.len(), 3);
        // single-tree chain: distance zero against itself
        let single = convergence_report(&chain[..1], &[1]).unwrap();
        assert_eq!(single.rows[0].hausdorff_bound, 0.0);
        // total length nondecreasing in n, largest atom within [0,1]
        for w in report.rows.windows(2) {
            assert!(w[1].total_length > w[0].total_length);
        }
        for r in &report.rows {
            assert!((0.0..=1.0).contains(&r.largest_atom));
            assert!(r.ghp_bound >= r.hausdorff_bound);
            assert!(r.leaf_gap >= 0.0);
        }
        assert!(convergence_report(&chain, &[9]).is_err());
    }
}
