//! Strings of beads and the bead splitting tree growth process.
//!
//! A string of beads of mass m is the interval [0, Y] with
//! Y = m^alpha int_0^infinity M_s^alpha ds, carrying one atom per jump
//! of M: mass m (M_(t-) - M_t) at position m^alpha int_0^t M_s^alpha ds.
//! The bead splitting process grows a binary weighted R-tree by
//! repeatedly sampling a bead proportionally to its mass and replacing
//! it with a rescaled fresh string tied at its position.
//!
//! Simulation cannot realize the infinite tail of M, so each string
//! ends with a pseudo-bead at position Y carrying the residual mass
//! m M_T (flagged `tail`). Keeping it makes the atom masses sum to the
//! string mass exactly, so size-biased selection stays well defined;
//! selecting a tail bead triggers a path extension instead of a split.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::density::{DensityError, SplittingDensity};
use crate::fragmenter::{exponential_functional, FragmenterError, FragmenterPath, TailSpec};
use crate::pointproc::{JumpSampler, PointError, TruncationPolicy};

#[derive(Debug, Clone, Error)]
pub enum BeadsError {
    #[error("path too short for tail tolerance: residual mass {residual} above threshold {threshold}")]
    PathTooShort { residual: f64, threshold: f64 },
    #[error("tree has no selectable atoms")]
    EmptyAtoms,
    #[error("tail-bead extension loop exceeded its budget")]
    ExtensionLoop,
    #[error("tree needs at least {needed} leaves, has {got}")]
    TooFewLeaves { needed: usize, got: usize },
    #[error(transparent)]
    Fragmenter(#[from] FragmenterError),
    #[error(transparent)]
    Point(#[from] PointError),
    #[error(transparent)]
    Density(#[from] DensityError),
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Bead {
    pub offset: f64,
    pub mass: f64,
    pub tail: bool,
}

/// An interval [0, length] with a finite list of mass atoms.
#[derive(Debug, Clone)]
pub struct StringOfBeads {
    pub length: f64,
    pub beads: Vec<Bead>,
    pub total_mass: f64,
    /// Untracked mass at the far end, also stored as the tail bead.
    pub residual_mass: f64,
}

impl StringOfBeads {
    pub fn atom_mass(&self) -> f64 {
        self.beads.iter().map(|b| b.mass).sum()
    }
}

/// Build the string of beads of mass `m` from a realized fragmenter
/// path. The path must already satisfy
/// M_T^alpha / phi_tail < tail_tol; the length receives the analytic
/// tail correction and the residual mass m M_T becomes the tail bead.
pub fn string_of_beads(
    path: &FragmenterPath,
    alpha: f64,
    m: f64,
    phi_tail: f64,
    tail_tol: f64,
) -> Result<StringOfBeads, BeadsError> {
    assert!(alpha > 0.0 && m > 0.0);
    let threshold = (tail_tol * phi_tail).powf(1.0 / alpha);
    if path.stopped_mass() >= threshold {
        return Err(BeadsError::PathTooShort {
            residual: path.stopped_mass(),
            threshold,
        });
    }
    let scale = m.powf(alpha);
    let mut beads = Vec::with_capacity(path.jumps().len() + 1);
    let mut acc = 0.0;
    let mut prev_t = 0.0;
    let mut mass = 1.0f64;
    for jump in path.jumps() {
        acc += (jump.time - prev_t) * mass.powf(alpha);
        beads.push(Bead {
            offset: scale * acc,
            mass: m * mass * (1.0 - jump.factor),
            tail: false,
        });
        prev_t = jump.time;
        mass *= jump.factor;
    }
    acc += (path.horizon() - prev_t) * mass.powf(alpha);
    let length = scale * (acc + mass.powf(alpha) / phi_tail);
    let residual_mass = m * mass;
    beads.push(Bead { offset: length, mass: residual_mass, tail: true });
    Ok(StringOfBeads { length, beads, total_mass: m, residual_mass })
}

/// Everything needed to grow trees from i.i.d. fragmenters of one
/// splitting density.
#[derive(Debug)]
pub struct GrowthContext {
    sampler: JumpSampler,
    alpha: f64,
    tail: TailSpec,
}

impl GrowthContext {
    pub fn new(
        f: &SplittingDensity,
        policy: &TruncationPolicy,
        alpha: f64,
        tail_tol: f64,
    ) -> Result<Self, BeadsError> {
        let sampler = JumpSampler::new(f, policy)?;
        let phi_tail = f.laplace_exponent_truncated(alpha, policy.epsilon)?;
        Ok(GrowthContext {
            sampler,
            alpha,
            tail: TailSpec::new(tail_tol, phi_tail),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sampler(&self) -> &JumpSampler {
        &self.sampler
    }

    /// A fresh string of beads of mass `m` from a new fragmenter path.
    pub fn sample_string(
        &self,
        m: f64,
        rng: &mut impl Rng,
    ) -> Result<StringOfBeads, BeadsError> {
        let mut path = FragmenterPath::empty(0.0, self.sampler.policy().epsilon);
        exponential_functional(&mut path, &self.sampler, self.alpha, &self.tail, rng)?;
        string_of_beads(&path, self.alpha, m, self.tail.phi_tail, self.tail.tail_tol)
    }
}

/// Where a string hangs off its parent.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Attachment {
    pub string: usize,
    pub offset: f64,
}

#[derive(Debug, Clone)]
pub struct TreeString {
    /// None only for the spine (string 0).
    pub parent: Option<Attachment>,
    /// Root-distance of the attachment point.
    pub depth: f64,
    pub length: f64,
    pub beads: Vec<Bead>,
}

impl TreeString {
    pub fn leaf_depth(&self) -> f64 {
        self.depth + self.length
    }
}

/// One growth step: which bead was split.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GrowthEvent {
    pub step: usize,
    pub string: usize,
    pub bead_index: usize,
    pub bead_mass: f64,
}

/// Rooted binary weighted R-tree built by bead splitting. String j
/// carries leaf Sigma_(j+1) at its far end; attachment points are the
/// internal junctions, so a tree of n strings has n leaves and n - 1
/// junctions. Strings are shared between growth snapshots.
#[derive(Debug, Clone)]
pub struct BeadTree {
    pub(crate) strings: Vec<Arc<TreeString>>,
    pub(crate) log: Vec<GrowthEvent>,
    pub(crate) extensions: usize,
}

impl BeadTree {
    pub fn from_first_string(s: StringOfBeads) -> Self {
        BeadTree {
            strings: vec![Arc::new(TreeString {
                parent: None,
                depth: 0.0,
                length: s.length,
                beads: s.beads,
            })],
            log: Vec::new(),
            extensions: 0,
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.strings.len()
    }

    pub fn strings(&self) -> &[Arc<TreeString>] {
        &self.strings
    }

    pub fn log(&self) -> &[GrowthEvent] {
        &self.log
    }

    /// Tail-bead extensions performed so far (diagnostic).
    pub fn extensions(&self) -> usize {
        self.extensions
    }

    pub fn total_length(&self) -> f64 {
        self.strings.iter().map(|s| s.length).sum()
    }

    pub fn total_atom_mass(&self) -> f64 {
        self.strings.iter().flat_map(|s| s.beads.iter()).map(|b| b.mass).sum()
    }

    pub fn largest_atom(&self) -> f64 {
        self.strings
            .iter()
            .flat_map(|s| s.beads.iter())
            .map(|b| b.mass)
            .fold(0.0, f64::max)
    }

    /// K_(n,m): number of growth steps i <= m whose junction lies on
    /// the step-n subtree.
    pub fn junction_hits(&self, n: usize, m: usize) -> usize {
        self.log.iter().take(m).filter(|e| e.string < n).count()
    }

    /// One growth step with strings supplied by `ctx`; returns the new
    /// tree, leaving `self` untouched.
    pub fn grow(&self, ctx: &GrowthContext, rng: &mut impl Rng) -> Result<BeadTree, BeadsError> {
        self.grow_with(rng, |mass, rng| ctx.sample_string(mass, rng))
    }

    /// One growth step with an arbitrary string supplier (mass -> new
    /// string of that mass).
    pub fn grow_with<R: Rng>(
        &self,
        rng: &mut R,
        mut new_string: impl FnMut(f64, &mut R) -> Result<StringOfBeads, BeadsError>,
    ) -> Result<BeadTree, BeadsError> {
        let mut tree = self.clone();
        for _ in 0..64 {
            let total = tree.total_atom_mass();
            if total <= 0.0 {
                return Err(BeadsError::EmptyAtoms);
            }
            let target = rng.random::<f64>() * total;
            let (sid, bidx) = tree.locate_atom(target);
            let bead = tree.strings[sid].beads[bidx];
            if bead.tail {
                // extend the string's path instead of splitting
                let sub = new_string(bead.mass, rng)?;
                let host = Arc::make_mut(&mut tree.strings[sid]);
                let base = host.beads[bidx].offset;
                host.beads.remove(bidx);
                host.beads.extend(sub.beads.iter().map(|b| Bead {
                    offset: base + b.offset,
                    mass: b.mass,
                    tail: b.tail,
                }));
                host.length = base + sub.length;
                tree.extensions += 1;
                continue;
            }
            let sub = new_string(bead.mass, rng)?;
            let host = Arc::make_mut(&mut tree.strings[sid]);
            host.beads.remove(bidx);
            let depth = tree.strings[sid].depth + bead.offset;
            tree.log.push(GrowthEvent {
                step: tree.strings.len(),
                string: sid,
                bead_index: bidx,
                bead_mass: bead.mass,
            });
            tree.strings.push(Arc::new(TreeString {
                parent: Some(Attachment { string: sid, offset: bead.offset }),
                depth,
                length: sub.length,
                beads: sub.beads,
            }));
            return Ok(tree);
        }
        Err(BeadsError::ExtensionLoop)
    }

    fn locate_atom(&self, target: f64) -> (usize, usize) {
        let mut acc = 0.0;
        let mut last = (0usize, 0usize);
        for (sid, s) in self.strings.iter().enumerate() {
            for (bidx, b) in s.beads.iter().enumerate() {
                acc += b.mass;
                last = (sid, bidx);
                if acc >= target {
                    return last;
                }
            }
        }
        last
    }

    /// The first ancestor attachment of `sid` whose host string id is
    /// below `k`, i.e. the anchor of the pruned subtree on the step-k
    /// tree. `sid` must be >= k >= 1.
    pub fn anchor_on_prefix(&self, sid: usize, k: usize) -> Attachment {
        let mut at = self.strings[sid].parent.expect("non-spine string has a parent");
        while at.string >= k {
            at = self.strings[at.string].parent.expect("non-spine string has a parent");
        }
        at
    }

    /// Project the atom measure onto the step-k subtree: atoms of
    /// pruned strings accumulate at their anchor attachment. Returns
    /// (string id, offset, mass) sorted by (string id, offset).
    pub fn project_onto_prefix(&self, k: usize) -> Vec<(usize, f64, f64)> {
        assert!(k >= 1 && k <= self.strings.len());
        let mut atoms: Vec<(usize, f64, f64)> = Vec::new();
        for (sid, s) in self.strings.iter().enumerate().take(k) {
            for b in &s.beads {
                atoms.push((sid, b.offset, b.mass));
            }
        }
        use std::collections::HashMap;
        let mut anchored: HashMap<(usize, u64), f64> = HashMap::new();
        for sid in k..self.strings.len() {
            let anchor = self.anchor_on_prefix(sid, k);
            let mass: f64 = self.strings[sid].beads.iter().map(|b| b.mass).sum();
            *anchored.entry((anchor.string, anchor.offset.to_bits())).or_insert(0.0) += mass;
        }
        for ((sid, bits), mass) in anchored {
            atoms.push((sid, f64::from_bits(bits), mass));
        }
        atoms.sort_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).expect("finite offsets"));
        atoms
    }

    /// Spinal blocks: leaves 2..n grouped by where their root path
    /// leaves the spine [[0, Sigma_1]], ordered by distance from the
    /// root. Each entry is (spine offset, leaf labels in the block).
    pub fn spinal_blocks(&self) -> Vec<(f64, Vec<usize>)> {
        use std::collections::BTreeMap;
        let mut blocks: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for sid in 1..self.strings.len() {
            let anchor = self.anchor_on_prefix(sid, 1);
            debug_assert_eq!(anchor.string, 0);
            blocks.entry(anchor.offset.to_bits()).or_default().push(sid + 1);
        }
        // offsets are positive finite, so the bit pattern orders them
        blocks.into_iter().map(|(bits, leaves)| (f64::from_bits(bits), leaves)).collect()
    }
}

/// An ordered composition of n (the spinal block sizes).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Composition {
    pub parts: Vec<u32>,
    pub n: u32,
}

impl Composition {
    pub fn from_parts(parts: Vec<u32>) -> Self {
        assert!(parts.iter().all(|&p| p >= 1));
        let n = parts.iter().sum();
        Composition { parts, n }
    }

    pub fn key(&self) -> String {
        let strs: Vec<String> = self.parts.iter().map(|p| p.to_string()).collect();
        strs.join(",")
    }
}

/// The spinal composition C of a tree with n >= 2 leaves: block sizes
/// of leaves 2..n in spinal order (a composition of n - 1).
pub fn spinal_composition(tree: &BeadTree) -> Result<Composition, BeadsError> {
    if tree.leaf_count() < 2 {
        return Err(BeadsError::TooFewLeaves { needed: 2, got: tree.leaf_count() });
    }
    let parts = tree.spinal_blocks().iter().map(|(_, ls)| ls.len() as u32).collect();
    Ok(Composition::from_parts(parts))
}

/// The spinal composition after deleting one leaf label (blocks that
/// empty out disappear). Used for sampling-consistency checks.
pub fn spinal_composition_deleting(
    tree: &BeadTree,
    leaf_label: usize,
) -> Result<Composition, BeadsError> {
    if tree.leaf_count() < 3 {
        return Err(BeadsError::TooFewLeaves { needed: 3, got: tree.leaf_count() });
    }
    let parts: Vec<u32> = tree
        .spinal_blocks()
        .iter()
        .filter_map(|(_, ls)| {
            let size = ls.iter().filter(|&&l| l != leaf_label).count() as u32;
            (size > 0).then_some(size)
        })
        .collect();
    Ok(Composition::from_parts(parts))
}

/// Grow a full chain: returns trees with 1..=n_leaves leaves.
pub fn grow_chain(
    ctx: &GrowthContext,
    n_leaves: usize,
    rng: &mut impl Rng,
) -> Result<Vec<BeadTree>, BeadsError> {
    assert!(n_leaves >= 1);
    let first = ctx.sample_string(1.0, rng)?;
    let mut chain = Vec::with_capacity(n_leaves);
    chain.push(BeadTree::from_first_string(first));
    for _ in 1..n_leaves {
        let next = chain.last().expect("chain nonempty").grow(ctx, rng)?;
        chain.push(next);
    }
    Ok(chain)
}

/// JSON dump with stable field order, per tree: nodes (string id,
/// parent, edge length), atoms, leaves, generation log.
#[derive(Debug, Serialize)]
pub struct TreeDump {
    pub nodes: Vec<DumpNode>,
    pub atoms: Vec<DumpAtom>,
    pub leaves: Vec<DumpLeaf>,
    pub generation_log: Vec<GrowthEvent>,
}

#[derive(Debug, Serialize)]
pub struct DumpNode {
    pub id: usize,
    pub parent_id: Option<usize>,
    pub parent_offset: Option<f64>,
    pub edge_length: f64,
}

#[derive(Debug, Serialize)]
pub struct DumpAtom {
    pub edge_id: usize,
    pub offset: f64,
    pub mass: f64,
    pub tail: bool,
}

#[derive(Debug, Serialize)]
pub struct DumpLeaf {
    pub label: usize,
    pub node_id: usize,
}

impl BeadTree {
    pub fn to_dump(&self) -> TreeDump {
        let nodes = self
            .strings
            .iter()
            .enumerate()
            .map(|(id, s)| DumpNode {
                id,
                parent_id: s.parent.map(|a| a.string),
                parent_offset: s.parent.map(|a| a.offset),
                edge_length: s.length,
            })
            .collect();
        let atoms = self
            .strings
            .iter()
            .enumerate()
            .flat_map(|(id, s)| {
                s.beads.iter().map(move |b| DumpAtom {
                    edge_id: id,
                    offset: b.offset,
                    mass: b.mass,
                    tail: b.tail,
                })
            })
            .collect();
        let leaves = (0..self.strings.len())
            .map(|id| DumpLeaf { label: id + 1, node_id: id })
            .collect();
        TreeDump {
            nodes,
            atoms,
            leaves,
            generation_log: self.log.clone(),
        }
    }
}
