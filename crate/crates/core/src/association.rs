//! Greedy selection of path sets: maximize union actionness plus a logistic
//! similarity bonus, subject to a size cap and a pairwise overlap limit.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::detection::DetectionRef;
use crate::math::{l2_distance, sigmoid};
use crate::path::{path_overlap, ActionPath};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssocConfig {
    /// Maximum number of paths per set (`N`).
    pub max_paths: usize,
    /// Maximum pairwise path overlap inside a set (`eta_p`).
    pub overlap_threshold: f64,
    /// Weight of the gradient-center distance in the similarity.
    pub lambda_a: f64,
    /// Upper bound on the path similarity.
    pub similarity_cap: f64,
    /// When false the logistic similarity bonus is dropped and the objective
    /// is plain coverage.
    pub use_similarity: bool,
    /// Extraction stops once a set's longest path is shorter than this.
    pub min_path_duration: usize,
}

impl Default for AssocConfig {
    fn default() -> Self {
        Self {
            max_paths: 12,
            overlap_threshold: 0.3,
            lambda_a: 1.0,
            similarity_cap: 1e3,
            use_similarity: true,
            min_path_duration: 10,
        }
    }
}

/// Inverse appearance distance between the feature centers of two paths.
pub fn path_similarity(p: &ActionPath, q: &ActionPath, lambda_a: f64, cap: f64) -> f64 {
    let d = l2_distance(p.color_center(), q.color_center()) + lambda_a * l2_distance(p.grad_center(), q.grad_center());
    if d * cap <= 1.0 {
        cap
    } else {
        1.0 / d
    }
}

/// Summed actionness over the union of member boxes, each detection counted
/// once, accumulated in detection order.
pub fn coverage<'a>(paths: impl IntoIterator<Item = &'a ActionPath>) -> f64 {
    let mut union: BTreeMap<DetectionRef, f64> = BTreeMap::new();
    for p in paths {
        for n in p.nodes() {
            union.insert(n.id, n.actionness);
        }
    }
    union.values().sum()
}

/// Order-free objective of a candidate set: coverage, plus (when enabled and
/// the set has at least two members) the logistic of the mean pairwise
/// similarity.
pub fn set_objective(paths: &[&ActionPath], cfg: &AssocConfig) -> f64 {
    let cov = coverage(paths.iter().copied());
    if !cfg.use_similarity || paths.len() < 2 {
        return cov;
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for (i, p) in paths.iter().enumerate() {
        for q in &paths[i + 1..] {
            sum += path_similarity(p, q, cfg.lambda_a, cfg.similarity_cap);
            pairs += 1;
        }
    }
    cov + sigmoid(sum / pairs as f64)
}

/// Whether every pair of paths respects the overlap limit.
pub fn is_feasible(paths: &[&ActionPath], overlap_threshold: f64) -> bool {
    paths.iter().enumerate().all(|(i, p)| paths[i + 1..].iter().all(|q| path_overlap(p, q) <= overlap_threshold))
}

/// Paths attributed to one actor, in selection order.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub paths: Vec<ActionPath>,
    /// Position of each member in the candidate list it was drawn from.
    pub indices: Vec<usize>,
    /// Objective after each accepted path: union coverage plus the sum of the
    /// similarity bonuses earned so far.
    pub trace: Vec<f64>,
    pub max_paths: usize,
    pub overlap_threshold: f64,
}

impl PathSet {
    fn empty(cfg: &AssocConfig) -> Self {
        Self {
            paths: Vec::new(),
            indices: Vec::new(),
            trace: Vec::new(),
            max_paths: cfg.max_paths,
            overlap_threshold: cfg.overlap_threshold,
        }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Final greedy objective value, zero for an empty set.
    pub fn objective(&self) -> f64 {
        self.trace.last().copied().unwrap_or(0.0)
    }

    pub fn longest_path(&self) -> usize {
        self.paths.iter().map(ActionPath::len).max().unwrap_or(0)
    }

    /// Checks the cardinality and pairwise overlap constraints.
    pub fn satisfies_constraints(&self) -> bool {
        let refs: Vec<&ActionPath> = self.paths.iter().collect();
        self.paths.len() <= self.max_paths && is_feasible(&refs, self.overlap_threshold)
    }
}

/// Greedy set selection.
///
/// Seeds with the highest-scoring path, then repeatedly adds the feasible
/// candidate maximizing union coverage plus `sigmoid(mean similarity to the
/// current members)`. Ties go to the lowest candidate index. Stops at
/// `max_paths` or when nothing feasible remains.
pub fn greedy_associate(phi: &[ActionPath], cfg: &AssocConfig) -> PathSet {
    let mut set = PathSet::empty(cfg);
    if phi.is_empty() || cfg.max_paths == 0 {
        return set;
    }
    let mut covered: BTreeSet<DetectionRef> = BTreeSet::new();
    let mut bonus = 0.0;
    let mut taken = alloc::vec![false; phi.len()];

    let seed =
        (0..phi.len()).reduce(|best, i| if phi[i].score() > phi[best].score() { i } else { best }).expect("non-empty");
    accept(&mut set, &mut covered, &mut taken, phi, seed, bonus);

    while set.len() < cfg.max_paths {
        let mut best: Option<(usize, f64, f64)> = None;
        for (i, cand) in phi.iter().enumerate() {
            if taken[i] || !set.paths.iter().all(|m| path_overlap(cand, m) <= cfg.overlap_threshold) {
                continue;
            }
            let gain: f64 = cand.nodes().iter().filter(|n| !covered.contains(&n.id)).map(|n| n.actionness).sum();
            let sim = if cfg.use_similarity {
                let mean =
                    set.paths.iter().map(|m| path_similarity(cand, m, cfg.lambda_a, cfg.similarity_cap)).sum::<f64>()
                        / set.len() as f64;
                sigmoid(mean)
            } else {
                0.0
            };
            if best.is_none_or(|(_, g, s)| gain + sim > g + s) {
                best = Some((i, gain, sim));
            }
        }
        let Some((i, _, sim)) = best else { break };
        bonus += sim;
        accept(&mut set, &mut covered, &mut taken, phi, i, bonus);
    }
    set
}

fn accept(
    set: &mut PathSet,
    covered: &mut BTreeSet<DetectionRef>,
    taken: &mut [bool],
    phi: &[ActionPath],
    i: usize,
    bonus: f64,
) {
    taken[i] = true;
    covered.extend(phi[i].ids());
    set.paths.push(phi[i].clone());
    set.indices.push(i);
    set.trace.push(coverage(set.paths.iter()) + bonus);
}

/// Extracts path sets one after another, removing each set's members from
/// the candidates. Stops when a new set's longest path is shorter than
/// `min_path_duration`; the first set is always kept.
///
/// Returned indices refer to positions in the original `phi`.
pub fn extract_all_path_sets(phi: &[ActionPath], cfg: &AssocConfig) -> Vec<PathSet> {
    let mut remaining: Vec<usize> = (0..phi.len()).collect();
    let mut sets = Vec::new();
    while !remaining.is_empty() {
        let pool: Vec<ActionPath> = remaining.iter().map(|&i| phi[i].clone()).collect();
        let mut set = greedy_associate(&pool, cfg);
        if set.is_empty() {
            break;
        }
        if !sets.is_empty() && set.longest_path() < cfg.min_path_duration {
            break;
        }
        for idx in set.indices.iter_mut() {
            *idx = remaining[*idx];
        }
        remaining.retain(|i| !set.indices.contains(i));
        sets.push(set);
    }
    sets
}
