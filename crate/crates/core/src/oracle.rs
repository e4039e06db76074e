//! Exhaustive reference solvers for small instances.
//!
//! Both enumerate the whole feasible space and share nothing with the fast
//! paths they check except the linking predicate, the overlap measure and the
//! objective definition.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::association::{is_feasible, set_objective, AssocConfig, PathSet};
use crate::detection::{DetectionRef, Video};
use crate::error::{Error, Result};
use crate::path::ActionPath;
use crate::search::{linkable, LinkConfig};

/// Largest number of chains or subsets either oracle will enumerate.
pub const ENUMERATION_LIMIT: u64 = 1_000_000;

/// Best-scoring link-valid contiguous chain, by exhaustive enumeration.
///
/// Ties go to the lowest tail `(frame, index)`, then to the longer chain,
/// then to the chain whose indices read backward from the tail are smallest.
pub fn brute_force_best_path(video: &Video, link: &LinkConfig) -> Result<ActionPath> {
    if video.detection_count() == 0 {
        return Err(Error::EmptyInput("no detections to enumerate"));
    }
    // successors[t][i]: indices on frame t + 1 that may follow box i on frame t
    let mut successors: Vec<Vec<Vec<u32>>> = Vec::with_capacity(video.frames.len());
    for (t, dets) in video.frames.iter().enumerate() {
        let next = video.frames.get(t + 1);
        let mut row = Vec::with_capacity(dets.len());
        for a in dets {
            let mut succ = Vec::new();
            if let Some(next) = next {
                for (j, b) in next.iter().enumerate() {
                    if linkable(a, b, link)? {
                        succ.push(j as u32);
                    }
                }
            }
            row.push(succ);
        }
        successors.push(row);
    }

    let total = count_chains(&successors);
    if total > ENUMERATION_LIMIT {
        return Err(Error::InstanceTooLarge(format!("{total} chains")));
    }

    let mut best: Option<(f64, Vec<DetectionRef>)> = None;
    let mut stack: Vec<DetectionRef> = Vec::new();
    for (t, dets) in video.frames.iter().enumerate() {
        for i in 0..dets.len() {
            let start = DetectionRef { frame: t as u32, index: i as u32 };
            walk(video, &successors, start, 0.0, &mut stack, &mut best)?;
        }
    }
    let (_, ids) = best.expect("at least one detection");
    ActionPath::from_refs(video, &ids)
}

fn count_chains(successors: &[Vec<Vec<u32>>]) -> u64 {
    // chains starting at each box, filled back to front
    let mut from: Vec<Vec<u64>> = successors.iter().map(|r| vec![0; r.len()]).collect();
    for t in (0..successors.len()).rev() {
        for i in 0..successors[t].len() {
            let tail: u64 = successors[t][i].iter().map(|&j| from[t + 1][j as usize]).fold(0u64, u64::saturating_add);
            from[t][i] = tail.saturating_add(1);
        }
    }
    from.iter().flatten().fold(0u64, |a, &b| a.saturating_add(b))
}

fn walk(
    video: &Video,
    successors: &[Vec<Vec<u32>>],
    node: DetectionRef,
    prefix: f64,
    stack: &mut Vec<DetectionRef>,
    best: &mut Option<(f64, Vec<DetectionRef>)>,
) -> Result<()> {
    let score = prefix + video.actionness(node)?;
    stack.push(node);
    let replace = match best {
        None => true,
        Some((s, ids)) => better_chain(score, stack, *s, ids) == Ordering::Less,
    };
    if replace {
        *best = Some((score, stack.clone()));
    }
    for &j in &successors[node.frame as usize][node.index as usize] {
        walk(video, successors, DetectionRef { frame: node.frame + 1, index: j }, score, stack, best)?;
    }
    stack.pop();
    Ok(())
}

/// `Less` when chain `a` should be preferred over chain `b`.
fn better_chain(sa: f64, a: &[DetectionRef], sb: f64, b: &[DetectionRef]) -> Ordering {
    sb.total_cmp(&sa)
        .then_with(|| a[a.len() - 1].cmp(&b[b.len() - 1]))
        .then_with(|| b.len().cmp(&a.len()))
        .then_with(|| a.iter().rev().map(|r| r.index).cmp(b.iter().rev().map(|r| r.index)))
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Optimal feasible subset of at most `max_paths` candidates under
/// [`set_objective`], by exhaustive enumeration.
///
/// Subsets are visited by size, then lexicographically by index; the first
/// subset reaching the maximum wins.
pub fn brute_force_best_path_set(phi: &[ActionPath], cfg: &AssocConfig) -> Result<PathSet> {
    if phi.is_empty() {
        return Err(Error::EmptyInput("no candidate paths"));
    }
    let n = phi.len();
    let max_k = cfg.max_paths.min(n);
    let subsets: u64 = (1..=max_k as u64).map(|k| binomial(n as u64, k)).fold(0, u64::saturating_add);
    if subsets > ENUMERATION_LIMIT {
        return Err(Error::InstanceTooLarge(format!("{subsets} subsets")));
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    for k in 1..=max_k {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            let members: Vec<&ActionPath> = idx.iter().map(|&i| &phi[i]).collect();
            if is_feasible(&members, cfg.overlap_threshold) {
                let value = set_objective(&members, cfg);
                if best.as_ref().is_none_or(|(b, _)| value > *b) {
                    best = Some((value, idx.clone()));
                }
            }
            if !next_combination(&mut idx, n) {
                break;
            }
        }
    }
    let (value, indices) = best.expect("singletons are always feasible");
    Ok(PathSet {
        paths: indices.iter().map(|&i| phi[i].clone()).collect(),
        indices,
        trace: vec![value],
        max_paths: cfg.max_paths,
        overlap_threshold: cfg.overlap_threshold,
    })
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::tests::scored;

    #[test]
    fn combinations_enumerate_all() {
        let mut idx = vec![0, 1, 2];
        let mut count = 1;
        while next_combination(&mut idx, 8) {
            count += 1;
        }
        assert_eq!(count, 56);
        assert_eq!(binomial(8, 3), 56);
    }

    #[test]
    fn single_chain_is_returned() {
        let mut v = Video::new("v");
        for t in 0..4 {
            scored(&mut v, t, 0.0, 4.0, 0.5 + t as f64);
        }
        let p = brute_force_best_path(&v, &LinkConfig::default()).unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(p.score(), 0.5 + 1.5 + 2.5 + 3.5);
    }

    #[test]
    fn empty_inputs_error() {
        assert!(matches!(brute_force_best_path(&Video::new("v"), &LinkConfig::default()), Err(Error::EmptyInput(_))));
        assert!(matches!(brute_force_best_path_set(&[], &AssocConfig::default()), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn oversized_instances_are_refused() {
        let mut v = Video::new("v");
        // 20 frames x 3 identical boxes: 3^20 chains
        for t in 0..20 {
            for _ in 0..3 {
                scored(&mut v, t, 0.0, 4.0, 1.0);
            }
        }
        assert!(matches!(brute_force_best_path(&v, &LinkConfig::default()), Err(Error::InstanceTooLarge(_))));
    }

    #[test]
    fn singleton_and_infeasible_pairs() {
        let mut v = Video::new("v");
        let mk = |v: &mut Video, score: f64| {
            let ids: Vec<_> = (0..3).map(|t| scored(v, t, 0.0, 4.0, score)).collect();
            ActionPath::from_refs(v, &ids).unwrap()
        };
        let a = mk(&mut v, 1.0);
        let set = brute_force_best_path_set(core::slice::from_ref(&a), &AssocConfig::default()).unwrap();
        assert_eq!(set.indices, vec![0]);

        // co-located paths overlap fully, so only one may be chosen
        let b = mk(&mut v, 2.0);
        let c = mk(&mut v, 1.5);
        let set = brute_force_best_path_set(&[a, b, c], &AssocConfig::default()).unwrap();
        assert_eq!(set.indices, vec![1]);
    }
}
