//! Fast solvers against the exhaustive references on small random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tubelink_core::association::{is_feasible, set_objective};
use tubelink_core::oracle::{brute_force_best_path, brute_force_best_path_set};
use tubelink_core::path::path_overlap;
use tubelink_core::{
    extract_all_path_sets, forward_backward_search, greedy_associate, ActionPath, AssocConfig, BoundingBox, Detection,
    DetectionRef, FeatureHistogram, SearchConfig, Video,
};

fn detection(frame: u32, cx: f64, cy: f64, color: Vec<f64>, score: f64) -> Detection {
    let b = BoundingBox::new(frame, cx, cy, 10.0, 10.0).unwrap();
    let g = FeatureHistogram::uniform(2);
    let mut d = Detection::new(b, 0.5, g.clone(), FeatureHistogram::normalized(color).unwrap(), g).unwrap();
    d.actionness = Some(score);
    d
}

/// Up to 6 frames of up to 5 boxes on a coarse grid, so that roughly half of
/// the adjacent pairs link.
fn random_video(rng: &mut ChaCha8Rng) -> Video {
    let frames = rng.random_range(1..=6);
    let mut v = Video::new("rand").with_frame_count(frames);
    for t in 0..frames as u32 {
        for _ in 0..rng.random_range(1..=5) {
            let cx = 4.0 * rng.random_range(0..4) as f64;
            let cy = 4.0 * rng.random_range(0..2) as f64;
            let color = if rng.random_bool(0.8) { vec![0.7, 0.3] } else { vec![0.1, 0.9] };
            v.push(detection(t, cx, cy, color, rng.random_range(0.0..2.0)));
        }
    }
    v
}

#[test]
fn search_matches_exhaustive_optimum() {
    let cfg = SearchConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..200 {
        let v = random_video(&mut rng);
        let fast = forward_backward_search(&v, &cfg).unwrap();
        let exact = brute_force_best_path(&v, &cfg.link).unwrap();
        assert_eq!(fast[0].score().to_bits(), exact.score().to_bits(), "case {case}");
        assert!(fast.windows(2).all(|w| w[0].score() >= w[1].score()));
    }
}

#[test]
fn search_with_pool_of_one_still_finds_optimum() {
    let cfg = SearchConfig { pool_size: 1, ..SearchConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let v = random_video(&mut rng);
        let fast = forward_backward_search(&v, &cfg).unwrap();
        assert_eq!(fast.len(), 1);
        assert_eq!(fast[0].score(), brute_force_best_path(&v, &cfg.link).unwrap().score());
    }
}

/// Candidates are random contiguous runs over a shared grid of detections,
/// so their coverage overlaps heavily.
fn random_candidates(rng: &mut ChaCha8Rng, count: usize, frames: u32, per_frame: u32) -> Vec<ActionPath> {
    let mut v = Video::new("pool").with_frame_count(frames as usize);
    for t in 0..frames {
        for i in 0..per_frame {
            let color = vec![rng.random_range(0.05..1.0), rng.random_range(0.05..1.0)];
            v.push(detection(t, 12.0 * i as f64, 0.0, color, rng.random_range(0.0..1.0)));
        }
    }
    (0..count)
        .map(|_| {
            let start = rng.random_range(0..frames);
            let len = rng.random_range(1..=frames - start);
            let ids: Vec<DetectionRef> = (start..start + len)
                .map(|frame| DetectionRef { frame, index: rng.random_range(0..per_frame) })
                .collect();
            ActionPath::from_refs(&v, &ids).unwrap()
        })
        .collect()
}

#[test]
fn greedy_coverage_within_one_minus_inverse_e() {
    let bound = 1.0 - (-1.0f64).exp();
    let cfg = AssocConfig { max_paths: 3, overlap_threshold: 1.0, use_similarity: false, ..AssocConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 1.0;
    for case in 0..100 {
        let phi = random_candidates(&mut rng, 8, 8, 3);
        let greedy = greedy_associate(&phi, &cfg);
        let best = brute_force_best_path_set(&phi, &cfg).unwrap();
        let refs: Vec<&ActionPath> = greedy.paths.iter().collect();
        assert_eq!(greedy.objective(), set_objective(&refs, &cfg));
        let ratio = greedy.objective() / best.objective();
        assert!(ratio >= bound, "case {case}: ratio {ratio}");
        assert!(ratio <= 1.0 + 1e-12);
        worst = worst.min(ratio);
    }
    println!("worst greedy/optimal coverage ratio: {worst:.4}");
}

#[test]
fn greedy_ratio_with_similarity_is_recorded() {
    let cfg = AssocConfig { max_paths: 3, overlap_threshold: 1.0, ..AssocConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut ratios = Vec::new();
    for _ in 0..100 {
        let phi = random_candidates(&mut rng, 8, 8, 3);
        let greedy = greedy_associate(&phi, &cfg);
        let refs: Vec<&ActionPath> = greedy.paths.iter().collect();
        let best = brute_force_best_path_set(&phi, &cfg).unwrap();
        let ratio = set_objective(&refs, &cfg) / best.objective();
        assert!(ratio.is_finite() && ratio > 0.0 && ratio <= 1.0 + 1e-12);
        ratios.push(ratio);
    }
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    println!("with similarity: min ratio {min:.4}, mean ratio {mean:.4}");
}

#[test]
fn emitted_sets_never_violate_constraints() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = 0;
    for _ in 0..1000 {
        let count = rng.random_range(1..=20);
        let phi = random_candidates(&mut rng, count, 12, 3);
        let cfg = AssocConfig {
            max_paths: rng.random_range(1..=6),
            overlap_threshold: rng.random_range(0.0..1.0),
            use_similarity: rng.random_bool(0.5),
            min_path_duration: rng.random_range(1..=6),
            ..AssocConfig::default()
        };
        for set in extract_all_path_sets(&phi, &cfg) {
            let pairwise_ok = set
                .paths
                .iter()
                .enumerate()
                .all(|(i, p)| set.paths[i + 1..].iter().all(|q| path_overlap(p, q) <= cfg.overlap_threshold));
            if set.len() > cfg.max_paths || !pairwise_ok || !set.satisfies_constraints() {
                violations += 1;
            }
        }
    }
    assert_eq!(violations, 0);
}

#[test]
fn oracle_set_is_feasible_and_dominates_greedy() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let phi = random_candidates(&mut rng, 7, 8, 3);
        let cfg = AssocConfig { max_paths: 3, overlap_threshold: 0.4, use_similarity: false, ..AssocConfig::default() };
        let best = brute_force_best_path_set(&phi, &cfg).unwrap();
        let refs: Vec<&ActionPath> = best.paths.iter().collect();
        assert!(is_feasible(&refs, cfg.overlap_threshold));
        assert!(best.objective() >= greedy_associate(&phi, &cfg).objective());
    }
}
