//! Motion scoring with a positive/negative Gaussian mixture pair, and the
//! combined per-box actionness score.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detection::{Detection, FeatureHistogram, Video};
use crate::error::{Error, Result};
use crate::math::{log_sum_exp, sigmoid};

/// Smallest variance any mixture component may carry.
pub const VARIANCE_FLOOR: f64 = 1e-6;
/// Floor applied to the negative-model density before taking the ratio.
pub const NEGATIVE_DENSITY_FLOOR: f64 = 1e-300;
/// Cap on the likelihood ratio fed to the logistic.
pub const RATIO_CAP: f64 = 1e6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Diagonal-covariance Gaussian mixture.
///
/// Serializes as `{"dim": d, "components": [{"weight", "mean", "variance"}]}`
/// and validates on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GmmDocument", into = "GmmDocument")]
pub struct GmmModel {
    dim: usize,
    components: Vec<GmmComponent>,
}

#[derive(Serialize, Deserialize)]
struct GmmDocument {
    dim: usize,
    components: Vec<GmmComponent>,
}

impl TryFrom<GmmDocument> for GmmModel {
    type Error = Error;

    fn try_from(doc: GmmDocument) -> Result<Self> {
        let model = Self::new(doc.components)?;
        if model.dim != doc.dim {
            return Err(Error::DimensionMismatch { expected: doc.dim, actual: model.dim });
        }
        Ok(model)
    }
}

impl From<GmmModel> for GmmDocument {
    fn from(m: GmmModel) -> Self {
        Self { dim: m.dim, components: m.components }
    }
}

impl GmmModel {
    pub fn new(components: Vec<GmmComponent>) -> Result<Self> {
        let first = components.first().ok_or_else(|| Error::InvalidModel("mixture has no components".into()))?;
        let dim = first.mean.len();
        if dim == 0 {
            return Err(Error::InvalidModel("zero-dimensional mixture".into()));
        }
        let mut total = 0.0;
        for (j, c) in components.iter().enumerate() {
            if c.mean.len() != dim || c.variance.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: if c.mean.len() != dim { c.mean.len() } else { c.variance.len() },
                });
            }
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return Err(Error::InvalidModel(format!("component {j} has weight {}", c.weight)));
            }
            if c.mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::InvalidModel(format!("component {j} has a non-finite mean")));
            }
            if c.variance.iter().any(|v| !(v.is_finite() && *v >= VARIANCE_FLOOR)) {
                return Err(Error::InvalidModel(format!(
                    "component {j} has a variance below the floor {VARIANCE_FLOOR}"
                )));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidModel(format!("weights sum to {total}")));
        }
        Ok(Self { dim, components })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[GmmComponent] {
        &self.components
    }

    /// Natural log of the mixture density at `x`.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: x.len() });
        }
        let terms: Vec<f64> =
            self.components.iter().map(|c| libm::log(c.weight) + log_gaussian(x, &c.mean, &c.variance)).collect();
        Ok(log_sum_exp(&terms))
    }
}

fn log_gaussian(x: &[f64], mean: &[f64], variance: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((xi, mi), vi) in x.iter().zip(mean).zip(variance) {
        let d = xi - mi;
        acc += LN_2PI + libm::log(*vi) + d * d / vi;
    }
    -0.5 * acc
}

/// Mixture density `sum_j w_j N(x; mu_j, diag(var_j))`.
pub fn gmm_density(model: &GmmModel, x: &[f64]) -> Result<f64> {
    Ok(libm::exp(model.log_density(x)?))
}

/// Expectation-maximization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub components: usize,
    pub seed: u64,
    pub max_iterations: usize,
    /// Stop once the log-likelihood improves by less than this.
    pub tolerance: f64,
    pub variance_floor: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self { components: 1, seed: 0, max_iterations: 200, tolerance: 1e-6, variance_floor: VARIANCE_FLOOR }
    }
}

/// Result of an EM run, with the log-likelihood of every evaluated model.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GmmModel,
    /// `log_likelihoods[i]` is the data log-likelihood after `i` M-steps.
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
}

/// Fits a diagonal mixture with `k` components; deterministic per `seed`.
pub fn fit_gmm<S: AsRef<[f64]>>(samples: &[S], k: usize, seed: u64) -> Result<GmmModel> {
    let cfg = EmConfig { components: k, seed, ..EmConfig::default() };
    fit_gmm_em(samples, &cfg).map(|fit| fit.model)
}

/// EM with k-means++ seeded means, pooled initial variances and equal weights.
pub fn fit_gmm_em<S: AsRef<[f64]>>(samples: &[S], cfg: &EmConfig) -> Result<GmmFit> {
    if samples.is_empty() {
        return Err(Error::NoTrainingData);
    }
    let k = cfg.components;
    if k == 0 {
        return Err(Error::InvalidConfig("mixture needs at least one component".into()));
    }
    if k > samples.len() {
        return Err(Error::OverParameterized { components: k, samples: samples.len() });
    }
    let data: Vec<&[f64]> = samples.iter().map(AsRef::as_ref).collect();
    let dim = data[0].len();
    if dim == 0 {
        return Err(Error::InvalidModel("zero-dimensional samples".into()));
    }
    if let Some(bad) = data.iter().find(|x| x.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, actual: bad.len() });
    }
    let floor = cfg.variance_floor.max(VARIANCE_FLOOR);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let means = kmeans_plus_plus(&data, k, &mut rng);
    let pooled = pooled_variance(&data, floor);
    let mut components: Vec<GmmComponent> =
        means.into_iter().map(|mean| GmmComponent { weight: 1.0 / k as f64, mean, variance: pooled.clone() }).collect();

    let n = data.len();
    let mut resp = vec![vec![0.0; k]; n];
    let mut log_likelihoods = Vec::new();
    let mut converged = false;
    let mut terms = vec![0.0; k];
    for iteration in 0..=cfg.max_iterations {
        // E-step
        let mut ll = 0.0;
        for (x, r) in data.iter().zip(resp.iter_mut()) {
            for (t, c) in terms.iter_mut().zip(&components) {
                *t = libm::log(c.weight) + log_gaussian(x, &c.mean, &c.variance);
            }
            let lse = log_sum_exp(&terms);
            ll += lse;
            for (rj, t) in r.iter_mut().zip(&terms) {
                *rj = libm::exp(t - lse);
            }
        }
        let improved = log_likelihoods.last().map(|prev| ll - prev);
        log_likelihoods.push(ll);
        if matches!(improved, Some(delta) if delta < cfg.tolerance) {
            converged = true;
            break;
        }
        if iteration == cfg.max_iterations {
            break;
        }
        // M-step
        for (j, c) in components.iter_mut().enumerate() {
            let nk: f64 = resp.iter().map(|r| r[j]).sum();
            if nk <= f64::MIN_POSITIVE {
                // dead component keeps its parameters
                c.weight = f64::MIN_POSITIVE;
                continue;
            }
            c.weight = nk / n as f64;
            for d in 0..dim {
                let mean = data.iter().zip(&resp).map(|(x, r)| r[j] * x[d]).sum::<f64>() / nk;
                let var = data.iter().zip(&resp).map(|(x, r)| r[j] * (x[d] - mean) * (x[d] - mean)).sum::<f64>() / nk;
                c.mean[d] = mean;
                c.variance[d] = var.max(floor);
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        components.iter_mut().for_each(|c| c.weight /= total);
    }

    let model = GmmModel::new(components)?;
    Ok(GmmFit { model, log_likelihoods, converged })
}

fn kmeans_plus_plus(data: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut nearest: Vec<f64> = data.iter().map(|x| sq(x, data[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, d) in nearest.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // every point coincides with a center already
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (d, x) in nearest.iter_mut().zip(data) {
            *d = d.min(sq(x, data[next]));
        }
    }
    chosen.into_iter().map(|i| data[i].to_vec()).collect()
}

fn pooled_variance(data: &[&[f64]], floor: f64) -> Vec<f64> {
    let n = data.len() as f64;
    let dim = data[0].len();
    (0..dim)
        .map(|d| {
            let mean = data.iter().map(|x| x[d]).sum::<f64>() / n;
            let var = data.iter().map(|x| (x[d] - mean) * (x[d] - mean)).sum::<f64>() / n;
            var.max(floor)
        })
        .collect()
}

/// Positive (action) and negative (background) motion densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionModel {
    pub positive: GmmModel,
    pub negative: GmmModel,
}

impl MotionModel {
    pub fn new(positive: GmmModel, negative: GmmModel) -> Result<Self> {
        if positive.dim() != negative.dim() {
            return Err(Error::DimensionMismatch { expected: positive.dim(), actual: negative.dim() });
        }
        Ok(Self { positive, negative })
    }

    pub fn score(&self, hist: &[f64]) -> Result<f64> {
        motion_score(hist, &self.positive, &self.negative)
    }
}

/// `sigmoid(G_p(h) / G_n(h))`, with `G_n` floored and the ratio capped.
///
/// Evaluated in log space; scaling both densities by the same constant leaves
/// the score unchanged.
pub fn motion_score(hist: &[f64], positive: &GmmModel, negative: &GmmModel) -> Result<f64> {
    let log_p = positive.log_density(hist)?;
    let log_n = negative.log_density(hist)?.max(libm::log(NEGATIVE_DENSITY_FLOOR));
    Ok(sigmoid(ratio_from_logs(log_p, log_n)))
}

fn ratio_from_logs(log_p: f64, log_n: f64) -> f64 {
    let log_ratio = log_p - log_n;
    if log_ratio >= libm::log(RATIO_CAP) {
        RATIO_CAP
    } else {
        libm::exp(log_ratio)
    }
}

/// Motion score used when no mixture pair is supplied: both densities equal.
pub fn neutral_motion_score() -> f64 {
    sigmoid(1.0)
}

/// `S = S_h + lambda_p * S_m`.
pub fn combine(human_score: f64, motion_score: f64, lambda_p: f64) -> f64 {
    human_score + lambda_p * motion_score
}

/// Scores one detection and stores the result in it.
pub fn actionness_score(detection: &mut Detection, motion: Option<&MotionModel>, lambda_p: f64) -> Result<f64> {
    let s_m = match motion {
        Some(m) => m.score(detection.motion_hist.as_slice())?,
        None => neutral_motion_score(),
    };
    let s = combine(detection.human_score, s_m, lambda_p);
    detection.actionness = Some(s);
    Ok(s)
}

/// Scores every detection of a video in place.
pub fn score_video(video: &mut Video, motion: Option<&MotionModel>, lambda_p: f64) -> Result<()> {
    if !(lambda_p.is_finite() && lambda_p >= 0.0) {
        return Err(Error::InvalidConfig(format!("lambda_p must be non-negative, got {lambda_p}")));
    }
    for det in video.frames.iter_mut().flatten() {
        actionness_score(det, motion, lambda_p)?;
    }
    Ok(())
}

/// Fits one mixture per class from labeled histograms.
pub fn fit_motion_model(
    positives: &[FeatureHistogram],
    negatives: &[FeatureHistogram],
    cfg: &EmConfig,
) -> Result<MotionModel> {
    let positive = fit_gmm_em(positives, cfg)?.model;
    let negative = fit_gmm_em(negatives, cfg)?.model;
    MotionModel::new(positive, negative)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn single(mean: Vec<f64>, variance: Vec<f64>) -> GmmModel {
        GmmModel::new(vec![GmmComponent { weight: 1.0, mean, variance }]).unwrap()
    }

    #[test]
    fn density_at_mode_of_unit_gaussian() {
        for d in 1..6 {
            let m = single(vec![0.3; d], vec![1.0; d]);
            let got = gmm_density(&m, &vec![0.3; d]).unwrap();
            let want = libm::pow(2.0 * core::f64::consts::PI, -(d as f64) / 2.0);
            assert!((got - want).abs() < 1e-14 * want.max(1.0), "d={d}");
        }
    }

    #[test]
    fn density_reflection_symmetry() {
        let m = single(vec![1.0, -2.0], vec![0.5, 2.0]);
        let x = [1.7, -1.1];
        let reflected = [2.0 * 1.0 - x[0], 2.0 * -2.0 - x[1]];
        let a = gmm_density(&m, &x).unwrap();
        let b = gmm_density(&m, &reflected).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn duplicate_components_collapse() {
        let one = single(vec![0.2, 0.4], vec![0.1, 0.3]);
        let c = one.components()[0].clone();
        let two =
            GmmModel::new(vec![GmmComponent { weight: 0.5, ..c.clone() }, GmmComponent { weight: 0.5, ..c }]).unwrap();
        let x = [0.0, 0.9];
        let a = gmm_density(&one, &x).unwrap();
        let b = gmm_density(&two, &x).unwrap();
        assert!((a - b).abs() <= 1e-14 * a);
    }

    #[test]
    fn density_dimension_mismatch() {
        let m = single(vec![0.0; 3], vec![1.0; 3]);
        assert!(matches!(gmm_density(&m, &[0.0; 2]), Err(Error::DimensionMismatch { expected: 3, actual: 2 })));
    }

    #[test]
    fn model_validation() {
        let c = |w: f64, v: f64| GmmComponent { weight: w, mean: vec![0.0], variance: vec![v] };
        assert!(GmmModel::new(vec![]).is_err());
        assert!(GmmModel::new(vec![c(0.5, 1.0)]).is_err());
        assert!(GmmModel::new(vec![c(1.0, 1e-7)]).is_err());
        assert!(GmmModel::new(vec![c(0.0, 1.0), c(1.0, 1.0)]).is_err());
        assert!(GmmModel::new(vec![c(0.25, 1.0), c(0.75, 1e-6)]).is_ok());
    }

    #[test]
    fn unit_ratio_is_sigmoid_one() {
        let m = single(vec![0.0, 0.0], vec![1.0, 1.0]);
        let s = motion_score(&[0.4, 0.1], &m, &m).unwrap();
        assert_eq!(s, sigmoid(1.0));
        assert!((s - 0.731_058_578_630_004_9).abs() < 1e-12);
    }

    #[test]
    fn vanishing_positive_density_gives_half() {
        let p = single(vec![1e6], vec![VARIANCE_FLOOR]);
        let n = single(vec![0.0], vec![1.0]);
        assert_eq!(motion_score(&[0.0], &p, &n).unwrap(), 0.5);
    }

    #[test]
    fn underflowing_negative_density_saturates() {
        let p = single(vec![0.0], vec![1.0]);
        let n = single(vec![1e6], vec![VARIANCE_FLOOR]);
        let s = motion_score(&[0.0], &p, &n).unwrap();
        // ratio is capped at 1e6, and sigmoid(1e6) rounds to 1
        assert_eq!(s, sigmoid(RATIO_CAP));
        assert!(s > 1.0 - 1e-12);
    }

    #[test]
    fn actionness_arithmetic() {
        assert!((combine(0.9, 0.5, 1.0) - 1.4).abs() < 1e-15);
        assert_eq!(combine(0.37, 0.99, 0.0), 0.37);
        assert!((combine(0.0, sigmoid(1.0), 0.5) - 0.365_529_289_315_002_4).abs() < 1e-12);
    }

    #[test]
    fn score_video_fills_every_detection() {
        let h = FeatureHistogram::uniform(2);
        let mut v = Video::new("v");
        for f in 0..3 {
            let b = BoundingBox::new(f, 0.0, 0.0, 1.0, 1.0).unwrap();
            v.push(Detection::new(b, 0.6, h.clone(), h.clone(), h.clone()).unwrap());
        }
        score_video(&mut v, None, 1.0).unwrap();
        for (_, d) in v.detections() {
            assert_eq!(d.actionness, Some(0.6 + sigmoid(1.0)));
        }
        assert!(score_video(&mut v, None, -1.0).is_err());
    }

    #[test]
    fn fit_errors() {
        let empty: Vec<Vec<f64>> = Vec::new();
        assert_eq!(fit_gmm(&empty, 1, 0).unwrap_err(), Error::NoTrainingData);
        let two = vec![vec![0.0], vec![1.0]];
        assert!(matches!(fit_gmm(&two, 3, 0), Err(Error::OverParameterized { .. })));
    }

    #[test]
    fn identical_samples_single_component() {
        let data = vec![vec![0.2, 0.3, 0.5]; 10];
        let m = fit_gmm(&data, 1, 7).unwrap();
        let c = &m.components()[0];
        for (m, e) in c.mean.iter().zip([0.2, 0.3, 0.5]) {
            assert!((m - e).abs() < 1e-12);
        }
        assert_eq!(c.variance, vec![VARIANCE_FLOOR; 3]);
    }

    #[test]
    fn single_component_is_closed_form_mle() {
        let data = vec![vec![0.0, 1.0], vec![2.0, 1.0], vec![4.0, 4.0], vec![6.0, 2.0]];
        let m = fit_gmm(&data, 1, 3).unwrap();
        let c = &m.components()[0];
        assert!((c.mean[0] - 3.0).abs() < 1e-12 && (c.mean[1] - 2.0).abs() < 1e-12);
        assert!((c.variance[0] - 5.0).abs() < 1e-12);
        assert!((c.variance[1] - 1.5).abs() < 1e-12);
    }

    fn mixture_samples(n: usize, seed: u64) -> (Vec<Vec<f64>>, [[f64; 3]; 2]) {
        let means = [[0.6, 0.3, 0.1], [0.1, 0.3, 0.6]];
        let sd = [[0.03, 0.02, 0.03], [0.02, 0.04, 0.03]];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n)
            .map(|_| {
                let j = usize::from(rng.random::<f64>() < 0.4);
                (0..3).map(|d| Normal::new(means[j][d], sd[j][d]).unwrap().sample(&mut rng)).collect()
            })
            .collect();
        (data, means)
    }

    #[test]
    fn recovers_two_component_means() {
        let (data, truth) = mixture_samples(500, 11);
        let fit = fit_gmm_em(&data, &EmConfig { components: 2, seed: 5, ..EmConfig::default() }).unwrap();
        let got: Vec<&[f64]> = fit.model.components().iter().map(|c| c.mean.as_slice()).collect();
        let linf = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let direct = linf(got[0], &truth[0]).max(linf(got[1], &truth[1]));
        let swapped = linf(got[0], &truth[1]).max(linf(got[1], &truth[0]));
        assert!(direct.min(swapped) < 0.05, "{direct} {swapped}");
        for w in fit.log_likelihoods.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn fit_is_deterministic_per_seed() {
        let (data, _) = mixture_samples(120, 2);
        let a = fit_gmm(&data, 3, 9).unwrap();
        let b = fit_gmm(&data, 3, 9).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn ratio_invariance_under_common_scaling(x in -2.0..2.0f64, shift in -30.0..30.0f64) {
            let p = single(vec![0.5], vec![0.7]);
            let n = single(vec![-0.5], vec![1.3]);
            let lp = p.log_density(&[x]).unwrap();
            let ln = n.log_density(&[x]).unwrap();
            let base = sigmoid(ratio_from_logs(lp, ln));
            let scaled = sigmoid(ratio_from_logs(lp + shift, ln + shift));
            prop_assert!((base - scaled).abs() < 1e-12);
            prop_assert!(base > 0.0 && base < 1.0);
        }

        #[test]
        fn sigmoid_monotone(a in -50.0..50.0f64, b in -50.0..50.0f64) {
            if a <= b {
                prop_assert!(sigmoid(a) <= sigmoid(b));
            }
        }

        #[test]
        fn actionness_monotone(h1 in 0.0..1.0f64, h2 in 0.0..1.0f64, m1 in 0.0..1.0f64, m2 in 0.0..1.0f64, l in 0.0..3.0f64) {
            let (hl, hh) = if h1 <= h2 { (h1, h2) } else { (h2, h1) };
            let (ml, mh) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
            prop_assert!(combine(hl, ml, l) <= combine(hh, mh, l));
        }

        #[test]
        fn em_log_likelihood_never_decreases(seed in 0u64..40, k in 1usize..4) {
            let (data, _) = mixture_samples(60, seed);
            let fit = fit_gmm_em(&data, &EmConfig { components: k, seed, ..EmConfig::default() }).unwrap();
            for w in fit.log_likelihoods.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-9 * w[0].abs());
            }
        }
    }
}
