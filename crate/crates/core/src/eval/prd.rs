use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::kmeans::kmeans_binary;
use super::EvalError;
use crate::encoding::{ConfigMatrix, CELLS};

pub const DEFAULT_CLUSTERS: usize = 20;
pub const DEFAULT_ANGLES: usize = 1001;

const SUM_TOLERANCE: f64 = 1e-9;
const KMEANS_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrdPoint {
    pub theta: f64,
    pub lambda: f64,
    /// precision
    pub alpha: f64,
    /// recall
    pub beta: f64,
}

/// Achievable (precision, recall) pairs of a generated distribution against
/// a reference one, one point per sweep angle in increasing order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrdCurve {
    pub points: Vec<PrdPoint>,
    pub num_angles: usize,
    pub num_clusters: Option<usize>,
    pub real_size: Option<usize>,
    pub gen_size: Option<usize>,
}

impl PrdCurve {
    /// Trapezoidal area under α as a function of β.
    pub fn auc(&self) -> f64 {
        let mut pts: Vec<(f64, f64)> = self.points.iter().map(|p| (p.beta, p.alpha)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum()
    }

    pub fn max_alpha_beta(&self) -> (f64, f64) {
        self.points.iter().fold((0.0f64, 0.0f64), |(a, b), p| (a.max(p.alpha), b.max(p.beta)))
    }
}

/// `num_angles` angles spaced evenly strictly inside (0, π/2). An odd count
/// puts the middle angle exactly at π/4.
pub fn angle_grid(num_angles: usize) -> Vec<f64> {
    (0..num_angles)
        .map(|i| (i + 1) as f64 / (num_angles + 1) as f64 * FRAC_PI_2)
        .collect()
}

fn check_histogram(name: &str, h: &[f64]) -> Result<(), EvalError> {
    if h.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(EvalError::NotNormalized(format!("{name} has negative or non-finite entries")));
    }
    let sum: f64 = h.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(EvalError::NotNormalized(format!("{name} sums to {sum}")));
    }
    Ok(())
}

/// PRD curve of `q` (generated) against `p` (reference):
/// `α(λ) = Σ min(λ·p_i, q_i)` and `β(λ) = α(λ)/λ` for `λ = tan θ`.
pub fn prd_from_histograms(p: &[f64], q: &[f64], num_angles: usize) -> Result<PrdCurve, EvalError> {
    if p.len() != q.len() {
        return Err(EvalError::InvalidInput(format!(
            "histograms have {} and {} bins",
            p.len(),
            q.len()
        )));
    }
    if num_angles < 2 {
        return Err(EvalError::InvalidInput("need at least two angles".into()));
    }
    check_histogram("reference histogram", p)?;
    check_histogram("generated histogram", q)?;
    let mid = (num_angles % 2 == 1).then_some(num_angles / 2);
    let points = angle_grid(num_angles)
        .into_iter()
        .enumerate()
        .map(|(i, theta)| {
            // tan(π/4) rounds below 1
            let lambda = if Some(i) == mid { 1.0 } else { theta.tan() };
            let alpha: f64 = p.iter().zip(q).map(|(&pi, &qi)| (lambda * pi).min(qi)).sum();
            let beta = alpha / lambda;
            PrdPoint {
                theta,
                lambda,
                alpha: alpha.clamp(0.0, 1.0),
                beta: beta.clamp(0.0, 1.0),
            }
        })
        .collect();
    Ok(PrdCurve {
        points,
        num_angles,
        num_clusters: None,
        real_size: None,
        gen_size: None,
    })
}

fn ones(m: &ConfigMatrix) -> Vec<usize> {
    m.to_cells()
        .iter()
        .enumerate()
        .filter_map(|(i, &v)| (v == 1).then_some(i))
        .collect()
}

/// Cluster-assignment histograms of the two sample sets after k-means on
/// their pooled flattened matrices. The pool is put into a canonical order
/// first, so the result does not depend on the order of either list.
pub fn cluster_histograms(
    real: &[ConfigMatrix],
    gen: &[ConfigMatrix],
    num_clusters: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
    if real.is_empty() || gen.is_empty() {
        return Err(EvalError::EmptyInput("both sample lists must be non-empty".into()));
    }
    let pooled = real.len() + gen.len();
    if num_clusters == 0 || num_clusters > pooled {
        return Err(EvalError::DegenerateClustering {
            clusters: num_clusters,
            samples: pooled,
        });
    }
    if num_clusters == 1 {
        log::warn!("a single cluster makes every PRD curve pass through (1, 1)");
    }
    // (cells, source) sorted: identical matrices are interchangeable
    let mut pool: Vec<(Vec<usize>, bool)> = real
        .iter()
        .map(|m| (ones(m), true))
        .chain(gen.iter().map(|m| (ones(m), false)))
        .collect();
    pool.sort();
    let points: Vec<Vec<usize>> = pool.iter().map(|(p, _)| p.clone()).collect();
    let assignment = kmeans_binary(&points, CELLS, num_clusters, seed, KMEANS_ITERATIONS);
    let mut p = vec![0.0; num_clusters];
    let mut q = vec![0.0; num_clusters];
    for ((_, is_real), &a) in pool.iter().zip(&assignment) {
        if *is_real {
            p[a] += 1.0;
        } else {
            q[a] += 1.0;
        }
    }
    p.iter_mut().for_each(|v| *v /= real.len() as f64);
    q.iter_mut().for_each(|v| *v /= gen.len() as f64);
    Ok((p, q))
}

/// PRD curve from samples via [`cluster_histograms`].
pub fn prd_from_samples(
    real: &[ConfigMatrix],
    gen: &[ConfigMatrix],
    num_clusters: usize,
    num_angles: usize,
    seed: u64,
) -> Result<PrdCurve, EvalError> {
    let (p, q) = cluster_histograms(real, gen, num_clusters, seed)?;
    let mut curve = prd_from_histograms(&renormalize(p), &renormalize(q), num_angles)?;
    curve.num_clusters = Some(num_clusters);
    curve.real_size = Some(real.len());
    curve.gen_size = Some(gen.len());
    Ok(curve)
}

/// Absorbs rounding drift from count/total divisions.
fn renormalize(mut h: Vec<f64>) -> Vec<f64> {
    let s: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= s);
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(p: &[f64], q: &[f64], lambda: f64) -> (f64, f64) {
        let mut a = 0.0;
        for i in 0..p.len() {
            a += if lambda * p[i] < q[i] { lambda * p[i] } else { q[i] };
        }
        (a, a / lambda)
    }

    #[test]
    fn worked_example() {
        let c = prd_from_histograms(&[0.5, 0.5], &[1.0, 0.0], 5).unwrap();
        let mid = c.points[2];
        assert_eq!(mid.lambda, 1.0);
        assert!((mid.theta - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert_eq!((mid.alpha, mid.beta), (0.5, 0.5));
    }

    #[test]
    fn identical_and_disjoint() {
        let p = [0.1, 0.2, 0.3, 0.4];
        let c = prd_from_histograms(&p, &p, DEFAULT_ANGLES).unwrap();
        let mid = c.points[DEFAULT_ANGLES / 2];
        assert!((mid.alpha - 1.0).abs() < 1e-12 && (mid.beta - 1.0).abs() < 1e-12);
        let d = prd_from_histograms(&[0.5, 0.5, 0.0], &[0.0, 0.0, 1.0], 11).unwrap();
        assert!(d.points.iter().all(|pt| pt.alpha == 0.0 && pt.beta == 0.0));
        assert_eq!(d.auc(), 0.0);
    }

    #[test]
    fn rejects_unnormalized() {
        assert!(matches!(
            prd_from_histograms(&[0.5, 0.6], &[0.5, 0.5], 3),
            Err(EvalError::NotNormalized(_))
        ));
        assert!(prd_from_histograms(&[1.0], &[0.5, 0.5], 3).is_err());
    }

    #[test]
    fn identical_distributions_have_unit_area() {
        let p = [0.25; 4];
        let c = prd_from_histograms(&p, &p, DEFAULT_ANGLES).unwrap();
        assert!((c.auc() - 1.0).abs() < 0.01, "{}", c.auc());
    }

    fn histogram(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, len).prop_filter_map("non-zero", |v| {
            let s: f64 = v.iter().sum();
            (s > 0.0).then(|| v.iter().map(|x| x / s).collect())
        })
    }

    fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..=16).prop_flat_map(|n| (histogram(n), histogram(n)))
    }

    proptest! {
        #[test]
        fn matches_brute_force((p, q) in pair()) {
            let c = prd_from_histograms(&p, &q, 101).unwrap();
            for pt in &c.points {
                let (a, b) = brute(&p, &q, pt.lambda);
                prop_assert!((pt.alpha - a.clamp(0.0, 1.0)).abs() <= 1e-9);
                prop_assert!((pt.beta - b.clamp(0.0, 1.0)).abs() <= 1e-9);
                prop_assert!((0.0..=1.0).contains(&pt.alpha) && (0.0..=1.0).contains(&pt.beta));
            }
            // α never decreases while β never increases along the sweep
            for w in c.points.windows(2) {
                prop_assert!(w[1].alpha >= w[0].alpha - 1e-12);
                prop_assert!(w[1].beta <= w[0].beta + 1e-12);
            }
        }

        #[test]
        fn swapping_mirrors_the_curve((p, q) in pair()) {
            let n = 51;
            let a = prd_from_histograms(&p, &q, n).unwrap();
            let b = prd_from_histograms(&q, &p, n).unwrap();
            for i in 0..n {
                let (x, y) = (a.points[i], b.points[n - 1 - i]);
                prop_assert!((x.alpha - y.beta).abs() < 1e-9);
                prop_assert!((x.beta - y.alpha).abs() < 1e-9);
            }
        }
    }
}
