use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Lloyd's algorithm with k-means++ seeding, for points in `{0,1}^dim`
/// given by the positions of their ones.
///
/// Returns one cluster index per point. Ties in assignment go to the lowest
/// cluster index; an emptied cluster keeps its previous center. The result
/// depends only on the point order and `seed`.
pub fn kmeans_binary(points: &[Vec<usize>], dim: usize, k: usize, seed: u64, max_iter: usize) -> Vec<usize> {
    assert!(k >= 1 && k <= points.len(), "need 1 <= k <= number of points");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_centers(points, dim, k, &mut rng);
    let mut assignment = vec![usize::MAX; points.len()];
    for _ in 0..max_iter.max(1) {
        let norms: Vec<f64> = centers.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
        let mut changed = false;
        for (p, slot) in points.iter().zip(assignment.iter_mut()) {
            let best = nearest(p, &centers, &norms).0;
            if best != *slot {
                *slot = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for &i in p {
                sums[a][i] += 1.0;
            }
        }
        for ((center, sum), &count) in centers.iter_mut().zip(sums).zip(&counts) {
            if count > 0 {
                *center = sum.into_iter().map(|s| s / count as f64).collect();
            }
        }
    }
    assignment
}

/// Closest center and its squared distance:
/// `‖x − c‖² = |x| − 2 Σ_{i ∈ x} c_i + ‖c‖²`.
fn nearest(point: &[usize], centers: &[Vec<f64>], norms: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let dot: f64 = point.iter().map(|&i| c[i]).sum();
        let d = point.len() as f64 - 2.0 * dot + norms[j];
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn seed_centers<R: Rng>(points: &[Vec<usize>], dim: usize, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let dense = |p: &[usize]| {
        let mut v = vec![0.0; dim];
        for &i in p {
            v[i] = 1.0;
        }
        v
    };
    let mut centers = vec![dense(&points[rng.random_range(0..points.len())])];
    while centers.len() < k {
        let norms: Vec<f64> = centers.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
        let weights: Vec<f64> = points.iter().map(|p| nearest(p, &centers, &norms).1.max(0.0)).collect();
        let next = match WeightedIndex::new(&weights) {
            Ok(dist) => dist.sample(rng),
            // every point already coincides with a center
            Err(_) => rng.random_range(0..points.len()),
        };
        centers.push(dense(&points[next]));
    }
    centers
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_well_spaced_groups() {
        // three groups of points on disjoint coordinates
        let mut points = Vec::new();
        for g in 0..3 {
            for j in 0..10 {
                let base = g * 10;
                points.push(vec![base, base + 1 + j % 3, base + 5]);
            }
        }
        let a = kmeans_binary(&points, 30, 3, 1, 100);
        for g in 0..3 {
            let first = a[g * 10];
            assert!(a[g * 10..(g + 1) * 10].iter().all(|&x| x == first));
        }
        assert_ne!(a[0], a[10]);
        assert_ne!(a[10], a[20]);
        assert_ne!(a[0], a[20]);
    }

    #[test]
    fn distance_identity_matches_dense_computation() {
        let point = vec![1, 4, 6];
        let center = vec![0.5, 0.25, 0.0, 1.0, 0.75, 0.0, 0.1];
        let dense = [0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0];
        let direct: f64 = dense.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum();
        let norm = center.iter().map(|v| v * v).sum::<f64>();
        let (_, d) = nearest(&point, std::slice::from_ref(&center), &[norm]);
        assert!((d - direct).abs() < 1e-12);
    }

    #[test]
    fn identical_points_and_seed_determinism() {
        let points = vec![vec![0, 1]; 5];
        assert_eq!(kmeans_binary(&points, 4, 3, 0, 10), vec![0; 5]);
        let mixed: Vec<Vec<usize>> = (0..40).map(|i| vec![i % 7, 7 + i % 5]).collect();
        assert_eq!(kmeans_binary(&mixed, 12, 4, 9, 50), kmeans_binary(&mixed, 12, 4, 9, 50));
    }
}
