//! Lloyd's K-means with seeded k-means++ initialization and restarts.

use crate::error::{Error, Result};
use crate::math::{DetRng, Matrix};

/// Seeded initializations tried per call; the lowest-inertia run wins.
/// Restarts make tiny instances reliably land on the optimal partition.
const RESTARTS: usize = 8;

/// Fitted clustering.
#[derive(Debug, Clone)]
pub struct ClusterModel {
    pub n_clusters: usize,
    pub dim: usize,
    /// `n_clusters x dim` centroid matrix.
    pub centroids: Matrix,
    /// Point index -> cluster index; every point's centroid is its nearest.
    pub assignments: Vec<usize>,
    pub inertia: f64,
    /// Inertia at each Lloyd assignment step of the winning run;
    /// non-increasing.
    pub inertia_trace: Vec<f64>,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid index and squared distance; ties break to the lowest
/// index.
pub fn nearest_centroid(point: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = squared_distance(point, centroids.row(0));
    for c in 1..centroids.rows() {
        let d = squared_distance(point, centroids.row(c));
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    (best, best_d)
}

fn kmeans_pp_init(points: &[Vec<f64>], n_clusters: usize, rng: &mut DetRng) -> Matrix {
    let dim = points[0].len();
    let mut centroids = Matrix::zeros(n_clusters, dim);
    let first = rng.range(points.len());
    centroids.row_mut(0).copy_from_slice(&points[first]);

    let mut dists: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, centroids.row(0)))
        .collect();
    for c in 1..n_clusters {
        let chosen = rng.weighted(&dists);
        centroids.row_mut(c).copy_from_slice(&points[chosen]);
        for (d, p) in dists.iter_mut().zip(points.iter()) {
            let nd = squared_distance(p, centroids.row(c));
            if nd < *d {
                *d = nd;
            }
        }
    }
    centroids
}

struct LloydRun {
    centroids: Matrix,
    assignments: Vec<usize>,
    inertia: f64,
    trace: Vec<f64>,
}

fn lloyd(points: &[Vec<f64>], mut centroids: Matrix, max_iters: usize) -> LloydRun {
    let n = points.len();
    let k = centroids.rows();
    let dim = centroids.cols();
    let mut assignments = vec![usize::MAX; n];
    let mut trace = Vec::new();

    for _ in 0..max_iters.max(1) {
        // Assignment step; inertia is evaluated here, against the current
        // centroids, so the recorded sequence is non-increasing.
        let mut inertia = 0.0;
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest_centroid(p, &centroids);
            inertia += d;
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
        }
        if let Some(&prev) = trace.last() {
            debug_assert!(
                inertia <= prev * (1.0 + 1e-12) + 1e-12,
                "inertia increased: {prev} -> {inertia}"
            );
        }
        trace.push(inertia);
        if !changed && trace.len() > 1 {
            break;
        }

        // Update step.
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(assignments.iter()) {
            counts[c] += 1;
            for (j, &v) in p.iter().enumerate() {
                sums[c * dim + j] += v;
            }
        }
        // Empty clusters reseed to the point farthest from its centroid.
        let mut claimed: Vec<usize> = Vec::new();
        for c in 0..k {
            if counts[c] > 0 {
                let row = centroids.row_mut(c);
                for j in 0..dim {
                    row[j] = sums[c * dim + j] / counts[c] as f64;
                }
            } else {
                let mut far_i = 0;
                let mut far_d = -1.0;
                for (i, p) in points.iter().enumerate() {
                    if claimed.contains(&i) {
                        continue;
                    }
                    let d = squared_distance(p, centroids.row(assignments[i]));
                    if d > far_d {
                        far_d = d;
                        far_i = i;
                    }
                }
                claimed.push(far_i);
                centroids.row_mut(c).copy_from_slice(&points[far_i]);
            }
        }
    }

    let inertia = *trace.last().expect("at least one iteration");
    LloydRun {
        centroids,
        assignments,
        inertia,
        trace,
    }
}

/// Cluster `points` into `n_clusters` groups. Deterministic in `seed`.
pub fn kmeans(
    points: &[Vec<f64>],
    n_clusters: usize,
    seed: u64,
    max_iters: usize,
) -> Result<ClusterModel> {
    if n_clusters == 0 {
        return Err(Error::InvalidArg("kmeans: zero clusters".into()));
    }
    if points.is_empty() || n_clusters > points.len() {
        return Err(Error::InvalidArg(format!(
            "kmeans: {} clusters for {} points",
            n_clusters,
            points.len()
        )));
    }
    let dim = points[0].len();
    if dim == 0 || points.iter().any(|p| p.len() != dim) {
        return Err(Error::DimMismatch("kmeans: ragged input".into()));
    }

    let root = DetRng::new(seed);
    let mut best: Option<LloydRun> = None;
    for restart in 0..RESTARTS {
        let mut rng = root.fork(restart as u64);
        let init = kmeans_pp_init(points, n_clusters, &mut rng);
        let run = lloyd(points, init, max_iters);
        let better = match &best {
            None => true,
            Some(b) => run.inertia < b.inertia,
        };
        if better {
            best = Some(run);
        }
    }
    let run = best.expect("at least one restart");

    // Post-check: every assignment is to the nearest centroid.
    for (p, &c) in points.iter().zip(run.assignments.iter()) {
        let (nearest, _) = nearest_centroid(p, &run.centroids);
        debug_assert_eq!(nearest, c);
    }

    Ok(ClusterModel {
        n_clusters,
        dim,
        centroids: run.centroids,
        assignments: run.assignments,
        inertia: run.inertia,
        inertia_trace: run.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn total_variance_around_mean(points: &[Vec<f64>]) -> f64 {
        let dim = points[0].len();
        let mut mean = vec![0.0; dim];
        for p in points {
            for (m, v) in mean.iter_mut().zip(p) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= points.len() as f64;
        }
        points.iter().map(|p| squared_distance(p, &mean)).sum()
    }

    /// Exhaustive best 2-partition inertia.
    fn brute_force_two_cluster_inertia(points: &[Vec<f64>]) -> f64 {
        let n = points.len();
        let dim = points[0].len();
        let mut best = f64::INFINITY;
        for mask in 1..(1u32 << n) - 1 {
            let mut inertia = 0.0;
            for side in 0..2 {
                let members: Vec<&Vec<f64>> = (0..n)
                    .filter(|&i| ((mask >> i) & 1) as usize == side)
                    .map(|i| &points[i])
                    .collect();
                if members.is_empty() {
                    continue;
                }
                let mut mean = vec![0.0; dim];
                for p in &members {
                    for (m, v) in mean.iter_mut().zip(p.iter()) {
                        *m += v;
                    }
                }
                for m in &mut mean {
                    *m /= members.len() as f64;
                }
                for p in &members {
                    inertia += squared_distance(p, &mean);
                }
            }
            if inertia < best {
                best = inertia;
            }
        }
        best
    }

    #[test]
    fn single_cluster_is_global_mean_with_total_variance() {
        let points = vec![
            vec![1.0, 0.0],
            vec![3.0, 4.0],
            vec![-2.0, 2.0],
            vec![0.0, -6.0],
        ];
        let model = kmeans(&points, 1, 0, 100).unwrap();
        assert_eq!(model.centroids.row(0), &[0.5, 0.0]);
        assert!((model.inertia - total_variance_around_mean(&points)).abs() < 1e-9);
        assert!(model.assignments.iter().all(|&c| c == 0));
    }

    #[test]
    fn square_corners_match_brute_force_for_any_seed() {
        let points = vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![10.0, 0.0],
            vec![10.0, 1.0],
        ];
        let oracle = brute_force_two_cluster_inertia(&points);
        for seed in 0..10 {
            let model = kmeans(&points, 2, seed, 100).unwrap();
            assert!(
                (model.inertia - oracle).abs() < 1e-9,
                "seed {seed}: {} vs {}",
                model.inertia,
                oracle
            );
        }
    }

    #[test]
    fn one_point_per_cluster_is_exact() {
        let points = vec![vec![1.0], vec![5.0], vec![9.0]];
        let model = kmeans(&points, 3, 7, 100).unwrap();
        assert_eq!(model.inertia, 0.0);
        let mut seen = model.assignments.clone();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2]);
    }

    #[test]
    fn inertia_trace_is_non_increasing() {
        let mut rng = DetRng::new(40);
        let points: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..5).map(|_| rng.normal()).collect())
            .collect();
        let model = kmeans(&points, 4, 1, 50).unwrap();
        for pair in model.inertia_trace.windows(2) {
            assert!(pair[1] <= pair[0] * (1.0 + 1e-12) + 1e-12);
        }
        assert!(model.inertia_trace.len() >= 2);
    }

    #[test]
    fn final_assignments_are_nearest_centroids() {
        let mut rng = DetRng::new(41);
        let points: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..3).map(|_| rng.normal()).collect())
            .collect();
        let model = kmeans(&points, 3, 2, 50).unwrap();
        for (p, &c) in points.iter().zip(model.assignments.iter()) {
            assert_eq!(nearest_centroid(p, &model.centroids).0, c);
        }
    }

    #[test]
    fn rejects_bad_cluster_counts() {
        let points = vec![vec![0.0], vec![1.0]];
        assert!(kmeans(&points, 0, 0, 10).is_err());
        assert!(kmeans(&points, 3, 0, 10).is_err());
    }

    #[test]
    fn deterministic_in_seed() {
        let mut rng = DetRng::new(42);
        let points: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..4).map(|_| rng.normal()).collect())
            .collect();
        let a = kmeans(&points, 3, 5, 100).unwrap();
        let b = kmeans(&points, 3, 5, 100).unwrap();
        assert_eq!(a.assignments, b.assignments);
        assert_eq!(a.inertia, b.inertia);
    }
}
