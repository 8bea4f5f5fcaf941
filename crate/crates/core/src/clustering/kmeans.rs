use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{distinct_points, sq_dist, ClusterError, ClusterParams, Point};
use crate::rng::substream;

/// Best-of-restarts Lloyd result for one k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansFit {
    pub k: usize,
    pub centroids: Vec<Point>,
    pub assignment: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    /// Index of the restart that produced this fit.
    pub restart: usize,
}

/// Lloyd's algorithm with k-means++ seeding; the lowest-inertia restart wins
/// (earliest restart on exact ties). Restart `r` draws from its own
/// substream of `params.seed`, so results do not depend on scheduling.
pub fn kmeans(points: &[Point], k: usize, params: &ClusterParams) -> Result<KMeansFit, ClusterError> {
    if k == 0 {
        return Err(ClusterError::ZeroK);
    }
    let distinct = distinct_points(points);
    if k > distinct {
        return Err(ClusterError::TooFewDistinctPoints { k, distinct });
    }
    if params.n_restarts == 0 || params.max_iters == 0 {
        return Err(ClusterError::InvalidParams("n_restarts and max_iters must be positive".into()));
    }
    let fits: Vec<KMeansFit> = (0..params.n_restarts)
        .into_par_iter()
        .map(|r| run_once(points, k, params, r).0)
        .collect();
    Ok(fits
        .into_iter()
        .reduce(|best, f| if f.inertia < best.inertia { f } else { best })
        .expect("at least one restart"))
}

/// One restart. Also returns the inertia after every update step.
pub(crate) fn run_once(points: &[Point], k: usize, params: &ClusterParams, restart: usize) -> (KMeansFit, Vec<f64>) {
    let tag = ((k as u64) << 32) | restart as u64;
    let mut rng = substream(params.seed, tag);
    let mut centroids = plus_plus_seeds(points, k, &mut rng);
    let mut assignment = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut prev = f64::INFINITY;

    while iterations < params.max_iters {
        iterations += 1;
        let changed = assign(points, &centroids, &mut assignment);
        repair_empty(points, &centroids, &mut assignment, k);
        centroids = means(points, &assignment, k);
        let inertia = inertia_of(points, &centroids, &assignment);
        history.push(inertia);
        if !changed || prev - inertia <= params.tol {
            break;
        }
        prev = inertia;
    }
    if hartigan_polish(points, &mut centroids, &mut assignment, k) {
        history.push(inertia_of(points, &centroids, &assignment));
    }
    let inertia = inertia_of(points, &centroids, &assignment);
    (
        KMeansFit {
            k,
            centroids,
            assignment,
            inertia,
            iterations,
            restart,
        },
        history,
    )
}

fn plus_plus_seeds<R: Rng>(points: &[Point], k: usize, rng: &mut R) -> Vec<Point> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        // k <= distinct points guarantees some positive mass remains
        let mut target = rng.random::<f64>() * total;
        let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        let c = points[pick];
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Nearest-centroid assignment (lowest index on ties). Returns whether any
/// point moved.
fn assign(points: &[Point], centroids: &[Point], assignment: &mut [usize]) -> bool {
    let mut changed = false;
    for (p, slot) in points.iter().zip(assignment.iter_mut()) {
        let best = nearest(p, centroids);
        if *slot != best {
            *slot = best;
            changed = true;
        }
    }
    changed
}

pub(crate) fn nearest(p: &Point, centroids: &[Point]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

/// Moves the point farthest from its centroid into each empty cluster.
fn repair_empty(points: &[Point], centroids: &[Point], assignment: &mut [usize], k: usize) {
    let mut sizes = vec![0usize; k];
    for &c in assignment.iter() {
        sizes[c] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let victim = (0..points.len())
            .filter(|&i| sizes[assignment[i]] > 1)
            .max_by(|&a, &b| {
                let da = sq_dist(&points[a], &centroids[assignment[a]]);
                let db = sq_dist(&points[b], &centroids[assignment[b]]);
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("k <= n leaves a cluster with two members");
        sizes[assignment[victim]] -= 1;
        assignment[victim] = empty;
        sizes[empty] = 1;
    }
}

/// Single-point moves that lower the inertia, applied until none is left.
/// Every Hartigan fixed point is also a Lloyd fixed point, not conversely.
fn hartigan_polish(points: &[Point], centroids: &mut [Point], assignment: &mut [usize], k: usize) -> bool {
    let mut sizes = vec![0usize; k];
    for &c in assignment.iter() {
        sizes[c] += 1;
    }
    let mut moved_any = false;
    loop {
        let mut moved = false;
        for (i, p) in points.iter().enumerate() {
            let from = assignment[i];
            if sizes[from] < 2 {
                continue;
            }
            let nf = sizes[from] as f64;
            let removal = nf / (nf - 1.0) * sq_dist(p, &centroids[from]);
            let mut best = None;
            let mut best_gain = 1e-12 * (1.0 + removal);
            for to in (0..k).filter(|&c| c != from) {
                let nt = sizes[to] as f64;
                let gain = removal - nt / (nt + 1.0) * sq_dist(p, &centroids[to]);
                if gain > best_gain {
                    best_gain = gain;
                    best = Some(to);
                }
            }
            if let Some(to) = best {
                let (nf, nt) = (sizes[from] as f64, sizes[to] as f64);
                for d in 0..3 {
                    centroids[from][d] = (centroids[from][d] * nf - p[d]) / (nf - 1.0);
                    centroids[to][d] = (centroids[to][d] * nt + p[d]) / (nt + 1.0);
                }
                sizes[from] -= 1;
                sizes[to] += 1;
                assignment[i] = to;
                moved = true;
            }
        }
        if !moved {
            break;
        }
        moved_any = true;
    }
    if moved_any {
        // drop the drift of the incremental updates
        centroids.copy_from_slice(&means(points, assignment, k));
    }
    moved_any
}

fn means(points: &[Point], assignment: &[usize], k: usize) -> Vec<Point> {
    let mut sums = vec![[0.0; 3]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(assignment) {
        for d in 0..3 {
            sums[c][d] += p[d];
        }
        counts[c] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &n)| {
            let n = n.max(1) as f64;
            [s[0] / n, s[1] / n, s[2] / n]
        })
        .collect()
}

pub(crate) fn inertia_of(points: &[Point], centroids: &[Point], assignment: &[usize]) -> f64 {
    points.iter().zip(assignment).map(|(p, &c)| sq_dist(p, &centroids[c])).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(seed: u64) -> ClusterParams {
        ClusterParams {
            seed,
            ..ClusterParams::default()
        }
    }

    /// Exhaustive minimum SSE over all 2-partitions into nonempty parts.
    fn brute_force_two_partition(points: &[Point]) -> f64 {
        let n = points.len();
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << (n - 1)) {
            let assignment: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            let c = means(points, &assignment, 2);
            best = best.min(inertia_of(points, &c, &assignment));
        }
        best
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point> {
        (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect()
    }

    #[test]
    fn separated_groups_are_recovered() {
        let mut pts = Vec::new();
        for i in 0..20 {
            let e = i as f64 * 1e-3;
            pts.push([e, 0.0, e]);
            pts.push([5.0 + e, 5.0, 5.0 - e]);
        }
        let fit = kmeans(&pts, 2, &params(1)).unwrap();
        for pair in fit.assignment.chunks(2) {
            assert_ne!(pair[0], pair[1]);
        }
        assert!(fit.assignment.iter().step_by(2).all(|&c| c == fit.assignment[0]));
    }

    #[test]
    fn k_equal_n_gives_zero_inertia() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = random_points(&mut rng, 7);
        let fit = kmeans(&pts, 7, &params(2)).unwrap();
        assert!(fit.inertia.abs() < 1e-15);
        let mut seen = fit.assignment.clone();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 7);
        for (p, &c) in pts.iter().zip(&fit.assignment) {
            assert_eq!(&fit.centroids[c], p);
        }
    }

    #[test]
    fn too_many_clusters_for_distinct_points() {
        let pts = vec![[0.0; 3], [0.0; 3], [1.0, 0.0, 0.0]];
        assert_eq!(
            kmeans(&pts, 3, &params(0)),
            Err(ClusterError::TooFewDistinctPoints { k: 3, distinct: 2 })
        );
        assert_eq!(kmeans(&pts, 0, &params(0)), Err(ClusterError::ZeroK));
        assert!(kmeans(&pts, 2, &params(0)).is_ok());
    }

    #[test]
    fn matches_exhaustive_two_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..60 {
            let n = 3 + case % 6;
            let pts = random_points(&mut rng, n);
            let fit = kmeans(&pts, 2, &params(case as u64)).unwrap();
            let oracle = brute_force_two_partition(&pts);
            assert!((fit.inertia - oracle).abs() < 1e-9, "case {case}: {} vs {oracle}", fit.inertia);
        }
    }

    #[test]
    fn inertia_never_increases_within_a_restart() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = random_points(&mut rng, 300);
        for r in 0..10 {
            let (_, history) = run_once(&pts, 6, &params(9), r);
            for w in history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{w:?}");
            }
        }
    }

    #[test]
    fn deterministic_and_restart_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts = random_points(&mut rng, 200);
        let a = kmeans(&pts, 5, &params(4)).unwrap();
        let b = kmeans(&pts, 5, &params(4)).unwrap();
        assert_eq!(a, b);
        let mut last = f64::INFINITY;
        for n in 1..12 {
            let p = ClusterParams {
                n_restarts: n,
                ..params(4)
            };
            let fit = kmeans(&pts, 5, &p).unwrap();
            assert!(fit.inertia <= last);
            last = fit.inertia;
        }
    }

    #[test]
    fn empty_cluster_repair_picks_farthest() {
        let pts = vec![[0.0; 3], [1.0, 0.0, 0.0], [10.0, 0.0, 0.0]];
        let centroids = vec![[3.0, 0.0, 0.0], [100.0, 0.0, 0.0]];
        let mut assignment = vec![0, 0, 0];
        repair_empty(&pts, &centroids, &mut assignment, 2);
        assert_eq!(assignment, [0, 0, 1]);
    }

    // Reference that weights every squared coordinate difference directly.
    fn weighted_lloyd_reference(raw: &[Point], w: [f64; 3], init: &[Point], iters: usize) -> Vec<usize> {
        let d = |a: &Point, b: &Point| (0..3).map(|j| w[j] * (a[j] - b[j]).powi(2)).sum::<f64>();
        let mut centroids = init.to_vec();
        let mut assignment = vec![0; raw.len()];
        for _ in 0..iters {
            for (i, p) in raw.iter().enumerate() {
                let mut best = 0;
                for j in 1..centroids.len() {
                    if d(p, &centroids[j]) < d(p, &centroids[best]) {
                        best = j;
                    }
                }
                assignment[i] = best;
            }
            centroids = means(raw, &assignment, centroids.len());
        }
        assignment
    }

    #[test]
    fn prescaling_equals_weighted_distance() {
        let w = super::super::FactorWeights::default();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let raw = random_points(&mut rng, 40);
            let init: Vec<Point> = raw[..3].to_vec();
            let reference = weighted_lloyd_reference(&raw, w.as_array(), &init, 15);
            let scaled: Vec<Point> = raw.iter().map(|p| w.scale(*p)).collect();
            let mut centroids: Vec<Point> = init.iter().map(|p| w.scale(*p)).collect();
            let mut assignment = vec![usize::MAX; raw.len()];
            for _ in 0..15 {
                assign(&scaled, &centroids, &mut assignment);
                centroids = means(&scaled, &assignment, 3);
            }
            assert_eq!(assignment, reference);
        }
    }
}
