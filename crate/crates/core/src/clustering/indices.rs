use rayon::prelude::*;

use super::{dist, ClusterError, Point};

fn cluster_count(points: &[Point], assignment: &[usize]) -> Result<usize, ClusterError> {
    if points.len() != assignment.len() {
        return Err(ClusterError::LengthMismatch {
            points: points.len(),
            assignment: assignment.len(),
        });
    }
    let k = assignment.iter().max().map_or(0, |m| m + 1);
    if k < 2 {
        return Err(ClusterError::SingleCluster(k));
    }
    let mut sizes = vec![0usize; k];
    for &c in assignment {
        sizes[c] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(ClusterError::EmptyCluster(empty));
    }
    Ok(k)
}

/// Mean silhouette width. Clusters are `0..=max(assignment)` and must all be
/// nonempty; members of singleton clusters score 0.
pub fn silhouette(points: &[Point], assignment: &[usize]) -> Result<f64, ClusterError> {
    let k = cluster_count(points, assignment)?;
    let mut sizes = vec![0usize; k];
    for &c in assignment {
        sizes[c] += 1;
    }
    let total: f64 = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let own = assignment[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for (j, q) in points.iter().enumerate() {
                if j != i {
                    sums[assignment[j]] += dist(&points[i], q);
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                (b - a) / denom
            } else {
                0.0
            }
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok(total / points.len() as f64)
}

/// Davies-Bouldin index with scatter `s_i` = mean distance to centroid `i`.
pub fn davies_bouldin(points: &[Point], assignment: &[usize], centroids: &[Point]) -> Result<f64, ClusterError> {
    let k = cluster_count(points, assignment)?;
    if centroids.len() != k {
        return Err(ClusterError::InvalidParams(format!(
            "{} centroids for {k} clusters",
            centroids.len()
        )));
    }
    let mut scatter = vec![0.0; k];
    let mut sizes = vec![0usize; k];
    for (p, &c) in points.iter().zip(assignment) {
        scatter[c] += dist(p, &centroids[c]);
        sizes[c] += 1;
    }
    for (s, &n) in scatter.iter_mut().zip(&sizes) {
        *s /= n as f64;
    }
    let mut total = 0.0;
    for i in 0..k {
        let mut worst = 0.0f64;
        for j in 0..k {
            if i == j {
                continue;
            }
            let d = dist(&centroids[i], &centroids[j]);
            if d == 0.0 {
                return Err(ClusterError::CoincidentCentroids(i.min(j), i.max(j)));
            }
            worst = worst.max((scatter[i] + scatter[j]) / d);
        }
        total += worst;
    }
    Ok(total / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> Vec<Point> {
        xs.iter().map(|&x| [x, 0.0, 0.0]).collect()
    }

    #[test]
    fn four_point_configuration() {
        let pts = line(&[0.0, 0.1, 1.0, 0.9]);
        let asg = [0, 0, 1, 1];
        // point 0: a = 0.1, b = 0.95; point 0.1: a = 0.1, b = 0.85; mirrored
        let expected_s = ((0.95 - 0.1) / 0.95 + (0.85 - 0.1) / 0.85) / 2.0;
        let s = silhouette(&pts, &asg).unwrap();
        assert!((s - expected_s).abs() < 1e-12);
        assert!((s - 0.8885).abs() < 1e-3);
        // scatters 0.05 each, centroids 0.05 and 0.95
        let centroids = line(&[0.05, 0.95]);
        let db = davies_bouldin(&pts, &asg, &centroids).unwrap();
        assert!((db - 0.1 / 0.9).abs() < 1e-12);
    }

    #[test]
    fn tight_far_blobs() {
        let mut pts = Vec::new();
        let mut asg = Vec::new();
        for i in 0..30 {
            let e = (i % 5) as f64 * 0.002;
            pts.push([e, e, 0.0]);
            asg.push(0);
            pts.push([1.0 + e, 1.0, 1.0 - e]);
            asg.push(1);
        }
        assert!(silhouette(&pts, &asg).unwrap() > 0.9);
        let c0 = [0.004, 0.004, 0.0];
        let c1 = [1.004, 1.0, 0.996];
        assert!(davies_bouldin(&pts, &asg, &[c0, c1]).unwrap() < 0.2);
    }

    #[test]
    fn db_grows_as_clusters_approach() {
        let mut last = 0.0;
        for gap in [5.0, 2.0, 1.0, 0.5, 0.3] {
            let pts = line(&[0.0, 0.2, gap, gap + 0.2]);
            let c = line(&[0.1, gap + 0.1]);
            let db = davies_bouldin(&pts, &[0, 0, 1, 1], &c).unwrap();
            assert!(db > last);
            last = db;
        }
    }

    #[test]
    fn errors() {
        let pts = line(&[0.0, 1.0, 2.0]);
        assert_eq!(silhouette(&pts, &[0, 0, 0]), Err(ClusterError::SingleCluster(1)));
        assert_eq!(silhouette(&pts, &[0, 2, 2]), Err(ClusterError::EmptyCluster(1)));
        assert!(matches!(silhouette(&pts, &[0, 1]), Err(ClusterError::LengthMismatch { .. })));
        let c = line(&[0.5, 0.5]);
        assert_eq!(davies_bouldin(&pts, &[0, 0, 1], &c), Err(ClusterError::CoincidentCentroids(0, 1)));
    }

    #[test]
    fn singleton_cluster_scores_zero() {
        let pts = line(&[0.0, 0.1, 5.0]);
        let s = silhouette(&pts, &[0, 0, 1]).unwrap();
        let expected = ((5.0 - 0.1) / 5.0 + (4.9 - 0.1) / 4.9 + 0.0) / 3.0;
        assert!((s - expected).abs() < 1e-12);
    }
}
