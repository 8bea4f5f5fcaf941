use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    davies_bouldin, distinct_points, kmeans, silhouette, ClusterError, ClusterModel, ClusterParams, FactorWeights,
    KIndexRow, KMeansFit, WeightedPoints,
};
use crate::factors::{featurize, FeatureVector, PolarizationVector};

const SILHOUETTE_TIE: f64 = 1e-6;

struct Candidate {
    fit: KMeansFit,
    silhouette: f64,
    davies_bouldin: Option<f64>,
}

/// `true` when `(s, db)` beats `(best_s, best_db)`: higher silhouette, then
/// lower Davies-Bouldin within the silhouette tie band. Callers visit
/// candidates in preference order so the earlier one wins any full tie.
fn better(s: f64, db: f64, best_s: f64, best_db: f64) -> bool {
    if s > best_s + SILHOUETTE_TIE {
        true
    } else if (s - best_s).abs() <= SILHOUETTE_TIE {
        db < best_db
    } else {
        false
    }
}

/// Fits every feasible k of `params.k_range` and keeps the one with the best
/// silhouette (ties: lower Davies-Bouldin, then smaller k).
pub fn select_k(data: &WeightedPoints, params: &ClusterParams) -> Result<ClusterModel, ClusterError> {
    params.validate()?;
    let distinct = distinct_points(&data.points);
    let ks: Vec<usize> = (params.k_range.min.max(2)..=params.k_range.max)
        .filter(|&k| k <= distinct)
        .collect();
    if ks.is_empty() {
        return Err(ClusterError::NoFeasibleK {
            min: params.k_range.min,
            max: params.k_range.max,
            distinct,
        });
    }
    let candidates: Vec<Candidate> = ks
        .par_iter()
        .map(|&k| {
            let fit = kmeans(&data.points, k, params)?;
            let silhouette = silhouette(&data.points, &fit.assignment)?;
            let davies_bouldin = match davies_bouldin(&data.points, &fit.assignment, &fit.centroids) {
                Ok(v) => Some(v),
                Err(ClusterError::CoincidentCentroids(..)) => None,
                Err(e) => return Err(e),
            };
            Ok(Candidate {
                fit,
                silhouette,
                davies_bouldin,
            })
        })
        .collect::<Result<_, ClusterError>>()?;

    let k_table: Vec<KIndexRow> = candidates
        .iter()
        .map(|c| KIndexRow {
            k: c.fit.k,
            inertia: c.fit.inertia,
            silhouette: c.silhouette,
            davies_bouldin: c.davies_bouldin,
        })
        .collect();

    let mut best: Option<&Candidate> = None;
    for c in candidates.iter().filter(|c| c.davies_bouldin.is_some()) {
        let db = c.davies_bouldin.unwrap();
        best = match best {
            Some(b) if !better(c.silhouette, db, b.silhouette, b.davies_bouldin.unwrap()) => Some(b),
            _ => Some(c),
        };
    }
    let best = best.ok_or(ClusterError::CoincidentCentroids(0, 1))?;

    let assignment: BTreeMap<String, usize> = data
        .ids
        .iter()
        .cloned()
        .zip(best.fit.assignment.iter().copied())
        .collect();
    Ok(ClusterModel {
        params: params.clone(),
        k: best.fit.k,
        centroids: best.fit.centroids.clone(),
        assignment,
        inertia: best.fit.inertia,
        silhouette: best.silhouette,
        davies_bouldin: best.davies_bouldin.unwrap(),
        labels: BTreeMap::new(),
        k_table,
    })
}

/// Candidate stiffness values and factor weightings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub a_values: Vec<f64>,
    pub weights: Vec<FactorWeights>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        HyperGrid {
            a_values: vec![0.25, 0.33, 0.5, 1.0, 2.0],
            weights: [0.4, 0.5, 0.6, 0.7]
                .iter()
                .map(|&w| FactorWeights::from_opinion_share(w).expect("grid weights are valid"))
                .collect(),
        }
    }
}

impl HyperGrid {
    pub fn single(a: f64, weights: FactorWeights) -> Self {
        HyperGrid {
            a_values: vec![a],
            weights: vec![weights],
        }
    }

    /// Cells in grid order: stiffness-major, then weights.
    pub fn cells(&self) -> Vec<(f64, FactorWeights)> {
        self.a_values
            .iter()
            .flat_map(|&a| self.weights.iter().map(move |&w| (a, w)))
            .collect()
    }
}

/// One evaluated grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub a: f64,
    pub weights: FactorWeights,
    pub k: Option<usize>,
    pub silhouette: Option<f64>,
    pub davies_bouldin: Option<f64>,
    /// Failure message for cells that could not be clustered.
    pub error: Option<String>,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub a: f64,
    pub weights: FactorWeights,
    pub model: ClusterModel,
    pub features: Vec<FeatureVector>,
    pub rows: Vec<GridRow>,
}

/// Grid search over stiffness and weights; the cell whose selected model has
/// the highest silhouette wins (ties: lower Davies-Bouldin, then grid order).
pub fn tune_hyperparams(
    raw: &[PolarizationVector],
    grid: &HyperGrid,
    params: &ClusterParams,
) -> Result<TuneResult, ClusterError> {
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(ClusterError::EmptyGrid);
    }
    type Cell = Result<(ClusterModel, Vec<FeatureVector>), ClusterError>;
    let results: Vec<Cell> = cells
        .par_iter()
        .map(|&(a, weights)| {
            weights.validate()?;
            let features = raw.iter().map(|v| featurize(v, a)).collect::<Result<Vec<_>, _>>()?;
            let cell_params = ClusterParams {
                a,
                weights,
                ..params.clone()
            };
            let data = WeightedPoints::from_features(&features, &weights);
            Ok((select_k(&data, &cell_params)?, features))
        })
        .collect();

    let mut best: Option<usize> = None;
    for (i, r) in results.iter().enumerate() {
        if let Ok((m, _)) = r {
            let replace = match best {
                None => true,
                Some(b) => {
                    let (bm, _) = results[b].as_ref().unwrap();
                    better(m.silhouette, m.davies_bouldin, bm.silhouette, bm.davies_bouldin)
                }
            };
            if replace {
                best = Some(i);
            }
        }
    }
    let Some(best) = best else {
        // a non-degenerate error in every cell is worth surfacing as-is
        return Err(results
            .into_iter()
            .find_map(|r| r.err().filter(|e| !e.is_degenerate()))
            .unwrap_or(ClusterError::NoUsableCell));
    };

    let rows = cells
        .iter()
        .zip(&results)
        .enumerate()
        .map(|(i, (&(a, weights), r))| match r {
            Ok((m, _)) => GridRow {
                a,
                weights,
                k: Some(m.k),
                silhouette: Some(m.silhouette),
                davies_bouldin: Some(m.davies_bouldin),
                error: None,
                selected: i == best,
            },
            Err(e) => GridRow {
                a,
                weights,
                k: None,
                silhouette: None,
                davies_bouldin: None,
                error: Some(e.to_string()),
                selected: false,
            },
        })
        .collect();
    let (a, weights) = cells[best];
    let (model, features) = results.into_iter().nth(best).unwrap().unwrap();
    Ok(TuneResult {
        a,
        weights,
        model,
        features,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::Point;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blobs(centers: &[Point], per: usize, spread: f64, seed: u64) -> (WeightedPoints, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ids = Vec::new();
        let mut points = Vec::new();
        let mut truth = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for i in 0..per {
                ids.push(format!("c{c}-{i}"));
                points.push([
                    center[0] + spread * (rng.random::<f64>() - 0.5),
                    center[1] + spread * (rng.random::<f64>() - 0.5),
                    center[2] + spread * (rng.random::<f64>() - 0.5),
                ]);
                truth.push(c);
            }
        }
        (WeightedPoints { ids, points }, truth)
    }

    const CORNERS: [Point; 4] = [[1.0, 1.0, 1.0], [0.7, 0.1, 1.0], [0.3, 1.0, 0.1], [0.0, 1.0, 1.0]];

    #[test]
    fn selects_planted_four() {
        let (data, truth) = blobs(&CORNERS, 60, 0.04, 1);
        let model = select_k(&data, &ClusterParams::default()).unwrap();
        assert_eq!(model.k, 4);
        let planted = silhouette(&data.points, &truth).unwrap();
        assert!((model.silhouette - planted).abs() < 0.05);
        assert_eq!(model.k_table.len(), 9);
    }

    #[test]
    fn selects_planted_two() {
        let (data, _) = blobs(&CORNERS[..2], 50, 0.05, 2);
        assert_eq!(select_k(&data, &ClusterParams::default()).unwrap().k, 2);
    }

    #[test]
    fn infeasible_range_is_degenerate() {
        let data = WeightedPoints {
            ids: vec!["a".into(), "b".into()],
            points: vec![[0.5; 3]; 2],
        };
        let err = select_k(&data, &ClusterParams::default()).unwrap_err();
        assert!(err.is_degenerate(), "{err}");
    }

    #[test]
    fn tie_break_prefers_lower_db_then_smaller_k() {
        assert!(better(0.9, 0.5, 0.8, 0.1));
        assert!(better(0.9, 0.2, 0.9 + 5e-7, 0.3));
        assert!(!better(0.9, 0.3, 0.9, 0.3));
        assert!(!better(0.7, 0.01, 0.9, 0.3));
    }

    fn pv(id: usize, o: f64, sp: f64, sn: f64) -> PolarizationVector {
        PolarizationVector {
            user_id: format!("u{id}"),
            opinion: o,
            source_pos: sp,
            source_neg: sn,
            n_interactions_pos: 1,
            n_interactions_neg: 1,
        }
    }

    #[test]
    fn grid_contracts() {
        let raw: Vec<_> = (0..40)
            .map(|i| {
                let j = (i % 4) as f64 * 0.01;
                if i % 2 == 0 { pv(i, 1.0 - j, 0.2 + j, 1.0) } else { pv(i, j, 1.0, 0.3 - j) }
            })
            .collect();
        let params = ClusterParams {
            n_restarts: 4,
            ..ClusterParams::default()
        };
        let one = tune_hyperparams(&raw, &HyperGrid::single(0.5, FactorWeights::default()), &params).unwrap();
        assert_eq!(one.rows.len(), 1);
        assert!(one.rows[0].selected);
        assert_eq!(one.a, 0.5);

        let full = tune_hyperparams(&raw, &HyperGrid::default(), &params).unwrap();
        assert_eq!(full.rows.len(), 20);
        assert_eq!(full.rows.iter().filter(|r| r.selected).count(), 1);
        assert!(tune_hyperparams(&raw, &HyperGrid { a_values: vec![], weights: vec![] }, &params).is_err());
    }
}
