//! Weighted k-means over the three transformed factors, cluster validity
//! indices, and index-driven model selection.
//!
//! Factor weights enter the Euclidean metric. Instead of carrying them into
//! every distance computation, coordinate `j` is scaled once by
//! `sqrt(w_j)`; plain Euclidean geometry on the scaled points is then the
//! weighted metric, and the centroid update stays a plain mean.

mod indices;
mod kmeans;
mod select;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factors::{FactorError, FeatureVector};
use crate::periods::BehavioralLabel;

pub use indices::{davies_bouldin, silhouette};
pub use kmeans::{kmeans, KMeansFit};
pub use select::{select_k, tune_hyperparams, GridRow, HyperGrid, TuneResult};

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {k} exceeds the {distinct} distinct points available")]
    TooFewDistinctPoints { k: usize, distinct: usize },
    #[error("validity index needs at least 2 clusters, got {0}")]
    SingleCluster(usize),
    #[error("cluster {0} is empty")]
    EmptyCluster(usize),
    #[error("centroids {0} and {1} coincide; clustering is degenerate")]
    CoincidentCentroids(usize, usize),
    #[error("{points} points but {assignment} assignments")]
    LengthMismatch { points: usize, assignment: usize },
    #[error("factor weights must be nonnegative and sum to 1, got {0:?}")]
    InvalidWeights([f64; 3]),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("no k in {min}..={max} is feasible for {distinct} distinct points")]
    NoFeasibleK { min: usize, max: usize, distinct: usize },
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
    #[error("no grid cell produced a usable clustering")]
    NoUsableCell,
    #[error(transparent)]
    Factor(#[from] FactorError),
}

impl ClusterError {
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            ClusterError::TooFewDistinctPoints { .. }
                | ClusterError::SingleCluster(_)
                | ClusterError::CoincidentCentroids(..)
                | ClusterError::NoFeasibleK { .. }
                | ClusterError::NoUsableCell
        )
    }
}

/// A point in weighted feature space.
pub type Point = [f64; 3];

pub(crate) fn sq_dist(a: &Point, b: &Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

pub(crate) fn dist(a: &Point, b: &Point) -> f64 {
    sq_dist(a, b).sqrt()
}

/// Weights of (opinion, source_pos, source_neg) in the squared distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorWeights {
    pub opinion: f64,
    pub source_pos: f64,
    pub source_neg: f64,
}

impl Default for FactorWeights {
    fn default() -> Self {
        FactorWeights {
            opinion: 0.6,
            source_pos: 0.2,
            source_neg: 0.2,
        }
    }
}

impl FactorWeights {
    pub fn new(opinion: f64, source_pos: f64, source_neg: f64) -> Result<Self, ClusterError> {
        let w = FactorWeights {
            opinion,
            source_pos,
            source_neg,
        };
        w.validate()?;
        Ok(w)
    }

    /// Opinion weight `w`, remainder split equally over the source factors.
    pub fn from_opinion_share(w: f64) -> Result<Self, ClusterError> {
        let rest = (1.0 - w) / 2.0;
        Self::new(w, rest, rest)
    }

    pub fn validate(&self) -> Result<(), ClusterError> {
        let arr = self.as_array();
        let ok = arr.iter().all(|w| w.is_finite() && *w >= 0.0) && (arr.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        if ok {
            Ok(())
        } else {
            Err(ClusterError::InvalidWeights(arr))
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.opinion, self.source_pos, self.source_neg]
    }

    /// Maps a feature triple into weighted space.
    pub fn scale(&self, f: [f64; 3]) -> Point {
        let w = self.as_array();
        [f[0] * w[0].sqrt(), f[1] * w[1].sqrt(), f[2] * w[2].sqrt()]
    }
}

/// Inclusive range of cluster counts to try.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KRange {
    pub min: usize,
    pub max: usize,
}

impl Default for KRange {
    fn default() -> Self {
        KRange { min: 2, max: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub k_range: KRange,
    /// Stiffness of the feature transform.
    pub a: f64,
    pub weights: FactorWeights,
    pub n_restarts: usize,
    pub max_iters: usize,
    /// Lloyd stops once the inertia drop falls to or below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            k_range: KRange::default(),
            a: 0.5,
            weights: FactorWeights::default(),
            n_restarts: 20,
            max_iters: 300,
            tol: 1e-6,
            seed: 0,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<(), ClusterError> {
        self.weights.validate()?;
        let bad = |m: &str| Err(ClusterError::InvalidParams(m.to_string()));
        if self.k_range.min == 0 || self.k_range.min > self.k_range.max {
            return bad("k_range must be a nonempty interval starting at 1 or more");
        }
        if !(self.a > 0.0) || !self.a.is_finite() {
            return bad("stiffness a must be positive");
        }
        if self.n_restarts == 0 || self.max_iters == 0 {
            return bad("n_restarts and max_iters must be positive");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        Ok(())
    }
}

/// Feature points of identified users, already scaled into weighted space.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPoints {
    pub ids: Vec<String>,
    pub points: Vec<Point>,
}

impl WeightedPoints {
    pub fn from_features(features: &[FeatureVector], weights: &FactorWeights) -> Self {
        WeightedPoints {
            ids: features.iter().map(|f| f.user_id.clone()).collect(),
            points: features.iter().map(|f| weights.scale(f.as_array())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn distinct_points(points: &[Point]) -> usize {
    let mut sorted: Vec<Point> = points.to_vec();
    sorted.sort_by(|a, b| {
        a[0].total_cmp(&b[0])
            .then(a[1].total_cmp(&b[1]))
            .then(a[2].total_cmp(&b[2]))
    });
    sorted.dedup();
    sorted.len()
}

/// Validity indices of one candidate k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KIndexRow {
    pub k: usize,
    pub inertia: f64,
    pub silhouette: f64,
    /// `None` when two centroids coincide.
    pub davies_bouldin: Option<f64>,
}

/// A fitted, selected clustering of one scope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub params: ClusterParams,
    pub k: usize,
    pub centroids: Vec<Point>,
    pub assignment: BTreeMap<String, usize>,
    pub inertia: f64,
    pub silhouette: f64,
    pub davies_bouldin: f64,
    /// Filled in by [`crate::periods::label_clusters`].
    #[serde(default)]
    pub labels: BTreeMap<usize, BehavioralLabel>,
    pub k_table: Vec<KIndexRow>,
}

impl ClusterModel {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in self.assignment.values() {
            sizes[c] += 1;
        }
        sizes
    }

    pub fn cluster_of(&self, user: &str) -> Option<usize> {
        self.assignment.get(user).copied()
    }
}
