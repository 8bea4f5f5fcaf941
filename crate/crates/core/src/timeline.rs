//! Overlapping sliding timeframes and per-frame clustering.

use std::collections::BTreeSet;

use chrono::{DateTime, Duration, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{select_k, tune_hyperparams, ClusterError, ClusterModel, ClusterParams, HyperGrid, WeightedPoints};
use crate::factors::{factor_table, featurize, FactorError, PolarizationVector, RosterMode};
use crate::ingest::{rfc3339_seconds, Dataset, IngestError, Timespan};

#[derive(Debug, Error)]
pub enum TimelineError {
    #[error("window must be positive and 0 < step <= window (window {window}s, step {step}s)")]
    BadDurations { window: i64, step: i64 },
    #[error("cannot parse duration `{0}` (expected e.g. 28d, 14d, 12h)")]
    BadDurationSyntax(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

/// Half-open window `[start, end)` of the sliding-frame sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timeframe {
    pub index: usize,
    #[serde(with = "rfc3339_seconds")]
    pub start: DateTime<Utc>,
    #[serde(with = "rfc3339_seconds")]
    pub end: DateTime<Utc>,
    /// The frame was cut short at the end of the timespan.
    pub truncated: bool,
}

impl Timeframe {
    pub fn span(&self) -> Timespan {
        Timespan {
            start: self.start,
            end: self.end,
        }
    }

    pub fn midpoint(&self) -> DateTime<Utc> {
        self.start + (self.end - self.start) / 2
    }
}

/// Parses `28d`, `14d`, `36h`, `90m` or `3600s`.
pub fn parse_duration(s: &str) -> Result<Duration, TimelineError> {
    let s = s.trim();
    let bad = || TimelineError::BadDurationSyntax(s.to_string());
    let split = s.find(|c: char| !c.is_ascii_digit()).ok_or_else(bad)?;
    let (num, unit) = s.split_at(split);
    let n: i64 = num.parse().map_err(|_| bad())?;
    match unit {
        "d" => Ok(Duration::days(n)),
        "w" => Ok(Duration::weeks(n)),
        "h" => Ok(Duration::hours(n)),
        "m" => Ok(Duration::minutes(n)),
        "s" => Ok(Duration::seconds(n)),
        _ => Err(bad()),
    }
}

/// Frames start every `step` from the beginning of the span. A frame is kept
/// while it is longer than the overlap with its predecessor, i.e. while
/// `start + (window - step) < span end`; the final frames are truncated to
/// the span end. The first frame is always kept, so a span shorter than
/// the overlap still yields one truncated frame. Jan 1 to Jul 31 2022 at
/// 28d/14d gives 15 frames, the last one covering 15 days.
pub fn make_frames(timespan: Timespan, window: Duration, step: Duration) -> Result<Vec<Timeframe>, TimelineError> {
    if window <= Duration::zero() || step <= Duration::zero() || step > window {
        return Err(TimelineError::BadDurations {
            window: window.num_seconds(),
            step: step.num_seconds(),
        });
    }
    let overlap = window - step;
    let mut frames = Vec::new();
    let mut start = timespan.start;
    while frames.is_empty() || start + overlap < timespan.end {
        let full_end = start + window;
        frames.push(Timeframe {
            index: frames.len(),
            start,
            end: full_end.min(timespan.end),
            truncated: full_end > timespan.end,
        });
        start += step;
    }
    Ok(frames)
}

/// Per-frame options. `params.a` and `params.weights` are the debate-level
/// hyperparameters used in every frame unless `retune` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameOptions {
    pub params: ClusterParams,
    pub roster_mode: RosterMode,
    /// Re-run the grid search inside every frame (sensitivity analysis).
    pub retune: Option<HyperGrid>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAnalysis {
    pub frame: Timeframe,
    /// Cohort members active in the frame, sorted by user id.
    pub vectors: Vec<PolarizationVector>,
    pub model: Option<ClusterModel>,
    /// Cohort members with no interaction in the frame.
    pub inactive_users: BTreeSet<String>,
    /// Why no model could be fitted, for degenerate frames.
    pub degenerate: Option<String>,
}

impl FrameAnalysis {
    pub fn is_degenerate(&self) -> bool {
        self.model.is_none()
    }
}

fn analyze_one(
    ds: &Dataset,
    frame: &Timeframe,
    cohort: &BTreeSet<String>,
    opts: &FrameOptions,
) -> Result<FrameAnalysis, TimelineError> {
    let view = ds.filter_by_range(frame.span())?;
    let vectors = factor_table(&view, cohort.iter().map(String::as_str), opts.roster_mode)?;
    let inactive_users: BTreeSet<String> = cohort
        .iter()
        .filter(|u| view.user_positions(u).is_none())
        .cloned()
        .collect();
    let fitted = match &opts.retune {
        Some(grid) => tune_hyperparams(&vectors, grid, &opts.params).map(|t| t.model),
        None => {
            let features = vectors
                .iter()
                .map(|v| featurize(v, opts.params.a))
                .collect::<Result<Vec<_>, _>>()?;
            select_k(&WeightedPoints::from_features(&features, &opts.params.weights), &opts.params)
        }
    };
    let (model, degenerate) = match fitted {
        Ok(m) => (Some(m), None),
        Err(e) if e.is_degenerate() => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    Ok(FrameAnalysis {
        frame: *frame,
        vectors,
        model,
        inactive_users,
        degenerate,
    })
}

/// Clusters the cohort independently in every frame. Frames run in parallel;
/// the output is in frame order.
pub fn analyze_frames(
    ds: &Dataset,
    frames: &[Timeframe],
    cohort: &BTreeSet<String>,
    opts: &FrameOptions,
) -> Result<Vec<FrameAnalysis>, TimelineError> {
    opts.params.validate()?;
    frames.par_iter().map(|f| analyze_one(ds, f, cohort, opts)).collect()
}
