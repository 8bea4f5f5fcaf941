//! End-to-end aggregate and temporal analyses over a loaded dataset.

use std::collections::BTreeSet;

use chrono::Duration;
use serde::{Deserialize, Serialize};

use crate::clustering::{
    select_k, tune_hyperparams, ClusterModel, ClusterParams, FactorWeights, GridRow, HyperGrid, WeightedPoints,
};
use crate::factors::{factor_table, featurize, FeatureVector, PolarizationVector, RosterMode};
use crate::ingest::{active_users, Dataset, Timespan};
use crate::periods::{
    classify_analysis, consecutive_flows, convergence_trend, label_all, label_model, sankey, segment_periods,
    ClassifiedFrame, ConvergenceTrend, FlowMatrix, LabelThresholds, Period, PeriodType, SankeyExport,
};
use crate::timeline::{analyze_frames, make_frames, FrameAnalysis, FrameOptions, Timeframe};
use crate::Result;

/// How the debate-level stiffness and weights are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Hyperparams {
    /// Use `params.a` and `params.weights` as given.
    Fixed,
    /// Grid search on the aggregate factors.
    Tune { grid: HyperGrid },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateOptions {
    pub params: ClusterParams,
    pub hyperparams: Hyperparams,
    pub roster_mode: RosterMode,
    pub thresholds: LabelThresholds,
}

impl Default for AggregateOptions {
    fn default() -> Self {
        AggregateOptions {
            params: ClusterParams::default(),
            hyperparams: Hyperparams::Tune {
                grid: HyperGrid::default(),
            },
            roster_mode: RosterMode::Full,
            thresholds: LabelThresholds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRun {
    pub vectors: Vec<PolarizationVector>,
    pub features: Vec<FeatureVector>,
    /// Labeled model; `model.params` carries the chosen `a` and weights.
    pub model: ClusterModel,
    /// Grid rows when tuned, empty for fixed hyperparameters.
    pub grid: Vec<GridRow>,
}

impl AggregateRun {
    pub fn a(&self) -> f64 {
        self.model.params.a
    }

    pub fn weights(&self) -> FactorWeights {
        self.model.params.weights
    }
}

/// Clusters factor vectors, tuning hyperparameters first if asked to.
pub fn cluster_vectors(vectors: Vec<PolarizationVector>, opts: &AggregateOptions) -> Result<AggregateRun> {
    let (mut model, features, grid) = match &opts.hyperparams {
        Hyperparams::Tune { grid } => {
            let t = tune_hyperparams(&vectors, grid, &opts.params)?;
            (t.model, t.features, t.rows)
        }
        Hyperparams::Fixed => {
            let features = vectors
                .iter()
                .map(|v| featurize(v, opts.params.a))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let model = select_k(&WeightedPoints::from_features(&features, &opts.params.weights), &opts.params)?;
            (model, features, Vec::new())
        }
    };
    model.labels = label_model(&model, &vectors, &opts.thresholds);
    Ok(AggregateRun {
        vectors,
        features,
        model,
        grid,
    })
}

/// Whole-dataset clustering of every user.
pub fn run_aggregate(ds: &Dataset, opts: &AggregateOptions) -> Result<AggregateRun> {
    let vectors = factor_table(ds, ds.users(), opts.roster_mode)?;
    cluster_vectors(vectors, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalOptions {
    pub timespan: Timespan,
    pub window_seconds: i64,
    pub step_seconds: i64,
    pub min_active_fraction: f64,
    /// Debate-level hyperparameters; tuning runs on the cohort's whole-span
    /// factors and is then frozen for every frame.
    pub aggregate: AggregateOptions,
    /// Re-tune inside each frame instead (sensitivity analysis only).
    pub retune_per_frame: bool,
}

impl TemporalOptions {
    pub fn study(timespan: Timespan) -> Self {
        TemporalOptions {
            timespan,
            window_seconds: Duration::days(28).num_seconds(),
            step_seconds: Duration::days(14).num_seconds(),
            min_active_fraction: 0.8,
            aggregate: AggregateOptions::default(),
            retune_per_frame: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalRun {
    pub frames: Vec<Timeframe>,
    pub cohort: BTreeSet<String>,
    /// Users dropped by the activity threshold.
    pub dropped_users: BTreeSet<String>,
    /// Debate-level clustering that fixed `a` and the weights.
    pub debate: AggregateRun,
    pub analyses: Vec<FrameAnalysis>,
    pub classified: Vec<ClassifiedFrame>,
    pub periods: Vec<Period>,
    pub flows: Vec<FlowMatrix>,
    pub trends: Vec<ConvergenceTrend>,
    pub sankey: SankeyExport,
}

impl TemporalRun {
    pub fn period_types(&self) -> Vec<PeriodType> {
        self.classified.iter().map(|c| c.period_type).collect()
    }

    /// One letter per frame, e.g. `UUBBCCP`.
    pub fn type_string(&self) -> String {
        self.classified.iter().map(|c| c.period_type.short()).collect()
    }
}

pub fn run_temporal(ds: &Dataset, opts: &TemporalOptions) -> Result<TemporalRun> {
    let frames = make_frames(
        opts.timespan,
        Duration::seconds(opts.window_seconds),
        Duration::seconds(opts.step_seconds),
    )?;
    let cohort = active_users(ds, &frames, opts.min_active_fraction)?;
    let dropped_users = ds.users().filter(|u| !cohort.contains(*u)).map(str::to_string).collect();

    let debate_vectors = factor_table(ds, cohort.iter().map(String::as_str), opts.aggregate.roster_mode)?;
    let debate = cluster_vectors(debate_vectors, &opts.aggregate)?;

    let retune = match (&opts.aggregate.hyperparams, opts.retune_per_frame) {
        (Hyperparams::Tune { grid }, true) => Some(grid.clone()),
        _ => None,
    };
    let frame_opts = FrameOptions {
        params: debate.model.params.clone(),
        roster_mode: opts.aggregate.roster_mode,
        retune,
    };
    let mut analyses = analyze_frames(ds, &frames, &cohort, &frame_opts)?;
    label_all(&mut analyses, &opts.aggregate.thresholds);
    let classified = analyses
        .iter()
        .map(classify_analysis)
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let periods = segment_periods(&classified);
    let flows = consecutive_flows(&analyses);

    let mut trends = Vec::new();
    for p in periods.iter().filter(|p| p.period_type == PeriodType::Convergence && p.len() >= 2) {
        let members: Vec<&FrameAnalysis> = p.frames().map(|i| &analyses[i]).collect();
        trends.push(convergence_trend(&members)?);
    }
    let sankey = sankey(&analyses, &flows);
    Ok(TemporalRun {
        frames,
        cohort,
        dropped_users,
        debate,
        analyses,
        classified,
        periods,
        flows,
        trends,
        sankey,
    })
}
