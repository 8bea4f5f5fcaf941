//! Versioned JSON/CSV exports and the run manifest.
//!
//! Every JSON artifact has a top-level `schema_version`; every CSV has a
//! leading `schema_version` column. Renderers read only these files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clustering::{ClusterModel, FactorWeights, GridRow, KIndexRow};
use crate::factors::{featurize, PolarizationVector};
use crate::periods::{BehavioralLabel, ClassifiedFrame, ConvergenceTrend, FlowMatrix, Period, PeriodType};
use crate::pipeline::{AggregateRun, TemporalRun};
use crate::timeline::{FrameAnalysis, Timeframe};
use crate::{Error, Result, SCHEMA_VERSION};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Artifact {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of_file(path: &Path) -> Result<Self> {
        let data = fs::read(path).map_err(io_err(path))?;
        Ok(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&data),
            bytes: data.len() as u64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub inputs: Vec<FileDigest>,
    pub parameters: serde_json::Value,
    pub seed: u64,
    /// Paths relative to the output directory.
    pub artifacts: Vec<FileDigest>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let data = fs::read(path).map_err(io_err(path))?;
        Ok(serde_json::from_slice(&data)?)
    }
}

/// Writes artifacts under one directory and remembers their digests.
#[derive(Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
    written: Vec<FileDigest>,
}

impl ArtifactWriter {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(ArtifactWriter {
            dir,
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn bytes(&mut self, name: &str, data: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::File::create(&path)
            .and_then(|mut f| f.write_all(data))
            .map_err(io_err(&path))?;
        self.written.retain(|d| d.path != name);
        self.written.push(FileDigest {
            path: name.to_string(),
            sha256: sha256_hex(data),
            bytes: data.len() as u64,
        });
        Ok(path)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut data = serde_json::to_vec_pretty(value)?;
        data.push(b'\n');
        self.bytes(name, &data)
    }

    pub fn csv<R: Serialize>(&mut self, name: &str, rows: &[R]) -> Result<PathBuf> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let data = w.into_inner().map_err(|e| Error::Artifact {
            path: name.to_string(),
            source: e.into_error(),
        })?;
        self.bytes(name, &data)
    }

    /// Writes `manifest.json` listing everything written so far.
    pub fn finish(
        self,
        command: &str,
        inputs: Vec<FileDigest>,
        parameters: serde_json::Value,
        seed: u64,
    ) -> Result<Manifest> {
        let mut artifacts = self.written.clone();
        artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            tool: "polarscope".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.to_string(),
            inputs,
            parameters,
            seed,
            artifacts,
        };
        let mut data = serde_json::to_vec_pretty(&manifest)?;
        data.push(b'\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, data).map_err(io_err(&path))?;
        Ok(manifest)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub label: Option<BehavioralLabel>,
    pub size: usize,
    pub share: f64,
    /// Mean raw (opinion, source_pos, source_neg) of the members.
    pub mean_factors: [f64; 3],
    /// Centroid in the weighted, transformed clustering space.
    pub centroid: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRow {
    pub user_id: String,
    pub cluster: Option<usize>,
    pub opinion: f64,
    pub source_pos: f64,
    pub source_neg: f64,
    pub n_interactions_pos: u64,
    pub n_interactions_neg: u64,
}

/// Aggregate or single-frame clustering result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub schema_version: u32,
    pub frame: Option<Timeframe>,
    pub a: f64,
    pub weights: FactorWeights,
    pub k: Option<usize>,
    pub silhouette: Option<f64>,
    pub davies_bouldin: Option<f64>,
    pub inertia: Option<f64>,
    pub degenerate: Option<String>,
    pub k_table: Vec<KIndexRow>,
    pub clusters: Vec<ClusterSummary>,
    pub users: Vec<UserRow>,
}

fn user_rows(vectors: &[PolarizationVector], model: Option<&ClusterModel>) -> Vec<UserRow> {
    vectors
        .iter()
        .map(|v| UserRow {
            user_id: v.user_id.clone(),
            cluster: model.and_then(|m| m.cluster_of(&v.user_id)),
            opinion: v.opinion,
            source_pos: v.source_pos,
            source_neg: v.source_neg,
            n_interactions_pos: v.n_interactions_pos,
            n_interactions_neg: v.n_interactions_neg,
        })
        .collect()
}

fn summaries(vectors: &[PolarizationVector], model: &ClusterModel) -> Vec<ClusterSummary> {
    let mut sums = vec![[0.0f64; 3]; model.k];
    let mut sizes = vec![0usize; model.k];
    for v in vectors {
        if let Some(c) = model.cluster_of(&v.user_id) {
            for (s, x) in sums[c].iter_mut().zip(v.as_array()) {
                *s += x;
            }
            sizes[c] += 1;
        }
    }
    let total: usize = sizes.iter().sum();
    (0..model.k)
        .map(|c| {
            let n = sizes[c].max(1) as f64;
            ClusterSummary {
                cluster: c,
                label: model.labels.get(&c).copied(),
                size: sizes[c],
                share: sizes[c] as f64 / total.max(1) as f64,
                mean_factors: sums[c].map(|s| s / n),
                centroid: model.centroids[c],
            }
        })
        .collect()
}

fn model_report(
    frame: Option<Timeframe>,
    vectors: &[PolarizationVector],
    model: Option<&ClusterModel>,
    a: f64,
    weights: FactorWeights,
    degenerate: Option<String>,
) -> ClusterReport {
    ClusterReport {
        schema_version: SCHEMA_VERSION,
        frame,
        a,
        weights,
        k: model.map(|m| m.k),
        silhouette: model.map(|m| m.silhouette),
        davies_bouldin: model.map(|m| m.davies_bouldin),
        inertia: model.map(|m| m.inertia),
        degenerate,
        k_table: model.map(|m| m.k_table.clone()).unwrap_or_default(),
        clusters: model.map(|m| summaries(vectors, m)).unwrap_or_default(),
        users: user_rows(vectors, model),
    }
}

pub fn cluster_report(run: &AggregateRun) -> ClusterReport {
    model_report(None, &run.vectors, Some(&run.model), run.a(), run.weights(), None)
}

pub fn frame_report(analysis: &FrameAnalysis, a: f64, weights: FactorWeights) -> ClusterReport {
    let model = analysis.model.as_ref();
    let (a, weights) = model.map_or((a, weights), |m| (m.params.a, m.params.weights));
    model_report(
        Some(analysis.frame),
        &analysis.vectors,
        model,
        a,
        weights,
        analysis.degenerate.clone(),
    )
}

/// One row of the per-user factor table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorRow {
    pub schema_version: u32,
    pub user_id: String,
    pub opinion: f64,
    pub source_pos: f64,
    pub source_neg: f64,
    pub n_interactions_pos: u64,
    pub n_interactions_neg: u64,
    pub f_opinion: f64,
    pub f_source_pos: f64,
    pub f_source_neg: f64,
    pub cluster: usize,
    pub label: String,
}

pub fn factor_rows(run: &AggregateRun) -> Result<Vec<FactorRow>> {
    run.vectors
        .iter()
        .map(|v| {
            let f = featurize(v, run.a())?;
            let cluster = run.model.cluster_of(&v.user_id).expect("every vector is clustered");
            Ok(FactorRow {
                schema_version: SCHEMA_VERSION,
                user_id: v.user_id.clone(),
                opinion: v.opinion,
                source_pos: v.source_pos,
                source_neg: v.source_neg,
                n_interactions_pos: v.n_interactions_pos,
                n_interactions_neg: v.n_interactions_neg,
                f_opinion: f.f_opinion,
                f_source_pos: f.f_source_pos,
                f_source_neg: f.f_source_neg,
                cluster,
                label: run.model.labels.get(&cluster).map(|l| l.as_str().to_string()).unwrap_or_default(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCsvRow {
    pub schema_version: u32,
    pub a: f64,
    pub w_opinion: f64,
    pub w_source_pos: f64,
    pub w_source_neg: f64,
    pub k: Option<usize>,
    pub silhouette: Option<f64>,
    pub davies_bouldin: Option<f64>,
    pub selected: bool,
    pub error: Option<String>,
}

pub fn grid_rows(rows: &[GridRow]) -> Vec<GridCsvRow> {
    rows.iter()
        .map(|r| GridCsvRow {
            schema_version: SCHEMA_VERSION,
            a: r.a,
            w_opinion: r.weights.opinion,
            w_source_pos: r.weights.source_pos,
            w_source_neg: r.weights.source_neg,
            k: r.k,
            silhouette: r.silhouette,
            davies_bouldin: r.davies_bouldin,
            selected: r.selected,
            error: r.error.clone(),
        })
        .collect()
}

/// One row per frame: the cluster-count timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub schema_version: u32,
    pub run: String,
    pub frame: usize,
    pub start: String,
    pub end: String,
    pub truncated: bool,
    pub n_active: usize,
    pub k: Option<usize>,
    pub silhouette: Option<f64>,
    pub davies_bouldin: Option<f64>,
    pub period_type: String,
    /// Cluster labels joined with `+`.
    pub signature: String,
}

pub fn summary_rows(run_name: &str, run: &TemporalRun) -> Vec<SummaryRow> {
    run.analyses
        .iter()
        .zip(&run.classified)
        .map(|(a, c)| SummaryRow {
            schema_version: SCHEMA_VERSION,
            run: run_name.to_string(),
            frame: a.frame.index,
            start: crate::ingest::format_instant(a.frame.start),
            end: crate::ingest::format_instant(a.frame.end),
            truncated: a.frame.truncated,
            n_active: a.vectors.len(),
            k: c.k,
            silhouette: a.model.as_ref().map(|m| m.silhouette),
            davies_bouldin: a.model.as_ref().map(|m| m.davies_bouldin),
            period_type: c.period_type.as_str().to_string(),
            signature: c.signature.iter().map(|l| l.as_str()).collect::<Vec<_>>().join("+"),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodsReport {
    pub schema_version: u32,
    pub a: f64,
    pub weights: FactorWeights,
    pub cohort_size: usize,
    /// Users removed by the activity threshold.
    pub dropped_users: Vec<String>,
    pub frames: Vec<ClassifiedFrame>,
    /// One letter per frame (U, B, C, P).
    pub sequence: String,
    pub periods: Vec<Period>,
    pub convergence_trends: Vec<ConvergenceTrend>,
}

impl PeriodsReport {
    pub fn period_types(&self) -> Vec<PeriodType> {
        self.periods.iter().map(|p| p.period_type).collect()
    }
}

pub fn periods_report(run: &TemporalRun) -> PeriodsReport {
    PeriodsReport {
        schema_version: SCHEMA_VERSION,
        a: run.debate.a(),
        weights: run.debate.weights(),
        cohort_size: run.cohort.len(),
        dropped_users: run.dropped_users.iter().cloned().collect(),
        frames: run.classified.clone(),
        sequence: run.type_string(),
        periods: run.periods.clone(),
        convergence_trends: run.trends.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowsReport {
    pub schema_version: u32,
    pub flows: Vec<FlowMatrix>,
}

/// Writes the aggregate artifact set.
pub fn write_aggregate(w: &mut ArtifactWriter, run: &AggregateRun) -> Result<()> {
    w.json("cluster_report.json", &cluster_report(run))?;
    w.csv("factors.csv", &factor_rows(run)?)?;
    if !run.grid.is_empty() {
        w.csv("grid.csv", &grid_rows(&run.grid))?;
    }
    Ok(())
}

/// Writes the temporal artifact set.
pub fn write_temporal(w: &mut ArtifactWriter, run_name: &str, run: &TemporalRun) -> Result<()> {
    write_aggregate_as(w, "debate", &run.debate)?;
    for a in &run.analyses {
        w.json(
            &format!("frames/frame_{:02}.json", a.frame.index),
            &frame_report(a, run.debate.a(), run.debate.weights()),
        )?;
    }
    w.csv("summary.csv", &summary_rows(run_name, run))?;
    w.json("periods.json", &periods_report(run))?;
    w.json(
        "flows.json",
        &FlowsReport {
            schema_version: SCHEMA_VERSION,
            flows: run.flows.clone(),
        },
    )?;
    w.json("sankey.json", &run.sankey)?;
    Ok(())
}

fn write_aggregate_as(w: &mut ArtifactWriter, prefix: &str, run: &AggregateRun) -> Result<()> {
    w.json(&format!("{prefix}/cluster_report.json"), &cluster_report(run))?;
    if !run.grid.is_empty() {
        w.csv(&format!("{prefix}/grid.csv"), &grid_rows(&run.grid))?;
    }
    Ok(())
}
