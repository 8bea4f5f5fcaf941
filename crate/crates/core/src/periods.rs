//! Behavioral labels, frame classification, period segmentation, user flows
//! between consecutive frames and convergence trends.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{dist, ClusterModel, Point};
use crate::factors::PolarizationVector;
use crate::timeline::FrameAnalysis;

#[derive(Debug, Error, PartialEq)]
pub enum PeriodError {
    #[error("frame {0} has no cluster model")]
    NoModel(usize),
    #[error("frame {0} has no labels; run label_clusters first")]
    Unlabeled(usize),
    #[error("convergence trend needs at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("frame {0} has no intermediate cluster paired with a same-side polarized cluster")]
    MissingPair(usize),
    #[error("user `{user}` is assigned in frame {frame} but has no factor vector")]
    MissingVector { user: String, frame: usize },
    #[error("sankey conservation violated at node {node}: {detail}")]
    Conservation { node: usize, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehavioralLabel {
    PolarizedPos,
    PolarizedNeg,
    IntermediatePos,
    IntermediateNeg,
    Balanced,
    Other,
}

impl BehavioralLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            BehavioralLabel::PolarizedPos => "polarized_pos",
            BehavioralLabel::PolarizedNeg => "polarized_neg",
            BehavioralLabel::IntermediatePos => "intermediate_pos",
            BehavioralLabel::IntermediateNeg => "intermediate_neg",
            BehavioralLabel::Balanced => "balanced",
            BehavioralLabel::Other => "other",
        }
    }

    pub fn is_intermediate(self) -> bool {
        matches!(self, BehavioralLabel::IntermediatePos | BehavioralLabel::IntermediateNeg)
    }

    /// The polarized label on the same side, for intermediates.
    pub fn polarized_side(self) -> Option<BehavioralLabel> {
        match self {
            BehavioralLabel::IntermediatePos => Some(BehavioralLabel::PolarizedPos),
            BehavioralLabel::IntermediateNeg => Some(BehavioralLabel::PolarizedNeg),
            _ => None,
        }
    }
}

/// Bands on the mean raw opinion factor of a cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelThresholds {
    pub polarized_pos: f64,
    pub polarized_neg: f64,
    pub balanced_low: f64,
    pub balanced_high: f64,
}

impl Default for LabelThresholds {
    fn default() -> Self {
        LabelThresholds {
            polarized_pos: 0.85,
            polarized_neg: 0.15,
            balanced_low: 0.40,
            balanced_high: 0.60,
        }
    }
}

impl LabelThresholds {
    pub fn label(&self, mean_opinion: f64) -> BehavioralLabel {
        let m = mean_opinion;
        if m >= self.polarized_pos {
            BehavioralLabel::PolarizedPos
        } else if m <= self.polarized_neg {
            BehavioralLabel::PolarizedNeg
        } else if self.balanced_low <= m && m <= self.balanced_high {
            BehavioralLabel::Balanced
        } else if self.balanced_high < m && m < self.polarized_pos {
            BehavioralLabel::IntermediatePos
        } else if self.polarized_neg < m && m < self.balanced_low {
            BehavioralLabel::IntermediateNeg
        } else {
            BehavioralLabel::Other
        }
    }
}

/// Labels each cluster of `model` from the mean raw opinion of its members.
pub fn label_model(
    model: &ClusterModel,
    vectors: &[PolarizationVector],
    thresholds: &LabelThresholds,
) -> BTreeMap<usize, BehavioralLabel> {
    let mut sums = vec![0.0; model.k];
    let mut counts = vec![0usize; model.k];
    for v in vectors {
        if let Some(c) = model.cluster_of(&v.user_id) {
            sums[c] += v.opinion;
            counts[c] += 1;
        }
    }
    (0..model.k)
        .map(|c| {
            let label = if counts[c] == 0 {
                BehavioralLabel::Other
            } else {
                thresholds.label(sums[c] / counts[c] as f64)
            };
            (c, label)
        })
        .collect()
}

pub fn label_clusters(
    analysis: &FrameAnalysis,
    thresholds: &LabelThresholds,
) -> Result<BTreeMap<usize, BehavioralLabel>, PeriodError> {
    let model = analysis.model.as_ref().ok_or(PeriodError::NoModel(analysis.frame.index))?;
    Ok(label_model(model, &analysis.vectors, thresholds))
}

/// Fills `model.labels` of every non-degenerate frame.
pub fn label_all(analyses: &mut [FrameAnalysis], thresholds: &LabelThresholds) {
    for a in analyses.iter_mut() {
        if let Some(model) = a.model.as_ref() {
            let labels = label_model(model, &a.vectors, thresholds);
            a.model.as_mut().unwrap().labels = labels;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodType {
    Unstructured,
    Balanced,
    Convergence,
    Polarized,
}

impl PeriodType {
    pub fn as_str(self) -> &'static str {
        match self {
            PeriodType::Unstructured => "unstructured",
            PeriodType::Balanced => "balanced",
            PeriodType::Convergence => "convergence",
            PeriodType::Polarized => "polarized",
        }
    }

    pub fn short(self) -> char {
        match self {
            PeriodType::Unstructured => 'U',
            PeriodType::Balanced => 'B',
            PeriodType::Convergence => 'C',
            PeriodType::Polarized => 'P',
        }
    }
}

/// Maps a frame's label multiset to a period type.
pub fn classify_frame(labels: &[BehavioralLabel], k: usize) -> PeriodType {
    use BehavioralLabel::*;
    if k >= 5 {
        return PeriodType::Unstructured;
    }
    let mut sorted = labels.to_vec();
    sorted.sort();
    match sorted.as_slice() {
        [PolarizedPos, PolarizedNeg] => PeriodType::Polarized,
        [PolarizedPos, PolarizedNeg, Balanced] => PeriodType::Balanced,
        [PolarizedPos, PolarizedNeg, IntermediatePos, IntermediateNeg] => PeriodType::Convergence,
        _ => PeriodType::Unstructured,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifiedFrame {
    pub index: usize,
    pub period_type: PeriodType,
    /// Sorted label multiset; empty for degenerate frames.
    pub signature: Vec<BehavioralLabel>,
    pub k: Option<usize>,
}

/// Degenerate frames (no model) classify as unstructured.
pub fn classify_analysis(analysis: &FrameAnalysis) -> Result<ClassifiedFrame, PeriodError> {
    let index = analysis.frame.index;
    let Some(model) = &analysis.model else {
        return Ok(ClassifiedFrame {
            index,
            period_type: PeriodType::Unstructured,
            signature: Vec::new(),
            k: None,
        });
    };
    if model.labels.len() != model.k {
        return Err(PeriodError::Unlabeled(index));
    }
    let mut signature: Vec<BehavioralLabel> = model.labels.values().copied().collect();
    signature.sort();
    Ok(ClassifiedFrame {
        index,
        period_type: classify_frame(&signature, model.k),
        signature,
        k: Some(model.k),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Period {
    pub period_type: PeriodType,
    pub first_frame: usize,
    /// Inclusive.
    pub last_frame: usize,
    pub signatures: Vec<Vec<BehavioralLabel>>,
}

impl Period {
    pub fn len(&self) -> usize {
        self.last_frame - self.first_frame + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn frames(&self) -> std::ops::RangeInclusive<usize> {
        self.first_frame..=self.last_frame
    }
}

/// Run-length encodes frame types into maximal periods.
pub fn segment_periods(frames: &[ClassifiedFrame]) -> Vec<Period> {
    let mut periods: Vec<Period> = Vec::new();
    for f in frames {
        match periods.last_mut() {
            Some(p) if p.period_type == f.period_type => {
                p.last_frame = f.index;
                p.signatures.push(f.signature.clone());
            }
            _ => periods.push(Period {
                period_type: f.period_type,
                first_frame: f.index,
                last_frame: f.index,
                signatures: vec![f.signature.clone()],
            }),
        }
    }
    periods
}

/// User counts between the clusters of two frames.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowMatrix {
    pub from_frame: usize,
    pub to_frame: usize,
    /// `flows[i][j]`: users in cluster `i` of the first frame and `j` of the second.
    pub flows: Vec<Vec<u64>>,
    /// Per first-frame cluster: users absent from the second frame.
    pub leaving: Vec<u64>,
    /// Per second-frame cluster: users absent from the first frame.
    pub entering: Vec<u64>,
}

impl FlowMatrix {
    pub fn total_flow(&self) -> u64 {
        self.flows.iter().flatten().sum()
    }

    /// Checks `sum(row i) + leaving[i] = |cluster i|` and the column analog.
    pub fn conserves(&self, from_sizes: &[usize], to_sizes: &[usize]) -> bool {
        let rows_ok = self.flows.len() == from_sizes.len()
            && self
                .flows
                .iter()
                .zip(&self.leaving)
                .zip(from_sizes)
                .all(|((row, &l), &n)| row.iter().sum::<u64>() + l == n as u64);
        let cols_ok = to_sizes.len() == self.entering.len()
            && (0..to_sizes.len()).all(|j| {
                self.flows.iter().map(|row| row[j]).sum::<u64>() + self.entering[j] == to_sizes[j] as u64
            });
        rows_ok && cols_ok
    }
}

pub fn flow_matrix(a1: &FrameAnalysis, a2: &FrameAnalysis) -> Result<FlowMatrix, PeriodError> {
    let m1 = a1.model.as_ref().ok_or(PeriodError::NoModel(a1.frame.index))?;
    let m2 = a2.model.as_ref().ok_or(PeriodError::NoModel(a2.frame.index))?;
    let mut flows = vec![vec![0u64; m2.k]; m1.k];
    let mut leaving = vec![0u64; m1.k];
    let mut entering = vec![0u64; m2.k];
    for (user, &c1) in &m1.assignment {
        match m2.assignment.get(user) {
            Some(&c2) => flows[c1][c2] += 1,
            None => leaving[c1] += 1,
        }
    }
    for (user, &c2) in &m2.assignment {
        if !m1.assignment.contains_key(user) {
            entering[c2] += 1;
        }
    }
    Ok(FlowMatrix {
        from_frame: a1.frame.index,
        to_frame: a2.frame.index,
        flows,
        leaving,
        entering,
    })
}

/// Flow matrices for every consecutive pair where both frames have a model.
pub fn consecutive_flows(analyses: &[FrameAnalysis]) -> Vec<FlowMatrix> {
    analyses
        .windows(2)
        .filter_map(|w| flow_matrix(&w[0], &w[1]).ok())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDistance {
    pub frame: usize,
    /// Intermediate-pos centroid to nearest polarized-pos centroid.
    pub pos: Option<f64>,
    pub neg: Option<f64>,
    /// Mean over the available sides.
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrend {
    pub first_frame: usize,
    pub last_frame: usize,
    pub distances: Vec<FrameDistance>,
    /// Least-squares slope of `mean` per frame index.
    pub slope: f64,
}

fn nearest_labeled(model: &ClusterModel, from: &Point, label: BehavioralLabel) -> Option<f64> {
    model
        .labels
        .iter()
        .filter(|(_, &l)| l == label)
        .map(|(&c, _)| dist(from, &model.centroids[c]))
        .min_by(f64::total_cmp)
}

fn frame_distance(a: &FrameAnalysis) -> Result<FrameDistance, PeriodError> {
    let index = a.frame.index;
    let model = a.model.as_ref().ok_or(PeriodError::NoModel(index))?;
    if model.labels.len() != model.k {
        return Err(PeriodError::Unlabeled(index));
    }
    let side = |inter: BehavioralLabel| -> Option<f64> {
        let pol = inter.polarized_side()?;
        let ds: Vec<f64> = model
            .labels
            .iter()
            .filter(|(_, &l)| l == inter)
            .filter_map(|(&c, _)| nearest_labeled(model, &model.centroids[c], pol))
            .collect();
        (!ds.is_empty()).then(|| ds.iter().sum::<f64>() / ds.len() as f64)
    };
    let pos = side(BehavioralLabel::IntermediatePos);
    let neg = side(BehavioralLabel::IntermediateNeg);
    let present: Vec<f64> = [pos, neg].into_iter().flatten().collect();
    if present.is_empty() {
        return Err(PeriodError::MissingPair(index));
    }
    Ok(FrameDistance {
        frame: index,
        pos,
        neg,
        mean: present.iter().sum::<f64>() / present.len() as f64,
    })
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Distances from intermediate centroids to the same-side polarized
/// centroids across the frames of one convergence period.
pub fn convergence_trend(analyses: &[&FrameAnalysis]) -> Result<ConvergenceTrend, PeriodError> {
    if analyses.len() < 2 {
        return Err(PeriodError::TooFewFrames(analyses.len()));
    }
    let distances = analyses.iter().map(|a| frame_distance(a)).collect::<Result<Vec<_>, _>>()?;
    let xs: Vec<f64> = distances.iter().map(|d| d.frame as f64).collect();
    let ys: Vec<f64> = distances.iter().map(|d| d.mean).collect();
    Ok(ConvergenceTrend {
        first_frame: distances[0].frame,
        last_frame: distances.last().unwrap().frame,
        slope: ls_slope(&xs, &ys),
        distances,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SankeyNode {
    pub id: usize,
    pub frame: usize,
    pub cluster: usize,
    pub label: BehavioralLabel,
    pub size: u64,
    /// Users new relative to the previous frame; `None` without a linked predecessor.
    pub entering: Option<u64>,
    /// Users absent from the next frame; `None` without a linked successor.
    pub leaving: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SankeyLink {
    pub source: usize,
    pub target: usize,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SankeyExport {
    pub schema_version: u32,
    pub nodes: Vec<SankeyNode>,
    pub links: Vec<SankeyLink>,
}

/// Nodes for every (frame, cluster) of modeled frames and links from the
/// flow matrices; zero-count links are omitted.
pub fn sankey(analyses: &[FrameAnalysis], flows: &[FlowMatrix]) -> SankeyExport {
    let mut nodes = Vec::new();
    let mut node_of: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for a in analyses {
        let Some(m) = &a.model else { continue };
        for (c, &size) in m.cluster_sizes().iter().enumerate() {
            let id = nodes.len();
            node_of.insert((a.frame.index, c), id);
            nodes.push(SankeyNode {
                id,
                frame: a.frame.index,
                cluster: c,
                label: m.labels.get(&c).copied().unwrap_or(BehavioralLabel::Other),
                size: size as u64,
                entering: None,
                leaving: None,
            });
        }
    }
    let mut links = Vec::new();
    for f in flows {
        for (i, row) in f.flows.iter().enumerate() {
            let src = node_of[&(f.from_frame, i)];
            nodes[src].leaving = Some(f.leaving[i]);
            for (j, &count) in row.iter().enumerate() {
                if count > 0 {
                    links.push(SankeyLink {
                        source: src,
                        target: node_of[&(f.to_frame, j)],
                        count,
                    });
                }
            }
        }
        for (j, &e) in f.entering.iter().enumerate() {
            nodes[node_of[&(f.to_frame, j)]].entering = Some(e);
        }
    }
    SankeyExport {
        schema_version: crate::SCHEMA_VERSION,
        nodes,
        links,
    }
}

/// Integer conservation of a Sankey export: outgoing links plus leaving
/// equals node size, incoming links plus entering equals node size.
pub fn verify_sankey(export: &SankeyExport) -> Result<(), PeriodError> {
    let mut out = vec![0u64; export.nodes.len()];
    let mut inc = vec![0u64; export.nodes.len()];
    for l in &export.links {
        for id in [l.source, l.target] {
            if id >= export.nodes.len() {
                return Err(PeriodError::Conservation {
                    node: id,
                    detail: "link references a missing node".into(),
                });
            }
        }
        out[l.source] += l.count;
        inc[l.target] += l.count;
    }
    for n in &export.nodes {
        let check = |linked: u64, extra: Option<u64>, what: &str| match extra {
            Some(e) if linked + e != n.size => Err(PeriodError::Conservation {
                node: n.id,
                detail: format!("{what} {linked} + {e} != size {}", n.size),
            }),
            None if linked != 0 => Err(PeriodError::Conservation {
                node: n.id,
                detail: format!("{what} {linked} on an unlinked side"),
            }),
            _ => Ok(()),
        };
        check(out[n.id], n.leaving, "outgoing")?;
        check(inc[n.id], n.entering, "incoming")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::ClusterParams;
    use crate::factors::opinion_factor;
    use crate::timeline::Timeframe;
    use chrono::{TimeZone, Utc};
    use BehavioralLabel::*;

    fn frame(index: usize) -> Timeframe {
        let t = Utc.with_ymd_and_hms(2022, 1, 1, 0, 0, 0).unwrap();
        Timeframe {
            index,
            start: t,
            end: t + chrono::Duration::days(1),
            truncated: false,
        }
    }

    fn pv(user: &str, opinion: f64) -> PolarizationVector {
        PolarizationVector {
            user_id: user.into(),
            opinion,
            source_pos: 1.0,
            source_neg: 1.0,
            n_interactions_pos: 1,
            n_interactions_neg: 1,
        }
    }

    /// Analysis whose cluster `c` holds `members[c]`, with given centroids.
    fn analysis(index: usize, members: &[&[(&str, f64)]], centroids: Vec<Point>) -> FrameAnalysis {
        let mut assignment = BTreeMap::new();
        let mut vectors = Vec::new();
        for (c, ms) in members.iter().enumerate() {
            for (u, o) in ms.iter() {
                assignment.insert(u.to_string(), c);
                vectors.push(pv(u, *o));
            }
        }
        vectors.sort_by(|a, b| a.user_id.cmp(&b.user_id));
        FrameAnalysis {
            frame: frame(index),
            vectors,
            model: Some(ClusterModel {
                params: ClusterParams::default(),
                k: members.len(),
                centroids,
                assignment,
                inertia: 0.0,
                silhouette: 0.0,
                davies_bouldin: 0.0,
                labels: BTreeMap::new(),
                k_table: vec![],
            }),
            inactive_users: Default::default(),
            degenerate: None,
        }
    }

    #[test]
    fn labels_from_mean_opinion() {
        let th = LabelThresholds::default();
        let nine_to_one = opinion_factor(9, 1).unwrap();
        let a = analysis(
            0,
            &[&[("a", 1.0), ("b", 1.0)], &[("c", 0.45), ("d", 0.55)], &[("e", nine_to_one)], &[("f", 0.0)]],
            vec![[0.0; 3]; 4],
        );
        let labels = label_clusters(&a, &th).unwrap();
        assert_eq!(labels[&0], PolarizedPos);
        assert_eq!(labels[&1], Balanced);
        assert_eq!(labels[&2], IntermediatePos);
        assert_eq!(labels[&3], PolarizedNeg);
        assert_eq!(th.label(0.3), IntermediateNeg);
        assert_eq!(th.label(0.85), PolarizedPos);
        assert_eq!(th.label(0.15), PolarizedNeg);
        assert_eq!(th.label(0.6), Balanced);

        let mut none = a.clone();
        none.model = None;
        assert_eq!(label_clusters(&none, &th), Err(PeriodError::NoModel(0)));
    }

    #[test]
    fn frame_classification() {
        assert_eq!(classify_frame(&[PolarizedNeg, PolarizedPos], 2), PeriodType::Polarized);
        assert_eq!(classify_frame(&[Balanced, PolarizedPos, PolarizedNeg], 3), PeriodType::Balanced);
        assert_eq!(
            classify_frame(&[IntermediateNeg, PolarizedPos, IntermediatePos, PolarizedNeg], 4),
            PeriodType::Convergence
        );
        let mixed = [PolarizedPos, PolarizedNeg, Balanced, IntermediatePos, IntermediateNeg, Balanced, Other, PolarizedPos];
        assert_eq!(classify_frame(&mixed, 8), PeriodType::Unstructured);
        assert_eq!(classify_frame(&[PolarizedPos, PolarizedPos], 2), PeriodType::Unstructured);
        assert_eq!(classify_frame(&[PolarizedPos, IntermediatePos, PolarizedNeg], 3), PeriodType::Unstructured);
    }

    fn classified(types: &[PeriodType]) -> Vec<ClassifiedFrame> {
        types
            .iter()
            .enumerate()
            .map(|(index, &period_type)| ClassifiedFrame {
                index,
                period_type,
                signature: vec![],
                k: Some(2),
            })
            .collect()
    }

    #[test]
    fn segmentation() {
        use PeriodType::*;
        let p = segment_periods(&classified(&[Convergence, Convergence, Convergence, Polarized, Polarized]));
        assert_eq!(p.len(), 2);
        assert_eq!((p[0].period_type, p[0].first_frame, p[0].last_frame), (Convergence, 0, 2));
        assert_eq!((p[1].period_type, p[1].first_frame, p[1].last_frame), (Polarized, 3, 4));
        assert_eq!(segment_periods(&classified(&[Balanced; 6])).len(), 1);
        let alternating = [Polarized, Balanced, Polarized, Balanced];
        assert_eq!(segment_periods(&classified(&alternating)).len(), 4);
        assert!(segment_periods(&[]).is_empty());
    }

    #[test]
    fn flows_and_entering() {
        let a1 = analysis(0, &[&[("a", 1.0), ("b", 1.0)], &[("c", 0.0), ("x", 0.0)]], vec![[0.0; 3]; 2]);
        let a2 = analysis(1, &[&[("a", 1.0), ("b", 1.0)], &[("c", 0.0), ("new", 0.0)]], vec![[0.0; 3]; 2]);
        let f = flow_matrix(&a1, &a2).unwrap();
        assert_eq!(f.flows, vec![vec![2, 0], vec![0, 1]]);
        assert_eq!(f.leaving, vec![0, 1]);
        assert_eq!(f.entering, vec![0, 1]);
        assert!(f.conserves(&[2, 2], &[2, 2]));
        assert!(!f.conserves(&[2, 3], &[2, 2]));
    }

    #[test]
    fn sankey_roundtrip_conservation() {
        let th = LabelThresholds::default();
        let mut analyses = vec![
            analysis(0, &[&[("a", 1.0), ("b", 1.0)], &[("c", 0.0)]], vec![[0.0; 3]; 2]),
            analysis(1, &[&[("a", 1.0)], &[("c", 0.0), ("d", 0.0)]], vec![[0.0; 3]; 2]),
        ];
        label_all(&mut analyses, &th);
        let flows = consecutive_flows(&analyses);
        let export = sankey(&analyses, &flows);
        assert_eq!(export.nodes.len(), 4);
        verify_sankey(&export).unwrap();
        let mut broken = export.clone();
        broken.links[0].count += 1;
        assert!(verify_sankey(&broken).is_err());
    }

    #[test]
    fn two_frame_trend_slope() {
        let th = LabelThresholds::default();
        let members: &[&[(&str, f64)]] = &[&[("p", 1.0)], &[("i", 0.7)], &[("n", 0.0)], &[("j", 0.3)]];
        let near = |d: f64| vec![[1.0, 0.0, 0.0], [1.0 - d, 0.0, 0.0], [0.0, 0.0, 0.0], [d, 0.0, 0.0]];
        let mut analyses = vec![analysis(3, members, near(0.4)), analysis(4, members, near(0.2))];
        label_all(&mut analyses, &th);
        let refs: Vec<&FrameAnalysis> = analyses.iter().collect();
        let trend = convergence_trend(&refs).unwrap();
        assert!((trend.slope + 0.2).abs() < 1e-12);
        assert!((trend.distances[0].mean - 0.4).abs() < 1e-12);
        assert_eq!(convergence_trend(&refs[..1]), Err(PeriodError::TooFewFrames(1)));

        let polar: &[&[(&str, f64)]] = &[&[("p", 1.0)], &[("n", 0.0)]];
        let mut flat = vec![analysis(0, polar, vec![[1.0, 0.0, 0.0], [0.0; 3]]); 2];
        flat[1].frame.index = 1;
        label_all(&mut flat, &th);
        let refs: Vec<&FrameAnalysis> = flat.iter().collect();
        assert_eq!(convergence_trend(&refs), Err(PeriodError::MissingPair(0)));
    }

    #[test]
    fn slope_helper() {
        assert!((ls_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]) - 2.0).abs() < 1e-12);
        assert_eq!(ls_slope(&[1.0], &[4.0]), 0.0);
    }
}
