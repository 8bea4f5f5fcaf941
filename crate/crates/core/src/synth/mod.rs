//! Synthetic interaction logs with planted user archetypes.
//!
//! Each user belongs to one archetype. An archetype fixes the probability of
//! interacting with the positive community, the shape of the source choice
//! inside each community, and a Poisson interaction rate. Scheduled events
//! either move users to another archetype (`remap`) or linearly morph an
//! archetype's community mix over a relaxation window (`morph`).
//!
//! The generator also records the ground truth the acceptance checks need:
//! archetype per user and frame, users planted as intermittently active,
//! and the period type every frame is expected to show.

mod presets;

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, Utc};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factors::{expected_opinion, normalized_entropy};
use crate::ingest::{rfc3339_seconds, DebateConfig, InteractionKind, InteractionRecord, Pole, Timespan};
use crate::periods::{classify_frame, BehavioralLabel, LabelThresholds, PeriodType};
use crate::rng::{str_tag, substream};
use crate::timeline::{make_frames, Timeframe};

pub use presets::{preset, preset_names, StudyHyperparams};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("unknown preset `{0}` (known: {known})", known = preset_names().join(", "))]
    UnknownPreset(String),
    #[error("archetype shares sum to {0}, not 1")]
    InfeasibleShares(f64),
    #[error("archetype `{0}`: {1}")]
    BadArchetype(String, String),
    #[error("duplicate archetype `{0}`")]
    DuplicateArchetype(String),
    #[error("event refers to unknown archetype `{0}`")]
    UnknownArchetype(String),
    #[error("event times must be strictly increasing, offsets nonnegative, and every effect inside the timespan")]
    BadSchedule,
    #[error("debate config: {0}")]
    Config(#[from] crate::ingest::IngestError),
    #[error("frame layout: {0}")]
    Frames(String),
    #[error("need at least one user")]
    NoUsers,
}

/// How a user picks sources inside one community.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceProfile {
    /// Always the user's favourite source.
    SingleSource,
    /// Uniform over the whole roster.
    UniformAll,
    /// Weight `1 / rank^s` over a per-user ranking of the roster.
    ZipfLike { s: f64 },
}

impl SourceProfile {
    /// Choice weights by rank for a roster of `n` sources.
    pub fn weights(&self, n: usize) -> Vec<f64> {
        match *self {
            SourceProfile::SingleSource => (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect(),
            SourceProfile::UniformAll => vec![1.0; n],
            SourceProfile::ZipfLike { s } => (0..n).map(|i| 1.0 / ((i + 1) as f64).powf(s)).collect(),
        }
    }

    /// Source factor of the profile's own distribution.
    pub fn expected_source_factor(&self, n: usize) -> f64 {
        let w = self.weights(n);
        let total: f64 = w.iter().sum();
        let p: Vec<f64> = w.iter().map(|x| x / total).collect();
        1.0 - normalized_entropy(&p).unwrap_or(0.0)
    }
}

/// Share of interactions going to each community.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommunityMix {
    pub p_pos: f64,
    pub p_neg: f64,
}

impl CommunityMix {
    pub fn pos(p_pos: f64) -> Self {
        CommunityMix {
            p_pos,
            p_neg: 1.0 - p_pos,
        }
    }
}

/// Day offsets `[from_day, to_day)` relative to the timespan start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Silence {
    pub from_day: f64,
    pub to_day: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Archetype {
    pub name: String,
    /// Fraction of users initially assigned to this archetype.
    pub share: f64,
    pub community_mix: CommunityMix,
    pub source_profile_pos: SourceProfile,
    pub source_profile_neg: SourceProfile,
    /// Expected interactions per day.
    pub rate: f64,
    /// Intervals without any interaction.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub silent: Vec<Silence>,
}

impl Archetype {
    pub fn new(name: &str, share: f64, p_pos: f64, pos: SourceProfile, neg: SourceProfile, rate: f64) -> Self {
        Archetype {
            name: name.to_string(),
            share,
            community_mix: CommunityMix::pos(p_pos),
            source_profile_pos: pos,
            source_profile_neg: neg,
            rate,
            silent: Vec::new(),
        }
    }

    pub fn silent_between(mut self, from_day: f64, to_day: f64) -> Self {
        self.silent.push(Silence { from_day, to_day });
        self
    }

    fn profile(&self, pole: Pole) -> SourceProfile {
        match pole {
            Pole::Pos => self.source_profile_pos,
            Pole::Neg => self.source_profile_neg,
        }
    }

    fn is_silent(&self, day: f64) -> bool {
        self.silent.iter().any(|s| s.from_day <= day && day < s.to_day)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixMorph {
    pub archetype: String,
    pub target_p_pos: f64,
    /// Length of the linear ramp; 0 is a step.
    pub relaxation_days: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventEffect {
    /// Users of archetype `from` behave as archetype `to` from now on.
    Remap { mapping: BTreeMap<String, String> },
    Morph { morphs: Vec<MixMorph> },
}

/// An effect taking hold `offset_days` after its event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedEffect {
    #[serde(default)]
    pub offset_days: f64,
    #[serde(flatten)]
    pub effect: EventEffect,
}

impl TimedEffect {
    pub fn now(effect: EventEffect) -> Self {
        TimedEffect {
            offset_days: 0.0,
            effect,
        }
    }

    pub fn after(offset_days: f64, effect: EventEffect) -> Self {
        TimedEffect { offset_days, effect }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledEvent {
    #[serde(with = "rfc3339_seconds")]
    pub time: DateTime<Utc>,
    #[serde(default)]
    pub label: String,
    pub effects: Vec<TimedEffect>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventSchedule {
    pub events: Vec<ScheduledEvent>,
}

impl EventSchedule {
    /// Every effect with the instant it applies, in time order (schedule
    /// order on ties).
    pub fn effects(&self) -> Vec<(DateTime<Utc>, &EventEffect)> {
        let mut out: Vec<(DateTime<Utc>, &EventEffect)> = self
            .events
            .iter()
            .flat_map(|e| {
                e.effects
                    .iter()
                    .map(move |t| (e.time + Duration::seconds((t.offset_days * 86_400.0).round() as i64), &t.effect))
            })
            .collect();
        out.sort_by_key(|(t, _)| *t);
        out
    }
}

/// Frame layout the ground truth is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub window_days: i64,
    pub step_days: i64,
    pub min_active_fraction: f64,
}

impl Default for FrameSpec {
    fn default() -> Self {
        FrameSpec {
            window_days: 28,
            step_days: 14,
            min_active_fraction: 0.8,
        }
    }
}

/// A complete generator input, as shipped by presets or read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub archetypes: Vec<Archetype>,
    #[serde(default)]
    pub schedule: EventSchedule,
    #[serde(default)]
    pub frames: FrameSpec,
    /// Hyperparameters this scenario was designed and checked with.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyperparams: Option<StudyHyperparams>,
}

impl Scenario {
    pub fn validate(&self, timespan: &Timespan) -> Result<(), SynthError> {
        let mut names = BTreeSet::new();
        for a in &self.archetypes {
            if !names.insert(a.name.as_str()) {
                return Err(SynthError::DuplicateArchetype(a.name.clone()));
            }
            let bad = |m: &str| Err(SynthError::BadArchetype(a.name.clone(), m.to_string()));
            let m = a.community_mix;
            if !(0.0..=1.0).contains(&m.p_pos) || !(0.0..=1.0).contains(&m.p_neg) || (m.p_pos + m.p_neg - 1.0).abs() > 1e-9
            {
                return bad("community mix must be two probabilities summing to 1");
            }
            if !(a.share >= 0.0) {
                return bad("share must be nonnegative");
            }
            if !(a.rate > 0.0) || !a.rate.is_finite() {
                return bad("rate must be positive");
            }
            for p in [a.source_profile_pos, a.source_profile_neg] {
                if let SourceProfile::ZipfLike { s } = p {
                    if !(s >= 0.0) || !s.is_finite() {
                        return bad("zipf exponent must be nonnegative");
                    }
                }
            }
        }
        let total: f64 = self.archetypes.iter().map(|a| a.share).sum();
        if self.archetypes.is_empty() || (total - 1.0).abs() > 1e-9 {
            return Err(SynthError::InfeasibleShares(total));
        }
        let mut last: Option<DateTime<Utc>> = None;
        for e in &self.schedule.events {
            if !timespan.contains(e.time) || last.is_some_and(|l| e.time <= l) {
                return Err(SynthError::BadSchedule);
            }
            last = Some(e.time);
            if e.effects.iter().any(|t| !(t.offset_days >= 0.0)) {
                return Err(SynthError::BadSchedule);
            }
        }
        let check = |n: &String| {
            if names.contains(n.as_str()) {
                Ok(())
            } else {
                Err(SynthError::UnknownArchetype(n.clone()))
            }
        };
        for (at, effect) in self.schedule.effects() {
            if !timespan.contains(at) {
                return Err(SynthError::BadSchedule);
            }
            match effect {
                EventEffect::Remap { mapping } => {
                    for (from, to) in mapping {
                        check(from)?;
                        check(to)?;
                    }
                }
                EventEffect::Morph { morphs } => {
                    for m in morphs {
                        check(&m.archetype)?;
                        if !(0.0..=1.0).contains(&m.target_p_pos) || !(m.relaxation_days >= 0.0) {
                            return Err(SynthError::BadArchetype(m.archetype.clone(), "bad morph".into()));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn archetype(&self, name: &str) -> &Archetype {
        self.archetypes.iter().find(|a| a.name == name).expect("validated name")
    }

    /// Archetype that a user starting as `initial` follows at time `t`.
    pub fn archetype_at<'a>(&'a self, initial: &'a str, t: DateTime<Utc>) -> &'a str {
        let mut current = initial;
        for (_, effect) in self.schedule.effects().into_iter().take_while(|(at, _)| *at <= t) {
            if let EventEffect::Remap { mapping } = effect {
                if let Some(next) = mapping.get(current) {
                    current = next;
                }
            }
        }
        current
    }

    /// Positive-community probability of `archetype` at time `t`.
    pub fn p_pos_at(&self, archetype: &str, t: DateTime<Utc>) -> f64 {
        let base = self.archetype(archetype).community_mix.p_pos;
        // (ramp start, value at start, ramp end, target)
        let mut seg: Option<(DateTime<Utc>, f64, DateTime<Utc>, f64)> = None;
        let eval = |seg: &Option<(DateTime<Utc>, f64, DateTime<Utc>, f64)>, at: DateTime<Utc>| match *seg {
            None => base,
            Some((t0, v0, t1, v1)) => {
                if at >= t1 {
                    v1
                } else {
                    let frac = (at - t0).num_seconds() as f64 / (t1 - t0).num_seconds() as f64;
                    v0 + (v1 - v0) * frac
                }
            }
        };
        for (at, effect) in self.schedule.effects().into_iter().take_while(|(at, _)| *at <= t) {
            if let EventEffect::Morph { morphs } = effect {
                for m in morphs.iter().filter(|m| m.archetype == archetype) {
                    let start_value = eval(&seg, at);
                    let end = at + Duration::seconds((m.relaxation_days * 86_400.0).round() as i64);
                    seg = Some((at, start_value, end, m.target_p_pos));
                }
            }
        }
        eval(&seg, t)
    }

    /// Times at which some user's archetype may switch.
    fn remap_times(&self) -> Vec<DateTime<Utc>> {
        self.schedule
            .effects()
            .into_iter()
            .filter(|(_, e)| matches!(e, EventEffect::Remap { .. }))
            .map(|(t, _)| t)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserTruth {
    pub user_id: String,
    pub initial_archetype: String,
    /// Archetype followed at each frame midpoint.
    pub archetype_per_frame: Vec<String>,
    /// Frames not entirely covered by a silence interval.
    pub planted_active_frames: usize,
    /// Planted to fall below the activity threshold.
    pub intermittent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub frames: Vec<Timeframe>,
    pub users: Vec<UserTruth>,
    /// Label multiset of the distinct planted behaviors at each frame midpoint.
    pub planted_signatures: Vec<Vec<BehavioralLabel>>,
    pub planted_types: Vec<PeriodType>,
    /// Frames whose planted type differs from the previous frame's.
    pub change_points: Vec<usize>,
}

impl GroundTruth {
    pub fn initial_archetypes(&self) -> BTreeMap<&str, &str> {
        self.users
            .iter()
            .map(|u| (u.user_id.as_str(), u.initial_archetype.as_str()))
            .collect()
    }

    pub fn intermittent_users(&self) -> BTreeSet<&str> {
        self.users
            .iter()
            .filter(|u| u.intermittent)
            .map(|u| u.user_id.as_str())
            .collect()
    }
}

/// Largest-remainder apportionment of `n` users over the shares.
fn apportion(shares: &[f64], n: usize) -> Vec<usize> {
    let raw: Vec<f64> = shares.iter().map(|s| s * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    let missing = n - counts.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        counts[i] += 1;
    }
    counts
}

fn day_of(timespan: &Timespan, t: DateTime<Utc>) -> f64 {
    (t - timespan.start).num_seconds() as f64 / 86_400.0
}

fn pick_weighted<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut target = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 && target < w {
            return i;
        }
        target -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn generate_user(
    config: &DebateConfig,
    scenario: &Scenario,
    timespan: &Timespan,
    user_id: &str,
    initial: &str,
    seed: u64,
) -> Vec<InteractionRecord> {
    let mut rng = substream(seed, str_tag(user_id));
    // per-user ranking of each roster; rank 0 is the favourite source
    let mut rankings = BTreeMap::new();
    for pole in [Pole::Pos, Pole::Neg] {
        let mut order: Vec<usize> = (0..config.roster_len(pole)).collect();
        order.shuffle(&mut rng);
        rankings.insert(pole, order);
    }
    let boundaries = scenario.remap_times();
    let span_secs = (timespan.end - timespan.start).num_seconds() as f64;
    let mut records = Vec::new();
    let mut t = 0.0f64;
    loop {
        let now = timespan.start + Duration::seconds(t as i64);
        let arch = scenario.archetype(scenario.archetype_at(initial, now));
        let gap = Exp::new(arch.rate / 86_400.0).expect("positive rate").sample(&mut rng);
        // the process is memoryless: restart at a remap so the new rate applies
        let next_boundary = boundaries
            .iter()
            .map(|b| (*b - timespan.start).num_seconds() as f64)
            .find(|&b| b > t && b < t + gap);
        if let Some(b) = next_boundary {
            t = b;
            continue;
        }
        t += gap;
        if t >= span_secs {
            break;
        }
        let at = timespan.start + Duration::seconds(t as i64);
        let arch = scenario.archetype(scenario.archetype_at(initial, at));
        if arch.is_silent(day_of(timespan, at)) {
            continue;
        }
        let p_pos = scenario.p_pos_at(&arch.name, at);
        let pole = if rng.random::<f64>() < p_pos { Pole::Pos } else { Pole::Neg };
        let n = config.roster_len(pole);
        let rank = pick_weighted(&mut rng, &arch.profile(pole).weights(n));
        let community = config.community(pole);
        records.push(InteractionRecord {
            user_id: user_id.to_string(),
            source_id: community.source_ids[rankings[&pole][rank]].clone(),
            community_id: community.community_id.clone(),
            timestamp: at,
            kind: InteractionKind::Retweet,
        });
    }
    records
}

/// Generates the interaction log (sorted like a loaded dataset) and its
/// ground truth. Deterministic in `seed`; users are generated in parallel
/// from independent substreams.
pub fn generate(
    config: &DebateConfig,
    scenario: &Scenario,
    timespan: Timespan,
    n_users: usize,
    seed: u64,
) -> Result<(Vec<InteractionRecord>, GroundTruth), SynthError> {
    config.validate()?;
    scenario.validate(&timespan)?;
    if n_users == 0 {
        return Err(SynthError::NoUsers);
    }
    let shares: Vec<f64> = scenario.archetypes.iter().map(|a| a.share).collect();
    let counts = apportion(&shares, n_users);
    let mut initial: Vec<&str> = scenario
        .archetypes
        .iter()
        .zip(&counts)
        .flat_map(|(a, &c)| std::iter::repeat_n(a.name.as_str(), c))
        .collect();
    initial.shuffle(&mut substream(seed, str_tag("assign")));
    let width = n_users.saturating_sub(1).to_string().len().max(4);
    let user_ids: Vec<String> = (0..n_users).map(|i| format!("u{i:0width$}")).collect();

    let per_user: Vec<Vec<InteractionRecord>> = user_ids
        .par_iter()
        .zip(initial.par_iter())
        .map(|(u, a)| generate_user(config, scenario, &timespan, u, a, seed))
        .collect();
    let mut records: Vec<InteractionRecord> = per_user.into_iter().flatten().collect();
    records.sort_by(|a, b| (a.timestamp, &a.user_id, &a.source_id).cmp(&(b.timestamp, &b.user_id, &b.source_id)));

    let truth = ground_truth(config, scenario, timespan, &user_ids, &initial, seed)?;
    Ok((records, truth))
}

fn ground_truth(
    config: &DebateConfig,
    scenario: &Scenario,
    timespan: Timespan,
    user_ids: &[String],
    initial: &[&str],
    seed: u64,
) -> Result<GroundTruth, SynthError> {
    let spec = scenario.frames;
    let frames = make_frames(timespan, Duration::days(spec.window_days), Duration::days(spec.step_days))
        .map_err(|e| SynthError::Frames(e.to_string()))?;
    let needed = spec.min_active_fraction * frames.len() as f64 - 1e-9;

    let users: Vec<UserTruth> = user_ids
        .iter()
        .zip(initial)
        .map(|(u, &init)| {
            let planted_active_frames = frames
                .iter()
                .filter(|f| !silent_through(scenario, init, &timespan, f))
                .count();
            UserTruth {
                user_id: u.clone(),
                initial_archetype: init.to_string(),
                archetype_per_frame: frames
                    .iter()
                    .map(|f| scenario.archetype_at(init, f.midpoint()).to_string())
                    .collect(),
                planted_active_frames,
                intermittent: (planted_active_frames as f64) < needed,
            }
        })
        .collect();

    let thresholds = LabelThresholds::default();
    let mut planted_signatures = Vec::new();
    let mut planted_types = Vec::new();
    for (fi, f) in frames.iter().enumerate() {
        let mid = f.midpoint();
        let present: BTreeSet<&str> = users
            .iter()
            .filter(|u| !u.intermittent)
            .map(|u| u.archetype_per_frame[fi].as_str())
            .collect();
        // distinct expected behaviors, keyed on the expected factor triple
        let mut behaviors: BTreeMap<[i64; 3], BehavioralLabel> = BTreeMap::new();
        for name in present {
            let arch = scenario.archetype(name);
            let p = scenario.p_pos_at(name, mid);
            let opinion = expected_opinion(p).unwrap_or(0.5);
            let side = |pole: Pole, share: f64| {
                if share == 0.0 {
                    1.0
                } else {
                    arch.profile(pole).expected_source_factor(config.roster_len(pole))
                }
            };
            let key = [opinion, side(Pole::Pos, p), side(Pole::Neg, 1.0 - p)].map(|x| (x * 100.0).round() as i64);
            behaviors.insert(key, thresholds.label(opinion));
        }
        let mut signature: Vec<BehavioralLabel> = behaviors.into_values().collect();
        signature.sort();
        planted_types.push(classify_frame(&signature, signature.len()));
        planted_signatures.push(signature);
    }
    let change_points = change_points(&planted_types);
    Ok(GroundTruth {
        schema_version: crate::SCHEMA_VERSION,
        scenario: scenario.name.clone(),
        seed,
        frames,
        users,
        planted_signatures,
        planted_types,
        change_points,
    })
}

/// Whether the user is silent for the whole frame (under every archetype
/// they follow during it).
fn silent_through(scenario: &Scenario, initial: &str, timespan: &Timespan, frame: &Timeframe) -> bool {
    let mut probes = vec![frame.start];
    probes.extend(scenario.remap_times().into_iter().filter(|t| frame.start < *t && *t < frame.end));
    probes.iter().all(|&t0| {
        let arch = scenario.archetype(scenario.archetype_at(initial, t0));
        let (from, to) = (day_of(timespan, frame.start), day_of(timespan, frame.end));
        arch.silent.iter().any(|s| s.from_day <= from && to <= s.to_day)
    })
}

fn collapse(types: &[PeriodType]) -> Vec<PeriodType> {
    let mut out: Vec<PeriodType> = types.to_vec();
    out.dedup();
    out
}

fn change_points(types: &[PeriodType]) -> Vec<usize> {
    (1..types.len()).filter(|&i| types[i] != types[i - 1]).collect()
}

/// Whether an observed frame sequence shows the planted periods in the
/// planted order, with every change point at most `tolerance` frames away
/// from the planted one.
pub fn pattern_matches(observed: &[PeriodType], planted: &[PeriodType], tolerance: usize) -> bool {
    if observed.len() != planted.len() || collapse(observed) != collapse(planted) {
        return false;
    }
    change_points(observed)
        .iter()
        .zip(change_points(planted))
        .all(|(&o, p)| o.abs_diff(p) <= tolerance)
}

/// Adjusted Rand Index between two labelings of the same items.
pub fn adjusted_rand_index<A: Ord, B: Ord>(left: &[A], right: &[B]) -> f64 {
    assert_eq!(left.len(), right.len(), "labelings must cover the same items");
    let n = left.len();
    if n < 2 {
        return 1.0;
    }
    let mut table: BTreeMap<(&A, &B), u64> = BTreeMap::new();
    let mut rows: BTreeMap<&A, u64> = BTreeMap::new();
    let mut cols: BTreeMap<&B, u64> = BTreeMap::new();
    for (a, b) in left.iter().zip(right) {
        *table.entry((a, b)).or_default() += 1;
        *rows.entry(a).or_default() += 1;
        *cols.entry(b).or_default() += 1;
    }
    let pairs = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let sum_rows: f64 = rows.values().map(|&c| pairs(c)).sum();
    let sum_cols: f64 = cols.values().map(|&c| pairs(c)).sum();
    let expected = sum_rows * sum_cols / pairs(n as u64);
    let max = (sum_rows + sum_cols) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factors::{factor_vector, RosterMode};
    use crate::ingest::Dataset;

    fn cfg() -> DebateConfig {
        DebateConfig::with_rosters("synthetic", "pos", "neg", 10)
    }

    #[test]
    fn apportionment_is_exact() {
        assert_eq!(apportion(&[0.36, 0.14, 0.05, 0.45], 1000), vec![360, 140, 50, 450]);
        let c = apportion(&[1.0 / 3.0; 3], 100);
        assert_eq!(c.iter().sum::<usize>(), 100);
        assert_eq!(c, vec![34, 33, 33]);
    }

    #[test]
    fn single_community_mixes_give_extreme_opinions() {
        let scenario = preset("static-2").unwrap();
        let (records, truth) = generate(&cfg(), &scenario, Timespan::study_2022(), 60, 7).unwrap();
        let ds = Dataset::new(cfg(), records).unwrap();
        assert_eq!(truth.users.len(), 60);
        for u in ds.users() {
            let v = factor_vector(&ds, u, RosterMode::Full).unwrap();
            assert!(v.opinion == 0.0 || v.opinion == 1.0);
        }
        assert!(truth.planted_types.iter().all(|&t| t == PeriodType::Polarized));
    }

    #[test]
    fn deterministic_in_seed() {
        let scenario = preset("covid-analog").unwrap();
        let a = generate(&cfg(), &scenario, Timespan::study_2022(), 40, 3).unwrap();
        let b = generate(&cfg(), &scenario, Timespan::study_2022(), 40, 3).unwrap();
        assert_eq!(a, b);
        let c = generate(&cfg(), &scenario, Timespan::study_2022(), 40, 4).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn empirical_mix_tracks_planted_mix() {
        let mut scenario = preset("static-4").unwrap();
        for a in &mut scenario.archetypes {
            a.rate = 5.0;
            a.silent.clear();
        }
        let span = Timespan::new(Timespan::study_2022().start, Timespan::study_2022().start + Duration::days(28)).unwrap();
        let (records, truth) = generate(&cfg(), &scenario, span, 200, 11).unwrap();
        let ds = Dataset::new(cfg(), records).unwrap();
        let arch = truth.initial_archetypes();
        for u in ds.users() {
            let v = factor_vector(&ds, u, RosterMode::Full).unwrap();
            let share = v.n_interactions_pos as f64 / (v.n_interactions_pos + v.n_interactions_neg) as f64;
            let planted = scenario.archetype(arch[u]).community_mix.p_pos;
            assert!((share - planted).abs() <= 0.05 + 0.1 * (planted * (1.0 - planted)).sqrt(), "{u}: {share} vs {planted}");
        }
    }

    #[test]
    fn morph_interpolates_and_remap_switches() {
        let scenario = preset("ukraine-analog").unwrap();
        let start = Timespan::study_2022().start;
        let at = |d: i64| start + Duration::days(d);
        assert_eq!(scenario.archetype_at("early-mixed-single", at(10)), "early-mixed-single");
        assert_eq!(scenario.archetype_at("early-mixed-single", at(60)), "balanced-a");
        assert_eq!(scenario.archetype_at("early-pos-single", at(200)), "polarized-pos");
        assert!((scenario.p_pos_at("balanced-a", at(60)) - 0.5).abs() < 1e-12);
        let early = scenario.p_pos_at("balanced-a", at(100));
        let late = scenario.p_pos_at("balanced-a", at(180));
        assert!(early < late && late < 0.9, "{early} {late}");
        assert_eq!(scenario.p_pos_at("balanced-a", at(205)), 1.0);
    }

    #[test]
    fn intermittent_users_are_flagged() {
        let scenario = preset("covid-analog").unwrap();
        let (_, truth) = generate(&cfg(), &scenario, Timespan::study_2022(), 200, 5).unwrap();
        for u in &truth.users {
            let expect = u.initial_archetype == "dropout-pos";
            assert_eq!(u.intermittent, expect, "{}", u.user_id);
            if u.initial_archetype == "sporadic-neg" {
                assert_eq!(u.planted_active_frames, 12);
            }
        }
    }

    #[test]
    fn validation_errors() {
        let mut s = preset("static-2").unwrap();
        s.archetypes[0].share = 0.7;
        assert!(matches!(generate(&cfg(), &s, Timespan::study_2022(), 10, 0), Err(SynthError::InfeasibleShares(_))));
        let mut s = preset("static-2").unwrap();
        s.archetypes[0].community_mix = CommunityMix { p_pos: 0.7, p_neg: 0.7 };
        assert!(matches!(generate(&cfg(), &s, Timespan::study_2022(), 10, 0), Err(SynthError::BadArchetype(..))));
        let mut bad_cfg = cfg();
        bad_cfg.community_neg.source_ids.clear();
        assert!(matches!(
            generate(&bad_cfg, &preset("static-2").unwrap(), Timespan::study_2022(), 10, 0),
            Err(SynthError::Config(_))
        ));
        assert!(matches!(preset("nope"), Err(SynthError::UnknownPreset(_))));
    }

    #[test]
    fn pattern_tolerance() {
        use PeriodType::*;
        let planted = [Unstructured, Unstructured, Balanced, Convergence, Convergence, Polarized];
        assert!(pattern_matches(&planted, &planted, 0));
        let late = [Unstructured, Unstructured, Unstructured, Balanced, Convergence, Polarized];
        assert!(pattern_matches(&late, &planted, 1));
        assert!(!pattern_matches(&late, &planted, 0));
        let missing = [Unstructured, Unstructured, Unstructured, Convergence, Convergence, Polarized];
        assert!(!pattern_matches(&missing, &planted, 1));
        let relapse = [Unstructured, Balanced, Unstructured, Convergence, Convergence, Polarized];
        assert!(!pattern_matches(&relapse, &planted, 1));
    }

    #[test]
    fn ari_reference_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &["a", "a", "b", "b"]), 1.0);
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        // classic example: contingency [[1,1],[0,2]] style partitions
        let ari = adjusted_rand_index(&[0, 0, 0, 1, 1, 1], &[0, 0, 1, 1, 2, 2]);
        assert!((ari - 0.24242424242424243).abs() < 1e-12, "{ari}");
    }
}
