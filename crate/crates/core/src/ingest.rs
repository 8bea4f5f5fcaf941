//! Interaction-log ingestion: debate configuration, record validation and
//! the immutable, time-ordered [`Dataset`] every other module reads from.
//!
//! Two on-disk formats are accepted, JSON Lines and CSV, with the same five
//! fields (`user_id`, `source_id`, `community_id`, `timestamp`, `kind`).
//! Timestamps are RFC 3339 and kept at second precision.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, SubsecRound, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeline::Timeframe;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid debate config: {0}")]
    InvalidConfig(String),
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: source `{source_id}` is not in any configured roster")]
    UnknownSource { line: usize, source_id: String },
    #[error("line {line}: source `{source_id}` does not belong to community `{community_id}`")]
    CommunityMismatch {
        line: usize,
        source_id: String,
        community_id: String,
    },
    #[error("inverted or empty range: {start} >= {end}")]
    InvertedRange {
        start: DateTime<Utc>,
        end: DateTime<Utc>,
    },
    #[error("no timeframes given")]
    NoFrames,
    #[error("activity fraction {0} outside [0, 1]")]
    BadFraction(f64),
}

/// Which orientation pole a community is mapped to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pole {
    Pos,
    Neg,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunitySpec {
    pub community_id: String,
    /// Elite-source roster, in a fixed order.
    pub source_ids: Vec<String>,
}

/// The two confronting communities of one debate. `community_pos` is the
/// community whose interactions push the opinion factor towards 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebateConfig {
    pub debate_name: String,
    pub community_pos: CommunitySpec,
    pub community_neg: CommunitySpec,
}

impl DebateConfig {
    /// Config with `roster_size` sources per community named `<id>-src-NN`.
    pub fn with_rosters(name: &str, pos_id: &str, neg_id: &str, roster_size: usize) -> Self {
        let roster = |id: &str| CommunitySpec {
            community_id: id.to_string(),
            source_ids: (0..roster_size).map(|i| format!("{id}-src-{i:02}")).collect(),
        };
        DebateConfig {
            debate_name: name.to_string(),
            community_pos: roster(pos_id),
            community_neg: roster(neg_id),
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |m: String| Err(IngestError::InvalidConfig(m));
        if self.community_pos.community_id == self.community_neg.community_id {
            return bad(format!(
                "community ids must differ (both `{}`)",
                self.community_pos.community_id
            ));
        }
        let mut seen = BTreeSet::new();
        for c in [&self.community_pos, &self.community_neg] {
            if c.community_id.is_empty() {
                return bad("empty community id".into());
            }
            if c.source_ids.is_empty() {
                return bad(format!("community `{}` has no sources", c.community_id));
            }
            for s in &c.source_ids {
                if !seen.insert(s.as_str()) {
                    return bad(format!("source `{s}` listed twice"));
                }
            }
        }
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: DebateConfig = serde_json::from_str(&text)
            .map_err(|e| IngestError::InvalidConfig(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn community(&self, pole: Pole) -> &CommunitySpec {
        match pole {
            Pole::Pos => &self.community_pos,
            Pole::Neg => &self.community_neg,
        }
    }

    pub fn roster_len(&self, pole: Pole) -> usize {
        self.community(pole).source_ids.len()
    }

    pub fn pole_of(&self, community_id: &str) -> Option<Pole> {
        if community_id == self.community_pos.community_id {
            Some(Pole::Pos)
        } else if community_id == self.community_neg.community_id {
            Some(Pole::Neg)
        } else {
            None
        }
    }

    /// Locates a source id in either roster.
    pub fn locate_source(&self, source_id: &str) -> Option<SourceRef> {
        [Pole::Pos, Pole::Neg].into_iter().find_map(|pole| {
            self.community(pole)
                .source_ids
                .iter()
                .position(|s| s == source_id)
                .map(|index| SourceRef { pole, index })
        })
    }
}

/// Position of a source inside the debate rosters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SourceRef {
    pub pole: Pole,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InteractionKind {
    #[default]
    Retweet,
}

/// One approval interaction of a user with an elite source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub user_id: String,
    pub source_id: String,
    pub community_id: String,
    #[serde(with = "rfc3339_seconds")]
    pub timestamp: DateTime<Utc>,
    #[serde(default)]
    pub kind: InteractionKind,
}

pub(crate) mod rfc3339_seconds {
    use chrono::{DateTime, SecondsFormat, SubsecRound, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.to_rfc3339_opts(SecondsFormat::Secs, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&raw)
            .map(|t| t.with_timezone(&Utc).trunc_subsecs(0))
            .map_err(serde::de::Error::custom)
    }
}

/// Half-open instant interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timespan {
    #[serde(with = "rfc3339_seconds")]
    pub start: DateTime<Utc>,
    #[serde(with = "rfc3339_seconds")]
    pub end: DateTime<Utc>,
}

impl Timespan {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self, IngestError> {
        if start >= end {
            return Err(IngestError::InvertedRange { start, end });
        }
        Ok(Timespan { start, end })
    }

    /// `[2022-01-01, 2022-07-31)`, the study span used by the presets.
    pub fn study_2022() -> Self {
        Timespan {
            start: DateTime::parse_from_rfc3339("2022-01-01T00:00:00Z")
                .unwrap()
                .with_timezone(&Utc),
            end: DateTime::parse_from_rfc3339("2022-07-31T00:00:00Z")
                .unwrap()
                .with_timezone(&Utc),
        }
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start <= t && t < self.end
    }

    pub fn intersect(&self, other: &Timespan) -> Option<Timespan> {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        (start < end).then_some(Timespan { start, end })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadMode {
    /// Abort on the first malformed or inconsistent record.
    #[default]
    Strict,
    /// Skip and count bad records.
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    #[default]
    Jsonl,
    Csv,
}

impl LogFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => LogFormat::Csv,
            _ => LogFormat::Jsonl,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropCounts {
    pub malformed: usize,
    pub unknown_source: usize,
    pub community_mismatch: usize,
    pub out_of_timespan: usize,
}

impl DropCounts {
    pub fn total(&self) -> usize {
        self.malformed + self.unknown_source + self.community_mismatch + self.out_of_timespan
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub schema_version: u32,
    pub source: String,
    pub kept: usize,
    pub dropped: DropCounts,
}

/// Immutable, validated interaction log.
///
/// Records are sorted by `(timestamp, user_id, source_id)` and every record
/// position appears in exactly one `user_index` entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    config: DebateConfig,
    records: Vec<InteractionRecord>,
    refs: Vec<SourceRef>,
    user_index: BTreeMap<String, Vec<usize>>,
}

impl Dataset {
    /// Builds a dataset from records already known to satisfy the config.
    /// Returns an error naming the first inconsistent record otherwise.
    pub fn new(config: DebateConfig, records: Vec<InteractionRecord>) -> Result<Self, IngestError> {
        config.validate()?;
        let mut refs = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            refs.push(check_record(&config, r, i + 1)?);
        }
        Ok(Self::assemble(config, records, refs))
    }

    fn assemble(config: DebateConfig, records: Vec<InteractionRecord>, refs: Vec<SourceRef>) -> Self {
        let mut paired: Vec<(InteractionRecord, SourceRef)> = records.into_iter().zip(refs).collect();
        paired.sort_by(|(a, _), (b, _)| {
            (a.timestamp, &a.user_id, &a.source_id).cmp(&(b.timestamp, &b.user_id, &b.source_id))
        });
        let (records, refs): (Vec<_>, Vec<_>) = paired.into_iter().unzip();
        let mut user_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (pos, r) in records.iter().enumerate() {
            user_index.entry(r.user_id.clone()).or_default().push(pos);
        }
        Dataset {
            config,
            records,
            refs,
            user_index,
        }
    }

    pub fn config(&self) -> &DebateConfig {
        &self.config
    }

    pub fn records(&self) -> &[InteractionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn user_index(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.user_index
    }

    pub fn users(&self) -> impl Iterator<Item = &str> {
        self.user_index.keys().map(String::as_str)
    }

    pub fn user_positions(&self, user: &str) -> Option<&[usize]> {
        self.user_index.get(user).map(Vec::as_slice)
    }

    pub(crate) fn source_ref(&self, pos: usize) -> SourceRef {
        self.refs[pos]
    }

    /// Records with `start <= timestamp < end`, as a fresh dataset.
    pub fn filter_by_range(&self, range: Timespan) -> Result<Dataset, IngestError> {
        if range.start >= range.end {
            return Err(IngestError::InvertedRange {
                start: range.start,
                end: range.end,
            });
        }
        let lo = self.records.partition_point(|r| r.timestamp < range.start);
        let hi = self.records.partition_point(|r| r.timestamp < range.end);
        let records = self.records[lo..hi].to_vec();
        let refs = self.refs[lo..hi].to_vec();
        Ok(Self::assemble(self.config.clone(), records, refs))
    }

    /// Users with at least one interaction in `frame`, by binary search on
    /// each user's (time-sorted) positions.
    pub(crate) fn is_active_in(&self, positions: &[usize], frame: &Timeframe) -> bool {
        let first = positions.partition_point(|&p| self.records[p].timestamp < frame.start);
        first < positions.len() && self.records[positions[first]].timestamp < frame.end
    }

    /// Canonical JSONL form: one record per line in dataset order.
    pub fn write_jsonl<W: Write>(&self, out: W) -> Result<(), IngestError> {
        write_jsonl(&self.records, out)
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits utf-8")
    }
}

pub fn write_jsonl<W: Write>(records: &[InteractionRecord], mut out: W) -> Result<(), IngestError> {
    let io = |source| IngestError::Io {
        path: "<output>".into(),
        source,
    };
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| io(e.into()))?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// CSV form with header `user_id,source_id,community_id,timestamp,kind`.
pub fn write_csv<W: Write>(records: &[InteractionRecord], out: W) -> Result<(), IngestError> {
    let io = |source| IngestError::Io {
        path: "<output>".into(),
        source,
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["user_id", "source_id", "community_id", "timestamp", "kind"])
        .map_err(|e| io(e.into()))?;
    for r in records {
        let ts = format_instant(r.timestamp);
        w.write_record([r.user_id.as_str(), &r.source_id, &r.community_id, &ts, "retweet"])
            .map_err(|e| io(e.into()))?;
    }
    w.flush().map_err(io)
}

fn check_record(cfg: &DebateConfig, r: &InteractionRecord, line: usize) -> Result<SourceRef, IngestError> {
    let Some(src) = cfg.locate_source(&r.source_id) else {
        return Err(IngestError::UnknownSource {
            line,
            source_id: r.source_id.clone(),
        });
    };
    if cfg.pole_of(&r.community_id) != Some(src.pole) {
        return Err(IngestError::CommunityMismatch {
            line,
            source_id: r.source_id.clone(),
            community_id: r.community_id.clone(),
        });
    }
    Ok(src)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    pub mode: LoadMode,
    /// Overrides extension-based format detection.
    pub format: Option<LogFormat>,
}

#[derive(Deserialize)]
struct CsvRow {
    user_id: String,
    source_id: String,
    community_id: String,
    timestamp: String,
    #[serde(default)]
    kind: Option<String>,
}

fn parse_csv_row(row: CsvRow) -> Result<InteractionRecord, String> {
    let timestamp = DateTime::parse_from_rfc3339(row.timestamp.trim())
        .map_err(|e| format!("timestamp `{}`: {e}", row.timestamp))?
        .with_timezone(&Utc)
        .trunc_subsecs(0);
    let kind = match row.kind.as_deref().map(str::trim) {
        None | Some("") | Some("retweet") => InteractionKind::Retweet,
        Some(other) => return Err(format!("unknown kind `{other}`")),
    };
    Ok(InteractionRecord {
        user_id: row.user_id,
        source_id: row.source_id,
        community_id: row.community_id,
        timestamp,
        kind,
    })
}

/// Accumulates parsed records and enforces validation in either mode.
struct Loader<'a> {
    config: &'a DebateConfig,
    timespan: Timespan,
    mode: LoadMode,
    records: Vec<InteractionRecord>,
    refs: Vec<SourceRef>,
    dropped: DropCounts,
}

impl Loader<'_> {
    fn malformed(&mut self, line: usize, reason: String) -> Result<(), IngestError> {
        match self.mode {
            LoadMode::Strict => Err(IngestError::Malformed { line, reason }),
            LoadMode::Lenient => {
                self.dropped.malformed += 1;
                Ok(())
            }
        }
    }

    fn accept(&mut self, line: usize, r: InteractionRecord) -> Result<(), IngestError> {
        match check_record(self.config, &r, line) {
            Ok(src) => {
                if self.timespan.contains(r.timestamp) {
                    self.records.push(r);
                    self.refs.push(src);
                } else {
                    self.dropped.out_of_timespan += 1;
                }
                Ok(())
            }
            Err(e) if self.mode == LoadMode::Strict => Err(e),
            Err(IngestError::UnknownSource { .. }) => {
                self.dropped.unknown_source += 1;
                Ok(())
            }
            Err(_) => {
                self.dropped.community_mismatch += 1;
                Ok(())
            }
        }
    }

    fn finish(self, source: String) -> (Dataset, LoadReport) {
        let report = LoadReport {
            schema_version: crate::SCHEMA_VERSION,
            source,
            kept: self.records.len(),
            dropped: self.dropped,
        };
        (Dataset::assemble(self.config.clone(), self.records, self.refs), report)
    }
}

/// Reads a log from any reader. `source` only labels the report.
pub fn load_from_reader<R: Read>(
    reader: R,
    format: LogFormat,
    config: &DebateConfig,
    timespan: Timespan,
    mode: LoadMode,
    source: &str,
) -> Result<(Dataset, LoadReport), IngestError> {
    config.validate()?;
    let io = |e: std::io::Error| IngestError::Io {
        path: source.to_string(),
        source: e,
    };
    let mut loader = Loader {
        config,
        timespan,
        mode,
        records: Vec::new(),
        refs: Vec::new(),
        dropped: DropCounts::default(),
    };
    match format {
        LogFormat::Jsonl => {
            for (i, line) in BufReader::new(reader).lines().enumerate() {
                let line_no = i + 1;
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<InteractionRecord>(&line) {
                    Ok(r) => loader.accept(line_no, r)?,
                    Err(e) => loader.malformed(line_no, e.to_string())?,
                }
            }
        }
        LogFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::Fields).from_reader(reader);
            let headers = match rdr.headers() {
                Ok(h) => h.clone(),
                Err(e) => return Err(IngestError::Malformed { line: 1, reason: e.to_string() }),
            };
            for row in rdr.records() {
                let (line_no, parsed) = match row {
                    Ok(row) => {
                        let line = row.position().map_or(0, |p| p.line() as usize);
                        let parsed = row
                            .deserialize::<CsvRow>(Some(&headers))
                            .map_err(|e| e.to_string())
                            .and_then(parse_csv_row);
                        (line, parsed)
                    }
                    Err(e) => (e.position().map_or(0, |p| p.line() as usize), Err(e.to_string())),
                };
                match parsed {
                    Ok(r) => loader.accept(line_no, r)?,
                    Err(reason) => loader.malformed(line_no, reason)?,
                }
            }
        }
    }
    Ok(loader.finish(source.to_string()))
}

/// Loads and validates an interaction log from disk.
pub fn load_dataset(
    path: impl AsRef<Path>,
    config: &DebateConfig,
    timespan: Timespan,
    opts: LoadOptions,
) -> Result<(Dataset, LoadReport), IngestError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let format = opts.format.unwrap_or_else(|| LogFormat::from_path(path));
    load_from_reader(file, format, config, timespan, opts.mode, &path.display().to_string())
}

/// Loads several logs into one dataset, summing their reports.
pub fn load_many<P: AsRef<Path>>(
    paths: &[P],
    config: &DebateConfig,
    timespan: Timespan,
    opts: LoadOptions,
) -> Result<(Dataset, Vec<LoadReport>), IngestError> {
    let mut records = Vec::new();
    let mut reports = Vec::new();
    for p in paths {
        let (ds, report) = load_dataset(p, config, timespan, opts)?;
        records.extend(ds.records);
        reports.push(report);
    }
    Ok((Dataset::new(config.clone(), records)?, reports))
}

/// Users active (>= 1 interaction) in at least `min_active_fraction` of
/// `frames`. A user is dropped only when strictly more than
/// `1 - min_active_fraction` of the frames are empty for them.
pub fn active_users(
    ds: &Dataset,
    frames: &[Timeframe],
    min_active_fraction: f64,
) -> Result<BTreeSet<String>, IngestError> {
    if frames.is_empty() {
        return Err(IngestError::NoFrames);
    }
    if !(0.0..=1.0).contains(&min_active_fraction) {
        return Err(IngestError::BadFraction(min_active_fraction));
    }
    let needed = min_active_fraction * frames.len() as f64 - 1e-9;
    Ok(ds
        .user_index
        .iter()
        .filter(|(_, positions)| {
            let active = frames.iter().filter(|f| ds.is_active_in(positions, f)).count();
            active as f64 >= needed
        })
        .map(|(u, _)| u.clone())
        .collect())
}

/// RFC 3339 rendering used in every artifact.
pub fn format_instant(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}
