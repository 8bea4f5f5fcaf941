//! Per-user polarization factors.
//!
//! Three factors describe a user in one scope (the whole span or a single
//! timeframe):
//!
//! * the oriented **opinion** factor: 1 when every interaction goes to the
//!   positive-pole community, 0 for the negative pole, 0.5 when balanced;
//! * two **source** factors, one per community: 1 when the user only ever
//!   touches a single elite source of that community, 0 when interactions
//!   are spread uniformly over its whole roster.
//!
//! All three are built from the complement `1 - H_N` of the normalized
//! Shannon entropy (natural log internally; the base cancels).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Dataset, Pole};

const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum FactorError {
    #[error("empty distribution")]
    EmptyDistribution,
    #[error("distribution has negative mass {0}")]
    NegativeMass(f64),
    #[error("distribution sums to {0}, not 1")]
    NotNormalized(f64),
    #[error("no interactions to compute a factor from")]
    NoInteractions,
    #[error("stiffness must be positive, got {0}")]
    BadStiffness(f64),
    #[error("factor value {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("user `{0}` has no records in this scope")]
    UnknownUser(String),
}

/// How many outcomes `n` the source entropy is normalized by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RosterMode {
    /// Full community roster, including sources the user never touched.
    #[default]
    Full,
    /// Only the sources the user touched at least once.
    Touched,
}

/// `-sum p ln p / ln n`, with `0 ln 0 = 0` and entropy 0 for `n = 1`.
pub fn normalized_entropy(p: &[f64]) -> Result<f64, FactorError> {
    if p.is_empty() {
        return Err(FactorError::EmptyDistribution);
    }
    if let Some(&neg) = p.iter().find(|&&x| x < 0.0) {
        return Err(FactorError::NegativeMass(neg));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(FactorError::NotNormalized(total));
    }
    if p.len() == 1 {
        return Ok(0.0);
    }
    let h: f64 = p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum();
    Ok((h / (p.len() as f64).ln()).clamp(0.0, 1.0))
}

fn entropy_of_counts(counts: &[u64]) -> Result<f64, FactorError> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(FactorError::NoInteractions);
    }
    let p: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    normalized_entropy(&p)
}

/// Oriented opinion factor from the interaction counts with each pole.
pub fn opinion_factor(counts_pos: u64, counts_neg: u64) -> Result<f64, FactorError> {
    let concentration = 1.0 - entropy_of_counts(&[counts_pos, counts_neg])?;
    let signed = match counts_pos.cmp(&counts_neg) {
        std::cmp::Ordering::Greater => concentration,
        std::cmp::Ordering::Less => -concentration,
        std::cmp::Ordering::Equal => 0.0,
    };
    Ok((signed + 1.0) / 2.0)
}

/// Opinion factor for an expected positive-pole share `p_pos`, i.e. the
/// infinite-sample limit of [`opinion_factor`].
pub fn expected_opinion(p_pos: f64) -> Result<f64, FactorError> {
    if !(0.0..=1.0).contains(&p_pos) {
        return Err(FactorError::OutOfRange(p_pos));
    }
    let concentration = 1.0 - normalized_entropy(&[p_pos, 1.0 - p_pos])?;
    let signed = if p_pos > 0.5 {
        concentration
    } else if p_pos < 0.5 {
        -concentration
    } else {
        0.0
    };
    Ok((signed + 1.0) / 2.0)
}

/// Source-concentration factor over a community roster: `1 - H_N`.
pub fn source_factor(counts_by_source: &[u64]) -> Result<f64, FactorError> {
    Ok(1.0 - entropy_of_counts(counts_by_source)?)
}

fn source_factor_with(counts: &[u64], mode: RosterMode) -> Result<f64, FactorError> {
    match mode {
        RosterMode::Full => source_factor(counts),
        RosterMode::Touched => {
            let touched: Vec<u64> = counts.iter().copied().filter(|&c| c > 0).collect();
            source_factor(&touched)
        }
    }
}

/// Raw (untransformed) factors of one user in one scope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarizationVector {
    pub user_id: String,
    pub opinion: f64,
    pub source_pos: f64,
    pub source_neg: f64,
    pub n_interactions_pos: u64,
    pub n_interactions_neg: u64,
}

impl PolarizationVector {
    pub fn as_array(&self) -> [f64; 3] {
        [self.opinion, self.source_pos, self.source_neg]
    }
}

/// Aggregates one user's records and computes their factors. A community the
/// user never interacted with gets source factor 1.0.
pub fn factor_vector(ds: &Dataset, user: &str, mode: RosterMode) -> Result<PolarizationVector, FactorError> {
    let positions = ds
        .user_positions(user)
        .ok_or_else(|| FactorError::UnknownUser(user.to_string()))?;
    let cfg = ds.config();
    let mut pos = vec![0u64; cfg.roster_len(Pole::Pos)];
    let mut neg = vec![0u64; cfg.roster_len(Pole::Neg)];
    for &p in positions {
        let src = ds.source_ref(p);
        match src.pole {
            Pole::Pos => pos[src.index] += 1,
            Pole::Neg => neg[src.index] += 1,
        }
    }
    let n_pos: u64 = pos.iter().sum();
    let n_neg: u64 = neg.iter().sum();
    let side = |counts: &[u64], n: u64| if n == 0 { Ok(1.0) } else { source_factor_with(counts, mode) };
    Ok(PolarizationVector {
        user_id: user.to_string(),
        opinion: opinion_factor(n_pos, n_neg)?,
        source_pos: side(&pos, n_pos)?,
        source_neg: side(&neg, n_neg)?,
        n_interactions_pos: n_pos,
        n_interactions_neg: n_neg,
    })
}

/// Factor vectors for `users` (in the given order) that have records in `ds`;
/// users without records are skipped.
pub fn factor_table<'a, I>(ds: &Dataset, users: I, mode: RosterMode) -> Result<Vec<PolarizationVector>, FactorError>
where
    I: IntoIterator<Item = &'a str>,
{
    users
        .into_iter()
        .filter(|u| ds.user_positions(u).is_some())
        .map(|u| factor_vector(ds, u, mode))
        .collect()
}

/// Sigmoid-like polynomial stretch `x^a / (x^a + (1-x)^a)`.
///
/// `a < 1` pulls interior values towards 0.5 while the endpoints stay put,
/// which separates users stuck at the extremes from everybody else.
pub fn transform(x: f64, a: f64) -> Result<f64, FactorError> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(FactorError::BadStiffness(a));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(FactorError::OutOfRange(x));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(x);
    }
    let num = x.powf(a);
    Ok(num / (num + (1.0 - x).powf(a)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub user_id: String,
    pub f_opinion: f64,
    pub f_source_pos: f64,
    pub f_source_neg: f64,
}

impl FeatureVector {
    pub fn as_array(&self) -> [f64; 3] {
        [self.f_opinion, self.f_source_pos, self.f_source_neg]
    }
}

pub fn featurize(v: &PolarizationVector, a: f64) -> Result<FeatureVector, FactorError> {
    Ok(FeatureVector {
        user_id: v.user_id.clone(),
        f_opinion: transform(v.opinion, a)?,
        f_source_pos: transform(v.source_pos, a)?,
        f_source_neg: transform(v.source_neg, a)?,
    })
}
