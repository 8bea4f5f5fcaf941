use std::collections::BTreeMap;

use chrono::Duration;
use serde::{Deserialize, Serialize};

use super::{
    Archetype, EventEffect, EventSchedule, FrameSpec, MixMorph, Scenario, ScheduledEvent, SourceProfile, SynthError, TimedEffect,
};
use crate::clustering::FactorWeights;
use crate::ingest::Timespan;

/// Fixed hyperparameters a scenario is meant to be analyzed with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyHyperparams {
    pub a: f64,
    pub weights: FactorWeights,
}

const NAMES: [&str; 6] = [
    "aggregate-vaccine",
    "aggregate-ukraine",
    "covid-analog",
    "ukraine-analog",
    "static-2",
    "static-4",
];

pub fn preset_names() -> Vec<&'static str> {
    NAMES.to_vec()
}

use SourceProfile::{SingleSource as Single, UniformAll as Uniform};

fn zipf(s: f64) -> SourceProfile {
    SourceProfile::ZipfLike { s }
}

fn hyper(a: f64) -> Option<StudyHyperparams> {
    Some(StudyHyperparams {
        a,
        weights: FactorWeights::default(),
    })
}

fn event(day: i64, label: &str, effects: Vec<TimedEffect>) -> ScheduledEvent {
    ScheduledEvent {
        time: Timespan::study_2022().start + Duration::days(day),
        label: label.to_string(),
        effects,
    }
}

fn morph(pairs: &[(&str, f64, f64)]) -> EventEffect {
    EventEffect::Morph {
        morphs: pairs
            .iter()
            .map(|&(a, target, days)| MixMorph {
                archetype: a.to_string(),
                target_p_pos: target,
                relaxation_days: days,
            })
            .collect(),
    }
}

fn remap(pairs: &[(&str, &str)]) -> EventEffect {
    EventEffect::Remap {
        mapping: pairs.iter().map(|&(f, t)| (f.to_string(), t.to_string())).collect::<BTreeMap<_, _>>(),
    }
}

/// Four static behaviors in the aggregate study geometry: two polarized
/// groups with a few favourite sources and two intermediate groups that
/// spread over their favoured community and stick to one source on the
/// other side.
fn aggregate(name: &str, shares: [f64; 4], a: f64) -> Scenario {
    let rate = 2.0;
    Scenario {
        name: name.to_string(),
        description: "static four-archetype population for whole-span clustering".into(),
        archetypes: vec![
            Archetype::new("polarized-pos", shares[0], 1.0, zipf(2.0), Single, rate),
            Archetype::new("intermediate-pos", shares[1], 0.85, Uniform, Single, rate),
            Archetype::new("intermediate-neg", shares[2], 0.15, Single, Uniform, rate),
            Archetype::new("polarized-neg", shares[3], 0.0, Single, zipf(2.0), rate),
        ],
        schedule: EventSchedule::default(),
        frames: FrameSpec::default(),
        hyperparams: hyper(a),
    }
}

fn covid_analog() -> Scenario {
    let rate = 3.0;
    Scenario {
        name: "covid-analog".into(),
        description: "intermediates collapse into the polarized poles after day 56".into(),
        archetypes: vec![
            Archetype::new("polarized-pos", 0.477, 1.0, Single, Single, rate),
            Archetype::new("intermediate-pos", 0.117, 0.85, Single, Single, rate),
            Archetype::new("intermediate-neg", 0.018, 0.15, Single, Single, rate),
            Archetype::new("polarized-neg", 0.238, 0.0, Single, Single, rate),
            Archetype::new("sporadic-neg", 0.05, 0.0, Single, Single, rate).silent_between(56.0, 112.0),
            Archetype::new("dropout-pos", 0.10, 1.0, Single, Single, rate).silent_between(112.0, 400.0),
        ],
        schedule: EventSchedule {
            events: vec![event(
                56,
                "intermediates polarize",
                vec![TimedEffect::now(morph(&[("intermediate-pos", 1.0, 0.0), ("intermediate-neg", 0.0, 0.0)]))],
            )],
        },
        frames: FrameSpec::default(),
        hyperparams: hyper(0.5),
    }
}

fn ukraine_analog() -> Scenario {
    let rate = 3.0;
    let early = |name: &str, share: f64, p: f64, pos, neg| Archetype::new(name, share, p, pos, neg, rate);
    Scenario {
        name: "ukraine-analog".into(),
        description: "unstructured start, shock at day 54, balanced phase, slow convergence, polarization".into(),
        archetypes: vec![
            early("early-pos-single", 0.22, 1.0, Single, Single),
            early("early-pos-diverse", 0.18, 1.0, Uniform, Single),
            early("early-neg-single", 0.17, 0.0, Single, Single),
            early("early-neg-diverse", 0.16, 0.0, Single, Uniform),
            early("early-lean-pos", 0.04, 0.8, zipf(1.0), Uniform),
            early("early-lean-neg", 0.04, 0.2, Uniform, zipf(1.0)),
            early("early-mixed-single", 0.03, 0.5, Single, Single),
            early("early-mixed-diverse", 0.03, 0.5, Uniform, Uniform),
            Archetype::new("polarized-pos", 0.0, 1.0, Single, Single, rate),
            Archetype::new("polarized-neg", 0.0, 0.0, Single, Single, rate),
            Archetype::new("balanced-a", 0.0, 0.5, Single, Single, rate),
            Archetype::new("balanced-b", 0.0, 0.5, Single, Single, rate),
            early("sporadic-neg", 0.05, 0.0, Single, Single).silent_between(56.0, 112.0),
            early("dropout-pos", 0.08, 1.0, Single, Single).silent_between(126.0, 400.0),
        ],
        schedule: EventSchedule {
            events: vec![event(
                54,
                "shock",
                vec![
                    TimedEffect::now(remap(&[
                        ("early-pos-single", "polarized-pos"),
                        ("early-pos-diverse", "polarized-pos"),
                        ("early-neg-single", "polarized-neg"),
                        ("early-neg-diverse", "polarized-neg"),
                        ("early-lean-pos", "balanced-a"),
                        ("early-mixed-single", "balanced-a"),
                        ("early-lean-neg", "balanced-b"),
                        ("early-mixed-diverse", "balanced-b"),
                    ])),
                    TimedEffect::after(30.0, morph(&[("balanced-a", 0.8, 0.0), ("balanced-b", 0.2, 0.0)])),
                    TimedEffect::after(44.0, morph(&[("balanced-a", 0.86, 98.0), ("balanced-b", 0.14, 98.0)])),
                    TimedEffect::after(142.0, morph(&[("balanced-a", 1.0, 0.0), ("balanced-b", 0.0, 0.0)])),
                ],
            )],
        },
        frames: FrameSpec::default(),
        hyperparams: hyper(1.0),
    }
}

fn static_preset(name: &str, four: bool) -> Scenario {
    let rate = 2.0;
    let archetypes = if four {
        vec![
            Archetype::new("polarized-pos", 0.36, 1.0, Single, Single, rate),
            Archetype::new("intermediate-pos", 0.14, 0.85, Single, Single, rate),
            Archetype::new("intermediate-neg", 0.05, 0.15, Single, Single, rate),
            Archetype::new("polarized-neg", 0.45, 0.0, Single, Single, rate),
        ]
    } else {
        vec![
            Archetype::new("polarized-pos", 0.5, 1.0, Single, Single, rate),
            Archetype::new("polarized-neg", 0.5, 0.0, Single, Single, rate),
        ]
    };
    Scenario {
        name: name.to_string(),
        description: "time-invariant population".into(),
        archetypes,
        schedule: EventSchedule::default(),
        frames: FrameSpec::default(),
        hyperparams: hyper(0.5),
    }
}

/// Built-in scenario by name.
pub fn preset(name: &str) -> Result<Scenario, SynthError> {
    match name {
        "aggregate-vaccine" => Ok(aggregate(name, [0.36, 0.14, 0.05, 0.45], 0.5)),
        "aggregate-ukraine" => Ok(aggregate(name, [0.34, 0.16, 0.05, 0.45], 0.33)),
        "covid-analog" => Ok(covid_analog()),
        "ukraine-analog" => Ok(ukraine_analog()),
        "static-2" => Ok(static_preset(name, false)),
        "static-4" => Ok(static_preset(name, true)),
        _ => Err(SynthError::UnknownPreset(name.to_string())),
    }
}
