use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, Utc};
use proptest::prelude::*;

use polarscope::clustering::{
    davies_bouldin, kmeans, select_k, silhouette, ClusterModel, ClusterParams, FactorWeights, KRange, Point,
    WeightedPoints,
};
use polarscope::factors::{factor_vector, featurize, PolarizationVector, RosterMode};
use polarscope::ingest::{
    active_users, load_from_reader, DebateConfig, Dataset, InteractionKind, InteractionRecord, LoadMode, LogFormat,
    Timespan,
};
use polarscope::periods::{
    classify_frame, flow_matrix, label_model, segment_periods, BehavioralLabel, ClassifiedFrame, LabelThresholds,
    PeriodType,
};
use polarscope::synth::{generate, preset};
use polarscope::timeline::{make_frames, FrameAnalysis, Timeframe};

fn cfg() -> DebateConfig {
    DebateConfig::with_rosters("d", "pos", "neg", 3)
}

fn t0() -> DateTime<Utc> {
    Timespan::study_2022().start
}

fn record((user, pos, src, secs): (u8, bool, u8, i64)) -> InteractionRecord {
    let community = if pos { "pos" } else { "neg" };
    InteractionRecord {
        user_id: format!("u{user}"),
        source_id: format!("{community}-src-{src:02}"),
        community_id: community.into(),
        timestamp: t0() + Duration::seconds(secs),
        kind: InteractionKind::Retweet,
    }
}

fn records() -> impl Strategy<Value = Vec<InteractionRecord>> {
    proptest::collection::vec((0u8..6, any::<bool>(), 0u8..3, 0i64..211 * 86_400), 0..80)
        .prop_map(|v| v.into_iter().map(record).collect())
}

fn span(from_day: i64, len_days: i64) -> Timespan {
    Timespan::new(t0() + Duration::days(from_day), t0() + Duration::days(from_day + len_days)).unwrap()
}

fn points(max: usize) -> impl Strategy<Value = Vec<Point>> {
    proptest::collection::vec(prop::array::uniform3(0.0f64..1.0), 3..max)
}

fn model(assignment: BTreeMap<String, usize>, k: usize) -> ClusterModel {
    ClusterModel {
        params: ClusterParams::default(),
        k,
        centroids: vec![[0.0; 3]; k],
        assignment,
        inertia: 0.0,
        silhouette: 0.0,
        davies_bouldin: 0.0,
        labels: BTreeMap::new(),
        k_table: Vec::new(),
    }
}

fn analysis(index: usize, m: ClusterModel) -> FrameAnalysis {
    FrameAnalysis {
        frame: Timeframe {
            index,
            start: t0(),
            end: t0() + Duration::days(1),
            truncated: false,
        },
        vectors: Vec::new(),
        model: Some(m),
        inactive_users: BTreeSet::new(),
        degenerate: None,
    }
}

fn label() -> impl Strategy<Value = BehavioralLabel> {
    use BehavioralLabel::*;
    prop_oneof![
        Just(PolarizedPos),
        Just(PolarizedNeg),
        Just(IntermediatePos),
        Just(IntermediateNeg),
        Just(Balanced),
        Just(Other)
    ]
}

fn period_type() -> impl Strategy<Value = PeriodType> {
    use PeriodType::*;
    prop_oneof![Just(Unstructured), Just(Balanced), Just(Convergence), Just(Polarized)]
}

proptest! {
    #[test]
    fn serialize_then_load_round_trips(recs in records()) {
        let ds = Dataset::new(cfg(), recs).unwrap();
        let text = ds.to_jsonl_string();
        let (back, _) = load_from_reader(text.as_bytes(), LogFormat::Jsonl, &cfg(), Timespan::study_2022(), LoadMode::Strict, "mem").unwrap();
        prop_assert_eq!(&back, &ds);
        prop_assert_eq!(back.to_jsonl_string(), text);
    }

    #[test]
    fn filter_by_range_composes_as_intersection(
        recs in records(),
        (s1, l1, s2, l2) in (0i64..200, 1i64..120, 0i64..200, 1i64..120),
    ) {
        let ds = Dataset::new(cfg(), recs).unwrap();
        let (r1, r2) = (span(s1, l1), span(s2, l2));
        let twice = ds.filter_by_range(r1).unwrap().filter_by_range(r2).unwrap();
        match r1.intersect(&r2) {
            Some(both) => prop_assert_eq!(twice, ds.filter_by_range(both).unwrap()),
            None => prop_assert!(twice.is_empty()),
        }
        let once = ds.filter_by_range(r1).unwrap();
        prop_assert_eq!(once.filter_by_range(r1).unwrap(), once);
    }

    #[test]
    fn activity_threshold_extremes(recs in records()) {
        let ds = Dataset::new(cfg(), recs).unwrap();
        let frames = make_frames(Timespan::study_2022(), Duration::days(28), Duration::days(14)).unwrap();
        let all: BTreeSet<String> = ds.users().map(str::to_string).collect();
        prop_assert_eq!(active_users(&ds, &frames, 0.0).unwrap(), all);
        let every: BTreeSet<String> = ds
            .users()
            .filter(|u| frames.iter().all(|f| !ds.filter_by_range(f.span()).unwrap().user_positions(u).unwrap_or(&[]).is_empty()))
            .map(str::to_string)
            .collect();
        prop_assert_eq!(active_users(&ds, &frames, 1.0).unwrap(), every);
    }

    #[test]
    fn frames_tile_the_span(window in 1i64..60, step in 1i64..60, days in 1i64..400) {
        prop_assume!(step <= window);
        let ts = span(0, days);
        let frames = make_frames(ts, Duration::days(window), Duration::days(step)).unwrap();
        prop_assert!(!frames.is_empty());
        for (i, f) in frames.iter().enumerate() {
            prop_assert_eq!(f.index, i);
            prop_assert_eq!(f.start, ts.start + Duration::days(step * i as i64));
            prop_assert_eq!(f.end - f.start <= Duration::days(window), true);
            prop_assert_eq!(f.truncated, f.end - f.start < Duration::days(window));
            prop_assert!(f.end <= ts.end);
        }
        for w in frames.windows(2) {
            if !w[0].truncated {
                prop_assert_eq!(w[0].end - w[1].start, Duration::days(window - step));
            }
        }
        if days >= window && (days - window) % step == 0 {
            prop_assert_eq!(frames.len() as i64, (days - window) / step + 1);
        }
    }

    #[test]
    fn silhouette_bounded_and_indices_relabel_invariant(pts in points(40), k in 2usize..5, perm_seed in any::<u64>()) {
        let n = pts.len();
        prop_assume!(k <= n);
        let labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { (i * 7 + 3) % k }).collect();
        let mut perm: Vec<usize> = (0..k).collect();
        perm.rotate_left((perm_seed % k as u64) as usize);
        let relabeled: Vec<usize> = labels.iter().map(|&l| perm[l]).collect();
        let centroid = |lab: &[usize], c: usize| -> Point {
            let m: Vec<&Point> = pts.iter().zip(lab).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
            [0, 1, 2].map(|d| m.iter().map(|p| p[d]).sum::<f64>() / m.len() as f64)
        };
        let c1: Vec<Point> = (0..k).map(|c| centroid(&labels, c)).collect();
        let c2: Vec<Point> = (0..k).map(|c| centroid(&relabeled, c)).collect();
        let s = silhouette(&pts, &labels).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert!((s - silhouette(&pts, &relabeled).unwrap()).abs() <= 1e-12);
        let d1 = davies_bouldin(&pts, &labels, &c1).unwrap();
        let d2 = davies_bouldin(&pts, &relabeled, &c2).unwrap();
        prop_assert!((d1 - d2).abs() <= 1e-12);
    }

    #[test]
    fn kmeans_deterministic_and_restart_monotone(pts in points(30), seed in any::<u64>(), restarts in 1usize..8) {
        let k = 3.min(pts.len());
        let p = |n| ClusterParams { seed, n_restarts: n, ..ClusterParams::default() };
        let a = kmeans(&pts, k, &p(restarts)).unwrap();
        let b = kmeans(&pts, k, &p(restarts)).unwrap();
        prop_assert_eq!(&a.assignment, &b.assignment);
        prop_assert_eq!(a.inertia.to_bits(), b.inertia.to_bits());
        let more = kmeans(&pts, k, &p(restarts + 1)).unwrap();
        prop_assert!(more.inertia <= a.inertia);
    }

    #[test]
    fn classification_ignores_cluster_order(labels in proptest::collection::vec(label(), 1..7), rot in 0usize..7) {
        let mut other = labels.clone();
        let r = rot % other.len();
        other.rotate_left(r);
        prop_assert_eq!(classify_frame(&labels, labels.len()), classify_frame(&other, other.len()));
    }

    #[test]
    fn segmentation_is_lossless(types in proptest::collection::vec(period_type(), 0..30)) {
        let frames: Vec<ClassifiedFrame> = types
            .iter()
            .enumerate()
            .map(|(index, &period_type)| ClassifiedFrame { index, period_type, signature: Vec::new(), k: None })
            .collect();
        let periods = segment_periods(&frames);
        let rebuilt: Vec<PeriodType> = periods.iter().flat_map(|p| p.frames().map(move |_| p.period_type)).collect();
        prop_assert_eq!(rebuilt, types);
        for w in periods.windows(2) {
            prop_assert_ne!(w[0].period_type, w[1].period_type);
            prop_assert_eq!(w[0].last_frame + 1, w[1].first_frame);
        }
    }

    #[test]
    fn flows_conserve(
        first in proptest::collection::btree_map(0u16..60, 0usize..4, 1..60),
        second in proptest::collection::btree_map(0u16..60, 0usize..3, 1..60),
    ) {
        let named = |m: &BTreeMap<u16, usize>| m.iter().map(|(u, &c)| (format!("u{u}"), c)).collect::<BTreeMap<_, _>>();
        let (m1, m2) = (model(named(&first), 4), model(named(&second), 3));
        let (s1, s2) = (m1.cluster_sizes(), m2.cluster_sizes());
        let f = flow_matrix(&analysis(0, m1), &analysis(1, m2)).unwrap();
        prop_assert!(f.conserves(&s1, &s2));
        let both = first.keys().filter(|u| second.contains_key(u)).count() as u64;
        prop_assert_eq!(f.flows.iter().flatten().sum::<u64>(), both);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn select_k_recovers_separated_groups(k_star in 2usize..6, seed in any::<u64>(), per in 5usize..15) {
        let centres: [Point; 5] = [[0.0, 0.0, 0.0], [10.0, 0.0, 0.0], [0.0, 10.0, 0.0], [0.0, 0.0, 10.0], [10.0, 10.0, 10.0]];
        let mut rng = polarscope::rng::substream(seed, 0);
        let mut pts = Vec::new();
        for c in &centres[..k_star] {
            for _ in 0..per {
                pts.push(c.map(|x| x + rand::Rng::random_range(&mut rng, -0.5..0.5)));
            }
        }
        let data = WeightedPoints { ids: (0..pts.len()).map(|i| format!("p{i:03}")).collect(), points: pts };
        let m = select_k(&data, &ClusterParams { seed, ..ClusterParams::default() }).unwrap();
        prop_assert_eq!(m.k, k_star);
    }

    #[test]
    fn labels_do_not_depend_on_stiffness(seed in any::<u64>(), per in 4usize..12) {
        let mut rng = polarscope::rng::substream(seed, 1);
        let mut vectors = Vec::new();
        for (g, centre) in [1.0, 0.7, 0.3, 0.0].iter().enumerate() {
            for i in 0..per {
                let jitter: f64 = rand::Rng::random_range(&mut rng, -0.01..0.01);
                vectors.push(PolarizationVector {
                    user_id: format!("g{g}-{i:02}"),
                    opinion: (centre + jitter).clamp(0.0, 1.0),
                    source_pos: 1.0,
                    source_neg: 1.0,
                    n_interactions_pos: 1,
                    n_interactions_neg: 1,
                });
            }
        }
        let labels_at = |a: f64| {
            let features: Vec<_> = vectors.iter().map(|v| featurize(v, a).unwrap()).collect();
            let data = WeightedPoints::from_features(&features, &FactorWeights::default());
            let params = ClusterParams { a, seed, k_range: KRange { min: 4, max: 4 }, ..ClusterParams::default() };
            let m = select_k(&data, &params).unwrap();
            let by_cluster = label_model(&m, &vectors, &LabelThresholds::default());
            vectors.iter().map(|v| by_cluster[&m.cluster_of(&v.user_id).unwrap()]).collect::<Vec<_>>()
        };
        let base = labels_at(1.0);
        for a in [0.33, 0.5, 2.0] {
            prop_assert_eq!(&labels_at(a), &base);
        }
    }

    #[test]
    fn synth_is_byte_stable(seed in any::<u64>()) {
        let scenario = preset("ukraine-analog").unwrap();
        let config = DebateConfig::with_rosters("s", "pos", "neg", 10);
        let run = || {
            let (recs, truth) = generate(&config, &scenario, Timespan::study_2022(), 40, seed).unwrap();
            (Dataset::new(config.clone(), recs).unwrap().to_jsonl_string(), serde_json::to_string(&truth).unwrap())
        };
        prop_assert_eq!(run(), run());
    }
}

#[test]
fn constant_behavior_gives_identical_frame_vectors() {
    // two positive and one negative interaction every day
    let recs: Vec<InteractionRecord> = (0..211)
        .flat_map(|d| {
            let s = d * 86_400;
            [(0, true, 0, s + 100), (0, true, 1, s + 200), (0, false, 2, s + 300)]
        })
        .map(record)
        .collect();
    let ds = Dataset::new(cfg(), recs).unwrap();
    let frames = make_frames(Timespan::study_2022(), Duration::days(28), Duration::days(14)).unwrap();
    let vectors: Vec<[f64; 3]> = frames
        .iter()
        .map(|f| factor_vector(&ds.filter_by_range(f.span()).unwrap(), "u0", RosterMode::Full).unwrap().as_array())
        .collect();
    for v in &vectors[1..] {
        for (x, y) in v.iter().zip(&vectors[0]) {
            assert!((x - y).abs() <= 1e-12, "{v:?} vs {:?}", vectors[0]);
        }
    }
}
