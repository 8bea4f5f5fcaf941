use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use chrono::{DateTime, NaiveDate, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use polarscope::artifacts::{self, ArtifactWriter, FileDigest, Manifest, PeriodsReport};
use polarscope::clustering::{ClusterParams, FactorWeights, HyperGrid};
use polarscope::factors::RosterMode;
use polarscope::ingest::{self, DebateConfig, LoadMode, LoadOptions, Timespan};
use polarscope::pipeline::{self, AggregateOptions, Hyperparams, TemporalOptions};
use polarscope::synth::{self, Scenario};
use polarscope::timeline::parse_duration;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_DEGENERATE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "polarscope", version, about = "Polarization factors, behavioral clusters and period segmentation")]
struct Cli {
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic log with ground truth
    Synth(SynthArgs),
    /// Whole-span clustering of every user
    Aggregate(AggregateArgs),
    /// Sliding-frame clustering and period segmentation
    Temporal(TemporalArgs),
    /// Verify a run directory against its manifest and summarize it
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct OutArgs {
    /// Output directory
    #[arg(long, env = "POLARSCOPE_OUT", default_value = "polarscope-out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Built-in scenario
    #[arg(long, conflicts_with = "scenario", required_unless_present_any = ["scenario", "list"])]
    preset: Option<String>,
    /// Scenario JSON file
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Print the preset names and exit
    #[arg(long)]
    list: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    users: usize,
    /// Sources per community roster
    #[arg(long, default_value_t = 10)]
    roster: usize,
    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    format: Format,
    #[command(flatten)]
    span: SpanArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Jsonl,
    Csv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Roster {
    Full,
    Touched,
}

#[derive(Args, Debug)]
struct SpanArgs {
    /// First instant (date or RFC 3339), inclusive
    #[arg(long, default_value = "2022-01-01")]
    start: String,
    /// Last instant (date or RFC 3339), exclusive
    #[arg(long, default_value = "2022-07-31")]
    end: String,
}

#[derive(Args, Debug)]
struct InputArgs {
    /// Debate config JSON (community ids and source rosters)
    #[arg(long)]
    config: PathBuf,
    /// Interaction logs (.jsonl or .csv)
    #[arg(long = "input", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Skip unusable records instead of failing
    #[arg(long)]
    lenient: bool,
    #[command(flatten)]
    span: SpanArgs,
}

#[derive(Args, Debug)]
struct ClusterArgs {
    /// Fixed stiffness; omit to tune on the grid
    #[arg(long, requires = "opinion_weight")]
    a: Option<f64>,
    /// Fixed opinion weight; the rest is split over the source factors
    #[arg(long, requires = "a")]
    opinion_weight: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    restarts: usize,
    #[arg(long, value_enum, default_value_t = Roster::Full)]
    roster: Roster,
}

#[derive(Args, Debug)]
struct AggregateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    cluster: ClusterArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct TemporalArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    cluster: ClusterArgs,
    #[arg(long, default_value = "28d")]
    window: String,
    #[arg(long, default_value = "14d")]
    step: String,
    /// Minimum fraction of frames a user must be active in
    #[arg(long, default_value_t = 0.8)]
    min_active: f64,
    /// Tune inside every frame (sensitivity analysis)
    #[arg(long, conflicts_with = "a")]
    retune_per_frame: bool,
    /// Run name in the summary CSV
    #[arg(long, default_value = "run")]
    name: String,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Run directory containing manifest.json
    dir: PathBuf,
}

/// Error that maps to the usage exit code.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(e: impl std::fmt::Display) -> anyhow::Error {
    Usage(e.to_string()).into()
}

/// Error that maps to the degenerate-analysis exit code.
#[derive(Debug)]
struct Degenerate(String);

impl std::fmt::Display for Degenerate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "degenerate analysis: {}", self.0)
    }
}

impl std::error::Error for Degenerate {}

fn parse_instant(s: &str) -> anyhow::Result<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    let d = NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| usage(format!("bad instant `{s}`")))?;
    Ok(d.and_hms_opt(0, 0, 0).unwrap().and_utc())
}

fn timespan(span: &SpanArgs) -> anyhow::Result<Timespan> {
    Timespan::new(parse_instant(&span.start)?, parse_instant(&span.end)?).map_err(usage)
}

fn lift(e: polarscope::Error) -> anyhow::Error {
    if e.is_degenerate() {
        Degenerate(e.to_string()).into()
    } else {
        e.into()
    }
}

fn cluster_options(c: &ClusterArgs) -> anyhow::Result<AggregateOptions> {
    let mut params = ClusterParams {
        seed: c.seed,
        n_restarts: c.restarts,
        ..ClusterParams::default()
    };
    let hyperparams = match (c.a, c.opinion_weight) {
        (Some(a), Some(w)) => {
            params.a = a;
            params.weights = FactorWeights::from_opinion_share(w).map_err(usage)?;
            params.validate().map_err(usage)?;
            Hyperparams::Fixed
        }
        _ => Hyperparams::Tune {
            grid: HyperGrid::default(),
        },
    };
    Ok(AggregateOptions {
        params,
        hyperparams,
        roster_mode: match c.roster {
            Roster::Full => RosterMode::Full,
            Roster::Touched => RosterMode::Touched,
        },
        ..AggregateOptions::default()
    })
}

fn load(input: &InputArgs) -> anyhow::Result<(ingest::Dataset, Vec<ingest::LoadReport>, Vec<FileDigest>, Timespan)> {
    let span = timespan(&input.span)?;
    let config = DebateConfig::from_json_file(&input.config).map_err(polarscope::Error::from)?;
    let opts = LoadOptions {
        mode: if input.lenient { LoadMode::Lenient } else { LoadMode::Strict },
        format: None,
    };
    let (ds, reports) = ingest::load_many(&input.inputs, &config, span, opts).map_err(polarscope::Error::from)?;
    let mut digests = vec![FileDigest::of_file(&input.config)?];
    for p in &input.inputs {
        digests.push(FileDigest::of_file(p)?);
    }
    Ok((ds, reports, digests, span))
}

fn cmd_synth(args: &SynthArgs) -> anyhow::Result<()> {
    if args.list {
        for name in synth::preset_names() {
            println!("{name}");
        }
        return Ok(());
    }
    let (scenario, mut inputs) = match (&args.preset, &args.scenario) {
        (Some(name), _) => (synth::preset(name).map_err(polarscope::Error::from)?, vec![]),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let scenario: Scenario =
                serde_json::from_str(&text).with_context(|| format!("parsing scenario {}", path.display()))?;
            (scenario, vec![path.clone()])
        }
        (None, None) => bail!("one of --preset or --scenario is required"),
    };
    let span = timespan(&args.span)?;
    let config = DebateConfig::with_rosters("synthetic", "pos", "neg", args.roster);
    let (records, truth) =
        synth::generate(&config, &scenario, span, args.users, args.seed).map_err(polarscope::Error::from)?;

    let mut w = ArtifactWriter::new(&args.out.out)?;
    let log_name = match args.format {
        Format::Jsonl => {
            let mut buf = Vec::new();
            ingest::write_jsonl(&records, &mut buf)?;
            w.bytes("interactions.jsonl", &buf)?;
            "interactions.jsonl"
        }
        Format::Csv => {
            let mut buf = Vec::new();
            ingest::write_csv(&records, &mut buf)?;
            w.bytes("interactions.csv", &buf)?;
            "interactions.csv"
        }
    };
    w.json("debate.json", &config)?;
    w.json("scenario.json", &scenario)?;
    w.json("ground_truth.json", &truth)?;
    let digests = inputs
        .drain(..)
        .map(|p| FileDigest::of_file(&p))
        .collect::<Result<Vec<_>, _>>()?;
    let params = json!({
        "scenario": scenario.name,
        "users": args.users,
        "roster": args.roster,
        "start": ingest::format_instant(span.start),
        "end": ingest::format_instant(span.end),
        "format": log_name,
    });
    w.finish("synth", digests, params, args.seed)?;
    eprintln!(
        "wrote {} records for {} users to {}",
        records.len(),
        args.users,
        args.out.out.display()
    );
    Ok(())
}

fn cmd_aggregate(args: &AggregateArgs) -> anyhow::Result<()> {
    let opts = cluster_options(&args.cluster)?;
    let (ds, reports, inputs, span) = load(&args.input)?;
    let run = pipeline::run_aggregate(&ds, &opts).map_err(lift)?;
    let mut w = ArtifactWriter::new(&args.out.out)?;
    artifacts::write_aggregate(&mut w, &run)?;
    w.json("load_report.json", &reports)?;
    let params = json!({
        "start": ingest::format_instant(span.start),
        "end": ingest::format_instant(span.end),
        "lenient": args.input.lenient,
        "options": opts,
    });
    w.finish("aggregate", inputs, params, args.cluster.seed)?;
    println!(
        "k = {}  silhouette = {:.4}  davies-bouldin = {:.4}  a = {}  weights = {:?}",
        run.model.k,
        run.model.silhouette,
        run.model.davies_bouldin,
        run.a(),
        run.weights().as_array()
    );
    Ok(())
}

fn cmd_temporal(args: &TemporalArgs) -> anyhow::Result<()> {
    let window = parse_duration(&args.window).map_err(usage)?;
    let step = parse_duration(&args.step).map_err(usage)?;
    if step > window {
        return Err(usage(format!("--step ({}) must not exceed --window ({})", args.step, args.window)));
    }
    if !(0.0..=1.0).contains(&args.min_active) {
        return Err(usage(format!("--min-active must be in [0, 1], got {}", args.min_active)));
    }
    let aggregate = cluster_options(&args.cluster)?;
    let (ds, reports, inputs, span) = load(&args.input)?;
    let opts = TemporalOptions {
        timespan: span,
        window_seconds: window.num_seconds(),
        step_seconds: step.num_seconds(),
        min_active_fraction: args.min_active,
        aggregate,
        retune_per_frame: args.retune_per_frame,
    };
    let run = pipeline::run_temporal(&ds, &opts).map_err(lift)?;
    let mut w = ArtifactWriter::new(&args.out.out)?;
    artifacts::write_temporal(&mut w, &args.name, &run)?;
    w.json("load_report.json", &reports)?;
    let params = json!({
        "lenient": args.input.lenient,
        "name": args.name,
        "options": opts,
    });
    w.finish("temporal", inputs, params, args.cluster.seed)?;
    println!(
        "{} frames, cohort {} (dropped {}), sequence {}",
        run.frames.len(),
        run.cohort.len(),
        run.dropped_users.len(),
        run.type_string()
    );
    for t in &run.trends {
        println!(
            "convergence frames {}..={} slope {:.6}",
            t.first_frame, t.last_frame, t.slope
        );
    }
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> anyhow::Result<()> {
    let manifest = Manifest::read(&args.dir.join("manifest.json"))?;
    let mut bad = Vec::new();
    for a in &manifest.artifacts {
        let digest = FileDigest::of_file(&args.dir.join(&a.path))?;
        if digest.sha256 != a.sha256 {
            bad.push(a.path.clone());
        }
    }
    if !bad.is_empty() {
        bail!("artifacts differ from manifest: {}", bad.join(", "));
    }
    println!(
        "{} run, seed {}, {} artifacts verified",
        manifest.command,
        manifest.seed,
        manifest.artifacts.len()
    );
    let periods = args.dir.join("periods.json");
    if periods.exists() {
        let report: PeriodsReport = read_json(&periods)?;
        println!("sequence {}", report.sequence);
        for p in &report.periods {
            println!("  {:<12} frames {}..={}", p.period_type.as_str(), p.first_frame, p.last_frame);
        }
    }
    let clusters = args.dir.join("cluster_report.json");
    if clusters.exists() {
        let report: artifacts::ClusterReport = read_json(&clusters)?;
        for c in &report.clusters {
            println!(
                "  cluster {} {:<16} {:>5.1}%",
                c.cluster,
                c.label.map(|l| l.as_str()).unwrap_or("-"),
                100.0 * c.share
            );
        }
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Error chain without the causes a message already spells out.
fn render(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !msg.contains(&c) {
            msg = format!("{msg}: {c}");
        }
    }
    msg
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --jobs: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Aggregate(a) => cmd_aggregate(a),
        Command::Temporal(a) => cmd_temporal(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render(&e));
            if e.downcast_ref::<Degenerate>().is_some() {
                ExitCode::from(EXIT_DEGENERATE)
            } else if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(EXIT_DATA)
            }
        }
    }
}
