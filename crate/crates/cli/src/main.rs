//! `objectlab` — audit object-detection label quality from the command line.
//!
//! Subcommands: `score` (rank images by label quality), `inject` (corrupt a
//! clean dataset with synthetic label errors), `evaluate` (retrieval metrics
//! of a score file against a manifest), `oracle-predict` (turn annotations
//! into synthetic predictions), `validate` (parse and check input files).

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use objectlab_core::baselines::{clod_score, per_image_map, tile_score};
use objectlab_core::dataset::{self, load_annotations, load_predictions, Dataset};
use objectlab_core::error::{Error, Severity, ValidationIssue};
use objectlab_core::eval;
use objectlab_core::inject::{inject_errors, ErrorManifest, ManifestEntry};
use objectlab_core::objectlab::{score_dataset, OverlookedMode};
use objectlab_core::report::{read_jsonl, write_jsonl, ScoreRecord};
use objectlab_core::synth::{oracle_detections, OracleConfig};

use config::RunConfig;

const TOOL: &str = "objectlab";
const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = TOOL, version, about = "Audit object-detection label quality: score images, inject synthetic label errors, evaluate error detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for the scoring pass (default: all cores). Output is
    /// identical for any worker count.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Score every image's label quality and write a ranked JSONL file.
    Score(ScoreArgs),
    /// Corrupt a clean annotation file with synthetic label errors.
    Inject(InjectArgs),
    /// Compare a score file against a ground-truth manifest.
    Evaluate(EvaluateArgs),
    /// Convert an annotation file into a synthetic prediction file.
    OraclePredict(OraclePredictArgs),
    /// Parse and validate input files, reporting issues as JSON.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Objectlab,
    Map,
    Tile,
    Clod,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Objectlab => "objectlab",
            Method::Map => "map",
            Method::Tile => "tile",
            Method::Clod => "clod",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OverlookedModeArg {
    MatchedSkip,
    Literal,
}

impl From<OverlookedModeArg> for OverlookedMode {
    fn from(v: OverlookedModeArg) -> Self {
        match v {
            OverlookedModeArg::MatchedSkip => OverlookedMode::MatchedSkip,
            OverlookedModeArg::Literal => OverlookedMode::Literal,
        }
    }
}

#[derive(Args)]
struct ScoreArgs {
    /// COCO annotation file.
    annotations: PathBuf,
    /// COCO detection-results file (out-of-sample predictions).
    predictions: PathBuf,
    /// Scoring method.
    #[arg(long, value_enum, default_value = "objectlab")]
    method: Method,
    /// Output score file (JSONL, ascending by score).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Optional CSV projection of the score columns.
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,

    #[arg(long)]
    tau_down: Option<f64>,
    #[arg(long)]
    tau_up: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long, value_enum)]
    overlooked_mode: Option<OverlookedModeArg>,
    #[arg(long)]
    grid_size: Option<usize>,
    #[arg(long)]
    overlap_threshold: Option<f64>,
    #[arg(long)]
    background_prior_weight: Option<f64>,
    #[arg(long)]
    linkage_cutoff: Option<f64>,
}

#[derive(Args)]
struct InjectArgs {
    /// Clean COCO annotation file.
    annotations: PathBuf,
    /// Corrupted annotation file to write.
    #[arg(long, value_name = "FILE")]
    out_annotations: PathBuf,
    /// Ground-truth manifest file to write (JSONL).
    #[arg(long, value_name = "FILE")]
    out_manifest: PathBuf,

    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    image_fraction: Option<f64>,
    #[arg(long)]
    drop_prob: Option<f64>,
    #[arg(long)]
    swap_prob: Option<f64>,
    #[arg(long)]
    shift_prob: Option<f64>,
    #[arg(long)]
    shift_min: Option<f64>,
    #[arg(long)]
    shift_max: Option<f64>,
    /// Never let a drop remove an image's only box.
    #[arg(long)]
    forbid_empty_images: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Score file produced by `score`.
    scores: PathBuf,
    /// Manifest file produced by `inject`.
    manifest: PathBuf,
    /// Write the JSON report here (otherwise it goes to stdout).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OraclePredictArgs {
    /// COCO annotation file to convert.
    annotations: PathBuf,
    /// Detection-results file to write.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Confidence assigned to every synthetic detection.
    #[arg(long)]
    confidence: Option<f64>,
    /// Per-corner jitter as a fraction of the box side length.
    #[arg(long)]
    jitter: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ValidateArgs {
    /// COCO annotation file.
    annotations: PathBuf,
    /// Optional detection-results file to validate against the annotations.
    predictions: Option<PathBuf>,
    #[arg(long)]
    tau_down: Option<f64>,
}

/// Header embedded as the first line of JSONL outputs and as the `info`
/// field of JSON outputs. Re-running a command with the embedded config
/// reproduces the file byte for byte.
#[derive(Serialize)]
struct FileHeader<'a> {
    tool: &'static str,
    version: &'static str,
    kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    method: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    config: &'a RunConfig,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        // the global pool can only be configured once per process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    match run(&cli) {
        Ok(code) => code,
        Err(err) => {
            let payload = json!({
                "error": err.to_string(),
                "issues": err.issues(),
            });
            eprintln!("{payload}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode, Error> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Score(args) => cmd_score(args, &mut cfg),
        Command::Inject(args) => cmd_inject(args, &mut cfg),
        Command::Evaluate(args) => cmd_evaluate(args, &cfg),
        Command::OraclePredict(args) => cmd_oracle_predict(args, &cfg),
        Command::Validate(args) => cmd_validate(args, &mut cfg),
    }
}

fn report_warnings(warnings: &[ValidationIssue]) {
    if !warnings.is_empty() {
        eprintln!("{}", json!({ "warnings": warnings }));
    }
}

fn cmd_score(args: &ScoreArgs, cfg: &mut RunConfig) -> Result<ExitCode, Error> {
    if let Some(v) = args.tau_down {
        cfg.ingest.tau_down = v;
    }
    if let Some(v) = args.tau_up {
        cfg.scoring.tau_up = v;
    }
    if let Some(v) = args.alpha {
        cfg.scoring.similarity.alpha = v;
    }
    if let Some(v) = args.sigma {
        cfg.scoring.similarity.sigma = v;
    }
    if let Some(v) = args.temperature {
        cfg.scoring.softmin_temperature = v;
    }
    if let Some(v) = args.overlooked_mode {
        cfg.scoring.overlooked_mode = v.into();
    }
    if let Some(v) = args.grid_size {
        cfg.tile.grid_size = v;
    }
    if let Some(v) = args.overlap_threshold {
        cfg.tile.overlap_threshold = v;
    }
    if let Some(v) = args.background_prior_weight {
        cfg.tile.background_prior_weight = v;
    }
    if let Some(v) = args.linkage_cutoff {
        cfg.clod.linkage_cutoff = v;
    }
    cfg.validate()?;

    let (mut ds, warnings) = load_annotations(&args.annotations, &cfg.ingest)?;
    report_warnings(&warnings);
    let warnings = load_predictions(&args.predictions, &mut ds, &cfg.ingest)?;
    report_warnings(&warnings);

    let mut records = score_records(&ds, args.method, cfg)?;
    records.sort_by(|a, b| {
        a.score
            .total_cmp(&b.score)
            .then(a.image_id.cmp(&b.image_id))
    });

    let header = FileHeader {
        tool: TOOL,
        version: VERSION,
        kind: "scores",
        method: Some(args.method.name()),
        seed: None,
        config: cfg,
    };
    write_jsonl(&args.out, &header, &records)?;
    if let Some(csv_path) = &args.csv {
        write_csv(csv_path, &records)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn score_records(ds: &Dataset, method: Method, cfg: &RunConfig) -> Result<Vec<ScoreRecord>, Error> {
    use rayon::prelude::*;
    let records = match method {
        Method::Objectlab => score_dataset(ds, &cfg.scoring)?
            .iter()
            .map(ScoreRecord::from_image_score)
            .collect(),
        Method::Map => {
            cfg.map.validate()?;
            ds.images
                .par_iter()
                .map(|img| ScoreRecord::plain(img.image_id, "map", per_image_map(img, &cfg.map)))
                .collect()
        }
        Method::Tile => {
            cfg.tile.validate()?;
            let k = ds.num_classes();
            ds.images
                .par_iter()
                .map(|img| {
                    ScoreRecord::plain(
                        img.image_id,
                        "tile",
                        tile_score(img, k, &cfg.tile, &cfg.scoring.similarity),
                    )
                })
                .collect()
        }
        Method::Clod => {
            cfg.clod.validate()?;
            let k = ds.num_classes();
            ds.images
                .par_iter()
                .map(|img| ScoreRecord::plain(img.image_id, "clod", clod_score(img, k, &cfg.clod)))
                .collect()
        }
    };
    Ok(records)
}

fn write_csv(path: &Path, records: &[ScoreRecord]) -> Result<(), Error> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = String::from("image_id,method,score,badloc,swap,overlook\n");
    for r in records {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.image_id,
            r.method,
            r.score,
            opt(r.badloc),
            opt(r.swap),
            opt(r.overlook)
        ));
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(io_err)
}

fn cmd_inject(args: &InjectArgs, cfg: &mut RunConfig) -> Result<ExitCode, Error> {
    if let Some(v) = args.seed {
        cfg.inject.seed = v;
    }
    if let Some(v) = args.image_fraction {
        cfg.inject.image_fraction = v;
    }
    if let Some(v) = args.drop_prob {
        cfg.inject.drop_prob = v;
    }
    if let Some(v) = args.swap_prob {
        cfg.inject.swap_prob = v;
    }
    if let Some(v) = args.shift_prob {
        cfg.inject.shift_prob = v;
    }
    if let Some(v) = args.shift_min {
        cfg.inject.shift_range.0 = v;
    }
    if let Some(v) = args.shift_max {
        cfg.inject.shift_range.1 = v;
    }
    if args.forbid_empty_images {
        cfg.inject.allow_empty_images = false;
    }
    cfg.validate()?;

    let (clean, warnings) = load_annotations(&args.annotations, &cfg.ingest)?;
    report_warnings(&warnings);
    let (corrupted, manifest) = inject_errors(&clean, &cfg.inject)?;

    let info = serde_json::to_value(FileHeader {
        tool: TOOL,
        version: VERSION,
        kind: "corrupted-annotations",
        method: None,
        seed: Some(cfg.inject.seed),
        config: cfg,
    })
    .expect("header serialization");
    dataset::write_annotations(&corrupted, &args.out_annotations, Some(info))?;

    let header = FileHeader {
        tool: TOOL,
        version: VERSION,
        kind: "manifest",
        method: None,
        seed: Some(cfg.inject.seed),
        config: cfg,
    };
    write_jsonl(&args.out_manifest, &header, &manifest.entries)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_evaluate(args: &EvaluateArgs, cfg: &RunConfig) -> Result<ExitCode, Error> {
    let (_, score_records): (_, Vec<ScoreRecord>) = read_jsonl(&args.scores)?;
    let (_, entries): (_, Vec<ManifestEntry>) = read_jsonl(&args.manifest)?;
    let manifest = ErrorManifest { entries };

    let scores: BTreeMap<u64, f64> = score_records
        .iter()
        .map(|r| (r.image_id, r.score))
        .collect();
    if scores.len() != score_records.len() {
        return Err(Error::Evaluation(
            "score file contains duplicate image ids".into(),
        ));
    }
    let truth: BTreeMap<u64, bool> = manifest
        .entries
        .iter()
        .map(|e| (e.image_id, e.is_flagged()))
        .collect();
    let report = eval::evaluate(&scores, &truth)?;

    println!("images             {}", report.num_images);
    println!("true errors (T)    {}", report.true_error_count);
    println!("average precision  {:.4}", report.average_precision);
    println!(
        "precision@100      {:.4}  (k={})",
        report.precision_at_100, report.precision_at_100_k
    );
    println!(
        "precision@T        {:.4}  (T={})",
        report.precision_at_t, report.true_error_count
    );

    let payload = json!({
        "tool": TOOL,
        "version": VERSION,
        "kind": "metrics",
        "config": cfg,
        "report": report,
    });
    match &args.out {
        Some(path) => {
            let mut bytes = serde_json::to_vec(&payload).expect("report serialization");
            bytes.push(b'\n');
            fs::write(path, bytes).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
        }
        None => println!("{payload}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracle_predict(args: &OraclePredictArgs, cfg: &RunConfig) -> Result<ExitCode, Error> {
    let oracle = OracleConfig {
        confidence: args.confidence.unwrap_or(0.99),
        jitter: args.jitter.unwrap_or(0.0),
        seed: args.seed.unwrap_or(0),
    };
    let (ds, warnings) = load_annotations(&args.annotations, &cfg.ingest)?;
    report_warnings(&warnings);
    let detections = oracle_detections(&ds, &oracle)?;
    let info = json!({
        "tool": TOOL,
        "version": VERSION,
        "kind": "oracle-predictions",
        "seed": oracle.seed,
        "oracle": oracle,
        "config": cfg,
    });
    dataset::write_detections_with_info(&detections, &info, &args.out)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(args: &ValidateArgs, cfg: &mut RunConfig) -> Result<ExitCode, Error> {
    if let Some(v) = args.tau_down {
        cfg.ingest.tau_down = v;
    }
    cfg.validate()?;

    let mut issues: Vec<ValidationIssue> = Vec::new();
    let mut failed = false;
    match load_annotations(&args.annotations, &cfg.ingest) {
        Ok((mut ds, warnings)) => {
            issues.extend(warnings);
            if let Some(pred_path) = &args.predictions {
                match load_predictions(pred_path, &mut ds, &cfg.ingest) {
                    Ok(warnings) => issues.extend(warnings),
                    Err(err) => {
                        failed = true;
                        collect_issues(err, &mut issues)?;
                    }
                }
            }
        }
        Err(err) => {
            failed = true;
            collect_issues(err, &mut issues)?;
        }
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&issues).expect("issue serialization")
    );
    let has_errors = failed || issues.iter().any(|i| i.severity == Severity::Error);
    Ok(if has_errors {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

/// Fold a validation failure into the issue list; other errors stay fatal.
fn collect_issues(err: Error, issues: &mut Vec<ValidationIssue>) -> Result<(), Error> {
    match err {
        Error::Validation { issues: found } => {
            issues.extend(found);
            Ok(())
        }
        other => Err(other),
    }
}
