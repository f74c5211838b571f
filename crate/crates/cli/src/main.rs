mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use wildsynth_core::curation::{self, SpeciesAllocation};
use wildsynth_core::editor::{EditBackend, MockBackend, RemoteBackend};
use wildsynth_core::eval::{self, HeadConfig};
use wildsynth_core::orchestrator::{self, DirectorySource, ImageSource, SyntheticSource};
use wildsynth_core::{ingest, report, DayNight, ImageBuffer};

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "wildsynth",
    version,
    about = "Synthetic wildlife phenotype generation with scene-drift QC"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a placement-weighted base set from detector output and metadata.
    Curate(CurateArgs),
    /// Generate and QC variants for a stratified subsample of a base set.
    Run(RunArgs),
    /// Aggregate a manifest into summary tables.
    Report(ReportArgs),
    /// Train a screening head on feature vectors and score it.
    Eval(EvalArgs),
}

#[derive(clap::Args)]
struct CurateArgs {
    /// Detector batch output (JSON).
    #[arg(long)]
    detections: PathBuf,
    /// Capture metadata table (file,species,timestamp,location,day_night).
    #[arg(long)]
    metadata: PathBuf,
    /// Image directory, used when metadata has no day/night flag.
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    target: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.8)]
    min_conf: f64,
    /// Equal species quotas instead of proportional ones.
    #[arg(long)]
    balanced: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Mock,
    Remote,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    base_set: PathBuf,
    /// Subsample size; the whole base set when omitted.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = BackendKind::Mock)]
    backend: BackendKind,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: PathBuf,
    /// Defaults to the config value, then `run-<seed>`.
    #[arg(long)]
    run_id: Option<String>,
    /// Base image directory; overrides the config.
    #[arg(long)]
    images: Option<PathBuf>,
    /// Use generated scenes of this size (`WIDTHxHEIGHT`) instead of files.
    #[arg(long, value_parser = parse_size)]
    synthetic: Option<(u32, u32)>,
    #[arg(long)]
    in_flight: Option<usize>,
    /// Mock backend: append every request to this file.
    #[arg(long)]
    call_log: Option<PathBuf>,
    /// Mock backend: artificial latency per request.
    #[arg(long, default_value_t = 0)]
    mock_delay_ms: u64,
    /// Write the run summary here as JSON.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GroupBy {
    Species,
    Variant,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(clap::Args)]
struct ReportArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Restrict to one run; all runs when omitted.
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long)]
    day_only: bool,
    #[arg(long, value_enum)]
    by: Option<GroupBy>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum HeadArg {
    Linear,
    Mlp,
}

#[derive(clap::Args)]
struct EvalArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long, value_enum, default_value_t = HeadArg::Mlp)]
    head: HeadArg,
    /// Folds for cross-validation over the synthetic split; 0 disables.
    #[arg(long, default_value_t = 5)]
    cv: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    l2: Option<f64>,
    /// Report file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_size(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s.split_once('x').ok_or("expected WIDTHxHEIGHT")?;
    Ok((
        w.parse().map_err(|e| format!("width: {e}"))?,
        h.parse().map_err(|e| format!("height: {e}"))?,
    ))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Curate(a) => curate(a),
        Command::Run(a) => run(a),
        Command::Report(a) => report_cmd(a),
        Command::Eval(a) => eval_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn write(path: &Path, contents: &[u8]) -> Result<(), String> {
    std::fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))
}

fn curate(a: CurateArgs) -> Result<(), String> {
    let parsed = ingest::parse_detections(&read(&a.detections)?).map_err(|e| e.to_string())?;
    for w in &parsed.warnings {
        log::warn!("{w}");
    }
    let metadata = ingest::parse_metadata(&read(&a.metadata)?).map_err(|e| e.to_string())?;
    let candidates =
        curation::assemble_candidates(&parsed.records, &metadata, a.min_conf, |file| {
            let dir = a.images.as_ref()?;
            ImageBuffer::load(dir.join(file))
                .map_err(|e| log::warn!("{file}: {e}"))
                .ok()
        });
    log::info!(
        "{} candidates from {} metadata rows",
        candidates.len(),
        metadata.len()
    );
    let allocation = if a.balanced {
        SpeciesAllocation::Balanced
    } else {
        SpeciesAllocation::Proportional
    };
    let set = curation::build_base_set_with(&candidates, a.target, a.seed, allocation)
        .map_err(|e| e.to_string())?;
    write(&a.out, curation::write_base_set(&set, a.seed).as_bytes())?;
    println!("wrote {} base images to {}", set.len(), a.out.display());
    Ok(())
}

fn run(a: RunArgs) -> Result<(), String> {
    let cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let text = String::from_utf8(read(&a.base_set)?).map_err(|e| e.to_string())?;
    let base_set = curation::read_base_set(&text).map_err(|e| e.to_string())?;
    let bases = match a.n {
        Some(n) => {
            curation::stratified_subsample(&base_set, n, a.seed).map_err(|e| e.to_string())?
        }
        None => base_set,
    };

    let run_id = a
        .run_id
        .or(cfg.run_id.clone())
        .unwrap_or_else(|| format!("run-{}", a.seed));
    let mut pipeline = cfg.pipeline(run_id, a.seed)?;
    if let Some(n) = a.in_flight {
        pipeline.in_flight = n;
    }

    let source: Box<dyn ImageSource> = match (a.synthetic, a.images.or(cfg.image_dir.clone())) {
        (Some((width, height)), _) => Box::new(SyntheticSource { width, height }),
        (None, Some(root)) => Box::new(DirectorySource { root }),
        (None, None) => {
            return Err("no image source: pass --images, --synthetic or set image_dir".into())
        }
    };
    let backend: Box<dyn EditBackend> = match a.backend {
        BackendKind::Mock => {
            let mut mock = MockBackend::new(cfg.mock.clone())
                .with_delay(Duration::from_millis(a.mock_delay_ms));
            if let Some(p) = &a.call_log {
                mock = mock
                    .with_call_log(p)
                    .map_err(|e| format!("{}: {e}", p.display()))?;
            }
            Box::new(mock)
        }
        BackendKind::Remote => {
            Box::new(RemoteBackend::new(cfg.remote.clone()).map_err(|e| e.to_string())?)
        }
    };

    let summary = orchestrator::run_pipeline(
        &bases,
        source.as_ref(),
        backend.as_ref(),
        &pipeline,
        &a.manifest,
    )
    .map_err(|e| e.to_string())?;
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    if let Some(p) = &a.summary {
        write(p, json.as_bytes())?;
    }
    println!("{json}");
    Ok(())
}

fn report_cmd(a: ReportArgs) -> Result<(), String> {
    let mut entries = orchestrator::read_manifest(&a.manifest).map_err(|e| e.to_string())?;
    if let Some(run) = &a.run_id {
        entries.retain(|e| &e.run_id == run);
    }
    let json = a.format == Format::Json;
    let out = match a.by {
        Some(GroupBy::Variant) => {
            let rows = report::variant_breakdown(&entries, a.day_only);
            if json {
                serde_json::to_string_pretty(&rows).unwrap()
            } else {
                report::render_variants(&rows)
            }
        }
        Some(GroupBy::Species) => {
            if a.day_only {
                entries.retain(|e| e.day_night == DayNight::Day);
            }
            let rows = report::species_breakdown(&entries);
            if json {
                serde_json::to_string_pretty(&rows).unwrap()
            } else {
                report::render_species(&rows)
            }
        }
        None => {
            if a.day_only {
                entries.retain(|e| e.day_night == DayNight::Day);
            }
            let table = report::summarize(&entries);
            if json {
                serde_json::to_string_pretty(&table).unwrap()
            } else {
                table.render()
            }
        }
    };
    println!("{out}");
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<(), String> {
    let records = eval::load_features(&a.features).map_err(|e| e.to_string())?;
    let mut cfg = match a.head {
        HeadArg::Linear => HeadConfig::linear(),
        HeadArg::Mlp => HeadConfig::mlp(),
    };
    cfg.seed = a.seed;
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(l2) = a.l2 {
        cfg.l2 = l2;
    }
    let cv = (a.cv > 0).then_some(a.cv);
    let mut rep = eval::evaluate(&records, &cfg, cv).map_err(|e| e.to_string())?;
    rep.features_sha256 = Some(eval::file_sha256(&a.features).map_err(|e| e.to_string())?);
    let json = serde_json::to_string_pretty(&rep).expect("report serializes");
    match &a.out {
        Some(p) => write(p, json.as_bytes())?,
        None => println!("{json}"),
    }
    Ok(())
}
