use clap::{Args, Parser, Subcommand};
use ecoscope::pipeline::{
    emit_report, run_pipeline_until, InputPaths, PipelineConfig, PipelineError, ReportBundle, Stage, StageStatus,
    SynthSpec, WindowConfig,
};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_INPUT: u8 = 3;
const EXIT_STAGE: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "ecoscope", version, about = "Contributor-repository ecosystem measurement pipeline")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Pipeline configuration (TOML); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every stochastic step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Observation window as `YYYY-MM-DD..YYYY-MM-DD`.
    #[arg(long, global = true, value_parser = parse_window)]
    window: Option<WindowConfig>,
    /// Residual fractions; the first is primary.
    #[arg(long, global = true, value_delimiter = ',')]
    residual_fraction: Vec<f64>,
    /// Commits per year for a community to count as active.
    #[arg(long, global = true)]
    activity_threshold: Option<u64>,
    /// Louvain resolution.
    #[arg(long, global = true)]
    resolution: Option<f64>,
}

#[derive(Debug, Args)]
struct InputArgs {
    #[arg(long)]
    commits: Option<PathBuf>,
    #[arg(long)]
    pull_requests: Option<PathBuf>,
    #[arg(long)]
    reviews: Option<PathBuf>,
    #[arg(long)]
    issues: Option<PathBuf>,
    /// Event archive file(s) mapping numeric actor ids to logins.
    #[arg(long)]
    archive: Vec<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse, window and canonicalise the input streams.
    Ingest(InputArgs),
    /// Build the bipartite graph and detect communities.
    Communities(InputArgs),
    /// Contributor breadth regimes and the carrier layer.
    Breadth(InputArgs),
    /// Annual activity matrix, growth fit and decomposition.
    Temporal(InputArgs),
    /// Community residualisation and survival models.
    Survival(InputArgs),
    /// Boundary friction indicators.
    Friction(InputArgs),
    /// Full pipeline.
    Run(InputArgs),
    /// Generate a synthetic ecosystem with its ground truth.
    Synth {
        /// Synthetic ecosystem specification (TOML); defaults apply otherwise.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
}

fn parse_window(s: &str) -> Result<WindowConfig, String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected START..END, got {s:?}"))?;
    let date = |t: &str| t.trim().parse().map_err(|e| format!("{t:?}: {e}"));
    Ok(WindowConfig { start: date(a)?, end: date(b)? })
}

fn config_from(global: &GlobalArgs, inputs: &InputArgs) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &global.config {
        Some(p) => PipelineConfig::from_toml_file(p)?,
        None => PipelineConfig::default(),
    };
    let i = &mut cfg.inputs;
    for (slot, flag) in [
        (&mut i.commits, &inputs.commits),
        (&mut i.pull_requests, &inputs.pull_requests),
        (&mut i.reviews, &inputs.reviews),
        (&mut i.issues, &inputs.issues),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    if !inputs.archive.is_empty() {
        i.archive.clone_from(&inputs.archive);
    }
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    if let Some(o) = &global.out {
        cfg.out.clone_from(o);
    }
    if let Some(w) = global.window {
        cfg.window = w;
    }
    if !global.residual_fraction.is_empty() {
        cfg.residual_fractions.clone_from(&global.residual_fraction);
    }
    if let Some(t) = global.activity_threshold {
        cfg.activity_threshold = t;
    }
    if let Some(r) = global.resolution {
        cfg.resolution = r;
    }
    Ok(cfg)
}

fn summarize(bundle: &ReportBundle, out: &Path) {
    let manifest = bundle.manifest();
    println!("report: {} ({} files)", out.display(), manifest.files.len());
    for s in &manifest.stages {
        let status = match &s.status {
            StageStatus::Completed => "completed".to_string(),
            StageStatus::Skipped { reason } => format!("skipped: {reason}"),
            StageStatus::Failed { error } => format!("FAILED: {error}"),
        };
        println!("  {:<12} {status}", s.stage);
        for d in &s.diagnostics {
            println!("  {:<12}   note: {d}", "");
        }
    }
}

fn run_stage(global: &GlobalArgs, inputs: &InputArgs, last: Stage) -> Result<(), PipelineError> {
    let cfg = config_from(global, inputs)?;
    match run_pipeline_until(&cfg, last) {
        Ok((_, bundle)) => {
            emit_report(&bundle, &cfg.out)?;
            summarize(&bundle, &cfg.out);
            Ok(())
        }
        Err(PipelineError::Stage { stage, message, partial }) => {
            match emit_report(&partial, &cfg.out) {
                Ok(_) => summarize(&partial, &cfg.out),
                Err(e) => eprintln!("could not write partial report: {e}"),
            }
            Err(PipelineError::Stage { stage, message, partial })
        }
        Err(e) => Err(e),
    }
}

fn synth(global: &GlobalArgs, spec_path: Option<&Path>) -> Result<(), PipelineError> {
    let mut spec = match spec_path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| PipelineError::Config(vec![format!("cannot read {}: {e}", p.display())]))?;
            toml::from_str::<SynthSpec>(&text).map_err(|e| PipelineError::Config(vec![format!("{}: {e}", p.display())]))?
        }
        None => SynthSpec::default(),
    };
    if let Some(s) = global.seed {
        spec.seed = s;
    }
    if let Some(w) = global.window {
        spec.window_start = w.start;
        spec.window_end = w.end;
    }
    let out = global.out.clone().unwrap_or_else(|| PathBuf::from("synth"));
    if out.is_dir() && !out.join("ground_truth.json").is_file() && out.read_dir().is_ok_and(|mut d| d.next().is_some()) {
        return Err(PipelineError::Output(format!(
            "{} exists and is not a previous synthetic ecosystem; refusing to overwrite",
            out.display()
        )));
    }
    let generated = ecoscope::pipeline::synth_generate(&spec)?;
    let written = generated.write_to(&out)?;

    // A ready-to-run configuration for the generated files, with paths relative to it.
    let relative = |p: &Path| PathBuf::from(p.file_name().expect("written files have names"));
    let cfg = PipelineConfig {
        inputs: InputPaths {
            commits: written.commits.as_deref().map(relative),
            pull_requests: written.pull_requests.as_deref().map(relative),
            reviews: written.reviews.as_deref().map(relative),
            issues: written.issues.as_deref().map(relative),
            archive: written.archive.iter().map(|p| relative(p)).collect(),
        },
        window: WindowConfig { start: spec.window_start, end: spec.window_end },
        seed: global.seed.unwrap_or(PipelineConfig::default().seed),
        out: PathBuf::from("report"),
        ..PipelineConfig::default()
    };
    let text = toml::to_string(&cfg).map_err(|e| PipelineError::Output(e.to_string()))?;
    let cfg_path = out.join("pipeline.toml");
    std::fs::write(&cfg_path, text).map_err(|e| PipelineError::Output(format!("{}: {e}", cfg_path.display())))?;

    let t = &generated.truth;
    println!(
        "synthetic ecosystem: {} ({} communities, {} carriers, {} pull requests)",
        out.display(),
        t.communities.len(),
        t.carriers.len(),
        t.prs.intra_total + t.prs.inter_total
    );
    println!("run it with: ecoscope run --config {}", cfg_path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = &cli.global;
    let result = match &cli.command {
        Command::Ingest(i) => run_stage(g, i, Stage::Ingest),
        Command::Communities(i) => run_stage(g, i, Stage::Communities),
        Command::Breadth(i) => run_stage(g, i, Stage::Breadth),
        Command::Temporal(i) => run_stage(g, i, Stage::Temporal),
        Command::Survival(i) => run_stage(g, i, Stage::Survival),
        Command::Friction(i) | Command::Run(i) => run_stage(g, i, Stage::Friction),
        Command::Synth { spec } => synth(g, spec.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                PipelineError::Config(_) => EXIT_CONFIG,
                PipelineError::Input(_) => EXIT_INPUT,
                PipelineError::Stage { .. } | PipelineError::Output(_) => EXIT_STAGE,
            })
        }
    }
}
