//! Command-line entry points.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use layoutgen::config::RunConfig;
use layoutgen::dataset::{load_dataset, synth_dataset_generate, write_dataset, SynthConfig};
use layoutgen::pipeline::{evaluate_checkpoint, load_split, run_training, split_manifest, TrainOptions};
use layoutgen::renderer::RenderSpec;
use layoutgen::service::{design_candidates, encode_png, parse_text_arg, DesignService, InferenceModel, ServiceOptions};
use layoutgen::{BackgroundImage, Error, ForegroundSet, Result, Variant};
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "layoutgen", version, about = "Train, evaluate and serve banner layout generators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train from a dataset manifest, writing checkpoints and a metrics log.
    Train(TrainArgs),
    /// Evaluate a checkpoint and print the metric table.
    Eval(EvalArgs),
    /// Generate and render candidate designs for one background.
    Generate(GenerateArgs),
    /// Run the HTTP design service.
    Serve(ServeArgs),
    /// Write a synthetic banner dataset.
    SynthData(SynthArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset manifest (JSON).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "runs/latest")]
    pub out: PathBuf,
    #[arg(long)]
    pub variant: Option<String>,
    /// Disable a loss term: adversarial, giou, overlap, misalign, gen_rec, uncond_disc, layout_l2.
    #[arg(long = "toggle-off", value_name = "NAME")]
    pub toggle_off: Vec<String>,
    #[arg(long = "toggle-on", value_name = "NAME")]
    pub toggle_on: Vec<String>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long)]
    pub print_config: bool,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: Split,
    /// Emit JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub background: PathBuf,
    /// Foreground text as `class:string`; repeat for several elements.
    #[arg(long = "text", value_name = "CLASS:STRING", required = true)]
    pub texts: Vec<String>,
    #[arg(long, default_value_t = 6)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "designs")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Directory for sessions and uploaded images.
    #[arg(long, default_value = "sessions")]
    pub store: PathBuf,
    /// Pin every generation seed (deterministic mode).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 24)]
    pub ttl_hours: u64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Exit code for an error: 2 for configuration problems, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_config() {
        2
    } else {
        1
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Generate(a) => generate(a),
        Command::Serve(a) => serve(a),
        Command::SynthData(a) => synth(a),
    }
}

pub fn effective_config(a: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &a.variant {
        cfg.train.variant = v.parse::<Variant>()?;
    }
    for name in &a.toggle_off {
        cfg.train.toggles.set(name, false)?;
    }
    for name in &a.toggle_on {
        cfg.train.toggles.set(name, true)?;
    }
    if let Some(n) = a.max_steps {
        cfg.train.max_steps = n;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg = effective_config(&a)?;
    if a.print_config {
        print!("{}", cfg.to_toml_string()?);
        return Ok(());
    }
    let data = a.data.as_ref().ok_or_else(|| Error::Config("--data is required for training".into()))?;
    let (train_set, test_set) = load_split(data)?;
    let total = cfg.train.max_steps.max(1);
    let report_every = (total / 10).max(1);
    let quiet = a.quiet;
    let summary = run_training(
        &cfg,
        &train_set,
        &test_set,
        &TrainOptions {
            out_dir: a.out.clone(),
            resume: a.resume.clone(),
        },
        |l| {
            let done = l.step + 1;
            if !quiet && (done % report_every == 0 || done == total) {
                eprintln!("step {done}/{total}  generator {:.4}", l.generator.total);
            }
        },
    )?;
    println!("trained {} steps; checkpoint {}", summary.steps, summary.checkpoint.display());
    if let Some(r) = summary.report {
        println!("{r}");
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let manifest = load_dataset(&a.data)?;
    let base = a.data.parent().unwrap_or(Path::new("."));
    let samples = match a.split {
        Split::All => layoutgen::dataset::load_samples(&manifest, base)?,
        Split::Train => split_manifest(&manifest, base)?.0,
        Split::Test => split_manifest(&manifest, base)?.1,
    };
    let report = evaluate_checkpoint(&a.checkpoint, &samples)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!("{report}");
    }
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<()> {
    let model = InferenceModel::from_checkpoint(&a.checkpoint)?;
    let background = BackgroundImage::new(image_open(&a.background)?)?;
    let foreground = ForegroundSet::new(a.texts.iter().map(|t| parse_text_arg(t)).collect::<Result<Vec<_>>>()?);
    let designs = design_candidates(&model, &background, &foreground, a.count, a.seed, &RenderSpec::default())?;
    fs::create_dir_all(&a.out)?;
    for (k, d) in designs.iter().enumerate() {
        fs::write(a.out.join(format!("candidate-{k}.png")), encode_png(&d.render.image)?)?;
        let meta = json!({
            "index": k,
            "seed": d.seed,
            "boxes": d.layout.to_arrays(),
            "elements": d.render.elements,
            "warning": d.warning,
        });
        fs::write(a.out.join(format!("candidate-{k}.json")), serde_json::to_string_pretty(&meta)? + "\n")?;
        if let Some(w) = &d.warning {
            eprintln!("candidate {k}: {w}");
        }
    }
    println!("wrote {} candidates to {}", designs.len(), a.out.display());
    Ok(())
}

fn image_open(path: &Path) -> Result<image::RgbImage> {
    Ok(image::open(path)?.to_rgb8())
}

fn serve(a: ServeArgs) -> Result<()> {
    let model = Arc::new(InferenceModel::from_checkpoint(&a.checkpoint)?);
    let mut opts = ServiceOptions::new(&a.store);
    opts.fixed_seed = a.seed;
    opts.ttl = Duration::from_secs(a.ttl_hours * 3600);
    let service = Arc::new(DesignService::new(model, opts)?);
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| Error::Config(format!("bad address: {e}")))?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, crate::http::router(service)).await?;
        Ok(())
    })
}

fn synth(a: SynthArgs) -> Result<()> {
    let ds = synth_dataset_generate(a.count, a.seed, &SynthConfig::default())?;
    let path = write_dataset(&ds, &a.out)?;
    println!("wrote {} records to {}", ds.manifest.records.len(), path.display());
    Ok(())
}
