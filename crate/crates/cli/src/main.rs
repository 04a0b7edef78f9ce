use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use noisyseg::data::{
    build_splits, gleason_candidates, io, remap_gleason, write_synthetic, AnnotatorProfile, Split,
    SplitPolicy, SynthDatasetConfig, SyntheticSceneConfig,
};
use noisyseg::harness::{self, plot, RunConfig};
use noisyseg::{major_vote_maps, roughness_heatmap, Error, GaflConfig, LabelMap, TieRule};

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(
    name = "noisyseg",
    version,
    about = "Segmentation from multiple noisy annotators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with simulated annotators.
    GenSynth(GenSynthArgs),
    /// Write a manifest for a Gleason-style directory of images and annotator maps.
    GleasonManifest(GleasonArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Fuse label maps by per-pixel majority vote.
    Vote(VoteArgs),
    /// Compute the roughness attention map of an image.
    Heatmap(HeatmapArgs),
    /// Draw loss, schedule, Dice and overlay figures for finished runs.
    Plot(PlotArgs),
}

#[derive(Args)]
struct GenSynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 40)]
    scenes: usize,
    /// Image size as HEIGHTxWIDTH.
    #[arg(long, default_value = "64x64", value_parser = parse_size)]
    size: (usize, usize),
    #[arg(long, default_value_t = 3)]
    experts: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON list of annotator profiles, one per expert.
    #[arg(long)]
    profiles: Option<PathBuf>,
}

#[derive(Args)]
struct GleasonArgs {
    /// Directory holding the images and the `Maps<k>_T` folders.
    #[arg(long)]
    root: PathBuf,
    /// Image folder, relative to the root.
    #[arg(long, default_value = "images")]
    images_dir: String,
    /// Share of the partially annotated images used for validation.
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Continue from a checkpoint; its stored configuration is used.
    #[arg(long, conflicts_with = "config")]
    resume: Option<PathBuf>,
    /// Dataset directory, overriding the configured one.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    /// Write the Dice report here as JSON; printed to stdout otherwise.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Dataset directory, overriding the one recorded in the checkpoint.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Refuse to evaluate unless the checkpoint matches this configuration.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct VoteArgs {
    #[arg(long, num_args = 1.., required = true)]
    labels: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    num_classes: usize,
    #[arg(long, default_value = "lowest_class")]
    tie: TieRule,
    /// Inputs hold raw Gleason codes; remap before voting.
    #[arg(long)]
    gleason: bool,
}

#[derive(Args)]
struct HeatmapArgs {
    #[arg(long)]
    image: PathBuf,
    /// 16-bit PNG scaled linearly from the map's minimum to its maximum; a
    /// JSON sidecar with the same stem records the range.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    radius: usize,
    #[arg(long, default_value_t = 3.0)]
    sigma: f64,
    #[arg(long, default_value_t = 50.0)]
    lambda_a: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_b: f64,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HEIGHTxWIDTH, got `{s}`"))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|e| format!("bad size `{s}`: {e}"))
    };
    Ok((parse(h)?, parse(w)?))
}

fn gen_synth(a: GenSynthArgs) -> noisyseg::Result<()> {
    let profiles = match &a.profiles {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            let p: Vec<AnnotatorProfile> = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            Some(p)
        }
        None => None,
    };
    let cfg = SynthDatasetConfig {
        scenes: a.scenes,
        scene: SyntheticSceneConfig {
            height: a.size.0,
            width: a.size.1,
            ..SyntheticSceneConfig::with_classes(a.classes)
        },
        num_experts: a.experts,
        profiles,
        seed: a.seed,
    };
    let manifest = write_synthetic(&cfg, &a.out)?;
    let count = |s| manifest.split(s).count();
    println!(
        "wrote {} scenes to {} (train {}, val {}, test {})",
        manifest.entries.len(),
        a.out.display(),
        count(Split::Train),
        count(Split::Val),
        count(Split::Test)
    );
    Ok(())
}

fn gleason_manifest(a: GleasonArgs) -> noisyseg::Result<()> {
    if !(0.0..1.0).contains(&a.val_fraction) {
        return Err(Error::Config("--val-fraction must be in [0, 1)".into()));
    }
    let candidates = gleason_candidates(&a.root, &a.images_dir)?;
    let manifest = build_splits(
        candidates,
        SplitPolicy::Gleason {
            val_fraction: a.val_fraction,
        },
        &a.root,
    )?;
    manifest.save(&a.root)?;
    let count = |s| manifest.split(s).count();
    println!(
        "train {}, val {}, test {}",
        count(Split::Train),
        count(Split::Val),
        count(Split::Test)
    );
    Ok(())
}

fn train(a: TrainArgs) -> noisyseg::Result<()> {
    let record = if let Some(ckpt) = &a.resume {
        harness::resume(ckpt, &a.out, a.dataset.as_deref())?
    } else {
        let mut cfg = match &a.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(d) = a.dataset {
            cfg.dataset_dir = d;
        }
        harness::train(&cfg, &a.out)?
    };
    println!(
        "best checkpoint at iteration {} (val mean dice {:.4}); test mean dice {:.4}",
        record.best.iter, record.best.mean_dice, record.final_test.mean
    );
    Ok(())
}

fn eval(a: EvalArgs) -> noisyseg::Result<()> {
    let expected = a.config.as_deref().map(RunConfig::load).transpose()?;
    let report = harness::evaluate_file(
        &a.checkpoint,
        a.split,
        a.dataset.as_deref(),
        expected.as_ref(),
    )?;
    let text = serde_json::to_string_pretty(&report.to_json())? + "\n";
    match &a.report {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?,
        None => print!("{text}"),
    }
    Ok(())
}

fn vote(a: VoteArgs) -> noisyseg::Result<()> {
    let maps = a
        .labels
        .iter()
        .map(|p| -> noisyseg::Result<LabelMap> {
            if a.gleason {
                remap_gleason(io::read_raw_labels(p)?.view())
            } else {
                io::read_labels(p, a.num_classes)
            }
        })
        .collect::<noisyseg::Result<Vec<_>>>()?;
    let fused = major_vote_maps(&maps, a.tie)?;
    io::write_labels(&fused, &a.out)
}

fn heatmap(a: HeatmapArgs) -> noisyseg::Result<()> {
    let cfg = GaflConfig {
        radius: a.radius,
        sigma: a.sigma,
        lambda_a: a.lambda_a,
        lambda_b: a.lambda_b,
        ..GaflConfig::default()
    };
    cfg.validate()?;
    let img = io::read_image(&a.image)?;
    let heat = roughness_heatmap(&img, &cfg)?;
    let data = heat.data();
    let min = data.iter().copied().fold(f64::INFINITY, f64::min);
    let max = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let scaled = data.mapv(|v| {
        if span > 0.0 {
            ((v - min) / span * 65535.0).round() as u16
        } else {
            0
        }
    });
    io::write_gray16(&scaled, &a.out)?;
    let sidecar = a.out.with_extension("json");
    let meta = serde_json::json!({
        "min": min,
        "max": max,
        "mean": data.mean().unwrap_or(0.0),
        "height": data.nrows(),
        "width": data.ncols(),
        "radius": cfg.radius,
        "sigma": cfg.sigma,
        "lambda_a": cfg.lambda_a,
        "lambda_b": cfg.lambda_b,
    });
    std::fs::write(&sidecar, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| Error::Io {
        path: sidecar.clone(),
        source: e,
    })
}

fn plot(a: PlotArgs) -> noisyseg::Result<()> {
    for path in plot::plot_run_dirs(&a.runs, &a.out)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn run(cmd: Command) -> noisyseg::Result<()> {
    match cmd {
        Command::GenSynth(a) => gen_synth(a),
        Command::GleasonManifest(a) => gleason_manifest(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Vote(a) => vote(a),
        Command::Heatmap(a) => heatmap(a),
        Command::Plot(a) => plot(a),
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_RUNTIME
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
