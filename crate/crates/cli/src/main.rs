use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ppf_cli::commands::{self, SynthParams};
use ppf_cli::{build_models, run_detect, PipelineConfig, Result};
use ppf_core::geom::CameraIntrinsics;
use ppf_synth::{ComposeParams, TrainSetParams};

#[derive(Parser)]
#[command(name = "ppfpose", version, about = "Mask-restricted point-pair-feature pose estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate poses for every detection and write a BOP results CSV.
    Detect(DetectArgs),
    /// Build PPF model files next to the object PLYs.
    BuildModel(BuildArgs),
    /// Score a results CSV against scene ground truth.
    EvalPose(EvalPoseArgs),
    /// Mean average precision of detections.
    EvalMap(EvalMapArgs),
    /// Pick the candidate detector with the highest mAP.
    SelectDetector(SelectArgs),
    /// Generate synthetic RGB-D scenes in the BOP layout.
    SynthScenes(SynthArgs),
    /// Build a cut-and-paste training set.
    ComposeTrain(ComposeArgs),
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    detections: PathBuf,
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
    #[arg(long)]
    tau_d: Option<f64>,
    #[arg(long)]
    n_angle: Option<u32>,
    #[arg(long)]
    no_refine: bool,
    #[arg(long)]
    no_sym: bool,
    /// 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Write -1 in the time column.
    #[arg(long)]
    fixed_time: bool,
    #[arg(long)]
    mask_dilation: Option<f64>,
    #[arg(long)]
    ref_stride: Option<usize>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    icp_iters: Option<usize>,
    /// Print the effective configuration as JSON and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    models: PathBuf,
    /// Object ids; all models in the directory when omitted.
    #[arg(long = "obj-id")]
    obj_ids: Vec<u32>,
    #[arg(long)]
    tau_d: Option<f64>,
    #[arg(long)]
    n_angle: Option<u32>,
}

#[derive(Args)]
struct EvalPoseArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value_t = 1)]
    scene_id: u32,
    #[arg(long)]
    models: PathBuf,
    /// Also write the full report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EvalMapArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    #[arg(long)]
    class_agnostic: bool,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    gt: PathBuf,
    /// NAME=PATH, repeated.
    #[arg(long = "candidate", value_parser = commands::parse_candidate, required = true)]
    candidates: Vec<(String, PathBuf)>,
    #[arg(long)]
    class_agnostic: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    n_images: usize,
    #[arg(long, default_value_t = 1)]
    min_objects: usize,
    #[arg(long, default_value_t = 3)]
    max_objects: usize,
    /// Depth noise sigma, meters.
    #[arg(long, default_value_t = 0.002)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Background plane depth, meters.
    #[arg(long)]
    plane: Option<f64>,
    #[arg(long, default_value_t = 640)]
    width: u32,
    #[arg(long, default_value_t = 480)]
    height: u32,
    #[arg(long, default_value_t = 572.0)]
    focal: f64,
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct ComposeArgs {
    /// Directory of `<class_id>/*.png` RGBA crops.
    #[arg(long)]
    crops: PathBuf,
    #[arg(long)]
    backgrounds: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    n_images: usize,
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
    #[arg(long, default_value_t = 0.7)]
    augment_fraction: f64,
    #[arg(long, default_value_t = 20)]
    max_objects: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| ppf_cli::CliError::InvalidArgument(format!("thread pool: {e}")))
}

fn detect(a: DetectArgs) -> Result<()> {
    let mut cfg = PipelineConfig {
        models_dir: a.models,
        tau_d: a.tau_d,
        n_angle: a.n_angle,
        refine: !a.no_refine,
        symmetry: !a.no_sym,
        threads: a.threads,
        fixed_time: a.fixed_time,
        out: a.out,
        ..Default::default()
    };
    if let Some(d) = a.mask_dilation {
        cfg.match_params.mask_dilation = d;
    }
    if let Some(s) = a.ref_stride {
        cfg.match_params.ref_sampling_stride = s;
    }
    if let Some(k) = a.top_k {
        cfg.match_params.top_k_clusters = k;
    }
    if let Some(n) = a.icp_iters {
        cfg.icp.max_iters = n;
    }
    if a.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg.to_json()).expect("json"));
        return Ok(());
    }
    let rows = run_detect(&a.scene, &a.detections, &cfg)?;
    ppf_eval::write_bop_csv(&cfg.out, &rows)?;
    log::info!("wrote {} rows to {}", rows.len(), cfg.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Detect(a) => detect(a),
        Command::BuildModel(a) => {
            for p in build_models(&a.models, &a.obj_ids, a.tau_d, a.n_angle)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::EvalPose(a) => {
            let r = commands::eval_pose(&a.results, &a.scene, a.scene_id, &a.models)?;
            if let Some(p) = &a.report {
                ppf_core::bop::write_json(p, &r)?;
            }
            println!("AR {}", r.ar());
            Ok(())
        }
        Command::EvalMap(a) => {
            let r = commands::eval_map(&a.pred, &a.gt, a.iou, a.class_agnostic)?;
            println!("mAP {}", r.map);
            for (c, ap) in &r.per_class {
                println!("AP {c} {ap}");
            }
            Ok(())
        }
        Command::SelectDetector(a) => {
            let (best, maps) = commands::select_detector(&a.gt, &a.candidates, a.class_agnostic)?;
            for ((n, _), m) in a.candidates.iter().zip(&maps) {
                log::info!("{n}: mAP {m}");
            }
            println!("{best}");
            Ok(())
        }
        Command::SynthScenes(a) => {
            let camera = CameraIntrinsics::new(
                a.focal,
                a.focal,
                a.width as f64 / 2.0,
                a.height as f64 / 2.0,
                a.width,
                a.height,
            )?;
            let p = SynthParams {
                n_images: a.n_images,
                min_objects: a.min_objects,
                max_objects: a.max_objects,
                noise_sigma: a.noise,
                seed: a.seed,
                camera,
                plane_depth: a.plane,
                ..Default::default()
            };
            let dir = pool(a.threads)?.install(|| commands::synth_scenes(&a.out, &p))?;
            println!("{}", dir.display());
            Ok(())
        }
        Command::ComposeTrain(a) => {
            let params = TrainSetParams {
                n_images: a.n_images,
                val_fraction: a.val_fraction,
                augment_fraction: a.augment_fraction,
                compose: ComposeParams {
                    max_objects: a.max_objects,
                    ..Default::default()
                },
                seed: a.seed,
            };
            let s = pool(a.threads)?.install(|| commands::compose_train(&a.crops, &a.backgrounds, &a.out, &params))?;
            println!("train {} val {} annotations {}", s.n_train, s.n_val, s.n_annotations);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PPF_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                let t = s.to_string();
                if !msg.contains(&t) {
                    msg.push_str(": ");
                    msg.push_str(&t);
                }
                src = s.source();
            }
            eprintln!("error: {}", msg.replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
