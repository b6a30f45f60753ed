use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sesdf::config::{config_args, read_config};
use sesdf::experiment::{self, default_body_model, fusion_csv, ExperimentConfig, TestScene};
use sesdf::formats::{loss_csv, metrics_csv, read_checkpoint, read_obj, read_samples, write_checkpoint, write_obj, write_samples};
use sesdf::json::{write_json, FitReportJson, ReconReport};
use sesdf::oracle::gradcheck_suite;
use sesdf::scene::{export_scene, load_scene};
use sesdf_core::calib::{init_shared_model, init_view_from_observation, refine_joint, FitConfig, ViewRig};
use sesdf_core::fusion::Fusion;
use sesdf_core::math::{rotation_angle_between, rotation_from_axis_angle, yaw};
use sesdf_core::metrics::eval_protocol;
use sesdf_core::nn::{ModelConfig, TrainConfig, Variant};
use sesdf_core::pipeline::{reconstruct, ExtractFrom, ReconConfig};
use sesdf_core::synth::SynthConfig;
use sesdf_core::Vec3;

#[derive(Parser, Debug)]
#[command(name = "sesdf", version, about = "Clothed-surface reconstruction from body-model priors", args_override_self = true)]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (1 guarantees bit-reproducible runs).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset of scene directories.
    SynthGen(SynthGen),
    /// Self-calibrate the views of a scene and print the fit report.
    FitViews(FitViews),
    /// Train the networks on a dataset directory.
    Train(Train),
    /// Reconstruct a clothed surface from a scene.
    Reconstruct(Reconstruct),
    /// Chamfer and point-to-surface distances between two meshes.
    Evaluate(Evaluate),
    /// Compare fusion strategies on a scene with one view half occluded.
    AblateFusion(AblateFusion),
    /// Check analytic gradients against finite differences.
    Gradcheck(Gradcheck),
}

#[derive(Args, Debug)]
struct SynthGen {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 24)]
    scenes: usize,
    #[arg(long, default_value_t = 3)]
    views: usize,
    /// Cloth displacement amplitude (fraction of the body diagonal).
    #[arg(long, default_value_t = 0.03)]
    cloth_amp: f64,
    #[arg(long, default_value_t = 512)]
    image_size: usize,
    /// Pixels per scene unit.
    #[arg(long, default_value_t = 220.0)]
    ortho_scale: f64,
    /// Per-view rig rotation jitter (degrees, standard deviation).
    #[arg(long, default_value_t = 0.0)]
    rotation_jitter: f64,
    /// Per-view rig translation jitter (fraction of the body diagonal).
    #[arg(long, default_value_t = 0.0)]
    translation_jitter: f64,
    /// Also write `samples.sesb` training points into every scene.
    #[arg(long)]
    samples: bool,
}

#[derive(Args, Debug)]
struct FitViews {
    #[arg(long)]
    scene: PathBuf,
    /// Start from the stored body and rigs with 5 degree / 5% jitter instead
    /// of the per-view yaw search.
    #[arg(long)]
    jitter_init: bool,
    /// Report path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Train {
    /// Directory of scene directories with `samples.sesb`.
    #[arg(long)]
    data: PathBuf,
    /// Flat key = value file; keys are this command's flag names.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Loss curve CSV (defaults to the checkpoint path with `.csv`).
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    #[arg(long, default_value = "full")]
    variant: String,
    #[arg(long, default_value_t = 12)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 0.1)]
    decay_factor: f64,
    #[arg(long, default_value_t = 4)]
    decay_every: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda_s: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_o: f64,
    #[arg(long, default_value_t = 0.1)]
    lambda_r: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_d: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_n: f64,
    /// Comma-separated hidden widths of the signed-distance network.
    #[arg(long, default_value = "512,256,128")]
    sd_hidden: String,
    /// Comma-separated hidden widths of the occupancy network.
    #[arg(long, default_value = "512,256,128")]
    o_hidden: String,
    #[arg(long, default_value_t = 5)]
    octaves: usize,
    /// Disable the raw-input skip connection.
    #[arg(long)]
    no_skip: bool,
    /// Train each step on a random subset of the views.
    #[arg(long)]
    view_subsets: bool,
}

#[derive(Args, Debug)]
struct Reconstruct {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    /// Use the first K views.
    #[arg(long)]
    views: Option<usize>,
    #[arg(long, default_value = "occlusion")]
    fusion: String,
    #[arg(long, default_value_t = 128)]
    res: usize,
    #[arg(long, default_value = "occupancy")]
    extract_from: String,
    #[arg(long)]
    out: PathBuf,
    /// Report JSON (defaults to the mesh path with `.json`).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Evaluate {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Comma-separated yaw angles in degrees; both meshes are rotated by each.
    #[arg(long, default_value = "0")]
    angles: String,
    #[arg(long, default_value_t = sesdf_core::metrics::DEFAULT_METRIC_SAMPLES)]
    samples: usize,
    /// CSV path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AblateFusion {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    /// View hidden behind the blocker.
    #[arg(long, default_value_t = 1)]
    occluded_view: usize,
    #[arg(long, default_value_t = 128)]
    res: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Gradcheck {
    /// Check every N-th parameter.
    #[arg(long, default_value_t = 7)]
    stride: usize,
}

fn widths(s: &str) -> Result<Vec<usize>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|x| x.trim().parse::<usize>().with_context(|| format!("bad width {x:?}"))).collect()
}

fn fusion(s: &str) -> Result<Fusion> {
    Fusion::parse(s).with_context(|| format!("unknown fusion {s:?} (occlusion|average|normal|visibility)"))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn synth_gen(a: &SynthGen, seed: u64) -> Result<()> {
    let model = default_body_model();
    let synth = SynthConfig {
        views: a.views,
        image_size: a.image_size,
        ortho_scale: a.ortho_scale,
        cloth_amp: a.cloth_amp,
        rotation_jitter_deg: a.rotation_jitter,
        translation_jitter: a.translation_jitter,
        ..Default::default()
    };
    let scenes = experiment::generate_scenes(&model, &synth, seed..seed + a.scenes as u64)?;
    let cfg = ExperimentConfig { seed, ..Default::default() };
    let samples = if a.samples { Some(experiment::prepare_samples(&model, &scenes, &cfg)?) } else { None };
    for (i, scene) in scenes.iter().enumerate() {
        let dir = a.out.join(format!("scene_{:04}", scene.seed));
        export_scene(&model, scene, &dir)?;
        if let Some(s) = &samples {
            write_samples(&dir.join("samples.sesb"), &s[i])?;
        }
    }
    log::info!("wrote {} scenes to {}", scenes.len(), a.out.display());
    Ok(())
}

fn fit_views(a: &FitViews, seed: u64) -> Result<()> {
    let loaded = load_scene(&a.scene)?;
    let (model, scene) = (&loaded.model, &loaded.scene);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (shared, rigs) = if a.jitter_init {
        let diag = scene.gt.bounds().diagonal();
        let rigs: Vec<ViewRig> = scene
            .rigs
            .iter()
            .map(|r| {
                let axis = Vec3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal)).normalize();
                let t = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), 0.0).normalize() * 0.05 * diag;
                ViewRig { rotation: rotation_from_axis_angle(&(axis * 5f64.to_radians())) * r.rotation, translation: r.translation + t, ..*r }
            })
            .collect();
        let mut p = scene.params.clone();
        p.theta.iter_mut().skip(1).for_each(|t| *t += Vec3::from_fn(|_, _| 0.02 * rng.sample::<f64, _>(StandardNormal)));
        (p, rigs)
    } else {
        let fits = scene
            .observations
            .iter()
            .zip(&scene.rigs)
            .map(|(o, r)| init_view_from_observation(model, o, r.width, r.height))
            .collect::<Result<Vec<_>, _>>()?;
        init_shared_model(model, &fits)?
    };
    let (_, fitted, report) = refine_joint(model, &shared, &rigs, &scene.observations, &FitConfig::default())?;
    let mut json = FitReportJson::new(&report);
    let rel = |rs: &[ViewRig], i: usize| rs[i].rotation * rs[0].rotation.transpose();
    json.rotation_error_deg = Some((0..fitted.len()).map(|i| rotation_angle_between(&rel(&fitted, i), &rel(&scene.rigs, i)).to_degrees()).collect());
    json.translation_error = Some(
        fitted
            .iter()
            .zip(&scene.rigs)
            .map(|(f, r)| (f.translation - r.translation).xy().norm() / scene.gt.bounds().diagonal())
            .collect(),
    );
    let text = serde_json::to_string_pretty(&json)? + "\n";
    emit(a.out.as_deref(), &text)
}

fn scene_dirs(data: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(data)
        .with_context(|| format!("reading {}", data.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("samples.sesb").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        bail!("{} holds no scene directories with samples.sesb (run synth-gen --samples)", data.display());
    }
    Ok(dirs)
}

fn train_cmd(a: &Train, seed: u64) -> Result<()> {
    let variant = Variant::parse(&a.variant).with_context(|| format!("unknown variant {:?} (full|bypass|raw-distance)", a.variant))?;
    let mc = ModelConfig { variant, encoding_octaves: a.octaves, sd_hidden: widths(&a.sd_hidden)?, o_hidden: widths(&a.o_hidden)?, skip: !a.no_skip };
    let tc = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        decay_factor: a.decay_factor,
        decay_every: a.decay_every,
        weights: sesdf_core::nn::LossWeights { surface: a.lambda_s, occupancy: a.lambda_o, eikonal: a.lambda_r, distance: a.lambda_d, normal: a.lambda_n },
        batch_size: a.batch_size,
        seed,
        view_subsets: a.view_subsets,
    };
    let samples = scene_dirs(&a.data)?.iter().map(|d| read_samples(&d.join("samples.sesb"))).collect::<Result<Vec<_>, _>>()?;
    let mut net = sesdf_core::nn::SesdfModel::new(mc, seed)?;
    let curve = sesdf_core::nn::train(&mut net, &samples, &tc, |e| log::info!("epoch {} total {:.6}", e.epoch, e.losses.total))?;
    write_checkpoint(&a.out, &net)?;
    let csv = a.loss_csv.clone().unwrap_or_else(|| a.out.with_extension("csv"));
    std::fs::write(&csv, loss_csv(&curve)).with_context(|| format!("writing {}", csv.display()))?;
    Ok(())
}

fn histogram(values: &[f64], lo: f64, hi: f64) -> Vec<usize> {
    let mut h = vec![0; 10];
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    for v in values {
        h[(((v - lo) / span * 10.0) as usize).min(9)] += 1;
    }
    h
}

fn reconstruct_cmd(a: &Reconstruct) -> Result<()> {
    let loaded = load_scene(&a.scene)?;
    let net = read_checkpoint(&a.ckpt)?;
    let nv = loaded.scene.rigs.len();
    let k = a.views.unwrap_or(nv);
    if k == 0 || k > nv {
        bail!("--views must be in 1..={nv}");
    }
    let extract_from = match a.extract_from.as_str() {
        "occupancy" => ExtractFrom::Occupancy,
        "sdf" => ExtractFrom::Sdf,
        s => bail!("unknown --extract-from {s:?} (occupancy|sdf)"),
    };
    let cfg = ReconConfig { resolution: a.res, fusion: fusion(&a.fusion)?, extract_from };
    let ctx = experiment::context(&loaded.model, &loaded.scene, &loaded.features, sesdf_core::features::DEFAULT_VOLUME_RESOLUTION)?;
    let ctx = experiment::select_views(&ctx, &(0..k).collect::<Vec<_>>());
    let t = Instant::now();
    let rec = reconstruct(&net, &ctx, &cfg)?;
    let (lo, hi) = match extract_from {
        ExtractFrom::Occupancy => (0.0, 1.0),
        ExtractFrom::Sdf => rec.grid.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v))),
    };
    let report = ReconReport {
        grid_res: a.res,
        eval_seconds: t.elapsed().as_secs_f64(),
        triangles: rec.mesh.faces().len(),
        views: k,
        fusion: cfg.fusion.name().to_string(),
        extract_from: a.extract_from.clone(),
        histogram: histogram(&rec.grid.values, lo, hi),
    };
    write_obj(&a.out, &rec.mesh)?;
    write_json(&a.report.clone().unwrap_or_else(|| a.out.with_extension("json")), &report)?;
    Ok(())
}

fn evaluate_cmd(a: &Evaluate, seed: u64) -> Result<()> {
    let pred = read_obj(&a.pred)?;
    let gt = read_obj(&a.gt)?;
    let angles: Vec<f64> = a.angles.split(',').map(|s| s.trim().parse::<f64>().with_context(|| format!("bad angle {s:?}"))).collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = eval_protocol(&angles, a.samples, &mut rng, |deg| {
        let r = yaw(deg.to_radians());
        Ok((pred.map_vertices(|x| r * x)?, gt.map_vertices(|x| r * x)?))
    })?;
    emit(a.out.as_deref(), &metrics_csv(&rows))
}

fn ablate_fusion(a: &AblateFusion) -> Result<()> {
    let loaded = load_scene(&a.scene)?;
    let net = read_checkpoint(&a.ckpt)?;
    if a.occluded_view >= loaded.scene.rigs.len() {
        bail!("--occluded-view out of range");
    }
    let cfg = ExperimentConfig {
        synth: SynthConfig { views: loaded.scene.rigs.len(), ..Default::default() },
        recon_resolution: a.res,
        ..Default::default()
    };
    let test = TestScene::with_observed(loaded.scene, loaded.features)?;
    let rows = experiment::fusion_ablation(&net, &loaded.model, std::slice::from_ref(&test), a.occluded_view, &cfg)?;
    emit(a.out.as_deref(), &fusion_csv(&rows))
}

fn gradcheck(a: &Gradcheck, seed: u64) -> Result<bool> {
    let mut ok = true;
    for r in gradcheck_suite(seed, a.stride)? {
        let rep = &r.report;
        println!(
            "{} ({:?}): max relative error {:.3e} over {} parameters ({} straddling a kink) {}",
            r.name,
            r.stencil,
            rep.max_relative_error,
            rep.checked,
            rep.straddled,
            if r.passed() { "ok" } else { "FAILED" }
        );
        ok &= r.passed();
    }
    Ok(ok)
}

/// Splices `--config FILE` entries in front of the subcommand's own flags.
fn expand_config(args: Vec<String>) -> Result<Vec<String>> {
    let Some(pos) = args.iter().position(|a| a == "--config") else {
        return Ok(args);
    };
    let path = args.get(pos + 1).context("--config needs a file")?;
    let entries = read_config(Path::new(path))?;
    let sub = args.iter().position(|a| a == "train").unwrap_or(pos);
    let mut out = args[..=sub].to_vec();
    out.extend(config_args(&entries));
    out.extend_from_slice(&args[sub + 1..]);
    Ok(out)
}

fn run() -> Result<bool> {
    let cli = Cli::parse_from(expand_config(std::env::args().collect())?);
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::SynthGen(a) => synth_gen(a, cli.seed)?,
        Command::FitViews(a) => fit_views(a, cli.seed)?,
        Command::Train(a) => train_cmd(a, cli.seed)?,
        Command::Reconstruct(a) => reconstruct_cmd(a)?,
        Command::Evaluate(a) => evaluate_cmd(a, cli.seed)?,
        Command::AblateFusion(a) => ablate_fusion(a)?,
        Command::Gradcheck(a) => return gradcheck(a, cli.seed),
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
