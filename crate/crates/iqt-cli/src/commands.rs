//! Implementations of the CLI subcommands.

use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;

use iqt::desk::{run_desk, DeskConfig};
use iqt::metrics::{evaluate_pair, SsimParams};
use iqt::nifti::{load_volume, save_volume};
use iqt::phantom::{make_phantom, PhantomSpec};
use iqt::resample::SliceGeometry;
use iqt::sim::{
    degrade_memberships, estimate_snr as snr_of, simulate_lf, Normalization, SimParams, SnrTarget,
};
use iqt::srnet::{
    enhance as enhance_volume, extract_patches, standardize_pair, train as train_model,
    EnhanceTiling, SrModel, SrModelConfig, Tensor5, TrainConfig,
};
use iqt::tissue::{default_brain_mask, fit_gmm, load_memberships, memberships, GmmFitOptions};
use iqt::volume::{MembershipMaps, Volume};
use iqt::{IqtError, Result};

use crate::provenance::{input_record, write_sidecar, InputRecord};

#[derive(Args)]
pub struct PhantomArgs {
    /// Cube edge length in voxels.
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Isotropic voxel size in mm.
    #[arg(long, default_value_t = 1.0)]
    spacing: f64,
    /// Hard tissue boundaries instead of 2 mm ramps.
    #[arg(long)]
    hard: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving hf.nii.gz and gm/wm/csf.nii.gz.
    #[arg(long)]
    out_dir: PathBuf,
}

pub fn phantom(args: PhantomArgs) -> Result<()> {
    let mut spec = PhantomSpec::cube(args.dim, args.spacing);
    if args.hard {
        spec = spec.with_hard_boundaries();
    }
    let (hf, maps) = make_phantom(&spec, args.seed)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let out = args.out_dir.join("hf.nii.gz");
    save_volume(&hf, &out)?;
    save_volume(&maps.gm, args.out_dir.join("gm.nii.gz"))?;
    save_volume(&maps.wm, args.out_dir.join("wm.nii.gz"))?;
    save_volume(&maps.csf, args.out_dir.join("csf.nii.gz"))?;
    write_sidecar(
        &out,
        "phantom",
        vec![],
        serde_json::json!({
            "spec": spec,
            "seed": args.seed,
        }),
    )
}

#[derive(Args)]
pub struct SegmentArgs {
    /// Input volume (NIfTI-1, .nii or .nii.gz).
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Directory receiving gm/wm/csf.nii.gz and gmm.json.
    #[arg(long)]
    out_dir: PathBuf,
}

pub fn segment(args: SegmentArgs) -> Result<()> {
    let v = load_volume(&args.input)?;
    let mask = default_brain_mask(&v);
    let opts = GmmFitOptions {
        max_iter: args.max_iter,
        tol: args.tol,
        ..GmmFitOptions::default()
    };
    let model = fit_gmm(&v, &mask, args.seed, opts)?;
    let maps = memberships(&model, &v, &mask)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let gm_out = args.out_dir.join("gm.nii.gz");
    save_volume(&maps.gm, &gm_out)?;
    save_volume(&maps.wm, args.out_dir.join("wm.nii.gz"))?;
    save_volume(&maps.csf, args.out_dir.join("csf.nii.gz"))?;
    std::fs::write(
        args.out_dir.join("gmm.json"),
        serde_json::to_string_pretty(&model)
            .map_err(|e| IqtError::Format(format!("model encode: {e}")))?,
    )?;
    write_sidecar(
        &gm_out,
        "segment",
        vec![input_record(&args.input)?],
        serde_json::json!({
            "seed": args.seed,
            "max_iter": args.max_iter,
            "tol": args.tol,
            "model": model,
        }),
    )
}

#[derive(Args)]
pub struct EstimateSnrArgs {
    /// Input volume(s); repeat the flag for a set.
    #[arg(long = "in", required = true)]
    inputs: Vec<PathBuf>,
    /// GM membership map per input, same order.
    #[arg(long, required = true)]
    gm: Vec<PathBuf>,
    /// WM membership map per input, same order.
    #[arg(long, required = true)]
    wm: Vec<PathBuf>,
    /// CSF membership map per input, same order.
    #[arg(long, required = true)]
    csf: Vec<PathBuf>,
    /// Aggregation across the set: mean or median.
    #[arg(long, default_value = "mean")]
    aggregate: String,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

pub fn estimate_snr(args: EstimateSnrArgs) -> Result<()> {
    let n = args.inputs.len();
    if args.gm.len() != n || args.wm.len() != n || args.csf.len() != n {
        return Err(IqtError::Parameter(format!(
            "need one --gm/--wm/--csf per --in: got {n} inputs, {}/{}/{} maps",
            args.gm.len(),
            args.wm.len(),
            args.csf.len()
        )));
    }
    if args.aggregate != "mean" && args.aggregate != "median" {
        return Err(IqtError::Parameter(format!(
            "unknown aggregation '{}'; use mean or median",
            args.aggregate
        )));
    }
    let mut per_image = Vec::with_capacity(n);
    for i in 0..n {
        let v = load_volume(&args.inputs[i])?;
        let maps = load_memberships(&args.gm[i], &args.wm[i], &args.csf[i], &v)?;
        let est = snr_of(&v, &maps, &maps.background_mask())?;
        per_image.push(serde_json::json!({
            "input": args.inputs[i].display().to_string(),
            "estimate": est,
        }));
    }
    let mut gms: Vec<f64> = per_image
        .iter()
        .map(|e| e["estimate"]["snr_gm"].as_f64().unwrap())
        .collect();
    let mut wms: Vec<f64> = per_image
        .iter()
        .map(|e| e["estimate"]["snr_wm"].as_f64().unwrap())
        .collect();
    let (agg_gm, agg_wm) = if args.aggregate == "mean" {
        (
            gms.iter().sum::<f64>() / n as f64,
            wms.iter().sum::<f64>() / n as f64,
        )
    } else {
        (median(&mut gms), median(&mut wms))
    };
    let report = serde_json::json!({
        "aggregate": args.aggregate,
        "snr_gm": agg_gm,
        "snr_wm": agg_wm,
        "images": per_image,
    });
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| IqtError::Format(format!("report encode: {e}")))?;
    match &args.out {
        Some(path) => std::fs::write(path, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

#[derive(Args)]
pub struct SimulateArgs {
    /// High-field input volume.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    gm: PathBuf,
    #[arg(long)]
    wm: PathBuf,
    #[arg(long)]
    csf: PathBuf,
    /// Target mean GM SNR.
    #[arg(long)]
    snr_gm: f64,
    /// Target mean WM SNR.
    #[arg(long)]
    snr_wm: f64,
    /// Slice thickness in mm.
    #[arg(long)]
    st: f64,
    /// Inter-slice gap in mm.
    #[arg(long)]
    gap: f64,
    /// Slice axis (0, 1 or 2).
    #[arg(long, default_value_t = 2)]
    axis: usize,
    /// First-sample offset in mm; defaults to half the sampling period.
    #[arg(long)]
    offset: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Multiplier anchoring: wm-anchored or mean-preserving.
    #[arg(long, default_value = "wm-anchored")]
    normalization: String,
    /// Output LF volume.
    #[arg(long)]
    out: PathBuf,
    /// Also write the blur+sampled membership maps here.
    #[arg(long)]
    out_maps_dir: Option<PathBuf>,
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let hf = load_volume(&args.input)?;
    let maps = load_memberships(&args.gm, &args.wm, &args.csf, &hf)?;
    let geometry = match args.offset {
        Some(o) => SliceGeometry::with_offset(args.st, args.gap, args.axis, o)?,
        None => SliceGeometry::centered(args.st, args.gap, args.axis)?,
    };
    let mut params = SimParams::new(SnrTarget::new(args.snr_gm, args.snr_wm)?, geometry, args.seed)?;
    params.normalization = match args.normalization.as_str() {
        "wm-anchored" => Normalization::WmAnchored,
        "mean-preserving" => Normalization::MeanPreserving,
        other => {
            return Err(IqtError::Parameter(format!(
                "unknown normalization '{other}'; use wm-anchored or mean-preserving"
            )));
        }
    };
    let (lf, provenance) = simulate_lf(&hf, &maps, &params)?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    save_volume(&lf, &args.out)?;
    if let Some(dir) = &args.out_maps_dir {
        std::fs::create_dir_all(dir)?;
        let lf_maps = degrade_memberships(&maps, &geometry)?;
        save_volume(&lf_maps.gm, dir.join("gm.nii.gz"))?;
        save_volume(&lf_maps.wm, dir.join("wm.nii.gz"))?;
        save_volume(&lf_maps.csf, dir.join("csf.nii.gz"))?;
    }
    write_sidecar(
        &args.out,
        "simulate",
        vec![
            input_record(&args.input)?,
            input_record(&args.gm)?,
            input_record(&args.wm)?,
            input_record(&args.csf)?,
        ],
        serde_json::to_value(&provenance)
            .map_err(|e| IqtError::Format(format!("provenance encode: {e}")))?,
    )
}

/// One training pair: paths to the HF target, the LF input, and the LF-grid
/// membership maps used for patch filtering.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairSpec {
    hf: PathBuf,
    lf: PathBuf,
    gm: PathBuf,
    wm: PathBuf,
    csf: PathBuf,
}

/// Schema of the `train --config` JSON file. Unknown keys are rejected.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainFileConfig {
    pairs: Vec<PairSpec>,
    val_pairs: Vec<PairSpec>,
    k: usize,
    #[serde(default = "default_levels")]
    levels: usize,
    #[serde(default = "default_base_channels")]
    base_channels: usize,
    #[serde(default = "default_epochs")]
    epochs: usize,
    #[serde(default = "default_batch")]
    batch_size: usize,
    #[serde(default = "default_lr")]
    learning_rate: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_patch_xy")]
    patch_xy: usize,
    #[serde(default = "default_patch_z")]
    patch_z: usize,
    #[serde(default = "default_stride")]
    stride: (usize, usize, usize),
    #[serde(default)]
    min_brain_fraction: f64,
    out_dir: PathBuf,
}

fn default_levels() -> usize {
    3
}
fn default_base_channels() -> usize {
    16
}
fn default_epochs() -> usize {
    16
}
fn default_batch() -> usize {
    8
}
fn default_lr() -> f64 {
    1e-3
}
fn default_patch_xy() -> usize {
    16
}
fn default_patch_z() -> usize {
    4
}
fn default_stride() -> (usize, usize, usize) {
    (16, 16, 2)
}

#[derive(Args)]
pub struct TrainArgs {
    /// JSON config file; see the README for the schema.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's epoch count.
    #[arg(long)]
    epochs: Option<usize>,
    /// Override the config's learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Override the config's batch size.
    #[arg(long)]
    batch: Option<usize>,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn load_pairs(
    specs: &[PairSpec],
    cfg: &TrainFileConfig,
) -> Result<Vec<(Tensor5, Tensor5)>> {
    let mut out = Vec::new();
    for spec in specs {
        let hf = load_volume(&spec.hf)?;
        let lf = load_volume(&spec.lf)?;
        let maps = load_memberships(&spec.gm, &spec.wm, &spec.csf, &lf)?;
        let pairs = extract_patches(
            &hf,
            &lf,
            &maps,
            cfg.k,
            cfg.patch_xy,
            cfg.patch_z,
            cfg.stride,
            cfg.min_brain_fraction,
        )?;
        out.extend(pairs.iter().map(|(l, h)| standardize_pair(l, h).1));
    }
    Ok(out)
}

pub fn train(args: TrainArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut cfg: TrainFileConfig = serde_json::from_str(&text)
        .map_err(|e| IqtError::Format(format!("train config: {e}")))?;
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = args.lr {
        cfg.learning_rate = lr;
    }
    if let Some(b) = args.batch {
        cfg.batch_size = b;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(dir) = args.out_dir {
        cfg.out_dir = dir;
    }

    let train_pairs = load_pairs(&cfg.pairs, &cfg)?;
    let val_pairs = load_pairs(&cfg.val_pairs, &cfg)?;
    let model_cfg = SrModelConfig::new(cfg.k)?
        .with_levels(cfg.levels)
        .with_base_channels(cfg.base_channels);
    let model = SrModel::init(model_cfg, cfg.seed)?;
    let train_cfg = TrainConfig::new(cfg.epochs, cfg.batch_size, cfg.learning_rate, cfg.seed)?;
    let (model, history) = train_model(&model, &train_pairs, &val_pairs, &train_cfg)?;

    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join("history.csv"), history.to_csv())?;
    let mut inputs: Vec<InputRecord> = vec![input_record(&args.config)?];
    for p in cfg.pairs.iter().chain(&cfg.val_pairs) {
        inputs.push(input_record(&p.hf)?);
        inputs.push(input_record(&p.lf)?);
    }
    model.save(
        cfg.out_dir.join("model.json"),
        serde_json::json!({
            "seed": cfg.seed,
            "epochs": cfg.epochs,
            "batch_size": cfg.batch_size,
            "learning_rate": cfg.learning_rate,
            "train_patches": train_pairs.len(),
            "val_patches": val_pairs.len(),
            "best_epoch": history.best_epoch,
        }),
    )?;
    write_sidecar(
        &cfg.out_dir.join("model.json"),
        "train",
        inputs,
        serde_json::json!({
            "k": cfg.k,
            "levels": cfg.levels,
            "base_channels": cfg.base_channels,
            "epochs": cfg.epochs,
            "batch_size": cfg.batch_size,
            "learning_rate": cfg.learning_rate,
            "seed": cfg.seed,
        }),
    )
}

#[derive(Args)]
pub struct EnhanceArgs {
    /// Model checkpoint header (model.json; the .bin sits next to it).
    #[arg(long)]
    model: PathBuf,
    /// Low-field input volume.
    #[arg(long = "in")]
    input: PathBuf,
    /// Enhanced output volume.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    patch_xy: usize,
    #[arg(long, default_value_t = 4)]
    patch_z: usize,
}

pub fn enhance(args: EnhanceArgs) -> Result<()> {
    let model = SrModel::load(&args.model)?;
    let lf = load_volume(&args.input)?;
    let out = enhance_volume(
        &model,
        &lf,
        EnhanceTiling {
            patch_xy: args.patch_xy,
            patch_z: args.patch_z,
        },
    )?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    save_volume(&out, &args.out)?;
    write_sidecar(
        &args.out,
        "enhance",
        vec![input_record(&args.model)?, input_record(&args.input)?],
        serde_json::json!({
            "k": model.config().k,
            "patch_xy": args.patch_xy,
            "patch_z": args.patch_z,
        }),
    )
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    enhanced: PathBuf,
    #[arg(long)]
    baseline: PathBuf,
    /// Reference (ground-truth) volume.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Optional mask volume; voxels > 0.5 are evaluated.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// CSV report path.
    #[arg(long)]
    out: PathBuf,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// SSIM window edge length (odd).
    #[arg(long, default_value_t = 7)]
    window: usize,
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let enhanced = load_volume(&args.enhanced)?;
    let baseline = load_volume(&args.baseline)?;
    let reference = load_volume(&args.reference)?;
    let mask = match &args.mask {
        Some(p) => {
            let m = load_volume(p)?;
            if m.dims() != reference.dims() {
                return Err(IqtError::Shape(format!(
                    "mask dims {:?} do not match reference {:?}",
                    m.dims(),
                    reference.dims()
                )));
            }
            Some(m.data().iter().map(|&v| v > 0.5).collect())
        }
        None => None,
    };
    let mut params = SsimParams::for_reference(&reference)?;
    params.window = args.window;
    let report = evaluate_pair(&enhanced, &baseline, &reference, mask, &params)?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(&args.out, report.to_csv())?;
    if let Some(json_path) = &args.json {
        std::fs::write(
            json_path,
            serde_json::to_string_pretty(&report)
                .map_err(|e| IqtError::Format(format!("report encode: {e}")))?,
        )?;
    }
    let mut inputs = vec![
        input_record(&args.enhanced)?,
        input_record(&args.baseline)?,
        input_record(&args.reference)?,
    ];
    if let Some(m) = &args.mask {
        inputs.push(input_record(m)?);
    }
    write_sidecar(
        &args.out,
        "evaluate",
        inputs,
        serde_json::json!({
            "window": args.window,
        }),
    )
}

#[derive(Args)]
pub struct ReproDeskArgs {
    /// Output directory for all pipeline artefacts.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Scale: "desk" (full acceptance recipe) or "tiny" (seconds-scale).
    #[arg(long, default_value = "desk")]
    profile: String,
    /// Override the training epoch count.
    #[arg(long)]
    epochs: Option<usize>,
}

pub fn repro_desk(args: ReproDeskArgs) -> Result<()> {
    let mut cfg = match args.profile.as_str() {
        "desk" => DeskConfig::desk(args.seed)?,
        "tiny" => DeskConfig::tiny(args.seed)?,
        other => {
            return Err(IqtError::Parameter(format!(
                "unknown profile '{other}'; use desk or tiny"
            )));
        }
    };
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    let report = run_desk(&cfg, &args.out_dir)?;
    println!(
        "mean SSIM enhanced {:.4}, baseline {:.4}, margin {:.4}",
        report.mean_ssim_enhanced, report.mean_ssim_baseline, report.ssim_margin
    );
    Ok(())
}

/// Shared by tests: make a mask volume path usable as `--mask`.
#[allow(dead_code)]
pub fn mask_from_maps(maps: &MembershipMaps) -> Result<Volume> {
    let data = (0..maps.gm.len())
        .map(|i| if maps.total(i) > 0.0 { 1.0 } else { 0.0 })
        .collect();
    maps.gm.like(data)
}
