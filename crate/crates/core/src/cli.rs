//! Command-line front end: `phantom`, `labelprep`, `train`, `predict`,
//! `evaluate`, `mipfig` and `crossval`.

use std::collections::BTreeMap;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::RunConfig;
use crate::dataset::{load_manifest, load_training_volume, save_manifest, ManifestEntry, TrainingVolume};
use crate::error::{Error, Result};
use crate::inference::{binarize, sliding_window_predict, InferenceConfig};
use crate::labelprep::{clean_labels, MorphologyParams};
use crate::losses::MipMode;
use crate::metrics::{evaluate_pair, summarize, ConfusionCounts, MetricsReport, SummaryRow};
use crate::model::UNet;
use crate::phantom::{corrupt_labels, generate_phantom, CorruptionConfig, PhantomConfig};
use crate::trainer::{kfold_split, train, Checkpoint};
use crate::volume::{
    load_mask, load_volume, mip, save_mask, save_probability, save_volume, Axis, BinaryMask, Image2, ProbabilityVolume, ScalarVolume,
};

#[derive(Debug, Parser)]
#[command(name = "spockmip", version, about = "3D vessel segmentation with MIP-guided training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic vessel phantoms with clean and corrupted labels.
    Phantom(PhantomArgs),
    /// Clean a label mask with area opening then area closing.
    Labelprep(LabelprepArgs),
    /// Train a model on the volumes listed in a manifest.
    Train(TrainArgs),
    /// Sliding-window prediction of a whole volume.
    Predict(PredictArgs),
    /// Score predicted masks against ground truth.
    Evaluate(EvaluateArgs),
    /// Colour-coded MIP overlay of a prediction against ground truth.
    Mipfig(MipfigArgs),
    /// K-fold train, predict and evaluate over a manifest.
    Crossval(CrossvalArgs),
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of phantoms; more than one writes `phantom_NNN/` subdirectories.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    #[arg(long)]
    pub drop_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct LabelprepArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub open_area: usize,
    #[arg(long, default_value_t = 2)]
    pub open_connectivity: u32,
    #[arg(long, default_value_t = 60)]
    pub close_area: usize,
    #[arg(long, default_value_t = 4)]
    pub close_connectivity: u32,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSON list of `{volume_id, image_path, label_path}`.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub val_manifest: Option<PathBuf>,
    /// Run directory; defaults to `runs/<name>`.
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    #[arg(long, default_value = "run")]
    pub name: String,
    /// none, single_mip or multi_mip.
    #[arg(long)]
    pub mode: Option<MipMode>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Only the `inference` section is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub stride: Option<Vec<usize>>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, required = true)]
    pub pred: Vec<PathBuf>,
    #[arg(long, required = true)]
    pub gt: Vec<PathBuf>,
    /// Probability maps for AUC, one per `--pred`.
    #[arg(long)]
    pub prob: Vec<PathBuf>,
    /// Report path for a single pair.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for `report_NNN.json` files and `summary.csv`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct MipfigArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value = "z")]
    pub axis: Axis,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long)]
    pub run_dir: PathBuf,
    #[arg(long)]
    pub mode: Option<MipMode>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Phantom(a) => cmd_phantom(&a),
        Command::Labelprep(a) => cmd_labelprep(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Mipfig(a) => cmd_mipfig(&a),
        Command::Crossval(a) => cmd_crossval(&a),
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.set_seed(s);
    }
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct PhantomRecord<'a> {
    phantom: &'a PhantomConfig,
    corruption: &'a CorruptionConfig,
    vessel_voxels: usize,
    dropped_voxels: usize,
}

pub fn cmd_phantom(args: &PhantomArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref(), args.seed)?;
    let mut base = cfg.phantom.clone();
    if let Some(d) = &args.dims {
        let [z, y, x] = d.as_slice() else {
            return Err(Error::Config(vec![format!("--dims: expected D,H,W, got {d:?}")]));
        };
        base.dims = [*z, *y, *x];
    }
    let mut corruption = CorruptionConfig::default();
    if let Some(f) = args.drop_fraction {
        corruption.drop_fraction = f;
    }
    let mut issues = base.validate();
    issues.extend(corruption.validate());
    if args.count == 0 {
        issues.push("--count: must be >= 1".into());
    }
    if !issues.is_empty() {
        return Err(Error::Config(issues));
    }
    create_dir(&args.out)?;
    let mut entries = Vec::new();
    for i in 0..args.count {
        let id = format!("phantom_{i:03}");
        let (dir, rel) = if args.count == 1 {
            (args.out.clone(), PathBuf::new())
        } else {
            (args.out.join(&id), PathBuf::from(&id))
        };
        create_dir(&dir)?;
        let phantom = PhantomConfig {
            seed: base.seed.wrapping_add(i as u64),
            ..base.clone()
        };
        let corruption = CorruptionConfig {
            seed: phantom.seed,
            ..corruption.clone()
        };
        let (image, clean) = generate_phantom(&phantom)?;
        let corrupt = corrupt_labels(&clean, &corruption)?;
        save_volume(&image, dir.join("image.nii.gz"))?;
        save_mask(&clean, dir.join("label_clean.nii.gz"))?;
        save_mask(&corrupt, dir.join("label_corrupt.nii.gz"))?;
        write_json(
            &PhantomRecord {
                phantom: &phantom,
                corruption: &corruption,
                vessel_voxels: clean.count(),
                dropped_voxels: clean.count() - corrupt.count(),
            },
            &dir.join("phantom.json"),
        )?;
        entries.push(ManifestEntry {
            volume_id: id,
            image_path: rel.join("image.nii.gz"),
            label_path: rel.join("label_corrupt.nii.gz"),
            gt_path: Some(rel.join("label_clean.nii.gz")),
        });
    }
    save_manifest(&entries, args.out.join("manifest.json"))?;
    println!("wrote {} phantom(s) to {}", args.count, args.out.display());
    Ok(())
}

pub fn cmd_labelprep(args: &LabelprepArgs) -> Result<()> {
    let params = MorphologyParams {
        open_area: args.open_area,
        open_connectivity: args.open_connectivity,
        close_area: args.close_area,
        close_connectivity: args.close_connectivity,
    };
    let mask = load_mask(&args.input)?;
    let cleaned = clean_labels(&mask, &params)?;
    save_mask(&cleaned, &args.out)?;
    println!("labelprep: {} -> {} foreground voxels", mask.count(), cleaned.count());
    Ok(())
}

fn load_volumes(manifest: &Path) -> Result<Vec<TrainingVolume>> {
    load_manifest(manifest)?.iter().map(load_training_volume).collect()
}

fn apply_train_overrides(cfg: &mut RunConfig, mode: Option<MipMode>, epochs: Option<usize>) -> Result<()> {
    if let Some(m) = mode {
        cfg.train.mip_mode = m;
    }
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    let issues = cfg.validate();
    if issues.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(issues))
    }
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_deref(), args.seed)?;
    apply_train_overrides(&mut cfg, args.mode, args.epochs)?;
    let run_dir = args.run_dir.clone().unwrap_or_else(|| Path::new("runs").join(&args.name));
    let volumes = load_volumes(&args.manifest)?;
    let val = match &args.val_manifest {
        Some(p) => load_volumes(p)?,
        None => Vec::new(),
    };
    create_dir(&run_dir)?;
    let config_path = run_dir.join("config.yaml");
    std::fs::write(&config_path, cfg.to_yaml()?).map_err(|e| Error::io(&config_path, e))?;
    let outcome = train(volumes, val, cfg.train_config(), Some(&run_dir))?;
    let last = outcome.epochs.last();
    println!(
        "trained {} steps over {} epochs; final mean loss {:.6}; checkpoints in {}",
        outcome.steps.len(),
        outcome.epochs.len(),
        last.map_or(f64::NAN, |e| e.mean_train_loss),
        run_dir.display()
    );
    Ok(())
}

fn predict_volume(model: &UNet, image: &ScalarVolume, inference: &InferenceConfig) -> Result<(ProbabilityVolume, BinaryMask)> {
    let div = model.config().size_divisor();
    if !inference.patch_size.is_multiple_of(div) {
        return Err(Error::Config(vec![format!(
            "inference.patch_size: {} is not divisible by {div} (2^(model.depth - 1))",
            inference.patch_size
        )]));
    }
    let prob = sliding_window_predict(model, image, inference)?;
    let mask = binarize(&prob, inference.threshold)?;
    Ok((prob, mask))
}

fn load_model(path: &Path) -> Result<UNet> {
    let ckpt = Checkpoint::load(path)?;
    UNet::from_params(ckpt.header.config.model.clone(), ckpt.params)
}

pub fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref(), args.seed)?;
    let mut inference = cfg.inference.clone();
    if let Some(p) = args.patch_size {
        inference.patch_size = p;
    }
    if let Some(s) = &args.stride {
        inference.stride = match s.as_slice() {
            [a] => [*a; 3],
            [a, b, c] => [*a, *b, *c],
            _ => return Err(Error::Config(vec!["--stride: give one value or three".into()])),
        };
    }
    if let Some(t) = args.threshold {
        inference.threshold = t;
    }
    let issues = inference.validate();
    if !issues.is_empty() {
        return Err(Error::Config(issues));
    }
    let model = load_model(&args.checkpoint)?;
    let image = load_volume(&args.input)?;
    let (prob, mask) = predict_volume(&model, &image, &inference)?;
    create_dir(&args.out_dir)?;
    save_probability(&prob, args.out_dir.join("prob.nii.gz"))?;
    save_mask(&mask, args.out_dir.join("mask.nii.gz"))?;
    println!("predicted {} foreground voxels into {}", mask.count(), args.out_dir.display());
    Ok(())
}

/// Writes `metric,n,median,variance` rows.
pub fn write_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let fmt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    let mut text = String::from("metric,n,median,variance\n");
    for r in rows {
        text.push_str(&format!("{},{},{},{}\n", r.metric, r.n, fmt(r.median), fmt(r.variance)));
    }
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn load_probability(path: &Path) -> Result<ProbabilityVolume> {
    ProbabilityVolume::new(load_volume(path)?.grid().clone())
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let mut issues = Vec::new();
    if args.pred.len() != args.gt.len() {
        issues.push(format!("--gt: {} given for {} --pred", args.gt.len(), args.pred.len()));
    }
    if !args.prob.is_empty() && args.prob.len() != args.pred.len() {
        issues.push(format!("--prob: {} given for {} --pred", args.prob.len(), args.pred.len()));
    }
    if args.out.is_some() && args.pred.len() != 1 {
        issues.push("--out: only valid for a single pair; use --out-dir".into());
    }
    if !issues.is_empty() {
        return Err(Error::Config(issues));
    }
    let mut reports = Vec::new();
    for (i, (pred_path, gt_path)) in args.pred.iter().zip(&args.gt).enumerate() {
        let pred = load_mask(pred_path)?;
        let gt = load_mask(gt_path)?;
        let prob = args.prob.get(i).map(|p| load_probability(p)).transpose()?;
        reports.push(evaluate_pair(prob.as_ref(), &pred, &gt)?);
    }
    if let Some(out) = &args.out {
        write_json(&reports[0], out)?;
    }
    if let Some(dir) = &args.out_dir {
        create_dir(dir)?;
        for (i, r) in reports.iter().enumerate() {
            write_json(r, &dir.join(format!("report_{i:03}.json")))?;
        }
    }
    let rows = summarize(&reports);
    let summary_path = args.summary.clone().or_else(|| args.out_dir.as_ref().map(|d| d.join("summary.csv")));
    if let Some(p) = summary_path {
        write_summary_csv(&rows, &p)?;
    }
    if args.out.is_none() && args.out_dir.is_none() {
        for r in &reports {
            println!("{}", serde_json::to_string(r)?);
        }
    } else {
        for row in &rows {
            if let Some(m) = row.median {
                println!("{:<24} median {m:.6}", row.metric);
            }
        }
    }
    Ok(())
}

pub const TP_COLOR: [u8; 3] = [255, 255, 255];
pub const FN_COLOR: [u8; 3] = [255, 0, 0];
pub const FP_COLOR: [u8; 3] = [0, 0, 255];
pub const TN_COLOR: [u8; 3] = [0, 0, 0];

/// RGB overlay of the two masks' MIPs along `axis`: white TP, red FN, blue FP,
/// black TN. Also returns the per-pixel confusion counts.
pub fn mip_overlay(pred: &BinaryMask, gt: &BinaryMask, axis: Axis) -> Result<(Image2<[u8; 3]>, ConfusionCounts)> {
    if pred.dims() != gt.dims() {
        return Err(Error::Shape(format!("prediction dims {:?} differ from ground truth {:?}", pred.dims(), gt.dims())));
    }
    let p = mip(pred, axis)?.image;
    let g = mip(gt, axis)?.image;
    let mut counts = ConfusionCounts::default();
    let data = p
        .data
        .iter()
        .zip(&g.data)
        .map(|(&a, &b)| match (a != 0, b != 0) {
            (true, true) => {
                counts.tp += 1;
                TP_COLOR
            }
            (false, true) => {
                counts.fn_ += 1;
                FN_COLOR
            }
            (true, false) => {
                counts.fp += 1;
                FP_COLOR
            }
            (false, false) => {
                counts.tn += 1;
                TN_COLOR
            }
        })
        .collect();
    Ok((Image2::new(p.rows, p.cols, data)?, counts))
}

pub fn save_png(image: &Image2<[u8; 3]>, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), image.cols as u32, image.rows as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let to_io = |e: png::EncodingError| Error::io(path, std::io::Error::other(e));
    let mut writer = enc.write_header().map_err(to_io)?;
    let bytes: Vec<u8> = image.data.iter().flatten().copied().collect();
    writer.write_image_data(&bytes).map_err(to_io)?;
    writer.finish().map_err(to_io)
}

pub fn cmd_mipfig(args: &MipfigArgs) -> Result<()> {
    let pred = load_mask(&args.pred)?;
    let gt = load_mask(&args.gt)?;
    let (image, counts) = mip_overlay(&pred, &gt, args.axis)?;
    save_png(&image, &args.out)?;
    println!("{}", serde_json::to_string(&counts)?);
    Ok(())
}

#[derive(Serialize)]
struct FoldRecord<'a> {
    fold: usize,
    train: &'a [String],
    val: &'a [String],
}

pub fn cmd_crossval(args: &CrossvalArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_deref(), args.seed)?;
    apply_train_overrides(&mut cfg, args.mode, args.epochs)?;
    let entries = load_manifest(&args.manifest)?;
    let by_id: BTreeMap<&str, &ManifestEntry> = entries.iter().map(|e| (e.volume_id.as_str(), e)).collect();
    if by_id.len() != entries.len() {
        return Err(Error::InvalidInput("manifest volume ids must be unique".into()));
    }
    let ids: Vec<String> = entries.iter().map(|e| e.volume_id.clone()).collect();
    let folds = kfold_split(&ids, args.folds, cfg.train.seed)?;
    create_dir(&args.run_dir)?;
    let config_path = args.run_dir.join("config.yaml");
    std::fs::write(&config_path, cfg.to_yaml()?).map_err(|e| Error::io(&config_path, e))?;
    let records: Vec<FoldRecord> = folds
        .iter()
        .enumerate()
        .map(|(i, f)| FoldRecord {
            fold: i,
            train: &f.train,
            val: &f.val,
        })
        .collect();
    write_json(&records, &args.run_dir.join("folds.json"))?;
    let mut all: Vec<MetricsReport> = Vec::new();
    for (i, fold) in folds.iter().enumerate() {
        let dir = args.run_dir.join(format!("fold_{i}"));
        let load = |ids: &[String]| -> Result<Vec<TrainingVolume>> { ids.iter().map(|id| load_training_volume(by_id[id.as_str()])).collect() };
        let outcome = train(load(&fold.train)?, load(&fold.val)?, cfg.train_config(), Some(&dir))?;
        let best = outcome.best.unwrap_or(outcome.last);
        let model = UNet::from_params(best.header.config.model.clone(), best.params)?;
        let mut reports = Vec::new();
        for id in &fold.val {
            let e = by_id[id.as_str()];
            let image = load_volume(&e.image_path)?;
            let gt = load_mask(e.gt_path.as_ref().unwrap_or(&e.label_path))?;
            let (prob, mask) = predict_volume(&model, &image, &cfg.inference)?;
            let report = evaluate_pair(Some(&prob), &mask, &gt)?;
            write_json(&report, &dir.join(format!("report_{id}.json")))?;
            reports.push(report);
        }
        write_summary_csv(&summarize(&reports), &dir.join("summary.csv"))?;
        println!("fold {i}: trained on {} volumes, evaluated {}", fold.train.len(), fold.val.len());
        all.extend(reports);
    }
    let rows = summarize(&all);
    write_summary_csv(&rows, &args.run_dir.join("summary.csv"))?;
    if let Some(d) = rows.iter().find(|r| r.metric == "dice").and_then(|r| r.median) {
        println!("median dice over {} volumes: {d:.6}", all.len());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn mode_flag_dispatches() {
        let cli = Cli::try_parse_from(["spockmip", "train", "--config", "c.yaml", "--manifest", "m.json", "--mode", "multi_mip"]).unwrap();
        let Command::Train(a) = cli.command else { panic!("not train") };
        assert_eq!(a.mode, Some(MipMode::Multi));
        assert!(Cli::try_parse_from(["spockmip", "train", "--manifest", "m.json", "--mode", "sideways"]).is_err());
    }

    #[test]
    fn every_subcommand_takes_a_seed() {
        for name in ["phantom", "labelprep", "train", "predict", "evaluate", "mipfig", "crossval"] {
            let cmd = Cli::command();
            let sub = cmd.find_subcommand(name).unwrap_or_else(|| panic!("{name} missing"));
            assert!(sub.get_arguments().any(|a| a.get_id() == "seed"), "{name}");
        }
    }

    fn masks() -> (BinaryMask, BinaryMask) {
        let gt = BinaryMask::from_fn([4, 6, 6], |z, y, x| z == 1 && (y == 2 || x == 3));
        let pred = BinaryMask::from_fn([4, 6, 6], |z, y, x| z == 2 && y == 2 || (z == 0 && x == 0));
        (pred, gt)
    }

    #[test]
    fn overlay_colours_match_mip_confusion() {
        let (pred, gt) = masks();
        for axis in Axis::ALL {
            let (img, counts) = mip_overlay(&pred, &gt, axis).unwrap();
            let p = mip(&pred, axis).unwrap().image;
            let g = mip(&gt, axis).unwrap().image;
            let count = |c: [u8; 3]| img.data.iter().filter(|&&v| v == c).count() as u64;
            let both = |fa: bool, fb: bool| p.data.iter().zip(&g.data).filter(|(&a, &b)| (a != 0) == fa && (b != 0) == fb).count() as u64;
            assert_eq!(count(TP_COLOR), both(true, true));
            assert_eq!(count(FN_COLOR), both(false, true));
            assert_eq!(count(FP_COLOR), both(true, false));
            assert_eq!(count(TN_COLOR), both(false, false));
            assert_eq!(counts.tp, count(TP_COLOR));
        }
    }

    #[test]
    fn overlay_legend_cases() {
        let (_, gt) = masks();
        let (img, _) = mip_overlay(&gt, &gt, Axis::Z).unwrap();
        assert!(img.data.iter().all(|&c| c == TP_COLOR || c == TN_COLOR));
        let (img, counts) = mip_overlay(&BinaryMask::zeros(gt.dims()), &gt, Axis::Z).unwrap();
        assert!(img.data.iter().all(|&c| c == FN_COLOR || c == TN_COLOR));
        assert_eq!(counts.tp + counts.fp, 0);
        assert!(mip_overlay(&BinaryMask::zeros([4, 6, 5]), &gt, Axis::Z).is_err());
    }
}
