//! `obbkit` command-line front-end. Every subcommand prints one JSON
//! document on stdout; diagnostics go to stderr.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid data or arguments.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use obbkit::annotations::{
    parse_dota_file, parse_hrsc_image, read_jsonl, write_jsonl, AnnotationError, AnyRecord, DetectionRecord,
    GroundTruthRecord,
};
use obbkit::geometry::rotated_iou;
use obbkit::metrics::evaluate;
use obbkit::optim::{fit_obb, random_keypoint_box, synth_dataset, OptimError};
use obbkit::svg::{BoxStyle, SvgScene};
use obbkit::{DatasetManifest, FitConfig, ImageSize, LossConfig, LossVariant, ObbParams, SynthSpec, WidthTerm};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

#[derive(Debug, Parser)]
#[command(
    name = "obbkit",
    version,
    about = "Oriented bounding boxes: conversion, head-tail loss, fitting and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert DOTA, HRSC or JSONL annotations to canonical JSONL.
    Convert {
        #[arg(long, value_enum)]
        format: InputFormat,
        /// Input file, or a directory of label files for dota/hrsc.
        input: PathBuf,
        output: PathBuf,
    },
    /// Loss between paired prediction and groundtruth records.
    Loss {
        pred: PathBuf,
        gt: PathBuf,
        #[arg(long)]
        image_w: u32,
        #[arg(long)]
        image_h: u32,
        #[command(flatten)]
        loss: LossArgs,
    },
    /// Evaluate detections against groundtruth (AP per category, mAP, AR).
    Eval {
        det: PathBuf,
        gt: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
    },
    /// Fit random boxes to random targets by gradient descent.
    Fit {
        #[arg(long, env = "OBBKIT_SEED", default_value_t = 0)]
        seed: u64,
        /// Side of the square image, in pixels.
        #[arg(long, default_value_t = 1024)]
        image: u32,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        /// Starting box: a random box, the target itself, or the target with
        /// head and tail swapped.
        #[arg(long, value_enum, default_value_t = InitMode::Random)]
        init: InitMode,
        #[command(flatten)]
        loss: LossArgs,
        #[arg(long, default_value_t = 5000)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Step size; defaults to 0.1 × the normalizer.
        #[arg(long)]
        lr: Option<f64>,
        /// Draw the first trial's initial, target and final boxes.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Generate a synthetic groundtruth set and matching detections.
    Synth {
        #[arg(long, env = "OBBKIT_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dets: PathBuf,
        #[arg(long, default_value_t = 4)]
        images: usize,
        /// Side of the square images, in pixels.
        #[arg(long, default_value_t = 1024)]
        image: u32,
        /// Objects per image as name:count; repeatable.
        #[arg(long = "category", value_parser = parse_count, default_values = ["ship:3", "plane:2"])]
        categories: Vec<(String, usize)>,
        #[arg(long, value_parser = parse_range, default_value = "20,120")]
        length_range: (f64, f64),
        #[arg(long, value_parser = parse_range, default_value = "0.2,0.6")]
        aspect_range: (f64, f64),
        #[arg(long, default_value_t = 0.0)]
        coord_noise: f64,
        #[arg(long, default_value_t = 0.0)]
        angle_noise: f64,
        #[arg(long, default_value_t = 0.0)]
        score_noise: f64,
        #[arg(long, default_value_t = 0)]
        spurious: usize,
    },
    /// Rotated IoU of two boxes given as cx,cy,length,width,theta.
    Iou {
        #[arg(long, value_parser = parse_obb, allow_hyphen_values = true)]
        a: ObbParams,
        #[arg(long, value_parser = parse_obb, allow_hyphen_values = true)]
        b: ObbParams,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InputFormat {
    Dota,
    Hrsc,
    Jsonl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InitMode {
    Random,
    Target,
    Flipped,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    /// Head-tail loss.
    Ht,
    /// Four-point loss (head, tail and both side midpoints).
    Ht4,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum WidthArg {
    None,
    Absolute,
    Squared,
}

#[derive(Debug, clap::Args)]
struct LossArgs {
    #[arg(long, value_enum, default_value_t = VariantArg::Ht)]
    variant: VariantArg,
    #[arg(long, value_enum, default_value_t = WidthArg::None)]
    width_term: WidthArg,
}

impl LossArgs {
    fn variant(&self) -> LossVariant {
        match self.variant {
            VariantArg::Ht => LossVariant::HeadTail,
            VariantArg::Ht4 => LossVariant::FourPoint,
        }
    }

    fn config(&self) -> LossConfig {
        LossConfig::default().with_width_term(match self.width_term {
            WidthArg::None => WidthTerm::None,
            WidthArg::Absolute => WidthTerm::Absolute,
            WidthArg::Squared => WidthTerm::Squared,
        })
    }
}

fn parse_floats(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"))).collect()
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    match parse_floats(s)?.as_slice() {
        [lo, hi] => Ok((*lo, *hi)),
        _ => Err("expected lo,hi".into()),
    }
}

fn parse_obb(s: &str) -> Result<ObbParams, String> {
    match parse_floats(s)?.as_slice() {
        [cx, cy, l, w, t] => ObbParams::new(*cx, *cy, *l, *w, *t).map_err(|e| e.to_string()),
        _ => Err("expected cx,cy,length,width,theta".into()),
    }
}

fn parse_count(s: &str) -> Result<(String, usize), String> {
    let (name, count) = s.rsplit_once(':').ok_or("expected name:count")?;
    if name.is_empty() {
        return Err("empty category name".into());
    }
    Ok((name.to_string(), count.parse().map_err(|e| format!("{count:?}: {e}"))?))
}

#[derive(Debug)]
enum CliError {
    Io(String),
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl From<AnnotationError> for CliError {
    fn from(e: AnnotationError) -> Self {
        match e {
            AnnotationError::Io { .. } => CliError::Io(e.to_string()),
            AnnotationError::Lines(ref errs) => {
                CliError::Data(errs.iter().map(|l| l.to_string()).collect::<Vec<_>>().join("\n"))
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Convert { format, input, output } => cmd_convert(format, &input, &output),
        Command::Loss { pred, gt, image_w, image_h, loss } => cmd_loss(&pred, &gt, image_w, image_h, &loss),
        Command::Eval { det, gt, iou } => cmd_eval(&det, &gt, iou),
        Command::Fit { seed, image, trials, init, loss, max_iters, tol, lr, svg } => {
            let cfg = FitConfig { learning_rate: lr, max_iters, tol, variant: loss.variant(), loss: loss.config() };
            cmd_fit(seed, image, trials, init, &cfg, svg.as_deref())
        }
        Command::Synth {
            seed,
            out,
            dets,
            images,
            image,
            categories,
            length_range,
            aspect_range,
            coord_noise,
            angle_noise,
            score_noise,
            spurious,
        } => ImageSize::square(image).map_err(data).and_then(|image| {
            let spec = SynthSpec {
                seed,
                image,
                num_images: images,
                counts: categories,
                length_range,
                aspect_range,
                coord_noise,
                angle_noise,
                score_noise,
                spurious_per_image: spurious,
            };
            cmd_synth(&spec, &out, &dets)
        }),
        Command::Iou { a, b } => Ok(json!({ "iou": rotated_iou(&a, &b) })),
    };
    match result {
        Ok(doc) => {
            println!("{doc}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let (CliError::Io(msg) | CliError::Data(msg)) = &e;
            eprintln!("obbkit: {msg}");
            ExitCode::from(e.code())
        }
    }
}

/// Label files in a directory with the given extension, sorted by name.
fn label_files(dir: &Path, ext: &str) -> CliResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?.path();
        if path.extension().is_some_and(|x| x.eq_ignore_ascii_case(ext)) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn inputs(input: &Path, ext: &str) -> CliResult<Vec<PathBuf>> {
    if input.is_dir() {
        label_files(input, ext)
    } else {
        Ok(vec![input.to_path_buf()])
    }
}

fn cmd_convert(format: InputFormat, input: &Path, output: &Path) -> CliResult<serde_json::Value> {
    let n = match format {
        InputFormat::Dota => {
            let mut records = Vec::new();
            for path in inputs(input, "txt")? {
                records.extend(parse_dota_file(&path).map_err(|e| prefix(&path, e))?);
            }
            write_jsonl(output, &records)?;
            records.len()
        }
        InputFormat::Hrsc => {
            let mut records = Vec::new();
            for path in inputs(input, "xml")? {
                let img = parse_hrsc_image(&path).map_err(|e| prefix(&path, e))?;
                records.extend(img.objects.into_iter().map(|o| o.record));
            }
            write_jsonl(output, &records)?;
            records.len()
        }
        InputFormat::Jsonl => {
            let records: Vec<AnyRecord> = read_jsonl(input).map_err(|e| prefix(input, e))?;
            write_jsonl(output, &records)?;
            records.len()
        }
    };
    Ok(json!({ "records": n }))
}

fn prefix(path: &Path, e: AnnotationError) -> CliError {
    match CliError::from(e) {
        CliError::Data(msg) => CliError::Data(format!("{}: {msg}", path.display())),
        io => io,
    }
}

#[derive(Serialize)]
struct PairLoss {
    image_id: String,
    index: usize,
    value: f64,
    active_branch: &'static str,
    components: obbkit::losses::LossComponents,
}

/// Groups records by image id, keeping first-appearance order of images and
/// file order within each image.
fn by_image(records: Vec<AnyRecord>) -> Vec<(String, Vec<AnyRecord>)> {
    let mut groups: Vec<(String, Vec<AnyRecord>)> = Vec::new();
    for r in records {
        match groups.iter_mut().find(|(id, _)| id == r.image_id()) {
            Some((_, v)) => v.push(r),
            None => groups.push((r.image_id().to_string(), vec![r])),
        }
    }
    groups
}

fn cmd_loss(pred: &Path, gt: &Path, w: u32, h: u32, args: &LossArgs) -> CliResult<serde_json::Value> {
    let img = ImageSize::new(w, h).map_err(data)?;
    let preds = by_image(read_jsonl(pred).map_err(|e| prefix(pred, e))?);
    let gts = by_image(read_jsonl(gt).map_err(|e| prefix(gt, e))?);
    for (id, _) in &gts {
        if !preds.iter().any(|(p, _)| p == id) {
            return Err(CliError::Data(format!("image {id:?} has groundtruth but no predictions")));
        }
    }
    let (variant, cfg) = (args.variant(), args.config());
    let mut pairs = Vec::new();
    for (id, ps) in &preds {
        let gs = gts.iter().find(|(g, _)| g == id).map(|(_, v)| v.as_slice()).unwrap_or_default();
        if ps.len() != gs.len() {
            return Err(CliError::Data(format!(
                "image {id:?}: {} predictions but {} groundtruth records",
                ps.len(),
                gs.len()
            )));
        }
        for (index, (p, g)) in ps.iter().zip(gs).enumerate() {
            let kp =
                |r: &AnyRecord| r.keypoints().map_err(|e| CliError::Data(format!("image {id:?} record {index}: {e}")));
            let v = variant.loss(&kp(p)?, &kp(g)?, &img, &cfg);
            pairs.push(PairLoss {
                image_id: id.clone(),
                index,
                value: v.value,
                active_branch: v.active_branch.as_str(),
                components: v.components,
            });
        }
    }
    let mean = if pairs.is_empty() { 0.0 } else { pairs.iter().map(|p| p.value).sum::<f64>() / pairs.len() as f64 };
    Ok(json!({ "pairs": pairs, "mean": mean }))
}

fn cmd_eval(det: &Path, gt: &Path, iou: f64) -> CliResult<serde_json::Value> {
    let dets: Vec<DetectionRecord> = read_jsonl(det).map_err(|e| prefix(det, e))?;
    let gts: Vec<GroundTruthRecord> = read_jsonl(gt).map_err(|e| prefix(gt, e))?;
    // matching needs only the category list, not image sizes
    let manifest = DatasetManifest {
        images: Vec::new(),
        categories: DatasetManifest::categories_of(&gts),
        groundtruth: Vec::new(),
    };
    let report = evaluate(&dets, &gts, &manifest, iou).map_err(data)?;
    serde_json::to_value(report).map_err(data)
}

#[derive(Debug, Default, Serialize)]
struct FitSummary {
    trials: usize,
    converged: usize,
    head_matches: usize,
    tail_matches: usize,
    mean_direction_error: f64,
    diverged: usize,
}

fn cmd_fit(
    seed: u64,
    side: u32,
    trials: usize,
    init: InitMode,
    cfg: &FitConfig,
    svg: Option<&Path>,
) -> CliResult<serde_json::Value> {
    let img = ImageSize::square(side).map_err(data)?;
    if cfg.tol.is_nan() || cfg.tol <= 0.0 || cfg.learning_rate.is_some_and(|lr| !(lr > 0.0 && lr.is_finite())) {
        return Err(CliError::Data("tol and lr must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut summary = FitSummary { trials, ..Default::default() };
    let mut direction_sum = 0.0;
    let mut scene: Option<SvgScene> = None;
    let sample = |rng: &mut ChaCha8Rng| random_keypoint_box(rng, &img, (16.0, 400.0), (0.1, 1.0));
    for trial in 0..trials {
        let target = sample(&mut rng);
        let start = match init {
            InitMode::Random => sample(&mut rng),
            InitMode::Target => target,
            InitMode::Flipped => target.flipped(),
        };
        match fit_obb(&start, &target, &img, cfg) {
            Ok(trace) => {
                if trial == 0 && svg.is_some() {
                    let mut s = SvgScene::new(img);
                    s.push(start, BoxStyle::Initial);
                    s.push(target, BoxStyle::GroundTruth);
                    s.push(trace.final_box, BoxStyle::Prediction);
                    scene = Some(s);
                }
                if !trace.converged {
                    eprintln!("trial {trial}: not converged after {} iterations", trace.iterations);
                    continue;
                }
                summary.converged += 1;
                direction_sum += trace.direction_error;
                let head = trace.final_box.head;
                if head.dist_sq(target.head) <= head.dist_sq(target.tail()) {
                    summary.head_matches += 1;
                } else {
                    summary.tail_matches += 1;
                }
            }
            Err(e @ OptimError::Diverged { .. }) | Err(e @ OptimError::DegenerateAxis) => {
                eprintln!("trial {trial}: {e}");
                summary.diverged += 1;
            }
            Err(e) => return Err(data(e)),
        }
    }
    if summary.converged > 0 {
        summary.mean_direction_error = direction_sum / summary.converged as f64;
    }
    if let Some(path) = svg {
        let body = scene.map(|s| s.render()).unwrap_or_else(|| SvgScene::new(img).render());
        fs::write(path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    serde_json::to_value(summary).map_err(data)
}

fn cmd_synth(spec: &SynthSpec, out: &Path, dets_path: &Path) -> CliResult<serde_json::Value> {
    let (manifest, dets) = synth_dataset(spec).map_err(data)?;
    write_jsonl(out, &manifest.groundtruth)?;
    write_jsonl(dets_path, &dets)?;
    Ok(json!({ "images": manifest.images.len(), "gts": manifest.groundtruth.len(), "dets": dets.len() }))
}
