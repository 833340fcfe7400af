//! The `faceboxes` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 input/data error, 3 internal invariant violation.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use faceboxes_core::anchors::{default_configs, generate_anchors};
use faceboxes_core::augment::{augment_pipeline, AugmentConfig, Sample};
use faceboxes_core::evaluate::{evaluate, GroundTruthSet, DEFAULT_IOU_THRESHOLD};
use faceboxes_core::network::{build_faceboxes, xavier_init, ModelWeights};
use faceboxes_core::postprocess::PostprocessConfig;
use faceboxes_core::targets::{match_anchors, EncodeVariances, DEFAULT_MATCH_THRESHOLD};
use faceboxes_core::tensor::{Shape, Tensor};

use crate::detector::{DetectOutcome, Detector, Preprocess};
use crate::error::{Error, Result};
use crate::formats::{self, AnnotatedImage, DetectionBlock};
use crate::model::{load_weights, save_weights};
use crate::ppm::{self, RgbImage};

#[derive(Debug, Parser)]
#[command(name = "faceboxes", version, about = "CPU face detection with the FaceBoxes network")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect faces in PPM images and write one detection file per image.
    Detect(DetectArgs),
    /// Write Xavier-initialized weights in FBXW format.
    InitWeights(InitArgs),
    /// Dump the anchor set for an image size.
    Anchors(AnchorsArgs),
    /// Emit per-anchor training targets for an annotation file.
    Targets(TargetsArgs),
    /// Run the training augmentation pipeline on one image.
    Augment(AugmentArgs),
    /// Score detection files against annotations.
    Eval(EvalArgs),
    /// Measure forward and full-pipeline throughput.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct PostprocessFlags {
    #[arg(long, default_value_t = 0.05)]
    pub conf_threshold: f32,
    #[arg(long, default_value_t = 0.3)]
    pub nms_overlap: f32,
    #[arg(long = "pre-topk", default_value_t = 400)]
    pub pre_top_k: usize,
    #[arg(long = "post-topk", default_value_t = 200)]
    pub post_top_k: usize,
}

impl PostprocessFlags {
    fn config(&self) -> Result<PostprocessConfig> {
        let cfg = PostprocessConfig {
            conf_threshold: self.conf_threshold,
            pre_nms_top_k: self.pre_top_k,
            nms_overlap: self.nms_overlap,
            post_nms_top_k: self.post_top_k,
        };
        cfg.validate().map_err(|e| Error::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Directory for `<stem>.det` files (default: next to each image).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub post: PostprocessFlags,
    /// Resize to WxH before detection; boxes are mapped back to the original image.
    #[arg(long, value_parser = parse_size)]
    pub resize: Option<(usize, usize)>,
    /// Per-channel mean subtracted from [0,1] pixels, as `r,g,b`.
    #[arg(long, value_parser = parse_mean)]
    pub mean: Option<[f32; 3]>,
    #[arg(required = true)]
    pub images: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnchorsArgs {
    pub width: usize,
    pub height: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TargetsArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    /// Override the image width from the annotation file.
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_MATCH_THRESHOLD)]
    pub match_threshold: f32,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_image: PathBuf,
    #[arg(long)]
    pub out_annotations: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    pub detections: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    pub iou: f32,
    #[arg(long = "fp-budget", default_values_t = [1000usize])]
    pub fp_budgets: Vec<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_parser = parse_size, default_value = "640x640")]
    pub size: (usize, usize),
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    /// FBXW weights; Xavier weights from `--seed` when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub post: PostprocessFlags,
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let w: usize = w.parse().map_err(|_| format!("bad width in {s:?}"))?;
    let h: usize = h.parse().map_err(|_| format!("bad height in {s:?}"))?;
    if w == 0 || h == 0 {
        return Err("sizes must be positive".into());
    }
    Ok((w, h))
}

fn parse_mean(s: &str) -> std::result::Result<[f32; 3], String> {
    let v: Vec<f32> = s
        .split(',')
        .map(|t| t.trim().parse::<f32>().map_err(|_| format!("bad mean component {t:?}")))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into().map_err(|_| "mean needs exactly three components".to_string())
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<i32> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Invariant(format!("cannot start thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Detect(a) => cmd_detect(a, cli.verbose),
        Command::InitWeights(a) => cmd_init_weights(a).map(|_| 0),
        Command::Anchors(a) => cmd_anchors(a).map(|_| 0),
        Command::Targets(a) => cmd_targets(a).map(|_| 0),
        Command::Augment(a) => cmd_augment(a).map(|_| 0),
        Command::Eval(a) => cmd_eval(a).map(|_| 0),
        Command::Bench(a) => cmd_bench(a, pool.current_num_threads()).map(|_| 0),
    })
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file")))
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

/// Mean and population standard deviation in milliseconds.
pub fn mean_std_ms(samples: &[Duration]) -> (f64, f64) {
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e3).collect();
    let mean = ms.iter().sum::<f64>() / ms.len() as f64;
    let var = ms.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / ms.len() as f64;
    (mean, var.sqrt())
}

pub fn median_ms(samples: &[Duration]) -> f64 {
    let mut ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e3).collect();
    ms.sort_by(f64::total_cmp);
    match ms.len() {
        0 => 0.0,
        n if n % 2 == 1 => ms[n / 2],
        n => (ms[n / 2 - 1] + ms[n / 2]) / 2.0,
    }
}

fn detection_path(image: &Path, out_dir: Option<&Path>) -> PathBuf {
    let stem = image.file_stem().unwrap_or_default();
    let dir = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| image.parent().map(Path::to_path_buf).unwrap_or_default());
    dir.join(stem).with_extension("det")
}

fn cmd_detect(args: &DetectArgs, verbose: bool) -> Result<i32> {
    let post = args.post.config()?;
    require_file(&args.model)?;
    for image in &args.images {
        require_file(image)?;
    }
    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let descriptor = build_faceboxes();
    let mut detector = Detector::new(load_weights(&args.model, &descriptor)?)?;
    detector.postprocess = post;
    detector.preprocess = Preprocess {
        mean: args.mean.unwrap_or(Preprocess::default().mean),
    };

    let results: Vec<(Duration, Result<DetectOutcome>)> = args
        .images
        .par_iter()
        .map(|path| {
            let t0 = Instant::now();
            let outcome = ppm::read(path).and_then(|img| {
                let load = t0.elapsed();
                let outcome = detector.detect_image(&img, args.resize)?;
                let block = DetectionBlock {
                    path: path.display().to_string(),
                    width: img.width,
                    height: img.height,
                    detections: outcome.detections.clone(),
                };
                let out = detection_path(path, args.out_dir.as_deref());
                fs::write(&out, formats::format_detections(&block)).map_err(|e| Error::io(&out, e))?;
                Ok((load, outcome))
            });
            match outcome {
                Ok((load, o)) => (load, Ok(o)),
                Err(e) => (Duration::ZERO, Err(e)),
            }
        })
        .collect();

    let mut worst = 0;
    let mut stages: [Vec<Duration>; 4] = Default::default();
    for (path, (load, result)) in args.images.iter().zip(results) {
        match result {
            Ok(o) => {
                stages[0].push(load);
                stages[1].push(o.times.preprocess);
                stages[2].push(o.times.forward);
                stages[3].push(o.times.postprocess);
                if verbose {
                    eprintln!(
                        "{}: decoded {} above-threshold {} degenerate {} after-nms {} kept {}",
                        path.display(),
                        o.stats.decoded,
                        o.stats.above_threshold,
                        o.stats.degenerate,
                        o.stats.after_nms,
                        o.detections.len()
                    );
                }
            }
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                worst = worst.max(e.exit_code());
            }
        }
    }
    for (name, samples) in ["load", "preprocess", "forward", "postprocess"].iter().zip(&stages) {
        let (mean, std) = mean_std_ms(samples);
        println!("timing stage={name} n={} mean_ms={mean:.3} stddev_ms={std:.3}", samples.len());
    }
    Ok(worst)
}

fn cmd_init_weights(args: &InitArgs) -> Result<()> {
    let weights = xavier_init(&build_faceboxes(), args.seed);
    save_weights(&weights, &args.out)
}

fn cmd_anchors(args: &AnchorsArgs) -> Result<()> {
    let set = generate_anchors(args.width, args.height, &default_configs())?;
    write_output(args.out.as_deref(), &formats::format_anchors(&set))
}

fn cmd_targets(args: &TargetsArgs) -> Result<()> {
    if !(args.match_threshold > 0.0 && args.match_threshold < 1.0) {
        return Err(Error::Usage("--match-threshold must lie in (0, 1)".into()));
    }
    let images = formats::read_annotations(&args.annotations)?;
    let mut text = String::new();
    for img in &images {
        let w = args.width.unwrap_or(img.width);
        let h = args.height.unwrap_or(img.height);
        let set = generate_anchors(w, h, &default_configs())?;
        let targets = match_anchors(&set, &img.faces, args.match_threshold, EncodeVariances::default())?;
        text.push_str(&formats::format_targets(&img.path, &set, &targets));
    }
    write_output(args.out.as_deref(), &text)
}

fn pick_annotation<'a>(images: &'a [AnnotatedImage], image: &Path, ann_path: &Path) -> Result<&'a AnnotatedImage> {
    let wanted = image.display().to_string();
    if let Some(a) = images.iter().find(|a| a.path == wanted) {
        return Ok(a);
    }
    match images {
        [only] => Ok(only),
        _ => Err(Error::parse(ann_path, 0, format!("no annotation block for {wanted}"))),
    }
}

fn cmd_augment(args: &AugmentArgs) -> Result<()> {
    require_file(&args.image)?;
    let images = formats::read_annotations(&args.annotations)?;
    let ann = pick_annotation(&images, &args.image, &args.annotations)?;
    let img = ppm::read(&args.image)?;
    let sample = Sample {
        image: img.to_unit_tensor(),
        boxes: ann.faces.clone(),
        source: ann.path.clone(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let out = augment_pipeline(&sample, &mut rng, &AugmentConfig::default())?;
    ppm::write(&args.out_image, &RgbImage::from_unit_tensor(&out.image)?)?;
    let block = AnnotatedImage {
        path: args.out_image.display().to_string(),
        width: out.width(),
        height: out.height(),
        faces: out.boxes,
    };
    fs::write(&args.out_annotations, formats::format_annotations(&[block])).map_err(|e| Error::io(&args.out_annotations, e))
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let mut gts = GroundTruthSet::default();
    for img in formats::read_annotations(&args.annotations)? {
        gts.insert(img.path, img.faces)
            .map_err(|e| Error::parse(&args.annotations, 0, e.to_string()))?;
    }
    let mut dets = Vec::new();
    for path in &args.detections {
        for block in formats::read_detections(path)? {
            dets.push((block.path, block.detections));
        }
    }
    let result = evaluate(&dets, &gts, args.iou, &args.fp_budgets)?;
    write_output(args.out.as_deref(), &formats::format_eval(&result))
}

fn cmd_bench(args: &BenchArgs, threads: usize) -> Result<()> {
    if args.reps < 3 {
        return Err(Error::Usage("--reps must be at least 3".into()));
    }
    let descriptor = build_faceboxes();
    let weights: ModelWeights = match &args.model {
        Some(p) => load_weights(p, &descriptor)?,
        None => xavier_init(&descriptor, args.seed),
    };
    let mut detector = Detector::new(weights)?;
    detector.postprocess = args.post.config()?;
    let (w, h) = args.size;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let data: Vec<f32> = (0..3 * w * h).map(|_| rng.gen_range(-0.5f32..0.5)).collect();
    let input = Tensor::from_vec(Shape::new(1, 3, h, w), data)?;

    detector.detect_tensor(&input)?;
    let mut forward = Vec::with_capacity(args.reps);
    let mut pipeline = Vec::with_capacity(args.reps);
    for _ in 0..args.reps {
        let o = detector.detect_tensor(&input)?;
        forward.push(o.times.forward);
        pipeline.push(o.times.forward + o.times.postprocess);
    }
    let (fmed, pmed) = (median_ms(&forward), median_ms(&pipeline));
    let (_, fstd) = mean_std_ms(&forward);
    let (_, pstd) = mean_std_ms(&pipeline);
    println!(
        "bench size={w}x{h} reps={} threads={threads} forward_median_ms={fmed:.3} forward_stddev_ms={fstd:.3} forward_fps={:.2} pipeline_median_ms={pmed:.3} pipeline_stddev_ms={pstd:.3} pipeline_fps={:.2}",
        args.reps,
        1e3 / fmed,
        1e3 / pmed
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_and_mean_parsing() {
        assert_eq!(parse_size("640x480"), Ok((640, 480)));
        assert!(parse_size("640").is_err());
        assert!(parse_size("0x4").is_err());
        assert_eq!(parse_mean("0.1, 0.2,0.3"), Ok([0.1, 0.2, 0.3]));
        assert!(parse_mean("1,2").is_err());
    }

    #[test]
    fn statistics() {
        let d = |ms: u64| Duration::from_millis(ms);
        assert_eq!(median_ms(&[d(3), d(1), d(2)]), 2.0);
        assert_eq!(median_ms(&[d(4), d(1), d(2), d(3)]), 2.5);
        let (m, s) = mean_std_ms(&[d(2), d(4)]);
        assert!((m - 3.0).abs() < 1e-9 && (s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn detection_paths() {
        assert_eq!(detection_path(Path::new("a/b/img.ppm"), None), PathBuf::from("a/b/img.det"));
        assert_eq!(detection_path(Path::new("img.ppm"), Some(Path::new("out"))), PathBuf::from("out/img.det"));
    }
}
