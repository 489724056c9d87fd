//! Command-line front-end for the ring detector.
//!
//! Three subcommands: `detect` runs the pipeline on one image or on a batch
//! manifest, `evaluate` scores a detection JSON against a ground-truth JSON,
//! and `synth` renders a seeded synthetic disk with its annotation. Tunable
//! flags can also come from a flat key=value config file; explicit flags win
//! over the file, the file wins over built-in defaults.
//!
//! Exit codes: 0 success, 2 invalid arguments or inputs, 3 unreadable image,
//! 4 pith outside the image. Batch mode returns the worst per-image code.

use clap::{Args, Parser, Subcommand};
use cstrd::geometry::Point;
use cstrd::io::{
    labelme_document, labelme_polygons, read_labelme, render_overlay, rings_to_polygons,
    write_csv_report, write_labelme, ReportRow,
};
use cstrd::metrics::{evaluate, rasterize_gt_polygon, RingPolyline};
use cstrd::pipeline::{detect_tree_rings, DetectParams, Detection};
use cstrd::synthetic::{generate_disk, DiskSpec, Perturbations};
use cstrd::Error;
use std::collections::HashMap;
use std::path::{Path, PathBuf};

const EXIT_INVALID: i32 = 2;
const EXIT_UNREADABLE: i32 = 3;
const EXIT_PITH: i32 = 4;

#[derive(Parser)]
#[command(name = "cstrd", version, about = "Tree-ring detection on wood cross-section images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect rings and write annotation, overlay and timing files.
    Detect(DetectArgs),
    /// Score a detection JSON against a ground-truth JSON.
    Evaluate(EvaluateArgs),
    /// Render a synthetic disk image plus its ground-truth annotation.
    Synth(SynthArgs),
}

#[derive(Args)]
struct DetectArgs {
    /// Input image.
    #[arg(long, conflicts_with = "batch")]
    input: Option<PathBuf>,
    /// CSV manifest with `path,cy,cx` rows, processed on a worker pool.
    #[arg(long)]
    batch: Option<PathBuf>,
    /// Pith row (y) in input-image coordinates.
    #[arg(long)]
    cy: Option<f64>,
    /// Pith column (x) in input-image coordinates.
    #[arg(long)]
    cx: Option<f64>,
    /// Gaussian smoothing scale [default: 3].
    #[arg(long)]
    sigma: Option<f64>,
    /// Working height; omit together with width for the native size.
    #[arg(long)]
    height: Option<u32>,
    /// Working width.
    #[arg(long)]
    width: Option<u32>,
    /// Low hysteresis gradient threshold [default: 5].
    #[arg(long = "th-low")]
    th_low: Option<f64>,
    /// High hysteresis gradient threshold [default: 15].
    #[arg(long = "th-high")]
    th_high: Option<f64>,
    /// Max angle between gradient and ray, degrees [default: 30].
    #[arg(long)]
    alpha: Option<f64>,
    /// Number of sampling rays [default: 360].
    #[arg(long)]
    nr: Option<usize>,
    /// Minimum chain length in nodes [default: 2].
    #[arg(long = "min-chain-length")]
    min_chain_length: Option<usize>,
    /// Flat key=value settings file mirroring the flag names.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Detection annotation JSON.
    #[arg(long)]
    dt: PathBuf,
    /// Ground-truth annotation JSON.
    #[arg(long)]
    gt: PathBuf,
    /// Pith row (y) in image coordinates.
    #[arg(long)]
    cy: f64,
    /// Pith column (x) in image coordinates.
    #[arg(long)]
    cx: f64,
    /// Number of sampling rays.
    #[arg(long, default_value_t = 360)]
    nr: usize,
    /// Minimum percentage of detection nodes inside the matched ring's
    /// influence area.
    #[arg(long = "th-pre", default_value_t = 60.0)]
    th_pre: f64,
    /// Report path; `.json` gets the full report, anything else a CSV row.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Number of rings.
    #[arg(long, default_value_t = 10)]
    rings: usize,
    /// Harmonic deformation as a fraction of the local ring spacing.
    #[arg(long, default_value_t = 0.0)]
    deform: f64,
    /// Add a white crack wedge.
    #[arg(long)]
    crack: bool,
    /// Add a dark stain.
    #[arg(long)]
    stain: bool,
    /// Erase one ring boundary over this many degrees.
    #[arg(long, default_value_t = 0.0)]
    gap: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Square canvas side in pixels.
    #[arg(long, default_value_t = 1000)]
    size: u32,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Detect(args) => detect_cmd(&args),
        Command::Evaluate(args) => evaluate_cmd(&args),
        Command::Synth(args) => synth_cmd(&args),
    };
    std::process::exit(code);
}

fn fail(code: i32, msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: {msg}");
    code
}

/// Flat `key=value` lines; `#` starts a comment.
fn read_config(path: &Path) -> Result<HashMap<String, String>, String> {
    let text =
        std::fs::read_to_string(path).map_err(|e| format!("config {}: {e}", path.display()))?;
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("config {} line {}: expected key=value", path.display(), i + 1));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Command line beats config file beats default.
fn resolve<T: std::str::FromStr>(
    flag: Option<T>,
    config: &HashMap<String, String>,
    key: &str,
    default: T,
) -> Result<T, String> {
    if let Some(v) = flag {
        return Ok(v);
    }
    match config.get(key) {
        Some(raw) => raw.parse().map_err(|_| format!("config key '{key}': bad value '{raw}'")),
        None => Ok(default),
    }
}

struct ResolvedDetect {
    sigma: f64,
    th_low: f64,
    th_high: f64,
    alpha: f64,
    nr: usize,
    min_chain_length: usize,
    height: Option<u32>,
    width: Option<u32>,
}

fn resolve_detect(args: &DetectArgs) -> Result<ResolvedDetect, String> {
    let config = match &args.config {
        Some(path) => read_config(path)?,
        None => HashMap::new(),
    };
    let defaults = DetectParams::new(Point::new(1.0, 1.0));
    let opt_dim = |flag: Option<u32>, key: &str| -> Result<Option<u32>, String> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => config
                .get(key)
                .map(|raw| raw.parse().map_err(|_| format!("config key '{key}': bad value '{raw}'")))
                .transpose(),
        }
    };
    Ok(ResolvedDetect {
        sigma: resolve(args.sigma, &config, "sigma", defaults.sigma)?,
        th_low: resolve(args.th_low, &config, "th-low", defaults.th_low)?,
        th_high: resolve(args.th_high, &config, "th-high", defaults.th_high)?,
        alpha: resolve(args.alpha, &config, "alpha", defaults.alpha_deg)?,
        nr: resolve(args.nr, &config, "nr", defaults.nr)?,
        min_chain_length: resolve(
            args.min_chain_length,
            &config,
            "min-chain-length",
            defaults.min_chain_length,
        )?,
        height: opt_dim(args.height, "height")?,
        width: opt_dim(args.width, "width")?,
    })
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::PithOutOfBounds { .. } => EXIT_PITH,
        _ => EXIT_INVALID,
    }
}

fn detect_cmd(args: &DetectArgs) -> i32 {
    let resolved = match resolve_detect(args) {
        Ok(r) => r,
        Err(msg) => return fail(EXIT_INVALID, msg),
    };
    if let Err(e) = std::fs::create_dir_all(&args.output) {
        return fail(EXIT_INVALID, format!("output {}: {e}", args.output.display()));
    }
    match (&args.input, &args.batch) {
        (Some(input), None) => {
            let (Some(cy), Some(cx)) = (args.cy, args.cx) else {
                return fail(EXIT_INVALID, "--cy and --cx are required");
            };
            detect_one(input, cy, cx, &resolved, &args.output)
        }
        (None, Some(manifest)) => detect_batch(manifest, &resolved, &args.output),
        _ => fail(EXIT_INVALID, "give exactly one of --input or --batch"),
    }
}

fn detect_one(input: &Path, cy: f64, cx: f64, opts: &ResolvedDetect, output: &Path) -> i32 {
    let image = match image::open(input) {
        Ok(img) => img.to_rgb8(),
        Err(e) => return fail(EXIT_UNREADABLE, format!("{}: {e}", input.display())),
    };
    let params = DetectParams {
        pith: Point::new(cx, cy),
        height: opts.height,
        width: opts.width,
        sigma: opts.sigma,
        th_low: opts.th_low,
        th_high: opts.th_high,
        alpha_deg: opts.alpha,
        nr: opts.nr,
        min_chain_length: opts.min_chain_length,
    };
    let detection = match detect_tree_rings(&image, &params) {
        Ok(d) => d,
        Err(e) => return fail(exit_code_for(&e), format!("{}: {e}", input.display())),
    };
    match write_outputs(input, &image, &detection, output) {
        Ok(()) => {
            println!(
                "{}: {} rings in {:.2}s",
                input.display(),
                detection.rings.len(),
                detection.timings.total
            );
            0
        }
        Err(e) => fail(EXIT_INVALID, format!("{}: {e}", input.display())),
    }
}

fn write_outputs(
    input: &Path,
    image: &image::RgbImage,
    detection: &Detection,
    output: &Path,
) -> cstrd::Result<()> {
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    let file_name = input
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| stem.clone());

    let polygons = rings_to_polygons(&detection.rings, detection.scale_x, detection.scale_y);
    let doc = labelme_document(&polygons, &file_name, image.height(), image.width());
    write_labelme(&doc, &output.join(format!("{stem}.json")))?;

    let overlay = render_overlay(image, &polygons, None);
    overlay
        .save(output.join(format!("{stem}_overlay.png")))
        .map_err(Error::from)?;

    let t = &detection.timings;
    let log = format!(
        "preprocess {:.3}\ndevernay {:.3}\nedge_filter {:.3}\nsampling {:.3}\nconnect {:.3}\npostprocess {:.3}\ntotal {:.3}\n",
        t.preprocess, t.devernay, t.edge_filter, t.sampling, t.connect, t.postprocess, t.total
    );
    std::fs::write(output.join(format!("{stem}_timing.txt")), log)?;
    Ok(())
}

/// Rows are `path,cy,cx`; a header row is skipped. Images run one per
/// worker; a failed image is reported and the batch carries on.
fn detect_batch(manifest: &Path, opts: &ResolvedDetect, output: &Path) -> i32 {
    let text = match std::fs::read_to_string(manifest) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_INVALID, format!("{}: {e}", manifest.display())),
    };
    let mut jobs: Vec<(PathBuf, f64, f64)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = (fields.len() == 3)
            .then(|| Some((fields[1].parse::<f64>().ok()?, fields[2].parse::<f64>().ok()?)))
            .flatten();
        match parsed {
            Some((cy, cx)) => jobs.push((PathBuf::from(fields[0]), cy, cx)),
            None if i == 0 => continue, // header
            None => return fail(EXIT_INVALID, format!("manifest line {}: expected path,cy,cx", i + 1)),
        }
    }
    let threads = std::env::var("CSTRD_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => return fail(EXIT_INVALID, format!("worker pool: {e}")),
    };
    use rayon::prelude::*;
    let codes: Vec<i32> = pool.install(|| {
        jobs.par_iter()
            .map(|(path, cy, cx)| detect_one(path, *cy, *cx, opts, output))
            .collect()
    });
    codes.into_iter().max().unwrap_or(0)
}

fn load_rings(path: &Path, pith: Point, nr: usize, height: u32, width: u32) -> Result<Vec<RingPolyline>, String> {
    let doc = read_labelme(path).map_err(|e| format!("{}: {e}", path.display()))?;
    labelme_polygons(&doc)
        .iter()
        .map(|poly| {
            rasterize_gt_polygon(poly, pith, nr, height, width)
                .map_err(|e| format!("{}: {e}", path.display()))
        })
        .collect()
}

fn evaluate_cmd(args: &EvaluateArgs) -> i32 {
    let gt_doc = match read_labelme(&args.gt) {
        Ok(d) => d,
        Err(e) => return fail(EXIT_INVALID, format!("{}: {e}", args.gt.display())),
    };
    let (height, width) = (gt_doc.image_height, gt_doc.image_width);
    let pith = Point::new(args.cx, args.cy);
    let gt = match load_rings(&args.gt, pith, args.nr, height, width) {
        Ok(r) => r,
        Err(msg) => return fail(EXIT_INVALID, msg),
    };
    let dt = match load_rings(&args.dt, pith, args.nr, height, width) {
        Ok(r) => r,
        Err(msg) => return fail(EXIT_INVALID, msg),
    };
    let report = match evaluate(&dt, &gt, pith, height, width, args.th_pre) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_INVALID, e),
    };
    println!(
        "P={:.3} R={:.3} F={:.3} RMSE={:.3}",
        report.precision, report.recall, report.fscore, report.rmse
    );
    if let Some(path) = &args.report {
        let name = args
            .dt
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "detection".into());
        let result = if path.extension().is_some_and(|e| e == "json") {
            serde_json::to_string_pretty(&report)
                .map_err(Error::from)
                .and_then(|mut text| {
                    text.push('\n');
                    std::fs::write(path, text).map_err(Error::from)
                })
        } else {
            write_csv_report(path, &[ReportRow { name, report, time_sec: 0.0 }])
        };
        if let Err(e) = result {
            return fail(EXIT_INVALID, format!("{}: {e}", path.display()));
        }
    }
    0
}

/// Ring count must leave at least 20 px of spacing in the worst random
/// layout, otherwise the latewood bands of neighbouring rings blur into
/// each other and the disk stops being a usable oracle.
fn synth_capacity_ok(size: u32, rings: usize) -> bool {
    let span = (size as f64 / 2.0 - 30.0) - 0.10 * size as f64;
    rings <= 1 || span >= (rings - 1) as f64 * 20.0
}

fn synth_cmd(args: &SynthArgs) -> i32 {
    if args.rings == 0 {
        return fail(EXIT_INVALID, "--rings must be at least 1");
    }
    if !synth_capacity_ok(args.size, args.rings) {
        return fail(
            EXIT_INVALID,
            format!("{} rings do not fit a {} px canvas", args.rings, args.size),
        );
    }
    let mut spec = DiskSpec::random(args.seed, args.size, args.rings..=args.rings);
    spec.deform_fraction = args.deform;
    spec.perturbations = Perturbations {
        crack: args.crack,
        stain: args.stain,
        arc_gap_deg: args.gap,
    };
    let disk = match generate_disk(&spec) {
        Ok(d) => d,
        Err(e) => return fail(EXIT_INVALID, e),
    };
    if let Err(e) = std::fs::create_dir_all(&args.out) {
        return fail(EXIT_INVALID, format!("output {}: {e}", args.out.display()));
    }
    let stem = format!("disk_{:04}", args.seed);
    let image_name = format!("{stem}.png");
    if let Err(e) = disk.image.save(args.out.join(&image_name)) {
        return fail(EXIT_INVALID, format!("{image_name}: {e}"));
    }
    let doc = labelme_document(&disk.gt_polygons, &image_name, args.size, args.size);
    if let Err(e) = write_labelme(&doc, &args.out.join(format!("{stem}.json"))) {
        return fail(EXIT_INVALID, e);
    }
    println!(
        "{}: {} rings, pith ({:.1}, {:.1})",
        args.out.join(&image_name).display(),
        disk.gt_polygons.len(),
        disk.pith.y,
        disk.pith.x
    );
    0
}
