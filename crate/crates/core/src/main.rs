use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use vessel_qca::metrics::{self, BceDice, ConfusionCounts, SegMetrics, DEFAULT_GAMMA};
use vessel_qca::phantom::{self, PhantomSpec, PhantomTruth};
use vessel_qca::pipeline::{self, DetectReport, ImageEval, SCHEMA_VERSION};
use vessel_qca::radius::{self, DEFAULT_MAX_RADIUS};
use vessel_qca::raster::{self, ProbMask, DEFAULT_THRESHOLD};
use vessel_qca::{analyze, DetectorConfig, Error, PipelineConfig, PixelPoint, Result};

#[derive(Parser)]
#[command(name = "vessel-qca", version, about = "Stenosis detection and grading on binary vessel masks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect and grade stenoses in one mask.
    Detect(DetectArgs),
    /// Run detection over a directory of masks and score it against annotations.
    Eval(EvalArgs),
    /// Segmentation metrics of a predicted mask against a truth mask.
    Metrics(MetricsArgs),
    /// Write a synthetic phantom mask and its truth.
    Phantom(PhantomArgs),
}

#[derive(Args, Clone)]
struct DetectorFlags {
    /// Foreground threshold on 8-bit intensity.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: u8,
    /// Minimum separation between reported stenoses, in pixels (0 disables clustering).
    #[arg(long, default_value_t = 8.0)]
    tau: f64,
    /// Branches with a smaller mean diameter are skipped.
    #[arg(long, default_value_t = 4.0)]
    min_diameter: f64,
    /// Largest circle tried by the radius search.
    #[arg(long, default_value_t = DEFAULT_MAX_RADIUS)]
    max_radius: u32,
    /// Lowest severity reported (never below the mild grade).
    #[arg(long, default_value_t = 0.25)]
    floor: f64,
    /// Use Euclidean distance-transform radii instead of the circle search.
    #[arg(long)]
    exact: bool,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

impl DetectorFlags {
    fn config(&self) -> Result<PipelineConfig> {
        let config = PipelineConfig {
            detector: DetectorConfig {
                min_mean_diameter: self.min_diameter,
                cluster_threshold_tau: self.tau,
                report_floor: self.floor,
            },
            max_radius: self.max_radius,
            exact: self.exact,
        };
        config.validate()?;
        if self.threads == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        Ok(config)
    }
}

#[derive(Args)]
struct DetectArgs {
    /// Binary vessel mask (PNG or PGM).
    mask: PathBuf,
    #[command(flatten)]
    flags: DetectorFlags,
    /// Write a color-coded overlay PNG here.
    #[arg(long)]
    overlay: Option<PathBuf>,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write skeleton.pgm, graph.json and profiles.csv into this directory.
    #[arg(long)]
    debug_dir: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory holding one mask per annotated image.
    pred_dir: PathBuf,
    /// Annotation JSON mapping image names to labeled points.
    annotations: PathBuf,
    /// Matching distance in pixels.
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    #[command(flatten)]
    flags: DetectorFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    pred: PathBuf,
    truth: PathBuf,
    /// Treat the prediction as 8-bit probabilities (value / 255) for the losses.
    #[arg(long)]
    prob: bool,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: u8,
    /// Weight of the cross-entropy term.
    #[arg(long, default_value_t = 1.0)]
    lambda1: f64,
    /// Weight of the Dice term.
    #[arg(long, default_value_t = 1.0)]
    lambda2: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PhantomArgs {
    /// Phantom spec JSON; overrides the generator flags.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Random single-tube phantom from this seed (default: a straight tube).
    #[arg(long)]
    seed: Option<u64>,
    /// Random branching tree instead of a single tube.
    #[arg(long)]
    tree: bool,
    #[arg(long, default_value_t = 3)]
    depth: u32,
    /// Keep random tubes straight and on a lattice direction.
    #[arg(long)]
    lattice: bool,
    #[arg(long, default_value_t = 800)]
    width: u32,
    #[arg(long, default_value_t = 800)]
    height: u32,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Base file name; defaults to a name derived from the generator.
    #[arg(long)]
    name: Option<String>,
}

/// Failure reported on standard error as one JSON line.
struct Failure {
    code: i32,
    kind: String,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: e.exit_code(), kind: e.kind().to_string(), message: e.to_string() }
    }
}

impl Failure {
    fn emit(&self) {
        #[derive(Serialize)]
        struct Line<'a> {
            error: &'a str,
            message: &'a str,
            exit_code: i32,
        }
        let line = Line { error: &self.kind, message: &self.message, exit_code: self.code };
        eprintln!("{}", serde_json::to_string(&line).expect("error line serializes"));
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("invalid arguments");
            let first = first.trim_start_matches("error: ");
            Failure { code: 3, kind: "usage".into(), message: first.to_string() }.emit();
            return ExitCode::from(3);
        }
    };
    let outcome = match cli.command {
        Command::Detect(args) => detect(args),
        Command::Eval(args) => eval(args),
        Command::Metrics(args) => metrics_cmd(args),
        Command::Phantom(args) => phantom_cmd(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            f.emit();
            ExitCode::from(f.code as u8)
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn emit_report(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        })
    }
}

fn detect(args: DetectArgs) -> Result<(), Failure> {
    let config = args.flags.config()?;
    require_file(&args.mask)?;
    let mask = raster::load_mask(&args.mask, args.flags.threshold)?;
    let analysis = analyze(&mask, &config, args.flags.threads)?;

    let image = args.mask.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let report = DetectReport::new(image, &mask, &config, &analysis);

    if let Some(path) = &args.overlay {
        let img = raster::render_overlay(&mask, &analysis.findings)?;
        raster::save_rgb_png(&img, path)?;
    }
    if let Some(dir) = &args.debug_dir {
        create_dir(dir)?;
        analysis.skeleton.mask().save_pgm(dir.join("skeleton.pgm"))?;
        write_text(&dir.join("graph.json"), &analysis.graph.to_json())?;
        write_text(&dir.join("profiles.csv"), &radius::profiles_to_csv(&analysis.profiles))?;
    }
    emit_report(args.out.as_deref(), &to_json(&report))?;
    Ok(())
}

/// `pred_dir/key`, or with `.png` / `.pgm` appended when `key` has no extension.
fn resolve_mask(dir: &Path, key: &str) -> Option<PathBuf> {
    let direct = dir.join(key);
    if direct.is_file() {
        return Some(direct);
    }
    if Path::new(key).extension().is_none() {
        for ext in ["png", "pgm"] {
            let p = dir.join(format!("{key}.{ext}"));
            if p.is_file() {
                return Some(p);
            }
        }
    }
    None
}

fn eval(args: EvalArgs) -> Result<(), Failure> {
    let config = args.flags.config()?;
    if !(args.gamma.is_finite() && args.gamma > 0.0) {
        return Err(Error::Config(format!("--gamma must be positive, got {}", args.gamma)).into());
    }
    if !args.pred_dir.is_dir() {
        return Err(Error::Io {
            path: args.pred_dir.clone(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        }
        .into());
    }
    let annotations = pipeline::load_annotations(&args.annotations)?;

    let mut jobs = Vec::new();
    let mut missing = Vec::new();
    for (key, labels) in &annotations {
        match resolve_mask(&args.pred_dir, key) {
            Some(path) => jobs.push((key, path, labels)),
            None => missing.push(key.clone()),
        }
    }

    let run = |(key, path, labels): &(&String, PathBuf, &Vec<phantom::AnnotationPoint>)| -> Result<ImageEval> {
        let mask = raster::load_mask(path, args.flags.threshold)?;
        let analysis = analyze(&mask, &config, 1)?;
        let predicted: Vec<PixelPoint> = analysis.findings.iter().map(|f| f.location).collect();
        Ok(ImageEval::new(key.as_str(), &predicted, labels, args.gamma))
    };
    let images: Vec<ImageEval> = if args.flags.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.flags.threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        pool.install(|| jobs.par_iter().map(run).collect::<Result<Vec<_>>>())?
    } else {
        jobs.iter().map(run).collect::<Result<Vec<_>>>()?
    };

    let report = pipeline::aggregate(images, missing, args.gamma);
    emit_report(args.out.as_deref(), &to_json(&report))?;
    if !report.missing.is_empty() {
        return Err(Failure {
            code: 2,
            kind: "missing_masks".into(),
            message: format!("no mask found for {} annotated image(s): {}", report.missing.len(), report.missing.join(", ")),
        });
    }
    Ok(())
}

#[derive(Serialize)]
struct MetricsReport {
    schema_version: u32,
    width: u32,
    height: u32,
    confusion: ConfusionCounts,
    #[serde(flatten)]
    seg: SegMetrics,
    #[serde(flatten)]
    losses: BceDice,
    prob: bool,
    undefined: Vec<&'static str>,
}

fn metrics_cmd(args: MetricsArgs) -> Result<(), Failure> {
    require_file(&args.pred)?;
    require_file(&args.truth)?;
    let pred = raster::load_mask(&args.pred, args.threshold)?;
    let truth = raster::load_mask(&args.truth, args.threshold)?;
    let confusion = metrics::confusion(&pred, &truth)?;
    let seg = metrics::seg_metrics(&confusion);
    let prob = if args.prob { raster::load_prob(&args.pred)? } else { ProbMask::from_mask(&pred) };
    let losses = metrics::bce_dice(&prob, &truth, args.lambda1, args.lambda2)?;
    let report = MetricsReport {
        schema_version: SCHEMA_VERSION,
        width: truth.width(),
        height: truth.height(),
        confusion,
        undefined: seg.undefined(),
        seg,
        losses,
        prob: args.prob,
    };
    emit_report(args.out.as_deref(), &to_json(&report))?;
    Ok(())
}

fn phantom_cmd(args: PhantomArgs) -> Result<(), Failure> {
    let (truth, default_name): (PhantomTruth, String) = if let Some(path) = &args.spec {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
        let spec = PhantomSpec::from_json(&text)?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "phantom".into());
        (phantom::generate(&spec)?, stem)
    } else if args.tree {
        let seed = args.seed.unwrap_or(0);
        (
            phantom::generate_tree(args.width, args.height, seed, args.depth)?,
            format!("tree_d{}_s{seed}", args.depth),
        )
    } else if let Some(seed) = args.seed {
        let spec = if args.lattice {
            PhantomSpec::lattice_tube(args.width, args.height, seed)
        } else {
            PhantomSpec::random_tube(args.width, args.height, seed)
        };
        (phantom::generate(&spec)?, format!("tube_s{seed}"))
    } else {
        (phantom::generate(&PhantomSpec::straight_tube(args.width, args.height))?, "straight".into())
    };
    let name = args.name.unwrap_or(default_name);
    if name.is_empty() || name.contains(['/', '\\']) {
        return Err(Error::Config(format!("invalid --name {name:?}")).into());
    }

    create_dir(&args.out)?;
    let png = format!("{name}.png");
    truth.mask.save_png(args.out.join(&png))?;
    write_text(&args.out.join(format!("{name}.truth.json")), &truth.to_json())?;

    // merge into the directory's annotation file so `eval` can consume it
    let ann_path = args.out.join("annotations.json");
    let mut annotations = if ann_path.is_file() { pipeline::load_annotations(&ann_path)? } else { Default::default() };
    annotations.insert(png, truth.annotation_points());
    write_text(&ann_path, &(pipeline::annotations_to_json(&annotations) + "\n"))?;
    Ok(())
}
