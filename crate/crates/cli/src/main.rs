//! `shog` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use shog::bench::{bench_corpus, summarize, write_rows_csv, write_summary_csv, BenchConfig};
use shog::config::PipelineConfig;
use shog::dp::{Solver, SplitScheme};
use shog::hog::gradient_field;
use shog::model::{LinearModel, Stage, TrainConfig};
use shog::pipeline::{
    eval_detection, eval_segmentation, match_greedy, parse_detections, prescreen_field,
    segment_detailed, Detector, RayGeometry,
};
use shog::synth::{load_corpus, write_corpus, Manifest, PhantomSpec, Truth};
use shog::training::{
    boundary_samples, classify_samples, prescreen_samples, AnnotatedImage, SampleConfig,
};
use shog::{ContourInstance, GrayImage};

/// Exit status for unreadable or missing inputs.
const EXIT_INPUT: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "shog",
    version,
    about = "Round-object detection with exact contour segmentation"
)]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run all three stages on an image and write detections as JSON lines.
    Detect(DetectArgs),
    /// Train one stage from a phantom corpus manifest.
    Train(TrainArgs),
    /// Segment a single candidate and print its contour as JSON.
    Segment(SegmentArgs),
    /// Generate a phantom corpus with ground truth and a manifest.
    GenPhantoms(GenArgs),
    /// Benchmark the contour solvers on a corpus of instance files.
    BenchSolvers(BenchArgs),
    /// Score detections against ground truth.
    Eval(EvalArgs),
    /// Write likeliness tables at the truth centres or candidates of a corpus.
    ExportInstances(ExportArgs),
}

#[derive(Debug, Args)]
struct PipelineFlags {
    /// TOML file with pipeline parameters; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Classification threshold.
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<f64>,
    /// Pre-screening threshold.
    #[arg(long, allow_hyphen_values = true)]
    theta_pre: Option<f64>,
    /// Split scheme of the contour solver: half, max or adap.
    #[arg(long)]
    scheme: Option<SplitScheme>,
    /// Sliding-window stride in pixels.
    #[arg(long)]
    stride: Option<usize>,
}

impl PipelineFlags {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = read_input(path)?;
                PipelineConfig::from_toml_str(&text)
                    .with_context(|| format!("config {}", path.display()))?
            }
            None => PipelineConfig::default(),
        };
        if let Some(t) = self.theta {
            cfg.theta_cls = t;
        }
        if let Some(t) = self.theta_pre {
            cfg.theta_pre = t;
        }
        if let Some(s) = self.scheme {
            cfg.scheme = s;
        }
        if let Some(s) = self.stride {
            cfg.stride = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    prescreen: PathBuf,
    #[arg(long)]
    boundary: PathBuf,
    #[arg(long)]
    classify: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// prescreen, boundary or classify.
    #[arg(long)]
    stage: Stage,
    /// Boundary model used to segment samples; required for `classify`.
    #[arg(long)]
    boundary: Option<PathBuf>,
    #[arg(long = "c", default_value_t = shog::config::DEFAULT_C)]
    c: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().restarts)]
    restarts: usize,
    #[arg(long, default_value_t = SampleConfig::default().negatives_per_image)]
    negatives_per_image: usize,
    #[arg(long, short)]
    output: PathBuf,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

#[derive(Debug, Args)]
struct SegmentArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    boundary: PathBuf,
    #[arg(long)]
    cx: f64,
    #[arg(long)]
    cy: f64,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    objects: Option<usize>,
    #[arg(long)]
    distractors: Option<usize>,
    #[arg(long)]
    radius_min: Option<f64>,
    #[arg(long)]
    radius_max: Option<f64>,
    #[arg(long)]
    capsule_probability: Option<f64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    perturbation: Option<f64>,
    #[arg(long)]
    offset_range: Option<f64>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Instance JSON files, or directories scanned for `*.json`.
    #[arg(required = true)]
    corpus: Vec<PathBuf>,
    #[arg(long, default_value_t = BenchConfig::default().repetitions)]
    repetitions: usize,
    #[arg(long, default_value_t = BenchConfig::default().rounds)]
    rounds: usize,
    /// Per-(instance, solver) CSV.
    #[arg(long, short)]
    output: PathBuf,
    /// Per-solver summary CSV.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value_t = shog::config::DEFAULT_MATCH_RADIUS)]
    match_radius: f64,
    /// Also count rejected detections.
    #[arg(long)]
    all: bool,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    boundary: PathBuf,
    /// Export tables at pre-screening candidates instead of truth centres.
    #[arg(long)]
    prescreen: Option<PathBuf>,
    #[arg(long, short)]
    out: PathBuf,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

/// Error raised when an input cannot be read.
#[derive(Debug)]
struct InputError(String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(InputError(format!("no such file: {}", path.display())).into());
    }
    Ok(())
}

fn read_input(path: &Path) -> Result<String> {
    require_file(path)?;
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_model(path: &Path, stage: Stage) -> Result<LinearModel> {
    require_file(path)?;
    let model = LinearModel::load(path).with_context(|| format!("model {}", path.display()))?;
    model.expect_stage(stage)?;
    Ok(model)
}

fn load_image(path: &Path) -> Result<GrayImage> {
    require_file(path)?;
    GrayImage::load(path).with_context(|| format!("image {}", path.display()))
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn detect(args: &DetectArgs) -> Result<()> {
    let cfg = args.pipeline.resolve()?;
    let prescreen = load_model(&args.prescreen, Stage::Prescreen)?;
    let boundary = load_model(&args.boundary, Stage::Boundary)?;
    let classify = load_model(&args.classify, Stage::Classify)?;
    let image = load_image(&args.image)?;
    if image.width() < shog::hog::RHOG_WINDOW || image.height() < shog::hog::RHOG_WINDOW {
        eprintln!(
            "warning: {}x{} image is smaller than one detection window",
            image.width(),
            image.height()
        );
    }
    let detector = Detector::new(cfg, prescreen, boundary, classify)?;
    let detections = detector.detect(&image)?;
    let mut out = String::new();
    for d in &detections {
        out.push_str(&d.to_json_line());
        out.push('\n');
    }
    write_output(&args.output, out.as_bytes())?;
    let accepted = detections.iter().filter(|d| d.accepted).count();
    eprintln!("{} candidates, {accepted} accepted", detections.len());
    Ok(())
}

fn load_annotated(manifest: &Path) -> Result<Vec<AnnotatedImage>> {
    require_file(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    load_corpus(manifest)?
        .into_iter()
        .map(|(img, truth)| Ok(AnnotatedImage::from_truth(img, &truth, base)?))
        .collect()
}

fn train(args: &TrainArgs) -> Result<()> {
    let cfg = args.pipeline.resolve()?;
    let boundary = match (args.stage, &args.boundary) {
        (Stage::Classify, Some(p)) => Some(load_model(p, Stage::Boundary)?),
        (Stage::Classify, None) => bail!("--boundary is required for the classify stage"),
        _ => None,
    };
    let set = load_annotated(&args.manifest)?;
    let samples = SampleConfig {
        negatives_per_image: args.negatives_per_image,
        seed: args.seed,
        ..SampleConfig::default()
    };
    let train_cfg = TrainConfig {
        c: args.c,
        epochs: args.epochs,
        restarts: args.restarts,
        seed: args.seed,
    };
    let geom = RayGeometry::from_config(&cfg);
    let data = match args.stage {
        Stage::Prescreen => prescreen_samples(&set, &samples)?,
        Stage::Boundary => boundary_samples(&set, &geom)?,
        Stage::Classify => classify_samples(
            &set,
            &samples,
            boundary.as_ref().expect("checked above"),
            &geom,
            cfg.scheme,
        )?,
    };
    eprintln!(
        "{}: {} positives, {} negatives",
        args.stage,
        data.positives.len(),
        data.negatives.len()
    );
    let model = data.train(args.stage, &train_cfg)?;
    write_output(&args.output, model.to_json_string().as_bytes())
}

#[derive(Serialize)]
struct SegmentOutput {
    cx: f64,
    cy: f64,
    radii: Vec<f64>,
    p: Vec<usize>,
    objective: f64,
    n_dp: usize,
}

fn segment_cmd(args: &SegmentArgs) -> Result<()> {
    let cfg = args.pipeline.resolve()?;
    let model = load_model(&args.boundary, Stage::Boundary)?;
    let image = load_image(&args.image)?;
    let field = gradient_field(&image)?;
    let geom = RayGeometry::from_config(&cfg);
    let seg = segment_detailed(&field, (args.cx, args.cy), &model, &geom, cfg.scheme)?;
    let out = SegmentOutput {
        cx: args.cx,
        cy: args.cy,
        radii: seg.radii,
        p: seg.solution.p,
        objective: seg.solution.objective,
        n_dp: seg.stats.n_dp,
    };
    println!("{}", serde_json::to_string(&out)?);
    Ok(())
}

fn gen_phantoms(args: &GenArgs) -> Result<()> {
    let d = PhantomSpec::default();
    let spec = PhantomSpec {
        width: args.width.unwrap_or(d.width),
        height: args.height.unwrap_or(d.height),
        objects: args.objects.unwrap_or(d.objects),
        distractors: args.distractors.unwrap_or(d.distractors),
        radius_min: args.radius_min.unwrap_or(d.radius_min),
        radius_max: args.radius_max.unwrap_or(d.radius_max),
        capsule_probability: args.capsule_probability.unwrap_or(d.capsule_probability),
        noise_sigma: args.noise_sigma.unwrap_or(d.noise_sigma),
        perturbation: args.perturbation.unwrap_or(d.perturbation),
        offset_range: args.offset_range.unwrap_or(d.offset_range),
        seed: args.seed,
    };
    spec.validate()?;
    // Generate everything before touching the output directory.
    shog::synth::generate_corpus(&spec, args.count)?;
    let manifest = write_corpus(&spec, args.count, &args.out)?;
    eprintln!("wrote {}", manifest.display());
    Ok(())
}

fn collect_instances(paths: &[PathBuf]) -> Result<Vec<(String, ContourInstance)>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            require_file(p)?;
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        bail!("benchmark corpus is empty");
    }
    files
        .iter()
        .map(|f| {
            let name = f
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let inst =
                ContourInstance::load(f).with_context(|| format!("instance {}", f.display()))?;
            Ok((name, inst))
        })
        .collect()
}

fn bench(args: &BenchArgs) -> Result<()> {
    let corpus = collect_instances(&args.corpus)?;
    let cfg = BenchConfig {
        repetitions: args.repetitions,
        rounds: args.rounds,
    };
    // Timing runs on the calling thread only.
    let rows = bench_corpus(&corpus, &Solver::ALL, &cfg)?;
    let summary = summarize(&rows);
    let mut buf = Vec::new();
    write_rows_csv(&mut buf, &rows)?;
    write_output(&args.output, &buf)?;
    let mut sbuf = Vec::new();
    write_summary_csv(&mut sbuf, &summary)?;
    if let Some(path) = &args.summary {
        write_output(path, &sbuf)?;
    }
    print!("{}", String::from_utf8(sbuf)?);
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput {
    detection: shog::pipeline::DetectionMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    segmentation: Option<SegSummary>,
}

#[derive(Serialize)]
struct SegSummary {
    objects: usize,
    mean_f_measure: f64,
    tpa: usize,
    fpa: usize,
    fna: usize,
}

fn eval(args: &EvalArgs) -> Result<()> {
    let records = parse_detections(&read_input(&args.detections)?)?;
    let truth = Truth::from_json_str(&read_input(&args.truth)?)?;
    let kept: Vec<_> = records.iter().filter(|r| args.all || r.accepted).collect();
    let centers: Vec<[f64; 2]> = kept.iter().map(|r| [r.cx as f64, r.cy as f64]).collect();
    let detection = eval_detection(&centers, &truth.centers, args.match_radius);

    let base = args.truth.parent().unwrap_or(Path::new("."));
    let segmentation = match truth.load_masks(base)? {
        None => None,
        Some(masks) => {
            let pairs = match_greedy(&centers, &truth.centers, args.match_radius);
            let (mut tpa, mut fpa, mut fna, mut fsum) = (0, 0, 0, 0.0);
            for &(i, j) in &pairs {
                let m = &masks[j];
                let mask: Vec<bool> = m.data().iter().map(|&v| v != 0).collect();
                let s = eval_segmentation(
                    (kept[i].cx as f64, kept[i].cy as f64),
                    &kept[i].radii,
                    &mask,
                    m.width(),
                    m.height(),
                )?;
                tpa += s.tpa;
                fpa += s.fpa;
                fna += s.fna;
                fsum += s.f_measure;
            }
            Some(SegSummary {
                objects: pairs.len(),
                mean_f_measure: if pairs.is_empty() {
                    0.0
                } else {
                    fsum / pairs.len() as f64
                },
                tpa,
                fpa,
                fna,
            })
        }
    };
    let out = EvalOutput {
        detection,
        segmentation,
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn export_instances(args: &ExportArgs) -> Result<()> {
    let cfg = args.pipeline.resolve()?;
    let model = load_model(&args.boundary, Stage::Boundary)?;
    let pre = match &args.prescreen {
        Some(path) => Some(load_model(path, Stage::Prescreen)?),
        None => None,
    };
    require_file(&args.manifest)?;
    let manifest = Manifest::load(&args.manifest)?;
    let corpus = load_corpus(&args.manifest)?;
    let geom = RayGeometry::from_config(&cfg);
    let mut outputs = Vec::new();
    for (entry, (img, truth)) in manifest.entries.iter().zip(&corpus) {
        let field = gradient_field(img)?;
        let stem = Path::new(&entry.image)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let centers: Vec<(f64, f64)> = match &pre {
            Some(pre) => prescreen_field(&field, pre, cfg.stride, cfg.theta_pre, cfg.nms_radius)?
                .iter()
                .map(|c| c.center())
                .collect(),
            None => truth
                .centers
                .iter()
                .map(|c| (c[0].round(), c[1].round()))
                .collect(),
        };
        for (k, &center) in centers.iter().enumerate() {
            let inst = shog::pipeline::build_likeliness_table(&field, center, &model, &geom)?;
            outputs.push((format!("{stem}_{k:02}.json"), inst));
        }
    }
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    for (name, inst) in &outputs {
        inst.save(args.out.join(name))?;
    }
    eprintln!("wrote {} instances", outputs.len());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .context("configuring worker pool")?;
    }
    match &cli.command {
        Command::Detect(a) => detect(a),
        Command::Train(a) => train(a),
        Command::Segment(a) => segment_cmd(a),
        Command::GenPhantoms(a) => gen_phantoms(a),
        Command::BenchSolvers(a) => bench(a),
        Command::Eval(a) => eval(a),
        Command::ExportInstances(a) => export_instances(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<InputError>().is_some() {
                ExitCode::from(EXIT_INPUT)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
