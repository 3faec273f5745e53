//! Command-line front end: `enhance`, `evaluate`, `phantom` and `profile`.
//!
//! Exit codes: 0 success, 2 usage, 3 I/O or unreadable data, 4 numeric or
//! contract violation.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{frangi, FrangiParams};
use crate::eigensym::Polarity;
use crate::error::{Error, Result};
use crate::evaluation::{mean_roc, profile, roc, write_mean_roc_csv, write_roc_csv, RocCurve};
use crate::imagecore::{load_image, save_image};
use crate::imagecore::Image;
use crate::mfat::{enhance, FatMode, FilterParams, ResponseMap, ResponseVariant};
use crate::phantom::{self, Phantom, DEFAULT_NOISE_VARIANCE, DEFAULT_SMOOTH_SIGMA};
use crate::scalespace::ScaleList;

pub const THREADS_ENV: &str = "CURVEFILT_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Mfat,
    Frangi,
}

/// Everything needed to replay an `enhance` run.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub method: Method,
    pub params: FilterParams,
    pub frangi: FrangiParams,
    /// Ground truth to score the output against; the AUC lands in the sidecar.
    pub ground_truth: Option<PathBuf>,
    /// Field-of-view mask for scoring.
    pub mask: Option<PathBuf>,
}

impl RunConfig {
    /// Reads JSON or TOML (by extension). A provenance sidecar is accepted
    /// too; its `config` entry is used.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |e: String| Error::param(format!("config {}: {e}", path.display()));
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml")) {
            return toml::from_str(&text).map_err(|e| bad(e.to_string()));
        }
        let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        if let Some(inner) = value.get_mut("config") {
            value = inner.take();
        }
        serde_json::from_value(value).map_err(|e| bad(e.to_string()))
    }

    fn apply(&mut self, f: &FilterArgs) {
        if let Some(m) = f.method {
            self.method = m;
        }
        if let Some(m) = f.mode {
            self.params.mode = m;
        }
        if let Some(s) = &f.sigmas {
            self.params.scales = s.clone();
            self.frangi.scales = s.clone();
        }
        if let Some(v) = f.tau_rho {
            self.params.tau_rho = v;
        }
        if let Some(v) = f.tau_nu {
            self.params.tau_nu = v;
        }
        if let Some(v) = f.delta {
            self.params.delta = v;
        }
        if let Some(p) = f.polarity {
            self.params.polarity = p;
            self.frangi.polarity = p;
        }
        if let Some(v) = f.variant {
            self.params.response_variant = v;
        }
        if f.no_scale_normalization {
            self.params.normalize_scale = false;
            self.frangi.normalize_scale = false;
        }
        if f.no_input_normalization {
            self.params.normalize_input = false;
            self.frangi.normalize_input = false;
        }
        if let Some(v) = f.alpha {
            self.frangi.alpha = v;
        }
        if let Some(v) = f.beta {
            self.frangi.beta = v;
        }
        if let Some(v) = f.c {
            self.frangi.c = Some(v);
        }
    }

    pub fn run_filter(&self, img: &Image) -> Result<ResponseMap> {
        match self.method {
            Method::Mfat => enhance(img, &self.params),
            Method::Frangi => frangi(img, &self.frangi),
        }
    }
}

/// Provenance sidecar written next to every `enhance` output.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Sidecar {
    pub tool: String,
    pub version: String,
    pub input_sha256: String,
    pub config: RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
}

#[derive(Parser, Debug)]
#[command(name = "curvefilt", version, about = "Curvilinear structure enhancement and evaluation")]
struct Cli {
    /// Worker threads (default: all cores, or $CURVEFILT_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Enhance an image or volume and write the response plus a provenance sidecar.
    Enhance(EnhanceArgs),
    /// ROC/AUC of responses against ground truth.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic phantom with ground truth and centerline masks.
    Phantom(PhantomArgs),
    /// Sample a response along a line segment.
    Profile(ProfileArgs),
}

fn parse_sigmas(s: &str) -> std::result::Result<ScaleList, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let nums: std::result::Result<Vec<f64>, _> = parts.iter().map(|p| p.trim().parse::<f64>()).collect();
    let nums = nums.map_err(|e| format!("'{s}': {e}"))?;
    match nums.as_slice() {
        [single] => ScaleList::new(vec![*single]),
        [min, step, max] => ScaleList::from_step(*min, *step, *max),
        _ => return Err(format!("'{s}' is not min:step:max")),
    }
    .map_err(|e| e.to_string())
}

fn parse_polarity(s: &str) -> std::result::Result<Polarity, String> {
    match s {
        "bright" | "bright-on-dark" => Ok(Polarity::BrightOnDark),
        "dark" | "dark-on-bright" => Ok(Polarity::DarkOnBright),
        _ => Err(format!("'{s}' is not bright or dark")),
    }
}

fn parse_mode(s: &str) -> std::result::Result<FatMode, String> {
    match s {
        "fat" => Ok(FatMode::Eigenvalue),
        "pfat" => Ok(FatMode::Probabilistic),
        _ => Err(format!("'{s}' is not fat or pfat")),
    }
}

fn parse_variant(s: &str) -> std::result::Result<ResponseVariant, String> {
    match s {
        "consistent" => Ok(ResponseVariant::Consistent),
        "literal" => Ok(ResponseVariant::Literal),
        _ => Err(format!("'{s}' is not consistent or literal")),
    }
}

/// Comma-separated coordinates.
#[derive(Clone, Debug, PartialEq)]
struct Point(Vec<f64>);

/// Image dimensions such as `256x256`.
#[derive(Clone, Debug, PartialEq)]
struct Dims(Vec<usize>);

fn parse_point(s: &str) -> std::result::Result<Point, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("'{s}': {e}")))
        .collect::<std::result::Result<_, _>>()
        .map(Point)
}

fn parse_dims(s: &str) -> std::result::Result<Dims, String> {
    s.split(['x', 'X', ','])
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("'{s}': {e}")))
        .collect::<std::result::Result<_, _>>()
        .map(Dims)
}

#[derive(Args, Debug, Default)]
struct FilterArgs {
    /// JSON or TOML run configuration (or a previous sidecar); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// fat or pfat.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<FatMode>,
    /// Scales as min:step:max (inclusive) or a single sigma.
    #[arg(long, value_parser = parse_sigmas)]
    sigmas: Option<ScaleList>,
    #[arg(long)]
    tau_rho: Option<f64>,
    #[arg(long)]
    tau_nu: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// bright (structures brighter than background) or dark.
    #[arg(long, value_parser = parse_polarity)]
    polarity: Option<Polarity>,
    /// 2D response cases: consistent or literal.
    #[arg(long, value_parser = parse_variant)]
    variant: Option<ResponseVariant>,
    #[arg(long)]
    no_scale_normalization: bool,
    #[arg(long)]
    no_input_normalization: bool,
    /// Frangi plate sensitivity.
    #[arg(long)]
    alpha: Option<f64>,
    /// Frangi blob sensitivity.
    #[arg(long)]
    beta: Option<f64>,
    /// Frangi structureness constant.
    #[arg(long)]
    c: Option<f64>,
}

#[derive(Args, Debug)]
struct EnhanceArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output image; the sidecar goes next to it with a .json extension.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    #[arg(long)]
    mask: Option<PathBuf>,
    #[command(flatten)]
    filter: FilterArgs,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Precomputed response maps, one per ground truth.
    #[arg(long, num_args = 1.., conflicts_with = "image")]
    response: Vec<PathBuf>,
    /// Raw images to enhance before scoring, one per ground truth.
    #[arg(long, num_args = 1..)]
    image: Vec<PathBuf>,
    #[arg(long, num_args = 1.., required = true)]
    gt: Vec<PathBuf>,
    /// Field-of-view masks; one shared mask or one per image.
    #[arg(long, num_args = 1..)]
    mask: Vec<PathBuf>,
    /// Directory for per-image ROC CSVs, summary.csv and mean_roc.csv.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    filter: FilterArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PhantomKind {
    Tube,
    Yjunction,
    Cross,
    Disk,
    Tree2d,
    Tree3d,
}

#[derive(Args, Debug)]
struct PhantomArgs {
    #[arg(long, value_enum)]
    kind: PhantomKind,
    /// Dimensions, slowest axis first, e.g. 256x256 or 64x64x64.
    #[arg(long, value_parser = parse_dims)]
    dims: Dims,
    #[arg(long, default_value_t = 4.0)]
    width: f64,
    /// Tube orientation, or branch angle for yjunction (default 120).
    #[arg(long)]
    angle: Option<f64>,
    /// Disk radius.
    #[arg(long, default_value_t = 8.0)]
    radius: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 7)]
    branches: usize,
    #[arg(long, default_value_t = 1.5)]
    radius_min: f64,
    #[arg(long, default_value_t = 3.0)]
    radius_max: f64,
    #[arg(long, default_value_t = DEFAULT_NOISE_VARIANCE)]
    noise_variance: f64,
    #[arg(long, default_value_t = DEFAULT_SMOOTH_SIGMA)]
    smooth_sigma: f64,
    /// Skip noise and smoothing.
    #[arg(long)]
    clean: bool,
    /// Image path; masks and descriptor are written beside it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ProfileArgs {
    #[arg(long)]
    input: PathBuf,
    /// Start point in index coordinates, slowest axis first, comma separated.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    start: Point,
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    end: Point,
    #[arg(long, default_value_t = 101)]
    samples: usize,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. }
        | Error::Format { .. }
        | Error::UnsupportedBitDepth(_)
        | Error::ColorImage(_)
        | Error::UnsupportedFormat(_) => EXIT_IO,
        Error::InvalidParameter(_) => EXIT_USAGE,
        Error::DimensionMismatch { .. } | Error::Degenerate(_) => EXIT_NUMERIC,
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let threads = match cli.threads {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) => Some(n),
                Err(_) => {
                    eprintln!("error: {THREADS_ENV}='{v}' is not a thread count");
                    return EXIT_USAGE;
                }
            },
            Err(_) => None,
        },
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            eprintln!("error: thread count must be at least 1");
            return EXIT_USAGE;
        }
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let result = pool.install(|| match &cli.command {
        Command::Enhance(a) => cmd_enhance(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Phantom(a) => cmd_phantom(a),
        Command::Profile(a) => cmd_profile(a),
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn resolve_config(filter: &FilterArgs) -> Result<RunConfig> {
    let mut cfg = match &filter.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(filter);
    Ok(cfg)
}

/// Files `save_image` produces for `path`.
fn written_files(path: &Path) -> Vec<PathBuf> {
    let mut files = vec![path.to_path_buf()];
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("raw")) {
        files.push(path.with_extension("hdr"));
    }
    files
}

fn cmd_enhance(a: &EnhanceArgs) -> Result<()> {
    let mut cfg = resolve_config(&a.filter)?;
    if a.input.is_some() {
        cfg.input = a.input.clone();
    }
    if a.out.is_some() {
        cfg.output = a.out.clone();
    }
    if a.ground_truth.is_some() {
        cfg.ground_truth = a.ground_truth.clone();
    }
    if a.mask.is_some() {
        cfg.mask = a.mask.clone();
    }
    let input = cfg.input.clone().ok_or_else(|| Error::param("no input given (--input)"))?;
    let output = cfg.output.clone().ok_or_else(|| Error::param("no output given (--out)"))?;
    if output.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        return Err(Error::param("output must be an image; the .json sidecar is written beside it"));
    }
    let sidecar_path = output.with_extension("json");

    let img = load_image(&input, None)?;
    let checksum = sha256_file(&input)?;
    let response = cfg.run_filter(&img)?;
    let auc = match &cfg.ground_truth {
        Some(gt_path) => {
            let gt = load_image(gt_path, None)?;
            let mask = cfg.mask.as_deref().map(|m| load_image(m, None)).transpose()?;
            Some(roc(&response, &gt, mask.as_ref())?.auc)
        }
        None => None,
    };
    let sidecar = Sidecar {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        input_sha256: checksum,
        config: cfg,
        auc,
    };
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");

    let written = save_image(&response.to_image(), &output)
        .and_then(|_| std::fs::write(&sidecar_path, json + "\n").map_err(|e| Error::io(&sidecar_path, e)));
    if let Err(e) = written {
        for f in written_files(&output).into_iter().chain([sidecar_path]) {
            let _ = std::fs::remove_file(f);
        }
        return Err(e);
    }
    if let Some(v) = auc {
        println!("AUC {v:.6}");
    }
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned())
}

fn create_file(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let sources = if a.response.is_empty() { &a.image } else { &a.response };
    if sources.is_empty() {
        return Err(Error::param("give --response maps or --image inputs"));
    }
    if sources.len() != a.gt.len() {
        return Err(Error::param(format!(
            "{} inputs but {} ground truths",
            sources.len(),
            a.gt.len()
        )));
    }
    if !(a.mask.is_empty() || a.mask.len() == 1 || a.mask.len() == sources.len()) {
        return Err(Error::param("give one shared --mask or one per input"));
    }
    let cfg = resolve_config(&a.filter)?;
    let mut curves: Vec<(String, RocCurve)> = Vec::new();
    for (i, (src, gt_path)) in sources.iter().zip(&a.gt).enumerate() {
        let loaded = load_image(src, None)?;
        let response = if a.response.is_empty() {
            cfg.run_filter(&loaded)?
        } else {
            ResponseMap::from_image(&loaded, src.display().to_string())?
        };
        let gt = load_image(gt_path, None)?;
        let mask = match a.mask.len() {
            0 => None,
            1 => Some(load_image(&a.mask[0], None)?),
            _ => Some(load_image(&a.mask[i], None)?),
        };
        let curve = roc(&response, &gt, mask.as_ref())?;
        println!("{}\tAUC {:.6}", src.display(), curve.auc);
        curves.push((stem(src), curve));
    }
    let mean = mean_roc(&curves.iter().map(|c| c.1.clone()).collect::<Vec<_>>())?;
    if curves.len() > 1 {
        let mean_auc = curves.iter().map(|c| c.1.auc).sum::<f64>() / curves.len() as f64;
        println!("mean\tAUC {mean_auc:.6}");
    }
    if let Some(dir) = &a.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let summary_path = dir.join("summary.csv");
        let mut summary = create_file(&summary_path)?;
        writeln!(summary, "image,n_pos,n_neg,auc,masked").map_err(io_err(&summary_path))?;
        for (name, c) in &curves {
            let path = dir.join(format!("{name}_roc.csv"));
            write_roc_csv(c, create_file(&path)?).map_err(io_err(&path))?;
            writeln!(summary, "{name},{},{},{:.12},{}", c.n_pos, c.n_neg, c.auc, !a.mask.is_empty())
                .map_err(io_err(&summary_path))?;
        }
        summary.flush().map_err(io_err(&summary_path))?;
        let mean_path = dir.join("mean_roc.csv");
        write_mean_roc_csv(&mean, create_file(&mean_path)?).map_err(io_err(&mean_path))?;
    }
    Ok(())
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn sibling(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    path.with_file_name(format!("{}{suffix}.{ext}", stem(path)))
}

fn build_phantom(a: &PhantomArgs) -> Result<Phantom> {
    let dims = &a.dims.0;
    match a.kind {
        PhantomKind::Tube => phantom::tube_2d(dims, a.width, a.angle.unwrap_or(0.0)),
        PhantomKind::Yjunction => phantom::yjunction_2d(dims, a.width, a.angle.unwrap_or(120.0)),
        PhantomKind::Cross => phantom::cross_2d(dims, a.width),
        PhantomKind::Disk => phantom::disk_2d(dims, a.radius),
        PhantomKind::Tree2d => phantom::tree_2d(dims, a.seed, a.branches, (a.radius_min, a.radius_max)),
        PhantomKind::Tree3d => phantom::tree_3d(dims, a.seed, a.branches, (a.radius_min, a.radius_max)),
    }
}

fn cmd_phantom(a: &PhantomArgs) -> Result<()> {
    let mut p = build_phantom(a)?;
    if !a.clean {
        p = phantom::degrade(&p, a.noise_variance, a.smooth_sigma, a.seed)?;
    }
    let ext = a
        .out
        .extension()
        .map_or_else(|| "nrrd".into(), |e| e.to_string_lossy().into_owned());
    let gt_path = sibling(&a.out, "_gt", &ext);
    let center_path = sibling(&a.out, "_centerline", &ext);
    let desc_path = a.out.with_extension("json");
    save_image(&p.image, &a.out)?;
    save_image(&p.ground_truth, &gt_path)?;
    save_image(&p.centerline, &center_path)?;
    let json = serde_json::to_string_pretty(&p.descriptor).expect("descriptor serializes");
    std::fs::write(&desc_path, json + "\n").map_err(|e| Error::io(&desc_path, e))?;
    Ok(())
}

fn cmd_profile(a: &ProfileArgs) -> Result<()> {
    let img = load_image(&a.input, None)?;
    let response = ResponseMap::from_image(&img, a.input.display().to_string())?;
    let (start, end) = (&a.start.0, &a.end.0);
    let values = profile(&response, start, end, a.samples)?;
    let mut text = String::from("t");
    for k in 0..start.len() {
        text.push_str(&format!(",p{k}"));
    }
    text.push_str(",value\n");
    for (s, v) in values.iter().enumerate() {
        let t = if a.samples == 1 { 0.0 } else { s as f64 / (a.samples - 1) as f64 };
        text.push_str(&format!("{t}"));
        for (x, y) in start.iter().zip(end) {
            text.push_str(&format!(",{}", x + t * (y - x)));
        }
        text.push_str(&format!(",{v}\n"));
    }
    match &a.out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
