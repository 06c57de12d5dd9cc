//! Command-line front end behind the `mscanet` binary.
//!
//! Every command writes one JSON run manifest next to its outputs. Exit
//! codes: 0 success, 1 usage, 2 I/O, 3 validation, 4 numerical abort.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;
use sha1::{Digest, Sha1};

use crate::data::{self, generate_dataset, load_dataset, pnm, DatasetSpec};
use crate::density::DensityMap;
use crate::error::{config_err, Error, Result};
use crate::image::Image;
use crate::model::{load_model, Model, Variant};
use crate::train::{
    ablation_csv, ablation_matrix, evaluate, load_checkpoint, log_csv, predict_map, save_checkpoint, summarize,
    TrainConfig, Trainer, LOG_HEADER,
};

pub const THREADS_ENV: &str = "MSCA_THREADS";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "mscanet", version, about = "Crowd density estimation on synthetic scenes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with precomputed maps.
    Gendata(GendataArgs),
    /// Train one model variant.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Predict the density map of one image.
    Predict(PredictArgs),
    /// Render a density map as a heat image.
    Render(RenderArgs),
    /// Train all three variants for several seeds and compare them.
    Ablation(AblationArgs),
}

#[derive(Debug, Args)]
pub struct GendataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub scenes: usize,
    /// Image size as WxH.
    #[arg(long, default_value = "96x96", value_parser = parse_size)]
    pub size: (usize, usize),
    #[arg(long, default_value_t = 5)]
    pub heads_min: usize,
    #[arg(long, default_value_t = 40)]
    pub heads_max: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub clutter: f64,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long, default_value = "desk")]
    pub preset: String,
    /// Override a config field, e.g. `--set epochs=3` or `--set model.width_scale=0.25`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "full", value_parser = parse_variant)]
    pub ablation: Variant,
    #[arg(long)]
    pub out: PathBuf,
    /// Held-out split evaluated every `eval_every` epochs.
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Report path; per-image counts go to the same path with a `.csv` extension.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub map: PathBuf,
    /// `.ppm` gives the colour ramp; any other extension a gray PGM.
    #[arg(long)]
    pub out: PathBuf,
    /// Blend the heat map at 50% over this image.
    #[arg(long)]
    pub overlay: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblationArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub seeds: u64,
    #[command(flatten)]
    pub config: ConfigArgs,
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got '{s}'"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad dimension '{v}'"));
    Ok((p(w)?, p(h)?))
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    Variant::parse(s).map_err(|e| e.to_string())
}

/// Provenance record written next to a command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Git blob hash of the JSON config the command ran with.
    pub config_hash: String,
    pub config: Value,
}

/// SHA-1 over `blob <len>\0<bytes>`, as `git hash-object` computes it.
pub fn git_blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize) -> Result<Self> {
        let value = serde_json::to_value(config).map_err(|e| Error::Internal(e.to_string()))?;
        let text = serde_json::to_string(&value).map_err(|e| Error::Internal(e.to_string()))?;
        Ok(RunManifest {
            command: command.into(),
            preset: None,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            config_hash: git_blob_hash(text.as_bytes()),
            config: value,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Internal(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Manifest location for a single-file output.
fn manifest_beside(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(OsString::from).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// Applies dotted `key=value` overrides. Values are parsed as JSON and
/// fall back to plain strings.
pub fn apply_overrides(cfg: &TrainConfig, overrides: &[String]) -> Result<TrainConfig> {
    let mut root = serde_json::to_value(cfg).map_err(|e| Error::Internal(e.to_string()))?;
    for o in overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| config_err!("override '{o}' is not key=value"))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut node = &mut root;
        for part in key.split('.') {
            node = node
                .get_mut(part)
                .ok_or_else(|| config_err!("unknown config key '{key}'"))?;
        }
        *node = value;
    }
    let out: TrainConfig = serde_json::from_value(root).map_err(|e| config_err!("bad override: {e}"))?;
    out.validate()?;
    Ok(out)
}

fn build_config(args: &ConfigArgs, variant: Option<Variant>) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::preset(&args.preset)?;
    if let Some(v) = variant {
        cfg.model = cfg.model.with_variant(v);
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    apply_overrides(&cfg, &args.overrides)
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write(p: &Path, text: &str) -> Result<()> {
    std::fs::write(p, text).map_err(|e| Error::io(p, e))
}

fn dataset(dir: &Path, cfg: &TrainConfig) -> Result<Vec<data::Sample>> {
    if !dir.join(data::ANNOTATION_FILE).exists() {
        return Err(Error::io(
            dir.join(data::ANNOTATION_FILE),
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset annotation file not found"),
        ));
    }
    load_dataset(dir, cfg.kernel)
}

pub fn cmd_gendata(a: &GendataArgs) -> Result<()> {
    let spec = DatasetSpec {
        scenes: a.scenes,
        width: a.size.0,
        height: a.size.1,
        heads_min: a.heads_min,
        heads_max: a.heads_max,
        seed: a.seed,
        clutter_level: a.clutter,
        ..Default::default()
    };
    let samples = generate_dataset(&spec)?;
    data::write_dataset(&a.out, &samples)?;
    let mut m = RunManifest::new("gendata", &spec)?;
    m.seed = Some(a.seed);
    m.outputs = vec![a.out.clone()];
    m.write(&a.out.join(MANIFEST_FILE))?;
    println!("wrote {} scenes to {}", samples.len(), a.out.display());
    Ok(())
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = build_config(&a.config, Some(a.ablation))?;
    let train = dataset(&a.data, &cfg)?;
    let val = a.val.as_ref().map(|d| dataset(d, &cfg)).transpose()?;
    mkdir(&a.out)?;
    let mut trainer = match &a.resume {
        Some(p) => Trainer::<f32>::resume(cfg.clone(), load_checkpoint(p)?)?,
        None => Trainer::<f32>::new(cfg.clone())?,
    };
    let ck_path = a.out.join("checkpoint.msca");
    let log_path = a.out.join("log.csv");
    let mut rows = Vec::new();
    let result = trainer.fit(&train, val.as_deref(), |t, row| {
        rows.push(row.clone());
        println!("{}", row.csv_row());
        save_checkpoint(&t.checkpoint(), &ck_path)?;
        write(&log_path, &log_csv(&rows))
    });
    if let Err(e @ Error::Numerical { .. }) = &result {
        write(&a.out.join("abort.txt"), &format!("{e}\n"))?;
    }
    result?;
    if rows.is_empty() {
        write(&log_path, &format!("{LOG_HEADER}\n"))?;
    }
    save_checkpoint(&trainer.checkpoint(), &ck_path)?;
    let mut m = RunManifest::new("train", &cfg)?;
    m.preset = Some(a.config.preset.clone());
    m.seed = Some(cfg.seed);
    m.inputs = std::iter::once(a.data.clone()).chain(a.val.clone()).chain(a.resume.clone()).collect();
    m.outputs = vec![ck_path, log_path];
    m.write(&a.out.join(MANIFEST_FILE))
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let model: Model<f32> = load_model(&a.checkpoint)?;
    let samples = load_dataset(&a.data, Default::default())?;
    let report = evaluate(&model, &samples)?;
    let csv = a.out.with_extension("csv");
    report.write(&a.out, Some(&csv))?;
    print!("{}", report.to_text());
    let mut m = RunManifest::new("eval", model.config())?;
    m.inputs = vec![a.data.clone(), a.checkpoint.clone()];
    m.outputs = vec![a.out.clone(), csv];
    m.write(&manifest_beside(&a.out))
}

pub fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let model: Model<f32> = load_model(&a.checkpoint)?;
    let image = pnm::read_pnm(&a.image)?;
    let map = predict_map(&model, &image)?;
    data::dmap::write_density(&map, &a.out)?;
    println!("{}", map.sum());
    let mut m = RunManifest::new("predict", model.config())?;
    m.inputs = vec![a.image.clone(), a.checkpoint.clone()];
    m.outputs = vec![a.out.clone()];
    m.write(&manifest_beside(&a.out))
}

/// Heat ramp on `[0, 1]`: black, red, yellow, white at 0, 1/3, 2/3, 1.
pub fn heat(t: f64) -> [f64; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let seg = |lo: f64| ((t - lo) * 3.0).clamp(0.0, 1.0);
    [seg(0.0), seg(1.0 / 3.0), seg(2.0 / 3.0)]
}

/// Peak-normalised rendering of `map`, each cell repeated `stride` times
/// per axis. `colour` picks the RGB ramp over the gray level.
pub fn render_map(map: &DensityMap, colour: bool, overlay: Option<&Image>) -> Result<Image> {
    let s = map.stride.max(1);
    let (w, h) = (map.width * s, map.height * s);
    if let Some(img) = overlay {
        if (img.width, img.height) != (w, h) {
            return Err(Error::Validation(format!(
                "overlay is {}x{} but the map covers {w}x{h}",
                img.width, img.height
            )));
        }
    }
    let peak = map.max();
    let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
    let channels = if colour { 3 } else { 1 };
    let mut out = Image::zeros(w, h, channels);
    for y in 0..h {
        for x in 0..w {
            let t = map.at(x / s, y / s) * scale;
            let rgb = if colour { heat(t) } else { [t.clamp(0.0, 1.0); 3] };
            for c in 0..channels {
                let mut v = rgb[c];
                if let Some(img) = overlay {
                    let base = match (img.channels, channels) {
                        (1, _) => img.get(0, x, y),
                        (_, 3) => img.get(c, x, y),
                        _ => (img.get(0, x, y) + img.get(1, x, y) + img.get(2, x, y)) / 3.0,
                    };
                    v = 0.5 * v + 0.5 * base;
                }
                out.set(c, x, y, v);
            }
        }
    }
    Ok(out)
}

pub fn cmd_render(a: &RenderArgs) -> Result<()> {
    let map = data::dmap::read_density(&a.map)?;
    let overlay = a.overlay.as_ref().map(|p| pnm::read_pnm(p)).transpose()?;
    let colour = a.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
    let img = render_map(&map, colour, overlay.as_ref())?;
    pnm::write_pnm(&img, &a.out)?;
    #[derive(Serialize)]
    struct RenderConfig {
        colour: bool,
        overlay: bool,
    }
    let mut m = RunManifest::new(
        "render",
        &RenderConfig {
            colour,
            overlay: overlay.is_some(),
        },
    )?;
    m.inputs = std::iter::once(a.map.clone()).chain(a.overlay.clone()).collect();
    m.outputs = vec![a.out.clone()];
    m.write(&manifest_beside(&a.out))
}

pub fn cmd_ablation(a: &AblationArgs) -> Result<()> {
    let cfg = build_config(&a.config, None)?;
    let train = dataset(&a.data, &cfg)?;
    let test = dataset(&a.test, &cfg)?;
    mkdir(&a.out)?;
    let seeds: Vec<u64> = (0..a.seeds).map(|i| cfg.seed + i).collect();
    let runs = ablation_matrix(&cfg, &seeds, &train, &test, |r| {
        println!(
            "seed {} {:9} mae {:.4} psnr {:.3}",
            r.seed,
            r.variant.name(),
            r.report.mae,
            r.report.psnr
        );
    })?;
    let path = a.out.join("ablation.csv");
    write(&path, &ablation_csv(&runs)?)?;
    for s in summarize(&runs)? {
        println!("median {:9} mae {:.4} psnr {:.3}", s.variant.name(), s.mae, s.psnr);
    }
    let mut m = RunManifest::new("ablation", &cfg)?;
    m.preset = Some(a.config.preset.clone());
    m.seed = Some(cfg.seed);
    m.inputs = vec![a.data.clone(), a.test.clone()];
    m.outputs = vec![path];
    m.write(&a.out.join(MANIFEST_FILE))
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Gendata(a) => cmd_gendata(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Render(a) => cmd_render(a),
        Command::Ablation(a) => cmd_ablation(a),
    }
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .parse()
        .map_err(|_| config_err!("{THREADS_ENV} must be a positive integer, got '{v}'"))?;
    // a pool that was already built keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match init_threads().and_then(|_| dispatch(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
