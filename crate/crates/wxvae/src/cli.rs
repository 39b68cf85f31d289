//! The `wxvae` command line.
//!
//! Every flag may also come from a `key=value` config file (`--config`, or the
//! file named by `WXVAE_CONFIG`); flags win over the file, the file wins over
//! built-in defaults. Each subcommand that writes files also writes
//! `<output>.manifest` listing the resolved settings and file digests.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use wxvae_core::data::{
    gen_synthetic_monsoon, normalize, split_train_test, window_samples, MonsoonGenConfig, Role,
    WindowConfig,
};
use wxvae_core::gradcheck::{check_vae, toy_config, GradCheckConfig};
use wxvae_core::model::{ModelConfig, OutputActivation};
use wxvae_core::qq::{
    qq_curve, qq_divergence, reference_extremes, Direction, ExtremeRefSpec, DEFAULT_N_PROBS,
};
use wxvae_core::sampler::{synthesize, SamplerConfig};
use wxvae_core::train::{default_beta, train_with, Checkpoint, TrainConfig, TrainHistory};

use crate::config::Settings;
use crate::error::{Error, Result};
use crate::format::{
    load_checkpoint, load_cubes, load_grid, save_checkpoint, save_cubes, save_grid, sha256_file,
    write_atomic,
};
use crate::manifest::{manifest_path, FileDigest, RunManifest};
use crate::provenance::{sidecar_path, ProvenanceRecord};
use crate::qq_io::emit_qq;

#[derive(Parser, Debug)]
#[command(
    name = "wxvae",
    version,
    about = "Controllable precipitation-field synthesis with a 3D convolutional VAE"
)]
pub struct Cli {
    /// key=value file supplying any flag; explicit flags take precedence
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic monsoon grid series
    GenData(GenDataArgs),
    /// Cut windows from a grid series, split them and normalize the training part
    Prepare(PrepareArgs),
    /// Train the VAE on prepared training cubes
    Train(TrainArgs),
    /// Draw latents from a chosen locus and decode them into fields
    Synth(SynthArgs),
    /// Distributional comparisons
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Finite-difference check of every model gradient on a toy configuration
    Gradcheck(GradcheckArgs),
}

#[derive(Subcommand, Debug)]
pub enum EvalCommand {
    /// QQ curve between the pooled pixels of two cube files
    Qq(QqArgs),
    /// Top or bottom fraction of cubes ranked by mean precipitation
    Extremes(ExtremesArgs),
}

#[derive(Args, Debug, Default)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub days: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    /// zero-based day of year of the first day
    #[arg(long)]
    pub start_day: Option<usize>,
    #[arg(long)]
    pub p0: Option<f64>,
    #[arg(long)]
    pub p1: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub theta0: Option<f64>,
    #[arg(long)]
    pub theta1: Option<f64>,
    #[arg(long)]
    pub smoothing_radius: Option<usize>,
    #[arg(long)]
    pub spatial_log_sigma: Option<f64>,
    #[arg(long)]
    pub spatial_persistence: Option<f64>,
    #[arg(long)]
    pub storm_block_days: Option<usize>,
    #[arg(long)]
    pub storm_log_sigma: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct PrepareArgs {
    /// WXGRID01 input
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long)]
    pub train_out: Option<PathBuf>,
    #[arg(long)]
    pub test_out: Option<PathBuf>,
    /// paper or desk defaults for the window geometry
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub window: Option<usize>,
    /// first day of year a window may cover
    #[arg(long)]
    pub day_lo: Option<usize>,
    /// last day of year a window may cover
    #[arg(long)]
    pub day_hi: Option<usize>,
    #[arg(long)]
    pub boxes: Option<usize>,
    #[arg(long)]
    pub box_h: Option<usize>,
    #[arg(long)]
    pub box_w: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub resize_h: Option<usize>,
    #[arg(long)]
    pub resize_w: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
}

#[derive(Args, Debug, Default)]
pub struct TrainArgs {
    /// normalized WXCUBE01 training cubes
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// checkpoint to write
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// per-epoch CSV
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// paper or desk defaults for the architecture
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub warmup: Option<usize>,
    /// ramp β linearly through the warm-up instead of switching it on
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub warmup_ramp: Option<bool>,
    /// KL weight after warm-up; defaults to latent / pixel count
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub min_delta: Option<f64>,
    /// global gradient-norm ceiling (off unless given)
    #[arg(long)]
    pub grad_clip: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(long)]
    pub latent: Option<usize>,
    #[arg(long)]
    pub conv_channels: Option<usize>,
    #[arg(long)]
    pub bottleneck: Option<usize>,
    #[arg(long)]
    pub decoder_channels: Option<usize>,
    #[arg(long)]
    pub padding: Option<usize>,
    /// softplus or relu
    #[arg(long)]
    pub activation: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct SynthArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// WXCUBE01 output in mm/day
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// scaled mode: z ~ N(0, σ²I)
    #[arg(long, conflicts_with = "tail")]
    pub sigma: Option<f64>,
    /// tail mode: each coordinate from N(0, 1) restricted to |v| ≥ t
    #[arg(long)]
    pub tail: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Default)]
pub struct QqArgs {
    /// cube file plotted on the horizontal axis
    #[arg(long)]
    pub a: Option<PathBuf>,
    /// cube file plotted on the vertical axis
    #[arg(long)]
    pub b: Option<PathBuf>,
    /// CSV output
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long)]
    pub probs: Option<usize>,
    /// also report the divergence over probabilities up to this value
    #[arg(long)]
    pub upto: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct ExtremesArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub fraction: Option<f64>,
    /// top or bottom
    #[arg(long)]
    pub direction: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code. Failures print one `error[...]` line.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            report(&Error::Usage(
                first.trim_start_matches("error: ").to_owned(),
            ));
            return 1;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            report(&e);
            e.exit_code()
        }
    }
}

fn report(e: &Error) {
    let msg = e.to_string().replace(['\n', '\r'], "; ");
    eprintln!("wxvae: error[{}]: {msg}", e.kind());
}

pub fn execute(cli: Cli) -> Result<()> {
    let mut s = Settings::load(cli.config.as_deref())?;
    let started = Instant::now();
    let (name, outcome) = match cli.command {
        Command::GenData(a) => ("gen-data", gen_data(&mut s, a)?),
        Command::Prepare(a) => ("prepare", prepare(&mut s, a)?),
        Command::Train(a) => ("train", train_cmd(&mut s, a)?),
        Command::Synth(a) => ("synth", synth(&mut s, a)?),
        Command::Eval(EvalCommand::Qq(a)) => ("eval qq", eval_qq(&mut s, a)?),
        Command::Eval(EvalCommand::Extremes(a)) => ("eval extremes", eval_extremes(&mut s, a)?),
        Command::Gradcheck(a) => ("gradcheck", gradcheck(&mut s, a)?),
    };
    for k in s.unused() {
        log::warn!("config key {k} is not used by {name}");
    }
    if outcome.primary.is_empty() {
        return Ok(());
    }
    let manifest = RunManifest {
        subcommand: name.to_owned(),
        config: s.resolved().to_vec(),
        seeds: outcome.seeds,
        inputs: outcome.inputs,
        outputs: outcome.outputs,
        duration_secs: started.elapsed().as_secs_f64(),
    };
    for p in &outcome.primary {
        manifest.save(&manifest_path(p))?;
    }
    Ok(())
}

/// What a subcommand read and wrote, for its manifest.
#[derive(Default)]
struct Outcome {
    seeds: Vec<(String, u64)>,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
    /// Outputs that get a manifest next to them.
    primary: Vec<PathBuf>,
}

impl Outcome {
    fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        self.inputs.push(FileDigest::of(role, path)?);
        Ok(())
    }

    fn output(&mut self, role: &str, path: &Path, primary: bool) -> Result<()> {
        self.outputs.push(FileDigest::of(role, path)?);
        if primary {
            self.primary.push(path.to_owned());
        }
        Ok(())
    }
}

fn preset(s: &mut Settings, flag: Option<String>) -> Result<bool> {
    match s.value("preset", flag, "paper".to_owned())?.as_str() {
        "paper" => Ok(false),
        "desk" => Ok(true),
        other => Err(Error::Usage(format!(
            "unknown preset {other:?}, expected paper or desk"
        ))),
    }
}

fn gen_data(s: &mut Settings, a: GenDataArgs) -> Result<Outcome> {
    let d = MonsoonGenConfig::default();
    let out: PathBuf = s.required("out", a.out)?;
    let cfg = MonsoonGenConfig {
        seed: s.value("seed", a.seed, d.seed)?,
        days: s.value("days", a.days, d.days)?,
        height: s.value("height", a.height, d.height)?,
        width: s.value("width", a.width, d.width)?,
        start_day_of_year: s.value("start-day", a.start_day, d.start_day_of_year)?,
        p0: s.value("p0", a.p0, d.p0)?,
        p1: s.value("p1", a.p1, d.p1)?,
        kappa: s.value("kappa", a.kappa, d.kappa)?,
        theta0: s.value("theta0", a.theta0, d.theta0)?,
        theta1: s.value("theta1", a.theta1, d.theta1)?,
        smoothing_radius: s.value("smoothing-radius", a.smoothing_radius, d.smoothing_radius)?,
        spatial_log_sigma: s.value(
            "spatial-log-sigma",
            a.spatial_log_sigma,
            d.spatial_log_sigma,
        )?,
        spatial_persistence: s.value(
            "spatial-persistence",
            a.spatial_persistence,
            d.spatial_persistence,
        )?,
        storm_block_days: s.value("storm-block-days", a.storm_block_days, d.storm_block_days)?,
        storm_log_sigma: s.value("storm-log-sigma", a.storm_log_sigma, d.storm_log_sigma)?,
    };
    let series = gen_synthetic_monsoon(&cfg)?;
    save_grid(&series, &out)?;
    log::info!(
        "wrote {} days of {}x{} to {}",
        series.days(),
        series.height(),
        series.width(),
        out.display()
    );
    let mut o = Outcome {
        seeds: vec![("seed".into(), cfg.seed)],
        ..Outcome::default()
    };
    o.output("out", &out, true)?;
    Ok(o)
}

fn prepare(s: &mut Settings, a: PrepareArgs) -> Result<Outcome> {
    let grid_path: PathBuf = s.required("grid", a.grid)?;
    let train_out: PathBuf = s.required("train-out", a.train_out)?;
    let test_out: PathBuf = s.required("test-out", a.test_out)?;
    let d = if preset(s, a.preset)? {
        WindowConfig::desk()
    } else {
        WindowConfig::paper()
    };
    let cfg = WindowConfig {
        window_days: s.value("window", a.window, d.window_days)?,
        day_range: (
            s.value("day-lo", a.day_lo, d.day_range.0)?,
            s.value("day-hi", a.day_hi, d.day_range.1)?,
        ),
        n_boxes: s.value("boxes", a.boxes, d.n_boxes)?,
        box_extent: (
            s.value("box-h", a.box_h, d.box_extent.0)?,
            s.value("box-w", a.box_w, d.box_extent.1)?,
        ),
        n_samples: s.value("samples", a.samples, d.n_samples)?,
        resize_to: (
            s.value("resize-h", a.resize_h, d.resize_to.0)?,
            s.value("resize-w", a.resize_w, d.resize_to.1)?,
        ),
        seed: s.value("seed", a.seed, d.seed)?,
    };
    let test_fraction = s.value("test-fraction", a.test_fraction, 0.2)?;
    let split_seed = s.value("split-seed", a.split_seed, cfg.seed)?;

    let series = load_grid(&grid_path)?;
    let cubes = window_samples(&series, &cfg)?;
    let (train, test) = split_train_test(cubes, test_fraction, split_seed)?;
    let train = normalize(train)?;
    save_cubes(&train, &train_out)?;
    save_cubes(&test, &test_out)?;
    log::info!(
        "{} training cubes (normalization constant {}) and {} test cubes of {:?}",
        train.len(),
        train.norm().map_or(0.0, |n| n.scale()),
        test.len(),
        cfg.cube_extent()
    );
    let mut o = Outcome {
        seeds: vec![("seed".into(), cfg.seed), ("split-seed".into(), split_seed)],
        ..Outcome::default()
    };
    o.input("grid", &grid_path)?;
    o.output("train-out", &train_out, true)?;
    o.output("test-out", &test_out, true)?;
    Ok(o)
}

fn history_csv(h: &TrainHistory) -> String {
    let mut s = String::from("epoch,beta,train_total,train_rec,train_reg,val_total\n");
    for r in &h.records {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.epoch, r.beta, r.train_total, r.train_rec, r.train_reg, r.val_total
        ));
    }
    s
}

fn train_cmd(s: &mut Settings, a: TrainArgs) -> Result<Outcome> {
    let data_path: PathBuf = s.required("data", a.data)?;
    let out: PathBuf = s.required("out", a.out)?;
    let history_path: Option<PathBuf> = s.optional("history", a.history)?;
    let pm = if preset(s, a.preset)? {
        ModelConfig::desk()
    } else {
        ModelConfig::paper()
    };
    let activation = s.value(
        "activation",
        a.activation,
        pm.output_activation.as_str().to_owned(),
    )?;
    let mut model = ModelConfig {
        input_extent: pm.input_extent,
        conv_channels: s.value("conv-channels", a.conv_channels, pm.conv_channels)?,
        bottleneck_width: s.value("bottleneck", a.bottleneck, pm.bottleneck_width)?,
        latent_dim: s.value("latent", a.latent, pm.latent_dim)?,
        decoder_channels: s.value("decoder-channels", a.decoder_channels, pm.decoder_channels)?,
        padding: s.value("padding", a.padding, pm.padding)?,
        output_activation: OutputActivation::parse(&activation)?,
    };
    let dataset = load_cubes(&data_path, Role::Train)?;
    let norm = dataset.norm().ok_or_else(|| {
        wxvae_core::Error::Data(format!(
            "{} holds physical cubes; train needs the normalized output of prepare",
            data_path.display()
        ))
    })?;
    model.input_extent = dataset
        .extent()
        .ok_or(wxvae_core::Error::Empty("training set"))?;

    let d = TrainConfig::for_model(&model);
    let cfg = TrainConfig {
        epochs: s.value("epochs", a.epochs, d.epochs)?,
        batch_size: s.value("batch", a.batch, d.batch_size)?,
        lr: s.value("lr", a.lr, d.lr)?,
        adam_beta1: s.value("beta1", a.beta1, d.adam_beta1)?,
        adam_beta2: s.value("beta2", a.beta2, d.adam_beta2)?,
        adam_eps: s.value("eps", a.eps, d.adam_eps)?,
        warmup_epochs: s.value("warmup", a.warmup, d.warmup_epochs)?,
        warmup_ramp: s.value("warmup-ramp", a.warmup_ramp, d.warmup_ramp)?,
        beta_target: s.value("beta", a.beta, default_beta(&model))?,
        early_stop_patience: s.value("patience", a.patience, d.early_stop_patience)?,
        early_stop_min_delta: s.value("min-delta", a.min_delta, d.early_stop_min_delta)?,
        grad_clip: s.optional("grad-clip", a.grad_clip)?,
        seed: s.value("seed", a.seed, d.seed)?,
        validation_fraction: s.value("val-fraction", a.val_fraction, d.validation_fraction)?,
    };
    let (params, history) = train_with(&dataset, &model, &cfg, |r| {
        log::info!(
            "epoch {} beta {} train_total {:.6} train_rec {:.6} train_reg {:.4} val_total {:.6}",
            r.epoch,
            r.beta,
            r.train_total,
            r.train_rec,
            r.train_reg,
            r.val_total
        )
    })?;
    log::info!(
        "best epoch {} of {} run",
        history.best_epoch,
        history.records.len()
    );
    let ckpt = Checkpoint {
        params,
        model,
        train: cfg.clone(),
        norm,
    };
    save_checkpoint(&ckpt, &out)?;
    let mut o = Outcome {
        seeds: vec![("seed".into(), cfg.seed)],
        ..Outcome::default()
    };
    o.input("data", &data_path)?;
    o.output("out", &out, true)?;
    if let Some(h) = history_path {
        let text = history_csv(&history);
        write_atomic(&h, |w: &mut dyn Write| w.write_all(text.as_bytes()))?;
        o.output("history", &h, false)?;
    }
    Ok(o)
}

fn synth(s: &mut Settings, a: SynthArgs) -> Result<Outcome> {
    let ckpt_path: PathBuf = s.required("checkpoint", a.checkpoint)?;
    let out: PathBuf = s.required("out", a.out)?;
    // a mode given on the command line replaces whatever mode the file sets
    let (sigma, tail) = if a.sigma.is_some() || a.tail.is_some() {
        s.skip("sigma");
        s.skip("tail");
        let mut given = |key: &str, v: Option<f64>| v.map(|v| s.value(key, Some(v), v)).transpose();
        (given("sigma", a.sigma)?, given("tail", a.tail)?)
    } else {
        (
            s.optional::<f64>("sigma", None)?,
            s.optional::<f64>("tail", None)?,
        )
    };
    let n = s.value("n", a.n, 512usize)?;
    let seed = s.value("seed", a.seed, 0u64)?;
    let cfg = match (sigma, tail) {
        (Some(sigma), None) => SamplerConfig::scaled(sigma, n, seed),
        (None, Some(t)) => SamplerConfig::tail(t, n, seed),
        (Some(_), Some(_)) => {
            return Err(Error::Usage(
                "conflicting modes: give either --sigma or --tail".into(),
            ))
        }
        (None, None) => return Err(Error::Usage("synth needs --sigma or --tail".into())),
    };
    let ckpt = load_checkpoint(&ckpt_path)?;
    let batch = synthesize(&ckpt, &cfg)?;
    let dataset = wxvae_core::data::CubeDataset::new(batch.fields, None, Role::Test)?;
    save_cubes(&dataset, &out)?;
    let record = ProvenanceRecord {
        config: cfg,
        latent_dim: ckpt.model.latent_dim,
        checkpoint: ckpt_path.clone(),
        checkpoint_sha256: sha256_file(&ckpt_path)?,
        checkpoint_fingerprint: batch.provenance.checkpoint_fingerprint,
    };
    let side = sidecar_path(&out);
    record.save(&side)?;
    log::info!(
        "{} {} cubes, mean {:.4} mm/day",
        cfg.mode.name(),
        n,
        dataset.pixel_mean()
    );
    let mut o = Outcome {
        seeds: vec![("seed".into(), seed)],
        ..Outcome::default()
    };
    o.input("checkpoint", &ckpt_path)?;
    o.output("out", &out, true)?;
    o.output("provenance", &side, false)?;
    Ok(o)
}

fn label(p: &Path) -> String {
    p.file_stem().map_or_else(
        || p.display().to_string(),
        |s| s.to_string_lossy().into_owned(),
    )
}

fn eval_qq(s: &mut Settings, a: QqArgs) -> Result<Outcome> {
    let pa: PathBuf = s.required("a", a.a)?;
    let pb: PathBuf = s.required("b", a.b)?;
    let out: PathBuf = s.required("out", a.out)?;
    let svg: Option<PathBuf> = s.optional("svg", a.svg)?;
    let probs = s.value("probs", a.probs, DEFAULT_N_PROBS)?;
    let upto: Option<f64> = s.optional("upto", a.upto)?;
    let set_a = load_cubes(&pa, Role::Test)?;
    let set_b = load_cubes(&pb, Role::Test)?;
    let curve = qq_curve(set_a.cubes(), set_b.cubes(), probs)?;
    let (la, lb) = (label(&pa), label(&pb));
    emit_qq(
        &curve,
        &out,
        svg.as_deref().map(|p| (p, la.as_str(), lb.as_str())),
    )?;
    println!("max_divergence={}", qq_divergence(&curve, 1.0)?);
    if let Some(u) = upto {
        println!("divergence_upto_{u}={}", qq_divergence(&curve, u)?);
    }
    let mut o = Outcome::default();
    o.input("a", &pa)?;
    o.input("b", &pb)?;
    o.output("out", &out, true)?;
    if let Some(p) = &svg {
        o.output("svg", p, false)?;
    }
    Ok(o)
}

fn eval_extremes(s: &mut Settings, a: ExtremesArgs) -> Result<Outcome> {
    let data: PathBuf = s.required("data", a.data)?;
    let out: PathBuf = s.required("out", a.out)?;
    let fraction = s.value("fraction", a.fraction, 0.1)?;
    let direction = Direction::parse(&s.value("direction", a.direction, "top".to_owned())?)?;
    let spec = ExtremeRefSpec::new(fraction, direction)?;
    let set = load_cubes(&data, Role::Test)?;
    let picked = reference_extremes(&set, &spec)?;
    save_cubes(&picked, &out)?;
    log::info!(
        "{} {} of {} cubes, mean {:.4}",
        direction.as_str(),
        picked.len(),
        set.len(),
        picked.pixel_mean()
    );
    let mut o = Outcome::default();
    o.input("data", &data)?;
    o.output("out", &out, true)?;
    Ok(o)
}

fn gradcheck(s: &mut Settings, a: GradcheckArgs) -> Result<Outcome> {
    let d = GradCheckConfig::default();
    let seed = s.value("seed", a.seed, 0u64)?;
    let batch = s.value("batch", a.batch, 2usize)?;
    let beta = s.value("beta", a.beta, 1.0)?;
    let cfg = GradCheckConfig {
        step: s.value("step", a.step, d.step)?,
        rel_tol: s.value("tol", a.tol, d.rel_tol)?,
        ..d
    };
    let report = check_vae(&toy_config(), batch, beta, seed, cfg)?;
    for p in &report.params {
        println!(
            "{:<16} checked {:>6} skipped {:>4} max_rel_err {:.3e} failures {}",
            p.name, p.checked, p.skipped, p.max_rel_err, p.failures
        );
    }
    println!(
        "max_rel_err={:.3e} passed={}",
        report.max_rel_err(),
        report.passed()
    );
    if !report.passed() {
        return Err(Error::Check(format!(
            "gradient check failed: max relative error {:.3e} exceeds {:.1e}",
            report.max_rel_err(),
            cfg.rel_tol
        )));
    }
    Ok(Outcome::default())
}
