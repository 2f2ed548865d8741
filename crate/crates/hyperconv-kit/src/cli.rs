//! `hckit` command-line interface: cost counting, synthetic data
//! generation, training, evaluation, and the constant-FLOP sweep.

use std::io::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch::{build_model, network_plan, ArchConfig, HyperUNetConfig};
use crate::cost::count_network;
use crate::data::{
    load_pair_dir, procedural_texture, sample_seed, synth_pair, write_dataset, DegradationParams,
    ImageFormat, PairedSample,
};
use crate::error::{Error, Result};
use crate::train::{
    evaluate, load_checkpoint, save_checkpoint, split_dataset, train_capped, OptimConfig,
    OptimKind, TrainReport,
};

#[derive(Parser, Debug)]
#[command(name = "hckit", version, about = "Hyper-convolution cost accounting and desk-scale training")]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Analytic FLOP/parameter/memory report for a network
    Count(CountArgs),
    /// Write a synthetic paired dataset
    SynthData(SynthArgs),
    /// Train a model and save a checkpoint
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset
    Eval(EvalArgs),
    /// Params/FLOPs/error sweep over MLP widths
    Sweep(SweepArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArchKind {
    Hyper,
    Plain,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum OutputFormat {
    Table,
    Csv,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum FileFormat {
    Png8,
    Png16,
    F32,
}

impl FileFormat {
    fn to_image(self) -> ImageFormat {
        match self {
            FileFormat::Png8 => ImageFormat::Png8,
            FileFormat::Png16 => ImageFormat::Png16,
            FileFormat::F32 => ImageFormat::F32Blob,
        }
    }
}

#[derive(Args, Debug)]
pub struct CountArgs {
    #[arg(long, value_enum)]
    pub arch: ArchKind,
    #[arg(long)]
    pub n_fwd: usize,
    #[arg(long, default_value_t = 8)]
    pub n_embed: usize,
    #[arg(long, default_value_t = 64)]
    pub n_hid: usize,
    /// packed RAW input height (half the mosaic height)
    #[arg(long, default_value_t = 1774)]
    pub input_h: usize,
    #[arg(long, default_value_t = 1774)]
    pub input_w: usize,
    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    pub format: OutputFormat,
}

#[derive(Args, Debug)]
pub struct DegradationArgs {
    #[arg(long, default_value_t = 0.02)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.001)]
    pub shot_gain: f64,
    #[arg(long, default_value_t = 1.8)]
    pub gain_r: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gain_g: f64,
    #[arg(long, default_value_t = 1.5)]
    pub gain_b: f64,
    #[arg(long, default_value_t = 2.2)]
    pub gamma: f64,
}

impl DegradationArgs {
    fn to_params(&self, seed: u64) -> DegradationParams {
        DegradationParams {
            sigma: self.sigma,
            shot_gain: self.shot_gain,
            gains: [self.gain_r, self.gain_g, self.gain_b],
            gamma: self.gamma,
            seed,
        }
    }
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n: usize,
    /// target (clean RGB) side length; raw side is half this
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = FileFormat::F32)]
    pub format: FileFormat,
    #[command(flatten)]
    pub degradation: DegradationArgs,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// directory of `<id>_raw.*` / `<id>_target.*` pairs
    #[arg(long, conflicts_with = "synth")]
    pub data: Option<PathBuf>,
    /// synthesize this many pairs in memory instead of reading a directory
    #[arg(long)]
    pub synth: Option<usize>,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, value_enum, default_value_t = ArchKind::Hyper)]
    pub arch: ArchKind,
    #[arg(long, default_value_t = 8)]
    pub n_fwd: usize,
    #[arg(long, default_value_t = 8)]
    pub n_embed: usize,
    #[arg(long, default_value_t = 64)]
    pub n_hid: usize,
    #[arg(long, value_enum, default_value_t = CliOptim::Adam)]
    pub optim: CliOptim,
    #[arg(long, default_value_t = 5e-6)]
    pub lr: f64,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    /// hard cap on optimizer steps
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// held-out fraction for the eval metrics line
    #[arg(long, default_value_t = 0.1)]
    pub eval_fraction: f64,
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// per-step loss CSV
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[command(flatten)]
    pub degradation: DegradationArgs,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum CliOptim {
    Adam,
    Sgd,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// MLP hidden widths to sweep
    #[arg(long, value_delimiter = ',', default_values_t = vec![64, 128, 256, 512, 1024, 2048])]
    pub n_hid_list: Vec<usize>,
    #[arg(long, default_value_t = 8)]
    pub n_fwd: usize,
    #[arg(long, default_value_t = 8)]
    pub n_embed: usize,
    #[arg(long, conflicts_with = "synth")]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub synth: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// output CSV path (stdout if omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub degradation: DegradationArgs,
}

/// Reference input for the sweep's flops column: a 448x448 RAW frame,
/// i.e. a (4, 224, 224) packed tensor.
pub const SWEEP_REF_EXTENT: usize = 224;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n_hid: usize,
    pub params: u64,
    pub flops: u64,
    pub train_loss_final: f64,
    pub eval_mse: f64,
    pub eval_ms_ssim: f64,
}

pub const SWEEP_CSV_HEADER: &str = "n_hid,params,flops,train_loss_final,eval_mse,eval_ms_ssim";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.n_hid, r.params, r.flops, r.train_loss_final, r.eval_mse, r.eval_ms_ssim
        ));
    }
    out
}

fn worker_threads() -> Result<usize> {
    match std::env::var("HCKIT_THREADS") {
        Ok(v) => {
            let n: usize = v
                .parse()
                .map_err(|_| Error::invalid("HCKIT_THREADS", format!("not a number: {v}")))?;
            if n == 0 {
                return Err(Error::invalid("HCKIT_THREADS", "must be >= 1"));
            }
            Ok(n)
        }
        Err(_) => Ok(1),
    }
}

fn synth_dataset(
    n: usize,
    size: usize,
    seed: u64,
    deg: &DegradationParams,
) -> Result<Vec<PairedSample>> {
    if size % 2 != 0 {
        return Err(Error::invalid("synth", "size must be even"));
    }
    (0..n)
        .map(|i| {
            let id = format!("{i:04}");
            let clean = procedural_texture(sample_seed(seed, &id), size)?;
            synth_pair(&clean, deg, &id)
        })
        .collect()
}

fn training_dataset(
    data: &Option<PathBuf>,
    synth: Option<usize>,
    size: usize,
    seed: u64,
    deg: &DegradationParams,
) -> Result<Vec<PairedSample>> {
    match (data, synth) {
        (Some(dir), _) => load_pair_dir(dir),
        (None, Some(n)) => synth_dataset(n, size, seed, deg),
        (None, None) => Err(Error::invalid("train", "pass --data DIR or --synth N")),
    }
}

fn unet_config(n_fwd: usize, n_embed: usize, n_hid: usize) -> Result<HyperUNetConfig> {
    let cfg = HyperUNetConfig::new(n_fwd, n_embed, n_hid);
    cfg.validate()?;
    Ok(cfg)
}

fn write_history(path: &PathBuf, report: &TrainReport) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "step,loss,mse")?;
    for r in &report.history {
        writeln!(f, "{},{},{}", r.step, r.loss, r.mse)?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Command::Count(a) => cmd_count(a),
        Command::SynthData(a) => cmd_synth_data(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

pub fn cmd_count(a: CountArgs) -> Result<()> {
    let cfg = unet_config(a.n_fwd, a.n_embed, a.n_hid)?;
    let plan = network_plan(&cfg, a.arch == ArchKind::Hyper, a.input_h, a.input_w)?;
    let report = count_network(&plan)?;
    match a.format {
        OutputFormat::Table => {
            print!("{}", report.to_table());
            println!(
                "params {} | flops {} | peak conv mem {:.3} GB",
                report.params(),
                report.flops(),
                report.peak_activation_bytes() as f64 / 1e9
            );
        }
        OutputFormat::Csv => print!("{}", report.to_csv()),
    }
    Ok(())
}

pub fn cmd_synth_data(a: SynthArgs) -> Result<()> {
    let deg = a.degradation.to_params(a.seed);
    let samples = synth_dataset(a.n, a.size, a.seed, &deg)?;
    write_dataset(&a.out, &samples, a.format.to_image(), Some(&deg))?;
    println!("wrote {} pairs to {}", samples.len(), a.out.display());
    Ok(())
}

pub fn cmd_train(a: TrainArgs) -> Result<()> {
    let deg = a.degradation.to_params(a.seed);
    let dataset = training_dataset(&a.data, a.synth, a.size, a.seed, &deg)?;
    let (train_set, eval_set) = split_dataset(dataset, a.seed, a.eval_fraction);
    if train_set.is_empty() {
        return Err(Error::invalid("train", "no training samples after the eval split"));
    }

    let cfg = unet_config(a.n_fwd, a.n_embed, a.n_hid)?;
    let arch = match a.arch {
        ArchKind::Hyper => ArchConfig::Hyper(cfg),
        ArchKind::Plain => ArchConfig::Plain(cfg),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut model = build_model::<f32>(&arch, &mut rng)?;

    let optim = OptimConfig {
        kind: match a.optim {
            CliOptim::Adam => OptimKind::Adam,
            CliOptim::Sgd => OptimKind::Sgd,
        },
        lr: a.lr,
        batch: a.batch,
        epochs: a.epochs,
        seed: a.seed,
        ..OptimConfig::default()
    };
    let report = train_capped(model.as_mut(), &train_set, &optim, a.steps)?;

    if let Some(path) = &a.history {
        write_history(path, &report)?;
    }
    if let Some(path) = &a.ckpt {
        save_checkpoint(model.as_ref(), path)?;
    }
    let last = report.history.last().map(|r| r.loss).unwrap_or(f64::NAN);
    print!("steps={} final_loss={last}", report.history.len());
    if !eval_set.is_empty() {
        let m = evaluate(model.as_ref(), &eval_set)?;
        print!(
            " eval_mse={} eval_psnr={} eval_ssim={} eval_ms_ssim={}",
            m.mse, m.psnr, m.ssim, m.ms_ssim
        );
    }
    println!();
    Ok(())
}

pub fn cmd_eval(a: EvalArgs) -> Result<()> {
    let model = load_checkpoint::<f32>(&a.ckpt)?;
    let dataset = load_pair_dir(&a.data)?;
    let m = evaluate(model.as_ref(), &dataset)?;
    println!(
        "mse={} psnr={} ssim={} ms_ssim={}",
        m.mse, m.psnr, m.ssim, m.ms_ssim
    );
    Ok(())
}

/// Tape-free copy of a sample that can cross thread boundaries
/// (tensors themselves hold non-`Send` tape handles).
struct FlatSample {
    id: String,
    raw: (Vec<f32>, Vec<usize>),
    target: (Vec<f32>, Vec<usize>),
}

fn flatten_samples(samples: &[PairedSample]) -> Vec<FlatSample> {
    samples
        .iter()
        .map(|s| FlatSample {
            id: s.id.clone(),
            raw: (s.raw.data().to_vec(), s.raw.shape().to_vec()),
            target: (s.target.data().to_vec(), s.target.shape().to_vec()),
        })
        .collect()
}

fn rebuild_samples(flat: &[FlatSample]) -> Result<Vec<PairedSample>> {
    flat.iter()
        .map(|s| {
            Ok(PairedSample {
                raw: crate::tensor::Tensor::from_vec(s.raw.0.clone(), &s.raw.1)?,
                target: crate::tensor::Tensor::from_vec(s.target.0.clone(), &s.target.1)?,
                id: s.id.clone(),
            })
        })
        .collect()
}

fn sweep_point(a: &SweepArgs, dataset: &[PairedSample], n_hid: usize) -> Result<SweepRow> {
    let cfg = unet_config(a.n_fwd, a.n_embed, n_hid)?;
    let report = count_network(&network_plan(&cfg, true, SWEEP_REF_EXTENT, SWEEP_REF_EXTENT)?)?;

    let point_seed = sample_seed(a.seed, &format!("sweep-{n_hid}"));
    let mut rng = ChaCha8Rng::seed_from_u64(point_seed);
    let mut model = build_model::<f32>(&ArchConfig::Hyper(cfg), &mut rng)?;
    let (train_set, eval_set) = split_dataset(dataset.to_vec(), a.seed, 0.1);
    let optim = OptimConfig { seed: point_seed, epochs: usize::MAX, ..OptimConfig::default() };
    let train_report = train_capped(model.as_mut(), &train_set, &optim, Some(a.steps))?;
    let eval_on = if eval_set.is_empty() { &train_set } else { &eval_set };
    let m = evaluate(model.as_ref(), eval_on)?;
    Ok(SweepRow {
        n_hid,
        params: report.params(),
        flops: report.flops(),
        train_loss_final: train_report.history.last().map(|r| r.loss).unwrap_or(f64::NAN),
        eval_mse: m.mse,
        eval_ms_ssim: m.ms_ssim,
    })
}

pub fn cmd_sweep(a: SweepArgs) -> Result<()> {
    if a.n_hid_list.is_empty() {
        return Err(Error::invalid("sweep", "--n-hid-list must not be empty"));
    }
    let deg = a.degradation.to_params(a.seed);
    let dataset = match &a.data {
        Some(dir) => load_pair_dir(dir)?,
        None => synth_dataset(a.synth, a.size, a.seed, &deg)?,
    };

    let threads = worker_threads()?.min(a.n_hid_list.len());
    let flat = flatten_samples(&dataset);
    drop(dataset);
    let mut rows: Vec<Option<Result<SweepRow>>> = Vec::new();
    rows.resize_with(a.n_hid_list.len(), || None);
    std::thread::scope(|scope| {
        // round-robin assignment: each worker owns a disjoint set of points
        let mut worker_slots: Vec<Vec<(usize, &mut Option<Result<SweepRow>>)>> =
            (0..threads).map(|_| Vec::new()).collect();
        for (i, slot) in rows.iter_mut().enumerate() {
            worker_slots[i % threads].push((i, slot));
        }
        for work in worker_slots {
            let flat = &flat;
            let a = &a;
            scope.spawn(move || {
                let dataset = match rebuild_samples(flat) {
                    Ok(d) => d,
                    Err(e) => {
                        for (_, slot) in work {
                            *slot = Some(Err(Error::invalid("sweep", e.to_string())));
                        }
                        return;
                    }
                };
                for (i, slot) in work {
                    *slot = Some(sweep_point(a, &dataset, a.n_hid_list[i]));
                }
            });
        }
    });
    let rows: Vec<SweepRow> = rows
        .into_iter()
        .map(|r| r.expect("every sweep point assigned"))
        .collect::<Result<_>>()?;

    let csv = sweep_csv(&rows);
    match &a.out {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}
