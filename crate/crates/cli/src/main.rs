//! `prdlab` command-line entry point.

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use prdlab::{InitMode, LabelMode, RdModel, TrainConfig, TrainMode};

use config::{
    layer_file, preset, usage, DataSection, FeatvizConfig, GenDataConfig, GramConfig, IdxSource, NetSection,
    SimulateConfig, TrainRunConfig, UsageError, VerifyBoundsConfig,
};
use output::RunOutput;

#[derive(Parser)]
#[command(
    name = "prdlab",
    version,
    about = "Two-layer ReLU training dynamics, kernel bounds and reaction-diffusion simulators"
)]
struct Cli {
    /// Directory receiving the run's files and manifest.
    #[arg(long, global = true, env = "PRDLAB_OUT_DIR", default_value = "prdlab-out")]
    out_dir: PathBuf,
    /// JSON configuration layered between the defaults and the flags; a run manifest also works.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw the synthetic mixture (or read an IDX pair) and write it as CSV.
    GenData(GenDataArgs),
    /// Train a generator with the supervised or critic-augmented objective.
    Train(TrainArgs),
    /// Infinite-width and finite-width Gram matrix reports.
    Gram(GramArgs),
    /// Train and compare the trajectory against the closed-form bounds.
    VerifyBounds(VerifyArgs),
    /// Run the Turing or Gray-Scott simulator.
    Simulate(SimulateArgs),
    /// Weight images and excitation maximization for a trained generator.
    Featviz(FeatvizArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum LabelArg {
    OneHot,
    Scalar,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Theory,
    Xavier,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Sup,
    Adv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Turing,
    Gs,
}

#[derive(Args, Default)]
struct DataArgs {
    #[arg(long)]
    n_total: Option<usize>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    d_in: Option<usize>,
    #[arg(long)]
    modes: Option<usize>,
    #[arg(long)]
    manifold_dim: Option<usize>,
    #[arg(long)]
    fill_value: Option<f64>,
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long, value_enum)]
    labels: Option<LabelArg>,
    #[arg(long)]
    center_box: Option<f64>,
    #[arg(long)]
    cluster_std: Option<f64>,
    /// IDX image file; requires --idx-labels.
    #[arg(long, requires = "idx_labels")]
    idx_images: Option<PathBuf>,
    #[arg(long, requires = "idx_images")]
    idx_labels: Option<PathBuf>,
    #[arg(long, default_value_t = 7000)]
    idx_train: usize,
    #[arg(long, default_value_t = 0)]
    idx_test: usize,
    /// Keep raw inputs instead of scaling them to unit norm.
    #[arg(long)]
    no_normalize: bool,
}

#[derive(Args, Default)]
struct NetArgs {
    #[arg(long)]
    width: Option<usize>,
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    #[arg(long)]
    init_seed: Option<u64>,
}

#[derive(Args, Default)]
struct TrainFlags {
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    critic_lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Use every training sample in each step.
    #[arg(long, conflicts_with = "batch_size")]
    full_batch: bool,
    #[arg(long)]
    epochs: Option<usize>,
    /// Stationarity threshold on the largest generator gradient entry.
    #[arg(long)]
    epsilon_stationary: Option<f64>,
    #[arg(long)]
    continue_after_stationary: bool,
    #[arg(long)]
    critic_steps: Option<usize>,
    /// Row-norm cap of the critic's hidden weights.
    #[arg(long)]
    row_norm: Option<f64>,
    #[arg(long)]
    gp: Option<f64>,
    #[arg(long)]
    train_seed: Option<u64>,
    #[arg(long)]
    log_every: Option<usize>,
    #[arg(long)]
    gram_every: Option<usize>,
    /// Freeze the output layer.
    #[arg(long)]
    hidden_only: bool,
}

#[derive(Args)]
struct GenDataArgs {
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    net: NetArgs,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct GramArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    net: NetArgs,
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    mc_seed: Option<u64>,
    /// Trained generator compared against its initialization.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    net: NetArgs,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Named parameter set: `paper` for both models, `paper-1` … `paper-4` for gs.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    feed: Option<f64>,
    #[arg(long)]
    kill: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    dx: Option<f64>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    snapshot_every: Option<usize>,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    patch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FeatvizArgs {
    /// Generator checkpoint written by `train`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    image_height: Option<usize>,
    #[arg(long)]
    image_width: Option<usize>,
    /// l∞ radius of the ascent perturbation.
    #[arg(long)]
    ascent_epsilon: Option<f64>,
    #[arg(long)]
    ascent_step: Option<f64>,
    #[arg(long)]
    ascent_iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl DataArgs {
    fn apply(self, d: &mut DataSection) {
        let m = &mut d.manifold;
        set(&mut m.n_total, self.n_total);
        set(&mut m.n_train, self.n_train);
        set(&mut m.d_in, self.d_in);
        set(&mut m.modes, self.modes);
        set(&mut m.manifold_dim, self.manifold_dim);
        set(&mut m.fill_value, self.fill_value);
        set(&mut m.seed, self.data_seed);
        set(
            &mut m.label_mode,
            self.labels.map(|l| match l {
                LabelArg::OneHot => LabelMode::OneHot,
                LabelArg::Scalar => LabelMode::Scalar,
            }),
        );
        set(&mut m.center_box, self.center_box);
        set(&mut m.cluster_std, self.cluster_std);
        if let (Some(images), Some(labels)) = (self.idx_images, self.idx_labels) {
            d.idx = Some(IdxSource { images, labels, n_train: self.idx_train, n_test: self.idx_test });
        }
        if self.no_normalize {
            d.normalize = false;
        }
    }
}

impl NetArgs {
    fn apply(self, n: &mut NetSection) {
        set(&mut n.width, self.width);
        set(
            &mut n.init,
            self.init.map(|i| match i {
                InitArg::Theory => InitMode::Theory,
                InitArg::Xavier => InitMode::Xavier,
            }),
        );
        set(&mut n.init_seed, self.init_seed);
    }
}

impl TrainFlags {
    fn apply(self, t: &mut TrainConfig) {
        set(
            &mut t.mode,
            self.mode.map(|m| match m {
                ModeArg::Sup => TrainMode::Supervised,
                ModeArg::Adv => TrainMode::Adversarial,
            }),
        );
        set(&mut t.learning_rate, self.lr);
        if self.critic_lr.is_some() {
            t.critic_learning_rate = self.critic_lr;
        }
        set(&mut t.momentum, self.momentum);
        if self.batch_size.is_some() {
            t.batch_size = self.batch_size;
        }
        if self.full_batch {
            t.batch_size = None;
        }
        set(&mut t.max_epochs, self.epochs);
        set(&mut t.epsilon_stationary, self.epsilon_stationary);
        if self.continue_after_stationary {
            t.continue_after_stationary = true;
        }
        set(&mut t.disc_steps_per_gen_step, self.critic_steps);
        set(&mut t.l, self.row_norm);
        set(&mut t.gp_coeff, self.gp);
        set(&mut t.seed, self.train_seed);
        set(&mut t.log_every, self.log_every);
        set(&mut t.gram_every, self.gram_every);
        if self.hidden_only {
            t.train_output_layer = false;
        }
    }
}

impl SimulateArgs {
    fn apply(self, s: &mut SimulateConfig) -> anyhow::Result<()> {
        let current = match s.model {
            RdModel::Turing(_) => ModelArg::Turing,
            RdModel::GrayScott(_) => ModelArg::Gs,
        };
        let model = self.model.unwrap_or(current);
        let name = match model {
            ModelArg::Turing => "turing",
            ModelArg::Gs => "gs",
        };
        if let Some(p) = &self.preset {
            s.model = preset(name, p)?;
        } else if model != current {
            s.model = preset(name, "paper")?;
        }
        match &mut s.model {
            RdModel::Turing(p) => {
                if self.feed.is_some() || self.kill.is_some() {
                    return Err(usage("--feed and --kill apply to --model gs"));
                }
                set(&mut p.a, self.a);
                set(&mut p.b, self.b);
                set(&mut p.c, self.c);
                set(&mut p.d, self.d);
                set(&mut p.h, self.h);
                set(&mut p.k, self.k);
                set(&mut p.mu, self.mu);
                set(&mut p.nu, self.nu);
                set(&mut p.dt, self.dt);
                set(&mut p.dx, self.dx);
            }
            RdModel::GrayScott(p) => {
                if [self.a, self.b, self.c, self.d, self.h, self.k].iter().any(Option::is_some) {
                    return Err(usage("--a, --b, --c, --d, --h and --k apply to --model turing"));
                }
                set(&mut p.f, self.feed);
                set(&mut p.k, self.kill);
                set(&mut p.mu, self.mu);
                set(&mut p.nu, self.nu);
                set(&mut p.dt, self.dt);
                set(&mut p.dx, self.dx);
            }
        }
        set(&mut s.height, self.height);
        set(&mut s.width, self.width);
        set(&mut s.steps, self.steps);
        set(&mut s.snapshot_every, self.snapshot_every);
        set(&mut s.amplitude, self.amplitude);
        set(&mut s.patch, self.patch);
        set(&mut s.seed, self.seed);
        Ok(())
    }
}

impl FeatvizArgs {
    fn apply(self, f: &mut FeatvizConfig) {
        set(&mut f.checkpoint, self.checkpoint);
        set(&mut f.top_k, self.top_k);
        if self.image_height.is_some() {
            f.image_height = self.image_height;
        }
        if self.image_width.is_some() {
            f.image_width = self.image_width;
        }
        set(&mut f.ascent.epsilon, self.ascent_epsilon);
        set(&mut f.ascent.step_size, self.ascent_step);
        set(&mut f.ascent.iterations, self.ascent_iterations);
        set(&mut f.seed, self.seed);
    }
}

fn execute<C: Serialize>(
    out_dir: &Path,
    name: &str,
    cfg: &C,
    seeds: Vec<u64>,
    body: impl FnOnce(&C, &mut RunOutput) -> anyhow::Result<()>,
) -> anyhow::Result<()> {
    let mut out = RunOutput::create(out_dir, name, cfg, seeds)?;
    body(cfg, &mut out)?;
    let manifest = out.finish()?;
    println!("manifest: {}", manifest.display());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = cli.config.as_deref();
    let out = cli.out_dir.as_path();
    match cli.command {
        Command::GenData(args) => {
            let mut cfg = layer_file(&GenDataConfig::default(), file, "gen-data")?;
            args.data.apply(&mut cfg.data);
            execute(out, "gen-data", &cfg, commands::gen_data_seeds(&cfg), commands::gen_data)
        }
        Command::Train(args) => {
            let mut cfg = layer_file(&TrainRunConfig::default(), file, "train")?;
            args.data.apply(&mut cfg.data);
            args.net.apply(&mut cfg.net);
            args.train.apply(&mut cfg.train);
            execute(out, "train", &cfg, commands::train_seeds(&cfg), commands::train)
        }
        Command::Gram(args) => {
            let mut cfg = layer_file(&GramConfig::default(), file, "gram")?;
            args.data.apply(&mut cfg.data);
            args.net.apply(&mut cfg.net);
            set(&mut cfg.mc_samples, args.mc_samples);
            set(&mut cfg.mc_seed, args.mc_seed);
            if args.checkpoint.is_some() {
                cfg.checkpoint = args.checkpoint;
            }
            execute(out, "gram", &cfg, commands::gram_seeds(&cfg), commands::gram)
        }
        Command::VerifyBounds(args) => {
            let mut cfg = layer_file(&VerifyBoundsConfig::default(), file, "verify-bounds")?;
            args.data.apply(&mut cfg.data);
            args.net.apply(&mut cfg.net);
            args.train.apply(&mut cfg.train);
            set(&mut cfg.delta, args.delta);
            set(&mut cfg.epsilon, args.epsilon);
            execute(out, "verify-bounds", &cfg, commands::verify_bounds_seeds(&cfg), commands::verify_bounds)
        }
        Command::Simulate(args) => {
            let mut cfg = layer_file(&SimulateConfig::default(), file, "simulate")?;
            args.apply(&mut cfg)?;
            execute(out, "simulate", &cfg, commands::simulate_seeds(&cfg), commands::simulate)
        }
        Command::Featviz(args) => {
            let mut cfg = layer_file(&FeatvizConfig::default(), file, "featviz")?;
            args.apply(&mut cfg);
            execute(out, "featviz", &cfg, commands::featviz_seeds(&cfg), commands::featviz)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() || is_parameter_error(&e) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

/// Out-of-range parameters rejected by the library count as usage errors.
fn is_parameter_error(e: &anyhow::Error) -> bool {
    matches!(e.downcast_ref::<prdlab::Error>(), Some(prdlab::Error::InvalidParameter(_)))
}
