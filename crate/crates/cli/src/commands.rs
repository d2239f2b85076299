//! The six subcommands. Each takes a fully resolved config and an output directory.

use std::fs::File;
use std::io::{BufReader, Write};

use anyhow::Context;
use serde::Serialize;

use prdlab::dataset::{generate_manifold_dataset, load_idx, normalize_unit};
use prdlab::featviz::{base_input, export_weight_images, maximize_excitation, neuron_variances, write_variances_csv};
use prdlab::network::{init_discriminator, init_generator};
use prdlab::numerics::mean;
use prdlab::objective::loss_breakdown;
use prdlab::pgm::{to_gray8, write_pgm};
use prdlab::rdsim::{init_grayscott, init_turing, run_rd};
use prdlab::theory::{
    bound_rows, compute_constants, gram_at, gram_infinity, gram_infinity_exact, gram_spectrum, gram_stability_report,
    lambda1_from, mean_initial_error, mu, write_bound_csv, BoundInputs,
};
use prdlab::trainer::run_training;
use prdlab::{
    ConstantsReport, Dataset, DiscriminatorNet, GeneratorNet, GramReport, RdModel, SeededRng, Spectrum, TrainMode,
    TrajectoryLog,
};

use crate::config::{
    usage, DataSection, FeatvizConfig, GenDataConfig, GramConfig, NetSection, SimulateConfig, TrainRunConfig,
    VerifyBoundsConfig,
};
use crate::output::RunOutput;

const GENERATOR_STREAM: u64 = 10;
const CRITIC_STREAM: u64 = 11;
const INITIAL_ERROR_STREAM: u64 = 12;
const INITIAL_ERROR_INITS: usize = 10;

fn load_data(cfg: &DataSection, out: &mut RunOutput) -> anyhow::Result<Dataset> {
    let raw = match &cfg.idx {
        Some(src) => {
            out.add_input(&src.images)?;
            out.add_input(&src.labels)?;
            let all = load_idx(&src.images, &src.labels)?;
            if src.n_train + src.n_test > all.train.len() {
                return Err(usage(format!(
                    "IDX pair holds {} samples, {} requested",
                    all.train.len(),
                    src.n_train + src.n_test
                )));
            }
            let mut ds = all.truncated(src.n_train + src.n_test, 0);
            ds.test = ds.train.split_off(src.n_train);
            ds
        }
        None => generate_manifold_dataset(&cfg.manifold)?,
    };
    Ok(if cfg.normalize { normalize_unit(&raw)? } else { raw })
}

fn init_nets(
    net: &NetSection,
    d_in: usize,
    d_out: usize,
    adversarial: bool,
    l: f64,
) -> anyhow::Result<(GeneratorNet, Option<DiscriminatorNet>)> {
    let gen = init_generator(net.width, d_in, d_out, net.init, &mut SeededRng::new(net.init_seed, GENERATOR_STREAM))?;
    let disc = if adversarial {
        Some(init_discriminator(net.width, d_out, l, &mut SeededRng::new(net.init_seed, CRITIC_STREAM))?)
    } else {
        None
    };
    Ok((gen, disc))
}

fn data_seeds(cfg: &DataSection) -> Vec<u64> {
    if cfg.idx.is_some() {
        Vec::new()
    } else {
        vec![cfg.manifold.seed]
    }
}

pub fn gen_data(cfg: &GenDataConfig, out: &mut RunOutput) -> anyhow::Result<()> {
    let ds = load_data(&cfg.data, out)?;
    out.write("dataset.csv", |w| Ok(ds.write_csv(w)?))?;
    println!("{} train / {} test samples, d_in = {}, d_out = {}", ds.train.len(), ds.test.len(), ds.d_in, ds.d_out);
    Ok(())
}

pub fn gen_data_seeds(cfg: &GenDataConfig) -> Vec<u64> {
    data_seeds(&cfg.data)
}

#[derive(Serialize)]
struct TrainSummary {
    steps_run: usize,
    stationary_step: Option<usize>,
    train_supervised_loss: f64,
    train_adversarial: f64,
    test_supervised_loss: Option<f64>,
    final_u_distance: f64,
    mean_neuron_variance: f64,
}

pub fn train(cfg: &TrainRunConfig, out: &mut RunOutput) -> anyhow::Result<()> {
    let ds = load_data(&cfg.data, out)?;
    let batch = ds.train_batch()?;
    let adversarial = cfg.train.mode == TrainMode::Adversarial;
    let (mut net, mut disc) = init_nets(&cfg.net, ds.d_in, ds.d_out, adversarial, cfg.train.l)?;
    let log = run_training(&cfg.train, &batch, &mut net, disc.as_mut())?;

    out.write("trajectory.csv", |w| Ok(log.write_csv(w)?))?;
    out.write("generator.ckpt", |w| Ok(net.write_checkpoint(w)?))?;
    if let Some(d) = &disc {
        out.write("critic.ckpt", |w| Ok(d.write_checkpoint(w)?))?;
    }
    let variances = neuron_variances(&net.u);
    out.write("variances.csv", |w| Ok(write_variances_csv(w, &variances)?))?;

    let train_loss = loss_breakdown(&net, disc.as_ref(), &batch)?;
    let test_supervised_loss =
        if ds.test.is_empty() { None } else { Some(loss_breakdown(&net, None, &ds.test_batch()?)?.supervised) };
    let last = log.last().context("empty trajectory")?;
    let summary = TrainSummary {
        steps_run: log.steps_run,
        stationary_step: log.stationary_step,
        train_supervised_loss: train_loss.supervised,
        train_adversarial: train_loss.adversarial,
        test_supervised_loss,
        final_u_distance: last.u_distance,
        mean_neuron_variance: mean(&variances),
    };
    out.write_json("summary.json", &summary)?;
    println!(
        "{} steps, train loss {:.6e}, ‖U−U0‖_F {:.6}, mean neuron variance {:.6e}",
        summary.steps_run, summary.train_supervised_loss, summary.final_u_distance, summary.mean_neuron_variance
    );
    Ok(())
}

pub fn train_seeds(cfg: &TrainRunConfig) -> Vec<u64> {
    let mut s = data_seeds(&cfg.data);
    s.extend([cfg.net.init_seed, cfg.train.seed]);
    s
}

#[derive(Serialize)]
struct GramSummary {
    n: usize,
    mc_samples: usize,
    infinite_width_mc: Spectrum,
    infinite_width_exact: Spectrum,
    mc_max_abs_error: f64,
    at_init: Spectrum,
    stability: Option<GramReport>,
}

pub fn gram(cfg: &GramConfig, out: &mut RunOutput) -> anyhow::Result<()> {
    let ds = load_data(&cfg.data, out)?;
    let x = ds.train_batch()?.x;
    let h_mc = gram_infinity(&x, cfg.mc_samples, &SeededRng::new(cfg.mc_seed, 0))?;
    let h_exact = gram_infinity_exact(&x);
    let exact_spec = gram_spectrum(&h_exact)?;
    let (net0, _) = init_nets(&cfg.net, ds.d_in, ds.d_out, false, 1.0)?;
    let stability = match &cfg.checkpoint {
        Some(path) => {
            out.add_input(path)?;
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let net_t = GeneratorNet::read_checkpoint(BufReader::new(file))?;
            if net_t.u.shape() != net0.u.shape() {
                return Err(usage("checkpoint width or input size differs from --width and the data"));
            }
            Some(gram_stability_report(&net_t, &net0, &x, Some(exact_spec.lambda_min), Some(exact_spec.lambda_max))?)
        }
        None => None,
    };
    let summary = GramSummary {
        n: x.rows(),
        mc_samples: cfg.mc_samples,
        infinite_width_mc: gram_spectrum(&h_mc)?,
        infinite_width_exact: exact_spec,
        mc_max_abs_error: h_mc.sub(&h_exact)?.max_abs(),
        at_init: gram_spectrum(&gram_at(&net0, &x)?)?,
        stability,
    };
    out.write("gram_infinity.csv", |w| write_matrix_csv(w, &h_mc))?;
    out.write_json("gram_report.json", &summary)?;
    println!(
        "λ_min(H∞) = {:.6e} (Monte-Carlo {:.6e}), λ_max = {:.6e}",
        summary.infinite_width_exact.lambda_min,
        summary.infinite_width_mc.lambda_min,
        summary.infinite_width_exact.lambda_max
    );
    Ok(())
}

pub fn gram_seeds(cfg: &GramConfig) -> Vec<u64> {
    let mut s = data_seeds(&cfg.data);
    s.extend([cfg.net.init_seed, cfg.mc_seed]);
    s
}

fn write_matrix_csv<W: Write>(w: &mut W, m: &prdlab::Matrix) -> anyhow::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for row in m.row_iter() {
        wtr.write_record(row.iter().map(|v| v.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct BoundsSummary {
    n: usize,
    m: usize,
    lambda_hat: f64,
    lambda0: f64,
    lambda1_inf: f64,
    mu: f64,
    kappa: f64,
    initial_error: f64,
    /// Mean initial error over independent initializations, used for the constants.
    mean_initial_error: f64,
    envelope_violations: usize,
    per_neuron_violations: usize,
    frobenius_violations: usize,
    final_quarter_growth: f64,
    constants: Option<ConstantsReport>,
    constants_error: Option<String>,
}

/// Relative growth of `‖U(t)−U(0)‖_F` over the final quarter of the logged steps.
fn final_quarter_growth(log: &TrajectoryLog) -> f64 {
    let last = match log.last() {
        Some(e) => e,
        None => return 0.0,
    };
    let cut = log.steps_run * 3 / 4;
    let at = log.entries.iter().find(|e| e.step >= cut).unwrap_or(last);
    if last.u_distance == 0.0 {
        0.0
    } else {
        (last.u_distance - at.u_distance) / last.u_distance
    }
}

pub fn verify_bounds(cfg: &VerifyBoundsConfig, out: &mut RunOutput) -> anyhow::Result<()> {
    let ds = load_data(&cfg.data, out)?;
    if ds.d_out != 1 {
        return Err(usage("the bounds concern scalar-output networks; use scalar labels"));
    }
    let batch = ds.train_batch()?;
    let mut train = cfg.train.clone();
    if train.gram_every == 0 {
        train.gram_every = train.log_every;
    }
    let adversarial = train.mode == TrainMode::Adversarial;
    let (mut net, mut disc) = init_nets(&cfg.net, ds.d_in, ds.d_out, adversarial, train.l)?;
    let log = run_training(&train, &batch, &mut net, disc.as_mut())?;

    let lambda_hat = log.entries.iter().filter_map(|e| e.gram_lambda_min).fold(f64::INFINITY, f64::min);
    let spec = gram_spectrum(&gram_infinity_exact(&batch.x))?;
    let (n, m) = (batch.len(), net.width());
    let mu_val = if adversarial { mu(train.l, n, m, cfg.delta) } else { 0.0 };
    let kappa = lambda1_from(spec.lambda_min, spec.lambda_max) / spec.lambda_min;
    let rows = bound_rows(&log, n, m, lambda_hat, cfg.delta, mu_val, kappa)?;
    let z0 = rows[0].pred_error;
    let mean_z0 = mean_initial_error(
        &batch.x,
        &batch.y,
        m,
        cfg.net.init,
        INITIAL_ERROR_INITS,
        &mut SeededRng::new(cfg.net.init_seed, INITIAL_ERROR_STREAM),
    )?;
    let constants = compute_constants(&BoundInputs {
        n,
        m,
        d_in: ds.d_in,
        lambda0: spec.lambda_min,
        lambda1_inf: spec.lambda_max,
        l: train.l,
        delta: cfg.delta,
        epsilon: cfg.epsilon,
        z0_err: mean_z0,
    });
    let summary = BoundsSummary {
        n,
        m,
        lambda_hat,
        lambda0: spec.lambda_min,
        lambda1_inf: spec.lambda_max,
        mu: mu_val,
        kappa,
        initial_error: z0,
        mean_initial_error: mean_z0,
        envelope_violations: rows.iter().filter(|r| r.pred_error > r.envelope * 1.05).count(),
        per_neuron_violations: rows.iter().filter(|r| r.max_neuron_distance > r.per_neuron_bound).count(),
        frobenius_violations: rows.iter().filter(|r| r.u_distance > r.frobenius_bound).count(),
        final_quarter_growth: final_quarter_growth(&log),
        constants_error: constants.as_ref().err().map(|e| e.to_string()),
        constants: constants.ok(),
    };
    out.write("bounds.csv", |w| Ok(write_bound_csv(w, &rows)?))?;
    out.write("trajectory.csv", |w| Ok(log.write_csv(w)?))?;
    out.write_json("bounds_summary.json", &summary)?;
    println!(
        "λ̂ = {:.6e}; envelope violations {}, per-neuron violations {}, final-quarter growth {:.3}%",
        summary.lambda_hat,
        summary.envelope_violations,
        summary.per_neuron_violations,
        100.0 * summary.final_quarter_growth
    );
    Ok(())
}

pub fn verify_bounds_seeds(cfg: &VerifyBoundsConfig) -> Vec<u64> {
    let mut s = data_seeds(&cfg.data);
    s.extend([cfg.net.init_seed, cfg.train.seed]);
    s
}

pub fn simulate(cfg: &SimulateConfig, out: &mut RunOutput) -> anyhow::Result<()> {
    cfg.model.validate()?;
    let grid = match &cfg.model {
        RdModel::Turing(p) => {
            init_turing(cfg.height, cfg.width, p.h, p.k, cfg.amplitude, &mut SeededRng::new(cfg.seed, 0))?
        }
        RdModel::GrayScott(_) => init_grayscott(cfg.height, cfg.width, cfg.patch)?,
    };
    let run = run_rd(&cfg.model, grid, cfg.steps, cfg.snapshot_every)?;
    out.write("stats.csv", |w| Ok(run.write_stats_csv(w)?))?;
    for (step, g) in &run.snapshots {
        for (field, values) in [("u", &g.u), ("v", &g.v)] {
            out.write(&format!("{field}_{step:06}.pgm"), |w| Ok(write_pgm(w, g.height, g.width, &to_gray8(values))?))?;
        }
    }
    let last = run.stats.last().context("no statistics recorded")?;
    println!(
        "{} steps, {} snapshots; final var(u) = {:.6e}, range [{:.4}, {:.4}]",
        cfg.steps,
        run.snapshots.len(),
        last.stats.var_u,
        last.stats.min,
        last.stats.max
    );
    Ok(())
}

pub fn simulate_seeds(cfg: &SimulateConfig) -> Vec<u64> {
    vec![cfg.seed]
}

fn image_shape(cfg: &FeatvizConfig, d_in: usize) -> anyhow::Result<(usize, usize)> {
    match (cfg.image_height, cfg.image_width) {
        (Some(h), Some(w)) => Ok((h, w)),
        (Some(h), None) if h > 0 && d_in.is_multiple_of(h) => Ok((h, d_in / h)),
        (None, Some(w)) if w > 0 && d_in.is_multiple_of(w) => Ok((d_in / w, w)),
        (None, None) => {
            let side = (d_in as f64).sqrt().round() as usize;
            Ok(if side * side == d_in { (side, side) } else { (1, d_in) })
        }
        _ => Err(usage(format!("image shape does not divide the input size {d_in}"))),
    }
}

pub fn featviz(cfg: &FeatvizConfig, out: &mut RunOutput) -> anyhow::Result<()> {
    out.add_input(&cfg.checkpoint)?;
    let file = File::open(&cfg.checkpoint).with_context(|| format!("opening {}", cfg.checkpoint.display()))?;
    let net = GeneratorNet::read_checkpoint(BufReader::new(file))?;
    let (h, w) = image_shape(cfg, net.d_in())?;
    let images = export_weight_images(&net.u, h, w, cfg.top_k)?;
    let x0 = base_input(net.d_in(), &mut SeededRng::new(cfg.seed, 0));

    let mut rows = Vec::with_capacity(images.len());
    for (rank, img) in images.iter().enumerate() {
        out.write(&format!("weight_{rank:02}_n{:05}.pgm", img.neuron), |wr| Ok(write_pgm(wr, h, w, &img.pixels)?))?;
        let res = maximize_excitation(net.u.row(img.neuron), &x0, &cfg.ascent)?;
        out.write(&format!("ascent_{rank:02}_n{:05}.pgm", img.neuron), |wr| {
            Ok(write_pgm(wr, h, w, &to_gray8(&res.delta))?)
        })?;
        rows.push((rank, img.neuron, img.norm, res));
    }
    out.write("ascent.csv", |wr| {
        let mut c = csv::Writer::from_writer(wr);
        c.write_record([
            "rank",
            "neuron",
            "norm",
            "dead_within_ball",
            "initial_excitation",
            "final_excitation",
            "max_linf",
        ])?;
        for (rank, j, norm, r) in &rows {
            let base = prdlab::numerics::dot(net.u.row(*j), &x0);
            let last = r.excitation.last().copied().unwrap_or(base);
            c.write_record([
                rank.to_string(),
                j.to_string(),
                norm.to_string(),
                r.dead_within_ball.to_string(),
                base.to_string(),
                last.to_string(),
                r.max_linf.to_string(),
            ])?;
        }
        c.flush()?;
        Ok(())
    })?;
    let variances = neuron_variances(&net.u);
    out.write("variances.csv", |wr| Ok(write_variances_csv(wr, &variances)?))?;
    println!("{} weight images of {h}x{w}; mean neuron variance {:.6e}", images.len(), mean(&variances));
    Ok(())
}

pub fn featviz_seeds(cfg: &FeatvizConfig) -> Vec<u64> {
    vec![cfg.seed]
}
