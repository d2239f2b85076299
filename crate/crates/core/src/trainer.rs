//! Gradient-descent training loops and their instrumentation.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::Batch;
use crate::error::{Error, Result};
use crate::network::{CriticColumns, DiscriminatorNet, GeneratorNet, InitSnapshot};
use crate::numerics::{Matrix, SeededRng};
use crate::objective::{
    backprop_generator, discriminator_gradients, draw_interpolation_weights, generator_gradients, output_gradients,
    project_rows_in_place, GradMode,
};
use crate::theory::{gram_at, gram_spectrum};

const DIVERGENCE_FACTOR: f64 = 1e6;
const SHUFFLE_STREAM: u64 = 100;
const INTERP_STREAM: u64 = 101;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    #[default]
    Supervised,
    Adversarial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub learning_rate: f64,
    /// Critic step size; the generator's when absent.
    pub critic_learning_rate: Option<f64>,
    pub momentum: f64,
    /// Minibatch size; full batch when absent.
    pub batch_size: Option<usize>,
    pub max_epochs: usize,
    /// Stationarity threshold on the largest gradient entry; `0` never triggers.
    pub epsilon_stationary: f64,
    /// Keep training after the first stationary step instead of stopping there.
    pub continue_after_stationary: bool,
    pub disc_steps_per_gen_step: usize,
    pub l: f64,
    pub gp_coeff: f64,
    pub seed: u64,
    pub log_every: usize,
    /// Record Gram spectra every this many steps (on logged steps only); `0` disables.
    pub gram_every: usize,
    /// Train the output layer as well as the hidden layer.
    pub train_output_layer: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Supervised,
            learning_rate: 1e-2,
            critic_learning_rate: None,
            momentum: 0.9,
            batch_size: None,
            max_epochs: 1000,
            epsilon_stationary: 0.0,
            continue_after_stationary: false,
            disc_steps_per_gen_step: 1,
            l: 0.01,
            gp_coeff: 0.0,
            seed: 1,
            log_every: 10,
            gram_every: 0,
            train_output_layer: true,
        }
    }
}

impl TrainConfig {
    /// Plain full-batch gradient descent on the hidden layer only.
    pub fn theory(mode: TrainMode, learning_rate: f64, max_epochs: usize) -> Self {
        Self { mode, learning_rate, momentum: 0.0, max_epochs, train_output_layer: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if self.disc_steps_per_gen_step == 0 {
            return Err(Error::InvalidParameter("disc_steps_per_gen_step must be at least 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidParameter("batch size must be positive".into()));
        }
        if self.log_every == 0 {
            return Err(Error::InvalidParameter("log_every must be positive".into()));
        }
        if !(self.l > 0.0) {
            return Err(Error::InvalidParameter(format!("L must be positive, got {}", self.l)));
        }
        if self.gp_coeff < 0.0 || self.epsilon_stationary < 0.0 {
            return Err(Error::InvalidParameter("gp_coeff and epsilon must be non-negative".into()));
        }
        Ok(())
    }

    fn critic_lr(&self) -> f64 {
        self.critic_learning_rate.unwrap_or(self.learning_rate)
    }
}

/// One logged step. Gram and reaction/diffusion columns are empty when not computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: usize,
    pub time: f64,
    pub supervised_loss: f64,
    pub adversarial: f64,
    pub pred_error: f64,
    pub max_neuron_distance: f64,
    pub u_distance: f64,
    pub v_distance: f64,
    pub gram_lambda_min: Option<f64>,
    pub gram_lambda_max: Option<f64>,
    pub reaction_u: f64,
    pub diffusion_u: f64,
    pub reaction_v: f64,
    pub diffusion_v: f64,
    pub mean_neuron_variance: f64,
}

pub const LOG_COLUMNS: [&str; 15] = [
    "step",
    "time",
    "supervised_loss",
    "adversarial",
    "pred_error",
    "max_neuron_distance",
    "u_distance",
    "v_distance",
    "gram_lambda_min",
    "gram_lambda_max",
    "reaction_u",
    "diffusion_u",
    "reaction_v",
    "diffusion_v",
    "mean_neuron_variance",
];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub entries: Vec<LogEntry>,
    /// First step at which every gradient entry was below `epsilon_stationary`.
    pub stationary_step: Option<usize>,
    /// Number of generator updates performed.
    pub steps_run: usize,
}

impl TrajectoryLog {
    pub fn last(&self) -> Option<&LogEntry> {
        self.entries.last()
    }

    pub fn column(&self, f: impl Fn(&LogEntry) -> f64) -> Vec<f64> {
        self.entries.iter().map(f).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(LOG_COLUMNS)?;
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for e in &self.entries {
            w.write_record([
                e.step.to_string(),
                e.time.to_string(),
                e.supervised_loss.to_string(),
                e.adversarial.to_string(),
                e.pred_error.to_string(),
                e.max_neuron_distance.to_string(),
                e.u_distance.to_string(),
                e.v_distance.to_string(),
                opt(e.gram_lambda_min),
                opt(e.gram_lambda_max),
                e.reaction_u.to_string(),
                e.diffusion_u.to_string(),
                e.reaction_v.to_string(),
                e.diffusion_v.to_string(),
                e.mean_neuron_variance.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-neuron reaction and diffusion terms; row `j` belongs to neuron `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct RDTerms {
    /// `m × d_in`.
    pub r_u: Matrix,
    /// `m × d_in`.
    pub d_u: Matrix,
    /// `m × d_out`.
    pub r_v: Matrix,
    /// `m × d_out`.
    pub d_v: Matrix,
}

/// Reaction terms from the supervised residual and diffusion terms from the critic chain.
///
/// `R_u_j = −(1/√(d_out m)) Σ_p (z_p − y_p)ᵀ v_j 1{u_j·x_p ≥ 0} x_p`,
/// `D_u_j = (1/(m√d_out)) Σ_p aᵀ diag(1{W V σ(U x_p) ≥ 0}) W v_j 1{u_j·x_p ≥ 0} x_p`,
/// `R_v_j = −(1/√(d_out m)) Σ_p (z_p − y_p) σ(u_j·x_p)`,
/// `D_v_j = (1/(m√d_out)) Σ_p σ(u_j·x_p) Wᵀ diag(1{W V σ(U x_p) ≥ 0}) a`.
pub fn reaction_diffusion_terms(net: &GeneratorNet, disc: &DiscriminatorNet, batch: &Batch) -> Result<RDTerms> {
    if disc.width() != net.width() || disc.d_out() != net.d_out() {
        return Err(Error::Dimension("critic and generator widths or outputs differ".into()));
    }
    let (m, d_out) = (net.width(), net.d_out());
    let pre = net.preactivations(&batch.x)?;
    let z = net.outputs_from_preactivations(&pre);
    let s_sup = net.scale();
    let s_adv = 1.0 / (m as f64 * (d_out as f64).sqrt());
    let mut resid = z.clone();
    resid.add_scaled(-1.0, &batch.y);
    // rows c_p = Wᵀ diag(1{W V σ(U x_p) ≥ 0}) a, rescaled so the generator scale becomes s_adv
    let cols = CriticColumns::new(disc);
    let mut h = vec![0.0; m];
    let mut c = Matrix::zeros(batch.len(), d_out);
    let c_scale = s_adv * (m as f64).sqrt() / s_sup;
    for p in 0..batch.len() {
        let vh: Vec<f64> = z.row(p).iter().map(|zi| zi / s_sup).collect();
        cols.preactivations_into(&vh, &mut h);
        cols.gradient_into(&h, c.row_mut(p));
        c.row_mut(p).iter_mut().for_each(|x| *x *= c_scale);
    }
    let reaction = backprop_generator(net, &batch.x, &pre, &resid);
    let diffusion = backprop_generator(net, &batch.x, &pre, &c);
    let r_u = reaction.du.map(|x| -x);
    let r_v = reaction.dv.transpose().map(|x| -x);
    Ok(RDTerms { r_u, d_u: diffusion.du, r_v, d_v: diffusion.dv.transpose() })
}

/// Whether every generator gradient entry is strictly below `epsilon`, and the largest entry.
/// Differentiates the augmented objective when a critic is given.
pub fn is_epsilon_stationary(
    net: &GeneratorNet,
    disc: Option<&DiscriminatorNet>,
    batch: &Batch,
    epsilon: f64,
) -> Result<(bool, f64)> {
    let mode = if disc.is_some() { GradMode::Augmented } else { GradMode::Supervised };
    let g = generator_gradients(net, disc, batch, mode)?;
    let max = g.max_abs();
    Ok((max < epsilon, max))
}

/// Relative mismatch between one hidden-layer GD step and the kernel prediction dynamics
/// `dz/dt = H(t)(y − z) + H(t)∇_z g`.
pub fn dynamics_residual(
    net: &GeneratorNet,
    disc: Option<&DiscriminatorNet>,
    batch: &Batch,
    learning_rate: f64,
) -> Result<f64> {
    if net.d_out() != 1 {
        return Err(Error::Precondition("prediction dynamics need a scalar-output generator".into()));
    }
    if !(learning_rate > 0.0) {
        return Err(Error::InvalidParameter("learning rate must be positive".into()));
    }
    let mode = if disc.is_some() { GradMode::Augmented } else { GradMode::Supervised };
    let z0 = net.forward_batch(&batch.x)?;
    let h = gram_at(net, &batch.x)?;
    let grads = generator_gradients(net, disc, batch, mode)?;
    let mut stepped = net.clone();
    stepped.u.add_scaled(-learning_rate, &grads.du);
    let z1 = stepped.forward_batch(&batch.x)?;

    let n = batch.len();
    let mut field = vec![0.0; n];
    for p in 0..n {
        field[p] = batch.y[(p, 0)] - z0[(p, 0)];
        if let Some(d) = disc {
            field[p] += d.input_gradient(z0.row(p))[0];
        }
    }
    let target = h.matvec(&field)?;
    let num: f64 = (0..n)
        .map(|p| {
            let e = (z1[(p, 0)] - z0[(p, 0)]) / learning_rate - target[p];
            e * e
        })
        .sum::<f64>()
        .sqrt();
    Ok(num / z0.frobenius_norm())
}

/// Least-squares line through `(xs, ys)`: `(slope, intercept, r²)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidParameter("linear fit needs at least two paired points".into()));
    }
    let mx = crate::numerics::mean(xs);
    let my = crate::numerics::mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("linear fit needs distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok((slope, my - slope * mx, r2))
}

fn mean_row_variance(u: &Matrix) -> f64 {
    let vars: Vec<f64> = u.row_iter().map(crate::numerics::variance).collect();
    crate::numerics::mean(&vars)
}

struct Momentum {
    du: Matrix,
    dv: Matrix,
    dw: Matrix,
    da: Vec<f64>,
}

fn heavy_ball(buf: &mut [f64], grad: &[f64], beta: f64, lr: f64, w: &mut [f64]) {
    for ((b, &g), x) in buf.iter_mut().zip(grad).zip(w.iter_mut()) {
        *b = beta * *b + g;
        *x -= lr * *b;
    }
}

fn log_entry(
    step: usize,
    cfg: &TrainConfig,
    net: &GeneratorNet,
    disc: Option<&DiscriminatorNet>,
    snap: &InitSnapshot,
    batch: &Batch,
) -> Result<LogEntry> {
    let pre = net.preactivations(&batch.x)?;
    let z = net.outputs_from_preactivations(&pre);
    let sup_grad = output_gradients(&z, &batch.y, None, GradMode::Supervised);
    let pred_error = sup_grad.frobenius_norm();
    let supervised_loss = 0.5 * pred_error * pred_error;
    let reaction = backprop_generator(net, &batch.x, &pre, &sup_grad);
    let (adversarial, diffusion) = match disc {
        Some(d) => {
            let mut adv = 0.0;
            let mut gz = Matrix::zeros(z.rows(), z.cols());
            for p in 0..z.rows() {
                adv += d.forward(z.row(p))?;
                gz.row_mut(p).copy_from_slice(&d.input_gradient(z.row(p)));
            }
            (adv, Some(backprop_generator(net, &batch.x, &pre, &gz)))
        }
        None => (0.0, None),
    };
    let (gram_lambda_min, gram_lambda_max) = if cfg.gram_every > 0 && step.is_multiple_of(cfg.gram_every) {
        let s = gram_spectrum(&gram_at(net, &batch.x)?)?;
        (Some(s.lambda_min), Some(s.lambda_max))
    } else {
        (None, None)
    };
    Ok(LogEntry {
        step,
        time: cfg.learning_rate * step as f64,
        supervised_loss,
        adversarial,
        pred_error,
        max_neuron_distance: snap.max_neuron_distance(net),
        u_distance: snap.hidden_distance(net),
        v_distance: snap.output_distance(net),
        gram_lambda_min,
        gram_lambda_max,
        reaction_u: reaction.du.frobenius_norm(),
        diffusion_u: diffusion.as_ref().map_or(0.0, |g| g.du.frobenius_norm()),
        reaction_v: reaction.dv.frobenius_norm(),
        diffusion_v: diffusion.as_ref().map_or(0.0, |g| g.dv.frobenius_norm()),
        mean_neuron_variance: mean_row_variance(&net.u),
    })
}

/// Trains `net` (and `disc` in adversarial mode) on `batch` and returns the trajectory.
///
/// A step is one generator update. In adversarial mode each step is preceded by
/// `disc_steps_per_gen_step` critic updates on the same minibatch, each followed by the row-norm
/// projection. Stops after `max_epochs` passes over the data, or at the first ε-stationary step
/// unless `continue_after_stationary` is set.
pub fn run_training(
    cfg: &TrainConfig,
    batch: &Batch,
    net: &mut GeneratorNet,
    mut disc: Option<&mut DiscriminatorNet>,
) -> Result<TrajectoryLog> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(Error::InvalidParameter("training set is empty".into()));
    }
    if batch.d_in() != net.d_in() || batch.d_out() != net.d_out() {
        return Err(Error::Dimension("dataset and generator dimensions differ".into()));
    }
    if cfg.mode == TrainMode::Adversarial {
        match disc.as_deref() {
            Some(d) if d.d_out() == net.d_out() => {}
            Some(_) => return Err(Error::Dimension("critic input size differs from generator output".into())),
            None => return Err(Error::Precondition("adversarial training needs a critic".into())),
        }
    }
    if let Some(d) = disc.as_deref_mut() {
        project_rows_in_place(&mut d.w, cfg.l);
        d.l = cfg.l;
    }
    let adversarial = cfg.mode == TrainMode::Adversarial;
    let snap = InitSnapshot::capture(net);
    let n = batch.len();
    let bs = cfg.batch_size.unwrap_or(n).min(n);
    let full_batch = bs == n;
    let batches_per_epoch = n.div_ceil(bs);
    let total_steps = cfg.max_epochs * batches_per_epoch;
    let mut shuffle_rng = SeededRng::new(cfg.seed, SHUFFLE_STREAM);
    let mut interp_rng = SeededRng::new(cfg.seed, INTERP_STREAM);
    let mut order: Vec<usize> = (0..n).collect();
    let mut mom = Momentum {
        du: Matrix::zeros(net.u.rows(), net.u.cols()),
        dv: Matrix::zeros(net.v.rows(), net.v.cols()),
        dw: disc.as_deref().map_or(Matrix::zeros(0, 0), |d| Matrix::zeros(d.w.rows(), d.w.cols())),
        da: disc.as_deref().map_or(Vec::new(), |d| vec![0.0; d.a.len()]),
    };
    let mut log = TrajectoryLog::default();
    let critic_for_log = |d: &Option<&mut DiscriminatorNet>| if adversarial { d.as_deref().cloned() } else { None };

    let first = log_entry(0, cfg, net, critic_for_log(&disc).as_ref(), &snap, batch)?;
    let initial_loss = first.supervised_loss.max(f64::MIN_POSITIVE);
    log.entries.push(first);

    let mut step = 0;
    'epochs: for _epoch in 0..cfg.max_epochs {
        if !full_batch {
            shuffle_rng.shuffle(&mut order);
        }
        for b in 0..batches_per_epoch {
            let mb_owned;
            let mb = if full_batch {
                batch
            } else {
                mb_owned = batch.select(&order[b * bs..((b + 1) * bs).min(n)]);
                &mb_owned
            };

            let pre = net.preactivations(&mb.x)?;
            let z = net.outputs_from_preactivations(&pre);
            if adversarial {
                let d = disc.as_deref_mut().expect("critic checked above");
                for _ in 0..cfg.disc_steps_per_gen_step {
                    let interp = if cfg.gp_coeff != 0.0 {
                        draw_interpolation_weights(mb.len(), &mut interp_rng)
                    } else {
                        Vec::new()
                    };
                    let cg = discriminator_gradients(d, &mb.y, &z, cfg.gp_coeff, &interp)?;
                    let lr = cfg.critic_lr();
                    heavy_ball(mom.dw.as_mut_slice(), cg.dw.as_slice(), cfg.momentum, lr, d.w.as_mut_slice());
                    heavy_ball(&mut mom.da, &cg.da, cfg.momentum, lr, &mut d.a);
                    project_rows_in_place(&mut d.w, cfg.l);
                }
            }

            let critic = if adversarial { disc.as_deref() } else { None };
            let mode = if adversarial { GradMode::Augmented } else { GradMode::Supervised };
            let dz = output_gradients(&z, &mb.y, critic, mode);
            let grads = backprop_generator(net, &mb.x, &pre, &dz);

            if cfg.epsilon_stationary > 0.0 && log.stationary_step.is_none() {
                let max = if full_batch {
                    let mut mx = grads.du.max_abs();
                    if cfg.train_output_layer {
                        mx = mx.max(grads.dv.max_abs());
                    }
                    mx
                } else {
                    let g = generator_gradients(net, critic, batch, mode)?;
                    if cfg.train_output_layer {
                        g.max_abs()
                    } else {
                        g.du.max_abs()
                    }
                };
                if max < cfg.epsilon_stationary {
                    log.stationary_step = Some(step);
                    if !cfg.continue_after_stationary {
                        break 'epochs;
                    }
                }
            }

            heavy_ball(
                mom.du.as_mut_slice(),
                grads.du.as_slice(),
                cfg.momentum,
                cfg.learning_rate,
                net.u.as_mut_slice(),
            );
            if cfg.train_output_layer {
                heavy_ball(
                    mom.dv.as_mut_slice(),
                    grads.dv.as_slice(),
                    cfg.momentum,
                    cfg.learning_rate,
                    net.v.as_mut_slice(),
                );
            }
            step += 1;

            if step % cfg.log_every == 0 || step == total_steps {
                let entry = log_entry(step, cfg, net, critic_for_log(&disc).as_ref(), &snap, batch)?;
                let loss = entry.supervised_loss - entry.adversarial;
                if !loss.is_finite() || !net.is_finite() {
                    return Err(Error::NonFinite { step });
                }
                if entry.supervised_loss > DIVERGENCE_FACTOR * initial_loss {
                    return Err(Error::Diverged { step, loss: entry.supervised_loss });
                }
                log.entries.push(entry);
            } else if !net.is_finite() {
                return Err(Error::NonFinite { step });
            }
        }
    }
    if log.entries.last().map(|e| e.step) != Some(step) {
        log.entries.push(log_entry(step, cfg, net, critic_for_log(&disc).as_ref(), &snap, batch)?);
    }
    log.steps_run = step;
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_discriminator, init_generator, InitMode};
    use crate::numerics::{active, axpy, dot, relu};
    use crate::objective::generator_gradients;

    fn scalar_data(n: usize, d: usize, seed: u64) -> Batch {
        let mut rng = SeededRng::new(seed, 7);
        let mut x = rng.gaussian_matrix(n, d);
        for i in 0..n {
            let r = crate::numerics::norm2(x.row(i));
            x.row_mut(i).iter_mut().for_each(|v| *v /= r);
        }
        let y = Matrix::from_fn(n, 1, |_, _| rng.uniform(-1.0, 1.0));
        Batch { x, y }
    }

    #[test]
    fn step_zero_distances_vanish() {
        let batch = scalar_data(6, 4, 1);
        let mut net = init_generator(32, 4, 1, InitMode::Theory, &mut SeededRng::new(1, 0)).unwrap();
        let log = run_training(&TrainConfig::theory(TrainMode::Supervised, 1e-2, 20), &batch, &mut net, None).unwrap();
        let e0 = &log.entries[0];
        assert_eq!((e0.u_distance, e0.v_distance, e0.max_neuron_distance), (0.0, 0.0, 0.0));
        assert!(log.entries.windows(2).all(|w| w[0].step < w[1].step));
    }

    #[test]
    fn zero_learning_rate_freezes() {
        let batch = scalar_data(6, 4, 2);
        let mut rng = SeededRng::new(2, 0);
        let mut net = init_generator(32, 4, 1, InitMode::Theory, &mut rng).unwrap();
        let mut disc = init_discriminator(32, 1, 0.01, &mut rng).unwrap();
        let cfg =
            TrainConfig { mode: TrainMode::Adversarial, learning_rate: 0.0, max_epochs: 30, ..TrainConfig::default() };
        let log = run_training(&cfg, &batch, &mut net, Some(&mut disc)).unwrap();
        let e0 = &log.entries[0];
        for e in &log.entries {
            assert_eq!(e.supervised_loss, e0.supervised_loss);
            assert_eq!(e.adversarial, e0.adversarial);
            assert_eq!(e.u_distance, 0.0);
        }
    }

    #[test]
    fn small_supervised_run_converges() {
        let batch = scalar_data(8, 5, 3);
        let mut net = init_generator(512, 5, 1, InitMode::Theory, &mut SeededRng::new(3, 0)).unwrap();
        let cfg = TrainConfig { log_every: 100, ..TrainConfig::theory(TrainMode::Supervised, 0.5, 5000) };
        let log = run_training(&cfg, &batch, &mut net, None).unwrap();
        assert!(log.last().unwrap().supervised_loss <= 1e-3, "{:?}", log.last());
    }

    #[test]
    fn runs_are_bit_identical() {
        let batch = scalar_data(10, 3, 4);
        let run = || {
            let mut rng = SeededRng::new(4, 0);
            let mut net = init_generator(16, 3, 1, InitMode::Theory, &mut rng).unwrap();
            let mut disc = init_discriminator(16, 1, 0.01, &mut rng).unwrap();
            let cfg = TrainConfig {
                mode: TrainMode::Adversarial,
                batch_size: Some(4),
                gp_coeff: 10.0,
                max_epochs: 5,
                log_every: 1,
                ..TrainConfig::default()
            };
            let log = run_training(&cfg, &batch, &mut net, Some(&mut disc)).unwrap();
            let mut buf = Vec::new();
            log.write_csv(&mut buf).unwrap();
            buf
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn stationarity_cases() {
        let mut rng = SeededRng::new(5, 0);
        let net = init_generator(16, 3, 1, InitMode::Theory, &mut rng).unwrap();
        let x = rng.gaussian_matrix(4, 3);
        let exact = Batch { y: net.forward_batch(&x).unwrap(), x: x.clone() };
        assert!(is_epsilon_stationary(&net, None, &exact, 1e-300).unwrap().0);
        let noisy = Batch { y: rng.gaussian_matrix(4, 1), x };
        let (st, max) = is_epsilon_stationary(&net, None, &noisy, 0.0).unwrap();
        assert!(!st && max > 0.0);
        assert!(is_epsilon_stationary(&net, None, &noisy, max + 1e-9).unwrap().0);
        assert!(!is_epsilon_stationary(&net, None, &noisy, max).unwrap().0);
    }

    /// Per-neuron loops over the four expressions, written out term by term.
    fn rd_terms_literal(net: &GeneratorNet, disc: &DiscriminatorNet, batch: &Batch) -> RDTerms {
        let (m, d_in, d_out) = (net.width(), net.d_in(), net.d_out());
        let s_sup = 1.0 / ((d_out * m) as f64).sqrt();
        let s_adv = 1.0 / (m as f64 * (d_out as f64).sqrt());
        let mut r_u = Matrix::zeros(m, d_in);
        let mut d_u = Matrix::zeros(m, d_in);
        let mut r_v = Matrix::zeros(m, d_out);
        let mut d_v = Matrix::zeros(m, d_out);
        for p in 0..batch.len() {
            let xp = batch.x.row(p);
            let hidden: Vec<f64> = net.u.row_iter().map(|u| relu(dot(u, xp))).collect();
            let vh = net.v.matvec(&hidden).unwrap();
            let z: Vec<f64> = vh.iter().map(|v| s_sup * v).collect();
            let resid: Vec<f64> = z.iter().zip(batch.y.row(p)).map(|(a, b)| a - b).collect();
            let mut c = vec![0.0; d_out];
            for (w_r, &a_r) in disc.w.row_iter().zip(&disc.a) {
                if active(dot(w_r, &vh)) {
                    axpy(a_r, w_r, &mut c);
                }
            }
            for j in 0..m {
                let h = dot(net.u.row(j), xp);
                let v_j: Vec<f64> = (0..d_out).map(|i| net.v[(i, j)]).collect();
                if active(h) {
                    axpy(-s_sup * dot(&resid, &v_j), xp, r_u.row_mut(j));
                    axpy(s_adv * dot(&c, &v_j), xp, d_u.row_mut(j));
                }
                axpy(-s_sup * relu(h), &resid, r_v.row_mut(j));
                axpy(s_adv * relu(h), &c, d_v.row_mut(j));
            }
        }
        RDTerms { r_u, d_u, r_v, d_v }
    }

    #[test]
    fn rd_terms_match_literal_sums() {
        let mut rng = SeededRng::new(16, 0);
        let net = init_generator(20, 5, 3, InitMode::Xavier, &mut rng).unwrap();
        let disc = init_discriminator(20, 3, 0.5, &mut rng).unwrap();
        let batch = Batch { x: rng.gaussian_matrix(6, 5), y: rng.gaussian_matrix(6, 3) };
        let fast = reaction_diffusion_terms(&net, &disc, &batch).unwrap();
        let slow = rd_terms_literal(&net, &disc, &batch);
        for (a, b) in [(&fast.r_u, &slow.r_u), (&fast.d_u, &slow.d_u), (&fast.r_v, &slow.r_v), (&fast.d_v, &slow.d_v)] {
            assert!(a.distance(b) <= 1e-12 * (1.0 + b.frobenius_norm()));
        }
    }

    #[test]
    fn rd_terms_match_augmented_gradient() {
        let mut rng = SeededRng::new(6, 0);
        let net = init_generator(12, 4, 3, InitMode::Theory, &mut rng).unwrap();
        let disc = init_discriminator(12, 3, 1.0, &mut rng).unwrap();
        let batch = Batch { x: rng.gaussian_matrix(5, 4), y: rng.gaussian_matrix(5, 3) };
        let rd = reaction_diffusion_terms(&net, &disc, &batch).unwrap();
        let g = generator_gradients(&net, Some(&disc), &batch, GradMode::Augmented).unwrap();
        for j in 0..12 {
            for k in 0..4 {
                assert!((g.du[(j, k)] + rd.r_u[(j, k)] + rd.d_u[(j, k)]).abs() <= 1e-10);
            }
            for i in 0..3 {
                assert!((g.dv[(i, j)] + rd.r_v[(j, i)] + rd.d_v[(j, i)]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn rd_terms_vanish_in_degenerate_cases() {
        let mut rng = SeededRng::new(7, 0);
        let net = init_generator(10, 3, 2, InitMode::Theory, &mut rng).unwrap();
        let x = rng.gaussian_matrix(4, 3);
        let exact = Batch { y: net.forward_batch(&x).unwrap(), x };
        let disc = init_discriminator(10, 2, 1.0, &mut rng).unwrap();
        let rd = reaction_diffusion_terms(&net, &disc, &exact).unwrap();
        assert_eq!(rd.r_u.max_abs(), 0.0);
        assert_eq!(rd.r_v.max_abs(), 0.0);

        // Critic rows pointing away from the non-negative orthant never fire on outputs of a
        // net whose output weights are all positive.
        let mut pos = net.clone();
        pos.v.as_mut_slice().iter_mut().for_each(|v| *v = v.abs());
        let dead = DiscriminatorNet::from_weights(Matrix::from_fn(10, 2, |_, _| -1.0), vec![1.0; 10], 10.0).unwrap();
        let batch = Batch { x: exact.x.clone(), y: Matrix::zeros(4, 2) };
        let any_positive = pos.forward_batch(&batch.x).unwrap().as_slice().iter().any(|&z| z > 0.0);
        assert!(any_positive);
        let rd = reaction_diffusion_terms(&pos, &dead, &batch).unwrap();
        assert_eq!(rd.d_u.max_abs(), 0.0);
        assert_eq!(rd.d_v.max_abs(), 0.0);
    }

    #[test]
    fn linear_fit_exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let (s, b, r2) = linear_fit(&xs, &ys).unwrap();
        assert!((s - 2.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_csv_header() {
        let batch = scalar_data(4, 3, 8);
        let mut net = init_generator(8, 3, 1, InitMode::Theory, &mut SeededRng::new(8, 0)).unwrap();
        let log = run_training(&TrainConfig::theory(TrainMode::Supervised, 0.1, 3), &batch, &mut net, None).unwrap();
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(&LOG_COLUMNS.join(",")));
        assert_eq!(text.lines().count(), 1 + log.entries.len());
    }
}
