//! Supervised and adversarial objectives with closed-form gradients.

use serde::{Deserialize, Serialize};

use crate::dataset::Batch;
use crate::error::{Error, Result};
use crate::network::{CriticColumns, DiscriminatorNet, GeneratorNet};
use crate::numerics::{active, axpy, gemm, norm2, relu, Matrix, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub supervised: f64,
    pub adversarial: f64,
    pub augmented: f64,
}

/// Which generator objective to differentiate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradMode {
    Supervised,
    Augmented,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorGradients {
    /// `m × d_in`.
    pub du: Matrix,
    /// `d_out × m`.
    pub dv: Matrix,
}

impl GeneratorGradients {
    pub fn max_abs(&self) -> f64 {
        self.du.max_abs().max(self.dv.max_abs())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticGradients {
    /// `m × d_out`.
    pub dw: Matrix,
    pub da: Vec<f64>,
    /// Critic loss at the evaluated point.
    pub loss: f64,
}

fn check_batch(net: &GeneratorNet, batch: &Batch) -> Result<()> {
    if batch.d_in() != net.d_in() || batch.d_out() != net.d_out() {
        return Err(Error::Dimension(format!(
            "batch is {}→{}, network is {}→{}",
            batch.d_in(),
            batch.d_out(),
            net.d_in(),
            net.d_out()
        )));
    }
    Ok(())
}

fn check_critic(net: &GeneratorNet, disc: &DiscriminatorNet) -> Result<()> {
    if disc.d_out() != net.d_out() {
        return Err(Error::Dimension(format!(
            "critic reads {} outputs, generator produces {}",
            disc.d_out(),
            net.d_out()
        )));
    }
    Ok(())
}

fn half_squared_error(z: &Matrix, y: &Matrix) -> f64 {
    0.5 * z.as_slice().iter().zip(y.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

fn critic_sum(disc: &DiscriminatorNet, z: &Matrix) -> f64 {
    let cols = CriticColumns::new(disc);
    let mut h = vec![0.0; disc.width()];
    z.row_iter()
        .map(|zp| {
            cols.preactivations_into(zp, &mut h);
            cols.value(&h)
        })
        .sum()
}

/// `½ Σ_p ‖f(x_p) − y_p‖²`.
pub fn supervised_loss(net: &GeneratorNet, batch: &Batch) -> Result<f64> {
    check_batch(net, batch)?;
    Ok(half_squared_error(&net.forward_batch(&batch.x)?, &batch.y))
}

/// `Σ_p g(f(x_p))`.
///
/// The vector-output form `Σ_p aᵀσ(W V σ(U x_p)) / (m √d_out)` coincides with this because
/// ReLU is positively homogeneous and the generator carries the `1/√(d_out·m)` factor.
pub fn adversarial_term(net: &GeneratorNet, disc: &DiscriminatorNet, batch: &Batch) -> Result<f64> {
    check_batch(net, batch)?;
    check_critic(net, disc)?;
    Ok(critic_sum(disc, &net.forward_batch(&batch.x)?))
}

pub fn loss_breakdown(net: &GeneratorNet, disc: Option<&DiscriminatorNet>, batch: &Batch) -> Result<LossBreakdown> {
    check_batch(net, batch)?;
    let z = net.forward_batch(&batch.x)?;
    let supervised = half_squared_error(&z, &batch.y);
    let adversarial = match disc {
        Some(d) => {
            check_critic(net, d)?;
            critic_sum(d, &z)
        }
        None => 0.0,
    };
    Ok(LossBreakdown { supervised, adversarial, augmented: supervised - adversarial })
}

/// Backpropagates per-sample output gradients `dz` (`n × d_out`) through the generator.
pub fn backprop_generator(net: &GeneratorNet, x: &Matrix, pre: &Matrix, dz: &Matrix) -> GeneratorGradients {
    let (m, d_in, d_out) = (net.width(), net.d_in(), net.d_out());
    let scale = net.scale();
    let n = x.rows();
    let mut dv = Matrix::zeros(d_out, m);
    // C_pj = scale · 1{P_pj ≥ 0} · (dz V)_pj, then dU = Cᵀ X
    let mut c = Matrix::zeros(n, m);
    for p in 0..n {
        let pre_p = pre.row(p);
        let c_p = c.row_mut(p);
        for (i, &g) in dz.row(p).iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let g = scale * g;
            axpy(g, net.v.row(i), c_p);
            for (dvij, &h) in dv.row_mut(i).iter_mut().zip(pre_p) {
                *dvij += g * relu(h);
            }
        }
        for (cj, &h) in c.row_mut(p).iter_mut().zip(pre_p) {
            if !active(h) {
                *cj = 0.0;
            }
        }
    }
    let mut du = Matrix::zeros(m, d_in);
    gemm(1.0, c.t(), x.view(), 0.0, &mut du);
    GeneratorGradients { du, dv }
}

/// Gradient of the loss with respect to the generator outputs: `z − y`, minus `∇g(z)` when augmented.
pub fn output_gradients(z: &Matrix, y: &Matrix, disc: Option<&DiscriminatorNet>, mode: GradMode) -> Matrix {
    let mut dz = z.clone();
    dz.add_scaled(-1.0, y);
    if let (GradMode::Augmented, Some(d)) = (mode, disc) {
        let cols = CriticColumns::new(d);
        let mut h = vec![0.0; d.width()];
        let mut g = vec![0.0; d.d_out()];
        for p in 0..z.rows() {
            cols.preactivations_into(z.row(p), &mut h);
            cols.gradient_into(&h, &mut g);
            axpy(-1.0, &g, dz.row_mut(p));
        }
    }
    dz
}

/// Exact gradients of `L_sup` or `L_aug = L_sup − L_adv` with respect to `U` and `V`.
pub fn generator_gradients(
    net: &GeneratorNet,
    disc: Option<&DiscriminatorNet>,
    batch: &Batch,
    mode: GradMode,
) -> Result<GeneratorGradients> {
    check_batch(net, batch)?;
    if mode == GradMode::Augmented {
        match disc {
            Some(d) => check_critic(net, d)?,
            None => return Err(Error::Precondition("augmented gradients need a critic".into())),
        }
    }
    let pre = net.preactivations(&batch.x)?;
    let z = net.outputs_from_preactivations(&pre);
    let dz = output_gradients(&z, &batch.y, disc, mode);
    Ok(backprop_generator(net, &batch.x, &pre, &dz))
}

/// One interpolation weight per real/fake pair, uniform on `[0, 1)`.
pub fn draw_interpolation_weights(n: usize, rng: &mut SeededRng) -> Vec<f64> {
    (0..n).map(|_| rng.uniform01()).collect()
}

/// Gradients of `mean g(fake) − mean g(real) + gp · mean (‖∇_y g(ŷ)‖ − 1)²`
/// where `ŷ_p = t_p·real_p + (1 − t_p)·fake_p`.
///
/// Indicators are held fixed when differentiating the penalty. At `∇_y g = 0` the penalty
/// contributes its value but no gradient.
pub fn discriminator_gradients(
    disc: &DiscriminatorNet,
    real: &Matrix,
    fake: &Matrix,
    gp_coeff: f64,
    interp: &[f64],
) -> Result<CriticGradients> {
    if real.rows() != fake.rows() {
        return Err(Error::Dimension(format!("{} real points but {} fake points", real.rows(), fake.rows())));
    }
    if real.cols() != disc.d_out() || fake.cols() != disc.d_out() {
        return Err(Error::Dimension(format!(
            "critic reads {} coordinates, got {} and {}",
            disc.d_out(),
            real.cols(),
            fake.cols()
        )));
    }
    if real.rows() == 0 {
        return Err(Error::InvalidParameter("critic batch is empty".into()));
    }
    if gp_coeff != 0.0 && interp.len() != real.rows() {
        return Err(Error::Dimension(format!("{} interpolation weights for {} pairs", interp.len(), real.rows())));
    }
    let (m, d_out) = (disc.width(), disc.d_out());
    let n = real.rows() as f64;
    let s = 1.0 / (m as f64).sqrt();
    let cols = CriticColumns::new(disc);
    // dW_ri = (s/n) a_r acc_ir
    let mut acc = Matrix::zeros(d_out, m);
    let mut da = vec![0.0; m];
    let mut loss = 0.0;
    let mut h = vec![0.0; m];

    for p in 0..real.rows() {
        for (y, sign) in [(fake.row(p), 1.0), (real.row(p), -1.0)] {
            cols.preactivations_into(y, &mut h);
            loss += sign * cols.value(&h) / n;
            let c = sign * s / n;
            for (dar, &hr) in da.iter_mut().zip(&h) {
                *dar += c * relu(hr);
            }
            for (i, &yi) in y.iter().enumerate() {
                let c = sign * yi;
                for (acc_r, &hr) in acc.row_mut(i).iter_mut().zip(&h) {
                    if active(hr) {
                        *acc_r += c;
                    }
                }
            }
        }
    }

    if gp_coeff != 0.0 {
        let mut yhat = vec![0.0; d_out];
        let mut grad = vec![0.0; d_out];
        let mut wg = vec![0.0; m];
        for (p, &t) in interp.iter().enumerate().take(real.rows()) {
            for ((yh, &r), &f) in yhat.iter_mut().zip(real.row(p)).zip(fake.row(p)) {
                *yh = t * r + (1.0 - t) * f;
            }
            cols.preactivations_into(&yhat, &mut h);
            cols.gradient_into(&h, &mut grad);
            let gn = norm2(&grad);
            loss += gp_coeff * (gn - 1.0) * (gn - 1.0) / n;
            if gn == 0.0 {
                continue;
            }
            // d/dθ of (‖∇g‖ − 1)² with fixed indicators
            let coef = gp_coeff * 2.0 * (gn - 1.0) / gn;
            cols.preactivations_into(&grad, &mut wg);
            for r in 0..m {
                if active(h[r]) {
                    da[r] += coef * s / n * wg[r];
                }
            }
            for (i, &gi) in grad.iter().enumerate() {
                let c = coef * gi;
                for (acc_r, &hr) in acc.row_mut(i).iter_mut().zip(&h) {
                    if active(hr) {
                        *acc_r += c;
                    }
                }
            }
        }
    }

    let mut dw = Matrix::zeros(m, d_out);
    for r in 0..m {
        let f = s / n * disc.a[r];
        for i in 0..d_out {
            dw[(r, i)] = f * acc[(i, r)];
        }
    }
    Ok(CriticGradients { dw, da, loss })
}

/// Rescales every row with norm above `l` onto the sphere of radius `l`.
pub fn project_row_norm(w: &Matrix, l: f64) -> Matrix {
    let mut out = w.clone();
    project_rows_in_place(&mut out, l);
    out
}

pub fn project_rows_in_place(w: &mut Matrix, l: f64) {
    for r in 0..w.rows() {
        let row = w.row_mut(r);
        let nr = norm2(row);
        if nr > l {
            let f = l / nr;
            row.iter_mut().for_each(|x| *x *= f);
        }
    }
}
