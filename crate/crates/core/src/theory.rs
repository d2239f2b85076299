//! Gram matrices, spectrum reports, constants and bounds, and the Bernoulli ODE.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::GeneratorNet;
use crate::numerics::{dot, norm2, spectral_extremes, Matrix, SeededRng, Spectrum};
use crate::trainer::TrajectoryLog;

/// Eigen tolerance used for Gram spectra.
pub const GRAM_EIG_TOL: f64 = 1e-9;
const GRAM_EIG_MAX_ITERS: usize = 20_000;
/// Monte-Carlo draws per shard in [`gram_infinity`].
const MC_SHARD: usize = 1 << 14;

/// Activation pattern of one input over a set of neurons, packed into 64-bit words.
fn pack_activations(pre: impl Iterator<Item = f64>, words: usize) -> Vec<u64> {
    let mut bits = vec![0u64; words];
    for (r, h) in pre.enumerate() {
        if h >= 0.0 {
            bits[r / 64] |= 1 << (r % 64);
        }
    }
    bits
}

fn joint_counts(bits: &[Vec<u64>], counts: &mut [u64]) {
    let n = bits.len();
    for i in 0..n {
        for j in i..n {
            let c: u32 = bits[i].iter().zip(&bits[j]).map(|(a, b)| (a & b).count_ones()).sum();
            counts[i * n + j] += c as u64;
        }
    }
}

fn gram_from_counts(x: &Matrix, counts: &[u64], total: usize) -> Matrix {
    let n = x.rows();
    let mut h = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = dot(x.row(i), x.row(j)) * counts[i * n + j] as f64 / total as f64;
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

/// Monte-Carlo estimate of `H∞_ij = x_iᵀx_j · P(uᵀx_i ≥ 0, uᵀx_j ≥ 0)` for `u ~ N(0, I)`.
///
/// Draws are taken in shards, shard `k` on stream `k` of the generator's seed offset by its own
/// stream, and reduced in shard order.
pub fn gram_infinity(x: &Matrix, mc_samples: usize, rng: &SeededRng) -> Result<Matrix> {
    if mc_samples == 0 {
        return Err(Error::InvalidParameter("mc_samples must be positive".into()));
    }
    let (n, d) = x.shape();
    let mut counts = vec![0u64; n * n];
    let shards = mc_samples.div_ceil(MC_SHARD);
    for k in 0..shards {
        let size = MC_SHARD.min(mc_samples - k * MC_SHARD);
        let mut shard_rng = rng.fork(rng.stream().wrapping_mul(1 << 20).wrapping_add(k as u64));
        let u = shard_rng.gaussian_matrix(size, d);
        let words = size.div_ceil(64);
        let bits: Vec<Vec<u64>> =
            x.row_iter().map(|xi| pack_activations(u.row_iter().map(|ur| dot(ur, xi)), words)).collect();
        joint_counts(&bits, &mut counts);
    }
    Ok(gram_from_counts(x, &counts, mc_samples))
}

/// Closed form `H∞_ij = x_iᵀx_j (π − θ_ij) / (2π)`.
pub fn gram_infinity_exact(x: &Matrix) -> Matrix {
    let n = x.rows();
    let norms: Vec<f64> = x.row_iter().map(norm2).collect();
    let mut h = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let ip = dot(x.row(i), x.row(j));
            let denom = norms[i] * norms[j];
            let theta = if denom > 0.0 { (ip / denom).clamp(-1.0, 1.0).acos() } else { 0.0 };
            let v = ip * (PI - theta) / (2.0 * PI);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

/// `H(t)_ij = x_iᵀx_j · (1/m) Σ_r 1{u_r·x_i ≥ 0, u_r·x_j ≥ 0}` at the current hidden weights.
pub fn gram_at(net: &GeneratorNet, x: &Matrix) -> Result<Matrix> {
    let pre = net.preactivations(x)?;
    let m = net.width();
    let words = m.div_ceil(64);
    let bits: Vec<Vec<u64>> = pre.row_iter().map(|row| pack_activations(row.iter().copied(), words)).collect();
    let mut counts = vec![0u64; x.rows() * x.rows()];
    joint_counts(&bits, &mut counts);
    Ok(gram_from_counts(x, &counts, m))
}

pub fn gram_spectrum(h: &Matrix) -> Result<Spectrum> {
    spectral_extremes(h, GRAM_EIG_TOL, GRAM_EIG_MAX_ITERS)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramReport {
    pub h0_spectrum: Spectrum,
    pub ht_spectrum: Spectrum,
    /// `‖H(t) − H(0)‖₂`.
    pub drift_norm: f64,
    pub lambda0_hat: f64,
    pub lambda1_inf_hat: f64,
    pub kappa_hat: f64,
    /// `‖H(t) − H(0)‖₂ ≤ λ₀/4`.
    pub drift_within_quarter: bool,
    /// `λ_min(H(t)) ≥ λ₀/2`.
    pub min_ok: bool,
    /// `λ_max(H(t)) ≤ λ₁/2`.
    pub max_ok: bool,
}

/// Compares `H(t)` against `H(0)`. Without overrides `λ₀` and `λ₁∞` come from the spectrum of `H(0)`.
pub fn gram_stability_report(
    net_t: &GeneratorNet,
    net_0: &GeneratorNet,
    x: &Matrix,
    lambda0: Option<f64>,
    lambda1_inf: Option<f64>,
) -> Result<GramReport> {
    if net_t.u.shape() != net_0.u.shape() {
        return Err(Error::Dimension("networks have different hidden shapes".into()));
    }
    let h0 = gram_at(net_0, x)?;
    let ht = gram_at(net_t, x)?;
    let h0_spectrum = gram_spectrum(&h0)?;
    let ht_spectrum = gram_spectrum(&ht)?;
    let mut diff = ht.sub(&h0)?;
    diff.symmetrize();
    let drift_norm = gram_spectrum(&diff)?.spectral_norm();
    let lambda0_hat = lambda0.unwrap_or(h0_spectrum.lambda_min);
    let lambda1_inf_hat = lambda1_inf.unwrap_or(h0_spectrum.lambda_max);
    let lambda1 = lambda1_from(lambda0_hat, lambda1_inf_hat);
    Ok(GramReport {
        h0_spectrum,
        ht_spectrum,
        drift_norm,
        lambda0_hat,
        lambda1_inf_hat,
        kappa_hat: lambda1 / lambda0_hat,
        drift_within_quarter: drift_norm <= lambda0_hat / 4.0,
        min_ok: ht_spectrum.lambda_min >= lambda0_hat / 2.0,
        max_ok: ht_spectrum.lambda_max <= lambda1 / 2.0,
    })
}

/// `λ₁ = 2(λ₁∞ + λ₀/2)`.
pub fn lambda1_from(lambda0: f64, lambda1_inf: f64) -> f64 {
    2.0 * (lambda1_inf + lambda0 / 2.0)
}

/// `√(2 ln(2/δ))`.
pub fn hoeffding_factor(delta: f64) -> f64 {
    (2.0 * (2.0 / delta).ln()).sqrt()
}

/// `μ = L n √(2 ln(2/δ)) / √m`.
pub fn mu(l: f64, n: usize, m: usize, delta: f64) -> f64 {
    l * n as f64 * hoeffding_factor(delta) / (m as f64).sqrt()
}

/// `ζ = 2√(m·d_in) / (√(2π) δ)`.
pub fn zeta(m: usize, d_in: usize, delta: f64) -> f64 {
    2.0 * ((m * d_in) as f64).sqrt() / ((2.0 * PI).sqrt() * delta)
}

/// Inputs to [`compute_constants`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub n: usize,
    pub m: usize,
    pub d_in: usize,
    pub lambda0: f64,
    pub lambda1_inf: f64,
    pub l: f64,
    pub delta: f64,
    pub epsilon: f64,
    /// `‖z(0) − y‖₂`.
    pub z0_err: f64,
}

impl BoundInputs {
    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.d_in == 0 {
            return Err(Error::InvalidParameter("n, m and d_in must be positive".into()));
        }
        for (name, v) in [
            ("lambda0", self.lambda0),
            ("lambda1_inf", self.lambda1_inf),
            ("L", self.l),
            ("epsilon", self.epsilon),
            ("z0_err", self.z0_err),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        Ok(())
    }
}

pub const CONSTANT_CONVENTION: &str =
    "unit constants in every O and Omega expression; factor 2 in the distance-from-initialization integral bound";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub mu: f64,
    pub kappa: f64,
    pub lambda1: f64,
    pub zeta: f64,
    pub hoeffding_bound: f64,
    pub l_max: f64,
    pub t0: f64,
    pub m_min_adversarial: f64,
    pub m_min_supervised: f64,
    pub convention: String,
}

/// Evaluates every closed-form constant. Fails unless `κμ < ε < ‖z(0) − y‖₂`.
pub fn compute_constants(inp: &BoundInputs) -> Result<ConstantsReport> {
    inp.validate()?;
    let n = inp.n as f64;
    let mu = mu(inp.l, inp.n, inp.m, inp.delta);
    let lambda1 = lambda1_from(inp.lambda0, inp.lambda1_inf);
    let kappa = lambda1 / inp.lambda0;
    let hf = hoeffding_factor(inp.delta);
    let floor = kappa * mu;
    if !(floor < inp.epsilon) {
        return Err(Error::Precondition(format!("kappa*mu = {floor} must be below epsilon = {}", inp.epsilon)));
    }
    if !(inp.epsilon < inp.z0_err) {
        return Err(Error::Precondition(format!(
            "epsilon = {} must be below the initial error {}",
            inp.epsilon, inp.z0_err
        )));
    }
    let t0 = (2.0 / inp.lambda0) * ((inp.z0_err - floor) / (inp.epsilon - floor)).ln();
    let ld = inp.lambda0 * inp.delta;
    let m_min_adversarial = (n.powf(3.5) / (ld * ld) + n * n * mu * (1.0 + kappa * n.sqrt()) * t0 / ld).powi(2);
    let m_min_supervised = n.powi(7) / ld.powi(4);
    Ok(ConstantsReport {
        mu,
        kappa,
        lambda1,
        zeta: zeta(inp.m, inp.d_in, inp.delta),
        hoeffding_bound: inp.l * hf,
        l_max: inp.epsilon * (inp.m as f64).sqrt() / (kappa * n * hf),
        t0,
        m_min_adversarial,
        m_min_supervised,
        convention: CONSTANT_CONVENTION.to_string(),
    })
}

/// `(z0 − κμ) e^{−λ₀t/2} + κμ`.
pub fn prediction_error_envelope(t: f64, z0_err: f64, kappa: f64, mu: f64, lambda0: f64) -> f64 {
    let floor = kappa * mu;
    (z0_err - floor) * (-lambda0 * t / 2.0).exp() + floor
}

/// Integrates `ψ' = −λ₀ψ + λ₁μ√ψ` with RK4 and returns the largest relative deviation of `√ψ`
/// from `(√ψ₀ − κμ) e^{−λ₀t/2} + κμ` over the grid.
pub fn bde_compare(lambda0: f64, lambda1: f64, mu: f64, psi0: f64, t_end: f64, steps: usize) -> Result<f64> {
    if !(psi0 > 0.0) {
        return Err(Error::InvalidParameter(format!("psi0 must be positive, got {psi0}")));
    }
    if steps == 0 || !(t_end >= 0.0) || !(lambda0 > 0.0) {
        return Err(Error::InvalidParameter("need steps ≥ 1, t_end ≥ 0, lambda0 > 0".into()));
    }
    let kappa = lambda1 / lambda0;
    let rhs = |psi: f64| -lambda0 * psi + lambda1 * mu * psi.max(0.0).sqrt();
    let h = t_end / steps as f64;
    let phi0 = psi0.sqrt();
    let mut psi = psi0;
    let mut worst = 0.0_f64;
    for k in 1..=steps {
        let k1 = rhs(psi);
        let k2 = rhs(psi + 0.5 * h * k1);
        let k3 = rhs(psi + 0.5 * h * k2);
        let k4 = rhs(psi + h * k3);
        psi += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let exact = prediction_error_envelope(k as f64 * h, phi0, kappa, mu, lambda0);
        worst = worst.max((psi.max(0.0).sqrt() - exact).abs() / exact.abs());
    }
    Ok(worst)
}

/// Per-neuron and Frobenius bounds on the supervised distance from initialization.
pub fn bound_theorem1(n: usize, m: usize, lambda0: f64, delta: f64, z0_err: f64) -> (f64, f64) {
    let frob = 2.0 * (n as f64).sqrt() * z0_err / (lambda0 * delta);
    (frob / (m as f64).sqrt(), frob)
}

/// [`bound_theorem1`] plus the linear drift `μ(1 + κ√n) t` (divided by `√m` per neuron).
#[allow(clippy::too_many_arguments)]
pub fn bound_theorem2(
    n: usize,
    m: usize,
    lambda0: f64,
    delta: f64,
    z0_err: f64,
    mu: f64,
    kappa: f64,
    t: f64,
) -> (f64, f64) {
    let (per, frob) = bound_theorem1(n, m, lambda0, delta, z0_err);
    let drift = mu * (1.0 + kappa * (n as f64).sqrt()) * t;
    (per + drift / (m as f64).sqrt(), frob + drift)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdScaling {
    pub reaction_u: f64,
    pub diffusion_u: f64,
    pub reaction_v: f64,
    pub diffusion_v: f64,
}

/// Orders of magnitude of the four reaction and diffusion terms with unit constants.
pub fn theorem3_asymptotics(n: usize, m: usize, d_in: usize, d_out: usize) -> RdScaling {
    let (n, m, d_in, d_out) = (n as f64, m as f64, d_in as f64, d_out as f64);
    let reaction = n * d_in * (d_out / m).sqrt();
    RdScaling {
        reaction_u: reaction,
        diffusion_u: n * m * m * d_in * d_out.powf(1.5),
        reaction_v: reaction,
        diffusion_v: n * m * m * d_in * d_out.sqrt(),
    }
}

/// Mean `‖z(0) − y‖₂` over independent initializations.
pub fn mean_initial_error(
    x: &Matrix,
    y: &Matrix,
    m: usize,
    mode: crate::network::InitMode,
    inits: usize,
    rng: &mut SeededRng,
) -> Result<f64> {
    if inits == 0 {
        return Err(Error::InvalidParameter("need at least one initialization".into()));
    }
    let mut total = 0.0;
    for _ in 0..inits {
        let net = crate::network::init_generator(m, x.cols(), y.cols(), mode, rng)?;
        let z = net.forward_batch(x)?;
        total += z.distance(y);
    }
    Ok(total / inits as f64)
}

/// One row of a bound-versus-trajectory comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub step: usize,
    pub time: f64,
    pub pred_error: f64,
    pub envelope: f64,
    pub max_neuron_distance: f64,
    pub per_neuron_bound: f64,
    pub u_distance: f64,
    pub frobenius_bound: f64,
}

/// Lines the bounds up with every logged step of `log`. With `mu = 0` the envelope is the pure
/// exponential and the distance bounds reduce to the supervised ones.
#[allow(clippy::too_many_arguments)]
pub fn bound_rows(
    log: &TrajectoryLog,
    n: usize,
    m: usize,
    lambda_hat: f64,
    delta: f64,
    mu: f64,
    kappa: f64,
) -> Result<Vec<BoundRow>> {
    let first = log.entries.first().ok_or_else(|| Error::InvalidParameter("trajectory is empty".into()))?;
    if !(lambda_hat > 0.0) {
        return Err(Error::Precondition(format!("lambda estimate must be positive, got {lambda_hat}")));
    }
    let z0 = first.pred_error;
    Ok(log
        .entries
        .iter()
        .map(|e| {
            let (per_neuron_bound, frobenius_bound) = bound_theorem2(n, m, lambda_hat, delta, z0, mu, kappa, e.time);
            BoundRow {
                step: e.step,
                time: e.time,
                pred_error: e.pred_error,
                envelope: prediction_error_envelope(e.time, z0, kappa, mu, lambda_hat),
                max_neuron_distance: e.max_neuron_distance,
                per_neuron_bound,
                u_distance: e.u_distance,
                frobenius_bound,
            }
        })
        .collect())
}

pub fn write_bound_csv<W: Write>(out: W, rows: &[BoundRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
