//! Two-layer ReLU generator and critic networks, initialization and checkpoints.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{active, axpy, dot, gemm, masked_sum, norm2, relu, relu_dot, Matrix, SeededRng};

const CHECKPOINT_MAGIC: &[u8; 4] = b"PRDN";
const CHECKPOINT_VERSION: u32 = 1;

/// Initialization scheme of the generator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// Gaussian hidden weights, Rademacher output weights.
    #[default]
    Theory,
    /// Gaussian hidden and output weights; the `1/√(d_out·m)` output scale does the normalization.
    Xavier,
}

impl InitMode {
    fn code(self) -> u8 {
        match self {
            InitMode::Theory => 0,
            InitMode::Xavier => 1,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(InitMode::Theory),
            1 => Ok(InitMode::Xavier),
            _ => Err(Error::Checkpoint(format!("unknown init mode {c}"))),
        }
    }
}

/// `f(x) = V σ(U x) / √(d_out·m)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorNet {
    /// Hidden weights, `m × d_in`; row `j` is neuron `u_j`.
    pub u: Matrix,
    /// Output weights, `d_out × m`; column `j` is `v_j`.
    pub v: Matrix,
    pub mode: InitMode,
    pub seed: u64,
}

impl GeneratorNet {
    pub fn from_weights(u: Matrix, v: Matrix) -> Result<Self> {
        if u.rows() != v.cols() {
            return Err(Error::Dimension(format!(
                "hidden layer has {} neurons but output layer has {} columns",
                u.rows(),
                v.cols()
            )));
        }
        Ok(Self { u, v, mode: InitMode::Theory, seed: 0 })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.u.rows()
    }

    #[inline]
    pub fn d_in(&self) -> usize {
        self.u.cols()
    }

    #[inline]
    pub fn d_out(&self) -> usize {
        self.v.rows()
    }

    /// Output scale `1/√(d_out·m)`.
    #[inline]
    pub fn scale(&self) -> f64 {
        1.0 / ((self.d_out() * self.width()) as f64).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    /// Hidden preactivations `U x_p`, one row per input (`n × m`).
    pub fn preactivations(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.d_in() {
            return Err(Error::Dimension(format!(
                "inputs have {} features, network expects {}",
                x.cols(),
                self.d_in()
            )));
        }
        let mut p = Matrix::zeros(x.rows(), self.width());
        gemm(1.0, x.view(), self.u.t(), 0.0, &mut p);
        Ok(p)
    }

    /// Predictions from precomputed preactivations (`n × d_out`).
    pub fn outputs_from_preactivations(&self, pre: &Matrix) -> Matrix {
        let scale = self.scale();
        let mut z = Matrix::zeros(pre.rows(), self.d_out());
        for p in 0..pre.rows() {
            let h = pre.row(p);
            for (zi, v) in z.row_mut(p).iter_mut().zip(self.v.row_iter()) {
                *zi = scale * relu_dot(v, h);
            }
        }
        z
    }

    /// Predictions for every row of `x` (`n × d_out`).
    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.outputs_from_preactivations(&self.preactivations(x)?))
    }

    /// Prediction for a single input.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d_in() {
            return Err(Error::Dimension(format!("input has length {}, network expects {}", x.len(), self.d_in())));
        }
        let xm = Matrix::from_vec(1, x.len(), x.to_vec())?;
        Ok(self.forward_batch(&xm)?.into_vec())
    }

    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&[0u8, self.mode.code()])?;
        for d in [self.width(), self.d_in(), self.d_out()] {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        out.write_all(&self.seed.to_le_bytes())?;
        for x in self.u.as_slice().iter().chain(self.v.as_slice()) {
            out.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Self> {
        let kind = read_header(&mut input)?;
        if kind[0] != 0 {
            return Err(Error::Checkpoint("not a generator checkpoint".into()));
        }
        let mode = InitMode::from_code(kind[1])?;
        let m = read_u64(&mut input)? as usize;
        let d_in = read_u64(&mut input)? as usize;
        let d_out = read_u64(&mut input)? as usize;
        let seed = read_u64(&mut input)?;
        let u = Matrix::from_vec(m, d_in, read_f64s(&mut input, m * d_in)?)?;
        let v = Matrix::from_vec(d_out, m, read_f64s(&mut input, d_out * m)?)?;
        Ok(Self { u, v, mode, seed })
    }
}

/// Copies of the generator weights at `t = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct InitSnapshot {
    u0: Matrix,
    v0: Matrix,
}

impl InitSnapshot {
    pub fn capture(net: &GeneratorNet) -> Self {
        Self { u0: net.u.clone(), v0: net.v.clone() }
    }

    pub fn u0(&self) -> &Matrix {
        &self.u0
    }

    pub fn v0(&self) -> &Matrix {
        &self.v0
    }

    /// `‖U(t) - U(0)‖_F`.
    pub fn hidden_distance(&self, net: &GeneratorNet) -> f64 {
        net.u.distance(&self.u0)
    }

    /// `‖V(t) - V(0)‖_F`.
    pub fn output_distance(&self, net: &GeneratorNet) -> f64 {
        net.v.distance(&self.v0)
    }

    /// `max_j ‖u_j(t) - u_j(0)‖₂`.
    pub fn max_neuron_distance(&self, net: &GeneratorNet) -> f64 {
        net.u
            .row_iter()
            .zip(self.u0.row_iter())
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// Critic `g(y) = aᵀ σ(W y) / √m` with rows of `W` kept inside the `L` ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorNet {
    /// `m × d_out`.
    pub w: Matrix,
    pub a: Vec<f64>,
    /// Row-norm cap.
    pub l: f64,
    pub seed: u64,
}

impl DiscriminatorNet {
    pub fn from_weights(w: Matrix, a: Vec<f64>, l: f64) -> Result<Self> {
        if w.rows() != a.len() {
            return Err(Error::Dimension(format!("W has {} rows but a has {} entries", w.rows(), a.len())));
        }
        if !(l > 0.0) {
            return Err(Error::InvalidParameter(format!("row-norm cap must be positive, got {l}")));
        }
        Ok(Self { w, a, l, seed: 0 })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.w.rows()
    }

    #[inline]
    pub fn d_out(&self) -> usize {
        self.w.cols()
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.a.iter().all(|x| x.is_finite())
    }

    /// Critic score for one point of the output space.
    pub fn forward(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.d_out() {
            return Err(Error::Dimension(format!("critic input has length {}, expected {}", y.len(), self.d_out())));
        }
        let s: f64 = self.w.row_iter().zip(&self.a).map(|(w, a)| a * relu(dot(w, y))).sum();
        Ok(s / (self.width() as f64).sqrt())
    }

    /// Analytic input gradient `∇_y g = Σ_r a_r 1{w_r·y ≥ 0} w_r / √m`.
    pub fn input_gradient(&self, y: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.d_out()];
        let s = 1.0 / (self.width() as f64).sqrt();
        for (w, a) in self.w.row_iter().zip(&self.a) {
            if active(dot(w, y)) {
                for (gi, wi) in g.iter_mut().zip(w) {
                    *gi += s * a * wi;
                }
            }
        }
        g
    }

    pub fn max_row_norm(&self) -> f64 {
        self.w.row_iter().map(norm2).fold(0.0, f64::max)
    }

    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&[1u8, 0u8])?;
        for d in [self.width(), self.d_out()] {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        out.write_all(&self.l.to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        for x in self.w.as_slice().iter().chain(&self.a) {
            out.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Self> {
        let kind = read_header(&mut input)?;
        if kind[0] != 1 {
            return Err(Error::Checkpoint("not a discriminator checkpoint".into()));
        }
        let m = read_u64(&mut input)? as usize;
        let d_out = read_u64(&mut input)? as usize;
        let l = f64::from_le_bytes(read_array(&mut input)?);
        let seed = read_u64(&mut input)?;
        let w = Matrix::from_vec(m, d_out, read_f64s(&mut input, m * d_out)?)?;
        let a = read_f64s(&mut input, m)?;
        Ok(Self { w, a, l, seed })
    }
}

fn read_array<R: Read, const N: usize>(input: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input.read_exact(&mut buf).map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))?;
    Ok(buf)
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(input)?))
}

fn read_f64s<R: Read>(input: &mut R, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|_| Ok(f64::from_le_bytes(read_array(input)?))).collect()
}

/// Critic weights laid out by output coordinate, for evaluating many points in a row.
#[derive(Clone, Debug)]
pub struct CriticColumns<'a> {
    disc: &'a DiscriminatorNet,
    /// `Wᵀ`, `d_out × m`.
    wt: Matrix,
    /// `Wᵀ diag(a) / √m`.
    awt: Matrix,
}

impl<'a> CriticColumns<'a> {
    pub fn new(disc: &'a DiscriminatorNet) -> Self {
        let (m, d) = (disc.width(), disc.d_out());
        let s = 1.0 / (m as f64).sqrt();
        let mut wt = Matrix::zeros(d, m);
        let mut awt = Matrix::zeros(d, m);
        for r in 0..m {
            for (i, &w) in disc.w.row(r).iter().enumerate() {
                wt[(i, r)] = w;
                awt[(i, r)] = s * disc.a[r] * w;
            }
        }
        Self { disc, wt, awt }
    }

    pub fn disc(&self) -> &DiscriminatorNet {
        self.disc
    }

    /// `W^T` with one row per output coordinate.
    pub fn wt(&self) -> &Matrix {
        &self.wt
    }

    /// Writes `W y` into `h`.
    pub fn preactivations_into(&self, y: &[f64], h: &mut [f64]) {
        h.fill(0.0);
        for (&yi, col) in y.iter().zip(self.wt.row_iter()) {
            if yi != 0.0 {
                axpy(yi, col, h);
            }
        }
    }

    /// `g(y)` from `h = W y`.
    pub fn value(&self, h: &[f64]) -> f64 {
        relu_dot(&self.disc.a, h) / (self.disc.width() as f64).sqrt()
    }

    /// `∇_y g` from `h = W y`.
    pub fn gradient_into(&self, h: &[f64], out: &mut [f64]) {
        for (o, col) in out.iter_mut().zip(self.awt.row_iter()) {
            *o = masked_sum(col, h);
        }
    }
}

fn read_header<R: Read>(input: &mut R) -> Result<[u8; 2]> {
    let magic: [u8; 4] = read_array(input)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(read_array(input)?);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    read_array(input)
}

/// Draws a generator: `U` Gaussian, `V` Rademacher (theory) or Gaussian (xavier).
pub fn init_generator(
    m: usize,
    d_in: usize,
    d_out: usize,
    mode: InitMode,
    rng: &mut SeededRng,
) -> Result<GeneratorNet> {
    if m == 0 || d_in == 0 || d_out == 0 {
        return Err(Error::InvalidParameter(format!(
            "generator dimensions must be positive (m={m}, d_in={d_in}, d_out={d_out})"
        )));
    }
    let u = rng.gaussian_matrix(m, d_in);
    let v = match mode {
        InitMode::Theory => rng.rademacher_matrix(d_out, m),
        InitMode::Xavier => rng.gaussian_matrix(d_out, m),
    };
    Ok(GeneratorNet { u, v, mode, seed: rng.seed() })
}

/// Draws a critic: Gaussian `W` projected into the `L` row ball, Rademacher `a`.
pub fn init_discriminator(m: usize, d_out: usize, l: f64, rng: &mut SeededRng) -> Result<DiscriminatorNet> {
    if m == 0 || d_out == 0 {
        return Err(Error::InvalidParameter(format!("critic dimensions must be positive (m={m}, d_out={d_out})")));
    }
    if !(l > 0.0) {
        return Err(Error::InvalidParameter(format!("row-norm cap must be positive, got {l}")));
    }
    let w = rng.gaussian_matrix(m, d_out);
    let a = (0..m).map(|_| rng.rademacher()).collect();
    let w = crate::objective::project_row_norm(&w, l);
    Ok(DiscriminatorNet { w, a, l, seed: rng.seed() })
}
