//! Neuron-level feature visualization and weight statistics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, norm1, norm2, variance, Matrix, SeededRng};
use crate::pgm::to_gray8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AscentConfig {
    /// l∞ radius of the perturbation ball.
    pub epsilon: f64,
    pub step_size: f64,
    pub iterations: usize,
}

impl Default for AscentConfig {
    fn default() -> Self {
        Self { epsilon: 0.007, step_size: 0.1, iterations: 100 }
    }
}

impl AscentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || self.iterations == 0 || !(self.step_size >= 0.0) {
            return Err(Error::InvalidParameter(
                "ascent needs epsilon > 0, step_size ≥ 0 and at least one iteration".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AscentResult {
    pub delta: Vec<f64>,
    /// No point of the ball activates the unit; `delta` is zero.
    pub dead_within_ball: bool,
    /// `u_jᵀ(x0 + δ)` after each iteration.
    pub excitation: Vec<f64>,
    /// Largest `‖δ‖∞` over all iterates.
    pub max_linf: f64,
}

/// Projected gradient ascent of `u_jᵀ(x0 + δ)` over `‖δ‖∞ ≤ ε`, clamping after each step.
pub fn maximize_excitation(u_j: &[f64], x0: &[f64], cfg: &AscentConfig) -> Result<AscentResult> {
    cfg.validate()?;
    if u_j.len() != x0.len() {
        return Err(Error::Dimension(format!("weight has length {}, input {}", u_j.len(), x0.len())));
    }
    let base = dot(u_j, x0);
    let mut delta = vec![0.0; u_j.len()];
    if base + cfg.epsilon * norm1(u_j) < 0.0 {
        return Ok(AscentResult {
            delta,
            dead_within_ball: true,
            excitation: vec![base; cfg.iterations],
            max_linf: 0.0,
        });
    }
    let mut excitation = Vec::with_capacity(cfg.iterations);
    let mut max_linf = 0.0_f64;
    for _ in 0..cfg.iterations {
        for (d, &g) in delta.iter_mut().zip(u_j) {
            *d = (*d + cfg.step_size * g).clamp(-cfg.epsilon, cfg.epsilon);
            max_linf = max_linf.max(d.abs());
        }
        excitation.push(base + dot(u_j, &delta));
    }
    Ok(AscentResult { delta, dead_within_ball: false, excitation, max_linf })
}

/// Shared random base image with entries uniform on `[0, 1)`.
pub fn base_input(d_in: usize, rng: &mut SeededRng) -> Vec<f64> {
    (0..d_in).map(|_| rng.uniform01()).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightImage {
    pub neuron: usize,
    pub norm: f64,
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
}

/// The `top_k` rows of `u` with the largest L2 norm (ties to the lower index), each min-max
/// scaled to 8 bits and reshaped row-major.
pub fn export_weight_images(u: &Matrix, height: usize, width: usize, top_k: usize) -> Result<Vec<WeightImage>> {
    if u.cols() != height * width {
        return Err(Error::Dimension(format!("rows have {} entries, images need {}x{}", u.cols(), height, width)));
    }
    let mut ranked: Vec<(usize, f64)> = u.row_iter().map(norm2).enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked
        .into_iter()
        .take(top_k)
        .map(|(j, norm)| WeightImage { neuron: j, norm, height, width, pixels: to_gray8(u.row(j)) })
        .collect())
}

/// Population variance of each row.
pub fn neuron_variances(u: &Matrix) -> Vec<f64> {
    u.row_iter().map(variance).collect()
}

pub fn write_variances_csv<W: Write>(out: W, variances: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["neuron", "variance"])?;
    for (j, v) in variances.iter().enumerate() {
        w.write_record([j.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_weight_gives_zero_delta() {
        let r = maximize_excitation(&[0.0; 5], &[0.3; 5], &AscentConfig::default()).unwrap();
        assert!(r.delta.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn linear_maximizer_is_signed_corner() {
        let u = [0.5, -2.0, 0.0, 1.0];
        let cfg = AscentConfig::default();
        let r = maximize_excitation(&u, &[0.2, 0.1, 0.3, 0.4], &cfg).unwrap();
        assert_eq!(r.delta, vec![0.007, -0.007, 0.0, 0.007]);
        let gain = dot(&u, &r.delta);
        assert_abs_diff_eq!(gain, cfg.epsilon * norm1(&u), epsilon = 1e-15);
        assert!(r.max_linf <= cfg.epsilon + 1e-12);
        assert!(r.excitation.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn dead_unit_is_flagged() {
        let r = maximize_excitation(&[-1.0, -1.0], &[1.0, 1.0], &AscentConfig::default()).unwrap();
        assert!(r.dead_within_ball);
        assert_eq!(r.delta, vec![0.0, 0.0]);
    }

    #[test]
    fn weight_images_ordering() {
        let u =
            Matrix::from_rows(&[[1.0, 0.0, 0.0, 0.0], [0.0, 2.0, 0.0, 0.0], [0.0, 0.0, 0.0, 2.0], [0.5; 4]]).unwrap();
        let imgs = export_weight_images(&u, 2, 2, 3).unwrap();
        assert_eq!(imgs.iter().map(|i| i.neuron).collect::<Vec<_>>(), vec![1, 2, 0]);
        let c = export_weight_images(&u, 2, 2, 4).unwrap();
        assert_eq!(c[3].neuron, 3);
        assert_eq!(c[3].pixels, vec![128; 4]);
        assert!(export_weight_images(&u, 3, 2, 1).is_err());
    }

    #[test]
    fn top_nine_at_28() {
        let mut rng = SeededRng::new(1, 0);
        let u = rng.gaussian_matrix(20, 784);
        let imgs = export_weight_images(&u, 28, 28, 9).unwrap();
        assert_eq!(imgs.len(), 9);
        assert!(imgs.iter().all(|i| i.pixels.len() == 784));
        assert!(imgs.windows(2).all(|w| w[0].norm >= w[1].norm));
    }

    #[test]
    fn variance_examples() {
        let u = Matrix::from_rows(&[[2.0, 2.0, 2.0, 2.0], [0.0, 0.0, 0.0, 1.0], [1.0, 0.0, 0.0, 0.0]]).unwrap();
        let v = neuron_variances(&u);
        assert_eq!(v[0], 0.0);
        assert_abs_diff_eq!(v[1], 3.0 / 16.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v[2], v[1], epsilon = 1e-15);
    }
}
