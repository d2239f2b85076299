use prdlab::dataset::{generate_manifold_dataset, normalize_unit, LabelMode, ManifoldSpec};
use prdlab::featviz::{maximize_excitation, AscentConfig};
use prdlab::network::{init_discriminator, init_generator, DiscriminatorNet, GeneratorNet, InitMode};
use prdlab::numerics::{norm1, norm2, spectral_extremes, Matrix, SeededRng};
use prdlab::objective::{discriminator_gradients, generator_gradients, project_row_norm, GradMode};
use prdlab::rdsim::{init_turing, run_rd, GrayScottParams, RDGrid, RdModel, TuringParams};
use prdlab::theory::{
    bde_compare, bound_theorem1, bound_theorem2, gram_at, gram_infinity_exact, gram_spectrum, hoeffding_factor, mu,
};
use prdlab::Batch;
use proptest::prelude::*;

/// Cyclic Jacobi eigenvalues of a symmetric matrix.
#[allow(clippy::needless_range_loop)]
fn jacobi_eigenvalues(a: &Matrix) -> Vec<f64> {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn random_symmetric(n: usize, seed: u64) -> Matrix {
    let mut rng = SeededRng::new(seed, 3);
    let b = rng.gaussian_matrix(n, n);
    Matrix::from_fn(n, n, |i, j| 0.5 * (b[(i, j)] + b[(j, i)]))
}

fn unit_rows(n: usize, d: usize, rng: &mut SeededRng) -> Matrix {
    let mut x = rng.gaussian_matrix(n, d);
    for i in 0..n {
        let r = norm2(x.row(i));
        x.row_mut(i).iter_mut().for_each(|v| *v /= r);
    }
    x
}

fn sup_loss(net: &GeneratorNet, b: &Batch) -> f64 {
    prdlab::objective::supervised_loss(net, b).unwrap()
}

fn min_abs_preactivation(net: &GeneratorNet, x: &Matrix) -> f64 {
    net.preactivations(x).unwrap().as_slice().iter().fold(f64::INFINITY, |a, &b| a.min(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn extremes_match_jacobi(n in 2usize..14, seed in 0u64..10_000) {
        let a = random_symmetric(n, seed);
        let ev = jacobi_eigenvalues(&a);
        let s = spectral_extremes(&a, 1e-12, 50_000).unwrap();
        let scale = ev.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        prop_assert!((s.lambda_min - ev[0]).abs() <= 1e-7 * scale, "{} vs {}", s.lambda_min, ev[0]);
        prop_assert!((s.lambda_max - ev[n - 1]).abs() <= 1e-7 * scale, "{} vs {}", s.lambda_max, ev[n - 1]);
    }

    #[test]
    fn positive_definite_extremes_match_jacobi(n in 7usize..40, seed in 0u64..10_000) {
        let b = SeededRng::new(seed, 9).gaussian_matrix(n, n);
        let a = Matrix::from_fn(n, n, |i, j| {
            (0..n).map(|k| b[(k, i)] * b[(k, j)]).sum::<f64>() + if i == j { 1e-3 } else { 0.0 }
        });
        let ev = jacobi_eigenvalues(&a);
        let s = spectral_extremes(&a, 1e-10, 50_000).unwrap();
        prop_assert!((s.lambda_min - ev[0]).abs() <= 1e-9 * ev[n - 1], "{} vs {}", s.lambda_min, ev[0]);
        prop_assert!((s.lambda_max - ev[n - 1]).abs() <= 1e-9 * ev[n - 1], "{} vs {}", s.lambda_max, ev[n - 1]);
    }

    #[test]
    fn infinite_width_gram_is_psd_with_half_diagonal(n in 2usize..10, d in 2usize..6, seed in 0u64..1000) {
        let x = unit_rows(n, d, &mut SeededRng::new(seed, 4));
        let h = gram_infinity_exact(&x);
        prop_assert!(h.asymmetry() <= 1e-15);
        for i in 0..n {
            prop_assert!((h[(i, i)] - 0.5).abs() <= 1e-12);
        }
        prop_assert!(jacobi_eigenvalues(&h)[0] >= -1e-10);
    }

    #[test]
    fn generator_is_positively_homogeneous(c in 0.01f64..50.0, seed in 0u64..1000) {
        let mut rng = SeededRng::new(seed, 5);
        let net = init_generator(24, 5, 3, InitMode::Xavier, &mut rng).unwrap();
        let x = rng.gaussian_vec(5);
        let cx: Vec<f64> = x.iter().map(|v| c * v).collect();
        let (f, fc) = (net.forward(&x).unwrap(), net.forward(&cx).unwrap());
        for (a, b) in f.iter().zip(&fc) {
            prop_assert!((c * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn projection_caps_rows_and_is_idempotent(l in 0.001f64..5.0, seed in 0u64..1000) {
        let mut rng = SeededRng::new(seed, 6);
        let w = rng.gaussian_matrix(12, 4);
        let p = project_row_norm(&w, l);
        for r in 0..12 {
            let (before, after) = (norm2(w.row(r)), norm2(p.row(r)));
            prop_assert!(after <= l * (1.0 + 1e-12));
            if before <= l {
                prop_assert_eq!(w.row(r), p.row(r));
            } else {
                prop_assert!((after - l).abs() <= 1e-12 * l);
            }
        }
        prop_assert!(project_row_norm(&p, l).distance(&p) <= 1e-15 * l);
    }

    #[test]
    fn generator_gradient_matches_central_differences(seed in 0u64..1000, augmented in any::<bool>()) {
        let mut rng = SeededRng::new(seed, 7);
        let net = init_generator(10, 3, 2, InitMode::Theory, &mut rng).unwrap();
        let disc = init_discriminator(10, 2, 0.7, &mut rng).unwrap();
        let batch = Batch { x: rng.gaussian_matrix(4, 3), y: rng.gaussian_matrix(4, 2) };
        prop_assume!(min_abs_preactivation(&net, &batch.x) > 1e-3);
        let objective = |n: &GeneratorNet| {
            let l = sup_loss(n, &batch);
            if augmented { l - prdlab::objective::adversarial_term(n, &disc, &batch).unwrap() } else { l }
        };
        let mode = if augmented { GradMode::Augmented } else { GradMode::Supervised };
        let g = generator_gradients(&net, Some(&disc), &batch, mode).unwrap();
        let h = 1e-6;
        for idx in 0..net.u.as_slice().len() {
            let (mut p, mut m) = (net.clone(), net.clone());
            p.u.as_mut_slice()[idx] += h;
            m.u.as_mut_slice()[idx] -= h;
            let fd = (objective(&p) - objective(&m)) / (2.0 * h);
            prop_assert!((fd - g.du.as_slice()[idx]).abs() <= 1e-5 * (1.0 + fd.abs()));
        }
        for idx in 0..net.v.as_slice().len() {
            let (mut p, mut m) = (net.clone(), net.clone());
            p.v.as_mut_slice()[idx] += h;
            m.v.as_mut_slice()[idx] -= h;
            let fd = (objective(&p) - objective(&m)) / (2.0 * h);
            prop_assert!((fd - g.dv.as_slice()[idx]).abs() <= 1e-5 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn critic_gradient_matches_central_differences(seed in 0u64..1000, gp in prop_oneof![Just(0.0), 0.1f64..10.0]) {
        let mut rng = SeededRng::new(seed, 8);
        let disc = init_discriminator(8, 3, 1.0, &mut rng).unwrap();
        let real = rng.gaussian_matrix(5, 3);
        let fake = rng.gaussian_matrix(5, 3);
        let interp: Vec<f64> = (0..5).map(|_| rng.uniform01()).collect();
        let points: Vec<Vec<f64>> = (0..5)
            .flat_map(|p| {
                let yh: Vec<f64> = (0..3).map(|i| interp[p] * real[(p, i)] + (1.0 - interp[p]) * fake[(p, i)]).collect();
                [real.row(p).to_vec(), fake.row(p).to_vec(), yh]
            })
            .collect();
        let margin = points.iter().flat_map(|y| disc.w.row_iter().map(move |w| prdlab::numerics::dot(w, y).abs())).fold(f64::INFINITY, f64::min);
        prop_assume!(margin > 1e-3);
        let loss = |d: &DiscriminatorNet| discriminator_gradients(d, &real, &fake, gp, &interp).unwrap().loss;
        let g = discriminator_gradients(&disc, &real, &fake, gp, &interp).unwrap();
        let h = 1e-6;
        for idx in 0..disc.w.as_slice().len() {
            let (mut p, mut m) = (disc.clone(), disc.clone());
            p.w.as_mut_slice()[idx] += h;
            m.w.as_mut_slice()[idx] -= h;
            let fd = (loss(&p) - loss(&m)) / (2.0 * h);
            prop_assert!((fd - g.dw.as_slice()[idx]).abs() <= 1e-5 * (1.0 + fd.abs()), "dW {idx}: {fd} vs {}", g.dw.as_slice()[idx]);
        }
        for r in 0..disc.a.len() {
            let (mut p, mut m) = (disc.clone(), disc.clone());
            p.a[r] += h;
            m.a[r] -= h;
            let fd = (loss(&p) - loss(&m)) / (2.0 * h);
            prop_assert!((fd - g.da[r]).abs() <= 1e-5 * (1.0 + fd.abs()), "da {r}: {fd} vs {}", g.da[r]);
        }
    }

    #[test]
    fn bernoulli_closed_form_tracks_rk4(
        lambda0 in 0.05f64..2.0,
        ratio in 1.0f64..4.0,
        psi0 in 0.5f64..20.0,
        mu_frac in 0.0f64..0.9,
    ) {
        let lambda1 = ratio * lambda0;
        // keep κμ below √ψ₀ so the solution stays away from zero
        let mu = mu_frac * psi0.sqrt() / ratio;
        let err = bde_compare(lambda0, lambda1, mu, psi0, 10.0, 10_000).unwrap();
        prop_assert!(err <= 1e-6, "relative error {err}");
    }

    #[test]
    fn bounds_are_monotone(
        n in 1usize..500,
        m in 1usize..100_000,
        lambda0 in 1e-3f64..1.0,
        delta in 0.01f64..0.99,
        z0 in 0.1f64..100.0,
        t in 0.0f64..100.0,
    ) {
        let (per, frob) = bound_theorem1(n, m, lambda0, delta, z0);
        prop_assert!((per * (m as f64).sqrt() - frob).abs() <= 1e-9 * frob);
        prop_assert!(bound_theorem1(n + 1, m, lambda0, delta, z0).1 > frob);
        prop_assert!(bound_theorem1(n, m, lambda0 * 1.5, delta, z0).1 < frob);
        prop_assert!(bound_theorem1(n, m, lambda0, delta, z0 * 2.0).1 > frob);
        let mu_ = mu(0.01, n, m, delta);
        let (_, f2) = bound_theorem2(n, m, lambda0, delta, z0, mu_, 2.0, t);
        let (_, f2_later) = bound_theorem2(n, m, lambda0, delta, z0, mu_, 2.0, t + 1.0);
        prop_assert!(f2 >= frob && f2_later > f2);
    }

    #[test]
    fn hoeffding_radius_shrinks_with_width(l in 1e-3f64..1.0, n in 1usize..1000, m in 1usize..1_000_000, delta in 0.001f64..0.999) {
        let a = mu(l, n, m, delta);
        prop_assert!(mu(l, n, 4 * m, delta) < a);
        prop_assert!((mu(2.0 * l, n, m, delta) - 2.0 * a).abs() <= 1e-12 * a);
        prop_assert!(hoeffding_factor(delta / 2.0) > hoeffding_factor(delta));
    }

    #[test]
    fn normalized_inputs_have_unit_norm(seed in 0u64..1000, dim in 1usize..6, fill in -3.0f64..3.0) {
        let spec = ManifoldSpec {
            n_total: 30, n_train: 20, d_in: 8, modes: 3, manifold_dim: dim, fill_value: fill, seed,
            label_mode: LabelMode::OneHot, center_box: 10.0, cluster_std: 1.0,
        };
        let ds = normalize_unit(&generate_manifold_dataset(&spec).unwrap()).unwrap();
        for s in ds.train.iter().chain(&ds.test) {
            prop_assert!((norm2(&s.x) - 1.0).abs() <= 1e-12);
            prop_assert!((s.y.iter().sum::<f64>() - 1.0).abs() == 0.0);
        }
    }

    #[test]
    fn ascent_stays_in_ball_and_reaches_corner(seed in 0u64..1000, eps in 1e-4f64..0.1) {
        let mut rng = SeededRng::new(seed, 9);
        let u = rng.gaussian_vec(16);
        let x0: Vec<f64> = (0..16).map(|_| rng.uniform01()).collect();
        let cfg = AscentConfig { epsilon: eps, step_size: 0.1, iterations: 200 };
        let r = maximize_excitation(&u, &x0, &cfg).unwrap();
        prop_assert!(r.delta.iter().all(|d| d.abs() <= eps * (1.0 + 1e-12)));
        prop_assert!(r.max_linf <= eps * (1.0 + 1e-12));
        if !r.dead_within_ball {
            prop_assert!(r.excitation.windows(2).all(|w| w[1] >= w[0] - 1e-15));
            let base: f64 = u.iter().zip(&x0).map(|(a, b)| a * b).sum();
            let gain = r.excitation.last().unwrap() - base;
            prop_assert!(gain <= eps * norm1(&u) * (1.0 + 1e-12));
            let saturates = u.iter().all(|g| cfg.step_size * g.abs() * cfg.iterations as f64 >= eps);
            if saturates {
                prop_assert!((gain - eps * norm1(&u)).abs() <= 1e-9 * (1.0 + gain.abs()));
            }
        }
    }

    #[test]
    fn checkpoints_round_trip(seed in 0u64..1000, m in 1usize..20, d_in in 1usize..6, d_out in 1usize..4) {
        let mut rng = SeededRng::new(seed, 10);
        let net = init_generator(m, d_in, d_out, InitMode::Xavier, &mut rng).unwrap();
        let mut buf = Vec::new();
        net.write_checkpoint(&mut buf).unwrap();
        prop_assert_eq!(GeneratorNet::read_checkpoint(buf.as_slice()).unwrap(), net);
        let disc = init_discriminator(m, d_out, 0.3, &mut rng).unwrap();
        let mut buf = Vec::new();
        disc.write_checkpoint(&mut buf).unwrap();
        prop_assert_eq!(DiscriminatorNet::read_checkpoint(buf.as_slice()).unwrap(), disc);
    }
}

#[test]
fn rademacher_and_gaussian_moments() {
    let mut rng = SeededRng::new(42, 0);
    let n = 200_000;
    let r: Vec<f64> = (0..n).map(|_| rng.rademacher()).collect();
    assert!(r.iter().all(|&v| v == 1.0 || v == -1.0));
    let mean_r = r.iter().sum::<f64>() / n as f64;
    assert!(mean_r.abs() < 5.0 / (n as f64).sqrt());
    let g: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
    let mean = g.iter().sum::<f64>() / n as f64;
    let var = g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let fourth = g.iter().map(|v| v.powi(4)).sum::<f64>() / n as f64;
    assert!(mean.abs() < 5.0 / (n as f64).sqrt());
    assert!((var - 1.0).abs() < 0.02);
    assert!((fourth - 3.0).abs() < 0.1);
}

#[test]
fn finite_width_gram_approaches_infinite_width() {
    let mut rng = SeededRng::new(3, 11);
    let x = unit_rows(6, 4, &mut rng);
    let exact = gram_infinity_exact(&x);
    let mut prev = f64::INFINITY;
    for (k, m) in [64usize, 1 << 10, 1 << 14].into_iter().enumerate() {
        let net = init_generator(m, 4, 1, InitMode::Theory, &mut SeededRng::new(3, 20 + k as u64)).unwrap();
        let err = gram_at(&net, &x).unwrap().distance(&exact);
        if m == 1 << 14 {
            assert!(err < 0.03, "m = {m}: {err}");
            let (a, b) = (gram_spectrum(&exact).unwrap(), gram_spectrum(&gram_at(&net, &x).unwrap()).unwrap());
            assert!((a.lambda_min - b.lambda_min).abs() < 0.03);
        }
        assert!(err < prev * 1.5);
        prev = err;
    }
}

/// Fraction of neurons whose activation on some input can flip when every hidden weight moves
/// by at most `r`: such a neuron has `|u_j·x_p| ≤ r` for a unit input.
#[test]
fn flip_fraction_is_linear_in_radius() {
    let (m, n) = (1 << 14, 8);
    let mut rng = SeededRng::new(9, 12);
    let x = unit_rows(n, 6, &mut rng);
    let net = init_generator(m, 6, 1, InitMode::Theory, &mut rng).unwrap();
    let pre = net.preactivations(&x).unwrap();
    for r in [0.01, 0.05, 0.1] {
        let near = (0..m).filter(|&j| (0..n).any(|p| pre[(p, j)].abs() <= r)).count() as f64 / m as f64;
        // P(|N(0,1)| ≤ r) ≤ 2r/√(2π) per input, union over n inputs
        let bound = n as f64 * 2.0 * r / (2.0 * std::f64::consts::PI).sqrt();
        assert!(near <= bound * 1.1, "r = {r}: {near} > {bound}");
    }
}

#[test]
fn turing_equilibrium_is_exactly_invariant() {
    let p = TuringParams::paper();
    let grid = init_turing(20, 20, p.h, p.k, 0.0, &mut SeededRng::new(1, 0)).unwrap();
    let run = run_rd(&RdModel::Turing(p), grid, 10_000, 10_000).unwrap();
    let g = run.final_grid;
    assert!(g.u.iter().all(|&u| (u - p.h).abs() <= 1e-12));
    assert!(g.v.iter().all(|&v| (v - p.k).abs() <= 1e-12));
}

#[test]
fn grayscott_rest_state_is_exactly_invariant() {
    for (f, k) in prdlab::rdsim::GRAY_SCOTT_PRESETS {
        let grid = RDGrid::uniform(16, 16, 1.0, 0.0).unwrap();
        let run = run_rd(&RdModel::GrayScott(GrayScottParams::paper(f, k)), grid, 10_000, 10_000).unwrap();
        assert!(run.final_grid.u.iter().all(|&u| (u - 1.0).abs() <= 1e-12));
        assert!(run.final_grid.v.iter().all(|&v| v.abs() <= 1e-12));
    }
}
