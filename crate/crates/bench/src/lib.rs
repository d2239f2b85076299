//! Fixtures shared by the benchmarks.

use prdlab::dataset::{generate_manifold_dataset, normalize_unit};
use prdlab::network::{init_discriminator, init_generator};
use prdlab::rdsim::{init_grayscott, init_turing};
use prdlab::{
    Batch, DiscriminatorNet, GeneratorNet, InitMode, LabelMode, ManifoldSpec, RDGrid, SeededRng, TuringParams,
};

/// Unit-norm mixture batch of `n` points in `d_in` dimensions with scalar labels.
pub fn batch(n: usize, d_in: usize) -> Batch {
    let spec = ManifoldSpec {
        n_total: n + 1,
        n_train: n,
        d_in,
        modes: 10,
        manifold_dim: d_in * 3 / 4,
        fill_value: 1.0,
        seed: 1,
        label_mode: LabelMode::Scalar,
        center_box: 10.0,
        cluster_std: 5.0,
    };
    let ds = normalize_unit(&generate_manifold_dataset(&spec).expect("valid spec")).expect("nonzero inputs");
    ds.train_batch().expect("nonempty")
}

pub fn nets(m: usize, d_in: usize, d_out: usize) -> (GeneratorNet, DiscriminatorNet) {
    let gen = init_generator(m, d_in, d_out, InitMode::Theory, &mut SeededRng::new(1, 10)).expect("valid shape");
    let disc = init_discriminator(m, d_out, 0.01, &mut SeededRng::new(1, 11)).expect("valid shape");
    (gen, disc)
}

pub fn turing_grid(side: usize) -> RDGrid {
    let p = TuringParams::paper();
    init_turing(side, side, p.h, p.k, 0.03, &mut SeededRng::new(1, 0)).expect("valid grid")
}

pub fn grayscott_grid(side: usize) -> RDGrid {
    init_grayscott(side, side, 5).expect("valid grid")
}
