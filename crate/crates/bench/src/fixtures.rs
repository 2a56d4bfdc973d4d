//! Instances shared by the benchmarks.

use conelq_core::bsdej::{random_pair, HarnessConfig, LatticeBsdej};
use conelq_core::meanvariance::MarketModel;
use conelq_core::{Cone, DMatrix, DVector, HInput, HMark, LqCoefficients};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Unconstrained no-jump portfolio problem (r = 0.03, μ = 0.2, σ = 0.3).
pub fn classical() -> LqCoefficients {
    LqCoefficients::scalar(1.0, 0.03, 0.2, 0.0, 0.3, 0.0, 0.0, 0.0, 1.0, &[])
}

/// Standard-case scalar instance with one jump mark.
pub fn jump() -> LqCoefficients {
    LqCoefficients::scalar(1.0, 0.1, 0.5, 0.2, 0.4, 1.0, 0.5, 0.1, 1.0, &[(-0.3, 0.6, 1.0)])
}

/// One-mark market with no short selling.
pub fn market() -> MarketModel {
    MarketModel::constant(
        1.0,
        0.03,
        DVector::from_element(1, 0.2),
        DMatrix::from_element(1, 1, 0.3),
        vec![(DVector::from_element(1, -0.3), 0.5)],
        Cone::orthant(1),
        1.0,
    )
}

/// Three controls, two noises, two marks.
pub fn generator_input() -> HInput {
    HInput::new(
        DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.4, 0.3])),
        DMatrix::from_row_slice(2, 3, &[0.4, 0.1, 0.0, -0.2, 0.3, 0.5]),
        DVector::from_vec(vec![0.3, -0.2, 0.1]),
        DVector::from_vec(vec![0.1, 0.2]),
        DVector::from_vec(vec![0.05, 0.0, -0.05]),
        vec![
            HMark { e: -0.3, f: DVector::from_vec(vec![0.6, 0.0, 0.2]), nu: 1.0 },
            HMark { e: 0.2, f: DVector::from_vec(vec![-0.1, 0.4, 0.0]), nu: 0.5 },
        ],
        1.3,
        0.8,
    )
}

/// A certified comparison pair with three components and two marks.
pub fn lattice_pair() -> (LatticeBsdej, LatticeBsdej) {
    let mut cfg = HarnessConfig::new(1, 1);
    cfg.dims = vec![3];
    cfg.marks = vec![2];
    random_pair(&mut ChaCha8Rng::seed_from_u64(5), &cfg)
}
