use qfock_core::arakiwoods::{modular_data, AwModel, SpectralBlock};
use qfock_core::convlemma::{run_suite, suite};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn standard_commutator_suite_passes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let setups = suite::standard(&mut rng).unwrap();
    assert!(setups.len() >= 10);
    for out in run_suite(&setups) {
        let out = out.unwrap();
        assert!(out.pass(), "{}: ratio {}", out.label, out.bound.ratio());
    }
}

#[test]
fn modular_data_on_two_pairs() {
    let blocks = [SpectralBlock::Pair { lambda: 2.0 }, SpectralBlock::Pair { lambda: 0.5 }];
    let m = AwModel::new(&blocks, 0.2, 3).unwrap();
    let md = modular_data(&m, 2).unwrap();
    for c in &md.checks {
        assert!(c.pass, "{c:?}");
    }
    assert!(md.min_eigenvalue > 0.0);
}

#[test]
fn modular_data_needs_headroom() {
    let m = AwModel::new(&[SpectralBlock::Invariant], 0.3, 2).unwrap();
    assert!(modular_data(&m, 2).is_err());
}
