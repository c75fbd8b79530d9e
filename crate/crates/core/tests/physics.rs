use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use qshield::adversary::{grad_stats_experiment, GradStatsConfig};
use qshield::dataset::{decode_dataset, encode_dataset, generate_dataset, ClusterIsing, DatasetConfig};
use qshield::defense::CodebookKind;
use qshield::haar::{first_moment, mc_first_moment};
use qshield::lanczos::LanczosConfig;
use qshield::linalg::CMatrix;
use qshield::qec::{logical_error_rate, repetition_failure, NoiseKind, NoiseModel, QecCode};
use qshield::rng::{domain, stream};

fn dense_hamiltonian(h: &ClusterIsing) -> DMatrix<f64> {
    let d = h.dim();
    let mut m = DMatrix::zeros(d, d);
    let mut e = vec![0.0; d];
    let mut out = vec![0.0; d];
    for j in 0..d {
        e.iter_mut().for_each(|x| *x = 0.0);
        e[j] = 1.0;
        h.apply_real(&e, &mut out);
        for i in 0..d {
            m[(i, j)] = out[i];
        }
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn hamiltonian_is_symmetric(n in 3usize..7, lambda in 0.0f64..2.0) {
        let m = dense_hamiltonian(&ClusterIsing::new(n, lambda).unwrap());
        prop_assert!((&m - m.transpose()).abs().max() < 1e-14);
    }

    #[test]
    fn lanczos_matches_dense_diagonalization(n in 3usize..8, lambda in 0.0f64..2.0, seed in any::<u64>()) {
        let h = ClusterIsing::new(n, lambda).unwrap();
        let dense = SymmetricEigen::new(dense_hamiltonian(&h));
        let e0 = dense.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let gs = h.ground_state(&LanczosConfig::default(), &mut stream(seed, domain::DATASET, 0)).unwrap();
        prop_assert!((gs.energy - e0).abs() < 1e-8, "lanczos {} dense {e0}", gs.energy);
        let hv = h.apply(&gs.state).unwrap();
        let resid: f64 = hv.iter().zip(gs.state.amplitudes()).map(|(a, b)| (a - b * gs.energy).norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(resid < 1e-6);
    }
}

#[test]
fn dataset_round_trips_through_the_binary_format() {
    let ds = generate_dataset(&DatasetConfig::new(4, 12, 9), &LanczosConfig::default()).unwrap();
    let back = decode_dataset(&encode_dataset(&ds)).unwrap();
    assert_eq!(back.samples.len(), ds.samples.len());
    assert_eq!(encode_dataset(&back), encode_dataset(&ds));
}

#[test]
fn first_moment_monte_carlo_agrees_with_the_formula() {
    let o = CMatrix::from_real_diagonal(&[1.0, 0.0, 0.0, -0.5]);
    let exact = first_moment(&o).unwrap();
    let est = mc_first_moment(&o, 20_000, &mut stream(1, domain::HAAR_MC, 0)).unwrap();
    assert!(est.mean.distance(&exact) < 5.0 * est.stderr.max(1e-3), "{} vs stderr {}", est.mean.distance(&exact), est.stderr);
}

#[test]
fn global_encoder_gradient_variance_agrees_with_the_exact_law() {
    let cfg = GradStatsConfig::new(vec![3, 5], CodebookKind::GlobalHaar, 2000, 11);
    for rec in grad_stats_experiment(&cfg).unwrap() {
        let z = (rec.variance - rec.thm_exact) / rec.variance_stderr;
        assert!(z.abs() < 4.0, "n={}: variance {} exact {} z {z}", rec.n, rec.variance, rec.thm_exact);
        assert!(rec.variance <= rec.thm_bound + 4.0 * rec.variance_stderr);
        assert!(rec.mean.abs() < 4.0 * rec.mean_stderr + 1e-12);
    }
}

#[test]
fn repetition_code_rates_follow_majority_vote() {
    let code = QecCode::repetition3();
    for p in [0.05, 0.2] {
        let est = logical_error_rate(&code, &NoiseModel::iid(NoiseKind::BitFlip { p }), 4000, 3).unwrap();
        let theory = repetition_failure(p, 1);
        assert!((est.rate - theory).abs() < 4.0 * est.stderr.max(1e-3), "p={p}: {} vs {theory}", est.rate);
    }
}
