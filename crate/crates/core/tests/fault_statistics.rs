//! Statistical behaviour of the fault injector.

use bitshield::campaign::{run_campaign, CampaignConfig};
use bitshield::evalharness::{gen_dataset_sized, DenseLayer, TinyModel};
use bitshield::faultinj::{inject, inject_debug, sample_flip_count, FaultSpec};
use bitshield::schemes::{pack_image, MemoryImage, TensorDescriptor};
use bitshield::{FloatLayout, SchemeConfig, SchemeKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A bare unprotected image with exactly `bits` data bits.
fn blank_image(bits: u64) -> MemoryImage {
    let lines = (bits / 64) as usize;
    let words = lines * 4;
    MemoryImage {
        layout: FloatLayout::FP16,
        scheme: SchemeConfig::new(SchemeKind::Unprotected, 64),
        lines: vec![0; lines],
        check_bits: None,
        manifest: vec![TensorDescriptor {
            name: "w".into(),
            shape: vec![words],
            word_offset: 0,
            word_count: words,
        }],
    }
}

#[test]
fn one_expected_flip_in_a_megabit() {
    let image = blank_image(1 << 20);
    let ber = 2f64.powi(-20);
    let trials = 10_000u64;
    let total: u64 = (0..trials)
        .map(|i| inject(&image, &FaultSpec::new(ber, 11, i).unwrap()).1.flips_total)
        .sum();
    let mean = total as f64 / trials as f64;
    assert!((mean - 1.0).abs() <= 0.03, "mean flips {mean}");
}

#[test]
fn flip_count_mean_and_variance_match_binomial() {
    let n = 1u64 << 24;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for p in [1e-6, 1e-5, 1e-4] {
        let trials = 10_000;
        let counts: Vec<f64> = (0..trials).map(|_| sample_flip_count(n, p, &mut rng) as f64).collect();
        let mean = counts.iter().sum::<f64>() / trials as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let expect = n as f64 * p;
        let expect_var = expect * (1.0 - p);
        let sigma_of_mean = (expect_var / trials as f64).sqrt();
        assert!(
            (mean - expect).abs() < 3.0 * sigma_of_mean,
            "p={p}: mean {mean} vs {expect}"
        );
        assert!(
            (var / expect_var - 1.0).abs() < 0.05,
            "p={p}: variance {var} vs {expect_var}"
        );
    }
}

#[test]
fn positions_are_uniform_over_64_buckets() {
    let bits = 1u64 << 20;
    let image = blank_image(bits);
    let mut buckets = [0u64; 64];
    let mut total = 0u64;
    for i in 0..100 {
        let (_, r) = inject_debug(&image, &FaultSpec::new(1e-3, 5, i).unwrap());
        for p in r.positions.unwrap() {
            buckets[(p * 64 / bits) as usize] += 1;
            total += 1;
        }
    }
    assert!(total > 100_000);
    let expect = total as f64 / 64.0;
    let chi2: f64 = buckets.iter().map(|&b| (b as f64 - expect).powi(2) / expect).sum();
    // Upper 1% point of chi-square with 63 degrees of freedom.
    assert!(chi2 < 92.01, "chi-square {chi2}");
}

#[test]
fn check_bits_are_targets_only_with_secded() {
    let tensors = vec![bitshield::Tensor::new(
        "w",
        vec![4000],
        vec![half::f16::from_f32(0.5); 4000],
    )];
    for kind in SchemeKind::ALL {
        let image = pack_image(&tensors, &SchemeConfig::new(kind, 64)).unwrap();
        let mut in_check = 0;
        for i in 0..50 {
            let (_, r) = inject(&image, &FaultSpec::new(1e-2, 9, i).unwrap());
            assert_eq!(r.flips_total, r.flips_in_data + r.flips_in_check);
            in_check += r.flips_in_check;
        }
        assert_eq!(in_check > 0, kind.has_secded(), "{kind:?}");
    }
}

#[test]
fn campaign_results_do_not_depend_on_worker_count() {
    let data = gen_dataset_sized(4, 10, 200);
    let model = TinyModel::<f32> {
        layers: vec![
            DenseLayer {
                inputs: 2,
                outputs: 16,
                weight: (0..32).map(|i| ((i * 7 % 13) as f32 - 6.0) / 4.0).collect(),
                bias: vec![0.1; 16],
            },
            DenseLayer {
                inputs: 16,
                outputs: 3,
                weight: (0..48).map(|i| ((i * 5 % 11) as f32 - 5.0) / 3.0).collect(),
                bias: vec![0.0; 3],
            },
        ],
    }
    .cast::<half::f16>();
    let scheme = SchemeConfig::new(SchemeKind::Unprotected, 64);
    let image = pack_image(&model.tensors(), &scheme).unwrap();
    let mut config = CampaignConfig::new(scheme, vec![1e-3, 1e-2], 21);
    config.min_iterations = 40;
    config.max_iterations = 300;
    config.convergence_window = 20;
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_campaign(&config, &model, &data.eval, &image).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
}
