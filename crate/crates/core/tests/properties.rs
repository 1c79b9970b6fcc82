//! Property-based invariants.

use std::path::PathBuf;

use evit_core::analysis::normalize_min_max;
use evit_core::attention::ConnectionPattern;
use evit_core::backbone::{StageConfig, VariantName};
use evit_core::feedforward::FfnKind;
use evit_core::harness::{Architecture, DataSource, OptimConfig, RunConfig};
use evit_core::image::Image;
use evit_core::{ops, Tensor};
use proptest::prelude::*;

fn positive_f64() -> impl Strategy<Value = f64> {
    prop_oneof![1e-12..1e3f64, Just(1e-3), Just(0.05)]
}

fn stage() -> impl Strategy<Value = StageConfig> {
    (1..30usize, 1..600usize, 1..17usize, 1..9usize, 1..9usize, positive_f64()).prop_map(|(b, c, h, s, d, e)| StageConfig::new(b, c, h, s, d, e))
}

fn architecture() -> impl Strategy<Value = Architecture> {
    prop_oneof![
        prop::sample::select(VariantName::ALL.to_vec()).prop_map(Architecture::Variant),
        Just(Architecture::ReducedTiny),
        (1..64usize, [stage(), stage(), stage(), stage()], 1..2048usize).prop_map(|(stem_channels, stages, head_channels)| Architecture::Custom {
            stem_channels,
            stages,
            head_channels
        }),
    ]
}

fn run_config() -> impl Strategy<Value = RunConfig> {
    let optim = (positive_f64(), 0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64, positive_f64(), 0..5000usize, 1..512usize, any::<bool>()).prop_map(
        |(lr, weight_decay, beta1, beta2, eps, steps, batch_size, cosine)| OptimConfig {
            lr,
            weight_decay,
            beta1,
            beta2,
            eps,
            steps,
            batch_size,
            cosine,
        },
    );
    let data = prop_oneof![
        (1..10_000usize, 0.0..1.0f64).prop_map(|(samples, noise)| DataSource::Shapes { samples, noise }),
        "[a-z0-9_][a-z0-9_./-]{0,30}".prop_map(|p| DataSource::Directory(PathBuf::from(p))),
    ];
    (
        any::<u64>(),
        architecture(),
        1..1000usize,
        prop::sample::select(ConnectionPattern::ALL.to_vec()),
        prop::sample::select(FfnKind::ALL.to_vec()),
        any::<bool>(),
        1..512usize,
        optim,
        data,
    )
        .prop_map(|(seed, architecture, num_classes, pattern, ffn, zero_head, input, optim, data)| RunConfig {
            seed,
            architecture,
            num_classes,
            pattern,
            ffn,
            zero_head,
            input,
            optim,
            data,
        })
}

fn tensor(max_rank: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(1..5usize, 1..=max_rank).prop_flat_map(|shape| {
        let n: usize = shape.iter().product();
        prop::collection::vec(-10.0..10.0f64, n).prop_map(move |d| Tensor::new(shape.clone(), d).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn config_render_parse_round_trip(cfg in run_config()) {
        let text = cfg.render();
        prop_assert_eq!(RunConfig::parse(&text, "prop").unwrap(), cfg);
    }

    #[test]
    fn softmax_rows_are_distributions(x in tensor(3)) {
        let y = ops::softmax(&x);
        let d = *x.shape().last().unwrap();
        for row in y.data().chunks(d) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&p| p > 0.0 && p <= 1.0));
        }
    }

    #[test]
    fn permute_then_inverse_is_identity(x in tensor(4), seed in any::<u64>()) {
        let mut perm: Vec<usize> = (0..x.rank()).collect();
        let mut s = seed;
        for i in (1..perm.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let y = ops::permute(&x, &perm).unwrap();
        let back = ops::permute(&y, &ops::inverse_permutation(&perm)).unwrap();
        prop_assert!(back.bitwise_eq(&x));
    }

    #[test]
    fn reshape_keeps_row_major_data(x in tensor(4)) {
        let flat = x.reshape(&[x.numel()]).unwrap();
        prop_assert_eq!(flat.data(), x.data());
    }

    #[test]
    fn layernorm_rows_are_standardized(x in tensor(3)) {
        let d = *x.shape().last().unwrap();
        prop_assume!(d >= 2);
        let (y, _) = ops::layernorm(&x, &Tensor::ones(&[d]), &Tensor::zeros(&[d]), ops::LAYERNORM_EPS).unwrap();
        for row in y.data().chunks(d) {
            prop_assert!(row.iter().sum::<f64>().abs() / (d as f64) < 1e-9);
        }
    }

    #[test]
    fn convolution_is_linear(a in -3.0..3.0f64, seed in 0..1000u64) {
        let gen = |s: u64, shape: &[usize]| Tensor::from_fn(shape, |i| (((i as u64 + 1) * (s * 2 + 7919)) % 1000) as f64 / 500.0 - 1.0);
        let x = gen(seed, &[1, 2, 5, 5]);
        let y = gen(seed + 1, &[1, 2, 5, 5]);
        let w = gen(seed + 2, &[3, 2, 3, 3]);
        let lhs = ops::conv2d(&ops::add(&ops::scale(&x, a), &y).unwrap(), &w, None, 1, 1).unwrap();
        let rhs = ops::add(&ops::scale(&ops::conv2d(&x, &w, None, 1, 1).unwrap(), a), &ops::conv2d(&y, &w, None, 1, 1).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn min_max_lands_in_unit_interval(v in prop::collection::vec(-1e6..1e6f64, 1..50)) {
        let n = normalize_min_max(&v);
        prop_assert!(n.iter().all(|x| (0.0..=1.0).contains(x)));
        let distinct = v.iter().any(|x| *x != v[0]);
        if distinct {
            prop_assert!(n.contains(&0.0) && n.contains(&1.0));
        }
    }

    #[test]
    fn pnm_round_trip(w in 1..20usize, h in 1..20usize, rgb in any::<bool>(), seed in any::<u8>()) {
        let channels = if rgb { 3 } else { 1 };
        let pixels = (0..w * h * channels).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed)).collect();
        let img = Image { width: w, height: h, channels, pixels };
        prop_assert_eq!(Image::decode(&img.encode(), std::path::Path::new("p")).unwrap(), img);
    }
}
