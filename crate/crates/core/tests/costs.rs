//! Parameter and MAC accounting against independent counts.

use evit_core::analysis::{count_macs, count_params, ModuleKind};
use evit_core::attention::ConnectionPattern;
use evit_core::backbone::{BlockOptions, BuildOptions, Evit, VariantName, VariantSpec};
use evit_core::feedforward::FfnKind;
use evit_core::nn::{Conv, ConvKind, Initializer, Linear, ParamStore};
use evit_core::ops::MacCounter;
use evit_core::{Error, Tensor};

fn build(spec: &VariantSpec, pattern: ConnectionPattern, ffn: FfnKind) -> Evit {
    let opts = BuildOptions { block: BlockOptions { pattern, ffn }, ..BuildOptions::seeded(0) };
    Evit::build(spec, opts).unwrap()
}

#[test]
fn single_layer_formulas() {
    let mut store = ParamStore::new();
    let mut init = Initializer::new(0);
    let lin = Linear::new(&mut store, &mut init, "fc", 64, 128).unwrap();
    assert_eq!(lin.param_count(), 64 * 128 + 128);
    assert_eq!(lin.macs(1), 8192);
    let conv = Conv::new(&mut store, &mut init, "stem", ConvKind::Dense, 3, 28, 3, 2, 1).unwrap();
    assert_eq!(conv.output_side(224), Some(112));
    assert_eq!(conv.macs(112, 112), 28 * 3 * 9 * 112 * 112);
    let dw = Conv::depthwise(&mut store, &mut init, "dw", 56, 8, 8, 0).unwrap();
    assert_eq!(dw.macs(7, 7), 56 * 64 * 49);
}

#[test]
fn parameter_totals_equal_brute_force_sums() {
    for v in VariantName::ALL {
        let model = Evit::build(&v.spec(), BuildOptions::seeded(0)).unwrap();
        let brute: usize = model.trainable_parameters().iter().map(|(_, t)| t.data().len()).sum();
        let report = count_params(&model);
        assert_eq!(report.total_params(), brute, "{v}");
        assert_eq!(report.rows.iter().map(|r| r.params).sum::<usize>(), brute);
        assert!(report.reference.is_some());
    }
}

#[test]
fn analytic_macs_equal_instrumented_counts() {
    let two_block = VariantSpec::tiny().reduced(4, 2).with_classes(3);
    for pattern in ConnectionPattern::ALL {
        for ffn in FfnKind::ALL {
            let model = build(&two_block, pattern, ffn);
            for side in [64, 96] {
                let analytic = count_macs(&model, (side, side)).unwrap().total_macs();
                let counter = MacCounter::start();
                model.predict(&Tensor::zeros(&[1, 3, side, side])).unwrap();
                assert_eq!(counter.count(), analytic, "{pattern}/{ffn} at {side}");
            }
        }
    }
}

#[test]
fn instrumented_count_scales_with_batch() {
    let model = Evit::build(&VariantSpec::reduced_tiny(2), BuildOptions::seeded(0)).unwrap();
    let per_image = count_macs(&model, (64, 64)).unwrap().total_macs();
    let counter = MacCounter::start();
    model.predict(&Tensor::zeros(&[3, 3, 64, 64])).unwrap();
    assert_eq!(counter.count(), 3 * per_image);
}

#[test]
fn pattern_choice_leaves_parameter_total_unchanged() {
    let spec = VariantSpec::tiny();
    let totals: Vec<usize> = ConnectionPattern::ALL.iter().map(|&p| count_params(&build(&spec, p, FfnKind::Bffn)).total_params()).collect();
    assert!(totals.windows(2).all(|w| w[0] == w[1]), "{totals:?}");
}

#[test]
fn report_renderings_are_consistent() {
    let model = Evit::build(&VariantSpec::tiny(), BuildOptions::seeded(0)).unwrap();
    let report = count_macs(&model, (224, 224)).unwrap();
    let table = report.render_table();
    assert!(table.contains("1 MAC reported as 1 FLOP"));
    assert!(table.contains("flops without head"));
    let csv = report.render_csv();
    let mut params = 0usize;
    let mut macs = 0u64;
    for line in csv.lines().skip(1).filter(|l| !l.starts_with("total")) {
        let cols: Vec<&str> = line.split(',').collect();
        params += cols[2].parse::<usize>().unwrap();
        macs += cols[3].parse::<u64>().unwrap();
    }
    assert_eq!((params, macs), (report.total_params(), report.total_macs()));
    let grouped: u64 = report.by_module().iter().map(|(_, _, m)| m).sum();
    assert_eq!(grouped, report.total_macs());
    assert!(report.by_module().iter().any(|(k, p, _)| *k == ModuleKind::FfnConv && *p > 0));
    assert!(report.macs_without_head() < report.total_macs());
    assert!(report.weight_layer_macs() < report.total_macs());
}

#[test]
fn cost_counting_rejects_bad_inputs() {
    let model = Evit::build(&VariantSpec::reduced_tiny(2), BuildOptions::seeded(0)).unwrap();
    assert!(matches!(count_macs(&model, (223, 223)), Err(Error::Contract(_))));
}
