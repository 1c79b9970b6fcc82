//! Tape adjoints against central differences.

mod common;

use common::{check_op, rng, uniform};
use evit_core::analysis::ModuleKind;
use evit_core::backbone::VariantSpec;
use evit_core::harness::{gradcheck, GradcheckOptions};
use evit_core::tape::{AdjointFault, OpKind};
use evit_core::Tensor;

fn t(shape: &[usize], seed: u64) -> Tensor {
    uniform(&mut rng(seed), shape, 1.0)
}

#[test]
fn matmul_and_linear_adjoints() {
    check_op("matmul", &[t(&[2, 3, 4], 1), t(&[2, 4, 5], 2)], |tp, v| tp.matmul(v[0], v[1]));
    check_op("linear", &[t(&[2, 3, 4], 3), t(&[4, 5], 4), t(&[5], 5)], |tp, v| tp.linear(v[0], v[1], Some(v[2])));
}

#[test]
fn convolution_adjoints() {
    check_op("conv2d s2 p1", &[t(&[2, 3, 5, 6], 6), t(&[4, 3, 3, 3], 7), t(&[4], 8)], |tp, v| tp.conv2d(v[0], v[1], Some(v[2]), 2, 1));
    check_op("conv2d 2x2 s2", &[t(&[1, 2, 4, 4], 9), t(&[3, 2, 2, 2], 10), t(&[3], 11)], |tp, v| tp.conv2d(v[0], v[1], Some(v[2]), 2, 0));
    check_op("dwconv2d p1", &[t(&[2, 3, 5, 4], 12), t(&[3, 1, 3, 3], 13), t(&[3], 14)], |tp, v| tp.dwconv2d(v[0], v[1], Some(v[2]), 1, 1));
    check_op("dwconv2d reduce", &[t(&[1, 2, 6, 6], 15), t(&[2, 1, 3, 3], 16), t(&[2], 17)], |tp, v| tp.dwconv2d(v[0], v[1], Some(v[2]), 3, 0));
}

#[test]
fn normalization_and_activation_adjoints() {
    check_op("layernorm", &[t(&[3, 6], 18), t(&[6], 19), t(&[6], 20)], |tp, v| tp.layernorm(v[0], v[1], v[2]));
    check_op("softmax", &[t(&[3, 5], 21)], |tp, v| Ok(tp.softmax(v[0])));
    check_op("gelu", &[t(&[4, 5], 22)], |tp, v| Ok(tp.gelu(v[0])));
    check_op("avgpool", &[t(&[2, 3, 3, 2], 23)], |tp, v| tp.avgpool_global(v[0]));
}

#[test]
fn elementwise_adjoints() {
    check_op("add", &[t(&[3, 4], 24), t(&[3, 4], 25)], |tp, v| tp.add(v[0], v[1]));
    check_op("sub", &[t(&[3, 4], 26), t(&[3, 4], 27)], |tp, v| tp.sub(v[0], v[1]));
    check_op("mul", &[t(&[3, 4], 28), t(&[3, 4], 29)], |tp, v| tp.mul(v[0], v[1]));
    check_op("scale", &[t(&[3, 4], 30)], |tp, v| Ok(tp.scale(v[0], -1.7)));
    check_op("sum", &[t(&[3, 4], 31)], |tp, v| Ok(tp.sum(v[0])));
}

#[test]
fn layout_adjoints() {
    check_op("reshape", &[t(&[2, 6], 32)], |tp, v| tp.reshape(v[0], &[3, 4]));
    check_op("permute", &[t(&[2, 3, 4], 33)], |tp, v| tp.permute(v[0], &[2, 0, 1]));
    check_op("transpose", &[t(&[2, 3, 4], 34)], |tp, v| tp.transpose(v[0], 1, 2));
    check_op("concat", &[t(&[2, 3, 2], 35), t(&[2, 1, 2], 36)], |tp, v| tp.concat(&[v[0], v[1]], 1));
    check_op("concat last", &[t(&[2, 3], 37), t(&[2, 2], 38)], |tp, v| tp.concat_last_axis(&[v[0], v[1]]));
    check_op("narrow", &[t(&[2, 5, 3], 39)], |tp, v| tp.narrow(v[0], 1, 1, 3));
}

#[test]
fn cross_entropy_adjoint() {
    check_op("cross entropy", &[t(&[4, 3], 40)], |tp, v| tp.cross_entropy(v[0], &[0, 2, 1, 2]));
}

#[test]
fn end_to_end_gradcheck_covers_every_module_kind() {
    let report = gradcheck(&VariantSpec::reduced_tiny(2), &GradcheckOptions::default()).unwrap();
    assert_eq!(report.entries.len(), 10);
    for kind in [ModuleKind::Stem, ModuleKind::Cpe, ModuleKind::Sfa, ModuleKind::Dfa, ModuleKind::FfnConv, ModuleKind::FfnLinear, ModuleKind::Head] {
        assert!(report.modules().contains(&kind), "{kind} not sampled");
    }
    assert!(report.passed(), "max relative error {:e}", report.max_rel_error());
    assert!(report.entries.iter().filter(|e| e.analytic != 0.0).count() >= 9);
}

#[test]
fn corrupted_adjoint_is_detected() {
    let opts = GradcheckOptions {
        fault: Some(AdjointFault { kind: OpKind::Softmax, factor: 1.5 }),
        ..GradcheckOptions::default()
    };
    let report = gradcheck(&VariantSpec::reduced_tiny(2), &opts).unwrap();
    assert!(!report.passed(), "fault went unnoticed: {:e}", report.max_rel_error());
}

#[test]
fn zero_samples_is_vacuous() {
    let opts = GradcheckOptions { samples: 0, ..GradcheckOptions::default() };
    let report = gradcheck(&VariantSpec::reduced_tiny(2), &opts).unwrap();
    assert!(report.entries.is_empty() && report.passed());
}
