//! Whole-network gradients against quad-precision central differences.

mod common;

use common::{analytic_gradients, compare, max_abs, random_input, reference_gradients, F32_FLOOR, F64_FLOOR};
use f128::f128;
use specrnet_core::model::{FmsVariant, SpecRNet, SpecRNetConfig};
use specrnet_core::nn::Mode;

/// Same topology with narrow layers, cheap enough for many probes.
fn narrow(fms: FmsVariant) -> SpecRNetConfig {
    SpecRNetConfig { block_channels: [3, 4, 4], gru_hidden: 3, fc_hidden: 5, fms, ..Default::default() }
}

#[test]
fn narrow_network_train_mode_with_recurrence() {
    for fms in [FmsVariant::ScaleAdd, FmsVariant::ScaleOnly] {
        let m64 = SpecRNet::<f64>::build(narrow(fms), 5);
        // T = 3 so hidden-to-hidden weights get non-zero gradients.
        let x = random_input(&[2, 1, 80, 200], 7);
        let probes = reference_gradients::<f128>(&m64, &x, Mode::Train, 6, 1e-10, 9);
        let floor = F64_FLOOR * max_abs(&probes);
        let r = compare(&probes, &analytic_gradients(&m64, &x, Mode::Train), floor, 1e-6);
        assert_eq!(r.passed, r.checked, "max {:e} at {}", r.max_rel, r.worst);
        assert!(probes.iter().any(|p| p.name.contains("w_hidden") && p.numeric != 0.0));
    }
}

#[test]
fn narrow_network_eval_mode_f32() {
    let mut m32 = SpecRNet::<f32>::build(narrow(FmsVariant::ScaleAdd), 6);
    // Non-trivial running statistics.
    m32.forward(&random_input(&[3, 1, 80, 64], 1).cast(), Mode::Train).unwrap();
    let m64 = m32.cast::<f64>();
    let x = random_input(&[1, 1, 80, 130], 8);
    let probes = reference_gradients::<f128>(&m64, &x, Mode::Eval, 6, 1e-10, 10);
    let scale = max_abs(&probes);
    let r64 = compare(&probes, &analytic_gradients(&m64, &x, Mode::Eval), F64_FLOOR * scale, 1e-6);
    assert_eq!(r64.passed, r64.checked, "f64 max {:e} at {}", r64.max_rel, r64.worst);
    let r32 = compare(&probes, &analytic_gradients(&m32, &x, Mode::Eval), F32_FLOOR * scale, 1e-3);
    assert_eq!(r32.passed, r32.checked, "f32 max {:e} at {}", r32.max_rel, r32.worst);
}
