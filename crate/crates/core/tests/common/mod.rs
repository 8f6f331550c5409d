//! Property bodies shared by the proptest suite and the acceptance harness.

#![allow(dead_code)]

use pfmsd_core::{
    build_pfm_equivalent, nint, run_ctsd, run_pfm_equivalent, LoopSpec, PiecewiseSignal,
    QuantizerSpec, SignalExpr,
};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub const CASES: u32 = 1000;

/// A stable loop of order 1 or 2 with an input inside its range.
#[derive(Debug, Clone)]
pub struct LoopCase {
    pub spec: LoopSpec,
    pub x: SignalExpr,
}

pub fn loop_case() -> impl Strategy<Value = LoopCase> {
    (
        1usize..=2,
        prop_oneof![Just(2u32), Just(3), Just(5), Just(8)],
        0.05f64..0.95,
        0.0f64..0.9,
        0.001f64..0.2,
        0.0f64..std::f64::consts::TAU,
        0.5f64..2.0,
    )
        .prop_map(|(order, levels, dc_frac, amp_frac, f_x, phase, a1)| {
            let (a, b) = if order == 1 {
                (vec![a1], vec![1.0])
            } else {
                (vec![1.0, a1], vec![1.0, 1.5])
            };
            let spec = LoopSpec::new(a, b, QuantizerSpec::new(levels));
            let span = f64::from(levels - 1);
            // second-order single-bit loops stay clear of the coding limit
            let (lo, hi) = if order == 2 && levels == 2 { (0.3, 0.7) } else { (0.0, 1.0) };
            let dc = span * (lo + (hi - lo) * dc_frac);
            let room = (dc - lo * span).min(hi * span - dc);
            let x = SignalExpr::tone(dc, amp_frac * room, f_x, phase);
            LoopCase { spec, x }
        })
}

/// `Σ y[n]` equals the number of impulses in `(0, N T_s]`.
pub fn count_conservation(c: &LoopCase) -> Result<(), TestCaseError> {
    let n = 64;
    let eq = build_pfm_equivalent(&c.spec).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let tr = run_pfm_equivalent(&eq, &c.x, n).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let total: u64 = tr.y.iter().map(|&y| u64::from(y)).sum();
    let t_end = n as f64 * tr.t_s;
    prop_assert_eq!(total, tr.train.count_in(0.0, t_end) as u64);
    prop_assert!(tr.train.times.iter().all(|&t| t > 0.0 && t <= t_end));
    Ok(())
}

/// `0 <= v - Δ y < Δ` at every unsaturated CTSD sample.
pub fn residual_bound(c: &LoopCase) -> Result<(), TestCaseError> {
    let tr = run_ctsd(&c.spec, &c.x, 64).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let step = c.spec.quantizer.step;
    for k in 0..tr.len() {
        if !tr.saturated[k] {
            let w = tr.v[k] - step * f64::from(tr.y[k]);
            prop_assert!((0.0..step).contains(&w), "sample {} residual {}", k + 1, w);
        }
    }
    Ok(())
}

/// Changing `a_n` leaves the single-bit equivalent unchanged.
pub fn a_n_invariance(order: usize, a_n: f64, b: &[f64]) -> Result<(), TestCaseError> {
    let mut a = vec![1.0; order];
    let base = LoopSpec::new(a.clone(), b[..order].to_vec(), QuantizerSpec::single_bit());
    a[order - 1] = a_n;
    let moved = LoopSpec::new(a, b[..order].to_vec(), QuantizerSpec::single_bit());
    let e0 = build_pfm_equivalent(&base).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let e1 = build_pfm_equivalent(&moved).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(&e0.l_pfm, &e1.l_pfm);
    prop_assert_eq!(&e0.l_fs, &e1.l_fs);
    prop_assert_eq!(e0.alpha, e1.alpha);
    prop_assert_eq!(e0.beta, e1.beta);
    prop_assert_eq!(&e0.initial_filter_state, &e1.initial_filter_state);
    prop_assert_eq!(e0.initial_core_state, e1.initial_core_state);
    Ok(())
}

/// `∫_a^c = ∫_a^b + ∫_b^c` to machine precision.
pub fn integrate_additivity(
    x: &SignalExpr,
    a: f64,
    b: f64,
    c: f64,
) -> Result<(), TestCaseError> {
    let s = PiecewiseSignal::from_signal(x, 0.0, 100.0)
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    let whole = s.integrate(a, c).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let left = s.integrate(a, b).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let right = s.integrate(b, c).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let scale = 1.0 + whole.abs() + left.abs() + right.abs();
    prop_assert!((whole - left - right).abs() <= 1e-12 * scale);
    Ok(())
}

/// `nint(k + 1/2) = k + 1` and `nint` is within half a unit of its argument.
pub fn nint_half_up(k: i32, frac: f64) -> Result<(), TestCaseError> {
    let k = f64::from(k);
    prop_assert_eq!(nint(k + 0.5), k + 1.0);
    let v = k + frac;
    let r = nint(v);
    prop_assert_eq!(r, r.round());
    prop_assert!(v - r >= -0.5 && v - r < 0.5);
    Ok(())
}

pub fn signal() -> impl Strategy<Value = SignalExpr> {
    (-2.0f64..2.0, 0.0f64..1.0, 0.001f64..0.5, 0.0f64..std::f64::consts::TAU)
        .prop_map(|(dc, a, f, ph)| SignalExpr::tone(dc, a, f, ph))
}

pub fn triple() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.0f64..100.0, 0.0f64..100.0, 0.0f64..100.0).prop_map(|(p, q, r)| {
        let mut v = [p, q, r];
        v.sort_by(f64::total_cmp);
        (v[0], v[1], v[2])
    })
}
