//! Fixtures shared by the benchmarks.

use pfmsd_core::{LoopSpec, QuantizerSpec, SignalExpr};

/// Second-order loop, `a = [1, 1]`, `b = [1, 1.5]`.
pub fn second_order(levels: u32) -> LoopSpec {
    LoopSpec::new(vec![1.0, 1.0], vec![1.0, 1.5], QuantizerSpec::new(levels))
}

/// A tone centred in the quantizer span at the given level below full scale.
pub fn test_tone(spec: &LoopSpec, dbfs: f64, f_x: f64) -> SignalExpr {
    let mid = spec.midscale_input();
    SignalExpr::tone(mid, mid * 10f64.powf(dbfs / 20.0), f_x, 0.0)
}
