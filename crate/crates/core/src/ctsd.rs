//! Continuous-time CIFB modulator with ideal integrators, NRZ feedback and a
//! floor quantizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{iterated_integrals, window_cuts, Expr};
use crate::types::{validate_loop_spec, LoopSpec, Mode, QuantizerSpec, SignalExpr};

/// State magnitude, in units of `x_m`, beyond which a run is declared
/// unstable.
pub const DEFAULT_STATE_GUARD: f64 = 1e6;

/// Output of a CTSD run. Vectors are indexed by `n - 1` for the sample taken
/// at `t = n T_s`, `n = 1..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtsdTrace {
    pub y: Vec<u32>,
    /// Quantizer input at the sampling instant; `u_n / (a_n b_n)` under the
    /// single-bit scaling, `u_n` otherwise.
    pub v: Vec<f64>,
    pub saturated: Vec<bool>,
    /// Integrator states `u_1..u_n` at the sampling instant.
    pub states: Vec<Vec<f64>>,
    pub t_s: f64,
}

impl CtsdTrace {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// `clamp(floor(v/Δ), 0, L-1)` and whether the clamp was active.
pub fn quantize(v: f64, q: &QuantizerSpec) -> Result<(u32, bool)> {
    if !v.is_finite() {
        return Err(Error::Numeric {
            t_lo: f64::NAN,
            t_hi: f64::NAN,
            message: format!("non-finite quantizer input {v}"),
        });
    }
    let raw = (v / q.step).floor();
    let top = f64::from(q.levels - 1);
    if raw < 0.0 {
        Ok((0, true))
    } else if raw > top {
        Ok((q.levels - 1, true))
    } else {
        Ok((raw as u32, false))
    }
}

/// Closed-form integrator chain on one window with a constant DAC level.
/// Returns the state expressions in local time.
pub(crate) fn chain_exprs(spec: &LoopSpec, c: &[f64], u0: &[f64], dac: f64) -> Vec<Expr> {
    let mut out: Vec<Expr> = Vec::with_capacity(spec.order);
    let step = spec.quantizer.step;
    for i in 0..spec.order {
        let mut integrand = out.last().cloned().unwrap_or_default();
        if c[i] != 0.0 {
            integrand.add_assign_scaled(&Expr::input(1.0), c[i]);
        }
        integrand.add_constant(-spec.b[i] * step * dac);
        let mut u = integrand.integral().scaled(spec.a[i] * spec.f_s);
        u.add_constant(u0[i]);
        out.push(u);
    }
    out
}

/// Advance integrator states from `t0` to `t1` under a constant DAC level.
pub(crate) fn propagate(
    spec: &LoopSpec,
    c: &[f64],
    x: &SignalExpr,
    u: &mut [f64],
    dac: f64,
    t0: f64,
    t1: f64,
) {
    let cuts = window_cuts(x, t0, t1);
    for w in cuts.windows(2) {
        let exprs = chain_exprs(spec, c, u, dac);
        let tau = w[1] - w[0];
        let j = iterated_integrals(x, w[0], tau, spec.order);
        for (ui, e) in u.iter_mut().zip(&exprs) {
            *ui = e.eval_with(tau, &j);
        }
    }
}

/// Quantizer input for the given integrator states.
pub(crate) fn quantizer_input(spec: &LoopSpec, u: &[f64]) -> f64 {
    let n = spec.order;
    if spec.mode() == Mode::SingleBit {
        u[n - 1] / (spec.a[n - 1] * spec.b[n - 1])
    } else {
        u[n - 1]
    }
}

pub fn run_ctsd(spec: &LoopSpec, x: &SignalExpr, n: usize) -> Result<CtsdTrace> {
    run_ctsd_with_guard(spec, x, n, DEFAULT_STATE_GUARD)
}

/// Run the modulator for `n` samples. The DAC holds `y[k]` on
/// `[k T_s, (k+1) T_s)` with `y[0] = 0`.
pub fn run_ctsd_with_guard(
    spec: &LoopSpec,
    x: &SignalExpr,
    n: usize,
    guard: f64,
) -> Result<CtsdTrace> {
    validate_loop_spec(spec)?;
    x.validate()?;
    if spec.quantizer_feedforward != 0.0 {
        return Err(Error::Unsupported(
            "feed-forward from the input into the quantizer".into(),
        ));
    }
    let c = spec.c();
    let t_s = spec.t_s();
    let limit = guard * spec.quantizer.x_m();
    let mut u = spec.initial_state();
    let mut tr = CtsdTrace {
        y: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        saturated: Vec::with_capacity(n),
        states: Vec::with_capacity(n),
        t_s,
    };
    let mut dac = 0u32;
    for k in 0..n {
        let t0 = k as f64 * t_s;
        let t1 = (k + 1) as f64 * t_s;
        propagate(spec, &c, x, &mut u, f64::from(dac), t0, t1);
        if let Some((i, m)) = u
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.abs() <= limit))
            .map(|(i, v)| (i, v.abs()))
        {
            return Err(Error::Instability {
                sample: k + 1,
                state: i + 1,
                magnitude: m,
            });
        }
        let v = quantizer_input(spec, &u);
        let (y, sat) = quantize(v, &spec.quantizer)?;
        tr.y.push(y);
        tr.v.push(v);
        tr.saturated.push(sat);
        tr.states.push(u.clone());
        dac = y;
    }
    Ok(tr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_examples() {
        let q2 = QuantizerSpec::new(2);
        let q5 = QuantizerSpec::new(5);
        assert_eq!(quantize(0.49, &q2).unwrap(), (0, false));
        assert_eq!(quantize(3.7, &q5).unwrap(), (3, false));
        assert_eq!(quantize(9.2, &q5).unwrap(), (4, true));
        assert_eq!(quantize(-0.1, &q5).unwrap(), (0, true));
        assert!(quantize(f64::NAN, &q5).is_err());
    }

    #[test]
    fn first_order_half_scale_matches_recursion() {
        let spec = LoopSpec::new(vec![1.0], vec![1.0], QuantizerSpec::single_bit());
        let tr = run_ctsd(&spec, &SignalExpr::dc(0.5), 200).unwrap();
        let (mut v, mut y) = (0.0f64, 0u32);
        for i in 0..200 {
            v += 0.5 - f64::from(y);
            y = v.floor().clamp(0.0, 1.0) as u32;
            assert_eq!(tr.y[i], y, "sample {}", i + 1);
        }
        assert_eq!(&tr.y[..4], &[0, 1, 0, 1]);
    }

    #[test]
    fn zero_input_rests() {
        let spec = LoopSpec::new(vec![1.0, 1.0], vec![1.0, 1.5], QuantizerSpec::new(5));
        let tr = run_ctsd(&spec, &SignalExpr::dc(0.0), 100).unwrap();
        assert!(tr.y.iter().all(|&y| y == 0));
    }

    #[test]
    fn residual_bound_off_saturation() {
        let spec = LoopSpec::new(vec![1.0, 1.0], vec![1.0, 1.5], QuantizerSpec::new(5));
        let x = SignalExpr::tone(2.0, 0.9, 0.01, 0.0);
        let tr = run_ctsd(&spec, &x, 2000).unwrap();
        for i in 0..tr.len() {
            if !tr.saturated[i] {
                let r = tr.v[i] - f64::from(tr.y[i]);
                assert!((0.0..1.0).contains(&r));
            }
        }
    }

    #[test]
    fn unstable_loop_reports_sample() {
        // positive feedback: negative b grows without bound
        let spec = LoopSpec::new(vec![1.0], vec![-1.0], QuantizerSpec::new(4));
        match run_ctsd(&spec, &SignalExpr::dc(1.0), 400_000) {
            Err(Error::Instability { sample, state, .. }) => {
                assert!(sample > 1);
                assert_eq!(state, 1);
            }
            other => panic!("expected instability, got {other:?}"),
        }
    }

    #[test]
    fn initial_state_is_used() {
        let spec = LoopSpec::new(vec![1.0], vec![1.0], QuantizerSpec::new(4))
            .with_initial_state(vec![2.5]);
        let tr = run_ctsd(&spec, &SignalExpr::dc(0.0), 3).unwrap();
        assert_eq!(tr.y[0], 2);
    }
}
