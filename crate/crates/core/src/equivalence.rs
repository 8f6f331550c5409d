//! PFM equivalents of CIFB modulators and sample-exact comparison.

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::ctsd::run_ctsd;
use crate::error::{Error, Result};
use crate::pfm::run_pfm_equivalent;
use crate::tf::{ExactTF, Poly, RationalTF, Variable};
pub use crate::types::Mode;
use crate::types::{validate_loop_spec, LoopSpec, QuantizerSpec, SignalExpr};

/// A PFM core embedded between an input filter `L_FS'` and a feedback filter
/// `L_PFM`. The core's drive is `w = L_FS'{x} - L_PFM{Δ·y_dac}`.
///
/// `alpha` is already folded into both filters and is kept as a reported
/// value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfmEquivalentSpec {
    pub l_pfm: RationalTF,
    pub l_fs: RationalTF,
    pub alpha: f64,
    pub beta: f64,
    pub mode: Mode,
    pub quantizer: QuantizerSpec,
    pub f_s: f64,
    pub t_m: f64,
    /// Initial states of the filter realization (observer form, `ζ_1` first).
    pub initial_filter_state: Vec<f64>,
    /// Initial PFM core state, in units of the input.
    pub initial_core_state: f64,
    /// The loop this equivalent was built from.
    pub source: LoopSpec,
}

impl PfmEquivalentSpec {
    pub fn t_s(&self) -> f64 {
        1.0 / self.f_s
    }

    /// `L_PFM` in exact rational arithmetic, rebuilt from the source loop.
    pub fn exact_l_pfm(&self) -> Result<ExactTF> {
        Ok(exact_filters(&self.source)?.l_pfm)
    }
}

struct ExactFilters {
    l_pfm: ExactTF,
    l_fs: ExactTF,
    alpha: BigRational,
    beta: BigRational,
}

fn rat(v: f64) -> Result<BigRational> {
    BigRational::from_float(v).ok_or_else(|| Error::invalid("coefficient", v, "must be finite"))
}

fn exact_filters(spec: &LoopSpec) -> Result<ExactFilters> {
    let n = spec.order;
    let a = spec.a.iter().map(|&v| rat(v)).collect::<Result<Vec<_>>>()?;
    let b = spec.b.iter().map(|&v| rat(v)).collect::<Result<Vec<_>>>()?;
    let c = spec.c().iter().map(|&v| rat(v)).collect::<Result<Vec<_>>>()?;
    let fs = rat(spec.f_s)?;
    let single = spec.mode() == Mode::SingleBit;

    // Π_{j=i}^{n-1} a_j f_s, 0-based i
    let chain = |i: usize| -> BigRational {
        (i..n - 1).fold(BigRational::one(), |acc, j| acc * &a[j] * &fs)
    };
    let (scale, alpha, beta) = if single {
        let s = BigRational::one() / &b[n - 1];
        (s.clone(), s, BigRational::zero())
    } else {
        let beta = &a[n - 1] * &b[n - 1] - BigRational::one();
        (a[n - 1].clone(), a[n - 1].clone(), beta)
    };
    let mut pfm = vec![BigRational::zero(); n];
    let mut fsp = vec![BigRational::zero(); n];
    for i in 0..n - 1 {
        pfm[i] = &scale * &b[i] * chain(i);
        fsp[i] = &scale * &c[i] * chain(i);
    }
    pfm[n - 1] = beta.clone();
    fsp[n - 1] = &scale * &c[n - 1];
    // s^{n-1}
    let den = Poly::from_ints(&[1]).shift(n - 1);
    let pfm = Poly(pfm).trimmed();
    let l_pfm = if pfm.is_zero() {
        ExactTF::new(Poly::zero(), Poly::from_ints(&[1]), Variable::S)?
    } else {
        ExactTF::new(pfm, den.clone(), Variable::S)?
    };
    let l_fs = ExactTF::new(Poly(fsp).trimmed(), den, Variable::S)?;
    Ok(ExactFilters {
        l_pfm,
        l_fs,
        alpha,
        beta,
    })
}

/// Construct the PFM equivalent of a CIFB loop.
///
/// The single-bit scaling uses the comparator-normalized form with
/// `α = 1/b_n`; the multi-bit scaling uses `α = a_n`, `β = a_n b_n - 1`.
pub fn build_pfm_equivalent(spec: &LoopSpec) -> Result<PfmEquivalentSpec> {
    validate_loop_spec(spec)?;
    if spec.quantizer_feedforward != 0.0 {
        return Err(Error::Unsupported(
            "feed-forward from the input into the quantizer".into(),
        ));
    }
    let ex = exact_filters(spec)?;
    let to_f64 = |r: &BigRational| num_traits::ToPrimitive::to_f64(r).unwrap_or(f64::NAN);
    let n = spec.order;
    let single = spec.mode() == Mode::SingleBit;

    let u0 = spec.initial_state();
    let (zeta, g0) = map_initial_state(spec, &u0);
    debug_assert_eq!(zeta.len(), n - 1);

    Ok(PfmEquivalentSpec {
        l_pfm: ex.l_pfm.to_f64()?,
        l_fs: ex.l_fs.to_f64()?,
        alpha: to_f64(&ex.alpha),
        beta: to_f64(&ex.beta),
        mode: if single { Mode::SingleBit } else { Mode::MultiBit },
        quantizer: spec.quantizer.clone(),
        f_s: spec.f_s,
        t_m: spec.t_m(),
        initial_filter_state: zeta,
        initial_core_state: g0,
        source: spec.clone(),
    })
}

/// Map CTSD integrator states onto the equivalent's filter and core states:
/// `ζ_k = κ_k u_{n-k}` with `κ_1 = α` and `κ_{k+1} = κ_k a_{n-k} f_s`.
pub fn map_initial_state(spec: &LoopSpec, u: &[f64]) -> (Vec<f64>, f64) {
    let n = spec.order;
    let single = spec.mode() == Mode::SingleBit;
    let mut kappa = if single {
        1.0 / spec.b[n - 1]
    } else {
        spec.a[n - 1]
    };
    let mut zeta = Vec::with_capacity(n.saturating_sub(1));
    for k in 1..n {
        zeta.push(kappa * u[n - 1 - k]);
        kappa *= spec.a[n - 1 - k] * spec.f_s;
    }
    let g = if single {
        u[n - 1] / (spec.a[n - 1] * spec.b[n - 1])
    } else {
        u[n - 1]
    };
    (zeta, g)
}

/// Outcome of a sample-by-sample comparison.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchReport {
    #[serde(rename = "match")]
    pub is_match: bool,
    /// 0-based index of the first differing sample.
    pub first_mismatch: Option<usize>,
    pub mismatch_count: usize,
    pub n_samples: usize,
}

pub fn compare_outputs(ya: &[u32], yb: &[u32]) -> Result<MatchReport> {
    if ya.len() != yb.len() {
        return Err(Error::Usage(format!(
            "sequence lengths differ: {} vs {}",
            ya.len(),
            yb.len()
        )));
    }
    let mut first = None;
    let mut count = 0;
    for (i, (a, b)) in ya.iter().zip(yb).enumerate() {
        if a != b {
            count += 1;
            first.get_or_insert(i);
        }
    }
    Ok(MatchReport {
        is_match: count == 0,
        first_mismatch: first,
        mismatch_count: count,
        n_samples: ya.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    /// Sample number (1-based, sample taken at `n T_s`).
    pub n: usize,
    pub w: f64,
    pub g: f64,
    pub y_sd: u32,
    pub y_pfm: u32,
}

/// Per-sample signals of the first-order equivalence argument.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InductionTrace {
    /// CTSD quantization residual `v(nT) - Δ y_SD[n]`.
    pub w: Vec<f64>,
    /// PFM core state at `nT`.
    pub g: Vec<f64>,
    pub y_sd: Vec<u32>,
    pub y_pfm: Vec<u32>,
    /// Cumulative impulse count `r[n]`.
    pub r: Vec<u64>,
    pub counterexample: Option<Counterexample>,
}

impl InductionTrace {
    pub fn holds(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// Run both first-order systems and check the induction hypothesis
/// `w[n] = g[n]`, `y_SD[n] = y_PFM[n]`, `0 <= w, g < Δ` at every sample.
pub fn run_induction_oracle(spec: &LoopSpec, x: &SignalExpr, n: usize) -> Result<InductionTrace> {
    validate_loop_spec(spec)?;
    if spec.order != 1 {
        return Err(Error::Usage(format!(
            "induction oracle needs an order-1 loop, got order {}",
            spec.order
        )));
    }
    let delta = spec.quantizer.step;
    let ctsd = run_ctsd(spec, x, n)?;
    let eq = build_pfm_equivalent(spec)?;
    let pfm = run_pfm_equivalent(&eq, x, n)?;

    let mut tr = InductionTrace::default();
    let mut r = 0u64;
    for i in 0..n {
        let w = ctsd.v[i] - delta * f64::from(ctsd.y[i]);
        let g = pfm.snapshots[i].g;
        r += u64::from(pfm.y[i]);
        tr.w.push(w);
        tr.g.push(g);
        tr.y_sd.push(ctsd.y[i]);
        tr.y_pfm.push(pfm.y[i]);
        tr.r.push(r);
        let ok = (w - g).abs() <= 1e-9 * delta
            && ctsd.y[i] == pfm.y[i]
            && (0.0..delta).contains(&w)
            && (0.0..delta).contains(&g);
        if !ok && tr.counterexample.is_none() {
            tr.counterexample = Some(Counterexample {
                n: i + 1,
                w,
                g,
                y_sd: ctsd.y[i],
                y_pfm: pfm.y[i],
            });
        }
    }
    Ok(tr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn second(levels: u32) -> LoopSpec {
        LoopSpec::new(vec![1.0, 1.0], vec![1.0, 1.5], QuantizerSpec::new(levels))
    }

    #[test]
    fn first_order_multibit_has_no_feedback_filter() {
        let spec = LoopSpec::new(vec![1.0], vec![1.0], QuantizerSpec::new(4));
        let eq = build_pfm_equivalent(&spec).unwrap();
        assert_eq!(eq.alpha, 1.0);
        assert_eq!(eq.beta, 0.0);
        assert_eq!(eq.l_pfm.num, vec![0.0]);
        assert_eq!(eq.mode, Mode::MultiBit);
    }

    #[test]
    fn second_order_multibit_filters() {
        let eq = build_pfm_equivalent(&second(5)).unwrap();
        assert_eq!(eq.alpha, 1.0);
        assert_eq!(eq.beta, 0.5);
        // 1/2 + 1/s = (1 + s/2)/s
        assert_eq!(eq.l_pfm.num, vec![1.0, 0.5]);
        assert_eq!(eq.l_pfm.den, vec![0.0, 1.0]);
        assert_eq!(eq.l_fs.num, vec![1.0]);
    }

    #[test]
    fn second_order_single_bit_filters() {
        let eq = build_pfm_equivalent(&second(2)).unwrap();
        assert_eq!(eq.mode, Mode::SingleBit);
        assert_eq!(eq.alpha, 2.0 / 3.0);
        assert_eq!(eq.l_pfm.num, vec![2.0 / 3.0]);
        assert_eq!(eq.l_pfm.den, vec![0.0, 1.0]);
        assert_eq!(eq.l_fs.num, vec![2.0 / 3.0]);
        let exact = eq.exact_l_pfm().unwrap();
        assert_eq!(exact.num.0[0], BigRational::new(2.into(), 3.into()));
    }

    #[test]
    fn single_bit_ignores_last_integrator_gain() {
        let base = LoopSpec::new(vec![1.0, 1.0, 1.0], vec![0.05, 0.3, 0.641], QuantizerSpec::new(2));
        let reference = build_pfm_equivalent(&base).unwrap();
        for an in [0.5, 2.0, 7.0] {
            let mut s = base.clone();
            s.a[2] = an;
            let eq = build_pfm_equivalent(&s).unwrap();
            assert_eq!(eq.l_pfm, reference.l_pfm);
            assert_eq!(eq.l_fs, reference.l_fs);
            assert_eq!(eq.alpha, reference.alpha);
        }
    }

    #[test]
    fn feedback_filter_degree_is_order_minus_one() {
        for n in 1..=5 {
            for levels in [2, 5] {
                let s = LoopSpec::new(vec![1.0; n], vec![0.5; n], QuantizerSpec::new(levels));
                let eq = build_pfm_equivalent(&s).unwrap();
                if n > 1 {
                    assert_eq!(eq.l_pfm.den.len() - 1, n - 1);
                }
            }
        }
    }

    #[test]
    fn rejects_quantizer_feedforward() {
        let mut s = second(2);
        s.quantizer_feedforward = 0.3;
        assert!(matches!(
            build_pfm_equivalent(&s),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn compare_examples() {
        let r = compare_outputs(&[0, 1, 0], &[0, 1, 0]).unwrap();
        assert!(r.is_match);
        assert_eq!(r.first_mismatch, None);
        let r = compare_outputs(&[0, 1, 0, 1], &[0, 1, 1, 0]).unwrap();
        assert_eq!(r.first_mismatch, Some(2));
        assert_eq!(r.mismatch_count, 2);
        assert!(compare_outputs(&[0], &[0, 1]).unwrap_err().is_usage());
    }

    #[test]
    fn report_json_shape() {
        let r = compare_outputs(&[1, 1], &[1, 0]).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["match"], false);
        assert_eq!(v["first_mismatch"], 1);
        assert_eq!(v["mismatch_count"], 1);
        assert_eq!(v["n_samples"], 2);
    }

    #[test]
    fn oracle_rest_state() {
        let spec = LoopSpec::new(vec![1.0], vec![1.0], QuantizerSpec::single_bit());
        let tr = run_induction_oracle(&spec, &SignalExpr::dc(0.0), 50).unwrap();
        assert!(tr.holds());
        assert!(tr.w.iter().chain(&tr.g).all(|&v| v == 0.0));
        assert!(tr.y_sd.iter().all(|&y| y == 0));
    }

    #[test]
    fn oracle_half_scale_dc_alternates() {
        // brute-force recursion: v[n] = v[n-1] + x - y[n-1], y[n] = floor(v[n])
        let spec = LoopSpec::new(vec![1.0], vec![1.0], QuantizerSpec::single_bit());
        let tr = run_induction_oracle(&spec, &SignalExpr::dc(0.5), 1000).unwrap();
        assert!(tr.holds(), "{:?}", tr.counterexample);
        let (mut v, mut y) = (0.0f64, 0u32);
        for i in 0..1000 {
            v += 0.5 - f64::from(y);
            y = v.floor().clamp(0.0, 1.0) as u32;
            assert_eq!(tr.y_sd[i], y);
            let w = v - f64::from(y);
            assert!((tr.w[i] - w).abs() < 1e-12);
            assert!(w == 0.0 || w == 0.5);
        }
    }

    #[test]
    fn oracle_rejects_higher_order() {
        assert!(run_induction_oracle(&second(2), &SignalExpr::dc(0.5), 10)
            .unwrap_err()
            .is_usage());
    }
}
