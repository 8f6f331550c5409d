//! Alias transfer function, spur prediction from aliased PFM side bands,
//! coding-limit detection and dynamic-range sweeps.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ctsd::run_ctsd;
use crate::equivalence::{build_pfm_equivalent, compare_outputs, PfmEquivalentSpec};
use crate::error::{Error, Result};
use crate::pfm::{run_pfm_equivalent, EventTrace};
use crate::spectral::{levels, periodogram, sideband_series, sinc_compensated_amplitude, Window};
use crate::tf::{ExactTF, Poly, RationalTF, Variable};
use crate::types::{amplitude_to_dbfs, compute_kd, LoopSpec, QuantizerSpec, SignalExpr};

/// Nearest integer, ties rounded up.
pub fn nint(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// `|f - nint(f/f_s) f_s|`.
pub fn alias_frequency(f: f64, f_s: f64) -> f64 {
    (f - nint(f / f_s) * f_s).abs()
}

fn rat(v: f64) -> Result<BigRational> {
    BigRational::from_float(v).ok_or_else(|| Error::invalid("value", v, "must be finite"))
}

/// Numerator of `Z{n^m / m!} = N_m(z^{-1}) / (1 - z^{-1})^{m+1}`.
fn power_sequence_numerator(m: usize) -> Poly {
    let fact: BigInt = (1..=m).fold(BigInt::one(), |a, k| a * BigInt::from(k));
    let seq = Poly(
        (0..=m)
            .map(|n| BigRational::new(BigInt::from(n).pow(m as u32), fact.clone()))
            .collect(),
    );
    let full = seq.mul(&Poly::one_minus_x_pow(m + 1));
    Poly(full.0.into_iter().take(m + 1).collect()).trimmed()
}

/// `ATF(z) = 1/(1 + L_eq(z))` with
/// `L_eq(z) = {L_PFM(s) ((1 - e^{-sT})/s)^2}^* / T`, in exact arithmetic.
///
/// `L_PFM` must have all its poles at `s = 0`; each `s^{-k}` term becomes a
/// sampled polynomial in time.
pub fn alias_transfer_function_exact(spec: &PfmEquivalentSpec) -> Result<ExactTF> {
    let l = spec.exact_l_pfm()?.reduced();
    let t = rat(spec.t_s())?;
    let var = Variable::Z { period: spec.t_s() };
    let deg = l.den.degree().unwrap_or(0);
    if l.den.0[..deg].iter().any(|c| !c.is_zero()) {
        return Err(Error::Unsupported(
            "L_PFM poles must all be at s = 0 (ideal integrators)".into(),
        ));
    }
    if l.num.degree().unwrap_or(0) > deg {
        return Err(Error::Unsupported("improper L_PFM".into()));
    }
    if l.num.is_zero() {
        return ExactTF::new(Poly::from_ints(&[1]), Poly::from_ints(&[1]), var);
    }
    let lead = l.den.coeff(deg);
    // L_PFM = Σ_k h_k s^{-k}, k = 0..=deg; term k maps to h_k T^k n^{k+1}/(k+1)!
    let p = deg + 1;
    let mut nsum = Poly::zero();
    let mut tk = BigRational::one();
    for k in 0..=deg {
        let h = l.num.coeff(deg - k) / &lead;
        if !h.is_zero() {
            let m = k + 1;
            let term = power_sequence_numerator(m)
                .mul(&Poly::one_minus_x_pow(p - m))
                .scale(&(h * &tk));
            nsum = nsum.add(&term);
        }
        tk *= &t;
    }
    // L_eq = nsum / (1 - z^{-1})^{p-1}
    let d = Poly::one_minus_x_pow(p - 1);
    Ok(ExactTF::new(d.clone(), d.add(&nsum), var)?.reduced())
}

pub fn alias_transfer_function(spec: &PfmEquivalentSpec) -> Result<RationalTF> {
    alias_transfer_function_exact(spec)?.to_f64()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mechanism {
    /// Side-band tone already inside the first Nyquist zone.
    #[serde(rename = "II")]
    InBand,
    /// Side-band tone folded by the sampler.
    #[serde(rename = "III")]
    Aliased,
}

impl Mechanism {
    pub fn tag(self) -> &'static str {
        match self {
            Mechanism::InBand => "II",
            Mechanism::Aliased => "III",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spur {
    pub q: u32,
    pub r: i64,
    pub f_spur: f64,
    pub f_a: f64,
    /// Predicted tone amplitude at the output, in output levels.
    pub amplitude: f64,
    pub amp_dbfs_pred: f64,
    pub mechanism: Mechanism,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpurPrediction {
    /// Sorted by `f_a`.
    pub spurs: Vec<Spur>,
    pub f0: f64,
    pub f_x: f64,
    /// Tone amplitude at the PFM core drive.
    pub drive_amplitude: f64,
    pub q_max: u32,
    pub r_max: u32,
    /// Largest predicted amplitude among the edge terms `q = q_max` or
    /// `|r| = r_max`, in dBFS; a bound on what truncation leaves out.
    pub truncation_dbfs: f64,
}

impl SpurPrediction {
    pub fn get(&self, q: u32, r: i64) -> Option<&Spur> {
        self.spurs.iter().find(|s| s.q == q && s.r == r)
    }
}

/// Predict output spurs of a loop from its PFM side bands.
///
/// The core drive is taken from DC balance at the first integrator: rest
/// frequency `k_d (c_1/b_1) x_DC`, tone amplitude `A c_1/b_1`. Each
/// side-band tone passes the pulse shaper, folds to `f_a` and is scaled by
/// `|ATF(f_a)|`.
pub fn predict_spurs(
    spec: &PfmEquivalentSpec,
    x: &SignalExpr,
    q_max: u32,
    r_max: u32,
) -> Result<SpurPrediction> {
    if x.tones.len() != 1 || x.envelope.is_some() {
        return Err(Error::Usage(
            "spur prediction needs exactly one constant-amplitude tone".into(),
        ));
    }
    let src = &spec.source;
    let gain = src.c()[0] / src.b[0];
    let mut drive = x.clone();
    drive.x_dc *= gain;
    drive.tones[0].amplitude *= gain;
    let model = sideband_series(&drive, &spec.quantizer, spec.t_m, q_max, Some(r_max))?;
    let atf = alias_transfer_function(spec)?;
    let f_s = spec.f_s;
    let fs_levels = spec.quantizer.full_scale_levels();
    let mut spurs: Vec<Spur> = model
        .terms
        .iter()
        .map(|t| {
            let f_spur = f64::from(t.q) * model.f0 + t.r as f64 * model.f_x;
            let f_a = alias_frequency(f_spur, f_s);
            let mechanism = if f_spur.abs() <= f_s / 2.0 {
                Mechanism::InBand
            } else {
                Mechanism::Aliased
            };
            let amp = 2.0 * sinc_compensated_amplitude(&model, t.q, t.r).abs() * atf.magnitude(f_a);
            Spur {
                q: t.q,
                r: t.r,
                f_spur,
                f_a,
                amplitude: amp,
                amp_dbfs_pred: amplitude_to_dbfs(amp, fs_levels),
                mechanism,
            }
        })
        .collect();
    let truncation_dbfs = spurs
        .iter()
        .filter(|s| s.q == q_max || s.r.unsigned_abs() == u64::from(r_max))
        .map(|s| s.amp_dbfs_pred)
        .fold(f64::NEG_INFINITY, f64::max);
    spurs.sort_by(|a, b| a.f_a.total_cmp(&b.f_a).then(a.q.cmp(&b.q)).then(a.r.cmp(&b.r)));
    Ok(SpurPrediction {
        spurs,
        f0: model.f0,
        f_x: model.f_x,
        drive_amplitude: model.amplitude,
        q_max,
        r_max,
        truncation_dbfs,
    })
}

/// First violation of the PFM coding limit in a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverloadReport {
    pub violated: bool,
    /// Index of the impulse completing the violation.
    pub event_index: Option<usize>,
    pub time: Option<f64>,
    /// Single-bit: gap to the previous impulse. Multi-bit: span of the `L`
    /// impulses that share one sampling period.
    pub gap: Option<f64>,
    /// Sample `n` (1-based) whose period holds the violating impulse.
    pub sample: Option<usize>,
    pub input_amplitude: Option<f64>,
}

impl OverloadReport {
    fn none() -> Self {
        Self {
            violated: false,
            event_index: None,
            time: None,
            gap: None,
            sample: None,
            input_amplitude: None,
        }
    }
}

/// Relative slack on `t_{k+1} - t_k < T_s` so that exact-rate trains are
/// not flagged by rounding.
const GAP_SLACK: f64 = 1e-9;

/// Single-bit: the first pair of impulses closer than `T_s`. Multi-bit: the
/// first sampling period counting more than `L - 1` impulses.
pub fn detect_coding_limit(trace: &EventTrace, q: &QuantizerSpec) -> OverloadReport {
    let times = &trace.train.times;
    let t_s = trace.t_s;
    let found = if q.is_single_bit() {
        times
            .windows(2)
            .position(|w| w[1] - w[0] < t_s * (1.0 - GAP_SLACK))
            .map(|k| (k + 1, times[k + 1] - times[k]))
    } else {
        let top = q.levels as usize - 1;
        trace.y.iter().position(|&y| y as usize > top).map(|n| {
            // the L-th impulse of period n (1-based sample n + 1)
            let start = times.partition_point(|&t| t <= n as f64 * t_s);
            let k = start + top;
            (k, times[k] - times[start])
        })
    };
    let Some((k, gap)) = found else {
        return OverloadReport::none();
    };
    let t = times[k];
    OverloadReport {
        violated: true,
        event_index: Some(k),
        time: Some(t),
        gap: Some(gap),
        sample: Some((t / t_s).ceil().max(1.0) as usize),
        input_amplitude: trace.input.as_ref().map(|x| x.tone_amplitude_at(t)),
    }
}

/// In-band SNDR of an output sequence: Hann window over the whole record,
/// signal bins `±3` around `f_x`, bins `0..=2` excluded, band up to
/// `f_s/(2 OSR)`.
pub fn sndr_db(y: &[f64], f_x: f64, f_s: f64, osr: f64, full_scale: f64) -> Result<f64> {
    let n = y.len();
    let s = periodogram(y, f_s, full_scale, Window::Hann, n)?;
    let band = ((n as f64) / (2.0 * osr)).floor() as usize;
    let kx = (f_x * n as f64 / f_s).round() as usize;
    let (mut sig, mut noise) = (0.0, 0.0);
    for k in 3..=band.min(s.power.len() - 1) {
        if k.abs_diff(kx) <= 3 {
            sig += s.power[k];
        } else {
            noise += s.power[k];
        }
    }
    // signal bins below 3 still count as signal
    for k in kx.saturating_sub(3)..3 {
        sig += s.power[k];
    }
    Ok(10.0 * (sig / noise).log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub amplitude: f64,
    pub amplitude_dbfs: f64,
    pub sndr_db: f64,
    pub equiv_match: bool,
    pub coding_limit: bool,
    pub unstable: bool,
    pub first_mismatch: Option<usize>,
}

/// SNDR, equivalence and coding-limit flags over input amplitudes, around
/// the mid-scale DC level. Points run in parallel.
pub fn sweep_dynamic_range(
    spec: &LoopSpec,
    f_x: f64,
    amplitudes: &[f64],
    osr: f64,
    n: usize,
) -> Result<Vec<SweepPoint>> {
    if amplitudes.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::Usage("sweep amplitudes must be sorted ascending".into()));
    }
    if !(osr >= 1.0) {
        return Err(Error::Usage(format!("OSR must be at least 1, got {osr}")));
    }
    let eq = build_pfm_equivalent(spec)?;
    compute_kd(&spec.quantizer, spec.t_m())?;
    let x_dc = spec.midscale_input();
    let fs_levels = spec.quantizer.full_scale_levels();
    let points: Vec<Result<SweepPoint>> = amplitudes
        .par_iter()
        .map(|&a| {
            let x = SignalExpr::tone(x_dc, a, f_x, 0.0);
            let mut pt = SweepPoint {
                amplitude: a,
                amplitude_dbfs: amplitude_to_dbfs(a, x_dc),
                sndr_db: f64::NEG_INFINITY,
                equiv_match: false,
                coding_limit: false,
                unstable: false,
                first_mismatch: None,
            };
            let ctsd = match run_ctsd(spec, &x, n) {
                Ok(t) => t,
                Err(Error::Instability { .. }) => {
                    pt.unstable = true;
                    return Ok(pt);
                }
                Err(e) => return Err(e),
            };
            pt.sndr_db = sndr_db(&levels(&ctsd.y), f_x, spec.f_s, osr, fs_levels)?;
            match run_pfm_equivalent(&eq, &x, n) {
                Ok(p) => {
                    let m = compare_outputs(&ctsd.y, &p.y)?;
                    pt.equiv_match = m.is_match;
                    pt.first_mismatch = m.first_mismatch;
                    pt.coding_limit = detect_coding_limit(&p, &spec.quantizer).violated;
                }
                Err(Error::Divergence { .. }) => pt.unstable = true,
                Err(e) => return Err(e),
            }
            Ok(pt)
        })
        .collect();
    let points = points.into_iter().collect::<Result<Vec<_>>>()?;
    for k in monotonicity_violations(&points) {
        log::warn!(
            "amplitude {} matches although the coding limit was hit at a lower amplitude",
            points[k].amplitude
        );
    }
    Ok(points)
}

/// Points that still match after an earlier point hit the coding limit.
pub fn monotonicity_violations(points: &[SweepPoint]) -> Vec<usize> {
    let Some(first) = points.iter().position(|p| p.coding_limit) else {
        return Vec::new();
    };
    (first + 1..points.len())
        .filter(|&k| points[k].equiv_match && points[k].amplitude > points[first].amplitude)
        .collect()
}
