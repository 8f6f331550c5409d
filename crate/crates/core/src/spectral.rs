//! PFM side-band series, periodogram estimates and the decomposition of the
//! PFM output into drive, modulation side bands and aliasing error.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::bessel::bessel_j_all;
use crate::ctsd::CtsdTrace;
use crate::equivalence::PfmEquivalentSpec;
use crate::error::{Error, Result};
use crate::pfm::EventTrace;
use crate::types::{compute_kd, QuantizerSpec, SignalExpr};

/// Default number of series harmonics.
pub const DEFAULT_Q_MAX: u32 = 20;

/// One tone `amplitude · cos(2π freq t + phase)` of the modulation side
/// bands. `amplitude` keeps the sign of the series coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SidebandTerm {
    pub q: u32,
    pub r: i64,
    pub freq: f64,
    pub amplitude: f64,
    pub phase: f64,
}

/// Trigonometric series of an ideal PFM impulse train driven by
/// `x_DC + A sin(2π f_x t + φ)` from rest:
///
/// `d(t) = f_0 + k_d A cos(2π f_x t + φ - π/2) + m(t)`, with side-band tones
/// `2 f_0 J_r(qβ) (1 + r f_x/(q f_0))` at `q f_0 + r f_x`, `β = A k_d / f_x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidebandModel {
    pub f0: f64,
    pub f_x: f64,
    pub k_d: f64,
    pub amplitude: f64,
    pub beta: f64,
    pub t_m: f64,
    /// `k_d A`.
    pub signal_amplitude: f64,
    pub signal_phase: f64,
    pub q_max: u32,
    /// Largest `|r|` kept for each `q = 1..=q_max`.
    pub r_max: Vec<u32>,
    pub terms: Vec<SidebandTerm>,
    /// False when `A ≥ x_DC`, where the impulse rate would go negative.
    pub premises_hold: bool,
}

impl SidebandModel {
    pub fn term(&self, q: u32, r: i64) -> Option<&SidebandTerm> {
        self.terms.iter().find(|t| t.q == q && t.r == r)
    }

    /// `J_r(q β)`.
    pub fn gamma(&self, q: u32, r: i64) -> f64 {
        crate::bessel::bessel_j(r, f64::from(q) * self.beta)
    }

    /// Complex amplitude `a e^{jφ}` of every line at or below `f_max`, with
    /// coincident lines summed. Keys are line frequencies.
    pub fn lines(&self, f_max: f64) -> Vec<(f64, Complex64)> {
        let mut out: Vec<(f64, Complex64)> = vec![(0.0, Complex64::new(self.f0, 0.0))];
        if self.f_x <= f_max {
            out.push((
                self.f_x,
                Complex64::from_polar(self.signal_amplitude, self.signal_phase),
            ));
        }
        for t in &self.terms {
            if t.freq <= f_max {
                let v = if t.freq == 0.0 {
                    // a folded DC line is a cosine at zero frequency
                    Complex64::new(t.amplitude * t.phase.cos(), 0.0)
                } else {
                    Complex64::from_polar(t.amplitude, t.phase)
                };
                out.push((t.freq, v));
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, Complex64)> = Vec::with_capacity(out.len());
        let tol = 1e-9 * self.f_x;
        for (f, v) in out {
            match merged.last_mut() {
                Some((g, w)) if (f - *g).abs() <= tol => *w += v,
                _ => merged.push((f, v)),
            }
        }
        merged
    }
}

/// `BW_q = 2 q A k_d`.
pub fn carson_bandwidth(q: u32, amplitude: f64, k_d: f64) -> f64 {
    2.0 * f64::from(q) * amplitude * k_d
}

/// Series of the PFM impulse train for a single-tone input.
///
/// Without `r_max`, each harmonic keeps `|r f_x| ≤ 3 BW_q`.
pub fn sideband_series(
    x: &SignalExpr,
    q: &QuantizerSpec,
    t_m: f64,
    q_max: u32,
    r_max: Option<u32>,
) -> Result<SidebandModel> {
    x.validate()?;
    if x.tones.len() != 1 || x.envelope.is_some() {
        return Err(Error::Usage(
            "side-band series needs exactly one constant-amplitude tone".into(),
        ));
    }
    if q_max == 0 {
        return Err(Error::Usage("q_max must be at least 1".into()));
    }
    let k_d = compute_kd(q, t_m)?;
    let tone = x.tones[0];
    let a = tone.amplitude.abs();
    // a negative amplitude is a half-period phase shift
    let phi = if tone.amplitude < 0.0 { tone.phase + PI } else { tone.phase };
    let f_x = tone.frequency;
    let f0 = k_d * x.x_dc;
    if !(f0 > 0.0) {
        return Err(Error::OutOfDomain(format!(
            "PFM rest frequency must be positive, got {f0}"
        )));
    }
    let premises_hold = a < x.x_dc;
    if !premises_hold {
        log::warn!(
            "tone amplitude {a} is not below x_DC = {}; the series premises do not hold",
            x.x_dc
        );
    }
    let beta = a * k_d / f_x;
    // cosine-convention phases: the core phase is 2π f0 t + θ_c + β sin(2π f_x t + φ_x)
    let phi_x = phi - FRAC_PI_2;
    let theta_c = beta * phi.cos();

    let mut r_bounds = Vec::with_capacity(q_max as usize);
    let mut terms = Vec::new();
    for qi in 1..=q_max {
        let rm = r_max.unwrap_or_else(|| {
            (3.0 * carson_bandwidth(qi, a, k_d) / f_x).ceil().min(1e6) as u32
        });
        r_bounds.push(rm);
        let qf = f64::from(qi);
        let j = bessel_j_all(rm as usize, qf * beta);
        for r in -(rm as i64)..=(rm as i64) {
            let jr = j[r.unsigned_abs() as usize];
            let jr = if r < 0 && r % 2 != 0 { -jr } else { jr };
            let rf = r as f64;
            let amp = 2.0 * f0 * jr * (1.0 + rf * f_x / (qf * f0));
            let f = qf * f0 + rf * f_x;
            let ph = qf * theta_c + rf * phi_x;
            let (freq, phase) = if f < 0.0 { (-f, -ph) } else { (f, ph) };
            terms.push(SidebandTerm {
                q: qi,
                r,
                freq,
                amplitude: amp,
                phase: wrap_phase(phase),
            });
        }
    }
    Ok(SidebandModel {
        f0,
        f_x,
        k_d,
        amplitude: a,
        beta,
        t_m,
        signal_amplitude: k_d * a,
        signal_phase: wrap_phase(phi_x),
        q_max,
        r_max: r_bounds,
        terms,
        premises_hold,
    })
}

fn wrap_phase(p: f64) -> f64 {
    let w = p.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// `sin(π u)/(π u)`, with the limit 1 at `u = 0`.
pub fn sinc(u: f64) -> f64 {
    if u == 0.0 {
        1.0
    } else {
        (PI * u).sin() / (PI * u)
    }
}

/// Amplitude of side-band tone `(q, r)` after the pulse shaper:
/// `P = γ_{q,r} sinc(f T_m) f_0 T_m (1 + r f_x/(q f_0))` at
/// `f = q f_0 + r f_x`.
pub fn sinc_compensated_amplitude(model: &SidebandModel, q: u32, r: i64) -> f64 {
    let qf = f64::from(q);
    let rf = r as f64;
    let f = qf * model.f0 + rf * model.f_x;
    model.gamma(q, r)
        * sinc(f * model.t_m)
        * model.f0
        * model.t_m
        * (1.0 + rf * model.f_x / (qf * model.f0))
}

/// Closed form of [`sinc_compensated_amplitude`] when `f_0 T_m` is an
/// integer: `γ_{q,r} sin(π r f_x T_m)/(π q)`. It differs from the general
/// form by the sign `(-1)^{q f_0 T_m}`.
pub fn sinc_compensated_amplitude_integer_rate(model: &SidebandModel, q: u32, r: i64) -> f64 {
    model.gamma(q, r) * (PI * r as f64 * model.f_x * model.t_m).sin() / (PI * f64::from(q))
}

/// Fraction of the series power of harmonic `q` lying within
/// `q f_0 ± half_width`.
pub fn sideband_power_fraction(model: &SidebandModel, q: u32, half_width: f64) -> f64 {
    let centre = f64::from(q) * model.f0;
    let (mut inside, mut total) = (0.0, 0.0);
    for t in model.terms.iter().filter(|t| t.q == q) {
        let p = t.amplitude * t.amplitude;
        total += p;
        if (t.q as f64 * model.f0 + t.r as f64 * model.f_x - centre).abs() <= half_width {
            inside += p;
        }
    }
    if total > 0.0 {
        inside / total
    } else {
        1.0
    }
}

/// One-sided complex line amplitude `a e^{jφ}` of a unit impulse train at
/// frequency `f`, over the observation interval `(t0, t1]`. For a train that
/// is periodic on the interval this is exact.
pub fn impulse_line(times: &[f64], f: f64, interval: (f64, f64)) -> Complex64 {
    let d = interval.1 - interval.0;
    let s: Complex64 = times
        .iter()
        .filter(|&&t| t > interval.0 && t <= interval.1)
        .map(|&t| Complex64::from_polar(1.0, -TAU * f * t))
        .sum();
    if f == 0.0 {
        s / d
    } else {
        s * (2.0 / d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Hann,
    Rectangular,
}

impl Window {
    fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            // periodic form, so bin-centred tones stay on one bin pair
            Window::Hann => (0..n)
                .map(|k| 0.5 - 0.5 * (TAU * k as f64 / n as f64).cos())
                .collect(),
        }
    }
}

/// One-sided power spectrum. `power[k]` is the power in bin `k` relative to
/// a full-scale sine, so a full-scale sine on a bin centre reads 0 dBFS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub freq: Vec<f64>,
    pub psd_dbfs: Vec<f64>,
    pub power: Vec<f64>,
    pub window: Window,
    pub nfft: usize,
    pub segments: usize,
    /// Equivalent noise bandwidth in bins.
    pub enbw_bins: f64,
    pub resolution_bandwidth: f64,
    pub sample_rate: f64,
    pub full_scale: f64,
}

/// Floor used when converting zero power to dB.
const DB_FLOOR: f64 = 1e-40;

fn to_db(p: f64) -> f64 {
    10.0 * p.max(DB_FLOOR).log10()
}

impl Spectrum {
    pub fn bin_width(&self) -> f64 {
        self.sample_rate / self.nfft as f64
    }

    /// Index of the bin nearest `f`, within this spectrum's grid.
    pub fn bin_of(&self, f: f64) -> usize {
        let k0 = (self.freq[0] / self.bin_width()).round();
        let k = (f / self.bin_width()).round() - k0;
        k.clamp(0.0, (self.freq.len() - 1) as f64) as usize
    }

    /// Power of a tone near `f`, summed over `±half_bins` and corrected for
    /// the window's noise bandwidth.
    pub fn tone_power(&self, f: f64, half_bins: usize) -> f64 {
        let k = self.bin_of(f);
        let lo = k.saturating_sub(half_bins);
        let hi = (k + half_bins).min(self.power.len() - 1);
        self.power[lo..=hi].iter().sum::<f64>() / self.enbw_bins
    }

    pub fn tone_dbfs(&self, f: f64, half_bins: usize) -> f64 {
        to_db(self.tone_power(f, half_bins))
    }

    /// Total power in `[f_lo, f_hi]`.
    pub fn band_power(&self, f_lo: f64, f_hi: f64) -> f64 {
        self.freq
            .iter()
            .zip(&self.power)
            .filter(|(f, _)| **f >= f_lo && **f <= f_hi)
            .map(|(_, p)| p)
            .sum::<f64>()
            / self.enbw_bins
    }

    /// Whether some bin within `±tol_bins` of `f` is a local maximum.
    pub fn has_peak_near(&self, f: f64, tol_bins: usize) -> bool {
        let k = self.bin_of(f);
        let last = self.power.len() - 1;
        (k.saturating_sub(tol_bins)..=(k + tol_bins).min(last)).any(|j| {
            let left = if j > 0 { self.power[j - 1] } else { f64::NEG_INFINITY };
            let right = if j < last { self.power[j + 1] } else { f64::NEG_INFINITY };
            self.power[j] >= left && self.power[j] >= right
        })
    }

    /// Bins with `f_lo <= f <= f_hi`, keeping the metadata.
    pub fn band(&self, f_lo: f64, f_hi: f64) -> Spectrum {
        self.band_where(|f| f >= f_lo && f <= f_hi)
    }

    fn band_where(&self, keep: impl Fn(f64) -> bool) -> Spectrum {
        let idx: Vec<usize> = (0..self.freq.len()).filter(|&k| keep(self.freq[k])).collect();
        Spectrum {
            freq: idx.iter().map(|&k| self.freq[k]).collect(),
            psd_dbfs: idx.iter().map(|&k| self.psd_dbfs[k]).collect(),
            power: idx.iter().map(|&k| self.power[k]).collect(),
            ..self.clone()
        }
    }

    /// Least-squares slope of `psd_dbfs` against `log10 f` over
    /// `[f_lo, f_hi]`, in dB per decade.
    pub fn slope_db_per_decade(&self, f_lo: f64, f_hi: f64) -> Result<f64> {
        let pts: Vec<(f64, f64)> = self
            .freq
            .iter()
            .zip(&self.psd_dbfs)
            .filter(|(f, _)| **f >= f_lo && **f <= f_hi && **f > 0.0)
            .map(|(f, p)| (f.log10(), *p))
            .collect();
        if pts.len() < 2 {
            return Err(Error::Usage(format!(
                "no bins to fit between {f_lo} and {f_hi}"
            )));
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        Ok(sxy / sxx)
    }
}

/// Welch-averaged periodogram with 50% overlap.
///
/// `full_scale` is the amplitude of the 0 dBFS sine, in the units of `y`.
pub fn periodogram(
    y: &[f64],
    sample_rate: f64,
    full_scale: f64,
    window: Window,
    nfft: usize,
) -> Result<Spectrum> {
    if !nfft.is_power_of_two() || nfft < 16 {
        return Err(Error::Usage(format!(
            "nfft must be a power of two of at least 16, got {nfft}"
        )));
    }
    if y.len() < nfft {
        return Err(Error::Usage(format!(
            "{} samples are fewer than nfft = {nfft}",
            y.len()
        )));
    }
    if !(sample_rate > 0.0) || !(full_scale > 0.0) {
        return Err(Error::Usage("sample rate and full scale must be positive".into()));
    }
    if let Some(v) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            t_lo: f64::NAN,
            t_hi: f64::NAN,
            message: format!("non-finite sample {v}"),
        });
    }
    let w = window.coefficients(nfft);
    let sum_w: f64 = w.iter().sum();
    let sum_w2: f64 = w.iter().map(|v| v * v).sum();
    let hop = nfft / 2;
    let segments = (y.len() - nfft) / hop + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(nfft);
    let half = nfft / 2;

    let per_segment: Vec<Vec<f64>> = (0..segments)
        .into_par_iter()
        .map(|s| {
            let mut buf: Vec<Complex64> = y[s * hop..s * hop + nfft]
                .iter()
                .zip(&w)
                .map(|(v, c)| Complex64::new(v * c, 0.0))
                .collect();
            fft.process(&mut buf);
            buf[..=half].iter().map(|c| c.norm_sqr()).collect()
        })
        .collect();
    // fixed summation order keeps the result independent of scheduling
    let mut acc = vec![0.0; half + 1];
    for seg in &per_segment {
        for (a, v) in acc.iter_mut().zip(seg) {
            *a += v;
        }
    }
    let ref_power = full_scale * full_scale / 2.0;
    let power: Vec<f64> = acc
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let one_sided = if k == 0 || k == half { 1.0 } else { 2.0 };
            one_sided * v / (segments as f64 * sum_w * sum_w) / ref_power
        })
        .collect();
    let enbw_bins = nfft as f64 * sum_w2 / (sum_w * sum_w);
    Ok(Spectrum {
        freq: (0..=half).map(|k| k as f64 * sample_rate / nfft as f64).collect(),
        psd_dbfs: power.iter().map(|&p| to_db(p)).collect(),
        power,
        window,
        nfft,
        segments,
        enbw_bins,
        resolution_bandwidth: enbw_bins * sample_rate / nfft as f64,
        sample_rate,
        full_scale,
    })
}

/// Output codes as levels.
pub fn levels(y: &[u32]) -> Vec<f64> {
    y.iter().map(|&v| f64::from(v)).collect()
}

/// Cell averages of `p(t)` on a grid of `per_sample` cells per sampling
/// period, over the trace's observation interval.
pub fn dense_pulse(trace: &EventTrace, per_sample: usize) -> Vec<f64> {
    let h = trace.t_s / per_sample as f64;
    let cells = trace.y.len() * per_sample;
    (0..cells)
        .map(|j| trace.pulse_integral(j as f64 * h, (j + 1) as f64 * h) / h)
        .collect()
}

/// Components of the PFM-equivalent output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseDecomposition {
    /// `Δ y_SD[n] - v(n T_s)`.
    pub e_q: Vec<f64>,
    /// Cell averages of `p(t) - y_PFM(t)`, with `y_PFM` the zero-order hold
    /// of the samples.
    pub e_al: Vec<f64>,
    /// Cell averages of `m(t) = d(t) - k_d w(t)`, scaled by `T_m` to pulse
    /// levels.
    pub m: Vec<f64>,
    pub dense_per_sample: usize,
    pub dense_rate: f64,
    /// Spectrum of `m` up to `f_s/2`.
    pub m_lf: Spectrum,
    /// Spectrum of `m` above `f_s/2`.
    pub m_hf: Spectrum,
}

impl NoiseDecomposition {
    pub fn e_al_spectrum(&self, full_scale: f64, window: Window, nfft: usize) -> Result<Spectrum> {
        periodogram(&self.e_al, self.dense_rate, full_scale, window, nfft)
    }
}

/// Split a PFM-equivalent run into quantization error, aliasing error and
/// modulation side bands. The PFM run must record the dense drive integral.
pub fn decompose_noise(
    ctsd: &CtsdTrace,
    pfm: &EventTrace,
    spec: &PfmEquivalentSpec,
    x: &SignalExpr,
    nfft: usize,
) -> Result<NoiseDecomposition> {
    let n = ctsd.len();
    if pfm.y.len() != n {
        return Err(Error::Usage(format!(
            "trace lengths differ: {n} CTSD samples, {} PFM samples",
            pfm.y.len()
        )));
    }
    if (ctsd.t_s - pfm.t_s).abs() > 1e-12 * ctsd.t_s || (spec.t_s() - pfm.t_s).abs() > 1e-12 * pfm.t_s {
        return Err(Error::Usage("traces use different sampling periods".into()));
    }
    if pfm.input.as_ref() != Some(x) {
        return Err(Error::Usage("the PFM trace was produced by a different input".into()));
    }
    let k = pfm.dense_per_sample;
    if k == 0 || pfm.dense_drive_integral.len() != n * k + 1 {
        return Err(Error::Usage(
            "the PFM trace has no dense drive integral; rerun with dense sampling".into(),
        ));
    }
    let step = spec.quantizer.step;
    let e_q = ctsd
        .y
        .iter()
        .zip(&ctsd.v)
        .map(|(&y, &v)| step * f64::from(y) - v)
        .collect();

    let h = pfm.t_s / k as f64;
    let x_m = spec.quantizer.x_m();
    let cells = n * k;
    let mut e_al = Vec::with_capacity(cells);
    let mut m = Vec::with_capacity(cells);
    for j in 0..cells {
        let (a, b) = (j as f64 * h, (j + 1) as f64 * h);
        let period = j / k;
        let held = if period == 0 { 0.0 } else { f64::from(pfm.y[period - 1]) };
        e_al.push(pfm.pulse_integral(a, b) / h - held);
        let dw = pfm.dense_drive_integral[j + 1] - pfm.dense_drive_integral[j];
        m.push(pfm.train.count_in(a, b) as f64 * spec.t_m / h - dw / (h * x_m));
    }
    let rate = 1.0 / h;
    let full_scale = spec.quantizer.full_scale_levels();
    let spec_m = periodogram(&m, rate, full_scale, Window::Hann, nfft)?;
    let f_half = spec.f_s / 2.0;
    Ok(NoiseDecomposition {
        e_q,
        e_al,
        m_lf: spec_m.band(0.0, f_half),
        m_hf: spec_m.band_where(|f| f > f_half),
        m,
        dense_per_sample: k,
        dense_rate: rate,
    })
}
