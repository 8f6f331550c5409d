//! Closed-form signals between loop events.
//!
//! Every internal node of an ideal-integrator loop driven by a
//! [`SignalExpr`] and a piecewise-constant DAC is, on each sample interval,
//! a polynomial in local time plus a weighted sum of iterated integrals of
//! the input:
//!
//! ```text
//! v(t0 + τ) = Σ_k p_k τ^k + Σ_j h_j J_j(τ),   J_0 = x(t0 + τ),   J_{j+1}(τ) = ∫_0^τ J_j
//! ```
//!
//! That class is closed under integration, so the whole loop propagates
//! exactly. The iterated integrals of the sinusoids are evaluated with the
//! exponential-integrator functions `φ_j(z) = Σ_m z^m / (m + j)!`, which stay
//! accurate for both slow and fast tones.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::types::SignalExpr;

/// Default number of scan substeps used to bracket a crossing.
pub const DEFAULT_SUBSTEPS: usize = 64;

const SERIES_RADIUS: f64 = 2.0;

/// `φ_0(z) ..= φ_jmax(z)`.
pub(crate) fn phi_functions(z: Complex64, jmax: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(jmax + 1);
    if z.norm() < SERIES_RADIUS {
        for j in 0..=jmax {
            // Σ_m z^m/(m+j)!, summed until the terms vanish
            let mut term = Complex64::new(1.0 / factorial(j), 0.0);
            let mut sum = term;
            for m in 1..60 {
                term *= z / (m + j) as f64;
                sum += term;
                if term.norm() < 1e-18 * sum.norm().max(1e-300) {
                    break;
                }
            }
            out.push(sum);
        }
    } else {
        let mut prev = z.exp();
        out.push(prev);
        for j in 1..=jmax {
            let next = (prev - 1.0 / factorial(j - 1)) / z;
            out.push(next);
            prev = next;
        }
    }
    out
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Iterated integrals `J_0 ..= J_jmax` of `x` from `t0` over a local span
/// `tau`. The span must not cross an envelope breakpoint.
pub fn iterated_integrals(x: &SignalExpr, t0: f64, tau: f64, jmax: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(jmax + 1);
    let mut tau_pow = 1.0;
    for j in 0..=jmax {
        out.push(x.x_dc * tau_pow / factorial(j));
        tau_pow *= tau;
    }
    if x.tones.is_empty() {
        return out;
    }
    let (e0, e1) = x.envelope_local(t0);
    for tone in &x.tones {
        let omega = TAU * tone.frequency;
        // reduce the phase before multiplying by 2π
        let cycles = tone.frequency * t0;
        let theta = TAU * (cycles - cycles.floor()) + tone.phase;
        let rot = Complex64::from_polar(1.0, theta);
        let phi = phi_functions(Complex64::new(0.0, omega * tau), jmax + 1);
        // K_j = ∫_0^τ (τ-σ)^{j-1}/(j-1)! e^{iωσ} dσ = τ^j φ_j(iωτ), K_0 = e^{iωτ}
        let mut k = Vec::with_capacity(jmax + 2);
        let mut tp = 1.0;
        for p in phi.iter() {
            k.push(*p * tp);
            tp *= tau;
        }
        for j in 0..=jmax {
            let mut acc = k[j] * e0;
            if e1 != 0.0 {
                // σ·(τ-σ)^{j-1}/(j-1)! = τ·(...) - j·(τ-σ)^j/j!
                acc += (k[j] * tau - k[j + 1] * j as f64) * e1;
            }
            out[j] += tone.amplitude * (rot * acc).im;
        }
    }
    out
}

/// Closed-form expression on one segment, in local time `τ = t - start`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Expr {
    /// Polynomial coefficients, ascending powers of `τ`.
    pub poly: Vec<f64>,
    /// Weights of `J_0, J_1, ...` of the base input.
    pub x_weights: Vec<f64>,
}

impl Expr {
    pub fn constant(c: f64) -> Self {
        Self {
            poly: vec![c],
            x_weights: Vec::new(),
        }
    }

    pub fn polynomial(poly: Vec<f64>) -> Self {
        Self {
            poly,
            x_weights: Vec::new(),
        }
    }

    /// The base input itself, scaled.
    pub fn input(weight: f64) -> Self {
        Self {
            poly: Vec::new(),
            x_weights: vec![weight],
        }
    }

    /// Highest iterated-integral index referenced.
    pub fn jmax(&self) -> usize {
        self.x_weights.len().saturating_sub(1)
    }

    /// `∫_0^τ self`.
    pub fn integral(&self) -> Self {
        let mut poly = Vec::with_capacity(self.poly.len() + 1);
        poly.push(0.0);
        poly.extend(
            self.poly
                .iter()
                .enumerate()
                .map(|(k, c)| c / (k + 1) as f64),
        );
        let mut x_weights = Vec::with_capacity(self.x_weights.len() + 1);
        if !self.x_weights.is_empty() {
            x_weights.push(0.0);
            x_weights.extend_from_slice(&self.x_weights);
        }
        Self { poly, x_weights }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            poly: self.poly.iter().map(|c| c * s).collect(),
            x_weights: self.x_weights.iter().map(|c| c * s).collect(),
        }
    }

    pub fn add_assign_scaled(&mut self, other: &Expr, s: f64) {
        add_into(&mut self.poly, &other.poly, s);
        add_into(&mut self.x_weights, &other.x_weights, s);
    }

    pub fn add_constant(&mut self, c: f64) {
        if self.poly.is_empty() {
            self.poly.push(0.0);
        }
        self.poly[0] += c;
    }

    /// Evaluate given the iterated integrals at the same `τ`.
    pub fn eval_with(&self, tau: f64, j: &[f64]) -> f64 {
        let p = self.poly.iter().rev().fold(0.0, |acc, c| acc * tau + c);
        p + self
            .x_weights
            .iter()
            .zip(j)
            .map(|(w, jv)| w * jv)
            .sum::<f64>()
    }

    pub fn eval(&self, x: &SignalExpr, t0: f64, tau: f64) -> f64 {
        if self.x_weights.is_empty() {
            return self.eval_with(tau, &[]);
        }
        let j = iterated_integrals(x, t0, tau, self.jmax());
        self.eval_with(tau, &j)
    }

    /// Upper bound of `|self|` over `[0, span]`.
    pub fn magnitude_bound(&self, x: &SignalExpr, t0: f64, span: f64) -> f64 {
        let p: f64 = self
            .poly
            .iter()
            .enumerate()
            .map(|(k, c)| c.abs() * span.powi(k as i32))
            .sum();
        let (e0, e1) = x.envelope_local(t0);
        let tone_amp: f64 = x.tones.iter().map(|t| t.amplitude.abs()).sum::<f64>()
            * (e0.abs() + e1.abs() * span);
        let x_bound = x.x_dc.abs() + tone_amp;
        let xs: f64 = self
            .x_weights
            .iter()
            .enumerate()
            .map(|(j, w)| w.abs() * x_bound * span.powi(j as i32) / factorial(j))
            .sum();
        p + xs
    }
}

fn add_into(dst: &mut Vec<f64>, src: &[f64], s: f64) {
    if dst.len() < src.len() {
        dst.resize(src.len(), 0.0);
    }
    for (d, v) in dst.iter_mut().zip(src) {
        *d += v * s;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub expr: Expr,
}

/// Contiguous closed-form segments over a common base input.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseSignal {
    base: SignalExpr,
    segments: Vec<Segment>,
}

impl PiecewiseSignal {
    pub fn new(base: SignalExpr, segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Usage("piecewise signal needs a segment".into()));
        }
        let knees = base.breakpoints();
        for (i, s) in segments.iter().enumerate() {
            if !(s.end > s.start) {
                return Err(Error::Usage(format!(
                    "segment {i} has end {} <= start {}",
                    s.end, s.start
                )));
            }
            if i > 0 && segments[i - 1].end != s.start {
                return Err(Error::Usage(format!(
                    "segment {i} starts at {} but previous ends at {}",
                    s.start,
                    segments[i - 1].end
                )));
            }
            if !s.expr.x_weights.is_empty() && knees.iter().any(|&k| k > s.start && k < s.end) {
                return Err(Error::Usage(format!(
                    "segment {i} straddles an envelope breakpoint"
                )));
            }
        }
        Ok(Self { base, segments })
    }

    /// The input signal itself over `[t0, t1]`, split at its breakpoints.
    pub fn from_signal(x: &SignalExpr, t0: f64, t1: f64) -> Result<Self> {
        let segments = window_cuts(x, t0, t1)
            .windows(2)
            .map(|w| Segment {
                start: w[0],
                end: w[1],
                expr: Expr::input(1.0),
            })
            .collect();
        Self::new(x.clone(), segments)
    }

    /// Constant levels `values[i]` on `[times[i], times[i+1])`.
    pub fn steps(times: &[f64], values: &[f64]) -> Result<Self> {
        if times.len() != values.len() + 1 {
            return Err(Error::Usage("steps need one more time than value".into()));
        }
        let segments = times
            .windows(2)
            .zip(values)
            .map(|(w, &v)| Segment {
                start: w[0],
                end: w[1],
                expr: Expr::constant(v),
            })
            .collect();
        Self::new(SignalExpr::default(), segments)
    }

    pub fn base(&self) -> &SignalExpr {
        &self.base
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn start(&self) -> f64 {
        self.segments[0].start
    }

    pub fn end(&self) -> f64 {
        self.segments[self.segments.len() - 1].end
    }

    fn check_domain(&self, t: f64) -> Result<()> {
        if t.is_nan() || t < self.start() || t > self.end() {
            return Err(Error::OutOfDomain(format!(
                "t = {t} outside [{}, {}]",
                self.start(),
                self.end()
            )));
        }
        Ok(())
    }

    /// Index of the segment holding `t` (segments are half-open except the last).
    fn locate(&self, t: f64) -> usize {
        let idx = self.segments.partition_point(|s| s.end <= t);
        idx.min(self.segments.len() - 1)
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        let s = &self.segments[self.locate(t)];
        Ok(s.expr.eval(&self.base, s.start, t - s.start))
    }

    /// Exact `∫_{t0}^{t1}`.
    pub fn integrate(&self, t0: f64, t1: f64) -> Result<f64> {
        if t1 < t0 {
            return Err(Error::OutOfDomain(format!(
                "reversed interval [{t0}, {t1}]"
            )));
        }
        self.check_domain(t0)?;
        self.check_domain(t1)?;
        let mut total = 0.0;
        let first = self.locate(t0);
        for s in &self.segments[first..] {
            if s.start >= t1 {
                break;
            }
            let a = t0.max(s.start) - s.start;
            let b = t1.min(s.end) - s.start;
            let f = s.expr.integral();
            total += f.eval(&self.base, s.start, b) - f.eval(&self.base, s.start, a);
        }
        Ok(total)
    }

    /// Running integral `∫_{from}^{t}` as a new piecewise signal on
    /// `[from, end]`.
    pub fn running_integral(&self, from: f64) -> Result<PiecewiseSignal> {
        self.check_domain(from)?;
        let first = self.locate(from);
        let mut acc = 0.0;
        let mut segments = Vec::new();
        for s in &self.segments[first..] {
            if from >= s.end {
                continue;
            }
            let mut seg = Segment {
                start: s.start,
                end: s.end,
                expr: s.expr.integral(),
            };
            if s.start < from {
                seg = Self::rebase(&self.base, &seg, from);
            }
            let offset = seg.expr.eval(&self.base, seg.start, 0.0);
            seg.expr.add_constant(acc - offset);
            acc = seg.expr.eval(&self.base, seg.start, seg.end - seg.start);
            segments.push(seg);
        }
        PiecewiseSignal::new(self.base.clone(), segments)
    }

    /// Re-express a segment's expression with local origin `new_start`.
    ///
    /// Polynomials shift by binomial expansion; iterated integrals restart
    /// from the new origin through the Taylor identity
    /// `J_j^{(a)}(τ + d) = J_j^{(b)}(τ) + Σ_{i<j} J_{j-i}^{(a)}(d) τ^i / i!`
    /// where `J^{(a)}` and `J^{(b)}` are taken from the old and new origins.
    pub(crate) fn rebase(base: &SignalExpr, seg: &Segment, new_start: f64) -> Segment {
        let d = new_start - seg.start;
        let e = &seg.expr;
        // polynomial shift
        let n = e.poly.len();
        let mut poly = vec![0.0; n.max(e.x_weights.len())];
        for (k, &c) in e.poly.iter().enumerate() {
            // c (τ + d)^k = c Σ_i C(k,i) d^{k-i} τ^i
            let mut binom = 1.0;
            for i in 0..=k {
                poly[i] += c * binom * d.powi((k - i) as i32);
                binom = binom * (k - i) as f64 / (i + 1) as f64;
            }
        }
        let jd = iterated_integrals(base, seg.start, d, e.jmax());
        for (j, &w) in e.x_weights.iter().enumerate() {
            for i in 0..j {
                poly[i] += w * jd[j - i] / factorial(i);
            }
        }
        Segment {
            start: new_start,
            end: seg.end,
            expr: Expr {
                poly,
                x_weights: e.x_weights.clone(),
            },
        }
    }
}

/// `[t0, t1]` split at the input's closed-form breakpoints.
pub(crate) fn window_cuts(x: &SignalExpr, t0: f64, t1: f64) -> Vec<f64> {
    let mut cuts = vec![t0];
    cuts.extend(x.breakpoints().into_iter().filter(|&k| k > t0 && k < t1));
    cuts.push(t1);
    cuts
}

/// Earliest `t` in `(t_lo, t_hi]` where `f(t) >= threshold`, given
/// `f(t_lo) < threshold`.
///
/// The window is scanned at `substeps` uniform points to bracket the first
/// upward crossing, which is then bisected to full double precision.
pub fn find_crossing_fn<F>(
    f: F,
    threshold: f64,
    t_lo: f64,
    t_hi: f64,
    substeps: usize,
) -> Result<Option<f64>>
where
    F: Fn(f64) -> f64,
{
    let width = t_hi - t_lo;
    if !(width > 0.0) {
        return Ok(None);
    }
    let k = substeps.max(1);
    let mut prev_t = t_lo;
    for i in 1..=k {
        let t = if i == k {
            t_hi
        } else {
            t_lo + width * (i as f64 / k as f64)
        };
        let v = f(t);
        if !v.is_finite() {
            return Err(Error::Numeric {
                t_lo,
                t_hi,
                message: format!("non-finite value {v} at t = {t}"),
            });
        }
        if v >= threshold {
            return Ok(Some(bisect(&f, threshold, prev_t, t)));
        }
        prev_t = t;
    }
    Ok(None)
}

fn bisect<F: Fn(f64) -> f64>(f: &F, threshold: f64, mut lo: f64, mut hi: f64) -> f64 {
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return hi;
        }
        if f(mid) >= threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
}

/// Earliest crossing of `threshold` by `accumulated` within `(t_lo, t_hi]`.
pub fn find_crossing(
    accumulated: &PiecewiseSignal,
    threshold: f64,
    window: (f64, f64),
    substeps: usize,
) -> Result<Option<f64>> {
    let (t_lo, t_hi) = window;
    accumulated.check_domain(t_lo)?;
    accumulated.check_domain(t_hi)?;
    let start = accumulated.eval(t_lo)?;
    if !start.is_finite() {
        return Err(Error::Numeric {
            t_lo,
            t_hi,
            message: format!("non-finite value at window start: {start}"),
        });
    }
    if start >= threshold {
        return Ok(None);
    }
    find_crossing_fn(
        |t| accumulated.eval(t).unwrap_or(f64::NAN),
        threshold,
        t_lo,
        t_hi,
        substeps,
    )
}
