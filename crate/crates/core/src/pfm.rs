//! Reference PFM modulator: an integrate-and-fire core emitting Dirac
//! impulses, a square pulse shaper and a sampler outside the loop.

use serde::{Deserialize, Serialize};

use crate::equivalence::PfmEquivalentSpec;
use crate::error::{Error, Result};
use crate::signal::{
    find_crossing_fn, iterated_integrals, window_cuts, Expr, PiecewiseSignal, Segment,
    DEFAULT_SUBSTEPS,
};
use crate::tf::{RationalTF, Variable};
use crate::types::{QuantizerSpec, SignalExpr};

/// Bound on `|g|` (in units of `x_m`) beyond which a run is declared
/// divergent.
pub const DEFAULT_DIVERGENCE_GUARD: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfmOptions {
    /// Scan points per search window before bisection.
    pub substeps: usize,
    pub guard: f64,
    /// When set, record `∫w` at this many uniformly spaced points per sample
    /// period.
    pub dense_per_sample: Option<usize>,
}

impl Default for PfmOptions {
    fn default() -> Self {
        Self {
            substeps: DEFAULT_SUBSTEPS,
            guard: DEFAULT_DIVERGENCE_GUARD,
            dense_per_sample: None,
        }
    }
}

/// Impulse train `d(t) = Σ δ(t - t_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaTrain {
    pub times: Vec<f64>,
    /// Feedback area of one impulse, `x_m T_m`.
    pub weight: f64,
    /// Observation interval `(start, end]`.
    pub interval: (f64, f64),
}

impl DeltaTrain {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of impulses in `(a, b]`.
    pub fn count_in(&self, a: f64, b: f64) -> usize {
        let hi = self.times.partition_point(|&t| t <= b);
        let lo = self.times.partition_point(|&t| t <= a);
        hi.saturating_sub(lo)
    }
}

/// PFM state at a sampling instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfmSnapshot {
    /// Core state, in units of the input.
    pub g: f64,
    /// Core drive at the end of the sample period.
    pub w: f64,
    /// Filter realization states.
    pub filter: Vec<f64>,
}

/// Impulses, per-sample counts and sampled states of a PFM run. Per-sample
/// vectors are indexed by `n - 1` for the sample at `t = n T_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTrace {
    pub train: DeltaTrain,
    pub y: Vec<u32>,
    pub t_s: f64,
    pub t_m: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshots: Vec<PfmSnapshot>,
    /// Input that produced the trace, when run in a loop.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<SignalExpr>,
    /// Running integral of the core drive on the dense grid, starting at 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dense_drive_integral: Vec<f64>,
    #[serde(default)]
    pub dense_per_sample: usize,
}

impl EventTrace {
    /// Pulse-shaper output `p(t)`: the number of impulses in `(t - T_m, t]`.
    pub fn pulse_level(&self, t: f64) -> u32 {
        self.train.count_in(t - self.t_m, t) as u32
    }

    /// `p(t)` as integer steps over the observation interval.
    pub fn pulse_signal(&self) -> Result<PiecewiseSignal> {
        let (t0, t1) = self.train.interval;
        let mut edges: Vec<f64> = self
            .train
            .times
            .iter()
            .flat_map(|&t| [t, t + self.t_m])
            .filter(|&e| e > t0 && e < t1)
            .collect();
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        let mut times = vec![t0];
        times.extend(edges);
        times.push(t1);
        let values: Vec<f64> = times[..times.len() - 1]
            .iter()
            .map(|&t| f64::from(self.pulse_level(t)))
            .collect();
        PiecewiseSignal::steps(&times, &values)
    }

    /// Exact `∫_a^b p(t) dt`.
    pub fn pulse_integral(&self, a: f64, b: f64) -> f64 {
        // each impulse contributes the overlap of [t_k, t_k + T_m] with [a, b]
        let lo = self.train.times.partition_point(|&t| t + self.t_m <= a);
        let hi = self.train.times.partition_point(|&t| t < b);
        self.train.times[lo..hi]
            .iter()
            .map(|&t| ((t + self.t_m).min(b) - t.max(a)).max(0.0))
            .sum()
    }
}

/// Integrate-and-fire core driven by `drive`: an impulse fires whenever
/// `∫ drive` since the previous impulse reaches `x_m T_m`, over
/// `(start, start + duration]`.
///
/// `a1` scales both the drive and the feedback area, so it does not move
/// the impulses.
pub fn run_pfm_core(
    drive: &PiecewiseSignal,
    a1: f64,
    q: &QuantizerSpec,
    t_m: f64,
    duration: f64,
) -> Result<DeltaTrain> {
    run_pfm_core_with(drive, a1, q, t_m, duration, &PfmOptions::default())
}

pub fn run_pfm_core_with(
    drive: &PiecewiseSignal,
    a1: f64,
    q: &QuantizerSpec,
    t_m: f64,
    duration: f64,
    opts: &PfmOptions,
) -> Result<DeltaTrain> {
    q.validate()?;
    if !(a1 > 0.0 && a1.is_finite()) {
        return Err(Error::invalid("a1", a1, "integrator gain must be positive"));
    }
    if !(t_m > 0.0) {
        return Err(Error::invalid("t_m", t_m, "must be positive"));
    }
    if !(duration > 0.0) {
        return Err(Error::Usage(format!("duration must be positive, got {duration}")));
    }
    let start = drive.start();
    let stop = start + duration;
    if stop > drive.end() {
        return Err(Error::OutOfDomain(format!(
            "drive covers [{}, {}], run needs [{start}, {stop}]",
            drive.start(),
            drive.end()
        )));
    }
    let x_m = q.x_m();
    let limit = opts.guard * x_m;
    let base = drive.base();
    let mut core = Core::new(x_m, t_m, 0.0);
    let mut times = Vec::new();
    for seg in drive.segments() {
        if seg.start >= stop {
            break;
        }
        let seg_end = seg.end.min(stop);
        let pieces = ((seg_end - seg.start) / t_m).ceil().max(1.0) as usize;
        for p in 0..pieces {
            let a = seg.start + (seg_end - seg.start) * (p as f64 / pieces as f64);
            let b = if p + 1 == pieces {
                seg_end
            } else {
                seg.start + (seg_end - seg.start) * ((p + 1) as f64 / pieces as f64)
            };
            let local = if a == seg.start {
                seg.expr.clone()
            } else {
                PiecewiseSignal::rebase(base, seg, a).expr
            };
            let acc = local.integral();
            core.advance(base, &acc, a, b, opts.substeps, &mut times)?;
            if !(core.g.abs() <= limit) {
                return Err(Error::Divergence {
                    time: b,
                    magnitude: core.g.abs(),
                });
            }
        }
    }
    Ok(DeltaTrain {
        times,
        weight: x_m * t_m,
        interval: (start, stop),
    })
}

/// Integrate-and-fire state shared by the open and closed-loop runners.
struct Core {
    x_m: f64,
    t_m: f64,
    g: f64,
}

impl Core {
    fn new(x_m: f64, t_m: f64, g: f64) -> Self {
        Self { x_m, t_m, g }
    }

    /// Fire every impulse in `(a, b]` given the running drive integral `acc`
    /// (local origin `a`, `acc(0) = 0`), then update `g` to its value at `b`.
    /// Returns the number of impulses fired.
    fn advance(
        &mut self,
        base: &SignalExpr,
        acc: &Expr,
        a: f64,
        b: f64,
        substeps: usize,
        times: &mut Vec<f64>,
    ) -> Result<u32> {
        let span = b - a;
        let eval = |t: f64| acc.eval(base, a, t - a);
        // |acc'| = |w| is bounded on the window; skip searches that cannot
        // reach the next threshold
        let slope = derivative_bound(acc, base, a, span);
        let mut fired = 0u32;
        let mut lo = a;
        let mut g_lo = self.g;
        loop {
            if g_lo + slope * (b - lo) / self.t_m < self.x_m {
                break;
            }
            let threshold = self.t_m * (self.x_m * f64::from(fired + 1) - self.g);
            match find_crossing_fn(eval, threshold, lo, b, substeps)? {
                Some(t) => {
                    times.push(t);
                    fired += 1;
                    lo = t;
                    g_lo = self.g + eval(t) / self.t_m - self.x_m * f64::from(fired);
                    if fired > 1_000_000 {
                        return Err(Error::Divergence {
                            time: t,
                            magnitude: g_lo.abs(),
                        });
                    }
                }
                None => break,
            }
        }
        self.g += eval(b) / self.t_m - self.x_m * f64::from(fired);
        if !self.g.is_finite() {
            return Err(Error::Numeric {
                t_lo: a,
                t_hi: b,
                message: "core state became non-finite".into(),
            });
        }
        Ok(fired)
    }
}

/// Upper bound of `|d acc/dτ|` on `[0, span]`.
fn derivative_bound(acc: &Expr, base: &SignalExpr, a: f64, span: f64) -> f64 {
    let d = Expr {
        poly: acc.poly.iter().enumerate().skip(1).map(|(k, c)| c * k as f64).collect(),
        x_weights: acc.x_weights.iter().skip(1).copied().collect(),
    };
    d.magnitude_bound(base, a, span)
}

/// Count impulses per sample period: `y[n] = #{t_k ∈ ((n-1)T_s, nT_s]}`.
pub fn shape_and_sample(train: &DeltaTrain, t_m: f64, f_s: f64, n: usize) -> Result<EventTrace> {
    if !(t_m > 0.0) || !(f_s > 0.0) {
        return Err(Error::invalid("t_m/f_s", format!("{t_m}/{f_s}"), "must be positive"));
    }
    let t_s = 1.0 / f_s;
    let mut y = vec![0u32; n];
    for &t in &train.times {
        if let Some(k) = sample_index(t, t_s) {
            if k < n {
                y[k] += 1;
            }
        }
    }
    Ok(EventTrace {
        train: train.clone(),
        y,
        t_s,
        t_m,
        snapshots: Vec::new(),
        input: None,
        dense_drive_integral: Vec::new(),
        dense_per_sample: 0,
    })
}

/// 0-based index of the sample period `((k)T, (k+1)T]` containing `t`,
/// using the same instants `k as f64 * t_s` as the simulators.
fn sample_index(t: f64, t_s: f64) -> Option<usize> {
    if !(t > 0.0) {
        return None;
    }
    let mut k = (t / t_s).ceil() as usize;
    while k > 1 && t <= (k - 1) as f64 * t_s {
        k -= 1;
    }
    while t > k as f64 * t_s {
        k += 1;
    }
    Some(k - 1)
}

/// Strictly proper part `Σ h_k s^{-k}` and direct term of a transfer
/// function whose poles are all at `s = 0`.
fn integrator_form(tf: &RationalTF) -> Result<(f64, Vec<f64>)> {
    if tf.variable != Variable::S {
        return Err(Error::Unsupported("filter must be continuous-time".into()));
    }
    let m = tf.den.len() - 1;
    if tf.den[..m].iter().any(|&d| d != 0.0) {
        return Err(Error::Unsupported(
            "filter poles must all be at s = 0 (ideal integrators)".into(),
        ));
    }
    if tf.num.len() > m + 1 {
        return Err(Error::Unsupported("improper filter".into()));
    }
    let num = |k: usize| tf.num.get(k).copied().unwrap_or(0.0);
    let h = (1..=m).map(|k| num(m - k)).collect();
    Ok((num(m), h))
}

/// Observer-form realization of `w = L_FS'{x} - L_PFM{Δ y}`:
/// `ζ_k' = ζ_{k+1} + e_k x - p_k Δ y`, `w = d_x x - d_y Δ y + ζ_1`.
#[derive(Debug, Clone)]
struct Realization {
    d_x: f64,
    d_y: f64,
    e: Vec<f64>,
    p: Vec<f64>,
}

impl Realization {
    fn new(spec: &PfmEquivalentSpec) -> Result<Self> {
        let (d_x, mut e) = integrator_form(&spec.l_fs)?;
        let (d_y, mut p) = integrator_form(&spec.l_pfm)?;
        let m = e.len().max(p.len());
        e.resize(m, 0.0);
        p.resize(m, 0.0);
        Ok(Self { d_x, d_y, e, p })
    }

    fn order(&self) -> usize {
        self.e.len()
    }

    /// Filter state expressions and the drive `w` on one window.
    fn window(&self, zeta0: &[f64], dac: f64) -> (Vec<Expr>, Expr) {
        let m = self.order();
        let mut zeta = vec![Expr::default(); m];
        for k in (0..m).rev() {
            let mut integrand = if k + 1 < m {
                zeta[k + 1].clone()
            } else {
                Expr::default()
            };
            if self.e[k] != 0.0 {
                integrand.add_assign_scaled(&Expr::input(1.0), self.e[k]);
            }
            integrand.add_constant(-self.p[k] * dac);
            let mut z = integrand.integral();
            z.add_constant(zeta0[k]);
            zeta[k] = z;
        }
        let mut w = if m > 0 { zeta[0].clone() } else { Expr::default() };
        if self.d_x != 0.0 {
            w.add_assign_scaled(&Expr::input(1.0), self.d_x);
        }
        w.add_constant(-self.d_y * dac);
        (zeta, w)
    }
}

pub fn run_pfm_equivalent(spec: &PfmEquivalentSpec, x: &SignalExpr, n: usize) -> Result<EventTrace> {
    run_pfm_equivalent_with(spec, x, n, &PfmOptions::default())
}

/// Closed-loop PFM equivalent: the core sits inside `L_PFM`, the sampler
/// counts impulses per period outside the loop, and the count drives the NRZ
/// DAC on the next period.
pub fn run_pfm_equivalent_with(
    spec: &PfmEquivalentSpec,
    x: &SignalExpr,
    n: usize,
    opts: &PfmOptions,
) -> Result<EventTrace> {
    x.validate()?;
    let real = Realization::new(spec)?;
    let m = real.order();
    let t_s = spec.t_s();
    let step = spec.quantizer.step;
    let x_m = spec.quantizer.x_m();
    let limit = opts.guard * x_m;
    let mut zeta = spec.initial_filter_state.clone();
    zeta.resize(m, 0.0);
    let mut core = Core::new(x_m, spec.t_m, spec.initial_core_state);
    let mut times = Vec::new();
    let mut y = Vec::with_capacity(n);
    let mut snapshots = Vec::with_capacity(n);
    let dense = opts.dense_per_sample.unwrap_or(0);
    let mut dense_acc = Vec::new();
    let mut acc_total = 0.0;
    if dense > 0 {
        dense_acc.reserve(n * dense + 1);
        dense_acc.push(0.0);
    }
    let mut dac = 0u32;
    for k in 0..n {
        let t0 = k as f64 * t_s;
        let t1 = (k + 1) as f64 * t_s;
        let level = step * f64::from(dac);
        let mut fired = 0;
        let mut w_end = 0.0;
        let cuts = window_cuts(x, t0, t1);
        let mut next_dense = 1;
        for win in cuts.windows(2) {
            let (a, b) = (win[0], win[1]);
            let (zexpr, w) = real.window(&zeta, level);
            let acc = w.integral();
            fired += core.advance(x, &acc, a, b, opts.substeps, &mut times)?;
            let tau = b - a;
            let j = iterated_integrals(x, a, tau, m + 1);
            for (z, e) in zeta.iter_mut().zip(&zexpr) {
                *z = e.eval_with(tau, &j);
            }
            w_end = w.eval_with(tau, &j);
            if dense > 0 {
                while next_dense <= dense {
                    let td = if next_dense == dense {
                        t1
                    } else {
                        t0 + t_s * (next_dense as f64 / dense as f64)
                    };
                    if td > b {
                        break;
                    }
                    dense_acc.push(acc_total + acc.eval(x, a, td - a));
                    next_dense += 1;
                }
                acc_total += acc.eval_with(tau, &j);
            }
        }
        if !(core.g.abs() <= limit) || zeta.iter().any(|z| !(z.abs() <= limit)) {
            let mag = zeta.iter().fold(core.g.abs(), |m, z| m.max(z.abs()));
            return Err(Error::Divergence { time: t1, magnitude: mag });
        }
        y.push(fired);
        snapshots.push(PfmSnapshot {
            g: core.g,
            w: w_end,
            filter: zeta.clone(),
        });
        dac = fired;
    }
    let end = n as f64 * t_s;
    times.retain(|&t| t <= end);
    Ok(EventTrace {
        train: DeltaTrain {
            times,
            weight: x_m * spec.t_m,
            interval: (0.0, end),
        },
        y,
        t_s,
        t_m: spec.t_m,
        snapshots,
        input: Some(x.clone()),
        dense_drive_integral: dense_acc,
        dense_per_sample: dense,
    })
}

/// Constant drive over `[0, duration]`, for open-loop studies.
pub fn constant_drive(level: f64, duration: f64) -> Result<PiecewiseSignal> {
    PiecewiseSignal::new(
        SignalExpr::default(),
        vec![Segment {
            start: 0.0,
            end: duration,
            expr: Expr::constant(level),
        }],
    )
}
