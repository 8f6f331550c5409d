//! Value types shared by every simulator and analysis, plus the elementary
//! PFM scalar laws (conversion gain, rest frequency).
//!
//! Signals use a unipolar convention throughout: inputs are nonnegative and
//! quantizer outputs are level indices in `0..L`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

/// Uniform floor quantizer with `levels` output codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    pub levels: u32,
    #[serde(default = "one")]
    pub step: f64,
    /// Full-scale reference of the PFM core; equal to `step` unless set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_m: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl QuantizerSpec {
    pub fn new(levels: u32) -> Self {
        Self {
            levels,
            step: 1.0,
            x_m: None,
        }
    }

    pub fn single_bit() -> Self {
        Self::new(2)
    }

    pub fn x_m(&self) -> f64 {
        self.x_m.unwrap_or(self.step)
    }

    pub fn is_single_bit(&self) -> bool {
        self.levels == 2
    }

    /// Amplitude, in output level units, of the full-scale sine used as the
    /// 0 dBFS reference.
    pub fn full_scale_levels(&self) -> f64 {
        if self.is_single_bit() {
            self.x_m() / (2.0 * self.step)
        } else {
            f64::from(self.levels - 1) / 2.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        self.collect_violations("quantizer", &mut v);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(v))
        }
    }

    fn collect_violations(&self, prefix: &str, v: &mut Vec<Violation>) {
        if self.levels < 2 {
            v.push(violation(
                &format!("{prefix}.levels"),
                self.levels,
                "level count must be >= 2",
            ));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            v.push(violation(
                &format!("{prefix}.step"),
                self.step,
                "step must be positive",
            ));
        }
        if let Some(xm) = self.x_m {
            if !(xm > 0.0 && xm.is_finite()) {
                v.push(violation(
                    &format!("{prefix}.x_m"),
                    xm,
                    "full-scale reference must be positive",
                ));
            }
        }
    }
}

/// Which PFM-equivalent scaling a loop uses.
///
/// `SingleBit` normalizes the comparator input to `u_n / (a_n b_n)` and
/// gives the `α = 1/b_n` equivalent; `MultiBit` quantizes `u_n` directly and
/// gives `α = a_n`, `β = a_n b_n - 1`. Two-level loops may use either.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    SingleBit,
    MultiBit,
}

/// Continuous-time CIFB modulator: a cascade of ideal integrators with
/// distributed NRZ feedback and input feed-ins.
///
/// Integrator `i` computes `du_i/dt = a_i f_s (u_{i-1} + c_i x - b_i Δ y)`,
/// with `u_0 = 0`; the last state drives the quantizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopSpec {
    pub order: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Input feed-in coefficients; defaults to `[1, 0, ..., 0]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    pub quantizer: QuantizerSpec,
    #[serde(default = "one")]
    pub f_s: f64,
    /// Pulse width of the PFM shaper; defaults to `1/f_s`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_m: Option<f64>,
    /// Initial integrator states; all-zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Vec<f64>>,
    /// Direct feed-forward from the input into the quantizer. Only zero is
    /// supported by the simulators.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub quantizer_feedforward: f64,
    /// Equivalent scaling; single-bit for two-level quantizers unless set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<Mode>,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl LoopSpec {
    pub fn new(a: Vec<f64>, b: Vec<f64>, quantizer: QuantizerSpec) -> Self {
        Self {
            order: a.len(),
            a,
            b,
            c: None,
            quantizer,
            f_s: 1.0,
            t_m: None,
            initial_state: None,
            quantizer_feedforward: 0.0,
            scaling: None,
        }
    }

    pub fn with_scaling(mut self, mode: Mode) -> Self {
        self.scaling = Some(mode);
        self
    }

    pub fn mode(&self) -> Mode {
        self.scaling.unwrap_or(if self.quantizer.is_single_bit() {
            Mode::SingleBit
        } else {
            Mode::MultiBit
        })
    }

    pub fn with_c(mut self, c: Vec<f64>) -> Self {
        self.c = Some(c);
        self
    }

    pub fn with_initial_state(mut self, s: Vec<f64>) -> Self {
        self.initial_state = Some(s);
        self
    }

    pub fn c(&self) -> Vec<f64> {
        match &self.c {
            Some(c) => c.clone(),
            None => {
                let mut c = vec![0.0; self.order];
                if let Some(first) = c.first_mut() {
                    *first = 1.0;
                }
                c
            }
        }
    }

    pub fn t_s(&self) -> f64 {
        1.0 / self.f_s
    }

    pub fn t_m(&self) -> f64 {
        self.t_m.unwrap_or_else(|| self.t_s())
    }

    pub fn initial_state(&self) -> Vec<f64> {
        self.initial_state
            .clone()
            .unwrap_or_else(|| vec![0.0; self.order])
    }

    /// Input DC level that puts the mean output code at mid-range.
    pub fn midscale_input(&self) -> f64 {
        let q = &self.quantizer;
        let span = f64::from(q.levels - 1) * q.step;
        span * self.b[0] / (2.0 * self.c()[0])
    }
}

/// Checks every invariant of a loop description and returns it unchanged, or
/// the complete list of violations.
pub fn validate_loop_spec(spec: &LoopSpec) -> Result<&LoopSpec> {
    let mut v = Vec::new();
    let n = spec.order;
    if n < 1 {
        v.push(violation("order", n, "order must be ≥ 1"));
    }
    if spec.a.len() != n {
        v.push(violation("a", spec.a.len(), "length must equal order"));
    }
    if spec.b.len() != n {
        v.push(violation("b", spec.b.len(), "length must equal order"));
    }
    if let Some(c) = &spec.c {
        if c.len() != n {
            v.push(violation("c", c.len(), "length must equal order"));
        }
        for (i, ci) in c.iter().enumerate() {
            if !ci.is_finite() {
                v.push(violation(&format!("c[{}]", i + 1), ci, "must be finite"));
            }
        }
    }
    if let Some(s) = &spec.initial_state {
        if s.len() != n {
            v.push(violation(
                "initial_state",
                s.len(),
                "length must equal order",
            ));
        }
    }
    if n >= 1 && spec.a.len() == n {
        for (i, &ai) in spec.a.iter().enumerate() {
            if !ai.is_finite() || ai == 0.0 {
                v.push(violation(
                    &format!("a[{}]", i + 1),
                    ai,
                    "integrator gain must be finite and nonzero",
                ));
            }
        }
    }
    if n >= 1 && spec.b.len() == n {
        for (i, &bi) in spec.b.iter().enumerate() {
            if !bi.is_finite() {
                v.push(violation(&format!("b[{}]", i + 1), bi, "must be finite"));
            }
        }
        if spec.b[n - 1] == 0.0 {
            v.push(violation("b_n", spec.b[n - 1], "b_n must be nonzero"));
        }
    }
    if !(spec.f_s > 0.0 && spec.f_s.is_finite()) {
        v.push(violation("f_s", spec.f_s, "sample rate must be positive"));
    }
    if let Some(tm) = spec.t_m {
        if !(tm > 0.0 && tm.is_finite()) {
            v.push(violation("t_m", tm, "pulse width must be positive"));
        }
    }
    spec.quantizer.collect_violations("quantizer", &mut v);
    if spec.scaling == Some(Mode::SingleBit) && !spec.quantizer.is_single_bit() {
        v.push(violation(
            "scaling",
            "single-bit",
            "single-bit scaling needs a two-level quantizer",
        ));
    }
    if v.is_empty() {
        Ok(spec)
    } else {
        Err(Error::InvalidSpec(v))
    }
}

fn violation(field: &str, value: impl ToString, message: &str) -> Violation {
    Violation {
        field: field.to_string(),
        value: value.to_string(),
        message: message.to_string(),
    }
}

/// PFM conversion gain `k_d = 1/(x_m T_m)`: output impulse rate per unit of
/// drive.
pub fn compute_kd(q: &QuantizerSpec, t_m: f64) -> Result<f64> {
    let xm = q.x_m();
    if !(xm > 0.0) {
        return Err(Error::invalid("x_m", xm, "must be positive"));
    }
    if !(t_m > 0.0) {
        return Err(Error::invalid("t_m", t_m, "must be positive"));
    }
    Ok(1.0 / (xm * t_m))
}

/// Impulse rate of the PFM core for the DC part of its drive.
pub fn rest_frequency(x: &SignalExpr, q: &QuantizerSpec, t_m: f64) -> Result<f64> {
    if x.x_dc < 0.0 {
        return Err(Error::OutOfDomain(format!(
            "PFM requires a nonnegative DC drive, got {}",
            x.x_dc
        )));
    }
    Ok(compute_kd(q, t_m)? * x.x_dc)
}

/// One sinusoidal component `A sin(2π f t + φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

/// Linear amplitude envelope applied to the tones: ramps from `start` to
/// `end` over `[0, duration]` and holds `end` afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub start: f64,
    pub end: f64,
    pub duration: f64,
}

/// Closed-form input: DC offset plus enveloped sinusoids.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SignalExpr {
    #[serde(default)]
    pub x_dc: f64,
    #[serde(default)]
    pub tones: Vec<Tone>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope: Option<Envelope>,
}

impl SignalExpr {
    pub fn dc(x_dc: f64) -> Self {
        Self {
            x_dc,
            ..Self::default()
        }
    }

    pub fn tone(x_dc: f64, amplitude: f64, frequency: f64, phase: f64) -> Self {
        Self {
            x_dc,
            tones: vec![Tone {
                amplitude,
                frequency,
                phase,
            }],
            envelope: None,
        }
    }

    /// Sine whose amplitude grows linearly from zero to `peak` over
    /// `duration`.
    pub fn growing_tone(x_dc: f64, peak: f64, frequency: f64, duration: f64) -> Self {
        Self {
            x_dc,
            tones: vec![Tone {
                amplitude: 1.0,
                frequency,
                phase: 0.0,
            }],
            envelope: Some(Envelope {
                start: 0.0,
                end: peak,
                duration,
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        if !self.x_dc.is_finite() {
            v.push(violation("x_dc", self.x_dc, "must be finite"));
        }
        for (i, t) in self.tones.iter().enumerate() {
            if !(t.frequency > 0.0 && t.frequency.is_finite()) {
                v.push(violation(
                    &format!("tones[{i}].frequency"),
                    t.frequency,
                    "tone frequency must be positive",
                ));
            }
            if !t.amplitude.is_finite() || !t.phase.is_finite() {
                v.push(violation(
                    &format!("tones[{i}]"),
                    t.amplitude,
                    "amplitude and phase must be finite",
                ));
            }
        }
        if let Some(e) = &self.envelope {
            if !(e.duration > 0.0 && e.duration.is_finite()) {
                v.push(violation(
                    "envelope.duration",
                    e.duration,
                    "envelope duration must be positive",
                ));
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(v))
        }
    }

    /// Envelope gain at time `t`.
    pub fn envelope_at(&self, t: f64) -> f64 {
        match &self.envelope {
            None => 1.0,
            Some(e) => {
                if t >= e.duration {
                    e.end
                } else {
                    e.start + (e.end - e.start) * (t / e.duration)
                }
            }
        }
    }

    /// Envelope gain and slope valid on `[t, t + ε)`.
    pub(crate) fn envelope_local(&self, t: f64) -> (f64, f64) {
        match &self.envelope {
            None => (1.0, 0.0),
            Some(e) => {
                if t >= e.duration {
                    (e.end, 0.0)
                } else {
                    (self.envelope_at(t), (e.end - e.start) / e.duration)
                }
            }
        }
    }

    /// Times where the closed form changes (the envelope knee).
    pub fn breakpoints(&self) -> Vec<f64> {
        self.envelope.iter().map(|e| e.duration).collect()
    }

    /// Largest instantaneous tone amplitude at `t`.
    pub fn tone_amplitude_at(&self, t: f64) -> f64 {
        let env = self.envelope_at(t).abs();
        self.tones.iter().map(|tn| tn.amplitude.abs()).sum::<f64>() * env
    }

    pub fn eval(&self, t: f64) -> f64 {
        let env = self.envelope_at(t);
        self.x_dc
            + env
                * self
                    .tones
                    .iter()
                    .map(|tn| tn.amplitude * (std::f64::consts::TAU * tn.frequency * t + tn.phase).sin())
                    .sum::<f64>()
    }
}

/// Convert a level in dBFS to a sine amplitude given the full-scale amplitude.
pub fn dbfs_to_amplitude(dbfs: f64, full_scale: f64) -> f64 {
    full_scale * 10f64.powf(dbfs / 20.0)
}

pub fn amplitude_to_dbfs(amplitude: f64, full_scale: f64) -> f64 {
    20.0 * (amplitude / full_scale).log10()
}
