//! Rational transfer functions in `s` or `z`, in floating point and in exact
//! rational arithmetic.
//!
//! Coefficients are stored in ascending powers: of `s` for continuous-time
//! functions, of `z^{-1}` for discrete-time ones.

use std::f64::consts::TAU;
use std::fmt;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Variable {
    S,
    Z { period: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalTF {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
    pub variable: Variable,
}

impl RationalTF {
    pub fn new(num: Vec<f64>, den: Vec<f64>, variable: Variable) -> Result<Self> {
        if den.iter().all(|&d| d == 0.0) {
            return Err(Error::invalid(
                "den",
                format!("{den:?}"),
                "denominator is identically zero",
            ));
        }
        if num.iter().chain(&den).any(|c| !c.is_finite()) {
            return Err(Error::invalid("coefficients", "non-finite", "must be finite"));
        }
        if let Variable::Z { period } = variable {
            if !(period > 0.0) {
                return Err(Error::invalid("period", period, "must be positive"));
            }
        }
        let mut tf = Self { num, den, variable };
        tf.normalize();
        Ok(tf)
    }

    pub fn zero(variable: Variable) -> Self {
        Self {
            num: vec![0.0],
            den: vec![1.0],
            variable,
        }
    }

    fn normalize(&mut self) {
        trim(&mut self.num);
        trim(&mut self.den);
        // z: den[0] = 1 (causal form); s: leading power monic
        let lead = match self.variable {
            Variable::Z { .. } => *self.den.iter().find(|&&d| d != 0.0).unwrap(),
            Variable::S => *self.den.last().unwrap(),
        };
        for c in self.num.iter_mut().chain(self.den.iter_mut()) {
            *c /= lead;
        }
    }

    /// Evaluate at a point of the complex variable (`s`, or `z^{-1}`).
    pub fn eval(&self, v: Complex64) -> Complex64 {
        horner(&self.num, v) / horner(&self.den, v)
    }

    /// Frequency response at `f` Hz.
    pub fn freq_response(&self, f: f64) -> Complex64 {
        match self.variable {
            Variable::S => self.eval(Complex64::new(0.0, TAU * f)),
            Variable::Z { period } => self.eval(Complex64::from_polar(1.0, -TAU * f * period)),
        }
    }

    pub fn magnitude(&self, f: f64) -> f64 {
        self.freq_response(f).norm()
    }
}

impl fmt::Display for RationalTF {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let var = match self.variable {
            Variable::S => "s",
            Variable::Z { .. } => "z^-1",
        };
        write!(
            f,
            "({}) / ({})",
            poly_string(&self.num, var),
            poly_string(&self.den, var)
        )
    }
}

fn poly_string(p: &[f64], var: &str) -> String {
    let terms: Vec<String> = p
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(k, c)| match k {
            0 => format!("{c}"),
            1 => format!("{c}·{var}"),
            _ => format!("{c}·{var}^{k}"),
        })
        .collect();
    if terms.is_empty() {
        "0".into()
    } else {
        terms.join(" + ")
    }
}

fn trim(p: &mut Vec<f64>) {
    while p.len() > 1 && *p.last().unwrap() == 0.0 {
        p.pop();
    }
    if p.is_empty() {
        p.push(0.0);
    }
}

fn horner(p: &[f64], v: Complex64) -> Complex64 {
    p.iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * v + c)
}

/// Exact polynomial with rational coefficients, ascending powers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Poly(pub Vec<BigRational>);

impl Poly {
    pub fn zero() -> Self {
        Poly(Vec::new())
    }

    pub fn constant(c: BigRational) -> Self {
        Poly(vec![c]).trimmed()
    }

    pub fn from_ints(c: &[i64]) -> Self {
        Poly(c.iter().map(|&v| BigRational::from_integer(v.into())).collect()).trimmed()
    }

    /// Exact conversion of binary floating-point coefficients.
    pub fn from_f64(c: &[f64]) -> Result<Self> {
        c.iter()
            .map(|&v| {
                BigRational::from_float(v)
                    .ok_or_else(|| Error::invalid("coefficient", v, "must be finite"))
            })
            .collect::<Result<Vec<_>>>()
            .map(|v| Poly(v).trimmed())
    }

    /// `(1 - x)^k`.
    pub fn one_minus_x_pow(k: usize) -> Self {
        let base = Poly::from_ints(&[1, -1]);
        (0..k).fold(Poly::from_ints(&[1]), |acc, _| acc.mul(&base))
    }

    pub fn trimmed(mut self) -> Self {
        while self.0.last().is_some_and(Zero::is_zero) {
            self.0.pop();
        }
        self
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    /// Degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.0.len().checked_sub(1)
    }

    pub fn coeff(&self, k: usize) -> BigRational {
        self.0.get(k).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn add(&self, o: &Poly) -> Poly {
        let n = self.0.len().max(o.0.len());
        Poly((0..n).map(|k| self.coeff(k) + o.coeff(k)).collect()).trimmed()
    }

    pub fn sub(&self, o: &Poly) -> Poly {
        self.add(&o.scale(&-BigRational::one()))
    }

    pub fn scale(&self, c: &BigRational) -> Poly {
        Poly(self.0.iter().map(|v| v * c).collect()).trimmed()
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        if self.is_zero() || o.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![BigRational::zero(); self.0.len() + o.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in o.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out).trimmed()
    }

    /// Multiply by `x^k`.
    pub fn shift(&self, k: usize) -> Poly {
        if self.is_zero() {
            return Poly::zero();
        }
        let mut v = vec![BigRational::zero(); k];
        v.extend(self.0.iter().cloned());
        Poly(v)
    }

    /// Euclidean division, `self = q·d + r`.
    pub fn div_rem(&self, d: &Poly) -> (Poly, Poly) {
        let dd = d.degree().expect("division by zero polynomial");
        let lead = d.0[dd].clone();
        let mut r = self.0.clone();
        let mut q = vec![BigRational::zero(); self.0.len().saturating_sub(dd).max(1)];
        while r.len() > dd && !r.is_empty() {
            let k = r.len() - 1 - dd;
            let c = &r[r.len() - 1] / &lead;
            for (j, dj) in d.0.iter().enumerate() {
                r[k + j] -= &c * dj;
            }
            q[k] = c;
            r.pop();
            while r.last().is_some_and(Zero::is_zero) {
                r.pop();
            }
        }
        (Poly(q).trimmed(), Poly(r).trimmed())
    }

    /// Monic greatest common divisor.
    pub fn gcd(&self, o: &Poly) -> Poly {
        let (mut a, mut b) = (self.clone(), o.clone());
        while !b.is_zero() {
            let (_, r) = a.div_rem(&b);
            a = b;
            b = r;
        }
        match a.0.last().cloned() {
            Some(l) => a.scale(&(BigRational::one() / l)),
            None => a,
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        if self.is_zero() {
            return vec![0.0];
        }
        self.0.iter().map(|c| c.to_f64().unwrap_or(f64::NAN)).collect()
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .0
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(k, c)| format!("({c})x^{k}"))
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

/// Exact rational function; see [`RationalTF`] for the coefficient order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactTF {
    pub num: Poly,
    pub den: Poly,
    pub variable: Variable,
}

impl ExactTF {
    pub fn new(num: Poly, den: Poly, variable: Variable) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::invalid("den", "0", "denominator is identically zero"));
        }
        Ok(Self { num, den, variable })
    }

    /// Cancel common factors and normalize the denominator so its lowest
    /// nonzero coefficient is an integer with unit content, numerator and
    /// denominator sharing a single integer scale.
    pub fn reduced(&self) -> Self {
        let g = self.num.gcd(&self.den);
        let (num, den) = if g.degree().unwrap_or(0) > 0 && !self.num.is_zero() {
            (self.num.div_rem(&g).0, self.den.div_rem(&g).0)
        } else if self.num.is_zero() {
            (Poly::zero(), Poly::from_ints(&[1]))
        } else {
            (self.num.clone(), self.den.clone())
        };
        // clear denominators: multiply through by the lcm of all denominators
        // and divide by the gcd of all numerators
        let all: Vec<&BigRational> = num.0.iter().chain(den.0.iter()).collect();
        let mut lcm = BigInt::one();
        for c in &all {
            lcm = lcm.lcm(c.denom());
        }
        let ints: Vec<BigInt> = all
            .iter()
            .map(|c| (*c * BigRational::from_integer(lcm.clone())).to_integer())
            .collect();
        let mut g = BigInt::zero();
        for v in &ints {
            g = g.gcd(v);
        }
        let mut scale = BigRational::new(lcm, if g.is_zero() { BigInt::one() } else { g });
        let lead = den.0.iter().find(|c| !c.is_zero()).cloned().unwrap();
        if lead.is_negative() {
            scale = -scale;
        }
        Self {
            num: num.scale(&scale),
            den: den.scale(&scale),
            variable: self.variable,
        }
    }

    pub fn to_f64(&self) -> Result<RationalTF> {
        RationalTF::new(self.num.to_f64(), self.den.to_f64(), self.variable)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn rejects_zero_denominator() {
        assert!(RationalTF::new(vec![1.0], vec![0.0, 0.0], Variable::S).is_err());
    }

    #[test]
    fn z_normalization_and_response() {
        let tf = RationalTF::new(vec![2.0, -2.0], vec![2.0], Variable::Z { period: 1.0 }).unwrap();
        assert_eq!(tf.den, vec![1.0]);
        // 1 - z^-1 vanishes at DC and doubles at Nyquist
        assert!(tf.magnitude(0.0) < 1e-15);
        assert!((tf.magnitude(0.5) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn s_response_of_integrator() {
        let tf = RationalTF::new(vec![1.0], vec![0.0, 1.0], Variable::S).unwrap();
        let h = tf.freq_response(1.0 / TAU);
        assert!((h - Complex64::new(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn poly_division_roundtrip() {
        let a = Poly::from_ints(&[1, 0, -1]); // 1 - x^2
        let b = Poly::from_ints(&[1, -1]);
        let (q, rem) = a.div_rem(&b);
        assert!(rem.is_zero());
        assert_eq!(q, Poly::from_ints(&[1, 1]));
        assert_eq!(q.mul(&b), a);
    }

    #[test]
    fn gcd_is_monic_common_factor() {
        let f = Poly::from_ints(&[1, -1]);
        let a = f.mul(&Poly::from_ints(&[2, 3]));
        let b = f.mul(&Poly::from_ints(&[5, 0, 1]));
        assert_eq!(a.gcd(&b), Poly::from_ints(&[-1, 1]));
    }

    #[test]
    fn reduce_clears_fractions() {
        let num = Poly(vec![r(1, 2), r(-1, 2)]);
        let den = Poly(vec![r(1, 1), r(-2, 3), r(1, 3)]);
        let t = ExactTF::new(num, den, Variable::Z { period: 1.0 })
            .unwrap()
            .reduced();
        assert_eq!(t.num, Poly::from_ints(&[3, -3]));
        assert_eq!(t.den, Poly::from_ints(&[6, -4, 2]));
    }

    #[test]
    fn from_f64_is_exact() {
        let p = Poly::from_f64(&[0.1]).unwrap();
        assert_ne!(p.0[0], r(1, 10));
        assert_eq!(p.to_f64(), vec![0.1]);
        assert_eq!(Poly::from_f64(&[1.5]).unwrap().0[0], r(3, 2));
    }
}
