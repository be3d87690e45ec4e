//! Certified scalar arithmetic.
//!
//! `HPScalar` carries a value together with a conservative absolute error
//! bound. Values that are exactly representable stay on an exact rational
//! fast path (error identically zero); everything else is a round-to-nearest
//! MPFR float plus a `Mag` bound that every operation propagates upward.
//! Comparisons are three-valued: they refuse to decide when the error bounds
//! overlap.

use crate::mag::Mag;
use rug::float::Round;
use rug::ops::{Pow, PowAssignRound};
use rug::{Assign, Float, Integer, Rational};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use thiserror::Error;

/// Beyond this many bits of numerator+denominator an exact rational result
/// is demoted to a tracked float.
const EXACT_BIT_LIMIT: u32 = 1 << 16;

#[derive(Copy, Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields, default)]
pub struct PrecisionPolicy {
    pub work_bits: u32,
    pub guard_bits: u32,
    pub bit_cap: u64,
}

impl Default for PrecisionPolicy {
    fn default() -> Self {
        PrecisionPolicy {
            work_bits: 128,
            guard_bits: 40,
            bit_cap: 1 << 28,
        }
    }
}

impl PrecisionPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if self.work_bits < 32 {
            return Err("precision.work_bits must be at least 32".into());
        }
        if self.guard_bits < 20 {
            return Err("precision.guard_bits must be at least 20".into());
        }
        if u64::from(self.work_bits) > self.bit_cap {
            return Err("precision.bit_cap smaller than work_bits".into());
        }
        Ok(())
    }
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum NumError {
    #[error("comparison undecidable at current precision ({0})")]
    Uncertain(String),
    #[error("precision budget exceeded: {required_bits} bits required, cap is {cap_bits}")]
    PrecisionBudget { required_bits: u64, cap_bits: u64 },
    #[error("division by a value not certified nonzero")]
    DivUncertain,
    #[error("operand not certified {0}")]
    Domain(&'static str),
}

/// Three-valued result of comparing a value against a threshold.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Below,
    Above,
    Uncertain,
}

#[derive(Clone, Debug)]
pub struct HPScalar {
    repr: Repr,
}

#[derive(Clone, Debug)]
enum Repr {
    Exact(Rational),
    Approx { val: Float, err: Mag },
}

fn half_ulp(f: &Float, inexact: Ordering) -> Mag {
    if inexact == Ordering::Equal || f.is_zero() {
        return Mag::ZERO;
    }
    let e = i64::from(f.get_exp().expect("finite"));
    Mag::two_pow(e - i64::from(f.prec()) - 1)
}

impl HPScalar {
    pub fn zero() -> Self {
        HPScalar {
            repr: Repr::Exact(Rational::new()),
        }
    }

    pub fn one() -> Self {
        HPScalar {
            repr: Repr::Exact(Rational::from(1)),
        }
    }

    pub fn from_u64(v: u64) -> Self {
        HPScalar {
            repr: Repr::Exact(Rational::from(v)),
        }
    }

    pub fn from_i64(v: i64) -> Self {
        HPScalar {
            repr: Repr::Exact(Rational::from(v)),
        }
    }

    pub fn from_rational(r: Rational) -> Self {
        HPScalar {
            repr: Repr::Exact(r),
        }
    }

    pub fn from_integer(i: Integer) -> Self {
        HPScalar {
            repr: Repr::Exact(Rational::from(i)),
        }
    }

    /// Dyadic value `num / 2^shift`, exact.
    pub fn from_dyadic(num: Integer, shift: u64) -> Self {
        let den = Integer::from(1) << u32::try_from(shift).expect("dyadic shift fits u32");
        HPScalar::from_rational(Rational::from((num, den)))
    }

    /// A float taken at face value with a caller-supplied bound.
    pub fn from_float_with_err(val: Float, err: Mag) -> Self {
        HPScalar {
            repr: Repr::Approx { val, err },
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.repr, Repr::Exact(_))
    }

    pub fn as_exact(&self) -> Option<&Rational> {
        match &self.repr {
            Repr::Exact(r) => Some(r),
            Repr::Approx { .. } => None,
        }
    }

    pub fn err_mag(&self) -> Mag {
        match &self.repr {
            Repr::Exact(_) => Mag::ZERO,
            Repr::Approx { err, .. } => *err,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match &self.repr {
            Repr::Exact(r) => r.to_f64(),
            Repr::Approx { val, .. } => val.to_f64(),
        }
    }

    /// Midpoint as a Float at the given precision (for reports; error bound
    /// not included).
    pub fn to_float(&self, prec: u32) -> Float {
        match &self.repr {
            Repr::Exact(r) => Float::with_val(prec, r),
            Repr::Approx { val, .. } => Float::with_val(prec, val),
        }
    }

    fn approx_parts(&self, prec: u32) -> (Float, Mag) {
        match &self.repr {
            Repr::Exact(r) => {
                let (f, ord) = Float::with_val_round(prec, r, Round::Nearest);
                let e = half_ulp(&f, ord);
                (f, e)
            }
            Repr::Approx { val, err } => (val.clone(), *err),
        }
    }

    fn maybe_demote(self, prec: u32) -> Self {
        if let Repr::Exact(r) = &self.repr {
            let bits = r.numer().significant_bits() + r.denom().significant_bits();
            if bits > EXACT_BIT_LIMIT {
                let (f, ord) = Float::with_val_round(prec.max(64), r, Round::Nearest);
                let err = half_ulp(&f, ord);
                return HPScalar {
                    repr: Repr::Approx { val: f, err },
                };
            }
        }
        self
    }

    pub fn add(&self, rhs: &HPScalar, prec: u32) -> HPScalar {
        if let (Repr::Exact(a), Repr::Exact(b)) = (&self.repr, &rhs.repr) {
            return HPScalar::from_rational(Rational::from(a + b)).maybe_demote(prec);
        }
        let (a, ea) = self.approx_parts(prec);
        let (b, eb) = rhs.approx_parts(prec);
        let (v, ord) = Float::with_val_round(prec, &a + &b, Round::Nearest);
        let err = ea.add(eb).add(half_ulp(&v, ord));
        HPScalar {
            repr: Repr::Approx { val: v, err },
        }
    }

    pub fn sub(&self, rhs: &HPScalar, prec: u32) -> HPScalar {
        if let (Repr::Exact(a), Repr::Exact(b)) = (&self.repr, &rhs.repr) {
            return HPScalar::from_rational(Rational::from(a - b)).maybe_demote(prec);
        }
        let (a, ea) = self.approx_parts(prec);
        let (b, eb) = rhs.approx_parts(prec);
        let (v, ord) = Float::with_val_round(prec, &a - &b, Round::Nearest);
        let err = ea.add(eb).add(half_ulp(&v, ord));
        HPScalar {
            repr: Repr::Approx { val: v, err },
        }
    }

    pub fn neg(&self) -> HPScalar {
        match &self.repr {
            Repr::Exact(r) => HPScalar::from_rational(Rational::from(-r.clone())),
            Repr::Approx { val, err } => HPScalar {
                repr: Repr::Approx {
                    val: Float::from(-val.clone()),
                    err: *err,
                },
            },
        }
    }

    pub fn abs(&self) -> HPScalar {
        match &self.repr {
            Repr::Exact(r) => HPScalar::from_rational(Rational::from(r.clone().abs())),
            Repr::Approx { val, err } => HPScalar {
                repr: Repr::Approx {
                    val: Float::from(val.clone().abs()),
                    err: *err,
                },
            },
        }
    }

    pub fn mul(&self, rhs: &HPScalar, prec: u32) -> HPScalar {
        if let (Repr::Exact(a), Repr::Exact(b)) = (&self.repr, &rhs.repr) {
            return HPScalar::from_rational(Rational::from(a * b)).maybe_demote(prec);
        }
        let (a, ea) = self.approx_parts(prec);
        let (b, eb) = rhs.approx_parts(prec);
        let (v, ord) = Float::with_val_round(prec, &a * &b, Round::Nearest);
        let err = Mag::from_float_upper(&a)
            .mul(eb)
            .add(Mag::from_float_upper(&b).mul(ea))
            .add(ea.mul(eb))
            .add(half_ulp(&v, ord));
        HPScalar {
            repr: Repr::Approx { val: v, err },
        }
    }

    pub fn mul_u64(&self, k: u64, prec: u32) -> HPScalar {
        self.mul(&HPScalar::from_u64(k), prec)
    }

    pub fn div(&self, rhs: &HPScalar, prec: u32) -> Result<HPScalar, NumError> {
        if let (Repr::Exact(a), Repr::Exact(b)) = (&self.repr, &rhs.repr) {
            if b.cmp0() == Ordering::Equal {
                return Err(NumError::DivUncertain);
            }
            return Ok(HPScalar::from_rational(Rational::from(a / b)).maybe_demote(prec));
        }
        let (a, ea) = self.approx_parts(prec);
        let (b, eb) = rhs.approx_parts(prec);
        if b.is_zero() {
            return Err(NumError::DivUncertain);
        }
        let b_low = Mag::from_float_lower(&b);
        // require relative error of the denominator below 1/16
        if !eb.is_zero() && eb.cmp_mag(&b_low.scale(1.0 / 16.0)) != Ordering::Less {
            return Err(NumError::DivUncertain);
        }
        let (v, ord) = Float::with_val_round(prec, &a / &b, Round::Nearest);
        // 1/|b| ≤ (16/15) / b_low
        let recip_upper = recip_mag(b_low).scale(16.0 / 15.0);
        let err = ea
            .mul(recip_upper)
            .add(Mag::from_float_upper(&v).mul(eb).mul(recip_upper))
            .add(half_ulp(&v, ord));
        Ok(HPScalar {
            repr: Repr::Approx { val: v, err },
        })
    }

    pub fn recip(&self, prec: u32) -> Result<HPScalar, NumError> {
        HPScalar::one().div(self, prec)
    }

    /// Certified floor and fractional part. Errors when the value sits within
    /// its error bound of an integer.
    pub fn floor_fract(&self, prec: u32) -> Result<(Integer, HPScalar), NumError> {
        match &self.repr {
            Repr::Exact(r) => {
                let fl = Rational::from(r.clone().floor());
                let k = fl.numer().clone();
                let fract = HPScalar::from_rational(Rational::from(r - &fl));
                Ok((k, fract))
            }
            Repr::Approx { val, err } => {
                let fl = Float::from(val.clone().floor());
                let dist_down = Float::with_val(val.prec(), val - &fl);
                let dist_up = Float::with_val(val.prec(), 1u32) - &dist_down;
                let near = Mag::from_float_lower(&dist_down).min_with(Mag::from_float_lower(&dist_up));
                if !err.is_zero() && near.cmp_mag(err) != Ordering::Greater {
                    return Err(NumError::Uncertain("floor near integer".into()));
                }
                if err.is_zero() && dist_down.is_zero() {
                    // exact integer float
                    let k = fl.to_integer().expect("finite");
                    return Ok((k, HPScalar::zero()));
                }
                let k = fl.to_integer().expect("finite");
                let (fract, ord) = Float::with_val_round(prec, &dist_down, Round::Nearest);
                let e = err.add(half_ulp(&fract, ord));
                Ok((
                    k,
                    HPScalar {
                        repr: Repr::Approx { val: fract, err: e },
                    },
                ))
            }
        }
    }

    /// `2^self`.
    pub fn exp2(&self, prec: u32) -> Result<HPScalar, NumError> {
        if let Repr::Exact(r) = &self.repr {
            if r.is_integer() {
                let k = r.numer();
                if k.significant_bits() <= 21 {
                    let k = k.to_i64().unwrap();
                    let mut v = Rational::from(1);
                    if k >= 0 {
                        v <<= u32::try_from(k).unwrap();
                    } else {
                        v >>= u32::try_from(-k).unwrap();
                    }
                    return Ok(HPScalar::from_rational(v).maybe_demote(prec));
                }
            }
        }
        let (x, ex) = self.approx_parts(prec + 8);
        if !ex.is_zero() && ex.cmp_mag(&Mag::two_pow(0)) == Ordering::Greater {
            return Err(NumError::Domain("exp2 argument error bound above 1"));
        }
        let (v, ord) = Float::with_val_round(prec, x.exp2_ref(), Round::Nearest);
        // |2^x - 2^x̂| ≤ 2^x̂ (2^e − 1) ≤ 2^x̂ · e · 2 ln2  for e ≤ 1
        let err = Mag::from_float_upper(&v)
            .mul(ex)
            .scale(2.0 * std::f64::consts::LN_2)
            .add(half_ulp(&v, ord));
        Ok(HPScalar {
            repr: Repr::Approx { val: v, err },
        })
    }

    /// `log2(self)`; requires the value certified positive.
    pub fn log2(&self, prec: u32) -> Result<HPScalar, NumError> {
        if let Repr::Exact(r) = &self.repr {
            if r.cmp0() != Ordering::Greater {
                return Err(NumError::Domain("log2 of nonpositive"));
            }
            // dyadic powers have exact integer logs
            if r.numer().is_power_of_two() && r.denom().is_power_of_two() {
                let e = i64::from(r.numer().significant_bits()) - 1
                    - (i64::from(r.denom().significant_bits()) - 1);
                return Ok(HPScalar::from_i64(e));
            }
        }
        let (x, ex) = self.approx_parts(prec + 8);
        let x_low = Mag::from_float_lower(&x);
        if x.is_sign_negative() || x.is_zero() {
            return Err(NumError::Domain("log2 of nonpositive"));
        }
        if !ex.is_zero() && ex.cmp_mag(&x_low.scale(1.0 / 16.0)) != Ordering::Less {
            return Err(NumError::Domain("log2 argument not certified positive"));
        }
        let (v, ord) = Float::with_val_round(prec, x.log2_ref(), Round::Nearest);
        // d/dx log2 x = 1/(x ln2); |x| ≥ (15/16) x_low
        let err = ex
            .mul(recip_mag(x_low))
            .scale((16.0 / 15.0) / std::f64::consts::LN_2)
            .add(half_ulp(&v, ord));
        Ok(HPScalar {
            repr: Repr::Approx { val: v, err },
        })
    }

    pub fn sqrt(&self, prec: u32) -> Result<HPScalar, NumError> {
        if let Repr::Exact(r) = &self.repr {
            match r.cmp0() {
                Ordering::Less => return Err(NumError::Domain("sqrt of negative")),
                Ordering::Equal => return Ok(HPScalar::zero()),
                Ordering::Greater => {}
            }
            let (nr, nrem) = r.numer().clone().sqrt_rem(Integer::new());
            let (dr, drem) = r.denom().clone().sqrt_rem(Integer::new());
            if nrem.cmp0() == Ordering::Equal && drem.cmp0() == Ordering::Equal {
                return Ok(HPScalar::from_rational(Rational::from((nr, dr))));
            }
        }
        let (x, ex) = self.approx_parts(prec + 8);
        if x.is_sign_negative() && !x.is_zero() {
            return Err(NumError::Domain("sqrt of negative"));
        }
        let x_low = Mag::from_float_lower(&x);
        if !ex.is_zero() && ex.cmp_mag(&x_low.scale(1.0 / 16.0)) != Ordering::Less {
            return Err(NumError::Domain("sqrt argument not certified nonnegative"));
        }
        let (v, ord) = Float::with_val_round(prec, x.sqrt_ref(), Round::Nearest);
        // d/dx sqrt = 1/(2 sqrt x): sqrt(x) ≥ sqrt((15/16) x_low)
        let sqrt_low = Mag::from_float_lower(&v);
        let err = ex
            .mul(recip_mag(sqrt_low))
            .scale(0.6)
            .add(half_ulp(&v, ord));
        Ok(HPScalar {
            repr: Repr::Approx { val: v, err },
        })
    }

    /// Integer power, exact on exact inputs.
    pub fn pow_i64(&self, k: i64, prec: u32) -> Result<HPScalar, NumError> {
        if k == 0 {
            return Ok(HPScalar::one());
        }
        let ki = i32::try_from(k)
            .map_err(|_| NumError::Domain("integer exponent out of range"))?;
        match &self.repr {
            Repr::Exact(r) => {
                if k < 0 && r.cmp0() == Ordering::Equal {
                    return Err(NumError::DivUncertain);
                }
                let bits = (r.numer().significant_bits() + r.denom().significant_bits()) as u64
                    * k.unsigned_abs();
                if bits <= u64::from(EXACT_BIT_LIMIT) {
                    let v = Rational::from(r.clone().pow(ki));
                    return Ok(HPScalar::from_rational(v).maybe_demote(prec));
                }
                // fall through to the float path
            }
            Repr::Approx { .. } => {}
        }
        let (x, ex) = self.approx_parts(prec + 8);
        if x.is_zero() && k < 0 {
            return Err(NumError::DivUncertain);
        }
        let mut v = Float::with_val(prec, &x);
        let ord = v.pow_assign_round(ki, Round::Nearest);
        // relative error multiplies by |k|; valid while |k|·rel stays ≤ 1
        let err = if ex.is_zero() || x.is_zero() {
            half_ulp(&v, ord)
        } else {
            let x_low = Mag::from_float_lower(&x);
            relative_error_guard(&ex, &x_low)?;
            let rel_total = ex
                .mul(x_low.recip_upper())
                .scale((16.0 / 15.0) * k.unsigned_abs() as f64);
            if rel_total.cmp_mag(&Mag::two_pow(0)) == Ordering::Greater {
                return Err(NumError::Domain("power relative error above 1"));
            }
            Mag::from_float_upper(&v)
                .mul(rel_total)
                .scale(2.0)
                .add(half_ulp(&v, ord))
        };
        Ok(HPScalar {
            repr: Repr::Approx { val: v, err },
        })
    }

    /// `self^e` for rational exponent, via `exp2(e · log2 self)` with exact
    /// shortcuts for integer exponents and exact roots.
    pub fn pow_rational(&self, e: &Rational, prec: u32) -> Result<HPScalar, NumError> {
        if e.is_integer() {
            if let Some(k) = e.numer().to_i64() {
                return self.pow_i64(k, prec);
            }
        }
        if let Repr::Exact(r) = &self.repr {
            if r.cmp0() == Ordering::Greater {
                if let Some(exact) = exact_rational_pow(r, e) {
                    return Ok(HPScalar::from_rational(exact).maybe_demote(prec));
                }
            }
        }
        let inner = prec + 16;
        let lg = self.log2(inner)?;
        let expo = lg.mul(&HPScalar::from_rational(e.clone()), inner);
        expo.exp2(prec)
    }

    /// Four-valued certified comparison; `None` means undecidable at the
    /// current error bounds.
    pub fn cmp_checked(&self, rhs: &HPScalar) -> Option<Ordering> {
        if let (Repr::Exact(a), Repr::Exact(b)) = (&self.repr, &rhs.repr) {
            return Some(a.cmp(b));
        }
        let prec = self.float_prec().max(rhs.float_prec()).max(64) + 32;
        let (a, ea) = self.approx_parts(prec);
        let (b, eb) = rhs.approx_parts(prec);
        let (d, ord) = Float::with_val_round(prec, &a - &b, Round::Nearest);
        let total = ea.add(eb).add(half_ulp(&d, ord));
        if d.is_zero() {
            return if total.is_zero() {
                Some(Ordering::Equal)
            } else {
                None
            };
        }
        let d_low = Mag::from_float_lower(&d);
        if total.is_zero() || d_low.cmp_mag(&total) == Ordering::Greater {
            Some(if d.is_sign_negative() {
                Ordering::Less
            } else {
                Ordering::Greater
            })
        } else {
            None
        }
    }

    /// Three-valued threshold comparison per the scalar contract: uncertain
    /// whenever `|value − t|` is not certified nonzero.
    pub fn verdict_vs(&self, threshold: &HPScalar) -> Verdict {
        match self.cmp_checked(threshold) {
            Some(Ordering::Less) => Verdict::Below,
            Some(Ordering::Greater) => Verdict::Above,
            Some(Ordering::Equal) | None => Verdict::Uncertain,
        }
    }

    pub fn cmp_certain(&self, rhs: &HPScalar, what: &str) -> Result<Ordering, NumError> {
        self.cmp_checked(rhs)
            .ok_or_else(|| NumError::Uncertain(what.to_string()))
    }

    fn float_prec(&self) -> u32 {
        match &self.repr {
            Repr::Exact(_) => 0,
            Repr::Approx { val, .. } => val.prec(),
        }
    }

    /// Decimal string at roughly the stated number of significant digits.
    pub fn to_decimal_string(&self, digits: usize) -> String {
        let prec = ((digits as f64) * 3.33).ceil() as u32 + 16;
        let f = self.to_float(prec);
        if f.is_zero() {
            return "0".to_string();
        }
        f.to_string_radix(10, Some(digits))
    }
}

fn recip_mag(m: Mag) -> Mag {
    debug_assert!(!m.is_zero());
    m.recip_upper()
}

fn relative_error_guard(ex: &Mag, x_low: &Mag) -> Result<(), NumError> {
    if !ex.is_zero() && ex.cmp_mag(&x_low.scale(1.0 / 16.0)) != Ordering::Less {
        return Err(NumError::Domain("relative error too large for power"));
    }
    Ok(())
}

fn exact_rational_pow(base: &Rational, e: &Rational) -> Option<Rational> {
    let p = e.numer().to_i32()?;
    let q = e.denom().to_u32()?;
    if q == 1 || q > 64 {
        return None;
    }
    let nr = base.numer().clone().root(q);
    let dr = base.denom().clone().root(q);
    if Integer::from(nr.clone().pow(q)) != *base.numer()
        || Integer::from(dr.clone().pow(q)) != *base.denom()
    {
        return None;
    }
    let root = Rational::from((nr, dr));
    let bits = (root.numer().significant_bits() + root.denom().significant_bits()) as u64
        * u64::from(p.unsigned_abs());
    if bits > u64::from(EXACT_BIT_LIMIT) {
        return None;
    }
    Some(Rational::from(root.pow(p)))
}

/// Parse a decimal literal (`"0.3"`, `"2"`, `"1e-3"`, `"-4.25e2"`) into an
/// exact rational. Config numerics use decimal semantics, not binary f64.
pub fn rational_from_decimal(s: &str) -> Result<Rational, String> {
    let t = s.trim();
    if t.is_empty() {
        return Err("empty numeric literal".into());
    }
    let (mantissa, exp10) = match t.find(['e', 'E']) {
        Some(i) => {
            let e: i64 = t[i + 1..]
                .parse()
                .map_err(|_| format!("bad exponent in {t:?}"))?;
            (&t[..i], e)
        }
        None => (t, 0),
    };
    let (sign, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (-1i32, rest),
        None => (1, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match digits.find('.') {
        Some(i) => (&digits[..i], &digits[i + 1..]),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(format!("bad numeric literal {t:?}"));
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("bad numeric literal {t:?}"));
    }
    let mut num = Integer::new();
    let joined = format!("{int_part}{frac_part}");
    num.assign(Integer::parse(&joined).map_err(|_| format!("bad digits in {t:?}"))?);
    if sign < 0 {
        num = -num;
    }
    let shift = exp10 - frac_part.len() as i64;
    let mut r = Rational::from(num);
    let ten = Integer::from(10);
    if shift > 0 {
        r *= Rational::from(ten.pow(u32::try_from(shift).map_err(|_| "exponent overflow")?));
    } else if shift < 0 {
        r /= Rational::from(ten.pow(u32::try_from(-shift).map_err(|_| "exponent overflow")?));
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dec(s: &str) -> HPScalar {
        HPScalar::from_rational(rational_from_decimal(s).unwrap())
    }

    #[test]
    fn decimal_parsing_is_exact() {
        assert_eq!(
            rational_from_decimal("0.3").unwrap(),
            Rational::from((3, 10))
        );
        assert_eq!(
            rational_from_decimal("-4.25e2").unwrap(),
            Rational::from(-425)
        );
        assert_eq!(rational_from_decimal("1e-3").unwrap(), Rational::from((1, 1000)));
        assert!(rational_from_decimal("x").is_err());
    }

    #[test]
    fn exact_ops_stay_exact() {
        let a = dec("0.2");
        let b = dec("0.5");
        let s = a.add(&b, 128);
        assert_eq!(s.as_exact().unwrap(), &Rational::from((7, 10)));
        let p = a.mul(&b, 128);
        assert_eq!(p.as_exact().unwrap(), &Rational::from((1, 10)));
    }

    #[test]
    fn approx_error_bounds_comparisons() {
        // 2^(1/2) computed two ways should compare uncertain against itself
        let two = HPScalar::from_u64(2);
        let r1 = two.sqrt(128).unwrap();
        let r2 = two.pow_rational(&Rational::from((1, 2)), 160).unwrap();
        assert_eq!(r1.cmp_checked(&r2), None);
        // but is strictly between 1.414 and 1.415
        assert_eq!(r1.cmp_checked(&dec("1.414")), Some(Ordering::Greater));
        assert_eq!(r1.cmp_checked(&dec("1.415")), Some(Ordering::Less));
    }

    #[test]
    fn exp2_log2_roundtrip_certified() {
        let x = dec("10");
        let l = x.log2(128).unwrap();
        let back = l.exp2(128).unwrap();
        let d = back.sub(&x, 128).abs();
        assert_eq!(d.cmp_checked(&dec("1e-30")), Some(Ordering::Less));
        // error bound honest: can't claim equality
        assert_eq!(back.cmp_checked(&x), None);
    }

    #[test]
    fn pow_exact_shortcuts() {
        // 1024^(1/2) is exactly 32
        let v = HPScalar::from_u64(1024)
            .pow_rational(&Rational::from((1, 2)), 128)
            .unwrap();
        assert_eq!(v.as_exact().unwrap(), &Rational::from(32));
        // 2^10 exact
        let v = HPScalar::from_u64(2).pow_i64(10, 128).unwrap();
        assert_eq!(v.as_exact().unwrap(), &Rational::from(1024));
    }

    #[test]
    fn floor_fract_certified_and_uncertain() {
        let x = dec("3.75");
        let (k, f) = x.floor_fract(128).unwrap();
        assert_eq!(k, Integer::from(3));
        assert_eq!(f.as_exact().unwrap(), &Rational::from((3, 4)));

        // an approx value within err of an integer must refuse
        let near = HPScalar::from_float_with_err(Float::with_val(64, 2.0), Mag::two_pow(-10));
        assert!(matches!(near.floor_fract(64), Err(NumError::Uncertain(_))));
    }

    #[test]
    fn verdict_contract() {
        let x = HPScalar::from_float_with_err(Float::with_val(64, 0.5), Mag::two_pow(-10));
        let t_far = dec("0.6");
        let t_near = dec("0.5002");
        assert_eq!(x.verdict_vs(&t_far), Verdict::Below);
        assert_eq!(x.verdict_vs(&t_near), Verdict::Uncertain);
        // exact equality is uncertain for the threshold verdict
        assert_eq!(dec("0.5").verdict_vs(&dec("0.5")), Verdict::Uncertain);
    }

    #[test]
    fn division_guards() {
        let tiny = HPScalar::from_float_with_err(Float::with_val(64, 1e-3), Mag::two_pow(-9));
        assert!(matches!(
            HPScalar::one().div(&tiny, 64),
            Err(NumError::DivUncertain)
        ));
        let fine = dec("4");
        let q = dec("1").div(&fine, 64).unwrap();
        assert_eq!(q.as_exact().unwrap(), &Rational::from((1, 4)));
    }

    #[test]
    fn demotion_keeps_error_tracking() {
        // huge exact rational gets demoted but stays usable
        let r = Rational::from(Rational::from(3).pow(50000));
        let x = HPScalar::from_rational(r).maybe_demote(128);
        assert!(!x.is_exact());
    }
}
