//! Upper bounds on nonnegative magnitudes with an extended exponent range.
//!
//! `Mag` stores `mant * 2^exp` with `mant ∈ [1,2)`. Error bounds produced by
//! high-precision arithmetic routinely sit near `2^{-3000}`, far outside the
//! `f64` exponent range, so errors cannot be tracked in plain `f64` without
//! silently flushing to zero (which would claim exactness). All operations
//! round up.

use rug::Float;
use std::cmp::Ordering;

/// Factor applied after every f64 step so accumulated rounding stays an
/// upper bound.
const SLOP: f64 = 1.0 + 4.0 * f64::EPSILON;

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Mag {
    mant: f64,
    exp: i64,
}

impl Mag {
    pub const ZERO: Mag = Mag { mant: 0.0, exp: 0 };

    pub fn two_pow(exp: i64) -> Mag {
        Mag { mant: 1.0, exp }
    }

    pub fn new(mant: f64, exp: i64) -> Mag {
        debug_assert!(mant >= 0.0 && mant.is_finite());
        Mag { mant, exp }.normalized()
    }

    fn normalized(self) -> Mag {
        if self.mant == 0.0 {
            return Mag::ZERO;
        }
        let (m, e) = frexp(self.mant);
        // frexp puts m in [0.5,1); shift to [1,2).
        Mag {
            mant: m * 2.0,
            exp: self.exp + e - 1,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.mant == 0.0
    }

    pub fn add(self, other: Mag) -> Mag {
        if self.is_zero() {
            return other;
        }
        if other.is_zero() {
            return self;
        }
        let (hi, lo) = if self.exp >= other.exp {
            (self, other)
        } else {
            (other, self)
        };
        let shift = hi.exp - lo.exp;
        if shift > 64 {
            // lo is below one ulp of hi's mantissa; bump instead of adding.
            return Mag::new(hi.mant * SLOP * SLOP, hi.exp);
        }
        let m = hi.mant + lo.mant / exp2_i(shift);
        Mag::new(m * SLOP, hi.exp)
    }

    pub fn mul(self, other: Mag) -> Mag {
        if self.is_zero() || other.is_zero() {
            return Mag::ZERO;
        }
        Mag::new(self.mant * other.mant * SLOP, self.exp + other.exp)
    }

    /// Multiply by a plain nonnegative factor.
    pub fn scale(self, c: f64) -> Mag {
        debug_assert!(c >= 0.0 && c.is_finite());
        if self.is_zero() || c == 0.0 {
            return Mag::ZERO;
        }
        Mag::new(self.mant * c * SLOP, self.exp)
    }

    pub fn max(self, other: Mag) -> Mag {
        match self.cmp_mag(&other) {
            Ordering::Less => other,
            _ => self,
        }
    }

    pub fn min_with(self, other: Mag) -> Mag {
        match self.cmp_mag(&other) {
            Ordering::Greater => other,
            _ => self,
        }
    }

    /// Upper bound on the reciprocal: `self = mant·2^exp ≥ 2^exp`, so
    /// `1/self ≤ 2^{-exp}`.
    pub fn recip_upper(self) -> Mag {
        debug_assert!(!self.is_zero());
        Mag::two_pow(-self.exp)
    }

    pub fn cmp_mag(&self, other: &Mag) -> Ordering {
        match (self.is_zero(), other.is_zero()) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            (false, false) => self
                .exp
                .cmp(&other.exp)
                .then_with(|| self.mant.partial_cmp(&other.mant).unwrap()),
        }
    }

    /// Upper bound on `|f|` as a Mag.
    pub fn from_float_upper(f: &Float) -> Mag {
        if f.is_zero() {
            return Mag::ZERO;
        }
        // MPFR: |f| ∈ [2^(e-1), 2^e) for stored exponent e.
        let e = i64::from(f.get_exp().expect("finite float"));
        Mag::two_pow(e)
    }

    /// Lower bound on `|f|` as a Mag (zero only when `f` is zero).
    pub fn from_float_lower(f: &Float) -> Mag {
        if f.is_zero() {
            return Mag::ZERO;
        }
        let e = i64::from(f.get_exp().expect("finite float"));
        Mag::two_pow(e - 1)
    }

    /// Materialize into a Float, rounded up.
    pub fn to_float(&self, prec: u32) -> Float {
        if self.is_zero() {
            return Float::new(prec);
        }
        let mut f = Float::with_val_round(prec, self.mant, rug::float::Round::Up).0;
        f <<= i32::try_from(self.exp).expect("Mag exponent fits i32 for materialization");
        f
    }

    /// Decimal rendering like `1.2e-3010`. For reports; not a bound.
    pub fn to_decimal_string(&self) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        let l10 = self.exp as f64 * std::f64::consts::LOG10_2 + self.mant.log10();
        let e10 = l10.floor();
        let d = 10f64.powf(l10 - e10);
        format!("{:.3}e{}", d, e10 as i64)
    }
}

fn exp2_i(e: i64) -> f64 {
    debug_assert!((0..=64).contains(&e));
    (e as f64).exp2()
}

fn frexp(x: f64) -> (f64, i64) {
    debug_assert!(x > 0.0 && x.is_finite());
    let bits = x.to_bits();
    let raw_exp = ((bits >> 52) & 0x7FF) as i64;
    if raw_exp == 0 {
        // subnormal: renormalize through multiplication
        let y = x * exp2_i(64);
        let (m, e) = frexp(y);
        (m, e - 64)
    } else {
        let m = f64::from_bits((bits & !(0x7FFu64 << 52)) | (1022u64 << 52));
        (m, raw_exp - 1022)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_is_upper_bound() {
        let a = Mag::new(1.5, -2000);
        let b = Mag::new(1.9, -2003);
        let s = a.add(b);
        // exact: 1.5*2^-2000 + 1.9*2^-2003 = (1.5 + 0.2375)*2^-2000
        assert!(s.cmp_mag(&Mag::new(1.7374, -2000)) == Ordering::Greater);
        assert!(s.cmp_mag(&Mag::new(1.74, -2000)) == Ordering::Less);
    }

    #[test]
    fn far_apart_add_bumps() {
        let a = Mag::two_pow(0);
        let b = Mag::two_pow(-500);
        let s = a.add(b);
        assert!(s.cmp_mag(&a) == Ordering::Greater);
        assert!(s.cmp_mag(&Mag::new(1.001, 0)) == Ordering::Less);
    }

    #[test]
    fn mul_tracks_exponents() {
        let a = Mag::two_pow(-100);
        let b = Mag::two_pow(-200);
        assert!(a.mul(b).cmp_mag(&Mag::two_pow(-299)) == Ordering::Less);
        assert!(a.mul(b).cmp_mag(&Mag::two_pow(-301)) == Ordering::Greater);
    }

    #[test]
    fn float_bounds_bracket() {
        let f = Float::with_val(64, 0.75);
        assert_eq!(Mag::from_float_upper(&f).cmp_mag(&Mag::two_pow(0)), Ordering::Equal);
        assert_eq!(Mag::from_float_lower(&f).cmp_mag(&Mag::two_pow(-1)), Ordering::Equal);
    }
}
