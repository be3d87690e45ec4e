//! Certified evaluation of `{u_n·y}` and enumeration of the hitting set
//! `Λ_y = {n : {u_n·y} ∈ I_n}`.
//!
//! Every emitted fractional value carries an absolute error at most
//! `2^{-guard}`. The evaluation strategy is picked per (sequence family,
//! oracle kind):
//!
//! - geometric `α = 2^k`, bit-stream y: digit shift, O(1) random access;
//! - geometric integer `α`, bit-stream y: one small multiply per step on the
//!   low `F` bits of `α^n·Y`;
//! - geometric `α = p/2^j`: the same low-bits walk on `p^n·Y` with the
//!   binary point sliding `j` bits per step;
//! - polynomial `u_n = n^m`: direct modular product per index;
//! - everything else (stretched exponents, explicit lists, general rational
//!   ratios): a certified high-precision mantissa of `u_n` times the
//!   materialized prefix of `y`;
//! - rational y: exact rational arithmetic (modular exponentiation for
//!   integer geometric families).

use crate::mag::Mag;
use crate::scalar::{HPScalar, NumError, PrecisionPolicy};
use crate::seeding::BitStream;
use crate::sequences::{GrowthSequence, IntegerSet, SeqError, SeqFamily, TargetScheme};
use crate::torus::{IntervalUnion, Membership};
use rug::ops::Pow;
use rug::{Complete, Integer, Rational};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug, Clone)]
pub enum HitError {
    #[error("{0}")]
    Num(#[from] NumError),
    #[error("{0}")]
    Seq(#[from] SeqError),
    #[error("oracle guard_bits must be ≥ 20, got {0}")]
    GuardTooSmall(u32),
    #[error("scanner indices must be nondecreasing (asked {asked} after {current})")]
    NonMonotonicAccess { asked: u64, current: u64 },
}

// ---------------------------------------------------------------------------
// the point y

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleKind {
    /// Exact rational point p/q ∈ [0,1).
    Rational { p: u64, q: u64 },
    /// Lazy seeded binary expansion; bit k is a pure function of (seed, k).
    Bitstream { seed: u64 },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FractionalOracle {
    #[serde(flatten)]
    pub kind: OracleKind,
    #[serde(default = "default_guard")]
    pub guard_bits: u32,
    #[serde(default = "default_bit_cap")]
    pub bit_cap: u64,
}

fn default_guard() -> u32 {
    40
}
fn default_bit_cap() -> u64 {
    1 << 28
}

impl FractionalOracle {
    pub fn bitstream(seed: u64, policy: &PrecisionPolicy) -> Self {
        FractionalOracle {
            kind: OracleKind::Bitstream { seed },
            guard_bits: policy.guard_bits,
            bit_cap: policy.bit_cap,
        }
    }

    pub fn rational(p: u64, q: u64, policy: &PrecisionPolicy) -> Self {
        FractionalOracle {
            kind: OracleKind::Rational { p, q },
            guard_bits: policy.guard_bits,
            bit_cap: policy.bit_cap,
        }
    }

    pub fn validate(&self) -> Result<(), HitError> {
        if self.guard_bits < 20 {
            return Err(HitError::GuardTooSmall(self.guard_bits));
        }
        if let OracleKind::Rational { p, q } = &self.kind {
            if *q == 0 || p >= q {
                return Err(HitError::Seq(SeqError::Validation(
                    "rational oracle needs p < q, q ≥ 1".into(),
                )));
            }
        }
        Ok(())
    }

    /// floor(y·2^nbits), materializing stream bits on demand.
    pub fn prefix_integer(&self, nbits: u64) -> Result<Integer, HitError> {
        if nbits > self.bit_cap {
            return Err(NumError::PrecisionBudget {
                required_bits: nbits,
                cap_bits: self.bit_cap,
            }
            .into());
        }
        match &self.kind {
            OracleKind::Bitstream { seed } => Ok(BitStream::new(*seed).prefix_integer(nbits)),
            OracleKind::Rational { p, q } => {
                let num = Integer::from(*p) << u32::try_from(nbits).unwrap();
                Ok(num / Integer::from(*q))
            }
        }
    }

    pub fn as_scalar(&self, prec: u32) -> HPScalar {
        match &self.kind {
            OracleKind::Rational { p, q } => {
                HPScalar::from_rational(Rational::from((*p, *q)))
            }
            OracleKind::Bitstream { seed } => {
                let v = BitStream::new(*seed).prefix_integer(u64::from(prec));
                HPScalar::from_float_with_err(
                    HPScalar::from_dyadic(v, u64::from(prec)).to_float(prec.max(64)),
                    Mag::two_pow(-i64::from(prec)),
                )
            }
        }
    }
}

// ---------------------------------------------------------------------------
// fixed-point certified fractions

/// Scale of fixed-point fraction values: values live in [0, 2^96).
pub const FRAC_SCALE_BITS: u32 = 96;

/// A certified point of [0,1) in 96-bit fixed point: the true value lies in
/// `[v − err, v + err] / 2^96`.
#[derive(Copy, Clone, Debug)]
pub struct FixedFrac {
    pub v: u128,
    pub err: u128,
}

impl FixedFrac {
    pub fn exact_bits(bits: u128, bit_count: u32) -> FixedFrac {
        debug_assert!(bit_count <= FRAC_SCALE_BITS);
        FixedFrac {
            v: bits << (FRAC_SCALE_BITS - bit_count),
            err: 0,
        }
    }

    pub fn to_scalar(&self) -> HPScalar {
        let val = HPScalar::from_dyadic(Integer::from(self.v), u64::from(FRAC_SCALE_BITS));
        if self.err == 0 {
            val
        } else {
            let bits = 128 - self.err.leading_zeros();
            HPScalar::from_float_with_err(
                val.to_float(FRAC_SCALE_BITS + 8),
                Mag::two_pow(i64::from(bits) - i64::from(FRAC_SCALE_BITS)),
            )
        }
    }

    pub fn to_f64(&self) -> f64 {
        self.v as f64 / 2f64.powi(FRAC_SCALE_BITS as i32)
    }
}

/// Extract the top `keep` fraction bits of `w mod 2^fbits` as a FixedFrac
/// with truncation error `2^{-keep}` (plus the caller's tail error).
fn fixed_from_low_bits(w: &Integer, fbits: u64, keep: u32, extra_err_exp: u32) -> FixedFrac {
    debug_assert!(keep <= FRAC_SCALE_BITS - 2);
    let shift = fbits.saturating_sub(u64::from(keep));
    let top = if shift > 0 {
        (w >> u32::try_from(shift).expect("shift fits")).complete()
    } else {
        w.clone()
    };
    let mask = (Integer::from(1) << keep) - Integer::from(1);
    let bits = (top & mask).to_u128().expect("masked to keep bits");
    let trunc = 1u128 << (FRAC_SCALE_BITS - keep);
    let tail = 1u128 << (FRAC_SCALE_BITS.saturating_sub(extra_err_exp).min(FRAC_SCALE_BITS - 1));
    FixedFrac {
        v: bits << (FRAC_SCALE_BITS - keep),
        err: trunc + if extra_err_exp >= FRAC_SCALE_BITS { 1 } else { tail },
    }
}

/// Certified `{u·(Y/2^fbits)}` from a high-precision scalar `u ≥ 1` and the
/// integer prefix `Y` of y. `u` must carry relative error below
/// `2^{-(log2 u + fbits-margin)}` for the result to stay within guard.
pub fn frac_from_scalar_mul(
    u: &HPScalar,
    y_prefix: &Integer,
    fbits: u64,
    work_prec: u32,
) -> Result<HPScalar, NumError> {
    let y = HPScalar::from_float_with_err(
        HPScalar::from_dyadic(y_prefix.clone(), fbits)
            .to_float(u32::try_from(fbits).unwrap_or(u32::MAX).max(64)),
        Mag::two_pow(-i64::try_from(fbits).unwrap_or(i64::MAX)),
    );
    let mul_prec = u32::try_from(fbits)
        .unwrap_or(u32::MAX)
        .saturating_add(work_prec)
        .min(1 << 26);
    let z = u.mul(&y, mul_prec);
    let (_, fract) = z.floor_fract(mul_prec)?;
    Ok(fract)
}

// ---------------------------------------------------------------------------
// compiled targets: branchless fixed-point membership with certified fallback

/// One target interval pre-rounded to 96-bit fixed point. The brackets
/// `[lo_down, lo_up]` and `[hi_down, hi_up]` enclose the true endpoints.
#[derive(Clone, Debug)]
struct CompiledPiece {
    lo_down: u128,
    lo_up: u128,
    hi_down: u128,
    hi_up: u128,
    closed_lo: bool,
    closed_hi: bool,
}

#[derive(Clone, Debug)]
pub struct CompiledTarget {
    pieces: Vec<CompiledPiece>,
    source: IntervalUnion,
}

fn scalar_to_fixed_bracket(x: &HPScalar) -> (u128, u128) {
    if let Some(r) = x.as_exact() {
        let scaled = Rational::from(r << FRAC_SCALE_BITS);
        let floor = Rational::from(scaled.clone().floor());
        let center = floor.numer().to_i128().unwrap_or(0).clamp(0, 1 << 100) as u128;
        return if scaled == floor {
            (center, center)
        } else {
            (center, center + 1)
        };
    }
    let f = x.to_float(FRAC_SCALE_BITS + 32) << (FRAC_SCALE_BITS as i32);
    let center = f
        .to_integer()
        .and_then(|i| i.to_i128())
        .unwrap_or(0)
        .clamp(0, 1 << 100);
    let err = x.err_mag();
    // conversion rounding plus the tracked bound, over-estimated as 2^(e+1)
    let slack: i128 = {
        let e = i64::from(err.to_float(32).get_exp().unwrap_or(-200));
        let shifted = e + i64::from(FRAC_SCALE_BITS) + 1;
        if shifted >= 100 {
            1 << 100
        } else {
            (1i128 << shifted.max(1)) + 2
        }
    };
    let down = (center - slack).max(0) as u128;
    let up = (center + slack).min((1 << 100) - 1) as u128;
    (down, up)
}

impl CompiledTarget {
    pub fn new(source: IntervalUnion) -> CompiledTarget {
        let pieces = source
            .pieces()
            .iter()
            .map(|p| {
                let (lo_down, lo_up) = scalar_to_fixed_bracket(&p.lo);
                let (hi_down, hi_up) = scalar_to_fixed_bracket(&p.hi);
                CompiledPiece {
                    lo_down,
                    lo_up,
                    hi_down,
                    hi_up,
                    closed_lo: p.closed_lo,
                    closed_hi: p.closed_hi,
                }
            })
            .collect();
        CompiledTarget { pieces, source }
    }

    pub fn interval(&self) -> &IntervalUnion {
        &self.source
    }

    /// Certified membership of a fixed-point fraction. `Uncertain` means the
    /// fixed-point brackets could not decide; callers escalate to the exact
    /// scalar path before recording an index as uncertain.
    pub fn contains(&self, f: FixedFrac) -> Membership {
        // the true value lies in [lo_val, hi_val] (saturating add is safe:
        // values stay far below u128::MAX)
        let lo_val = f.v.saturating_sub(f.err);
        let hi_val = f.v.saturating_add(f.err);
        for p in &self.pieces {
            // certainly left of this piece; pieces are sorted
            if hi_val < p.lo_down {
                return Membership::NonMember;
            }
            // certainly right of this piece
            let past = if p.closed_hi {
                lo_val > p.hi_up
            } else {
                lo_val >= p.hi_up
            };
            if past {
                continue;
            }
            let ge_lo = if p.closed_lo {
                lo_val >= p.lo_up
            } else {
                lo_val > p.lo_up
            };
            let lt_hi = if p.closed_hi {
                hi_val <= p.hi_down
            } else {
                hi_val < p.hi_down
            };
            if ge_lo && lt_hi {
                return Membership::Member;
            }
            return Membership::Uncertain;
        }
        Membership::NonMember
    }
}

// ---------------------------------------------------------------------------
// scanners

enum ScanInner {
    /// α = 2^k geometric, stream y: {u_n y} reads bits at k·n.
    Pow2 { stream: BitStream, k: u32 },
    /// integer α geometric, stream y: W = α^n·Y mod 2^fbits.
    IntStep {
        alpha: u32,
        w: Integer,
        fbits: u64,
        cur_n: u64,
    },
    /// α = p/2^j geometric, stream y: W = p^n·Y mod 2^lbits and the binary
    /// point sits at n·j + fmax.
    RatPow2 {
        p: u32,
        j: u32,
        w: Integer,
        lbits: u64,
        fmax: u64,
        cur_n: u64,
    },
    /// u_n = n^m, stream y.
    Poly {
        m: u32,
        y_prefix: Integer,
        prefix_bits: u64,
    },
    /// general: certified u_n mantissa times y prefix.
    Real { y: FractionalOracle },
    /// exact rational y.
    RationalY { p: u64, q: u64 },
}

pub struct FracScanner {
    seq: GrowthSequence,
    inner: ScanInner,
    guard: u32,
    keep: u32,
    policy: PrecisionPolicy,
    n_max: u64,
}

impl FracScanner {
    /// Build a scanner able to evaluate `{u_n y}` for `n ≤ n_max`.
    pub fn new(
        y: &FractionalOracle,
        seq: &GrowthSequence,
        n_max: u64,
        policy: &PrecisionPolicy,
    ) -> Result<FracScanner, HitError> {
        y.validate()?;
        let guard = y.guard_bits;
        let keep = (guard + 16).min(FRAC_SCALE_BITS - 2);
        let inner = match (&seq.family, &y.kind) {
            (_, OracleKind::Rational { p, q }) => ScanInner::RationalY { p: *p, q: *q },
            (SeqFamily::Geometric { alpha }, OracleKind::Bitstream { seed }) => {
                let (p, q) = (alpha.0.numer().clone(), alpha.0.denom().clone());
                let stream = BitStream::new(*seed);
                if q == 1 && p.is_power_of_two() {
                    let k = p.significant_bits() - 1;
                    // highest bit index ever read
                    let top = u64::from(k) * n_max + u64::from(keep) + 64;
                    if top > y.bit_cap {
                        return Err(NumError::PrecisionBudget {
                            required_bits: top,
                            cap_bits: y.bit_cap,
                        }
                        .into());
                    }
                    ScanInner::Pow2 { stream, k }
                } else if q == 1 {
                    let alpha_small = p.to_u32().ok_or_else(|| {
                        SeqError::Validation("integer geometric ratio too large for stepping".into())
                    })?;
                    let fbits = (n_max as f64 * (alpha_small as f64).log2()).ceil() as u64
                        + u64::from(guard)
                        + 32;
                    if fbits > y.bit_cap {
                        return Err(NumError::PrecisionBudget {
                            required_bits: fbits,
                            cap_bits: y.bit_cap,
                        }
                        .into());
                    }
                    let w = stream.prefix_integer(fbits);
                    ScanInner::IntStep {
                        alpha: alpha_small,
                        w,
                        fbits,
                        cur_n: 0,
                    }
                } else if q.is_power_of_two() {
                    let j = q.significant_bits() - 1;
                    let p_small = p.to_u32().ok_or_else(|| {
                        SeqError::Validation("rational geometric numerator too large".into())
                    })?;
                    let fmax = (n_max as f64 * alpha.to_f64().log2()).ceil() as u64
                        + u64::from(guard)
                        + 32;
                    let lbits = n_max * u64::from(j) + fmax;
                    if lbits > y.bit_cap {
                        return Err(NumError::PrecisionBudget {
                            required_bits: lbits,
                            cap_bits: y.bit_cap,
                        }
                        .into());
                    }
                    let w = stream.prefix_integer(fmax);
                    ScanInner::RatPow2 {
                        p: p_small,
                        j,
                        w,
                        lbits,
                        fmax,
                        cur_n: 0,
                    }
                } else {
                    ScanInner::Real { y: y.clone() }
                }
            }
            (SeqFamily::Polynomial { m }, OracleKind::Bitstream { .. }) => {
                let prefix_bits =
                    u64::from(*m) * (64 - n_max.leading_zeros() as u64) + u64::from(guard) + 32;
                let y_prefix = y.prefix_integer(prefix_bits)?;
                ScanInner::Poly {
                    m: *m,
                    y_prefix,
                    prefix_bits,
                }
            }
            (_, OracleKind::Bitstream { .. }) => ScanInner::Real { y: y.clone() },
        };
        Ok(FracScanner {
            seq: seq.clone(),
            inner,
            guard,
            keep,
            policy: *policy,
            n_max,
        })
    }

    /// `{u_n y}` in fixed point. Stepping strategies require nondecreasing n.
    pub fn frac_fixed(&mut self, n: u64) -> Result<FixedFrac, HitError> {
        debug_assert!(n >= 1 && n <= self.n_max);
        let keep = self.keep;
        let guard = self.guard;
        match &mut self.inner {
            ScanInner::Pow2 { stream, k } => {
                let start = u64::from(*k) * n;
                let bits = read_bits_u128(stream, start, keep);
                Ok(FixedFrac {
                    v: bits << (FRAC_SCALE_BITS - keep),
                    err: 1 << (FRAC_SCALE_BITS - keep),
                })
            }
            ScanInner::IntStep {
                alpha,
                w,
                fbits,
                cur_n,
            } => {
                if n < *cur_n {
                    return Err(HitError::NonMonotonicAccess {
                        asked: n,
                        current: *cur_n,
                    });
                }
                while *cur_n < n {
                    *w *= *alpha;
                    w.keep_bits_mut(u32::try_from(*fbits).expect("fbits fits u32"));
                    *cur_n += 1;
                }
                Ok(fixed_from_low_bits(w, *fbits, keep, guard + 24))
            }
            ScanInner::RatPow2 {
                p,
                j,
                w,
                lbits,
                fmax,
                cur_n,
            } => {
                if n < *cur_n {
                    return Err(HitError::NonMonotonicAccess {
                        asked: n,
                        current: *cur_n,
                    });
                }
                while *cur_n < n {
                    *w *= *p;
                    w.keep_bits_mut(u32::try_from(*lbits).expect("lbits fits u32"));
                    *cur_n += 1;
                }
                let point = n * u64::from(*j) + *fmax;
                Ok(fixed_from_low_bits(w, point, keep, guard + 24))
            }
            ScanInner::Poly {
                m,
                y_prefix,
                prefix_bits,
            } => {
                let need = u64::from(*m) * (64 - n.leading_zeros() as u64) + u64::from(guard) + 32;
                let fbits = need.min(*prefix_bits);
                let y_cut = (y_prefix.clone() >> u32::try_from(*prefix_bits - fbits).unwrap())
                    .keep_bits(u32::try_from(fbits).unwrap());
                let mut u = Integer::from(n).pow(*m);
                u.keep_bits_mut(u32::try_from(fbits).unwrap());
                let mut prod = u * y_cut;
                prod.keep_bits_mut(u32::try_from(fbits).unwrap());
                Ok(fixed_from_low_bits(&prod, fbits, keep, guard + 24))
            }
            ScanInner::Real { y } => {
                let log2u = self.seq.log2_estimate(n).ceil().max(1.0);
                let fbits = log2u as u64 + u64::from(guard) + 32;
                let rel = u32::try_from(fbits).map_err(|_| NumError::PrecisionBudget {
                    required_bits: fbits,
                    cap_bits: self.policy.bit_cap,
                })?;
                let u = self.seq.value(n, rel, &self.policy)?;
                let y_prefix = y.prefix_integer(fbits)?;
                let fract = frac_from_scalar_mul(&u, &y_prefix, fbits, guard + 16)?;
                Ok(scalar_to_fixed(&fract))
            }
            ScanInner::RationalY { p, q } => {
                let fract = rational_frac(&self.seq, *p, *q, n, guard, &self.policy)?;
                Ok(scalar_to_fixed(&fract))
            }
        }
    }

    /// `{u_n y}` as a certified scalar with error at most `2^{-guard}`.
    pub fn frac_scalar(&mut self, n: u64) -> Result<HPScalar, HitError> {
        match &self.inner {
            ScanInner::RationalY { p, q } => {
                rational_frac(&self.seq, *p, *q, n, self.guard, &self.policy)
            }
            _ => Ok(self.frac_fixed(n)?.to_scalar()),
        }
    }
}

fn read_bits_u128(stream: &BitStream, start: u64, n: u32) -> u128 {
    if n <= 64 {
        u128::from(stream.bits_u64(start, n))
    } else {
        (u128::from(stream.bits_u64(start, 64)) << (n - 64))
            | u128::from(stream.bits_u64(start + 64, n - 64))
    }
}

fn scalar_to_fixed(x: &HPScalar) -> FixedFrac {
    let scale = HPScalar::from_rational(Rational::from(Integer::from(1) << FRAC_SCALE_BITS));
    let v = x
        .mul(&scale, FRAC_SCALE_BITS + 16)
        .to_float(FRAC_SCALE_BITS + 16)
        .to_integer()
        .and_then(|i| i.to_u128())
        .unwrap_or(0);
    let err = x.err_mag();
    let err_fixed = if err.is_zero() {
        2
    } else {
        let f = err.to_float(32);
        let e = f.get_exp().unwrap_or(0);
        if e + (FRAC_SCALE_BITS as i32) >= 120 {
            u128::MAX >> 8
        } else {
            (1u128 << (e + FRAC_SCALE_BITS as i32 + 1).max(1)) + 2
        }
    };
    FixedFrac { v, err: err_fixed }
}

/// Exact `{u_n y}` for rational y. Modular exponentiation keeps the integer
/// geometric path cheap at any index.
fn rational_frac(
    seq: &GrowthSequence,
    p: u64,
    q: u64,
    n: u64,
    guard: u32,
    policy: &PrecisionPolicy,
) -> Result<HPScalar, HitError> {
    if p == 0 {
        return Ok(HPScalar::zero());
    }
    let modulus = Integer::from(q);
    match &seq.family {
        SeqFamily::Geometric { alpha } if alpha.0.is_integer() => {
            // {α^n p/q} = (p·(α^n mod q)) mod q / q
            let a = alpha.0.numer().clone();
            let pw = a.pow_mod(&Integer::from(n), &modulus).expect("q ≥ 1");
            let num = (pw * p) % &modulus;
            Ok(HPScalar::from_rational(Rational::from((num, modulus))))
        }
        SeqFamily::Polynomial { m } => {
            let pw = Integer::from(n).pow_mod(&Integer::from(*m), &modulus).expect("q ≥ 1");
            let num = (pw * p) % &modulus;
            Ok(HPScalar::from_rational(Rational::from((num, modulus))))
        }
        _ => {
            let log2u = seq.log2_estimate(n).ceil().max(1.0);
            let rel = log2u as u32 + guard + 32;
            let u = seq.value(n, rel, policy)?;
            let y = HPScalar::from_rational(Rational::from((p, q)));
            let z = u.mul(&y, rel + 16);
            let (_, fract) = z.floor_fract(rel + 16)?;
            Ok(fract)
        }
    }
}

/// One-shot `{u_n y}` (the scanner is the bulk interface).
pub fn frac(
    y: &FractionalOracle,
    seq: &GrowthSequence,
    n: u64,
    policy: &PrecisionPolicy,
) -> Result<HPScalar, HitError> {
    FracScanner::new(y, seq, n, policy)?.frac_scalar(n)
}

// ---------------------------------------------------------------------------
// ensemble evaluation banks

/// Precomputed per-index state shared across a seed ensemble.
///
/// Sequences with cheap per-seed scanners (digit shifts, small-step walks,
/// polynomial products) evaluate directly; families that need a certified
/// high-precision mantissa per index (stretched exponents) compute those
/// mantissas once and share them read-only across every seed.
pub enum EvalBank {
    PerSeed,
    Mantissas { fbits: u64, values: Vec<HPScalar> },
}

impl EvalBank {
    /// Build for the given sorted index list.
    pub fn build(
        seq: &GrowthSequence,
        indices: &[u64],
        policy: &PrecisionPolicy,
    ) -> Result<EvalBank, HitError> {
        let cheap = matches!(
            &seq.family,
            SeqFamily::Polynomial { .. }
        ) || matches!(
            &seq.family,
            SeqFamily::Geometric { alpha }
                if alpha.0.denom() == &1u32 || alpha.0.denom().is_power_of_two()
        );
        if cheap || indices.is_empty() {
            return Ok(EvalBank::PerSeed);
        }
        let n_max = *indices.last().unwrap();
        let guard = policy.guard_bits;
        let fbits = seq.log2_estimate(n_max).ceil() as u64 + u64::from(guard) + 32;
        if fbits > policy.bit_cap {
            return Err(NumError::PrecisionBudget {
                required_bits: fbits,
                cap_bits: policy.bit_cap,
            }
            .into());
        }
        let seq_cl = seq.clone();
        let pol = *policy;
        let values = crate::par::par_map(indices.to_vec(), move |n| {
            let rel = seq_cl.log2_estimate(n).ceil() as u32 + guard + 32;
            seq_cl.value(n, rel, &pol)
        });
        let values: Result<Vec<HPScalar>, SeqError> = values.into_iter().collect();
        Ok(EvalBank::Mantissas {
            fbits,
            values: values?,
        })
    }
}

/// Membership of `{u_n y}` in the compiled targets at each index of an
/// ensemble member. `indices`, `targets`, and the bank line up positionally.
pub fn memberships_for_seed(
    y: &FractionalOracle,
    seq: &GrowthSequence,
    indices: &[u64],
    bank: &EvalBank,
    targets: &[CompiledTarget],
    policy: &PrecisionPolicy,
) -> Result<Vec<Membership>, HitError> {
    debug_assert_eq!(indices.len(), targets.len());
    let mut out = Vec::with_capacity(indices.len());
    match bank {
        EvalBank::PerSeed => {
            let n_max = indices.last().copied().unwrap_or(1);
            let mut scanner = FracScanner::new(y, seq, n_max, policy)?;
            for (&n, target) in indices.iter().zip(targets) {
                out.push(membership_at(target, &mut scanner, n)?);
            }
        }
        EvalBank::Mantissas { fbits, values } => {
            let y_prefix = y.prefix_integer(*fbits)?;
            for (u, target) in values.iter().zip(targets) {
                match frac_from_scalar_mul(u, &y_prefix, *fbits, policy.work_bits) {
                    Ok(fract) => {
                        let fixed = scalar_to_fixed(&fract);
                        let m = match target.contains(fixed) {
                            Membership::Uncertain => target.interval().contains(&fract),
                            decided => decided,
                        };
                        out.push(m);
                    }
                    Err(NumError::Uncertain(_)) => out.push(Membership::Uncertain),
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// hitting sets

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct HittingSet {
    pub horizon: u64,
    /// Members of Λ_y ∩ restrict, strictly increasing, all with definite
    /// membership verdicts.
    pub ns: Vec<u64>,
    /// Indices whose membership was undecidable at the oracle guard.
    pub uncertain: Vec<u64>,
}

impl HittingSet {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n\n");
        for n in &self.ns {
            s.push_str(&n.to_string());
            s.push('\n');
        }
        s
    }
}

/// Membership of `{u_n y}` in a compiled target: fixed point first, exact
/// scalar on bracket overlap. An index is uncertain only when the exact path
/// cannot decide it either.
pub fn membership_at(
    target: &CompiledTarget,
    scanner: &mut FracScanner,
    n: u64,
) -> Result<Membership, HitError> {
    match scanner.frac_fixed(n) {
        Ok(f) => match target.contains(f) {
            Membership::Uncertain => match scanner.frac_scalar(n) {
                Ok(x) => Ok(target.interval().contains(&x)),
                Err(HitError::Num(NumError::Uncertain(_))) => Ok(Membership::Uncertain),
                Err(e) => Err(e),
            },
            decided => Ok(decided),
        },
        Err(HitError::Num(NumError::Uncertain(_))) => Ok(Membership::Uncertain),
        Err(e) => Err(e),
    }
}

/// Enumerate `Λ_y ∩ restrict ∩ [1, n_max]`.
pub fn hitting_set(
    y: &FractionalOracle,
    seq: &GrowthSequence,
    scheme: &TargetScheme,
    n_max: u64,
    restrict: &IntegerSet,
    policy: &PrecisionPolicy,
) -> Result<HittingSet, HitError> {
    let mut scanner = FracScanner::new(y, seq, n_max, policy)?;
    let mut ns = Vec::new();
    let mut uncertain = Vec::new();
    let prec = policy.work_bits;
    let mut visit = |n: u64, scanner: &mut FracScanner| -> Result<(), HitError> {
        let target = CompiledTarget::new(scheme.interval(n, prec)?);
        match membership_at(&target, scanner, n)? {
            Membership::Member => ns.push(n),
            Membership::NonMember => {}
            Membership::Uncertain => uncertain.push(n),
        }
        Ok(())
    };
    match restrict {
        IntegerSet::All => {
            for n in 1..=n_max {
                visit(n, &mut scanner)?;
            }
        }
        other => {
            for n in other.members(n_max) {
                visit(n, &mut scanner)?;
            }
        }
    }
    Ok(HittingSet {
        horizon: n_max,
        ns,
        uncertain,
    })
}

// ---------------------------------------------------------------------------
// LLN counting ratios

#[derive(Clone, Debug, Serialize)]
pub struct CountingRow {
    pub n: u64,
    pub count: u64,
    pub uncertain: u64,
    /// count / N^{1-a}
    pub ratio_pow: f64,
    /// count / Σ_{n≤N} λ(I_n) — the law-of-large-numbers normalization
    pub ratio_sigma: f64,
}

/// Hit counts along a geometric horizon grid, under both normalizations:
/// the raw `N^{1-a}` denominator and the measure sum `Σ λ(I_n)` (whose ratio
/// tends to 1 almost surely).
pub fn counting_ratio(
    y: &FractionalOracle,
    seq: &GrowthSequence,
    scheme: &TargetScheme,
    grid: &[u64],
    policy: &PrecisionPolicy,
) -> Result<Vec<CountingRow>, HitError> {
    let n_max = grid.iter().copied().max().unwrap_or(0);
    let mut scanner = FracScanner::new(y, seq, n_max, policy)?;
    let one_minus_a = 1.0 - scheme.a.to_f64();
    let prec = policy.work_bits;

    let mut rows = Vec::with_capacity(grid.len());
    let mut sorted: Vec<u64> = grid.to_vec();
    sorted.sort_unstable();
    sorted.dedup();

    let mut count = 0u64;
    let mut uncertain = 0u64;
    let mut sigma_sum = 0f64;
    let mut n = 1u64;
    for &stop in &sorted {
        while n <= stop {
            let interval = scheme.interval(n, prec)?;
            sigma_sum += interval.measure().to_f64();
            let target = CompiledTarget::new(interval);
            match membership_at(&target, &mut scanner, n)? {
                Membership::Member => count += 1,
                Membership::NonMember => {}
                Membership::Uncertain => uncertain += 1,
            }
            n += 1;
        }
        rows.push(CountingRow {
            n: stop,
            count,
            uncertain,
            ratio_pow: count as f64 / (stop as f64).powf(one_minus_a),
            ratio_sigma: count as f64 / sigma_sum,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Dec;
    use std::cmp::Ordering;

    fn policy() -> PrecisionPolicy {
        PrecisionPolicy::default()
    }

    fn geo(alpha: &str) -> GrowthSequence {
        GrowthSequence::geometric(Dec::parse(alpha).unwrap())
    }

    #[test]
    fn frac_alternates_for_third() {
        // y = 1/3, u_n = 2^n: {2^n/3} alternates 2/3, 1/3, 2/3, ...
        let p = policy();
        let y = FractionalOracle::rational(1, 3, &p);
        let seq = geo("2");
        for n in 1..=6u64 {
            let f = frac(&y, &seq, n, &p).unwrap();
            let want = if n % 2 == 1 {
                Rational::from((2, 3))
            } else {
                Rational::from((1, 3))
            };
            assert_eq!(f.as_exact().unwrap(), &want, "n={n}");
        }
    }

    #[test]
    fn frac_zero_point_is_zero() {
        let p = policy();
        let y = FractionalOracle::rational(0, 1, &p);
        let seq = geo("2");
        for n in [1u64, 5, 40] {
            assert_eq!(frac(&y, &seq, n, &p).unwrap().as_exact().unwrap(), &Rational::new());
        }
    }

    #[test]
    fn bitstream_matches_reference_recomputation() {
        // u = 3^5 = 243: {243·y} against a 512-bit exact recomputation
        let p = policy();
        let y = FractionalOracle::bitstream(7, &p);
        let seq = geo("3");
        let f = frac(&y, &seq, 5, &p).unwrap();

        let bits = 512u64;
        let ybig = BitStream::new(7).prefix_integer(bits);
        let prod = ybig * 243u32;
        let fracbits = prod.keep_bits(u32::try_from(bits).unwrap());
        let reference = HPScalar::from_dyadic(fracbits, bits);
        let d = f.sub(&reference, 256).abs();
        let tol = HPScalar::from_rational(Rational::from((1, Integer::from(1) << 39)));
        assert_eq!(d.cmp_checked(&tol), Some(Ordering::Less), "d = {}", d.to_f64());
    }

    #[test]
    fn scanners_agree_across_strategies() {
        // α = 2 digit-shift vs the generic real path on the same stream
        let p = policy();
        let y = FractionalOracle::bitstream(11, &p);
        let shift_seq = geo("2");
        let mut fast = FracScanner::new(&y, &shift_seq, 64, &p).unwrap();
        for n in 1..=64u64 {
            let a = fast.frac_fixed(n).unwrap();
            let direct = frac_from_scalar_mul(
                &HPScalar::from_integer(Integer::from(1) << u32::try_from(n).unwrap()),
                &y.prefix_integer(n + 96).unwrap(),
                n + 96,
                64,
            )
            .unwrap();
            let d = a.to_scalar().sub(&direct, 256).abs();
            let tol = HPScalar::from_rational(Rational::from((1, Integer::from(1) << 39)));
            assert_eq!(d.cmp_checked(&tol), Some(Ordering::Less), "n={n}");
        }
    }

    #[test]
    fn rational_ratio_scanner_tracks_exact_products() {
        // α = 3/2: compare the stepping scanner against exact big-integer math
        let p = policy();
        let y = FractionalOracle::bitstream(23, &p);
        let seq = geo("3/2");
        let n_max = 200u64;
        let mut scan = FracScanner::new(&y, &seq, n_max, &p).unwrap();
        let fbits = 600u64;
        let ybig = y.prefix_integer(fbits).unwrap();
        for n in 1..=n_max {
            let got = scan.frac_fixed(n).unwrap();
            // exact: 3^n·Y / 2^{n+fbits} mod 1
            let prod = Integer::from(3).pow(u32::try_from(n).unwrap()) * &ybig;
            let point = n + fbits;
            let frac_bits = prod.keep_bits(u32::try_from(point).unwrap());
            let reference = HPScalar::from_dyadic(frac_bits, point);
            let d = got.to_scalar().sub(&reference, 700).abs();
            let tol = HPScalar::from_rational(Rational::from((1, Integer::from(1) << 39)));
            assert_eq!(d.cmp_checked(&tol), Some(Ordering::Less), "n={n}");
        }
    }

    #[test]
    fn hitting_set_full_target_at_n1() {
        // c·1^{-a} = 1: the n=1 target is the full circle, so 1 always hits
        let p = policy();
        let scheme: TargetScheme =
            serde_json::from_str(r#"{"a":0.3,"placement":"anchored","c":1}"#).unwrap();
        for seed in 0..5u64 {
            let y = FractionalOracle::bitstream(seed, &p);
            let h = hitting_set(&y, &geo("2"), &scheme, 5, &IntegerSet::All, &p).unwrap();
            assert!(h.ns.contains(&1), "seed {seed}");
        }
    }

    #[test]
    fn zero_point_hits_every_anchored_target() {
        let p = policy();
        let y = FractionalOracle::rational(0, 1, &p);
        let scheme: TargetScheme =
            serde_json::from_str(r#"{"a":0.3,"placement":"anchored","c":1}"#).unwrap();
        let h = hitting_set(&y, &geo("2"), &scheme, 200, &IntegerSet::All, &p).unwrap();
        assert_eq!(h.ns, (1..=200).collect::<Vec<_>>());
        assert!(h.uncertain.is_empty());
    }

    #[test]
    fn hitting_count_tracks_measure_sum() {
        // α=2, a=0.3, N=10^4: |Λ| within 15% of Σ λ(I_n)
        let p = policy();
        let scheme: TargetScheme =
            serde_json::from_str(r#"{"a":0.3,"placement":"anchored","c":1}"#).unwrap();
        let y = FractionalOracle::bitstream(1, &p);
        let rows = counting_ratio(&y, &geo("2"), &scheme, &[10_000], &p).unwrap();
        let r = rows.last().unwrap();
        assert_eq!(r.uncertain, 0);
        assert!(
            (r.ratio_sigma - 1.0).abs() < 0.15,
            "ratio_sigma {}",
            r.ratio_sigma
        );
        // raw power normalization approaches 1/(1-a) instead
        assert!((r.ratio_pow - 1.0 / 0.7).abs() < 0.2, "ratio_pow {}", r.ratio_pow);
    }

    #[test]
    fn prefix_and_restriction_coherence() {
        let p = policy();
        let scheme: TargetScheme =
            serde_json::from_str(r#"{"a":0.4,"placement":"anchored","c":1}"#).unwrap();
        let y = FractionalOracle::bitstream(9, &p);
        let seq = geo("2");

        let h_full = hitting_set(&y, &seq, &scheme, 2000, &IntegerSet::All, &p).unwrap();
        let h_short = hitting_set(&y, &seq, &scheme, 700, &IntegerSet::All, &p).unwrap();
        // prefix property
        let prefix: Vec<u64> = h_full.ns.iter().copied().filter(|&n| n <= 700).collect();
        assert_eq!(prefix, h_short.ns);

        // restriction coherence on the squares
        let squares = IntegerSet::Power { d: 2 };
        let h_sq = hitting_set(&y, &seq, &scheme, 2000, &squares, &p).unwrap();
        let expect: Vec<u64> = h_full
            .ns
            .iter()
            .copied()
            .filter(|&n| {
                let r = (n as f64).sqrt().round() as u64;
                r * r == n
            })
            .collect();
        assert_eq!(h_sq.ns, expect);

        // determinism: bit-identical repeat
        let again = hitting_set(&y, &seq, &scheme, 2000, &IntegerSet::All, &p).unwrap();
        assert_eq!(again, h_full);
    }
}
