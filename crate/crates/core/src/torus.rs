//! Finite unions of subintervals of the unit circle `[0,1)` with certified
//! measures.
//!
//! Pieces are half-open `[lo, hi)` by default; closed flags exist so targets
//! may include endpoints (the symmetric target includes 0). All set
//! operations are exact up to the tracked scalar error bounds, and any
//! comparison the bounds cannot decide surfaces as an error instead of a
//! silent misclassification.

use crate::scalar::{HPScalar, NumError};
use serde_json::json;
use std::cmp::Ordering;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Membership {
    Member,
    NonMember,
    Uncertain,
}

#[derive(Clone, Debug)]
pub struct CircleInterval {
    pub lo: HPScalar,
    pub hi: HPScalar,
    pub closed_lo: bool,
    pub closed_hi: bool,
}

impl CircleInterval {
    /// The default piece shape `[lo, hi)`.
    pub fn half_open(lo: HPScalar, hi: HPScalar) -> Self {
        CircleInterval {
            lo,
            hi,
            closed_lo: true,
            closed_hi: false,
        }
    }

    pub fn with_flags(lo: HPScalar, hi: HPScalar, closed_lo: bool, closed_hi: bool) -> Self {
        CircleInterval {
            lo,
            hi,
            closed_lo,
            closed_hi,
        }
    }

    pub fn length(&self, prec: u32) -> HPScalar {
        self.hi.sub(&self.lo, prec)
    }
}

#[derive(Clone, Debug)]
pub struct IntervalUnion {
    pieces: Vec<CircleInterval>,
    measure: HPScalar,
}

impl IntervalUnion {
    pub fn empty() -> Self {
        IntervalUnion {
            pieces: Vec::new(),
            measure: HPScalar::zero(),
        }
    }

    pub fn full() -> Self {
        IntervalUnion {
            pieces: vec![CircleInterval::half_open(HPScalar::zero(), HPScalar::one())],
            measure: HPScalar::one(),
        }
    }

    pub fn pieces(&self) -> &[CircleInterval] {
        &self.pieces
    }

    pub fn piece_count(&self) -> usize {
        self.pieces.len()
    }

    pub fn measure(&self) -> &HPScalar {
        &self.measure
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Wrap raw pieces mod 1, sort, merge overlaps, recompute the measure.
    ///
    /// Raw endpoints may lie in `[-1, 2]`. Pieces whose endpoint order or
    /// wrap position cannot be decided at the current error bounds are
    /// rejected. Zero-length pieces are dropped.
    pub fn normalize(raw: Vec<CircleInterval>, prec: u32) -> Result<Self, NumError> {
        let zero = HPScalar::zero();
        let one = HPScalar::one();
        let mut wrapped: Vec<CircleInterval> = Vec::with_capacity(raw.len());
        for p in raw {
            match p.lo.cmp_certain(&p.hi, "interval endpoint order")? {
                Ordering::Greater => {
                    return Err(NumError::Uncertain(
                        "normalize: piece with lo > hi".into(),
                    ))
                }
                Ordering::Equal => continue, // zero-length
                Ordering::Less => {}
            }
            let len = p.hi.sub(&p.lo, prec);
            if len.cmp_certain(&one, "piece length vs full circle")? != Ordering::Less {
                return Ok(IntervalUnion::full());
            }
            // shift lo into [0,1)
            let shift: i64 = match p.lo.cmp_certain(&zero, "wrap position")? {
                Ordering::Less => 1,
                _ => match p.lo.cmp_certain(&one, "wrap position")? {
                    Ordering::Less => 0,
                    _ => -1,
                },
            };
            let lo = p.lo.add(&HPScalar::from_i64(shift), prec);
            let hi = p.hi.add(&HPScalar::from_i64(shift), prec);
            if hi.cmp_certain(&one, "wrap split")? == Ordering::Greater {
                let hi2 = hi.sub(&one, prec);
                wrapped.push(CircleInterval::with_flags(
                    lo,
                    one.clone(),
                    p.closed_lo,
                    false,
                ));
                wrapped.push(CircleInterval::with_flags(zero.clone(), hi2, true, p.closed_hi));
            } else {
                wrapped.push(CircleInterval::with_flags(lo, hi, p.closed_lo, p.closed_hi));
            }
        }
        let sorted = sort_certified(wrapped)?;
        Self::from_sorted(sorted, prec)
    }

    /// Build from pieces already sorted by `lo`, merging overlaps and
    /// adjacencies.
    pub fn from_sorted(sorted: Vec<CircleInterval>, prec: u32) -> Result<Self, NumError> {
        let mut merged: Vec<CircleInterval> = Vec::with_capacity(sorted.len());
        for p in sorted {
            if p.lo.cmp_certain(&p.hi, "piece order")? != Ordering::Less {
                continue;
            }
            match merged.last_mut() {
                None => merged.push(p),
                Some(last) => {
                    let joins = match last.hi.cmp_certain(&p.lo, "merge adjacency")? {
                        Ordering::Greater => true,
                        Ordering::Equal => last.closed_hi || p.closed_lo,
                        Ordering::Less => false,
                    };
                    if joins {
                        match last.hi.cmp_certain(&p.hi, "merge extent")? {
                            Ordering::Less => {
                                last.hi = p.hi;
                                last.closed_hi = p.closed_hi;
                            }
                            Ordering::Equal => last.closed_hi |= p.closed_hi,
                            Ordering::Greater => {}
                        }
                    } else {
                        merged.push(p);
                    }
                }
            }
        }
        let mut measure = HPScalar::zero();
        for p in &merged {
            measure = measure.add(&p.length(prec), prec);
        }
        Ok(IntervalUnion {
            pieces: merged,
            measure,
        })
    }

    /// Exact set intersection by a linear sweep over both sorted piece
    /// lists. Piece count of the result is at most `|A| + |B|`.
    pub fn intersect(&self, other: &IntervalUnion, prec: u32) -> Result<IntervalUnion, NumError> {
        let mut out: Vec<CircleInterval> = Vec::new();
        let (mut i, mut j) = (0usize, 0usize);
        while i < self.pieces.len() && j < other.pieces.len() {
            let a = &self.pieces[i];
            let b = &other.pieces[j];
            let (lo, closed_lo) = match a.lo.cmp_certain(&b.lo, "intersect lower")? {
                Ordering::Greater => (a.lo.clone(), a.closed_lo),
                Ordering::Less => (b.lo.clone(), b.closed_lo),
                Ordering::Equal => (a.lo.clone(), a.closed_lo && b.closed_lo),
            };
            let hi_cmp = a.hi.cmp_certain(&b.hi, "intersect upper")?;
            let (hi, closed_hi) = match hi_cmp {
                Ordering::Less => (a.hi.clone(), a.closed_hi),
                Ordering::Greater => (b.hi.clone(), b.closed_hi),
                Ordering::Equal => (a.hi.clone(), a.closed_hi && b.closed_hi),
            };
            if lo.cmp_certain(&hi, "intersect extent")? == Ordering::Less {
                out.push(CircleInterval::with_flags(lo, hi, closed_lo, closed_hi));
            }
            match hi_cmp {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    i += 1;
                    j += 1;
                }
            }
        }
        IntervalUnion::from_sorted(out, prec)
    }

    /// Complement within `[0,1)`.
    pub fn complement(&self, prec: u32) -> Result<IntervalUnion, NumError> {
        let one = HPScalar::one();
        if self.pieces.is_empty() {
            return Ok(IntervalUnion::full());
        }
        let mut gaps: Vec<CircleInterval> = Vec::with_capacity(self.pieces.len() + 1);
        let first = &self.pieces[0];
        if HPScalar::zero().cmp_certain(&first.lo, "complement head")? == Ordering::Less {
            gaps.push(CircleInterval::with_flags(
                HPScalar::zero(),
                first.lo.clone(),
                true,
                !first.closed_lo,
            ));
        }
        for w in self.pieces.windows(2) {
            gaps.push(CircleInterval::with_flags(
                w[0].hi.clone(),
                w[1].lo.clone(),
                !w[0].closed_hi,
                !w[1].closed_lo,
            ));
        }
        let last = self.pieces.last().unwrap();
        if last.hi.cmp_certain(&one, "complement tail")? == Ordering::Less {
            gaps.push(CircleInterval::with_flags(
                last.hi.clone(),
                one,
                !last.closed_hi,
                false,
            ));
        }
        let mut out = IntervalUnion::from_sorted(gaps, prec)?;
        // tighter than the summed gap lengths when the input measure is exact
        out.measure = HPScalar::one().sub(&self.measure, prec);
        Ok(out)
    }

    /// Three-valued membership honoring the closed flags.
    pub fn contains(&self, x: &HPScalar) -> Membership {
        for p in &self.pieces {
            let lo_cmp = match x.cmp_checked(&p.lo) {
                Some(o) => o,
                None => return Membership::Uncertain,
            };
            if lo_cmp == Ordering::Less {
                // sorted pieces: later pieces start even higher
                return Membership::NonMember;
            }
            if lo_cmp == Ordering::Equal {
                if p.closed_lo {
                    return Membership::Member;
                }
                // on the open lower endpoint: not in this piece; a previous
                // piece would already have claimed x
                return Membership::NonMember;
            }
            let hi_cmp = match x.cmp_checked(&p.hi) {
                Some(o) => o,
                None => return Membership::Uncertain,
            };
            match hi_cmp {
                Ordering::Less => return Membership::Member,
                Ordering::Equal => {
                    if p.closed_hi {
                        return Membership::Member;
                    }
                    // x == hi, half-open: might still equal the next lo
                }
                Ordering::Greater => {}
            }
        }
        Membership::NonMember
    }

    /// Measure of `self ∩ [0, t)`.
    pub fn measure_below(&self, t: &HPScalar, prec: u32) -> Result<HPScalar, NumError> {
        let mut acc = HPScalar::zero();
        for p in &self.pieces {
            match t.cmp_certain(&p.lo, "prefix measure")? {
                Ordering::Less | Ordering::Equal => break,
                Ordering::Greater => {}
            }
            match t.cmp_certain(&p.hi, "prefix measure")? {
                Ordering::Less => {
                    acc = acc.add(&t.sub(&p.lo, prec), prec);
                    break;
                }
                _ => {
                    acc = acc.add(&p.length(prec), prec);
                }
            }
        }
        Ok(acc)
    }

    /// JSON form: pieces with decimal-string endpoints, plus measure and its
    /// error bound.
    pub fn to_json(&self, digits: usize) -> serde_json::Value {
        json!({
            "pieces": self.pieces.iter().map(|p| json!({
                "lo": p.lo.to_decimal_string(digits),
                "hi": p.hi.to_decimal_string(digits),
                "closed_lo": p.closed_lo,
                "closed_hi": p.closed_hi,
            })).collect::<Vec<_>>(),
            "measure": self.measure.to_decimal_string(digits),
            "err": self.measure.err_mag().to_decimal_string(),
        })
    }
}

/// Stable merge sort by lower endpoint with certified comparisons.
fn sort_certified(mut v: Vec<CircleInterval>) -> Result<Vec<CircleInterval>, NumError> {
    let n = v.len();
    if n <= 1 {
        return Ok(v);
    }
    let rest = v.split_off(n / 2);
    let left = sort_certified(v)?;
    let right = sort_certified(rest)?;
    let mut out = Vec::with_capacity(n);
    let (mut i, mut j) = (0usize, 0usize);
    while i < left.len() && j < right.len() {
        match left[i].lo.cmp_certain(&right[j].lo, "sort order")? {
            Ordering::Greater => {
                out.push(right[j].clone());
                j += 1;
            }
            _ => {
                out.push(left[i].clone());
                i += 1;
            }
        }
    }
    out.extend_from_slice(&left[i..]);
    out.extend_from_slice(&right[j..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rational_from_decimal;
    use crate::seeding::BitStream;
    use rug::Rational;

    const P: u32 = 128;

    fn dec(s: &str) -> HPScalar {
        HPScalar::from_rational(rational_from_decimal(s).unwrap())
    }

    fn ho(lo: &str, hi: &str) -> CircleInterval {
        CircleInterval::half_open(dec(lo), dec(hi))
    }

    fn measure_f64(u: &IntervalUnion) -> f64 {
        u.measure().to_f64()
    }

    #[test]
    fn overlapping_pieces_merge() {
        let u = IntervalUnion::normalize(vec![ho("0.2", "0.5"), ho("0.4", "0.7")], P).unwrap();
        assert_eq!(u.piece_count(), 1);
        assert_eq!(
            u.measure().as_exact().unwrap(),
            &rational_from_decimal("0.5").unwrap()
        );
    }

    #[test]
    fn wrap_around_splits() {
        let u = IntervalUnion::normalize(vec![ho("0.9", "1.3")], P).unwrap();
        assert_eq!(u.piece_count(), 2);
        assert_eq!(
            u.measure().as_exact().unwrap(),
            &rational_from_decimal("0.4").unwrap()
        );
        assert_eq!(u.pieces()[0].lo.as_exact().unwrap(), &Rational::new());
        assert_eq!(
            u.pieces()[0].hi.as_exact().unwrap(),
            &rational_from_decimal("0.3").unwrap()
        );
    }

    #[test]
    fn intersection_examples() {
        let a = IntervalUnion::normalize(vec![ho("0", "0.5")], P).unwrap();
        let b = IntervalUnion::normalize(vec![ho("0.25", "0.75")], P).unwrap();
        let i = a.intersect(&b, P).unwrap();
        assert_eq!(i.piece_count(), 1);
        assert_eq!(
            i.measure().as_exact().unwrap(),
            &rational_from_decimal("0.25").unwrap()
        );

        let c = a.complement(P).unwrap();
        let empty = a.intersect(&c, P).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.measure().as_exact().unwrap(), &Rational::new());
    }

    #[test]
    fn complement_examples() {
        let none = IntervalUnion::empty();
        let full = none.complement(P).unwrap();
        assert_eq!(full.measure().as_exact().unwrap(), &Rational::from(1));

        let a = IntervalUnion::normalize(vec![ho("0.25", "0.5")], P).unwrap();
        let c = a.complement(P).unwrap();
        assert_eq!(c.piece_count(), 2);
        assert_eq!(
            c.measure().as_exact().unwrap(),
            &rational_from_decimal("0.75").unwrap()
        );
    }

    #[test]
    fn membership_honors_flags() {
        let a = IntervalUnion::normalize(vec![ho("0", "0.1")], P).unwrap();
        assert_eq!(a.contains(&dec("0")), Membership::Member);
        assert_eq!(a.contains(&dec("0.1")), Membership::NonMember);
        assert_eq!(a.contains(&dec("0.05")), Membership::Member);

        // a fuzzy point within err of the upper endpoint must be uncertain
        let fuzzy = HPScalar::from_float_with_err(
            rug::Float::with_val(64, 0.1001),
            crate::mag::Mag::two_pow(-10),
        );
        assert_eq!(a.contains(&fuzzy), Membership::Uncertain);
    }

    fn random_union(seed: u64, pieces: usize) -> IntervalUnion {
        let s = BitStream::new(seed);
        let mut raw = Vec::new();
        for i in 0..pieces {
            let lo_bits = s.bits_u64(128 * i as u64, 32);
            let len_bits = s.bits_u64(128 * i as u64 + 64, 32);
            let lo = Rational::from((lo_bits, 1u64 << 32));
            // lengths up to 1/8 keep unions non-degenerate
            let len = Rational::from((len_bits, 8 * (1u64 << 32)));
            raw.push(CircleInterval::half_open(
                HPScalar::from_rational(lo.clone()),
                HPScalar::from_rational(lo + len),
            ));
        }
        IntervalUnion::normalize(raw, P).unwrap()
    }

    /// Uniform-grid membership count oracle.
    fn grid_count(u: &IntervalUnion, g: u64) -> u64 {
        let mut hits = 0;
        for j in 0..g {
            let x = HPScalar::from_rational(Rational::from((j, g)));
            if u.contains(&x) == Membership::Member {
                hits += 1;
            }
        }
        hits
    }

    #[test]
    fn normalize_measure_matches_grid_oracle() {
        // seeded random raw pieces; grid-count oracle within pieces/G (+ err)
        let g = 20_000u64;
        for seed in 0..12u64 {
            let u = random_union(seed, 40);
            let hits = grid_count(&u, g);
            let diff = (measure_f64(&u) - hits as f64 / g as f64).abs();
            let slack = u.piece_count() as f64 / g as f64 + 1e-12;
            assert!(diff <= slack, "seed {seed}: diff {diff} > slack {slack}");
        }
    }

    #[test]
    fn intersect_measure_matches_grid_oracle() {
        let g = 20_000u64;
        for seed in 0..8u64 {
            let a = random_union(3 * seed + 1, 25);
            let b = random_union(3 * seed + 2, 25);
            let i = a.intersect(&b, P).unwrap();
            let hits = grid_count(&i, g);
            let diff = (measure_f64(&i) - hits as f64 / g as f64).abs();
            let slack = (i.piece_count() as f64 + 1.0) / g as f64 + 1e-12;
            assert!(diff <= slack, "seed {seed}: diff {diff} > slack {slack}");
        }
    }

    #[test]
    fn complement_roundtrip_and_inclusion_exclusion() {
        for seed in 0..8u64 {
            let a = random_union(seed + 100, 30);
            let b = random_union(seed + 200, 30);

            // complement(complement(a)) == a
            let cc = a.complement(P).unwrap().complement(P).unwrap();
            assert_eq!(cc.piece_count(), a.piece_count());
            for (p, q) in a.pieces().iter().zip(cc.pieces()) {
                assert_eq!(p.lo.cmp_checked(&q.lo), Some(Ordering::Equal));
                assert_eq!(p.hi.cmp_checked(&q.hi), Some(Ordering::Equal));
            }

            // measure(A∩B) + measure(A∪B) = measure(A) + measure(B),
            // with A∪B = complement(complement(A) ∩ complement(B))
            let ca = a.complement(P).unwrap();
            let cb = b.complement(P).unwrap();
            let union = ca.intersect(&cb, P).unwrap().complement(P).unwrap();
            let inter = a.intersect(&b, P).unwrap();
            let lhs = inter.measure().add(union.measure(), P);
            let rhs = a.measure().add(b.measure(), P);
            let d = lhs.sub(&rhs, P).abs();
            assert!(d.cmp_checked(&dec("1e-30")) == Some(Ordering::Less));
        }
    }

    #[test]
    fn measure_below_prefix_queries() {
        let u = IntervalUnion::normalize(vec![ho("0.1", "0.2"), ho("0.5", "0.8")], P).unwrap();
        let q = |t: &str| u.measure_below(&dec(t), P).unwrap();
        assert_eq!(q("0.05").as_exact().unwrap(), &Rational::new());
        assert_eq!(
            q("0.15").as_exact().unwrap(),
            &rational_from_decimal("0.05").unwrap()
        );
        assert_eq!(
            q("0.4").as_exact().unwrap(),
            &rational_from_decimal("0.1").unwrap()
        );
        assert_eq!(
            q("0.6").as_exact().unwrap(),
            &rational_from_decimal("0.2").unwrap()
        );
        assert_eq!(
            q("0.95").as_exact().unwrap(),
            &rational_from_decimal("0.4").unwrap()
        );
    }

    #[test]
    fn json_shape() {
        let u = IntervalUnion::normalize(vec![ho("0.25", "0.5")], P).unwrap();
        let v = u.to_json(40);
        assert_eq!(v["pieces"].as_array().unwrap().len(), 1);
        assert!(v["measure"].as_str().unwrap().starts_with("2.5"));
        assert_eq!(v["err"].as_str().unwrap(), "0");
    }
}
