//! Exact measures of torus preimages and their correlations.
//!
//! For a target `I` and scale `u ≥ 1`, the preimage
//! `u⁻¹(I) = {x ∈ [0,1] : {u·x} ∈ I}` decomposes into `⌊u⌋+1` scaled copies
//! of `I`. Two independent exact algorithms compute joint measures of such
//! preimages: an endpoint sweep over materialized pieces, and a
//! period-counting walk that never materializes the finer preimage and so
//! scales to enormous `u_m`. A seeded Monte Carlo estimator provides a third,
//! statistical route.

use crate::hitting::{frac_from_scalar_mul, CompiledTarget, FixedFrac};
use crate::scalar::{HPScalar, NumError, PrecisionPolicy};
use crate::seeding::{sub_seed, BitStream};
use crate::sequences::{GrowthSequence, SeqError, TargetScheme};
use crate::torus::{CircleInterval, IntervalUnion, Membership};
use rug::{Integer, Rational};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use thiserror::Error;

pub const DEFAULT_PIECE_BUDGET: u64 = 10_000_000;

#[derive(Error, Debug, Clone)]
pub enum MeasError {
    #[error("{0}")]
    Num(#[from] NumError),
    #[error("{0}")]
    Seq(#[from] SeqError),
    #[error("piece budget exceeded: preimage needs {needed} pieces, budget {budget}")]
    Budget { needed: u64, budget: u64 },
}

/// A joint correlation case: strictly increasing indices (k ≤ 4) evaluated
/// under one sequence and target scheme.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    pub indices: Vec<u64>,
    pub u: GrowthSequence,
    pub target: TargetScheme,
}

impl JointSpec {
    pub fn validate(&self) -> Result<(), SeqError> {
        self.u.validate()?;
        self.target.validate()?;
        if self.indices.is_empty() || self.indices.len() > 4 {
            return Err(SeqError::Validation("indices must have 1..=4 entries".into()));
        }
        for w in self.indices.windows(2) {
            if w[1] <= w[0] {
                return Err(SeqError::Validation(
                    "indices must be strictly increasing".into(),
                ));
            }
        }
        if self.indices[0] < 1 {
            return Err(SeqError::Validation("indices must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct McEstimate {
    pub samples: u64,
    pub hits: u64,
    pub uncertain: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Exact value, optional Monte Carlo cross-check, and the corresponding
/// structural bound (stated without its absolute constant).
#[derive(Clone, Debug, Serialize)]
pub struct CorrelationReport {
    pub indices: Vec<u64>,
    #[serde(serialize_with = "ser_scalar")]
    pub exact: Option<HPScalar>,
    /// exact joint measure λ(⋂ preimages) — what the Monte Carlo column
    /// estimates
    pub joint: Option<f64>,
    pub mc: Option<McEstimate>,
    pub paper_bound: f64,
    /// |exact| / paper_bound
    pub ratio: f64,
}

fn ser_scalar<S: serde::Serializer>(v: &Option<HPScalar>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) => s.serialize_some(&x.to_decimal_string(40)),
        None => s.serialize_none(),
    }
}

/// Evaluation context: one sequence + target scheme + precision/budget.
pub struct MeasureCtx<'a> {
    pub seq: &'a GrowthSequence,
    pub scheme: &'a TargetScheme,
    pub policy: &'a PrecisionPolicy,
    pub piece_budget: u64,
}

impl<'a> MeasureCtx<'a> {
    pub fn new(
        seq: &'a GrowthSequence,
        scheme: &'a TargetScheme,
        policy: &'a PrecisionPolicy,
    ) -> Self {
        MeasureCtx {
            seq,
            scheme,
            policy,
            piece_budget: DEFAULT_PIECE_BUDGET,
        }
    }

    fn work(&self) -> u32 {
        self.policy.work_bits
    }

    /// `u_n` at a precision that keeps downstream endpoint errors below the
    /// working resolution.
    pub fn u_value(&self, n: u64) -> Result<HPScalar, MeasError> {
        let rel = self.work() + self.seq.log2_estimate(n).ceil() as u32 + 16;
        Ok(self.seq.value(n, rel, self.policy)?)
    }

    pub fn target(&self, n: u64) -> Result<IntervalUnion, MeasError> {
        Ok(self.scheme.interval(n, self.work())?)
    }
}

/// `u⁻¹(I)` as an explicit interval union: `⋃_{k=0}^{⌊u⌋} (k + I)/u ∩ [0,1]`.
pub fn preimage(
    u: &HPScalar,
    target: &IntervalUnion,
    prec: u32,
    piece_budget: u64,
) -> Result<IntervalUnion, MeasError> {
    let (floor_u, _) = u.floor_fract(prec)?;
    let floor_u_u64 = floor_u.to_u64().ok_or(MeasError::Budget {
        needed: u64::MAX,
        budget: piece_budget,
    })?;
    let needed = (floor_u_u64 + 1) * target.piece_count().max(1) as u64;
    if needed > piece_budget {
        return Err(MeasError::Budget {
            needed,
            budget: piece_budget,
        });
    }
    let one = HPScalar::one();
    let mut pieces = Vec::with_capacity(needed as usize);
    for k in 0..=floor_u_u64 {
        let k_s = HPScalar::from_u64(k);
        for p in target.pieces() {
            let lo = k_s.add(&p.lo, prec).div(u, prec)?;
            if lo.cmp_certain(&one, "preimage clamp")? != Ordering::Less {
                continue;
            }
            let hi_raw = k_s.add(&p.hi, prec).div(u, prec)?;
            let (hi, closed_hi) = match hi_raw.cmp_certain(&one, "preimage clamp")? {
                Ordering::Greater => (one.clone(), false),
                _ => (hi_raw, p.closed_hi),
            };
            pieces.push(CircleInterval::with_flags(lo, hi, p.closed_lo, closed_hi));
        }
    }
    Ok(IntervalUnion::from_sorted(pieces, prec)?)
}

/// `σ = λ(u⁻¹(I))` in closed form:
/// `(⌊u⌋·λ(I) + λ(I ∩ [0,{u}]))/u`. O(ℓ), exact, any magnitude of `u`.
pub fn sigma_closed_form(
    u: &HPScalar,
    target: &IntervalUnion,
    prec: u32,
) -> Result<HPScalar, MeasError> {
    let lam = target.measure();
    match u.floor_fract(prec) {
        Ok((floor_u, fract_u)) => {
            let head = HPScalar::from_integer(floor_u).mul(lam, prec);
            let part = target.measure_below(&fract_u, prec)?;
            Ok(head.add(&part, prec).div(u, prec)?)
        }
        Err(NumError::Uncertain(_)) => {
            // u too large to floor at this precision: σ ∈ λ·[1-1/u, 1+1/u]
            let rel = lam.div(u, prec)?;
            let widened = HPScalar::from_float_with_err(
                lam.to_float(prec),
                lam.err_mag().add(rel.err_mag()).add(crate::mag::Mag::from_float_upper(&rel.to_float(64))),
            );
            Ok(widened)
        }
        Err(e) => Err(e.into()),
    }
}

/// Exact joint measure `λ(⋂ u_{n_i}⁻¹(I_{n_i}))` by materialized sweep.
pub fn joint_measure_sweep(ctx: &MeasureCtx, indices: &[u64]) -> Result<HPScalar, MeasError> {
    let prec = ctx.work();
    let mut acc: Option<IntervalUnion> = None;
    for &n in indices {
        let u = ctx.u_value(n)?;
        let pre = preimage(&u, &ctx.target(n)?, prec, ctx.piece_budget)?;
        acc = Some(match acc {
            None => pre,
            Some(cur) => cur.intersect(&pre, prec)?,
        });
    }
    Ok(acc.map_or_else(HPScalar::one, |u| u.measure().clone()))
}

/// Exact `λ(u_n⁻¹(I_n) ∩ u_m⁻¹(I_m))` for `n < m` by counting full
/// `1/u_m`-periods inside each piece of `u_n⁻¹(I_n)` and resolving the two
/// boundary partials through prefix measures of `I_m`. O(u_n·ℓ), independent
/// of `u_m`.
pub fn joint_measure_periods(ctx: &MeasureCtx, n: u64, m: u64) -> Result<HPScalar, MeasError> {
    assert!(n < m, "period counting requires n < m");
    let prec = ctx.work();
    let u_n = ctx.u_value(n)?;
    let u_m = ctx.u_value(m)?;
    // precision for positions s = A·u_m: absolute error must stay far below
    // 1/u_m after scaling by u_m
    let scale_bits = ctx.seq.log2_estimate(m).ceil() as u32 + 16;
    let pos_prec = prec + scale_bits;

    let coarse = preimage(&u_n, &ctx.target(n)?, pos_prec, ctx.piece_budget)?;
    let fine_target = ctx.target(m)?;
    let lam_m = fine_target.measure().clone();

    let mut total = HPScalar::zero();
    for piece in coarse.pieces() {
        let s = piece.lo.mul(&u_m, pos_prec);
        let e = piece.hi.mul(&u_m, pos_prec);
        let (s_floor, s_frac) = s.floor_fract(pos_prec)?;
        let (e_floor, e_frac) = e.floor_fract(pos_prec)?;
        let contribution = if s_floor == e_floor {
            // both ends inside one period
            let hi = fine_target.measure_below(&e_frac, prec)?;
            let lo = fine_target.measure_below(&s_frac, prec)?;
            hi.sub(&lo, prec)
        } else {
            let head = lam_m.sub(&fine_target.measure_below(&s_frac, prec)?, prec);
            let full_periods = Integer::from(&e_floor - &s_floor) - 1u32;
            let body = HPScalar::from_integer(full_periods).mul(&lam_m, prec);
            let tail = fine_target.measure_below(&e_frac, prec)?;
            head.add(&body, prec).add(&tail, prec)
        };
        total = total.add(&contribution, prec);
    }
    total.div(&u_m, prec).map_err(Into::into)
}

/// `σ_n = λ(u_n⁻¹(I_n))`.
pub fn sigma(ctx: &MeasureCtx, n: u64) -> Result<HPScalar, MeasError> {
    let u = ctx.u_value(n)?;
    sigma_closed_form(&u, &ctx.target(n)?, ctx.work())
}

/// Structural covariance bound `m^{-a}(u_n/u_m + 1/u_n)`, sans constant.
pub fn cov_bound(ctx: &MeasureCtx, n: u64, m: u64) -> Result<f64, MeasError> {
    let prec = ctx.work();
    let u_n = ctx.u_value(n)?;
    let u_m = ctx.u_value(m)?;
    let ma = HPScalar::from_u64(m)
        .pow_rational(&Rational::from(-ctx.scheme.a.0.clone()), prec)?;
    let v = u_n
        .div(&u_m, prec)?
        .add(&u_n.recip(prec)?, prec)
        .mul(&ma, prec);
    Ok(v.to_f64())
}

/// Covariance `Cov(X_n, X_m) = λ(joint) − σ_n·σ_m` with the paper-shaped
/// bound, computed by period counting.
pub fn cov(ctx: &MeasureCtx, n: u64, m: u64) -> Result<CorrelationReport, MeasError> {
    assert!(n < m, "covariance requires n < m");
    let prec = ctx.work();
    let joint = joint_measure_periods(ctx, n, m)?;
    let s_n = sigma(ctx, n)?;
    let s_m = sigma(ctx, m)?;
    let exact = joint.sub(&s_n.mul(&s_m, prec), prec);
    let bound = cov_bound(ctx, n, m)?;
    Ok(CorrelationReport {
        indices: vec![n, m],
        ratio: exact.to_f64().abs() / bound,
        exact: Some(exact),
        joint: Some(joint.to_f64()),
        mc: None,
        paper_bound: bound,
    })
}

/// Bernoulli variance `σ_n(1−σ_n)`.
pub fn variance(ctx: &MeasureCtx, n: u64) -> Result<HPScalar, MeasError> {
    let s = sigma(ctx, n)?;
    let prec = ctx.work();
    Ok(s.mul(&HPScalar::one().sub(&s, prec), prec))
}

/// Structural four-fold bound
/// `n3^{-a}·n2^{-a}·(1/u1 + u1/u2 + u2/u3) + n3^{-a}·(u3/u4)·(n1^{-a} + 1/u1 + u2/u3)`.
pub fn fourfold_bound(ctx: &MeasureCtx, idx: [u64; 4]) -> Result<f64, MeasError> {
    let prec = ctx.work();
    let [n1, n2, n3, n4] = idx;
    let u: Vec<HPScalar> = idx
        .iter()
        .map(|&n| ctx.u_value(n))
        .collect::<Result<_, _>>()?;
    let neg_a = Rational::from(-ctx.scheme.a.0.clone());
    let pow = |n: u64| HPScalar::from_u64(n).pow_rational(&neg_a, prec);
    let (g1, g2, g3) = (pow(n1)?, pow(n2)?, pow(n3)?);
    let _ = n4;
    let term1 = u[0]
        .recip(prec)?
        .add(&u[0].div(&u[1], prec)?, prec)
        .add(&u[1].div(&u[2], prec)?, prec)
        .mul(&g2, prec)
        .mul(&g3, prec);
    let term2 = g1
        .add(&u[0].recip(prec)?, prec)
        .add(&u[1].div(&u[2], prec)?, prec)
        .mul(&u[2].div(&u[3], prec)?, prec)
        .mul(&g3, prec);
    Ok(term1.add(&term2, prec).to_f64())
}

/// `E(Y₁Y₂Y₃Y₄)` by inclusion–exclusion over the 2⁴ subset joint measures:
/// `Σ_S (−1)^{4−|S|} λ(⋂_{i∈S} pre_i) ∏_{i∉S} σ_i`.
pub fn fourfold(ctx: &MeasureCtx, idx: [u64; 4]) -> Result<CorrelationReport, MeasError> {
    assert!(idx.windows(2).all(|w| w[0] < w[1]), "indices must increase");
    let prec = ctx.work();
    let bound = fourfold_bound(ctx, idx)?;

    // preimages once, then subset intersections along the bitmask lattice
    let mut pres: Vec<IntervalUnion> = Vec::with_capacity(4);
    for &n in &idx {
        let u = ctx.u_value(n)?;
        match preimage(&u, &ctx.target(n)?, prec, ctx.piece_budget) {
            Ok(p) => pres.push(p),
            Err(MeasError::Budget { .. }) => {
                // budget exceeded: Monte Carlo fallback
                let mc = mc_joint(ctx, &idx, 200_000, sub_seed(0xF0F0, "fourfold-mc", idx[3]))?;
                return Ok(CorrelationReport {
                    indices: idx.to_vec(),
                    exact: None,
                    joint: None,
                    ratio: f64::NAN,
                    mc: Some(mc),
                    paper_bound: bound,
                });
            }
            Err(e) => return Err(e),
        }
    }
    let sigmas: Vec<HPScalar> = idx
        .iter()
        .map(|&n| sigma(ctx, n))
        .collect::<Result<_, _>>()?;

    let mut inter: Vec<Option<IntervalUnion>> = vec![None; 16];
    let mut measures: Vec<HPScalar> = vec![HPScalar::one(); 16];
    for mask in 1usize..16 {
        let low = mask.trailing_zeros() as usize;
        let rest = mask & (mask - 1);
        let joined = if rest == 0 {
            pres[low].clone()
        } else {
            inter[rest]
                .as_ref()
                .expect("filled in mask order")
                .intersect(&pres[low], prec)?
        };
        measures[mask] = joined.measure().clone();
        inter[mask] = Some(joined);
    }

    let mut exact = HPScalar::zero();
    for mask in 0usize..16 {
        let mut term = measures[mask].clone();
        for i in 0..4 {
            if mask & (1 << i) == 0 {
                term = term.mul(&sigmas[i], prec);
            }
        }
        let sign_negative = (4 - mask.count_ones() as usize) % 2 == 1;
        exact = if sign_negative {
            exact.sub(&term, prec)
        } else {
            exact.add(&term, prec)
        };
    }
    Ok(CorrelationReport {
        indices: idx.to_vec(),
        ratio: exact.to_f64().abs() / bound,
        exact: Some(exact),
        joint: Some(measures[15].to_f64()),
        mc: None,
        paper_bound: bound,
    })
}

/// Seeded Monte Carlo estimate of the joint measure with a Wilson 95% CI.
pub fn mc_joint(
    ctx: &MeasureCtx,
    indices: &[u64],
    samples: u64,
    seed: u64,
) -> Result<McEstimate, MeasError> {
    let prec = ctx.work();
    let guard = ctx.policy.guard_bits;
    let us: Vec<HPScalar> = indices
        .iter()
        .map(|&n| ctx.u_value(n))
        .collect::<Result<_, _>>()?;
    let targets: Vec<CompiledTarget> = indices
        .iter()
        .map(|&n| ctx.target(n).map(CompiledTarget::new))
        .collect::<Result<_, _>>()?;
    let max_log2u = indices
        .iter()
        .map(|&n| ctx.seq.log2_estimate(n))
        .fold(1f64, f64::max)
        .ceil() as u64;
    let fbits = max_log2u + u64::from(guard) + 32;

    // integer fast path: all u exact integers small enough for u128 products
    let int_us: Option<Vec<u128>> = us
        .iter()
        .map(|u| {
            u.as_exact()
                .filter(|r| r.is_integer())
                .and_then(|r| r.numer().to_u128())
                .filter(|&v| v.leading_zeros() as u64 + 1 >= 128 - fbits.min(96))
        })
        .collect();

    let mut hits = 0u64;
    let mut uncertain = 0u64;
    for j in 0..samples {
        let stream = BitStream::new(sub_seed(seed, "mc-y", j));
        let mut all_in = true;
        let mut any_uncertain = false;
        match (&int_us, fbits <= 96) {
            (Some(ints), true) => {
                let y = stream
                    .prefix_integer(fbits)
                    .to_u128()
                    .expect("fbits ≤ 96 fits");
                for (u, t) in ints.iter().zip(&targets) {
                    let prod = u.wrapping_mul(y);
                    let fract = if fbits == 96 {
                        prod & ((1u128 << 96) - 1)
                    } else {
                        (prod & ((1u128 << fbits) - 1)) << (96 - fbits as u32)
                    };
                    let f = FixedFrac {
                        v: fract,
                        err: 1u128 << (96 - (guard + 24).min(95)),
                    };
                    match t.contains(f) {
                        Membership::Member => {}
                        Membership::NonMember => {
                            all_in = false;
                            break;
                        }
                        Membership::Uncertain => {
                            any_uncertain = true;
                            break;
                        }
                    }
                }
            }
            _ => {
                let y_int = stream.prefix_integer(fbits);
                for (u, t) in us.iter().zip(&targets) {
                    let f = frac_from_scalar_mul(u, &y_int, fbits, prec)?;
                    match t.interval().contains(&f) {
                        Membership::Member => {}
                        Membership::NonMember => {
                            all_in = false;
                            break;
                        }
                        Membership::Uncertain => {
                            any_uncertain = true;
                            break;
                        }
                    }
                }
            }
        }
        if any_uncertain {
            uncertain += 1;
        } else if all_in {
            hits += 1;
        }
    }
    let counted = samples - uncertain;
    let p_hat = hits as f64 / counted.max(1) as f64;
    let (ci_lo, ci_hi) = wilson_ci(hits, counted);
    Ok(McEstimate {
        samples,
        hits,
        uncertain,
        p_hat,
        ci_lo,
        ci_hi,
    })
}

/// Wilson 95% score interval.
pub fn wilson_ci(hits: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959963984540054f64;
    let n_f = n as f64;
    let p = hits as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Dec;
    use crate::scalar::rational_from_decimal;

    fn policy() -> PrecisionPolicy {
        PrecisionPolicy::default()
    }

    fn dec(s: &str) -> HPScalar {
        HPScalar::from_rational(rational_from_decimal(s).unwrap())
    }

    fn anchored(a: &str) -> TargetScheme {
        TargetScheme::anchored(Dec::parse(a).unwrap())
    }

    fn interval(lo: &str, hi: &str) -> IntervalUnion {
        IntervalUnion::normalize(
            vec![CircleInterval::half_open(dec(lo), dec(hi))],
            128,
        )
        .unwrap()
    }

    #[test]
    fn preimage_basic_shapes() {
        // u=2, I=[0,1/2): [0,1/4) ∪ [1/2,3/4)
        let pre = preimage(&dec("2"), &interval("0", "0.5"), 128, 1 << 20).unwrap();
        assert_eq!(pre.piece_count(), 2);
        assert_eq!(
            pre.measure().as_exact().unwrap(),
            &Rational::from((1, 2))
        );
        assert_eq!(
            pre.pieces()[1].lo.as_exact().unwrap(),
            &Rational::from((1, 2))
        );

        // u=1: identity
        let i = interval("0.3", "0.55");
        let pre = preimage(&dec("1"), &i, 128, 1 << 20).unwrap();
        assert_eq!(pre.piece_count(), 1);
        assert_eq!(
            pre.measure().as_exact().unwrap(),
            &Rational::from((1, 4))
        );
    }

    #[test]
    fn preimage_measure_sits_in_sigma_bracket() {
        // u = 37.5, I=[0.1,0.3): measure within [0.2 - 0.2/37.5, 0.2 + 0.2/37.5]
        let u = dec("37.5");
        let i = interval("0.1", "0.3");
        let pre = preimage(&u, &i, 128, 1 << 20).unwrap();
        let sigma = pre.measure();
        let lo = dec("0.2").sub(&dec("0.2").div(&u, 128).unwrap(), 128);
        let hi = dec("0.2").add(&dec("0.2").div(&u, 128).unwrap(), 128);
        assert_eq!(sigma.cmp_checked(&lo), Some(Ordering::Greater));
        assert_eq!(sigma.cmp_checked(&hi), Some(Ordering::Less));
        // closed form agrees exactly
        let cf = sigma_closed_form(&u, &i, 128).unwrap();
        assert_eq!(cf.cmp_checked(sigma), Some(Ordering::Equal));
    }

    #[test]
    fn budget_is_enforced() {
        let r = preimage(&dec("100000"), &interval("0", "0.5"), 128, 1000);
        assert!(matches!(r, Err(MeasError::Budget { .. })));
    }

    #[test]
    fn periods_equals_sweep_on_random_grid() {
        // the strongest internal oracle: two independent exact algorithms
        let p = policy();
        let seq = GrowthSequence::geometric(Dec::parse("2").unwrap());
        for (case, (n, m, a)) in [(1u64, 5u64, "0.3"), (2, 9, "0.5"), (3, 11, "0.2"), (1, 12, "0.7")]
            .iter()
            .enumerate()
        {
            let scheme = anchored(a);
            let ctx = MeasureCtx::new(&seq, &scheme, &p);
            let sweep = joint_measure_sweep(&ctx, &[*n, *m]).unwrap();
            let periods = joint_measure_periods(&ctx, *n, *m).unwrap();
            let d = sweep.sub(&periods, 128).abs();
            assert_eq!(
                d.cmp_checked(&dec("1e-25")),
                Some(Ordering::Less),
                "case {case}: sweep {} periods {}",
                sweep.to_f64(),
                periods.to_f64()
            );
        }
    }

    #[test]
    fn periods_full_targets_give_one() {
        // full circles: joint measure 1 (u=2 vs u=4, a→0 via n0)
        let p = policy();
        let seq = GrowthSequence::geometric(Dec::parse("2").unwrap());
        let mut scheme = anchored("0.5");
        scheme.n0 = 100; // below n0 every target is the full circle
        let ctx = MeasureCtx::new(&seq, &scheme, &p);
        let v = joint_measure_periods(&ctx, 1, 2).unwrap();
        assert_eq!(v.cmp_checked(&HPScalar::one()), Some(Ordering::Equal));
    }

    #[test]
    fn sigma_bracket_on_seeded_cases() {
        // |σ − λ(I)| ≤ λ(I)/u with λ(I) = n^{-a}
        for seed in 0..60u64 {
            let s = BitStream::new(seed);
            let u_bits = s.bits_u64(0, 40);
            let u = HPScalar::from_rational(
                Rational::from(1) + Rational::from((u_bits, 1u64 << 40)) * Rational::from(99_999),
            );
            let n = 1 + s.bits_u64(64, 12);
            let a_num = 15 + s.bits_u64(128, 6) % 70; // a ∈ [0.15, 0.84]
            let scheme: TargetScheme = serde_json::from_str(&format!(
                r#"{{"a":0.{a_num:02},"placement":"anchored","c":1}}"#
            ))
            .unwrap();
            let target = scheme.interval(n, 128).unwrap();
            let sig = sigma_closed_form(&u, &target, 128).unwrap();
            let lam = target.measure();
            let slack = lam.div(&u, 128).unwrap();
            let lo = lam.sub(&slack, 128);
            let hi = lam.add(&slack, 128);
            assert_ne!(sig.cmp_checked(&lo), Some(Ordering::Less), "seed {seed}");
            assert_ne!(sig.cmp_checked(&hi), Some(Ordering::Greater), "seed {seed}");
        }
    }

    #[test]
    fn fourfold_trivial_zero_on_full_targets() {
        // all four targets full circle: Y ≡ 0 so the correlation vanishes
        let p = policy();
        let seq = GrowthSequence::geometric(Dec::parse("2").unwrap());
        let mut scheme = anchored("0.3");
        scheme.n0 = 100;
        let ctx = MeasureCtx::new(&seq, &scheme, &p);
        let r = fourfold(&ctx, [1, 2, 3, 4]).unwrap();
        let e = r.exact.unwrap();
        assert_eq!(e.cmp_checked(&HPScalar::zero()), Some(Ordering::Equal));
    }

    #[test]
    fn fourfold_inclusion_exclusion_consistency() {
        // E(∏ X_i) recovered from E(∏ Y_i) and the σ's must match the direct
        // four-way joint measure
        let p = policy();
        let seq = GrowthSequence::geometric(Dec::parse("2").unwrap());
        let scheme = anchored("0.3");
        let ctx = MeasureCtx::new(&seq, &scheme, &p);
        let idx = [1u64, 3, 5, 7];
        let r = fourfold(&ctx, idx).unwrap();
        let direct = joint_measure_sweep(&ctx, &idx).unwrap();

        // expand E(∏(Y_i + σ_i)) = Σ_S E(∏_{i∈S} Y_i) ∏_{i∉S} σ_i; verify the
        // k=4 term closes the identity within error bounds
        let sigmas: Vec<HPScalar> = idx.iter().map(|&n| sigma(&ctx, n).unwrap()).collect();
        let mut recovered = r.exact.unwrap();
        // add back all lower-order terms
        for mask in 0usize..15 {
            let sub: Vec<u64> = (0..4).filter(|i| mask & (1 << i) != 0).map(|i| idx[i]).collect();
            let joint = if sub.is_empty() {
                HPScalar::one()
            } else {
                joint_measure_sweep(&ctx, &sub).unwrap()
            };
            // E(∏_{i∈S} X_i) ∏_{i∉S} σ_i  with inclusion–exclusion signs folded
            // into the direct identity: E(∏X) = Σ_S E(∏_S Y)·∏σ; lower terms are
            // joint measures over S expanded recursively. Simplest closed check:
            // E(∏X) − Σ_{S≠full} E_Y(S)·∏σ = E_Y(full), rearranged below.
            let mut term = expectation_of_y_subset(&ctx, &sub).unwrap();
            for i in 0..4 {
                if mask & (1 << i) == 0 {
                    term = term.mul(&sigmas[i], 128);
                }
            }
            let _ = joint;
            recovered = recovered.add(&term, 128);
        }
        let d = recovered.sub(&direct, 128).abs();
        assert_eq!(
            d.cmp_checked(&dec("1e-20")),
            Some(Ordering::Less),
            "recovered {} direct {}",
            recovered.to_f64(),
            direct.to_f64()
        );
    }

    fn expectation_of_y_subset(ctx: &MeasureCtx, sub: &[u64]) -> Result<HPScalar, MeasError> {
        // E(∏_{i∈S} Y_i) by inclusion–exclusion over subsets of S
        let k = sub.len();
        let sigmas: Vec<HPScalar> = sub
            .iter()
            .map(|&n| sigma(ctx, n))
            .collect::<Result<_, _>>()?;
        let mut acc = HPScalar::zero();
        for mask in 0usize..(1 << k) {
            let members: Vec<u64> = (0..k).filter(|i| mask & (1 << i) != 0).map(|i| sub[i]).collect();
            let mut term = if members.is_empty() {
                HPScalar::one()
            } else {
                joint_measure_sweep(ctx, &members)?
            };
            for i in 0..k {
                if mask & (1 << i) == 0 {
                    term = term.mul(&sigmas[i], 128);
                }
            }
            if (k - mask.count_ones() as usize) % 2 == 1 {
                acc = acc.sub(&term, 128);
            } else {
                acc = acc.add(&term, 128);
            }
        }
        Ok(acc)
    }

    #[test]
    fn mc_full_circle_and_known_half() {
        let p = policy();
        let seq = GrowthSequence::geometric(Dec::parse("2").unwrap());
        let mut full = anchored("0.3");
        full.n0 = 10;
        let ctx = MeasureCtx::new(&seq, &full, &p);
        let est = mc_joint(&ctx, &[1, 2], 2_000, 42).unwrap();
        assert_eq!(est.hits, 2_000);

        // k=1, u=2, I=[0,1/2): CI contains 0.5
        let half = anchored("0.5");
        let ctx = MeasureCtx::new(&seq, &half, &p);
        let est = mc_joint(&ctx, &[4], 100_000, 7).unwrap();
        assert!(est.ci_lo <= 0.5 && 0.5 <= est.ci_hi, "{est:?}");
        assert_eq!(est.uncertain, 0);
    }

    #[test]
    fn mc_ci_covers_exact_measure_statistically() {
        // k=2 seeded cases: CI must contain the sweep value in ≥ 90% of runs
        let p = policy();
        let seq = GrowthSequence::geometric(Dec::parse("2").unwrap());
        let scheme = anchored("0.4");
        let ctx = MeasureCtx::new(&seq, &scheme, &p);
        let exact = joint_measure_sweep(&ctx, &[2, 6]).unwrap().to_f64();
        let mut covered = 0;
        let reps = 40;
        for rep in 0..reps {
            let est = mc_joint(&ctx, &[2, 6], 20_000, 1000 + rep).unwrap();
            if est.ci_lo <= exact && exact <= est.ci_hi {
                covered += 1;
            }
        }
        assert!(covered * 100 >= reps * 90, "covered {covered}/{reps}");
    }
}
