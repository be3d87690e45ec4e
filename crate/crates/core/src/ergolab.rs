//! A zoo of measure-preserving systems with analytically known conditional
//! expectations, Birkhoff and hitting-time-subsequence ergodic averages, and
//! the V′ autocorrelation statistic.
//!
//! Every system iterates in closed form: rotations evaluate `{x + kθ}`
//! directly from the base point (no error accumulation along the orbit),
//! ×p maps use modular exponentiation for rational points and digit shifts
//! or a low-bits walk for binary-expansion points.

use crate::dimlab::{build_sigma_bank, build_target_bank};
use crate::hitting::{memberships_for_seed, EvalBank, FractionalOracle, HitError};
use crate::params::Dec;
use crate::scalar::{HPScalar, NumError, PrecisionPolicy};
use crate::seeding::{sub_seed, BitStream};
use crate::sequences::{GrowthSequence, SeqError, TargetScheme};
use crate::torus::{IntervalUnion, Membership};
use rug::{Integer, Rational};
use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Error, Debug, Clone)]
pub enum ErgoError {
    #[error("{0}")]
    Num(#[from] NumError),
    #[error("{0}")]
    Seq(#[from] SeqError),
    #[error("{0}")]
    Hit(#[from] HitError),
    #[error("{0}")]
    Dim(#[from] crate::dimlab::DimError),
    #[error("point/system mismatch: {0}")]
    PointMismatch(&'static str),
    #[error("iterating ×p at exponent {exponent} needs {required_bits} bits of the point, cap is {cap_bits}")]
    ExponentBudget {
        exponent: u64,
        required_bits: u64,
        cap_bits: u64,
    },
}

// ---------------------------------------------------------------------------
// angles and systems

/// A rotation angle: exact rational, a named irrational, a seeded binary
/// expansion, or the marker `"y"` (resolved per ensemble member to that
/// member's own hitting point — the rotation obstruction).
#[derive(Clone, Debug, PartialEq)]
pub enum Angle {
    Rational(Dec),
    /// (√5 − 1)/2
    Golden,
    /// binary expansion of a seeded stream
    StreamSeed(u64),
    /// placeholder: the driver substitutes the run's own y
    OracleY,
}

impl Angle {
    pub fn scalar(&self, prec: u32) -> HPScalar {
        match self {
            Angle::Rational(d) => d.scalar(),
            Angle::Golden => {
                let r5 = HPScalar::from_u64(5).sqrt(prec).expect("5 ≥ 0");
                r5.sub(&HPScalar::one(), prec)
                    .div(&HPScalar::from_u64(2), prec)
                    .expect("2 ≠ 0")
            }
            Angle::StreamSeed(seed) => {
                let v = BitStream::new(*seed).prefix_integer(u64::from(prec));
                HPScalar::from_float_with_err(
                    HPScalar::from_dyadic(v, u64::from(prec)).to_float(prec.max(64)),
                    crate::mag::Mag::two_pow(-i64::from(prec)),
                )
            }
            Angle::OracleY => panic!("Angle::OracleY must be resolved by the experiment driver"),
        }
    }

    pub fn is_irrational(&self) -> bool {
        matches!(self, Angle::Golden | Angle::StreamSeed(_) | Angle::OracleY)
    }
}

impl Serialize for Angle {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Angle::Golden => s.serialize_str("golden"),
            Angle::OracleY => s.serialize_str("y"),
            Angle::StreamSeed(seed) => s.serialize_str(&format!("stream:{seed}")),
            Angle::Rational(d) => d.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Angle {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(serde_json::Number),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Text(t) if t == "golden" => Ok(Angle::Golden),
            Raw::Text(t) if t == "y" => Ok(Angle::OracleY),
            Raw::Text(t) => {
                if let Some(seed) = t.strip_prefix("stream:") {
                    let seed: u64 = seed.parse().map_err(DeError::custom)?;
                    return Ok(Angle::StreamSeed(seed));
                }
                Dec::parse(&t).map(Angle::Rational).map_err(DeError::custom)
            }
            Raw::Num(n) => Dec::parse(&n.to_string())
                .map(Angle::Rational)
                .map_err(DeError::custom),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    Identity,
    Cyclic { k: u64 },
    Rotation { theta: Angle },
    TimesP { p: u32 },
    DisjointUnion { thetas: (Angle, Angle), weights: (Dec, Dec) },
}

impl SystemSpec {
    pub fn validate(&self) -> Result<(), SeqError> {
        match self {
            SystemSpec::Cyclic { k } if *k < 1 => {
                Err(SeqError::Validation("system.k must be ≥ 1".into()))
            }
            SystemSpec::TimesP { p } if *p < 2 => {
                Err(SeqError::Validation("system.p must be ≥ 2".into()))
            }
            SystemSpec::DisjointUnion { weights, .. } => {
                let sum = Rational::from(&weights.0 .0 + &weights.1 .0);
                if weights.0 .0 <= 0 || weights.1 .0 <= 0 || sum != 1 {
                    return Err(SeqError::Validation(
                        "system.weights must be positive and sum to 1".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Whether subsequence averages converge to the global mean (true) or
    /// only to the conditional expectation on finer invariants (false).
    pub fn is_ergodic(&self) -> bool {
        match self {
            SystemSpec::Identity => false,
            SystemSpec::Cyclic { .. } => true,
            SystemSpec::Rotation { theta } => theta.is_irrational(),
            SystemSpec::TimesP { .. } => true,
            SystemSpec::DisjointUnion { .. } => false,
        }
    }
}

// ---------------------------------------------------------------------------
// points

#[derive(Clone, Debug)]
pub enum CirclePoint {
    Rational(Rational),
    /// binary expansion from a seeded stream, pre-shifted by `shift` bits:
    /// the value is `{2^shift · y}`
    Stream { stream: BitStream, shift: u64 },
    /// a certified scalar in [0,1)
    Scalar(HPScalar),
}

impl CirclePoint {
    pub fn rational(p: u64, q: u64) -> Self {
        CirclePoint::Rational(Rational::from((p, q)))
    }

    pub fn stream(seed: u64) -> Self {
        CirclePoint::Stream {
            stream: BitStream::new(seed),
            shift: 0,
        }
    }

    pub fn to_scalar(&self, prec: u32) -> HPScalar {
        match self {
            CirclePoint::Rational(r) => HPScalar::from_rational(r.clone()),
            CirclePoint::Scalar(s) => s.clone(),
            CirclePoint::Stream { stream, shift } => {
                // low `prec` bits of the first shift+prec stream bits:
                // floor({2^shift y} · 2^prec)
                let v = stream.prefix_integer(shift + u64::from(prec)).keep_bits(prec);
                HPScalar::from_float_with_err(
                    HPScalar::from_dyadic(v, u64::from(prec)).to_float(prec.max(64)),
                    crate::mag::Mag::two_pow(-i64::from(prec)),
                )
            }
        }
    }

    pub fn approx_f64(&self) -> f64 {
        self.to_scalar(64).to_f64()
    }
}

#[derive(Clone, Debug)]
pub enum Point {
    Circle(CirclePoint),
    Index(u64),
    Component(u8, CirclePoint),
}

impl Point {
    fn circle(&self) -> Result<&CirclePoint, ErgoError> {
        match self {
            Point::Circle(c) => Ok(c),
            _ => Err(ErgoError::PointMismatch("expected a circle point")),
        }
    }
}

// ---------------------------------------------------------------------------
// iteration

/// `T^k x` in closed form.
pub fn apply_power(
    sys: &SystemSpec,
    k: u64,
    x: &Point,
    policy: &PrecisionPolicy,
) -> Result<Point, ErgoError> {
    match sys {
        SystemSpec::Identity => Ok(x.clone()),
        SystemSpec::Cyclic { k: order } => match x {
            Point::Index(i) => Ok(Point::Index((i + k % order) % order)),
            _ => Err(ErgoError::PointMismatch("cyclic system needs an index point")),
        },
        SystemSpec::Rotation { theta } => {
            let c = x.circle()?;
            Ok(Point::Circle(rotate(c, theta, k, policy)?))
        }
        SystemSpec::TimesP { p } => {
            let c = x.circle()?;
            Ok(Point::Circle(times_p_power(c, *p, k, policy)?))
        }
        SystemSpec::DisjointUnion { thetas, .. } => match x {
            Point::Component(which, c) => {
                let theta = if *which == 0 { &thetas.0 } else { &thetas.1 };
                Ok(Point::Component(*which, rotate(c, theta, k, policy)?))
            }
            _ => Err(ErgoError::PointMismatch("union system needs a component point")),
        },
    }
}

fn rotate(
    x: &CirclePoint,
    theta: &Angle,
    k: u64,
    policy: &PrecisionPolicy,
) -> Result<CirclePoint, ErgoError> {
    if let (CirclePoint::Rational(r), Angle::Rational(t)) = (x, theta) {
        let moved = Rational::from(r + Rational::from(&t.0 * Integer::from(k)));
        let fract = Rational::from(&moved - Rational::from(moved.clone().floor()));
        return Ok(CirclePoint::Rational(fract));
    }
    // {x + kθ} from the base point at guard precision
    let prec = policy.work_bits + 64 - k.leading_zeros();
    let kt = theta.scalar(prec).mul(&HPScalar::from_u64(k), prec);
    let sum = x.to_scalar(prec).add(&kt, prec);
    let (_, fract) = sum.floor_fract(prec)?;
    Ok(CirclePoint::Scalar(fract))
}

fn times_p_power(
    x: &CirclePoint,
    p: u32,
    k: u64,
    policy: &PrecisionPolicy,
) -> Result<CirclePoint, ErgoError> {
    match x {
        CirclePoint::Rational(r) => {
            // {p^k r/s} = ((r · p^k mod s)) / s
            let s = r.denom().clone();
            let pw = Integer::from(p)
                .pow_mod(&Integer::from(k), &s)
                .expect("s ≥ 1");
            let num = (pw * r.numer()) % &s;
            Ok(CirclePoint::Rational(Rational::from((num, s))))
        }
        CirclePoint::Stream { stream, shift } => {
            if p.is_power_of_two() {
                let j = u64::from(p.trailing_zeros());
                let new_shift = shift + j * k;
                if new_shift + u64::from(policy.guard_bits) + 64 > policy.bit_cap {
                    return Err(ErgoError::ExponentBudget {
                        exponent: k,
                        required_bits: new_shift + u64::from(policy.guard_bits) + 64,
                        cap_bits: policy.bit_cap,
                    });
                }
                Ok(CirclePoint::Stream {
                    stream: *stream,
                    shift: new_shift,
                })
            } else {
                // p^k · x on the low bits; budgeted by the exponent
                let fbits = (k as f64 * f64::from(p).log2()).ceil() as u64
                    + u64::from(policy.guard_bits)
                    + u64::from(*shift != 0) * shift
                    + 32;
                if fbits > policy.bit_cap {
                    return Err(ErgoError::ExponentBudget {
                        exponent: k,
                        required_bits: fbits,
                        cap_bits: policy.bit_cap,
                    });
                }
                let modulus = Integer::from(1) << u32::try_from(fbits).unwrap();
                let pw = Integer::from(p)
                    .pow_mod(&Integer::from(k), &modulus)
                    .expect("modulus ≥ 1");
                let y = stream.prefix_integer(shift + fbits).keep_bits(
                    u32::try_from(fbits).unwrap(),
                );
                let mut w = pw * y;
                w.keep_bits_mut(u32::try_from(fbits).unwrap());
                let guard = policy.guard_bits;
                let keep = (guard + 16).min(90);
                let top = w >> u32::try_from(fbits - u64::from(keep)).unwrap();
                let v = HPScalar::from_dyadic(top, u64::from(keep));
                Ok(CirclePoint::Scalar(HPScalar::from_float_with_err(
                    v.to_float(96),
                    crate::mag::Mag::two_pow(-i64::from(guard + 14)),
                )))
            }
        }
        CirclePoint::Scalar(_) => Err(ErgoError::PointMismatch(
            "×p needs a rational or binary-expansion point",
        )),
    }
}

// ---------------------------------------------------------------------------
// observables

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Observable {
    /// `mean + Σ_j (cos_j·cos(2πjx) + sin_j·sin(2πjx))`, j starting at 1.
    Trig {
        #[serde(default)]
        mean: Option<Dec>,
        #[serde(default)]
        cos: Vec<Dec>,
        #[serde(default)]
        sin: Vec<Dec>,
    },
    /// Indicator of a union of circle intervals (half-open pieces).
    Indicator { pieces: Vec<(Dec, Dec)> },
    /// Values on the finite space of a cyclic system.
    Tabulated { values: Vec<Dec> },
    /// Constant per component of a disjoint union.
    PerComponent { first: Dec, second: Dec },
}

impl Observable {
    pub fn indicator_union(&self, prec: u32) -> Result<Option<IntervalUnion>, ErgoError> {
        if let Observable::Indicator { pieces } = self {
            let raw = pieces
                .iter()
                .map(|(lo, hi)| {
                    crate::torus::CircleInterval::half_open(lo.scalar(), hi.scalar())
                })
                .collect();
            Ok(Some(IntervalUnion::normalize(raw, prec)?))
        } else {
            Ok(None)
        }
    }

    pub fn eval(&self, x: &Point, prec: u32) -> Result<f64, ErgoError> {
        match (self, x) {
            (Observable::Tabulated { values }, Point::Index(i)) => values
                .get(*i as usize)
                .map(|d| d.to_f64())
                .ok_or(ErgoError::PointMismatch("tabulated index out of range")),
            (Observable::PerComponent { first, second }, Point::Component(which, _)) => {
                Ok(if *which == 0 { first.to_f64() } else { second.to_f64() })
            }
            (Observable::Trig { mean, cos, sin }, p) => {
                let xf = match p {
                    Point::Circle(c) => c.approx_f64(),
                    Point::Component(_, c) => c.approx_f64(),
                    Point::Index(_) => {
                        return Err(ErgoError::PointMismatch("trig observable needs a circle point"))
                    }
                };
                let mut v = mean.as_ref().map_or(0.0, |d| d.to_f64());
                for (j, c) in cos.iter().enumerate() {
                    v += c.to_f64() * (std::f64::consts::TAU * (j as f64 + 1.0) * xf).cos();
                }
                for (j, s) in sin.iter().enumerate() {
                    v += s.to_f64() * (std::f64::consts::TAU * (j as f64 + 1.0) * xf).sin();
                }
                Ok(v)
            }
            (Observable::Indicator { .. }, p) => {
                let c = match p {
                    Point::Circle(c) => c,
                    Point::Component(_, c) => c,
                    Point::Index(_) => {
                        return Err(ErgoError::PointMismatch(
                            "indicator observable needs a circle point",
                        ))
                    }
                };
                let union = self.indicator_union(prec)?.expect("indicator kind");
                match union.contains(&c.to_scalar(prec.max(96))) {
                    Membership::Member => Ok(1.0),
                    Membership::NonMember => Ok(0.0),
                    Membership::Uncertain => Ok(0.5),
                }
            }
            _ => Err(ErgoError::PointMismatch("observable/point kind mismatch")),
        }
    }

    /// `∫ f dμ` on the system's reference measure.
    pub fn space_mean(&self, sys: &SystemSpec, prec: u32) -> Result<f64, ErgoError> {
        match self {
            Observable::Trig { mean, .. } => Ok(mean.as_ref().map_or(0.0, |d| d.to_f64())),
            Observable::Indicator { .. } => {
                Ok(self.indicator_union(prec)?.expect("indicator").measure().to_f64())
            }
            Observable::Tabulated { values } => {
                Ok(values.iter().map(Dec::to_f64).sum::<f64>() / values.len() as f64)
            }
            Observable::PerComponent { first, second } => match sys {
                SystemSpec::DisjointUnion { weights, .. } => Ok(weights.0.to_f64()
                    * first.to_f64()
                    + weights.1.to_f64() * second.to_f64()),
                _ => Err(ErgoError::PointMismatch("per-component observable needs a union")),
            },
        }
    }
}

/// `E(f | invariant σ-algebra)(x)`: the analytic limit of ergodic averages.
pub fn conditional_expectation(
    sys: &SystemSpec,
    f: &Observable,
    x: &Point,
    policy: &PrecisionPolicy,
) -> Result<f64, ErgoError> {
    let prec = policy.work_bits;
    match sys {
        SystemSpec::Identity => f.eval(x, prec),
        SystemSpec::Cyclic { k } => {
            let mut acc = 0.0;
            for j in 0..*k {
                acc += f.eval(&apply_power(sys, j, x, policy)?, prec)?;
            }
            Ok(acc / *k as f64)
        }
        SystemSpec::Rotation { theta } => match theta {
            Angle::Golden | Angle::StreamSeed(_) | Angle::OracleY => f.space_mean(sys, prec),
            Angle::Rational(t) => {
                // finite orbit of length q
                let q = t.0.denom().to_u64().unwrap_or(1).max(1);
                let mut acc = 0.0;
                for j in 0..q {
                    acc += f.eval(&apply_power(sys, j, x, policy)?, prec)?;
                }
                Ok(acc / q as f64)
            }
        },
        SystemSpec::TimesP { .. } => f.space_mean(sys, prec),
        SystemSpec::DisjointUnion { .. } => match (f, x) {
            (Observable::PerComponent { first, second }, Point::Component(which, _)) => {
                Ok(if *which == 0 { first.to_f64() } else { second.to_f64() })
            }
            (_, Point::Component(_, _)) => {
                // component mean of a circle observable = its circle mean
                match f {
                    Observable::Trig { mean, .. } => Ok(mean.as_ref().map_or(0.0, |d| d.to_f64())),
                    Observable::Indicator { .. } => Ok(f
                        .indicator_union(prec)?
                        .expect("indicator")
                        .measure()
                        .to_f64()),
                    _ => Err(ErgoError::PointMismatch("observable/union mismatch")),
                }
            }
            _ => Err(ErgoError::PointMismatch("union system needs a component point")),
        },
    }
}

// ---------------------------------------------------------------------------
// averages

#[derive(Clone, Debug, Serialize)]
pub struct AverageRow {
    pub m: u64,
    pub subsequence_avg: f64,
    pub birkhoff_avg: f64,
    pub target: f64,
    pub deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AverageSeries {
    pub rows: Vec<AverageRow>,
    /// 2a + δ, with the Theorem-B regime satisfied iff < 1
    pub regime_value: f64,
    pub regime_ok: bool,
}

/// Streaming mean that is bit-exact on constant sequences.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunningMean {
    count: f64,
    mean: f64,
}

impl RunningMean {
    pub fn push(&mut self, v: f64) {
        self.count += 1.0;
        self.mean += (v - self.mean) / self.count;
    }

    pub fn value(&self) -> f64 {
        self.mean
    }
}

/// Subsequence averages `(1/M) Σ_{n≤M} f(T^{a_n} x)` along the hit exponents,
/// paired with the Birkhoff baseline `(1/M) Σ_{n≤M} f(T^n x)` and the
/// analytic target `E(f|ℐ)(x)`.
#[allow(clippy::too_many_arguments)]
pub fn ergodic_average(
    hits: &[u64],
    sys: &SystemSpec,
    f: &Observable,
    x: &Point,
    m_grid: &[u64],
    regime_value: f64,
    policy: &PrecisionPolicy,
) -> Result<AverageSeries, ErgoError> {
    let prec = policy.work_bits;
    let target = conditional_expectation(sys, f, x, policy)?;
    let mut rows = Vec::with_capacity(m_grid.len());
    let mut grid: Vec<u64> = m_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let m_max = grid.last().copied().unwrap_or(0).min(hits.len() as u64);

    let mut sub = RunningMean::default();
    let mut birkhoff = RunningMean::default();
    let mut gi = 0usize;
    for m in 1..=m_max {
        let a_m = hits[(m - 1) as usize];
        sub.push(f.eval(&apply_power(sys, a_m, x, policy)?, prec)?);
        birkhoff.push(f.eval(&apply_power(sys, m, x, policy)?, prec)?);
        while gi < grid.len() && grid[gi] == m {
            rows.push(AverageRow {
                m,
                subsequence_avg: sub.value(),
                birkhoff_avg: birkhoff.value(),
                target,
                deviation: (sub.value() - target).abs(),
            });
            gi += 1;
        }
    }
    Ok(AverageSeries {
        rows,
        regime_value,
        regime_ok: regime_value < 1.0,
    })
}

// ---------------------------------------------------------------------------
// the V′ statistic

/// `V′_N(y) = N^{-1+2a-b} Σ_{m≤⌊N^b⌋} |Σ_{n≤N-m} Y_{n+m} Y_n|` from the
/// centered indicator series `Y_n = X_n − σ_n` (index 0 holds Y_1).
pub fn vprime_stat(ys: &[f64], n: u64, a: f64, b: f64) -> f64 {
    let n_us = n as usize;
    debug_assert!(ys.len() >= n_us);
    let m_max = (n as f64).powf(b).floor() as usize;
    let mut total = 0f64;
    for m in 1..=m_max {
        let mut inner = 0f64;
        for i in 0..(n_us - m) {
            inner += ys[i + m] * ys[i];
        }
        total += inner.abs();
    }
    (n as f64).powf(-1.0 + 2.0 * a - b) * total
}

#[derive(Clone, Debug, Serialize)]
pub struct VPrimeRow {
    pub n: u64,
    pub mean_vprime: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VPrimeSeries {
    pub rows: Vec<VPrimeRow>,
    /// least-squares slope of log(mean V′) against log N
    pub loglog_slope: f64,
}

/// Ensemble mean of `V′_N` on a horizon grid, with its log-log decay slope.
#[allow(clippy::too_many_arguments)]
pub fn vprime_expectation(
    seq: &GrowthSequence,
    scheme: &TargetScheme,
    b: f64,
    n_grid: &[u64],
    ensemble: u64,
    seed: u64,
    policy: &PrecisionPolicy,
) -> Result<VPrimeSeries, ErgoError> {
    let a = scheme.a.to_f64();
    let n_max = n_grid.iter().copied().max().unwrap_or(0);
    let members: Vec<u64> = (1..=n_max).collect();
    let bank = EvalBank::build(seq, &members, policy)?;
    let targets = build_target_bank(scheme, &members, policy)?;
    let sigmas = build_sigma_bank(seq, scheme, &members, policy)?;

    let grid: Vec<u64> = n_grid.to_vec();
    let per_seed: Vec<Result<Vec<f64>, ErgoError>> =
        crate::par::par_map((0..ensemble).collect(), |i| {
            let y = FractionalOracle::bitstream(sub_seed(seed, "vprime-y", i), policy);
            let ms = memberships_for_seed(&y, seq, &members, &bank, &targets, policy)?;
            let ys: Vec<f64> = ms
                .iter()
                .zip(&sigmas)
                .map(|(m, s)| match m {
                    Membership::Member => 1.0 - s,
                    Membership::NonMember => -s,
                    Membership::Uncertain => 0.0,
                })
                .collect();
            Ok(grid.iter().map(|&n| vprime_stat(&ys, n, a, b)).collect())
        });

    let mut acc = vec![0f64; grid.len()];
    for r in per_seed {
        for (a, v) in acc.iter_mut().zip(r?) {
            *a += v;
        }
    }
    let rows: Vec<VPrimeRow> = grid
        .iter()
        .zip(&acc)
        .map(|(&n, sum)| VPrimeRow {
            n,
            mean_vprime: sum / ensemble as f64,
        })
        .collect();

    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.mean_vprime > 0.0)
        .map(|r| ((r.n as f64).ln(), r.mean_vprime.ln()))
        .collect();
    let slope = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    } else {
        f64::NAN
    };
    Ok(VPrimeSeries {
        rows,
        loglog_slope: slope,
    })
}

/// Default Theorem-B exponent `b = (1 + 2a + δ)/2`, clipped into the valid
/// band; recorded in run manifests.
pub fn default_b(a: f64, delta: f64) -> f64 {
    let lo = 2.0 * a + delta;
    ((1.0 + lo) / 2.0).clamp(lo + 1e-6, 1.0 - 1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rug::ops::Pow;

    fn policy() -> PrecisionPolicy {
        PrecisionPolicy::default()
    }

    fn dec(s: &str) -> Dec {
        Dec::parse(s).unwrap()
    }

    #[test]
    fn apply_power_closed_forms() {
        let p = policy();
        // identity
        let x = Point::Circle(CirclePoint::rational(7, 10));
        let sys = SystemSpec::Identity;
        assert_eq!(
            apply_power(&sys, 99, &x, &p).unwrap().circle().unwrap().approx_f64(),
            0.7
        );
        // rotation θ=1/4, x=0, k=6 → 1/2
        let sys: SystemSpec = serde_json::from_str(r#"{"kind":"rotation","theta":0.25}"#).unwrap();
        let x = Point::Circle(CirclePoint::rational(0, 1));
        let moved = apply_power(&sys, 6, &x, &p).unwrap();
        match moved.circle().unwrap() {
            CirclePoint::Rational(r) => assert_eq!(r, &Rational::from((1, 2))),
            other => panic!("expected rational point, got {other:?}"),
        }
        // times_p p=2, x=1/3, k=10: 2^10 ≡ 1 mod 3 → {1024/3} = 1/3
        let sys: SystemSpec = serde_json::from_str(r#"{"kind":"times_p","p":2}"#).unwrap();
        let x = Point::Circle(CirclePoint::rational(1, 3));
        let moved = apply_power(&sys, 10, &x, &p).unwrap();
        match moved.circle().unwrap() {
            CirclePoint::Rational(r) => assert_eq!(r, &Rational::from((1, 3))),
            other => panic!("expected rational point, got {other:?}"),
        }
        // cyclic shift
        let sys: SystemSpec = serde_json::from_str(r#"{"kind":"cyclic","k":5}"#).unwrap();
        match apply_power(&sys, 7, &Point::Index(4), &p).unwrap() {
            Point::Index(i) => assert_eq!(i, 1),
            other => panic!("expected index, got {other:?}"),
        }
    }

    #[test]
    fn times_two_on_streams_is_a_digit_shift() {
        let p = policy();
        let sys: SystemSpec = serde_json::from_str(r#"{"kind":"times_p","p":2}"#).unwrap();
        let x = Point::Circle(CirclePoint::stream(5));
        let moved = apply_power(&sys, 13, &x, &p).unwrap();
        let direct = CirclePoint::stream(5).to_scalar(200);
        // {2^13 y} equals the bits of y from position 13
        let expect = direct
            .mul(&HPScalar::from_u64(1 << 13), 260)
            .floor_fract(260)
            .unwrap()
            .1;
        let got = moved.circle().unwrap().to_scalar(96);
        let d = got.sub(&expect, 96).abs().to_f64();
        assert!(d < 1e-20, "d={d}");
    }

    #[test]
    fn general_p_stream_matches_reference() {
        let p = policy();
        let sys: SystemSpec = serde_json::from_str(r#"{"kind":"times_p","p":3}"#).unwrap();
        let x = Point::Circle(CirclePoint::stream(77));
        for k in [1u64, 2, 5, 17, 40] {
            let moved = apply_power(&sys, k, &x, &p).unwrap();
            let got = moved.circle().unwrap().to_scalar(96).to_f64();
            // 512-bit reference
            let y = BitStream::new(77).prefix_integer(512);
            let prod = Integer::from(3).pow(u32::try_from(k).unwrap()) * y;
            let frac = prod.keep_bits(512);
            let want = HPScalar::from_dyadic(frac, 512).to_f64();
            assert!((got - want).abs() < 1e-9, "k={k}: {got} vs {want}");
        }
    }

    #[test]
    fn conditional_expectations_are_analytic() {
        let p = policy();
        // identity: f(x)
        let f: Observable = serde_json::from_str(
            r#"{"kind":"indicator","pieces":[["0","0.5"]]}"#,
        )
        .unwrap();
        let x = Point::Circle(CirclePoint::rational(7, 10));
        assert_eq!(
            conditional_expectation(&SystemSpec::Identity, &f, &x, &p).unwrap(),
            0.0
        );
        // golden rotation, zero-mean trig → 0
        let f: Observable = serde_json::from_str(r#"{"kind":"trig","cos":[1]}"#).unwrap();
        let sys: SystemSpec =
            serde_json::from_str(r#"{"kind":"rotation","theta":"golden"}"#).unwrap();
        assert_eq!(conditional_expectation(&sys, &f, &x, &p).unwrap(), 0.0);
        // union: component means
        let sys: SystemSpec = serde_json::from_str(
            r#"{"kind":"disjoint_union","thetas":["golden","golden"],"weights":[0.5,0.5]}"#,
        )
        .unwrap();
        let f: Observable =
            serde_json::from_str(r#"{"kind":"per_component","first":0,"second":0.25}"#).unwrap();
        let x1 = Point::Component(1, CirclePoint::rational(1, 7));
        assert_eq!(conditional_expectation(&sys, &f, &x1, &p).unwrap(), 0.25);
        assert_eq!(f.space_mean(&sys, 128).unwrap(), 0.125);
    }

    #[test]
    fn identity_average_is_bit_exact() {
        let p = policy();
        let f: Observable = serde_json::from_str(r#"{"kind":"trig","mean":0.1,"cos":[0.3]}"#).unwrap();
        let x = Point::Circle(CirclePoint::rational(1, 10));
        let hits: Vec<u64> = (1..=500).map(|n| 3 * n).collect();
        let series = ergodic_average(
            &hits,
            &SystemSpec::Identity,
            &f,
            &x,
            &[1, 10, 100, 500],
            0.4,
            &p,
        )
        .unwrap();
        let fx = f.eval(&x, 128).unwrap();
        for row in &series.rows {
            assert_eq!(row.subsequence_avg, fx, "M={}", row.m);
            assert_eq!(row.deviation, 0.0);
        }
    }

    #[test]
    fn koopman_linearity_in_the_observable() {
        // averages are linear in f: avg(f+g) = avg(f) + avg(g)
        let p = policy();
        let sys: SystemSpec =
            serde_json::from_str(r#"{"kind":"rotation","theta":"golden"}"#).unwrap();
        let x = Point::Circle(CirclePoint::rational(1, 3));
        let hits: Vec<u64> = (1..=300).map(|n| n * n % 1000 + n).collect();
        let f1: Observable = serde_json::from_str(r#"{"kind":"trig","cos":[0.7]}"#).unwrap();
        let f2: Observable = serde_json::from_str(r#"{"kind":"trig","sin":[0.2],"mean":0.05}"#).unwrap();
        let fsum: Observable =
            serde_json::from_str(r#"{"kind":"trig","cos":[0.7],"sin":[0.2],"mean":0.05}"#).unwrap();
        let grid = [300u64];
        let a1 = ergodic_average(&hits, &sys, &f1, &x, &grid, 0.0, &p).unwrap();
        let a2 = ergodic_average(&hits, &sys, &f2, &x, &grid, 0.0, &p).unwrap();
        let asum = ergodic_average(&hits, &sys, &fsum, &x, &grid, 0.0, &p).unwrap();
        let lhs = asum.rows[0].subsequence_avg;
        let rhs = a1.rows[0].subsequence_avg + a2.rows[0].subsequence_avg;
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn measure_preservation_pushforward() {
        // empirical pushforward of a uniform grid stays uniform in
        // Kolmogorov distance; finite kinds permute exactly
        let p = policy();
        let g = 100_000u64;
        let ks = |sys: &SystemSpec| -> f64 {
            let mut imgs: Vec<f64> = (0..g)
                .map(|j| {
                    let x = Point::Circle(CirclePoint::Rational(Rational::from((j, g))));
                    apply_power(sys, 1, &x, &p)
                        .unwrap()
                        .circle()
                        .unwrap()
                        .approx_f64()
                })
                .collect();
            imgs.sort_by(f64::total_cmp);
            imgs.iter()
                .enumerate()
                .map(|(i, &v)| {
                    let ecdf_hi = (i + 1) as f64 / g as f64;
                    let ecdf_lo = i as f64 / g as f64;
                    (ecdf_hi - v).abs().max((v - ecdf_lo).abs())
                })
                .fold(0.0, f64::max)
        };
        let bound = 2.0 / (g as f64).sqrt();
        let rot: SystemSpec =
            serde_json::from_str(r#"{"kind":"rotation","theta":"golden"}"#).unwrap();
        assert!(ks(&rot) < bound, "rotation KS {}", ks(&rot));
        let doubling: SystemSpec = serde_json::from_str(r#"{"kind":"times_p","p":2}"#).unwrap();
        assert!(ks(&doubling) < bound, "times_2 KS {}", ks(&doubling));

        // cyclic: exact permutation
        let sys: SystemSpec = serde_json::from_str(r#"{"kind":"cyclic","k":257}"#).unwrap();
        let mut seen = vec![false; 257];
        for i in 0..257u64 {
            match apply_power(&sys, 1, &Point::Index(i), &p).unwrap() {
                Point::Index(j) => {
                    assert!(!seen[j as usize]);
                    seen[j as usize] = true;
                }
                other => panic!("unexpected {other:?}"),
            }
        }
        assert!(seen.iter().all(|&b| b));
    }

    #[test]
    fn vprime_zero_on_full_targets_and_decays() {
        // Y ≡ 0 when every target is the full circle
        let ys = vec![0f64; 4096];
        assert_eq!(vprime_stat(&ys, 4096, 0.0, 0.5), 0.0);

        let p = policy();
        let seq = GrowthSequence::geometric(dec("2"));
        let scheme = TargetScheme::anchored(dec("0.2"));
        let grid: Vec<u64> = vec![256, 1024, 4096];
        let series = vprime_expectation(&seq, &scheme, 0.6, &grid, 30, 5, &p).unwrap();
        assert!(
            series.rows.last().unwrap().mean_vprime < series.rows[0].mean_vprime,
            "{series:?}"
        );
        assert!(series.loglog_slope < 0.0, "slope {}", series.loglog_slope);
    }

    #[test]
    fn default_b_respects_the_band() {
        let b = default_b(0.2, 0.0);
        assert!(b > 0.4 && b < 1.0);
        assert!((b - 0.7).abs() < 1e-12);
        let b = default_b(0.3, 0.2);
        assert!(b > 0.8 && b < 1.0);
    }
}
