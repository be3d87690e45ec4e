//! Growth sequences `u_n`, shrinking-target schemes `I_n`, and the integer
//! sets `A` used in transversality experiments, plus sublacunarity
//! verification.

use crate::params::Dec;
use crate::scalar::{HPScalar, NumError, PrecisionPolicy};
use crate::seeding::{sub_seed, BitStream};
use crate::torus::{CircleInterval, IntervalUnion};
use rug::ops::Pow;
use rug::{Integer, Rational};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use thiserror::Error;

#[derive(Error, Debug, Clone)]
pub enum SeqError {
    #[error("{0}")]
    Num(#[from] NumError),
    #[error("invalid parameter: {0}")]
    Validation(String),
    #[error("target measure c·n^-a exceeds 1 at n={n}; raise the scheme threshold n0")]
    TargetTooLarge { n: u64 },
    #[error("sublacunarity declaration fails at n={n}: margin {margin} below c={c}")]
    DeclarationFails { n: u64, margin: f64, c: f64 },
}

// ---------------------------------------------------------------------------
// growth sequences

#[derive(Clone, Debug, PartialEq)]
pub enum SeqFamily {
    Geometric { alpha: Dec },
    Stretched { alpha: Dec, b: Dec },
    Polynomial { m: u32 },
    Explicit { values: Vec<Dec> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrowthSequence {
    pub family: SeqFamily,
    /// Declared sublacunarity exponent δ ≥ 0; checked, never trusted.
    pub delta: Option<Dec>,
    /// Declared constant c ∈ (0,1) of the ratio lower bound.
    pub c: Option<Dec>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSeq {
    family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<Dec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<Dec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<Dec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delta: Option<Dec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<Dec>,
}

impl Serialize for GrowthSequence {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut raw = RawSeq {
            family: String::new(),
            alpha: None,
            b: None,
            m: None,
            values: None,
            delta: self.delta.clone(),
            c: self.c.clone(),
        };
        match &self.family {
            SeqFamily::Geometric { alpha } => {
                raw.family = "geometric".into();
                raw.alpha = Some(alpha.clone());
            }
            SeqFamily::Stretched { alpha, b } => {
                raw.family = "stretched".into();
                raw.alpha = Some(alpha.clone());
                raw.b = Some(b.clone());
            }
            SeqFamily::Polynomial { m } => {
                raw.family = "polynomial".into();
                raw.m = Some(*m);
            }
            SeqFamily::Explicit { values } => {
                raw.family = "explicit".into();
                raw.values = Some(values.clone());
            }
        }
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for GrowthSequence {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let raw = RawSeq::deserialize(d)?;
        let req = |field: Option<Dec>, name: &str| {
            field.ok_or_else(|| D::Error::custom(format!("u.{name} required for family {:?}", raw.family)))
        };
        let family = match raw.family.as_str() {
            "geometric" => SeqFamily::Geometric {
                alpha: req(raw.alpha.clone(), "alpha")?,
            },
            "stretched" => SeqFamily::Stretched {
                alpha: req(raw.alpha.clone(), "alpha")?,
                b: req(raw.b.clone(), "b")?,
            },
            "polynomial" => SeqFamily::Polynomial {
                m: raw.m.ok_or_else(|| D::Error::custom("u.m required for family polynomial"))?,
            },
            "explicit" => SeqFamily::Explicit {
                values: raw
                    .values
                    .clone()
                    .ok_or_else(|| D::Error::custom("u.values required for family explicit"))?,
            },
            other => {
                return Err(D::Error::custom(format!(
                    "u.family must be one of geometric|stretched|polynomial|explicit, got {other:?}"
                )))
            }
        };
        Ok(GrowthSequence {
            family,
            delta: raw.delta,
            c: raw.c,
        })
    }
}

impl GrowthSequence {
    pub fn geometric(alpha: Dec) -> Self {
        GrowthSequence {
            family: SeqFamily::Geometric { alpha },
            delta: None,
            c: None,
        }
    }

    pub fn validate(&self) -> Result<(), SeqError> {
        let one = Rational::from(1);
        match &self.family {
            SeqFamily::Geometric { alpha } => {
                if alpha.0 <= one {
                    return Err(SeqError::Validation("u.alpha must be > 1".into()));
                }
            }
            SeqFamily::Stretched { alpha, b } => {
                if alpha.0 <= one {
                    return Err(SeqError::Validation("u.alpha must be > 1".into()));
                }
                if b.0 <= Rational::new() || b.0 > one {
                    return Err(SeqError::Validation("u.b must lie in (0,1]".into()));
                }
            }
            SeqFamily::Polynomial { m } => {
                if *m < 1 {
                    return Err(SeqError::Validation("u.m must be ≥ 1".into()));
                }
            }
            SeqFamily::Explicit { values } => {
                if values.is_empty() {
                    return Err(SeqError::Validation("u.values must be non-empty".into()));
                }
                if values[0].0 < one {
                    return Err(SeqError::Validation("u_1 must be ≥ 1".into()));
                }
                for w in values.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return Err(SeqError::Validation(
                            "u.values must be strictly increasing".into(),
                        ));
                    }
                }
            }
        }
        if let Some(d) = &self.delta {
            if d.0 < Rational::new() {
                return Err(SeqError::Validation("u.delta must be ≥ 0".into()));
            }
        }
        if let Some(c) = &self.c {
            if c.0 <= Rational::new() || c.0 >= one {
                return Err(SeqError::Validation("u.c must lie in (0,1)".into()));
            }
        }
        Ok(())
    }

    /// Estimated `log2(u_n)`, rounded up; used for precision budgeting.
    pub fn log2_estimate(&self, n: u64) -> f64 {
        match &self.family {
            SeqFamily::Geometric { alpha } => n as f64 * alpha.to_f64().log2() + 1.0,
            SeqFamily::Stretched { alpha, b } => {
                (n as f64).powf(b.to_f64()) * alpha.to_f64().log2() + 1.0
            }
            SeqFamily::Polynomial { m } => f64::from(*m) * (n as f64).log2() + 1.0,
            SeqFamily::Explicit { values } => values
                .get((n - 1) as usize)
                .map_or(1.0, |v| v.to_f64().log2() + 1.0),
        }
    }

    /// `u_n` with certified relative error at most `2^-precision`.
    pub fn value(&self, n: u64, precision: u32, policy: &PrecisionPolicy) -> Result<HPScalar, SeqError> {
        if n < 1 {
            return Err(SeqError::Validation("sequence index must be ≥ 1".into()));
        }
        let need = self.log2_estimate(n) + f64::from(precision) + 16.0;
        if need > policy.bit_cap as f64 {
            return Err(NumError::PrecisionBudget {
                required_bits: need as u64,
                cap_bits: policy.bit_cap,
            }
            .into());
        }
        match &self.family {
            SeqFamily::Geometric { alpha } => {
                let base = HPScalar::from_rational(alpha.0.clone());
                let work = precision + 64;
                Ok(base.pow_i64(i64::try_from(n).unwrap(), work)?)
            }
            SeqFamily::Stretched { alpha, b } => {
                let exp_mag_bits = self.log2_estimate(n).log2().max(0.0).ceil() as u32;
                let work = precision + exp_mag_bits + 32;
                let nb = HPScalar::from_u64(n).pow_rational(&b.0, work)?;
                if let Some(e) = nb.as_exact() {
                    if e.is_integer() {
                        if let Some(k) = e.numer().to_i64() {
                            let base = HPScalar::from_rational(alpha.0.clone());
                            return Ok(base.pow_i64(k, precision + 64)?);
                        }
                    }
                }
                let lg_alpha = HPScalar::from_rational(alpha.0.clone()).log2(work)?;
                Ok(nb.mul(&lg_alpha, work).exp2(precision + 16)?)
            }
            SeqFamily::Polynomial { m } => {
                Ok(HPScalar::from_integer(Integer::from(n).pow(*m)))
            }
            SeqFamily::Explicit { values } => values
                .get((n - 1) as usize)
                .map(|v| v.scalar())
                .ok_or_else(|| {
                    SeqError::Validation(format!("explicit sequence has no index {n}"))
                }),
        }
    }
}

/// Certification artifacts for a δ-sublacunarity declaration.
#[derive(Clone, Debug, Serialize)]
pub struct SublacunarityReport {
    pub checked_n: u64,
    /// min over n < N of (u_{n+1}/u_n − 1)·n^δ
    pub min_margin: f64,
    pub min_margin_at: u64,
    /// largest β certified on the (n,d) grid for the iterated ratio bound
    pub beta_hat: f64,
    pub declared_c: f64,
    pub passes: bool,
}

/// Evaluate the ratio inequality `u_{n+1}/u_n ≥ 1 + c·n^{-δ}` for all
/// `n < N`, and certify the largest `β` with
/// `u_{n+d}/u_n ≥ β^{d/(n+d)^δ}` on a logarithmic (n,d) grid.
pub fn sublacunarity_check(
    seq: &GrowthSequence,
    delta: &Dec,
    c: &Dec,
    n_max: u64,
    policy: &PrecisionPolicy,
) -> Result<SublacunarityReport, SeqError> {
    if n_max < 2 {
        return Err(SeqError::Validation("sublacunarity horizon must be ≥ 2".into()));
    }
    let prec = policy.work_bits;
    let c_s = c.scalar();
    let mut min_margin = f64::INFINITY;
    let mut min_at = 1u64;
    let mut prev = seq.value(1, prec, policy)?;
    for n in 1..n_max {
        let next = seq.value(n + 1, prec, policy)?;
        let ratio = next.div(&prev, prec)?;
        let excess = ratio.sub(&HPScalar::one(), prec);
        let weight = HPScalar::from_u64(n).pow_rational(&delta.0, prec)?;
        let margin = excess.mul(&weight, prec);
        match margin.cmp_checked(&c_s) {
            Some(Ordering::Less) => {
                return Err(SeqError::DeclarationFails {
                    n,
                    margin: margin.to_f64(),
                    c: c.to_f64(),
                });
            }
            Some(_) => {}
            None => {
                return Err(NumError::Uncertain(format!(
                    "sublacunarity margin vs c undecidable at n={n}; raise work_bits"
                ))
                .into());
            }
        }
        let m = margin.to_f64();
        if m < min_margin {
            min_margin = m;
            min_at = n;
        }
        prev = next;
    }

    // β̂ on a log grid: the certified iterated-ratio base
    let mut beta_hat = f64::INFINITY;
    let mut n = 1u64;
    while n < n_max {
        let un = seq.value(n, prec, policy)?;
        let mut d = 1u64;
        while n + d <= n_max {
            let und = seq.value(n + d, prec, policy)?;
            let ratio = und.div(&un, prec)?;
            // β_{n,d} = ratio^{(n+d)^δ / d}
            let e = HPScalar::from_u64(n + d)
                .pow_rational(&delta.0, prec)?
                .div(&HPScalar::from_u64(d), prec)?;
            let beta = ratio.log2(prec)?.mul(&e, prec).exp2(prec)?;
            beta_hat = beta_hat.min(beta.to_f64());
            d *= 2;
        }
        n *= 2;
    }

    Ok(SublacunarityReport {
        checked_n: n_max,
        min_margin,
        min_margin_at: min_at,
        beta_hat,
        declared_c: c.to_f64(),
        passes: true,
    })
}

/// Fit a sublacunarity constant from the first `horizon` ratios. Used for
/// families the declaration leaves `c` open (stretched defaults to
/// δ = 1−b with `c` certified numerically).
pub fn fit_sublacunarity_c(
    seq: &GrowthSequence,
    delta: &Dec,
    horizon: u64,
    policy: &PrecisionPolicy,
) -> Result<Dec, SeqError> {
    let prec = policy.work_bits;
    let mut min_margin: Option<Rational> = None;
    let mut prev = seq.value(1, prec, policy)?;
    for n in 1..horizon {
        let next = seq.value(n + 1, prec, policy)?;
        let ratio = next.div(&prev, prec)?;
        let excess = ratio.sub(&HPScalar::one(), prec);
        let weight = HPScalar::from_u64(n).pow_rational(&delta.0, prec)?;
        let margin = excess.mul(&weight, prec);
        // round the certified lower midpoint down to a dyadic
        let down = margin.to_f64() * (1.0 - 1e-9);
        let dy = Rational::from((
            Integer::from((down * (1u64 << 40) as f64).floor() as i64),
            Integer::from(1u64 << 40),
        ));
        min_margin = Some(match min_margin {
            None => dy,
            Some(cur) => cur.min(dy),
        });
        prev = next;
    }
    let m = min_margin.unwrap();
    if m <= 0 {
        return Err(SeqError::Validation(
            "sequence admits no positive sublacunarity constant on the fitted range".into(),
        ));
    }
    Ok(Dec(m.min(Rational::from((1048575, 1048576)))))
}

// ---------------------------------------------------------------------------
// target schemes

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Anchored,
    Symmetric,
    SeededRandom,
    Split,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TargetScheme {
    pub a: Dec,
    #[serde(default = "default_ell")]
    pub ell: u32,
    pub placement: Placement,
    #[serde(default = "default_scale", rename = "c")]
    pub scale_c: Dec,
    /// Below this index the target is the full circle (hits are free);
    /// needed when `c·n^{-a} > 1` for small n.
    #[serde(default = "default_n0")]
    pub n0: u64,
    #[serde(default)]
    pub seed: u64,
}

fn default_ell() -> u32 {
    1
}
fn default_scale() -> Dec {
    Dec(Rational::from(1))
}
fn default_n0() -> u64 {
    1
}

impl TargetScheme {
    pub fn anchored(a: Dec) -> Self {
        TargetScheme {
            a,
            ell: 1,
            placement: Placement::Anchored,
            scale_c: default_scale(),
            n0: 1,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SeqError> {
        if self.a.0 <= Rational::new() || self.a.0 >= Rational::from(1) {
            return Err(SeqError::Validation("target.a out of (0,1)".into()));
        }
        if self.ell < 1 {
            return Err(SeqError::Validation("target.ell must be ≥ 1".into()));
        }
        if self.scale_c.0 <= Rational::new() {
            return Err(SeqError::Validation("target.c must be > 0".into()));
        }
        if self.placement == Placement::Symmetric && self.ell < 2 {
            return Err(SeqError::Validation(
                "target.ell must be ≥ 2 for symmetric placement".into(),
            ));
        }
        if self.n0 < 1 {
            return Err(SeqError::Validation("target.n0 must be ≥ 1".into()));
        }
        Ok(())
    }

    /// Target measure `c·n^{-a}` as a certified scalar.
    pub fn measure_at(&self, n: u64, prec: u32) -> Result<HPScalar, SeqError> {
        let na = HPScalar::from_u64(n)
            .pow_rational(&Rational::from(-self.a.0.clone()), prec + 16)?;
        Ok(na.mul(&self.scale_c.scalar(), prec))
    }

    /// The target `I_n`.
    pub fn interval(&self, n: u64, prec: u32) -> Result<IntervalUnion, SeqError> {
        if n < 1 {
            return Err(SeqError::Validation("target index must be ≥ 1".into()));
        }
        if n < self.n0 {
            return Ok(IntervalUnion::full());
        }
        let m = self.measure_at(n, prec)?;
        let one = HPScalar::one();
        match m.cmp_certain(&one, "target measure vs 1")? {
            Ordering::Greater => return Err(SeqError::TargetTooLarge { n }),
            Ordering::Equal => {
                if self.placement == Placement::Symmetric {
                    return Err(SeqError::TargetTooLarge { n });
                }
                return Ok(IntervalUnion::full());
            }
            Ordering::Less => {}
        }
        let zero = HPScalar::zero();
        match self.placement {
            Placement::Anchored => Ok(IntervalUnion::normalize(
                vec![CircleInterval::half_open(zero, m)],
                prec,
            )?),
            Placement::Symmetric => {
                let half = m.div(&HPScalar::from_u64(2), prec)?;
                let hi_lo = one.sub(&half, prec);
                Ok(IntervalUnion::normalize(
                    vec![
                        CircleInterval::half_open(zero, half),
                        CircleInterval::half_open(hi_lo, one),
                    ],
                    prec,
                )?)
            }
            Placement::SeededRandom => {
                let bits = BitStream::new(sub_seed(self.seed, "target-offset", n)).bits_u64(0, 63);
                let t0 = HPScalar::from_rational(Rational::from((bits, 1u64 << 63)));
                let t1 = t0.add(&m, prec);
                Ok(IntervalUnion::normalize(
                    vec![CircleInterval::half_open(t0, t1)],
                    prec,
                )?)
            }
            Placement::Split => {
                let ell = u64::from(self.ell);
                let ell_s = HPScalar::from_u64(ell);
                let piece_len = m.div(&ell_s, prec)?;
                let sector = HPScalar::one().div(&ell_s, prec)?;
                let slack = sector.sub(&piece_len, prec);
                let mut raw = Vec::with_capacity(self.ell as usize);
                for j in 0..ell {
                    let bits =
                        BitStream::new(sub_seed(self.seed, "target-split", n * ell + j))
                            .bits_u64(0, 63);
                    let off = HPScalar::from_rational(Rational::from((bits, 1u64 << 63)))
                        .mul(&slack, prec);
                    let lo = HPScalar::from_u64(j).mul(&sector, prec).add(&off, prec);
                    let hi = lo.add(&piece_len, prec);
                    raw.push(CircleInterval::half_open(lo, hi));
                }
                Ok(IntervalUnion::normalize(raw, prec)?)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// integer sets

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntegerSet {
    All,
    Primes,
    /// Perfect d-th powers {k^d}: mass dimension 1/d.
    Power { d: u32 },
    Explicit { values: Vec<u64> },
    /// Membership coin with bias min(1, n^{γ-1}): mass dimension γ a.s.
    RandomDensity { gamma: Dec, seed: u64 },
}

impl IntegerSet {
    pub fn validate(&self) -> Result<(), SeqError> {
        match self {
            IntegerSet::Power { d } => {
                if *d < 1 {
                    return Err(SeqError::Validation("A.d must be ≥ 1".into()));
                }
            }
            IntegerSet::Explicit { values } => {
                for w in values.windows(2) {
                    if w[1] <= w[0] {
                        return Err(SeqError::Validation(
                            "A.values must be strictly increasing".into(),
                        ));
                    }
                }
                if values.first().is_some_and(|&v| v < 1) {
                    return Err(SeqError::Validation("A.values must be ≥ 1".into()));
                }
            }
            IntegerSet::RandomDensity { gamma, .. } => {
                if gamma.0 <= Rational::new() || gamma.0 > Rational::from(1) {
                    return Err(SeqError::Validation("A.gamma must lie in (0,1]".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Exact member list up to `n_max`, increasing.
    pub fn members(&self, n_max: u64) -> Vec<u64> {
        match self {
            IntegerSet::All => (1..=n_max).collect(),
            IntegerSet::Primes => PrimeSieve::new(n_max).primes().collect(),
            IntegerSet::Power { d } => {
                let mut v = Vec::new();
                let mut k = 1u64;
                loop {
                    let p = Integer::from(k).pow(*d);
                    match p.to_u64() {
                        Some(p) if p <= n_max => v.push(p),
                        _ => break,
                    }
                    k += 1;
                }
                v
            }
            IntegerSet::Explicit { values } => {
                values.iter().copied().take_while(|&v| v <= n_max).collect()
            }
            IntegerSet::RandomDensity { gamma, seed } => {
                let thresholds = DensityThresholds::new(gamma);
                (1..=n_max)
                    .filter(|&n| density_member(*seed, n, &thresholds))
                    .collect()
            }
        }
    }

    /// `|A ∩ [1, N]|` at each grid point, in one pass.
    pub fn counts_on_grid(&self, grid: &[u64]) -> Vec<u64> {
        let n_max = grid.iter().copied().max().unwrap_or(0);
        match self {
            IntegerSet::All => grid.to_vec(),
            IntegerSet::Power { d } => grid
                .iter()
                .map(|&n| Integer::from(n).root(*d).to_u64().unwrap())
                .collect(),
            IntegerSet::Primes => {
                let sieve = PrimeSieve::new(n_max);
                let mut counts = Vec::with_capacity(grid.len());
                let mut sorted: Vec<usize> = (0..grid.len()).collect();
                sorted.sort_by_key(|&i| grid[i]);
                let mut out = vec![0u64; grid.len()];
                let mut count = 0u64;
                let mut next = 2u64;
                for &gi in &sorted {
                    let target = grid[gi];
                    while next <= target {
                        if sieve.is_prime(next) {
                            count += 1;
                        }
                        next += 1;
                    }
                    out[gi] = count;
                }
                counts.clear();
                out.clone_into(&mut counts);
                counts
            }
            IntegerSet::Explicit { .. } | IntegerSet::RandomDensity { .. } => {
                let members = self.members(n_max);
                grid.iter()
                    .map(|&n| members.partition_point(|&v| v <= n) as u64)
                    .collect()
            }
        }
    }

    pub fn count_up_to(&self, n: u64) -> u64 {
        self.counts_on_grid(&[n])[0]
    }
}

struct DensityThresholds {
    gamma: Rational,
}

impl DensityThresholds {
    fn new(gamma: &Dec) -> Self {
        DensityThresholds {
            gamma: gamma.0.clone(),
        }
    }

    /// floor(min(1, n^{γ-1})·2^64), certified.
    fn threshold(&self, n: u64) -> u64 {
        if n == 1 || self.gamma == 1 {
            return u64::MAX;
        }
        let e = Rational::from(self.gamma.clone() - 1);
        for prec in [96u32, 192, 384] {
            let t = HPScalar::from_u64(n).pow_rational(&e, prec).expect("n ≥ 1");
            let scaled = t.mul(&HPScalar::from_rational(Rational::from(Integer::from(1) << 64)), prec + 64);
            if let Ok((fl, _)) = scaled.floor_fract(prec + 64) {
                return fl.to_u64().unwrap_or(u64::MAX);
            }
        }
        unreachable!("density threshold undecidable at 384 bits")
    }
}

fn density_member(seed: u64, n: u64, thresholds: &DensityThresholds) -> bool {
    let coin = BitStream::new(sub_seed(seed, "iset-density", n)).bits_u64(0, 64);
    coin < thresholds.threshold(n)
}

/// Plain bit-packed Eratosthenes sieve.
pub struct PrimeSieve {
    limit: u64,
    words: Vec<u64>, // bit = 1 means composite
}

impl PrimeSieve {
    pub fn new(limit: u64) -> Self {
        let n = limit.max(2) as usize;
        let mut words = vec![0u64; n / 64 + 1];
        let mark = |words: &mut Vec<u64>, i: usize| words[i / 64] |= 1 << (i % 64);
        mark(&mut words, 0);
        mark(&mut words, 1);
        let mut p = 2usize;
        while p * p <= n {
            if words[p / 64] >> (p % 64) & 1 == 0 {
                let mut q = p * p;
                while q <= n {
                    words[q / 64] |= 1 << (q % 64);
                    q += p;
                }
            }
            p += 1;
        }
        PrimeSieve {
            limit: n as u64,
            words,
        }
    }

    pub fn is_prime(&self, n: u64) -> bool {
        debug_assert!(n <= self.limit);
        n >= 2 && (self.words[(n / 64) as usize] >> (n % 64)) & 1 == 0
    }

    pub fn primes(&self) -> impl Iterator<Item = u64> + '_ {
        (2..=self.limit).filter(move |&n| self.is_prime(n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::Membership;

    fn policy() -> PrecisionPolicy {
        PrecisionPolicy::default()
    }

    fn dec(s: &str) -> Dec {
        Dec::parse(s).unwrap()
    }

    #[test]
    fn seq_values_exact_cases() {
        let p = policy();
        let geo = GrowthSequence::geometric(dec("2"));
        let v = geo.value(10, 128, &p).unwrap();
        assert_eq!(v.as_exact().unwrap(), &Rational::from(1024));

        let poly: GrowthSequence = serde_json::from_str(r#"{"family":"polynomial","m":2}"#).unwrap();
        assert_eq!(
            poly.value(7, 128, &p).unwrap().as_exact().unwrap(),
            &Rational::from(49)
        );

        // stretched with integer exponent: 2^(100^0.5) = 2^10
        let st: GrowthSequence =
            serde_json::from_str(r#"{"family":"stretched","alpha":2,"b":0.5}"#).unwrap();
        assert_eq!(
            st.value(100, 128, &p).unwrap().as_exact().unwrap(),
            &Rational::from(1024)
        );
        // non-integer exponent stays certified: 2^sqrt(2) ∈ (2.665, 2.666)
        let v = st.value(2, 128, &p).unwrap();
        assert_eq!(
            v.cmp_checked(&HPScalar::from_rational(dec("2.665").0)),
            Some(Ordering::Greater)
        );
        assert_eq!(
            v.cmp_checked(&HPScalar::from_rational(dec("2.666").0)),
            Some(Ordering::Less)
        );
    }

    #[test]
    fn precision_budget_reported() {
        let mut p = policy();
        p.bit_cap = 4096;
        let geo = GrowthSequence::geometric(dec("2"));
        match geo.value(100_000, 128, &p) {
            Err(SeqError::Num(NumError::PrecisionBudget { required_bits, .. })) => {
                assert!(required_bits > 4096);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn sublacunarity_geometric_passes() {
        let p = policy();
        let geo = GrowthSequence::geometric(dec("2"));
        let r = sublacunarity_check(&geo, &dec("0"), &dec("0.999"), 200, &p).unwrap();
        assert!(r.passes);
        assert!(r.min_margin >= 0.999);
        assert!(r.beta_hat > 1.0);
    }

    #[test]
    fn sublacunarity_stretched_certifies_one_minus_b() {
        // α^(n^b) is (1−b)-sublacunary
        let p = policy();
        let st: GrowthSequence =
            serde_json::from_str(r#"{"family":"stretched","alpha":2,"b":0.5}"#).unwrap();
        let delta = dec("0.5");
        let c = fit_sublacunarity_c(&st, &delta, 1000, &p).unwrap();
        assert!(c.to_f64() > 0.0 && c.to_f64() < 1.0);
        let r = sublacunarity_check(&st, &delta, &c, 1000, &p).unwrap();
        assert!(r.passes);
        assert!(r.beta_hat > 1.0);
    }

    #[test]
    fn sublacunarity_linear_fails() {
        // u_n = n: ratio 1 + 1/n < 1 + c eventually for any fixed c at δ=0
        let p = policy();
        let lin: GrowthSequence =
            serde_json::from_str(r#"{"family":"polynomial","m":1}"#).unwrap();
        match sublacunarity_check(&lin, &dec("0"), &dec("0.1"), 100, &p) {
            Err(SeqError::DeclarationFails { n, .. }) => assert!(n > 9),
            other => panic!("expected declaration failure, got {other:?}"),
        }
    }

    #[test]
    fn targets_have_exact_measure_and_shape() {
        let p = policy().work_bits;
        // anchored a=0.5 c=1 n=4: [0, 0.5)
        let t: TargetScheme = serde_json::from_str(
            r#"{"a":0.5,"placement":"anchored","ell":1,"c":1}"#,
        )
        .unwrap();
        let i = t.interval(4, p).unwrap();
        assert_eq!(i.piece_count(), 1);
        assert_eq!(
            i.measure().as_exact().unwrap(),
            &Rational::from((1, 2))
        );

        // symmetric c=2 a=0.5: n=4 degenerate full circle rejected; n=16 ok
        let t: TargetScheme = serde_json::from_str(
            r#"{"a":0.5,"placement":"symmetric","ell":2,"c":2}"#,
        )
        .unwrap();
        assert!(matches!(
            t.interval(4, p),
            Err(SeqError::TargetTooLarge { n: 4 })
        ));
        let i = t.interval(16, p).unwrap();
        assert_eq!(i.piece_count(), 2);
        assert_eq!(i.measure().as_exact().unwrap(), &Rational::from((1, 2)));
        // includes 0, excludes 1/4
        assert_eq!(
            i.contains(&HPScalar::zero()),
            Membership::Member
        );
        assert_eq!(
            i.contains(&HPScalar::from_rational(Rational::from((1, 4)))),
            Membership::NonMember
        );
    }

    #[test]
    fn split_target_masses_add_up() {
        let t: TargetScheme = serde_json::from_str(
            r#"{"a":0.3,"placement":"split","ell":3,"c":1,"seed":11}"#,
        )
        .unwrap();
        let i = t.interval(10, 192).unwrap();
        assert_eq!(i.piece_count(), 3);
        // total measure 10^-0.3 within 2^-40
        let want = HPScalar::from_u64(10)
            .pow_rational(&Rational::from((-3, 10)), 192)
            .unwrap();
        let d = i.measure().sub(&want, 192).abs();
        let tol = HPScalar::from_rational(Rational::from((1, Integer::from(1) << 40)));
        assert_eq!(d.cmp_checked(&tol), Some(Ordering::Less));
    }

    #[test]
    fn target_measure_monotone_and_capped() {
        let t: TargetScheme = serde_json::from_str(
            r#"{"a":0.3,"placement":"anchored","c":3,"n0":40}"#,
        )
        .unwrap();
        // below n0: full circle
        assert_eq!(t.interval(5, 128).unwrap().measure().to_f64(), 1.0);
        // above: must not exceed 1 (3·40^-0.3 ≈ 0.99)
        let mut last = 2.0f64;
        for n in [40u64, 50, 80, 200, 1000] {
            let m = t.interval(n, 128).unwrap().measure().to_f64();
            assert!(m < last);
            last = m;
        }
        // n0 too small would exceed 1
        let bad: TargetScheme = serde_json::from_str(
            r#"{"a":0.3,"placement":"anchored","c":3}"#,
        )
        .unwrap();
        assert!(matches!(bad.interval(2, 128), Err(SeqError::TargetTooLarge { .. })));
    }

    #[test]
    fn integer_sets_enumerate_exactly() {
        assert_eq!(IntegerSet::All.members(5), vec![1, 2, 3, 4, 5]);
        let squares = IntegerSet::Power { d: 2 };
        assert_eq!(squares.members(30), vec![1, 4, 9, 16, 25]);
        assert_eq!(squares.count_up_to(30), 5);
        assert_eq!(IntegerSet::Primes.count_up_to(100), 25);
    }

    #[test]
    fn sieve_matches_trial_division() {
        let sieve = PrimeSieve::new(2000);
        let trial = |n: u64| n >= 2 && (2..n).take_while(|d| d * d <= n).all(|d| n % d != 0);
        for n in 2..=2000 {
            assert_eq!(sieve.is_prime(n), trial(n), "n={n}");
        }
    }

    #[test]
    fn random_density_counts_track_gamma() {
        // E|A∩[1,N]| ≈ N^γ/γ, binomial 4σ slack
        let gamma = dec("0.6");
        let set = IntegerSet::RandomDensity {
            gamma: gamma.clone(),
            seed: 5,
        };
        let n = 200_000u64;
        let count = set.count_up_to(n) as f64;
        let mean = (n as f64).powf(0.6) / 0.6;
        let sd = mean.sqrt();
        assert!(
            (count - mean).abs() < 4.0 * sd + 10.0,
            "count {count} vs mean {mean} (sd {sd})"
        );
    }

    #[test]
    fn config_json_matches_interface() {
        let s: GrowthSequence =
            serde_json::from_str(r#"{"family":"stretched","alpha":2,"b":0.5}"#).unwrap();
        s.validate().unwrap();
        let t: TargetScheme =
            serde_json::from_str(r#"{"a":0.2,"placement":"anchored","ell":1,"c":1}"#).unwrap();
        t.validate().unwrap();
        let a: IntegerSet = serde_json::from_str(r#"{"kind":"power","d":2}"#).unwrap();
        a.validate().unwrap();
        // unknown fields rejected
        assert!(serde_json::from_str::<TargetScheme>(
            r#"{"a":0.2,"placement":"anchored","elll":1}"#
        )
        .is_err());
    }
}
