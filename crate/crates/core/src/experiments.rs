//! Ensemble drivers: seeded experiment runs shared by the CLI and the
//! acceptance suite. Each driver precomputes per-index state once (targets,
//! measures, mantissas, σ values), fans seeds out in parallel, and reduces in
//! seed order so runs are bit-reproducible.

use crate::dimlab::{build_target_bank, DimError};
use crate::ergolab::{
    ergodic_average, AverageSeries, CirclePoint, ErgoError, Observable, Point, SystemSpec,
};
use crate::hitting::{
    hitting_set, membership_at, CompiledTarget, EvalBank, FracScanner, FractionalOracle, HitError,
    memberships_for_seed,
};
use crate::measurelab::{cov, fourfold, mc_joint, CorrelationReport, MeasureCtx, McEstimate};
use crate::par::par_map;
use crate::params::Dec;
use crate::scalar::PrecisionPolicy;
use crate::seeding::{sub_seed, BitStream};
use crate::sequences::{GrowthSequence, IntegerSet, Placement, TargetScheme};
use crate::torus::Membership;
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// law of large numbers over a seed ensemble

#[derive(Clone, Debug, Serialize)]
pub struct LlnSeedRow {
    pub seed_index: u64,
    pub counts: Vec<u64>,
    pub uncertain: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LlnEnsemble {
    pub grid: Vec<u64>,
    /// Σ_{n≤N} λ(I_n) at each grid point
    pub measure_sums: Vec<f64>,
    pub per_seed: Vec<LlnSeedRow>,
    /// ensemble mean/sd of count / Σλ(I_n)
    pub mean_ratio_sigma: Vec<f64>,
    pub sd_ratio_sigma: Vec<f64>,
    /// ensemble mean of count / N^{1-a}
    pub mean_ratio_pow: Vec<f64>,
}

pub fn lln_ensemble(
    seq: &GrowthSequence,
    scheme: &TargetScheme,
    grid: &[u64],
    seeds: u64,
    seed: u64,
    policy: &PrecisionPolicy,
) -> Result<LlnEnsemble, DimError> {
    let mut grid: Vec<u64> = grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let n_max = *grid.last().expect("nonempty grid");
    let members: Vec<u64> = (1..=n_max).collect();
    let targets = build_target_bank(scheme, &members, policy)?;
    let bank = EvalBank::build(seq, &members, policy)?;

    let mut measure_sums = Vec::with_capacity(grid.len());
    let mut acc = 0f64;
    let mut gi = 0usize;
    for (i, t) in targets.iter().enumerate() {
        acc += t.interval().measure().to_f64();
        while gi < grid.len() && grid[gi] == (i + 1) as u64 {
            measure_sums.push(acc);
            gi += 1;
        }
    }

    let per_seed: Vec<Result<LlnSeedRow, DimError>> = par_map((0..seeds).collect(), |i| {
        let y = FractionalOracle::bitstream(sub_seed(seed, "lln-y", i), policy);
        let ms = memberships_for_seed(&y, seq, &members, &bank, &targets, policy)?;
        let mut counts = Vec::with_capacity(grid.len());
        let mut hits = 0u64;
        let mut uncertain = 0u64;
        let mut j = 0usize;
        for &stop in &grid {
            while j < members.len() && members[j] <= stop {
                match ms[j] {
                    Membership::Member => hits += 1,
                    Membership::Uncertain => uncertain += 1,
                    Membership::NonMember => {}
                }
                j += 1;
            }
            counts.push(hits);
        }
        Ok(LlnSeedRow {
            seed_index: i,
            counts,
            uncertain,
        })
    });
    let per_seed: Vec<LlnSeedRow> = per_seed.into_iter().collect::<Result<_, _>>()?;

    let one_minus_a = 1.0 - scheme.a.to_f64();
    let cols = grid.len();
    let mut mean_ratio_sigma = vec![0f64; cols];
    let mut sd_ratio_sigma = vec![0f64; cols];
    let mut mean_ratio_pow = vec![0f64; cols];
    for gi in 0..cols {
        let ratios: Vec<f64> = per_seed
            .iter()
            .map(|r| r.counts[gi] as f64 / measure_sums[gi])
            .collect();
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let var = ratios.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>()
            / ratios.len() as f64;
        mean_ratio_sigma[gi] = mean;
        sd_ratio_sigma[gi] = var.sqrt();
        mean_ratio_pow[gi] = per_seed
            .iter()
            .map(|r| r.counts[gi] as f64 / (grid[gi] as f64).powf(one_minus_a))
            .sum::<f64>()
            / per_seed.len() as f64;
    }
    Ok(LlnEnsemble {
        grid,
        measure_sums,
        per_seed,
        mean_ratio_sigma,
        sd_ratio_sigma,
        mean_ratio_pow,
    })
}

// ---------------------------------------------------------------------------
// bound-fit grids

#[derive(Clone, Debug, Serialize)]
pub struct BoundRow {
    pub indices: Vec<u64>,
    pub a: String,
    pub placement: String,
    pub exact: f64,
    pub bound: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundFitReport {
    pub kind: String,
    pub fit_cases: usize,
    pub fresh_cases: usize,
    pub c_fitted: f64,
    pub fresh_max_ratio: f64,
    /// pass iff fresh_max_ratio ≤ 10·c_fitted
    pub pass: bool,
    pub fit_rows: Vec<BoundRow>,
    pub fresh_rows: Vec<BoundRow>,
}

const BOUND_A_CHOICES: [&str; 3] = ["0.2", "0.3", "0.5"];

fn case_scheme(stream: &BitStream, case: u64) -> (Dec, Placement, TargetScheme) {
    let a = Dec::parse(BOUND_A_CHOICES[(stream.bits_u64(0, 8) % 3) as usize]).unwrap();
    let placement = match stream.bits_u64(8, 8) % 3 {
        0 => Placement::Anchored,
        1 => Placement::Symmetric,
        _ => Placement::SeededRandom,
    };
    let scheme = TargetScheme {
        a: a.clone(),
        ell: 2,
        placement: placement.clone(),
        scale_c: Dec::parse("1").unwrap(),
        n0: 1,
        seed: case,
    };
    (a, placement, scheme)
}

fn placement_name(p: &Placement) -> String {
    match p {
        Placement::Anchored => "anchored",
        Placement::Symmetric => "symmetric",
        Placement::SeededRandom => "seeded_random",
        Placement::Split => "split",
    }
    .to_string()
}

/// Covariance cases on the dyadic geometric family: n < m ≤ m_max, with the
/// target exponent and placement drawn per case.
pub fn cov_bound_rows(
    cases: u64,
    m_max: u64,
    seed: u64,
    policy: &PrecisionPolicy,
) -> Result<Vec<BoundRow>, crate::measurelab::MeasError> {
    let seq = GrowthSequence::geometric(Dec::parse("2").unwrap());
    let rows: Vec<Result<BoundRow, crate::measurelab::MeasError>> =
        par_map((0..cases).collect(), |case| {
            let stream = BitStream::new(sub_seed(seed, "cov-case", case));
            let (a, placement, scheme) = case_scheme(&stream, case);
            let m = 3 + stream.bits_u64(16, 16) % (m_max - 2); // m ∈ [3, m_max]
            let n = 2 + stream.bits_u64(32, 16) % (m - 2); // n ∈ [2, m-1]
            let ctx = MeasureCtx::new(&seq, &scheme, policy);
            let report = cov(&ctx, n, m)?;
            Ok(BoundRow {
                indices: vec![n, m],
                a: a.to_string(),
                placement: placement_name(&placement),
                exact: report.exact.as_ref().unwrap().to_f64(),
                bound: report.paper_bound,
                ratio: report.ratio,
            })
        });
    rows.into_iter().collect()
}

/// Four-fold cases with indices below `idx_max` (so `u ≤ 2^idx_max`).
pub fn fourfold_bound_rows(
    cases: u64,
    idx_max: u64,
    seed: u64,
    policy: &PrecisionPolicy,
) -> Result<Vec<BoundRow>, crate::measurelab::MeasError> {
    let seq = GrowthSequence::geometric(Dec::parse("2").unwrap());
    let rows: Vec<Result<BoundRow, crate::measurelab::MeasError>> =
        par_map((0..cases).collect(), |case| {
            let stream = BitStream::new(sub_seed(seed, "fourfold-case", case));
            let (a, placement, scheme) = case_scheme(&stream, case);
            // four distinct indices in [2, idx_max]
            let span = idx_max - 1;
            let mut idx = [0u64; 4];
            let mut chosen = 0usize;
            let mut draw = 0u64;
            while chosen < 4 {
                let v = 2 + stream.bits_u64(48 + 8 * draw, 8) % span;
                draw += 1;
                if !idx[..chosen].contains(&v) {
                    idx[chosen] = v;
                    chosen += 1;
                }
            }
            idx.sort_unstable();
            let ctx = MeasureCtx::new(&seq, &scheme, policy);
            let report = fourfold(&ctx, idx)?;
            Ok(BoundRow {
                indices: idx.to_vec(),
                a: a.to_string(),
                placement: placement_name(&placement),
                exact: report.exact.as_ref().map_or(f64::NAN, |e| e.to_f64()),
                bound: report.paper_bound,
                ratio: report.ratio,
            })
        });
    rows.into_iter().collect()
}

/// Fit the absolute constant on one grid, then verify a fresh grid stays
/// within 10× of it.
pub fn bound_fit(
    kind: &str,
    cases: u64,
    scale_limit: u64,
    fit_seed: u64,
    fresh_seed: u64,
    policy: &PrecisionPolicy,
) -> Result<BoundFitReport, crate::measurelab::MeasError> {
    let gen = |seed: u64| -> Result<Vec<BoundRow>, crate::measurelab::MeasError> {
        match kind {
            "fourfold" => fourfold_bound_rows(cases, scale_limit, seed, policy),
            _ => cov_bound_rows(cases, scale_limit, seed, policy),
        }
    };
    let fit_rows = gen(fit_seed)?;
    let fresh_rows = gen(fresh_seed)?;
    let max_ratio = |rows: &[BoundRow]| {
        rows.iter()
            .map(|r| r.ratio)
            .filter(|r| r.is_finite())
            .fold(0.0f64, f64::max)
    };
    let c_fitted = max_ratio(&fit_rows);
    let fresh_max_ratio = max_ratio(&fresh_rows);
    Ok(BoundFitReport {
        kind: kind.to_string(),
        fit_cases: fit_rows.len(),
        fresh_cases: fresh_rows.len(),
        c_fitted,
        fresh_max_ratio,
        pass: fresh_max_ratio <= 10.0 * c_fitted,
        fit_rows,
        fresh_rows,
    })
}

// ---------------------------------------------------------------------------
// Monte Carlo consistency ensemble

#[derive(Clone, Debug, Serialize)]
pub struct McConsistencyCase {
    pub indices: Vec<u64>,
    pub exact: f64,
    pub estimate: McEstimate,
    pub covered: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct McConsistencyReport {
    pub cases: Vec<McConsistencyCase>,
    pub covered: usize,
}

/// Random joint specs whose exact measure is checked against the sampled
/// Wilson interval.
pub fn mc_consistency(
    cases: u64,
    samples: u64,
    seed: u64,
    policy: &PrecisionPolicy,
) -> Result<McConsistencyReport, crate::measurelab::MeasError> {
    let seq = GrowthSequence::geometric(Dec::parse("2").unwrap());
    let case_reports: Vec<Result<McConsistencyCase, crate::measurelab::MeasError>> =
        par_map((0..cases).collect(), |case| {
            let stream = BitStream::new(sub_seed(seed, "mc-case", case));
            let (_, _, scheme) = case_scheme(&stream, case);
            let k = 1 + (stream.bits_u64(16, 8) % 3) as usize; // k ∈ 1..=3
            let mut idx: Vec<u64> = Vec::new();
            let mut draw = 0u64;
            while idx.len() < k {
                let v = 2 + stream.bits_u64(24 + 8 * draw, 8) % 8; // ≤ 2^9 pieces
                draw += 1;
                if !idx.contains(&v) {
                    idx.push(v);
                }
            }
            idx.sort_unstable();
            let ctx = MeasureCtx::new(&seq, &scheme, policy);
            let exact = crate::measurelab::joint_measure_sweep(&ctx, &idx)?.to_f64();
            let estimate = mc_joint(&ctx, &idx, samples, sub_seed(seed, "mc-run", case))?;
            Ok(McConsistencyCase {
                indices: idx,
                exact,
                covered: estimate.ci_lo <= exact && exact <= estimate.ci_hi,
                estimate,
            })
        });
    let cases: Vec<McConsistencyCase> = case_reports.into_iter().collect::<Result<_, _>>()?;
    let covered = cases.iter().filter(|c| c.covered).count();
    Ok(McConsistencyReport { cases, covered })
}

// ---------------------------------------------------------------------------
// correlation one-offs

pub fn corr_experiment(
    seq: &GrowthSequence,
    scheme: &TargetScheme,
    n: u64,
    m: u64,
    mc_samples: Option<u64>,
    seed: u64,
    policy: &PrecisionPolicy,
) -> Result<CorrelationReport, crate::measurelab::MeasError> {
    let ctx = MeasureCtx::new(seq, scheme, policy);
    let mut report = cov(&ctx, n, m)?;
    if let Some(samples) = mc_samples {
        report.mc = Some(mc_joint(&ctx, &[n, m], samples, sub_seed(seed, "corr-mc", 0))?);
    }
    Ok(report)
}

pub fn fourfold_experiment(
    seq: &GrowthSequence,
    scheme: &TargetScheme,
    idx: [u64; 4],
    mc_samples: Option<u64>,
    seed: u64,
    policy: &PrecisionPolicy,
) -> Result<CorrelationReport, crate::measurelab::MeasError> {
    let ctx = MeasureCtx::new(seq, scheme, policy);
    let mut report = fourfold(&ctx, idx)?;
    if let Some(samples) = mc_samples {
        report.mc = Some(mc_joint(
            &ctx,
            &idx,
            samples,
            sub_seed(seed, "fourfold-mc", 0),
        )?);
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// ergodic ensembles

/// Base-point specification for ergodic runs.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum XSpec {
    /// seeded binary expansion; each ensemble member gets a derived seed
    Stream,
    Rational { p: u64, q: u64 },
    Index { i: u64 },
    Component { which: u8, p: u64, q: u64 },
}

impl XSpec {
    pub fn point(&self, run_seed: u64, member: u64) -> Point {
        match self {
            XSpec::Stream => Point::Circle(CirclePoint::stream(sub_seed(
                run_seed, "ergodic-x", member,
            ))),
            XSpec::Rational { p, q } => Point::Circle(CirclePoint::rational(*p, *q)),
            XSpec::Index { i } => Point::Index(*i),
            XSpec::Component { which, p, q } => {
                Point::Component(*which, CirclePoint::rational(*p, *q))
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ErgodicSeedRun {
    pub seed_index: u64,
    pub hits_found: u64,
    pub series: AverageSeries,
}

#[derive(Clone, Debug, Serialize)]
pub struct ErgodicEnsemble {
    pub per_seed: Vec<ErgodicSeedRun>,
    pub regime_value: f64,
    pub regime_ok: bool,
}

/// First `m_target` hit times of a seeded y, extending the horizon until
/// enough hits accumulate.
pub fn hits_for_target_count(
    y: &FractionalOracle,
    seq: &GrowthSequence,
    scheme: &TargetScheme,
    m_target: u64,
    policy: &PrecisionPolicy,
) -> Result<Vec<u64>, HitError> {
    let a = scheme.a.to_f64();
    let c = scheme.scale_c.to_f64();
    let mut horizon = (((m_target as f64) * (1.0 - a) / c).powf(1.0 / (1.0 - a)) * 1.7) as u64;
    horizon = horizon.max(m_target).max(64);
    for _ in 0..6 {
        let h = hitting_set(y, seq, scheme, horizon, &IntegerSet::All, policy)?;
        if h.ns.len() as u64 >= m_target {
            let mut ns = h.ns;
            ns.truncate(m_target as usize);
            return Ok(ns);
        }
        horizon *= 2;
    }
    hitting_set(y, seq, scheme, horizon, &IntegerSet::All, policy).map(|h| h.ns)
}

/// Subsequence ergodic averages over an ensemble of (y, x) seeds.
#[allow(clippy::too_many_arguments)]
pub fn ergodic_ensemble(
    seq: &GrowthSequence,
    scheme: &TargetScheme,
    sys: &SystemSpec,
    f: &Observable,
    x_spec: &XSpec,
    m_grid: &[u64],
    seeds: u64,
    seed: u64,
    delta: f64,
    policy: &PrecisionPolicy,
) -> Result<ErgodicEnsemble, ErgoError> {
    let a = scheme.a.to_f64();
    let regime_value = 2.0 * a + delta;
    let m_target = m_grid.iter().copied().max().unwrap_or(0);
    let per_seed: Vec<Result<ErgodicSeedRun, ErgoError>> = par_map((0..seeds).collect(), |i| {
        let y_seed = sub_seed(seed, "ergodic-y", i);
        let y = FractionalOracle::bitstream(y_seed, policy);
        let hits = hits_for_target_count(&y, seq, scheme, m_target, policy)?;
        let x = x_spec.point(seed, i);
        // the rotation-by-y obstruction: resolve the marker angle to this
        // member's own hitting point
        let resolved;
        let sys_here = if matches!(
            sys,
            SystemSpec::Rotation {
                theta: crate::ergolab::Angle::OracleY
            }
        ) {
            resolved = SystemSpec::Rotation {
                theta: crate::ergolab::Angle::StreamSeed(y_seed),
            };
            &resolved
        } else {
            sys
        };
        let series = ergodic_average(&hits, sys_here, f, &x, m_grid, regime_value, policy)?;
        Ok(ErgodicSeedRun {
            seed_index: i,
            hits_found: hits.len() as u64,
            series,
        })
    });
    let per_seed: Vec<ErgodicSeedRun> = per_seed.into_iter().collect::<Result<_, _>>()?;
    Ok(ErgodicEnsemble {
        per_seed,
        regime_value,
        regime_ok: regime_value < 1.0,
    })
}

// ---------------------------------------------------------------------------
// one-off hitting-set experiment

#[derive(Clone, Debug, Serialize)]
pub struct HitExperimentOutput {
    pub horizon: u64,
    pub count: u64,
    pub uncertain: u64,
    pub ns: Vec<u64>,
}

pub fn hit_experiment(
    seq: &GrowthSequence,
    scheme: &TargetScheme,
    restrict: &IntegerSet,
    y: &FractionalOracle,
    n_max: u64,
    policy: &PrecisionPolicy,
) -> Result<HitExperimentOutput, HitError> {
    let h = hitting_set(y, seq, scheme, n_max, restrict, policy)?;
    Ok(HitExperimentOutput {
        horizon: h.horizon,
        count: h.ns.len() as u64,
        uncertain: h.uncertain.len() as u64,
        ns: h.ns,
    })
}

/// Check a single membership (diagnostics).
pub fn membership_probe(
    seq: &GrowthSequence,
    scheme: &TargetScheme,
    y: &FractionalOracle,
    n: u64,
    policy: &PrecisionPolicy,
) -> Result<Membership, HitError> {
    let mut scanner = FracScanner::new(y, seq, n, policy)?;
    let target = CompiledTarget::new(scheme.interval(n, policy.work_bits)?);
    membership_at(&target, &mut scanner, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequences::SeqFamily;

    fn policy() -> PrecisionPolicy {
        PrecisionPolicy::default()
    }

    #[test]
    fn lln_ensemble_concentrates() {
        let p = policy();
        let seq = GrowthSequence::geometric(Dec::parse("2").unwrap());
        let scheme = TargetScheme::anchored(Dec::parse("0.3").unwrap());
        let e = lln_ensemble(&seq, &scheme, &[1000, 10_000], 30, 7, &p).unwrap();
        let last = e.grid.len() - 1;
        assert!((e.mean_ratio_sigma[last] - 1.0).abs() < 0.1);
        assert!(e.sd_ratio_sigma[last] < e.sd_ratio_sigma[0]);
        // raw power ratio tracks 1/(1-a)
        assert!((e.mean_ratio_pow[last] - 1.0 / 0.7).abs() < 0.15);
        assert!(e.per_seed.iter().all(|r| r.uncertain == 0));
    }

    #[test]
    fn bound_fit_small_grids_pass() {
        let p = policy();
        let r = bound_fit("cov", 40, 12, 1, 2, &p).unwrap();
        assert!(r.c_fitted > 0.0);
        assert!(r.pass, "fresh {} vs fit {}", r.fresh_max_ratio, r.c_fitted);

        let r = bound_fit("fourfold", 12, 10, 3, 4, &p).unwrap();
        assert!(r.c_fitted.is_finite());
        assert!(r.pass, "fresh {} vs fit {}", r.fresh_max_ratio, r.c_fitted);
    }

    #[test]
    fn mc_consistency_covers() {
        let p = policy();
        let r = mc_consistency(20, 20_000, 11, &p).unwrap();
        assert!(r.covered >= 17, "covered {}/20", r.covered);
    }

    #[test]
    fn ergodic_ensemble_identity_and_rotation() {
        let p = policy();
        let seq = GrowthSequence::geometric(Dec::parse("2").unwrap());
        let scheme = TargetScheme::anchored(Dec::parse("0.3").unwrap());
        // identity: exact f(x) at every M for every seed
        let f: Observable =
            serde_json::from_str(r#"{"kind":"trig","mean":0.25,"cos":[0.5]}"#).unwrap();
        let e = ergodic_ensemble(
            &seq,
            &scheme,
            &SystemSpec::Identity,
            &f,
            &XSpec::Rational { p: 1, q: 3 },
            &[1, 16, 128],
            4,
            9,
            0.0,
            &p,
        )
        .unwrap();
        for run in &e.per_seed {
            for row in &run.series.rows {
                assert_eq!(row.deviation, 0.0);
            }
        }

        // golden rotation with zero-mean cosine: averages shrink
        let sys: SystemSpec =
            serde_json::from_str(r#"{"kind":"rotation","theta":"golden"}"#).unwrap();
        let f: Observable = serde_json::from_str(r#"{"kind":"trig","cos":[1]}"#).unwrap();
        let e = ergodic_ensemble(
            &seq, &scheme, &sys, &f, &XSpec::Stream, &[64, 1024], 6, 21, 0.0, &p,
        )
        .unwrap();
        for run in &e.per_seed {
            let last = run.series.rows.last().unwrap();
            assert!(last.subsequence_avg.abs() < 0.2, "avg {}", last.subsequence_avg);
            assert_eq!(last.target, 0.0);
        }
    }

    #[test]
    fn hits_extend_until_target_count() {
        let p = policy();
        let seq = GrowthSequence {
            family: SeqFamily::Geometric {
                alpha: Dec::parse("3/2").unwrap(),
            },
            delta: None,
            c: None,
        };
        let scheme = TargetScheme::anchored(Dec::parse("0.2").unwrap());
        let y = FractionalOracle::bitstream(3, &p);
        let hits = hits_for_target_count(&y, &seq, &scheme, 500, &p).unwrap();
        assert_eq!(hits.len(), 500);
        assert!(hits.windows(2).all(|w| w[0] < w[1]));
    }
}
