//! Experiment dispatch: validate the config, run the owning module, write
//! CSV/JSON artifacts plus the manifest.

use crate::config::*;
use crate::manifest::{checksum_file, RegimeFlags, RunManifest};
use serde::de::DeserializeOwned;
use serde_json::json;
use shrinklab::dimlab::{mass_dim, transversality_experiment, weighted_sum, TransversalityConfig};
use shrinklab::ergolab::{default_b, vprime_expectation, ErgoError};
use shrinklab::experiments::{
    bound_fit, corr_experiment, ergodic_ensemble, fourfold_experiment, hit_experiment,
    lln_ensemble, mc_consistency,
};
use shrinklab::hitting::HitError;
use shrinklab::measurelab::MeasError;
use shrinklab::scalar::NumError;
use shrinklab::sequences::SeqError;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("precision failure: {0}")]
    Precision(String),
    #[error("budget failure: {0}")]
    Budget(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Precision(_) => 2,
            RunError::Budget(_) => 3,
            RunError::Io(_) => 4,
        }
    }
}

fn class_num(e: &NumError) -> RunError {
    RunError::Precision(e.to_string())
}

fn class_seq(e: SeqError) -> RunError {
    match e {
        SeqError::Num(n) => class_num(&n),
        SeqError::Validation(v) => RunError::Config(v),
        other => RunError::Config(other.to_string()),
    }
}

fn class_hit(e: HitError) -> RunError {
    match e {
        HitError::Num(n) => class_num(&n),
        HitError::Seq(s) => class_seq(s),
        other => RunError::Config(other.to_string()),
    }
}

fn class_meas(e: MeasError) -> RunError {
    match e {
        MeasError::Num(n) => class_num(&n),
        MeasError::Seq(s) => class_seq(s),
        MeasError::Budget { .. } => RunError::Budget(e.to_string()),
    }
}

fn class_dim(e: shrinklab::dimlab::DimError) -> RunError {
    use shrinklab::dimlab::DimError as D;
    match e {
        D::Hit(h) => class_hit(h),
        D::Seq(s) => class_seq(s),
        D::Num(n) => class_num(&n),
        D::Meas(m) => class_meas(m),
        other => RunError::Config(other.to_string()),
    }
}

fn class_ergo(e: ErgoError) -> RunError {
    match e {
        ErgoError::Num(n) => class_num(&n),
        ErgoError::Seq(s) => class_seq(s),
        ErgoError::Hit(h) => class_hit(h),
        ErgoError::Dim(d) => class_dim(d),
        ErgoError::ExponentBudget { .. } => RunError::Precision(e.to_string()),
        ErgoError::PointMismatch(m) => RunError::Config(m.to_string()),
    }
}

/// Deserialize params with a field-path diagnostic on failure.
fn params<T: DeserializeOwned>(value: &serde_json::Value) -> Result<T, RunError> {
    let text = value.to_string();
    let mut de = serde_json::de::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(&mut de)
        .map_err(|e| RunError::Config(format!("{} at {}", e.inner(), e.path())))
}

fn csv(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut s = String::new();
    s.push_str(&header.join(","));
    s.push('\n');
    for row in rows {
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn f(v: f64) -> String {
    format!("{v}")
}

pub struct RunOutput {
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
}

/// Run a resolved config into `out_dir`, returning the manifest.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<RunOutput, RunError> {
    config
        .precision
        .validate()
        .map_err(RunError::Config)?;
    let started = Instant::now();
    let (files, regime) = dispatch(config)?;
    fs::create_dir_all(out_dir)?;
    let mut entries = Vec::new();
    for (name, content) in &files {
        let path = out_dir.join(name);
        fs::write(&path, content)?;
        entries.push(checksum_file(&path)?);
    }
    let manifest = RunManifest {
        tool: format!("shrinklab {}", env!("CARGO_PKG_VERSION")),
        config: config.clone(),
        regime,
        wall_seconds: started.elapsed().as_secs_f64(),
        files: entries,
    };
    let manifest_path = out_dir.join("manifest.json");
    fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
    )?;
    Ok(RunOutput {
        manifest,
        manifest_path,
    })
}

type Artifacts = (Vec<(String, String)>, RegimeFlags);

fn regime_for(a: f64, delta: f64) -> RegimeFlags {
    RegimeFlags {
        a: Some(a),
        delta: Some(delta),
        delta_plus_a: Some(delta + a),
        delta_plus_a_lt_1: Some(delta + a < 1.0),
        two_a_plus_delta: Some(2.0 * a + delta),
        two_a_plus_delta_lt_1: Some(2.0 * a + delta < 1.0),
        ..RegimeFlags::default()
    }
}

fn dispatch(config: &ExperimentConfig) -> Result<Artifacts, RunError> {
    let policy = &config.precision;
    let seed = config.seed;
    match config.experiment.as_str() {
        "hit" => {
            let p: HitParams = params(&config.params)?;
            p.u.validate().map_err(class_seq)?;
            p.target.validate().map_err(class_seq)?;
            p.restrict.validate().map_err(class_seq)?;
            let out = hit_experiment(&p.u, &p.target, &p.restrict, &p.y, p.n_max, policy)
                .map_err(class_hit)?;
            let rows = out.ns.iter().map(|n| vec![n.to_string()]).collect();
            let files = vec![
                ("hits.csv".to_string(), csv(&["n"], rows)),
                (
                    "hits.json".to_string(),
                    serde_json::to_string_pretty(&out).unwrap() + "\n",
                ),
            ];
            Ok((files, regime_for(p.target.a.to_f64(), effective_delta(&p.u))))
        }
        "lln" => {
            let p: LlnParams = params(&config.params)?;
            p.u.validate().map_err(class_seq)?;
            p.target.validate().map_err(class_seq)?;
            let grid = p.window.grid();
            let e = lln_ensemble(&p.u, &p.target, &grid, p.seeds, seed, policy)
                .map_err(class_dim)?;
            let mut rows = Vec::new();
            for sr in &e.per_seed {
                for (gi, &n) in e.grid.iter().enumerate() {
                    rows.push(vec![
                        sr.seed_index.to_string(),
                        n.to_string(),
                        sr.counts[gi].to_string(),
                        sr.uncertain.to_string(),
                        f(sr.counts[gi] as f64 / e.measure_sums[gi]),
                        f(sr.counts[gi] as f64
                            / (n as f64).powf(1.0 - p.target.a.to_f64())),
                    ]);
                }
            }
            let files = vec![
                (
                    "lln.csv".to_string(),
                    csv(
                        &["seed", "N", "count", "uncertain", "ratio_sigma", "ratio_pow"],
                        rows,
                    ),
                ),
                (
                    "lln_summary.json".to_string(),
                    serde_json::to_string_pretty(&json!({
                        "grid": e.grid,
                        "measure_sums": e.measure_sums,
                        "mean_ratio_sigma": e.mean_ratio_sigma,
                        "sd_ratio_sigma": e.sd_ratio_sigma,
                        "mean_ratio_pow": e.mean_ratio_pow,
                    }))
                    .unwrap()
                        + "\n",
                ),
            ];
            Ok((files, regime_for(p.target.a.to_f64(), effective_delta(&p.u))))
        }
        "corr" => {
            let p: CorrParams = params(&config.params)?;
            p.u.validate().map_err(class_seq)?;
            p.target.validate().map_err(class_seq)?;
            if p.n >= p.m {
                return Err(RunError::Config("corr requires n < m".into()));
            }
            let r = corr_experiment(&p.u, &p.target, p.n, p.m, p.mc_samples, seed, policy)
                .map_err(class_meas)?;
            let row = vec![vec![
                p.n.to_string(),
                p.m.to_string(),
                f(r.exact.as_ref().map_or(f64::NAN, |e| e.to_f64())),
                f(r.paper_bound),
                f(r.ratio),
                r.joint.map_or(String::new(), f),
                r.mc.as_ref().map_or(String::new(), |m| f(m.p_hat)),
                r.mc.as_ref().map_or(String::new(), |m| f(m.ci_lo)),
                r.mc.as_ref().map_or(String::new(), |m| f(m.ci_hi)),
            ]];
            let files = vec![
                (
                    "corr.csv".to_string(),
                    csv(
                        &["n", "m", "exact", "bound", "ratio", "joint", "mc_joint", "ci_lo", "ci_hi"],
                        row,
                    ),
                ),
                (
                    "corr.json".to_string(),
                    serde_json::to_string_pretty(&r).unwrap() + "\n",
                ),
            ];
            Ok((files, regime_for(p.target.a.to_f64(), effective_delta(&p.u))))
        }
        "fourfold" => {
            let p: FourfoldParams = params(&config.params)?;
            p.u.validate().map_err(class_seq)?;
            p.target.validate().map_err(class_seq)?;
            let r = fourfold_experiment(&p.u, &p.target, p.indices, p.mc_samples, seed, policy)
                .map_err(class_meas)?;
            let row = vec![vec![
                p.indices[0].to_string(),
                p.indices[1].to_string(),
                p.indices[2].to_string(),
                p.indices[3].to_string(),
                f(r.exact.as_ref().map_or(f64::NAN, |e| e.to_f64())),
                f(r.paper_bound),
                f(r.ratio),
                r.joint.map_or(String::new(), f),
                r.mc.as_ref().map_or(String::new(), |m| f(m.p_hat)),
                r.mc.as_ref().map_or(String::new(), |m| f(m.ci_lo)),
                r.mc.as_ref().map_or(String::new(), |m| f(m.ci_hi)),
            ]];
            let files = vec![
                (
                    "fourfold.csv".to_string(),
                    csv(
                        &[
                            "n", "m", "r", "s", "exact", "bound", "ratio", "joint", "mc_joint",
                            "ci_lo", "ci_hi",
                        ],
                        row,
                    ),
                ),
                (
                    "fourfold.json".to_string(),
                    serde_json::to_string_pretty(&r).unwrap() + "\n",
                ),
            ];
            Ok((files, regime_for(p.target.a.to_f64(), effective_delta(&p.u))))
        }
        "bounds" => {
            let p: BoundsParams = params(&config.params)?;
            match p.kind.as_str() {
                "cov" | "fourfold" => {
                    let scale = p.scale_limit.unwrap_or(if p.kind == "cov" { 16 } else { 13 });
                    let fit_seed = shrinklab::seeding::sub_seed(seed, "bounds-fit", 0);
                    let fresh_seed = shrinklab::seeding::sub_seed(seed, "bounds-fresh", 0);
                    let r = bound_fit(&p.kind, p.cases, scale, fit_seed, fresh_seed, policy)
                        .map_err(class_meas)?;
                    let mk_rows = |rows: &[shrinklab::experiments::BoundRow]| {
                        rows.iter()
                            .map(|row| {
                                let mut cells: Vec<String> =
                                    row.indices.iter().map(u64::to_string).collect();
                                while cells.len() < 4 {
                                    cells.push(String::new());
                                }
                                cells.extend([
                                    row.a.clone(),
                                    row.placement.clone(),
                                    f(row.exact),
                                    f(row.bound),
                                    f(row.ratio),
                                ]);
                                cells
                            })
                            .collect::<Vec<_>>()
                    };
                    let header = [
                        "n", "m", "r", "s", "a", "placement", "exact", "bound", "ratio",
                    ];
                    let files = vec![
                        ("bounds_fit.csv".to_string(), csv(&header, mk_rows(&r.fit_rows))),
                        (
                            "bounds_fresh.csv".to_string(),
                            csv(&header, mk_rows(&r.fresh_rows)),
                        ),
                        (
                            "bounds_summary.json".to_string(),
                            serde_json::to_string_pretty(&json!({
                                "kind": r.kind,
                                "fit_cases": r.fit_cases,
                                "fresh_cases": r.fresh_cases,
                                "c_fitted": r.c_fitted,
                                "fresh_max_ratio": r.fresh_max_ratio,
                                "pass": r.pass,
                            }))
                            .unwrap()
                                + "\n",
                        ),
                    ];
                    Ok((files, RegimeFlags::default()))
                }
                "mc" => {
                    let samples = p.samples.unwrap_or(100_000);
                    let r = mc_consistency(p.cases, samples, seed, policy).map_err(class_meas)?;
                    let rows = r
                        .cases
                        .iter()
                        .map(|c| {
                            vec![
                                c.indices
                                    .iter()
                                    .map(u64::to_string)
                                    .collect::<Vec<_>>()
                                    .join(";"),
                                f(c.exact),
                                f(c.estimate.p_hat),
                                f(c.estimate.ci_lo),
                                f(c.estimate.ci_hi),
                                c.covered.to_string(),
                            ]
                        })
                        .collect();
                    let files = vec![
                        (
                            "mc_cases.csv".to_string(),
                            csv(
                                &["indices", "exact", "p_hat", "ci_lo", "ci_hi", "covered"],
                                rows,
                            ),
                        ),
                        (
                            "mc_summary.json".to_string(),
                            serde_json::to_string_pretty(&json!({
                                "cases": r.cases.len(),
                                "covered": r.covered,
                            }))
                            .unwrap()
                                + "\n",
                        ),
                    ];
                    Ok((files, RegimeFlags::default()))
                }
                other => Err(RunError::Config(format!(
                    "bounds.kind must be cov|fourfold|mc, got {other:?}"
                ))),
            }
        }
        "dim" => {
            let p: DimParams = params(&config.params)?;
            p.set.validate().map_err(class_seq)?;
            let est = mass_dim(&p.set, &p.window).map_err(class_dim)?;
            let grid = p.window.grid();
            let counts = p.set.counts_on_grid(&grid);
            let rows = grid
                .iter()
                .zip(&counts)
                .map(|(n, c)| vec![n.to_string(), c.to_string()])
                .collect();
            let files = vec![
                ("dim.csv".to_string(), csv(&["N", "count"], rows)),
                (
                    "dim.json".to_string(),
                    serde_json::to_string_pretty(&est).unwrap() + "\n",
                ),
            ];
            Ok((files, RegimeFlags::default()))
        }
        "weighted" => {
            let p: WeightedParams = params(&config.params)?;
            p.set.validate().map_err(class_seq)?;
            let mut rows = Vec::new();
            let mut summaries = Vec::new();
            for gamma in &p.gammas {
                let series = weighted_sum(&p.set, &p.a.0, &gamma.0, &p.window, policy)
                    .map_err(class_dim)?;
                for pt in &series.points {
                    rows.push(vec![
                        gamma.to_string(),
                        pt.n.to_string(),
                        f(pt.s),
                        f(pt.s1),
                        f(pt.s2),
                        f(pt.identity_gap),
                    ]);
                }
                summaries.push(json!({
                    "gamma": gamma.to_string(),
                    "decaying": series.decaying,
                    "growing": series.growing,
                }));
            }
            let files = vec![
                (
                    "weighted.csv".to_string(),
                    csv(&["gamma", "N", "S", "S1", "S2", "identity_gap"], rows),
                ),
                (
                    "weighted_summary.json".to_string(),
                    serde_json::to_string_pretty(&json!({ "series": summaries })).unwrap() + "\n",
                ),
            ];
            Ok((files, RegimeFlags::default()))
        }
        "transverse" => {
            let p: TransverseParams = params(&config.params)?;
            p.set.validate().map_err(class_seq)?;
            p.u.validate().map_err(class_seq)?;
            p.target.validate().map_err(class_seq)?;
            let cfg = TransversalityConfig {
                set: &p.set,
                seq: &p.u,
                scheme: &p.target,
                window: &p.window,
                seeds: p.seeds,
                seed,
                lambda_window: p.lambda_window,
            };
            let r = transversality_experiment(&cfg, policy).map_err(class_dim)?;
            let counts_a = p.set.counts_on_grid(&r.grid);
            let mut rows = Vec::new();
            for sr in &r.per_seed {
                for (gi, &n) in r.grid.iter().enumerate() {
                    rows.push(vec![
                        sr.seed_index.to_string(),
                        n.to_string(),
                        counts_a[gi].to_string(),
                        sr.counts[gi].to_string(),
                        f(sr.counts[gi] as f64 / counts_a[gi].max(1) as f64),
                    ]);
                }
            }
            let mut regime = regime_for(p.target.a.to_f64(), effective_delta(&p.u));
            regime.dim_a = Some(r.dim_a.slope);
            regime.delta_plus_a_lt_dim_a = Some(
                effective_delta(&p.u) + p.target.a.to_f64() < r.dim_a.slope,
            );
            let files = vec![
                (
                    "transverse.csv".to_string(),
                    csv(
                        &["seed", "N", "count_A", "count_A_hit", "ratio"],
                        rows,
                    ),
                ),
                (
                    "transverse_summary.json".to_string(),
                    serde_json::to_string_pretty(&json!({
                        "dim_A": r.dim_a,
                        "dim_lambda": r.dim_lambda,
                        "dim_intersection": r.dim_intersection,
                        "predicted": r.predicted,
                        "gamma_bar": r.gamma_bar,
                        "median_slope": r.median_slope,
                        "grid": r.grid,
                        "median_counts": r.median_counts,
                    }))
                    .unwrap()
                        + "\n",
                ),
            ];
            Ok((files, regime))
        }
        "ergodic" => {
            let p: ErgodicParams = params(&config.params)?;
            p.u.validate().map_err(class_seq)?;
            p.target.validate().map_err(class_seq)?;
            p.system.validate().map_err(class_seq)?;
            let delta = p
                .delta
                .as_ref()
                .map_or_else(|| effective_delta(&p.u), |d| d.to_f64());
            let e = ergodic_ensemble(
                &p.u,
                &p.target,
                &p.system,
                &p.observable,
                &p.x,
                &p.m_grid,
                p.seeds,
                seed,
                delta,
                policy,
            )
            .map_err(class_ergo)?;
            if !e.regime_ok {
                eprintln!(
                    "warning: 2a+δ = {:.3} ≥ 1 — outside the proved regime; exploratory run",
                    e.regime_value
                );
            }
            let sys_label = serde_json::to_string(&p.system).unwrap();
            let f_label = serde_json::to_string(&p.observable).unwrap();
            let mut rows = Vec::new();
            for run in &e.per_seed {
                for row in &run.series.rows {
                    rows.push(vec![
                        format!("{:?}", sys_label),
                        format!("{:?}", f_label),
                        run.seed_index.to_string(),
                        row.m.to_string(),
                        f(row.subsequence_avg),
                        f(row.birkhoff_avg),
                        f(row.target),
                        f(row.deviation),
                    ]);
                }
            }
            let mut regime = regime_for(p.target.a.to_f64(), delta);
            regime.b = Some(default_b(p.target.a.to_f64(), delta));
            let files = vec![
                (
                    "ergodic.csv".to_string(),
                    csv(
                        &[
                            "system",
                            "f",
                            "seed",
                            "M",
                            "avg",
                            "birkhoff",
                            "target",
                            "deviation",
                        ],
                        rows,
                    ),
                ),
                (
                    "ergodic_summary.json".to_string(),
                    serde_json::to_string_pretty(&json!({
                        "regime_value": e.regime_value,
                        "regime_ok": e.regime_ok,
                        "seeds": p.seeds,
                    }))
                    .unwrap()
                        + "\n",
                ),
            ];
            Ok((files, regime))
        }
        "vprime" => {
            let p: VPrimeParams = params(&config.params)?;
            p.u.validate().map_err(class_seq)?;
            p.target.validate().map_err(class_seq)?;
            if p.log2_min >= p.log2_max || p.log2_max > 30 {
                return Err(RunError::Config(
                    "vprime requires log2_min < log2_max ≤ 30".into(),
                ));
            }
            let a = p.target.a.to_f64();
            let b = p.b.to_f64();
            if !(2.0 * a < b && b < 1.0) {
                return Err(RunError::Config(format!(
                    "vprime requires b in (2a, 1): a={a}, b={b}"
                )));
            }
            let grid: Vec<u64> = (p.log2_min..=p.log2_max).map(|k| 1u64 << k).collect();
            let series = vprime_expectation(&p.u, &p.target, b, &grid, p.ensemble, seed, policy)
                .map_err(class_ergo)?;
            let rows = series
                .rows
                .iter()
                .map(|r| vec![r.n.to_string(), f(r.mean_vprime)])
                .collect();
            let delta = effective_delta(&p.u);
            let mut regime = regime_for(a, delta);
            regime.b = Some(b);
            let files = vec![
                (
                    "vprime.csv".to_string(),
                    csv(&["N", "mean_vprime"], rows),
                ),
                (
                    "vprime_summary.json".to_string(),
                    serde_json::to_string_pretty(&json!({
                        "loglog_slope": series.loglog_slope,
                        "b": b,
                        "ensemble": p.ensemble,
                    }))
                    .unwrap()
                        + "\n",
                ),
            ];
            Ok((files, regime))
        }
        other => {
            let mut msg = format!("unknown experiment {other:?}; expected one of ");
            let _ = write!(
                msg,
                "hit|lln|corr|fourfold|bounds|dim|weighted|transverse|ergodic|vprime|preset:NAME"
            );
            Err(RunError::Config(msg))
        }
    }
}
