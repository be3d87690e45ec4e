// scratch: measure the corollary-1.10 transversality slope and runtime
use shrinklab::dimlab::{transversality_experiment, TransversalityConfig, Window};
use shrinklab::params::Dec;
use shrinklab::scalar::PrecisionPolicy;
use shrinklab::sequences::{GrowthSequence, IntegerSet, SeqFamily, TargetScheme, Placement};
use std::time::Instant;

fn main() {
    let p = PrecisionPolicy::default();
    let seq = GrowthSequence {
        family: SeqFamily::Stretched { alpha: Dec::parse("2").unwrap(), b: Dec::parse("0.5").unwrap() },
        delta: Some(Dec::parse("0.5").unwrap()),
        c: None,
    };
    let scheme = TargetScheme {
        a: Dec::parse("0.2").unwrap(),
        ell: 2,
        placement: Placement::Symmetric,
        scale_c: Dec::parse("2").unwrap(),
        n0: 32,
        seed: 0,
    };
    let w = Window::new(1000, 10_000_000);
    let t0 = Instant::now();
    let cfg = TransversalityConfig {
        set: &IntegerSet::Primes,
        seq: &seq,
        scheme: &scheme,
        window: &w,
        seeds: 20,
        seed: 1910,
        lambda_window: None,
    };
    let r = transversality_experiment(&cfg, &p).unwrap();
    println!("elapsed {:.1}s", t0.elapsed().as_secs_f64());
    println!("dim_A slope {:.4}", r.dim_a.slope);
    println!("median slope {:?}", r.median_slope);
    let slopes: Vec<f64> = r.per_seed.iter().filter_map(|s| s.slope).collect();
    println!("per-seed slopes: {:?}", slopes.iter().map(|s| (s*1000.0).round()/1000.0).collect::<Vec<_>>());
    println!("median counts: {:?}", r.median_counts);
    let unc: u64 = r.per_seed.iter().map(|s| s.uncertain).sum();
    println!("uncertain total {unc}");
}
