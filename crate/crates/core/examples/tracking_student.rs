//! 2D tracking under Student-t noise: KF against WoLF and the two
//! variational baselines over a handful of trials.

use wolf::baselines::KfBConfig;
use wolf::harness::{run_experiment, summarise, ExperimentConfig, FilterKind, FilterSpec, Scenario};
use wolf::scenarios::Tracking2dConfig;
use wolf::WeightSpec;

fn main() -> wolf::Result<()> {
    let mut cfg = ExperimentConfig::new(Scenario::Track2d(Tracking2dConfig::student(2.01)))
        .with_filter("kf", FilterSpec::kf())
        .with_filter("wolf_imq", FilterSpec::wolf(WeightSpec::Imq { c: 8.0 }))
        .with_filter("wolf_tmd", FilterSpec::wolf(WeightSpec::Tmd { c: 16.0 }))
        .with_filter("kfb", FilterSpec::new(FilterKind::KfB(KfBConfig { alpha0: 100.0, inner_iters: 2, ..KfBConfig::default() })))
        .with_filter("kfiw", FilterSpec::new(FilterKind::KfIw { ell: 10.0, inner_iters: 2 }))
        .with_trials(10)
        .with_seed(3);
    cfg.run.reference = Some("kf".into());
    let result = run_experiment(&cfg)?;
    println!("{:<10} {:>10} {:>10}", "filter", "median J0", "slowdown");
    for row in summarise(&result, &cfg).iter().filter(|r| r.metric == "j_0") {
        println!("{:<10} {:>10.2} {:>9.2}x", row.filter, row.median, row.slowdown_vs_reference);
    }
    Ok(())
}
