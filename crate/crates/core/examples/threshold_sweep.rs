//! Sweeps the threshold `c` of the AP-EnKF and the Huberised EnKF on a
//! reduced Lorenz96 problem and prints the summary per value.

use wolf::ensemble::ApGainMode;
use wolf::harness::{run_sweep, summarise_sweep, ExperimentConfig, FilterKind, FilterSpec, Scenario, SweepConfig};
use wolf::scenarios::Lorenz96Config;

fn main() -> wolf::Result<()> {
    let scenario = Lorenz96Config { particles: 100, steps: 40, ..Lorenz96Config::default() };
    let mut cfg = ExperimentConfig::new(Scenario::Lorenz96(scenario))
        .with_filter("enkf", FilterSpec::new(FilterKind::Enkf))
        .with_filter("ap_enkf", FilterSpec::new(FilterKind::ApEnkf { c: 1.0, mode: ApGainMode::Shortcut }))
        .with_filter("hub_enkf", FilterSpec::new(FilterKind::HubEnkf { c: 1.0 }))
        .with_trials(4);
    cfg.run.timing = false;
    cfg.sweep = Some(SweepConfig {
        parameter: "c".into(),
        values: vec![1.0, 4.0, 16.0, 64.0, 256.0],
        filters: vec![],
    });
    let sweep = run_sweep(&cfg)?;
    println!("{:<9} {:>7} {:>9} {:>20}", "filter", "c", "median", "95% bootstrap");
    for row in summarise_sweep(&sweep, &cfg) {
        println!(
            "{:<9} {:>7} {:>9.4} [{:>8.4}, {:>8.4}] {}",
            row.filter,
            row.value,
            row.median,
            row.bootstrap_low,
            row.bootstrap_high,
            if row.best { "*" } else { "" }
        );
    }
    Ok(())
}
