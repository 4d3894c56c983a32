//! Posterior influence of a contaminated last measurement on a 20-step
//! tracking history: unbounded for the KF, bounded for WoLF.

use wolf::harness::run::{pif_history, pif_problem};
use wolf::harness::config::PifSetup;
use wolf::robustness::{GridSpec, PifContext};
use wolf::WeightSpec;

fn main() -> wolf::Result<()> {
    let setup = PifSetup::default();
    let history = pif_history(&setup, 0)?;
    let problem = pif_problem(&setup)?;
    let specs = [
        ("kf", WeightSpec::UNIT),
        ("wolf_imq", WeightSpec::Imq { c: 4.0 }),
        ("wolf_md", WeightSpec::Md { c: 4.0 }),
        ("wolf_tmd", WeightSpec::Tmd { c: 2.0 }),
    ];
    println!("{:<9} {:>10} {:>10} {:>10} {:>10}", "filter", "L=5", "L=10", "L=20", "bound");
    for (name, spec) in specs {
        let ctx = PifContext::new(&spec, &problem, &history, setup.orientation)?;
        let maxima: Vec<f64> = [5.0, 10.0, 20.0]
            .iter()
            .map(|&l| ctx.grid(&GridSpec::symmetric(l, 41)).map(|g| g.max()))
            .collect::<wolf::Result<_>>()?;
        println!(
            "{name:<9} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            maxima[0],
            maxima[1],
            maxima[2],
            ctx.analytic_bound()?
        );
    }
    Ok(())
}
