//! Lorenz96 with spike outliers: one run of each ensemble filter, driven
//! step by step through the library primitives.

use wolf::ensemble::{enkf_predict, ensemble_update, ApGainMode, Ensemble, EnsembleVariant};
use wolf::rng::label_key;
use wolf::scenarios::{lorenz96_generate, Lorenz96Config};
use wolf::RngStream;

fn main() -> wolf::Result<()> {
    let cfg = Lorenz96Config { particles: 200, ..Lorenz96Config::default() };
    let data = lorenz96_generate(&cfg, &mut RngStream::new(11, 0).split(label_key("data")))?;
    let model = cfg.filter_model()?;
    let variants = [
        ("enkf", EnsembleVariant::Plain),
        ("ap_enkf", EnsembleVariant::AveragedParticle { c: 100.0, mode: ApGainMode::Shortcut }),
        ("pp_enkf", EnsembleVariant::PerParticle { c: 100.0 }),
        ("hub_enkf", EnsembleVariant::Huber { c: 2.0 }),
    ];
    let spikes = data.outliers.iter().filter(|row| row.iter().any(|&o| o)).count();
    println!("{} steps, {} with at least one spike", cfg.steps, spikes);
    for (name, variant) in variants {
        let mut rng = RngStream::new(11, 0).split(label_key(name));
        let mut ens = Ensemble::sample(&cfg.initial_belief()?, cfg.particles, &mut rng)?;
        let mut total = 0.0;
        for t in 0..cfg.steps {
            ens = enkf_predict(&ens, &model, &mut rng)?;
            ens = ensemble_update(&ens, &model, &data.measurement(t), variant, &mut rng)?.ensemble;
            let err = ens.mean() - data.state(t);
            total += (err.norm_squared() / cfg.dim as f64).sqrt();
        }
        println!("{name:<9} mean L_t {:.4}", total / cfg.steps as f64);
    }
    Ok(())
}
