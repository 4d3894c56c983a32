//! Loads a numeric CSV, scales it on a warm-up split and trains a small MLP
//! online with a WoLF-IMQ EKF.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use wolf::gaussian::{ekf_update_with_form, MeasurementModel, UpdateForm};
use wolf::rng::label_key;
use wolf::scenarios::{load_csv, metric_rmedse, MlpObservation, MlpSpec};
use wolf::{GaussianBelief, RngStream, WeightSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = RngStream::new(2, 0).split(label_key("data"));
    let path = std::env::temp_dir().join("wolf_csv_regression.csv");
    let mut file = std::fs::File::create(&path)?;
    writeln!(file, "a,b,target")?;
    for i in 0..600 {
        let (a, b) = (rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0));
        let noise = if i % 25 == 0 { 40.0 } else { 0.3 * rng.standard_normal() };
        writeln!(file, "{a},{b},{}", a * a - 2.0 * b + noise)?;
    }
    drop(file);

    let mut data = load_csv(&path, -1)?;
    data.shuffle(&mut RngStream::new(2, 0).split(label_key("shuffle")));
    let (_, stream) = data.warmup_split(0.1)?;
    let net = MlpSpec::single_hidden(stream.n_features(), 20)?;
    let q = DMatrix::<f64>::identity(net.n_params(), net.n_params()) * 1e-5;
    let theta0 = net.init_params(&mut RngStream::new(2, 0).split(label_key("init")));
    for (name, spec) in [("ekf", WeightSpec::UNIT), ("wolf_imq", WeightSpec::Imq { c: 1.0 })] {
        let mut belief = GaussianBelief::isotropic(theta0.clone(), 1.0)?;
        let mut preds = Vec::new();
        for (x, &y) in stream.features.iter().zip(&stream.target) {
            let prior = GaussianBelief::new(belief.mean().clone(), belief.cov() + &q)?;
            let model = MlpObservation::new(&net, x, 0.1)?;
            preds.push(model.predict_obs(prior.mean())?[0]);
            belief = ekf_update_with_form(&prior, &model, &DVector::from_element(1, y), &spec, UpdateForm::Gain)?.posterior;
        }
        println!("{name:<9} RMedSE {:.3}", metric_rmedse(&stream.target, &preds)?);
    }
    std::fs::remove_file(&path)?;
    Ok(())
}
