//! Online training of a 141-parameter MLP on the sorted 1d stream with an
//! EKF and a WoLF-IMQ EKF.

use nalgebra::{DMatrix, DVector};
use wolf::gaussian::{ekf_update_with_form, MeasurementModel, UpdateForm};
use wolf::rng::label_key;
use wolf::scenarios::{metric_rmedse, regression1d_stream, MlpObservation, MlpSpec, Regression1dConfig};
use wolf::{GaussianBelief, RngStream, WeightSpec};

fn main() -> wolf::Result<()> {
    let stream_cfg = Regression1dConfig { sorted: true, ..Regression1dConfig::default() };
    let samples = regression1d_stream(&stream_cfg, &mut RngStream::new(5, 0).split(label_key("data")))?;
    let net = MlpSpec::two_hidden_10();
    let theta0 = net.init_params(&mut RngStream::new(5, 0).split(label_key("init")));
    let q = DMatrix::<f64>::identity(net.n_params(), net.n_params()) * 1e-4;
    for (name, spec) in [("ekf", WeightSpec::UNIT), ("wolf_imq", WeightSpec::Imq { c: 8.0 })] {
        let mut belief = GaussianBelief::isotropic(theta0.clone(), 1.0)?;
        let (mut ys, mut preds) = (Vec::new(), Vec::new());
        for s in &samples {
            let prior = GaussianBelief::new(belief.mean().clone(), belief.cov() + &q)?;
            let x = [s.x];
            let model = MlpObservation::new(&net, &x, 3.0)?;
            preds.push(model.predict_obs(prior.mean())?[0]);
            ys.push(s.y);
            belief = ekf_update_with_form(&prior, &model, &DVector::from_element(1, s.y), &spec, UpdateForm::Gain)?.posterior;
        }
        println!("{name:<9} RMedSE {:.3}", metric_rmedse(&ys, &preds)?);
    }
    Ok(())
}
