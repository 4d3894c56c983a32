//! The comparison filters on a single outlying measurement: KF-IW, KF-B
//! and Adam online gradient descent.

use nalgebra::{dmatrix, dvector, DVector};
use wolf::baselines::{adam_ogd_step, kfb_update, kfiw_update, AdamState, KfBConfig, KfIwConfig};
use wolf::gaussian::{kf_update, LinearObservation, UpdateForm};
use wolf::GaussianBelief;

fn main() -> wolf::Result<()> {
    let prior = GaussianBelief::new(dvector![1.0, -1.0], dmatrix![1.0, 0.0; 0.0, 1.0])?;
    let obs = LinearObservation::new(dmatrix![1.0, 0.0; 0.0, 1.0], dmatrix![1.0, 0.0; 0.0, 1.0])?;
    let y = dvector![30.0, -1.2];

    let kf = kf_update(&prior, &obs, &y)?.posterior;
    let iw = kfiw_update(&prior, &obs, &y, &KfIwConfig::new(10.0, 2, obs.r().clone())?)?;
    let cfg = KfBConfig { alpha0: 100.0, inner_iters: 2, ..KfBConfig::default() };
    let kfb = kfb_update(&prior, &obs, &y, &cfg, UpdateForm::Precision)?;

    let h = obs.h().clone();
    let grad = |theta: &DVector<f64>| -(h.transpose() * (&y - &h * theta));
    let (ogd, _) = adam_ogd_step(prior.mean(), grad, &AdamState::new(2, 0.1, 1)?)?;

    let show = |name: &str, m: &DVector<f64>| println!("{name:<6} [{:8.3}, {:8.3}]", m[0], m[1]);
    show("prior", prior.mean());
    show("kf", kf.mean());
    show("kfiw", iw.mean());
    show("kfb", kfb.posterior.mean());
    show("ogd", &ogd);
    println!("kfb inlier probability {:.4}", kfb.rho);
    Ok(())
}
