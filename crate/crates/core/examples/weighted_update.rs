//! One Kalman update versus one weighted update, on an inlier and an outlier.

use nalgebra::{dmatrix, dvector};
use wolf::gaussian::{kf_update, wolf_update, LinearObservation};
use wolf::{GaussianBelief, WeightSpec};

fn main() -> wolf::Result<()> {
    let prior = GaussianBelief::new(dvector![0.0, 0.0], dmatrix![1.0, 0.2; 0.2, 1.0])?;
    let obs = LinearObservation::new(dmatrix![1.0, 0.0; 0.0, 1.0], dmatrix![0.5, 0.0; 0.0, 0.5])?;
    let imq = WeightSpec::Imq { c: 2.0 };
    for y in [dvector![0.4, -0.3], dvector![40.0, -25.0]] {
        let kf = kf_update(&prior, &obs, &y)?;
        let wolf = wolf_update(&prior, &obs, &y, &imq)?;
        println!("y = [{:6.1}, {:6.1}]", y[0], y[1]);
        println!("  kf   mean [{:8.3}, {:8.3}]", kf.posterior.mean()[0], kf.posterior.mean()[1]);
        println!(
            "  wolf mean [{:8.3}, {:8.3}]  weight {:.4}",
            wolf.posterior.mean()[0],
            wolf.posterior.mean()[1],
            wolf.weight.mean()
        );
    }
    Ok(())
}
