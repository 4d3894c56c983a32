//! Prints each weighting function along a ray of growing residuals.

use nalgebra::{dmatrix, dvector};
use wolf::{compute_weight, compute_weight_vector, map_weight_oracle, mahalanobis_sq, SpdMatrix, WeightSpec};

fn main() -> wolf::Result<()> {
    let r = SpdMatrix::new(dmatrix![2.0, 0.0; 0.0, 0.5])?;
    let yhat = dvector![0.0, 0.0];
    let specs = [
        WeightSpec::Imq { c: 2.0 },
        WeightSpec::Md { c: 2.0 },
        WeightSpec::Tmd { c: 4.0 },
    ];
    println!("{:>8} {:>8} {:>8} {:>8} {:>12}", "scale", "imq", "md", "tmd", "perdim_tmd");
    for scale in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
        let y = dvector![scale, 0.5 * scale];
        let ws: Vec<f64> = specs.iter().map(|s| compute_weight(s, &y, &yhat, &r)).collect::<wolf::Result<_>>()?;
        let per = compute_weight_vector(&WeightSpec::PerDimTmd { c: 4.0 }, &y, &yhat, &r.matrix().diagonal())?;
        println!(
            "{scale:8.1} {:8.4} {:8.4} {:8.1} {:>12}",
            ws[0],
            ws[1],
            ws[2],
            format!("[{}, {}]", per[0], per[1])
        );
    }
    // The squared MD weight is the MAP weight.
    let y = dvector![3.0, 1.0];
    let md = compute_weight(&WeightSpec::Md { c: 2.0 }, &y, &yhat, &r)?;
    let map = map_weight_oracle(2.0, 2, mahalanobis_sq(&y, &r)?)?;
    println!("md^2 = {:.6}, map = {:.6}", md * md, map);
    Ok(())
}
