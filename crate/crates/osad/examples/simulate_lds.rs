//! Forward simulation of a linear dynamical system, with and without a
//! latent disturbance, plus error traces and simple thresholding.

use nalgebra::{dmatrix, dvector, DMatrix};
use osad::{
    compute_errors, simulate_lds, threshold_anomalies, DisturbanceSignal, LdsModel, PatternMatrix,
};

fn main() -> osad::Result<()> {
    let model = LdsModel::new(dmatrix![0.5, 0.3; 0.3, 0.2], DMatrix::identity(2, 2))?;
    println!("state matrix A = {}", model.a());
    println!("spectral radius = {:.4} (stable: {})", model.spectral_radius(), model.is_stable());

    // clean run
    let x0 = dvector![1.0, 0.0];
    let clean = simulate_lds(&model, &x0, 10, None, 0.0, 0)?;
    println!("first observations of the free response:");
    for t in 0..4 {
        println!(
            "  y({t}) = [{:+.4}, {:+.4}]",
            clean.series.samples()[(t, 0)],
            clean.series.samples()[(t, 1)]
        );
    }

    // a disturbance through the pattern directions P on samples [4, 7)
    let pattern = PatternMatrix::new(dmatrix![1.0, 1.0; 2.0, 2.0])?;
    let mut z = DMatrix::zeros(10, 2);
    for t in 4..7 {
        z[(t, 0)] = 0.5;
    }
    let drive = DisturbanceSignal::from_values(z)?;
    println!(
        "disturbance active on {:?}",
        drive.active_intervals().iter().map(|iv| (iv.start, iv.end)).collect::<Vec<_>>()
    );
    let disturbed = simulate_lds(&model, &x0, 10, Some((&pattern, &drive)), 0.0, 0)?;

    // the error trace between the two runs shows exactly the response
    let errors = compute_errors(
        &disturbed.latent,
        disturbed.series.samples(),
        &clean.latent,
        clean.series.samples(),
    )?;
    println!("per-sample observed error norms:");
    for t in 0..10 {
        println!("  t = {t}: |e| = {:.4}", errors.observed_err.row(t).norm());
    }

    let flagged = threshold_anomalies(&errors, 0.5)?;
    println!("samples with |e| > 0.5: {flagged:?}");
    Ok(())
}
