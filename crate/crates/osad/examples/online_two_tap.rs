//! The two runtime forms of the residual generator: the recursive
//! observer and, when `C_f A_f = 0`, the stateless two-tap filter
//! `r(t) = W y(t) - C_f F y(t-1)`.

use nalgebra::{dmatrix, DMatrix, DVector};
use osad::design::{design_for_pattern, make_online_filter, run_observer, FDesignMethod, Observer};
use osad::model::{simulate_lds, DisturbanceSignal, LdsModel, PatternMatrix};

fn main() -> osad::Result<()> {
    let model = LdsModel::new(dmatrix![0.5, 0.3; 0.3, 0.2], DMatrix::identity(2, 2))?;
    let pattern = PatternMatrix::new(dmatrix![1.0, 1.0; 2.0, 2.0])?;
    let design = design_for_pattern(&model, &pattern, None, FDesignMethod::Left)?;
    println!("two-tap reduction valid: {}", design.two_tap_valid());
    let filter = make_online_filter(&design)?;
    let (tap0, tap1) = filter.taps();
    println!("taps: W = {tap0} -C_f F = {tap1}");

    // a pattern burst and an off-pattern burst in one recording
    let mut z = DMatrix::zeros(300, 2);
    for t in 80..120 {
        z[(t, 0)] = (t as f64 * 0.41).sin();
    }
    let drive = DisturbanceSignal::from_values(z)?;
    let x0 = DVector::zeros(2);
    let pat_run = simulate_lds(&model, &x0, 300, Some((&pattern, &drive)), 0.0, 1)?;

    let orth = PatternMatrix::new(dmatrix![2.0; -1.0])?;
    let mut z = DMatrix::zeros(300, 1);
    for t in 200..230 {
        z[(t, 0)] = 0.8;
    }
    let orth_drive = DisturbanceSignal::from_values(z)?;
    let orth_run = simulate_lds(&model, &x0, 300, Some((&orth, &orth_drive)), 0.0, 1)?;
    let y = pat_run.series.samples() + orth_run.series.samples();
    let series = osad::TimeSeries::with_default_names(y, 200.0)?;

    // batch observer vs streaming filter, sample by sample
    let (r_obs, e) = run_observer(&design, &model, &series, &x0)?;
    let mut filter = make_online_filter(&design)?;
    let r_tap = filter.run(&series)?;
    let max_diff = (&r_obs - &r_tap).amax();
    println!("max |observer - two-tap| over 300 samples: {max_diff:.3e}");

    for (t, what) in [(100usize, "pattern burst"), (215, "off-pattern burst")] {
        println!(
            "t = {t} ({what}): |e| = {:.4}, |r| = {:.4}",
            e.row(t).norm(),
            r_obs.row(t).norm()
        );
    }

    // the observer is also usable one sample at a time
    let mut observer = Observer::new(&design, &model, x0)?;
    let mut peak_r: f64 = 0.0;
    for t in 0..series.len() {
        let (_e, r) = observer.step(&series.row_vector(t))?;
        peak_r = peak_r.max(r.norm());
    }
    println!("peak |r| seen by the streaming observer: {peak_r:.4}");
    Ok(())
}
