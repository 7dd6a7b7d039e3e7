//! CUSUM chart design from (alpha, beta, delta), step-by-step flags,
//! and merging flags into alert intervals.

use osad::detect::{calibrate, cusum_step, intervals_from_flags, run_cusum, CusumConfig, StreamKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> osad::Result<()> {
    let cfg = CusumConfig {
        alpha: 1e-4,
        beta: 1e-4,
        delta: 1.0,
        calibration_len: 500,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let normal = Normal::new(0.0, 1.0).unwrap();

    // a unit-variance signal with a +3 sigma shift on samples [700, 800)
    let mut signal: Vec<f64> = (0..1000).map(|_| normal.sample(&mut rng)).collect();
    for v in &mut signal[700..800] {
        *v += 3.0;
    }

    let mut state = calibrate(&signal, &cfg)?;
    println!(
        "calibrated: mu0 = {:+.4}, sigma = {:.4}, J = {:.4}, H = {:.4}",
        state.mu0, state.sigma, state.j, state.h
    );

    let (flags, stats) = run_cusum(&mut state, &signal)?;
    let first_flag = flags.iter().position(|&f| f);
    println!(
        "shift starts at 700, first flag at {:?} (detection delay {:?} samples)",
        first_flag,
        first_flag.map(|t| t as i64 - 700)
    );

    let intervals = intervals_from_flags(&flags, 10, 5, StreamKind::AllAnomalies, &stats);
    for iv in &intervals {
        println!(
            "alert [{}, {}) on {} with peak statistic {:.2}",
            iv.start(),
            iv.end(),
            iv.stream,
            iv.peak_stat
        );
    }

    // a deterministic look at the drift arithmetic: +1 sigma forever
    let mut window = vec![0.0];
    for _ in 0..50 {
        window.push(1.0);
        window.push(-1.0);
    }
    let cfg_exact = CusumConfig {
        calibration_len: 101,
        ..cfg
    };
    let mut state = calibrate(&window, &cfg_exact)?;
    let mut steps = 0;
    while !cusum_step(&mut state, 1.0)? {
        steps += 1;
    }
    println!(
        "on an exact unit-sigma chart, a +1 sigma shift flags after {} samples (H/(sigma - J) = {:.1})",
        steps + 1,
        state.h / (1.0 - state.j)
    );
    Ok(())
}
