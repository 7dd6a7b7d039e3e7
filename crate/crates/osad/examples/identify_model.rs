//! Subspace and spectral identification on synthetic data, with the
//! rank sweep that shows where the fit stops improving.

use nalgebra::{DMatrix, DVector};
use osad::model::{simulate_lds, LdsModel};
use osad::sysid::{identify_with_report, one_step_rmse, rank_sweep, IdMethod, IdentificationConfig};

fn main() -> osad::Result<()> {
    // ground truth: two real modes at 0.9 and 0.5, observed through a
    // rectangular C
    let a = nalgebra::dmatrix![0.9, 0.0; 0.0, 0.5];
    let c = nalgebra::dmatrix![1.0, 0.2; 0.3, 1.0; 0.5, 0.5];
    let truth = LdsModel::new(a, c)?;
    let x0 = DVector::from_vec(vec![1.0, 1.0]);
    let sim = simulate_lds(&truth, &x0, 150, None, 0.0, 0)?;
    println!(
        "generated {} samples on {} channels from a rank-2 system",
        sim.series.len(),
        sim.series.channels()
    );

    for method in [IdMethod::Subspace, IdMethod::Spectral] {
        let cfg = IdentificationConfig {
            rank: 2,
            hankel_rows: 8,
            method,
        };
        let (model, report) = identify_with_report(&sim.series, &cfg)?;
        let eigs: Vec<String> = model
            .a()
            .clone()
            .complex_eigenvalues()
            .iter()
            .map(|l| format!("{:.6}{:+.6}i", l.re, l.im))
            .collect();
        println!("\n{method} method:");
        println!("  numerical Hankel rank: {}", report.numerical_rank);
        println!("  identified eigenvalues: {}", eigs.join(", "));
        println!("  one-step rmse: {:.3e}", one_step_rmse(&model, &sim.series)?);
    }

    // sweeping the rank past the true dimension flattens out
    let cfg = IdentificationConfig {
        rank: 2,
        hankel_rows: 8,
        method: IdMethod::Subspace,
    };
    println!("\nrank sweep (subspace):");
    for (rank, rmse) in rank_sweep(&sim.series, 4, &cfg)? {
        println!("  rank {rank}: rmse {rmse:.3e}");
    }

    // over-ranking a degenerate series is reported, not hidden
    let flat = simulate_lds(
        &LdsModel::new(DMatrix::identity(1, 1), DMatrix::identity(1, 1))?,
        &DVector::from_element(1, 1.0),
        60,
        None,
        0.0,
        0,
    )?;
    let cfg = IdentificationConfig {
        rank: 2,
        hankel_rows: 5,
        method: IdMethod::Subspace,
    };
    let (_, report) = identify_with_report(&flat.series, &cfg)?;
    println!(
        "\nconstant series at rank 2: numerical rank {} of requested {} (deficient: {})",
        report.numerical_rank,
        report.requested_rank,
        report.is_rank_deficient()
    );
    Ok(())
}
