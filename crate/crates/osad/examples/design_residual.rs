//! The decoupling design walked through on small matrices: pick W in
//! the left null space of C P, assign F by either eigenpair route, and
//! verify the sufficient conditions.

use nalgebra::{dmatrix, DMatrix};
use osad::design::{
    check_rank_constraint, design_f_left, design_f_right, design_w, pattern_from_period,
    reduce_pattern_rank, verify_decoupling, PeriodExpansion,
};
use osad::model::PatternMatrix;

fn main() -> osad::Result<()> {
    let a = dmatrix![0.5, 0.3; 0.3, 0.2];
    let c = DMatrix::identity(2, 2);
    let p = dmatrix![1.0, 1.0; 2.0, 2.0];

    let check = check_rank_constraint(&PatternMatrix::new(p.clone())?, &c);
    println!(
        "rank constraint: rank(P) = {} <= rank(C) = {} -> {}",
        check.rank_p,
        check.rank_c,
        if check.pass { "ok" } else { "violated" }
    );

    let w = design_w(&c, &p, None)?;
    println!("W (orthonormal row in the left null space of CP) = {w}");

    // route 1: left eigenvectors of A - FC are the rows of WC
    let f_left = design_f_left(&a, &c, &w)?;
    println!("left-assigned F = {f_left}");
    let report = verify_decoupling(&a, &c, &p, &w, &f_left)?;
    println!("  {report}");

    // route 2: columns of P become right eigenvectors for eigenvalue 0
    let f_right = design_f_right(&a, &c, &p)?;
    println!("right-assigned F = {f_right}");
    let report = verify_decoupling(&a, &c, &p, &w, &f_right)?;
    println!("  {report}");

    // hand-scaled gains satisfy the same conditions; the design is a
    // contract on the equations, not on specific entries
    let w_scaled = dmatrix![2.0, -1.0; 2.0, -1.0];
    let f_example = dmatrix![0.0, 0.2; -0.7, 0.0];
    let report = verify_decoupling(&a, &c, &p, &w_scaled, &f_example)?;
    println!("hand-scaled example gains: {report}");

    // patterns can also come from a periodicity: P = [aA | bA | cA]
    let exp = PeriodExpansion::new(15.4)?;
    println!(
        "\nperiod 15.4 samples -> alpha {:.3}, beta {:.3}, gamma {:.3} (sum {:.2e})",
        exp.alpha,
        exp.beta,
        exp.gamma,
        exp.alpha + exp.beta + exp.gamma
    );
    let p_period = pattern_from_period(&a, 15.4)?;
    println!(
        "period pattern is {}x{}; reduced to rank 1 for the design budget",
        p_period.matrix().nrows(),
        p_period.matrix().ncols()
    );
    let reduced = reduce_pattern_rank(&p_period, 1)?;
    let w2 = design_w(&c, reduced.matrix(), None)?;
    println!("W for the period pattern = {w2}");
    Ok(())
}
