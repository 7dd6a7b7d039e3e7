//! Why models do not transfer: each synthetic subject gets its own
//! spectral fingerprint, and a design learned on one subject degrades
//! on the others. An averaged model lands in between.

use osad::bench::transfer_set;
use osad::detect::DetectionConfig;
use osad::eval::{transfer_grid, TransferSubject};

fn main() -> osad::Result<()> {
    let set = transfer_set(40, 3)?;
    for (i, s) in set.iter().enumerate() {
        println!(
            "subject {i}: mode frequencies {:?} Hz, {} labeled events",
            s.cfg.mode_freqs_hz,
            s.all_labels()?.intervals().len()
        );
    }

    let subjects: Vec<TransferSubject> = set
        .iter()
        .map(|s| {
            Ok(TransferSubject {
                model: s.model.clone(),
                design: s.design.clone(),
                series: s.series.clone(),
                labels: s.all_labels()?,
            })
        })
        .collect::<osad::Result<_>>()?;

    let grid = transfer_grid(&subjects, &DetectionConfig::for_rate(200.0))?;

    println!("\nrecall grid (rows = model/design, cols = data):");
    for (i, row) in grid.cells.iter().enumerate() {
        let tag = if i < grid.subjects {
            format!("model s{i}")
        } else {
            "averaged".into()
        };
        let cells: Vec<String> = row.iter().map(|c| format!("{:.3}", c.recall)).collect();
        println!("  {tag:>9}  {}", cells.join("  "));
    }
    println!(
        "\nmean recall: diagonal {:.3} > averaged {:.3} > off-diagonal {:.3}",
        grid.diagonal_mean_recall(),
        grid.averaged_mean_recall(),
        grid.off_diagonal_mean_recall()
    );
    Ok(())
}
