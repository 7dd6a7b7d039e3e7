//! The whole loop on one synthetic subject, through the same file-based
//! commands the CLI exposes: synth -> learn -> design -> run -> eval ->
//! report.

use osad::config::RunConfig;
use osad::detect::StreamKind;
use osad::pipeline;

fn main() -> osad::Result<()> {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = RunConfig {
        data_dir: dir.path().to_path_buf(),
        seed: 7,
        ..RunConfig::default()
    };

    println!("== synth ==");
    pipeline::cmd_synth(&cfg)?;

    println!("\n== learn ==");
    pipeline::cmd_learn(&cfg)?;

    println!("\n== design ==");
    pipeline::cmd_design(&cfg)?;

    println!("\n== run ==");
    let alerts = pipeline::cmd_run(&cfg)?;
    let (all, selective): (Vec<&osad::detect::AlertInterval>, Vec<_>) = alerts[0]
        .iter()
        .partition(|a| a.stream == StreamKind::AllAnomalies);
    println!(
        "\n{} all-anomaly intervals, {} selective intervals",
        all.len(),
        selective.len()
    );

    println!("\n== eval ==");
    let summary = pipeline::cmd_eval(&cfg)?;
    let s = &summary.subjects[0];
    println!(
        "\nheadline: selective recall {} with {} samples of pattern overlap",
        s.sel_recall.map(|r| format!("{r:.4}")).unwrap_or_default(),
        s.sel_pattern_overlap
    );

    println!("\n== report ==");
    let reports = pipeline::cmd_report(&cfg)?;
    println!(
        "suppression separation (median inside / outside pattern): {:.2}",
        reports[0].suppression.separation
    );
    println!("\nartifacts were written under {}", cfg.data_dir.display());
    Ok(())
}
