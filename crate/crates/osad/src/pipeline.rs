//! File-based command implementations behind the CLI verbs.
//!
//! Every command reads and writes under `RunConfig::data_dir`, one
//! subdirectory per subject (`s0`, `s1`, ...):
//!
//! ```text
//! s0/series.csv        detection recording (events + noise)
//! s0/learn.csv         clean recording for identification
//! s0/labels.csv        ground-truth event intervals
//! s0/truth_model.osad  generating model
//! s0/pattern.osad      pattern matrix in the generating basis
//! s0/model.osad        learned model            (learn)
//! s0/design.osad       model + residual design  (design)
//! s0/alerts.csv        both alert streams       (run)
//! s0/report/           plot-ready CSVs + tables (report)
//! ```
//!
//! Commands are idempotent: identical inputs and seed produce identical
//! bytes.

use std::fmt::Write as _;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};

use crate::bench::make_subject;
use crate::config::RunConfig;
use crate::design::{
    design_for_pattern, pattern_from_period, reduce_pattern_rank, run_observer, tile_rows,
    verify_decoupling, ResidualDesign, RANK_REL_TOL,
};
use crate::detect::{run_selective_detection, AlertInterval, StreamKind};
use crate::error::{Error, Result};
use crate::eval::{
    delay_stats, interval_precision, interval_recall, match_intervals,
    residual_suppression_report, transfer_grid, DelayStats, LabelSet, SuppressionReport,
    TransferGrid, TransferSubject,
};
use crate::io;
use crate::linalg;
use crate::model::{LdsModel, PatternMatrix};
use crate::sysid::{identify_with_report, one_step_rmse};

/// File locations for one subject.
pub struct SubjectPaths {
    pub dir: PathBuf,
    pub series: PathBuf,
    pub learn: PathBuf,
    pub labels: PathBuf,
    pub truth_model: PathBuf,
    pub pattern: PathBuf,
    pub learned_model: PathBuf,
    pub design: PathBuf,
    pub alerts: PathBuf,
    pub report_dir: PathBuf,
}

pub fn subject_paths(cfg: &RunConfig, index: usize) -> SubjectPaths {
    let dir = cfg.subject_dir(index);
    SubjectPaths {
        series: dir.join("series.csv"),
        learn: dir.join("learn.csv"),
        labels: dir.join("labels.csv"),
        truth_model: dir.join("truth_model.osad"),
        pattern: dir.join("pattern.osad"),
        learned_model: dir.join("model.osad"),
        design: dir.join("design.osad"),
        alerts: dir.join("alerts.csv"),
        report_dir: dir.join("report"),
        dir,
    }
}

fn ensure_dir(path: &PathBuf) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path.display().to_string(), e))
}

/// `synth`: writes per-subject series, labels, generating model and
/// pattern.
pub fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    for s in 0..cfg.synth.subjects {
        let bench = cfg.bench_config(s);
        let subject = make_subject(&bench)?;
        let paths = subject_paths(cfg, s);
        ensure_dir(&paths.dir)?;
        io::write_timeseries_csv(&paths.series, &subject.series, Some(bench.seed))?;
        io::write_timeseries_csv(&paths.learn, &subject.learn_series, Some(bench.seed))?;
        io::write_labels_csv(
            &paths.labels,
            &subject.pattern_labels,
            &subject.other_labels,
            Some(bench.seed),
        )?;
        io::write_model_file(
            &paths.truth_model,
            &io::ModelArtifact {
                model: subject.model.clone(),
                rate_hz: bench.rate_hz,
                method: None,
                design: None,
                seed: Some(bench.seed),
            },
        )?;
        io::write_pattern_file(&paths.pattern, &subject.pattern)?;
        println!(
            "synth subject {s}: {} samples, {} pattern + {} other events -> {}",
            subject.series.len(),
            subject.pattern_labels.intervals().len(),
            subject.other_labels.intervals().len(),
            paths.dir.display()
        );
    }
    Ok(())
}

/// `learn`: identifies a model from each subject's clean series.
pub fn cmd_learn(cfg: &RunConfig) -> Result<()> {
    let id_cfg = cfg.identification_config();
    for s in 0..cfg.synth.subjects {
        let paths = subject_paths(cfg, s);
        let obs = io::read_timeseries_csv(&paths.learn, cfg.rate_hz)?;
        let (model, report) = identify_with_report(&obs, &id_cfg)?;
        let rmse = one_step_rmse(&model, &obs)?;
        io::write_model_file(
            &paths.learned_model,
            &io::ModelArtifact {
                model: model.clone(),
                rate_hz: cfg.rate_hz,
                method: Some(id_cfg.method),
                design: None,
                seed: Some(cfg.seed),
            },
        )?;
        let deficiency = if report.is_rank_deficient() {
            format!(
                " (rank deficient: numerical rank {} of requested {})",
                report.numerical_rank, report.requested_rank
            )
        } else {
            String::new()
        };
        println!(
            "learn subject {s}: method {}, rank {}, one-step rmse {rmse:.3e}, spectral radius {:.4}{deficiency}",
            id_cfg.method,
            report.requested_rank,
            model.spectral_radius()
        );
    }
    Ok(())
}

fn load_design_inputs(cfg: &RunConfig, s: usize) -> Result<(LdsModel, PatternMatrix, f64)> {
    let paths = subject_paths(cfg, s);
    let which = match cfg.design.use_model.as_str() {
        "learned" => &paths.learned_model,
        _ => &paths.truth_model,
    };
    let artifact = io::read_model_file(which)?;
    let model = artifact.model;
    let pattern = match cfg.pattern.source.as_str() {
        "period" => {
            let raw = pattern_from_period(model.a(), cfg.pattern.period_samples)?;
            // keep the pattern strictly inside the rank budget of C
            let rank_c = linalg::numerical_rank(model.c(), RANK_REL_TOL);
            reduce_pattern_rank(&raw, rank_c.saturating_sub(1).max(1))?
        }
        _ => io::read_pattern_file(&paths.pattern)?,
    };
    Ok((model, pattern, artifact.rate_hz))
}

/// `design`: builds and verifies the residual design, persists it next
/// to the model it was designed for.
pub fn cmd_design(cfg: &RunConfig) -> Result<()> {
    for s in 0..cfg.synth.subjects {
        let paths = subject_paths(cfg, s);
        let (model, pattern, rate_hz) = load_design_inputs(cfg, s)?;
        let design = design_for_pattern(&model, &pattern, cfg.residual_dim(), cfg.f_method()?)?;
        let report = verify_decoupling(
            model.a(),
            model.c(),
            pattern.matrix(),
            design.w(),
            design.f(),
        )?;
        println!("design subject {s}: {report}");
        io::write_model_file(
            &paths.design,
            &io::ModelArtifact {
                model,
                rate_hz,
                method: None,
                design: Some(design),
                seed: Some(cfg.seed),
            },
        )?;
    }
    Ok(())
}

fn load_design(cfg: &RunConfig, s: usize) -> Result<(LdsModel, ResidualDesign, f64)> {
    let paths = subject_paths(cfg, s);
    let artifact = io::read_model_file(&paths.design)?;
    let design = artifact.design.ok_or_else(|| {
        Error::MissingArtifact(format!(
            "{} has no design section (run `design` first)",
            paths.design.display()
        ))
    })?;
    Ok((artifact.model, design, artifact.rate_hz))
}

/// `run`: streams each subject's series through the observer and both
/// CUSUM charts; emits alert CSV and a live event feed on stdout.
pub fn cmd_run(cfg: &RunConfig) -> Result<Vec<Vec<AlertInterval>>> {
    let det_cfg = cfg.detection_config();
    let mut all_subjects = Vec::new();
    for s in 0..cfg.synth.subjects {
        let paths = subject_paths(cfg, s);
        let (model, design, _) = load_design(cfg, s)?;
        let series = io::read_timeseries_csv(&paths.series, cfg.rate_hz)?;
        let x0 = DVector::zeros(model.state_dim());
        let (r, e) = run_observer(&design, &model, &series, &x0)?;
        let (all, selective) = run_selective_detection(&e, &r, &det_cfg)?;
        let mut alerts: Vec<AlertInterval> = all.into_iter().chain(selective).collect();
        alerts.sort_by_key(|a| (a.start(), a.stream == StreamKind::Selective));
        for a in &alerts {
            println!(
                "event subject={s} stream={} start={} end={} peak={:.6e}",
                a.stream,
                a.start(),
                a.end(),
                a.peak_stat
            );
        }
        io::write_alerts_csv(&paths.alerts, &alerts, Some(cfg.seed))?;
        all_subjects.push(alerts);
    }
    Ok(all_subjects)
}

/// Metrics for one subject, as printed by `eval`.
#[derive(Debug, Clone)]
pub struct SubjectEval {
    pub all_precision: Option<f64>,
    pub all_recall: Option<f64>,
    pub sel_precision: Option<f64>,
    pub sel_recall: Option<f64>,
    /// Samples shared between selective alerts and pattern labels
    /// (zero when suppression works).
    pub sel_pattern_overlap: usize,
    pub delays: Option<DelayStats>,
}

#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub subjects: Vec<SubjectEval>,
    pub transfer: Option<TransferGrid>,
}

fn metric_str(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.4}"),
        None => "undefined".into(),
    }
}

fn option_metric(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// `eval`: scores alert CSV against label CSV; with two or more
/// subjects it also prints the cross-subject transfer grid.
pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalSummary> {
    let mut subjects = Vec::new();
    for s in 0..cfg.synth.subjects {
        let paths = subject_paths(cfg, s);
        let alerts = io::read_alerts_csv(&paths.alerts)?;
        let (pattern_labels, other_labels) = io::read_labels_csv(&paths.labels)?;
        let all_labels = merged_labels(&pattern_labels, &other_labels)?;

        let all_stream: Vec<AlertInterval> = alerts
            .iter()
            .filter(|a| a.stream == StreamKind::AllAnomalies)
            .copied()
            .collect();
        let sel_stream: Vec<AlertInterval> = alerts
            .iter()
            .filter(|a| a.stream == StreamKind::Selective)
            .copied()
            .collect();

        let all_precision = option_metric(interval_precision(&all_labels, &all_stream))?;
        let all_recall = option_metric(interval_recall(&all_labels, &all_stream))?;
        let sel_precision = option_metric(interval_precision(&other_labels, &sel_stream))?;
        let sel_recall = option_metric(interval_recall(&other_labels, &sel_stream))?;
        let sel_pattern_overlap: usize = sel_stream
            .iter()
            .map(|a| {
                pattern_labels
                    .intervals()
                    .iter()
                    .map(|l| l.overlap(&a.interval))
                    .sum::<usize>()
            })
            .sum();
        let pairs = match_intervals(&other_labels, &sel_stream);
        let delays = if pairs.is_empty() {
            None
        } else {
            Some(delay_stats(&pairs, cfg.rate_hz)?)
        };

        println!("eval subject {s}:");
        println!(
            "  all_anomalies vs all labels:     precision = {}  recall = {}",
            metric_str(all_precision),
            metric_str(all_recall)
        );
        println!(
            "  selective vs other labels:       precision = {}  recall = {}",
            metric_str(sel_precision),
            metric_str(sel_recall)
        );
        println!("  selective overlap with pattern:  {sel_pattern_overlap} samples");
        if let Some(d) = &delays {
            println!(
                "  delays (selective vs other):     mean_a = {:.4} s  std_a = {:.4} s  mean_b = {:.4} s  std_b = {:.4} s",
                d.mean_a, d.std_a, d.mean_b, d.std_b
            );
        }

        subjects.push(SubjectEval {
            all_precision,
            all_recall,
            sel_precision,
            sel_recall,
            sel_pattern_overlap,
            delays,
        });
    }

    let transfer = if cfg.synth.subjects >= 2 {
        let grid = eval_transfer(cfg)?;
        print_transfer(&grid);
        Some(grid)
    } else {
        None
    };

    Ok(EvalSummary { subjects, transfer })
}

fn merged_labels(pattern: &LabelSet, other: &LabelSet) -> Result<LabelSet> {
    let mut all: Vec<_> = pattern
        .intervals()
        .iter()
        .chain(other.intervals())
        .copied()
        .collect();
    all.sort();
    LabelSet::new(all, crate::eval::LabelClass::Other)
}

fn eval_transfer(cfg: &RunConfig) -> Result<TransferGrid> {
    let mut subjects = Vec::new();
    for s in 0..cfg.synth.subjects {
        let paths = subject_paths(cfg, s);
        let (model, design, _) = load_design(cfg, s)?;
        let series = io::read_timeseries_csv(&paths.series, cfg.rate_hz)?;
        let (pattern_labels, other_labels) = io::read_labels_csv(&paths.labels)?;
        subjects.push(TransferSubject {
            model,
            design,
            series,
            labels: merged_labels(&pattern_labels, &other_labels)?,
        });
    }
    transfer_grid(&subjects, &cfg.detection_config())
}

fn print_transfer(grid: &TransferGrid) {
    println!("transfer grid (recall / precision), rows = model, cols = data:");
    for (i, row) in grid.cells.iter().enumerate() {
        let tag = if i < grid.subjects {
            format!("model s{i}")
        } else {
            "averaged".to_string()
        };
        let cells: Vec<String> = row
            .iter()
            .map(|c| format!("{:.4}/{}", c.recall, metric_str(c.precision)))
            .collect();
        println!("  {tag:>9}: {}", cells.join("  "));
    }
    println!(
        "  mean recall: diagonal {:.4}, off-diagonal {:.4}, averaged model {:.4}",
        grid.diagonal_mean_recall(),
        grid.off_diagonal_mean_recall(),
        grid.averaged_mean_recall()
    );
}

/// Per-subject report artifacts from `report`.
#[derive(Debug, Clone)]
pub struct ReportSummary {
    pub suppression: SuppressionReport,
}

/// `report`: plot-ready CSVs (difference histogram, residual-vs-error
/// scatter) plus a text table with the headline numbers.
pub fn cmd_report(cfg: &RunConfig) -> Result<Vec<ReportSummary>> {
    let mut summaries = Vec::new();
    for s in 0..cfg.synth.subjects {
        let paths = subject_paths(cfg, s);
        let (model, design, _) = load_design(cfg, s)?;
        let series = io::read_timeseries_csv(&paths.series, cfg.rate_hz)?;
        let (pattern_labels, _) = io::read_labels_csv(&paths.labels)?;
        let x0 = DVector::zeros(model.state_dim());
        let (r, e) = run_observer(&design, &model, &series, &x0)?;

        // square residual (tiled rows) for the r - e difference report
        let w_sq = tile_rows(design.w(), model.obs_dim());
        let design_sq =
            ResidualDesign::new(model.a(), model.c(), w_sq, design.f().clone())?;
        let (r_sq, _) = run_observer(&design_sq, &model, &series, &x0)?;
        let suppression =
            residual_suppression_report(&e, &r_sq, pattern_labels.intervals())?;

        ensure_dir(&paths.report_dir)?;
        write_difference_histogram(
            &paths.report_dir.join("suppression_hist.csv"),
            &e,
            &r_sq,
            &pattern_labels,
            cfg.seed,
        )?;
        write_re_scatter(
            &paths.report_dir.join("re_scatter.csv"),
            &e,
            &r,
            &pattern_labels,
            cfg.seed,
        )?;
        let mut table = String::new();
        let _ = writeln!(table, "subject {s}");
        let _ = writeln!(
            table,
            "suppression: median_in = {:.6e}, median_out = {:.6e}, separation = {:.4}",
            suppression.median_in, suppression.median_out, suppression.separation
        );
        std::fs::write(paths.report_dir.join("tables.txt"), &table)
            .map_err(|e| Error::io(paths.report_dir.display().to_string(), e))?;
        println!(
            "report subject {s}: separation {:.4} ({} in / {} out samples) -> {}",
            suppression.separation,
            suppression.samples_in,
            suppression.samples_out,
            paths.report_dir.display()
        );
        summaries.push(ReportSummary { suppression });
    }
    Ok(summaries)
}

fn write_difference_histogram(
    path: &PathBuf,
    e: &DMatrix<f64>,
    r_sq: &DMatrix<f64>,
    pattern_labels: &LabelSet,
    seed: u64,
) -> Result<()> {
    const BINS: usize = 30;
    let diffs: Vec<(f64, bool)> = (0..e.nrows())
        .map(|t| {
            let d = (r_sq.row(t) - e.row(t)).norm();
            let inside = pattern_labels.intervals().iter().any(|iv| iv.contains(t));
            (d, inside)
        })
        .collect();
    let max = diffs.iter().map(|&(d, _)| d).fold(0.0_f64, f64::max).max(1e-30);
    let mut count_in = [0usize; BINS];
    let mut count_out = [0usize; BINS];
    for &(d, inside) in &diffs {
        let bin = ((d / max) * BINS as f64).min(BINS as f64 - 1.0) as usize;
        if inside {
            count_in[bin] += 1;
        } else {
            count_out[bin] += 1;
        }
    }
    let mut out = format!("# seed={seed}\nbin_lo,bin_hi,count_in,count_out\n");
    for b in 0..BINS {
        let lo = max * b as f64 / BINS as f64;
        let hi = max * (b + 1) as f64 / BINS as f64;
        let _ = writeln!(out, "{lo:.6e},{hi:.6e},{},{}", count_in[b], count_out[b]);
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_re_scatter(
    path: &PathBuf,
    e: &DMatrix<f64>,
    r: &DMatrix<f64>,
    pattern_labels: &LabelSet,
    seed: u64,
) -> Result<()> {
    let mut out = format!("# seed={seed}\ne_norm,r_norm\n");
    for t in 0..e.nrows() {
        let inside = pattern_labels.intervals().iter().any(|iv| iv.contains(t));
        if !inside {
            let _ = writeln!(out, "{:.6e},{:.6e}", e.row(t).norm(), r.row(t).norm());
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn small_cfg(dir: &std::path::Path) -> RunConfig {
        let mut cfg = RunConfig {
            data_dir: dir.to_path_buf(),
            ..RunConfig::default()
        };
        cfg.synth.samples = 4000;
        cfg.synth.pattern_events = 3;
        cfg.synth.other_events = 2;
        cfg
    }

    #[test]
    fn full_pipeline_produces_selective_alerts() {
        let dir = tempdir().unwrap();
        let cfg = small_cfg(dir.path());
        cmd_synth(&cfg).unwrap();
        cmd_learn(&cfg).unwrap();
        cmd_design(&cfg).unwrap();
        let alerts = cmd_run(&cfg).unwrap();
        assert_eq!(alerts.len(), 1);
        let selective: Vec<_> = alerts[0]
            .iter()
            .filter(|a| a.stream == StreamKind::Selective)
            .collect();
        assert!(!selective.is_empty());
        let summary = cmd_eval(&cfg).unwrap();
        let subj = &summary.subjects[0];
        assert_eq!(subj.sel_pattern_overlap, 0);
        assert!(subj.sel_recall.unwrap() > 0.9);
        let reports = cmd_report(&cfg).unwrap();
        assert!(reports[0].suppression.separation > 1.0);
    }

    #[test]
    fn perfect_predictions_score_exactly_one() {
        let dir = tempdir().unwrap();
        let cfg = small_cfg(dir.path());
        cmd_synth(&cfg).unwrap();
        // hand alerts that coincide with the labels exactly
        let paths = subject_paths(&cfg, 0);
        let (pattern, other) = crate::io::read_labels_csv(&paths.labels).unwrap();
        let mut alerts = Vec::new();
        for iv in pattern.intervals().iter().chain(other.intervals()) {
            alerts.push(AlertInterval {
                interval: *iv,
                stream: StreamKind::AllAnomalies,
                peak_stat: 1.0,
            });
        }
        for iv in other.intervals() {
            alerts.push(AlertInterval {
                interval: *iv,
                stream: StreamKind::Selective,
                peak_stat: 1.0,
            });
        }
        crate::io::write_alerts_csv(&paths.alerts, &alerts, Some(cfg.seed)).unwrap();
        let summary = cmd_eval(&cfg).unwrap();
        let s = &summary.subjects[0];
        assert_eq!(s.all_precision, Some(1.0));
        assert_eq!(s.all_recall, Some(1.0));
        assert_eq!(s.sel_precision, Some(1.0));
        assert_eq!(s.sel_recall, Some(1.0));
        let d = s.delays.as_ref().unwrap();
        assert_eq!((d.mean_a, d.mean_b), (0.0, 0.0));
    }

    #[test]
    fn synth_is_byte_idempotent() {
        let dir = tempdir().unwrap();
        let cfg = small_cfg(dir.path());
        cmd_synth(&cfg).unwrap();
        let first = std::fs::read(cfg.subject_dir(0).join("series.csv")).unwrap();
        cmd_synth(&cfg).unwrap();
        let second = std::fs::read(cfg.subject_dir(0).join("series.csv")).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn run_without_design_is_a_missing_artifact() {
        let dir = tempdir().unwrap();
        let cfg = small_cfg(dir.path());
        cmd_synth(&cfg).unwrap();
        match cmd_run(&cfg) {
            Err(e) => assert_eq!(e.class(), crate::error::ErrorClass::Io),
            Ok(_) => panic!("run should fail before design"),
        }
    }

    #[test]
    fn infeasible_pattern_aborts_design() {
        let dir = tempdir().unwrap();
        let cfg = small_cfg(dir.path());
        cmd_synth(&cfg).unwrap();
        // overwrite the pattern with a full-rank one: rank(P) = rank(C)
        // leaves no null space for W
        let paths = subject_paths(&cfg, 0);
        let full = crate::model::PatternMatrix::new(DMatrix::identity(6, 6)).unwrap();
        crate::io::write_pattern_file(&paths.pattern, &full).unwrap();
        match cmd_design(&cfg) {
            Err(e) => {
                assert_eq!(e.class(), crate::error::ErrorClass::Infeasible);
            }
            Ok(_) => panic!("design should reject a full-rank pattern"),
        }
    }
}
