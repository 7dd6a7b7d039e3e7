//! Interval-aware scoring of alert streams against labels.
//!
//! Precision and recall count overlapping samples between half-open
//! label intervals `[a_i, b_i)` and predicted intervals `[a'_j, b'_j)`:
//!
//! ```text
//! precision = sum_ij |[a_i,b_i) ∩ [a'_j,b'_j)| / sum_j |[a'_j,b'_j)|
//! recall    = sum_ij |[a_i,b_i) ∩ [a'_j,b'_j)| / sum_i |[a_i,b_i)|
//! ```
//!
//! Overlap and length sums are integer sample counts, so both metrics
//! are exact up to the final division. Delay statistics are moments of
//! `(a_i - a'_i) / rate` over greedily matched pairs, positive when the
//! prediction starts before the label.

use nalgebra::DMatrix;

use crate::design::ResidualDesign;
use crate::detect::{run_selective_detection, AlertInterval, DetectionConfig};
use crate::error::{Error, Result};
use crate::model::{LdsModel, SampleInterval, TimeSeries};

/// Which event class a label set describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelClass {
    /// The suppressed pattern (spindle-like events).
    Pattern,
    /// Everything else that should keep alerting.
    Other,
}

impl std::fmt::Display for LabelClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LabelClass::Pattern => write!(f, "pattern"),
            LabelClass::Other => write!(f, "other"),
        }
    }
}

impl std::str::FromStr for LabelClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pattern" => Ok(LabelClass::Pattern),
            "other" => Ok(LabelClass::Other),
            other => Err(Error::InvalidArgument(format!(
                "unknown label class '{other}' (expected pattern|other)"
            ))),
        }
    }
}

/// Sorted, disjoint labeled intervals of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    intervals: Vec<SampleInterval>,
    class: LabelClass,
}

impl LabelSet {
    pub fn new(mut intervals: Vec<SampleInterval>, class: LabelClass) -> Result<Self> {
        intervals.sort();
        for pair in intervals.windows(2) {
            if pair[1].start < pair[0].end {
                return Err(Error::InvalidArgument(format!(
                    "label intervals overlap: [{}, {}) and [{}, {})",
                    pair[0].start, pair[0].end, pair[1].start, pair[1].end
                )));
            }
        }
        Ok(Self { intervals, class })
    }

    pub fn intervals(&self) -> &[SampleInterval] {
        &self.intervals
    }

    pub fn class(&self) -> LabelClass {
        self.class
    }

    pub fn total_len(&self) -> usize {
        self.intervals.iter().map(|iv| iv.len()).sum()
    }
}

fn total_overlap(labels: &[SampleInterval], preds: &[AlertInterval]) -> usize {
    preds
        .iter()
        .map(|p| {
            labels
                .iter()
                .map(|l| l.overlap(&p.interval))
                .sum::<usize>()
        })
        .sum()
}

/// Overlap-weighted precision in `[0, 1]`.
///
/// Undefined (an error, not 0) when there are predictions to score
/// against nothing... strictly: when `preds` is empty and labels are
/// not; both empty scores a vacuous 1.0.
pub fn interval_precision(labels: &LabelSet, preds: &[AlertInterval]) -> Result<f64> {
    if preds.is_empty() {
        return if labels.intervals.is_empty() {
            Ok(1.0)
        } else {
            Err(Error::UndefinedMetric(
                "precision undefined: no predicted intervals".into(),
            ))
        };
    }
    let denom: usize = preds.iter().map(|p| p.interval.len()).sum();
    Ok(total_overlap(&labels.intervals, preds) as f64 / denom as f64)
}

/// Overlap-weighted recall in `[0, 1]`; undefined when there are no
/// labeled intervals (and some predictions).
pub fn interval_recall(labels: &LabelSet, preds: &[AlertInterval]) -> Result<f64> {
    if labels.intervals.is_empty() {
        return if preds.is_empty() {
            Ok(1.0)
        } else {
            Err(Error::UndefinedMetric(
                "recall undefined: no labeled intervals".into(),
            ))
        };
    }
    let denom = labels.total_len();
    Ok(total_overlap(&labels.intervals, preds) as f64 / denom as f64)
}

/// Greedy maximum-overlap matching; each interval is used at most once,
/// ties broken by earlier start.
pub fn match_intervals(
    labels: &LabelSet,
    preds: &[AlertInterval],
) -> Vec<(SampleInterval, SampleInterval)> {
    let mut candidates: Vec<(usize, usize, usize)> = Vec::new(); // (overlap, li, pi)
    for (li, l) in labels.intervals.iter().enumerate() {
        for (pi, p) in preds.iter().enumerate() {
            let ov = l.overlap(&p.interval);
            if ov > 0 {
                candidates.push((ov, li, pi));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.cmp(&a.0)
            .then(labels.intervals[a.1].start.cmp(&labels.intervals[b.1].start))
            .then(preds[a.2].interval.start.cmp(&preds[b.2].interval.start))
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut label_used = vec![false; labels.intervals.len()];
    let mut pred_used = vec![false; preds.len()];
    let mut pairs = Vec::new();
    for (_, li, pi) in candidates {
        if !label_used[li] && !pred_used[pi] {
            label_used[li] = true;
            pred_used[pi] = true;
            pairs.push((labels.intervals[li], preds[pi].interval));
        }
    }
    pairs.sort_by_key(|(l, _)| l.start);
    pairs
}

/// Start/end delay moments over matched pairs, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayStats {
    pub mean_a: f64,
    pub std_a: f64,
    pub mean_b: f64,
    pub std_b: f64,
    pub pairs: usize,
}

fn moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean, std)
}

/// Moments of `(a_label - a_pred) / rate` and `(b_label - b_pred) / rate`;
/// a positive start delay means the prediction began before the label.
pub fn delay_stats(pairs: &[(SampleInterval, SampleInterval)], rate_hz: f64) -> Result<DelayStats> {
    if pairs.is_empty() {
        return Err(Error::UndefinedMetric(
            "delay statistics need at least one matched pair".into(),
        ));
    }
    if rate_hz.is_nan() || rate_hz <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "rate must be positive, got {rate_hz}"
        )));
    }
    let a_delays: Vec<f64> = pairs
        .iter()
        .map(|(l, p)| (l.start as f64 - p.start as f64) / rate_hz)
        .collect();
    let b_delays: Vec<f64> = pairs
        .iter()
        .map(|(l, p)| (l.end as f64 - p.end as f64) / rate_hz)
        .collect();
    let (mean_a, std_a) = moments(&a_delays);
    let (mean_b, std_b) = moments(&b_delays);
    Ok(DelayStats {
        mean_a,
        std_a,
        mean_b,
        std_b,
        pairs: pairs.len(),
    })
}

/// Distribution comparison of `|r(t) - e(t)|` inside vs outside the
/// pattern intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuppressionReport {
    pub median_in: f64,
    pub median_out: f64,
    /// `median_in / median_out`; 1.0 when both are zero.
    pub separation: f64,
    pub samples_in: usize,
    pub samples_out: usize,
}

fn median(sorted: &mut [f64]) -> f64 {
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Per-sample `|r(t) - e(t)|` medians inside and outside the pattern
/// intervals. Requires the residual dimension to equal the observation
/// dimension (pad or tile `W` to square when this report is wanted).
pub fn residual_suppression_report(
    e_series: &DMatrix<f64>,
    r_series: &DMatrix<f64>,
    pattern_intervals: &[SampleInterval],
) -> Result<SuppressionReport> {
    if e_series.shape() != r_series.shape() {
        return Err(Error::Dimension(format!(
            "need r and e with equal shapes, got {:?} vs {:?}",
            r_series.shape(),
            e_series.shape()
        )));
    }
    let mut inside = Vec::new();
    let mut outside = Vec::new();
    for t in 0..e_series.nrows() {
        let d = (r_series.row(t) - e_series.row(t)).norm();
        if pattern_intervals.iter().any(|iv| iv.contains(t)) {
            inside.push(d);
        } else {
            outside.push(d);
        }
    }
    if inside.is_empty() || outside.is_empty() {
        return Err(Error::UndefinedMetric(format!(
            "empty partition: {} samples inside, {} outside",
            inside.len(),
            outside.len()
        )));
    }
    let samples_in = inside.len();
    let samples_out = outside.len();
    let median_in = median(&mut inside);
    let median_out = median(&mut outside);
    let separation = if median_out > 0.0 {
        median_in / median_out
    } else if median_in == 0.0 {
        1.0
    } else {
        f64::INFINITY
    };
    Ok(SuppressionReport {
        median_in,
        median_out,
        separation,
        samples_in,
        samples_out,
    })
}

/// One transfer-grid cell; precision is `None` when a run produced no
/// alert intervals at all.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferCell {
    pub recall: f64,
    pub precision: Option<f64>,
}

/// Cross-subject evaluation grid. Row i = model/design of subject i
/// applied to every subject's data; the extra last row is the averaged
/// model (element-wise mean of `A`, `C`, `W`, `F` across subjects).
#[derive(Debug, Clone)]
pub struct TransferGrid {
    pub cells: Vec<Vec<TransferCell>>,
    pub subjects: usize,
}

impl TransferGrid {
    pub fn averaged_row(&self) -> &[TransferCell] {
        &self.cells[self.subjects]
    }

    pub fn diagonal_mean_recall(&self) -> f64 {
        let s = self.subjects;
        (0..s).map(|i| self.cells[i][i].recall).sum::<f64>() / s as f64
    }

    pub fn off_diagonal_mean_recall(&self) -> f64 {
        let s = self.subjects;
        let mut sum = 0.0;
        let mut count = 0;
        for i in 0..s {
            for j in 0..s {
                if i != j {
                    sum += self.cells[i][j].recall;
                    count += 1;
                }
            }
        }
        sum / count as f64
    }

    pub fn averaged_mean_recall(&self) -> f64 {
        let s = self.subjects;
        self.averaged_row().iter().map(|c| c.recall).sum::<f64>() / s as f64
    }
}

/// Per-subject inputs for [`transfer_grid`].
#[derive(Debug, Clone)]
pub struct TransferSubject {
    pub model: LdsModel,
    pub design: ResidualDesign,
    pub series: TimeSeries,
    /// All labeled event intervals (pattern and other merged).
    pub labels: LabelSet,
}

fn eval_cell(
    model: &LdsModel,
    design: &ResidualDesign,
    subject: &TransferSubject,
    cfg: &DetectionConfig,
) -> Result<TransferCell> {
    let x0 = nalgebra::DVector::zeros(model.state_dim());
    let (r, e) = crate::design::run_observer(design, model, &subject.series, &x0)?;
    let (all, _) = run_selective_detection(&e, &r, cfg)?;
    let recall = if subject.labels.intervals().is_empty() {
        1.0
    } else {
        interval_recall(&subject.labels, &all)?
    };
    let precision = match interval_precision(&subject.labels, &all) {
        Ok(p) => Some(p),
        Err(Error::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(TransferCell { recall, precision })
}

fn mean_matrix<'a>(mats: impl Iterator<Item = &'a DMatrix<f64>>) -> DMatrix<f64> {
    let mats: Vec<&DMatrix<f64>> = mats.collect();
    let mut sum = mats[0].clone();
    for m in &mats[1..] {
        sum += *m;
    }
    sum / mats.len() as f64
}

/// Evaluates every subject's model/design against every subject's data,
/// plus an averaged-model row.
pub fn transfer_grid(subjects: &[TransferSubject], cfg: &DetectionConfig) -> Result<TransferGrid> {
    if subjects.len() < 2 {
        return Err(Error::InvalidArgument(
            "transfer grid needs at least two subjects".into(),
        ));
    }
    let s = subjects.len();
    let mut cells = Vec::with_capacity(s + 1);
    for i in 0..s {
        let mut row = Vec::with_capacity(s);
        for subject in subjects {
            row.push(eval_cell(
                &subjects[i].model,
                &subjects[i].design,
                subject,
                cfg,
            )?);
        }
        cells.push(row);
    }

    let a_bar = mean_matrix(subjects.iter().map(|s| s.model.a()));
    let c_bar = mean_matrix(subjects.iter().map(|s| s.model.c()));
    let w_bar = mean_matrix(subjects.iter().map(|s| s.design.w()));
    let f_bar = mean_matrix(subjects.iter().map(|s| s.design.f()));
    let avg_model = LdsModel::new(a_bar.clone(), c_bar.clone())?;
    let avg_design = ResidualDesign::new(&a_bar, &c_bar, w_bar, f_bar)?;
    let mut avg_row = Vec::with_capacity(s);
    for subject in subjects {
        avg_row.push(eval_cell(&avg_model, &avg_design, subject, cfg)?);
    }
    cells.push(avg_row);

    Ok(TransferGrid { cells, subjects: s })
}
