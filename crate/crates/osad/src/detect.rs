//! Two-sided CUSUM charts over residual norms and the two OSAD alert
//! streams.
//!
//! Charts are designed from `(alpha, beta, delta)`:
//!
//! ```text
//! J = delta * sigma / 2
//! H = (2 / delta^2) * ln((1 - beta) / alpha) * J
//! S_hi(i) = max(0, S_hi(i-1) + x_i - mu0 - J)
//! S_lo(i) = max(0, S_lo(i-1) + mu0 - J - x_i)
//! ```
//!
//! with `mu0`, `sigma` estimated on a calibration window. A sample is
//! flagged when either statistic exceeds `H`; both statistics reset to
//! zero on a flag so that alert intervals stay well separated.
//!
//! [`run_selective_detection`] scalarizes the observed-error series
//! `e(t)` and the designed-residual series `r(t)` by their per-sample
//! Euclidean norms and runs one chart over each: flags on `|e|` form the
//! all-anomalies stream, flags on `|r|` the selective stream.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::SampleInterval;

/// Which alert stream an interval belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    AllAnomalies,
    Selective,
}

impl std::fmt::Display for StreamKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StreamKind::AllAnomalies => write!(f, "all_anomalies"),
            StreamKind::Selective => write!(f, "selective"),
        }
    }
}

impl std::str::FromStr for StreamKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all_anomalies" => Ok(StreamKind::AllAnomalies),
            "selective" => Ok(StreamKind::Selective),
            other => Err(Error::InvalidArgument(format!(
                "unknown stream '{other}' (expected all_anomalies|selective)"
            ))),
        }
    }
}

/// CUSUM design parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CusumConfig {
    /// False-alarm probability.
    pub alpha: f64,
    /// Miss probability.
    pub beta: f64,
    /// Shift size to detect, in sigmas.
    pub delta: f64,
    /// Samples used to estimate `mu0` and `sigma`.
    pub calibration_len: usize,
}

impl Default for CusumConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-4,
            beta: 1e-4,
            delta: 1.0,
            calibration_len: 400,
        }
    }
}

impl CusumConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if v.is_nan() || v <= 0.0 || v >= 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be in (0, 1), got {v}"
                )));
            }
        }
        if self.delta.is_nan() || self.delta <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        if self.calibration_len < 30 {
            return Err(Error::InvalidArgument(format!(
                "calibration_len must be at least 30, got {}",
                self.calibration_len
            )));
        }
        Ok(())
    }
}

/// A calibrated, running chart.
#[derive(Debug, Clone, PartialEq)]
pub struct CusumState {
    pub s_hi: f64,
    pub s_lo: f64,
    pub mu0: f64,
    pub sigma: f64,
    /// Slack `J = delta * sigma / 2`.
    pub j: f64,
    /// Decision threshold `H`.
    pub h: f64,
    pub sample_index: usize,
    last_stat: f64,
}

impl CusumState {
    /// Statistic value (max of both sides) at the last step, captured
    /// before any reset; this is what interval peaks report.
    pub fn last_stat(&self) -> f64 {
        self.last_stat
    }
}

/// Estimates `mu0`/`sigma` on the first `calibration_len` samples and
/// derives `J` and `H`.
pub fn calibrate(signal: &[f64], cfg: &CusumConfig) -> Result<CusumState> {
    cfg.validate()?;
    if signal.len() < cfg.calibration_len {
        return Err(Error::InsufficientData(format!(
            "calibration needs {} samples, got {}",
            cfg.calibration_len,
            signal.len()
        )));
    }
    let window = &signal[..cfg.calibration_len];
    if !window.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("calibration window contains NaN or Inf".into()));
    }
    let n = window.len() as f64;
    let mu0 = window.iter().sum::<f64>() / n;
    let var = window.iter().map(|v| (v - mu0) * (v - mu0)).sum::<f64>() / (n - 1.0);
    let sigma = var.sqrt();
    if sigma == 0.0 {
        return Err(Error::DegenerateCalibration);
    }
    let j = cfg.delta * sigma / 2.0;
    let h = (2.0 / (cfg.delta * cfg.delta)) * ((1.0 - cfg.beta) / cfg.alpha).ln() * j;
    Ok(CusumState {
        s_hi: 0.0,
        s_lo: 0.0,
        mu0,
        sigma,
        j,
        h,
        sample_index: 0,
        last_stat: 0.0,
    })
}

/// Advances the chart by one sample; true means "flagged". Both
/// statistics reset to zero after a flag.
pub fn cusum_step(state: &mut CusumState, value: f64) -> Result<bool> {
    if !value.is_finite() {
        return Err(Error::NonFinite(format!(
            "CUSUM input non-finite at sample {}",
            state.sample_index
        )));
    }
    state.s_hi = (state.s_hi + value - state.mu0 - state.j).max(0.0);
    state.s_lo = (state.s_lo + state.mu0 - state.j - value).max(0.0);
    state.last_stat = state.s_hi.max(state.s_lo);
    state.sample_index += 1;
    let flagged = state.s_hi > state.h || state.s_lo > state.h;
    if flagged {
        state.s_hi = 0.0;
        state.s_lo = 0.0;
    }
    Ok(flagged)
}

/// Runs a calibrated chart over a whole signal, returning per-sample
/// flags and statistics.
pub fn run_cusum(state: &mut CusumState, signal: &[f64]) -> Result<(Vec<bool>, Vec<f64>)> {
    let mut flags = Vec::with_capacity(signal.len());
    let mut stats = Vec::with_capacity(signal.len());
    for &v in signal {
        flags.push(cusum_step(state, v)?);
        stats.push(state.last_stat());
    }
    Ok((flags, stats))
}

/// One alert: a half-open interval on one stream with the peak
/// statistic observed inside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlertInterval {
    pub interval: SampleInterval,
    pub stream: StreamKind,
    pub peak_stat: f64,
}

impl AlertInterval {
    pub fn start(&self) -> usize {
        self.interval.start
    }

    pub fn end(&self) -> usize {
        self.interval.end
    }
}

/// Merges flags into maximal intervals, bridging gaps of at most `gap`
/// samples, then dropping intervals shorter than `min_len`.
///
/// `stats`, when nonempty, must be as long as `flags` and supplies the
/// per-interval peak statistic.
pub fn intervals_from_flags(
    flags: &[bool],
    gap: usize,
    min_len: usize,
    stream: StreamKind,
    stats: &[f64],
) -> Vec<AlertInterval> {
    let mut runs: Vec<SampleInterval> = Vec::new();
    let mut start = None;
    for (t, &f) in flags.iter().enumerate() {
        match (f, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                runs.push(SampleInterval { start: s, end: t });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push(SampleInterval {
            start: s,
            end: flags.len(),
        });
    }

    // bridge gaps first, then filter by length
    let mut merged: Vec<SampleInterval> = Vec::new();
    for run in runs {
        match merged.last_mut() {
            Some(prev) if run.start.saturating_sub(prev.end) <= gap => prev.end = run.end,
            _ => merged.push(run),
        }
    }

    merged
        .into_iter()
        .filter(|iv| iv.len() >= min_len.max(1))
        .map(|iv| {
            let peak = if stats.len() == flags.len() {
                stats[iv.start..iv.end]
                    .iter()
                    .fold(0.0_f64, |acc, &s| acc.max(s))
            } else {
                0.0
            };
            AlertInterval {
                interval: iv,
                stream,
                peak_stat: peak,
            }
        })
        .collect()
}

/// Interval-merging settings for a detection run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionConfig {
    pub cusum: CusumConfig,
    /// Flag gaps up to this many samples are bridged.
    pub gap: usize,
    /// Intervals shorter than this many samples are dropped.
    pub min_len: usize,
}

impl DetectionConfig {
    /// Defaults scaled to a sampling rate: 0.1 s gap, 0.25 s minimum
    /// length.
    pub fn for_rate(rate_hz: f64) -> Self {
        Self {
            cusum: CusumConfig::default(),
            gap: (0.1 * rate_hz).round() as usize,
            min_len: (0.25 * rate_hz).round() as usize,
        }
    }
}

/// Relative deviation treated as "nonzero" by the zero-noise fallback
/// chart used when a calibration window is exactly constant.
const DEGENERATE_TOL: f64 = 1e-9;

fn detect_stream(
    norms: &[f64],
    cfg: &DetectionConfig,
    stream: StreamKind,
) -> Result<Vec<AlertInterval>> {
    let window = norms.get(..cfg.cusum.calibration_len).ok_or_else(|| {
        Error::InsufficientData(format!(
            "series has {} samples, calibration needs {}",
            norms.len(),
            cfg.cusum.calibration_len
        ))
    })?;
    let constant = window.iter().all(|&v| v == window[0]);
    let (flags, stats) = if constant {
        // Zero-noise limit: sigma = 0 has no finite CUSUM design, so any
        // real departure from the calibration level is flagged directly.
        let mu0 = window[0];
        let tol = DEGENERATE_TOL * (1.0 + mu0.abs());
        let stats: Vec<f64> = norms.iter().map(|&v| (v - mu0).abs()).collect();
        let flags: Vec<bool> = stats.iter().map(|&s| s > tol).collect();
        (flags, stats)
    } else {
        let mut state = calibrate(norms, &cfg.cusum)?;
        run_cusum(&mut state, norms)?
    };
    Ok(intervals_from_flags(
        &flags,
        cfg.gap,
        cfg.min_len,
        stream,
        &stats,
    ))
}

fn row_norms(series: &DMatrix<f64>) -> Vec<f64> {
    (0..series.nrows()).map(|t| series.row(t).norm()).collect()
}

/// Runs both alert streams: a chart over `|e(t)|` (all anomalies) and a
/// chart over `|r(t)|` (selective).
pub fn run_selective_detection(
    e_series: &DMatrix<f64>,
    r_series: &DMatrix<f64>,
    cfg: &DetectionConfig,
) -> Result<(Vec<AlertInterval>, Vec<AlertInterval>)> {
    if e_series.nrows() != r_series.nrows() {
        return Err(Error::Dimension(format!(
            "error series has {} samples, residual series has {}",
            e_series.nrows(),
            r_series.nrows()
        )));
    }
    let all = detect_stream(&row_norms(e_series), cfg, StreamKind::AllAnomalies)?;
    let selective = detect_stream(&row_norms(r_series), cfg, StreamKind::Selective)?;
    Ok((all, selective))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector, DVector};
    use proptest::prelude::*;

    use crate::design::{design_for_pattern, run_observer, FDesignMethod};
    use crate::model::{simulate_lds, DisturbanceSignal, LdsModel, PatternMatrix};

    /// 101 samples with exact mean 0 and exact unbiased std 1.
    fn unit_calibration() -> Vec<f64> {
        let mut v = vec![0.0];
        for _ in 0..50 {
            v.push(1.0);
            v.push(-1.0);
        }
        v
    }

    fn unit_cfg() -> CusumConfig {
        CusumConfig {
            calibration_len: 101,
            ..CusumConfig::default()
        }
    }

    #[test]
    fn calibration_derives_design_constants() {
        let state = calibrate(&unit_calibration(), &unit_cfg()).unwrap();
        assert_abs_diff_eq!(state.mu0, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(state.sigma, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(state.j, 0.5, epsilon = 1e-15);
        // H = 2 ln(9999) J = ln(9999) = 9.210240366975851 for sigma 1
        assert_abs_diff_eq!(state.h, 9.210240366975851, epsilon = 1e-9);
    }

    #[test]
    fn constant_calibration_is_rejected() {
        let cfg = CusumConfig {
            calibration_len: 30,
            ..CusumConfig::default()
        };
        let signal = vec![3.0; 40];
        assert!(matches!(
            calibrate(&signal, &cfg),
            Err(Error::DegenerateCalibration)
        ));
    }

    #[test]
    fn calibration_recovers_offset_mean() {
        let signal: Vec<f64> = unit_calibration().iter().map(|v| v + 5.0).collect();
        let state = calibrate(&signal, &unit_cfg()).unwrap();
        assert_abs_diff_eq!(state.mu0, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn stream_at_mean_never_flags() {
        let mut state = calibrate(&unit_calibration(), &unit_cfg()).unwrap();
        for _ in 0..10_000 {
            assert!(!cusum_step(&mut state, 0.0).unwrap());
            assert_eq!(state.s_hi, 0.0);
            assert_eq!(state.s_lo, 0.0);
        }
    }

    #[test]
    fn ten_sigma_step_flags_within_two_samples() {
        let mut state = calibrate(&unit_calibration(), &unit_cfg()).unwrap();
        let mut first_flag = None;
        for t in 0..5 {
            if cusum_step(&mut state, 10.0).unwrap() {
                first_flag = Some(t);
                break;
            }
        }
        assert!(first_flag.unwrap() < 2);
    }

    #[test]
    fn one_sigma_step_flags_at_predicted_delay() {
        // drift J = 0.5 per sample, so the flag lands at step
        // ceil(H / 0.5) = ceil(18.42) = 19 (1-indexed).
        let mut state = calibrate(&unit_calibration(), &unit_cfg()).unwrap();
        let mut steps = 0;
        loop {
            steps += 1;
            if cusum_step(&mut state, 1.0).unwrap() {
                break;
            }
            assert!(steps < 30, "flag overdue");
        }
        assert_eq!(steps, 19);
    }

    #[test]
    fn downward_shift_flags_via_s_lo() {
        let mut state = calibrate(&unit_calibration(), &unit_cfg()).unwrap();
        let mut flagged = false;
        for _ in 0..40 {
            if cusum_step(&mut state, -1.0).unwrap() {
                flagged = true;
                break;
            }
        }
        assert!(flagged);
    }

    #[test]
    fn interval_merge_examples() {
        let mut flags = vec![false; 12];
        for t in [5, 6, 7] {
            flags[t] = true;
        }
        let ivs = intervals_from_flags(&flags, 0, 1, StreamKind::Selective, &[]);
        assert_eq!(ivs.len(), 1);
        assert_eq!((ivs[0].start(), ivs[0].end()), (5, 8));

        let mut flags = vec![false; 14];
        for t in [5, 6, 9, 10] {
            flags[t] = true;
        }
        let ivs = intervals_from_flags(&flags, 2, 1, StreamKind::Selective, &[]);
        assert_eq!(ivs.len(), 1);
        assert_eq!((ivs[0].start(), ivs[0].end()), (5, 11));

        let mut flags = vec![false; 8];
        flags[5] = true;
        let ivs = intervals_from_flags(&flags, 0, 2, StreamKind::Selective, &[]);
        assert!(ivs.is_empty());
    }

    #[test]
    fn interval_peak_statistic_is_captured() {
        let flags = vec![false, true, true, false];
        let stats = vec![0.0, 3.0, 7.0, 1.0];
        let ivs = intervals_from_flags(&flags, 0, 1, StreamKind::AllAnomalies, &stats);
        assert_eq!(ivs.len(), 1);
        assert_abs_diff_eq!(ivs[0].peak_stat, 7.0);
    }

    fn golden_setup() -> (LdsModel, PatternMatrix, crate::design::ResidualDesign) {
        let model = LdsModel::new(
            dmatrix![0.5, 0.3; 0.3, 0.2],
            nalgebra::DMatrix::identity(2, 2),
        )
        .unwrap();
        let pattern = PatternMatrix::new(dmatrix![1.0, 1.0; 2.0, 2.0]).unwrap();
        let design = design_for_pattern(&model, &pattern, None, FDesignMethod::Left).unwrap();
        (model, pattern, design)
    }

    fn burst(len: usize, window: std::ops::Range<usize>, dims: usize, amp: f64) -> DisturbanceSignal {
        let mut z = nalgebra::DMatrix::zeros(len, dims);
        for t in window {
            for d in 0..dims {
                z[(t, d)] = amp * ((t + d) as f64 * 0.37).sin();
            }
        }
        DisturbanceSignal::from_values(z).unwrap()
    }

    #[test]
    fn selective_stream_ignores_pattern_events() {
        let (model, pattern, design) = golden_setup();
        let dist = burst(500, 200..260, 2, 1.0);
        let x0 = dvector![0.0, 0.0];
        let sim = simulate_lds(&model, &x0, 500, Some((&pattern, &dist)), 0.0, 0).unwrap();
        let (r, e) = run_observer(&design, &model, &sim.series, &x0).unwrap();
        let cfg = DetectionConfig {
            cusum: CusumConfig {
                calibration_len: 100,
                ..CusumConfig::default()
            },
            gap: 4,
            min_len: 5,
        };
        let (all, selective) = run_selective_detection(&e, &r, &cfg).unwrap();
        assert!(!all.is_empty(), "pattern event missing from all-anomalies");
        assert!(selective.is_empty(), "pattern leaked into selective: {selective:?}");
    }

    #[test]
    fn both_streams_flag_orthogonal_events() {
        let (model, _, design) = golden_setup();
        let q = PatternMatrix::new(dmatrix![2.0; -1.0]).unwrap();
        let dist = burst(500, 200..260, 1, 1.0);
        let x0 = dvector![0.0, 0.0];
        let sim = simulate_lds(&model, &x0, 500, Some((&q, &dist)), 0.0, 0).unwrap();
        let (r, e) = run_observer(&design, &model, &sim.series, &x0).unwrap();
        let cfg = DetectionConfig {
            cusum: CusumConfig {
                calibration_len: 100,
                ..CusumConfig::default()
            },
            gap: 4,
            min_len: 5,
        };
        let (all, selective) = run_selective_detection(&e, &r, &cfg).unwrap();
        assert!(!all.is_empty());
        assert!(!selective.is_empty());
        let a = &all[0];
        let s = &selective[0];
        assert!(a.interval.overlap(&s.interval) > 0, "streams should agree on the event");
    }

    #[test]
    fn quiet_noise_free_run_is_silent() {
        let (model, _, design) = golden_setup();
        let x0 = dvector![0.0, 0.0];
        let sim = simulate_lds(&model, &x0, 500, None, 0.0, 0).unwrap();
        let (r, e) = run_observer(&design, &model, &sim.series, &x0).unwrap();
        let cfg = DetectionConfig {
            cusum: CusumConfig {
                calibration_len: 100,
                ..CusumConfig::default()
            },
            gap: 4,
            min_len: 5,
        };
        let (all, selective) = run_selective_detection(&e, &r, &cfg).unwrap();
        assert!(all.is_empty());
        assert!(selective.is_empty());
    }

    #[test]
    fn non_finite_input_is_reported() {
        let mut state = calibrate(&unit_calibration(), &unit_cfg()).unwrap();
        assert!(matches!(
            cusum_step(&mut state, f64::NAN),
            Err(Error::NonFinite(_))
        ));
    }

    proptest! {
        #[test]
        fn statistics_stay_nonnegative(values in proptest::collection::vec(-50.0..50.0f64, 1..200)) {
            let mut state = calibrate(&unit_calibration(), &unit_cfg()).unwrap();
            for v in values {
                let _ = cusum_step(&mut state, v).unwrap();
                prop_assert!(state.s_hi >= 0.0);
                prop_assert!(state.s_lo >= 0.0);
            }
        }

        #[test]
        fn detection_is_deterministic(seed in 0u64..50) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let signal: Vec<f64> = (0..300).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let cfg = CusumConfig { calibration_len: 50, ..CusumConfig::default() };
            let mut s1 = calibrate(&signal, &cfg).unwrap();
            let mut s2 = calibrate(&signal, &cfg).unwrap();
            let (f1, _) = run_cusum(&mut s1, &signal).unwrap();
            let (f2, _) = run_cusum(&mut s2, &signal).unwrap();
            prop_assert_eq!(f1, f2);
        }
    }

    #[test]
    fn vector_norm_scalarization() {
        let e = dmatrix![3.0, 4.0; 0.0, 0.0];
        let norms = row_norms(&e);
        assert_abs_diff_eq!(norms[0], 5.0, epsilon = 1e-15);
        assert_abs_diff_eq!(norms[1], 0.0, epsilon = 1e-15);
        let _ = DVector::<f64>::zeros(1);
    }
}
