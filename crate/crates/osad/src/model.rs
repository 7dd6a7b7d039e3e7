//! Core state-space types, forward simulation and error signals.
//!
//! The generating model is the discrete linear dynamical system
//!
//! ```text
//! x(t+1) = A x(t) + P z(t)      (latent state, optional disturbance)
//! y(t)   = C x(t) + noise       (observation; noise is measurement-only)
//! ```
//!
//! with `A` (n x n), `C` (m x n) and a pattern matrix `P` (n x k) whose
//! driving signal `z(t)` is nonzero only inside its active intervals.
//! Intervals are half-open sample-index ranges `[start, end)` everywhere
//! in this crate.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg;

/// Default sampling rate for synthetic series (samples per second).
pub const DEFAULT_RATE_HZ: f64 = 200.0;

/// Half-open sample-index interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SampleInterval {
    pub start: usize,
    pub end: usize,
}

impl SampleInterval {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start >= end {
            return Err(Error::InvalidArgument(format!(
                "interval [{start}, {end}) is empty or reversed"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn contains(&self, t: usize) -> bool {
        t >= self.start && t < self.end
    }

    /// Number of samples shared with `other`.
    pub fn overlap(&self, other: &SampleInterval) -> usize {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        hi.saturating_sub(lo)
    }
}

/// N x m multichannel record sampled at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    samples: DMatrix<f64>,
    rate_hz: f64,
    channel_names: Vec<String>,
}

impl TimeSeries {
    pub fn new(samples: DMatrix<f64>, rate_hz: f64, channel_names: Vec<String>) -> Result<Self> {
        if samples.nrows() == 0 || samples.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "time series needs at least one sample and one channel".into(),
            ));
        }
        if !rate_hz.is_finite() || rate_hz <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "sampling rate must be positive, got {rate_hz}"
            )));
        }
        if channel_names.len() != samples.ncols() {
            return Err(Error::Dimension(format!(
                "{} channel names for {} channels",
                channel_names.len(),
                samples.ncols()
            )));
        }
        if !linalg::all_finite(&samples) {
            return Err(Error::NonFinite("time series contains NaN or Inf".into()));
        }
        Ok(Self {
            samples,
            rate_hz,
            channel_names,
        })
    }

    /// Builds with `ch1..chm` names.
    pub fn with_default_names(samples: DMatrix<f64>, rate_hz: f64) -> Result<Self> {
        let names = (1..=samples.ncols()).map(|i| format!("ch{i}")).collect();
        Self::new(samples, rate_hz, names)
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    /// Number of samples (rows).
    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    /// Number of channels (columns).
    pub fn channels(&self) -> usize {
        self.samples.ncols()
    }

    /// Observation at sample `t` as a column vector.
    pub fn row_vector(&self, t: usize) -> DVector<f64> {
        self.samples.row(t).transpose()
    }
}

/// Linear dynamical system `x(t+1) = A x(t)`, `y(t) = C x(t)`.
///
/// The spectral radius of `A` is computed on construction and recorded;
/// unstable models are allowed (the flag is informational).
#[derive(Debug, Clone, PartialEq)]
pub struct LdsModel {
    a: DMatrix<f64>,
    c: DMatrix<f64>,
    spectral_radius: f64,
}

impl LdsModel {
    pub fn new(a: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Dimension(format!(
                "state matrix must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if c.ncols() != a.nrows() {
            return Err(Error::Dimension(format!(
                "observation matrix has {} columns but the state dimension is {}",
                c.ncols(),
                a.nrows()
            )));
        }
        if c.nrows() == 0 {
            return Err(Error::Dimension("observation dimension is zero".into()));
        }
        if !linalg::all_finite(&a) || !linalg::all_finite(&c) {
            return Err(Error::NonFinite("model matrices contain NaN or Inf".into()));
        }
        let spectral_radius = linalg::spectral_radius(&a);
        Ok(Self {
            a,
            c,
            spectral_radius,
        })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// State dimension n.
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    /// Observation dimension m.
    pub fn obs_dim(&self) -> usize {
        self.c.nrows()
    }

    /// Recorded spectral radius of `A`.
    pub fn spectral_radius(&self) -> f64 {
        self.spectral_radius
    }

    pub fn is_stable(&self) -> bool {
        self.spectral_radius < 1.0
    }
}

/// Latent-space disturbance direction matrix `P` (n x k).
#[derive(Debug, Clone, PartialEq)]
pub struct PatternMatrix {
    p: DMatrix<f64>,
}

impl PatternMatrix {
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        if p.ncols() == 0 || p.nrows() == 0 {
            return Err(Error::InvalidArgument(
                "pattern matrix needs at least one row and one column".into(),
            ));
        }
        if !linalg::all_finite(&p) {
            return Err(Error::NonFinite("pattern matrix contains NaN or Inf".into()));
        }
        Ok(Self { p })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// Number of disturbance directions k.
    pub fn directions(&self) -> usize {
        self.p.ncols()
    }

    pub fn state_dim(&self) -> usize {
        self.p.nrows()
    }
}

/// Driving signal for a pattern: N x k values, nonzero only inside the
/// recorded active intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceSignal {
    values: DMatrix<f64>,
    active_intervals: Vec<SampleInterval>,
}

impl DisturbanceSignal {
    /// Validates that every nonzero row falls inside a declared interval.
    pub fn new(values: DMatrix<f64>, active_intervals: Vec<SampleInterval>) -> Result<Self> {
        if !linalg::all_finite(&values) {
            return Err(Error::NonFinite("disturbance contains NaN or Inf".into()));
        }
        for t in 0..values.nrows() {
            let nonzero = values.row(t).iter().any(|&v| v != 0.0);
            if nonzero && !active_intervals.iter().any(|iv| iv.contains(t)) {
                return Err(Error::InvalidArgument(format!(
                    "disturbance is nonzero at sample {t}, outside every active interval"
                )));
            }
        }
        Ok(Self {
            values,
            active_intervals,
        })
    }

    /// Infers the active intervals as maximal runs of nonzero rows.
    pub fn from_values(values: DMatrix<f64>) -> Result<Self> {
        if !linalg::all_finite(&values) {
            return Err(Error::NonFinite("disturbance contains NaN or Inf".into()));
        }
        let mut intervals = Vec::new();
        let mut run_start = None;
        for t in 0..values.nrows() {
            let nonzero = values.row(t).iter().any(|&v| v != 0.0);
            match (nonzero, run_start) {
                (true, None) => run_start = Some(t),
                (false, Some(s)) => {
                    intervals.push(SampleInterval { start: s, end: t });
                    run_start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = run_start {
            intervals.push(SampleInterval {
                start: s,
                end: values.nrows(),
            });
        }
        Ok(Self {
            values,
            active_intervals: intervals,
        })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn active_intervals(&self) -> &[SampleInterval] {
        &self.active_intervals
    }

    pub fn directions(&self) -> usize {
        self.values.ncols()
    }
}

/// Latent and observed error trajectories from one comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTrace {
    pub latent_err: DMatrix<f64>,
    pub observed_err: DMatrix<f64>,
}

impl ErrorTrace {
    pub fn len(&self) -> usize {
        self.observed_err.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.observed_err.nrows() == 0
    }
}

/// Result of [`simulate_lds`]: observations plus the true latent path.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub series: TimeSeries,
    pub latent: DMatrix<f64>,
}

/// Simulates the LDS forward for `steps` samples.
///
/// The optional `(pattern, disturbance)` pair injects `P z(t)` into the
/// state update; measurement noise (std `noise_std`) is added to `y`
/// only. Output is deterministic for a given `seed`.
pub fn simulate_lds(
    model: &LdsModel,
    x0: &DVector<f64>,
    steps: usize,
    forcing: Option<(&PatternMatrix, &DisturbanceSignal)>,
    noise_std: f64,
    seed: u64,
) -> Result<Simulated> {
    let n = model.state_dim();
    let m = model.obs_dim();
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    if x0.len() != n {
        return Err(Error::Dimension(format!(
            "x0 has length {} but the state dimension is {n}",
            x0.len()
        )));
    }
    if !x0.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("x0 contains NaN or Inf".into()));
    }
    if noise_std.is_nan() || noise_std < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "noise_std must be nonnegative, got {noise_std}"
        )));
    }
    if let Some((pattern, dist)) = forcing {
        if pattern.state_dim() != n {
            return Err(Error::Dimension(format!(
                "pattern has {} rows but the state dimension is {n}",
                pattern.state_dim()
            )));
        }
        if dist.directions() != pattern.directions() {
            return Err(Error::Dimension(format!(
                "disturbance has {} columns but the pattern has {} directions",
                dist.directions(),
                pattern.directions()
            )));
        }
        if dist.values().nrows() < steps {
            return Err(Error::InsufficientData(format!(
                "disturbance covers {} samples but {steps} are simulated",
                dist.values().nrows()
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = if noise_std > 0.0 {
        Some(Normal::new(0.0, noise_std).map_err(|e| Error::InvalidArgument(e.to_string()))?)
    } else {
        None
    };

    let mut latent = DMatrix::zeros(steps, n);
    let mut obs = DMatrix::zeros(steps, m);
    let mut x = x0.clone();
    for t in 0..steps {
        latent.row_mut(t).copy_from(&x.transpose());
        let mut y = model.c() * &x;
        if let Some(dist) = &noise {
            for v in y.iter_mut() {
                *v += dist.sample(&mut rng);
            }
        }
        obs.row_mut(t).copy_from(&y.transpose());
        if t + 1 < steps {
            let mut next = model.a() * &x;
            if let Some((pattern, dist)) = forcing {
                let z = dist.values().row(t).transpose();
                next += pattern.matrix() * z;
            }
            x = next;
        }
    }
    if !linalg::all_finite(&latent) || !linalg::all_finite(&obs) {
        return Err(Error::NonFinite(
            "simulation diverged to NaN or Inf (unstable model?)".into(),
        ));
    }

    Ok(Simulated {
        series: TimeSeries::with_default_names(obs, DEFAULT_RATE_HZ)?,
        latent,
    })
}

/// Elementwise differences between a truth run and an estimate.
pub fn compute_errors(
    truth_latent: &DMatrix<f64>,
    truth_obs: &DMatrix<f64>,
    est_latent: &DMatrix<f64>,
    est_obs: &DMatrix<f64>,
) -> Result<ErrorTrace> {
    if truth_latent.shape() != est_latent.shape() {
        return Err(Error::Dimension(format!(
            "latent trajectories differ: {:?} vs {:?}",
            truth_latent.shape(),
            est_latent.shape()
        )));
    }
    if truth_obs.shape() != est_obs.shape() {
        return Err(Error::Dimension(format!(
            "observed trajectories differ: {:?} vs {:?}",
            truth_obs.shape(),
            est_obs.shape()
        )));
    }
    if truth_latent.nrows() != truth_obs.nrows() {
        return Err(Error::Dimension(format!(
            "latent has {} samples but observed has {}",
            truth_latent.nrows(),
            truth_obs.nrows()
        )));
    }
    Ok(ErrorTrace {
        latent_err: truth_latent - est_latent,
        observed_err: truth_obs - est_obs,
    })
}

/// Sample indices where the per-sample Euclidean error norm exceeds `delta`.
pub fn threshold_anomalies(err: &ErrorTrace, delta: f64) -> Result<Vec<usize>> {
    if delta.is_nan() || delta <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "threshold must be positive, got {delta}"
        )));
    }
    Ok((0..err.observed_err.nrows())
        .filter(|&t| err.observed_err.row(t).norm() > delta)
        .collect())
}
