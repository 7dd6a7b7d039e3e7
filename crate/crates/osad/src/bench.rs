//! Deterministic synthetic subjects for exercising the whole pipeline.
//!
//! Each subject is a stable oscillatory LDS (three damped rotation
//! modes in a random orthogonal basis, `C = I`), a random rank-2
//! pattern with its decoupling design, and a recording composed by
//! linearity:
//!
//! ```text
//! y = free response from x0            (baseline; zero by default)
//!   + response to white latent drive   (broadband structure; optional)
//!   + response to P * zeta             (pattern events, 13 Hz bursts)
//!   + response to q * theta            (other events, slow large waves)
//!   + measurement noise
//! ```
//!
//! The "other" direction `q` is built inside the row space of `W C`, so
//! `|C_f q| = 1` and non-pattern events always reach the selective
//! residual. Everything is reproducible from the config seeds.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::design::{design_for_pattern, FDesignMethod, ResidualDesign};
use crate::error::{Error, Result};
use crate::eval::{LabelClass, LabelSet};
use crate::linalg;
use crate::model::{
    simulate_lds, DisturbanceSignal, LdsModel, PatternMatrix, SampleInterval, TimeSeries,
};

/// Generator settings. `state_dim` doubles as the channel count
/// (`C = I`).
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub seed: u64,
    /// Seed for the latent basis; transfer sets share it so that an
    /// averaged model is meaningful.
    pub basis_seed: u64,
    pub state_dim: usize,
    pub rate_hz: f64,
    /// Length of the detection series.
    pub samples: usize,
    /// Length of the clean learning series.
    pub learn_samples: usize,
    /// Frequencies of the three rotation modes (Hz).
    pub mode_freqs_hz: [f64; 3],
    /// Per-mode damping (also the spectral norm of `A`).
    pub mode_damping: [f64; 3],
    pub pattern_events: usize,
    pub other_events: usize,
    /// Event length range in samples (inclusive bounds).
    pub event_len: (usize, usize),
    pub pattern_amp: f64,
    pub other_amp: f64,
    pub noise_std: f64,
    /// Amplitude of the free-response baseline (0 disables it).
    pub baseline_amp: f64,
    /// Std of a white latent drive sustained over the whole run
    /// (0 disables it). Gives the recording subject-specific broadband
    /// structure that only the matching model can whiten.
    pub drive_std: f64,
    /// First event start; keep past the detector calibration window.
    pub first_event_at: usize,
    pub min_event_gap: usize,
    /// Designs whose observer matrix exceeds this spectral radius are
    /// redrawn (deterministically).
    pub max_observer_radius: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            basis_seed: 7,
            state_dim: 6,
            rate_hz: 200.0,
            samples: 10_000,
            learn_samples: 600,
            mode_freqs_hz: [5.0, 11.0, 17.0],
            mode_damping: [0.95, 0.93, 0.90],
            pattern_events: 8,
            other_events: 5,
            event_len: (90, 150),
            pattern_amp: 1.0,
            other_amp: 1.0,
            noise_std: 0.02,
            baseline_amp: 0.0,
            drive_std: 0.0,
            first_event_at: 800,
            min_event_gap: 200,
            max_observer_radius: 0.9,
        }
    }
}

/// A fully assembled subject.
#[derive(Debug, Clone)]
pub struct SyntheticSubject {
    pub cfg: BenchConfig,
    pub model: LdsModel,
    pub pattern: PatternMatrix,
    pub design: ResidualDesign,
    /// Non-pattern disturbance direction (n x 1).
    pub orth: PatternMatrix,
    pub pattern_drive: DisturbanceSignal,
    pub other_drive: DisturbanceSignal,
    /// Detection series: baseline + events + noise.
    pub series: TimeSeries,
    /// Clean series for identification.
    pub learn_series: TimeSeries,
    pub pattern_labels: LabelSet,
    pub other_labels: LabelSet,
    /// Initial latent state of the detection series.
    pub x0: DVector<f64>,
}

impl SyntheticSubject {
    /// Noise-free response to the pattern events alone (from rest).
    pub fn pattern_only_series(&self) -> Result<TimeSeries> {
        let x0 = DVector::zeros(self.model.state_dim());
        let sim = simulate_lds(
            &self.model,
            &x0,
            self.cfg.samples,
            Some((&self.pattern, &self.pattern_drive)),
            0.0,
            self.cfg.seed,
        )?;
        Ok(sim.series)
    }

    /// Noise-free response to the non-pattern events alone (from rest).
    pub fn orthogonal_only_series(&self) -> Result<TimeSeries> {
        let x0 = DVector::zeros(self.model.state_dim());
        let sim = simulate_lds(
            &self.model,
            &x0,
            self.cfg.samples,
            Some((&self.orth, &self.other_drive)),
            0.0,
            self.cfg.seed,
        )?;
        Ok(sim.series)
    }

    /// Pattern and other labels merged into one set.
    pub fn all_labels(&self) -> Result<LabelSet> {
        let mut all: Vec<SampleInterval> = self
            .pattern_labels
            .intervals()
            .iter()
            .chain(self.other_labels.intervals())
            .copied()
            .collect();
        all.sort();
        LabelSet::new(all, LabelClass::Other)
    }
}

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| {
        let normal = Normal::new(0.0, 1.0).unwrap();
        normal.sample(rng)
    });
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for i in 0..n {
        if r[(i, i)] < 0.0 {
            q.column_mut(i).neg_mut();
        }
    }
    q
}

fn rotation_block(freq_hz: f64, damping: f64, rate_hz: f64) -> DMatrix<f64> {
    let theta = 2.0 * std::f64::consts::PI * freq_hz / rate_hz;
    DMatrix::from_row_slice(
        2,
        2,
        &[
            damping * theta.cos(),
            -damping * theta.sin(),
            damping * theta.sin(),
            damping * theta.cos(),
        ],
    )
}

fn build_state_matrix(cfg: &BenchConfig) -> Result<DMatrix<f64>> {
    let n = cfg.state_dim;
    if n != 6 {
        return Err(Error::InvalidArgument(format!(
            "bench generator supports state_dim 6 (three rotation modes), got {n}"
        )));
    }
    let mut basis_rng = ChaCha8Rng::seed_from_u64(cfg.basis_seed);
    let q = random_orthogonal(n, &mut basis_rng);
    let mut block = DMatrix::zeros(n, n);
    for (k, (&freq, &damp)) in cfg
        .mode_freqs_hz
        .iter()
        .zip(cfg.mode_damping.iter())
        .enumerate()
    {
        if damp.is_nan() || damp <= 0.0 || damp >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "mode damping must be in (0, 1), got {damp}"
            )));
        }
        block
            .view_mut((2 * k, 2 * k), (2, 2))
            .copy_from(&rotation_block(freq, damp, cfg.rate_hz));
    }
    Ok(&q * block * q.transpose())
}

struct EventSchedule {
    pattern: Vec<SampleInterval>,
    other: Vec<SampleInterval>,
}

fn schedule_events(cfg: &BenchConfig, rng: &mut ChaCha8Rng) -> Result<EventSchedule> {
    let total = cfg.pattern_events + cfg.other_events;
    if total == 0 {
        return Ok(EventSchedule {
            pattern: Vec::new(),
            other: Vec::new(),
        });
    }
    let span_end = cfg
        .samples
        .saturating_sub(cfg.event_len.1 + cfg.min_event_gap);
    if span_end <= cfg.first_event_at {
        return Err(Error::InvalidArgument(
            "series too short for the configured events".into(),
        ));
    }
    let stride = (span_end - cfg.first_event_at) / total;
    if stride < cfg.event_len.1 + cfg.min_event_gap {
        return Err(Error::InvalidArgument(format!(
            "too many events: stride {stride} < event_len + gap = {}",
            cfg.event_len.1 + cfg.min_event_gap
        )));
    }
    let jitter = (stride - cfg.event_len.1 - cfg.min_event_gap).min(stride / 4);
    let mut slots = Vec::with_capacity(total);
    for i in 0..total {
        let base = cfg.first_event_at + i * stride;
        let start = base + if jitter > 0 { rng.gen_range(0..=jitter) } else { 0 };
        let len = rng.gen_range(cfg.event_len.0..=cfg.event_len.1);
        slots.push(SampleInterval {
            start,
            end: start + len,
        });
    }
    // deterministic shuffle to interleave the two classes
    let mut order: Vec<usize> = (0..total).collect();
    for i in (1..total).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let mut pattern: Vec<SampleInterval> = order[..cfg.pattern_events]
        .iter()
        .map(|&i| slots[i])
        .collect();
    let mut other: Vec<SampleInterval> = order[cfg.pattern_events..]
        .iter()
        .map(|&i| slots[i])
        .collect();
    pattern.sort();
    other.sort();
    Ok(EventSchedule { pattern, other })
}

/// Ramped bursts: `amp * env(tau) * sin(2 pi f tau / rate + phase)`.
fn fill_bursts(
    values: &mut DMatrix<f64>,
    events: &[SampleInterval],
    freq_hz: f64,
    rate_hz: f64,
    amp: f64,
    ramp: f64,
    rng: &mut ChaCha8Rng,
) {
    let dims = values.ncols();
    for event in events {
        let phases: Vec<f64> = (0..dims)
            .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
            .collect();
        let gains: Vec<f64> = (0..dims)
            .map(|d| if d == 0 { 1.0 } else { rng.gen_range(0.4..0.8) })
            .collect();
        let len = event.len() as f64;
        for t in event.start..event.end.min(values.nrows()) {
            let tau = (t - event.start) as f64;
            let env = ((tau + 1.0) / ramp)
                .min((len - tau) / ramp)
                .clamp(0.0, 1.0);
            for d in 0..dims {
                let arg = std::f64::consts::TAU * freq_hz * tau / rate_hz + phases[d];
                values[(t, d)] = amp * gains[d] * env * arg.sin();
            }
        }
    }
}

/// Builds one subject from the config; fully deterministic.
pub fn make_subject(cfg: &BenchConfig) -> Result<SyntheticSubject> {
    let n = cfg.state_dim;
    let a = build_state_matrix(cfg)?;
    let c = DMatrix::identity(n, n);
    let model = LdsModel::new(a, c)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Pattern directions: rank-2, unit spectral norm; redraw until the
    // left-design observer is comfortably stable.
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut chosen: Option<(PatternMatrix, ResidualDesign)> = None;
    for _attempt in 0..32 {
        let mut p = DMatrix::from_fn(n, 2, |_, _| normal.sample(&mut rng));
        let norm = p.clone().svd(false, false).singular_values.max();
        p /= norm;
        let pattern = PatternMatrix::new(p)?;
        let design = design_for_pattern(&model, &pattern, None, FDesignMethod::Left)?;
        if linalg::spectral_radius(design.a_f()) <= cfg.max_observer_radius {
            chosen = Some((pattern, design));
            break;
        }
    }
    let (pattern, design) = chosen.ok_or_else(|| {
        Error::Infeasible("no stable observer design found in 32 pattern draws".into())
    })?;

    // Non-pattern direction inside rowspace(W C): |C_f q| = 1 exactly.
    let p_dim = design.residual_dim();
    let mut g = DVector::from_fn(p_dim, |_, _| normal.sample(&mut rng));
    g /= g.norm();
    let q_dir = design.c_f().transpose() * &g;
    let q_dir = &q_dir / q_dir.norm();
    let orth = PatternMatrix::new(DMatrix::from_column_slice(n, 1, q_dir.as_slice()))?;

    let schedule = schedule_events(cfg, &mut rng)?;

    let mut zeta = DMatrix::zeros(cfg.samples, 2);
    fill_bursts(
        &mut zeta,
        &schedule.pattern,
        13.0,
        cfg.rate_hz,
        cfg.pattern_amp,
        8.0,
        &mut rng,
    );
    let pattern_drive = DisturbanceSignal::from_values(zeta)?;

    let mut theta = DMatrix::zeros(cfg.samples, 1);
    fill_bursts(
        &mut theta,
        &schedule.other,
        3.0,
        cfg.rate_hz,
        cfg.other_amp,
        1.5,
        &mut rng,
    );
    let other_drive = DisturbanceSignal::from_values(theta)?;

    // detection series by superposition of noise-free components
    let x0 = if cfg.baseline_amp > 0.0 {
        let mut v = DVector::from_fn(n, |_, _| normal.sample(&mut rng));
        v *= cfg.baseline_amp / v.norm();
        v
    } else {
        DVector::zeros(n)
    };
    let zero_x0 = DVector::zeros(n);
    let base = simulate_lds(&model, &x0, cfg.samples, None, 0.0, cfg.seed)?;
    let drive = if cfg.drive_std > 0.0 {
        let normal = Normal::new(0.0, cfg.drive_std)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let w = DMatrix::from_fn(cfg.samples, n, |_, _| normal.sample(&mut rng));
        let p_drive = PatternMatrix::new(DMatrix::identity(n, n))?;
        let signal = DisturbanceSignal::from_values(w)?;
        Some(simulate_lds(
            &model,
            &zero_x0,
            cfg.samples,
            Some((&p_drive, &signal)),
            0.0,
            cfg.seed,
        )?)
    } else {
        None
    };
    let pat = simulate_lds(
        &model,
        &zero_x0,
        cfg.samples,
        Some((&pattern, &pattern_drive)),
        0.0,
        cfg.seed,
    )?;
    let oth = simulate_lds(
        &model,
        &zero_x0,
        cfg.samples,
        Some((&orth, &other_drive)),
        0.0,
        cfg.seed,
    )?;
    let mut y = base.series.samples() + pat.series.samples() + oth.series.samples();
    if let Some(d) = &drive {
        y += d.series.samples();
    }
    if cfg.noise_std > 0.0 {
        let noise = Normal::new(0.0, cfg.noise_std)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for v in y.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    let series = TimeSeries::with_default_names(y, cfg.rate_hz)?;

    // clean learning series: free response from a random generic state
    let mut x0_learn = DVector::from_fn(n, |_, _| normal.sample(&mut rng));
    x0_learn /= x0_learn.norm();
    let learn = simulate_lds(&model, &x0_learn, cfg.learn_samples, None, 0.0, cfg.seed)?;

    Ok(SyntheticSubject {
        cfg: cfg.clone(),
        model,
        pattern,
        design,
        orth,
        pattern_drive,
        other_drive,
        series,
        learn_series: learn.series,
        pattern_labels: LabelSet::new(schedule.pattern, LabelClass::Pattern)?,
        other_labels: LabelSet::new(schedule.other, LabelClass::Other)?,
        x0,
    })
}

/// Settings for subject `index` of a heterogeneous transfer study:
/// shared latent basis, one common slow mode, subject-specific fast
/// modes spread far apart, and a broadband drive that only the matching
/// model can whiten.
pub fn transfer_preset(base_seed: u64, index: usize) -> BenchConfig {
    let s = index as f64;
    BenchConfig {
        seed: base_seed.wrapping_add(1000 * (index as u64 + 1)),
        basis_seed: base_seed,
        mode_freqs_hz: [4.0, 25.0 + 15.0 * s, 45.0 + 15.0 * s],
        mode_damping: [0.99, 0.995, 0.995],
        drive_std: 0.2,
        max_observer_radius: 0.97,
        ..BenchConfig::default()
    }
}

/// Builds the transfer subjects from [`transfer_preset`] settings.
pub fn transfer_set(base_seed: u64, subjects: usize) -> Result<Vec<SyntheticSubject>> {
    if subjects < 2 {
        return Err(Error::InvalidArgument(
            "transfer set needs at least two subjects".into(),
        ));
    }
    (0..subjects)
        .map(|s| make_subject(&transfer_preset(base_seed, s)))
        .collect()
}
