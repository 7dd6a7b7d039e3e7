//! Online selective anomaly detection (OSAD) for multichannel time series.
//!
//! The toolkit covers the full loop:
//!
//! 1. model a recording as a discrete linear dynamical system
//!    `x(t+1) = A x(t)`, `y(t) = C x(t)` and identify `A`, `C` from data
//!    ([`sysid`]);
//! 2. given a pattern matrix `P` describing a known latent disturbance,
//!    design a residual generator `(W, F)` whose output is structurally
//!    insensitive to that pattern while it still reflects every other
//!    deviation ([`design`]);
//! 3. stream the observed error `e(t)` and the designed residual `r(t)`
//!    through CUSUM charts to produce two alert streams: all anomalies
//!    and the selective, pattern-suppressed stream ([`detect`]);
//! 4. score alert intervals against labels with interval-aware
//!    precision/recall and delay statistics ([`eval`]).
//!
//! The crate is a library first. Each major capability has a runnable
//! example:
//!
//! ```text
//! cargo run -p osad --example simulate_lds     # forward simulation + disturbances
//! cargo run -p osad --example identify_model   # subspace/spectral identification
//! cargo run -p osad --example design_residual  # decoupling design on 2x2 matrices
//! cargo run -p osad --example online_two_tap   # observer vs two-tap filter
//! cargo run -p osad --example cusum_alerts     # CUSUM calibration and alerting
//! cargo run -p osad --example interval_metrics # interval precision/recall, delays
//! cargo run -p osad --example full_pipeline    # synth -> ... -> run -> eval -> report
//! cargo run -p osad --example cross_subject_transfer
//! ```
//!
//! A thin `osad` binary wraps the same library calls behind file-based
//! subcommands (`synth`, `learn`, `design`, `run`, `eval`, `report`,
//! `config show`); see the README.

pub mod bench;
pub mod config;
pub mod design;
pub mod detect;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod sysid;

mod linalg;

pub use error::{Error, Result};
pub use model::{
    compute_errors, simulate_lds, threshold_anomalies, DisturbanceSignal, ErrorTrace, LdsModel,
    PatternMatrix, SampleInterval, TimeSeries,
};
