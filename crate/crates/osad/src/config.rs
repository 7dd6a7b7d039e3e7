//! Run configuration: one TOML file, CLI overrides, printable defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::BenchConfig;
use crate::design::FDesignMethod;
use crate::detect::{CusumConfig, DetectionConfig};
use crate::error::{Error, Result};
use crate::sysid::{IdMethod, IdentificationConfig};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; recorded in every artifact this run writes.
    pub seed: u64,
    pub rate_hz: f64,
    /// Directory all commands read and write.
    pub data_dir: PathBuf,
    pub synth: SynthSection,
    pub identification: IdentificationSection,
    pub pattern: PatternSection,
    pub design: DesignSection,
    pub cusum: CusumSection,
    pub intervals: IntervalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            rate_hz: 200.0,
            data_dir: PathBuf::from("bench"),
            synth: SynthSection::default(),
            identification: IdentificationSection::default(),
            pattern: PatternSection::default(),
            design: DesignSection::default(),
            cusum: CusumSection::default(),
            intervals: IntervalSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    /// One subject is a plain bench; two or more build the
    /// heterogeneous transfer set.
    pub subjects: usize,
    pub samples: usize,
    pub pattern_events: usize,
    pub other_events: usize,
    pub pattern_amp: f64,
    pub other_amp: f64,
    pub noise_std: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let b = BenchConfig::default();
        Self {
            subjects: 1,
            samples: b.samples,
            pattern_events: b.pattern_events,
            other_events: b.other_events,
            pattern_amp: b.pattern_amp,
            other_amp: b.other_amp,
            noise_std: b.noise_std,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct IdentificationSection {
    pub rank: usize,
    pub hankel_rows: usize,
    /// "subspace" or "spectral".
    pub method: String,
}

impl Default for IdentificationSection {
    fn default() -> Self {
        Self {
            rank: 6,
            hankel_rows: 10,
            method: "subspace".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PatternSection {
    /// "file" (pattern.osad next to the model) or "period".
    pub source: String,
    /// Period in samples, used when `source = "period"`.
    pub period_samples: f64,
}

impl Default for PatternSection {
    fn default() -> Self {
        Self {
            source: "file".into(),
            period_samples: 15.4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSection {
    /// Residual dimension p; 0 means the full null-space dimension.
    pub residual_dim: usize,
    /// "right-then-left", "right" or "left".
    pub f_method: String,
    /// Design against the generating model ("truth") or the learned
    /// one ("learned"). Patterns are expressed in the model's latent
    /// basis, so "learned" pairs with `pattern.source = "period"`.
    pub use_model: String,
}

impl Default for DesignSection {
    fn default() -> Self {
        Self {
            residual_dim: 0,
            f_method: "left".into(),
            use_model: "truth".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CusumSection {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub calibration_len: usize,
}

impl Default for CusumSection {
    fn default() -> Self {
        let c = CusumConfig::default();
        Self {
            alpha: c.alpha,
            beta: c.beta,
            delta: c.delta,
            calibration_len: c.calibration_len,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct IntervalSection {
    pub gap_seconds: f64,
    pub min_len_seconds: f64,
}

impl Default for IntervalSection {
    fn default() -> Self {
        Self {
            gap_seconds: 0.1,
            min_len_seconds: 0.25,
        }
    }
}

impl RunConfig {
    /// Reads a TOML config; `None` yields the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let content = std::fs::read_to_string(p).map_err(|e| {
                    if e.kind() == std::io::ErrorKind::NotFound {
                        Error::MissingArtifact(p.display().to_string())
                    } else {
                        Error::io(p.display().to_string(), e)
                    }
                })?;
                let cfg: RunConfig = toml::from_str(&content).map_err(|e| {
                    let line = e
                        .span()
                        .map(|s| content[..s.start].lines().count())
                        .unwrap_or(0);
                    Error::Parse {
                        path: p.display().to_string(),
                        line,
                        message: e.message().to_string(),
                    }
                })?;
                cfg.validate()?;
                Ok(cfg)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rate_hz.is_nan() || self.rate_hz <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "rate_hz must be positive, got {}",
                self.rate_hz
            )));
        }
        if self.synth.subjects == 0 {
            return Err(Error::InvalidArgument("synth.subjects must be >= 1".into()));
        }
        let _ = self.id_method()?;
        let _ = self.f_method()?;
        if !matches!(self.pattern.source.as_str(), "file" | "period") {
            return Err(Error::InvalidArgument(format!(
                "pattern.source must be 'file' or 'period', got '{}'",
                self.pattern.source
            )));
        }
        if !matches!(self.design.use_model.as_str(), "truth" | "learned") {
            return Err(Error::InvalidArgument(format!(
                "design.use_model must be 'truth' or 'learned', got '{}'",
                self.design.use_model
            )));
        }
        self.detection_config().cusum.validate()?;
        Ok(())
    }

    pub fn id_method(&self) -> Result<IdMethod> {
        self.identification.method.parse()
    }

    pub fn f_method(&self) -> Result<FDesignMethod> {
        self.design.f_method.parse()
    }

    pub fn identification_config(&self) -> IdentificationConfig {
        IdentificationConfig {
            rank: self.identification.rank,
            hankel_rows: self.identification.hankel_rows,
            method: self.id_method().unwrap_or(IdMethod::Subspace),
        }
    }

    pub fn detection_config(&self) -> DetectionConfig {
        DetectionConfig {
            cusum: CusumConfig {
                alpha: self.cusum.alpha,
                beta: self.cusum.beta,
                delta: self.cusum.delta,
                calibration_len: self.cusum.calibration_len,
            },
            gap: (self.intervals.gap_seconds * self.rate_hz).round() as usize,
            min_len: (self.intervals.min_len_seconds * self.rate_hz).round() as usize,
        }
    }

    /// Bench settings for subject `index` out of `self.synth.subjects`.
    pub fn bench_config(&self, index: usize) -> BenchConfig {
        let base = if self.synth.subjects > 1 {
            crate::bench::transfer_preset(self.seed, index)
        } else {
            BenchConfig {
                seed: self.seed,
                basis_seed: self.seed,
                ..BenchConfig::default()
            }
        };
        BenchConfig {
            rate_hz: self.rate_hz,
            samples: self.synth.samples,
            pattern_events: self.synth.pattern_events,
            other_events: self.synth.other_events,
            pattern_amp: self.synth.pattern_amp,
            other_amp: self.synth.other_amp,
            noise_std: self.synth.noise_std,
            ..base
        }
    }

    /// Residual dimension request (`None` = full null space).
    pub fn residual_dim(&self) -> Option<usize> {
        if self.design.residual_dim == 0 {
            None
        } else {
            Some(self.design.residual_dim)
        }
    }

    /// Effective config as TOML (the `config show` payload).
    pub fn show(&self) -> String {
        toml::to_string_pretty(self).unwrap_or_else(|e| format!("serialization error: {e}"))
    }

    pub fn subject_dir(&self, index: usize) -> PathBuf {
        self.data_dir.join(format!("s{index}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn defaults_are_valid_and_printable() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let shown = cfg.show();
        assert!(shown.contains("seed = 7"));
        assert!(shown.contains("[cusum]"));
        // the printout parses back to the same config
        let back: RunConfig = toml::from_str(&shown).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_overrides_defaults() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, "seed = 99\n[cusum]\ndelta = 2.0\n").unwrap();
        let cfg = RunConfig::load(Some(&path)).unwrap();
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.cusum.delta, 2.0);
        assert_eq!(cfg.cusum.alpha, 1e-4); // untouched default
    }

    #[test]
    fn unknown_keys_are_parse_errors() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, "sead = 99\n").unwrap();
        assert!(matches!(
            RunConfig::load(Some(&path)),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn bad_values_are_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, "[cusum]\nalpha = 2.0\n").unwrap();
        assert!(RunConfig::load(Some(&path)).is_err());
    }

    #[test]
    fn multi_subject_config_matches_transfer_preset() {
        let mut cfg = RunConfig {
            seed: 40,
            ..RunConfig::default()
        };
        cfg.synth.subjects = 3;
        for s in 0..3 {
            assert_eq!(cfg.bench_config(s), crate::bench::transfer_preset(40, s));
        }
    }

    #[test]
    fn interval_settings_scale_with_rate() {
        let cfg = RunConfig::default();
        let det = cfg.detection_config();
        assert_eq!(det.gap, 20); // 0.1 s at 200 Hz
        assert_eq!(det.min_len, 50); // 0.25 s at 200 Hz
    }
}
