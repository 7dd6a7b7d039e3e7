//! Identification of `A` and `C` from observations.
//!
//! Both methods run the same pipeline on the block-Hankel matrix of
//! outputs
//!
//! ```text
//! H[(i, j)] = y(j + i),   i = 0..q-1 (block rows), j = 0..N-q
//! ```
//!
//! whose rank-n truncated SVD yields an extended observability factor
//! `O = U_n * diag(sqrt(s_1..s_n))`. `C` is the top block of `O` and `A`
//! solves the shift-invariance least squares `O_up * A = O_down`. The
//! spectral variant whitens Hankel rows and columns before the SVD and
//! unwhitens the left factor afterwards, so the two code paths share only
//! the factorization.
//!
//! Directions whose singular value falls below the crate cutoff are
//! carried as exact zero columns of `O`; they are counted in the
//! [`IdentifyReport`] rather than silently shrinking the model.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, SV_REL_CUTOFF};
use crate::model::{LdsModel, TimeSeries};

/// Which weighting the Hankel factorization uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdMethod {
    Subspace,
    Spectral,
}

impl std::fmt::Display for IdMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IdMethod::Subspace => write!(f, "subspace"),
            IdMethod::Spectral => write!(f, "spectral"),
        }
    }
}

impl std::str::FromStr for IdMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "subspace" => Ok(IdMethod::Subspace),
            "spectral" => Ok(IdMethod::Spectral),
            other => Err(Error::InvalidArgument(format!(
                "unknown identification method '{other}' (expected subspace|spectral)"
            ))),
        }
    }
}

/// Settings for [`identify`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentificationConfig {
    /// Target state dimension n.
    pub rank: usize,
    /// Block-row count q of the stacked observation matrix.
    pub hankel_rows: usize,
    pub method: IdMethod,
}

impl Default for IdentificationConfig {
    fn default() -> Self {
        Self {
            rank: 6,
            hankel_rows: 10,
            method: IdMethod::Subspace,
        }
    }
}

impl IdentificationConfig {
    fn validate(&self, channels: usize) -> Result<()> {
        if self.hankel_rows < 2 {
            return Err(Error::InvalidArgument(format!(
                "hankel_rows must be at least 2, got {}",
                self.hankel_rows
            )));
        }
        if self.rank == 0 || self.rank > channels * self.hankel_rows {
            return Err(Error::InvalidArgument(format!(
                "rank {} outside 1..={} (channels * hankel_rows)",
                self.rank,
                channels * self.hankel_rows
            )));
        }
        Ok(())
    }
}

/// What the factorization actually supported, alongside the model.
#[derive(Debug, Clone)]
pub struct IdentifyReport {
    pub requested_rank: usize,
    /// Numerical rank of the Hankel matrix at the crate cutoff.
    pub numerical_rank: usize,
    /// Requested directions carried as exact zeros (rank deficiency).
    pub zeroed_directions: usize,
    /// Leading `requested_rank` singular values of the (possibly
    /// whitened) Hankel matrix.
    pub leading_singular_values: Vec<f64>,
}

impl IdentifyReport {
    pub fn is_rank_deficient(&self) -> bool {
        self.zeroed_directions > 0
    }
}

/// Infers an [`LdsModel`] of state dimension `cfg.rank`.
pub fn identify(obs: &TimeSeries, cfg: &IdentificationConfig) -> Result<LdsModel> {
    identify_with_report(obs, cfg).map(|(model, _)| model)
}

/// [`identify`], plus a report of the achieved numerical rank.
pub fn identify_with_report(
    obs: &TimeSeries,
    cfg: &IdentificationConfig,
) -> Result<(LdsModel, IdentifyReport)> {
    let m = obs.channels();
    cfg.validate(m)?;
    let n_samples = obs.len();
    let q = cfg.hankel_rows;
    if n_samples < 2 * q + cfg.rank {
        return Err(Error::InsufficientData(format!(
            "{n_samples} samples; need at least 2*hankel_rows + rank = {}",
            2 * q + cfg.rank
        )));
    }

    let y = obs.samples();
    let cols = n_samples - q + 1;
    let mut hankel = DMatrix::zeros(q * m, cols);
    for i in 0..q {
        for j in 0..cols {
            for ch in 0..m {
                hankel[(i * m + ch, j)] = y[(j + i, ch)];
            }
        }
    }

    // Spectral method: scale rows and columns to comparable energy
    // before truncation, undo the row scaling on the left factor after.
    let mut row_scale = vec![1.0_f64; q * m];
    if cfg.method == IdMethod::Spectral {
        for (i, s) in row_scale.iter_mut().enumerate() {
            let norm = hankel.row(i).norm();
            if norm > 0.0 {
                *s = norm.sqrt();
            }
        }
        let mut col_scale = vec![1.0_f64; cols];
        for (j, s) in col_scale.iter_mut().enumerate() {
            let norm = hankel.column(j).norm();
            if norm > 0.0 {
                *s = norm.sqrt();
            }
        }
        for i in 0..q * m {
            for j in 0..cols {
                hankel[(i, j)] /= row_scale[i] * col_scale[j];
            }
        }
    }

    let svd = hankel.svd(true, false);
    let mut u = svd.u.expect("svd requested with u");
    linalg::fix_column_signs(&mut u);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let cutoff = if smax > 0.0 { SV_REL_CUTOFF * smax } else { 0.0 };
    let numerical_rank = sv.iter().filter(|&&s| s > cutoff && s > 0.0).count();

    let n = cfg.rank;
    let mut observability = DMatrix::zeros(q * m, n);
    let mut zeroed = 0usize;
    for k in 0..n {
        let s = if k < sv.len() { sv[k] } else { 0.0 };
        if s > cutoff && s > 0.0 {
            let col = u.column(k) * s.sqrt();
            observability.set_column(k, &col);
        } else {
            zeroed += 1; // degenerate direction stays an exact zero column
        }
    }
    if cfg.method == IdMethod::Spectral {
        for i in 0..q * m {
            for k in 0..n {
                observability[(i, k)] *= row_scale[i];
            }
        }
    }

    let c = observability.rows(0, m).into_owned();
    let o_up = observability.rows(0, (q - 1) * m).into_owned();
    let o_down = observability.rows(m, (q - 1) * m).into_owned();
    let a = linalg::pinv(&o_up)? * o_down;

    let report = IdentifyReport {
        requested_rank: n,
        numerical_rank,
        zeroed_directions: zeroed,
        leading_singular_values: (0..n.min(sv.len())).map(|i| sv[i]).collect(),
    };
    Ok((LdsModel::new(a, c)?, report))
}

/// Root-mean-square one-step prediction error.
///
/// The latent state is reconstructed as `x(t) = C^+ y(t)` and the
/// prediction is `y_hat(t+1) = C A x(t)`; the result is
/// `sqrt(mean_t ||y(t+1) - y_hat(t+1)||^2)`.
pub fn one_step_rmse(model: &LdsModel, obs: &TimeSeries) -> Result<f64> {
    if model.obs_dim() != obs.channels() {
        return Err(Error::Dimension(format!(
            "model expects {} channels, series has {}",
            model.obs_dim(),
            obs.channels()
        )));
    }
    if obs.len() < 2 {
        return Err(Error::InsufficientData(
            "one-step RMSE needs at least two samples".into(),
        ));
    }
    let predictor = model.c() * model.a() * linalg::pinv(model.c())?;
    let y = obs.samples();
    let steps = obs.len() - 1;
    let mut sum_sq = 0.0;
    for t in 0..steps {
        let pred = &predictor * y.row(t).transpose();
        let diff = y.row(t + 1).transpose() - pred;
        sum_sq += diff.norm_squared();
    }
    Ok((sum_sq / steps as f64).sqrt())
}

/// One identify + RMSE per rank, `1..=max_rank`.
pub fn rank_sweep(
    obs: &TimeSeries,
    max_rank: usize,
    cfg: &IdentificationConfig,
) -> Result<Vec<(usize, f64)>> {
    if max_rank == 0 || max_rank > obs.channels() * cfg.hankel_rows {
        return Err(Error::InvalidArgument(format!(
            "max_rank {} outside 1..={}",
            max_rank,
            obs.channels() * cfg.hankel_rows
        )));
    }
    let mut out = Vec::with_capacity(max_rank);
    for rank in 1..=max_rank {
        let cfg_r = IdentificationConfig { rank, ..*cfg };
        let model = identify(obs, &cfg_r)?;
        out.push((rank, one_step_rmse(&model, obs)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector, DVector};

    use crate::model::simulate_lds;

    fn constant_series(len: usize) -> TimeSeries {
        TimeSeries::with_default_names(DMatrix::from_element(len, 1, 1.0), 200.0).unwrap()
    }

    fn two_mode_series() -> TimeSeries {
        let model = LdsModel::new(dmatrix![0.9, 0.0; 0.0, 0.5], DMatrix::identity(2, 2)).unwrap();
        simulate_lds(&model, &dvector![1.0, 1.0], 120, None, 0.0, 0)
            .unwrap()
            .series
    }

    fn sorted_eigs(model: &LdsModel) -> Vec<(f64, f64)> {
        let mut eigs: Vec<(f64, f64)> = model
            .a()
            .clone()
            .complex_eigenvalues()
            .iter()
            .map(|l| (l.re, l.im))
            .collect();
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        eigs
    }

    #[test]
    fn constant_series_identifies_perfectly_at_rank_one() {
        let obs = constant_series(60);
        let cfg = IdentificationConfig {
            rank: 1,
            hankel_rows: 5,
            method: IdMethod::Subspace,
        };
        let model = identify(&obs, &cfg).unwrap();
        assert!(one_step_rmse(&model, &obs).unwrap() <= 1e-10);
    }

    #[test]
    fn eigenvalues_recovered_up_to_similarity() {
        let obs = two_mode_series();
        for method in [IdMethod::Subspace, IdMethod::Spectral] {
            let cfg = IdentificationConfig {
                rank: 2,
                hankel_rows: 6,
                method,
            };
            let model = identify(&obs, &cfg).unwrap();
            let eigs = sorted_eigs(&model);
            assert_abs_diff_eq!(eigs[0].0, 0.5, epsilon = 1e-6);
            assert_abs_diff_eq!(eigs[0].1, 0.0, epsilon = 1e-6);
            assert_abs_diff_eq!(eigs[1].0, 0.9, epsilon = 1e-6);
            assert_abs_diff_eq!(eigs[1].1, 0.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn underranked_model_fits_worse() {
        let obs = two_mode_series();
        let cfg = IdentificationConfig {
            rank: 2,
            hankel_rows: 6,
            method: IdMethod::Subspace,
        };
        let rmse2 = one_step_rmse(&identify(&obs, &cfg).unwrap(), &obs).unwrap();
        let cfg1 = IdentificationConfig { rank: 1, ..cfg };
        let rmse1 = one_step_rmse(&identify(&obs, &cfg1).unwrap(), &obs).unwrap();
        assert!(rmse1 > rmse2);
        assert!(rmse1 > 1e-4, "rank-1 fit unexpectedly good: {rmse1}");
        assert!(rmse2 <= 1e-8, "rank-2 fit unexpectedly bad: {rmse2}");
    }

    #[test]
    fn sweep_past_true_rank_plateaus() {
        let obs = two_mode_series();
        let cfg = IdentificationConfig {
            rank: 2,
            hankel_rows: 6,
            method: IdMethod::Subspace,
        };
        let sweep = rank_sweep(&obs, 4, &cfg).unwrap();
        assert_eq!(sweep.len(), 4);
        let rmse: Vec<f64> = sweep.iter().map(|&(_, e)| e).collect();
        assert!(rmse[0] > rmse[1]);
        assert!((rmse[1] - rmse[2]).abs() <= 1e-8);
        assert!((rmse[1] - rmse[3]).abs() <= 1e-8);
    }

    #[test]
    fn overranked_identify_reports_deficiency() {
        let obs = constant_series(60);
        let cfg = IdentificationConfig {
            rank: 2,
            hankel_rows: 5,
            method: IdMethod::Subspace,
        };
        let (model, report) = identify_with_report(&obs, &cfg).unwrap();
        assert!(report.is_rank_deficient());
        assert_eq!(report.numerical_rank, 1);
        assert!(one_step_rmse(&model, &obs).unwrap() <= 1e-10);
    }

    #[test]
    fn constant_series_sweep_is_flat() {
        let obs = constant_series(60);
        let cfg = IdentificationConfig {
            rank: 1,
            hankel_rows: 5,
            method: IdMethod::Subspace,
        };
        let sweep = rank_sweep(&obs, 2, &cfg).unwrap();
        assert!(sweep[0].1 <= 1e-10);
        assert!(sweep[1].1 <= 1e-10);
    }

    #[test]
    fn zero_model_on_ones_has_unit_rmse() {
        let model = LdsModel::new(DMatrix::zeros(1, 1), DMatrix::identity(1, 1)).unwrap();
        let obs = constant_series(10);
        assert_abs_diff_eq!(one_step_rmse(&model, &obs).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn perfect_model_scores_zero() {
        let model = LdsModel::new(dmatrix![0.8, 0.1; -0.2, 0.6], DMatrix::identity(2, 2)).unwrap();
        let sim = simulate_lds(&model, &dvector![1.0, -0.5], 80, None, 0.0, 3).unwrap();
        assert!(one_step_rmse(&model, &sim.series).unwrap() <= 1e-10);
    }

    #[test]
    fn identified_model_round_trips() {
        let obs = two_mode_series();
        let cfg = IdentificationConfig {
            rank: 2,
            hankel_rows: 6,
            method: IdMethod::Spectral,
        };
        let model = identify(&obs, &cfg).unwrap();
        let x0 = DVector::from_element(2, 1.0);
        let resim = simulate_lds(&model, &x0, 100, None, 0.0, 0).unwrap();
        assert!(one_step_rmse(&model, &resim.series).unwrap() <= 1e-8);
    }

    #[test]
    fn bench_learn_series_sweep_is_monotone() {
        let subject = crate::bench::make_subject(&crate::bench::BenchConfig::default()).unwrap();
        let cfg = IdentificationConfig::default();
        let sweep = rank_sweep(&subject.learn_series, 6, &cfg).unwrap();
        for pair in sweep.windows(2) {
            assert!(
                pair[1].1 <= pair[0].1 + 1e-8,
                "rmse rose along the sweep: {sweep:?}"
            );
        }
        assert!(sweep[5].1 <= 1e-8, "full-rank fit should be near exact");
    }

    #[test]
    fn identify_is_deterministic() {
        let obs = two_mode_series();
        let cfg = IdentificationConfig {
            rank: 2,
            hankel_rows: 6,
            method: IdMethod::Subspace,
        };
        let m1 = identify(&obs, &cfg).unwrap();
        let m2 = identify(&obs, &cfg).unwrap();
        assert_eq!(m1.a(), m2.a());
        assert_eq!(m1.c(), m2.c());
    }

    #[test]
    fn insufficient_data_is_an_error() {
        let obs = constant_series(12);
        let cfg = IdentificationConfig {
            rank: 2,
            hankel_rows: 6,
            method: IdMethod::Subspace,
        };
        assert!(matches!(
            identify(&obs, &cfg),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn structural_rank_limit_is_enforced() {
        let obs = constant_series(100);
        let cfg = IdentificationConfig {
            rank: 11,
            hankel_rows: 10,
            method: IdMethod::Subspace,
        };
        // one channel: rank must stay within m * hankel_rows = 10
        assert!(matches!(
            identify(&obs, &cfg),
            Err(Error::InvalidArgument(_))
        ));
    }
}
