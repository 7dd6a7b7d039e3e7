//! Decoupling design: the residual pair `(W, F)` and its runtime forms.
//!
//! Starting from the error dynamics
//!
//! ```text
//! eps(t+1) = A_f eps(t) + P xi(t),    A_f = A - F C
//! r(t)     = C_f eps(t),              C_f = W C
//! ```
//!
//! the transfer gain from `xi` to `r` is `C_f (zI - A_f)^-1 P`, and it
//! vanishes identically when
//!
//! ```text
//! C_f P = 0   and   (C_f A_f = 0  or  A_f P = 0)
//! ```
//!
//! `design_w` picks `W` in the left null space of `C P`, which gives the
//! first condition. The second is an eigenpair assignment on `A_f` with
//! eigenvalue zero and comes in two flavours: `design_f_left` aligns the
//! rows of `W C` as left eigenvectors, `design_f_right` aligns the
//! columns of `P` as right eigenvectors. Both reduce to minimal-norm
//! least squares; the contract is the residual equation, not a specific
//! `F`.
//!
//! When `C_f A_f = 0` the residual collapses to the two-tap form
//! `r(t) = W y(t) - C_f F y(t-1)`, which needs no state at all beyond
//! the previous observation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, SV_REL_CUTOFF};
use crate::model::{LdsModel, PatternMatrix, TimeSeries};

/// Max-abs tolerance for the decoupling conditions.
pub const DECOUPLING_TOL: f64 = 1e-9;

/// Rank comparisons in [`check_rank_constraint`] count singular values
/// above this fraction of the largest.
pub const RANK_REL_TOL: f64 = 1e-9;

/// A complete residual design over a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualDesign {
    w: DMatrix<f64>,
    f: DMatrix<f64>,
    a_f: DMatrix<f64>,
    c_f: DMatrix<f64>,
    minus_cf_f: DMatrix<f64>,
}

impl ResidualDesign {
    /// Assembles the derived matrices from `(A, C, W, F)`.
    pub fn new(a: &DMatrix<f64>, c: &DMatrix<f64>, w: DMatrix<f64>, f: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        let m = c.nrows();
        if a.ncols() != n || c.ncols() != n {
            return Err(Error::Dimension("A must be n x n and C m x n".into()));
        }
        if w.ncols() != m {
            return Err(Error::Dimension(format!(
                "W has {} columns, observation dimension is {m}",
                w.ncols()
            )));
        }
        if w.nrows() > m {
            return Err(Error::Dimension(format!(
                "residual dimension {} exceeds observation dimension {m}",
                w.nrows()
            )));
        }
        if f.shape() != (n, m) {
            return Err(Error::Dimension(format!(
                "F must be {n} x {m}, got {} x {}",
                f.nrows(),
                f.ncols()
            )));
        }
        for (name, mat) in [("W", &w), ("F", &f)] {
            if !linalg::all_finite(mat) {
                return Err(Error::NonFinite(format!("{name} contains NaN or Inf")));
            }
        }
        let a_f = a - &f * c;
        let c_f = &w * c;
        let minus_cf_f = -(&c_f * &f);
        Ok(Self {
            w,
            f,
            a_f,
            c_f,
            minus_cf_f,
        })
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn a_f(&self) -> &DMatrix<f64> {
        &self.a_f
    }

    pub fn c_f(&self) -> &DMatrix<f64> {
        &self.c_f
    }

    /// Second tap of the online filter, `-C_f F`.
    pub fn minus_cf_f(&self) -> &DMatrix<f64> {
        &self.minus_cf_f
    }

    /// Residual dimension p (rows of W).
    pub fn residual_dim(&self) -> usize {
        self.w.nrows()
    }

    /// Whether the two-tap reduction is valid (`C_f A_f = 0`).
    pub fn two_tap_valid(&self) -> bool {
        linalg::max_abs(&(&self.c_f * &self.a_f)) <= DECOUPLING_TOL
    }
}

/// Taylor coefficients for a periodicity constraint of `T` samples:
/// `alpha = T(T-3)/2`, `beta = T(T-1)/2`, `gamma = -T(T-2)`; they always
/// sum to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodExpansion {
    pub period: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl PeriodExpansion {
    pub fn new(period: f64) -> Result<Self> {
        if !period.is_finite() || period <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "period must be positive, got {period}"
            )));
        }
        Ok(Self {
            period,
            alpha: 0.5 * period * (period - 3.0),
            beta: 0.5 * period * (period - 1.0),
            gamma: -period * (period - 2.0),
        })
    }
}

/// Outcome of [`verify_decoupling`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecouplingReport {
    pub cfp_norm: f64,
    pub cfaf_norm: f64,
    pub afp_norm: f64,
    pub tol: f64,
    pub pass: bool,
}

impl std::fmt::Display for DecouplingReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "decoupling {}: |C_f P| = {:.3e}, |C_f A_f| = {:.3e}, |A_f P| = {:.3e} (tol {:.1e})",
            if self.pass { "PASS" } else { "FAIL" },
            self.cfp_norm,
            self.cfaf_norm,
            self.afp_norm,
            self.tol
        )
    }
}

/// Outcome of [`check_rank_constraint`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankCheck {
    pub rank_p: usize,
    pub rank_c: usize,
    pub pass: bool,
}

/// Which eigenpair-assignment route produces `F`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FDesignMethod {
    /// Try the right assignment, fall back to the left one.
    #[default]
    RightThenLeft,
    Right,
    Left,
}

impl std::fmt::Display for FDesignMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FDesignMethod::RightThenLeft => write!(f, "right-then-left"),
            FDesignMethod::Right => write!(f, "right"),
            FDesignMethod::Left => write!(f, "left"),
        }
    }
}

impl std::str::FromStr for FDesignMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "right-then-left" => Ok(FDesignMethod::RightThenLeft),
            "right" => Ok(FDesignMethod::Right),
            "left" => Ok(FDesignMethod::Left),
            other => Err(Error::InvalidArgument(format!(
                "unknown F design method '{other}' (expected right-then-left|right|left)"
            ))),
        }
    }
}

/// Picks `W` whose rows form an orthonormal subset of the left null
/// space of `C P`. `residual_dim = None` takes all of it.
pub fn design_w(
    c: &DMatrix<f64>,
    p: &DMatrix<f64>,
    residual_dim: Option<usize>,
) -> Result<DMatrix<f64>> {
    if c.ncols() != p.nrows() {
        return Err(Error::Dimension(format!(
            "C is {}x{} but P has {} rows",
            c.nrows(),
            c.ncols(),
            p.nrows()
        )));
    }
    let m = c.nrows();
    let cp = c * p;
    let basis = linalg::left_null_basis(&cp, SV_REL_CUTOFF);
    let avail = basis.ncols();
    if avail == 0 {
        return Err(Error::Infeasible(format!(
            "left null space of C*P is trivial: rank(C*P) = {m} equals the observation dimension"
        )));
    }
    let want = residual_dim.unwrap_or(avail);
    if want == 0 || want > avail {
        return Err(Error::Infeasible(format!(
            "requested residual dimension {want}, but the left null space of C*P has dimension {avail}"
        )));
    }
    Ok(basis.columns(0, want).transpose())
}

/// Cycles the rows of `W` up to `rows` (duplicated rows are fine);
/// used to square up a p < m design for difference reports.
pub fn tile_rows(w: &DMatrix<f64>, rows: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, w.ncols(), |i, j| w[(i % w.nrows(), j)])
}

/// Rescales each row of `W`; handy for matching hand-scaled designs.
pub fn row_scaled(w: &DMatrix<f64>, factors: &[f64]) -> Result<DMatrix<f64>> {
    if factors.len() != w.nrows() {
        return Err(Error::Dimension(format!(
            "{} factors for {} rows",
            factors.len(),
            w.nrows()
        )));
    }
    let mut out = w.clone();
    for (i, &s) in factors.iter().enumerate() {
        if s == 0.0 || !s.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "row scale factors must be finite and nonzero, got {s}"
            )));
        }
        out.row_mut(i).scale_mut(s);
    }
    Ok(out)
}

/// Minimal-norm `F` with the rows of `W C` as left eigenvectors of
/// `A - F C` for eigenvalue zero: solves `(W C) F C = (W C) A`.
pub fn design_f_left(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let b = w * c; // p x n
    let target = &b * a;
    let f = linalg::pinv(&b)? * &target * linalg::pinv(c)?;
    let residual = linalg::max_abs(&(&b * (a - &f * c)));
    if residual > DECOUPLING_TOL {
        return Err(Error::Infeasible(format!(
            "left eigenpair assignment unsolvable: |(WC)(A - FC)| = {residual:.3e} > {DECOUPLING_TOL:.1e}"
        )));
    }
    Ok(f)
}

/// Minimal-norm `F` with the columns of `P` as right eigenvectors of
/// `A - F C` for eigenvalue zero: solves `F (C P) = A P`.
pub fn design_f_right(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let cp = c * p;
    let ap = a * p;
    let f = &ap * linalg::pinv(&cp)?;
    let residual = linalg::max_abs(&((a - &f * c) * p));
    if residual > DECOUPLING_TOL {
        return Err(Error::Infeasible(format!(
            "right eigenpair assignment unsolvable: |(A - FC) P| = {residual:.3e} > {DECOUPLING_TOL:.1e}"
        )));
    }
    Ok(f)
}

/// Evaluates the sufficient decoupling conditions in max-abs norm.
pub fn verify_decoupling(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    p: &DMatrix<f64>,
    w: &DMatrix<f64>,
    f: &DMatrix<f64>,
) -> Result<DecouplingReport> {
    let design = ResidualDesign::new(a, c, w.clone(), f.clone())?;
    if p.nrows() != a.nrows() {
        return Err(Error::Dimension(format!(
            "P has {} rows, state dimension is {}",
            p.nrows(),
            a.nrows()
        )));
    }
    let cfp_norm = linalg::max_abs(&(design.c_f() * p));
    let cfaf_norm = linalg::max_abs(&(design.c_f() * design.a_f()));
    let afp_norm = linalg::max_abs(&(design.a_f() * p));
    let tol = DECOUPLING_TOL;
    let pass = cfp_norm <= tol && (cfaf_norm <= tol || afp_norm <= tol);
    Ok(DecouplingReport {
        cfp_norm,
        cfaf_norm,
        afp_norm,
        tol,
        pass,
    })
}

/// Streaming two-tap residual filter `r(t) = W y(t) - C_f F y(t-1)`.
///
/// `r(0)` is defined as `W y(0)` (there is no `y(-1)`).
#[derive(Debug, Clone)]
pub struct TwoTapFilter {
    w: DMatrix<f64>,
    minus_cf_f: DMatrix<f64>,
    prev_y: Option<DVector<f64>>,
}

impl TwoTapFilter {
    pub fn residual_dim(&self) -> usize {
        self.w.nrows()
    }

    /// Coefficients `(W, -C_f F)`.
    pub fn taps(&self) -> (&DMatrix<f64>, &DMatrix<f64>) {
        (&self.w, &self.minus_cf_f)
    }

    pub fn reset(&mut self) {
        self.prev_y = None;
    }

    /// Consumes one observation, emits one residual.
    pub fn step(&mut self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.w.ncols() {
            return Err(Error::Dimension(format!(
                "observation has {} channels, filter expects {}",
                y.len(),
                self.w.ncols()
            )));
        }
        let mut r = &self.w * y;
        if let Some(prev) = &self.prev_y {
            r += &self.minus_cf_f * prev;
        }
        self.prev_y = Some(y.clone());
        Ok(r)
    }

    /// Runs the filter over a whole series; row t is `r(t)`.
    pub fn run(&mut self, series: &TimeSeries) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(series.len(), self.residual_dim());
        for t in 0..series.len() {
            let r = self.step(&series.row_vector(t))?;
            out.row_mut(t).copy_from(&r.transpose());
        }
        Ok(out)
    }
}

/// Builds the two-tap filter; requires `C_f A_f = 0` within tolerance,
/// otherwise the reduction is invalid and the observer form must be used.
pub fn make_online_filter(design: &ResidualDesign) -> Result<TwoTapFilter> {
    let cfaf = linalg::max_abs(&(design.c_f() * design.a_f()));
    if cfaf > DECOUPLING_TOL {
        return Err(Error::Infeasible(format!(
            "two-tap form invalid: |C_f A_f| = {cfaf:.3e} > {DECOUPLING_TOL:.1e}; use the observer form"
        )));
    }
    Ok(TwoTapFilter {
        w: design.w().clone(),
        minus_cf_f: design.minus_cf_f().clone(),
        prev_y: None,
    })
}

/// Recursive observer `x(t+1) = A_f x(t) + F y(t)` producing
/// `e(t) = y(t) - C x(t)` and `r(t) = W e(t)` one sample at a time.
#[derive(Debug, Clone)]
pub struct Observer {
    a_f: DMatrix<f64>,
    f: DMatrix<f64>,
    c: DMatrix<f64>,
    w: DMatrix<f64>,
    x_hat: DVector<f64>,
    steps: usize,
}

impl Observer {
    pub fn new(design: &ResidualDesign, model: &LdsModel, x_hat0: DVector<f64>) -> Result<Self> {
        if design.f().nrows() != model.state_dim() || design.f().ncols() != model.obs_dim() {
            return Err(Error::Dimension(format!(
                "design F is {}x{} but the model is n={}, m={}",
                design.f().nrows(),
                design.f().ncols(),
                model.state_dim(),
                model.obs_dim()
            )));
        }
        if x_hat0.len() != model.state_dim() {
            return Err(Error::Dimension(format!(
                "x_hat0 has length {}, state dimension is {}",
                x_hat0.len(),
                model.state_dim()
            )));
        }
        Ok(Self {
            a_f: design.a_f().clone(),
            f: design.f().clone(),
            c: model.c().clone(),
            w: design.w().clone(),
            x_hat: x_hat0,
            steps: 0,
        })
    }

    pub fn state(&self) -> &DVector<f64> {
        &self.x_hat
    }

    /// One observation in, `(e(t), r(t))` out.
    pub fn step(&mut self, y: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        if y.len() != self.c.nrows() {
            return Err(Error::Dimension(format!(
                "observation has {} channels, observer expects {}",
                y.len(),
                self.c.nrows()
            )));
        }
        let e = y - &self.c * &self.x_hat;
        let r = &self.w * &e;
        if !e.iter().all(|v| v.is_finite()) || !r.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical(format!(
                "observer output non-finite at sample {}",
                self.steps
            )));
        }
        self.x_hat = &self.a_f * &self.x_hat + &self.f * y;
        self.steps += 1;
        Ok((e, r))
    }
}

/// Runs the observer over a full series, returning the residual and
/// error trajectories (row t ~ sample t).
pub fn run_observer(
    design: &ResidualDesign,
    model: &LdsModel,
    y: &TimeSeries,
    x_hat0: &DVector<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if y.channels() != model.obs_dim() {
        return Err(Error::Dimension(format!(
            "series has {} channels, model expects {}",
            y.channels(),
            model.obs_dim()
        )));
    }
    let mut observer = Observer::new(design, model, x_hat0.clone())?;
    let mut residuals = DMatrix::zeros(y.len(), design.residual_dim());
    let mut errors = DMatrix::zeros(y.len(), model.obs_dim());
    for t in 0..y.len() {
        let (e, r) = observer.step(&y.row_vector(t))?;
        errors.row_mut(t).copy_from(&e.transpose());
        residuals.row_mut(t).copy_from(&r.transpose());
    }
    Ok((residuals, errors))
}

/// Pattern matrix for a periodicity of `T` samples:
/// `P = [alpha*A | beta*A | gamma*A]` (n x 3n).
pub fn pattern_from_period(a: &DMatrix<f64>, period: f64) -> Result<PatternMatrix> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension("A must be square".into()));
    }
    let exp = PeriodExpansion::new(period)?;
    let n = a.nrows();
    let mut p = DMatrix::zeros(n, 3 * n);
    p.view_mut((0, 0), (n, n)).copy_from(&(a * exp.alpha));
    p.view_mut((0, n), (n, n)).copy_from(&(a * exp.beta));
    p.view_mut((0, 2 * n), (n, n)).copy_from(&(a * exp.gamma));
    PatternMatrix::new(p)
}

/// Best rank-`k_max` approximation of `P` (truncated SVD).
pub fn reduce_pattern_rank(p: &PatternMatrix, k_max: usize) -> Result<PatternMatrix> {
    if k_max == 0 {
        return Err(Error::InvalidArgument("k_max must be at least 1".into()));
    }
    let mat = p.matrix();
    let keep = k_max.min(mat.nrows().min(mat.ncols()));
    let svd = mat.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd requested with u");
    let v_t = svd.v_t.as_ref().expect("svd requested with v_t");
    let mut out = DMatrix::zeros(mat.nrows(), mat.ncols());
    for i in 0..keep.min(svd.singular_values.len()) {
        let s = svd.singular_values[i];
        if s > 0.0 {
            out += u.column(i) * v_t.row(i) * s;
        }
    }
    PatternMatrix::new(out)
}

/// Compares numerical ranks of `P` and `C`.
pub fn check_rank_constraint(p: &PatternMatrix, c: &DMatrix<f64>) -> RankCheck {
    let rank_p = linalg::numerical_rank(p.matrix(), RANK_REL_TOL);
    let rank_c = linalg::numerical_rank(c, RANK_REL_TOL);
    RankCheck {
        rank_p,
        rank_c,
        pass: rank_p <= rank_c,
    }
}

/// End-to-end design driver: rank check, `W`, `F` (per `method`, with
/// the default falling back from right to left), and verification.
pub fn design_for_pattern(
    model: &LdsModel,
    pattern: &PatternMatrix,
    residual_dim: Option<usize>,
    method: FDesignMethod,
) -> Result<ResidualDesign> {
    if pattern.state_dim() != model.state_dim() {
        return Err(Error::Dimension(format!(
            "pattern has {} rows, state dimension is {}",
            pattern.state_dim(),
            model.state_dim()
        )));
    }
    let check = check_rank_constraint(pattern, model.c());
    if !check.pass {
        return Err(Error::Infeasible(format!(
            "rank constraint violated: rank(P) = {} > rank(C) = {}",
            check.rank_p, check.rank_c
        )));
    }
    let w = design_w(model.c(), pattern.matrix(), residual_dim)?;
    let f = match method {
        FDesignMethod::Right => design_f_right(model.a(), model.c(), pattern.matrix())?,
        FDesignMethod::Left => design_f_left(model.a(), model.c(), &w)?,
        FDesignMethod::RightThenLeft => design_f_right(model.a(), model.c(), pattern.matrix())
            .or_else(|_| design_f_left(model.a(), model.c(), &w))?,
    };
    let design = ResidualDesign::new(model.a(), model.c(), w, f)?;
    let report = verify_decoupling(
        model.a(),
        model.c(),
        pattern.matrix(),
        design.w(),
        design.f(),
    )?;
    if !report.pass {
        return Err(Error::DecouplingFailed(report.to_string()));
    }
    Ok(design)
}
