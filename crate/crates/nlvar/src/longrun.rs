//! Long-run analysis: attractor sets, deterministic limits after a final
//! shock, domains of attraction, long-run multiplier matrices, long-run
//! identifying restrictions, and the smooth-transition experiment that
//! shows what breaks without the common row space condition.
//!
//! The attractor of a member model is the q-dimensional set
//! `M_mu = {z : theta(z) = -mu} = chi^{-1}(R^q x {-mu})`. After a single
//! shock `u` from a state window `zw`, the path converges to
//!
//! ```text
//! z_inf(u; zw) = chi^{-1}[ alpha_perp'(hbar(zw) + u); -mu ]
//! ```
//!
//! which depends on the window only through `alpha_perp' hbar(zw)`. Shocks
//! in `span alpha` leave the limit untouched, proving that at most `r`
//! structural shocks can be purely transitory; the Jacobian of the limit in
//! the shock is the long-run multiplier `Theta_inf(z)`, whose kernel
//! contains `span alpha` and whose rank is `q` wherever the coordinate map
//! is differentiable with invertible Jacobian.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gauss::norm_cdf;
use crate::gjrt::{chi, chi_inverse, hbar_window};
use crate::linalg;
use crate::membership::MembershipReport;
use crate::model::{FamilyVariant, ModelSpec};
use crate::vecm::derive_vecm;

/// Margin below which an attractor point counts as sitting on a regime
/// boundary, where the multiplier is not defined.
const BOUNDARY_TOL: f64 = 1e-7;
/// Tolerance for the on-attractor precondition `theta(z) = -mu`.
const ON_ATTRACTOR_TOL: f64 = 1e-8;

/// Sampled points of the attractor set.
#[derive(Debug, Clone)]
pub struct AttractorSample {
    /// The psi-coordinates requested.
    pub grid: Vec<DVector<f64>>,
    /// `chi^{-1}(w, -mu)` per grid value.
    pub points: Vec<DVector<f64>>,
}

/// Maps a grid of trend coordinates `w in R^q` onto the attractor.
pub fn attractor_points(
    model: &ModelSpec,
    report: &MembershipReport,
    grid: &[DVector<f64>],
) -> Result<AttractorSample> {
    report.require_trend_structure()?;
    let q = report.q;
    let mut points = Vec::with_capacity(grid.len());
    for w in grid {
        if w.len() != q {
            return Err(Error::DimensionMismatch(format!(
                "grid value has length {}, expected q = {q}",
                w.len()
            )));
        }
        let mut y = DVector::zeros(model.p);
        y.rows_mut(0, q).copy_from(w);
        y.rows_mut(q, report.r).copy_from(&(-&report.mu));
        points.push(chi_inverse(model, report, &y)?);
    }
    Ok(AttractorSample {
        grid: grid.to_vec(),
        points,
    })
}

/// `hbar` of a state window in companion order (newest first):
/// `f0(z_(1)) - sum_{i=1..k-1} gamma_i(z_(i+1))`.
pub fn hbar(model: &ModelSpec, window: &[DVector<f64>]) -> Result<DVector<f64>> {
    hbar_window(model, window)
}

/// Deterministic limit of the path after one final shock `u` incident on
/// the state `window`.
pub fn z_infinity(
    model: &ModelSpec,
    report: &MembershipReport,
    u: &DVector<f64>,
    window: &[DVector<f64>],
) -> Result<DVector<f64>> {
    report.require_trend_structure()?;
    let h = hbar(model, window)?;
    let mut y = DVector::zeros(model.p);
    y.rows_mut(0, report.q)
        .copy_from(&(report.alpha_perp.transpose() * (h + u)));
    y.rows_mut(report.q, report.r).copy_from(&(-&report.mu));
    chi_inverse(model, report, &y)
}

/// The set of shocks driving the path from `window` to the attractor point
/// `z`: the affine subspace `span alpha + offset`.
#[derive(Debug, Clone)]
pub struct DomainOfAttraction {
    /// Orthonormal basis of the direction space (the report's alpha).
    pub basis: DMatrix<f64>,
    /// `h(z) - hbar(window)`.
    pub offset: DVector<f64>,
}

pub fn domain_of_attraction(
    model: &ModelSpec,
    report: &MembershipReport,
    z: &DVector<f64>,
    window: &[DVector<f64>],
) -> Result<DomainOfAttraction> {
    report.require_trend_structure()?;
    let defect = (chi(model, report, z)?.theta + &report.mu).norm();
    if defect > ON_ATTRACTOR_TOL {
        return Err(Error::OffAttractor(defect));
    }
    let offset = model.eval_h(z) - hbar(model, window)?;
    Ok(DomainOfAttraction {
        basis: report.alpha.clone(),
        offset,
    })
}

/// Long-run multiplier at an attractor point.
#[derive(Debug, Clone)]
pub struct MultiplierResult {
    pub z: DVector<f64>,
    /// `Theta_inf(z)`; absent on regime boundaries, where the limit map is
    /// not differentiable.
    pub theta_inf: Option<DMatrix<f64>>,
    /// Numerical rank of the multiplier (q at interior points with an
    /// invertible coordinate Jacobian).
    pub rank: usize,
    /// Orthonormal basis of the kernel (contains span alpha).
    pub kernel_basis: DMatrix<f64>,
    pub differentiable: bool,
}

/// Computes `Theta_inf(z)` for `z` on the attractor.
///
/// Piecewise families resolve the coordinate map to a single regime at
/// interior points, giving `Theta_inf = X^{-1} [I_q; 0] alpha_perp'`
/// exactly; points within boundary tolerance of two regimes are reported as
/// non-differentiable rather than given a one-sided Jacobian. A singular
/// Jacobian is reported through a reduced rank, not as an error.
pub fn longrun_multipliers(
    model: &ModelSpec,
    report: &MembershipReport,
    z: &DVector<f64>,
) -> Result<MultiplierResult> {
    report.require_trend_structure()?;
    let defect = (chi(model, report, z)?.theta + &report.mu).norm();
    if defect > ON_ATTRACTOR_TOL {
        return Err(Error::OffAttractor(defect));
    }
    let (p, q) = (model.p, report.q);

    let jac: Option<DMatrix<f64>> = match &model.family {
        FamilyVariant::Linear { .. } => Some(chi_matrix_at(model, report, None)?),
        FamilyVariant::ThresholdAffine(_) | FamilyVariant::PiecewiseLinear(_) => {
            if model.boundary_margin(z) < BOUNDARY_TOL * (1.0 + z.norm()) {
                None
            } else {
                let ell = model.regime_of(z)?;
                Some(chi_matrix_at(model, report, Some(ell.index0()))?)
            }
        }
        FamilyVariant::SmoothedThreshold { .. } => {
            Some(crate::gjrt::chi_jacobian_for_multipliers(model, report, z))
        }
    };

    let Some(jac) = jac else {
        return Ok(MultiplierResult {
            z: z.clone(),
            theta_inf: None,
            rank: 0,
            kernel_basis: DMatrix::zeros(p, 0),
            differentiable: false,
        });
    };

    // Theta_inf = J^{-1} [I_q; 0] alpha_perp'; a rank-deficient Jacobian
    // degrades to the pseudo-inverse route.
    let mut selector = DMatrix::zeros(p, q);
    selector.view_mut((0, 0), (q, q)).copy_from(&DMatrix::identity(q, q));
    let lead = match linalg::inverse(&jac, "chi Jacobian") {
        Ok(inv) => inv * &selector,
        Err(_) => jac
            .clone()
            .svd(true, true)
            .solve(&selector, 1e-12)
            .map_err(|e| Error::Singular(e.to_string()))?,
    };
    let theta_inf = lead * report.alpha_perp.transpose();
    let rank = linalg::numerical_rank(&theta_inf, 1e-10);
    // Kernel = orthogonal complement of the row space.
    let (_, _, kernel_basis) = linalg::column_space(&theta_inf.transpose(), 1e-10);
    Ok(MultiplierResult {
        z: z.clone(),
        theta_inf: Some(theta_inf),
        rank,
        kernel_basis,
        differentiable: true,
    })
}

/// The affine matrix of `chi` (globally for linear models, per regime for
/// piecewise ones).
fn chi_matrix_at(
    model: &ModelSpec,
    report: &MembershipReport,
    regime0: Option<usize>,
) -> Result<DMatrix<f64>> {
    let vecm = derive_vecm(model);
    let l = regime0.unwrap_or(0);
    let h = &vecm.h_mats()[l];
    let pi = &vecm.pi_mats[l];
    let p = model.p;
    let mut x = DMatrix::zeros(p, p);
    x.view_mut((0, 0), (report.q, p))
        .copy_from(&(report.alpha_perp.transpose() * h));
    x.view_mut((report.q, 0), (report.r, p))
        .copy_from(&(report.alpha.transpose() * pi));
    Ok(x)
}

/// Builds an orthogonal rotation whose first `m` columns span directions of
/// purely transitory shocks: the first `m` columns of the orthonormal
/// `alpha`, completed by the remaining `alpha` columns and `alpha_perp`.
pub fn lr_identify_construct(report: &MembershipReport, m: usize) -> Result<DMatrix<f64>> {
    let r = report.r;
    if m < 1 || m > r {
        return Err(Error::InvalidShockCount { m, r });
    }
    let p = report.alpha.nrows();
    let mut upsilon = DMatrix::zeros(p, p);
    upsilon.view_mut((0, 0), (p, r)).copy_from(&report.alpha);
    upsilon
        .view_mut((0, r), (p, p - r))
        .copy_from(&report.alpha_perp);
    Ok(upsilon)
}

/// Checks the long-run identifying restriction
/// `alpha_perp' Upsilon [I_m; 0] = 0`; returns the pass flag and the
/// restriction residual.
pub fn lr_identify_check(
    report: &MembershipReport,
    upsilon: &DMatrix<f64>,
    m: usize,
    tol: f64,
) -> Result<(bool, f64)> {
    let p = report.alpha.nrows();
    if upsilon.nrows() != p || upsilon.ncols() != p {
        return Err(Error::DimensionMismatch(format!(
            "Upsilon is {}x{}, expected {p}x{p}",
            upsilon.nrows(),
            upsilon.ncols()
        )));
    }
    if m < 1 || m > p {
        return Err(Error::InvalidShockCount { m, r: report.r });
    }
    let ortho_defect = (upsilon.transpose() * upsilon - DMatrix::identity(p, p)).norm();
    if ortho_defect > tol.max(1e-10) {
        return Err(Error::NotOrthogonal(ortho_defect));
    }
    let residual = (report.alpha_perp.transpose() * upsilon.columns(0, m)).norm();
    Ok((residual <= tol, residual))
}

/// Bivariate smooth-transition experiment configuration: the error
/// correction is `dz_t = a(beta'z_{t-1}) beta'z_{t-1} + u_t` with
/// `a(xi) = [1 - L(xi)] alpha_tilde + L(xi) alpha` and
/// `L(xi) = 2 |Phi(xi) - 1/2|` the folded Gaussian cdf, so adjustment loads
/// on `alpha_tilde` near equilibrium and rotates toward `alpha` far from
/// it. The image of the level map is then a curved set rather than a fixed
/// subspace, and the transitory shock direction drifts with the shock
/// magnitude.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TransitoryConfig {
    pub alpha_tilde: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Hard cap on zero-shock iterations when locating the limit.
    #[serde(default = "default_t_max")]
    pub t_max: usize,
    /// Root-finder tolerance on the permanent-effect coordinate.
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_t_max() -> usize {
    100_000
}

fn default_tol() -> f64 {
    1e-6
}

/// Per-magnitude transitory directions found by the experiment.
#[derive(Debug, Clone)]
pub struct TransitoryCurve {
    pub magnitudes: Vec<f64>,
    /// Slope `delta_2 / delta_1` of the transitory direction.
    pub ratios: Vec<f64>,
    pub iterations: Vec<usize>,
    pub converged: Vec<bool>,
}

struct TransitoryModel {
    alpha_tilde: DVector<f64>,
    alpha: DVector<f64>,
    beta: DVector<f64>,
    beta_perp: DVector<f64>,
    t_max: usize,
    tol: f64,
}

impl TransitoryModel {
    fn new(cfg: &TransitoryConfig) -> Result<Self> {
        if cfg.alpha_tilde.len() != 2 || cfg.alpha.len() != 2 || cfg.beta.len() != 2 {
            return Err(Error::DimensionMismatch(
                "transitory experiment requires p = 2, r = 1".into(),
            ));
        }
        let alpha_tilde = DVector::from_vec(cfg.alpha_tilde.clone());
        let alpha = DVector::from_vec(cfg.alpha.clone());
        let beta = DVector::from_vec(cfg.beta.clone());
        for (name, a) in [("alpha_tilde", &alpha_tilde), ("alpha", &alpha)] {
            let eig = 1.0 + beta.dot(a);
            if eig.abs() >= 1.0 {
                return Err(Error::NotMember(format!(
                    "transitory experiment requires |1 + beta'{name}| < 1, got {eig}"
                )));
            }
        }
        let beta_perp = DVector::from_vec(vec![-beta[1], beta[0]]);
        Ok(TransitoryModel {
            alpha_tilde,
            alpha,
            beta,
            beta_perp,
            t_max: cfg.t_max,
            tol: cfg.tol,
        })
    }

    fn loading(&self, xi: f64) -> DVector<f64> {
        let w = 2.0 * (norm_cdf(xi) - 0.5).abs();
        &self.alpha_tilde * (1.0 - w) + &self.alpha * w
    }

    /// Permanent-effect coordinate of the limit after shock `u` from state
    /// zero, plus the iteration count.
    fn permanent_coordinate(&self, u: &DVector<f64>) -> (f64, usize, bool) {
        let mut z = u.clone();
        let threshold = self.tol * 1e-3;
        for t in 0..self.t_max {
            let xi = self.beta.dot(&z);
            if xi.abs() <= threshold {
                return (
                    self.beta_perp.dot(&z) / self.beta_perp.norm_squared(),
                    t,
                    true,
                );
            }
            z += self.loading(xi) * xi;
        }
        (
            self.beta_perp.dot(&z) / self.beta_perp.norm_squared(),
            self.t_max,
            false,
        )
    }
}

/// Traces the direction of purely transitory shocks as a function of the
/// shock magnitude.
///
/// For each magnitude the root of `g(phi) = ` (permanent coordinate of the
/// limit after the shock `mag (cos phi, sin phi)`) is bracketed between the
/// angles of `alpha_tilde` and `alpha` (expanded by 0.2 rad if needed) and
/// bisected to `|g| <= tol`; the reported ratio is `tan(phi)`.
pub fn transitory_direction_curve(
    cfg: &TransitoryConfig,
    magnitudes: &[f64],
) -> Result<TransitoryCurve> {
    let model = TransitoryModel::new(cfg)?;
    let mut ratios = Vec::with_capacity(magnitudes.len());
    let mut iterations = Vec::with_capacity(magnitudes.len());
    let mut converged = Vec::with_capacity(magnitudes.len());

    for &mag in magnitudes {
        if mag.abs() < 1e-12 {
            // Vanishing shock: the limit direction is the near-equilibrium
            // loading.
            ratios.push(model.alpha_tilde[1] / model.alpha_tilde[0]);
            iterations.push(0);
            converged.push(true);
            continue;
        }
        let g = |phi: f64| -> f64 {
            let u = DVector::from_vec(vec![mag * phi.cos(), mag * phi.sin()]);
            model.permanent_coordinate(&u).0
        };
        let mut lo = model.alpha_tilde[1].atan2(model.alpha_tilde[0]);
        let mut hi = model.alpha[1].atan2(model.alpha[0]);
        if lo > hi {
            std::mem::swap(&mut lo, &mut hi);
        }
        let mut glo = g(lo);
        let mut ghi = g(hi);
        if glo * ghi > 0.0 {
            lo -= 0.2;
            hi += 0.2;
            glo = g(lo);
            ghi = g(hi);
        }
        if glo * ghi > 0.0 {
            ratios.push(f64::NAN);
            iterations.push(0);
            converged.push(false);
            continue;
        }
        let mut iters = 0usize;
        let mut mid = 0.5 * (lo + hi);
        let mut gm = g(mid);
        while gm.abs() > model.tol && (hi - lo) > 1e-15 && iters < 200 {
            if glo * gm <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
                glo = gm;
            }
            mid = 0.5 * (lo + hi);
            gm = g(mid);
            iters += 1;
        }
        ratios.push(mid.tan());
        iterations.push(iters);
        converged.push(gm.abs() <= model.tol);
    }
    Ok(TransitoryCurve {
        magnitudes: magnitudes.to_vec(),
        ratios,
        iterations,
        converged,
    })
}
