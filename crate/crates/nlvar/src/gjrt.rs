//! The coordinate map `chi`, its inverse, and the common-trend /
//! equilibrium-error decomposition of a simulated path.
//!
//! For a member model with factorized loadings `(alpha, alpha_perp, mu)`,
//!
//! ```text
//! chi(z) = [ psi(z); theta(z) ]
//!        = [ alpha_perp' (f0(z) - sum_{j<k} gamma_j(z)); alpha' pi(z) ]
//! ```
//!
//! is a homeomorphism of R^p. Along any path of the model,
//!
//! ```text
//! chi(z_t) = [ psi0 + alpha_perp' sum_{s<=t} u_s; -mu ] + S_chi' bxi_t
//! ```
//!
//! where `psi0 = alpha_perp' hbar(window_0)` carries the initial condition,
//! the middle term is the q-dimensional cumulative-shock trend, and
//! `bxi_t = (mu + theta(z_t), d zeta_t)` is the exponentially stable
//! remainder. [`decompose`] computes every term from raw definitions and
//! reports the reconstruction residual per step, so the identity itself is
//! the tested object; the `bxi` recursion is available separately as a
//! cross-check ([`xi_recursion_residuals`]).

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{simulate, PathResult, ShockPlan};
use crate::error::{Error, Result};
use crate::linalg;
use crate::membership::MembershipReport;
use crate::model::{FamilyVariant, ModelSpec, RegimeIndex};
use crate::vecm::{build_state, derive_vecm, BoldMatrices};

const ACCEPT_SLACK: f64 = 1e-9;
const RETRY_SLACK: f64 = 1e-6;
const NEWTON_MAX_ITERS: usize = 200;

/// Value of the coordinate map: common-trend coordinate `psi` (length q)
/// and equilibrium error `theta` (length r).
#[derive(Debug, Clone)]
pub struct ChiValue {
    pub psi: DVector<f64>,
    pub theta: DVector<f64>,
}

impl ChiValue {
    pub fn stacked(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.psi.len() + self.theta.len());
        v.rows_mut(0, self.psi.len()).copy_from(&self.psi);
        v.rows_mut(self.psi.len(), self.theta.len()).copy_from(&self.theta);
        v
    }
}

/// Evaluates `chi` at `z` under the report's normalization.
pub fn chi(model: &ModelSpec, report: &MembershipReport, z: &DVector<f64>) -> Result<ChiValue> {
    report.require_trend_structure()?;
    Ok(chi_unchecked(model, report, z))
}

fn chi_unchecked(model: &ModelSpec, report: &MembershipReport, z: &DVector<f64>) -> ChiValue {
    let h = model.eval_h(z);
    let pi = model.eval_pi(z);
    ChiValue {
        psi: report.alpha_perp.transpose() * h,
        theta: report.alpha.transpose() * pi,
    }
}

/// Per-regime affine data of `chi`: `chi(z) = offset^(l) + X^(l) z` on
/// regime `l`. For the smoothed family this is the base model's data (used
/// to initialize Newton).
struct ChiAffine {
    offsets: Vec<DVector<f64>>,
    mats: Vec<DMatrix<f64>>,
}

fn chi_affine(model: &ModelSpec, report: &MembershipReport) -> ChiAffine {
    let vecm = derive_vecm(model);
    let h_mats = vecm.h_mats();
    let h_offs = vecm.h_offsets();
    let p = model.p;
    let r = report.r;
    let mut offsets = Vec::with_capacity(vecm.regimes);
    let mut mats = Vec::with_capacity(vecm.regimes);
    for l in 0..vecm.regimes {
        let top = report.alpha_perp.transpose() * &h_mats[l];
        let bottom = report.alpha.transpose() * &vecm.pi_mats[l];
        let mut x = DMatrix::zeros(p, p);
        x.view_mut((0, 0), (p - r, p)).copy_from(&top);
        x.view_mut((p - r, 0), (r, p)).copy_from(&bottom);
        let mut off = DVector::zeros(p);
        off.rows_mut(0, p - r)
            .copy_from(&(report.alpha_perp.transpose() * &h_offs[l]));
        off.rows_mut(p - r, r)
            .copy_from(&(report.alpha.transpose() * &vecm.pi_offsets[l]));
        offsets.push(off);
        mats.push(x);
    }
    ChiAffine { offsets, mats }
}

/// Inverts `chi` at the stacked coordinate `y = (psi, theta)`.
///
/// Linear models solve one p x p system; piecewise models invert each
/// regime's affine piece and accept the candidate lying in its own regime;
/// smoothed models refine the base model's piecewise inverse by damped
/// Newton on the smoothed map, to a residual of `1e-10 (1 + |y|)`.
pub fn chi_inverse(
    model: &ModelSpec,
    report: &MembershipReport,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    report.require_trend_structure()?;
    if y.len() != model.p {
        return Err(Error::DimensionMismatch(format!(
            "chi coordinate has length {}, expected p = {}",
            y.len(),
            model.p
        )));
    }
    match &model.family {
        FamilyVariant::Linear { .. } => {
            let aff = chi_affine(model, report);
            linalg::solve(&aff.mats[0], y, "chi matrix")
        }
        FamilyVariant::ThresholdAffine(_) | FamilyVariant::PiecewiseLinear(_) => {
            piecewise_chi_inverse(model, model, report, y)
        }
        FamilyVariant::SmoothedThreshold { base, .. } => {
            let base_model = ModelSpec {
                p: model.p,
                k: model.k,
                c: model.c.clone(),
                family: FamilyVariant::ThresholdAffine(base.clone()),
            };
            let z0 = piecewise_chi_inverse(&base_model, &base_model, report, y)?;
            newton_chi_inverse(model, report, y, z0)
        }
    }
}

/// Per-regime candidate inversion; `regime_model` supplies the partition
/// (identical to `model` except when initializing the smoothed case).
fn piecewise_chi_inverse(
    model: &ModelSpec,
    regime_model: &ModelSpec,
    report: &MembershipReport,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    let aff = chi_affine(model, report);
    for pass in [ACCEPT_SLACK, RETRY_SLACK] {
        for (l, x) in aff.mats.iter().enumerate() {
            let rhs = y - &aff.offsets[l];
            let Ok(z) = linalg::solve(x, &rhs, "chi regime matrix") else {
                continue;
            };
            let slack = pass * (1.0 + z.norm());
            if regime_model.regime_contains(RegimeIndex::new(l + 1), &z, slack) {
                return Ok(z);
            }
        }
    }
    Err(Error::NoRegimeAccepts(format!(
        "chi_inverse at |y| = {:.3}",
        y.norm()
    )))
}

fn chi_jacobian_fd(model: &ModelSpec, report: &MembershipReport, z: &DVector<f64>) -> DMatrix<f64> {
    let p = model.p;
    let h = 1e-6 * (1.0 + z.norm());
    let mut jac = DMatrix::zeros(p, p);
    for j in 0..p {
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[j] += h;
        zm[j] -= h;
        let col = (chi_unchecked(model, report, &zp).stacked()
            - chi_unchecked(model, report, &zm).stacked())
            / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

/// Finite-difference Jacobian of `chi`, shared with the multiplier
/// computation for smoothed models.
pub(crate) fn chi_jacobian_for_multipliers(
    model: &ModelSpec,
    report: &MembershipReport,
    z: &DVector<f64>,
) -> DMatrix<f64> {
    chi_jacobian_fd(model, report, z)
}

fn newton_chi_inverse(
    model: &ModelSpec,
    report: &MembershipReport,
    y: &DVector<f64>,
    mut z: DVector<f64>,
) -> Result<DVector<f64>> {
    // Accept at this residual, but keep polishing toward round-off so the
    // inverse itself (not just the residual) is accurate.
    let tol_accept = 1e-10 * (1.0 + y.norm());
    let tol_target = 1e-14 * (1.0 + y.norm());
    let mut res = chi_unchecked(model, report, &z).stacked() - y;
    for iter in 0..NEWTON_MAX_ITERS {
        if res.norm() <= tol_target {
            return Ok(z);
        }
        let jac = chi_jacobian_fd(model, report, &z);
        let step = match linalg::solve(&jac, &(-&res), "smoothed chi Jacobian") {
            Ok(s) => s,
            Err(_) if res.norm() <= tol_accept => return Ok(z),
            Err(_) => {
                return Err(Error::NewtonDivergence {
                    iterations: iter,
                    residual: res.norm(),
                })
            }
        };
        // Halve the step until the residual decreases.
        let mut lambda = 1.0;
        loop {
            let cand = &z + &step * lambda;
            let cand_res = chi_unchecked(model, report, &cand).stacked() - y;
            if cand_res.norm() < res.norm() {
                z = cand;
                res = cand_res;
                break;
            }
            lambda *= 0.5;
            if lambda < 1e-12 {
                // No further improvement possible at this scale.
                if res.norm() <= tol_accept {
                    return Ok(z);
                }
                return Err(Error::NewtonDivergence {
                    iterations: iter,
                    residual: res.norm(),
                });
            }
        }
    }
    if res.norm() <= tol_accept {
        Ok(z)
    } else {
        Err(Error::NewtonDivergence {
            iterations: NEWTON_MAX_ITERS,
            residual: res.norm(),
        })
    }
}

/// Common-trend decomposition of a simulated path.
#[derive(Debug, Clone)]
pub struct GjrtDecomposition {
    /// `alpha_perp' hbar(window_0)`: the initial-condition coordinate.
    pub init_term: DVector<f64>,
    /// Per step, the cumulative-shock trend `alpha_perp' sum_{s<=t} u_s`.
    pub trend: Vec<DVector<f64>>,
    /// Per step, `bxi_t = (mu + theta(z_t), d zeta_t)`.
    pub xi: Vec<DVector<f64>>,
    /// The `p x (r + p(k-1))` selector applied to `bxi_t` in the
    /// reconstruction identity.
    pub s_chi_t: DMatrix<f64>,
    /// Per step, the defect of the reconstruction identity at `z_t`.
    pub residual: Vec<f64>,
}

/// Builds the selector `S_chi'`: `chi(z_t)` picks up `-alpha_perp'` times
/// each `d zeta` block and the identity on the equilibrium-error block.
fn build_s_chi_t(p: usize, k: usize, r: usize, alpha_perp: &DMatrix<f64>) -> DMatrix<f64> {
    let q = p - r;
    let n = p * (k - 1);
    let mut s = DMatrix::zeros(p, r + n);
    for b in 0..(k - 1) {
        s.view_mut((0, r + b * p), (q, p))
            .copy_from(&(-alpha_perp.transpose()));
    }
    s.view_mut((q, 0), (r, r)).copy_from(&DMatrix::identity(r, r));
    s
}

/// `hbar` of a window in companion order (see module docs of [`crate::longrun`]).
pub(crate) fn hbar_window(model: &ModelSpec, window: &[DVector<f64>]) -> Result<DVector<f64>> {
    if window.len() < model.k {
        return Err(Error::DimensionMismatch(format!(
            "window has {} entries, need k = {}",
            window.len(),
            model.k
        )));
    }
    let mut h = model.eval_f(0, &window[0]);
    for i in 1..model.k {
        h -= model.eval_gamma(i, &window[i]);
    }
    Ok(h)
}

/// Decomposes a path into initial condition, stochastic trend, and stable
/// remainder, and evaluates the reconstruction identity at every step.
pub fn decompose(
    model: &ModelSpec,
    report: &MembershipReport,
    path: &PathResult,
) -> Result<GjrtDecomposition> {
    report.require_trend_structure()?;
    let (p, k, r) = (model.p, model.k, report.r);
    if path.window0.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "path window0 has {} entries, need k = {k}",
            path.window0.len()
        )));
    }
    let init_term = report.alpha_perp.transpose() * hbar_window(model, &path.window0)?;
    let s_chi_t = build_s_chi_t(p, k, r, &report.alpha_perp);

    let mut trend = Vec::with_capacity(path.len());
    let mut xi = Vec::with_capacity(path.len());
    let mut residual = Vec::with_capacity(path.len());

    let mut cum = DVector::zeros(p);
    let mut zeta_prev = build_state(model, &path.window0)?.zeta;
    for t in 1..=path.len() as i64 {
        cum += &path.shocks[(t - 1) as usize];
        let trend_t = report.alpha_perp.transpose() * &cum;

        let z_t = path.z_at(t);
        let zeta_t = build_state(model, &path.window_at(t, k))?.zeta;
        let mut xi_t = DVector::zeros(r + p * (k - 1));
        xi_t.rows_mut(0, r)
            .copy_from(&(&report.mu + report.alpha.transpose() * model.eval_pi(z_t)));
        xi_t.rows_mut(r, p * (k - 1)).copy_from(&(&zeta_t - &zeta_prev));
        zeta_prev = zeta_t;

        let mut recon = DVector::zeros(p);
        recon.rows_mut(0, p - r).copy_from(&(&init_term + &trend_t));
        recon.rows_mut(p - r, r).copy_from(&(-&report.mu));
        recon += &s_chi_t * &xi_t;
        let defect = (chi_unchecked(model, report, z_t).stacked() - recon).norm();

        trend.push(trend_t);
        xi.push(xi_t);
        residual.push(defect);
    }

    Ok(GjrtDecomposition {
        init_term,
        trend,
        xi,
        s_chi_t,
        residual,
    })
}

/// Per-step feasibility residual of the stable-remainder recursion: the
/// distance of `bxi_t - bxi_{t-1}` from `{bbeta' d bz_t : bbeta in
/// co{bbeta^(l)}}`, found by simplex-constrained least squares. Within a
/// regime the realizing vertex is exact; regime-crossing steps have a
/// convex-combination certificate.
pub fn xi_recursion_residuals(
    model: &ModelSpec,
    report: &MembershipReport,
    path: &PathResult,
) -> Result<Vec<f64>> {
    report.require_trend_structure()?;
    let (p, k) = (model.p, model.k);
    let vecm = derive_vecm(model);
    let bold = BoldMatrices::build(&vecm, &report.alpha, &report.alpha_perp)?;
    let dec = decompose(model, report, path)?;

    // The stacked state pairs f0(z_t) with the lagged stack zeta_{t-1}; the
    // loadings carry the Phi_0 inverses, so the certificate lives in the
    // coordinates of the contemporaneous image.
    let state_at = |t: i64| -> Result<DVector<f64>> {
        let lagged: Vec<DVector<f64>> = (1..k as i64).map(|i| path.z_at(t - i).clone()).collect();
        let zeta = crate::vecm::zeta_from(model, &lagged)?;
        let mut v = DVector::zeros(p * k);
        v.rows_mut(0, p).copy_from(&model.eval_f(0, path.z_at(t)));
        v.rows_mut(p, p * (k - 1)).copy_from(&zeta);
        Ok(v)
    };
    let xi_at = |t: i64| -> Result<DVector<f64>> {
        if t >= 1 {
            Ok(dec.xi[(t - 1) as usize].clone())
        } else {
            // xi_0 from the initial window: zeta_0 - zeta_{-1} is available
            // because zeta only needs k - 1 lags.
            let z0 = path.z_at(0);
            let zeta0 = crate::vecm::zeta_from(model, &path.window0)?;
            let zeta_m1 = crate::vecm::zeta_from(model, &path.window0[1..])?;
            let r = report.r;
            let mut v = DVector::zeros(r + p * (k - 1));
            v.rows_mut(0, r)
                .copy_from(&(&report.mu + report.alpha.transpose() * model.eval_pi(z0)));
            v.rows_mut(r, p * (k - 1)).copy_from(&(zeta0 - zeta_m1));
            Ok(v)
        }
    };

    let mut out = Vec::with_capacity(path.len());
    for t in 1..=path.len() as i64 {
        let dz = state_at(t)? - state_at(t - 1)?;
        let target = xi_at(t)? - xi_at(t - 1)?;
        let cols: Vec<DVector<f64>> = bold.beta_t.iter().map(|bt| bt * &dz).collect();
        let v = DMatrix::from_columns(&cols);
        let (_, res) = linalg::simplex_lsq(&v, &target);
        out.push(res);
    }
    Ok(out)
}

/// Result of the exponential-stability probe.
#[derive(Debug, Clone)]
pub struct StabilityFit {
    /// Fitted geometric decay rate of `|bxi_t|` after the impulse.
    pub rho_hat: f64,
    /// Decay rate consistent with the JSR bound and the tail vanished.
    pub ok: bool,
    pub xi_norms: Vec<f64>,
}

/// Simulates an impulse at `tau = 1` followed by zero shocks and fits the
/// geometric decay of the stable remainder.
pub fn verify_exponential_stability(
    model: &ModelSpec,
    report: &MembershipReport,
    window0: &[DVector<f64>],
    u: &DVector<f64>,
    t: usize,
) -> Result<StabilityFit> {
    report.require_trend_structure()?;
    let plan = ShockPlan::ImpulseThenZero {
        u: u.clone(),
        tau: 1,
        t,
    };
    let path = simulate(model, window0, &plan, None)?;
    let dec = decompose(model, report, &path)?;
    let xi_norms: Vec<f64> = dec.xi.iter().map(|x| x.norm()).collect();

    let initial = xi_norms[0];
    if initial <= 1e-14 {
        return Ok(StabilityFit {
            rho_hat: 0.0,
            ok: true,
            xi_norms,
        });
    }
    // Log-linear fit over the geometric regime (skip the burn-in step and
    // anything at round-off level).
    let pts: Vec<(f64, f64)> = xi_norms
        .iter()
        .enumerate()
        .skip(1)
        .take_while(|(_, n)| **n > 1e-12 * initial)
        .map(|(i, n)| (i as f64, n.ln()))
        .collect();
    let rho_hat = if pts.len() < 2 {
        0.0
    } else {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        ((n * sxy - sx * sy) / (n * sxx - sx * sx)).exp()
    };
    let upper = report.jsr.as_ref().map_or(1.0, |b| b.upper);
    let tail_ok = xi_norms.last().is_some_and(|n| *n <= 1e-8 * initial);
    Ok(StabilityFit {
        rho_hat,
        ok: rho_hat <= upper + 0.05 && tail_ok,
        xi_norms,
    })
}
