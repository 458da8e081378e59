//! Class verification: common row space factorization, invertibility of the
//! contemporaneous map, and the joint-spectral-radius stability condition.
//!
//! A model supports `q = p - r` common stochastic trends when
//!
//! 1. `f_0` is a homeomorphism,
//! 2. the image of the level map `pi` is a fixed r-dimensional subspace
//!    (`c = alpha mu`, `pi(z) = alpha theta(z)` — the common row space
//!    condition), and
//! 3. the stacked transition family `{I + beta^(l)' alpha}` has joint
//!    spectral radius below a threshold `rho_bar < 1`.
//!
//! For the piecewise families all three conditions reduce to finite
//! certificates; that reduction is what [`check_membership`] implements.
//! The convex hull of the stacked loadings collapses to its vertex set for
//! the JSR computation, which is exact for hulls of finite families.
//!
//! `alpha` is normalized to orthonormal columns with a deterministic sign
//! convention, so reports are reproducible across runs; any other
//! normalization differs by an invertible `r x r` factor that is absorbed
//! into the `beta^(l)`.

use nalgebra::{Complex, DMatrix, DVector};
use serde_json::json;

use crate::error::{Error, Result};
use crate::jsr::{jsr_decision, JsrBracket, JsrVerdict};
use crate::linalg;
use crate::model::{FamilyVariant, ModelSpec};
use crate::vecm::{derive_vecm, BoldMatrices, VecmForm};

/// Default relative rank tolerance, scale-aware in the problem size.
pub fn default_rank_tol(p: usize, regimes: usize) -> f64 {
    1e-9 * p.max(regimes) as f64
}

/// Output of the common-row-space factorization.
#[derive(Debug, Clone)]
pub struct CrscFactors {
    pub r: usize,
    /// `p x r`, orthonormal columns.
    pub alpha: DMatrix<f64>,
    /// `p x (p - r)`, orthonormal complement.
    pub alpha_perp: DMatrix<f64>,
    /// Per regime `beta^(l)` with `Pi^(l) = alpha beta^(l)'`.
    pub betas: Vec<DMatrix<f64>>,
    /// `mu` with `c = alpha mu`.
    pub mu: DVector<f64>,
    /// Per regime `mu_bar^(l)` with `pi_bar^(l) = alpha mu_bar^(l)`.
    pub mu_bars: Vec<DVector<f64>>,
}

/// Factorizes the per-regime level maps through a common column space.
///
/// `r` is the numerical rank of `[Pi^(1) .. Pi^(L), pi_bar^(1) ..
/// pi_bar^(L), c]`; every `Pi^(l)` must individually have rank `r` with
/// column space inside the common span, otherwise the image of `pi` is not
/// a fixed subspace and the factorization fails with
/// [`Error::CrscViolation`].
pub fn factorize_crsc(vecm: &VecmForm, c: &DVector<f64>, tol: f64) -> Result<CrscFactors> {
    let p = vecm.p;
    let l = vecm.regimes;
    let mut concat = DMatrix::zeros(p, l * p + l + 1);
    for (i, pi) in vecm.pi_mats.iter().enumerate() {
        concat.view_mut((0, i * p), (p, p)).copy_from(pi);
    }
    for (i, pb) in vecm.pi_offsets.iter().enumerate() {
        concat.view_mut((0, l * p + i), (p, 1)).copy_from(pb);
    }
    concat.view_mut((0, l * p + l), (p, 1)).copy_from(c);

    let (r, alpha, alpha_perp) = linalg::column_space(&concat, tol);
    let smax_global = if concat.amax() == 0.0 {
        0.0
    } else {
        linalg::spectral_norm(&concat)
    };

    let proj_out = DMatrix::identity(p, p) - &alpha * alpha.transpose();
    for (i, pi) in vecm.pi_mats.iter().enumerate() {
        let rank_l = if smax_global == 0.0 {
            0
        } else {
            let sv = pi.clone().singular_values();
            sv.iter().filter(|s| **s > tol * smax_global).count()
        };
        let residual = linalg::spectral_norm(&(&proj_out * pi));
        if rank_l != r || residual > tol * (1.0 + linalg::spectral_norm(pi)) {
            return Err(Error::CrscViolation {
                regime: i + 1,
                residual: if rank_l != r { rank_l as f64 - r as f64 } else { residual },
            });
        }
    }

    let betas = vecm.pi_mats.iter().map(|pi| pi.transpose() * &alpha).collect();
    let mu = alpha.transpose() * c;
    let mu_bars = vecm.pi_offsets.iter().map(|pb| alpha.transpose() * pb).collect();
    Ok(CrscFactors {
        r,
        alpha,
        alpha_perp,
        betas,
        mu,
        mu_bars,
    })
}

/// Invertibility diagnostics for the contemporaneous map `f_0`.
#[derive(Debug, Clone)]
pub struct HomeoReport {
    pub ok: bool,
    /// `det Phi_0^(l)` per regime (single entry for linear/smoothed).
    pub dets: Vec<f64>,
}

/// Checks that `f_0` is a homeomorphism.
///
/// Linear and smoothed families need a nonsingular `Phi_0`; the piecewise
/// families need every `det Phi_0^(l)` nonzero and of one common sign.
pub fn check_homeomorphism(model: &ModelSpec) -> HomeoReport {
    let mats: Vec<&DMatrix<f64>> = match &model.family {
        FamilyVariant::Linear { phi } => vec![&phi[0]],
        FamilyVariant::ThresholdAffine(t) => t.mats[0].iter().collect(),
        FamilyVariant::PiecewiseLinear(c) => c.mats[0].iter().collect(),
        FamilyVariant::SmoothedThreshold { base, .. } => vec![&base.mats[0][0]],
    };
    let dets: Vec<f64> = mats.iter().map(|m| m.determinant()).collect();
    let nonsingular = mats.iter().all(|m| {
        let sv = (*m).clone().singular_values();
        sv[sv.len() - 1] > 1e-12 * sv[0].max(1e-300)
    });
    let sign0 = dets[0].signum();
    let ok = nonsingular && dets.iter().all(|d| d.signum() == sign0 && *d != 0.0);
    HomeoReport { ok, dets }
}

/// Overall verdict of the class check.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Member,
    /// All conditions hold but `r = p`: a stationary system with no common
    /// trends. Trend-side operations reject these models.
    MemberStationary,
    NotMember(String),
    Inconclusive(String),
}

impl Verdict {
    pub fn is_member(&self) -> bool {
        matches!(self, Verdict::Member | Verdict::MemberStationary)
    }

    fn tag(&self) -> &'static str {
        match self {
            Verdict::Member => "member",
            Verdict::MemberStationary => "member_stationary",
            Verdict::NotMember(_) => "not_member",
            Verdict::Inconclusive(_) => "inconclusive",
        }
    }
}

/// Full membership report; serializable to JSON for the CLI.
#[derive(Debug, Clone)]
pub struct MembershipReport {
    pub r: usize,
    pub q: usize,
    pub alpha: DMatrix<f64>,
    pub alpha_perp: DMatrix<f64>,
    pub mu: DVector<f64>,
    pub betas: Vec<DMatrix<f64>>,
    pub mu_bars: Vec<DVector<f64>>,
    /// `max_l ||beta^(l)||` over the stacked loadings.
    pub b_bar: f64,
    /// JSR bracket of the stacked transition family; absent when the
    /// factorization or the inverse of some `Phi_0^(l)` failed first.
    pub jsr: Option<JsrBracket>,
    pub homeo_ok: bool,
    pub homeo_dets: Vec<f64>,
    pub verdict: Verdict,
}

impl MembershipReport {
    /// Guards the trend-side operations: members only, and `r < p`.
    pub(crate) fn require_trend_structure(&self) -> Result<()> {
        match &self.verdict {
            Verdict::Member => Ok(()),
            Verdict::MemberStationary => Err(Error::Stationary),
            Verdict::NotMember(reason) | Verdict::Inconclusive(reason) => {
                Err(Error::NotMember(reason.clone()))
            }
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mat = |m: &DMatrix<f64>| -> serde_json::Value {
            json!((0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect::<Vec<_>>())
                .collect::<Vec<_>>())
        };
        let vec = |v: &DVector<f64>| -> serde_json::Value { json!(v.iter().copied().collect::<Vec<_>>()) };
        let reason = match &self.verdict {
            Verdict::NotMember(s) | Verdict::Inconclusive(s) => json!(s),
            _ => serde_json::Value::Null,
        };
        json!({
            "verdict": { "type": self.verdict.tag(), "reason": reason },
            "r": self.r,
            "q": self.q,
            "alpha": mat(&self.alpha),
            "alpha_perp": mat(&self.alpha_perp),
            "mu": vec(&self.mu),
            "betas": self.betas.iter().map(mat).collect::<Vec<_>>(),
            "mu_bars": self.mu_bars.iter().map(&vec).collect::<Vec<_>>(),
            "b_bar": self.b_bar,
            "jsr": self.jsr.as_ref().map(|b| json!({
                "lower": b.lower, "upper": b.upper, "depth": b.depth, "certified": b.certified,
            })),
            "homeomorphism": { "ok": self.homeo_ok, "dets": self.homeo_dets },
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("report serializes")
    }
}

/// Runs the full class check at threshold `rho_bar`, exploring matrix
/// products up to `depth` for the JSR bracket.
///
/// Smoothed models are checked through their base model's vertex family,
/// which smoothing leaves unchanged.
pub fn check_membership(model: &ModelSpec, rho_bar: f64, depth: usize) -> Result<MembershipReport> {
    let vecm = derive_vecm(model);
    let tol = default_rank_tol(model.p, vecm.regimes);
    let homeo = check_homeomorphism(model);
    let mut reasons: Vec<String> = Vec::new();
    if !homeo.ok {
        reasons.push(format!(
            "f_0 is not a homeomorphism (det Phi_0 per regime: {:?})",
            homeo.dets
        ));
    }

    let factors = match factorize_crsc(&vecm, &model.c, tol) {
        Ok(f) => Some(f),
        Err(e) => {
            reasons.push(e.to_string());
            None
        }
    };

    let (r, alpha, alpha_perp, betas, mu, mu_bars) = match &factors {
        Some(f) => (
            f.r,
            f.alpha.clone(),
            f.alpha_perp.clone(),
            f.betas.clone(),
            f.mu.clone(),
            f.mu_bars.clone(),
        ),
        None => (
            0,
            DMatrix::zeros(model.p, 0),
            DMatrix::identity(model.p, model.p),
            Vec::new(),
            DVector::zeros(0),
            Vec::new(),
        ),
    };

    let mut b_bar = 0.0;
    let mut jsr_bracket = None;
    let mut jsr_ok = false;
    if factors.is_some() {
        match BoldMatrices::build(&vecm, &alpha, &alpha_perp) {
            Ok(bold) => {
                b_bar = bold
                    .beta_t
                    .iter()
                    .map(linalg::spectral_norm)
                    .fold(0.0, f64::max);
                let family = bold.transition_set();
                let (verdict, bracket) = jsr_decision(&family, rho_bar, depth)?;
                match verdict {
                    JsrVerdict::Below => jsr_ok = true,
                    JsrVerdict::Above => reasons.push(format!(
                        "stacked transition family has JSR >= {rho_bar} (lower bound {:.6})",
                        bracket.lower
                    )),
                    JsrVerdict::Inconclusive => reasons.push(format!(
                        "JSR bracket [{:.6}, {:.6}] does not settle rho_bar = {rho_bar} at depth {depth}",
                        bracket.lower, bracket.upper
                    )),
                }
                jsr_bracket = Some(bracket);
            }
            Err(e) => reasons.push(format!("stacked loadings not computable: {e}")),
        }
    }

    let verdict = if reasons.is_empty() && jsr_ok {
        if r == model.p {
            Verdict::MemberStationary
        } else {
            Verdict::Member
        }
    } else if reasons.len() == 1
        && jsr_bracket
            .as_ref()
            .is_some_and(|b| b.lower < rho_bar && (!b.certified || b.upper >= rho_bar))
        && homeo.ok
        && factors.is_some()
    {
        Verdict::Inconclusive(reasons.remove(0))
    } else {
        Verdict::NotMember(reasons.join("; "))
    };

    Ok(MembershipReport {
        r,
        q: model.p - r,
        alpha,
        alpha_perp,
        mu,
        betas,
        mu_bars,
        b_bar,
        jsr: jsr_bracket,
        homeo_ok: homeo.ok,
        homeo_dets: homeo.dets,
        verdict,
    })
}

/// Root diagnostics for linear models.
#[derive(Debug, Clone)]
pub struct LinearDiagnostics {
    /// Roots of the autoregressive polynomial (reciprocal companion
    /// eigenvalues); companion eigenvalues at zero correspond to roots at
    /// infinity and are counted separately.
    pub roots: Vec<Complex<f64>>,
    pub infinite_roots: usize,
    /// Companion eigenvalues themselves (useful for multiset comparisons).
    pub companion_eigenvalues: Vec<Complex<f64>>,
    /// Number of roots within 1e-7 of 1.
    pub unit_roots: usize,
    /// `H = Phi_0 - sum_j Gamma_j`.
    pub h: DMatrix<f64>,
}

/// Computes the autoregressive roots of a linear model as reciprocals of
/// the companion-matrix eigenvalues of `Phi_0^{-1} Phi(lambda)`.
pub fn linear_diagnostics(model: &ModelSpec) -> Result<LinearDiagnostics> {
    let FamilyVariant::Linear { phi } = &model.family else {
        return Err(Error::FamilyMismatch(model.family.name()));
    };
    let (p, k) = (model.p, model.k);
    let phi0_inv = linalg::inverse(&phi[0], "Phi_0")?;
    let mut companion = DMatrix::zeros(p * k, p * k);
    for i in 1..=k {
        let a = &phi0_inv * &phi[i];
        companion.view_mut((0, (i - 1) * p), (p, p)).copy_from(&a);
    }
    for b in 1..k {
        companion
            .view_mut((b * p, (b - 1) * p), (p, p))
            .copy_from(&DMatrix::identity(p, p));
    }
    let mut eigs: Vec<Complex<f64>> = companion.complex_eigenvalues().iter().copied().collect();
    eigs.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    let mut roots = Vec::new();
    let mut infinite_roots = 0;
    for e in &eigs {
        if e.norm() > 1e-12 {
            roots.push(Complex::new(1.0, 0.0) / e);
        } else {
            infinite_roots += 1;
        }
    }
    roots.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    let unit_roots = roots.iter().filter(|r| (*r - Complex::new(1.0, 0.0)).norm() <= 1e-7).count();
    let vecm = derive_vecm(model);
    let h = vecm.h_mats().remove(0);
    Ok(LinearDiagnostics {
        roots,
        infinite_roots,
        companion_eigenvalues: eigs,
        unit_roots,
        h,
    })
}
