//! Error-correction form and the stacked state representation.
//!
//! For the VAR(k) `f0(z_t) = c + sum_i f_i(z_{t-i}) + u_t`, define
//! `gamma_j(z) = -sum_{i=j+1..=k} f_i(z)` and
//! `pi(z) = -f0(z) + sum_{i=1..=k} f_i(z)`. The model is equivalent to the
//! error-correction system
//!
//! ```text
//! [ d f0(z_t); d zeta_{t-1} ] = bc + bpi(z_{t-1}) + bD bz_{t-1} + bu_t
//! ```
//!
//! in the state `bz_t = (z_t, zeta_{t-1})` with
//! `zeta_{j,t} = sum_{i=j..k-1} gamma_i(z_{t-i+j})`, `D` the block
//! bidiagonal matrix with `-I` on the diagonal and `I` above it, and `D_1`
//! its first `p` rows. [`step_identity_check`] evaluates both sides of this
//! identity from raw lag-map evaluations as an algebraic self-test.
//!
//! For the piecewise families every derived map is affine per regime; the
//! per-regime data lives in [`VecmForm`] and feeds the membership check and
//! the coordinate map `chi`. A smoothed model shares the derived data of its
//! base model.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{FamilyVariant, ModelSpec};

/// Per-regime affine data of the derived maps, plus the stacking matrices.
///
/// Indexing: `gamma_mats[j-1][l]` is `Gamma_j` on regime `l+1` for
/// `j in 1..k`; `pi_mats[l]` is `Pi` on regime `l+1`. For the linear family
/// everything collapses to a single regime. All offsets vanish for the
/// linear and conic families.
#[derive(Debug, Clone)]
pub struct VecmForm {
    pub p: usize,
    pub k: usize,
    pub regimes: usize,
    pub gamma_offsets: Vec<Vec<DVector<f64>>>,
    pub gamma_mats: Vec<Vec<DMatrix<f64>>>,
    pub pi_offsets: Vec<DVector<f64>>,
    pub pi_mats: Vec<DMatrix<f64>>,
    /// `Phi_0` per regime (needed to build the stacked loadings).
    pub phi0_mats: Vec<DMatrix<f64>>,
    /// `phi_0` offsets per regime.
    pub phi0_offsets: Vec<DVector<f64>>,
    /// `p(k-1) x p(k-1)` block bidiagonal matrix (empty when k = 1).
    pub d: DMatrix<f64>,
    /// First `p` rows of `d` (0 x 0 stand-in when k = 1).
    pub d1: DMatrix<f64>,
    /// Selector `E = [I_p; 0]` of size `p(k-1) x p`.
    pub e: DMatrix<f64>,
}

impl VecmForm {
    /// `-D^{-1}` is the all-identity block upper-triangular matrix; this
    /// returns `D^{-1}` built directly from that structure.
    pub fn d_inverse(&self) -> DMatrix<f64> {
        let (p, k) = (self.p, self.k);
        let n = p * (k.saturating_sub(1));
        let mut inv = DMatrix::zeros(n, n);
        for bi in 0..k.saturating_sub(1) {
            for bj in bi..k.saturating_sub(1) {
                for d in 0..p {
                    inv[(bi * p + d, bj * p + d)] = -1.0;
                }
            }
        }
        inv
    }

    /// `H^(l) = Phi_0^(l) - sum_{j=1..k-1} Gamma_j^(l)`.
    pub fn h_mats(&self) -> Vec<DMatrix<f64>> {
        (0..self.regimes)
            .map(|l| {
                let mut h = self.phi0_mats[l].clone();
                for j in 0..self.k - 1 {
                    h -= &self.gamma_mats[j][l];
                }
                h
            })
            .collect()
    }

    /// Offsets of the per-regime affine map `h`.
    pub fn h_offsets(&self) -> Vec<DVector<f64>> {
        (0..self.regimes)
            .map(|l| {
                let mut h = self.phi0_offsets[l].clone();
                for j in 0..self.k - 1 {
                    h -= &self.gamma_offsets[j][l];
                }
                h
            })
            .collect()
    }
}

/// Stacked state `bz_t = (z_t, zeta_{t-1})`.
#[derive(Debug, Clone)]
pub struct BoldState {
    pub z: DVector<f64>,
    pub zeta: DVector<f64>,
}

impl BoldState {
    pub fn stacked(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.z.len() + self.zeta.len());
        v.rows_mut(0, self.z.len()).copy_from(&self.z);
        v.rows_mut(self.z.len(), self.zeta.len()).copy_from(&self.zeta);
        v
    }
}

/// Derives the error-correction data from a validated model.
///
/// The smoothed family returns its base model's per-regime data: smoothing
/// leaves the loadings and the stacked vertex set unchanged.
pub fn derive_vecm(model: &ModelSpec) -> VecmForm {
    let (p, k) = (model.p, model.k);
    let l = model.regimes();

    // Collect per-lag, per-regime pieces in a uniform layout.
    let (offsets, mats): (Vec<Vec<DVector<f64>>>, Vec<Vec<DMatrix<f64>>>) = match &model.family {
        FamilyVariant::Linear { phi } => (
            phi.iter().map(|_| vec![DVector::zeros(p)]).collect(),
            phi.iter().map(|m| vec![m.clone()]).collect(),
        ),
        FamilyVariant::ThresholdAffine(t) | FamilyVariant::SmoothedThreshold { base: t, .. } => {
            (t.offsets.clone(), t.mats.clone())
        }
        FamilyVariant::PiecewiseLinear(c) => (
            c.mats
                .iter()
                .map(|per| per.iter().map(|_| DVector::zeros(p)).collect())
                .collect(),
            c.mats.clone(),
        ),
    };

    let mut gamma_offsets = Vec::with_capacity(k - 1);
    let mut gamma_mats = Vec::with_capacity(k - 1);
    for j in 1..k {
        let mut per_off = Vec::with_capacity(l);
        let mut per_mat = Vec::with_capacity(l);
        for ell in 0..l {
            let mut o = DVector::zeros(p);
            let mut m = DMatrix::zeros(p, p);
            for i in (j + 1)..=k {
                o -= &offsets[i][ell];
                m -= &mats[i][ell];
            }
            per_off.push(o);
            per_mat.push(m);
        }
        gamma_offsets.push(per_off);
        gamma_mats.push(per_mat);
    }

    let mut pi_offsets = Vec::with_capacity(l);
    let mut pi_mats = Vec::with_capacity(l);
    for ell in 0..l {
        let mut o = -offsets[0][ell].clone();
        let mut m = -mats[0][ell].clone();
        for i in 1..=k {
            o += &offsets[i][ell];
            m += &mats[i][ell];
        }
        pi_offsets.push(o);
        pi_mats.push(m);
    }

    let n = p * (k - 1);
    let mut d = DMatrix::zeros(n, n);
    for b in 0..k.saturating_sub(1) {
        for i in 0..p {
            d[(b * p + i, b * p + i)] = -1.0;
            if b + 1 < k - 1 {
                d[(b * p + i, (b + 1) * p + i)] = 1.0;
            }
        }
    }
    let d1 = d.rows(0, if k > 1 { p } else { 0 }).into_owned();
    let mut e = DMatrix::zeros(n, p);
    if k > 1 {
        e.view_mut((0, 0), (p, p)).copy_from(&DMatrix::identity(p, p));
    }

    VecmForm {
        p,
        k,
        regimes: l,
        gamma_offsets,
        gamma_mats,
        pi_offsets,
        pi_mats,
        phi0_mats: mats[0].clone(),
        phi0_offsets: offsets[0].clone(),
        d,
        d1,
        e,
    }
}

/// `zeta_t` stacked from a window `(z_t, z_{t-1}, ...)`; only the first
/// `k - 1` entries are read.
pub(crate) fn zeta_from(model: &ModelSpec, window: &[DVector<f64>]) -> Result<DVector<f64>> {
    let (p, k) = (model.p, model.k);
    if window.len() + 1 < k {
        return Err(Error::DimensionMismatch(format!(
            "zeta window has {} entries, need k - 1 = {}",
            window.len(),
            k - 1
        )));
    }
    if window.iter().any(|z| z.len() != p) {
        return Err(Error::DimensionMismatch("window entry has wrong dimension".into()));
    }
    let mut zeta = DVector::zeros(p * (k - 1));
    for j in 1..k {
        let mut s = DVector::zeros(p);
        for i in j..k {
            // zeta_{j,t} sums gamma_i(z_{t-i+j}); window[i-j] = z_{t-(i-j)}.
            s += model.eval_gamma(i, &window[i - j]);
        }
        zeta.rows_mut((j - 1) * p, p).copy_from(&s);
    }
    Ok(zeta)
}

/// Builds `bz_t` from the window `(z_t, ..., z_{t-k+1})` (newest first).
pub fn build_state(model: &ModelSpec, window: &[DVector<f64>]) -> Result<BoldState> {
    if window.len() < model.k {
        return Err(Error::DimensionMismatch(format!(
            "state window has {} entries, need k = {}",
            window.len(),
            model.k
        )));
    }
    Ok(BoldState {
        z: window[0].clone(),
        zeta: zeta_from(model, window)?,
    })
}

/// Evaluates both sides of the stacked error-correction identity at one
/// step and returns the discrepancy norm.
///
/// `window` holds `(z_t, z_{t-1}, ..., z_{t-k})` (newest first, length
/// k + 1); `u` is the shock at time t. The identity is algebraic, so the
/// result is zero up to round-off for any model and any window.
pub fn step_identity_check(model: &ModelSpec, window: &[DVector<f64>], u: &DVector<f64>) -> Result<f64> {
    let (p, k) = (model.p, model.k);
    if window.len() != k + 1 {
        return Err(Error::DimensionMismatch(format!(
            "identity window has {} entries, need k + 1 = {}",
            window.len(),
            k + 1
        )));
    }
    let z_t = &window[0];
    let z_prev = &window[1];

    // zeta_{t-1} from (z_{t-1}, ...) and zeta_{t-2} from (z_{t-2}, ...).
    let zeta_prev = zeta_from(model, &window[1..])?;
    let zeta_prev2 = zeta_from(model, &window[2..])?;

    let lhs_top = model.eval_f(0, z_t) - model.eval_f(0, z_prev);
    let lhs_bottom = &zeta_prev - &zeta_prev2;

    let vecm = derive_vecm(model);
    let mut rhs_top = &model.c + model.eval_pi(z_prev) + u;
    if k > 1 {
        rhs_top += model.eval_gamma(1, z_prev) + &vecm.d1 * &zeta_prev2;
    }
    let mut rhs_bottom = DVector::zeros(p * (k - 1));
    for j in 1..k {
        rhs_bottom
            .rows_mut((j - 1) * p, p)
            .copy_from(&model.eval_gamma(j, z_prev));
    }
    rhs_bottom += &vecm.d * &zeta_prev2;

    let res_sq = (lhs_top - rhs_top).norm_squared() + (lhs_bottom - rhs_bottom).norm_squared();
    Ok(res_sq.sqrt())
}

/// Stacked loadings of the state representation.
///
/// `beta_t[l]` stores the transposed loading of regime `l+1`,
/// `[[beta' Phi_0^{-1}, 0], [Gamma Phi_0^{-1}, D]]`, which is the layout in
/// which it is always applied. `alpha` and `alpha_perp` are the stacked
/// counterparts of the factorized loadings.
#[derive(Debug, Clone)]
pub struct BoldMatrices {
    pub alpha: DMatrix<f64>,
    pub alpha_perp: DMatrix<f64>,
    pub beta_t: Vec<DMatrix<f64>>,
    pub d0: DMatrix<f64>,
}

impl BoldMatrices {
    /// Assembles the stacked matrices from the derived form and a
    /// factorization `Pi^(l) = alpha beta^(l)'` with orthonormal `alpha`.
    pub fn build(
        vecm: &VecmForm,
        alpha: &DMatrix<f64>,
        alpha_perp: &DMatrix<f64>,
    ) -> Result<BoldMatrices> {
        let (p, k) = (vecm.p, vecm.k);
        let r = alpha.ncols();
        let n = p * (k - 1);

        let e_t = vecm.e.transpose();
        let bold_alpha = linalg::block2x2(
            alpha,
            &e_t,
            &DMatrix::zeros(n, r),
            &DMatrix::identity(n, n),
        );
        let mut stack = DMatrix::zeros(p * k, p);
        stack.view_mut((0, 0), (p, p)).copy_from(&DMatrix::identity(p, p));
        stack.view_mut((p, 0), (n, p)).copy_from(&(-&vecm.e));
        let bold_alpha_perp = &stack * alpha_perp;

        let mut beta_t = Vec::with_capacity(vecm.regimes);
        for l in 0..vecm.regimes {
            let phi0_inv = linalg::inverse(&vecm.phi0_mats[l], &format!("Phi_0 regime {}", l + 1))?;
            let beta_l_t = alpha.transpose() * &vecm.pi_mats[l]; // r x p
            let mut gamma_stack = DMatrix::zeros(n, p);
            for j in 0..k - 1 {
                gamma_stack
                    .view_mut((j * p, 0), (p, p))
                    .copy_from(&vecm.gamma_mats[j][l]);
            }
            beta_t.push(linalg::block2x2(
                &(&beta_l_t * &phi0_inv),
                &DMatrix::zeros(r, n),
                &(&gamma_stack * &phi0_inv),
                &vecm.d,
            ));
        }

        let d0 = linalg::block2x2(
            &DMatrix::zeros(r, p),
            &DMatrix::zeros(r, n),
            &DMatrix::zeros(n, p),
            &vecm.d,
        );

        Ok(BoldMatrices {
            alpha: bold_alpha,
            alpha_perp: bold_alpha_perp,
            beta_t,
            d0,
        })
    }

    /// The matrix family `{I + beta^(l)' alpha}` whose joint spectral radius
    /// governs the stability of the equilibrium errors.
    pub fn transition_set(&self) -> Vec<DMatrix<f64>> {
        let m = self.alpha.ncols();
        self.beta_t
            .iter()
            .map(|bt| DMatrix::identity(m, m) + bt * &self.alpha)
            .collect()
    }
}
