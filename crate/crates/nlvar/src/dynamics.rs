//! Path simulation: inversion of the contemporaneous map, shock generation,
//! and forward iteration of the model.
//!
//! A path is generated by `z_t = f0^{-1}(c + sum_i f_i(z_{t-i}) + u_t)`.
//! Structural shocks enter through an optional orthogonal rotation
//! `u_t = Upsilon eps_t`.
//!
//! Windows are always passed in companion order: `window[0]` is the newest
//! observation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{FamilyVariant, ModelSpec, RegimeIndex, ThresholdData};

/// Relative slack when accepting a per-regime inverse candidate, and the
/// wider retry used before giving up. Ties at a boundary resolve to the
/// smallest regime; the candidate values coincide there by continuity.
const ACCEPT_SLACK: f64 = 1e-9;
const RETRY_SLACK: f64 = 1e-6;

/// Shock sequence specification for [`simulate`].
#[derive(Debug, Clone)]
pub enum ShockPlan {
    /// Explicit sequence of length-p vectors.
    Given(Vec<DVector<f64>>),
    /// i.i.d. mean-zero Gaussian vectors with covariance `sigma`,
    /// reproducible from `seed` (ChaCha12 counter RNG).
    Gaussian {
        sigma: DMatrix<f64>,
        seed: u64,
        t: usize,
    },
    /// All shocks zero except `u` at the 1-based time `tau`.
    ImpulseThenZero {
        u: DVector<f64>,
        tau: usize,
        t: usize,
    },
}

/// A simulated path together with its initial window and realized shocks.
#[derive(Debug, Clone)]
pub struct PathResult {
    /// Initial window in companion order: `window0[0] = z_0`, ...,
    /// `window0[k-1] = z_{-k+1}`.
    pub window0: Vec<DVector<f64>>,
    /// `z_1 .. z_T`.
    pub path: Vec<DVector<f64>>,
    /// Realized `u_1 .. u_T` (after any structural rotation).
    pub shocks: Vec<DVector<f64>>,
}

impl PathResult {
    pub fn len(&self) -> usize {
        self.path.len()
    }

    pub fn is_empty(&self) -> bool {
        self.path.is_empty()
    }

    /// `z_s` for `s` in `-k+1 ..= T`.
    pub fn z_at(&self, s: i64) -> &DVector<f64> {
        if s >= 1 {
            &self.path[(s - 1) as usize]
        } else {
            &self.window0[(-s) as usize]
        }
    }

    /// Window `(z_s, ..., z_{s-k+1})` in companion order.
    pub fn window_at(&self, s: i64, k: usize) -> Vec<DVector<f64>> {
        (0..k as i64).map(|i| self.z_at(s - i).clone()).collect()
    }
}

/// Inverts the contemporaneous map `f_0` at `y`.
///
/// Linear and smoothed families solve one affine system. Threshold-affine
/// models use the closed form: the image partition is again a family of
/// bands, `b'y in (nu_{l-1}, nu_l]` with `b' = a' (Phi_0^(1))^{-1}` and
/// `nu_l = (det Phi_0^(l) / det Phi_0^(1)) tau_l + b' phibar_0^(l)`, so one
/// band lookup selects the regime whose affine piece to invert. Conic
/// models invert each regime's matrix and accept the candidate that lands
/// in its own regime.
pub fn f0_inverse(model: &ModelSpec, y: &DVector<f64>) -> Result<DVector<f64>> {
    if y.len() != model.p {
        return Err(Error::DimensionMismatch(format!(
            "point has length {}, model has p = {}",
            y.len(),
            model.p
        )));
    }
    match &model.family {
        FamilyVariant::Linear { phi } => linalg::solve(&phi[0], y, "Phi_0"),
        FamilyVariant::SmoothedThreshold { base, .. } => {
            // Shared Phi_0 plus continuity make f_0 affine with a common
            // offset, which the kernel (mean zero) leaves unchanged.
            let rhs = y - &base.offsets[0][0];
            linalg::solve(&base.mats[0][0], &rhs, "Phi_0")
        }
        FamilyVariant::ThresholdAffine(t) => threshold_f0_inverse(t, y),
        FamilyVariant::PiecewiseLinear(c) => {
            let l = c.regimes();
            for pass in [ACCEPT_SLACK, RETRY_SLACK] {
                for ell in 0..l {
                    let Ok(z) = linalg::solve(&c.mats[0][ell], y, "Phi_0 regime") else {
                        continue;
                    };
                    let slack = pass * (1.0 + z.norm());
                    if model.regime_contains(RegimeIndex::new(ell + 1), &z, slack) {
                        return Ok(z);
                    }
                }
            }
            Err(Error::NoRegimeAccepts(format!("f0_inverse at |y| = {:.3}", y.norm())))
        }
    }
}

fn threshold_f0_inverse(t: &ThresholdData, y: &DVector<f64>) -> Result<DVector<f64>> {
    let l = t.regimes();
    let phi1_inv = linalg::inverse(&t.mats[0][0], "Phi_0 regime 1")?;
    let det1 = t.mats[0][0].determinant();
    if det1 == 0.0 {
        return Err(Error::Singular("Phi_0 regime 1".into()));
    }
    let b = phi1_inv.transpose() * &t.a;
    // Upper band edges of the image partition.
    let nu: Vec<f64> = (0..l - 1)
        .map(|ell| {
            let det_l = t.mats[0][ell].determinant();
            (det_l / det1) * t.tau[ell] + b.dot(&t.offsets[0][ell])
        })
        .collect();
    let x = b.dot(y);
    let ell = nu.partition_point(|v| *v < x);
    let rhs = y - &t.offsets[0][ell];
    linalg::solve(&t.mats[0][ell], &rhs, "Phi_0 selected regime")
}

/// Draws `t` i.i.d. N(0, sigma) vectors, reproducible from `seed`.
///
/// Sampling is ChaCha12-based (`rand_chacha`), a counter-mode generator
/// with documented, stable output across platforms.
pub fn gaussian_shocks(sigma: &DMatrix<f64>, t: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    let p = sigma.nrows();
    if sigma.ncols() != p {
        return Err(Error::DimensionMismatch("covariance must be square".into()));
    }
    let sym = 0.5 * (sigma + sigma.transpose());
    let chol = nalgebra::Cholesky::new(sym).ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    Ok((0..t)
        .map(|_| {
            let eps = DVector::from_fn(p, |_, _| rng.sample(StandardNormal));
            &l * eps
        })
        .collect())
}

fn realize_shocks(model: &ModelSpec, plan: &ShockPlan) -> Result<Vec<DVector<f64>>> {
    let p = model.p;
    let eps = match plan {
        ShockPlan::Given(seq) => seq.clone(),
        ShockPlan::Gaussian { sigma, seed, t } => {
            if *t < 1 {
                return Err(Error::DimensionMismatch("horizon T must be >= 1".into()));
            }
            if sigma.nrows() != p {
                return Err(Error::DimensionMismatch(format!(
                    "covariance is {}x{}, model has p = {p}",
                    sigma.nrows(),
                    sigma.ncols()
                )));
            }
            gaussian_shocks(sigma, *t, *seed)?
        }
        ShockPlan::ImpulseThenZero { u, tau, t } => {
            if *t < 1 || *tau < 1 || tau > t {
                return Err(Error::DimensionMismatch(format!(
                    "impulse time tau = {tau} must satisfy 1 <= tau <= T = {t}"
                )));
            }
            let mut seq = vec![DVector::zeros(p); *t];
            seq[*tau - 1] = u.clone();
            seq
        }
    };
    if eps.iter().any(|e| e.len() != p) {
        return Err(Error::DimensionMismatch("shock has wrong dimension".into()));
    }
    Ok(eps)
}

/// Simulates a path from `window0` (companion order, length k) under the
/// shock plan. When `upsilon` is given the plan's vectors are treated as
/// structural shocks and rotated, `u_t = Upsilon eps_t`; `Upsilon` must be
/// orthogonal to 1e-10.
pub fn simulate(
    model: &ModelSpec,
    window0: &[DVector<f64>],
    plan: &ShockPlan,
    upsilon: Option<&DMatrix<f64>>,
) -> Result<PathResult> {
    let (p, k) = (model.p, model.k);
    if window0.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "initial window has {} entries, need k = {k}",
            window0.len()
        )));
    }
    if window0.iter().any(|z| z.len() != p) {
        return Err(Error::DimensionMismatch("window entry has wrong dimension".into()));
    }
    if let Some(ups) = upsilon {
        let defect = (ups.transpose() * ups - DMatrix::identity(p, p)).norm();
        if defect > 1e-10 {
            return Err(Error::NotOrthogonal(defect));
        }
    }
    let eps = realize_shocks(model, plan)?;
    let shocks: Vec<DVector<f64>> = match upsilon {
        Some(ups) => eps.iter().map(|e| ups * e).collect(),
        None => eps,
    };

    let mut window: Vec<DVector<f64>> = window0.to_vec();
    let mut path = Vec::with_capacity(shocks.len());
    for (t, u) in shocks.iter().enumerate() {
        let mut rhs = model.c.clone() + u;
        for i in 1..=k {
            rhs += model.eval_f(i, &window[i - 1]);
        }
        let z = f0_inverse(model, &rhs)
            .map_err(|e| Error::NoRegimeAccepts(format!("t = {}: {e}", t + 1)))?;
        window.rotate_right(1);
        window[0] = z.clone();
        path.push(z);
    }
    Ok(PathResult {
        window0: window0.to_vec(),
        path,
        shocks,
    })
}

/// Residual of the model equation at each step of a simulated path;
/// all entries vanish up to round-off by construction.
pub fn path_residuals(model: &ModelSpec, result: &PathResult) -> Vec<f64> {
    let k = model.k;
    (1..=result.len() as i64)
        .map(|t| {
            let mut rhs = model.c.clone() + &result.shocks[(t - 1) as usize];
            for i in 1..=k {
                rhs += model.eval_f(i, result.z_at(t - i as i64));
            }
            (model.eval_f(0, result.z_at(t)) - rhs).norm()
        })
        .collect()
}
