//! Model specifications: the functional families, their validation, regime
//! lookup, and pointwise evaluation of the lag maps.
//!
//! A model is `f0(z_t) = c + sum_i f_i(z_{t-i}) + u_t` with one coefficient
//! set per lag `i in 0..=k`. Four families are supported:
//!
//! * `Linear` — `f_i(z) = Phi_i z`;
//! * `ThresholdAffine` — regimes are bands `tau_{l-1} < a'z <= tau_l` and
//!   each `f_i` is affine per band;
//! * `PiecewiseLinear` — regimes are unions of sign cones of a basis
//!   `a_1..a_p`, zero offsets;
//! * `SmoothedThreshold` — a threshold-affine model convolved with an
//!   isotropic Gaussian kernel of width `sigma` (shared `Phi_0`).
//!
//! Piecewise families must be continuous across regime boundaries; this is
//! enforced by [`ModelSpec::validate`] and diagnosed in detail by
//! [`validate_continuity`].

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::{norm_cdf, norm_pdf};
use crate::linalg;

/// 1-based regime label, valid against the partition of the owning model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RegimeIndex(usize);

impl RegimeIndex {
    pub(crate) fn new(one_based: usize) -> Self {
        debug_assert!(one_based >= 1);
        RegimeIndex(one_based)
    }

    /// The 1-based label.
    pub fn get(self) -> usize {
        self.0
    }

    /// Zero-based position for container indexing.
    pub fn index0(self) -> usize {
        self.0 - 1
    }
}

/// Coefficient data of a threshold-affine family.
///
/// `offsets[i][l]` and `mats[i][l]` are the affine pieces of `f_i` on regime
/// `l+1`; `tau` holds the `L-1` finite thresholds in strictly increasing
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdData {
    pub a: DVector<f64>,
    pub tau: Vec<f64>,
    pub offsets: Vec<Vec<DVector<f64>>>,
    pub mats: Vec<Vec<DMatrix<f64>>>,
}

impl ThresholdData {
    pub fn regimes(&self) -> usize {
        self.tau.len() + 1
    }

    /// Regime of `z` under the half-open band convention: regime `l` is
    /// `tau_{l-1} < a'z <= tau_l`, so a point exactly on a threshold belongs
    /// to the band below it.
    pub fn regime_of(&self, z: &DVector<f64>) -> RegimeIndex {
        let x = self.a.dot(z);
        let below = self.tau.partition_point(|t| *t < x);
        RegimeIndex::new(below + 1)
    }

    fn regime_contains(&self, ell0: usize, z: &DVector<f64>, slack: f64) -> bool {
        let x = self.a.dot(z);
        let lo = if ell0 == 0 {
            f64::NEG_INFINITY
        } else {
            self.tau[ell0 - 1]
        };
        let hi = if ell0 + 1 == self.regimes() {
            f64::INFINITY
        } else {
            self.tau[ell0]
        };
        x > lo - slack && x <= hi + slack
    }
}

/// Coefficient data of a piecewise-linear (conic) family.
///
/// `basis` holds `a_1..a_p`; `regime_of_cone` maps the sign pattern of
/// `(a_j' z)_j` — a string over `+`/`-`, `+` meaning `a_j' z >= 0` — to a
/// 1-based regime. All offsets are zero by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicData {
    pub basis: Vec<DVector<f64>>,
    pub regime_of_cone: BTreeMap<String, usize>,
    pub mats: Vec<Vec<DMatrix<f64>>>,
}

impl ConicData {
    pub fn regimes(&self) -> usize {
        self.mats.first().map_or(0, |v| v.len())
    }

    fn pattern_of(&self, z: &DVector<f64>) -> String {
        self.basis
            .iter()
            .map(|a| if a.dot(z) >= 0.0 { '+' } else { '-' })
            .collect()
    }

    pub fn regime_of(&self, z: &DVector<f64>) -> RegimeIndex {
        let pat = self.pattern_of(z);
        RegimeIndex::new(self.regime_of_cone[&pat])
    }

    fn regime_contains(&self, ell0: usize, z: &DVector<f64>, slack: f64) -> bool {
        // Coordinates within `slack` of a facet may sit on either side, so
        // every pattern consistent with the slack is tried.
        let vals: Vec<f64> = self.basis.iter().map(|a| a.dot(z)).collect();
        let free: Vec<usize> = (0..vals.len()).filter(|&j| vals[j].abs() <= slack).collect();
        let base: Vec<char> = vals.iter().map(|v| if *v >= 0.0 { '+' } else { '-' }).collect();
        for mask in 0u32..(1 << free.len()) {
            let mut pat = base.clone();
            for (bit, &j) in free.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    pat[j] = if pat[j] == '+' { '-' } else { '+' };
                }
            }
            let key: String = pat.iter().collect();
            if self.regime_of_cone.get(&key) == Some(&(ell0 + 1)) {
                return true;
            }
        }
        false
    }
}

/// The functional family of a model.
#[derive(Debug, Clone, PartialEq)]
pub enum FamilyVariant {
    Linear { phi: Vec<DMatrix<f64>> },
    ThresholdAffine(ThresholdData),
    PiecewiseLinear(ConicData),
    SmoothedThreshold { base: ThresholdData, sigma: f64 },
}

impl FamilyVariant {
    pub fn name(&self) -> &'static str {
        match self {
            FamilyVariant::Linear { .. } => "linear",
            FamilyVariant::ThresholdAffine(_) => "threshold",
            FamilyVariant::PiecewiseLinear(_) => "conic",
            FamilyVariant::SmoothedThreshold { .. } => "smoothed",
        }
    }
}

/// A validated additively time-separable VAR(k) specification.
///
/// Immutable after [`ModelSpec::validate`]; every operation in the crate is
/// a pure function over it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub p: usize,
    pub k: usize,
    pub c: DVector<f64>,
    pub family: FamilyVariant,
}

/// One continuity defect at a regime boundary.
#[derive(Debug, Clone)]
pub struct ContinuityViolation {
    /// Lag index `i` of the offending map.
    pub lag: usize,
    /// Human-readable boundary identifier.
    pub boundary: String,
    /// Frobenius defect of the rank-one matrix condition.
    pub matrix_defect: f64,
    /// Norm defect of the offset condition (zero for conic families).
    pub offset_defect: f64,
}

impl ModelSpec {
    /// Number of regimes `L` (1 for the linear family).
    pub fn regimes(&self) -> usize {
        match &self.family {
            FamilyVariant::Linear { .. } => 1,
            FamilyVariant::ThresholdAffine(t) => t.regimes(),
            FamilyVariant::PiecewiseLinear(c) => c.regimes(),
            FamilyVariant::SmoothedThreshold { base, .. } => base.regimes(),
        }
    }

    /// Structural validation: dimensions, partition well-formedness,
    /// location normalization, and continuity of the piecewise families.
    pub fn validate(&self) -> Result<()> {
        let (p, k) = (self.p, self.k);
        if p < 1 || k < 1 {
            return Err(Error::InvalidModel(format!("need p >= 1 and k >= 1, got p={p}, k={k}")));
        }
        if self.c.len() != p {
            return Err(Error::InvalidModel(format!(
                "intercept has length {}, expected {p}",
                self.c.len()
            )));
        }
        match &self.family {
            FamilyVariant::Linear { phi } => {
                check_lag_count(phi.len(), k)?;
                for (i, m) in phi.iter().enumerate() {
                    check_square(m, p, &format!("family.phi[{i}]"))?;
                }
            }
            FamilyVariant::ThresholdAffine(t) => {
                validate_threshold_data(t, p, k)?;
            }
            FamilyVariant::PiecewiseLinear(cd) => {
                if cd.basis.len() != p {
                    return Err(Error::InvalidModel(format!(
                        "conic basis has {} vectors, expected {p}",
                        cd.basis.len()
                    )));
                }
                for (j, a) in cd.basis.iter().enumerate() {
                    if a.len() != p {
                        return Err(Error::InvalidModel(format!(
                            "family.basis[{j}] has length {}, expected {p}",
                            a.len()
                        )));
                    }
                }
                let bmat = DMatrix::from_fn(p, p, |r, c| cd.basis[c][r]);
                if linalg::numerical_rank(&bmat, 1e-12) != p {
                    return Err(Error::InvalidModel("conic basis does not span R^p".into()));
                }
                let l = cd.regimes();
                if l == 0 {
                    return Err(Error::InvalidModel("conic family has no regimes".into()));
                }
                if cd.regime_of_cone.len() != 1 << p {
                    return Err(Error::InvalidModel(format!(
                        "regime_of_cone has {} entries, expected 2^p = {}",
                        cd.regime_of_cone.len(),
                        1usize << p
                    )));
                }
                for (pat, ell) in &cd.regime_of_cone {
                    if pat.len() != p || pat.chars().any(|c| c != '+' && c != '-') {
                        return Err(Error::InvalidModel(format!("bad sign pattern key {pat:?}")));
                    }
                    if *ell < 1 || *ell > l {
                        return Err(Error::InvalidModel(format!(
                            "regime_of_cone[{pat:?}] = {ell} out of 1..={l}"
                        )));
                    }
                }
                check_lag_count(cd.mats.len(), k)?;
                for (i, per_regime) in cd.mats.iter().enumerate() {
                    if per_regime.len() != l {
                        return Err(Error::InvalidModel(format!(
                            "family.mats[{i}] has {} regimes, expected {l}",
                            per_regime.len()
                        )));
                    }
                    for (j, m) in per_regime.iter().enumerate() {
                        check_square(m, p, &format!("family.mats[{i}][{j}]"))?;
                    }
                }
            }
            FamilyVariant::SmoothedThreshold { base, sigma } => {
                validate_threshold_data(base, p, k)?;
                if !(*sigma > 0.0) {
                    return Err(Error::InvalidModel(format!("kernel width sigma = {sigma} must be > 0")));
                }
                let phi0 = &base.mats[0][0];
                for (l, m) in base.mats[0].iter().enumerate().skip(1) {
                    if (m - phi0).norm() > 1e-12 * (1.0 + phi0.norm()) {
                        return Err(Error::InvalidModel(format!(
                            "smoothed family requires a shared Phi_0; regime {} differs",
                            l + 1
                        )));
                    }
                }
            }
        }
        // Piecewise maps must be continuous across every boundary.
        let scale = self.coefficient_scale();
        let violations = validate_continuity(self, 1e-8 * (1.0 + scale));
        if let Some(v) = violations.first() {
            return Err(Error::InvalidModel(format!(
                "discontinuous f_{} at {} (matrix defect {:.3e}, offset defect {:.3e}); {} violation(s) total",
                v.lag, v.boundary, v.matrix_defect, v.offset_defect, violations.len()
            )));
        }
        Ok(())
    }

    fn coefficient_scale(&self) -> f64 {
        let mats: Vec<&DMatrix<f64>> = match &self.family {
            FamilyVariant::Linear { phi } => phi.iter().collect(),
            FamilyVariant::ThresholdAffine(t) | FamilyVariant::SmoothedThreshold { base: t, .. } => {
                t.mats.iter().flatten().collect()
            }
            FamilyVariant::PiecewiseLinear(c) => c.mats.iter().flatten().collect(),
        };
        mats.iter().map(|m| m.norm()).fold(0.0, f64::max)
    }

    /// Regime of `z` for the piecewise families.
    ///
    /// Errors with [`Error::FamilyMismatch`] for linear and smoothed models,
    /// whose maps are not regime-selected.
    pub fn regime_of(&self, z: &DVector<f64>) -> Result<RegimeIndex> {
        self.check_point(z)?;
        match &self.family {
            FamilyVariant::ThresholdAffine(t) => Ok(t.regime_of(z)),
            FamilyVariant::PiecewiseLinear(c) => Ok(c.regime_of(z)),
            f => Err(Error::FamilyMismatch(f.name())),
        }
    }

    /// Regime membership test with an absolute slack on the defining
    /// inequalities; used by the inverse maps to absorb round-off at
    /// boundaries. Piecewise families only.
    pub(crate) fn regime_contains(&self, ell: RegimeIndex, z: &DVector<f64>, slack: f64) -> bool {
        match &self.family {
            FamilyVariant::ThresholdAffine(t) => t.regime_contains(ell.index0(), z, slack),
            FamilyVariant::PiecewiseLinear(c) => c.regime_contains(ell.index0(), z, slack),
            _ => true,
        }
    }

    /// Margin of `z` to the nearest regime boundary, in the units of the
    /// defining inequalities. Infinite for linear models.
    pub fn boundary_margin(&self, z: &DVector<f64>) -> f64 {
        match &self.family {
            FamilyVariant::Linear { .. } => f64::INFINITY,
            FamilyVariant::ThresholdAffine(t) | FamilyVariant::SmoothedThreshold { base: t, .. } => {
                let x = t.a.dot(z);
                t.tau.iter().map(|tau| (x - tau).abs()).fold(f64::INFINITY, f64::min)
            }
            FamilyVariant::PiecewiseLinear(c) => c
                .basis
                .iter()
                .map(|a| a.dot(z).abs())
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Evaluates the lag map `f_i` at `z`.
    ///
    /// For the smoothed family this is the exact Gaussian convolution of the
    /// base piecewise map, computed in closed form: the regime indicator
    /// depends on the kernel variable `u` only through the scalar `a'u`, so
    /// the convolution reduces to one-dimensional Gaussian slab weights
    /// `w_l = N((tau_l - a'z)/s) - N((tau_{l-1} - a'z)/s)` with `s = sigma
    /// ||a||`, plus the first-moment term of each slab.
    pub fn eval_f(&self, i: usize, z: &DVector<f64>) -> DVector<f64> {
        assert!(i <= self.k, "lag index {i} out of 0..={}", self.k);
        assert_eq!(z.len(), self.p, "point dimension");
        match &self.family {
            FamilyVariant::Linear { phi } => &phi[i] * z,
            FamilyVariant::ThresholdAffine(t) => {
                let l0 = t.regime_of(z).index0();
                &t.offsets[i][l0] + &t.mats[i][l0] * z
            }
            FamilyVariant::PiecewiseLinear(c) => {
                let l0 = c.regime_of(z).index0();
                &c.mats[i][l0] * z
            }
            FamilyVariant::SmoothedThreshold { base, sigma } => smoothed_eval(base, *sigma, i, z),
        }
    }

    /// `gamma_j(z) = -sum_{i=j+1..=k} f_i(z)` for `j in 0..k`.
    pub fn eval_gamma(&self, j: usize, z: &DVector<f64>) -> DVector<f64> {
        assert!(j < self.k, "gamma index {j} out of 0..{}", self.k);
        let mut acc = DVector::zeros(self.p);
        for i in (j + 1)..=self.k {
            acc -= self.eval_f(i, z);
        }
        acc
    }

    /// `pi(z) = -f_0(z) + sum_{i=1..=k} f_i(z)`, the level map of the
    /// error-correction form.
    pub fn eval_pi(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut acc = -self.eval_f(0, z);
        for i in 1..=self.k {
            acc += self.eval_f(i, z);
        }
        acc
    }

    /// `h(z) = f_0(z) - sum_{j=1..k-1} gamma_j(z)`, the map whose
    /// `alpha_perp` projection carries the common trend.
    pub fn eval_h(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut acc = self.eval_f(0, z);
        for j in 1..self.k {
            acc -= self.eval_gamma(j, z);
        }
        acc
    }

    fn check_point(&self, z: &DVector<f64>) -> Result<()> {
        if z.len() != self.p {
            return Err(Error::DimensionMismatch(format!(
                "point has length {}, model has p = {}",
                z.len(),
                self.p
            )));
        }
        Ok(())
    }

    /// Parses and validates a model from its JSON document.
    pub fn from_json_str(s: &str) -> Result<ModelSpec> {
        let raw: raw::RawModel = serde_json::from_str(s).map_err(|e| Error::Schema {
            path: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        let model = raw.into_model()?;
        model.validate()?;
        Ok(model)
    }

    /// Serializes the model to its JSON document (pretty-printed).
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&raw::RawModel::from_model(self)).expect("model serializes")
    }
}

fn check_lag_count(got: usize, k: usize) -> Result<()> {
    if got != k + 1 {
        return Err(Error::InvalidModel(format!(
            "family provides {got} lag coefficient sets, expected k+1 = {}",
            k + 1
        )));
    }
    Ok(())
}

fn check_square(m: &DMatrix<f64>, p: usize, what: &str) -> Result<()> {
    if m.nrows() != p || m.ncols() != p {
        return Err(Error::InvalidModel(format!(
            "{what} is {}x{}, expected {p}x{p}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn validate_threshold_data(t: &ThresholdData, p: usize, k: usize) -> Result<()> {
    if t.a.len() != p {
        return Err(Error::InvalidModel(format!(
            "family.a has length {}, expected {p}",
            t.a.len()
        )));
    }
    if t.a.norm() == 0.0 {
        return Err(Error::InvalidModel("family.a must be nonzero".into()));
    }
    if t.tau.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidModel("family.tau must be strictly increasing".into()));
    }
    let l = t.regimes();
    check_lag_count(t.mats.len(), k)?;
    check_lag_count(t.offsets.len(), k)?;
    for i in 0..=k {
        if t.mats[i].len() != l || t.offsets[i].len() != l {
            return Err(Error::InvalidModel(format!(
                "family pieces at lag {i} cover {} regimes, expected {l}",
                t.mats[i].len()
            )));
        }
        for ell in 0..l {
            check_square(&t.mats[i][ell], p, &format!("family.mats[{i}][{ell}]"))?;
            if t.offsets[i][ell].len() != p {
                return Err(Error::InvalidModel(format!(
                    "family.offsets[{i}][{ell}] has length {}, expected {p}",
                    t.offsets[i][ell].len()
                )));
            }
        }
    }
    Ok(())
}

/// Checks continuity of every `f_i` across every regime boundary and
/// returns the list of defects exceeding `tol`; an empty list certifies a
/// continuous model.
///
/// For threshold bands, continuity at `a'z = tau_{l-1}` forces the matrix
/// difference between adjacent regimes to be rank-one along `a` with a
/// matching offset shift. For conic families the rank-one condition is
/// checked along the normal of every facet shared by cones mapped to
/// distinct regimes.
pub fn validate_continuity(model: &ModelSpec, tol: f64) -> Vec<ContinuityViolation> {
    let mut out = Vec::new();
    match &model.family {
        FamilyVariant::Linear { .. } => {}
        FamilyVariant::ThresholdAffine(t) | FamilyVariant::SmoothedThreshold { base: t, .. } => {
            let aa = t.a.dot(&t.a);
            for i in 0..=model.k {
                for ell in 1..t.regimes() {
                    let dm = &t.mats[i][ell] - &t.mats[i][ell - 1];
                    let n = &dm * &t.a / aa;
                    let matrix_defect = (&dm - &n * t.a.transpose()).norm();
                    let offset_defect =
                        (&t.offsets[i][ell] - &t.offsets[i][ell - 1] + &n * t.tau[ell - 1]).norm();
                    if matrix_defect > tol || offset_defect > tol {
                        out.push(ContinuityViolation {
                            lag: i,
                            boundary: format!("threshold {ell}"),
                            matrix_defect,
                            offset_defect,
                        });
                    }
                }
            }
        }
        FamilyVariant::PiecewiseLinear(c) => {
            let p = model.p;
            let patterns: Vec<&String> = c.regime_of_cone.keys().collect();
            for pat in &patterns {
                for j in 0..p {
                    let mut other: Vec<char> = pat.chars().collect();
                    other[j] = if other[j] == '+' { '-' } else { '+' };
                    let other: String = other.into_iter().collect();
                    // Visit each unordered pair once.
                    if pat.as_str() > other.as_str() {
                        continue;
                    }
                    let l1 = c.regime_of_cone[pat.as_str()];
                    let l2 = c.regime_of_cone[&other];
                    if l1 == l2 {
                        continue;
                    }
                    let aj = &c.basis[j];
                    let aa = aj.dot(aj);
                    for i in 0..=model.k {
                        let dm = &c.mats[i][l1 - 1] - &c.mats[i][l2 - 1];
                        let n = &dm * aj / aa;
                        let matrix_defect = (&dm - &n * aj.transpose()).norm();
                        if matrix_defect > tol {
                            out.push(ContinuityViolation {
                                lag: i,
                                boundary: format!("facet a_{} between cones {pat}/{other}", j + 1),
                                matrix_defect,
                                offset_defect: 0.0,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

/// Closed-form Gaussian smoothing of a threshold-affine lag map.
fn smoothed_eval(base: &ThresholdData, sigma: f64, i: usize, z: &DVector<f64>) -> DVector<f64> {
    let p = z.len();
    let a_norm = base.a.norm();
    let s = sigma * a_norm;
    let x = base.a.dot(z);
    let a_unit_sq = &base.a / (a_norm * a_norm);
    let l = base.regimes();
    let edge = |idx: usize| -> f64 {
        if idx == 0 {
            f64::NEG_INFINITY
        } else if idx == l {
            f64::INFINITY
        } else {
            base.tau[idx - 1]
        }
    };
    let mut acc = DVector::zeros(p);
    for ell in 0..l {
        let lo = (edge(ell) - x) / s;
        let hi = (edge(ell + 1) - x) / s;
        let w = norm_cdf(hi) - norm_cdf(lo);
        let m1 = s * (norm_pdf(lo) - norm_pdf(hi));
        if w == 0.0 && m1 == 0.0 {
            continue;
        }
        acc += &base.offsets[i][ell] * w;
        acc += &base.mats[i][ell] * (z * w + &a_unit_sq * m1);
    }
    acc
}

/// JSON mirror of the model types. Matrices are nested row-major arrays so
/// that fixtures stay editable by hand.
mod raw {
    use super::*;

    #[derive(Serialize, Deserialize)]
    pub(super) struct RawModel {
        pub p: usize,
        pub k: usize,
        pub c: Vec<f64>,
        pub family: RawFamily,
    }

    #[derive(Serialize, Deserialize)]
    pub(super) struct RawThreshold {
        pub a: Vec<f64>,
        pub tau: Vec<f64>,
        pub offsets: Vec<Vec<Vec<f64>>>,
        pub mats: Vec<Vec<Vec<Vec<f64>>>>,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(tag = "type", rename_all = "lowercase")]
    pub(super) enum RawFamily {
        Linear {
            phi: Vec<Vec<Vec<f64>>>,
        },
        Threshold(RawThreshold),
        Conic {
            basis: Vec<Vec<f64>>,
            regime_of_cone: BTreeMap<String, usize>,
            mats: Vec<Vec<Vec<Vec<f64>>>>,
        },
        Smoothed {
            base: RawThreshold,
            sigma: f64,
        },
    }

    fn mat_from(rows: &[Vec<f64>], path: &str) -> Result<DMatrix<f64>> {
        let nr = rows.len();
        let nc = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != nc) {
            return Err(Error::Schema {
                path: path.to_string(),
                message: "ragged matrix rows".into(),
            });
        }
        Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
    }

    fn mat_to(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
            .collect()
    }

    fn threshold_from(t: &RawThreshold, path: &str) -> Result<ThresholdData> {
        let mut offsets = Vec::with_capacity(t.offsets.len());
        for (i, per) in t.offsets.iter().enumerate() {
            offsets.push(per.iter().map(|v| DVector::from_vec(v.clone())).collect());
            let _ = i;
        }
        let mut mats = Vec::with_capacity(t.mats.len());
        for (i, per) in t.mats.iter().enumerate() {
            let mut regs = Vec::with_capacity(per.len());
            for (l, m) in per.iter().enumerate() {
                regs.push(mat_from(m, &format!("{path}.mats[{i}][{l}]"))?);
            }
            mats.push(regs);
        }
        Ok(ThresholdData {
            a: DVector::from_vec(t.a.clone()),
            tau: t.tau.clone(),
            offsets,
            mats,
        })
    }

    fn threshold_to(t: &ThresholdData) -> RawThreshold {
        RawThreshold {
            a: t.a.iter().copied().collect(),
            tau: t.tau.clone(),
            offsets: t
                .offsets
                .iter()
                .map(|per| per.iter().map(|v| v.iter().copied().collect()).collect())
                .collect(),
            mats: t.mats.iter().map(|per| per.iter().map(mat_to).collect()).collect(),
        }
    }

    impl RawModel {
        pub(super) fn into_model(self) -> Result<ModelSpec> {
            let family = match self.family {
                RawFamily::Linear { phi } => {
                    let mut out = Vec::with_capacity(phi.len());
                    for (i, m) in phi.iter().enumerate() {
                        out.push(mat_from(m, &format!("family.phi[{i}]"))?);
                    }
                    FamilyVariant::Linear { phi: out }
                }
                RawFamily::Threshold(t) => {
                    FamilyVariant::ThresholdAffine(threshold_from(&t, "family")?)
                }
                RawFamily::Conic {
                    basis,
                    regime_of_cone,
                    mats,
                } => {
                    let mut out = Vec::with_capacity(mats.len());
                    for (i, per) in mats.iter().enumerate() {
                        let mut regs = Vec::with_capacity(per.len());
                        for (l, m) in per.iter().enumerate() {
                            regs.push(mat_from(m, &format!("family.mats[{i}][{l}]"))?);
                        }
                        out.push(regs);
                    }
                    FamilyVariant::PiecewiseLinear(ConicData {
                        basis: basis.into_iter().map(DVector::from_vec).collect(),
                        regime_of_cone,
                        mats: out,
                    })
                }
                RawFamily::Smoothed { base, sigma } => FamilyVariant::SmoothedThreshold {
                    base: threshold_from(&base, "family.base")?,
                    sigma,
                },
            };
            Ok(ModelSpec {
                p: self.p,
                k: self.k,
                c: DVector::from_vec(self.c),
                family,
            })
        }

        pub(super) fn from_model(m: &ModelSpec) -> RawModel {
            let family = match &m.family {
                FamilyVariant::Linear { phi } => RawFamily::Linear {
                    phi: phi.iter().map(mat_to).collect(),
                },
                FamilyVariant::ThresholdAffine(t) => RawFamily::Threshold(threshold_to(t)),
                FamilyVariant::PiecewiseLinear(c) => RawFamily::Conic {
                    basis: c.basis.iter().map(|v| v.iter().copied().collect()).collect(),
                    regime_of_cone: c.regime_of_cone.clone(),
                    mats: c.mats.iter().map(|per| per.iter().map(mat_to).collect()).collect(),
                },
                FamilyVariant::SmoothedThreshold { base, sigma } => RawFamily::Smoothed {
                    base: threshold_to(base),
                    sigma: *sigma,
                },
            };
            RawModel {
                p: m.p,
                k: m.k,
                c: m.c.iter().copied().collect(),
                family,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn threshold_regime_boundary_belongs_to_lower_band() {
        let m = testkit::ex_t();
        let FamilyVariant::ThresholdAffine(t) = &m.family else { unreachable!() };
        // a'z = 0 sits exactly on tau_1 = 0, so the point is in regime 1.
        let z = DVector::from_vec(vec![0.0, 0.0]);
        assert_eq!(t.regime_of(&z).get(), 1);
        // Positive side of the threshold.
        let z_pos = if t.a[0] != 0.0 {
            DVector::from_vec(vec![0.1 / t.a[0], 0.0])
        } else {
            DVector::from_vec(vec![0.0, 0.1 / t.a[1]])
        };
        assert_eq!(t.regime_of(&z_pos).get(), 2);
    }

    #[test]
    fn simple_threshold_regime_examples() {
        // a = (1, 0), tau = (0): boundary points belong to the band below.
        let m = testkit::threshold_model_2x1(
            &[1.0, 0.0],
            &[0.0],
            &[DMatrix::identity(2, 2), DMatrix::identity(2, 2)],
        );
        let t = match &m.family {
            FamilyVariant::ThresholdAffine(t) => t,
            _ => unreachable!(),
        };
        assert_eq!(t.regime_of(&DVector::from_vec(vec![0.0, 5.0])).get(), 1);
        assert_eq!(t.regime_of(&DVector::from_vec(vec![0.1, 0.0])).get(), 2);
    }

    #[test]
    fn conic_regime_lookup() {
        let m = testkit::ex_c();
        // z1 < 0 maps to regime 2 regardless of z2.
        let z = DVector::from_vec(vec![-1.0, 3.0]);
        assert_eq!(m.regime_of(&z).unwrap().get(), 2);
        let z = DVector::from_vec(vec![2.0, -3.0]);
        assert_eq!(m.regime_of(&z).unwrap().get(), 1);
    }

    #[test]
    fn regime_of_rejects_linear_and_smoothed() {
        let z = DVector::zeros(2);
        assert!(matches!(
            testkit::ex_l().regime_of(&z),
            Err(Error::FamilyMismatch("linear"))
        ));
        assert!(matches!(
            testkit::ex_s().regime_of(&z),
            Err(Error::FamilyMismatch("smoothed"))
        ));
    }

    #[test]
    fn continuity_clean_for_equal_pieces() {
        let m = testkit::threshold_model_2x1(
            &[1.0, 0.0],
            &[0.0],
            &[DMatrix::identity(2, 2), DMatrix::identity(2, 2)],
        );
        assert!(validate_continuity(&m, 1e-10).is_empty());
    }

    #[test]
    fn continuity_accepts_rank_one_shift_and_flags_rank_two() {
        // Construct regime 2 as regime 1 plus n a' with the matching offset
        // shift: no violations.
        let a = DVector::from_vec(vec![1.0, 0.0]);
        let tau = 0.5;
        let phi1 = DMatrix::from_row_slice(2, 2, &[0.4, 0.1, 0.0, 0.7]);
        let n = DVector::from_vec(vec![0.3, -0.2]);
        let phi2 = &phi1 + &n * a.transpose();
        let off1 = DVector::from_vec(vec![0.1, 0.2]);
        let off2 = &off1 - &n * tau;
        let m = ModelSpec {
            p: 2,
            k: 1,
            c: DVector::zeros(2),
            family: FamilyVariant::ThresholdAffine(ThresholdData {
                a: a.clone(),
                tau: vec![tau],
                offsets: vec![
                    vec![DVector::zeros(2), DVector::zeros(2)],
                    vec![off1.clone(), off2.clone()],
                ],
                mats: vec![
                    vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2)],
                    vec![phi1.clone(), phi2.clone()],
                ],
            }),
        };
        assert!(validate_continuity(&m, 1e-10).is_empty());
        m.validate().unwrap();
        // Perturb with a rank-two difference: the jump is real. Confirm by
        // evaluating f_1 on both sides of a boundary point.
        let bad = DMatrix::from_row_slice(2, 2, &[0.0, 0.3, 0.3, 0.0]);
        let mut m2 = m.clone();
        if let FamilyVariant::ThresholdAffine(t) = &mut m2.family {
            t.mats[1][1] = &phi1 + &bad;
        }
        let v = validate_continuity(&m2, 1e-10);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].lag, 1);
        assert!(v[0].boundary.contains("threshold 1"));
        let zb = DVector::from_vec(vec![tau, 1.0]);
        let t2 = match &m2.family {
            FamilyVariant::ThresholdAffine(t) => t,
            _ => unreachable!(),
        };
        let lo = &t2.offsets[1][0] + &t2.mats[1][0] * &zb;
        let hi = &t2.offsets[1][1] + &t2.mats[1][1] * &zb;
        assert!((hi - lo).norm() > 1e-3, "jump must be visible at the boundary");
        assert!(m2.validate().is_err());
    }

    #[test]
    fn eval_f_linear() {
        let m = ModelSpec {
            p: 2,
            k: 1,
            c: DVector::zeros(2),
            family: FamilyVariant::Linear {
                phi: vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2) * 0.3],
            },
        };
        let v = m.eval_f(1, &DVector::from_vec(vec![1.0, 2.0]));
        assert_abs_diff_eq!(v[0], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1], 0.6, epsilon = 1e-15);
    }

    #[test]
    fn eval_f_threshold_matches_hand_selection() {
        let m = testkit::ex_t();
        let t = match &m.family {
            FamilyVariant::ThresholdAffine(t) => t,
            _ => unreachable!(),
        };
        for z in testkit::random_points(2, 64, 7) {
            let ell = t.regime_of(&z).index0();
            let want = &t.offsets[1][ell] + &t.mats[1][ell] * &z;
            assert_abs_diff_eq!((m.eval_f(1, &z) - want).norm(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn zero_maps_to_zero_for_zero_offset_families() {
        let zero = DVector::zeros(2);
        for m in [testkit::ex_l(), testkit::ex_c()] {
            for i in 0..=m.k {
                assert_eq!(m.eval_f(i, &zero).norm(), 0.0, "family {}", m.family.name());
            }
        }
    }

    #[test]
    fn smoothed_tends_to_base_away_from_thresholds() {
        let mut m = testkit::ex_s();
        if let FamilyVariant::SmoothedThreshold { sigma, .. } = &mut m.family {
            *sigma = 1e-3;
        }
        let base = testkit::ex_t();
        let FamilyVariant::SmoothedThreshold { base: t, sigma } = &m.family else { unreachable!() };
        // Pick a point 5 sigma ||a|| beyond the threshold along a.
        let a = &t.a;
        let z = a * (5.0 * sigma * a.norm() / a.dot(a) + 0.3);
        for i in 0..=m.k {
            let d = (m.eval_f(i, &z) - base.eval_f(i, &z)).norm();
            assert!(d <= 1e-6, "lag {i}: smoothed deviates by {d}");
        }
    }

    #[test]
    fn json_roundtrip_identity() {
        for m in [
            testkit::ex_l(),
            testkit::ex_t(),
            testkit::ex_t2(),
            testkit::ex_t3(),
            testkit::ex_t_offset(),
            testkit::ex_c(),
            testkit::ex_s(),
            testkit::ex_s_offset(),
            testkit::ex_p3(),
        ] {
            let s = m.to_json_string();
            let back = ModelSpec::from_json_str(&s).unwrap();
            assert_eq!(m, back, "roundtrip mismatch for {}", m.family.name());
        }
    }

    #[test]
    fn committed_fixture_files_match_their_constructors() {
        let pairs = [
            (include_str!("../fixtures/ex_l.json"), testkit::ex_l()),
            (include_str!("../fixtures/ex_l_mu.json"), testkit::ex_l_mu()),
            (include_str!("../fixtures/ex_t.json"), testkit::ex_t()),
            (include_str!("../fixtures/ex_t2.json"), testkit::ex_t2()),
            (include_str!("../fixtures/ex_t3.json"), testkit::ex_t3()),
            (include_str!("../fixtures/ex_t_offset.json"), testkit::ex_t_offset()),
            (include_str!("../fixtures/ex_c.json"), testkit::ex_c()),
            (include_str!("../fixtures/ex_s.json"), testkit::ex_s()),
            (include_str!("../fixtures/ex_s_offset.json"), testkit::ex_s_offset()),
            (include_str!("../fixtures/ex_s2k.json"), testkit::ex_s2k()),
            (include_str!("../fixtures/ex_p3.json"), testkit::ex_p3()),
            (include_str!("../fixtures/ex_v.json"), testkit::ex_v()),
            (include_str!("../fixtures/ex_t_flip.json"), testkit::ex_t_flip()),
        ];
        for (text, want) in pairs {
            let got = ModelSpec::from_json_str(text).unwrap();
            assert_eq!(got, want, "fixture file out of sync (regenerate with dump_fixture_json)");
        }
    }

    #[test]
    fn specs_are_shareable_across_threads() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<ModelSpec>();
        assert_send_sync::<crate::membership::MembershipReport>();
        assert_send_sync::<crate::vecm::VecmForm>();
    }

    #[test]
    fn schema_error_reports_location() {
        let err = ModelSpec::from_json_str("{\"p\": 2,").unwrap_err();
        assert!(matches!(err, Error::Schema { .. }));
        assert_eq!(err.exit_code(), 2);
    }

    proptest! {
        #[test]
        fn regimes_partition_the_plane(x in -50.0f64..50.0, y in -50.0f64..50.0) {
            // Exactly one regime claims each point, for threshold and conic
            // partitions alike.
            let z = DVector::from_vec(vec![x, y]);
            for m in [testkit::ex_t(), testkit::ex_c()] {
                let ell = m.regime_of(&z).unwrap();
                let claimed: Vec<usize> = (1..=m.regimes())
                    .filter(|l| m.regime_contains(RegimeIndex::new(*l), &z, 0.0))
                    .collect();
                prop_assert_eq!(claimed, vec![ell.get()]);
            }
        }

        #[test]
        fn continuity_holds_at_sampled_boundary_points(t in -20.0f64..20.0) {
            // Points on the threshold: evaluations selected from either side
            // agree within 1e-8 (1 + ||z||).
            let m = testkit::ex_t();
            let td = match &m.family {
                FamilyVariant::ThresholdAffine(td) => td,
                _ => unreachable!(),
            };
            // Solve a'z = tau_1 with z = tau_1 * a/||a||^2 + t * a_perp.
            let a = &td.a;
            let a_perp = DVector::from_vec(vec![-a[1], a[0]]);
            let z = a * (td.tau[0] / a.dot(a)) + &a_perp * t;
            for i in 0..=m.k {
                let lo = &td.offsets[i][0] + &td.mats[i][0] * &z;
                let hi = &td.offsets[i][1] + &td.mats[i][1] * &z;
                prop_assert!((lo - hi).norm() <= 1e-8 * (1.0 + z.norm()));
            }
        }
    }
}
