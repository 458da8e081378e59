#![allow(dead_code)] // each test binary uses a different subset

//! Shared support for the integration suites: fixture loading, an
//! independent quadrature oracle for the smoothed evaluation, and a
//! generator of random linear member models.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use nlvar::membership::{check_membership, MembershipReport};
use nlvar::model::{FamilyVariant, ModelSpec, ThresholdData};

pub fn fixture(name: &str) -> ModelSpec {
    let text = match name {
        "ex_l" => include_str!("../../fixtures/ex_l.json"),
        "ex_l_mu" => include_str!("../../fixtures/ex_l_mu.json"),
        "ex_t" => include_str!("../../fixtures/ex_t.json"),
        "ex_t_offset" => include_str!("../../fixtures/ex_t_offset.json"),
        "ex_s_offset" => include_str!("../../fixtures/ex_s_offset.json"),
        "ex_t3" => include_str!("../../fixtures/ex_t3.json"),
        "ex_p3" => include_str!("../../fixtures/ex_p3.json"),
        "ex_t2" => include_str!("../../fixtures/ex_t2.json"),
        "ex_c" => include_str!("../../fixtures/ex_c.json"),
        "ex_s" => include_str!("../../fixtures/ex_s.json"),
        "ex_v" => include_str!("../../fixtures/ex_v.json"),
        "ex_t_flip" => include_str!("../../fixtures/ex_t_flip.json"),
        other => panic!("unknown fixture {other}"),
    };
    ModelSpec::from_json_str(text).expect("fixture parses")
}

pub fn member_report(model: &ModelSpec) -> MembershipReport {
    let rep = check_membership(model, 1.0, 12).expect("check runs");
    assert!(rep.verdict.is_member(), "fixture not a member: {:?}", rep.verdict);
    rep
}

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

pub fn random_points(p: usize, n: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| DVector::from_fn(p, |_, _| r.sample::<f64, _>(StandardNormal) * 3.0))
        .collect()
}

/// Adaptive Simpson on a scalar function.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// One-dimensional quadrature oracle for the smoothed lag maps.
///
/// The kernel variable enters the regime indicator only through `w = a'u`,
/// so conditioning on `w` leaves an affine integrand:
/// `E[f_i(z+u) | a'u = w] = offset^(l(w)) + Phi^(l(w)) (z + a w / |a|^2)`
/// with `l(w)` the band of `a'z + w`. The outer integral over the Gaussian
/// density of `w` is done piecewise between the threshold kinks.
pub fn smoothed_oracle(base: &ThresholdData, sigma: f64, i: usize, z: &DVector<f64>) -> DVector<f64> {
    let p = z.len();
    let a_norm = base.a.norm();
    let s = sigma * a_norm;
    let x = base.a.dot(z);
    let a_over = &base.a / (a_norm * a_norm);
    let pdf = |w: f64| (-0.5 * (w / s) * (w / s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
    let band = |w: f64| base.tau.partition_point(|t| *t < x + w);

    // Integration knots: +-12 s and the kink locations inside.
    let mut knots = vec![-12.0 * s];
    for t in &base.tau {
        let w = t - x;
        if w.abs() < 12.0 * s {
            knots.push(w);
        }
    }
    knots.push(12.0 * s);
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut out = DVector::zeros(p);
    for c in 0..p {
        let integrand = |w: f64| -> f64 {
            let l = band(w);
            let affine = &base.offsets[i][l] + &base.mats[i][l] * (z + &a_over * w);
            affine[c] * pdf(w)
        };
        let mut total = 0.0;
        for pair in knots.windows(2) {
            total += simpson(&integrand, pair[0], pair[1], 1e-13);
        }
        out[c] = total;
    }
    out
}

/// Draws a random linear member model with the requested dimensions, built
/// from a rank-r level map and shrunken short-run dynamics, retrying until
/// the class check certifies membership with the intended rank.
pub fn random_linear_member(seed: u64, p: usize, k: usize, r: usize) -> (ModelSpec, MembershipReport) {
    let mut rng = rng(seed);
    for _attempt in 0..200 {
        let alpha = DMatrix::from_fn(p, r, |_, _| rng.sample::<f64, _>(StandardNormal));
        // Loadings biased toward I + beta'alpha contractive.
        let noise = DMatrix::from_fn(p, r, |_, _| rng.sample::<f64, _>(StandardNormal));
        let beta = -&alpha * 0.4 + noise * 0.1;
        let pi = &alpha * beta.transpose();
        let gammas: Vec<DMatrix<f64>> = (0..k.saturating_sub(1))
            .map(|_| DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal) * 0.15 / k as f64))
            .collect();
        let phi0 = DMatrix::identity(p, p)
            + DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal) * 0.05);
        if phi0.clone().try_inverse().is_none() {
            continue;
        }

        // Reassemble lag matrices from (Pi, Gamma_1..Gamma_{k-1}).
        let mut phis = vec![phi0.clone()];
        if k == 1 {
            phis.push(&phi0 + &pi);
        } else {
            phis.push(&phi0 + &pi + &gammas[0]);
            for j in 2..k {
                phis.push(&gammas[j - 1] - &gammas[j - 2]);
            }
            phis.push(-gammas[k - 2].clone());
        }
        let mu = DVector::from_fn(r, |_, _| rng.sample::<f64, _>(StandardNormal) * 0.3);
        let model = ModelSpec {
            p,
            k,
            c: &alpha * mu,
            family: FamilyVariant::Linear { phi: phis },
        };
        if model.validate().is_err() {
            continue;
        }
        let Ok(rep) = check_membership(&model, 1.0, 12) else {
            continue;
        };
        if rep.verdict == nlvar::membership::Verdict::Member && rep.r == r {
            return (model, rep);
        }
    }
    panic!("no member model found for p={p}, k={k}, r={r} at seed {seed}");
}

/// Orthonormal complement of the column space of `m`.
pub fn complement(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (_, _, comp) = nlvar::linalg::column_space(m, 1e-12);
    comp
}
