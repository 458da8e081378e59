//! Shared fixtures for the unit tests. The same models exist as JSON files
//! under `fixtures/` for the integration suites and the CLI.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeMap;

use crate::model::{ConicData, FamilyVariant, ModelSpec, ThresholdData};

/// alpha = (-0.5, 0)', beta = (1, -1)' in all bivariate fixtures.
pub fn alpha_raw() -> DVector<f64> {
    DVector::from_vec(vec![-0.5, 0.0])
}

pub fn beta_raw() -> DVector<f64> {
    DVector::from_vec(vec![1.0, -1.0])
}

/// Second-regime loading used by the threshold fixtures; scaled so that the
/// regime eigenvalues 1 + beta_l' alpha are 0.5 and 0.75.
pub fn beta2_raw() -> DVector<f64> {
    DVector::from_vec(vec![0.5, -0.25])
}

/// Linear fixture: p = 2, k = 1, Phi_0 = I, Phi_1 = I + alpha beta'.
pub fn ex_l() -> ModelSpec {
    let phi1 = DMatrix::identity(2, 2) + alpha_raw() * beta_raw().transpose();
    let m = ModelSpec {
        p: 2,
        k: 1,
        c: DVector::zeros(2),
        family: FamilyVariant::Linear {
            phi: vec![DMatrix::identity(2, 2), phi1],
        },
    };
    m.validate().unwrap();
    m
}

/// EX-L with a nonzero intercept c = alpha * 0.3 (still in span alpha).
pub fn ex_l_mu() -> ModelSpec {
    let mut m = ex_l();
    m.c = alpha_raw() * 0.3;
    m.validate().unwrap();
    m
}

/// Builds a k = 1 threshold model with Phi_0 = I per regime and zero
/// offsets, from the threshold direction, thresholds and lag-1 matrices.
pub fn threshold_model_2x1(a: &[f64], tau: &[f64], phi1: &[DMatrix<f64>]) -> ModelSpec {
    let l = phi1.len();
    let m = ModelSpec {
        p: 2,
        k: 1,
        c: DVector::zeros(2),
        family: FamilyVariant::ThresholdAffine(ThresholdData {
            a: DVector::from_vec(a.to_vec()),
            tau: tau.to_vec(),
            offsets: vec![vec![DVector::zeros(2); l], vec![DVector::zeros(2); l]],
            mats: vec![vec![DMatrix::identity(2, 2); l], phi1.to_vec()],
        }),
    };
    m.validate().unwrap();
    m
}

/// Threshold fixture: two regimes split by a'z = 0 with a = (-2, 3), shared
/// alpha, per-regime loadings beta_raw / beta2_raw. Regime eigenvalues 0.5
/// and 0.75.
pub fn ex_t() -> ModelSpec {
    let phi1_1 = DMatrix::identity(2, 2) + alpha_raw() * beta_raw().transpose();
    let phi1_2 = DMatrix::identity(2, 2) + alpha_raw() * beta2_raw().transpose();
    threshold_model_2x1(&[-2.0, 3.0], &[0.0], &[phi1_1, phi1_2])
}

/// k = 2 variant of EX-T with a shared Gamma_1 = 0.2 I (so Phi_2 = -0.2 I).
pub fn ex_t2() -> ModelSpec {
    let g = DMatrix::identity(2, 2) * 0.2;
    let phi1_1 = DMatrix::identity(2, 2) + alpha_raw() * beta_raw().transpose() + &g;
    let phi1_2 = DMatrix::identity(2, 2) + alpha_raw() * beta2_raw().transpose() + &g;
    let phi2 = -g;
    let m = ModelSpec {
        p: 2,
        k: 2,
        c: DVector::zeros(2),
        family: FamilyVariant::ThresholdAffine(ThresholdData {
            a: DVector::from_vec(vec![-2.0, 3.0]),
            tau: vec![0.0],
            offsets: vec![vec![DVector::zeros(2); 2]; 3],
            mats: vec![
                vec![DMatrix::identity(2, 2); 2],
                vec![phi1_1, phi1_2],
                vec![phi2.clone(), phi2],
            ],
        }),
    };
    m.validate().unwrap();
    m
}

/// Conic fixture: regimes split by the sign of z_1, loadings beta_raw and
/// (0.5, -1)' whose difference is along a_1 = e_1.
pub fn ex_c() -> ModelSpec {
    let beta_b = DVector::from_vec(vec![0.5, -1.0]);
    let phi1_1 = DMatrix::identity(2, 2) + alpha_raw() * beta_raw().transpose();
    let phi1_2 = DMatrix::identity(2, 2) + alpha_raw() * beta_b.transpose();
    let mut map = BTreeMap::new();
    map.insert("++".to_string(), 1);
    map.insert("+-".to_string(), 1);
    map.insert("-+".to_string(), 2);
    map.insert("--".to_string(), 2);
    let m = ModelSpec {
        p: 2,
        k: 1,
        c: DVector::zeros(2),
        family: FamilyVariant::PiecewiseLinear(ConicData {
            basis: vec![
                DVector::from_vec(vec![1.0, 0.0]),
                DVector::from_vec(vec![0.0, 1.0]),
            ],
            regime_of_cone: map,
            mats: vec![vec![DMatrix::identity(2, 2); 2], vec![phi1_1, phi1_2]],
        }),
    };
    m.validate().unwrap();
    m
}

/// Smoothed fixture: EX-T convolved with a Gaussian kernel of width 0.25.
pub fn ex_s() -> ModelSpec {
    let base = match ex_t().family {
        FamilyVariant::ThresholdAffine(t) => t,
        _ => unreachable!(),
    };
    let m = ModelSpec {
        p: 2,
        k: 1,
        c: DVector::zeros(2),
        family: FamilyVariant::SmoothedThreshold { base, sigma: 0.25 },
    };
    m.validate().unwrap();
    m
}

/// Threshold fixture with nonzero offsets and intercept, all inside
/// span alpha: pi_bar^(1) = (0.3, 0)', pi_bar^(2) shifted by the continuity
/// condition at tau = 0.5, c = (-0.2, 0)'.
pub fn ex_t_offset() -> ModelSpec {
    let phi1_1 = DMatrix::identity(2, 2) + alpha_raw() * beta_raw().transpose();
    let phi1_2 = DMatrix::identity(2, 2) + alpha_raw() * beta2_raw().transpose();
    let tau = 0.5;
    // Phi_1 jump is n a' with n = 0.25 alpha; offsets must shift by -n tau.
    let n = alpha_raw() * 0.25;
    let w0 = DVector::from_vec(vec![0.1, 0.0]);
    let w1 = DVector::from_vec(vec![0.3, 0.0]);
    let w2 = &w1 - &n * tau;
    let m = ModelSpec {
        p: 2,
        k: 1,
        c: DVector::from_vec(vec![-0.2, 0.0]),
        family: FamilyVariant::ThresholdAffine(ThresholdData {
            a: DVector::from_vec(vec![-2.0, 3.0]),
            tau: vec![tau],
            offsets: vec![vec![w0.clone(), w0], vec![w1, w2]],
            mats: vec![vec![DMatrix::identity(2, 2); 2], vec![phi1_1, phi1_2]],
        }),
    };
    m.validate().unwrap();
    m
}

/// Smoothed version of [`ex_t_offset`] (kernel width 0.3); exercises the
/// offset terms of the slab formula and a nonzero equilibrium mean.
pub fn ex_s_offset() -> ModelSpec {
    let base = match ex_t_offset().family {
        FamilyVariant::ThresholdAffine(t) => t,
        _ => unreachable!(),
    };
    let m = ModelSpec {
        p: 2,
        k: 1,
        c: DVector::from_vec(vec![-0.2, 0.0]),
        family: FamilyVariant::SmoothedThreshold { base, sigma: 0.3 },
    };
    m.validate().unwrap();
    m
}

/// Smoothed version of the k = 2 threshold fixture (kernel width 0.2).
pub fn ex_s2k() -> ModelSpec {
    let base = match ex_t2().family {
        FamilyVariant::ThresholdAffine(t) => t,
        _ => unreachable!(),
    };
    let m = ModelSpec {
        p: 2,
        k: 2,
        c: DVector::zeros(2),
        family: FamilyVariant::SmoothedThreshold { base, sigma: 0.2 },
    };
    m.validate().unwrap();
    m
}

/// k = 3 threshold member: shared Gamma_1 = 0.2 I and Gamma_2 = -0.1 I, so
/// only Phi_1 switches across regimes (rank-one along a).
pub fn ex_t3() -> ModelSpec {
    let g1 = DMatrix::identity(2, 2) * 0.2;
    let g2 = DMatrix::identity(2, 2) * -0.1;
    let phi1_1 = DMatrix::identity(2, 2) + alpha_raw() * beta_raw().transpose() + &g1;
    let phi1_2 = DMatrix::identity(2, 2) + alpha_raw() * beta2_raw().transpose() + &g1;
    let phi2 = &g2 - &g1;
    let phi3 = -&g2;
    let m = ModelSpec {
        p: 2,
        k: 3,
        c: DVector::zeros(2),
        family: FamilyVariant::ThresholdAffine(ThresholdData {
            a: DVector::from_vec(vec![-2.0, 3.0]),
            tau: vec![0.0],
            offsets: vec![vec![DVector::zeros(2); 2]; 4],
            mats: vec![
                vec![DMatrix::identity(2, 2); 2],
                vec![phi1_1, phi1_2],
                vec![phi2.clone(), phi2],
                vec![phi3.clone(), phi3],
            ],
        }),
    };
    m.validate().unwrap();
    m
}

/// Trivariate threshold member with two equilibrium relations (r = 2,
/// q = 1): alpha spans the e1-e2 plane and the regimes split on z_1.
pub fn ex_p3() -> ModelSpec {
    let alpha = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    let beta1 = DMatrix::from_row_slice(3, 2, &[-0.5, 0.0, 0.0, -0.4, 0.1, -0.1]);
    // beta^(2) = beta^(1) + a c' keeps the matrix jump rank-one along a.
    let a = DVector::from_vec(vec![1.0, 0.0, 0.0]);
    let c_shift = DVector::from_vec(vec![0.2, -0.1]);
    let beta2 = &beta1 + &a * c_shift.transpose();
    let phi1_1 = DMatrix::identity(3, 3) + &alpha * beta1.transpose();
    let phi1_2 = DMatrix::identity(3, 3) + &alpha * beta2.transpose();
    let m = ModelSpec {
        p: 3,
        k: 1,
        c: &alpha * DVector::from_vec(vec![0.1, -0.2]),
        family: FamilyVariant::ThresholdAffine(ThresholdData {
            a,
            tau: vec![0.0],
            offsets: vec![vec![DVector::zeros(3); 2], vec![DVector::zeros(3); 2]],
            mats: vec![vec![DMatrix::identity(3, 3); 2], vec![phi1_1, phi1_2]],
        }),
    };
    m.validate().unwrap();
    m
}

/// Continuous threshold model violating the common row space condition:
/// Pi^(1) = e1 e1' but Pi^(2) = (e1 + e2) e1'.
pub fn ex_v() -> ModelSpec {
    let phi1_1 = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
    let phi1_2 = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 1.0]);
    threshold_model_2x1(&[1.0, 0.0], &[0.0], &[phi1_1, phi1_2])
}

/// Continuous threshold model whose det Phi_0 flips sign between regimes,
/// so f_0 is not invertible.
pub fn ex_t_flip() -> ModelSpec {
    let phi0_2 = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
    let m = ModelSpec {
        p: 2,
        k: 1,
        c: DVector::zeros(2),
        family: FamilyVariant::ThresholdAffine(ThresholdData {
            a: DVector::from_vec(vec![1.0, 0.0]),
            tau: vec![0.0],
            offsets: vec![vec![DVector::zeros(2); 2], vec![DVector::zeros(2); 2]],
            mats: vec![
                vec![DMatrix::identity(2, 2), phi0_2.clone()],
                vec![DMatrix::identity(2, 2), phi0_2],
            ],
        }),
    };
    m.validate().unwrap();
    m
}

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

pub fn random_vector(p: usize, rng: &mut ChaCha12Rng) -> DVector<f64> {
    DVector::from_fn(p, |_, _| rng.sample(StandardNormal))
}

pub fn random_points(p: usize, n: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut r = rng(seed);
    (0..n).map(|_| random_vector(p, &mut r) * 3.0).collect()
}

/// Random window in companion order (newest first).
pub fn random_window(p: usize, k: usize, seed: u64) -> Vec<DVector<f64>> {
    random_points(p, k, seed)
}

#[cfg(test)]
mod emit {
    #[test]
    #[ignore]
    fn dump_fixture_json() {
        for (name, m) in [
            ("ex_l", super::ex_l()),
            ("ex_l_mu", super::ex_l_mu()),
            ("ex_t", super::ex_t()),
            ("ex_t2", super::ex_t2()),
            ("ex_t3", super::ex_t3()),
            ("ex_t_offset", super::ex_t_offset()),
            ("ex_c", super::ex_c()),
            ("ex_s", super::ex_s()),
            ("ex_s_offset", super::ex_s_offset()),
            ("ex_s2k", super::ex_s2k()),
            ("ex_p3", super::ex_p3()),
            ("ex_v", super::ex_v()),
            ("ex_t_flip", super::ex_t_flip()),
        ] {
            std::fs::write(format!("fixtures/{name}.json"), m.to_json_string() + "\n").unwrap();
        }
    }
}
