//! Small dense linear-algebra helpers: deterministic orthonormal bases,
//! numerical rank, spectral quantities, and a simplex-constrained least
//! squares solver.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Spectral norm (largest singular value). Zero-sized matrices have norm 0.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values()[0]
}

/// Spectral radius (largest eigenvalue modulus). Zero-sized matrices have
/// radius 0.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max)
}

/// Flips column signs so that the first entry with |x| > 1e-12 * ||col|| is
/// positive. Makes orthonormal bases deterministic across runs.
pub fn fix_column_signs(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        let col = m.column(j);
        let scale = col.norm();
        let lead = col.iter().find(|x| x.abs() > 1e-12 * scale.max(1.0));
        if let Some(&x) = lead {
            if x < 0.0 {
                m.column_mut(j).neg_mut();
            }
        }
    }
}

/// Column-space factorization of `m` at relative tolerance `tol`.
///
/// Returns `(rank, basis, complement)` where `basis` holds `rank`
/// orthonormal columns spanning the column space and `complement` spans its
/// orthogonal complement in R^nrows. Both carry the deterministic sign
/// convention of [`fix_column_signs`].
pub fn column_space(m: &DMatrix<f64>, tol: f64) -> (usize, DMatrix<f64>, DMatrix<f64>) {
    let p = m.nrows();
    if p == 0 {
        return (0, DMatrix::zeros(0, 0), DMatrix::zeros(0, 0));
    }
    if m.ncols() == 0 || m.amax() == 0.0 {
        let mut comp = DMatrix::identity(p, p);
        fix_column_signs(&mut comp);
        return (0, DMatrix::zeros(p, 0), comp);
    }
    // Left singular vectors of [m, 0_fill] give both spaces at once; pad with
    // zero columns when m has fewer columns than rows so that U is p x p.
    let work = if m.ncols() < p {
        let mut w = DMatrix::zeros(p, p);
        w.view_mut((0, 0), (p, m.ncols())).copy_from(m);
        w
    } else {
        m.clone()
    };
    let svd = work.svd(true, false);
    let sv = &svd.singular_values;
    let smax = sv[0];
    let rank = sv.iter().filter(|s| **s > tol * smax).count();
    let u = svd.u.expect("svd with u requested");
    let mut basis = u.columns(0, rank).into_owned();
    let mut comp = u.columns(rank, p - rank).into_owned();
    fix_column_signs(&mut basis);
    fix_column_signs(&mut comp);
    (rank, basis, comp)
}

/// Numerical rank at relative tolerance `tol`.
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv[0];
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > tol * smax).count()
}

/// Solves the square system `a x = b`, reporting singularity as an error.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Singular(what.to_string()))
}

/// Inverse of a square matrix, reporting singularity as an error.
pub fn inverse(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if a.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular(what.to_string()))
}

/// Assembles a block matrix from a 2x2 grid of blocks. Rows within a block
/// row must agree in height, columns within a block column in width; zero
/// dimensions are allowed.
pub fn block2x2(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> DMatrix<f64> {
    let (ra, ca) = a.shape();
    let (rd, cd) = d.shape();
    assert_eq!(b.nrows(), ra, "block row 0 height");
    assert_eq!(c.ncols(), ca, "block col 0 width");
    assert_eq!(b.ncols(), cd, "block col 1 width");
    assert_eq!(c.nrows(), rd, "block row 1 height");
    let mut out = DMatrix::zeros(ra + rd, ca + cd);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((0, ca), (ra, cd)).copy_from(b);
    out.view_mut((ra, 0), (rd, ca)).copy_from(c);
    out.view_mut((ra, ca), (rd, cd)).copy_from(d);
    out
}

/// Minimizes ||b - V w|| over the probability simplex (w >= 0, sum w = 1) by
/// exhaustive active-set enumeration. V has one column per vertex; intended
/// for small vertex counts (<= 16).
pub fn simplex_lsq(v: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, f64) {
    let l = v.ncols();
    assert!(l >= 1 && l <= 16, "simplex_lsq supports 1..=16 vertices");
    if l == 1 {
        let w = DVector::from_element(1, 1.0);
        let res = (b - v.column(0)).norm();
        return (w, res);
    }
    let mut best_w = DVector::from_element(l, 1.0 / l as f64);
    let mut best_res = (b - v * &best_w).norm();
    // Enumerate supports; for each, solve the equality-constrained least
    // squares with sum(w) = 1 via the KKT system and keep feasible solutions.
    for mask in 1u32..(1u32 << l) {
        let idx: Vec<usize> = (0..l).filter(|i| mask & (1 << i) != 0).collect();
        let s = idx.len();
        let vs = DMatrix::from_fn(v.nrows(), s, |r, j| v[(r, idx[j])]);
        let g = vs.transpose() * &vs;
        let rhs_top = vs.transpose() * b;
        // KKT: [G 1; 1' 0] [w; lambda] = [V'b; 1]
        let mut kkt = DMatrix::zeros(s + 1, s + 1);
        kkt.view_mut((0, 0), (s, s)).copy_from(&g);
        for j in 0..s {
            kkt[(s, j)] = 1.0;
            kkt[(j, s)] = 1.0;
        }
        let mut rhs = DVector::zeros(s + 1);
        rhs.rows_mut(0, s).copy_from(&rhs_top);
        rhs[s] = 1.0;
        let Some(sol) = kkt.lu().solve(&rhs) else {
            continue;
        };
        if (0..s).any(|j| sol[j] < -1e-12) {
            continue;
        }
        let mut w = DVector::zeros(l);
        for (j, &i) in idx.iter().enumerate() {
            w[i] = sol[j].max(0.0);
        }
        let scale: f64 = w.iter().sum();
        if scale > 0.0 {
            w /= scale;
        }
        let res = (b - v * &w).norm();
        if res < best_res {
            best_res = res;
            best_w = w;
        }
    }
    (best_w, best_res)
}
