//! Small dense complex linear algebra on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Singular values in decreasing order.
pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return vec![];
    }
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Spectral norm.
pub fn op_norm(a: &CMatrix) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// `σ_{k+1}/σ₁` (0-based `k`), or 0 when the matrix has fewer values or is zero.
pub fn singular_ratio(s: &[f64], k: usize) -> f64 {
    match (s.first(), s.get(k)) {
        (Some(&s1), Some(&sk)) if s1 > 0.0 => sk / s1,
        _ => 0.0,
    }
}

/// Number of singular values above `rel · σ₁`.
pub fn numerical_rank(s: &[f64], rel: f64) -> usize {
    let Some(&s1) = s.first() else { return 0 };
    s.iter().filter(|&&x| x > rel * s1).count()
}

/// Eigenvalues via the complex Schur form.
pub fn eigenvalues(a: &CMatrix) -> Vec<Complex64> {
    let n = a.nrows();
    match n {
        0 => vec![],
        1 => vec![a[(0, 0)]],
        _ => {
            let t = a.clone().schur().unpack().1;
            (0..n).map(|i| t[(i, i)]).collect()
        }
    }
}

/// `‖V*V − I‖₂`.
pub fn unitarity_defect(v: &CMatrix) -> f64 {
    let n = v.ncols();
    op_norm(&(v.adjoint() * v - CMatrix::identity(n, n)))
}

/// Largest distance between matched points of two equally sized sets, with
/// the matching found greedily by repeatedly pairing the closest remaining
/// points. For well separated sets this is the optimal matching.
pub fn spectrum_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(a.len() * b.len());
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            pairs.push(((x - y).norm(), i, j));
        }
    }
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for (d, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            worst = worst.max(d);
        }
    }
    worst
}

/// Thin QR of a tall matrix: `A = Q R`, `Q` with orthonormal columns.
pub fn thin_qr(a: &CMatrix) -> (CMatrix, CMatrix) {
    let qr = a.clone().qr();
    (qr.q(), qr.r())
}

/// Column order chosen by pivoted QR, with the diagonal magnitudes of `R`
/// in that order.
pub fn pivot_order(a: &CMatrix) -> (Vec<usize>, Vec<f64>) {
    let n = a.ncols();
    let qr = a.clone().col_piv_qr();
    let mut order: Vec<usize> = (0..n).collect();
    let mut perm = CMatrix::from_fn(1, n, |_, j| c(j as f64));
    qr.p().permute_columns(&mut perm);
    for (j, o) in order.iter_mut().enumerate() {
        *o = perm[(0, j)].re as usize;
    }
    let r = qr.r();
    let diag = (0..n.min(a.nrows())).map(|i| r[(i, i)].norm()).collect();
    (order, diag)
}

/// Solves `R X = B` for upper-triangular `R`.
pub fn solve_upper(r: &CMatrix, b: &CMatrix) -> Option<CMatrix> {
    r.solve_upper_triangular(b)
}

/// Inverse of an upper-triangular matrix.
pub fn upper_inverse(r: &CMatrix) -> Option<CMatrix> {
    let n = r.nrows();
    solve_upper(r, &CMatrix::identity(n, n))
}

/// Smallest and largest eigenvalues of a Hermitian matrix.
pub fn hermitian_extremes(a: &CMatrix) -> (f64, f64) {
    if a.nrows() == 0 {
        return (0.0, 0.0);
    }
    let h = (a + a.adjoint()) * c(0.5);
    let ev = h.symmetric_eigenvalues();
    let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Frobenius norm of `a − b`.
pub fn frob_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).norm()
}

/// Splits a complex matrix into row-major real and imaginary arrays.
pub fn to_re_im(a: &CMatrix) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let re = (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)].re).collect()).collect();
    let im = (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)].im).collect()).collect();
    (re, im)
}

pub fn from_re_im(re: &[Vec<f64>], im: &[Vec<f64>]) -> Option<CMatrix> {
    let n = re.len();
    let m = re.first().map_or(0, |r| r.len());
    if im.len() != n || re.iter().chain(im).any(|r| r.len() != m) {
        return None;
    }
    Some(CMatrix::from_fn(n, m, |i, j| Complex64::new(re[i][j], im[i][j])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_matrix(seed: u64, n: usize, m: usize) -> CMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        CMatrix::from_fn(n, m, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn diagonal_oracles() {
        let d = CMatrix::from_diagonal(&CVector::from_vec(vec![c(3.0), Complex64::new(0.0, -2.0), c(0.5)]));
        assert_eq!(singular_values(&d), vec![3.0, 2.0, 0.5]);
        let mut ev = eigenvalues(&d);
        ev.sort_by(|a, b| a.re.total_cmp(&b.re));
        assert!(spectrum_distance(&ev, &[Complex64::new(0.0, -2.0), c(0.5), c(3.0)]) < 1e-15);
    }

    #[test]
    fn rank_one_outer_product() {
        let u = random_matrix(1, 6, 1);
        let v = random_matrix(2, 6, 1);
        let a = &u * v.adjoint();
        let s = singular_values(&a);
        assert!(singular_ratio(&s, 1) < 1e-15);
        assert_eq!(numerical_rank(&s, 1e-10), 1);
    }

    #[test]
    fn qr_reconstructs_and_q_is_isometric() {
        let a = random_matrix(3, 20, 5);
        let (q, r) = thin_qr(&a);
        assert_eq!(q.shape(), (20, 5));
        assert!(frob_diff(&(&q * &r), &a) < 1e-13);
        assert!(unitarity_defect(&q) < 1e-14);
        let ri = upper_inverse(&r).unwrap();
        assert!(frob_diff(&(&r * &ri), &CMatrix::identity(5, 5)) < 1e-12);
    }

    #[test]
    fn pivot_order_prefers_large_columns() {
        let mut a = random_matrix(4, 8, 3);
        a.column_mut(2).scale_mut(100.0);
        let (order, diag) = pivot_order(&a);
        assert_eq!(order[0], 2);
        assert!(diag[0] >= diag[1] && diag[1] >= diag[2]);
        let mut sorted = order.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2]);
    }

    #[test]
    fn spectra_of_similarity() {
        let lam = [Complex64::from_polar(1.0, 0.3), Complex64::from_polar(1.0, 2.0), Complex64::from_polar(1.0, -1.0)];
        let s = random_matrix(5, 3, 3);
        let d = CMatrix::from_diagonal(&CVector::from_column_slice(&lam));
        let t = &s * d * s.clone().try_inverse().unwrap();
        assert!(spectrum_distance(&eigenvalues(&t), &lam) < 1e-12);
    }

    #[test]
    fn hermitian_extremes_of_gram() {
        let a = random_matrix(6, 10, 4);
        let g = a.adjoint() * &a;
        let (lo, hi) = hermitian_extremes(&g);
        let s = singular_values(&a);
        assert!((hi - s[0] * s[0]).abs() < 1e-12 * hi);
        assert!((lo - s[3] * s[3]).abs() < 1e-10 * hi);
    }

    #[test]
    fn re_im_round_trip() {
        let a = random_matrix(7, 3, 4);
        let (re, im) = to_re_im(&a);
        assert_eq!(from_re_im(&re, &im).unwrap(), a);
        assert!(from_re_im(&re, &im[..2]).is_none());
    }

    proptest! {
        #[test]
        fn unitary_from_qr_has_unimodular_spectrum(seed in 0u64..1000) {
            let (q, _) = thin_qr(&random_matrix(seed, 5, 5));
            prop_assert!(unitarity_defect(&q) < 1e-13);
            for ev in eigenvalues(&q) {
                prop_assert!((ev.norm() - 1.0).abs() < 1e-12);
            }
        }
    }
}
