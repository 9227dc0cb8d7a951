//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// descending order (columns of `vectors` permuted to match).
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

/// Symmetric eigen-decomposition, descending eigenvalues.
///
/// The input is symmetrised as `(A + Aᵀ)/2` first so round-off asymmetry does
/// not leak into the solver.
pub fn sym_eigen_desc(a: &DMatrix<f64>) -> SortedEigen {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    SortedEigen { values, vectors }
}

/// Operator 2-norm (largest singular value).
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().max()
}

/// Operator 2-norm of a symmetric matrix (largest absolute eigenvalue).
pub fn sym_spectral_norm(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues().amax()
}

/// Principal square root of a symmetric PSD matrix. Eigenvalues below
/// `1e-12 · λ_max` (including round-off negatives) are clamped to zero.
pub fn psd_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    sym_eigen_desc(a).psd_sqrt()
}

impl SortedEigen {
    /// [`psd_sqrt`] of the decomposed matrix.
    pub fn psd_sqrt(&self) -> DMatrix<f64> {
        let eig = self;
        let lmax = eig.values.iter().cloned().fold(0.0_f64, f64::max);
        let cut = 1e-12 * lmax;
        let roots = eig.values.map(|l| if l <= cut { 0.0 } else { l.sqrt() });
        let scaled = &eig.vectors * DMatrix::from_diagonal(&roots);
        scaled * eig.vectors.transpose()
    }
}

/// `aᵗ` by repeated squaring.
pub fn matrix_power(a: &DMatrix<f64>, mut t: u64) -> DMatrix<f64> {
    let n = a.nrows();
    let mut result = DMatrix::identity(n, n);
    let mut base = a.clone();
    while t > 0 {
        if t & 1 == 1 {
            result = &result * &base;
        }
        t >>= 1;
        if t > 0 {
            base = &base * &base;
        }
    }
    result
}

/// `1 − ⟨w, v⟩²` for unit vectors, clamped into `[0, 1]`.
pub fn sin2(w: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let c = w.dot(v);
    (1.0 - c * c).clamp(0.0, 1.0)
}

/// Sine of the angle between two unit vectors, computed from the rejection
/// `‖b − ⟨a,b⟩a‖` so it stays accurate for nearly parallel inputs.
pub fn sin_distance(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let c = a.dot(b);
    (b - a * c).norm()
}

/// Largest absolute entry of `a − aᵀ`.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    (a - a.transpose()).amax()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_eigen_is_descending_and_reconstructs() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.0]);
        let e = sym_eigen_desc(&a);
        assert!(e.values[0] >= e.values[1] && e.values[1] >= e.values[2]);
        let rebuilt = &e.vectors * DMatrix::from_diagonal(&e.values) * e.vectors.transpose();
        assert!((rebuilt - a).amax() < 1e-12);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.0]);
        let a = &b * b.transpose(); // rank 2, one zero eigenvalue
        let r = psd_sqrt(&a);
        assert!((&r * &r - &a).norm() / a.norm() < 1e-10);
        assert!(asymmetry(&r) < 1e-12);
    }

    #[test]
    fn matrix_power_matches_naive() {
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.3, 0.7]);
        let mut naive = DMatrix::identity(2, 2);
        for _ in 0..13 {
            naive = &naive * &a;
        }
        assert!((matrix_power(&a, 13) - naive).amax() < 1e-15);
        assert_eq!(matrix_power(&a, 0), DMatrix::identity(2, 2));
    }

    #[test]
    fn spectral_norm_of_diag() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-3.0, 2.0]));
        assert!((spectral_norm(&a) - 3.0).abs() < 1e-14);
        assert!((sym_spectral_norm(&a) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn sin_metrics() {
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let e2 = DVector::from_vec(vec![0.0, 1.0]);
        assert_eq!(sin2(&e1, &e1), 0.0);
        assert_eq!(sin2(&e1, &e2), 1.0);
        assert_eq!(sin2(&e1, &(-&e1)), 0.0);
        let tiny = DVector::from_vec(vec![1.0, 1e-12]).normalize();
        assert!((sin_distance(&e1, &tiny) - 1e-12).abs() < 1e-20);
    }
}
