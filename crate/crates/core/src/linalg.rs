//! Small dense complex helpers for zero-forcing post-processing.

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64 as C64;

/// Lower Cholesky factor of a Hermitian positive-definite matrix, or `None`
/// when a pivot is not positive (relative to the largest diagonal entry).
pub fn cholesky(a: ArrayView2<C64>) -> Option<Array2<C64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let scale = (0..n).map(|i| a[[i, i]].re).fold(0.0, f64::max);
    let floor = scale * 1e-13;
    let mut l = Array2::<C64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]].re;
        for k in 0..j {
            d -= l[[j, k]].norm_sqr();
        }
        if !(d > floor) {
            return None;
        }
        let djj = d.sqrt();
        l[[j, j]] = C64::new(djj, 0.0);
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]].conj();
            }
            l[[i, j]] = s / djj;
        }
    }
    Some(l)
}

/// `A = BᴴB` for a tall `B`.
pub fn gram(b: ArrayView2<C64>) -> Array2<C64> {
    let bh = b.t().mapv(|z| z.conj());
    bh.dot(&b)
}

/// Diagonal of `(BᴴB)⁻¹`, or `None` when `B` is rank deficient (including
/// more columns than rows).
pub fn zf_inverse_diagonal(b: ArrayView2<C64>) -> Option<Vec<f64>> {
    let (m, k) = b.dim();
    if k == 0 {
        return Some(Vec::new());
    }
    if k > m {
        return None;
    }
    let l = cholesky(gram(b).view())?;
    // diag(A⁻¹)_j = Σ_i |(L⁻¹)_{ij}|², solving L x = e_j column by column
    let mut out = vec![0.0; k];
    let mut x = vec![C64::new(0.0, 0.0); k];
    for j in 0..k {
        x.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        let mut acc = 0.0;
        for i in j..k {
            let mut s = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            for p in j..i {
                s -= l[[i, p]] * x[p];
            }
            x[i] = s / l[[i, i]];
            acc += x[i].norm_sqr();
        }
        out[j] = acc;
    }
    Some(out)
}
