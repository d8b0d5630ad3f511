//! Thin wrappers over `nalgebra` for the complex dense kernels used by the
//! design pipeline: ordered SVD, thresholded pseudo-inverse, polar factor,
//! and Hermitian log-determinant.

use nalgebra::{Cholesky, DMatrix, DVector, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Relative singular-value cutoff used by [`pinv`].
pub const PINV_RTOL: f64 = 1e-10;

/// Thin SVD with singular values in descending order.
#[derive(Debug, Clone)]
pub struct OrderedSvd {
    pub u: CMat,
    pub singular_values: Vec<f64>,
    pub v_t: CMat,
}

pub fn svd(a: &CMat) -> Result<OrderedSvd> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::invalid("svd of an empty matrix"));
    }
    if !is_finite(a) {
        return Err(Error::NonFinite("svd input".into()));
    }
    let dec = SVD::new(a.clone(), true, true);
    let u = dec.u.ok_or_else(|| Error::NonFinite("svd: U not computed".into()))?;
    let v_t = dec.v_t.ok_or_else(|| Error::NonFinite("svd: V^H not computed".into()))?;
    let s = dec.singular_values;

    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));

    let k = order.len();
    let mut u_sorted = CMat::zeros(u.nrows(), k);
    let mut v_sorted = CMat::zeros(k, v_t.ncols());
    for (dst, &src) in order.iter().enumerate() {
        u_sorted.set_column(dst, &u.column(src));
        v_sorted.set_row(dst, &v_t.row(src));
    }
    Ok(OrderedSvd {
        u: u_sorted,
        singular_values: order.iter().map(|&i| s[i]).collect(),
        v_t: v_sorted,
    })
}

/// Moore-Penrose pseudo-inverse. Singular values below `rtol * sigma_max`
/// are discarded. The flag reports whether any were discarded.
pub fn pinv(a: &CMat, rtol: f64) -> Result<(CMat, bool)> {
    let dec = svd(a)?;
    let smax = dec.singular_values.first().copied().unwrap_or(0.0);
    let cutoff = rtol * smax;
    let mut out = CMat::zeros(a.ncols(), a.nrows());
    let mut truncated = false;
    for (i, &s) in dec.singular_values.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            truncated = true;
            continue;
        }
        let v_col = dec.v_t.row(i).adjoint();
        let u_row = dec.u.column(i).adjoint();
        out += (v_col * u_row).unscale(s);
    }
    // a wide matrix has fewer singular values than columns; that is not a rank loss
    Ok((out, truncated))
}

/// Nearest matrix with orthonormal rows (or columns, for tall input):
/// `U * V^H` from the thin SVD.
pub fn polar_factor(a: &CMat) -> Result<CMat> {
    let dec = svd(a)?;
    Ok(&dec.u * &dec.v_t)
}

/// `log2 det(A)` for a Hermitian positive-definite matrix.
pub fn hermitian_log2_det(a: &CMat) -> Result<f64> {
    let chol = Cholesky::new(a.clone())
        .ok_or_else(|| Error::NonFinite("log-det: matrix not positive definite".into()))?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        acc += l[(i, i)].re.log2();
    }
    let out = 2.0 * acc;
    if !out.is_finite() {
        return Err(Error::NonFinite("log-det".into()));
    }
    Ok(out)
}

pub fn hstack(blocks: &[CMat]) -> Result<CMat> {
    let rows = blocks.first().map(|b| b.nrows()).unwrap_or(0);
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let mut offset = 0;
    for b in blocks {
        if b.nrows() != rows {
            return Err(Error::shape("hstack", rows, b.nrows()));
        }
        out.view_mut((0, offset), (rows, b.ncols())).copy_from(b);
        offset += b.ncols();
    }
    Ok(out)
}

/// Splits a matrix into consecutive column blocks of width `width`.
pub fn split_columns(a: &CMat, width: usize) -> Vec<CMat> {
    (0..a.ncols() / width)
        .map(|i| a.columns(i * width, width).into_owned())
        .collect()
}

pub fn is_finite(a: &CMat) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn frobenius(a: &CMat) -> f64 {
    a.norm()
}

/// Largest absolute entry of `a − b`.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}
