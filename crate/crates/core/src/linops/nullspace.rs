use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{ComplexMatrix, LinalgError, Result};

/// Default null-space tolerance, relative to `max(1, σ_max)`.
pub const DEFAULT_NULL_TOL: f64 = 1e-9;

/// Minimum `σ_next / σ_min` for a null space to count as one-dimensional.
pub const MIN_UNIQUE_GAP: f64 = 1e6;

#[derive(Clone, Debug)]
pub struct NullVector {
    /// Unit-norm right singular vector of the smallest singular value.
    pub vector: Vec<Complex64>,
    pub sigma_min: f64,
    pub sigma_next: f64,
    /// `σ_next / max(σ_min, tiny)`.
    pub gap: f64,
}

impl NullVector {
    pub fn is_unique(&self) -> bool {
        self.gap > MIN_UNIQUE_GAP
    }
}

/// Smallest right singular vector of a square matrix.
///
/// The tolerance is applied relative to the matrix scale: the call fails when
/// `σ_min > tol · max(1, σ_max)`. Callers decide uniqueness from `gap`.
pub fn null_vector(m: &ComplexMatrix, tol: f64) -> Result<NullVector> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    if !m.is_finite() {
        return Err(LinalgError::NonFinite("null_vector input".into()));
    }
    let n = m.rows();
    let dm = DMatrix::from_row_slice(n, n, m.as_slice());
    let svd = dm.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors were requested");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let i_min = order[0];
    let sigma_min = svd.singular_values[i_min];
    let sigma_max = svd.singular_values[order[n - 1]];
    let sigma_next = if n > 1 { svd.singular_values[order[1]] } else { f64::INFINITY };
    let threshold = tol * sigma_max.max(1.0);
    if sigma_min > threshold {
        return Err(LinalgError::NoNullSpace { sigma_min, tol: threshold });
    }
    let vector = (0..n).map(|j| v_t[(i_min, j)].conj()).collect();
    Ok(NullVector {
        vector,
        sigma_min,
        sigma_next,
        gap: sigma_next / sigma_min.max(f64::MIN_POSITIVE),
    })
}
