use nalgebra::{DMatrix, DVector};

use super::LinalgError;

/// Pivots below `PIVOT_FLOOR · max|diag|` are clamped and flagged.
pub const PIVOT_FLOOR: f64 = 1e-14;

/// `B = L·D·Lᵀ` with `L` unit lower-triangular and `D` positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct LdltFactors {
    pub l: DMatrix<f64>,
    pub d: Vec<f64>,
    /// Set when a pivot had to be clamped to the floor.
    pub regularized: bool,
}

impl LdltFactors {
    pub fn identity(n: usize) -> Self {
        LdltFactors {
            l: DMatrix::identity(n, n),
            d: vec![1.0; n],
            regularized: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn is_identity(&self) -> bool {
        self.d.iter().all(|&v| v == 1.0) && self.l == DMatrix::identity(self.dim(), self.dim())
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let dl = DMatrix::from_diagonal(&DVector::from_column_slice(&self.d));
        &self.l * dl * self.l.transpose()
    }

    /// `L·D·Lᵀ·v` without forming the matrix.
    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut w = self.l.tr_mul(v);
        for (wi, di) in w.iter_mut().zip(&self.d) {
            *wi *= di;
        }
        &self.l * w
    }
}

fn check_square_symmetric(b: &DMatrix<f64>) -> Result<(), LinalgError> {
    if b.nrows() != b.ncols() {
        return Err(LinalgError::Contract(format!(
            "expected a square matrix, got {}x{}",
            b.nrows(),
            b.ncols()
        )));
    }
    let scale = 1.0 + b.amax();
    for i in 0..b.nrows() {
        for j in 0..i {
            if (b[(i, j)] - b[(j, i)]).abs() > 1e-12 * scale {
                return Err(LinalgError::Contract(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Plain `LDLᵀ` without pivoting. Only the lower triangle of `b` is read
/// after the symmetry check.
pub fn ldlt_factor(b: &DMatrix<f64>) -> Result<LdltFactors, LinalgError> {
    check_square_symmetric(b)?;
    let n = b.nrows();
    let max_diag = (0..n).map(|i| b[(i, i)].abs()).fold(0.0_f64, f64::max);
    let floor = PIVOT_FLOOR * max_diag.max(f64::MIN_POSITIVE);
    let mut l = DMatrix::identity(n, n);
    let mut d = vec![0.0; n];
    let mut regularized = false;
    for j in 0..n {
        let mut dj = b[(j, j)];
        for k in 0..j {
            dj -= l[(j, k)] * l[(j, k)] * d[k];
        }
        if dj < floor || !dj.is_finite() {
            dj = floor;
            regularized = true;
        }
        d[j] = dj;
        for i in j + 1..n {
            let mut v = b[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)] * d[k];
            }
            l[(i, j)] = v / dj;
        }
    }
    Ok(LdltFactors { l, d, regularized })
}

/// Composite-t rank-one modification `L·D·Lᵀ + σ·z·zᵀ`.
///
/// For downdates the `t` sequence is precomputed from `L p = z`; a
/// nonnegative final `t` means the result would not be positive definite.
pub fn ldlt_rank_one_update(
    f: &LdltFactors,
    sigma: f64,
    z: &DVector<f64>,
) -> Result<LdltFactors, LinalgError> {
    let n = f.dim();
    if z.len() != n {
        return Err(LinalgError::Contract(format!(
            "update vector has length {}, expected {n}",
            z.len()
        )));
    }
    if f.d.iter().any(|&v| !(v > 0.0)) {
        return Err(LinalgError::Contract("factors have a nonpositive pivot".into()));
    }
    if sigma == 0.0 {
        return Ok(f.clone());
    }
    let mut l = f.l.clone();
    let mut d = f.d.clone();
    let max_diag = d.iter().cloned().fold(0.0_f64, f64::max);
    let floor = PIVOT_FLOOR * max_diag;
    let mut regularized = f.regularized;

    // t_i for i = 0..=n, only needed up front for the negative case.
    let mut ts = vec![0.0; n + 1];
    ts[0] = 1.0 / sigma;
    if sigma < 0.0 {
        let mut p = z.clone();
        for i in 0..n {
            for j in i + 1..n {
                p[j] -= p[i] * l[(j, i)];
            }
        }
        for i in 0..n {
            ts[i + 1] = ts[i] + p[i] * p[i] / d[i];
            if ts[i + 1] >= 0.0 {
                return Err(LinalgError::IndefiniteDowndate { pivot: i });
            }
        }
    }

    let mut w = z.clone();
    let mut t = ts[0];
    for i in 0..n {
        let v = w[i];
        let delta = v / d[i];
        let tp = if sigma < 0.0 { ts[i + 1] } else { t + delta * v };
        let alpha = tp / t;
        let mut di = alpha * d[i];
        if di < floor || !di.is_finite() {
            di = floor;
            regularized = true;
        }
        d[i] = di;
        let beta = delta / tp;
        if alpha > 4.0 {
            // Alternate form is stabler when the pivot grows a lot.
            let gamma = t / tp;
            for j in i + 1..n {
                let u = l[(j, i)];
                l[(j, i)] = gamma * u + beta * w[j];
                w[j] -= v * u;
            }
        } else {
            for j in i + 1..n {
                w[j] -= v * l[(j, i)];
                l[(j, i)] += beta * w[j];
            }
        }
        t = tp;
    }
    Ok(LdltFactors { l, d, regularized })
}

/// `R = D^{1/2}·Lᵀ` and `q` with `Rᵀ q = −∇f`.
pub fn form_r_q(
    f: &LdltFactors,
    grad_f: &DVector<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>), LinalgError> {
    let n = f.dim();
    if grad_f.len() != n {
        return Err(LinalgError::Contract("gradient length mismatch".into()));
    }
    if let Some(i) = f.d.iter().position(|&v| !(v > 0.0)) {
        return Err(LinalgError::Contract(format!("nonpositive pivot D[{i}]")));
    }
    let mut r = f.l.transpose();
    for i in 0..n {
        let s = f.d[i].sqrt();
        for j in 0..n {
            r[(i, j)] *= s;
        }
    }
    let rhs: Vec<f64> = grad_f.iter().map(|g| -g).collect();
    let q = super::forward_substitute_transposed(&r, &rhs);
    Ok((r, DVector::from_vec(q)))
}
