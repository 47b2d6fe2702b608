use nalgebra::{DMatrix, DVector};

use super::{numerical_rank, LinalgError};

/// Relative singular-value threshold used for numerical rank.
pub const RANK_TOL: f64 = 1e-12;

/// `A·P = Q·R` by Householder reflections with column pivoting.
/// `q` is the full square orthogonal factor.
#[derive(Debug, Clone)]
pub struct HouseholderQr {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// `perm[k]` is the original column placed at position `k`.
    pub perm: Vec<usize>,
}

impl HouseholderQr {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let (m, n) = a.shape();
        let mut r = a.clone();
        let mut q = DMatrix::<f64>::identity(m, m);
        let mut perm: Vec<usize> = (0..n).collect();
        let steps = m.min(n);
        for k in 0..steps {
            // pivot: remaining column with the largest trailing norm
            let mut best = k;
            let mut best_norm = -1.0;
            for j in k..n {
                let nj: f64 = (k..m).map(|i| r[(i, j)] * r[(i, j)]).sum();
                if nj > best_norm {
                    best_norm = nj;
                    best = j;
                }
            }
            if best != k {
                r.swap_columns(k, best);
                perm.swap(k, best);
            }
            let alpha = best_norm.sqrt();
            if alpha == 0.0 {
                continue;
            }
            let x0 = r[(k, k)];
            let beta = if x0 >= 0.0 { -alpha } else { alpha };
            let mut v = DVector::<f64>::zeros(m - k);
            v[0] = x0 - beta;
            for i in k + 1..m {
                v[i - k] = r[(i, k)];
            }
            let vnorm2 = v.norm_squared();
            if vnorm2 == 0.0 {
                continue;
            }
            let tau = 2.0 / vnorm2;
            // R ← (I − τ v vᵀ) R on rows k..m
            for j in k..n {
                let s: f64 = (k..m).map(|i| v[i - k] * r[(i, j)]).sum();
                for i in k..m {
                    r[(i, j)] -= tau * s * v[i - k];
                }
            }
            for i in k + 1..m {
                r[(i, k)] = 0.0;
            }
            r[(k, k)] = beta;
            // Q ← Q (I − τ v vᵀ) on columns k..m
            for i in 0..m {
                let s: f64 = (k..m).map(|c| q[(i, c)] * v[c - k]).sum();
                for c in k..m {
                    q[(i, c)] -= tau * s * v[c - k];
                }
            }
        }
        HouseholderQr { q, r, perm }
    }
}

/// Feasible point plus orthonormal null-space basis of `A_eq`.
#[derive(Debug, Clone)]
pub struct OrthoElimination {
    pub particular_solution: DVector<f64>,
    /// `n × (n − rank)`, columns orthonormal and annihilated by `A_eq`.
    pub basis: DMatrix<f64>,
    /// `n × rank`, orthonormal basis of the row space of `A_eq`.
    pub range: DMatrix<f64>,
    pub rank: usize,
    /// Row indices of `A_eq` that form an independent subset of size `rank`.
    pub independent_rows: Vec<usize>,
    qr: HouseholderQr,
}

impl OrthoElimination {
    /// Least-squares `λ` with `A_eqᵀ λ ≈ v`, zero on dependent rows.
    pub fn solve_transposed(&self, v: &DVector<f64>) -> DVector<f64> {
        let m = self.qr.perm.len();
        let mut lam = DVector::zeros(m);
        if self.rank == 0 {
            return lam;
        }
        // A_eqᵀ P = Q R  ⇒  restricted to independent columns: R11 y = Q1ᵀ v
        let qtv = self.range.tr_mul(v);
        let y = super::back_substitute(&self.qr.r, qtv.as_slice());
        for (k, yk) in y.into_iter().enumerate() {
            lam[self.qr.perm[k]] = yk;
        }
        lam
    }
}

/// Householder elimination of `A_eq·x = rhs` through a pivoted QR of `A_eqᵀ`.
pub fn eliminate_equalities(
    a_eq: &DMatrix<f64>,
    rhs: &DVector<f64>,
) -> Result<OrthoElimination, LinalgError> {
    let (m, n) = a_eq.shape();
    if rhs.len() != m {
        return Err(LinalgError::Contract("rhs length mismatch".into()));
    }
    if m > n {
        return Err(LinalgError::Contract(format!(
            "{m} equalities exceed {n} variables"
        )));
    }
    let rank = numerical_rank(a_eq, RANK_TOL);
    let qr = HouseholderQr::new(&a_eq.transpose());
    // Aᵀ P = Q R ⇒ A = P Rᵀ Qᵀ. With x = Q1 y: R11ᵀ y = (Pᵀ rhs)[..rank].
    let prhs: Vec<f64> = qr.perm.iter().map(|&i| rhs[i]).collect();
    let y = super::forward_substitute_transposed(&qr.r, &prhs[..rank]);
    let range = qr.q.columns(0, rank).into_owned();
    let basis = qr.q.columns(rank, n - rank).into_owned();
    let xp = &range * DVector::from_vec(y);
    let residual = (a_eq * &xp - rhs).amax();
    let scale = 1.0 + rhs.amax();
    if residual > 1e-10 * scale {
        return Err(LinalgError::InconsistentEqualities { residual });
    }
    let mut independent_rows: Vec<usize> = qr.perm[..rank].to_vec();
    independent_rows.sort_unstable();
    Ok(OrthoElimination {
        particular_solution: xp,
        basis,
        range,
        rank,
        independent_rows,
        qr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_invariants(a: &DMatrix<f64>, e: &OrthoElimination) {
        assert!((a * &e.basis).amax() < 1e-10);
        let k = e.basis.ncols();
        assert!((e.basis.tr_mul(&e.basis) - DMatrix::identity(k, k)).amax() < 1e-10);
    }

    #[test]
    fn qr_reconstructs() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let qr = HouseholderQr::new(&a);
        let mut ap = a.clone();
        for (k, &j) in qr.perm.iter().enumerate() {
            ap.set_column(k, &a.column(j));
        }
        assert!((&qr.q * &qr.r - ap).amax() < 1e-12);
        assert!((qr.q.tr_mul(&qr.q) - DMatrix::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn axis_aligned() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let e = eliminate_equalities(&a, &DVector::from_vec(vec![-1.0])).unwrap();
        assert!((e.particular_solution[0] + 1.0).abs() < 1e-15);
        assert!(e.particular_solution[1].abs() < 1e-15);
        assert!(e.basis[(0, 0)].abs() < 1e-15);
        assert!((e.basis[(1, 0)].abs() - 1.0).abs() < 1e-15);
        check_invariants(&a, &e);
    }

    #[test]
    fn diagonal_line() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let e = eliminate_equalities(&a, &DVector::from_vec(vec![1.0])).unwrap();
        let xp = &e.particular_solution;
        assert!((xp[0] + xp[1] - 1.0).abs() < 1e-12);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.basis[(0, 0)].abs() - s).abs() < 1e-12);
        assert!((e.basis[(0, 0)] + e.basis[(1, 0)]).abs() < 1e-12);
        check_invariants(&a, &e);
        assert_eq!(e.rank, 1);
    }

    #[test]
    fn contradictory_rows() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        let r = eliminate_equalities(&a, &DVector::from_vec(vec![1.0, 2.0]));
        assert!(matches!(r, Err(LinalgError::InconsistentEqualities { .. })));
    }

    #[test]
    fn redundant_consistent_rows() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 2.0, 2.0, 0.0]);
        let e = eliminate_equalities(&a, &DVector::from_vec(vec![1.0, 2.0])).unwrap();
        assert_eq!(e.rank, 1);
        assert_eq!(e.basis.ncols(), 2);
        check_invariants(&a, &e);
        assert!((&a * &e.particular_solution - DVector::from_vec(vec![1.0, 2.0])).amax() < 1e-12);
    }

    #[test]
    fn transposed_solve_recovers_multipliers() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, -1.0]);
        let e = eliminate_equalities(&a, &DVector::zeros(2)).unwrap();
        let lam = DVector::from_vec(vec![0.7, -1.3]);
        let v = a.transpose() * &lam;
        assert!((e.solve_transposed(&v) - lam).amax() < 1e-12);
    }
}
