//! Synthetic families with known optima.

use nalgebra::{DMatrix, DVector};

use super::{ModelOutputs, Scalar, SmoothModel};

fn zero<D: Scalar>() -> D {
    D::from(0.0)
}

/// Separation of the two nearly parallel active constraints.
pub const ILLCOND_EPS: f64 = 1e-3;

/// Convex quadratic in rotated coordinates `y = Qᵀx` with spectrum
/// `(1, c, 10, 10)`. The two active constraints live in the last two
/// coordinates, so the reduced Hessian is `diag(1, c)`. The stiff direction
/// is the ill-conditioned one: a flat `1/c` direction would leave `f` within
/// `O(1/c)` of `f*` wherever the solver stopped along it.
pub struct IllCond {
    q: DMatrix<f64>,
    lambda: [f64; 4],
    target: [f64; 4],
    offset: f64,
}

impl IllCond {
    pub fn new(c: f64) -> Self {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let q = DMatrix::identity(4, 4) - &v * v.transpose() * (2.0 / v.norm_squared());
        let e = ILLCOND_EPS;
        // multipliers (1, 1) at y* = (1, 1, 1, 1)
        let target = [1.0, 1.0, 0.8, 1.0 - e / 10.0];
        let lambda = [1.0, c, 10.0, 10.0];
        let offset = 1.0 - 5.0 * (0.04 + e * e / 100.0);
        IllCond {
            q,
            lambda,
            target,
            offset,
        }
    }

    pub fn to_x(&self, y: &[f64]) -> DVector<f64> {
        &self.q * DVector::from_column_slice(y)
    }
}

impl SmoothModel for IllCond {
    fn eval<D: Scalar>(&self, x: &[D]) -> ModelOutputs<D> {
        let mut y = [zero::<D>(); 4];
        for (i, yi) in y.iter_mut().enumerate() {
            for (j, xj) in x.iter().enumerate() {
                *yi += *xj * self.q[(j, i)];
            }
        }
        let mut f = D::from(self.offset);
        for i in 0..4 {
            f += (y[i] - self.target[i]).powi(2) * (0.5 * self.lambda[i]);
        }
        let e = ILLCOND_EPS;
        ModelOutputs {
            f,
            h: vec![],
            g: vec![y[2] - 1.0, y[2] + y[3] * e - (1.0 + e)],
        }
    }
}

/// `min (x − ½)²` with `2x² ± x − 1 ≥ 0`, feasible for `|x| ≥ 1`. For
/// `|x| < ½` both rows are violated and their linearizations point apart.
/// `x = 0` is a stationary point of the infeasibility, so the standard start
/// is `x = 0.1`.
pub struct IncPair;

impl SmoothModel for IncPair {
    fn eval<D: Scalar>(&self, x: &[D]) -> ModelOutputs<D> {
        let x1 = x[0];
        ModelOutputs {
            f: (x1 - 0.5).powi(2),
            h: vec![],
            g: vec![x1 * x1 * 2.0 + x1 - 1.0, x1 * x1 * 2.0 - x1 - 1.0],
        }
    }
}

/// Closest point on the unit circle to `(2, 1)`; the constraint gradient
/// vanishes at the origin.
pub struct IncCircle;

impl SmoothModel for IncCircle {
    fn eval<D: Scalar>(&self, x: &[D]) -> ModelOutputs<D> {
        ModelOutputs {
            f: (x[0] - 2.0).powi(2) + (x[1] - 1.0).powi(2),
            h: vec![x[0] * x[0] + x[1] * x[1] - 1.0],
            g: vec![],
        }
    }
}

/// `min x1 + x2` outside a disc of radius 2, inside the box `[−3, 3]²`.
pub struct IncAnnulus;

impl SmoothModel for IncAnnulus {
    fn eval<D: Scalar>(&self, x: &[D]) -> ModelOutputs<D> {
        let three = D::from(3.0);
        ModelOutputs {
            f: x[0] + x[1],
            h: vec![],
            g: vec![
                x[0] * x[0] + x[1] * x[1] - 4.0,
                x[0] + 3.0,
                three - x[0],
                x[1] + 3.0,
                three - x[1],
            ],
        }
    }
}

/// `min x²` with `x ≥ 1` and `x ≤ −1`: no feasible point exists.
pub struct InfeasiblePair;

impl SmoothModel for InfeasiblePair {
    fn eval<D: Scalar>(&self, x: &[D]) -> ModelOutputs<D> {
        ModelOutputs {
            f: x[0] * x[0],
            h: vec![],
            g: vec![x[0] - 1.0, -x[0] - 1.0],
        }
    }
}

/// `min −s·x1 + ½‖x‖²` with `x1 ≤ 1`. The dual last residual of the
/// least-squares subproblem is about `1/s²`.
pub struct TinyResidual {
    pub scale: f64,
}

impl SmoothModel for TinyResidual {
    fn eval<D: Scalar>(&self, x: &[D]) -> ModelOutputs<D> {
        ModelOutputs {
            f: x[0] * -self.scale + (x[0] * x[0] + x[1] * x[1]) * 0.5,
            h: vec![],
            g: vec![D::from(1.0) - x[0]],
        }
    }
}
