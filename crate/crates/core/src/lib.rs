//! Constrained nonlinear programming with improved SQP and SLSQP drivers.

pub mod numkit;
pub mod qp;
pub mod lsq;
pub mod problems;
pub mod step;
pub mod relax;
pub mod driver;
