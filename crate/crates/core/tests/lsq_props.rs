use isqp::lsq::{solve_ldp, solve_lsi, solve_lsq, solve_nnls, LdpOptions, LsqError};
use isqp::numkit::{form_r_q, ldlt_factor};
use isqp::qp::{solve_qp, QpData};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, s: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-s..s))
}

/// Exhaustive oracle: best nonnegative least-squares fit over all supports.
fn brute_force_nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    let n = a.ncols();
    let mut best = b.norm_squared();
    for mask in 1u32..(1 << n) {
        let cols: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
        let mut sub = DMatrix::zeros(a.nrows(), cols.len());
        for (k, &j) in cols.iter().enumerate() {
            sub.set_column(k, &a.column(j));
        }
        let x = sub.clone().svd(true, true).solve(b, 1e-14).unwrap();
        if x.iter().all(|&v| v >= 0.0) {
            best = best.min((&sub * x - b).norm_squared());
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn nnls_kkt(seed in any::<u64>(), rows in 1usize..13, cols in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_mat(&mut rng, rows, cols);
        let b = rand_vec(&mut rng, rows, 2.0);
        let res = solve_nnls(&a, &b).unwrap();
        let scale = 1.0 + a.norm() * (1.0 + b.norm());
        prop_assert!(res.solution.iter().all(|&u| u >= 0.0));
        prop_assert!((&a * &res.solution - &b - &res.residual_vector).amax() == 0.0);
        let w = a.tr_mul(&res.residual_vector);
        for j in 0..cols {
            if res.solution[j] > 0.0 {
                prop_assert!(w[j].abs() <= 1e-10 * scale, "w[{j}] = {}", w[j]);
            } else {
                prop_assert!(w[j] >= -1e-10 * scale, "w[{j}] = {}", w[j]);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn nnls_matches_enumeration(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_mat(&mut rng, 5, 3);
        let b = rand_vec(&mut rng, 5, 2.0);
        let res = solve_nnls(&a, &b).unwrap();
        let oracle = brute_force_nnls(&a, &b);
        prop_assert!((res.residual_norm.powi(2) - oracle).abs() <= 1e-10 * (1.0 + oracle));
    }
}

/// Well-conditioned LSQ instance with a planted strictly feasible point.
struct Instance {
    b: DMatrix<f64>,
    grad: DVector<f64>,
    ae: DMatrix<f64>,
    he: DVector<f64>,
    ai: DMatrix<f64>,
    gi: DVector<f64>,
}

fn instance(seed: u64, n: usize, me: usize, mi: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rand_mat(&mut rng, n, n);
    let b = m.tr_mul(&m) * 0.5 + DMatrix::identity(n, n);
    let grad = rand_vec(&mut rng, n, 2.0);
    let xf = rand_vec(&mut rng, n, 1.0);
    let ae = rand_mat(&mut rng, me, n);
    let he = -(&ae * &xf);
    let ai = rand_mat(&mut rng, mi, n);
    let slack = DVector::from_fn(mi, |_, _| rng.gen_range(0.05..1.0));
    let gi = -(&ai * &xf) + slack;
    Instance { b, grad, ae, he, ai, gi }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lsq_matches_qp(seed in any::<u64>(), n in 2usize..9, me in 0usize..3, mi in 0usize..8) {
        let me = me.min(n - 1);
        let inst = instance(seed, n, me, mi);
        let f = ldlt_factor(&inst.b).unwrap();
        let (r, q) = form_r_q(&f, &inst.grad).unwrap();
        let lsq = solve_lsq(&r, &q, &inst.ae, &inst.he, &inst.ai, &inst.gi, &LdpOptions::default()).unwrap();
        let qp = solve_qp(
            &QpData::unconstrained(inst.b.clone(), inst.grad.clone())
                .with_equalities(inst.ae.clone(), inst.he.clone())
                .with_inequalities(inst.ai.clone(), inst.gi.clone()),
        ).unwrap();
        let dq = &qp.direction;
        prop_assert!((&lsq.direction - dq).norm() <= 1e-6 * (1.0 + dq.norm()));
        prop_assert!((&lsq.ineq_multipliers - &qp.ineq_multipliers).amax() <= 1e-5 * (1.0 + qp.ineq_multipliers.amax()));
        prop_assert!((&lsq.eq_multipliers - &qp.eq_multipliers).amax() <= 1e-5 * (1.0 + qp.eq_multipliers.amax()));
    }

    #[test]
    fn lsi_matches_qp(seed in any::<u64>(), n in 1usize..8, mi in 1usize..8) {
        let inst = instance(seed, n, 0, mi);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let e = rand_mat(&mut rng, n, n) * 0.3 + DMatrix::identity(n, n);
        let f = rand_vec(&mut rng, n, 2.0);
        let lsi = solve_lsi(&e, &f, &inst.ai, &inst.gi, &LdpOptions::default()).unwrap();
        prop_assert!(lsi.reliable);
        let h = e.tr_mul(&e);
        let c = -e.tr_mul(&f);
        let qp = solve_qp(&QpData::unconstrained(h, c).with_inequalities(inst.ai.clone(), inst.gi.clone())).unwrap();
        prop_assert!((&lsi.solution - &qp.direction).norm() <= 1e-6 * (1.0 + qp.direction.norm()));
    }

    #[test]
    fn ldp_degrades_monotonically(k1 in 0.0f64..14.0, k2 in 0.0f64..14.0) {
        // planted family: min ½z² s.t. c·z ≥ 1, last residual c²/(1+c²)
        let (hi, lo) = if k1 < k2 { (k1, k2) } else { (k2, k1) };
        let opts = LdpOptions::default();
        let reliable = |k: f64| {
            let c = 10f64.powf(-k / 2.0);
            match solve_ldp(&DMatrix::from_element(1, 1, c), &DVector::from_element(1, -1.0), &opts) {
                Ok(r) => r.reliable,
                Err(LsqError::Infeasible) => false,
                Err(e) => panic!("{e}"),
            }
        };
        prop_assert!(!(reliable(lo) && !reliable(hi)));
    }
}
