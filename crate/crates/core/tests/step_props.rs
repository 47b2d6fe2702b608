use isqp::problems::{from_model, Gradients, ModelOutputs, NlpProblem, Scalar, SmoothModel};
use isqp::step::{
    armijo_search, check_group1, check_group2, damped_bfgs_dense, damped_secant, merit_directional_derivative,
    merit_value, update_penalties, AcceptedBy, EvalPoint, Evaluator, LineSearchConfig, PenaltyState,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smooth three-variable model with one equality and two inequalities.
struct Wavy {
    a: [f64; 3],
    c: f64,
    b: [f64; 2],
}

impl SmoothModel for Wavy {
    fn eval<D: Scalar>(&self, x: &[D]) -> ModelOutputs<D> {
        let mut f = D::from(0.0);
        for i in 0..3 {
            f += x[i].sin() * self.a[i] + x[i] * x[i] * 0.5;
        }
        ModelOutputs {
            f,
            h: vec![x[0] * x[0] + x[1] - self.c],
            g: vec![-(x[0] * x[1]) + self.b[0], x[2].exp() - self.b[1]],
        }
    }
}

fn wavy(rng: &mut ChaCha8Rng) -> NlpProblem {
    let m = Wavy {
        a: [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
        c: rng.gen_range(-1.0..1.0),
        b: [rng.gen_range(-1.0..1.0), rng.gen_range(0.5..2.0)],
    };
    from_model("wavy", m, DVector::zeros(3), None)
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, s: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-s..s))
}

fn rand_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * rng.gen_range(1e-3..1.0)
}

/// A direction satisfying the linearized equality and every violated
/// inequality with equality, so the merit is differentiable along it.
fn linearized_direction(p: &EvalPoint, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let gr = p.grads.as_ref().unwrap();
    let mut rows = vec![0usize];
    let mut rhs = vec![-p.h[0]];
    for (j, &g) in p.g.iter().enumerate() {
        if g < 0.0 {
            rows.push(j + 1);
            rhs.push(-g);
        }
    }
    let a = DMatrix::from_fn(rows.len(), 3, |r, c| {
        if rows[r] == 0 {
            gr.jac_h[(0, c)]
        } else {
            gr.jac_g[(rows[r] - 1, c)]
        }
    });
    let b = DVector::from_vec(rhs);
    let svd = a.clone().svd(true, true);
    let particular = svd.solve(&b, 1e-12).unwrap();
    let free = rand_vec(rng, 3, 1.0);
    let proj = &free - a.transpose() * (a.clone() * a.transpose()).pseudo_inverse(1e-12).unwrap() * (&a * &free);
    particular + proj
}

#[test]
fn directional_derivative_matches_richardson_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 200 {
        let prob = wavy(&mut rng);
        let mut ev = Evaluator::new(&prob);
        let x = rand_vec(&mut rng, 3, 1.5);
        let mut p = ev.point(&x).unwrap();
        if p.h[0].abs() < 1e-2 || p.g.iter().any(|g| g.abs() < 1e-2) {
            continue;
        }
        ev.add_gradients(&mut p).unwrap();
        let gr = p.grads.as_ref().unwrap();
        let a = DMatrix::from_fn(3, 3, |r, c| if r == 0 { gr.jac_h[(0, c)] } else { gr.jac_g[(r - 1, c)] });
        if isqp::numkit::condition_number(&a) > 1e4 {
            continue;
        }
        let d = linearized_direction(&p, &mut rng);
        let pen = PenaltyState {
            eq: DVector::from_fn(1, |_, _| rng.gen_range(0.0..5.0)),
            ineq: DVector::from_fn(2, |_, _| rng.gen_range(0.0..5.0)),
        };
        let dphi = merit_directional_derivative(&p, &d, &pen).unwrap();
        let phi0 = merit_value(&p, &pen);
        let mut quotient = |alpha: f64| {
            let q = ev.point(&(&x + &d * alpha)).unwrap();
            (merit_value(&q, &pen) - phi0) / alpha
        };
        let scale = 1.0 + dphi.abs() + d.norm_squared();
        for (alpha, tol) in [(1e-4, 1e-6), (1e-6, 1e-7)] {
            let rich = 2.0 * quotient(alpha / 2.0) - quotient(alpha);
            assert!((rich - dphi).abs() <= tol * scale, "alpha {alpha}: {rich} vs {dphi}");
        }
        let plain = quotient(1e-6);
        assert!((plain - dphi).abs() <= 1e-4 * scale, "{plain} vs {dphi}");
        checked += 1;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn penalties_dominate_and_grow_with_multipliers(
        rho in proptest::collection::vec(0.0f64..100.0, 1..6),
        lam in proptest::collection::vec(-100.0f64..100.0, 6),
        bump in 0.0f64..50.0,
    ) {
        let k = rho.len();
        let pen = PenaltyState { eq: DVector::from_vec(rho.clone()), ineq: DVector::from_vec(rho) };
        let l = DVector::from_fn(k, |i, _| lam[i]);
        let larger = l.map(|v| v.signum() * (v.abs() + bump));
        let a = update_penalties(&pen, &l, &l);
        let b = update_penalties(&pen, &larger, &larger);
        for i in 0..k {
            prop_assert!(a.eq[i] >= l[i].abs() && a.ineq[i] >= l[i].abs());
            prop_assert!(b.eq[i] >= a.eq[i] && b.ineq[i] >= a.ineq[i]);
        }
    }

    #[test]
    fn bfgs_keeps_spd(seed in any::<u64>(), n in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = rand_spd(&mut rng, n);
        let s = rand_vec(&mut rng, n, 1.0);
        let y = rand_vec(&mut rng, n, 2.0);
        prop_assume!(s.norm() > 1e-3);
        let bs = &b * &s;
        let (r, theta) = damped_secant(&bs, &s, &y).unwrap();
        prop_assert!((0.0..=1.0).contains(&theta));
        let sbs = s.dot(&bs);
        prop_assert!(s.dot(&r) >= 0.2 * sbs - 1e-12 * (1.0 + sbs));
        let next = damped_bfgs_dense(&b, &s, &y).unwrap();
        let eig = next.clone().symmetric_eigen().eigenvalues;
        prop_assert!(eig.min() > 0.0, "{eig}");
        prop_assert!((&next * &s - &r).amax() <= 1e-8 * (1.0 + r.amax()));
    }

    #[test]
    fn accepted_armijo_steps_satisfy_sufficient_decrease(seed in any::<u64>(), scale in 0.1f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prob = wavy(&mut rng);
        let mut ev = Evaluator::new(&prob);
        let x = rand_vec(&mut rng, 3, 1.5);
        let mut p = ev.point(&x).unwrap();
        ev.add_gradients(&mut p).unwrap();
        let pen = PenaltyState { eq: DVector::from_element(1, 0.5), ineq: DVector::from_element(2, 0.5) };
        let d = -&p.grads.as_ref().unwrap().grad_f * scale;
        let dphi = merit_directional_derivative(&p, &d, &pen).unwrap();
        prop_assume!(dphi < 0.0);
        let merit0 = merit_value(&p, &pen);
        let cfg = LineSearchConfig::default();
        if let Ok(out) = armijo_search(&mut ev, &x, &d, merit0, dphi, &pen, &cfg) {
            let phi = merit_value(&out.point, &pen);
            match out.accepted_by {
                AcceptedBy::Armijo => prop_assert!(phi - merit0 < out.alpha * cfg.eta * dphi),
                AcceptedBy::Cap => prop_assert_eq!(out.alpha, 0.5f64.powi(9)),
            }
            prop_assert!((&out.point.x - (&x + &d * out.alpha)).amax() == 0.0);
        }
    }

    #[test]
    fn group_checks_ignore_constraint_order(seed in any::<u64>(), me in 0usize..4, mi in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 3;
        let mag = 10f64.powf(rng.gen_range(-8.0..-2.0));
        let h = rand_vec(&mut rng, me, mag);
        let g = rand_vec(&mut rng, mi, mag);
        let jh = DMatrix::from_fn(me, n, |_, _| rng.gen_range(-1.0..1.0));
        let jg = DMatrix::from_fn(mi, n, |_, _| rng.gen_range(-1.0..1.0));
        let lam = rand_vec(&mut rng, me, 2.0);
        let mu = rand_vec(&mut rng, mi, 2.0).abs();
        let d = rand_vec(&mut rng, n, mag);
        let grad_f = rand_vec(&mut rng, n, 1.0);
        let point = |h: DVector<f64>, g: DVector<f64>, jh: DMatrix<f64>, jg: DMatrix<f64>, f: f64| EvalPoint {
            x: DVector::zeros(n),
            f,
            g,
            h,
            grads: Some(Gradients { grad_f: grad_f.clone(), jac_g: jg, jac_h: jh }),
        };
        let mut pe: Vec<usize> = (0..me).collect();
        let mut pi: Vec<usize> = (0..mi).collect();
        pe.reverse();
        pi.rotate_left(mi.min(1));
        let perm_v = |v: &DVector<f64>, p: &[usize]| DVector::from_fn(p.len(), |i, _| v[p[i]]);
        let perm_m = |m: &DMatrix<f64>, p: &[usize]| DMatrix::from_fn(p.len(), n, |i, j| m[(p[i], j)]);
        let a = point(h.clone(), g.clone(), jh.clone(), jg.clone(), 1.0);
        let b = point(perm_v(&h, &pe), perm_v(&g, &pi), perm_m(&jh, &pe), perm_m(&jg, &pi), 1.0);
        let tol = 1e-5;
        let ra = check_group1(&a, &d, &lam, &mu, tol).unwrap();
        let rb = check_group1(&b, &d, &perm_v(&lam, &pe), &perm_v(&mu, &pi), tol).unwrap();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-14 * (1.0 + x.abs());
        prop_assert!(close(ra.acc_inf, rb.acc_inf) && close(ra.acc_opt, rb.acc_opt));
        prop_assert_eq!(ra.acc_step, rb.acc_step);
        let near = |v: f64| (v - tol).abs() <= 1e-12;
        if !near(ra.acc_inf) && !near(ra.acc_opt) {
            prop_assert_eq!(ra.satisfied, rb.satisfied);
        }
        let old = point(DVector::zeros(me), DVector::zeros(mi), jh.clone(), jg.clone(), 1.0 + mag);
        let ga = check_group2(&old, &a, &d, tol);
        let gb = check_group2(&old, &b, &d, tol);
        prop_assert!(close(ga.acc_inf, gb.acc_inf));
        if !near(ga.acc_inf) {
            prop_assert_eq!(ga.satisfied, gb.satisfied);
        }
        prop_assert!(ra.acc_inf >= 0.0 && ra.acc_opt >= 0.0 && ga.acc_opt >= 0.0);
    }
}
