use isqp::driver::{solve_islsqp, solve_isqp, SolverConfig};
use isqp::problems::{corpus, corpus_ids};

fn main() {
    let cfg = SolverConfig::default();
    for id in corpus_ids() {
        let p = corpus(&id).unwrap();
        for (name, r) in [("isqp", solve_isqp(&p, &p.start, &cfg)), ("islsqp", solve_islsqp(&p, &p.start, &cfg))] {
            let err = p.known_optimum.as_ref().map(|o| (r.f_star - o.f).abs() / o.f.abs().max(1.0));
            println!(
                "{id:22} {name:7} {:32} f={:<14.8e} relerr={:<10.2e} inf={:<9.1e} it={:<4} nf={:<4} sub={:?} rst={} fb={}",
                r.status.as_str(), r.f_star, err.unwrap_or(f64::NAN), r.acc_inf, r.iterations, r.n_f, r.subproblem_counts, r.reset_count, r.fallback_events.len()
            );
        }
    }
}
