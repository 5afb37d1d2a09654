//! Trace one random problem (tuning aid).
use flexmarket::solver::{solve, testgen, SolverSettings};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seed: u64 = args[0].parse().unwrap();
    let kind = if args.get(1).map(|s| s == "socp").unwrap_or(false) {
        testgen::Kind::SecondOrder
    } else {
        testgen::Kind::Linear
    };
    let sys = testgen::random_system(seed, kind, 60);
    let settings = SolverSettings { record_trace: true, ..Default::default() };
    let report = solve(&sys, &settings);
    println!("seed {seed}: {:?} iters {} residuals {:?}", report.status, report.iterations, report.kkt_residuals);
    for t in report.trace.iter().rev().take(10).collect::<Vec<_>>().iter().rev() {
        println!(
            "it {:3} mu {:9.2e} pres {:9.2e} dres {:9.2e} gap {:9.2e} step {:6.4} sigma {:5.3} tau {:8.2e} kappa {:8.2e}",
            t.iter, t.mu, t.primal_res, t.dual_res, t.gap, t.step, t.sigma, t.tau, t.kappa
        );
    }
}
