//! Trace a hard cone solve (tuning aid).
use flexmarket::bids::{generate_bids, synthesize_base_supply, SpreadLevel};
use flexmarket::formulation::{Formulation, MarketInstance};
use flexmarket::netmodel::{build_radial, cases, parse_case, BuildOptions};
use flexmarket::solver::{solve, SolverSettings};

fn main() {
    let raw = parse_case(cases::CASE141).unwrap();
    let options = BuildOptions {
        default_s_max: 999.0,
        interface_impedance: (0.002, 0.01),
        ..BuildOptions::default()
    };
    let net = build_radial(&raw, &options).unwrap();
    let profile = synthesize_base_supply(&net, 1, 0.2);
    let bids = generate_bids(&profile, SpreadLevel::Sl2, &net, 1, None).unwrap();
    let mut inst = MarketInstance::new(net, profile, bids, Formulation::Socp);
    inst.v_band = (0.99, 1.01);
    let (system, _) = inst.build().unwrap();
    let settings = SolverSettings { record_trace: true, ..Default::default() };
    let report = solve(&system, &settings);
    println!("status {:?} iters {}", report.status, report.iterations);
    for t in report.trace.iter().rev().take(12).collect::<Vec<_>>().iter().rev() {
        println!(
            "it {:3} mu {:9.2e} pres {:9.2e} dres {:9.2e} gap {:9.2e} step {:6.4} sigma {:5.3} tau {:8.2e} kappa {:8.2e}",
            t.iter, t.mu, t.primal_res, t.dual_res, t.gap, t.step, t.sigma, t.tau, t.kappa
        );
    }
}
