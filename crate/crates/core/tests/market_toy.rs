//! Two-bus market oracles: the cleared results are checked against
//! brute-force searches over the activation grid, with network feasibility
//! evaluated from first principles (polygon feasibility for the linear
//! build, exact branch-flow equations for the cone build).

use flexmarket::bids::{BaseProfile, FlexBid};
use flexmarket::formulation::{polygon_edges, Formulation, MarketInstance};
use flexmarket::market::{clear, lindistflow_loss_residuals, settle, verify_physics};
use flexmarket::netmodel::{build_radial, parse_case, BuildOptions};

const LINE_R: f64 = 0.01;
const LINE_X: f64 = 0.02;

fn toy_instance(line_cap_mva: f64, bid: Option<FlexBid>) -> MarketInstance {
    let text = format!(
        "mpc.baseMVA = 10;\n\
         mpc.bus = [\n\
         1 3 0 0 0 0 1 1 0 12.5 1 1.1 0.9;\n\
         2 1 10 0 0 0 1 1 0 12.5 1 1.1 0.9;\n\
         ];\n\
         mpc.gen = [ 1 0 0 999 -999 1 10 1 999 -999; ];\n\
         mpc.branch = [ 1 2 {LINE_R} {LINE_X} 0 {line_cap_mva} 0 0 0 0 1 -360 360; ];\n"
    );
    let net = build_radial(&parse_case(&text).unwrap(), &BuildOptions::default()).unwrap();
    let profile = BaseProfile {
        p_gen: vec![0.0, 0.0],
        p_load: vec![0.0, 10.0],
        q_load: vec![0.0, 0.0],
        load_scale: 1.0,
    };
    let mut inst = MarketInstance::new(net, profile, bid.into_iter().collect(), Formulation::Lp);
    inst.v_band = (0.9, 1.1);
    inst
}

fn demand_up_bid(cap: f64, cost: f64) -> FlexBid {
    FlexBid {
        bus: 2,
        qty_p_up: 0.0,
        qty_p_dn: 0.0,
        qty_d_up: cap,
        qty_d_dn: 0.0,
        cost_p_up: 50.0,
        cost_p_dn: 50.0,
        cost_d_up: cost,
        cost_d_dn: 40.0,
    }
}

/// Smallest feasible demand reduction under the polygonal flow limit,
/// searched on a 0.01 MW grid.
fn lp_oracle(load_mw: f64, cap_mva: f64, cost: f64, cap_bid: f64) -> (f64, f64) {
    let edges = polygon_edges(12).unwrap();
    let base = 10.0;
    let mut best = None;
    let mut dd = 0.0;
    while dd <= cap_bid + 1e-12 {
        let p = (load_mw - dd) / base;
        let s_max = cap_mva / base;
        let feasible = edges.iter().all(|e| e.alpha * p + e.delta * s_max <= 1e-12);
        if feasible {
            best = Some((dd, cost * dd));
            break;
        }
        dd += 0.01;
    }
    best.expect("oracle found a feasible activation")
}

/// Smallest feasible demand reduction under the exact branch-flow
/// equations with losses, searched on a 0.1 kW grid.
fn socp_oracle(load_mw: f64, cap_mva: f64, cost: f64, cap_bid: f64) -> (f64, f64) {
    let base = 10.0;
    let s_cap = cap_mva / base;
    let mut dd = 0.0;
    while dd <= cap_bid + 1e-12 {
        let demand = (load_mw - dd) / base;
        // fixed point of the 2-bus branch-flow equations at slack voltage 1:
        // P = demand + r l, Q = x l, l = P^2 + Q^2
        let mut l = 0.0;
        for _ in 0..200 {
            let p = demand + LINE_R * l;
            let q = LINE_X * l;
            l = p * p + q * q;
        }
        let p = demand + LINE_R * l;
        let q = LINE_X * l;
        if (p * p + q * q).sqrt() <= s_cap + 1e-12 {
            return (dd, cost * dd);
        }
        dd += 1e-4;
    }
    panic!("oracle found no feasible activation");
}

#[test]
fn lp_toy_matches_grid_search_oracle() {
    let inst = toy_instance(8.0, Some(demand_up_bid(5.0, 40.0)));
    let result = clear(&inst).unwrap();
    let (dd_oracle, cost_oracle) = lp_oracle(10.0, 8.0, 40.0, 5.0);
    assert!((dd_oracle - 2.0).abs() < 1e-12, "oracle activation {dd_oracle}");

    let act = result.activations[&2];
    assert!((act.d_up - dd_oracle).abs() <= 1e-3, "d_up = {}", act.d_up);
    assert!((result.objective - cost_oracle).abs() <= 1e-2, "objective = {}", result.objective);
    let bus2 = 1;
    assert!((result.dlmp[bus2] - 40.0).abs() <= 1e-2, "dlmp = {}", result.dlmp[bus2]);
    // the congested line is reported binding
    assert!(result.flows[bus2].binding);
}

#[test]
fn socp_toy_needs_slightly_more_relief() {
    let mut inst = toy_instance(8.0, Some(demand_up_bid(5.0, 40.0)));
    inst.formulation = Formulation::Socp;
    let result = clear(&inst).unwrap();
    let (dd_oracle, _) = socp_oracle(10.0, 8.0, 40.0, 5.0);
    assert!(dd_oracle > 2.0, "losses add to the sending-end flow");

    let act = result.activations[&2];
    assert!(
        (act.d_up - dd_oracle).abs() <= 1e-3,
        "d_up = {} vs oracle {dd_oracle}",
        act.d_up
    );
    assert!(act.d_up > 2.0);

    // voltage equation residual at solver tolerance
    let physics = verify_physics(&result, &inst);
    assert!(physics.max_voltage() <= 1e-6);
    assert!(physics.min_cone_gap().unwrap() >= -1e-7);
}

#[test]
fn no_bids_feasible_base_clears_at_zero() {
    for formulation in [Formulation::Lp, Formulation::Socp] {
        let mut inst = toy_instance(20.0, None);
        inst.formulation = formulation;
        let result = clear(&inst).unwrap();
        assert!(result.objective.abs() <= 1e-9);
        assert!(result.activations.is_empty());
    }
}

#[test]
fn uncongested_prices_are_uniform() {
    // no binding flow or voltage constraint: the linear formulation's
    // prices carry no spatial spread
    let inst = toy_instance(20.0, Some(demand_up_bid(5.0, 40.0)));
    let result = clear(&inst).unwrap();
    assert!(result.binding.flow_branches.is_empty());
    let spread = result.dlmp.iter().fold(0.0f64, |m, &v| m.max(v))
        - result.dlmp.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    assert!(spread.abs() <= 1e-6, "dlmp spread {spread}");
}

#[test]
fn downward_bids_are_opportunistic_as_written() {
    // the objective subtracts downward-activation cost, so an uncongested
    // market activates the full downward cap
    let bid = FlexBid {
        bus: 2,
        qty_p_up: 0.0,
        qty_p_dn: 0.0,
        qty_d_up: 0.0,
        qty_d_dn: 3.0,
        cost_p_up: 50.0,
        cost_p_dn: 50.0,
        cost_d_up: 40.0,
        cost_d_dn: 41.0,
    };
    let inst = toy_instance(30.0, Some(bid));
    let result = clear(&inst).unwrap();
    let act = result.activations[&2];
    assert!((act.d_dn - 3.0).abs() <= 1e-5);
    assert!((result.objective + 41.0 * 3.0).abs() <= 1e-4);
}

#[test]
fn settlement_pays_upward_charges_downward() {
    let inst = toy_instance(8.0, Some(demand_up_bid(5.0, 40.0)));
    let mut result = clear(&inst).unwrap();
    let bus2 = 1;
    // revenue = dlmp * d_up = 40 * 2
    assert!((result.revenues[bus2] - 80.0).abs() <= 0.1);

    // doubling prices doubles revenues
    let before = result.revenues.clone();
    for p in result.dlmp.iter_mut() {
        *p *= 2.0;
    }
    settle(&mut result);
    for (a, b) in before.iter().zip(&result.revenues) {
        assert!((2.0 * a - b).abs() <= 1e-9);
    }

    // zero activation everywhere -> zero revenue
    let none = clear(&toy_instance(20.0, None)).unwrap();
    assert!(none.revenues.iter().all(|&r| r == 0.0));
}

#[test]
fn objective_matches_cost_of_activations() {
    let inst = toy_instance(8.0, Some(demand_up_bid(5.0, 40.0)));
    let result = clear(&inst).unwrap();
    let mut expected = 0.0;
    for bid in &inst.bids {
        let act = result.activations[&bid.bus];
        expected += bid.cost_p_up * act.p_up - bid.cost_p_dn * act.p_dn + bid.cost_d_up * act.d_up
            - bid.cost_d_dn * act.d_dn;
    }
    assert!(
        (result.objective - expected).abs() <= 1e-9 * (1.0 + expected.abs()),
        "{} vs {}",
        result.objective,
        expected
    );
}

#[test]
fn tightening_capacity_cannot_cheapen_clearing() {
    let mut last = 0.0;
    for cap in [9.0, 8.0, 7.0, 6.5] {
        let inst = toy_instance(cap, Some(demand_up_bid(5.0, 40.0)));
        let result = clear(&inst).unwrap();
        assert!(result.objective >= last - 1e-7, "cap {cap}");
        last = result.objective;
    }
}

#[test]
fn lp_physics_residuals_small() {
    let inst = toy_instance(8.0, Some(demand_up_bid(5.0, 40.0)));
    let result = clear(&inst).unwrap();
    let physics = verify_physics(&result, &inst);
    assert!(physics.max_real() <= 1e-6);
    assert!(physics.max_reactive() <= 1e-6);
    assert!(physics.max_voltage() <= 1e-6);
    assert!(physics.cone_gap.is_none());
}

#[test]
fn lp_solution_misses_exactly_the_loss_terms() {
    let inst = toy_instance(8.0, Some(demand_up_bid(5.0, 40.0)));
    let result = clear(&inst).unwrap();
    for (bus, (residual, dropped)) in lindistflow_loss_residuals(&result, &inst).iter().enumerate()
    {
        assert!(
            (residual + dropped).abs() <= 1e-6,
            "bus {bus}: residual {residual} vs dropped {dropped}"
        );
    }
}

#[test]
fn infeasible_market_reports_solver_error() {
    // load 10 MW, line cap 5 MVA, only 2 MW of relief available
    let inst = toy_instance(5.0, Some(demand_up_bid(2.0, 40.0)));
    let err = clear(&inst).unwrap_err();
    let msg = format!("{err}");
    assert!(msg.contains("solver"), "unexpected error: {msg}");
}
