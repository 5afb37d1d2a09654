//! Emission of the linear and second-order-cone constraint systems.

use super::polygon::polygon_edges;
use super::{
    AffineExpr, ConeSystem, FormulationError, LinearRow, MarketInstance, RowTag, SocConstraint,
    VariableLayout,
};

/// Allocate the flat variable vector for an instance.
fn layout(inst: &MarketInstance, with_current: bool) -> Result<VariableLayout, FormulationError> {
    let n = inst.net.n_buses();
    let mut next = 0usize;
    let mut alloc = |count: usize| -> Vec<usize> {
        let v = (next..next + count).collect();
        next += count;
        v
    };

    let mut bid_buses = Vec::with_capacity(inst.bids.len());
    for bid in &inst.bids {
        let idx = inst
            .net
            .index_of(bid.bus)
            .map_err(|_| FormulationError::Instance(format!("bid at unknown bus {}", bid.bus)))?;
        bid_buses.push(idx);
    }
    let k = bid_buses.len();
    let p_up = alloc(k);
    let p_dn = alloc(k);
    let d_up = alloc(k);
    let d_dn = alloc(k);
    let q = alloc(n);
    let v = alloc(n);
    let flow_p = alloc(n);
    let flow_q = alloc(n);
    let current_sq = if with_current { Some(alloc(n)) } else { None };

    Ok(VariableLayout {
        n_vars: next,
        bid_buses,
        p_up,
        p_dn,
        d_up,
        d_dn,
        q,
        v,
        flow_p,
        flow_q,
        current_sq,
    })
}

/// Objective and box bounds shared by both formulations.
///
/// Costs are EUR/MWh and variables are per-unit, so each coefficient is
/// scaled by the MVA base; the cleared objective is then EUR for a one-hour
/// activation. Downward activations enter with negative sign.
fn base_system(inst: &MarketInstance, lay: &VariableLayout) -> ConeSystem {
    let net = &inst.net;
    let base = net.base_mva;
    let mut objective = vec![0.0; lay.n_vars];
    let mut lower: Vec<Option<f64>> = vec![None; lay.n_vars];
    let mut upper: Vec<Option<f64>> = vec![None; lay.n_vars];

    for (k, bid) in inst.bids.iter().enumerate() {
        objective[lay.p_up[k]] = bid.cost_p_up * base;
        objective[lay.p_dn[k]] = -bid.cost_p_dn * base;
        objective[lay.d_up[k]] = bid.cost_d_up * base;
        objective[lay.d_dn[k]] = -bid.cost_d_dn * base;
        for (var, cap) in [
            (lay.p_up[k], bid.qty_p_up),
            (lay.p_dn[k], bid.qty_p_dn),
            (lay.d_up[k], bid.qty_d_up),
            (lay.d_dn[k], bid.qty_d_dn),
        ] {
            lower[var] = Some(0.0);
            upper[var] = Some(net.to_pu(cap));
        }
    }

    for bus in 0..net.n_buses() {
        let (q_min, q_max) = match inst.reactive_gamma {
            None => {
                let q = -net.to_pu(inst.profile.q_load[bus]);
                (q, q)
            }
            Some(gamma) => {
                let band = (1.0 + gamma) * net.to_pu(inst.profile.q_load[bus]).abs();
                (-band, band)
            }
        };
        lower[lay.q[bus]] = Some(q_min);
        upper[lay.q[bus]] = Some(q_max);

        let (v_lo, v_hi) = inst.v_band_at(bus);
        lower[lay.v[bus]] = Some(v_lo * v_lo);
        upper[lay.v[bus]] = Some(v_hi * v_hi);
    }
    if let Some(l) = &lay.current_sq {
        for bus in 0..net.n_buses() {
            lower[l[bus]] = Some(0.0);
        }
    }

    ConeSystem {
        n_vars: lay.n_vars,
        objective,
        lower,
        upper,
        equalities: Vec::new(),
        inequalities: Vec::new(),
        cones: Vec::new(),
        var_names: lay.names(net),
    }
}

struct RowBuf {
    cols: Vec<usize>,
    coeffs: Vec<f64>,
}

impl RowBuf {
    fn new() -> Self {
        RowBuf {
            cols: Vec::new(),
            coeffs: Vec::new(),
        }
    }
    fn push(&mut self, col: usize, coeff: f64) {
        if coeff != 0.0 {
            self.cols.push(col);
            self.coeffs.push(coeff);
        }
    }
    fn into_row(self, rhs: f64, tag: RowTag) -> LinearRow {
        LinearRow {
            cols: self.cols,
            coeffs: self.coeffs,
            rhs,
            tag,
        }
    }
}

/// Real-power balance row at a bus, with the net-injection definition
/// substituted in: activation terms plus entering flow minus child flows
/// (and, for the cone build, loss and shunt corrections) equal the base
/// load minus base supply. The row is tagged with its bus for dual
/// recovery.
fn real_balance(
    inst: &MarketInstance,
    lay: &VariableLayout,
    bus: usize,
    with_losses: bool,
) -> LinearRow {
    let net = &inst.net;
    let mut row = RowBuf::new();
    for (k, &b) in lay.bid_buses.iter().enumerate() {
        if b == bus {
            row.push(lay.p_up[k], 1.0);
            row.push(lay.p_dn[k], -1.0);
            row.push(lay.d_up[k], 1.0);
            row.push(lay.d_dn[k], -1.0);
        }
    }
    row.push(lay.flow_p[bus], 1.0);
    for &child in &net.children[bus] {
        row.push(lay.flow_p[child], -1.0);
    }
    if with_losses {
        let br = &net.branches[bus];
        if let Some(l) = &lay.current_sq {
            row.push(l[bus], -br.r);
        }
        row.push(lay.v[bus], -net.buses[bus].shunt_g);
    }
    let rhs = net.to_pu(inst.profile.p_load[bus] - inst.profile.p_gen[bus]);
    row.into_row(rhs, RowTag::RealBalance { bus })
}

fn reactive_balance(
    inst: &MarketInstance,
    lay: &VariableLayout,
    bus: usize,
    with_losses: bool,
) -> LinearRow {
    let net = &inst.net;
    let mut row = RowBuf::new();
    row.push(lay.q[bus], 1.0);
    row.push(lay.flow_q[bus], 1.0);
    for &child in &net.children[bus] {
        row.push(lay.flow_q[child], -1.0);
    }
    if with_losses {
        let br = &net.branches[bus];
        if let Some(l) = &lay.current_sq {
            row.push(l[bus], -br.x);
        }
        row.push(lay.v[bus], -net.buses[bus].shunt_b);
    }
    row.into_row(0.0, RowTag::ReactiveBalance { bus })
}

/// Voltage drop along the branch entering a bus. For the root the upstream
/// voltage is the fixed slack, which lands on the right-hand side.
fn voltage_drop(
    inst: &MarketInstance,
    lay: &VariableLayout,
    bus: usize,
    with_losses: bool,
) -> LinearRow {
    let net = &inst.net;
    let br = &net.branches[bus];
    let mut row = RowBuf::new();
    row.push(lay.v[bus], 1.0);
    let rhs = match br.from_bus {
        Some(parent) => {
            row.push(lay.v[parent], -1.0);
            0.0
        }
        None => net.slack_voltage,
    };
    row.push(lay.flow_p[bus], 2.0 * br.r);
    row.push(lay.flow_q[bus], 2.0 * br.x);
    if with_losses {
        if let Some(l) = &lay.current_sq {
            row.push(l[bus], -(br.r * br.r + br.x * br.x));
        }
    }
    row.into_row(rhs, RowTag::VoltageDrop { bus })
}

/// Linear market build: LinDistFlow balance and voltage rows plus polygon
/// flow limits.
pub fn build_lp(inst: &MarketInstance) -> Result<(ConeSystem, VariableLayout), FormulationError> {
    inst.validate()?;
    let lay = layout(inst, false)?;
    let mut sys = base_system(inst, &lay);
    let net = &inst.net;
    let n = net.n_buses();

    for bus in 0..n {
        sys.equalities.push(real_balance(inst, &lay, bus, false));
    }
    for bus in 0..n {
        sys.equalities.push(reactive_balance(inst, &lay, bus, false));
    }
    for bus in 0..n {
        sys.equalities.push(voltage_drop(inst, &lay, bus, false));
    }

    let edges = polygon_edges(inst.polygon_sides)?;
    for branch in 0..n {
        let s_max = net.to_pu(net.branches[branch].s_max);
        for (m, e) in edges.iter().enumerate() {
            let mut row = RowBuf::new();
            row.push(lay.flow_p[branch], e.alpha);
            row.push(lay.flow_q[branch], e.beta);
            sys.inequalities
                .push(row.into_row(-e.delta * s_max, RowTag::PolygonEdge { branch, edge: m }));
        }
    }

    Ok((sys, lay))
}

/// Cone benchmark build: relaxed branch-flow rows, rotated current cones
/// and quadratic flow limits.
pub fn build_socp(inst: &MarketInstance) -> Result<(ConeSystem, VariableLayout), FormulationError> {
    inst.validate()?;
    let lay = layout(inst, true)?;
    let mut sys = base_system(inst, &lay);
    let net = &inst.net;
    let n = net.n_buses();
    let l_vars = lay.current_sq.as_ref().expect("cone layout has currents");

    for bus in 0..n {
        sys.equalities.push(real_balance(inst, &lay, bus, true));
    }
    for bus in 0..n {
        sys.equalities.push(reactive_balance(inst, &lay, bus, true));
    }
    for bus in 0..n {
        sys.equalities.push(voltage_drop(inst, &lay, bus, true));
    }

    for branch in 0..n {
        let br = &net.branches[branch];
        // rotated cone P^2 + Q^2 <= l * v_up as a standard cone
        // (l + v_up, 2P, 2Q, l - v_up); for the interface branch the
        // upstream voltage is the fixed slack constant.
        let v_up = |sign: f64| -> AffineExpr {
            match br.from_bus {
                Some(parent) => AffineExpr {
                    constant: 0.0,
                    cols: vec![l_vars[branch], lay.v[parent]],
                    coeffs: vec![1.0, sign],
                },
                None => AffineExpr {
                    constant: sign * net.slack_voltage,
                    cols: vec![l_vars[branch]],
                    coeffs: vec![1.0],
                },
            }
        };
        let lin = |var: usize, coeff: f64| AffineExpr {
            constant: 0.0,
            cols: vec![var],
            coeffs: vec![coeff],
        };
        sys.cones.push(SocConstraint {
            exprs: vec![
                v_up(1.0),
                lin(lay.flow_p[branch], 2.0),
                lin(lay.flow_q[branch], 2.0),
                v_up(-1.0),
            ],
            tag: RowTag::CurrentCone { branch },
        });

        sys.cones.push(SocConstraint {
            exprs: vec![
                AffineExpr {
                    constant: net.to_pu(br.s_max),
                    cols: vec![],
                    coeffs: vec![],
                },
                lin(lay.flow_p[branch], 1.0),
                lin(lay.flow_q[branch], 1.0),
            ],
            tag: RowTag::FlowCone { branch },
        });
    }

    Ok((sys, lay))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bids::{synthesize_base_supply, FlexBid};
    use crate::formulation::Formulation;
    use crate::netmodel::{build_radial, parse_case, BuildOptions};

    fn two_bus_instance(bids: Vec<FlexBid>) -> MarketInstance {
        let text = "mpc.baseMVA = 10;\n\
            mpc.bus = [\n\
            1 3 0 0 0 0 1 1 0 12.5 1 1.1 0.9;\n\
            2 1 10 0 0 0 1 1 0 12.5 1 1.1 0.9;\n\
            ];\n\
            mpc.gen = [ 1 0 0 999 -999 1 10 1 999 -999; ];\n\
            mpc.branch = [ 1 2 0.01 0.02 0 8 0 0 0 0 1 -360 360; ];\n";
        let raw = parse_case(text).unwrap();
        let net = build_radial(&raw, &BuildOptions::default()).unwrap();
        let profile = synthesize_base_supply(&net, 1, 1.0);
        let mut inst = MarketInstance::new(net, profile, bids, Formulation::Lp);
        inst.v_band = (0.9, 1.1);
        inst
    }

    fn one_bid() -> FlexBid {
        FlexBid {
            bus: 2,
            qty_p_up: 0.0,
            qty_p_dn: 0.0,
            qty_d_up: 5.0,
            qty_d_dn: 0.0,
            cost_p_up: 50.0,
            cost_p_dn: 50.0,
            cost_d_up: 40.0,
            cost_d_dn: 40.0,
        }
    }

    #[test]
    fn lp_row_counts_match_emission_rule() {
        let inst = two_bus_instance(vec![one_bid()]);
        let (sys, lay) = build_lp(&inst).unwrap();
        // balance rows: real + reactive per bus; voltage drop per bus
        assert_eq!(sys.equalities.len(), 2 * 2 + 2);
        // polygon rows: M per branch, interface included
        assert_eq!(sys.inequalities.len(), 12 * 2);
        assert!(sys.cones.is_empty());
        assert_eq!(lay.n_vars, 4 + 2 + 2 + 2 + 2);
    }

    #[test]
    fn zero_bids_leaves_network_variables_only() {
        let inst = two_bus_instance(vec![]);
        let (sys, lay) = build_lp(&inst).unwrap();
        assert!(lay.bid_buses.is_empty());
        assert_eq!(lay.n_vars, 4 * 2);
        assert!(sys.objective.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn objective_signs_follow_bid_directions() {
        let inst = two_bus_instance(vec![FlexBid {
            bus: 2,
            qty_p_up: 1.0,
            qty_p_dn: 1.0,
            qty_d_up: 1.0,
            qty_d_dn: 1.0,
            cost_p_up: 50.0,
            cost_p_dn: 51.0,
            cost_d_up: 40.0,
            cost_d_dn: 41.0,
        }]);
        let (sys, lay) = build_lp(&inst).unwrap();
        let base = inst.net.base_mva;
        assert_eq!(sys.objective[lay.p_up[0]], 50.0 * base);
        assert_eq!(sys.objective[lay.p_dn[0]], -51.0 * base);
        assert_eq!(sys.objective[lay.d_up[0]], 40.0 * base);
        assert_eq!(sys.objective[lay.d_dn[0]], -41.0 * base);
    }

    #[test]
    fn lp_and_socp_share_bid_objective() {
        let inst = two_bus_instance(vec![one_bid()]);
        let (lp, lp_lay) = build_lp(&inst).unwrap();
        let (socp, socp_lay) = build_socp(&inst.with_formulation(Formulation::Socp)).unwrap();
        for k in 0..1 {
            for (a, b) in [
                (lp_lay.p_up[k], socp_lay.p_up[k]),
                (lp_lay.p_dn[k], socp_lay.p_dn[k]),
                (lp_lay.d_up[k], socp_lay.d_up[k]),
                (lp_lay.d_dn[k], socp_lay.d_dn[k]),
            ] {
                assert_eq!(lp.objective[a], socp.objective[b]);
            }
        }
    }

    #[test]
    fn every_variable_appears_and_tags_are_unique() {
        let inst = two_bus_instance(vec![one_bid()]);
        for formulation in [Formulation::Lp, Formulation::Socp] {
            let (sys, lay) = inst.with_formulation(formulation).build().unwrap();
            let mut used = vec![false; lay.n_vars];
            for row in sys.equalities.iter().chain(&sys.inequalities) {
                for &c in &row.cols {
                    used[c] = true;
                }
            }
            for cone in &sys.cones {
                for e in &cone.exprs {
                    for &c in &e.cols {
                        used[c] = true;
                    }
                }
            }
            assert!(used.iter().all(|&u| u), "unused variable in {formulation}");

            let mut seen = std::collections::BTreeSet::new();
            for row in &sys.equalities {
                if let RowTag::RealBalance { bus } = row.tag {
                    assert!(seen.insert(bus), "duplicate balance tag for bus {bus}");
                }
            }
            assert_eq!(seen.len(), inst.net.n_buses());
        }
    }

    #[test]
    fn fixed_reactive_bounds_follow_load() {
        let inst = two_bus_instance(vec![]);
        let (sys, lay) = build_lp(&inst).unwrap();
        for bus in 0..2 {
            let q = -inst.net.to_pu(inst.profile.q_load[bus]);
            assert_eq!(sys.lower[lay.q[bus]], Some(q));
            assert_eq!(sys.upper[lay.q[bus]], Some(q));
        }
        let mut widened = inst.clone();
        widened.reactive_gamma = Some(0.5);
        let (sys, lay) = build_lp(&widened).unwrap();
        for bus in 0..2 {
            let band = 1.5 * widened.net.to_pu(widened.profile.q_load[bus]).abs();
            assert_eq!(sys.lower[lay.q[bus]], Some(-band));
            assert_eq!(sys.upper[lay.q[bus]], Some(band));
        }
    }

    #[test]
    fn bid_at_unknown_bus_rejected() {
        let mut bid = one_bid();
        bid.bus = 77;
        let inst = two_bus_instance(vec![bid]);
        assert!(matches!(
            build_lp(&inst),
            Err(FormulationError::Instance(_))
        ));
    }

    #[test]
    fn invalid_band_rejected() {
        let mut inst = two_bus_instance(vec![]);
        inst.v_band = (1.1, 0.9);
        assert!(matches!(
            inst.build(),
            Err(FormulationError::InvalidParameter(_))
        ));
    }

    #[test]
    fn json_dump_round_trips() {
        let inst = two_bus_instance(vec![one_bid()]);
        let (sys, _) = build_socp(&inst.with_formulation(Formulation::Socp)).unwrap();
        let json = sys.to_json();
        let back = ConeSystem::from_json(&json).unwrap();
        assert_eq!(back.n_vars, sys.n_vars);
        assert_eq!(back.equalities.len(), sys.equalities.len());
        assert_eq!(back.cones.len(), sys.cones.len());
        assert_eq!(back.objective, sys.objective);
    }
}
