//! Market clearing: build, solve and translate solver output into market
//! quantities.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::formulation::{Formulation, FormulationError, MarketInstance, RowTag, VariableLayout};
use crate::solver::{
    EmbeddedIpm, KktResiduals, SolveReport, SolveStatus, SolverBackend, SolverSettings,
};

/// Binding-constraint detection threshold on duals and slacks.
pub const BINDING_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error("solver returned {status:?} after {iterations} iterations")]
    Solver {
        status: SolveStatus,
        iterations: usize,
        residuals: KktResiduals,
    },
    #[error("internal consistency violation: {0}")]
    Inconsistent(String),
}

/// Aggregated activations at one bus, MW.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Activation {
    pub p_up: f64,
    pub p_dn: f64,
    pub d_up: f64,
    pub d_dn: f64,
}

impl Activation {
    /// Net injection change caused by the activation, MW.
    pub fn net(&self) -> f64 {
        self.p_up - self.p_dn + self.d_up - self.d_dn
    }
}

/// State of one branch in the cleared market. `from` is `None` on the
/// virtual interface branch.
#[derive(Debug, Clone, Serialize)]
pub struct BranchFlow {
    pub from: Option<i64>,
    pub to: i64,
    pub p_mw: f64,
    pub q_mvar: f64,
    pub s_mva: f64,
    pub s_max_mva: f64,
    pub binding: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverDiagnostics {
    pub status: SolveStatus,
    pub iterations: usize,
    pub kkt_residuals: KktResiduals,
}

/// Binding constraint sets, by internal bus/branch index.
#[derive(Debug, Clone, Default, Serialize)]
pub struct BindingReport {
    pub flow_branches: Vec<usize>,
    pub voltage_lower: Vec<usize>,
    pub voltage_upper: Vec<usize>,
}

/// A cleared market.
#[derive(Debug, Clone, Serialize)]
pub struct ClearingResult {
    pub formulation: Formulation,
    /// External label per internal bus index.
    pub bus_ids: Vec<i64>,
    pub root: usize,
    /// Activated flexibility per bus (only buses with bids appear).
    pub activations: BTreeMap<i64, Activation>,
    /// Nodal price per bus, EUR/MWh.
    pub dlmp: Vec<f64>,
    /// Per-branch flows, aligned with buses (branch entering bus i).
    pub flows: Vec<BranchFlow>,
    /// Voltage magnitude per bus, p.u.
    pub voltages: Vec<f64>,
    /// Net reactive injection per bus, MVAr.
    pub reactive_injection: Vec<f64>,
    /// Squared current magnitude per branch, p.u. (cone formulation only).
    pub currents_sq: Option<Vec<f64>>,
    /// Total activation cost, EUR.
    pub objective: f64,
    /// Settled revenue per bus, EUR.
    pub revenues: Vec<f64>,
    pub binding: BindingReport,
    pub solver: SolverDiagnostics,
}

impl ClearingResult {
    /// Apparent flows over internal branches (interface excluded), MVA.
    pub fn internal_flows(&self) -> Vec<f64> {
        self.flows
            .iter()
            .filter(|f| f.from.is_some())
            .map(|f| f.s_mva)
            .collect()
    }

    /// Net per-unit injection at a bus implied by profile and activations.
    fn net_injection_pu(&self, inst: &MarketInstance, bus: usize) -> f64 {
        let base = inst.profile.net_injection(bus);
        let act = self
            .activations
            .get(&self.bus_ids[bus])
            .map(|a| a.net())
            .unwrap_or(0.0);
        inst.net.to_pu(base + act)
    }

    /// Serialize the full result as JSON.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("clearing result serializes")
    }

    /// Per-bus CSV table: dlmp, voltage, activations, revenue.
    pub fn bus_table_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bus,dlmp_eur_mwh,voltage_pu,p_up_mw,p_dn_mw,d_up_mw,d_dn_mw,revenue_eur")?;
        for i in 0..self.bus_ids.len() {
            let id = self.bus_ids[i];
            let a = self.activations.get(&id).copied().unwrap_or_default();
            writeln!(
                w,
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                id, self.dlmp[i], self.voltages[i], a.p_up, a.p_dn, a.d_up, a.d_dn,
                self.revenues[i]
            )?;
        }
        Ok(())
    }

    /// Per-branch CSV table: P, Q, S, capacity, binding flag.
    pub fn branch_table_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "from,to,p_mw,q_mvar,s_mva,s_max_mva,binding")?;
        for f in &self.flows {
            writeln!(
                w,
                "{},{},{:.6},{:.6},{:.6},{:.6},{}",
                f.from.map(|v| v.to_string()).unwrap_or_else(|| "grid".into()),
                f.to, f.p_mw, f.q_mvar, f.s_mva, f.s_max_mva, f.binding
            )?;
        }
        Ok(())
    }
}

/// Clear an instance with the embedded solver and default settings.
pub fn clear(inst: &MarketInstance) -> Result<ClearingResult, MarketError> {
    clear_with(inst, &EmbeddedIpm, &SolverSettings::default())
}

/// Clear an instance with an explicit solver backend.
pub fn clear_with(
    inst: &MarketInstance,
    backend: &dyn SolverBackend,
    settings: &SolverSettings,
) -> Result<ClearingResult, MarketError> {
    inst.validate()?;
    let (system, layout) = inst.build()?;
    let report = backend.solve(&system, settings);
    if report.status != SolveStatus::Optimal {
        return Err(MarketError::Solver {
            status: report.status,
            iterations: report.iterations,
            residuals: report.kkt_residuals,
        });
    }
    extract(inst, &system, &layout, &report)
}

fn extract(
    inst: &MarketInstance,
    system: &crate::formulation::ConeSystem,
    lay: &VariableLayout,
    report: &SolveReport,
) -> Result<ClearingResult, MarketError> {
    let net = &inst.net;
    let n = net.n_buses();
    let x = &report.primal;

    // activations, aggregated per bus
    let mut activations: BTreeMap<i64, Activation> = BTreeMap::new();
    for (k, &bus) in lay.bid_buses.iter().enumerate() {
        let entry = activations.entry(net.bus_id(bus)).or_default();
        entry.p_up += net.to_mw(x[lay.p_up[k]]);
        entry.p_dn += net.to_mw(x[lay.p_dn[k]]);
        entry.d_up += net.to_mw(x[lay.d_up[k]]);
        entry.d_dn += net.to_mw(x[lay.d_dn[k]]);
    }
    // cap sanity (allowing solver tolerance)
    let mut caps: BTreeMap<i64, Activation> = BTreeMap::new();
    for bid in &inst.bids {
        let c = caps.entry(bid.bus).or_default();
        c.p_up += bid.qty_p_up;
        c.p_dn += bid.qty_p_dn;
        c.d_up += bid.qty_d_up;
        c.d_dn += bid.qty_d_dn;
    }
    for (bus, act) in &activations {
        let cap = caps[bus];
        let tol = 1e-6 * net.base_mva;
        for (got, limit) in [
            (act.p_up, cap.p_up),
            (act.p_dn, cap.p_dn),
            (act.d_up, cap.d_up),
            (act.d_dn, cap.d_dn),
        ] {
            if got < -tol || got > limit + tol {
                return Err(MarketError::Inconsistent(format!(
                    "activation {got} MW at bus {bus} outside [0, {limit}]"
                )));
            }
        }
    }

    // nodal prices from tagged balance rows, de-scaled to EUR/MWh
    let balance_rows = system.real_balance_rows(n);
    let mut dlmp = vec![0.0; n];
    for bus in 0..n {
        let row = balance_rows[bus];
        if row == usize::MAX {
            return Err(MarketError::Inconsistent(format!(
                "no tagged balance row for bus {bus}"
            )));
        }
        dlmp[bus] = report.equality_duals[row] / net.base_mva;
    }

    let voltages: Vec<f64> = (0..n).map(|b| x[lay.v[b]].max(0.0).sqrt()).collect();
    let reactive_injection: Vec<f64> = (0..n).map(|b| net.to_mw(x[lay.q[b]])).collect();
    let currents_sq = lay
        .current_sq
        .as_ref()
        .map(|l| (0..n).map(|b| x[l[b]]).collect::<Vec<f64>>());

    // binding detection per branch
    let mut polygon_binding = vec![false; n];
    for (i, row) in system.inequalities.iter().enumerate() {
        if let RowTag::PolygonEdge { branch, .. } = row.tag {
            if report.inequality_duals[i] > BINDING_TOL || report.ineq_slacks[i] < BINDING_TOL {
                polygon_binding[branch] = true;
            }
        }
    }
    for (ci, cone) in system.cones.iter().enumerate() {
        if let RowTag::FlowCone { branch } = cone.tag {
            let slack = cone.exprs[0].eval(x)
                - (cone.exprs[1].eval(x).powi(2) + cone.exprs[2].eval(x).powi(2)).sqrt();
            if report.cone_duals[ci][0] > BINDING_TOL || slack < BINDING_TOL {
                polygon_binding[branch] = true;
            }
        }
    }

    let mut flows = Vec::with_capacity(n);
    for b in 0..n {
        let br = &net.branches[b];
        let p = net.to_mw(x[lay.flow_p[b]]);
        let q = net.to_mw(x[lay.flow_q[b]]);
        let s = p.hypot(q);
        if s > br.s_max * (1.0 + 1e-6) + 1e-9 {
            return Err(MarketError::Inconsistent(format!(
                "apparent flow {s} MVA exceeds capacity {} MVA on branch into bus {}",
                br.s_max,
                net.bus_id(b)
            )));
        }
        flows.push(BranchFlow {
            from: br.from_bus.map(|f| net.bus_id(f)),
            to: net.bus_id(b),
            p_mw: p,
            q_mvar: q,
            s_mva: s,
            s_max_mva: br.s_max,
            binding: polygon_binding[b],
        });
    }

    // voltage band sanity and binding sets
    let mut binding = BindingReport {
        flow_branches: (0..n).filter(|&b| polygon_binding[b]).collect(),
        ..Default::default()
    };
    for bus in 0..n {
        let (lo, hi) = inst.v_band_at(bus);
        let vm = voltages[bus];
        if vm < lo - 1e-6 || vm > hi + 1e-6 {
            return Err(MarketError::Inconsistent(format!(
                "voltage {vm} p.u. at bus {} outside [{lo}, {hi}]",
                net.bus_id(bus)
            )));
        }
        let var = lay.v[bus];
        if report.bound_duals_lo[var] > BINDING_TOL || (x[var] - lo * lo).abs() < BINDING_TOL {
            binding.voltage_lower.push(bus);
        }
        if report.bound_duals_hi[var] > BINDING_TOL || (hi * hi - x[var]).abs() < BINDING_TOL {
            binding.voltage_upper.push(bus);
        }
    }

    let mut result = ClearingResult {
        formulation: inst.formulation,
        bus_ids: (0..n).map(|b| net.bus_id(b)).collect(),
        root: net.root,
        activations,
        dlmp,
        flows,
        voltages,
        reactive_injection,
        currents_sq,
        objective: report.objective,
        revenues: vec![0.0; n],
        binding,
        solver: SolverDiagnostics {
            status: report.status,
            iterations: report.iterations,
            kkt_residuals: report.kkt_residuals,
        },
    };
    settle(&mut result);
    Ok(result)
}

/// Settlement: upward activations are paid the nodal price, downward
/// activations pay it back. One-hour clearing period, so MW activations
/// settle as MWh.
pub fn settle(result: &mut ClearingResult) {
    let mut revenues = vec![0.0; result.bus_ids.len()];
    for (bus, act) in &result.activations {
        let idx = result.bus_ids.iter().position(|id| id == bus).expect("bid bus exists");
        let price = result.dlmp[idx];
        revenues[idx] = price * (act.p_up + act.d_up) - price * (act.p_dn + act.d_dn);
    }
    result.revenues = revenues;
}

/// Physics residual report for a cleared market, per-unit quantities.
#[derive(Debug, Clone, Serialize)]
pub struct PhysicsReport {
    /// Real balance residual per bus.
    pub real: Vec<f64>,
    /// Reactive balance residual per bus.
    pub reactive: Vec<f64>,
    /// Voltage-equation residual per bus.
    pub voltage: Vec<f64>,
    /// Cone gap `l * v_up - (P^2 + Q^2)` per branch (cone results only).
    pub cone_gap: Option<Vec<f64>>,
}

impl PhysicsReport {
    pub fn max_real(&self) -> f64 {
        self.real.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
    pub fn max_reactive(&self) -> f64 {
        self.reactive.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
    pub fn max_voltage(&self) -> f64 {
        self.voltage.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
    pub fn min_cone_gap(&self) -> Option<f64> {
        self.cone_gap
            .as_ref()
            .map(|g| g.iter().fold(f64::INFINITY, |m, &v| m.min(v)))
    }
}

/// Recompute the balance and voltage residuals of a cleared result against
/// its own formulation's equations.
pub fn verify_physics(result: &ClearingResult, inst: &MarketInstance) -> PhysicsReport {
    let net = &inst.net;
    let n = net.n_buses();
    let with_losses = result.formulation == Formulation::Socp;
    let l = result.currents_sq.as_deref();

    let mut real = vec![0.0; n];
    let mut reactive = vec![0.0; n];
    let mut voltage = vec![0.0; n];
    let mut cone_gap = with_losses.then(|| vec![0.0; n]);

    for bus in 0..n {
        let br = &net.branches[bus];
        let p_in = net.to_pu(result.flows[bus].p_mw);
        let q_in = net.to_pu(result.flows[bus].q_mvar);
        let v = result.voltages[bus].powi(2);
        let v_up = match br.from_bus {
            Some(parent) => result.voltages[parent].powi(2),
            None => net.slack_voltage,
        };

        let mut r_real = result.net_injection_pu(inst, bus) + p_in;
        let mut r_reactive = net.to_pu(result.reactive_injection[bus]) + q_in;
        for &child in &net.children[bus] {
            r_real -= net.to_pu(result.flows[child].p_mw);
            r_reactive -= net.to_pu(result.flows[child].q_mvar);
        }
        let mut r_voltage = v - v_up + 2.0 * br.r * p_in + 2.0 * br.x * q_in;

        if with_losses {
            let li = l.expect("cone result carries currents")[bus];
            r_real -= br.r * li + net.buses[bus].shunt_g * v;
            r_reactive -= br.x * li + net.buses[bus].shunt_b * v;
            r_voltage -= (br.r * br.r + br.x * br.x) * li;
            cone_gap.as_mut().unwrap()[bus] = li * v_up - (p_in * p_in + q_in * q_in);
        }

        real[bus] = r_real;
        reactive[bus] = r_reactive;
        voltage[bus] = r_voltage;
    }

    PhysicsReport {
        real,
        reactive,
        voltage,
        cone_gap,
    }
}

/// Evaluate a linear-formulation result against the loss-inclusive balance
/// rows, substituting the current implied by the flows,
/// `l = (P^2 + Q^2) / v_up`.
///
/// Returns `(residual, dropped_term)` per bus, where `dropped_term` is the
/// branch loss plus shunt draw `r*l + g*v` the linear model ignores; the
/// residual of the loss-inclusive row equals minus that term up to solver
/// tolerance.
pub fn lindistflow_loss_residuals(
    result: &ClearingResult,
    inst: &MarketInstance,
) -> Vec<(f64, f64)> {
    let net = &inst.net;
    let n = net.n_buses();
    let mut out = Vec::with_capacity(n);
    for bus in 0..n {
        let br = &net.branches[bus];
        let p_in = net.to_pu(result.flows[bus].p_mw);
        let q_in = net.to_pu(result.flows[bus].q_mvar);
        let v = result.voltages[bus].powi(2);
        let v_up = match br.from_bus {
            Some(parent) => result.voltages[parent].powi(2),
            None => net.slack_voltage,
        };
        let l_hat = (p_in * p_in + q_in * q_in) / v_up;

        let mut residual = result.net_injection_pu(inst, bus) + p_in
            - br.r * l_hat
            - net.buses[bus].shunt_g * v;
        for &child in &net.children[bus] {
            residual -= net.to_pu(result.flows[child].p_mw);
        }
        let dropped = br.r * l_hat + net.buses[bus].shunt_g * v;
        out.push((residual, dropped));
    }
    out
}
