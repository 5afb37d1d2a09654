//! Translation of a market instance into solver-ready constraint systems.
//!
//! Both formulations share the objective (bid activation cost), the bid box
//! bounds, the voltage-magnitude band and the reactive-injection bounds.
//! They differ in the network physics:
//!
//! * the linear build uses the LinDistFlow balance and voltage equations
//!   plus a polygonal inner approximation of each branch's flow limit;
//! * the cone build uses the relaxed branch-flow equations (loss and shunt
//!   terms included), a rotated-cone current constraint per branch and the
//!   exact quadratic flow limit per branch.
//!
//! Real-power balance rows are tagged with their bus so the solver's
//! equality duals can be mapped back to nodal prices.

mod build;
mod polygon;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bids::{BaseProfile, FlexBid};
use crate::netmodel::RadialNetwork;

pub use polygon::{polygon_edges, polygon_vertices, PolygonEdge};

#[derive(Debug, Error)]
pub enum FormulationError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("instance error: {0}")]
    Instance(String),
}

/// Which network model the instance is cleared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    Lp,
    Socp,
}

impl std::fmt::Display for Formulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Formulation::Lp => write!(f, "LP"),
            Formulation::Socp => write!(f, "SOCP"),
        }
    }
}

/// Everything needed to clear one market: network, base profiles, bids and
/// formulation settings.
#[derive(Debug, Clone)]
pub struct MarketInstance {
    pub net: RadialNetwork,
    pub profile: BaseProfile,
    pub bids: Vec<FlexBid>,
    /// Voltage-magnitude band applied to every bus, p.u.
    pub v_band: (f64, f64),
    /// Per-bus band overrides, keyed by external bus label.
    pub v_overrides: BTreeMap<i64, (f64, f64)>,
    /// Edge count of the flow polygon (linear build only).
    pub polygon_sides: usize,
    pub formulation: Formulation,
    /// Reactive-injection handling: `None` keeps each bus's net reactive
    /// injection fixed at its negated base load; `Some(gamma)` widens the
    /// band to `+- (1 + gamma) * |q_load|`.
    pub reactive_gamma: Option<f64>,
}

impl MarketInstance {
    pub fn new(
        net: RadialNetwork,
        profile: BaseProfile,
        bids: Vec<FlexBid>,
        formulation: Formulation,
    ) -> Self {
        MarketInstance {
            net,
            profile,
            bids,
            v_band: (0.99, 1.01),
            v_overrides: BTreeMap::new(),
            polygon_sides: 12,
            formulation,
            reactive_gamma: None,
        }
    }

    /// Same instance under the other formulation.
    pub fn with_formulation(&self, formulation: Formulation) -> Self {
        let mut inst = self.clone();
        inst.formulation = formulation;
        inst
    }

    /// Same instance with a different bid set (Monte Carlo sampling).
    pub fn with_bids(&self, bids: Vec<FlexBid>) -> Self {
        let mut inst = self.clone();
        inst.bids = bids;
        inst
    }

    pub fn validate(&self) -> Result<(), FormulationError> {
        let (lo, hi) = self.v_band;
        if !(lo > 0.0 && lo <= hi) {
            return Err(FormulationError::InvalidParameter(format!(
                "voltage band [{lo}, {hi}] is invalid"
            )));
        }
        for (&bus, &(lo, hi)) in &self.v_overrides {
            if !(lo > 0.0 && lo <= hi) {
                return Err(FormulationError::InvalidParameter(format!(
                    "voltage override for bus {bus} is invalid"
                )));
            }
            self.net
                .index_of(bus)
                .map_err(|_| FormulationError::Instance(format!("override at unknown bus {bus}")))?;
        }
        if self.polygon_sides < 4 || self.polygon_sides % 2 != 0 {
            return Err(FormulationError::InvalidParameter(format!(
                "polygon side count must be even and >= 4, got {}",
                self.polygon_sides
            )));
        }
        if let Some(g) = self.reactive_gamma {
            if g < 0.0 {
                return Err(FormulationError::InvalidParameter(
                    "reactive gamma must be >= 0".into(),
                ));
            }
        }
        let n = self.net.n_buses();
        if self.profile.p_gen.len() != n
            || self.profile.p_load.len() != n
            || self.profile.q_load.len() != n
        {
            return Err(FormulationError::Instance(
                "profile length does not match network".into(),
            ));
        }
        for bid in &self.bids {
            self.net.index_of(bid.bus).map_err(|_| {
                FormulationError::Instance(format!("bid at unknown bus {}", bid.bus))
            })?;
        }
        Ok(())
    }

    /// Voltage band for a bus (override or uniform), magnitudes in p.u.
    pub fn v_band_at(&self, bus: usize) -> (f64, f64) {
        let id = self.net.bus_id(bus);
        self.v_overrides.get(&id).copied().unwrap_or(self.v_band)
    }

    /// Build the solver-ready system for this instance's formulation.
    pub fn build(&self) -> Result<(ConeSystem, VariableLayout), FormulationError> {
        match self.formulation {
            Formulation::Lp => build::build_lp(self),
            Formulation::Socp => build::build_socp(self),
        }
    }
}

// ---------------------------------------------------------------------------
// constraint system

/// Identifies what a constraint row or cone encodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowTag {
    /// Real-power balance at a bus; its dual is the nodal price.
    RealBalance { bus: usize },
    ReactiveBalance { bus: usize },
    VoltageDrop { bus: usize },
    /// Edge `edge` of the flow polygon on the branch entering bus `branch`.
    PolygonEdge { branch: usize, edge: usize },
    /// Quadratic apparent-flow limit on a branch.
    FlowCone { branch: usize },
    /// Rotated-cone current constraint on a branch.
    CurrentCone { branch: usize },
}

/// One linear row `sum coeffs * x (=|<=) rhs`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearRow {
    pub cols: Vec<usize>,
    pub coeffs: Vec<f64>,
    pub rhs: f64,
    pub tag: RowTag,
}

impl LinearRow {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.cols
            .iter()
            .zip(&self.coeffs)
            .map(|(&c, &a)| a * x[c])
            .sum()
    }
}

/// An affine expression `constant + sum coeffs * x`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AffineExpr {
    pub constant: f64,
    pub cols: Vec<usize>,
    pub coeffs: Vec<f64>,
}

impl AffineExpr {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.cols.iter().zip(&self.coeffs).map(|(&c, &a)| a * x[c]).sum::<f64>()
    }
}

/// A second-order-cone constraint: the affine vector `(e0, e1, ..)` must
/// satisfy `e0 >= || (e1, ..) ||`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SocConstraint {
    pub exprs: Vec<AffineExpr>,
    pub tag: RowTag,
}

/// A conic optimization problem in the form the solver consumes:
/// minimize `objective . x` subject to equality rows, inequality rows
/// (`<=`), second-order cones and variable bounds. Serializes to the JSON
/// debug dump used for cross-solver validation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConeSystem {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    /// Lower/upper variable bounds; `None` means unbounded on that side.
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
    pub equalities: Vec<LinearRow>,
    pub inequalities: Vec<LinearRow>,
    pub cones: Vec<SocConstraint>,
    /// Human-readable variable names (debug dump documentation).
    pub var_names: Vec<String>,
}

impl ConeSystem {
    /// Row index of the tagged real-power balance for each bus, in bus
    /// order. Used to align equality duals with nodal prices.
    pub fn real_balance_rows(&self, n_buses: usize) -> Vec<usize> {
        let mut rows = vec![usize::MAX; n_buses];
        for (i, row) in self.equalities.iter().enumerate() {
            if let RowTag::RealBalance { bus } = row.tag {
                rows[bus] = i;
            }
        }
        rows
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("cone system serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, serde_json::Error> {
        serde_json::from_value(value.clone())
    }
}

/// Where every decision variable lives in the flat vector.
///
/// Bid activations come first (four per bid, in bid order), then per-bus
/// reactive injections and squared voltages, then per-branch sending-end
/// flows, then (cone build only) per-branch squared currents. The net
/// injection of the balance equations is not itself a variable: it is
/// substituted into the tagged balance rows, which keeps one equality per
/// bus and leaves its dual as the nodal price.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariableLayout {
    pub n_vars: usize,
    /// Internal bus index of each bid, in emission order.
    pub bid_buses: Vec<usize>,
    pub p_up: Vec<usize>,
    pub p_dn: Vec<usize>,
    pub d_up: Vec<usize>,
    pub d_dn: Vec<usize>,
    /// Reactive net injection, per bus.
    pub q: Vec<usize>,
    /// Squared voltage magnitude, per bus.
    pub v: Vec<usize>,
    /// Sending-end real flow on the branch entering each bus.
    pub flow_p: Vec<usize>,
    /// Sending-end reactive flow on the branch entering each bus.
    pub flow_q: Vec<usize>,
    /// Squared current magnitude per branch (cone build only).
    pub current_sq: Option<Vec<usize>>,
}

impl VariableLayout {
    /// Names aligned with variable indices, for the debug dump.
    pub fn names(&self, net: &RadialNetwork) -> Vec<String> {
        let mut names = vec![String::new(); self.n_vars];
        for (k, &bus) in self.bid_buses.iter().enumerate() {
            let id = net.bus_id(bus);
            names[self.p_up[k]] = format!("dp_up[{id}]");
            names[self.p_dn[k]] = format!("dp_dn[{id}]");
            names[self.d_up[k]] = format!("dd_up[{id}]");
            names[self.d_dn[k]] = format!("dd_dn[{id}]");
        }
        for bus in 0..self.q.len() {
            let id = net.bus_id(bus);
            names[self.q[bus]] = format!("q[{id}]");
            names[self.v[bus]] = format!("v[{id}]");
            names[self.flow_p[bus]] = format!("P[->{id}]");
            names[self.flow_q[bus]] = format!("Q[->{id}]");
            if let Some(l) = &self.current_sq {
                names[l[bus]] = format!("l[->{id}]");
            }
        }
        names
    }
}
