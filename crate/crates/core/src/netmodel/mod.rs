//! Radial network model built from Matpower case files.
//!
//! A parsed case is turned into a [`RadialNetwork`]: a tree of buses rooted
//! at the substation, with every branch oriented away from the root and a
//! virtual interface branch representing the connection to the upper grid.
//! Branches are indexed by their downstream bus, so `branches[i]` is always
//! the single branch entering bus `i` and `branches[root]` is the interface.

mod parse;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{col, parse_case, RawCase};

/// Errors from parsing case files or building the network.
#[derive(Debug, Error)]
pub enum CaseError {
    /// Malformed numeric entry or scalar; carries the 1-based line number.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    /// A required table (`baseMVA`, `bus`, `gen`, `branch`) was not found.
    #[error("missing required table `{0}`")]
    MissingTable(String),
    /// Structural problem that is not tied to a single line.
    #[error("{0}")]
    Structure(String),
    /// The branch set contains a loop; lists the bus labels on one cycle.
    #[error("network is not radial: cycle through buses {0:?}")]
    NotRadial(Vec<i64>),
    /// A bus is not reachable from the root over in-service branches.
    #[error("bus {0} is not connected to the root")]
    Disconnected(i64),
    /// A referenced bus label does not exist in the bus table.
    #[error("unknown bus {0}")]
    UnknownBus(i64),
    /// Invariant violation in the assembled data.
    #[error("invalid network data: {0}")]
    Invalid(String),
}

/// One network bus.
///
/// Loads are kept in MW/MVAr as parsed; shunts and reactive-injection
/// bounds are per-unit on the system base. Voltage bounds are magnitudes
/// (p.u.), not squares; squaring happens where constraints are emitted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bus {
    /// External bus label from the case file.
    pub id: i64,
    /// Base real load, MW.
    pub base_load_p: f64,
    /// Base reactive load, MVAr.
    pub base_load_q: f64,
    /// Shunt conductance to ground, p.u. (consumes `g * v`).
    pub shunt_g: f64,
    /// Shunt susceptance to ground, p.u. (consumes `b * v`).
    pub shunt_b: f64,
    /// Voltage magnitude lower bound, p.u.
    pub v_min: f64,
    /// Voltage magnitude upper bound, p.u.
    pub v_max: f64,
    /// Reactive net-injection lower bound, p.u.
    pub q_min: f64,
    /// Reactive net-injection upper bound, p.u.
    pub q_max: f64,
}

/// One branch, oriented from its ancestor-side bus to its downstream bus.
///
/// `from_bus`/`to_bus` are internal bus indices; `from_bus` is `None` only
/// for the virtual interface branch above the root.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: Option<usize>,
    pub to_bus: usize,
    /// Series resistance, p.u.
    pub r: f64,
    /// Series reactance, p.u.
    pub x: f64,
    /// Apparent-flow capacity, MVA.
    pub s_max: f64,
}

/// Options controlling [`build_radial`].
#[derive(Debug, Clone)]
pub struct BuildOptions {
    /// Root bus label; defaults to the case's slack-type bus.
    pub root: Option<i64>,
    /// Capacity assigned to branches whose rating column is zero, MVA.
    pub default_s_max: f64,
    /// Interface branch capacity, MVA; defaults to 10x the total base load.
    pub interface_capacity: Option<f64>,
    /// Interface branch impedance (r, x), p.u.
    pub interface_impedance: (f64, f64),
    /// Fixed squared voltage at the upper-grid side of the interface, p.u.^2.
    pub slack_voltage: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            root: None,
            default_s_max: 10.0,
            interface_capacity: None,
            interface_impedance: (0.0, 0.0),
            slack_voltage: 1.0,
        }
    }
}

/// A validated radial network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialNetwork {
    /// Buses, indexed by internal index (case-file order).
    pub buses: Vec<Bus>,
    /// `branches[i]` is the branch entering bus `i`; `branches[root]` is the
    /// virtual interface branch.
    pub branches: Vec<Branch>,
    /// Internal index of the root (substation) bus.
    pub root: usize,
    /// `ancestor[i]` is the upstream neighbour of bus `i`; `None` for the
    /// root, whose ancestor is the virtual upper-grid node.
    pub ancestor: Vec<Option<usize>>,
    /// `children[i]` lists the downstream neighbours of bus `i`.
    pub children: Vec<Vec<usize>>,
    /// System power base, MVA.
    pub base_mva: f64,
    /// Fixed squared voltage at the upper-grid node, p.u.^2.
    pub slack_voltage: f64,
    index_of: BTreeMap<i64, usize>,
}

impl RadialNetwork {
    /// Number of buses.
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Internal index for an external bus label.
    pub fn index_of(&self, id: i64) -> Result<usize, CaseError> {
        self.index_of.get(&id).copied().ok_or(CaseError::UnknownBus(id))
    }

    /// External label for an internal index.
    pub fn bus_id(&self, idx: usize) -> i64 {
        self.buses[idx].id
    }

    /// Branch indices excluding the virtual interface branch.
    pub fn internal_branches(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.branches.len()).filter(move |&i| i != self.root)
    }

    /// MW (or MVAr/MVA) to per-unit.
    pub fn to_pu(&self, mw: f64) -> f64 {
        mw / self.base_mva
    }

    /// Per-unit to MW (or MVAr/MVA).
    pub fn to_mw(&self, pu: f64) -> f64 {
        pu * self.base_mva
    }

    /// Total base real load, MW.
    pub fn total_load_p(&self) -> f64 {
        self.buses.iter().map(|b| b.base_load_p).sum()
    }

    /// Override the capacity of the branch between two external bus labels.
    pub fn set_line_capacity(&mut self, from: i64, to: i64, s_max: f64) -> Result<(), CaseError> {
        let fi = self.index_of(from)?;
        let ti = self.index_of(to)?;
        // the branch may be stored in either orientation of the pair
        let idx = if self.ancestor[ti] == Some(fi) {
            ti
        } else if self.ancestor[fi] == Some(ti) {
            fi
        } else {
            return Err(CaseError::Invalid(format!(
                "no branch between buses {from} and {to}"
            )));
        };
        if s_max <= 0.0 {
            return Err(CaseError::Invalid("line capacity must be positive".into()));
        }
        self.branches[idx].s_max = s_max;
        Ok(())
    }

    /// Override the interface branch capacity, MVA.
    pub fn set_interface_capacity(&mut self, s_max: f64) -> Result<(), CaseError> {
        if s_max <= 0.0 {
            return Err(CaseError::Invalid("interface capacity must be positive".into()));
        }
        self.branches[self.root].s_max = s_max;
        Ok(())
    }

    /// Depth (hop count from the root) of every leaf bus.
    pub fn leaf_depths(&self) -> BTreeMap<usize, usize> {
        let mut depth = vec![0usize; self.n_buses()];
        let mut order = vec![self.root];
        let mut head = 0;
        while head < order.len() {
            let b = order[head];
            head += 1;
            for &c in &self.children[b] {
                depth[c] = depth[b] + 1;
                order.push(c);
            }
        }
        (0..self.n_buses())
            .filter(|&b| b != self.root && self.children[b].is_empty())
            .map(|b| (b, depth[b]))
            .collect()
    }

    /// JSON summary of buses, branches and topology for inspection.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "base_mva": self.base_mva,
            "root": self.bus_id(self.root),
            "slack_voltage": self.slack_voltage,
            "buses": self.buses.iter().map(|b| serde_json::json!({
                "id": b.id,
                "load_p_mw": b.base_load_p,
                "load_q_mvar": b.base_load_q,
                "v_min": b.v_min,
                "v_max": b.v_max,
            })).collect::<Vec<_>>(),
            "branches": self.branches.iter().map(|br| serde_json::json!({
                "from": br.from_bus.map(|f| self.bus_id(f)),
                "to": self.bus_id(br.to_bus),
                "r": br.r,
                "x": br.x,
                "s_max_mva": br.s_max,
            })).collect::<Vec<_>>(),
        })
    }
}

/// Orient a parsed case into a radial network rooted at the substation.
///
/// Every branch is re-oriented away from the root, loads and shunts are
/// attached to buses, and a virtual zero-impedance interface branch is
/// added above the root. Generators in the case file are not treated as
/// dispatchable units; base supply is synthesized separately.
pub fn build_radial(raw: &RawCase, options: &BuildOptions) -> Result<RadialNetwork, CaseError> {
    if raw.base_mva <= 0.0 {
        return Err(CaseError::Invalid("baseMVA must be positive".into()));
    }
    let n = raw.bus.len();
    if n == 0 {
        return Err(CaseError::Invalid("bus table is empty".into()));
    }

    let mut index_of = BTreeMap::new();
    for (i, row) in raw.bus.iter().enumerate() {
        let id = row[col::BUS_I] as i64;
        if index_of.insert(id, i).is_some() {
            return Err(CaseError::Invalid(format!("duplicate bus label {id}")));
        }
    }

    let root = match options.root {
        Some(id) => *index_of.get(&id).ok_or(CaseError::UnknownBus(id))?,
        None => raw
            .bus
            .iter()
            .position(|row| row[col::BUS_TYPE] as i64 == 3)
            .ok_or_else(|| {
                CaseError::Invalid("no slack-type bus in case and no root override".into())
            })?,
    };

    // undirected adjacency over in-service branches
    struct Edge {
        a: usize,
        b: usize,
        r: f64,
        x: f64,
        rate: f64,
    }
    let mut edges = Vec::new();
    for row in &raw.branch {
        if row[col::BR_STATUS] == 0.0 {
            continue;
        }
        let f = row[col::F_BUS] as i64;
        let t = row[col::T_BUS] as i64;
        let a = *index_of.get(&f).ok_or(CaseError::UnknownBus(f))?;
        let b = *index_of.get(&t).ok_or(CaseError::UnknownBus(t))?;
        edges.push(Edge {
            a,
            b,
            r: row[col::BR_R],
            x: row[col::BR_X],
            rate: row[col::RATE_A],
        });
    }
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (ei, e) in edges.iter().enumerate() {
        adjacency[e.a].push(ei);
        adjacency[e.b].push(ei);
    }

    // BFS from the root; a revisit is a cycle, an unvisited bus a disconnect
    let mut ancestor: Vec<Option<usize>> = vec![None; n];
    let mut via_edge: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    visited[root] = true;
    let mut queue = vec![root];
    let mut head = 0;
    while head < queue.len() {
        let u = queue[head];
        head += 1;
        for &ei in &adjacency[u] {
            if via_edge[u] == Some(ei) {
                continue; // arrived over this edge
            }
            let e = &edges[ei];
            let v = if e.a == u { e.b } else { e.a };
            if visited[v] {
                return Err(CaseError::NotRadial(cycle_labels(
                    raw, &index_of, &ancestor, root, u, v,
                )));
            }
            visited[v] = true;
            ancestor[v] = Some(u);
            via_edge[v] = Some(ei);
            queue.push(v);
        }
    }
    if let Some(i) = (0..n).find(|&i| !visited[i]) {
        return Err(CaseError::Disconnected(raw.bus[i][col::BUS_I] as i64));
    }

    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        if let Some(a) = ancestor[i] {
            children[a].push(i);
        }
    }

    let buses: Vec<Bus> = raw
        .bus
        .iter()
        .map(|row| {
            let q_load_pu = row[col::QD] / raw.base_mva;
            Bus {
                id: row[col::BUS_I] as i64,
                base_load_p: row[col::PD],
                base_load_q: row[col::QD],
                // the balance equations consume g*v and b*v; Matpower's BS is
                // an injection, so its sign flips here
                shunt_g: row[col::GS] / raw.base_mva,
                shunt_b: -row[col::BS] / raw.base_mva,
                v_min: row[col::VMIN],
                v_max: row[col::VMAX],
                q_min: -q_load_pu,
                q_max: -q_load_pu,
            }
        })
        .collect();
    for b in &buses {
        if !(b.v_min > 0.0 && b.v_min <= b.v_max) {
            return Err(CaseError::Invalid(format!(
                "bus {}: voltage bounds [{}, {}] are invalid",
                b.id, b.v_min, b.v_max
            )));
        }
    }

    let total_load: f64 = buses.iter().map(|b| b.base_load_p).sum();
    let interface_cap = options
        .interface_capacity
        .unwrap_or_else(|| (10.0 * total_load).max(1.0));

    let mut branches: Vec<Branch> = Vec::with_capacity(n);
    for i in 0..n {
        if i == root {
            branches.push(Branch {
                from_bus: None,
                to_bus: root,
                r: options.interface_impedance.0,
                x: options.interface_impedance.1,
                s_max: interface_cap,
            });
        } else {
            let e = &edges[via_edge[i].unwrap()];
            let s_max = if e.rate > 0.0 {
                e.rate
            } else {
                options.default_s_max
            };
            if s_max <= 0.0 {
                return Err(CaseError::Invalid("default line capacity must be positive".into()));
            }
            branches.push(Branch {
                from_bus: ancestor[i],
                to_bus: i,
                r: e.r,
                x: e.x,
                s_max,
            });
        }
    }

    Ok(RadialNetwork {
        buses,
        branches,
        root,
        ancestor,
        children,
        base_mva: raw.base_mva,
        slack_voltage: options.slack_voltage,
        index_of,
    })
}

/// Reconstruct one cycle's bus labels from the partially built BFS tree when
/// edge (u, v) closes a loop.
fn cycle_labels(
    raw: &RawCase,
    _index_of: &BTreeMap<i64, usize>,
    ancestor: &[Option<usize>],
    root: usize,
    u: usize,
    v: usize,
) -> Vec<i64> {
    let path_to_root = |mut b: usize| {
        let mut path = vec![b];
        while b != root {
            b = ancestor[b].unwrap();
            path.push(b);
        }
        path
    };
    let pu = path_to_root(u);
    let pv = path_to_root(v);
    // trim the common tail above the lowest common ancestor
    let mut iu = pu.len();
    let mut iv = pv.len();
    while iu > 1 && iv > 1 && pu[iu - 2] == pv[iv - 2] {
        iu -= 1;
        iv -= 1;
    }
    let mut cycle: Vec<usize> = pu[..iu].to_vec();
    cycle.extend(pv[..iv - 1].iter().rev());
    cycle
        .into_iter()
        .map(|b| raw.bus[b][col::BUS_I] as i64)
        .collect()
}

/// Bundled case files.
pub mod cases {
    /// 69-bus radial distribution feeder (12.66 kV).
    pub const CASE69: &str = include_str!("../../data/case69.m");
    /// 141-bus radial distribution feeder (12.47 kV).
    pub const CASE141: &str = include_str!("../../data/case141.m");

    /// Resolve a case alias to bundled file text.
    pub fn by_name(name: &str) -> Option<&'static str> {
        match name {
            "case69" => Some(CASE69),
            "case141" => Some(CASE141),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_case(branch_rows: &str) -> String {
        format!(
            "function mpc = toy\n\
             mpc.version = '2';\n\
             mpc.baseMVA = 10;\n\
             mpc.bus = [\n\
             \t1\t3\t0\t0\t0\t0\t1\t1\t0\t12.5\t1\t1.1\t0.9;\n\
             \t2\t1\t5\t2\t0\t0\t1\t1\t0\t12.5\t1\t1.1\t0.9;\n\
             \t3\t1\t3\t1\t0\t0\t1\t1\t0\t12.5\t1\t1.1\t0.9;\n\
             ];\n\
             mpc.gen = [\n\
             \t1\t0\t0\t999\t-999\t1\t10\t1\t999\t-999;\n\
             ];\n\
             mpc.branch = [\n{branch_rows}];\n"
        )
    }

    #[test]
    fn parses_bundled_case141() {
        let raw = parse_case(cases::CASE141).unwrap();
        assert_eq!(raw.bus.len(), 141);
        assert_eq!(raw.branch.len(), 140);
        assert_eq!(raw.base_mva, 10.0);
    }

    #[test]
    fn parses_bundled_case69() {
        let raw = parse_case(cases::CASE69).unwrap();
        assert_eq!(raw.bus.len(), 69);
        assert_eq!(raw.branch.len(), 68);
    }

    #[test]
    fn missing_table_names_first_gap() {
        let text = "mpc.baseMVA = 100;\n";
        match parse_case(text) {
            Err(CaseError::MissingTable(name)) => assert_eq!(name, "bus"),
            other => panic!("expected missing-table error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_entry_reports_line() {
        let text = "mpc.baseMVA = 10;\nmpc.bus = [\n\t1\t3\t0\tbogus\t0\t0\t1\t1\t0\t12.5\t1\t1.1\t0.9;\n];\n";
        match parse_case(text) {
            Err(CaseError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn builds_bundled_trees() {
        for (text, n) in [(cases::CASE141, 141), (cases::CASE69, 69)] {
            let raw = parse_case(text).unwrap();
            let net = build_radial(&raw, &BuildOptions::default()).unwrap();
            assert_eq!(net.n_buses(), n);
            assert_eq!(net.internal_branches().count(), n - 1);
            assert_eq!(net.branches.len(), n);
            // every non-root bus has exactly one entering branch
            for i in 0..n {
                if i == net.root {
                    assert!(net.branches[i].from_bus.is_none());
                } else {
                    assert_eq!(net.branches[i].to_bus, i);
                    assert!(net.branches[i].from_bus.is_some());
                }
            }
            // children sets partition the non-root buses
            let child_count: usize = net.children.iter().map(|c| c.len()).sum();
            assert_eq!(child_count, n - 1);
            for i in 0..n {
                for &c in &net.children[i] {
                    assert_eq!(net.ancestor[c], Some(i));
                }
            }
        }
    }

    #[test]
    fn duplicate_branch_is_cycle() {
        let text = toy_case(
            "\t1\t2\t0.01\t0.02\t0\t0\t0\t0\t0\t0\t1\t-360\t360;\n\
             \t2\t3\t0.01\t0.02\t0\t0\t0\t0\t0\t0\t1\t-360\t360;\n\
             \t2\t3\t0.01\t0.02\t0\t0\t0\t0\t0\t0\t1\t-360\t360;\n",
        );
        let raw = parse_case(&text).unwrap();
        match build_radial(&raw, &BuildOptions::default()) {
            Err(CaseError::NotRadial(cycle)) => {
                assert!(cycle.contains(&2) && cycle.contains(&3), "cycle = {cycle:?}");
            }
            other => panic!("expected not-radial error, got {other:?}"),
        }
    }

    #[test]
    fn disconnected_bus_detected() {
        let text = toy_case("\t1\t2\t0.01\t0.02\t0\t0\t0\t0\t0\t0\t1\t-360\t360;\n");
        let raw = parse_case(&text).unwrap();
        match build_radial(&raw, &BuildOptions::default()) {
            Err(CaseError::Disconnected(bus)) => assert_eq!(bus, 3),
            other => panic!("expected disconnect error, got {other:?}"),
        }
    }

    #[test]
    fn leaf_depths_chain_and_star() {
        // chain 1-2-3: only bus 3 is a leaf, at depth 2
        let chain = toy_case(
            "\t1\t2\t0.01\t0.02\t0\t0\t0\t0\t0\t0\t1\t-360\t360;\n\
             \t2\t3\t0.01\t0.02\t0\t0\t0\t0\t0\t0\t1\t-360\t360;\n",
        );
        let net = build_radial(&parse_case(&chain).unwrap(), &BuildOptions::default()).unwrap();
        let depths = net.leaf_depths();
        assert_eq!(depths.len(), 1);
        assert_eq!(depths[&net.index_of(3).unwrap()], 2);

        // star 1->{2,3}: both leaves at depth 1
        let star = toy_case(
            "\t1\t2\t0.01\t0.02\t0\t0\t0\t0\t0\t0\t1\t-360\t360;\n\
             \t1\t3\t0.01\t0.02\t0\t0\t0\t0\t0\t0\t1\t-360\t360;\n",
        );
        let net = build_radial(&parse_case(&star).unwrap(), &BuildOptions::default()).unwrap();
        let depths = net.leaf_depths();
        assert_eq!(depths.len(), 2);
        assert!(depths.values().all(|&d| d == 1));
    }

    #[test]
    fn branch_orientation_follows_root() {
        // file lists 3->2 but the tree orients 2->3 away from root 1
        let text = toy_case(
            "\t1\t2\t0.01\t0.02\t0\t0\t0\t0\t0\t0\t1\t-360\t360;\n\
             \t3\t2\t0.01\t0.02\t0\t0\t0\t0\t0\t0\t1\t-360\t360;\n",
        );
        let net = build_radial(&parse_case(&text).unwrap(), &BuildOptions::default()).unwrap();
        let b3 = net.index_of(3).unwrap();
        let b2 = net.index_of(2).unwrap();
        assert_eq!(net.branches[b3].from_bus, Some(b2));
    }

    #[test]
    fn per_unit_round_trip() {
        let raw = parse_case(cases::CASE69).unwrap();
        let net = build_radial(&raw, &BuildOptions::default()).unwrap();
        for mw in [0.0, 0.123456789, 3.80189, 1244.0] {
            let back = net.to_mw(net.to_pu(mw));
            assert!((back - mw).abs() <= 1e-12 * mw.abs().max(1.0));
        }
    }

    #[test]
    fn interface_defaults_to_ten_times_load() {
        let raw = parse_case(cases::CASE69).unwrap();
        let net = build_radial(&raw, &BuildOptions::default()).unwrap();
        let total: f64 = net.total_load_p();
        let interface = &net.branches[net.root];
        assert!((interface.s_max - 10.0 * total).abs() < 1e-9);
        assert_eq!(interface.r, 0.0);
        assert_eq!(interface.x, 0.0);
    }
}
