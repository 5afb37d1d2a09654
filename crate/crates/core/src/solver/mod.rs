//! Conic optimization with equality-constraint dual recovery.
//!
//! The embedded solver is a homogeneous primal-dual interior-point method
//! that treats linear programs as the cone-free special case, so both
//! market formulations run through one code path and deliver the same kind
//! of duals. A [`SolverBackend`] trait keeps the solver pluggable; the
//! test suites substitute an external reference solver through the same
//! [`ConeSystem`] interface to cross-validate objectives and multipliers.
//!
//! Pipeline per solve: presolve (drop fixed variables and empty rows),
//! convert bounds to rows, Ruiz row/column equilibration, the
//! interior-point loop, then report assembly in original units with
//! shadow-price sign conventions (`equality_duals[i]` is the derivative of
//! the optimal objective in the row's right-hand side).

mod cones;
mod ipm;
mod ldl;
mod sparse;
pub mod testgen;

use serde::Serialize;

use crate::formulation::{ConeSystem, LinearRow};
use cones::{ConeSet, ConeSpec};
use sparse::{dot, inf_norm, CscMatrix};

pub use ipm::IterTrace;

/// Outcome classification of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

/// Max-norm optimality measures, relative to problem scale.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KktResiduals {
    /// `||Ax + s - b|| / (1 + ||b||)` over all constraint rows.
    pub primal: f64,
    /// `||A'z + c|| / (1 + ||c||)`.
    pub dual: f64,
    /// Relative duality gap `|primal obj - dual obj| / (1 + |obj|)`.
    pub complementarity: f64,
}

#[derive(Debug, Clone)]
pub struct SolverSettings {
    /// Feasibility and gap tolerance; must lie in (0, 1e-4].
    pub tol: f64,
    pub max_iter: usize,
    /// Ruiz equilibration sweeps applied before solving.
    pub ruiz_iters: usize,
    /// Record the per-iteration convergence trace.
    pub record_trace: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: 1e-8,
            max_iter: 200,
            ruiz_iters: 10,
            record_trace: false,
        }
    }
}

/// Solution report in the original system's units and layout.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// Values for every variable of the input system.
    pub primal: Vec<f64>,
    pub objective: f64,
    /// Shadow prices per equality row: d(objective)/d(rhs).
    pub equality_duals: Vec<f64>,
    /// Multipliers per inequality row, nonnegative.
    pub inequality_duals: Vec<f64>,
    /// Multipliers of active lower/upper variable bounds, nonnegative.
    pub bound_duals_lo: Vec<f64>,
    pub bound_duals_hi: Vec<f64>,
    /// Dual block per second-order cone, in the dual cone.
    pub cone_duals: Vec<Vec<f64>>,
    /// Slack `rhs - a'x` per inequality row.
    pub ineq_slacks: Vec<f64>,
    pub kkt_residuals: KktResiduals,
    pub iterations: usize,
    pub trace: Vec<IterTrace>,
}

impl SolveReport {
    /// Write the per-iteration convergence trace as CSV.
    pub fn trace_to_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iter,mu,primal_res,dual_res,gap,step,sigma,tau,kappa")?;
        for t in &self.trace {
            writeln!(
                w,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                t.iter, t.mu, t.primal_res, t.dual_res, t.gap, t.step, t.sigma, t.tau, t.kappa
            )?;
        }
        Ok(())
    }
}

/// A solver that consumes [`ConeSystem`]s. The embedded interior-point
/// method is the default; external solvers can be adapted behind the same
/// trait for cross-validation.
pub trait SolverBackend {
    fn solve(&self, system: &ConeSystem, settings: &SolverSettings) -> SolveReport;
}

/// The embedded interior-point solver.
#[derive(Debug, Default, Clone, Copy)]
pub struct EmbeddedIpm;

impl SolverBackend for EmbeddedIpm {
    fn solve(&self, system: &ConeSystem, settings: &SolverSettings) -> SolveReport {
        solve(system, settings)
    }
}

/// Solve a linear system (the cone-free case of [`solve`]).
pub fn solve_lp(system: &ConeSystem, settings: &SolverSettings) -> SolveReport {
    debug_assert!(system.cones.is_empty(), "linear solve given cone rows");
    solve(system, settings)
}

/// Solve a second-order-cone system.
pub fn solve_socp(system: &ConeSystem, settings: &SolverSettings) -> SolveReport {
    solve(system, settings)
}

// ---------------------------------------------------------------------------
// standard form

#[derive(Debug, Clone, Copy)]
enum RowMeta {
    Eq(usize),
    Ineq(usize),
    BoundLo(usize),
    BoundHi(usize),
    Cone(usize, usize),
}

struct StdForm {
    c: Vec<f64>,
    a: CscMatrix,
    b: Vec<f64>,
    specs: Vec<ConeSpec>,
    row_meta: Vec<RowMeta>,
    /// original variable index per active column
    orig_of_active: Vec<usize>,
    /// fixed value per original variable (None if active)
    fixed: Vec<Option<f64>>,
    obj_offset: f64,
}

enum Converted {
    Ok(StdForm),
    /// Presolve already decided the outcome (empty infeasible row, crossed
    /// bounds).
    Decided(SolveStatus),
}

fn convert(system: &ConeSystem) -> Converted {
    let n = system.n_vars;
    let feas_eps = 1e-9;

    let mut fixed: Vec<Option<f64>> = vec![None; n];
    for j in 0..n {
        match (system.lower[j], system.upper[j]) {
            (Some(lo), Some(hi)) if lo > hi => {
                return Converted::Decided(SolveStatus::Infeasible);
            }
            (Some(lo), Some(hi)) if lo == hi => fixed[j] = Some(lo),
            _ => {}
        }
    }
    let mut active_of: Vec<Option<usize>> = vec![None; n];
    let mut orig_of_active = Vec::new();
    for j in 0..n {
        if fixed[j].is_none() {
            active_of[j] = Some(orig_of_active.len());
            orig_of_active.push(j);
        }
    }
    let n_active = orig_of_active.len();

    let mut c = vec![0.0; n_active];
    let mut obj_offset = 0.0;
    for j in 0..n {
        match fixed[j] {
            Some(v) => obj_offset += system.objective[j] * v,
            None => c[active_of[j].unwrap()] = system.objective[j],
        }
    }

    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut b = Vec::new();
    let mut row_meta = Vec::new();
    let mut specs = Vec::new();

    let reduce_row = |row: &LinearRow| -> (Vec<(usize, f64)>, f64) {
        let mut cols = Vec::with_capacity(row.cols.len());
        let mut rhs = row.rhs;
        for (&col, &coef) in row.cols.iter().zip(&row.coeffs) {
            match fixed[col] {
                Some(v) => rhs -= coef * v,
                None => cols.push((active_of[col].unwrap(), coef)),
            }
        }
        (cols, rhs)
    };

    let mut n_eq_rows = 0;
    for (i, row) in system.equalities.iter().enumerate() {
        let (cols, rhs) = reduce_row(row);
        if cols.is_empty() {
            if rhs.abs() > feas_eps {
                return Converted::Decided(SolveStatus::Infeasible);
            }
            continue;
        }
        let r = b.len();
        for (col, coef) in cols {
            triplets.push((r, col, coef));
        }
        b.push(rhs);
        row_meta.push(RowMeta::Eq(i));
        n_eq_rows += 1;
    }
    if n_eq_rows > 0 {
        specs.push(ConeSpec::Zero(n_eq_rows));
    }

    let mut n_ineq_rows = 0;
    let push_ineq = |cols: Vec<(usize, f64)>,
                         rhs: f64,
                         meta: RowMeta,
                         triplets: &mut Vec<(usize, usize, f64)>,
                         b: &mut Vec<f64>,
                         row_meta: &mut Vec<RowMeta>| {
        let r = b.len();
        for (col, coef) in cols {
            triplets.push((r, col, coef));
        }
        b.push(rhs);
        row_meta.push(meta);
    };

    for (i, row) in system.inequalities.iter().enumerate() {
        let (cols, rhs) = reduce_row(row);
        if cols.is_empty() {
            if rhs < -feas_eps {
                return Converted::Decided(SolveStatus::Infeasible);
            }
            continue;
        }
        push_ineq(cols, rhs, RowMeta::Ineq(i), &mut triplets, &mut b, &mut row_meta);
        n_ineq_rows += 1;
    }
    for j in 0..n {
        if fixed[j].is_some() {
            continue;
        }
        let col = active_of[j].unwrap();
        if let Some(lo) = system.lower[j] {
            push_ineq(
                vec![(col, -1.0)],
                -lo,
                RowMeta::BoundLo(j),
                &mut triplets,
                &mut b,
                &mut row_meta,
            );
            n_ineq_rows += 1;
        }
        if let Some(hi) = system.upper[j] {
            push_ineq(
                vec![(col, 1.0)],
                hi,
                RowMeta::BoundHi(j),
                &mut triplets,
                &mut b,
                &mut row_meta,
            );
            n_ineq_rows += 1;
        }
    }
    if n_ineq_rows > 0 {
        specs.push(ConeSpec::Nonneg(n_ineq_rows));
    }

    for (ci, cone) in system.cones.iter().enumerate() {
        for (k, expr) in cone.exprs.iter().enumerate() {
            let r = b.len();
            let mut rhs = expr.constant;
            for (&col, &coef) in expr.cols.iter().zip(&expr.coeffs) {
                match fixed[col] {
                    Some(v) => rhs += coef * v,
                    // s = b - Ax must equal constant + coeffs'x
                    None => triplets.push((r, active_of[col].unwrap(), -coef)),
                }
            }
            b.push(rhs);
            row_meta.push(RowMeta::Cone(ci, k));
        }
        specs.push(ConeSpec::Soc(cone.exprs.len()));
    }

    let a = CscMatrix::from_triplets(b.len(), n_active, triplets);
    Converted::Ok(StdForm {
        c,
        a,
        b,
        specs,
        row_meta,
        orig_of_active,
        fixed,
        obj_offset,
    })
}

/// Ruiz equilibration; returns (row scaling e, column scaling d, cost
/// scale sigma). Rows belonging to one second-order cone share a scale so
/// cone membership is preserved.
fn equilibrate(
    a: &mut CscMatrix,
    b: &mut [f64],
    c: &mut [f64],
    specs: &[ConeSpec],
    iters: usize,
) -> (Vec<f64>, Vec<f64>, f64) {
    let m = a.nrows;
    let n = a.ncols;
    let mut e = vec![1.0; m];
    let mut d = vec![1.0; n];

    for _ in 0..iters {
        let mut row_norms = a.row_inf_norms();
        // uniform scale within each cone block
        let mut off = 0;
        for spec in specs {
            let dim = spec.dim();
            if matches!(spec, ConeSpec::Soc(_)) {
                let blockmax = row_norms[off..off + dim].iter().fold(0.0f64, |a, &b| a.max(b));
                for r in row_norms[off..off + dim].iter_mut() {
                    *r = blockmax;
                }
            }
            off += dim;
        }
        let er: Vec<f64> = row_norms
            .iter()
            .map(|&r| if r > 1e-12 { 1.0 / r.sqrt() } else { 1.0 })
            .collect();
        let col_norms = a.col_inf_norms();
        let dc: Vec<f64> = col_norms
            .iter()
            .map(|&r| if r > 1e-12 { 1.0 / r.sqrt() } else { 1.0 })
            .collect();
        a.scale(&er, &dc);
        for i in 0..m {
            e[i] *= er[i];
        }
        for j in 0..n {
            d[j] *= dc[j];
        }
    }
    for i in 0..m {
        b[i] *= e[i];
    }
    // pull large right-hand sides toward unity so far-from-binding rows do
    // not blow up the scaled slacks (and with them the NT scaling spread)
    let mut shrink: Vec<f64> = b.iter().map(|&bi| 1.0 / bi.abs().max(1.0)).collect();
    let mut off = 0;
    for spec in specs {
        let dim = spec.dim();
        if matches!(spec, ConeSpec::Soc(_)) {
            let blockmin = shrink[off..off + dim].iter().fold(f64::INFINITY, |a, &b| a.min(b));
            for v in shrink[off..off + dim].iter_mut() {
                *v = blockmin;
            }
        }
        off += dim;
    }
    a.scale(&shrink, &vec![1.0; n]);
    for i in 0..m {
        b[i] *= shrink[i];
        e[i] *= shrink[i];
    }
    for j in 0..n {
        c[j] *= d[j];
    }
    let sigma = 1.0 / inf_norm(c).max(1.0);
    for cj in c.iter_mut() {
        *cj *= sigma;
    }
    (e, d, sigma)
}

fn decided_report(system: &ConeSystem, status: SolveStatus) -> SolveReport {
    SolveReport {
        status,
        primal: vec![0.0; system.n_vars],
        objective: 0.0,
        equality_duals: vec![0.0; system.equalities.len()],
        inequality_duals: vec![0.0; system.inequalities.len()],
        bound_duals_lo: vec![0.0; system.n_vars],
        bound_duals_hi: vec![0.0; system.n_vars],
        cone_duals: system.cones.iter().map(|c| vec![0.0; c.exprs.len()]).collect(),
        ineq_slacks: vec![0.0; system.inequalities.len()],
        kkt_residuals: KktResiduals {
            primal: f64::NAN,
            dual: f64::NAN,
            complementarity: f64::NAN,
        },
        iterations: 0,
        trace: Vec::new(),
    }
}

/// Solve a [`ConeSystem`] with the embedded interior-point method.
pub fn solve(system: &ConeSystem, settings: &SolverSettings) -> SolveReport {
    assert!(
        settings.tol > 0.0 && settings.tol <= 1e-4,
        "tolerance must lie in (0, 1e-4]"
    );
    let std = match convert(system) {
        Converted::Ok(s) => s,
        Converted::Decided(status) => return decided_report(system, status),
    };

    // scale a working copy
    let mut a = std.a.clone();
    let mut b = std.b.clone();
    let mut c = std.c.clone();
    let (e, d, sigma) = equilibrate(&mut a, &mut b, &mut c, &std.specs, settings.ruiz_iters);

    let mut cones = ConeSet::new(std.specs.clone());
    let ipm_settings = ipm::IpmSettings {
        tol: settings.tol,
        max_iter: settings.max_iter,
        record_trace: settings.record_trace,
    };
    let sol = ipm::solve(&c, &a, &b, &mut cones, &ipm_settings);

    // unscale
    let m = std.b.len();
    let n_active = std.c.len();
    let x_active: Vec<f64> = (0..n_active).map(|j| sol.x[j] * d[j]).collect();
    let z: Vec<f64> = (0..m).map(|i| sol.z[i] * e[i] / sigma).collect();
    let s: Vec<f64> = (0..m).map(|i| sol.s[i] / e[i]).collect();

    // primal in original layout
    let mut primal = vec![0.0; system.n_vars];
    for (active_idx, &orig) in std.orig_of_active.iter().enumerate() {
        primal[orig] = x_active[active_idx];
    }
    for j in 0..system.n_vars {
        if let Some(v) = std.fixed[j] {
            primal[j] = v;
        }
    }

    let objective = dot(&std.c, &x_active) + std.obj_offset;

    // residuals on the unscaled standard form
    let mut pres = vec![0.0; m];
    std.a.axpy(1.0, &x_active, &mut pres);
    for i in 0..m {
        pres[i] += s[i] - std.b[i];
    }
    let mut dres = std.c.clone();
    std.a.axpy_transpose(1.0, &z, &mut dres);
    let pobj = dot(&std.c, &x_active);
    let dobj = -dot(&std.b, &z);
    let residuals = KktResiduals {
        primal: inf_norm(&pres) / (1.0 + inf_norm(&std.b)),
        dual: inf_norm(&dres) / (1.0 + inf_norm(&std.c)),
        complementarity: (pobj - dobj).abs() / (1.0 + pobj.abs().max(dobj.abs())),
    };

    // distribute duals
    let mut equality_duals = vec![0.0; system.equalities.len()];
    let mut inequality_duals = vec![0.0; system.inequalities.len()];
    let mut bound_duals_lo = vec![0.0; system.n_vars];
    let mut bound_duals_hi = vec![0.0; system.n_vars];
    let mut cone_duals: Vec<Vec<f64>> =
        system.cones.iter().map(|c| vec![0.0; c.exprs.len()]).collect();
    for (r, meta) in std.row_meta.iter().enumerate() {
        match *meta {
            RowMeta::Eq(i) => equality_duals[i] = -z[r],
            RowMeta::Ineq(i) => inequality_duals[i] = z[r],
            RowMeta::BoundLo(j) => bound_duals_lo[j] = z[r],
            RowMeta::BoundHi(j) => bound_duals_hi[j] = z[r],
            RowMeta::Cone(ci, k) => cone_duals[ci][k] = z[r],
        }
    }
    // fixed variables absorb their reduced cost as a bound multiplier
    for j in 0..system.n_vars {
        if std.fixed[j].is_none() {
            continue;
        }
        let mut rc = system.objective[j];
        for (i, row) in system.equalities.iter().enumerate() {
            for (&col, &coef) in row.cols.iter().zip(&row.coeffs) {
                if col == j {
                    rc -= coef * equality_duals[i];
                }
            }
        }
        for (i, row) in system.inequalities.iter().enumerate() {
            for (&col, &coef) in row.cols.iter().zip(&row.coeffs) {
                if col == j {
                    rc += coef * inequality_duals[i];
                }
            }
        }
        for (ci, cone) in system.cones.iter().enumerate() {
            for (k, expr) in cone.exprs.iter().enumerate() {
                for (&col, &coef) in expr.cols.iter().zip(&expr.coeffs) {
                    if col == j {
                        rc -= coef * cone_duals[ci][k];
                    }
                }
            }
        }
        bound_duals_lo[j] = rc.max(0.0);
        bound_duals_hi[j] = (-rc).max(0.0);
    }

    let ineq_slacks: Vec<f64> = system
        .inequalities
        .iter()
        .map(|row| row.rhs - row.eval(&primal))
        .collect();

    let status = match sol.status {
        ipm::IpmStatus::Optimal => SolveStatus::Optimal,
        ipm::IpmStatus::PrimalInfeasible => SolveStatus::Infeasible,
        ipm::IpmStatus::DualInfeasible => SolveStatus::Unbounded,
        ipm::IpmStatus::MaxIterations | ipm::IpmStatus::NumericalError => {
            SolveStatus::NumericalFailure
        }
    };

    SolveReport {
        status,
        primal,
        objective,
        equality_duals,
        inequality_duals,
        bound_duals_lo,
        bound_duals_hi,
        cone_duals,
        ineq_slacks,
        kkt_residuals: residuals,
        iterations: sol.iterations,
        trace: sol.trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formulation::{AffineExpr, RowTag, SocConstraint};

    fn empty_system(n: usize) -> ConeSystem {
        ConeSystem {
            n_vars: n,
            objective: vec![0.0; n],
            lower: vec![None; n],
            upper: vec![None; n],
            equalities: Vec::new(),
            inequalities: Vec::new(),
            cones: Vec::new(),
            var_names: (0..n).map(|j| format!("x{j}")).collect(),
        }
    }

    #[test]
    fn one_variable_bound_lp() {
        // minimize x subject to x >= 3
        let mut sys = empty_system(1);
        sys.objective[0] = 1.0;
        sys.lower[0] = Some(3.0);
        let report = solve_lp(&sys, &SolverSettings::default());
        assert_eq!(report.status, SolveStatus::Optimal);
        assert!((report.primal[0] - 3.0).abs() < 1e-7, "x = {}", report.primal[0]);
        assert!((report.objective - 3.0).abs() < 1e-7);
        assert!((report.bound_duals_lo[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn equality_pins_marginal_price() {
        // minimize 40 d subject to d = 5, 0 <= d <= 10
        let mut sys = empty_system(1);
        sys.objective[0] = 40.0;
        sys.lower[0] = Some(0.0);
        sys.upper[0] = Some(10.0);
        sys.equalities.push(LinearRow {
            cols: vec![0],
            coeffs: vec![1.0],
            rhs: 5.0,
            tag: RowTag::RealBalance { bus: 0 },
        });
        let report = solve_lp(&sys, &SolverSettings::default());
        assert_eq!(report.status, SolveStatus::Optimal);
        assert!((report.objective - 200.0).abs() < 1e-5);
        assert!((report.equality_duals[0] - 40.0).abs() < 1e-5, "dual = {}", report.equality_duals[0]);
    }

    #[test]
    fn norm_epigraph_socp() {
        // minimize t subject to ||(3,4)|| <= t
        let mut sys = empty_system(1);
        sys.objective[0] = 1.0;
        sys.cones.push(SocConstraint {
            exprs: vec![
                AffineExpr { constant: 0.0, cols: vec![0], coeffs: vec![1.0] },
                AffineExpr { constant: 3.0, cols: vec![], coeffs: vec![] },
                AffineExpr { constant: 4.0, cols: vec![], coeffs: vec![] },
            ],
            tag: RowTag::FlowCone { branch: 0 },
        });
        let report = solve_socp(&sys, &SolverSettings::default());
        assert_eq!(report.status, SolveStatus::Optimal);
        assert!((report.primal[0] - 5.0).abs() < 1e-6, "t = {}", report.primal[0]);
    }

    #[test]
    fn tight_rotated_cone() {
        // minimize l subject to P^2 + Q^2 <= l * v, v = 1, P = 3, Q = 4
        let mut sys = empty_system(1);
        sys.objective[0] = 1.0;
        sys.lower[0] = Some(0.0);
        let (p, q, v) = (3.0, 4.0, 1.0);
        sys.cones.push(SocConstraint {
            exprs: vec![
                AffineExpr { constant: v, cols: vec![0], coeffs: vec![1.0] },
                AffineExpr { constant: 2.0 * p, cols: vec![], coeffs: vec![] },
                AffineExpr { constant: 2.0 * q, cols: vec![], coeffs: vec![] },
                AffineExpr { constant: -v, cols: vec![0], coeffs: vec![1.0] },
            ],
            tag: RowTag::CurrentCone { branch: 0 },
        });
        let report = solve_socp(&sys, &SolverSettings::default());
        assert_eq!(report.status, SolveStatus::Optimal);
        assert!((report.primal[0] - 25.0).abs() < 1e-5, "l = {}", report.primal[0]);
    }

    #[test]
    fn infeasible_detected() {
        // x >= 3 and x <= 1
        let mut sys = empty_system(1);
        sys.inequalities.push(LinearRow {
            cols: vec![0],
            coeffs: vec![-1.0],
            rhs: -3.0,
            tag: RowTag::PolygonEdge { branch: 0, edge: 0 },
        });
        sys.inequalities.push(LinearRow {
            cols: vec![0],
            coeffs: vec![1.0],
            rhs: 1.0,
            tag: RowTag::PolygonEdge { branch: 0, edge: 1 },
        });
        let report = solve_lp(&sys, &SolverSettings::default());
        assert_eq!(report.status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        // minimize -x with x >= 0 only
        let mut sys = empty_system(1);
        sys.objective[0] = -1.0;
        sys.lower[0] = Some(0.0);
        let report = solve_lp(&sys, &SolverSettings::default());
        assert_eq!(report.status, SolveStatus::Unbounded);
    }

    #[test]
    fn crossed_bounds_presolved_infeasible() {
        let mut sys = empty_system(1);
        sys.lower[0] = Some(2.0);
        sys.upper[0] = Some(1.0);
        let report = solve_lp(&sys, &SolverSettings::default());
        assert_eq!(report.status, SolveStatus::Infeasible);
    }

    #[test]
    fn fixed_variables_substituted() {
        // min x + y with y fixed at 2, x + y = 5
        let mut sys = empty_system(2);
        sys.objective = vec![1.0, 1.0];
        sys.lower[1] = Some(2.0);
        sys.upper[1] = Some(2.0);
        sys.equalities.push(LinearRow {
            cols: vec![0, 1],
            coeffs: vec![1.0, 1.0],
            rhs: 5.0,
            tag: RowTag::RealBalance { bus: 0 },
        });
        let report = solve_lp(&sys, &SolverSettings::default());
        assert_eq!(report.status, SolveStatus::Optimal);
        assert!((report.primal[0] - 3.0).abs() < 1e-7);
        assert_eq!(report.primal[1], 2.0);
        assert!((report.objective - 5.0).abs() < 1e-7);
    }

    #[test]
    fn deterministic_reports() {
        let sys = testgen::random_system(42, testgen::Kind::SecondOrder, 60);
        let a = solve(&sys, &SolverSettings::default());
        let b = solve(&sys, &SolverSettings::default());
        assert_eq!(a.status, b.status);
        assert_eq!(a.primal, b.primal);
        assert_eq!(a.equality_duals, b.equality_duals);
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn objective_scaling_moves_duals_not_argmin() {
        let sys = testgen::random_system(7, testgen::Kind::Linear, 40);
        let mut scaled = sys.clone();
        for c in scaled.objective.iter_mut() {
            *c *= 3.0;
        }
        let r1 = solve(&sys, &SolverSettings::default());
        let r2 = solve(&scaled, &SolverSettings::default());
        assert_eq!(r1.status, SolveStatus::Optimal);
        assert_eq!(r2.status, SolveStatus::Optimal);
        for (a, b) in r1.primal.iter().zip(&r2.primal) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
        for (a, b) in r1.equality_duals.iter().zip(&r2.equality_duals) {
            assert!((3.0 * a - b).abs() < 1e-4 * (1.0 + a.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn random_problems_reach_optimal_with_small_residuals() {
        for seed in 0..20 {
            for kind in [testgen::Kind::Linear, testgen::Kind::SecondOrder] {
                let sys = testgen::random_system(seed, kind, 50);
                let report = solve(&sys, &SolverSettings::default());
                assert_eq!(report.status, SolveStatus::Optimal, "seed {seed} {kind:?}");
                assert!(report.kkt_residuals.primal <= 1e-7, "seed {seed}: {:?}", report.kkt_residuals);
                assert!(report.kkt_residuals.dual <= 1e-7, "seed {seed}: {:?}", report.kkt_residuals);
                assert!(report.kkt_residuals.complementarity <= 1e-7, "seed {seed}");
                for (i, d) in report.inequality_duals.iter().enumerate() {
                    assert!(*d >= -1e-8, "ineq dual {i} = {d}");
                }
            }
        }
    }
}
