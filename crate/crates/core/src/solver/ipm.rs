//! Homogeneous self-dual interior-point method for linear and
//! second-order-cone programs.
//!
//! Solves `min c'x  s.t.  A x + s = b, s in K` where `K` is a product of
//! zero, nonnegative and second-order cones, together with its dual, via
//! the homogeneous embedding in `(x, z, s, tau, kappa)`. Search directions
//! come from a Mehrotra predictor-corrector on the Nesterov-Todd scaled
//! system; each iteration factors the quasi-definite KKT matrix
//!
//! ```text
//! [ 0   A' ]
//! [ A  -H  ]     H = W'W per cone block (zero on equality rows)
//! ```
//!
//! with static regularization, then recovers accuracy with iterative
//! refinement against the unregularized operator.

use super::cones::{ConeSet, ConeSpec};
use super::ldl::LdlSolver;
use super::sparse::{dot, inf_norm, CscMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpmStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    MaxIterations,
    NumericalError,
}

/// One row of the per-iteration convergence trace.
#[derive(Debug, Clone, serde::Serialize)]
pub struct IterTrace {
    pub iter: usize,
    pub mu: f64,
    pub primal_res: f64,
    pub dual_res: f64,
    pub gap: f64,
    pub step: f64,
    pub sigma: f64,
    pub tau: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone)]
pub struct IpmSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub record_trace: bool,
}

impl Default for IpmSettings {
    fn default() -> Self {
        IpmSettings {
            tol: 1e-8,
            max_iter: 200,
            record_trace: false,
        }
    }
}

pub struct IpmSolution {
    pub status: IpmStatus,
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub z: Vec<f64>,
    pub iterations: usize,
    pub trace: Vec<IterTrace>,
}

const STATIC_REG: f64 = 1e-8;
const PIVOT_EPS: f64 = 1e-8;
const REFINE_STEPS: usize = 3;
const STEP_FRACTION: f64 = 0.99;
/// Wide-neighborhood centrality floor: complementarity pairs may not drop
/// below this fraction of the duality measure after a step.
const NEIGHBORHOOD_GAMMA: f64 = 1e-3;
const MAX_BACKTRACKS: usize = 12;

/// KKT matrix manager: fixed pattern, values refreshed per iteration.
struct Kkt {
    n: usize,
    m: usize,
    solver: LdlSolver,
    values: Vec<f64>,
    // slots: [x-block reg | A entries | z-block reg | H entries]
    z_reg_start: usize,
    h_slot_start: usize,
    h_block_offsets: Vec<usize>, // slot offset per cone block
}

impl Kkt {
    fn new(a: &CscMatrix, cones: &ConeSet) -> Kkt {
        let n = a.ncols;
        let m = a.nrows;
        let dim = n + m;
        let mut entries: Vec<(usize, usize)> = Vec::new();
        // x-block regularization diagonal
        for j in 0..n {
            entries.push((j, j));
        }
        let a_slot_start = entries.len();
        for c in 0..n {
            for p in a.colptr[c]..a.colptr[c + 1] {
                entries.push((n + a.rowidx[p], c));
            }
        }
        let z_reg_start = entries.len();
        for i in 0..m {
            entries.push((n + i, n + i));
        }
        let h_slot_start = entries.len();
        let mut h_block_offsets = Vec::new();
        for &(off, spec) in cones.blocks() {
            h_block_offsets.push(entries.len() - h_slot_start);
            match spec {
                ConeSpec::Zero(_) => {}
                ConeSpec::Nonneg(d) => {
                    for i in 0..d {
                        entries.push((n + off + i, n + off + i));
                    }
                }
                ConeSpec::Soc(d) => {
                    for i in 0..d {
                        for j in i..d {
                            entries.push((n + off + i, n + off + j));
                        }
                    }
                }
            }
        }

        let mut sign = vec![1i8; dim];
        for s in sign[n..].iter_mut() {
            *s = -1;
        }
        let solver = LdlSolver::new(dim, &entries, &sign);

        let mut values = vec![0.0; entries.len()];
        for v in values[..n].iter_mut() {
            *v = STATIC_REG;
        }
        for (slot, p) in (a_slot_start..z_reg_start).zip(0..a.nnz()) {
            values[slot] = a.values[p];
        }
        for v in values[z_reg_start..h_slot_start].iter_mut() {
            *v = -STATIC_REG;
        }
        Kkt {
            n,
            m,
            solver,
            values,
            z_reg_start,
            h_slot_start,
            h_block_offsets,
        }
    }

    /// Factor with H = I on all cone rows (least-squares initialization).
    /// Slot layout mirrors the construction in `new`.
    fn refactor_identity(&mut self, cones: &ConeSet) {
        for (bi, &(_, spec)) in cones.blocks().iter().enumerate() {
            let base = self.h_slot_start + self.h_block_offsets[bi];
            match spec {
                ConeSpec::Zero(_) => {}
                ConeSpec::Nonneg(d) => {
                    for k in 0..d {
                        self.values[base + k] = -1.0;
                    }
                }
                ConeSpec::Soc(d) => {
                    let mut k = 0;
                    for i in 0..d {
                        for j in i..d {
                            self.values[base + k] = if i == j { -1.0 } else { 0.0 };
                            k += 1;
                        }
                    }
                }
            }
        }
        self.solver.factor(&self.values, PIVOT_EPS);
    }

    fn refactor(&mut self, cones: &ConeSet) {
        let mut buf = Vec::new();
        for (bi, _) in cones.blocks().iter().enumerate() {
            cones.h_entries(bi, &mut buf);
            let base = self.h_slot_start + self.h_block_offsets[bi];
            for (k, &(_, _, v)) in buf.iter().enumerate() {
                self.values[base + k] = -v;
            }
        }
        // escalate the regularization until the factor is tame; iterative
        // refinement pays the bias back on the solve side
        let mut reg = STATIC_REG;
        for _ in 0..6 {
            for j in 0..self.n {
                self.values[j] = reg;
            }
            for v in self.values[self.z_reg_start..self.h_slot_start].iter_mut() {
                *v = -reg;
            }
            self.solver.factor(&self.values, reg.max(PIVOT_EPS));
            let (max_l, _, max_d) = self.solver.factor_stats();
            if max_l <= 1e14 && max_d <= 1e18 && max_l.is_finite() && max_d.is_finite() {
                break;
            }
            reg *= 1e3;
        }
    }

    /// Residual-refined solve of the unregularized KKT system. Refinement
    /// keeps the best iterate by residual norm and reverts corrections that
    /// make things worse. Returns false when no finite solution came out.
    fn solve(
        &self,
        a: &CscMatrix,
        cones: &ConeSet,
        rhs_x: &[f64],
        rhs_z: &[f64],
        out_x: &mut Vec<f64>,
        out_z: &mut Vec<f64>,
    ) -> bool {
        let (n, m) = (self.n, self.m);
        let dim = n + m;
        let mut rhs = vec![0.0; dim];
        rhs[..n].copy_from_slice(rhs_x);
        rhs[n..].copy_from_slice(rhs_z);
        let mut sol = vec![0.0; dim];
        self.solver.solve(&rhs, &mut sol);
        if !sol.iter().all(|v| v.is_finite()) {
            return false;
        }

        let mut work = vec![0.0; dim];
        let mut hz = vec![0.0; m];
        let mut wz = vec![0.0; m];
        let residual = |sol: &[f64], work: &mut Vec<f64>, wz: &mut Vec<f64>, hz: &mut Vec<f64>| {
            // r = rhs - K_exact * sol
            work.copy_from_slice(&rhs);
            a.axpy_transpose(-1.0, &sol[n..], &mut work[..n]);
            a.axpy(-1.0, &sol[..n], &mut work[n..]);
            cones.mult_w(&sol[n..], wz);
            cones.mult_w(wz, hz);
            for i in 0..m {
                work[n + i] += hz[i];
            }
            inf_norm(work)
        };

        let mut best = sol.clone();
        let mut best_norm = residual(&sol, &mut work, &mut wz, &mut hz);
        for _ in 0..REFINE_STEPS {
            if !best_norm.is_finite() {
                return false;
            }
            let mut delta = vec![0.0; dim];
            self.solver.solve(&work, &mut delta);
            for i in 0..dim {
                sol[i] = best[i] + delta[i];
            }
            let norm = residual(&sol, &mut work, &mut wz, &mut hz);
            if norm.is_finite() && norm < best_norm {
                best.copy_from_slice(&sol);
                best_norm = norm;
            } else {
                // restore the best iterate's residual for callers below
                let _ = residual(&best, &mut work, &mut wz, &mut hz);
                break;
            }
        }
        if !best.iter().all(|v| v.is_finite()) {
            return false;
        }
        out_x.clear();
        out_x.extend_from_slice(&best[..n]);
        out_z.clear();
        out_z.extend_from_slice(&best[n..]);
        true
    }
}

fn ratio_step(p: f64, dp: f64) -> f64 {
    if dp < 0.0 {
        -p / dp
    } else {
        f64::INFINITY
    }
}

/// Solve the standard-form problem. `a`, `b`, `c` must already be scaled
/// the way the caller wants; the cone layout in `cones` must match `b`.
pub fn solve(
    c: &[f64],
    a: &CscMatrix,
    b: &[f64],
    cones: &mut ConeSet,
    settings: &IpmSettings,
) -> IpmSolution {
    let n = a.ncols;
    let m = a.nrows;
    debug_assert_eq!(cones.rows(), m);

    let norm_b = inf_norm(b);
    let norm_c = inf_norm(c);
    let degree = cones.degree();
    let mut mu0 = 0.0;

    let mut kkt = Kkt::new(a, cones);
    let mut trace = Vec::new();

    // least-squares initial point, shifted into the cone interior: with
    // H = I the KKT solve of [0; b] yields x minimizing ||Ax - b|| with
    // w = Ax - b in the z block, and the solve of [-c; 0] yields a dual
    // candidate with A'z = -c. This balances the initial residuals far
    // better than a unit start when b and c live on different scales.
    kkt.refactor_identity(cones);
    let dim = n + m;
    let mut rhs = vec![0.0; dim];
    let mut sol = vec![0.0; dim];
    rhs[n..].copy_from_slice(b);
    kkt.solver.solve(&rhs, &mut sol);
    let mut x: Vec<f64> = sol[..n].to_vec();
    let mut s: Vec<f64> = sol[n..].iter().map(|&w| -w).collect();
    cones.shift_into_interior(&mut s);
    rhs[..n].iter_mut().zip(c).for_each(|(r, &ci)| *r = -ci);
    rhs[n..].fill(0.0);
    kkt.solver.solve(&rhs, &mut sol);
    let mut z: Vec<f64> = sol[n..].to_vec();
    cones.shift_into_interior(&mut z);
    if !(x.iter().all(|v| v.is_finite())
        && s.iter().all(|v| v.is_finite())
        && z.iter().all(|v| v.is_finite()))
    {
        x.fill(0.0);
        cones.init_unit(&mut s, &mut z);
    }
    let mut tau = 1.0;
    let mut kappa = 1.0;

    let fail = |status: IpmStatus,
                x: &[f64],
                s: &[f64],
                z: &[f64],
                tau: f64,
                iterations: usize,
                trace: Vec<IterTrace>| {
        let t = if tau > 1e-12 { tau } else { 1.0 };
        IpmSolution {
            status,
            x: x.iter().map(|v| v / t).collect(),
            s: s.iter().map(|v| v / t).collect(),
            z: z.iter().map(|v| v / t).collect(),
            iterations,
            trace,
        }
    };

    let mut r_x = vec![0.0; n];
    let mut r_z = vec![0.0; m];
    let (mut u1, mut v1) = (Vec::new(), Vec::new());
    let (mut u2, mut v2) = (Vec::new(), Vec::new());

    for iter in 0..settings.max_iter {
        // residuals of the homogeneous system
        r_x.iter_mut().zip(c).for_each(|(r, &ci)| *r = ci * tau);
        a.axpy_transpose(1.0, &z, &mut r_x);
        r_z.iter_mut()
            .zip(s.iter().zip(b))
            .for_each(|(r, (&si, &bi))| *r = si - bi * tau);
        a.axpy(1.0, &x, &mut r_z);
        let r_tau = dot(c, &x) + dot(b, &z) + kappa;

        let mu = (cones.inner(&s, &z) + tau * kappa) / (degree + 1.0);
        if iter == 0 {
            mu0 = mu;
        }

        // unscaled optimality measures
        let inv_tau = 1.0 / tau;
        let mut pres_vec = vec![0.0; m];
        pres_vec
            .iter_mut()
            .zip(s.iter().zip(b))
            .for_each(|(r, (&si, &bi))| *r = si * inv_tau - bi);
        a.axpy(inv_tau, &x, &mut pres_vec);
        let primal_res = inf_norm(&pres_vec) / (1.0 + norm_b);

        let mut dres_vec = c.to_vec();
        a.axpy_transpose(inv_tau, &z, &mut dres_vec);
        let dual_res = inf_norm(&dres_vec) / (1.0 + norm_c);

        let pobj = dot(c, &x) * inv_tau;
        let dobj = -dot(b, &z) * inv_tau;
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs().max(dobj.abs()));

        if primal_res <= settings.tol && dual_res <= settings.tol && gap <= settings.tol {
            return IpmSolution {
                status: IpmStatus::Optimal,
                x: x.iter().map(|v| v * inv_tau).collect(),
                s: s.iter().map(|v| v * inv_tau).collect(),
                z: z.iter().map(|v| v * inv_tau).collect(),
                iterations: iter,
                trace,
            };
        }

        // infeasibility certificates once the embedding collapses
        if mu <= 1e-4 * mu0 && tau <= 1e-2 * kappa.min(1.0) {
            let bz = dot(b, &z);
            if bz < -1e-10 {
                let mut atz = vec![0.0; n];
                a.axpy_transpose(1.0, &z, &mut atz);
                if inf_norm(&atz) / (-bz) * (1.0 + norm_b) <= 1e-6 {
                    return fail(
                        IpmStatus::PrimalInfeasible,
                        &x,
                        &s,
                        &z,
                        tau,
                        iter,
                        trace,
                        );
                }
            }
            let cx = dot(c, &x);
            if cx < -1e-10 {
                let mut axs = s.clone();
                a.axpy(1.0, &x, &mut axs);
                if inf_norm(&axs) / (-cx) * (1.0 + norm_c) <= 1e-6 {
                    return fail(
                        IpmStatus::DualInfeasible,
                        &x,
                        &s,
                        &z,
                        tau,
                        iter,
                        trace,
                        );
                }
            }
        }

        if cones.update_scaling(&s, &z).is_err() {
            return fail(
                IpmStatus::NumericalError,
                &x,
                &s,
                &z,
                tau,
                iter,
                trace,
                );
        }
        kkt.refactor(cones);
        if !kkt.solve(a, cones, &neg(c), b, &mut u1, &mut v1) {
            return fail(IpmStatus::NumericalError, &x, &s, &z, tau, iter, trace);
        }

        // dtau denominator via the quadratic form: c'u1 + b'v1 = -v1'Hv1
        // exactly, and the latter cannot flip sign through solve error
        let mut wv1 = vec![0.0; m];
        cones.mult_w(&v1, &mut wv1);
        let dtau_denom = -dot(&wv1, &wv1) - kappa / tau;

        let lambda = cones.lambda.clone();
        let mut ds = vec![0.0; m];
        cones.jordan_mul(&lambda, &lambda, &mut ds);
        for v in ds.iter_mut() {
            *v = -*v;
        }
        let d_kappa = -tau * kappa;

        // predictor
        let Some((_, dz_a, ds_a, dtau_a, dkappa_a)) = direction(
            a, cones, &kkt, c, b, &r_x, &r_z, r_tau, 1.0, &ds, d_kappa, tau, kappa, dtau_denom,
            &u1, &v1, &mut u2, &mut v2,
        ) else {
            return fail(IpmStatus::NumericalError, &x, &s, &z, tau, iter, trace);
        };
        let alpha_aff = step_length(cones, &s, &z, &ds_a, &dz_a, tau, kappa, dtau_a, dkappa_a, 1.0);
        let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 0.99);

        // corrector: Mehrotra second-order term plus centering
        let mut winv_ds = vec![0.0; m];
        cones.mult_w_inv(&ds_a, &mut winv_ds);
        let mut w_dz = vec![0.0; m];
        cones.mult_w(&dz_a, &mut w_dz);
        let mut corr = vec![0.0; m];
        cones.jordan_mul(&winv_ds, &w_dz, &mut corr);
        for (d, co) in ds.iter_mut().zip(&corr) {
            *d -= co;
        }
        cones.sub_identity(-sigma * mu, &mut ds);
        let d_kappa = -tau * kappa - dtau_a * dkappa_a + sigma * mu;

        let eta = 1.0 - sigma;
        let Some((dx, dz, ds_c, dtau, dkappa)) = direction(
            a, cones, &kkt, c, b, &r_x, &r_z, r_tau, eta, &ds, d_kappa, tau, kappa, dtau_denom,
            &u1, &v1, &mut u2, &mut v2,
        ) else {
            return fail(IpmStatus::NumericalError, &x, &s, &z, tau, iter, trace);
        };

        let mut alpha = STEP_FRACTION
            * step_length(cones, &s, &z, &ds_c, &dz, tau, kappa, dtau, dkappa, 1.0 / STEP_FRACTION);
        // backtrack so no complementarity pair collapses far below the
        // average; off-center iterates wreck the scaling matrices long
        // before mu reaches the tolerance. The floor adapts to the current
        // centrality so an already-off-center iterate can keep moving.
        let ratio_now = (cones.min_product(&s, &z).min(tau * kappa) / mu).max(1e-12);
        let gamma = NEIGHBORHOOD_GAMMA.min(0.5 * ratio_now);
        let mut s_try = vec![0.0; m];
        let mut z_try = vec![0.0; m];
        for _ in 0..MAX_BACKTRACKS {
            for i in 0..m {
                s_try[i] = s[i] + alpha * ds_c[i];
                z_try[i] = z[i] + alpha * dz[i];
            }
            let tau_try = tau + alpha * dtau;
            let kappa_try = kappa + alpha * dkappa;
            let mu_try = (cones.inner(&s_try, &z_try) + tau_try * kappa_try) / (degree + 1.0);
            let floor = gamma * mu_try;
            if cones.min_product(&s_try, &z_try) >= floor && tau_try * kappa_try >= floor {
                break;
            }
            alpha *= 0.7;
        }
        if !alpha.is_finite() || alpha <= 1e-14 {
            return fail(
                IpmStatus::NumericalError,
                &x,
                &s,
                &z,
                tau,
                iter,
                trace,
                );
        }

        for (xi, dxi) in x.iter_mut().zip(&dx) {
            *xi += alpha * dxi;
        }
        for (si, dsi) in s.iter_mut().zip(&ds_c) {
            *si += alpha * dsi;
        }
        for (zi, dzi) in z.iter_mut().zip(&dz) {
            *zi += alpha * dzi;
        }
        tau += alpha * dtau;
        kappa += alpha * dkappa;

        if settings.record_trace {
            trace.push(IterTrace {
                iter,
                mu,
                primal_res,
                dual_res,
                gap,
                step: alpha,
                sigma,
                tau,
                kappa,
            });
        }
    }

    fail(
        IpmStatus::MaxIterations,
        &x,
        &s,
        &z,
        tau,
        settings.max_iter,
        trace,
    )
}

fn neg(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| -x).collect()
}

/// One Newton direction for given residual damping and complementarity
/// targets, using the pre-solved constant column [u1; v1].
#[allow(clippy::too_many_arguments)]
fn direction(
    a: &CscMatrix,
    cones: &ConeSet,
    kkt: &Kkt,
    c: &[f64],
    b: &[f64],
    r_x: &[f64],
    r_z: &[f64],
    r_tau: f64,
    eta: f64,
    ds_target: &[f64],
    d_kappa: f64,
    tau: f64,
    kappa: f64,
    dtau_denom: f64,
    u1: &[f64],
    v1: &[f64],
    u2: &mut Vec<f64>,
    v2: &mut Vec<f64>,
) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>, f64, f64)> {
    let m = r_z.len();
    // rhs_z = -eta*r_z - W (lambda \ ds_target)
    let mut lam_div = vec![0.0; m];
    cones.lambda_div(ds_target, &mut lam_div);
    let mut w_ld = vec![0.0; m];
    cones.mult_w(&lam_div, &mut w_ld);
    let rhs_x: Vec<f64> = r_x.iter().map(|&v| -eta * v).collect();
    let rhs_z: Vec<f64> = r_z
        .iter()
        .zip(&w_ld)
        .map(|(&rz, &w)| -eta * rz - w)
        .collect();
    if !kkt.solve(a, cones, &rhs_x, &rhs_z, u2, v2) {
        return None;
    }

    let rhs_tau = -eta * r_tau;
    let dtau = (rhs_tau - dot(c, u2) - dot(b, v2) - d_kappa / tau) / dtau_denom;
    let dx: Vec<f64> = u2.iter().zip(u1).map(|(&a2, &a1)| a2 + dtau * a1).collect();
    let dz: Vec<f64> = v2.iter().zip(v1).map(|(&a2, &a1)| a2 + dtau * a1).collect();

    // ds = W (lambda \ ds_target) - H dz
    let mut w_dz = vec![0.0; m];
    cones.mult_w(&dz, &mut w_dz);
    let mut h_dz = vec![0.0; m];
    cones.mult_w(&w_dz, &mut h_dz);
    let ds: Vec<f64> = w_ld.iter().zip(&h_dz).map(|(&w, &h)| w - h).collect();
    let dkappa = (d_kappa - kappa * dtau) / tau;
    if !dtau.is_finite() || !dkappa.is_finite() {
        return None;
    }
    Some((dx, dz, ds, dtau, dkappa))
}

#[allow(clippy::too_many_arguments)]
fn step_length(
    cones: &ConeSet,
    s: &[f64],
    z: &[f64],
    ds: &[f64],
    dz: &[f64],
    tau: f64,
    kappa: f64,
    dtau: f64,
    dkappa: f64,
    cap: f64,
) -> f64 {
    let mut alpha = cap;
    alpha = cones.max_step(s, ds, alpha);
    alpha = cones.max_step(z, dz, alpha);
    alpha = alpha.min(ratio_step(tau, dtau));
    alpha = alpha.min(ratio_step(kappa, dkappa));
    alpha.min(cap)
}
