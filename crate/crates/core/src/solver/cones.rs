//! Cone kernels for the interior-point method: the zero cone (equality
//! rows), the nonnegative orthant and second-order cones, with
//! Nesterov-Todd scaling.
//!
//! Scaled points satisfy `lambda = W z = W^-T s`, with `W` symmetric
//! positive definite per block. For the orthant `W = diag(sqrt(s/z))`; for
//! a second-order cone `W = eta * G(wbar)` where `wbar` is the NT scaling
//! point on the unit hyperboloid and `G` its hyperbolic Householder-like
//! representation.

/// One cone block of the product cone, with its row offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeSpec {
    /// Equality rows: s fixed at 0, dual free.
    Zero(usize),
    /// Componentwise inequalities.
    Nonneg(usize),
    /// Standard second-order cone of the given dimension (>= 2).
    Soc(usize),
}

impl ConeSpec {
    pub fn dim(&self) -> usize {
        match *self {
            ConeSpec::Zero(d) | ConeSpec::Nonneg(d) | ConeSpec::Soc(d) => d,
        }
    }
}

#[derive(Debug, Clone)]
enum Scaling {
    Zero,
    /// w_i = sqrt(s_i / z_i) per row.
    Nonneg(Vec<f64>),
    /// eta and the unit-hyperboloid point wbar.
    Soc { eta: f64, wbar: Vec<f64> },
}

/// Product-cone state: block layout, current NT scaling and scaled point.
pub struct ConeSet {
    specs: Vec<(usize, ConeSpec)>, // (row offset, spec)
    m: usize,
    degree: f64,
    scalings: Vec<Scaling>,
    /// Scaled point lambda, zero on equality rows.
    pub lambda: Vec<f64>,
}

fn soc_residual(u: &[f64]) -> f64 {
    // u0^2 - ||u1:||^2
    u[0] * u[0] - u[1..].iter().map(|v| v * v).sum::<f64>()
}

/// Apply G(wbar) to u, in place of a dense multiply.
fn apply_g(wbar: &[f64], u: &[f64], out: &mut [f64]) {
    let a = wbar[0];
    let b = &wbar[1..];
    let bu: f64 = b.iter().zip(&u[1..]).map(|(x, y)| x * y).sum();
    out[0] = a * u[0] + bu;
    let f = u[0] + bu / (1.0 + a);
    for (o, (&bi, &ui)) in out[1..].iter_mut().zip(b.iter().zip(&u[1..])) {
        *o = ui + f * bi;
    }
}

/// Apply G(wbar)^-1 = G(J wbar) to u.
fn apply_g_inv(wbar: &[f64], u: &[f64], out: &mut [f64]) {
    let a = wbar[0];
    let b = &wbar[1..];
    let bu: f64 = b.iter().zip(&u[1..]).map(|(x, y)| x * y).sum();
    out[0] = a * u[0] - bu;
    let f = -u[0] + bu / (1.0 + a);
    for (o, (&bi, &ui)) in out[1..].iter_mut().zip(b.iter().zip(&u[1..])) {
        *o = ui + f * bi;
    }
}

impl ConeSet {
    pub fn new(specs: Vec<ConeSpec>) -> ConeSet {
        let mut offset = 0;
        let mut laid = Vec::with_capacity(specs.len());
        let mut degree = 0.0;
        for spec in specs {
            laid.push((offset, spec));
            offset += spec.dim();
            degree += match spec {
                ConeSpec::Zero(_) => 0.0,
                ConeSpec::Nonneg(d) => d as f64,
                ConeSpec::Soc(_) => 1.0,
            };
        }
        let scalings = laid.iter().map(|_| Scaling::Zero).collect();
        ConeSet {
            m: offset,
            degree,
            scalings,
            lambda: vec![0.0; offset],
            specs: laid,
        }
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    /// Barrier degree of the product cone.
    pub fn degree(&self) -> f64 {
        self.degree
    }

    /// Set s and z to the cone's unit point (zero on equality blocks).
    pub fn init_unit(&self, s: &mut [f64], z: &mut [f64]) {
        s.fill(0.0);
        z.fill(0.0);
        for &(off, spec) in &self.specs {
            match spec {
                ConeSpec::Zero(_) => {}
                ConeSpec::Nonneg(d) => {
                    for i in off..off + d {
                        s[i] = 1.0;
                        z[i] = 1.0;
                    }
                }
                ConeSpec::Soc(_) => {
                    s[off] = 1.0;
                    z[off] = 1.0;
                }
            }
        }
    }

    /// Recompute the NT scaling at (s, z). Fails if either point has left
    /// the cone interior.
    pub fn update_scaling(&mut self, s: &[f64], z: &[f64]) -> Result<(), ()> {
        for (bi, &(off, spec)) in self.specs.iter().enumerate() {
            match spec {
                ConeSpec::Zero(d) => {
                    self.scalings[bi] = Scaling::Zero;
                    self.lambda[off..off + d].fill(0.0);
                }
                ConeSpec::Nonneg(d) => {
                    let mut w = vec![0.0; d];
                    for i in 0..d {
                        let (si, zi) = (s[off + i], z[off + i]);
                        if si <= 1e-280 || zi <= 1e-280 {
                            return Err(());
                        }
                        w[i] = (si / zi).sqrt();
                        self.lambda[off + i] = (si * zi).sqrt();
                    }
                    self.scalings[bi] = Scaling::Nonneg(w);
                }
                ConeSpec::Soc(d) => {
                    let sb = &s[off..off + d];
                    let zb = &z[off..off + d];
                    let js = soc_residual(sb);
                    let jz = soc_residual(zb);
                    if js <= 1e-280 || jz <= 1e-280 || sb[0] <= 0.0 || zb[0] <= 0.0 {
                        return Err(());
                    }
                    let (sqs, sqz) = (js.sqrt(), jz.sqrt());
                    let dot: f64 = sb.iter().zip(zb).map(|(a, b)| a * b).sum::<f64>() / (sqs * sqz);
                    let gamma = ((1.0 + dot) / 2.0).sqrt();
                    let mut wbar = vec![0.0; d];
                    wbar[0] = (sb[0] / sqs + zb[0] / sqz) / (2.0 * gamma);
                    for i in 1..d {
                        wbar[i] = (sb[i] / sqs - zb[i] / sqz) / (2.0 * gamma);
                    }
                    let eta = (js / jz).powf(0.25);
                    // lambda = eta * G(wbar) * z
                    let mut lam = vec![0.0; d];
                    apply_g(&wbar, zb, &mut lam);
                    for (l, v) in self.lambda[off..off + d].iter_mut().zip(&lam) {
                        *l = eta * v;
                    }
                    self.scalings[bi] = Scaling::Soc { eta, wbar };
                }
            }
        }
        Ok(())
    }

    /// out = W u (zero on equality blocks).
    pub fn mult_w(&self, u: &[f64], out: &mut [f64]) {
        for (bi, &(off, spec)) in self.specs.iter().enumerate() {
            let d = spec.dim();
            match &self.scalings[bi] {
                Scaling::Zero => out[off..off + d].fill(0.0),
                Scaling::Nonneg(w) => {
                    for i in 0..d {
                        out[off + i] = w[i] * u[off + i];
                    }
                }
                Scaling::Soc { eta, wbar } => {
                    let mut tmp = vec![0.0; d];
                    apply_g(wbar, &u[off..off + d], &mut tmp);
                    for i in 0..d {
                        out[off + i] = eta * tmp[i];
                    }
                }
            }
        }
    }

    /// out = W^-1 u (zero on equality blocks).
    pub fn mult_w_inv(&self, u: &[f64], out: &mut [f64]) {
        for (bi, &(off, spec)) in self.specs.iter().enumerate() {
            let d = spec.dim();
            match &self.scalings[bi] {
                Scaling::Zero => out[off..off + d].fill(0.0),
                Scaling::Nonneg(w) => {
                    for i in 0..d {
                        out[off + i] = u[off + i] / w[i];
                    }
                }
                Scaling::Soc { eta, wbar } => {
                    let mut tmp = vec![0.0; d];
                    apply_g_inv(wbar, &u[off..off + d], &mut tmp);
                    for i in 0..d {
                        out[off + i] = tmp[i] / eta;
                    }
                }
            }
        }
    }

    /// Upper-triangle entries of H = W'W per block, as (local i, local j,
    /// value) relative to the block offset. Entry layout is stable across
    /// iterations.
    pub fn h_entries(&self, block: usize, out: &mut Vec<(usize, usize, f64)>) {
        out.clear();
        let (_, spec) = self.specs[block];
        match (&self.scalings[block], spec) {
            (Scaling::Zero, _) => {}
            (Scaling::Nonneg(w), _) => {
                for (i, &wi) in w.iter().enumerate() {
                    out.push((i, i, wi * wi));
                }
            }
            (Scaling::Soc { eta, wbar }, _) => {
                // H = eta^2 (2 wbar wbar' - J)
                let d = wbar.len();
                let e2 = eta * eta;
                for i in 0..d {
                    for j in i..d {
                        let mut v = 2.0 * wbar[i] * wbar[j];
                        if i == j {
                            v -= if i == 0 { 1.0 } else { -1.0 };
                        }
                        out.push((i, j, e2 * v));
                    }
                }
            }
        }
    }

    pub fn blocks(&self) -> &[(usize, ConeSpec)] {
        &self.specs
    }

    /// out = lambda \ d (Jordan-algebra inverse against the scaled point).
    pub fn lambda_div(&self, d_vec: &[f64], out: &mut [f64]) {
        for &(off, spec) in &self.specs {
            let d = spec.dim();
            match spec {
                ConeSpec::Zero(_) => out[off..off + d].fill(0.0),
                ConeSpec::Nonneg(_) => {
                    for i in off..off + d {
                        out[i] = d_vec[i] / self.lambda[i];
                    }
                }
                ConeSpec::Soc(_) => {
                    let lam = &self.lambda[off..off + d];
                    let rhs = &d_vec[off..off + d];
                    let jl = soc_residual(lam);
                    let lr: f64 = lam[1..].iter().zip(&rhs[1..]).map(|(a, b)| a * b).sum();
                    let x0 = (lam[0] * rhs[0] - lr) / jl;
                    out[off] = x0;
                    for i in 1..d {
                        out[off + i] = (rhs[i] - x0 * lam[i]) / lam[0];
                    }
                }
            }
        }
    }

    /// out = a o b (Jordan product per block).
    pub fn jordan_mul(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        for &(off, spec) in &self.specs {
            let d = spec.dim();
            match spec {
                ConeSpec::Zero(_) => out[off..off + d].fill(0.0),
                ConeSpec::Nonneg(_) => {
                    for i in off..off + d {
                        out[i] = a[i] * b[i];
                    }
                }
                ConeSpec::Soc(_) => {
                    let ab = &a[off..off + d];
                    let bb = &b[off..off + d];
                    let dot: f64 = ab.iter().zip(bb).map(|(x, y)| x * y).sum();
                    out[off] = dot;
                    for i in 1..d {
                        out[off + i] = ab[0] * bb[i] + bb[0] * ab[i];
                    }
                }
            }
        }
    }

    /// Subtract sigma*mu from the identity-element components:
    /// out -= sigma_mu * e.
    pub fn sub_identity(&self, sigma_mu: f64, out: &mut [f64]) {
        for &(off, spec) in &self.specs {
            match spec {
                ConeSpec::Zero(_) => {}
                ConeSpec::Nonneg(d) => {
                    for i in off..off + d {
                        out[i] -= sigma_mu;
                    }
                }
                ConeSpec::Soc(_) => out[off] -= sigma_mu,
            }
        }
    }

    /// Largest alpha in [0, cap] with p + alpha*dp still in the cone
    /// (equality blocks unrestricted).
    pub fn max_step(&self, p: &[f64], dp: &[f64], cap: f64) -> f64 {
        let mut alpha = cap;
        for &(off, spec) in &self.specs {
            match spec {
                ConeSpec::Zero(_) => {}
                ConeSpec::Nonneg(d) => {
                    for i in off..off + d {
                        if dp[i] < 0.0 {
                            alpha = alpha.min(-p[i] / dp[i]);
                        }
                    }
                }
                ConeSpec::Soc(d) => {
                    let pb = &p[off..off + d];
                    let db = &dp[off..off + d];
                    alpha = alpha.min(soc_max_step(pb, db));
                }
            }
        }
        alpha.max(0.0)
    }

    /// Shift a candidate point into the cone interior blockwise: where a
    /// block sits outside (or too close to) the boundary, add a multiple of
    /// the block's unit element. Zero blocks are forced to zero.
    pub fn shift_into_interior(&self, v: &mut [f64]) {
        for &(off, spec) in &self.specs {
            match spec {
                ConeSpec::Zero(d) => v[off..off + d].fill(0.0),
                ConeSpec::Nonneg(d) => {
                    let min = v[off..off + d].iter().fold(f64::INFINITY, |m, &x| m.min(x));
                    if min <= 0.0 {
                        let shift = 1.0 - min;
                        for x in v[off..off + d].iter_mut() {
                            *x += shift;
                        }
                    }
                }
                ConeSpec::Soc(d) => {
                    let tail: f64 = v[off + 1..off + d].iter().map(|x| x * x).sum::<f64>().sqrt();
                    let margin = v[off] - tail;
                    if margin <= 0.0 {
                        v[off] += 1.0 - margin;
                    }
                }
            }
        }
    }

    /// Smallest complementarity measure across blocks: per-row products on
    /// the orthant, the block inner product (per unit of rank) on
    /// second-order cones. Used for wide-neighborhood centrality checks.
    pub fn min_product(&self, s: &[f64], z: &[f64]) -> f64 {
        let mut min = f64::INFINITY;
        for &(off, spec) in &self.specs {
            match spec {
                ConeSpec::Zero(_) => {}
                ConeSpec::Nonneg(d) => {
                    for i in off..off + d {
                        min = min.min(s[i] * z[i]);
                    }
                }
                ConeSpec::Soc(d) => {
                    // the minimum Jordan eigenvalue product of the scaled
                    // pair is J(s) * J(z); inner products alone can look
                    // healthy while both points slide onto the boundary
                    let js = soc_residual(&s[off..off + d]);
                    let jz = soc_residual(&z[off..off + d]);
                    min = min.min((js.max(0.0) * jz.max(0.0)).sqrt());
                }
            }
        }
        min
    }

    /// <s, z> over the cone rows (equality rows excluded by construction
    /// since s is zero there).
    pub fn inner(&self, s: &[f64], z: &[f64]) -> f64 {
        let mut acc = 0.0;
        for &(off, spec) in &self.specs {
            if matches!(spec, ConeSpec::Zero(_)) {
                continue;
            }
            let d = spec.dim();
            for i in off..off + d {
                acc += s[i] * z[i];
            }
        }
        acc
    }
}

/// Largest step keeping `p + alpha d` in the second-order cone, for `p`
/// strictly inside it.
fn soc_max_step(p: &[f64], d: &[f64]) -> f64 {
    // roots of (p0 + a d0)^2 - ||pb + a db||^2 = 0
    let a = soc_residual(d);
    let c = soc_residual(p);
    let b = 2.0 * (p[0] * d[0] - p[1..].iter().zip(&d[1..]).map(|(x, y)| x * y).sum::<f64>());
    if c <= 0.0 {
        eprintln!("SOC max_step: c = {c:e}, p = {p:?}, d = {d:?}");
        debug_assert!(c > 0.0);
    }
    let root = if a.abs() < 1e-300 {
        if b >= 0.0 {
            return f64::INFINITY;
        }
        -c / b
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            // no boundary crossing; a > 0 keeps the form positive
            return f64::INFINITY;
        }
        let sq = disc.sqrt();
        let q = -0.5 * (b + b.signum() * sq);
        let (r1, r2) = (q / a, if q != 0.0 { c / q } else { f64::INFINITY });
        let mut best = f64::INFINITY;
        for r in [r1, r2] {
            if r > 0.0 && r < best {
                best = r;
            }
        }
        if best.is_infinite() {
            return f64::INFINITY;
        }
        best
    };
    // the head must stay nonnegative up to the root
    if p[0] + root * d[0] < -1e-12 {
        // crossed head first: step to where head hits zero
        if d[0] < 0.0 {
            return -p[0] / d[0];
        }
    }
    root.max(0.0)
}
