//! Sparse LDL' factorization of quasi-definite KKT matrices.
//!
//! Up-looking factorization over a cached elimination-tree symbolic
//! analysis, so the per-iteration refactorizations reuse the pattern work.
//! A reverse Cuthill-McKee permutation keeps fill-in modest on the
//! tree-structured systems this crate produces. Pivots are clamped away
//! from zero toward their expected sign (positive for the primal block,
//! negative for the dual block); the interior-point loop recovers the
//! perturbation with iterative refinement.

/// Reverse Cuthill-McKee ordering of a symmetric pattern given as
/// undirected adjacency lists. Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let degree: Vec<usize> = adjacency.iter().map(|a| a.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let bfs_far = |start: usize, visited: &[bool]| -> usize {
        // last node of a BFS level structure approximates a peripheral node
        let mut seen = visited.to_vec();
        let mut queue = vec![start];
        seen[start] = true;
        let mut last = start;
        let mut head = 0;
        while head < queue.len() {
            let u = queue[head];
            head += 1;
            last = u;
            for &v in &adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push(v);
                }
            }
        }
        last
    };

    for comp_start in 0..n {
        if visited[comp_start] {
            continue;
        }
        let s = bfs_far(comp_start, &visited);
        let start = bfs_far(s, &visited);
        visited[start] = true;
        let mut queue = vec![start];
        let mut head = 0;
        while head < queue.len() {
            let u = queue[head];
            head += 1;
            order.push(u);
            let mut nbrs: Vec<usize> = adjacency[u].iter().copied().filter(|&v| !visited[v]).collect();
            nbrs.sort_unstable_by_key(|&v| (degree[v], v));
            for v in nbrs {
                if !visited[v] {
                    visited[v] = true;
                    queue.push(v);
                }
            }
        }
    }
    order.reverse();
    order
}

/// Sparse LDL' with a fixed pattern and updatable values.
pub struct LdlSolver {
    n: usize,
    perm: Vec<usize>,
    // permuted upper-triangular pattern (CSC)
    ap: Vec<usize>,
    ai: Vec<usize>,
    ax: Vec<f64>,
    // caller entry slot -> position in ax
    slot_pos: Vec<usize>,
    // elimination tree and L storage (pattern fixed after symbolic phase)
    parent: Vec<i64>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    // expected pivot signs in permuted order
    sign: Vec<i8>,
    // work arrays
    lnz: Vec<usize>,
    y: Vec<f64>,
    pattern: Vec<usize>,
    flag: Vec<usize>,
}

impl LdlSolver {
    /// Set up the solver for a fixed symmetric pattern.
    ///
    /// `entries` lists the structural nonzeros (any orientation, duplicates
    /// allowed and summed); `sign[i]` is the expected sign of pivot `i` in
    /// the original ordering.
    pub fn new(n: usize, entries: &[(usize, usize)], sign: &[i8]) -> LdlSolver {
        // adjacency for ordering (off-diagonal only)
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(i, j) in entries {
            if i != j {
                adjacency[i].push(j);
                adjacency[j].push(i);
            }
        }
        for a in &mut adjacency {
            a.sort_unstable();
            a.dedup();
        }
        let perm = reverse_cuthill_mckee(&adjacency);
        let mut iperm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }

        // permuted upper-triangular pattern with slot mapping
        let permuted: Vec<(usize, usize)> = entries
            .iter()
            .map(|&(i, j)| {
                let (pi, pj) = (iperm[i], iperm[j]);
                if pi <= pj {
                    (pi, pj)
                } else {
                    (pj, pi)
                }
            })
            .collect();
        let mut per_col: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(r, c) in &permuted {
            per_col[c].push(r);
        }
        let mut ap = vec![0usize; n + 1];
        let mut ai = Vec::new();
        let mut pos_of: Vec<std::collections::BTreeMap<usize, usize>> = vec![Default::default(); n];
        for c in 0..n {
            per_col[c].sort_unstable();
            per_col[c].dedup();
            for &r in &per_col[c] {
                pos_of[c].insert(r, ai.len());
                ai.push(r);
            }
            ap[c + 1] = ai.len();
        }
        let slot_pos: Vec<usize> = permuted.iter().map(|&(r, c)| pos_of[c][&r]).collect();

        let mut permuted_sign = vec![0i8; n];
        for old in 0..n {
            permuted_sign[iperm[old]] = sign[old];
        }

        let mut solver = LdlSolver {
            n,
            ax: vec![0.0; ai.len()],
            slot_pos,
            parent: vec![-1; n],
            lp: vec![0; n + 1],
            li: Vec::new(),
            lx: Vec::new(),
            d: vec![0.0; n],
            sign: permuted_sign,
            lnz: vec![0; n],
            y: vec![0.0; n],
            pattern: vec![0; n],
            flag: vec![usize::MAX; n],
            ap,
            ai,
            perm,
        };
        solver.symbolic();
        solver
    }

    /// Elimination tree and column counts; allocates L.
    fn symbolic(&mut self) {
        let n = self.n;
        let mut ancestor = vec![-1i64; n];
        for k in 0..n {
            self.parent[k] = -1;
            for p in self.ap[k]..self.ap[k + 1] {
                let mut i = self.ai[p] as i64;
                while i != -1 && (i as usize) < k {
                    let next = ancestor[i as usize];
                    ancestor[i as usize] = k as i64;
                    if next == -1 {
                        self.parent[i as usize] = k as i64;
                        break;
                    }
                    i = next;
                }
            }
        }
        // column counts via the row-pattern walk
        let mut counts = vec![0usize; n];
        for k in 0..n {
            self.flag[k] = k;
            for p in self.ap[k]..self.ap[k + 1] {
                let mut i = self.ai[p];
                while i < k && self.flag[i] != k {
                    counts[i] += 1;
                    self.flag[i] = k;
                    i = self.parent[i] as usize; // parent chain reaches k
                }
            }
        }
        self.lp[0] = 0;
        for k in 0..n {
            self.lp[k + 1] = self.lp[k] + counts[k];
        }
        let lnnz = self.lp[n];
        self.li = vec![0; lnnz];
        self.lx = vec![0.0; lnnz];
        self.flag.fill(usize::MAX);
    }

    /// Refactor with new entry values (aligned with the `entries` slice the
    /// solver was built from). Pivots with magnitude below `pivot_eps` are
    /// clamped toward their expected sign.
    pub fn factor(&mut self, values: &[f64], pivot_eps: f64) {
        debug_assert_eq!(values.len(), self.slot_pos.len());
        self.ax.fill(0.0);
        for (slot, &v) in values.iter().enumerate() {
            self.ax[self.slot_pos[slot]] += v;
        }

        let n = self.n;
        self.lnz.fill(0);
        self.y.fill(0.0);
        self.flag.fill(usize::MAX);
        for k in 0..n {
            let mut top = n;
            self.flag[k] = k;
            for p in self.ap[k]..self.ap[k + 1] {
                let i = self.ai[p];
                if i > k {
                    continue;
                }
                self.y[i] += self.ax[p];
                let mut len = 0;
                let mut ii = i;
                while ii < k && self.flag[ii] != k {
                    self.pattern[len] = ii;
                    len += 1;
                    self.flag[ii] = k;
                    ii = self.parent[ii] as usize;
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    self.pattern[top] = self.pattern[len];
                }
            }
            let mut dk = self.y[k];
            self.y[k] = 0.0;
            for s in top..n {
                let i = self.pattern[s];
                let yi = self.y[i];
                self.y[i] = 0.0;
                let p2 = self.lp[i] + self.lnz[i];
                for p in self.lp[i]..p2 {
                    self.y[self.li[p]] -= self.lx[p] * yi;
                }
                let lki = yi / self.d[i];
                dk -= lki * yi;
                self.li[p2] = k;
                self.lx[p2] = lki;
                self.lnz[i] += 1;
            }
            // static sign clamp keeps the quasi-definite factorization alive
            self.d[k] = match self.sign[k] {
                s if s > 0 => dk.max(pivot_eps),
                s if s < 0 => dk.min(-pivot_eps),
                _ => {
                    if dk.abs() >= pivot_eps {
                        dk
                    } else if dk >= 0.0 {
                        pivot_eps
                    } else {
                        -pivot_eps
                    }
                }
            };
        }
    }

    /// Factor-quality diagnostics: (max |L|, min |D|, max |D|).
    pub fn factor_stats(&self) -> (f64, f64, f64) {
        let max_l = self.lx.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let min_d = self.d.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let max_d = self.d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (max_l, min_d, max_d)
    }

    /// Solve K x = b using the current factorization.
    pub fn solve(&self, b: &[f64], x: &mut [f64]) {
        let n = self.n;
        let mut w = vec![0.0; n];
        for new in 0..n {
            w[new] = b[self.perm[new]];
        }
        // forward: L y = b
        for j in 0..n {
            let yj = w[j];
            if yj != 0.0 {
                for p in self.lp[j]..self.lp[j] + self.lnz[j] {
                    w[self.li[p]] -= self.lx[p] * yj;
                }
            }
        }
        // diagonal
        for j in 0..n {
            w[j] /= self.d[j];
        }
        // backward: L' x = y
        for j in (0..n).rev() {
            let mut acc = w[j];
            for p in self.lp[j]..self.lp[j] + self.lnz[j] {
                acc -= self.lx[p] * w[self.li[p]];
            }
            w[j] = acc;
        }
        for new in 0..n {
            x[self.perm[new]] = w[new];
        }
    }

    pub fn l_nnz(&self) -> usize {
        self.lp[self.n]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense reference solve via Gaussian elimination with partial pivoting.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let piv = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
            a.swap(k, piv);
            b.swap(k, piv);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let mut acc = b[k];
            for j in k + 1..n {
                acc -= a[k][j] * x[j];
            }
            x[k] = acc / a[k][k];
        }
        x
    }

    #[test]
    fn random_quasi_definite_systems_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let nx = 4 + trial % 5;
            let nz = 5 + trial % 7;
            let n = nx + nz;
            // K = [D1 A'; A -D2] with random sparse A
            let mut entries = Vec::new();
            let mut values = Vec::new();
            let mut dense = vec![vec![0.0; n]; n];
            let mut sign = vec![0i8; n];
            for i in 0..nx {
                let v = rng.gen_range(0.5..2.0);
                entries.push((i, i));
                values.push(v);
                dense[i][i] = v;
                sign[i] = 1;
            }
            for i in 0..nz {
                let v = -rng.gen_range(0.5..2.0);
                entries.push((nx + i, nx + i));
                values.push(v);
                dense[nx + i][nx + i] = v;
                sign[nx + i] = -1;
            }
            for _ in 0..(2 * n) {
                let r = nx + rng.gen_range(0..nz);
                let c = rng.gen_range(0..nx);
                let v: f64 = rng.gen_range(-2.0..2.0);
                entries.push((r, c));
                values.push(v);
                dense[r][c] += v;
                dense[c][r] += v;
            }
            let mut solver = LdlSolver::new(n, &entries, &sign);
            assert!(solver.l_nnz() <= n * (n - 1) / 2);
            solver.factor(&values, 1e-13);
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut x = vec![0.0; n];
            solver.solve(&b, &mut x);
            let x_ref = dense_solve(dense, b);
            for i in 0..n {
                assert!(
                    (x[i] - x_ref[i]).abs() <= 1e-8 * (1.0 + x_ref[i].abs()),
                    "trial {trial}: x[{i}] = {} vs {}",
                    x[i],
                    x_ref[i]
                );
            }
        }
    }

    #[test]
    fn refactor_reuses_pattern() {
        let entries = vec![(0, 0), (1, 1), (2, 2), (2, 0), (2, 1)];
        let sign = vec![1, 1, -1];
        let mut solver = LdlSolver::new(3, &entries, &sign);
        solver.factor(&[1.0, 1.0, -1.0, 1.0, 1.0], 1e-13);
        let mut x = vec![0.0; 3];
        solver.solve(&[1.0, 0.0, 0.0], &mut x);
        // K = [1 0 1; 0 1 1; 1 1 -1]: solve against dense result
        let x_ref = dense_solve(
            vec![
                vec![1.0, 0.0, 1.0],
                vec![0.0, 1.0, 1.0],
                vec![1.0, 1.0, -1.0],
            ],
            vec![1.0, 0.0, 0.0],
        );
        for i in 0..3 {
            assert!((x[i] - x_ref[i]).abs() < 1e-12);
        }
        // same pattern, new values
        solver.factor(&[2.0, 3.0, -1.5, 0.5, -0.5], 1e-13);
        solver.solve(&[1.0, 2.0, 3.0], &mut x);
        let x_ref = dense_solve(
            vec![
                vec![2.0, 0.0, 0.5],
                vec![0.0, 3.0, -0.5],
                vec![0.5, -0.5, -1.5],
            ],
            vec![1.0, 2.0, 3.0],
        );
        for i in 0..3 {
            assert!((x[i] - x_ref[i]).abs() < 1e-10);
        }
    }
}
