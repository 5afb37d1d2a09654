//! Seeded generation of solvable cone programs for solver validation.
//!
//! Problems are constructed from a known strictly feasible primal-dual
//! pair, so every generated system is feasible and bounded and the
//! embedded solver can be cross-checked against an external one through
//! the JSON debug dump.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::formulation::{AffineExpr, ConeSystem, LinearRow, RowTag, SocConstraint};

/// Problem family to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Linear,
    SecondOrder,
}

/// Generate a random feasible, bounded system with at most `max_vars`
/// variables.
pub fn random_system(seed: u64, kind: Kind, max_vars: usize) -> ConeSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e57_6e4e_5eed);
    let n = rng.gen_range(5..=max_vars.max(6).min(200));
    let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();

    let m_eq = rng.gen_range(1..=(n / 3).max(1));
    let m_ineq = rng.gen_range(2..=(n / 2).max(2));
    let n_cones = match kind {
        Kind::Linear => 0,
        Kind::SecondOrder => rng.gen_range(1..=(n / 6).max(1)),
    };

    let sparse_row = |rng: &mut ChaCha8Rng| -> (Vec<usize>, Vec<f64>) {
        let nnz = rng.gen_range(2..=5.min(n));
        let mut cols: Vec<usize> = (0..n).collect();
        for i in 0..nnz {
            let j = rng.gen_range(i..n);
            cols.swap(i, j);
        }
        let cols: Vec<usize> = cols[..nnz].to_vec();
        let coeffs: Vec<f64> = (0..nnz).map(|_| rng.gen_range(-2.0..2.0)).collect();
        (cols, coeffs)
    };
    let eval = |cols: &[usize], coeffs: &[f64], x: &[f64]| -> f64 {
        cols.iter().zip(coeffs).map(|(&c, &a)| a * x[c]).sum()
    };

    // dual certificate accumulates into the objective: c = -A_std' z0
    let mut c = vec![0.0; n];

    let mut equalities = Vec::new();
    for i in 0..m_eq {
        let (cols, coeffs) = sparse_row(&mut rng);
        let rhs = eval(&cols, &coeffs, &x0);
        let z0 = rng.gen_range(-1.0..1.0);
        for (&col, &coef) in cols.iter().zip(&coeffs) {
            c[col] -= coef * z0;
        }
        equalities.push(LinearRow {
            cols,
            coeffs,
            rhs,
            tag: RowTag::RealBalance { bus: i },
        });
    }

    let mut inequalities = Vec::new();
    for i in 0..m_ineq {
        let (cols, coeffs) = sparse_row(&mut rng);
        let slack = rng.gen_range(0.1..1.0);
        let rhs = eval(&cols, &coeffs, &x0) + slack;
        let z0 = rng.gen_range(0.05..1.0);
        for (&col, &coef) in cols.iter().zip(&coeffs) {
            c[col] -= coef * z0;
        }
        inequalities.push(LinearRow {
            cols,
            coeffs,
            rhs,
            tag: RowTag::PolygonEdge { branch: i, edge: 0 },
        });
    }

    let mut cones = Vec::new();
    for ci in 0..n_cones {
        let dim = rng.gen_range(3..=4);
        let mut exprs = Vec::with_capacity(dim);
        let mut tail_vals = Vec::new();
        let mut tail_rows = Vec::new();
        for _ in 1..dim {
            let (cols, coeffs) = sparse_row(&mut rng);
            let constant = rng.gen_range(-0.5..0.5);
            tail_vals.push(constant + eval(&cols, &coeffs, &x0));
            tail_rows.push((cols, coeffs, constant));
        }
        let norm = tail_vals.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (head_cols, head_coeffs) = sparse_row(&mut rng);
        let margin = rng.gen_range(0.2..1.0);
        let head_const = norm + margin - eval(&head_cols, &head_coeffs, &x0);

        // dual point strictly inside the cone
        let z_tail: Vec<f64> = (1..dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let z_norm = z_tail.iter().map(|v| v * v).sum::<f64>().sqrt();
        let z_head = z_norm + rng.gen_range(0.1..0.8);
        // std-form cone rows carry -coeffs, so c -= (-coef) z = +coef z
        for (&col, &coef) in head_cols.iter().zip(&head_coeffs) {
            c[col] += coef * z_head;
        }
        exprs.push(AffineExpr {
            constant: head_const,
            cols: head_cols,
            coeffs: head_coeffs,
        });
        for (k, (cols, coeffs, constant)) in tail_rows.into_iter().enumerate() {
            for (&col, &coef) in cols.iter().zip(&coeffs) {
                c[col] += coef * z_tail[k];
            }
            exprs.push(AffineExpr {
                constant,
                cols,
                coeffs,
            });
        }
        cones.push(SocConstraint {
            exprs,
            tag: RowTag::FlowCone { branch: ci },
        });
    }

    // wide box bounds keep everything bounded without moving the optimum
    // construction's feasibility; a few variables stay free
    let mut lower = vec![None; n];
    let mut upper = vec![None; n];
    for j in 0..n {
        if rng.gen_bool(0.7) {
            lower[j] = Some(-10.0);
            upper[j] = Some(10.0);
        }
    }

    ConeSystem {
        n_vars: n,
        objective: c,
        lower,
        upper,
        equalities,
        inequalities,
        cones,
        var_names: (0..n).map(|j| format!("x{j}")).collect(),
    }
}
