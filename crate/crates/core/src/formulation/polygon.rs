//! Polygonal inner approximation of the quadratic apparent-flow limit.
//!
//! The disk P^2 + Q^2 <= S_max^2 is replaced by an inscribed regular
//! M-gon whose vertices lie on the circle of radius S_max. Edge m has its
//! outward normal at the mid-angle between vertices m and m+1, giving the
//! linear constraint
//!
//! ```text
//! alpha_m * P + beta_m * Q + delta_m * S_max <= 0
//! ```
//!
//! with `alpha_m^2 + beta_m^2 = 1` and `delta_m = -cos(pi / M)` (the
//! apothem of the unit polygon). Scaling by the branch capacity happens
//! where the constraint rows are emitted.

use serde::{Deserialize, Serialize};

use super::FormulationError;

/// One edge of the unit flow polygon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolygonEdge {
    /// P coefficient of the unit outward normal.
    pub alpha: f64,
    /// Q coefficient of the unit outward normal.
    pub beta: f64,
    /// Offset coefficient, `-cos(pi / M)`.
    pub delta: f64,
}

/// Edges of the inscribed M-gon with vertices at angles `2*pi*m / M`.
///
/// M must be even and at least 4. The worst-case capacity loss of the
/// approximation is `1 - cos(pi / M)` (about 3.4% for M = 12).
pub fn polygon_edges(m: usize) -> Result<Vec<PolygonEdge>, FormulationError> {
    if m < 4 || m % 2 != 0 {
        return Err(FormulationError::InvalidParameter(format!(
            "polygon side count must be even and >= 4, got {m}"
        )));
    }
    let delta = -(std::f64::consts::PI / m as f64).cos();
    Ok((0..m)
        .map(|k| {
            let phi = (2 * k + 1) as f64 * std::f64::consts::PI / m as f64;
            PolygonEdge {
                alpha: phi.cos(),
                beta: phi.sin(),
                delta,
            }
        })
        .collect())
}

/// Polygon vertices, on the unit circle at angles `2*pi*m / M`.
pub fn polygon_vertices(m: usize) -> Vec<(f64, f64)> {
    (0..m)
        .map(|k| {
            let theta = 2.0 * k as f64 * std::f64::consts::PI / m as f64;
            (theta.cos(), theta.sin())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn edge_value(e: &PolygonEdge, p: f64, q: f64) -> f64 {
        // with S_max = 1: alpha p + beta q + delta <= 0
        e.alpha * p + e.beta * q + e.delta
    }

    #[test]
    fn square_matches_hand_geometry() {
        let edges = polygon_edges(4).unwrap();
        let expect_delta = -(std::f64::consts::FRAC_PI_4).cos();
        for (k, e) in edges.iter().enumerate() {
            let phi = (2 * k + 1) as f64 * std::f64::consts::FRAC_PI_4;
            assert!((e.alpha - phi.cos()).abs() < 1e-15);
            assert!((e.beta - phi.sin()).abs() < 1e-15);
            assert!((e.delta - expect_delta).abs() < 1e-15);
        }
        // vertices (1,0), (0,1), (-1,0), (0,-1) sit on each edge's boundary
        // for exactly two edges and strictly inside the rest
        for &(p, q) in &polygon_vertices(4) {
            let mut tight = 0;
            for e in &edges {
                let v = edge_value(e, p, q);
                assert!(v <= 1e-12, "vertex outside edge: {v}");
                if v.abs() <= 1e-12 {
                    tight += 1;
                }
            }
            assert_eq!(tight, 2);
        }
    }

    #[test]
    fn normals_are_unit() {
        for m in [4, 8, 12, 36] {
            for e in polygon_edges(m).unwrap() {
                assert!((e.alpha * e.alpha + e.beta * e.beta - 1.0).abs() <= 1e-12);
                assert!(e.delta < 0.0);
            }
        }
    }

    #[test]
    fn vertices_tight_on_adjacent_edges() {
        for m in [4, 8, 12, 36] {
            let edges = polygon_edges(m).unwrap();
            for (vi, &(p, q)) in polygon_vertices(m).iter().enumerate() {
                for (ei, e) in edges.iter().enumerate() {
                    let v = edge_value(e, p, q);
                    assert!(v <= 1e-12);
                    let adjacent = ei == vi || ei == (vi + m - 1) % m;
                    if adjacent {
                        assert!(v.abs() <= 1e-12, "m={m} vertex {vi} edge {ei}: {v}");
                    }
                }
            }
        }
    }

    #[test]
    fn point_beyond_vertex_violates() {
        for m in [4, 8, 12, 36] {
            let edges = polygon_edges(m).unwrap();
            let violated = edges.iter().any(|e| edge_value(e, 1.001, 0.0) > 0.0);
            assert!(violated, "M = {m}");
        }
    }

    #[test]
    fn odd_or_small_side_count_rejected() {
        assert!(polygon_edges(3).is_err());
        assert!(polygon_edges(5).is_err());
        assert!(polygon_edges(2).is_err());
        assert!(polygon_edges(0).is_err());
    }

    proptest! {
        /// Any point satisfying all edges lies inside the disk.
        #[test]
        fn polygon_is_inner_approximation(p in -1.5f64..1.5, q in -1.5f64..1.5) {
            let edges = polygon_edges(12).unwrap();
            if edges.iter().all(|e| edge_value(e, p, q) <= 0.0) {
                prop_assert!(p * p + q * q <= 1.0 + 1e-12);
            }
        }
    }
}
