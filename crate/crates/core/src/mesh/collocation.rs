//! Collocation points: element quadrature for interior terms, facet
//! quadrature for boundary terms.
//!
//! The interior weights `v` sum to the domain measure, the boundary weights
//! `a` per tag sum to that tag's boundary measure, so weighted point sums
//! approximate the corresponding integrals.

use crate::error::{Error, Result};
use crate::mesh::{ElementKind, Mesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadRule {
    /// One point per element (centroid / midpoint).
    Centroid,
    /// Gauss rule with the given point count: 2 on segments and facet edges,
    /// 3 on triangles. `Gauss(1)` coincides with `Centroid`.
    Gauss(usize),
}

#[derive(Debug, Clone)]
pub struct BoundaryPoint {
    pub x: [f64; 2],
    /// Facet-measure weight.
    pub weight: f64,
    /// Index into `mesh.facets`.
    pub facet: usize,
    pub normal: [f64; 2],
    pub tangent: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct CollocationSet {
    /// Interior quadrature points.
    pub points: Vec<[f64; 2]>,
    /// Interior weights `v`, one per point.
    pub weights: Vec<f64>,
    /// Owning element of each interior point.
    pub element_of: Vec<usize>,
    pub boundary: Vec<BoundaryPoint>,
}

impl CollocationSet {
    pub fn n_interior(&self) -> usize {
        self.points.len()
    }

    /// Indices into `boundary` for points on facets with the given tag.
    pub fn boundary_with_tag<'a>(&'a self, mesh: &'a Mesh, tag: &'a str) -> Vec<usize> {
        self.boundary
            .iter()
            .enumerate()
            .filter(|(_, p)| mesh.facets[p.facet].tag == tag)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Barycentric interior rule for an element kind.
fn interior_rule(kind: ElementKind, rule: QuadRule) -> Result<Vec<(Vec<f64>, f64)>> {
    // Each entry: (barycentric coordinates, fraction of the element measure).
    match (kind, rule) {
        (ElementKind::Line2, QuadRule::Centroid) | (ElementKind::Line2, QuadRule::Gauss(1)) => {
            Ok(vec![(vec![0.5, 0.5], 1.0)])
        }
        (ElementKind::Line2, QuadRule::Gauss(2)) => {
            let a = 0.5 - 0.5 / f64::sqrt(3.0);
            let b = 0.5 + 0.5 / f64::sqrt(3.0);
            Ok(vec![(vec![1.0 - a, a], 0.5), (vec![1.0 - b, b], 0.5)])
        }
        (ElementKind::Tri3, QuadRule::Centroid) | (ElementKind::Tri3, QuadRule::Gauss(1)) => {
            let third = 1.0 / 3.0;
            Ok(vec![(vec![third, third, third], 1.0)])
        }
        (ElementKind::Tri3, QuadRule::Gauss(3)) => {
            let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
            let w = 1.0 / 3.0;
            Ok(vec![
                (vec![a, b, b], w),
                (vec![b, a, b], w),
                (vec![b, b, a], w),
            ])
        }
        (kind, QuadRule::Gauss(n)) => Err(Error::Config(format!(
            "gauss-{n} is not available on {} elements",
            kind.name()
        ))),
    }
}

/// Build interior and boundary collocation from one quadrature rule.
/// Boundary facets use the matching edge rule (midpoint for `Centroid` or
/// `Gauss(1)`, two-point Gauss otherwise); 1D boundary facets are the end
/// nodes themselves with unit weight.
pub fn build_collocation(mesh: &Mesh, rule: QuadRule) -> Result<CollocationSet> {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut element_of = Vec::new();
    for (e, el) in mesh.elements.iter().enumerate() {
        let measure = mesh.measure(e);
        for (bary, frac) in interior_rule(el.kind, rule)? {
            let mut x = [0.0; 2];
            for (local, &n) in el.node_ids().iter().enumerate() {
                x[0] += bary[local] * mesh.nodes[n][0];
                x[1] += bary[local] * mesh.nodes[n][1];
            }
            points.push(x);
            weights.push(frac * measure);
            element_of.push(e);
        }
    }

    let edge_rule: Vec<(f64, f64)> = match rule {
        QuadRule::Centroid | QuadRule::Gauss(1) => vec![(0.5, 1.0)],
        _ => {
            let a = 0.5 - 0.5 / f64::sqrt(3.0);
            vec![(a, 0.5), (1.0 - a, 0.5)]
        }
    };
    let mut boundary = Vec::new();
    for (fi, facet) in mesh.facets.iter().enumerate() {
        let normal = mesh.facet_normal(facet);
        let tangent = mesh.facet_tangent(facet);
        let measure = mesh.facet_measure(facet);
        if mesh.dim == 1 {
            boundary.push(BoundaryPoint {
                x: mesh.nodes[facet.nodes[0]],
                weight: measure,
                facet: fi,
                normal,
                tangent,
            });
            continue;
        }
        let (a, b) = (mesh.nodes[facet.nodes[0]], mesh.nodes[facet.nodes[1]]);
        for &(s, frac) in &edge_rule {
            boundary.push(BoundaryPoint {
                x: [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])],
                weight: frac * measure,
                facet: fi,
                normal,
                tangent,
            });
        }
    }

    Ok(CollocationSet {
        points,
        weights,
        element_of,
        boundary,
    })
}
