//! Simplicial meshes (1D segments, 2D linear triangles), boundary topology
//! and the nodal averaging used for derivative recovery.
//!
//! Meshes are inputs: they arrive either in the native text format or as
//! Gmsh MSH 2.2 ASCII (see [`io`]). On construction every mesh is validated —
//! indices in range, strictly positive element measures, a manifold boundary —
//! and negatively oriented triangles are re-wound. Boundary facets (edges in
//! 2D, end nodes in 1D) are detected automatically as the faces that belong
//! to exactly one element.

pub mod collocation;
pub mod io;

pub use collocation::{build_collocation, BoundaryPoint, CollocationSet, QuadRule};
pub use io::{load_mesh, parse_mesh, write_mesh};

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    Line2,
    Tri3,
}

impl ElementKind {
    pub fn n_nodes(self) -> usize {
        match self {
            ElementKind::Line2 => 2,
            ElementKind::Tri3 => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ElementKind::Line2 => "line2",
            ElementKind::Tri3 => "tri3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Element {
    pub kind: ElementKind,
    /// Connectivity; `line2` uses the first two slots.
    pub nodes: [usize; 3],
}

impl Element {
    pub fn node_ids(&self) -> &[usize] {
        &self.nodes[..self.kind.n_nodes()]
    }
}

/// A boundary facet: an edge in 2D, a single end node in 1D (both entries of
/// `nodes` then name the same node). `element` is the unique owning element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Facet {
    pub nodes: [usize; 2],
    pub element: usize,
    pub tag: String,
}

/// Tag given to detected boundary facets that no file section or predicate
/// has claimed.
pub const UNTAGGED: &str = "untagged";

#[derive(Debug, Clone)]
pub struct Mesh {
    pub dim: usize,
    /// Node coordinates; the second component is 0 for 1D meshes.
    pub nodes: Vec<[f64; 2]>,
    pub elements: Vec<Element>,
    /// Boundary facets detected at construction, in deterministic order.
    pub facets: Vec<Facet>,
    /// Number of triangles whose stored winding was negative and got flipped.
    pub rewound: usize,
}

impl Mesh {
    /// Validate connectivity, fix orientation, and detect the boundary.
    /// `tagged`: facet connectivity → tag, from a file section; every entry
    /// must be an actual boundary facet.
    pub fn build(
        dim: usize,
        nodes: Vec<[f64; 2]>,
        mut elements: Vec<Element>,
        tagged: Vec<(Vec<usize>, String)>,
    ) -> Result<Mesh> {
        if dim != 1 && dim != 2 {
            return Err(Error::Mesh(format!("unsupported dimension {dim}")));
        }
        if nodes.is_empty() || elements.is_empty() {
            return Err(Error::Mesh("mesh has no nodes or no elements".into()));
        }
        let mut rewound = 0;
        for (i, el) in elements.iter_mut().enumerate() {
            match (dim, el.kind) {
                (1, ElementKind::Line2) | (2, ElementKind::Tri3) => {}
                _ => {
                    return Err(Error::Mesh(format!(
                        "element {i} has kind {} in a {dim}D mesh",
                        el.kind.name()
                    )))
                }
            }
            for &n in el.node_ids() {
                if n >= nodes.len() {
                    return Err(Error::Mesh(format!(
                        "element {i} references node {n} but the mesh has {} nodes",
                        nodes.len()
                    )));
                }
            }
            let mut seen = el.node_ids().to_vec();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != el.kind.n_nodes() {
                return Err(Error::Mesh(format!("element {i} repeats a node")));
            }
            if el.kind == ElementKind::Tri3 {
                let a = signed_area(&nodes, el.nodes);
                if a < 0.0 {
                    el.nodes.swap(1, 2);
                    rewound += 1;
                }
            }
        }
        let mut mesh = Mesh {
            dim,
            nodes,
            elements,
            facets: Vec::new(),
            rewound,
        };
        for (i, el) in mesh.elements.iter().enumerate() {
            if mesh.measure(i) <= 0.0 {
                return Err(Error::Mesh(format!(
                    "element {i} ({:?}) has zero measure",
                    el.node_ids()
                )));
            }
        }
        mesh.detect_boundary()?;
        mesh.apply_tags(tagged)?;
        Ok(mesh)
    }

    fn detect_boundary(&mut self) -> Result<()> {
        // Face key → (owner element, ordered face nodes, count of sharers).
        let mut faces: BTreeMap<[usize; 2], (usize, [usize; 2], usize)> = BTreeMap::new();
        for (ei, el) in self.elements.iter().enumerate() {
            let fs: Vec<[usize; 2]> = match el.kind {
                ElementKind::Line2 => vec![
                    [el.nodes[0], el.nodes[0]],
                    [el.nodes[1], el.nodes[1]],
                ],
                ElementKind::Tri3 => {
                    let [a, b, c] = [el.nodes[0], el.nodes[1], el.nodes[2]];
                    vec![[a, b], [b, c], [c, a]]
                }
            };
            for f in fs {
                let key = if f[0] <= f[1] { f } else { [f[1], f[0]] };
                let entry = faces.entry(key).or_insert((ei, f, 0));
                entry.2 += 1;
                if entry.2 > 2 {
                    return Err(Error::Mesh(format!(
                        "non-manifold boundary: face {:?} is shared by more than two elements",
                        key
                    )));
                }
            }
        }
        self.facets = faces
            .into_values()
            .filter(|&(_, _, count)| count == 1)
            .map(|(element, nodes, _)| Facet {
                nodes,
                element,
                tag: UNTAGGED.to_string(),
            })
            .collect();
        Ok(())
    }

    fn apply_tags(&mut self, tagged: Vec<(Vec<usize>, String)>) -> Result<()> {
        for (conn, tag) in tagged {
            let key: [usize; 2] = match conn.len() {
                1 => [conn[0], conn[0]],
                2 => {
                    if conn[0] <= conn[1] {
                        [conn[0], conn[1]]
                    } else {
                        [conn[1], conn[0]]
                    }
                }
                n => {
                    return Err(Error::Mesh(format!(
                        "facet with {n} nodes; expected 1 (1D) or 2 (2D)"
                    )))
                }
            };
            let facet = self
                .facets
                .iter_mut()
                .find(|f| {
                    let fk = if f.nodes[0] <= f.nodes[1] {
                        f.nodes
                    } else {
                        [f.nodes[1], f.nodes[0]]
                    };
                    fk == key
                })
                .ok_or_else(|| {
                    Error::Mesh(format!(
                        "tagged facet {conn:?} is not a boundary facet of the mesh"
                    ))
                })?;
            facet.tag = tag;
        }
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Area of a triangle or length of a segment.
    pub fn measure(&self, element: usize) -> f64 {
        let el = &self.elements[element];
        match el.kind {
            ElementKind::Line2 => {
                let (a, b) = (self.nodes[el.nodes[0]], self.nodes[el.nodes[1]]);
                ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
            }
            ElementKind::Tri3 => signed_area(&self.nodes, el.nodes),
        }
    }

    pub fn total_measure(&self) -> f64 {
        (0..self.elements.len()).map(|e| self.measure(e)).sum()
    }

    pub fn centroid(&self, element: usize) -> [f64; 2] {
        let el = &self.elements[element];
        let ids = el.node_ids();
        let mut c = [0.0; 2];
        for &n in ids {
            c[0] += self.nodes[n][0];
            c[1] += self.nodes[n][1];
        }
        let k = ids.len() as f64;
        [c[0] / k, c[1] / k]
    }

    /// Constant gradients of the linear shape functions on an element, one
    /// row per local node. For `line2` only the first component is used.
    pub fn shape_gradients(&self, element: usize) -> Vec<[f64; 2]> {
        let el = &self.elements[element];
        match el.kind {
            ElementKind::Line2 => {
                let (a, b) = (self.nodes[el.nodes[0]], self.nodes[el.nodes[1]]);
                let h = b[0] - a[0];
                vec![[-1.0 / h, 0.0], [1.0 / h, 0.0]]
            }
            ElementKind::Tri3 => {
                let [i, j, k] = el.nodes;
                let (p, q, r) = (self.nodes[i], self.nodes[j], self.nodes[k]);
                let a2 = 2.0 * signed_area(&self.nodes, el.nodes);
                vec![
                    [(q[1] - r[1]) / a2, (r[0] - q[0]) / a2],
                    [(r[1] - p[1]) / a2, (p[0] - r[0]) / a2],
                    [(p[1] - q[1]) / a2, (q[0] - p[0]) / a2],
                ]
            }
        }
    }

    /// Linear shape function values at a point inside an element
    /// (barycentric coordinates for a triangle, the interval fraction for a
    /// line). Points on the element boundary are fine; points outside give
    /// extrapolated weights.
    pub fn shape_values(&self, element: usize, x: [f64; 2]) -> Vec<f64> {
        let el = &self.elements[element];
        match el.kind {
            ElementKind::Line2 => {
                let (a, b) = (self.nodes[el.nodes[0]], self.nodes[el.nodes[1]]);
                let t = (x[0] - a[0]) / (b[0] - a[0]);
                vec![1.0 - t, t]
            }
            ElementKind::Tri3 => {
                let [i, j, k] = el.nodes;
                let (p, q, r) = (self.nodes[i], self.nodes[j], self.nodes[k]);
                let det = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| {
                    (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
                };
                let total = det(p, q, r);
                vec![
                    det(x, q, r) / total,
                    det(p, x, r) / total,
                    det(p, q, x) / total,
                ]
            }
        }
    }

    /// For every node, one element that contains it (the first by element
    /// order). Errors if a node belongs to no element.
    pub fn node_elements(&self) -> Result<Vec<usize>> {
        let mut owner = vec![usize::MAX; self.nodes.len()];
        for (e, el) in self.elements.iter().enumerate() {
            for &n in el.node_ids() {
                if owner[n] == usize::MAX {
                    owner[n] = e;
                }
            }
        }
        if let Some(orphan) = owner.iter().position(|&e| e == usize::MAX) {
            return Err(Error::Mesh(format!(
                "node {orphan} is not part of any element"
            )));
        }
        Ok(owner)
    }

    /// Element containing a point, by shape-function sign (a small negative
    /// tolerance admits points on element boundaries). Returns the best
    /// candidate even for points slightly outside the domain, or `None`
    /// when every element is a bad fit.
    pub fn locate(&self, x: [f64; 2]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for e in 0..self.elements.len() {
            let worst = self
                .shape_values(e, x)
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            if worst >= -1e-12 {
                return Some(e);
            }
            if best.map_or(true, |(_, w)| worst > w) {
                best = Some((e, worst));
            }
        }
        best.filter(|&(_, w)| w > -1e-6).map(|(e, _)| e)
    }

    /// Measure of a boundary facet (edge length in 2D; 1 for a 1D end node,
    /// i.e. counting measure).
    pub fn facet_measure(&self, facet: &Facet) -> f64 {
        if self.dim == 1 {
            1.0
        } else {
            let (a, b) = (self.nodes[facet.nodes[0]], self.nodes[facet.nodes[1]]);
            ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
        }
    }

    /// Outward unit normal of a boundary facet, determined geometrically:
    /// perpendicular to the facet, pointing away from the owning element's
    /// centroid.
    pub fn facet_normal(&self, facet: &Facet) -> [f64; 2] {
        let c = self.centroid(facet.element);
        if self.dim == 1 {
            let x = self.nodes[facet.nodes[0]][0];
            return [if x > c[0] { 1.0 } else { -1.0 }, 0.0];
        }
        let (a, b) = (self.nodes[facet.nodes[0]], self.nodes[facet.nodes[1]]);
        let t = [b[0] - a[0], b[1] - a[1]];
        let len = (t[0] * t[0] + t[1] * t[1]).sqrt();
        let mut n = [t[1] / len, -t[0] / len];
        let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        if n[0] * (mid[0] - c[0]) + n[1] * (mid[1] - c[1]) < 0.0 {
            n = [-n[0], -n[1]];
        }
        n
    }

    /// Unit tangent of a boundary facet (zero vector in 1D).
    pub fn facet_tangent(&self, facet: &Facet) -> [f64; 2] {
        if self.dim == 1 {
            return [0.0, 0.0];
        }
        let (a, b) = (self.nodes[facet.nodes[0]], self.nodes[facet.nodes[1]]);
        let t = [b[0] - a[0], b[1] - a[1]];
        let len = (t[0] * t[0] + t[1] * t[1]).sqrt();
        [t[0] / len, t[1] / len]
    }

    /// Total measure of all facets carrying `tag`.
    pub fn boundary_measure(&self, tag: &str) -> f64 {
        self.facets
            .iter()
            .filter(|f| f.tag == tag)
            .map(|f| self.facet_measure(f))
            .sum()
    }

    /// Re-tag facets whose nodes all satisfy `predicate` (applied to node
    /// coordinates). Returns how many facets matched.
    pub fn tag_facets_where(
        &mut self,
        tag: &str,
        mut predicate: impl FnMut([f64; 2]) -> bool,
    ) -> usize {
        let nodes = &self.nodes;
        let mut hit = 0;
        for f in &mut self.facets {
            let verts: &[usize] = if self.dim == 1 {
                &f.nodes[..1]
            } else {
                &f.nodes[..]
            };
            if verts.iter().all(|&v| predicate(nodes[v])) {
                f.tag = tag.to_string();
                hit += 1;
            }
        }
        hit
    }

    /// Give every still-untagged facet the given tag.
    pub fn tag_remaining(&mut self, tag: &str) {
        for f in &mut self.facets {
            if f.tag == UNTAGGED {
                f.tag = tag.to_string();
            }
        }
    }

    pub fn tags(&self) -> Vec<String> {
        let mut tags: Vec<String> = self.facets.iter().map(|f| f.tag.clone()).collect();
        tags.sort();
        tags.dedup();
        tags
    }

    /// Nodes lying on facets with the given tag, sorted and deduplicated.
    pub fn tagged_nodes(&self, tag: &str) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .facets
            .iter()
            .filter(|f| f.tag == tag)
            .flat_map(|f| {
                if self.dim == 1 {
                    f.nodes[..1].to_vec()
                } else {
                    f.nodes.to_vec()
                }
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Lumped nodal measure: each element contributes an equal share of its
    /// measure to its nodes. Sums to the total measure.
    pub fn node_measure(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n_nodes()];
        for (e, el) in self.elements.iter().enumerate() {
            let share = self.measure(e) / el.kind.n_nodes() as f64;
            for &n in el.node_ids() {
                m[n] += share;
            }
        }
        m
    }

    /// FNV-1a hash of the canonical serialization; pairs basis artifacts
    /// with the mesh they were computed on.
    pub fn content_hash(&self) -> u64 {
        let text = io::save_native(self);
        let mut h: u64 = 0xcbf29ce484222325;
        for b in text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }
}

fn signed_area(nodes: &[[f64; 2]], [i, j, k]: [usize; 3]) -> f64 {
    let (p, q, r) = (nodes[i], nodes[j], nodes[k]);
    0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
}

/// Role a tagged part of the boundary plays in a problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Dirichlet,
    Neumann,
    Free,
}

/// Facet indices grouped by boundary role.
#[derive(Debug, Clone, Default)]
pub struct BoundarySets {
    pub dirichlet: Vec<usize>,
    pub neumann: Vec<usize>,
    pub free: Vec<usize>,
}

impl BoundarySets {
    pub fn of(&self, role: Role) -> &[usize] {
        match role {
            Role::Dirichlet => &self.dirichlet,
            Role::Neumann => &self.neumann,
            Role::Free => &self.free,
        }
    }
}

/// Split the boundary facets by role. Every tag present in the mesh must be
/// mapped and every mapped tag must exist in the mesh.
pub fn classify_boundary(mesh: &Mesh, roles: &BTreeMap<String, Role>) -> Result<BoundarySets> {
    let present = mesh.tags();
    for tag in &present {
        if !roles.contains_key(tag) {
            return Err(Error::Mesh(format!(
                "boundary tag `{tag}` has no assigned role"
            )));
        }
    }
    for tag in roles.keys() {
        if !present.contains(tag) {
            return Err(Error::Mesh(format!(
                "role assigned to tag `{tag}` but the mesh has no such facet"
            )));
        }
    }
    let mut sets = BoundarySets::default();
    for (i, f) in mesh.facets.iter().enumerate() {
        match roles[&f.tag] {
            Role::Dirichlet => sets.dirichlet.push(i),
            Role::Neumann => sets.neumann.push(i),
            Role::Free => sets.free.push(i),
        }
    }
    Ok(sets)
}

/// Constant gradient of a linearly interpolated nodal field on each element.
pub fn element_gradients(mesh: &Mesh, nodal: &[f64]) -> Vec<[f64; 2]> {
    assert_eq!(nodal.len(), mesh.n_nodes(), "field length != node count");
    let mut out = Vec::with_capacity(mesh.elements.len());
    for (e, el) in mesh.elements.iter().enumerate() {
        let grads = mesh.shape_gradients(e);
        let mut g = [0.0; 2];
        for (local, &n) in el.node_ids().iter().enumerate() {
            g[0] += grads[local][0] * nodal[n];
            g[1] += grads[local][1] * nodal[n];
        }
        out.push(g);
    }
    out
}

/// Measure-weighted average of per-element values onto nodes. This is the
/// recovery step that turns piecewise-constant element data (gradients,
/// stresses) into a continuous nodal field.
pub fn nodal_average<const K: usize>(mesh: &Mesh, per_element: &[[f64; K]]) -> Vec<[f64; K]> {
    assert_eq!(per_element.len(), mesh.elements.len());
    let mut acc = vec![[0.0; K]; mesh.n_nodes()];
    let mut wsum = vec![0.0; mesh.n_nodes()];
    for (e, el) in mesh.elements.iter().enumerate() {
        let w = mesh.measure(e);
        for &n in el.node_ids() {
            for k in 0..K {
                acc[n][k] += w * per_element[e][k];
            }
            wsum[n] += w;
        }
    }
    for (a, &w) in acc.iter_mut().zip(&wsum) {
        for v in a.iter_mut() {
            *v /= w;
        }
    }
    acc
}

/// Nodal gradient of a nodal field: element gradients followed by
/// measure-weighted averaging.
pub fn recover_gradient(mesh: &Mesh, nodal: &[f64]) -> Vec<[f64; 2]> {
    nodal_average(mesh, &element_gradients(mesh, nodal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn two_tri_square() -> Mesh {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let elements = vec![
            Element {
                kind: ElementKind::Tri3,
                nodes: [0, 1, 2],
            },
            Element {
                kind: ElementKind::Tri3,
                nodes: [0, 2, 3],
            },
        ];
        Mesh::build(2, nodes, elements, Vec::new()).unwrap()
    }

    pub(crate) fn segment(n: usize) -> Mesh {
        let nodes = (0..=n).map(|i| [i as f64 / n as f64, 0.0]).collect();
        let elements = (0..n)
            .map(|i| Element {
                kind: ElementKind::Line2,
                nodes: [i, i + 1, 0],
            })
            .collect();
        Mesh::build(1, nodes, elements, Vec::new()).unwrap()
    }

    #[test]
    fn square_measures_and_boundary() {
        let m = two_tri_square();
        assert_relative_eq!(m.total_measure(), 1.0);
        assert_eq!(m.facets.len(), 4);
        let total_boundary: f64 = m.facets.iter().map(|f| m.facet_measure(f)).sum();
        assert_relative_eq!(total_boundary, 4.0);
        assert_eq!(m.rewound, 0);
    }

    #[test]
    fn negative_winding_is_fixed() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let elements = vec![Element {
            kind: ElementKind::Tri3,
            nodes: [0, 2, 1], // clockwise
        }];
        let m = Mesh::build(2, nodes, elements, Vec::new()).unwrap();
        assert_eq!(m.rewound, 1);
        assert!(m.measure(0) > 0.0);
    }

    #[test]
    fn normals_point_outward() {
        let m = two_tri_square();
        for f in &m.facets {
            let n = m.facet_normal(f);
            let (a, b) = (m.nodes[f.nodes[0]], m.nodes[f.nodes[1]]);
            let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
            // Outward from the unit square's center.
            let d = [mid[0] - 0.5, mid[1] - 0.5];
            assert!(n[0] * d[0] + n[1] * d[1] > 0.0);
            assert_relative_eq!(n[0] * n[0] + n[1] * n[1], 1.0, epsilon = 1e-14);
            let t = m.facet_tangent(f);
            assert_relative_eq!(n[0] * t[0] + n[1] * t[1], 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn dangling_node_is_rejected() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let elements = vec![Element {
            kind: ElementKind::Tri3,
            nodes: [0, 1, 7],
        }];
        let err = Mesh::build(2, nodes, elements, Vec::new()).unwrap_err();
        assert!(err.to_string().contains("node 7"));
    }

    #[test]
    fn non_manifold_is_rejected() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, -1.0]];
        let elements = vec![
            Element {
                kind: ElementKind::Tri3,
                nodes: [0, 1, 2],
            },
            Element {
                kind: ElementKind::Tri3,
                nodes: [0, 1, 3],
            },
            Element {
                kind: ElementKind::Tri3,
                nodes: [0, 1, 4],
            },
        ];
        let err = Mesh::build(2, nodes, elements, Vec::new()).unwrap_err();
        assert!(err.to_string().contains("non-manifold"));
    }

    #[test]
    fn zero_measure_is_rejected() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        let elements = vec![Element {
            kind: ElementKind::Tri3,
            nodes: [0, 1, 2], // collinear
        }];
        assert!(Mesh::build(2, nodes, elements, Vec::new()).is_err());
    }

    #[test]
    fn segment_boundary_is_two_end_nodes() {
        let m = segment(4);
        assert_eq!(m.facets.len(), 2);
        let xs: Vec<f64> = m.facets.iter().map(|f| m.nodes[f.nodes[0]][0]).collect();
        assert!(xs.contains(&0.0) && xs.contains(&1.0));
        let left = m.facets.iter().find(|f| m.nodes[f.nodes[0]][0] == 0.0).unwrap();
        assert_eq!(m.facet_normal(left), [-1.0, 0.0]);
        assert_relative_eq!(m.total_measure(), 1.0);
    }

    #[test]
    fn predicate_tagging_and_classification() {
        let mut m = two_tri_square();
        assert_eq!(m.tag_facets_where("bottom", |x| x[1].abs() < 1e-9), 1);
        assert_eq!(m.tag_facets_where("top", |x| (x[1] - 1.0).abs() < 1e-9), 1);
        m.tag_remaining("side");
        let mut roles = BTreeMap::new();
        roles.insert("bottom".to_string(), Role::Dirichlet);
        roles.insert("top".to_string(), Role::Neumann);
        roles.insert("side".to_string(), Role::Free);
        let sets = classify_boundary(&m, &roles).unwrap();
        assert_eq!(sets.dirichlet.len(), 1);
        assert_eq!(sets.neumann.len(), 1);
        assert_eq!(sets.free.len(), 2);

        // An unmapped tag must be an error.
        m.tag_remaining("side");
        m.facets[0].tag = "mystery".into();
        assert!(classify_boundary(&m, &roles).is_err());
    }

    #[test]
    fn lumped_node_measure_sums_to_area() {
        let m = two_tri_square();
        let nm = m.node_measure();
        assert_relative_eq!(nm.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        // Nodes 0 and 2 touch both triangles, 1 and 3 only one.
        assert_relative_eq!(nm[0], 1.0 / 3.0);
        assert_relative_eq!(nm[1], 1.0 / 6.0);
    }

    #[test]
    fn gradient_recovery_is_exact_for_linear_fields() {
        let m = two_tri_square();
        let field: Vec<f64> = m.nodes.iter().map(|x| 2.0 * x[0] - 3.0 * x[1]).collect();
        for g in element_gradients(&m, &field) {
            assert_relative_eq!(g[0], 2.0, epsilon = 1e-12);
            assert_relative_eq!(g[1], -3.0, epsilon = 1e-12);
        }
        for g in recover_gradient(&m, &field) {
            assert_relative_eq!(g[0], 2.0, epsilon = 1e-12);
            assert_relative_eq!(g[1], -3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn gradient_recovery_1d() {
        let m = segment(5);
        let field: Vec<f64> = m.nodes.iter().map(|x| 4.0 * x[0] + 1.0).collect();
        for g in recover_gradient(&m, &field) {
            assert_relative_eq!(g[0], 4.0, epsilon = 1e-12);
        }
    }
}
