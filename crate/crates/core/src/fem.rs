//! Displacement-based finite-element solver for plane elasticity on
//! triangle meshes: the classical reference that network solutions are
//! judged against. Handles edge tractions, prescribed displacements per
//! component, uniform temperature rise, and the strain-stiffening law via
//! Picard iteration.

use std::collections::BTreeMap;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linalg::{ReorderedCholesky, Triplets};
use crate::losses::{Law, Material};
use crate::mesh::{nodal_average, Mesh};

/// Gauss points of the two-point rule on [0, 1], exact for cubics.
const EDGE_GAUSS: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

const PICARD_TOL: f64 = 1e-8;
const PICARD_MAX: usize = 100;

/// Prescribed displacement on every node of the facets carrying `tag`.
/// Only the components with `true` in `components` are constrained, so
/// roller supports are expressed by masking one of them off.
pub struct Constraint {
    pub tag: String,
    pub components: [bool; 2],
    pub value: Box<dyn Fn([f64; 2]) -> [f64; 2]>,
}

impl Constraint {
    /// Fix both components to zero on `tag`.
    pub fn fixed(tag: &str) -> Constraint {
        Constraint {
            tag: tag.into(),
            components: [true, true],
            value: Box::new(|_| [0.0, 0.0]),
        }
    }

    /// Fix a single component to zero on `tag` (a roller support).
    pub fn roller(tag: &str, component: usize) -> Constraint {
        let mut components = [false, false];
        components[component] = true;
        Constraint {
            tag: tag.into(),
            components,
            value: Box::new(|_| [0.0, 0.0]),
        }
    }
}

/// Surface traction applied on the facets carrying `tag`.
pub struct Load {
    pub tag: String,
    pub traction: Box<dyn Fn([f64; 2]) -> [f64; 2]>,
}

pub struct FemCase {
    pub material: Material,
    /// Uniform temperature rise producing the eigenstrain α·ΔT·δ_ij.
    pub delta_t: f64,
    pub constraints: Vec<Constraint>,
    pub loads: Vec<Load>,
}

pub struct FemSolution {
    /// Nodal displacements, one row per node.
    pub u: Array2<f64>,
    /// Recovered nodal stress (σ11, σ22, σ12), volume-averaged from the
    /// per-element constant stresses.
    pub stress: Array2<f64>,
    /// Recovered nodal strain (ε11, ε22, ε12), same averaging.
    pub strain: Array2<f64>,
    /// Per-element constant stress (σ11, σ22, σ12).
    pub element_stress: Vec<[f64; 3]>,
    /// Σ_elements σ : (ε − εᵗ) · area — twice the stored elastic energy.
    pub internal: f64,
    /// Work of the applied tractions through the computed displacement.
    pub external: f64,
    /// Total potential ½·internal − external.
    pub energy: f64,
    /// Sum of support reactions over all constrained dofs, per component.
    pub reaction_sum: [f64; 2],
    /// Picard iterations taken (1 for a linear material).
    pub iterations: usize,
}

/// Per-element geometry reused across Picard iterations: area and the
/// constant shape-function gradients of the three vertices.
struct ElementData {
    area: f64,
    grads: [[f64; 2]; 3],
}

fn element_data(mesh: &Mesh) -> Vec<ElementData> {
    (0..mesh.elements.len())
        .map(|e| {
            let g = mesh.shape_gradients(e);
            ElementData {
                area: mesh.measure(e),
                grads: [g[0], g[1], g[2]],
            }
        })
        .collect()
}

/// Strain (ε11, ε22, ε12) of one element under nodal displacements `u`.
fn element_strain(mesh: &Mesh, data: &ElementData, e: usize, u: &[f64]) -> [f64; 3] {
    let el = &mesh.elements[e];
    let mut eps = [0.0; 3];
    for (a, &n) in el.node_ids().iter().enumerate() {
        let (ux, uy) = (u[2 * n], u[2 * n + 1]);
        let [gx, gy] = data.grads[a];
        eps[0] += gx * ux;
        eps[1] += gy * uy;
        eps[2] += 0.5 * (gy * ux + gx * uy);
    }
    eps
}

/// Solve the case on `mesh`. Nonlinear materials are handled by Picard
/// iteration on the per-element stiffness factor; the result carries the
/// converged displacement plus recovered stresses and energy bookkeeping.
pub fn solve(mesh: &Mesh, case: &FemCase) -> Result<FemSolution> {
    if mesh.dim != 2 {
        return Err(Error::Mesh("the elasticity solver needs a 2D mesh".into()));
    }
    case.material.validate()?;
    for c in &case.constraints {
        check_tag(mesh, &c.tag)?;
    }
    for l in &case.loads {
        check_tag(mesh, &l.tag)?;
    }

    let n_dof = 2 * mesh.n_nodes();
    let data = element_data(mesh);
    let prescribed = prescribed_dofs(mesh, &case.constraints);
    if prescribed.is_empty() {
        return Err(Error::Config(
            "no constrained dofs; the stiffness matrix would be singular".into(),
        ));
    }
    let f_load = load_vector(mesh, &case.loads, n_dof);

    let beta = match case.material.law {
        Law::Linear => 0.0,
        Law::Nonlinear { beta } => beta,
    };
    let mut factors = vec![1.0; mesh.elements.len()];
    let mut u = vec![0.0; n_dof];
    let mut iterations = 0;
    let mut stiffness = assemble(mesh, &data, &case.material, &factors);
    loop {
        iterations += 1;
        let f = full_rhs(mesh, &data, &case.material, &factors, case.delta_t, &f_load);
        let u_new = constrained_solve(&stiffness, &f, &prescribed, n_dof)?;
        let change = u
            .iter()
            .zip(&u_new)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let scale = u_new.iter().map(|v| v.abs()).fold(0.0, f64::max);
        u = u_new;
        if beta == 0.0 || change <= PICARD_TOL * scale.max(1e-30) {
            break;
        }
        if iterations >= PICARD_MAX {
            return Err(Error::Numerical(format!(
                "material iteration did not converge in {PICARD_MAX} steps \
                 (last change {change:.3e})"
            )));
        }
        for (e, f) in factors.iter_mut().enumerate() {
            let eps = element_strain(mesh, &data[e], e, &u);
            *f = 1.0 + beta * (eps[0] * eps[0] + eps[1] * eps[1]);
        }
        stiffness = assemble(mesh, &data, &case.material, &factors);
    }

    // Recover element stress and the energy terms from the converged state.
    let (d11, d12, dss) = case.material.stiffness_coeffs();
    let eps_t = case.material.alpha_t * case.delta_t;
    let mut element_stress = Vec::with_capacity(mesh.elements.len());
    let mut element_strain_out = Vec::with_capacity(mesh.elements.len());
    let mut internal = 0.0;
    for e in 0..mesh.elements.len() {
        let eps = element_strain(mesh, &data[e], e, &u);
        let el = [eps[0] - eps_t, eps[1] - eps_t, eps[2]];
        let f = factors[e];
        let s = [
            f * (d11 * el[0] + d12 * el[1]),
            f * (d12 * el[0] + d11 * el[1]),
            f * dss * el[2],
        ];
        internal += data[e].area * (s[0] * el[0] + s[1] * el[1] + 2.0 * s[2] * el[2]);
        element_stress.push(s);
        element_strain_out.push(eps);
    }
    let external = f_load.iter().zip(&u).map(|(f, u)| f * u).sum::<f64>();
    let energy = 0.5 * internal - external;

    let f_total = full_rhs(mesh, &data, &case.material, &factors, case.delta_t, &f_load);
    let mut ku = vec![0.0; n_dof];
    stiffness.matvec(&u, &mut ku);
    let mut reaction_sum = [0.0; 2];
    for (&dof, _) in &prescribed {
        reaction_sum[dof % 2] += ku[dof] - f_total[dof];
    }

    let stress_nodes = nodal_average(mesh, &element_stress);
    let strain_nodes = nodal_average(mesh, &element_strain_out);
    let n = mesh.n_nodes();
    Ok(FemSolution {
        u: Array2::from_shape_fn((n, 2), |(i, c)| u[2 * i + c]),
        stress: Array2::from_shape_fn((n, 3), |(i, c)| stress_nodes[i][c]),
        strain: Array2::from_shape_fn((n, 3), |(i, c)| strain_nodes[i][c]),
        element_stress,
        internal,
        external,
        energy,
        reaction_sum,
        iterations,
    })
}

fn check_tag(mesh: &Mesh, tag: &str) -> Result<()> {
    if mesh.facets.iter().any(|f| f.tag == tag) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "no boundary facet carries the tag '{tag}'"
        )))
    }
}

/// Dof → prescribed value, from all constraints (later entries win on
/// overlap, which only matters where facets of two tags share a node).
fn prescribed_dofs(mesh: &Mesh, constraints: &[Constraint]) -> BTreeMap<usize, f64> {
    let mut out = BTreeMap::new();
    for c in constraints {
        for facet in mesh.facets.iter().filter(|f| f.tag == c.tag) {
            for &n in &facet.nodes {
                let value = (c.value)(mesh.nodes[n]);
                for comp in 0..2 {
                    if c.components[comp] {
                        out.insert(2 * n + comp, value[comp]);
                    }
                }
            }
        }
    }
    out
}

/// Consistent nodal forces of the edge tractions (two-point Gauss).
fn load_vector(mesh: &Mesh, loads: &[Load], n_dof: usize) -> Vec<f64> {
    let mut f = vec![0.0; n_dof];
    for load in loads {
        for facet in mesh.facets.iter().filter(|fc| fc.tag == load.tag) {
            let (a, b) = (mesh.nodes[facet.nodes[0]], mesh.nodes[facet.nodes[1]]);
            let half = 0.5 * mesh.facet_measure(facet);
            for xi in EDGE_GAUSS {
                let x = [a[0] + (b[0] - a[0]) * xi, a[1] + (b[1] - a[1]) * xi];
                let t = (load.traction)(x);
                for comp in 0..2 {
                    f[2 * facet.nodes[0] + comp] += half * (1.0 - xi) * t[comp];
                    f[2 * facet.nodes[1] + comp] += half * xi * t[comp];
                }
            }
        }
    }
    f
}

/// Tractions plus the thermal eigenstrain loads for the current stiffness
/// factors.
fn full_rhs(
    mesh: &Mesh,
    data: &[ElementData],
    material: &Material,
    factors: &[f64],
    delta_t: f64,
    f_load: &[f64],
) -> Vec<f64> {
    let mut f = f_load.to_vec();
    let eps_t = material.alpha_t * delta_t;
    if eps_t != 0.0 {
        let (d11, d12, _) = material.stiffness_coeffs();
        for (e, el) in mesh.elements.iter().enumerate() {
            // Bᵀ·D·εᵗ with εᵗ = eps_t·(1,1,0): each vertex picks up
            // area·s·∇N, where s is the isotropic thermal stress.
            let s = factors[e] * eps_t * (d11 + d12) * data[e].area;
            for (a, &n) in el.node_ids().iter().enumerate() {
                f[2 * n] += s * data[e].grads[a][0];
                f[2 * n + 1] += s * data[e].grads[a][1];
            }
        }
    }
    f
}

/// Assemble the global stiffness for the given per-element factors.
fn assemble(
    mesh: &Mesh,
    data: &[ElementData],
    material: &Material,
    factors: &[f64],
) -> crate::linalg::Csr {
    let (d11, d12, dss) = material.stiffness_coeffs();
    let mu = 0.5 * dss;
    let mut trip = Triplets::new(2 * mesh.n_nodes());
    for (e, el) in mesh.elements.iter().enumerate() {
        let area = data[e].area * factors[e];
        let ids = el.node_ids();
        for (a, &na) in ids.iter().enumerate() {
            let [ax, ay] = data[e].grads[a];
            for (b, &nb) in ids.iter().enumerate() {
                let [bx, by] = data[e].grads[b];
                let k = [
                    [
                        d11 * ax * bx + mu * ay * by,
                        d12 * ax * by + mu * ay * bx,
                    ],
                    [
                        d12 * ay * bx + mu * ax * by,
                        d11 * ay * by + mu * ax * bx,
                    ],
                ];
                for i in 0..2 {
                    for j in 0..2 {
                        trip.push(2 * na + i, 2 * nb + j, area * k[i][j]);
                    }
                }
            }
        }
    }
    trip.to_csr()
}

/// Eliminate the prescribed dofs and solve the reduced symmetric system.
fn constrained_solve(
    stiffness: &crate::linalg::Csr,
    f: &[f64],
    prescribed: &BTreeMap<usize, f64>,
    n_dof: usize,
) -> Result<Vec<f64>> {
    let mut reduced_of = vec![usize::MAX; n_dof];
    let mut free = Vec::new();
    for dof in 0..n_dof {
        if !prescribed.contains_key(&dof) {
            reduced_of[dof] = free.len();
            free.push(dof);
        }
    }
    let mut rhs: Vec<f64> = free.iter().map(|&d| f[d]).collect();
    let mut trip = Triplets::new(free.len());
    for &dof in &free {
        let (cols, vals) = stiffness.row(dof);
        let row = reduced_of[dof];
        for (&col, &v) in cols.iter().zip(vals) {
            match prescribed.get(&col) {
                None => trip.push(row, reduced_of[col], v),
                Some(&g) => rhs[row] -= v * g,
            }
        }
    }
    let reduced = trip.to_csr();
    let chol = ReorderedCholesky::factor(&reduced).map_err(|e| {
        Error::Numerical(format!(
            "stiffness factorization failed (insufficient constraints?): {e}"
        ))
    })?;
    let uf = chol.solve(&rhs);

    let mut resid: Vec<f64> = rhs.clone();
    let mut tmp = vec![0.0; uf.len()];
    reduced.matvec(&uf, &mut tmp);
    for (r, t) in resid.iter_mut().zip(&tmp) {
        *r -= t;
    }
    let rn = resid.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let un = uf.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let fn_ = rhs.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if rn > 1e-8 * (reduced.inf_norm() * un + fn_).max(1e-30) {
        return Err(Error::Numerical(format!(
            "direct solve residual {rn:.3e} is too large"
        )));
    }

    let mut u = vec![0.0; n_dof];
    for (&dof, &g) in prescribed {
        u[dof] = g;
    }
    for (&dof, &v) in free.iter().zip(&uf) {
        u[dof] = v;
    }
    Ok(u)
}

/// Nodal solution table as CSV: `node,x,y,u1,u2,s11,s22,s12`.
pub fn solution_csv(mesh: &Mesh, sol: &FemSolution) -> String {
    let mut out = String::from("node,x,y,u1,u2,s11,s22,s12\n");
    for i in 0..mesh.n_nodes() {
        let [x, y] = mesh.nodes[i];
        out.push_str(&format!(
            "{i},{x:.17e},{y:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
            sol.u[(i, 0)],
            sol.u[(i, 1)],
            sol.stress[(i, 0)],
            sol.stress[(i, 1)],
            sol.stress[(i, 2)],
        ));
    }
    out
}

/// Read a table written by [`solution_csv`] back into displacement and
/// stress arrays (rows in node order).
pub fn read_solution_csv(text: &str) -> Result<(Array2<f64>, Array2<f64>)> {
    let mut rows: Vec<[f64; 5]> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if ln == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::parse(ln + 1, "expected 8 comma-separated fields"));
        }
        let node: usize = fields[0]
            .parse()
            .map_err(|_| Error::parse(ln + 1, "bad node index"))?;
        if node != rows.len() {
            return Err(Error::parse(ln + 1, "rows must be in node order"));
        }
        let mut vals = [0.0; 5];
        for (k, f) in fields[3..].iter().enumerate() {
            vals[k] = f
                .parse()
                .map_err(|_| Error::parse(ln + 1, format!("bad number '{f}'")))?;
        }
        rows.push(vals);
    }
    let n = rows.len();
    let u = Array2::from_shape_fn((n, 2), |(i, c)| rows[i][c]);
    let stress = Array2::from_shape_fn((n, 3), |(i, c)| rows[i][2 + c]);
    Ok((u, stress))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{Element, ElementKind};
    use approx::assert_relative_eq;

    /// Structured unit-square triangulation with the four sides tagged
    /// `left`, `right`, `bottom`, `top`.
    fn unit_square(n: usize) -> Mesh {
        let h = 1.0 / n as f64;
        let id = |r: usize, c: usize| r * (n + 1) + c;
        let mut nodes = Vec::new();
        for r in 0..=n {
            for c in 0..=n {
                nodes.push([c as f64 * h, r as f64 * h]);
            }
        }
        let mut elements = Vec::new();
        for r in 0..n {
            for c in 0..n {
                let (a, b) = (id(r, c), id(r, c + 1));
                let (d, e) = (id(r + 1, c), id(r + 1, c + 1));
                elements.push(Element {
                    kind: ElementKind::Tri3,
                    nodes: [a, b, e],
                });
                elements.push(Element {
                    kind: ElementKind::Tri3,
                    nodes: [a, e, d],
                });
            }
        }
        let mut mesh = Mesh::build(2, nodes, elements, Vec::new()).unwrap();
        mesh.tag_facets_where("left", |p| p[0] < 1e-12);
        mesh.tag_facets_where("right", |p| p[0] > 1.0 - 1e-12);
        mesh.tag_facets_where("bottom", |p| p[1] < 1e-12);
        mesh.tag_facets_where("top", |p| p[1] > 1.0 - 1e-12);
        mesh
    }

    fn stretch_case(traction: f64) -> FemCase {
        FemCase {
            material: Material::new(1.0, 0.0),
            delta_t: 0.0,
            constraints: vec![Constraint::roller("left", 0), Constraint::roller("bottom", 1)],
            loads: vec![Load {
                tag: "right".into(),
                traction: Box::new(move |_| [traction, 0.0]),
            }],
        }
    }

    #[test]
    fn uniform_stretch_is_reproduced_exactly() {
        let mesh = unit_square(4);
        let sol = solve(&mesh, &stretch_case(1.0)).unwrap();
        for i in 0..mesh.n_nodes() {
            assert_relative_eq!(sol.u[(i, 0)], mesh.nodes[i][0], epsilon = 1e-12);
            assert_relative_eq!(sol.u[(i, 1)], 0.0, epsilon = 1e-12);
            assert_relative_eq!(sol.stress[(i, 0)], 1.0, epsilon = 1e-12);
            assert_relative_eq!(sol.stress[(i, 1)], 0.0, epsilon = 1e-12);
        }
        assert_relative_eq!(sol.internal, 1.0, epsilon = 1e-12);
        assert_relative_eq!(sol.external, 1.0, epsilon = 1e-12);
        assert_relative_eq!(sol.energy, -0.5, epsilon = 1e-12);
        assert_eq!(sol.iterations, 1);
    }

    #[test]
    fn linear_fields_pass_the_patch_test() {
        let exact = |p: [f64; 2]| {
            [
                0.03 + 0.01 * p[0] + 0.02 * p[1],
                -0.01 + 0.015 * p[0] - 0.005 * p[1],
            ]
        };
        let mesh = unit_square(5);
        let case = FemCase {
            material: Material::new(2.3, 0.3),
            delta_t: 0.0,
            constraints: ["left", "right", "bottom", "top"]
                .iter()
                .map(|tag| Constraint {
                    tag: (*tag).into(),
                    components: [true, true],
                    value: Box::new(exact),
                })
                .collect(),
            loads: vec![],
        };
        let sol = solve(&mesh, &case).unwrap();
        let (d11, d12, dss) = case.material.stiffness_coeffs();
        let (e11, e22, e12) = (0.01, -0.005, 0.5 * (0.02 + 0.015));
        let want = [
            d11 * e11 + d12 * e22,
            d12 * e11 + d11 * e22,
            dss * e12,
        ];
        for i in 0..mesh.n_nodes() {
            let u = exact(mesh.nodes[i]);
            assert_relative_eq!(sol.u[(i, 0)], u[0], epsilon = 1e-10);
            assert_relative_eq!(sol.u[(i, 1)], u[1], epsilon = 1e-10);
            for c in 0..3 {
                assert_relative_eq!(sol.stress[(i, c)], want[c], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn refinement_converges_at_second_order() {
        // u = ∇(eˣ cos y) solves the homogeneous Navier equations for any
        // moduli: both components are harmonic and the field is
        // divergence-free, so Dirichlet data alone defines the problem.
        let exact = |p: [f64; 2]| {
            [
                p[0].exp() * p[1].cos(),
                -p[0].exp() * p[1].sin(),
            ]
        };
        let error_at = |n: usize| {
            let mesh = unit_square(n);
            let case = FemCase {
                material: Material::new(1.7, 0.28),
                delta_t: 0.0,
                constraints: ["left", "right", "bottom", "top"]
                    .iter()
                    .map(|tag| Constraint {
                        tag: (*tag).into(),
                        components: [true, true],
                        value: Box::new(exact),
                    })
                    .collect(),
                loads: vec![],
            };
            let sol = solve(&mesh, &case).unwrap();
            let want = Array2::from_shape_fn((mesh.n_nodes(), 2), |(i, c)| exact(mesh.nodes[i])[c]);
            crate::trainer::nodal_l2_rel(&mesh, &sol.u, &want)
        };
        let (e1, e2) = (error_at(8), error_at(16));
        let rate = (e1 / e2).log2();
        assert!(
            (1.7..=2.3).contains(&rate),
            "convergence rate {rate:.2} (errors {e1:.3e}, {e2:.3e})"
        );
    }

    #[test]
    fn free_thermal_expansion_is_stress_free() {
        let mesh = unit_square(4);
        let mut material = Material::new(2.0, 0.25);
        material.alpha_t = 0.5;
        let case = FemCase {
            material,
            delta_t: 0.2,
            constraints: vec![Constraint::roller("left", 0), Constraint::roller("bottom", 1)],
            loads: vec![],
        };
        let sol = solve(&mesh, &case).unwrap();
        let a = 0.5 * 0.2;
        for i in 0..mesh.n_nodes() {
            assert_relative_eq!(sol.u[(i, 0)], a * mesh.nodes[i][0], epsilon = 1e-11);
            assert_relative_eq!(sol.u[(i, 1)], a * mesh.nodes[i][1], epsilon = 1e-11);
            for c in 0..3 {
                assert_relative_eq!(sol.stress[(i, c)], 0.0, epsilon = 1e-10);
            }
        }
        assert_relative_eq!(sol.energy, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn stiffening_material_reaches_the_closed_form_stretch() {
        // Uniform uniaxial state with E(ε) = E₀(1 + βε₁₁²): the strain obeys
        // (1 + βe²)·e = t. Solve that scalar equation to high precision and
        // compare the Picard-converged field against it.
        let (beta, t) = (2.0, 0.8);
        let mut e = 0.5;
        for _ in 0..60 {
            let f = (1.0 + beta * e * e) * e - t;
            let df = 1.0 + 3.0 * beta * e * e;
            e -= f / df;
        }
        let mesh = unit_square(3);
        let mut case = stretch_case(t);
        case.material.law = Law::Nonlinear { beta };
        let sol = solve(&mesh, &case).unwrap();
        assert!(sol.iterations > 1);
        for i in 0..mesh.n_nodes() {
            assert_relative_eq!(sol.u[(i, 0)], e * mesh.nodes[i][0], epsilon = 1e-7);
            assert_relative_eq!(sol.stress[(i, 0)], t, epsilon = 1e-7);
        }
    }

    #[test]
    fn reactions_balance_the_applied_loads() {
        let mesh = unit_square(6);
        let case = FemCase {
            material: Material::new(1.0, 0.3),
            delta_t: 0.0,
            constraints: vec![Constraint::fixed("bottom")],
            loads: vec![Load {
                tag: "top".into(),
                traction: Box::new(|_| [0.3, -0.2]),
            }],
        };
        let sol = solve(&mesh, &case).unwrap();
        // The top edge has unit length, so the resultant is the traction.
        assert_relative_eq!(sol.reaction_sum[0], -0.3, epsilon = 1e-10);
        assert_relative_eq!(sol.reaction_sum[1], 0.2, epsilon = 1e-10);
    }

    #[test]
    fn solution_tables_round_trip() {
        let mesh = unit_square(2);
        let sol = solve(&mesh, &stretch_case(0.7)).unwrap();
        let text = solution_csv(&mesh, &sol);
        let (u, stress) = read_solution_csv(&text).unwrap();
        assert_eq!(u, sol.u);
        assert_eq!(stress, sol.stress);
        assert!(read_solution_csv("node,x\n0,1").is_err());
    }

    #[test]
    fn bad_tags_and_missing_constraints_are_rejected() {
        let mesh = unit_square(2);
        let mut case = stretch_case(1.0);
        case.constraints[0].tag = "lift".into();
        assert!(matches!(solve(&mesh, &case), Err(Error::Config(_))));
        let unconstrained = FemCase {
            material: Material::new(1.0, 0.0),
            delta_t: 0.0,
            constraints: vec![],
            loads: vec![],
        };
        assert!(solve(&mesh, &unconstrained).is_err());
    }
}
