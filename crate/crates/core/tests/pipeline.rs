//! End-to-end checks of the variational pipeline: mesh → spectral basis →
//! collocation stamps → hard boundary enforcement → energy loss → Adam,
//! judged against the finite-element solution of the same problem.

use finpinn_core::autodiff::graph::Graph;
use finpinn_core::autodiff::net::Activation;
use finpinn_core::encoder::{homogeneous_basis, stamp_collocation, stamp_points, MassKind};
use finpinn_core::fem::{self, Constraint, FemCase, Load};
use finpinn_core::losses::{weak_form_loss, BoundaryLoad, WeakFormData};
use finpinn_core::mesh::{Element, ElementKind};
use finpinn_core::model::{displacement, predict_on_mesh, stage_model};
use finpinn_core::{
    build_collocation, build_model, nodal_l2_rel, train, HardBc, Material, Mesh, ModelSpec,
    QuadRule, StopReason, TrainConfig, TrainState,
};
use ndarray::Array2;

/// Structured unit square: (n+1)² nodes, 2n² triangles, sides tagged.
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
    mesh.tag_facets_where("bottom", |p| p[1] < 1e-12);
    mesh.tag_facets_where("top", |p| p[1] > 1.0 - 1e-12);
    mesh
}

fn tagged_facets(mesh: &Mesh, tag: &str) -> Vec<usize> {
    mesh.facets
        .iter()
        .enumerate()
        .filter(|(_, f)| f.tag == tag)
        .map(|(i, _)| i)
        .collect()
}

fn as_array(pts: &[[f64; 2]]) -> Array2<f64> {
    Array2::from_shape_fn((pts.len(), 2), |(r, c)| pts[r][c])
}

/// The strain the loss measures must be the exact derivative of the field
/// it evaluates, through the full path: interpolated basis stamps, input
/// scaling, and the hard-boundary blend. A mismatch is not a small
/// inaccuracy — energy minimization drives the field into any gap between
/// measured and actual gradients, since work there is free.
#[test]
fn stamped_gradients_agree_with_finite_differences() {
    let mesh = unit_square(6);
    let basis = homogeneous_basis(&mesh, 8, MassKind::Consistent).unwrap();
    let colloc = build_collocation(&mesh, QuadRule::Gauss(3)).unwrap();
    let hard = HardBc::build(&mesh, &tagged_facets(&mesh, "bottom"), &|_| [0.0, 0.0]).unwrap();

    let spec = ModelSpec {
        dim: 2,
        n_u: 8,
        n_sigma: 0,
        include_x: true,
        include_t: false,
        u_hidden: vec![12, 12],
        sigma_hidden: Vec::new(),
        activation: Activation::Gelu,
    };
    let model = build_model(spec, basis.input_scales(), 3).unwrap();

    let probe = [0usize, 31, 64, 107, 158, 215];
    let pts: Vec<[f64; 2]> = probe.iter().map(|&i| colloc.points[i]).collect();
    let owners: Vec<usize> = probe.iter().map(|&i| colloc.element_of[i]).collect();
    let h = 1e-6;

    let mut g = Graph::new();
    let tape = stage_model(&mut g, &model);
    let s0 = stamp_points(&basis, &mesh, &pts, &owners).unwrap();
    let e0 = displacement(&mut g, &model, &tape, &as_array(&pts), &s0, Some(&hard.tables(&pts)), true);
    for j in 0..2 {
        let mut plus = pts.clone();
        let mut minus = pts.clone();
        for p in &mut plus {
            p[j] += h;
        }
        for p in &mut minus {
            p[j] -= h;
        }
        let sp = stamp_points(&basis, &mesh, &plus, &owners).unwrap();
        let sm = stamp_points(&basis, &mesh, &minus, &owners).unwrap();
        let ep = displacement(&mut g, &model, &tape, &as_array(&plus), &sp, Some(&hard.tables(&plus)), false);
        let em = displacement(&mut g, &model, &tape, &as_array(&minus), &sm, Some(&hard.tables(&minus)), false);
        for r in 0..probe.len() {
            for c in 0..2 {
                let fd = (g.value(ep.u)[(r, c)] - g.value(em.u)[(r, c)]) / (2.0 * h);
                let an = g.value(e0.du[j])[(r, c)];
                approx::assert_relative_eq!(an, fd, epsilon = 1e-7, max_relative = 1e-5);
            }
        }
    }
}

/// A clamped plate pulled upward: bottom fixed, traction (0, 0.4) on the
/// top edge, E = 1, ν = 0.3. The trained energy and displacement field
/// should land on the finite-element reference.
#[test]
fn variational_training_reproduces_the_fem_solution() {
    let mesh = unit_square(8);
    let material = Material::new(1.0, 0.3);
    let traction = [0.0, 0.4];

    let case = FemCase {
        material,
        delta_t: 0.0,
        constraints: vec![Constraint::fixed("bottom")],
        loads: vec![Load {
            tag: "top".into(),
            traction: Box::new(move |_| traction),
        }],
    };
    let reference = fem::solve(&mesh, &case).unwrap();
    assert!(reference.energy < 0.0, "a loaded body should release energy");

    let basis = homogeneous_basis(&mesh, 8, MassKind::Consistent).unwrap();
    let colloc = build_collocation(&mesh, QuadRule::Gauss(3)).unwrap();
    let (interior_stamp, boundary_stamp) = stamp_collocation(&basis, &mesh, &colloc).unwrap();
    let hard = HardBc::build(&mesh, &tagged_facets(&mesh, "bottom"), &|_| [0.0, 0.0]).unwrap();

    let n_interior = colloc.points.len();
    let top = colloc.boundary_with_tag(&mesh, "top");
    let top_points: Vec<[f64; 2]> = top.iter().map(|&i| colloc.boundary[i].x).collect();
    let load = BoundaryLoad {
        x: as_array(&top_points),
        weights: Array2::from_shape_fn((top.len(), 1), |(i, _)| colloc.boundary[top[i]].weight),
        traction: Array2::from_shape_fn((top.len(), 2), |(_, j)| traction[j]),
        stamp: boundary_stamp.take_rows(&top),
        hard: Some(hard.tables(&top_points)),
    };

    let data = WeakFormData {
        x: as_array(&colloc.points),
        weights: Array2::from_shape_fn((n_interior, 1), |(i, _)| colloc.weights[i]),
        stamp: interior_stamp,
        hard: Some(hard.tables(&colloc.points)),
        loads: vec![load],
        self_work: Vec::new(),
        dirichlet: Vec::new(),
        data: None,
        delta_t: None,
    };

    let spec = ModelSpec {
        dim: 2,
        n_u: 8,
        n_sigma: 0,
        include_x: true,
        include_t: false,
        u_hidden: vec![16, 16],
        sigma_hidden: Vec::new(),
        activation: Activation::Gelu,
    };
    let mut model = build_model(spec, basis.input_scales(), 7).unwrap();

    let mut cfg = TrainConfig::new(1e-3, 1500);
    cfg.batch = 128;
    let mut state = TrainState::fresh(&cfg, model.params.n_scalars());
    let weights_cfg = cfg.weights.clone();
    let outcome = train(
        &mut model,
        &cfg,
        n_interior,
        &mut state,
        |g, m, tape, rows| {
            let sub = data.interior_subset(rows);
            weak_form_loss(g, m, tape, &material, &sub, &weights_cfg)
        },
        None,
    )
    .unwrap();
    assert_eq!(outcome.stop, StopReason::Completed);

    let report = outcome.final_report().expect("training produced no history");
    let energy = report.term("potential").unwrap();
    let energy_err = (energy - reference.energy).abs() / reference.energy.abs();
    assert!(
        energy_err < 0.02,
        "trained energy {energy:.6} vs reference {:.6} (rel err {energy_err:.4})",
        reference.energy
    );

    let pred = predict_on_mesh(&model, &mesh, &basis, Some(&hard), 256).unwrap();
    let l2 = nodal_l2_rel(&mesh, &pred, &reference.u);
    assert!(l2 < 0.05, "displacement error {l2:.4} too large");

    // The distance blend pins the clamped edge exactly, training or not.
    for (i, node) in mesh.nodes.iter().enumerate() {
        if node[1] < 1e-12 {
            assert!(pred[(i, 0)].abs() < 1e-12 && pred[(i, 1)].abs() < 1e-12);
        }
    }
}
