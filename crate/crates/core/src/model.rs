//! The displacement/stress model built on a spectral geometry encoding.
//!
//! Displacement is u(x) = f(x, φ(x)) with f a network taking the raw
//! coordinates (optionally) and the encoded geometry φ — so u automatically
//! lives on the domain, including across slits where x alone cannot
//! separate the two faces. Its spatial gradient chains the network's input
//! Jacobian with the stamped basis derivatives.
//!
//! Stress is factored as σ_ij(x) = Σ_k p_ik(x)·∂_jφ_k(x) with p a second
//! network of the coordinates only. On boundary stretches where the basis
//! satisfies ∂φ/∂n = 0 the traction n·σ = p·(∇φ·n) vanishes with it, so
//! free boundaries are traction-free by construction rather than by a
//! penalty.

use std::io::{Read as _, Write as _};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use crate::autodiff::graph::{Graph, NodeId};
use crate::autodiff::net::{
    apply, input_jacobian, jet2, stage_mlp, Activation, ForwardTrace, MlpSpec, MlpTape,
};
use crate::autodiff::params::{stage, ParamSet, Staged};
use crate::encoder::StampedBasis;
use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Model shape: mode counts, network widths, and input layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub dim: usize,
    /// Modes fed to the displacement network.
    pub n_u: usize,
    /// Modes carried by the stress factorization (0 disables the stress
    /// network).
    pub n_sigma: usize,
    /// Feed raw coordinates to the displacement network too.
    pub include_x: bool,
    /// Append a time input channel to the displacement network.
    pub include_t: bool,
    pub u_hidden: Vec<usize>,
    pub sigma_hidden: Vec<usize>,
    pub activation: Activation,
}

impl ModelSpec {
    pub fn n_in_u(&self) -> usize {
        (if self.include_x { self.dim } else { 0 }) + self.n_u + usize::from(self.include_t)
    }

    /// Input channel of mode k in the displacement network.
    fn phi_channel(&self, k: usize) -> usize {
        (if self.include_x { self.dim } else { 0 }) + k
    }

    fn t_channel(&self) -> usize {
        self.n_in_u() - 1
    }

    pub fn u_spec(&self) -> MlpSpec {
        let mut layers = vec![self.n_in_u()];
        layers.extend(&self.u_hidden);
        layers.push(self.dim);
        MlpSpec::new(layers, self.activation)
    }

    pub fn sigma_spec(&self) -> MlpSpec {
        let mut layers = vec![self.dim];
        layers.extend(&self.sigma_hidden);
        layers.push(self.dim * self.n_sigma);
        MlpSpec::new(layers, self.activation)
    }
}

/// A model instance: spec, parameters, and the per-mode input scaling
/// (inputs are φ_k divided by the k-th scale; the stress factor uses the
/// raw basis).
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: ParamSet,
    pub input_scale: Vec<f64>,
}

pub fn build_model(spec: ModelSpec, input_scale: Vec<f64>, seed: u64) -> Result<Model> {
    if input_scale.len() < spec.n_u || (spec.n_sigma > 0 && input_scale.len() < spec.n_sigma) {
        return Err(Error::Config(format!(
            "model wants {} displacement / {} stress modes but only {} scales were provided",
            spec.n_u,
            spec.n_sigma,
            input_scale.len()
        )));
    }
    if input_scale.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(Error::Config("input scales must be positive".into()));
    }
    let mut params = ParamSet::new();
    spec.u_spec().init("u.", seed, &mut params);
    if spec.n_sigma > 0 {
        spec.sigma_spec().init("s.", seed ^ 0x5ca1_ab1e, &mut params);
    }
    Ok(Model {
        spec,
        params,
        input_scale,
    })
}

/// Staged networks for one tape.
pub struct ModelTape {
    pub staged: Staged,
    pub u_net: MlpTape,
    pub sigma_net: Option<MlpTape>,
}

pub fn stage_model(g: &mut Graph, model: &Model) -> ModelTape {
    let staged = stage(g, &model.params);
    let u_net = stage_mlp(&model.spec.u_spec(), &model.params, &staged, "u.");
    let sigma_net = (model.spec.n_sigma > 0)
        .then(|| stage_mlp(&model.spec.sigma_spec(), &model.params, &staged, "s."));
    ModelTape {
        staged,
        u_net,
        sigma_net,
    }
}

/// Displacement-network input matrix `[x? | φ/s | t?]` as a plain array.
fn u_input(
    model: &Model,
    x: &Array2<f64>,
    stamp: &StampedBasis,
    t: Option<&Array2<f64>>,
) -> Array2<f64> {
    let spec = &model.spec;
    let n = x.nrows();
    assert_eq!(stamp.n_points(), n, "stamp/point count mismatch");
    let mut input = Array2::zeros((n, spec.n_in_u()));
    let mut col = 0;
    if spec.include_x {
        input
            .slice_mut(ndarray::s![.., 0..spec.dim])
            .assign(&x.slice(ndarray::s![.., 0..spec.dim]));
        col += spec.dim;
    }
    for k in 0..spec.n_u {
        let s = model.input_scale[k];
        for r in 0..n {
            input[(r, col + k)] = stamp.phi[(r, k)] / s;
        }
    }
    col += spec.n_u;
    if spec.include_t {
        let tv = t.expect("model has a time channel but no times were given");
        assert_eq!(tv.dim(), (n, 1), "time column shape mismatch");
        input.slice_mut(ndarray::s![.., col..col + 1]).assign(tv);
    }
    input
}

/// Hard Dirichlet enforcement data: u = g(x) + R(x)·f(x, φ), with R the
/// normalized distance to the constrained boundary (zero on it) and g an
/// inverse-distance interpolation of the prescribed values (exact at the
/// sampled boundary points).
#[derive(Debug, Clone)]
pub struct HardBc {
    /// Distance normalization; R = d/(d + eps).
    pub eps: f64,
    /// Interpolation regularization (squared length).
    pub delta: f64,
    samples: Vec<([f64; 2], [f64; 2])>,
    segments: Vec<([f64; 2], [f64; 2])>,
}

impl HardBc {
    /// Sample the prescribed values at the endpoints and midpoints of the
    /// given Dirichlet facets. `eps` defaults to a tenth of the mesh
    /// diameter: the blend R must ramp up over a length the interior
    /// quadrature can resolve, or the energy loss becomes blind to fields
    /// that jump off the constrained boundary inside the ramp (a spurious
    /// rigid mode with unbounded external work and no measured strain).
    pub fn build(
        mesh: &Mesh,
        facets: &[usize],
        value: &dyn Fn([f64; 2]) -> [f64; 2],
    ) -> Result<HardBc> {
        if facets.is_empty() {
            return Err(Error::Config(
                "hard boundary enforcement needs at least one constrained facet".into(),
            ));
        }
        let mut segments = Vec::with_capacity(facets.len());
        let mut samples = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for &f in facets {
            let facet = &mesh.facets[f];
            let (a, b) = (mesh.nodes[facet.nodes[0]], mesh.nodes[facet.nodes[1]]);
            segments.push((a, b));
            let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
            for p in [a, mid, b] {
                let key = (p[0].to_bits(), p[1].to_bits());
                if seen.insert(key) {
                    samples.push((p, value(p)));
                }
            }
        }
        let diameter = mesh_diameter(mesh);
        Ok(HardBc {
            eps: 0.1 * diameter,
            delta: 1e-12,
            samples,
            segments,
        })
    }

    /// Distance to the constrained boundary and its gradient.
    pub fn distance(&self, x: [f64; 2]) -> (f64, [f64; 2]) {
        let mut best = f64::INFINITY;
        let mut grad = [0.0; 2];
        for &(a, b) in &self.segments {
            let ab = [b[0] - a[0], b[1] - a[1]];
            let len2 = ab[0] * ab[0] + ab[1] * ab[1];
            let t = (((x[0] - a[0]) * ab[0] + (x[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0);
            let c = [a[0] + t * ab[0], a[1] + t * ab[1]];
            let dv = [x[0] - c[0], x[1] - c[1]];
            let d = (dv[0] * dv[0] + dv[1] * dv[1]).sqrt();
            if d < best {
                best = d;
                grad = if d > 1e-14 {
                    [dv[0] / d, dv[1] / d]
                } else {
                    [0.0, 0.0]
                };
            }
        }
        (best, grad)
    }

    /// R(x) = d/(d + eps) and its gradient.
    pub fn r_value(&self, x: [f64; 2]) -> (f64, [f64; 2]) {
        let (d, dd) = self.distance(x);
        let denom = d + self.eps;
        let r = d / denom;
        let c = self.eps / (denom * denom);
        (r, [c * dd[0], c * dd[1]])
    }

    /// Interpolated prescribed value and its gradient (rows of the result
    /// are ∂g_i/∂x_j over j).
    pub fn g_value(&self, x: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
        let mut wsum = 0.0;
        let mut dwsum = [0.0; 2];
        let mut num = [0.0; 2];
        let mut dnum = [[0.0; 2]; 2];
        for &(p, v) in &self.samples {
            let dv = [x[0] - p[0], x[1] - p[1]];
            let d2 = dv[0] * dv[0] + dv[1] * dv[1] + self.delta;
            let w = 1.0 / d2;
            let dw = [-2.0 * dv[0] / (d2 * d2), -2.0 * dv[1] / (d2 * d2)];
            wsum += w;
            num[0] += w * v[0];
            num[1] += w * v[1];
            for j in 0..2 {
                dwsum[j] += dw[j];
                dnum[0][j] += dw[j] * v[0];
                dnum[1][j] += dw[j] * v[1];
            }
        }
        let gi = [num[0] / wsum, num[1] / wsum];
        let mut dg = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                dg[i][j] = (dnum[i][j] - gi[i] * dwsum[j]) / wsum;
            }
        }
        (gi, dg)
    }

    /// Tabulate R, ∇R, g, ∇g at a point set.
    pub fn tables(&self, points: &[[f64; 2]]) -> HardBcTables {
        let n = points.len();
        let mut r = Array2::zeros((n, 1));
        let mut dr = [Array2::zeros((n, 1)), Array2::zeros((n, 1))];
        let mut gv = Array2::zeros((n, 2));
        let mut dg = [Array2::zeros((n, 2)), Array2::zeros((n, 2))];
        for (row, &x) in points.iter().enumerate() {
            let (rv, drv) = self.r_value(x);
            r[(row, 0)] = rv;
            dr[0][(row, 0)] = drv[0];
            dr[1][(row, 0)] = drv[1];
            let (g, dgm) = self.g_value(x);
            for i in 0..2 {
                gv[(row, i)] = g[i];
                dg[0][(row, i)] = dgm[i][0];
                dg[1][(row, i)] = dgm[i][1];
            }
        }
        HardBcTables { r, dr, g: gv, dg }
    }
}

/// Hard-boundary tables at a fixed point set.
#[derive(Debug, Clone)]
pub struct HardBcTables {
    pub r: Array2<f64>,
    pub dr: [Array2<f64>; 2],
    pub g: Array2<f64>,
    pub dg: [Array2<f64>; 2],
}

impl HardBcTables {
    /// Tables restricted to a subset of rows (for minibatching).
    pub fn take_rows(&self, rows: &[usize]) -> HardBcTables {
        let sel = |a: &Array2<f64>| a.select(ndarray::Axis(0), rows);
        HardBcTables {
            r: sel(&self.r),
            dr: [sel(&self.dr[0]), sel(&self.dr[1])],
            g: sel(&self.g),
            dg: [sel(&self.dg[0]), sel(&self.dg[1])],
        }
    }
}

fn mesh_diameter(mesh: &Mesh) -> f64 {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in &mesh.nodes {
        for j in 0..2 {
            lo[j] = lo[j].min(p[j]);
            hi[j] = hi[j].max(p[j]);
        }
    }
    ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt()
}

/// Displacement and (optionally) its spatial gradient at a point batch.
pub struct FieldEval {
    /// (N, dim) displacement.
    pub u: NodeId,
    /// Per spatial direction j: (N, dim) holding ∂u_i/∂x_j. Empty when
    /// gradients were not requested.
    pub du: Vec<NodeId>,
}

/// Evaluate u (and ∇u) on a batch of static points. `hard` tables, when
/// given, must be built at the same points.
pub fn displacement(
    g: &mut Graph,
    model: &Model,
    tape: &ModelTape,
    x: &Array2<f64>,
    stamp: &StampedBasis,
    hard: Option<&HardBcTables>,
    want_grad: bool,
) -> FieldEval {
    let spec = &model.spec;
    assert!(!spec.include_t, "static evaluation of a time-dependent model");
    let input = u_input(model, x, stamp, None);
    let input = g.leaf(input);
    let trace = apply(g, &tape.u_net, input);
    let f = trace.out;

    let mut du = Vec::new();
    if want_grad {
        for j in 0..spec.dim {
            let mut acc = spec
                .include_x
                .then(|| input_jacobian(g, &tape.u_net, &trace, j));
            // Scaled basis-derivative table for direction j.
            let mut table = Array2::zeros((x.nrows(), spec.n_u));
            for k in 0..spec.n_u {
                for r in 0..x.nrows() {
                    table[(r, k)] = stamp.dphi[j][(r, k)] / model.input_scale[k];
                }
            }
            let table = g.leaf(table);
            for k in 0..spec.n_u {
                let jac = input_jacobian(g, &tape.u_net, &trace, spec.phi_channel(k));
                let col = g.slice_cols(table, k, k + 1);
                let term = g.mul(jac, col);
                acc = Some(match acc {
                    Some(a) => g.add(a, term),
                    None => term,
                });
            }
            du.push(acc.expect("a displacement net with no inputs"));
        }
    }

    match hard {
        None => FieldEval { u: f, du },
        Some(tables) => {
            let r = g.leaf(tables.r.clone());
            let gv = g.leaf(tables.g.clone());
            let rf = g.mul(r, f);
            let u = g.add(gv, rf);
            let du = du
                .iter()
                .enumerate()
                .map(|(j, &fj)| {
                    // ∂(g + R f) = ∂g + (∂R)·f + R·∂f
                    let dgj = g.leaf(tables.dg[j].clone());
                    let drj = g.leaf(tables.dr[j].clone());
                    let drf = g.mul(drj, f);
                    let rdf = g.mul(r, fj);
                    let s = g.add(drf, rdf);
                    g.add(dgj, s)
                })
                .collect();
            FieldEval { u, du }
        }
    }
}

/// The stress factor p = NN_σ(x) and its forward trace; columns are
/// i-major: p_ik sits in column i·n_σ + k.
pub fn stress_factor(
    g: &mut Graph,
    tape: &ModelTape,
    x: &Array2<f64>,
) -> (NodeId, ForwardTrace) {
    let net = tape
        .sigma_net
        .as_ref()
        .expect("model was built without a stress network");
    let input = g.leaf(x.clone());
    let trace = apply(g, net, input);
    (trace.out, trace)
}

/// Predicted stress columns: `sigma[i][j]` is the (N, 1) node of σ_ij.
/// Uses the raw (unscaled) basis derivatives.
pub fn predicted_stress(
    g: &mut Graph,
    model: &Model,
    tape: &ModelTape,
    x: &Array2<f64>,
    stamp: &StampedBasis,
) -> Vec<Vec<NodeId>> {
    let (p, _) = stress_factor(g, tape, x);
    stress_from_factor(g, model, p, stamp)
}

/// Contract an already-evaluated stress factor with basis gradients.
pub fn stress_from_factor(
    g: &mut Graph,
    model: &Model,
    p: NodeId,
    stamp: &StampedBasis,
) -> Vec<Vec<NodeId>> {
    let spec = &model.spec;
    let dphi = [g.leaf(stamp.dphi[0].clone()), g.leaf(stamp.dphi[1].clone())];
    let mut sigma = Vec::with_capacity(spec.dim);
    for i in 0..spec.dim {
        let mut row = Vec::with_capacity(spec.dim);
        for j in 0..spec.dim {
            let mut acc: Option<NodeId> = None;
            for k in 0..spec.n_sigma {
                let pik = g.slice_cols(p, i * spec.n_sigma + k, i * spec.n_sigma + k + 1);
                let dk = g.slice_cols(dphi[j], k, k + 1);
                let term = g.mul(pik, dk);
                acc = Some(match acc {
                    Some(a) => g.add(a, term),
                    None => term,
                });
            }
            row.push(acc.expect("stress factorization with zero modes"));
        }
        sigma.push(row);
    }
    sigma
}

/// Divergence of the factored stress: component i is
/// Σ_k [ Σ_j ∂_j p_ik · ∂_j φ_k + p_ik · Δφ_k ], an (N, 1) node each.
pub fn stress_divergence(
    g: &mut Graph,
    model: &Model,
    tape: &ModelTape,
    x: &Array2<f64>,
    stamp: &StampedBasis,
) -> Vec<NodeId> {
    let spec = &model.spec;
    let net = tape
        .sigma_net
        .as_ref()
        .expect("model was built without a stress network");
    let input = g.leaf(x.clone());
    let trace = apply(g, net, input);
    let p = trace.out;
    let jp: Vec<NodeId> = (0..spec.dim)
        .map(|j| input_jacobian(g, net, &trace, j))
        .collect();
    let dphi = [g.leaf(stamp.dphi[0].clone()), g.leaf(stamp.dphi[1].clone())];
    let lap = g.leaf(stamp.lap.clone());
    let mut out = Vec::with_capacity(spec.dim);
    for i in 0..spec.dim {
        let mut acc: Option<NodeId> = None;
        for k in 0..spec.n_sigma {
            let c = i * spec.n_sigma + k;
            let pik = g.slice_cols(p, c, c + 1);
            let lk = g.slice_cols(lap, k, k + 1);
            let mut term = g.mul(pik, lk);
            for j in 0..spec.dim {
                let dpik = g.slice_cols(jp[j], c, c + 1);
                let dk = g.slice_cols(dphi[j], k, k + 1);
                let t = g.mul(dpik, dk);
                term = g.add(term, t);
            }
            acc = Some(match acc {
                Some(a) => g.add(a, term),
                None => term,
            });
        }
        out.push(acc.expect("stress factorization with zero modes"));
    }
    out
}

/// Space-time derivatives of a 1D dynamic model at (x, t) batches.
pub struct Dyn1dEval {
    pub u: NodeId,
    pub u_t: NodeId,
    pub u_tt: NodeId,
    pub u_x: NodeId,
    pub u_xx: NodeId,
}

/// Evaluate the 1D time-dependent model u = f(φ(x)/s, t) with full first
/// and second derivatives via two Taylor jets: one along the encoded
/// x-curve (seeded with φ′ and ½φ″) and one along t.
pub fn displacement_1d_dynamic(
    g: &mut Graph,
    model: &Model,
    tape: &ModelTape,
    x: &Array2<f64>,
    stamp: &StampedBasis,
    t: &Array2<f64>,
) -> Dyn1dEval {
    let spec = &model.spec;
    assert!(spec.include_t, "dynamic evaluation of a static model");
    assert_eq!(spec.dim, 1);
    let n = x.nrows();
    let n_in = spec.n_in_u();

    let x0 = g.leaf(u_input(model, x, stamp, Some(t)));

    // x-direction jet: the curve ε ↦ [x+ε?, φ(x+ε)/s, t].
    let mut t1x = Array2::zeros((n, n_in));
    let mut t2x = Array2::zeros((n, n_in));
    if spec.include_x {
        for r in 0..n {
            t1x[(r, 0)] = 1.0;
        }
    }
    for k in 0..spec.n_u {
        let c = spec.phi_channel(k);
        let s = model.input_scale[k];
        for r in 0..n {
            t1x[(r, c)] = stamp.dphi[0][(r, k)] / s;
            t2x[(r, c)] = 0.5 * stamp.lap[(r, k)] / s;
        }
    }
    let t1x = g.leaf(t1x);
    let t2x = g.leaf(t2x);
    let (u, ux1, ux2) = jet2(g, &tape.u_net, x0, t1x, t2x);
    let u_xx = g.scale(ux2, 2.0);

    // t-direction jet: straight line along the time channel.
    let mut t1t = Array2::zeros((n, n_in));
    for r in 0..n {
        t1t[(r, spec.t_channel())] = 1.0;
    }
    let t1t = g.leaf(t1t);
    let t2t = g.leaf(Array2::zeros((n, n_in)));
    let (_, ut1, ut2) = jet2(g, &tape.u_net, x0, t1t, t2t);
    let u_tt = g.scale(ut2, 2.0);

    Dyn1dEval {
        u,
        u_t: ut1,
        u_tt,
        u_x: ux1,
        u_xx,
    }
}

/// Plain displacement prediction as arrays (builds and discards a tape).
pub fn predict(
    model: &Model,
    x: &Array2<f64>,
    stamp: &StampedBasis,
    hard: Option<&HardBcTables>,
) -> Array2<f64> {
    let mut g = Graph::new();
    let tape = stage_model(&mut g, model);
    let eval = displacement(&mut g, model, &tape, x, stamp, hard, false);
    g.value(eval.u).clone()
}

/// Displacement at every mesh node, evaluated in bounded-size chunks so
/// the tape never holds the whole mesh at once.
pub fn predict_on_mesh(
    model: &Model,
    mesh: &Mesh,
    basis: &crate::encoder::EigenBasis,
    hard: Option<&HardBc>,
    chunk: usize,
) -> Result<Array2<f64>> {
    let owners = mesh.node_elements()?;
    let chunk = chunk.max(1);
    let n = mesh.n_nodes();
    let mut out = Array2::zeros((n, model.spec.dim));
    let mut row = 0;
    while row < n {
        let hi = (row + chunk).min(n);
        let pts: Vec<[f64; 2]> = mesh.nodes[row..hi].to_vec();
        let elems: Vec<usize> = owners[row..hi].to_vec();
        let stamp = crate::encoder::stamp_points(basis, mesh, &pts, &elems)?;
        let x = Array2::from_shape_fn((pts.len(), 2), |(r, c)| pts[r][c]);
        let tables = hard.map(|h| h.tables(&pts));
        let u = predict(model, &x, &stamp, tables.as_ref());
        out.slice_mut(ndarray::s![row..hi, ..]).assign(&u);
        row = hi;
    }
    Ok(out)
}

/// 1D space-time displacement values at given (x, t) samples.
pub fn predict_space_time(
    model: &Model,
    x: &Array2<f64>,
    stamp: &StampedBasis,
    t: &Array2<f64>,
) -> Array2<f64> {
    let mut g = Graph::new();
    let tape = stage_model(&mut g, model);
    let input = g.leaf(u_input(model, x, stamp, Some(t)));
    let trace = apply(&mut g, &tape.u_net, input);
    g.value(trace.out).clone()
}

pub const MODEL_MAGIC: &[u8] = b"finpinn-model v1\n";

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Tanh => 0,
        Activation::Gelu => 1,
        Activation::Sine => 2,
    }
}

fn activation_from_code(c: u8) -> Result<Activation> {
    Ok(match c {
        0 => Activation::Tanh,
        1 => Activation::Gelu,
        2 => Activation::Sine,
        _ => {
            return Err(Error::Parse {
                line: 0,
                msg: format!("unknown activation code {c}"),
            })
        }
    })
}

/// Write a trained model as a single artifact: its shape, input scaling,
/// the hash of the basis file its inputs are stamped from, and the
/// parameters. `basis_hash` lets loading code refuse to pair the network
/// with an encoding it was not trained against.
pub fn save_model(model: &Model, basis_hash: u64, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MODEL_MAGIC)?;
    let s = &model.spec;
    w.write_u8(s.dim as u8)?;
    w.write_u32::<LittleEndian>(s.n_u as u32)?;
    w.write_u32::<LittleEndian>(s.n_sigma as u32)?;
    w.write_u8(u8::from(s.include_x))?;
    w.write_u8(u8::from(s.include_t))?;
    w.write_u8(activation_code(s.activation))?;
    w.write_u16::<LittleEndian>(s.u_hidden.len() as u16)?;
    for &width in &s.u_hidden {
        w.write_u32::<LittleEndian>(width as u32)?;
    }
    w.write_u16::<LittleEndian>(s.sigma_hidden.len() as u16)?;
    for &width in &s.sigma_hidden {
        w.write_u32::<LittleEndian>(width as u32)?;
    }
    w.write_u32::<LittleEndian>(model.input_scale.len() as u32)?;
    for &v in &model.input_scale {
        w.write_f64::<LittleEndian>(v)?;
    }
    w.write_u64::<LittleEndian>(basis_hash)?;
    model.params.write_to(&mut w)
}

/// Counterpart of [`save_model`]; returns the model and the stored basis
/// hash. The parameter block is checked entry by entry against the shape
/// the spec dictates, so a truncated or mixed-up file fails here instead of
/// at evaluation time.
pub fn load_model(path: &Path) -> Result<(Model, u64)> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = vec![0u8; MODEL_MAGIC.len()];
    r.read_exact(&mut magic)?;
    if magic != MODEL_MAGIC {
        return Err(Error::Parse {
            line: 1,
            msg: "not a model bundle (bad magic)".into(),
        });
    }
    let dim = r.read_u8()? as usize;
    let n_u = r.read_u32::<LittleEndian>()? as usize;
    let n_sigma = r.read_u32::<LittleEndian>()? as usize;
    let include_x = r.read_u8()? != 0;
    let include_t = r.read_u8()? != 0;
    let activation = activation_from_code(r.read_u8()?)?;
    let mut read_widths = |r: &mut std::io::BufReader<std::fs::File>| -> Result<Vec<usize>> {
        let n = r.read_u16::<LittleEndian>()? as usize;
        (0..n)
            .map(|_| Ok(r.read_u32::<LittleEndian>()? as usize))
            .collect()
    };
    let u_hidden = read_widths(&mut r)?;
    let sigma_hidden = read_widths(&mut r)?;
    let n_scale = r.read_u32::<LittleEndian>()? as usize;
    let mut input_scale = vec![0.0; n_scale];
    for v in &mut input_scale {
        *v = r.read_f64::<LittleEndian>()?;
    }
    let basis_hash = r.read_u64::<LittleEndian>()?;
    let params = ParamSet::read_from(&mut r)?;

    let spec = ModelSpec {
        dim,
        n_u,
        n_sigma,
        include_x,
        include_t,
        u_hidden,
        sigma_hidden,
        activation,
    };
    let mut model = build_model(spec, input_scale, 0)?;
    if model.params.entries().len() != params.entries().len() {
        return Err(Error::Parse {
            line: 0,
            msg: format!(
                "bundle carries {} parameter tensors but its spec needs {}",
                params.entries().len(),
                model.params.entries().len()
            ),
        });
    }
    for ((want_name, want), (got_name, got)) in
        model.params.entries().iter().zip(params.entries())
    {
        if want_name != got_name || want.dim() != got.dim() {
            return Err(Error::Parse {
                line: 0,
                msg: format!(
                    "bundle parameter `{got_name}` {:?} does not match the \
                     spec's `{want_name}` {:?}",
                    got.dim(),
                    want.dim()
                ),
            });
        }
    }
    model.params = params;
    Ok((model, basis_hash))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{Element, ElementKind};
    use approx::assert_relative_eq;
    use ndarray::Array2;

    /// A smooth synthetic encoding with exact derivatives: φ_k(x, y) =
    /// cos(a_k x + b_k y + c_k). Lets chain rules be checked against clean
    /// finite differences without mesh interpolation noise.
    struct WaveStamp {
        coefs: Vec<[f64; 3]>,
    }

    impl WaveStamp {
        fn new(n: usize) -> WaveStamp {
            let coefs = (0..n)
                .map(|k| {
                    let k = k as f64;
                    [1.3 + 0.7 * k, 0.9 - 0.4 * k, 0.3 * k]
                })
                .collect();
            WaveStamp { coefs }
        }

        fn stamp(&self, pts: &[[f64; 2]]) -> StampedBasis {
            let n = pts.len();
            let m = self.coefs.len();
            let mut phi = Array2::zeros((n, m));
            let mut dx = Array2::zeros((n, m));
            let mut dy = Array2::zeros((n, m));
            let mut lap = Array2::zeros((n, m));
            for (r, &[x, y]) in pts.iter().enumerate() {
                for (k, &[a, b, c]) in self.coefs.iter().enumerate() {
                    let arg = a * x + b * y + c;
                    phi[(r, k)] = arg.cos();
                    dx[(r, k)] = -a * arg.sin();
                    dy[(r, k)] = -b * arg.sin();
                    lap[(r, k)] = -(a * a + b * b) * arg.cos();
                }
            }
            StampedBasis {
                phi,
                dphi: [dx, dy],
                lap,
            }
        }
    }

    fn static_spec(n_u: usize, n_sigma: usize) -> ModelSpec {
        ModelSpec {
            dim: 2,
            n_u,
            n_sigma,
            include_x: true,
            include_t: false,
            u_hidden: vec![8, 8],
            sigma_hidden: vec![8],
            activation: Activation::Gelu,
        }
    }

    fn points() -> Vec<[f64; 2]> {
        vec![[0.2, 0.3], [0.7, 0.1], [0.4, 0.8], [0.9, 0.6]]
    }

    fn as_array(pts: &[[f64; 2]]) -> Array2<f64> {
        Array2::from_shape_fn((pts.len(), 2), |(r, c)| pts[r][c])
    }

    #[test]
    fn displacement_gradient_chains_correctly() {
        let spec = static_spec(3, 0);
        let enc = WaveStamp::new(3);
        let scales = vec![1.0, 0.8, 1.3];
        let model = build_model(spec, scales, 11).unwrap();
        let pts = points();
        let x = as_array(&pts);
        let stamp = enc.stamp(&pts);
        let mut g = Graph::new();
        let tape = stage_model(&mut g, &model);
        let eval = displacement(&mut g, &model, &tape, &x, &stamp, None, true);
        let h = 1e-6;
        for j in 0..2 {
            let shift = |sign: f64| -> Array2<f64> {
                let moved: Vec<[f64; 2]> = pts
                    .iter()
                    .map(|&p| {
                        let mut q = p;
                        q[j] += sign * h;
                        q
                    })
                    .collect();
                predict(&model, &as_array(&moved), &enc.stamp(&moved), None)
            };
            let fd = (&shift(1.0) - &shift(-1.0)) / (2.0 * h);
            for (got, want) in g.value(eval.du[j]).iter().zip(fd.iter()) {
                assert_relative_eq!(got, want, epsilon = 1e-7, max_relative = 1e-5);
            }
        }
    }

    #[test]
    fn traction_identity_is_exact() {
        // n·σ must equal p·(∇φ·n) to reordering precision, independent of
        // the network weights.
        let spec = static_spec(0, 4);
        let mut spec = spec;
        spec.n_u = 2;
        let enc = WaveStamp::new(4);
        let model = build_model(spec, vec![1.0; 4], 5).unwrap();
        let pts = points();
        let x = as_array(&pts);
        let stamp = enc.stamp(&pts);
        let normal = [0.36, -0.932_952_303_175_453_4]; // any unit vector
        let mut g = Graph::new();
        let tape = stage_model(&mut g, &model);
        let sigma = predicted_stress(&mut g, &model, &tape, &x, &stamp);
        let (p, _) = stress_factor(&mut g, &tape, &x);
        let pv = g.value(p).clone();
        for (r, _) in pts.iter().enumerate() {
            for i in 0..2 {
                let direct: f64 = (0..2)
                    .map(|j| g.value(sigma[i][j])[(r, 0)] * normal[j])
                    .sum();
                let factored: f64 = (0..4)
                    .map(|k| {
                        let flux: f64 =
                            (0..2).map(|j| stamp.dphi[j][(r, k)] * normal[j]).sum();
                        pv[(r, i * 4 + k)] * flux
                    })
                    .sum();
                assert_relative_eq!(direct, factored, epsilon = 1e-13, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn stress_divergence_matches_differences() {
        let spec = static_spec(2, 3);
        let enc = WaveStamp::new(3);
        let model = build_model(spec, vec![1.0; 3], 17).unwrap();
        let pts = points();
        let x = as_array(&pts);
        let stamp = enc.stamp(&pts);
        let mut g = Graph::new();
        let tape = stage_model(&mut g, &model);
        let div = stress_divergence(&mut g, &model, &tape, &x, &stamp);
        // FD of σ_ij over re-stamped shifted points.
        let h = 1e-6;
        let sigma_at = |pts2: &[[f64; 2]]| -> Vec<Vec<Array2<f64>>> {
            let mut g2 = Graph::new();
            let tape2 = stage_model(&mut g2, &model);
            let s = predicted_stress(&mut g2, &model, &tape2, &as_array(pts2), &enc.stamp(pts2));
            s.iter()
                .map(|row| row.iter().map(|&id| g2.value(id).clone()).collect())
                .collect()
        };
        let mut fd = vec![Array2::zeros((pts.len(), 1)); 2];
        for j in 0..2 {
            let shifted = |sign: f64| -> Vec<[f64; 2]> {
                pts.iter()
                    .map(|&p| {
                        let mut q = p;
                        q[j] += sign * h;
                        q
                    })
                    .collect()
            };
            let sp = sigma_at(&shifted(1.0));
            let sm = sigma_at(&shifted(-1.0));
            for i in 0..2 {
                let d = (&sp[i][j] - &sm[i][j]) / (2.0 * h);
                fd[i] = &fd[i] + &d;
            }
        }
        for i in 0..2 {
            for (got, want) in g.value(div[i]).iter().zip(fd[i].iter()) {
                assert_relative_eq!(got, want, epsilon = 1e-6, max_relative = 1e-4);
            }
        }
    }

    fn square_mesh() -> Mesh {
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

    #[test]
    fn hard_bc_distance_and_exactness() {
        let mesh = square_mesh();
        // Bottom edge y = 0 is the constrained boundary.
        let bottom: Vec<usize> = (0..mesh.facets.len())
            .filter(|&f| {
                let fc = &mesh.facets[f];
                mesh.nodes[fc.nodes[0]][1] < 1e-12 && mesh.nodes[fc.nodes[1]][1] < 1e-12
            })
            .collect();
        assert!(!bottom.is_empty());
        let hb = HardBc::build(&mesh, &bottom, &|x| [0.1 * x[0], -0.2]).unwrap();
        // Pinned normalization: eps = 0.1·diameter = 0.1·√2.
        let (r, _) = hb.r_value([0.5, 0.3]);
        let eps = 0.1 * 2.0f64.sqrt();
        assert_relative_eq!(r, 0.3 / (0.3 + eps), epsilon = 1e-12);
        // R vanishes on the boundary, so u = g there; g is exact at the
        // sampled points.
        for x in [[0.0, 0.0], [0.5, 0.0], [1.0, 0.0]] {
            let (r0, _) = hb.r_value(x);
            assert_relative_eq!(r0, 0.0, epsilon = 1e-15);
            let (gv, _) = hb.g_value(x);
            assert_relative_eq!(gv[0], 0.1 * x[0], epsilon = 1e-9);
            assert_relative_eq!(gv[1], -0.2, epsilon = 1e-9);
        }
        // ∇R points away from the wall with magnitude ~1/eps near it.
        let (_, dr) = hb.r_value([0.5, 1e-4]);
        assert!(dr[1] > 0.0);
    }

    #[test]
    fn hard_bc_gradients_match_differences() {
        let mesh = square_mesh();
        let facets: Vec<usize> = (0..mesh.facets.len()).collect();
        let hb = HardBc::build(&mesh, &facets, &|x| [x[0] * x[1], x[0] - x[1]]).unwrap();
        let h = 1e-7;
        for x in [[0.3, 0.4], [0.62, 0.55]] {
            let (_, dr) = hb.r_value(x);
            let (_, dg) = hb.g_value(x);
            for j in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[j] += h;
                xm[j] -= h;
                let fd_r = (hb.r_value(xp).0 - hb.r_value(xm).0) / (2.0 * h);
                assert_relative_eq!(dr[j], fd_r, epsilon = 1e-6, max_relative = 1e-5);
                for i in 0..2 {
                    let fd_g = (hb.g_value(xp).0[i] - hb.g_value(xm).0[i]) / (2.0 * h);
                    assert_relative_eq!(dg[i][j], fd_g, epsilon = 1e-6, max_relative = 1e-4);
                }
            }
        }
    }

    #[test]
    fn hard_bc_displacement_is_exact_on_boundary() {
        let mesh = square_mesh();
        let bottom: Vec<usize> = (0..mesh.facets.len())
            .filter(|&f| {
                let fc = &mesh.facets[f];
                mesh.nodes[fc.nodes[0]][1] < 1e-12 && mesh.nodes[fc.nodes[1]][1] < 1e-12
            })
            .collect();
        let hb = HardBc::build(&mesh, &bottom, &|_| [0.25, -0.5]).unwrap();
        let spec = static_spec(2, 0);
        let enc = WaveStamp::new(2);
        let model = build_model(spec, vec![1.0, 1.0], 23).unwrap();
        let pts = vec![[0.0, 0.0], [0.3, 0.0], [0.85, 0.0], [1.0, 0.0]];
        let tables = hb.tables(&pts);
        let u = predict(&model, &as_array(&pts), &enc.stamp(&pts), Some(&tables));
        for r in 0..pts.len() {
            assert_relative_eq!(u[(r, 0)], 0.25, epsilon = 1e-9);
            assert_relative_eq!(u[(r, 1)], -0.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_modes_reduce_to_coordinate_network() {
        // With n_u = 0 and x inputs, the model is a plain coordinate net.
        let spec = ModelSpec {
            dim: 2,
            n_u: 0,
            n_sigma: 0,
            include_x: true,
            include_t: false,
            u_hidden: vec![6],
            sigma_hidden: vec![],
            activation: Activation::Tanh,
        };
        let model = build_model(spec.clone(), vec![], 3).unwrap();
        let pts = points();
        let x = as_array(&pts);
        let stamp = StampedBasis {
            phi: Array2::zeros((pts.len(), 0)),
            dphi: [Array2::zeros((pts.len(), 0)), Array2::zeros((pts.len(), 0))],
            lap: Array2::zeros((pts.len(), 0)),
        };
        let u = predict(&model, &x, &stamp, None);
        // Same parameters applied directly as a bare network.
        let mut g = Graph::new();
        let staged = stage(&mut g, &model.params);
        let net = stage_mlp(&spec.u_spec(), &model.params, &staged, "u.");
        let xl = g.leaf(x.clone());
        let trace = apply(&mut g, &net, xl);
        for (a, b) in u.iter().zip(g.value(trace.out).iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-14);
        }
    }

    fn segment_mesh(n: usize) -> Mesh {
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
    fn dynamic_1d_derivatives_match_differences() {
        use crate::encoder::{analytic_basis_1d, Analytic1d};
        let mesh = segment_mesh(64);
        let basis = analytic_basis_1d(&mesh, 4, Analytic1d::LeftDirichlet).unwrap();
        let spec = ModelSpec {
            dim: 1,
            n_u: 4,
            n_sigma: 0,
            include_x: false,
            include_t: true,
            u_hidden: vec![8, 8],
            sigma_hidden: vec![],
            activation: Activation::Sine,
        };
        let scales = basis.input_scales();
        let model = build_model(spec, scales, 41).unwrap();
        // Closed-form stamps at arbitrary x — the same cosines the basis
        // holds at nodes, so finite differences see exactly the fields the
        // jet's derivative tables describe (mesh interpolation would add
        // O(h²) inconsistency).
        let amp = 2.0f64.sqrt();
        let stamp_at = |xs: &[f64]| -> StampedBasis {
            let n = xs.len();
            let mut phi = Array2::zeros((n, 4));
            let mut dx = Array2::zeros((n, 4));
            let mut lap = Array2::zeros((n, 4));
            for (r, &x) in xs.iter().enumerate() {
                for k in 1..=4usize {
                    let w = k as f64 * std::f64::consts::PI / 2.0;
                    let s = x - 1.0;
                    phi[(r, k - 1)] = amp * (w * s).cos();
                    dx[(r, k - 1)] = -amp * w * (w * s).sin();
                    lap[(r, k - 1)] = -amp * w * w * (w * s).cos();
                }
            }
            StampedBasis {
                phi,
                dphi: [dx, Array2::zeros((n, 4))],
                lap,
            }
        };
        let xs = [0.21, 0.53, 0.77];
        let ts = [0.1, 0.45, 0.9];
        let x = Array2::from_shape_fn((3, 1), |(r, _)| xs[r]);
        let t = Array2::from_shape_fn((3, 1), |(r, _)| ts[r]);
        let mut g = Graph::new();
        let tape = stage_model(&mut g, &model);
        let eval = displacement_1d_dynamic(&mut g, &model, &tape, &x, &stamp_at(&xs), &t);

        let predict_at = |xs2: &[f64], ts2: &[f64]| -> Vec<f64> {
            let mut g2 = Graph::new();
            let tape2 = stage_model(&mut g2, &model);
            let x2 = Array2::from_shape_fn((xs2.len(), 1), |(r, _)| xs2[r]);
            let t2 = Array2::from_shape_fn((ts2.len(), 1), |(r, _)| ts2[r]);
            let e = displacement_1d_dynamic(&mut g2, &model, &tape2, &x2, &stamp_at(xs2), &t2);
            g2.value(e.u).iter().copied().collect()
        };
        let h = 1e-5;
        let xp: Vec<f64> = xs.iter().map(|x| x + h).collect();
        let xm: Vec<f64> = xs.iter().map(|x| x - h).collect();
        let tp: Vec<f64> = ts.iter().map(|t| t + h).collect();
        let tm: Vec<f64> = ts.iter().map(|t| t - h).collect();
        let u0 = predict_at(&xs, &ts);
        let uxp = predict_at(&xp, &ts);
        let uxm = predict_at(&xm, &ts);
        let utp = predict_at(&xs, &tp);
        let utm = predict_at(&xs, &tm);
        for r in 0..3 {
            let fd_x = (uxp[r] - uxm[r]) / (2.0 * h);
            let fd_xx = (uxp[r] - 2.0 * u0[r] + uxm[r]) / (h * h);
            let fd_t = (utp[r] - utm[r]) / (2.0 * h);
            let fd_tt = (utp[r] - 2.0 * u0[r] + utm[r]) / (h * h);
            assert_relative_eq!(g.value(eval.u_x)[(r, 0)], fd_x, epsilon = 1e-4, max_relative = 1e-4);
            assert_relative_eq!(g.value(eval.u_xx)[(r, 0)], fd_xx, epsilon = 1e-2, max_relative = 1e-2);
            assert_relative_eq!(g.value(eval.u_t)[(r, 0)], fd_t, epsilon = 1e-4, max_relative = 1e-4);
            assert_relative_eq!(g.value(eval.u_tt)[(r, 0)], fd_tt, epsilon = 1e-2, max_relative = 1e-2);
        }
    }

    #[test]
    fn build_model_validates_scales() {
        let spec = static_spec(3, 2);
        assert!(build_model(spec.clone(), vec![1.0, 1.0], 1).is_err());
        assert!(build_model(spec.clone(), vec![1.0, -1.0, 1.0], 1).is_err());
        assert!(build_model(spec, vec![1.0, 1.0, 1.0], 1).is_ok());
    }

    #[test]
    fn bundles_round_trip_and_reject_mismatches() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.fpm");
        let model = build_model(static_spec(3, 2), vec![1.0, 0.8, 1.3], 42).unwrap();
        save_model(&model, 0xfeed_beef, &path).unwrap();

        let (back, hash) = load_model(&path).unwrap();
        assert_eq!(hash, 0xfeed_beef);
        assert_eq!(back.spec, model.spec);
        assert_eq!(back.input_scale, model.input_scale);
        for ((name, v), (bname, bv)) in
            model.params.entries().iter().zip(back.params.entries())
        {
            assert_eq!(name, bname);
            assert_eq!(v, bv, "parameter {name} changed across the round trip");
        }

        // A checkpoint is not a bundle.
        let ckpt = dir.path().join("params.fpc");
        model.params.save(&ckpt).unwrap();
        assert!(load_model(&ckpt).is_err());

        // Truncating the parameter block is caught by the shape check.
        let bytes = std::fs::read(&path).unwrap();
        let cut = dir.path().join("cut.fpm");
        std::fs::write(&cut, &bytes[..bytes.len() - 64]).unwrap();
        assert!(load_model(&cut).is_err());
    }
}
