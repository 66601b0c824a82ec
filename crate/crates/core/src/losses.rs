//! Physics losses: variational (weak-form) potential energy, strong-form
//! residual systems, and the 1D space-time residual for wave propagation.
//!
//! Every builder appends to a [`Graph`] that already holds staged model
//! parameters and returns the scalar total plus named unweighted terms, so
//! one reverse pass yields parameter gradients for the whole objective.

use ndarray::{Array2, Axis};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::graph::{Graph, NodeId};
use crate::encoder::StampedBasis;
use crate::error::{Error, Result};
use crate::model::{
    displacement, displacement_1d_dynamic, predicted_stress, stress_divergence, HardBcTables,
    Model, ModelTape,
};

/// Two-dimensional reduction of the elasticity tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Plane {
    Stress,
    Strain,
}

/// Constitutive law; the nonlinear variant stiffens with normal strain,
/// E(ε) = E₀(1 + β(ε₁₁² + ε₂₂²)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Law {
    Linear,
    Nonlinear { beta: f64 },
}

/// Material parameters. The 1D dynamic fields (`rho`, `damping`,
/// `stiffness`) are ignored by the 2D losses and vice versa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub e0: f64,
    pub nu: f64,
    pub plane: Plane,
    pub law: Law,
    /// Thermal expansion coefficient (isotropic eigenstrain α·ΔT·δ_ij).
    pub alpha_t: f64,
    pub rho: f64,
    pub damping: f64,
    pub stiffness: f64,
}

impl Material {
    /// Linear plane-stress material with unit density and stiffness.
    pub fn new(e0: f64, nu: f64) -> Material {
        Material {
            e0,
            nu,
            plane: Plane::Stress,
            law: Law::Linear,
            alpha_t: 0.0,
            rho: 1.0,
            damping: 0.0,
            stiffness: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e0 > 0.0) {
            return Err(Error::Config("Young's modulus must be positive".into()));
        }
        if !(-1.0 < self.nu && self.nu < 0.5) {
            return Err(Error::Config(
                "Poisson ratio must lie in (-1, 0.5)".into(),
            ));
        }
        Ok(())
    }

    /// Plane-reduced stiffness entries (d11, d12, shear) so that
    /// σ₁₁ = d11·ε₁₁ + d12·ε₂₂ and σ₁₂ = dss·ε₁₂.
    pub fn stiffness_coeffs(&self) -> (f64, f64, f64) {
        let (e, nu) = (self.e0, self.nu);
        let dss = e / (1.0 + nu);
        match self.plane {
            Plane::Stress => {
                let c = e / (1.0 - nu * nu);
                (c, nu * c, dss)
            }
            Plane::Strain => {
                let c = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
                ((1.0 - nu) * c, nu * c, dss)
            }
        }
    }
}

/// What a measurement file holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObsKind {
    /// Rows `x y u u1 u2`.
    Displacement,
    /// Rows `x y eps e11 e22 e12`.
    Strain,
}

impl ObsKind {
    fn token(self) -> &'static str {
        match self {
            ObsKind::Displacement => "u",
            ObsKind::Strain => "eps",
        }
    }

    fn n_comp(self) -> usize {
        match self {
            ObsKind::Displacement => 2,
            ObsKind::Strain => 3,
        }
    }
}

/// Point measurements of the solution field.
#[derive(Debug, Clone)]
pub struct Observations {
    pub kind: ObsKind,
    pub points: Vec<[f64; 2]>,
    /// (n_points, components); 2 for displacement, 3 for strain.
    pub values: Array2<f64>,
}

impl Observations {
    /// Parse the plain-text format: one measurement per line,
    /// `x y <kind> v…`, `#` comments and blank lines skipped. All lines
    /// must agree on the kind.
    pub fn parse(text: &str) -> Result<Observations> {
        let mut kind: Option<ObsKind> = None;
        let mut points = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let bad = |msg: &str| Error::parse(lineno + 1, msg);
            let coord = |it: &mut std::str::SplitWhitespace| -> Result<f64> {
                it.next()
                    .ok_or_else(|| bad("truncated measurement line"))?
                    .parse()
                    .map_err(|_| bad("coordinate is not a number"))
            };
            let x = coord(&mut it)?;
            let y = coord(&mut it)?;
            let tok = it.next().ok_or_else(|| bad("missing measurement kind"))?;
            let k = match tok {
                "u" => ObsKind::Displacement,
                "eps" => ObsKind::Strain,
                _ => return Err(bad("measurement kind must be 'u' or 'eps'")),
            };
            match kind {
                None => kind = Some(k),
                Some(prev) if prev != k => {
                    return Err(bad("mixed measurement kinds in one file"))
                }
                _ => {}
            }
            let vals: Vec<f64> = it
                .map(|t| t.parse().map_err(|_| bad("value is not a number")))
                .collect::<Result<_>>()?;
            if vals.len() != k.n_comp() {
                return Err(bad(&format!(
                    "expected {} value components, found {}",
                    k.n_comp(),
                    vals.len()
                )));
            }
            points.push([x, y]);
            rows.push(vals);
        }
        let kind = kind.ok_or_else(|| Error::parse(0, "no measurements in file"))?;
        let values = Array2::from_shape_fn((rows.len(), kind.n_comp()), |(r, c)| rows[r][c]);
        Ok(Observations {
            kind,
            points,
            values,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (p, row) in self.points.iter().zip(self.values.rows()) {
            out.push_str(&format!("{:.17e} {:.17e} {}", p[0], p[1], self.kind.token()));
            for v in row {
                out.push_str(&format!(" {v:.17e}"));
            }
            out.push('\n');
        }
        out
    }

    /// Perturb each component with seeded Gaussian noise whose standard
    /// deviation is `level` times that component's root-mean-square over
    /// the measurement set.
    pub fn add_noise(&mut self, level: f64, seed: u64) {
        if level == 0.0 {
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.values.nrows() as f64;
        for c in 0..self.values.ncols() {
            let rms = (self.values.column(c).mapv(|v| v * v).sum() / n).sqrt();
            let sd = level * rms;
            for r in 0..self.values.nrows() {
                let xi: f64 = StandardNormal.sample(&mut rng);
                self.values[(r, c)] += sd * xi;
            }
        }
    }
}

/// Relative weights of the loss terms; the variational potential itself is
/// never weighted (it is the objective, not a penalty).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub data: f64,
    pub dbc: f64,
    pub nbc: f64,
    pub pde: f64,
    pub constitutive: f64,
    pub ic: f64,
}

impl Default for LossWeights {
    fn default() -> LossWeights {
        LossWeights {
            data: 1.0,
            dbc: 1.0,
            nbc: 1.0,
            pde: 1.0,
            constitutive: 1.0,
            ic: 1.0,
        }
    }
}

/// A staged loss: the scalar total plus the named unweighted terms.
pub struct LossGraph {
    pub total: NodeId,
    pub terms: Vec<(&'static str, NodeId)>,
}

/// Evaluated loss values for logging.
#[derive(Debug, Clone)]
pub struct LossReport {
    pub total: f64,
    pub terms: Vec<(&'static str, f64)>,
}

impl LossGraph {
    pub fn report(&self, g: &Graph) -> LossReport {
        LossReport {
            total: g.scalar(self.total),
            terms: self
                .terms
                .iter()
                .map(|&(name, id)| (name, g.scalar(id)))
                .collect(),
        }
    }
}

impl LossReport {
    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms
            .iter()
            .find(|(n, _)| *n == name)
            .map(|&(_, v)| v)
    }
}

/// Strain components (ε₁₁, ε₂₂, ε₁₂) as (N, 1) nodes from a displacement
/// gradient pair `du[j] = ∂u/∂x_j`.
pub fn strain_components(g: &mut Graph, du: &[NodeId]) -> [NodeId; 3] {
    let e11 = g.slice_cols(du[0], 0, 1);
    let e22 = g.slice_cols(du[1], 1, 2);
    let a = g.slice_cols(du[0], 1, 2);
    let b = g.slice_cols(du[1], 0, 1);
    let s = g.add(a, b);
    let e12 = g.scale(s, 0.5);
    [e11, e22, e12]
}

/// Constitutive stress (σ₁₁, σ₂₂, σ₁₂) from strain components; `delta_t`,
/// when given, is the (broadcastable) temperature change producing the
/// eigenstrain α·ΔT on the normal components.
pub fn constitutive_stress(
    g: &mut Graph,
    mat: &Material,
    eps: &[NodeId; 3],
    delta_t: Option<NodeId>,
) -> [NodeId; 3] {
    let (d11, d12, dss) = mat.stiffness_coeffs();
    let (e11el, e22el) = match delta_t {
        None => (eps[0], eps[1]),
        Some(dt) => {
            let th = g.scale(dt, mat.alpha_t);
            (g.sub(eps[0], th), g.sub(eps[1], th))
        }
    };
    let mut s11 = {
        let a = g.scale(e11el, d11);
        let b = g.scale(e22el, d12);
        g.add(a, b)
    };
    let mut s22 = {
        let a = g.scale(e11el, d12);
        let b = g.scale(e22el, d11);
        g.add(a, b)
    };
    let mut s12 = g.scale(eps[2], dss);
    if let Law::Nonlinear { beta } = mat.law {
        let q11 = g.square(eps[0]);
        let q22 = g.square(eps[1]);
        let q = g.add(q11, q22);
        let scaled = g.scale(q, beta);
        let factor = g.add_scalar(scaled, 1.0);
        s11 = g.mul(factor, s11);
        s22 = g.mul(factor, s22);
        s12 = g.mul(factor, s12);
    }
    [s11, s22, s12]
}

/// σ:ε with the elastic strain: σ₁₁ε₁₁ + σ₂₂ε₂₂ + 2σ₁₂ε₁₂, an (N, 1) node.
fn stress_strain_density(
    g: &mut Graph,
    mat: &Material,
    sigma: &[NodeId; 3],
    eps: &[NodeId; 3],
    delta_t: Option<NodeId>,
) -> NodeId {
    let (e11el, e22el) = match delta_t {
        None => (eps[0], eps[1]),
        Some(dt) => {
            let th = g.scale(dt, mat.alpha_t);
            (g.sub(eps[0], th), g.sub(eps[1], th))
        }
    };
    let t1 = g.mul(sigma[0], e11el);
    let t2 = g.mul(sigma[1], e22el);
    let t3m = g.mul(sigma[2], eps[2]);
    let t3 = g.scale(t3m, 2.0);
    let s = g.add(t1, t2);
    g.add(s, t3)
}

/// Accumulates mean-squared residuals across point groups of different
/// sizes into a single correctly weighted mean.
struct MseAcc {
    sq_sum: Option<NodeId>,
    count: usize,
}

impl MseAcc {
    fn new() -> MseAcc {
        MseAcc {
            sq_sum: None,
            count: 0,
        }
    }

    fn push(&mut self, g: &mut Graph, residual: NodeId) {
        let n = g.value(residual).len();
        if n == 0 {
            return;
        }
        let sq = g.square(residual);
        let s = g.sum(sq);
        self.sq_sum = Some(match self.sq_sum {
            Some(acc) => g.add(acc, s),
            None => s,
        });
        self.count += n;
    }

    fn finish(self, g: &mut Graph) -> NodeId {
        match self.sq_sum {
            Some(s) => g.scale(s, 1.0 / self.count as f64),
            None => g.leaf_scalar(0.0),
        }
    }
}

fn weighted_sum(g: &mut Graph, parts: &[(f64, NodeId)]) -> NodeId {
    let mut acc: Option<NodeId> = None;
    for &(w, id) in parts {
        let scaled = g.scale(id, w);
        acc = Some(match acc {
            Some(a) => g.add(a, scaled),
            None => scaled,
        });
    }
    acc.unwrap_or_else(|| g.leaf_scalar(0.0))
}

/// A traction-loaded boundary stretch: quadrature points, weights
/// (lengths), and the prescribed traction at each point.
#[derive(Debug, Clone)]
pub struct BoundaryLoad {
    pub x: Array2<f64>,
    pub weights: Array2<f64>,
    pub traction: Array2<f64>,
    pub stamp: StampedBasis,
    pub hard: Option<HardBcTables>,
}

/// A boundary stretch whose load is unknown: the work integral uses the
/// model's own constitutive traction there (the only closure available
/// when the applied force is what is being inferred).
#[derive(Debug, Clone)]
pub struct SelfWork {
    pub x: Array2<f64>,
    pub weights: Array2<f64>,
    /// Outward unit normals, one row per point.
    pub normals: Array2<f64>,
    pub stamp: StampedBasis,
    pub hard: Option<HardBcTables>,
}

/// Prescribed-displacement samples enforced by penalty.
#[derive(Debug, Clone)]
pub struct DirichletTerm {
    pub x: Array2<f64>,
    pub stamp: StampedBasis,
    pub hard: Option<HardBcTables>,
    pub values: Array2<f64>,
}

/// Measurement misfit data, stamped at the observation points.
#[derive(Debug, Clone)]
pub struct DataTerm {
    pub kind: ObsKind,
    pub x: Array2<f64>,
    pub stamp: StampedBasis,
    pub hard: Option<HardBcTables>,
    pub values: Array2<f64>,
}

/// Everything the variational loss needs, precomputed at fixed points.
#[derive(Debug, Clone)]
pub struct WeakFormData {
    /// Interior quadrature points, their weights, and basis stamps.
    pub x: Array2<f64>,
    pub weights: Array2<f64>,
    pub stamp: StampedBasis,
    pub hard: Option<HardBcTables>,
    pub loads: Vec<BoundaryLoad>,
    pub self_work: Vec<SelfWork>,
    pub dirichlet: Vec<DirichletTerm>,
    pub data: Option<DataTerm>,
    /// Temperature change at the interior points.
    pub delta_t: Option<Array2<f64>>,
}

fn take_rows(a: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    a.select(Axis(0), rows)
}

impl WeakFormData {
    /// Restrict the interior quadrature to a row subset (boundary terms are
    /// kept whole — they are cheap and every step should see them). The
    /// subset's weights are scaled by full/subset count so the weighted sum
    /// stays an unbiased estimate of the full integral; without this a
    /// minibatch would shrink the internal energy against the intact
    /// external work and the minimizer would inflate accordingly.
    pub fn interior_subset(&self, rows: &[usize]) -> WeakFormData {
        let scale = self.x.nrows() as f64 / rows.len() as f64;
        WeakFormData {
            x: take_rows(&self.x, rows),
            weights: take_rows(&self.weights, rows) * scale,
            stamp: self.stamp.take_rows(rows),
            hard: self.hard.as_ref().map(|h| h.take_rows(rows)),
            loads: self.loads.clone(),
            self_work: self.self_work.clone(),
            dirichlet: self.dirichlet.clone(),
            data: self.data.clone(),
            delta_t: self.delta_t.as_ref().map(|d| take_rows(d, rows)),
        }
    }

    pub fn n_interior(&self) -> usize {
        self.x.nrows()
    }
}

/// Mean-squared misfit of a measurement set against the model's
/// displacement or strain at the observation points.
fn data_mse(g: &mut Graph, model: &Model, tape: &ModelTape, term: &DataTerm) -> NodeId {
    match term.kind {
        ObsKind::Displacement => {
            let eval =
                displacement(g, model, tape, &term.x, &term.stamp, term.hard.as_ref(), false);
            let obs = g.leaf(term.values.clone());
            let r = g.sub(eval.u, obs);
            g.mean_sq(r)
        }
        ObsKind::Strain => {
            let eval =
                displacement(g, model, tape, &term.x, &term.stamp, term.hard.as_ref(), true);
            let eps = strain_components(g, &eval.du);
            let obs = g.leaf(term.values.clone());
            let mut acc = MseAcc::new();
            for (c, &e) in eps.iter().enumerate() {
                let o = g.slice_cols(obs, c, c + 1);
                let r = g.sub(e, o);
                acc.push(g, r);
            }
            acc.finish(g)
        }
    }
}

/// Variational loss: Π = ½·Σ v σ:ε − W_ext, plus penalty terms for any
/// soft Dirichlet conditions and measurement misfits. Reported terms:
/// "internal" (the raw Σ v σ:ε), "external", "potential", "dbc", "data".
pub fn weak_form_loss(
    g: &mut Graph,
    model: &Model,
    tape: &ModelTape,
    mat: &Material,
    data: &WeakFormData,
    w: &LossWeights,
) -> LossGraph {
    // Internal energy over the interior quadrature.
    let eval = displacement(g, model, tape, &data.x, &data.stamp, data.hard.as_ref(), true);
    let eps = strain_components(g, &eval.du);
    let dt = data.delta_t.as_ref().map(|d| g.leaf(d.clone()));
    let sigma = constitutive_stress(g, mat, &eps, dt);
    let density = stress_strain_density(g, mat, &sigma, &eps, dt);
    let wts = g.leaf(data.weights.clone());
    let weighted = g.mul(wts, density);
    let internal = g.sum(weighted);

    // External work from prescribed tractions.
    let mut external: Option<NodeId> = None;
    for load in &data.loads {
        let ev = displacement(g, model, tape, &load.x, &load.stamp, load.hard.as_ref(), false);
        let t = g.leaf(load.traction.clone());
        let tu = g.mul(t, ev.u);
        let dot = g.row_sum(tu);
        let bw = g.leaf(load.weights.clone());
        let contrib = g.mul(bw, dot);
        let s = g.sum(contrib);
        external = Some(match external {
            Some(acc) => g.add(acc, s),
            None => s,
        });
    }
    // Work terms closed with the model's own traction where the load is
    // unknown (inverse problems). This leaves the potential unbounded
    // below along the load direction — detected and reported as divergence
    // by the training loop rather than hidden here.
    for sw in &data.self_work {
        let ev = displacement(g, model, tape, &sw.x, &sw.stamp, sw.hard.as_ref(), true);
        let eps_b = strain_components(g, &ev.du);
        let sig_b = constitutive_stress(g, mat, &eps_b, None);
        let n1 = {
            let n = g.leaf(sw.normals.clone());
            g.slice_cols(n, 0, 1)
        };
        let n2 = {
            let n = g.leaf(sw.normals.clone());
            g.slice_cols(n, 1, 2)
        };
        let t1 = {
            let a = g.mul(sig_b[0], n1);
            let b = g.mul(sig_b[2], n2);
            g.add(a, b)
        };
        let t2 = {
            let a = g.mul(sig_b[2], n1);
            let b = g.mul(sig_b[1], n2);
            g.add(a, b)
        };
        let u1 = g.slice_cols(ev.u, 0, 1);
        let u2 = g.slice_cols(ev.u, 1, 2);
        let p1 = g.mul(t1, u1);
        let p2 = g.mul(t2, u2);
        let dot = g.add(p1, p2);
        let bw = g.leaf(sw.weights.clone());
        let contrib = g.mul(bw, dot);
        let s = g.sum(contrib);
        external = Some(match external {
            Some(acc) => g.add(acc, s),
            None => s,
        });
    }
    let external = external.unwrap_or_else(|| g.leaf_scalar(0.0));

    let half_internal = g.scale(internal, 0.5);
    let potential = g.sub(half_internal, external);

    // Penalties.
    let mut dbc_acc = MseAcc::new();
    for d in &data.dirichlet {
        let ev = displacement(g, model, tape, &d.x, &d.stamp, d.hard.as_ref(), false);
        let target = g.leaf(d.values.clone());
        let r = g.sub(ev.u, target);
        dbc_acc.push(g, r);
    }
    let dbc = dbc_acc.finish(g);
    let data_term = match &data.data {
        Some(term) => data_mse(g, model, tape, term),
        None => g.leaf_scalar(0.0),
    };

    let penalties = weighted_sum(g, &[(w.dbc, dbc), (w.data, data_term)]);
    let total = g.add(potential, penalties);
    LossGraph {
        total,
        terms: vec![
            ("internal", internal),
            ("external", external),
            ("potential", potential),
            ("dbc", dbc),
            ("data", data_term),
        ],
    }
}

/// A traction-prescribed boundary stretch for the strong form: the
/// factored stress contracted with the normal must match the load.
#[derive(Debug, Clone)]
pub struct NeumannTerm {
    pub x: Array2<f64>,
    pub normals: Array2<f64>,
    pub traction: Array2<f64>,
    pub stamp: StampedBasis,
}

/// Everything the strong-form loss needs.
#[derive(Debug, Clone)]
pub struct StrongFormData {
    /// Interior residual points and stamps.
    pub x: Array2<f64>,
    pub stamp: StampedBasis,
    pub hard: Option<HardBcTables>,
    pub neumann: Vec<NeumannTerm>,
    pub dirichlet: Vec<DirichletTerm>,
    pub data: Option<DataTerm>,
    pub delta_t: Option<Array2<f64>>,
}

impl StrongFormData {
    pub fn interior_subset(&self, rows: &[usize]) -> StrongFormData {
        StrongFormData {
            x: take_rows(&self.x, rows),
            stamp: self.stamp.take_rows(rows),
            hard: self.hard.as_ref().map(|h| h.take_rows(rows)),
            neumann: self.neumann.clone(),
            dirichlet: self.dirichlet.clone(),
            data: self.data.clone(),
            delta_t: self.delta_t.as_ref().map(|d| take_rows(d, rows)),
        }
    }

    pub fn n_interior(&self) -> usize {
        self.x.nrows()
    }
}

/// Strong-form residual loss: equilibrium of the factored stress
/// ("pde"), consistency between that stress and the constitutive stress
/// of the displacement field ("constitutive", all four tensor slots so
/// symmetry is driven in too), traction conditions ("nbc"), penalty
/// Dirichlet conditions ("dbc"), and measurement misfit ("data").
pub fn strong_form_loss(
    g: &mut Graph,
    model: &Model,
    tape: &ModelTape,
    mat: &Material,
    data: &StrongFormData,
    w: &LossWeights,
) -> LossGraph {
    // Equilibrium: div σ = 0 through the factorization.
    let div = stress_divergence(g, model, tape, &data.x, &data.stamp);
    let mut pde_acc = MseAcc::new();
    for &d in &div {
        pde_acc.push(g, d);
    }
    let pde = pde_acc.finish(g);

    // Consistency: factored stress vs constitutive stress of u.
    let sigma_pred = predicted_stress(g, model, tape, &data.x, &data.stamp);
    let eval = displacement(g, model, tape, &data.x, &data.stamp, data.hard.as_ref(), true);
    let eps = strain_components(g, &eval.du);
    let dt = data.delta_t.as_ref().map(|d| g.leaf(d.clone()));
    let sigma_c = constitutive_stress(g, mat, &eps, dt);
    let mut c_acc = MseAcc::new();
    let target = [[sigma_c[0], sigma_c[2]], [sigma_c[2], sigma_c[1]]];
    for i in 0..2 {
        for j in 0..2 {
            let r = g.sub(sigma_pred[i][j], target[i][j]);
            c_acc.push(g, r);
        }
    }
    let constitutive = c_acc.finish(g);

    // Boundary conditions.
    let mut nbc_acc = MseAcc::new();
    for term in &data.neumann {
        let sig = predicted_stress(g, model, tape, &term.x, &term.stamp);
        let n = g.leaf(term.normals.clone());
        let n1 = g.slice_cols(n, 0, 1);
        let n2 = g.slice_cols(n, 1, 2);
        let tr = g.leaf(term.traction.clone());
        for i in 0..2 {
            let a = g.mul(sig[i][0], n1);
            let b = g.mul(sig[i][1], n2);
            let t = g.add(a, b);
            let want = g.slice_cols(tr, i, i + 1);
            let r = g.sub(t, want);
            nbc_acc.push(g, r);
        }
    }
    let nbc = nbc_acc.finish(g);

    let mut dbc_acc = MseAcc::new();
    for d in &data.dirichlet {
        let ev = displacement(g, model, tape, &d.x, &d.stamp, d.hard.as_ref(), false);
        let target = g.leaf(d.values.clone());
        let r = g.sub(ev.u, target);
        dbc_acc.push(g, r);
    }
    let dbc = dbc_acc.finish(g);

    let data_term = match &data.data {
        Some(term) => data_mse(g, model, tape, term),
        None => g.leaf_scalar(0.0),
    };

    let total = weighted_sum(
        g,
        &[
            (w.data, data_term),
            (w.dbc, dbc),
            (w.nbc, nbc),
            (w.pde, pde),
            (w.constitutive, constitutive),
        ],
    );
    LossGraph {
        total,
        terms: vec![
            ("data", data_term),
            ("dbc", dbc),
            ("nbc", nbc),
            ("pde", pde),
            ("constitutive", constitutive),
        ],
    }
}

/// A batch of space-time samples with basis stamps at the spatial part.
#[derive(Debug, Clone)]
pub struct SpaceTimeSet {
    pub x: Array2<f64>,
    pub t: Array2<f64>,
    pub stamp: StampedBasis,
}

impl SpaceTimeSet {
    fn take_rows(&self, rows: &[usize]) -> SpaceTimeSet {
        SpaceTimeSet {
            x: take_rows(&self.x, rows),
            t: take_rows(&self.t, rows),
            stamp: self.stamp.take_rows(rows),
        }
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }
}

/// Everything the 1D wave loss needs.
#[derive(Debug, Clone)]
pub struct Dynamic1dData {
    pub interior: SpaceTimeSet,
    /// Driven-end samples and the prescribed displacement there.
    pub drive: SpaceTimeSet,
    pub drive_values: Array2<f64>,
    /// Initial line t = 0 (u and u̇ both start at rest).
    pub init: SpaceTimeSet,
    /// Free-end samples for models that do not satisfy ∂u/∂x = 0 there by
    /// construction (plain coordinate networks).
    pub free: Option<SpaceTimeSet>,
}

impl Dynamic1dData {
    pub fn interior_subset(&self, rows: &[usize]) -> Dynamic1dData {
        Dynamic1dData {
            interior: self.interior.take_rows(rows),
            drive: self.drive.clone(),
            drive_values: self.drive_values.clone(),
            init: self.init.clone(),
            free: self.free.clone(),
        }
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }
}

/// 1D elastodynamic residual loss: ρü + cu̇ − Cu″ at interior samples
/// ("pde"), the driven-end displacement ("dbc"), rest initial conditions
/// ("ic"), and optionally the free-end strain ("nbc").
pub fn dynamic_1d_loss(
    g: &mut Graph,
    model: &Model,
    tape: &ModelTape,
    mat: &Material,
    data: &Dynamic1dData,
    w: &LossWeights,
) -> LossGraph {
    let ev = displacement_1d_dynamic(
        g,
        model,
        tape,
        &data.interior.x,
        &data.interior.stamp,
        &data.interior.t,
    );
    let inertia = g.scale(ev.u_tt, mat.rho);
    let damping = g.scale(ev.u_t, mat.damping);
    let restoring = g.scale(ev.u_xx, -mat.stiffness);
    let s = g.add(inertia, damping);
    let residual = g.add(s, restoring);
    let pde = g.mean_sq(residual);

    let ev_d = displacement_1d_dynamic(g, model, tape, &data.drive.x, &data.drive.stamp, &data.drive.t);
    let want = g.leaf(data.drive_values.clone());
    let r_d = g.sub(ev_d.u, want);
    let dbc = g.mean_sq(r_d);

    let ev_0 = displacement_1d_dynamic(g, model, tape, &data.init.x, &data.init.stamp, &data.init.t);
    let mut ic_acc = MseAcc::new();
    ic_acc.push(g, ev_0.u);
    ic_acc.push(g, ev_0.u_t);
    let ic = ic_acc.finish(g);

    let nbc = match &data.free {
        Some(set) => {
            let ev_f = displacement_1d_dynamic(g, model, tape, &set.x, &set.stamp, &set.t);
            g.mean_sq(ev_f.u_x)
        }
        None => g.leaf_scalar(0.0),
    };

    let total = weighted_sum(
        g,
        &[(w.pde, pde), (w.dbc, dbc), (w.ic, ic), (w.nbc, nbc)],
    );
    LossGraph {
        total,
        terms: vec![("pde", pde), ("dbc", dbc), ("ic", ic), ("nbc", nbc)],
    }
}
