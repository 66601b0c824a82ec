//! Dense feed-forward networks on the tape: forward passes, exact input
//! Jacobians, and second-order Taylor (jet) propagation.
//!
//! The Jacobian and jet computations are themselves built out of tape
//! primitives — the activation derivatives are composed from `tanh`, `sin`,
//! `erf`, `exp` nodes — so losses containing input derivatives of the
//! network are differentiated with respect to the parameters by the same
//! single reverse pass as any other loss.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, NodeId};
use super::params::{ParamSet, Staged};

/// Frequency of the sinusoidal activation (applied in every layer; the
/// initializer compensates for it in the hidden layers).
pub const SINE_OMEGA: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Gelu,
    /// sin(ω·z) with ω = [`SINE_OMEGA`], for spectral-bias-free fits.
    Sine,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Gelu => "gelu",
            Activation::Sine => "sine",
        }
    }

    pub fn parse(s: &str) -> Option<Activation> {
        Some(match s {
            "tanh" => Activation::Tanh,
            "gelu" => Activation::Gelu,
            "sine" => Activation::Sine,
            _ => return None,
        })
    }
}

/// Layer widths `[input, hidden…, output]` plus the activation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub layers: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(layers: Vec<usize>, activation: Activation) -> MlpSpec {
        assert!(layers.len() >= 2, "a network needs input and output sizes");
        assert!(layers.iter().all(|&w| w > 0), "zero-width layer");
        MlpSpec { layers, activation }
    }

    pub fn n_in(&self) -> usize {
        self.layers[0]
    }

    pub fn n_out(&self) -> usize {
        *self.layers.last().unwrap()
    }

    fn n_affine(&self) -> usize {
        self.layers.len() - 1
    }

    /// Canonical parameter names under a prefix: `{p}w0, {p}b0, {p}w1, …`
    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        (0..self.n_affine())
            .flat_map(|i| [format!("{prefix}w{i}"), format!("{prefix}b{i}")])
            .collect()
    }

    /// Fresh parameters: Xavier-uniform for saturating activations, the
    /// sine-net scheme (first layer U(−1/n, 1/n), hidden scaled by 1/ω) for
    /// `Sine`. Biases start at U(±1/√fan_in).
    pub fn init(&self, prefix: &str, seed: u64, params: &mut ParamSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..self.n_affine() {
            let (fan_in, fan_out) = (self.layers[i], self.layers[i + 1]);
            let w_bound = match self.activation {
                Activation::Sine if i == 0 => 1.0 / fan_in as f64,
                Activation::Sine => (6.0 / fan_in as f64).sqrt() / SINE_OMEGA,
                _ => (6.0 / (fan_in + fan_out) as f64).sqrt(),
            };
            let w = Array2::from_shape_fn((fan_in, fan_out), |_| {
                rng.gen_range(-w_bound..w_bound)
            });
            let b_bound = 1.0 / (fan_in as f64).sqrt();
            let b = Array2::from_shape_fn((1, fan_out), |_| rng.gen_range(-b_bound..b_bound));
            params.insert(&format!("{prefix}w{i}"), w);
            params.insert(&format!("{prefix}b{i}"), b);
        }
    }
}

/// Staged parameter node ids for one network.
#[derive(Debug, Clone)]
pub struct MlpTape {
    pub spec: MlpSpec,
    pub weights: Vec<NodeId>,
    pub biases: Vec<NodeId>,
}

/// Look up a network's staged parameter leaves by prefix.
pub fn stage_mlp(
    spec: &MlpSpec,
    params: &ParamSet,
    staged: &Staged,
    prefix: &str,
) -> MlpTape {
    let weights = (0..spec.n_affine())
        .map(|i| staged.id(params, &format!("{prefix}w{i}")))
        .collect();
    let biases = (0..spec.n_affine())
        .map(|i| staged.id(params, &format!("{prefix}b{i}")))
        .collect();
    MlpTape {
        spec: spec.clone(),
        weights,
        biases,
    }
}

/// Pre-activations of all hidden layers plus the linear output.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub pre: Vec<NodeId>,
    pub out: NodeId,
}

fn activate(g: &mut Graph, act: Activation, z: NodeId) -> NodeId {
    match act {
        Activation::Tanh => g.tanh(z),
        Activation::Sine => g.sin_w(z, SINE_OMEGA),
        Activation::Gelu => {
            let cdf = gauss_cdf(g, z);
            g.mul(z, cdf)
        }
    }
}

fn g_scale_half_sqrt2(g: &mut Graph, z: NodeId) -> NodeId {
    g.scale(z, std::f64::consts::FRAC_1_SQRT_2)
}

/// First derivative of the activation, as a function of the pre-activation.
fn activate_prime(g: &mut Graph, act: Activation, z: NodeId) -> NodeId {
    match act {
        Activation::Tanh => {
            let y = g.tanh(z);
            let y2 = g.square(y);
            let neg = g.scale(y2, -1.0);
            g.add_scalar(neg, 1.0)
        }
        Activation::Sine => {
            let c = g.cos_w(z, SINE_OMEGA);
            g.scale(c, SINE_OMEGA)
        }
        Activation::Gelu => {
            let cdf = gauss_cdf(g, z);
            let pdf = gauss_pdf(g, z);
            let zp = g.mul(z, pdf);
            g.add(cdf, zp)
        }
    }
}

/// Second derivative of the activation.
fn activate_second(g: &mut Graph, act: Activation, z: NodeId) -> NodeId {
    match act {
        Activation::Tanh => {
            // −2 y (1 − y²)
            let y = g.tanh(z);
            let y2 = g.square(y);
            let neg = g.scale(y2, -1.0);
            let omy2 = g.add_scalar(neg, 1.0);
            let prod = g.mul(y, omy2);
            g.scale(prod, -2.0)
        }
        Activation::Sine => {
            let s = g.sin_w(z, SINE_OMEGA);
            g.scale(s, -SINE_OMEGA * SINE_OMEGA)
        }
        Activation::Gelu => {
            // φ(z)·(2 − z²)
            let pdf = gauss_pdf(g, z);
            let z2 = g.square(z);
            let neg = g.scale(z2, -1.0);
            let two_minus = g.add_scalar(neg, 2.0);
            g.mul(pdf, two_minus)
        }
    }
}

fn gauss_cdf(g: &mut Graph, z: NodeId) -> NodeId {
    let scaled = g_scale_half_sqrt2(g, z);
    let e = g.erf(scaled);
    let shifted = g.add_scalar(e, 1.0);
    g.scale(shifted, 0.5)
}

fn gauss_pdf(g: &mut Graph, z: NodeId) -> NodeId {
    let z2 = g.square(z);
    let neg = g.scale(z2, -0.5);
    let e = g.exp(neg);
    g.scale(e, 1.0 / (2.0 * std::f64::consts::PI).sqrt())
}

/// Run the network on a batch (rows are samples).
pub fn apply(g: &mut Graph, net: &MlpTape, x: NodeId) -> ForwardTrace {
    let n = net.spec.n_affine();
    let mut pre = Vec::with_capacity(n);
    let mut a = x;
    for i in 0..n {
        let zw = g.matmul(a, net.weights[i]);
        let z = g.add(zw, net.biases[i]);
        pre.push(z);
        a = if i + 1 < n {
            activate(g, net.spec.activation, z)
        } else {
            z
        };
    }
    ForwardTrace { pre, out: a }
}

/// Exact Jacobian column ∂out/∂x_c for every sample: an (N, n_out) node.
/// Built from the trace's pre-activations, so call [`apply`] first.
pub fn input_jacobian(g: &mut Graph, net: &MlpTape, trace: &ForwardTrace, channel: usize) -> NodeId {
    let n = net.spec.n_affine();
    assert!(channel < net.spec.n_in(), "input channel out of range");
    // ∂z₀/∂x_c is row c of the first weight matrix, broadcast over samples.
    let mut j = g.slice_rows(net.weights[0], channel, channel + 1);
    for i in 0..n - 1 {
        let dp = activate_prime(g, net.spec.activation, trace.pre[i]);
        j = g.mul(dp, j);
        j = g.matmul(j, net.weights[i + 1]);
    }
    j
}

/// Second-order Taylor propagation along an input curve
/// x(ε) = x₀ + ε·t₁ + ε²·t₂.
///
/// Returns nodes `(f₀, f₁, f₂)` with f(x(ε)) = f₀ + f₁ε + f₂ε² + O(ε³):
/// f₁ is the first derivative along the curve and 2·f₂ the second. Seeding
/// `t₁ = c′(x)`, `t₂ = ½c″(x)` for a coordinate curve c therefore yields
/// the full chain-ruled first and second derivatives in one pass.
pub fn jet2(
    g: &mut Graph,
    net: &MlpTape,
    x0: NodeId,
    t1: NodeId,
    t2: NodeId,
) -> (NodeId, NodeId, NodeId) {
    let n = net.spec.n_affine();
    let (mut a0, mut a1, mut a2) = (x0, t1, t2);
    for i in 0..n {
        let zw = g.matmul(a0, net.weights[i]);
        let z0 = g.add(zw, net.biases[i]);
        let z1 = g.matmul(a1, net.weights[i]);
        let z2 = g.matmul(a2, net.weights[i]);
        if i + 1 < n {
            let act = net.spec.activation;
            let dp = activate_prime(g, act, z0);
            let ddp = activate_second(g, act, z0);
            a0 = activate(g, act, z0);
            a1 = g.mul(dp, z1);
            // a₂ = σ′(z₀)·z₂ + ½σ″(z₀)·z₁²
            let lin = g.mul(dp, z2);
            let z1sq = g.square(z1);
            let curv_full = g.mul(ddp, z1sq);
            let curv = g.scale(curv_full, 0.5);
            a2 = g.add(lin, curv);
        } else {
            a0 = z0;
            a1 = z1;
            a2 = z2;
        }
    }
    (a0, a1, a2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::params::{grad_flat, stage};
    use approx::assert_relative_eq;
    use ndarray::array;

    fn rand_input(seed: u64, rows: usize, cols: usize) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
    }

    fn forward_values(spec: &MlpSpec, params: &ParamSet, x: &Array2<f64>) -> Array2<f64> {
        let mut g = Graph::new();
        let staged = stage(&mut g, params);
        let net = stage_mlp(spec, params, &staged, "n.");
        let xl = g.leaf(x.clone());
        let trace = apply(&mut g, &net, xl);
        g.value(trace.out).clone()
    }

    #[test]
    fn tiny_tanh_forward_by_hand() {
        let spec = MlpSpec::new(vec![1, 2, 1], Activation::Tanh);
        let mut params = ParamSet::new();
        params.insert("n.w0", array![[0.5, -1.0]]);
        params.insert("n.b0", array![[0.1, 0.2]]);
        params.insert("n.w1", array![[2.0], [3.0]]);
        params.insert("n.b1", array![[-0.3]]);
        let out = forward_values(&spec, &params, &array![[0.4]]);
        let h = [(0.5f64 * 0.4 + 0.1).tanh(), (-1.0f64 * 0.4 + 0.2).tanh()];
        let want = 2.0 * h[0] + 3.0 * h[1] - 0.3;
        assert_relative_eq!(out[(0, 0)], want, epsilon = 1e-15);
    }

    #[test]
    fn jacobian_matches_differences_for_every_activation() {
        for (seed, act) in [(1, Activation::Tanh), (2, Activation::Gelu), (3, Activation::Sine)] {
            let spec = MlpSpec::new(vec![3, 8, 8, 2], act);
            let mut params = ParamSet::new();
            spec.init("n.", seed, &mut params);
            let x0 = rand_input(seed + 10, 4, 3);
            for channel in 0..3 {
                let mut g = Graph::new();
                let staged = stage(&mut g, &params);
                let net = stage_mlp(&spec, &params, &staged, "n.");
                let xl = g.leaf(x0.clone());
                let trace = apply(&mut g, &net, xl);
                let jac = input_jacobian(&mut g, &net, &trace, channel);
                let h = 1e-6;
                let mut xp = x0.clone();
                let mut xm = x0.clone();
                for r in 0..x0.nrows() {
                    xp[(r, channel)] += h;
                    xm[(r, channel)] -= h;
                }
                let fp = forward_values(&spec, &params, &xp);
                let fm = forward_values(&spec, &params, &xm);
                let fd = (&fp - &fm) / (2.0 * h);
                for (got, want) in g.value(jac).iter().zip(fd.iter()) {
                    // The sine net has O(ω²)-sized second derivatives, so
                    // give its difference quotient more slack.
                    let tol = if act == Activation::Sine { 1e-4 } else { 1e-6 };
                    assert_relative_eq!(got, want, epsilon = tol, max_relative = tol);
                }
            }
        }
    }

    #[test]
    fn jacobian_is_differentiable_in_parameters() {
        let spec = MlpSpec::new(vec![2, 6, 1], Activation::Gelu);
        let mut params = ParamSet::new();
        spec.init("n.", 5, &mut params);
        let x0 = rand_input(55, 3, 2);
        let loss_of = |p: &ParamSet| -> f64 {
            let mut g = Graph::new();
            let staged = stage(&mut g, p);
            let net = stage_mlp(&spec, p, &staged, "n.");
            let xl = g.leaf(x0.clone());
            let trace = apply(&mut g, &net, xl);
            let jac = input_jacobian(&mut g, &net, &trace, 0);
            let l = g.mean_sq(jac);
            g.scalar(l)
        };
        // Analytic gradient through the Jacobian-bearing loss…
        let mut g = Graph::new();
        let staged = stage(&mut g, &params);
        let net = stage_mlp(&spec, &params, &staged, "n.");
        let xl = g.leaf(x0.clone());
        let trace = apply(&mut g, &net, xl);
        let jac = input_jacobian(&mut g, &net, &trace, 0);
        let loss = g.mean_sq(jac);
        let adj = g.backward(loss);
        let grad = grad_flat(&params, &staged, &adj);
        // …against central differences in a few random parameter slots.
        let flat = params.to_flat();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..12 {
            let slot = rng.gen_range(0..flat.len());
            let h = 1e-5;
            let mut pp = params.clone();
            let mut fp = flat.clone();
            fp[slot] += h;
            pp.assign_flat(&fp);
            let up = loss_of(&pp);
            fp[slot] -= 2.0 * h;
            pp.assign_flat(&fp);
            let dn = loss_of(&pp);
            let fd = (up - dn) / (2.0 * h);
            assert_relative_eq!(grad[slot], fd, epsilon = 1e-7, max_relative = 1e-5);
        }
    }

    #[test]
    fn jet_matches_curve_differences() {
        for (seed, act) in [(21, Activation::Tanh), (22, Activation::Gelu), (23, Activation::Sine)] {
            let spec = MlpSpec::new(vec![2, 6, 6, 1], act);
            let mut params = ParamSet::new();
            spec.init("n.", seed, &mut params);
            let x0 = rand_input(seed + 100, 3, 2);
            let t1 = rand_input(seed + 200, 3, 2);
            let t2 = rand_input(seed + 300, 3, 2);
            let mut g = Graph::new();
            let staged = stage(&mut g, &params);
            let net = stage_mlp(&spec, &params, &staged, "n.");
            let (x0l, t1l, t2l) = (g.leaf(x0.clone()), g.leaf(t1.clone()), g.leaf(t2.clone()));
            let (f0, f1, f2) = jet2(&mut g, &net, x0l, t1l, t2l);
            // Evaluate the network along the curve with plain forwards.
            let curve = |eps: f64| -> Array2<f64> {
                let x = &x0 + &(&t1 * eps) + &(&t2 * (eps * eps));
                forward_values(&spec, &params, &x)
            };
            let h = if act == Activation::Sine { 1e-5 } else { 1e-4 };
            let (cp, c0, cm) = (curve(h), curve(0.0), curve(-h));
            let fd1 = (&cp - &cm) / (2.0 * h);
            let fd2 = (&cp - &(2.0 * &c0) + &cm) / (h * h);
            for (got, want) in g.value(f0).iter().zip(c0.iter()) {
                assert_relative_eq!(got, want, epsilon = 1e-14);
            }
            let tol = if act == Activation::Sine { 1e-3 } else { 1e-6 };
            for (got, want) in g.value(f1).iter().zip(fd1.iter()) {
                assert_relative_eq!(got, want, epsilon = tol, max_relative = tol);
            }
            for (got, want) in g.value(f2).iter().zip(fd2.iter()) {
                assert_relative_eq!(2.0 * got, *want, epsilon = 50.0 * tol, max_relative = 50.0 * tol);
            }
        }
    }

    #[test]
    fn jet_first_order_agrees_with_jacobian() {
        let spec = MlpSpec::new(vec![3, 5, 2], Activation::Tanh);
        let mut params = ParamSet::new();
        spec.init("n.", 31, &mut params);
        let x0 = rand_input(131, 4, 3);
        let mut g = Graph::new();
        let staged = stage(&mut g, &params);
        let net = stage_mlp(&spec, &params, &staged, "n.");
        let xl = g.leaf(x0.clone());
        let trace = apply(&mut g, &net, xl);
        // Directional derivative along e₁ from the Jacobian…
        let jac = input_jacobian(&mut g, &net, &trace, 1);
        // …and from a straight-line jet.
        let mut dir = Array2::zeros((4, 3));
        dir.column_mut(1).fill(1.0);
        let t1 = g.leaf(dir);
        let t2 = g.leaf(Array2::zeros((4, 3)));
        let (_, f1, _) = jet2(&mut g, &net, xl, t1, t2);
        for (a, b) in g.value(jac).iter().zip(g.value(f1).iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn init_is_seeded_and_ranged() {
        let spec = MlpSpec::new(vec![4, 16, 16, 2], Activation::Sine);
        let mut a = ParamSet::new();
        let mut b = ParamSet::new();
        let mut c = ParamSet::new();
        spec.init("n.", 42, &mut a);
        spec.init("n.", 42, &mut b);
        spec.init("n.", 43, &mut c);
        assert_eq!(a, b);
        assert_ne!(a, c);
        // First-layer range 1/fan_in, hidden shrunk by the frequency.
        assert!(a.get("n.w0").iter().all(|v| v.abs() <= 0.25));
        let hidden_bound = (6.0f64 / 16.0).sqrt() / SINE_OMEGA;
        assert!(a.get("n.w1").iter().all(|v| v.abs() <= hidden_bound));
    }

    #[test]
    fn gradients_accumulate_across_two_applications() {
        // The same staged parameters applied to two batches: the gradient
        // must equal the sum of the separate batch gradients.
        let spec = MlpSpec::new(vec![2, 4, 1], Activation::Tanh);
        let mut params = ParamSet::new();
        spec.init("n.", 77, &mut params);
        let xa = rand_input(501, 3, 2);
        let xb = rand_input(502, 5, 2);
        let grad_of = |batches: &[&Array2<f64>]| -> Vec<f64> {
            let mut g = Graph::new();
            let staged = stage(&mut g, &params);
            let net = stage_mlp(&spec, &params, &staged, "n.");
            let mut total: Option<NodeId> = None;
            for x in batches {
                let xl = g.leaf((*x).clone());
                let t = apply(&mut g, &net, xl);
                let s = g.sum(t.out);
                total = Some(match total {
                    Some(acc) => g.add(acc, s),
                    None => s,
                });
            }
            let adj = g.backward(total.unwrap());
            grad_flat(&params, &staged, &adj)
        };
        let ga = grad_of(&[&xa]);
        let gb = grad_of(&[&xb]);
        let gab = grad_of(&[&xa, &xb]);
        for ((a, b), ab) in ga.iter().zip(&gb).zip(&gab) {
            assert_relative_eq!(a + b, ab, epsilon = 1e-12);
        }
    }
}
