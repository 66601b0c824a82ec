//! Coordinate-network baselines: the conventional formulation in which
//! the networks see raw coordinates instead of spectral features. Both
//! reuse the regular evaluation machinery — the static one by
//! substituting the identity features φ_k = x_k (which collapses the
//! stress factorization to the network output itself), the dynamic one by
//! dropping the feature channels entirely.

use ndarray::Array2;

use crate::autodiff::net::Activation;
use crate::encoder::StampedBasis;
use crate::error::Result;
use crate::model::{build_model, Model, ModelSpec};

/// Feature tables of the identity functions φ_k = x_k. With these,
/// σ_ij = Σ_k p_ik ∂_j φ_k = p_ij and the factored divergence reduces to
/// the coordinate divergence of the network output.
pub fn coordinate_stamp(x: &Array2<f64>) -> StampedBasis {
    let n = x.nrows();
    let mut dphi = [Array2::zeros((n, 2)), Array2::zeros((n, 2))];
    for r in 0..n {
        dphi[0][(r, 0)] = 1.0;
        dphi[1][(r, 1)] = 1.0;
    }
    StampedBasis {
        phi: x.clone(),
        dphi,
        lap: Array2::zeros((n, 2)),
    }
}

/// Tables with zero feature columns, for models whose inputs are
/// coordinates (and possibly time) alone.
pub fn empty_stamp(n: usize) -> StampedBasis {
    StampedBasis {
        phi: Array2::zeros((n, 0)),
        dphi: [Array2::zeros((n, 0)), Array2::zeros((n, 0))],
        lap: Array2::zeros((n, 0)),
    }
}

/// Conventional static model: u = NN_u(x) and σ read verbatim from
/// NN_σ(x). Evaluate its stress with [`coordinate_stamp`] tables.
pub fn plain_static(
    u_hidden: &[usize],
    sigma_hidden: &[usize],
    activation: Activation,
    seed: u64,
) -> Result<Model> {
    let spec = ModelSpec {
        dim: 2,
        n_u: 0,
        n_sigma: 2,
        include_x: true,
        include_t: false,
        u_hidden: u_hidden.to_vec(),
        sigma_hidden: sigma_hidden.to_vec(),
        activation,
    };
    build_model(spec, vec![1.0, 1.0], seed)
}

/// Conventional space-time model u = NN(x, t) for the 1D bar. Evaluate it
/// with [`empty_stamp`] tables.
pub fn plain_dynamic(hidden: &[usize], activation: Activation, seed: u64) -> Result<Model> {
    let spec = ModelSpec {
        dim: 1,
        n_u: 0,
        n_sigma: 0,
        include_x: true,
        include_t: true,
        u_hidden: hidden.to_vec(),
        sigma_hidden: Vec::new(),
        activation,
    };
    build_model(spec, Vec::new(), seed)
}
