//! Reverse-mode automatic differentiation for small dense networks: a
//! define-by-run tape ([`graph`]), network forward/Jacobian/jet machinery
//! ([`net`]), and named parameter storage with checkpoints ([`params`]).

pub mod graph;
pub mod net;
pub mod params;

pub use graph::{Graph, NodeId};
pub use net::{
    apply, input_jacobian, jet2, stage_mlp, Activation, ForwardTrace, MlpSpec, MlpTape,
    SINE_OMEGA,
};
pub use params::{grad_flat, stage, ParamSet, Staged};
