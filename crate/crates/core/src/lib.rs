//! Finite-PINN solid mechanics toolkit: finite-element spectral encodings of
//! geometry, physics-informed network models built on them, training, and
//! classical reference solvers.

pub mod autodiff;
pub mod baseline;
pub mod encoder;
pub mod error;
pub mod expr;
pub mod fem;
pub mod linalg;
pub mod losses;
pub mod mesh;
pub mod model;
pub mod trainer;
pub mod wave;

pub use encoder::{file_hash, load_basis, save_basis, EigenBasis, StampedBasis};
pub use losses::{LossReport, LossWeights, Material, Observations};
pub use model::{build_model, load_model, save_model, HardBc, Model, ModelSpec};
pub use error::{Error, Result};
pub use mesh::{
    build_collocation, classify_boundary, load_mesh, write_mesh, BoundarySets, CollocationSet,
    Mesh, QuadRule, Role,
};
pub use trainer::{
    correlation, history_csv, load_checkpoint, nodal_l2_rel, nodal_mse, save_checkpoint, train,
    StopReason, TrainConfig, TrainOutcome, TrainState,
};
