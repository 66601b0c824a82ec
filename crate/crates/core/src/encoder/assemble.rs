//! Stiffness/mass assembly for the scalar Laplace operator on simplicial
//! meshes, with homogeneous-Dirichlet constraint handling.
//!
//! Element integrals are exact closed forms for linear shape functions. On a
//! triangle of area A with shape gradients ∇Nₐ:
//!   Kₑ[a][b] = A ∇Nₐ·∇N_b,   Mₑ = A/12 · [[2,1,1],[1,2,1],[1,1,2]]
//! and on a segment of length h:
//!   Kₑ = (1/h)[[1,−1],[−1,1]],   Mₑ = (h/6)[[2,1],[1,2]].

use crate::error::Result;
use crate::linalg::{Csr, Triplets};
use crate::mesh::Mesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MassKind {
    Consistent,
    Lumped,
    Identity,
}

impl MassKind {
    pub fn name(self) -> &'static str {
        match self {
            MassKind::Consistent => "consistent",
            MassKind::Lumped => "lumped",
            MassKind::Identity => "identity",
        }
    }
}

/// Discrete operator pair for the eigenproblem K u = λ M u, on the free
/// degrees of freedom after constraining.
#[derive(Debug, Clone)]
pub struct OperatorPair {
    pub k: Csr,
    pub m: Csr,
    /// node id → dof index, `usize::MAX` for constrained nodes.
    pub dof_map: Vec<usize>,
    /// Constrained node ids, sorted.
    pub constrained: Vec<usize>,
    pub mass: MassKind,
}

impl OperatorPair {
    pub fn n_dof(&self) -> usize {
        self.k.n
    }

    /// Scatter a dof vector back to a full nodal vector (zeros at
    /// constrained nodes).
    pub fn scatter(&self, dof_values: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.dof_map.len()];
        for (node, &dof) in self.dof_map.iter().enumerate() {
            if dof != usize::MAX {
                full[node] = dof_values[dof];
            }
        }
        full
    }
}

/// Assemble the unconstrained Laplace operator pair on a mesh.
pub fn assemble_fem(mesh: &Mesh, mass: MassKind) -> OperatorPair {
    let n = mesh.n_nodes();
    let mut kt = Triplets::new(n);
    let mut mt = Triplets::new(n);
    for (e, el) in mesh.elements.iter().enumerate() {
        let ids = el.node_ids();
        let measure = mesh.measure(e);
        let grads = mesh.shape_gradients(e);
        for (a, &na) in ids.iter().enumerate() {
            for (b, &nb) in ids.iter().enumerate() {
                let kab = measure * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]);
                kt.push(na, nb, kab);
                match mass {
                    MassKind::Consistent => {
                        let nn = ids.len() as f64; // 2 or 3
                        // ∫ Nₐ N_b = measure · (1 + δₐ_b) / (nn (nn + 1))
                        let base = measure / (nn * (nn + 1.0));
                        let mab = if a == b { 2.0 * base } else { base };
                        mt.push(na, nb, mab);
                    }
                    MassKind::Lumped => {
                        if a == b {
                            mt.push(na, na, measure / ids.len() as f64);
                        }
                    }
                    MassKind::Identity => {}
                }
            }
        }
    }
    let m = match mass {
        MassKind::Identity => Csr::identity(n),
        _ => mt.to_csr(),
    };
    OperatorPair {
        k: kt.to_csr(),
        m,
        dof_map: (0..n).collect(),
        constrained: Vec::new(),
        mass,
    }
}

/// Apply homogeneous Dirichlet constraints by row/column elimination.
pub fn constrain_dirichlet(op: &OperatorPair, nodes: &[usize]) -> Result<OperatorPair> {
    let n = op.dof_map.len();
    let mut constrained: Vec<usize> = nodes.to_vec();
    constrained.sort_unstable();
    constrained.dedup();
    let is_constrained: Vec<bool> = {
        let mut v = vec![false; n];
        for &c in &constrained {
            v[c] = true;
        }
        v
    };
    let keep: Vec<usize> = (0..n).filter(|&i| !is_constrained[i]).collect();
    let mut dof_map = vec![usize::MAX; n];
    for (dof, &node) in keep.iter().enumerate() {
        dof_map[node] = dof;
    }
    Ok(OperatorPair {
        k: op.k.submatrix(&keep),
        m: match op.mass {
            MassKind::Identity => Csr::identity(keep.len()),
            _ => op.m.submatrix(&keep),
        },
        dof_map,
        constrained,
        mass: op.mass,
    })
}
