//! Spectral geometry encodings: Laplace eigenfunctions on a mesh, their
//! recovered derivatives, and the stamped per-point tables that networks
//! consume.
//!
//! Eigenfunctions solve −Δφ = λφ with natural (zero-flux) boundary
//! conditions in the homogeneous variant; the specific variant additionally
//! clamps φ = 0 on chosen nodes (the supported/loaded parts of the
//! boundary); the hybrid variant sums the two index-wise so the encoding
//! both respects the geometry and can express boundary-driven fields.
//! Derivatives are recovered from the linear FEM fields: per-element
//! constant gradients averaged to nodes (measure-weighted), applied once for
//! ∇φ and again on ∇φ for the second derivatives.

pub mod assemble;
pub mod eigsolve;
pub mod rbf;

pub use assemble::{assemble_fem, constrain_dirichlet, MassKind, OperatorPair};
pub use eigsolve::{solve_eigen, EigenPairs, DENSE_LIMIT, RESIDUAL_TOL};
pub use rbf::{assemble_rbf, RbfMass, RbfModel};

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::mesh::{CollocationSet, Mesh};

pub const BASIS_MAGIC: &[u8] = b"finpinn-basis v1\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Homogeneous,
    Specific,
    Hybrid,
    Analytic,
    Rbf,
}

impl BasisKind {
    fn code(self) -> u8 {
        match self {
            BasisKind::Homogeneous => 0,
            BasisKind::Specific => 1,
            BasisKind::Hybrid => 2,
            BasisKind::Analytic => 3,
            BasisKind::Rbf => 4,
        }
    }

    fn from_code(c: u8) -> Result<BasisKind> {
        Ok(match c {
            0 => BasisKind::Homogeneous,
            1 => BasisKind::Specific,
            2 => BasisKind::Hybrid,
            3 => BasisKind::Analytic,
            4 => BasisKind::Rbf,
            _ => return Err(Error::Parse {
                line: 0,
                msg: format!("unknown basis kind code {c}"),
            }),
        })
    }
}

/// How to combine general and specific eigenfunctions into a hybrid basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HybridMode {
    /// Index-wise sum: φ_k = ᵍφ_k + ˢφ_k (same mode count as each part).
    #[default]
    Sum,
    /// Concatenation: all general modes followed by all specific modes.
    Concat,
}

/// Nodal eigenfunctions with recovered first and second derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    pub kind: BasisKind,
    pub mass: MassKind,
    pub dim: usize,
    /// Hash of the canonical serialization of the mesh this was built on.
    pub mesh_hash: u64,
    pub lambdas: Vec<f64>,
    /// `phi[mode][node]`, M-orthonormal for solved bases.
    pub phi: Vec<Vec<f64>>,
    /// `dphi[mode][node] = [∂₁φ, ∂₂φ]`.
    pub dphi: Vec<Vec<[f64; 2]>>,
    /// `d2phi[mode][node] = [∂₁₁φ, ∂₂₂φ, ∂₁₂φ]` (symmetrized mixed term).
    pub d2phi: Vec<Vec<[f64; 3]>>,
}

impl EigenBasis {
    pub fn n_modes(&self) -> usize {
        self.lambdas.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.phi.first().map_or(0, Vec::len)
    }

    /// Largest nodal magnitude per mode; the network input normalization.
    pub fn input_scales(&self) -> Vec<f64> {
        self.phi
            .iter()
            .map(|p| p.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .collect()
    }
}

/// Recovered first and second derivatives of a nodal field.
pub fn recover_derivatives(mesh: &Mesh, nodal: &[f64]) -> (Vec<[f64; 2]>, Vec<[f64; 3]>) {
    let grad = crate::mesh::recover_gradient(mesh, nodal);
    let gx: Vec<f64> = grad.iter().map(|g| g[0]).collect();
    let gy: Vec<f64> = grad.iter().map(|g| g[1]).collect();
    let ggx = crate::mesh::recover_gradient(mesh, &gx);
    let ggy = crate::mesh::recover_gradient(mesh, &gy);
    let second = ggx
        .iter()
        .zip(&ggy)
        .map(|(a, b)| [a[0], b[1], 0.5 * (a[1] + b[0])])
        .collect();
    (grad, second)
}

fn basis_from_pairs(
    mesh: &Mesh,
    kind: BasisKind,
    mass: MassKind,
    lambdas: Vec<f64>,
    nodal_modes: Vec<Vec<f64>>,
) -> EigenBasis {
    let mut dphi = Vec::with_capacity(nodal_modes.len());
    let mut d2phi = Vec::with_capacity(nodal_modes.len());
    for phi in &nodal_modes {
        let (d, d2) = recover_derivatives(mesh, phi);
        dphi.push(d);
        d2phi.push(d2);
    }
    EigenBasis {
        kind,
        mass,
        dim: mesh.dim,
        mesh_hash: mesh.content_hash(),
        lambdas,
        phi: nodal_modes,
        dphi,
        d2phi,
    }
}

/// First `n` nonconstant natural-boundary eigenfunctions. The zero mode is
/// solved for but excluded from the count.
pub fn homogeneous_basis(mesh: &Mesh, n: usize, mass: MassKind) -> Result<EigenBasis> {
    let op = assemble_fem(mesh, mass);
    let pairs = solve_eigen(&op, n + 1)?;
    if pairs.lambdas[0].abs() > 1e-6 * pairs.lambdas[1].abs().max(1.0) {
        return Err(Error::Numerical(format!(
            "expected a near-zero first eigenvalue, found {:.3e}",
            pairs.lambdas[0]
        )));
    }
    basis_ok(mesh, BasisKind::Homogeneous, mass, pairs, 1)
}

/// First `n` eigenfunctions clamped to zero on `constrained` nodes.
pub fn specific_basis(
    mesh: &Mesh,
    n: usize,
    mass: MassKind,
    constrained: &[usize],
) -> Result<EigenBasis> {
    if constrained.is_empty() {
        return Err(Error::Config(
            "specific basis needs at least one constrained node".into(),
        ));
    }
    let op = assemble_fem(mesh, mass);
    let reduced = constrain_dirichlet(&op, constrained)?;
    let pairs = solve_eigen(&reduced, n)?;
    let scattered: Vec<Vec<f64>> = pairs.vectors.iter().map(|v| reduced.scatter(v)).collect();
    Ok(basis_from_pairs(
        mesh,
        BasisKind::Specific,
        mass,
        pairs.lambdas,
        scattered,
    ))
}

fn basis_ok(
    mesh: &Mesh,
    kind: BasisKind,
    mass: MassKind,
    pairs: EigenPairs,
    skip: usize,
) -> Result<EigenBasis> {
    Ok(basis_from_pairs(
        mesh,
        kind,
        mass,
        pairs.lambdas[skip..].to_vec(),
        pairs.vectors[skip..].to_vec(),
    ))
}

/// Combine general and specific eigenfunctions (values and derivatives).
pub fn hybrid_basis(
    general: &EigenBasis,
    specific: &EigenBasis,
    mode: HybridMode,
) -> Result<EigenBasis> {
    if general.mesh_hash != specific.mesh_hash {
        return Err(Error::Config(
            "hybrid basis parts were computed on different meshes".into(),
        ));
    }
    match mode {
        HybridMode::Sum => {
            if general.n_modes() != specific.n_modes() {
                return Err(Error::Config(format!(
                    "index-wise hybrid needs equal mode counts, got {} and {}",
                    general.n_modes(),
                    specific.n_modes()
                )));
            }
            let n_nodes = general.n_nodes();
            let phi = general
                .phi
                .iter()
                .zip(&specific.phi)
                .map(|(g, s)| (0..n_nodes).map(|i| g[i] + s[i]).collect())
                .collect();
            let dphi = general
                .dphi
                .iter()
                .zip(&specific.dphi)
                .map(|(g, s)| {
                    (0..n_nodes)
                        .map(|i| [g[i][0] + s[i][0], g[i][1] + s[i][1]])
                        .collect()
                })
                .collect();
            let d2phi = general
                .d2phi
                .iter()
                .zip(&specific.d2phi)
                .map(|(g, s)| {
                    (0..n_nodes)
                        .map(|i| {
                            [
                                g[i][0] + s[i][0],
                                g[i][1] + s[i][1],
                                g[i][2] + s[i][2],
                            ]
                        })
                        .collect()
                })
                .collect();
            Ok(EigenBasis {
                kind: BasisKind::Hybrid,
                mass: general.mass,
                dim: general.dim,
                mesh_hash: general.mesh_hash,
                // The general problem's spectrum labels the combined modes.
                lambdas: general.lambdas.clone(),
                phi,
                dphi,
                d2phi,
            })
        }
        HybridMode::Concat => Ok(EigenBasis {
            kind: BasisKind::Hybrid,
            mass: general.mass,
            dim: general.dim,
            mesh_hash: general.mesh_hash,
            lambdas: [general.lambdas.clone(), specific.lambdas.clone()].concat(),
            phi: [general.phi.clone(), specific.phi.clone()].concat(),
            dphi: [general.dphi.clone(), specific.dphi.clone()].concat(),
            d2phi: [general.d2phi.clone(), specific.d2phi.clone()].concat(),
        }),
    }
}

/// Closed-form 1D eigenfunction families, sampled at the mesh nodes with
/// analytic derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Analytic1d {
    /// Natural both ends: φ_k = cos(kπx/L), λ_k = (kπ/L)².
    FullNeumann,
    /// Driven left end, free right end: φ_k = cos(kπ(x−L)/(2L)),
    /// λ_k = (kπ/(2L))²; odd modes vanish at x = 0, all have zero slope at
    /// x = L.
    LeftDirichlet,
}

pub fn analytic_basis_1d(mesh: &Mesh, n: usize, variant: Analytic1d) -> Result<EigenBasis> {
    if mesh.dim != 1 {
        return Err(Error::Config("analytic 1D basis needs a 1D mesh".into()));
    }
    let x0 = mesh.nodes.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
    let x1 = mesh
        .nodes
        .iter()
        .map(|p| p[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let l = x1 - x0;
    let amp = (2.0 / l).sqrt(); // unit L² norm on [0, L]
    let mut lambdas = Vec::with_capacity(n);
    let mut phi = Vec::with_capacity(n);
    let mut dphi = Vec::with_capacity(n);
    let mut d2phi = Vec::with_capacity(n);
    for k in 1..=n {
        let omega = match variant {
            Analytic1d::FullNeumann => k as f64 * std::f64::consts::PI / l,
            Analytic1d::LeftDirichlet => k as f64 * std::f64::consts::PI / (2.0 * l),
        };
        lambdas.push(omega * omega);
        let mut p = Vec::with_capacity(mesh.n_nodes());
        let mut dp = Vec::with_capacity(mesh.n_nodes());
        let mut d2p = Vec::with_capacity(mesh.n_nodes());
        for node in &mesh.nodes {
            let s = match variant {
                Analytic1d::FullNeumann => node[0] - x0,
                Analytic1d::LeftDirichlet => node[0] - x0 - l,
            };
            p.push(amp * (omega * s).cos());
            dp.push([-amp * omega * (omega * s).sin(), 0.0]);
            d2p.push([-amp * omega * omega * (omega * s).cos(), 0.0, 0.0]);
        }
        phi.push(p);
        dphi.push(dp);
        d2phi.push(d2p);
    }
    Ok(EigenBasis {
        kind: BasisKind::Analytic,
        mass: MassKind::Consistent,
        dim: 1,
        mesh_hash: mesh.content_hash(),
        lambdas,
        phi,
        dphi,
        d2phi,
    })
}

/// Per-point basis tables: values, first derivatives, and the Laplacian
/// (just ∂₁₁φ in 1D), linearly interpolated from the nodal fields. Rows are
/// points, columns are modes.
#[derive(Debug, Clone)]
pub struct StampedBasis {
    pub phi: Array2<f64>,
    pub dphi: [Array2<f64>; 2],
    pub lap: Array2<f64>,
}

impl StampedBasis {
    pub fn n_points(&self) -> usize {
        self.phi.nrows()
    }

    pub fn n_modes(&self) -> usize {
        self.phi.ncols()
    }

    /// Tables restricted to a subset of rows (for minibatching).
    pub fn take_rows(&self, rows: &[usize]) -> StampedBasis {
        let sel = |a: &Array2<f64>| a.select(ndarray::Axis(0), rows);
        StampedBasis {
            phi: sel(&self.phi),
            dphi: [sel(&self.dphi[0]), sel(&self.dphi[1])],
            lap: sel(&self.lap),
        }
    }
}

/// Interpolate basis fields at arbitrary points inside given elements.
///
/// For mesh-borne bases the gradient table is the exact derivative of the
/// interpolated values (element shape gradients applied to nodal φ), not
/// an interpolation of the smoothed nodal gradients. The distinction is
/// load-bearing: the variational loss minimizes measured strain energy
/// against real external work, and any value/derivative mismatch opens a
/// descent direction with unbounded work and no measured cost. Analytic
/// bases keep their closed-form nodal derivatives, which are exact.
pub fn stamp_points(
    basis: &EigenBasis,
    mesh: &Mesh,
    points: &[[f64; 2]],
    element_of: &[usize],
) -> Result<StampedBasis> {
    if basis.mesh_hash != mesh.content_hash() {
        return Err(Error::Config(
            "basis was computed on a different mesh than the one being stamped".into(),
        ));
    }
    let n = basis.n_modes();
    let npts = points.len();
    let mut phi = Array2::zeros((npts, n));
    let mut dx = Array2::zeros((npts, n));
    let mut dy = Array2::zeros((npts, n));
    let mut lap = Array2::zeros((npts, n));
    let consistent = basis.kind != BasisKind::Analytic;
    for (row, (&x, &e)) in points.iter().zip(element_of).enumerate() {
        let el = &mesh.elements[e];
        let shape = mesh.shape_values(e, x);
        let grads = consistent.then(|| mesh.shape_gradients(e));
        for k in 0..n {
            let mut v = 0.0;
            let mut g = [0.0; 2];
            let mut h = [0.0; 2];
            for (local, &node) in el.node_ids().iter().enumerate() {
                let w = shape[local];
                v += w * basis.phi[k][node];
                match &grads {
                    Some(gr) => {
                        g[0] += gr[local][0] * basis.phi[k][node];
                        g[1] += gr[local][1] * basis.phi[k][node];
                    }
                    None => {
                        g[0] += w * basis.dphi[k][node][0];
                        g[1] += w * basis.dphi[k][node][1];
                    }
                }
                h[0] += w * basis.d2phi[k][node][0];
                h[1] += w * basis.d2phi[k][node][1];
            }
            phi[(row, k)] = v;
            dx[(row, k)] = g[0];
            dy[(row, k)] = g[1];
            lap[(row, k)] = if mesh.dim == 1 { h[0] } else { h[0] + h[1] };
        }
    }
    Ok(StampedBasis {
        phi,
        dphi: [dx, dy],
        lap,
    })
}

/// Stamp both the interior and the boundary points of a collocation set.
pub fn stamp_collocation(
    basis: &EigenBasis,
    mesh: &Mesh,
    colloc: &CollocationSet,
) -> Result<(StampedBasis, StampedBasis)> {
    let interior = stamp_points(basis, mesh, &colloc.points, &colloc.element_of)?;
    let bpoints: Vec<[f64; 2]> = colloc.boundary.iter().map(|b| b.x).collect();
    let belems: Vec<usize> = colloc
        .boundary
        .iter()
        .map(|b| mesh.facets[b.facet].element)
        .collect();
    let boundary = stamp_points(basis, mesh, &bpoints, &belems)?;
    Ok((interior, boundary))
}

/// FNV-1a hash of a file's raw bytes. Model bundles store this for the
/// basis artifact they were trained with, so a mismatched pairing is caught
/// at load time instead of silently feeding the network a different
/// encoding.
pub fn file_hash(path: &Path) -> Result<u64> {
    let bytes = std::fs::read(path)?;
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    Ok(h)
}

/// Serialize a basis (bit-exact round trip).
pub fn save_basis(basis: &EigenBasis, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(BASIS_MAGIC)?;
    w.write_u8(basis.kind.code())?;
    w.write_u8(match basis.mass {
        MassKind::Consistent => 0,
        MassKind::Lumped => 1,
        MassKind::Identity => 2,
    })?;
    w.write_u8(basis.dim as u8)?;
    w.write_u64::<LittleEndian>(basis.mesh_hash)?;
    w.write_u32::<LittleEndian>(basis.n_modes() as u32)?;
    w.write_u32::<LittleEndian>(basis.n_nodes() as u32)?;
    for v in &basis.lambdas {
        w.write_f64::<LittleEndian>(*v)?;
    }
    for mode in &basis.phi {
        for v in mode {
            w.write_f64::<LittleEndian>(*v)?;
        }
    }
    for mode in &basis.dphi {
        for v in mode {
            w.write_f64::<LittleEndian>(v[0])?;
            w.write_f64::<LittleEndian>(v[1])?;
        }
    }
    for mode in &basis.d2phi {
        for v in mode {
            w.write_f64::<LittleEndian>(v[0])?;
            w.write_f64::<LittleEndian>(v[1])?;
            w.write_f64::<LittleEndian>(v[2])?;
        }
    }
    Ok(())
}

pub fn load_basis(path: &Path) -> Result<EigenBasis> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = vec![0u8; BASIS_MAGIC.len()];
    r.read_exact(&mut magic)?;
    if magic != BASIS_MAGIC {
        return Err(Error::Parse {
            line: 1,
            msg: "not a basis artifact (bad magic)".into(),
        });
    }
    let kind = BasisKind::from_code(r.read_u8()?)?;
    let mass = match r.read_u8()? {
        0 => MassKind::Consistent,
        1 => MassKind::Lumped,
        2 => MassKind::Identity,
        c => {
            return Err(Error::Parse {
                line: 0,
                msg: format!("unknown mass kind code {c}"),
            })
        }
    };
    let dim = r.read_u8()? as usize;
    let mesh_hash = r.read_u64::<LittleEndian>()?;
    let n_modes = r.read_u32::<LittleEndian>()? as usize;
    let n_nodes = r.read_u32::<LittleEndian>()? as usize;
    let mut lambdas = vec![0.0; n_modes];
    for v in &mut lambdas {
        *v = r.read_f64::<LittleEndian>()?;
    }
    let mut phi = vec![vec![0.0; n_nodes]; n_modes];
    for mode in &mut phi {
        for v in mode.iter_mut() {
            *v = r.read_f64::<LittleEndian>()?;
        }
    }
    let mut dphi = vec![vec![[0.0; 2]; n_nodes]; n_modes];
    for mode in &mut dphi {
        for v in mode.iter_mut() {
            v[0] = r.read_f64::<LittleEndian>()?;
            v[1] = r.read_f64::<LittleEndian>()?;
        }
    }
    let mut d2phi = vec![vec![[0.0; 3]; n_nodes]; n_modes];
    for mode in &mut d2phi {
        for v in mode.iter_mut() {
            v[0] = r.read_f64::<LittleEndian>()?;
            v[1] = r.read_f64::<LittleEndian>()?;
            v[2] = r.read_f64::<LittleEndian>()?;
        }
    }
    Ok(EigenBasis {
        kind,
        mass,
        dim,
        mesh_hash,
        lambdas,
        phi,
        dphi,
        d2phi,
    })
}
