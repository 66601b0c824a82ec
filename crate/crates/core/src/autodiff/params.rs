//! Named parameter tensors, their graph staging, and checkpoint files.
//!
//! A `ParamSet` is an ordered list of named 2D arrays. The order is the
//! canonical flattening used by the optimizer and the checkpoint format, so
//! it must be identical between runs; insertion order defines it.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use super::graph::{Graph, NodeId};
use crate::error::{Error, Result};

pub const CKPT_MAGIC: &[u8] = b"finpinn-ckpt v1\n";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    entries: Vec<(String, Array2<f64>)>,
}

impl ParamSet {
    pub fn new() -> ParamSet {
        ParamSet::default()
    }

    pub fn insert(&mut self, name: &str, value: Array2<f64>) {
        assert!(
            self.index_of(name).is_none(),
            "duplicate parameter name {name:?}"
        );
        self.entries.push((name.to_string(), value));
    }

    pub fn get(&self, name: &str) -> &Array2<f64> {
        self.index_of(name)
            .map(|i| &self.entries[i].1)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn entries(&self) -> &[(String, Array2<f64>)] {
        &self.entries
    }

    pub fn n_scalars(&self) -> usize {
        self.entries.iter().map(|(_, v)| v.len()).sum()
    }

    /// All values in canonical order, row-major within each tensor.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_scalars());
        for (_, v) in &self.entries {
            out.extend(v.iter());
        }
        out
    }

    /// Overwrite values from a canonical flat vector.
    pub fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_scalars(), "flat length mismatch");
        let mut k = 0;
        for (_, v) in &mut self.entries {
            for x in v.iter_mut() {
                *x = flat[k];
                k += 1;
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(CKPT_MAGIC)?;
        self.write_to(&mut w)
    }

    /// Serialize the entries (without the file magic) into any writer, so
    /// larger file formats can embed a parameter block.
    pub fn write_to<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        w.write_u32::<LittleEndian>(self.entries.len() as u32)?;
        for (name, v) in &self.entries {
            let bytes = name.as_bytes();
            w.write_u16::<LittleEndian>(bytes.len() as u16)?;
            w.write_all(bytes)?;
            w.write_u32::<LittleEndian>(v.nrows() as u32)?;
            w.write_u32::<LittleEndian>(v.ncols() as u32)?;
            for x in v.iter() {
                w.write_f64::<LittleEndian>(*x)?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ParamSet> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = vec![0u8; CKPT_MAGIC.len()];
        r.read_exact(&mut magic)?;
        if magic != CKPT_MAGIC {
            return Err(Error::Parse {
                line: 1,
                msg: "not a checkpoint file (bad magic)".into(),
            });
        }
        Self::read_from(&mut r)
    }

    /// Counterpart of [`ParamSet::write_to`].
    pub fn read_from<R: std::io::Read>(r: &mut R) -> Result<ParamSet> {
        let count = r.read_u32::<LittleEndian>()? as usize;
        let mut set = ParamSet::new();
        for _ in 0..count {
            let len = r.read_u16::<LittleEndian>()? as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| Error::Parse {
                line: 0,
                msg: "checkpoint parameter name is not UTF-8".into(),
            })?;
            let rows = r.read_u32::<LittleEndian>()? as usize;
            let cols = r.read_u32::<LittleEndian>()? as usize;
            let mut v = Array2::zeros((rows, cols));
            for x in v.iter_mut() {
                *x = r.read_f64::<LittleEndian>()?;
            }
            set.insert(&name, v);
        }
        Ok(set)
    }
}

/// Parameter leaves on a tape, parallel to the `ParamSet` entry order.
#[derive(Debug, Clone)]
pub struct Staged {
    pub ids: Vec<NodeId>,
}

impl Staged {
    /// Node id of a parameter by name.
    pub fn id(&self, params: &ParamSet, name: &str) -> NodeId {
        let idx = params
            .index_of(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"));
        self.ids[idx]
    }
}

/// Put every parameter on the tape as a leaf, in canonical order.
pub fn stage(g: &mut Graph, params: &ParamSet) -> Staged {
    let ids = params
        .entries()
        .iter()
        .map(|(_, v)| g.leaf(v.clone()))
        .collect();
    Staged { ids }
}

/// Gather adjoints of the staged leaves into canonical flat order, treating
/// unused parameters as zero-gradient.
pub fn grad_flat(
    params: &ParamSet,
    staged: &Staged,
    adjoints: &[Option<Array2<f64>>],
) -> Vec<f64> {
    let mut out = Vec::with_capacity(params.n_scalars());
    for ((_, v), id) in params.entries().iter().zip(&staged.ids) {
        match &adjoints[id.0] {
            Some(gr) => out.extend(gr.iter()),
            None => out.extend(std::iter::repeat(0.0).take(v.len())),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sample() -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w0", array![[0.1, -0.2], [0.3, 0.4]]);
        p.insert("b0", array![[1e-300, -0.0]]);
        p.insert("w1", array![[f64::MIN_POSITIVE], [2.5]]);
        p
    }

    #[test]
    fn flat_round_trip_preserves_order() {
        let mut p = sample();
        let flat = p.to_flat();
        assert_eq!(flat.len(), p.n_scalars());
        assert_eq!(flat[0], 0.1);
        assert_eq!(flat[4], 1e-300);
        let doubled: Vec<f64> = flat.iter().map(|v| v * 2.0).collect();
        p.assign_flat(&doubled);
        assert_eq!(p.get("w0")[(0, 1)], -0.4);
        assert_eq!(p.to_flat(), doubled);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let p = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.fpc");
        p.save(&path).unwrap();
        let q = ParamSet::load(&path).unwrap();
        assert_eq!(p, q);
        // -0.0 must survive with its sign bit.
        assert!(q.get("b0")[(0, 1)].is_sign_negative());
    }

    #[test]
    fn load_rejects_other_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk");
        std::fs::write(&path, b"here are some bytes, quite enough of them").unwrap();
        assert!(ParamSet::load(&path).is_err());
    }

    #[test]
    #[should_panic(expected = "duplicate parameter")]
    fn duplicate_names_rejected() {
        let mut p = ParamSet::new();
        p.insert("x", array![[1.0]]);
        p.insert("x", array![[2.0]]);
    }

    #[test]
    fn staging_and_gradient_gather() {
        let p = sample();
        let mut g = Graph::new();
        let staged = stage(&mut g, &p);
        // loss touches only w0 → others must gather zeros.
        let w0 = staged.id(&p, "w0");
        let loss = g.mean_sq(w0);
        let adj = g.backward(loss);
        let flat = grad_flat(&p, &staged, &adj);
        assert_eq!(flat.len(), p.n_scalars());
        assert!(flat[..4].iter().all(|v| *v != 0.0));
        assert!(flat[4..].iter().all(|v| *v == 0.0));
    }
}
