//! File formats.
//!
//! Frame definition (JSON): `{"dim": n, "step": r, "generators": [[s, ...]]}`
//! with one polynomial string per component in the grammar documented in
//! [`crate::poly`].
//!
//! Grid binary layout (little-endian, extension `.grid`):
//!
//! ```text
//! magic   4 bytes  b"SRGF"
//! version u32      1
//! ndim    u32
//! dims    ndim x u64
//! lower   ndim x f64
//! upper   ndim x f64
//! values  prod(dims) x f64, row-major (last axis fastest)
//! ```
//!
//! Grid CSV: header `x1,...,xn,value`, one node per line in row-major order,
//! floats printed with the shortest round-trip representation so a reload is
//! bit-identical.
//!
//! Distance field export adds origin/epsilon/move budget metadata in a JSON
//! sidecar written next to the binary.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{enumerate_commutators, CommutatorTable, PolyVectorField};
use crate::grid::{BoxRegion, GridFunction, Lattice};
use crate::metric::distance::DistanceField;
use crate::poly::Polynomial;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameFile {
    pub dim: usize,
    pub step: usize,
    pub generators: Vec<Vec<String>>,
}

/// Parse a frame file into its commutator table.
pub fn load_frame(path: &Path) -> Result<CommutatorTable> {
    let text = std::fs::read_to_string(path)?;
    let spec: FrameFile = serde_json::from_str(&text)?;
    frame_from_spec(&spec)
}

pub fn frame_from_spec(spec: &FrameFile) -> Result<CommutatorTable> {
    if spec.generators.is_empty() {
        return Err(Error::InvalidParameter("frame file lists no generators".into()));
    }
    let mut generators = Vec::with_capacity(spec.generators.len());
    for comps in &spec.generators {
        if comps.len() != spec.dim {
            return Err(Error::InvalidParameter(format!(
                "generator has {} components, dimension is {}",
                comps.len(),
                spec.dim
            )));
        }
        let polys: Result<Vec<Polynomial>> =
            comps.iter().map(|s| Polynomial::parse(s, spec.dim)).collect();
        generators.push(PolyVectorField::new(polys?));
    }
    enumerate_commutators(&generators, spec.step)
}

pub fn save_frame(path: &Path, spec: &FrameFile) -> Result<()> {
    let text = serde_json::to_string_pretty(spec)?;
    std::fs::write(path, text)?;
    Ok(())
}

const GRID_MAGIC: &[u8; 4] = b"SRGF";
const GRID_VERSION: u32 = 1;

/// Write a grid function in the documented binary layout.
pub fn write_grid_binary(path: &Path, g: &GridFunction) -> Result<()> {
    write_values_binary(path, g.lattice(), g.values())
}

pub(crate) fn write_values_binary(path: &Path, lattice: &Lattice, values: &[f64]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(GRID_MAGIC)?;
    f.write_all(&GRID_VERSION.to_le_bytes())?;
    f.write_all(&(lattice.dim() as u32).to_le_bytes())?;
    for &d in lattice.dims() {
        f.write_all(&(d as u64).to_le_bytes())?;
    }
    for &v in &lattice.bbox().lower {
        f.write_all(&v.to_le_bytes())?;
    }
    for &v in &lattice.bbox().upper {
        f.write_all(&v.to_le_bytes())?;
    }
    for &v in values {
        f.write_all(&v.to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

pub(crate) fn read_values_binary(path: &Path) -> Result<(Lattice, Vec<f64>)> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    if &magic != GRID_MAGIC {
        return Err(Error::InvalidParameter("not a grid file (bad magic)".into()));
    }
    let mut b4 = [0u8; 4];
    f.read_exact(&mut b4)?;
    if u32::from_le_bytes(b4) != GRID_VERSION {
        return Err(Error::InvalidParameter("unsupported grid file version".into()));
    }
    f.read_exact(&mut b4)?;
    let ndim = u32::from_le_bytes(b4) as usize;
    let mut b8 = [0u8; 8];
    let mut dims = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        f.read_exact(&mut b8)?;
        dims.push(u64::from_le_bytes(b8) as usize);
    }
    let mut lower = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        f.read_exact(&mut b8)?;
        lower.push(f64::from_le_bytes(b8));
    }
    let mut upper = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        f.read_exact(&mut b8)?;
        upper.push(f64::from_le_bytes(b8));
    }
    let lattice = Lattice::new(BoxRegion::new(lower, upper)?, dims)?;
    let mut values = Vec::with_capacity(lattice.node_count());
    for _ in 0..lattice.node_count() {
        f.read_exact(&mut b8)?;
        values.push(f64::from_le_bytes(b8));
    }
    Ok((lattice, values))
}

pub fn read_grid_binary(path: &Path) -> Result<GridFunction> {
    let (lattice, values) = read_values_binary(path)?;
    GridFunction::new(lattice, values)
}

/// CSV with node coordinates and value, one node per row.
pub fn write_grid_csv(path: &Path, g: &GridFunction) -> Result<()> {
    write_values_csv(path, g.lattice(), g.values())
}

pub fn write_values_csv(path: &Path, lattice: &Lattice, values: &[f64]) -> Result<()> {
    let n = lattice.dim();
    let mut out = String::new();
    for j in 0..n {
        out.push_str(&format!("x{}", j + 1));
        out.push(',');
    }
    out.push_str("value\n");
    let mut x = vec![0.0; n];
    for (flat, multi) in lattice.iter() {
        lattice.coord(&multi, &mut x);
        for v in &x {
            out.push_str(&format!("{v:?},"));
        }
        out.push_str(&format!("{:?}\n", values[flat]));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldMeta {
    pub origin: Vec<f64>,
    pub epsilon: f64,
    pub move_budget: usize,
}

/// Distance field export: binary grid plus a JSON metadata sidecar.
pub fn write_distance_field(path: &Path, field: &DistanceField) -> Result<()> {
    write_values_binary(path, field.lattice(), field.values())?;
    let meta = FieldMeta {
        origin: field.origin().to_vec(),
        epsilon: field.epsilon(),
        move_budget: field.move_budget(),
    };
    let side = path.with_extension("meta.json");
    std::fs::write(side, serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn read_distance_field(path: &Path) -> Result<DistanceField> {
    let (lattice, values) = read_values_binary(path)?;
    let side = path.with_extension("meta.json");
    let meta: FieldMeta = serde_json::from_str(&std::fs::read_to_string(side)?)?;
    DistanceField::from_parts(lattice, meta.origin, meta.epsilon, meta.move_budget, values)
}
