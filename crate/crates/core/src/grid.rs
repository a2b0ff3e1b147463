//! Boxes, lattices and grid functions.
//!
//! Lattices are vertex-centered and inclusive: along axis k the nodes are
//! lower[k] + i * spacing[k] for i = 0..dims[k]-1 with the last node on the
//! upper face. Refining dims to 2*dims-1 keeps every coarse node, which is
//! what the grid-convergence studies rely on. Quadrature is the product
//! trapezoid rule (full cell weight inside, half on the faces), so constants
//! integrate exactly to the box volume.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An axis-aligned box, componentwise lower < upper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch(lower.len(), upper.len()));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if !(l < u) {
                return Err(Error::InvalidParameter(format!("box requires lower < upper, got [{l}, {u}]")));
            }
        }
        Ok(BoxRegion { lower, upper })
    }

    /// Symmetric box [-h_1, h_1] x ... around the origin.
    pub fn centered(half_widths: &[f64]) -> Result<Self> {
        BoxRegion::new(half_widths.iter().map(|h| -h).collect(), half_widths.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.extent(k)).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }
}

/// A vertex-centered lattice over a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    bbox: BoxRegion,
    dims: Vec<usize>,
    spacing: Vec<f64>,
}

impl Lattice {
    pub fn new(bbox: BoxRegion, dims: Vec<usize>) -> Result<Self> {
        if dims.len() != bbox.dim() {
            return Err(Error::DimensionMismatch(dims.len(), bbox.dim()));
        }
        for &d in &dims {
            if d < 2 {
                return Err(Error::InvalidParameter("lattice needs at least 2 nodes per axis".into()));
            }
        }
        let spacing = dims
            .iter()
            .enumerate()
            .map(|(k, &d)| bbox.extent(k) / (d - 1) as f64)
            .collect();
        Ok(Lattice { bbox, dims, spacing })
    }

    pub fn bbox(&self) -> &BoxRegion {
        &self.bbox
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    pub fn node_count(&self) -> usize {
        self.dims.iter().product()
    }

    /// Row-major flat index (last axis fastest).
    pub fn flat(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for (k, &i) in multi.iter().enumerate() {
            debug_assert!(i < self.dims[k]);
            idx = idx * self.dims[k] + i;
        }
        idx
    }

    pub fn multi(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            out[k] = flat % self.dims[k];
            flat /= self.dims[k];
        }
        out
    }

    pub fn coord(&self, multi: &[usize], out: &mut [f64]) {
        for (k, &i) in multi.iter().enumerate() {
            out[k] = self.bbox.lower[k] + i as f64 * self.spacing[k];
        }
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        let multi = self.multi(flat);
        let mut out = vec![0.0; self.dim()];
        self.coord(&multi, &mut out);
        out
    }

    /// Nearest node to a point inside the box; None when the point is outside.
    pub fn nearest(&self, x: &[f64]) -> Option<usize> {
        if !self.bbox.contains(x) {
            return None;
        }
        let mut idx = 0;
        for k in 0..self.dim() {
            let t = (x[k] - self.bbox.lower[k]) / self.spacing[k];
            let i = (t.round() as usize).min(self.dims[k] - 1);
            idx = idx * self.dims[k] + i;
        }
        Some(idx)
    }

    /// Nearest node index per axis, clamped into the lattice.
    pub fn nearest_clamped(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        for k in 0..self.dim() {
            let t = (x[k] - self.bbox.lower[k]) / self.spacing[k];
            let i = (t.round().max(0.0) as usize).min(self.dims[k] - 1);
            idx = idx * self.dims[k] + i;
        }
        idx
    }

    pub fn is_boundary(&self, multi: &[usize]) -> bool {
        multi
            .iter()
            .zip(&self.dims)
            .any(|(&i, &d)| i == 0 || i == d - 1)
    }

    /// Distance (in cells) from the nearest face, minimized over axes.
    pub fn boundary_depth(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.dims)
            .map(|(&i, &d)| i.min(d - 1 - i))
            .min()
            .unwrap_or(0)
    }

    /// Trapezoid quadrature weight of a node (product over axes).
    pub fn quad_weight(&self, multi: &[usize]) -> f64 {
        let mut w = 1.0;
        for (k, &i) in multi.iter().enumerate() {
            let face = i == 0 || i == self.dims[k] - 1;
            w *= if face { 0.5 * self.spacing[k] } else { self.spacing[k] };
        }
        w
    }

    /// Iterate flat indices together with their multi-indices.
    pub fn iter(&self) -> LatticeIter<'_> {
        LatticeIter { lattice: self, flat: 0, multi: vec![0; self.dim()], done: self.node_count() == 0 }
    }
}

pub struct LatticeIter<'a> {
    lattice: &'a Lattice,
    flat: usize,
    multi: Vec<usize>,
    done: bool,
}

impl<'a> Iterator for LatticeIter<'a> {
    type Item = (usize, Vec<usize>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = (self.flat, self.multi.clone());
        self.flat += 1;
        let mut k = self.lattice.dim();
        loop {
            if k == 0 {
                self.done = true;
                break;
            }
            k -= 1;
            self.multi[k] += 1;
            if self.multi[k] < self.lattice.dims[k] {
                break;
            }
            self.multi[k] = 0;
        }
        Some(item)
    }
}

/// Scalar samples on a lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    lattice: Lattice,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(lattice: Lattice, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.node_count() {
            return Err(Error::InvalidParameter(format!(
                "value count {} does not match lattice size {}",
                values.len(),
                lattice.node_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("grid function has non-finite entries".into()));
        }
        Ok(GridFunction { lattice, values })
    }

    pub fn from_fn(lattice: Lattice, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let mut values = vec![0.0; lattice.node_count()];
        let mut x = vec![0.0; lattice.dim()];
        for (flat, multi) in lattice.iter() {
            lattice.coord(&multi, &mut x);
            values[flat] = f(&x);
        }
        GridFunction { lattice, values }
    }

    pub fn constant(lattice: Lattice, c: f64) -> Self {
        let n = lattice.node_count();
        GridFunction { lattice, values: vec![c; n] }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Trapezoid integral over the whole box.
    pub fn integral(&self) -> f64 {
        let mut acc = 0.0;
        for (flat, multi) in self.lattice.iter() {
            acc += self.lattice.quad_weight(&multi) * self.values[flat];
        }
        acc
    }
}

/// Time-ordered stack of grid functions sharing one spatial lattice.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpaceTimeGridFunction {
    lattice: Lattice,
    slices: Vec<Vec<f64>>,
    tau: f64,
    t0: f64,
}

impl SpaceTimeGridFunction {
    pub fn new(lattice: Lattice, slices: Vec<Vec<f64>>, tau: f64, t0: f64) -> Result<Self> {
        if slices.len() < 2 {
            return Err(Error::InvalidParameter("need at least 2 time slices".into()));
        }
        if !(tau > 0.0) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {tau}")));
        }
        for s in &slices {
            if s.len() != lattice.node_count() {
                return Err(Error::InvalidParameter("slice size does not match the lattice".into()));
            }
        }
        Ok(SpaceTimeGridFunction { lattice, slices, tau, t0 })
    }

    pub fn from_fn(lattice: Lattice, num_slices: usize, tau: f64, t0: f64, mut f: impl FnMut(&[f64], f64) -> f64) -> Self {
        let mut slices = Vec::with_capacity(num_slices);
        let mut x = vec![0.0; lattice.dim()];
        for j in 0..num_slices {
            let t = t0 + j as f64 * tau;
            let mut v = vec![0.0; lattice.node_count()];
            for (flat, multi) in lattice.iter() {
                lattice.coord(&multi, &mut x);
                v[flat] = f(&x, t);
            }
            slices.push(v);
        }
        SpaceTimeGridFunction { lattice, slices, tau, t0 }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn num_slices(&self) -> usize {
        self.slices.len()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_final(&self) -> f64 {
        self.t0 + (self.slices.len() - 1) as f64 * self.tau
    }

    pub fn time(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.tau
    }

    pub fn slice(&self, j: usize) -> &[f64] {
        &self.slices[j]
    }

    pub fn slices(&self) -> &[Vec<f64>] {
        &self.slices
    }

    pub fn slice_fn(&self, j: usize) -> GridFunction {
        GridFunction { lattice: self.lattice.clone(), values: self.slices[j].clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_roundtrip_and_spacing() {
        let b = BoxRegion::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        let lat = Lattice::new(b, vec![5, 9]).unwrap();
        assert_eq!(lat.spacing(), &[0.25, 0.25]);
        for flat in [0, 7, 44] {
            assert_eq!(lat.flat(&lat.multi(flat)), flat);
        }
        let c = lat.coords(lat.flat(&[4, 8]));
        assert_eq!(c, vec![1.0, 1.0]);
    }

    #[test]
    fn nearest_node() {
        let b = BoxRegion::centered(&[1.0, 1.0]).unwrap();
        let lat = Lattice::new(b, vec![5, 5]).unwrap();
        let i = lat.nearest(&[0.2, -0.6]).unwrap();
        assert_eq!(lat.multi(i), vec![2, 1]);
        assert!(lat.nearest(&[1.2, 0.0]).is_none());
    }

    #[test]
    fn trapezoid_is_exact_for_constants() {
        let b = BoxRegion::new(vec![0.0, 0.0, 0.0], vec![1.0, 2.0, 0.5]).unwrap();
        let lat = Lattice::new(b.clone(), vec![4, 7, 3]).unwrap();
        let g = GridFunction::constant(lat, 3.0);
        assert!((g.integral() - 3.0 * b.volume()).abs() < 1e-14);
    }

    #[test]
    fn box_validation() {
        assert!(BoxRegion::new(vec![0.0], vec![0.0]).is_err());
        assert!(BoxRegion::new(vec![0.0, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn space_time_accessors() {
        let lat = Lattice::new(BoxRegion::centered(&[1.0]).unwrap(), vec![3]).unwrap();
        let u = SpaceTimeGridFunction::from_fn(lat, 5, 0.1, 0.0, |x, t| x[0] + t);
        assert_eq!(u.num_slices(), 5);
        assert!((u.t_final() - 0.4).abs() < 1e-15);
        assert_eq!(u.slice(2)[0], -1.0 + 0.2);
    }
}
