//! Polynomial vector fields, iterated commutators, rescaled families and the
//! determinant coefficients that control ball volumes.
//!
//! A frame is a list of generators X_1..X_m. Brackets up to a chosen step r
//! are enumerated into a [`CommutatorTable`] with degrees d(k). For a
//! rescaling parameter eps in [0, 1] the table induces the family
//! X_i^eps (generators unchanged, degree-d entries damped by eps^(d-1)) and
//! the extended family Y^eps which appends the undamped higher entries. The
//! coefficient lambda_I(x) of an n-tuple I of extended fields is the
//! determinant of their values at x; sum over tuples of |lambda_I| r^d(I)
//! is the ball-volume functional.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lin;
use crate::poly::Polynomial;

/// Largest admissible rescaling parameter.
pub const EPS_BAR: f64 = 1.0;

/// A vector field with polynomial coefficients: components[k] multiplies
/// the coordinate derivative along axis k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyVectorField {
    dim: usize,
    components: Vec<Polynomial>,
}

impl PolyVectorField {
    pub fn new(components: Vec<Polynomial>) -> Self {
        let dim = components.len();
        assert!(dim > 0);
        for c in &components {
            assert_eq!(c.nvars(), dim, "component variable count must match the dimension");
        }
        PolyVectorField { dim, components }
    }

    pub fn zero(dim: usize) -> Self {
        PolyVectorField { dim, components: vec![Polynomial::zero(dim); dim] }
    }

    /// The coordinate field along `axis`.
    pub fn coordinate(dim: usize, axis: usize) -> Self {
        let mut components = vec![Polynomial::zero(dim); dim];
        components[axis] = Polynomial::constant(dim, 1.0);
        PolyVectorField { dim, components }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(Polynomial::is_zero)
    }

    pub fn scale(&self, c: f64) -> Self {
        PolyVectorField {
            dim: self.dim,
            components: self.components.iter().map(|p| p.scale(c)).collect(),
        }
    }

    /// Value of the field at a point, written into `out`.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.eval(x);
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, &mut out);
        out
    }

    /// Divergence as a polynomial: sum of d(components[k])/d(x_k).
    pub fn divergence(&self) -> Polynomial {
        let mut acc = Polynomial::zero(self.dim);
        for (k, c) in self.components.iter().enumerate() {
            acc = acc.add(&c.diff(k));
        }
        acc
    }

    /// Apply the field to a polynomial: sum_k components[k] * dp/dx_k.
    pub fn apply(&self, p: &Polynomial) -> Polynomial {
        let mut acc = Polynomial::zero(self.dim);
        for (k, c) in self.components.iter().enumerate() {
            acc = acc.add(&c.mul(&p.diff(k)));
        }
        acc
    }
}

/// Lie bracket [V, W] with components sum_j (V_j d_j W_k - W_j d_j V_k),
/// computed exactly on the polynomial coefficients.
pub fn lie_bracket(v: &PolyVectorField, w: &PolyVectorField) -> Result<PolyVectorField> {
    if v.dim != w.dim {
        return Err(Error::DimensionMismatch(v.dim, w.dim));
    }
    let components = (0..v.dim)
        .map(|k| v.apply(&w.components[k]).sub(&w.apply(&v.components[k])))
        .collect();
    Ok(PolyVectorField { dim: v.dim, components })
}

/// Generators plus their iterated brackets up to a step, with degrees.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommutatorTable {
    generators: Vec<PolyVectorField>,
    entries: Vec<(PolyVectorField, usize)>,
    step: usize,
}

impl CommutatorTable {
    pub fn generators(&self) -> &[PolyVectorField] {
        &self.generators
    }

    /// All table entries (the generators first) with their degrees.
    pub fn entries(&self) -> &[(PolyVectorField, usize)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn dim(&self) -> usize {
        self.generators[0].dim()
    }

    pub fn num_generators(&self) -> usize {
        self.generators.len()
    }

    pub fn degree(&self, k: usize) -> usize {
        self.entries[k].1
    }
}

/// Enumerate commutators of the generators up to `step`, lexicographically in
/// bracket structure. Degree-2 entries are [X_i, X_j] for i < j; a degree-d
/// entry is [X_i, E] for a degree-(d-1) entry E. Identically-zero brackets
/// are dropped: they contribute zero columns that never enter a maximizing
/// tuple.
pub fn enumerate_commutators(generators: &[PolyVectorField], step: usize) -> Result<CommutatorTable> {
    if generators.is_empty() {
        return Err(Error::InvalidParameter("no generators".into()));
    }
    if step < 1 {
        return Err(Error::InvalidParameter("step must be at least 1".into()));
    }
    let dim = generators[0].dim();
    for g in generators {
        if g.dim() != dim {
            return Err(Error::DimensionMismatch(dim, g.dim()));
        }
    }

    let mut entries: Vec<(PolyVectorField, usize)> =
        generators.iter().map(|g| (g.clone(), 1)).collect();
    let mut prev: Vec<PolyVectorField> = generators.to_vec();
    for d in 2..=step {
        let mut next = Vec::new();
        if d == 2 {
            for i in 0..generators.len() {
                for j in (i + 1)..generators.len() {
                    let b = lie_bracket(&generators[i], &generators[j])?;
                    if !b.is_zero() {
                        next.push(b);
                    }
                }
            }
        } else {
            for g in generators {
                for e in &prev {
                    let b = lie_bracket(g, e)?;
                    if !b.is_zero() {
                        next.push(b);
                    }
                }
            }
        }
        for b in &next {
            entries.push((b.clone(), d));
        }
        if next.is_empty() {
            break;
        }
        prev = next;
    }

    Ok(CommutatorTable { generators: generators.to_vec(), entries, step })
}

/// The rescaled family X^eps together with the extended family Y^eps and the
/// extended degrees d_eps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpsilonFamily {
    epsilon: f64,
    rescaled: Vec<PolyVectorField>,
    extended: Vec<PolyVectorField>,
    degrees_eps: Vec<usize>,
    table: CommutatorTable,
}

impl EpsilonFamily {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// The p rescaled fields X^eps (the control/gradient frame).
    pub fn rescaled(&self) -> &[PolyVectorField] {
        &self.rescaled
    }

    /// The 2p - m extended fields Y^eps used by the determinant coefficients.
    pub fn extended(&self) -> &[PolyVectorField] {
        &self.extended
    }

    pub fn degrees_eps(&self) -> &[usize] {
        &self.degrees_eps
    }

    pub fn table(&self) -> &CommutatorTable {
        &self.table
    }

    pub fn dim(&self) -> usize {
        self.table.dim()
    }

    pub fn num_generators(&self) -> usize {
        self.table.num_generators()
    }
}

/// Build the eps-family from a commutator table:
/// X_i^eps = Y_i for i <= m, eps^(d(i)-1) Y_i above; the extension appends
/// the undamped Y_{m+1}..Y_p with their original degrees, while every
/// rescaled field gets extended degree one.
pub fn rescale(table: &CommutatorTable, epsilon: f64) -> Result<EpsilonFamily> {
    if !(0.0..=EPS_BAR).contains(&epsilon) {
        return Err(Error::EpsilonOutOfRange(epsilon, EPS_BAR));
    }
    let m = table.num_generators();
    let p = table.len();

    let mut rescaled = Vec::with_capacity(p);
    for (k, (field, degree)) in table.entries.iter().enumerate() {
        if k < m {
            rescaled.push(field.clone());
        } else {
            rescaled.push(field.scale(epsilon.powi(*degree as i32 - 1)));
        }
    }

    let mut extended = rescaled.clone();
    let mut degrees_eps = vec![1usize; p];
    for (field, degree) in table.entries.iter().skip(m) {
        extended.push(field.clone());
        degrees_eps.push(*degree);
    }
    debug_assert_eq!(extended.len(), 2 * p - m);

    Ok(EpsilonFamily { epsilon, rescaled, extended, degrees_eps, table: table.clone() })
}

/// An n-tuple of distinct indices into the extended family, with its
/// extended-degree sum.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexTuple {
    indices: Vec<usize>,
    degree_sum: usize,
}

impl IndexTuple {
    /// Indices are 1-based into the extended family, matching how tuples are
    /// usually written; duplicates are rejected.
    pub fn new(family: &EpsilonFamily, indices: &[usize]) -> Result<IndexTuple> {
        let n = family.dim();
        if indices.len() != n {
            return Err(Error::InvalidParameter(format!(
                "index tuple must have length {n}, got {}",
                indices.len()
            )));
        }
        let mut seen = vec![false; family.extended.len()];
        let mut degree_sum = 0;
        for &i in indices {
            if i == 0 || i > family.extended.len() {
                return Err(Error::InvalidParameter(format!(
                    "index {i} outside the extended family 1..={}",
                    family.extended.len()
                )));
            }
            if seen[i - 1] {
                return Err(Error::InvalidParameter(format!("repeated index {i}")));
            }
            seen[i - 1] = true;
            degree_sum += family.degrees_eps[i - 1];
        }
        Ok(IndexTuple { indices: indices.to_vec(), degree_sum })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn degree_sum(&self) -> usize {
        self.degree_sum
    }
}

/// Determinant of the n x n matrix whose columns are the chosen extended
/// fields evaluated at x.
pub fn lambda_det(family: &EpsilonFamily, x: &[f64], tuple: &IndexTuple) -> f64 {
    let n = family.dim();
    let mut m = vec![0.0; n * n];
    let mut col = vec![0.0; n];
    for (j, &i) in tuple.indices.iter().enumerate() {
        family.extended[i - 1].eval_into(x, &mut col);
        for (r, &v) in col.iter().enumerate() {
            m[r * n + j] = v;
        }
    }
    lin::det(n, &mut m)
}

fn increasing_tuples(count: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if n == 0 || n > count {
        return out;
    }
    let mut cur: Vec<usize> = (1..=n).collect();
    loop {
        out.push(cur.clone());
        // advance the combination
        let mut k = n;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            if cur[k] < count - (n - 1 - k) {
                cur[k] += 1;
                for j in (k + 1)..n {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// The tuple maximizing |lambda_I(x)| r^(d_eps(I)); ties break
/// lexicographically. As the exact argmax it satisfies the selection
/// inequality for any comparison constant below one.
pub fn best_index(family: &EpsilonFamily, x: &[f64], r: f64, c2: f64) -> Result<IndexTuple> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {r}")));
    }
    if !(c2 > 0.0 && c2 < 1.0) {
        return Err(Error::InvalidParameter(format!("C2 must lie in (0,1), got {c2}")));
    }
    let n = family.dim();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for idx in increasing_tuples(family.extended.len(), n) {
        let tuple = IndexTuple::new(family, &idx)?;
        let w = lambda_det(family, x, &tuple).abs() * r.powi(tuple.degree_sum as i32);
        if w == 0.0 {
            continue;
        }
        match &best {
            Some((bw, _)) if *bw >= w => {}
            _ => best = Some((w, idx)),
        }
    }
    match best {
        Some((_, idx)) => IndexTuple::new(family, &idx),
        None => Err(Error::HormanderFailure),
    }
}

/// The ball-volume functional: sum over increasing n-tuples I of
/// |lambda_I(x)| r^(d_eps(I)).
pub fn volume_polynomial(family: &EpsilonFamily, x: &[f64], r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {r}")));
    }
    let n = family.dim();
    let mut acc = 0.0;
    for idx in increasing_tuples(family.extended.len(), n) {
        let tuple = IndexTuple::new(family, &idx)?;
        let lam = lambda_det(family, x, &tuple).abs();
        if lam != 0.0 {
            acc += lam * r.powi(tuple.degree_sum as i32);
        }
    }
    Ok(acc)
}

/// Homogeneous dimension at x: the smallest degree sum of a spanning tuple
/// of the eps = 0 extended family. Governs the small-ball volume growth.
pub fn homogeneous_dimension(table: &CommutatorTable, x: &[f64]) -> Result<usize> {
    let fam = rescale(table, 0.0)?;
    let n = fam.dim();
    let mut best: Option<usize> = None;
    for idx in increasing_tuples(fam.extended.len(), n) {
        let tuple = IndexTuple::new(&fam, &idx)?;
        if lambda_det(&fam, x, &tuple).abs() > 1e-12 {
            best = Some(best.map_or(tuple.degree_sum, |b: usize| b.min(tuple.degree_sum)));
        }
    }
    best.ok_or(Error::HormanderFailure)
}

/// Rank at x of the matrix collecting every table entry; full rank n
/// certifies the finite rank condition there.
pub fn hormander_rank(table: &CommutatorTable, x: &[f64]) -> usize {
    let n = table.dim();
    let cols = table.len();
    let mut m = vec![0.0; n * cols];
    let mut col = vec![0.0; n];
    for (j, (field, _)) in table.entries.iter().enumerate() {
        field.eval_into(x, &mut col);
        for (r, &v) in col.iter().enumerate() {
            m[r * cols + j] = v;
        }
    }
    lin::rank(n, cols, &mut m, 1e-10)
}

/// Reference frames used across tests and shipped configurations.
pub mod models {
    use super::*;

    /// The Heisenberg frame in R^3: X1 = d/dx - (y/2) d/dz,
    /// X2 = d/dy + (x/2) d/dz, with [X1, X2] = d/dz.
    pub fn heisenberg() -> Vec<PolyVectorField> {
        let x1 = PolyVectorField::new(vec![
            Polynomial::constant(3, 1.0),
            Polynomial::zero(3),
            Polynomial::var(3, 1).scale(-0.5),
        ]);
        let x2 = PolyVectorField::new(vec![
            Polynomial::zero(3),
            Polynomial::constant(3, 1.0),
            Polynomial::var(3, 0).scale(0.5),
        ]);
        vec![x1, x2]
    }

    /// The Grushin frame in R^2: X1 = d/dx, X2 = x d/dy.
    pub fn grushin() -> Vec<PolyVectorField> {
        let x1 = PolyVectorField::new(vec![Polynomial::constant(2, 1.0), Polynomial::zero(2)]);
        let x2 = PolyVectorField::new(vec![Polynomial::zero(2), Polynomial::var(2, 0)]);
        vec![x1, x2]
    }

    /// Commuting coordinate fields spanning R^dim.
    pub fn coordinate_frame(dim: usize) -> Vec<PolyVectorField> {
        (0..dim).map(|k| PolyVectorField::coordinate(dim, k)).collect()
    }
}
