//! Finite-difference discretization of the horizontal divergence-form
//! operator and time stepping for d_t u = -sum_i X_i^* A_i(x,t,u,Xu) + B.
//!
//! X_i^* is the formal adjoint with respect to Lebesgue measure, so
//! -X_i^* A_i = X_i A_i + div(X_i) A_i; for divergence-free frames this is
//! the plain composition X_i(A_i). Each X_i is applied as nested first-order
//! differences (centered inside, second-order one-sided on the faces), which
//! keeps the operator honest for variable coefficients at the price of a
//! wider stencil; the reported CFL limit is the Gershgorin bound of that
//! composed stencil.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::frames::EpsilonFamily;
use crate::functional::{axis_derivative, validate_structure, StructureParams};
use crate::grid::{GridFunction, Lattice, SpaceTimeGridFunction};

/// Flux specification A_i(x, t, u, xi).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum FluxSpec {
    /// A_i = xi_i.
    Identity,
    /// A_i = a(x, t) xi_i.
    Scalar(Expr),
    /// A_i = sum_k m_ik(x, t) xi_k.
    Matrix(Vec<Vec<Expr>>),
    /// A_i = (1 + amplitude sin(u)) xi_i: the model nonlinearity.
    SinePerturbation { amplitude: f64 },
}

/// Source specification B(x, t, u, xi) = c(x,t) |xi| + d(x,t) u + g(x,t).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum SourceSpec {
    Zero,
    Linear { c: Expr, d: Expr, g: Expr },
}

/// Spatial boundary handling. Dirichlet data lives on the box faces; the
/// periodic variant identifies opposite faces (used by the conservation
/// tests).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum BoundarySpec {
    Dirichlet(Expr),
    Periodic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParabolicProblem {
    pub family: EpsilonFamily,
    pub lattice: Lattice,
    pub t_final: f64,
    pub initial: GridFunction,
    pub boundary: BoundarySpec,
    pub flux: FluxSpec,
    pub source: SourceSpec,
    pub structure: StructureParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeMode {
    Explicit,
    Implicit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub mode: SchemeMode,
    /// None picks cfl_safety * cfl_limit (explicit) or T/256 (implicit).
    pub tau: Option<f64>,
    pub cfl_safety: f64,
    pub linear_solver_tol: f64,
    pub max_iters: usize,
    /// Store every k-th slice; 0 picks a stride aiming at ~200 slices.
    pub output_every: usize,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            mode: SchemeMode::Explicit,
            tau: None,
            cfl_safety: 0.9,
            linear_solver_tol: 1e-10,
            max_iters: 20_000,
            output_every: 0,
        }
    }
}

/// Frozen per-run data: frame coefficients and divergences on the lattice.
struct Discretization {
    lattice: Lattice,
    p: usize,
    n: usize,
    periodic: bool,
    /// a[i][j * nodes + node] = i-th field, j-th component at the node
    coeff: Vec<Vec<f64>>,
    /// divergence of each field at each node (empty when identically zero)
    div: Vec<Vec<f64>>,
    coords: Vec<f64>,
}

impl Discretization {
    fn new(problem: &ParabolicProblem) -> Self {
        let lattice = problem.lattice.clone();
        let n = lattice.dim();
        let p = problem.family.rescaled().len();
        let nodes = lattice.node_count();
        let mut coords = vec![0.0; nodes * n];
        let mut x = vec![0.0; n];
        for (flat, multi) in lattice.iter() {
            lattice.coord(&multi, &mut x);
            coords[flat * n..(flat + 1) * n].copy_from_slice(&x);
        }
        let mut coeff = Vec::with_capacity(p);
        let mut div = Vec::with_capacity(p);
        for field in problem.family.rescaled() {
            let mut grid = vec![0.0; n * nodes];
            for (j, poly) in field.components().iter().enumerate() {
                if poly.is_zero() {
                    continue;
                }
                for node in 0..nodes {
                    grid[j * nodes + node] = poly.eval(&coords[node * n..(node + 1) * n]);
                }
            }
            coeff.push(grid);
            let dpoly = field.divergence();
            if dpoly.is_zero() {
                div.push(Vec::new());
            } else {
                let mut dgrid = vec![0.0; nodes];
                for node in 0..nodes {
                    dgrid[node] = dpoly.eval(&coords[node * n..(node + 1) * n]);
                }
                div.push(dgrid);
            }
        }
        let periodic = matches!(problem.boundary, BoundarySpec::Periodic);
        Discretization { lattice, p, n, periodic, coeff, div, coords }
    }

    /// X_i u for every field: out[i][node].
    fn gradient(&self, values: &[f64]) -> Vec<Vec<f64>> {
        let nodes = self.lattice.node_count();
        let axis_d: Vec<Vec<f64>> = (0..self.n)
            .map(|j| axis_derivative(&self.lattice, values, j, self.periodic))
            .collect();
        (0..self.p)
            .map(|i| {
                let mut comp = vec![0.0; nodes];
                for j in 0..self.n {
                    let a = &self.coeff[i][j * nodes..(j + 1) * nodes];
                    if a.iter().all(|&v| v == 0.0) {
                        continue;
                    }
                    for node in 0..nodes {
                        comp[node] += a[node] * axis_d[j][node];
                    }
                }
                comp
            })
            .collect()
    }

    /// sum_i X_i(A_i) + div(X_i) A_i from per-field flux values.
    fn divergence_form(&self, flux_vals: &[Vec<f64>]) -> Vec<f64> {
        let nodes = self.lattice.node_count();
        let mut out = vec![0.0; nodes];
        for i in 0..self.p {
            let axis_d: Vec<Vec<f64>> = (0..self.n)
                .map(|j| {
                    let a = &self.coeff[i][j * nodes..(j + 1) * nodes];
                    if a.iter().all(|&v| v == 0.0) {
                        Vec::new()
                    } else {
                        axis_derivative(&self.lattice, &flux_vals[i], j, self.periodic)
                    }
                })
                .collect();
            for j in 0..self.n {
                if axis_d[j].is_empty() {
                    continue;
                }
                let a = &self.coeff[i][j * nodes..(j + 1) * nodes];
                for node in 0..nodes {
                    out[node] += a[node] * axis_d[j][node];
                }
            }
            if !self.div[i].is_empty() {
                for node in 0..nodes {
                    out[node] += self.div[i][node] * flux_vals[i][node];
                }
            }
        }
        out
    }

    fn coord(&self, node: usize) -> &[f64] {
        &self.coords[node * self.n..(node + 1) * self.n]
    }
}

fn flux_values(
    disc: &Discretization,
    flux: &FluxSpec,
    structure: &StructureParams,
    grad: &[Vec<f64>],
    u: &[f64],
    t: f64,
) -> Result<Vec<Vec<f64>>> {
    let nodes = disc.lattice.node_count();
    match flux {
        FluxSpec::Identity => Ok(grad.to_vec()),
        FluxSpec::Scalar(a) => {
            let mut out = vec![vec![0.0; nodes]; disc.p];
            for node in 0..nodes {
                let av = a.eval(disc.coord(node), t);
                if av < structure.a - 1e-12 || av > structure.abar + 1e-12 {
                    return Err(Error::EllipticityViolation { value: av, a: structure.a, abar: structure.abar });
                }
                for i in 0..disc.p {
                    out[i][node] = av * grad[i][node];
                }
            }
            Ok(out)
        }
        FluxSpec::Matrix(m) => {
            if m.len() != disc.p || m.iter().any(|row| row.len() != disc.p) {
                return Err(Error::InvalidParameter("flux matrix must be p x p".into()));
            }
            let mut out = vec![vec![0.0; nodes]; disc.p];
            for node in 0..nodes {
                let x = disc.coord(node);
                // Gershgorin bounds of the symmetrized coefficient matrix
                let mut lo = f64::INFINITY;
                let mut hi: f64 = 0.0;
                for i in 0..disc.p {
                    let mii = m[i][i].eval(x, t);
                    let off: f64 = (0..disc.p)
                        .filter(|&k| k != i)
                        .map(|k| 0.5 * (m[i][k].eval(x, t) + m[k][i].eval(x, t)).abs())
                        .sum();
                    lo = lo.min(mii - off);
                    hi = hi.max(mii + off);
                }
                if lo < structure.a - 1e-12 || hi > structure.abar + 1e-12 {
                    let value = if lo < structure.a { lo } else { hi };
                    return Err(Error::EllipticityViolation { value, a: structure.a, abar: structure.abar });
                }
                for i in 0..disc.p {
                    let mut s = 0.0;
                    for k in 0..disc.p {
                        s += m[i][k].eval(x, t) * grad[k][node];
                    }
                    out[i][node] = s;
                }
            }
            Ok(out)
        }
        FluxSpec::SinePerturbation { amplitude } => {
            if 1.0 - amplitude.abs() < structure.a - 1e-12 || 1.0 + amplitude.abs() > structure.abar + 1e-12 {
                return Err(Error::EllipticityViolation {
                    value: 1.0 + amplitude.abs(),
                    a: structure.a,
                    abar: structure.abar,
                });
            }
            let mut out = vec![vec![0.0; nodes]; disc.p];
            for node in 0..nodes {
                let sigma = 1.0 + amplitude * u[node].sin();
                for i in 0..disc.p {
                    out[i][node] = sigma * grad[i][node];
                }
            }
            Ok(out)
        }
    }
}

fn source_values(disc: &Discretization, source: &SourceSpec, grad: &[Vec<f64>], u: &[f64], t: f64) -> Vec<f64> {
    let nodes = disc.lattice.node_count();
    match source {
        SourceSpec::Zero => vec![0.0; nodes],
        SourceSpec::Linear { c, d, g } => {
            let mut out = vec![0.0; nodes];
            for node in 0..nodes {
                let x = disc.coord(node);
                let mut gn = 0.0;
                for comp in grad {
                    gn += comp[node] * comp[node];
                }
                out[node] = c.eval(x, t) * gn.sqrt() + d.eval(x, t) * u[node] + g.eval(x, t);
            }
            out
        }
    }
}

/// One application of the spatial operator:
/// sum_i [X_i(A_i) + div(X_i) A_i] + B at time t. Boundary rows are produced
/// too (from one-sided closures); the steppers overwrite them with data.
pub fn discretize_divergence_form(
    problem: &ParabolicProblem,
    u: &GridFunction,
    t: f64,
) -> Result<GridFunction> {
    let disc = Discretization::new(problem);
    let rhs = apply_operator(&disc, problem, u.values(), t)?;
    GridFunction::new(problem.lattice.clone(), rhs)
}

fn apply_operator(disc: &Discretization, problem: &ParabolicProblem, u: &[f64], t: f64) -> Result<Vec<f64>> {
    let grad = disc.gradient(u);
    let flux = flux_values(disc, &problem.flux, &problem.structure, &grad, u, t)?;
    let mut out = disc.divergence_form(&flux);
    let b = source_values(disc, &problem.source, &grad, u, t);
    for (o, bv) in out.iter_mut().zip(&b) {
        *o += bv;
    }
    Ok(out)
}

/// Derivative stencil along an axis at a 1-d position: offsets and weights.
fn axis_stencil(pos: usize, d: usize, h: f64, periodic: bool) -> Vec<(i64, f64)> {
    if periodic {
        return vec![(1, 0.5 / h), (-1, -0.5 / h)];
    }
    if pos == 0 {
        if d >= 3 {
            vec![(0, -1.5 / h), (1, 2.0 / h), (2, -0.5 / h)]
        } else {
            vec![(0, -1.0 / h), (1, 1.0 / h)]
        }
    } else if pos == d - 1 {
        if d >= 3 {
            vec![(0, 1.5 / h), (-1, -2.0 / h), (-2, 0.5 / h)]
        } else {
            vec![(0, 1.0 / h), (-1, -1.0 / h)]
        }
    } else {
        vec![(1, 0.5 / h), (-1, -0.5 / h)]
    }
}

/// Worst-case magnitude bound of the flux linearization c_ik over the run.
fn flux_coefficient_bound(flux: &FluxSpec, disc: &Discretization, t_samples: &[f64]) -> Vec<Vec<f64>> {
    let p = disc.p;
    let nodes = disc.lattice.node_count();
    let mut bound = vec![vec![0.0; p]; p];
    match flux {
        FluxSpec::Identity => {
            for i in 0..p {
                bound[i][i] = 1.0;
            }
        }
        FluxSpec::SinePerturbation { amplitude } => {
            for i in 0..p {
                bound[i][i] = 1.0 + amplitude.abs();
            }
        }
        FluxSpec::Scalar(a) => {
            let mut hi: f64 = 0.0;
            for node in (0..nodes).step_by(1 + nodes / 4096) {
                for &t in t_samples {
                    hi = hi.max(a.eval(disc.coord(node), t).abs());
                }
            }
            for i in 0..p {
                bound[i][i] = hi;
            }
        }
        FluxSpec::Matrix(m) => {
            for node in (0..nodes).step_by(1 + nodes / 4096) {
                for &t in t_samples {
                    for i in 0..p {
                        for k in 0..p {
                            bound[i][k] = bound[i][k].max(m[i][k].eval(disc.coord(node), t).abs());
                        }
                    }
                }
            }
        }
    }
    bound
}

/// Largest stable explicit step: the reciprocal of the maximal Gershgorin
/// row sum (absolute off-diagonal weights) of the composed stencil, taken
/// over all nodes and sampled coefficient times.
pub fn cfl_limit(problem: &ParabolicProblem) -> Result<f64> {
    let disc = Discretization::new(problem);
    let t_samples = [0.0, 0.5 * problem.t_final, problem.t_final];
    let cbound = flux_coefficient_bound(&problem.flux, &disc, &t_samples);
    let lattice = &disc.lattice;
    let nodes = lattice.node_count();
    let dims = lattice.dims().to_vec();
    let spacing = lattice.spacing().to_vec();
    let n = disc.n;
    let p = disc.p;

    let worst = (0..nodes)
        .into_par_iter()
        .map(|node| {
            let multi = lattice.multi(node);
            if !disc.periodic && lattice.is_boundary(&multi) {
                return 0.0; // Dirichlet rows are never stepped
            }
            let mut row: HashMap<Vec<i64>, f64> = HashMap::new();
            // outer X_i at this node, inner X_k at the offset node
            for i in 0..p {
                for j in 0..n {
                    let aij = disc.coeff[i][j * nodes + node];
                    if aij == 0.0 {
                        continue;
                    }
                    for (o1, c1) in axis_stencil(multi[j], dims[j], spacing[j], disc.periodic) {
                        let mut mid = multi.clone();
                        let mj = mid[j] as i64 + o1;
                        if disc.periodic {
                            let per = (dims[j] - 1) as i64;
                            mid[j] = mj.rem_euclid(per) as usize;
                        } else {
                            if mj < 0 || mj >= dims[j] as i64 {
                                continue;
                            }
                            mid[j] = mj as usize;
                        }
                        let mid_node = lattice.flat(&mid);
                        for k in 0..p {
                            if cbound[i][k] == 0.0 {
                                continue;
                            }
                            for j2 in 0..n {
                                let akj2 = disc.coeff[k][j2 * nodes + mid_node];
                                if akj2 == 0.0 {
                                    continue;
                                }
                                for (o2, c2) in axis_stencil(mid[j2], dims[j2], spacing[j2], disc.periodic) {
                                    let mut off = vec![0i64; n];
                                    off[j] += o1;
                                    off[j2] += o2;
                                    *row.entry(off).or_insert(0.0) +=
                                        (aij * c1 * cbound[i][k] * akj2 * c2).abs();
                                }
                            }
                        }
                    }
                }
                // divergence correction: div(X_i) A_i adds a first-order row
                if !disc.div[i].is_empty() {
                    let di = disc.div[i][node];
                    if di != 0.0 {
                        for k in 0..p {
                            if cbound[i][k] == 0.0 {
                                continue;
                            }
                            for j2 in 0..n {
                                let akj2 = disc.coeff[k][j2 * nodes + node];
                                if akj2 == 0.0 {
                                    continue;
                                }
                                for (o2, c2) in axis_stencil(multi[j2], dims[j2], spacing[j2], disc.periodic) {
                                    let mut off = vec![0i64; n];
                                    off[j2] += o2;
                                    *row.entry(off).or_insert(0.0) +=
                                        (di * cbound[i][k] * akj2 * c2).abs();
                                }
                            }
                        }
                    }
                }
            }
            let zero = vec![0i64; n];
            row.iter()
                .filter(|(off, _)| **off != zero)
                .map(|(_, w)| w)
                .sum::<f64>()
        })
        .reduce(|| 0.0f64, f64::max);

    if worst == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / worst)
}

/// Matrix-free BiCGStab; `apply` computes y = M x. Returns iterations used.
fn bicgstab(
    apply: &dyn Fn(&[f64], &mut Vec<f64>),
    b: &[f64],
    x: &mut Vec<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<usize> {
    let n = b.len();
    let dot = |a: &[f64], c: &[f64]| -> f64 { a.iter().zip(c).map(|(u, v)| u * v).sum() };
    let norm_b = dot(b, b).sqrt().max(1e-300);

    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bv, av)| bv - av).collect();
    let r0 = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut pvec = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];

    for iter in 0..max_iters {
        let res = dot(&r, &r).sqrt();
        if res <= tol * norm_b {
            return Ok(iter);
        }
        let rho_new = dot(&r0, &r);
        if rho_new.abs() < 1e-300 {
            return Err(Error::NoConvergence { iters: iter, residual: res / norm_b });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for k in 0..n {
            pvec[k] = r[k] + beta * (pvec[k] - omega * v[k]);
        }
        apply(&pvec, &mut v);
        alpha = rho / dot(&r0, &v);
        for k in 0..n {
            s[k] = r[k] - alpha * v[k];
        }
        apply(&s, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for k in 0..n {
            x[k] += alpha * pvec[k] + omega * s[k];
            r[k] = s[k] - omega * t[k];
        }
        if omega == 0.0 {
            let res = dot(&r, &r).sqrt();
            if res <= tol * norm_b {
                return Ok(iter + 1);
            }
            return Err(Error::NoConvergence { iters: iter + 1, residual: res / norm_b });
        }
    }
    let res = dot(&r, &r).sqrt() / norm_b;
    Err(Error::NoConvergence { iters: max_iters, residual: res })
}

/// Solve the problem. Explicit mode is forward Euler under the CFL bound;
/// implicit mode is backward Euler with the linear solves done by BiCGStab
/// and nonlinear flux handled by lagged-coefficient Picard iteration.
pub fn solve(problem: &ParabolicProblem, scheme: &SchemeConfig) -> Result<SpaceTimeGridFunction> {
    if problem.initial.lattice() != &problem.lattice {
        return Err(Error::InvalidParameter("initial datum lattice does not match the problem".into()));
    }
    validate_structure(&problem.structure, 0.0)?;
    let disc = Discretization::new(problem);
    let lattice = &problem.lattice;
    let nodes = lattice.node_count();

    let limit = match scheme.mode {
        SchemeMode::Explicit => {
            let l = cfl_limit(problem)?;
            if let Some(tau) = scheme.tau {
                if tau > scheme.cfl_safety * l {
                    return Err(Error::CflViolation { tau, limit: scheme.cfl_safety * l });
                }
            }
            l
        }
        SchemeMode::Implicit => f64::INFINITY,
    };
    let tau_goal = scheme.tau.unwrap_or(match scheme.mode {
        SchemeMode::Explicit => scheme.cfl_safety * limit,
        SchemeMode::Implicit => problem.t_final / 256.0,
    });
    let mut steps = (problem.t_final / tau_goal).ceil() as usize;
    steps = steps.max(1);
    let stride = if scheme.output_every > 0 {
        scheme.output_every
    } else {
        (steps / 200).max(1)
    };
    // round the step count up to a stride multiple so stored slices are uniform
    steps = steps.div_ceil(stride) * stride;
    let tau = problem.t_final / steps as f64;

    let boundary_nodes: Vec<usize> = lattice
        .iter()
        .filter(|(_, multi)| lattice.is_boundary(multi))
        .map(|(flat, _)| flat)
        .collect();
    let set_boundary = |values: &mut Vec<f64>, t: f64| {
        if let BoundarySpec::Dirichlet(expr) = &problem.boundary {
            for &node in &boundary_nodes {
                values[node] = expr.eval(disc.coord(node), t);
            }
        }
    };
    let wrap_faces = |values: &mut Vec<f64>| {
        if !disc.periodic {
            return;
        }
        // identify the upper face with the lower face on every axis
        for (flat, multi) in lattice.iter() {
            if multi.iter().zip(lattice.dims()).any(|(&i, &d)| i == d - 1) {
                let wrapped: Vec<usize> = multi
                    .iter()
                    .zip(lattice.dims())
                    .map(|(&i, &d)| if i == d - 1 { 0 } else { i })
                    .collect();
                values[flat] = values[lattice.flat(&wrapped)];
            }
        }
    };

    let mut u = problem.initial.values().to_vec();
    set_boundary(&mut u, 0.0);
    wrap_faces(&mut u);

    let mut slices = Vec::with_capacity(steps / stride + 1);
    slices.push(u.clone());

    let linear_flux = !matches!(problem.flux, FluxSpec::SinePerturbation { .. });
    let source_has_gradient = match &problem.source {
        SourceSpec::Zero => false,
        SourceSpec::Linear { c, .. } => *c != Expr::Const(0.0),
    };

    for step in 0..steps {
        let t_old = step as f64 * tau;
        let t_new = (step + 1) as f64 * tau;
        match scheme.mode {
            SchemeMode::Explicit => {
                let rhs = apply_operator(&disc, problem, &u, t_old)?;
                if disc.periodic {
                    for node in 0..nodes {
                        u[node] += tau * rhs[node];
                    }
                    wrap_faces(&mut u);
                } else {
                    for node in 0..nodes {
                        u[node] += tau * rhs[node];
                    }
                    set_boundary(&mut u, t_new);
                }
            }
            SchemeMode::Implicit => {
                // lagged-coefficient Picard around the backward Euler solve
                let mut u_lag = u.clone();
                let max_picard = if linear_flux && !source_has_gradient { 1 } else { 12 };
                let mut converged = max_picard == 1;
                for _picard in 0..max_picard {
                    // rhs carries the explicit pieces: old slice plus the
                    // gradient part of the source at the lagged iterate
                    let grad_lag = disc.gradient(&u_lag);
                    let mut rhs = u.clone();
                    if let SourceSpec::Linear { c, .. } = &problem.source {
                        for node in 0..nodes {
                            let mut gn = 0.0;
                            for comp in &grad_lag {
                                gn += comp[node] * comp[node];
                            }
                            rhs[node] += tau * c.eval(disc.coord(node), t_new) * gn.sqrt();
                        }
                    }
                    if let SourceSpec::Linear { g, .. } = &problem.source {
                        for node in 0..nodes {
                            rhs[node] += tau * g.eval(disc.coord(node), t_new);
                        }
                    }
                    // frozen scalar for the nonlinear flux
                    let sigma_lag: Option<Vec<f64>> = match &problem.flux {
                        FluxSpec::SinePerturbation { amplitude } => {
                            Some(u_lag.iter().map(|v| 1.0 + amplitude * v.sin()).collect())
                        }
                        _ => None,
                    };
                    if let BoundarySpec::Dirichlet(expr) = &problem.boundary {
                        for &node in &boundary_nodes {
                            rhs[node] = expr.eval(disc.coord(node), t_new);
                        }
                    }
                    let apply = |v: &[f64], out: &mut Vec<f64>| {
                        let grad = disc.gradient(v);
                        let flux = match (&problem.flux, &sigma_lag) {
                            (FluxSpec::SinePerturbation { .. }, Some(sigma)) => {
                                let mut f = grad.clone();
                                for comp in f.iter_mut() {
                                    for (fv, s) in comp.iter_mut().zip(sigma) {
                                        *fv *= s;
                                    }
                                }
                                f
                            }
                            _ => flux_values(&disc, &problem.flux, &problem.structure, &grad, v, t_new)
                                .expect("window checked on the first application"),
                        };
                        let lv = disc.divergence_form(&flux);
                        out.resize(v.len(), 0.0);
                        for node in 0..nodes {
                            out[node] = v[node] - tau * lv[node];
                        }
                        if let SourceSpec::Linear { d, .. } = &problem.source {
                            for node in 0..nodes {
                                out[node] -= tau * d.eval(disc.coord(node), t_new) * v[node];
                            }
                        }
                        if !disc.periodic {
                            for &node in &boundary_nodes {
                                out[node] = v[node];
                            }
                        }
                    };
                    // first-pass window check on the lagged iterate
                    let grad_chk = disc.gradient(&u_lag);
                    flux_values(&disc, &problem.flux, &problem.structure, &grad_chk, &u_lag, t_new)?;

                    let mut u_new = u_lag.clone();
                    bicgstab(&apply, &rhs, &mut u_new, scheme.linear_solver_tol, scheme.max_iters)?;
                    if disc.periodic {
                        wrap_faces(&mut u_new);
                    }
                    let diff = u_new
                        .iter()
                        .zip(&u_lag)
                        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                    let scale = 1.0 + u_new.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    u_lag = u_new;
                    if max_picard > 1 && diff <= scheme.linear_solver_tol * scale {
                        converged = true;
                        break;
                    }
                    if max_picard == 1 {
                        converged = true;
                    }
                }
                if !converged {
                    return Err(Error::NoConvergence { iters: max_picard, residual: f64::NAN });
                }
                u = u_lag;
            }
        }
        if (step + 1) % stride == 0 {
            slices.push(u.clone());
        }
    }

    SpaceTimeGridFunction::new(lattice.clone(), slices, tau * stride as f64, 0.0)
}

/// Space-time residual of the weak formulation against a test function:
/// integral of (-u phi_t + sum_i X_i phi A_i - phi B). The test function must
/// vanish at the first and last slices and within two cells of the spatial
/// boundary.
pub fn weak_residual(
    u: &SpaceTimeGridFunction,
    problem: &ParabolicProblem,
    phi: &SpaceTimeGridFunction,
) -> Result<f64> {
    if u.lattice() != phi.lattice() || u.num_slices() != phi.num_slices() {
        return Err(Error::InvalidParameter("solution and test function grids differ".into()));
    }
    let lattice = u.lattice();
    let last = phi.num_slices() - 1;
    for j in [0, last] {
        if phi.slice(j).iter().any(|&v| v != 0.0) {
            return Err(Error::SupportViolation("phi must vanish at the initial and final slices".into()));
        }
    }
    for (flat, multi) in lattice.iter() {
        if lattice.boundary_depth(&multi) < 2 {
            for j in 0..phi.num_slices() {
                if phi.slice(j)[flat] != 0.0 {
                    return Err(Error::SupportViolation(
                        "phi must vanish near the spatial boundary".into(),
                    ));
                }
            }
        }
    }

    let disc = Discretization::new(problem);
    let tau = u.tau();
    let mut acc = 0.0;
    for j in 1..last {
        let t = u.time(j);
        let uj = u.slice(j);
        let phij = phi.slice(j);
        let phi_t: Vec<f64> = phi
            .slice(j + 1)
            .iter()
            .zip(phi.slice(j - 1))
            .map(|(a, b)| (a - b) / (2.0 * tau))
            .collect();
        let grad_u = disc.gradient(uj);
        let flux = flux_values(&disc, &problem.flux, &problem.structure, &grad_u, uj, t)?;
        let grad_phi = disc.gradient(phij);
        let b = source_values(&disc, &problem.source, &grad_u, uj, t);
        for (flat, multi) in lattice.iter() {
            let w = lattice.quad_weight(&multi) * tau;
            let mut integrand = -uj[flat] * phi_t[flat] - phij[flat] * b[flat];
            for i in 0..disc.p {
                integrand += grad_phi[i][flat] * flux[i][flat];
            }
            acc += w * integrand;
        }
    }
    Ok(acc)
}
