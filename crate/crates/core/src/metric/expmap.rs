//! Exponential maps of frozen frame combinations and the Jacobian and
//! inclusion checks built on them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{best_index, lambda_det, EpsilonFamily, IndexTuple};
use crate::lin;
use crate::metric::distance::DistanceField;
use crate::poly::Polynomial;

/// Indices of the extended family outside the tuple, increasing (1-based).
pub fn complement_indices(family: &EpsilonFamily, tuple: &IndexTuple) -> Vec<usize> {
    let total = family.extended().len();
    (1..=total).filter(|i| !tuple.indices().contains(i)).collect()
}

/// The frozen field sum_j u_j Y_{i_j} + sum_k v_k Y_{j_k}, assembled once so
/// the flow integrator evaluates a single polynomial per component.
fn frozen_field(
    family: &EpsilonFamily,
    tuple: &IndexTuple,
    v: &[f64],
    u: &[f64],
) -> Result<Vec<Polynomial>> {
    let n = family.dim();
    let comp = complement_indices(family, tuple);
    if u.len() != n {
        return Err(Error::InvalidParameter(format!("u must have length {n}, got {}", u.len())));
    }
    if v.len() != comp.len() {
        return Err(Error::InvalidParameter(format!(
            "v must have length {}, got {}",
            comp.len(),
            v.len()
        )));
    }
    if u.iter().chain(v).any(|c| !c.is_finite()) {
        return Err(Error::InvalidParameter("non-finite coefficient".into()));
    }
    let mut comps = vec![Polynomial::zero(n); n];
    let mut add = |idx_1based: usize, c: f64| {
        if c == 0.0 {
            return;
        }
        let field = &family.extended()[idx_1based - 1];
        for (k, comp_poly) in comps.iter_mut().enumerate() {
            *comp_poly = comp_poly.add(&field.components()[k].scale(c));
        }
    };
    for (j, &i) in tuple.indices().iter().enumerate() {
        add(i, u[j]);
    }
    for (k, &i) in comp.iter().enumerate() {
        add(i, v[k]);
    }
    Ok(comps)
}

fn rk4_flow(comps: &[Polynomial], x: &[f64], steps: usize) -> Result<Vec<f64>> {
    let n = x.len();
    let dt = 1.0 / steps as f64;
    let mut y = x.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let eval = |p: &[Polynomial], at: &[f64], out: &mut [f64]| {
        for (o, poly) in out.iter_mut().zip(p) {
            *o = poly.eval(at);
        }
    };
    for _ in 0..steps {
        eval(comps, &y, &mut k1);
        for j in 0..n {
            tmp[j] = y[j] + 0.5 * dt * k1[j];
        }
        eval(comps, &tmp, &mut k2);
        for j in 0..n {
            tmp[j] = y[j] + 0.5 * dt * k2[j];
        }
        eval(comps, &tmp, &mut k3);
        for j in 0..n {
            tmp[j] = y[j] + dt * k3[j];
        }
        eval(comps, &tmp, &mut k4);
        for j in 0..n {
            y[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            if !y[j].is_finite() {
                return Err(Error::NonFiniteState);
            }
        }
    }
    Ok(y)
}

/// Time-1 flow of the frozen field from x: the map Phi_{eps,v,x}(u).
/// The step count doubles until two successive endpoints agree to 1e-10.
pub fn exp_map(
    family: &EpsilonFamily,
    x: &[f64],
    tuple: &IndexTuple,
    v: &[f64],
    u: &[f64],
) -> Result<Vec<f64>> {
    let comps = frozen_field(family, tuple, v, u)?;
    if comps.iter().all(Polynomial::is_zero) {
        return Ok(x.to_vec());
    }
    let mut steps = 8;
    let mut prev = rk4_flow(&comps, x, steps)?;
    loop {
        steps *= 2;
        let next = rk4_flow(&comps, x, steps)?;
        let scale = 1.0 + next.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = prev
            .iter()
            .zip(&next)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if diff < 1e-10 * scale || steps >= 1 << 14 {
            return Ok(next);
        }
        prev = next;
    }
}

/// Determinant of the u-Jacobian of the exponential map, by central
/// differences with steps on the cube-root-of-epsilon scale.
pub fn exp_jacobian(
    family: &EpsilonFamily,
    x: &[f64],
    tuple: &IndexTuple,
    v: &[f64],
    u: &[f64],
) -> Result<f64> {
    let n = family.dim();
    let mut jac = vec![0.0; n * n];
    let mut up = u.to_vec();
    let mut un = u.to_vec();
    for j in 0..n {
        let step = f64::EPSILON.cbrt() * (1.0 + u[j].abs());
        up[j] = u[j] + step;
        un[j] = u[j] - step;
        let yp = exp_map(family, x, tuple, v, &up)?;
        let yn = exp_map(family, x, tuple, v, &un)?;
        for r in 0..n {
            jac[r * n + j] = (yp[r] - yn[r]) / (2.0 * step);
        }
        up[j] = u[j];
        un[j] = u[j];
    }
    Ok(lin::det(n, &mut jac))
}

/// Result of sampling |J Phi| / |lambda_I(x)| over the weighted box.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JacobianBoundReport {
    pub tuple: Vec<usize>,
    pub lambda: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub samples: usize,
    pub pass: bool,
}

/// Sample (u, v) with |u_j| <= C1 r^(d(i_j)), |v_k| <= C2 r^(d(i_k)) and
/// report the range of |J Phi| / |lambda_{I}(x)| together with the
/// quarter-to-four pass flag.
pub fn jacobian_bound_check(
    family: &EpsilonFamily,
    x: &[f64],
    r: f64,
    c1: f64,
    c2: f64,
    samples: usize,
    seed: u64,
) -> Result<JacobianBoundReport> {
    if !(c1 > 0.0 && c1 < 1.0 && c2 > 0.0 && c2 < 1.0) {
        return Err(Error::InvalidParameter("C1, C2 must lie in (0,1)".into()));
    }
    let tuple = best_index(family, x, r, c2)?;
    let lambda = lambda_det(family, x, &tuple);
    let comp = complement_indices(family, &tuple);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = family.dim();
    let degrees = family.degrees_eps();

    let mut ratio_min = f64::INFINITY;
    let mut ratio_max = 0.0f64;
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; comp.len()];
    for _ in 0..samples {
        for (j, &i) in tuple.indices().iter().enumerate() {
            let b = c1 * r.powi(degrees[i - 1] as i32);
            u[j] = rng.random_range(-b..=b);
        }
        for (k, &i) in comp.iter().enumerate() {
            let b = c2 * r.powi(degrees[i - 1] as i32);
            v[k] = rng.random_range(-b..=b);
        }
        let jac = exp_jacobian(family, x, &tuple, &v, &u)?.abs();
        let ratio = jac / lambda.abs();
        ratio_min = ratio_min.min(ratio);
        ratio_max = ratio_max.max(ratio);
    }
    let pass = ratio_min >= 0.25 && ratio_max <= 4.0;
    Ok(JacobianBoundReport {
        tuple: tuple.indices().to_vec(),
        lambda,
        ratio_min,
        ratio_max,
        samples,
        pass,
    })
}

/// Result of the two-sided ball inclusion check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InclusionReport {
    pub tuple: Vec<usize>,
    pub inner_samples: usize,
    pub inner_pass: usize,
    pub outer_samples: usize,
    pub outer_hit: usize,
    pub tolerance: f64,
    pub inner_rate: f64,
    pub outer_rate: f64,
}

/// Checks Phi(Q(C1 r)) against the ball of radius r:
/// images of the weighted box must have distance at most r (inner), and
/// sampled ball nodes must be reached by Phi over the enlarged box
/// Q(C1 r / C2) up to the lattice spacing (outer, via projected-Newton
/// preimage search).
pub fn ball_inclusion_check(
    family: &EpsilonFamily,
    x: &[f64],
    r: f64,
    c1: f64,
    c2: f64,
    samples: usize,
    field: &DistanceField,
    seed: u64,
) -> Result<InclusionReport> {
    if !(c1 > 0.0 && c1 < 1.0 && c2 > 0.0 && c2 < 1.0) {
        return Err(Error::InvalidParameter("C1, C2 must lie in (0,1)".into()));
    }
    let h = field.lattice().max_spacing();
    if h > r / 20.0 {
        return Err(Error::ResolutionTooCoarse { h, limit: r / 20.0, r });
    }
    let tuple = best_index(family, x, r, c2)?;
    let comp = complement_indices(family, &tuple);
    let degrees = family.degrees_eps();
    let n = family.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = 2.0 * h;

    // inner inclusion
    let mut inner_pass = 0usize;
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; comp.len()];
    for _ in 0..samples {
        for (j, &i) in tuple.indices().iter().enumerate() {
            let b = c1 * r.powi(degrees[i - 1] as i32);
            u[j] = rng.random_range(-b..=b);
        }
        for (k, &i) in comp.iter().enumerate() {
            let b = c2 * r.powi(degrees[i - 1] as i32);
            v[k] = rng.random_range(-b..=b);
        }
        let y = exp_map(family, x, &tuple, &v, &u)?;
        if let Some(d) = field.value_at(&y) {
            if d <= r + tol {
                inner_pass += 1;
            }
        }
    }

    // outer inclusion: pick ball nodes and search for preimages over the
    // enlarged box with v = 0
    let lattice = field.lattice();
    let ball_nodes: Vec<usize> = (0..lattice.node_count())
        .filter(|&i| field.values()[i] < r)
        .collect();
    let outer_samples = samples.min(200).min(ball_nodes.len());
    let zero_v = vec![0.0; comp.len()];
    let bound: Vec<f64> = tuple
        .indices()
        .iter()
        .map(|&i| (c1 / c2) * r.powi(degrees[i - 1] as i32))
        .collect();
    let mut outer_hit = 0usize;
    for s in 0..outer_samples {
        let node = ball_nodes[(s * ball_nodes.len()) / outer_samples.max(1)];
        let target = lattice.coords(node);
        let mut uu = vec![0.0; n];
        let mut hit = false;
        for _ in 0..25 {
            let y = exp_map(family, x, &tuple, &zero_v, &uu)?;
            let err: Vec<f64> = target.iter().zip(&y).map(|(t, yy)| t - yy).collect();
            if err.iter().all(|e| e.abs() <= tol) {
                hit = true;
                break;
            }
            // Newton step with the finite-difference Jacobian
            let mut jac = vec![0.0; n * n];
            let mut up = uu.clone();
            for j in 0..n {
                let step = f64::EPSILON.cbrt() * (1.0 + uu[j].abs());
                up[j] = uu[j] + step;
                let yp = exp_map(family, x, &tuple, &zero_v, &up)?;
                up[j] = uu[j] - step;
                let yn = exp_map(family, x, &tuple, &zero_v, &up)?;
                up[j] = uu[j];
                for rr in 0..n {
                    jac[rr * n + j] = (yp[rr] - yn[rr]) / (2.0 * step);
                }
            }
            let mut rhs = err.clone();
            if lin::solve(n, &mut jac, &mut rhs).is_none() {
                break;
            }
            for j in 0..n {
                uu[j] = (uu[j] + rhs[j]).clamp(-bound[j], bound[j]);
            }
        }
        if hit {
            outer_hit += 1;
        }
    }

    Ok(InclusionReport {
        tuple: tuple.indices().to_vec(),
        inner_samples: samples,
        inner_pass,
        outer_samples,
        outer_hit,
        tolerance: tol,
        inner_rate: inner_pass as f64 / samples.max(1) as f64,
        outer_rate: outer_hit as f64 / outer_samples.max(1) as f64,
    })
}
