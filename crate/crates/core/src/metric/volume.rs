//! Monte-Carlo ball volumes, doubling ratios, and the two-regime volume
//! comparison sweep.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{rescale, volume_polynomial, CommutatorTable};
use crate::grid::BoxRegion;
use crate::metric::distance::{adapted_lattice, distance_field, DistanceField};

/// Monte-Carlo estimate of a Lebesgue volume with a 95% confidence
/// half-width.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub mean: f64,
    pub half_width: f64,
    pub samples: usize,
}

/// Monte-Carlo measure of {y : d(origin, y) < r} for a built distance field.
/// The ball must be strictly inside the box: every boundary value of the
/// field has to exceed r.
pub fn ball_volume(field: &DistanceField, r: f64, samples: usize, seed: u64) -> Result<VolumeEstimate> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {r}")));
    }
    let min_boundary = field.min_boundary_value();
    if min_boundary <= r {
        return Err(Error::BallEscapesBox { r, min_boundary });
    }
    let bbox = field.lattice().bbox();
    let n = bbox.dim();
    let workers = 16usize;
    let chunk = samples / workers;
    let counted: usize = (0..workers)
        .into_par_iter()
        .map(|w| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64).wrapping_mul(w as u64 + 1));
            let take = if w == workers - 1 { samples - chunk * (workers - 1) } else { chunk };
            let mut x = vec![0.0; n];
            let mut hits = 0usize;
            for _ in 0..take {
                for (j, xj) in x.iter_mut().enumerate() {
                    *xj = rng.random_range(bbox.lower[j]..bbox.upper[j]);
                }
                if let Some(d) = field.value_at(&x) {
                    if d < r {
                        hits += 1;
                    }
                }
            }
            hits
        })
        .sum();
    let vol = bbox.volume();
    let p = counted as f64 / samples as f64;
    let mean = vol * p;
    let half_width = 1.96 * vol * (p * (1.0 - p) / samples as f64).sqrt();
    Ok(VolumeEstimate { mean, half_width, samples })
}

/// |B(x, 2r)| / |B(x, r)| from one field (which must contain the 2r ball).
pub fn doubling_ratio(field: &DistanceField, r: f64, samples: usize, seed: u64) -> Result<(VolumeEstimate, VolumeEstimate, f64)> {
    let small = ball_volume(field, r, samples, seed)?;
    let big = ball_volume(field, 2.0 * r, samples, seed.wrapping_add(1))?;
    Ok((small, big, big.mean / small.mean))
}

/// One cell of the volume comparison sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SandwichRow {
    pub epsilon: f64,
    pub r: f64,
    pub volume: f64,
    pub ci: f64,
    pub lambda: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SandwichReport {
    pub rows: Vec<SandwichRow>,
    pub spread_global: f64,
    pub spread_sub_riemannian: f64,
    pub spread_riemannian: f64,
    pub max_spread_allowed: f64,
    pub max_regime_spread_allowed: f64,
    pub pass: bool,
}

/// Configuration of the sweep. Boxes are sized per cell from the frame: the
/// half-width along axis j is the largest contribution |a_ij(x)| r^(d_i)
/// over the extended family, weighted by `box_scale_deg[d_i - 1]`; the
/// lattice starts from `resolution[j]` nodes per axis and degenerate axes
/// are refined to the bracket-lift scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SandwichConfig {
    pub box_scale_deg: Vec<f64>,
    pub resolution: Vec<usize>,
    pub axis_node_cap: usize,
    pub move_budget: usize,
    pub samples: usize,
    pub seed: u64,
    pub max_spread: f64,
    pub max_regime_spread: f64,
}

impl Default for SandwichConfig {
    fn default() -> Self {
        SandwichConfig {
            box_scale_deg: vec![1.3, 0.25],
            resolution: vec![41, 41, 41],
            axis_node_cap: 1025,
            move_budget: 2,
            samples: 150_000,
            seed: 17,
            max_spread: 32.0,
            max_regime_spread: 8.0,
        }
    }
}

/// Per-cell box from the frame structure: reachable extent along each axis
/// scales like max_i |a_ij(x)| r^(d_eps(i)), with a per-degree weight
/// (motion in a degree-d direction over paths of length r covers only a
/// fraction of r^d; the default weights 1.3 and 0.25 leave a comfortable
/// margin for degree one and two). Coefficients are taken at the center:
/// the bracket columns already carry the reach of the degenerate
/// directions, and the ball-inside-box precondition of the volume
/// estimators catches frames whose coefficients grow so fast near the ball
/// that a larger weight is needed.
pub fn reach_half_widths(
    table: &CommutatorTable,
    epsilon: f64,
    x: &[f64],
    r: f64,
    scale_by_degree: &[f64],
) -> Result<Vec<f64>> {
    if scale_by_degree.is_empty() {
        return Err(Error::InvalidParameter("scale_by_degree must not be empty".into()));
    }
    let fam = rescale(table, epsilon)?;
    let n = fam.dim();
    let mut col = vec![0.0; n];
    let mut half = vec![0.0f64; n];
    for (i, field) in fam.extended().iter().enumerate() {
        let d = fam.degrees_eps()[i];
        let weight = scale_by_degree[(d - 1).min(scale_by_degree.len() - 1)];
        field.eval_into(x, &mut col);
        for j in 0..n {
            half[j] = half[j].max(weight * col[j].abs() * r.powi(d as i32));
        }
    }
    for h in half.iter_mut() {
        *h = h.max(2.0 * r * f64::EPSILON);
    }
    Ok(half)
}

/// Box and lattice for measuring balls up to radius `r_box` with features on
/// the scale of `r_fine`: the box is sized by the reach at r_box; axes whose
/// reach at r_fine is much thinner than the box (degree-two or small-eps
/// directions) are refined so the small ball keeps `fine_cells` cells across,
/// and fully degenerate axes are snapped to the exact lift scale.
pub fn doubling_lattice(
    table: &CommutatorTable,
    epsilon: f64,
    x: &[f64],
    r_box: f64,
    r_fine: f64,
    scale_by_degree: &[f64],
    base_dims: &[usize],
    fine_cells: usize,
    cap: usize,
) -> Result<(BoxRegion, Vec<usize>)> {
    let fam = rescale(table, epsilon)?;
    let half_box = reach_half_widths(table, epsilon, x, r_box, scale_by_degree)?;
    let half_fine = reach_half_widths(table, epsilon, x, r_fine, scale_by_degree)?;
    let n = x.len();
    let lower: Vec<f64> = x.iter().zip(&half_box).map(|(c, h)| c - h).collect();
    let upper: Vec<f64> = x.iter().zip(&half_box).map(|(c, h)| c + h).collect();
    let bbox0 = BoxRegion::new(lower, upper)?;
    let mut dims = base_dims.to_vec();
    for j in 0..n {
        if half_fine[j] < 0.4 * half_box[j] {
            let target = (bbox0.extent(j) * fine_cells as f64 / (2.0 * half_fine[j])).ceil() as usize + 1;
            dims[j] = dims[j].max(target).min(cap);
        }
    }
    Ok(adapted_lattice(&fam, x, &bbox0, &dims, cap))
}

/// Measure c(eps, r) = |B_eps(x, r)| / Lambda_eps(x, r) over a grid of
/// (eps, r) and report the spread globally and per regime (eps < r against
/// r < eps).
pub fn sandwich_check(
    table: &CommutatorTable,
    x: &[f64],
    r_list: &[f64],
    eps_list: &[f64],
    config: &SandwichConfig,
) -> Result<SandwichReport> {
    let cells: Vec<(f64, f64)> = eps_list
        .iter()
        .flat_map(|&e| r_list.iter().map(move |&r| (e, r)))
        .collect();
    let rows: Result<Vec<SandwichRow>> = cells
        .par_iter()
        .map(|&(epsilon, r)| {
            let fam = rescale(table, epsilon)?;
            let half = reach_half_widths(table, epsilon, x, r, &config.box_scale_deg)?;
            let lower: Vec<f64> = x.iter().zip(&half).map(|(c, h)| c - h).collect();
            let upper: Vec<f64> = x.iter().zip(&half).map(|(c, h)| c + h).collect();
            let bbox0 = BoxRegion::new(lower, upper)?;
            let (bbox, dims) = adapted_lattice(&fam, x, &bbox0, &config.resolution, config.axis_node_cap);
            let h: Vec<f64> = (0..bbox.dim())
                .map(|j| bbox.extent(j) / (dims[j] - 1) as f64)
                .collect();
            let field = distance_field(&fam, x, &bbox, &h, config.move_budget)?;
            let est = ball_volume(&field, r, config.samples, config.seed ^ cell_seed(epsilon, r))?;
            let lambda = volume_polynomial(&fam, x, r)?;
            Ok(SandwichRow {
                epsilon,
                r,
                volume: est.mean,
                ci: est.half_width,
                lambda,
                ratio: est.mean / lambda,
            })
        })
        .collect();
    let rows = rows?;

    let spread = |pred: &dyn Fn(&SandwichRow) -> bool| -> f64 {
        let vals: Vec<f64> = rows.iter().filter(|r| pred(r) && r.ratio > 0.0).map(|r| r.ratio).collect();
        if vals.len() < 2 {
            return 1.0;
        }
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(0.0f64, f64::max);
        hi / lo
    };
    let spread_global = spread(&|_| true);
    let spread_sub = spread(&|row| row.epsilon < row.r);
    let spread_rie = spread(&|row| row.r < row.epsilon);
    let pass = spread_global <= config.max_spread
        && spread_sub <= config.max_regime_spread
        && spread_rie <= config.max_regime_spread;

    Ok(SandwichReport {
        rows,
        spread_global,
        spread_sub_riemannian: spread_sub,
        spread_riemannian: spread_rie,
        max_spread_allowed: config.max_spread,
        max_regime_spread_allowed: config.max_regime_spread,
        pass,
    })
}

fn cell_seed(epsilon: f64, r: f64) -> u64 {
    epsilon.to_bits().rotate_left(17) ^ r.to_bits()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::models::coordinate_frame;
    use crate::frames::{enumerate_commutators, rescale};

    #[test]
    fn euclidean_disk_area() {
        let table = enumerate_commutators(&coordinate_frame(2), 1).unwrap();
        let fam = rescale(&table, 0.0).unwrap();
        let bbox = BoxRegion::centered(&[0.40, 0.40]).unwrap();
        let field = distance_field(&fam, &[0.0, 0.0], &bbox, &[0.004, 0.004], 3).unwrap();
        let r = 0.3;
        let est = ball_volume(&field, r, 400_000, 11).unwrap();
        let want = std::f64::consts::PI * r * r;
        assert!(
            (est.mean - want).abs() <= 0.02 * want,
            "disk area {} vs {want} (ci {})",
            est.mean,
            est.half_width
        );
    }

    #[test]
    fn ball_escaping_box_is_an_error() {
        let table = enumerate_commutators(&coordinate_frame(2), 1).unwrap();
        let fam = rescale(&table, 0.0).unwrap();
        let bbox = BoxRegion::centered(&[0.3, 0.3]).unwrap();
        let field = distance_field(&fam, &[0.0, 0.0], &bbox, &[0.01, 0.01], 3).unwrap();
        assert!(matches!(
            ball_volume(&field, 0.35, 1000, 1),
            Err(Error::BallEscapesBox { .. })
        ));
    }

    #[test]
    fn determinism_of_estimates() {
        let table = enumerate_commutators(&coordinate_frame(2), 1).unwrap();
        let fam = rescale(&table, 0.0).unwrap();
        let bbox = BoxRegion::centered(&[0.4, 0.4]).unwrap();
        let field = distance_field(&fam, &[0.0, 0.0], &bbox, &[0.01, 0.01], 2).unwrap();
        let a = ball_volume(&field, 0.3, 50_000, 7).unwrap();
        let b = ball_volume(&field, 0.3, 50_000, 7).unwrap();
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.half_width, b.half_width);
    }

    #[test]
    fn commuting_frame_ratio_independent_of_epsilon() {
        let table = enumerate_commutators(&coordinate_frame(2), 1).unwrap();
        let config = SandwichConfig {
            box_scale_deg: vec![1.4],
            resolution: vec![81, 81],
            samples: 60_000,
            move_budget: 3,
            seed: 3,
            ..SandwichConfig::default()
        };
        let report = sandwich_check(&table, &[0.0, 0.0], &[0.1, 0.2], &[0.0, 0.5], &config).unwrap();
        assert!(report.pass, "spread {}", report.spread_global);
        // no bracket columns: Lambda is epsilon-free and so is the ratio
        assert!(report.spread_global < 1.1, "spread {}", report.spread_global);
    }
}
