//! Parabolic cylinders, Harnack-quotient and maximum-principle harnesses,
//! the log-oscillation diagnostic, and the stability sweep across the
//! rescaling parameter.

use rand::{seq::SliceRandom, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::frames::{rescale, CommutatorTable, EpsilonFamily};
use crate::functional::{poincare_constant_estimate, PoincareEnsemble, StructureParams};
use crate::grid::{BoxRegion, GridFunction, Lattice, SpaceTimeGridFunction};
use crate::metric::distance::{distance_field, DistanceField};
use crate::metric::volume::{ball_volume, doubling_lattice, reach_half_widths};
use crate::pde::{solve, BoundarySpec, FluxSpec, ParabolicProblem, SchemeConfig, SourceSpec};

/// Node masks for the five regions around (xbar, tbar, rho):
/// Q       = B(3 rho) x (tbar - 9 rho^2, tbar]
/// Q^+     = B(rho)   x (tbar - rho^2, tbar]
/// Q^-     = B(rho)   x (tbar - 8 rho^2, tbar - 7 rho^2]
/// D^+     = B(rho/2) x (tbar - rho^2, tbar - rho^2 / 2]
/// D^-     = B(rho/2) x (tbar - 15 rho^2 / 2, tbar - 7 rho^2]
#[derive(Debug, Clone)]
pub struct CylinderSet {
    lattice: Lattice,
    rho: f64,
    tbar: f64,
    ball3: Vec<bool>,
    ball1: Vec<bool>,
    ball_half: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Q,
    QPlus,
    QMinus,
    DPlus,
    DMinus,
}

impl CylinderSet {
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn tbar(&self) -> f64 {
        self.tbar
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    /// Time window of a region: (t_lo, t_hi], relative to tbar.
    pub fn window(&self, region: Region) -> (f64, f64) {
        let r2 = self.rho * self.rho;
        match region {
            Region::Q => (self.tbar - 9.0 * r2, self.tbar),
            Region::QPlus => (self.tbar - r2, self.tbar),
            Region::QMinus => (self.tbar - 8.0 * r2, self.tbar - 7.0 * r2),
            Region::DPlus => (self.tbar - r2, self.tbar - 0.5 * r2),
            Region::DMinus => (self.tbar - 7.5 * r2, self.tbar - 7.0 * r2),
        }
    }

    pub fn spatial_mask(&self, region: Region) -> &[bool] {
        match region {
            Region::Q => &self.ball3,
            Region::QPlus | Region::QMinus => &self.ball1,
            Region::DPlus | Region::DMinus => &self.ball_half,
        }
    }

    pub fn contains(&self, region: Region, node: usize, t: f64) -> bool {
        let (lo, hi) = self.window(region);
        t > lo && t <= hi + 1e-12 && self.spatial_mask(region)[node]
    }

    /// All (slice, node) pairs of a region inside a space-time grid function.
    pub fn members(&self, u: &SpaceTimeGridFunction, region: Region) -> Result<Vec<(usize, usize)>> {
        if u.lattice() != &self.lattice {
            return Err(Error::InvalidParameter("cylinder and solution lattice differ".into()));
        }
        let (lo, _) = self.window(Region::Q);
        if lo < u.t0() - 1e-12 || self.tbar > u.t_final() + 1e-12 {
            return Err(Error::CylinderEscapesDomain(format!(
                "time window [{lo}, {}] outside [{}, {}]",
                self.tbar,
                u.t0(),
                u.t_final()
            )));
        }
        let mask = self.spatial_mask(region);
        let (wlo, whi) = self.window(region);
        let mut out = Vec::new();
        for j in 0..u.num_slices() {
            let t = u.time(j);
            if t > wlo && t <= whi + 1e-12 {
                for (node, &inside) in mask.iter().enumerate() {
                    if inside {
                        out.push((j, node));
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(Error::EmptyMask(match region {
                Region::Q => "Q",
                Region::QPlus => "Q+",
                Region::QMinus => "Q-",
                Region::DPlus => "D+",
                Region::DMinus => "D-",
            }));
        }
        Ok(out)
    }

    pub fn node_count(&self, region: Region) -> usize {
        self.spatial_mask(region).iter().filter(|&&b| b).count()
    }
}

/// Build the cylinder masks from a distance field centered at xbar.
/// `r_bound` is the admissible radius R: rho must stay below 20 R.
pub fn make_cylinders(field: &DistanceField, tbar: f64, rho: f64, r_bound: f64) -> Result<CylinderSet> {
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
    }
    if rho >= 20.0 * r_bound {
        return Err(Error::RhoTooLarge { rho, limit: 20.0 * r_bound });
    }
    let min_boundary = field.min_boundary_value();
    if min_boundary <= 3.0 * rho {
        return Err(Error::CylinderEscapesDomain(format!(
            "B(xbar, 3 rho) touches the box: boundary distance {min_boundary} <= {}",
            3.0 * rho
        )));
    }
    let d = field.values();
    let ball3 = d.iter().map(|&v| v < 3.0 * rho).collect();
    let ball1 = d.iter().map(|&v| v < rho).collect();
    let ball_half = d.iter().map(|&v| v < 0.5 * rho).collect();
    Ok(CylinderSet {
        lattice: field.lattice().clone(),
        rho,
        tbar,
        ball3,
        ball1,
        ball_half,
    })
}

/// max over Q^- of u divided by min over Q^+ of (u + rho^theta k).
/// The solution must be nonnegative on Q.
pub fn harnack_quotient(
    u: &SpaceTimeGridFunction,
    cyl: &CylinderSet,
    k: f64,
    theta: f64,
) -> Result<f64> {
    for (j, node) in cyl.members(u, Region::Q)? {
        let v = u.slice(j)[node];
        if v < 0.0 {
            return Err(Error::NegativeInsideCylinder { value: v });
        }
    }
    let offset = cyl.rho().powf(theta) * k;
    let mut qminus_max = f64::NEG_INFINITY;
    for (j, node) in cyl.members(u, Region::QMinus)? {
        qminus_max = qminus_max.max(u.slice(j)[node]);
    }
    let mut qplus_min = f64::INFINITY;
    for (j, node) in cyl.members(u, Region::QPlus)? {
        qplus_min = qplus_min.min(u.slice(j)[node] + offset);
    }
    Ok(qminus_max / qplus_min)
}

/// max over interior space-time nodes of u - (M + C kappa); nonpositive
/// means the maximum principle holds with that cap.
pub fn max_principle_margin(u: &SpaceTimeGridFunction, m_bound: f64, kappa: f64, c_cap: f64) -> f64 {
    let lattice = u.lattice();
    let cap = m_bound + c_cap * kappa;
    let mut margin = f64::NEG_INFINITY;
    for j in 1..u.num_slices() {
        let s = u.slice(j);
        for (flat, multi) in lattice.iter() {
            if !lattice.is_boundary(&multi) {
                margin = margin.max(s[flat] - cap);
            }
        }
    }
    margin
}

/// Double average over Q^+ x Q^- of sqrt((log ubar(y,s) - log ubar(x,t))^+),
/// with ubar = u + k + offset, (y,s) ranging over Q^- and (x,t) over Q^+.
/// The log difference is computed as log(ubar_minus / ubar_plus), which makes
/// the k = 0 scale invariance an exact identity for power-of-two scalings.
pub fn log_oscillation(
    u: &SpaceTimeGridFunction,
    cyl: &CylinderSet,
    k: f64,
    offset: f64,
    pair_budget: usize,
    seed: u64,
) -> Result<f64> {
    let plus = cyl.members(u, Region::QPlus)?;
    let minus = cyl.members(u, Region::QMinus)?;
    let value = |j: usize, node: usize| -> Result<f64> {
        let v = u.slice(j)[node] + k + offset;
        if v <= 0.0 {
            return Err(Error::NonPositiveLog);
        }
        Ok(v)
    };
    let mut plus_vals = Vec::with_capacity(plus.len());
    for &(j, node) in &plus {
        plus_vals.push(value(j, node)?);
    }
    let mut minus_vals = Vec::with_capacity(minus.len());
    for &(j, node) in &minus {
        minus_vals.push(value(j, node)?);
    }
    let total_pairs = plus_vals.len() * minus_vals.len();
    if total_pairs > pair_budget {
        let keep = (pair_budget as f64).sqrt().ceil() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        plus_vals.shuffle(&mut rng);
        minus_vals.shuffle(&mut rng);
        plus_vals.truncate(keep.max(1));
        minus_vals.truncate(keep.max(1));
    }
    let mut acc = 0.0;
    for &a in &minus_vals {
        for &b in &plus_vals {
            let diff = (a / b).ln();
            if diff > 0.0 {
                acc += diff.sqrt();
            }
        }
    }
    Ok(acc / (plus_vals.len() * minus_vals.len()) as f64)
}

/// One row of the stability sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub rho: f64,
    pub harnack_quotient: Option<f64>,
    pub doubling_ratio: Option<f64>,
    pub poincare_estimate: Option<f64>,
    pub max_principle_margin: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepFlags {
    pub harnack_uniform: bool,
    pub poincare_uniform: bool,
    pub doubling_uniform: bool,
    pub max_principle_ok: bool,
    pub all_rows_ok: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub flags: SweepFlags,
    /// worst spread per quantity, maximized over the rho grid
    pub harnack_spread: f64,
    pub poincare_spread: f64,
    pub doubling_spread: f64,
}

/// Sweep configuration; the factors are the uniformity gates at fixed rho.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub epsilons: Vec<f64>,
    pub rhos: Vec<f64>,
    pub center: Vec<f64>,
    /// positive floor of the bump datum (keeps the solution strictly positive)
    pub floor: f64,
    pub amplitude: f64,
    /// per-degree box scale for the reach estimate (see reach_half_widths)
    pub metric_box_scale_deg: Vec<f64>,
    pub pde_box_scale_deg: Vec<f64>,
    /// nodes per axis of the metric lattice and of the solver lattice;
    /// degenerate axes of the metric lattice are refined to the lift scale
    pub metric_resolution: Vec<usize>,
    pub pde_resolution: Vec<usize>,
    pub axis_node_cap: usize,
    pub move_budget: usize,
    pub volume_samples: usize,
    pub poincare_ensemble: usize,
    /// T = time_depth * rho^2; the cylinder top sits at tbar = T
    pub time_depth: f64,
    pub harnack_factor: f64,
    pub poincare_factor: f64,
    pub doubling_factor: f64,
    /// rows with eps <= rho * sub_regime_cut form the sub-Riemannian regime,
    /// rows with eps >= rho * riemannian_cut the Riemannian one
    pub sub_regime_cut: f64,
    pub riemannian_cut: f64,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig::heisenberg_default()
    }
}

impl SweepConfig {
    /// Defaults sized for the Heisenberg frame at desk scale.
    pub fn heisenberg_default() -> Self {
        SweepConfig {
            epsilons: vec![0.0, 1.0 / 64.0, 1.0 / 16.0, 0.25, 0.5],
            rhos: vec![0.1, 0.15],
            center: vec![0.0, 0.0, 0.0],
            floor: 0.1,
            amplitude: 1.0,
            metric_box_scale_deg: vec![1.35, 0.28],
            pde_box_scale_deg: vec![1.3, 0.3],
            metric_resolution: vec![71, 71, 71],
            pde_resolution: vec![33, 33, 17],
            axis_node_cap: 1025,
            move_budget: 2,
            volume_samples: 1_200_000,
            poincare_ensemble: 12,
            time_depth: 10.0,
            harnack_factor: 2.0,
            poincare_factor: 2.0,
            doubling_factor: 1.25,
            sub_regime_cut: 0.25,
            riemannian_cut: 2.0,
            seed: 7,
        }
    }
}

fn bump_datum(center: &[f64], floor: f64, amplitude: f64, z_scales: &[f64]) -> impl Fn(&[f64]) -> f64 {
    let center = center.to_vec();
    let scales = z_scales.to_vec();
    move |x: &[f64]| {
        let mut prof = 1.0;
        for ((xi, ci), si) in x.iter().zip(&center).zip(&scales) {
            let s = ((xi - ci) / si).powi(2);
            prof *= (1.0 - s).max(0.0).powi(3);
        }
        floor + amplitude * prof
    }
}

fn run_cell(table: &CommutatorTable, config: &SweepConfig, epsilon: f64, rho: f64) -> Result<(f64, f64, f64, f64)> {
    let family: EpsilonFamily = rescale(table, epsilon)?;
    let x0 = &config.center;
    let n = family.dim();

    // metric stage: doubling and Poincare on a lattice that still resolves
    // the small ball along thin directions
    let (bbox_m, dims_m) = doubling_lattice(
        table,
        epsilon,
        x0,
        2.0 * rho,
        rho,
        &config.metric_box_scale_deg,
        &config.metric_resolution,
        48,
        config.axis_node_cap,
    )?;
    let h_m: Vec<f64> = (0..n).map(|j| bbox_m.extent(j) / (dims_m[j] - 1) as f64).collect();
    let field_m = distance_field(&family, x0, &bbox_m, &h_m, config.move_budget)?;
    let vol_small = ball_volume(&field_m, rho, config.volume_samples, config.seed ^ 0x51)?;
    let vol_big = ball_volume(&field_m, 2.0 * rho, config.volume_samples, config.seed ^ 0x52)?;
    let doubling = vol_big.mean / vol_small.mean;
    let poincare = poincare_constant_estimate(
        &family,
        &field_m,
        x0,
        rho,
        PoincareEnsemble { size: config.poincare_ensemble, seed: config.seed ^ 0x77 },
    )?;

    // solver stage: one domain and one datum for the whole epsilon grid
    // (the approximation scheme holds the data and the cylinder fixed and
    // only swaps the operator), sized by the largest epsilon in the sweep
    let eps_ref = config.epsilons.iter().cloned().fold(0.0f64, f64::max).max(epsilon);
    let half_p = reach_half_widths(table, eps_ref, x0, 3.0 * rho, &config.pde_box_scale_deg)?;
    let bbox_p = BoxRegion::new(
        x0.iter().zip(&half_p).map(|(c, h)| c - h).collect(),
        x0.iter().zip(&half_p).map(|(c, h)| c + h).collect(),
    )?;
    let lattice_p = Lattice::new(bbox_p.clone(), config.pde_resolution.clone())?;

    let data_scales: Vec<f64> = half_p.iter().map(|h| 0.8 * h).collect();
    let datum = bump_datum(x0, config.floor, config.amplitude, &data_scales);
    let initial = GridFunction::from_fn(lattice_p.clone(), &datum);
    let m_bound = initial.values().iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));

    let t_final = config.time_depth * rho * rho;
    let problem = ParabolicProblem {
        family: family.clone(),
        lattice: lattice_p.clone(),
        t_final,
        initial,
        boundary: BoundarySpec::Dirichlet(boundary_expr(&datum, &lattice_p)),
        flux: FluxSpec::Identity,
        source: SourceSpec::Zero,
        structure: StructureParams::linear_heat(4.0),
    };
    let u = solve(&problem, &SchemeConfig::default())?;

    // cylinder masks on the solver lattice, with the active-metric field
    let h_p: Vec<f64> = (0..n).map(|j| bbox_p.extent(j) / (config.pde_resolution[j] - 1) as f64).collect();
    let field_p = distance_field(&family, x0, &bbox_p, &h_p, config.move_budget)?;
    let r_bound = 0.25
        * (0..n)
            .map(|j| 0.5 * bbox_p.extent(j))
            .fold(f64::INFINITY, f64::min);
    let cyl = make_cylinders(&field_p, t_final, rho, r_bound.max(rho / 10.0))?;
    let quotient = harnack_quotient(&u, &cyl, 0.0, 1.0)?;
    let margin = max_principle_margin(&u, m_bound, 0.0, 1.0);

    Ok((quotient, doubling, poincare, margin))
}

fn boundary_expr(datum: &impl Fn(&[f64]) -> f64, lattice: &Lattice) -> Expr {
    // The bump is zero on the faces by construction whenever the box is
    // larger than the data scales; the floor remains.
    let mut x = vec![0.0; lattice.dim()];
    let mut min_v = f64::INFINITY;
    let mut max_v = f64::NEG_INFINITY;
    for (_, multi) in lattice.iter() {
        if lattice.is_boundary(&multi) {
            lattice.coord(&multi, &mut x);
            let v = datum(&x);
            min_v = min_v.min(v);
            max_v = max_v.max(v);
        }
    }
    // time-independent boundary: the datum restricted to the faces is a
    // constant floor when the bump vanishes there; keep the worst case
    // constant otherwise (documented approximation for off-center bumps)
    Expr::Const(0.5 * (min_v + max_v))
}

fn spread(values: &[f64]) -> f64 {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if values.len() < 2 || lo <= 0.0 {
        1.0
    } else {
        hi / lo
    }
}

/// Run the full (epsilon, rho) grid. Rows run in parallel; failures are
/// recorded per row and the sweep continues.
pub fn epsilon_sweep(table: &CommutatorTable, config: &SweepConfig) -> SweepReport {
    let cells: Vec<(f64, f64)> = config
        .epsilons
        .iter()
        .flat_map(|&e| config.rhos.iter().map(move |&r| (e, r)))
        .collect();
    let rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(epsilon, rho)| match run_cell(table, config, epsilon, rho) {
            Ok((quotient, doubling, poincare, margin)) => SweepRow {
                epsilon,
                rho,
                harnack_quotient: Some(quotient),
                doubling_ratio: Some(doubling),
                poincare_estimate: Some(poincare),
                max_principle_margin: Some(margin),
                error: None,
            },
            Err(e) => SweepRow {
                epsilon,
                rho,
                harnack_quotient: None,
                doubling_ratio: None,
                poincare_estimate: None,
                max_principle_margin: None,
                error: Some(e.to_string()),
            },
        })
        .collect();

    let all_rows_ok = rows.iter().all(|r| r.error.is_none());
    let mut harnack_spread: f64 = 1.0;
    let mut poincare_spread: f64 = 1.0;
    let mut doubling_spread: f64 = 1.0;
    let mut max_principle_ok = true;

    for &rho in &config.rhos {
        let fixed: Vec<&SweepRow> = rows
            .iter()
            .filter(|r| r.rho == rho && r.error.is_none())
            .collect();
        let h: Vec<f64> = fixed.iter().filter_map(|r| r.harnack_quotient).collect();
        let p: Vec<f64> = fixed.iter().filter_map(|r| r.poincare_estimate).collect();
        harnack_spread = harnack_spread.max(spread(&h));
        poincare_spread = poincare_spread.max(spread(&p));
        // doubling compared inside each regime
        let sub: Vec<f64> = fixed
            .iter()
            .filter(|r| r.epsilon <= rho * config.sub_regime_cut)
            .filter_map(|r| r.doubling_ratio)
            .collect();
        let rie: Vec<f64> = fixed
            .iter()
            .filter(|r| r.epsilon >= rho * config.riemannian_cut)
            .filter_map(|r| r.doubling_ratio)
            .collect();
        doubling_spread = doubling_spread.max(spread(&sub)).max(spread(&rie));
        for r in &fixed {
            if let Some(m) = r.max_principle_margin {
                if m > 0.0 {
                    max_principle_ok = false;
                }
            }
        }
    }

    let flags = SweepFlags {
        harnack_uniform: harnack_spread <= config.harnack_factor,
        poincare_uniform: poincare_spread <= config.poincare_factor,
        doubling_uniform: doubling_spread <= config.doubling_factor,
        max_principle_ok,
        all_rows_ok,
        pass: all_rows_ok
            && harnack_spread <= config.harnack_factor
            && poincare_spread <= config.poincare_factor
            && doubling_spread <= config.doubling_factor
            && max_principle_ok,
    };
    SweepReport {
        rows,
        flags,
        harnack_spread,
        poincare_spread,
        doubling_spread,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::models::{coordinate_frame, heisenberg};
    use crate::frames::enumerate_commutators;

    fn flat_field() -> DistanceField {
        let table = enumerate_commutators(&coordinate_frame(2), 1).unwrap();
        let fam = rescale(&table, 0.0).unwrap();
        let bbox = BoxRegion::centered(&[1.0, 1.0]).unwrap();
        distance_field(&fam, &[0.0, 0.0], &bbox, &[0.05, 0.05], 3).unwrap()
    }

    fn slab_solution(field: &DistanceField, f: impl Fn(&[f64], f64) -> f64) -> SpaceTimeGridFunction {
        SpaceTimeGridFunction::from_fn(field.lattice().clone(), 101, 0.01, 0.0, f)
    }

    #[test]
    fn cylinder_windows_disjoint_and_nested() {
        let field = flat_field();
        let cyl = make_cylinders(&field, 1.0, 0.25, 1.0).unwrap();
        let (qm_lo, qm_hi) = cyl.window(Region::QMinus);
        let (qp_lo, qp_hi) = cyl.window(Region::QPlus);
        assert!(qm_hi <= qp_lo, "Q- and Q+ overlap in time");
        let (q_lo, q_hi) = cyl.window(Region::Q);
        assert!(q_lo <= qm_lo && qp_hi <= q_hi);
        // D+ inside Q+, D- inside Q- in both space and time
        let (dp_lo, dp_hi) = cyl.window(Region::DPlus);
        assert!(qp_lo <= dp_lo && dp_hi <= qp_hi);
        let (dm_lo, dm_hi) = cyl.window(Region::DMinus);
        assert!(qm_lo <= dm_lo && dm_hi <= qm_hi);
        for node in 0..field.lattice().node_count() {
            if cyl.spatial_mask(Region::DPlus)[node] {
                assert!(cyl.spatial_mask(Region::QPlus)[node]);
            }
            if cyl.spatial_mask(Region::QPlus)[node] {
                assert!(cyl.spatial_mask(Region::Q)[node]);
            }
        }
    }

    #[test]
    fn euclidean_mask_counts_match_disk_areas() {
        let field = flat_field();
        let cyl = make_cylinders(&field, 1.0, 0.3, 1.0).unwrap();
        let h = field.lattice().spacing()[0];
        let count = cyl.node_count(Region::QPlus) as f64;
        let want = std::f64::consts::PI * 0.3 * 0.3 / (h * h);
        assert!(
            (count - want).abs() <= 0.15 * want,
            "disk node count {count} vs {want}"
        );
    }

    #[test]
    fn mask_monotone_in_rho() {
        let field = flat_field();
        let small = make_cylinders(&field, 1.0, 0.2, 1.0).unwrap();
        let large = make_cylinders(&field, 1.0, 0.3, 1.0).unwrap();
        for region in [Region::Q, Region::QPlus, Region::DMinus] {
            for node in 0..field.lattice().node_count() {
                if small.spatial_mask(region)[node] {
                    assert!(large.spatial_mask(region)[node]);
                }
            }
        }
    }

    #[test]
    fn cylinder_domain_checks() {
        let field = flat_field();
        assert!(matches!(
            make_cylinders(&field, 1.0, 0.4, 1.0),
            Err(Error::CylinderEscapesDomain(_))
        ));
        assert!(matches!(
            make_cylinders(&field, 1.0, 0.2, 0.005),
            Err(Error::RhoTooLarge { .. })
        ));
    }

    #[test]
    fn quotient_of_constants_is_one() {
        let field = flat_field();
        let cyl = make_cylinders(&field, 1.0, 0.25, 1.0).unwrap();
        let u = slab_solution(&field, |_, _| 1.0);
        let q = harnack_quotient(&u, &cyl, 0.0, 1.0).unwrap();
        assert_eq!(q, 1.0);
    }

    #[test]
    fn quotient_scale_invariant_and_offset_guard() {
        let field = flat_field();
        let cyl = make_cylinders(&field, 1.0, 0.25, 1.0).unwrap();
        let u = slab_solution(&field, |x, t| 0.2 + x[0].cos() + 0.1 * t);
        let q1 = harnack_quotient(&u, &cyl, 0.0, 1.0).unwrap();
        let doubled = SpaceTimeGridFunction::new(
            u.lattice().clone(),
            u.slices().iter().map(|s| s.iter().map(|v| 2.0 * v).collect()).collect(),
            u.tau(),
            u.t0(),
        )
        .unwrap();
        let q2 = harnack_quotient(&doubled, &cyl, 0.0, 1.0).unwrap();
        assert_eq!(q1, q2, "ratio homogeneity");

        // a zero inside Q+ is harmless when k > 0
        let with_zero = slab_solution(&field, |x, t| if t > 0.995 && x[0].abs() < 0.05 && x[1].abs() < 0.05 { 0.0 } else { 1.0 });
        let q = harnack_quotient(&with_zero, &cyl, 0.5, 1.0).unwrap();
        assert!(q.is_finite());

        let negative = slab_solution(&field, |x, _| x[0]);
        assert!(matches!(
            harnack_quotient(&negative, &cyl, 0.0, 1.0),
            Err(Error::NegativeInsideCylinder { .. })
        ));
    }

    #[test]
    fn quotient_monotone_under_qminus_increase() {
        let field = flat_field();
        let cyl = make_cylinders(&field, 1.0, 0.25, 1.0).unwrap();
        let base = slab_solution(&field, |x, _| 1.0 + x[0].abs());
        let q1 = harnack_quotient(&base, &cyl, 0.0, 1.0).unwrap();
        // bump u inside the Q- window only
        let (lo, hi) = cyl.window(Region::QMinus);
        let bumped = slab_solution(&field, |x, t| {
            let v = 1.0 + x[0].abs();
            if t > lo && t <= hi {
                v + 0.5
            } else {
                v
            }
        });
        let q2 = harnack_quotient(&bumped, &cyl, 0.0, 1.0).unwrap();
        assert!(q2 >= q1);
    }

    #[test]
    fn margin_detects_violations() {
        let field = flat_field();
        let u = slab_solution(&field, |x, t| x[0] * x[0] + 2.0 * t);
        // interior max of x^2 + 2t stays below the parabolic boundary max
        let m = 1.0 + 2.0;
        assert!(max_principle_margin(&u, m, 0.0, 1.0) <= 0.0);
        // corrupted cap
        assert!(max_principle_margin(&u, 0.5, 0.0, 1.0) > 0.0);
    }

    #[test]
    fn log_oscillation_basics() {
        let field = flat_field();
        let cyl = make_cylinders(&field, 1.0, 0.25, 1.0).unwrap();
        let c = slab_solution(&field, |_, _| 3.0);
        let v = log_oscillation(&c, &cyl, 0.0, 0.0, 1 << 22, 1).unwrap();
        assert_eq!(v, 0.0);

        let u = slab_solution(&field, |x, t| 1.0 + x[0].powi(2) + 0.3 * (1.0 - t));
        let v1 = log_oscillation(&u, &cyl, 0.0, 0.0, 1 << 22, 1).unwrap();
        let doubled = SpaceTimeGridFunction::new(
            u.lattice().clone(),
            u.slices().iter().map(|s| s.iter().map(|w| 2.0 * w).collect()).collect(),
            u.tau(),
            u.t0(),
        )
        .unwrap();
        let v2 = log_oscillation(&doubled, &cyl, 0.0, 0.0, 1 << 22, 1).unwrap();
        assert_eq!(v1, v2, "scale invariance is an exact identity");

        let zeroed = slab_solution(&field, |_, _| 0.0);
        assert!(matches!(
            log_oscillation(&zeroed, &cyl, 0.0, 0.0, 1 << 22, 1),
            Err(Error::NonPositiveLog)
        ));
    }

    #[test]
    fn single_epsilon_sweep_is_trivially_uniform() {
        let table = enumerate_commutators(&heisenberg(), 2).unwrap();
        let mut config = SweepConfig::heisenberg_default();
        config.epsilons = vec![0.25];
        config.rhos = vec![0.1];
        config.metric_resolution = vec![33, 33, 33];
        config.pde_resolution = vec![25, 25, 13];
        config.volume_samples = 60_000;
        config.poincare_ensemble = 6;
        let report = epsilon_sweep(&table, &config);
        assert!(report.flags.all_rows_ok, "rows: {:?}", report.rows);
        assert_eq!(report.harnack_spread, 1.0);
        assert!(report.flags.pass);
    }
}
