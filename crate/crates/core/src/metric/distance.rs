//! Control distances on a lattice.
//!
//! The distance to the origin is computed as a shortest path in a graph whose
//! edges are short sub-unit moves of the rescaled frame. From a node x, a
//! stencil of trial controls (single-field moves at every per-axis
//! granularity h_j / |a_ij(x)|, plus full combinations at the extreme
//! granularities) proposes nearby target nodes. Each proposed target b is
//! then priced on its own: the minimum-norm control u with
//! A(m) u = b - x, A evaluated at the chord midpoint m, is solved exactly,
//! and the edge is kept when the leftover (out-of-span) residual stays below
//! half a cell per axis. The edge costs |u|_2, so components of the move the
//! frame can actually realize are paid at their true control price and the
//! lattice rounding cannot be farmed for free motion along bracket
//! directions.
//!
//! The value converges to the control distance from above as the spacing
//! shrinks and the move budget grows. Degenerate directions (rescaled fields
//! that vanish at eps = 0) contribute no moves; bracket directions are
//! reached through the lift of planar detours, exactly as in the continuum.
//! For a step-2 frame the natural grid adapts the degenerate axis to the
//! square of the horizontal spacing (see [`adapted_dims`]); the lifts of
//! straight moves then land on nodes exactly and the shortest paths carry no
//! rounding debt at all.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::EpsilonFamily;
use crate::grid::{BoxRegion, GridFunction, Lattice};

/// Lattice approximation of d_eps(origin, .).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistanceField {
    lattice: Lattice,
    origin: Vec<f64>,
    origin_node: usize,
    epsilon: f64,
    move_budget: usize,
    values: Vec<f64>,
}

/// Knobs for the graph construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistanceFieldConfig {
    /// Neighborhood radius of sub-unit moves (controls per stencil axis).
    pub move_budget: usize,
    /// Fields with |a_ij| below this floor contribute no moves on axis j.
    pub coefficient_floor: f64,
    /// Largest acceptable out-of-span residual, in cells per axis.
    pub snap_tolerance: f64,
    /// Tolerated fraction of unreachable nodes (kept at infinity); beyond it
    /// the lattice counts as disconnected.
    pub max_unreached_fraction: f64,
}

impl Default for DistanceFieldConfig {
    fn default() -> Self {
        DistanceFieldConfig {
            move_budget: 3,
            coefficient_floor: 1e-12,
            snap_tolerance: 0.5 + 1e-9,
            max_unreached_fraction: 0.05,
        }
    }
}

/// Box and dims adapted to the frame at the center point: axes that none of
/// the rescaled fields moves directly (degenerate at eps = 0) get their
/// spacing snapped to half the square of the finest driven spacing, the
/// natural scale of one bracket lift; straight-move lifts then land on nodes
/// exactly. `base_dims` supplies the driven axes; degenerate axes are
/// recomputed, capped at `cap` nodes, and their extent is shrunk to an exact
/// multiple of the adapted spacing.
pub fn adapted_lattice(
    family: &EpsilonFamily,
    x0: &[f64],
    bbox: &BoxRegion,
    base_dims: &[usize],
    cap: usize,
) -> (BoxRegion, Vec<usize>) {
    let n = bbox.dim();
    let mut driven = vec![false; n];
    for field in family.rescaled() {
        let vals = field.eval(x0);
        for (j, v) in vals.iter().enumerate() {
            if v.abs() > 1e-12 {
                driven[j] = true;
            }
        }
    }
    let mut h_min = f64::INFINITY;
    for j in 0..n {
        if driven[j] {
            h_min = h_min.min(bbox.extent(j) / (base_dims[j] - 1) as f64);
        }
    }
    if !h_min.is_finite() || driven.iter().all(|&d| d) {
        return (bbox.clone(), base_dims.to_vec());
    }
    let h_fine = 0.5 * h_min * h_min;
    let mut lower = bbox.lower.clone();
    let mut upper = bbox.upper.clone();
    let mut dims = base_dims.to_vec();
    for j in 0..n {
        if driven[j] {
            continue;
        }
        let cells = (((bbox.extent(j) / h_fine).floor() as usize) & !1usize).clamp(2, cap - 1);
        let extent = cells as f64 * h_fine;
        let mid = 0.5 * (bbox.lower[j] + bbox.upper[j]);
        lower[j] = mid - 0.5 * extent;
        upper[j] = mid + 0.5 * extent;
        dims[j] = cells + 1;
    }
    (BoxRegion::new(lower, upper).expect("positive extents"), dims)
}

struct HeapItem {
    dist: f64,
    node: usize,
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.dist == other.dist && self.node == other.node
    }
}
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Shortest-path control distance from `origin` on a lattice with target
/// spacing `h`. Errors when some lattice node stays unreachable, which
/// signals a resolution too coarse to follow the brackets (or a frame that
/// does not span).
pub fn distance_field(
    family: &EpsilonFamily,
    origin: &[f64],
    bbox: &BoxRegion,
    h: &[f64],
    move_budget: usize,
) -> Result<DistanceField> {
    let config = DistanceFieldConfig { move_budget, ..DistanceFieldConfig::default() };
    distance_field_with(family, origin, bbox, h, &config)
}

pub fn distance_field_with(
    family: &EpsilonFamily,
    origin: &[f64],
    bbox: &BoxRegion,
    h: &[f64],
    config: &DistanceFieldConfig,
) -> Result<DistanceField> {
    let n = family.dim();
    if bbox.dim() != n {
        return Err(Error::DimensionMismatch(bbox.dim(), n));
    }
    if h.len() != n {
        return Err(Error::DimensionMismatch(h.len(), n));
    }
    if !bbox.contains(origin) {
        return Err(Error::InvalidParameter("origin outside the box".into()));
    }
    if config.move_budget == 0 {
        return Err(Error::InvalidParameter("move budget must be at least 1".into()));
    }
    let dims: Vec<usize> = (0..n)
        .map(|k| ((bbox.extent(k) / h[k]).round() as usize).max(1) + 1)
        .collect();
    let lattice = Lattice::new(bbox.clone(), dims)?;
    let origin_node = lattice.nearest(origin).expect("origin checked in box");

    let fields = family.rescaled();
    let p = fields.len();
    let budget = config.move_budget as i64;
    let diameter: f64 = (0..n).map(|k| bbox.extent(k).powi(2)).sum::<f64>().sqrt();

    let mut dist = vec![f64::INFINITY; lattice.node_count()];
    let mut done = vec![false; lattice.node_count()];
    let mut heap = BinaryHeap::new();
    dist[origin_node] = 0.0;
    heap.push(HeapItem { dist: 0.0, node: origin_node });

    // scratch buffers reused across pops
    let spacing = lattice.spacing().to_vec();
    let mut x = vec![0.0; n];
    let mut a = vec![0.0; p * n];
    let mut a_mid = vec![0.0; p * n];
    let mut scales: Vec<Vec<f64>> = vec![Vec::new(); p];
    let mut controls: Vec<Vec<f64>> = Vec::new();
    let mut motion = vec![0.0; n];
    let mut mid = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut col = vec![0.0; n];
    let mut seen_targets: Vec<usize> = Vec::new();

    let mut reached = 0usize;
    while let Some(HeapItem { dist: d, node }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        reached += 1;

        let multi = lattice.multi(node);
        lattice.coord(&multi, &mut x);

        // frame matrix at the node
        for (i, f) in fields.iter().enumerate() {
            f.eval_into(&x, &mut col);
            a[i * n..(i + 1) * n].copy_from_slice(&col);
        }

        // per-field granularities
        let mut g_lo = f64::INFINITY;
        let mut g_hi: f64 = 0.0;
        for i in 0..p {
            scales[i].clear();
            for j in 0..n {
                let c = a[i * n + j].abs();
                if c > config.coefficient_floor {
                    let s = spacing[j] / c;
                    if s <= diameter {
                        scales[i].push(s);
                    }
                }
            }
            scales[i].sort_by(f64::total_cmp);
            scales[i].dedup_by(|u, v| (*u - *v).abs() <= 1e-9 * *v);
            if let (Some(&lo), Some(&hi)) = (scales[i].first(), scales[i].last()) {
                g_lo = g_lo.min(lo);
                g_hi = g_hi.max(hi);
            }
        }
        if !g_lo.is_finite() {
            continue; // all fields vanish here
        }

        controls.clear();
        // single-field moves at every granularity
        for i in 0..p {
            for &s in &scales[i] {
                for c in 1..=budget {
                    let mag = c as f64 * s;
                    for sign in [1.0, -1.0] {
                        let mut u = vec![0.0; p];
                        u[i] = sign * mag;
                        controls.push(u);
                    }
                }
            }
        }
        // combination moves at the extreme granularities
        let mut grans = vec![g_lo];
        if g_hi > g_lo * (1.0 + 1e-9) {
            grans.push(g_hi);
        }
        let active: Vec<usize> = (0..p).filter(|&i| !scales[i].is_empty()).collect();
        for &g in &grans {
            if active.len() < 2 {
                break; // singles already cover it
            }
            let mut c = vec![-budget; p];
            'combo: loop {
                let nonzero = active.iter().filter(|&&i| c[i] != 0).count();
                if nonzero >= 2 {
                    let mut u = vec![0.0; p];
                    for &i in &active {
                        u[i] = c[i] as f64 * g;
                    }
                    controls.push(u);
                }
                let mut k = 0;
                loop {
                    if k == active.len() {
                        break 'combo;
                    }
                    let i = active[k];
                    c[i] += 1;
                    if c[i] <= budget {
                        break;
                    }
                    c[i] = -budget;
                    k += 1;
                }
            }
        }

        // propose targets from the trial controls, then price each target by
        // an exact-landing minimum-norm solve at the chord midpoint
        seen_targets.clear();
        for u in &controls {
            motion.iter_mut().for_each(|m| *m = 0.0);
            for i in 0..p {
                let ui = u[i];
                if ui == 0.0 {
                    continue;
                }
                for j in 0..n {
                    motion[j] += ui * a[i * n + j];
                }
            }
            if motion.iter().any(|m| !m.is_finite()) {
                continue;
            }
            // skip proposals that cannot leave the cell
            if motion.iter().zip(&spacing).all(|(m, h)| m.abs() < 0.4 * h) {
                continue;
            }
            for j in 0..n {
                y[j] = x[j] + motion[j];
            }
            let Some(target) = lattice.nearest(&y) else {
                continue;
            };
            if target == node || done[target] || seen_targets.contains(&target) {
                continue;
            }
            seen_targets.push(target);

            // chord w = target - x, frame at the midpoint
            let tcoords = lattice.coords(target);
            let mut w = vec![0.0; n];
            for j in 0..n {
                w[j] = tcoords[j] - x[j];
                mid[j] = x[j] + 0.5 * w[j];
            }
            for (i, f) in fields.iter().enumerate() {
                f.eval_into(&mid, &mut col);
                a_mid[i * n..(i + 1) * n].copy_from_slice(&col);
            }
            // minimum-norm least squares through the (ridge-stabilized)
            // normal equations on A A^T
            let mut gram = vec![0.0; n * n];
            for r in 0..n {
                for cidx in r..n {
                    let mut s = 0.0;
                    for i in 0..p {
                        s += a_mid[i * n + r] * a_mid[i * n + cidx];
                    }
                    gram[r * n + cidx] = s;
                    gram[cidx * n + r] = s;
                }
            }
            let mu = 1e-14 * (0..n).map(|r| gram[r * n + r]).sum::<f64>().max(1e-300) / n as f64;
            for r in 0..n {
                gram[r * n + r] += mu;
            }
            let mut ysol = w.clone();
            if crate::lin::solve(n, &mut gram, &mut ysol).is_none() {
                continue;
            }
            let mut cost2 = 0.0;
            let mut ok = true;
            let mut residual_ok = true;
            // u = A^T ysol, residual = w - A u
            let mut au = vec![0.0; n];
            for i in 0..p {
                let mut ui = 0.0;
                for r in 0..n {
                    ui += a_mid[i * n + r] * ysol[r];
                }
                if !ui.is_finite() {
                    ok = false;
                    break;
                }
                cost2 += ui * ui;
                for j in 0..n {
                    au[j] += ui * a_mid[i * n + j];
                }
            }
            if !ok {
                continue;
            }
            for j in 0..n {
                if (w[j] - au[j]).abs() > config.snap_tolerance * spacing[j] {
                    residual_ok = false;
                    break;
                }
            }
            if !residual_ok {
                continue;
            }
            let cost = cost2.sqrt();
            if cost == 0.0 {
                continue;
            }
            let nd = d + cost;
            if nd < dist[target] {
                dist[target] = nd;
                heap.push(HeapItem { dist: nd, node: target });
            }
        }
    }

    // A handful of box corners can stay out of reach of every accepted
    // move; they keep the value infinity and count as outside every ball.
    let unreached = lattice.node_count() - reached;
    if (unreached as f64) > config.max_unreached_fraction * lattice.node_count() as f64 {
        return Err(Error::DisconnectedLattice { reached, total: lattice.node_count() });
    }

    Ok(DistanceField {
        lattice,
        origin: origin.to_vec(),
        origin_node,
        epsilon: family.epsilon(),
        move_budget: config.move_budget,
        values: dist,
    })
}

impl DistanceField {
    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn origin_node(&self) -> usize {
        self.origin_node
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn move_budget(&self) -> usize {
        self.move_budget
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at the node nearest to a point; None outside the box.
    pub fn value_at(&self, x: &[f64]) -> Option<f64> {
        self.lattice.nearest(x).map(|i| self.values[i])
    }

    /// Smallest value attained on the box faces. A ball of radius r is
    /// strictly inside the box when this exceeds r.
    pub fn min_boundary_value(&self) -> f64 {
        let mut min = f64::INFINITY;
        for (flat, multi) in self.lattice.iter() {
            if self.lattice.is_boundary(&multi) {
                min = min.min(self.values[flat]);
            }
        }
        min
    }

    pub fn unreached_count(&self) -> usize {
        self.values.iter().filter(|v| !v.is_finite()).count()
    }

    /// The values as a grid function; fails when unreachable nodes exist.
    pub fn to_grid_function(&self) -> crate::error::Result<GridFunction> {
        GridFunction::new(self.lattice.clone(), self.values.clone())
    }

    /// Raw constructor used by the file loader.
    pub(crate) fn from_parts(
        lattice: Lattice,
        origin: Vec<f64>,
        epsilon: f64,
        move_budget: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != lattice.node_count() {
            return Err(Error::InvalidParameter("value count does not match lattice".into()));
        }
        let origin_node = lattice
            .nearest(&origin)
            .ok_or_else(|| Error::InvalidParameter("origin outside the box".into()))?;
        Ok(DistanceField { lattice, origin, origin_node, epsilon, move_budget, values })
    }
}
