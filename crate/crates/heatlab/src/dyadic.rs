//! Dyadic space-time decomposition of 𝒬 = (0,1)×Ω around a source point
//! x₀, region-localized space-time norms, the weighted sum 𝒦 over the
//! annuli, and a numeric two-sided evaluation of the local energy error
//! inequality for nested FE pairs.
//!
//! With ρ(x,t) = max(|x−x₀|, √t) and d_j = 2^{−j}, the annulus Q_j is the
//! shell d_j ≤ ρ ≤ 2d_j; boundary ties go to the smaller j, so the
//! integration cells used here are the half-open shells [d_j, d_{j−1}),
//! with Q_0 the outer remainder ρ ≥ 1 and Q_* the innermost ρ < d_{J*}.

use crate::error::{Error, Result};
use crate::fem::{ClementOperator, FeFunction, FeSpace, ProlongationMatrix};
use crate::kernel::TwoGridKernel;
use crate::mesh::Point2;
use crate::parabolic::SemidiscreteSolution;
use crate::quadrature::TimeGrid;
use crate::spectral::SpectralDecomposition;
use nalgebra::DVector;
use rayon::prelude::*;
use std::sync::Arc;

/// Partition classes: `Annulus(0)` is the outer remainder, `Annulus(j)` for
/// 1 ≤ j ≤ J* the dyadic shells, `Innermost` the parabolic neighborhood of
/// (0, x₀) at scale C*·h.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Annulus(u32),
    Innermost,
}

/// Space-time region selectors for localized norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QSelector {
    /// The partition cell Q_j (j = 0 selects the outer remainder).
    Q(u32),
    /// The innermost set Q_*.
    QStar,
    /// Q_j' = Q_{j−1} ∪ Q_j ∪ Q_{j+1} (with Q_{J*+1} the formula shell
    /// inside Q_*).
    QPrime(u32),
    /// All of (0,1)×Ω.
    All,
}

/// Spatial analogues with r = |x−x₀|.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OmegaSelector {
    Omega(u32),
    OmegaStar,
    OmegaPrime(u32),
    All,
}

pub struct DyadicDecomposition {
    x0: Point2,
    c_star: f64,
    h: f64,
    j_star: u32,
}

/// Builds the decomposition; refuses meshes too coarse to carry at least
/// two genuine dyadic levels.
pub fn build_decomposition(x0: Point2, c_star: f64, h: f64) -> Result<DyadicDecomposition> {
    if !(c_star >= 16.0) {
        return Err(Error::InvalidArgument(format!(
            "scale constant must be ≥ 16, got {c_star}"
        )));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("mesh size must be positive, got {h}")));
    }
    if h >= 1.0 / (4.0 * c_star) {
        return Err(Error::DecompositionUnavailable(format!(
            "mesh size {h} is not below 1/(4·{c_star}) = {}",
            1.0 / (4.0 * c_star)
        )));
    }
    // J* with 2^{-J*} = C*h, rounded down to the nearest dyadic level
    let j_star = ((1.0 / (c_star * h)).log2() + 1e-12).floor();
    let upper = (2.0 + 1.0 / h).log2();
    if !(2.0..=upper).contains(&j_star) {
        return Err(Error::DecompositionUnavailable(format!(
            "J* = {j_star} outside [2, log₂(2+1/h) = {upper:.3}]"
        )));
    }
    Ok(DyadicDecomposition { x0, c_star, h, j_star: j_star as u32 })
}

impl DyadicDecomposition {
    pub fn x0(&self) -> Point2 {
        self.x0
    }

    pub fn c_star(&self) -> f64 {
        self.c_star
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn j_star(&self) -> u32 {
        self.j_star
    }

    /// d_j = 2^{−j}.
    pub fn d(&self, j: u32) -> f64 {
        2.0_f64.powi(-(j as i32))
    }

    /// The realized innermost scale d_{J*} (equals C*·h only when that is a
    /// power of two).
    pub fn d_star(&self) -> f64 {
        self.d(self.j_star)
    }

    fn rho(&self, x: Point2, t: f64) -> f64 {
        (x - self.x0).norm().max(t.max(0.0).sqrt())
    }

    fn classify_rho(&self, rho: f64) -> Region {
        if rho >= 1.0 {
            return Region::Annulus(0);
        }
        for j in 1..=self.j_star {
            if rho >= self.d(j) {
                return Region::Annulus(j);
            }
        }
        Region::Innermost
    }

    /// Partition class of a space-time point (ties to the smaller j).
    pub fn classify(&self, x: Point2, t: f64) -> Region {
        self.classify_rho(self.rho(x, t))
    }

    /// Partition class of a spatial point under r = |x−x₀|.
    pub fn classify_spatial(&self, x: Point2) -> Region {
        self.classify_rho((x - self.x0).norm())
    }

    /// Half-open ρ-interval [lo, hi) of a selector; hi = ∞ for unbounded.
    fn interval(&self, sel: QSelector) -> Result<(f64, f64)> {
        let check = |j: u32| -> Result<()> {
            if j > self.j_star {
                Err(Error::InvalidArgument(format!(
                    "region index {j} exceeds J* = {}",
                    self.j_star
                )))
            } else {
                Ok(())
            }
        };
        Ok(match sel {
            QSelector::Q(0) => (1.0, f64::INFINITY),
            QSelector::Q(j) => {
                check(j)?;
                (self.d(j), self.d(j - 1))
            }
            QSelector::QStar => (0.0, self.d_star()),
            QSelector::QPrime(j) => {
                check(j)?;
                let lo = self.d(j + 1);
                let hi = if j >= 2 { self.d(j - 2) } else { f64::INFINITY };
                (lo, hi)
            }
            QSelector::All => (0.0, f64::INFINITY),
        })
    }

    /// Membership in the selector's integration region.
    pub fn in_q(&self, sel: QSelector, x: Point2, t: f64) -> Result<bool> {
        let (lo, hi) = self.interval(sel)?;
        let rho = self.rho(x, t);
        Ok(rho >= lo && rho < hi)
    }

    pub fn in_omega(&self, sel: OmegaSelector, x: Point2) -> Result<bool> {
        let q = match sel {
            OmegaSelector::Omega(j) => QSelector::Q(j),
            OmegaSelector::OmegaStar => QSelector::QStar,
            OmegaSelector::OmegaPrime(j) => QSelector::QPrime(j),
            OmegaSelector::All => QSelector::All,
        };
        let (lo, hi) = self.interval(q)?;
        let r = (x - self.x0).norm();
        Ok(r >= lo && r < hi)
    }

    /// The disk D_j = {|x−x₀| ≤ 2d_j}, j ≥ 1.
    pub fn in_disk(&self, j: u32, x: Point2) -> Result<bool> {
        if j < 1 || j > self.j_star {
            return Err(Error::InvalidArgument(format!(
                "disk index {j} outside 1..={}",
                self.j_star
            )));
        }
        Ok((x - self.x0).norm() <= 2.0 * self.d(j))
    }
}

/// A trajectory sampled at time-grid nodes: coefficient vectors of the
/// state, its time derivative, optionally its second time derivative, and
/// the t = 0 slice.
pub struct TimeSampledField {
    space: Arc<FeSpace>,
    grid: TimeGrid,
    states: Vec<DVector<f64>>,
    velocities: Vec<DVector<f64>>,
    accelerations: Option<Vec<DVector<f64>>>,
    initial: DVector<f64>,
}

/// Which time derivative of the field a norm applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeDeriv {
    State,
    Velocity,
    Acceleration,
}

impl TimeSampledField {
    pub fn new(
        space: Arc<FeSpace>,
        grid: TimeGrid,
        states: Vec<DVector<f64>>,
        velocities: Vec<DVector<f64>>,
        accelerations: Option<Vec<DVector<f64>>>,
        initial: DVector<f64>,
    ) -> Result<Self> {
        let n = space.num_dofs();
        let k = grid.nodes.len();
        let ok_len = |vs: &[DVector<f64>]| vs.len() == k && vs.iter().all(|v| v.len() == n);
        if !ok_len(&states)
            || !ok_len(&velocities)
            || accelerations.as_deref().map(ok_len) == Some(false)
            || initial.len() != n
        {
            return Err(Error::InvalidArgument(
                "sampled field slices do not match the grid and space sizes".into(),
            ));
        }
        Ok(Self { space, grid, states, velocities, accelerations, initial })
    }

    /// Samples an exact semidiscrete solution (zero initial data).
    pub fn from_solution(sol: &SemidiscreteSolution, grid: &TimeGrid) -> Result<Self> {
        let dec = sol.decomposition();
        let mut states = Vec::with_capacity(grid.nodes.len());
        let mut velocities = Vec::with_capacity(grid.nodes.len());
        let mut accelerations = Vec::with_capacity(grid.nodes.len());
        for &t in &grid.nodes {
            states.push(dec.from_modal(&sol.modal_state(t)?).into_coeffs());
            velocities.push(dec.from_modal(&sol.modal_velocity(t)?).into_coeffs());
            accelerations.push(dec.from_modal(&sol.modal_acceleration(t)?).into_coeffs());
        }
        Self::new(
            dec.space().clone(),
            grid.clone(),
            states,
            velocities,
            Some(accelerations),
            DVector::zeros(dec.space().num_dofs()),
        )
    }

    /// Samples the homogeneous evolution E_h(t) of given modal initial data.
    pub fn from_semigroup(
        dec: &Arc<SpectralDecomposition>,
        initial_modal: &DVector<f64>,
        grid: &TimeGrid,
    ) -> Result<Self> {
        if initial_modal.len() != dec.len() {
            return Err(Error::InvalidArgument(format!(
                "initial data has {} modes, decomposition has {}",
                initial_modal.len(),
                dec.len()
            )));
        }
        let lam = dec.eigenvalues();
        let cols = |order: u32| {
            let modal = nalgebra::DMatrix::from_fn(lam.len(), grid.nodes.len(), |i, k| {
                initial_modal[i] * (-lam[i]).powi(order as i32) * (-lam[i] * grid.nodes[k]).exp()
            });
            let nodal = dec.from_modal_batch(&modal);
            (0..grid.nodes.len())
                .map(|k| nodal.column(k).into_owned())
                .collect::<Vec<_>>()
        };
        Self::new(
            dec.space().clone(),
            grid.clone(),
            cols(0),
            cols(1),
            Some(cols(2)),
            dec.from_modal(initial_modal).into_coeffs(),
        )
    }

    /// Samples the two-grid kernel difference F = Γ_h − Γ_ref on its fine
    /// space, with exact (spectral) time derivatives up to second order.
    pub fn from_kernel_difference(tg: &TwoGridKernel, grid: &TimeGrid) -> Result<Self> {
        let space = tg.fine_space_decomposition().space().clone();
        let take = |order: u32| {
            let cols = tg.f_cols(&grid.nodes, order);
            (0..grid.nodes.len())
                .map(|k| cols.column(k).into_owned())
                .collect::<Vec<_>>()
        };
        let initial = tg.f_cols(&[0.0], 0).column(0).into_owned();
        Self::new(space, grid.clone(), take(0), take(1), Some(take(2)), initial)
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn initial(&self) -> &DVector<f64> {
        &self.initial
    }

    fn slice(&self, deriv: TimeDeriv, k: usize) -> Result<&DVector<f64>> {
        Ok(match deriv {
            TimeDeriv::State => &self.states[k],
            TimeDeriv::Velocity => &self.velocities[k],
            TimeDeriv::Acceleration => self
                .accelerations
                .as_ref()
                .ok_or_else(|| {
                    Error::IncompleteReport(
                        "field carries no second time derivative slices".into(),
                    )
                })?
                .get(k)
                .expect("validated length"),
        })
    }

    fn same_grid(&self, other: &TimeSampledField) -> bool {
        self.grid.nodes.len() == other.grid.nodes.len()
            && self
                .grid
                .nodes
                .iter()
                .zip(&other.grid.nodes)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// A localized norm value together with an emptiness flag for the region.
#[derive(Debug, Clone, Copy)]
pub struct LocalNorm {
    pub value: f64,
    pub empty: bool,
}

/// ∫ over one spatial slice of Σ_{|α|≤k}|∂^α v|² restricted to the points
/// where `include` holds; returns the integral and how many quadrature
/// points were included.
fn slice_norm_sq(
    space: &FeSpace,
    coeffs: &DVector<f64>,
    include: &(dyn Fn(Point2) -> bool + Sync),
    k: u32,
) -> (f64, usize) {
    let mesh = space.mesh();
    let rule = space.quad_rule();
    let nl = space.local_count();
    let shapes: Vec<_> = rule.bary.iter().map(|&b| space.shape_values(b)).collect();
    let per_tri: Vec<(f64, usize)> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| {
            let ids = space.tri_node_ids(t);
            let mut local = [0.0_f64; crate::fem::MAX_LOCAL];
            for (a, &n) in ids.iter().enumerate() {
                if let Some(d) = space.node_dof(n) {
                    local[a] = coeffs[d];
                }
            }
            let [p0, p1, p2] = mesh.tri_vertices(t);
            let area = mesh.tri_area(t);
            let mut acc = 0.0;
            let mut hits = 0;
            for (q, &b) in rule.bary.iter().enumerate() {
                let x = Point2::from(p0.coords * b[0] + p1.coords * b[1] + p2.coords * b[2]);
                if !include(x) {
                    continue;
                }
                hits += 1;
                let mut v = 0.0;
                for a in 0..nl {
                    v += local[a] * shapes[q][a];
                }
                let mut term = v * v;
                if k == 1 {
                    let grads = space.shape_gradients(t, b);
                    let mut g = crate::mesh::Vector2::zeros();
                    for a in 0..nl {
                        g += grads[a] * local[a];
                    }
                    term += g.norm_squared();
                }
                acc += rule.weights[q] * area * term;
            }
            (acc, hits)
        })
        .collect();
    let mut total = 0.0;
    let mut hits = 0;
    for (a, c) in per_tri {
        total += a;
        hits += c;
    }
    (total, hits)
}

/// ⦀∂^deriv F⦀_{k, region}: the space-time quadrature norm over the
/// selected region; k ∈ {0, 1} (spatial derivatives up to order k).
pub fn local_space_time_norm(
    dec: &DyadicDecomposition,
    field: &TimeSampledField,
    sel: QSelector,
    deriv: TimeDeriv,
    k: u32,
) -> Result<LocalNorm> {
    if k > 1 {
        return Err(Error::InvalidArgument(format!(
            "space-time norms support spatial order k ∈ {{0,1}}, got {k}"
        )));
    }
    let (lo, hi) = dec.interval(sel)?;
    let x0 = dec.x0();
    let mut total = 0.0;
    let mut hits = 0usize;
    for (i, &t) in field.grid.nodes.iter().enumerate() {
        let sq = t.max(0.0).sqrt();
        if sq >= hi {
            continue; // ρ ≥ √t ≥ hi everywhere at this time
        }
        let coeffs = field.slice(deriv, i)?;
        let include = move |x: Point2| {
            let rho = (x - x0).norm().max(sq);
            rho >= lo && rho < hi
        };
        let (s, c) = slice_norm_sq(&field.space, coeffs, &include, k);
        total += field.grid.weights[i] * s;
        hits += c;
    }
    Ok(LocalNorm { value: total.sqrt(), empty: hits == 0 })
}

/// ‖v‖_{k, region} for a single spatial field.
pub fn local_spatial_norm(
    dec: &DyadicDecomposition,
    v: &FeFunction,
    sel: OmegaSelector,
    k: u32,
) -> Result<LocalNorm> {
    if k > 1 {
        return Err(Error::InvalidArgument(format!(
            "spatial norms support order k ∈ {{0,1}}, got {k}"
        )));
    }
    let q = match sel {
        OmegaSelector::Omega(j) => QSelector::Q(j),
        OmegaSelector::OmegaStar => QSelector::QStar,
        OmegaSelector::OmegaPrime(j) => QSelector::QPrime(j),
        OmegaSelector::All => QSelector::All,
    };
    let (lo, hi) = dec.interval(q)?;
    let x0 = dec.x0();
    let include = move |x: Point2| {
        let r = (x - x0).norm();
        r >= lo && r < hi
    };
    let (s, c) = slice_norm_sq(v.space(), v.coeffs(), &include, k);
    Ok(LocalNorm { value: s.sqrt(), empty: c == 0 })
}

/// Space-time quadrature measure of a region.
pub fn region_volume(
    dec: &DyadicDecomposition,
    space: &FeSpace,
    grid: &TimeGrid,
    sel: QSelector,
) -> Result<f64> {
    let (lo, hi) = dec.interval(sel)?;
    let x0 = dec.x0();
    let mesh = space.mesh();
    let rule = space.quad_rule();
    let mut total = 0.0;
    for (i, &t) in grid.nodes.iter().enumerate() {
        let sq = t.max(0.0).sqrt();
        if sq >= hi {
            continue;
        }
        let tw = grid.weights[i];
        for tri in 0..mesh.num_triangles() {
            let [p0, p1, p2] = mesh.tri_vertices(tri);
            let area = mesh.tri_area(tri);
            for (q, &b) in rule.bary.iter().enumerate() {
                let x = Point2::from(p0.coords * b[0] + p1.coords * b[1] + p2.coords * b[2]);
                let rho = (x - x0).norm().max(sq);
                if rho >= lo && rho < hi {
                    total += tw * rule.weights[q] * area;
                }
            }
        }
    }
    Ok(total)
}

/// Per-annulus localized norms of a field and its time derivatives.
#[derive(Debug, Clone, Copy)]
pub struct KRow {
    pub j: u32,
    /// ⦀F⦀_{Q_j}
    pub f_l2: f64,
    /// ⦀F⦀_{1,Q_j}
    pub f_h1: f64,
    /// ⦀∂_t F⦀_{Q_j}
    pub dtf_l2: f64,
    /// ⦀∂_t F⦀_{1,Q_j}
    pub dtf_h1: f64,
    /// ⦀∂_tt F⦀_{Q_j}
    pub dttf_l2: f64,
    pub empty: bool,
}

/// The weighted dyadic sum 𝒦 with its per-annulus ingredients.
#[derive(Debug, Clone)]
pub struct KReport {
    pub c_star: f64,
    pub h: f64,
    pub j_star: u32,
    pub rows: Vec<KRow>,
    pub k_value: f64,
}

fn k_from_rows(j_star: u32, rows: &[KRow]) -> Result<f64> {
    let mut seen = vec![false; j_star as usize + 1];
    let mut k = 0.0;
    for row in rows {
        if row.j > j_star || seen[row.j as usize] {
            return Err(Error::IncompleteReport(format!(
                "unexpected or duplicate entry for annulus {}",
                row.j
            )));
        }
        seen[row.j as usize] = true;
        let d = 2.0_f64.powi(-(row.j as i32));
        // d_j^{1+N/2} with N = 2
        k += d * d * (row.f_h1 / d + row.dtf_l2 + d * row.dtf_h1 + d * d * row.dttf_l2);
    }
    if let Some(j) = seen.iter().position(|s| !s) {
        return Err(Error::IncompleteReport(format!("missing entry for annulus {j}")));
    }
    Ok(k)
}

impl KReport {
    /// Assembles 𝒦 from externally computed rows; every annulus j = 0..=J*
    /// must appear exactly once.
    pub fn from_rows(
        c_star: f64,
        h: f64,
        j_star: u32,
        rows: Vec<KRow>,
    ) -> Result<KReport> {
        let k_value = k_from_rows(j_star, &rows)?;
        Ok(KReport { c_star, h, j_star, rows, k_value })
    }

    /// Recomputes 𝒦 from the stored rows; must match `k_value` bit-for-bit
    /// modulo summation order (tested to 1e-12).
    pub fn recompute(&self) -> Result<f64> {
        k_from_rows(self.j_star, &self.rows)
    }
}

/// One pass over the field computing all per-annulus norms and 𝒦. The
/// innermost set is excluded, as in the weighted sum's definition.
pub fn weighted_sum_k(
    dec: &DyadicDecomposition,
    field: &TimeSampledField,
) -> Result<KReport> {
    let x0 = dec.x0();
    let space = field.space.clone();
    let mesh = space.mesh();
    let rule = space.quad_rule();
    let nl = space.local_count();
    let shapes: Vec<_> = rule.bary.iter().map(|&b| space.shape_values(b)).collect();
    let nj = dec.j_star() as usize + 1;
    // accumulators per j: [f², |∇f|², ḟ², |∇ḟ|², f̈², hits]
    let mut acc = vec![[0.0_f64; 6]; nj];
    for (i, &t) in field.grid.nodes.iter().enumerate() {
        let sq = t.max(0.0).sqrt();
        let tw = field.grid.weights[i];
        let st = &field.states[i];
        let vel = &field.velocities[i];
        let accl = field.slice(TimeDeriv::Acceleration, i)?;
        let per_tri: Vec<Vec<[f64; 6]>> = (0..mesh.num_triangles())
            .into_par_iter()
            .map(|tri| {
                let ids = space.tri_node_ids(tri);
                let mut ls = [0.0_f64; crate::fem::MAX_LOCAL];
                let mut lv = [0.0_f64; crate::fem::MAX_LOCAL];
                let mut la = [0.0_f64; crate::fem::MAX_LOCAL];
                for (a, &n) in ids.iter().enumerate() {
                    if let Some(d) = space.node_dof(n) {
                        ls[a] = st[d];
                        lv[a] = vel[d];
                        la[a] = accl[d];
                    }
                }
                let [p0, p1, p2] = mesh.tri_vertices(tri);
                let area = mesh.tri_area(tri);
                let mut local = vec![[0.0_f64; 6]; nj];
                for (q, &b) in rule.bary.iter().enumerate() {
                    let x =
                        Point2::from(p0.coords * b[0] + p1.coords * b[1] + p2.coords * b[2]);
                    let rho = (x - x0).norm().max(sq);
                    let j = match dec.classify_rho(rho) {
                        Region::Annulus(j) => j as usize,
                        Region::Innermost => continue,
                    };
                    let w = rule.weights[q] * area;
                    let grads = space.shape_gradients(tri, b);
                    let (mut s, mut v, mut a2) = (0.0, 0.0, 0.0);
                    let mut gs = crate::mesh::Vector2::zeros();
                    let mut gv = crate::mesh::Vector2::zeros();
                    for a in 0..nl {
                        s += ls[a] * shapes[q][a];
                        v += lv[a] * shapes[q][a];
                        a2 += la[a] * shapes[q][a];
                        gs += grads[a] * ls[a];
                        gv += grads[a] * lv[a];
                    }
                    local[j][0] += w * s * s;
                    local[j][1] += w * gs.norm_squared();
                    local[j][2] += w * v * v;
                    local[j][3] += w * gv.norm_squared();
                    local[j][4] += w * a2 * a2;
                    local[j][5] += 1.0;
                }
                local
            })
            .collect();
        for tri_acc in per_tri {
            for (j, part) in tri_acc.into_iter().enumerate() {
                for c in 0..5 {
                    acc[j][c] += tw * part[c];
                }
                acc[j][5] += part[5];
            }
        }
    }
    let rows: Vec<KRow> = acc
        .iter()
        .enumerate()
        .map(|(j, a)| KRow {
            j: j as u32,
            f_l2: a[0].sqrt(),
            f_h1: (a[0] + a[1]).sqrt(),
            dtf_l2: a[2].sqrt(),
            dtf_h1: (a[2] + a[3]).sqrt(),
            dttf_l2: a[4].sqrt(),
            empty: a[5] == 0.0,
        })
        .collect();
    KReport::from_rows(dec.c_star(), dec.h(), dec.j_star(), rows)
}

/// Every term of the local energy error inequality, evaluated numerically
/// with the generic constant set to 1.
#[derive(Debug, Clone, Copy)]
pub struct EnergyCheckRecord {
    pub j: u32,
    pub epsilon: f64,
    pub d_j: f64,
    /// coarse mesh size entering the window-coupling coefficient
    pub h_coarse: f64,
    /// ⦀∂_t(φ−φ_h)⦀_{Q_j} + d_j^{−1}⦀φ−φ_h⦀_{1,Q_j}
    pub lhs: f64,
    /// ‖φ_h(0)‖_{1,Ω_j'} + d_j^{−1}‖φ_h(0)‖_{Ω_j'}
    pub i_j: f64,
    /// d_j⦀∂_t g⦀_{1,Q_j'} + ⦀∂_t g⦀_{Q_j'} + d_j^{−1}⦀g⦀_{1,Q_j'} +
    /// d_j^{−2}⦀g⦀_{Q_j'} for g = Ĩ_hφ − φ
    pub x_j: f64,
    /// ⦀φ−φ_h⦀_{Q_j'} (enters the ε^{−3} group with weight d_j^{−2})
    pub window_l2: f64,
    /// ⦀∂_t(φ−φ_h)⦀_{Q_j'} + d_j^{−1}⦀φ−φ_h⦀_{1,Q_j'}
    pub coupling: f64,
    pub rhs: f64,
    /// lhs/rhs; zero when both vanish
    pub ratio: f64,
    /// no quadrature point fell in Q_j
    pub empty_q: bool,
}

impl EnergyCheckRecord {
    /// ε^{−3}(I_j + X_j + d_j^{−2}⦀φ−φ_h⦀_{Q_j'})
    pub fn eps3_group(&self) -> f64 {
        self.epsilon.powi(-3) * (self.i_j + self.x_j + self.window_l2 / (self.d_j * self.d_j))
    }

    /// (h^{1/2}d_j^{−1/2} + ε^{−1}h d_j^{−1} + ε) · coupling
    pub fn coupling_group(&self) -> f64 {
        let c = (self.h_coarse / self.d_j).sqrt()
            + self.h_coarse / (self.epsilon * self.d_j)
            + self.epsilon;
        c * self.coupling
    }
}

/// Evaluates both sides of the local energy error inequality for a fine
/// reference trajectory φ and a coarse trajectory φ_h on nested meshes.
pub fn local_energy_check(
    dec: &DyadicDecomposition,
    phi: &TimeSampledField,
    phi_h: &TimeSampledField,
    clement: &ClementOperator,
    prolongation: &ProlongationMatrix,
    j: u32,
    epsilon: f64,
) -> Result<EnergyCheckRecord> {
    if j > dec.j_star() {
        return Err(Error::InvalidArgument(format!(
            "annulus {j} outside the decomposition range 0..={}",
            dec.j_star()
        )));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!("ε must lie in (0,1), got {epsilon}")));
    }
    if !phi.same_grid(phi_h) {
        return Err(Error::InvalidArgument(
            "trajectories are sampled on different time grids".into(),
        ));
    }
    if prolongation.n_coarse() != phi_h.space.num_dofs()
        || prolongation.n_fine() != phi.space.num_dofs()
    {
        return Err(Error::InvalidArgument(
            "prolongation does not map the coarse space into the fine space".into(),
        ));
    }
    let fine = phi.space.clone();
    let grid = phi.grid.clone();
    let nk = grid.nodes.len();
    // error e = φ − φ_h and Clément defect g = Ĩ_hφ − φ, both on the fine space
    let mut e_states = Vec::with_capacity(nk);
    let mut e_vels = Vec::with_capacity(nk);
    let mut g_states = Vec::with_capacity(nk);
    let mut g_vels = Vec::with_capacity(nk);
    for i in 0..nk {
        e_states.push(&phi.states[i] - prolongation.apply(&phi_h.states[i]));
        e_vels.push(&phi.velocities[i] - prolongation.apply(&phi_h.velocities[i]));
        let cl_s = clement.apply_coeffs(&phi.states[i])?;
        g_states.push(prolongation.apply(cl_s.coeffs()) - &phi.states[i]);
        let cl_v = clement.apply_coeffs(&phi.velocities[i])?;
        g_vels.push(prolongation.apply(cl_v.coeffs()) - &phi.velocities[i]);
    }
    let e_initial = &phi.initial - prolongation.apply(&phi_h.initial);
    let e = TimeSampledField::new(
        fine.clone(),
        grid.clone(),
        e_states,
        e_vels,
        None,
        e_initial,
    )?;
    let g = TimeSampledField::new(
        fine.clone(),
        grid.clone(),
        g_states,
        g_vels,
        None,
        DVector::zeros(fine.num_dofs()),
    )?;
    let d = dec.d(j);
    let h_coarse = phi_h.space.mesh().h();

    let lhs_dt = local_space_time_norm(dec, &e, QSelector::Q(j), TimeDeriv::Velocity, 0)?;
    let lhs_h1 = local_space_time_norm(dec, &e, QSelector::Q(j), TimeDeriv::State, 1)?;
    let lhs = lhs_dt.value + lhs_h1.value / d;

    let phi_h0 = FeFunction::new(fine.clone(), prolongation.apply(&phi_h.initial))?;
    let i_j = local_spatial_norm(dec, &phi_h0, OmegaSelector::OmegaPrime(j), 1)?.value
        + local_spatial_norm(dec, &phi_h0, OmegaSelector::OmegaPrime(j), 0)?.value / d;

    let xp = QSelector::QPrime(j);
    let x_j = d * local_space_time_norm(dec, &g, xp, TimeDeriv::Velocity, 1)?.value
        + local_space_time_norm(dec, &g, xp, TimeDeriv::Velocity, 0)?.value
        + local_space_time_norm(dec, &g, xp, TimeDeriv::State, 1)?.value / d
        + local_space_time_norm(dec, &g, xp, TimeDeriv::State, 0)?.value / (d * d);

    let window_l2 = local_space_time_norm(dec, &e, xp, TimeDeriv::State, 0)?.value;
    let coupling = local_space_time_norm(dec, &e, xp, TimeDeriv::Velocity, 0)?.value
        + local_space_time_norm(dec, &e, xp, TimeDeriv::State, 1)?.value / d;

    let mut rec = EnergyCheckRecord {
        j,
        epsilon,
        d_j: d,
        h_coarse,
        lhs,
        i_j,
        x_j,
        window_l2,
        coupling,
        rhs: 0.0,
        ratio: 0.0,
        empty_q: lhs_dt.empty,
    };
    rec.rhs = rec.eps3_group() + rec.coupling_group();
    rec.ratio = if rec.rhs > 0.0 {
        rec.lhs / rec.rhs
    } else if rec.lhs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(rec)
}
