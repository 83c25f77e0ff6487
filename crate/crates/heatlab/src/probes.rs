//! Deterministic probe families and probe-point grids that drive the
//! estimator suite: eigenmodes, seeded random fields, nodal spikes,
//! corner-concentrated bumps, sign checkerboards, the singular corner
//! field on nonconvex domains, and interior anchor bumps for kernels.

use crate::error::{Error, Result};
use crate::fem::projection::ScalarField;
use crate::fem::{project_bump, FeFunction, FeSpace, RegularizedBump};
use crate::mesh::{Point2, TriMesh};
use crate::spectral::SpectralDecomposition;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// A named test field. Ids are stable across runs so CSV aux columns can
/// reference the argmax probe.
pub struct Probe {
    pub id: String,
    pub field: FeFunction,
}

fn ensure_nonzero(p: Probe) -> Result<Probe> {
    if p.field.coeffs().amax() == 0.0 {
        return Err(Error::Internal(format!("probe {} is identically zero", p.id)));
    }
    Ok(p)
}

/// The first `m` discrete eigenmodes, ids `eig1..eigm`.
pub fn eigenmode_probes(dec: &SpectralDecomposition, m: usize) -> Result<Vec<Probe>> {
    if m == 0 || m > dec.len() {
        return Err(Error::InvalidArgument(format!(
            "requested {m} eigenmodes from a decomposition with {}",
            dec.len()
        )));
    }
    (0..m)
        .map(|i| {
            let mut a = DVector::zeros(dec.len());
            a[i] = 1.0;
            ensure_nonzero(Probe { id: format!("eig{}", i + 1), field: dec.from_modal(&a) })
        })
        .collect()
}

/// Seeded random-coefficient fields, coefficients uniform in [−1, 1].
pub fn random_probes(space: &Arc<FeSpace>, count: usize, seed: u64) -> Result<Vec<Probe>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let c = DVector::from_fn(space.num_dofs(), |_, _| rng.gen_range(-1.0..1.0));
            ensure_nonzero(Probe {
                id: format!("rand{k}"),
                field: FeFunction::new(space.clone(), c)?,
            })
        })
        .collect()
}

/// Unit spikes at dofs spread evenly through the numbering.
pub fn nodal_spike_probes(space: &Arc<FeSpace>, count: usize) -> Result<Vec<Probe>> {
    let n = space.num_dofs();
    if count == 0 || n < count + 1 {
        return Err(Error::InvalidArgument(format!(
            "cannot spread {count} spikes over {n} dofs"
        )));
    }
    (0..count)
        .map(|k| {
            let d = n * (k + 1) / (count + 1);
            let mut c = DVector::zeros(n);
            c[d] = 1.0;
            ensure_nonzero(Probe {
                id: format!("spike{k}"),
                field: FeFunction::new(space.clone(), c)?,
            })
        })
        .collect()
}

/// A bump of fixed radius concentrated near a domain corner, projected
/// into the space (projection keeps it nonzero at any level).
pub fn corner_bump_probe(space: &Arc<FeSpace>, center: Point2) -> Result<Probe> {
    let bump = RegularizedBump::with_parameters(center, 0.12)?;
    ensure_nonzero(Probe { id: "corner0".into(), field: project_bump(space, &bump)? })
}

/// Coefficients ±1 alternating with the parity of the structured cell
/// containing each dof.
pub fn checkerboard_probe(space: &Arc<FeSpace>) -> Result<Probe> {
    let cell = space.mesh().cell_size();
    let c = DVector::from_fn(space.num_dofs(), |d, _| {
        let p = space.dof_position(d);
        let ix = ((p.x + 2.0) / cell).floor() as i64;
        let iy = ((p.y + 2.0) / cell).floor() as i64;
        if (ix + iy) % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    });
    ensure_nonzero(Probe { id: "checker0".into(), field: FeFunction::new(space.clone(), c)? })
}

/// The standard eleven-probe family: 3 eigenmodes, 3 seeded random fields,
/// 3 nodal spikes, 1 corner bump (centered at `corner_center`), and 1
/// checkerboard. Deterministic for fixed seed.
pub fn default_probes(
    dec: &SpectralDecomposition,
    corner_center: Point2,
    seed: u64,
) -> Result<Vec<Probe>> {
    let space = dec.space();
    let mut probes = eigenmode_probes(dec, 3)?;
    probes.extend(random_probes(space, 3, seed)?);
    probes.extend(nodal_spike_probes(space, 3)?);
    probes.push(corner_bump_probe(space, corner_center)?);
    probes.push(checkerboard_probe(space)?);
    Ok(probes)
}

/// A kernel source point: the incenter of one probe-mesh triangle, carrying
/// that triangle's area as quadrature weight. `corner` marks triangles
/// touching the flagged corner (the reentrant vertex on nonconvex domains).
#[derive(Debug, Clone, Copy)]
pub struct ProbePoint {
    pub point: Point2,
    pub weight: f64,
    pub corner: bool,
}

/// Incenters of every triangle of a (coarse) probe mesh. The weights tile
/// the domain, so discrete L^q norms over the points are midpoint-rule
/// quadratures.
pub fn probe_points(probe_mesh: &TriMesh, corner: Option<Point2>) -> Vec<ProbePoint> {
    (0..probe_mesh.num_triangles())
        .map(|t| {
            let touches = corner.map_or(false, |c| {
                probe_mesh
                    .tri_vertices(t)
                    .iter()
                    .any(|&v| (v - c).norm() < 1e-12)
            });
            ProbePoint {
                point: probe_mesh.tri_incenter(t),
                weight: probe_mesh.tri_area(t),
                corner: touches,
            }
        })
        .collect()
}

/// A unit-mass bump centered at the incenter of the anchor-mesh triangle
/// containing `hint`, with radius exactly a quarter cell. The incenter
/// keeps the support inside one element (inradius ≈ 0.29 cell > ρ) and
/// away from the domain boundary, so no bump mass is clipped.
pub fn interior_anchor_bump(anchor_mesh: &TriMesh, hint: Point2) -> Result<RegularizedBump> {
    let (t, _) = anchor_mesh.locate(hint)?;
    RegularizedBump::with_parameters(
        anchor_mesh.tri_incenter(t),
        anchor_mesh.cell_size() / 4.0,
    )
}

/// r^{2/3} sin(2θ/3) with a radial cutoff: the leading corner singularity
/// of the Dirichlet Laplacian at a 3π/2 reentrant vertex at the origin,
/// with θ measured counterclockwise from the positive x-axis. The cutoff
/// is 1 for r ≤ 0.25 and 0 for r ≥ 0.75, so the field has zero trace.
#[derive(Debug, Clone, Copy)]
pub struct SingularCornerField;

impl ScalarField for SingularCornerField {
    fn value(&self, p: Point2) -> f64 {
        let r = p.coords.norm();
        if r == 0.0 || r >= 0.75 {
            return 0.0;
        }
        let mut theta = p.y.atan2(p.x);
        if theta < 0.0 {
            theta += 2.0 * std::f64::consts::PI;
        }
        let s = ((r - 0.25) / 0.5).clamp(0.0, 1.0);
        let cutoff = 1.0 - s * s * (3.0 - 2.0 * s);
        r.powf(2.0 / 3.0) * (2.0 * theta / 3.0).sin() * cutoff
    }
}
