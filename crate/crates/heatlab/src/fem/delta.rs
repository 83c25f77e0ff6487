//! Discrete delta functions and smooth regularized point sources.
//!
//! The discrete delta δ_{h,x₀} ∈ S_h represents point evaluation:
//! (χ, δ_{h,x₀}) = χ(x₀) for every χ ∈ S_h. Its smooth companion is a
//! compactly supported radial bump of unit mass placed inside the element
//! containing x₀, used as a mesh-independent point-source model.

use super::{FeFunction, FeSpace, ScalarField};
use crate::error::Result;
use crate::mesh::{Point2, TriMesh};
use nalgebra::DVector;
use std::sync::Arc;

/// δ_{h,x₀}: solves M c = Φ(x₀) where Φ_i(x₀) are the interior basis values.
pub fn discrete_delta(space: &Arc<FeSpace>, x0: Point2) -> Result<FeFunction> {
    let (t, bary) = space.mesh().locate(x0)?;
    let s = space.shape_values(bary);
    let mut rhs = DVector::zeros(space.num_dofs());
    for (i, &n) in space.tri_node_ids(t).iter().enumerate() {
        if let Some(d) = space.node_dof(n) {
            rhs[d] += s[i];
        }
    }
    let c = space.solve_mass(&rhs)?;
    FeFunction::new(space.clone(), c)
}

/// Radial C³ bump of exact unit mass:
/// δ̃(x) = (5/πρ²)(1 − |x−c|²/ρ²)⁴ for |x−c| ≤ ρ, zero outside.
#[derive(Debug, Clone, Copy)]
pub struct RegularizedBump {
    center: Point2,
    rho: f64,
}

impl RegularizedBump {
    /// Places a bump near `x0` inside the element that contains it.
    ///
    /// The radius is ρ = min(dist(center, element edges), s/4), where s is
    /// the mesh cell scale. If x₀ sits closer than s/8 to an edge, the
    /// center is retargeted to the element's incenter so that the support
    /// stays inside a single element with a radius comparable to the cell.
    pub fn place(mesh: &TriMesh, x0: Point2) -> Result<Self> {
        let (t, _) = mesh.locate(x0)?;
        let s = mesh.cell_size();
        let mut center = x0;
        let mut dist = edge_distance(mesh, t, center);
        if dist < s / 8.0 {
            center = mesh.tri_incenter(t);
            dist = edge_distance(mesh, t, center);
        }
        let rho = dist.min(s / 4.0);
        Ok(Self { center, rho })
    }

    /// A bump with explicit center and radius (callers guarantee support).
    pub fn with_parameters(center: Point2, rho: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(crate::Error::InvalidArgument(format!(
                "bump radius must be positive, got {rho}"
            )));
        }
        Ok(Self { center, rho })
    }

    pub fn center(&self) -> Point2 {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.rho
    }

    /// ∫ δ̃ dx, analytically 1.
    pub fn mass(&self) -> f64 {
        1.0
    }

    pub fn value_at(&self, p: Point2) -> f64 {
        let r2 = (p - self.center).norm_squared() / (self.rho * self.rho);
        if r2 >= 1.0 {
            0.0
        } else {
            let u = 1.0 - r2;
            5.0 / (std::f64::consts::PI * self.rho * self.rho) * u * u * u * u
        }
    }
}

impl ScalarField for RegularizedBump {
    fn value(&self, p: Point2) -> f64 {
        self.value_at(p)
    }
}

/// L² projection of a bump with quadrature refined below the bump radius.
///
/// The bump is a degree-8 radial piecewise polynomial; the space's stock
/// rule underresolves it whenever ρ is below a few element diameters, so the
/// load is integrated on a composite subdivision chosen from ρ/h.
pub fn project_bump(space: &Arc<FeSpace>, bump: &RegularizedBump) -> Result<FeFunction> {
    let cell = space.mesh().cell_size();
    // subdivide until a child cell is no larger than ~ρ/4
    let ratio = cell / bump.radius();
    let depth = ((4.0 * ratio).log2().ceil().max(2.0) as u32).min(6);
    let rule = space.quad_rule().subdivided(depth);
    let b = space.load_vector_with_rule(bump, &rule);
    let c = space.solve_mass(&b)?;
    FeFunction::new(space.clone(), c)
}

fn edge_distance(mesh: &TriMesh, t: usize, p: Point2) -> f64 {
    let [a, b, c] = mesh.tri_vertices(t);
    crate::mesh::segment_distance(p, a, b)
        .min(crate::mesh::segment_distance(p, b, c))
        .min(crate::mesh::segment_distance(p, c, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::projection::Field;
    use approx::assert_abs_diff_eq;

    #[test]
    fn discrete_delta_reproduces_point_evaluation() {
        use rand::{Rng, SeedableRng};
        for degree in [1, 2] {
            let space = FeSpace::shared(TriMesh::structured_square(4), degree).unwrap();
            let x0 = Point2::new(0.3, 0.6);
            let delta = discrete_delta(&space, x0).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(degree as u64 + 100);
            for _ in 0..5 {
                let chi = FeFunction::new(
                    space.clone(),
                    DVector::from_fn(space.num_dofs(), |_, _| rng.gen::<f64>() - 0.5),
                )
                .unwrap();
                let pairing = space.mass().quadratic_form(chi.coeffs(), delta.coeffs());
                assert_abs_diff_eq!(pairing, chi.eval(x0).unwrap(), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn discrete_delta_linf_scales_like_inverse_h_squared() {
        let norm_at = |n: usize| {
            let space = FeSpace::shared(TriMesh::structured_square(n), 1).unwrap();
            let delta = discrete_delta(&space, Point2::new(0.5, 0.5)).unwrap();
            delta.norm_linf()
        };
        let a = norm_at(8);
        let b = norm_at(16);
        let rate = (b / a).log2();
        assert!(rate > 1.7 && rate < 2.3, "‖δ_h‖∞ should grow like h^-2, rate {rate}");
    }

    #[test]
    fn discrete_delta_outside_domain_is_rejected() {
        let space = FeSpace::shared(TriMesh::structured_l_shape(2), 1).unwrap();
        // the excluded quadrant of the L-shape
        let r = discrete_delta(&space, Point2::new(0.5, -0.5));
        assert!(matches!(r, Err(crate::Error::PointOutsideDomain(_, _))));
    }

    #[test]
    fn bump_has_unit_mass_under_quadrature() {
        // integrate on a mesh fine enough to resolve the bump
        let mesh = TriMesh::structured_square(64);
        let bump = RegularizedBump::with_parameters(Point2::new(0.5, 0.5), 0.25).unwrap();
        let rule = crate::quadrature::tri_rule_deg6();
        let mut total = 0.0;
        for t in 0..mesh.num_triangles() {
            let area = mesh.tri_area(t);
            for (q, &bary) in rule.bary.iter().enumerate() {
                total += rule.weights[q] * area * bump.value_at(mesh.point_from_bary(t, bary));
            }
        }
        assert_abs_diff_eq!(total, 1.0, epsilon = 2e-5);
    }

    #[test]
    fn bump_placement_keeps_support_in_one_element() {
        let mesh = TriMesh::structured_square(4);
        for &p in [
            Point2::new(0.55, 0.30),
            Point2::new(0.26, 0.26),
            // extremely close to an element edge: retargets to the incenter
            Point2::new(0.5002, 0.3),
        ]
        .iter()
        {
            let bump = RegularizedBump::place(&mesh, p).unwrap();
            let (t, _) = mesh.locate(bump.center()).unwrap();
            assert!(bump.radius() > 0.0);
            assert!(
                edge_distance(&mesh, t, bump.center()) >= bump.radius() - 1e-14,
                "support must stay inside the element"
            );
            assert!(bump.radius() <= mesh.cell_size() / 4.0 + 1e-14);
        }
    }

    #[test]
    fn projected_bump_in_one_element_equals_discrete_delta_for_p1() {
        // when supp δ̃ lies inside a single element, every P1 basis function
        // is affine there, so (δ̃, φ_i) = φ_i(center): the L² projection of
        // the bump IS the discrete delta at its center (up to quadrature)
        let mesh = TriMesh::structured_square(4);
        let space = FeSpace::shared(mesh.clone(), 1).unwrap();
        let bump = RegularizedBump::place(&mesh, Point2::new(0.55, 0.30)).unwrap();
        let proj = project_bump(&space, &bump).unwrap();
        let delta = discrete_delta(&space, bump.center()).unwrap();
        let diff = (proj.coeffs() - delta.coeffs()).amax() / delta.norm_linf();
        assert!(diff < 1e-5, "relative nodal gap {diff}");
    }

    #[test]
    fn projected_bump_keeps_unit_mass_on_resolving_mesh() {
        let mesh = TriMesh::structured_square(32);
        let space = FeSpace::shared(mesh.clone(), 1).unwrap();
        // radius of four cells, mimicking a reference-resolution projection
        let bump = RegularizedBump::with_parameters(
            Point2::new(0.5, 0.5),
            4.0 * mesh.cell_size(),
        )
        .unwrap();
        let proj = project_bump(&space, &bump).unwrap();
        // ∫ P_h δ̃ dx = Σ_i c_i ∫ φ_i
        let ones = Field(|_p: Point2| 1.0);
        let phi_integrals = space.load_vector(&ones);
        let total: f64 = proj.coeffs().dot(&phi_integrals);
        approx::assert_abs_diff_eq!(total, 1.0, epsilon = 1e-6);
    }
}
