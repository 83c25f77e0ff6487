//! Lagrange finite element spaces of degree 1 and 2 with homogeneous
//! Dirichlet boundary conditions imposed by dof elimination.
//!
//! A space owns its mesh, the Lagrange node layout (vertices, plus edge
//! midpoints for degree 2), a quadrature rule exact to degree ≥ 2r+2, and
//! lazily assembled mass/stiffness matrices on the interior (free) dofs.
//! Boundary dofs are not part of any coefficient vector: FE functions
//! vanish on ∂Ω identically.

pub mod delta;
pub mod function;
pub mod projection;

pub use delta::{discrete_delta, project_bump, RegularizedBump};
pub use function::FeFunction;
pub use projection::{
    clement_interpolate_field, field_error_l2, field_error_linf, l2_project, l2_project_fe,
    nodal_interpolant, prolong, ritz_project, ritz_project_fe, ClementOperator, Field,
    FieldWithGrad, GradField, NestedMap, NodalRestriction, ProlongationMatrix, ScalarField,
};

use crate::error::{Error, Result};
use crate::mesh::{Point2, TriMesh, Vector2};
use crate::quadrature::{tri_rule_deg5, tri_rule_deg6, TriRule};
use crate::sparse::SymmetricSparse;
use nalgebra::DVector;
use rayon::prelude::*;
use std::sync::{Arc, OnceLock};

/// Maximum local dofs per triangle (6 for degree 2).
pub const MAX_LOCAL: usize = 6;

/// Continuous Lagrange space S_h ⊂ H¹₀ of degree r ∈ {1, 2}.
pub struct FeSpace {
    mesh: TriMesh,
    degree: u32,
    /// All Lagrange nodes: mesh vertices first, then (degree 2) one node per
    /// unique edge in lexicographic edge order.
    node_pos: Vec<Point2>,
    node_boundary: Vec<bool>,
    /// One triangle incident to each node (lowest index).
    node_tri: Vec<usize>,
    /// Global node ids per triangle; entries [0..local_count] are valid.
    tri_nodes: Vec<[usize; MAX_LOCAL]>,
    interior_nodes: Vec<usize>,
    node_dof: Vec<Option<usize>>,
    rule: TriRule,
    mass: OnceLock<SymmetricSparse>,
    stiffness: OnceLock<SymmetricSparse>,
}

impl std::fmt::Debug for FeSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FeSpace")
            .field("degree", &self.degree)
            .field("nodes", &self.node_pos.len())
            .field("dofs", &self.interior_nodes.len())
            .finish()
    }
}

impl FeSpace {
    pub fn new(mesh: TriMesh, degree: u32) -> Result<Self> {
        if !(degree == 1 || degree == 2) {
            return Err(Error::InvalidArgument(format!(
                "unsupported element degree {degree}; expected 1 or 2"
            )));
        }
        let nv = mesh.num_points();
        let mut node_pos: Vec<Point2> = mesh.points().to_vec();
        let mut node_boundary: Vec<bool> =
            (0..nv).map(|i| mesh.is_boundary_node(i)).collect();
        let mut tri_nodes: Vec<[usize; MAX_LOCAL]> = mesh
            .triangles()
            .iter()
            .map(|&[a, b, c]| [a, b, c, usize::MAX, usize::MAX, usize::MAX])
            .collect();
        if degree == 2 {
            let edges = mesh.unique_edges();
            let incidence = mesh.edge_incidence();
            let mut edge_index = std::collections::HashMap::new();
            for (k, e) in edges.iter().enumerate() {
                edge_index.insert((e[0], e[1]), nv + k);
                let mid = Point2::from(
                    (mesh.point(e[0]).coords + mesh.point(e[1]).coords) * 0.5,
                );
                node_pos.push(mid);
                // an edge node is a boundary node iff the edge lies on ∂Ω,
                // i.e. it has a single incident triangle
                node_boundary.push(incidence[&(e[0], e[1])] == 1);
            }
            for (t, &[a, b, c]) in mesh.triangles().iter().enumerate() {
                let key = |u: usize, v: usize| (u.min(v), u.max(v));
                tri_nodes[t][3] = edge_index[&key(a, b)];
                tri_nodes[t][4] = edge_index[&key(b, c)];
                tri_nodes[t][5] = edge_index[&key(c, a)];
            }
        }
        let mut node_tri = vec![usize::MAX; node_pos.len()];
        let local = if degree == 1 { 3 } else { 6 };
        for (t, nodes) in tri_nodes.iter().enumerate() {
            for &n in &nodes[..local] {
                if node_tri[n] == usize::MAX {
                    node_tri[n] = t;
                }
            }
        }
        let mut interior_nodes = Vec::new();
        let mut node_dof = vec![None; node_pos.len()];
        for (n, &on_boundary) in node_boundary.iter().enumerate() {
            if !on_boundary {
                node_dof[n] = Some(interior_nodes.len());
                interior_nodes.push(n);
            }
        }
        let rule = if degree == 1 { tri_rule_deg5() } else { tri_rule_deg6() };
        Ok(Self {
            mesh,
            degree,
            node_pos,
            node_boundary,
            node_tri,
            tri_nodes,
            interior_nodes,
            node_dof,
            rule,
            mass: OnceLock::new(),
            stiffness: OnceLock::new(),
        })
    }

    pub fn shared(mesh: TriMesh, degree: u32) -> Result<Arc<Self>> {
        Ok(Arc::new(Self::new(mesh, degree)?))
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    /// Local dofs per triangle: 3 or 6.
    pub fn local_count(&self) -> usize {
        if self.degree == 1 {
            3
        } else {
            6
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.node_pos.len()
    }

    /// Number of free (interior) dofs.
    pub fn num_dofs(&self) -> usize {
        self.interior_nodes.len()
    }

    pub fn node_position(&self, node: usize) -> Point2 {
        self.node_pos[node]
    }

    pub fn node_is_boundary(&self, node: usize) -> bool {
        self.node_boundary[node]
    }

    /// A triangle whose closure contains the node.
    pub fn node_triangle(&self, node: usize) -> usize {
        self.node_tri[node]
    }

    pub fn dof_node(&self, dof: usize) -> usize {
        self.interior_nodes[dof]
    }

    pub fn dof_position(&self, dof: usize) -> Point2 {
        self.node_pos[self.interior_nodes[dof]]
    }

    pub fn node_dof(&self, node: usize) -> Option<usize> {
        self.node_dof[node]
    }

    /// Global node ids of triangle `t` (length `local_count`).
    pub fn tri_node_ids(&self, t: usize) -> &[usize] {
        &self.tri_nodes[t][..self.local_count()]
    }

    /// Quadrature rule used for assembly and norms (degree 5 for r=1,
    /// degree 6 for r=2; exact to ≥ 2r+2 in both cases).
    pub fn quad_rule(&self) -> &TriRule {
        &self.rule
    }

    /// Reference shape function values at barycentric coordinates.
    pub fn shape_values(&self, b: [f64; 3]) -> [f64; MAX_LOCAL] {
        let [l0, l1, l2] = b;
        if self.degree == 1 {
            [l0, l1, l2, 0.0, 0.0, 0.0]
        } else {
            [
                l0 * (2.0 * l0 - 1.0),
                l1 * (2.0 * l1 - 1.0),
                l2 * (2.0 * l2 - 1.0),
                4.0 * l0 * l1,
                4.0 * l1 * l2,
                4.0 * l2 * l0,
            ]
        }
    }

    /// Physical shape gradients on triangle `t` at barycentric coordinates.
    pub fn shape_gradients(&self, t: usize, b: [f64; 3]) -> [Vector2; MAX_LOCAL] {
        let g = self.mesh.bary_gradients(t);
        let zero = Vector2::zeros();
        if self.degree == 1 {
            [g[0], g[1], g[2], zero, zero, zero]
        } else {
            let [l0, l1, l2] = b;
            [
                g[0] * (4.0 * l0 - 1.0),
                g[1] * (4.0 * l1 - 1.0),
                g[2] * (4.0 * l2 - 1.0),
                (g[0] * l1 + g[1] * l0) * 4.0,
                (g[1] * l2 + g[2] * l1) * 4.0,
                (g[2] * l0 + g[0] * l2) * 4.0,
            ]
        }
    }

    /// Element mass and stiffness matrices on triangle `t`.
    fn element_matrices(&self, t: usize) -> ([[f64; MAX_LOCAL]; MAX_LOCAL], [[f64; MAX_LOCAL]; MAX_LOCAL]) {
        let k = self.local_count();
        let area = self.mesh.tri_area(t);
        let mut me = [[0.0; MAX_LOCAL]; MAX_LOCAL];
        let mut ke = [[0.0; MAX_LOCAL]; MAX_LOCAL];
        for (q, &b) in self.rule.bary.iter().enumerate() {
            let w = self.rule.weights[q] * area;
            let s = self.shape_values(b);
            let g = self.shape_gradients(t, b);
            for i in 0..k {
                for j in 0..=i {
                    me[i][j] += w * s[i] * s[j];
                    ke[i][j] += w * g[i].dot(&g[j]);
                }
            }
        }
        for i in 0..k {
            for j in (i + 1)..k {
                me[i][j] = me[j][i];
                ke[i][j] = ke[j][i];
            }
        }
        (me, ke)
    }

    fn assemble(&self, which_mass: bool, with_bc: bool) -> SymmetricSparse {
        let nt = self.mesh.num_triangles();
        let k = self.local_count();
        let chunk = 256;
        let chunks: Vec<Vec<(usize, usize, f64)>> = (0..nt)
            .collect::<Vec<_>>()
            .par_chunks(chunk)
            .map(|ts| {
                let mut triplets = Vec::with_capacity(ts.len() * k * k);
                for &t in ts {
                    let (me, ke) = self.element_matrices(t);
                    let e = if which_mass { &me } else { &ke };
                    let nodes = &self.tri_nodes[t];
                    for i in 0..k {
                        for j in 0..k {
                            let (gi, gj) = (nodes[i], nodes[j]);
                            if with_bc {
                                if let (Some(di), Some(dj)) =
                                    (self.node_dof[gi], self.node_dof[gj])
                                {
                                    triplets.push((di, dj, e[i][j]));
                                }
                            } else {
                                triplets.push((gi, gj, e[i][j]));
                            }
                        }
                    }
                }
                triplets
            })
            .collect();
        let all: Vec<(usize, usize, f64)> = chunks.into_iter().flatten().collect();
        let n = if with_bc { self.num_dofs() } else { self.num_nodes() };
        SymmetricSparse::from_triplets(n, &all)
    }

    /// Mass matrix on interior dofs: M[i][j] = ∫ φ_i φ_j.
    pub fn mass(&self) -> &SymmetricSparse {
        self.mass.get_or_init(|| self.assemble(true, true))
    }

    /// Stiffness matrix on interior dofs: K[i][j] = ∫ ∇φ_i·∇φ_j.
    pub fn stiffness(&self) -> &SymmetricSparse {
        self.stiffness.get_or_init(|| self.assemble(false, true))
    }

    /// Mass matrix over all nodes, no boundary elimination.
    pub fn mass_nobc(&self) -> SymmetricSparse {
        self.assemble(true, false)
    }

    /// Stiffness matrix over all nodes, no boundary elimination.
    pub fn stiffness_nobc(&self) -> SymmetricSparse {
        self.assemble(false, false)
    }

    /// Load vector b_i = ∫ f φ_i over interior dofs.
    pub fn load_vector<F: ScalarField + ?Sized>(&self, f: &F) -> DVector<f64> {
        self.load_vector_with_rule(f, &self.rule)
    }

    /// Load vector with an explicit quadrature rule (e.g. a subdivided one
    /// for integrands sharper than the mesh scale).
    pub fn load_vector_with_rule<F: ScalarField + ?Sized>(
        &self,
        f: &F,
        rule: &TriRule,
    ) -> DVector<f64> {
        let nt = self.mesh.num_triangles();
        let k = self.local_count();
        let chunks: Vec<(usize, DVector<f64>)> = (0..nt)
            .collect::<Vec<_>>()
            .par_chunks(512)
            .enumerate()
            .map(|(ci, ts)| {
                let mut b = DVector::zeros(self.num_dofs());
                for &t in ts {
                    let area = self.mesh.tri_area(t);
                    let nodes = &self.tri_nodes[t];
                    for (q, &bary) in rule.bary.iter().enumerate() {
                        let p = self.mesh.point_from_bary(t, bary);
                        let w = rule.weights[q] * area * f.value(p);
                        let s = self.shape_values(bary);
                        for i in 0..k {
                            if let Some(d) = self.node_dof[nodes[i]] {
                                b[d] += w * s[i];
                            }
                        }
                    }
                }
                (ci, b)
            })
            .collect();
        let mut ordered = chunks;
        ordered.sort_by_key(|&(ci, _)| ci);
        let mut b = DVector::zeros(self.num_dofs());
        for (_, part) in ordered {
            b += part;
        }
        b
    }

    /// Solves M x = b by conjugate gradients (‖r‖∞ ≤ 1e-12·‖b‖∞).
    pub fn solve_mass(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        crate::sparse::cg_solve(self.mass(), b, 1e-12, 60 * self.num_dofs().max(50))
    }

    /// Solves K x = b by conjugate gradients.
    pub fn solve_stiffness(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        crate::sparse::cg_solve(self.stiffness(), b, 5e-12, 120 * self.num_dofs().max(50))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn reference_triangle_space(degree: u32) -> FeSpace {
        let mesh = TriMesh::from_parts(
            vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)],
            vec![[0, 1, 2]],
            vec![true, true, true],
        )
        .unwrap();
        FeSpace::new(mesh, degree).unwrap()
    }

    #[test]
    fn reference_mass_matrix_oracle() {
        let sp = reference_triangle_space(1);
        let m = sp.mass_nobc().to_dense();
        let exact = [[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(m[(i, j)], exact[i][j] / 24.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn reference_stiffness_matrix_oracle() {
        let sp = reference_triangle_space(1);
        let k = sp.stiffness_nobc().to_dense();
        let exact = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(k[(i, j)], exact[i][j], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn mass_rows_sum_to_area_and_stiffness_rows_to_zero() {
        for degree in [1, 2] {
            let mesh = TriMesh::structured_l_shape(2);
            let sp = FeSpace::new(mesh, degree).unwrap();
            let m = sp.mass_nobc();
            let ones = DVector::from_element(sp.num_nodes(), 1.0);
            let total: f64 = m.mul_vec(&ones).iter().sum();
            assert_abs_diff_eq!(total, 3.0, epsilon = 1e-11);
            let k = sp.stiffness_nobc();
            let row_sums = k.mul_vec(&ones);
            assert!(row_sums.amax() < 1e-12, "constants in stiffness kernel");
        }
    }

    #[test]
    fn interior_dof_counts() {
        // square: (n-1)² vertex dofs for r=1; (2n-1)² total for r=2
        let sp = FeSpace::new(TriMesh::structured_square(4), 1).unwrap();
        assert_eq!(sp.num_dofs(), 9);
        let sp = FeSpace::new(TriMesh::structured_square(4), 2).unwrap();
        assert_eq!(sp.num_dofs(), 49);
        // L-shape r=1: 3n² - 4n + 1
        let sp = FeSpace::new(TriMesh::structured_l_shape(4), 1).unwrap();
        assert_eq!(sp.num_dofs(), 33);
        // degree-2 free system = #dofs - #boundary dofs
        let sp = FeSpace::new(TriMesh::structured_l_shape(2), 2).unwrap();
        let nb = (0..sp.num_nodes()).filter(|&n| sp.node_is_boundary(n)).count();
        assert_eq!(sp.num_dofs(), sp.num_nodes() - nb);
    }

    #[test]
    fn p2_edge_dof_on_diagonal_of_coarse_square_is_interior() {
        // the diagonal edge of the 2-triangle square connects two boundary
        // vertices but is itself interior, so its midpoint dof is free
        let sp = FeSpace::new(TriMesh::structured_square(1), 2).unwrap();
        assert_eq!(sp.num_dofs(), 1);
        let node = sp.dof_node(0);
        let p = sp.node_position(node);
        assert_eq!((p.x, p.y), (0.5, 0.5));
    }

    #[test]
    fn basis_continuity_across_shared_edges() {
        for degree in [1u32, 2] {
            let sp = FeSpace::new(TriMesh::structured_square(2), degree).unwrap();
            let mesh = sp.mesh();
            // for each interior edge, compare basis values from both sides at
            // the edge midpoint
            let mut seen = std::collections::HashMap::new();
            for t in 0..mesh.num_triangles() {
                let [a, b, c] = mesh.triangle(t);
                for (u, v) in [(a, b), (b, c), (c, a)] {
                    let key = (u.min(v), u.max(v));
                    if let Some(&t0) = seen.get(&key) {
                        let mid = Point2::from(
                            (mesh.point(u).coords + mesh.point(v).coords) * 0.5,
                        );
                        for side in [t0, t] {
                            let bary = mesh.bary_of_point(side, mid);
                            let s = sp.shape_values(bary);
                            // nodal interpolation of a global linear function
                            // x+2y must be continuous: evaluate through the
                            // local basis on each side
                            let mut val = 0.0;
                            for (i, &n) in sp.tri_node_ids(side).iter().enumerate() {
                                let p = sp.node_position(n);
                                val += (p.x + 2.0 * p.y) * s[i];
                            }
                            assert_abs_diff_eq!(val, mid.x + 2.0 * mid.y, epsilon = 1e-12);
                        }
                    } else {
                        seen.insert(key, t);
                    }
                }
            }
        }
    }

    #[test]
    fn p2_shape_functions_are_nodal() {
        let sp = reference_triangle_space(2);
        // local node order: 3 vertices then midpoints of (0,1),(1,2),(2,0)
        let nodes_bary = [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.5, 0.5, 0.0],
            [0.0, 0.5, 0.5],
            [0.5, 0.0, 0.5],
        ];
        for (i, &b) in nodes_bary.iter().enumerate() {
            let s = sp.shape_values(b);
            for (j, &sj) in s.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(sj, expect, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn mass_is_positive_definite() {
        use rand::{Rng, SeedableRng};
        let sp = FeSpace::new(TriMesh::structured_l_shape(2), 1).unwrap();
        let m = sp.mass();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let x = DVector::from_fn(sp.num_dofs(), |_, _| rng.gen::<f64>() - 0.5);
            if x.amax() > 0.0 {
                assert!(m.quadratic_form(&x, &x) > 0.0);
                assert!(sp.stiffness().quadratic_form(&x, &x) > 0.0);
            }
        }
    }

    #[test]
    fn inverse_inequality_constant_is_level_stable() {
        let ratio_max = |n: usize| {
            let sp = FeSpace::new(TriMesh::structured_square(n), 1).unwrap();
            let m = sp.mass();
            let k = sp.stiffness();
            let h = sp.mesh().h();
            (0..sp.num_dofs())
                .map(|i| (k.get(i, i) / m.get(i, i)).sqrt() * h)
                .fold(0.0_f64, f64::max)
        };
        let a = ratio_max(4);
        let b = ratio_max(8);
        assert!((a - b).abs() < 1e-9 * a.max(b), "h·‖∇φ‖/‖φ‖ is level-independent");
    }
}
