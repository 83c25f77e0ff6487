//! Projections and interpolation onto finite element spaces: L² and Ritz
//! projections of callables and of functions on nested finer meshes, exact
//! inter-space transfer (prolongation / nodal restriction), and a Clément
//! quasi-interpolant built from local patch L² projections.

use super::{FeFunction, FeSpace};
use crate::error::{Error, Result};
use crate::mesh::{Point2, TriMesh, Vector2};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::Arc;

/// A pointwise-evaluable scalar field on the domain.
pub trait ScalarField: Sync {
    fn value(&self, p: Point2) -> f64;
}

/// A scalar field with an evaluable gradient (needed by the Ritz projection).
pub trait GradField: ScalarField {
    fn gradient(&self, p: Point2) -> Vector2;
}

/// Wraps a closure as a [`ScalarField`].
pub struct Field<F>(pub F);

impl<F: Fn(Point2) -> f64 + Sync> ScalarField for Field<F> {
    fn value(&self, p: Point2) -> f64 {
        (self.0)(p)
    }
}

/// Wraps a value closure and a gradient closure as a [`GradField`].
pub struct FieldWithGrad<F, G>(pub F, pub G);

impl<F: Fn(Point2) -> f64 + Sync, G: Sync> ScalarField for FieldWithGrad<F, G> {
    fn value(&self, p: Point2) -> f64 {
        (self.0)(p)
    }
}

impl<F: Fn(Point2) -> f64 + Sync, G: Fn(Point2) -> Vector2 + Sync> GradField
    for FieldWithGrad<F, G>
{
    fn gradient(&self, p: Point2) -> Vector2 {
        (self.1)(p)
    }
}

/// L² projection P_h f: solves M c = (f, φ_i).
pub fn l2_project<F: ScalarField + ?Sized>(
    space: &Arc<FeSpace>,
    f: &F,
) -> Result<FeFunction> {
    let b = space.load_vector(f);
    let c = space.solve_mass(&b)?;
    FeFunction::new(space.clone(), c)
}

/// Ritz projection R_h f: solves K c = (∇f, ∇φ_i).
pub fn ritz_project<F: GradField + ?Sized>(
    space: &Arc<FeSpace>,
    f: &F,
) -> Result<FeFunction> {
    let mesh = space.mesh();
    let rule = space.quad_rule();
    let k = space.local_count();
    let chunks: Vec<(usize, DVector<f64>)> = (0..mesh.num_triangles())
        .collect::<Vec<_>>()
        .par_chunks(512)
        .enumerate()
        .map(|(ci, ts)| {
            let mut b = DVector::zeros(space.num_dofs());
            for &t in ts {
                let area = mesh.tri_area(t);
                let nodes = space.tri_node_ids(t);
                for (q, &bary) in rule.bary.iter().enumerate() {
                    let p = mesh.point_from_bary(t, bary);
                    let gf = f.gradient(p);
                    let w = rule.weights[q] * area;
                    let g = space.shape_gradients(t, bary);
                    for i in 0..k {
                        if let Some(d) = space.node_dof(nodes[i]) {
                            b[d] += w * gf.dot(&g[i]);
                        }
                    }
                }
            }
            (ci, b)
        })
        .collect();
    let mut ordered = chunks;
    ordered.sort_by_key(|&(ci, _)| ci);
    let mut b = DVector::zeros(space.num_dofs());
    for (_, part) in ordered {
        b += part;
    }
    let c = space.solve_stiffness(&b)?;
    FeFunction::new(space.clone(), c)
}

/// Nodal interpolant: coefficients are field values at interior nodes.
pub fn nodal_interpolant<F: ScalarField + ?Sized>(
    space: &Arc<FeSpace>,
    f: &F,
) -> FeFunction {
    let c = DVector::from_fn(space.num_dofs(), |d, _| f.value(space.dof_position(d)));
    FeFunction::new(space.clone(), c).expect("length matches by construction")
}

/// Element containment map between a coarse mesh and a nested refinement.
pub struct NestedMap {
    fine_to_coarse: Vec<usize>,
    coarse_to_fine: Vec<Vec<usize>>,
}

impl NestedMap {
    /// Locates every fine triangle inside a coarse one; errors if any fine
    /// triangle straddles coarse element boundaries.
    pub fn new(coarse: &TriMesh, fine: &TriMesh) -> Result<Self> {
        let fine_to_coarse: Vec<Result<usize>> = (0..fine.num_triangles())
            .into_par_iter()
            .map(|ft| {
                let inc = fine.tri_incenter(ft);
                let (ct, _) = coarse.locate(inc).map_err(|_| {
                    Error::InvalidInput(format!(
                        "fine triangle {ft} lies outside the coarse mesh"
                    ))
                })?;
                let [a, b, c] = fine.triangle(ft);
                for v in [a, b, c] {
                    let bary = coarse.bary_of_point(ct, fine.point(v));
                    if bary.iter().any(|&x| x < -1e-10) {
                        return Err(Error::InvalidInput(format!(
                            "meshes are not nested: fine triangle {ft} crosses a coarse edge"
                        )));
                    }
                }
                Ok(ct)
            })
            .collect();
        let mut map = Vec::with_capacity(fine.num_triangles());
        for r in fine_to_coarse {
            map.push(r?);
        }
        let mut coarse_to_fine = vec![Vec::new(); coarse.num_triangles()];
        for (ft, &ct) in map.iter().enumerate() {
            coarse_to_fine[ct].push(ft);
        }
        Ok(Self { fine_to_coarse: map, coarse_to_fine })
    }

    pub fn coarse_tri(&self, fine_tri: usize) -> usize {
        self.fine_to_coarse[fine_tri]
    }

    pub fn fine_tris_of(&self, coarse_tri: usize) -> &[usize] {
        &self.coarse_to_fine[coarse_tri]
    }
}

/// Sparse representation of the natural injection S_H → S_h (nested meshes,
/// equal degree): exact, one small row per fine dof.
pub struct ProlongationMatrix {
    rows: Vec<Vec<(usize, f64)>>,
    n_coarse: usize,
}

impl ProlongationMatrix {
    pub fn new(coarse: &Arc<FeSpace>, fine: &Arc<FeSpace>, map: &NestedMap) -> Self {
        let rows: Vec<Vec<(usize, f64)>> = (0..fine.num_dofs())
            .into_par_iter()
            .map(|d| {
                let node = fine.dof_node(d);
                let p = fine.node_position(node);
                let ft = fine.node_triangle(node);
                let ct = map.coarse_tri(ft);
                let bary = coarse.mesh().bary_of_point(ct, p);
                let s = coarse.shape_values(bary);
                let mut row = Vec::new();
                for (i, &cn) in coarse.tri_node_ids(ct).iter().enumerate() {
                    if let Some(cd) = coarse.node_dof(cn) {
                        if s[i] != 0.0 {
                            row.push((cd, s[i]));
                        }
                    }
                }
                row.sort_by_key(|&(cd, _)| cd);
                row
            })
            .collect();
        Self { rows, n_coarse: coarse.num_dofs() }
    }

    pub fn n_coarse(&self) -> usize {
        self.n_coarse
    }

    pub fn n_fine(&self) -> usize {
        self.rows.len()
    }

    pub fn apply(&self, coarse_coeffs: &DVector<f64>) -> DVector<f64> {
        assert_eq!(coarse_coeffs.len(), self.n_coarse);
        DVector::from_fn(self.rows.len(), |i, _| {
            self.rows[i]
                .iter()
                .map(|&(j, w)| w * coarse_coeffs[j])
                .sum()
        })
    }
}

/// Represents a coarse FE function exactly on a nested finer space.
pub fn prolong(
    coarse_fn: &FeFunction,
    fine: &Arc<FeSpace>,
    map: &NestedMap,
) -> Result<FeFunction> {
    let coarse = coarse_fn.space();
    let c = DVector::from_fn(fine.num_dofs(), |d, _| {
        let node = fine.dof_node(d);
        let p = fine.node_position(node);
        let ft = fine.node_triangle(node);
        let ct = map.coarse_tri(ft);
        let bary = coarse.mesh().bary_of_point(ct, p);
        coarse_fn.eval_in_tri(ct, bary)
    });
    FeFunction::new(fine.clone(), c)
}

/// Cached point-evaluation table for restricting fine functions to coarse
/// nodes (the nodal interpolant of a nested fine function).
pub struct NodalRestriction {
    entries: Vec<(usize, [f64; 3])>,
    coarse: Arc<FeSpace>,
}

impl NodalRestriction {
    pub fn new(coarse: &Arc<FeSpace>, fine: &Arc<FeSpace>) -> Result<Self> {
        let entries: Vec<Result<(usize, [f64; 3])>> = (0..coarse.num_dofs())
            .into_par_iter()
            .map(|d| {
                let p = coarse.dof_position(d);
                let (t, bary) = fine.mesh().locate(p)?;
                Ok((t, bary))
            })
            .collect();
        let mut table = Vec::with_capacity(coarse.num_dofs());
        for e in entries {
            table.push(e?);
        }
        Ok(Self { entries: table, coarse: coarse.clone() })
    }

    pub fn apply(&self, fine_fn: &FeFunction) -> FeFunction {
        let c = DVector::from_fn(self.coarse.num_dofs(), |d, _| {
            let (t, bary) = self.entries[d];
            fine_fn.eval_in_tri(t, bary)
        });
        FeFunction::new(self.coarse.clone(), c).expect("length matches")
    }
}

/// L² projection of a function on a nested finer mesh: the right-hand side
/// (v_f, φ_i) is integrated exactly over fine elements.
pub fn l2_project_fe(
    coarse: &Arc<FeSpace>,
    fine_fn: &FeFunction,
    map: &NestedMap,
) -> Result<FeFunction> {
    let b = cross_mesh_rhs(coarse, fine_fn, map, false);
    let c = coarse.solve_mass(&b)?;
    FeFunction::new(coarse.clone(), c)
}

/// Ritz projection of a function on a nested finer mesh.
pub fn ritz_project_fe(
    coarse: &Arc<FeSpace>,
    fine_fn: &FeFunction,
    map: &NestedMap,
) -> Result<FeFunction> {
    let b = cross_mesh_rhs(coarse, fine_fn, map, true);
    let c = coarse.solve_stiffness(&b)?;
    FeFunction::new(coarse.clone(), c)
}

/// Assembles (v_f, φ_i) or (∇v_f, ∇φ_i) over fine elements; the integrand is
/// a polynomial on each fine triangle, so the fine-space rule is exact.
fn cross_mesh_rhs(
    coarse: &Arc<FeSpace>,
    fine_fn: &FeFunction,
    map: &NestedMap,
    gradient_form: bool,
) -> DVector<f64> {
    let fine = fine_fn.space();
    let mesh = fine.mesh();
    let rule = fine.quad_rule();
    let kc = coarse.local_count();
    let chunks: Vec<(usize, DVector<f64>)> = (0..mesh.num_triangles())
        .collect::<Vec<_>>()
        .par_chunks(512)
        .enumerate()
        .map(|(ci, ts)| {
            let mut b = DVector::zeros(coarse.num_dofs());
            for &ft in ts {
                let area = mesh.tri_area(ft);
                let ct = map.coarse_tri(ft);
                let cnodes = coarse.tri_node_ids(ct);
                for (q, &bary) in rule.bary.iter().enumerate() {
                    let w = rule.weights[q] * area;
                    let p = mesh.point_from_bary(ft, bary);
                    let cb = coarse.mesh().bary_of_point(ct, p);
                    if gradient_form {
                        let gv = fine_fn.gradient_in_tri(ft, bary);
                        let g = coarse.shape_gradients(ct, cb);
                        for i in 0..kc {
                            if let Some(d) = coarse.node_dof(cnodes[i]) {
                                b[d] += w * gv.dot(&g[i]);
                            }
                        }
                    } else {
                        let v = fine_fn.eval_in_tri(ft, bary);
                        let s = coarse.shape_values(cb);
                        for i in 0..kc {
                            if let Some(d) = coarse.node_dof(cnodes[i]) {
                                b[d] += w * v * s[i];
                            }
                        }
                    }
                }
            }
            (ci, b)
        })
        .collect();
    let mut ordered = chunks;
    ordered.sort_by_key(|&(ci, _)| ci);
    let mut b = DVector::zeros(coarse.num_dofs());
    for (_, part) in ordered {
        b += part;
    }
    b
}

/// Node patches and the local projection weights of the Clément interpolant.
///
/// For an interior node x_i with patch τ_i (union of triangles whose closure
/// contains x_i), the interpolated coefficient is (P^{(i)} v)(x_i), where
/// P^{(i)} is the L² projection onto the FE space on the patch submesh with
/// all patch nodes free. With the nodal basis, that value is the x_i-entry
/// of the patch mass solve, i.e. a fixed weight vector against (v, ψ_k).
struct PatchSet {
    /// Per interior dof: patch triangles.
    tris: Vec<Vec<usize>>,
    /// Per interior dof: (node id, weight) pairs such that the coefficient
    /// equals Σ_k weight_k (v, ψ_{node_k}).
    weights: Vec<Vec<(usize, f64)>>,
}

impl PatchSet {
    fn build(space: &FeSpace) -> Result<Self> {
        let mesh = space.mesh();
        let k = space.local_count();
        let mut node_tris: Vec<Vec<usize>> = vec![Vec::new(); space.num_nodes()];
        for t in 0..mesh.num_triangles() {
            for &n in space.tri_node_ids(t) {
                node_tris[n].push(t);
            }
        }
        let mut tris = Vec::with_capacity(space.num_dofs());
        let mut weights = Vec::with_capacity(space.num_dofs());
        for d in 0..space.num_dofs() {
            let center = space.dof_node(d);
            let patch = node_tris[center].clone();
            if patch.is_empty() {
                return Err(Error::Internal(format!(
                    "empty patch around node {center}"
                )));
            }
            // collect patch nodes (all free on the patch submesh)
            let mut nodes: Vec<usize> = patch
                .iter()
                .flat_map(|&t| space.tri_node_ids(t).iter().copied())
                .collect();
            nodes.sort_unstable();
            nodes.dedup();
            let index: HashMap<usize, usize> =
                nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
            // patch mass matrix
            let m = nodes.len();
            let mut mass = DMatrix::zeros(m, m);
            for &t in &patch {
                let area = mesh.tri_area(t);
                let tn = space.tri_node_ids(t);
                let rule = space.quad_rule();
                for (q, &bary) in rule.bary.iter().enumerate() {
                    let w = rule.weights[q] * area;
                    let s = space.shape_values(bary);
                    for i in 0..k {
                        for j in 0..k {
                            mass[(index[&tn[i]], index[&tn[j]])] += w * s[i] * s[j];
                        }
                    }
                }
            }
            let chol = mass.cholesky().ok_or_else(|| {
                Error::Internal("patch mass matrix is not positive definite".into())
            })?;
            let mut rhs = DVector::zeros(m);
            rhs[index[&center]] = 1.0;
            let y = chol.solve(&rhs);
            let w: Vec<(usize, f64)> =
                nodes.iter().enumerate().map(|(i, &n)| (n, y[i])).collect();
            tris.push(patch);
            weights.push(w);
        }
        Ok(Self { tris, weights })
    }
}

/// Clément interpolation of a callable field: each interior coefficient is
/// the patch-local L² projection evaluated at its node.
pub fn clement_interpolate_field<F: ScalarField + ?Sized>(
    space: &Arc<FeSpace>,
    f: &F,
) -> Result<FeFunction> {
    let patches = PatchSet::build(space)?;
    let mesh = space.mesh();
    let rule = space.quad_rule();
    let k = space.local_count();
    let coeffs: Vec<f64> = (0..space.num_dofs())
        .into_par_iter()
        .map(|d| {
            // b_k = (f, ψ_k) over the patch
            let mut b: HashMap<usize, f64> = HashMap::new();
            for &t in &patches.tris[d] {
                let area = mesh.tri_area(t);
                let tn = space.tri_node_ids(t);
                for (q, &bary) in rule.bary.iter().enumerate() {
                    let p = mesh.point_from_bary(t, bary);
                    let w = rule.weights[q] * area * f.value(p);
                    let s = space.shape_values(bary);
                    for i in 0..k {
                        *b.entry(tn[i]).or_insert(0.0) += w * s[i];
                    }
                }
            }
            patches.weights[d]
                .iter()
                .map(|&(n, w)| w * b.get(&n).copied().unwrap_or(0.0))
                .sum()
        })
        .collect();
    FeFunction::new(space.clone(), DVector::from_vec(coeffs))
}

/// The Clément interpolant as a fixed sparse operator from a nested fine
/// space to a coarse one. Rows depend only on the geometry, so the operator
/// is assembled once and applied to many fine functions.
pub struct ClementOperator {
    coarse: Arc<FeSpace>,
    rows: Vec<Vec<(usize, f64)>>,
    n_fine: usize,
}

impl ClementOperator {
    pub fn new(
        coarse: &Arc<FeSpace>,
        fine: &Arc<FeSpace>,
        map: &NestedMap,
    ) -> Result<Self> {
        let patches = PatchSet::build(coarse)?;
        let fmesh = fine.mesh();
        let rule = fine.quad_rule();
        let kf = fine.local_count();
        let kc = coarse.local_count();
        let rows: Vec<Vec<(usize, f64)>> = (0..coarse.num_dofs())
            .into_par_iter()
            .map(|d| {
                let mut weight_of: HashMap<usize, f64> = HashMap::new();
                for &(n, w) in &patches.weights[d] {
                    weight_of.insert(n, w);
                }
                let mut row: HashMap<usize, f64> = HashMap::new();
                for &ct in &patches.tris[d] {
                    let cnodes = coarse.tri_node_ids(ct);
                    for &ft in map.fine_tris_of(ct) {
                        let area = fmesh.tri_area(ft);
                        let fnodes = fine.tri_node_ids(ft);
                        for (q, &bary) in rule.bary.iter().enumerate() {
                            let p = fmesh.point_from_bary(ft, bary);
                            let cb = coarse.mesh().bary_of_point(ct, p);
                            let sc = coarse.shape_values(cb);
                            // Σ_k y_k ψ_k(x_q): the patch weight functional
                            let mut yv = 0.0;
                            for i in 0..kc {
                                if let Some(&w) = weight_of.get(&cnodes[i]) {
                                    yv += w * sc[i];
                                }
                            }
                            let sf = fine.shape_values(bary);
                            let scale = rule.weights[q] * area * yv;
                            for i in 0..kf {
                                if let Some(fd) = fine.node_dof(fnodes[i]) {
                                    if sf[i] != 0.0 {
                                        *row.entry(fd).or_insert(0.0) += scale * sf[i];
                                    }
                                }
                            }
                        }
                    }
                }
                let mut row: Vec<(usize, f64)> = row.into_iter().collect();
                row.sort_by_key(|&(j, _)| j);
                row
            })
            .collect();
        Ok(Self { coarse: coarse.clone(), rows, n_fine: fine.num_dofs() })
    }

    pub fn apply(&self, fine_fn: &FeFunction) -> Result<FeFunction> {
        self.apply_coeffs(fine_fn.coeffs())
    }

    pub fn apply_coeffs(&self, fine_coeffs: &DVector<f64>) -> Result<FeFunction> {
        if fine_coeffs.len() != self.n_fine {
            return Err(Error::InvalidArgument(format!(
                "expected {} fine coefficients, got {}",
                self.n_fine,
                fine_coeffs.len()
            )));
        }
        let c = DVector::from_fn(self.coarse.num_dofs(), |i, _| {
            self.rows[i].iter().map(|&(j, w)| w * fine_coeffs[j]).sum()
        });
        FeFunction::new(self.coarse.clone(), c)
    }

    /// Fine dofs the given coarse coefficient depends on.
    pub fn row_support(&self, coarse_dof: usize) -> &[(usize, f64)] {
        &self.rows[coarse_dof]
    }
}

/// ‖f_h − g‖_{L²} by quadrature on the FE mesh.
pub fn field_error_l2<F: ScalarField + ?Sized>(f: &FeFunction, g: &F) -> f64 {
    let space = f.space();
    let mesh = space.mesh();
    let rule = space.quad_rule();
    let per_tri: Vec<f64> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| {
            let area = mesh.tri_area(t);
            let mut acc = 0.0;
            for (q, &bary) in rule.bary.iter().enumerate() {
                let p = mesh.point_from_bary(t, bary);
                let e = f.eval_in_tri(t, bary) - g.value(p);
                acc += rule.weights[q] * area * e * e;
            }
            acc
        })
        .collect();
    per_tri.iter().sum::<f64>().max(0.0).sqrt()
}

/// sup |f_h − g| sampled at quadrature points and Lagrange nodes.
pub fn field_error_linf<F: ScalarField + ?Sized>(f: &FeFunction, g: &F) -> f64 {
    let space = f.space();
    let mesh = space.mesh();
    let rule = space.quad_rule();
    let quad = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| {
            let mut worst = 0.0_f64;
            for &bary in rule.bary.iter() {
                let p = mesh.point_from_bary(t, bary);
                worst = worst.max((f.eval_in_tri(t, bary) - g.value(p)).abs());
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    let nodes = (0..space.num_nodes())
        .into_par_iter()
        .map(|n| (f.node_value(n) - g.value(space.node_position(n))).abs())
        .reduce(|| 0.0, f64::max);
    quad.max(nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sin_field() -> Field<impl Fn(Point2) -> f64 + Sync> {
        Field(|p: Point2| (std::f64::consts::PI * p.x).sin() * (std::f64::consts::PI * p.y).sin())
    }

    #[test]
    fn l2_projection_residual_meets_contract() {
        let space = FeSpace::shared(TriMesh::structured_square(8), 1).unwrap();
        let f = sin_field();
        let ph = l2_project(&space, &f).unwrap();
        let b = space.load_vector(&f);
        let r = &b - space.mass().mul_vec(ph.coeffs());
        assert!(r.amax() <= 1e-10 * b.amax());
    }

    #[test]
    fn l2_projection_beats_interpolation_in_l2() {
        let space = FeSpace::shared(TriMesh::structured_square(8), 1).unwrap();
        let f = sin_field();
        let ph = l2_project(&space, &f).unwrap();
        let ih = nodal_interpolant(&space, &f);
        assert!(field_error_l2(&ph, &f) <= field_error_l2(&ih, &f) + 1e-12);
    }

    #[test]
    fn ritz_projection_is_h1_orthogonal() {
        let space = FeSpace::shared(TriMesh::structured_square(6), 1).unwrap();
        let f = FieldWithGrad(
            |p: Point2| (std::f64::consts::PI * p.x).sin() * (std::f64::consts::PI * p.y).sin(),
            |p: Point2| {
                let pi = std::f64::consts::PI;
                Vector2::new(
                    pi * (pi * p.x).cos() * (pi * p.y).sin(),
                    pi * (pi * p.x).sin() * (pi * p.y).cos(),
                )
            },
        );
        let rh = ritz_project(&space, &f).unwrap();
        // (∇(f − R_h f), ∇φ_i) = 0: check the assembled residual
        let mesh = space.mesh();
        let rule = space.quad_rule();
        let mut b: DVector<f64> = DVector::zeros(space.num_dofs());
        for t in 0..mesh.num_triangles() {
            let area = mesh.tri_area(t);
            for (q, &bary) in rule.bary.iter().enumerate() {
                let p = mesh.point_from_bary(t, bary);
                let gf = f.gradient(p) - rh.gradient_in_tri(t, bary);
                let g = space.shape_gradients(t, bary);
                for (i, &n) in space.tri_node_ids(t).iter().enumerate() {
                    if let Some(d) = space.node_dof(n) {
                        b[d] += rule.weights[q] * area * gf.dot(&g[i]);
                    }
                }
            }
        }
        assert!(b.amax() < 1e-9);
    }

    #[test]
    fn nested_transfer_roundtrips_exactly() {
        use rand::{Rng, SeedableRng};
        let coarse_mesh = TriMesh::structured_square(4);
        let fine_mesh = coarse_mesh.uniform_refine().uniform_refine();
        for degree in [1, 2] {
            let coarse = FeSpace::shared(coarse_mesh.clone(), degree).unwrap();
            let fine = FeSpace::shared(fine_mesh.clone(), degree).unwrap();
            let map = NestedMap::new(coarse.mesh(), fine.mesh()).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(degree as u64);
            let v = FeFunction::new(
                coarse.clone(),
                DVector::from_fn(coarse.num_dofs(), |_, _| rng.gen::<f64>() - 0.5),
            )
            .unwrap();
            let vf = prolong(&v, &fine, &map).unwrap();
            // prolongation preserves the function exactly
            assert_abs_diff_eq!(v.norm_l2(), vf.norm_l2(), epsilon = 1e-12);
            assert_abs_diff_eq!(v.h1_seminorm(), vf.h1_seminorm(), epsilon = 1e-11);
            // both projections restore the coarse coefficients
            let back = l2_project_fe(&coarse, &vf, &map).unwrap();
            assert!((back.coeffs() - v.coeffs()).amax() < 1e-9);
            let back = ritz_project_fe(&coarse, &vf, &map).unwrap();
            assert!((back.coeffs() - v.coeffs()).amax() < 1e-8);
            // nodal restriction restores them exactly
            let restrict = NodalRestriction::new(&coarse, &fine).unwrap();
            let back = restrict.apply(&vf);
            assert!((back.coeffs() - v.coeffs()).amax() < 1e-12);
            // prolongation matrix agrees with the direct prolongation
            let pm = ProlongationMatrix::new(&coarse, &fine, &map);
            let via_matrix = pm.apply(v.coeffs());
            assert!((via_matrix - vf.coeffs()).amax() < 1e-13);
        }
    }

    #[test]
    fn nested_map_rejects_non_nested_meshes() {
        let a = TriMesh::structured_square(3);
        let b = TriMesh::structured_square(4);
        assert!(matches!(
            NestedMap::new(&a, &b),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn clement_reproduces_fe_functions() {
        use rand::{Rng, SeedableRng};
        let coarse_mesh = TriMesh::structured_l_shape(2);
        let fine_mesh = coarse_mesh.uniform_refine().uniform_refine();
        for degree in [1, 2] {
            let coarse = FeSpace::shared(coarse_mesh.clone(), degree).unwrap();
            let fine = FeSpace::shared(fine_mesh.clone(), degree).unwrap();
            let map = NestedMap::new(coarse.mesh(), fine.mesh()).unwrap();
            let op = ClementOperator::new(&coarse, &fine, &map).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
            let v = FeFunction::new(
                coarse.clone(),
                DVector::from_fn(coarse.num_dofs(), |_, _| rng.gen::<f64>() - 0.5),
            )
            .unwrap();
            let vf = prolong(&v, &fine, &map).unwrap();
            let back = op.apply(&vf).unwrap();
            assert!(
                (back.coeffs() - v.coeffs()).amax() < 1e-10,
                "Clement must reproduce members of the coarse space"
            );
        }
    }

    #[test]
    fn clement_is_linear_and_local() {
        use rand::{Rng, SeedableRng};
        let coarse_mesh = TriMesh::structured_square(3);
        let fine_mesh = coarse_mesh.uniform_refine();
        let coarse = FeSpace::shared(coarse_mesh, 1).unwrap();
        let fine = FeSpace::shared(fine_mesh, 1).unwrap();
        let map = NestedMap::new(coarse.mesh(), fine.mesh()).unwrap();
        let op = ClementOperator::new(&coarse, &fine, &map).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let a = DVector::from_fn(fine.num_dofs(), |_, _| rng.gen::<f64>() - 0.5);
        let b = DVector::from_fn(fine.num_dofs(), |_, _| rng.gen::<f64>() - 0.5);
        let fa = FeFunction::new(fine.clone(), a.clone()).unwrap();
        let fb = FeFunction::new(fine.clone(), b.clone()).unwrap();
        let fab = FeFunction::new(fine.clone(), &a * 2.0 + &b * std::f64::consts::E).unwrap();
        let lin = op
            .apply(&fa)
            .unwrap()
            .scaled(2.0)
            .add_scaled(std::f64::consts::E, &op.apply(&fb).unwrap());
        assert!((lin.coeffs() - op.apply(&fab).unwrap().coeffs()).amax() < 1e-12);
        // locality: every row touches only fine dofs inside the node patch
        for d in 0..coarse.num_dofs() {
            let center = coarse.dof_position(d);
            let h = coarse.mesh().h();
            for &(fd, _) in op.row_support(d) {
                let p = fine.dof_position(fd);
                assert!(
                    (p - center).norm() <= h + 1e-12,
                    "row support escapes the patch"
                );
            }
        }
    }

    #[test]
    fn clement_field_matches_operator_on_discrete_input() {
        // interpolating a globally smooth field two ways: directly by patch
        // quadrature, and by first sampling onto a much finer mesh
        let coarse_mesh = TriMesh::structured_square(4);
        let fine_mesh = coarse_mesh.uniform_refine().uniform_refine();
        let coarse = FeSpace::shared(coarse_mesh, 1).unwrap();
        let fine = FeSpace::shared(fine_mesh, 1).unwrap();
        let map = NestedMap::new(coarse.mesh(), fine.mesh()).unwrap();
        let op = ClementOperator::new(&coarse, &fine, &map).unwrap();
        let f = sin_field();
        let direct = clement_interpolate_field(&coarse, &f).unwrap();
        let sampled = nodal_interpolant(&fine, &f);
        let via_op = op.apply(&sampled).unwrap();
        // the two differ only by the patch projection of the fine
        // interpolation error, so the gap is controlled by ‖f − I_hf‖∞
        let gap = (direct.coeffs() - via_op.coeffs()).amax();
        let e_inf = field_error_linf(&sampled, &f);
        assert!(gap <= 10.0 * e_inf, "gap {gap} vs fine interpolation error {e_inf}");
    }

    #[test]
    fn clement_converges_at_second_order() {
        let f = sin_field();
        let err = |n: usize| {
            let space = FeSpace::shared(TriMesh::structured_square(n), 1).unwrap();
            let ih = clement_interpolate_field(&space, &f).unwrap();
            field_error_l2(&ih, &f)
        };
        let e1 = err(8);
        let e2 = err(16);
        let rate = (e1 / e2).log2();
        assert!(rate > 1.8 && rate < 2.2, "observed L² rate {rate}");
    }
}
