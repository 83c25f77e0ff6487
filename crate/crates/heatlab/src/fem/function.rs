//! Finite element functions: coefficient vectors over the interior dofs of a
//! space, with evaluation, Lᵖ/H¹ norms, and a small text format.

use super::FeSpace;
use crate::error::{Error, Result};
use crate::mesh::{Point2, Vector2};
use nalgebra::DVector;
use rayon::prelude::*;
use std::sync::Arc;

/// A member of S_h: vanishes on ∂Ω, determined by interior dof coefficients.
#[derive(Clone, Debug)]
pub struct FeFunction {
    space: Arc<FeSpace>,
    coeffs: DVector<f64>,
}

impl FeFunction {
    pub fn new(space: Arc<FeSpace>, coeffs: DVector<f64>) -> Result<Self> {
        if coeffs.len() != space.num_dofs() {
            return Err(Error::InvalidArgument(format!(
                "coefficient length {} does not match space with {} dofs",
                coeffs.len(),
                space.num_dofs()
            )));
        }
        Ok(Self { space, coeffs })
    }

    pub fn zero(space: Arc<FeSpace>) -> Self {
        let n = space.num_dofs();
        Self { space, coeffs: DVector::zeros(n) }
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut DVector<f64> {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> DVector<f64> {
        self.coeffs
    }

    /// Value at a Lagrange node (zero on boundary nodes).
    pub fn node_value(&self, node: usize) -> f64 {
        match self.space.node_dof(node) {
            Some(d) => self.coeffs[d],
            None => 0.0,
        }
    }

    /// Point evaluation; locates the containing triangle first.
    pub fn eval(&self, p: Point2) -> Result<f64> {
        let (t, bary) = self.space.mesh().locate(p)?;
        Ok(self.eval_in_tri(t, bary))
    }

    pub fn eval_in_tri(&self, t: usize, bary: [f64; 3]) -> f64 {
        let s = self.space.shape_values(bary);
        let mut v = 0.0;
        for (i, &n) in self.space.tri_node_ids(t).iter().enumerate() {
            if let Some(d) = self.space.node_dof(n) {
                v += self.coeffs[d] * s[i];
            }
        }
        v
    }

    pub fn gradient_in_tri(&self, t: usize, bary: [f64; 3]) -> Vector2 {
        let g = self.space.shape_gradients(t, bary);
        let mut v = Vector2::zeros();
        for (i, &n) in self.space.tri_node_ids(t).iter().enumerate() {
            if let Some(d) = self.space.node_dof(n) {
                v += g[i] * self.coeffs[d];
            }
        }
        v
    }

    /// L² norm via the mass matrix: (cᵀ M c)^{1/2}.
    pub fn norm_l2(&self) -> f64 {
        self.space
            .mass()
            .quadratic_form(&self.coeffs, &self.coeffs)
            .max(0.0)
            .sqrt()
    }

    /// H¹ seminorm via the stiffness matrix: (cᵀ K c)^{1/2}.
    pub fn h1_seminorm(&self) -> f64 {
        self.space
            .stiffness()
            .quadratic_form(&self.coeffs, &self.coeffs)
            .max(0.0)
            .sqrt()
    }

    /// Lᵠ norm for q ∈ [1, ∞], by elementwise quadrature; q = ∞ takes the
    /// max of |v| over quadrature points and Lagrange nodes.
    pub fn norm_lq(&self, q: f64) -> Result<f64> {
        if q.is_nan() || q < 1.0 {
            return Err(Error::InvalidArgument(format!(
                "Lq norm requires q in [1, inf], got {q}"
            )));
        }
        let sp = &self.space;
        let mesh = sp.mesh();
        let rule = sp.quad_rule();
        if q.is_infinite() {
            let quad_max = (0..mesh.num_triangles())
                .into_par_iter()
                .map(|t| {
                    rule.bary
                        .iter()
                        .map(|&b| self.eval_in_tri(t, b).abs())
                        .fold(0.0_f64, f64::max)
                })
                .reduce(|| 0.0, f64::max);
            let node_max = self.coeffs.amax();
            return Ok(quad_max.max(node_max));
        }
        let per_tri: Vec<f64> = (0..mesh.num_triangles())
            .into_par_iter()
            .map(|t| {
                let area = mesh.tri_area(t);
                let mut acc = 0.0;
                for (k, &b) in rule.bary.iter().enumerate() {
                    acc += rule.weights[k] * area * self.eval_in_tri(t, b).abs().powf(q);
                }
                acc
            })
            .collect();
        let total: f64 = per_tri.iter().sum();
        Ok(total.powf(1.0 / q))
    }

    pub fn norm_linf(&self) -> f64 {
        self.norm_lq(f64::INFINITY).expect("q = inf is valid")
    }

    /// Returns `self + alpha * other` (same space required).
    pub fn add_scaled(&self, alpha: f64, other: &FeFunction) -> FeFunction {
        assert!(
            Arc::ptr_eq(&self.space, &other.space),
            "FE functions live on different spaces"
        );
        let mut coeffs = self.coeffs.clone();
        coeffs.axpy(alpha, &other.coeffs, 1.0);
        FeFunction { space: self.space.clone(), coeffs }
    }

    pub fn scaled(&self, alpha: f64) -> FeFunction {
        FeFunction { space: self.space.clone(), coeffs: &self.coeffs * alpha }
    }

    /// Serializes as `DOF n` followed by one coefficient per line.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(32 + 25 * self.coeffs.len());
        out.push_str(&format!("DOF {}\n", self.coeffs.len()));
        for v in self.coeffs.iter() {
            out.push_str(&format!("{v:.16e}\n"));
        }
        out
    }

    /// Parses the `to_text` format against a given space.
    pub fn from_text(space: Arc<FeSpace>, text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (ln, header) = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 1, msg: "empty input".into() })?;
        let mut parts = header.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some("DOF"), Some(count), None) => {
                let n: usize = count.parse().map_err(|_| Error::Parse {
                    line: ln + 1,
                    msg: format!("bad dof count {count:?}"),
                })?;
                if n != space.num_dofs() {
                    return Err(Error::InvalidInput(format!(
                        "function has {} dofs but the space has {}",
                        n,
                        space.num_dofs()
                    )));
                }
                let mut coeffs = DVector::zeros(n);
                let mut filled = 0usize;
                let mut last_line = ln;
                for (ln, line) in lines {
                    last_line = ln;
                    let line = line.trim();
                    if line.is_empty() || line.starts_with('#') {
                        continue;
                    }
                    if filled == n {
                        return Err(Error::Parse {
                            line: ln + 1,
                            msg: "trailing data after coefficients".into(),
                        });
                    }
                    coeffs[filled] = line.parse().map_err(|_| Error::Parse {
                        line: ln + 1,
                        msg: format!("bad coefficient {line:?}"),
                    })?;
                    filled += 1;
                }
                if filled != n {
                    return Err(Error::Parse {
                        line: last_line + 1,
                        msg: format!("expected {n} coefficients, found {filled}"),
                    });
                }
                Self::new(space, coeffs)
            }
            _ => Err(Error::Parse {
                line: ln + 1,
                msg: "expected header 'DOF <count>'".into(),
            }),
        }
    }
}
