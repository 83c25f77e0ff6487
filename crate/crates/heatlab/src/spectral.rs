//! Generalized symmetric eigendecomposition K v = λ M v of the discrete
//! Laplacian, and the exact functional calculus built on it: heat semigroup
//! E_h(t) = e^{tΔ_h}, its time derivative, resolvents, and fractional
//! seminorms.
//!
//! The pencil is reduced with a dense Cholesky factorization M = L Lᵀ to an
//! ordinary symmetric problem A = L⁻¹ K L⁻ᵀ, solved by `nalgebra`'s
//! symmetric eigensolver; eigenvectors are back-transformed to be
//! M-orthonormal. Everything is plain dependency-free dense linear algebra,
//! so results are reproducible bit for bit across runs.

use crate::error::{Error, Result};
use crate::fem::{FeFunction, FeSpace};
use crate::mesh::Point2;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rayon::prelude::*;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

/// Full spectrum {(λ_i, v_i)} of -Δ_h with M-orthonormal eigenvectors,
/// sorted by ascending eigenvalue.
pub struct SpectralDecomposition {
    space: Arc<FeSpace>,
    lambdas: Vec<f64>,
    /// n × m, column i = v_i.
    vectors: DMatrix<f64>,
}

/// Complex-valued member of S_h (resolvent outputs).
#[derive(Clone, Debug)]
pub struct ComplexFeFunction {
    space: Arc<FeSpace>,
    coeffs: DVector<Complex<f64>>,
}

impl ComplexFeFunction {
    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &DVector<Complex<f64>> {
        &self.coeffs
    }

    /// L² norm through the mass matrix, ‖re‖² + ‖im‖².
    pub fn norm_l2(&self) -> f64 {
        let re = self.coeffs.map(|c| c.re);
        let im = self.coeffs.map(|c| c.im);
        let m = self.space.mass();
        (m.quadratic_form(&re, &re) + m.quadratic_form(&im, &im))
            .max(0.0)
            .sqrt()
    }
}

/// Triangular solve L X = B, column-chunked (each column independent).
fn solve_lower_cols(l: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    solve_tri_cols(l, b, true)
}

/// Triangular solve U X = B for upper-triangular U.
fn solve_upper_cols(u: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    solve_tri_cols(u, b, false)
}

fn solve_tri_cols(t: &DMatrix<f64>, b: &DMatrix<f64>, lower: bool) -> Result<DMatrix<f64>> {
    let n = b.nrows();
    let m = b.ncols();
    let cols: Vec<usize> = (0..m).collect();
    let solved: Vec<(usize, Vec<DVector<f64>>)> = cols
        .par_chunks(64)
        .enumerate()
        .map(|(ci, idx)| {
            let mut out = Vec::with_capacity(idx.len());
            for &j in idx {
                let col = b.column(j).into_owned();
                let x = if lower {
                    t.solve_lower_triangular(&col)
                } else {
                    t.solve_upper_triangular(&col)
                }
                .ok_or_else(|| {
                    Error::DecompositionUnavailable(
                        "singular triangular factor in pencil reduction".into(),
                    )
                });
                out.push(x);
            }
            let collected: Result<Vec<_>> = out.into_iter().collect();
            collected.map(|v| (ci, v))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut x = DMatrix::zeros(n, m);
    for (ci, chunk) in solved {
        for (k, col) in chunk.iter().enumerate() {
            x.set_column(ci * 64 + k, col);
        }
    }
    Ok(x)
}

impl SpectralDecomposition {
    /// Computes the full decomposition; refuses systems above `dof_cap`.
    pub fn compute(space: &Arc<FeSpace>, dof_cap: usize) -> Result<Self> {
        let n = space.num_dofs();
        if n == 0 {
            return Err(Error::InvalidInput(
                "space has no interior dofs to decompose".into(),
            ));
        }
        if n > dof_cap {
            return Err(Error::ProblemTooLarge { n, cap: dof_cap });
        }
        let m_dense = space.mass().to_dense();
        let k_dense = space.stiffness().to_dense();
        let chol = m_dense.cholesky().ok_or_else(|| {
            Error::DecompositionUnavailable("mass matrix is not positive definite".into())
        })?;
        let l = chol.l();
        drop(chol);
        // A = L⁻¹ K L⁻ᵀ via two triangular solves (K symmetric)
        let y = solve_lower_cols(&l, &k_dense)?;
        drop(k_dense);
        let yt = y.transpose();
        drop(y);
        let mut a = solve_lower_cols(&l, &yt)?;
        drop(yt);
        // symmetrize to remove rounding skew before the eigensolve
        for i in 0..n {
            for j in 0..i {
                let s = 0.5 * (a[(i, j)] + a[(j, i)]);
                a[(i, j)] = s;
                a[(j, i)] = s;
            }
        }
        let eig = a.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| {
            eig.eigenvalues[i]
                .partial_cmp(&eig.eigenvalues[j])
                .expect("eigenvalues are finite")
        });
        let mut lambdas = Vec::with_capacity(n);
        let mut u = DMatrix::zeros(n, n);
        for (k, &i) in order.iter().enumerate() {
            lambdas.push(eig.eigenvalues[i]);
            u.set_column(k, &eig.eigenvectors.column(i));
        }
        drop(eig);
        // back-transform: V = L⁻ᵀ U, M-orthonormal by construction
        let lt = l.transpose();
        drop(l);
        let mut vectors = solve_upper_cols(&lt, &u)?;
        drop(lt);
        drop(u);
        // deterministic sign convention: largest-magnitude entry positive
        for mut col in vectors.column_iter_mut() {
            let mut best = 0usize;
            let mut best_abs = 0.0;
            for (i, &v) in col.iter().enumerate() {
                if v.abs() > best_abs {
                    best_abs = v.abs();
                    best = i;
                }
            }
            if col[best] < 0.0 {
                col.neg_mut();
            }
        }
        let dec = Self { space: space.clone(), lambdas, vectors };
        dec.validate()?;
        Ok(dec)
    }

    /// Residual and orthonormality checks; rejects a bad decomposition.
    fn validate(&self) -> Result<()> {
        let n = self.space.num_dofs();
        if self.lambdas[0] <= 0.0 {
            return Err(Error::Validation(format!(
                "nonpositive leading eigenvalue {}",
                self.lambdas[0]
            )));
        }
        if self.lambdas.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Validation("eigenvalues are not sorted".into()));
        }
        // full eigen-residual sweep: ‖K v − λ M v‖∞ ≤ 1e-8 λ ‖v‖∞
        let mass = self.space.mass();
        let stiff = self.space.stiffness();
        let bad = (0..n)
            .into_par_iter()
            .map(|i| {
                let v = self.vectors.column(i).into_owned();
                let r = stiff.mul_vec(&v) - mass.mul_vec(&v) * self.lambdas[i];
                r.amax() <= 1e-8 * self.lambdas[i] * v.amax()
            })
            .position_first(|ok| !ok);
        if let Some(i) = bad {
            return Err(Error::Validation(format!(
                "eigenpair {i} fails the residual tolerance"
            )));
        }
        // sampled M-orthonormality
        let count = n.min(24);
        let idx: Vec<usize> = (0..count).map(|k| k * n / count).collect();
        let mv: Vec<DVector<f64>> = idx
            .iter()
            .map(|&i| mass.mul_vec(&self.vectors.column(i).into_owned()))
            .collect();
        for &i in idx.iter() {
            for (b, &j) in idx.iter().enumerate() {
                let dot = self.vectors.column(i).dot(&mv[b]);
                let expect = if i == j { 1.0 } else { 0.0 };
                if (dot - expect).abs() > 1e-9 {
                    return Err(Error::Validation(format!(
                        "eigenvectors {i},{j} are not M-orthonormal: {dot}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn lambda(&self, i: usize) -> f64 {
        self.lambdas[i]
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambdas[0]
    }

    pub fn lambda_max(&self) -> f64 {
        *self.lambdas.last().expect("nonempty")
    }

    /// n × m matrix of M-orthonormal eigenvectors.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn eigenfunction(&self, i: usize) -> FeFunction {
        FeFunction::new(self.space.clone(), self.vectors.column(i).into_owned())
            .expect("column length matches space")
    }

    /// Modal coefficients a_i = (v, v_i)_{L²} = v_iᵀ M c.
    pub fn modal_coeffs(&self, v: &FeFunction) -> DVector<f64> {
        self.modal_of_coeffs(v.coeffs())
    }

    pub fn modal_of_coeffs(&self, c: &DVector<f64>) -> DVector<f64> {
        let mc = self.space.mass().mul_vec(c);
        self.vectors.tr_mul(&mc)
    }

    /// Reconstructs Σ a_i v_i.
    pub fn from_modal(&self, a: &DVector<f64>) -> FeFunction {
        FeFunction::new(self.space.clone(), &self.vectors * a)
            .expect("length matches space")
    }

    /// Batch reconstruction: column k of the result is Σ_i A[(i,k)] v_i.
    pub fn from_modal_batch(&self, a_cols: &DMatrix<f64>) -> DMatrix<f64> {
        &self.vectors * a_cols
    }

    /// Values v_i(x₀) of every eigenfunction at a point; these are exactly
    /// the modal coefficients of the discrete delta δ_{h,x₀}.
    pub fn point_values(&self, x0: Point2) -> Result<DVector<f64>> {
        let (t, bary) = self.space.mesh().locate(x0)?;
        let s = self.space.shape_values(bary);
        let mut out = DVector::zeros(self.len());
        for (i, &node) in self.space.tri_node_ids(t).iter().enumerate() {
            if let Some(d) = self.space.node_dof(node) {
                if s[i] != 0.0 {
                    out.axpy(s[i], &self.vectors.row(d).transpose(), 1.0);
                }
            }
        }
        Ok(out)
    }

    /// E_h(t) v = Σ e^{-λ_i t} a_i v_i for t ≥ 0.
    pub fn apply_semigroup(&self, t: f64, v: &FeFunction) -> Result<FeFunction> {
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "semigroup time must be nonnegative, got {t}"
            )));
        }
        let mut a = self.modal_coeffs(v);
        for (i, ai) in a.iter_mut().enumerate() {
            *ai *= (-self.lambdas[i] * t).exp();
        }
        Ok(self.from_modal(&a))
    }

    /// ∂_t E_h(t) v = Δ_h E_h(t) v for t > 0.
    pub fn apply_time_derivative(&self, t: f64, v: &FeFunction) -> Result<FeFunction> {
        if !(t > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "semigroup derivative needs t > 0, got {t}"
            )));
        }
        let mut a = self.modal_coeffs(v);
        for (i, ai) in a.iter_mut().enumerate() {
            *ai *= -self.lambdas[i] * (-self.lambdas[i] * t).exp();
        }
        Ok(self.from_modal(&a))
    }

    /// Δ_h v = -Σ λ_i a_i v_i.
    pub fn apply_laplacian(&self, v: &FeFunction) -> FeFunction {
        let mut a = self.modal_coeffs(v);
        for (i, ai) in a.iter_mut().enumerate() {
            *ai *= -self.lambdas[i];
        }
        self.from_modal(&a)
    }

    /// z(z − Δ_h)⁻¹ v: modal factors z/(z + λ_i). Errors if z is 0 or sits
    /// on the spectrum of Δ_h.
    pub fn apply_resolvent(&self, z: Complex<f64>, v: &FeFunction) -> Result<ComplexFeFunction> {
        if z.norm() == 0.0 {
            return Err(Error::InvalidArgument(
                "resolvent scaling z must be nonzero".into(),
            ));
        }
        let a = self.modal_coeffs(v);
        let mut c = DVector::from_element(self.len(), Complex::new(0.0, 0.0));
        for i in 0..self.len() {
            let denom = z + Complex::new(self.lambdas[i], 0.0);
            if denom.norm() <= 1e-14 * self.lambdas[i].max(1.0) {
                return Err(Error::InvalidArgument(format!(
                    "resolvent evaluated on the spectrum near λ = {}",
                    self.lambdas[i]
                )));
            }
            c[i] = z / denom * a[i];
        }
        // reconstruct real and imaginary parts separately
        let re = self.from_modal(&c.map(|x| x.re));
        let im = self.from_modal(&c.map(|x| x.im));
        let coeffs = DVector::from_fn(self.space.num_dofs(), |i, _| {
            Complex::new(re.coeffs()[i], im.coeffs()[i])
        });
        Ok(ComplexFeFunction { space: self.space.clone(), coeffs })
    }

    /// Fractional seminorm |v|_s = (Σ λ_i^s a_i²)^{1/2} for s ∈ [0, 2].
    pub fn fractional_seminorm(&self, s: f64, v: &FeFunction) -> Result<f64> {
        if !(0.0..=2.0).contains(&s) {
            return Err(Error::InvalidArgument(format!(
                "fractional order must lie in [0, 2], got {s}"
            )));
        }
        let a = self.modal_coeffs(v);
        let mut acc = 0.0;
        for i in 0..self.len() {
            acc += self.lambdas[i].powf(s) * a[i] * a[i];
        }
        Ok(acc.max(0.0).sqrt())
    }

    /// Writes the decomposition to a binary cache file.
    pub fn write_cache(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let n = self.space.num_dofs();
        let m = self.len();
        let mut buf = Vec::with_capacity(24 + 8 * (m + n * m));
        buf.extend_from_slice(b"SPECDEC1");
        buf.extend_from_slice(&(n as u64).to_le_bytes());
        buf.extend_from_slice(&(m as u64).to_le_bytes());
        for &l in &self.lambdas {
            buf.extend_from_slice(&l.to_le_bytes());
        }
        for j in 0..m {
            for i in 0..n {
                buf.extend_from_slice(&self.vectors[(i, j)].to_le_bytes());
            }
        }
        let tmp = path.with_extension("tmp");
        std::fs::File::create(&tmp)?.write_all(&buf)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Reads a cache written by `write_cache`, validating against the space.
    pub fn read_cache(space: &Arc<FeSpace>, path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        if buf.len() < 24 || &buf[..8] != b"SPECDEC1" {
            return Err(Error::InvalidInput(format!(
                "{} is not a spectral cache file",
                path.display()
            )));
        }
        let rd_u64 = |off: usize| {
            let mut b = [0u8; 8];
            b.copy_from_slice(&buf[off..off + 8]);
            u64::from_le_bytes(b)
        };
        let n = rd_u64(8) as usize;
        let m = rd_u64(16) as usize;
        if n != space.num_dofs() {
            return Err(Error::InvalidInput(format!(
                "cache has {n} dofs but the space has {}",
                space.num_dofs()
            )));
        }
        let need = 24 + 8 * (m + n * m);
        if buf.len() != need {
            return Err(Error::InvalidInput(format!(
                "cache file has {} bytes, expected {need}",
                buf.len()
            )));
        }
        let rd_f64 = |off: usize| {
            let mut b = [0u8; 8];
            b.copy_from_slice(&buf[off..off + 8]);
            f64::from_le_bytes(b)
        };
        let mut lambdas = Vec::with_capacity(m);
        for i in 0..m {
            lambdas.push(rd_f64(24 + 8 * i));
        }
        let base = 24 + 8 * m;
        let vectors =
            DMatrix::from_fn(n, m, |i, j| rd_f64(base + 8 * (j * n + i)));
        let dec = Self { space: space.clone(), lambdas, vectors };
        dec.validate()?;
        Ok(dec)
    }
}

/// FNV-1a hash of mesh identity data, used in cache file names.
pub fn cache_file_name(domain: &str, level: u32, degree: u32, space: &FeSpace) -> String {
    let mesh = space.mesh();
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    eat(domain.as_bytes());
    eat(&level.to_le_bytes());
    eat(&degree.to_le_bytes());
    eat(&(space.num_dofs() as u64).to_le_bytes());
    eat(&(mesh.num_triangles() as u64).to_le_bytes());
    eat(&mesh.h().to_bits().to_le_bytes());
    format!(
        "specdec_{domain}_l{level}_r{degree}_n{}_{:016x}.bin",
        space.num_dofs(),
        h
    )
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::TriMesh;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn square_dec(n: usize, degree: u32) -> (Arc<FeSpace>, SpectralDecomposition) {
        let space = FeSpace::shared(TriMesh::structured_square(n), degree).unwrap();
        let dec = SpectralDecomposition::compute(&space, 5000).unwrap();
        (space, dec)
    }

    fn random_fn(space: &Arc<FeSpace>, seed: u64) -> FeFunction {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        FeFunction::new(
            space.clone(),
            DVector::from_fn(space.num_dofs(), |_, _| rng.gen::<f64>() - 0.5),
        )
        .unwrap()
    }

    #[test]
    fn single_dof_eigenvalue_is_exact() {
        // one interior node: λ = K₀₀/M₀₀ = 4/(1/8) = 32
        let (_, dec) = square_dec(2, 1);
        assert_eq!(dec.len(), 1);
        assert_abs_diff_eq!(dec.lambda(0), 32.0, epsilon = 1e-10);
    }

    #[test]
    fn ground_state_approaches_continuum() {
        let (_, dec) = square_dec(16, 1);
        let exact = 2.0 * std::f64::consts::PI * std::f64::consts::PI;
        assert!((dec.lambda_min() - exact).abs() / exact < 0.02);
        // discrete eigenvalues of the Dirichlet Laplacian overshoot
        assert!(dec.lambda_min() >= exact);
    }

    #[test]
    fn cap_is_enforced() {
        let space = FeSpace::shared(TriMesh::structured_square(4), 1).unwrap();
        match SpectralDecomposition::compute(&space, 3) {
            Err(Error::ProblemTooLarge { n, cap }) => {
                assert_eq!((n, cap), (9, 3));
            }
            other => panic!("expected ProblemTooLarge, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn full_m_orthonormality_small() {
        let (space, dec) = square_dec(4, 1);
        let m = space.mass();
        for i in 0..dec.len() {
            for j in 0..dec.len() {
                let vi = dec.vectors.column(i).into_owned();
                let vj = dec.vectors.column(j).into_owned();
                let dot = m.quadratic_form(&vi, &vj);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(dot, expect, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn semigroup_law_and_self_adjointness() {
        let (space, dec) = square_dec(8, 1);
        let v = random_fn(&space, 1);
        let w = random_fn(&space, 2);
        let (t, s) = (0.013, 0.027);
        let ets = dec.apply_semigroup(t + s, &v).unwrap();
        let et_es = dec
            .apply_semigroup(t, &dec.apply_semigroup(s, &v).unwrap())
            .unwrap();
        assert!((ets.coeffs() - et_es.coeffs()).amax() < 1e-10);
        let m = space.mass();
        let lhs = m.quadratic_form(dec.apply_semigroup(t, &v).unwrap().coeffs(), w.coeffs());
        let rhs = m.quadratic_form(v.coeffs(), dec.apply_semigroup(t, &w).unwrap().coeffs());
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
        // operator norm: ‖E(t)v‖ ≤ e^{-λ₁ t} ‖v‖, equality on the first mode
        assert!(
            dec.apply_semigroup(t, &v).unwrap().norm_l2()
                <= (-dec.lambda_min() * t).exp() * v.norm_l2() * (1.0 + 1e-12)
        );
        let mode = dec.eigenfunction(0);
        assert_abs_diff_eq!(
            dec.apply_semigroup(t, &mode).unwrap().norm_l2(),
            (-dec.lambda_min() * t).exp(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let (space, dec) = square_dec(4, 1);
        let v = random_fn(&space, 3);
        let t = 0.05;
        let eps = 1e-6;
        let fd = dec
            .apply_semigroup(t + eps, &v)
            .unwrap()
            .add_scaled(-1.0, &dec.apply_semigroup(t - eps, &v).unwrap())
            .scaled(0.5 / eps);
        let exact = dec.apply_time_derivative(t, &v).unwrap();
        let denom = exact.norm_l2().max(1e-30);
        assert!(
            (fd.coeffs() - exact.coeffs()).amax() / denom < 1e-5,
            "finite difference should confirm the exact modal derivative"
        );
    }

    #[test]
    fn derivative_decay_bound_l2() {
        let (space, dec) = square_dec(8, 1);
        // sup_t t‖∂_t E(t)v‖ ≤ sup_x x e^{-x} ‖v‖ = ‖v‖/e in L²
        for seed in 0..3 {
            let v = random_fn(&space, 10 + seed);
            let bound = v.norm_l2() / std::f64::consts::E;
            for k in 1..=60 {
                let t = 1e-4 * (1.12_f64).powi(k * 2);
                let d = dec.apply_time_derivative(t, &v).unwrap();
                assert!(t * d.norm_l2() <= bound * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn resolvent_single_mode_factor() {
        let (_, dec) = square_dec(8, 1);
        let mode = dec.eigenfunction(0);
        let l1 = dec.lambda_min();
        let out = dec
            .apply_resolvent(Complex::new(0.0, l1), &mode)
            .unwrap();
        // |iλ / (iλ + λ)| = 1/√2
        assert_abs_diff_eq!(out.norm_l2(), 0.5_f64.sqrt(), epsilon = 1e-10);
        assert!(dec.apply_resolvent(Complex::new(0.0, 0.0), &mode).is_err());
        assert!(dec
            .apply_resolvent(Complex::new(-l1, 0.0), &mode)
            .is_err());
    }

    #[test]
    fn fractional_seminorm_interpolates() {
        let (space, dec) = square_dec(8, 1);
        for seed in 0..5 {
            let v = random_fn(&space, 40 + seed);
            let n0 = dec.fractional_seminorm(0.0, &v).unwrap();
            let n2 = dec.fractional_seminorm(2.0, &v).unwrap();
            assert_abs_diff_eq!(n0, v.norm_l2(), epsilon = 1e-10);
            let lap = dec.apply_laplacian(&v);
            assert_abs_diff_eq!(n2, lap.norm_l2(), epsilon = 1e-8);
            for s in [0.55, 0.75, 1.0, 1.5] {
                let ns = dec.fractional_seminorm(s, &v).unwrap();
                let holder = n0.powf(1.0 - s / 2.0) * n2.powf(s / 2.0);
                assert!(ns <= holder * (1.0 + 1e-9), "Hoelder bound violated at s={s}");
            }
            // |v|₁ is the H¹ seminorm
            assert_abs_diff_eq!(
                dec.fractional_seminorm(1.0, &v).unwrap(),
                v.h1_seminorm(),
                epsilon = 1e-9
            );
        }
        let v = random_fn(&space, 99);
        assert!(dec.fractional_seminorm(2.5, &v).is_err());
    }

    #[test]
    fn point_values_match_eigenfunction_evaluation() {
        let (_, dec) = square_dec(4, 2);
        let x0 = Point2::new(0.31, 0.47);
        let pv = dec.point_values(x0).unwrap();
        for i in [0usize, 3, 7] {
            let direct = dec.eigenfunction(i).eval(x0).unwrap();
            assert_abs_diff_eq!(pv[i], direct, epsilon = 1e-12);
        }
    }

    #[test]
    fn cache_roundtrip_is_bitwise() {
        let (space, dec) = square_dec(4, 1);
        let dir = std::env::temp_dir().join("heatlab-spec-cache-test");
        let name = cache_file_name("square", 2, 1, &space);
        let path = dir.join(name);
        dec.write_cache(&path).unwrap();
        let back = SpectralDecomposition::read_cache(&space, &path).unwrap();
        assert_eq!(dec.lambdas.len(), back.lambdas.len());
        for i in 0..dec.lambdas.len() {
            assert_eq!(dec.lambdas[i].to_bits(), back.lambdas[i].to_bits());
        }
        assert_eq!(dec.vectors.len(), back.vectors.len());
        for (a, b) in dec.vectors.iter().zip(back.vectors.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        // a different space must be rejected
        let other = FeSpace::shared(TriMesh::structured_square(5), 1).unwrap();
        assert!(SpectralDecomposition::read_cache(&other, &path).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
