//! Minimal symmetric sparse matrices in CSR form.
//!
//! Finite element assembly produces (i, j, v) triplets in a deterministic
//! element order; `from_triplets` sorts them with a stable comparison and
//! sums duplicates, so the stored matrix — and every reduction computed
//! from it — is reproducible bit for bit across runs and thread counts.

use nalgebra::{DMatrix, DVector};

/// Symmetric sparse matrix, CSR storage of all stored (not just upper) entries.
#[derive(Debug, Clone)]
pub struct SymmetricSparse {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SymmetricSparse {
    /// Builds from triplets, summing duplicates. Symmetry of the input is
    /// the caller's contract (assembly emits both (i,j) and (j,i)).
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        // stable sort: duplicates are summed in their original (element)
        // order, which keeps assembly deterministic
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&k| (triplets[k].0, triplets[k].1));
        let mut rows = Vec::new();
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for &k in &order {
            let (i, j, v) = triplets[k];
            assert!(i < n && j < n, "triplet index out of range");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                rows.push(i);
                col_idx.push(j);
                values.push(v);
                last = Some((i, j));
            }
        }
        let mut row_ptr = vec![0usize; n + 1];
        for &i in &rows {
            row_ptr[i + 1] += 1;
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self { n, row_ptr, col_idx, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// y = A x.
    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = DVector::zeros(self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                acc += v * x[j];
            }
            y[i] = acc;
        }
        y
    }

    /// xᵀ A y, accumulated row by row in index order.
    pub fn quadratic_form(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        let mut acc = 0.0;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut row_acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                row_acc += v * y[j];
            }
            acc += x[i] * row_acc;
        }
        acc
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                a[(i, j)] = v;
            }
        }
        a
    }

    /// Maximum absolute asymmetry, for validation.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Conjugate gradient solve of A x = b for symmetric positive definite A.
///
/// Terminates when ‖b − Ax‖∞ ≤ `tol_rel`·‖b‖∞. Serial and free of
/// data-dependent branching on rounding noise, so results are reproducible.
pub fn cg_solve(
    a: &SymmetricSparse,
    b: &DVector<f64>,
    tol_rel: f64,
    max_iter: usize,
) -> crate::Result<DVector<f64>> {
    assert_eq!(b.len(), a.n());
    let b_inf = b.amax();
    if b_inf == 0.0 {
        return Ok(DVector::zeros(a.n()));
    }
    let target = tol_rel * b_inf;
    let mut x = DVector::zeros(a.n());
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    for _ in 0..max_iter {
        if r.amax() <= target {
            return Ok(x);
        }
        let ap = a.mul_vec(&p);
        let pap = p.dot(&ap);
        if pap <= 0.0 {
            return Err(crate::Error::Internal(
                "conjugate gradient: matrix is not positive definite".into(),
            ));
        }
        let alpha = rr / pap;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let rr_next = r.dot(&r);
        let beta = rr_next / rr;
        rr = rr_next;
        p = &r + p * beta;
    }
    if r.amax() <= target {
        Ok(x)
    } else {
        Err(crate::Error::Internal(format!(
            "conjugate gradient stalled: residual {:.3e} above target {:.3e} after {} iterations",
            r.amax(),
            target,
            max_iter
        )))
    }
}
