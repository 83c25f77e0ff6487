//! Discrete Green's kernel Γ_h(t,·,x₀) = E_h(t) δ_{h,x₀}, a regularized
//! reference kernel computed on a much finer nested mesh, and space-time L¹
//! diagnostics of their difference F = Γ_h − Γ_ref.
//!
//! Everything here runs in the eigenbasis. The modal coefficients of
//! δ_{h,x₀} are simply the eigenfunction values v_i(x₀) — no mass solve —
//! so a kernel slice is one weighted column combination of the eigenbasis.

use crate::error::{Error, Result};
use crate::fem::{project_bump, FeFunction, NestedMap, ProlongationMatrix, RegularizedBump};
use crate::mesh::Point2;
use crate::quadrature::TimeGrid;
use crate::spectral::SpectralDecomposition;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::sync::Arc;

/// One spatial slice Γ_h(t,·,x₀) (or a time derivative of one).
pub struct KernelSlice {
    pub t: f64,
    pub x0: Point2,
    pub values: FeFunction,
}

/// Modal coefficients of ∂_t^k [e^{-λt} base] at several times, one column
/// per time.
fn modal_cols(
    dec: &SpectralDecomposition,
    base: &DVector<f64>,
    times: &[f64],
    order: u32,
) -> DMatrix<f64> {
    let lam = dec.eigenvalues();
    DMatrix::from_fn(lam.len(), times.len(), |i, k| {
        let l = lam[i];
        base[i] * (-l).powi(order as i32) * (-l * times[k]).exp()
    })
}

/// Γ_h(t,·,x₀) = E_h(t) δ_{h,x₀}.
pub fn kernel_slice(
    dec: &Arc<SpectralDecomposition>,
    x0: Point2,
    t: f64,
) -> Result<KernelSlice> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("kernel time must be ≥ 0, got {t}")));
    }
    let pv = dec.point_values(x0)?;
    let cols = modal_cols(dec, &pv, &[t], 0);
    let values = dec.from_modal(&cols.column(0).into_owned());
    Ok(KernelSlice { t, x0, values })
}

/// ∂_t Γ_h(t,·,x₀); finite for every t ≥ 0 in the semidiscrete setting.
pub fn kernel_slice_dt(
    dec: &Arc<SpectralDecomposition>,
    x0: Point2,
    t: f64,
) -> Result<KernelSlice> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("kernel time must be ≥ 0, got {t}")));
    }
    let pv = dec.point_values(x0)?;
    let cols = modal_cols(dec, &pv, &[t], 1);
    let values = dec.from_modal(&cols.column(0).into_owned());
    Ok(KernelSlice { t, x0, values })
}

/// ∫_Ω |slice| dx by elementwise quadrature. This is the exact L∞→L∞
/// operator norm contribution of the slice's source point.
pub fn kernel_l1_norm(slice: &KernelSlice) -> Result<f64> {
    slice.values.norm_lq(1.0)
}

/// E_{h,fine}(t) P_{h,fine} δ̃_{x₀}: the fine-mesh surrogate for the
/// continuous kernel sourced at the bump's center.
pub struct ReferenceKernel {
    dec: Arc<SpectralDecomposition>,
    bump: RegularizedBump,
    modal0: DVector<f64>,
}

impl ReferenceKernel {
    /// Projects the bump onto the fine space. The mesh must resolve the
    /// bump: radius at least four fine cells across.
    pub fn new(dec: &Arc<SpectralDecomposition>, bump: &RegularizedBump) -> Result<Self> {
        let cell = dec.space().mesh().cell_size();
        if bump.radius() < 4.0 * cell * (1.0 - 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "bump radius {} not resolved by the reference mesh (needs ≥ {})",
                bump.radius(),
                4.0 * cell
            )));
        }
        let projected = project_bump(dec.space(), bump)?;
        Ok(Self {
            dec: dec.clone(),
            bump: bump.clone(),
            modal0: dec.modal_coeffs(&projected),
        })
    }

    pub fn bump(&self) -> &RegularizedBump {
        &self.bump
    }

    pub fn decomposition(&self) -> &Arc<SpectralDecomposition> {
        &self.dec
    }

    /// ∂_t^order Γ_ref(t,·,x₀).
    pub fn at(&self, t: f64, order: u32) -> Result<FeFunction> {
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!("kernel time must be ≥ 0, got {t}")));
        }
        let cols = modal_cols(&self.dec, &self.modal0, &[t], order);
        Ok(self.dec.from_modal(&cols.column(0).into_owned()))
    }
}

/// One-shot convenience for a single reference-kernel slice.
pub fn reference_kernel(
    dec: &Arc<SpectralDecomposition>,
    bump: &RegularizedBump,
    t: f64,
) -> Result<FeFunction> {
    ReferenceKernel::new(dec, bump)?.at(t, 0)
}

/// Precomputed fine-space coefficient columns of ∂_tΓ_ref and ∂_ttΓ_ref at
/// the nodes of a time grid; shared across coarse levels that use the same
/// reference kernel.
pub struct FineKernelSlices {
    grid: TimeGrid,
    cols_dt: DMatrix<f64>,
    cols_dtt: DMatrix<f64>,
}

/// The kernel difference F(t,·,x₀) = Γ_h(t,·,x₀) − Γ_ref(t,·,x₀), carried on
/// the fine space through the exact nested-mesh injection.
pub struct TwoGridKernel {
    coarse: Arc<SpectralDecomposition>,
    fine: Arc<SpectralDecomposition>,
    prolongation: ProlongationMatrix,
    x0: Point2,
    coarse_modal0: DVector<f64>,
    fine_modal0: DVector<f64>,
}

/// ∫₀ᵀ ‖∂_t F‖_{L¹(Ω)} dt and ∫₀ᵀ t‖∂_tt F‖_{L¹(Ω)} dt on a (graded) time
/// grid, with the share of the first integral carried by nodes t ≤ 2⁻¹⁰.
#[derive(Debug, Clone, Copy)]
pub struct KernelDifferenceNorms {
    pub dt_f_l1: f64,
    pub t_dtt_f_l1: f64,
    pub dt_tail_fraction: f64,
}

impl TwoGridKernel {
    /// Standard configuration: coarse kernel sourced by the discrete delta
    /// at the bump center, reference kernel sourced by the projected bump.
    pub fn new(
        coarse: &Arc<SpectralDecomposition>,
        fine: &Arc<SpectralDecomposition>,
        bump: &RegularizedBump,
    ) -> Result<Self> {
        let reference = ReferenceKernel::new(fine, bump)?;
        let coarse_modal0 = coarse.point_values(bump.center())?;
        Self::with_initial(coarse, fine, bump.center(), coarse_modal0, reference.modal0)
    }

    /// Same two-grid plumbing with caller-supplied modal initial data on
    /// each side; used for degenerate configurations in validation.
    pub fn with_initial(
        coarse: &Arc<SpectralDecomposition>,
        fine: &Arc<SpectralDecomposition>,
        x0: Point2,
        coarse_modal0: DVector<f64>,
        fine_modal0: DVector<f64>,
    ) -> Result<Self> {
        if coarse.space().degree() != fine.space().degree() {
            return Err(Error::InvalidArgument(
                "two-grid kernel needs equal polynomial degrees".into(),
            ));
        }
        if coarse_modal0.len() != coarse.len() || fine_modal0.len() != fine.len() {
            return Err(Error::InvalidArgument(
                "modal initial data does not match the decompositions".into(),
            ));
        }
        let map = NestedMap::new(coarse.space().mesh(), fine.space().mesh())?;
        let prolongation = ProlongationMatrix::new(coarse.space(), fine.space(), &map);
        Ok(Self {
            coarse: coarse.clone(),
            fine: fine.clone(),
            prolongation,
            x0,
            coarse_modal0,
            fine_modal0,
        })
    }

    pub fn source_point(&self) -> Point2 {
        self.x0
    }

    pub fn fine_space_decomposition(&self) -> &Arc<SpectralDecomposition> {
        &self.fine
    }

    /// Fine-space coefficient columns of ∂_t^order F at the given times.
    pub fn f_cols(&self, times: &[f64], order: u32) -> DMatrix<f64> {
        let coarse_cols = self
            .coarse
            .from_modal_batch(&modal_cols(&self.coarse, &self.coarse_modal0, times, order));
        let fine_cols = self
            .fine
            .from_modal_batch(&modal_cols(&self.fine, &self.fine_modal0, times, order));
        let mut out = fine_cols;
        for k in 0..times.len() {
            let lifted = self.prolongation.apply(&coarse_cols.column(k).into_owned());
            let mut col = out.column_mut(k);
            col.neg_mut();
            col += &lifted;
        }
        out
    }

    /// ∂_t^order F(t,·,x₀) as a fine-space function.
    pub fn f_slice(&self, t: f64, order: u32) -> Result<FeFunction> {
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!("kernel time must be ≥ 0, got {t}")));
        }
        let cols = self.f_cols(&[t], order);
        FeFunction::new(self.fine.space().clone(), cols.column(0).into_owned())
    }

    /// Precompute the reference-kernel part of the difference on a grid, so
    /// several coarse levels can share it.
    pub fn fine_slices(&self, grid: &TimeGrid) -> FineKernelSlices {
        FineKernelSlices {
            grid: grid.clone(),
            cols_dt: self
                .fine
                .from_modal_batch(&modal_cols(&self.fine, &self.fine_modal0, &grid.nodes, 1)),
            cols_dtt: self
                .fine
                .from_modal_batch(&modal_cols(&self.fine, &self.fine_modal0, &grid.nodes, 2)),
        }
    }

    /// The space-time L¹ kernel-difference diagnostics on a time grid.
    pub fn difference_norms(&self, grid: &TimeGrid) -> Result<KernelDifferenceNorms> {
        let fine = self.fine_slices(grid);
        self.difference_norms_with(&fine)
    }

    /// Same, reusing precomputed reference slices.
    pub fn difference_norms_with(&self, fine: &FineKernelSlices) -> Result<KernelDifferenceNorms> {
        if fine.cols_dt.ncols() != fine.grid.nodes.len()
            || fine.cols_dt.nrows() != self.fine.space().num_dofs()
        {
            return Err(Error::InvalidArgument(
                "precomputed reference slices do not match this kernel".into(),
            ));
        }
        let times = &fine.grid.nodes;
        let coarse_dt = self
            .coarse
            .from_modal_batch(&modal_cols(&self.coarse, &self.coarse_modal0, times, 1));
        let coarse_dtt = self
            .coarse
            .from_modal_batch(&modal_cols(&self.coarse, &self.coarse_modal0, times, 2));
        let space = self.fine.space().clone();
        let norms: Vec<Result<(f64, f64)>> = (0..times.len())
            .into_par_iter()
            .map(|k| {
                let mut dt = self.prolongation.apply(&coarse_dt.column(k).into_owned());
                dt -= fine.cols_dt.column(k);
                let mut dtt = self.prolongation.apply(&coarse_dtt.column(k).into_owned());
                dtt -= fine.cols_dtt.column(k);
                let l1_dt = FeFunction::new(space.clone(), dt)?.norm_lq(1.0)?;
                let l1_dtt = FeFunction::new(space.clone(), dtt)?.norm_lq(1.0)?;
                Ok((l1_dt, l1_dtt))
            })
            .collect();
        let mut dt_f_l1 = 0.0;
        let mut t_dtt_f_l1 = 0.0;
        let mut dt_tail = 0.0;
        for (k, r) in norms.into_iter().enumerate() {
            let (l1_dt, l1_dtt) = r?;
            let w = fine.grid.weights[k];
            let t = times[k];
            dt_f_l1 += w * l1_dt;
            t_dtt_f_l1 += w * t * l1_dtt;
            if t <= 2.0_f64.powi(-10) {
                dt_tail += w * l1_dt;
            }
        }
        let dt_tail_fraction = if dt_f_l1 > 0.0 { dt_tail / dt_f_l1 } else { 0.0 };
        Ok(KernelDifferenceNorms { dt_f_l1, t_dtt_f_l1, dt_tail_fraction })
    }
}
