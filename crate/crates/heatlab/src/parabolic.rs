//! Semidiscrete heat equation ∂_t u_h = Δ_h u_h + P_h f, u_h(0) = 0, solved
//! exactly in the eigenbasis: each modal amplitude satisfies
//! a_i' = -λ_i a_i + f̂_i(t), whose Duhamel integral has a closed form for
//! every supported source profile. No time stepping error enters anywhere;
//! the only approximations in the crate are spatial quadrature and the
//! eigensolve itself.

use crate::error::{Error, Result};
use crate::fem::{FeFunction, FeSpace};
use crate::quadrature::TimeGrid;
use crate::spectral::SpectralDecomposition;
use nalgebra::DVector;
use rayon::prelude::*;
use std::sync::Arc;

/// Time profiles g(t) for separable sources f = g(t) w(x).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeProfile {
    /// g ≡ 1.
    Constant,
    /// g(t) = e^{-t}.
    ExpDecay,
    /// g(t) = cos(ω t).
    Cosine { omega: f64 },
    /// g(t) = (-1)^k on [k·T/2^m, (k+1)·T/2^m): a square wave with 2^m
    /// panels over [0, T].
    SquareWave { m: u32 },
}

impl TimeProfile {
    /// g(t); square waves take their right-limit value at panel boundaries.
    pub fn value(&self, t: f64, t_end: f64) -> f64 {
        match *self {
            TimeProfile::Constant => 1.0,
            TimeProfile::ExpDecay => (-t).exp(),
            TimeProfile::Cosine { omega } => (omega * t).cos(),
            TimeProfile::SquareWave { m } => {
                let panels = 1u64 << m;
                let k = ((t / t_end * panels as f64).floor() as u64).min(panels - 1);
                if k % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

/// Right-hand sides supported by the solver.
pub enum SourceKind {
    /// f(t, x) = g(t) w(x) with w ∈ S_h.
    Separable { profile: TimeProfile, w: FeFunction },
    /// f constant on each of the uniform panels [k·T/P, (k+1)·T/P).
    PiecewiseConstantInTime { values: Vec<FeFunction> },
    /// P_h f = Σ c_i v_i, constant in time, given by eigenbasis coefficients.
    Modal { coeffs: DVector<f64> },
}

pub struct SourceTerm {
    pub kind: SourceKind,
    pub t_end: f64,
}

/// ∫₀ᵗ e^{-λ(t-s)} ds = (1 - e^{-λt})/λ.
fn duhamel_constant(lambda: f64, t: f64) -> f64 {
    -(-lambda * t).exp_m1() / lambda
}

/// ∫₀ᵗ e^{-λ(t-s)} e^{-s} ds = (e^{-t} - e^{-λt})/(λ - 1).
fn duhamel_exp_decay(lambda: f64, t: f64) -> f64 {
    let d = lambda - 1.0;
    if d.abs() < 1e-8 {
        // series around λ = 1: t e^{-t} (1 - d t/2 + O(d²t²))
        t * (-t).exp() * (1.0 - 0.5 * d * t)
    } else {
        ((-t).exp() - (-lambda * t).exp()) / d
    }
}

/// ∫₀ᵗ e^{-λ(t-s)} cos(ωs) ds = (λ cos ωt + ω sin ωt - λ e^{-λt})/(λ²+ω²).
fn duhamel_cosine(lambda: f64, omega: f64, t: f64) -> f64 {
    (lambda * (omega * t).cos() + omega * (omega * t).sin()
        - lambda * (-lambda * t).exp())
        / (lambda * lambda + omega * omega)
}

/// Per-panel kernel weights for piecewise-constant sources: the result has
/// one factor per panel k with s_k = k·dt, such that
/// a(t) = Σ_k factor_k · c_k for panel values c_k. Exact.
fn piecewise_factors(lambda: f64, dt: f64, t: f64, panels: usize) -> Vec<f64> {
    let mut out = vec![0.0; panels];
    let k_at = ((t / dt).floor() as usize).min(panels - 1);
    for (k, f) in out.iter_mut().enumerate().take(k_at) {
        // completed panel [s_k, s_{k+1}]:
        // ∫ e^{-λ(t-s)} ds = e^{-λ(t - s_{k+1})}(1 - e^{-λ dt})/λ
        let tail = t - (k as f64 + 1.0) * dt;
        *f = (-lambda * tail).exp() * (-(-lambda * dt).exp_m1()) / lambda;
    }
    if t > k_at as f64 * dt {
        // current partial panel [s_k, t]
        out[k_at] = (-(-lambda * (t - k_at as f64 * dt)).exp_m1()) / lambda;
    }
    out
}

enum ModalSource {
    Separable { profile: TimeProfile, w_modal: DVector<f64> },
    Piecewise { dt: f64, values: Vec<DVector<f64>> },
    Modal { coeffs: DVector<f64> },
}

/// Per-mode exact time integrals over [0, T] for amplitude A with
/// A' = -λA + g, A(0) = 0 and unit modal weight:
/// `i_a` = ∫A², `i_ag` = ∫A·g, `i_g` = ∫g².
fn constant_l2_integrals(lambda: f64, t: f64) -> (f64, f64, f64) {
    let em1 = -(-lambda * t).exp_m1();
    let em2 = -(-2.0 * lambda * t).exp_m1();
    let i_a = (t - 2.0 * em1 / lambda + em2 / (2.0 * lambda)) / (lambda * lambda);
    let i_ag = (t - em1 / lambda) / lambda;
    (i_a, i_ag, t)
}

fn exp_decay_l2_integrals(lambda: f64, t: f64) -> Result<(f64, f64, f64)> {
    let d = lambda - 1.0;
    if d <= 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "exact integrals for the exponential profile need λ > 1 + 1e-6, got λ = {lambda}"
        )));
    }
    let e2 = -(-2.0 * t).exp_m1() / 2.0;
    let ep = -(-(lambda + 1.0) * t).exp_m1() / (lambda + 1.0);
    let e2l = -(-2.0 * lambda * t).exp_m1() / (2.0 * lambda);
    Ok(((e2 - 2.0 * ep + e2l) / (d * d), (e2 - ep) / d, e2))
}

fn cosine_l2_integrals(lambda: f64, omega: f64, t: f64) -> (f64, f64, f64) {
    if omega == 0.0 {
        return constant_l2_integrals(lambda, t);
    }
    let dd = lambda * lambda + omega * omega;
    let (s, c) = (omega * t).sin_cos();
    let e = (-lambda * t).exp();
    let ic2 = 0.5 * t + s * c / (2.0 * omega);
    let is2 = 0.5 * t - s * c / (2.0 * omega);
    let ics = s * s / (2.0 * omega);
    let ie2 = -(-2.0 * lambda * t).exp_m1() / (2.0 * lambda);
    let ice = (lambda - e * (lambda * c - omega * s)) / dd;
    let ise = (omega - e * (lambda * s + omega * c)) / dd;
    let i_a = (lambda * lambda * ic2 + omega * omega * is2 + lambda * lambda * ie2
        + 2.0 * lambda * omega * ics
        - 2.0 * lambda * lambda * ice
        - 2.0 * lambda * omega * ise)
        / (dd * dd);
    let i_ag = (lambda * ic2 + omega * ics - lambda * ice) / dd;
    (i_a, i_ag, ic2)
}

/// Exact integrals for a source that is constant on uniform panels of width
/// `dt`; `coeff(k)` gives the modal source value on panel k. The recurrence
/// carries A across panels exactly.
fn piecewise_l2_integrals(
    lambda: f64,
    dt: f64,
    panels: usize,
    coeff: impl Fn(usize) -> f64,
) -> (f64, f64, f64) {
    let e_dt = (-lambda * dt).exp();
    let phi = -(-lambda * dt).exp_m1() / lambda;
    let psi = -(-2.0 * lambda * dt).exp_m1() / (2.0 * lambda);
    let (mut i_a, mut i_ag, mut i_g) = (0.0, 0.0, 0.0);
    let mut a0 = 0.0;
    for k in 0..panels {
        let c = coeff(k);
        let p = c / lambda;
        let q = a0 - p;
        i_a += p * p * dt + 2.0 * p * q * phi + q * q * psi;
        i_ag += c * (p * dt + q * phi);
        i_g += c * c * dt;
        a0 = p + q * e_dt;
    }
    (i_a, i_ag, i_g)
}

/// Exact L²-in-time norms of the solution and its companions over [0, T].
#[derive(Debug, Clone, Copy)]
pub struct ExactL2Norms {
    /// ∫₀ᵀ ‖∂_t u_h‖²_{L²} dt
    pub dudt_sq: f64,
    /// ∫₀ᵀ ‖Δ_h u_h‖²_{L²} dt
    pub lap_sq: f64,
    /// ∫₀ᵀ ‖∇u_h‖²_{L²} dt
    pub grad_sq: f64,
    /// ∫₀ᵀ ‖P_h f‖²_{L²} dt
    pub source_sq: f64,
    /// ∫₀ᵀ (P_h f, u_h)_{L²} dt
    pub source_state: f64,
    /// ‖u_h(T)‖²_{L²}
    pub state_end_sq: f64,
    /// ‖∇u_h(T)‖²_{L²}
    pub grad_end_sq: f64,
}

/// Exact semidiscrete solution with zero initial data.
pub struct SemidiscreteSolution {
    dec: Arc<SpectralDecomposition>,
    source: ModalSource,
    t_end: f64,
}

impl SemidiscreteSolution {
    pub fn new(dec: Arc<SpectralDecomposition>, source: &SourceTerm) -> Result<Self> {
        if !(source.t_end > 0.0 && source.t_end.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "final time must be positive and finite, got {}",
                source.t_end
            )));
        }
        let modal = match &source.kind {
            SourceKind::Separable { profile, w } => {
                if !Arc::ptr_eq(w.space(), dec.space()) {
                    return Err(Error::InvalidInput(
                        "separable source profile lives on a different space".into(),
                    ));
                }
                if let TimeProfile::Cosine { omega } = profile {
                    if !omega.is_finite() {
                        return Err(Error::InvalidArgument(
                            "cosine frequency must be finite".into(),
                        ));
                    }
                }
                if let TimeProfile::SquareWave { m } = profile {
                    if *m > 24 {
                        return Err(Error::InvalidArgument(format!(
                            "square wave with 2^{m} panels is unreasonable"
                        )));
                    }
                }
                ModalSource::Separable { profile: *profile, w_modal: dec.modal_coeffs(w) }
            }
            SourceKind::PiecewiseConstantInTime { values } => {
                if values.is_empty() {
                    return Err(Error::InvalidInput(
                        "piecewise-constant source needs at least one panel".into(),
                    ));
                }
                for v in values {
                    if !Arc::ptr_eq(v.space(), dec.space()) {
                        return Err(Error::InvalidInput(
                            "panel value lives on a different space".into(),
                        ));
                    }
                }
                ModalSource::Piecewise {
                    dt: source.t_end / values.len() as f64,
                    values: values.iter().map(|v| dec.modal_coeffs(v)).collect(),
                }
            }
            SourceKind::Modal { coeffs } => {
                if coeffs.len() != dec.len() {
                    return Err(Error::InvalidArgument(format!(
                        "modal source has {} coefficients, decomposition has {}",
                        coeffs.len(),
                        dec.len()
                    )));
                }
                ModalSource::Modal { coeffs: coeffs.clone() }
            }
        };
        Ok(Self { dec, source: modal, t_end: source.t_end })
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn decomposition(&self) -> &Arc<SpectralDecomposition> {
        &self.dec
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.t_end + 1e-12).contains(&t) {
            return Err(Error::InvalidArgument(format!(
                "time {t} outside the solved interval [0, {}]",
                self.t_end
            )));
        }
        Ok(())
    }

    /// Modal amplitudes a(t) from the closed-form Duhamel integrals.
    pub fn modal_state(&self, t: f64) -> Result<DVector<f64>> {
        self.check_time(t)?;
        let lam = self.dec.eigenvalues();
        Ok(match &self.source {
            ModalSource::Separable { profile, w_modal } => match *profile {
                TimeProfile::Constant => {
                    DVector::from_fn(lam.len(), |i, _| w_modal[i] * duhamel_constant(lam[i], t))
                }
                TimeProfile::ExpDecay => {
                    DVector::from_fn(lam.len(), |i, _| w_modal[i] * duhamel_exp_decay(lam[i], t))
                }
                TimeProfile::Cosine { omega } => DVector::from_fn(lam.len(), |i, _| {
                    w_modal[i] * duhamel_cosine(lam[i], omega, t)
                }),
                TimeProfile::SquareWave { m } => {
                    let panels = 1usize << m;
                    let dt = self.t_end / panels as f64;
                    DVector::from_fn(lam.len(), |i, _| {
                        let factors = piecewise_factors(lam[i], dt, t, panels);
                        factors
                            .iter()
                            .enumerate()
                            .map(|(k, f)| if k % 2 == 0 { *f } else { -*f })
                            .sum::<f64>()
                            * w_modal[i]
                    })
                }
            },
            ModalSource::Piecewise { dt, values } => {
                let mut a = DVector::zeros(lam.len());
                for i in 0..lam.len() {
                    let factors = piecewise_factors(lam[i], *dt, t, values.len());
                    a[i] = factors
                        .iter()
                        .zip(values.iter())
                        .map(|(f, c)| f * c[i])
                        .sum();
                }
                a
            }
            ModalSource::Modal { coeffs } => {
                DVector::from_fn(lam.len(), |i, _| coeffs[i] * duhamel_constant(lam[i], t))
            }
        })
    }

    /// Modal source coefficients f̂(t).
    pub fn modal_source_at(&self, t: f64) -> Result<DVector<f64>> {
        self.check_time(t)?;
        Ok(match &self.source {
            ModalSource::Separable { profile, w_modal } => {
                w_modal * profile.value(t, self.t_end)
            }
            ModalSource::Piecewise { dt, values } => {
                let k = ((t / dt).floor() as usize).min(values.len() - 1);
                values[k].clone()
            }
            ModalSource::Modal { coeffs } => coeffs.clone(),
        })
    }

    /// d/dt f̂(t); zero for sources that are constant in time (and for the
    /// piecewise-constant ones away from their switching times).
    pub fn modal_source_rate(&self, t: f64) -> Result<DVector<f64>> {
        self.check_time(t)?;
        Ok(match &self.source {
            ModalSource::Separable { profile, w_modal } => {
                let rate = match *profile {
                    TimeProfile::Constant => 0.0,
                    TimeProfile::ExpDecay => -(-t).exp(),
                    TimeProfile::Cosine { omega } => -omega * (omega * t).sin(),
                    TimeProfile::SquareWave { .. } => 0.0,
                };
                w_modal * rate
            }
            ModalSource::Piecewise { .. } | ModalSource::Modal { .. } => {
                DVector::zeros(self.dec.len())
            }
        })
    }

    /// a''(t) = -λ a'(t) + f̂'(t), exact away from source switching times.
    pub fn modal_acceleration(&self, t: f64) -> Result<DVector<f64>> {
        let v = self.modal_velocity(t)?;
        let r = self.modal_source_rate(t)?;
        let lam = self.dec.eigenvalues();
        Ok(DVector::from_fn(lam.len(), |i, _| -lam[i] * v[i] + r[i]))
    }

    /// a'(t) = -λ a(t) + f̂(t), exactly.
    pub fn modal_velocity(&self, t: f64) -> Result<DVector<f64>> {
        let a = self.modal_state(t)?;
        let f = self.modal_source_at(t)?;
        let lam = self.dec.eigenvalues();
        Ok(DVector::from_fn(lam.len(), |i, _| -lam[i] * a[i] + f[i]))
    }

    pub fn state(&self, t: f64) -> Result<FeFunction> {
        Ok(self.dec.from_modal(&self.modal_state(t)?))
    }

    pub fn velocity(&self, t: f64) -> Result<FeFunction> {
        Ok(self.dec.from_modal(&self.modal_velocity(t)?))
    }

    pub fn laplacian(&self, t: f64) -> Result<FeFunction> {
        let mut a = self.modal_state(t)?;
        let lam = self.dec.eigenvalues();
        for i in 0..lam.len() {
            a[i] *= -lam[i];
        }
        Ok(self.dec.from_modal(&a))
    }

    pub fn projected_source(&self, t: f64) -> Result<FeFunction> {
        Ok(self.dec.from_modal(&self.modal_source_at(t)?))
    }

    /// Closed-form L²(0,T) integrals, summed over modes. No time quadrature
    /// enters: boundary layers near t = 0 and source switching times are
    /// integrated exactly.
    pub fn exact_l2_norms(&self) -> Result<ExactL2Norms> {
        let lam = self.dec.eigenvalues();
        let t_end = self.t_end;
        let mut out = ExactL2Norms {
            dudt_sq: 0.0,
            lap_sq: 0.0,
            grad_sq: 0.0,
            source_sq: 0.0,
            source_state: 0.0,
            state_end_sq: 0.0,
            grad_end_sq: 0.0,
        };
        let a_end = self.modal_state(t_end)?;
        for i in 0..lam.len() {
            let l = lam[i];
            // per-mode (∫A², ∫Ag, ∫g²) scaled by the squared modal weight
            let (i_a, i_ag, i_g) = match &self.source {
                ModalSource::Separable { profile, w_modal } => {
                    let w2 = w_modal[i] * w_modal[i];
                    let (a, ag, g) = match *profile {
                        TimeProfile::Constant => constant_l2_integrals(l, t_end),
                        TimeProfile::ExpDecay => exp_decay_l2_integrals(l, t_end)?,
                        TimeProfile::Cosine { omega } => cosine_l2_integrals(l, omega, t_end),
                        TimeProfile::SquareWave { m } => {
                            let panels = 1usize << m;
                            piecewise_l2_integrals(l, t_end / panels as f64, panels, |k| {
                                if k % 2 == 0 {
                                    1.0
                                } else {
                                    -1.0
                                }
                            })
                        }
                    };
                    (w2 * a, w2 * ag, w2 * g)
                }
                ModalSource::Piecewise { dt, values } => {
                    piecewise_l2_integrals(l, *dt, values.len(), |k| values[k][i])
                }
                ModalSource::Modal { coeffs } => {
                    let w2 = coeffs[i] * coeffs[i];
                    let (a, ag, g) = constant_l2_integrals(l, t_end);
                    (w2 * a, w2 * ag, w2 * g)
                }
            };
            out.lap_sq += l * l * i_a;
            out.grad_sq += l * i_a;
            out.dudt_sq += l * l * i_a - 2.0 * l * i_ag + i_g;
            out.source_sq += i_g;
            out.source_state += i_ag;
            out.state_end_sq += a_end[i] * a_end[i];
            out.grad_end_sq += l * a_end[i] * a_end[i];
        }
        Ok(out)
    }
}

/// Solution samples at given times, with velocity and discrete Laplacian
/// slices reconstructed alongside the states.
pub struct TrajectorySample {
    pub times: Vec<f64>,
    pub states: Vec<FeFunction>,
    pub velocities: Vec<FeFunction>,
    pub laplacians: Vec<FeFunction>,
}

pub fn solve_semidiscrete(
    dec: &Arc<SpectralDecomposition>,
    source: &SourceTerm,
    times: &[f64],
) -> Result<TrajectorySample> {
    if times.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("sample times must be ascending".into()));
    }
    let sol = SemidiscreteSolution::new(dec.clone(), source)?;
    let mut states = Vec::with_capacity(times.len());
    let mut velocities = Vec::with_capacity(times.len());
    let mut laplacians = Vec::with_capacity(times.len());
    for &t in times {
        states.push(sol.state(t)?);
        velocities.push(sol.velocity(t)?);
        laplacians.push(sol.laplacian(t)?);
    }
    Ok(TrajectorySample {
        times: times.to_vec(),
        states,
        velocities,
        laplacians,
    })
}

impl TrajectorySample {
    /// `TIMES k` header, the sample times, then one FE-function block per
    /// state in the same text format functions use on their own.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("TIMES {}\n", self.times.len()));
        for t in &self.times {
            out.push_str(&format!("{t:.16e}\n"));
        }
        for s in &self.states {
            out.push_str(&s.to_text());
        }
        out
    }
}

/// Reads the `TrajectorySample::to_text` format (states only).
pub fn read_state_trajectory(
    space: &Arc<FeSpace>,
    text: &str,
) -> Result<(Vec<f64>, Vec<FeFunction>)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, msg: "empty trajectory".into() })?;
    let mut parts = header.split_whitespace();
    let count = match (parts.next(), parts.next(), parts.next()) {
        (Some("TIMES"), Some(c), None) => c.parse::<usize>().map_err(|_| Error::Parse {
            line: 1,
            msg: format!("bad time count {c:?}"),
        })?,
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: "expected header 'TIMES <count>'".into(),
            })
        }
    };
    let mut times = Vec::with_capacity(count);
    for k in 0..count {
        let line = lines.next().ok_or(Error::Parse {
            line: 2 + k,
            msg: "missing sample time".into(),
        })?;
        times.push(line.trim().parse().map_err(|_| Error::Parse {
            line: 2 + k,
            msg: format!("bad time {line:?}"),
        })?);
    }
    let rest: Vec<&str> = lines.collect();
    let per_block = space.num_dofs() + 1;
    if rest.len() != count * per_block {
        return Err(Error::Parse {
            line: 1 + count + rest.len(),
            msg: format!(
                "expected {} function lines, found {}",
                count * per_block,
                rest.len()
            ),
        });
    }
    let mut states = Vec::with_capacity(count);
    for k in 0..count {
        let block = rest[k * per_block..(k + 1) * per_block].join("\n");
        states.push(FeFunction::from_text(space.clone(), &block)?);
    }
    Ok((times, states))
}

/// Composite Bochner norm ‖t ↦ v(t)‖_{Lᵖ(0,T)} from nonnegative node values
/// on a quadrature grid; p = ∞ takes the max over grid nodes.
pub fn bochner_norm(grid: &TimeGrid, node_values: &[f64], p: f64) -> Result<f64> {
    if node_values.len() != grid.nodes.len() {
        return Err(Error::InvalidArgument(format!(
            "{} node values on a grid with {} nodes",
            node_values.len(),
            grid.nodes.len()
        )));
    }
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "Bochner exponent must be in [1, inf], got {p}"
        )));
    }
    if p.is_infinite() {
        return Ok(node_values.iter().fold(0.0_f64, |m, &v| m.max(v)));
    }
    let total: f64 = grid
        .weights
        .iter()
        .zip(node_values)
        .map(|(w, v)| w * v.powf(p))
        .sum();
    Ok(total.powf(1.0 / p))
}

/// Which reconstructed field of the solution to measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryField {
    State,
    Velocity,
    Laplacian,
    ProjectedSource,
}

/// ‖ t ↦ ‖X(t)‖_{Lq} ‖_{Lp(0,T)} on a quadrature grid.
pub fn bochner_field_norm(
    sol: &SemidiscreteSolution,
    grid: &TimeGrid,
    field: TrajectoryField,
    p: f64,
    q: f64,
) -> Result<f64> {
    let node_norms: Vec<Result<f64>> = grid
        .nodes
        .par_iter()
        .map(|&t| {
            let f = match field {
                TrajectoryField::State => sol.state(t)?,
                TrajectoryField::Velocity => sol.velocity(t)?,
                TrajectoryField::Laplacian => sol.laplacian(t)?,
                TrajectoryField::ProjectedSource => sol.projected_source(t)?,
            };
            if q == 2.0 {
                Ok(f.norm_l2())
            } else {
                f.norm_lq(q)
            }
        })
        .collect();
    let vals: Result<Vec<f64>> = node_norms.into_iter().collect();
    bochner_norm(grid, &vals?, p)
}
