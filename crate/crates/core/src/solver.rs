//! Weighted-metric ADMM for the sparse condensed MPC problem and its
//! proximal-gradient special case, in exact or emulated fixed-point arithmetic.
//!
//! The problem solved at every MPC step is
//!
//! ```text
//! min_u  1/2 (Phi u + F x - R_s)^T Q (Phi u + F x - R_s) + sigma ||z0||_p + I_C(z1)
//! s.t.   A u = z,   A = [I; M]
//! ```
//!
//! with the iteration
//!
//! ```text
//! u+ = argmin_u g(u) + 1/2 ||u - L1^-1 gamma1||^2_L1
//! z+ = argmin_z h(z) + 1/2 ||z - L2^-1 gamma2||^2_L2
//! v+ = v + A u+ - z+
//! L1 = A^T L A / lambda_u + M_u,   gamma1 = M_u u + A^T L (z - v) / lambda_u
//! L2 = L / lambda_z + M_z,         gamma2 = M_z z + L (A u+ + v) / lambda_z
//! ```
//!
//! The proximal-gradient solver iterates `u+ = S_{sigma s}(u - s grad(u))`
//! with `s = 1 / lambda_u`; under fixed-point arithmetic the gradient carries
//! the datapath rounding error `eps`, which is recorded every iteration.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::condense::{build_tracking_form, constraint_bound, CondensedMpc, MpcProblem, NormP};
use crate::error::{check_dim, Error, Result};
use crate::fxp::{quantize_raw, FxpFormat, QuantizedMatrix};
use crate::prox::{hard, prox_z, soft};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Proximal-gradient reduction (the default fabric design).
    #[default]
    Axpgd,
    WlmAdmm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantizeScope {
    /// Only the gradient (or u-update kernel) evaluation runs in fixed point.
    #[default]
    GradientOnly,
    /// Iterates, step sizes and thresholds are fixed-point as well.
    AllIterates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Arithmetic {
    #[default]
    Exact,
    Fxp(FxpFormat),
}

/// A diagonal matrix given either as one repeated value or entry by entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Diagonal {
    Uniform(f64),
    Entries(Vec<f64>),
}

impl Diagonal {
    pub fn resolve(&self, len: usize) -> Result<DVector<f64>> {
        match self {
            Diagonal::Uniform(v) => Ok(DVector::from_element(len, *v)),
            Diagonal::Entries(e) => {
                check_dim("diagonal metric", len, e.len())?;
                Ok(DVector::from_column_slice(e))
            }
        }
    }

    fn all(&self, pred: impl Fn(f64) -> bool) -> bool {
        match self {
            Diagonal::Uniform(v) => pred(*v),
            Diagonal::Entries(e) => e.iter().all(|v| pred(*v)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub lambda_u: f64,
    pub lambda_z: f64,
    pub l: Diagonal,
    pub m_u: Diagonal,
    pub m_z: Diagonal,
    pub max_iters: usize,
    pub tol_primal: f64,
    pub arithmetic: Arithmetic,
    pub quantize_scope: QuantizeScope,
    /// Include the inequality rows `M u <= N` in the splitting. When false the
    /// splitting matrix is the identity and only the sparsity term is split off.
    pub constrained: bool,
}

/// Step size `s = 1/lambda_u` used by the fabric design.
pub const DEFAULT_STEP: f64 = 0.0002;

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Axpgd,
            lambda_u: 1.0 / DEFAULT_STEP,
            lambda_z: 1.0 / DEFAULT_STEP,
            l: Diagonal::Uniform(1.0),
            m_u: Diagonal::Uniform(1.0),
            m_z: Diagonal::Uniform(0.0),
            max_iters: 400,
            tol_primal: 1e-8,
            arithmetic: Arithmetic::Exact,
            quantize_scope: QuantizeScope::GradientOnly,
            constrained: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !positive(self.lambda_u) || !positive(self.lambda_z) {
            return Err(Error::InvalidParameter(format!(
                "lambda_u and lambda_z must be positive (got {}, {})",
                self.lambda_u, self.lambda_z
            )));
        }
        if !self.l.all(positive) {
            return Err(Error::InvalidParameter("L must have a positive diagonal".into()));
        }
        if !self.m_u.all(nonneg) || !self.m_z.all(nonneg) {
            return Err(Error::InvalidParameter(
                "M_u and M_z must have nonnegative diagonals".into(),
            ));
        }
        if !nonneg(self.tol_primal) {
            return Err(Error::InvalidParameter("tol_primal must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn step_size(&self) -> f64 {
        1.0 / self.lambda_u
    }

    /// Stopping tolerance, floored at `2^(2-F)` under fixed point.
    pub fn effective_tol(&self) -> f64 {
        match self.arithmetic {
            Arithmetic::Exact => self.tol_primal,
            Arithmetic::Fxp(fmt) => self.tol_primal.max(4.0 * fmt.ulp()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolverState {
    pub u: DVector<f64>,
    pub z: DVector<f64>,
    pub v: DVector<f64>,
    pub iter: usize,
    /// `||eps||_2` of the fixed-point kernel per iteration (zeros when exact).
    pub eps_history: Vec<f64>,
    /// `||eps||_inf` per iteration.
    pub eps_inf_history: Vec<f64>,
    /// Primal residual `||A u - z||_2` (ADMM) or step norm `||u+ - u||_2`
    /// (proximal gradient) per iteration.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

impl SolverState {
    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }

    pub fn eps_peak(&self) -> f64 {
        self.eps_history.iter().copied().fold(0.0, f64::max)
    }

    pub fn eps_inf_peak(&self) -> f64 {
        self.eps_inf_history.iter().copied().fold(0.0, f64::max)
    }

    /// Warm start for the next receding-horizon step: the planned input
    /// sequence advanced by one block of `block` entries, zero-padded.
    pub fn shifted(&self, block: usize) -> SolverState {
        let n = self.u.len();
        let mut u = DVector::zeros(n);
        if block < n {
            u.rows_mut(0, n - block).copy_from(&self.u.rows(block, n - block));
        }
        SolverState {
            u,
            ..Default::default()
        }
    }
}

enum UKernel {
    Exact(Cholesky<f64, Dyn>),
    /// Inverse computed offline in double precision, applied in fixed point.
    Fixed(QuantizedMatrix),
}

/// Operator data shared by every iteration of every solve for one problem.
pub struct Splitting {
    n_u: usize,
    /// `None` stands for the identity.
    a_op: Option<DMatrix<f64>>,
    l_diag: DVector<f64>,
    m_u: DVector<f64>,
    m_z: DVector<f64>,
    lambda1: DMatrix<f64>,
    lambda2: DVector<f64>,
    lambda_u: f64,
    lambda_z: f64,
    sigma: f64,
    norm_p: NormP,
    kernel: Option<UKernel>,
    fmt: Option<FxpFormat>,
    scope: QuantizeScope,
}

impl Splitting {
    pub fn new(mpc: &MpcProblem, cond: &CondensedMpc, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let n_u = cond.n_u();
        let a_op = if cfg.constrained {
            let mut a = DMatrix::zeros(n_u + cond.mcal.nrows(), n_u);
            a.view_mut((0, 0), (n_u, n_u)).copy_from(&DMatrix::<f64>::identity(n_u, n_u));
            a.view_mut((n_u, 0), cond.mcal.shape()).copy_from(&cond.mcal);
            Some(a)
        } else {
            None
        };
        let rows = a_op.as_ref().map_or(n_u, |a| a.nrows());
        let l_diag = cfg.l.resolve(rows)?;
        let m_u = cfg.m_u.resolve(n_u)?;
        let m_z = cfg.m_z.resolve(rows)?;

        let mut lambda1 = match &a_op {
            Some(a) => {
                let mut la = a.clone();
                for (i, mut row) in la.row_iter_mut().enumerate() {
                    row *= l_diag[i];
                }
                a.transpose() * la / cfg.lambda_u
            }
            None => DMatrix::from_diagonal(&(&l_diag / cfg.lambda_u)),
        };
        for i in 0..n_u {
            lambda1[(i, i)] += m_u[i];
        }
        let lambda2 = &l_diag / cfg.lambda_z + &m_z;

        let fmt = match cfg.arithmetic {
            Arithmetic::Exact => None,
            Arithmetic::Fxp(f) => Some(f),
        };
        // The proximal-gradient path never touches the u-subproblem, so a
        // singular system only matters for ADMM.
        let kernel = match (&cond.h + &lambda1).cholesky() {
            Some(chol) => Some(match fmt {
                Some(f) if cfg.algorithm == Algorithm::WlmAdmm => {
                    UKernel::Fixed(QuantizedMatrix::from_real(&chol.inverse(), f)?)
                }
                _ => UKernel::Exact(chol),
            }),
            None if cfg.algorithm == Algorithm::WlmAdmm => {
                return Err(Error::Singular(
                    "H + Lambda_1 is not positive definite; check the metric".into(),
                ))
            }
            None => None,
        };

        Ok(Self {
            n_u,
            a_op,
            l_diag,
            m_u,
            m_z,
            lambda1,
            lambda2,
            lambda_u: cfg.lambda_u,
            lambda_z: cfg.lambda_z,
            sigma: mpc.sigma,
            norm_p: mpc.norm_p,
            kernel,
            fmt,
            scope: cfg.quantize_scope,
        })
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    /// Rows of the splitting matrix `A`, i.e. the length of `z` and `v`.
    pub fn n_z(&self) -> usize {
        self.a_op.as_ref().map_or(self.n_u, |a| a.nrows())
    }

    pub fn lambda1(&self) -> &DMatrix<f64> {
        &self.lambda1
    }

    pub fn lambda2_diag(&self) -> &DVector<f64> {
        &self.lambda2
    }

    pub fn apply_a(&self, u: &DVector<f64>) -> DVector<f64> {
        match &self.a_op {
            Some(a) => a * u,
            None => u.clone(),
        }
    }

    fn apply_a_t(&self, w: &DVector<f64>) -> DVector<f64> {
        match &self.a_op {
            Some(a) => a.tr_mul(w),
            None => w.clone(),
        }
    }

    /// `gamma1 = M_u u + A^T L (z - v) / lambda_u`.
    pub fn gamma1(&self, state: &SolverState) -> DVector<f64> {
        let w = (&state.z - &state.v).component_mul(&self.l_diag) / self.lambda_u;
        self.m_u.component_mul(&state.u) + self.apply_a_t(&w)
    }

    /// `gamma2 = M_z z + L (A u + v) / lambda_z`, using the already updated `u`.
    pub fn gamma2(&self, state: &SolverState) -> DVector<f64> {
        let w = (self.apply_a(&state.u) + &state.v).component_mul(&self.l_diag) / self.lambda_z;
        self.m_z.component_mul(&state.z) + w
    }

    /// Solves `(H + L1) u = rhs`, returning the datapath error when the
    /// kernel runs in fixed point.
    fn solve_u(&self, rhs: &DVector<f64>) -> Result<(DVector<f64>, Option<Vec<f64>>)> {
        match &self.kernel {
            None => Err(Error::Singular("H + Lambda_1 is not positive definite".into())),
            Some(UKernel::Exact(chol)) => Ok((chol.solve(rhs), None)),
            Some(UKernel::Fixed(k)) => {
                let fmt = k.format();
                let raw = rhs
                    .iter()
                    .map(|&v| quantize_raw(v, fmt))
                    .collect::<Result<Vec<_>>>()?;
                let out = k.affine_raw(&raw, None)?;
                let u = DVector::from_iterator(raw.len(), out.raw.iter().map(|&r| r as f64 * fmt.ulp()));
                Ok((u, Some(out.error)))
            }
        }
    }

    fn snap(&self, v: &mut DVector<f64>) -> Result<()> {
        if let (Some(fmt), QuantizeScope::AllIterates) = (self.fmt, self.scope) {
            for x in v.iter_mut() {
                *x = quantize_raw(*x, fmt)? as f64 * fmt.ulp();
            }
        }
        Ok(())
    }
}

/// Exact minimizer of `g(u) + 1/2 ||u - L1^-1 gamma1||^2_L1`, i.e. the
/// solution of `(H + L1) u = gamma1 - g_lin`.
pub fn u_update(state: &SolverState, split: &Splitting, g_lin: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(u_update_traced(state, split, g_lin)?.0)
}

fn u_update_traced(
    state: &SolverState,
    split: &Splitting,
    g_lin: &DVector<f64>,
) -> Result<(DVector<f64>, Option<Vec<f64>>)> {
    check_dim("u iterate", split.n_u, state.u.len())?;
    check_dim("linear term", split.n_u, g_lin.len())?;
    let rhs = split.gamma1(state) - g_lin;
    split.solve_u(&rhs)
}

/// Weighted proximal step on `z` given the updated `u`.
pub fn z_update(state: &SolverState, split: &Splitting, ncal: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim("z iterate", split.n_z(), state.z.len())?;
    check_dim("constraint bound", split.n_z() - split.n_u, ncal.len())?;
    let gamma2 = split.gamma2(state);
    let z = prox_z(
        gamma2.as_slice(),
        split.lambda2.as_slice(),
        split.sigma,
        split.norm_p,
        ncal.as_slice(),
        split.n_u,
    )?;
    Ok(DVector::from_vec(z))
}

/// Scaled dual ascent `v + A u - z`.
pub fn v_update(state: &SolverState, split: &Splitting) -> DVector<f64> {
    &state.v + split.apply_a(&state.u) - &state.z
}

fn norms(err: &[f64]) -> (f64, f64) {
    let l2 = err.iter().map(|e| e * e).sum::<f64>().sqrt();
    let inf = err.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    (l2, inf)
}

fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// A problem prepared for repeated solves from different states.
pub struct Solver<'a> {
    mpc: &'a MpcProblem,
    cond: &'a CondensedMpc,
    cfg: SolverConfig,
    split: Splitting,
    hessian_q: Option<QuantizedMatrix>,
}

impl<'a> Solver<'a> {
    pub fn new(mpc: &'a MpcProblem, cond: &'a CondensedMpc, cfg: &SolverConfig) -> Result<Self> {
        let split = Splitting::new(mpc, cond, cfg)?;
        let hessian_q = match cfg.arithmetic {
            Arithmetic::Fxp(fmt) if cfg.algorithm == Algorithm::Axpgd => {
                Some(QuantizedMatrix::from_real(&cond.h, fmt)?)
            }
            _ => None,
        };
        Ok(Self {
            mpc,
            cond,
            cfg: cfg.clone(),
            split,
            hessian_q,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn splitting(&self) -> &Splitting {
        &self.split
    }

    pub fn solve(
        &self,
        x: &DVector<f64>,
        warm_start: Option<&SolverState>,
    ) -> Result<(DVector<f64>, SolverState)> {
        match self.cfg.algorithm {
            Algorithm::Axpgd => self.axpgd(x, warm_start),
            Algorithm::WlmAdmm => self.admm(x, warm_start),
        }
    }

    fn initial_u(&self, warm_start: Option<&SolverState>) -> Result<DVector<f64>> {
        match warm_start {
            Some(s) if s.u.len() > 0 => {
                check_dim("warm start", self.split.n_u, s.u.len())?;
                // an infeasible warm start carries no information worth keeping
                let p = self.mpc.plant.n_inputs();
                let mut u = s.u.clone();
                for (i, v) in u.iter_mut().enumerate() {
                    *v = v.clamp(self.mpc.u_min[i % p], self.mpc.u_max[i % p]);
                }
                Ok(u)
            }
            _ => Ok(DVector::zeros(self.split.n_u)),
        }
    }

    fn admm(
        &self,
        x: &DVector<f64>,
        warm_start: Option<&SolverState>,
    ) -> Result<(DVector<f64>, SolverState)> {
        let split = &self.split;
        let form = build_tracking_form(self.mpc, self.cond, x)?;
        let ncal = if self.cfg.constrained {
            constraint_bound(self.cond, x)
        } else {
            DVector::zeros(0)
        };
        let tol = self.cfg.effective_tol();

        let mut state = SolverState {
            u: self.initial_u(warm_start)?,
            ..Default::default()
        };
        split.snap(&mut state.u)?;
        state.z = split.apply_a(&state.u);
        state.v = DVector::zeros(split.n_z());

        for k in 0..self.cfg.max_iters {
            let (u, err) = u_update_traced(&state, split, &form.g_lin)?;
            state.u = u;
            split.snap(&mut state.u)?;
            let (l2, inf) = err.as_deref().map_or((0.0, 0.0), norms);
            state.eps_history.push(l2);
            state.eps_inf_history.push(inf);

            state.z = z_update(&state, split, &ncal)?;
            split.snap(&mut state.z)?;
            state.v = v_update(&state, split);
            split.snap(&mut state.v)?;
            state.iter = k + 1;

            if !(all_finite(&state.u) && all_finite(&state.z) && all_finite(&state.v)) {
                return Err(Error::Divergence { iter: k + 1 });
            }
            let res = (split.apply_a(&state.u) - &state.z).norm();
            state.residuals.push(res);
            if res <= tol {
                state.converged = true;
                break;
            }
        }

        // Emit the sparse copy of u, projected onto the input box.
        let n_u = split.n_u;
        let p = self.mpc.plant.n_inputs();
        let mut u_seq = state.z.rows(0, n_u).into_owned();
        for (i, v) in u_seq.iter_mut().enumerate() {
            *v = v.clamp(self.mpc.u_min[i % p], self.mpc.u_max[i % p]);
        }
        Ok((u_seq, state))
    }

    fn axpgd(
        &self,
        x: &DVector<f64>,
        warm_start: Option<&SolverState>,
    ) -> Result<(DVector<f64>, SolverState)> {
        let form = build_tracking_form(self.mpc, self.cond, x)?;
        let u0 = self.initial_u(warm_start)?;
        let mut state = match (&self.hessian_q, self.cfg.quantize_scope) {
            (Some(hq), QuantizeScope::AllIterates) => self.axpgd_fixed(hq, &form.g_lin, &u0)?,
            (hq, _) => self.axpgd_float(hq.as_ref(), &form, u0)?,
        };
        state.z = state.u.clone();
        state.v = DVector::zeros(state.u.len());
        Ok((state.u.clone(), state))
    }

    /// Proximal-gradient iterates in double precision; the gradient is taken
    /// from the fixed-point datapath when `hq` is given.
    fn axpgd_float(
        &self,
        hq: Option<&QuantizedMatrix>,
        form: &crate::condense::TrackingForm,
        mut u: DVector<f64>,
    ) -> Result<SolverState> {
        let s = self.cfg.step_size();
        let sigma = self.mpc.sigma;
        let tol = self.cfg.effective_tol();
        let g_lin_raw = match hq {
            Some(h) => Some(
                form.g_lin
                    .iter()
                    .map(|&v| quantize_raw(v, h.format()))
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        let mut state = SolverState::default();
        let mut u_raw = vec![0i64; u.len()];

        for k in 0..self.cfg.max_iters {
            let grad = match (hq, &g_lin_raw) {
                (Some(h), Some(b)) => {
                    let fmt = h.format();
                    for (r, &v) in u_raw.iter_mut().zip(u.iter()) {
                        *r = quantize_raw(v, fmt)?;
                    }
                    let out = h.affine_raw(&u_raw, Some(b))?;
                    let (l2, inf) = norms(&out.error);
                    state.eps_history.push(l2);
                    state.eps_inf_history.push(inf);
                    DVector::from_iterator(u.len(), out.raw.iter().map(|&r| r as f64 * fmt.ulp()))
                }
                _ => {
                    state.eps_history.push(0.0);
                    state.eps_inf_history.push(0.0);
                    form.gradient(&u)
                }
            };
            let next = (&u - grad * s).map(|w| match self.mpc.norm_p {
                NormP::L1 => soft(w, sigma * s),
                NormP::L0 => hard(w, (2.0 * sigma * s).sqrt()),
            });
            state.iter = k + 1;
            if !all_finite(&next) {
                return Err(Error::Divergence { iter: k + 1 });
            }
            let step = (&next - &u).norm();
            u = next;
            state.residuals.push(step);
            if step <= tol {
                state.converged = true;
                break;
            }
        }
        state.u = u;
        Ok(state)
    }

    /// Proximal-gradient iterates carried entirely as fixed-point mantissas.
    fn axpgd_fixed(
        &self,
        hq: &QuantizedMatrix,
        g_lin: &DVector<f64>,
        u0: &DVector<f64>,
    ) -> Result<SolverState> {
        let fmt = hq.format();
        let s = self.cfg.step_size();
        let sigma = self.mpc.sigma;
        let tol = self.cfg.effective_tol();
        let q = |v: f64| quantize_raw(v, fmt);
        let step_raw = q(s)? as i128;
        let thresh_raw = match self.mpc.norm_p {
            NormP::L1 => q(sigma * s)?,
            NormP::L0 => q((2.0 * sigma * s).sqrt())?,
        };
        let bias = g_lin.iter().map(|&v| q(v)).collect::<Result<Vec<_>>>()?;
        let mut u = u0.iter().map(|&v| q(v)).collect::<Result<Vec<_>>>()?;
        let mut state = SolverState::default();

        for k in 0..self.cfg.max_iters {
            let out = hq.affine_raw(&u, Some(&bias))?;
            let (l2, inf) = norms(&out.error);
            state.eps_history.push(l2);
            state.eps_inf_history.push(inf);

            let mut step_sq = 0i128;
            for (uj, &gj) in u.iter_mut().zip(&out.raw) {
                let delta = fmt.fit(fmt.rescale_product(step_raw * gj as i128))?;
                let w = fmt.fit(*uj as i128 - delta as i128)?;
                let next = match self.mpc.norm_p {
                    NormP::L1 => {
                        if w >= thresh_raw {
                            w - thresh_raw
                        } else if w <= -thresh_raw {
                            w + thresh_raw
                        } else {
                            0
                        }
                    }
                    NormP::L0 => {
                        if (w as i128).abs() > thresh_raw as i128 {
                            w
                        } else {
                            0
                        }
                    }
                };
                let d = next as i128 - *uj as i128;
                step_sq = step_sq.saturating_add(d * d);
                *uj = next;
            }
            state.iter = k + 1;
            let step = (step_sq as f64).sqrt() * fmt.ulp();
            state.residuals.push(step);
            if step <= tol {
                state.converged = true;
                break;
            }
        }
        state.u = DVector::from_iterator(u.len(), u.iter().map(|&r| r as f64 * fmt.ulp()));
        Ok(state)
    }
}

pub fn wlm_admm_solve(
    mpc: &MpcProblem,
    cond: &CondensedMpc,
    x: &DVector<f64>,
    cfg: &SolverConfig,
    warm_start: Option<&SolverState>,
) -> Result<(DVector<f64>, SolverState)> {
    let cfg = SolverConfig {
        algorithm: Algorithm::WlmAdmm,
        ..cfg.clone()
    };
    Solver::new(mpc, cond, &cfg)?.solve(x, warm_start)
}

pub fn axpgd_solve(
    mpc: &MpcProblem,
    cond: &CondensedMpc,
    x: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<(DVector<f64>, SolverState)> {
    let cfg = SolverConfig {
        algorithm: Algorithm::Axpgd,
        ..cfg.clone()
    };
    Solver::new(mpc, cond, &cfg)?.solve(x, None)
}

/// Full MPC objective `sigma ||u||_p + tracking cost`.
pub fn mpc_objective(mpc: &MpcProblem, cond: &CondensedMpc, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
    mpc.sigma * mpc.norm_p.penalty(u.as_slice()) + cond.tracking_cost(x, u)
}

/// Value of the u-subproblem, `min_u g(u) + 1/2 ||u - L1^-1 gamma1||^2_L1`,
/// as a function of `gamma1`. Its gradient is `L1^-1 gamma1 - u*(gamma1)`.
pub fn u_envelope(
    split: &Splitting,
    form: &crate::condense::TrackingForm,
    gamma1: &DVector<f64>,
) -> Result<f64> {
    let lambda1 = split.lambda1();
    let chol = (&form.h + lambda1)
        .cholesky()
        .ok_or_else(|| Error::Singular("H + Lambda_1".into()))?;
    let u = chol.solve(&(gamma1 - &form.g_lin));
    let center = lambda1
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("Lambda_1".into()))?
        .solve(gamma1);
    let d = &u - center;
    Ok(form.value(&u) + 0.5 * d.dot(&(lambda1 * &d)))
}
