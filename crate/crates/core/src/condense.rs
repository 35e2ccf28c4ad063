//! Dense condensed MPC: prediction matrices, stacked reference, constraint
//! pair and the quadratic tracking form.
//!
//! Stacked output prediction over `N_p` steps is `Y = Phi u + F x`, where `u`
//! stacks the `N_c` planned input blocks. Inputs beyond the control horizon
//! are zero, so block row `i` of `Phi` ends at `C A_d^(i-N_c) B_d`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::plant::DiscretePlant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormP {
    /// Counting "norm": number of nonzero entries.
    L0,
    #[default]
    L1,
}

impl NormP {
    /// `sum |u_i|` for l1, `#{i : u_i != 0}` for l0.
    pub fn penalty(&self, u: &[f64]) -> f64 {
        match self {
            NormP::L1 => u.iter().map(|v| v.abs()).sum(),
            NormP::L0 => u.iter().filter(|v| **v != 0.0).count() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcProblem {
    pub plant: DiscretePlant,
    pub n_p: usize,
    pub n_c: usize,
    /// Per-step output weight (m x m); expanded block-diagonally over the horizon.
    pub q_step: DMatrix<f64>,
    pub sigma: f64,
    pub norm_p: NormP,
    pub u_min: DVector<f64>,
    pub u_max: DVector<f64>,
    pub y_min: DVector<f64>,
    pub y_max: DVector<f64>,
    /// Output reference, held constant across the prediction horizon.
    pub r: DVector<f64>,
}

impl MpcProblem {
    pub fn validate(&self) -> Result<()> {
        let p = self.plant.n_inputs();
        let m = self.plant.n_outputs();
        if self.n_c == 0 || self.n_c > self.n_p {
            return Err(Error::InvalidParameter(format!(
                "horizons must satisfy 1 <= N_c <= N_p (got N_c = {}, N_p = {})",
                self.n_c, self.n_p
            )));
        }
        check_dim("Q rows", m, self.q_step.nrows())?;
        check_dim("Q columns", m, self.q_step.ncols())?;
        let asym = (&self.q_step - self.q_step.transpose()).amax();
        if asym > 1e-12 * self.q_step.amax().max(1.0) || self.q_step.clone().cholesky().is_none() {
            return Err(Error::InvalidParameter(
                "Q must be symmetric positive definite".into(),
            ));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be finite and nonnegative, got {}",
                self.sigma
            )));
        }
        check_dim("u_min", p, self.u_min.len())?;
        check_dim("u_max", p, self.u_max.len())?;
        check_dim("y_min", m, self.y_min.len())?;
        check_dim("y_max", m, self.y_max.len())?;
        check_dim("reference", m, self.r.len())?;
        if self.u_min.iter().zip(self.u_max.iter()).any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::InvalidParameter("u_min < u_max must hold elementwise".into()));
        }
        if self.y_min.iter().zip(self.y_max.iter()).any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::InvalidParameter("y_min < y_max must hold elementwise".into()));
        }
        if self.r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("reference".into()));
        }
        Ok(())
    }

    /// Number of decision variables, `p N_c`.
    pub fn n_u(&self) -> usize {
        self.plant.n_inputs() * self.n_c
    }

    pub fn weight_matrix(&self) -> DMatrix<f64> {
        block_diag(&self.q_step, self.n_p)
    }
}

/// A one-step problem whose condensed form at `x = 0` is the LASSO
/// `1/2 ||Phi u - b||^2 + sigma ||u||_1`: `A_d = B_d = I`, `C = Phi`,
/// `Q = I`, `r = b`, no active bounds.
pub fn lasso_problem(phi: &DMatrix<f64>, b: &DVector<f64>, sigma: f64) -> Result<MpcProblem> {
    let (m, n) = phi.shape();
    check_dim("LASSO target", m, b.len())?;
    let mpc = MpcProblem {
        plant: DiscretePlant {
            a_d: DMatrix::identity(n, n),
            b_d: DMatrix::identity(n, n),
            c: phi.clone(),
            d: DMatrix::zeros(m, n),
            h: 1.0,
        },
        n_p: 1,
        n_c: 1,
        q_step: DMatrix::identity(m, m),
        sigma,
        norm_p: NormP::L1,
        u_min: DVector::from_element(n, f64::NEG_INFINITY),
        u_max: DVector::from_element(n, f64::INFINITY),
        y_min: DVector::from_element(m, f64::NEG_INFINITY),
        y_max: DVector::from_element(m, f64::INFINITY),
        r: b.clone(),
    };
    mpc.validate()?;
    Ok(mpc)
}

fn block_diag(block: &DMatrix<f64>, count: usize) -> DMatrix<f64> {
    let (r, c) = block.shape();
    let mut out = DMatrix::zeros(r * count, c * count);
    for k in 0..count {
        out.view_mut((k * r, k * c), (r, c)).copy_from(block);
    }
    out
}

fn repeat(v: &DVector<f64>, count: usize) -> DVector<f64> {
    DVector::from_iterator(v.len() * count, (0..count).flat_map(|_| v.iter().copied()))
}

/// Prediction matrices `(Phi, F)` built from iterated products `C A_d^k`.
pub fn build_prediction(
    plant: &DiscretePlant,
    n_p: usize,
    n_c: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if n_c == 0 || n_c > n_p {
        return Err(Error::InvalidParameter(format!(
            "horizons must satisfy 1 <= N_c <= N_p (got N_c = {n_c}, N_p = {n_p})"
        )));
    }
    let n = plant.n_states();
    let p = plant.n_inputs();
    let m = plant.n_outputs();

    let mut f = DMatrix::zeros(m * n_p, n);
    // markov[k] = C A_d^k B_d
    let mut markov = Vec::with_capacity(n_p);
    let mut ca = plant.c.clone();
    for i in 0..n_p {
        markov.push(&ca * &plant.b_d);
        ca = &ca * &plant.a_d;
        f.view_mut((i * m, 0), (m, n)).copy_from(&ca);
    }

    let mut phi = DMatrix::zeros(m * n_p, p * n_c);
    for i in 0..n_p {
        for j in 0..n_c.min(i + 1) {
            phi.view_mut((i * m, j * p), (m, p)).copy_from(&markov[i - j]);
        }
    }
    Ok((phi, f))
}

/// Problem data that does not depend on the measured state.
#[derive(Debug, Clone)]
pub struct CondensedMpc {
    pub phi: DMatrix<f64>,
    pub f: DMatrix<f64>,
    /// Reference stacked `N_p` times.
    pub r_s: DVector<f64>,
    /// Block-diagonal weight over the horizon.
    pub q: DMatrix<f64>,
    /// Tracking Hessian `Phi^T Q Phi`.
    pub h: DMatrix<f64>,
    /// `Phi^T Q`, shared by the linear term.
    pub phi_t_q: DMatrix<f64>,
    /// `[-I; I; -Phi; Phi]`.
    pub mcal: DMatrix<f64>,
    /// `[-u_min; u_max; -y_min; y_max]` replicated over the horizons.
    pub ncal_template: DVector<f64>,
    n_states: usize,
}

impl CondensedMpc {
    pub fn new(mpc: &MpcProblem) -> Result<Self> {
        mpc.validate()?;
        let (phi, f) = build_prediction(&mpc.plant, mpc.n_p, mpc.n_c)?;
        let q = mpc.weight_matrix();
        let phi_t_q = phi.transpose() * &q;
        let mut h = &phi_t_q * &phi;
        // symmetrize against round-off so factorizations see an exact SPD pattern
        h = (&h + h.transpose()) * 0.5;

        let nu = mpc.n_u();
        let ny = phi.nrows();
        let mut mcal = DMatrix::zeros(2 * nu + 2 * ny, nu);
        mcal.view_mut((0, 0), (nu, nu)).copy_from(&(-DMatrix::<f64>::identity(nu, nu)));
        mcal.view_mut((nu, 0), (nu, nu)).copy_from(&DMatrix::<f64>::identity(nu, nu));
        mcal.view_mut((2 * nu, 0), (ny, nu)).copy_from(&(-&phi));
        mcal.view_mut((2 * nu + ny, 0), (ny, nu)).copy_from(&phi);

        let mut ncal_template = DVector::zeros(mcal.nrows());
        ncal_template.rows_mut(0, nu).copy_from(&(-repeat(&mpc.u_min, mpc.n_c)));
        ncal_template.rows_mut(nu, nu).copy_from(&repeat(&mpc.u_max, mpc.n_c));
        ncal_template.rows_mut(2 * nu, ny).copy_from(&(-repeat(&mpc.y_min, mpc.n_p)));
        ncal_template.rows_mut(2 * nu + ny, ny).copy_from(&repeat(&mpc.y_max, mpc.n_p));

        Ok(Self {
            r_s: repeat(&mpc.r, mpc.n_p),
            phi,
            f,
            q,
            h,
            phi_t_q,
            mcal,
            ncal_template,
            n_states: mpc.plant.n_states(),
        })
    }

    pub fn n_u(&self) -> usize {
        self.phi.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.phi.nrows()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Predicted stacked outputs `Phi u + F x`.
    pub fn predict(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.phi * u + &self.f * x
    }

    /// `1/2 (Phi u + F x - R_s)^T Q (Phi u + F x - R_s)`, evaluated directly.
    pub fn tracking_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let e = self.predict(x, u) - &self.r_s;
        0.5 * e.dot(&(&self.q * &e))
    }
}

/// Constraint pair `(M, N)` such that the feasible inputs are `M u <= N`.
pub fn build_constraints(
    mpc: &MpcProblem,
    cond: &CondensedMpc,
    x: &DVector<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_dim("state", mpc.plant.n_states(), x.len())?;
    check_dim("constraint template", cond.mcal.nrows(), cond.ncal_template.len())?;
    Ok((cond.mcal.clone(), constraint_bound(cond, x)))
}

/// The state-dependent right-hand side `N` alone.
pub(crate) fn constraint_bound(cond: &CondensedMpc, x: &DVector<f64>) -> DVector<f64> {
    let nu = cond.n_u();
    let ny = cond.n_y();
    let fx = &cond.f * x;
    let mut ncal = cond.ncal_template.clone();
    for i in 0..ny {
        ncal[2 * nu + i] += fx[i];
        ncal[2 * nu + ny + i] -= fx[i];
    }
    ncal
}

/// Quadratic expansion `1/2 u^T H u + g^T u + c0` of the tracking cost at a state.
#[derive(Debug, Clone)]
pub struct TrackingForm {
    pub h: DMatrix<f64>,
    pub g_lin: DVector<f64>,
    pub c0: f64,
}

impl TrackingForm {
    pub fn value(&self, u: &DVector<f64>) -> f64 {
        0.5 * u.dot(&(&self.h * u)) + self.g_lin.dot(u) + self.c0
    }

    pub fn gradient(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.h * u + &self.g_lin
    }
}

pub fn build_tracking_form(
    mpc: &MpcProblem,
    cond: &CondensedMpc,
    x: &DVector<f64>,
) -> Result<TrackingForm> {
    check_dim("state", mpc.plant.n_states(), x.len())?;
    check_dim("Q size", cond.n_y(), cond.q.nrows())?;
    let offset = &cond.f * x - &cond.r_s;
    let g_lin = &cond.phi_t_q * &offset;
    let c0 = 0.5 * offset.dot(&(&cond.q * &offset));
    Ok(TrackingForm {
        h: cond.h.clone(),
        g_lin,
        c0,
    })
}
