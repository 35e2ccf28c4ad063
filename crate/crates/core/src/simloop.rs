//! Receding-horizon closed-loop simulation: solve from the measured state,
//! apply the first input block to the double-precision plant, repeat.

use nalgebra::{DMatrix, DVector};

use crate::condense::{CondensedMpc, MpcProblem, NormP};
use crate::error::{check_dim, Error, Result};
use crate::fxp::FxpFormat;
use crate::plant::{default_satellite_plant, plant_step, zoh_discretize, ContinuousPlant, DiscretePlant};
use crate::solver::{Arithmetic, QuantizeScope, Solver, SolverConfig, SolverState};

/// Horizon, weight, bound and reference settings; combined with a
/// discretized plant they form an [`MpcProblem`].
#[derive(Debug, Clone, PartialEq)]
pub struct MpcSettings {
    pub n_p: usize,
    pub n_c: usize,
    pub q_step: DMatrix<f64>,
    pub sigma: f64,
    pub norm_p: NormP,
    pub u_min: DVector<f64>,
    pub u_max: DVector<f64>,
    pub y_min: DVector<f64>,
    pub y_max: DVector<f64>,
    pub r: DVector<f64>,
}

impl MpcSettings {
    pub fn problem(&self, plant: DiscretePlant) -> Result<MpcProblem> {
        let mpc = MpcProblem {
            plant,
            n_p: self.n_p,
            n_c: self.n_c,
            q_step: self.q_step.clone(),
            sigma: self.sigma,
            norm_p: self.norm_p,
            u_min: self.u_min.clone(),
            u_max: self.u_max.clone(),
            y_min: self.y_min.clone(),
            y_max: self.y_max.clone(),
            r: self.r.clone(),
        };
        mpc.validate()?;
        Ok(mpc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub plant: ContinuousPlant,
    pub mpc: MpcSettings,
    pub solver: SolverConfig,
    pub x0: DVector<f64>,
    pub steps: usize,
    /// Recorded with the run; the loop itself has no random elements.
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        if self.steps == 0 {
            return Err(Error::InvalidParameter("simulation needs at least one step".into()));
        }
        check_dim("initial state", self.plant.n_states(), self.x0.len())?;
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial state".into()));
        }
        self.solver.validate()
    }

    pub fn with_arithmetic(mut self, arithmetic: Arithmetic) -> Self {
        self.solver.arithmetic = arithmetic;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.mpc.sigma = sigma;
        self
    }
}

/// Integer bits (sign included) kept by every fabric format of the precision
/// study, so that narrowing the word only removes fraction bits.
pub const DEFAULT_INTEGER_BITS: u32 = 16;

/// `Q(W, W - DEFAULT_INTEGER_BITS)` with default rounding and overflow.
pub fn study_format(word_width: u32) -> Result<FxpFormat> {
    if word_width <= DEFAULT_INTEGER_BITS {
        return Err(Error::InvalidFormat(format!(
            "word width {word_width} leaves no fraction bits next to {DEFAULT_INTEGER_BITS} integer bits"
        )));
    }
    FxpFormat::new(word_width, word_width - DEFAULT_INTEGER_BITS)
}

/// Rest-to-rest reorientation of the default satellite.
///
/// The weights put the yaw/wheel loop of the one-iteration controller close
/// to its stability margin. With 18 or more fraction bits the step `s` rounds
/// to within 1% of itself; with the 12 that a 28-bit word keeps under
/// [`DEFAULT_INTEGER_BITS`] it rounds to `2^-12`, 22% larger. The 1 V input
/// box bounds the resulting oscillation below the range of the datapath.
pub fn default_scenario() -> Scenario {
    let plant = default_satellite_plant();
    let (n, p, m) = (plant.n_states(), plant.n_inputs(), plant.n_outputs());
    let mut q = DMatrix::identity(m, m);
    for i in 0..3 {
        q[(i, i)] = 3000.0;
        q[(i + 3, i + 3)] = 5500.0;
    }
    q[(6, 6)] = 0.01;
    let mut x0 = DVector::zeros(n);
    x0[0] = 0.10;
    x0[1] = -0.08;
    x0[2] = 0.12;
    Scenario {
        plant,
        mpc: MpcSettings {
            n_p: 10,
            n_c: 10,
            q_step: q,
            sigma: 1.5,
            norm_p: NormP::L1,
            u_min: DVector::from_element(p, -1.0),
            u_max: DVector::from_element(p, 1.0),
            y_min: DVector::from_element(m, f64::NEG_INFINITY),
            y_max: DVector::from_element(m, f64::INFINITY),
            r: DVector::zeros(m),
        },
        solver: SolverConfig {
            max_iters: 1,
            quantize_scope: QuantizeScope::AllIterates,
            constrained: false,
            ..SolverConfig::default()
        },
        x0,
        steps: 400,
        seed: 20231,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub t: f64,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub u: DVector<f64>,
    /// The safety clamp changed the solver's control.
    pub clamped: bool,
    pub iters: usize,
    pub residual: f64,
    /// Peak `||eps||_2` over the solve's iterations.
    pub eps_norm: f64,
    /// Peak `||eps||_inf` over the solve's iterations.
    pub eps_inf: f64,
    pub zeros_in_u: usize,
    /// The solver diverged and the previous control was held.
    pub divergent: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub arithmetic: Arithmetic,
    pub sigma: f64,
    pub n_p: usize,
    pub n_c: usize,
    pub reference: DVector<f64>,
    /// Columns of the fixed-point kernel, the `dim` of the error bound.
    pub kernel_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub rows: Vec<TraceRow>,
    pub meta: RunMeta,
}

impl SimulationTrace {
    pub fn any_divergent(&self) -> bool {
        self.rows.iter().any(|r| r.divergent)
    }
}

pub fn run_closed_loop(scn: &Scenario) -> Result<SimulationTrace> {
    scn.validate()?;
    let disc = zoh_discretize(&scn.plant)?;
    let mpc = scn.mpc.problem(disc)?;
    let cond = CondensedMpc::new(&mpc)?;
    let solver = Solver::new(&mpc, &cond, &scn.solver)?;
    let p = mpc.plant.n_inputs();

    let mut rows = Vec::with_capacity(scn.steps);
    let mut x = scn.x0.clone();
    let mut warm: Option<SolverState> = None;
    let mut held = DVector::zeros(p);

    for k in 0..scn.steps {
        let (mut u, iters, residual, eps_norm, eps_inf, divergent) =
            match solver.solve(&x, warm.as_ref()) {
                Ok((seq, state)) => {
                    let u = seq.rows(0, p).into_owned();
                    let row = (
                        u,
                        state.iter,
                        state.final_residual(),
                        state.eps_peak(),
                        state.eps_inf_peak(),
                        false,
                    );
                    warm = Some(state.shifted(p));
                    row
                }
                Err(Error::Divergence { iter }) => {
                    log::warn!("solver diverged at step {k} (iteration {iter}); holding last control");
                    warm = None;
                    (held.clone(), iter, f64::NAN, 0.0, 0.0, true)
                }
                Err(e) => return Err(e),
            };
        let mut clamped = false;
        for i in 0..p {
            let c = u[i].clamp(mpc.u_min[i], mpc.u_max[i]);
            if c != u[i] {
                clamped = true;
                u[i] = c;
            }
        }
        let (x_next, y) = plant_step(&mpc.plant, &x, &u)?;
        rows.push(TraceRow {
            step: k,
            t: k as f64 * mpc.plant.h,
            x: x.clone(),
            y,
            zeros_in_u: u.iter().filter(|v| **v == 0.0).count(),
            u: u.clone(),
            clamped,
            iters,
            residual,
            eps_norm,
            eps_inf,
            divergent,
        });
        held = u;
        x = x_next;
    }

    Ok(SimulationTrace {
        rows,
        meta: RunMeta {
            arithmetic: scn.solver.arithmetic,
            sigma: mpc.sigma,
            n_p: mpc.n_p,
            n_c: mpc.n_c,
            reference: mpc.r.clone(),
            kernel_dim: cond.n_u(),
        },
    })
}

/// Threshold on `||y - r||_inf` below which the loop counts as settled.
pub const SETTLE_THRESHOLD: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// RMS of `||y - r||_2` over the final quarter of the run.
    pub rms_err: f64,
    /// First step after which `||y - r||_inf` stays below [`SETTLE_THRESHOLD`].
    pub settle_step: Option<usize>,
    /// Fraction of applied control entries that are exactly zero.
    pub sparsity: f64,
    pub eps_peak: f64,
    /// Final-quarter RMS over the RMS of the quarter before it; above one
    /// means the response is growing.
    pub osc_index: f64,
    pub divergent: bool,
}

fn rms(errors: &[f64]) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

pub fn compute_metrics(trace: &SimulationTrace) -> MetricsReport {
    let n = trace.rows.len();
    let r = &trace.meta.reference;
    let err_2: Vec<f64> = trace.rows.iter().map(|row| (&row.y - r).norm()).collect();
    let err_inf: Vec<f64> = trace.rows.iter().map(|row| (&row.y - r).amax()).collect();

    let window = n.div_ceil(4).max(1).min(n);
    let last_start = n - window;
    let mid_start = last_start.saturating_sub(window);
    let rms_last = rms(&err_2[last_start..]);
    let rms_mid = rms(&err_2[mid_start..last_start]);
    let osc_index = if rms_last == 0.0 {
        0.0
    } else if rms_mid == 0.0 {
        f64::INFINITY
    } else {
        rms_last / rms_mid
    };

    let settle_step = match err_inf.iter().rposition(|e| !(*e < SETTLE_THRESHOLD)) {
        None => Some(0),
        Some(k) if k + 1 < n => Some(k + 1),
        Some(_) => None,
    };

    let entries: usize = trace.rows.iter().map(|row| row.u.len()).sum();
    let zeros: usize = trace.rows.iter().map(|row| row.zeros_in_u).sum();
    MetricsReport {
        rms_err: rms_last,
        settle_step,
        sparsity: if entries == 0 { 1.0 } else { zeros as f64 / entries as f64 },
        eps_peak: trace.rows.iter().map(|row| row.eps_norm).fold(0.0, f64::max),
        osc_index,
        divergent: trace.any_divergent(),
    }
}
