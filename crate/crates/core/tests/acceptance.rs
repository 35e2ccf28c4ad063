//! Acceptance suite: one pass/fail line per criterion, nonzero exit if any fails.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sparse_mpc::cli::{cmd_simulate, run_sweep, sweep_csv};
use sparse_mpc::condense::{build_prediction, lasso_problem, CondensedMpc, NormP};
use sparse_mpc::config::{parse_config, RunConfig};
use sparse_mpc::plant::{expm, plant_step, zoh_discretize, ContinuousPlant, DiscretePlant};
use sparse_mpc::prox::prox_z;
use sparse_mpc::simloop::{compute_metrics, default_scenario, run_closed_loop, study_format, SimulationTrace};
use sparse_mpc::solver::{axpgd_solve, mpc_objective, wlm_admm_solve, Algorithm, Arithmetic, Diagonal, SolverConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-scale..scale))
}

// ---- 1 ---------------------------------------------------------------------

fn grid_argmin(cost: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=40_000 {
        let z = -10.0 + i as f64 * 5e-4;
        let c = cost(z);
        if c < best.0 {
            best = (c, z);
        }
    }
    (best.1, best.0)
}

fn prox_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut worst = 0.0f64;
    let mut failures = 0;
    for norm in [NormP::L1, NormP::L0] {
        for _ in 0..50 {
            let sigma = r.gen_range(0.0..3.0);
            let alpha = r.gen_range(0.2..5.0);
            let c = r.gen_range(-8.0..8.0);
            let z = prox_z(&[alpha * c], &[alpha], sigma, norm, &[], 1).unwrap()[0];
            let cost = |z: f64| sigma * norm.penalty(&[z]) + 0.5 * alpha * (z - c) * (z - c);
            let (zg, fg) = grid_argmin(cost);
            let d = (z - zg).abs();
            worst = worst.max(d);
            // a hard-threshold tie has two minimizers; either is correct
            let tie = norm == NormP::L0 && (cost(z) - fg).abs() <= 1e-6;
            if d > 5e-4 && !tie {
                failures += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        failures == 0 && secs < 5.0,
        format!("100 cases, max |z - z_grid| = {worst:.2e}, {failures} misses, {secs:.2} s"),
    )
}

// ---- 2 ---------------------------------------------------------------------

/// Cyclic coordinate descent on `1/2 ||Phi u - b||^2 + sigma ||u||_1`.
fn coordinate_descent(phi: &DMatrix<f64>, b: &DVector<f64>, sigma: f64) -> DVector<f64> {
    let n = phi.ncols();
    let mut u: DVector<f64> = DVector::zeros(n);
    let mut resid = b.clone();
    for _ in 0..1_000_000 {
        let mut change = 0.0f64;
        for j in 0..n {
            let col = phi.column(j);
            let nrm = col.norm_squared();
            let rho = col.dot(&resid) + nrm * u[j];
            let new = rho.signum() * (rho.abs() - sigma).max(0.0) / nrm;
            let d = new - u[j];
            resid -= col * d;
            u[j] = new;
            change = change.max(d.abs());
        }
        if change < 1e-12 {
            break;
        }
    }
    u
}

fn solver_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let cols = r.gen_range(2..=6);
        let rows = r.gen_range(cols..=12);
        let phi = random_matrix(&mut r, rows, cols);
        let b = random_vector(&mut r, rows, 5.0);
        let mpc = lasso_problem(&phi, &b, 1.5).unwrap();
        let cond = CondensedMpc::new(&mpc).unwrap();
        let x = DVector::zeros(cols);
        // step 1/L, the largest step with guaranteed convergence
        let lip = cond.h.clone().symmetric_eigen().eigenvalues.max();
        let cfg = SolverConfig {
            lambda_u: lip,
            lambda_z: lip,
            max_iters: 1_000_000,
            tol_primal: 1e-14,
            ..SolverConfig::default()
        };
        let (u, _) = axpgd_solve(&mpc, &cond, &x, &cfg).unwrap();
        let oracle = coordinate_descent(&phi, &b, 1.5);
        let gap = mpc_objective(&mpc, &cond, &x, &u) - mpc_objective(&mpc, &cond, &x, &oracle);
        worst = worst.max(gap.abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-6 && secs < 10.0,
        format!("20 instances, max |f - f_cd| = {worst:.2e}, {secs:.2} s"),
    )
}

// ---- 3 ---------------------------------------------------------------------

fn reduction_identity() -> Outcome {
    let mut r = rng(3);
    let s = 0.0002;
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let phi = random_matrix(&mut r, 12, 6);
        let b = random_vector(&mut r, 12, 5.0);
        let mpc = lasso_problem(&phi, &b, 1.5).unwrap();
        let cond = CondensedMpc::new(&mpc).unwrap();
        let x = DVector::zeros(6);
        let base = SolverConfig {
            lambda_u: 1.0 / s,
            lambda_z: 1.0 / s,
            l: Diagonal::Uniform(1.0),
            m_u: Diagonal::Uniform(1.0),
            m_z: Diagonal::Uniform(0.0),
            tol_primal: 0.0,
            constrained: false,
            ..SolverConfig::default()
        };
        for k in 1..=100 {
            let pg = SolverConfig { max_iters: k, algorithm: Algorithm::Axpgd, ..base.clone() };
            let admm = SolverConfig { max_iters: k, algorithm: Algorithm::WlmAdmm, ..base.clone() };
            let (a, _) = axpgd_solve(&mpc, &cond, &x, &pg).unwrap();
            let (w, st) = wlm_admm_solve(&mpc, &cond, &x, &admm, None).unwrap();
            let d = (&a - &w).amax().min((&a - &st.u).amax());
            worst = worst.max(d);
        }
    }
    outcome(
        worst <= 1e-12,
        format!("10 instances x 100 iterations, max iterate gap = {worst:.3e}"),
    )
}

// ---- 4 ---------------------------------------------------------------------

/// Dormand-Prince 5(4) with adaptive steps on `S' = A S + [0 | B]`,
/// `S(0) = [I | 0]`, so that `S(h) = [A_d | B_d]`.
fn dopri_zoh(a: &DMatrix<f64>, b: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let (n, p) = (a.nrows(), b.ncols());
    let mut forcing = DMatrix::zeros(n, n + p);
    forcing.columns_mut(n, p).copy_from(b);
    let f = |s: &DMatrix<f64>| a * s + &forcing;
    let mut s = DMatrix::zeros(n, n + p);
    s.columns_mut(0, n).fill_with_identity();

    const C: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let (rtol, atol) = (1e-13, 1e-15);
    let mut t = 0.0;
    let mut dt = h / 100.0;
    while t < h {
        dt = dt.min(h - t);
        let mut k: Vec<DMatrix<f64>> = vec![f(&s)];
        for row in C.iter() {
            let mut stage = s.clone();
            for (j, c) in row.iter().enumerate().take(k.len()) {
                stage += &k[j] * (dt * c);
            }
            k.push(f(&stage));
        }
        // k[6] is f at the fifth-order solution
        let mut next = s.clone();
        for (j, c) in C[5].iter().enumerate() {
            next += &k[j] * (dt * c);
        }
        let mut err = DMatrix::zeros(n, n + p);
        for (j, e) in E.iter().enumerate() {
            err += &k[j] * (dt * e);
        }
        let scale = next.abs().map(|v| atol + rtol * v);
        let ratio = err.zip_map(&scale, |e, sc| (e / sc).powi(2)).mean().sqrt();
        if ratio <= 1.0 {
            t += dt;
            s = next;
        }
        dt *= (0.9 * ratio.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
    }
    s
}

fn taylor_expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut sum = DMatrix::identity(n, n);
    let mut comp = DMatrix::zeros(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=200 {
        term = &term * a / k as f64;
        let y = &term - &comp;
        let t = &sum + &y;
        comp = (&t - &sum) - y;
        sum = t;
    }
    sum
}

fn discretization_accuracy() -> Outcome {
    let mut r = rng(4);
    let mut worst_zoh = 0.0f64;
    for _ in 0..10 {
        let n = r.gen_range(2..=7);
        let p = r.gen_range(1..=4);
        let m = random_matrix(&mut r, n, n);
        let shift = (0..n).map(|j| m.column(j).abs().sum()).fold(0.0, f64::max) + 0.1;
        let a = m - DMatrix::identity(n, n) * shift;
        let b = random_matrix(&mut r, n, p);
        let h = r.gen_range(0.05..0.5);
        let plant = ContinuousPlant::new(a.clone(), b.clone(), DMatrix::identity(n, n), DMatrix::zeros(n, p), h).unwrap();
        let d = zoh_discretize(&plant).unwrap();
        let oracle = dopri_zoh(&a, &b, h);
        let mut got = DMatrix::zeros(n, n + p);
        got.columns_mut(0, n).copy_from(&d.a_d);
        got.columns_mut(n, p).copy_from(&d.b_d);
        worst_zoh = worst_zoh.max((&got - &oracle).norm() / oracle.norm());
    }
    let mut worst_expm = 0.0f64;
    for _ in 0..10 {
        let m = random_matrix(&mut r, 4, 4);
        let norm = (0..4).map(|j| m.column(j).abs().sum()).fold(0.0, f64::max);
        let a = m * (r.gen_range(0.1..5.0) / norm);
        let oracle = taylor_expm(&a);
        worst_expm = worst_expm.max((expm(&a).unwrap() - &oracle).norm() / oracle.norm());
    }
    outcome(
        worst_zoh <= 1e-8 && worst_expm <= 1e-10,
        format!("zoh vs adaptive RK rel {worst_zoh:.2e}, expm vs series rel {worst_expm:.2e}"),
    )
}

// ---- 5 ---------------------------------------------------------------------

fn prediction_consistency() -> Outcome {
    let mut r = rng(5);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = r.gen_range(1..=7);
        let p = r.gen_range(1..=4);
        let m = r.gen_range(1..=7);
        let n_p = r.gen_range(1..=10);
        let n_c = r.gen_range(1..=n_p);
        let a = random_matrix(&mut r, n, n);
        let rho = (0..n).map(|j| a.column(j).abs().sum()).fold(0.0, f64::max);
        let plant = DiscretePlant {
            a_d: a * (r.gen_range(0.5..1.1) / rho),
            b_d: random_matrix(&mut r, n, p),
            c: random_matrix(&mut r, m, n),
            d: DMatrix::zeros(m, p),
            h: 0.1,
        };
        let (phi, f) = build_prediction(&plant, n_p, n_c).unwrap();
        let x = random_vector(&mut r, n, 1.0);
        let u = random_vector(&mut r, p * n_c, 1.0);
        let y = &phi * &u + &f * &x;
        let mut xs = x.clone();
        for i in 0..n_p {
            let ui = if i < n_c { u.rows(i * p, p).into_owned() } else { DVector::zeros(p) };
            xs = plant_step(&plant, &xs, &ui).unwrap().0;
            let yi = &plant.c * &xs;
            worst = worst.max((y.rows(i * m, m) - yi).amax());
        }
    }
    outcome(worst <= 1e-12, format!("20 systems, max |Y - Y_rec| = {worst:.2e}"))
}

// ---- 6 ---------------------------------------------------------------------

fn final_window_inf(t: &SimulationTrace) -> f64 {
    let n = t.rows.len();
    t.rows[n - n.div_ceil(4)..].iter().map(|r| r.x.amax()).fold(0.0, f64::max)
}

fn precision_study() -> Outcome {
    let start = Instant::now();
    let runs: Vec<(u32, SimulationTrace)> = [28u32, 34, 64]
        .iter()
        .map(|&w| {
            let scn = default_scenario().with_arithmetic(Arithmetic::Fxp(study_format(w).unwrap()));
            (w, run_closed_loop(&scn).unwrap())
        })
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let m: Vec<_> = runs.iter().map(|(_, t)| compute_metrics(t)).collect();
    let inf: Vec<f64> = runs.iter().map(|(_, t)| final_window_inf(t)).collect();
    let (m28, m64) = (&m[0], &m[2]);
    let pass = inf[2] < 1e-2
        && inf[1] < 1e-2
        && m28.rms_err >= 2.0 * m64.rms_err
        && m28.osc_index > 1.0
        && secs < 60.0;
    outcome(
        pass,
        format!(
            "W=64 final |x|inf {:.1e}; W=34 final |x|inf {:.1e}; W=28 rms {:.3e} = {:.0}x W=64, osc {:.2}; {secs:.1} s",
            inf[2],
            inf[1],
            m28.rms_err,
            m28.rms_err / m64.rms_err,
            m28.osc_index,
        ),
    )
}

// ---- 7 ---------------------------------------------------------------------

fn sparsity_property() -> Outcome {
    let fractions: Vec<f64> = [0.0, 0.5, 1.5, 5.0]
        .iter()
        .map(|&s| compute_metrics(&run_closed_loop(&default_scenario().with_sigma(s)).unwrap()).sparsity)
        .collect();
    let monotone = fractions.windows(2).all(|w| w[1] >= w[0]);
    outcome(
        monotone && fractions[3] > fractions[0],
        format!("zero fraction over sigma {{0, 0.5, 1.5, 5}}: {fractions:.4?}"),
    )
}

// ---- 8, 9 ------------------------------------------------------------------

const SUITE_SWEEP: &str = "[sweep]\nexact = true\nword_widths = [28, 34, 64]\nsigmas = [0.0, 0.5, 1.5, 5.0]\n";

/// The sweep suite: the default scenario and a tightly bounded variant,
/// each over double precision and 28/34/64-bit words at four sigmas.
fn sweep_suite() -> Vec<RunConfig> {
    let tight = format!("[mpc]\nu_min = -0.05\nu_max = 0.05\n{SUITE_SWEEP}");
    [SUITE_SWEEP.to_string(), tight]
        .iter()
        .map(|t| parse_config(t, "suite").unwrap().resolve().unwrap())
        .collect()
}

fn constraint_and_error_bounds() -> (Outcome, Outcome) {
    let mut controls = 0usize;
    let mut violations = 0usize;
    let mut clamped = 0usize;
    let mut checked = 0usize;
    let mut over = 0usize;
    let mut worst_ratio = 0.0f64;
    let mut missing = 0usize;
    for cfg in sweep_suite() {
        let (lo, hi) = (&cfg.scenario.mpc.u_min, &cfg.scenario.mpc.u_max);
        for o in run_sweep(&cfg).unwrap() {
            let Some(trace) = &o.trace else {
                missing += 1;
                continue;
            };
            for row in &trace.rows {
                clamped += usize::from(row.clamped);
                for (i, u) in row.u.iter().enumerate() {
                    controls += 1;
                    if !(lo[i] <= *u && *u <= hi[i]) {
                        violations += 1;
                    }
                }
            }
            if let Some(fmt) = o.point.format {
                let bound = (trace.meta.kernel_dim + 1) as f64 * fmt.ulp();
                for row in &trace.rows {
                    checked += 1;
                    worst_ratio = worst_ratio.max(row.eps_inf / bound);
                    if row.eps_inf > bound {
                        over += 1;
                    }
                }
            }
        }
    }
    (
        outcome(
            violations == 0 && missing == 0,
            format!("{controls} applied controls ({clamped} clamped steps), {violations} outside the box, {missing} runs lost"),
        ),
        outcome(
            over == 0 && missing == 0 && checked > 0,
            format!("{checked} fixed-point solves, peak |eps|inf / ((dim+1) 2^-F) = {worst_ratio:.3}"),
        ),
    )
}

// ---- 10 --------------------------------------------------------------------

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let configs = [
        "",
        "[fxp]\nword_width = 28\n",
        "[fxp]\nword_width = 34\n[mpc]\nu_min = -0.05\nu_max = 0.05\nsigma = 0.5\n",
        "[solver]\nalgorithm = \"wlm-admm\"\nlambda_u = 1.0\nlambda_z = 1.0\nmax_iters = 20\nconstrained = true\n[mpc]\nu_min = -0.2\nu_max = 0.2\n[run]\nsteps = 100\n",
    ];
    let mut identical = 0;
    for (i, text) in configs.iter().enumerate() {
        let mut bytes = Vec::new();
        for rep in 0..2 {
            let mut cfg = parse_config(text, "det").unwrap().resolve().unwrap();
            let path = dir.path().join(format!("trace{i}_{rep}.csv"));
            cfg.out = Some(path.clone());
            cmd_simulate(&cfg, &mut Vec::new()).unwrap();
            bytes.push(std::fs::read(&path).unwrap());
        }
        identical += usize::from(bytes[0] == bytes[1] && !bytes[0].is_empty());
    }
    let suite = &sweep_suite()[0];
    let sweeps_equal = sweep_csv(&run_sweep(suite).unwrap()) == sweep_csv(&run_sweep(suite).unwrap());
    outcome(
        identical == configs.len() && sweeps_equal,
        format!("{identical}/{} trace configs byte-identical, sweep summary identical: {sweeps_equal}", configs.len()),
    )
}

fn main() {
    let (safety, eps) = constraint_and_error_bounds();
    let results = [
        ("1 prox oracle equivalence", prox_oracle()),
        ("2 solver oracle equivalence", solver_oracle()),
        ("3 reduction identity", reduction_identity()),
        ("4 discretization accuracy", discretization_accuracy()),
        ("5 prediction consistency", prediction_consistency()),
        ("6 closed-loop precision study", precision_study()),
        ("7 sparsity vs sigma", sparsity_property()),
        ("8 constraint safety", safety),
        ("9 quantization error bound", eps),
        ("10 determinism", determinism()),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("criterion {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
