//! Linear plant models, zero-order-hold discretization and one-step simulation.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// Continuous-time model `x' = A x + B u`, `y = C x + D u`, sampled every `h` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousPlant {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub h: f64,
}

/// Sampled model `x[k+1] = A_d x[k] + B_d u[k]`, `y[k] = C x[k] + D u[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePlant {
    pub a_d: DMatrix<f64>,
    pub b_d: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub h: f64,
}

fn check_finite(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("matrix {name} has non-finite entries")))
    }
}

impl ContinuousPlant {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        h: f64,
    ) -> Result<Self> {
        let plant = Self { a, b, c, d, h };
        plant.validate()?;
        Ok(plant)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        if n == 0 || self.a.ncols() != n {
            return Err(Error::NotSquare {
                rows: self.a.nrows(),
                cols: self.a.ncols(),
            });
        }
        let p = self.b.ncols();
        let m = self.c.nrows();
        if p == 0 || m == 0 {
            return Err(Error::InvalidParameter(
                "plant needs at least one input and one output".into(),
            ));
        }
        check_dim("B rows", n, self.b.nrows())?;
        check_dim("C columns", n, self.c.ncols())?;
        check_dim("D rows", m, self.d.nrows())?;
        check_dim("D columns", p, self.d.ncols())?;
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sampling period must be positive, got {}",
                self.h
            )));
        }
        for (name, mat) in [("A", &self.a), ("B", &self.b), ("C", &self.c), ("D", &self.d)] {
            check_finite(name, mat)?;
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }
}

impl DiscretePlant {
    pub fn n_states(&self) -> usize {
        self.a_d.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b_d.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }
}

// Padé numerator coefficients and the 1-norm bounds below which each order
// meets double precision (Higham, "The scaling and squaring method for the
// matrix exponential revisited", 2005).
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068),
];
const THETA13: f64 = 5.371920351148152;

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Odd/even parts `(U, V)` of a low-order Padé approximant.
fn pade_low(a: &DMatrix<f64>, coeffs: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let a2 = a * a;
    let mut odd = DMatrix::identity(n, n) * coeffs[1];
    let mut even = DMatrix::identity(n, n) * coeffs[0];
    let mut power = DMatrix::identity(n, n);
    for k in 1..coeffs.len() / 2 {
        power = &power * &a2;
        even += &power * coeffs[2 * k];
        odd += &power * coeffs[2 * k + 1];
    }
    (a * odd, even)
}

fn pade13(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let b = &PADE13;
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &id * b[1];
    let u = a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &id * b[0];
    (u, v)
}

/// Matrix exponential by scaling and squaring with a diagonal Padé kernel.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    check_finite("A", a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }

    let norm = norm1(a);
    let mut squarings = 0u32;
    let (u, v) = if let Some(&(order, _)) = THETA.iter().find(|(_, theta)| norm <= *theta) {
        let coeffs: &[f64] = match order {
            3 => &PADE3,
            5 => &PADE5,
            7 => &PADE7,
            _ => &PADE9,
        };
        pade_low(a, coeffs)
    } else {
        squarings = (norm / THETA13).log2().ceil().max(0.0) as u32;
        let scaled = a * 0.5f64.powi(squarings as i32);
        pade13(&scaled)
    };

    let numer = &v + &u;
    let denom = &v - &u;
    let mut r = denom
        .lu()
        .solve(&numer)
        .ok_or_else(|| Error::Singular("Padé denominator".into()))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

/// Zero-order-hold discretization from one exponential of the augmented
/// block matrix `[[A, B], [0, 0]] h`.
pub fn zoh_discretize(plant: &ContinuousPlant) -> Result<DiscretePlant> {
    plant.validate()?;
    let n = plant.n_states();
    let p = plant.n_inputs();
    let mut aug = DMatrix::zeros(n + p, n + p);
    aug.view_mut((0, 0), (n, n)).copy_from(&(&plant.a * plant.h));
    aug.view_mut((0, n), (n, p)).copy_from(&(&plant.b * plant.h));
    let e = expm(&aug)?;
    Ok(DiscretePlant {
        a_d: e.view((0, 0), (n, n)).into_owned(),
        b_d: e.view((0, n), (n, p)).into_owned(),
        c: plant.c.clone(),
        d: plant.d.clone(),
        h: plant.h,
    })
}

/// Advances the true (double-precision) plant one sample and returns
/// `(x[k+1], y[k])`.
pub fn plant_step(
    plant: &DiscretePlant,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_dim("plant state", plant.n_states(), x.len())?;
    check_dim("plant input", plant.n_inputs(), u.len())?;
    let x_next = &plant.a_d * x + &plant.b_d * u;
    let y = &plant.c * x + &plant.d * u;
    Ok((x_next, y))
}

/// Physical parameters of the stand-in relay-satellite attitude model.
///
/// These are illustrative values chosen for a well-conditioned demonstration,
/// not a model of any particular spacecraft.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatelliteParams {
    /// Principal body inertias about roll, pitch, yaw [kg m^2].
    pub inertia: [f64; 3],
    /// Reaction-wheel inertia about its spin axis (aligned with yaw) [kg m^2].
    pub wheel_inertia: f64,
    /// Wheel-speed time constant from bearing friction and back-EMF [s].
    pub wheel_time_constant: f64,
    /// Thruster torque per unit input voltage [N m / V].
    pub thruster_gain: f64,
    /// Wheel motor torque per unit input voltage [N m / V].
    pub wheel_gain: f64,
    /// Sampling period [s].
    pub h: f64,
}

impl Default for SatelliteParams {
    fn default() -> Self {
        Self {
            inertia: [0.8, 1.0, 0.6],
            wheel_inertia: 0.02,
            wheel_time_constant: 5.0,
            thruster_gain: 1.0,
            wheel_gain: 0.2,
            h: 0.1,
        }
    }
}

/// Linearized small-angle attitude model.
///
/// States: roll, pitch, yaw [rad], body rates w1, w2, w3 [rad/s] and wheel
/// speed ww [rad/s]. Inputs: three thruster voltages and the wheel voltage.
/// All states are measured (`C = I`, `D = 0`).
pub fn satellite_plant(params: &SatelliteParams) -> Result<ContinuousPlant> {
    let [j1, j2, j3] = params.inertia;
    let jw = params.wheel_inertia;
    let tw = params.wheel_time_constant;
    let (kt, kw) = (params.thruster_gain, params.wheel_gain);

    let mut a = DMatrix::zeros(7, 7);
    for i in 0..3 {
        a[(i, i + 3)] = 1.0;
    }
    // friction torque on the wheel reacts on the body yaw axis
    a[(5, 6)] = jw / tw / j3;
    a[(6, 6)] = -1.0 / tw;

    let mut b = DMatrix::zeros(7, 4);
    b[(3, 0)] = kt / j1;
    b[(4, 1)] = kt / j2;
    b[(5, 2)] = kt / j3;
    b[(5, 3)] = -kw / j3;
    b[(6, 3)] = kw / jw;

    ContinuousPlant::new(a, b, DMatrix::identity(7, 7), DMatrix::zeros(7, 4), params.h)
}

pub fn default_satellite_plant() -> ContinuousPlant {
    satellite_plant(&SatelliteParams::default()).expect("default satellite parameters are valid")
}
