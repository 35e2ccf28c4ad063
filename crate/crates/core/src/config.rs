//! Run configuration: a sectioned TOML file (`plant`, `mpc`, `solver`, `fxp`,
//! `run`, `sweep`) resolved against the shipped default scenario.
//!
//! Every key is optional. Absent keys take the value of [`default_scenario`];
//! vector-valued defaults that do not fit a custom plant fall back to
//! identity weights, unbounded constraints and zero vectors. Unknown keys
//! are rejected.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::condense::NormP;
use crate::fxp::{FxpFormat, Overflow, Rounding};
use crate::plant::{satellite_plant, ContinuousPlant, SatelliteParams};
use crate::simloop::{default_scenario, MpcSettings, Scenario, DEFAULT_INTEGER_BITS};
use crate::solver::{Algorithm, Arithmetic, Diagonal, QuantizeScope, SolverConfig};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl From<crate::Error> for ConfigError {
    fn from(e: crate::Error) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

type CResult<T> = std::result::Result<T, ConfigError>;

/// A scalar, applied to every entry, or an explicit vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VecSpec {
    Scalar(f64),
    Entries(Vec<f64>),
}

impl VecSpec {
    fn resolve(&self, len: usize, key: &str) -> CResult<DVector<f64>> {
        match self {
            VecSpec::Scalar(v) => Ok(DVector::from_element(len, *v)),
            VecSpec::Entries(e) if e.len() == len => Ok(DVector::from_column_slice(e)),
            VecSpec::Entries(e) => Err(ConfigError::Invalid(format!(
                "{key}: expected {len} entries, got {}",
                e.len()
            ))),
        }
    }
}

/// Output weight: a scalar multiple of I, a diagonal, or a full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightSpec {
    Scalar(f64),
    Diagonal(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantModel {
    #[default]
    Satellite,
    Custom,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub model: Option<PlantModel>,
    pub inertia: Option<[f64; 3]>,
    pub wheel_inertia: Option<f64>,
    pub wheel_time_constant: Option<f64>,
    pub thruster_gain: Option<f64>,
    pub wheel_gain: Option<f64>,
    pub a: Option<Vec<Vec<f64>>>,
    pub b: Option<Vec<Vec<f64>>>,
    pub c: Option<Vec<Vec<f64>>>,
    pub d: Option<Vec<Vec<f64>>>,
    pub h: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcSection {
    pub n_p: Option<usize>,
    pub n_c: Option<usize>,
    pub q: Option<WeightSpec>,
    pub sigma: Option<f64>,
    pub norm: Option<NormP>,
    pub u_min: Option<VecSpec>,
    pub u_max: Option<VecSpec>,
    pub y_min: Option<VecSpec>,
    pub y_max: Option<VecSpec>,
    pub r: Option<VecSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub algorithm: Option<Algorithm>,
    pub lambda_u: Option<f64>,
    pub lambda_z: Option<f64>,
    pub l: Option<Diagonal>,
    pub m_u: Option<Diagonal>,
    pub m_z: Option<Diagonal>,
    pub max_iters: Option<usize>,
    pub tol_primal: Option<f64>,
    pub quantize_scope: Option<QuantizeScope>,
    pub constrained: Option<bool>,
}

/// Fixed-point datapath. Without `word_width` the solver runs in double
/// precision; `frac_width` defaults to `word_width - 16`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FxpSection {
    pub word_width: Option<u32>,
    pub frac_width: Option<u32>,
    pub rounding: Option<Rounding>,
    pub overflow: Option<Overflow>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub x0: Option<VecSpec>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub verbosity: Option<u8>,
}

/// Sweep combinations are `formats x sigmas`. `word_widths` adds formats
/// with the default integer budget; `exact = true` adds a double-precision
/// row (written with word and fraction width 0).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub formats: Option<Vec<[u32; 2]>>,
    pub word_widths: Option<Vec<u32>>,
    pub exact: Option<bool>,
    pub sigmas: Option<Vec<f64>>,
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub plant: PlantSection,
    #[serde(default)]
    pub mpc: MpcSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub fxp: FxpSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// `None` stands for double precision.
    pub formats: Vec<Option<FxpFormat>>,
    /// Empty means the scenario's own sigma.
    pub sigmas: Vec<f64>,
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub out: Option<PathBuf>,
    pub sweep: SweepSpec,
    pub verbosity: u8,
}

/// Command-line overrides; each replaces the file key of the same name.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub word_width: Option<u32>,
    pub frac_width: Option<u32>,
    pub sigma: Option<f64>,
    pub norm: Option<NormP>,
    pub steps: Option<usize>,
    pub jobs: Option<usize>,
}

pub fn load_config(path: &Path) -> CResult<RunConfig> {
    load_config_with(path, &Overrides::default())
}

pub fn load_config_with(path: &Path, overrides: &Overrides) -> CResult<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut file = parse_config(&text, &path.display().to_string())?;
    file.apply(overrides);
    file.resolve()
}

pub fn parse_config(text: &str, origin: &str) -> CResult<ConfigFile> {
    toml::from_str(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|s| line_col(text, s.start))
            .unwrap_or((1, 1));
        ConfigError::Parse {
            path: origin.to_string(),
            line,
            column,
            message: e.message().to_string(),
        }
    })
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, column)
}

fn matrix(rows: &[Vec<f64>], key: &str) -> CResult<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if rows.iter().any(|row| row.len() != c) {
        return Err(ConfigError::Invalid(format!("{key}: rows have different lengths")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl ConfigFile {
    pub fn apply(&mut self, o: &Overrides) {
        if o.out.is_some() {
            self.run.out = o.out.clone();
        }
        if o.word_width.is_some() {
            self.fxp.word_width = o.word_width;
            // a new width invalidates a file fraction width unless both are given
            self.fxp.frac_width = o.frac_width;
        } else if o.frac_width.is_some() {
            self.fxp.frac_width = o.frac_width;
        }
        if o.sigma.is_some() {
            self.mpc.sigma = o.sigma;
        }
        if o.norm.is_some() {
            self.mpc.norm = o.norm;
        }
        if o.steps.is_some() {
            self.run.steps = o.steps;
        }
        if o.jobs.is_some() {
            self.sweep.jobs = o.jobs;
        }
    }

    fn plant(&self) -> CResult<ContinuousPlant> {
        let p = &self.plant;
        let sat_keys = p.inertia.is_some()
            || p.wheel_inertia.is_some()
            || p.wheel_time_constant.is_some()
            || p.thruster_gain.is_some()
            || p.wheel_gain.is_some();
        let mat_keys = p.a.is_some() || p.b.is_some() || p.c.is_some() || p.d.is_some();
        match p.model.unwrap_or(if mat_keys { PlantModel::Custom } else { PlantModel::Satellite }) {
            PlantModel::Satellite => {
                if mat_keys {
                    return Err(ConfigError::Invalid(
                        "plant: a/b/c/d require model = \"custom\"".into(),
                    ));
                }
                let d = SatelliteParams::default();
                let params = SatelliteParams {
                    inertia: p.inertia.unwrap_or(d.inertia),
                    wheel_inertia: p.wheel_inertia.unwrap_or(d.wheel_inertia),
                    wheel_time_constant: p.wheel_time_constant.unwrap_or(d.wheel_time_constant),
                    thruster_gain: p.thruster_gain.unwrap_or(d.thruster_gain),
                    wheel_gain: p.wheel_gain.unwrap_or(d.wheel_gain),
                    h: p.h.unwrap_or(d.h),
                };
                Ok(satellite_plant(&params)?)
            }
            PlantModel::Custom => {
                if sat_keys {
                    return Err(ConfigError::Invalid(
                        "plant: satellite parameters are not used by a custom model".into(),
                    ));
                }
                let (Some(a), Some(b)) = (&p.a, &p.b) else {
                    return Err(ConfigError::Invalid("plant: a custom model needs a and b".into()));
                };
                let a = matrix(a, "plant.a")?;
                let b = matrix(b, "plant.b")?;
                let c = match &p.c {
                    Some(c) => matrix(c, "plant.c")?,
                    None => DMatrix::identity(a.nrows(), a.nrows()),
                };
                let d = match &p.d {
                    Some(d) => matrix(d, "plant.d")?,
                    None => DMatrix::zeros(c.nrows(), b.ncols()),
                };
                let h = p.h.unwrap_or(SatelliteParams::default().h);
                Ok(ContinuousPlant::new(a, b, c, d, h)?)
            }
        }
    }

    fn format(&self, word_width: u32, frac_width: Option<u32>) -> CResult<FxpFormat> {
        let f = match frac_width {
            Some(f) => f,
            None => word_width.checked_sub(DEFAULT_INTEGER_BITS).filter(|f| *f > 0).ok_or_else(|| {
                ConfigError::Invalid(format!(
                    "fxp: word_width {word_width} needs an explicit frac_width"
                ))
            })?,
        };
        Ok(FxpFormat::new(word_width, f)?
            .with_rounding(self.fxp.rounding.unwrap_or_default())
            .with_overflow(self.fxp.overflow.unwrap_or_default()))
    }

    pub fn resolve(&self) -> CResult<RunConfig> {
        let base = default_scenario();
        let plant = self.plant()?;
        let (n, p, m) = (plant.n_states(), plant.n_inputs(), plant.n_outputs());
        let fits = n == base.plant.n_states() && p == base.plant.n_inputs() && m == base.plant.n_outputs();

        let vec_or = |spec: &Option<VecSpec>, len: usize, key: &str, default: DVector<f64>| match spec {
            Some(s) => s.resolve(len, key),
            None => Ok(default),
        };
        let pick = |d: &DVector<f64>, generic: f64, len: usize| {
            if fits {
                d.clone()
            } else {
                DVector::from_element(len, generic)
            }
        };

        let mc = &self.mpc;
        let q_step = match &mc.q {
            None if fits => base.mpc.q_step.clone(),
            None => DMatrix::identity(m, m),
            Some(WeightSpec::Scalar(v)) => DMatrix::identity(m, m) * *v,
            Some(WeightSpec::Diagonal(d)) => {
                DMatrix::from_diagonal(&VecSpec::Entries(d.clone()).resolve(m, "mpc.q")?)
            }
            Some(WeightSpec::Matrix(rows)) => matrix(rows, "mpc.q")?,
        };
        let mpc = MpcSettings {
            n_p: mc.n_p.unwrap_or(base.mpc.n_p),
            n_c: mc.n_c.unwrap_or(base.mpc.n_c),
            q_step,
            sigma: mc.sigma.unwrap_or(base.mpc.sigma),
            norm_p: mc.norm.unwrap_or(base.mpc.norm_p),
            u_min: vec_or(&mc.u_min, p, "mpc.u_min", pick(&base.mpc.u_min, f64::NEG_INFINITY, p))?,
            u_max: vec_or(&mc.u_max, p, "mpc.u_max", pick(&base.mpc.u_max, f64::INFINITY, p))?,
            y_min: vec_or(&mc.y_min, m, "mpc.y_min", pick(&base.mpc.y_min, f64::NEG_INFINITY, m))?,
            y_max: vec_or(&mc.y_max, m, "mpc.y_max", pick(&base.mpc.y_max, f64::INFINITY, m))?,
            r: vec_or(&mc.r, m, "mpc.r", pick(&base.mpc.r, 0.0, m))?,
        };

        let sc = &self.solver;
        let bs = &base.solver;
        let arithmetic = match self.fxp.word_width {
            Some(w) => Arithmetic::Fxp(self.format(w, self.fxp.frac_width)?),
            None if self.fxp.frac_width.is_some() => {
                return Err(ConfigError::Invalid("fxp: frac_width given without word_width".into()))
            }
            None => Arithmetic::Exact,
        };
        let solver = SolverConfig {
            algorithm: sc.algorithm.unwrap_or(bs.algorithm),
            lambda_u: sc.lambda_u.unwrap_or(bs.lambda_u),
            lambda_z: sc.lambda_z.unwrap_or(bs.lambda_z),
            l: sc.l.clone().unwrap_or_else(|| bs.l.clone()),
            m_u: sc.m_u.clone().unwrap_or_else(|| bs.m_u.clone()),
            m_z: sc.m_z.clone().unwrap_or_else(|| bs.m_z.clone()),
            max_iters: sc.max_iters.unwrap_or(bs.max_iters),
            tol_primal: sc.tol_primal.unwrap_or(bs.tol_primal),
            arithmetic,
            quantize_scope: sc.quantize_scope.unwrap_or(bs.quantize_scope),
            constrained: sc.constrained.unwrap_or(bs.constrained),
        };

        let rc = &self.run;
        let scenario = Scenario {
            x0: vec_or(&rc.x0, n, "run.x0", pick(&base.x0, 0.0, n))?,
            steps: rc.steps.unwrap_or(base.steps),
            seed: rc.seed.unwrap_or(base.seed),
            plant,
            mpc,
            solver,
        };
        scenario.validate()?;
        // horizon, weight and bound checks need the discretized plant
        scenario.mpc.problem(crate::plant::zoh_discretize(&scenario.plant)?)?;

        let sw = &self.sweep;
        let mut formats = Vec::new();
        if sw.exact.unwrap_or(false) {
            formats.push(None);
        }
        for [w, f] in sw.formats.iter().flatten() {
            formats.push(Some(self.format(*w, Some(*f))?));
        }
        for w in sw.word_widths.iter().flatten() {
            formats.push(Some(self.format(*w, None)?));
        }
        let sigmas = sw.sigmas.clone().unwrap_or_default();
        if let Some(bad) = sigmas.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(ConfigError::Invalid(format!("sweep.sigmas: {bad} is not a nonnegative number")));
        }
        if sw.jobs == Some(0) {
            return Err(ConfigError::Invalid("sweep.jobs must be at least 1".into()));
        }

        Ok(RunConfig {
            scenario,
            out: rc.out.clone(),
            sweep: SweepSpec {
                formats,
                sigmas,
                jobs: sw.jobs,
            },
            verbosity: rc.verbosity.unwrap_or(0),
        })
    }
}

impl RunConfig {
    /// Fully explicit file form; parsing it back yields an equal config.
    pub fn to_file(&self) -> ConfigFile {
        let s = &self.scenario;
        let vec = |v: &DVector<f64>| Some(VecSpec::Entries(v.iter().copied().collect()));
        let (word_width, frac_width, rounding, overflow) = match s.solver.arithmetic {
            Arithmetic::Exact => (None, None, None, None),
            Arithmetic::Fxp(f) => (
                Some(f.word_width()),
                Some(f.frac_width()),
                Some(f.rounding()),
                Some(f.overflow()),
            ),
        };
        let sweep_formats: Vec<[u32; 2]> = self
            .sweep
            .formats
            .iter()
            .flatten()
            .map(|f| [f.word_width(), f.frac_width()])
            .collect();
        ConfigFile {
            plant: PlantSection {
                model: Some(PlantModel::Custom),
                a: Some(rows_of(&s.plant.a)),
                b: Some(rows_of(&s.plant.b)),
                c: Some(rows_of(&s.plant.c)),
                d: Some(rows_of(&s.plant.d)),
                h: Some(s.plant.h),
                ..Default::default()
            },
            mpc: MpcSection {
                n_p: Some(s.mpc.n_p),
                n_c: Some(s.mpc.n_c),
                q: Some(WeightSpec::Matrix(rows_of(&s.mpc.q_step))),
                sigma: Some(s.mpc.sigma),
                norm: Some(s.mpc.norm_p),
                u_min: vec(&s.mpc.u_min),
                u_max: vec(&s.mpc.u_max),
                y_min: vec(&s.mpc.y_min),
                y_max: vec(&s.mpc.y_max),
                r: vec(&s.mpc.r),
            },
            solver: SolverSection {
                algorithm: Some(s.solver.algorithm),
                lambda_u: Some(s.solver.lambda_u),
                lambda_z: Some(s.solver.lambda_z),
                l: Some(s.solver.l.clone()),
                m_u: Some(s.solver.m_u.clone()),
                m_z: Some(s.solver.m_z.clone()),
                max_iters: Some(s.solver.max_iters),
                tol_primal: Some(s.solver.tol_primal),
                quantize_scope: Some(s.solver.quantize_scope),
                constrained: Some(s.solver.constrained),
            },
            fxp: FxpSection {
                word_width,
                frac_width,
                rounding,
                overflow,
            },
            run: RunSection {
                x0: vec(&s.x0),
                steps: Some(s.steps),
                seed: Some(s.seed),
                out: self.out.clone(),
                verbosity: Some(self.verbosity),
            },
            sweep: SweepSection {
                formats: (!sweep_formats.is_empty()).then_some(sweep_formats),
                word_widths: None,
                exact: Some(self.sweep.formats.contains(&None)),
                sigmas: (!self.sweep.sigmas.is_empty()).then(|| self.sweep.sigmas.clone()),
                jobs: self.sweep.jobs,
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_file()).expect("configuration serializes")
    }
}
