//! Run configuration files and their resolution into library inputs.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::constants::{
    compute_pl_constants, compute_pl_constants_connected, compute_pl_constants_modulus, ConnectedInputs, PLConstants,
};
use crate::costs::{build_cost_matrix, lipschitz_constant, CostKind, CostSpec, ModulusSpec};
use crate::error::{Error, Result};
use crate::io::{read_cost, read_json, read_measure, read_potentials};
use crate::measures::{empirical_geometry, BallMass, DiscreteMeasure, GeometryConstants};
use crate::problem::{DualPotentials, ProblemInstance};
use crate::solvers::{Algorithm, SolverConfig, DEFAULT_MAX_ITERS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum VariantArg {
    Lipschitz,
    Modulus,
    Connected,
}

/// Geometry overrides. Omitted fields are inferred from the measures.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryFile {
    pub lambda_p: Option<f64>,
    pub big_lambda_p: Option<f64>,
    pub delta_p: Option<f64>,
    pub lipschitz_l: Option<f64>,
    pub diam_omega: Option<f64>,
    pub diam_omega_prime: Option<f64>,
    /// Constant lower bound on `Q(B_r(y))`.
    pub ball_mass: Option<f64>,
    /// Dimension, needed only when no measures are given.
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectedFile {
    pub c_omega: Option<f64>,
    pub delta_p_tilde: Option<f64>,
    pub delta_omega: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ModulusRef {
    Path(String),
    Inline(ModulusSpec),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSolve {
    #[serde(default = "default_ref_algorithm")]
    pub algorithm: String,
    #[serde(default = "default_ref_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
}

fn default_ref_algorithm() -> String {
    "ca".into()
}

fn default_ref_tol() -> f64 {
    1e-12
}

fn default_max_iters() -> usize {
    DEFAULT_MAX_ITERS
}

impl Default for ReferenceSolve {
    fn default() -> Self {
        Self {
            algorithm: default_ref_algorithm(),
            grad_tol: default_ref_tol(),
            max_iters: default_max_iters(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checks {
    #[serde(default = "yes")]
    pub pl: bool,
    #[serde(default = "yes")]
    pub error_bound: bool,
    #[serde(default = "yes")]
    pub rate_bound: bool,
    #[serde(default = "yes")]
    pub iterate_bounds: bool,
    #[serde(default = "yes")]
    pub coercivity: bool,
}

fn yes() -> bool {
    true
}

impl Default for Checks {
    fn default() -> Self {
        Self {
            pl: true,
            error_bound: true,
            rate_bound: true,
            iterate_bounds: true,
            coercivity: true,
        }
    }
}

/// Contents of a `--config` file. Relative paths are resolved against the
/// directory of the file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub p: Option<String>,
    pub q: Option<String>,
    pub cost: Option<String>,
    pub eps: Option<f64>,
    pub algorithm: Option<String>,
    pub algorithms: Option<Vec<String>>,
    pub step_size: Option<f64>,
    pub max_iters: Option<usize>,
    pub grad_tol: Option<f64>,
    /// Initial potentials; zeros when omitted.
    pub init: Option<String>,
    /// Reference potentials; solved for when omitted.
    pub reference: Option<String>,
    #[serde(default)]
    pub reference_solve: ReferenceSolve,
    #[serde(default)]
    pub geometry: GeometryFile,
    pub variant: Option<VariantArg>,
    pub modulus: Option<ModulusRef>,
    pub big_r: Option<f64>,
    pub connected: Option<ConnectedFile>,
    #[serde(default)]
    pub checks: Checks,
    pub r_samples: Option<Vec<f64>>,
    pub out_dir: Option<String>,
    /// Directory for cached oracle solutions.
    pub oracle_cache: Option<String>,
    #[serde(default)]
    pub unsafe_step: bool,
}

/// A configuration merged with command-line overrides.
#[derive(Debug, Clone)]
pub struct Settings {
    pub config: RunConfig,
    pub base: PathBuf,
    pub out_dir: PathBuf,
    pub eps: Option<f64>,
    pub variant: VariantArg,
    pub unsafe_step: bool,
    pub algorithms: Option<Vec<String>>,
}

impl Settings {
    pub fn load(
        config_path: Option<&Path>,
        eps: Option<f64>,
        out_dir: Option<&Path>,
        unsafe_step: bool,
        variant: Option<VariantArg>,
        algorithms: Vec<String>,
    ) -> Result<Self> {
        let (config, base) = match config_path {
            Some(p) => (
                read_json::<RunConfig>(p)?,
                p.parent().map(Path::to_path_buf).unwrap_or_default(),
            ),
            None => (RunConfig::default(), PathBuf::new()),
        };
        if let Some(e) = eps {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::InvalidEps(e));
            }
        }
        let out_dir = match (out_dir, &config.out_dir) {
            (Some(d), _) => d.to_path_buf(),
            (None, Some(d)) => base.join(d),
            (None, None) => PathBuf::from("qot-out"),
        };
        Ok(Self {
            eps: eps.or(config.eps),
            variant: variant.or(config.variant).unwrap_or(VariantArg::Lipschitz),
            unsafe_step: unsafe_step || config.unsafe_step,
            algorithms: (!algorithms.is_empty()).then_some(algorithms),
            base,
            out_dir,
            config,
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.base.join(rel)
    }

    fn required(&self, field: Option<&String>, name: &str) -> Result<PathBuf> {
        field
            .map(|s| self.path(s))
            .ok_or_else(|| Error::parse(self.base.join("<config>"), format!("missing \"{name}\"")))
    }

    pub fn eps(&self) -> Result<f64> {
        let e = self
            .eps
            .ok_or_else(|| Error::parse(self.base.join("<config>"), "eps is required (config or --eps)"))?;
        if !(e > 0.0 && e.is_finite()) {
            return Err(Error::InvalidEps(e));
        }
        Ok(e)
    }

    pub fn has_measures(&self) -> bool {
        self.config.p.is_some() && self.config.q.is_some()
    }

    pub fn load_measures(&self) -> Result<(DiscreteMeasure, DiscreteMeasure, CostSpec)> {
        let p = read_measure(&self.required(self.config.p.as_ref(), "p")?)?;
        let q = read_measure(&self.required(self.config.q.as_ref(), "q")?)?;
        let cost = read_cost(&self.required(self.config.cost.as_ref(), "cost")?)?;
        Ok((p, q, cost))
    }

    /// The instance, with geometry attached when it can be resolved.
    pub fn instance(&self) -> Result<ProblemInstance> {
        let (p, q, cost) = self.load_measures()?;
        let c = build_cost_matrix(&cost, &p, &q)?;
        let geom = self.geometry_from(&p, &q, &cost).ok();
        let inst = ProblemInstance::new(p, q, c, self.eps()?)?;
        match geom {
            Some(g) => inst.with_geometry(g),
            None => Ok(inst),
        }
    }

    fn geometry_from(&self, p: &DiscreteMeasure, q: &DiscreteMeasure, cost: &CostSpec) -> Result<GeometryConstants> {
        let g = &self.config.geometry;
        let (l, l_inferred) = match g.lipschitz_l {
            Some(l) => (l, false),
            None => {
                let lc = lipschitz_constant(cost, p, q)?;
                let exact = cost.lipschitz_l.is_some() || matches!(cost.kind, CostKind::Euclidean | CostKind::PNorm(_));
                (lc.value, !exact || lc.degenerate)
            }
        };
        let bounds = match (g.lambda_p, g.big_lambda_p) {
            (Some(a), Some(b)) => Some((a, b)),
            (None, None) => None,
            _ => {
                return Err(Error::InvalidGeometry(
                    "lambda_p and big_lambda_p must be given together".into(),
                ))
            }
        };
        let mut geom = empirical_geometry(p, q, bounds, g.delta_p, l)?;
        geom.empirical |= l_inferred;
        if let Some(d) = g.diam_omega {
            geom.diam_omega = d;
        }
        if let Some(d) = g.diam_omega_prime {
            geom.diam_omega_prime = d;
        }
        if let Some(b) = g.ball_mass {
            geom.ball_mass = BallMass::Constant(b);
        }
        geom.validate()?;
        Ok(geom)
    }

    /// Geometry from the measures when given, otherwise entirely from the
    /// `geometry` section.
    pub fn geometry(&self) -> Result<(GeometryConstants, usize)> {
        if self.has_measures() {
            let (p, q, cost) = self.load_measures()?;
            let d = p.dim();
            return Ok((self.geometry_from(&p, &q, &cost)?, d));
        }
        let g = &self.config.geometry;
        let missing = || Error::MissingGeometry;
        let geom = GeometryConstants {
            lambda_p: g.lambda_p.ok_or_else(missing)?,
            big_lambda_p: g.big_lambda_p.ok_or_else(missing)?,
            delta_p: g.delta_p.ok_or_else(missing)?,
            diam_omega: g.diam_omega.ok_or_else(missing)?,
            diam_omega_prime: g.diam_omega_prime.ok_or_else(missing)?,
            lipschitz_l: g.lipschitz_l.ok_or_else(missing)?,
            ball_mass: BallMass::Constant(g.ball_mass.ok_or_else(missing)?),
            empirical: false,
        };
        geom.validate()?;
        Ok((geom, g.dim.ok_or_else(missing)?))
    }

    pub fn constants(&self) -> Result<PLConstants> {
        let (geom, d) = self.geometry()?;
        let eps = self.eps()?;
        match self.variant {
            VariantArg::Lipschitz => compute_pl_constants(Some(&geom), eps, d),
            VariantArg::Modulus => {
                let spec = match &self.config.modulus {
                    Some(ModulusRef::Inline(s)) => s.clone(),
                    Some(ModulusRef::Path(p)) => read_json(&self.path(p))?,
                    None => {
                        return Err(Error::InvalidModulus(
                            "the modulus variant needs a \"modulus\" entry".into(),
                        ))
                    }
                };
                compute_pl_constants_modulus(Some(&geom), &spec.build()?, eps, d, self.config.big_r)
            }
            VariantArg::Connected => {
                let c = self.config.connected.as_ref();
                let c_omega = c.and_then(|c| c.c_omega).ok_or_else(|| {
                    Error::InvalidGeometry("the connected variant needs \"connected\": {\"c_omega\": ...}".into())
                })?;
                let tilde = ConnectedInputs {
                    delta_p_tilde: c.and_then(|c| c.delta_p_tilde),
                    delta_omega: c.and_then(|c| c.delta_omega),
                    c_omega,
                };
                compute_pl_constants_connected(&tilde, Some(&geom), eps, d)
            }
        }
    }

    pub fn algorithm_list(&self) -> Result<Vec<Algorithm>> {
        let names = match (&self.algorithms, &self.config.algorithms, &self.config.algorithm) {
            (Some(a), _, _) | (None, Some(a), _) => a.clone(),
            (None, None, Some(a)) => vec![a.clone()],
            (None, None, None) => Algorithm::ALL.iter().map(|a| a.name().to_string()).collect(),
        };
        names.iter().map(|n| parse_algorithm(n)).collect()
    }

    /// `--algorithm` if given once, else the config's `algorithm`.
    pub fn single_algorithm(&self) -> Result<Algorithm> {
        let name = match (&self.algorithms, &self.config.algorithm, &self.config.algorithms) {
            (Some(a), _, _) if a.len() == 1 => &a[0],
            (None, Some(a), _) => a,
            (None, None, Some(a)) if a.len() == 1 => &a[0],
            _ => {
                return Err(Error::AlgorithmMismatch(
                    "exactly one algorithm is needed (config \"algorithm\" or --algorithm)".into(),
                ))
            }
        };
        parse_algorithm(name)
    }

    pub fn solver_config(&self, algorithm: Algorithm) -> SolverConfig {
        let mut cfg = SolverConfig::new(algorithm);
        cfg.step_size = self.config.step_size;
        cfg.max_iters = self.config.max_iters.unwrap_or(DEFAULT_MAX_ITERS);
        cfg.grad_tol = self.config.grad_tol;
        cfg.unsafe_step = self.unsafe_step;
        cfg
    }

    pub fn init(&self, inst: &ProblemInstance) -> Result<DualPotentials> {
        match &self.config.init {
            Some(p) => {
                let pot = read_potentials(&self.path(p))?;
                pot.check_dims(inst)?;
                Ok(pot)
            }
            None => Ok(DualPotentials::zeros_for(inst)),
        }
    }

    pub fn reference_file(&self, inst: &ProblemInstance) -> Result<Option<DualPotentials>> {
        match &self.config.reference {
            Some(p) => {
                let pot = read_potentials(&self.path(p))?;
                pot.check_dims(inst)?;
                Ok(Some(pot))
            }
            None => Ok(None),
        }
    }

    pub fn oracle_cache(&self) -> Option<PathBuf> {
        self.config.oracle_cache.as_ref().map(|d| self.path(d))
    }
}

pub fn parse_algorithm(name: &str) -> Result<Algorithm> {
    Algorithm::parse(name).ok_or_else(|| Error::AlgorithmMismatch(format!("unknown algorithm \"{name}\"")))
}
