//! Run configuration: one JSON document with a required `model` section and
//! optional per-command sections.

use serde::{Deserialize, Serialize};

use ouqueue::bounds::{FigureConfig, DEFAULT_J_MAX};
use ouqueue::expansion::DEFAULT_MAX_ORDER;
use ouqueue::oracle::{DriftScheme, GridSpec, Modulator, OracleConfig, DEFAULT_NQ};
use ouqueue::simulate::SimConfig;
use ouqueue::ModelParams;

use crate::CliError;

fn u_grid() -> Vec<f64> {
    (0..=9).map(|k| k as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelParams,
    #[serde(default)]
    pub expand: ExpandSection,
    #[serde(default)]
    pub bounds: BoundsSection,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub simulate: SimConfig,
    #[serde(default)]
    pub validate: ValidateSection,
    #[serde(default)]
    pub figures: FigureConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpandSection {
    pub order: usize,
    pub max_order: usize,
    pub u_grid: Vec<f64>,
}

impl Default for ExpandSection {
    fn default() -> Self {
        Self {
            order: 2,
            max_order: DEFAULT_MAX_ORDER,
            u_grid: u_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsSection {
    pub j_max: usize,
    /// Points for the reduced-rate comparison.
    pub u_grid: Vec<f64>,
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self {
            j_max: DEFAULT_J_MAX,
            u_grid: u_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub grid: GridSpec,
    pub n_q: usize,
    pub modulator: Modulator,
    pub scheme: DriftScheme,
    pub u_grid: Vec<f64>,
}

impl Default for OracleSection {
    fn default() -> Self {
        let c = OracleConfig::default();
        Self {
            grid: c.grid,
            n_q: DEFAULT_NQ,
            modulator: c.modulator,
            scheme: c.scheme,
            u_grid: u_grid(),
        }
    }
}

impl OracleSection {
    pub fn solver(&self) -> OracleConfig {
        OracleConfig {
            grid: self.grid,
            n_q: self.n_q,
            modulator: self.modulator,
            scheme: self.scheme,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateSection {
    pub u_grid: Vec<f64>,
    /// Include the simulation column.
    pub simulate: bool,
    /// `C` in the `|oracle - order 1| <= C eps^2 + disc_tol` pass flag.
    pub c_eps2: f64,
    /// Allowance for the oracle's own discretisation error.
    pub disc_tol: f64,
}

impl Default for ValidateSection {
    fn default() -> Self {
        Self {
            u_grid: vec![0.0, 0.3, 0.5, 0.6, 0.9],
            simulate: false,
            c_eps2: 10.0,
            disc_tol: 1e-9,
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let c: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        c.model.validate()?;
        c.oracle.grid.validate()?;
        c.simulate.validate()?;
        if c.expand.order > c.expand.max_order {
            return Err(CliError::Config(format!(
                "expand.order {} exceeds expand.max_order {}",
                c.expand.order, c.expand.max_order
            )));
        }
        let grids = [&c.expand.u_grid, &c.bounds.u_grid, &c.oracle.u_grid, &c.validate.u_grid];
        if grids.iter().any(|g| g.iter().any(|u| !(0.0..=1.0).contains(u))) {
            return Err(CliError::Config("u_grid points must lie in [0, 1]".into()));
        }
        Ok(c)
    }

    /// Parameters of the first bound figure at `eps = 1e-4`.
    pub fn figure_default() -> Self {
        Self {
            model: ModelParams::figure_base(2.0, 1e-4),
            expand: ExpandSection::default(),
            bounds: BoundsSection::default(),
            oracle: OracleSection::default(),
            simulate: SimConfig::default(),
            validate: ValidateSection::default(),
            figures: FigureConfig::default(),
        }
    }
}
