//! Scenario configuration: one human-editable TOML file per experiment.
//!
//! The schema is versioned and strict (unknown keys are rejected), and all
//! module-level invariants are enforced at load, so a scenario that parses
//! is runnable.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dist::DistributionSpec;
use crate::equil::report::McConfig;
use crate::error::{Error, Result};
use crate::filter::lsmc::{solve_picard_lsmc, LsmcConfig};
use crate::filter::pde::{solve_markov_pde, PdeMesh};
use crate::filter::{solve_deterministic, BackendSolution, SolverBackend};
use crate::grid::{make_grid, MarketParams, Refinement, TimeGrid};
use crate::rfield::{RField, DEFAULT_QUAD_ORDER};
use crate::vol::VolModelSpec;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    pub horizon: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub refinement: Refinement,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub backend: SolverBackend,
    pub quad_order: usize,
    pub pde: PdeMesh,
    pub lsmc: LsmcConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            backend: SolverBackend::Auto,
            quad_order: DEFAULT_QUAD_ORDER,
            pde: PdeMesh::default(),
            lsmc: LsmcConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Output directory; the CLI --out flag overrides it.
    pub directory: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    pub market: MarketConfig,
    pub dist: DistributionSpec,
    pub vol: VolModelSpec,
    pub grid: GridConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// A validated scenario with its derived runtime pieces.
#[derive(Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub market: MarketParams,
    pub grid: TimeGrid,
    pub rfield: RField,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ScenarioConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("config parse error: {e}")))?;
        Self::from_config(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn from_config(config: ScenarioConfig) -> Result<Self> {
        if config.version != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "unsupported config version {} (expected {SCHEMA_VERSION})",
                config.version
            )));
        }
        let market = MarketParams::new(config.market.horizon, config.market.rho)
            .map_err(|e| Error::config(e.to_string()))?;
        config.dist.validate().map_err(|e| Error::config(e.to_string()))?;
        config.vol.validate().map_err(|e| Error::config(e.to_string()))?;
        let grid = make_grid(config.grid.n, config.market.horizon, config.grid.refinement)
            .map_err(|e| Error::config(e.to_string()))?;
        if config.mc.n_paths == 0 {
            return Err(Error::config("mc.n_paths must be positive"));
        }
        let rfield = RField::new(config.dist.clone(), config.solver.quad_order)
            .map_err(|e| Error::config(e.to_string()))?;
        Ok(Scenario { config, market, grid, rfield })
    }

    /// Resolve and solve the filtering backend.
    pub fn solve_backend(&self) -> Result<BackendSolution> {
        let choice = match self.config.solver.backend {
            SolverBackend::Auto => match &self.config.vol {
                VolModelSpec::Deterministic { .. } => SolverBackend::ClosedForm,
                VolModelSpec::CirClamped { .. } => SolverBackend::MarkovPde,
                _ => SolverBackend::PicardLsmc,
            },
            other => other,
        };
        match choice {
            SolverBackend::ClosedForm => {
                let sol = solve_deterministic(&self.config.vol, &self.market, &self.grid)?;
                Ok(BackendSolution::ClosedForm(sol))
            }
            SolverBackend::MarkovPde => {
                let field = solve_markov_pde(
                    &self.config.vol,
                    &self.market,
                    self.market.horizon,
                    self.config.solver.pde,
                )?;
                if !field.diagnostics.bounds_ok {
                    return Err(Error::solver(format!(
                        "PDE mesh too coarse: square-root envelope violated by {:.2}%",
                        100.0 * field.diagnostics.bound_violation_rel
                    )));
                }
                Ok(BackendSolution::MarkovPde(field))
            }
            SolverBackend::PicardLsmc => {
                let sol = solve_picard_lsmc(
                    &self.config.vol,
                    &self.market,
                    &self.grid,
                    &self.config.solver.lsmc,
                )?;
                Ok(BackendSolution::PicardLsmc(sol))
            }
            SolverBackend::Auto => unreachable!(),
        }
    }
}
