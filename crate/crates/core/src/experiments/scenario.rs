//! Scenario description, built-in presets and the TOML configuration schema.
//!
//! A scenario is resolved in three layers: a preset supplies every field,
//! a configuration file overrides any subset, and command-line flags
//! override the file. All values are `f64` here; the numerical modules are
//! instantiated from them on demand.
//!
//! Configuration schema (every key optional):
//!
//! ```toml
//! preset = "PS1"              # PS1 | PS2 | PS3 | deterministic-fig5
//! seed = 0
//! paths = 1000                # Monte-Carlo ensemble size
//! export_paths = 20           # sample paths written to demand_paths.csv
//! outputs = ["demand_paths", "moments", "controls", "outputs", "costs", "bands"]
//! band_levels = [0.025, 0.5, 0.975]
//!
//! [demand]
//! mode = "stochastic"         # or "deterministic": Y_t = mean(t)
//! kappa = 1.0
//! sigma = 2.0
//! y0 = 1.0
//! jump_intensity = 5.0
//! jump_height = { law = "constant", value = 0.0 }
//! mean = { kind = "sinusoid", offset = 2.0, amplitude = 3.0, frequency = 6.283185307179586 }
//!
//! [grid]
//! speed = 4.0
//! dx = 0.1
//! courant = 1.0
//! horizon = 1.0
//!
//! [updates]
//! interval = 0.125            # omit the table (or set 0) for no updates
//! ```

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::UpdateSchedule;
use crate::costopt::DemandModel;
use crate::demand::{DemandParams, JumpHeightLaw, JumpSpec, MeanFunction};
use crate::error::{Error, Result};
use crate::transport::{validate_cfl, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Artifact {
    DemandPaths,
    Moments,
    Controls,
    Outputs,
    Costs,
    Bands,
}

impl Artifact {
    pub const ALL: [Artifact; 6] = [
        Artifact::DemandPaths,
        Artifact::Moments,
        Artifact::Controls,
        Artifact::Outputs,
        Artifact::Costs,
        Artifact::Bands,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            Artifact::DemandPaths => "demand_paths.csv",
            Artifact::Moments => "moments.csv",
            Artifact::Controls => "controls.csv",
            Artifact::Outputs => "outputs.csv",
            Artifact::Costs => "costs.csv",
            Artifact::Bands => "bands.csv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemandMode {
    Stochastic,
    /// The demand is the mean curve itself, with no noise.
    Deterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeanSpec {
    Constant {
        value: f64,
    },
    Sinusoid {
        offset: f64,
        amplitude: f64,
        frequency: f64,
    },
    Tabulated {
        times: Vec<f64>,
        values: Vec<f64>,
    },
}

impl MeanSpec {
    pub fn build(&self) -> Result<MeanFunction<f64>> {
        match self {
            MeanSpec::Constant { value } => Ok(MeanFunction::Constant(*value)),
            MeanSpec::Sinusoid {
                offset,
                amplitude,
                frequency,
            } => Ok(MeanFunction::Sinusoid {
                offset: *offset,
                amplitude: *amplitude,
                frequency: *frequency,
            }),
            MeanSpec::Tabulated { times, values } => {
                MeanFunction::tabulated(times.clone(), values.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpHeightSpec {
    Constant { value: f64 },
    Normal { mean: f64, std_dev: f64 },
    LogNormal { mu: f64, sigma: f64 },
}

impl JumpHeightSpec {
    fn build(&self) -> JumpHeightLaw<f64> {
        match *self {
            JumpHeightSpec::Constant { value } => JumpHeightLaw::Constant(value),
            JumpHeightSpec::Normal { mean, std_dev } => JumpHeightLaw::Normal { mean, std_dev },
            JumpHeightSpec::LogNormal { mu, sigma } => JumpHeightLaw::LogNormal { mu, sigma },
        }
    }
}

/// Fully resolved experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub mode: DemandMode,
    pub kappa: f64,
    pub sigma: f64,
    pub y0: f64,
    pub mean: MeanSpec,
    pub jump_intensity: f64,
    pub jump_height: JumpHeightSpec,
    /// Transport speed λ.
    pub speed: f64,
    pub dx: f64,
    pub courant: f64,
    pub horizon: f64,
    /// Time between demand updates; `None` disables updates.
    pub update_interval: Option<f64>,
    pub mc_paths: usize,
    pub export_paths: usize,
    pub seed: u64,
    pub band_levels: Vec<f64>,
    pub outputs: Vec<Artifact>,
}

pub const PRESET_NAMES: [&str; 4] = ["PS1", "PS2", "PS3", "deterministic-fig5"];

impl Scenario {
    pub fn preset(name: &str) -> Result<Self> {
        let ps1 = Scenario {
            name: "PS1".into(),
            mode: DemandMode::Stochastic,
            kappa: 1.0,
            sigma: 2.0,
            y0: 1.0,
            mean: MeanSpec::Sinusoid {
                offset: 2.0,
                amplitude: 3.0,
                frequency: 2.0 * PI,
            },
            jump_intensity: 5.0,
            jump_height: JumpHeightSpec::Constant { value: 0.0 },
            speed: 4.0,
            dx: 0.1,
            courant: 1.0,
            horizon: 1.0,
            update_interval: Some(0.125),
            mc_paths: 1000,
            export_paths: 20,
            seed: 0,
            band_levels: vec![0.025, 0.25, 0.5, 0.75, 0.975],
            outputs: Artifact::ALL.to_vec(),
        };
        match name {
            "PS1" => Ok(ps1),
            "PS2" => Ok(Scenario {
                name: "PS2".into(),
                kappa: 3.0,
                ..ps1
            }),
            "PS3" => Ok(Scenario {
                name: "PS3".into(),
                kappa: 3.0,
                jump_height: JumpHeightSpec::Constant { value: 1.0 },
                ..ps1
            }),
            "deterministic-fig5" => Ok(Scenario {
                name: "deterministic-fig5".into(),
                mode: DemandMode::Deterministic,
                sigma: 0.0,
                y0: 2.0,
                mean: MeanSpec::Sinusoid {
                    offset: 2.0,
                    amplitude: 1.0,
                    frequency: 0.5 * PI,
                },
                jump_intensity: 0.0,
                speed: 2.0,
                dx: 0.5,
                horizon: 5.0,
                update_interval: None,
                outputs: vec![
                    Artifact::Moments,
                    Artifact::Controls,
                    Artifact::Outputs,
                    Artifact::Costs,
                ],
                ..ps1
            }),
            other => Err(Error::Config {
                field: "preset".into(),
                message: format!(
                    "unknown preset {other:?}; expected one of {}",
                    PRESET_NAMES.join(", ")
                ),
            }),
        }
    }

    pub fn params(&self) -> Result<DemandParams<f64>> {
        let mean = self.mean.build().map_err(|e| config("demand.mean", e))?;
        let jump = JumpSpec::new(self.jump_intensity, self.jump_height.build())
            .map_err(|e| config("demand.jump_height", e))?;
        DemandParams::new(self.kappa, self.sigma, mean, self.y0, jump)
            .map_err(|e| config("demand", e))
    }

    pub fn model(&self) -> Result<DemandModel<f64>> {
        match self.mode {
            DemandMode::Stochastic => Ok(self.params()?.into()),
            DemandMode::Deterministic => Ok(DemandModel::Deterministic(
                self.mean.build().map_err(|e| config("demand.mean", e))?,
            )),
        }
    }

    pub fn grid(&self) -> Result<Grid<f64>> {
        let grid = Grid::with_courant(self.speed, self.dx, self.courant, self.horizon)
            .map_err(|e| config("grid", e))?;
        validate_cfl(&grid).map_err(|e| config("grid.courant", e))?;
        Ok(grid)
    }

    pub fn schedule(&self, grid: &Grid<f64>) -> Result<Option<UpdateSchedule<f64>>> {
        self.update_interval
            .map(|dt| UpdateSchedule::new(dt, grid).map_err(|e| config("updates.interval", e)))
            .transpose()
    }

    /// Checks every field, naming the first offending one.
    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config {
                    field: field.into(),
                    message: format!("must be finite and > 0, got {v}"),
                })
            }
        };
        positive("demand.kappa", self.kappa)?;
        positive("grid.speed", self.speed)?;
        positive("grid.dx", self.dx)?;
        positive("grid.courant", self.courant)?;
        positive("grid.horizon", self.horizon)?;
        if self.courant > 1.0 {
            return Err(Error::Config {
                field: "grid.courant".into(),
                message: format!("Courant number {} violates the CFL condition", self.courant),
            });
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::Config {
                field: "demand.sigma".into(),
                message: format!("must be >= 0, got {}", self.sigma),
            });
        }
        if !(self.jump_intensity >= 0.0) {
            return Err(Error::Config {
                field: "demand.jump_intensity".into(),
                message: format!("must be >= 0, got {}", self.jump_intensity),
            });
        }
        if self.mode == DemandMode::Stochastic && self.mc_paths < 2 {
            return Err(Error::Config {
                field: "paths".into(),
                message: "need at least two Monte-Carlo paths".into(),
            });
        }
        if let Some(bad) = self.band_levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
            return Err(Error::Config {
                field: "band_levels".into(),
                message: format!("level {bad} outside (0, 1)"),
            });
        }
        let model = self.model()?;
        let grid = self.grid()?;
        if !(self.horizon > 1.0 / self.speed) {
            return Err(Error::Config {
                field: "grid.horizon".into(),
                message: "must exceed the transport delay 1/speed".into(),
            });
        }
        let covers = match &model {
            DemandModel::Stochastic(p) => p.mean().covers(self.horizon),
            DemandModel::Deterministic(f) => f.covers(self.horizon),
        };
        if !covers {
            return Err(Error::Config {
                field: "demand.mean".into(),
                message: "table does not cover the horizon".into(),
            });
        }
        self.schedule(&grid)?;
        Ok(())
    }

    /// Applies the overrides present in `o`.
    pub fn merge(&mut self, o: &ScenarioOverrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.paths {
            self.mc_paths = v;
        }
        if let Some(v) = o.export_paths {
            self.export_paths = v;
        }
        if let Some(v) = &o.outputs {
            self.outputs = v.clone();
        }
        if let Some(v) = &o.band_levels {
            self.band_levels = v.clone();
        }
        if let Some(d) = &o.demand {
            set(&mut self.mode, d.mode);
            set(&mut self.kappa, d.kappa);
            set(&mut self.sigma, d.sigma);
            set(&mut self.y0, d.y0);
            set(&mut self.jump_intensity, d.jump_intensity);
            if let Some(v) = &d.mean {
                self.mean = v.clone();
            }
            if let Some(v) = &d.jump_height {
                self.jump_height = v.clone();
            }
        }
        if let Some(g) = &o.grid {
            set(&mut self.speed, g.speed);
            set(&mut self.dx, g.dx);
            set(&mut self.courant, g.courant);
            set(&mut self.horizon, g.horizon);
        }
        if let Some(u) = &o.updates {
            self.update_interval = u.interval.filter(|&v| v != 0.0);
        }
    }
}

fn set<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn config(field: &str, e: Error) -> Error {
    match e {
        Error::Config { .. } => e,
        Error::Cfl { .. } => Error::Config {
            field: "grid.courant".into(),
            message: e.to_string(),
        },
        other => Error::Config {
            field: field.into(),
            message: other.to_string(),
        },
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandOverrides {
    pub mode: Option<DemandMode>,
    pub kappa: Option<f64>,
    pub sigma: Option<f64>,
    pub y0: Option<f64>,
    pub jump_intensity: Option<f64>,
    pub jump_height: Option<JumpHeightSpec>,
    pub mean: Option<MeanSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridOverrides {
    pub speed: Option<f64>,
    pub dx: Option<f64>,
    pub courant: Option<f64>,
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpdateOverrides {
    pub interval: Option<f64>,
}

/// Contents of a configuration file; also used for command-line overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioOverrides {
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub export_paths: Option<usize>,
    pub outputs: Option<Vec<Artifact>>,
    pub band_levels: Option<Vec<f64>>,
    pub demand: Option<DemandOverrides>,
    pub grid: Option<GridOverrides>,
    pub updates: Option<UpdateOverrides>,
}

impl ScenarioOverrides {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config {
            field: "config".into(),
            message: e.message().to_string(),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            field: "config".into(),
            message: format!("{}: {e}", path.display()),
        })?;
        Self::from_toml(&text)
    }
}

/// Resolves preset < file < flags. The preset named by the flags wins over
/// the one named in the file; PS1 is the fallback.
pub fn resolve(file: Option<&ScenarioOverrides>, flags: &ScenarioOverrides) -> Result<Scenario> {
    let name = flags
        .preset
        .as_deref()
        .or_else(|| file.and_then(|f| f.preset.as_deref()))
        .unwrap_or("PS1");
    let mut scenario = Scenario::preset(name)?;
    if let Some(f) = file {
        scenario.merge(f);
    }
    scenario.merge(flags);
    scenario.validate()?;
    Ok(scenario)
}
