//! Run configuration: scenario sources, grid and tolerance overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use qawv::classical::{ClassicalScenario, GridSpec};
use qawv::hilbert::{CMatrix, Observable, PostSelectionBasis, StateVector, C64};
use qawv::random;
use qawv::spin::{PriorSpec, SpinJ, SpinScenario, Vec3, PRESET_NAMES};
use qawv::Grid;

use crate::CliError;

/// Default grid for finite-dimensional scenarios: `[-8, 8)` with 2048 samples.
pub const DEFAULT_HALF_SPAN: f64 = 8.0;
pub const DEFAULT_GRID_N: usize = 2048;
pub const DEFAULT_SWEEP_EPS: [f64; 4] = [0.2, 0.1, 0.05, 0.025];
pub const CLASSICAL_PRESET: &str = "free-particle";
pub const RANDOM_PRESET_PREFIX: &str = "random-";

/// A complex number written as a real number or an `[re, im]` pair.
#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum ComplexEntry {
    Real(f64),
    Pair([f64; 2]),
}

impl ComplexEntry {
    fn value(self) -> C64 {
        match self {
            ComplexEntry::Real(x) => C64::new(x, 0.0),
            ComplexEntry::Pair([re, im]) => C64::new(re, im),
        }
    }
}

/// Written as `{"kind": "<variant>", ...fields}`; see [`untag_scenario`].
#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScenarioSpec {
    /// Explicit states and a Hermitian matrix; `basis` rows are the post-selection
    /// vectors used by `sumrules` (the computational basis when omitted).
    Finite {
        psi1: Vec<ComplexEntry>,
        #[serde(default)]
        psi2: Option<Vec<ComplexEntry>>,
        observable: Vec<Vec<ComplexEntry>>,
        #[serde(default)]
        basis: Option<Vec<Vec<ComplexEntry>>>,
    },
    /// Haar states, a GUE observable and a Haar basis drawn from `--seed`.
    Random {
        dim: usize,
    },
    /// Coherent states along `n1` and `n2`, measuring `scale * J.axis`.
    Spin {
        j: f64,
        n1: Vec3,
        n2: Vec3,
        #[serde(default = "z_axis")]
        axis: Vec3,
        #[serde(default = "unit_scale")]
        scale: f64,
    },
    /// A named spin figure preset with an optional prior center.
    SpinPreset {
        name: String,
        #[serde(default)]
        center: Option<f64>,
    },
    Classical(ClassicalScenario),
}

fn z_axis() -> Vec3 {
    [0.0, 0.0, 1.0]
}

fn unit_scale() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub center: f64,
    #[serde(default = "default_eps")]
    pub eps: [f64; 4],
}

fn default_eps() -> [f64; 4] {
    DEFAULT_SWEEP_EPS
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceOverrides {
    pub strong_sum_rule: Option<f64>,
    pub weak_sum_rule: Option<f64>,
    pub pointer_sum_rule: Option<f64>,
    pub covering: Option<f64>,
    pub pooling: Option<f64>,
    pub normalization: Option<f64>,
    pub correspondence: Option<f64>,
}

/// Contents of a `--config` file.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub prior: Option<PriorSpec>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub sigmas: Option<Vec<f64>>,
    #[serde(default)]
    pub tolerances: Option<ToleranceOverrides>,
}

/// Tolerances applied by the check commands and at pdf emission.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Tolerances {
    pub strong_sum_rule: f64,
    pub weak_sum_rule: f64,
    pub pointer_sum_rule: f64,
    pub covering: f64,
    pub pooling: f64,
    pub normalization: f64,
    pub correspondence: f64,
}

impl Tolerances {
    pub fn new(overrides: ToleranceOverrides, scale: f64) -> Self {
        let pick = |o: Option<f64>, default: f64| o.unwrap_or(default) * scale;
        Self {
            strong_sum_rule: pick(overrides.strong_sum_rule, 1e-10),
            weak_sum_rule: pick(overrides.weak_sum_rule, 1e-8),
            pointer_sum_rule: pick(overrides.pointer_sum_rule, 1e-6),
            covering: pick(overrides.covering, 1e-10),
            pooling: pick(overrides.pooling, 1e-10),
            normalization: pick(overrides.normalization, qawv::pointer::NORM_TOL),
            correspondence: pick(
                overrides.correspondence,
                qawv::classical::CORRESPONDENCE_TOL,
            ),
        }
    }
}

/// Command-line overrides shared by every subcommand.
#[derive(Clone, Debug)]
pub struct Overrides {
    pub preset: Option<String>,
    pub config: Option<PathBuf>,
    pub grid_n: Option<usize>,
    pub grid_span: Option<f64>,
    pub seed: u64,
    pub tol_scale: f64,
}

impl Default for Overrides {
    fn default() -> Self {
        Self {
            preset: None,
            config: None,
            grid_n: None,
            grid_span: None,
            seed: 0,
            tol_scale: 1.0,
        }
    }
}

/// Where the scenario came from, echoed in every JSON summary.
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Preset(String),
    Config(Value),
}

/// A resolved run: the scenario, its optional prior and grid, and tolerances.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub source: Source,
    pub scenario: ScenarioSpec,
    pub prior: Option<PriorSpec>,
    pub grid: Option<GridSpec>,
    pub sweep: Option<SweepSpec>,
    pub sigmas: Option<Vec<f64>>,
    pub overrides: Overrides,
    pub tolerances: Tolerances,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConfigEcho<'a> {
    pub source: &'a Source,
    pub grid_n: Option<usize>,
    pub grid_span: Option<f64>,
    pub seed: u64,
    pub tol_scale: f64,
}

impl RunConfig {
    /// Resolves the scenario from exactly one of `positional`, `--preset` or `--config`.
    pub fn load(positional: Option<&str>, overrides: Overrides) -> Result<Self, CliError> {
        if !(overrides.tol_scale > 0.0 && overrides.tol_scale.is_finite()) {
            return Err(CliError::Config("--tol-scale must be positive".into()));
        }
        let preset = match (positional, overrides.preset.as_deref()) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "give the preset either positionally or with --preset".into(),
                ))
            }
            (a, b) => a.or(b).map(str::to_owned),
        };
        let (source, file) = match (preset, &overrides.config) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "--preset and --config are mutually exclusive".into(),
                ))
            }
            (None, None) => {
                return Err(CliError::Config(
                    "a scenario source is required: --preset or --config".into(),
                ))
            }
            (Some(name), None) => (Source::Preset(name.clone()), preset_config(&name)?),
            (None, Some(path)) => {
                let (value, file) = read_config(path)?;
                (Source::Config(value), file)
            }
        };
        let tolerances = Tolerances::new(file.tolerances.unwrap_or_default(), overrides.tol_scale);
        Ok(Self {
            source,
            scenario: file.scenario,
            prior: file.prior,
            grid: file.grid,
            sweep: file.sweep,
            sigmas: file.sigmas,
            overrides,
            tolerances,
        })
    }

    pub fn echo(&self) -> ConfigEcho<'_> {
        ConfigEcho {
            source: &self.source,
            grid_n: self.overrides.grid_n,
            grid_span: self.overrides.grid_span,
            seed: self.overrides.seed,
            tol_scale: self.overrides.tol_scale,
        }
    }

    /// Applies `--grid-n` and `--grid-span` to a base grid; the span is kept
    /// centred on the base interval.
    pub fn apply_grid_overrides(&self, base: Grid) -> Result<Grid, CliError> {
        let n = self.overrides.grid_n.unwrap_or(base.n());
        let (lo, hi) = match self.overrides.grid_span {
            Some(span) => {
                let mid = 0.5 * (base.q_min() + base.q_max());
                (mid - 0.5 * span, mid + 0.5 * span)
            }
            None => (base.q_min(), base.q_max()),
        };
        Grid::new(lo, hi, n).map_err(config_error)
    }

    fn base_grid(&self) -> Result<Grid, CliError> {
        match self.grid {
            Some(spec) => spec.build().map_err(config_error),
            None => Grid::symmetric(DEFAULT_HALF_SPAN, DEFAULT_GRID_N).map_err(config_error),
        }
    }

    pub fn finite_grid(&self) -> Result<Grid, CliError> {
        self.apply_grid_overrides(self.base_grid()?)
    }

    pub fn finite_prior(&self) -> PriorSpec {
        self.prior.unwrap_or(PriorSpec::Gaussian {
            center: 0.0,
            sigma: 1.0,
        })
    }

    /// The finite-dimensional system behind the scenario.
    pub fn finite_system(&self) -> Result<FiniteSystem, CliError> {
        match &self.scenario {
            ScenarioSpec::Finite {
                psi1,
                psi2,
                observable,
                basis,
            } => {
                let psi1 = state_from(psi1, "scenario.psi1")?;
                let dim = psi1.dim();
                let matrix = matrix_from(observable, dim, "scenario.observable")?;
                let observable =
                    Observable::new(matrix).map_err(|e| field_error("scenario.observable", e))?;
                let psi2 = psi2
                    .as_ref()
                    .map(|v| state_from(v, "scenario.psi2"))
                    .transpose()?;
                let basis = match basis {
                    Some(rows) => {
                        let vectors = rows
                            .iter()
                            .enumerate()
                            .map(|(i, r)| state_from(r, &format!("scenario.basis[{i}]")))
                            .collect::<Result<Vec<_>, _>>()?;
                        PostSelectionBasis::new(vectors)
                            .map_err(|e| field_error("scenario.basis", e))?
                    }
                    None => PostSelectionBasis::computational(dim),
                };
                Ok(FiniteSystem {
                    psi1,
                    psi2,
                    observable,
                    basis,
                })
            }
            ScenarioSpec::Random { dim } => {
                if !(2..=8).contains(dim) {
                    return Err(CliError::Config(format!(
                        "scenario.dim: {dim} is outside 2..=8"
                    )));
                }
                let mut rng = random::rng(self.overrides.seed);
                let sc = random::scenario(&mut rng, *dim);
                let psi2 = random::state(&mut rng, *dim);
                Ok(FiniteSystem {
                    psi1: sc.psi1,
                    psi2: Some(psi2),
                    observable: sc.observable,
                    basis: sc.basis,
                })
            }
            ScenarioSpec::Spin { .. } | ScenarioSpec::SpinPreset { .. } => {
                let sc = self.spin_scenario()?;
                let (psi1, psi2) = sc.states();
                let observable = sc.observable().map_err(CliError::Numerical)?;
                let basis = PostSelectionBasis::computational(psi1.dim());
                Ok(FiniteSystem {
                    psi1,
                    psi2: Some(psi2),
                    observable,
                    basis,
                })
            }
            ScenarioSpec::Classical(_) => Err(CliError::Config(
                "scenario.kind: classical scenarios are only accepted by classical-compare".into(),
            )),
        }
    }

    /// The spin scenario with the prior and grid overrides applied.
    pub fn spin_scenario(&self) -> Result<SpinScenario, CliError> {
        let mut sc = match &self.scenario {
            ScenarioSpec::SpinPreset { name, center } => {
                SpinScenario::preset(name, *center).map_err(config_error)?
            }
            ScenarioSpec::Spin {
                j,
                n1,
                n2,
                axis,
                scale,
            } => {
                SpinJ::new(*j).map_err(|e| field_error("scenario.j", e))?;
                let grid = self.base_grid()?;
                let prior = self.prior.unwrap_or(PriorSpec::Gaussian {
                    center: 0.0,
                    sigma: 0.15,
                });
                let mut sc =
                    SpinScenario::new(*j, *n1, *n2, *axis, prior, grid).map_err(config_error)?;
                sc.scale = *scale;
                sc
            }
            _ => {
                return Err(CliError::Config(
                    "scenario.kind: this command needs a spin scenario".into(),
                ))
            }
        };
        if let (ScenarioSpec::SpinPreset { .. }, Some(prior)) = (&self.scenario, self.prior) {
            sc = sc.with_prior(prior);
        }
        if let (ScenarioSpec::SpinPreset { .. }, Some(spec)) = (&self.scenario, self.grid) {
            sc = sc.with_grid(spec.build().map_err(config_error)?);
        }
        let grid = self.apply_grid_overrides(sc.grid)?;
        Ok(sc.with_grid(grid))
    }

    pub fn classical_scenario(&self) -> Result<ClassicalScenario, CliError> {
        let ScenarioSpec::Classical(sc) = &self.scenario else {
            return Err(CliError::Config(
                "scenario.kind: classical-compare needs a classical scenario".into(),
            ));
        };
        let mut sc = sc.clone();
        let base = sc.grid.build().map_err(config_error)?;
        let grid = self.apply_grid_overrides(base)?;
        sc.grid = GridSpec {
            q_min: grid.q_min(),
            q_max: grid.q_max(),
            n: grid.n(),
        };
        sc.validate().map_err(config_error)?;
        Ok(sc)
    }

    pub fn is_spin(&self) -> bool {
        matches!(
            self.scenario,
            ScenarioSpec::Spin { .. } | ScenarioSpec::SpinPreset { .. }
        )
    }
}

/// Pre-selection, optional post-selection, observable and complete basis.
pub struct FiniteSystem {
    pub psi1: StateVector,
    pub psi2: Option<StateVector>,
    pub observable: Observable,
    pub basis: PostSelectionBasis,
}

impl FiniteSystem {
    pub fn post_selection(&self) -> Result<&StateVector, CliError> {
        self.psi2.as_ref().ok_or_else(|| {
            CliError::Config("scenario.psi2: this command needs a post-selected state".into())
        })
    }
}

fn preset_config(name: &str) -> Result<ConfigFile, CliError> {
    let scenario = if PRESET_NAMES.contains(&name) {
        ScenarioSpec::SpinPreset {
            name: name.to_owned(),
            center: None,
        }
    } else if name == CLASSICAL_PRESET {
        ScenarioSpec::Classical(ClassicalScenario::free_particle())
    } else if let Some(dim) = name
        .strip_prefix(RANDOM_PRESET_PREFIX)
        .and_then(|d| d.parse().ok())
    {
        ScenarioSpec::Random { dim }
    } else {
        return Err(CliError::Config(format!(
            "unknown preset {name:?}; known: {}, {CLASSICAL_PRESET}, {RANDOM_PRESET_PREFIX}<dim>",
            PRESET_NAMES.join(", ")
        )));
    };
    Ok(ConfigFile {
        scenario,
        prior: None,
        grid: None,
        sweep: None,
        sigmas: None,
        tolerances: None,
    })
}

fn read_config(path: &Path) -> Result<(Value, ConfigFile), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: invalid JSON: {e}", path.display())))?;
    let file: ConfigFile = serde_path_to_error::deserialize(untag_scenario(value.clone()))
        .map_err(|e| {
            let field = retag_path(&e.path().to_string());
            CliError::Config(format!(
                "{}: field `{field}`: {}",
                path.display(),
                e.into_inner()
            ))
        })?;
    Ok((value, file))
}

/// Rewrites `scenario: {"kind": k, ...}` as `scenario: {k: {...}}` so that field
/// errors report their full path instead of stopping at `scenario`.
fn untag_scenario(mut value: Value) -> Value {
    if let Some(Value::Object(scenario)) = value.get_mut("scenario") {
        if let Some(Value::String(kind)) = scenario.remove("kind") {
            let body = Value::Object(std::mem::take(scenario));
            let mut map = serde_json::Map::new();
            map.insert(kind, body);
            *scenario = map;
        }
    }
    value
}

/// Drops the variant segment that [`untag_scenario`] introduced.
fn retag_path(path: &str) -> String {
    let mut parts: Vec<&str> = path.split('.').collect();
    if parts.len() > 2 && parts[0] == "scenario" {
        parts.remove(1);
    }
    parts.join(".")
}

fn state_from(entries: &[ComplexEntry], field: &str) -> Result<StateVector, CliError> {
    StateVector::new(entries.iter().map(|c| c.value()).collect()).map_err(|e| field_error(field, e))
}

fn matrix_from(rows: &[Vec<ComplexEntry>], dim: usize, field: &str) -> Result<CMatrix, CliError> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(CliError::Config(format!(
            "{field}: expected a {dim}x{dim} matrix"
        )));
    }
    Ok(CMatrix::from_fn(dim, dim, |r, c| rows[r][c].value()))
}

fn field_error(field: &str, e: qawv::Error) -> CliError {
    CliError::Config(format!("{field}: {e}"))
}

fn config_error(e: qawv::Error) -> CliError {
    CliError::Config(e.to_string())
}
