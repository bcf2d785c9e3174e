//! Scenario files: a strict TOML description of an ambient space, a surface,
//! a task list and the expected outcome, plus the runner that turns one into
//! a deterministic JSON report.

mod builtin;
mod output;
mod run;
mod sweep;

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::ambient::{
    AmbientSpace, BoundaryKind, DensitySpec, Dimension, MetricKind, PeriodicAxis,
};
use crate::error::{Result, WstabError};
use crate::expr::Expr;
use crate::functionals::{ScalarJetFn, VariationField};
use crate::jet::Jet2;
use crate::surface::{mesh_from_immersion, Immersion, SurfaceMesh, SurfaceSpec};
use crate::theorems::TopologyVerdict;

pub use builtin::{builtin, builtin_source, builtins, list_text, Builtin};
pub use output::{
    metadata_json, write_outputs, write_sweep, RunMetadata, MESH_FILE, METADATA_FILE, PLOT_FILE,
    REPORT_FILE, SAMPLES_FILE, SPECTRUM_FILE, SWEEP_FILE,
};
pub use run::{
    exit_code, run, CheckOutcome, FirstVariationReport, MeshSummary, Report, RunOutput,
    SecondVariationReport, TopologyReport, EXIT_CHECK_FAILURE, EXIT_CONFIG, EXIT_NUMERICAL,
    EXIT_OK,
};
pub use sweep::{parse_range, sweep, SweepRow, SweepTable, KNOBS};

/// Work items, in dependency order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Stationarity,
    FirstVariation,
    SecondVariation,
    Spectrum,
    Identities,
    Topology,
    AreaBounds,
    Rigidity,
    Foliation,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Stationarity => "stationarity",
            Task::FirstVariation => "first-variation",
            Task::SecondVariation => "second-variation",
            Task::Spectrum => "spectrum",
            Task::Identities => "identities",
            Task::Topology => "topology",
            Task::AreaBounds => "area-bounds",
            Task::Rigidity => "rigidity",
            Task::Foliation => "foliation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    pub tasks: Vec<Task>,
    pub ambient: AmbientConfig,
    pub surface: SurfaceSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variation: Option<VariationSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub area_bounds: AreaBoundConfig,
    #[serde(default)]
    pub foliation: FoliationConfig,
    #[serde(default)]
    pub expect: Expectations,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn default_resolution() -> usize {
    24
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmbientConfig {
    #[serde(default)]
    pub metric: MetricConfig,
    pub density: DensitySpec,
    #[serde(default = "no_boundary")]
    pub boundary: BoundaryKind,
}

fn no_boundary() -> BoundaryKind {
    BoundaryKind::None {}
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MetricConfig {
    #[default]
    Euclidean,
    /// Flat metric with some coordinate axes closed up into circles.
    FlatProduct { circles: Vec<CircleConfig> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircleConfig {
    pub axis: usize,
    #[serde(default = "tau")]
    pub circumference: f64,
}

fn tau() -> f64 {
    TAU
}

/// Variation vector field `X` used by the first/second variation and
/// foliation tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum VariationSpec {
    Zero,
    /// `X = p - center`.
    Radial {
        #[serde(default)]
        center: [f64; 3],
    },
    Constant {
        vector: [f64; 3],
    },
    /// `X = u N` with `u` an expression in `x, y, z`.
    Normal {
        u: String,
        #[serde(default)]
        params: BTreeMap<String, f64>,
    },
}

impl VariationSpec {
    pub fn build(&self, imm: &Immersion) -> Result<VariationField> {
        Ok(match self {
            VariationSpec::Zero => VariationField::zero(),
            VariationSpec::Radial { center } => {
                let c = *center;
                VariationField::new(
                    "radial",
                    Arc::new(move |p: &[Jet2; 3]| [p[0] - c[0], p[1] - c[1], p[2] - c[2]]),
                )
            }
            VariationSpec::Constant { vector } => {
                VariationField::constant("constant", Vector3::from(*vector))
            }
            VariationSpec::Normal { .. } => {
                VariationField::normal(imm, "normal", self.normal_speed()?.unwrap())?
            }
        })
    }

    /// The speed `u` of a normal variation.
    pub fn normal_speed(&self) -> Result<Option<ScalarJetFn>> {
        let VariationSpec::Normal { u, params } = self else {
            return Ok(None);
        };
        let e = Expr::parse(u, &["x", "y", "z"], params)
            .map_err(|e| WstabError::Config(format!("variation.u: {e}")))?;
        Ok(Some(Arc::new(move |p: &[Jet2; 3]| e.eval(p))))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative tolerance of the stability verdicts.
    pub verdict: f64,
    pub stationarity_h: f64,
    pub stationarity_angle: f64,
    pub rigidity: f64,
    pub first_variation_abs: f64,
    pub first_variation_rel: f64,
    pub second_variation_rel: f64,
    pub boundary_identity: f64,
    pub solver_residual: f64,
    /// Used with `expect.lambda_min`.
    pub lambda: f64,
    pub eigen_count: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            verdict: 1e-3,
            stationarity_h: 1e-6,
            stationarity_angle: 1e-6,
            rigidity: 1e-6,
            first_variation_abs: 1e-6,
            first_variation_rel: 1e-4,
            second_variation_rel: 1e-3,
            boundary_identity: 1e-6,
            solver_residual: 1e-6,
            lambda: 2e-2,
            eigen_count: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AreaBoundConfig {
    pub s0: Vec<f64>,
}

impl Default for AreaBoundConfig {
    fn default() -> Self {
        AreaBoundConfig {
            s0: vec![1.0, -1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoliationConfig {
    pub leaves: Vec<f64>,
}

impl Default for FoliationConfig {
    fn default() -> Self {
        FoliationConfig { leaves: vec![0.0] }
    }
}

/// Expected outcomes; each present key becomes an asserted check.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Expectations {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stationary: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strongly_stable: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub volume_stable: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub euler_characteristic: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub topology: Option<TopologyVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rigid: Option<bool>,
    /// Parameter value where `lambda_min` changes sign along the sweep.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crossing: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crossing_tol: Option<f64>,
}

/// A sweep run alongside the scenario itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub param: String,
    pub range: String,
}

impl Scenario {
    pub fn from_toml_str(src: &str) -> Result<Scenario> {
        let value: toml::Table =
            toml::from_str(src).map_err(|e| WstabError::Config(e.message().to_string()))?;
        Scenario::from_table(value)
    }

    pub fn from_table(table: toml::Table) -> Result<Scenario> {
        let scenario: Scenario = table
            .try_into()
            .map_err(|e: toml::de::Error| WstabError::Config(e.message().to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Scenario> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| WstabError::Config(format!("cannot read {}: {e}", path.display())))?;
        Scenario::from_toml_str(&src)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| WstabError::Config(e.to_string()))
    }

    fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(WstabError::Config(
                "tasks: at least one task is required".into(),
            ));
        }
        if self.resolution < 2 {
            return Err(WstabError::Config(format!(
                "resolution: must be >= 2, got {}",
                self.resolution
            )));
        }
        let needs_field = self.tasks.iter().any(|t| {
            matches!(
                t,
                Task::FirstVariation | Task::SecondVariation | Task::Foliation
            )
        });
        if needs_field && self.variation.is_none() {
            return Err(WstabError::Config(
                "variation: required by the requested tasks".into(),
            ));
        }
        if self.tasks.contains(&Task::SecondVariation)
            && !matches!(self.variation, Some(VariationSpec::Normal { .. }))
        {
            return Err(WstabError::Config(
                "variation.kind: second-variation needs kind = \"normal\"".into(),
            ));
        }
        if self.tolerances.eigen_count == 0 {
            return Err(WstabError::Config(
                "tolerances.eigen_count: must be positive".into(),
            ));
        }
        if self.tasks.contains(&Task::AreaBounds)
            && self
                .area_bounds
                .s0
                .iter()
                .any(|s| *s == 0.0 || !s.is_finite())
        {
            return Err(WstabError::Config(
                "area_bounds.s0: values must be finite and non-zero".into(),
            ));
        }
        if self.sweep.is_some()
            && self.expect.crossing.is_none()
            && self.expect.crossing_tol.is_some()
        {
            return Err(WstabError::Config(
                "expect.crossing_tol: given without expect.crossing".into(),
            ));
        }
        Ok(())
    }

    /// Requested tasks, deduplicated and in dependency order.
    pub fn ordered_tasks(&self) -> Vec<Task> {
        let mut t = self.tasks.clone();
        t.sort();
        t.dedup();
        t
    }

    pub fn ambient_space(&self) -> Result<AmbientSpace> {
        let metric = match &self.ambient.metric {
            MetricConfig::Euclidean => MetricKind::FlatEuclidean,
            MetricConfig::FlatProduct { circles } => MetricKind::FlatProduct(
                circles
                    .iter()
                    .map(|c| PeriodicAxis {
                        axis: c.axis,
                        circumference: c.circumference,
                    })
                    .collect(),
            ),
        };
        AmbientSpace::new(
            Dimension::Three,
            metric,
            self.ambient.density.build().map_err(config)?,
            self.ambient.boundary.build().map_err(config)?,
        )
        .map_err(config)
    }

    pub fn immersion(&self) -> Result<Immersion> {
        self.surface.build().map_err(config)
    }

    pub fn mesh(&self) -> Result<SurfaceMesh> {
        mesh_from_immersion(&self.ambient_space()?, &self.immersion()?, self.resolution)
    }

    /// Reads a scenario file, or falls back to a builtin of that name.
    pub fn load(file_or_builtin: &str) -> Result<Scenario> {
        let path = std::path::Path::new(file_or_builtin);
        if path.exists() {
            Scenario::from_file(path)
        } else {
            builtin(file_or_builtin).map_err(|_| {
                WstabError::Config(format!(
                    "`{file_or_builtin}` is neither a file nor a builtin scenario"
                ))
            })
        }
    }
}

fn config(e: WstabError) -> WstabError {
    match e {
        WstabError::Input(m) => WstabError::Config(m),
        other => other,
    }
}

/// Registry name of a tagged spec (`name` field of its serialized form).
fn registry_name<T: Serialize>(spec: &T) -> String {
    serde_json::to_value(spec)
        .ok()
        .and_then(|v| v.get("name").and_then(|n| n.as_str()).map(str::to_string))
        .unwrap_or_default()
}
