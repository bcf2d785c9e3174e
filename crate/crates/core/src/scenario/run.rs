use rayon::prelude::*;
use serde::Serialize;

use super::{registry_name, sweep, Scenario, Task};
use crate::ambient::AmbientSpace;
use crate::error::{Result, WstabError};
use crate::functionals::{
    first_variation_fd, first_variation_formula, second_variation_fd, volume_first_variation,
    volume_variation_fd, DeformedFamily, FdEstimate,
};
use crate::quadrature::Quadrature;
use crate::stability::{
    assemble, eigenfunction_csv, index_form_exact, robin_eigenproblem, volume_constrained_verdict,
    SpectralResult, SpectrumReport,
};
use crate::surface::io::{boundary_sidecar_string, geometry_csv, off_string};
use crate::surface::{
    extrinsic_geometry, mesh_from_immersion, stationarity_verdict, ExtrinsicData, Immersion,
    StationarityTolerances, StationarityVerdict, SurfaceMesh,
};
use crate::theorems::{
    area_bound_check, boundary_identity_residual, foliation_monotonicity_check,
    gauss_rearrangement_check, rigidity_flags, stability_topology_chain, topology_verdict,
    ChainReport, FoliationReport, RigidityFlags, TheoremCheck, TopologyVerdict,
};

use super::sweep::SweepTable;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILURE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

/// Process exit code for an error that aborted a run.
pub fn exit_code(e: &WstabError) -> i32 {
    match e {
        WstabError::Config(_) | WstabError::Input(_) | WstabError::Io(_) => EXIT_CONFIG,
        WstabError::Precondition(_) => EXIT_CHECK_FAILURE,
        _ => EXIT_NUMERICAL,
    }
}

const QUAD: Quadrature = Quadrature::FINE;

#[derive(Debug, Clone, Serialize)]
pub struct MeshSummary {
    pub resolution: usize,
    pub vertices: usize,
    pub triangles: usize,
    pub boundary_edges: usize,
    pub euler_characteristic: i64,
    pub boundary_components: usize,
    pub genus: i64,
    pub min_angle_degrees: f64,
    pub area: f64,
    pub weighted_area: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FirstVariationReport {
    pub field: String,
    pub formula: f64,
    pub fd: FdEstimate,
    pub volume_formula: f64,
    pub volume_fd: FdEstimate,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SecondVariationReport {
    /// `d^2/ds^2 (A_f + H_f V_f)` by finite differences.
    pub fd: FdEstimate,
    /// `I_f(u, u)` by quadrature.
    pub index_form: f64,
    pub rel_err: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TopologyReport {
    pub chain: ChainReport,
    pub verdict: TopologyVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub asserted: bool,
    pub pass: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        CheckOutcome {
            name: name.into(),
            asserted: true,
            pass,
            detail,
        }
    }

    fn theorem(c: &TheoremCheck) -> Self {
        CheckOutcome {
            name: c.name.clone(),
            asserted: c.asserted,
            pass: c.pass,
            detail: format!(
                "lhs {:.6e}, rhs {:.6e}, slack {:.3e}",
                c.lhs, c.rhs, c.slack
            ),
        }
    }
}

/// Everything a run computed. Contains no timestamps, so two runs of the
/// same scenario serialize identically.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub scenario: Scenario,
    pub mesh: MeshSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stationarity: Option<StationarityVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_variation: Option<FirstVariationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub second_variation: Option<SecondVariationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub identities: Vec<TheoremCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub topology: Option<TopologyReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub area_bounds: Vec<TheoremCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rigidity: Option<RigidityFlags>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub foliation: Option<FoliationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepTable>,
    pub checks: Vec<CheckOutcome>,
    pub pass: bool,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn exit_code(&self) -> i32 {
        if self.pass {
            EXIT_OK
        } else {
            EXIT_CHECK_FAILURE
        }
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// A report plus the text artifacts written next to it.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: Report,
    pub mesh_off: String,
    pub mesh_boundary: String,
    pub samples_csv: String,
    pub spectrum_csv: Option<String>,
    pub sweep_csv: Option<String>,
}

struct Context<'a> {
    scenario: &'a Scenario,
    space: AmbientSpace,
    imm: Immersion,
    mesh: SurfaceMesh,
    data: ExtrinsicData,
    spectrum: Option<SpectralResult>,
}

enum Outcome {
    Stationarity(StationarityVerdict),
    FirstVariation(FirstVariationReport),
    SecondVariation(SecondVariationReport),
    Spectrum,
    Identities(Vec<TheoremCheck>),
    Topology(TopologyReport),
    AreaBounds(Vec<TheoremCheck>),
    Rigidity(RigidityFlags),
    Foliation(FoliationReport),
    /// A task whose precondition did not hold.
    Unmet(Task, String),
}

pub fn run(scenario: &Scenario) -> Result<RunOutput> {
    let space = scenario.ambient_space()?;
    let imm = scenario.immersion()?;
    let mesh = mesh_from_immersion(&space, &imm, scenario.resolution)?;
    let data = extrinsic_geometry(&space, &imm, &mesh, QUAD)?;
    let tasks = scenario.ordered_tasks();

    let needs_spectrum = tasks
        .iter()
        .any(|t| matches!(t, Task::Spectrum | Task::Topology | Task::AreaBounds));
    let mut spectrum_report = None;
    let mut spectrum = None;
    if needs_spectrum {
        let asm = assemble(&space, &imm, &mesh)?;
        let count = scenario.tolerances.eigen_count.min(asm.dof());
        let spec = robin_eigenproblem(&asm, count)?;
        let constrained = volume_constrained_verdict(&asm, &spec, scenario.tolerances.verdict)?;
        spectrum_report = Some(SpectrumReport::new(
            registry_name(&scenario.surface),
            registry_name(&scenario.ambient.density),
            &asm,
            &spec,
            &constrained,
        ));
        spectrum = Some(spec);
    }
    let ctx = Context {
        scenario,
        space,
        imm,
        mesh,
        data,
        spectrum,
    };

    let outcomes: Vec<Result<Outcome>> = tasks.par_iter().map(|t| run_task(&ctx, *t)).collect();

    let mut report = Report {
        scenario: scenario.clone(),
        mesh: mesh_summary(&ctx),
        stationarity: None,
        first_variation: None,
        second_variation: None,
        spectrum: spectrum_report,
        identities: Vec::new(),
        topology: None,
        area_bounds: Vec::new(),
        rigidity: None,
        foliation: None,
        sweep: None,
        checks: Vec::new(),
        pass: true,
    };
    let expect = &scenario.expect;
    let tol = &scenario.tolerances;
    if let Some(chi) = expect.euler_characteristic {
        let got = report.mesh.euler_characteristic;
        report.checks.push(CheckOutcome::new(
            "euler-characteristic",
            got == chi,
            format!("expected {chi}, got {got}"),
        ));
    }
    for outcome in outcomes {
        let checks = &mut report.checks;
        match outcome? {
            Outcome::Stationarity(v) => {
                let want = expect.stationary.unwrap_or(true);
                checks.push(CheckOutcome::new(
                    "stationarity",
                    v.volume_constrained == want,
                    format!(
                        "expected stationary = {want}; H_f spread {:.3e}, max contact {:.3e}",
                        v.h_f_spread, v.max_contact
                    ),
                ));
                report.stationarity = Some(v);
            }
            Outcome::FirstVariation(r) => {
                checks.push(CheckOutcome::new(
                    "first-variation",
                    r.pass,
                    format!("formula {:.9e}, fd {:.9e}", r.formula, r.fd.value),
                ));
                report.first_variation = Some(r);
            }
            Outcome::SecondVariation(r) => {
                checks.push(CheckOutcome::new(
                    "second-variation",
                    r.pass,
                    format!("index form {:.9e}, fd {:.9e}", r.index_form, r.fd.value),
                ));
                report.second_variation = Some(r);
            }
            Outcome::Spectrum => {
                let s = report.spectrum.as_ref().expect("spectrum computed");
                checks.push(CheckOutcome::new(
                    "eigensolver-residual",
                    s.residual_max <= tol.solver_residual,
                    format!("max residual {:.3e}", s.residual_max),
                ));
                if let Some(want) = expect.lambda_min {
                    checks.push(CheckOutcome::new(
                        "lambda-min",
                        (s.lambda_min - want).abs() <= tol.lambda,
                        format!(
                            "expected {want} +- {}, got {:.6e}",
                            tol.lambda, s.lambda_min
                        ),
                    ));
                }
                if let Some(want) = expect.strongly_stable {
                    checks.push(CheckOutcome::new(
                        "strong-stability",
                        s.verdict_strong == want,
                        format!("expected {want}, lambda_min {:.6e}", s.lambda_min),
                    ));
                }
                if let Some(want) = expect.volume_stable {
                    checks.push(CheckOutcome::new(
                        "volume-constrained-stability",
                        s.verdict_volume_constrained == want,
                        format!(
                            "expected {want}, constrained minimum {:.6e}",
                            s.constrained_minimum
                        ),
                    ));
                }
            }
            Outcome::Identities(v) => {
                checks.extend(v.iter().map(CheckOutcome::theorem));
                report.identities = v;
            }
            Outcome::Topology(t) => {
                checks.push(CheckOutcome::theorem(&t.chain.check));
                let consistent = t.verdict != TopologyVerdict::Inconsistent;
                let matches = expect.topology.is_none_or(|want| want == t.verdict);
                checks.push(CheckOutcome::new(
                    "topology-verdict",
                    consistent && matches,
                    format!(
                        "verdict {:?}, chi {}, expected {:?}",
                        t.verdict, t.chain.euler_characteristic, expect.topology
                    ),
                ));
                report.topology = Some(t);
            }
            Outcome::AreaBounds(v) => {
                checks.extend(v.iter().map(CheckOutcome::theorem));
                report.area_bounds = v;
            }
            Outcome::Rigidity(flags) => {
                if let Some(want) = expect.rigid {
                    checks.push(CheckOutcome::new(
                        "rigidity",
                        flags.all() == want,
                        format!("expected all flags = {want}, got {flags:?}"),
                    ));
                }
                report.rigidity = Some(flags);
            }
            Outcome::Foliation(f) => {
                let worst = f.samples.iter().map(|s| s.rel_err).fold(0.0, f64::max);
                checks.push(CheckOutcome::new(
                    "foliation",
                    f.pass,
                    format!(
                        "max relative error {worst:.3e}, monotonicity asserted {}",
                        f.monotonicity_asserted
                    ),
                ));
                report.foliation = Some(f);
            }
            Outcome::Unmet(task, msg) => {
                checks.push(CheckOutcome::new(
                    &format!("{}-precondition", task.name()),
                    false,
                    msg,
                ));
            }
        }
    }

    let mut sweep_csv = None;
    if let Some(cfg) = &scenario.sweep {
        let values = super::parse_range(&cfg.range)?;
        let mut base = scenario.clone();
        base.sweep = None;
        let table = sweep(&base, &cfg.param, &values)?;
        if let Some(want) = expect.crossing {
            let tol = expect.crossing_tol.unwrap_or(2e-2);
            let pass = table.crossing.is_some_and(|c| (c - want).abs() <= tol);
            report.checks.push(CheckOutcome::new(
                "sweep-crossing",
                pass,
                format!("expected {want} +- {tol}, got {:?}", table.crossing),
            ));
        }
        sweep_csv = Some(table.to_csv());
        report.sweep = Some(table);
    }

    report.pass = report.checks.iter().all(|c| c.pass);
    Ok(RunOutput {
        mesh_off: off_string(&ctx.mesh),
        mesh_boundary: boundary_sidecar_string(&ctx.mesh),
        samples_csv: geometry_csv(&ctx.data),
        spectrum_csv: ctx
            .spectrum
            .as_ref()
            .map(|s| eigenfunction_csv(&ctx.mesh, s)),
        sweep_csv,
        report,
    })
}

fn mesh_summary(ctx: &Context) -> MeshSummary {
    let t = &ctx.mesh.topology;
    MeshSummary {
        resolution: ctx.mesh.resolution,
        vertices: t.vertices,
        triangles: t.faces,
        boundary_edges: ctx.mesh.boundary_edges.len(),
        euler_characteristic: t.euler_characteristic,
        boundary_components: t.boundary_components,
        genus: t.genus,
        min_angle_degrees: ctx.mesh.min_angle_degrees(),
        area: ctx.data.area(),
        weighted_area: ctx.data.weighted_area(),
    }
}

fn family(ctx: &Context) -> Result<DeformedFamily> {
    let spec = ctx.scenario.variation.as_ref().expect("validated");
    let field = spec.build(&ctx.imm)?;
    DeformedFamily::new(&ctx.space, &ctx.imm, &ctx.mesh, field)
}

fn run_task(ctx: &Context, task: Task) -> Result<Outcome> {
    match task_outcome(ctx, task) {
        Err(WstabError::Precondition(msg)) => Ok(Outcome::Unmet(task, msg)),
        other => other,
    }
}

fn task_outcome(ctx: &Context, task: Task) -> Result<Outcome> {
    let tol = &ctx.scenario.tolerances;
    let (imm, mesh, data) = (&ctx.imm, &ctx.mesh, &ctx.data);
    Ok(match task {
        Task::Stationarity => Outcome::Stationarity(stationarity_verdict(
            data,
            StationarityTolerances {
                h_rel: tol.stationarity_h,
                angle: tol.stationarity_angle,
            },
        )),
        Task::FirstVariation => {
            let fam = family(ctx)?;
            let formula = first_variation_formula(imm, mesh, data, fam.field());
            let fd = first_variation_fd(&fam, QUAD)?;
            let volume_formula = volume_first_variation(imm, mesh, data, fam.field());
            let volume_fd = volume_variation_fd(&fam, QUAD)?;
            let tolerance = tol
                .first_variation_abs
                .max(tol.first_variation_rel * formula.abs());
            let volume_tol = tol
                .first_variation_abs
                .max(tol.first_variation_rel * volume_formula.abs());
            Outcome::FirstVariation(FirstVariationReport {
                field: fam.field().name.clone(),
                formula,
                fd,
                volume_formula,
                volume_fd,
                tolerance,
                pass: (fd.value - formula).abs() <= tolerance
                    && (volume_fd.value - volume_formula).abs() <= volume_tol,
            })
        }
        Task::SecondVariation => {
            let u = ctx
                .scenario
                .variation
                .as_ref()
                .and_then(|v| v.normal_speed().transpose())
                .expect("validated")?;
            let fam = family(ctx)?;
            let fd = second_variation_fd(&fam, QUAD)?;
            let index_form = index_form_exact(imm, mesh, data, &u);
            let rel_err = (fd.value - index_form).abs() / index_form.abs().max(1.0);
            Outcome::SecondVariation(SecondVariationReport {
                fd,
                index_form,
                rel_err,
                pass: rel_err <= tol.second_variation_rel,
            })
        }
        Task::Spectrum => Outcome::Spectrum,
        Task::Identities => {
            let mut v = vec![gauss_rearrangement_check(&ctx.space, data)?];
            let r = boundary_identity_residual(data);
            let asserted = mesh.has_boundary();
            v.push(TheoremCheck {
                name: "boundary-identity".into(),
                hypotheses: Vec::new(),
                asserted,
                lhs: r,
                rhs: 0.0,
                slack: tol.boundary_identity - r,
                pass: !asserted || r <= tol.boundary_identity,
            });
            Outcome::Identities(v)
        }
        Task::Topology => {
            let chain = stability_topology_chain(&ctx.space, mesh, data)?;
            let spec = ctx.spectrum.as_ref().expect("spectrum computed");
            let verdict = topology_verdict(&chain, spec, mesh.has_boundary());
            Outcome::Topology(TopologyReport { chain, verdict })
        }
        Task::AreaBounds => {
            let spec = ctx.spectrum.as_ref().expect("spectrum computed");
            Outcome::AreaBounds(
                ctx.scenario
                    .area_bounds
                    .s0
                    .iter()
                    .map(|&s0| area_bound_check(&ctx.space, mesh, data, spec, s0))
                    .collect::<Result<_>>()?,
            )
        }
        Task::Rigidity => Outcome::Rigidity(rigidity_flags(data, tol.rigidity)),
        Task::Foliation => {
            let leaves = &ctx.scenario.foliation.leaves;
            let reach = leaves.iter().fold(0.0f64, |m, s| m.max(s.abs())) + 0.01;
            let fam = family(ctx)?.with_range(reach.max(1.0));
            Outcome::Foliation(foliation_monotonicity_check(&fam, leaves, QUAD)?)
        }
    })
}
