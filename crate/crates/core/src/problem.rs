//! JSON files for problems, solve results and check reports.
//!
//! A problem file fully determines one solve:
//!
//! ```json
//! {"A": [[0.5]], "w": [0.0], "box": {"lower": [-1.0], "upper": [1.0]}, "T": 30,
//!  "parameterization": {"kind": "sfg", "template": [[1.0]]},
//!  "objective": "ss", "options": {"gap_tol": 1e-8}, "seed": 7}
//! ```
//!
//! `w`, `options` and `seed` are optional.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invariance::{certificate_report, AffineSystem, CertificateReport, InvarianceProblem, CERTIFICATE_TOL};
use crate::numerics::Matrix;
use crate::oracle::{simulate_invariance, ViolationReport};
use crate::params::{ObjectiveKind, Parameterization, SfgParameterization, UtpdParameterization, DEFAULT_FLOOR};
use crate::solver::{SolveResult, SolveStatus, SolverOptions, StageLog};
use crate::zonotope::{AxisBox, Zonotope};

/// Largest trajectory-simulation violation accepted by [`check_solution`].
pub const SIMULATION_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ParameterizationSpec {
    Sfg {
        template: Matrix,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        floor: Option<f64>,
    },
    Utpd {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        floor: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(rename = "A")]
    pub a: Matrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
    #[serde(rename = "box")]
    pub bounds: AxisBox,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub parameterization: ParameterizationSpec,
    pub objective: ObjectiveKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<SolverOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Deserializes JSON, naming the path of the offending field on failure.
pub fn from_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Invalid(format!("{path}: {}", e.into_inner()))
    })
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable")
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: Self = from_json(text)?;
        file.to_problem()?;
        Ok(file)
    }

    pub fn to_problem(&self) -> Result<InvarianceProblem> {
        let d = self.a.rows();
        let w = self.w.clone().unwrap_or_else(|| vec![0.0; d]);
        let param = match &self.parameterization {
            ParameterizationSpec::Sfg { template, floor } => Parameterization::Sfg(SfgParameterization::new(
                template.clone(),
                floor.unwrap_or(DEFAULT_FLOOR),
            )?),
            ParameterizationSpec::Utpd { floor } => {
                Parameterization::Utpd(UtpdParameterization::new(d, floor.unwrap_or(DEFAULT_FLOOR))?)
            }
        };
        InvarianceProblem::new(AffineSystem::new(self.a.clone(), w)?, self.bounds.clone(), self.horizon, param, self.objective)
    }

    pub fn from_problem(problem: &InvarianceProblem, options: Option<SolverOptions>, seed: Option<u64>) -> Self {
        let parameterization = match &problem.parameterization {
            Parameterization::Sfg(s) => ParameterizationSpec::Sfg {
                template: s.template().clone(),
                floor: (s.scale_floor() != DEFAULT_FLOOR).then_some(s.scale_floor()),
            },
            Parameterization::Utpd(u) => ParameterizationSpec::Utpd {
                floor: (u.diag_floor() != DEFAULT_FLOOR).then_some(u.diag_floor()),
            },
        };
        Self {
            a: problem.system.a().clone(),
            w: Some(problem.system.w().to_vec()),
            bounds: problem.bounds.clone(),
            horizon: problem.horizon,
            parameterization,
            objective: problem.objective,
            options,
            seed,
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        self.options.clone().unwrap_or_default()
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultFile {
    pub status: SolveStatus,
    pub objective_value: Option<f64>,
    pub volume: Option<f64>,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub kkt_residual: Option<f64>,
    pub certified: bool,
    pub zonotope: Option<Zonotope>,
    pub variables: Vec<f64>,
    pub stages: Vec<StageLog>,
}

impl From<&SolveResult> for ResultFile {
    fn from(r: &SolveResult) -> Self {
        Self {
            status: r.status,
            objective_value: finite(r.objective_value),
            volume: finite(r.volume),
            iterations: r.iterations,
            wall_time_s: r.wall_time.as_secs_f64(),
            kkt_residual: finite(r.kkt_residual),
            certified: r.certified,
            zonotope: r.zonotope.clone(),
            variables: r.variables.clone(),
            stages: r.stages.clone(),
        }
    }
}

/// Reads a bare zonotope or the `"zonotope"` entry of a result file.
pub fn parse_solution(text: &str) -> Result<Zonotope> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Invalid(format!("solution: {e}")))?;
    match value.get("zonotope") {
        Some(serde_json::Value::Null) => Err(Error::Invalid("zonotope: result holds no solution".into())),
        Some(z) => from_json(&z.to_string()).map_err(|e| Error::Invalid(format!("zonotope.{e}"))),
        None => from_json(text),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub certificate: CertificateReport,
    pub simulation: ViolationReport,
    pub certificate_passed: bool,
    pub simulation_passed: bool,
    pub passed: bool,
}

/// Certificate plus trajectory simulation of a candidate solution.
pub fn check_solution(problem: &InvarianceProblem, zono: &Zonotope, n_points: usize, seed: u64) -> Result<CheckReport> {
    if zono.dim() != problem.dim() {
        return Err(Error::DimensionMismatch(format!(
            "solution has dimension {}, problem has {}",
            zono.dim(),
            problem.dim()
        )));
    }
    let certificate = certificate_report(&problem.system, &problem.bounds, problem.horizon, zono)?;
    let simulation = simulate_invariance(&problem.system, zono, &problem.bounds, problem.horizon, n_points, seed)?;
    let certificate_passed = certificate.max_violation <= CERTIFICATE_TOL;
    let simulation_passed = simulation.passes(SIMULATION_TOL);
    Ok(CheckReport {
        certificate,
        simulation,
        certificate_passed,
        simulation_passed,
        passed: certificate_passed && simulation_passed,
    })
}
