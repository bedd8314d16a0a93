//! The two zonotope parameterizations and the objective functions built on them.
//!
//! * UTPD: a square upper-triangular generator matrix with a positive diagonal.
//!   The free variables are its upper-triangular entries in row-major order
//!   `(G₁₁, G₁₂, …, G₁d, G₂₂, …, G_dd)`.
//! * SFG: a fixed template `G` (d × p) scaled column-wise by `γ > 0`.
//!   The volume is a weighted sum of products of `d` scalings, with weights
//!   that depend only on the template and are computed once.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{binomial, combinations, subset_rank, Matrix};
use crate::zonotope::gram_root_det;

/// Default positivity floor for UTPD diagonals and SFG scalings.
pub const DEFAULT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct UtpdParameterization {
    dim: usize,
    diag_floor: f64,
}

impl UtpdParameterization {
    pub fn new(dim: usize, diag_floor: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("UTPD dimension must be positive".into()));
        }
        if !(diag_floor > 0.0) {
            return Err(Error::Invalid("UTPD diagonal floor must be positive".into()));
        }
        Ok(Self { dim, diag_floor })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn diag_floor(&self) -> f64 {
        self.diag_floor
    }

    pub fn num_free(&self) -> usize {
        self.dim * (self.dim + 1) / 2
    }

    /// Position of entry `(i, j)`, `i ≤ j`, in the free-variable vector.
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= j && j < self.dim);
        i * self.dim - i * (i + 1) / 2 + j
    }

    pub fn diagonal_indices(&self) -> Vec<usize> {
        (0..self.dim).map(|i| self.index(i, i)).collect()
    }

    pub fn to_matrix(&self, free: &[f64]) -> Result<Matrix> {
        if free.len() != self.num_free() {
            return Err(Error::DimensionMismatch(format!(
                "{} UTPD variables for dimension {}",
                free.len(),
                self.dim
            )));
        }
        let mut g = Matrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for j in i..self.dim {
                g[(i, j)] = free[self.index(i, j)];
            }
        }
        Ok(g)
    }

    pub fn from_matrix(&self, g: &Matrix) -> Result<Vec<f64>> {
        if g.rows() != self.dim || !g.is_upper_triangular() {
            return Err(Error::Invalid("expected an upper-triangular matrix".into()));
        }
        let mut free = Vec::with_capacity(self.num_free());
        for i in 0..self.dim {
            free.extend_from_slice(&g.row(i)[i..]);
        }
        Ok(free)
    }
}

fn check_utpd(g: &Matrix) -> Result<()> {
    if !g.is_upper_triangular() {
        return Err(Error::Invalid("UTPD generator must be square upper triangular".into()));
    }
    if let Some(i) = (0..g.rows()).find(|&i| !(g[(i, i)] > 0.0)) {
        return Err(Error::Domain(format!("UTPD diagonal entry {i} is not positive")));
    }
    Ok(())
}

/// `2^d Π G_ii`.
pub fn utpd_volume(g: &Matrix) -> Result<f64> {
    check_utpd(g)?;
    Ok((0..g.rows()).fold(2f64.powi(g.rows() as i32), |acc, i| acc * g[(i, i)]))
}

/// Gradient and (diagonal) Hessian of `log utpd_volume` over the free variables.
#[derive(Debug, Clone, PartialEq)]
pub struct UtpdLogVolumeDerivatives {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian_diag: Vec<f64>,
}

pub fn utpd_log_volume_grad(g: &Matrix) -> Result<UtpdLogVolumeDerivatives> {
    check_utpd(g)?;
    let d = g.rows();
    let param = UtpdParameterization::new(d, DEFAULT_FLOOR)?;
    let mut gradient = vec![0.0; param.num_free()];
    let mut hessian_diag = vec![0.0; param.num_free()];
    let mut value = d as f64 * std::f64::consts::LN_2;
    for i in 0..d {
        let gii = g[(i, i)];
        let k = param.index(i, i);
        value += gii.ln();
        gradient[k] = 1.0 / gii;
        hessian_diag[k] = -1.0 / (gii * gii);
    }
    Ok(UtpdLogVolumeDerivatives {
        value,
        gradient,
        hessian_diag,
    })
}

/// Parallelotope volumes `2^d sqrt(det(G_Jᵀ G_J))` for every d-subset `J`, in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    dim: usize,
    generators: usize,
    weights: Vec<f64>,
    members: Vec<usize>,
}

impl WeightMap {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight of the subset given by 0-based, strictly increasing column indices.
    pub fn weight(&self, subset: &[usize]) -> Option<f64> {
        if subset.len() != self.dim || subset.iter().any(|&j| j >= self.generators) {
            return None;
        }
        self.weights.get(subset_rank(self.generators, subset)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[usize], f64)> {
        self.members
            .chunks(self.dim.max(1))
            .zip(self.weights.iter().copied())
    }
}

pub fn sfg_precompute_weights(g: &Matrix) -> Result<WeightMap> {
    let (d, p) = (g.rows(), g.cols());
    if p < d {
        return Err(Error::RankDeficient { dim: d, generators: p });
    }
    let scale = 2f64.powi(d as i32);
    let count = binomial(p, d);
    let mut weights = Vec::with_capacity(count);
    let mut members = Vec::with_capacity(count * d);
    for s in combinations(p, d) {
        weights.push(scale * gram_root_det(g, s.indices()));
        members.extend_from_slice(s.indices());
    }
    Ok(WeightMap {
        dim: d,
        generators: p,
        weights,
        members,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SfgParameterization {
    template: Matrix,
    scale_floor: f64,
    weights: Arc<WeightMap>,
}

impl SfgParameterization {
    pub fn new(template: Matrix, scale_floor: f64) -> Result<Self> {
        if !(scale_floor > 0.0) {
            return Err(Error::Invalid("SFG scaling floor must be positive".into()));
        }
        let weights = Arc::new(sfg_precompute_weights(&template)?);
        Ok(Self {
            template,
            scale_floor,
            weights,
        })
    }

    pub fn template(&self) -> &Matrix {
        &self.template
    }

    pub fn dim(&self) -> usize {
        self.template.rows()
    }

    pub fn num_generators(&self) -> usize {
        self.template.cols()
    }

    pub fn scale_floor(&self) -> f64 {
        self.scale_floor
    }

    pub fn weights(&self) -> &WeightMap {
        &self.weights
    }

    /// `G diag(γ)`.
    pub fn generators(&self, gamma: &[f64]) -> Result<Matrix> {
        self.template.scale_columns(gamma)
    }

    fn check(&self, gamma: &[f64]) -> Result<()> {
        if gamma.len() != self.num_generators() {
            return Err(Error::DimensionMismatch(format!(
                "{} scalings for {} generators",
                gamma.len(),
                self.num_generators()
            )));
        }
        if let Some(i) = gamma.iter().position(|&g| !(g > 0.0)) {
            return Err(Error::Domain(format!("scaling {i} is not positive")));
        }
        Ok(())
    }

    pub fn volume(&self, gamma: &[f64]) -> Result<f64> {
        Ok(self.volume_counted(gamma)?.0)
    }

    /// Volume together with the number of multiply-accumulate terms spent on it.
    pub fn volume_counted(&self, gamma: &[f64]) -> Result<(f64, usize)> {
        self.check(gamma)?;
        let mut ops = 0;
        let mut vol = 0.0;
        for (subset, w) in self.weights.iter() {
            let mut term = w;
            for &j in subset {
                term *= gamma[j];
            }
            ops += subset.len();
            vol += term;
        }
        Ok((vol, ops))
    }

    /// Value, gradient and Hessian of `log vol(γ)`.
    pub fn log_volume_grad_hess(&self, gamma: &[f64]) -> Result<(f64, Vec<f64>, Matrix)> {
        self.check(gamma)?;
        let p = gamma.len();
        let inv: Vec<f64> = gamma.iter().map(|g| 1.0 / g).collect();
        let mut vol = 0.0;
        let mut grad = vec![0.0; p];
        let mut hess = Matrix::zeros(p, p);
        for (subset, w) in self.weights.iter() {
            let term = subset.iter().fold(w, |acc, &j| acc * gamma[j]);
            if term == 0.0 {
                continue;
            }
            vol += term;
            for (a, &k) in subset.iter().enumerate() {
                let tk = term * inv[k];
                grad[k] += tk;
                for &l in &subset[a + 1..] {
                    hess[(k, l)] += tk * inv[l];
                }
            }
        }
        if !(vol > 0.0) {
            return Err(Error::Domain("zonotope volume is zero".into()));
        }
        let g: Vec<f64> = grad.iter().map(|v| v / vol).collect();
        for k in 0..p {
            for l in k..p {
                let h = hess[(k, l)] / vol - g[k] * g[l];
                hess[(k, l)] = h;
                hess[(l, k)] = h;
            }
        }
        Ok((vol.ln(), g, hess))
    }
}

pub fn sfg_volume(param: &SfgParameterization, gamma: &[f64]) -> Result<f64> {
    param.volume(gamma)
}

pub fn sfg_log_volume_grad_hess(
    param: &SfgParameterization,
    gamma: &[f64],
) -> Result<(f64, Vec<f64>, Matrix)> {
    param.log_volume_grad_hess(gamma)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Parameterization {
    Utpd(UtpdParameterization),
    Sfg(SfgParameterization),
}

impl Parameterization {
    pub fn dim(&self) -> usize {
        match self {
            Parameterization::Utpd(u) => u.dim(),
            Parameterization::Sfg(s) => s.dim(),
        }
    }

    pub fn num_free(&self) -> usize {
        match self {
            Parameterization::Utpd(u) => u.num_free(),
            Parameterization::Sfg(s) => s.num_generators(),
        }
    }

    /// Free-variable positions whose sign is constrained to be positive.
    pub fn positive_indices(&self) -> Vec<usize> {
        match self {
            Parameterization::Utpd(u) => u.diagonal_indices(),
            Parameterization::Sfg(s) => (0..s.num_generators()).collect(),
        }
    }

    pub fn floor(&self) -> f64 {
        match self {
            Parameterization::Utpd(u) => u.diag_floor(),
            Parameterization::Sfg(s) => s.scale_floor(),
        }
    }

    /// Effective generator matrix for the given free variables.
    pub fn generators(&self, free: &[f64]) -> Result<Matrix> {
        match self {
            Parameterization::Utpd(u) => u.to_matrix(free),
            Parameterization::Sfg(s) => s.generators(free),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectiveKind {
    /// `Σ γ_i`
    #[serde(rename = "ss")]
    SumOfScalars,
    /// `Σ log γ_i`
    #[serde(rename = "slgs")]
    SumOfLogScalars,
    /// log of the true volume
    #[serde(rename = "lgv")]
    LogVolume,
}

impl ObjectiveKind {
    pub fn tag(&self) -> &'static str {
        match self {
            ObjectiveKind::SumOfScalars => "ss",
            ObjectiveKind::SumOfLogScalars => "slgs",
            ObjectiveKind::LogVolume => "lgv",
        }
    }
}

/// Value, gradient and dense Hessian of an objective over the free variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Matrix,
}

/// A concave objective bound to a parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    kind: ObjectiveKind,
    param: Parameterization,
}

impl Objective {
    /// The scalar heuristics only make sense for SFG scalings.
    pub fn new(kind: ObjectiveKind, param: Parameterization) -> Result<Self> {
        if matches!(param, Parameterization::Utpd(_)) && kind != ObjectiveKind::LogVolume {
            return Err(Error::Unsupported(format!(
                "objective {} requires the SFG parameterization",
                kind.tag()
            )));
        }
        Ok(Self { kind, param })
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    pub fn parameterization(&self) -> &Parameterization {
        &self.param
    }

    pub fn num_vars(&self) -> usize {
        self.param.num_free()
    }

    fn check_domain(&self, free: &[f64]) -> Result<()> {
        if free.len() != self.num_vars() {
            return Err(Error::DimensionMismatch(format!(
                "{} objective variables, expected {}",
                free.len(),
                self.num_vars()
            )));
        }
        if let Some(i) = self.param.positive_indices().into_iter().find(|&i| !(free[i] > 0.0)) {
            return Err(Error::Domain(format!("variable {i} must be positive")));
        }
        Ok(())
    }

    pub fn value(&self, free: &[f64]) -> Result<f64> {
        self.check_domain(free)?;
        match (self.kind, &self.param) {
            (ObjectiveKind::SumOfScalars, _) => Ok(free.iter().sum()),
            (ObjectiveKind::SumOfLogScalars, _) => Ok(free.iter().map(|g| g.ln()).sum()),
            (ObjectiveKind::LogVolume, Parameterization::Sfg(s)) => Ok(s.volume(free)?.ln()),
            (ObjectiveKind::LogVolume, Parameterization::Utpd(u)) => Ok(u
                .diagonal_indices()
                .iter()
                .fold(u.dim() as f64 * std::f64::consts::LN_2, |acc, &k| acc + free[k].ln())),
        }
    }

    pub fn eval(&self, free: &[f64]) -> Result<Evaluation> {
        self.check_domain(free)?;
        let n = free.len();
        match (self.kind, &self.param) {
            (ObjectiveKind::SumOfScalars, _) => Ok(Evaluation {
                value: free.iter().sum(),
                gradient: vec![1.0; n],
                hessian: Matrix::zeros(n, n),
            }),
            (ObjectiveKind::SumOfLogScalars, _) => Ok(Evaluation {
                value: free.iter().map(|g| g.ln()).sum(),
                gradient: free.iter().map(|g| 1.0 / g).collect(),
                hessian: Matrix::from_diag(&free.iter().map(|g| -1.0 / (g * g)).collect::<Vec<_>>()),
            }),
            (ObjectiveKind::LogVolume, Parameterization::Sfg(s)) => {
                let (value, gradient, hessian) = s.log_volume_grad_hess(free)?;
                Ok(Evaluation {
                    value,
                    gradient,
                    hessian,
                })
            }
            (ObjectiveKind::LogVolume, Parameterization::Utpd(u)) => {
                let d = utpd_log_volume_grad(&u.to_matrix(free)?)?;
                Ok(Evaluation {
                    value: d.value,
                    gradient: d.gradient,
                    hessian: Matrix::from_diag(&d.hessian_diag),
                })
            }
        }
    }
}

pub fn objective_eval(obj: &Objective, free: &[f64]) -> Result<Evaluation> {
    obj.eval(free)
}

/// Parameterization/objective pairs compared by the experiment harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "SFG+ss")]
    SfgSs,
    #[serde(rename = "SFG+slgs")]
    SfgSlgs,
    #[serde(rename = "SFG+lgv")]
    SfgLgv,
    #[serde(rename = "UTPD+lgv")]
    UtpdLgv,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::SfgSs, Method::SfgSlgs, Method::SfgLgv, Method::UtpdLgv];

    pub fn label(&self) -> &'static str {
        match self {
            Method::SfgSs => "SFG+ss",
            Method::SfgSlgs => "SFG+slgs",
            Method::SfgLgv => "SFG+lgv",
            Method::UtpdLgv => "UTPD+lgv",
        }
    }

    pub fn objective(&self) -> ObjectiveKind {
        match self {
            Method::SfgSs => ObjectiveKind::SumOfScalars,
            Method::SfgSlgs => ObjectiveKind::SumOfLogScalars,
            Method::SfgLgv | Method::UtpdLgv => ObjectiveKind::LogVolume,
        }
    }

    pub fn uses_template(&self) -> bool {
        !matches!(self, Method::UtpdLgv)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Invalid(format!("unknown method {s:?}")))
    }
}
