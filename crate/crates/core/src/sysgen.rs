//! Random benchmark instances: stable discrete-time dynamics, template
//! generators and per-trial seed derivation.
//!
//! Continuous-time eigenvalues are drawn as real values in `[−2, −0.1]` or, with
//! probability one half whenever two slots remain, as a complex pair with real
//! part in `[−2, −0.1]` and imaginary part in `[0, 2]`. The eigenbasis is a
//! random orthogonal matrix and the system is discretized exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invariance::{AffineSystem, InvarianceProblem};
use crate::numerics::{block_expm, norm2, EigenBlock, Matrix};
use crate::params::{Method, Parameterization, SfgParameterization, UtpdParameterization, DEFAULT_FLOOR};
use crate::zonotope::AxisBox;

pub const DEFAULT_DT: f64 = 0.2;
pub const DEFAULT_HORIZON: usize = 30;

/// Short description of the eigenvalue distribution, stored with experiment output.
pub const ENSEMBLE: &str = "real eigenvalues U[-2,-0.1]; complex pairs (p=0.5 per 2-slot) re U[-2,-0.1], im U[0,2]; \
     orthogonal eigenbasis from Gaussian QR; exact discretization";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub dim: usize,
    pub generators: usize,
    pub trial: usize,
    pub master_seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_horizon() -> usize {
    DEFAULT_HORIZON
}

impl TrialSpec {
    pub fn new(dim: usize, generators: usize, trial: usize, master_seed: u64) -> Result<Self> {
        let spec = Self {
            dim,
            generators,
            trial,
            master_seed,
            dt: DEFAULT_DT,
            horizon: DEFAULT_HORIZON,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Invalid("trial dimension must be positive".into()));
        }
        if self.generators < self.dim {
            return Err(Error::RankDeficient {
                dim: self.dim,
                generators: self.generators,
            });
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Invalid("dt must be positive".into()));
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        derive_seed(self.master_seed, self.dim, self.generators, self.trial)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Per-trial seed as a pure function of the master seed and the trial coordinates.
pub fn derive_seed(master: u64, dim: usize, generators: usize, trial: usize) -> u64 {
    let mut h = splitmix64(master);
    for v in [dim as u64, generators as u64, trial as u64] {
        h = splitmix64(h ^ v);
    }
    h
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Orthogonal factor of the QR decomposition of a standard Gaussian matrix,
/// normalized so that `R` has a positive diagonal.
pub fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    let raw: Vec<f64> = (0..d * d).map(|_| gaussian(rng)).collect();
    for j in 0..d {
        let mut v: Vec<f64> = (0..d).map(|i| raw[i * d + j]).collect();
        // Gram–Schmidt twice keeps the basis orthogonal to round-off
        for _ in 0..2 {
            for q in &cols {
                let r: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= r * qi;
                }
            }
        }
        let n = norm2(&v);
        cols.push(v.into_iter().map(|x| x / n).collect());
    }
    let mut q = Matrix::zeros(d, d);
    for (j, c) in cols.iter().enumerate() {
        for i in 0..d {
            q[(i, j)] = c[i];
        }
    }
    q
}

pub fn random_eigen_blocks(d: usize, rng: &mut ChaCha8Rng) -> Vec<EigenBlock> {
    let mut blocks = Vec::new();
    let mut filled = 0;
    while filled < d {
        if d - filled >= 2 && rng.random_bool(0.5) {
            let re = rng.random_range(-2.0..=-0.1);
            let im = rng.random_range(0.0..=2.0);
            blocks.push(EigenBlock::Complex { re, im });
            filled += 2;
        } else {
            blocks.push(EigenBlock::Real(rng.random_range(-2.0..=-0.1)));
            filled += 1;
        }
    }
    blocks
}

/// `exp(dt·Q Λ Qᵀ)` for random stable `Λ` and orthogonal `Q`.
pub fn random_stable_a(d: usize, dt: f64, rng: &mut ChaCha8Rng) -> Result<Matrix> {
    if d == 0 {
        return Err(Error::Invalid("dimension must be positive".into()));
    }
    let blocks = random_eigen_blocks(d, rng);
    let q = random_orthogonal(d, rng);
    block_expm(&blocks, &q, dt)
}

/// Identity in the first `d` columns, random unit vectors in the rest.
pub fn template_generators(d: usize, p: usize, rng: &mut ChaCha8Rng) -> Result<Matrix> {
    if p < d {
        return Err(Error::RankDeficient { dim: d, generators: p });
    }
    let mut g = Matrix::zeros(d, p);
    for i in 0..d {
        g[(i, i)] = 1.0;
    }
    for j in d..p {
        let v: Vec<f64> = (0..d).map(|_| gaussian(rng)).collect();
        let n = norm2(&v);
        for i in 0..d {
            g[(i, j)] = v[i] / n;
        }
    }
    Ok(g)
}

/// Random data shared by every method of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialInstance {
    pub spec: TrialSpec,
    pub seed: u64,
    pub a: Matrix,
    pub template: Matrix,
}

impl TrialInstance {
    pub fn generate(spec: &TrialSpec) -> Result<Self> {
        spec.validate()?;
        let seed = spec.seed();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_stable_a(spec.dim, spec.dt, &mut rng)?;
        let template = template_generators(spec.dim, spec.generators, &mut rng)?;
        Ok(Self {
            spec: spec.clone(),
            seed,
            a,
            template,
        })
    }

    pub fn problem(&self, method: Method) -> Result<InvarianceProblem> {
        let d = self.spec.dim;
        let param = if method.uses_template() {
            Parameterization::Sfg(SfgParameterization::new(self.template.clone(), DEFAULT_FLOOR)?)
        } else {
            Parameterization::Utpd(UtpdParameterization::new(d, DEFAULT_FLOOR)?)
        };
        InvarianceProblem::new(
            AffineSystem::autonomous(self.a.clone())?,
            AxisBox::symmetric(d, 1.0),
            self.spec.horizon,
            param,
            method.objective(),
        )
    }
}

pub fn make_trial(spec: &TrialSpec, method: Method) -> Result<InvarianceProblem> {
    TrialInstance::generate(spec)?.problem(method)
}
