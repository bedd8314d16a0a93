//! Zonotopes `⟨c | G⟩ = { c + G λ : λ ∈ [-1, 1]^p }` and axis-aligned boxes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{combinations, det, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ZonotopeRepr", into = "ZonotopeRepr")]
pub struct Zonotope {
    center: Vec<f64>,
    generators: Matrix,
}

#[derive(Serialize, Deserialize)]
struct ZonotopeRepr {
    center: Vec<f64>,
    generators: Matrix,
}

impl TryFrom<ZonotopeRepr> for Zonotope {
    type Error = Error;
    fn try_from(r: ZonotopeRepr) -> Result<Self> {
        Zonotope::new(r.center, r.generators)
    }
}

impl From<Zonotope> for ZonotopeRepr {
    fn from(z: Zonotope) -> Self {
        ZonotopeRepr {
            center: z.center,
            generators: z.generators,
        }
    }
}

impl Zonotope {
    pub fn new(center: Vec<f64>, generators: Matrix) -> Result<Self> {
        if generators.cols() == 0 {
            return Err(Error::Invalid("zonotope needs at least one generator".into()));
        }
        if center.len() != generators.rows() {
            return Err(Error::DimensionMismatch(format!(
                "center of length {} with {} generator rows",
                center.len(),
                generators.rows()
            )));
        }
        if center.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite center".into()));
        }
        Ok(Self { center, generators })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn generators(&self) -> &Matrix {
        &self.generators
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn num_generators(&self) -> usize {
        self.generators.cols()
    }

    /// Generator count over dimension.
    pub fn order(&self) -> f64 {
        self.num_generators() as f64 / self.dim() as f64
    }

    pub fn volume(&self) -> Result<f64> {
        volume_exact(&self.generators)
    }

    /// The point `c + G λ`.
    pub fn point(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        let g = self.generators.mul_vec(lambda)?;
        Ok(self.center.iter().zip(g).map(|(c, v)| c + v).collect())
    }

    /// `⟨M c + b | M G⟩`.
    pub fn affine_image(&self, m: &Matrix, b: &[f64]) -> Result<Zonotope> {
        if m.cols() != self.dim() || b.len() != m.rows() {
            return Err(Error::DimensionMismatch(format!(
                "map {}x{} with offset {} applied to dimension {}",
                m.rows(),
                m.cols(),
                b.len(),
                self.dim()
            )));
        }
        let center = m
            .mul_vec(&self.center)?
            .into_iter()
            .zip(b)
            .map(|(x, y)| x + y)
            .collect();
        Zonotope::new(center, m.matmul(&self.generators)?)
    }

    pub fn half_widths(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| self.generators.row(i).iter().map(|v| v.abs()).sum())
            .collect()
    }

    pub fn interval_hull(&self) -> AxisBox {
        let h = self.half_widths();
        AxisBox {
            lower: self.center.iter().zip(&h).map(|(c, r)| c - r).collect(),
            upper: self.center.iter().zip(&h).map(|(c, r)| c + r).collect(),
        }
    }

    /// Exact containment test; a zonotope lies in a box iff its interval hull does.
    pub fn contained_in(&self, bounds: &AxisBox) -> Result<bool> {
        if bounds.dim() != self.dim() {
            return Err(Error::DimensionMismatch("box and zonotope dimensions".into()));
        }
        let hull = self.interval_hull();
        Ok((0..self.dim()).all(|i| hull.lower[i] >= bounds.lower[i] && hull.upper[i] <= bounds.upper[i]))
    }
}

/// `{ x : lower ≤ x ≤ upper }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AxisBoxRepr", into = "AxisBoxRepr")]
pub struct AxisBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct AxisBoxRepr {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<AxisBoxRepr> for AxisBox {
    type Error = Error;
    fn try_from(r: AxisBoxRepr) -> Result<Self> {
        AxisBox::new(r.lower, r.upper)
    }
}

impl From<AxisBox> for AxisBoxRepr {
    fn from(b: AxisBox) -> Self {
        AxisBoxRepr {
            lower: b.lower,
            upper: b.upper,
        }
    }
}

impl AxisBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch("box bound lengths differ".into()));
        }
        if lower.iter().chain(&upper).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("box bounds must be finite".into()));
        }
        if let Some(i) = (0..lower.len()).find(|&i| lower[i] > upper[i]) {
            return Err(Error::Invalid(format!(
                "box lower bound exceeds upper bound at coordinate {i}"
            )));
        }
        Ok(Self { lower, upper })
    }

    /// `[-r, r]^d`.
    pub fn symmetric(dim: usize, r: f64) -> Self {
        Self {
            lower: vec![-r; dim],
            upper: vec![r; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }

    /// Largest amount by which `x` leaves the box (0 when inside).
    pub fn violation(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| (l - v).max(v - u).max(0.0))
            .fold(0.0, f64::max)
    }
}

/// `sqrt(det(G_Jᵀ G_J))` for the columns `subset` of `g`, clamped at zero.
pub fn gram_root_det(g: &Matrix, subset: &[usize]) -> f64 {
    let sub = g.select_columns(subset);
    if sub.is_square() {
        // sqrt(det(GᵀG)) = |det G| without squaring the condition number
        return det(&sub).expect("square").abs();
    }
    let gram = sub.transpose().matmul(&sub).expect("square gram");
    det(&gram).expect("square gram").max(0.0).sqrt()
}

/// Full-dimensional volume `2^d Σ_J sqrt(det(G_Jᵀ G_J))` over all d-column subsets `J`.
pub fn volume_exact(g: &Matrix) -> Result<f64> {
    let (d, p) = (g.rows(), g.cols());
    if p < d {
        return Err(Error::RankDeficient { dim: d, generators: p });
    }
    let sum: f64 = combinations(p, d).map(|s| gram_root_det(g, s.indices())).sum();
    Ok(2f64.powi(d as i32) * sum)
}
