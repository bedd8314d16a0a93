//! Finite-horizon invariance constraints for zonotopes under `x(t+1) = A x(t) + w`.
//!
//! A zonotope `⟨c | G⟩` whose reach sets `⟨A^t c + drift_t | A^t G⟩` stay in the box
//! `[x̲, x̄]` for `t = 0..=T` is invariant over the horizon. These conditions are
//! assembled here into a sparse system `C z ≤ b` over the decision variables of
//! each parameterization.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::numerics::{power_chain, Matrix};
use crate::params::{Objective, ObjectiveKind, Parameterization};
use crate::zonotope::{AxisBox, Zonotope};

/// Tolerance used when certifying invariance directly from the reach recursion.
pub const CERTIFICATE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct AffineSystem {
    a: Matrix,
    w: Vec<f64>,
}

impl AffineSystem {
    pub fn new(a: Matrix, w: Vec<f64>) -> Result<Self> {
        if !a.is_square() || a.rows() != w.len() {
            return Err(Error::DimensionMismatch(format!(
                "evolution matrix {}x{} with drift of length {}",
                a.rows(),
                a.cols(),
                w.len()
            )));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite drift".into()));
        }
        Ok(Self { a, w })
    }

    pub fn autonomous(a: Matrix) -> Result<Self> {
        let d = a.rows();
        Self::new(a, vec![0.0; d])
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn step(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.a.mul_vec(x).expect("state dimension");
        y.iter_mut().zip(&self.w).for_each(|(v, w)| *v += w);
        y
    }
}

/// `Σ_{s=0}^{t-1} A^{t-1-s} w`, the state reached from the origin after `t` steps.
pub fn drift_sum(a: &Matrix, w: &[f64], t: usize) -> Result<Vec<f64>> {
    if !a.is_square() || a.rows() != w.len() {
        return Err(Error::DimensionMismatch("drift sum".into()));
    }
    let mut v = vec![0.0; w.len()];
    for _ in 0..t {
        v = a.mul_vec(&v)?;
        v.iter_mut().zip(w).for_each(|(x, y)| *x += y);
    }
    Ok(v)
}

/// Reach set at time `t` of the initial zonotope `z`.
pub fn reach_zonotope(system: &AffineSystem, z: &Zonotope, t: usize) -> Result<Zonotope> {
    if z.dim() != system.dim() {
        return Err(Error::DimensionMismatch("zonotope and system dimensions".into()));
    }
    let power = power_chain(system.a(), t)?.pop().expect("non-empty chain");
    let drift = drift_sum(system.a(), system.w(), t)?;
    z.affine_image(&power, &drift)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceProblem {
    pub system: AffineSystem,
    pub bounds: AxisBox,
    pub horizon: usize,
    pub parameterization: Parameterization,
    pub objective: ObjectiveKind,
}

impl InvarianceProblem {
    pub fn new(
        system: AffineSystem,
        bounds: AxisBox,
        horizon: usize,
        parameterization: Parameterization,
        objective: ObjectiveKind,
    ) -> Result<Self> {
        let d = system.dim();
        if bounds.dim() != d || parameterization.dim() != d {
            return Err(Error::DimensionMismatch(format!(
                "system dimension {d}, box dimension {}, parameterization dimension {}",
                bounds.dim(),
                parameterization.dim()
            )));
        }
        Objective::new(objective, parameterization.clone())?;
        Ok(Self {
            system,
            bounds,
            horizon,
            parameterization,
            objective,
        })
    }

    pub fn dim(&self) -> usize {
        self.system.dim()
    }

    pub fn objective(&self) -> Objective {
        Objective::new(self.objective, self.parameterization.clone())
            .expect("validated at construction")
    }

    /// Builds the zonotope encoded by a decision vector of [`assemble`].
    pub fn decode(&self, z: &[f64]) -> Result<Zonotope> {
        let d = self.dim();
        let k = self.parameterization.num_free();
        if z.len() < d + k {
            return Err(Error::DimensionMismatch("decision vector too short".into()));
        }
        Zonotope::new(z[..d].to_vec(), self.parameterization.generators(&z[d..d + k])?)
    }
}

/// Named contiguous range of decision variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub name: String,
    pub range: Range<usize>,
}

/// Where each group of decision variables lives in `z`.
///
/// `aux_groups` lists ranges of auxiliary variables that never share a
/// constraint row with another auxiliary group and do not enter the objective;
/// the solver eliminates them blockwise.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VariableLayout {
    segments: Vec<Segment>,
    aux_groups: Vec<Range<usize>>,
    objective_range: Range<usize>,
}

impl VariableLayout {
    pub fn new(
        segments: Vec<Segment>,
        aux_groups: Vec<Range<usize>>,
        objective_range: Range<usize>,
    ) -> Self {
        Self {
            segments,
            aux_groups,
            objective_range,
        }
    }

    /// A layout with a single segment and no auxiliary groups.
    pub fn flat(n: usize) -> Self {
        Self::new(
            vec![Segment {
                name: "z".into(),
                range: 0..n,
            }],
            Vec::new(),
            0..0,
        )
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, name: &str) -> Option<Range<usize>> {
        self.segments.iter().find(|s| s.name == name).map(|s| s.range.clone())
    }

    pub fn slice<'a>(&self, z: &'a [f64], name: &str) -> Option<&'a [f64]> {
        self.segment(name).and_then(|r| z.get(r))
    }

    pub fn aux_groups(&self) -> &[Range<usize>] {
        &self.aux_groups
    }

    pub fn objective_range(&self) -> Range<usize> {
        self.objective_range.clone()
    }

    pub fn num_vars(&self) -> usize {
        self.segments.iter().map(|s| s.range.end).max().unwrap_or(0)
    }
}

/// `{ z : C z ≤ b }` with `C` stored by sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearInequalitySystem {
    num_vars: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    rhs: Vec<f64>,
    layout: VariableLayout,
}

impl LinearInequalitySystem {
    pub fn new(num_vars: usize, layout: VariableLayout) -> Self {
        Self {
            num_vars,
            row_ptr: vec![0],
            cols: Vec::new(),
            vals: Vec::new(),
            rhs: Vec::new(),
            layout,
        }
    }

    pub fn from_dense(c: &Matrix, b: &[f64]) -> Result<Self> {
        if c.rows() != b.len() {
            return Err(Error::DimensionMismatch("constraint matrix and rhs".into()));
        }
        let mut sys = Self::new(c.cols(), VariableLayout::flat(c.cols()));
        for (i, &bi) in b.iter().enumerate() {
            let row: Vec<(usize, f64)> = c.row(i).iter().copied().enumerate().collect();
            sys.push_row(&row, bi);
        }
        Ok(sys)
    }

    /// Appends `Σ coeff·z[idx] ≤ rhs`; duplicate indices are summed and zeros dropped.
    pub fn push_row(&mut self, entries: &[(usize, f64)], rhs: f64) {
        let mut sorted: Vec<(usize, f64)> = entries.to_vec();
        sorted.sort_by_key(|e| e.0);
        let mut last: Option<usize> = None;
        let start = self.cols.len();
        for (j, v) in sorted {
            assert!(j < self.num_vars, "variable index out of range");
            if last == Some(j) {
                *self.vals.last_mut().expect("previous entry") += v;
            } else {
                self.cols.push(j);
                self.vals.push(v);
                last = Some(j);
            }
        }
        // drop exact zeros left after merging
        let mut k = start;
        for i in start..self.cols.len() {
            if self.vals[i] != 0.0 {
                self.cols[k] = self.cols[i];
                self.vals[k] = self.vals[i];
                k += 1;
            }
        }
        self.cols.truncate(k);
        self.vals.truncate(k);
        self.row_ptr.push(k);
        self.rhs.push(rhs);
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn layout(&self) -> &VariableLayout {
        &self.layout
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn row_dot(&self, i: usize, z: &[f64]) -> f64 {
        let (idx, val) = self.row(i);
        idx.iter().zip(val).map(|(&j, v)| v * z[j]).sum()
    }

    /// `C z`.
    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        (0..self.num_rows()).map(|i| self.row_dot(i, z)).collect()
    }

    /// `b − C z`.
    pub fn slacks(&self, z: &[f64]) -> Vec<f64> {
        (0..self.num_rows()).map(|i| self.rhs[i] - self.row_dot(i, z)).collect()
    }

    pub fn min_slack(&self, z: &[f64]) -> f64 {
        self.slacks(z).into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn is_strictly_feasible(&self, z: &[f64]) -> bool {
        self.slacks(z).iter().all(|&s| s > 0.0)
    }

    pub fn to_dense(&self) -> Matrix {
        let mut c = Matrix::zeros(self.num_rows(), self.num_vars);
        for i in 0..self.num_rows() {
            let (idx, val) = self.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                c[(i, j)] = v;
            }
        }
        c
    }

    /// Checks that no row couples two auxiliary groups and that the objective avoids them.
    pub fn validate_layout(&self) -> Result<()> {
        let group_of = self.group_index();
        for i in 0..self.num_rows() {
            let mut seen: Option<usize> = None;
            for &j in self.row(i).0 {
                if let Some(g) = group_of[j] {
                    match seen {
                        Some(s) if s != g => {
                            return Err(Error::Invalid(format!(
                                "row {i} couples auxiliary groups {s} and {g}"
                            )))
                        }
                        _ => seen = Some(g),
                    }
                }
            }
        }
        if self.layout.objective_range().any(|j| group_of.get(j).copied().flatten().is_some()) {
            return Err(Error::Invalid("objective depends on auxiliary variables".into()));
        }
        Ok(())
    }

    /// Auxiliary group of every variable, `None` for core variables.
    pub fn group_index(&self) -> Vec<Option<usize>> {
        let mut group_of = vec![None; self.num_vars];
        for (g, r) in self.layout.aux_groups().iter().enumerate() {
            for j in r.clone() {
                group_of[j] = Some(g);
            }
        }
        group_of
    }
}

fn sfg_template(problem: &InvarianceProblem) -> Result<&Matrix> {
    match &problem.parameterization {
        Parameterization::Sfg(s) => Ok(s.template()),
        Parameterization::Utpd(_) => Err(Error::Invalid("problem does not use SFG".into())),
    }
}

/// Constraints over `(c, γ)`: `2d(T+1)` box rows plus `p` scaling floors.
pub fn assemble_sfg(problem: &InvarianceProblem) -> Result<LinearInequalitySystem> {
    let template = sfg_template(problem)?;
    let d = problem.dim();
    let p = template.cols();
    let floor = problem.parameterization.floor();
    let layout = VariableLayout::new(
        vec![
            Segment { name: "c".into(), range: 0..d },
            Segment { name: "gamma".into(), range: d..d + p },
        ],
        Vec::new(),
        d..d + p,
    );
    let mut sys = LinearInequalitySystem::new(d + p, layout);
    let powers = power_chain(problem.system.a(), problem.horizon)?;
    let mut drift = vec![0.0; d];
    let mut row = Vec::with_capacity(d + p);
    for (t, pw) in powers.iter().enumerate() {
        if t > 0 {
            drift = problem.system.step(&drift);
        }
        let widths = pw.matmul(template)?.abs();
        for i in 0..d {
            for sign in [1.0, -1.0] {
                row.clear();
                row.extend((0..d).map(|k| (k, sign * pw[(i, k)])));
                row.extend((0..p).map(|j| (d + j, widths[(i, j)])));
                let rhs = if sign > 0.0 {
                    problem.bounds.upper()[i] - drift[i]
                } else {
                    drift[i] - problem.bounds.lower()[i]
                };
                sys.push_row(&row, rhs);
            }
        }
    }
    for j in 0..p {
        sys.push_row(&[(d + j, -1.0)], -floor);
    }
    Ok(sys)
}

/// Offsets of the UTPD lifted variables.
#[derive(Debug, Clone, Copy)]
struct UtpdOffsets {
    d: usize,
    g: usize,
    aux0: usize,
    aux: usize,
}

impl UtpdOffsets {
    fn new(d: usize) -> Self {
        let g = d;
        let aux0 = g + d * (d + 1) / 2;
        let aux = aux0 + d * (d - 1) / 2;
        Self { d, g, aux0, aux }
    }

    fn g(&self, i: usize, j: usize) -> usize {
        self.g + i * self.d - i * (i + 1) / 2 + j
    }

    /// Bound on `|G_ij|`, `i < j`.
    fn aux0(&self, i: usize, j: usize) -> usize {
        let before: usize = (0..i).map(|r| self.d - 1 - r).sum();
        self.aux0 + before + (j - i - 1)
    }

    /// Bound on `|(A^t G)_ij|`, `t ≥ 1`.
    fn aux(&self, t: usize, i: usize, j: usize) -> usize {
        self.aux + (t - 1) * self.d * self.d + i * self.d + j
    }

    fn total(&self, horizon: usize) -> usize {
        self.aux + horizon * self.d * self.d
    }
}

/// Constraints over `(c, upper-triangular G, auxiliaries)`.
///
/// The absolute values `|A^t G|` are lifted exactly: each entry of `A^t G` gets an
/// auxiliary bound `M ≥ ±(A^t G)_ij` and the box rows use the row sums of `M`.
/// At `t = 0` the diagonal of `G` is known to be positive, so only off-diagonal
/// entries get auxiliaries.
pub fn assemble_utpd(problem: &InvarianceProblem) -> Result<LinearInequalitySystem> {
    if !matches!(problem.parameterization, Parameterization::Utpd(_)) {
        return Err(Error::Invalid("problem does not use UTPD".into()));
    }
    let d = problem.dim();
    let horizon = problem.horizon;
    let off = UtpdOffsets::new(d);
    let n = off.total(horizon);

    let mut segments = vec![
        Segment { name: "c".into(), range: 0..d },
        Segment { name: "G".into(), range: off.g..off.aux0 },
        Segment { name: "aux_t0".into(), range: off.aux0..off.aux },
    ];
    let mut groups = Vec::new();
    for i in 0..d.saturating_sub(1) {
        groups.push(off.aux0(i, i + 1)..off.aux0(i, d - 1) + 1);
    }
    for t in 1..=horizon {
        segments.push(Segment {
            name: format!("aux_t{t}"),
            range: off.aux(t, 0, 0)..off.aux(t, d - 1, d - 1) + 1,
        });
        for i in 0..d {
            groups.push(off.aux(t, i, 0)..off.aux(t, i, d - 1) + 1);
        }
    }
    let layout = VariableLayout::new(segments, groups, off.g..off.aux0);
    let mut sys = LinearInequalitySystem::new(n, layout);
    let (lower, upper) = (problem.bounds.lower(), problem.bounds.upper());

    // t = 0
    for i in 0..d {
        for sign in [1.0, -1.0] {
            let mut row = vec![(i, sign), (off.g(i, i), 1.0)];
            row.extend((i + 1..d).map(|j| (off.aux0(i, j), 1.0)));
            let rhs = if sign > 0.0 { upper[i] } else { -lower[i] };
            sys.push_row(&row, rhs);
        }
    }
    for i in 0..d {
        for j in i + 1..d {
            for sign in [1.0, -1.0] {
                sys.push_row(&[(off.g(i, j), sign), (off.aux0(i, j), -1.0)], 0.0);
            }
        }
    }

    let powers = power_chain(problem.system.a(), horizon)?;
    let mut drift = vec![0.0; d];
    for (t, pw) in powers.iter().enumerate().skip(1) {
        drift = problem.system.step(&drift);
        for i in 0..d {
            for sign in [1.0, -1.0] {
                let mut row: Vec<(usize, f64)> = (0..d).map(|k| (k, sign * pw[(i, k)])).collect();
                row.extend((0..d).map(|j| (off.aux(t, i, j), 1.0)));
                let rhs = if sign > 0.0 {
                    upper[i] - drift[i]
                } else {
                    drift[i] - lower[i]
                };
                sys.push_row(&row, rhs);
            }
        }
        // (A^t G)_ij = Σ_{k ≤ j} (A^t)_ik G_kj
        for i in 0..d {
            for j in 0..d {
                for sign in [1.0, -1.0] {
                    let mut row: Vec<(usize, f64)> =
                        (0..=j).map(|k| (off.g(k, j), sign * pw[(i, k)])).collect();
                    row.push((off.aux(t, i, j), -1.0));
                    sys.push_row(&row, 0.0);
                }
            }
        }
    }
    let floor = problem.parameterization.floor();
    for i in 0..d {
        sys.push_row(&[(off.g(i, i), -1.0)], -floor);
    }
    Ok(sys)
}

pub fn assemble(problem: &InvarianceProblem) -> Result<LinearInequalitySystem> {
    match problem.parameterization {
        Parameterization::Sfg(_) => assemble_sfg(problem),
        Parameterization::Utpd(_) => assemble_utpd(problem),
    }
}

/// Candidate strictly feasible point: box-midpoint center and a uniformly scaled
/// generator, shrunk until every row has positive slack.
pub fn warm_start(problem: &InvarianceProblem, sys: &LinearInequalitySystem) -> Option<Vec<f64>> {
    let d = problem.dim();
    let floor = problem.parameterization.floor();
    let half = (0..d)
        .map(|i| 0.5 * (problem.bounds.upper()[i] - problem.bounds.lower()[i]))
        .fold(f64::INFINITY, f64::min);
    let center = problem.bounds.midpoint();
    let powers = match &problem.parameterization {
        Parameterization::Utpd(_) => power_chain(problem.system.a(), problem.horizon).ok()?,
        Parameterization::Sfg(_) => Vec::new(),
    };
    let mut scale = half;
    while scale > 2.0 * floor {
        let mut z = vec![0.0; sys.num_vars()];
        z[..d].copy_from_slice(&center);
        match &problem.parameterization {
            Parameterization::Sfg(s) => {
                z[d..d + s.num_generators()].iter_mut().for_each(|g| *g = scale);
            }
            Parameterization::Utpd(_) => {
                let off = UtpdOffsets::new(d);
                let pad = 0.1 * scale / d as f64;
                for i in 0..d {
                    z[off.g(i, i)] = scale;
                    for j in i + 1..d {
                        z[off.aux0(i, j)] = pad;
                    }
                }
                for (t, pw) in powers.iter().enumerate().skip(1) {
                    for i in 0..d {
                        for j in 0..d {
                            z[off.aux(t, i, j)] = scale * pw[(i, j)].abs() + pad;
                        }
                    }
                }
            }
        }
        if sys.is_strictly_feasible(&z) {
            return Some(z);
        }
        scale *= 0.5;
    }
    None
}

/// Result of evaluating the invariance conditions directly along the reach recursion.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CertificateReport {
    /// Largest amount by which an interval hull of a reach set leaves the box.
    pub max_violation: f64,
    /// Time step attaining `max_violation`.
    pub worst_time: usize,
    /// Multiply-accumulate operations spent propagating centers and generators.
    pub ops: usize,
}

/// Evaluates `A^t c + drift_t ∓ |A^t G|·1` against the box for `t = 0..=T`.
pub fn certificate_report(
    system: &AffineSystem,
    bounds: &AxisBox,
    horizon: usize,
    zono: &Zonotope,
) -> Result<CertificateReport> {
    let d = system.dim();
    if zono.dim() != d || bounds.dim() != d {
        return Err(Error::DimensionMismatch("certificate dimensions".into()));
    }
    let p = zono.num_generators();
    let mut center = zono.center().to_vec();
    let mut gens = zono.generators().clone();
    let mut report = CertificateReport {
        max_violation: 0.0,
        worst_time: 0,
        ops: 0,
    };
    for t in 0..=horizon {
        if t > 0 {
            center = system.step(&center);
            gens = system.a().matmul(&gens)?;
            report.ops += d * d * p + d * d;
        }
        let current = Zonotope::new(center.clone(), gens.clone())?;
        let hull = current.interval_hull();
        let viol = (0..d)
            .map(|i| {
                (bounds.lower()[i] - hull.lower()[i]).max(hull.upper()[i] - bounds.upper()[i])
            })
            .fold(f64::NEG_INFINITY, f64::max);
        if viol > report.max_violation {
            report.max_violation = viol;
            report.worst_time = t;
        }
    }
    Ok(report)
}

/// `true` when the zonotope satisfies the invariance conditions within [`CERTIFICATE_TOL`].
pub fn check_invariance_certificate(problem: &InvarianceProblem, zono: &Zonotope) -> bool {
    certificate_report(&problem.system, &problem.bounds, problem.horizon, zono)
        .map(|r| r.max_violation <= CERTIFICATE_TOL)
        .unwrap_or(false)
}
