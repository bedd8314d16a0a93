//! Log-barrier interior-point maximizer for concave objectives over `C z ≤ b`.
//!
//! Each stage minimizes `−f(z) − μ Σ log(b − C z)` with damped Newton steps and
//! a backtracking line search that keeps iterates strictly feasible, then
//! shrinks `μ`. Auxiliary variable groups declared in the [`VariableLayout`] are
//! eliminated blockwise from every Newton system, so the dense factorization
//! only ever involves the core variables.
//!
//! [`VariableLayout`]: crate::invariance::VariableLayout

use std::ops::Range;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invariance::{
    assemble, check_invariance_certificate, warm_start, InvarianceProblem, LinearInequalitySystem,
    Segment, VariableLayout,
};
use crate::numerics::{norm_inf, Cholesky, Matrix};
use crate::params::{Evaluation, Objective};
use crate::zonotope::Zonotope;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Initial barrier weight.
    pub mu0: f64,
    /// Factor applied to the barrier weight after each stage.
    pub mu_decrease: f64,
    /// Stop once `m μ` falls below this.
    pub gap_tol: f64,
    pub max_newton_per_stage: usize,
    pub backtrack: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Relative diagonal shift used when a Newton system is not positive definite.
    pub reg_floor: f64,
    /// Threshold on half the squared Newton decrement (in units of `μ`).
    pub newton_tol: f64,
    /// Relative stationarity tolerance for the Optimal status.
    pub kkt_tol: f64,
    /// Margin required of phase-1 points, `C z ≤ b − margin`.
    pub phase1_margin: f64,
    pub time_limit_secs: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            mu0: 1.0,
            mu_decrease: 0.2,
            gap_tol: 1e-8,
            max_newton_per_stage: 50,
            backtrack: 0.5,
            armijo: 1e-4,
            reg_floor: 1e-10,
            newton_tol: 1e-9,
            kkt_tol: 1e-6,
            phase1_margin: 1e-6,
            time_limit_secs: None,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mu0", self.mu0),
            ("mu_decrease", self.mu_decrease),
            ("gap_tol", self.gap_tol),
            ("backtrack", self.backtrack),
            ("armijo", self.armijo),
            ("reg_floor", self.reg_floor),
            ("newton_tol", self.newton_tol),
            ("kkt_tol", self.kkt_tol),
            ("phase1_margin", self.phase1_margin),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Invalid(format!("solver option {name} must be positive")));
        }
        if self.mu_decrease >= 1.0 || self.backtrack >= 1.0 || self.armijo >= 0.5 {
            return Err(Error::Invalid(
                "mu_decrease and backtrack must be below 1, armijo below 0.5".into(),
            ));
        }
        if self.max_newton_per_stage == 0 {
            return Err(Error::Invalid("max_newton_per_stage must be positive".into()));
        }
        if matches!(self.time_limit_secs, Some(t) if !(t > 0.0)) {
            return Err(Error::Invalid("time_limit_secs must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
    Infeasible,
    NumericalFailure,
    TimeLimit,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "Optimal",
            SolveStatus::MaxIterations => "MaxIterations",
            SolveStatus::Infeasible => "Infeasible",
            SolveStatus::NumericalFailure => "NumericalFailure",
            SolveStatus::TimeLimit => "TimeLimit",
        }
    }
}

/// Concave function of the variables `z[range()]`.
pub trait SmoothObjective {
    fn range(&self) -> Range<usize>;
    fn value(&self, x: &[f64]) -> Result<f64>;
    fn eval(&self, x: &[f64]) -> Result<Evaluation>;
}

/// An [`Objective`] placed at a range of the decision vector.
pub struct BoundObjective<'a> {
    pub objective: &'a Objective,
    pub range: Range<usize>,
}

impl SmoothObjective for BoundObjective<'_> {
    fn range(&self) -> Range<usize> {
        self.range.clone()
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        self.objective.value(x)
    }
    fn eval(&self, x: &[f64]) -> Result<Evaluation> {
        self.objective.eval(x)
    }
}

/// `coeffs · z[offset..offset + coeffs.len()]`.
pub struct LinearObjective {
    pub offset: usize,
    pub coeffs: Vec<f64>,
}

impl SmoothObjective for LinearObjective {
    fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.coeffs.len()
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(x.iter().zip(&self.coeffs).map(|(a, b)| a * b).sum())
    }
    fn eval(&self, x: &[f64]) -> Result<Evaluation> {
        let n = self.coeffs.len();
        Ok(Evaluation {
            value: self.value(x)?,
            gradient: self.coeffs.clone(),
            hessian: Matrix::zeros(n, n),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub mu: f64,
    pub objective: f64,
    pub newton_steps: usize,
    /// Shifts applied to keep Newton systems positive definite during the stage.
    pub regularizations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierOutcome {
    pub status: SolveStatus,
    pub z: Vec<f64>,
    pub objective_value: f64,
    pub iterations: usize,
    pub mu: f64,
    pub duals: Vec<f64>,
    pub kkt_residual: f64,
    pub stages: Vec<StageLog>,
}

/// Variable partition of a system into dense core variables and eliminated groups.
struct Structure {
    core_vars: Vec<usize>,
    /// Position of each variable inside its block (core or group).
    local: Vec<usize>,
    group_of: Vec<Option<usize>>,
    groups: Vec<Range<usize>>,
    rows_by_group: Vec<Vec<usize>>,
    core_rows: Vec<usize>,
    /// Core positions coupled to each group, ascending.
    support: Vec<Vec<usize>>,
}

impl Structure {
    fn new(sys: &LinearInequalitySystem) -> Result<Self> {
        sys.validate_layout()?;
        let n = sys.num_vars();
        let group_of = sys.group_index();
        let groups = sys.layout().aux_groups().to_vec();
        let mut local = vec![0; n];
        let mut core_vars = Vec::new();
        for j in 0..n {
            match group_of[j] {
                Some(g) => local[j] = j - groups[g].start,
                None => {
                    local[j] = core_vars.len();
                    core_vars.push(j);
                }
            }
        }
        let mut rows_by_group = vec![Vec::new(); groups.len()];
        let mut core_rows = Vec::new();
        let mut support_mask = vec![vec![false; core_vars.len()]; groups.len()];
        for r in 0..sys.num_rows() {
            let idx = sys.row(r).0;
            match idx.iter().find_map(|&j| group_of[j]) {
                Some(g) => {
                    rows_by_group[g].push(r);
                    for &j in idx {
                        if group_of[j].is_none() {
                            support_mask[g][local[j]] = true;
                        }
                    }
                }
                None => core_rows.push(r),
            }
        }
        let support = support_mask
            .into_iter()
            .map(|m| m.iter().enumerate().filter(|(_, &b)| b).map(|(k, _)| k).collect())
            .collect();
        Ok(Self {
            core_vars,
            local,
            group_of,
            groups,
            rows_by_group,
            core_rows,
            support,
        })
    }
}

enum StepError {
    NotPositiveDefinite,
}

struct NewtonStep {
    direction: Vec<f64>,
    /// `−gᵀΔ`
    decrement_sq: f64,
    regularized: bool,
}

/// Solves `H Δ = −g` for the barrier Hessian, eliminating auxiliary groups.
fn newton_step(
    sys: &LinearInequalitySystem,
    st: &Structure,
    eval: &Evaluation,
    obj_range: &Range<usize>,
    slacks: &[f64],
    mu: f64,
    reg_floor: f64,
) -> std::result::Result<NewtonStep, StepError> {
    let n = sys.num_vars();
    let nc = st.core_vars.len();

    let mut grad = vec![0.0; n];
    for (k, j) in obj_range.clone().enumerate() {
        grad[j] -= eval.gradient[k];
    }
    for r in 0..sys.num_rows() {
        let (idx, val) = sys.row(r);
        let f = mu / slacks[r];
        for (&j, &v) in idx.iter().zip(val) {
            grad[j] += f * v;
        }
    }

    let mut hcc = vec![0.0; nc * nc];
    for (a, ja) in obj_range.clone().enumerate() {
        let pa = st.local[ja];
        for (b, jb) in obj_range.clone().enumerate() {
            let pb = st.local[jb];
            if pb <= pa {
                hcc[pa * nc + pb] -= eval.hessian[(a, b)];
            }
        }
    }
    let add_core_row = |hcc: &mut [f64], r: usize| {
        let (idx, val) = sys.row(r);
        let w = mu / (slacks[r] * slacks[r]);
        for (a, (&ja, &va)) in idx.iter().zip(val).enumerate() {
            if st.group_of[ja].is_some() {
                continue;
            }
            let pa = st.local[ja];
            let wa = w * va;
            for (&jb, &vb) in idx[..=a].iter().zip(&val[..=a]) {
                if st.group_of[jb].is_none() {
                    hcc[pa * nc + st.local[jb]] += wa * vb;
                }
            }
        }
    };
    for &r in &st.core_rows {
        add_core_row(&mut hcc, r);
    }

    let mut regularized = false;
    // per group: factor, Y = L⁻¹ H_gc restricted to the support, u = L⁻¹ g_g
    let mut factors: Vec<(Cholesky, Vec<f64>, Vec<f64>)> = Vec::with_capacity(st.groups.len());
    let mut rhs_core: Vec<f64> = st.core_vars.iter().map(|&j| -grad[j]).collect();
    for (g, range) in st.groups.iter().enumerate() {
        let ng = range.len();
        let support = &st.support[g];
        let ns = support.len();
        let mut spos = vec![usize::MAX; nc];
        for (k, &c) in support.iter().enumerate() {
            spos[c] = k;
        }
        let mut hgg = vec![0.0; ng * ng];
        let mut hgc = vec![0.0; ng * ns];
        for &r in &st.rows_by_group[g] {
            add_core_row(&mut hcc, r);
            let (idx, val) = sys.row(r);
            let w = mu / (slacks[r] * slacks[r]);
            for (a, (&ja, &va)) in idx.iter().zip(val).enumerate() {
                if st.group_of[ja] != Some(g) {
                    continue;
                }
                let la = st.local[ja];
                let wa = w * va;
                for (&jb, &vb) in idx[..=a].iter().zip(&val[..=a]) {
                    if st.group_of[jb] == Some(g) {
                        hgg[la * ng + st.local[jb]] += wa * vb;
                    }
                }
                for (&jb, &vb) in idx.iter().zip(val) {
                    if st.group_of[jb].is_none() {
                        hgc[la * ns + spos[st.local[jb]]] += wa * vb;
                    }
                }
            }
        }
        let (chol, shifted) = factor_with_shift(ng, hgg, reg_floor)?;
        regularized |= shifted;
        // forward substitution column by column of the support
        let mut y = hgc;
        let mut col = vec![0.0; ng];
        for k in 0..ns {
            for i in 0..ng {
                col[i] = y[i * ns + k];
            }
            chol.forward_in_place(&mut col);
            for i in 0..ng {
                y[i * ns + k] = col[i];
            }
        }
        let mut u: Vec<f64> = range.clone().map(|j| grad[j]).collect();
        chol.forward_in_place(&mut u);
        // S −= Yᵀ Y, rhs += Yᵀ u
        for i in 0..ng {
            let yrow = &y[i * ns..(i + 1) * ns];
            for (a, &ya) in yrow.iter().enumerate() {
                if ya == 0.0 {
                    continue;
                }
                let pa = support[a];
                rhs_core[pa] += ya * u[i];
                let base = pa * nc;
                for (b, &yb) in yrow[..=a].iter().enumerate() {
                    hcc[base + support[b]] -= ya * yb;
                }
            }
        }
        factors.push((chol, y, u));
    }

    let (schur, shifted) = factor_with_shift(nc, hcc, reg_floor)?;
    regularized |= shifted;
    let dc = schur.solve(&rhs_core);

    let mut direction = vec![0.0; n];
    for (k, &j) in st.core_vars.iter().enumerate() {
        direction[j] = dc[k];
    }
    for (g, range) in st.groups.iter().enumerate() {
        let (chol, y, u) = &factors[g];
        let support = &st.support[g];
        let ns = support.len();
        let ng = range.len();
        let mut v: Vec<f64> = (0..ng)
            .map(|i| {
                let yrow = &y[i * ns..(i + 1) * ns];
                -u[i] - yrow.iter().zip(support).map(|(a, &p)| a * dc[p]).sum::<f64>()
            })
            .collect();
        chol.backward_in_place(&mut v);
        for (i, j) in range.clone().enumerate() {
            direction[j] = v[i];
        }
    }
    let decrement_sq = -grad.iter().zip(&direction).map(|(a, b)| a * b).sum::<f64>();
    Ok(NewtonStep {
        direction,
        decrement_sq,
        regularized,
    })
}

/// Pivots below this fraction of their diagonal entry carry no significant digits.
const PIVOT_RATIO: f64 = 1e-12;

/// Cholesky of a lower-triangle buffer, retried once with a diagonal shift when
/// it fails or loses all precision in some pivot.
fn factor_with_shift(n: usize, mut a: Vec<f64>, reg_floor: f64) -> std::result::Result<(Cholesky, bool), StepError> {
    let diag: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    let sound = |c: &Cholesky| c.pivots().zip(&diag).all(|(p, &d)| p >= PIVOT_RATIO * d);
    if let Ok(c) = Cholesky::factor_slice(n, a.clone()) {
        if sound(&c) {
            return Ok((c, false));
        }
    }
    let shift = reg_floor * diag.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        a[i * n + i] += shift;
    }
    let c = Cholesky::factor_slice(n, a).map_err(|_| StepError::NotPositiveDefinite)?;
    Ok((c, true))
}

/// Barrier value `−f(z) − μ Σ log s`; `None` outside the domain.
fn barrier_value(
    objective: &dyn SmoothObjective,
    z: &[f64],
    slacks: &[f64],
    mu: f64,
) -> Option<f64> {
    if slacks.iter().any(|&s| !(s > 0.0)) {
        return None;
    }
    let f = objective.value(&z[objective.range()]).ok()?;
    let logs: f64 = slacks.iter().map(|s| s.ln()).sum();
    let v = -f - mu * logs;
    v.is_finite().then_some(v)
}

/// `max(‖∇f − Cᵀλ‖∞ / max(1, ‖∇f‖∞), Σ λ_r s_r)`.
pub fn kkt_residual(
    system: &LinearInequalitySystem,
    objective: &dyn SmoothObjective,
    z: &[f64],
    duals: &[f64],
) -> Result<f64> {
    if duals.len() != system.num_rows() || z.len() != system.num_vars() {
        return Err(Error::DimensionMismatch("KKT residual inputs".into()));
    }
    let eval = objective.eval(&z[objective.range()])?;
    let mut r = vec![0.0; z.len()];
    for (k, j) in objective.range().enumerate() {
        r[j] = eval.gradient[k];
    }
    let scale = norm_inf(&eval.gradient).max(1.0);
    for (i, &lam) in duals.iter().enumerate() {
        let (idx, val) = system.row(i);
        for (&j, &v) in idx.iter().zip(val) {
            r[j] -= lam * v;
        }
    }
    let slacks = system.slacks(z);
    let complementarity: f64 = duals.iter().zip(&slacks).map(|(l, s)| (l * s).abs()).sum();
    Ok((norm_inf(&r) / scale).max(complementarity))
}

struct Barrier<'a> {
    sys: &'a LinearInequalitySystem,
    st: Structure,
    objective: &'a dyn SmoothObjective,
    opts: &'a SolverOptions,
    started: Instant,
}

enum StageEnd {
    Converged { duals: Vec<f64> },
    Stopped,
    Failed(SolveStatus),
}

impl Barrier<'_> {
    fn timed_out(&self) -> bool {
        self.opts
            .time_limit_secs
            .is_some_and(|t| self.started.elapsed().as_secs_f64() > t)
    }

    /// Runs damped Newton at fixed `μ`; `stop` is checked after every accepted step.
    fn stage(
        &self,
        z: &mut Vec<f64>,
        mu: f64,
        steps: &mut usize,
        regs: &mut usize,
        stop: &dyn Fn(&[f64]) -> bool,
    ) -> Result<StageEnd> {
        let range = self.objective.range();
        let m = self.sys.num_rows();
        let mut newton = 0;
        loop {
            if self.timed_out() {
                return Ok(StageEnd::Failed(SolveStatus::TimeLimit));
            }
            let slacks = self.sys.slacks(z);
            let eval = self.objective.eval(&z[range.clone()])?;
            let step = match newton_step(self.sys, &self.st, &eval, &range, &slacks, mu, self.opts.reg_floor)
            {
                Ok(s) => s,
                Err(StepError::NotPositiveDefinite) => {
                    return Ok(StageEnd::Failed(SolveStatus::NumericalFailure))
                }
            };
            if step.regularized {
                *regs += 1;
            }
            let cd = self.sys.apply(&step.direction);
            let decrement = step.decrement_sq / (2.0 * mu);
            // predicted decrease of φ below the resolution of the objective in double precision
            let resolved = 0.5 * step.decrement_sq <= 1e-14 * (1.0 + eval.value.abs());
            let dual_estimate = || -> Vec<f64> {
                (0..m)
                    .map(|r| (mu / slacks[r] * (1.0 + cd[r] / slacks[r])).max(0.0))
                    .collect()
            };
            if decrement <= self.opts.newton_tol || resolved {
                return Ok(StageEnd::Converged { duals: dual_estimate() });
            }
            if newton >= self.opts.max_newton_per_stage {
                return Ok(StageEnd::Failed(SolveStatus::MaxIterations));
            }
            let mut alpha: f64 = 1.0;
            for r in 0..m {
                if cd[r] > 0.0 {
                    alpha = alpha.min(0.99 * slacks[r] / cd[r]);
                }
            }
            let phi0 = barrier_value(self.objective, z, &slacks, mu)
                .ok_or_else(|| Error::Domain("iterate left the barrier domain".into()))?;
            let mut trial = z.clone();
            let mut trial_slacks = slacks.clone();
            let accepted = loop {
                for (t, (zi, di)) in trial.iter_mut().zip(z.iter().zip(&step.direction)) {
                    *t = zi + alpha * di;
                }
                for r in 0..m {
                    trial_slacks[r] = slacks[r] - alpha * cd[r];
                }
                if let Some(phi) = barrier_value(self.objective, &trial, &trial_slacks, mu) {
                    if phi <= phi0 - self.opts.armijo * alpha * step.decrement_sq {
                        break true;
                    }
                }
                alpha *= self.opts.backtrack;
                if alpha < 1e-14 {
                    break false;
                }
            };
            newton += 1;
            *steps += 1;
            if !accepted {
                // round-off floor: the remaining decrease is below what φ can resolve
                if decrement < 1e-6 || resolved {
                    return Ok(StageEnd::Converged { duals: dual_estimate() });
                }
                return Ok(StageEnd::Failed(SolveStatus::NumericalFailure));
            }
            std::mem::swap(z, &mut trial);
            if stop(z) {
                return Ok(StageEnd::Stopped);
            }
        }
    }
}

fn run_barrier(
    sys: &LinearInequalitySystem,
    objective: &dyn SmoothObjective,
    x0: &[f64],
    opts: &SolverOptions,
    stop: &dyn Fn(&[f64]) -> bool,
) -> Result<(BarrierOutcome, bool)> {
    opts.validate()?;
    if x0.len() != sys.num_vars() {
        return Err(Error::DimensionMismatch("starting point length".into()));
    }
    if !sys.is_strictly_feasible(x0) {
        return Err(Error::Invalid("starting point is not strictly feasible".into()));
    }
    let r = objective.range();
    if r.end > sys.num_vars() {
        return Err(Error::DimensionMismatch("objective range".into()));
    }
    let barrier = Barrier {
        sys,
        st: Structure::new(sys)?,
        objective,
        opts,
        started: Instant::now(),
    };
    let m = sys.num_rows() as f64;
    let mut z = x0.to_vec();
    let mut mu = opts.mu0;
    let mut iterations = 0;
    let mut stages = Vec::new();
    loop {
        let mut steps = 0;
        let mut regs = 0;
        let end = barrier.stage(&mut z, mu, &mut steps, &mut regs, stop)?;
        iterations += steps;
        let value = objective.value(&z[r.clone()])?;
        stages.push(StageLog {
            mu,
            objective: value,
            newton_steps: steps,
            regularizations: regs,
        });
        let finish = |status, duals: Vec<f64>, stopped| -> Result<(BarrierOutcome, bool)> {
            let kkt = if duals.is_empty() {
                f64::INFINITY
            } else {
                kkt_residual(sys, objective, &z, &duals)?
            };
            Ok((
                BarrierOutcome {
                    status,
                    z: z.clone(),
                    objective_value: value,
                    iterations,
                    mu,
                    duals,
                    kkt_residual: kkt,
                    stages: stages.clone(),
                },
                stopped,
            ))
        };
        match end {
            StageEnd::Stopped => return finish(SolveStatus::MaxIterations, Vec::new(), true),
            StageEnd::Failed(status) => return finish(status, Vec::new(), false),
            StageEnd::Converged { duals } => {
                if m * mu < opts.gap_tol {
                    let kkt = kkt_residual(sys, objective, &z, &duals)?;
                    let status = if kkt <= opts.kkt_tol && sys.is_strictly_feasible(&z) {
                        SolveStatus::Optimal
                    } else {
                        SolveStatus::NumericalFailure
                    };
                    return finish(status, duals, false);
                }
            }
        }
        mu *= opts.mu_decrease;
    }
}

/// Maximizes a concave objective over `{ z : C z ≤ b }` from a strictly feasible `x0`.
pub fn maximize(
    system: &LinearInequalitySystem,
    objective: &dyn SmoothObjective,
    x0: &[f64],
    opts: &SolverOptions,
) -> Result<BarrierOutcome> {
    Ok(run_barrier(system, objective, x0, opts, &|_| false)?.0)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Phase1 {
    Feasible(Vec<f64>),
    /// Smallest uniform violation `s` reached (`C z − b ≤ s`); non-negative.
    Infeasible { violation: f64 },
    Failed(SolveStatus),
}

/// Finds `z` with `C z ≤ b − margin` by minimizing a uniform violation bound `s`.
pub fn phase1_feasible_point(
    system: &LinearInequalitySystem,
    start: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<Phase1> {
    let n = system.num_vars();
    let margin = opts.phase1_margin;
    let z0 = start.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    if z0.len() != n {
        return Err(Error::DimensionMismatch("phase-1 start".into()));
    }
    let slack0 = system.min_slack(&z0);
    if slack0 >= margin {
        return Ok(Phase1::Feasible(z0));
    }

    let old = system.layout();
    let mut segments = old.segments().to_vec();
    segments.push(Segment {
        name: "phase1_s".into(),
        range: n..n + 1,
    });
    let layout = VariableLayout::new(segments, old.aux_groups().to_vec(), n..n + 1);
    let mut aug = LinearInequalitySystem::new(n + 1, layout);
    let mut entries = Vec::new();
    for r in 0..system.num_rows() {
        let (idx, val) = system.row(r);
        entries.clear();
        entries.extend(idx.iter().copied().zip(val.iter().copied()));
        entries.push((n, -1.0));
        aug.push_row(&entries, system.rhs()[r]);
    }
    aug.push_row(&[(n, -1.0)], 1.0);

    let mut x0 = z0;
    x0.push((-slack0).max(0.0) + 1.0);
    let objective = LinearObjective {
        offset: n,
        coeffs: vec![-1.0],
    };
    let stop = |z: &[f64]| z[n] < -margin;
    let (out, stopped) = run_barrier(&aug, &objective, &x0, opts, &stop)?;
    let z = out.z[..n].to_vec();
    if stopped || system.min_slack(&z) >= margin {
        return Ok(Phase1::Feasible(z));
    }
    match out.status {
        SolveStatus::Optimal => Ok(Phase1::Infeasible {
            violation: out.z[n].max(0.0),
        }),
        status => Ok(Phase1::Failed(status)),
    }
}

/// Outcome of solving one invariance problem end to end.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub variables: Vec<f64>,
    pub zonotope: Option<Zonotope>,
    pub objective_value: f64,
    /// True volume of the returned zonotope, recomputed from its generators.
    pub volume: f64,
    pub iterations: usize,
    /// Time spent in [`maximize`] only.
    pub wall_time: Duration,
    pub kkt_residual: f64,
    pub certified: bool,
    pub stages: Vec<StageLog>,
}

impl SolveResult {
    fn without_solution(status: SolveStatus) -> Self {
        Self {
            status,
            variables: Vec::new(),
            zonotope: None,
            objective_value: f64::NAN,
            volume: f64::NAN,
            iterations: 0,
            wall_time: Duration::ZERO,
            kkt_residual: f64::INFINITY,
            certified: false,
            stages: Vec::new(),
        }
    }
}

/// Assembles, finds a starting point, maximizes and certifies.
pub fn solve_problem(problem: &InvarianceProblem, opts: &SolverOptions) -> Result<SolveResult> {
    opts.validate()?;
    let sys = assemble(problem)?;
    let start = match warm_start(problem, &sys) {
        Some(z) => z,
        None => match phase1_feasible_point(&sys, None, opts)? {
            Phase1::Feasible(z) => z,
            Phase1::Infeasible { .. } => {
                return Ok(SolveResult::without_solution(SolveStatus::Infeasible))
            }
            Phase1::Failed(status) => return Ok(SolveResult::without_solution(status)),
        },
    };
    let objective = problem.objective();
    let bound = BoundObjective {
        objective: &objective,
        range: sys.layout().objective_range(),
    };
    let clock = Instant::now();
    let out = maximize(&sys, &bound, &start, opts)?;
    let wall_time = clock.elapsed();

    let zono = problem.decode(&out.z)?;
    let volume = zono.volume()?;
    let certified = check_invariance_certificate(problem, &zono);
    let status = if out.status == SolveStatus::Optimal && !certified {
        SolveStatus::NumericalFailure
    } else {
        out.status
    };
    Ok(SolveResult {
        status,
        variables: out.z,
        zonotope: Some(zono),
        objective_value: out.objective_value,
        volume,
        iterations: out.iterations,
        wall_time,
        kkt_residual: out.kkt_residual,
        certified,
        stages: out.stages,
    })
}
