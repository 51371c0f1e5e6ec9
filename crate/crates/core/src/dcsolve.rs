//! Difference-of-convex programs in log variables and a penalty
//! convex–concave procedure to solve them.
//!
//! A program minimizes `log P₀(e^w) − log Q₀(e^w)` subject to constraints
//! `log P_i(e^w) − log Q_i(e^w) ≤ 0` and a box `lower ≤ w ≤ upper`. Each outer
//! iteration replaces every `log Q` by its tangent at the current iterate,
//! which over-estimates the difference, adds nonnegative slacks with penalty
//! `τ` and solves the resulting convex problem. The penalty grows
//! geometrically up to `τ_max`.
//!
//! Convex subproblems are solved by a primal log-barrier method with damped
//! Newton steps; the slack block of the Newton system is diagonal and is
//! eliminated before factorizing.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::posylog::{Affine, DCConstraint, LogPosynomial, Posynomial, VarSpace};

/// Barrier duality-gap target of the subproblem solver.
const GAP_TOL: f64 = 1e-10;
const BARRIER_GROWTH: f64 = 20.0;
const NEWTON_TOL: f64 = 1e-9;
const MAX_NEWTON: usize = 5000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DcError {
    #[error("no feasible point found from {starts} starts (smallest violation {best_violation:.3e})")]
    NoFeasiblePointFound { starts: usize, best_violation: f64 },
    #[error("subproblem solver exceeded {0} Newton iterations")]
    MaxIterations(usize),
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("invalid program: {0}")]
    InvalidProgram(String),
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
}

/// Objective `log P(e^w) − log Q(e^w)`; `q = None` makes it convex.
#[derive(Debug, Clone, PartialEq)]
pub struct DCObjective {
    pub p: Posynomial,
    pub q: Option<Posynomial>,
}

#[derive(Debug, Clone)]
pub struct DCProgram {
    vars: VarSpace,
    objective: DCObjective,
    constraints: Vec<DCConstraint>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    initial: Vec<f64>,
    start_box: Vec<(f64, f64)>,
    obj_p: LogPosynomial,
    obj_q: Option<LogPosynomial>,
    con_p: Vec<LogPosynomial>,
    con_q: Vec<LogPosynomial>,
}

impl DCProgram {
    /// Builds a program; the default start is the box midpoint.
    pub fn new(
        vars: VarSpace,
        objective: DCObjective,
        constraints: Vec<DCConstraint>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self, DcError> {
        let nv = vars.len();
        if lower.len() != nv || upper.len() != nv {
            return Err(DcError::InvalidProgram(format!(
                "{nv} variables but {} lower and {} upper bounds",
                lower.len(),
                upper.len()
            )));
        }
        for j in 0..nv {
            if !(lower[j].is_finite() && upper[j].is_finite() && lower[j] < upper[j]) {
                return Err(DcError::InvalidProgram(format!(
                    "bounds of {} must be finite with lower < upper, got [{}, {}]",
                    vars.name(j),
                    lower[j],
                    upper[j]
                )));
            }
        }
        let out_of_space = |idx: Option<usize>| idx.is_some_and(|i| i >= nv);
        if out_of_space(objective.p.max_index()) || out_of_space(objective.q.as_ref().and_then(|q| q.max_index())) {
            return Err(DcError::InvalidProgram("objective uses an unknown variable".into()));
        }
        for c in &constraints {
            if out_of_space(c.max_index()) {
                return Err(DcError::InvalidProgram(format!(
                    "constraint {} uses an unknown variable",
                    c.label
                )));
            }
        }
        let initial: Vec<f64> = lower.iter().zip(&upper).map(|(l, u)| 0.5 * (l + u)).collect();
        let start_box = lower.iter().copied().zip(upper.iter().copied()).collect();
        Ok(Self {
            obj_p: objective.p.log_transform(),
            obj_q: objective.q.as_ref().map(|q| q.log_transform()),
            con_p: constraints.iter().map(|c| c.p.log_transform()).collect(),
            con_q: constraints.iter().map(|c| c.q.log_transform()).collect(),
            vars,
            objective,
            constraints,
            lower,
            upper,
            initial,
            start_box,
        })
    }

    /// Replaces the default start, clamped into the box.
    pub fn with_initial(mut self, w: Vec<f64>) -> Result<Self, DcError> {
        if w.len() != self.len() || w.iter().any(|x| !x.is_finite()) {
            return Err(DcError::InvalidProgram("initial point has the wrong size or is not finite".into()));
        }
        self.initial = self.clamp(&w);
        Ok(self)
    }

    /// Ranges from which random starts are drawn uniformly, one per
    /// variable. Degenerate ranges pin the variable.
    pub fn with_start_box(mut self, start_box: Vec<(f64, f64)>) -> Result<Self, DcError> {
        if start_box.len() != self.len() || start_box.iter().any(|(l, u)| !(l <= u)) {
            return Err(DcError::InvalidProgram("start box has the wrong size or is empty".into()));
        }
        self.start_box = start_box;
        Ok(self)
    }

    pub fn vars(&self) -> &VarSpace {
        &self.vars
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn objective(&self) -> &DCObjective {
        &self.objective
    }

    pub fn constraints(&self) -> &[DCConstraint] {
        &self.constraints
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn start_box(&self) -> &[(f64, f64)] {
        &self.start_box
    }

    /// True when every concave part is a monomial, so one convexification
    /// is exact.
    pub fn is_convex(&self) -> bool {
        self.con_q.iter().all(|q| q.is_affine()) && self.obj_q.as_ref().map_or(true, |q| q.is_affine())
    }

    pub fn clamp(&self, w: &[f64]) -> Vec<f64> {
        w.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (l, u))| x.clamp(*l, *u))
            .collect()
    }

    /// Exact objective value.
    pub fn objective_value(&self, w: &[f64]) -> f64 {
        self.obj_p.value(w) - self.obj_q.as_ref().map_or(0.0, |q| q.value(w))
    }

    /// Exact constraint values `log P_i − log Q_i`.
    pub fn constraint_values(&self, w: &[f64]) -> Vec<f64> {
        self.con_p
            .iter()
            .zip(&self.con_q)
            .map(|(p, q)| p.value(w) - q.value(w))
            .collect()
    }

    /// Largest positive constraint value, including box violations.
    pub fn max_violation(&self, w: &[f64]) -> f64 {
        let box_viol = w
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (l, u))| (l - x).max(x - u))
            .fold(0.0, f64::max);
        self.constraint_values(w).into_iter().fold(box_viol, f64::max)
    }

    /// `objective + τ Σ max(0, h_i)`.
    pub fn merit(&self, w: &[f64], tau: f64) -> f64 {
        self.objective_value(w) + tau * self.constraint_values(w).iter().map(|h| h.max(0.0)).sum::<f64>()
    }

    fn random_start<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let w: Vec<f64> = self
            .start_box
            .iter()
            .map(|&(l, u)| if l < u { rng.gen_range(l..u) } else { l })
            .collect();
        self.clamp(&w)
    }

    /// Start 0 is the program's initial point, later starts are random.
    pub fn starts(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        (0..count.max(1))
            .map(|k| {
                if k == 0 {
                    self.initial.clone()
                } else {
                    self.random_start(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64)))
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub tol_stationarity: f64,
    pub tol_feasibility: f64,
    pub max_outer_iters: usize,
    pub tau0: f64,
    pub mu: f64,
    pub tau_max: f64,
    pub multistarts: usize,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol_stationarity: 1e-8,
            tol_feasibility: 1e-8,
            max_outer_iters: 100,
            tau0: 1.0,
            mu: 5.0,
            tau_max: 1e6,
            multistarts: 8,
            seed: 0,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<(), DcError> {
        let positive = [
            ("tol_stationarity", self.tol_stationarity),
            ("tol_feasibility", self.tol_feasibility),
            ("tau0", self.tau0),
            ("tau_max", self.tau_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(DcError::InvalidOptions(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.mu > 1.0 && self.mu.is_finite()) {
            return Err(DcError::InvalidOptions(format!("mu must exceed 1, got {}", self.mu)));
        }
        if self.tau0 > self.tau_max {
            return Err(DcError::InvalidOptions("tau0 exceeds tau_max".into()));
        }
        if self.max_outer_iters == 0 || self.multistarts == 0 {
            return Err(DcError::InvalidOptions("iteration and start counts must be positive".into()));
        }
        Ok(())
    }
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    /// Exact objective at the new iterate.
    pub objective: f64,
    /// Largest exact constraint violation at the new iterate.
    pub violation: f64,
    pub penalty: f64,
    pub step_norm: f64,
    /// Merit of the new iterate at this iteration's penalty.
    pub merit: f64,
    /// Merit of the previous iterate at the same penalty.
    pub merit_prev: f64,
    pub newton_iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace {
    pub start: usize,
    pub rows: Vec<TraceRow>,
    pub converged: bool,
}

/// Strength of the optimality claim attached to a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Guarantee {
    /// Stationary point of the convex–concave procedure; not necessarily
    /// a global optimum.
    LocalOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DCSolution {
    pub w: Vec<f64>,
    /// Exact objective `log P₀ − log Q₀` at `w`.
    pub objective: f64,
    pub violation: f64,
    /// Index of the winning start.
    pub start: usize,
    pub trace: SolveTrace,
    /// Traces of every start, in start order.
    pub all_traces: Vec<SolveTrace>,
    pub guarantee: Guarantee,
}

/// `F(w) − T(w)` with `F` a log-posynomial and `T` an affine minorant.
#[derive(Debug, Clone)]
pub struct ConvexFn {
    lse: LogPosynomial,
    minus: Option<Affine>,
    /// Sorted union of the variables `F` and `T` depend on.
    support: Vec<usize>,
    /// Position in `support` of each variable of `lse.support()`.
    lse_pos: Vec<usize>,
    /// Coefficients of `T` over `support`.
    minus_local: Vec<f64>,
}

impl ConvexFn {
    fn new(lse: LogPosynomial, minus: Option<Affine>) -> Self {
        let mut support: Vec<usize> = lse.support().to_vec();
        if let Some(a) = &minus {
            support.extend(a.coeffs.iter().map(|&(i, _)| i));
        }
        support.sort_unstable();
        support.dedup();
        let lse_pos = lse
            .support()
            .iter()
            .map(|i| support.binary_search(i).unwrap())
            .collect();
        let mut minus_local = vec![0.0; support.len()];
        if let Some(a) = &minus {
            for &(i, c) in &a.coeffs {
                minus_local[support.binary_search(&i).unwrap()] += c;
            }
        }
        Self {
            lse,
            minus,
            support,
            lse_pos,
            minus_local,
        }
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        self.lse.value(w) - self.minus.as_ref().map_or(0.0, |a| a.eval(w))
    }

    /// Value, gradient over `support` and Hessian over `support`.
    fn second_order(&self, w: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let so = self.lse.second_order(w);
        let k = self.support.len();
        let mut g: Vec<f64> = self.minus_local.iter().map(|c| -c).collect();
        let mut h = vec![0.0; k * k];
        let kl = self.lse_pos.len();
        for a in 0..kl {
            g[self.lse_pos[a]] += so.grad[a];
            for b in 0..kl {
                h[self.lse_pos[a] * k + self.lse_pos[b]] += so.hess[a * kl + b];
            }
        }
        let value = so.value - self.minus.as_ref().map_or(0.0, |a| a.eval(w));
        (value, g, h)
    }
}

/// Convex majorization of a program at `w_k`.
#[derive(Debug, Clone)]
pub struct ConvexSubproblem {
    pub objective: ConvexFn,
    pub constraints: Vec<ConvexFn>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Replaces every concave part by its tangent at `w_k`.
pub fn convexify(prog: &DCProgram, w_k: &[f64]) -> ConvexSubproblem {
    ConvexSubproblem {
        objective: ConvexFn::new(prog.obj_p.clone(), prog.obj_q.as_ref().map(|q| q.tangent(w_k))),
        constraints: prog
            .con_p
            .iter()
            .zip(&prog.con_q)
            .map(|(p, q)| ConvexFn::new(p.clone(), Some(q.tangent(w_k))))
            .collect(),
        lower: prog.lower.clone(),
        upper: prog.upper.clone(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubSolution {
    pub w: Vec<f64>,
    pub slacks: Vec<f64>,
    /// Multiplier estimates of the slackened constraints.
    pub multipliers: Vec<f64>,
    /// `objective + τ Σ s` at the solution.
    pub value: f64,
    pub newton_iters: usize,
}

struct Barrier<'a> {
    sub: &'a ConvexSubproblem,
    tau: f64,
    t: f64,
}

impl Barrier<'_> {
    /// Barrier value, or `None` outside the domain.
    fn value(&self, w: &[f64], s: &[f64]) -> Option<f64> {
        let mut phi = 0.0;
        for ((x, l), u) in w.iter().zip(&self.sub.lower).zip(&self.sub.upper) {
            if !(x > l && x < u) {
                return None;
            }
            phi -= (x - l).ln() + (u - x).ln();
        }
        let mut slack_sum = 0.0;
        for (c, &si) in self.sub.constraints.iter().zip(s) {
            let d = si - c.value(w);
            if !(si > 0.0 && d > 0.0) {
                return None;
            }
            phi -= si.ln() + d.ln();
            slack_sum += si;
        }
        let f = self.sub.objective.value(w);
        let total = phi + self.t * (f + self.tau * slack_sum);
        total.is_finite().then_some(total)
    }
}

fn add_local(h: &mut DMatrix<f64>, support: &[usize], local: &[f64], scale: f64) {
    let k = support.len();
    for a in 0..k {
        for b in 0..k {
            h[(support[a], support[b])] += scale * local[a * k + b];
        }
    }
}

fn add_outer(h: &mut DMatrix<f64>, support: &[usize], g: &[f64], scale: f64) {
    for (a, &i) in support.iter().enumerate() {
        for (b, &j) in support.iter().enumerate() {
            h[(i, j)] += scale * g[a] * g[b];
        }
    }
}

/// Solves `min f(w) + τ Σ s  s.t.  h_i(w) ≤ s_i, s ≥ 0, lower ≤ w ≤ upper`
/// from the warm start, which is moved into the box interior if needed.
pub fn solve_subproblem(sub: &ConvexSubproblem, tau: f64, warm: &[f64]) -> Result<SubSolution, DcError> {
    let nv = sub.lower.len();
    let m = sub.constraints.len();
    let mut w: Vec<f64> = warm
        .iter()
        .zip(sub.lower.iter().zip(&sub.upper))
        .map(|(x, (l, u))| {
            let pad = 1e-3 * (u - l).min(1.0);
            x.clamp(l + pad, u - pad)
        })
        .collect();
    let mut s: Vec<f64> = sub.constraints.iter().map(|c| c.value(&w).max(0.0) + 1.0).collect();
    let barrier_terms = (2 * m + 2 * nv) as f64;
    let mut t = 1.0;
    let mut newton_iters = 0;

    loop {
        let bar = Barrier { sub, tau, t };
        let mut phi = bar
            .value(&w, &s)
            .ok_or_else(|| DcError::NumericalBreakdown("barrier undefined at the start point".into()))?;
        loop {
            newton_iters += 1;
            if newton_iters > MAX_NEWTON {
                return Err(DcError::MaxIterations(MAX_NEWTON));
            }
            let mut h = DMatrix::<f64>::zeros(nv, nv);
            let mut gw = DVector::<f64>::zeros(nv);
            let (_, g0, h0) = sub.objective.second_order(&w);
            for (a, &i) in sub.objective.support.iter().enumerate() {
                gw[i] += t * g0[a];
            }
            add_local(&mut h, &sub.objective.support, &h0, t);
            for j in 0..nv {
                let dl = w[j] - sub.lower[j];
                let du = sub.upper[j] - w[j];
                gw[j] += -1.0 / dl + 1.0 / du;
                h[(j, j)] += 1.0 / (dl * dl) + 1.0 / (du * du);
            }
            let mut grads = Vec::with_capacity(m);
            let mut gs = vec![0.0; m];
            let mut ds = vec![0.0; m];
            let mut rhs_corr = DVector::<f64>::zeros(nv);
            for (i, c) in sub.constraints.iter().enumerate() {
                let (hv, g, hl) = c.second_order(&w);
                let d = s[i] - hv;
                ds[i] = d;
                gs[i] = t * tau - 1.0 / d - 1.0 / s[i];
                for (a, &j) in c.support.iter().enumerate() {
                    gw[j] += g[a] / d;
                }
                add_local(&mut h, &c.support, &hl, 1.0 / d);
                // slack block eliminated: ∇h∇hᵀ / d² reduces to 1/(d² + s²)
                add_outer(&mut h, &c.support, &g, 1.0 / (d * d + s[i] * s[i]));
                let wgt = gs[i] * s[i] * s[i] / (s[i] * s[i] + d * d);
                for (a, &j) in c.support.iter().enumerate() {
                    rhs_corr[j] += g[a] * wgt;
                }
                grads.push(g);
            }
            let rhs = -&gw - rhs_corr;
            let dw = solve_spd(h, &rhs)?;
            let mut dsv = vec![0.0; m];
            for (i, c) in sub.constraints.iter().enumerate() {
                let gdw: f64 = c.support.iter().zip(&grads[i]).map(|(&j, g)| g * dw[j]).sum();
                let hss = 1.0 / (ds[i] * ds[i]) + 1.0 / (s[i] * s[i]);
                dsv[i] = (-gs[i] + gdw / (ds[i] * ds[i])) / hss;
            }
            let slope = gw.dot(&dw) + gs.iter().zip(&dsv).map(|(a, b)| a * b).sum::<f64>();
            let decrement = -slope;
            if !decrement.is_finite() {
                return Err(DcError::NumericalBreakdown("non-finite Newton decrement".into()));
            }
            if decrement / 2.0 <= NEWTON_TOL {
                break;
            }
            // backtracking with a rounding allowance proportional to |Φ|
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha > 1e-14 {
                let wn: Vec<f64> = w.iter().zip(dw.iter()).map(|(x, d)| x + alpha * d).collect();
                let sn: Vec<f64> = s.iter().zip(&dsv).map(|(x, d)| x + alpha * d).collect();
                if let Some(pn) = bar.value(&wn, &sn) {
                    if pn <= phi + 0.01 * alpha * slope + 1e-14 * phi.abs().max(1.0) {
                        // a step that no longer changes Φ measurably ends centering
                        let progress = phi - pn > 1e-13 * phi.abs().max(1.0);
                        accepted = (wn != w || sn != s) && (progress || decrement > 1e-4);
                        w = wn;
                        s = sn;
                        phi = pn;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                // no representable decrease left at this barrier weight
                break;
            }
        }
        if barrier_terms / t < GAP_TOL {
            break;
        }
        t *= BARRIER_GROWTH;
    }

    let multipliers = sub
        .constraints
        .iter()
        .zip(&s)
        .map(|(c, si)| 1.0 / (t * (si - c.value(&w))))
        .collect();
    let value = sub.objective.value(&w) + tau * s.iter().sum::<f64>();
    Ok(SubSolution {
        w,
        slacks: s,
        multipliers,
        value,
        newton_iters,
    })
}

/// Cholesky solve with diagonal regularization on failure.
fn solve_spd(h: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>, DcError> {
    let scale = (0..h.nrows()).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut reg = 0.0;
    for _ in 0..12 {
        let mut hr = h.clone();
        if reg > 0.0 {
            for i in 0..hr.nrows() {
                hr[(i, i)] += reg;
            }
        }
        if let Some(ch) = hr.cholesky() {
            let x = ch.solve(rhs);
            if x.iter().all(|v| v.is_finite()) {
                return Ok(x);
            }
        }
        reg = if reg == 0.0 { 1e-14 * scale } else { reg * 100.0 };
    }
    Err(DcError::NumericalBreakdown("Newton system is not positive definite".into()))
}

/// Runs the penalty convex–concave procedure from one start.
pub fn solve_from_start(
    prog: &DCProgram,
    opts: &SolveOptions,
    start: usize,
    w0: &[f64],
) -> Result<(Vec<f64>, SolveTrace), DcError> {
    let convex = prog.is_convex();
    let mut tau = if convex { opts.tau_max } else { opts.tau0 };
    let max_outer = if convex { 1 } else { opts.max_outer_iters };
    let mut w = prog.clamp(w0);
    let mut prev_obj = prog.objective_value(&w);
    let mut trace = SolveTrace {
        start,
        rows: Vec::new(),
        converged: false,
    };
    for k in 0..max_outer {
        let merit_prev = prog.merit(&w, tau);
        let sub = convexify(prog, &w);
        let sol = solve_subproblem(&sub, tau, &w)?;
        let step_norm = sol
            .w
            .iter()
            .zip(&w)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let objective = prog.objective_value(&sol.w);
        let violation = prog.max_violation(&sol.w);
        let merit = prog.merit(&sol.w, tau);
        trace.rows.push(TraceRow {
            iter: k,
            objective,
            violation,
            penalty: tau,
            step_norm,
            merit,
            merit_prev,
            newton_iters: sol.newton_iters,
        });
        log::trace!("start {start} iter {k}: obj {objective:.10e} viol {violation:.3e} tau {tau:.1e} step {step_norm:.3e}");
        let max_slack = sol.slacks.iter().copied().fold(0.0, f64::max);
        let scale = 1.0 + sol.w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let stalled = k > 0 && (objective - prev_obj).abs() <= opts.tol_stationarity * (1.0 + objective.abs());
        w = sol.w;
        prev_obj = objective;
        let feasible = max_slack <= opts.tol_feasibility && violation <= opts.tol_feasibility;
        if feasible && (convex || step_norm <= opts.tol_stationarity * scale || stalled) {
            trace.converged = true;
            break;
        }
        tau = (opts.mu * tau).min(opts.tau_max);
    }
    Ok((w, trace))
}

/// Solves from the program's own starts (see [`DCProgram::starts`]).
pub fn solve_dc(prog: &DCProgram, opts: &SolveOptions) -> Result<DCSolution, DcError> {
    let starts = prog.starts(opts.multistarts, opts.seed);
    solve_dc_from(prog, opts, &starts)
}

/// Solves from each given start and returns the best feasible end point:
/// lowest objective, then lowest violation, then lowest start index.
pub fn solve_dc_from(prog: &DCProgram, opts: &SolveOptions, starts: &[Vec<f64>]) -> Result<DCSolution, DcError> {
    opts.validate()?;
    if starts.is_empty() {
        return Err(DcError::InvalidOptions("no start points".into()));
    }
    if starts.iter().any(|s| s.len() != prog.len()) {
        return Err(DcError::InvalidProgram("start point has the wrong size".into()));
    }
    let runs: Vec<Result<(Vec<f64>, SolveTrace), DcError>> = starts
        .par_iter()
        .enumerate()
        .map(|(k, w0)| solve_from_start(prog, opts, k, w0))
        .collect();

    let mut best: Option<(f64, f64, usize)> = None;
    let mut best_violation = f64::INFINITY;
    let mut first_error = None;
    let mut all_traces = Vec::with_capacity(runs.len());
    let mut points = Vec::with_capacity(runs.len());
    for (k, run) in runs.into_iter().enumerate() {
        match run {
            Ok((w, trace)) => {
                let obj = prog.objective_value(&w);
                let viol = prog.max_violation(&w);
                best_violation = best_violation.min(viol);
                if viol <= opts.tol_feasibility {
                    let better = match best {
                        None => true,
                        Some((bo, bv, _)) => obj < bo || (obj == bo && viol < bv),
                    };
                    if better {
                        best = Some((obj, viol, k));
                    }
                }
                all_traces.push(trace);
                points.push(Some(w));
            }
            Err(e) => {
                log::warn!("start {k} failed: {e}");
                first_error.get_or_insert(e);
                all_traces.push(SolveTrace {
                    start: k,
                    rows: Vec::new(),
                    converged: false,
                });
                points.push(None);
            }
        }
    }
    match best {
        Some((objective, violation, k)) => Ok(DCSolution {
            w: points[k].take().expect("successful start has a point"),
            objective,
            violation,
            start: k,
            trace: all_traces[k].clone(),
            all_traces,
            guarantee: Guarantee::LocalOnly,
        }),
        None => {
            if best_violation.is_infinite() {
                Err(first_error.expect("every start failed"))
            } else {
                Err(DcError::NoFeasiblePointFound {
                    starts: starts.len(),
                    best_violation,
                })
            }
        }
    }
}
