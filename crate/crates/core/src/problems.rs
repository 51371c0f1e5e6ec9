//! DC programs for gain-optimal tuning of a buffer network.
//!
//! Unknowns are taken in log form: `g = log γ`, `ν = log v` for the
//! certificate vector of each mode, `φ = log β` and `η = log δ`. With this
//! substitution every entry of the certificate inequalities splits into a
//! posynomial `P` of positive terms and a posynomial `Q` of negative terms,
//! and `P ≤ Q` becomes the DC constraint `log P − log Q ≤ 0`.
//!
//! * L1 problem: minimize `g` subject to the row-form certificate
//!   inequalities, `v_{i,o} ≤ γ` at each origin, `L(β, δ) ≤ L̄` and the upper
//!   bounds on `β`, `δ`.
//! * L∞ problem: minimize `log L(β, δ)` subject to the column-form
//!   certificate inequalities, `G_out(δ) v_i ≤ γ̄` and the same bounds.
//! * GP baseline: the L1 problem with one `η` shared by all out-edges of a
//!   node.

use nalgebra::DVector;
use thiserror::Error;

use crate::dcsolve::{solve_dc_from, DCObjective, DCProgram, DCSolution, DcError, SolveOptions};
use crate::gains::{self, lifted_matrix, GainError, GainNorm};
use crate::netmodel::{BufferNetwork, ModelError, TuningParams};
use crate::posylog::{DCConstraint, Monomial, PosyError, Posynomial, VarSpace};

/// Half-width in log space below the upper bound of the safeguard box on
/// `φ` and `η`.
const LOG_PARAM_SPAN: f64 = 20.0;
/// Safeguard box on `g` and `ν`.
const LOG_CERT_BOUND: f64 = 40.0;
/// Relative tolerance when clipping solver output onto the parameter bounds.
const BOUND_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("cost is not a posynomial in its own parameter: {0}")]
    NonPosynomialCost(String),
    #[error("network has no destinations")]
    EmptyDestinations,
    #[error("gain bound must be positive, got {0}")]
    NonpositiveGammaBound(f64),
    #[error("budget must be positive, got {0}")]
    NonpositiveBudget(f64),
    #[error("the {0} problem needs a {1}")]
    MissingTarget(&'static str, &'static str),
    #[error("{name} = {value} violates its bound {bound}")]
    BoundViolation { name: String, value: f64, bound: f64 },
    #[error("certificate inequality for node {node} in mode {mode} has no negative terms and cannot hold")]
    UnsatisfiableRow { mode: usize, node: usize },
    #[error("solution vector has {got} entries, map expects {expected}")]
    SolutionLength { expected: usize, got: usize },
    #[error("optimized parameters fail verification: {0}")]
    Verification(String),
    #[error(transparent)]
    Solve(#[from] DcError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Gain(#[from] GainError),
    #[error(transparent)]
    Posy(#[from] PosyError),
}

/// Separable cost `L(β, δ) = Σ g_i(β_i) + Σ h_ij(δ_ij)`.
///
/// Each posynomial is written in a single variable with index 0 standing for
/// its own parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    pub g: Vec<Posynomial>,
    pub h: Vec<Posynomial>,
    pub budget: Option<f64>,
    pub gamma_bound: Option<f64>,
}

impl CostModel {
    /// Checks shapes against the network and that every term depends on
    /// variable 0 only.
    pub fn new(
        net: &BufferNetwork,
        g: Vec<Posynomial>,
        h: Vec<Posynomial>,
        budget: Option<f64>,
        gamma_bound: Option<f64>,
    ) -> Result<Self, ProblemError> {
        if g.len() != net.destinations().len() {
            return Err(ProblemError::NonPosynomialCost(format!(
                "{} destination costs for {} destinations",
                g.len(),
                net.destinations().len()
            )));
        }
        if h.len() != net.edges().len() {
            return Err(ProblemError::NonPosynomialCost(format!(
                "{} edge costs for {} edges",
                h.len(),
                net.edges().len()
            )));
        }
        for (name, f) in g
            .iter()
            .enumerate()
            .map(|(k, f)| (net.beta_name(k), f))
            .chain(h.iter().enumerate().map(|(k, f)| (net.delta_name(k), f)))
        {
            if f.max_index().is_some_and(|i| i > 0) {
                return Err(ProblemError::NonPosynomialCost(format!(
                    "cost of {name} depends on another variable"
                )));
            }
        }
        Ok(Self {
            g,
            h,
            budget,
            gamma_bound,
        })
    }

    /// `Σ c_i β_i + Σ c_ij δ_ij` with unit coefficients.
    pub fn linear(net: &BufferNetwork) -> Self {
        let unit = || Posynomial::from(Monomial::var(1.0, 0).expect("positive coefficient"));
        Self {
            g: (0..net.destinations().len()).map(|_| unit()).collect(),
            h: (0..net.edges().len()).map(|_| unit()).collect(),
            budget: None,
            gamma_bound: None,
        }
    }

    /// Builds a cost from `(coefficient, exponent)` term lists.
    pub fn from_terms(
        net: &BufferNetwork,
        g: &[Vec<(f64, f64)>],
        h: &[Vec<(f64, f64)>],
    ) -> Result<Self, ProblemError> {
        let posy = |terms: &[(f64, f64)], name: String| -> Result<Posynomial, ProblemError> {
            let monos = terms
                .iter()
                .map(|&(c, a)| Monomial::new(c, [(0, a)]))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| ProblemError::NonPosynomialCost(format!("{name}: {e}")))?;
            Posynomial::new(monos).map_err(|e| ProblemError::NonPosynomialCost(format!("{name}: {e}")))
        };
        let g = g
            .iter()
            .enumerate()
            .map(|(k, t)| posy(t, net.beta_name(k)))
            .collect::<Result<Vec<_>, _>>()?;
        let h = h
            .iter()
            .enumerate()
            .map(|(k, t)| posy(t, net.delta_name(k)))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(net, g, h, None, None)
    }

    pub fn with_budget(mut self, budget: f64) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn with_gamma_bound(mut self, gamma_bound: f64) -> Self {
        self.gamma_bound = Some(gamma_bound);
        self
    }

    /// `L(β, δ)`.
    pub fn evaluate(&self, p: &TuningParams) -> f64 {
        let eval = |f: &Posynomial, x: f64| f.eval(&[x]).unwrap_or(f64::NAN);
        self.g.iter().zip(&p.beta).map(|(f, &b)| eval(f, b)).sum::<f64>()
            + self.h.iter().zip(&p.delta).map(|(f, &d)| eval(f, d)).sum::<f64>()
    }
}

/// Location of each unknown in the program's variable vector.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableMap {
    /// `g = log γ`; absent in the L∞ problem.
    pub gamma: Option<usize>,
    /// `ν[mode][node]`.
    pub nu: Vec<Vec<usize>>,
    /// `φ` per destination.
    pub phi: Vec<usize>,
    /// `η` per network edge; edges sharing a source share the slot in the
    /// GP baseline.
    pub eta: Vec<usize>,
    pub beta_bar: Vec<f64>,
    pub delta_bar: Vec<f64>,
    pub beta_names: Vec<String>,
    pub delta_names: Vec<String>,
    pub len: usize,
}

/// Which program to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    L1,
    Linf,
    /// L1 objective with `η` shared across the out-edges of each node.
    GpBaseline,
}

impl ProblemKind {
    pub fn norm(self) -> GainNorm {
        match self {
            ProblemKind::Linf => GainNorm::Linf,
            _ => GainNorm::L1,
        }
    }
}

struct Layout {
    vars: VarSpace,
    map: VariableMap,
    lower: Vec<f64>,
    upper: Vec<f64>,
    start_box: Vec<(f64, f64)>,
}

fn layout(net: &BufferNetwork, with_gamma: bool, tie: bool) -> Layout {
    let mut vars = VarSpace::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut start_box = Vec::new();
    let mut push = |vars: &mut VarSpace, name: String, lo: f64, hi: f64, start: (f64, f64)| {
        lower.push(lo);
        upper.push(hi);
        start_box.push(start);
        vars.push(name)
    };
    let gamma = with_gamma.then(|| push(&mut vars, "g".into(), -LOG_CERT_BOUND, LOG_CERT_BOUND, (0.0, 0.0)));
    let nu = (0..net.modes())
        .map(|m| {
            (0..net.n())
                .map(|i| push(&mut vars, format!("nu[{m},{i}]"), -LOG_CERT_BOUND, LOG_CERT_BOUND, (0.0, 0.0)))
                .collect()
        })
        .collect();
    let bounds = net.bounds();
    let param_box = |bar: f64| {
        let top = bar.ln();
        (top - LOG_PARAM_SPAN, top + 1.0, (top - std::f64::consts::LN_10, top))
    };
    let phi = net
        .destinations()
        .iter()
        .zip(&bounds.beta_bar)
        .map(|(&node, &bar)| {
            let (lo, hi, st) = param_box(bar);
            push(&mut vars, format!("phi[{node}]"), lo, hi, st)
        })
        .collect();
    let delta_bar = if tie { tied_delta_bar(net) } else { bounds.delta_bar.clone() };
    let eta = if tie {
        let mut slot_of_node: Vec<Option<usize>> = vec![None; net.n()];
        net.edges()
            .iter()
            .enumerate()
            .map(|(k, &(from, _))| {
                *slot_of_node[from].get_or_insert_with(|| {
                    let (lo, hi, st) = param_box(delta_bar[k]);
                    push(&mut vars, format!("eta[{from}]"), lo, hi, st)
                })
            })
            .collect()
    } else {
        net.edges()
            .iter()
            .zip(&delta_bar)
            .map(|(&(from, to), &bar)| {
                let (lo, hi, st) = param_box(bar);
                push(&mut vars, format!("eta[{from},{to}]"), lo, hi, st)
            })
            .collect()
    };
    let len = vars.len();
    Layout {
        map: VariableMap {
            gamma,
            nu,
            phi,
            eta,
            beta_bar: bounds.beta_bar.clone(),
            delta_bar,
            beta_names: (0..net.destinations().len()).map(|k| net.beta_name(k)).collect(),
            delta_names: (0..net.edges().len()).map(|k| net.delta_name(k)).collect(),
            len,
        },
        vars,
        lower,
        upper,
        start_box,
    }
}

/// With one `δ` per source node, the binding bound is the smallest bound
/// among that node's edges.
fn tied_delta_bar(net: &BufferNetwork) -> Vec<f64> {
    let bars = &net.bounds().delta_bar;
    net.edges()
        .iter()
        .map(|&(from, _)| {
            net.edges()
                .iter()
                .zip(bars)
                .filter(|((f, _), _)| *f == from)
                .map(|(_, &b)| b)
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn mono(c: f64, exps: &[(usize, f64)]) -> Monomial {
    Monomial::new(c, exps.iter().copied()).expect("builder coefficients are positive")
}

/// Rewrites a single-variable cost in terms of program variable `idx`.
fn relabel(f: &Posynomial, idx: usize) -> Vec<Monomial> {
    f.terms()
        .iter()
        .map(|t| Monomial::new(t.coeff(), t.exponents().iter().map(|&(_, a)| (idx, a))).expect("coefficient already positive"))
        .collect()
}

/// `L(e^φ, e^η) / scale`.
fn cost_posynomial(cost: &CostModel, map: &VariableMap, scale: f64) -> Result<Posynomial, ProblemError> {
    let mut terms = Vec::new();
    for (f, &idx) in cost.g.iter().zip(&map.phi) {
        terms.extend(relabel(f, idx));
    }
    for (f, &idx) in cost.h.iter().zip(&map.eta) {
        terms.extend(relabel(f, idx));
    }
    let terms = terms
        .into_iter()
        .map(|t| Monomial::new(t.coeff() / scale, t.exponents().iter().copied()))
        .collect::<Result<Vec<_>, _>>()?;
    Posynomial::new(terms).map_err(|_| ProblemError::NonPosynomialCost("cost has no terms".into()))
}

fn box_constraints(map: &VariableMap) -> Vec<DCConstraint> {
    let one = || Posynomial::from(mono(1.0, &[]));
    let mut out = Vec::new();
    for (k, (&idx, &bar)) in map.phi.iter().zip(&map.beta_bar).enumerate() {
        out.push(DCConstraint::new(
            mono(1.0 / bar, &[(idx, 1.0)]).into(),
            one(),
            format!("{} <= bar", map.beta_names[k]),
        ));
    }
    let mut seen = Vec::new();
    for (k, (&idx, &bar)) in map.eta.iter().zip(&map.delta_bar).enumerate() {
        if seen.contains(&idx) {
            continue;
        }
        seen.push(idx);
        out.push(DCConstraint::new(
            mono(1.0 / bar, &[(idx, 1.0)]).into(),
            one(),
            format!("{} <= bar", map.delta_names[k]),
        ));
    }
    out
}

/// Entry `c` of the row-form inequality of mode `m`:
/// `Σ_r v_r A[r,c] + Σ_j π_mj v_{j,c} + (1ᵀG_out)_c ≤ 0`.
fn row_constraint(net: &BufferNetwork, map: &VariableMap, m: usize, c: usize) -> Result<DCConstraint, ProblemError> {
    let pi = net.chain().rates();
    let alpha = net.alpha();
    let mut p = vec![mono(1.0, &[])];
    let mut q = Vec::new();
    for (k, &(from, to)) in net.edges().iter().enumerate() {
        let w = net.weight(m, k);
        if from != c || w == 0.0 {
            continue;
        }
        let eta = map.eta[k];
        p.push(mono(w, &[(map.nu[m][to], 1.0), (eta, 1.0)]));
        if alpha > 0.0 {
            p.push(mono(alpha * w, &[(eta, 1.0)]));
        }
        q.push(mono(w, &[(map.nu[m][c], 1.0), (eta, 1.0)]));
    }
    for j in 0..net.modes() {
        if j != m && pi[(m, j)] > 0.0 {
            p.push(mono(pi[(m, j)], &[(map.nu[j][c], 1.0)]));
        }
    }
    if let Some(slot) = net.destination_slot(c) {
        q.push(mono(1.0, &[(map.nu[m][c], 1.0), (map.phi[slot], 1.0)]));
    }
    if pi[(m, m)] < 0.0 {
        q.push(mono(-pi[(m, m)], &[(map.nu[m][c], 1.0)]));
    }
    let q = Posynomial::from_terms(q).ok_or(ProblemError::UnsatisfiableRow { mode: m, node: c })?;
    Ok(DCConstraint::new(Posynomial::new(p)?, q, format!("row[{m},{c}]")))
}

/// Entry `r` of the column-form inequality of mode `m`:
/// `Σ_c A[r,c] v_c + Σ_j π_mj v_{j,r} + (G_in 1)_r ≤ 0`, or `None` when the
/// positive side is empty.
fn column_constraint(
    net: &BufferNetwork,
    map: &VariableMap,
    m: usize,
    r: usize,
) -> Result<Option<DCConstraint>, ProblemError> {
    let pi = net.chain().rates();
    let mut p = Vec::new();
    let mut q = Vec::new();
    let inflow = net.origins().iter().filter(|&&o| o == r).count();
    if inflow > 0 {
        p.push(mono(inflow as f64, &[]));
    }
    for (k, &(from, to)) in net.edges().iter().enumerate() {
        let w = net.weight(m, k);
        if w == 0.0 {
            continue;
        }
        if to == r {
            p.push(mono(w, &[(map.nu[m][from], 1.0), (map.eta[k], 1.0)]));
        }
        if from == r {
            q.push(mono(w, &[(map.nu[m][r], 1.0), (map.eta[k], 1.0)]));
        }
    }
    for j in 0..net.modes() {
        if j != m && pi[(m, j)] > 0.0 {
            p.push(mono(pi[(m, j)], &[(map.nu[j][r], 1.0)]));
        }
    }
    if let Some(slot) = net.destination_slot(r) {
        q.push(mono(1.0, &[(map.nu[m][r], 1.0), (map.phi[slot], 1.0)]));
    }
    if pi[(m, m)] < 0.0 {
        q.push(mono(-pi[(m, m)], &[(map.nu[m][r], 1.0)]));
    }
    let Some(p) = Posynomial::from_terms(p) else {
        return Ok(None);
    };
    let q = Posynomial::from_terms(q).ok_or(ProblemError::UnsatisfiableRow { mode: m, node: r })?;
    Ok(Some(DCConstraint::new(p, q, format!("col[{m},{r}]"))))
}

fn check_net(net: &BufferNetwork) -> Result<(), ProblemError> {
    if net.destinations().is_empty() {
        return Err(ProblemError::EmptyDestinations);
    }
    Ok(())
}

fn assemble(
    layout: Layout,
    objective: DCObjective,
    constraints: Vec<DCConstraint>,
) -> Result<(DCProgram, VariableMap), ProblemError> {
    let Layout {
        vars,
        map,
        lower,
        upper,
        start_box,
    } = layout;
    let initial: Vec<f64> = start_box.iter().map(|(l, u)| 0.5 * (l + u)).collect();
    let prog = DCProgram::new(vars, objective, constraints, lower, upper)?
        .with_start_box(start_box)?
        .with_initial(initial)?;
    Ok((prog, map))
}

fn build_l1(net: &BufferNetwork, cost: &CostModel, tie: bool) -> Result<(DCProgram, VariableMap), ProblemError> {
    check_net(net)?;
    let budget = cost.budget.ok_or(ProblemError::MissingTarget("l1", "budget"))?;
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(ProblemError::NonpositiveBudget(budget));
    }
    let layout = layout(net, true, tie);
    let map = &layout.map;
    let g = map.gamma.expect("l1 layout has a gamma slot");
    let mut constraints = Vec::new();
    for m in 0..net.modes() {
        for c in 0..net.n() {
            constraints.push(row_constraint(net, map, m, c)?);
        }
    }
    for m in 0..net.modes() {
        for &o in net.origins() {
            constraints.push(DCConstraint::new(
                mono(1.0, &[(map.nu[m][o], 1.0)]).into(),
                mono(1.0, &[(g, 1.0)]).into(),
                format!("input[{m},{o}]"),
            ));
        }
    }
    constraints.push(DCConstraint::new(
        cost_posynomial(cost, map, budget)?,
        mono(1.0, &[]).into(),
        "cost",
    ));
    constraints.extend(box_constraints(map));
    let objective = DCObjective {
        p: mono(1.0, &[(g, 1.0)]).into(),
        q: None,
    };
    assemble(layout, objective, constraints)
}

/// Program minimizing the L1 gain under the budget `cost.budget`.
pub fn build_l1_problem(net: &BufferNetwork, cost: &CostModel) -> Result<(DCProgram, VariableMap), ProblemError> {
    build_l1(net, cost, false)
}

/// [`build_l1_problem`] with a single flow multiplier per source node.
pub fn build_gp_baseline(net: &BufferNetwork, cost: &CostModel) -> Result<(DCProgram, VariableMap), ProblemError> {
    build_l1(net, cost, true)
}

/// Program minimizing the cost subject to the L∞ gain bound
/// `cost.gamma_bound`.
pub fn build_linf_problem(net: &BufferNetwork, cost: &CostModel) -> Result<(DCProgram, VariableMap), ProblemError> {
    check_net(net)?;
    let gamma_bar = cost.gamma_bound.ok_or(ProblemError::MissingTarget("linf", "gamma bound"))?;
    if !(gamma_bar > 0.0 && gamma_bar.is_finite()) {
        return Err(ProblemError::NonpositiveGammaBound(gamma_bar));
    }
    let layout = layout(net, false, false);
    let map = &layout.map;
    let mut constraints = Vec::new();
    for m in 0..net.modes() {
        for r in 0..net.n() {
            if let Some(c) = column_constraint(net, map, m, r)? {
                constraints.push(c);
            }
        }
    }
    let one = || Posynomial::from(mono(1.0, &[]));
    for m in 0..net.modes() {
        for i in 0..net.n() {
            constraints.push(DCConstraint::new(
                mono(1.0 / gamma_bar, &[(map.nu[m][i], 1.0)]).into(),
                one(),
                format!("out[{m},{i}]"),
            ));
        }
        if net.alpha() > 0.0 {
            for (k, &(from, to)) in net.edges().iter().enumerate() {
                let w = net.weight(m, k);
                if w > 0.0 {
                    constraints.push(DCConstraint::new(
                        mono(net.alpha() * w / gamma_bar, &[(map.nu[m][from], 1.0), (map.eta[k], 1.0)]).into(),
                        one(),
                        format!("out[{m},{from}->{to}]"),
                    ));
                }
            }
        }
    }
    constraints.extend(box_constraints(map));
    let objective = DCObjective {
        p: cost_posynomial(cost, map, 1.0)?,
        q: None,
    };
    assemble(layout, objective, constraints)
}

pub fn build_problem(
    net: &BufferNetwork,
    cost: &CostModel,
    kind: ProblemKind,
) -> Result<(DCProgram, VariableMap), ProblemError> {
    match kind {
        ProblemKind::L1 => build_l1_problem(net, cost),
        ProblemKind::Linf => build_linf_problem(net, cost),
        ProblemKind::GpBaseline => build_gp_baseline(net, cost),
    }
}

/// `β = e^φ`, `δ = e^η`. Values within a small relative tolerance above
/// their bound are clipped onto it; larger excursions are errors.
pub fn extract_solution(w: &[f64], map: &VariableMap) -> Result<TuningParams, ProblemError> {
    if w.len() != map.len {
        return Err(ProblemError::SolutionLength {
            expected: map.len,
            got: w.len(),
        });
    }
    let clip = |name: &str, value: f64, bound: f64| {
        if !(value > 0.0 && value.is_finite()) || value > bound * (1.0 + BOUND_TOL) {
            Err(ProblemError::BoundViolation {
                name: name.to_string(),
                value,
                bound,
            })
        } else {
            Ok(value.min(bound))
        }
    };
    let beta = map
        .phi
        .iter()
        .enumerate()
        .map(|(k, &i)| clip(&map.beta_names[k], w[i].exp(), map.beta_bar[k]))
        .collect::<Result<Vec<_>, _>>()?;
    let delta = map
        .eta
        .iter()
        .enumerate()
        .map(|(k, &i)| clip(&map.delta_names[k], w[i].exp(), map.delta_bar[k]))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TuningParams { beta, delta })
}

/// Program point for the given parameters, with `ν` (and `g`) from the
/// minimal certificate of the matching gain LP when the parameters are
/// stable, and zero otherwise.
pub fn encode_start(
    net: &BufferNetwork,
    map: &VariableMap,
    kind: ProblemKind,
    p: &TuningParams,
    base: &[f64],
) -> Vec<f64> {
    let mut w = base.to_vec();
    for (&i, b) in map.phi.iter().zip(&p.beta) {
        w[i] = b.ln();
    }
    for (&i, d) in map.eta.iter().zip(&p.delta) {
        w[i] = d.ln();
    }
    if let Some(cert) = certificate(net, kind, p) {
        let n = net.n();
        for (m, slots) in map.nu.iter().enumerate() {
            for (i, &slot) in slots.iter().enumerate() {
                w[slot] = cert[m * n + i].ln();
            }
        }
        if let Some(g) = map.gamma {
            let cert = &cert;
            let load = (0..net.modes())
                .flat_map(|m| net.origins().iter().map(move |&o| cert[m * n + o]))
                .fold(0.0, f64::max);
            w[g] = (load * (1.0 + 1e-6)).ln();
        }
    } else {
        for slots in &map.nu {
            for &slot in slots {
                w[slot] = 0.0;
            }
        }
    }
    w
}

/// Strictly feasible certificate of the L1 (row) or L∞ (column)
/// inequalities, stacked mode by mode.
fn certificate(net: &BufferNetwork, kind: ProblemKind, p: &TuningParams) -> Option<DVector<f64>> {
    let sys = net.switched_system_unchecked(&p.beta, &p.delta).ok()?;
    let l = lifted_matrix(&sys);
    let n = sys.n();
    let mut rhs = DVector::zeros(n * sys.mode_count());
    for (m, mode) in sys.modes().iter().enumerate() {
        let load = match kind.norm() {
            GainNorm::L1 => mode.g_out.row_sum().transpose(),
            GainNorm::Linf => mode.g_in.column_sum(),
        };
        for i in 0..n {
            rhs[m * n + i] = load[i] + 1e-3;
        }
    }
    let mat = match kind.norm() {
        GainNorm::L1 => -l.transpose(),
        GainNorm::Linf => -l,
    };
    let v = mat.lu().solve(&rhs)?;
    v.iter().all(|&x| x > 0.0 && x.is_finite()).then_some(v)
}

/// Start points for multistart: start 0 uses the geometric midpoint of each
/// parameter's start range and later starts draw parameters log-uniformly
/// from `[bound/10, bound]`.
pub fn start_points(
    net: &BufferNetwork,
    prog: &DCProgram,
    map: &VariableMap,
    kind: ProblemKind,
    count: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    prog.starts(count, seed)
        .into_iter()
        .map(|w| {
            let beta = map.phi.iter().map(|&i| w[i].exp()).collect();
            let delta = map.eta.iter().map(|&i| w[i].exp()).collect();
            encode_start(net, map, kind, &TuningParams { beta, delta }, &w)
        })
        .collect()
}

/// Outcome of an optimization run after independent verification.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningResult {
    pub kind: ProblemKind,
    pub params: TuningParams,
    /// `γ` for L1 problems, the cost for the L∞ problem, as reported by the
    /// solver.
    pub solver_value: f64,
    /// Gain of the extracted parameters from the certificate LP.
    pub verified_gain: f64,
    pub cost: f64,
    pub solution: DCSolution,
    pub map: VariableMap,
}

/// Builds, solves and verifies one problem.
pub fn optimize(
    net: &BufferNetwork,
    cost: &CostModel,
    kind: ProblemKind,
    opts: &SolveOptions,
) -> Result<TuningResult, ProblemError> {
    let (prog, map) = build_problem(net, cost, kind)?;
    let starts = start_points(net, &prog, &map, kind, opts.multistarts, opts.seed);
    let solution = solve_dc_from(&prog, opts, &starts)?;
    let params = extract_solution(&solution.w, &map)?;
    let sys = net.switched_system(&params)?;
    let verified_gain = gains::gain(&sys, kind.norm())?.gamma;
    let solver_value = solution.objective.exp();
    let cost_value = cost.evaluate(&params);
    match kind {
        ProblemKind::L1 | ProblemKind::GpBaseline => {
            if verified_gain > solver_value * (1.0 + 1e-6) + 1e-9 {
                return Err(ProblemError::Verification(format!(
                    "certified gain {verified_gain} exceeds solver value {solver_value}"
                )));
            }
        }
        ProblemKind::Linf => {
            let bound = cost.gamma_bound.expect("checked by the builder");
            if verified_gain > bound * (1.0 + 1e-6) {
                return Err(ProblemError::Verification(format!(
                    "certified gain {verified_gain} exceeds the bound {bound}"
                )));
            }
        }
    }
    Ok(TuningResult {
        kind,
        params,
        solver_value,
        verified_gain,
        cost: cost_value,
        solution,
        map,
    })
}
