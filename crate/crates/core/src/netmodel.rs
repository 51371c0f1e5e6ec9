//! Buffer network model.
//!
//! A buffer network is a weighted digraph whose nodes store a conserved
//! quantity. Node `j` pushes flow `δ_jk · w_jk · x_j` along each out-edge
//! `(j, k)` and destinations additionally drain at rate `β_j`. Origins receive
//! the exogenous inflow. Under Markov switching each mode carries its own edge
//! weights while the node set, the terminals and the tuning parameters are
//! shared by every mode.
//!
//! Nodes are indexed from zero throughout.

use std::collections::HashMap;

use log::warn;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Absolute tolerance on generator row sums.
pub const GENERATOR_ROW_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("origin {node} has inflow from node {from}")]
    OriginHasInflow { node: usize, from: usize },
    #[error("destination {node} has outflow to node {to}")]
    DestinationHasOutflow { node: usize, to: usize },
    #[error("edge ({from}, {to}) has nonpositive weight {weight}")]
    NonpositiveWeight { from: usize, to: usize, weight: f64 },
    #[error("edge ({from}, {to}) is listed twice")]
    DuplicateEdge { from: usize, to: usize },
    #[error("edge ({node}, {node}) is a self-loop")]
    SelfLoop { node: usize },
    #[error("node {node} is out of range for a network with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("node {node} is both an origin and a destination")]
    TerminalOverlap { node: usize },
    #[error("network has no origins")]
    NoOrigins,
    #[error("network has no destinations")]
    NoDestinations,
    #[error("generator row {0} does not sum to zero")]
    RowSumNonzero(usize),
    #[error("generator entry ({0}, {1}) is a negative rate")]
    NegativeRate(usize, usize),
    #[error("generator is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("mode count mismatch: {graphs} graphs but {modes} chain modes")]
    ModeMismatch { graphs: usize, modes: usize },
    #[error("per-mode graphs disagree on {0}")]
    InconsistentModes(&'static str),
    #[error("parameter {name} = {value} is outside (0, {bound}]")]
    ParamOutOfBounds { name: String, value: f64, bound: f64 },
    #[error("parameter vector {name} has length {got}, expected {expected}")]
    ParamLength { name: &'static str, got: usize, expected: usize },
    #[error("invalid bound {name} = {value}")]
    InvalidBound { name: String, value: f64 },
    #[error("mode {mode} out of range ({modes} modes)")]
    ModeOutOfRange { mode: usize, modes: usize },
    #[error("output weight alpha must be finite and nonnegative, got {0}")]
    InvalidAlpha(f64),
    #[error("price elasticity must be positive, got {0}")]
    NonpositiveElasticity(f64),
}

/// A directed edge with its flow weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

/// Raw description of a graph before validation.
#[derive(Debug, Clone, Default)]
pub struct GraphSpec {
    pub n: usize,
    pub edges: Vec<Edge>,
    pub origins: Vec<usize>,
    pub destinations: Vec<usize>,
}

/// A validated single-mode buffer graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
    origins: Vec<usize>,
    destinations: Vec<usize>,
}

impl Graph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn origins(&self) -> &[usize] {
        &self.origins
    }

    pub fn destinations(&self) -> &[usize] {
        &self.destinations
    }

    pub fn out_edges(&self, node: usize) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.from == node)
    }

    pub fn in_edges(&self, node: usize) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.to == node)
    }
}

/// Validates a graph description.
pub fn build_graph(spec: GraphSpec) -> Result<Graph, ModelError> {
    let n = spec.n;
    let check_node = |node: usize| {
        if node >= n {
            Err(ModelError::NodeOutOfRange { node, n })
        } else {
            Ok(())
        }
    };
    let mut is_origin = vec![false; n];
    let mut is_dest = vec![false; n];
    for &o in &spec.origins {
        check_node(o)?;
        is_origin[o] = true;
    }
    for &d in &spec.destinations {
        check_node(d)?;
        if is_origin[d] {
            return Err(ModelError::TerminalOverlap { node: d });
        }
        is_dest[d] = true;
    }

    let mut seen = HashMap::new();
    for e in &spec.edges {
        check_node(e.from)?;
        check_node(e.to)?;
        if e.from == e.to {
            return Err(ModelError::SelfLoop { node: e.from });
        }
        if !(e.weight > 0.0) || !e.weight.is_finite() {
            return Err(ModelError::NonpositiveWeight {
                from: e.from,
                to: e.to,
                weight: e.weight,
            });
        }
        if seen.insert((e.from, e.to), ()).is_some() {
            return Err(ModelError::DuplicateEdge {
                from: e.from,
                to: e.to,
            });
        }
        if is_origin[e.to] {
            return Err(ModelError::OriginHasInflow {
                node: e.to,
                from: e.from,
            });
        }
        if is_dest[e.from] {
            return Err(ModelError::DestinationHasOutflow {
                node: e.from,
                to: e.to,
            });
        }
    }

    if spec.origins.is_empty() {
        return Err(ModelError::NoOrigins);
    }
    if spec.destinations.is_empty() {
        return Err(ModelError::NoDestinations);
    }
    let mut origins = spec.origins;
    origins.dedup();
    let mut destinations = spec.destinations;
    destinations.dedup();
    Ok(Graph {
        n,
        edges: spec.edges,
        origins,
        destinations,
    })
}

/// Weighted adjacency matrix: entry `(i, j)` is `w_ji` when `(j, i)` is an
/// edge, so column `j` carries node `j`'s outgoing weights.
pub fn adjacency(g: &Graph) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(g.n, g.n);
    for e in &g.edges {
        m[(e.to, e.from)] = e.weight;
    }
    m
}

/// `true` iff every off-diagonal entry is nonnegative.
pub fn metzler_check(m: &DMatrix<f64>) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] >= 0.0))
}

/// Transition-rate matrix of the mode process.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    rates: DMatrix<f64>,
}

impl MarkovChain {
    /// Validates the generator and wraps it.
    pub fn new(rates: DMatrix<f64>) -> Result<Self, ModelError> {
        validate_generator(&rates)?;
        if rates.nrows() > 1 {
            let n = rates.nrows();
            if (0..n).any(|i| (0..n).any(|j| i != j && rates[(i, j)] == 0.0)) {
                warn!("generator has zero off-diagonal rates; some mode transitions never occur");
            }
        }
        Ok(Self { rates })
    }

    /// The trivial chain with one mode and no switching.
    pub fn single() -> Self {
        Self {
            rates: DMatrix::zeros(1, 1),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ModelError> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(ModelError::NotSquare {
                rows: n,
                cols: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn modes(&self) -> usize {
        self.rates.nrows()
    }

    pub fn rates(&self) -> &DMatrix<f64> {
        &self.rates
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.rates[(from, to)]
    }

    /// Total exit rate of a mode, `-π_ii`.
    pub fn exit_rate(&self, mode: usize) -> f64 {
        -self.rates[(mode, mode)]
    }

    /// Stationary distribution, solving `pᵀΠ = 0`, `1ᵀp = 1`.
    ///
    /// Falls back to the uniform distribution when the chain is reducible
    /// enough for the linear system to be singular.
    pub fn stationary(&self) -> Vec<f64> {
        let n = self.modes();
        if n == 1 {
            return vec![1.0];
        }
        let mut m = self.rates.transpose();
        for j in 0..n {
            m[(n - 1, j)] = 1.0;
        }
        let mut rhs = DVector::zeros(n);
        rhs[n - 1] = 1.0;
        match m.lu().solve(&rhs) {
            Some(p) if p.iter().all(|x| x.is_finite() && *x >= -1e-12) => {
                p.iter().map(|x| x.max(0.0)).collect()
            }
            _ => vec![1.0 / n as f64; n],
        }
    }
}

/// Checks the generator conditions: zero row sums and nonnegative
/// off-diagonal rates.
pub fn validate_generator(rates: &DMatrix<f64>) -> Result<(), ModelError> {
    if !rates.is_square() {
        return Err(ModelError::NotSquare {
            rows: rates.nrows(),
            cols: rates.ncols(),
        });
    }
    let n = rates.nrows();
    for i in 0..n {
        for j in 0..n {
            if i != j && (rates[(i, j)] < 0.0 || !rates[(i, j)].is_finite()) {
                return Err(ModelError::NegativeRate(i, j));
            }
        }
        let sum: f64 = rates.row(i).iter().sum();
        if !(sum.abs() <= GENERATOR_ROW_TOL) {
            return Err(ModelError::RowSumNonzero(i));
        }
    }
    Ok(())
}

/// Upper limits of the tunable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBounds {
    /// One per destination, in `destinations()` order.
    pub beta_bar: Vec<f64>,
    /// One per network edge, in `edges()` order.
    pub delta_bar: Vec<f64>,
}

/// Destination decay rates and per-edge flow multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningParams {
    /// One per destination, in `destinations()` order.
    pub beta: Vec<f64>,
    /// One per network edge, in `edges()` order.
    pub delta: Vec<f64>,
}

impl TuningParams {
    pub fn uniform(net: &BufferNetwork, beta: f64, delta: f64) -> Self {
        Self {
            beta: vec![beta; net.destinations().len()],
            delta: vec![delta; net.edges().len()],
        }
    }

    /// Checks `0 < β ≤ β̄` and `0 < δ ≤ δ̄`.
    pub fn check(&self, net: &BufferNetwork) -> Result<(), ModelError> {
        self.check_shape(net)?;
        let bounds = net.bounds();
        for (k, (&b, &bb)) in self.beta.iter().zip(&bounds.beta_bar).enumerate() {
            if !(b > 0.0 && b <= bb) {
                return Err(ModelError::ParamOutOfBounds {
                    name: net.beta_name(k),
                    value: b,
                    bound: bb,
                });
            }
        }
        for (k, (&d, &db)) in self.delta.iter().zip(&bounds.delta_bar).enumerate() {
            if !(d > 0.0 && d <= db) {
                return Err(ModelError::ParamOutOfBounds {
                    name: net.delta_name(k),
                    value: d,
                    bound: db,
                });
            }
        }
        Ok(())
    }

    fn check_shape(&self, net: &BufferNetwork) -> Result<(), ModelError> {
        if self.beta.len() != net.destinations().len() {
            return Err(ModelError::ParamLength {
                name: "beta",
                got: self.beta.len(),
                expected: net.destinations().len(),
            });
        }
        if self.delta.len() != net.edges().len() {
            return Err(ModelError::ParamLength {
                name: "delta",
                got: self.delta.len(),
                expected: net.edges().len(),
            });
        }
        Ok(())
    }
}

/// State, input and output matrices of one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSystem {
    /// Metzler state matrix, n×n.
    pub a: DMatrix<f64>,
    /// Input matrix, n×s with s the number of origins.
    pub g_in: DMatrix<f64>,
    /// Output matrix `[I_n; α·H(δ)]`, (n+m)×n.
    pub g_out: DMatrix<f64>,
    pub alpha: f64,
}

impl ModeSystem {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.g_in.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.g_out.nrows()
    }
}

/// A Markov jump linear system: one [`ModeSystem`] per chain mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedSystem {
    modes: Vec<ModeSystem>,
    chain: MarkovChain,
}

impl SwitchedSystem {
    /// Assembles a switched system from raw matrices. All modes must agree on
    /// the state, input and output dimensions.
    pub fn new(modes: Vec<ModeSystem>, chain: MarkovChain) -> Result<Self, ModelError> {
        if modes.len() != chain.modes() {
            return Err(ModelError::ModeMismatch {
                graphs: modes.len(),
                modes: chain.modes(),
            });
        }
        let first = &modes[0];
        for m in &modes {
            if m.a.shape() != first.a.shape() || !m.a.is_square() {
                return Err(ModelError::InconsistentModes("state dimension"));
            }
            if m.g_in.shape() != first.g_in.shape() || m.g_in.nrows() != m.n() {
                return Err(ModelError::InconsistentModes("input matrix shape"));
            }
            if m.g_out.shape() != first.g_out.shape() || m.g_out.ncols() != m.n() {
                return Err(ModelError::InconsistentModes("output matrix shape"));
            }
        }
        Ok(Self { modes, chain })
    }

    pub fn modes(&self) -> &[ModeSystem] {
        &self.modes
    }

    pub fn mode(&self, i: usize) -> &ModeSystem {
        &self.modes[i]
    }

    pub fn chain(&self) -> &MarkovChain {
        &self.chain
    }

    pub fn n(&self) -> usize {
        self.modes[0].n()
    }

    pub fn inputs(&self) -> usize {
        self.modes[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.modes[0].outputs()
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }
}

/// A Markov-switching buffer network with its tuning bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct BufferNetwork {
    graphs: Vec<Graph>,
    chain: MarkovChain,
    alpha: f64,
    /// Union of the per-mode edge sets, in first-appearance order.
    edges: Vec<(usize, usize)>,
    bounds: ParamBounds,
}

impl BufferNetwork {
    pub fn new(
        graphs: Vec<Graph>,
        chain: MarkovChain,
        alpha: f64,
        bounds: ParamBounds,
    ) -> Result<Self, ModelError> {
        if graphs.len() != chain.modes() {
            return Err(ModelError::ModeMismatch {
                graphs: graphs.len(),
                modes: chain.modes(),
            });
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(ModelError::InvalidAlpha(alpha));
        }
        let first = &graphs[0];
        for g in &graphs[1..] {
            if g.n != first.n {
                return Err(ModelError::InconsistentModes("node count"));
            }
            if g.origins != first.origins {
                return Err(ModelError::InconsistentModes("origins"));
            }
            if g.destinations != first.destinations {
                return Err(ModelError::InconsistentModes("destinations"));
            }
        }
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for g in &graphs {
            for e in &g.edges {
                if !edges.contains(&(e.from, e.to)) {
                    edges.push((e.from, e.to));
                }
            }
        }
        if bounds.beta_bar.len() != first.destinations.len() {
            return Err(ModelError::ParamLength {
                name: "beta_bar",
                got: bounds.beta_bar.len(),
                expected: first.destinations.len(),
            });
        }
        if bounds.delta_bar.len() != edges.len() {
            return Err(ModelError::ParamLength {
                name: "delta_bar",
                got: bounds.delta_bar.len(),
                expected: edges.len(),
            });
        }
        let net = Self {
            graphs,
            chain,
            alpha,
            edges,
            bounds,
        };
        for (k, &b) in net.bounds.beta_bar.iter().enumerate() {
            if !(b > 0.0 && b.is_finite()) {
                return Err(ModelError::InvalidBound {
                    name: format!("{}_bar", net.beta_name(k)),
                    value: b,
                });
            }
        }
        for (k, &b) in net.bounds.delta_bar.iter().enumerate() {
            if !(b > 0.0 && b.is_finite()) {
                return Err(ModelError::InvalidBound {
                    name: format!("{}_bar", net.delta_name(k)),
                    value: b,
                });
            }
        }
        Ok(net)
    }

    /// Single-mode network.
    pub fn single(graph: Graph, alpha: f64, bounds: ParamBounds) -> Result<Self, ModelError> {
        Self::new(vec![graph], MarkovChain::single(), alpha, bounds)
    }

    pub fn n(&self) -> usize {
        self.graphs[0].n
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn graph(&self, mode: usize) -> &Graph {
        &self.graphs[mode]
    }

    pub fn chain(&self) -> &MarkovChain {
        &self.chain
    }

    pub fn modes(&self) -> usize {
        self.graphs.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self, ModelError> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(ModelError::InvalidAlpha(alpha));
        }
        self.alpha = alpha;
        Ok(self)
    }

    pub fn origins(&self) -> &[usize] {
        &self.graphs[0].origins
    }

    pub fn destinations(&self) -> &[usize] {
        &self.graphs[0].destinations
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn bounds(&self) -> &ParamBounds {
        &self.bounds
    }

    pub fn edge_index(&self, from: usize, to: usize) -> Option<usize> {
        self.edges.iter().position(|&e| e == (from, to))
    }

    /// Weight of union edge `k` in `mode`, zero when the edge is inactive there.
    pub fn weight(&self, mode: usize, k: usize) -> f64 {
        let (from, to) = self.edges[k];
        self.graphs[mode]
            .edges
            .iter()
            .find(|e| e.from == from && e.to == to)
            .map_or(0.0, |e| e.weight)
    }

    /// Position of `node` in the destination list.
    pub fn destination_slot(&self, node: usize) -> Option<usize> {
        self.destinations().iter().position(|&d| d == node)
    }

    pub fn beta_name(&self, k: usize) -> String {
        format!("beta_{}", self.destinations()[k])
    }

    pub fn delta_name(&self, k: usize) -> String {
        let (i, j) = self.edges[k];
        format!("delta_{i}_{j}")
    }

    /// Assembles the system of every mode.
    pub fn switched_system(&self, p: &TuningParams) -> Result<SwitchedSystem, ModelError> {
        p.check(self)?;
        let modes = (0..self.modes())
            .map(|m| self.mode_matrices(&p.beta, &p.delta, m))
            .collect();
        SwitchedSystem::new(modes, self.chain.clone())
    }

    /// Assembles the switched system without the parameter bounds check.
    /// Zero parameters are allowed, e.g. to model a closed network.
    pub fn switched_system_unchecked(
        &self,
        beta: &[f64],
        delta: &[f64],
    ) -> Result<SwitchedSystem, ModelError> {
        let modes = (0..self.modes())
            .map(|m| self.mode_matrices(beta, delta, m))
            .collect();
        SwitchedSystem::new(modes, self.chain.clone())
    }

    fn mode_matrices(&self, beta: &[f64], delta: &[f64], mode: usize) -> ModeSystem {
        let (ao, ad) = self.split_matrices(beta, delta, mode);
        let n = self.n();
        let s = self.origins().len();
        let m = self.edges.len();
        let mut g_in = DMatrix::zeros(n, s);
        for (k, &o) in self.origins().iter().enumerate() {
            g_in[(o, k)] = 1.0;
        }
        let mut g_out = DMatrix::zeros(n + m, n);
        for i in 0..n {
            g_out[(i, i)] = 1.0;
        }
        for (l, &(from, _)) in self.edges.iter().enumerate() {
            g_out[(n + l, from)] = self.alpha * delta[l] * self.weight(mode, l);
        }
        ModeSystem {
            a: ao - ad,
            g_in,
            g_out,
            alpha: self.alpha,
        }
    }

    /// Off-diagonal flow part and diagonal decay part of the state matrix.
    fn split_matrices(
        &self,
        beta: &[f64],
        delta: &[f64],
        mode: usize,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.n();
        let mut ao = DMatrix::zeros(n, n);
        let mut ad = DMatrix::zeros(n, n);
        for (k, &(from, to)) in self.edges.iter().enumerate() {
            let w = self.weight(mode, k);
            if w > 0.0 {
                ao[(to, from)] = delta[k] * w;
                ad[(from, from)] += delta[k] * w;
            }
        }
        for (k, &d) in self.destinations().iter().enumerate() {
            ad[(d, d)] += beta[k];
        }
        (ao, ad)
    }
}

/// System matrices of one mode for validated parameters.
pub fn assemble_system(
    net: &BufferNetwork,
    p: &TuningParams,
    mode: usize,
) -> Result<ModeSystem, ModelError> {
    if mode >= net.modes() {
        return Err(ModelError::ModeOutOfRange {
            mode,
            modes: net.modes(),
        });
    }
    p.check(net)?;
    Ok(net.mode_matrices(&p.beta, &p.delta, mode))
}

/// Splits the state matrix as `A = Ao − Ad` with `Ao = D∘A_G` off-diagonal
/// and `Ad = diag(1ᵀ(D∘A_G)) + B` diagonal, both entrywise nonnegative.
pub fn decompose_a(
    net: &BufferNetwork,
    p: &TuningParams,
    mode: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>), ModelError> {
    if mode >= net.modes() {
        return Err(ModelError::ModeOutOfRange {
            mode,
            modes: net.modes(),
        });
    }
    p.check(net)?;
    Ok(net.split_matrices(&p.beta, &p.delta, mode))
}

/// Dynamic-pricing rule of a one-way car-sharing edge.
///
/// With affine demand `u = ū − δ(p − p̄)` and the price law
/// `p = p̂ − w·x`, choosing `p̂ = p̄ + ū/δ` reduces the expected trip flow to
/// `u = δ·w·x`, the linear flow law of the buffer model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PricingRule {
    pub base_demand: f64,
    pub base_price: f64,
    pub elasticity: f64,
    pub weight: f64,
    /// Price offset `p̂`.
    pub price_offset: f64,
}

impl PricingRule {
    /// Price charged when `x` vehicles are parked at the source station.
    pub fn price(&self, x: f64) -> f64 {
        self.price_offset - self.weight * x
    }

    /// Expected demand at price `p`.
    pub fn demand(&self, p: f64) -> f64 {
        self.base_demand - self.elasticity * (p - self.base_price)
    }

    /// Induced flow `δ·w·x`.
    pub fn flow(&self, x: f64) -> f64 {
        self.elasticity * self.weight * x
    }

    /// Flow multiplier `δ·w` entering the state matrix.
    pub fn flow_gain(&self) -> f64 {
        self.elasticity * self.weight
    }
}

pub fn carsharing_params(
    base_demand: f64,
    base_price: f64,
    elasticity: f64,
    weight: f64,
) -> Result<PricingRule, ModelError> {
    if !(elasticity > 0.0) {
        return Err(ModelError::NonpositiveElasticity(elasticity));
    }
    Ok(PricingRule {
        base_demand,
        base_price,
        elasticity,
        weight,
        price_offset: base_price + base_demand / elasticity,
    })
}
