//! Monte Carlo simulation of the switched buffer network.
//!
//! Modes follow the Markov chain: holding times are exponential with rate
//! `−π_ii` and the next mode is drawn with probabilities `π_ij / (−π_ii)`.
//! Between jumps the state is integrated with fixed-step RK4, splitting the
//! integration exactly at jump instants, at recording times and at input
//! discontinuities. Each trajectory draws from its own stream seeded with
//! `seed + index`, and trajectories are reduced in fixed-size chunks in index
//! order, so results do not depend on the thread count.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use thiserror::Error;

use super::GainNorm;
use crate::netmodel::{MarkovChain, SwitchedSystem};

const CHUNK: usize = 256;
/// Normal quantile for two-sided 95% intervals.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("horizon must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("at least one trajectory is required")]
    NoTrajectories,
    #[error("input has {got} channels, system has {expected}")]
    InputDimension { expected: usize, got: usize },
    #[error("initial state has {got} entries, system has {expected}")]
    StateDimension { expected: usize, got: usize },
    #[error("invalid initial mode distribution: {0}")]
    InvalidInitialMode(String),
    #[error("input signal has zero norm")]
    ZeroInput,
    #[error("invalid pulse width {0}")]
    InvalidPulse(f64),
}

/// Exogenous inflow at the origins.
#[derive(Debug, Clone, PartialEq)]
pub enum InputSignal {
    Zero,
    Constant(Vec<f64>),
    /// Rectangular pulse of the given amplitude on `[0, width)`.
    Pulse { amplitude: Vec<f64>, width: f64 },
}

impl InputSignal {
    /// Unit-mass pulse on one channel, approximating an impulse.
    pub fn impulse(channels: usize, channel: usize, width: f64) -> Self {
        let mut amplitude = vec![0.0; channels];
        amplitude[channel] = 1.0 / width;
        InputSignal::Pulse { amplitude, width }
    }

    /// Level active at time `t`, or `None` when the input is zero.
    fn level(&self, t: f64) -> Option<&[f64]> {
        match self {
            InputSignal::Zero => None,
            InputSignal::Constant(u) => Some(u),
            InputSignal::Pulse { amplitude, width } => (t < *width).then_some(amplitude.as_slice()),
        }
    }

    fn discontinuity(&self) -> Option<f64> {
        match self {
            InputSignal::Pulse { width, .. } => Some(*width),
            _ => None,
        }
    }

    /// `‖u‖_L1`; infinite for a nonzero constant input.
    pub fn l1_norm(&self) -> f64 {
        match self {
            InputSignal::Zero => 0.0,
            InputSignal::Constant(u) => {
                if u.iter().all(|&x| x == 0.0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            InputSignal::Pulse { amplitude, width } => {
                amplitude.iter().map(|a| a.abs()).sum::<f64>() * width
            }
        }
    }

    /// `‖u‖_L∞`.
    pub fn linf_norm(&self) -> f64 {
        match self {
            InputSignal::Zero => 0.0,
            InputSignal::Constant(u) | InputSignal::Pulse { amplitude: u, .. } => {
                u.iter().fold(0.0, |m, x| m.max(x.abs()))
            }
        }
    }

    fn channels(&self) -> Option<usize> {
        match self {
            InputSignal::Zero => None,
            InputSignal::Constant(u) | InputSignal::Pulse { amplitude: u, .. } => Some(u.len()),
        }
    }
}

/// Distribution of `σ(0)`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialMode {
    Uniform,
    Stationary,
    Fixed(usize),
    Distribution(Vec<f64>),
}

impl InitialMode {
    fn cumulative(&self, chain: &MarkovChain) -> Result<Vec<f64>, SimError> {
        let modes = chain.modes();
        let p = match self {
            InitialMode::Uniform => vec![1.0 / modes as f64; modes],
            InitialMode::Stationary => chain.stationary(),
            InitialMode::Fixed(i) => {
                if *i >= modes {
                    return Err(SimError::InvalidInitialMode(format!(
                        "mode {i} out of range ({modes} modes)"
                    )));
                }
                let mut p = vec![0.0; modes];
                p[*i] = 1.0;
                p
            }
            InitialMode::Distribution(p) => {
                let total: f64 = p.iter().sum();
                if p.len() != modes || p.iter().any(|&x| !(x >= 0.0)) || !(total > 0.0) {
                    return Err(SimError::InvalidInitialMode(format!("{p:?}")));
                }
                p.iter().map(|x| x / total).collect()
            }
        };
        let mut acc = 0.0;
        Ok(p
            .iter()
            .map(|x| {
                acc += x;
                acc
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub horizon: f64,
    pub n_traj: usize,
    pub seed: u64,
    pub initial_mode: InitialMode,
    /// Defaults to the zero state.
    pub initial_state: Option<Vec<f64>>,
    /// Number of recording intervals on `[0, horizon]`.
    pub grid_intervals: usize,
    /// Number of trajectories whose full paths are kept.
    pub keep_paths: usize,
    /// RK4 step as a fraction of the fastest local time constant.
    pub step_fraction: f64,
}

impl SimulationConfig {
    pub fn new(horizon: f64, n_traj: usize, seed: u64) -> Self {
        Self {
            horizon,
            n_traj,
            seed,
            initial_mode: InitialMode::Uniform,
            initial_state: None,
            grid_intervals: 1000,
            keep_paths: 0,
            step_fraction: 1e-3,
        }
    }
}

/// One recorded trajectory on the recording grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPath {
    pub modes: Vec<usize>,
    pub states: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

/// Aggregated results of a simulation batch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub seed: u64,
    pub n_traj: usize,
    pub step: f64,
    pub times: Vec<f64>,
    pub paths: Vec<TrajectoryPath>,
    /// `E[x(t_g)]`, grid × n.
    pub mean_state: Vec<Vec<f64>>,
    /// `E[y(t_g)]`, grid × r.
    pub mean_output: Vec<Vec<f64>>,
    /// Second moments of the output, grid × r.
    pub output_sq: Vec<Vec<f64>>,
    /// Sums of `y(t_g)` over trajectories in mode `m` at `t_g`, grid × N × r.
    pub mode_output_sum: Vec<Vec<Vec<f64>>>,
    pub mode_output_sumsq: Vec<Vec<Vec<f64>>>,
    /// Trajectories in mode `m` at `t_g`, grid × N.
    pub mode_counts: Vec<Vec<usize>>,
    /// `∫₀ᵀ 1ᵀy dt` per trajectory.
    pub output_integrals: Vec<f64>,
    pub initial_modes: Vec<usize>,
    /// Smallest state entry seen at any integration step.
    pub min_state: f64,
    pub input_l1: f64,
    pub input_linf: f64,
}

/// Jump times and visited modes of a sampled chain path.
#[derive(Debug, Clone, PartialEq)]
pub struct ModePath {
    /// `modes[k]` is occupied on `[times[k], times[k + 1])`; the last
    /// interval ends at `horizon`.
    pub times: Vec<f64>,
    pub modes: Vec<usize>,
    pub horizon: f64,
}

/// Holding time in `mode` and the mode entered afterwards; `None` for an
/// absorbing mode.
fn next_jump<R: Rng>(chain: &MarkovChain, mode: usize, rng: &mut R) -> Option<(f64, usize)> {
    let rate = chain.exit_rate(mode);
    if !(rate > 0.0) {
        return None;
    }
    let e: f64 = Exp1.sample(rng);
    let hold = e / rate;
    let target = rng.gen::<f64>() * rate;
    let mut acc = 0.0;
    let mut next = mode;
    for j in 0..chain.modes() {
        if j == mode {
            continue;
        }
        let r = chain.rate(mode, j);
        if r > 0.0 {
            next = j;
            acc += r;
            if target < acc {
                break;
            }
        }
    }
    Some((hold, next))
}

fn draw_mode<R: Rng>(cumulative: &[f64], rng: &mut R) -> usize {
    let u = rng.gen::<f64>() * cumulative[cumulative.len() - 1];
    cumulative
        .iter()
        .position(|&c| u < c)
        .unwrap_or(cumulative.len() - 1)
}

/// Samples a mode path on `[0, horizon]`.
pub fn sample_mode_path<R: Rng>(
    chain: &MarkovChain,
    initial: usize,
    horizon: f64,
    rng: &mut R,
) -> ModePath {
    let mut times = vec![0.0];
    let mut modes = vec![initial];
    let mut t = 0.0;
    let mut mode = initial;
    while let Some((hold, next)) = next_jump(chain, mode, rng) {
        t += hold;
        if t >= horizon {
            break;
        }
        times.push(t);
        modes.push(next);
        mode = next;
    }
    ModePath {
        times,
        modes,
        horizon,
    }
}

/// Maximum-likelihood generator estimate `N_ij / T_i` from observed paths,
/// with the standard errors `√N_ij / T_i`.
pub fn empirical_generator(paths: &[ModePath], modes: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut counts = DMatrix::<f64>::zeros(modes, modes);
    let mut occupation = vec![0.0; modes];
    for p in paths {
        for k in 0..p.modes.len() {
            let end = p.times.get(k + 1).copied().unwrap_or(p.horizon);
            occupation[p.modes[k]] += end - p.times[k];
            if k + 1 < p.modes.len() {
                counts[(p.modes[k], p.modes[k + 1])] += 1.0;
            }
        }
    }
    let mut rates = DMatrix::zeros(modes, modes);
    let mut se = DMatrix::zeros(modes, modes);
    for i in 0..modes {
        if occupation[i] <= 0.0 {
            continue;
        }
        for j in 0..modes {
            if i != j {
                rates[(i, j)] = counts[(i, j)] / occupation[i];
                se[(i, j)] = counts[(i, j)].sqrt() / occupation[i];
            }
        }
        let out: f64 = (0..modes).filter(|&j| j != i).map(|j| rates[(i, j)]).sum();
        rates[(i, i)] = -out;
        se[(i, i)] = (0..modes)
            .filter(|&j| j != i)
            .map(|j| counts[(i, j)])
            .sum::<f64>()
            .sqrt()
            / occupation[i];
    }
    (rates, se)
}

/// Row-major copies of one mode's matrices.
struct FlatMode {
    a: Vec<f64>,
    /// `G_in·u` while the input is on.
    b_on: Vec<f64>,
    /// `G_outᵀ1`, the output weight of each state.
    c: Vec<f64>,
    g_out: Vec<f64>,
}

struct Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

#[inline]
fn deriv(a: &[f64], b: Option<&[f64]>, x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for i in 0..n {
        let row = &a[i * n..(i + 1) * n];
        let mut s = b.map_or(0.0, |b| b[i]);
        for j in 0..n {
            s += row[j] * x[j];
        }
        out[i] = s;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Classical RK4 on `ẋ = Ax + b`, `ż = cᵀx`.
fn rk4(
    mode: &FlatMode,
    b: Option<&[f64]>,
    x: &mut [f64],
    z: &mut f64,
    h: f64,
    steps: usize,
    ws: &mut Workspace,
    min_state: &mut f64,
) {
    let n = x.len();
    for _ in 0..steps {
        deriv(&mode.a, b, x, &mut ws.k1);
        let z1 = dot(&mode.c, x);
        for i in 0..n {
            ws.tmp[i] = x[i] + 0.5 * h * ws.k1[i];
        }
        let z2 = dot(&mode.c, &ws.tmp);
        deriv(&mode.a, b, &ws.tmp, &mut ws.k2);
        for i in 0..n {
            ws.tmp[i] = x[i] + 0.5 * h * ws.k2[i];
        }
        let z3 = dot(&mode.c, &ws.tmp);
        deriv(&mode.a, b, &ws.tmp, &mut ws.k3);
        for i in 0..n {
            ws.tmp[i] = x[i] + h * ws.k3[i];
        }
        let z4 = dot(&mode.c, &ws.tmp);
        deriv(&mode.a, b, &ws.tmp, &mut ws.k4);
        for i in 0..n {
            x[i] += h / 6.0 * (ws.k1[i] + 2.0 * ws.k2[i] + 2.0 * ws.k3[i] + ws.k4[i]);
            *min_state = min_state.min(x[i]);
        }
        *z += h / 6.0 * (z1 + 2.0 * z2 + 2.0 * z3 + z4);
    }
}

struct ChunkAcc {
    state: Vec<Vec<f64>>,
    out: Vec<Vec<f64>>,
    out_sq: Vec<Vec<f64>>,
    mode_sum: Vec<Vec<Vec<f64>>>,
    mode_sumsq: Vec<Vec<Vec<f64>>>,
    mode_counts: Vec<Vec<usize>>,
    integrals: Vec<f64>,
    initial_modes: Vec<usize>,
    paths: Vec<TrajectoryPath>,
    min_state: f64,
}

impl ChunkAcc {
    fn new(grid: usize, n: usize, r: usize, modes: usize) -> Self {
        Self {
            state: vec![vec![0.0; n]; grid],
            out: vec![vec![0.0; r]; grid],
            out_sq: vec![vec![0.0; r]; grid],
            mode_sum: vec![vec![vec![0.0; r]; modes]; grid],
            mode_sumsq: vec![vec![vec![0.0; r]; modes]; grid],
            mode_counts: vec![vec![0; modes]; grid],
            integrals: Vec::new(),
            initial_modes: Vec::new(),
            paths: Vec::new(),
            min_state: f64::INFINITY,
        }
    }

    fn absorb(&mut self, other: ChunkAcc) {
        fn add(a: &mut [Vec<f64>], b: &[Vec<f64>]) {
            for (x, y) in a.iter_mut().zip(b) {
                x.iter_mut().zip(y).for_each(|(p, q)| *p += q);
            }
        }
        add(&mut self.state, &other.state);
        add(&mut self.out, &other.out);
        add(&mut self.out_sq, &other.out_sq);
        for g in 0..self.mode_sum.len() {
            add(&mut self.mode_sum[g], &other.mode_sum[g]);
            add(&mut self.mode_sumsq[g], &other.mode_sumsq[g]);
            for (c, o) in self.mode_counts[g].iter_mut().zip(&other.mode_counts[g]) {
                *c += o;
            }
        }
        self.integrals.extend(other.integrals);
        self.initial_modes.extend(other.initial_modes);
        self.paths.extend(other.paths);
        self.min_state = self.min_state.min(other.min_state);
    }
}

/// Largest `|a_ii|` over all modes; its inverse is the fastest local time
/// constant.
fn fastest_rate(sys: &SwitchedSystem) -> f64 {
    sys.modes()
        .iter()
        .flat_map(|m| (0..m.n()).map(move |i| m.a[(i, i)].abs()))
        .fold(0.0, f64::max)
}

pub fn simulate_mjls(
    sys: &SwitchedSystem,
    input: &InputSignal,
    cfg: &SimulationConfig,
) -> Result<TrajectoryBatch, SimError> {
    if !(cfg.horizon > 0.0 && cfg.horizon.is_finite()) {
        return Err(SimError::InvalidHorizon(cfg.horizon));
    }
    if cfg.n_traj == 0 {
        return Err(SimError::NoTrajectories);
    }
    let n = sys.n();
    let r = sys.outputs();
    let modes = sys.mode_count();
    if let Some(ch) = input.channels() {
        if ch != sys.inputs() {
            return Err(SimError::InputDimension {
                expected: sys.inputs(),
                got: ch,
            });
        }
    }
    if let InputSignal::Pulse { width, .. } = input {
        if !(*width > 0.0 && width.is_finite()) {
            return Err(SimError::InvalidPulse(*width));
        }
    }
    let x0 = match &cfg.initial_state {
        Some(x) if x.len() != n => {
            return Err(SimError::StateDimension {
                expected: n,
                got: x.len(),
            })
        }
        Some(x) => x.clone(),
        None => vec![0.0; n],
    };
    let cumulative = cfg.initial_mode.cumulative(sys.chain())?;

    let rate = fastest_rate(sys);
    let step = if rate > 0.0 {
        (cfg.step_fraction / rate).min(cfg.horizon / 100.0)
    } else {
        cfg.horizon * cfg.step_fraction
    };
    let grid = cfg.grid_intervals.max(1);
    let times: Vec<f64> = (0..=grid)
        .map(|g| cfg.horizon * g as f64 / grid as f64)
        .collect();

    let flat: Vec<FlatMode> = sys
        .modes()
        .iter()
        .map(|m| {
            let b_on = input
                .level(0.0)
                .map(|u| {
                    let u = nalgebra::DVector::from_column_slice(u);
                    (&m.g_in * u).iter().copied().collect()
                })
                .unwrap_or_else(|| vec![0.0; n]);
            FlatMode {
                a: m.a.transpose().iter().copied().collect(),
                b_on,
                c: m.g_out.row_sum().iter().copied().collect(),
                g_out: m.g_out.transpose().iter().copied().collect(),
            }
        })
        .collect();
    let cut = input.discontinuity();
    let input_on = |t: f64| input.level(t).is_some();

    let n_chunks = cfg.n_traj.div_ceil(CHUNK);
    let chunks: Vec<ChunkAcc> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = ChunkAcc::new(times.len(), n, r, modes);
            let mut ws = Workspace::new(n);
            let mut y = vec![0.0; r];
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(cfg.n_traj);
            for idx in lo..hi {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(idx as u64));
                let mut mode = draw_mode(&cumulative, &mut rng);
                acc.initial_modes.push(mode);
                let mut jump = next_jump(sys.chain(), mode, &mut rng);
                let mut next_jump_t = jump.map_or(f64::INFINITY, |(h, _)| h);
                let mut x = x0.clone();
                let mut z = 0.0;
                let keep = idx < cfg.keep_paths;
                let mut path = keep.then(|| TrajectoryPath {
                    modes: Vec::with_capacity(times.len()),
                    states: Vec::with_capacity(times.len()),
                    outputs: Vec::with_capacity(times.len()),
                });
                let mut t = 0.0;
                let mut g = 0;
                loop {
                    // record every grid point reached
                    while g < times.len() && times[g] <= t {
                        let fm = &flat[mode];
                        for l in 0..r {
                            y[l] = dot(&fm.g_out[l * n..(l + 1) * n], &x);
                        }
                        for i in 0..n {
                            acc.state[g][i] += x[i];
                        }
                        for l in 0..r {
                            acc.out[g][l] += y[l];
                            acc.out_sq[g][l] += y[l] * y[l];
                            acc.mode_sum[g][mode][l] += y[l];
                            acc.mode_sumsq[g][mode][l] += y[l] * y[l];
                        }
                        acc.mode_counts[g][mode] += 1;
                        if let Some(p) = path.as_mut() {
                            p.modes.push(mode);
                            p.states.push(x.clone());
                            p.outputs.push(y.clone());
                        }
                        g += 1;
                    }
                    if g >= times.len() {
                        break;
                    }
                    let mut stop = times[g].min(next_jump_t);
                    if let Some(tc) = cut {
                        if t < tc {
                            stop = stop.min(tc);
                        }
                    }
                    let span = stop - t;
                    if span > 0.0 {
                        let k = (span / step).ceil().max(1.0) as usize;
                        let b = input_on(t).then_some(flat[mode].b_on.as_slice());
                        rk4(&flat[mode], b, &mut x, &mut z, span / k as f64, k, &mut ws, &mut acc.min_state);
                    }
                    t = stop;
                    if t >= next_jump_t {
                        let (_, next) = jump.expect("finite jump time implies a jump");
                        mode = next;
                        jump = next_jump(sys.chain(), mode, &mut rng);
                        next_jump_t = jump.map_or(f64::INFINITY, |(h, _)| t + h);
                    }
                }
                acc.integrals.push(z);
                if let Some(p) = path {
                    acc.paths.push(p);
                }
            }
            acc
        })
        .collect();

    let mut total = ChunkAcc::new(times.len(), n, r, modes);
    for c in chunks {
        total.absorb(c);
    }
    let inv = 1.0 / cfg.n_traj as f64;
    let scale = |m: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        m.into_iter()
            .map(|row| row.into_iter().map(|v| v * inv).collect())
            .collect()
    };
    Ok(TrajectoryBatch {
        seed: cfg.seed,
        n_traj: cfg.n_traj,
        step,
        times,
        paths: total.paths,
        mean_state: scale(total.state),
        mean_output: scale(total.out),
        output_sq: scale(total.out_sq),
        mode_output_sum: total.mode_sum,
        mode_output_sumsq: total.mode_sumsq,
        mode_counts: total.mode_counts,
        output_integrals: total.integrals,
        initial_modes: total.initial_modes,
        min_state: total.min_state.min(x0.iter().copied().fold(f64::INFINITY, f64::min)),
        input_l1: input.l1_norm(),
        input_linf: input.linf_norm(),
    })
}

/// Estimate for the trajectories that started in one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeEstimate {
    pub mode: usize,
    pub estimate: f64,
    pub half_width: f64,
    pub samples: usize,
}

/// A Monte Carlo gain estimate with its 95% normal-approximation half-width.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalGain {
    pub norm: GainNorm,
    pub estimate: f64,
    pub half_width: f64,
    /// Standard error of `estimate`.
    pub std_error: f64,
    pub samples: usize,
    /// L1 only: the same estimator restricted to each initial mode.
    pub by_initial_mode: Vec<ModeEstimate>,
    /// L∞ only: time at which the supremum is attained.
    pub at_time: Option<f64>,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Gain estimate from a simulated batch.
///
/// * L1: `∫‖E[y]‖₁ dt / ‖u‖_L1`. Outputs are nonnegative, so this equals the
///   mean of the per-trajectory integrals of `1ᵀy`. Estimates conditioned on
///   each initial mode are reported as well.
/// * L∞: `sup_t ‖E[y(t)]‖_∞ / ‖u‖_L∞` over the recording grid.
pub fn empirical_gain(batch: &TrajectoryBatch, norm: GainNorm) -> Result<EmpiricalGain, SimError> {
    match norm {
        GainNorm::L1 => {
            let mass = batch.input_l1;
            if !(mass > 0.0 && mass.is_finite()) {
                return Err(SimError::ZeroInput);
            }
            let (mean, sd) = mean_sd(&batch.output_integrals);
            let se = sd / (batch.n_traj as f64).sqrt() / mass;
            let modes = batch.mode_counts.first().map_or(0, |c| c.len());
            let by_initial_mode = (0..modes)
                .filter_map(|m| {
                    let xs: Vec<f64> = batch
                        .output_integrals
                        .iter()
                        .zip(&batch.initial_modes)
                        .filter(|(_, &im)| im == m)
                        .map(|(x, _)| *x)
                        .collect();
                    if xs.is_empty() {
                        return None;
                    }
                    let (mu, s) = mean_sd(&xs);
                    Some(ModeEstimate {
                        mode: m,
                        estimate: mu / mass,
                        half_width: Z95 * s / (xs.len() as f64).sqrt() / mass,
                        samples: xs.len(),
                    })
                })
                .collect();
            Ok(EmpiricalGain {
                norm,
                estimate: mean / mass,
                half_width: Z95 * se,
                std_error: se,
                samples: batch.n_traj,
                by_initial_mode,
                at_time: None,
            })
        }
        GainNorm::Linf => {
            let sup = batch.input_linf;
            if !(sup > 0.0) {
                return Err(SimError::ZeroInput);
            }
            let mut best = (0usize, 0usize, f64::NEG_INFINITY);
            for (g, row) in batch.mean_output.iter().enumerate() {
                for (l, &v) in row.iter().enumerate() {
                    if v > best.2 {
                        best = (g, l, v);
                    }
                }
            }
            let (g, l, mean) = best;
            let var = (batch.output_sq[g][l] - mean * mean).max(0.0) * batch.n_traj as f64
                / (batch.n_traj.max(2) - 1) as f64;
            let se = var.sqrt() / (batch.n_traj as f64).sqrt() / sup;
            Ok(EmpiricalGain {
                norm,
                estimate: mean / sup,
                half_width: Z95 * se,
                std_error: se,
                samples: batch.n_traj,
                by_initial_mode: Vec::new(),
                at_time: Some(batch.times[g]),
            })
        }
    }
}

/// Mode-conditioned L∞ estimate `sup_{t, m} ‖E[y(t) | σ(t) = m]‖_∞ / ‖u‖_L∞`.
///
/// This is the quantity bounded by the L∞ certificate LP, whose per-mode
/// certificates bound the output conditioned on the current mode. For a
/// single mode it coincides with [`empirical_gain`]. Grid points where a mode
/// holds fewer than `min_count` trajectories are skipped.
pub fn conditional_linf_gain(batch: &TrajectoryBatch, min_count: usize) -> Result<EmpiricalGain, SimError> {
    let sup = batch.input_linf;
    if !(sup > 0.0) {
        return Err(SimError::ZeroInput);
    }
    let mut best: Option<(usize, usize, usize, f64)> = None;
    for (g, per_mode) in batch.mode_output_sum.iter().enumerate() {
        for (m, sums) in per_mode.iter().enumerate() {
            let cnt = batch.mode_counts[g][m];
            if cnt < min_count.max(2) {
                continue;
            }
            for (l, &s) in sums.iter().enumerate() {
                let v = s / cnt as f64;
                if best.map_or(true, |b| v > b.3) {
                    best = Some((g, m, l, v));
                }
            }
        }
    }
    let (g, m, l, mean) = best.ok_or(SimError::NoTrajectories)?;
    let cnt = batch.mode_counts[g][m] as f64;
    let var = (batch.mode_output_sumsq[g][m][l] / cnt - mean * mean).max(0.0) * cnt / (cnt - 1.0);
    let se = (var / cnt).sqrt() / sup;
    Ok(EmpiricalGain {
        norm: GainNorm::Linf,
        estimate: mean / sup,
        half_width: Z95 * se,
        std_error: se,
        samples: cnt as usize,
        by_initial_mode: Vec::new(),
        at_time: Some(batch.times[g]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::netmodel::TuningParams;

    fn e1_sys() -> SwitchedSystem {
        let net = instances::e1();
        net.switched_system(&TuningParams::uniform(&net, 1.0, 1.0)).unwrap()
    }

    #[test]
    fn single_mode_matches_matrix_exponential() {
        let sys = e1_sys();
        let mut cfg = SimulationConfig::new(3.0, 1, 7);
        cfg.initial_state = Some(vec![2.0, 0.5]);
        cfg.keep_paths = 1;
        cfg.grid_intervals = 30;
        let batch = simulate_mjls(&sys, &InputSignal::Zero, &cfg).unwrap();
        let a = &sys.mode(0).a;
        let x0 = nalgebra::DVector::from_vec(vec![2.0, 0.5]);
        for (g, &t) in batch.times.iter().enumerate() {
            let expect = (a * t).exp() * &x0;
            for i in 0..2 {
                assert!((batch.paths[0].states[g][i] - expect[i]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_input_zero_state_stays_zero() {
        let net = instances::e2();
        let sys = net.switched_system(&TuningParams::uniform(&net, 1.0, 1.0)).unwrap();
        let mut cfg = SimulationConfig::new(2.0, 20, 1);
        cfg.keep_paths = 20;
        let batch = simulate_mjls(&sys, &InputSignal::Zero, &cfg).unwrap();
        assert!(batch.paths.iter().all(|p| p.states.iter().flatten().all(|&x| x == 0.0)));
        assert!(batch.output_integrals.iter().all(|&z| z == 0.0));
    }

    #[test]
    fn invalid_configs() {
        let sys = e1_sys();
        let cfg = SimulationConfig::new(0.0, 1, 0);
        assert_eq!(
            simulate_mjls(&sys, &InputSignal::Zero, &cfg),
            Err(SimError::InvalidHorizon(0.0))
        );
        let cfg = SimulationConfig::new(1.0, 0, 0);
        assert_eq!(
            simulate_mjls(&sys, &InputSignal::Zero, &cfg),
            Err(SimError::NoTrajectories)
        );
        let cfg = SimulationConfig::new(1.0, 1, 0);
        assert!(matches!(
            simulate_mjls(&sys, &InputSignal::Constant(vec![1.0, 1.0]), &cfg),
            Err(SimError::InputDimension { .. })
        ));
    }

    #[test]
    fn same_seed_same_batch() {
        let net = instances::e2();
        let sys = net.switched_system(&TuningParams::uniform(&net, 1.0, 1.0)).unwrap();
        let cfg = SimulationConfig::new(3.0, 300, 42);
        let input = InputSignal::impulse(1, 0, 1e-3);
        let a = simulate_mjls(&sys, &input, &cfg).unwrap();
        let b = simulate_mjls(&sys, &input, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_input_gain_is_an_error() {
        let sys = e1_sys();
        let batch = simulate_mjls(&sys, &InputSignal::Zero, &SimulationConfig::new(1.0, 2, 0)).unwrap();
        assert_eq!(empirical_gain(&batch, GainNorm::L1), Err(SimError::ZeroInput));
        assert_eq!(empirical_gain(&batch, GainNorm::Linf), Err(SimError::ZeroInput));
    }

    #[test]
    fn l1_ratio_is_scale_invariant() {
        let sys = e1_sys();
        let cfg = SimulationConfig::new(20.0, 1, 3);
        let g1 = empirical_gain(
            &simulate_mjls(&sys, &InputSignal::impulse(1, 0, 1e-3), &cfg).unwrap(),
            GainNorm::L1,
        )
        .unwrap();
        let scaled = InputSignal::Pulse {
            amplitude: vec![5e3],
            width: 1e-3,
        };
        let batch = simulate_mjls(&sys, &scaled, &cfg).unwrap();
        let g5 = empirical_gain(&batch, GainNorm::L1).unwrap();
        assert!((batch.output_integrals[0] / 5.0 - g1.estimate).abs() < 1e-9);
        assert!((g5.estimate - g1.estimate).abs() < 1e-9);
    }

    #[test]
    fn absorbing_mode_never_jumps() {
        let chain = MarkovChain::from_rows(&[vec![0.0, 0.0], vec![1.0, -1.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = sample_mode_path(&chain, 0, 100.0, &mut rng);
        assert_eq!(p.modes, vec![0]);
    }

    #[test]
    fn e1_empirical_gains() {
        let sys = e1_sys();
        let cfg = SimulationConfig::new(20.0, 4, 5);
        let batch = simulate_mjls(&sys, &InputSignal::impulse(1, 0, 1e-3), &cfg).unwrap();
        let l1 = empirical_gain(&batch, GainNorm::L1).unwrap();
        assert!((l1.estimate - 2.0).abs() < 0.1, "{}", l1.estimate);
        let batch = simulate_mjls(&sys, &InputSignal::Constant(vec![1.0]), &cfg).unwrap();
        let linf = empirical_gain(&batch, GainNorm::Linf).unwrap();
        assert!((linf.estimate - 1.0).abs() < 0.05, "{}", linf.estimate);
        let cond = conditional_linf_gain(&batch, 1).unwrap();
        assert!((cond.estimate - linf.estimate).abs() < 1e-12);
    }

    #[test]
    fn sampled_rates_match_generator() {
        let chain = MarkovChain::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut paths = Vec::new();
        let mut jumps = 0;
        while jumps < 100_000 {
            let p = sample_mode_path(&chain, 0, 1000.0, &mut rng);
            jumps += p.modes.len() - 1;
            paths.push(p);
        }
        let (rates, se) = empirical_generator(&paths, 2);
        for (i, j) in [(0, 1), (1, 0)] {
            assert!((rates[(i, j)] - 1.0).abs() <= 3.0 * se[(i, j)], "{}", rates[(i, j)]);
        }
    }
}
