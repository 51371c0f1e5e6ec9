//! Stability and induced-gain analysis of a switched positive system.
//!
//! The mode-indexed first moments `x_i(t) = E[x(t)·1{σ(t)=i}]` of a Markov
//! jump linear system evolve under the lifted matrix
//! `Λ = blockdiag(A_1, …, A_N) + Πᵀ ⊗ I_n`, with state blocks stacked mode by
//! mode. `Λ` is Metzler, so mean stability reduces to its rightmost real
//! eigenvalue being negative.
//!
//! The L1 gain is the optimum of the linear program
//!
//! ```text
//! min γ  s.t.  v_iᵀA_i + Σ_j π_ij v_jᵀ + 1ᵀG_out,i ≤ 0,   v_iᵀG_in,i ≤ γ1ᵀ
//! ```
//!
//! and the L∞ gain of
//!
//! ```text
//! min γ  s.t.  A_i v_i + Σ_j π_ij v_j + G_in,i 1 ≤ 0,     G_out,i v_i ≤ γ1
//! ```
//!
//! both over certificate vectors `v_i ≥ 0`. For a single mode both reduce to
//! norms of the static gain `G_out(−A)⁻¹G_in`, which [`resolvent_gain`]
//! computes directly as an independent check.

pub mod lp;
pub mod sim;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::netmodel::{ModelError, SwitchedSystem};
use lp::{LinearProgram, LpError};

pub use sim::{
    conditional_linf_gain, empirical_gain, empirical_generator, sample_mode_path, simulate_mjls,
    EmpiricalGain, InitialMode, InputSignal, ModePath, SimError, SimulationConfig, TrajectoryBatch,
    TrajectoryPath,
};

/// Strict inequalities are enforced with this margin, scaled by the largest
/// entry of the lifted matrix.
pub const STRICT_MARGIN: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GainError {
    #[error("system is not mean stable (lifted spectral abscissa {abscissa:.6e})")]
    Unstable { abscissa: f64 },
    #[error("gain LP failed: {0}")]
    LpInfeasible(#[from] LpError),
    #[error("resolvent gain needs a single mode, system has {0}")]
    MultiMode(usize),
    #[error("state matrix is singular")]
    Singular,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GainNorm {
    L1,
    Linf,
}

impl GainNorm {
    pub fn label(self) -> &'static str {
        match self {
            GainNorm::L1 => "l1",
            GainNorm::Linf => "linf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainMethod {
    Lp,
    Resolvent,
    MonteCarlo,
}

/// A gain value with its certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct GainReport {
    pub norm: GainNorm,
    pub gamma: f64,
    /// One positive certificate vector per mode.
    pub certificates: Vec<DVector<f64>>,
    pub method: GainMethod,
    /// Largest violation of the defining inequalities (without the strict
    /// margin) at the returned certificate; `≤ 0` means satisfied.
    pub max_residual: f64,
    /// Mode attaining the gain.
    pub worst_mode: usize,
    /// Input channel (L1) or output row (L∞) attaining the gain.
    pub worst_index: usize,
}

/// Result of the mean-stability test.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub stable: bool,
    /// Largest real part of the lifted matrix's eigenvalues.
    pub abscissa: f64,
    /// Positive `v` with `vᵀΛ = −1ᵀ`, split per mode, when stable.
    pub certificate: Option<Vec<DVector<f64>>>,
}

/// `blockdiag(A_i) + Πᵀ ⊗ I_n` with mode-major stacking.
pub fn lifted_matrix(sys: &SwitchedSystem) -> DMatrix<f64> {
    let n = sys.n();
    let modes = sys.mode_count();
    let pi = sys.chain().rates();
    let mut l = DMatrix::zeros(n * modes, n * modes);
    for (i, m) in sys.modes().iter().enumerate() {
        l.view_mut((i * n, i * n), (n, n)).copy_from(&m.a);
        for j in 0..modes {
            // block (i, j) of Πᵀ⊗I is π_ji·I
            let rate = pi[(j, i)];
            if rate != 0.0 {
                for r in 0..n {
                    l[(i * n + r, j * n + r)] += rate;
                }
            }
        }
    }
    l
}

fn split_blocks(v: &DVector<f64>, n: usize, modes: usize) -> Vec<DVector<f64>> {
    (0..modes).map(|i| v.rows(i * n, n).into_owned()).collect()
}

pub fn stability_check(sys: &SwitchedSystem) -> StabilityReport {
    let l = lifted_matrix(sys);
    let abscissa = l
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let dim = l.nrows();
    let certificate = if abscissa < 0.0 {
        (-l.transpose())
            .lu()
            .solve(&DVector::from_element(dim, 1.0))
            .filter(|v| v.iter().all(|&x| x > 0.0 && x.is_finite()))
    } else {
        None
    };
    StabilityReport {
        stable: certificate.is_some(),
        abscissa,
        certificate: certificate.map(|v| split_blocks(&v, sys.n(), sys.mode_count())),
    }
}

fn require_stable(sys: &SwitchedSystem) -> Result<(), GainError> {
    let report = stability_check(sys);
    if report.stable {
        Ok(())
    } else {
        Err(GainError::Unstable {
            abscissa: report.abscissa,
        })
    }
}

fn margin(sys: &SwitchedSystem) -> f64 {
    let scale = lifted_matrix(sys).amax().max(1.0);
    STRICT_MARGIN * scale
}

/// L1 gain from the row-form certificate LP.
pub fn l1_gain(sys: &SwitchedSystem) -> Result<GainReport, GainError> {
    require_stable(sys)?;
    let n = sys.n();
    let modes = sys.mode_count();
    let s = sys.inputs();
    let pi = sys.chain().rates();
    let nv = n * modes + 1;
    let gamma_ix = nv - 1;
    let eps = margin(sys);

    let mut prog = LinearProgram::new(nv);
    let mut obj = vec![0.0; nv];
    obj[gamma_ix] = 1.0;
    prog.minimize(obj);

    let out_weights: Vec<DVector<f64>> = sys
        .modes()
        .iter()
        .map(|m| m.g_out.row_sum().transpose())
        .collect();
    for (i, m) in sys.modes().iter().enumerate() {
        for c in 0..n {
            let mut row = vec![0.0; nv];
            for r in 0..n {
                row[i * n + r] += m.a[(r, c)];
            }
            for j in 0..modes {
                row[j * n + c] += pi[(i, j)];
            }
            prog.add_le(row, -out_weights[i][c] - eps);
        }
        for k in 0..s {
            let mut row = vec![0.0; nv];
            for r in 0..n {
                row[i * n + r] = m.g_in[(r, k)];
            }
            row[gamma_ix] = -1.0;
            prog.add_le(row, 0.0);
        }
    }
    let sol = prog.solve()?;
    let v = DVector::from_column_slice(&sol.x[..n * modes]);
    let certificates = split_blocks(&v, n, modes);
    let gamma = sol.x[gamma_ix];

    let mut max_residual = f64::NEG_INFINITY;
    let mut worst = (0, 0, f64::NEG_INFINITY);
    for (i, m) in sys.modes().iter().enumerate() {
        let mut lhs = m.a.tr_mul(&certificates[i]) + &out_weights[i];
        for j in 0..modes {
            lhs += &certificates[j] * pi[(i, j)];
        }
        max_residual = max_residual.max(lhs.max());
        let input_load = m.g_in.tr_mul(&certificates[i]);
        for k in 0..s {
            max_residual = max_residual.max(input_load[k] - gamma);
            if input_load[k] > worst.2 {
                worst = (i, k, input_load[k]);
            }
        }
    }
    Ok(GainReport {
        norm: GainNorm::L1,
        gamma,
        certificates,
        method: GainMethod::Lp,
        max_residual,
        worst_mode: worst.0,
        worst_index: worst.1,
    })
}

/// L∞ gain from the column-form certificate LP.
pub fn linf_gain(sys: &SwitchedSystem) -> Result<GainReport, GainError> {
    require_stable(sys)?;
    let n = sys.n();
    let modes = sys.mode_count();
    let outputs = sys.outputs();
    let pi = sys.chain().rates();
    let nv = n * modes + 1;
    let gamma_ix = nv - 1;
    let eps = margin(sys);

    let mut prog = LinearProgram::new(nv);
    let mut obj = vec![0.0; nv];
    obj[gamma_ix] = 1.0;
    prog.minimize(obj);

    let in_loads: Vec<DVector<f64>> = sys
        .modes()
        .iter()
        .map(|m| m.g_in.column_sum())
        .collect();
    for (i, m) in sys.modes().iter().enumerate() {
        for r in 0..n {
            let mut row = vec![0.0; nv];
            for c in 0..n {
                row[i * n + c] += m.a[(r, c)];
            }
            for j in 0..modes {
                row[j * n + r] += pi[(i, j)];
            }
            prog.add_le(row, -in_loads[i][r] - eps);
        }
        for l in 0..outputs {
            let coeffs = m.g_out.row(l);
            if coeffs.iter().all(|&x| x == 0.0) {
                continue;
            }
            let mut row = vec![0.0; nv];
            for c in 0..n {
                row[i * n + c] = coeffs[c];
            }
            row[gamma_ix] = -1.0;
            prog.add_le(row, 0.0);
        }
    }
    let sol = prog.solve()?;
    let v = DVector::from_column_slice(&sol.x[..n * modes]);
    let certificates = split_blocks(&v, n, modes);
    let gamma = sol.x[gamma_ix];

    let mut max_residual = f64::NEG_INFINITY;
    let mut worst = (0, 0, f64::NEG_INFINITY);
    for (i, m) in sys.modes().iter().enumerate() {
        let mut lhs = &m.a * &certificates[i] + &in_loads[i];
        for j in 0..modes {
            lhs += &certificates[j] * pi[(i, j)];
        }
        max_residual = max_residual.max(lhs.max());
        let out = &m.g_out * &certificates[i];
        for l in 0..outputs {
            max_residual = max_residual.max(out[l] - gamma);
            if out[l] > worst.2 {
                worst = (i, l, out[l]);
            }
        }
    }
    Ok(GainReport {
        norm: GainNorm::Linf,
        gamma,
        certificates,
        method: GainMethod::Lp,
        max_residual,
        worst_mode: worst.0,
        worst_index: worst.1,
    })
}

pub fn gain(sys: &SwitchedSystem, norm: GainNorm) -> Result<GainReport, GainError> {
    match norm {
        GainNorm::L1 => l1_gain(sys),
        GainNorm::Linf => linf_gain(sys),
    }
}

/// Static gain `G_out(−A)⁻¹G_in` of a single-mode system.
pub fn static_gain(sys: &SwitchedSystem) -> Result<DMatrix<f64>, GainError> {
    if sys.mode_count() != 1 {
        return Err(GainError::MultiMode(sys.mode_count()));
    }
    let m = sys.mode(0);
    let x = (-&m.a).lu().solve(&m.g_in).ok_or(GainError::Singular)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(GainError::Singular);
    }
    Ok(&m.g_out * x)
}

/// Induced gain of a stable single-mode positive system from its static
/// gain: maximum column sum for L1, maximum row sum for L∞.
pub fn resolvent_gain(sys: &SwitchedSystem, norm: GainNorm) -> Result<f64, GainError> {
    let g = static_gain(sys)?;
    Ok(match norm {
        GainNorm::L1 => g.row_sum().max(),
        GainNorm::Linf => g.column_sum().max(),
    })
}
