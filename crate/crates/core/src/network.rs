//! The two-layer `[n, n, 1]` Chebyshev quantum KAN.
//!
//! Every edge carries a degree-`d` Chebyshev expansion. A forward pass can be
//! executed edge by edge (SWAP test per edge) or with merged amplitude
//! encoding, where all input edges of a node are packed into one state and a
//! single uniform-overlap measurement yields the node's pre-activation.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::chebyshev::{cheb_basis, BasisVector};
use crate::error::{invalid, Result};
use crate::rng::RngStream;
use crate::scalar::{dot, Scalar};
use crate::statevector::{encode, measure_swap, measure_uniform, qubits_for, EvalCondition};

/// The ten `(n, d)` configurations of the resource table and synthetic study.
pub const REFERENCE_CONFIGS: [(usize, usize); 10] = [
    (2, 2),
    (2, 3),
    (2, 4),
    (3, 2),
    (3, 3),
    (3, 4),
    (4, 2),
    (4, 3),
    (4, 4),
    (4, 5),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    /// One SWAP test per edge on a `⌈log2(d+1)⌉`-qubit register.
    Sequential,
    /// One uniform-overlap measurement per node on a `⌈log2(n(d+1))⌉`-qubit register.
    Merged,
}

impl fmt::Display for ExecutionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExecutionMode::Sequential => "sequential",
            ExecutionMode::Merged => "merged",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NetworkConfig {
    /// Input and hidden width.
    pub n: usize,
    /// Chebyshev degree.
    pub degree: usize,
    pub mode: ExecutionMode,
}

impl NetworkConfig {
    pub fn new(n: usize, degree: usize, mode: ExecutionMode) -> Result<Self> {
        let cfg = Self { n, degree, mode };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.degree == 0 {
            return Err(invalid(format!(
                "network needs n >= 1 and d >= 1, got n={} d={}",
                self.n, self.degree
            )));
        }
        Ok(())
    }

    pub fn with_mode(self, mode: ExecutionMode) -> Self {
        Self { mode, ..self }
    }

    pub fn param_count(&self) -> usize {
        param_count(self.n, self.degree)
    }
}

/// Trainable parameters stored as one flat vector.
///
/// Layout: first-layer coefficients `c_{ij,k}` in `(i, j, k)` order
/// (input `i`, hidden node `j`, degree `k`), then second-layer coefficients in
/// `(i, k)` order, then the output scale `alpha` and shift `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T> {
    n: usize,
    degree: usize,
    theta: Vec<T>,
}

impl<T: Scalar> NetworkParams<T> {
    pub fn from_flat(n: usize, degree: usize, theta: Vec<T>) -> Result<Self> {
        let expected = param_count(n, degree);
        if theta.len() != expected {
            return Err(invalid(format!(
                "[{n},{n},1] d={degree} needs {expected} parameters, got {}",
                theta.len()
            )));
        }
        Ok(Self { n, degree, theta })
    }

    /// All coefficients zero, `alpha = 1`, `beta = 0`.
    pub fn zeros(n: usize, degree: usize) -> Self {
        let mut theta = vec![T::zero(); param_count(n, degree)];
        let len = theta.len();
        theta[len - 2] = T::one();
        Self { n, degree, theta }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn as_flat(&self) -> &[T] {
        &self.theta
    }

    pub fn as_flat_mut(&mut self) -> &mut [T] {
        &mut self.theta
    }

    pub fn into_flat(self) -> Vec<T> {
        self.theta
    }

    fn width(&self) -> usize {
        self.degree + 1
    }

    fn w2_offset(&self) -> usize {
        self.n * self.n * self.width()
    }

    /// Coefficients of first-layer edge from input `i` to hidden node `j`.
    pub fn w1_edge(&self, i: usize, j: usize) -> &[T] {
        let start = (i * self.n + j) * self.width();
        &self.theta[start..start + self.width()]
    }

    pub fn w1_edge_mut(&mut self, i: usize, j: usize) -> &mut [T] {
        let w = self.width();
        let start = (i * self.n + j) * w;
        &mut self.theta[start..start + w]
    }

    /// Coefficients of second-layer edge from hidden node `i` to the output.
    pub fn w2_edge(&self, i: usize) -> &[T] {
        let start = self.w2_offset() + i * self.width();
        &self.theta[start..start + self.width()]
    }

    pub fn w2_edge_mut(&mut self, i: usize) -> &mut [T] {
        let w = self.width();
        let start = self.w2_offset() + i * w;
        &mut self.theta[start..start + w]
    }

    /// All Chebyshev coefficients (everything but `alpha`, `beta`).
    pub fn coefficients(&self) -> &[T] {
        &self.theta[..self.theta.len() - 2]
    }

    pub fn coefficients_mut(&mut self) -> &mut [T] {
        let len = self.theta.len();
        &mut self.theta[..len - 2]
    }

    pub fn alpha(&self) -> T {
        self.theta[self.theta.len() - 2]
    }

    pub fn beta(&self) -> T {
        self.theta[self.theta.len() - 1]
    }

    pub fn set_gfcf(&mut self, alpha: T, beta: T) {
        let len = self.theta.len();
        self.theta[len - 2] = alpha;
        self.theta[len - 1] = beta;
    }

    /// Converts to another scalar precision.
    pub fn cast<U: Scalar>(&self) -> NetworkParams<U> {
        NetworkParams {
            n: self.n,
            degree: self.degree,
            theta: self.theta.iter().map(|&v| U::lit(v.as_f64())).collect(),
        }
    }
}

/// `(n² + n)(d + 1) + 2`.
pub fn param_count(n: usize, degree: usize) -> usize {
    (n * n + n) * (degree + 1) + 2
}

/// Circuit executions for one central-difference gradient over `n_samples` inputs.
pub fn executions_per_grad_step(n_params: usize, n_samples: usize, c_fwd: usize) -> usize {
    2 * n_params * n_samples * c_fwd
}

/// Qubits and circuit executions per forward pass for the three execution strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub n: usize,
    pub degree: usize,
    pub q_par: usize,
    pub c_par: usize,
    pub q_seq: usize,
    pub c_seq: usize,
    pub q_red: usize,
    pub c_red: usize,
    pub delta_q: i64,
}

pub fn resources(n: usize, degree: usize) -> Result<ResourceReport> {
    NetworkConfig::new(n, degree, ExecutionMode::Sequential)?;
    let edges = n * n + n;
    let q_edge = qubits_for(degree + 1) as usize;
    let q_red = qubits_for(n * (degree + 1)) as usize;
    Ok(ResourceReport {
        n,
        degree,
        q_par: edges * q_edge,
        c_par: 1,
        q_seq: q_edge,
        c_seq: edges,
        q_red,
        c_red: n + 1,
        delta_q: q_red as i64 - q_edge as i64,
    })
}

/// Circuit executions per forward pass for an execution mode.
pub fn executions_per_forward(n: usize, mode: ExecutionMode) -> usize {
    match mode {
        ExecutionMode::Sequential => n * n + n,
        ExecutionMode::Merged => n + 1,
    }
}

/// Concatenates `c_i ⊙ T(x_i)` over the inputs of one node; entry
/// `i (d+1) + k` is `c_{i,k} T_k(x_i)`.
pub fn build_merged_vector<T: Scalar>(
    coeff_rows: &[&[T]],
    bases: &[BasisVector<T>],
) -> Result<Vec<T>> {
    if coeff_rows.len() != bases.len() || coeff_rows.is_empty() {
        return Err(invalid(format!(
            "merged vector needs one basis per coefficient row, got {} rows and {} bases",
            coeff_rows.len(),
            bases.len()
        )));
    }
    let width = bases[0].values().len();
    let mut merged = Vec::with_capacity(coeff_rows.len() * width);
    for (row, basis) in coeff_rows.iter().zip(bases) {
        if row.len() != width || basis.values().len() != width {
            return Err(invalid(format!(
                "edge width mismatch: coefficients {}, basis {}, expected {width}",
                row.len(),
                basis.values().len()
            )));
        }
        merged.extend(row.iter().zip(basis.values()).map(|(&c, &t)| c * t));
    }
    Ok(merged)
}

/// Pre-activation `S = Σ_i Σ_k c_{i,k} T_k(x_i)` of one node, evaluated
/// through the measurement pathway of `mode` under `cond`.
///
/// Signs are recovered classically from the known coefficients and basis values.
pub fn node_preactivation<T: Scalar>(
    coeff_rows: &[&[T]],
    bases: &[BasisVector<T>],
    mode: ExecutionMode,
    cond: &EvalCondition,
    rng: &mut RngStream,
) -> Result<T> {
    match mode {
        ExecutionMode::Merged => {
            let merged = build_merged_vector(coeff_rows, bases)?;
            let state = encode(&merged)?;
            if state.is_sentinel() {
                return Ok(T::zero());
            }
            let sign = merged.iter().copied().sum::<T>().sign_or_one();
            let est = measure_uniform(&state, cond, rng)?;
            Ok(sign * state.norm() * T::from_count(state.dim()).sqrt() * est.sqrt())
        }
        ExecutionMode::Sequential => {
            if coeff_rows.len() != bases.len() {
                return Err(invalid(format!(
                    "{} coefficient rows for {} bases",
                    coeff_rows.len(),
                    bases.len()
                )));
            }
            let mut total = T::zero();
            for (row, basis) in coeff_rows.iter().zip(bases) {
                if row.len() != basis.values().len() {
                    return Err(invalid(format!(
                        "edge width mismatch: coefficients {}, basis {}",
                        row.len(),
                        basis.values().len()
                    )));
                }
                let c = encode(row)?;
                if c.is_sentinel() {
                    continue;
                }
                let t = encode(basis.values())?;
                let sign = dot(row, basis.values()).sign_or_one();
                let est = measure_swap(&c, &t, cond, rng)?;
                total = total + sign * c.norm() * t.norm() * est.sqrt();
            }
            Ok(total)
        }
    }
}

/// Network output for input `x` (expected in `[-1, 1]^n`).
///
/// Measurement randomness is consumed in node order, and within a node in
/// edge order, first layer before second.
pub fn forward<T: Scalar>(
    params: &NetworkParams<T>,
    x: &[T],
    cfg: &NetworkConfig,
    cond: &EvalCondition,
    rng: &mut RngStream,
) -> Result<T> {
    let n = cfg.n;
    if params.n != n || params.degree != cfg.degree {
        return Err(invalid(format!(
            "parameters for [{0},{0},1] d={1} used with [{2},{2},1] d={3}",
            params.n, params.degree, n, cfg.degree
        )));
    }
    if x.len() != n {
        return Err(invalid(format!(
            "input has {} features, network expects {n}",
            x.len()
        )));
    }
    let bases = x
        .iter()
        .map(|&xi| cheb_basis(xi, cfg.degree))
        .collect::<Result<Vec<_>>>()?;

    let mut rows: Vec<&[T]> = Vec::with_capacity(n);
    let mut hidden = Vec::with_capacity(n);
    for j in 0..n {
        rows.clear();
        rows.extend((0..n).map(|i| params.w1_edge(i, j)));
        let s = node_preactivation(&rows, &bases, cfg.mode, cond, rng)?;
        hidden.push(s.tanh());
    }

    let bases = hidden
        .iter()
        .map(|&h| cheb_basis(h, cfg.degree))
        .collect::<Result<Vec<_>>>()?;
    rows.clear();
    rows.extend((0..n).map(|i| params.w2_edge(i)));
    let s_out = node_preactivation(&rows, &bases, cfg.mode, cond, rng)?;
    Ok(params.alpha() * s_out + params.beta())
}
