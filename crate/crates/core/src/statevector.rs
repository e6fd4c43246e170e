//! Real-amplitude statevector engine.
//!
//! Amplitude encoding, exact overlaps, the SWAP-test and uniform-overlap
//! measurement statistics, binomial shot sampling and the depolarizing channel
//! applied at the outcome-probability level.

use std::fmt;

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::RngStream;
use crate::scalar::{l2_norm, Scalar};

/// Normalized real amplitude vector of length `2^qubits` together with the
/// Euclidean norm of the vector it was built from.
///
/// A source vector of norm zero yields the zero-norm sentinel: all amplitudes
/// zero and `norm == 0`. Callers short-circuit it classically.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeState<T> {
    amplitudes: Vec<T>,
    norm: T,
    qubits: u32,
}

impl<T: Scalar> AmplitudeState<T> {
    pub fn amplitudes(&self) -> &[T] {
        &self.amplitudes
    }

    pub fn norm(&self) -> T {
        self.norm
    }

    pub fn qubits(&self) -> u32 {
        self.qubits
    }

    /// Hilbert-space dimension `2^qubits`.
    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_sentinel(&self) -> bool {
        self.norm == T::zero()
    }

    /// Undo the encoding: the first `len` entries of `amplitudes * norm`.
    pub fn decode(&self, len: usize) -> Vec<T> {
        self.amplitudes[..len.min(self.dim())]
            .iter()
            .map(|&a| a * self.norm)
            .collect()
    }
}

/// Number of qubits needed to hold `len` amplitudes, `⌈log2 len⌉`.
pub fn qubits_for(len: usize) -> u32 {
    len.max(1).next_power_of_two().trailing_zeros()
}

/// Zero-pads `v` to the next power of two and normalizes it.
pub fn encode<T: Scalar>(v: &[T]) -> Result<AmplitudeState<T>> {
    if v.is_empty() {
        return Err(invalid("cannot amplitude-encode an empty vector"));
    }
    if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
        return Err(invalid(format!(
            "cannot amplitude-encode non-finite entry {bad}"
        )));
    }
    let qubits = qubits_for(v.len());
    let dim = 1usize << qubits;
    let norm = l2_norm(v);
    let mut amplitudes = vec![T::zero(); dim];
    if norm > T::zero() {
        for (a, &x) in amplitudes.iter_mut().zip(v) {
            *a = x / norm;
        }
    }
    Ok(AmplitudeState {
        amplitudes,
        norm,
        qubits,
    })
}

/// `⟨a|b⟩` for real amplitude states.
pub fn overlap<T: Scalar>(a: &AmplitudeState<T>, b: &AmplitudeState<T>) -> Result<T> {
    if a.qubits != b.qubits {
        return Err(invalid(format!(
            "overlap of states on {} and {} qubits",
            a.qubits, b.qubits
        )));
    }
    if a.is_sentinel() || b.is_sentinel() {
        return Err(invalid("overlap with the zero-norm sentinel"));
    }
    Ok(a.amplitudes
        .iter()
        .zip(&b.amplitudes)
        .map(|(&x, &y)| x * y)
        .sum())
}

/// `⟨U|s⟩` where `|U⟩` is the uniform superposition over `D` basis states.
pub fn uniform_overlap<T: Scalar>(s: &AmplitudeState<T>) -> Result<T> {
    if s.is_sentinel() {
        return Err(invalid("uniform overlap of the zero-norm sentinel"));
    }
    let total: T = s.amplitudes.iter().copied().sum();
    Ok(total / T::from_count(s.dim()).sqrt())
}

fn check_probability<T: Scalar>(name: &str, p: T) -> Result<()> {
    if p >= T::zero() && p <= T::one() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must lie in [0, 1], got {p}")))
    }
}

/// Ancilla-zero probability of the SWAP test, `(1 + |⟨a|b⟩|²) / 2`.
pub fn swap_test_p0<T: Scalar>(sq_overlap: T) -> Result<T> {
    check_probability("squared overlap", sq_overlap)?;
    Ok((T::one() + sq_overlap) / T::lit(2.0))
}

/// Draws the number of zero outcomes in `n_shots` Bernoulli(`p_true`) trials.
pub fn sample_counts(p_true: f64, n_shots: u64, rng: &mut RngStream) -> Result<u64> {
    check_probability("outcome probability", p_true)?;
    if n_shots == 0 {
        return Err(invalid("n_shots must be at least 1"));
    }
    let dist = Binomial::new(n_shots, p_true)
        .map_err(|e| invalid(format!("binomial({n_shots}, {p_true}): {e}")))?;
    Ok(dist.sample(rng))
}

/// Clamped SWAP-test estimator `max(2 n_0 / N - 1, 0)`.
pub fn estimate_sq_overlap_swap<T: Scalar>(n_zero: u64, n_shots: u64) -> T {
    let raw = T::lit(2.0 * n_zero as f64 / n_shots as f64 - 1.0);
    raw.max(T::zero())
}

/// Direct all-zero probability estimate `n_0 / N`.
pub fn estimate_sq_overlap_uniform<T: Scalar>(n_zero: u64, n_shots: u64) -> T {
    T::lit(n_zero as f64 / n_shots as f64)
}

/// How depolarizing noise enters outcome probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Exact channel `ρ → (1-p)ρ + p I/D` propagated into the measured probability.
    #[default]
    ExactChannel,
    /// Multiply the squared overlap by the dominant eigenvalue `λ = (1-p) + p/D`
    /// of the noisy density matrix, once per noisy preparation.
    EigenvalueScale,
}

impl NoiseMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseMode::ExactChannel => "exact_channel",
            NoiseMode::EigenvalueScale => "eigenvalue_scale",
        }
    }
}

impl fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Dominant eigenvalue of `(1-p)|ψ⟩⟨ψ| + p I/D`.
pub fn eigenvalue_scale_factor<T: Scalar>(p: T, dim: usize) -> T {
    (T::one() - p) + p / T::from_count(dim)
}

fn check_channel<T: Scalar>(sq_overlap: T, p: T, dim: usize, min_dim: usize) -> Result<()> {
    check_probability("squared overlap", sq_overlap)?;
    check_probability("depolarizing probability", p)?;
    if dim < min_dim || !dim.is_power_of_two() {
        return Err(invalid(format!(
            "hilbert dimension must be a power of two >= {min_dim}, got {dim}"
        )));
    }
    Ok(())
}

/// Squared overlap seen by a SWAP test when both preparations are depolarized:
/// `Tr[ρ_a ρ_b]` in exact mode, `λ² s` in eigenvalue-scale mode.
pub fn depolarize_swap<T: Scalar>(sq_overlap: T, p: T, dim: usize, mode: NoiseMode) -> Result<T> {
    check_channel(sq_overlap, p, dim, 2)?;
    let d = T::from_count(dim);
    let keep = T::one() - p;
    Ok(match mode {
        NoiseMode::ExactChannel => {
            keep * keep * sq_overlap + T::lit(2.0) * keep * p / d + p * p / d
        }
        NoiseMode::EigenvalueScale => {
            let lambda = eigenvalue_scale_factor(p, dim);
            lambda * lambda * sq_overlap
        }
    })
}

/// All-zero probability after Hadamards on one depolarized preparation:
/// `⟨U|ρ|U⟩ = (1-p) s + p/D` in exact mode, `λ s` in eigenvalue-scale mode.
pub fn depolarize_uniform<T: Scalar>(
    sq_overlap: T,
    p: T,
    dim: usize,
    mode: NoiseMode,
) -> Result<T> {
    check_channel(sq_overlap, p, dim, 1)?;
    Ok(match mode {
        NoiseMode::ExactChannel => (T::one() - p) * sq_overlap + p / T::from_count(dim),
        NoiseMode::EigenvalueScale => eigenvalue_scale_factor(p, dim) * sq_overlap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    Ideal,
    Shots,
    ShotsNoise,
}

impl ConditionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ConditionKind::Ideal => "ideal",
            ConditionKind::Shots => "shots",
            ConditionKind::ShotsNoise => "shots_noise",
        }
    }
}

impl fmt::Display for ConditionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_shots() -> u64 {
    1000
}

fn default_p_depol() -> f64 {
    0.01
}

/// Simulation condition under which overlaps are measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalCondition {
    pub kind: ConditionKind,
    #[serde(default = "default_shots")]
    pub n_shots: u64,
    /// Only read when `kind == ShotsNoise`.
    #[serde(default = "default_p_depol")]
    pub p_depol: f64,
    #[serde(default)]
    pub noise_mode: NoiseMode,
}

impl EvalCondition {
    pub fn ideal() -> Self {
        Self {
            kind: ConditionKind::Ideal,
            n_shots: default_shots(),
            p_depol: default_p_depol(),
            noise_mode: NoiseMode::ExactChannel,
        }
    }

    pub fn shots(n_shots: u64) -> Self {
        Self {
            kind: ConditionKind::Shots,
            n_shots,
            ..Self::ideal()
        }
    }

    pub fn shots_noise(n_shots: u64, p_depol: f64, noise_mode: NoiseMode) -> Self {
        Self {
            kind: ConditionKind::ShotsNoise,
            n_shots,
            p_depol,
            noise_mode,
        }
    }

    pub fn is_ideal(&self) -> bool {
        self.kind == ConditionKind::Ideal
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != ConditionKind::Ideal && self.n_shots == 0 {
            return Err(invalid(
                "n_shots must be at least 1 for shot-based conditions",
            ));
        }
        if !(0.0..=1.0).contains(&self.p_depol) {
            return Err(invalid(format!(
                "p_depol must lie in [0, 1], got {}",
                self.p_depol
            )));
        }
        Ok(())
    }

    /// Short identifier used in result files, e.g. `shots_noise`.
    pub fn label(&self) -> &'static str {
        self.kind.as_str()
    }
}

impl Default for EvalCondition {
    fn default() -> Self {
        Self::ideal()
    }
}

fn clamp_unit<T: Scalar>(x: T) -> T {
    x.max(T::zero()).min(T::one())
}

/// Estimated `|⟨a|b⟩|²` from the SWAP-test pathway under `cond`.
///
/// Ideal: exact square. Shots: binomial sampling of the ancilla followed by
/// the clamped estimator. Shots with noise: both preparations are depolarized
/// on the register's Hilbert dimension before sampling.
pub fn measure_swap<T: Scalar>(
    a: &AmplitudeState<T>,
    b: &AmplitudeState<T>,
    cond: &EvalCondition,
    rng: &mut RngStream,
) -> Result<T> {
    let ov = overlap(a, b)?;
    let sq = clamp_unit(ov * ov);
    let sq = match cond.kind {
        ConditionKind::Ideal => return Ok(sq),
        ConditionKind::Shots => sq,
        ConditionKind::ShotsNoise => {
            depolarize_swap(sq, T::lit(cond.p_depol), a.dim(), cond.noise_mode)?
        }
    };
    let p0 = swap_test_p0(clamp_unit(sq))?;
    let n_zero = sample_counts(p0.as_f64(), cond.n_shots, rng)?;
    Ok(estimate_sq_overlap_swap(n_zero, cond.n_shots))
}

/// Estimated `|⟨U|s⟩|²` from the Hadamard + all-zero measurement under `cond`.
pub fn measure_uniform<T: Scalar>(
    s: &AmplitudeState<T>,
    cond: &EvalCondition,
    rng: &mut RngStream,
) -> Result<T> {
    let ov = uniform_overlap(s)?;
    let sq = clamp_unit(ov * ov);
    let prob = match cond.kind {
        ConditionKind::Ideal => return Ok(sq),
        ConditionKind::Shots => sq,
        ConditionKind::ShotsNoise => {
            depolarize_uniform(sq, T::lit(cond.p_depol), s.dim(), cond.noise_mode)?
        }
    };
    let n_zero = sample_counts(clamp_unit(prob).as_f64(), cond.n_shots, rng)?;
    Ok(estimate_sq_overlap_uniform(n_zero, cond.n_shots))
}
