//! Statevector simulator and experiment harness for two-layer Chebyshev
//! quantum Kolmogorov–Arnold networks.
//!
//! The network `[n, n, 1]` places a degree-`d` Chebyshev expansion on every
//! edge. Each expansion is an inner product between a coefficient vector and
//! the basis vector `T(x)`, which a quantum device estimates from amplitude
//! states. Two execution strategies are simulated:
//!
//! * **sequential** – one SWAP test per edge on `⌈log2(d+1)⌉` qubits,
//!   `n² + n` circuit executions per forward pass;
//! * **merged** – all input edges of a node are concatenated into a single
//!   amplitude state on `⌈log2(n(d+1))⌉` qubits, and one measurement against
//!   the uniform superposition gives the node's pre-activation, `n + 1`
//!   executions per forward pass.
//!
//! Both compute the same function exactly; under finite shots and
//! depolarizing noise their measurement statistics differ. The
//! [`experiments`] module trains both under ideal, shot-noise and noisy
//! conditions and compares them with paired Wilcoxon tests.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the double-precision types used by the experiments.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chebyshev;
pub mod data;
pub mod error;
pub mod experiments;
pub mod network;
pub mod rng;
pub mod scalar;
pub mod statevector;
pub mod stats;
pub mod training;

pub use chebyshev::{cheb_basis, cheb_eval, BasisVector};
pub use error::{Error, Result};
pub use network::{
    build_merged_vector, executions_per_grad_step, forward, node_preactivation, param_count,
    resources, ExecutionMode, NetworkConfig, NetworkParams, ResourceReport, REFERENCE_CONFIGS,
};
pub use rng::{Purpose, RngStream};
pub use scalar::Scalar;
pub use statevector::{
    depolarize_swap, depolarize_uniform, encode, overlap, uniform_overlap, AmplitudeState,
    ConditionKind, EvalCondition, NoiseMode,
};
pub use stats::{wilcoxon, Significance, WilcoxonResult};
pub use training::{
    adam_step, fd_gradient, init_params, mse, train, transfer_params, AdamState, ModelVariant,
    RunRecord, TrainConfig, TrainOutcome,
};

/// Double-precision network parameters.
pub type Params = NetworkParams<f64>;
/// Single-precision network parameters.
pub type Params32 = NetworkParams<f32>;
/// Double-precision amplitude state.
pub type State = AmplitudeState<f64>;
/// Single-precision amplitude state.
pub type State32 = AmplitudeState<f32>;
/// Double-precision Chebyshev basis vector.
pub type Basis = BasisVector<f64>;
/// Double-precision dataset.
pub type Dataset = data::Dataset<f64>;
/// Double-precision Adam state.
pub type Adam = AdamState<f64>;
