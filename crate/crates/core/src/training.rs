//! Loss, central finite-difference gradients, Adam and the training loop.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::network::{forward, ExecutionMode, NetworkConfig, NetworkParams};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::statevector::EvalCondition;

/// Optimizer and gradient settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub fd_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 20,
            lr: 0.05,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            fd_eps: 1e-5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(invalid("steps must be at least 1"));
        }
        if !(self.fd_eps > 0.0) {
            return Err(invalid(format!(
                "fd_eps must be positive, got {}",
                self.fd_eps
            )));
        }
        for (name, b) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !(b > 0.0 && b < 1.0) {
                return Err(invalid(format!("{name} must lie in (0, 1), got {b}")));
            }
        }
        if !(self.lr > 0.0) || !(self.adam_eps > 0.0) {
            return Err(invalid("lr and adam_eps must be positive"));
        }
        Ok(())
    }
}

/// Mean squared error.
pub fn mse<T: Scalar>(preds: &[T], targets: &[T]) -> Result<T> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(invalid(format!(
            "mse needs equal non-empty lengths, got {} and {}",
            preds.len(),
            targets.len()
        )));
    }
    let total: T = preds
        .iter()
        .zip(targets)
        .map(|(&p, &y)| (p - y) * (p - y))
        .sum();
    Ok(total / T::from_count(preds.len()))
}

/// Central differences `(L(θ + ε e_j) - L(θ - ε e_j)) / 2ε`, exactly `2 |θ|`
/// loss evaluations in index order (plus side first).
pub fn fd_gradient<T, F>(mut loss_fn: F, theta: &[T], fd_eps: T) -> Result<Vec<T>>
where
    T: Scalar,
    F: FnMut(&[T]) -> Result<T>,
{
    if !(fd_eps > T::zero()) {
        return Err(invalid("finite-difference step must be positive"));
    }
    let mut work = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    let two_eps = fd_eps + fd_eps;
    for j in 0..theta.len() {
        work[j] = theta[j] + fd_eps;
        let plus = loss_fn(&work)?;
        work[j] = theta[j] - fd_eps;
        let minus = loss_fn(&work)?;
        work[j] = theta[j];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFiniteLoss { index: j });
        }
        grad.push((plus - minus) / two_eps);
    }
    Ok(grad)
}

/// First and second moment estimates of Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `theta` in place.
pub fn adam_step<T: Scalar>(
    state: &mut AdamState<T>,
    theta: &mut [T],
    grad: &[T],
    cfg: &TrainConfig,
) -> Result<()> {
    if theta.len() != grad.len() || state.m.len() != theta.len() || state.v.len() != theta.len() {
        return Err(invalid(format!(
            "adam length mismatch: theta {}, grad {}, state {}",
            theta.len(),
            grad.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let b1 = T::lit(cfg.adam_beta1);
    let b2 = T::lit(cfg.adam_beta2);
    let lr = T::lit(cfg.lr);
    let eps = T::lit(cfg.adam_eps);
    let t = i32::try_from(state.t).unwrap_or(i32::MAX);
    let bc1 = T::one() - b1.powi(t);
    let bc2 = T::one() - b2.powi(t);
    for i in 0..theta.len() {
        let g = grad[i];
        state.m[i] = b1 * state.m[i] + (T::one() - b1) * g;
        state.v[i] = b2 * state.v[i] + (T::one() - b2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        theta[i] = theta[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Chebyshev coefficients i.i.d. uniform on `(-1, 1)` in flat-layout order,
/// `alpha = 1`, `beta = 0`.
pub fn init_params<T: Scalar>(n: usize, degree: usize, rng: &mut RngStream) -> NetworkParams<T> {
    let mut params = NetworkParams::zeros(n, degree);
    for c in params.coefficients_mut() {
        let v = loop {
            let v: f64 = rng.random_range(-1.0..1.0);
            if v != -1.0 {
                break v;
            }
        };
        *c = T::lit(v);
    }
    params.set_gfcf(T::one(), T::zero());
    params
}

/// Parameter transfer from the sequential to the merged architecture.
/// Both share one parameter space, so this is an exact copy.
pub fn transfer_params<T: Scalar>(src: &NetworkParams<T>) -> NetworkParams<T> {
    src.clone()
}

/// Network outputs for every row of `inputs`, in row order.
pub fn predict<T: Scalar>(
    params: &NetworkParams<T>,
    inputs: &[Vec<T>],
    cfg: &NetworkConfig,
    cond: &EvalCondition,
    rng: &mut RngStream,
) -> Result<Vec<T>> {
    inputs
        .iter()
        .map(|x| forward(params, x, cfg, cond, rng))
        .collect()
}

/// Full-batch MSE of the network on `data`.
pub fn dataset_loss<T: Scalar>(
    params: &NetworkParams<T>,
    data: &Dataset<T>,
    cfg: &NetworkConfig,
    cond: &EvalCondition,
    rng: &mut RngStream,
) -> Result<T> {
    let preds = predict(params, &data.inputs, cfg, cond, rng)?;
    mse(&preds, &data.targets)
}

/// Result of one training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Loss before training followed by the loss after each completed step.
    pub losses: Vec<T>,
    /// Parameters after the last completed step.
    pub params: NetworkParams<T>,
    /// Diagnostic when the run was aborted on a non-finite loss.
    pub failure: Option<String>,
    /// Total number of full-batch loss evaluations performed.
    pub loss_evaluations: usize,
}

/// Full-batch training: `steps` rounds of central-difference gradient plus
/// Adam update. Losses are evaluated under the training condition, drawing
/// fresh measurement samples from `rng`.
pub fn train<T: Scalar>(
    params0: &NetworkParams<T>,
    data: &Dataset<T>,
    cfg: &NetworkConfig,
    tcfg: &TrainConfig,
    cond: &EvalCondition,
    rng: &mut RngStream,
) -> Result<TrainOutcome<T>> {
    train_steps(params0, data, cfg, tcfg, tcfg.steps, cond, rng)
}

/// As [`train`] with an explicit step count; `steps = 0` only evaluates the
/// initial loss.
pub fn train_steps<T: Scalar>(
    params0: &NetworkParams<T>,
    data: &Dataset<T>,
    cfg: &NetworkConfig,
    tcfg: &TrainConfig,
    steps: usize,
    cond: &EvalCondition,
    rng: &mut RngStream,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    cond.validate()?;
    if params0.n() != cfg.n || params0.degree() != cfg.degree {
        return Err(invalid(
            "initial parameters do not match the network configuration",
        ));
    }
    if data.inputs.is_empty() || data.inputs.iter().any(|x| x.len() != cfg.n) {
        return Err(invalid(format!(
            "dataset rows must have {} features",
            cfg.n
        )));
    }

    let mut theta = params0.as_flat().to_vec();
    let mut work = params0.clone();
    let mut adam = AdamState::new(theta.len());
    let mut evaluations = 0usize;
    let mut losses = Vec::with_capacity(steps + 1);

    let mut eval = |theta: &[T], rng: &mut RngStream, count: &mut usize| -> Result<T> {
        *count += 1;
        work.as_flat_mut().copy_from_slice(theta);
        dataset_loss(&work, data, cfg, cond, rng)
    };

    let aborted =
        |losses: Vec<T>, theta: Vec<T>, msg: String, evals: usize| -> Result<TrainOutcome<T>> {
            Ok(TrainOutcome {
                losses,
                params: NetworkParams::from_flat(cfg.n, cfg.degree, theta)?,
                failure: Some(msg),
                loss_evaluations: evals,
            })
        };

    let initial = eval(&theta, rng, &mut evaluations)?;
    if !initial.is_finite() {
        return aborted(
            losses,
            theta,
            format!("initial loss is {initial}"),
            evaluations,
        );
    }
    losses.push(initial);

    let fd_eps = T::lit(tcfg.fd_eps);
    for step in 1..=steps {
        let grad = match fd_gradient(|th| eval(th, rng, &mut evaluations), &theta, fd_eps) {
            Ok(g) => g,
            Err(Error::NonFiniteLoss { index }) => {
                let msg = format!("non-finite loss at step {step} perturbing parameter {index}");
                return aborted(losses, theta, msg, evaluations);
            }
            Err(e) => return Err(e),
        };
        adam_step(&mut adam, &mut theta, &grad, tcfg)?;
        let loss = eval(&theta, rng, &mut evaluations)?;
        if !loss.is_finite() {
            return aborted(
                losses,
                theta,
                format!("loss is {loss} after step {step}"),
                evaluations,
            );
        }
        losses.push(loss);
    }

    Ok(TrainOutcome {
        losses,
        params: NetworkParams::from_flat(cfg.n, cfg.degree, theta)?,
        failure: None,
        loss_evaluations: evaluations,
    })
}

/// Model variants compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    /// Sequential per-edge circuit, random init.
    Original,
    /// Merged circuit initialized from the trained Original.
    RedT,
    /// Merged circuit with its own random init.
    RedI,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 3] = [
        ModelVariant::Original,
        ModelVariant::RedT,
        ModelVariant::RedI,
    ];

    pub fn mode(self) -> ExecutionMode {
        match self {
            ModelVariant::Original => ExecutionMode::Sequential,
            ModelVariant::RedT | ModelVariant::RedI => ExecutionMode::Merged,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelVariant::Original => "original",
            ModelVariant::RedT => "red_t",
            ModelVariant::RedI => "red_i",
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(ModelVariant::Original),
            "red_t" => Ok(ModelVariant::RedT),
            "red_i" => Ok(ModelVariant::RedI),
            other => Err(invalid(format!("unknown model variant `{other}`"))),
        }
    }
}

/// One persisted training trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub n: usize,
    pub degree: usize,
    pub model: ModelVariant,
    pub condition: EvalCondition,
    pub seed: u64,
    /// Loss before training followed by the loss after each step.
    pub losses: Vec<f64>,
    pub failure: Option<String>,
}

impl RunRecord {
    pub fn config_id(&self) -> String {
        format!("n{}_d{}", self.n, self.degree)
    }

    pub fn final_loss(&self) -> Option<f64> {
        if self.failure.is_some() {
            None
        } else {
            self.losses.last().copied()
        }
    }
}
