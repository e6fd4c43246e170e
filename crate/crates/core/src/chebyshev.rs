//! Chebyshev polynomials of the first kind.

use crate::error::{invalid, Result};
use crate::scalar::{dot, Scalar};

/// `T_0(x) … T_d(x)` for a single point.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisVector<T> {
    values: Vec<T>,
}

impl<T: Scalar> BasisVector<T> {
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn degree(&self) -> usize {
        self.values.len() - 1
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }
}

/// Evaluates `T_0(x) … T_d(x)` with the three-term recurrence
/// `T_k = 2x T_{k-1} - T_{k-2}`.
///
/// Inputs outside `[-1, 1]` are accepted; the values are then unbounded.
pub fn cheb_basis<T: Scalar>(x: T, degree: usize) -> Result<BasisVector<T>> {
    if !x.is_finite() {
        return Err(invalid(format!("chebyshev input must be finite, got {x}")));
    }
    let mut values = Vec::with_capacity(degree + 1);
    values.push(T::one());
    if degree >= 1 {
        values.push(x);
    }
    let two_x = x + x;
    for k in 2..=degree {
        let next = two_x * values[k - 1] - values[k - 2];
        values.push(next);
    }
    Ok(BasisVector { values })
}

/// `Σ_k c_k T_k(x)`.
pub fn cheb_eval<T: Scalar>(coeffs: &[T], x: T) -> Result<T> {
    if coeffs.is_empty() {
        return Err(invalid("chebyshev coefficient vector is empty"));
    }
    let basis = cheb_basis(x, coeffs.len() - 1)?;
    Ok(dot(coeffs, basis.values()))
}
