//! Training objectives: per-scale attention BCE and density regression.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::tensor::{cast, Real, Tape, Tensor, Var};

/// Distance of the clamped BCE prediction from 0 and 1.
pub const BCE_CLAMP: f64 = 1e-7;

/// Weights of the three attention losses, coarsest scale first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 1e-2,
            lambda2: 1e-3,
            lambda3: 1e-4,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(config_err!("{name} must be a finite nonnegative number, got {v}"));
            }
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.lambda1, self.lambda2, self.lambda3]
    }
}

/// Normaliser applied to the summed squared density error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityDivisor {
    /// `1 / (2N)` for a batch of `N` images.
    #[default]
    TwiceBatch,
    /// Plain sum over the batch.
    None,
}

impl DensityDivisor {
    pub fn value(self, batch: usize) -> f64 {
        match self {
            DensityDivisor::TwiceBatch => 2.0 * batch as f64,
            DensityDivisor::None => 1.0,
        }
    }
}

/// Mean binary cross-entropy between a probability map and a binary mask.
pub fn bce_loss<T: Real>(tape: &mut Tape<T>, pred: Var, target: &Tensor<T>) -> Result<Var> {
    tape.bce(pred, target)
}

/// Squared L2 distance between predicted and ground-truth density maps.
pub fn density_loss<T: Real>(
    tape: &mut Tape<T>,
    pred: Var,
    gt: &Tensor<T>,
    divisor: DensityDivisor,
) -> Result<Var> {
    let n = tape.shape(pred).n;
    tape.squared_error(pred, gt, cast(divisor.value(n)))
}

/// Total loss and its four components.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: Var,
    pub density: Var,
    pub attention: [Var; 3],
}

impl LossTerms {
    pub fn values<T: Real>(&self, tape: &Tape<T>) -> LossValues {
        let get = |v: Var| tape.value(v).data()[0].to_float();
        LossValues {
            total: get(self.total),
            density: get(self.density),
            attention: Some(self.attention.map(get)),
        }
    }
}

/// Scalar loss readout; `attention` is absent for heads without attention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValues {
    pub total: f64,
    pub density: f64,
    pub attention: Option<[f64; 3]>,
}

/// `lambda1 * L_att1 + lambda2 * L_att2 + lambda3 * L_att3 + L_den`.
///
/// `attention` pairs are ordered coarsest (stride 8) to finest (stride 2).
pub fn combined_loss<T: Real>(
    tape: &mut Tape<T>,
    density: (Var, &Tensor<T>),
    attention: &[(Var, &Tensor<T>)],
    weights: &LossWeights,
    divisor: DensityDivisor,
) -> Result<LossTerms> {
    if attention.len() != 3 {
        return Err(config_err!(
            "combined loss takes three attention pairs, got {}",
            attention.len()
        ));
    }
    weights.validate()?;
    let den = density_loss(tape, density.0, density.1, divisor)?;
    let mut att = [den; 3];
    for (slot, (pred, mask)) in att.iter_mut().zip(attention) {
        *slot = bce_loss(tape, *pred, mask)?;
    }
    let lambdas = weights.as_array();
    let total = tape.weighted_sum(&[
        (att[0], cast(lambdas[0])),
        (att[1], cast(lambdas[1])),
        (att[2], cast(lambdas[2])),
        (den, T::one()),
    ])?;
    Ok(LossTerms {
        total,
        density: den,
        attention: att,
    })
}
