//! Closed-form optimality-gap bounds for the learned policies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundInputs {
    pub alpha_c: f64,
    pub alpha_t: f64,
    pub beta: f64,
    pub c_max: f64,
    pub l_bar: f64,
    /// `L_t` for `t = 0..=T`.
    #[serde(default)]
    pub l_curve: Vec<f64>,
    /// Value assumed for every `L_t` past the curve; 2 (the TV maximum)
    /// when absent.
    #[serde(default)]
    pub l_tail: Option<f64>,
}

impl BoundInputs {
    fn check(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::domain(format!("discount {} outside (0,1)", self.beta)));
        }
        for (name, v) in [
            ("alpha_c", self.alpha_c),
            ("alpha_t", self.alpha_t),
            ("c_max", self.c_max),
            ("l_bar", self.l_bar),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} = {v} must be finite and nonnegative")));
            }
        }
        Ok(())
    }

    fn contraction_margin(&self) -> Result<f64> {
        self.check()?;
        let margin = 1.0 - self.beta * self.alpha_t;
        if margin <= 0.0 {
            return Err(Error::InapplicableBound(format!(
                "beta * alpha_T = {} is not below 1",
                self.beta * self.alpha_t
            )));
        }
        Ok(margin)
    }
}

/// `2·α_c·L̄ / ((1−β)²(1−β·α_T))`.
pub fn quantized_mdp_bound(inputs: &BoundInputs) -> Result<f64> {
    let margin = inputs.contraction_margin()?;
    let b = inputs.beta;
    Ok(2.0 * inputs.alpha_c * inputs.l_bar / ((1.0 - b).powi(2) * margin))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowBound {
    /// Bound with the truncated curve and its tail.
    pub value: f64,
    /// `Σ_{t≤T} βᵗ L_t`.
    pub head: f64,
    /// `β^{T+1}·L_tail/(1−β)`.
    pub tail: f64,
    pub l_tail: f64,
    /// The same bound with the worst-case tail `L_tail = 2`.
    pub worst_case_value: f64,
}

/// `(2‖c‖∞/(1−β))·Σ_t βᵗ L_t`, with the sum past the curve replaced by a
/// constant tail.
pub fn finite_window_bound(inputs: &BoundInputs) -> Result<WindowBound> {
    inputs.check()?;
    let b = inputs.beta;
    if let Some(t) = inputs.l_curve.iter().position(|l| !(0.0..=2.0).contains(l)) {
        return Err(Error::domain(format!("L_{t} outside [0, 2]")));
    }
    let head: f64 = inputs.l_curve.iter().enumerate().map(|(t, l)| b.powi(t as i32) * l).sum();
    let after = b.powi(inputs.l_curve.len() as i32) / (1.0 - b);
    let l_tail = inputs.l_tail.unwrap_or(2.0);
    if !(0.0..=2.0).contains(&l_tail) {
        return Err(Error::domain("tail value outside [0, 2]"));
    }
    let scale = 2.0 * inputs.c_max / (1.0 - b);
    Ok(WindowBound {
        value: scale * (head + after * l_tail),
        head,
        tail: after * l_tail,
        l_tail,
        worst_case_value: scale * (head + after * 2.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionVariant {
    /// Supremum over the whole simplex.
    Uniform,
    /// Supremum over beliefs reached under the exploration policy.
    SupportRestricted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeliefBound {
    pub value: f64,
    pub variant: DistortionVariant,
}

/// Same closed form as [`quantized_mdp_bound`] on the belief space, with
/// `α_T` the belief-kernel Lipschitz constant.
pub fn belief_quant_bound(inputs: &BoundInputs, variant: DistortionVariant) -> Result<BeliefBound> {
    Ok(BeliefBound {
        value: quantized_mdp_bound(inputs)?,
        variant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(alpha_t: f64, l_bar: f64) -> BoundInputs {
        BoundInputs {
            alpha_c: 1.0,
            alpha_t,
            beta: 0.7,
            c_max: 1.0,
            l_bar,
            ..Default::default()
        }
    }

    #[test]
    fn quantized_examples() {
        assert_eq!(quantized_mdp_bound(&inputs(0.5, 0.0)).unwrap(), 0.0);
        let b = quantized_mdp_bound(&inputs(0.5, 0.1)).unwrap();
        assert!((b - 0.2 / (0.09 * 0.65)).abs() < 1e-12);
        let half = quantized_mdp_bound(&inputs(0.5, 0.05)).unwrap();
        assert!((2.0 * half - b).abs() < 1e-12);
        assert!(matches!(quantized_mdp_bound(&inputs(1.5, 0.1)), Err(Error::InapplicableBound(_))));
    }

    #[test]
    fn belief_example() {
        let b = belief_quant_bound(&inputs(0.6, 0.05), DistortionVariant::Uniform).unwrap();
        assert!((b.value - 0.1 / (0.09 * 0.58)).abs() < 1e-12);
    }

    #[test]
    fn window_examples() {
        let zero = finite_window_bound(&BoundInputs {
            l_curve: vec![0.0; 10],
            l_tail: Some(0.0),
            ..inputs(0.0, 0.0)
        })
        .unwrap();
        assert_eq!(zero.value, 0.0);
        let worst = finite_window_bound(&BoundInputs {
            l_curve: vec![2.0; 5],
            ..inputs(0.0, 0.0)
        })
        .unwrap();
        assert!((worst.value - (2.0 / 0.3) * (2.0 / 0.3)).abs() < 1e-9);
        assert_eq!(worst.value, worst.worst_case_value);
    }
}
