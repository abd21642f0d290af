//! Illustrative screening cost functions (natural logarithm throughout).

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScreenError};

/// Accuracy-weighted cost inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    /// Accuracy index per stage, positive and nondecreasing.
    pub alphas: Vec<f64>,
    pub stage_capacities: Vec<f64>,
    /// Overall capacity; must equal the product of stage capacities.
    pub overall: f64,
}

/// Inputs for [`cost_capacity`]; the accuracy fields are accepted so one file
/// can feed both cost commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityCostSpec {
    pub stage_capacities: Vec<f64>,
    #[serde(default)]
    pub alphas: Option<Vec<f64>>,
    #[serde(default)]
    pub overall: Option<f64>,
}

const PRODUCT_TOL: f64 = 1e-9;

fn check_capacities(caps: &[f64]) -> Result<()> {
    if caps.is_empty() {
        return Err(ScreenError::invalid("stage_capacities must be nonempty"));
    }
    for (i, p) in caps.iter().enumerate() {
        if !(*p > 0.0 && *p <= 1.0) {
            return Err(ScreenError::invalid(format!(
                "stage_capacities[{i}] must lie in (0,1], got {p}"
            )));
        }
    }
    Ok(())
}

impl CostSpec {
    pub fn validate(&self) -> Result<()> {
        check_capacities(&self.stage_capacities)?;
        if self.alphas.len() != self.stage_capacities.len() {
            return Err(ScreenError::invalid(format!(
                "alphas has {} entries but stage_capacities has {}",
                self.alphas.len(),
                self.stage_capacities.len()
            )));
        }
        if let Some(i) = self.alphas.iter().position(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(ScreenError::invalid(format!("alphas[{i}] must be positive")));
        }
        if let Some(i) = (1..self.alphas.len()).find(|&i| self.alphas[i] < self.alphas[i - 1]) {
            return Err(ScreenError::invalid(format!(
                "alphas must be nondecreasing; alphas[{i}] < alphas[{}]",
                i - 1
            )));
        }
        if !(self.overall > 0.0 && self.overall <= 1.0) {
            return Err(ScreenError::invalid(format!(
                "overall capacity must lie in (0,1], got {}",
                self.overall
            )));
        }
        let prod: f64 = self.stage_capacities.iter().product();
        if (prod - self.overall).abs() > PRODUCT_TOL {
            return Err(ScreenError::invalid(format!(
                "product of stage capacities {prod} differs from overall {}",
                self.overall
            )));
        }
        Ok(())
    }
}

/// `sum_i alpha_i * ln(prod_{j<i} p_j / p)`, with the empty product equal to 1.
///
/// Stage `i` pays its accuracy index times the log of how much larger the
/// inspected mass is than the final accepted mass.
pub fn cost_accuracy(spec: &CostSpec) -> Result<f64> {
    spec.validate()?;
    let mut reached = 1.0;
    let mut cost = 0.0;
    for (alpha, p) in spec.alphas.iter().zip(&spec.stage_capacities) {
        cost += alpha * (reached / spec.overall).ln();
        reached *= p;
    }
    Ok(cost)
}

/// `-sum_i ln p_i`, which equals `-ln(prod_i p_i)`.
pub fn cost_capacity(stage_capacities: &[f64]) -> Result<f64> {
    check_capacities(stage_capacities)?;
    Ok(-stage_capacities.iter().map(|p| p.ln()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec(alphas: &[f64], caps: &[f64], overall: f64) -> CostSpec {
        CostSpec {
            alphas: alphas.to_vec(),
            stage_capacities: caps.to_vec(),
            overall,
        }
    }

    #[test]
    fn accuracy_two_stage() {
        let c = cost_accuracy(&spec(&[1.0, 2.0], &[0.1, 0.5], 0.05)).unwrap();
        assert_abs_diff_eq!(c, 20f64.ln() + 2.0 * 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(c, 4.382026634673881, epsilon = 1e-12);
    }

    #[test]
    fn accuracy_single_stage() {
        let c = cost_accuracy(&spec(&[3.0], &[0.2], 0.2)).unwrap();
        assert_abs_diff_eq!(c, 3.0 * (1.0f64 / 0.2).ln(), epsilon = 1e-12);
    }

    #[test]
    fn accuracy_second_stage_passes_all() {
        let c = cost_accuracy(&spec(&[1.0, 5.0], &[0.05, 1.0], 0.05)).unwrap();
        assert_abs_diff_eq!(c, (1.0f64 / 0.05).ln(), epsilon = 1e-12);
    }

    #[test]
    fn accuracy_validation() {
        assert!(cost_accuracy(&spec(&[2.0, 1.0], &[0.1, 0.5], 0.05)).is_err());
        assert!(cost_accuracy(&spec(&[0.0, 1.0], &[0.1, 0.5], 0.05)).is_err());
        assert!(cost_accuracy(&spec(&[1.0, 2.0], &[0.1, 0.5], 0.06)).is_err());
        assert!(cost_accuracy(&spec(&[1.0], &[0.1, 0.5], 0.05)).is_err());
    }

    #[test]
    fn capacity_examples() {
        assert_abs_diff_eq!(cost_capacity(&[0.1, 0.5]).unwrap(), 20f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(
            cost_capacity(&[0.1, 0.5]).unwrap(),
            cost_capacity(&[0.05]).unwrap(),
            epsilon = 1e-12
        );
        assert_eq!(cost_capacity(&[1.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(
            cost_capacity(&[0.5, 0.5, 0.5]).unwrap(),
            cost_capacity(&[0.125]).unwrap(),
            epsilon = 1e-12
        );
        assert!(cost_capacity(&[0.0]).is_err());
        assert!(cost_capacity(&[-0.5]).is_err());
        assert!(cost_capacity(&[]).is_err());
    }
}
