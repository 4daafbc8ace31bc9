//! Head-specific sparsity budgets from offline importance measurements.
//!
//! A head's importance is the loss increase from zeroing it; same for a
//! layer. The per-head ratio is the global ratio redistributed in
//! proportion to the clamped product of head and layer importance:
//!
//! `ratio_i = r * N * clamp(headImp_i * layerImp_j) / sum(clamp(...))`
//!
//! with `j = i / heads_per_layer` and products clamped above at a
//! threshold (default 1e-3) so a few extreme heads cannot starve the rest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_CLAMP_THRESHOLD: f64 = 1e-3;
pub const DEFAULT_GLOBAL_RATIO: f64 = 0.2;

/// Offline loss measurements: the baseline and the loss with each head or
/// layer zeroed out. Consumed from a file; no model is run here.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportanceTable {
    pub baseline_loss: f64,
    pub head_losses: Vec<f64>,
    pub layer_losses: Vec<f64>,
    pub heads_per_layer: usize,
}

impl ImportanceTable {
    pub fn validate(&self) -> Result<()> {
        if self.heads_per_layer == 0 {
            return Err(Error::validation("heads_per_layer must be positive"));
        }
        if self.head_losses.len() != self.layer_losses.len() * self.heads_per_layer {
            return Err(Error::validation(
                "head count must equal layer count * heads_per_layer",
            ));
        }
        let all = self
            .head_losses
            .iter()
            .chain(&self.layer_losses)
            .chain(std::iter::once(&self.baseline_loss));
        if !all.clone().all(|x| x.is_finite()) {
            return Err(Error::validation("losses must be finite"));
        }
        Ok(())
    }

    pub fn num_heads(&self) -> usize {
        self.head_losses.len()
    }
}

/// Per-head sparsity ratios in (0, 1].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeadBudget {
    pub ratios: Vec<f64>,
    pub global_ratio: f64,
    pub clamp_threshold: f64,
    /// Number of ratios that were capped at 1.0 (excess not redistributed).
    pub capped: usize,
}

/// Loss delta from zeroing each head, floored at 0.
pub fn head_importance(table: &ImportanceTable) -> Result<Vec<f64>> {
    table.validate()?;
    Ok(table
        .head_losses
        .iter()
        .map(|&l| (l - table.baseline_loss).max(0.0))
        .collect())
}

/// Loss delta from zeroing each layer, floored at 0.
pub fn layer_importance(table: &ImportanceTable) -> Result<Vec<f64>> {
    table.validate()?;
    Ok(table
        .layer_losses
        .iter()
        .map(|&l| (l - table.baseline_loss).max(0.0))
        .collect())
}

pub fn allocate_ratios(table: &ImportanceTable, r: f64, clamp_threshold: f64) -> Result<HeadBudget> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::validation("global ratio must be in (0, 1]"));
    }
    if !(clamp_threshold > 0.0) {
        return Err(Error::validation("clamp threshold must be positive"));
    }
    let head_imp = head_importance(table)?;
    let layer_imp = layer_importance(table)?;
    let n = head_imp.len();
    let products: Vec<f64> = head_imp
        .iter()
        .enumerate()
        .map(|(i, &h)| (h * layer_imp[i / table.heads_per_layer]).min(clamp_threshold))
        .collect();
    let total: f64 = products.iter().sum();
    let raw: Vec<f64> = if total == 0.0 {
        vec![r; n]
    } else {
        products.iter().map(|&v| r * n as f64 * v / total).collect()
    };
    let mut capped = 0;
    let ratios: Vec<f64> = raw
        .into_iter()
        .map(|x| {
            if x > 1.0 {
                capped += 1;
                1.0
            } else {
                x
            }
        })
        .collect();
    if capped > 0 {
        log::warn!("{capped} head ratio(s) exceeded 1.0 and were capped; excess not redistributed");
    }
    Ok(HeadBudget { ratios, global_ratio: r, clamp_threshold, capped })
}

/// Pre-capping mean of the allocation; equals `r` whenever `total > 0`.
pub fn precap_mean(table: &ImportanceTable, r: f64, clamp_threshold: f64) -> Result<f64> {
    let head_imp = head_importance(table)?;
    let layer_imp = layer_importance(table)?;
    let n = head_imp.len();
    let products: Vec<f64> = head_imp
        .iter()
        .enumerate()
        .map(|(i, &h)| (h * layer_imp[i / table.heads_per_layer]).min(clamp_threshold))
        .collect();
    let total: f64 = products.iter().sum();
    if total == 0.0 {
        return Ok(r);
    }
    Ok(products.iter().map(|&v| r * n as f64 * v / total).sum::<f64>() / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn single_layer(head_losses: Vec<f64>, baseline: f64) -> ImportanceTable {
        let n = head_losses.len();
        ImportanceTable {
            baseline_loss: baseline,
            head_losses,
            layer_losses: vec![baseline + 1.0],
            heads_per_layer: n,
        }
    }

    #[test]
    fn importance_is_loss_delta() {
        let t = single_layer(vec![2.0, 102.0], 2.0);
        let imp = head_importance(&t).unwrap();
        assert_eq!(imp, vec![0.0, 100.0]);
    }

    #[test]
    fn negative_delta_floored_at_zero() {
        let t = single_layer(vec![1.5, 3.0], 2.0);
        let imp = head_importance(&t).unwrap();
        assert_eq!(imp[0], 0.0);
    }

    #[test]
    fn uniform_importance_gives_uniform_ratios() {
        let t = single_layer(vec![2.5, 2.5, 2.5, 2.5], 2.0);
        let b = allocate_ratios(&t, 0.2, 1e-3).unwrap();
        for &ratio in &b.ratios {
            assert_abs_diff_eq!(ratio, 0.2, epsilon = 1e-12);
        }
    }

    #[test]
    fn clamped_worked_example() {
        // products [1e-4, 2e-4, 5e-4, 2e-3] with clamp 1e-3 and r = 0.2
        // layer importance is 1.0, so head deltas carry the products.
        let t = ImportanceTable {
            baseline_loss: 0.0,
            head_losses: vec![1e-4, 2e-4, 5e-4, 2e-3],
            layer_losses: vec![1.0],
            heads_per_layer: 4,
        };
        let b = allocate_ratios(&t, 0.2, 1e-3).unwrap();
        let expect = [0.0444, 0.0889, 0.2222, 0.4444];
        for (got, want) in b.ratios.iter().zip(expect) {
            assert_abs_diff_eq!(got, &want, epsilon = 1e-3);
        }
        assert_abs_diff_eq!(precap_mean(&t, 0.2, 1e-3).unwrap(), 0.2, epsilon = 1e-9);
    }

    #[test]
    fn all_zero_importance_falls_back_to_uniform() {
        let t = single_layer(vec![2.0, 2.0, 2.0], 2.0);
        let b = allocate_ratios(&t, 0.3, 1e-3).unwrap();
        assert_eq!(b.ratios, vec![0.3, 0.3, 0.3]);
    }

    #[test]
    fn over_allocation_is_capped() {
        // one head hugely dominant, tiny clamp disabled via large threshold
        let t = single_layer(vec![2.0, 2.0, 2.0, 12.0], 2.0);
        let b = allocate_ratios(&t, 0.9, 1e9).unwrap();
        assert_eq!(b.capped, 1);
        assert_eq!(b.ratios[3], 1.0);
        assert!(b.ratios.iter().all(|&x| x <= 1.0));
    }

    #[test]
    fn rejects_bad_ratio() {
        let t = single_layer(vec![2.0], 2.0);
        assert!(allocate_ratios(&t, 0.0, 1e-3).is_err());
        assert!(allocate_ratios(&t, 1.5, 1e-3).is_err());
    }

    #[test]
    fn monotonic_in_products() {
        let t = ImportanceTable {
            baseline_loss: 0.0,
            head_losses: vec![1e-5, 3e-5, 2e-5, 8e-5],
            layer_losses: vec![1.0],
            heads_per_layer: 4,
        };
        let b = allocate_ratios(&t, 0.2, 1e-3).unwrap();
        assert!(b.ratios[1] > b.ratios[0]);
        assert!(b.ratios[3] > b.ratios[1]);
    }
}
