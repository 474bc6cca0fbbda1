//! Adam optimization of ARD weights with a plateau learning-rate schedule,
//! two early stoppers, and the null-acceptance path for nonpositive power
//! ratios.
//!
//! Weights start at 1 (the plain dimension-normalized Gaussian kernel) and
//! are clamped to be nonnegative after every step; they enter the kernel
//! squared, so the sign carries no information anyway.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::matrix::Matrix;
use crate::mmd::{ObjectiveWorkspace, PairwiseFeatures};
use crate::select::threshold_indices;
use crate::Result;

/// Minimum relative improvement of the best objective between scheduler
/// checks; anything less counts as a plateau.
const LR_IMPROVEMENT_RTOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OptimizeConfig {
    pub initial_lr: f64,
    pub lr_floor: f64,
    pub lr_factor: f64,
    pub lr_check_every: usize,
    pub max_epochs: usize,
    pub conv_warmup: usize,
    pub conv_window: usize,
    pub conv_ratio: f64,
    pub varstop_warmup: usize,
    pub varstop_check_every: usize,
    pub varstop_window: usize,
    pub negative_patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            initial_lr: 0.01,
            lr_floor: 0.001,
            lr_factor: 0.5,
            lr_check_every: 10,
            max_epochs: 9999,
            conv_warmup: 200,
            conv_window: 100,
            conv_ratio: 0.001,
            varstop_warmup: 400,
            varstop_check_every: 10,
            varstop_window: 100,
            negative_patience: 3000,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<()> {
        use crate::error::Error;
        if !(self.initial_lr > 0.0 && self.lr_floor > 0.0 && self.lr_floor <= self.initial_lr) {
            return Err(Error::invalid("need 0 < lr_floor <= initial_lr"));
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return Err(Error::invalid("lr_factor must lie in (0,1)"));
        }
        if self.lr_check_every == 0
            || self.max_epochs == 0
            || self.conv_window == 0
            || self.varstop_check_every == 0
            || self.varstop_window == 0
            || self.negative_patience == 0
        {
            return Err(Error::invalid("epoch counts must be positive"));
        }
        if !(self.conv_ratio > 0.0) {
            return Err(Error::invalid("conv_ratio must be positive"));
        }
        Ok(())
    }
}

/// Why an optimization run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum StopReason {
    /// The objective plateaued inside the convergence window.
    Converged,
    /// The thresholded variable set stayed fixed long enough.
    VariablesStable,
    MaxEpochs,
    /// The power ratio stayed nonpositive: the null hypothesis is accepted
    /// and the weights are reported as the zero vector.
    H0Accepted,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::VariablesStable => "variables-stable",
            StopReason::MaxEpochs => "max-epochs",
            StopReason::H0Accepted => "h0-accepted",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutcome {
    pub ard_weights: Vec<f64>,
    pub epochs_run: usize,
    pub stop_reason: StopReason,
    /// Objective value per epoch, evaluated at the pre-step weights.
    pub trace: Vec<f64>,
}

impl OptimizeOutcome {
    pub fn accepted_null(&self) -> bool {
        self.stop_reason == StopReason::H0Accepted
    }
}

/// Optimize ARD weights for the given train blocks and length scales.
pub fn optimize_ard(
    x_train: &Matrix,
    y_train: &Matrix,
    gamma: &[f64],
    lambda: f64,
    config: &OptimizeConfig,
) -> Result<OptimizeOutcome> {
    if lambda < 0.0 {
        return Err(crate::error::Error::invalid("lambda must be nonnegative"));
    }
    let features = PairwiseFeatures::from_vectors(x_train, y_train, gamma)?;
    let mut workspace = ObjectiveWorkspace::new(features)?;
    optimize_with_workspace(&mut workspace, lambda, config)
}

/// The convergence-window test: shift the window so its minimum sits at 1,
/// then require min/max to be within `conv_ratio` of 1.
fn window_converged(window: &[f64], conv_ratio: f64) -> bool {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in window {
        min = min.min(v);
        max = max.max(v);
    }
    let shift = 1.0 - min;
    let ratio = (min + shift) / (max + shift);
    (ratio - 1.0).abs() < conv_ratio
}

pub(crate) fn optimize_with_workspace(
    workspace: &mut ObjectiveWorkspace,
    lambda: f64,
    config: &OptimizeConfig,
) -> Result<OptimizeOutcome> {
    config.validate()?;
    let dims = workspace.dims();
    let mut weights = vec![1.0; dims];
    let mut m = vec![0.0; dims];
    let mut v = vec![0.0; dims];
    let mut lr = config.initial_lr;
    let mut trace: Vec<f64> = Vec::new();

    let mut best = f64::INFINITY;
    let mut best_at_last_check: Option<f64> = None;
    let mut negative_run = 0usize;
    let mut last_selection: Option<Vec<usize>> = None;
    let mut last_selection_change = 0usize;

    let h0 = |epochs: usize, trace: Vec<f64>| OptimizeOutcome {
        ard_weights: vec![0.0; dims],
        epochs_run: epochs,
        stop_reason: StopReason::H0Accepted,
        trace,
    };

    for epoch in 1..=config.max_epochs {
        let eval = match workspace.eval(&weights, lambda) {
            Ok(eval) => eval,
            Err(crate::error::Error::Numerical { message, .. }) => {
                return Err(crate::error::Error::numerical(message, Some(epoch)));
            }
            Err(other) => return Err(other),
        };
        trace.push(eval.objective);
        best = best.min(eval.objective);
        let positive_ratio = eval.stats.ratio > 0.0;
        if positive_ratio {
            negative_run = 0;
        } else {
            negative_run += 1;
            if negative_run >= config.negative_patience {
                return Ok(h0(epoch, trace));
            }
        }

        // Adam step with bias correction, then project onto a >= 0.
        let t = epoch as i32;
        let bias1 = 1.0 - config.beta1.powi(t);
        let bias2 = 1.0 - config.beta2.powi(t);
        for d in 0..dims {
            m[d] = config.beta1 * m[d] + (1.0 - config.beta1) * eval.gradient[d];
            v[d] = config.beta2 * v[d] + (1.0 - config.beta2) * eval.gradient[d] * eval.gradient[d];
            let step = lr * (m[d] / bias1) / ((v[d] / bias2).sqrt() + config.epsilon);
            weights[d] = (weights[d] - step).max(0.0);
        }

        if epoch % config.lr_check_every == 0 {
            if let Some(prev) = best_at_last_check {
                let rel = (prev - best) / prev.abs().max(1e-12);
                if rel < LR_IMPROVEMENT_RTOL {
                    lr = (lr * config.lr_factor).max(config.lr_floor);
                }
            }
            best_at_last_check = Some(best);
        }

        // Early stoppers only act while the ratio is positive; a converged
        // objective with a nonpositive ratio means no evidence against the
        // null was found, which ends in the acceptance path.
        if epoch >= config.conv_warmup + config.conv_window {
            let window = &trace[epoch - config.conv_window..epoch];
            if window_converged(window, config.conv_ratio) {
                if positive_ratio {
                    return Ok(OptimizeOutcome {
                        ard_weights: weights,
                        epochs_run: epoch,
                        stop_reason: StopReason::Converged,
                        trace,
                    });
                }
                return Ok(h0(epoch, trace));
            }
        }

        if positive_ratio
            && epoch >= config.varstop_warmup
            && epoch % config.varstop_check_every == 0
        {
            let selection = threshold_indices(&weights);
            match &last_selection {
                Some(previous) if *previous == selection => {
                    if epoch - last_selection_change >= config.varstop_window {
                        return Ok(OptimizeOutcome {
                            ard_weights: weights,
                            epochs_run: epoch,
                            stop_reason: StopReason::VariablesStable,
                            trace,
                        });
                    }
                }
                _ => {
                    last_selection = Some(selection);
                    last_selection_change = epoch;
                }
            }
        }
    }

    Ok(OptimizeOutcome {
        ard_weights: weights,
        epochs_run: config.max_epochs,
        stop_reason: StopReason::MaxEpochs,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> OptimizeConfig {
        OptimizeConfig {
            max_epochs: 600,
            ..OptimizeConfig::default()
        }
    }

    #[test]
    fn identical_blocks_accept_the_null_with_zero_weights() {
        // Identical blocks keep the ratio nonpositive forever, so either the
        // negative-patience counter or a converged-while-negative window must
        // end in the acceptance path.
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|i| alloc::vec![0.1 * i as f64, (i as f64).sin()])
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let x = Matrix::from_rows(&refs).unwrap();
        let outcome = optimize_ard(&x, &x, &[1.0, 1.0], 0.0, &OptimizeConfig::default()).unwrap();
        assert_eq!(outcome.stop_reason, StopReason::H0Accepted);
        assert!(outcome.ard_weights.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn runs_are_deterministic() {
        let x = Matrix::from_rows(&[&[0.0, 0.1], &[0.4, 0.3], &[0.9, 0.8], &[1.3, 1.1]]).unwrap();
        let y = Matrix::from_rows(&[&[2.0, 0.1], &[2.4, 0.3], &[2.9, 0.8], &[3.3, 1.1]]).unwrap();
        let cfg = small_config();
        let a = optimize_ard(&x, &y, &[1.0, 1.0], 0.01, &cfg).unwrap();
        let b = optimize_ard(&x, &y, &[1.0, 1.0], 0.01, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn weights_stay_nonnegative_and_separating_dim_wins() {
        // Dimension 1 separates the samples; dimension 2 is identical noise.
        let x = Matrix::from_rows(&[
            &[0.0, 0.5],
            &[0.1, 0.1],
            &[0.2, 0.9],
            &[0.1, 0.4],
            &[0.0, 0.2],
            &[0.2, 0.7],
        ])
        .unwrap();
        let y = Matrix::from_rows(&[
            &[5.0, 0.5],
            &[5.1, 0.1],
            &[5.2, 0.9],
            &[5.1, 0.4],
            &[5.0, 0.2],
            &[5.2, 0.7],
        ])
        .unwrap();
        let outcome = optimize_ard(&x, &y, &[1.0, 1.0], 0.1, &small_config()).unwrap();
        assert!(outcome.ard_weights.iter().all(|&w| w >= 0.0));
        assert!(outcome.ard_weights[0] > outcome.ard_weights[1]);
    }

    #[test]
    fn best_so_far_objective_is_nonincreasing() {
        let x = Matrix::from_rows(&[&[0.0], &[0.2], &[0.4], &[0.6]]).unwrap();
        let y = Matrix::from_rows(&[&[1.0], &[1.2], &[1.4], &[1.6]]).unwrap();
        let outcome = optimize_ard(&x, &y, &[1.0], 0.0, &small_config()).unwrap();
        let mut best = f64::INFINITY;
        for &value in &outcome.trace {
            let next = best.min(value);
            assert!(next <= best);
            best = next;
        }
    }

    #[test]
    fn window_test_handles_negative_values() {
        // Shifting makes the min/max ratio well defined for negative traces.
        assert!(window_converged(&[-5.0, -5.0, -5.0], 0.001));
        assert!(!window_converged(&[-5.0, -4.0, -5.0], 0.001));
        assert!(window_converged(&[3.0, 3.0000001, 3.0], 0.001));
    }
}
