//! ARD Gaussian kernel, length-scale heuristics, and Gram matrices.
//!
//! The kernel between samples `u, v ∈ R^D` is
//! `k(u, v) = exp(-(1/D) Σ_d a_d² (u_d - v_d)² / γ_d²)`,
//! where `a` are the ARD weights being optimized and `γ` are fixed
//! per-dimension length scales from the dimension-wise median (or mean)
//! heuristic. For trajectory samples `u, v ∈ R^{A×C}` the agent-wise
//! variant uses the coordinate-summed absolute difference, unsquared,
//! inside the exponent.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::Error;
use crate::matrix::Matrix;
use crate::trajectory::TrajectorySamples;
use crate::Result;

/// ARD weights `a` and length scales `γ`, one entry of each per dimension.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ArdKernelParams {
    ard_weights: Vec<f64>,
    length_scales: Vec<f64>,
}

impl ArdKernelParams {
    pub fn new(ard_weights: Vec<f64>, length_scales: Vec<f64>) -> Result<Self> {
        if ard_weights.len() != length_scales.len() {
            return Err(Error::invalid(format!(
                "{} weights given for {} length scales",
                ard_weights.len(),
                length_scales.len()
            )));
        }
        if ard_weights.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("ARD weights must be finite"));
        }
        if length_scales.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::invalid("length scales must be finite and positive"));
        }
        Ok(ArdKernelParams {
            ard_weights,
            length_scales,
        })
    }

    pub fn dims(&self) -> usize {
        self.ard_weights.len()
    }

    pub fn ard_weights(&self) -> &[f64] {
        &self.ard_weights
    }

    pub fn length_scales(&self) -> &[f64] {
        &self.length_scales
    }
}

/// How per-dimension length scales are derived from pooled samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum LengthScaleMode {
    Median,
    Mean,
    /// Mean when more than half the pooled entries are zero (sparse data),
    /// median otherwise.
    Auto,
}

impl LengthScaleMode {
    /// Resolve `Auto` against the pooled samples' zero fraction.
    pub fn resolve(self, pooled_zero_fraction: f64) -> LengthScaleMode {
        match self {
            LengthScaleMode::Auto => {
                if pooled_zero_fraction > 0.5 {
                    LengthScaleMode::Mean
                } else {
                    LengthScaleMode::Median
                }
            }
            other => other,
        }
    }
}

fn median_in_place(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Dimension-wise length scales from all unordered pairs of the pooled
/// `X` and `Y` samples: `γ_d` is the median (or mean) of `|u_d - v_d|`.
/// A dimension whose pooled pairwise distances are all zero gets `γ_d = 1`.
pub fn dimensionwise_length_scales(
    x_samples: &Matrix,
    y_samples: &Matrix,
    mode: LengthScaleMode,
) -> Result<Vec<f64>> {
    if x_samples.cols() != y_samples.cols() {
        return Err(Error::invalid("sample dimensions disagree"));
    }
    let dims = x_samples.cols();
    let total = x_samples.rows() + y_samples.rows();
    if total < 2 {
        return Err(Error::invalid("need at least two pooled samples"));
    }
    if !x_samples.is_finite() || !y_samples.is_finite() {
        return Err(Error::invalid("samples must be finite"));
    }
    let mode = mode.resolve({
        let zeros = x_samples.zero_fraction() * (x_samples.rows() * dims) as f64
            + y_samples.zero_fraction() * (y_samples.rows() * dims) as f64;
        zeros / (total * dims) as f64
    });

    let pooled_value = |i: usize, d: usize| -> f64 {
        if i < x_samples.rows() {
            x_samples.get(i, d)
        } else {
            y_samples.get(i - x_samples.rows(), d)
        }
    };

    let n_pairs = total * (total - 1) / 2;
    let mut scales = Vec::with_capacity(dims);
    let mut distances = Vec::with_capacity(n_pairs);
    for d in 0..dims {
        distances.clear();
        for i in 0..total {
            let vi = pooled_value(i, d);
            for j in (i + 1)..total {
                distances.push((vi - pooled_value(j, d)).abs());
            }
        }
        let scale = match mode {
            LengthScaleMode::Median => median_in_place(&mut distances),
            LengthScaleMode::Mean => distances.iter().sum::<f64>() / n_pairs as f64,
            LengthScaleMode::Auto => unreachable!("resolved above"),
        };
        scales.push(if scale > 0.0 { scale } else { 1.0 });
    }
    Ok(scales)
}

fn ard_kernel_value(params: &ArdKernelParams, u: &[f64], v: &[f64]) -> f64 {
    let dims = params.dims() as f64;
    let mut acc = 0.0;
    for ((&a, &g), (&ud, &vd)) in params
        .ard_weights
        .iter()
        .zip(params.length_scales.iter())
        .zip(u.iter().zip(v.iter()))
    {
        let diff = ud - vd;
        acc += a * a * diff * diff / (g * g);
    }
    (-acc / dims).exp()
}

fn symmetric_gram(f: impl Fn(usize, usize) -> f64, n: usize) -> Matrix {
    // Upper triangle mirrored so K_xx is symmetric to the last ulp.
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        k.set(i, i, 1.0);
        for j in (i + 1)..n {
            let value = f(i, j);
            k.set(i, j, value);
            k.set(j, i, value);
        }
    }
    k
}

/// Gram matrices `(K_xx, K_yy, K_xy)` for `n×D` and `m×D` sample blocks.
/// Diagonals are exactly 1 and every entry lies in `(0, 1]`.
pub fn gram_matrices(
    params: &ArdKernelParams,
    x: &Matrix,
    y: &Matrix,
) -> Result<(Matrix, Matrix, Matrix)> {
    if x.cols() != params.dims() || y.cols() != params.dims() {
        return Err(Error::invalid(format!(
            "kernel has {} dimensions but samples have {} and {}",
            params.dims(),
            x.cols(),
            y.cols()
        )));
    }
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::invalid("samples must be finite"));
    }
    let k_xx = symmetric_gram(|i, j| ard_kernel_value(params, x.row(i), x.row(j)), x.rows());
    let k_yy = symmetric_gram(|i, j| ard_kernel_value(params, y.row(i), y.row(j)), y.rows());
    let mut k_xy = Matrix::zeros(x.rows(), y.rows());
    for i in 0..x.rows() {
        for j in 0..y.rows() {
            k_xy.set(i, j, ard_kernel_value(params, x.row(i), y.row(j)));
        }
    }
    Ok((k_xx, k_yy, k_xy))
}

fn agent_kernel_value(
    weights: &[f64],
    scales_sq: &[f64],
    agents: usize,
    coords: usize,
    u: &[f64],
    v: &[f64],
) -> f64 {
    // Coordinate differences enter unsquared: Σ_j |u_ij - v_ij|.
    let mut acc = 0.0;
    for i in 0..agents {
        let mut dist = 0.0;
        for j in 0..coords {
            dist += (u[i * coords + j] - v[i * coords + j]).abs();
        }
        acc += weights[i] * weights[i] * dist / scales_sq[i];
    }
    (-acc / agents as f64).exp()
}

/// Agent-wise Gram matrices for trajectory samples in `R^{A×C}`.
///
/// `scales_sq` holds the squared length scales `γ_i²` that divide each
/// agent's summed coordinate distance.
pub fn agent_gram_matrices(
    agent_weights: &[f64],
    scales_sq: &[f64],
    x: &TrajectorySamples,
    y: &TrajectorySamples,
) -> Result<(Matrix, Matrix, Matrix)> {
    if x.agents() != y.agents() || x.coords() != y.coords() {
        return Err(Error::invalid("trajectory sample shapes disagree"));
    }
    let agents = x.agents();
    let coords = x.coords();
    if agent_weights.len() != agents || scales_sq.len() != agents {
        return Err(Error::invalid("one weight and one scale per agent required"));
    }
    if scales_sq.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
        return Err(Error::invalid("squared length scales must be positive"));
    }
    if !x.is_finite() || !y.is_finite() || agent_weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::invalid("inputs must be finite"));
    }
    let value = |u: &[f64], v: &[f64]| agent_kernel_value(agent_weights, scales_sq, agents, coords, u, v);
    let k_xx = symmetric_gram(|i, j| value(x.sample(i), x.sample(j)), x.len());
    let k_yy = symmetric_gram(|i, j| value(y.sample(i), y.sample(j)), y.len());
    let mut k_xy = Matrix::zeros(x.len(), y.len());
    for i in 0..x.len() {
        for j in 0..y.len() {
            k_xy.set(i, j, value(x.sample(i), y.sample(j)));
        }
    }
    Ok((k_xx, k_yy, k_xy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn median_and_mean_heuristics_on_three_values() {
        // Pooled per-dimension values {0, 1, 3}: pairwise |Δ| = {1, 3, 2}.
        let x = Matrix::from_rows(&[&[0.0], &[1.0]]).unwrap();
        let y = Matrix::from_rows(&[&[3.0]]).unwrap();
        let med = dimensionwise_length_scales(&x, &y, LengthScaleMode::Median).unwrap();
        assert_eq!(med, alloc::vec![2.0]);
        let mean = dimensionwise_length_scales(&x, &y, LengthScaleMode::Mean).unwrap();
        assert_eq!(mean, alloc::vec![2.0]);
    }

    #[test]
    fn constant_dimension_falls_back_to_one() {
        let x = Matrix::from_rows(&[&[5.0, 1.0], &[5.0, 2.0]]).unwrap();
        let y = Matrix::from_rows(&[&[5.0, 4.0]]).unwrap();
        let scales = dimensionwise_length_scales(&x, &y, LengthScaleMode::Median).unwrap();
        assert_eq!(scales[0], 1.0);
        assert!(scales[1] > 0.0);
    }

    #[test]
    fn auto_mode_switches_on_sparsity() {
        assert_eq!(
            LengthScaleMode::Auto.resolve(0.6),
            LengthScaleMode::Mean
        );
        assert_eq!(
            LengthScaleMode::Auto.resolve(0.4),
            LengthScaleMode::Median
        );
    }

    #[test]
    fn zero_weights_give_all_ones() {
        let params = ArdKernelParams::new(alloc::vec![0.0, 0.0], alloc::vec![1.0, 2.0]).unwrap();
        let x = Matrix::from_rows(&[&[1.0, -1.0], &[2.0, 5.0]]).unwrap();
        let y = Matrix::from_rows(&[&[0.0, 0.0]]).unwrap();
        let (kxx, kyy, kxy) = gram_matrices(&params, &x, &y).unwrap();
        assert!(kxx.data().iter().all(|&v| v == 1.0));
        assert!(kyy.data().iter().all(|&v| v == 1.0));
        assert!(kxy.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn one_dimensional_kernel_value() {
        let params = ArdKernelParams::new(alloc::vec![1.0], alloc::vec![1.0]).unwrap();
        let x = Matrix::from_rows(&[&[0.0]]).unwrap();
        let y = Matrix::from_rows(&[&[2.0]]).unwrap();
        let (_, _, kxy) = gram_matrices(&params, &x, &y).unwrap();
        assert_relative_eq!(kxy.get(0, 0), (-4.0f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn joint_rescaling_leaves_gram_unchanged() {
        let x = Matrix::from_rows(&[&[0.3, 1.0], &[0.7, -0.2]]).unwrap();
        let y = Matrix::from_rows(&[&[0.1, 0.4], &[0.9, 0.8]]).unwrap();
        let base = ArdKernelParams::new(alloc::vec![1.5, 0.5], alloc::vec![0.7, 1.3]).unwrap();
        let scaled = ArdKernelParams::new(alloc::vec![4.5, 1.5], alloc::vec![2.1, 3.9]).unwrap();
        let (a, _, _) = gram_matrices(&base, &x, &y).unwrap();
        let (b, _, _) = gram_matrices(&scaled, &x, &y).unwrap();
        for (u, v) in a.data().iter().zip(b.data().iter()) {
            assert_relative_eq!(u, v, max_relative = 1e-12);
        }
    }

    #[test]
    fn gram_is_exactly_symmetric_with_unit_diagonal() {
        let params = ArdKernelParams::new(alloc::vec![1.0, 2.0], alloc::vec![1.0, 1.0]).unwrap();
        let x = Matrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.5], &[0.2, 0.9]]).unwrap();
        let (kxx, _, _) = gram_matrices(&params, &x, &x).unwrap();
        for i in 0..3 {
            assert_eq!(kxx.get(i, i), 1.0);
            for j in 0..3 {
                assert_eq!(kxx.get(i, j).to_bits(), kxx.get(j, i).to_bits());
                assert!(kxx.get(i, j) > 0.0 && kxx.get(i, j) <= 1.0);
            }
        }
    }

    #[test]
    fn agent_kernel_uses_unsquared_distance() {
        let x = TrajectorySamples::from_flat(1, 1, 1, alloc::vec![0.0]).unwrap();
        let y = TrajectorySamples::from_flat(1, 1, 1, alloc::vec![2.0]).unwrap();
        let (_, _, kxy) =
            agent_gram_matrices(&[1.0], &[1.0], &x, &y).unwrap();
        assert_relative_eq!(kxy.get(0, 0), (-2.0f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn agent_kernel_zero_weights_and_identity() {
        let x = TrajectorySamples::from_flat(2, 2, 2, alloc::vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0])
            .unwrap();
        let (kxx, _, kxy) = agent_gram_matrices(&[0.0, 0.0], &[1.0, 1.0], &x, &x).unwrap();
        assert!(kxx.data().iter().all(|&v| v == 1.0));
        assert!(kxy.data().iter().all(|&v| v == 1.0));

        let (kxx, _, _) = agent_gram_matrices(&[1.0, 0.5], &[1.0, 2.0], &x, &x).unwrap();
        assert_eq!(kxx.get(0, 0), 1.0);
        assert_eq!(kxx.get(1, 1), 1.0);
    }
}
