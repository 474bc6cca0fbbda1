//! Unbiased MMD estimator, its variance estimate, the test-power ratio, and
//! the L1-regularized objective with its analytic gradient.
//!
//! The objective minimized over ARD weights `a` is
//! `-log(ℓ(a)) + λ Σ_d |a_d|` with `ℓ = MMD²_n / sqrt(V_n + C)`.
//! When `ℓ ≤ 0` (possible because the estimator is unbiased) the logarithm
//! is replaced by `ℓ` itself until the ratio turns positive again.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::Error;
use crate::matrix::Matrix;
use crate::trajectory::TrajectorySamples;
use crate::Result;

/// Stability constant added to the variance under the square root.
pub const STABILITY_C: f64 = 1e-8;

/// MMD estimate, variance estimate, and the power ratio built from them.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MmdStats {
    pub mmd2: f64,
    pub variance: f64,
    pub ratio: f64,
}

impl MmdStats {
    /// Assemble stats from the two estimates; the ratio uses the stability
    /// constant so it stays finite at zero variance.
    pub fn from_parts(mmd2: f64, variance: f64) -> Self {
        let variance = variance.max(0.0);
        MmdStats {
            mmd2,
            variance,
            ratio: mmd2 / (variance + STABILITY_C).sqrt(),
        }
    }
}

fn check_square(name: &str, k: &Matrix, min: usize) -> Result<usize> {
    if k.rows() != k.cols() {
        return Err(Error::invalid(format!("{name} must be square")));
    }
    if k.rows() < min {
        return Err(Error::invalid(format!(
            "{name} needs at least {min} samples, got {}",
            k.rows()
        )));
    }
    Ok(k.rows())
}

/// Unbiased MMD² estimate from precomputed Gram matrices. May be negative.
pub fn mmd2_unbiased(k_xx: &Matrix, k_yy: &Matrix, k_xy: &Matrix) -> Result<f64> {
    let n = check_square("K_xx", k_xx, 2)?;
    let m = check_square("K_yy", k_yy, 2)?;
    if k_xy.rows() != n || k_xy.cols() != m {
        return Err(Error::invalid("K_xy shape must be n x m"));
    }
    let mut sum_xx = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum_xx += k_xx.get(i, j);
            }
        }
    }
    let mut sum_yy = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                sum_yy += k_yy.get(i, j);
            }
        }
    }
    let sum_xy: f64 = k_xy.data().iter().sum();
    Ok(sum_xx / (n * (n - 1)) as f64 + sum_yy / (m * (m - 1)) as f64
        - 2.0 * sum_xy / (n * m) as f64)
}

/// Variance estimate of the unbiased MMD² for equal sample sizes.
///
/// With `H_ij = K_xx[i,j] + K_yy[i,j] - K_xy[i,j] - K_xy[j,i]` and the
/// diagonal of `H` zeroed, returns
/// `max(0, (4/n³) Σ_i (Σ_j H_ij)² - (4/n⁴) (Σ_ij H_ij)²)`.
pub fn mmd2_variance(k_xx: &Matrix, k_yy: &Matrix, k_xy: &Matrix) -> Result<f64> {
    let n = check_square("K_xx", k_xx, 2)?;
    let m = check_square("K_yy", k_yy, 2)?;
    if n != m {
        return Err(Error::invalid(format!(
            "variance estimator needs equal sample sizes; got {n} and {m}"
        )));
    }
    if k_xy.rows() != n || k_xy.cols() != n {
        return Err(Error::invalid("K_xy shape must be n x n"));
    }
    let mut sum_sq = 0.0;
    let mut total = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            if i != j {
                row += k_xx.get(i, j) + k_yy.get(i, j) - k_xy.get(i, j) - k_xy.get(j, i);
            }
        }
        sum_sq += row * row;
        total += row;
    }
    let nf = n as f64;
    Ok((4.0 / nf.powi(3) * sum_sq - 4.0 / nf.powi(4) * total * total).max(0.0))
}

/// MMD², variance, and power ratio in one call (equal sample sizes).
pub fn power_ratio(k_xx: &Matrix, k_yy: &Matrix, k_xy: &Matrix) -> Result<MmdStats> {
    let mmd2 = mmd2_unbiased(k_xx, k_yy, k_xy)?;
    let variance = mmd2_variance(k_xx, k_yy, k_xy)?;
    Ok(MmdStats::from_parts(mmd2, variance))
}

/// Per-pair per-dimension kernel features, precomputed once so that the
/// optimizer's inner loop only re-weights and exponentiates them.
///
/// For vector samples the feature is `(u_d - v_d)² / γ_d²`; for trajectory
/// samples it is the agent's summed absolute coordinate difference divided
/// by `γ_i²`. Either way the kernel is `exp(-(1/dims) Σ_d a_d² F_d)`.
///
/// Layout is entry-major: `f[(i*cols + j)*dims + d]`.
pub(crate) struct PairwiseFeatures {
    pub dims: usize,
    pub n: usize,
    pub m: usize,
    pub fxx: Vec<f64>,
    pub fyy: Vec<f64>,
    pub fxy: Vec<f64>,
}

impl PairwiseFeatures {
    pub fn from_vectors(x: &Matrix, y: &Matrix, gamma: &[f64]) -> Result<Self> {
        if x.cols() != gamma.len() || y.cols() != gamma.len() {
            return Err(Error::invalid("sample dimensions must match length scales"));
        }
        if gamma.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::invalid("length scales must be positive"));
        }
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::invalid("samples must be finite"));
        }
        let dims = gamma.len();
        let inv_sq: Vec<f64> = gamma.iter().map(|g| 1.0 / (g * g)).collect();
        let feature = |u: &[f64], v: &[f64], out: &mut [f64]| {
            for d in 0..dims {
                let diff = u[d] - v[d];
                out[d] = diff * diff * inv_sq[d];
            }
        };
        Ok(Self::build(
            dims,
            x.rows(),
            y.rows(),
            |i, j, out| feature(x.row(i), y.row(j), out),
            |i, j, out| feature(x.row(i), x.row(j), out),
            |i, j, out| feature(y.row(i), y.row(j), out),
        ))
    }

    pub fn from_trajectories(
        x: &TrajectorySamples,
        y: &TrajectorySamples,
        scales_sq: &[f64],
    ) -> Result<Self> {
        if x.agents() != y.agents() || x.coords() != y.coords() {
            return Err(Error::invalid("trajectory sample shapes disagree"));
        }
        if scales_sq.len() != x.agents() {
            return Err(Error::invalid("one squared scale per agent required"));
        }
        if scales_sq.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::invalid("squared length scales must be positive"));
        }
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::invalid("samples must be finite"));
        }
        let agents = x.agents();
        let coords = x.coords();
        let feature = |u: &[f64], v: &[f64], out: &mut [f64]| {
            for a in 0..agents {
                let mut dist = 0.0;
                for c in 0..coords {
                    dist += (u[a * coords + c] - v[a * coords + c]).abs();
                }
                out[a] = dist / scales_sq[a];
            }
        };
        Ok(Self::build(
            agents,
            x.len(),
            y.len(),
            |i, j, out| feature(x.sample(i), y.sample(j), out),
            |i, j, out| feature(x.sample(i), x.sample(j), out),
            |i, j, out| feature(y.sample(i), y.sample(j), out),
        ))
    }

    fn build(
        dims: usize,
        n: usize,
        m: usize,
        xy: impl Fn(usize, usize, &mut [f64]),
        xx: impl Fn(usize, usize, &mut [f64]),
        yy: impl Fn(usize, usize, &mut [f64]),
    ) -> Self {
        let mut fxx = vec![0.0; n * n * dims];
        let mut fyy = vec![0.0; m * m * dims];
        let mut fxy = vec![0.0; n * m * dims];
        for i in 0..n {
            for j in (i + 1)..n {
                let mut buf = vec![0.0; dims];
                xx(i, j, &mut buf);
                fxx[(i * n + j) * dims..(i * n + j + 1) * dims].copy_from_slice(&buf);
                fxx[(j * n + i) * dims..(j * n + i + 1) * dims].copy_from_slice(&buf);
            }
        }
        for i in 0..m {
            for j in (i + 1)..m {
                let mut buf = vec![0.0; dims];
                yy(i, j, &mut buf);
                fyy[(i * m + j) * dims..(i * m + j + 1) * dims].copy_from_slice(&buf);
                fyy[(j * m + i) * dims..(j * m + i + 1) * dims].copy_from_slice(&buf);
            }
        }
        for i in 0..n {
            for j in 0..m {
                xy(i, j, &mut fxy[(i * m + j) * dims..(i * m + j + 1) * dims]);
            }
        }
        PairwiseFeatures {
            dims,
            n,
            m,
            fxx,
            fyy,
            fxy,
        }
    }
}

pub(crate) struct ObjectiveEval {
    pub objective: f64,
    pub gradient: Vec<f64>,
    pub stats: MmdStats,
}

/// Reusable buffers for repeated objective/gradient evaluations over the
/// same sample pair (one optimization run).
pub(crate) struct ObjectiveWorkspace {
    features: PairwiseFeatures,
    kxx: Vec<f64>,
    kyy: Vec<f64>,
    kxy: Vec<f64>,
    hrow: Vec<f64>,
    rho: Vec<f64>,
    weighted_sq: Vec<f64>,
}

impl ObjectiveWorkspace {
    pub fn new(features: PairwiseFeatures) -> Result<Self> {
        if features.n != features.m {
            return Err(Error::invalid(
                "objective requires equal train sample counts",
            ));
        }
        if features.n < 2 {
            return Err(Error::invalid("objective needs at least two samples"));
        }
        let n = features.n;
        Ok(ObjectiveWorkspace {
            kxx: vec![0.0; n * n],
            kyy: vec![0.0; n * n],
            kxy: vec![0.0; n * n],
            hrow: vec![0.0; n],
            rho: vec![0.0; n],
            weighted_sq: vec![0.0; features.dims],
            features,
        })
    }

    pub fn dims(&self) -> usize {
        self.features.dims
    }

    /// Objective, analytic gradient, and MMD stats at ARD weights `a`.
    pub fn eval(&mut self, a: &[f64], lambda: f64) -> Result<ObjectiveEval> {
        let dims = self.features.dims;
        let n = self.features.n;
        if a.len() != dims {
            return Err(Error::invalid("weight vector has wrong length"));
        }
        let inv_dims = 1.0 / dims as f64;
        for (slot, &ad) in self.weighted_sq.iter_mut().zip(a.iter()) {
            *slot = ad * ad;
        }

        // Kernel matrices; xx/yy mirrored from the upper triangle.
        for i in 0..n {
            self.kxx[i * n + i] = 1.0;
            self.kyy[i * n + i] = 1.0;
            for j in (i + 1)..n {
                let base = (i * n + j) * dims;
                let mut sx = 0.0;
                let mut sy = 0.0;
                for d in 0..dims {
                    sx += self.weighted_sq[d] * self.features.fxx[base + d];
                    sy += self.weighted_sq[d] * self.features.fyy[base + d];
                }
                let kx = (-sx * inv_dims).exp();
                let ky = (-sy * inv_dims).exp();
                self.kxx[i * n + j] = kx;
                self.kxx[j * n + i] = kx;
                self.kyy[i * n + j] = ky;
                self.kyy[j * n + i] = ky;
            }
        }
        for e in 0..n * n {
            let base = e * dims;
            let mut s = 0.0;
            for d in 0..dims {
                s += self.weighted_sq[d] * self.features.fxy[base + d];
            }
            self.kxy[e] = (-s * inv_dims).exp();
        }

        // MMD² and the H row sums feeding the variance estimate.
        let mut sum_xx = 0.0;
        let mut sum_yy = 0.0;
        let mut sum_xy = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                let kx = self.kxx[i * n + j];
                let ky = self.kyy[i * n + j];
                row += kx + ky - self.kxy[i * n + j] - self.kxy[j * n + i];
                if i != j {
                    sum_xx += kx;
                    sum_yy += ky;
                }
                sum_xy += self.kxy[i * n + j];
            }
            // H has a zeroed diagonal; take the j == i contribution back out.
            row -= 2.0 - 2.0 * self.kxy[i * n + i];
            self.hrow[i] = row;
        }
        let nf = n as f64;
        let pair_count = nf * (nf - 1.0);
        let mmd2 = sum_xx / pair_count + sum_yy / pair_count - 2.0 * sum_xy / (nf * nf);
        let mut h_total = 0.0;
        let mut h_sq = 0.0;
        for &row in &self.hrow {
            h_total += row;
            h_sq += row * row;
        }
        let variance_raw = 4.0 / nf.powi(3) * h_sq - 4.0 / nf.powi(4) * h_total * h_total;
        let stats = MmdStats::from_parts(mmd2, variance_raw);

        let l1: f64 = a.iter().map(|v| v.abs()).sum();
        let objective = if stats.ratio > 0.0 {
            -stats.ratio.ln() + lambda * l1
        } else {
            stats.ratio + lambda * l1
        };
        if !objective.is_finite() {
            return Err(Error::numerical("objective is not finite", None));
        }

        // Gradient, one fused pass per dimension.
        let s_denom = (stats.variance + STABILITY_C).sqrt();
        let mut gradient = vec![0.0; dims];
        for d in 0..dims {
            let mut axx = 0.0;
            let mut ayy = 0.0;
            let mut axy = 0.0;
            self.rho.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..n {
                for j in (i + 1)..n {
                    let base = (i * n + j) * dims + d;
                    let vx = self.kxx[i * n + j] * self.features.fxx[base];
                    let vy = self.kyy[i * n + j] * self.features.fyy[base];
                    axx += vx;
                    ayy += vy;
                    self.rho[i] += vx + vy;
                    self.rho[j] += vx + vy;
                }
            }
            axx *= 2.0;
            ayy *= 2.0;
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let v = self.kxy[i * n + j] * self.features.fxy[(i * n + j) * dims + d];
                    axy += v;
                    self.rho[i] -= v;
                    self.rho[j] -= v;
                }
            }
            // K_xy diagonal entries appear in MMD² but not in H.
            let mut axy_diag = 0.0;
            for i in 0..n {
                axy_diag += self.kxy[i * n + i] * self.features.fxy[(i * n + i) * dims + d];
            }
            let chain = -2.0 * a[d] * inv_dims;
            let dmmd2 = chain
                * (axx / pair_count + ayy / pair_count - 2.0 * (axy + axy_diag) / (nf * nf));
            let dvar = if variance_raw > 0.0 {
                let mut rho_dot = 0.0;
                let mut rho_sum = 0.0;
                for (h, r) in self.hrow.iter().zip(self.rho.iter()) {
                    rho_dot += h * r;
                    rho_sum += r;
                }
                chain * (8.0 / nf.powi(3) * rho_dot - 8.0 / nf.powi(4) * h_total * rho_sum)
            } else {
                0.0
            };
            let dratio = dmmd2 / s_denom - stats.mmd2 * dvar / (2.0 * s_denom.powi(3));
            let data_term = if stats.ratio > 0.0 {
                -dratio / stats.ratio
            } else {
                dratio
            };
            let sign = if a[d] > 0.0 {
                1.0
            } else if a[d] < 0.0 {
                -1.0
            } else {
                0.0
            };
            gradient[d] = data_term + lambda * sign;
            if !gradient[d].is_finite() {
                return Err(Error::numerical("gradient is not finite", None));
            }
        }

        Ok(ObjectiveEval {
            objective,
            gradient,
            stats,
        })
    }
}

/// One-shot objective and gradient for ARD weights on vector samples.
///
/// Builds the pairwise features, evaluates once, and returns the objective
/// value, the gradient, and the MMD statistics at `a`.
pub fn objective_and_gradient(
    a: &[f64],
    gamma: &[f64],
    x_train: &Matrix,
    y_train: &Matrix,
    lambda: f64,
) -> Result<(f64, Vec<f64>, MmdStats)> {
    if lambda < 0.0 {
        return Err(Error::invalid("lambda must be nonnegative"));
    }
    let features = PairwiseFeatures::from_vectors(x_train, y_train, gamma)?;
    let mut workspace = ObjectiveWorkspace::new(features)?;
    let eval = workspace.eval(a, lambda)?;
    Ok((eval.objective, eval.gradient, eval.stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{gram_matrices, ArdKernelParams};
    use approx::assert_relative_eq;

    fn const_matrix(n: usize, m: usize, diag: f64, off: f64) -> Matrix {
        let mut k = Matrix::zeros(n, m);
        for i in 0..n {
            for j in 0..m {
                k.set(i, j, if i == j { diag } else { off });
            }
        }
        k
    }

    #[test]
    fn all_ones_kernel_gives_zero_mmd() {
        let k = const_matrix(3, 3, 1.0, 1.0);
        let kxy = const_matrix(3, 3, 1.0, 1.0);
        assert_eq!(mmd2_unbiased(&k, &k, &kxy).unwrap(), 0.0);
    }

    #[test]
    fn hand_computed_two_sample_case() {
        // n=m=2, off-diagonals 1, K_xy all 0: 1 + 1 - 0 = 2.
        let kxx = const_matrix(2, 2, 1.0, 1.0);
        let kyy = const_matrix(2, 2, 1.0, 1.0);
        let kxy = const_matrix(2, 2, 0.0, 0.0);
        assert_eq!(mmd2_unbiased(&kxx, &kyy, &kxy).unwrap(), 2.0);
    }

    #[test]
    fn rejects_single_sample_blocks() {
        let one = const_matrix(1, 1, 1.0, 1.0);
        let k = const_matrix(2, 2, 1.0, 0.5);
        assert!(mmd2_unbiased(&one, &k, &const_matrix(1, 2, 0.5, 0.5)).is_err());
        assert!(mmd2_variance(&k, &one, &const_matrix(2, 1, 0.5, 0.5)).is_err());
    }

    #[test]
    fn variance_of_constant_h_is_zero() {
        let kxx = const_matrix(4, 4, 1.0, 0.7);
        let kyy = const_matrix(4, 4, 1.0, 0.5);
        let kxy = const_matrix(4, 4, 0.3, 0.3);
        // H is constant off the diagonal, so row sums are all equal and the
        // two variance terms cancel exactly.
        let v = mmd2_variance(&kxx, &kyy, &kxy).unwrap();
        assert_relative_eq!(v, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn identical_blocks_have_zero_variance() {
        let k = const_matrix(3, 3, 1.0, 0.42);
        let v = mmd2_variance(&k, &k, &k).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn ratio_arithmetic() {
        assert_eq!(MmdStats::from_parts(0.0, 3.0).ratio, 0.0);
        assert_relative_eq!(
            MmdStats::from_parts(1.0, 0.0).ratio,
            1e4,
            max_relative = 1e-12
        );
        assert!(MmdStats::from_parts(-0.5, 1.0).ratio < 0.0);
    }

    #[test]
    fn zero_weights_sit_on_the_flat_point() {
        let x = Matrix::from_rows(&[&[0.1, 0.2], &[0.4, -0.3], &[0.9, 0.0]]).unwrap();
        let y = Matrix::from_rows(&[&[0.3, 0.1], &[-0.2, 0.5], &[0.6, 0.7]]).unwrap();
        let (obj, grad, stats) =
            objective_and_gradient(&[0.0, 0.0], &[1.0, 1.0], &x, &y, 0.5).unwrap();
        assert_eq!(stats.mmd2, 0.0);
        assert_eq!(stats.ratio, 0.0);
        assert_eq!(obj, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn lambda_term_is_exactly_l1() {
        let x = Matrix::from_rows(&[&[0.1, 0.2], &[0.4, -0.3], &[0.9, 0.0]]).unwrap();
        let y = Matrix::from_rows(&[&[2.3, 0.1], &[-1.2, 0.5], &[0.6, 2.7]]).unwrap();
        let a = [0.7, 1.3];
        let (with, _, _) = objective_and_gradient(&a, &[1.0, 1.0], &x, &y, 1.0).unwrap();
        let (without, _, _) = objective_and_gradient(&a, &[1.0, 1.0], &x, &y, 0.0).unwrap();
        assert_relative_eq!(with - without, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn workspace_matches_direct_gram_route() {
        let x = Matrix::from_rows(&[&[0.1, 0.2], &[0.4, -0.3], &[0.9, 0.0], &[0.5, 0.5]]).unwrap();
        let y = Matrix::from_rows(&[&[2.3, 0.1], &[-1.2, 0.5], &[0.6, 2.7], &[0.0, 0.2]]).unwrap();
        let a = alloc::vec![0.9, 1.4];
        let gamma = alloc::vec![0.8, 1.1];
        let (_, _, stats) = objective_and_gradient(&a, &gamma, &x, &y, 0.0).unwrap();

        let params = ArdKernelParams::new(a, gamma).unwrap();
        let (kxx, kyy, kxy) = gram_matrices(&params, &x, &y).unwrap();
        let direct = power_ratio(&kxx, &kyy, &kxy).unwrap();
        assert_relative_eq!(stats.mmd2, direct.mmd2, max_relative = 1e-12);
        assert_relative_eq!(stats.variance, direct.variance, epsilon = 1e-15);
    }

    #[test]
    fn mmd_is_symmetric_under_swap() {
        let x = Matrix::from_rows(&[&[0.1], &[0.5], &[0.9]]).unwrap();
        let y = Matrix::from_rows(&[&[0.2], &[0.8], &[1.4]]).unwrap();
        let params = ArdKernelParams::new(alloc::vec![1.0], alloc::vec![1.0]).unwrap();
        let (kxx, kyy, kxy) = gram_matrices(&params, &x, &y).unwrap();
        let (kyy2, kxx2, kyx) = gram_matrices(&params, &y, &x).unwrap();
        let forward = mmd2_unbiased(&kxx, &kyy, &kxy).unwrap();
        let backward = mmd2_unbiased(&kyy2, &kxx2, &kyx).unwrap();
        assert_relative_eq!(forward, backward, max_relative = 1e-12);
    }
}
