//! The pair of series under comparison.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Error;
use crate::matrix::Matrix;
use crate::Result;

/// Two `D×T` matrices under comparison. Row `d` is a variable, column `t`
/// a time step; variables and time steps are 1-indexed in every interface.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TimeSeriesPair {
    x: Matrix,
    y: Matrix,
    variable_labels: Option<Vec<String>>,
}

impl TimeSeriesPair {
    /// Validates the shared-shape and finiteness invariants.
    pub fn new(x: Matrix, y: Matrix, variable_labels: Option<Vec<String>>) -> Result<Self> {
        if x.rows() != y.rows() || x.cols() != y.cols() {
            return Err(Error::invalid(format!(
                "series shapes differ: x is {}x{}, y is {}x{}",
                x.rows(),
                x.cols(),
                y.rows(),
                y.cols()
            )));
        }
        if x.rows() < 1 {
            return Err(Error::invalid("series must have at least one variable"));
        }
        if x.cols() < 2 {
            return Err(Error::invalid("series must have at least two time steps"));
        }
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::invalid("series entries must all be finite"));
        }
        if let Some(labels) = &variable_labels {
            if labels.len() != x.rows() {
                return Err(Error::invalid(format!(
                    "{} labels given for {} variables",
                    labels.len(),
                    x.rows()
                )));
            }
        }
        Ok(TimeSeriesPair {
            x,
            y,
            variable_labels,
        })
    }

    /// Number of variables `D`.
    pub fn dims(&self) -> usize {
        self.x.rows()
    }

    /// Number of time steps `T`.
    pub fn len(&self) -> usize {
        self.x.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &Matrix {
        &self.y
    }

    pub fn variable_labels(&self) -> Option<&[String]> {
        self.variable_labels.as_deref()
    }

    /// Collect the `x` columns at the given 1-based time indices into an
    /// `n×D` sample matrix (one row per time step).
    pub fn x_samples(&self, time_indices: &[usize]) -> Matrix {
        columns_as_samples(&self.x, time_indices)
    }

    /// Same as [`TimeSeriesPair::x_samples`] for the `y` series.
    pub fn y_samples(&self, time_indices: &[usize]) -> Matrix {
        columns_as_samples(&self.y, time_indices)
    }
}

fn columns_as_samples(series: &Matrix, time_indices: &[usize]) -> Matrix {
    let d = series.rows();
    let mut out = Matrix::zeros(time_indices.len(), d);
    for (row, &t) in time_indices.iter().enumerate() {
        let dst = out.row_mut(row);
        for (var, slot) in dst.iter_mut().enumerate() {
            *slot = series.get(var, t - 1);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair_2x3() -> TimeSeriesPair {
        let x = Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]).unwrap();
        let y = Matrix::from_rows(&[&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0]]).unwrap();
        TimeSeriesPair::new(x, y, None).unwrap()
    }

    #[test]
    fn rejects_shape_mismatch_and_nan() {
        let x = Matrix::zeros(2, 3);
        let y = Matrix::zeros(2, 4);
        assert!(TimeSeriesPair::new(x, y, None).is_err());

        let x = Matrix::from_rows(&[&[1.0, f64::NAN]]).unwrap();
        let y = Matrix::zeros(1, 2);
        assert!(TimeSeriesPair::new(x, y, None).is_err());
    }

    #[test]
    fn samples_transpose_selected_columns() {
        let pair = pair_2x3();
        let s = pair.x_samples(&[3, 1]);
        assert_eq!(s.rows(), 2);
        assert_eq!(s.row(0), &[3.0, 6.0]);
        assert_eq!(s.row(1), &[1.0, 4.0]);
    }
}
