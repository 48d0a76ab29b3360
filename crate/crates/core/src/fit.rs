//! Weighted least-squares fits of small-ε asymptotics y(ε) ≈ A·φ(ε) + …,
//! with a handful of competing leading behaviours.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// A ε² + ε³, ε⁴ corrections
    Eps2,
    /// A ε² ln(1/ε) + ε², ε³ corrections
    Eps2log,
    /// A ε + ε^{3/2}, ε² corrections
    Eps1,
}

impl FitModel {
    pub const ALL: [FitModel; 3] = [FitModel::Eps1, FitModel::Eps2log, FitModel::Eps2];

    pub fn name(self) -> &'static str {
        match self {
            FitModel::Eps2 => "eps2",
            FitModel::Eps2log => "eps2log",
            FitModel::Eps1 => "eps1",
        }
    }

    /// Basis functions; the first one is the leading term.
    pub fn basis(self, eps: f64) -> [f64; 3] {
        let e2 = eps * eps;
        match self {
            FitModel::Eps2 => [e2, e2 * eps, e2 * e2],
            FitModel::Eps2log => [e2 * (1.0 / eps).ln(), e2, e2 * eps],
            FitModel::Eps1 => [eps, eps * eps.sqrt(), e2],
        }
    }

    /// The leading behaviour predicted from the dimension alone.
    pub fn for_dimension(n: u32) -> Self {
        match n {
            3 => FitModel::Eps1,
            4 => FitModel::Eps2log,
            _ => FitModel::Eps2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    /// RMS of the weighted residuals divided by the RMS of the weighted data.
    pub residual: f64,
}

/// Minimizes Σ w_i² (y_i − Σ_j c_j B_ij)². Columns are scaled to unit norm
/// before the SVD so that wildly different powers of ε stay well conditioned.
pub fn weighted_least_squares(design: &DMatrix<f64>, y: &[f64], weights: &[f64]) -> Result<LinearFit> {
    let (rows, cols) = design.shape();
    if rows != y.len() || rows != weights.len() {
        return Err(Error::domain("least squares: size mismatch"));
    }
    if rows < cols {
        return Err(Error::FitRange(format!("{rows} samples cannot determine {cols} coefficients")));
    }
    let mut a = DMatrix::from_fn(rows, cols, |i, j| design[(i, j)] * weights[i]);
    let mut scale = vec![1.0; cols];
    for (j, sc) in scale.iter_mut().enumerate() {
        let norm = a.column(j).norm();
        if norm > 0.0 {
            *sc = norm;
            a.column_mut(j).scale_mut(1.0 / norm);
        }
    }
    let b = DVector::from_iterator(rows, y.iter().zip(weights).map(|(v, w)| v * w));
    let svd = a.clone().svd(true, true);
    let sol = svd
        .solve(&b, 1e-14)
        .map_err(|e| Error::FitRange(format!("least squares failed: {e}")))?;
    let resid = &b - &a * &sol;
    let denom = b.norm();
    let residual = if denom > 0.0 { resid.norm() / denom } else { 0.0 };
    let coefficients = (0..cols).map(|j| sol[j] / scale[j]).collect();
    Ok(LinearFit { coefficients, residual })
}

/// One candidate model fitted to the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub model: FitModel,
    pub slope: f64,
    pub coefficients: Vec<f64>,
    pub residual: f64,
}

pub fn fit_model(model: FitModel, eps: &[f64], y: &[f64], weights: &[f64]) -> Result<ModelFit> {
    let design = DMatrix::from_fn(eps.len(), 3, |i, j| model.basis(eps[i])[j]);
    let fit = weighted_least_squares(&design, y, weights)?;
    Ok(ModelFit {
        model,
        slope: fit.coefficients[0],
        coefficients: fit.coefficients,
        residual: fit.residual,
    })
}

/// Relative weights 1/|y| with a floor so that vanishing samples do not
/// dominate.
pub fn relative_weights(y: &[f64]) -> Vec<f64> {
    let peak = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let floor = (1e-12 * peak).max(1e-300);
    y.iter().map(|v| 1.0 / v.abs().max(floor)).collect()
}

/// Residual improvement a model with a lower-order or logarithmic leading
/// term must achieve over the plain ε² model to be selected.
pub const SELECTION_RATIO: f64 = 2.0;

/// Residuals below this level are indistinguishable from rounding.
pub const RESIDUAL_FLOOR: f64 = 1e-9;

/// Fits all candidate models and selects one by residual comparison. The ε
/// model is taken when it beats both ε² models by [`SELECTION_RATIO`]; then
/// the log model is taken over plain ε² under the same margin.
pub fn select_model(eps: &[f64], y: &[f64]) -> Result<(ModelFit, Vec<ModelFit>)> {
    let w = relative_weights(y);
    let fits: Vec<ModelFit> = FitModel::ALL
        .iter()
        .map(|&m| fit_model(m, eps, y, &w))
        .collect::<Result<_>>()?;
    let get = |m: FitModel| fits.iter().find(|f| f.model == m).expect("all models fitted");
    let (e1, elog, e2) = (get(FitModel::Eps1), get(FitModel::Eps2log), get(FitModel::Eps2));
    let beats = |a: &ModelFit, b: &ModelFit| b.residual > RESIDUAL_FLOOR && a.residual * SELECTION_RATIO <= b.residual;
    let chosen = if beats(e1, elog) && beats(e1, e2) {
        e1
    } else if beats(elog, e2) {
        elog
    } else {
        e2
    };
    Ok((chosen.clone(), fits))
}
