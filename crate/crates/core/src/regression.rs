//! Least-squares and logistic regression on column data.
//!
//! Designs are small (a handful of regressors over many rows), so the
//! normal equations are accumulated row by row and solved by Cholesky.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Ordinary least squares fit with an intercept in position 0.
#[derive(Clone, Debug, PartialEq)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub stderr: Vec<f64>,
    pub residual_variance: f64,
}

impl OlsFit {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.coefficients[0] + self.coefficients[1..].iter().zip(row).map(|(b, x)| b * x).sum::<f64>()
    }
}

fn gram(columns: &[&[f64]], n: usize, weights: Option<&[f64]>) -> DMatrix<f64> {
    let p = columns.len() + 1;
    let mut g = DMatrix::zeros(p, p);
    let mut row = vec![1.0; p];
    for r in 0..n {
        for (j, c) in columns.iter().enumerate() {
            row[j + 1] = c[r];
        }
        let w = weights.map_or(1.0, |w| w[r]);
        for i in 0..p {
            let wi = w * row[i];
            for j in i..p {
                g[(i, j)] += wi * row[j];
            }
        }
    }
    g.fill_lower_triangle_with_upper_triangle();
    g
}

fn cross(columns: &[&[f64]], y: &[f64], weights: Option<&[f64]>) -> DVector<f64> {
    let mut v = DVector::zeros(columns.len() + 1);
    for r in 0..y.len() {
        let wy = weights.map_or(1.0, |w| w[r]) * y[r];
        v[0] += wy;
        for (j, c) in columns.iter().enumerate() {
            v[j + 1] += wy * c[r];
        }
    }
    v
}

fn factor(g: DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let scale = g.diagonal().max().max(f64::MIN_POSITIVE);
    let chol = Cholesky::new(g).ok_or_else(|| Error::RankDeficient("design matrix is singular".into()))?;
    if chol.l().diagonal().iter().any(|d| d * d <= 1e-12 * scale) {
        return Err(Error::RankDeficient("design matrix is numerically singular".into()));
    }
    Ok(chol)
}

fn check(columns: &[&[f64]], y: &[f64]) -> Result<()> {
    if columns.iter().any(|c| c.len() != y.len()) {
        return Err(Error::InvalidParameter("regression columns differ in length".into()));
    }
    if y.len() <= columns.len() + 1 {
        return Err(Error::RankDeficient(format!("{} rows for {} coefficients", y.len(), columns.len() + 1)));
    }
    Ok(())
}

/// Regresses `y` on an intercept and `columns`.
pub fn ols(columns: &[&[f64]], y: &[f64]) -> Result<OlsFit> {
    check(columns, y)?;
    let n = y.len();
    let chol = factor(gram(columns, n, None))?;
    let beta = chol.solve(&cross(columns, y, None));
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let fit = OlsFit { coefficients, stderr: Vec::new(), residual_variance: 0.0 };
    let rss: f64 = (0..n)
        .map(|r| {
            let row: Vec<f64> = columns.iter().map(|c| c[r]).collect();
            (y[r] - fit.predict(&row)).powi(2)
        })
        .sum();
    let sigma2 = rss / (n - columns.len() - 1) as f64;
    let inv = chol.inverse();
    let stderr = (0..=columns.len()).map(|i| (sigma2 * inv[(i, i)]).sqrt()).collect();
    Ok(OlsFit { stderr, residual_variance: sigma2, ..fit })
}

/// Logistic regression fit with an intercept in position 0.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticFit {
    pub coefficients: Vec<f64>,
    pub iterations: usize,
}

impl LogisticFit {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let eta = self.coefficients[0] + self.coefficients[1..].iter().zip(row).map(|(b, x)| b * x).sum::<f64>();
        1.0 / (1.0 + (-eta).exp())
    }
}

const IRLS_MAX_ITER: usize = 100;

/// Maximum-likelihood logistic regression of a 0/1 response by
/// iteratively reweighted least squares.
pub fn logistic(columns: &[&[f64]], y: &[f64]) -> Result<LogisticFit> {
    check(columns, y)?;
    if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(Error::InvalidParameter("logistic response must be 0 or 1".into()));
    }
    let n = y.len();
    let p = columns.len() + 1;
    let mut beta: DVector<f64> = DVector::zeros(p);
    let mut row = vec![0.0; columns.len()];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    for it in 1..=IRLS_MAX_ITER {
        for r in 0..n {
            for (j, c) in columns.iter().enumerate() {
                row[j] = c[r];
            }
            let eta = beta[0] + (1..p).map(|j| beta[j] * row[j - 1]).sum::<f64>();
            let mu = (1.0 / (1.0 + (-eta).exp())).clamp(1e-12, 1.0 - 1e-12);
            w[r] = mu * (1.0 - mu);
            z[r] = eta + (y[r] - mu) / w[r];
        }
        let chol = factor(gram(columns, n, Some(&w)))?;
        let next = chol.solve(&cross(columns, &z, Some(&w)));
        if next.iter().any(|b| !b.is_finite() || b.abs() > 1e6) {
            return Err(Error::NonConvergence("logistic coefficients diverge (separable data)".into()));
        }
        let step = (&next - &beta).amax();
        beta = next;
        if step < 1e-10 * (1.0 + beta.amax()) {
            return Ok(LogisticFit { coefficients: beta.iter().copied().collect(), iterations: it });
        }
    }
    Err(Error::NonConvergence(format!("IRLS did not converge in {IRLS_MAX_ITER} iterations")))
}
