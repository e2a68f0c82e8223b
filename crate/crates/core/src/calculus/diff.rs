use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::fields::{OneFormField, ScalarField, VectorField};

/// Default relative step for central differences. Per-coordinate steps are
/// scaled as `h * max(1, |q_A|)`, which is exact on quadratics and keeps the
/// rounding/truncation balance near 1e-10 for unit-scale data.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

fn check_step(h: f64) -> Result<()> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Config(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    Ok(())
}

fn check_point(q: &[f64]) -> Result<()> {
    if q.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalFailure(
            "non-finite evaluation point".into(),
        ));
    }
    Ok(())
}

fn step_for(h: f64, q_a: f64) -> f64 {
    h * q_a.abs().max(1.0)
}

/// Central-difference gradient of a plain closure.
pub fn fd_gradient_fn(f: impl Fn(&[f64]) -> f64, q: &[f64], h: f64) -> Result<DVector<f64>> {
    check_step(h)?;
    check_point(q)?;
    let n = q.len();
    let mut grad = DVector::zeros(n);
    let mut work = q.to_vec();
    for a in 0..n {
        let ha = step_for(h, q[a]);
        work[a] = q[a] + ha;
        let fp = f(&work);
        work[a] = q[a] - ha;
        let fm = f(&work);
        work[a] = q[a];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "non-finite sample while differencing coordinate {a}"
            )));
        }
        grad[a] = (fp - fm) / (2.0 * ha);
    }
    Ok(grad)
}

/// Gradient of a scalar field: analytic callback when registered, central
/// differences otherwise.
pub fn fd_gradient(f: &ScalarField, q: &[f64], h: f64) -> Result<DVector<f64>> {
    check_point(q)?;
    if let Some(g) = f.analytic_gradient(q) {
        if g.len() != q.len() {
            return Err(Error::Config(format!(
                "analytic gradient has {} components at a {}-dimensional point",
                g.len(),
                q.len()
            )));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericalFailure(
                "non-finite analytic gradient".into(),
            ));
        }
        return Ok(g);
    }
    fd_gradient_fn(|x| f.value(x), q, h)
}

/// Central-difference Jacobian of a component map; entry (r, c) = d f_r / d q_c.
pub fn fd_jacobian_fn(
    f: impl Fn(&[f64]) -> DVector<f64>,
    q: &[f64],
    h: f64,
) -> Result<DMatrix<f64>> {
    check_step(h)?;
    check_point(q)?;
    let n = q.len();
    let mut work = q.to_vec();
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(n);
    for a in 0..n {
        let ha = step_for(h, q[a]);
        work[a] = q[a] + ha;
        let fp = f(&work);
        work[a] = q[a] - ha;
        let fm = f(&work);
        work[a] = q[a];
        if fp.len() != fm.len() {
            return Err(Error::NumericalFailure(
                "component count changed between samples".into(),
            ));
        }
        let col = (fp - fm) / (2.0 * ha);
        if col.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericalFailure(format!(
                "non-finite sample while differencing coordinate {a}"
            )));
        }
        cols.push(col);
    }
    let rows = cols.first().map_or(0, |c| c.len());
    Ok(DMatrix::from_fn(rows, n, |r, c| cols[c][r]))
}

/// Derivative of `f` along the vector `x` at `q`: grad(f) . x.
pub fn directional_derivative(
    f: impl Fn(&[f64]) -> f64,
    q: &[f64],
    x: &DVector<f64>,
    h: f64,
) -> Result<f64> {
    let grad = fd_gradient_fn(f, q, h)?;
    Ok(grad.dot(x))
}

/// Lie bracket [X, Y]^A = X^B d_B Y^A - Y^B d_B X^A, by central differences of
/// the component Jacobians.
pub fn lie_bracket(x: &VectorField, y: &VectorField, q: &[f64], h: f64) -> Result<DVector<f64>> {
    let xq = x.value(q);
    let yq = y.value(q);
    if xq.len() != q.len() || yq.len() != q.len() {
        return Err(Error::Config("vector field dimension mismatch".into()));
    }
    let jx = fd_jacobian_fn(|p| x.value(p), q, h)?;
    let jy = fd_jacobian_fn(|p| y.value(p), q, h)?;
    Ok(&jy * &xq - &jx * &yq)
}

/// Exterior derivative of a 1-form evaluated on two vector fields:
/// dγ(X, Y) = X(γ(Y)) - Y(γ(X)) - γ([X, Y]), with the directional derivatives
/// taken by central differences.
pub fn d_oneform(
    gamma: &OneFormField,
    x: &VectorField,
    y: &VectorField,
    q: &[f64],
    h: f64,
) -> Result<f64> {
    let xq = x.value(q);
    let yq = y.value(q);
    let x_of_gy = directional_derivative(|p| gamma.pair(p, &y.value(p)), q, &xq, h)?;
    let y_of_gx = directional_derivative(|p| gamma.pair(p, &x.value(p)), q, &yq, h)?;
    let bracket = lie_bracket(x, y, q, h)?;
    let val = x_of_gy - y_of_gx - gamma.pair(q, &bracket);
    if !val.is_finite() {
        return Err(Error::NumericalFailure(
            "non-finite exterior derivative".into(),
        ));
    }
    Ok(val)
}

/// Component matrix of dγ at a point: entry (A, B) = d_A γ_B - d_B γ_A, so
/// that dγ(X, Y) = X^T (this) Y. dγ is tensorial, so contracting this matrix
/// with vector *values* matches [`d_oneform`] on the corresponding fields.
pub fn oneform_exterior_matrix(gamma: &OneFormField, q: &[f64], h: f64) -> Result<DMatrix<f64>> {
    // J(r, c) = d gamma_r / d q_c; want (A, B) -> d_A gamma_B = J(B, A).
    let j = fd_jacobian_fn(|p| gamma.value(p), q, h)?;
    if j.nrows() != q.len() {
        return Err(Error::Config("one-form dimension mismatch".into()));
    }
    Ok(j.transpose() - j)
}
