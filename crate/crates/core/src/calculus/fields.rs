use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Scalar-valued evaluator on chart coordinates.
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Component-vector evaluator (used for both vector fields and 1-forms).
pub type VecFn = Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>;
/// Matrix-valued evaluator (mass matrices, constraint matrices, connections).
pub type MatrixFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// A named coordinate chart. Coordinate order fixes the component layout of
/// every field, state, and matrix evaluated against it.
#[derive(Debug, Clone)]
pub struct Chart {
    names: Vec<String>,
    periodic: Vec<bool>,
}

impl Chart {
    /// Builds a chart from coordinate names; all coordinates non-periodic.
    pub fn new<S: Into<String>>(names: Vec<S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let periodic = vec![false; names.len()];
        Self::with_periodic(names, periodic)
    }

    /// Builds a chart with an explicit periodicity mask. The mask is
    /// informational: coordinates are never wrapped.
    pub fn with_periodic<S: Into<String>>(names: Vec<S>, periodic: Vec<bool>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::Config("chart needs at least one coordinate".into()));
        }
        if periodic.len() != names.len() {
            return Err(Error::Config(
                "periodic mask length must match coordinate count".into(),
            ));
        }
        for (i, a) in names.iter().enumerate() {
            if a.is_empty() {
                return Err(Error::Config("coordinate names must be non-empty".into()));
            }
            for b in names.iter().skip(i + 1) {
                if a == b {
                    return Err(Error::Config(format!("duplicate coordinate name '{a}'")));
                }
            }
        }
        Ok(Chart { names, periodic })
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn periodic(&self) -> &[bool] {
        &self.periodic
    }
}

/// Scalar field with an optional analytic gradient callback.
#[derive(Clone)]
pub struct ScalarField {
    eval: ScalarFn,
    gradient: Option<VecFn>,
}

impl ScalarField {
    pub fn new(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField {
            eval: Arc::new(f),
            gradient: None,
        }
    }

    /// Attaches an analytic gradient; derivative operators will prefer it
    /// over finite differences.
    pub fn with_gradient(
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        g: impl Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        ScalarField {
            eval: Arc::new(f),
            gradient: Some(Arc::new(g)),
        }
    }

    pub fn zero() -> Self {
        ScalarField::with_gradient(|_| 0.0, |q| DVector::zeros(q.len()))
    }

    pub fn value(&self, q: &[f64]) -> f64 {
        (self.eval)(q)
    }

    pub fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub(crate) fn analytic_gradient(&self, q: &[f64]) -> Option<DVector<f64>> {
        self.gradient.as_ref().map(|g| g(q))
    }

    /// Copy of the field with the analytic gradient stripped (forces the
    /// finite-difference path downstream).
    pub fn without_gradient(&self) -> Self {
        ScalarField {
            eval: self.eval.clone(),
            gradient: None,
        }
    }
}

/// Vector field given by its components in a chart.
#[derive(Clone)]
pub struct VectorField {
    eval: VecFn,
}

impl VectorField {
    pub fn new(f: impl Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static) -> Self {
        VectorField { eval: Arc::new(f) }
    }

    pub fn constant(components: DVector<f64>) -> Self {
        VectorField::new(move |_| components.clone())
    }

    /// The coordinate field along axis `index` in an `dim`-dimensional chart.
    pub fn coordinate_axis(index: usize, dim: usize) -> Self {
        VectorField::new(move |_| {
            let mut v = DVector::zeros(dim);
            v[index] = 1.0;
            v
        })
    }

    pub fn value(&self, q: &[f64]) -> DVector<f64> {
        (self.eval)(q)
    }
}

/// 1-form given by its components in a chart.
#[derive(Clone)]
pub struct OneFormField {
    eval: VecFn,
}

impl OneFormField {
    pub fn new(f: impl Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static) -> Self {
        OneFormField { eval: Arc::new(f) }
    }

    pub fn constant(components: DVector<f64>) -> Self {
        OneFormField::new(move |_| components.clone())
    }

    /// The exact form dS of a scalar field, using the analytic gradient if one
    /// was registered and central differences otherwise.
    pub fn exact(s: ScalarField, fd_step: f64) -> Self {
        OneFormField::new(move |q| {
            if let Some(g) = s.analytic_gradient(q) {
                g
            } else {
                super::diff::fd_gradient_fn(|x| s.value(x), q, fd_step)
                    .expect("finite-difference gradient of scalar field")
            }
        })
    }

    pub fn value(&self, q: &[f64]) -> DVector<f64> {
        (self.eval)(q)
    }

    /// Pairing with a vector: γ(X)(q).
    pub fn pair(&self, q: &[f64], x: &DVector<f64>) -> f64 {
        self.value(q).dot(x)
    }
}
