//! Built-in model registry.
//!
//! Three models ship with the crate:
//!
//! - `robot`: a planar platform with a steerable wheel assembly, rolling
//!   without sliding. User-facing coordinates are (x, y, theta, psi);
//!   internally the chart is reordered base-first to (theta, psi, x, y) so
//!   the connection picture applies directly. Mass matrix
//!   diag(J, 3 J_w, m, m), no potential, constraints
//!   sin(theta) dx - cos(theta) dy and cos(theta) dx + sin(theta) dy - R dpsi.
//! - `synthetic-flat`: 2D base, 1D fiber, constant connection coefficients
//!   (zero curvature) and a quadratic base potential.
//! - `synthetic-curved`: 2D base, 1D fiber, coefficient matrix
//!   [-kappa*b, 0] whose curvature feeds a nonzero gyroscopic force.
//!
//! Each descriptor carries the mechanical system, the constraint set, the
//! connection, named candidate 1-forms, named base fields for reduction
//! work, the display permutation between user-facing and internal
//! coordinate orders, a default verification grid, and a default initial
//! state on the constraint submanifold.

use std::collections::BTreeMap;

use nalgebra::{dmatrix, dvector, DMatrix, DVector};

use crate::calculus::{Chart, OneFormField, ScalarField, VectorField};
use crate::caplygin::EhresmannConnection;
use crate::error::{Error, Result};
use crate::hamilton_jacobi::{constrained_exact_form, GridAxis, HJCandidate, SampleGrid};
use crate::mechanics::{CotangentState, MechanicalSystem};
use crate::nonholonomic::ConstraintSet;

/// A registered model with everything the runners need.
pub struct ModelDescriptor {
    name: String,
    params: Vec<(String, f64)>,
    system: MechanicalSystem,
    constraints: ConstraintSet,
    connection: Option<EhresmannConnection>,
    candidates: Vec<(String, HJCandidate)>,
    reduced_fields: Vec<(String, VectorField)>,
    display_names: Vec<String>,
    /// display position -> internal coordinate index.
    display_perm: Vec<usize>,
    default_grid: SampleGrid,
    default_state: CotangentState,
}

impl ModelDescriptor {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &[(String, f64)] {
        &self.params
    }

    pub fn system(&self) -> &MechanicalSystem {
        &self.system
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    pub fn connection(&self) -> Option<&EhresmannConnection> {
        self.connection.as_ref()
    }

    pub fn candidates(&self) -> &[(String, HJCandidate)] {
        &self.candidates
    }

    pub fn candidate(&self, name: &str) -> Result<&HJCandidate> {
        self.candidates
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c)
            .ok_or_else(|| {
                let known: Vec<&str> = self.candidates.iter().map(|(n, _)| n.as_str()).collect();
                Error::Config(format!(
                    "model {} has no candidate {name:?} (available: {})",
                    self.name,
                    known.join(", ")
                ))
            })
    }

    pub fn reduced_fields(&self) -> &[(String, VectorField)] {
        &self.reduced_fields
    }

    /// User-facing coordinate names, in display order.
    pub fn display_names(&self) -> &[String] {
        &self.display_names
    }

    /// Reorders an internal-order vector into display order.
    pub fn to_display(&self, internal: &[f64]) -> Vec<f64> {
        self.display_perm.iter().map(|&i| internal[i]).collect()
    }

    /// Reorders a display-order vector into internal order.
    pub fn from_display(&self, display: &[f64]) -> Result<Vec<f64>> {
        if display.len() != self.display_perm.len() {
            return Err(Error::Config(format!(
                "expected {} coordinates, got {}",
                self.display_perm.len(),
                display.len()
            )));
        }
        let mut out = vec![0.0; display.len()];
        for (d, &i) in self.display_perm.iter().enumerate() {
            out[i] = display[d];
        }
        Ok(out)
    }

    /// Builds an internal-order grid from display-order axes.
    pub fn grid_from_display(&self, axes: &[GridAxis]) -> Result<SampleGrid> {
        if axes.len() != self.display_perm.len() {
            return Err(Error::Config(format!(
                "expected {} grid axes, got {}",
                self.display_perm.len(),
                axes.len()
            )));
        }
        let mut internal = vec![GridAxis::new(0.0, 0.0, 1); axes.len()];
        for (d, &i) in self.display_perm.iter().enumerate() {
            internal[i] = axes[d].clone();
        }
        SampleGrid::new(internal)
    }

    pub fn default_grid(&self) -> &SampleGrid {
        &self.default_grid
    }

    /// Default initial state (internal order), on the constraint submanifold.
    pub fn default_state(&self) -> &CotangentState {
        &self.default_state
    }

    /// Initial phase point on the image of a named candidate: (q0, gamma(q0)).
    pub fn state_from_candidate(&self, name: &str, q_internal: &[f64]) -> Result<CotangentState> {
        let gamma = self.candidate(name)?.one_form(&self.system);
        let p = gamma.value(q_internal);
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericalFailure(format!(
                "candidate {name} is not finite at {q_internal:?}"
            )));
        }
        Ok(CotangentState::new(DVector::from_row_slice(q_internal), p))
    }
}

/// Names of the registered models.
pub fn model_names() -> Vec<&'static str> {
    vec!["robot", "synthetic-flat", "synthetic-curved"]
}

/// Builds a registered model, applying parameter overrides. Unknown model
/// names, unknown parameter names, and out-of-range values are config errors.
pub fn build_model(name: &str, overrides: &BTreeMap<String, f64>) -> Result<ModelDescriptor> {
    match name {
        "robot" => build_robot(overrides),
        "synthetic-flat" => build_flat(overrides),
        "synthetic-curved" => build_curved(overrides),
        other => Err(Error::Config(format!(
            "unknown model {other:?} (available: {})",
            model_names().join(", ")
        ))),
    }
}

fn resolve_params(
    model: &str,
    defaults: &[(&str, f64)],
    overrides: &BTreeMap<String, f64>,
) -> Result<Vec<(String, f64)>> {
    for key in overrides.keys() {
        if !defaults.iter().any(|(n, _)| n == key) {
            let known: Vec<&str> = defaults.iter().map(|(n, _)| *n).collect();
            return Err(Error::Config(format!(
                "model {model} has no parameter {key:?} (available: {})",
                known.join(", ")
            )));
        }
    }
    Ok(defaults
        .iter()
        .map(|(n, d)| {
            let v = overrides.get(*n).copied().unwrap_or(*d);
            (n.to_string(), v)
        })
        .collect())
}

fn param(params: &[(String, f64)], name: &str) -> f64 {
    params
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, v)| *v)
        .expect("parameter resolved at build time")
}

fn require_positive(model: &str, params: &[(String, f64)], names: &[&str]) -> Result<()> {
    for n in names {
        let v = param(params, n);
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::Config(format!(
                "model {model} needs parameter {n} > 0, got {v}"
            )));
        }
    }
    Ok(())
}

fn require_finite(model: &str, params: &[(String, f64)]) -> Result<()> {
    for (n, v) in params {
        if !v.is_finite() {
            return Err(Error::Config(format!(
                "model {model} parameter {n} must be finite"
            )));
        }
    }
    Ok(())
}

fn build_robot(overrides: &BTreeMap<String, f64>) -> Result<ModelDescriptor> {
    let params = resolve_params(
        "robot",
        &[("m", 1.0), ("J", 1.0), ("J_w", 1.0), ("R", 1.0)],
        overrides,
    )?;
    require_positive("robot", &params, &["m", "J", "J_w", "R"])?;
    let m = param(&params, "m");
    let j = param(&params, "J");
    let jw = param(&params, "J_w");
    let r = param(&params, "R");

    // Internal chart is base-first (theta, psi, x, y); the display order
    // (x, y, theta, psi) is restored through the permutation below.
    let chart = Chart::with_periodic(
        vec!["theta", "psi", "x", "y"],
        vec![true, true, false, false],
    )?;
    let system = MechanicalSystem::new(
        chart,
        move |_| DMatrix::from_diagonal(&dvector![j, 3.0 * jw, m, m]),
        ScalarField::zero(),
    );
    let constraints = ConstraintSet::new(2, move |q: &[f64]| {
        let th = q[0];
        dmatrix![
            0.0, 0.0, th.sin(), -th.cos();
            0.0, -r, th.cos(), th.sin()
        ]
    });
    let connection = EhresmannConnection::new(2, 2, move |q: &[f64]| {
        dmatrix![
            0.0, -r * q[0].cos();
            0.0, -r * q[0].sin()
        ]
    });

    let gamma1 = HJCandidate::Form(OneFormField::constant(dvector![j, 0.0, 0.0, 0.0]));
    let gamma2 = HJCandidate::Form(OneFormField::new(move |q: &[f64]| {
        dvector![0.0, 3.0 * jw, m * r * q[0].cos(), m * r * q[0].sin()]
    }));
    let gamma3 = HJCandidate::Form(OneFormField::new(move |q: &[f64]| {
        dvector![j, 3.0 * jw, m * r * q[0].cos(), m * r * q[0].sin()]
    }));
    let gamma2_perturbed = HJCandidate::Form(OneFormField::new(move |q: &[f64]| {
        dvector![0.0, 3.0 * jw, 2.0 * m * r * q[0].cos(), m * r * q[0].sin()]
    }));
    let gamma3_perturbed = HJCandidate::Form(OneFormField::new(move |q: &[f64]| {
        dvector![j, 3.0 * jw, 2.0 * m * r * q[0].cos(), m * r * q[0].sin()]
    }));
    let exact = HJCandidate::Form(OneFormField::constant(dvector![0.3, 0.7, 0.2, 0.4]));
    let ansatz_x =
        constrained_exact_form(&system, &constraints, &ScalarField::new(|q: &[f64]| q[2]));

    let default_grid = SampleGrid::new(vec![
        GridAxis::new(0.0, 2.0 * std::f64::consts::PI, 5),
        GridAxis::new(-1.0, 1.0, 5),
        GridAxis::new(-1.0, 1.0, 5),
        GridAxis::new(-1.0, 1.0, 5),
    ])?;
    let default_state =
        CotangentState::from_slices(&[0.0, 0.0, 0.0, 0.0], &[j, 3.0 * jw, m * r, 0.0]);

    Ok(ModelDescriptor {
        name: "robot".into(),
        params,
        system,
        constraints,
        connection: Some(connection),
        candidates: vec![
            ("gamma1".into(), gamma1),
            ("gamma2".into(), gamma2),
            ("gamma3".into(), gamma3),
            ("gamma2_perturbed".into(), gamma2_perturbed),
            ("gamma3_perturbed".into(), gamma3_perturbed),
            ("exact".into(), exact),
            ("ansatz_x".into(), ansatz_x),
        ],
        reduced_fields: vec![
            ("Y1".into(), VectorField::constant(dvector![1.0, 0.0])),
            ("Y2".into(), VectorField::constant(dvector![0.0, 1.0])),
            ("Y3".into(), VectorField::constant(dvector![1.0, 1.0])),
        ],
        display_names: vec!["x".into(), "y".into(), "theta".into(), "psi".into()],
        display_perm: vec![2, 3, 0, 1],
        default_grid,
        default_state,
    })
}

fn build_flat(overrides: &BTreeMap<String, f64>) -> Result<ModelDescriptor> {
    let params = resolve_params(
        "synthetic-flat",
        &[("g1", 0.5), ("g2", -0.3), ("k", 1.0)],
        overrides,
    )?;
    require_finite("synthetic-flat", &params)?;
    require_positive("synthetic-flat", &params, &["k"])?;
    let g1 = param(&params, "g1");
    let g2 = param(&params, "g2");
    let k = param(&params, "k");

    let chart = Chart::new(vec!["a", "b", "z"])?;
    let system = MechanicalSystem::new(
        chart,
        |_| DMatrix::identity(3, 3),
        ScalarField::with_gradient(
            move |q| 0.5 * k * (q[0] * q[0] + q[1] * q[1]),
            move |q| dvector![k * q[0], k * q[1], 0.0],
        ),
    );
    let connection = EhresmannConnection::new(2, 1, move |_: &[f64]| dmatrix![g1, g2]);
    let constraints = connection.constraint_set();

    let zero = HJCandidate::Form(OneFormField::constant(DVector::zeros(3)));

    let default_grid = SampleGrid::cube(-1.0, 1.0, 5, 3)?;
    let v0 = connection.horizontal_lift(&[0.3, -0.2, 0.0], &dvector![0.7, 0.4])?;
    let default_state = CotangentState::new(dvector![0.3, -0.2, 0.0], v0);

    Ok(ModelDescriptor {
        name: "synthetic-flat".into(),
        params,
        system,
        constraints,
        connection: Some(connection),
        candidates: vec![("zero".into(), zero)],
        reduced_fields: vec![
            ("Y1".into(), VectorField::constant(dvector![1.0, 0.0])),
            ("Y2".into(), VectorField::constant(dvector![0.0, 1.0])),
        ],
        display_names: vec!["a".into(), "b".into(), "z".into()],
        display_perm: vec![0, 1, 2],
        default_grid,
        default_state,
    })
}

fn build_curved(overrides: &BTreeMap<String, f64>) -> Result<ModelDescriptor> {
    let params = resolve_params("synthetic-curved", &[("kappa", 0.8)], overrides)?;
    require_finite("synthetic-curved", &params)?;
    let kappa = param(&params, "kappa");

    let chart = Chart::new(vec!["a", "b", "z"])?;
    let system = MechanicalSystem::new(chart, |_| DMatrix::identity(3, 3), ScalarField::zero());
    let connection = EhresmannConnection::new(2, 1, move |q: &[f64]| dmatrix![-kappa * q[1], 0.0]);
    let constraints = connection.constraint_set();

    let zero = HJCandidate::Form(OneFormField::constant(DVector::zeros(3)));

    let default_grid = SampleGrid::cube(-1.0, 1.0, 5, 3)?;
    let v0 = connection.horizontal_lift(&[0.2, -0.3, 0.1], &dvector![0.9, 0.4])?;
    let default_state = CotangentState::new(dvector![0.2, -0.3, 0.1], v0);

    Ok(ModelDescriptor {
        name: "synthetic-curved".into(),
        params,
        system,
        constraints,
        connection: Some(connection),
        candidates: vec![("zero".into(), zero)],
        reduced_fields: vec![
            ("Y1".into(), VectorField::constant(dvector![1.0, 0.0])),
            ("Y2".into(), VectorField::constant(dvector![0.0, 1.0])),
        ],
        display_names: vec!["a".into(), "b".into(), "z".into()],
        display_perm: vec![0, 1, 2],
        default_grid,
        default_state,
    })
}
