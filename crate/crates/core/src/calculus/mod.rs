//! Coordinate charts, smooth fields, finite-difference calculus, and the
//! fixed-step integrator.
//!
//! All geometry in this crate is chart-local: points are coordinate vectors,
//! vector fields and 1-forms are component functions of the coordinates, and
//! derivatives default to central finite differences unless an analytic
//! callback was registered. Angle-like coordinates are kept unwrapped; the
//! periodic flags on [`Chart`] are metadata for consumers, not something the
//! operators act on.

mod diff;
mod fields;
mod rk4;

pub use diff::{
    d_oneform, directional_derivative, fd_gradient, fd_gradient_fn, fd_jacobian_fn, lie_bracket,
    oneform_exterior_matrix, DEFAULT_FD_STEP,
};
pub use fields::{Chart, MatrixFn, OneFormField, ScalarField, ScalarFn, VecFn, VectorField};
pub use rk4::{rk4_integrate, Observer, Trajectory};
