//! Reduction of constrained systems whose constraints are the horizontal
//! spaces of a connection on a fibration.
//!
//! Coordinates are split base-first: q = (q^a, q^i) with a = 1..B the base
//! and i = 1..F the fiber. The connection is a fiber-by-base coefficient
//! matrix Gamma(q); admissible (horizontal) velocities satisfy
//! qdot^i = -Gamma^i_a qdot^a, so the induced constraint matrix is
//! [Gamma | I].
//!
//! When the Lagrangian is invariant along fibers the system drops to the
//! base: reduced metric M* = iota^T M iota with iota = [I; -Gamma], reduced
//! potential V* = V at a reference fiber point, plus a velocity-dependent
//! gyroscopic force assembled from the connection curvature,
//!
//!   alpha*_a(q, v) = sum_{i,b} p_i v^b R^i_{b a},
//!
//! with p_i the fiber components of the momentum of the horizontal lift of v
//! and R the curvature coefficients (see [`EhresmannConnection::curvature`]).
//! Trajectories of the reduced forced system match base projections of the
//! full constrained dynamics ([`equivalence_test`]), and candidate solutions
//! of the constrained stationarity conditions can be moved between the two
//! pictures ([`lift_hj_solution`], [`project_hj_solution`]).

use nalgebra::{DMatrix, DVector};

use crate::calculus::{fd_jacobian_fn, Chart, ScalarField, VectorField};
use crate::error::{Error, Result};
use crate::hamilton_jacobi::{
    check_forced, check_nonholonomic_lagrangian, HJCandidate, HJReport, SampleGrid,
};
use crate::mechanics::{MechanicalSystem, PhaseTrajectory, SemibasicForce, TangentState};
use crate::nonholonomic::{ConstraintSet, HorizontalFrame};

/// Connection on a trivial fibration with base-first coordinates.
#[derive(Clone)]
pub struct EhresmannConnection {
    base_dim: usize,
    fiber_dim: usize,
    christoffel: crate::calculus::MatrixFn,
}

impl EhresmannConnection {
    /// `christoffel` maps the full configuration to the F x B coefficient
    /// matrix Gamma(q).
    pub fn new(
        base_dim: usize,
        fiber_dim: usize,
        christoffel: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        EhresmannConnection {
            base_dim,
            fiber_dim,
            christoffel: std::sync::Arc::new(christoffel),
        }
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn fiber_dim(&self) -> usize {
        self.fiber_dim
    }

    pub fn total_dim(&self) -> usize {
        self.base_dim + self.fiber_dim
    }

    /// Gamma(q), validated to be F x B and finite.
    pub fn christoffel(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        if q.len() != self.total_dim() {
            return Err(Error::Config(format!(
                "point has {} coordinates, connection lives on {}",
                q.len(),
                self.total_dim()
            )));
        }
        let g = (self.christoffel)(q);
        if g.nrows() != self.fiber_dim || g.ncols() != self.base_dim {
            return Err(Error::Config(format!(
                "connection coefficients are {}x{}, expected {}x{}",
                g.nrows(),
                g.ncols(),
                self.fiber_dim,
                self.base_dim
            )));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericalFailure(
                "non-finite connection coefficients".into(),
            ));
        }
        Ok(g)
    }

    /// The induced constraint set with matrix [Gamma | I].
    pub fn constraint_set(&self) -> ConstraintSet {
        let conn = self.clone();
        let f = self.fiber_dim;
        ConstraintSet::new(f, move |q: &[f64]| match conn.christoffel(q) {
            Ok(g) => {
                let mut phi = DMatrix::zeros(conn.fiber_dim, conn.total_dim());
                phi.view_mut((0, 0), (conn.fiber_dim, conn.base_dim))
                    .copy_from(&g);
                phi.view_mut((0, conn.base_dim), (conn.fiber_dim, conn.fiber_dim))
                    .fill_with_identity();
                phi
            }
            Err(_) => DMatrix::from_element(conn.fiber_dim, q.len(), f64::NAN),
        })
    }

    /// iota(q) = [I; -Gamma(q)], the horizontal-lift matrix. Its columns span
    /// the admissible velocities exactly: [Gamma | I] iota = 0.
    pub fn lift_matrix(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        let g = self.christoffel(q)?;
        let mut iota = DMatrix::zeros(self.total_dim(), self.base_dim);
        iota.view_mut((0, 0), (self.base_dim, self.base_dim))
            .fill_with_identity();
        iota.view_mut((self.base_dim, 0), (self.fiber_dim, self.base_dim))
            .copy_from(&(-g));
        Ok(iota)
    }

    /// The frame of lift-matrix columns.
    pub fn horizontal_frame(&self) -> HorizontalFrame {
        let conn = self.clone();
        HorizontalFrame::new(move |q: &[f64]| {
            conn.lift_matrix(q)
                .unwrap_or_else(|_| DMatrix::from_element(q.len(), conn.base_dim, f64::NAN))
        })
    }

    /// Horizontal lift of a base velocity: (v, -Gamma v).
    pub fn horizontal_lift(&self, q: &[f64], vbase: &DVector<f64>) -> Result<DVector<f64>> {
        if vbase.len() != self.base_dim {
            return Err(Error::Config("base velocity dimension mismatch".into()));
        }
        Ok(self.lift_matrix(q)? * vbase)
    }

    /// Base components of a full velocity (tangent projection of the
    /// fibration).
    pub fn project_velocity(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.total_dim() {
            return Err(Error::Config("velocity dimension mismatch".into()));
        }
        Ok(v.rows(0, self.base_dim).into_owned())
    }

    /// Curvature coefficients at q: one antisymmetric B x B matrix per fiber
    /// index, computed by central differences of Gamma,
    ///
    ///   R^i_{ab} = dGamma^i_b/dq^a - dGamma^i_a/dq^b
    ///            + Gamma^j_b dGamma^i_a/dq^j - Gamma^j_a dGamma^i_b/dq^j,
    ///
    /// where j-derivatives run over fiber coordinates. For fiber-independent
    /// coefficients the quadratic terms vanish.
    pub fn curvature(&self, q: &[f64], fd_step: f64) -> Result<Vec<DMatrix<f64>>> {
        let b = self.base_dim;
        let f = self.fiber_dim;
        let gamma = self.christoffel(q)?;
        // Flattened entries: index i * B + a holds Gamma^i_a.
        let jac = fd_jacobian_fn(
            |qq| match self.christoffel(qq) {
                Ok(g) => DVector::from_fn(f * b, |idx, _| g[(idx / b, idx % b)]),
                Err(_) => DVector::from_element(f * b, f64::NAN),
            },
            q,
            fd_step,
        )?;
        let d = |i: usize, a: usize, coord: usize| jac[(i * b + a, coord)];
        let mut out = Vec::with_capacity(f);
        for i in 0..f {
            let mut r = DMatrix::zeros(b, b);
            for a in 0..b {
                for bb in 0..b {
                    let mut val = d(i, bb, a) - d(i, a, bb);
                    for j in 0..f {
                        val += gamma[(j, bb)] * d(i, a, b + j) - gamma[(j, a)] * d(i, bb, b + j);
                    }
                    r[(a, bb)] = val;
                }
            }
            out.push(r);
        }
        Ok(out)
    }
}

/// Base system produced by [`reduce`]: mechanical system on the base chart
/// plus the gyroscopic force.
#[derive(Clone)]
pub struct ReducedSystem {
    system: MechanicalSystem,
    force: SemibasicForce,
    fiber_ref: DVector<f64>,
}

impl ReducedSystem {
    pub fn system(&self) -> &MechanicalSystem {
        &self.system
    }

    pub fn force(&self) -> &SemibasicForce {
        &self.force
    }

    pub fn fiber_ref(&self) -> &DVector<f64> {
        &self.fiber_ref
    }
}

fn full_point(base: &[f64], fiber: &DVector<f64>) -> Vec<f64> {
    let mut q = Vec::with_capacity(base.len() + fiber.len());
    q.extend_from_slice(base);
    q.extend(fiber.iter().cloned());
    q
}

/// Checks that the Lagrangian restricted to horizontal velocities does not
/// depend on the fiber position, sampling deterministic base points and
/// velocities at the reference fiber and at an offset fiber.
fn check_fiber_invariance(
    sys: &MechanicalSystem,
    conn: &EhresmannConnection,
    fiber_ref: &DVector<f64>,
) -> Result<()> {
    let b = conn.base_dim();
    let base_samples: [f64; 3] = [0.0, 0.4, -0.9];
    let vel_samples: [f64; 2] = [0.8, -0.5];
    let offset = DVector::from_element(conn.fiber_dim(), 0.7);
    for (si, shift) in base_samples.iter().enumerate() {
        for (vi, vscale) in vel_samples.iter().enumerate() {
            let base: Vec<f64> = (0..b)
                .map(|a| shift + 0.3 * (a as f64 + 1.0) * (si as f64 - 1.0))
                .collect();
            let vbase = DVector::from_fn(b, |a, _| vscale * (1.0 + 0.2 * (a + vi) as f64));
            let mut values = [0.0f64; 2];
            for (k, fiber) in [fiber_ref.clone(), fiber_ref + &offset].iter().enumerate() {
                let q = full_point(&base, fiber);
                let v = conn.horizontal_lift(&q, &vbase)?;
                values[k] = sys.lagrangian(&TangentState::new(DVector::from_row_slice(&q), v))?;
            }
            let scale = values[0].abs().max(1.0);
            if (values[0] - values[1]).abs() > 1e-8 * scale {
                return Err(Error::InvarianceViolation(format!(
                    "Lagrangian changes along the fiber at base {base:?}: {} vs {}",
                    values[0], values[1]
                )));
            }
        }
    }
    Ok(())
}

/// Builds the reduced system on the base: metric iota^T M iota, potential at
/// the reference fiber, and the curvature-induced gyroscopic force. Fails
/// with [`Error::InvarianceViolation`] when the Lagrangian is not
/// fiber-invariant on horizontal velocities.
pub fn reduce(sys: &MechanicalSystem, conn: &EhresmannConnection) -> Result<ReducedSystem> {
    if sys.dim() != conn.total_dim() {
        return Err(Error::Config(format!(
            "system has {} coordinates, connection expects {}",
            sys.dim(),
            conn.total_dim()
        )));
    }
    let b = conn.base_dim();
    let fiber_ref = DVector::zeros(conn.fiber_dim());
    check_fiber_invariance(sys, conn, &fiber_ref)?;

    let names: Vec<String> = sys.chart().names()[..b].to_vec();
    let periodic: Vec<bool> = sys.chart().periodic()[..b].to_vec();
    let chart = Chart::with_periodic(names, periodic)?;

    let metric = {
        let sys = sys.clone();
        let conn = conn.clone();
        let fiber_ref = fiber_ref.clone();
        move |base: &[f64]| {
            let q = full_point(base, &fiber_ref);
            match (conn.lift_matrix(&q), sys.metric(&q)) {
                (Ok(iota), Ok(m)) => iota.transpose() * m * iota,
                _ => DMatrix::from_element(base.len(), base.len(), f64::NAN),
            }
        }
    };

    let potential = {
        let val = {
            let sys = sys.clone();
            let fiber_ref = fiber_ref.clone();
            move |base: &[f64]| sys.potential().value(&full_point(base, &fiber_ref))
        };
        if sys.potential().has_gradient() {
            let sys = sys.clone();
            let fiber_ref = fiber_ref.clone();
            ScalarField::with_gradient(val, move |base: &[f64]| {
                let q = full_point(base, &fiber_ref);
                match sys.potential().analytic_gradient(&q) {
                    Some(g) => g.rows(0, base.len()).into_owned(),
                    None => DVector::from_element(base.len(), f64::NAN),
                }
            })
        } else {
            ScalarField::new(val)
        }
    };

    let system = MechanicalSystem::new(chart, metric, potential).with_fd_step(sys.fd_step());

    let force = {
        let sys = sys.clone();
        let conn = conn.clone();
        let fiber_ref = fiber_ref.clone();
        let h = sys.fd_step();
        SemibasicForce::from_tangent(move |base: &[f64], vbase: &[f64]| {
            let fail = || DVector::from_element(base.len(), f64::NAN);
            let q = full_point(base, &fiber_ref);
            let vb = DVector::from_row_slice(vbase);
            let (iota, m, curls) =
                match (conn.lift_matrix(&q), sys.metric(&q), conn.curvature(&q, h)) {
                    (Ok(i), Ok(m), Ok(c)) => (i, m, c),
                    _ => return fail(),
                };
            let v_full = &iota * &vb;
            let p_full = m * v_full;
            let p_fiber = p_full.rows(conn.base_dim(), conn.fiber_dim());
            let mut alpha = DVector::zeros(conn.base_dim());
            for a in 0..conn.base_dim() {
                let mut acc = 0.0;
                for (i, r) in curls.iter().enumerate() {
                    for bb in 0..conn.base_dim() {
                        acc += p_fiber[i] * vb[bb] * r[(bb, a)];
                    }
                }
                alpha[a] = acc;
            }
            alpha
        })
    };

    Ok(ReducedSystem {
        system,
        force,
        fiber_ref,
    })
}

/// Integrates the reduced forced dynamics from a base tangent state.
pub fn reduced_dynamics(
    red: &ReducedSystem,
    s0: &TangentState,
    dt: f64,
    steps: usize,
) -> Result<PhaseTrajectory> {
    let p0 = red.system.legendre(s0)?;
    red.system.integrate(Some(&red.force), &p0, dt, steps)
}

/// Integrates the full constrained dynamics and the reduced dynamics from
/// the same horizontal start and returns the sup-norm deviation of base
/// positions and base velocities. The start must be horizontal.
pub fn equivalence_test(
    sys: &MechanicalSystem,
    conn: &EhresmannConnection,
    s0: &TangentState,
    dt: f64,
    steps: usize,
) -> Result<f64> {
    let cons = conn.constraint_set();
    let slack = cons.residuals_tangent(s0.q.as_slice(), &s0.v)?;
    let scale = 1.0 + s0.v.amax();
    if !slack.is_empty() && slack.amax() > 1e-8 * scale {
        return Err(Error::Config(format!(
            "start state is not horizontal (constraint value {:.3e})",
            slack.amax()
        )));
    }

    let red = reduce(sys, conn)?;
    let b = conn.base_dim();
    let base0 = TangentState::new(s0.q.rows(0, b).into_owned(), s0.v.rows(0, b).into_owned());
    let reduced = reduced_dynamics(&red, &base0, dt, steps)?;

    let full0 = sys.legendre(s0)?;
    let full = cons.integrate(sys, &full0, dt, steps, false)?;

    let mut sup = 0.0f64;
    for (k, rs) in reduced.states.iter().enumerate() {
        let fs = &full.states[k];
        let q_dev = (&rs.q - fs.q.rows(0, b)).amax();
        let v_red = red.system.legendre_inv(rs)?;
        let v_full = sys.legendre_inv(fs)?;
        let v_dev = (&v_red.v - v_full.v.rows(0, b)).amax();
        sup = sup.max(q_dev).max(v_dev);
    }
    Ok(sup)
}

/// Horizontal lift of a base vector field: Y^H(q) = (Y(q_base), -Gamma Y).
pub fn lift_field(conn: &EhresmannConnection, y: &VectorField) -> VectorField {
    let conn = conn.clone();
    let y = y.clone();
    VectorField::new(move |q: &[f64]| {
        let vb = y.value(&q[..conn.base_dim()]);
        match conn.horizontal_lift(q, &vb) {
            Ok(v) => v,
            Err(_) => DVector::from_element(q.len(), f64::NAN),
        }
    })
}

/// Lifts a base field and runs the constrained tangent-side check on the
/// full system, using the connection's own horizontal frame.
pub fn lift_hj_solution(
    sys: &MechanicalSystem,
    conn: &EhresmannConnection,
    y: &VectorField,
    grid: &SampleGrid,
    tolerance: Option<f64>,
) -> Result<(VectorField, HJReport)> {
    let lifted = lift_field(conn, y);
    let cons = conn.constraint_set();
    let frame = conn.horizontal_frame();
    let report = check_nonholonomic_lagrangian(sys, &cons, &lifted, grid, Some(&frame), tolerance)?;
    Ok((lifted, report))
}

/// Projects a full vector field to the base and runs the forced stationarity
/// check on the reduced system over a base grid. The base components must
/// not depend on the fiber (checked by sampling fiber offsets); otherwise
/// the field does not descend and the call fails with
/// [`Error::NotProjectable`].
pub fn project_hj_solution(
    sys: &MechanicalSystem,
    conn: &EhresmannConnection,
    x: &VectorField,
    base_grid: &SampleGrid,
    tolerance: Option<f64>,
) -> Result<(VectorField, HJReport)> {
    if base_grid.dim() != conn.base_dim() {
        return Err(Error::Config(format!(
            "base grid has {} axes, base has {} coordinates",
            base_grid.dim(),
            conn.base_dim()
        )));
    }
    let red = reduce(sys, conn)?;
    let b = conn.base_dim();
    let fiber_ref = red.fiber_ref.clone();

    let offsets = [0.0, 0.7, -1.3];
    for base in base_grid.points() {
        let mut reference: Option<DVector<f64>> = None;
        for off in offsets {
            let fiber = DVector::from_element(conn.fiber_dim(), off) + &fiber_ref;
            let q = full_point(&base, &fiber);
            let v = x.value(&q);
            if v.len() != conn.total_dim() {
                return Err(Error::Config("field dimension mismatch".into()));
            }
            let vb = v.rows(0, b).into_owned();
            match &reference {
                None => reference = Some(vb),
                Some(r) => {
                    let scale = 1.0 + r.amax();
                    if (&vb - r).amax() > 1e-8 * scale {
                        return Err(Error::NotProjectable(format!(
                            "base components vary along the fiber at {base:?}"
                        )));
                    }
                }
            }
        }
    }

    let projected = {
        let x = x.clone();
        let fiber_ref = fiber_ref.clone();
        VectorField::new(move |base: &[f64]| {
            let q = full_point(base, &fiber_ref);
            x.value(&q).rows(0, base.len()).into_owned()
        })
    };
    let candidate = HJCandidate::Field(projected.clone());
    let report = check_forced(&red.system, &red.force, &candidate, base_grid, tolerance)?;
    Ok((projected, report))
}
