//! Linear velocity constraints and the constrained dynamics.
//!
//! A constraint set is a matrix map q -> Phi(q) (one row per constraint) that
//! must annihilate admissible velocities: Phi(q) qdot = 0. On the momentum
//! side the constraint functions are Psi(q, p) = Phi(q) M(q)^{-1} p. The
//! reaction force is -Phi^T lambda with the multipliers chosen so that the
//! closed-loop flow preserves Psi = 0 to first order:
//!
//!   C(q) lambda = X_H(Psi),   C = Phi M^{-1} Phi^T,
//!
//! where X_H(Psi) is the derivative of Psi along the *free* Hamiltonian field,
//! assembled by the chain rule from central-difference partials of Psi.
//! Solving against C instead of appending algebraic constraint equations keeps
//! the integrator an ordinary explicit RK4 on (q, p).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::calculus::{fd_jacobian_fn, rk4_integrate, MatrixFn};
use crate::error::{Error, Result};
use crate::mechanics::{split_state, stack_state, CotangentState, MechanicalSystem};

/// Rank floor for singular values: below this a matrix row/column counts as
/// dependent.
pub const RANK_FLOOR: f64 = 1e-10;
/// Condition-number ceiling for the compatibility matrix.
pub const CONDITION_CEILING: f64 = 1e12;

/// A set of linear velocity constraints Phi(q) qdot = 0.
#[derive(Clone)]
pub struct ConstraintSet {
    count: usize,
    phi: MatrixFn,
}

impl ConstraintSet {
    pub fn new(count: usize, phi: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        ConstraintSet {
            count,
            phi: Arc::new(phi),
        }
    }

    /// The empty constraint set (free dynamics).
    pub fn empty() -> Self {
        ConstraintSet {
            count: 0,
            phi: Arc::new(|q: &[f64]| DMatrix::zeros(0, q.len())),
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Constraint matrix at q, validated: m x dim(q), finite, and of full row
    /// rank (smallest singular value above [`RANK_FLOOR`], scaled).
    pub fn phi(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        let m = (self.phi)(q);
        if m.nrows() != self.count || m.ncols() != q.len() {
            return Err(Error::Config(format!(
                "constraint matrix is {}x{}, expected {}x{}",
                m.nrows(),
                m.ncols(),
                self.count,
                q.len()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericalFailure(
                "non-finite constraint matrix".into(),
            ));
        }
        if self.count > 0 {
            let sv = m.clone().svd(false, false).singular_values;
            let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
            let smax = sv.iter().cloned().fold(0.0, f64::max);
            if smin <= RANK_FLOOR * smax.max(1.0) {
                return Err(Error::SingularCompatibility(format!(
                    "constraint matrix rank-deficient (smallest singular value {smin:.3e})"
                )));
            }
        }
        Ok(m)
    }

    /// Momentum-side constraint values Psi(q, p) = Phi(q) M(q)^{-1} p.
    pub fn residuals(&self, sys: &MechanicalSystem, s: &CotangentState) -> Result<DVector<f64>> {
        let v = sys.metric_cholesky(s.q.as_slice())?.solve(&s.p);
        Ok(self.phi(s.q.as_slice())? * v)
    }

    /// Velocity-side constraint values Phi(q) v.
    pub fn residuals_tangent(&self, q: &[f64], v: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.phi(q)? * v)
    }

    /// Compatibility matrix C = Phi M^{-1} Phi^T. Errors when its condition
    /// number exceeds [`CONDITION_CEILING`].
    pub fn compatibility(&self, sys: &MechanicalSystem, q: &[f64]) -> Result<DMatrix<f64>> {
        let phi = self.phi(q)?;
        if self.count == 0 {
            return Ok(DMatrix::zeros(0, 0));
        }
        let minv_phit = sys.metric_cholesky(q)?.solve(&phi.transpose());
        let c = &phi * minv_phit;
        let sv = c.clone().svd(false, false).singular_values;
        let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        if smin <= 0.0 || smax / smin > CONDITION_CEILING {
            return Err(Error::SingularCompatibility(format!(
                "condition number {:.3e} exceeds {CONDITION_CEILING:.1e}",
                if smin > 0.0 {
                    smax / smin
                } else {
                    f64::INFINITY
                }
            )));
        }
        Ok(c)
    }

    /// Reaction multipliers at a state: solves C lambda = X_H(Psi), with
    /// X_H(Psi) assembled by the chain rule dPsi/dq . qdot + dPsi/dp . pdot
    /// along the free field, both partial blocks by central differences.
    pub fn multipliers(&self, sys: &MechanicalSystem, s: &CotangentState) -> Result<DVector<f64>> {
        if self.count == 0 {
            return Ok(DVector::zeros(0));
        }
        let q = s.q.as_slice();
        let (qdot, pdot_free) = sys.hamiltonian_field(None, s)?;
        let h = sys.fd_step();
        let psi_dq = fd_jacobian_fn(
            |qq| {
                let st = CotangentState::new(DVector::from_row_slice(qq), s.p.clone());
                self.residuals(sys, &st)
                    .unwrap_or_else(|_| DVector::from_element(self.count, f64::NAN))
            },
            q,
            h,
        )?;
        let psi_dp = fd_jacobian_fn(
            |pp| {
                let st = CotangentState::new(s.q.clone(), DVector::from_row_slice(pp));
                self.residuals(sys, &st)
                    .unwrap_or_else(|_| DVector::from_element(self.count, f64::NAN))
            },
            s.p.as_slice(),
            h,
        )?;
        let xh_psi = &psi_dq * &qdot + &psi_dp * &pdot_free;
        let c = self.compatibility(sys, q)?;
        nalgebra::Cholesky::new(c)
            .map(|ch| ch.solve(&xh_psi))
            .ok_or_else(|| {
                Error::SingularCompatibility("compatibility matrix not positive definite".into())
            })
    }

    /// Constrained Hamiltonian field: qdot = M^{-1} p,
    /// pdot = -dH/dq - Phi^T lambda. With no constraints this is exactly the
    /// free field.
    pub fn field(
        &self,
        sys: &MechanicalSystem,
        s: &CotangentState,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        if self.count == 0 {
            return sys.hamiltonian_field(None, s);
        }
        let (qdot, mut pdot) = sys.hamiltonian_field(None, s)?;
        let lambda = self.multipliers(sys, s)?;
        let phi = self.phi(s.q.as_slice())?;
        pdot -= phi.transpose() * lambda;
        Ok((qdot, pdot))
    }

    /// Momentum correction restoring Psi = 0 exactly (up to rounding):
    /// p <- p - Phi^T C^{-1} Psi. The correction lives in the span of the
    /// constraint covectors, so admissible momentum components are untouched.
    pub fn project_momentum(
        &self,
        sys: &MechanicalSystem,
        s: &CotangentState,
    ) -> Result<CotangentState> {
        if self.count == 0 {
            return Ok(s.clone());
        }
        let psi = self.residuals(sys, s)?;
        let c = self.compatibility(sys, s.q.as_slice())?;
        let mu = nalgebra::Cholesky::new(c)
            .map(|ch| ch.solve(&psi))
            .ok_or_else(|| {
                Error::SingularCompatibility("compatibility matrix not positive definite".into())
            })?;
        let phi = self.phi(s.q.as_slice())?;
        Ok(CotangentState::new(
            s.q.clone(),
            &s.p - phi.transpose() * mu,
        ))
    }

    /// Integrates the constrained dynamics with fixed-step RK4, recording
    /// energy, constraint residuals, and multipliers at every sample. With
    /// `project` set, momenta are corrected back onto Psi = 0 after each step.
    /// The initial residual is recorded (a clean start should sit below 1e-8);
    /// integration proceeds regardless so callers can surface a warning.
    pub fn integrate(
        &self,
        sys: &MechanicalSystem,
        s0: &CotangentState,
        dt: f64,
        steps: usize,
        project: bool,
    ) -> Result<ConstrainedTrajectory> {
        let n = sys.dim();
        if s0.q.len() != n || s0.p.len() != n {
            return Err(Error::Config("initial state dimension mismatch".into()));
        }
        let initial_residual = if self.count > 0 {
            self.residuals(sys, s0)?.amax()
        } else {
            0.0
        };

        let deriv = |x: &DVector<f64>| -> Result<DVector<f64>> {
            let s = split_state(x, n);
            let (qdot, pdot) = self.field(sys, &s)?;
            Ok(stack_state(&qdot, &pdot))
        };

        let mut times = Vec::with_capacity(steps + 1);
        let mut states = Vec::with_capacity(steps + 1);
        let mut current = s0.clone();
        times.push(0.0);
        states.push(current.clone());
        for k in 0..steps {
            let x = stack_state(&current.q, &current.p);
            let stepped = rk4_integrate(deriv, x, dt, 1, &[]).map_err(|e| match e {
                Error::Divergence { .. } => Error::Divergence { last_valid: k },
                other => other,
            })?;
            let mut next = split_state(stepped.final_state(), n);
            if project {
                next = self.project_momentum(sys, &next)?;
            }
            times.push((k + 1) as f64 * dt);
            states.push(next.clone());
            current = next;
        }

        let mut energies = Vec::with_capacity(states.len());
        let mut residuals = Vec::with_capacity(states.len());
        let mut multipliers = Vec::with_capacity(states.len());
        for s in &states {
            energies.push(sys.hamiltonian(s)?);
            residuals.push(self.residuals(sys, s)?);
            multipliers.push(self.multipliers(sys, s)?);
        }
        Ok(ConstrainedTrajectory {
            times,
            states,
            energies,
            residuals,
            multipliers,
            initial_residual,
        })
    }
}

/// Constrained phase-space trajectory with per-sample diagnostics.
#[derive(Debug, Clone)]
pub struct ConstrainedTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<CotangentState>,
    pub energies: Vec<f64>,
    /// Psi values per sample (length = constraint count).
    pub residuals: Vec<DVector<f64>>,
    /// Reaction multipliers per sample.
    pub multipliers: Vec<DVector<f64>>,
    /// max |Psi| at the initial state, before any correction.
    pub initial_residual: f64,
}

impl ConstrainedTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max_constraint_residual(&self) -> f64 {
        self.residuals.iter().map(|r| r.amax()).fold(0.0, f64::max)
    }

    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energies[0];
        self.energies
            .iter()
            .map(|e| (e - e0).abs())
            .fold(0.0, f64::max)
    }
}

/// A pointwise basis of the admissible-velocity subspace: columns Z_a(q) with
/// Phi(q) Z_a(q) = 0.
#[derive(Clone)]
pub struct HorizontalFrame {
    columns: MatrixFn,
}

impl HorizontalFrame {
    pub fn new(f: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        HorizontalFrame {
            columns: Arc::new(f),
        }
    }

    /// Frame generated pointwise from the constraint matrix null space by
    /// Gauss elimination with largest-pivot column selection (ties resolved to
    /// the lowest column index), free columns in ascending order, each basis
    /// vector normalized. Deterministic for a fixed Phi.
    pub fn from_constraints(cons: &ConstraintSet) -> Self {
        let cons = cons.clone();
        HorizontalFrame::new(move |q: &[f64]| {
            let phi = match cons.phi(q) {
                Ok(p) => p,
                Err(_) => return DMatrix::from_element(q.len(), 0, f64::NAN),
            };
            match null_space(&phi) {
                Ok(ns) => ns,
                Err(_) => DMatrix::from_element(q.len(), 0, f64::NAN),
            }
        })
    }

    /// Frame columns at q.
    pub fn columns(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        let z = (self.columns)(q);
        if z.nrows() != q.len() {
            return Err(Error::Frame(format!(
                "frame columns have {} components at a {}-dimensional point",
                z.nrows(),
                q.len()
            )));
        }
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::Frame("non-finite frame columns".into()));
        }
        Ok(z)
    }

    /// Checks that the frame spans the admissible subspace at q: exactly
    /// n - m independent columns, each annihilated by every constraint row.
    pub fn validate(&self, cons: &ConstraintSet, q: &[f64]) -> Result<()> {
        let z = self.columns(q)?;
        let expected = q.len() - cons.count();
        if z.ncols() != expected {
            return Err(Error::Frame(format!(
                "frame has {} columns, expected {expected}",
                z.ncols()
            )));
        }
        if expected == 0 {
            return Ok(());
        }
        let sv = z.clone().svd(false, false).singular_values;
        let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        if smin <= RANK_FLOOR * smax.max(1.0) {
            return Err(Error::Frame(format!(
                "frame columns dependent (smallest singular value {smin:.3e})"
            )));
        }
        let phi = cons.phi(q)?;
        let pairing = (&phi * &z).amax();
        let scale = phi.amax().max(1.0) * z.amax().max(1.0);
        if pairing > 1e-10 * scale {
            return Err(Error::Frame(format!(
                "frame not tangent to the constraint distribution (max pairing {pairing:.3e})"
            )));
        }
        Ok(())
    }
}

/// Null-space basis of a full-row-rank matrix by Gauss elimination with
/// largest-pivot column selection; free columns in ascending index order,
/// output columns normalized.
fn null_space(phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (m, n) = phi.shape();
    let k = n - m;
    if m == 0 {
        return Ok(DMatrix::identity(n, n));
    }
    let mut work = phi.clone();
    let mut pivots: Vec<usize> = Vec::with_capacity(m);
    for r in 0..m {
        let mut best = (0usize, 0.0f64);
        for c in 0..n {
            if pivots.contains(&c) {
                continue;
            }
            let v = work[(r, c)].abs();
            if v > best.1 {
                best = (c, v);
            }
        }
        if best.1 <= RANK_FLOOR {
            return Err(Error::Frame(
                "constraint matrix rank-deficient during elimination".into(),
            ));
        }
        let c = best.0;
        let pivot = work[(r, c)];
        for cc in 0..n {
            work[(r, cc)] /= pivot;
        }
        for rr in 0..m {
            if rr == r {
                continue;
            }
            let factor = work[(rr, c)];
            if factor != 0.0 {
                for cc in 0..n {
                    work[(rr, cc)] -= factor * work[(r, cc)];
                }
            }
        }
        pivots.push(c);
    }
    let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
    debug_assert_eq!(free.len(), k);
    let mut out = DMatrix::zeros(n, k);
    for (j, &f) in free.iter().enumerate() {
        out[(f, j)] = 1.0;
        for (r, &c) in pivots.iter().enumerate() {
            out[(c, j)] = -work[(r, f)];
        }
        let norm = out.column(j).norm();
        for i in 0..n {
            out[(i, j)] /= norm;
        }
    }
    Ok(out)
}
