//! Mechanical systems of kinetic-minus-potential type.
//!
//! A system is a chart, a configuration-dependent mass matrix M(q), and a
//! potential V(q). The Lagrangian is L = v^T M(q) v / 2 - V(q); the Legendre
//! map p = M(q) v is a global diffeomorphism because M is required to be
//! symmetric positive definite everywhere it is evaluated, and the Hamiltonian
//! is H = p^T M(q)^{-1} p / 2 + V(q).
//!
//! Forces enter as semibasic 1-forms: covector components that may depend on
//! velocity (tangent side) or momentum (cotangent side). Only one side needs
//! to be supplied; the other is obtained by substituting the Legendre map.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Dyn};

use crate::calculus::{
    fd_gradient, fd_gradient_fn, rk4_integrate, Chart, MatrixFn, ScalarField, DEFAULT_FD_STEP,
};
use crate::error::{Error, Result};

/// Configuration and velocity (q, v).
#[derive(Debug, Clone, PartialEq)]
pub struct TangentState {
    pub q: DVector<f64>,
    pub v: DVector<f64>,
}

impl TangentState {
    pub fn new(q: DVector<f64>, v: DVector<f64>) -> Self {
        TangentState { q, v }
    }

    pub fn from_slices(q: &[f64], v: &[f64]) -> Self {
        TangentState {
            q: DVector::from_row_slice(q),
            v: DVector::from_row_slice(v),
        }
    }
}

/// Configuration and momentum (q, p).
#[derive(Debug, Clone, PartialEq)]
pub struct CotangentState {
    pub q: DVector<f64>,
    pub p: DVector<f64>,
}

impl CotangentState {
    pub fn new(q: DVector<f64>, p: DVector<f64>) -> Self {
        CotangentState { q, p }
    }

    pub fn from_slices(q: &[f64], p: &[f64]) -> Self {
        CotangentState {
            q: DVector::from_row_slice(q),
            p: DVector::from_row_slice(p),
        }
    }
}

type CovectorOnPhase = Arc<dyn Fn(&[f64], &[f64]) -> DVector<f64> + Send + Sync>;

/// Velocity- or momentum-dependent covector force. Semibasic: it has only
/// dq-components, so the same component vector is read on either side of the
/// Legendre map with the velocity/momentum substituted.
#[derive(Clone)]
pub struct SemibasicForce {
    tangent: Option<CovectorOnPhase>,
    cotangent: Option<CovectorOnPhase>,
}

impl SemibasicForce {
    /// Force given as alpha(q, v) on the velocity side.
    pub fn from_tangent(
        f: impl Fn(&[f64], &[f64]) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        SemibasicForce {
            tangent: Some(Arc::new(f)),
            cotangent: None,
        }
    }

    /// Force given as beta(q, p) on the momentum side.
    pub fn from_cotangent(
        f: impl Fn(&[f64], &[f64]) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        SemibasicForce {
            tangent: None,
            cotangent: Some(Arc::new(f)),
        }
    }

    /// Momentum-side components beta(q, p); transported from the velocity side
    /// through the inverse Legendre map when only that side was supplied.
    pub fn beta(
        &self,
        sys: &MechanicalSystem,
        q: &[f64],
        p: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        if let Some(f) = &self.cotangent {
            return Ok(f(q, p.as_slice()));
        }
        let f = self
            .tangent
            .as_ref()
            .expect("force holds at least one side");
        let v = sys.metric_cholesky(q)?.solve(p);
        Ok(f(q, v.as_slice()))
    }

    /// Velocity-side components alpha(q, v); transported from the momentum
    /// side through the Legendre map when only that side was supplied.
    pub fn alpha(
        &self,
        sys: &MechanicalSystem,
        q: &[f64],
        v: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        if let Some(f) = &self.tangent {
            return Ok(f(q, v.as_slice()));
        }
        let f = self
            .cotangent
            .as_ref()
            .expect("force holds at least one side");
        let p = sys.metric(q)? * v;
        Ok(f(q, p.as_slice()))
    }
}

/// Mechanical system: chart, mass metric, potential, and optional analytic
/// shortcut for the configuration gradient of the Hamiltonian.
#[derive(Clone)]
pub struct MechanicalSystem {
    chart: Chart,
    metric: MatrixFn,
    potential: ScalarField,
    grad_h_q: Option<CovectorOnPhase>,
    fd_step: f64,
}

impl MechanicalSystem {
    pub fn new(
        chart: Chart,
        metric: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
        potential: ScalarField,
    ) -> Self {
        MechanicalSystem {
            chart,
            metric: Arc::new(metric),
            potential,
            grad_h_q: None,
            fd_step: DEFAULT_FD_STEP,
        }
    }

    /// Registers an analytic dH/dq(q, p) callback used instead of finite
    /// differences by the dynamics.
    pub fn with_hamiltonian_q_gradient(
        mut self,
        g: impl Fn(&[f64], &[f64]) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.grad_h_q = Some(Arc::new(g));
        self
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    /// Copy of the system with every analytic derivative callback removed, so
    /// all derivatives go through central differences.
    pub fn without_analytic_gradients(&self) -> Self {
        MechanicalSystem {
            chart: self.chart.clone(),
            metric: self.metric.clone(),
            potential: self.potential.without_gradient(),
            grad_h_q: None,
            fd_step: self.fd_step,
        }
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    pub fn potential(&self) -> &ScalarField {
        &self.potential
    }

    /// True when any analytic configuration-derivative shortcut is registered;
    /// verification tolerances default tighter in that case.
    pub fn has_analytic_q_gradient(&self) -> bool {
        self.grad_h_q.is_some() || self.potential.has_gradient()
    }

    /// Mass matrix at q, validated: square of the chart dimension, symmetric
    /// to 1e-12 (relative to its largest entry), and positive definite.
    pub fn metric(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.dim();
        if q.len() != n {
            return Err(Error::Config(format!(
                "point has {} coordinates, chart has {n}",
                q.len()
            )));
        }
        let m = (self.metric)(q);
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::Metric(format!(
                "mass matrix is {}x{}, expected {n}x{n}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::Metric("mass matrix has non-finite entries".into()));
        }
        let scale = m.amax().max(1.0);
        let asym = (&m - m.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::Metric(format!(
                "mass matrix asymmetric by {asym:.3e}"
            )));
        }
        Ok(m)
    }

    pub(crate) fn metric_cholesky(&self, q: &[f64]) -> Result<nalgebra::Cholesky<f64, Dyn>> {
        let m = self.metric(q)?;
        nalgebra::Cholesky::new(m)
            .ok_or_else(|| Error::Metric("mass matrix is not positive definite".into()))
    }

    /// Inverse mass matrix at q.
    pub fn metric_inverse(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.metric_cholesky(q)?.inverse())
    }

    /// Legendre map: p = M(q) v.
    pub fn legendre(&self, s: &TangentState) -> Result<CotangentState> {
        if s.v.len() != self.dim() {
            return Err(Error::Config("velocity dimension mismatch".into()));
        }
        let p = self.metric(s.q.as_slice())? * &s.v;
        Ok(CotangentState::new(s.q.clone(), p))
    }

    /// Inverse Legendre map: v = M(q)^{-1} p.
    pub fn legendre_inv(&self, s: &CotangentState) -> Result<TangentState> {
        if s.p.len() != self.dim() {
            return Err(Error::Config("momentum dimension mismatch".into()));
        }
        let v = self.metric_cholesky(s.q.as_slice())?.solve(&s.p);
        Ok(TangentState::new(s.q.clone(), v))
    }

    /// H(q, p) = p^T M(q)^{-1} p / 2 + V(q).
    pub fn hamiltonian_at(&self, q: &[f64], p: &DVector<f64>) -> Result<f64> {
        let v = self.metric_cholesky(q)?.solve(p);
        Ok(0.5 * p.dot(&v) + self.potential.value(q))
    }

    pub fn hamiltonian(&self, s: &CotangentState) -> Result<f64> {
        self.hamiltonian_at(s.q.as_slice(), &s.p)
    }

    /// L(q, v) = v^T M(q) v / 2 - V(q).
    pub fn lagrangian(&self, s: &TangentState) -> Result<f64> {
        let mv = self.metric(s.q.as_slice())? * &s.v;
        Ok(0.5 * s.v.dot(&mv) - self.potential.value(s.q.as_slice()))
    }

    /// Lagrangian energy E_L(q, v) = v^T M(q) v / 2 + V(q); equals the
    /// Hamiltonian pulled back through the Legendre map.
    pub fn lagrangian_energy(&self, s: &TangentState) -> Result<f64> {
        let mv = self.metric(s.q.as_slice())? * &s.v;
        Ok(0.5 * s.v.dot(&mv) + self.potential.value(s.q.as_slice()))
    }

    /// dH/dq(q, p): analytic callback when registered, otherwise the gradient
    /// of V when the metric contribution is absent is not assumed; the whole
    /// H(., p) is differenced centrally.
    pub fn hamiltonian_q_gradient(&self, q: &[f64], p: &DVector<f64>) -> Result<DVector<f64>> {
        if let Some(g) = &self.grad_h_q {
            let out = g(q, p.as_slice());
            if out.len() != self.dim() {
                return Err(Error::Config("analytic dH/dq dimension mismatch".into()));
            }
            if out.iter().any(|x| !x.is_finite()) {
                return Err(Error::NumericalFailure("non-finite analytic dH/dq".into()));
            }
            return Ok(out);
        }
        // V-only shortcut is valid when an analytic potential gradient exists
        // and the kinetic term is still differenced; keeping a single code
        // path (difference the full H) avoids a wrong split for q-dependent
        // metrics, so the potential gradient is only used via fd_gradient's
        // analytic branch when the metric term is constant in the coordinate.
        fd_gradient_fn(
            |qq| self.hamiltonian_at(qq, p).unwrap_or(f64::NAN),
            q,
            self.fd_step,
        )
    }

    /// Unconstrained (optionally forced) Hamiltonian vector field:
    /// qdot = M^{-1} p, pdot = -dH/dq - beta(q, p).
    pub fn hamiltonian_field(
        &self,
        force: Option<&SemibasicForce>,
        s: &CotangentState,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let q = s.q.as_slice();
        let qdot = self.metric_cholesky(q)?.solve(&s.p);
        let mut pdot = -self.hamiltonian_q_gradient(q, &s.p)?;
        if let Some(f) = force {
            pdot -= f.beta(self, q, &s.p)?;
        }
        Ok((qdot, pdot))
    }

    /// Integrates the (optionally forced) Hamiltonian dynamics with fixed-step
    /// RK4, recording the energy at every sample.
    pub fn integrate(
        &self,
        force: Option<&SemibasicForce>,
        s0: &CotangentState,
        dt: f64,
        steps: usize,
    ) -> Result<PhaseTrajectory> {
        let n = self.dim();
        if s0.q.len() != n || s0.p.len() != n {
            return Err(Error::Config("initial state dimension mismatch".into()));
        }
        let sys = self;
        let f = |x: &DVector<f64>| -> Result<DVector<f64>> {
            let s = split_state(x, n);
            let (qdot, pdot) = sys.hamiltonian_field(force, &s)?;
            Ok(stack_state(&qdot, &pdot))
        };
        let raw = rk4_integrate(f, stack_state(&s0.q, &s0.p), dt, steps, &[])?;
        let mut states = Vec::with_capacity(raw.states.len());
        let mut energies = Vec::with_capacity(raw.states.len());
        for x in &raw.states {
            let s = split_state(x, n);
            energies.push(self.hamiltonian(&s)?);
            states.push(s);
        }
        Ok(PhaseTrajectory {
            times: raw.times,
            states,
            energies,
        })
    }

    /// Gradient of the potential (analytic when registered).
    pub fn potential_gradient(&self, q: &[f64]) -> Result<DVector<f64>> {
        fd_gradient(&self.potential, q, self.fd_step)
    }
}

/// Phase-space trajectory with per-sample energies.
#[derive(Debug, Clone)]
pub struct PhaseTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<CotangentState>,
    pub energies: Vec<f64>,
}

impl PhaseTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest |E(t) - E(0)| over the run.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energies[0];
        self.energies
            .iter()
            .map(|e| (e - e0).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn stack_state(q: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
    let mut x = DVector::zeros(q.len() + p.len());
    x.rows_mut(0, q.len()).copy_from(q);
    x.rows_mut(q.len(), p.len()).copy_from(p);
    x
}

pub(crate) fn split_state(x: &DVector<f64>, n: usize) -> CotangentState {
    CotangentState::new(
        x.rows(0, n).into_owned(),
        x.rows(n, x.len() - n).into_owned(),
    )
}
