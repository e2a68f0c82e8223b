//! Grid-based verification of Hamilton-Jacobi-type conditions for candidate
//! 1-forms (or vector fields, transported through the Legendre map).
//!
//! Every check samples pointwise identities over a rectangular grid and
//! reports, per condition, the raw maximum residual, a scale-free normalized
//! maximum (divided by 1 + the sup norm of the candidate at the point), and
//! the worst sample point. Pass verdicts gate on the normalized residual so a
//! single tolerance works across models of different momentum scales; the raw
//! value is reported alongside for absolute comparisons.
//!
//! The checks:
//! - unconstrained: the candidate must be closed and must make the energy
//!   q -> H(q, gamma(q)) stationary;
//! - forced: stationarity is replaced by a balance against the semibasic
//!   force, grad(H o gamma) + beta(q, gamma(q)) = 0;
//! - nonholonomic: the candidate must take values in the constraint
//!   submanifold (image), its exterior derivative must vanish on horizontal
//!   pairs (ideal), and the energy must be stationary along horizontal
//!   directions (annihilator).
//!
//! A candidate that passes the nonholonomic check integrates consistently:
//! the flow of q -> M(q)^{-1} gamma(q) lifted through gamma reproduces the
//! full constrained dynamics started on its image ([`flow_equivalence_test`]).

use nalgebra::DVector;
use serde::Serialize;

use crate::calculus::{
    fd_gradient, fd_gradient_fn, oneform_exterior_matrix, rk4_integrate, OneFormField, ScalarField,
    Trajectory, VectorField,
};
use crate::error::{Error, Result};
use crate::mechanics::{CotangentState, MechanicalSystem, SemibasicForce, TangentState};
use crate::nonholonomic::{ConstraintSet, HorizontalFrame};

/// Default cap on the total number of grid points.
pub const POINT_CAP: usize = 100_000;

/// One sampled coordinate axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl GridAxis {
    pub fn new(lo: f64, hi: f64, count: usize) -> Self {
        GridAxis { lo, hi, count }
    }

    fn validate(&self) -> Result<()> {
        if !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::Config("grid bounds must be finite".into()));
        }
        if self.count == 0 {
            return Err(Error::Config("grid axis needs at least one sample".into()));
        }
        if self.lo > self.hi {
            return Err(Error::Config(format!(
                "grid axis has lo {} > hi {}",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    fn sample(&self, k: usize) -> f64 {
        if self.count == 1 {
            self.lo
        } else {
            self.lo + (self.hi - self.lo) * k as f64 / (self.count - 1) as f64
        }
    }
}

/// Rectangular sample grid plus optional explicit extra points. Points
/// enumerate in row-major order (first axis slowest), extras afterwards, so
/// scans are deterministic.
#[derive(Debug, Clone)]
pub struct SampleGrid {
    axes: Vec<GridAxis>,
    extra: Vec<Vec<f64>>,
    cap: usize,
}

impl SampleGrid {
    pub fn new(axes: Vec<GridAxis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::Config("grid needs at least one axis".into()));
        }
        for ax in &axes {
            ax.validate()?;
        }
        let grid = SampleGrid {
            axes,
            extra: Vec::new(),
            cap: POINT_CAP,
        };
        grid.check_cap()?;
        Ok(grid)
    }

    /// Same bounds and count on every axis.
    pub fn cube(lo: f64, hi: f64, count: usize, dim: usize) -> Result<Self> {
        SampleGrid::new(vec![GridAxis::new(lo, hi, count); dim])
    }

    /// Appends explicit sample points (evaluated after the grid points).
    pub fn with_points(mut self, pts: Vec<Vec<f64>>) -> Result<Self> {
        for p in &pts {
            if p.len() != self.axes.len() {
                return Err(Error::Config(format!(
                    "extra point has {} coordinates, grid has {} axes",
                    p.len(),
                    self.axes.len()
                )));
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config("extra grid point must be finite".into()));
            }
        }
        self.extra.extend(pts);
        self.check_cap()?;
        Ok(self)
    }

    /// Replaces the default point cap.
    pub fn with_cap(mut self, cap: usize) -> Result<Self> {
        self.cap = cap;
        self.check_cap()?;
        Ok(self)
    }

    fn check_cap(&self) -> Result<()> {
        if self.len() > self.cap {
            return Err(Error::Config(format!(
                "grid has {} points, cap is {}",
                self.len(),
                self.cap
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        let grid: usize = self.axes.iter().map(|a| a.count).product();
        grid + self.extra.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axes(&self) -> &[GridAxis] {
        &self.axes
    }

    /// All sample points, grid first (row-major), then extras.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let dim = self.dim();
        let total: usize = self.axes.iter().map(|a| a.count).product();
        let mut out = Vec::with_capacity(total + self.extra.len());
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            let p: Vec<f64> = (0..dim).map(|a| self.axes[a].sample(idx[a])).collect();
            out.push(p);
            for a in (0..dim).rev() {
                idx[a] += 1;
                if idx[a] < self.axes[a].count {
                    break;
                }
                idx[a] = 0;
            }
        }
        out.extend(self.extra.iter().cloned());
        out
    }
}

/// Verdict for a single pointwise condition.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub condition: String,
    /// Raw maximum absolute residual over the grid.
    pub residual: f64,
    /// Maximum of residual / (1 + |gamma(q)|_inf); the pass gate.
    pub normalized_residual: f64,
    /// Sample point attaining the normalized maximum (first such point in
    /// enumeration order, which is lexicographic for grid points).
    pub worst_point: Vec<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

/// Full report: one entry per condition, overall verdict is their conjunction.
#[derive(Debug, Clone, Serialize)]
pub struct HJReport {
    pub conditions: Vec<ConditionReport>,
    pub pass: bool,
}

impl HJReport {
    fn from_conditions(conditions: Vec<ConditionReport>) -> Self {
        let pass = conditions.iter().all(|c| c.pass);
        HJReport { conditions, pass }
    }

    pub fn condition(&self, name: &str) -> Option<&ConditionReport> {
        self.conditions.iter().find(|c| c.condition == name)
    }
}

/// A candidate solution: a 1-form on configuration space, or a vector field
/// transported to one through the mass metric.
#[derive(Clone)]
pub enum HJCandidate {
    Form(OneFormField),
    Field(VectorField),
}

impl HJCandidate {
    /// Cotangent-side components gamma(q); for a tangent-side candidate this
    /// is M(q) X(q).
    pub fn one_form(&self, sys: &MechanicalSystem) -> OneFormField {
        match self {
            HJCandidate::Form(g) => g.clone(),
            HJCandidate::Field(x) => {
                let sys = sys.clone();
                let x = x.clone();
                OneFormField::new(move |q| match sys.metric(q) {
                    Ok(m) => m * x.value(q),
                    Err(_) => DVector::from_element(q.len(), f64::NAN),
                })
            }
        }
    }

    /// Tangent-side components X(q); for a cotangent-side candidate this is
    /// M(q)^{-1} gamma(q).
    pub fn vector_field(&self, sys: &MechanicalSystem) -> VectorField {
        match self {
            HJCandidate::Field(x) => x.clone(),
            HJCandidate::Form(g) => {
                let sys = sys.clone();
                let g = g.clone();
                VectorField::new(move |q| match sys.metric_cholesky(q) {
                    Ok(ch) => ch.solve(&g.value(q)),
                    Err(_) => DVector::from_element(q.len(), f64::NAN),
                })
            }
        }
    }
}

/// Default pass tolerance: tighter when the system carries analytic
/// configuration gradients, looser when everything is differenced.
pub fn default_tolerance(sys: &MechanicalSystem) -> f64 {
    if sys.has_analytic_q_gradient() {
        1e-6
    } else {
        1e-4
    }
}

/// Running maximum with deterministic worst-point selection: strict
/// improvement replaces, so ties keep the earliest (lexicographically
/// smallest) point.
struct Scan {
    raw: f64,
    normalized: f64,
    worst: Vec<f64>,
}

impl Scan {
    fn new() -> Self {
        Scan {
            raw: 0.0,
            normalized: -1.0,
            worst: Vec::new(),
        }
    }

    fn observe(&mut self, name: &str, q: &[f64], raw: f64, scale: f64) -> Result<()> {
        if !raw.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "non-finite {name} residual at {q:?}"
            )));
        }
        if raw > self.raw {
            self.raw = raw;
        }
        let norm = raw / scale;
        if norm > self.normalized {
            self.normalized = norm;
            self.worst = q.to_vec();
        }
        Ok(())
    }

    fn report(self, name: &str, tolerance: f64) -> ConditionReport {
        let normalized = self.normalized.max(0.0);
        ConditionReport {
            condition: name.to_string(),
            residual: self.raw,
            normalized_residual: normalized,
            worst_point: self.worst,
            tolerance,
            pass: normalized <= tolerance,
        }
    }
}

fn max_abs(v: &DVector<f64>) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.amax()
    }
}

fn candidate_value(gamma: &OneFormField, q: &[f64]) -> Result<DVector<f64>> {
    let g = gamma.value(q);
    if g.len() != q.len() {
        return Err(Error::Config(format!(
            "candidate has {} components at a {}-dimensional point",
            g.len(),
            q.len()
        )));
    }
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalFailure(format!(
            "non-finite candidate value at {q:?}"
        )));
    }
    Ok(g)
}

fn check_grid_dim(sys: &MechanicalSystem, grid: &SampleGrid) -> Result<()> {
    if grid.dim() != sys.dim() {
        return Err(Error::Config(format!(
            "grid has {} axes, chart has {} coordinates",
            grid.dim(),
            sys.dim()
        )));
    }
    Ok(())
}

/// Energy along the candidate, q -> H(q, gamma(q)), as a difference-friendly
/// scalar function (non-finite on interior failure, caught by the scan).
fn energy_along<'a>(
    sys: &'a MechanicalSystem,
    gamma: &'a OneFormField,
) -> impl Fn(&[f64]) -> f64 + 'a {
    move |q: &[f64]| {
        let g = gamma.value(q);
        sys.hamiltonian_at(q, &g).unwrap_or(f64::NAN)
    }
}

/// Closedness and stationarity of the energy along the candidate.
pub fn check_unconstrained(
    sys: &MechanicalSystem,
    candidate: &HJCandidate,
    grid: &SampleGrid,
    tolerance: Option<f64>,
) -> Result<HJReport> {
    check_grid_dim(sys, grid)?;
    let tol = tolerance.unwrap_or_else(|| default_tolerance(sys));
    let gamma = candidate.one_form(sys);
    let h = sys.fd_step();
    let mut closed = Scan::new();
    let mut stationary = Scan::new();
    for q in grid.points() {
        let g = candidate_value(&gamma, &q)?;
        let scale = 1.0 + max_abs(&g);
        let ext = oneform_exterior_matrix(&gamma, &q, h)?;
        closed.observe("closedness", &q, ext.amax(), scale)?;
        let grad = fd_gradient_fn(energy_along(sys, &gamma), &q, h)?;
        stationary.observe("stationarity", &q, max_abs(&grad), scale)?;
    }
    Ok(HJReport::from_conditions(vec![
        closed.report("closedness", tol),
        stationary.report("stationarity", tol),
    ]))
}

/// Closedness plus the forced balance grad(H o gamma) + beta(q, gamma(q)) = 0.
pub fn check_forced(
    sys: &MechanicalSystem,
    force: &SemibasicForce,
    candidate: &HJCandidate,
    grid: &SampleGrid,
    tolerance: Option<f64>,
) -> Result<HJReport> {
    check_grid_dim(sys, grid)?;
    let tol = tolerance.unwrap_or_else(|| default_tolerance(sys));
    let gamma = candidate.one_form(sys);
    let h = sys.fd_step();
    let mut closed = Scan::new();
    let mut balance = Scan::new();
    for q in grid.points() {
        let g = candidate_value(&gamma, &q)?;
        let scale = 1.0 + max_abs(&g);
        let ext = oneform_exterior_matrix(&gamma, &q, h)?;
        closed.observe("closedness", &q, ext.amax(), scale)?;
        let grad = fd_gradient_fn(energy_along(sys, &gamma), &q, h)?;
        let beta = force.beta(sys, &q, &g)?;
        balance.observe("forced_balance", &q, max_abs(&(grad + beta)), scale)?;
    }
    Ok(HJReport::from_conditions(vec![
        closed.report("closedness", tol),
        balance.report("forced_balance", tol),
    ]))
}

/// Frame columns at q, each normalized to unit Euclidean length.
fn normalized_frame_columns(
    frame: &HorizontalFrame,
    cons: &ConstraintSet,
    q: &[f64],
) -> Result<Vec<DVector<f64>>> {
    frame.validate(cons, q)?;
    let z = frame.columns(q)?;
    let mut cols = Vec::with_capacity(z.ncols());
    for c in 0..z.ncols() {
        let col = z.column(c).into_owned();
        let n = col.norm();
        if n <= 0.0 {
            return Err(Error::Frame(format!("zero frame column at {q:?}")));
        }
        cols.push(col / n);
    }
    Ok(cols)
}

struct NonholonomicScans {
    image: Scan,
    ideal: Scan,
    annihilator: Scan,
}

/// Shared grid sweep behind the nonholonomic checks.
fn scan_nonholonomic(
    sys: &MechanicalSystem,
    cons: &ConstraintSet,
    gamma: &OneFormField,
    grid: &SampleGrid,
    frame: &HorizontalFrame,
) -> Result<NonholonomicScans> {
    let h = sys.fd_step();
    let mut scans = NonholonomicScans {
        image: Scan::new(),
        ideal: Scan::new(),
        annihilator: Scan::new(),
    };
    for q in grid.points() {
        let g = candidate_value(gamma, &q)?;
        let scale = 1.0 + max_abs(&g);

        let psi = cons.residuals(sys, &CotangentState::new(DVector::from_row_slice(&q), g))?;
        scans.image.observe("image", &q, max_abs(&psi), scale)?;

        let cols = normalized_frame_columns(frame, cons, &q)?;
        let ext = oneform_exterior_matrix(gamma, &q, h)?;
        let mut worst_pair = 0.0f64;
        for a in 0..cols.len() {
            for b in (a + 1)..cols.len() {
                let val = (cols[a].transpose() * &ext * &cols[b])[(0, 0)].abs();
                worst_pair = worst_pair.max(val);
            }
        }
        scans.ideal.observe("ideal", &q, worst_pair, scale)?;

        let grad = fd_gradient_fn(energy_along(sys, gamma), &q, h)?;
        let mut worst_dir = 0.0f64;
        for col in &cols {
            worst_dir = worst_dir.max(col.dot(&grad).abs());
        }
        scans
            .annihilator
            .observe("annihilator", &q, worst_dir, scale)?;
    }
    Ok(scans)
}

/// The three pointwise conditions for a constrained candidate: image
/// (gamma(q) satisfies the momentum constraints), ideal (d gamma vanishes on
/// horizontal pairs), annihilator (the energy along gamma is stationary in
/// horizontal directions). The frame defaults to the generated null-space
/// frame of the constraint set.
pub fn check_nonholonomic(
    sys: &MechanicalSystem,
    cons: &ConstraintSet,
    candidate: &HJCandidate,
    grid: &SampleGrid,
    frame: Option<&HorizontalFrame>,
    tolerance: Option<f64>,
) -> Result<HJReport> {
    check_grid_dim(sys, grid)?;
    let tol = tolerance.unwrap_or_else(|| default_tolerance(sys));
    let gamma = candidate.one_form(sys);
    let generated;
    let frame = match frame {
        Some(f) => f,
        None => {
            generated = HorizontalFrame::from_constraints(cons);
            &generated
        }
    };
    let scans = scan_nonholonomic(sys, cons, &gamma, grid, frame)?;
    Ok(HJReport::from_conditions(vec![
        scans.image.report("image", tol),
        scans.ideal.report("ideal", tol),
        scans.annihilator.report("annihilator", tol),
    ]))
}

/// Tangent-side variant: transports X to gamma = M X, runs the three
/// cotangent conditions, and adds an independent stationarity residual on the
/// Lagrangian energy q -> E_L(q, X(q)) as a cross-check (analytically equal
/// to the energy along gamma).
pub fn check_nonholonomic_lagrangian(
    sys: &MechanicalSystem,
    cons: &ConstraintSet,
    field: &VectorField,
    grid: &SampleGrid,
    frame: Option<&HorizontalFrame>,
    tolerance: Option<f64>,
) -> Result<HJReport> {
    check_grid_dim(sys, grid)?;
    let tol = tolerance.unwrap_or_else(|| default_tolerance(sys));
    let candidate = HJCandidate::Field(field.clone());
    let gamma = candidate.one_form(sys);
    let generated;
    let frame = match frame {
        Some(f) => f,
        None => {
            generated = HorizontalFrame::from_constraints(cons);
            &generated
        }
    };
    let scans = scan_nonholonomic(sys, cons, &gamma, grid, frame)?;

    let h = sys.fd_step();
    let energy = |q: &[f64]| {
        let v = field.value(q);
        sys.lagrangian_energy(&TangentState::new(DVector::from_row_slice(q), v))
            .unwrap_or(f64::NAN)
    };
    let mut lag = Scan::new();
    for q in grid.points() {
        let g = candidate_value(&gamma, &q)?;
        let scale = 1.0 + max_abs(&g);
        let cols = normalized_frame_columns(frame, cons, &q)?;
        let grad = fd_gradient_fn(energy, &q, h)?;
        let mut worst_dir = 0.0f64;
        for col in &cols {
            worst_dir = worst_dir.max(col.dot(&grad).abs());
        }
        lag.observe("annihilator_lagrangian", &q, worst_dir, scale)?;
    }

    Ok(HJReport::from_conditions(vec![
        scans.image.report("image", tol),
        scans.ideal.report("ideal", tol),
        scans.annihilator.report("annihilator", tol),
        lag.report("annihilator_lagrangian", tol),
    ]))
}

/// Integrates the base flow qdot = M(q)^{-1} gamma(q).
pub fn hj_flow(
    sys: &MechanicalSystem,
    candidate: &HJCandidate,
    q0: &[f64],
    dt: f64,
    steps: usize,
) -> Result<Trajectory> {
    if q0.len() != sys.dim() {
        return Err(Error::Config("flow start dimension mismatch".into()));
    }
    let gamma = candidate.one_form(sys);
    let deriv = |q: &DVector<f64>| -> Result<DVector<f64>> {
        let g = candidate_value(&gamma, q.as_slice())?;
        Ok(sys.metric_cholesky(q.as_slice())?.solve(&g))
    };
    rk4_integrate(deriv, DVector::from_row_slice(q0), dt, steps, &[])
}

/// Sup-norm deviation between the candidate-lifted base flow and the full
/// constrained dynamics started at (q0, gamma(q0)), measured over both the
/// configuration and momentum components at every sample. Small deviations
/// (integration error only) mean the candidate reproduces the constrained
/// flow from this start.
pub fn flow_equivalence_test(
    sys: &MechanicalSystem,
    cons: &ConstraintSet,
    candidate: &HJCandidate,
    q0: &[f64],
    dt: f64,
    steps: usize,
) -> Result<f64> {
    let gamma = candidate.one_form(sys);
    let base = hj_flow(sys, candidate, q0, dt, steps)?;
    let p0 = candidate_value(&gamma, q0)?;
    let s0 = CotangentState::new(DVector::from_row_slice(q0), p0);
    let full = cons.integrate(sys, &s0, dt, steps, false)?;
    let mut sup = 0.0f64;
    for (k, qb) in base.states.iter().enumerate() {
        let lifted_p = candidate_value(&gamma, qb.as_slice())?;
        let s = &full.states[k];
        sup = sup.max((qb - &s.q).amax());
        sup = sup.max((lifted_p - &s.p).amax());
    }
    Ok(sup)
}

/// Builds the candidate gamma = dS - Phi^T lam(q) where lam is chosen
/// pointwise so that gamma satisfies the momentum constraints exactly
/// (lam solves C lam = Phi M^{-1} dS). The image condition holds by
/// construction; closedness on horizontal pairs generally does not, so this
/// is a candidate generator, not a solution generator.
pub fn constrained_exact_form(
    sys: &MechanicalSystem,
    cons: &ConstraintSet,
    s: &ScalarField,
) -> HJCandidate {
    let sys = sys.clone();
    let cons = cons.clone();
    let s = s.clone();
    HJCandidate::Form(OneFormField::new(move |q| {
        let fail = || DVector::from_element(q.len(), f64::NAN);
        let ds = match fd_gradient(&s, q, sys.fd_step()) {
            Ok(g) => g,
            Err(_) => return fail(),
        };
        let phi = match cons.phi(q) {
            Ok(p) => p,
            Err(_) => return fail(),
        };
        if phi.nrows() == 0 {
            return ds;
        }
        let v = match sys.metric_cholesky(q) {
            Ok(ch) => ch.solve(&ds),
            Err(_) => return fail(),
        };
        let c = match cons.compatibility(&sys, q) {
            Ok(c) => c,
            Err(_) => return fail(),
        };
        match nalgebra::Cholesky::new(c) {
            Some(ch) => {
                let lam = ch.solve(&(&phi * v));
                ds - phi.transpose() * lam
            }
            None => fail(),
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::Chart;
    use nalgebra::{dmatrix, dvector, DMatrix};

    fn free_system(dim: usize) -> MechanicalSystem {
        let names: Vec<String> = (0..dim).map(|i| format!("q{i}")).collect();
        let chart = Chart::new(names).unwrap();
        MechanicalSystem::new(
            chart,
            move |_| DMatrix::identity(dim, dim),
            ScalarField::zero(),
        )
    }

    /// Planar rolling platform, coordinates (theta, psi, x, y), unit
    /// parameters: M = diag(1, 3, 1, 1), rows sin(theta) dx - cos(theta) dy
    /// and cos(theta) dx + sin(theta) dy - dpsi.
    fn unit_robot() -> (MechanicalSystem, ConstraintSet) {
        let chart = Chart::with_periodic(
            vec!["theta", "psi", "x", "y"],
            vec![true, true, false, false],
        )
        .unwrap();
        let sys = MechanicalSystem::new(
            chart,
            |_| DMatrix::from_diagonal(&dvector![1.0, 3.0, 1.0, 1.0]),
            ScalarField::zero(),
        );
        let cons = ConstraintSet::new(2, |q: &[f64]| {
            let th = q[0];
            dmatrix![
                0.0, 0.0, th.sin(), -th.cos();
                0.0, -1.0, th.cos(), th.sin()
            ]
        });
        (sys, cons)
    }

    fn steering_candidate() -> HJCandidate {
        HJCandidate::Form(OneFormField::constant(dvector![1.0, 0.0, 0.0, 0.0]))
    }

    fn rolling_candidate() -> HJCandidate {
        HJCandidate::Form(OneFormField::new(|q: &[f64]| {
            dvector![0.0, 3.0, q[0].cos(), q[0].sin()]
        }))
    }

    fn combined_candidate() -> HJCandidate {
        HJCandidate::Form(OneFormField::new(|q: &[f64]| {
            dvector![1.0, 3.0, q[0].cos(), q[0].sin()]
        }))
    }

    fn robot_grid() -> SampleGrid {
        SampleGrid::cube(-1.0, 1.0, 5, 4).unwrap()
    }

    #[test]
    fn grid_enumerates_row_major_with_extras_last() {
        let grid = SampleGrid::new(vec![GridAxis::new(0.0, 1.0, 2), GridAxis::new(0.0, 2.0, 3)])
            .unwrap()
            .with_points(vec![vec![9.0, 9.0]])
            .unwrap();
        assert_eq!(grid.len(), 7);
        let pts = grid.points();
        assert_eq!(pts[0], vec![0.0, 0.0]);
        assert_eq!(pts[1], vec![0.0, 1.0]);
        assert_eq!(pts[2], vec![0.0, 2.0]);
        assert_eq!(pts[3], vec![1.0, 0.0]);
        assert_eq!(pts[6], vec![9.0, 9.0]);
    }

    #[test]
    fn degenerate_grids_are_rejected() {
        assert!(matches!(
            SampleGrid::new(vec![GridAxis::new(0.0, 1.0, 0)]),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            SampleGrid::new(vec![GridAxis::new(2.0, 1.0, 3)]),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            SampleGrid::cube(0.0, 1.0, 400, 3),
            Err(Error::Config(_))
        ));
        let singleton = SampleGrid::new(vec![GridAxis::new(0.7, 5.0, 1)]).unwrap();
        assert_eq!(singleton.points(), vec![vec![0.7]]);
        assert!(matches!(
            SampleGrid::cube(0.0, 1.0, 3, 2)
                .unwrap()
                .with_points(vec![vec![0.0]]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn constant_momenta_solve_the_free_problem() {
        let sys = free_system(2);
        let cand = HJCandidate::Form(OneFormField::constant(dvector![0.7, -1.2]));
        let grid = SampleGrid::cube(-1.0, 1.0, 3, 2).unwrap();
        let report = check_unconstrained(&sys, &cand, &grid, None).unwrap();
        assert!(report.pass);
        for c in &report.conditions {
            assert!(c.residual < 1e-8, "{}: {}", c.condition, c.residual);
        }
    }

    #[test]
    fn quadratic_generating_function_fails_on_the_oscillator() {
        // 1D, M = 1, V = q^2/2, gamma = 2q dq: the energy along gamma is
        // (5/2) q^2, so the stationarity residual at q = -1 is 5 with
        // normalization scale 1 + |gamma| = 3.
        let chart = Chart::new(vec!["q"]).unwrap();
        let sys = MechanicalSystem::new(
            chart,
            |_| DMatrix::identity(1, 1),
            ScalarField::with_gradient(|q| 0.5 * q[0] * q[0], |q| dvector![q[0]]),
        );
        let cand = HJCandidate::Form(OneFormField::new(|q: &[f64]| dvector![2.0 * q[0]]));
        let grid = SampleGrid::cube(-1.0, 1.0, 5, 1).unwrap();
        let report = check_unconstrained(&sys, &cand, &grid, Some(0.1)).unwrap();
        assert!(!report.pass);
        let st = report.condition("stationarity").unwrap();
        assert!((st.residual - 5.0).abs() < 1e-9, "{}", st.residual);
        assert!((st.normalized_residual - 5.0 / 3.0).abs() < 1e-9);
        assert_eq!(st.worst_point, vec![-1.0]);
        assert!(!st.pass);
        assert!(report.condition("closedness").unwrap().residual < 1e-12);
    }

    #[test]
    fn non_closed_candidate_fails_closedness() {
        // gamma = q1 dq0 in 2D: d gamma has the single coefficient -1.
        let sys = free_system(2);
        let cand = HJCandidate::Form(OneFormField::new(|q: &[f64]| dvector![q[1], 0.0]));
        let grid = SampleGrid::cube(-1.0, 1.0, 3, 2).unwrap();
        let report = check_unconstrained(&sys, &cand, &grid, None).unwrap();
        assert!(!report.pass);
        let cl = report.condition("closedness").unwrap();
        assert!((cl.residual - 1.0).abs() < 1e-10);
        // The raw residual is constant 1 over the grid; the largest normalized
        // value sits where |gamma| is smallest, first reached at (-1, 0).
        assert!((cl.normalized_residual - 1.0).abs() < 1e-10);
        assert_eq!(cl.worst_point, vec![-1.0, 0.0]);
    }

    #[test]
    fn forced_profile_balances_the_applied_force() {
        // M = 1, V = 0, beta = -k dq, gamma = sqrt(2kq) dq on [1, 2]: the
        // energy along gamma is kq, its gradient cancels beta exactly.
        let k = 1.0;
        let chart = Chart::new(vec!["q"]).unwrap();
        let sys = MechanicalSystem::new(chart, |_| DMatrix::identity(1, 1), ScalarField::zero());
        let force = SemibasicForce::from_cotangent(move |_q: &[f64], _p: &[f64]| dvector![-k]);
        let cand = HJCandidate::Form(OneFormField::new(move |q: &[f64]| {
            dvector![(2.0 * k * q[0]).sqrt()]
        }));
        let grid = SampleGrid::new(vec![GridAxis::new(1.0, 2.0, 9)]).unwrap();
        let report = check_forced(&sys, &force, &cand, &grid, None).unwrap();
        assert!(report.pass, "{report:?}");
        assert!(report.condition("forced_balance").unwrap().residual < 1e-6);

        // Doubling k in the force only: residual is exactly k, normalized by
        // 1 + sqrt(2k) at the left edge.
        let doubled =
            SemibasicForce::from_cotangent(move |_q: &[f64], _p: &[f64]| dvector![-2.0 * k]);
        let report = check_forced(&sys, &doubled, &cand, &grid, None).unwrap();
        assert!(!report.pass);
        let fb = report.condition("forced_balance").unwrap();
        assert!((fb.residual - k).abs() < 1e-9, "{}", fb.residual);
        let expected_norm = k / (1.0 + (2.0 * k).sqrt());
        assert!((fb.normalized_residual - expected_norm).abs() < 1e-9);
        assert_eq!(fb.worst_point, vec![1.0]);
    }

    #[test]
    fn zero_force_matches_the_unconstrained_check() {
        let sys = free_system(2);
        let cand = HJCandidate::Form(OneFormField::new(|q: &[f64]| {
            dvector![q[0].sin() + q[1] * q[1], q[0] * q[1]]
        }));
        let grid = SampleGrid::cube(-1.0, 1.0, 4, 2).unwrap();
        let zero = SemibasicForce::from_cotangent(|q: &[f64], _p: &[f64]| DVector::zeros(q.len()));
        let forced = check_forced(&sys, &zero, &cand, &grid, None).unwrap();
        let free = check_unconstrained(&sys, &cand, &grid, None).unwrap();
        let fb = forced.condition("forced_balance").unwrap();
        let st = free.condition("stationarity").unwrap();
        assert_eq!(fb.residual, st.residual);
        assert_eq!(fb.normalized_residual, st.normalized_residual);
        assert_eq!(fb.worst_point, st.worst_point);
        assert_eq!(
            forced.condition("closedness").unwrap().residual,
            free.condition("closedness").unwrap().residual
        );
    }

    #[test]
    fn rolling_platform_candidates_pass() {
        let (sys, cons) = unit_robot();
        let grid = robot_grid();
        for cand in [
            steering_candidate(),
            rolling_candidate(),
            combined_candidate(),
        ] {
            let report = check_nonholonomic(&sys, &cons, &cand, &grid, None, None).unwrap();
            assert!(report.pass, "{report:?}");
            for c in &report.conditions {
                assert!(
                    c.normalized_residual < 1e-8,
                    "{}: {}",
                    c.condition,
                    c.normalized_residual
                );
            }
        }
    }

    #[test]
    fn perturbed_rolling_candidate_fails_the_image_condition() {
        // Doubling the dx coefficient of the rolling candidate leaves
        // Psi^2(q, gamma(q)) = cos^2(theta): raw 1 at theta = 0, normalized by
        // 1 + |gamma|_inf = 4.
        let (sys, cons) = unit_robot();
        let cand = HJCandidate::Form(OneFormField::new(|q: &[f64]| {
            dvector![0.0, 3.0, 2.0 * q[0].cos(), q[0].sin()]
        }));
        let report = check_nonholonomic(&sys, &cons, &cand, &robot_grid(), None, None).unwrap();
        assert!(!report.pass);
        let image = report.condition("image").unwrap();
        assert!((image.residual - 1.0).abs() < 1e-12, "{}", image.residual);
        assert!((image.normalized_residual - 0.25).abs() < 1e-12);
        assert_eq!(image.worst_point[0], 0.0);
        assert!(image.normalized_residual >= 1e-2);
    }

    #[test]
    fn tangent_route_matches_cotangent_route() {
        let (sys, cons) = unit_robot();
        let field = VectorField::new(|q: &[f64]| dvector![1.0, 1.0, q[0].cos(), q[0].sin()]);
        let grid = robot_grid();
        let lag = check_nonholonomic_lagrangian(&sys, &cons, &field, &grid, None, None).unwrap();
        assert!(lag.pass, "{lag:?}");
        assert!(
            lag.condition("annihilator_lagrangian")
                .unwrap()
                .normalized_residual
                < 1e-8
        );

        let direct =
            check_nonholonomic(&sys, &cons, &combined_candidate(), &grid, None, None).unwrap();
        for name in ["image", "ideal", "annihilator"] {
            let a = lag.condition(name).unwrap();
            let b = direct.condition(name).unwrap();
            assert!((a.residual - b.residual).abs() < 1e-13, "{name}");
            assert_eq!(a.worst_point, b.worst_point, "{name}");
        }
    }

    #[test]
    fn no_constraints_reduce_to_the_unconstrained_conditions() {
        let sys = free_system(2);
        let cand = HJCandidate::Form(OneFormField::new(|q: &[f64]| {
            dvector![q[1] * q[1], q[0].sin()]
        }));
        let grid = SampleGrid::cube(-1.0, 1.0, 4, 2).unwrap();
        let nh =
            check_nonholonomic(&sys, &ConstraintSet::empty(), &cand, &grid, None, None).unwrap();
        let free = check_unconstrained(&sys, &cand, &grid, None).unwrap();
        assert_eq!(
            nh.condition("ideal").unwrap().residual,
            free.condition("closedness").unwrap().residual
        );
        assert_eq!(
            nh.condition("annihilator").unwrap().residual,
            free.condition("stationarity").unwrap().residual
        );
        assert_eq!(nh.condition("image").unwrap().residual, 0.0);
    }

    #[test]
    fn exact_forms_have_vanishing_ideal_residual() {
        // gamma = dS is closed, so the ideal condition holds on any frame even
        // when the other conditions fail.
        let (sys, cons) = unit_robot();
        let s = ScalarField::new(|q: &[f64]| (q[0].sin() + 2.0) * q[2] + q[3] * q[3]);
        let gamma = OneFormField::exact(s, sys.fd_step());
        let cand = HJCandidate::Form(gamma);
        let report = check_nonholonomic(&sys, &cons, &cand, &robot_grid(), None, None).unwrap();
        assert!(report.condition("ideal").unwrap().residual < 1e-6);
        assert!(!report.pass);
    }

    #[test]
    fn frame_recombination_preserves_verdicts() {
        let (sys, cons) = unit_robot();
        let auto = HorizontalFrame::from_constraints(&cons);
        let mixed = {
            let auto = auto.clone();
            HorizontalFrame::new(move |q: &[f64]| {
                let z = auto
                    .columns(q)
                    .unwrap_or_else(|_| DMatrix::zeros(q.len(), 0));
                let a = dmatrix![1.0, 0.3; -0.2, 1.0];
                z * a
            })
        };
        let grid = robot_grid();
        for (cand, expect_pass) in [
            (rolling_candidate(), true),
            (
                HJCandidate::Form(OneFormField::new(|q: &[f64]| {
                    dvector![0.0, 3.0, 2.0 * q[0].cos(), q[0].sin()]
                })),
                false,
            ),
        ] {
            let a = check_nonholonomic(&sys, &cons, &cand, &grid, Some(&auto), None).unwrap();
            let b = check_nonholonomic(&sys, &cons, &cand, &grid, Some(&mixed), None).unwrap();
            assert_eq!(a.pass, expect_pass);
            assert_eq!(a.pass, b.pass);
            for c in &a.conditions {
                assert_eq!(
                    c.pass,
                    b.condition(&c.condition).unwrap().pass,
                    "{}",
                    c.condition
                );
            }
        }
    }

    #[test]
    fn base_flows_match_closed_forms() {
        let (sys, _) = unit_robot();
        // Steering candidate: theta advances linearly, everything else frozen.
        let q0 = [0.7, 0.25, 0.3, -0.4];
        let flow = hj_flow(&sys, &steering_candidate(), &q0, 1e-3, 1000).unwrap();
        let mut sup = 0.0f64;
        for (k, q) in flow.states.iter().enumerate() {
            let t = flow.times[k];
            let expected = dvector![0.7 + t, 0.25, 0.3, -0.4];
            sup = sup.max((q - expected).amax());
        }
        assert!(sup < 1e-12, "{sup}");

        // Rolling candidate from theta = 0: straight line along x.
        let q0 = [0.0, 0.25, 0.3, -0.4];
        let flow = hj_flow(&sys, &rolling_candidate(), &q0, 1e-3, 1000).unwrap();
        let mut sup = 0.0f64;
        for (k, q) in flow.states.iter().enumerate() {
            let t = flow.times[k];
            let expected = dvector![0.0, 0.25 + t, 0.3 + t, -0.4];
            sup = sup.max((q - expected).amax());
        }
        assert!(sup < 1e-12, "{sup}");

        // Combined candidate from theta = 0: unit circle geometry.
        let q0 = [0.0, 0.0, 0.0, 0.0];
        let flow = hj_flow(&sys, &combined_candidate(), &q0, 1e-3, 1000).unwrap();
        let mut sup = 0.0f64;
        for (k, q) in flow.states.iter().enumerate() {
            let t = flow.times[k];
            let expected = dvector![t, t, t.sin(), 1.0 - t.cos()];
            sup = sup.max((q - expected).amax());
        }
        assert!(sup < 1e-8, "{sup}");

        // Zero candidate: constant curve.
        let zero = HJCandidate::Form(OneFormField::constant(DVector::zeros(4)));
        let flow = hj_flow(&sys, &zero, &[0.1, 0.2, 0.3, 0.4], 1e-2, 50).unwrap();
        assert!((flow.final_state() - dvector![0.1, 0.2, 0.3, 0.4]).amax() < 1e-15);
    }

    #[test]
    fn lifted_flows_reproduce_the_constrained_dynamics() {
        let (sys, cons) = unit_robot();
        let dev = flow_equivalence_test(
            &sys,
            &cons,
            &steering_candidate(),
            &[0.7, 0.25, 0.3, -0.4],
            1e-3,
            500,
        )
        .unwrap();
        assert!(dev < 1e-8, "{dev}");
        let dev = flow_equivalence_test(
            &sys,
            &cons,
            &combined_candidate(),
            &[0.0, 0.0, 0.0, 0.0],
            1e-3,
            1000,
        )
        .unwrap();
        assert!(dev < 1e-6, "{dev}");
    }

    #[test]
    fn perturbed_candidate_separates_from_the_constrained_flow() {
        // Combined candidate with the dx coefficient doubled: the reaction
        // forces differ at order one, so the curves separate quickly.
        let (sys, cons) = unit_robot();
        let cand = HJCandidate::Form(OneFormField::new(|q: &[f64]| {
            dvector![1.0, 3.0, 2.0 * q[0].cos(), q[0].sin()]
        }));
        let dev =
            flow_equivalence_test(&sys, &cons, &cand, &[0.0, 0.0, 0.0, 0.0], 1e-3, 1000).unwrap();
        assert!(dev > 1e-2, "{dev}");
    }

    #[test]
    fn corrected_exact_form_lands_on_the_constraints() {
        // S = x: the corrected form is (0, (3/4) cos, cos^2/4, sin cos / 4)
        // in (theta, psi, x, y). Its image residual vanishes by construction,
        // but d gamma does not vanish on horizontal pairs: against the frame
        // {(1,0,0,0), (0,1,cos,sin)/sqrt(2)} the pairing at theta = pi/2 is
        // -(3/4 + 1/4)/sqrt(2).
        let (sys, cons) = unit_robot();
        let s = ScalarField::new(|q: &[f64]| q[2]);
        let cand = constrained_exact_form(&sys, &cons, &s);
        let gamma = cand.one_form(&sys);
        let g = gamma.value(&[0.3, 0.0, 0.0, 0.0]);
        let th: f64 = 0.3;
        let expected = dvector![
            0.0,
            0.75 * th.cos(),
            th.cos() * th.cos() / 4.0,
            th.sin() * th.cos() / 4.0
        ];
        assert!((g - expected).amax() < 1e-9);

        let frame = HorizontalFrame::new(|q: &[f64]| {
            DMatrix::from_columns(&[
                dvector![1.0, 0.0, 0.0, 0.0],
                dvector![0.0, 1.0, q[0].cos(), q[0].sin()],
            ])
        });
        let grid = SampleGrid::new(vec![
            GridAxis::new(0.0, 2.0 * std::f64::consts::PI, 5),
            GridAxis::new(0.0, 0.0, 1),
            GridAxis::new(0.0, 0.0, 1),
            GridAxis::new(0.0, 0.0, 1),
        ])
        .unwrap();
        let report = check_nonholonomic(&sys, &cons, &cand, &grid, Some(&frame), None).unwrap();
        assert!(report.condition("image").unwrap().residual < 1e-9);
        let ideal = report.condition("ideal").unwrap();
        let expected = 1.0 / 2.0f64.sqrt();
        assert!(
            (ideal.normalized_residual - expected).abs() < 1e-6,
            "{}",
            ideal.normalized_residual
        );
        assert_eq!(ideal.worst_point[0], std::f64::consts::FRAC_PI_2);
        assert!(!report.pass);
    }

    #[test]
    fn reports_serialize_with_stable_field_order() {
        let report = HJReport {
            conditions: vec![ConditionReport {
                condition: "image".into(),
                residual: 0.5,
                normalized_residual: 0.25,
                worst_point: vec![0.0, 1.0],
                tolerance: 1e-6,
                pass: false,
            }],
            pass: false,
        };
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.starts_with("{\"conditions\":[{\"condition\":\"image\""));
        assert!(json.contains("\"pass\":false"));
    }
}
