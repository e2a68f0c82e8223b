//! Orchestration of configured runs: building the model, resolving initial
//! data and grids from display-order input, dispatching the right check, and
//! writing deterministic output files.

use std::path::Path;

use nalgebra::DVector;
use serde::Serialize;

use crate::caplygin::{equivalence_test, lift_field, project_hj_solution, reduce};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::hamilton_jacobi::{
    check_nonholonomic, check_unconstrained, ConditionReport, SampleGrid,
};
use crate::mechanics::{CotangentState, MechanicalSystem, TangentState};
use crate::models::{build_model, ModelDescriptor};
use crate::output::{write_csv, write_json};

/// Threshold above which an off-constraint initial state triggers a warning.
pub const INITIAL_RESIDUAL_WARNING: f64 = 1e-8;

struct RunContext {
    model: ModelDescriptor,
    system: MechanicalSystem,
}

fn build_context(cfg: &RunConfig) -> Result<RunContext> {
    cfg.validate()?;
    let model = build_model(&cfg.model, &cfg.params)?;
    let system = if cfg.finite_differences_only {
        model.system().without_analytic_gradients()
    } else {
        model.system().clone()
    };
    Ok(RunContext { model, system })
}

fn initial_state(ctx: &RunContext, cfg: &RunConfig) -> Result<CotangentState> {
    let init = match &cfg.initial {
        None => {
            // With no explicit initial block, a named candidate seeds the
            // momenta at the default configuration.
            if let Some(name) = &cfg.candidate {
                let q = ctx.model.default_state().q.as_slice().to_vec();
                return ctx.model.state_from_candidate(name, &q);
            }
            return Ok(ctx.model.default_state().clone());
        }
        Some(init) => init,
    };
    let q = ctx.model.from_display(&init.q)?;
    if let Some(p) = &init.p {
        let p = ctx.model.from_display(p)?;
        return Ok(CotangentState::from_slices(&q, &p));
    }
    if let Some(v) = &init.v {
        let v = ctx.model.from_display(v)?;
        let s = TangentState::from_slices(&q, &v);
        return ctx.system.legendre(&s);
    }
    if let Some(name) = &init.candidate {
        return ctx.model.state_from_candidate(name, &q);
    }
    Err(Error::Config(
        "initial state needs one of p, v, or candidate".into(),
    ))
}

fn build_grid(ctx: &RunContext, cfg: &RunConfig) -> Result<SampleGrid> {
    let mut grid = match &cfg.grid {
        Some(axes) => {
            let axes: Vec<_> = axes.iter().map(|a| a.to_axis()).collect();
            ctx.model.grid_from_display(&axes)?
        }
        None => ctx.model.default_grid().clone(),
    };
    if !cfg.extra_grid_points.is_empty() {
        let pts: Result<Vec<Vec<f64>>> = cfg
            .extra_grid_points
            .iter()
            .map(|p| ctx.model.from_display(p))
            .collect();
        grid = grid.with_points(pts?)?;
    }
    Ok(grid)
}

/// Summary of a simulation run, also written to summary.json.
#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub model: String,
    pub dt: f64,
    pub steps: usize,
    pub projected: bool,
    /// Display-order coordinate names for final_q / final_p.
    pub coordinates: Vec<String>,
    pub initial_residual: f64,
    pub initial_residual_warning: Option<String>,
    pub max_constraint_residual: f64,
    pub energy_drift: f64,
    pub final_time: f64,
    pub final_q: Vec<f64>,
    pub final_p: Vec<f64>,
}

/// Integrates the configured dynamics and writes trajectory.csv plus
/// summary.json into `out_dir`.
pub fn run_simulate(cfg: &RunConfig, out_dir: &Path) -> Result<SimulateSummary> {
    let ctx = build_context(cfg)?;
    let s0 = initial_state(&ctx, cfg)?;
    let traj =
        ctx.model
            .constraints()
            .integrate(&ctx.system, &s0, cfg.dt, cfg.steps, cfg.project)?;

    let names = ctx.model.display_names();
    let m = ctx.model.constraints().count();
    let mut headers = vec!["t".to_string()];
    headers.extend(names.iter().map(|n| format!("q_{n}")));
    headers.extend(names.iter().map(|n| format!("p_{n}")));
    headers.push("E".to_string());
    headers.extend((1..=m).map(|i| format!("psi_{i}")));
    headers.extend((1..=m).map(|i| format!("lambda_{i}")));

    let mut rows = Vec::with_capacity(traj.len());
    for k in 0..traj.len() {
        let s = &traj.states[k];
        let mut row = vec![traj.times[k]];
        row.extend(ctx.model.to_display(s.q.as_slice()));
        row.extend(ctx.model.to_display(s.p.as_slice()));
        row.push(traj.energies[k]);
        row.extend(traj.residuals[k].iter().cloned());
        row.extend(traj.multipliers[k].iter().cloned());
        rows.push(row);
    }
    write_csv(&out_dir.join("trajectory.csv"), &headers, &rows)?;

    let warning = if traj.initial_residual > INITIAL_RESIDUAL_WARNING {
        Some(format!(
            "initial state violates the constraints (max |Psi| = {:.3e})",
            traj.initial_residual
        ))
    } else {
        None
    };
    let last = traj.len() - 1;
    let summary = SimulateSummary {
        model: cfg.model.clone(),
        dt: cfg.dt,
        steps: cfg.steps,
        projected: cfg.project,
        coordinates: names.to_vec(),
        initial_residual: traj.initial_residual,
        initial_residual_warning: warning,
        max_constraint_residual: traj.max_constraint_residual(),
        energy_drift: traj.energy_drift(),
        final_time: traj.times[last],
        final_q: ctx.model.to_display(traj.states[last].q.as_slice()),
        final_p: ctx.model.to_display(traj.states[last].p.as_slice()),
    };
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Verification output, also written to report.json. Worst points are in
/// display order.
#[derive(Debug, Clone, Serialize)]
pub struct VerifySummary {
    pub model: String,
    pub candidate: String,
    /// Which condition set ran: "nonholonomic" or "unconstrained".
    pub check: String,
    pub coordinates: Vec<String>,
    pub conditions: Vec<ConditionReport>,
    pub pass: bool,
}

/// Runs the configured candidate check and writes report.json into `out_dir`.
pub fn run_verify(cfg: &RunConfig, out_dir: &Path) -> Result<VerifySummary> {
    let ctx = build_context(cfg)?;
    let name = cfg
        .candidate
        .as_ref()
        .ok_or_else(|| Error::Config("verify needs a candidate name".into()))?;
    let candidate = ctx.model.candidate(name)?;
    let grid = build_grid(&ctx, cfg)?;

    let (kind, report) = if ctx.model.constraints().count() == 0 {
        (
            "unconstrained",
            check_unconstrained(&ctx.system, candidate, &grid, cfg.tolerance)?,
        )
    } else {
        (
            "nonholonomic",
            check_nonholonomic(
                &ctx.system,
                ctx.model.constraints(),
                candidate,
                &grid,
                None,
                cfg.tolerance,
            )?,
        )
    };

    let conditions: Vec<ConditionReport> = report
        .conditions
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.worst_point = ctx.model.to_display(&c.worst_point);
            c
        })
        .collect();
    let summary = VerifySummary {
        model: cfg.model.clone(),
        candidate: name.clone(),
        check: kind.to_string(),
        coordinates: ctx.model.display_names().to_vec(),
        conditions,
        pass: report.pass,
    };
    write_json(&out_dir.join("report.json"), &summary)?;
    Ok(summary)
}

/// Round-trip result for one named base field.
#[derive(Debug, Clone, Serialize)]
pub struct RoundTrip {
    pub field: String,
    pub roundtrip_error: f64,
    pub reduced_check_pass: bool,
}

/// Reduction output, also written to reduce.json.
#[derive(Debug, Clone, Serialize)]
pub struct ReduceSummary {
    pub model: String,
    pub base_coordinates: Vec<String>,
    pub fiber_reference: Vec<f64>,
    /// Base point at which the reduced metric sample below is taken.
    pub reduced_metric_point: Vec<f64>,
    pub reduced_metric: Vec<Vec<f64>>,
    /// Max |alpha*| over the base grid and a fixed velocity sample set.
    pub alpha_star_max: f64,
    /// Sup deviation between reduced and full dynamics from the default state.
    pub equivalence_deviation: f64,
    pub round_trips: Vec<RoundTrip>,
}

fn velocity_samples(b: usize) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(b + 2);
    for a in 0..b {
        let mut e = DVector::zeros(b);
        e[a] = 1.0;
        out.push(e);
    }
    out.push(DVector::from_element(b, 1.0));
    out.push(DVector::from_fn(
        b,
        |i, _| if i % 2 == 0 { 0.7 } else { -0.4 },
    ));
    out
}

/// Reduces the configured model and writes reduce.json into `out_dir`.
pub fn run_reduce(cfg: &RunConfig, out_dir: &Path) -> Result<ReduceSummary> {
    let ctx = build_context(cfg)?;
    let conn = ctx
        .model
        .connection()
        .ok_or_else(|| Error::Config(format!("model {} has no connection to reduce", cfg.model)))?;
    let red = reduce(&ctx.system, conn)?;
    let b = conn.base_dim();

    let grid = build_grid(&ctx, cfg)?;
    let base_grid = SampleGrid::new(grid.axes()[..b].to_vec())?;

    let mut alpha_max = 0.0f64;
    for base in base_grid.points() {
        for v in velocity_samples(b) {
            let alpha = red.force().alpha(red.system(), &base, &v)?;
            if !alpha.iter().all(|x| x.is_finite()) {
                return Err(Error::NumericalFailure(format!(
                    "non-finite gyroscopic force at {base:?}"
                )));
            }
            if !alpha.is_empty() {
                alpha_max = alpha_max.max(alpha.amax());
            }
        }
    }

    let s0 = ctx.model.default_state();
    let v0 = ctx.system.legendre_inv(s0)?;
    let deviation = equivalence_test(&ctx.system, conn, &v0, cfg.dt, cfg.steps)?;

    let mut round_trips = Vec::new();
    for (name, y) in ctx.model.reduced_fields() {
        let lifted = lift_field(conn, y);
        let (back, report) =
            project_hj_solution(&ctx.system, conn, &lifted, &base_grid, cfg.tolerance)?;
        let mut err = 0.0f64;
        for base in base_grid.points() {
            err = err.max((y.value(&base) - back.value(&base)).amax());
        }
        round_trips.push(RoundTrip {
            field: name.clone(),
            roundtrip_error: err,
            reduced_check_pass: report.pass,
        });
    }

    let metric_point: Vec<f64> = s0.q.as_slice()[..b].to_vec();
    let metric = red.system().metric(&metric_point)?;
    let metric_rows: Vec<Vec<f64>> = (0..b)
        .map(|r| (0..b).map(|c| metric[(r, c)]).collect())
        .collect();

    let summary = ReduceSummary {
        model: cfg.model.clone(),
        base_coordinates: ctx.model.system().chart().names()[..b].to_vec(),
        fiber_reference: red.fiber_ref().iter().cloned().collect(),
        reduced_metric_point: metric_point,
        reduced_metric: metric_rows,
        alpha_star_max: alpha_max,
        equivalence_deviation: deviation,
        round_trips,
    };
    write_json(&out_dir.join("reduce.json"), &summary)?;
    Ok(summary)
}
