use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};

type StateFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;

/// Named per-sample diagnostic recorded alongside an integrated trajectory.
#[derive(Clone)]
pub struct Observer {
    pub name: String,
    eval: StateFn,
}

impl Observer {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Observer {
            name: name.into(),
            eval: Arc::new(f),
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        (self.eval)(x)
    }
}

/// Uniformly sampled solution of an autonomous ODE, including the initial
/// state, with one diagnostic series per observer.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub observations: Vec<(String, Vec<f64>)>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states
            .last()
            .expect("trajectory holds at least the initial state")
    }

    pub fn observation(&self, name: &str) -> Option<&[f64]> {
        self.observations
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }
}

/// Classical fixed-step fourth-order Runge-Kutta for an autonomous state
/// derivative map. Sample k lives at time k*dt; the trajectory holds
/// steps + 1 samples starting with `x0`. Any non-finite stage or state stops
/// integration with [`Error::Divergence`] carrying the index of the last
/// finite sample.
pub fn rk4_integrate<F>(
    f: F,
    x0: DVector<f64>,
    dt: f64,
    steps: usize,
    observers: &[Observer],
) -> Result<Trajectory>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Config(format!(
            "time step must be positive, got {dt}"
        )));
    }
    if steps == 0 {
        return Err(Error::Config("step count must be at least 1".into()));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite initial state".into()));
    }

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut series: Vec<Vec<f64>> = observers
        .iter()
        .map(|_| Vec::with_capacity(steps + 1))
        .collect();

    let record = |x: &DVector<f64>, series: &mut Vec<Vec<f64>>| {
        for (obs, col) in observers.iter().zip(series.iter_mut()) {
            col.push(obs.value(x));
        }
    };

    let mut x = x0;
    times.push(0.0);
    record(&x, &mut series);
    states.push(x.clone());

    for k in 0..steps {
        let step = (|| -> Result<DVector<f64>> {
            let k1 = f(&x)?;
            let k2 = f(&(&x + &k1 * (dt / 2.0)))?;
            let k3 = f(&(&x + &k2 * (dt / 2.0)))?;
            let k4 = f(&(&x + &k3 * dt))?;
            Ok(&x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
        })();
        let next = match step {
            Ok(v) if v.iter().all(|c| c.is_finite()) => v,
            _ => return Err(Error::Divergence { last_valid: k }),
        };
        x = next;
        times.push((k + 1) as f64 * dt);
        record(&x, &mut series);
        states.push(x.clone());
    }

    let observations = observers
        .iter()
        .map(|o| o.name.clone())
        .zip(series)
        .collect();
    Ok(Trajectory {
        times,
        states,
        observations,
    })
}
