//! Ground-truth evaluation of policies on the sampled β-indexed systems.

use nalgebra::{DVector, Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ode::{rk4_driven, PolicyTable, TimeGrid};
use crate::systems::{omega_x, omega_y};

pub const DEFAULT_BETA_COUNT: usize = 101;

#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub beta_samples: Vec<f64>,
    pub grid: TimeGrid,
    /// `states[j][i]` is the state of sample `j` at node `i`.
    pub states: Vec<Vec<DVector<f64>>>,
}

impl EnsembleRun {
    pub fn beta_count(&self) -> usize {
        self.beta_samples.len()
    }

    pub fn final_states(&self) -> Vec<&DVector<f64>> {
        self.states
            .iter()
            .map(|s| s.last().expect("non-empty grid"))
            .collect()
    }

    /// Trapezoid average over the sampled interval of `f(state)` at node `i`.
    pub fn beta_average(&self, i: usize, f: impl Fn(&DVector<f64>) -> f64) -> f64 {
        let values: Vec<f64> = self.states.iter().map(|s| f(&s[i])).collect();
        trapezoid_mean(&values)
    }

    /// Trapezoid integral over β (not normalized) of `f(state)` at node `i`.
    pub fn beta_integral(&self, i: usize, f: impl Fn(&DVector<f64>) -> f64) -> f64 {
        let width = self.beta_samples[self.beta_count() - 1] - self.beta_samples[0];
        self.beta_average(i, f) * width
    }

    /// `max_{β,t} | |x(t, β)| - 1 |`.
    pub fn max_norm_drift(&self) -> f64 {
        self.states
            .iter()
            .flatten()
            .map(|x| (x.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Mean of uniformly spaced samples under trapezoid weights.
fn trapezoid_mean(values: &[f64]) -> f64 {
    let n = values.len();
    let inner: f64 = values[1..n - 1].iter().sum();
    (inner + 0.5 * (values[0] + values[n - 1])) / (n - 1) as f64
}

/// `count` equally spaced points covering `[lo, hi]`.
pub fn uniform_samples(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|j| {
            if j + 1 == count {
                hi
            } else {
                lo + (hi - lo) * j as f64 / (count - 1) as f64
            }
        })
        .collect()
}

fn check_policy(policy: &PolicyTable, grid: &TimeGrid, control_dim: usize) -> Result<()> {
    if policy.grid() != grid {
        return Err(Error::invalid(
            "policy",
            "grid differs from simulation grid",
        ));
    }
    if policy.control_dim() != control_dim {
        return Err(Error::LengthMismatch {
            expected: control_dim,
            actual: policy.control_dim(),
        });
    }
    Ok(())
}

fn sweep<F>(
    betas: &[f64],
    policy: &PolicyTable,
    x0: &DVector<f64>,
    f: F,
) -> Result<Vec<Vec<DVector<f64>>>>
where
    F: Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Sync,
{
    betas
        .par_iter()
        .map(|&beta| rk4_driven(|x, u| f(beta, x, u), policy, x0, "ensemble sweep"))
        .collect()
}

/// `dx/dt = βx + u(t)`, `x(0) = 1`, for `β` on a uniform grid over `[-1, 1]`.
pub fn simulate_linear_ensemble(
    policy: &PolicyTable,
    beta_count: usize,
    grid: &TimeGrid,
) -> Result<EnsembleRun> {
    if beta_count < 2 {
        return Err(Error::invalid(
            "beta_count",
            format!("{beta_count} is below 2"),
        ));
    }
    check_policy(policy, grid, 1)?;
    let betas = uniform_samples(-1.0, 1.0, beta_count);
    let x0 = DVector::from_element(1, 1.0);
    let states = sweep(&betas, policy, &x0, |beta, x, u| x * beta + u)?;
    Ok(EnsembleRun {
        beta_samples: betas,
        grid: *grid,
        states,
    })
}

/// `dx/dt = β(u Ω_y + v Ω_x) x` from `(0, 0, 1)` for `β` on a uniform grid
/// over `[1 - δ, 1 + δ]`. The policy carries `(u, v)` in that order.
pub fn simulate_bloch_ensemble(
    policy: &PolicyTable,
    delta: f64,
    beta_count: usize,
    grid: &TimeGrid,
) -> Result<EnsembleRun> {
    if beta_count < 2 {
        return Err(Error::invalid(
            "beta_count",
            format!("{beta_count} is below 2"),
        ));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(
            "delta",
            format!("{delta} is outside (0, 1)"),
        ));
    }
    check_policy(policy, grid, 2)?;
    let (wx, wy): (Matrix3<f64>, Matrix3<f64>) = (omega_x(), omega_y());
    let betas = uniform_samples(1.0 - delta, 1.0 + delta, beta_count);
    let x0 = DVector::from_column_slice(&[0.0, 0.0, 1.0]);
    let states = sweep(&betas, policy, &x0, |beta, x, c| {
        let gen = (wy * c[0] + wx * c[1]) * beta;
        let dx: Vector3<f64> = gen * Vector3::new(x[0], x[1], x[2]);
        DVector::from_column_slice(dx.as_slice())
    })?;
    Ok(EnsembleRun {
        beta_samples: betas,
        grid: *grid,
        states,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationMetrics {
    pub mean_x1_final: f64,
    pub min_x1_final: f64,
    /// `(β, x(T, β))` per sample.
    pub per_beta: Vec<(f64, [f64; 3])>,
    /// `(t, mean x₁)` per node.
    pub mean_x1_vs_time: Vec<(f64, f64)>,
}

pub fn excitation_metrics(run: &EnsembleRun) -> Result<ExcitationMetrics> {
    if run.states.first().is_none_or(|s| s[0].len() != 3) {
        return Err(Error::invalid("run", "not a Bloch ensemble"));
    }
    let last = run.grid.steps();
    let per_beta: Vec<(f64, [f64; 3])> = run
        .beta_samples
        .iter()
        .zip(&run.states)
        .map(|(&b, s)| (b, [s[last][0], s[last][1], s[last][2]]))
        .collect();
    let mean_x1_vs_time = (0..run.grid.len())
        .map(|i| (run.grid.node(i), run.beta_average(i, |x| x[0])))
        .collect::<Vec<_>>();
    Ok(ExcitationMetrics {
        mean_x1_final: mean_x1_vs_time[last].1,
        min_x1_final: per_beta
            .iter()
            .map(|(_, x)| x[0])
            .fold(f64::INFINITY, f64::min),
        per_beta,
        mean_x1_vs_time,
    })
}

/// `∫₀ᵀ ∫ (x² + u²) dβ dt + ∫ x(T)² dβ` for a linear ensemble run, trapezoid
/// in both variables.
pub fn linear_ensemble_reward(run: &EnsembleRun, policy: &PolicyTable) -> f64 {
    let width = run.beta_samples[run.beta_count() - 1] - run.beta_samples[0];
    let running: Vec<f64> = (0..run.grid.len())
        .map(|i| {
            let u = policy.control(i)[0];
            run.beta_integral(i, |x| x[0] * x[0]) + width * u * u
        })
        .collect();
    let h = run.grid.step_size();
    let n = running.len();
    let inner: f64 = running[1..n - 1].iter().sum();
    h * (inner + 0.5 * (running[0] + running[n - 1]))
        + run.beta_integral(run.grid.steps(), |x| x[0] * x[0])
}
