//! Filtrated outer loop: a chain of truncated problems of increasing order,
//! each warm-started from the previous hierarchy's policy.

use std::time::Instant;

use crate::ddp::{policy_search, SearchConfig, SearchOutcome};
use crate::error::{Error, Result};
use crate::ode::{reward_to_go, PolicyTable, TimeGrid, Trajectory};
use crate::systems::{BlochMomentModel, LqrMomentModel, SystemModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Problem {
    /// `dx/dt = β x + u`, `β ∈ [-1, 1]`, from `x0 ≡ 1`.
    Lqr,
    /// Bloch ensemble with rf inhomogeneity `δ`, from `(0, 0, 1)` toward `(1, 0, 0)`.
    Bloch { delta: f64 },
}

impl Problem {
    pub fn control_dim(&self) -> usize {
        match self {
            Problem::Lqr => 1,
            Problem::Bloch { .. } => 2,
        }
    }

    pub fn build(&self, order: usize, exact_row0: bool) -> Result<Box<dyn SystemModel>> {
        Ok(match *self {
            Problem::Lqr => Box::new(LqrMomentModel::new(order, exact_row0)),
            Problem::Bloch { delta } => Box::new(BlochMomentModel::new(order, delta, exact_row0)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrlConfig {
    pub n0: usize,
    pub n_max: usize,
    /// Explicit increasing orders; when set, `n0`/`n_max` are ignored.
    pub orders: Option<Vec<usize>>,
    pub epsilon: f64,
    pub search: SearchConfig,
    pub grid: TimeGrid,
    pub problem: Problem,
    pub exact_row0: bool,
}

impl FrlConfig {
    pub fn new(problem: Problem, n0: usize, n_max: usize, epsilon: f64) -> Self {
        Self {
            n0,
            n_max,
            orders: None,
            epsilon,
            search: SearchConfig::default(),
            grid: TimeGrid::unit(),
            problem,
            exact_row0: false,
        }
    }

    pub fn schedule(&self) -> Vec<usize> {
        match &self.orders {
            Some(orders) => orders.clone(),
            None => (self.n0..=self.n_max).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid(
                "epsilon",
                format!("{} is not > 0", self.epsilon),
            ));
        }
        match &self.orders {
            Some(orders) => {
                if orders.is_empty() {
                    return Err(Error::invalid("orders", "empty schedule"));
                }
                if orders.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::invalid("orders", "must be strictly increasing"));
                }
            }
            None => {
                if self.n0 > self.n_max {
                    return Err(Error::invalid(
                        "N0",
                        format!("{} exceeds Nmax {}", self.n0, self.n_max),
                    ));
                }
            }
        }
        if let Problem::Bloch { delta } = self.problem {
            if !(delta > 0.0 && delta < 1.0) {
                return Err(Error::invalid(
                    "delta",
                    format!("{delta} is outside (0, 1)"),
                ));
            }
        }
        self.search.validate()
    }
}

#[derive(Debug, Clone)]
pub struct HierarchyReport {
    pub order: usize,
    pub iterations: usize,
    /// `V̂_N(0, m̂_N(0))` of the returned policy.
    pub cost: f64,
    /// Sup-norm gap to the previous hierarchy's value profile. The first
    /// hierarchy is compared against the zero profile.
    pub projection_error: f64,
    pub wall_time_s: f64,
    pub policy: PolicyTable,
    pub trajectory: Trajectory,
    pub value_profile: Vec<f64>,
    pub search: SearchOutcome,
}

#[derive(Debug, Clone)]
pub struct FrlRun {
    pub reports: Vec<HierarchyReport>,
    /// Whether a projection error at or below `epsilon` ended the run.
    pub converged: bool,
}

impl FrlRun {
    pub fn final_report(&self) -> &HierarchyReport {
        self.reports.last().expect("at least one hierarchy")
    }

    pub fn final_policy(&self) -> &PolicyTable {
        &self.final_report().policy
    }

    pub fn costs(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.cost).collect()
    }
}

/// `V̂_N(t, m̂_N(t))` at every node along `trajectory`.
pub fn value_profile<M: SystemModel + ?Sized>(
    model: &M,
    trajectory: &Trajectory,
    policy: &PolicyTable,
) -> Vec<f64> {
    reward_to_go(model, trajectory, policy)
}

fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn run_frl(config: &FrlConfig) -> Result<FrlRun> {
    config.validate()?;
    let mut policy = PolicyTable::zeros(config.grid, config.problem.control_dim());
    let mut reports: Vec<HierarchyReport> = Vec::new();
    let mut converged = false;

    for order in config.schedule() {
        let started = Instant::now();
        let model = config.problem.build(order, config.exact_row0)?;
        let outcome = policy_search(
            model.as_ref(),
            &policy,
            model.initial_moments(),
            &config.search,
        )?;
        let profile = value_profile(model.as_ref(), &outcome.trajectory, &outcome.policy);
        let projection_error = match reports.last() {
            Some(prev) => sup_gap(&profile, &prev.value_profile),
            None => profile.iter().map(|v| v.abs()).fold(0.0, f64::max),
        };
        let compare = !reports.is_empty();
        policy = outcome.policy.clone();
        reports.push(HierarchyReport {
            order,
            iterations: outcome.iterations(),
            cost: outcome.cost,
            projection_error,
            wall_time_s: started.elapsed().as_secs_f64(),
            policy: outcome.policy.clone(),
            trajectory: outcome.trajectory.clone(),
            value_profile: profile,
            search: outcome,
        });
        if compare && projection_error <= config.epsilon {
            converged = true;
            break;
        }
    }
    Ok(FrlRun { reports, converged })
}
