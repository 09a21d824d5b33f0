//! Second-order (DDP-style) policy search in continuous time.
//!
//! Each iteration rolls the current policy out, integrates the value variation
//! `δV`, gradient `DV` and Hessian `D²V` backward along the nominal
//! trajectory, and replaces the policy by the node-wise Hamiltonian minimizer
//! evaluated at the nominal state and the recovered `DV`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::moment::MomentVector;
pub use crate::ode::BackwardPassResult;
use crate::ode::{
    cumulative_reward, rk4_backward, rk4_forward, PolicyTable, Trajectory, ValueDerivatives,
};
use crate::systems::SystemModel;

pub const DEFAULT_HESSIAN_FLOOR: f64 = 1e-10;

/// When the inner loop stops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StoppingRule {
    /// Keep iterating while `sup_t |δV| ≤ η`; leave the hierarchy as soon as an
    /// iteration reports a larger variation, or after `max_iters` iterations.
    EarlyStop,
    /// Conventional convergence test: stop once `sup_t |δV| ≤ tol`.
    Converged { tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub eta: f64,
    pub max_iters: usize,
    pub hessian_floor: f64,
    /// Fraction of the improvement step applied, in `(0, 1]`.
    pub damping: f64,
    pub stopping: StoppingRule,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            eta: 1.0,
            max_iters: 50,
            hessian_floor: DEFAULT_HESSIAN_FLOOR,
            damping: 1.0,
            stopping: StoppingRule::EarlyStop,
        }
    }
}

impl SearchConfig {
    pub fn new(eta: f64, max_iters: usize) -> Result<Self> {
        let cfg = Self {
            eta,
            max_iters,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(Error::invalid("eta", format!("{} is not > 0", self.eta)));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters", "must be at least 1"));
        }
        if !(self.hessian_floor >= 0.0) {
            return Err(Error::invalid("hessian_floor", "must be >= 0"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::invalid(
                "damping",
                format!("{} is outside (0, 1]", self.damping),
            ));
        }
        if let StoppingRule::Converged { tol } = self.stopping {
            if !(tol >= 0.0) {
                return Err(Error::invalid("tol", "must be >= 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationLog {
    /// Cost of the nominal policy the iteration started from.
    pub nominal_cost: f64,
    /// Cost of the policy the iteration produced.
    pub cost: f64,
    pub delta_v_sup: f64,
    pub control_update_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    VariationExceeded,
    Converged,
    IterationCap,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub policy: PolicyTable,
    pub trajectory: Trajectory,
    pub cost: f64,
    pub log: Vec<IterationLog>,
    pub stop_reason: StopReason,
}

impl SearchOutcome {
    pub fn iterations(&self) -> usize {
        self.log.len()
    }
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    m.clone().symmetric_eigenvalues().min()
}

/// Time derivative of `(δV, DV, D²V)` at nominal `(m, u)`.
pub fn value_derivative_rhs<M: SystemModel + ?Sized>(
    model: &M,
    m: &DVector<f64>,
    u: &DVector<f64>,
    y: &ValueDerivatives,
    hessian_floor: f64,
) -> Result<ValueDerivatives> {
    let p = &y.dv;
    let s = &y.d2v;
    let u_min = model.argmin_hamiltonian(m, p);

    let delta_v = model.hamiltonian(m, u, p) - model.hamiltonian(m, &u_min, p);

    let dh = model.hamiltonian_state_gradient(m, &u_min, p);
    let flow_gap = model.vector_field(m, &u_min) - model.vector_field(m, u);
    let dv = -dh - s * flow_gap;

    let huu = model.hamiltonian_control_hessian(m, &u_min, p);
    let lambda = min_eigenvalue(&huu);
    if !(lambda >= hessian_floor) || lambda <= 0.0 {
        return Err(Error::HamiltonianNotConvex {
            min_eigenvalue: lambda,
            floor: hessian_floor,
        });
    }
    // r × n coupling  ∂DH/∂u + (∂F/∂u)ᵀ D²V
    let coupling = model.hamiltonian_mixed_derivative(m, &u_min, p)
        + model.control_jacobian(m, &u_min).tr_mul(s);
    let gain = huu
        .cholesky()
        .ok_or(Error::Singular {
            context: "control Hessian of the Hamiltonian",
        })?
        .solve(&coupling);
    let df = model.state_jacobian(m, &u_min);
    let df_t_s = df.tr_mul(s);
    let d2v = coupling.tr_mul(&gain)
        - model.hamiltonian_state_hessian(m, &u_min, p)
        - &df_t_s
        - df_t_s.transpose();

    Ok(ValueDerivatives { delta_v, dv, d2v })
}

pub fn backward_pass<M: SystemModel + ?Sized>(
    model: &M,
    trajectory: &Trajectory,
    policy: &PolicyTable,
    hessian_floor: f64,
) -> Result<BackwardPassResult> {
    let m_t = trajectory.final_state();
    let terminal = ValueDerivatives {
        delta_v: 0.0,
        dv: model.terminal_gradient(m_t),
        d2v: model.terminal_hessian(m_t),
    };
    rk4_backward(
        |m, u, y| value_derivative_rhs(model, m, u, y, hessian_floor),
        terminal,
        trajectory,
        policy,
    )
}

/// Node-wise Hamiltonian minimizer at the nominal state and recovered `DV`.
pub fn improve_policy<M: SystemModel + ?Sized>(
    model: &M,
    trajectory: &Trajectory,
    bp: &BackwardPassResult,
) -> Result<PolicyTable> {
    if bp.grid() != trajectory.grid() {
        return Err(Error::invalid(
            "backward pass",
            "grid differs from trajectory grid",
        ));
    }
    let controls = trajectory
        .states()
        .iter()
        .zip(bp.nodes())
        .map(|(m, y)| model.argmin_hamiltonian(m, &y.dv))
        .collect();
    PolicyTable::new(*trajectory.grid(), controls)
}

/// Iterates rollout, backward pass and policy improvement from `u0`.
///
/// The returned policy is the one produced by the last completed iteration,
/// together with its rollout and cost.
pub fn policy_search<M: SystemModel + ?Sized>(
    model: &M,
    u0: &PolicyTable,
    m0: &MomentVector,
    config: &SearchConfig,
) -> Result<SearchOutcome> {
    config.validate()?;
    let grid = *u0.grid();
    let mut policy = u0.clone();
    let mut trajectory = rk4_forward(model, &policy, m0, &grid)?;
    let mut cost = cumulative_reward(model, &trajectory, &policy);
    let mut log = Vec::new();
    let mut stop_reason = StopReason::IterationCap;

    for _ in 0..config.max_iters {
        let bp = backward_pass(model, &trajectory, &policy, config.hessian_floor)?;
        let improved = improve_policy(model, &trajectory, &bp)?;
        let next = if config.damping == 1.0 {
            improved
        } else {
            let controls = policy
                .controls()
                .iter()
                .zip(improved.controls())
                .map(|(old, new)| old + (new - old) * config.damping)
                .collect();
            PolicyTable::new(grid, controls)?
        };
        let update = next.max_distance(&policy);
        let delta_v_sup = bp.delta_v_sup();

        let nominal_cost = cost;
        policy = next;
        trajectory = rk4_forward(model, &policy, m0, &grid)?;
        cost = cumulative_reward(model, &trajectory, &policy);
        log.push(IterationLog {
            nominal_cost,
            cost,
            delta_v_sup,
            control_update_norm: update,
        });

        match config.stopping {
            StoppingRule::EarlyStop if delta_v_sup > config.eta => {
                stop_reason = StopReason::VariationExceeded;
                break;
            }
            StoppingRule::Converged { tol } if delta_v_sup <= tol => {
                stop_reason = StopReason::Converged;
                break;
            }
            _ => {}
        }
    }

    Ok(SearchOutcome {
        policy,
        trajectory,
        cost,
        log,
        stop_reason,
    })
}
