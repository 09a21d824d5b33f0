//! Uniform time grids, trajectories and policies sampled on them, and the
//! fixed-step RK4 integrators used for rollouts and backward passes.
//!
//! Values between grid nodes are linear interpolants, so at an RK4 half-step
//! the state or control is the average of the two neighboring nodes.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::moment::MomentVector;
use crate::systems::SystemModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    t_final: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_final: f64, steps: usize) -> Result<Self> {
        if !(t0.is_finite() && t_final.is_finite()) || !(t_final > t0) {
            return Err(Error::invalid(
                "time grid",
                format!("need finite t0 < T, got [{t0}, {t_final}]"),
            ));
        }
        if steps == 0 {
            return Err(Error::invalid("steps", "must be at least 1"));
        }
        Ok(Self { t0, t_final, steps })
    }

    /// 200 steps on `[0, 1]`.
    pub fn unit() -> Self {
        Self {
            t0: 0.0,
            t_final: 1.0,
            steps: 200,
        }
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step_size(&self) -> f64 {
        (self.t_final - self.t0) / self.steps as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.steps {
            self.t_final
        } else {
            self.t0 + i as f64 * self.step_size()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Interval index and fractional position of `t`, clamped to the grid.
    fn locate(&self, t: f64) -> (usize, f64) {
        let s = ((t - self.t0) / self.step_size()).clamp(0.0, self.steps as f64);
        let i = (s.floor() as usize).min(self.steps - 1);
        (i, s - i as f64)
    }
}

fn lerp(a: &DVector<f64>, b: &DVector<f64>, theta: f64) -> DVector<f64> {
    a * (1.0 - theta) + b * theta
}

fn midpoint(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    (a + b) * 0.5
}

/// Moment state at every node of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    block_dim: usize,
    states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, block_dim: usize, states: Vec<DVector<f64>>) -> Result<Self> {
        if states.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                actual: states.len(),
            });
        }
        if let Some(node) = states.iter().position(|s| s.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite {
                stage: "trajectory",
                node,
            });
        }
        Ok(Self {
            grid,
            block_dim,
            states,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &DVector<f64> {
        &self.states[i]
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("grid has at least two nodes")
    }

    pub fn moment(&self, i: usize) -> MomentVector {
        let order = self.states[i].len() / self.block_dim - 1;
        MomentVector::new(order, self.block_dim, self.states[i].clone())
            .expect("trajectory states are finite")
    }

    pub fn interpolate(&self, t: f64) -> DVector<f64> {
        let (i, theta) = self.grid.locate(t);
        lerp(&self.states[i], &self.states[i + 1], theta)
    }
}

/// Piecewise-linear control signal sampled at grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    grid: TimeGrid,
    controls: Vec<DVector<f64>>,
}

impl PolicyTable {
    pub fn new(grid: TimeGrid, controls: Vec<DVector<f64>>) -> Result<Self> {
        if controls.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                actual: controls.len(),
            });
        }
        let r = controls[0].len();
        if let Some(bad) = controls.iter().find(|c| c.len() != r) {
            return Err(Error::LengthMismatch {
                expected: r,
                actual: bad.len(),
            });
        }
        if let Some(node) = controls
            .iter()
            .position(|c| c.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite {
                stage: "policy",
                node,
            });
        }
        Ok(Self { grid, controls })
    }

    pub fn zeros(grid: TimeGrid, control_dim: usize) -> Self {
        Self {
            grid,
            controls: vec![DVector::zeros(control_dim); grid.len()],
        }
    }

    pub fn constant(grid: TimeGrid, value: &[f64]) -> Self {
        Self {
            grid,
            controls: vec![DVector::from_column_slice(value); grid.len()],
        }
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> Vec<f64>) -> Self {
        Self {
            grid,
            controls: grid
                .nodes()
                .into_iter()
                .map(|t| DVector::from_vec(f(t)))
                .collect(),
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn control_dim(&self) -> usize {
        self.controls[0].len()
    }

    pub fn controls(&self) -> &[DVector<f64>] {
        &self.controls
    }

    pub fn control(&self, i: usize) -> &DVector<f64> {
        &self.controls[i]
    }

    pub fn at(&self, t: f64) -> DVector<f64> {
        let (i, theta) = self.grid.locate(t);
        lerp(&self.controls[i], &self.controls[i + 1], theta)
    }

    /// Largest node-wise Euclidean distance to `other`.
    pub fn max_distance(&self, other: &PolicyTable) -> f64 {
        self.controls
            .iter()
            .zip(&other.controls)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// One classical RK4 step of `dy/dt = f(t, y)`; `f` sees the time offsets
/// `0`, `h/2`, `h/2`, `h` from the start of the step.
pub fn rk4_step<F>(f: F, y: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let k1 = f(0.0, y);
    let k2 = f(0.5 * h, &(y + &k1 * (0.5 * h)));
    let k3 = f(0.5 * h, &(y + &k2 * (0.5 * h)));
    let k4 = f(h, &(y + &k3 * h));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Integrates `dy/dt = f(y, c(t))` over `grid` where the piecewise-linear
/// signal `c` is given by `signal`. Returns one state per node.
pub fn rk4_driven<F>(
    f: F,
    signal: &PolicyTable,
    y0: &DVector<f64>,
    stage: &'static str,
) -> Result<Vec<DVector<f64>>>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
{
    let grid = signal.grid();
    let h = grid.step_size();
    let mut states = Vec::with_capacity(grid.len());
    let mut y = y0.clone();
    states.push(y.clone());
    for i in 0..grid.steps() {
        let c0 = signal.control(i);
        let c1 = signal.control(i + 1);
        let ch = midpoint(c0, c1);
        y = rk4_step(
            |dt, yy| {
                if dt == 0.0 {
                    f(yy, c0)
                } else if dt < h {
                    f(yy, &ch)
                } else {
                    f(yy, c1)
                }
            },
            &y,
            h,
        );
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { stage, node: i + 1 });
        }
        states.push(y.clone());
    }
    Ok(states)
}

/// Rolls `m0` forward under `policy` with classical RK4.
pub fn rk4_forward<M: SystemModel + ?Sized>(
    model: &M,
    policy: &PolicyTable,
    m0: &MomentVector,
    grid: &TimeGrid,
) -> Result<Trajectory> {
    if policy.grid() != grid {
        return Err(Error::invalid(
            "policy",
            "grid differs from integration grid",
        ));
    }
    if m0.len() != model.state_dim() {
        return Err(Error::LengthMismatch {
            expected: model.state_dim(),
            actual: m0.len(),
        });
    }
    if policy.control_dim() != model.control_dim() {
        return Err(Error::LengthMismatch {
            expected: model.control_dim(),
            actual: policy.control_dim(),
        });
    }
    let states = rk4_driven(
        |m, u| model.vector_field(m, u),
        policy,
        m0.values(),
        "forward rollout",
    )?;
    Trajectory::new(*grid, model.block_dim(), states)
}

/// `(δV, DV, D²V)` at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueDerivatives {
    pub delta_v: f64,
    pub dv: DVector<f64>,
    pub d2v: DMatrix<f64>,
}

impl ValueDerivatives {
    fn axpy(&self, c: f64, k: &ValueDerivatives) -> ValueDerivatives {
        ValueDerivatives {
            delta_v: self.delta_v + c * k.delta_v,
            dv: &self.dv + &k.dv * c,
            d2v: &self.d2v + &k.d2v * c,
        }
    }

    fn is_finite(&self) -> bool {
        self.delta_v.is_finite()
            && self.dv.iter().all(|v| v.is_finite())
            && self.d2v.iter().all(|v| v.is_finite())
    }
}

/// Value-function variation and derivatives at every grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardPassResult {
    grid: TimeGrid,
    nodes: Vec<ValueDerivatives>,
}

impl BackwardPassResult {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn nodes(&self) -> &[ValueDerivatives] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &ValueDerivatives {
        &self.nodes[i]
    }

    pub fn delta_v(&self, i: usize) -> f64 {
        self.nodes[i].delta_v
    }

    pub fn dv(&self, i: usize) -> &DVector<f64> {
        &self.nodes[i].dv
    }

    pub fn d2v(&self, i: usize) -> &DMatrix<f64> {
        &self.nodes[i].d2v
    }

    /// `max_t |δV(t)|` over grid nodes.
    pub fn delta_v_sup(&self) -> f64 {
        self.nodes
            .iter()
            .map(|n| n.delta_v.abs())
            .fold(0.0, f64::max)
    }
}

/// Integrates the coupled `(δV, DV, D²V)` system from `T` down to `t0`.
///
/// `rhs(m, u, y)` returns `dy/dt` at nominal state `m` and control `u`.
/// `D²V` is symmetrized after every step.
pub fn rk4_backward<F>(
    mut rhs: F,
    terminal: ValueDerivatives,
    trajectory: &Trajectory,
    policy: &PolicyTable,
) -> Result<BackwardPassResult>
where
    F: FnMut(&DVector<f64>, &DVector<f64>, &ValueDerivatives) -> Result<ValueDerivatives>,
{
    let grid = *trajectory.grid();
    if policy.grid() != &grid {
        return Err(Error::invalid(
            "policy",
            "grid differs from trajectory grid",
        ));
    }
    let h = grid.step_size();
    let steps = grid.steps();
    let mut nodes = vec![terminal.clone(); grid.len()];
    let mut y = terminal;
    for k in (1..=steps).rev() {
        let (m1, m0) = (trajectory.state(k), trajectory.state(k - 1));
        let (u1, u0) = (policy.control(k), policy.control(k - 1));
        let mh = midpoint(m0, m1);
        let uh = midpoint(u0, u1);

        let k1 = rhs(m1, u1, &y)?;
        let k2 = rhs(&mh, &uh, &y.axpy(-0.5 * h, &k1))?;
        let k3 = rhs(&mh, &uh, &y.axpy(-0.5 * h, &k2))?;
        let k4 = rhs(m0, u0, &y.axpy(-h, &k3))?;

        let mut next = y
            .axpy(-h / 6.0, &k1)
            .axpy(-h / 3.0, &k2)
            .axpy(-h / 3.0, &k3)
            .axpy(-h / 6.0, &k4);
        let sym = (&next.d2v + next.d2v.transpose()) * 0.5;
        next.d2v = sym;
        if !next.is_finite() {
            return Err(Error::NonFinite {
                stage: "backward pass",
                node: k - 1,
            });
        }
        nodes[k - 1] = next.clone();
        y = next;
    }
    Ok(BackwardPassResult { grid, nodes })
}

fn running_rewards<M: SystemModel + ?Sized>(
    model: &M,
    trajectory: &Trajectory,
    policy: &PolicyTable,
) -> Vec<f64> {
    trajectory
        .states()
        .iter()
        .zip(policy.controls())
        .map(|(m, u)| model.running_reward(m, u))
        .collect()
}

/// Composite trapezoid of the running reward plus the terminal reward.
pub fn cumulative_reward<M: SystemModel + ?Sized>(
    model: &M,
    trajectory: &Trajectory,
    policy: &PolicyTable,
) -> f64 {
    let r = running_rewards(model, trajectory, policy);
    let h = trajectory.grid().step_size();
    let inner: f64 = r[1..r.len() - 1].iter().sum();
    h * (inner + 0.5 * (r[0] + r[r.len() - 1])) + model.terminal_reward(trajectory.final_state())
}

/// Cost-to-go at every node: reverse cumulative trapezoid of the running
/// reward plus the terminal reward.
pub fn reward_to_go<M: SystemModel + ?Sized>(
    model: &M,
    trajectory: &Trajectory,
    policy: &PolicyTable,
) -> Vec<f64> {
    let r = running_rewards(model, trajectory, policy);
    let h = trajectory.grid().step_size();
    let n = r.len();
    let mut v = vec![0.0; n];
    v[n - 1] = model.terminal_reward(trajectory.final_state());
    for i in (0..n - 1).rev() {
        v[i] = v[i + 1] + 0.5 * h * (r[i] + r[i + 1]);
    }
    v
}
