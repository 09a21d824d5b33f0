//! Independent linear-quadratic solvers used as ground truth, and the
//! sampled-ensemble versus moment-hierarchy convergence demonstrations.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::basis::basis_integrals;
use crate::error::{Error, Result};
use crate::ode::{rk4_step, PolicyTable, TimeGrid};
use crate::systems::LqrMomentModel;

const KLEINMAN_TOL: f64 = 1e-10;
const KLEINMAN_MAX_ITERS: usize = 100;

#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub grid: TimeGrid,
    /// `P(t)` at every node.
    pub p: Vec<DMatrix<f64>>,
    /// `K(t) = R⁻¹ Bᵀ P(t)` at every node.
    pub gains: Vec<DMatrix<f64>>,
}

impl RiccatiSolution {
    pub fn initial(&self) -> &DMatrix<f64> {
        &self.p[0]
    }

    /// `x0ᵀ P(t0) x0`.
    pub fn optimal_cost(&self, x0: &DVector<f64>) -> f64 {
        x0.dot(&(&self.p[0] * x0))
    }
}

fn check_dims(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<()> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::invalid("A", "must be square"));
    }
    if b.nrows() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: b.nrows(),
        });
    }
    if q.shape() != (n, n) {
        return Err(Error::invalid(
            "Q",
            format!("shape {:?} is not {n}x{n}", q.shape()),
        ));
    }
    let m = b.ncols();
    if r.shape() != (m, m) {
        return Err(Error::invalid(
            "R",
            format!("shape {:?} is not {m}x{m}", r.shape()),
        ));
    }
    Ok(())
}

/// `R⁻¹ Bᵀ`, failing unless `R` is positive definite.
fn r_inv_bt(b: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::invalid("R", "not positive definite"))?;
    Ok(chol.solve(&b.transpose()))
}

/// Backward RK4 on `-dP/dt = Q + AᵀP + PA - P B R⁻¹ Bᵀ P` from `P(T) = P_T`.
pub fn riccati_finite(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p_terminal: &DMatrix<f64>,
    grid: &TimeGrid,
) -> Result<RiccatiSolution> {
    check_dims(a, b, q, r)?;
    if p_terminal.shape() != a.shape() {
        return Err(Error::invalid("P_T", "shape differs from A"));
    }
    let rb = r_inv_bt(b, r)?;
    let s = b * &rb;
    // dP/dt as a function of P
    let rhs = |p: &DMatrix<f64>| -> DMatrix<f64> {
        let pa = p * a;
        -(q + pa.transpose() + &pa - p * &s * p)
    };
    let h = grid.step_size();
    let mut p = p_terminal.clone();
    let mut ps = vec![p.clone(); grid.len()];
    for k in (0..grid.steps()).rev() {
        let k1 = rhs(&p);
        let k2 = rhs(&(&p - &k1 * (0.5 * h)));
        let k3 = rhs(&(&p - &k2 * (0.5 * h)));
        let k4 = rhs(&(&p - &k3 * h));
        p = &p - (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        p = (&p + p.transpose()) * 0.5;
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                stage: "Riccati",
                node: k,
            });
        }
        ps[k] = p.clone();
    }
    let gains = ps.iter().map(|p| &rb * p).collect();
    Ok(RiccatiSolution {
        grid: *grid,
        p: ps,
        gains,
    })
}

/// Solves `Acᵀ P + P Ac = -W` through the vectorized `n² × n²` system.
pub fn solve_lyapunov(ac: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = ac.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let act = ac.transpose();
    let op = eye.kronecker(&act) + act.kronecker(&eye);
    let rhs = DVector::from_column_slice((-w).as_slice());
    let x = op.lu().solve(&rhs).ok_or(Error::Singular {
        context: "Lyapunov operator",
    })?;
    let p = DMatrix::from_column_slice(n, n, x.as_slice());
    Ok((&p + p.transpose()) * 0.5)
}

#[derive(Debug, Clone)]
pub struct KleinmanSolution {
    pub p: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    /// `P_j` after every Lyapunov solve.
    pub iterates: Vec<DMatrix<f64>>,
}

impl KleinmanSolution {
    /// `‖ρP - Q - AᵀP - PA + P B R⁻¹ Bᵀ P‖_max`.
    pub fn residual(
        &self,
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        q: &DMatrix<f64>,
        r: &DMatrix<f64>,
        rho: f64,
    ) -> f64 {
        let p = &self.p;
        let rb = r_inv_bt(b, r).expect("R validated by the solver");
        let res = p * rho - q - a.transpose() * p - p * a + p * b * rb * p;
        res.amax()
    }
}

/// Lyapunov test: `M` is Hurwitz exactly when `MᵀP + PM = -I` has a
/// positive definite solution.
fn is_hurwitz(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    match solve_lyapunov(m, &DMatrix::identity(n, n)) {
        Ok(p) => p.iter().all(|v| v.is_finite()) && p.cholesky().is_some(),
        Err(_) => false,
    }
}

/// Discounted continuous-time LQR: `ρP = Q + AᵀP + PA - P B R⁻¹ Bᵀ P`,
/// by policy iteration on the shifted drift `A - (ρ/2) I` from `K₀ = 0`.
pub fn kleinman_discounted(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    rho: f64,
) -> Result<KleinmanSolution> {
    let k0 = DMatrix::zeros(b.ncols(), a.nrows());
    kleinman_discounted_from(a, b, q, r, rho, &k0)
}

pub fn kleinman_discounted_from(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    rho: f64,
    k0: &DMatrix<f64>,
) -> Result<KleinmanSolution> {
    check_dims(a, b, q, r)?;
    if !rho.is_finite() || rho < 0.0 {
        return Err(Error::invalid(
            "rho",
            format!("{rho} is not a finite rate >= 0"),
        ));
    }
    let n = a.nrows();
    let rb = r_inv_bt(b, r)?;
    let shifted = a - DMatrix::identity(n, n) * (0.5 * rho);
    let mut k = k0.clone();
    if !is_hurwitz(&(&shifted - b * &k)) {
        return Err(Error::KleinmanDiverged {
            reason: "initial gain does not stabilize the shifted system".into(),
        });
    }
    let mut iterates: Vec<DMatrix<f64>> = Vec::new();
    for _ in 0..KLEINMAN_MAX_ITERS {
        let ac = &shifted - b * &k;
        let w = q + k.transpose() * r * &k;
        let p = solve_lyapunov(&ac, &w)?;
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::KleinmanDiverged {
                reason: "non-finite Lyapunov solution".into(),
            });
        }
        k = &rb * &p;
        let step = iterates.last().map(|prev| (&p - prev).amax());
        iterates.push(p);
        if let Some(step) = step {
            if step <= KLEINMAN_TOL {
                let p = iterates.last().unwrap().clone();
                return Ok(KleinmanSolution {
                    gain: &rb * &p,
                    p,
                    iterates,
                });
            }
        }
    }
    Err(Error::KleinmanDiverged {
        reason: format!("no convergence within {KLEINMAN_MAX_ITERS} iterations"),
    })
}

/// Horizon and discount shared by the infinite-horizon demonstrations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoSettings {
    pub rho: f64,
    pub horizon: f64,
    pub steps: usize,
}

impl Default for DemoSettings {
    fn default() -> Self {
        Self {
            rho: 2.5,
            horizon: 5.0,
            steps: 500,
        }
    }
}

/// One solved instance of a demonstration.
#[derive(Debug, Clone)]
pub struct DemoEntry {
    pub index: usize,
    pub value: f64,
    pub policy: PolicyTable,
    /// `x(t)ᵀ P x(t)` along the closed loop.
    pub value_profile: Vec<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub index: usize,
    pub value_diff: f64,
    pub policy_diff: f64,
    pub param_count: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub entries: Vec<DemoEntry>,
}

impl ConvergenceTable {
    pub fn row(&self, index: usize) -> Option<&ConvergenceRow> {
        self.rows.iter().find(|r| r.index == index)
    }
}

#[allow(clippy::too_many_arguments)]
fn solve_entry(
    index: usize,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    x0: &DVector<f64>,
    settings: &DemoSettings,
) -> Result<DemoEntry> {
    let started = Instant::now();
    let sol = kleinman_discounted(a, b, q, r, settings.rho)?;
    let grid = TimeGrid::new(0.0, settings.horizon, settings.steps)?;
    let closed = a - b * &sol.gain;
    let h = grid.step_size();
    let mut x = x0.clone();
    let mut controls = Vec::with_capacity(grid.len());
    let mut profile = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        controls.push(-(&sol.gain * &x));
        profile.push(x.dot(&(&sol.p * &x)));
        if i < grid.steps() {
            x = rk4_step(|_, y| &closed * y, &x, h);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    stage: "closed-loop simulation",
                    node: i + 1,
                });
            }
        }
    }
    let policy = PolicyTable::new(grid, controls)?;
    Ok(DemoEntry {
        index,
        value: x0.dot(&(&sol.p * x0)),
        policy,
        value_profile: profile,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

fn tabulate(entries: Vec<DemoEntry>, param_count: impl Fn(usize) -> usize) -> ConvergenceTable {
    let mut rows = Vec::with_capacity(entries.len());
    for (i, e) in entries.iter().enumerate() {
        // The first entry is compared against the zero value and policy.
        let (value_diff, policy_diff) = match i.checked_sub(1).map(|j| &entries[j]) {
            Some(prev) => (
                (e.value - prev.value).abs(),
                e.policy.max_distance(&prev.policy),
            ),
            None => (
                e.value.abs(),
                e.policy
                    .controls()
                    .iter()
                    .map(|c| c.norm())
                    .fold(0.0, f64::max),
            ),
        };
        rows.push(ConvergenceRow {
            index: e.index,
            value_diff,
            policy_diff,
            param_count: param_count(e.index),
            wall_time_s: e.wall_time_s,
        });
    }
    ConvergenceTable { rows, entries }
}

/// The `n`-agent sampled ensemble `dx_i/dt = a_i x_i + u`,
/// `a_i = -1 + 2(i - 1)/(n - 1)`, reward `e^{-ρt}(xᵀx/n + u²)`, from `x0 = 1`.
pub fn sampled_demo(n_range: &[usize], settings: &DemoSettings) -> Result<ConvergenceTable> {
    let mut entries = Vec::with_capacity(n_range.len());
    for &n in n_range {
        if n < 2 {
            return Err(Error::invalid("n_range", format!("{n} is below 2")));
        }
        let a = DMatrix::from_diagonal(&DVector::from_iterator(
            n,
            (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64),
        ));
        let b = DMatrix::from_element(n, 1, 1.0);
        let q = DMatrix::identity(n, n) / n as f64;
        let r = DMatrix::identity(1, 1);
        let x0 = DVector::from_element(n, 1.0);
        entries.push(solve_entry(n, &a, &b, &q, &r, &x0, settings)?);
    }
    Ok(tabulate(entries, |n| n * (n + 1) / 2))
}

/// Discounted LQR on order-`N` moment systems with `Q = I`, `R = 2`, from the
/// moments of `x0 ≡ 1`.
pub fn frl_infinite_demo(
    order_range: &[usize],
    settings: &DemoSettings,
    exact_row0: bool,
) -> Result<ConvergenceTable> {
    if order_range.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("N_range", "must be strictly increasing"));
    }
    let mut entries = Vec::with_capacity(order_range.len());
    for &order in order_range {
        let model = LqrMomentModel::new(order, exact_row0);
        let b = DMatrix::from_column_slice(order + 1, 1, model.input().as_slice());
        let x0 = basis_integrals(order);
        entries.push(solve_entry(
            order,
            model.drift(),
            &b,
            &model.state_weight(),
            &model.control_weight(),
            &x0,
            settings,
        )?);
    }
    Ok(tabulate(entries, |n| (n + 1) * (n + 2) / 2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    #[test]
    fn scalar_riccati_bounds() {
        let grid = TimeGrid::unit();
        let sol = riccati_finite(
            &scalar(0.0),
            &scalar(2.0),
            &scalar(1.0),
            &scalar(2.0),
            &scalar(1.0),
            &grid,
        )
        .unwrap();
        let p0 = sol.initial()[(0, 0)];
        assert!(p0 > 0.5f64.sqrt() && p0 < 1.0, "P(0) = {p0}");
        // dP/dt = 2(P² - c²) with c² = 1/2 gives P(t) = c·coth(2c(1 - t) + φ),
        // where coth φ = P(1)/c.
        let c = 0.5f64.sqrt();
        let phi = c.atanh();
        for (i, t) in grid.nodes().into_iter().enumerate() {
            let exact = c / (2.0 * c * (1.0 - t) + phi).tanh();
            assert_abs_diff_eq!(sol.p[i][(0, 0)], exact, epsilon = 1e-10);
        }
        assert_eq!(sol.p[grid.steps()][(0, 0)], 1.0);
    }

    #[test]
    fn zero_weights_give_zero_solution() {
        let grid = TimeGrid::unit();
        let a = DMatrix::from_row_slice(2, 2, &[0.3, 1.0, -0.5, 0.2]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let z = DMatrix::zeros(2, 2);
        let sol = riccati_finite(&a, &b, &z, &scalar(1.0), &z, &grid).unwrap();
        assert!(sol.p.iter().all(|p| p.amax() == 0.0));

        let k = kleinman_discounted(&a, &b, &z, &scalar(1.0), 2.5).unwrap();
        assert!(k.p.amax() < 1e-14);
    }

    #[test]
    fn scalar_discounted_root() {
        let sol = kleinman_discounted(&scalar(-1.0), &scalar(1.0), &scalar(1.0), &scalar(1.0), 2.5)
            .unwrap();
        // P² + 4.5P - 1 = 0
        let root = (-4.5 + (4.5f64 * 4.5 + 4.0).sqrt()) / 2.0;
        assert_abs_diff_eq!(sol.p[(0, 0)], root, epsilon = 1e-12);
    }

    #[test]
    fn lyapunov_solution_satisfies_equation() {
        let ac = DMatrix::from_row_slice(3, 3, &[-2.0, 0.5, 0.0, 0.1, -1.0, 0.3, 0.0, -0.4, -3.0]);
        let w = DMatrix::from_row_slice(3, 3, &[2.0, 0.1, 0.0, 0.1, 1.0, 0.2, 0.0, 0.2, 3.0]);
        let p = solve_lyapunov(&ac, &w).unwrap();
        let res = ac.transpose() * &p + &p * &ac + &w;
        assert!(res.amax() < 1e-12);
    }

    #[test]
    fn hurwitz_test_cases() {
        assert!(is_hurwitz(&DMatrix::from_row_slice(
            2,
            2,
            &[-1.0, 5.0, 0.0, -0.1]
        )));
        assert!(!is_hurwitz(&DMatrix::from_row_slice(
            2,
            2,
            &[0.0, 1.0, -1.0, 0.0]
        )));
        assert!(!is_hurwitz(&LqrMomentModel::new(2, false).drift().clone()));
        assert!(is_hurwitz(
            &(LqrMomentModel::new(6, false).drift() - DMatrix::identity(7, 7) * 1.25)
        ));
    }

    #[test]
    fn kleinman_rejects_unstable_start() {
        let err = kleinman_discounted(&scalar(3.0), &scalar(1.0), &scalar(1.0), &scalar(1.0), 2.5)
            .unwrap_err();
        assert!(matches!(err, Error::KleinmanDiverged { .. }));
    }

    #[test]
    fn riccati_rejects_indefinite_r() {
        let grid = TimeGrid::unit();
        assert!(riccati_finite(
            &scalar(0.0),
            &scalar(1.0),
            &scalar(1.0),
            &scalar(-1.0),
            &scalar(1.0),
            &grid
        )
        .is_err());
    }

    #[test]
    fn sampled_param_counts() {
        let table = sampled_demo(&[2, 3, 20], &DemoSettings::default()).unwrap();
        assert_eq!(table.row(20).unwrap().param_count, 210);
        assert_eq!(table.row(2).unwrap().param_count, 3);
        assert!(sampled_demo(&[1], &DemoSettings::default()).is_err());
    }
}
