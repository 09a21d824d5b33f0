//! Truncated moment systems and the model contract used by integration and
//! policy search.
//!
//! Both shipped models are control-affine with bilinear state coupling,
//! `F(m, u) = A0 m + Σ_i u_i (C_i m + b_i)`, which keeps every derivative the
//! backward pass needs in closed form.

use nalgebra::{DMatrix, DVector, Matrix3};

use crate::basis::{basis_integrals, transform_fn, BasisSpec, QuadratureRule};
use crate::error::{Error, Result};
use crate::moment::MomentVector;

/// Closed-form description of a truncated moment system and its reward.
///
/// `m` is the flat state of length `state_dim`, `u` the control of length
/// `control_dim`, `p` a costate (value gradient) of length `state_dim`.
pub trait SystemModel: Send + Sync {
    fn order(&self) -> usize;
    fn block_dim(&self) -> usize;
    fn control_dim(&self) -> usize;

    fn state_dim(&self) -> usize {
        self.block_dim() * (self.order() + 1)
    }

    fn initial_moments(&self) -> &MomentVector;

    fn vector_field(&self, m: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    /// `∂F/∂m`.
    fn state_jacobian(&self, m: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64>;
    /// `∂F/∂u`, `state_dim × control_dim`.
    fn control_jacobian(&self, m: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64>;

    fn running_reward(&self, m: &DVector<f64>, u: &DVector<f64>) -> f64;
    fn running_reward_state_gradient(&self, m: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    fn running_reward_state_hessian(&self, m: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64>;
    fn running_reward_control_gradient(&self, m: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    fn running_reward_control_hessian(&self, m: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64>;

    fn terminal_reward(&self, m: &DVector<f64>) -> f64;
    fn terminal_gradient(&self, m: &DVector<f64>) -> DVector<f64>;
    fn terminal_hessian(&self, m: &DVector<f64>) -> DMatrix<f64>;

    /// Minimizer over `u` of `H(m, u, p) = r(m, u) + <p, F(m, u)>`.
    fn argmin_hamiltonian(&self, m: &DVector<f64>, p: &DVector<f64>) -> DVector<f64>;

    /// `∂(D_m H)/∂u` as a `control_dim × state_dim` matrix: row `i` is the
    /// derivative of the state gradient of `H` along `u_i`.
    fn hamiltonian_mixed_derivative(
        &self,
        m: &DVector<f64>,
        u: &DVector<f64>,
        p: &DVector<f64>,
    ) -> DMatrix<f64>;

    /// `D²_m H = D²_m r + Σ_k p_k D²_m F_k`.
    fn hamiltonian_state_hessian(
        &self,
        m: &DVector<f64>,
        u: &DVector<f64>,
        p: &DVector<f64>,
    ) -> DMatrix<f64>;

    fn hamiltonian(&self, m: &DVector<f64>, u: &DVector<f64>, p: &DVector<f64>) -> f64 {
        self.running_reward(m, u) + p.dot(&self.vector_field(m, u))
    }

    fn hamiltonian_state_gradient(
        &self,
        m: &DVector<f64>,
        u: &DVector<f64>,
        p: &DVector<f64>,
    ) -> DVector<f64> {
        self.running_reward_state_gradient(m, u) + self.state_jacobian(m, u).tr_mul(p)
    }

    fn hamiltonian_control_gradient(
        &self,
        m: &DVector<f64>,
        u: &DVector<f64>,
        p: &DVector<f64>,
    ) -> DVector<f64> {
        self.running_reward_control_gradient(m, u) + self.control_jacobian(m, u).tr_mul(p)
    }

    /// `∂²H/∂u²`. The default is exact for control-affine vector fields.
    fn hamiltonian_control_hessian(
        &self,
        m: &DVector<f64>,
        u: &DVector<f64>,
        _p: &DVector<f64>,
    ) -> DMatrix<f64> {
        self.running_reward_control_hessian(m, u)
    }
}

/// Symmetric tridiagonal `½(L + R)` with the first-row coupling optionally
/// replaced by the exact Chebyshev identity `β T_0 = T_1`.
fn shift_average(n: usize, exact_row0: bool) -> DMatrix<f64> {
    let dim = n + 1;
    let mut a = DMatrix::zeros(dim, dim);
    for i in 0..n {
        a[(i, i + 1)] = 0.5;
        a[(i + 1, i)] = 0.5;
    }
    if exact_row0 && n >= 1 {
        a[(0, 1)] = 1.0;
    }
    a
}

/// Order-`N` moment system of `dx/dt = β x + u` on `β ∈ [-1, 1]` with reward
/// `∫ (‖m‖² + 2u²) dt + ‖m(T)‖²`.
#[derive(Debug, Clone)]
pub struct LqrMomentModel {
    order: usize,
    exact_row0: bool,
    a: DMatrix<f64>,
    b: DVector<f64>,
    m0: MomentVector,
}

impl LqrMomentModel {
    pub const STATE_WEIGHT: f64 = 1.0;
    pub const CONTROL_WEIGHT: f64 = 2.0;
    pub const TERMINAL_WEIGHT: f64 = 1.0;

    pub fn new(order: usize, exact_row0: bool) -> Self {
        let b = basis_integrals(order);
        // x0 ≡ 1 has moments ∫ T_k = b_k.
        let m0 = MomentVector::new(order, 1, b.clone()).expect("finite basis integrals");
        Self {
            order,
            exact_row0,
            a: shift_average(order, exact_row0),
            b,
            m0,
        }
    }

    pub fn drift(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn input(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn exact_row0(&self) -> bool {
        self.exact_row0
    }

    pub fn state_weight(&self) -> DMatrix<f64> {
        DMatrix::identity(self.order + 1, self.order + 1) * Self::STATE_WEIGHT
    }

    pub fn control_weight(&self) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, Self::CONTROL_WEIGHT)
    }

    pub fn terminal_weight(&self) -> DMatrix<f64> {
        DMatrix::identity(self.order + 1, self.order + 1) * Self::TERMINAL_WEIGHT
    }

    pub fn with_initial_moments(mut self, m0: MomentVector) -> Result<Self> {
        if m0.len() != self.order + 1 || m0.block_dim() != 1 {
            return Err(Error::LengthMismatch {
                expected: self.order + 1,
                actual: m0.len(),
            });
        }
        self.m0 = m0;
        Ok(self)
    }
}

/// LQR moment model of order `n` with the symmetric drift `½(L + R)`.
pub fn build_lqr(n: usize) -> LqrMomentModel {
    LqrMomentModel::new(n, false)
}

impl SystemModel for LqrMomentModel {
    fn order(&self) -> usize {
        self.order
    }

    fn block_dim(&self) -> usize {
        1
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn initial_moments(&self) -> &MomentVector {
        &self.m0
    }

    fn vector_field(&self, m: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * m + &self.b * u[0]
    }

    fn state_jacobian(&self, _m: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        self.a.clone()
    }

    fn control_jacobian(&self, _m: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.order + 1, 1, self.b.as_slice())
    }

    fn running_reward(&self, m: &DVector<f64>, u: &DVector<f64>) -> f64 {
        Self::STATE_WEIGHT * m.norm_squared() + Self::CONTROL_WEIGHT * u[0] * u[0]
    }

    fn running_reward_state_gradient(&self, m: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        m * (2.0 * Self::STATE_WEIGHT)
    }

    fn running_reward_state_hessian(&self, _m: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(self.order + 1, self.order + 1) * (2.0 * Self::STATE_WEIGHT)
    }

    fn running_reward_control_gradient(&self, _m: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        u * (2.0 * Self::CONTROL_WEIGHT)
    }

    fn running_reward_control_hessian(&self, _m: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 2.0 * Self::CONTROL_WEIGHT)
    }

    fn terminal_reward(&self, m: &DVector<f64>) -> f64 {
        Self::TERMINAL_WEIGHT * m.norm_squared()
    }

    fn terminal_gradient(&self, m: &DVector<f64>) -> DVector<f64> {
        m * (2.0 * Self::TERMINAL_WEIGHT)
    }

    fn terminal_hessian(&self, _m: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(self.order + 1, self.order + 1) * (2.0 * Self::TERMINAL_WEIGHT)
    }

    fn argmin_hamiltonian(&self, _m: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
        // 4u + <p, B> = 0
        DVector::from_element(1, -p.dot(&self.b) / (2.0 * Self::CONTROL_WEIGHT))
    }

    fn hamiltonian_mixed_derivative(
        &self,
        _m: &DVector<f64>,
        _u: &DVector<f64>,
        _p: &DVector<f64>,
    ) -> DMatrix<f64> {
        DMatrix::zeros(1, self.order + 1)
    }

    fn hamiltonian_state_hessian(
        &self,
        m: &DVector<f64>,
        u: &DVector<f64>,
        _p: &DVector<f64>,
    ) -> DMatrix<f64> {
        self.running_reward_state_hessian(m, u)
    }
}

/// Generator of rotations about the x axis as it enters the Bloch equation.
pub fn omega_x() -> Matrix3<f64> {
    Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0)
}

/// Generator of rotations about the y axis as it enters the Bloch equation.
pub fn omega_y() -> Matrix3<f64> {
    Matrix3::new(0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
}

fn kron_with(s: &DMatrix<f64>, omega: &Matrix3<f64>) -> DMatrix<f64> {
    let n = s.nrows();
    let mut out = DMatrix::zeros(3 * n, 3 * n);
    for i in 0..n {
        for j in 0..n {
            let sij = s[(i, j)];
            if sij != 0.0 {
                out.view_mut((3 * i, 3 * j), (3, 3))
                    .copy_from(&(omega * sij));
            }
        }
    }
    out
}

/// Order-`N` moment system of the Bloch ensemble under rf inhomogeneity
/// `β ∈ [1 - δ, 1 + δ]`, with reward `∫ (u² + v²) dt + ‖m(T) - m_F‖²`.
///
/// Controls are ordered `(u, v)`: `u` drives `Ω_y`, `v` drives `Ω_x`.
#[derive(Debug, Clone)]
pub struct BlochMomentModel {
    order: usize,
    delta: f64,
    exact_row0: bool,
    bx: DMatrix<f64>,
    by: DMatrix<f64>,
    m0: MomentVector,
    target: MomentVector,
}

impl BlochMomentModel {
    pub fn new(order: usize, delta: f64, exact_row0: bool) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid(
                "delta",
                format!("{delta} is outside (0, 1)"),
            ));
        }
        let mut s = shift_average(order, exact_row0) * delta;
        for i in 0..=order {
            s[(i, i)] = 1.0;
        }
        let spec = BasisSpec::affine(order, 1.0, delta)?;
        let rule = QuadratureRule::default_for(order);
        let m0 = transform_fn(|_| vec![0.0, 0.0, 1.0], 3, &spec, &rule)?;
        let target = transform_fn(|_| vec![1.0, 0.0, 0.0], 3, &spec, &rule)?;
        Ok(Self {
            order,
            delta,
            exact_row0,
            bx: kron_with(&s, &omega_x()),
            by: kron_with(&s, &omega_y()),
            m0,
            target,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn exact_row0(&self) -> bool {
        self.exact_row0
    }

    pub fn generator_x(&self) -> &DMatrix<f64> {
        &self.bx
    }

    pub fn generator_y(&self) -> &DMatrix<f64> {
        &self.by
    }

    pub fn target(&self) -> &MomentVector {
        &self.target
    }

    fn generator(&self, u: &DVector<f64>) -> DMatrix<f64> {
        &self.by * u[0] + &self.bx * u[1]
    }
}

/// Bloch moment model with the generators `[δ/2 (R + L) + I] ⊗ Ω`.
pub fn build_bloch(n: usize, delta: f64) -> Result<BlochMomentModel> {
    BlochMomentModel::new(n, delta, false)
}

impl SystemModel for BlochMomentModel {
    fn order(&self) -> usize {
        self.order
    }

    fn block_dim(&self) -> usize {
        3
    }

    fn control_dim(&self) -> usize {
        2
    }

    fn initial_moments(&self) -> &MomentVector {
        &self.m0
    }

    fn vector_field(&self, m: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (&self.by * m) * u[0] + (&self.bx * m) * u[1]
    }

    fn state_jacobian(&self, _m: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        self.generator(u)
    }

    fn control_jacobian(&self, m: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(m.len(), 2);
        j.set_column(0, &(&self.by * m));
        j.set_column(1, &(&self.bx * m));
        j
    }

    fn running_reward(&self, _m: &DVector<f64>, u: &DVector<f64>) -> f64 {
        u.norm_squared()
    }

    fn running_reward_state_gradient(&self, m: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(m.len())
    }

    fn running_reward_state_hessian(&self, m: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(m.len(), m.len())
    }

    fn running_reward_control_gradient(&self, _m: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        u * 2.0
    }

    fn running_reward_control_hessian(&self, _m: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(2, 2) * 2.0
    }

    fn terminal_reward(&self, m: &DVector<f64>) -> f64 {
        (m - self.target.values()).norm_squared()
    }

    fn terminal_gradient(&self, m: &DVector<f64>) -> DVector<f64> {
        (m - self.target.values()) * 2.0
    }

    fn terminal_hessian(&self, m: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(m.len(), m.len()) * 2.0
    }

    fn argmin_hamiltonian(&self, m: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
        let u = -0.5 * p.dot(&(&self.by * m));
        let v = -0.5 * p.dot(&(&self.bx * m));
        DVector::from_vec(vec![u, v])
    }

    fn hamiltonian_mixed_derivative(
        &self,
        _m: &DVector<f64>,
        _u: &DVector<f64>,
        p: &DVector<f64>,
    ) -> DMatrix<f64> {
        // d/du_i (G(u)^T p) = C_i^T p
        let mut out = DMatrix::zeros(2, p.len());
        out.set_row(0, &self.by.tr_mul(p).transpose());
        out.set_row(1, &self.bx.tr_mul(p).transpose());
        out
    }

    fn hamiltonian_state_hessian(
        &self,
        m: &DVector<f64>,
        _u: &DVector<f64>,
        _p: &DVector<f64>,
    ) -> DMatrix<f64> {
        DMatrix::zeros(m.len(), m.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn lqr_matrices() {
        let m = build_lqr(2);
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 0.5, 0.0, 0.5, 0.0, 0.5, 0.0, 0.5, 0.0]);
        assert_eq!(m.drift(), &a);
        assert_abs_diff_eq!(m.input()[0], 2.0);
        assert_abs_diff_eq!(m.input()[1], 0.0);
        assert_abs_diff_eq!(m.input()[2], -2.0 / 3.0, epsilon = 1e-15);

        let m0 = build_lqr(0);
        assert_eq!(m0.drift().as_slice(), &[0.0]);
        assert_eq!(m0.input().as_slice(), &[2.0]);

        let m1 = build_lqr(1);
        let f = m1.vector_field(&v(&[1.0, 0.0]), &v(&[1.0]));
        assert_abs_diff_eq!(f[0], 2.0);
        assert_abs_diff_eq!(f[1], 0.5);
    }

    #[test]
    fn lqr_exact_row0_changes_only_first_row() {
        let halved = LqrMomentModel::new(3, false);
        let exact = LqrMomentModel::new(3, true);
        let diff = exact.drift() - halved.drift();
        assert_abs_diff_eq!(diff[(0, 1)], 0.5);
        assert_abs_diff_eq!(diff.abs().sum(), 0.5);
    }

    #[test]
    fn bloch_single_block() {
        let m = build_bloch(0, 0.4).unwrap();
        let oy = omega_y();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.generator_y()[(i, j)], oy[(i, j)]);
            }
        }
        let m0 = m.initial_moments().values();
        assert_abs_diff_eq!(m0[2], 0.8, epsilon = 1e-13);
        assert_abs_diff_eq!(m0[0], 0.0, epsilon = 1e-13);
    }

    #[test]
    fn bloch_order_one_generator() {
        let m = build_bloch(1, 0.4).unwrap();
        let ox = omega_x();
        let bx = m.generator_x();
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(bx[(i, j)], ox[(i, j)]);
                assert_abs_diff_eq!(bx[(i + 3, j + 3)], ox[(i, j)]);
                assert_abs_diff_eq!(bx[(i, j + 3)], 0.2 * ox[(i, j)], epsilon = 1e-15);
                assert_abs_diff_eq!(bx[(i + 3, j)], 0.2 * ox[(i, j)], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn bloch_generators_skew() {
        for n in [0, 1, 4, 9] {
            for delta in [0.1, 0.4, 0.9] {
                let m = build_bloch(n, delta).unwrap();
                assert_eq!(m.generator_x().transpose(), -m.generator_x());
                assert_eq!(m.generator_y().transpose(), -m.generator_y());
            }
        }
    }

    #[test]
    fn bloch_rejects_delta_outside_unit_interval() {
        for bad in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            assert!(build_bloch(2, bad).is_err());
        }
    }

    #[test]
    fn argmin_examples() {
        let lqr = build_lqr(2);
        let u = lqr.argmin_hamiltonian(&v(&[0.0; 3]), &v(&[1.0, 0.0, 0.0]));
        assert_abs_diff_eq!(u[0], -0.5);
        let u = lqr.argmin_hamiltonian(&v(&[1.0, 2.0, 3.0]), &v(&[0.0; 3]));
        assert_eq!(u[0], 0.0);

        let bloch = build_bloch(0, 0.4).unwrap();
        let uv = bloch.argmin_hamiltonian(&v(&[0.0, 0.0, 1.0]), &v(&[1.0, 0.0, 0.0]));
        assert_abs_diff_eq!(uv[0], 0.5);
        assert_abs_diff_eq!(uv[1], 0.0);
    }

    #[test]
    fn reward_examples() {
        let lqr = build_lqr(2);
        let r = lqr.running_reward(&v(&[2.0, 0.0, -2.0 / 3.0]), &v(&[0.0]));
        assert_abs_diff_eq!(r, 4.0 + 4.0 / 9.0, epsilon = 1e-14);

        let bloch = build_bloch(3, 0.4).unwrap();
        let m = bloch.initial_moments().values().clone();
        assert_abs_diff_eq!(
            bloch.running_reward(&m, &v(&[0.3, -0.4])),
            0.25,
            epsilon = 1e-15
        );
        assert_eq!(bloch.terminal_reward(bloch.target().values()), 0.0);
    }
}
