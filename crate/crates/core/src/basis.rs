//! Chebyshev basis, Gauss–Legendre quadrature and the moment transform.
//!
//! Moments pair the basis with the plain Lebesgue measure on `[-1, 1]`
//! (optionally scaled by the Jacobian of an affine parameter map), so
//! `m_k = scale * ∫ T_k(η) f(η) dη`. Chebyshev polynomials are not orthogonal
//! under this pairing; [`reconstruct`] inverts the transform through the Gram
//! matrix `G_jk = ∫ T_j T_k dη`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::moment::MomentVector;

const DOMAIN_SLACK: f64 = 1e-12;

/// Parameter interval the basis is laid over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    /// `[-1, 1]` itself.
    Canonical,
    /// `[center - halfwidth, center + halfwidth]`, mapped to `[-1, 1]` by
    /// `η = (β - center) / halfwidth`.
    Affine { center: f64, halfwidth: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisSpec {
    order_max: usize,
    domain: Domain,
    measure_scale: f64,
}

impl BasisSpec {
    /// Lebesgue pairing on `[-1, 1]`.
    pub fn canonical(order_max: usize) -> Self {
        Self {
            order_max,
            domain: Domain::Canonical,
            measure_scale: 1.0,
        }
    }

    /// Pairing on `[c - δ, c + δ]` pulled back to `[-1, 1]`; the pushforward of
    /// Lebesgue measure contributes the factor `δ`.
    pub fn affine(order_max: usize, center: f64, halfwidth: f64) -> Result<Self> {
        if !(halfwidth > 0.0) || !halfwidth.is_finite() {
            return Err(Error::invalid(
                "halfwidth",
                format!("{halfwidth} is not > 0"),
            ));
        }
        if !center.is_finite() {
            return Err(Error::invalid("center", "must be finite"));
        }
        Ok(Self {
            order_max,
            domain: Domain::Affine { center, halfwidth },
            measure_scale: halfwidth,
        })
    }

    pub fn with_measure_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::invalid(
                "measure_scale",
                format!("{scale} is not > 0"),
            ));
        }
        self.measure_scale = scale;
        Ok(self)
    }

    pub fn order_max(&self) -> usize {
        self.order_max
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn measure_scale(&self) -> f64 {
        self.measure_scale
    }

    /// Maps a canonical node `η ∈ [-1, 1]` to the physical parameter.
    pub fn to_physical(&self, eta: f64) -> f64 {
        match self.domain {
            Domain::Canonical => eta,
            Domain::Affine { center, halfwidth } => center + halfwidth * eta,
        }
    }

    pub fn to_canonical(&self, beta: f64) -> f64 {
        match self.domain {
            Domain::Canonical => beta,
            Domain::Affine { center, halfwidth } => (beta - center) / halfwidth,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.len() != weights.len() {
            return Err(Error::LengthMismatch {
                expected: nodes.len(),
                actual: weights.len(),
            });
        }
        if nodes.is_empty() {
            return Err(Error::invalid("nodes", "empty rule"));
        }
        if nodes.iter().any(|x| x.abs() > 1.0 + DOMAIN_SLACK) {
            return Err(Error::invalid("nodes", "outside [-1, 1]"));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::invalid("weights", "must be positive"));
        }
        Ok(Self { nodes, weights })
    }

    /// `n`-point Gauss–Legendre rule, exact for polynomials of degree `2n - 1`.
    pub fn gauss_legendre(n: usize) -> Self {
        assert!(n > 0, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi's initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d.is_finite() {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Default rule for truncation order `order`: `max(64, 2N + 8)` Gauss nodes.
    pub fn default_for(order: usize) -> Self {
        Self::gauss_legendre(64.max(2 * order + 8))
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `T_k(η)` by the three-term recurrence.
pub fn chebyshev(k: usize, eta: f64) -> Result<f64> {
    if !(eta.abs() <= 1.0 + DOMAIN_SLACK) {
        return Err(Error::Domain { value: eta });
    }
    Ok(chebyshev_unchecked(k, eta))
}

fn chebyshev_unchecked(k: usize, eta: f64) -> f64 {
    match k {
        0 => 1.0,
        1 => eta,
        _ => {
            let (mut prev, mut cur) = (1.0, eta);
            for _ in 1..k {
                let next = 2.0 * eta * cur - prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// `(T_0(η), ..., T_n(η))`.
pub fn chebyshev_all(n: usize, eta: f64) -> Result<Vec<f64>> {
    if !(eta.abs() <= 1.0 + DOMAIN_SLACK) {
        return Err(Error::Domain { value: eta });
    }
    Ok(chebyshev_all_unchecked(n, eta))
}

fn chebyshev_all_unchecked(n: usize, eta: f64) -> Vec<f64> {
    let mut t = Vec::with_capacity(n + 1);
    t.push(1.0);
    if n >= 1 {
        t.push(eta);
    }
    for k in 2..=n {
        let next = 2.0 * eta * t[k - 1] - t[k - 2];
        t.push(next);
    }
    t
}

/// Closed-form `b_k = ∫_{-1}^{1} T_k(β) dβ`: `((-1)^k + 1) / (1 - k²)` for `k ≠ 1`.
pub fn basis_integrals(n: usize) -> DVector<f64> {
    DVector::from_iterator(
        n + 1,
        (0..=n).map(|k| {
            if k == 1 {
                0.0
            } else {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                (sign + 1.0) / (1.0 - (k * k) as f64)
            }
        }),
    )
}

/// Moment transform of samples taken at the rule's nodes.
///
/// `samples` is node-major: the `block_dim` components of `f(node_j)` occupy
/// `samples[j * block_dim..(j + 1) * block_dim]`.
pub fn moment_transform(
    samples: &[f64],
    block_dim: usize,
    spec: &BasisSpec,
    rule: &QuadratureRule,
) -> Result<MomentVector> {
    if block_dim == 0 {
        return Err(Error::invalid("block_dim", "must be positive"));
    }
    let expected = rule.len() * block_dim;
    if samples.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            actual: samples.len(),
        });
    }
    let n = spec.order_max();
    let mut values = DVector::zeros(block_dim * (n + 1));
    for (j, (&x, &w)) in rule.nodes().iter().zip(rule.weights()).enumerate() {
        let t = chebyshev_all_unchecked(n, x);
        let f = &samples[j * block_dim..(j + 1) * block_dim];
        for (k, tk) in t.iter().enumerate() {
            for (c, fc) in f.iter().enumerate() {
                values[k * block_dim + c] += w * tk * fc;
            }
        }
    }
    values *= spec.measure_scale();
    MomentVector::new(n, block_dim, values)
}

/// Samples `f` (a function of the physical parameter) at the rule's nodes and
/// transforms.
pub fn transform_fn<F>(
    f: F,
    block_dim: usize,
    spec: &BasisSpec,
    rule: &QuadratureRule,
) -> Result<MomentVector>
where
    F: Fn(f64) -> Vec<f64>,
{
    let mut samples = Vec::with_capacity(rule.len() * block_dim);
    for &eta in rule.nodes() {
        let v = f(spec.to_physical(eta));
        if v.len() != block_dim {
            return Err(Error::LengthMismatch {
                expected: block_dim,
                actual: v.len(),
            });
        }
        samples.extend(v);
    }
    moment_transform(&samples, block_dim, spec, rule)
}

/// `G_jk = ∫_{-1}^{1} T_j T_k dη`, exact via `N + 1` Gauss nodes.
pub fn gram_matrix(n: usize) -> DMatrix<f64> {
    let rule = QuadratureRule::gauss_legendre(n + 1);
    let mut g = DMatrix::zeros(n + 1, n + 1);
    for (&x, &w) in rule.nodes().iter().zip(rule.weights()) {
        let t = chebyshev_all_unchecked(n, x);
        for j in 0..=n {
            for k in j..=n {
                g[(j, k)] += w * t[j] * t[k];
            }
        }
    }
    for j in 0..=n {
        for k in 0..j {
            g[(j, k)] = g[(k, j)];
        }
    }
    g
}

/// Inverts the transform on the span of `T_0..T_N`, evaluating the
/// reconstruction at the canonical points `grid`. Output is node-major with
/// `block_dim` components per grid point.
pub fn reconstruct(m: &MomentVector, spec: &BasisSpec, grid: &[f64]) -> Result<Vec<f64>> {
    let n = m.order();
    let d = m.block_dim();
    if n != spec.order_max() {
        return Err(Error::LengthMismatch {
            expected: spec.order_max() + 1,
            actual: n + 1,
        });
    }
    let chol = gram_matrix(n).cholesky().ok_or(Error::Singular {
        context: "Gram matrix",
    })?;
    // Solve one Gram system per component.
    let mut coeffs = DMatrix::zeros(n + 1, d);
    for k in 0..=n {
        for c in 0..d {
            coeffs[(k, c)] = m.values()[k * d + c] / spec.measure_scale();
        }
    }
    let coeffs = chol.solve(&coeffs);
    let mut out = Vec::with_capacity(grid.len() * d);
    for &eta in grid {
        let t = chebyshev_all(n, eta)?;
        for c in 0..d {
            out.push((0..=n).map(|k| coeffs[(k, c)] * t[k]).sum());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn chebyshev_values() {
        assert_eq!(chebyshev(0, 0.7).unwrap(), 1.0);
        assert_abs_diff_eq!(chebyshev(2, 0.5).unwrap(), -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(chebyshev(3, 0.5).unwrap(), -1.0, epsilon = 1e-15);
        assert!(matches!(chebyshev(2, 1.5), Err(Error::Domain { .. })));
        // endpoint slack
        assert!(chebyshev(4, 1.0 + 1e-13).is_ok());
    }

    #[test]
    fn chebyshev_matches_trig_form() {
        for k in 0..20 {
            for i in 0..=50 {
                let x = -1.0 + 2.0 * i as f64 / 50.0;
                let trig = (k as f64 * x.acos()).cos();
                assert_abs_diff_eq!(chebyshev(k, x).unwrap(), trig, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn basis_integral_values() {
        assert_eq!(basis_integrals(0).as_slice(), &[2.0]);
        let b2 = basis_integrals(2);
        assert_abs_diff_eq!(b2[0], 2.0);
        assert_abs_diff_eq!(b2[1], 0.0);
        assert_abs_diff_eq!(b2[2], -2.0 / 3.0, epsilon = 1e-15);
        let b4 = basis_integrals(4);
        assert_abs_diff_eq!(b4[3], 0.0);
        assert_abs_diff_eq!(b4[4], -2.0 / 15.0, epsilon = 1e-15);
    }

    #[test]
    fn gauss_legendre_weights_and_exactness() {
        for n in [1, 2, 5, 16, 64, 65] {
            let rule = QuadratureRule::gauss_legendre(n);
            let total: f64 = rule.weights().iter().sum();
            assert_abs_diff_eq!(total, 2.0, epsilon = 1e-12);
            assert!(rule.nodes().iter().all(|x| x.abs() < 1.0));
            // x^(2n-2) integrates to 2/(2n-1)
            let deg = 2 * n - 2;
            let exact = 2.0 / (deg as f64 + 1.0);
            assert_abs_diff_eq!(
                rule.integrate(|x| x.powi(deg as i32)),
                exact,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn transform_examples() {
        let spec = BasisSpec::canonical(2);
        let rule = QuadratureRule::default_for(2);
        let ones = transform_fn(|_| vec![1.0], 1, &spec, &rule).unwrap();
        assert_abs_diff_eq!(ones.values()[0], 2.0, epsilon = 1e-13);
        assert_abs_diff_eq!(ones.values()[1], 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(ones.values()[2], -2.0 / 3.0, epsilon = 1e-13);

        let id = transform_fn(|x| vec![x], 1, &spec, &rule).unwrap();
        assert_abs_diff_eq!(id.values()[0], 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(id.values()[1], 2.0 / 3.0, epsilon = 1e-13);
        assert_abs_diff_eq!(id.values()[2], 0.0, epsilon = 1e-13);
    }

    #[test]
    fn bloch_initial_moment_blocks() {
        let spec = BasisSpec::affine(1, 1.0, 0.4).unwrap();
        let rule = QuadratureRule::default_for(1);
        let m = transform_fn(|_| vec![0.0, 0.0, 1.0], 3, &spec, &rule).unwrap();
        let expected = [0.0, 0.0, 0.8, 0.0, 0.0, 0.0];
        for (a, b) in m.values().iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn transform_length_mismatch() {
        let rule = QuadratureRule::gauss_legendre(8);
        let err = moment_transform(&[1.0; 7], 1, &BasisSpec::canonical(2), &rule).unwrap_err();
        assert_eq!(
            err,
            Error::LengthMismatch {
                expected: 8,
                actual: 7
            }
        );
    }

    #[test]
    fn gram_entries() {
        let g1 = gram_matrix(1);
        assert_abs_diff_eq!(g1[(0, 0)], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g1[(0, 1)], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g1[(1, 1)], 2.0 / 3.0, epsilon = 1e-14);
        let g2 = gram_matrix(2);
        assert_abs_diff_eq!(g2[(0, 2)], -2.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g2[(2, 2)], 14.0 / 15.0, epsilon = 1e-14);
    }

    #[test]
    fn reconstruct_examples() {
        let spec = BasisSpec::canonical(2);
        let m = MomentVector::new(2, 1, DVector::from_vec(vec![2.0, 0.0, -2.0 / 3.0])).unwrap();
        for v in reconstruct(&m, &spec, &[-1.0, 0.0, 1.0]).unwrap() {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
        }
        let m = MomentVector::new(2, 1, DVector::from_vec(vec![0.0, 2.0 / 3.0, 0.0])).unwrap();
        assert_abs_diff_eq!(
            reconstruct(&m, &spec, &[0.5]).unwrap()[0],
            0.5,
            epsilon = 1e-12
        );

        let spec3 = BasisSpec::canonical(3);
        let rule = QuadratureRule::default_for(3);
        let cube = transform_fn(|x| vec![x * x * x], 1, &spec3, &rule).unwrap();
        let grid: Vec<f64> = (0..11).map(|i| -1.0 + 0.2 * i as f64).collect();
        let back = reconstruct(&cube, &spec3, &grid).unwrap();
        for (x, v) in grid.iter().zip(back) {
            assert_abs_diff_eq!(v, x * x * x, epsilon = 1e-10);
        }
    }

    #[test]
    fn reconstruct_respects_measure_scale() {
        let spec = BasisSpec::affine(3, 1.0, 0.4).unwrap();
        let rule = QuadratureRule::default_for(3);
        let m = transform_fn(|b| vec![b, 1.0 - b * b, 2.0], 3, &spec, &rule).unwrap();
        let back = reconstruct(&m, &spec, &[-1.0, 0.25, 1.0]).unwrap();
        for (i, &eta) in [-1.0, 0.25, 1.0].iter().enumerate() {
            let b = spec.to_physical(eta);
            assert_abs_diff_eq!(back[3 * i], b, epsilon = 1e-11);
            assert_abs_diff_eq!(back[3 * i + 1], 1.0 - b * b, epsilon = 1e-11);
            assert_abs_diff_eq!(back[3 * i + 2], 2.0, epsilon = 1e-11);
        }
    }

    #[test]
    fn affine_rejects_bad_halfwidth() {
        assert!(BasisSpec::affine(2, 1.0, 0.0).is_err());
        assert!(BasisSpec::affine(2, 1.0, -0.3).is_err());
        assert!(BasisSpec::canonical(2).with_measure_scale(0.0).is_err());
    }
}
