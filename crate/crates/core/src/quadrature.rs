//! Gauss–Hermite rules and the discrete conditional-expectation operators.
//!
//! A rule of order `L` integrates `g(x) e^{-x^2}` exactly for polynomials `g`
//! of degree `<= 2L - 1`. A conditional expectation over a Brownian increment
//! of duration `s` is evaluated at the shifted points `x + sqrt(2s) * a_i`
//! (tensor products in `d` dimensions). With `s = j^2 h` the shift is
//! `j * sqrt(2h) * a_i`, the scaling that lets the 3-point rule land on the
//! nested grid.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Largest supported rule order.
pub const MAX_ORDER: usize = 64;

const NEWTON_STEPS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Physicists' Gauss–Hermite rule with `order` nodes.
    ///
    /// Nodes come from the eigenvalues of the symmetric tridiagonal Jacobi
    /// matrix of the Hermite recurrence and are polished by Newton steps on
    /// the orthonormal Hermite polynomial. Weights use
    /// `w_i = 2^{L+1} L! sqrt(pi) / H'_L(a_i)^2`, rewritten in orthonormal
    /// form as `1 / (L p_{L-1}(a_i)^2)` so nothing overflows for large `L`.
    pub fn gauss_hermite(order: usize) -> Result<Self> {
        if order == 0 || order > MAX_ORDER {
            return Err(Error::QuadratureOrder {
                order,
                max: MAX_ORDER,
            });
        }
        let mut nodes = jacobi_eigenvalues(order);
        for x in nodes.iter_mut() {
            *x = polish_root(order, *x);
        }
        nodes.sort_by(|a, b| a.total_cmp(b));
        symmetrize_odd(&mut nodes);

        let mut weights: Vec<f64> = nodes
            .iter()
            .map(|&x| {
                let (_, prev) = orthonormal_hermite(order, x);
                1.0 / (order as f64 * prev * prev)
            })
            .collect();
        symmetrize_even(&mut weights);

        Ok(Self { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes in ascending order.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Largest node, i.e. the reach of a unit-scaled evaluation.
    pub fn max_node(&self) -> f64 {
        self.nodes.last().copied().unwrap_or(0.0)
    }

    /// `sum_i w_i g(a_i)`, the approximation of `∫ g(x) e^{-x^2} dx`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut g: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(x))
            .sum()
    }
}

fn jacobi_eigenvalues(order: usize) -> Vec<f64> {
    let mut jacobi = DMatrix::<f64>::zeros(order, order);
    for i in 1..order {
        let b = (i as f64 / 2.0).sqrt();
        jacobi[(i, i - 1)] = b;
        jacobi[(i - 1, i)] = b;
    }
    SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect()
}

/// Returns `(p_L(x), p_{L-1}(x))` for the orthonormal Hermite polynomials
/// `p_n = H_n / sqrt(2^n n! sqrt(pi))`.
fn orthonormal_hermite(order: usize, x: f64) -> (f64, f64) {
    let mut prev = 0.0;
    let mut cur = PI.powf(-0.25);
    for n in 0..order {
        let next = (2.0 / (n as f64 + 1.0)).sqrt() * x * cur
            - (n as f64 / (n as f64 + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

fn polish_root(order: usize, mut x: f64) -> f64 {
    for _ in 0..NEWTON_STEPS {
        let (p, prev) = orthonormal_hermite(order, x);
        let dp = (2.0 * order as f64).sqrt() * prev;
        let dx = p / dp;
        x -= dx;
        if dx.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

fn symmetrize_odd(v: &mut [f64]) {
    let n = v.len();
    for i in 0..n / 2 {
        let s = 0.5 * (v[n - 1 - i] - v[i]);
        v[i] = -s;
        v[n - 1 - i] = s;
    }
    if n % 2 == 1 {
        v[n / 2] = 0.0;
    }
}

fn symmetrize_even(v: &mut [f64]) {
    let n = v.len();
    for i in 0..n / 2 {
        let s = 0.5 * (v[i] + v[n - 1 - i]);
        v[i] = s;
        v[n - 1 - i] = s;
    }
}

/// Tensor-product rule in `d` dimensions with weights normalised by
/// `pi^{-d/2}`, so that the weights sum to one.
///
/// Multi-indices are enumerated lexicographically over `(i_1, ..., i_d)`,
/// last coordinate fastest.
#[derive(Debug, Clone)]
pub struct TensorRule {
    dim: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    indices: Vec<usize>,
}

impl TensorRule {
    pub fn new(rule: &QuadratureRule, dim: usize) -> Self {
        let order = rule.order();
        let count = order.pow(dim as u32);
        let scale = PI.powf(-0.5 * dim as f64);
        let mut nodes = Vec::with_capacity(count * dim);
        let mut weights = Vec::with_capacity(count);
        let mut indices = Vec::with_capacity(count * dim);
        let mut multi = vec![0usize; dim];
        for _ in 0..count {
            let mut w = scale;
            for &i in &multi {
                nodes.push(rule.nodes()[i]);
                w *= rule.weights()[i];
            }
            indices.extend_from_slice(&multi);
            weights.push(w);
            for axis in (0..dim).rev() {
                multi[axis] += 1;
                if multi[axis] < order {
                    break;
                }
                multi[axis] = 0;
            }
        }
        Self {
            dim,
            nodes,
            weights,
            indices,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Node vector `a_i` of the `p`-th tensor point.
    pub fn node(&self, p: usize) -> &[f64] {
        &self.nodes[p * self.dim..(p + 1) * self.dim]
    }

    /// Zero-based per-axis rule indices of the `p`-th tensor point.
    pub fn multi_index(&self, p: usize) -> &[usize] {
        &self.indices[p * self.dim..(p + 1) * self.dim]
    }

    /// Normalised product weight `pi^{-d/2} prod_k w_{i_k}`.
    pub fn weight(&self, p: usize) -> f64 {
        self.weights[p]
    }

    /// Evaluates both `Ê[y]` and `Ê[y ΔWᵀ]` over a Brownian increment of
    /// duration `span`, from one pass over the points `x + sqrt(2 span) a_i`.
    /// `y_out` has length `m`, `ydw_out` is `m x d`, row-major.
    pub fn expect_pair<E, F>(
        &self,
        x: &[f64],
        span: f64,
        y_out: &mut [f64],
        ydw_out: &mut [f64],
        mut sampler: F,
    ) -> std::result::Result<(), E>
    where
        F: FnMut(&[f64], &mut [f64]) -> std::result::Result<(), E>,
    {
        let m = y_out.len();
        let d = self.dim;
        debug_assert_eq!(x.len(), d);
        debug_assert_eq!(ydw_out.len(), m * d);
        let scale = (2.0 * span).sqrt();
        let mut point = vec![0.0; d];
        let mut value = vec![0.0; m];
        y_out.fill(0.0);
        ydw_out.fill(0.0);
        for p in 0..self.len() {
            let a = self.node(p);
            for k in 0..d {
                point[k] = x[k] + scale * a[k];
            }
            sampler(&point, &mut value)?;
            let w = self.weights[p];
            for r in 0..m {
                let wv = w * value[r];
                y_out[r] += wv;
                for c in 0..d {
                    ydw_out[r * d + c] += wv * a[c];
                }
            }
        }
        for v in ydw_out.iter_mut() {
            *v *= scale;
        }
        Ok(())
    }
}

/// `Ê[y]` at `x` over an increment of duration `j^2 h`:
/// `pi^{-d/2} sum_i (prod w) sampler(x + j sqrt(2h) a_i)`.
pub fn cond_expect_y<E, F>(
    sampler: F,
    x: &[f64],
    j: usize,
    h: f64,
    rule: &QuadratureRule,
    m: usize,
) -> std::result::Result<Vec<f64>, E>
where
    F: FnMut(&[f64], &mut [f64]) -> std::result::Result<(), E>,
{
    let tensor = TensorRule::new(rule, x.len());
    let mut y = vec![0.0; m];
    let mut ydw = vec![0.0; m * x.len()];
    tensor.expect_pair(x, (j * j) as f64 * h, &mut y, &mut ydw, sampler)?;
    Ok(y)
}

/// `Ê[y ΔWᵀ]` at `x` over an increment of duration `j^2 h`, returned as an `m x d`
/// row-major matrix.
pub fn cond_expect_y_dw<E, F>(
    sampler: F,
    x: &[f64],
    j: usize,
    h: f64,
    rule: &QuadratureRule,
    m: usize,
) -> std::result::Result<Vec<f64>, E>
where
    F: FnMut(&[f64], &mut [f64]) -> std::result::Result<(), E>,
{
    let tensor = TensorRule::new(rule, x.len());
    let mut y = vec![0.0; m];
    let mut ydw = vec![0.0; m * x.len()];
    tensor.expect_pair(x, (j * j) as f64 * h, &mut y, &mut ydw, sampler)?;
    Ok(ydw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::convert::Infallible;

    fn gaussian_moment(p: usize) -> f64 {
        // ∫ x^p e^{-x^2} dx = Γ((p+1)/2) for even p, 0 for odd p.
        if p % 2 == 1 {
            return 0.0;
        }
        let mut v = PI.sqrt();
        let mut k = 0.5;
        for _ in 0..p / 2 {
            v *= k;
            k += 1.0;
        }
        v
    }

    /// Physicists' Hermite polynomial and derivative by the plain recurrence.
    fn hermite_naive(n: usize, x: f64) -> (f64, f64) {
        let (mut h0, mut h1) = (1.0, 2.0 * x);
        if n == 0 {
            return (1.0, 0.0);
        }
        for k in 1..n {
            let h2 = 2.0 * x * h1 - 2.0 * k as f64 * h0;
            h0 = h1;
            h1 = h2;
        }
        (h1, 2.0 * n as f64 * h0)
    }

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn ok<T>(v: T) -> std::result::Result<T, Infallible> {
        Ok(v)
    }

    #[test]
    fn rejects_out_of_range_orders() {
        assert!(QuadratureRule::gauss_hermite(0).is_err());
        assert!(QuadratureRule::gauss_hermite(MAX_ORDER + 1).is_err());
        assert!(QuadratureRule::gauss_hermite(MAX_ORDER).is_ok());
    }

    #[test]
    fn one_point_rule() {
        let rule = QuadratureRule::gauss_hermite(1).unwrap();
        assert_eq!(rule.nodes(), &[0.0]);
        assert_relative_eq!(rule.weights()[0], PI.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn two_point_rule_matches_bisection_oracle() {
        let h2 = |x: f64| 4.0 * x * x - 2.0;
        let root = bisect(h2, 0.1, 2.0);
        // w = 2^{L+1} L! sqrt(pi) / H'_L(a)^2 with H'_2 = 8x.
        let w = 8.0 * 2.0 * PI.sqrt() / (8.0 * root).powi(2);
        let rule = QuadratureRule::gauss_hermite(2).unwrap();
        assert_relative_eq!(rule.nodes()[1], root, max_relative = 1e-15);
        assert_relative_eq!(rule.nodes()[0], -root, max_relative = 1e-15);
        assert_relative_eq!(rule.nodes()[1], 0.5f64.sqrt(), max_relative = 1e-15);
        for &wi in rule.weights() {
            assert_relative_eq!(wi, w, max_relative = 1e-14);
            assert_relative_eq!(wi, PI.sqrt() / 2.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn three_point_rule_closed_form() {
        let rule = QuadratureRule::gauss_hermite(3).unwrap();
        let a = 1.5f64.sqrt();
        let expected_nodes = [-a, 0.0, a];
        let sp = PI.sqrt();
        let expected_weights = [sp / 6.0, 2.0 * sp / 3.0, sp / 6.0];
        for i in 0..3 {
            assert!((rule.nodes()[i] - expected_nodes[i]).abs() <= 1e-14);
            assert!((rule.weights()[i] - expected_weights[i]).abs() <= 1e-14);
        }
    }

    #[test]
    fn weights_match_factorial_formula_for_small_orders() {
        for order in 1..=12 {
            let rule = QuadratureRule::gauss_hermite(order).unwrap();
            for (&x, &w) in rule.nodes().iter().zip(rule.weights()) {
                let (hl, _) = hermite_naive(order, x);
                let (_, dh) = hermite_naive(order, x);
                assert!(hl.abs() <= 1e-9 * dh.abs(), "L={order} x={x}");
                let reference =
                    2f64.powi(order as i32 + 1) * factorial(order) * PI.sqrt() / (dh * dh);
                assert_relative_eq!(w, reference, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn invariants_hold_for_all_supported_orders() {
        for order in 1..=MAX_ORDER {
            let rule = QuadratureRule::gauss_hermite(order).unwrap();
            let (x, w) = (rule.nodes(), rule.weights());
            assert!(x.windows(2).all(|p| p[0] < p[1]), "L={order} not ascending");
            for i in 0..order {
                assert!((x[i] + x[order - 1 - i]).abs() <= 1e-14);
                assert!(w[i] > 0.0);
                assert!((w[i] - w[order - 1 - i]).abs() <= 1e-14 * w[i]);
            }
            let total: f64 = w.iter().sum();
            assert_relative_eq!(total, PI.sqrt(), max_relative = 1e-13);
        }
    }

    #[test]
    fn integrates_gaussian_moments_exactly() {
        for order in 1..=20 {
            let rule = QuadratureRule::gauss_hermite(order).unwrap();
            for p in 0..2 * order {
                let got = rule.integrate(|x| x.powi(p as i32));
                let exact = gaussian_moment(p);
                if exact == 0.0 {
                    let scale = rule.integrate(|x| x.abs().powi(p as i32));
                    assert!(got.abs() <= 1e-13 * scale.max(1.0), "L={order} p={p}");
                } else {
                    assert_relative_eq!(got, exact, max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn tensor_order_is_lexicographic() {
        let rule = QuadratureRule::gauss_hermite(2).unwrap();
        let t = TensorRule::new(&rule, 2);
        let seen: Vec<Vec<usize>> = (0..t.len()).map(|p| t.multi_index(p).to_vec()).collect();
        assert_eq!(seen, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        let total: f64 = (0..t.len()).map(|p| t.weight(p)).sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-15);
    }

    #[test]
    fn constant_sampler_expectations() {
        let rule = QuadratureRule::gauss_hermite(5).unwrap();
        for d in 1..=3 {
            let x = vec![0.3; d];
            let y = cond_expect_y(|_, out| ok(out.fill(2.5)), &x, 2, 0.01, &rule, 1).unwrap();
            assert_relative_eq!(y[0], 2.5, max_relative = 1e-14);
            let ydw =
                cond_expect_y_dw(|_, out| ok(out.fill(2.5)), &x, 2, 0.01, &rule, 1).unwrap();
            assert!(ydw.iter().all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn second_moment_example() {
        let rule = QuadratureRule::gauss_hermite(3).unwrap();
        let y = cond_expect_y(|v, out| ok(out[0] = v[0] * v[0]), &[0.5], 2, 0.01, &rule, 1)
            .unwrap();
        assert_relative_eq!(y[0], 0.29, max_relative = 1e-14);
    }

    #[test]
    fn product_moment_in_two_dimensions() {
        let rule = QuadratureRule::gauss_hermite(3).unwrap();
        let y = cond_expect_y(
            |v, out| ok(out[0] = v[0] * v[1]),
            &[1.0, 1.0],
            1,
            0.04,
            &rule,
            1,
        )
        .unwrap();
        // E[(1 + W1)(1 + W2)] = 1 for independent centred W1, W2.
        assert_relative_eq!(y[0], 1.0, max_relative = 1e-14);
    }

    #[test]
    fn increment_moments() {
        let rule = QuadratureRule::gauss_hermite(3).unwrap();
        let ydw = cond_expect_y_dw(|v, out| ok(out[0] = v[0]), &[3.0], 1, 0.1, &rule, 1).unwrap();
        assert_relative_eq!(ydw[0], 0.1, max_relative = 1e-13);

        let ydw =
            cond_expect_y_dw(|v, out| ok(out[0] = v[0]), &[0.0, 0.0], 3, 0.01, &rule, 1).unwrap();
        // E[W1 W1] = j h, E[W1 W2] = 0.
        assert_relative_eq!(ydw[0], 0.09, max_relative = 1e-13);
        assert!(ydw[1].abs() < 1e-16);
    }

    #[test]
    fn vector_valued_sampler_layout() {
        let rule = QuadratureRule::gauss_hermite(4).unwrap();
        let ydw = cond_expect_y_dw(
            |v, out| {
                out[0] = v[0];
                out[1] = v[1];
                ok(())
            },
            &[0.2, -0.1],
            1,
            0.05,
            &rule,
            2,
        )
        .unwrap();
        // Row r is E[y_r ΔWᵀ]: identity times h.
        let expected = [0.05, 0.0, 0.0, 0.05];
        for (g, e) in ydw.iter().zip(expected) {
            assert!((g - e).abs() < 1e-15, "{ydw:?}");
        }
    }

    /// Trapezoid rule on a wide window; converges geometrically for
    /// Gaussian-weighted analytic integrands.
    fn gaussian_expectation_reference(g: impl Fn(f64) -> f64, x: f64, variance: f64) -> f64 {
        let sd = variance.sqrt();
        let n = 4000;
        let half = 12.0;
        let dw = 2.0 * half / n as f64;
        let mut acc = 0.0;
        for k in 0..=n {
            let w = -half + k as f64 * dw;
            let f = g(x + sd * w) * (-0.5 * w * w).exp();
            acc += if k == 0 || k == n { 0.5 * f } else { f };
        }
        acc * dw / (2.0 * PI).sqrt()
    }

    fn slope(xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        num / den
    }

    #[test]
    fn quadrature_error_order_in_step_size() {
        let g = |v: f64| (v.sin() + 3.0).ln();
        let x = 0.4;
        for order in 2..=4 {
            let rule = QuadratureRule::gauss_hermite(order).unwrap();
            let mut log_s = Vec::new();
            let mut log_e = Vec::new();
            for e in 3..=7 {
                let s = 2f64.powi(-e);
                let exact = gaussian_expectation_reference(g, x, s);
                let approx =
                    cond_expect_y(|v, out| ok(out[0] = g(v[0])), &[x], 1, s, &rule, 1).unwrap()[0];
                log_s.push(s.log2());
                log_e.push((exact - approx).abs().log2());
            }
            let fitted = slope(&log_s, &log_e);
            assert!(fitted >= order as f64 - 0.5, "L={order} slope={fitted}");
        }
    }

    proptest! {
        #[test]
        fn expectation_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, x in -2.0f64..2.0,
                                 j in 1usize..4, h in 0.001f64..0.2) {
            let rule = QuadratureRule::gauss_hermite(3).unwrap();
            let u = |v: f64| v.sin();
            let w = |v: f64| (v * 0.5).exp();
            let ex = |g: &dyn Fn(f64) -> f64| {
                cond_expect_y(|v, out| ok(out[0] = g(v[0])), &[x], j, h, &rule, 1).unwrap()[0]
            };
            let lhs = ex(&|v| a * u(v) + b * w(v));
            let rhs = a * ex(&u) + b * ex(&w);
            prop_assert!((lhs - rhs).abs() <= 1e-13 * (1.0 + lhs.abs()));
        }

        #[test]
        fn tensor_matches_product_of_one_dimensional(x1 in -2.0f64..2.0, x2 in -2.0f64..2.0,
                                                     j in 1usize..4, h in 0.001f64..0.2,
                                                     order in 1usize..7) {
            let rule = QuadratureRule::gauss_hermite(order).unwrap();
            let g1 = |v: f64| v.cos() + 2.0;
            let g2 = |v: f64| (0.3 * v).exp();
            let two = cond_expect_y(|v, out| ok(out[0] = g1(v[0]) * g2(v[1])),
                                    &[x1, x2], j, h, &rule, 1).unwrap()[0];
            let one_a = cond_expect_y(|v, out| ok(out[0] = g1(v[0])), &[x1], j, h, &rule, 1).unwrap()[0];
            let one_b = cond_expect_y(|v, out| ok(out[0] = g2(v[0])), &[x2], j, h, &rule, 1).unwrap()[0];
            prop_assert!((two - one_a * one_b).abs() <= 1e-13 * two.abs());
        }
    }
}
