//! One-sided first-derivative stencils and the root condition of the
//! multi-step schemes they induce.
//!
//! An equidistant stencil samples `u` at `t0 + i h`, `i = 0..=k`; a squared
//! stencil samples at `t0 + i^2 h`. In both cases `u'(t0) ≈ (Σ c_i u_i) / h`
//! with exact rational coefficients `c_i` obtained by differentiating the
//! Lagrange basis at `t0`.

use std::fmt;

use nalgebra::{Complex, DMatrix};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub const MAX_EQUIDISTANT_STEPS: usize = 8;
pub const MAX_SQUARED_STEPS: usize = 17;

/// Modulus tolerance for the root condition.
pub const UNIT_CIRCLE_TOL: f64 = 1e-9;
/// Roots closer than this are treated as one repeated root.
pub const CLUSTER_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Layout {
    Equidistant,
    Squared,
}

impl Layout {
    pub fn max_steps(self) -> usize {
        match self {
            Layout::Equidistant => MAX_EQUIDISTANT_STEPS,
            Layout::Squared => MAX_SQUARED_STEPS,
        }
    }

    /// Sample offset of the `i`-th point, in units of `h`.
    pub fn offset(self, i: usize) -> usize {
        match self {
            Layout::Equidistant => i,
            Layout::Squared => i * i,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Layout::Equidistant => "equidistant",
            Layout::Squared => "squared",
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    layout: Layout,
    coefficients: Vec<BigRational>,
}

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

impl Stencil {
    pub fn new(layout: Layout, k: usize) -> Result<Self> {
        match layout {
            Layout::Equidistant => Self::equidistant(k),
            Layout::Squared => Self::squared(k),
        }
    }

    /// `c_0 = -Σ_{j=1..k} 1/j`, `c_i = (-1)^{i-1} C(k, i) / i`.
    pub fn equidistant(k: usize) -> Result<Self> {
        check_steps(Layout::Equidistant, k)?;
        let mut coefficients = Vec::with_capacity(k + 1);
        let c0: BigRational = (1..=k as i64).map(|j| ratio(1, j)).sum();
        coefficients.push(-c0);
        let mut binom = BigInt::one();
        for i in 1..=k {
            binom = binom * BigInt::from(k + 1 - i) / BigInt::from(i);
            let sign = if i % 2 == 1 { 1 } else { -1 };
            coefficients.push(BigRational::new(binom.clone() * sign, BigInt::from(i)));
        }
        Ok(Self {
            layout: Layout::Equidistant,
            coefficients,
        })
    }

    /// `c_0 = -Σ_{j=1..k} 1/j^2`,
    /// `c_i = (-1)^{k-1} (k!)^2 / (i^2 Π_{j≠i} (i^2 - j^2))`.
    pub fn squared(k: usize) -> Result<Self> {
        check_steps(Layout::Squared, k)?;
        let mut coefficients = Vec::with_capacity(k + 1);
        let c0: BigRational = (1..=k as i64).map(|j| ratio(1, j * j)).sum();
        coefficients.push(-c0);
        let k_fact: BigInt = (1..=k).map(BigInt::from).product();
        let sign = BigInt::from(if k % 2 == 1 { 1 } else { -1 });
        let numerator: BigInt = &k_fact * &k_fact * sign;
        for i in 1..=k as i64 {
            let mut denominator = BigInt::from(i * i);
            for j in 0..=k as i64 {
                if j != i {
                    denominator *= BigInt::from(i * i - j * j);
                }
            }
            coefficients.push(BigRational::new(numerator.clone(), denominator));
        }
        Ok(Self {
            layout: Layout::Squared,
            coefficients,
        })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn steps(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn coefficients(&self) -> &[BigRational] {
        &self.coefficients
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.coefficients.iter().map(rational_to_f64).collect()
    }

    /// Dense coefficients of the characteristic polynomial, highest degree
    /// first. Equidistant: `Σ c_i λ^{k-i}`; squared: `Σ c_i λ^{k²-i²}`.
    pub fn characteristic_polynomial(&self) -> Vec<BigRational> {
        let k = self.steps();
        let degree = self.layout.offset(k);
        let mut poly = vec![BigRational::zero(); degree + 1];
        for (i, c) in self.coefficients.iter().enumerate() {
            poly[self.layout.offset(i)] = c.clone();
        }
        poly
    }
}

fn check_steps(layout: Layout, k: usize) -> Result<()> {
    if k == 0 || k > layout.max_steps() {
        return Err(Error::StencilSteps {
            layout: layout.name(),
            k,
            max: layout.max_steps(),
        });
    }
    Ok(())
}

pub(crate) fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN)
    })
}

/// Horner evaluation in exact arithmetic.
pub fn eval_polynomial(poly: &[BigRational], x: &BigRational) -> BigRational {
    poly.iter()
        .fold(BigRational::zero(), |acc, c| acc * x + c)
}

#[derive(Debug, Clone)]
pub struct RootReport {
    pub steps: usize,
    pub layout: Layout,
    /// All roots of the characteristic polynomial; the first entry is the
    /// consistency root `λ = 1`.
    pub roots: Vec<Complex<f64>>,
    pub max_nontrivial_modulus: f64,
    pub satisfied: bool,
}

/// Root-condition analysis of the `k`-step scheme with the given layout.
///
/// The factor `λ - 1` is divided out exactly before the remaining roots are
/// computed as companion-matrix eigenvalues, so the root at one is exact and
/// its simplicity is decided in rational arithmetic.
pub fn root_condition_report(k: usize, layout: Layout) -> Result<RootReport> {
    let stencil = Stencil::new(layout, k)?;
    let poly = stencil.characteristic_polynomial();
    let (quotient, remainder) = deflate_unit_root(&poly);
    debug_assert!(remainder.is_zero());
    let unit_root_simple = !eval_polynomial(&quotient, &BigRational::one()).is_zero();

    let monic: Vec<f64> = {
        let lead = rational_to_f64(&quotient[0]);
        quotient[1..]
            .iter()
            .map(|c| rational_to_f64(c) / lead)
            .collect()
    };
    let others = companion_roots(&monic)?;

    let mut roots = Vec::with_capacity(others.len() + 1);
    roots.push(Complex::new(1.0, 0.0));
    roots.extend(others.iter().copied());

    let max_nontrivial_modulus = others.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let inside = roots.iter().all(|z| z.norm() <= 1.0 + UNIT_CIRCLE_TOL);
    let unimodular_simple = roots.iter().enumerate().all(|(a, za)| {
        if (za.norm() - 1.0).abs() > UNIT_CIRCLE_TOL {
            return true;
        }
        if a == 0 && !unit_root_simple {
            return false;
        }
        roots
            .iter()
            .enumerate()
            .all(|(b, zb)| a == b || (za - zb).norm() > CLUSTER_TOL)
    });

    Ok(RootReport {
        steps: k,
        layout,
        roots,
        max_nontrivial_modulus,
        satisfied: inside && unit_root_simple && unimodular_simple,
    })
}

/// Synthetic division by `λ - 1`.
fn deflate_unit_root(poly: &[BigRational]) -> (Vec<BigRational>, BigRational) {
    let mut quotient = Vec::with_capacity(poly.len() - 1);
    let mut acc = BigRational::zero();
    for c in &poly[..poly.len() - 1] {
        acc += c;
        quotient.push(acc.clone());
    }
    let remainder = acc + &poly[poly.len() - 1];
    (quotient, remainder)
}

/// Roots of `λ^n + a_1 λ^{n-1} + ... + a_n` (`monic_tail = [a_1..a_n]`).
pub fn companion_roots(monic_tail: &[f64]) -> Result<Vec<Complex<f64>>> {
    let n = monic_tail.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut companion = DMatrix::<f64>::zeros(n, n);
    for (j, a) in monic_tail.iter().enumerate() {
        companion[(0, j)] = -a;
    }
    for i in 1..n {
        companion[(i, i - 1)] = 1.0;
    }
    balance(&mut companion);
    let schur = nalgebra::linalg::Schur::try_new(companion, f64::EPSILON, 100 * n)
        .ok_or(Error::RootFinding { degree: n })?;
    let mut roots: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    for z in roots.iter_mut() {
        *z = newton_polish(monic_tail, *z);
    }
    roots.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(a.im.total_cmp(&b.im)));
    Ok(roots)
}

/// Parlett–Reinsch diagonal balancing with radix 2.
fn balance(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    let radix = 2.0f64;
    let sqrdx = radix * radix;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut g = r / radix;
            let mut f = 1.0;
            let mut c_scaled = c;
            while c_scaled < g {
                f *= radix;
                c_scaled *= sqrdx;
            }
            g = r * radix;
            while c_scaled > g {
                f /= radix;
                c_scaled /= sqrdx;
            }
            if (c_scaled + r / f) / f < 0.95 * s {
                done = false;
                let g = 1.0 / f;
                for j in 0..n {
                    a[(i, j)] *= g;
                }
                for j in 0..n {
                    a[(j, i)] *= f;
                }
            }
        }
    }
}

fn newton_polish(monic_tail: &[f64], mut z: Complex<f64>) -> Complex<f64> {
    let eval = |z: Complex<f64>| {
        let mut p = Complex::new(1.0, 0.0);
        let mut dp = Complex::new(0.0, 0.0);
        for &a in monic_tail {
            dp = dp * z + p;
            p = p * z + a;
        }
        (p, dp)
    };
    let (mut p, _) = eval(z);
    for _ in 0..3 {
        let (_, dp) = eval(z);
        if dp.norm() == 0.0 {
            break;
        }
        let candidate = z - p / dp;
        let (pc, _) = eval(candidate);
        if !(pc.norm() < p.norm()) {
            break;
        }
        z = candidate;
        p = pc;
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;
    use num_traits::Signed;

    fn r(n: i64, d: i64) -> BigRational {
        ratio(n, d)
    }

    fn coeffs(layout: Layout, k: usize) -> Vec<BigRational> {
        Stencil::new(layout, k).unwrap().coefficients().to_vec()
    }

    #[test]
    fn rejects_zero_and_oversized_steps() {
        assert!(Stencil::equidistant(0).is_err());
        assert!(Stencil::squared(0).is_err());
        assert!(Stencil::equidistant(9).is_err());
        assert!(Stencil::squared(18).is_err());
        assert!(root_condition_report(18, Layout::Squared).is_err());
    }

    #[test]
    fn equidistant_examples() {
        assert_eq!(coeffs(Layout::Equidistant, 1), vec![r(-1, 1), r(1, 1)]);
        assert_eq!(
            coeffs(Layout::Equidistant, 3),
            vec![r(-11, 6), r(3, 1), r(-3, 2), r(1, 3)]
        );
        assert_eq!(
            coeffs(Layout::Equidistant, 6),
            vec![
                r(-49, 20),
                r(6, 1),
                r(-15, 2),
                r(20, 3),
                r(-15, 4),
                r(6, 5),
                r(-1, 6)
            ]
        );
    }

    #[test]
    fn squared_examples() {
        assert_eq!(coeffs(Layout::Squared, 1), vec![r(-1, 1), r(1, 1)]);
        assert_eq!(
            coeffs(Layout::Squared, 3),
            vec![r(-49, 36), r(3, 2), r(-3, 20), r(1, 90)]
        );
        assert_eq!(coeffs(Layout::Squared, 8)[8], r(-1, 411_840));
    }

    #[test]
    fn exactness_on_monomials() {
        // (Σ c_i (o_i h)^p) / h equals d/dt t^p at 0: 1 for p = 1, else 0.
        for layout in [Layout::Equidistant, Layout::Squared] {
            for k in 1..=layout.max_steps() {
                let s = Stencil::new(layout, k).unwrap();
                for p in 0..=k as u32 {
                    let total: BigRational = s
                        .coefficients()
                        .iter()
                        .enumerate()
                        .map(|(i, c)| c * BigRational::from_integer(BigInt::from(layout.offset(i)).pow(p)))
                        .sum();
                    let expected = if p == 1 { BigRational::one() } else { BigRational::zero() };
                    assert_eq!(total, expected, "{layout} k={k} p={p}");
                }
            }
        }
    }

    #[test]
    fn characteristic_polynomial_examples() {
        let sq1 = Stencil::squared(1).unwrap().characteristic_polynomial();
        assert_eq!(sq1, vec![r(-1, 1), r(1, 1)]);
        let eq2 = Stencil::equidistant(2).unwrap().characteristic_polynomial();
        assert_eq!(eq2, vec![r(-3, 2), r(2, 1), r(-1, 2)]);
        let sq2 = Stencil::squared(2).unwrap().characteristic_polynomial();
        assert_eq!(
            sq2,
            vec![r(-5, 4), r(4, 3), r(0, 1), r(0, 1), r(-1, 12)]
        );
    }

    #[test]
    fn characteristic_polynomial_vanishes_at_one() {
        for layout in [Layout::Equidistant, Layout::Squared] {
            for k in 1..=layout.max_steps() {
                let p = Stencil::new(layout, k).unwrap().characteristic_polynomial();
                assert_eq!(p.len(), layout.offset(k) + 1);
                assert!(eval_polynomial(&p, &BigRational::one()).is_zero());
            }
        }
    }

    #[test]
    fn root_condition_examples() {
        let sq3 = root_condition_report(3, Layout::Squared).unwrap();
        assert!((sq3.max_nontrivial_modulus - 0.636).abs() <= 1e-3);
        assert!(sq3.satisfied);
        assert_eq!(sq3.roots.len(), 9);

        let sq17 = root_condition_report(17, Layout::Squared).unwrap();
        assert!((sq17.max_nontrivial_modulus - 0.935).abs() <= 5e-3);
        assert!(sq17.satisfied);
        assert_eq!(sq17.roots.len(), 289);

        assert!(!root_condition_report(7, Layout::Equidistant).unwrap().satisfied);
    }

    #[test]
    fn root_condition_verdicts() {
        for k in 1..=MAX_EQUIDISTANT_STEPS {
            let rep = root_condition_report(k, Layout::Equidistant).unwrap();
            assert_eq!(rep.satisfied, k <= 6, "equidistant k={k}");
            assert!((rep.roots[0] - Complex::new(1.0, 0.0)).norm() <= 1e-9);
        }
        for k in 1..=MAX_SQUARED_STEPS {
            let rep = root_condition_report(k, Layout::Squared).unwrap();
            assert!(rep.satisfied, "squared k={k}");
        }
    }

    #[test]
    fn companion_roots_of_known_polynomial() {
        // (λ - 2)(λ + 0.5)(λ^2 + 1) = λ^4 - 1.5λ^3 + 0λ^2 - 1.5λ - 1
        let roots = companion_roots(&[-1.5, 0.0, -1.5, -1.0]).unwrap();
        let expected = [
            Complex::new(2.0, 0.0),
            Complex::new(-0.5, 0.0),
            Complex::new(0.0, 1.0),
            Complex::new(0.0, -1.0),
        ];
        for e in expected {
            assert!(roots.iter().any(|z| (z - e).norm() < 1e-12), "{roots:?}");
        }
    }

    /// Fixed-point arithmetic with `SCALE` fractional bits.
    const SCALE: u64 = 1200;

    fn fixed_exp_of_dyadic(e: u32) -> BigInt {
        // exp(2^-e) by Taylor series.
        let one = BigInt::one() << SCALE;
        let mut term = one.clone();
        let mut sum = one;
        let mut n = 1u64;
        loop {
            term = (term >> e) / BigInt::from(n);
            if term.is_zero() {
                break;
            }
            sum += &term;
            n += 1;
        }
        sum
    }

    fn fixed_mul(a: &BigInt, b: &BigInt) -> BigInt {
        (a * b) >> SCALE
    }

    fn log2_fixed(x: &BigInt) -> f64 {
        let mag: BigUint = x.abs().to_biguint().unwrap();
        let bits = mag.bits();
        let shift = bits.saturating_sub(60);
        let top = (&mag >> shift).to_f64().unwrap();
        top.log2() + shift as f64 - SCALE as f64
    }

    #[test]
    fn empirical_order_on_exponential() {
        for layout in [Layout::Equidistant, Layout::Squared] {
            for k in 1..=layout.max_steps() {
                let s = Stencil::new(layout, k).unwrap();
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for e in 4..=9u32 {
                    let step = fixed_exp_of_dyadic(e);
                    let mut power = BigInt::one() << SCALE;
                    let mut offset = 0;
                    let mut acc = BigInt::zero();
                    for (i, c) in s.coefficients().iter().enumerate() {
                        while offset < layout.offset(i) {
                            power = fixed_mul(&power, &step);
                            offset += 1;
                        }
                        acc += &power * c.numer() / c.denom();
                    }
                    // (Σ c_i e^{o_i h}) / h - 1
                    let err = (acc << e) - (BigInt::one() << SCALE);
                    xs.push(-(e as f64));
                    ys.push(log2_fixed(&err));
                }
                let n = xs.len() as f64;
                let mx = xs.iter().sum::<f64>() / n;
                let my = ys.iter().sum::<f64>() / n;
                let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
                let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
                let order = num / den;
                assert!(order >= k as f64 - 0.3, "{layout} k={k} order={order}");
            }
        }
    }
}
