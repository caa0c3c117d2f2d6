//! Spatial grids.
//!
//! [`NestedGrid`] is the family of layers `D^n = {l Δx0 : |l_k| <= n}` with
//! `Δx0 = sqrt(3h)`. Since `sqrt(2h) a_i = (i - 2) Δx0` for the 3-point
//! Gauss–Hermite nodes, every quadrature point of layer `n` at lag `j` is the
//! node `l + j (i - 2)` of layer `n + j`, so no interpolation is needed.
//!
//! [`UniformGrid`] is the fixed equidistant grid of the baseline scheme,
//! evaluated off-grid by tensor-product Lagrange interpolation.

use crate::error::{Error, Result};

/// Index box `[-radius, radius]^dim`, stored densely with the multi-index
/// `l` at flat position `Σ_k (l_k + radius) (2 radius + 1)^{dim-1-k}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexBox {
    radius: usize,
    dim: usize,
}

impl IndexBox {
    pub fn new(radius: usize, dim: usize) -> Self {
        Self { radius, dim }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, l: &[i64]) -> bool {
        l.len() == self.dim && l.iter().all(|&v| v.unsigned_abs() as usize <= self.radius)
    }

    /// Flat position of `l`; `l` must be contained in the box.
    pub fn flat(&self, l: &[i64]) -> usize {
        debug_assert!(self.contains(l), "{l:?} outside radius {}", self.radius);
        let side = self.side() as i64;
        let r = self.radius as i64;
        l.iter().fold(0i64, |acc, &v| acc * side + (v + r)) as usize
    }

    pub fn multi_index_into(&self, flat: usize, out: &mut [i64]) {
        let side = self.side();
        let r = self.radius as i64;
        let mut rest = flat;
        for k in (0..self.dim).rev() {
            out[k] = (rest % side) as i64 - r;
            rest /= side;
        }
    }

    pub fn multi_index(&self, flat: usize) -> Vec<i64> {
        let mut out = vec![0; self.dim];
        self.multi_index_into(flat, &mut out);
        out
    }

    /// All multi-indices in flat order.
    pub fn iter(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.len()).map(move |f| self.multi_index(f))
    }
}

/// `l + j (i - 2)` component-wise, with `i` the 1-based 3-point node index.
pub fn shift_index(l: &[i64], j: usize, i: &[usize]) -> Vec<i64> {
    debug_assert_eq!(l.len(), i.len());
    l.iter()
        .zip(i)
        .map(|(&lk, &ik)| {
            debug_assert!((1..=3).contains(&ik));
            lk + j as i64 * (ik as i64 - 2)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NestedGrid {
    dim: usize,
    layers: usize,
    step: f64,
    spacing: f64,
}

impl NestedGrid {
    pub fn new(layers: usize, dim: usize, step: f64) -> Result<Self> {
        if layers == 0 || dim == 0 || !(step > 0.0) {
            return Err(Error::Grid(format!(
                "nested grid needs N >= 1, d >= 1, h > 0 (got N={layers}, d={dim}, h={step})"
            )));
        }
        Ok(Self {
            dim,
            layers,
            step,
            spacing: (3.0 * step).sqrt(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// `Δx0 = sqrt(3h)`.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn layer(&self, n: usize) -> IndexBox {
        IndexBox::new(n, self.dim)
    }

    pub fn point_into(&self, l: &[i64], out: &mut [f64]) {
        for (o, &v) in out.iter_mut().zip(l) {
            *o = v as f64 * self.spacing;
        }
    }

    pub fn point(&self, l: &[i64]) -> Vec<f64> {
        l.iter().map(|&v| v as f64 * self.spacing).collect()
    }
}

/// How the baseline domain radius is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadiusPolicy {
    /// `R = max(sigmas * sqrt(T), reach)` where `reach` is the distance
    /// covered by one quadrature evaluation from the origin.
    Gaussian { sigmas: f64 },
    Fixed(f64),
}

impl Default for RadiusPolicy {
    fn default() -> Self {
        RadiusPolicy::Gaussian { sigmas: 8.0 }
    }
}

/// What an evaluation outside `[-extent, extent]^d` does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutsideDomain {
    Reject,
    /// Evaluate the boundary stencil at the query clamped into the domain.
    #[default]
    Clamp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformGrid {
    dim: usize,
    spacing: f64,
    radius: f64,
    half_width: usize,
    degree: usize,
    outside: OutsideDomain,
}

impl UniformGrid {
    /// Spacing `h^{(k+1)/(r+1)}`, which balances the `O(h^k)` time error
    /// against the `O(Δx^{r+1})` interpolation error.
    pub fn build(
        dim: usize,
        horizon: f64,
        step: f64,
        k: usize,
        degree: usize,
        policy: RadiusPolicy,
        reach: f64,
    ) -> Result<Self> {
        if degree < 1 {
            return Err(Error::Grid("interpolation degree must be >= 1".into()));
        }
        if degree > 16 {
            return Err(Error::Grid(format!("interpolation degree {degree} exceeds 16")));
        }
        if dim == 0 || !(step > 0.0) || !(horizon > 0.0) {
            return Err(Error::Grid(format!(
                "uniform grid needs d >= 1, T > 0, h > 0 (got d={dim}, T={horizon}, h={step})"
            )));
        }
        let spacing = step.powf((k as f64 + 1.0) / (degree as f64 + 1.0));
        let radius = match policy {
            RadiusPolicy::Gaussian { sigmas } => (sigmas * horizon.sqrt()).max(reach),
            RadiusPolicy::Fixed(r) => r,
        };
        Self::with_spacing(dim, spacing, radius, degree)
    }

    pub fn with_spacing(dim: usize, spacing: f64, radius: f64, degree: usize) -> Result<Self> {
        let half_width = (radius / spacing * (1.0 + 1e-12)).floor() as usize;
        if 2 * half_width < degree {
            return Err(Error::Grid(format!(
                "radius {radius} holds {} columns, fewer than degree {degree} + 1",
                2 * half_width + 1
            )));
        }
        Ok(Self {
            dim,
            spacing,
            radius,
            half_width,
            degree,
            outside: OutsideDomain::default(),
        })
    }

    pub fn with_outside(mut self, outside: OutsideDomain) -> Self {
        self.outside = outside;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Requested radius `R`.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Largest node coordinate, `M Δx <= R`.
    pub fn extent(&self) -> f64 {
        self.half_width as f64 * self.spacing
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn outside(&self) -> OutsideDomain {
        self.outside
    }

    pub fn nodes(&self) -> IndexBox {
        IndexBox::new(self.half_width, self.dim)
    }

    pub fn point_into(&self, l: &[i64], out: &mut [f64]) {
        for (o, &v) in out.iter_mut().zip(l) {
            *o = v as f64 * self.spacing;
        }
    }

    /// First column and Lagrange weights of the stencil along one axis.
    ///
    /// The `r + 1` columns nearest to `u = q / Δx` are used, ties broken
    /// toward the origin, shifted to one-sided near the boundary.
    fn axis_stencil(&self, u: f64, weights: &mut [f64]) -> i64 {
        let r = self.degree as i64;
        let m = self.half_width as i64;
        let start = if r % 2 == 1 {
            u.floor() as i64 - (r - 1) / 2
        } else {
            let lo = u.floor();
            let frac = u - lo;
            let centre = if frac > 0.5 || (frac == 0.5 && lo < 0.0) {
                lo as i64 + 1
            } else {
                lo as i64
            };
            centre - r / 2
        };
        let start = start.clamp(-m, m - r);
        for (i, w) in weights.iter_mut().enumerate() {
            let xi = (start + i as i64) as f64;
            let mut acc = 1.0;
            for jj in 0..=r {
                if jj as usize != i {
                    let xj = (start + jj) as f64;
                    acc *= (u - xj) / (xi - xj);
                }
            }
            *w = acc;
        }
        start
    }

    /// Tensor-product Lagrange interpolation of an `m`-valued field stored
    /// node-major (`values[flat * m + c]`) at query `q`.
    pub fn interpolate(&self, values: &[f64], m: usize, q: &[f64], out: &mut [f64]) -> Result<()> {
        let extent = self.extent();
        let mut scratch = InterpScratch::new(self.dim, self.degree);
        for (axis, &v) in q.iter().enumerate() {
            if !(v.abs() <= extent * (1.0 + 1e-12)) && self.outside == OutsideDomain::Reject {
                return Err(Error::DomainExceeded {
                    axis,
                    value: v,
                    extent,
                });
            }
        }
        self.interpolate_with(values, m, q, out, &mut scratch);
        Ok(())
    }

    /// Interpolation with caller-provided scratch; queries outside the domain
    /// are clamped onto it.
    pub(crate) fn interpolate_with(
        &self,
        values: &[f64],
        m: usize,
        q: &[f64],
        out: &mut [f64],
        scratch: &mut InterpScratch,
    ) {
        let d = self.dim;
        let width = self.degree + 1;
        let extent = self.extent();
        let nodes = self.nodes();
        for axis in 0..d {
            let v = q[axis].clamp(-extent, extent);
            let w = &mut scratch.weights[axis * width..(axis + 1) * width];
            scratch.starts[axis] = self.axis_stencil(v / self.spacing, w);
        }
        out[..m].fill(0.0);
        let side = nodes.side();
        let shift = self.half_width as i64;
        let total = width.pow(d as u32);
        let counter = &mut scratch.counter;
        counter.fill(0);
        for _ in 0..total {
            let mut weight = 1.0;
            let mut flat = 0usize;
            for axis in 0..d {
                let c = counter[axis];
                weight *= scratch.weights[axis * width + c];
                flat = flat * side + (scratch.starts[axis] + c as i64 + shift) as usize;
            }
            let base = flat * m;
            for (o, v) in out[..m].iter_mut().zip(&values[base..base + m]) {
                *o += weight * v;
            }
            for axis in (0..d).rev() {
                counter[axis] += 1;
                if counter[axis] < width {
                    break;
                }
                counter[axis] = 0;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct InterpScratch {
    weights: Vec<f64>,
    starts: Vec<i64>,
    counter: Vec<usize>,
}

impl InterpScratch {
    pub(crate) fn new(dim: usize, degree: usize) -> Self {
        Self {
            weights: vec![0.0; dim * (degree + 1)],
            starts: vec![0; dim],
            counter: vec![0; dim],
        }
    }
}
