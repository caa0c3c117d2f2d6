//! Fully discrete backward time stepping.
//!
//! Both schemes march `n = N - s, ..., 0` (with `s` bootstrap layers taken
//! from the exact solution). At each node `z^n` is explicit in the later
//! layers; `y^n` solves the implicit relation
//! `-c_0 y^n = Σ_j c_j Ê[y^{n+o_j}] + h f(t_n, y^n, z^n)` by Picard iteration,
//! where `o_j` is `j` for the baseline and `j^2` for the nested scheme.
//!
//! Nodes of one layer are independent and solved in parallel; results do not
//! depend on the thread count.

mod baseline;
mod nested;

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{IndexBox, NestedGrid, OutsideDomain, RadiusPolicy, UniformGrid};
use crate::problems::BsdeProblem;

pub use baseline::BaselineStepper;
pub use nested::NestedStepper;

pub const DEFAULT_PICARD_TOL: f64 = 1e-12;
pub const DEFAULT_PICARD_MAX_ITERS: usize = 100;

/// Layers solved in parallel are split into chunks of at least this many
/// nodes.
const MIN_PARALLEL_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum Scheme {
    /// Equidistant `k`-step stencil, `L`-point quadrature, degree-`r`
    /// interpolation on a uniform grid.
    Baseline {
        k: usize,
        #[serde(rename = "L")]
        quadrature_order: usize,
        r: usize,
    },
    /// Squared 3-step stencil, 3-point quadrature, nested grid.
    Nested3,
}

impl Scheme {
    /// Number of exact layers needed before the first solved layer.
    pub fn bootstrap_count(&self) -> usize {
        match *self {
            Scheme::Baseline { k, .. } => k,
            Scheme::Nested3 => 9,
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            Scheme::Baseline {
                k,
                quadrature_order,
                r,
            } => format!("baseline(k={k},L={quadrature_order},r={r})"),
            Scheme::Nested3 => "nested3".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Bootstrap {
    #[default]
    ExactSolution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub steps: usize,
    pub scheme: Scheme,
    pub picard_tol: f64,
    pub picard_max_iters: usize,
    pub bootstrap: Bootstrap,
    /// Worker threads; 0 picks the rayon default.
    pub threads: usize,
    /// Baseline domain radius.
    pub radius_policy: RadiusPolicy,
    /// Baseline treatment of quadrature points beyond the domain.
    pub outside: OutsideDomain,
}

impl SolverConfig {
    pub fn new(steps: usize, scheme: Scheme) -> Self {
        Self {
            steps,
            scheme,
            picard_tol: DEFAULT_PICARD_TOL,
            picard_max_iters: DEFAULT_PICARD_MAX_ITERS,
            bootstrap: Bootstrap::ExactSolution,
            threads: 0,
            radius_policy: RadiusPolicy::default(),
            outside: OutsideDomain::default(),
        }
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.picard_tol > 0.0) || self.picard_max_iters == 0 {
            return Err(Error::Config(
                "Picard tolerance must be positive and the iteration cap nonzero".into(),
            ));
        }
        match self.scheme {
            Scheme::Baseline {
                k,
                quadrature_order,
                r,
            } => {
                if k == 0 || k > 6 {
                    return Err(Error::Config(format!(
                        "baseline step count k={k} must lie in 1..=6 (root condition)"
                    )));
                }
                if r < k {
                    return Err(Error::Config(format!(
                        "interpolation degree r={r} must be at least k={k}"
                    )));
                }
                if quadrature_order == 0 {
                    return Err(Error::Config("quadrature order must be >= 1".into()));
                }
                if self.steps <= k {
                    return Err(Error::Config(format!(
                        "baseline needs N > k (got N={}, k={k})",
                        self.steps
                    )));
                }
            }
            Scheme::Nested3 => {
                if self.steps < 10 {
                    return Err(Error::Config(format!(
                        "nested scheme needs N >= 10 (9 bootstrap layers plus one step), got {}",
                        self.steps
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Grids whose node set may vary with the time layer.
pub trait LayeredGrid {
    fn dim(&self) -> usize;
    fn layer_nodes(&self, n: usize) -> IndexBox;
    fn point_into(&self, l: &[i64], out: &mut [f64]);
}

impl LayeredGrid for NestedGrid {
    fn dim(&self) -> usize {
        NestedGrid::dim(self)
    }

    fn layer_nodes(&self, n: usize) -> IndexBox {
        self.layer(n)
    }

    fn point_into(&self, l: &[i64], out: &mut [f64]) {
        NestedGrid::point_into(self, l, out)
    }
}

impl LayeredGrid for UniformGrid {
    fn dim(&self) -> usize {
        UniformGrid::dim(self)
    }

    fn layer_nodes(&self, _n: usize) -> IndexBox {
        self.nodes()
    }

    fn point_into(&self, l: &[i64], out: &mut [f64]) {
        UniformGrid::point_into(self, l, out)
    }
}

/// `y` and `z` of one time layer, node-major: `y[flat * m + c]`,
/// `z[(flat * m + c) * d + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionLayer {
    pub time_index: usize,
    pub nodes: IndexBox,
    pub m: usize,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl SolutionLayer {
    pub fn d(&self) -> usize {
        self.nodes.dim()
    }

    pub fn y_at(&self, l: &[i64]) -> &[f64] {
        let f = self.nodes.flat(l);
        &self.y[f * self.m..(f + 1) * self.m]
    }

    pub fn z_at(&self, l: &[i64]) -> &[f64] {
        let f = self.nodes.flat(l);
        let w = self.m * self.d();
        &self.z[f * w..(f + 1) * w]
    }
}

/// Exact-solution layers `N - count + 1 ..= N`, in ascending time order.
pub fn bootstrap_layers<G: LayeredGrid + ?Sized>(
    problem: &BsdeProblem,
    count: usize,
    grid: &G,
    steps: usize,
    h: f64,
) -> Result<Vec<SolutionLayer>> {
    let exact = problem
        .exact
        .as_ref()
        .ok_or_else(|| Error::MissingExactSolution(problem.name.clone()))?;
    let (m, d) = (problem.m, problem.d);
    let mut layers = Vec::with_capacity(count);
    let mut l = vec![0i64; d];
    let mut x = vec![0.0; d];
    for n in steps + 1 - count..=steps {
        let t = n as f64 * h;
        let nodes = grid.layer_nodes(n);
        let mut y = vec![0.0; nodes.len() * m];
        let mut z = vec![0.0; nodes.len() * m * d];
        for f in 0..nodes.len() {
            nodes.multi_index_into(f, &mut l);
            grid.point_into(&l, &mut x);
            (exact.value)(t, &x, &mut y[f * m..(f + 1) * m]);
            (exact.gradient)(t, &x, &mut z[f * m * d..(f + 1) * m * d]);
        }
        layers.push(SolutionLayer {
            time_index: n,
            nodes,
            m,
            y,
            z,
        });
    }
    Ok(layers)
}

/// Per-layer statistics reported by the steppers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub max_picard_iterations: usize,
    pub interpolation_calls: u64,
}

impl StepStats {
    fn merge(self, other: Self) -> Self {
        Self {
            max_picard_iterations: self.max_picard_iterations.max(other.max_picard_iterations),
            interpolation_calls: self.interpolation_calls + other.interpolation_calls,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutput {
    pub y0: Vec<f64>,
    pub z0: Vec<f64>,
    pub layers_computed: usize,
    /// Time spent in the backward loop (excludes setup and bootstrap).
    pub wall_time: Duration,
    pub max_picard_iterations: usize,
    pub interpolation_calls: u64,
}

impl SolveOutput {
    /// Component-wise maximum absolute errors of `(y0, z0)` against the
    /// exact solution at `(0, origin)`.
    pub fn errors(&self, problem: &BsdeProblem) -> Option<(f64, f64)> {
        let origin = vec![0.0; problem.d];
        let y = problem.exact_y(0.0, &origin)?;
        let z = problem.exact_z(0.0, &origin)?;
        let sup = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(u, v)| (u - v).abs())
                .fold(0.0, f64::max)
        };
        Some((sup(&self.y0, &y), sup(&self.z0, &z)))
    }
}

/// Fixed-point solve of `y = -(rhs + h f(t, y, z)) / c0`, starting from `y`.
///
/// Returns the iteration count, or the last update norm on failure.
pub(crate) fn picard(
    problem: &BsdeProblem,
    t: f64,
    h: f64,
    lead: f64,
    rhs: &[f64],
    z: &[f64],
    y: &mut [f64],
    f: &mut [f64],
    tol: f64,
    max_iters: usize,
) -> std::result::Result<usize, f64> {
    let mut update = f64::INFINITY;
    for iter in 1..=max_iters {
        problem.generator(t, y, z, f);
        update = 0.0;
        for c in 0..y.len() {
            let next = -(rhs[c] + h * f[c]) / lead;
            update = update.max((next - y[c]).abs());
            y[c] = next;
        }
        if !update.is_finite() {
            return Err(update);
        }
        if update <= tol {
            return Ok(iter);
        }
    }
    Err(update)
}

pub(crate) fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))
}

/// Solves every node of one layer with `node(flat, y, z)`, in parallel.
pub(crate) fn solve_layer<S, I, F>(
    len: usize,
    m: usize,
    d: usize,
    init: I,
    node: F,
) -> Result<(Vec<f64>, Vec<f64>, StepStats)>
where
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize, &mut [f64], &mut [f64]) -> Result<StepStats> + Sync + Send,
{
    let mut y = vec![0.0; len * m];
    let mut z = vec![0.0; len * m * d];
    let stats = y
        .par_chunks_mut(m)
        .zip(z.par_chunks_mut(m * d))
        .enumerate()
        .with_min_len(MIN_PARALLEL_CHUNK)
        .map_init(&init, |scratch, (flat, (yv, zv))| node(scratch, flat, yv, zv))
        .try_reduce(StepStats::default, |a, b| Ok(a.merge(b)))?;
    Ok((y, z, stats))
}

/// Runs the configured scheme from the terminal layers down to `t = 0`.
pub fn solve(problem: &BsdeProblem, cfg: &SolverConfig) -> Result<SolveOutput> {
    cfg.validate()?;
    if problem.exact.is_none() {
        return Err(Error::MissingExactSolution(problem.name.clone()));
    }
    let pool = thread_pool(cfg.threads)?;
    pool.install(|| match cfg.scheme {
        Scheme::Nested3 => {
            let stepper = NestedStepper::new(problem, cfg)?;
            run(problem, cfg, stepper.grid(), |n, history| {
                stepper.step(problem, n, history)
            })
        }
        Scheme::Baseline { .. } => {
            let stepper = BaselineStepper::new(problem, cfg)?;
            run(problem, cfg, stepper.grid(), |n, history| {
                stepper.step(problem, n, history)
            })
        }
    })
}

fn run<G, F>(problem: &BsdeProblem, cfg: &SolverConfig, grid: &G, step: F) -> Result<SolveOutput>
where
    G: LayeredGrid,
    F: Fn(usize, &VecDeque<SolutionLayer>) -> Result<(SolutionLayer, StepStats)>,
{
    let steps = cfg.steps;
    let h = problem.horizon / steps as f64;
    let count = cfg.scheme.bootstrap_count();
    // history[s - 1] holds layer n + s.
    let mut history: VecDeque<SolutionLayer> =
        bootstrap_layers(problem, count, grid, steps, h)?.into();

    let start = Instant::now();
    let mut stats = StepStats::default();
    let mut layers_computed = 0;
    for n in (0..=steps - count).rev() {
        let (layer, s) = step(n, &history)?;
        stats = stats.merge(s);
        layers_computed += 1;
        history.push_front(layer);
        history.truncate(count);
    }
    let wall_time = start.elapsed();

    let first = &history[0];
    let origin = vec![0i64; problem.d];
    Ok(SolveOutput {
        y0: first.y_at(&origin).to_vec(),
        z0: first.z_at(&origin).to_vec(),
        layers_computed,
        wall_time,
        max_picard_iterations: stats.max_picard_iterations,
        interpolation_calls: stats.interpolation_calls,
    })
}
