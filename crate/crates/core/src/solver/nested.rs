use std::collections::VecDeque;

use super::{picard, solve_layer, SolutionLayer, SolverConfig, StepStats};
use crate::error::{Error, Result};
use crate::grid::NestedGrid;
use crate::problems::BsdeProblem;
use crate::quadrature::{QuadratureRule, TensorRule};
use crate::stencil::Stencil;

const STEPS: usize = 3;

/// Third-order interpolation-free stepper.
///
/// For node `l` of layer `n`:
///
/// ```text
/// z^{n,l} = (1/h) Σ_j β_j j sqrt(2h) Σ_i w_i y^{n+j², l+j(i-2)} a_iᵀ
/// -β_0 y^{n,l} = Σ_j β_j Σ_i w_i y^{n+j², l+j(i-2)} + h f(t_n, y^{n,l}, z^{n,l})
/// ```
///
/// with `w_i` the normalised tensor weights of the 3-point rule. Every value
/// read is a stored node of a later layer.
#[derive(Debug, Clone)]
pub struct NestedStepper {
    grid: NestedGrid,
    h: f64,
    tensor: TensorRule,
    beta: Vec<f64>,
    /// Per tensor point, the per-axis index shift `i - 2` (1-based `i`).
    shifts: Vec<Vec<i64>>,
    picard_tol: f64,
    picard_max_iters: usize,
}

impl NestedStepper {
    pub fn new(problem: &BsdeProblem, cfg: &SolverConfig) -> Result<Self> {
        let h = problem.horizon / cfg.steps as f64;
        let grid = NestedGrid::new(cfg.steps, problem.d, h)?;
        let rule = QuadratureRule::gauss_hermite(3)?;
        let tensor = TensorRule::new(&rule, problem.d);
        let shifts = (0..tensor.len())
            .map(|p| tensor.multi_index(p).iter().map(|&i| i as i64 - 1).collect())
            .collect();
        Ok(Self {
            grid,
            h,
            tensor,
            beta: Stencil::squared(STEPS)?.to_f64(),
            shifts,
            picard_tol: cfg.picard_tol,
            picard_max_iters: cfg.picard_max_iters,
        })
    }

    pub fn grid(&self) -> &NestedGrid {
        &self.grid
    }

    /// Computes layer `n` from `history`, where `history[s - 1]` is layer
    /// `n + s` for `s = 1..=9`.
    pub fn step(
        &self,
        problem: &BsdeProblem,
        n: usize,
        history: &VecDeque<SolutionLayer>,
    ) -> Result<(SolutionLayer, StepStats)> {
        let (m, d) = (problem.m, problem.d);
        debug_assert!(history.len() >= STEPS * STEPS);
        let nodes = self.grid.layer(n);
        let t = n as f64 * self.h;
        let sqrt_2h = (2.0 * self.h).sqrt();
        let lead = self.beta[0];

        // Flat-offset of each neighbour relative to the node's own position in
        // the target layer, and the per-j weight factors.
        let targets: Vec<(&SolutionLayer, Vec<isize>)> = (1..=STEPS)
            .map(|j| {
                let layer = &history[j * j - 1];
                debug_assert_eq!(layer.time_index, n + j * j);
                let side = layer.nodes.side() as isize;
                let offsets = self
                    .shifts
                    .iter()
                    .map(|s| {
                        s.iter()
                            .fold(0isize, |acc, &v| acc * side + v as isize * j as isize)
                    })
                    .collect();
                (layer, offsets)
            })
            .collect();

        let init = || (vec![0i64; d], vec![0.0; m], vec![0.0; m]);
        let (y, z, stats) = solve_layer(nodes.len(), m, d, init, |scratch, flat, y, z| {
            let (l, rhs, f) = scratch;
            nodes.multi_index_into(flat, l);
            rhs.fill(0.0);
            z.fill(0.0);
            for (j, (layer, offsets)) in targets.iter().enumerate() {
                let j = j + 1;
                let beta = self.beta[j];
                let z_scale = beta * j as f64 * sqrt_2h / self.h;
                let base = layer.nodes.flat(l) as isize;
                for (p, &off) in offsets.iter().enumerate() {
                    let w = self.tensor.weight(p);
                    let a = self.tensor.node(p);
                    let at = (base + off) as usize * m;
                    let vals = &layer.y[at..at + m];
                    for r in 0..m {
                        let wv = w * vals[r];
                        rhs[r] += beta * wv;
                        for c in 0..d {
                            z[r * d + c] += z_scale * wv * a[c];
                        }
                    }
                }
            }
            y.copy_from_slice(history[0].y_at(l));
            let iters = picard(
                problem,
                t,
                self.h,
                lead,
                rhs,
                z,
                y,
                f,
                self.picard_tol,
                self.picard_max_iters,
            )
            .map_err(|residual| Error::PicardDivergence {
                layer: n,
                node: l.clone(),
                residual,
            })?;
            Ok(StepStats {
                max_picard_iterations: iters,
                interpolation_calls: 0,
            })
        })?;

        Ok((
            SolutionLayer {
                time_index: n,
                nodes,
                m,
                y,
                z,
            },
            stats,
        ))
    }
}
