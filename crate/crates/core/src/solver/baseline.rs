use std::collections::VecDeque;

use super::{picard, solve_layer, Scheme, SolutionLayer, SolverConfig, StepStats};
use crate::error::{Error, Result};
use crate::grid::{InterpScratch, OutsideDomain, UniformGrid};
use crate::problems::BsdeProblem;
use crate::quadrature::{QuadratureRule, TensorRule};
use crate::stencil::Stencil;

/// Equidistant `k`-step stepper on a uniform grid.
///
/// ```text
/// z^n = (1/h) Σ_{j=1..k} α_j Ê[y^{n+j} ΔWᵀ]
/// -α_0 y^n = Σ_{j=1..k} α_j Ê[y^{n+j}] + h f(t_n, y^n, z^n)
/// ```
///
/// The `L`-point quadrature points are off-grid, so each sample of a later
/// layer is a degree-`r` tensor Lagrange interpolation.
#[derive(Debug, Clone)]
pub struct BaselineStepper {
    grid: UniformGrid,
    h: f64,
    tensor: TensorRule,
    alpha: Vec<f64>,
    picard_tol: f64,
    picard_max_iters: usize,
}

impl BaselineStepper {
    pub fn new(problem: &BsdeProblem, cfg: &SolverConfig) -> Result<Self> {
        let Scheme::Baseline {
            k,
            quadrature_order,
            r,
        } = cfg.scheme
        else {
            return Err(Error::Config("baseline stepper needs a baseline scheme".into()));
        };
        let h = problem.horizon / cfg.steps as f64;
        let rule = QuadratureRule::gauss_hermite(quadrature_order)?;
        let reach = (2.0 * k as f64 * h).sqrt() * rule.max_node();
        let grid = UniformGrid::build(
            problem.d,
            problem.horizon,
            h,
            k,
            r,
            cfg.radius_policy,
            reach,
        )?
        .with_outside(cfg.outside);
        Ok(Self {
            grid,
            h,
            tensor: TensorRule::new(&rule, problem.d),
            alpha: Stencil::equidistant(k)?.to_f64(),
            picard_tol: cfg.picard_tol,
            picard_max_iters: cfg.picard_max_iters,
        })
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    /// Computes layer `n` from `history`, where `history[j - 1]` is layer
    /// `n + j` for `j = 1..=k`.
    pub fn step(
        &self,
        problem: &BsdeProblem,
        n: usize,
        history: &VecDeque<SolutionLayer>,
    ) -> Result<(SolutionLayer, StepStats)> {
        let (m, d) = (problem.m, problem.d);
        let k = self.alpha.len() - 1;
        debug_assert!(history.len() >= k);
        let nodes = self.grid.nodes();
        let t = n as f64 * self.h;
        let extent = self.grid.extent();
        let reject = self.grid.outside() == OutsideDomain::Reject;

        struct Scratch {
            l: Vec<i64>,
            x: Vec<f64>,
            rhs: Vec<f64>,
            f: Vec<f64>,
            ey: Vec<f64>,
            eydw: Vec<f64>,
            interp: InterpScratch,
        }
        let init = || Scratch {
            l: vec![0; d],
            x: vec![0.0; d],
            rhs: vec![0.0; m],
            f: vec![0.0; m],
            ey: vec![0.0; m],
            eydw: vec![0.0; m * d],
            interp: InterpScratch::new(d, self.grid.degree()),
        };

        let (y, z, stats) = solve_layer(nodes.len(), m, d, init, |s, flat, y, z| {
            nodes.multi_index_into(flat, &mut s.l);
            self.grid.point_into(&s.l, &mut s.x);
            s.rhs.fill(0.0);
            z.fill(0.0);
            let mut calls = 0u64;
            for j in 1..=k {
                let layer = &history[j - 1];
                debug_assert_eq!(layer.time_index, n + j);
                let interp = &mut s.interp;
                self.tensor.expect_pair(
                    &s.x,
                    j as f64 * self.h,
                    &mut s.ey,
                    &mut s.eydw,
                    |q, out| {
                        if reject {
                            if let Some((axis, &value)) = q
                                .iter()
                                .enumerate()
                                .find(|(_, v)| v.abs() > extent * (1.0 + 1e-12))
                            {
                                return Err(Error::DomainExceeded {
                                    axis,
                                    value,
                                    extent,
                                });
                            }
                        }
                        calls += 1;
                        self.grid.interpolate_with(&layer.y, m, q, out, interp);
                        Ok(())
                    },
                )?;
                let alpha = self.alpha[j];
                for r in 0..m {
                    s.rhs[r] += alpha * s.ey[r];
                }
                for (zv, e) in z.iter_mut().zip(&s.eydw) {
                    *zv += alpha * e / self.h;
                }
            }
            y.copy_from_slice(&history[0].y[flat * m..(flat + 1) * m]);
            let iters = picard(
                problem,
                t,
                self.h,
                self.alpha[0],
                &s.rhs,
                z,
                y,
                &mut s.f,
                self.picard_tol,
                self.picard_max_iters,
            )
            .map_err(|residual| Error::PicardDivergence {
                layer: n,
                node: s.l.clone(),
                residual,
            })?;
            Ok(StepStats {
                max_picard_iterations: iters,
                interpolation_calls: calls,
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
