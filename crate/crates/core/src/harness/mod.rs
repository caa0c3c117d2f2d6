//! Convergence studies: solve for a list of `N`, measure the error at
//! `(0, origin)`, fit rates and serialize the result.

mod report;

pub use report::{emit_report, ConvergenceReport, Format, ReportMetadata, ReportRow};

use crate::error::{Error, Result};
use crate::problems::BsdeProblem;
use crate::solver::{solve, Scheme, SolverConfig};

/// Convergence rate: minus the least-squares slope of `log2 err` against
/// `log2 N`.
pub fn fit_rate(errors: &[f64], ns: &[usize]) -> Result<f64> {
    if errors.len() != ns.len() {
        return Err(Error::RateFit(format!(
            "{} errors but {} step counts",
            errors.len(),
            ns.len()
        )));
    }
    if errors.len() < 2 {
        return Err(Error::RateFit("at least two points are needed".into()));
    }
    if let Some(bad) = errors.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
        return Err(Error::RateFit(format!(
            "errors must be positive and finite to take logarithms (got {bad})"
        )));
    }
    if ns.contains(&0) {
        return Err(Error::RateFit("step counts must be positive".into()));
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).log2()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.log2()).collect();
    let count = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / count;
    let my = ys.iter().sum::<f64>() / count;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::RateFit("step counts must not all be equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(-sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Leading rows excluded from the rate fit.
    pub fit_skip: usize,
    /// Solver worker threads (0 = automatic).
    pub threads: usize,
}

/// Solves `problem_name` with `scheme` for every `N` in `ns`.
///
/// Solver failures are recorded on their row; the remaining rows still run.
pub fn run_convergence(
    problem_name: &str,
    scheme: Scheme,
    ns: &[usize],
    opts: RunOptions,
) -> Result<ConvergenceReport> {
    let problem = BsdeProblem::by_name(problem_name)?;
    let mut ns = ns.to_vec();
    ns.sort_unstable();
    ns.dedup();

    let rows = ns
        .iter()
        .map(|&n| {
            let cfg = SolverConfig::new(n, scheme).with_threads(opts.threads);
            solve_row(&problem, &cfg)
        })
        .collect();

    Ok(ConvergenceReport::new(
        problem.name.clone(),
        scheme,
        rows,
        opts,
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    ))
}

fn solve_row(problem: &BsdeProblem, cfg: &SolverConfig) -> ReportRow {
    let outcome = solve(problem, cfg).and_then(|out| {
        let (ey, ez) = out
            .errors(problem)
            .ok_or_else(|| Error::MissingExactSolution(problem.name.clone()))?;
        Ok((ey, ez, out.wall_time.as_secs_f64()))
    });
    match outcome {
        Ok((ey, ez, secs)) if ey.is_finite() && ez.is_finite() => ReportRow {
            n: cfg.steps,
            err_y: Some(ey),
            err_z: Some(ez),
            seconds: Some(round_significant(secs, 3)),
            failure: None,
        },
        Ok((_, _, secs)) => ReportRow {
            n: cfg.steps,
            err_y: None,
            err_z: None,
            seconds: Some(round_significant(secs, 3)),
            failure: Some("solution is not finite".into()),
        },
        Err(e) => ReportRow {
            n: cfg.steps,
            err_y: None,
            err_z: None,
            seconds: None,
            failure: Some(e.to_string()),
        },
    }
}

pub(crate) fn round_significant(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let magnitude = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits - 1 - magnitude);
    (x * scale).round() / scale
}
