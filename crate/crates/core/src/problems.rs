//! BSDE problem definitions and the three benchmark problems.
//!
//! A problem is `-dy = f(t, y, z) dt - z dW`, `y_T = φ(W_T)`, with
//! `y ∈ R^m`, `z ∈ R^{m×d}` stored row-major. When an exact solution
//! `u(t, x)` is known, `y_t = u(t, W_t)` and `z_t = ∇u(t, W_t)`.

use std::fmt;
use std::sync::Arc;

/// `f(t, y, z, out)`.
pub type Generator = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
/// `φ(x, out)`.
pub type Terminal = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// `u(t, x, out)` or `∇u(t, x, out)`.
pub type SpaceTimeField = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
pub struct ExactSolution {
    pub value: SpaceTimeField,
    pub gradient: SpaceTimeField,
}

#[derive(Clone)]
pub struct BsdeProblem {
    pub name: String,
    pub m: usize,
    pub d: usize,
    pub horizon: f64,
    pub generator: Generator,
    pub terminal: Terminal,
    pub exact: Option<ExactSolution>,
}

impl fmt::Debug for BsdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BsdeProblem")
            .field("name", &self.name)
            .field("m", &self.m)
            .field("d", &self.d)
            .field("horizon", &self.horizon)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl BsdeProblem {
    pub fn generator(&self, t: f64, y: &[f64], z: &[f64], out: &mut [f64]) {
        (self.generator)(t, y, z, out)
    }

    pub fn terminal(&self, x: &[f64], out: &mut [f64]) {
        (self.terminal)(x, out)
    }

    pub fn exact_y(&self, t: f64, x: &[f64]) -> Option<Vec<f64>> {
        self.exact.as_ref().map(|e| {
            let mut out = vec![0.0; self.m];
            (e.value)(t, x, &mut out);
            out
        })
    }

    pub fn exact_z(&self, t: f64, x: &[f64]) -> Option<Vec<f64>> {
        self.exact.as_ref().map(|e| {
            let mut out = vec![0.0; self.m * self.d];
            (e.gradient)(t, x, &mut out);
            out
        })
    }

    /// Looks up a benchmark problem by its CLI name.
    pub fn by_name(name: &str) -> crate::Result<Self> {
        match name {
            "example41" => Ok(example_41()),
            "example42" => Ok(example_42()),
            "example43" => Ok(example_43()),
            other => Err(crate::Error::UnknownProblem(other.to_string())),
        }
    }
}

pub const PROBLEM_NAMES: [&str; 3] = ["example41", "example42", "example43"];

/// Scalar problem with `y_t = ln(sin W_t + 3) e^{t^2}`.
pub fn example_41() -> BsdeProblem {
    let value = |t: f64, x: &[f64], out: &mut [f64]| {
        out[0] = (x[0].sin() + 3.0).ln() * (t * t).exp();
    };
    let gradient = |t: f64, x: &[f64], out: &mut [f64]| {
        out[0] = x[0].cos() / (x[0].sin() + 3.0) * (t * t).exp();
    };
    BsdeProblem {
        name: "example41".into(),
        m: 1,
        d: 1,
        horizon: 1.0,
        generator: Arc::new(|t, y, z, out| {
            let et = (t * t).exp();
            out[0] = 0.5
                * (et - 4.0 * t * y[0] - 3.0 * (t * t - y[0] / et).exp() + z[0] * z[0] / et);
        }),
        terminal: Arc::new(move |x, out| value(1.0, x, out)),
        exact: Some(ExactSolution {
            value: Arc::new(value),
            gradient: Arc::new(gradient),
        }),
    }
}

/// Two-component problem `f = A y |y|^2` with `y_t = (sin(W_t + t), cos(W_t + t))`.
pub fn example_42() -> BsdeProblem {
    let value = |t: f64, x: &[f64], out: &mut [f64]| {
        let s = x[0] + t;
        out[0] = s.sin();
        out[1] = s.cos();
    };
    let gradient = |t: f64, x: &[f64], out: &mut [f64]| {
        let s = x[0] + t;
        out[0] = s.cos();
        out[1] = -s.sin();
    };
    BsdeProblem {
        name: "example42".into(),
        m: 2,
        d: 1,
        horizon: 1.0,
        generator: Arc::new(|_t, y, _z, out| {
            let norm2 = y[0] * y[0] + y[1] * y[1];
            out[0] = (0.5 * y[0] - y[1]) * norm2;
            out[1] = (y[0] + 0.5 * y[1]) * norm2;
        }),
        terminal: Arc::new(move |x, out| value(1.0, x, out)),
        exact: Some(ExactSolution {
            value: Arc::new(value),
            gradient: Arc::new(gradient),
        }),
    }
}

/// Scalar problem driven by a 2-d Brownian motion with
/// `y_t = sin(W¹_t + t^2) cos(W²_t + t)`.
///
/// The generator is `y - 2t z¹ - z²`, the one for which this `y` solves the
/// associated PDE.
pub fn example_43() -> BsdeProblem {
    let value = |t: f64, x: &[f64], out: &mut [f64]| {
        out[0] = (x[0] + t * t).sin() * (x[1] + t).cos();
    };
    let gradient = |t: f64, x: &[f64], out: &mut [f64]| {
        let (a, b) = (x[0] + t * t, x[1] + t);
        out[0] = a.cos() * b.cos();
        out[1] = -a.sin() * b.sin();
    };
    BsdeProblem {
        name: "example43".into(),
        m: 1,
        d: 2,
        horizon: 1.0,
        generator: Arc::new(|t, y, z, out| {
            out[0] = y[0] - 2.0 * t * z[0] - z[1];
        }),
        terminal: Arc::new(move |x, out| value(1.0, x, out)),
        exact: Some(ExactSolution {
            value: Arc::new(value),
            gradient: Arc::new(gradient),
        }),
    }
}
