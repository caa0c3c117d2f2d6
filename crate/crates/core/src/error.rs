use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("quadrature order {order} is outside the supported range 1..={max}")]
    QuadratureOrder { order: usize, max: usize },

    #[error("{layout} stencil with k = {k} is outside the supported range 1..={max}")]
    StencilSteps {
        layout: &'static str,
        k: usize,
        max: usize,
    },

    #[error("companion eigenvalue iteration did not converge for a degree-{degree} polynomial")]
    RootFinding { degree: usize },

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("query coordinate {value} (axis {axis}) lies outside the grid domain [-{extent}, {extent}]")]
    DomainExceeded { axis: usize, value: f64, extent: f64 },

    #[error("invalid solver configuration: {0}")]
    Config(String),

    #[error("problem `{0}` has no exact solution; exact-solution bootstrap is unsupported")]
    MissingExactSolution(String),

    #[error("Picard iteration diverged at time layer {layer}, node {node:?}: last update {residual:e}")]
    PicardDivergence {
        layer: usize,
        node: Vec<i64>,
        residual: f64,
    },

    #[error("invalid rate-fit data: {0}")]
    RateFit(String),

    #[error("unknown problem `{0}` (expected example41, example42 or example43)")]
    UnknownProblem(String),
}
