//! Unfitted finite element solver for the tangential Navier-Stokes equations
//! on a passively evolving closed surface.
//!
//! The surface is the zero level of a time-dependent level-set function and
//! sweeps through a fixed tetrahedral background mesh. Velocity and pressure
//! live on narrow bands of background elements around the discrete surface
//! (trace finite elements, Taylor-Hood pairs), the tangentiality constraint is
//! imposed by penalty, and normal-derivative volume stabilization handles
//! small cuts and extends fields off the surface. Implicit BDF stepping
//! rebuilds geometry, bands and degree-of-freedom maps every step.
//!
//! The crate ships a moving-sphere manufactured problem with forcing terms
//! generated by forward-mode automatic differentiation, the error norms of
//! the method, and a convergence-study driver; see the `surfns-cli` binary.

pub mod assemble;
pub mod cut;
pub mod dual;
pub mod exact;
pub mod io;
pub mod la;
pub mod levelset;
pub mod mesh;
pub mod metrics;
pub mod quadrature;
pub mod solve;
pub mod space;
pub mod stepper;

use thiserror::Error;

/// Errors surfaced by mesh construction, geometry processing, assembly and
/// the time loop.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("memory cap exceeded: requested {requested} cells, cap {cap}")]
    MemoryCap { requested: usize, cap: usize },
    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),
    #[error("degenerate level-set gradient (|grad phi| = {0:.3e})")]
    DegenerateGradient(f64),
    #[error("surface left the computational domain (empty cut set)")]
    SurfaceLeftDomain,
    #[error("empty narrow band")]
    EmptyBand,
    #[error("element {0} is not active in this space")]
    InactiveElement(usize),
    #[error("evaluation point outside the analytic strip (|x - center| = {0:.3})")]
    StripViolation(f64),
    #[error("evaluation at the level-set center singularity")]
    CenterSingularity,
    #[error("unsupported quadrature degree {0}")]
    UnsupportedQuadratureDegree(usize),
    #[error("linear solver failed: {0}")]
    SolverFailure(String),
    #[error("band containment violated at step {step}: {missing} cut elements outside the band of step {history_step}")]
    ContainmentViolation {
        step: usize,
        history_step: usize,
        missing: usize,
    },
    #[error("time step aborted at step {step}: {source}")]
    StepAborted {
        step: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
