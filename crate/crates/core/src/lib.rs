//! Samplers for densities restricted to an implicitly defined level set
//! `{x : g(x) = 0}`.
//!
//! The orthogonal-space samplers split every velocity into a part along
//! `∇g`, which drives `g` to zero at the rate `-ψ(g)`, and a tangential part
//! produced by Langevin dynamics (O-Langevin) or SVGD (O-SVGD) after
//! projecting with `D(x) = I - ∇g ∇gᵀ / ‖∇g‖²`. No projection back onto the
//! manifold is needed, so chains may start anywhere with a nonzero gradient.
//!
//! ```
//! use ograd::geometry::SyntheticConstraint;
//! use ograd::samplers::{run_sampler, Method, SamplerConfig};
//! use ograd::targets::{synthetic_ground_truth, SyntheticTarget};
//!
//! let mut cfg = SamplerConfig::synthetic_defaults(Method::OLangevin);
//! cfg.n_iters = 200;
//! cfg.n_particles = 10;
//! let init = synthetic_ground_truth(10, 1).unwrap();
//! let record = run_sampler(&cfg, &SyntheticTarget, &SyntheticConstraint, &init).unwrap();
//! assert!(record.metric("mae").unwrap().last().unwrap() < 0.1);
//! ```

pub mod ensemble;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod kernels;
pub mod metrics;
pub mod oracles;
pub mod par;
pub mod samplers;
pub mod targets;

pub use ensemble::ParticleEnsemble;
pub use error::{Error, Result};
pub use par::Execution;
