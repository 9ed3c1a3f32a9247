//! Exact simulation of planar Gilbert crack tessellations.
//!
//! Seeds of a marked point configuration each emit two branches that grow at
//! unit speed along the seed's line until they run into an edge that is
//! already present. The crate builds these tessellations exactly for finite
//! inputs ([`engine`]), cross-checks them against two independent reference
//! constructions ([`oracle`]), computes certified whole-plane branch lengths
//! for Poisson input by the growing-ball stabilization procedure
//! ([`stabilize`]), and drives Monte Carlo experiments for the limit theory of
//! branch-length functionals ([`functionals`], [`stats`]).

// `!(x >= 0.0)` style guards deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod functionals;
pub mod geom;
pub mod io;
pub mod oracle;
pub mod pointproc;
pub mod stabilize;
pub mod stats;

pub use engine::{build, build_with, BuildOptions, CollisionEvent, MarkedConfig, Tessellation};
pub use error::{Error, Result};
pub use functionals::{EmpiricalMeasure, Phi, TestFunction};
pub use geom::{BranchId, ExtLength, MarkedPoint, Point, Ray, SeedId, Sign};
pub use pointproc::{ProcessParams, Window};
pub use stabilize::StabilizationResult;
