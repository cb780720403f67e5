//! Lowest-order NAVEM on polygonal meshes.
//!
//! The crate has two solver paths over the same mesh and problem types:
//!
//! * [`vem`]: a standard lowest-order virtual element baseline (projectors +
//!   dofi-dofi stabilization),
//! * [`solver`]: the NAVEM path, which replaces projections and stabilization
//!   with explicit harmonic approximations of the virtual basis functions,
//!   either predicted by small per-class networks or fitted directly
//!   (oracle mode).
//!
//! Supporting modules: [`geometry`] (polygons, quadrature, mesh families),
//! [`harmonic`] (the approximation spaces), [`encoding`] (polygon
//! classification and frame normalization), [`network`] and [`training`]
//! (the offline phase), [`problems`] (manufactured benchmark problems),
//! [`io`] (text artifacts) and [`study`] (convergence studies and reports).

mod error;
pub mod encoding;
pub mod geometry;
pub mod harmonic;
pub mod io;
pub mod network;
pub mod problems;
pub mod solver;
pub mod study;
pub mod training;
pub mod vem;

pub use error::{Error, Result};
