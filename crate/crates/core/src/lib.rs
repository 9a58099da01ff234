//! Cross-modal compatibility invariants on a shared neighborhood site:
//! projection hardness across a complexity ladder of map families, and a
//! sheaf-Laplacian obstruction measuring how much locally fitted maps must
//! disagree. Includes exact piecewise-linear certification machinery and
//! synthetic scenario generators with known ground truth.

pub mod embed;
pub mod error;
pub mod families;
pub mod invariants;
pub mod io;
pub mod linalg;
pub mod pwl;
pub mod rng;
pub mod sheaf;
pub mod site;

pub use error::{Error, Result};
