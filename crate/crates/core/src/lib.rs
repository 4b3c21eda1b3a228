//! Equivalence verification for pairs of feed-forward ReLU networks.
//!
//! A shared input zonotope is pushed through both networks in lock-step
//! together with a differential zonotope that bounds `f1(x) - f2(x)`
//! pointwise. Output properties (ε-equivalence, Top-1 and confidence-gated
//! δ-Top-1 equivalence) are checked on the result with interval bounds or
//! linear programs, and the input box is split until the property is proven,
//! refuted by a concrete counterexample, or the budget runs out.

pub mod diffzono;
pub mod error;
pub mod io;
pub mod lp;
pub mod network;
pub mod properties;
pub mod refine;
pub mod zonotope;

pub use diffzono::{reach_delta, DiffState, Mode};
pub use error::{Error, Result};
pub use network::{Activation, Layer, Network};
pub use properties::{CheckOutcome, PropertySpec, Verdict};
pub use refine::{verify, Budget, Status, VerificationResult};
pub use zonotope::{GeneratorClass, GeneratorId, Interval, Zonotope};
