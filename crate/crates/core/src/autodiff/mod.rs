//! Differentiation engine: Taylor jets for input derivatives and a scalar
//! reverse-mode tape for parameter gradients.

mod jet;
mod tape;

pub use jet::{Jet, JetScalar};
pub use tape::{Tape, Var};
