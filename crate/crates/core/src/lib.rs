//! Learning stutter-insensitive bisimulations for symbolic integer
//! transition systems, building finite quotients and model checking them.

pub mod model;
pub mod smt;
pub mod templates;
pub mod cegis;
pub mod oracle;
pub mod quotient;
pub mod checker;
pub mod bench;
