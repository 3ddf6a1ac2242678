//! Quantum polar and branching-MERA codes: encoding circuits, noise models,
//! successive-cancellation decoders built on exact tensor-network contraction,
//! channel polarization statistics and a seeded Monte Carlo harness.

pub mod channel;
pub mod circuit;
pub mod decoder;
pub mod error;
pub mod gf2;
pub mod montecarlo;
pub mod oracle;
pub mod pauli;
pub mod polarization;

pub use channel::ChannelModel;
pub use circuit::{build_bmera, build_polar, CodeCircuit, Family};
pub use decoder::{decision_marginal, Quadrature, Schedule};
pub use error::{Error, Result};
pub use pauli::{LeafTensor, Pauli, PauliOp};
pub use polarization::{ChannelStats, FrozenMap, Role};
