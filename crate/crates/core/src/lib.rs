//! One-shot converse bounds for private and quantum communication over
//! degradable and anti-degradable channels, with the numerical machinery
//! needed to check them: states and channels, a small SDP solver, smooth
//! entropies, degradability certificates and random code search.

pub mod channels;
pub mod codes;
pub mod converse;
pub mod degradability;
pub mod entropies;
pub mod error;
pub mod linalg;
pub mod random;
pub mod sdp;

pub use channels::{ChannelKind, ChoiMatrix, QuantumChannel, StinespringIsometry};
pub use error::{Error, Result};
pub use linalg::{DensityState, PureState, SystemLayout};
pub use sdp::{SdpProblem, SdpSolution, SdpStatus};
