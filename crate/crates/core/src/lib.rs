pub mod baselines;
pub mod channel;
pub mod error;
pub mod numerics;
pub mod optimizer;
pub mod reflect_bf;
pub mod scenario;
pub mod sdp;
pub mod transmit_bf;
pub mod uncertainty;

pub use error::{Error, Result};
