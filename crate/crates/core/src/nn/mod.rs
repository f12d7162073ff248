//! Minimal neural-network toolkit: parameter storage, a reverse-mode tape,
//! recurrent and affine layers, and the Adam optimiser.

pub mod gradcheck;
mod layers;
mod optim;
mod params;
mod tape;

pub use layers::{BiLstm, Linear, Lstm};
pub use optim::Adam;
pub use params::{glorot, uniform, Grads, Mat, ParamId, ParamStore};
pub use tape::{Graph, Var};
