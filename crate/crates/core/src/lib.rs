//! Observer synthesis for discrete-time systems with slope-bounded
//! nonlinearities.

pub mod apps;
pub mod lipschitz;
pub mod lmi;
pub mod matrixcore;
pub mod sdp;
pub mod sim;
pub mod system;
