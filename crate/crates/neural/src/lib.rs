//! Activation features from arbitrary layers of a pretrained network stored
//! as ONNX. Every intermediate tensor of the graph can be captured, flattened
//! and compared like any other feature vector.

mod error;
mod network;
mod sweep;
pub mod toy;

pub use error::{NeuralError, Result};
pub use network::{
    extract_activation, load_network, load_network_bytes, LayerActivation, NetworkHandle,
};
pub use sweep::{layer_sweep, prepare_inputs, write_sweep_csv, SweepRow};
