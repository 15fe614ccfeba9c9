//! Two-layer ReLU network variant: network, temperature softmax policy,
//! projected neural TD and the neural CRPO loop.

pub mod crpo;
pub mod net;
pub mod policy;
pub mod td;

pub use crpo::{estimate_constraints_sampled, run_neural_crpo, NeuralCrpoConfig, NeuralRun};
pub use net::{init_net, FeatureEmbedding, TwoLayerNet};
pub use policy::{neural_npg_step, NeuralPolicy};
pub use td::{neural_td_evaluate, NeuralQ, NeuralTdConfig};
