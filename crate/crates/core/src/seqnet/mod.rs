//! Minimal differentiable kernel for the fixed encoder-decoder architecture:
//! parameter storage, LSTM cells, dense layers, embeddings, variational
//! dropout masks, Adam and the training losses. Every layer exposes an
//! explicit forward and a hand-derived backward pass.

mod adam;
mod dropout;
mod layers;
mod loss;
mod params;

pub use adam::{clip_grad_norm, AdamState};
pub use dropout::{sample_variational_masks, CellMasks, DropoutMask, DropoutRates, MaskShape};
pub use layers::{softplus, softplus_grad, Activation, Dense, Embedding, LstmCache, LstmCell, LstmState};
pub use loss::{
    l2_penalty, loss_asymmetric, loss_frobenius, loss_gaussian_nll, loss_joint, residual_target, AsymmetricLoss,
    JointLoss, NllLoss,
};
pub use params::{Checkpoint, Gradients, ParamId, ParameterStore, CHECKPOINT_VERSION};
