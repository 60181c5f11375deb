//! Iterative convolutional neural receiver.
//!
//! A shared-weight residual block is unrolled over the OFDM resource grid and
//! a per-RE readout emits 16-QAM bit LLRs after every iteration, so the
//! depth can be chosen at inference time. Training uses the mean
//! cross-entropy over all iterations.

pub mod adam;
pub mod checkpoint;
pub mod conv;
pub mod error;
pub mod layout;
pub mod loss;
pub mod model;
pub mod real;
pub mod receiver;
mod simd;
pub mod train;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader, Provenance};
pub use conv::Backend;
pub use error::NrxError;
pub use model::{NrxConfig, NrxInput, NrxModel, NrxOutput, ParamLayout, Tape};
pub use receiver::NrxReceiver;
pub use train::{finetune, pretrain, train_step, FhDataset, PretrainGenerator, SampleSource, TracePoint, TrainConfig, Trainer};
