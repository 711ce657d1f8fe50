//! The f-DcAE acoustic model: a TDNN encoder emitting phoneme-state scores
//! and a p-code, a decoder reconstructing MFCCs from the p-code plus the
//! auxiliary vectors, and the joint CE / LF-MMI / MSE objective.

mod loss;
mod model;
mod train;

pub use loss::{loss_ce, loss_lfmmi, loss_mse, total_loss, LossBreakdown, DEFAULT_ALPHA, DEFAULT_BETA};
pub use model::{Condition, DecoderModel, EncoderModel, FdcaeModel, FeatureNorm, ModelConfig};
pub use train::{
    adapt, batch_objective, make_chunks, train, BatchResult, Chunk, EpochLog, TrainConfig, TrainContext, TrainReport, TrainSeq,
};
