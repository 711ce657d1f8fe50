//! Auxiliary "inducer" vectors: the 3-dim pitch vector and a UBM/PCA speaker
//! embedding, both emitted once per 10-frame chunk.

mod aux;
mod pca;
mod pvector;
mod speaker;
mod ubm;

pub use aux::{concat_aux, expand_to_frames, num_chunks, AuxMode};
pub use pca::{fit_pca, PcaModel};
pub use pvector::{compute_pvector, PVectorStats};
pub use speaker::{accumulate_stats, supervector, EmbedConfig, EmbedderTrainReport, SpeakerEmbedder, UbmStats};
pub use ubm::{train_diag_ubm, DiagUbm, UbmTrainLog};

/// Frames per auxiliary-vector emission.
pub const CHUNK_FRAMES: usize = 10;
