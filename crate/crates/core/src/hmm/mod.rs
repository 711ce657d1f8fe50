//! Monophone GMM-HMM: topology, flat start, Viterbi training and forced
//! alignment.

mod align;
mod gmm;
mod model;
mod topology;

pub use align::{read_alignments, viterbi_composite, write_alignments, Alignment};
pub use gmm::DiagGmm;
pub use model::{flat_start, viterbi_train, GmmHmmModel, TrainIterLog, TrainUtt, MAX_COMPONENTS};
pub use topology::HmmTopology;
