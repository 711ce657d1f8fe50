//! Decoding, scoring, the experiment matrix and its report.

mod data;
mod decode;
mod matrix;
mod report;
mod score;
mod shift;

pub use data::{corpus_of, DataSet, Pipeline, Prepared, UttData, ADULT_SP};
pub use decode::{decode_logits, decode_utterance, DecodeResult, SIL_PHONE};
pub use matrix::{decode_set, model_name, model_paths, pitch_rows, run_all, run_matrix};
pub use report::{
    emit_report, format_summary, load_report, read_losses, read_pitch, read_results, write_losses, write_results, Arm,
    DecoderFreeCheck, LossRow, PitchRow, ResultRow, RunReport, Summary,
};
pub use score::{edit_distance, phone_error_rate, ErrorCount};
pub use shift::{make_shifted_testset, shifted_name};
