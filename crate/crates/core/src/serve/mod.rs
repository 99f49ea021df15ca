//! Model files and the inference-only scorer.

mod model_file;
mod scorer;

pub use model_file::{
    decode_model, encode_model, load_model, save_model, ModelFile, ModelHeader, MODEL_MAGIC, MODEL_VERSION,
};
pub use scorer::{latency_benchmark, Candidate, CandidateError, LatencyReport, ScoreQuery, ScoreResponse, Scorer};
