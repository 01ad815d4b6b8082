//! Synthetic data, seeded streams and experiment orchestration.

mod corpus;
mod experiment;
mod rng;
mod synth;

pub use corpus::{gen_corpus, read_corpus, sample_name, write_corpus};
pub use experiment::{
    eval_study, icrf_study, run_experiment, scbr_study, softmask_study, tacot_study, ArtifactEntry,
    Artifacts, BranchPair, EvalStudy, ExperimentConfig, IcrfReport, IcrfSample, IcrfStudy, Manifest,
    Mode, RunSummary, ScbrReport, ScbrStudy, SoftmaskReport, SoftmaskSample, SoftmaskStudy, TacotStudy,
    TermSnapshot,
};
pub use rng::{mix, substream, substream_seed};
pub use synth::{gen_pair, SyntheticPair, SyntheticPairConfig};
