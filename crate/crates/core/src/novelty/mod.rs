//! Behavior archive, k-nearest-neighbor novelty and the metapopulation that
//! NS-ES and NSR-ES select from.

mod archive;
mod metapop;
mod scoring;

pub use archive::{bc_distance, novelty, novelty_batch, Archive, BehaviorCharacteristic, DEFAULT_K};
pub use metapop::{select_member, selection_probabilities, Member, Metapopulation, DEFAULT_METAPOP};
pub use scoring::{combine_scores, ns_iteration, score_evaluations, Algorithm, Evaluated, IterationOutcome};
