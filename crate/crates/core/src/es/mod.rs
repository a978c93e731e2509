//! OpenAI-ES update machinery: shared noise table, mirrored perturbations,
//! centered-rank shaping, the variance-rescaled gradient estimate and Adam.

mod adam;
mod gradient;
mod noise;
mod normalizer;
mod shaping;

pub use adam::{adam_step, AdamMoments, EsState, ADAM_EPS, BETA1, BETA2};
pub use gradient::estimate_update;
pub use noise::{perturb, NoiseTable, Sign, DEFAULT_NOISE_LEN};
pub use normalizer::{normalizer_apply, normalizer_fit, ObsNormalizer, STD_FLOOR};
pub use shaping::shape_scores;
