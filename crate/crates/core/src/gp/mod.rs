//! Gaussian-process prior and posterior machinery.

mod gram;
mod kernel;
pub mod normal;
mod optim;
mod posterior;
mod reml;

pub use gram::{build_gram, factorize_exact_first, factorize_with_jitter, Gram, JITTER_LADDER};
pub use kernel::{KernelSpec, Regularity};
pub use optim::{nelder_mead, NelderMeadOptions, NelderMeadResult};
pub use posterior::{
    excursion_probability, CachedPosterior, CriticalRegion, ObservationSet, Orientation,
    PosteriorModel, Prediction, RankOneUpdate, UpdatedMoments,
};
pub use reml::{fit_reml, restricted_nll, RemlConfig};
