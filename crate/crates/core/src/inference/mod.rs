//! Fitting, configuration search and noise decomposition.

mod configurations;
mod fit;
mod lsq;
mod noise;
mod reconstruct;
mod score;
mod synthetic;

pub use configurations::{
    sample_configuration, sample_configurations, CandidateConfiguration, SearchPrior, Slab, MAX_EXPECTED_DEFECTS,
};
pub use fit::{
    fit_charge_relaxation, fit_mono_exponential, fit_odmr, fit_saturation, ChargeRelaxationFit, FitResult, MonoExpFit,
    OdmrFit, OdmrFitSetup, SaturationFit,
};
pub use lsq::{is_singular, minimize, standard_errors, LeastSquares, LmOptions, LmOutcome};
pub use noise::{extract_noise, extract_noise_with, NoiseModel, NoiseRates};
pub use reconstruct::{
    dominant_defects, reconstruct, search_hash, RankKey, RankedCandidate, ReconstructOptions, Reconstruction,
    CHECKPOINT_VERSION,
};
pub use score::{
    score_configuration, score_configuration_detailed, DeerDataset, ScoreOptions, ScoreOutcome, ScoringData,
};
pub use synthetic::{reference_pair, synthetic_datasets, SyntheticDeer};
