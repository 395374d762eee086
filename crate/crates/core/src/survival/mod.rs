//! Survival-setting models: Elastic-Net Cox and the two-group duration
//! mixtures (C-mix and its cure special case).

mod cox;
mod mixture;

pub use cox::{cox_fit, cox_survival, CoxModel, CoxPartialLikelihood};
pub(crate) use cox::design;
pub use mixture::{
    cmix_fit, mixture_marker, mixture_survival, MixtureDurationModel, MixtureMode, MixtureOptions,
};
