//! Certification of Bayesian neural networks: sound bounds on the posterior
//! probability that a network is robust over an input region, and on the
//! posterior-predictive decision over that region.

// `!(a <= b)` deliberately rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod attack;
pub mod certify;
pub mod error;
pub mod net;
pub mod posterior;
pub mod propagate;
pub mod scalar;
pub mod search;
pub mod spec;
pub mod trainer;

pub use attack::{pgd, pgd_expected, AttackConfig, AttackOutcome, Objective};
pub use certify::{
    decision_robust, dsafe_all_classes, dsafe_lower, dsafe_upper, k0_decision_check, median_bounds, output_best,
    output_worst, psafe_lower, psafe_upper, uncertainty_check, Bonferroni, Certificate, CertifyConfig, DecisionVerdict,
    Task,
};
pub use error::{Error, Result};
pub use net::{argmax, backward, forward, softmax, Activation, LayerSpec, Network, WeightVector};
pub use posterior::{GaussianPosterior, MarginScale, Posterior, SamplePosterior, WeightBox};
pub use propagate::{ibp_forward, lbp_forward, propagate, relax_activation, Interval, Method};
pub use scalar::Scalar;
pub use search::{max_robust_radius, min_unrobust_radius, RadiusResult, RadiusSearchConfig};
pub use spec::{linf_ball, Clip, Epsilon, InputBox, OutputSpec};
pub use trainer::{fit_vi, sample_hmc, Dataset, HmcConfig, Labels, Likelihood, TrainConfig};

pub type WeightVector64 = WeightVector<f64>;
pub type WeightVector32 = WeightVector<f32>;
pub type InputBox64 = InputBox<f64>;
pub type InputBox32 = InputBox<f32>;
pub type OutputSpec64 = OutputSpec<f64>;
pub type OutputSpec32 = OutputSpec<f32>;
pub type WeightBox64 = WeightBox<f64>;
pub type WeightBox32 = WeightBox<f32>;
pub type GaussianPosterior64 = GaussianPosterior<f64>;
pub type GaussianPosterior32 = GaussianPosterior<f32>;
pub type Posterior64 = Posterior<f64>;
pub type Posterior32 = Posterior<f32>;
pub type SamplePosterior64 = SamplePosterior<f64>;
pub type SamplePosterior32 = SamplePosterior<f32>;
