//! Panel mixed logit estimation in preference space and willingness-to-pay
//! space by simulated maximum likelihood with Halton draws.
//!
//! The pipeline runs [`dataset`] → [`spec`] → [`draws`] → [`kernel`] →
//! [`estimate`], with [`wtp`] and [`simulate`] consuming the results.

pub mod cli;
pub mod dataset;
pub mod draws;
pub mod error;
pub mod estimate;
pub mod kernel;
pub mod optim;
pub mod results;
pub mod simulate;
pub mod spec;
pub mod wtp;

pub use dataset::{load_long_table, ChoiceDataset, TableSchema};
pub use draws::{build_draw_tensor, DrawPlan, DrawTensor};
pub use error::{Error, Result};
pub use estimate::{estimate, EstimationResult};
pub use kernel::{simulated_loglikelihood, PanelLikelihood, ParameterVector};
pub use optim::OptimizerConfig;
pub use spec::{parse_model_spec, ModelSpec, Space};

/// The guide in `book/`, compiled so its snippets run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/specs.md")]
    mod specs {}
    #[doc = include_str!("../../../book/src/draws.md")]
    mod draws {}
    #[doc = include_str!("../../../book/src/likelihood.md")]
    mod likelihood {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/wtp.md")]
    mod wtp {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
