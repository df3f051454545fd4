//! Clustering, signal recovery and global testing under the rare/weak
//! two-class model `X = ℓμ' + Z`.
//!
//! The crate has three layers:
//!
//! * estimators and tests: [`clusterers`], [`recovery`], [`global_tests`],
//!   built on [`spectral`] screening and [`numerics`];
//! * closed-form phase boundaries in [`phase`];
//! * the Monte Carlo [`harness`] and the real-data pipeline in [`applied`].
//!
//! ```
//! use phasecluster::prelude::*;
//!
//! let params = ArwParams::alpha(2000, 0.6, 0.3, 0.1);
//! let data = gen_dataset(&params, &NoiseSpec::White, 7)?;
//! let est = simple_aggregation(data.x.view());
//! let loss = hamming_clustering(&est.labels, data.labels.as_ref().unwrap())?;
//! assert!(loss <= 0.5);
//! # Ok::<(), phasecluster::Error>(())
//! ```

pub mod applied;
pub mod clusterers;
pub mod error;
pub mod global_tests;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod phase;
pub mod recovery;
pub mod rng;
mod serde_float;
pub mod spectral;

pub use error::{Error, Result};

/// The names most programs need.
pub mod prelude {
    pub use crate::clusterers::{
        classical_pca, if_pca, kmeans_1d_two, signed_sparse_aggregation, simple_aggregation,
        sparse_aggregation, ClusterResult, Solver,
    };
    pub use crate::error::{Error, Result};
    pub use crate::global_tests::{higher_criticism, test_simple_agg, test_sparse_agg, TestOutcome};
    pub use crate::harness::{run_sweep, run_trial, MethodSpec, StrengthGrid, SweepSpec, TrialSpec};
    pub use crate::metrics::{cos_angle, hamming_clustering, hamming_recovery, LossReport};
    pub use crate::model::{gen_dataset, gen_noise, ArwParams, Dataset, NoiseSpec, Strength};
    pub use crate::phase::{boundary, classify, BoundKind, PhaseQuery, Problem, Region, Variant};
    pub use crate::recovery::{recover_if_q, recover_if_star, recover_sa_star, recover_signed_pca};
    pub use crate::spectral::{leading_left_singular, predict_selection, q_star, select_features};
}

// Book chapters run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/screening.md")]
    mod screening {}
    #[doc = include_str!("../../../book/src/clustering.md")]
    mod clustering {}
    #[doc = include_str!("../../../book/src/recovery.md")]
    mod recovery {}
    #[doc = include_str!("../../../book/src/testing.md")]
    mod testing {}
    #[doc = include_str!("../../../book/src/phase.md")]
    mod phase {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/real_data.md")]
    mod real_data {}
}
