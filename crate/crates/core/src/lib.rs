//! Phase-invariant anomaly detection for unsynchronized periodic time series.
//!
//! Series are folded onto one period, resampled to a power-of-two grid and
//! normalized. Pk-means clusters them under circular cross correlation,
//! realigning every series to its nearest centroid each iteration, and the
//! resulting centroid model scores each series globally (against all
//! centroids, weighted by cluster size) or locally (against its closest
//! centroid). Baselines, evaluation metrics and a seeded synthetic
//! experiment harness live alongside.
//!
//! ```
//! use pcad_core::{pkmeans, score_global, ClusterConfig, UniformSeries};
//!
//! let d = 64;
//! let wave = |shift: usize, amp: f64| -> Vec<f64> {
//!     (0..d)
//!         .map(|t| (2.0 * std::f64::consts::PI * ((t + shift) % d) as f64 / d as f64).sin() * amp)
//!         .collect()
//! };
//! let data: Vec<UniformSeries> = (0..8)
//!     .map(|i| UniformSeries::from_values(format!("s{i}"), &wave(i * 7, 1.0 + i as f64)).unwrap())
//!     .collect();
//! let (model, _) = pkmeans(&data, &ClusterConfig::new(1, 0)).unwrap();
//! let score = score_global(&data[3], &model).unwrap();
//! assert!((score - 1.0).abs() < 1e-9);
//! ```

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anomaly;
pub mod cluster;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod fft;
pub mod io;
pub mod seed;
pub mod series;
pub mod synth;
pub mod xcorr;

pub use anomaly::{
    pcad_scores, rank, run_method, score_global, score_local, AnomalyRanking, KChoice, LocalRule, Method,
    MethodConfig, MethodRun, PcadScore, Provenance, RankEntry,
};
pub use cluster::{
    bic, kmeans, pkmeans, select_k, Algorithm, BicScore, CentroidModel, ClusterConfig, ClusterState, ModelMeta,
    SelectConfig, Selection,
};
pub use error::{Error, Result};
pub use eval::{precision_at_m, rank_change, EvalReport};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentOutcome};
pub use series::{preprocess, PreprocessConfig, RawSeries, Sample, UniformSeries};
pub use xcorr::{max_xcorr, rotate, xcorr_all, Correlator, PhaseMatch};
