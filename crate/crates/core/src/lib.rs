//! Intrinsic dimension and entropy estimation from coincidence counts.
//!
//! The pipeline follows the classic correlation-integral recipe:
//! load observations ([`dataset`]), count sup-norm coincidences
//! ([`coincidence`]), fit `log2 C(r) ≈ d log2 r - h` over a chosen scale
//! range ([`estimator`]), and compensate the small-sample bias of the
//! apparent dimension and entropy ([`bias`]).
//!
//! Everything is generic over the scalar type; the `*64` and `*32` aliases
//! fix it for the common cases.
//!
//! ```
//! use idde::{curve, pairwise_radii, fit_segment, Dataset64, ScaleRange};
//!
//! let ds = Dataset64::from_rows(&[[0.0], [1.0], [3.0]]).unwrap();
//! let profile = pairwise_radii(&ds);
//! assert_eq!(profile.radii(), &[2.0, 4.0, 6.0]);
//! let c = curve(&profile, None).unwrap();
//! let fit = fit_segment(&c, &ScaleRange::new(0.0, 3.0).unwrap(), None).unwrap();
//! assert!(fit.d_hat > 0.0);
//! ```

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bias;
pub mod coincidence;
pub mod dataset;
mod error;
pub mod estimator;
pub mod report;
mod scalar;

pub use bias::{
    apparent_id, bias_table, c0, compensate, compensate_estimate, d0_of_r, de_bias,
    invert_apparent_id, invert_apparent_id_with, min_observations, rbar, BiasRow, BiasTable,
    Compensation, DataRequirement, InversionMode, DEFAULT_CEILING,
};
pub use coincidence::{
    correlation_at, curve, pair_count, pairwise_radii, pairwise_radii_by, pairwise_radii_with,
    CorrelationCurve, EuclideanNorm, PairNorm, PairOptions, RadiiProfile, SupNorm,
    DEFAULT_PAIR_BUDGET,
};
pub use dataset::{
    gen_circle, gen_hypercube, gen_noisy_segment, gen_sinusoid, load_csv, load_series,
    window_series, CsvOptions, Dataset, Generator, HypercubeSpec, WindowConfig, WindowMode,
    EXAMPLE_SEGMENT_DIRECTION,
};
pub use error::{Error, Result};
pub use estimator::{
    analyze_multiscale, best_candidate, candidate_lines, find_plateaus, fit_segment,
    multiscale_scan, CandidateLine, MultiscaleAnalysis, MultiscaleOptions, Plateau, PlateauFit,
    PlateauOptions, ScaleRange, SegmentFit,
};
pub use report::{analyze, AnalysisReport, AnalyzeOptions, CompensatedFit, CurveSummary, DatasetSummary};
pub use scalar::Real;

pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type RadiiProfile64 = RadiiProfile<f64>;
pub type RadiiProfile32 = RadiiProfile<f32>;
pub type CorrelationCurve64 = CorrelationCurve<f64>;
pub type CorrelationCurve32 = CorrelationCurve<f32>;
pub type ScaleRange64 = ScaleRange<f64>;
pub type SegmentFit64 = SegmentFit<f64>;
pub type SegmentFit32 = SegmentFit<f32>;
pub type BiasTable64 = BiasTable<f64>;
pub type Compensation64 = Compensation<f64>;
pub type AnalysisReport64 = AnalysisReport<f64>;
