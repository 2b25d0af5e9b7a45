//! Joint spatial-spectral unmixing of hyperspectral images.
//!
//! Three coupled non-negative matrix factorizations are solved jointly with
//! proximal alternating linearized minimization (PALM):
//!
//! * a spectral factorization `Y ≈ M A` (endmembers and abundances),
//! * a spatial factorization `S ≈ D U` (patch dictionary and codes),
//! * a clustering factorization `[A; U] ≈ B Z` tying the two codings together,
//!   with an orthogonality penalty pushing `Z` toward hard assignments.
//!
//! The crate also provides the initialization pipeline (pure-pixel pursuit,
//! fully constrained least squares, k-means), patch features extracted from a
//! synthesized panchromatic band, a synthetic scene generator and the usual
//! unmixing metrics.

pub mod error;
pub mod features;
pub mod init;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
pub use features::{extract_patches, synthesize_panchromatic, ImageCube, PanchromaticImage};
pub use init::{initialize, kmeans, vca_extract, KMeansResult};
pub use linalg::{frobenius_sq, project_nonneg, project_simplex_columns, spectral_norm, Matrix};
pub use metrics::{
    asam, evaluate, match_endmembers, reconstruction_error, rmse, summarize_clusters,
    ClusterSummary, EvalReport,
};
pub use model::{
    Block, Constraint, FactorState, LipschitzSet, ProblemSpec, Ranks, Variant, Weights,
};
pub use solver::{palm_step, solve, solve_fcls, SolveResult, SolverConfig};
pub use synth::{synthesize_scene, SyntheticScene, SyntheticSceneSpec, TextureKind};
