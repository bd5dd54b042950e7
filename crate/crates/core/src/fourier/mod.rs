//! Truncated Fourier representation of space-time fields on `[0,T] × 𝕋ⁿ`.
//!
//! Coefficients are normalized so that `f(x) = Σ_k f̂(k) e^{ik·x}`; the mean
//! of `f` is `f̂(0)`.

mod decay;
mod field;
mod grid;
mod modes;
mod norms;
mod ops;
pub mod random;

pub use decay::{decay_fit, decay_fit_snapshot, DecayFit, NOISE_FLOOR};
pub use field::{Snapshot, SpectralField, VectorField};
pub use grid::TimeGrid;
pub use modes::{Modes, MAX_DIM};
pub use norms::{norm_balpha, norm_balpha_vector, norm_bj, norm_bj_series};
pub use ops::{
    divergence, dot, gradient, laplacian, product, product_snapshot, project_mean_zero,
    sample_physical, scale_vector,
};
