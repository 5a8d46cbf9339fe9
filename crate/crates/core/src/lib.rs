//! Spectral toolbox for the Dirac equation on a periodic cubic lattice.
//!
//! The crate covers five layers that build on each other:
//!
//! * exact finite-dimensional spinor algebra ([`algebra`]): Dirac matrices,
//!   their real 8x8 representation, and the Fourier symbols derived from them;
//! * lattice discretization and transforms ([`grid`], [`field`], [`spectral`]):
//!   periodic grids, 4-complex / 8-real spinor fields, FFT-based multipliers,
//!   and weighted Sobolev norms;
//! * closed-form statistics ([`covariance`]): evolution of translation-invariant
//!   covariance spectra under the free flow, their long-time limit, quadratic
//!   forms, and mixing-bound checks;
//! * random ensembles ([`ensemble`]): seeded Gaussian and moving-average
//!   samplers with prescribed covariance, plus Monte Carlo estimators for
//!   covariance, characteristic functionals, and cumulants;
//! * perturbed dynamics and scattering ([`potential`], [`bound_states`],
//!   [`scattering`]): Strang-split evolution with a localized matrix potential,
//!   gap eigenpairs with spectral projections, dispersive-decay diagnostics,
//!   and the wave operator assembled by time quadrature.
//!
//! All lattice sums are plain per-site sums; the Fourier transform pair is
//! `f̂(k) = Σ_x f(x) e^{-ik·x}`, `f(x) = n⁻³ Σ_k f̂(k) e^{ik·x}`, so a unit
//! covariance spectrum has unit per-site variance and mean charge `8`.

pub mod algebra;
pub mod bound_states;
pub mod covariance;
pub mod ensemble;
pub mod error;
pub mod field;
pub mod free;
pub mod grid;
pub mod io;
pub mod potential;
pub mod scattering;
pub mod spectral;
pub mod stats;

pub use algebra::{DiracMatrixSet, LambdaSet};
pub use covariance::{CovarianceKernel, CovarianceSpectrum};
pub use error::{Error, Result};
pub use field::{ComplexSpinorField, RealSpinorField, TestFunction};
pub use grid::PeriodicGrid;
pub use potential::LatticePotential;
pub use spectral::{SpectralEngine, WeightedNormSpec};
