//! Covariance dynamics in closed form.
//!
//! A translation-invariant measure on real 8-component fields is described by
//! its spectrum `q̂(k)`, an 8x8 hermitian PSD matrix per bin with the reality
//! symmetry `q̂(-k) = conj q̂(k) = q̂(k)ᵀ`. Under the free flow the spectrum
//! evolves by conjugation with the unitary flow symbol, which expands to the
//! three-term form in `cos 2ωt`, `sin 2ωt`, and the long-time limit is the
//! time average `q̂_∞ = ½q̂ - ½ŝ q̂ ŝ/(|k|²+m²)` with `ŝ` the flow symbol.
//! The per-bin trace is conserved exactly, so the mean charge is a lattice
//! invariant of the flow.
//!
//! Normalization: `mean_charge` of the unit spectrum is exactly 8 (trace of
//! the 8x8 identity), matching the per-site field variance of a unit-spectrum
//! ensemble.

use nalgebra::SMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::algebra::{flow_symbol, free_real_symbol, omega, LambdaSet, Matrix8c};
use crate::error::{Error, Result};
use crate::field::{RealSpinorField, TestFunction};
use crate::grid::PeriodicGrid;
use crate::spectral::SpectralEngine;

pub type Matrix8r = SMatrix<f64, 8, 8>;

/// Spectrum of a translation-invariant covariance: one 8x8 complex matrix per
/// wavevector bin.
#[derive(Debug, Clone)]
pub struct CovarianceSpectrum {
    grid: PeriodicGrid,
    data: Vec<Matrix8c>,
}

/// Real-space matrix covariance kernel `q(z)`, offset-indexed (bin 0 is zero
/// offset, displacements wrap with the minimal image).
#[derive(Debug, Clone)]
pub struct CovarianceKernel {
    grid: PeriodicGrid,
    data: Vec<Matrix8r>,
}

/// Validation summary for a spectrum.
#[derive(Debug, Clone, Copy)]
pub struct SpectrumValidation {
    pub min_eigenvalue: f64,
    pub max_hermitian_defect: f64,
    pub max_reality_defect: f64,
    pub max_norm: f64,
}

impl CovarianceSpectrum {
    pub fn identity(grid: PeriodicGrid) -> Self {
        Self::scaled_identity(grid, 1.0)
    }

    pub fn scaled_identity(grid: PeriodicGrid, c: f64) -> Self {
        let m = Matrix8c::identity() * Complex64::new(c, 0.0);
        Self {
            grid,
            data: vec![m; grid.sites()],
        }
    }

    /// Build from a per-wavevector matrix function. The caller must provide
    /// hermitian PSD values satisfying the reality symmetry; `validate`
    /// checks them.
    pub fn from_fn(grid: PeriodicGrid, f: impl Fn([f64; 3]) -> Matrix8c + Sync) -> Self {
        let data = (0..grid.sites())
            .into_par_iter()
            .map(|bin| f(grid.wavevector(grid.unflat(bin))))
            .collect();
        Self { grid, data }
    }

    pub fn from_data(grid: PeriodicGrid, data: Vec<Matrix8c>) -> Result<Self> {
        if data.len() != grid.sites() {
            return Err(Error::InvalidSpectrum(format!(
                "expected {} bins, got {}",
                grid.sites(),
                data.len()
            )));
        }
        let out = Self { grid, data };
        out.validate()?;
        Ok(out)
    }

    /// Construct without validation; for internal routes that preserve
    /// validity by construction.
    pub(crate) fn from_parts(grid: PeriodicGrid, data: Vec<Matrix8c>) -> Self {
        Self { grid, data }
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn at(&self, bin: usize) -> &Matrix8c {
        &self.data[bin]
    }

    pub fn data(&self) -> &[Matrix8c] {
        &self.data
    }

    /// Hermiticity, reality pairing, boundedness, and positive
    /// semidefiniteness (eigenvalues ≥ -1e-10 · scale).
    pub fn validate(&self) -> Result<SpectrumValidation> {
        if self.data.iter().any(|m| m.iter().any(|z| !z.is_finite())) {
            return Err(Error::InvalidSpectrum("non-finite entry".into()));
        }
        let grid = self.grid;
        let max_norm = self
            .data
            .par_iter()
            .map(|m| m.iter().map(|z| z.norm()).fold(0.0, f64::max))
            .reduce(|| 0.0, f64::max);
        let scale = max_norm.max(1e-300);

        let max_herm = self
            .data
            .par_iter()
            .map(|m| {
                (m - m.adjoint())
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max);
        if max_herm > 1e-9 * scale {
            return Err(Error::InvalidSpectrum(format!(
                "hermitian defect {max_herm:.3e} exceeds tolerance"
            )));
        }

        let max_reality = (0..grid.sites())
            .into_par_iter()
            .map(|bin| {
                let cj = grid.flat(grid.conjugate_bin(grid.unflat(bin)));
                let diff = self.data[bin].map(|z| z.conj()) - self.data[cj];
                diff.iter().map(|z| z.norm()).fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max);
        if max_reality > 1e-9 * scale {
            return Err(Error::InvalidSpectrum(format!(
                "reality symmetry defect {max_reality:.3e} exceeds tolerance"
            )));
        }

        let min_eig = self
            .data
            .par_iter()
            .map(|m| {
                let herm = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
                nalgebra::SymmetricEigen::new(herm)
                    .eigenvalues
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min)
            })
            .reduce(|| f64::INFINITY, f64::min);
        if min_eig < -1e-10 * scale.max(1.0) {
            return Err(Error::InvalidSpectrum(format!(
                "not positive semidefinite: min eigenvalue {min_eig:.3e}"
            )));
        }

        Ok(SpectrumValidation {
            min_eigenvalue: min_eig,
            max_hermitian_defect: max_herm,
            max_reality_defect: max_reality,
            max_norm,
        })
    }

    fn check_finite(&self) -> Result<()> {
        if self.data.iter().any(|m| m.iter().any(|z| !z.is_finite())) {
            return Err(Error::InvalidSpectrum("non-finite entry".into()));
        }
        Ok(())
    }

    /// `sup_k ‖q̂(k)‖` in the spectral matrix norm.
    pub fn sup_norm(&self) -> f64 {
        self.data
            .par_iter()
            .map(|m| {
                let herm = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
                nalgebra::SymmetricEigen::new(herm)
                    .eigenvalues
                    .iter()
                    .map(|x| x.abs())
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }
}

/// Evolves a covariance spectrum by time `t` under the free flow.
///
/// Uses the three-term closed form; the conjugation `ĝ q̂ ĝ*` with the
/// unitary flow symbol is algebraically identical and serves as the test
/// oracle. Hermiticity, positivity, and the per-bin trace are preserved.
pub fn qhat_evolve(q0: &CovarianceSpectrum, m: f64, t: f64) -> Result<CovarianceSpectrum> {
    q0.check_finite()?;
    let lams = LambdaSet::build();
    let grid = q0.grid;
    let data = (0..grid.sites())
        .into_par_iter()
        .map(|bin| {
            let k = grid.wavevector_symmetric(grid.unflat(bin));
            let w = omega(k, m);
            let s = flow_symbol(&lams, k, m);
            let q = &q0.data[bin];
            let (sin2, cos2) = (2.0 * w * t).sin_cos();
            let qs = q * s;
            let sq = s * q;
            q * Complex64::new(0.5 * (1.0 + cos2), 0.0)
                + (qs - sq) * Complex64::new(sin2 / (2.0 * w), 0.0)
                - s * qs * Complex64::new((1.0 - cos2) / (2.0 * w * w), 0.0)
        })
        .collect();
    Ok(CovarianceSpectrum { grid, data })
}

/// Oracle form of [`qhat_evolve`]: per-bin conjugation with the unitary flow
/// symbol `ĝ_t(k) q̂(k) ĝ_t(k)*`.
pub fn qhat_evolve_conjugation(q0: &CovarianceSpectrum, m: f64, t: f64) -> CovarianceSpectrum {
    let lams = LambdaSet::build();
    let grid = q0.grid;
    let data = (0..grid.sites())
        .into_par_iter()
        .map(|bin| {
            let k = grid.wavevector_symmetric(grid.unflat(bin));
            let g = free_real_symbol(&lams, k, m, t);
            g * q0.data[bin] * g.adjoint()
        })
        .collect();
    CovarianceSpectrum { grid, data }
}

/// Long-time limit `q̂_∞(k) = ½ q̂(k) - ½ ŝ q̂(k) ŝ / (|k|² + m²)`, the time
/// average of the evolved spectrum over one period at each bin.
pub fn qhat_limit(q0: &CovarianceSpectrum, m: f64) -> CovarianceSpectrum {
    let lams = LambdaSet::build();
    let grid = q0.grid;
    let data = (0..grid.sites())
        .into_par_iter()
        .map(|bin| {
            let k = grid.wavevector_symmetric(grid.unflat(bin));
            let s = flow_symbol(&lams, k, m);
            let green = crate::algebra::kg_green_symbol(k, m);
            let q = &q0.data[bin];
            q * Complex64::new(0.5, 0.0) - s * q * s * Complex64::new(0.5 * green, 0.0)
        })
        .collect();
    CovarianceSpectrum { grid, data }
}

/// Exact time average `T⁻¹∫₀ᵀ q̂_t dt` (the oscillatory factors integrate in
/// closed form). Converges to [`qhat_limit`] at rate `O(1/(ωT))` per bin.
pub fn qhat_time_average(q0: &CovarianceSpectrum, m: f64, t_avg: f64) -> CovarianceSpectrum {
    let lams = LambdaSet::build();
    let grid = q0.grid;
    let data = (0..grid.sites())
        .into_par_iter()
        .map(|bin| {
            let k = grid.wavevector_symmetric(grid.unflat(bin));
            let w = omega(k, m);
            let s = flow_symbol(&lams, k, m);
            let q = &q0.data[bin];
            // T⁻¹∫ cos 2ωt = sin(2ωT)/(2ωT), T⁻¹∫ sin 2ωt = (1-cos 2ωT)/(2ωT)
            let a = (2.0 * w * t_avg).sin() / (2.0 * w * t_avg);
            let b = (1.0 - (2.0 * w * t_avg).cos()) / (2.0 * w * t_avg);
            let qs = q * s;
            let sq = s * q;
            q * Complex64::new(0.5 * (1.0 + a), 0.0)
                + (qs - sq) * Complex64::new(b / (2.0 * w), 0.0)
                - s * qs * Complex64::new((1.0 - a) / (2.0 * w * w), 0.0)
        })
        .collect();
    CovarianceSpectrum { grid, data }
}

/// Frobenius distance between two spectra at one bin.
pub fn bin_distance(a: &CovarianceSpectrum, b: &CovarianceSpectrum, bin: usize) -> f64 {
    (a.data[bin] - b.data[bin])
        .iter()
        .map(|z| z.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Largest per-bin Frobenius distance.
pub fn max_bin_distance(a: &CovarianceSpectrum, b: &CovarianceSpectrum) -> f64 {
    (0..a.data.len())
        .into_par_iter()
        .map(|bin| bin_distance(a, b, bin))
        .reduce(|| 0.0, f64::max)
}

/// Largest per-bin trace drift between two spectra.
pub fn max_trace_drift(a: &CovarianceSpectrum, b: &CovarianceSpectrum) -> f64 {
    (0..a.data.len())
        .into_par_iter()
        .map(|bin| (a.data[bin].trace() - b.data[bin].trace()).norm())
        .reduce(|| 0.0, f64::max)
}

impl CovarianceKernel {
    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn at(&self, bin: usize) -> &Matrix8r {
        &self.data[bin]
    }

    pub fn data(&self) -> &[Matrix8r] {
        &self.data
    }

    pub fn from_fn(grid: PeriodicGrid, f: impl Fn([f64; 3]) -> Matrix8r + Sync) -> Self {
        let data = (0..grid.sites())
            .into_par_iter()
            .map(|bin| f(grid.min_image_offset(grid.unflat(bin))))
            .collect();
        Self { grid, data }
    }

    /// `Σ_z ‖q(z)‖₂` with the spectral matrix norm; the convolution-operator
    /// bound used by the mean-square pairing inequality.
    pub fn l1_matrix_norm(&self) -> f64 {
        self.data
            .par_iter()
            .map(|q| {
                let sym = q.transpose() * q;
                nalgebra::SymmetricEigen::new(sym)
                    .eigenvalues
                    .iter()
                    .cloned()
                    .fold(0.0, f64::max)
                    .max(0.0)
                    .sqrt()
            })
            .sum()
    }
}

/// Inverse transform of a spectrum into the real-space matrix kernel.
pub fn spectrum_to_kernel(
    engine: &SpectralEngine,
    q: &CovarianceSpectrum,
) -> Result<CovarianceKernel> {
    let grid = q.grid;
    engine.grid().check_same(&grid)?;
    let n3 = grid.sites();
    let mut out = vec![Matrix8r::zeros(); n3];
    let mut buf = vec![Complex64::new(0.0, 0.0); n3];
    for r in 0..8 {
        for s in 0..8 {
            for bin in 0..n3 {
                buf[bin] = q.data[bin][(r, s)];
            }
            engine.fft3_scalar(&mut buf, true);
            for bin in 0..n3 {
                out[bin][(r, s)] = buf[bin].re;
            }
        }
    }
    Ok(CovarianceKernel { grid, data: out })
}

/// Forward transform of a real-space kernel into its spectrum.
pub fn kernel_to_spectrum(
    engine: &SpectralEngine,
    q: &CovarianceKernel,
) -> Result<CovarianceSpectrum> {
    let grid = q.grid;
    engine.grid().check_same(&grid)?;
    let n3 = grid.sites();
    let mut out = vec![Matrix8c::zeros(); n3];
    let mut buf = vec![Complex64::new(0.0, 0.0); n3];
    for r in 0..8 {
        for s in 0..8 {
            for bin in 0..n3 {
                buf[bin] = Complex64::new(q.data[bin][(r, s)], 0.0);
            }
            engine.fft3_scalar(&mut buf, false);
            for bin in 0..n3 {
                out[bin][(r, s)] = buf[bin];
            }
        }
    }
    Ok(CovarianceSpectrum { grid, data: out })
}

/// Real-space equilibrium kernel via the spectral route (inverse transform of
/// [`qhat_limit`]).
pub fn q_limit_realspace(
    engine: &SpectralEngine,
    q0: &CovarianceSpectrum,
    m: f64,
) -> Result<CovarianceKernel> {
    spectrum_to_kernel(engine, &qhat_limit(q0, m))
}

/// Independent convolution route to the equilibrium kernel:
/// `½ q₀(z) - ½ (𝒫 * P q₀ P)(z)` with `𝒫` the static Klein-Gordon Green
/// kernel and `P q₀ P` formed by spectral differentiation, convolved by a
/// direct lattice sum. Quadratic in the generator, so it matches the spectral
/// route regardless of the sign convention picked for the generator symbol.
pub fn q_limit_convolution_route(
    engine: &SpectralEngine,
    q0: &CovarianceSpectrum,
    m: f64,
) -> Result<CovarianceKernel> {
    let grid = q0.grid;
    engine.grid().check_same(&grid)?;
    let lams = LambdaSet::build();
    let n3 = grid.sites();

    // P q0 P in Fourier space: multiply by the flow symbol on both sides
    let pqp = CovarianceSpectrum {
        grid,
        data: (0..n3)
            .into_par_iter()
            .map(|bin| {
                let k = grid.wavevector_symmetric(grid.unflat(bin));
                let s = flow_symbol(&lams, k, m);
                s * q0.data[bin] * s
            })
            .collect(),
    };
    let pqp_kernel = spectrum_to_kernel(engine, &pqp)?;
    let q0_kernel = spectrum_to_kernel(engine, q0)?;

    // lattice Green kernel of -Δ + m²
    let mut green = vec![Complex64::new(0.0, 0.0); n3];
    for bin in 0..n3 {
        let k = grid.wavevector_symmetric(grid.unflat(bin));
        green[bin] = Complex64::new(crate::algebra::kg_green_symbol(k, m), 0.0);
    }
    engine.fft3_scalar(&mut green, true);

    // direct cyclic convolution (𝒫 * PqP)(z) = Σ_y 𝒫(z - y) PqP(y)
    let n = grid.n();
    let data: Vec<Matrix8r> = (0..n3)
        .into_par_iter()
        .map(|zbin| {
            let zi = grid.unflat(zbin);
            let mut acc = Matrix8r::zeros();
            for ybin in 0..n3 {
                let yi = grid.unflat(ybin);
                let d = [
                    (zi[0] + n - yi[0]) % n,
                    (zi[1] + n - yi[1]) % n,
                    (zi[2] + n - yi[2]) % n,
                ];
                acc += pqp_kernel.data[ybin] * green[grid.flat(d)].re;
            }
            q0_kernel.data[zbin] * 0.5 - acc * 0.5
        })
        .collect();
    Ok(CovarianceKernel { grid, data })
}

/// Spectral evaluation of the quadratic form
/// `Q(φ, φ) = n⁻³ Σ_k φ̂(k)† q̂(k) φ̂(k)`, which equals the real-space double
/// sum `Σ_{x,y} φ(x)ᵀ q(x-y) φ(y)`. Nonnegative for PSD spectra and bounded
/// by `sup_k ‖q̂(k)‖ · ‖φ‖²`.
pub fn quadratic_form(
    engine: &SpectralEngine,
    q: &CovarianceSpectrum,
    phi: &RealSpinorField,
) -> Result<f64> {
    q.grid.check_same(&phi.grid())?;
    let sp = engine.forward8(phi)?;
    quadratic_form_spectrum(q, &sp)
}

/// Quadratic form evaluated on an already-transformed probe spectrum.
pub fn quadratic_form_spectrum(
    q: &CovarianceSpectrum,
    phi_hat: &crate::spectral::RealFieldSpectrum,
) -> Result<f64> {
    q.grid.check_same(&phi_hat.grid)?;
    let acc: f64 = (0..q.grid.sites())
        .map(|bin| {
            let v = phi_hat.bin(bin);
            let qv = q.data[bin] * v;
            v.iter()
                .zip(qv.iter())
                .map(|(a, b)| (a.conj() * b).re)
                .sum::<f64>()
        })
        .sum();
    Ok(acc / q.grid.sites() as f64)
}

/// Quadratic form against a compactly supported probe.
pub fn quadratic_form_probe(
    engine: &SpectralEngine,
    q: &CovarianceSpectrum,
    phi: &TestFunction,
) -> Result<f64> {
    quadratic_form(engine, q, &phi.values)
}

/// Mean charge density `tr q(0) = n⁻³ Σ_k tr q̂(k)`; exactly conserved by
/// [`qhat_evolve`].
pub fn mean_charge(q: &CovarianceSpectrum) -> f64 {
    let total: Complex64 = q.data.iter().map(|m| m.trace()).sum();
    total.re / q.grid.sites() as f64
}

/// Declared mixing-coefficient profile, with decidable integrability of
/// `∫ r² φ^{1/2}(r) dr`.
#[derive(Debug, Clone)]
pub enum MixingProfile {
    /// `φ(r) = 1` for `r ≤ range`, `0` beyond: finite-range dependence.
    CompactlySupported { range: f64 },
    /// `φ(r) = (1 + r/scale)^{-exponent}`: integrable iff `exponent > 6`.
    PowerLaw { exponent: f64, scale: f64 },
    /// `φ ≡ value`: never integrable (for failure reporting).
    Constant { value: f64 },
}

impl MixingProfile {
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            MixingProfile::CompactlySupported { range } => {
                if r <= *range {
                    1.0
                } else {
                    0.0
                }
            }
            MixingProfile::PowerLaw { exponent, scale } => (1.0 + r / scale).powf(-exponent),
            MixingProfile::Constant { value } => *value,
        }
    }

    /// Whether `∫₀^∞ r² φ^{1/2}(r) dr` converges for this profile family.
    pub fn integrable(&self) -> bool {
        match self {
            MixingProfile::CompactlySupported { .. } => true,
            MixingProfile::PowerLaw { exponent, .. } => *exponent > 6.0,
            MixingProfile::Constant { .. } => false,
        }
    }
}

/// Result of checking `|q(z)| ≤ C e₀ φ^{1/2}(|z|)` together with the
/// integrability of the mixing profile.
#[derive(Debug, Clone)]
pub struct MixingBoundReport {
    pub passed: bool,
    pub integrable: bool,
    /// Smallest constant C that makes the pointwise bound hold (∞ when the
    /// kernel is nonzero where the profile vanishes).
    pub measured_c: f64,
    /// Trapezoid value of `∫ r² φ^{1/2}` over the torus window `[0, L/2]`.
    pub window_integral: f64,
    /// Sites violating the bound where the profile vanishes.
    pub violations: Vec<[usize; 3]>,
}

/// Checks the pointwise kernel bound against a declared mixing profile.
pub fn validate_mixing_bound(
    kernel: &CovarianceKernel,
    e0: f64,
    profile: &MixingProfile,
) -> MixingBoundReport {
    let grid = kernel.grid;
    let mut measured_c: f64 = 0.0;
    let mut violations = Vec::new();
    let tol = 1e-10 * e0.abs().max(1.0);
    for bin in 0..grid.sites() {
        let r = grid.offset_norm(grid.unflat(bin));
        let weight = e0 * profile.eval(r).sqrt();
        let max_entry = kernel.data[bin].abs().max();
        if weight <= tol {
            if max_entry > tol {
                violations.push(grid.unflat(bin));
                measured_c = f64::INFINITY;
            }
        } else {
            measured_c = measured_c.max(max_entry / weight);
        }
    }
    let h = grid.spacing();
    let steps = (0.5 * grid.extent() / h).ceil() as usize;
    let mut integral = 0.0;
    for i in 0..steps {
        let r0 = i as f64 * h;
        let r1 = r0 + h;
        let f0 = r0 * r0 * profile.eval(r0).sqrt();
        let f1 = r1 * r1 * profile.eval(r1).sqrt();
        integral += 0.5 * (f0 + f1) * h;
    }
    MixingBoundReport {
        passed: profile.integrable() && violations.is_empty() && measured_c.is_finite(),
        integrable: profile.integrable(),
        measured_c,
        window_integral: integral,
        violations,
    }
}
