//! Seeded random-field ensembles and Monte Carlo estimators.
//!
//! Two samplers produce zero-mean translation-invariant real fields:
//!
//! * [`GaussianSampler`] draws per-bin complex Gaussians with covariance
//!   `q̂₀(k)`, imposing the `k ↔ -k` conjugation constraint, so stationarity
//!   on the torus is exact;
//! * [`MovingAverageSampler`] convolves i.i.d. site noise (Gaussian or
//!   Rademacher ±1) with a compactly supported scalar kernel; dependence has
//!   finite range `2R`, the canonical example with an exactly vanishing
//!   mixing coefficient beyond that range.
//!
//! Sample `j` draws from the deterministic stream `(seed, j)` (see
//! [`crate::stats::sample_rng`], stream version 1), bin/site order fixed, so
//! parallel and serial generation agree bit for bit.
//!
//! Estimators stream over sample indices and keep only per-sample summaries,
//! so ensembles never need to be materialized at large grids; accumulation
//! order is fixed by sample index.

use nalgebra::SVector;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::covariance::{CovarianceSpectrum, Matrix8r};
use crate::error::{Error, Result};
use crate::field::{real_dot, RealSpinorField, TestFunction};
use crate::grid::PeriodicGrid;
use crate::spectral::{RealFieldSpectrum, SpectralEngine};
use crate::stats::{cumulants, sample_rng, CumulantReport};

type Matrix8c = crate::algebra::Matrix8c;
type V8c = SVector<Complex64, 8>;

/// Noise law for the moving-average construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum NoiseKind {
    Gaussian,
    /// i.i.d. ±1; fourth cumulant -2 per variable, distinctly non-Gaussian.
    Rademacher,
}

/// Compactly supported scalar kernel of a moving average.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub enum KernelShape {
    /// `a = δ`: i.i.d. site noise.
    SingleSite,
    /// Indicator of the ball `|z| ≤ radius`, normalized to `Σ a² = 1`.
    Ball { radius: f64 },
    /// Ball kernel with the fraction `spike` of its squared mass at the
    /// center site. A flat ball averages enough noise to look nearly
    /// Gaussian at a single site; concentrating the center keeps the
    /// marginal kurtosis large while preserving the dependence range.
    SpikedBall { radius: f64, spike: f64 },
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MovingAverageSpec {
    pub kernel: KernelShape,
    pub noise: NoiseKind,
}

impl MovingAverageSpec {
    pub fn support_radius(&self) -> f64 {
        match self.kernel {
            KernelShape::SingleSite => 0.0,
            KernelShape::Ball { radius } | KernelShape::SpikedBall { radius, .. } => radius,
        }
    }
}

/// Stream of stationary random fields, addressed by sample index.
pub trait FieldSampler: Sync {
    fn grid(&self) -> PeriodicGrid;
    fn seed(&self) -> u64;
    /// Exact covariance spectrum of the sampled measure.
    fn covariance_spectrum(&self) -> CovarianceSpectrum;
    /// Serializable description for ensemble metadata.
    fn descriptor(&self) -> serde_json::Value;
    /// Spectrum of sample `index` (deterministic in `(seed, index)`).
    fn sample_spectrum(&self, engine: &SpectralEngine, index: u64) -> RealFieldSpectrum;

    fn sample_field(&self, engine: &SpectralEngine, index: u64) -> RealSpinorField {
        engine
            .inverse8(&self.sample_spectrum(engine, index))
            .expect("sampler and engine grids agree")
    }
}

/// Gaussian sampler with prescribed covariance spectrum.
pub struct GaussianSampler {
    grid: PeriodicGrid,
    seed: u64,
    spectrum: CovarianceSpectrum,
    /// `sqrt(n³) · q̂(k)^{1/2}` per bin (PSD square root via eigenvalues).
    factors: Vec<Matrix8c>,
}

impl GaussianSampler {
    pub fn new(spectrum: &CovarianceSpectrum, seed: u64) -> Result<Self> {
        let grid = spectrum.grid();
        let scale = (grid.sites() as f64).sqrt();
        let tol = -1e-8 * spectrum.sup_norm().max(1.0);
        let factors: Vec<Matrix8c> = (0..grid.sites())
            .into_par_iter()
            .map(|bin| -> Result<Matrix8c> {
                let q = spectrum.at(bin);
                if grid.is_self_conjugate(grid.unflat(bin)) {
                    // spectrum is real symmetric here; factor over the reals
                    // so the drawn coefficient stays real
                    let qr = Matrix8r::from_fn(|r, s| q[(r, s)].re);
                    let eig = nalgebra::SymmetricEigen::new(qr);
                    if eig.eigenvalues.iter().any(|&l| l < tol) {
                        return Err(Error::InvalidSpectrum(format!(
                            "negative eigenvalue {:.3e} at self-conjugate bin {bin}",
                            eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
                        )));
                    }
                    let mut b = Matrix8r::zeros();
                    for c in 0..8 {
                        let l = eig.eigenvalues[c].max(0.0).sqrt() * scale;
                        for r in 0..8 {
                            b[(r, c)] = eig.eigenvectors[(r, c)] * l;
                        }
                    }
                    Ok(Matrix8c::from_fn(|r, s| Complex64::new(b[(r, s)], 0.0)))
                } else {
                    let herm = (q + q.adjoint()) * Complex64::new(0.5, 0.0);
                    let eig = nalgebra::SymmetricEigen::new(herm);
                    if eig.eigenvalues.iter().any(|&l| l < tol) {
                        return Err(Error::InvalidSpectrum(format!(
                            "negative eigenvalue {:.3e} at bin {bin}",
                            eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
                        )));
                    }
                    let mut b = Matrix8c::zeros();
                    for c in 0..8 {
                        let l = eig.eigenvalues[c].max(0.0).sqrt() * scale;
                        for r in 0..8 {
                            b[(r, c)] = eig.eigenvectors[(r, c)] * Complex64::new(l, 0.0);
                        }
                    }
                    Ok(b)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            seed,
            spectrum: spectrum.clone(),
            factors,
        })
    }
}

impl FieldSampler for GaussianSampler {
    fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn covariance_spectrum(&self) -> CovarianceSpectrum {
        self.spectrum.clone()
    }

    fn descriptor(&self) -> serde_json::Value {
        json!({
            "sampler": "gaussian",
            "stream_version": 1,
            "grid": { "n": self.grid.n(), "extent": self.grid.extent() },
        })
    }

    fn sample_spectrum(&self, _engine: &SpectralEngine, index: u64) -> RealFieldSpectrum {
        let grid = self.grid;
        let mut rng = sample_rng(self.seed, index);
        let mut out = RealFieldSpectrum::zeros(grid);
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        for bin in 0..grid.sites() {
            let idx = grid.unflat(bin);
            if grid.is_self_conjugate(idx) {
                let eta = V8c::from_fn(|_, _| {
                    Complex64::new(rng.sample(rand_distr::StandardNormal), 0.0)
                });
                out.set_bin(bin, self.factors[bin] * eta);
            } else {
                let conj_bin = grid.flat(grid.conjugate_bin(idx));
                if bin < conj_bin {
                    let xi = V8c::from_fn(|_, _| {
                        Complex64::new(
                            rng.sample(rand_distr::StandardNormal),
                            rng.sample(rand_distr::StandardNormal),
                        ) * inv_sqrt2
                    });
                    let v = self.factors[bin] * xi;
                    out.set_bin(bin, v);
                    out.set_bin(conj_bin, v.map(|z| z.conj()));
                }
            }
        }
        out
    }
}

/// Moving-average sampler: site noise convolved with a compact kernel.
pub struct MovingAverageSampler {
    grid: PeriodicGrid,
    seed: u64,
    spec: MovingAverageSpec,
    /// Kernel values on offset-indexed sites (bin 0 = zero offset).
    kernel: Vec<f64>,
    /// Fourier transform of the kernel (real: the kernel is even).
    kernel_hat: Vec<f64>,
}

impl MovingAverageSampler {
    pub fn new(
        engine: &SpectralEngine,
        spec: MovingAverageSpec,
        seed: u64,
    ) -> Result<Self> {
        let grid = engine.grid();
        let radius = spec.support_radius();
        if radius >= 0.25 * grid.extent() {
            return Err(Error::InvalidParameter(format!(
                "kernel radius {radius} must stay below L/4 = {}",
                0.25 * grid.extent()
            )));
        }
        let mut kernel = vec![0.0; grid.sites()];
        match spec.kernel {
            KernelShape::SingleSite => kernel[0] = 1.0,
            KernelShape::Ball { radius } => {
                for (bin, slot) in kernel.iter_mut().enumerate() {
                    if grid.offset_norm(grid.unflat(bin)) <= radius {
                        *slot = 1.0;
                    }
                }
                let norm: f64 = kernel.iter().map(|a| a * a).sum::<f64>().sqrt();
                for a in kernel.iter_mut() {
                    *a /= norm;
                }
            }
            KernelShape::SpikedBall { radius, spike } => {
                if !(0.0..1.0).contains(&spike) {
                    return Err(Error::InvalidParameter(format!(
                        "spike fraction must lie in [0, 1), got {spike}"
                    )));
                }
                let mut count = 0usize;
                for (bin, slot) in kernel.iter_mut().enumerate() {
                    if bin != 0 && grid.offset_norm(grid.unflat(bin)) <= radius {
                        *slot = 1.0;
                        count += 1;
                    }
                }
                let rim = if count > 0 {
                    ((1.0 - spike) / count as f64).sqrt()
                } else {
                    0.0
                };
                for a in kernel.iter_mut() {
                    *a *= rim;
                }
                kernel[0] = spike.sqrt();
            }
        }
        let mut buf: Vec<Complex64> = kernel.iter().map(|&a| Complex64::new(a, 0.0)).collect();
        engine.fft3_scalar(&mut buf, false);
        let kernel_hat = buf.iter().map(|z| z.re).collect();
        Ok(Self {
            grid,
            seed,
            spec,
            kernel,
            kernel_hat,
        })
    }

    /// Exact kernel autocorrelation `(a ⋆ a)(z) = Σ_y a(y) a(y + z)`,
    /// computed by direct summation over the support.
    pub fn kernel_autocorrelation(&self, offset: [usize; 3]) -> f64 {
        let grid = self.grid;
        let n = grid.n();
        let mut acc = 0.0;
        for (ybin, &ay) in self.kernel.iter().enumerate() {
            if ay == 0.0 {
                continue;
            }
            let y = grid.unflat(ybin);
            let shifted = [
                (y[0] + offset[0]) % n,
                (y[1] + offset[1]) % n,
                (y[2] + offset[2]) % n,
            ];
            acc += ay * self.kernel[grid.flat(shifted)];
        }
        acc
    }
}

impl FieldSampler for MovingAverageSampler {
    fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn covariance_spectrum(&self) -> CovarianceSpectrum {
        let grid = self.grid;
        let hats = self.kernel_hat.clone();
        CovarianceSpectrum::from_parts(
            grid,
            (0..grid.sites())
                .map(|bin| Matrix8c::identity() * Complex64::new(hats[bin] * hats[bin], 0.0))
                .collect(),
        )
    }

    fn descriptor(&self) -> serde_json::Value {
        json!({
            "sampler": "moving-average",
            "stream_version": 1,
            "kernel": self.spec.kernel,
            "noise": self.spec.noise,
            "grid": { "n": self.grid.n(), "extent": self.grid.extent() },
        })
    }

    fn sample_spectrum(&self, engine: &SpectralEngine, index: u64) -> RealFieldSpectrum {
        let grid = self.grid;
        let n3 = grid.sites();
        let mut rng = sample_rng(self.seed, index);
        let mut out = RealFieldSpectrum::zeros(grid);
        let mut buf = vec![Complex64::new(0.0, 0.0); n3];
        // noise stream order: component-major, site-minor (version 1)
        for comp in 0..8 {
            match self.spec.noise {
                NoiseKind::Gaussian => {
                    for slot in buf.iter_mut() {
                        *slot =
                            Complex64::new(rng.sample(rand_distr::StandardNormal), 0.0);
                    }
                }
                NoiseKind::Rademacher => {
                    for slot in buf.iter_mut() {
                        *slot = Complex64::new(if rng.gen::<bool>() { 1.0 } else { -1.0 }, 0.0);
                    }
                }
            }
            engine.fft3_scalar(&mut buf, false);
            for bin in 0..n3 {
                out.data[8 * bin + comp] = buf[bin] * self.kernel_hat[bin];
            }
        }
        out
    }
}

/// Materialized ensemble (practical at small grids; estimators below stream
/// instead of holding samples).
pub struct Ensemble {
    pub grid: PeriodicGrid,
    pub seed: u64,
    pub samples: Vec<RealSpinorField>,
    pub descriptor: serde_json::Value,
}

impl Ensemble {
    pub fn generate(
        engine: &SpectralEngine,
        sampler: &dyn FieldSampler,
        n_samples: usize,
    ) -> Self {
        let samples: Vec<RealSpinorField> = (0..n_samples as u64)
            .into_par_iter()
            .map(|j| sampler.sample_field(engine, j))
            .collect();
        Self {
            grid: sampler.grid(),
            seed: sampler.seed(),
            samples,
            descriptor: sampler.descriptor(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean field entrywise max (zero-mean diagnostic).
    pub fn max_mean_amplitude(&self) -> f64 {
        let n3 = self.grid.sites() * 8;
        let mut acc = vec![0.0f64; n3];
        for s in &self.samples {
            for (a, &x) in acc.iter_mut().zip(s.data()) {
                *a += x;
            }
        }
        let n = self.samples.len() as f64;
        acc.iter().map(|a| (a / n).abs()).fold(0.0, f64::max)
    }

    /// Translation-averaged covariance estimate at a lattice offset, with a
    /// per-entry standard error over samples.
    pub fn covariance_at_offset(&self, offset: [usize; 3]) -> Result<(Matrix8r, Matrix8r)> {
        if self.samples.len() < 2 {
            return Err(Error::EmptyEnsemble(format!(
                "need ≥ 2 samples, have {}",
                self.samples.len()
            )));
        }
        let grid = self.grid;
        let n = grid.n();
        let terms: Vec<Matrix8r> = self
            .samples
            .par_iter()
            .map(|s| {
                let mut acc = Matrix8r::zeros();
                for x in 0..grid.sites() {
                    let xi = grid.unflat(x);
                    let shifted = [
                        (xi[0] + offset[0]) % n,
                        (xi[1] + offset[1]) % n,
                        (xi[2] + offset[2]) % n,
                    ];
                    let vx = s.site(grid.flat(shifted));
                    let vy = s.site(x);
                    acc += vx * vy.transpose();
                }
                acc / grid.sites() as f64
            })
            .collect();
        Ok(mean_and_stderr_matrices(&terms))
    }

    /// `N⁻¹ Σ_j exp(i⟨ψ_j, φ⟩)` with its standard error.
    pub fn char_functional(&self, phi: &TestFunction) -> Result<CharFunctionalEstimate> {
        let scalars = self.pairing_scalars(phi)?;
        Ok(char_functional_from_scalars(&scalars))
    }

    pub fn pairing_scalars(&self, phi: &TestFunction) -> Result<Vec<f64>> {
        if self.samples.is_empty() {
            return Err(Error::EmptyEnsemble("no samples".into()));
        }
        self.samples
            .iter()
            .map(|s| real_dot(s, &phi.values))
            .collect()
    }

    /// Cumulant report of the pairing scalar against a probe.
    pub fn gaussianity_test(&self, phi: &TestFunction) -> Result<CumulantReport> {
        Ok(cumulants(&self.pairing_scalars(phi)?))
    }
}

fn mean_and_stderr_matrices(terms: &[Matrix8r]) -> (Matrix8r, Matrix8r) {
    let n = terms.len() as f64;
    let mut mean = Matrix8r::zeros();
    for t in terms {
        mean += t;
    }
    mean /= n;
    let mut var = Matrix8r::zeros();
    for t in terms {
        let d = t - mean;
        var += d.component_mul(&d);
    }
    let stderr = (var / (n - 1.0) / n).map(f64::sqrt);
    (mean, stderr)
}

/// Monte Carlo estimate of a complex mean with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct CharFunctionalEstimate {
    pub value: Complex64,
    pub stderr: f64,
    pub n: usize,
}

pub fn char_functional_from_scalars(scalars: &[f64]) -> CharFunctionalEstimate {
    let n = scalars.len();
    let values: Vec<Complex64> = scalars
        .iter()
        .map(|&s| Complex64::from_polar(1.0, s))
        .collect();
    let mean: Complex64 = values.iter().sum::<Complex64>() / n as f64;
    if n < 2 {
        return CharFunctionalEstimate {
            value: mean,
            stderr: 0.0,
            n,
        };
    }
    let var: f64 = values.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / (n as f64 - 1.0);
    CharFunctionalEstimate {
        value: mean,
        stderr: (var / n as f64).sqrt(),
        n,
    }
}

/// Per-probe covariance estimate at a wavevector bin.
#[derive(Debug, Clone)]
pub struct ProbeCovariance {
    pub bin: [usize; 3],
    pub mean: Matrix8c,
    pub stderr_re: Matrix8r,
    pub stderr_im: Matrix8r,
}

/// Streaming estimate of `q̂(k)` at probe bins: the per-sample term is
/// `v(k) v(k)† / n³` with `v` the sample spectrum, unbiased for the true
/// spectrum by exact torus stationarity (this is the translation-averaged
/// estimator in Fourier form).
pub fn empirical_spectrum_probes(
    engine: &SpectralEngine,
    sampler: &dyn FieldSampler,
    n_samples: usize,
    probes: &[[usize; 3]],
    evolve_t: Option<(f64, f64)>,
) -> Result<Vec<ProbeCovariance>> {
    if n_samples < 2 {
        return Err(Error::EmptyEnsemble(format!(
            "need ≥ 2 samples, requested {n_samples}"
        )));
    }
    let grid = sampler.grid();
    let lams = crate::algebra::LambdaSet::build();
    let terms: Vec<Vec<Matrix8c>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|j| {
            let mut sp = sampler.sample_spectrum(engine, j);
            if let Some((m, t)) = evolve_t {
                crate::free::evolve_spectrum8_in_place(&mut sp, &lams, m, t);
            }
            probes
                .iter()
                .map(|&p| {
                    let v = sp.bin(grid.flat(p));
                    let mut out = Matrix8c::zeros();
                    for r in 0..8 {
                        for s in 0..8 {
                            out[(r, s)] = v[r] * v[s].conj();
                        }
                    }
                    out / Complex64::new(grid.sites() as f64, 0.0)
                })
                .collect()
        })
        .collect();

    let nf = n_samples as f64;
    let mut results = Vec::with_capacity(probes.len());
    for (pi, &probe) in probes.iter().enumerate() {
        let mut mean = Matrix8c::zeros();
        for t in &terms {
            mean += t[pi];
        }
        mean /= Complex64::new(nf, 0.0);
        let mut var_re = Matrix8r::zeros();
        let mut var_im = Matrix8r::zeros();
        for t in &terms {
            let d = t[pi] - mean;
            for r in 0..8 {
                for s in 0..8 {
                    var_re[(r, s)] += d[(r, s)].re * d[(r, s)].re;
                    var_im[(r, s)] += d[(r, s)].im * d[(r, s)].im;
                }
            }
        }
        let stderr_re = (var_re / (nf - 1.0) / nf).map(f64::sqrt);
        let stderr_im = (var_im / (nf - 1.0) / nf).map(f64::sqrt);
        results.push(ProbeCovariance {
            bin: probe,
            mean,
            stderr_re,
            stderr_im,
        });
    }
    Ok(results)
}

/// Streaming pairing scalars `⟨ψ_j, g_p⟩` for a family of probe spectra,
/// evaluated in Fourier space (Parseval); returns `scalars[probe][sample]`.
pub fn pairing_scalars_stream(
    engine: &SpectralEngine,
    sampler: &dyn FieldSampler,
    n_samples: usize,
    probe_spectra: &[RealFieldSpectrum],
) -> Result<Vec<Vec<f64>>> {
    if n_samples == 0 {
        return Err(Error::EmptyEnsemble("no samples requested".into()));
    }
    let rows: Vec<Vec<f64>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|j| {
            let sp = sampler.sample_spectrum(engine, j);
            probe_spectra
                .iter()
                .map(|g| sp.pair(g).expect("probe grids agree"))
                .collect()
        })
        .collect();
    let mut out = vec![Vec::with_capacity(n_samples); probe_spectra.len()];
    for row in rows {
        for (p, v) in row.into_iter().enumerate() {
            out[p].push(v);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{mean_charge, quadratic_form};
    use crate::free::evolve_free_real;

    fn setup(n: usize) -> (PeriodicGrid, SpectralEngine) {
        let g = PeriodicGrid::new(n, n as f64).unwrap();
        let e = SpectralEngine::new(g);
        (g, e)
    }

    #[test]
    fn gaussian_sampler_deterministic_and_real() {
        let (g, e) = setup(8);
        let q = CovarianceSpectrum::identity(g);
        let s = GaussianSampler::new(&q, 42).unwrap();
        let a = s.sample_field(&e, 3);
        let b = s.sample_field(&e, 3);
        assert_eq!(a.data(), b.data(), "same stream must be bit-identical");
        let c = s.sample_field(&e, 4);
        assert_ne!(a.data(), c.data());
        assert!(a.data().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn gaussian_sampler_rejects_non_psd() {
        let (g, _) = setup(4);
        let mut data = vec![Matrix8c::identity(); g.sites()];
        data[0][(0, 0)] = Complex64::new(-0.5, 0.0);
        let bad = CovarianceSpectrum::from_parts(g, data);
        assert!(GaussianSampler::new(&bad, 1).is_err());
    }

    #[test]
    fn gaussian_unit_spectrum_statistics() {
        let (g, e) = setup(8);
        let q = CovarianceSpectrum::identity(g);
        let sampler = GaussianSampler::new(&q, 7).unwrap();
        let n = 4000;
        let probes = [[0usize, 0, 0], [1, 0, 0], [2, 1, 0], [3, 3, 1], [4, 2, 3]];
        let est = empirical_spectrum_probes(&e, &sampler, n, &probes, None).unwrap();
        let mut checked = 0;
        let mut inside = 0;
        for pc in &est {
            for r in 0..8 {
                for s in 0..8 {
                    let want = if r == s { 1.0 } else { 0.0 };
                    let d_re = (pc.mean[(r, s)].re - want).abs();
                    let d_im = pc.mean[(r, s)].im.abs();
                    checked += 2;
                    if d_re <= 3.0 * pc.stderr_re[(r, s)].max(1e-12) {
                        inside += 1;
                    }
                    if d_im <= 3.0 * pc.stderr_im[(r, s)].max(1e-12) {
                        inside += 1;
                    }
                }
            }
        }
        // ~99.7% coverage expected at 3σ; demand 90%
        assert!(
            inside as f64 >= 0.9 * checked as f64,
            "only {inside}/{checked} entries within 3σ"
        );
        // mean field is small (extreme-value bound over all entries)
        let ens = Ensemble::generate(&e, &sampler, 400);
        let bound = crate::stats::extreme_mean_bound(8 * g.sites(), 400, 1.0);
        assert!(ens.max_mean_amplitude() < bound);
    }

    #[test]
    fn moving_average_kernel_covariance() {
        let (g, e) = setup(16);
        let spec = MovingAverageSpec {
            kernel: KernelShape::Ball { radius: 2.0 },
            noise: NoiseKind::Rademacher,
        };
        let sampler = MovingAverageSampler::new(&e, spec, 11).unwrap();
        // exact spectrum is |â|² I and mean charge is 8 Σa² = 8
        let q0 = sampler.covariance_spectrum();
        assert!((mean_charge(&q0) - 8.0).abs() < 1e-10);
        // empirical covariance at offsets matches the kernel autocorrelation
        let ens = Ensemble::generate(&e, &sampler, 600);
        for offset in [[0usize, 0, 0], [1, 0, 0], [2, 1, 0]] {
            let (mean, stderr) = ens.covariance_at_offset(offset).unwrap();
            let want = sampler.kernel_autocorrelation(offset);
            for r in 0..8 {
                for s in 0..8 {
                    let target = if r == s { want } else { 0.0 };
                    let tol = 4.0 * stderr[(r, s)].max(1e-3);
                    assert!(
                        (mean[(r, s)] - target).abs() <= tol,
                        "offset {offset:?} entry ({r},{s}): {} vs {target}",
                        mean[(r, s)]
                    );
                }
            }
        }
        // independence beyond range 2R
        let far = [8usize, 8, 8];
        let (mean_far, _) = ens.covariance_at_offset(far).unwrap();
        assert!(mean_far.abs().max() < 4.0 / (600f64).sqrt());
    }

    #[test]
    fn single_site_rademacher_is_iid_sign_noise() {
        let (g, e) = setup(8);
        let spec = MovingAverageSpec {
            kernel: KernelShape::SingleSite,
            noise: NoiseKind::Rademacher,
        };
        let sampler = MovingAverageSampler::new(&e, spec, 5).unwrap();
        let f = sampler.sample_field(&e, 0);
        for &x in f.data() {
            assert!((x.abs() - 1.0).abs() < 1e-9, "value {x} is not ±1");
        }
        // κ₄ of the single-site pairing scalar: weights c_j pick out one site
        let ens = Ensemble::generate(&e, &sampler, 3000);
        let phi = TestFunction::site_bump(g, SVector::<f64, 8>::from_element(1.0));
        let rep = ens.gaussianity_test(&phi).unwrap();
        // s = Σ_j ξ_j ⇒ κ₄ = -2 · 8
        assert!(
            (rep.k4 + 16.0).abs() < 5.0 * rep.k4_stderr.max(0.5),
            "κ₄ = {} ± {}",
            rep.k4,
            rep.k4_stderr
        );
    }

    #[test]
    fn char_functional_basics() {
        let (g, e) = setup(8);
        let q = CovarianceSpectrum::identity(g);
        let sampler = GaussianSampler::new(&q, 21).unwrap();
        let ens = Ensemble::generate(&e, &sampler, 1500);
        // φ = 0 gives exactly 1
        let zero = TestFunction::site_bump(g, SVector::<f64, 8>::zeros());
        let est0 = ens.char_functional(&zero).unwrap();
        assert_eq!(est0.value, Complex64::new(1.0, 0.0));
        // Gaussian identity: E e^{i⟨ψ,φ⟩} = exp(-½ Q₀(φ,φ))
        let phi = TestFunction::gaussian_bump(g, 1.0, 3.0, SVector::<f64, 8>::from_element(0.35));
        let est = ens.char_functional(&phi).unwrap();
        assert!(est.value.norm() <= 1.0 + 1e-12);
        let want = (-0.5 * quadratic_form(&e, &q, &phi.values).unwrap()).exp();
        assert!(
            (est.value - Complex64::new(want, 0.0)).norm() <= 3.0 / (est.n as f64).sqrt() + 0.01,
            "estimate {} vs {want}",
            est.value
        );
        // product-of-cosines closed form for single-site Rademacher noise
        let spec = MovingAverageSpec {
            kernel: KernelShape::SingleSite,
            noise: NoiseKind::Rademacher,
        };
        let rsampler = MovingAverageSampler::new(&e, spec, 9).unwrap();
        let rens = Ensemble::generate(&e, &rsampler, 2000);
        let mut weights = SVector::<f64, 8>::zeros();
        weights[0] = 0.9;
        weights[3] = -0.4;
        let site_phi = TestFunction::site_bump(g, weights);
        let rest = rens.char_functional(&site_phi).unwrap();
        let closed: f64 = weights.iter().map(|c| c.cos()).product();
        assert!(
            (rest.value - Complex64::new(closed, 0.0)).norm() <= 4.0 / (2000f64).sqrt() + 0.01,
            "estimate {} vs closed form {closed}",
            rest.value
        );
    }

    #[test]
    fn gaussian_cumulants_near_zero() {
        let (g, e) = setup(8);
        let q = CovarianceSpectrum::identity(g);
        let sampler = GaussianSampler::new(&q, 33).unwrap();
        let ens = Ensemble::generate(&e, &sampler, 2000);
        let phi = TestFunction::gaussian_bump(g, 1.2, 3.0, SVector::<f64, 8>::from_element(0.4));
        let rep = ens.gaussianity_test(&phi).unwrap();
        assert!(rep.k3.abs() <= 4.0 * rep.k3_stderr.max(1e-6), "κ₃ = {}", rep.k3);
        assert!(rep.k4.abs() <= 4.0 * rep.k4_stderr.max(1e-6), "κ₄ = {}", rep.k4);
    }

    #[test]
    fn evolved_gaussian_ensemble_stays_at_identity_spectrum() {
        // the unit spectrum is a fixed point of the flow, so the evolved
        // empirical spectrum must match the identity within Monte Carlo error
        let (g, e) = setup(8);
        let q = CovarianceSpectrum::identity(g);
        let sampler = GaussianSampler::new(&q, 55).unwrap();
        let probes = [[1usize, 0, 0], [2, 2, 1]];
        let est = empirical_spectrum_probes(&e, &sampler, 1200, &probes, Some((1.0, 4.0))).unwrap();
        for pc in &est {
            for r in 0..8 {
                for s in 0..8 {
                    let want = if r == s { 1.0 } else { 0.0 };
                    assert!(
                        (pc.mean[(r, s)].re - want).abs()
                            <= 4.0 * pc.stderr_re[(r, s)].max(1e-3),
                        "entry ({r},{s})"
                    );
                }
            }
        }
    }

    #[test]
    fn translation_estimator_invariant_under_cyclic_shift() {
        let (g, e) = setup(8);
        let q = CovarianceSpectrum::identity(g);
        let sampler = GaussianSampler::new(&q, 70).unwrap();
        let mut ens = Ensemble::generate(&e, &sampler, 4);
        let (before, _) = ens.covariance_at_offset([1, 2, 0]).unwrap();
        // cyclically shift every sample by the same lattice vector
        let shift = [3usize, 5, 1];
        let n = g.n();
        for s in ens.samples.iter_mut() {
            let mut shifted = RealSpinorField::zeros(g);
            for site in 0..g.sites() {
                let idx = g.unflat(site);
                let moved = [
                    (idx[0] + shift[0]) % n,
                    (idx[1] + shift[1]) % n,
                    (idx[2] + shift[2]) % n,
                ];
                shifted.set_site(g.flat(moved), s.site(site));
            }
            *s = shifted;
        }
        let (after, _) = ens.covariance_at_offset([1, 2, 0]).unwrap();
        assert!((before - after).abs().max() < 1e-12);
    }

    #[test]
    fn monte_carlo_error_scales_like_inverse_sqrt_n() {
        let (g, e) = setup(8);
        let q = CovarianceSpectrum::identity(g);
        let probes = [[1usize, 0, 0], [2, 1, 0], [0, 3, 2], [3, 3, 3], [1, 2, 1]];
        let ns = [250usize, 1000, 4000];
        let mut errs = Vec::new();
        for (i, &n) in ns.iter().enumerate() {
            let sampler = GaussianSampler::new(&q, 100 + i as u64).unwrap();
            let est = empirical_spectrum_probes(&e, &sampler, n, &probes, None).unwrap();
            let mut err = 0.0;
            let mut count = 0;
            for pc in &est {
                for r in 0..8 {
                    for s in 0..8 {
                        let want = if r == s { 1.0 } else { 0.0 };
                        err += (pc.mean[(r, s)] - Complex64::new(want, 0.0)).norm_sqr();
                        count += 1;
                    }
                }
            }
            errs.push((err / count as f64).sqrt());
        }
        let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
        let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
        let fit = crate::stats::linear_fit(&xs, &ys);
        assert!(
            (fit.slope + 0.5).abs() < 0.2,
            "MC error slope {} not near -1/2",
            fit.slope
        );
    }

    #[test]
    fn streaming_and_materialized_pairings_agree() {
        let (g, e) = setup(8);
        let q = CovarianceSpectrum::identity(g);
        let sampler = GaussianSampler::new(&q, 5).unwrap();
        let phi = TestFunction::gaussian_bump(g, 1.0, 3.0, SVector::<f64, 8>::from_element(0.3));
        let phi_hat = e.forward8(&phi.values).unwrap();
        let streamed = pairing_scalars_stream(&e, &sampler, 16, &[phi_hat]).unwrap();
        let ens = Ensemble::generate(&e, &sampler, 16);
        let direct = ens.pairing_scalars(&phi).unwrap();
        for (a, b) in streamed[0].iter().zip(direct.iter()) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn moving_average_rejects_oversized_kernel() {
        let (_, e) = setup(8);
        let spec = MovingAverageSpec {
            kernel: KernelShape::Ball { radius: 2.5 },
            noise: NoiseKind::Gaussian,
        };
        assert!(MovingAverageSampler::new(&e, spec, 0).is_err());
    }

    #[test]
    fn free_evolution_of_sample_matches_field_path() {
        let (g, e) = setup(8);
        let q = CovarianceSpectrum::identity(g);
        let sampler = GaussianSampler::new(&q, 77).unwrap();
        let mut sp = sampler.sample_spectrum(&e, 0);
        let field = e.inverse8(&sp).unwrap();
        let lams = crate::algebra::LambdaSet::build();
        crate::free::evolve_spectrum8_in_place(&mut sp, &lams, 1.0, 3.0);
        let via_spectrum = e.inverse8(&sp).unwrap();
        let via_field = evolve_free_real(&e, &field, 1.0, 3.0).unwrap();
        let err = via_spectrum
            .data()
            .iter()
            .zip(via_field.data().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "spectrum/field evolution mismatch {err}");
    }
}
