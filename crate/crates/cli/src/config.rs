//! Experiment configuration: a flat TOML file with schema validation and
//! builders for the lattice objects it describes.

use std::path::Path;

use nalgebra::SVector;
use serde::{Deserialize, Serialize};

use diraclab_core::ensemble::{
    FieldSampler, GaussianSampler, KernelShape, MovingAverageSampler, MovingAverageSpec, NoiseKind,
};
use diraclab_core::potential::PotentialProfile;
use diraclab_core::{
    CovarianceSpectrum, PeriodicGrid, SpectralEngine, TestFunction,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridSection,
    pub model: ModelSection,
    pub sampler: SamplerSection,
    pub potential: PotentialSection,
    pub time: TimeSection,
    pub scattering: ScatteringSection,
    pub spectrum: SpectrumSection,
    pub decay: DecaySection,
    pub probes: Vec<ProbeSection>,
    pub tolerances: ToleranceSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    pub extent: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { n: 32, extent: 32.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub mass: f64,
    /// Weight offset δ in the phase-space norm order -5/2-δ.
    pub delta: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            mass: 1.0,
            delta: 0.25,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    /// "moving-average" or "gaussian-identity".
    pub kind: String,
    /// "rademacher" or "gaussian" (moving-average noise law).
    pub noise: String,
    pub kernel_radius: f64,
    /// Fraction of the kernel's squared mass concentrated at the center
    /// (0 gives the flat ball). Keeps the single-site kurtosis resolvable.
    pub kernel_spike: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            kind: "moving-average".into(),
            noise: "rademacher".into(),
            kernel_radius: 2.0,
            kernel_spike: 0.9,
            samples: 4000,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialSection {
    /// "zero", "gaussian-beta", "gaussian-identity", or "power-law".
    pub profile: String,
    pub amplitude: f64,
    pub width: f64,
    pub rho: f64,
    /// Power-law exponent (rejection-path profile only).
    pub exponent: f64,
    /// Ceiling on the relative boundary magnitude of the periodized profile.
    pub boundary_tol: f64,
}

impl Default for PotentialSection {
    fn default() -> Self {
        Self {
            profile: "gaussian-beta".into(),
            amplitude: 0.5,
            width: 2.0,
            rho: 6.0,
            exponent: 3.0,
            boundary_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    /// Strang step for perturbed evolution.
    pub dt: f64,
    /// Observation times for equilibrium tables.
    pub grid: Vec<f64>,
    /// Ensemble size for the uniform-bound diagnostic.
    pub bound_samples: usize,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self {
            dt: 0.1,
            grid: vec![0.0, 3.0, 6.0, 9.0, 12.0],
            bound_samples: 48,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScatteringSection {
    pub t_max: f64,
    pub dtau: f64,
    pub strang_dt: f64,
    pub quad_tol: f64,
    /// Remainder-table times.
    pub remainder_grid: Vec<f64>,
}

impl Default for ScatteringSection {
    fn default() -> Self {
        Self {
            t_max: 12.0,
            dtau: 0.2,
            strang_dt: 0.05,
            quad_tol: 0.02,
            remainder_grid: vec![2.0, 4.0, 6.0, 8.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    /// Eigen-solve grid (kept small; the solver is dense in Krylov storage).
    pub n: usize,
    pub extent: f64,
    /// Attractive-well profile for the bound-state study.
    pub profile: String,
    pub amplitude: f64,
    pub width: f64,
    pub gap_margin: f64,
    pub max_states: usize,
    pub seed: u64,
    /// Certification grid for the main potential (no-gap-state check).
    pub certify_n: usize,
    pub certify_extent: f64,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            n: 12,
            extent: 12.0,
            profile: "gaussian-identity".into(),
            amplitude: -1.0,
            width: 1.3,
            gap_margin: 1e-3,
            max_states: 8,
            seed: 0x5eed,
            certify_n: 16,
            certify_extent: 20.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecaySection {
    pub sigma: f64,
    pub t_grid: Vec<f64>,
    /// Width of the localized Gaussian packet.
    pub packet_width: f64,
}

impl Default for DecaySection {
    fn default() -> Self {
        Self {
            sigma: 3.0,
            t_grid: vec![2.0, 4.0, 6.0, 8.0, 10.0, 12.0],
            packet_width: 1.45,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSection {
    pub name: String,
    /// "site" or "gaussian".
    pub kind: String,
    pub width: f64,
    pub cutoff: f64,
    pub amplitude: f64,
    /// 8 real component weights (spin orientation of the probe).
    pub spin: Vec<f64>,
}

impl Default for ProbeSection {
    fn default() -> Self {
        Self {
            name: "site".into(),
            kind: "site".into(),
            width: 1.5,
            cutoff: 6.0,
            amplitude: 1.0,
            spin: vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        }
    }
}

fn default_probes() -> Vec<ProbeSection> {
    vec![
        ProbeSection {
            name: "site-e1".into(),
            kind: "site".into(),
            amplitude: 1.0,
            spin: vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            ..ProbeSection::default()
        },
        ProbeSection {
            name: "gauss-e1".into(),
            kind: "gaussian".into(),
            width: 1.5,
            cutoff: 6.0,
            amplitude: 0.12,
            spin: vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        },
        ProbeSection {
            name: "gauss-mixed".into(),
            kind: "gaussian".into(),
            width: 2.0,
            cutoff: 7.0,
            amplitude: 0.08,
            spin: vec![0.5, 0.0, -0.5, 0.0, 0.0, 0.7, 0.0, 0.1],
        },
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceSection {
    /// Extra slack past 3/√N in the free-equilibrium deviation gate.
    pub char_slack_free: f64,
    /// Extra slack past 3/√N in the perturbed deviation gate.
    pub char_slack_perturbed: f64,
    /// Required κ₄ reduction factor from t=0 to the final time.
    pub kappa4_reduction: f64,
    /// Acceptance band for the dispersive-decay slope.
    pub decay_slope_band: [f64; 2],
    /// Ceiling on the integrand-norm log-log slope.
    pub integrand_slope_max: f64,
    /// Ceiling on the remainder-norm log-log slope.
    pub remainder_slope_max: f64,
    /// Ceiling on the uniform-bound table values.
    pub bound_cap: f64,
}

impl Default for ToleranceSection {
    fn default() -> Self {
        Self {
            char_slack_free: 0.02,
            char_slack_perturbed: 0.05,
            kappa4_reduction: 5.0,
            decay_slope_band: [-1.8, -1.2],
            integrand_slope_max: -1.2,
            remainder_slope_max: -0.35,
            bound_cap: 8.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            grid: GridSection::default(),
            model: ModelSection::default(),
            sampler: SamplerSection::default(),
            potential: PotentialSection::default(),
            time: TimeSection::default(),
            scattering: ScatteringSection::default(),
            spectrum: SpectrumSection::default(),
            decay: DecaySection::default(),
            probes: default_probes(),
            tolerances: ToleranceSection::default(),
            output: OutputSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| format!("config parse error: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Consistency rules tying the sections together.
    pub fn validate(&self) -> Result<(), String> {
        let l = self.grid.extent;
        if self.grid.n == 0 || self.grid.n % 2 != 0 {
            return Err(format!("grid.n must be positive and even, got {}", self.grid.n));
        }
        if !(l > 0.0) {
            return Err(format!("grid.extent must be positive, got {l}"));
        }
        if !(self.model.mass > 0.0) {
            return Err(format!("model.mass must be positive, got {}", self.model.mass));
        }
        if !(self.model.delta > 0.0) {
            return Err("model.delta must be positive".into());
        }
        if self.sampler.kernel_radius >= 0.25 * l {
            return Err(format!(
                "sampler.kernel_radius {} must stay below extent/4 = {}",
                self.sampler.kernel_radius,
                0.25 * l
            ));
        }
        if self.sampler.samples < 2 {
            return Err("sampler.samples must be at least 2".into());
        }
        if !(0.0..1.0).contains(&self.sampler.kernel_spike) {
            return Err(format!(
                "sampler.kernel_spike must lie in [0, 1), got {}",
                self.sampler.kernel_spike
            ));
        }
        match self.sampler.kind.as_str() {
            "moving-average" | "gaussian-identity" => {}
            other => return Err(format!("unknown sampler.kind '{other}'")),
        }
        match self.sampler.noise.as_str() {
            "rademacher" | "gaussian" => {}
            other => return Err(format!("unknown sampler.noise '{other}'")),
        }
        if !(self.potential.rho > 5.0) {
            return Err(format!(
                "potential.rho must exceed 5, got {}",
                self.potential.rho
            ));
        }
        if 5.0 + self.model.delta >= self.potential.rho {
            return Err(format!(
                "need 5 + delta < rho: 5 + {} vs {}",
                self.model.delta, self.potential.rho
            ));
        }
        if self.scattering.t_max >= 0.5 * l {
            return Err(format!(
                "scattering.t_max {} must stay below extent/2 = {}",
                self.scattering.t_max,
                0.5 * l
            ));
        }
        for &t in self.time.grid.iter().chain(&self.decay.t_grid).chain(&self.scattering.remainder_grid) {
            if t < 0.0 {
                return Err(format!("observation time {t} is negative"));
            }
            if t >= 0.5 * l {
                return Err(format!(
                    "observation time {t} exceeds the pre-recurrence window {}",
                    0.5 * l
                ));
            }
        }
        if !(self.decay.sigma > 2.5) {
            return Err(format!(
                "decay.sigma must exceed 5/2, got {}",
                self.decay.sigma
            ));
        }
        if self.probes.is_empty() {
            return Err("at least one probe is required".into());
        }
        for p in &self.probes {
            if p.spin.len() != 8 {
                return Err(format!("probe '{}' must declare 8 spin weights", p.name));
            }
            match p.kind.as_str() {
                "site" | "gaussian" => {}
                other => return Err(format!("unknown probe kind '{other}'")),
            }
            if p.kind == "gaussian" && p.cutoff >= 0.5 * l {
                return Err(format!(
                    "probe '{}' cutoff {} exceeds extent/2",
                    p.name, p.cutoff
                ));
            }
        }
        if !(self.time.dt > 0.0) || !(self.scattering.strang_dt > 0.0) {
            return Err("time steps must be positive".into());
        }
        let ratio = 0.5 * self.scattering.dtau / self.scattering.strang_dt;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 0.5 {
            return Err(format!(
                "scattering.strang_dt {} must divide dtau/2 = {}",
                self.scattering.strang_dt,
                0.5 * self.scattering.dtau
            ));
        }
        if self.spectrum.n == 0 || self.spectrum.n % 2 != 0 || self.spectrum.n > 16 {
            return Err(format!(
                "spectrum.n must be even and at most 16, got {}",
                self.spectrum.n
            ));
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<PeriodicGrid, String> {
        PeriodicGrid::new(self.grid.n, self.grid.extent).map_err(|e| e.to_string())
    }

    pub fn potential_profile(&self) -> Result<PotentialProfile, String> {
        Ok(match self.potential.profile.as_str() {
            "zero" => PotentialProfile::Zero,
            "gaussian-beta" => PotentialProfile::GaussianBeta {
                amplitude: self.potential.amplitude,
                width: self.potential.width,
            },
            "gaussian-identity" => PotentialProfile::GaussianIdentity {
                amplitude: self.potential.amplitude,
                width: self.potential.width,
            },
            "power-law" => PotentialProfile::PowerLawIdentity {
                amplitude: self.potential.amplitude,
                exponent: self.potential.exponent,
            },
            other => return Err(format!("unknown potential profile '{other}'")),
        })
    }

    pub fn spectrum_profile(&self) -> Result<PotentialProfile, String> {
        Ok(match self.spectrum.profile.as_str() {
            "zero" => PotentialProfile::Zero,
            "gaussian-beta" => PotentialProfile::GaussianBeta {
                amplitude: self.spectrum.amplitude,
                width: self.spectrum.width,
            },
            "gaussian-identity" => PotentialProfile::GaussianIdentity {
                amplitude: self.spectrum.amplitude,
                width: self.spectrum.width,
            },
            other => return Err(format!("unknown spectrum profile '{other}'")),
        })
    }

    pub fn build_sampler(
        &self,
        engine: &SpectralEngine,
    ) -> Result<Box<dyn FieldSampler>, String> {
        match self.sampler.kind.as_str() {
            "gaussian-identity" => {
                let q0 = CovarianceSpectrum::identity(engine.grid());
                Ok(Box::new(
                    GaussianSampler::new(&q0, self.sampler.seed).map_err(|e| e.to_string())?,
                ))
            }
            "moving-average" => {
                let noise = if self.sampler.noise == "gaussian" {
                    NoiseKind::Gaussian
                } else {
                    NoiseKind::Rademacher
                };
                let kernel = if self.sampler.kernel_radius == 0.0 {
                    KernelShape::SingleSite
                } else if self.sampler.kernel_spike > 0.0 {
                    KernelShape::SpikedBall {
                        radius: self.sampler.kernel_radius,
                        spike: self.sampler.kernel_spike,
                    }
                } else {
                    KernelShape::Ball {
                        radius: self.sampler.kernel_radius,
                    }
                };
                let spec = MovingAverageSpec { kernel, noise };
                Ok(Box::new(
                    MovingAverageSampler::new(engine, spec, self.sampler.seed)
                        .map_err(|e| e.to_string())?,
                ))
            }
            other => Err(format!("unknown sampler kind '{other}'")),
        }
    }

    pub fn build_probes(&self, grid: PeriodicGrid) -> Vec<(String, TestFunction)> {
        self.probes
            .iter()
            .map(|p| {
                let spin =
                    SVector::<f64, 8>::from_iterator(p.spin.iter().cloned()) * p.amplitude;
                let tf = match p.kind.as_str() {
                    "site" => TestFunction::site_bump(grid, spin),
                    _ => TestFunction::gaussian_bump(grid, p.width, p.cutoff, spin),
                };
                (p.name.clone(), tf)
            })
            .collect()
    }

    /// Phase-space weight order `-5/2 - δ`.
    pub fn phase_space_sigma(&self) -> f64 {
        2.5 + self.model.delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
    }

    #[test]
    fn inconsistent_configs_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.sampler.kernel_radius = 10.0; // ≥ L/4
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.scattering.t_max = 20.0; // ≥ L/2
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.potential.rho = 4.0;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.model.delta = 1.5; // 5 + δ ≥ ρ
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.decay.sigma = 2.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn toml_roundtrip() {
        let cfg = ExperimentConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        back.validate().unwrap();
        assert_eq!(back.grid.n, cfg.grid.n);
        assert_eq!(back.probes.len(), cfg.probes.len());
    }
}
