//! Spinor fields on the lattice and the complex ↔ real identification.
//!
//! A [`ComplexSpinorField`] stores 4 complex components per site, a
//! [`RealSpinorField`] stores 8 real components; [`realify`] maps
//! `ψ ↦ (Re ψ₁..₄, Im ψ₁..₄)` per site. Values are site-major,
//! component-minor. Norms and pairings are plain per-site sums, so the
//! real pairing `⟨ψ, φ⟩` equals the real part of the hermitian product.

use nalgebra::{SVector, Vector4};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::PeriodicGrid;

pub type CVec4 = Vector4<Complex64>;
pub type RVec8 = SVector<f64, 8>;

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpinorField {
    grid: PeriodicGrid,
    data: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealSpinorField {
    grid: PeriodicGrid,
    data: Vec<f64>,
}

impl ComplexSpinorField {
    pub fn zeros(grid: PeriodicGrid) -> Self {
        Self {
            grid,
            data: vec![Complex64::new(0.0, 0.0); 4 * grid.sites()],
        }
    }

    pub fn from_fn(grid: PeriodicGrid, mut f: impl FnMut([usize; 3]) -> CVec4) -> Self {
        let mut out = Self::zeros(grid);
        for site in 0..grid.sites() {
            let v = f(grid.unflat(site));
            out.data[4 * site..4 * site + 4].copy_from_slice(v.as_slice());
        }
        out
    }

    pub fn from_data(grid: PeriodicGrid, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != 4 * grid.sites() {
            return Err(Error::Format(format!(
                "complex field needs {} values, got {}",
                4 * grid.sites(),
                data.len()
            )));
        }
        Ok(Self { grid, data })
    }

    /// Random field with i.i.d. standard-normal real and imaginary parts.
    pub fn random(grid: PeriodicGrid, rng: &mut impl Rng) -> Self {
        let mut out = Self::zeros(grid);
        for z in out.data.iter_mut() {
            *z = Complex64::new(
                rng.sample(rand_distr::StandardNormal),
                rng.sample(rand_distr::StandardNormal),
            );
        }
        out
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn site(&self, flat: usize) -> CVec4 {
        CVec4::from_column_slice(&self.data[4 * flat..4 * flat + 4])
    }

    pub fn set_site(&mut self, flat: usize, v: CVec4) {
        self.data[4 * flat..4 * flat + 4].copy_from_slice(v.as_slice());
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scale(&mut self, a: Complex64) {
        for z in self.data.iter_mut() {
            *z *= a;
        }
    }

    pub fn axpy(&mut self, a: Complex64, other: &Self) {
        debug_assert_eq!(self.grid, other.grid);
        for (z, w) in self.data.iter_mut().zip(other.data.iter()) {
            *z += a * w;
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self { grid: self.grid, data })
    }
}

impl RealSpinorField {
    pub fn zeros(grid: PeriodicGrid) -> Self {
        Self {
            grid,
            data: vec![0.0; 8 * grid.sites()],
        }
    }

    pub fn from_fn(grid: PeriodicGrid, mut f: impl FnMut([usize; 3]) -> RVec8) -> Self {
        let mut out = Self::zeros(grid);
        for site in 0..grid.sites() {
            let v = f(grid.unflat(site));
            out.data[8 * site..8 * site + 8].copy_from_slice(v.as_slice());
        }
        out
    }

    pub fn from_data(grid: PeriodicGrid, data: Vec<f64>) -> Result<Self> {
        if data.len() != 8 * grid.sites() {
            return Err(Error::Format(format!(
                "real field needs {} values, got {}",
                8 * grid.sites(),
                data.len()
            )));
        }
        Ok(Self { grid, data })
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn site(&self, flat: usize) -> RVec8 {
        RVec8::from_column_slice(&self.data[8 * flat..8 * flat + 8])
    }

    pub fn set_site(&mut self, flat: usize, v: RVec8) {
        self.data[8 * flat..8 * flat + 8].copy_from_slice(v.as_slice());
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }
}

/// `ψ ↦ (Re ψ, Im ψ)` per site.
pub fn realify(psi: &ComplexSpinorField) -> RealSpinorField {
    let grid = psi.grid();
    let mut out = RealSpinorField::zeros(grid);
    for site in 0..grid.sites() {
        for comp in 0..4 {
            let z = psi.data[4 * site + comp];
            out.data[8 * site + comp] = z.re;
            out.data[8 * site + comp + 4] = z.im;
        }
    }
    out
}

/// Inverse of [`realify`]; exact round trip.
pub fn complexify(r: &RealSpinorField) -> ComplexSpinorField {
    let grid = r.grid();
    let mut out = ComplexSpinorField::zeros(grid);
    for site in 0..grid.sites() {
        for comp in 0..4 {
            out.data[4 * site + comp] =
                Complex64::new(r.data[8 * site + comp], r.data[8 * site + comp + 4]);
        }
    }
    out
}

/// Hermitian inner product `Σ_x ψ(x)†φ(x)`.
pub fn hermitian_dot(psi: &ComplexSpinorField, phi: &ComplexSpinorField) -> Result<Complex64> {
    psi.grid.check_same(&phi.grid)?;
    Ok(psi
        .data
        .iter()
        .zip(phi.data.iter())
        .map(|(a, b)| a.conj() * b)
        .sum())
}

/// Real pairing `⟨ψ, φ⟩ = (realify ψ, realify φ) = Re Σ ψ†φ`.
pub fn real_pairing(psi: &ComplexSpinorField, phi: &ComplexSpinorField) -> Result<f64> {
    Ok(hermitian_dot(psi, phi)?.re)
}

/// Plain dot product of two real fields.
pub fn real_dot(a: &RealSpinorField, b: &RealSpinorField) -> Result<f64> {
    a.grid.check_same(&b.grid)?;
    Ok(a.data.iter().zip(b.data.iter()).map(|(x, y)| x * y).sum())
}

/// A compactly supported real test field, the lattice stand-in for smooth
/// compactly supported probes. Values are zero outside the declared ball.
#[derive(Debug, Clone)]
pub struct TestFunction {
    pub values: RealSpinorField,
    pub support_radius: f64,
}

impl TestFunction {
    /// Single-site bump at the center of the torus with the given 8 real
    /// component weights.
    pub fn site_bump(grid: PeriodicGrid, weights: RVec8) -> Self {
        let mut values = RealSpinorField::zeros(grid);
        let center = grid.flat([grid.n() / 2, grid.n() / 2, grid.n() / 2]);
        values.set_site(center, weights);
        Self {
            values,
            support_radius: 0.5 * grid.spacing(),
        }
    }

    /// Gaussian bump of the given width, truncated to zero outside
    /// `|x| ≤ cutoff`, with a fixed spin orientation.
    pub fn gaussian_bump(grid: PeriodicGrid, width: f64, cutoff: f64, spin: RVec8) -> Self {
        let values = RealSpinorField::from_fn(grid, |idx| {
            let r = grid.coord_norm(idx);
            if r > cutoff {
                RVec8::zeros()
            } else {
                spin * (-r * r / (2.0 * width * width)).exp()
            }
        });
        Self {
            values,
            support_radius: cutoff,
        }
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.values.grid()
    }

    /// Largest |value| outside the declared support ball (should be 0).
    pub fn support_defect(&self) -> f64 {
        let grid = self.values.grid();
        let mut worst: f64 = 0.0;
        for site in 0..grid.sites() {
            if grid.coord_norm(grid.unflat(site)) > self.support_radius {
                for comp in 0..8 {
                    worst = worst.max(self.values.data()[8 * site + comp].abs());
                }
            }
        }
        worst
    }

    /// The complex spinor field this probe pairs against.
    pub fn as_complex(&self) -> ComplexSpinorField {
        complexify(&self.values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn grid() -> PeriodicGrid {
        PeriodicGrid::new(4, 4.0).unwrap()
    }

    #[test]
    fn realify_definition_single_site() {
        let g = grid();
        let mut psi = ComplexSpinorField::zeros(g);
        psi.set_site(
            g.flat([1, 2, 3]),
            CVec4::new(
                Complex64::new(0.0, 1.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
            ),
        );
        let r = realify(&psi);
        let v = r.site(g.flat([1, 2, 3]));
        let want = RVec8::from_column_slice(&[0., 0., 0., 0., 1., 0., 0., 0.]);
        assert_eq!(v, want);
        assert_eq!(r.norm_sq(), 1.0);
    }

    #[test]
    fn complexify_realify_roundtrip_exact() {
        let g = grid();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let psi = ComplexSpinorField::random(g, &mut rng);
        let back = complexify(&realify(&psi));
        assert_eq!(psi, back);
    }

    #[test]
    fn pairing_matches_charge() {
        let g = grid();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let psi = ComplexSpinorField::random(g, &mut rng);
        let via_real = real_dot(&realify(&psi), &realify(&psi)).unwrap();
        assert!((via_real - psi.norm_sq()).abs() <= 1e-12 * psi.norm_sq());
        // the real pairing is the real part of the hermitian product
        let phi = ComplexSpinorField::random(g, &mut rng);
        let lhs = real_pairing(&psi, &phi).unwrap();
        let rhs = real_dot(&realify(&psi), &realify(&phi)).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn grid_mismatch_rejected() {
        let a = ComplexSpinorField::zeros(grid());
        let b = ComplexSpinorField::zeros(PeriodicGrid::new(6, 6.0).unwrap());
        assert!(hermitian_dot(&a, &b).is_err());
    }

    #[test]
    fn test_function_support() {
        let g = PeriodicGrid::new(16, 16.0).unwrap();
        let tf = TestFunction::gaussian_bump(g, 1.0, 4.0, RVec8::from_element(1.0));
        assert_eq!(tf.support_defect(), 0.0);
        let site = TestFunction::site_bump(g, RVec8::from_element(0.5));
        assert_eq!(site.support_defect(), 0.0);
        assert!((site.values.norm_sq() - 8.0 * 0.25).abs() < 1e-14);
    }
}
