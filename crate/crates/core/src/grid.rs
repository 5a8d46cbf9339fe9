//! Periodic cubic lattice: site/bin indexing, centered coordinates, and
//! wavevector bookkeeping.
//!
//! Sites are flat-indexed as `(ix·n + iy)·n + iz` with the z axis contiguous.
//! Real-space coordinates are centered, `x(i) = (i - n/2)·h ∈ [-L/2, L/2)`,
//! which is the chart used by `⟨x⟩` weights and potentials. Wavevectors use
//! the usual signed FFT binning `k(j) = 2π j'/L` with `j' ∈ (-n/2, n/2]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicGrid {
    n: usize,
    extent: f64,
}

impl PeriodicGrid {
    pub fn new(n: usize, extent: f64) -> Result<Self> {
        if n == 0 || n % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "grid points per axis must be a positive even integer, got {n}"
            )));
        }
        if !(extent > 0.0) || !extent.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "grid extent must be positive, got {extent}"
            )));
        }
        Ok(Self { n, extent })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn spacing(&self) -> f64 {
        self.extent / self.n as f64
    }

    pub fn sites(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn flat(&self, idx: [usize; 3]) -> usize {
        (idx[0] * self.n + idx[1]) * self.n + idx[2]
    }

    pub fn unflat(&self, flat: usize) -> [usize; 3] {
        let iz = flat % self.n;
        let iy = (flat / self.n) % self.n;
        let ix = flat / (self.n * self.n);
        [ix, iy, iz]
    }

    /// Signed FFT index in `(-n/2, n/2]`.
    fn signed(&self, i: usize) -> i64 {
        if i <= self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Wavevector of a bin, components in `(-π/h, π/h]`; bin 0 maps to 0.
    pub fn wavevector(&self, idx: [usize; 3]) -> [f64; 3] {
        let base = 2.0 * std::f64::consts::PI / self.extent;
        [
            base * self.signed(idx[0]) as f64,
            base * self.signed(idx[1]) as f64,
            base * self.signed(idx[2]) as f64,
        ]
    }

    /// Wavevector with Nyquist components replaced by zero.
    ///
    /// Bin conjugation fixes the `n/2` index, so the asymmetric choice
    /// `+π/h` would make odd-order symbols non-equivariant with complex
    /// conjugation; flow symbols therefore read band-edge modes with their
    /// cosine interpolation (derivative zero at lattice points). With this
    /// convention `k̃(conj bin) = -k̃(bin)` holds at every bin and the real
    /// and complex flows commute with the complex↔real identification.
    pub fn wavevector_symmetric(&self, idx: [usize; 3]) -> [f64; 3] {
        let base = 2.0 * std::f64::consts::PI / self.extent;
        let half = self.n / 2;
        let comp = |i: usize| {
            if i == half {
                0.0
            } else {
                base * self.signed(i) as f64
            }
        };
        [comp(idx[0]), comp(idx[1]), comp(idx[2])]
    }

    /// Centered site coordinate in `[-L/2, L/2)³`.
    pub fn coord(&self, idx: [usize; 3]) -> [f64; 3] {
        let h = self.spacing();
        let half = self.n as i64 / 2;
        [
            (idx[0] as i64 - half) as f64 * h,
            (idx[1] as i64 - half) as f64 * h,
            (idx[2] as i64 - half) as f64 * h,
        ]
    }

    /// Minimal-image offset for a lattice displacement index (bin 0 = zero
    /// offset), used by translation-invariant kernels.
    pub fn min_image_offset(&self, idx: [usize; 3]) -> [f64; 3] {
        let h = self.spacing();
        let n = self.n as i64;
        let wrap = |i: usize| -> f64 {
            let s = i as i64;
            let centered = if s < n / 2 { s } else { s - n };
            centered as f64 * h
        };
        [wrap(idx[0]), wrap(idx[1]), wrap(idx[2])]
    }

    pub fn coord_norm(&self, idx: [usize; 3]) -> f64 {
        let x = self.coord(idx);
        (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
    }

    pub fn offset_norm(&self, idx: [usize; 3]) -> f64 {
        let z = self.min_image_offset(idx);
        (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]).sqrt()
    }

    /// Negated bin index modulo the lattice, pairing `k` with `-k`.
    pub fn conjugate_bin(&self, idx: [usize; 3]) -> [usize; 3] {
        let neg = |i: usize| if i == 0 { 0 } else { self.n - i };
        [neg(idx[0]), neg(idx[1]), neg(idx[2])]
    }

    /// Bins that are their own conjugate (each component 0 or n/2); the
    /// spectrum of a real field is real there.
    pub fn is_self_conjugate(&self, idx: [usize; 3]) -> bool {
        idx.iter().all(|&i| i == 0 || i == self.n / 2)
    }

    /// `⟨x⟩^s = (1 + |x|²)^{s/2}` at a site, centered chart.
    pub fn japanese_bracket(&self, idx: [usize; 3], s: f64) -> f64 {
        let x = self.coord(idx);
        (1.0 + x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).powf(s / 2.0)
    }

    pub fn check_same(&self, other: &PeriodicGrid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(
                self.n,
                self.extent,
                other.n,
                other.extent,
            ));
        }
        Ok(())
    }
}
