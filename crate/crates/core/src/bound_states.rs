//! Gap eigenpairs of the perturbed generator, spectral projections, and
//! decay diagnostics.
//!
//! `H = H₀ + V` is hermitian; its continuous spectrum on the lattice stays
//! outside the mass gap `(-m, m)` while a localized potential can create
//! finitely many eigenvalues inside. The solver folds the problem: gap
//! eigenvalues are exactly the smallest eigenvalues of `H²` below `m²`, found
//! by Lanczos with full reorthogonalization. Each converged `H²` Ritz vector
//! spans, together with its image under `H`, an invariant plane on which a
//! 2x2 Rayleigh-Ritz step splits the `±√θ` branches; explicit residuals
//! `‖Hζ - ωζ‖` gate acceptance, and found states are deflated before the
//! next round. Eigenvalues within `gap_margin` of `±m` are refused as
//! threshold risks unless forced.

use nalgebra::{DMatrix, Vector4};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::algebra::{dirac_symbol, DiracMatrixSet};
use crate::error::{Error, Result};
use crate::field::{hermitian_dot, ComplexSpinorField};
use crate::grid::PeriodicGrid;
use crate::potential::LatticePotential;
use crate::spectral::{SpectralEngine, WeightedNormSpec};
use crate::stats::{linear_fit, LineFit};

/// Options for the gap eigensolver.
#[derive(Debug, Clone)]
pub struct EigenOptions {
    /// Cap on extracted states.
    pub max_states: usize,
    /// Lanczos iterations per deflation round.
    pub max_iter: usize,
    /// Acceptance tolerance on the explicit residual `‖Hζ - ωζ‖`.
    pub residual_tol: f64,
    /// Minimum distance of accepted eigenvalues from `±m`.
    pub gap_margin: f64,
    /// Starting-vector stream seed.
    pub seed: u64,
    /// Accept near-threshold eigenvalues instead of refusing.
    pub force_near_threshold: bool,
    /// Largest grid edge the solver agrees to handle.
    pub max_grid_n: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            max_states: 8,
            max_iter: 320,
            residual_tol: 1e-8,
            gap_margin: 1e-3,
            seed: 0x5eed,
            force_near_threshold: false,
            max_grid_n: 16,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundState {
    pub omega: f64,
    pub field: ComplexSpinorField,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    grid: PeriodicGrid,
    pub bound_states: Vec<BoundState>,
    pub gap_margin: f64,
}

impl SpectralDecomposition {
    pub fn empty(grid: PeriodicGrid, gap_margin: f64) -> Self {
        Self {
            grid,
            bound_states: Vec::new(),
            gap_margin,
        }
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    /// Smallest distance of any eigenvalue from the thresholds `±m`;
    /// `None` without bound states.
    pub fn threshold_distance(&self, m: f64) -> Option<f64> {
        self.bound_states
            .iter()
            .map(|b| (m - b.omega.abs()).abs())
            .fold(None, |acc, d| Some(acc.map_or(d, |a: f64| a.min(d))))
    }

    /// Largest pairwise orthonormality defect of the stored eigenfields.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.bound_states.iter().enumerate() {
            for (j, b) in self.bound_states.iter().enumerate() {
                let g = hermitian_dot(&a.field, &b.field).unwrap();
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - Complex64::new(want, 0.0)).norm());
            }
        }
        worst
    }
}

/// `Hψ = (H₀ + V)ψ` with the exact spectral free part.
pub fn apply_hamiltonian(
    engine: &SpectralEngine,
    potential: &LatticePotential,
    m: f64,
    psi: &ComplexSpinorField,
) -> Result<ComplexSpinorField> {
    let dirac = DiracMatrixSet::build(m)?;
    let grid = engine.grid();
    grid.check_same(&psi.grid())?;
    let mut sp = engine.forward4(psi)?;
    sp.data
        .par_chunks_mut(4)
        .enumerate()
        .for_each(|(bin, chunk)| {
            let k = grid.wavevector_symmetric(grid.unflat(bin));
            let v = Vector4::from_column_slice(chunk);
            let out = dirac_symbol(&dirac, k) * v;
            chunk.copy_from_slice(out.as_slice());
        });
    let mut out = engine.inverse4(&sp)?;
    if !potential.is_zero() {
        let vpsi = potential.apply(psi)?;
        out.axpy(Complex64::new(1.0, 0.0), &vpsi);
    }
    Ok(out)
}

// flat-vector helpers for the Krylov loop

fn vdot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn vnorm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn vaxpy(y: &mut [Complex64], alpha: Complex64, x: &[Complex64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn vscale(y: &mut [Complex64], alpha: f64) {
    for yi in y.iter_mut() {
        *yi *= alpha;
    }
}

fn project_out(v: &mut [Complex64], basis: &[Vec<Complex64>]) {
    for b in basis {
        let c = vdot(b, v);
        vaxpy(v, -c, b);
    }
}

struct LanczosResult {
    theta: f64,
    vector: Vec<Complex64>,
    converged: bool,
}

/// Smallest Ritz pair of a hermitian PSD operator restricted to the
/// orthogonal complement of `deflate`.
fn lanczos_smallest(
    apply: &mut dyn FnMut(&[Complex64]) -> Result<Vec<Complex64>>,
    dim: usize,
    start: Vec<Complex64>,
    deflate: &[Vec<Complex64>],
    max_iter: usize,
    rel_tol: f64,
) -> Result<LanczosResult> {
    let mut v0 = start;
    project_out(&mut v0, deflate);
    let n0 = vnorm(&v0);
    if n0 < 1e-12 {
        return Err(Error::NoConvergence(
            "start vector vanishes after deflation".into(),
        ));
    }
    vscale(&mut v0, 1.0 / n0);
    let mut basis: Vec<Vec<Complex64>> = vec![v0];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut scale_est: f64 = 1.0;

    let max_iter = max_iter.min(dim);
    for j in 0..max_iter {
        let mut w = apply(&basis[j])?;
        project_out(&mut w, deflate);
        let alpha = vdot(&basis[j], &w).re;
        alphas.push(alpha);
        scale_est = scale_est.max(alpha.abs());
        vaxpy(&mut w, Complex64::new(-alpha, 0.0), &basis[j]);
        if j > 0 {
            vaxpy(&mut w, Complex64::new(-betas[j - 1], 0.0), &basis[j - 1]);
        }
        // full reorthogonalization, twice
        project_out(&mut w, &basis);
        project_out(&mut w, &basis);
        let beta = vnorm(&w);
        if beta < 1e-13 * scale_est.max(1.0) {
            // invariant subspace exhausted
            break;
        }
        betas.push(beta);
        vscale(&mut w, 1.0 / beta);
        basis.push(w);

        let check_now = (j + 1) % 10 == 0 || j + 1 == max_iter;
        if check_now && j >= 2 {
            let (theta, s) = tridiag_smallest(&alphas, &betas[..j]);
            let resid_bound = betas[j] * s.last().copied().unwrap_or(1.0).abs();
            if resid_bound < rel_tol * scale_est.max(1.0) {
                let vector = assemble(&basis[..=j], &s, dim);
                return Ok(LanczosResult {
                    theta,
                    vector,
                    converged: true,
                });
            }
        }
    }
    let steps = alphas.len();
    if steps == 0 {
        return Err(Error::NoConvergence("no Lanczos steps taken".into()));
    }
    let (theta, s) = tridiag_smallest(&alphas, &betas[..steps.saturating_sub(1).min(betas.len())]);
    let vector = assemble(&basis[..steps], &s, dim);
    Ok(LanczosResult {
        theta,
        vector,
        converged: false,
    })
}

/// Smallest eigenpair of the symmetric tridiagonal matrix (α, β).
fn tridiag_smallest(alphas: &[f64], betas: &[f64]) -> (f64, Vec<f64>) {
    let n = alphas.len();
    let mut t = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        t[(i, i)] = alphas[i];
        if i + 1 < n {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = nalgebra::SymmetricEigen::new(t);
    let mut best = 0;
    for i in 1..n {
        if eig.eigenvalues[i] < eig.eigenvalues[best] {
            best = i;
        }
    }
    (
        eig.eigenvalues[best],
        eig.eigenvectors.column(best).iter().cloned().collect(),
    )
}

fn assemble(basis: &[Vec<Complex64>], coeffs: &[f64], dim: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); dim];
    for (b, &c) in basis.iter().zip(coeffs) {
        vaxpy(&mut out, Complex64::new(c, 0.0), b);
    }
    let n = vnorm(&out);
    vscale(&mut out, 1.0 / n);
    out
}

/// Finds gap eigenpairs of `H₀ + V` inside `(-m, m)`.
///
/// An empty list is a valid outcome (no bound states). Eigenvalues within
/// `gap_margin` of a threshold abort with [`Error::NearThreshold`] unless
/// `force_near_threshold` is set.
pub fn spectral_decompose(
    engine: &SpectralEngine,
    potential: &LatticePotential,
    m: f64,
    opts: &EigenOptions,
) -> Result<SpectralDecomposition> {
    let grid = engine.grid();
    grid.check_same(&potential.grid())?;
    if grid.n() > opts.max_grid_n {
        return Err(Error::InvalidParameter(format!(
            "eigensolver limited to n ≤ {} per axis (grid has {}); raise max_grid_n to override",
            opts.max_grid_n,
            grid.n()
        )));
    }
    let dim = 4 * grid.sites();
    let edge = (m - opts.gap_margin).powi(2);

    let mut apply_h2 = |v: &[Complex64]| -> Result<Vec<Complex64>> {
        let f = ComplexSpinorField::from_data(grid, v.to_vec())?;
        let hf = apply_hamiltonian(engine, potential, m, &f)?;
        let h2f = apply_hamiltonian(engine, potential, m, &hf)?;
        Ok(h2f.data().to_vec())
    };

    let mut found: Vec<(f64, Vec<Complex64>)> = Vec::new();
    let mut round = 0u64;
    while found.len() < opts.max_states {
        let mut rng = crate::stats::sample_rng(opts.seed, round);
        round += 1;
        let start: Vec<Complex64> = ComplexSpinorField::random(grid, &mut rng)
            .data()
            .to_vec();
        let deflate: Vec<Vec<Complex64>> = found.iter().map(|(_, v)| v.clone()).collect();
        let res = lanczos_smallest(&mut apply_h2, dim, start, &deflate, opts.max_iter, 1e-10)?;
        if res.theta >= edge {
            break; // reached the folded continuum edge: no further gap states
        }
        if !res.converged {
            return Err(Error::NoConvergence(format!(
                "Lanczos did not converge below the gap edge (θ = {:.6})",
                res.theta
            )));
        }
        // split the ±√θ branches on the invariant plane span{y, Hy}
        let y = ComplexSpinorField::from_data(grid, res.vector)?;
        let hy = apply_hamiltonian(engine, potential, m, &y)?;
        let omega_est = hermitian_dot(&y, &hy)?.re;
        let mut r = hy.clone();
        r.axpy(Complex64::new(-omega_est, 0.0), &y);
        let rnorm = r.norm();
        let mut candidates: Vec<(f64, ComplexSpinorField)> = Vec::new();
        if rnorm < 1e-6 {
            candidates.push((omega_est, y));
        } else {
            r.scale(Complex64::new(1.0 / rnorm, 0.0));
            let hu = apply_hamiltonian(engine, potential, m, &r)?;
            let h11 = omega_est;
            let h12 = hermitian_dot(&y, &hu)?;
            let h22 = hermitian_dot(&r, &hu)?.re;
            let small = nalgebra::Matrix2::new(
                Complex64::new(h11, 0.0),
                h12,
                h12.conj(),
                Complex64::new(h22, 0.0),
            );
            let eig = nalgebra::SymmetricEigen::new(small);
            for c in 0..2 {
                let coeff = eig.eigenvectors.column(c);
                let mut zeta = y.clone();
                zeta.scale(coeff[0]);
                zeta.axpy(coeff[1], &r);
                let znorm = zeta.norm();
                zeta.scale(Complex64::new(1.0 / znorm, 0.0));
                candidates.push((eig.eigenvalues[c], zeta));
            }
        }
        let before = found.len();
        for (omega, zeta) in candidates {
            if omega.abs() >= m {
                continue; // branch outside the gap (folded continuum partner)
            }
            let hz = apply_hamiltonian(engine, potential, m, &zeta)?;
            let mut resid = hz;
            resid.axpy(Complex64::new(-omega, 0.0), &zeta);
            let residual = resid.norm();
            if residual > opts.residual_tol {
                return Err(Error::NoConvergence(format!(
                    "eigenpair residual {residual:.3e} exceeds {:.1e} at ω = {omega:.6}",
                    opts.residual_tol
                )));
            }
            if m - omega.abs() < opts.gap_margin && !opts.force_near_threshold {
                return Err(Error::NearThreshold {
                    omega,
                    margin: opts.gap_margin,
                    mass: m,
                });
            }
            // orthonormalize against previously accepted states
            let mut vec = zeta.data().to_vec();
            let deflate: Vec<Vec<Complex64>> = found.iter().map(|(_, v)| v.clone()).collect();
            project_out(&mut vec, &deflate);
            let n = vnorm(&vec);
            if n < 0.5 {
                continue; // duplicate of an already-found state
            }
            vscale(&mut vec, 1.0 / n);
            found.push((omega, vec));
            if found.len() >= opts.max_states {
                break;
            }
        }
        if found.len() == before {
            break; // round produced nothing new
        }
    }

    let bound_states = found
        .into_iter()
        .map(|(omega, vec)| -> Result<BoundState> {
            let field = ComplexSpinorField::from_data(grid, vec)?;
            let hz = apply_hamiltonian(engine, potential, m, &field)?;
            let mut resid = hz;
            resid.axpy(Complex64::new(-omega, 0.0), &field);
            Ok(BoundState {
                omega,
                field,
                residual: resid.norm(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut decomp = SpectralDecomposition {
        grid,
        bound_states,
        gap_margin: opts.gap_margin,
    };
    decomp
        .bound_states
        .sort_by(|a, b| a.omega.partial_cmp(&b.omega).unwrap());
    Ok(decomp)
}

/// `P_d ψ = Σ_j ζ_j ⟨ζ_j, ψ⟩`.
pub fn project_discrete(
    decomp: &SpectralDecomposition,
    psi: &ComplexSpinorField,
) -> Result<ComplexSpinorField> {
    decomp.grid.check_same(&psi.grid())?;
    let mut out = ComplexSpinorField::zeros(decomp.grid);
    for b in &decomp.bound_states {
        let c = hermitian_dot(&b.field, psi)?;
        out.axpy(c, &b.field);
    }
    Ok(out)
}

/// `P_c = 1 - P_d`; the identity when no bound states exist.
pub fn project_continuous(
    decomp: &SpectralDecomposition,
    psi: &ComplexSpinorField,
) -> Result<ComplexSpinorField> {
    let pd = project_discrete(decomp, psi)?;
    let mut out = psi.clone();
    out.axpy(Complex64::new(-1.0, 0.0), &pd);
    Ok(out)
}

/// Free-resolvent identity for an eigenpair: for `Hζ = ωζ` with `|ω| < m`,
/// `ζ̂(k) = (α·k + βm + ω)(-V̂ζ)(k)/(|k|² + m² - ω²)`. Returns the relative
/// defect of this identity (small only for genuine eigenpairs).
pub fn resolvent_check(
    engine: &SpectralEngine,
    potential: &LatticePotential,
    m: f64,
    omega: f64,
    zeta: &ComplexSpinorField,
) -> Result<f64> {
    if omega.abs() >= m {
        return Err(Error::InvalidParameter(format!(
            "resolvent identity needs |ω| < m, got ω = {omega}, m = {m}"
        )));
    }
    let dirac = DiracMatrixSet::build(m)?;
    let grid = engine.grid();
    let f = {
        let mut vz = potential.apply(zeta)?;
        vz.scale(Complex64::new(-1.0, 0.0));
        vz
    };
    let f_hat = engine.forward4(&f)?;
    let z_hat = engine.forward4(zeta)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for bin in 0..grid.sites() {
        let k = grid.wavevector_symmetric(grid.unflat(bin));
        let denom = k[0] * k[0] + k[1] * k[1] + k[2] * k[2] + m * m - omega * omega;
        let sym = dirac_symbol(&dirac, k) + nalgebra::Matrix4::identity() * Complex64::new(omega, 0.0);
        let pred = sym * f_hat.bin(bin) / Complex64::new(denom, 0.0);
        let diff = z_hat.bin(bin) - pred;
        num += diff.norm_squared();
        den += z_hat.bin(bin).norm_squared();
    }
    Ok((num / den).sqrt())
}

/// Exponential-decay fit of `log(shell max |ζ|)` against radius over the
/// torus bulk; the decay rate is `-slope`.
pub fn exponential_decay_fit(zeta: &ComplexSpinorField) -> Option<LineFit> {
    let grid = zeta.grid();
    let h = grid.spacing();
    let r_max = 0.45 * grid.extent();
    let shells = (r_max / h) as usize;
    let mut shell_max = vec![0.0f64; shells];
    for site in 0..grid.sites() {
        let r = grid.coord_norm(grid.unflat(site));
        let shell = (r / h) as usize;
        if shell < shells {
            let amp = zeta.site(site).norm();
            shell_max[shell] = shell_max[shell].max(amp);
        }
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &v) in shell_max.iter().enumerate().skip(1) {
        if v > 1e-14 {
            xs.push((i as f64 + 0.5) * h);
            ys.push(v.ln());
        }
    }
    if xs.len() < 3 {
        return None;
    }
    Some(linear_fit(&xs, &ys))
}

/// Table of `t ↦ ‖P_c ψ(t)‖_{L²_{-σ}}` with its log-log slope against
/// `1 + t`.
#[derive(Debug, Clone)]
pub struct DecayReport {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub fit_residual: f64,
}

/// Dispersive-decay diagnostic: evolves `ψ₀`, projects onto the continuous
/// subspace, and fits the decay of the weighted norm over the time grid.
/// The grid must stay inside the pre-recurrence window `t < L/2`.
pub fn decay_diagnostic(
    engine: &SpectralEngine,
    potential: &LatticePotential,
    decomp: Option<&SpectralDecomposition>,
    m: f64,
    psi0: &ComplexSpinorField,
    sigma: f64,
    t_grid: &[f64],
    dt: f64,
) -> Result<DecayReport> {
    let grid = engine.grid();
    grid.check_same(&psi0.grid())?;
    if sigma < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "weight order must be nonnegative, got {sigma}"
        )));
    }
    let window = 0.5 * grid.extent();
    let t_max = t_grid.iter().cloned().fold(0.0, f64::max);
    if t_max >= window {
        return Err(Error::OutsideWindow {
            t: t_max,
            window,
        });
    }
    let spec = WeightedNormSpec::l2_sigma(-sigma);
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(t_grid.len());
    let project = |f: &ComplexSpinorField| -> Result<ComplexSpinorField> {
        match decomp {
            Some(d) if !d.bound_states.is_empty() => project_continuous(d, f),
            _ => Ok(f.clone()),
        }
    };
    if potential.is_zero() {
        for &t in t_grid {
            let evolved = crate::free::evolve_free(engine, psi0, m, t)?;
            let norm = engine.weighted_norm(&project(&evolved)?, spec)?;
            points.push((t, norm));
        }
    } else {
        crate::potential::evolve_perturbed_through(
            engine,
            potential,
            m,
            psi0,
            t_grid,
            dt,
            |t, f| {
                let norm = engine.weighted_norm(&project(f)?, spec)?;
                points.push((t, norm));
                Ok(())
            },
        )?;
    }
    let xs: Vec<f64> = points.iter().map(|(t, _)| (1.0 + t).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, n)| n.ln()).collect();
    let fit = linear_fit(&xs, &ys);
    Ok(DecayReport {
        points,
        slope: fit.slope,
        fit_residual: fit.residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{build_potential, PotentialProfile};
    use num_complex::Complex64;

    fn setup(n: usize, l: f64) -> (PeriodicGrid, SpectralEngine) {
        let g = PeriodicGrid::new(n, l).unwrap();
        (g, SpectralEngine::new(g))
    }

    #[test]
    fn free_operator_has_no_gap_states() {
        let (g, e) = setup(8, 8.0);
        let pot = build_potential(g, &PotentialProfile::Zero, 6.0).unwrap();
        let decomp = spectral_decompose(&e, &pot, 1.0, &EigenOptions::default()).unwrap();
        assert!(decomp.bound_states.is_empty());
        // P_c is then the identity
        let mut rng = crate::stats::sample_rng(1, 0);
        let psi = ComplexSpinorField::random(g, &mut rng);
        let pc = project_continuous(&decomp, &psi).unwrap();
        assert_eq!(pc.data(), psi.data());
    }

    #[test]
    fn attractive_well_binds_and_projects_cleanly() {
        let (g, e) = setup(12, 12.0);
        let profile = PotentialProfile::GaussianIdentity {
            amplitude: -1.0,
            width: 1.3,
        };
        let pot = build_potential(g, &profile, 6.0).unwrap();
        let decomp = spectral_decompose(&e, &pot, 1.0, &EigenOptions::default()).unwrap();
        assert!(
            !decomp.bound_states.is_empty(),
            "expected at least one bound state for a deep attractive well"
        );
        for b in &decomp.bound_states {
            assert!(b.omega.abs() < 1.0 - 1e-3, "ω = {}", b.omega);
            assert!(b.residual < 1e-8, "residual {}", b.residual);
        }
        assert!(decomp.orthonormality_defect() < 1e-10);

        let mut rng = crate::stats::sample_rng(2, 0);
        let psi = ComplexSpinorField::random(g, &mut rng);
        let pc = project_continuous(&decomp, &psi).unwrap();
        let pd = project_discrete(&decomp, &psi).unwrap();
        // P_c + P_d = identity
        let mut sum = pc.clone();
        sum.axpy(Complex64::new(1.0, 0.0), &pd);
        let err = sum
            .data()
            .iter()
            .zip(psi.data().iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12);
        // P_c annihilates the bound states
        for b in &decomp.bound_states {
            let pcz = project_continuous(&decomp, &b.field).unwrap();
            assert!(pcz.norm() < 1e-8, "P_c ζ norm {}", pcz.norm());
        }
        // Pythagoras: ‖P_cψ‖² + ‖P_dψ‖² = ‖ψ‖²
        let total = pc.norm_sq() + pd.norm_sq();
        assert!((total - psi.norm_sq()).abs() < 1e-10 * psi.norm_sq());
        // idempotence
        let pc2 = project_continuous(&decomp, &pc).unwrap();
        let err2 = pc2
            .data()
            .iter()
            .zip(pc.data().iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err2 < 1e-10);
    }

    #[test]
    fn resolvent_identity_holds_for_eigenpair_only() {
        let (g, e) = setup(12, 12.0);
        let profile = PotentialProfile::GaussianIdentity {
            amplitude: -1.0,
            width: 1.3,
        };
        let pot = build_potential(g, &profile, 6.0).unwrap();
        let decomp = spectral_decompose(&e, &pot, 1.0, &EigenOptions::default()).unwrap();
        let b = &decomp.bound_states[0];
        let res = resolvent_check(&e, &pot, 1.0, b.omega, &b.field).unwrap();
        assert!(res < 1e-6, "resolvent defect {res}");
        // off-spectrum vector: identity fails at O(1)
        let mut rng = crate::stats::sample_rng(3, 0);
        let junk = ComplexSpinorField::random(g, &mut rng);
        let res_junk = resolvent_check(&e, &pot, 1.0, b.omega, &junk).unwrap();
        assert!(res_junk > 0.1, "defect for junk vector {res_junk}");
        // |ω| ≥ m rejected
        assert!(resolvent_check(&e, &pot, 1.0, 1.5, &b.field).is_err());
    }

    #[test]
    fn eigenfunction_decays_exponentially_with_finite_weighted_norms() {
        let (g, e) = setup(12, 12.0);
        let profile = PotentialProfile::GaussianIdentity {
            amplitude: -1.0,
            width: 1.3,
        };
        let pot = build_potential(g, &profile, 6.0).unwrap();
        let decomp = spectral_decompose(&e, &pot, 1.0, &EigenOptions::default()).unwrap();
        let b = &decomp.bound_states[0];
        let fit = exponential_decay_fit(&b.field).expect("enough shells");
        assert!(fit.slope < 0.0, "no spatial decay: slope {}", fit.slope);
        let mut prev = 0.0;
        for s in 1..=4 {
            let norm = e
                .weighted_norm(&b.field, WeightedNormSpec::l2_sigma(s as f64))
                .unwrap();
            assert!(norm.is_finite());
            assert!(norm >= prev);
            prev = norm;
        }
    }

    #[test]
    fn stationary_state_does_not_decay() {
        let (g, e) = setup(12, 12.0);
        let profile = PotentialProfile::GaussianIdentity {
            amplitude: -1.0,
            width: 1.3,
        };
        let pot = build_potential(g, &profile, 6.0).unwrap();
        let decomp = spectral_decompose(&e, &pot, 1.0, &EigenOptions::default()).unwrap();
        let b = &decomp.bound_states[0];
        // evolve the bound state without projecting: weighted norm is static
        let report = decay_diagnostic(
            &e,
            &pot,
            None,
            1.0,
            &b.field,
            3.0,
            &[1.0, 2.0, 3.0, 4.0],
            0.05,
        )
        .unwrap();
        assert!(
            report.slope.abs() < 0.05,
            "stationary state slope {}",
            report.slope
        );
    }

    #[test]
    fn plain_l2_norm_cannot_decay() {
        let (g, e) = setup(8, 8.0);
        let pot = build_potential(g, &PotentialProfile::Zero, 6.0).unwrap();
        let mut rng = crate::stats::sample_rng(4, 0);
        let psi = ComplexSpinorField::random(g, &mut rng);
        let report =
            decay_diagnostic(&e, &pot, None, 1.0, &psi, 0.0, &[0.5, 1.5, 2.5, 3.5], 0.05).unwrap();
        assert!(report.slope.abs() < 1e-6, "σ=0 slope {}", report.slope);
    }

    #[test]
    fn decay_diagnostic_refuses_late_times() {
        let (g, e) = setup(8, 8.0);
        let pot = build_potential(g, &PotentialProfile::Zero, 6.0).unwrap();
        let psi = ComplexSpinorField::zeros(g);
        assert!(matches!(
            decay_diagnostic(&e, &pot, None, 1.0, &psi, 3.0, &[1.0, 5.0], 0.05),
            Err(Error::OutsideWindow { .. })
        ));
    }

    #[test]
    fn eigensolver_respects_grid_cap() {
        let (g, e) = setup(32, 32.0);
        let pot = build_potential(g, &PotentialProfile::Zero, 6.0).unwrap();
        let err = spectral_decompose(&e, &pot, 1.0, &EigenOptions::default());
        assert!(err.is_err());
    }
}
