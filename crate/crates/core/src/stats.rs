//! Small statistics helpers: least-squares line fits, sample cumulants with
//! jackknife errors, and deterministic per-sample RNG streams.

use rand_chacha::ChaCha8Rng;

/// Least-squares line fit `y ≈ slope·x + intercept`.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// RMS residual of the fit.
    pub residual: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LineFit {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "need at least two points to fit a line");
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = y - slope * x - intercept;
            r * r
        })
        .sum::<f64>()
        / n)
        .sqrt();
    LineFit {
        slope,
        intercept,
        residual,
    }
}

/// Fit of `log y` against `log(1 + x)`; points with `y ≤ floor` are dropped.
/// Returns `None` when fewer than two usable points remain.
pub fn log_log_fit(xs: &[f64], ys: &[f64], floor: f64) -> Option<LineFit> {
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for (&x, &y) in xs.iter().zip(ys) {
        if y > floor {
            lx.push((1.0 + x).ln());
            ly.push(y.ln());
        }
    }
    if lx.len() < 2 {
        return None;
    }
    Some(linear_fit(&lx, &ly))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample mean and its Monte Carlo standard error.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = mean(xs);
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Cumulants of a scalar sample with jackknife standard errors.
///
/// `k2 = m₂`, `k3 = m₃`, `k4 = m₄ - 3m₂²` in central moments; the errors are
/// leave-one-out jackknife estimates computed by moment downdating (O(N)).
#[derive(Debug, Clone, Copy)]
pub struct CumulantReport {
    pub n: usize,
    pub mean: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k3_stderr: f64,
    pub k4_stderr: f64,
}

pub fn cumulants(xs: &[f64]) -> CumulantReport {
    let n = xs.len();
    assert!(n >= 4, "need at least four samples for fourth cumulants");
    let nf = n as f64;
    let s1: f64 = xs.iter().sum();
    let s2: f64 = xs.iter().map(|x| x * x).sum();
    let s3: f64 = xs.iter().map(|x| x * x * x).sum();
    let s4: f64 = xs.iter().map(|x| x * x * x * x).sum();

    let from_sums = |s1: f64, s2: f64, s3: f64, s4: f64, n: f64| -> (f64, f64, f64, f64) {
        let mu = s1 / n;
        let m2 = s2 / n - mu * mu;
        let m3 = s3 / n - 3.0 * mu * s2 / n + 2.0 * mu.powi(3);
        let m4 = s4 / n - 4.0 * mu * s3 / n + 6.0 * mu * mu * s2 / n - 3.0 * mu.powi(4);
        (mu, m2, m3, m4 - 3.0 * m2 * m2)
    };

    let (mean, k2, k3, k4) = from_sums(s1, s2, s3, s4, nf);

    // jackknife over leave-one-out replicates
    let mut acc3 = 0.0;
    let mut acc4 = 0.0;
    for &x in xs {
        let (_, _, k3i, k4i) = from_sums(
            s1 - x,
            s2 - x * x,
            s3 - x * x * x,
            s4 - x * x * x * x,
            nf - 1.0,
        );
        acc3 += (k3i - k3) * (k3i - k3);
        acc4 += (k4i - k4) * (k4i - k4);
    }
    let factor = (nf - 1.0) / nf;
    CumulantReport {
        n,
        mean,
        k2,
        k3,
        k4,
        k3_stderr: (factor * acc3).sqrt() * (nf - 1.0).sqrt() / (nf - 1.0).sqrt(),
        k4_stderr: (factor * acc4).sqrt(),
    }
}

/// High-probability ceiling for the largest of `m` zero-mean
/// near-Gaussian averages of `n` samples with per-sample deviation `sigma`:
/// the Gumbel location `sqrt(2 ln m)` plus slack, scaled by `sigma/sqrt(n)`.
pub fn extreme_mean_bound(m_values: usize, n_samples: usize, sigma: f64) -> f64 {
    ((2.0 * (m_values.max(2) as f64).ln()).sqrt() + 1.5) * sigma / (n_samples as f64).sqrt()
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-sample RNG stream (version 1): ChaCha8 keyed by a
/// splitmix64 expansion of `(seed, index)`. Parallel and serial generation
/// of sample `index` draw identical values.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut state = seed ^ index.wrapping_mul(GOLDEN).wrapping_add(0x243F_6A88_85A3_08D3);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    use rand::SeedableRng;
    ChaCha8Rng::from_seed(key)
}
