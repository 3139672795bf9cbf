//! Goodness-of-fit of an estimated intensity via time rescaling.
//!
//! Between consecutive spikes at bins `a < b` the survival product
//! `Π_{t=a+1..b} (1 - λ_tΔ)` is mapped to `z = 1 - Π`. Under the true model
//! the jittered variant (the last factor replaced by `1 - r λ_bΔ` with
//! `r ~ U(0,1)`) makes every `z` exactly Uniform(0,1) and independent; the
//! deterministic variant takes values on a lattice and is only
//! asymptotically uniform as `λΔ → 0`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::confidence::normal_quantile;
use crate::error::{check_dim, Error, Result};

/// Rescaled inter-spike values, one per pair of consecutive spikes.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledTimes {
    pub z: Vec<f64>,
    pub n_spikes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rescaling {
    /// Exact survival product, no randomization.
    Deterministic,
    /// Uniform jitter of the spike bin's contribution; exactly uniform.
    #[default]
    Jittered,
}

/// Number of leading bins excluded as filter warm-up.
pub fn burn_in_bins(len: usize, fraction: f64) -> usize {
    ((len as f64) * fraction.clamp(0.0, 1.0)).floor() as usize
}

/// Rescales the inter-spike intervals of `bins[burn_in..]` under per-bin
/// spiking probabilities `lam`.
pub fn time_rescale<R: Rng + ?Sized>(
    bins: &[u8],
    lam: &[f64],
    mode: Rescaling,
    burn_in: usize,
    rng: &mut R,
) -> Result<RescaledTimes> {
    check_dim("intensity vs spike bins", bins.len(), lam.len())?;
    if let Some(p) = lam.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::InvalidParameter(format!(
            "spiking probabilities must lie in (0, 1), found {p}"
        )));
    }
    let start = burn_in.min(bins.len());
    let n_spikes = bins[start..].iter().filter(|&&b| b == 1).count();
    if n_spikes < 2 {
        return Err(Error::InsufficientData(format!(
            "time rescaling needs at least 2 spikes, found {n_spikes}"
        )));
    }
    let mut z = Vec::with_capacity(n_spikes - 1);
    let mut log_surv = 0.0;
    let mut seen_first = false;
    for t in start..bins.len() {
        if bins[t] == 1 {
            if seen_first {
                let last = match mode {
                    Rescaling::Deterministic => lam[t],
                    Rescaling::Jittered => rng.random::<f64>() * lam[t],
                };
                z.push(-(log_surv + (-last).ln_1p()).exp_m1());
            }
            seen_first = true;
            log_surv = 0.0;
        } else if seen_first {
            log_surv += (-lam[t]).ln_1p();
        }
    }
    Ok(RescaledTimes { z, n_spikes })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub band: f64,
    pub pass: bool,
    /// `(model quantile (j - 0.5)/n, empirical quantile z_(j))`.
    pub points: Vec<(f64, f64)>,
}

/// Kolmogorov–Smirnov comparison of the sorted `z` with uniform quantiles.
pub fn ks_test(times: &RescaledTimes) -> Result<KsResult> {
    let n = times.z.len();
    if n < 10 {
        return Err(Error::InsufficientData(format!("KS test needs at least 10 values, found {n}")));
    }
    let mut sorted = times.z.clone();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let points: Vec<(f64, f64)> = sorted
        .iter()
        .enumerate()
        .map(|(j, &z)| ((j as f64 + 0.5) / nf, z))
        .collect();
    let statistic = points.iter().map(|(q, z)| (z - q).abs()).fold(0.0, f64::max);
    let band = 1.36 / nf.sqrt();
    Ok(KsResult {
        statistic,
        band,
        pass: statistic < band,
        points,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcfResult {
    /// Autocorrelation at lags `1..=max_lag`.
    pub values: Vec<f64>,
    pub band: f64,
    pub pass: bool,
}

/// Sample autocorrelation of `Φ⁻¹(z_j)` against the `±1.96/√n` band.
pub fn acf_test(times: &RescaledTimes, max_lag: usize) -> Result<AcfResult> {
    let n = times.z.len();
    if n < max_lag + 10 {
        return Err(Error::InsufficientData(format!(
            "ACF test to lag {max_lag} needs at least {} values, found {n}",
            max_lag + 10
        )));
    }
    let u: Vec<f64> = times
        .z
        .iter()
        .map(|&z| normal_quantile(z.clamp(1e-6, 1.0 - 1e-6)))
        .collect::<Result<_>>()?;
    let values = autocorrelation(&u, max_lag);
    let band = 1.96 / (n as f64).sqrt();
    let pass = values.iter().all(|r| r.abs() <= band);
    Ok(AcfResult { values, band, pass })
}

/// `r_h = Σ_j (u_j - ū)(u_{j+h} - ū) / Σ_j (u_j - ū)²` for `h = 1..=max_lag`.
pub fn autocorrelation(u: &[f64], max_lag: usize) -> Vec<f64> {
    let n = u.len();
    let mean = u.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = u.iter().map(|v| v - mean).collect();
    let denom: f64 = d.iter().map(|v| v * v).sum();
    (1..=max_lag)
        .map(|h| {
            if denom == 0.0 || h >= n {
                return 0.0;
            }
            d[..n - h].iter().zip(&d[h..]).map(|(a, b)| a * b).sum::<f64>() / denom
        })
        .collect()
}
