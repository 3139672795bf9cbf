//! Recursive confidence intervals from de-sparsified estimates.
//!
//! With `B_k` the running information matrix (negated Hessian of the weighted
//! log-likelihood) and `g_k` its gradient at `ω̂_k`, an approximate inverse
//! `Θ̂_k ≈ B_k⁻¹` is built row by row from nodewise lasso fits on `B_k`. The
//! corrected estimate
//!
//! ```text
//! ŵ_k = ω̂_k + Θ̂_k g_k
//! ```
//!
//! undoes the shrinkage bias and is approximately Gaussian with covariance
//! `Θ̂_k G_k Θ̂_k'`, where `G_k = β² G_{k-1} + X_k'ε_k ε_k'X_k`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{add_outer, is_positive_definite, largest_eigenvalue};
use crate::prox::soft_threshold_scalar;

/// `G ← β² G + (X'ε)(X'ε)'`.
pub fn update_g(g: &mut Array2<f64>, x: ArrayView2<f64>, eps: ArrayView1<f64>, beta: f64) -> Result<()> {
    check_dim("G rows vs design columns", g.nrows(), x.ncols())?;
    check_dim("innovation vs design rows", x.nrows(), eps.len())?;
    let b2 = beta * beta;
    if b2 != 1.0 {
        *g *= b2;
    }
    let v = x.t().dot(&eps);
    add_outer(g, v.view(), 1.0);
    Ok(())
}

fn check_psd(b: ArrayView2<f64>) -> Result<()> {
    let m = b.nrows();
    check_dim("square matrix", m, b.ncols())?;
    let trace: f64 = b.diag().sum();
    if !trace.is_finite() || b.diag().iter().any(|&v| v < 0.0) {
        return Err(Error::Degenerate("information matrix is not positive semidefinite".into()));
    }
    let jitter = 1e-10 * (trace / m as f64).max(f64::MIN_POSITIVE);
    let mut shifted = b.to_owned();
    shifted.diag_mut().mapv_inplace(|v| v + jitter);
    if !is_positive_definite(shifted.view()) {
        return Err(Error::Degenerate("information matrix is not positive semidefinite".into()));
    }
    Ok(())
}

/// Proximal-gradient lasso of row `m` of `B` on the others:
///
/// ```text
/// ψ̂_m = argmin_ψ  ½ ψ'B_{∖m,∖m}ψ - B_{m,∖m}ψ + γ_m ‖ψ‖₁
/// ```
///
/// starting from `warm` (or zero). `step = None` uses `1 / λ_max(B)`.
pub fn nodewise_lasso(
    b: ArrayView2<f64>,
    m: usize,
    gamma_m: f64,
    step: Option<f64>,
    iterations: usize,
    warm: Option<ArrayView1<f64>>,
) -> Result<Array1<f64>> {
    check_psd(b)?;
    let dim = b.nrows();
    if m >= dim {
        return Err(Error::InvalidParameter(format!("coordinate {m} out of range for M = {dim}")));
    }
    if !(gamma_m >= 0.0) {
        return Err(Error::InvalidParameter(format!("γ_m must be non-negative, got {gamma_m}")));
    }
    let step = match step {
        Some(s) if s > 0.0 => s,
        Some(s) => return Err(Error::InvalidParameter(format!("step must be positive, got {s}"))),
        None => {
            let l = largest_eigenvalue(b, 200);
            if l <= 0.0 {
                return Ok(Array1::zeros(dim - 1));
            }
            1.0 / l
        }
    };
    let mut psi = match warm {
        Some(w) => {
            check_dim("nodewise warm start", dim - 1, w.len())?;
            w.to_owned()
        }
        None => Array1::zeros(dim - 1),
    };
    run_nodewise(b, m, gamma_m, step, iterations, &mut psi);
    Ok(psi)
}

/// Maps index `i` of the reduced (`∖m`) vector to a full coordinate.
#[inline]
fn full_index(i: usize, m: usize) -> usize {
    if i < m {
        i
    } else {
        i + 1
    }
}

fn run_nodewise(b: ArrayView2<f64>, m: usize, gamma_m: f64, step: f64, iterations: usize, psi: &mut Array1<f64>) {
    let dim = b.nrows();
    let tau = step * gamma_m;
    let brow = b.row(m);
    let mut full = Array1::zeros(dim);
    for _ in 0..iterations {
        // A ψ computed as B·ψ_full with ψ_full[m] = 0, skipping zeros.
        full.fill(0.0);
        for (i, &p) in psi.iter().enumerate() {
            if p != 0.0 {
                full.scaled_add(p, &b.row(full_index(i, m)));
            }
        }
        let mut change = 0.0f64;
        for i in 0..dim - 1 {
            let j = full_index(i, m);
            let next = soft_threshold_scalar(psi[i] + step * (brow[j] - full[j]), tau);
            change = change.max((next - psi[i]).abs());
            psi[i] = next;
        }
        if change == 0.0 {
            break;
        }
    }
}

/// Row `m` of `Θ̂` and the scaling `τ²_m = B_mm - B_{m,∖m} ψ̂_m`.
pub fn theta_row(b: ArrayView2<f64>, psi: ArrayView1<f64>, m: usize) -> Result<(Array1<f64>, f64)> {
    let dim = b.nrows();
    check_dim("nodewise coefficients", dim.saturating_sub(1), psi.len())?;
    if m >= dim {
        return Err(Error::InvalidParameter(format!("coordinate {m} out of range for M = {dim}")));
    }
    let mut c = Array1::zeros(dim);
    c[m] = 1.0;
    let mut tau_sq = b[[m, m]];
    for (i, &p) in psi.iter().enumerate() {
        let j = full_index(i, m);
        c[j] = -p;
        tau_sq -= b[[m, j]] * p;
    }
    if !(tau_sq > 0.0) {
        return Err(Error::Degenerate(format!(
            "nodewise scaling τ² = {tau_sq:e} for coordinate {m}"
        )));
    }
    Ok((c / tau_sq, tau_sq))
}

/// A two-sided interval for one coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub w_desparsified: f64,
    pub sigma_hat: f64,
    pub lo: f64,
    pub hi: f64,
}

/// `ŵ_m = ω̂_m + Θ̂_m g`, `σ̂² = Θ̂_m G Θ̂_m'`, bounds `ŵ_m ± Φ⁻¹(1 - a/2) σ̂`.
pub fn confidence_interval(
    w_hat: ArrayView1<f64>,
    theta_row: ArrayView1<f64>,
    g: ArrayView1<f64>,
    big_g: ArrayView2<f64>,
    m: usize,
    level: f64,
) -> Result<Interval> {
    let dim = w_hat.len();
    check_dim("Θ row", dim, theta_row.len())?;
    check_dim("gradient", dim, g.len())?;
    check_dim("G rows", dim, big_g.nrows())?;
    check_dim("G cols", dim, big_g.ncols())?;
    if m >= dim {
        return Err(Error::InvalidParameter(format!("coordinate {m} out of range for M = {dim}")));
    }
    let z = two_sided_z(level)?;
    let w_d = w_hat[m] + theta_row.dot(&g);
    let var = theta_row.dot(&big_g.dot(&theta_row));
    let scale = theta_row.mapv(f64::abs).dot(&big_g.mapv(f64::abs).dot(&theta_row.mapv(f64::abs)));
    let var = if var < 0.0 && var >= -1e-12 * scale { 0.0 } else { var };
    if !(var >= 0.0) {
        return Err(Error::Degenerate(format!("negative interval variance {var:e}")));
    }
    let sigma = var.sqrt();
    Ok(Interval {
        w_desparsified: w_d,
        sigma_hat: sigma,
        lo: w_d - z * sigma,
        hi: w_d + z * sigma,
    })
}

/// `Φ⁻¹(1 - (1 - level)/2)`.
pub fn two_sided_z(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("confidence level must lie in (0, 1), got {level}")));
    }
    normal_quantile(1.0 - 0.5 * (1.0 - level))
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile: rational initial guess refined by Halley steps.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("probability must lie in (0, 1), got {p}")));
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let mut x = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - P_LOW {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    for _ in 0..2 {
        // Work in the smaller tail to keep the residual accurate.
        let e = if x <= 0.0 {
            normal_cdf(x) - p
        } else {
            (1.0 - p) - normal_cdf(-x)
        };
        let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
        x -= u / (1.0 + 0.5 * x * u);
    }
    Ok(x)
}

/// Settings of [`ConfidenceTracker`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceConfig {
    /// Coordinates to report (0 is the baseline `μ`).
    pub coords: Vec<usize>,
    /// Nodewise penalty, one value for every coordinate.
    pub gamma: f64,
    /// Per-coordinate overrides of `gamma`.
    #[serde(default)]
    pub gamma_overrides: Vec<(usize, f64)>,
    /// Nodewise proximal iterations per refresh.
    pub iterations: usize,
    /// Recompute intervals every `stride` windows.
    pub stride: usize,
    pub level: f64,
    /// Whether the filter shrinks `μ`; intervals for coordinate 0 are then flagged.
    pub intercept_penalized: bool,
}

impl ConfidenceConfig {
    pub fn new(coords: Vec<usize>, gamma: f64) -> Self {
        Self {
            coords,
            gamma,
            gamma_overrides: Vec::new(),
            iterations: 20,
            stride: 10,
            level: 0.95,
            intercept_penalized: true,
        }
    }

    fn gamma_for(&self, m: usize) -> f64 {
        self.gamma_overrides
            .iter()
            .find(|(c, _)| *c == m)
            .map_or(self.gamma, |&(_, g)| g)
    }
}

/// One emitted interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub window: usize,
    pub coord: usize,
    pub w_hat: f64,
    pub w_desparsified: f64,
    pub sigma_hat: f64,
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    /// Set for the baseline coordinate when it is shrunk by the filter.
    pub caveat: bool,
}

impl IntervalRecord {
    pub const CSV_HEADER: &'static str = "window,coord,w_hat,w_desparsified,sigma_hat,lo,hi,level,caveat";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:?},{:?},{:?},{:?},{:?},{:?},{}",
            self.window,
            self.coord,
            self.w_hat,
            self.w_desparsified,
            self.sigma_hat,
            self.lo,
            self.hi,
            self.level,
            self.caveat as u8
        )
    }

    pub fn covers(&self, value: f64) -> bool {
        self.lo <= value && value <= self.hi
    }
}

/// Streaming state: `G_k` every window, nodewise fits and intervals at a stride.
#[derive(Debug, Clone)]
pub struct ConfidenceTracker {
    config: ConfidenceConfig,
    beta: f64,
    big_g: Array2<f64>,
    psi: Vec<Array1<f64>>,
    tau_sq: Vec<f64>,
    k: usize,
}

impl ConfidenceTracker {
    pub fn new(dim: usize, beta: f64, config: ConfidenceConfig) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidParameter("nodewise fits need M ≥ 2".into()));
        }
        if config.stride == 0 || config.iterations == 0 {
            return Err(Error::InvalidParameter("stride and iterations must be at least 1".into()));
        }
        if let Some(&m) = config.coords.iter().find(|&&m| m >= dim) {
            return Err(Error::InvalidParameter(format!("coordinate {m} out of range for M = {dim}")));
        }
        two_sided_z(config.level)?;
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidParameter(format!("forgetting factor must lie in (0, 1], got {beta}")));
        }
        let n = config.coords.len();
        Ok(Self {
            config,
            beta,
            big_g: Array2::zeros((dim, dim)),
            psi: vec![Array1::zeros(dim - 1); n],
            tau_sq: vec![f64::NAN; n],
            k: 0,
        })
    }

    pub fn config(&self) -> &ConfidenceConfig {
        &self.config
    }

    pub fn g_matrix(&self) -> &Array2<f64> {
        &self.big_g
    }

    /// Nodewise scalings from the last refresh, in `coords` order.
    pub fn tau_sq(&self) -> &[f64] {
        &self.tau_sq
    }

    /// Folds in window `k` with the innovation evaluated at the filter's
    /// final iterate for that window. Returns intervals when `k` hits the stride.
    pub fn observe(
        &mut self,
        x: ArrayView2<f64>,
        n: ArrayView1<f64>,
        w_hat: &Array1<f64>,
        g: &Array1<f64>,
        b: &Array2<f64>,
    ) -> Result<Option<Vec<IntervalRecord>>> {
        let eps = &n - &x.dot(w_hat).mapv(crate::model::logistic);
        update_g(&mut self.big_g, x, eps.view(), self.beta)?;
        self.k += 1;
        if self.k % self.config.stride != 0 {
            return Ok(None);
        }
        self.intervals(w_hat, g, b).map(Some)
    }

    /// Refreshes the nodewise fits on `b` and returns one interval per tracked coordinate.
    pub fn intervals(&mut self, w_hat: &Array1<f64>, g: &Array1<f64>, b: &Array2<f64>) -> Result<Vec<IntervalRecord>> {
        check_psd(b.view())?;
        let lmax = largest_eigenvalue(b.view(), 100) * 1.05;
        if !(lmax > 0.0) {
            return Err(Error::Degenerate("information matrix is zero".into()));
        }
        let step = 1.0 / lmax;
        let cfg = &self.config;
        let fits: Vec<Result<(Array1<f64>, Array1<f64>, f64)>> = cfg
            .coords
            .par_iter()
            .zip(self.psi.par_iter())
            .map(|(&m, warm)| {
                let mut psi = warm.clone();
                run_nodewise(b.view(), m, cfg.gamma_for(m), step, cfg.iterations, &mut psi);
                let (row, tau_sq) = theta_row(b.view(), psi.view(), m)?;
                Ok((psi, row, tau_sq))
            })
            .collect();
        let mut out = Vec::with_capacity(fits.len());
        for (idx, fit) in fits.into_iter().enumerate() {
            let (psi, row, tau_sq) = fit?;
            let m = self.config.coords[idx];
            let iv = confidence_interval(w_hat.view(), row.view(), g.view(), self.big_g.view(), m, self.config.level)?;
            self.psi[idx] = psi;
            self.tau_sq[idx] = tau_sq;
            out.push(IntervalRecord {
                window: self.k,
                coord: m,
                w_hat: w_hat[m],
                w_desparsified: iv.w_desparsified,
                sigma_hat: iv.sigma_hat,
                lo: iv.lo,
                hi: iv.hi,
                level: self.config.level,
                caveat: m == 0 && self.config.intercept_penalized,
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn quantile_reference_values() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        // High-precision reference value.
        assert!((normal_quantile(0.975).unwrap() - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((two_sided_z(0.95).unwrap() - 1.959_963_984_540_054).abs() < 1e-12);
        // Dyadic p keeps 1 - p exact.
        for p in [2f64.powi(-30), 2f64.powi(-14), 0.007_812_5, 0.25, 0.437_5] {
            let a = normal_quantile(p).unwrap();
            let b = normal_quantile(1.0 - p).unwrap();
            assert!((a + b).abs() < 1e-8, "{p}: {a} {b}");
            assert!((normal_cdf(a) - p).abs() < 1e-12 * p.max(1e-3));
        }
        assert!(normal_quantile(0.0).is_err() && normal_quantile(1.0).is_err());
    }

    #[test]
    fn g_update_single_term() {
        let mut g = Array2::zeros((2, 2));
        update_g(&mut g, array![[1.0, 2.0]].view(), array![0.5].view(), 0.9).unwrap();
        assert_eq!(g, array![[0.25, 0.5], [0.5, 1.0]]);
        update_g(&mut g, array![[1.0, -1.0]].view(), array![-1.0].view(), 0.5).unwrap();
        assert_eq!(g, array![[0.0625 + 1.0, 0.125 - 1.0], [0.125 - 1.0, 0.25 + 1.0]]);
    }

    #[test]
    fn diagonal_information_has_no_cross_terms() {
        let b = array![[2.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 0.5]];
        for m in 0..3 {
            let psi = nodewise_lasso(b.view(), m, 0.1, None, 100, None).unwrap();
            assert!(psi.iter().all(|&v| v == 0.0));
            let (row, tau) = theta_row(b.view(), psi.view(), m).unwrap();
            assert_eq!(tau, b[[m, m]]);
            let mut e = Array1::zeros(3);
            e[m] = 1.0 / b[[m, m]];
            assert_eq!(row, e);
        }
    }

    #[test]
    fn unpenalized_nodewise_matches_linear_solve() {
        let b = array![[4.0, 1.0, 0.5], [1.0, 3.0, -0.7], [0.5, -0.7, 2.0]];
        let inv = crate::linalg::spd_inverse(b.view()).unwrap();
        for m in 0..3 {
            let psi = nodewise_lasso(b.view(), m, 0.0, None, 5000, None).unwrap();
            let (row, _) = theta_row(b.view(), psi.view(), m).unwrap();
            assert!((&row - &inv.row(m)).mapv(f64::abs).sum() < 1e-6);
        }
    }

    #[test]
    fn large_nodewise_penalty_zeroes() {
        let b = array![[4.0, 1.0], [1.0, 3.0]];
        let psi = nodewise_lasso(b.view(), 0, 100.0, None, 100, None).unwrap();
        assert_eq!(psi[0], 0.0);
    }

    #[test]
    fn rejects_indefinite_information() {
        let b = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(nodewise_lasso(b.view(), 0, 0.0, None, 10, None).is_err());
    }

    #[test]
    fn degenerate_tau_is_an_error() {
        let b = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(theta_row(b.view(), array![1.0].view(), 0).is_err());
    }

    #[test]
    fn interval_edge_cases() {
        let w = array![0.3, -1.0];
        let row = array![0.5, 0.1];
        let zero_g = array![0.0, 0.0];
        let big_g = array![[2.0, 0.1], [0.1, 1.0]];
        let iv = confidence_interval(w.view(), row.view(), zero_g.view(), big_g.view(), 0, 0.95).unwrap();
        assert_eq!(iv.w_desparsified, 0.3);
        let z = 1.959_963_984_540_054;
        let sd = (0.25f64 * 2.0 + 2.0 * 0.05 * 0.1 + 0.01).sqrt();
        assert!((iv.hi - 0.3 - z * sd).abs() < 1e-12);
        let iv0 = confidence_interval(w.view(), row.view(), array![1.0, 2.0].view(), Array2::zeros((2, 2)).view(), 0, 0.95).unwrap();
        assert_eq!(iv0.lo, iv0.hi);
        assert!((iv0.w_desparsified - (0.3 + 0.5 + 0.2)).abs() < 1e-15);
    }

    #[test]
    fn diagonal_case_is_a_wald_interval() {
        let mut t = ConfidenceTracker::new(2, 1.0, ConfidenceConfig::new(vec![0, 1], 0.0)).unwrap();
        // Orthogonal design: B and G stay diagonal.
        let xs = [array![[1.0, 0.0]], array![[0.0, 1.0]]];
        let w = array![0.0, 0.0];
        for i in 0..20 {
            let x = &xs[i % 2];
            let n = array![(i % 3 == 0) as u8 as f64];
            let eps = &n - &x.dot(&w).mapv(crate::model::logistic);
            update_g(&mut t.big_g, x.view(), eps.view(), 1.0).unwrap();
        }
        let b = array![[2.5, 0.0], [0.0, 2.5]];
        let g = array![0.4, -0.2];
        let out = t.intervals(&w, &g, &b).unwrap();
        for r in out {
            let m = r.coord;
            let expect_sd = t.big_g[[m, m]].sqrt() / 2.5;
            assert!((r.sigma_hat - expect_sd).abs() < 1e-14);
            assert!((r.w_desparsified - g[m] / 2.5).abs() < 1e-14);
        }
    }
}
