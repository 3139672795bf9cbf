//! Bernoulli point-process observation model with a logistic link.
//!
//! Spikes are binned at width `delta`; within bin `t` the spike indicator
//! `n_t` is Bernoulli with success probability `λ_t Δ = logistic(x_t' ω)`,
//! where `x_t = [1, s_t, s_{t-1}, …, s_{t-M+2}]` stacks the current and
//! lagged stimulus samples behind a constant column for the baseline `μ`.
//!
//! Parameters are assumed piecewise constant over windows of `W` bins, and
//! the log-likelihood of past windows is discounted geometrically by a
//! forgetting factor `β ∈ (0, 1]`.

use std::sync::atomic::{AtomicBool, Ordering};

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2};

use crate::error::{check_dim, Error, Result};

/// Probabilities outside `[CIF_WARN_LO, 1 - CIF_WARN_LO]` trigger a one-time diagnostic.
pub const CIF_WARN_LO: f64 = 1e-12;

static SATURATION_WARNED: AtomicBool = AtomicBool::new(false);

/// Overflow-safe inverse logit.
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow for large `|x|`.
#[inline]
pub fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn note_saturation(p: f64) {
    if !(CIF_WARN_LO..=1.0 - CIF_WARN_LO).contains(&p)
        && !SATURATION_WARNED.swap(true, Ordering::Relaxed)
    {
        log::warn!("spiking probability {p:e} is numerically saturated");
    }
}

/// Binned binary spike observations.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTrain {
    bins: Vec<u8>,
    delta: f64,
}

impl SpikeTrain {
    pub fn new(bins: Vec<u8>, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "bin width must be positive, got {delta}"
            )));
        }
        if let Some(pos) = bins.iter().position(|&b| b > 1) {
            return Err(Error::InvalidParameter(format!(
                "spike bin {pos} holds {} (expected 0 or 1)",
                bins[pos]
            )));
        }
        Ok(Self { bins, delta })
    }

    pub fn bins(&self) -> &[u8] {
        &self.bins
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn spike_count(&self) -> usize {
        self.bins.iter().filter(|&&b| b == 1).count()
    }

    /// Number of complete windows of `w` bins.
    pub fn num_windows(&self, w: usize) -> usize {
        if w == 0 {
            0
        } else {
            self.bins.len() / w
        }
    }

    /// Spike vector of window `k` (1-based) as reals.
    pub fn window(&self, w: usize, k: usize) -> Result<Array1<f64>> {
        if w == 0 || k == 0 || k * w > self.bins.len() {
            return Err(Error::InsufficientData(format!(
                "window {k} of width {w} exceeds {} bins",
                self.bins.len()
            )));
        }
        let start = (k - 1) * w;
        Ok(self.bins[start..start + w].iter().map(|&b| b as f64).collect())
    }
}

/// Stimulus samples `s_t` for `t = 1 - pad, …, T`.
///
/// Samples before the stored pre-history read as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct StimulusSequence {
    values: Vec<f64>,
    pad: usize,
}

impl StimulusSequence {
    /// `values[0..pad]` hold the pre-history `s_{1-pad}, …, s_0`.
    pub fn new(values: Vec<f64>, pad: usize) -> Result<Self> {
        if pad > values.len() {
            return Err(Error::InvalidParameter(format!(
                "pre-history length {pad} exceeds {} samples",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("stimulus"));
        }
        Ok(Self { values, pad })
    }

    /// Sequence without pre-history.
    pub fn from_samples(values: Vec<f64>) -> Result<Self> {
        Self::new(values, 0)
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    /// Number of samples at `t ≥ 1`.
    pub fn len(&self) -> usize {
        self.values.len() - self.pad
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn raw(&self) -> &[f64] {
        &self.values
    }

    /// `s_t`, zero before the stored pre-history.
    pub fn get(&self, t: i64) -> Result<f64> {
        let idx = t + self.pad as i64 - 1;
        if idx < 0 {
            return Ok(0.0);
        }
        self.values
            .get(idx as usize)
            .copied()
            .ok_or_else(|| Error::InsufficientData(format!("stimulus ends before t = {t}")))
    }

    /// `B = max |s_t|`.
    pub fn bound(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Sample variance over `t ≥ 1`.
    pub fn variance(&self) -> f64 {
        let xs = &self.values[self.pad..];
        if xs.len() < 2 {
            return 0.0;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    }
}

/// Parameter vector `ω = [μ, θ_0, …, θ_{M-2}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Array1<f64>);

impl ParamVector {
    pub fn new(mu: f64, theta: &[f64]) -> Self {
        let mut v = Array1::zeros(theta.len() + 1);
        v[0] = mu;
        v.slice_mut(s![1..]).assign(&ArrayView1::from(theta));
        Self(v)
    }

    pub fn zeros(m: usize) -> Self {
        Self(Array1::zeros(m))
    }

    pub fn from_array(v: Array1<f64>) -> Self {
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn mu(&self) -> f64 {
        self.0[0]
    }

    pub fn theta(&self) -> ArrayView1<'_, f64> {
        self.0.slice(s![1..])
    }

    pub fn as_array(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn as_array_mut(&mut self) -> &mut Array1<f64> {
        &mut self.0
    }

    pub fn into_array(self) -> Array1<f64> {
        self.0
    }

    pub fn l0(&self) -> usize {
        self.0.iter().filter(|v| **v != 0.0).count()
    }

    /// Best `L`-term approximation error `‖ω - ω_L‖₁`.
    pub fn sigma_l(&self, l: usize) -> f64 {
        let mut mags: Vec<f64> = self.0.iter().map(|v| v.abs()).collect();
        mags.sort_by(|a, b| b.total_cmp(a));
        mags.iter().skip(l).sum()
    }
}

impl From<Array1<f64>> for ParamVector {
    fn from(v: Array1<f64>) -> Self {
        Self(v)
    }
}

/// `W × M` covariate matrix of window `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignWindow {
    pub matrix: Array2<f64>,
    pub k: usize,
}

impl DesignWindow {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }
}

/// Per-bin spiking probabilities `λ_t Δ` of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct CifVector(pub Array1<f64>);

impl CifVector {
    pub fn values(&self) -> &Array1<f64> {
        &self.0
    }
}

/// Observations and covariates of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowData {
    pub x: Array2<f64>,
    pub n: Array1<f64>,
}

impl WindowData {
    pub fn new(x: Array2<f64>, n: Array1<f64>) -> Result<Self> {
        check_dim("window spikes vs rows", x.nrows(), n.len())?;
        Ok(Self { x, n })
    }
}

/// `λΔ = logistic(X ω)`, elementwise.
pub fn logistic_cif(x: ArrayView2<f64>, w: ArrayView1<f64>) -> Result<CifVector> {
    check_dim("design columns vs parameter", x.ncols(), w.len())?;
    let eta = x.dot(&w);
    let lam = eta.mapv(|e| {
        let p = logistic(e);
        note_saturation(p);
        p
    });
    Ok(CifVector(lam))
}

/// Innovation `ε = n - λΔ`.
pub fn innovation(n: ArrayView1<f64>, lam: &CifVector) -> Result<Array1<f64>> {
    check_dim("spikes vs intensity", n.len(), lam.0.len())?;
    Ok(&n - &lam.0)
}

/// Log-likelihood of one window, `Σ_j n_j x_j'ω - log(1 + exp(x_j'ω))`.
pub fn window_loglik(w: ArrayView1<f64>, x: ArrayView2<f64>, n: ArrayView1<f64>) -> Result<f64> {
    check_dim("design columns vs parameter", x.ncols(), w.len())?;
    check_dim("spikes vs rows", x.nrows(), n.len())?;
    Ok(x.outer_iter()
        .zip(n.iter())
        .map(|(row, &nj)| {
            let eta = row.dot(&w);
            nj * eta - log1p_exp(eta)
        })
        .sum())
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "forgetting factor must lie in (0, 1], got {beta}"
        )));
    }
    Ok(())
}

/// Exponentially weighted log-likelihood `Σ_i β^{k-i} L_i(ω)` over windows `1..=k`.
pub fn weighted_loglik(w: ArrayView1<f64>, windows: &[WindowData], beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let mut acc = 0.0;
    for win in windows {
        acc = beta * acc + window_loglik(w, win.x.view(), win.n.view())?;
    }
    Ok(acc)
}

/// Gradient of [`weighted_loglik`], `Σ_i β^{k-i} X_i' ε_i(ω)`.
pub fn weighted_gradient(
    w: ArrayView1<f64>,
    windows: &[WindowData],
    beta: f64,
) -> Result<Array1<f64>> {
    check_beta(beta)?;
    let mut g = Array1::zeros(w.len());
    for win in windows {
        let lam = logistic_cif(win.x.view(), w)?;
        let eps = innovation(win.n.view(), &lam)?;
        g *= beta;
        g += &win.x.t().dot(&eps);
    }
    Ok(g)
}

/// Negated Hessian of [`weighted_loglik`], `Σ_i β^{k-i} X_i' Λ_i(ω) X_i`.
pub fn weighted_information(
    w: ArrayView1<f64>,
    windows: &[WindowData],
    beta: f64,
) -> Result<Array2<f64>> {
    check_beta(beta)?;
    let m = w.len();
    let mut b = Array2::zeros((m, m));
    for win in windows {
        let lam = logistic_cif(win.x.view(), w)?;
        b *= beta;
        let mut xl = win.x.clone();
        for (mut row, p) in xl.outer_iter_mut().zip(lam.0.iter()) {
            row *= p * (1.0 - p);
        }
        b += &win.x.t().dot(&xl);
    }
    Ok(b)
}

/// Writes the rows of window `k` (1-based) into `out` (`W × M`).
pub fn fill_design(
    stim: &StimulusSequence,
    m: usize,
    k: usize,
    mut out: ArrayViewMut2<f64>,
) -> Result<()> {
    let w = out.nrows();
    check_dim("design columns", m, out.ncols())?;
    if m == 0 || w == 0 || k == 0 {
        return Err(Error::InvalidParameter(
            "design needs M ≥ 1, W ≥ 1 and k ≥ 1".into(),
        ));
    }
    for j in 0..w {
        let t = ((k - 1) * w + j + 1) as i64;
        let mut row = out.row_mut(j);
        row[0] = 1.0;
        for lag in 0..m - 1 {
            row[lag + 1] = stim.get(t - lag as i64)?;
        }
    }
    Ok(())
}

/// Covariate matrix of window `k`: row `j` is `[1, s_t, …, s_{t-M+2}]`, `t = (k-1)W + j`.
pub fn build_design(stim: &StimulusSequence, m: usize, w: usize, k: usize) -> Result<DesignWindow> {
    let mut matrix = Array2::zeros((w, m));
    fill_design(stim, m, k, matrix.view_mut())?;
    Ok(DesignWindow { matrix, k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cif_at_zero_is_half() {
        let x = array![[1.0, 0.0], [1.0, 2.0]];
        let w = array![0.0, 0.0];
        let lam = logistic_cif(x.view(), w.view()).unwrap();
        assert!(lam.0.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn cif_baseline_only() {
        let x = array![[1.0, 0.3, -0.2], [1.0, -1.0, 4.0]];
        let w = array![-2.51, 0.0, 0.0];
        let lam = logistic_cif(x.view(), w.view()).unwrap();
        // 30-digit reference value of 1 / (1 + e^2.51).
        for p in lam.0.iter() {
            assert!((p - 0.075_160_109_482_126_61).abs() < 1e-16, "{p}");
        }
    }

    #[test]
    fn cif_saturates_without_overflow() {
        let x = array![[1.0], [1.0]];
        let w = array![50.0];
        let lam = logistic_cif(x.view(), w.view()).unwrap();
        // 1 - λΔ ≈ 2e-22 is below the f64 spacing at 1, so λΔ rounds to 1.
        assert!(lam.0[0].is_finite() && lam.0[0] <= 1.0 && lam.0[0] >= 1.0 - 1e-20);
        assert!(logistic(-50.0) > 0.0 && logistic(-50.0) < 2e-22);
        assert!(logistic(-800.0) >= 0.0 && logistic(800.0) == 1.0);
        assert!((log1p_exp(800.0) - 800.0).abs() < 1e-12);
        assert!(log1p_exp(-800.0) >= 0.0);
    }

    #[test]
    fn cif_dimension_mismatch() {
        let x = array![[1.0, 0.0]];
        let w = array![0.0];
        assert!(matches!(
            logistic_cif(x.view(), w.view()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn innovation_examples() {
        let e = innovation(array![1.0].view(), &CifVector(array![0.3])).unwrap();
        assert!((e[0] - 0.7).abs() < 1e-15);
        let e = innovation(array![0.0, 0.0].view(), &CifVector(array![0.5, 0.25])).unwrap();
        assert_eq!(e, array![-0.5, -0.25]);
        let e = innovation(array![0.2, 0.9].view(), &CifVector(array![0.2, 0.9])).unwrap();
        assert_eq!(e, array![0.0, 0.0]);
        assert!(innovation(array![0.0].view(), &CifVector(array![0.1, 0.2])).is_err());
    }

    #[test]
    fn loglik_at_zero() {
        let x = array![[1.0, 0.7]];
        let w = array![0.0, 0.0];
        let l = window_loglik(w.view(), x.view(), array![0.0].view()).unwrap();
        assert!((l + std::f64::consts::LN_2).abs() < 1e-15);
        let x4 = Array2::from_elem((4, 2), 0.3);
        let l4 = window_loglik(w.view(), x4.view(), array![1.0, 0.0, 1.0, 0.0].view()).unwrap();
        assert!((l4 + 4.0 * std::f64::consts::LN_2).abs() < 1e-14);
    }

    #[test]
    fn weighted_loglik_examples() {
        let w = array![0.3, -0.4];
        let wins: Vec<WindowData> = (0..3)
            .map(|i| {
                WindowData::new(array![[1.0, 0.5 * i as f64 - 0.2]], array![(i % 2) as f64])
                    .unwrap()
            })
            .collect();
        let per: Vec<f64> = wins
            .iter()
            .map(|d| window_loglik(w.view(), d.x.view(), d.n.view()).unwrap())
            .collect();
        let b1 = weighted_loglik(w.view(), &wins, 1.0).unwrap();
        assert!((b1 - per.iter().sum::<f64>()).abs() < 1e-12 * b1.abs());
        let b05 = weighted_loglik(w.view(), &wins, 0.5).unwrap();
        let oracle = 0.25 * per[0] + 0.5 * per[1] + per[2];
        assert!((b05 - oracle).abs() < 1e-14);
        let one = weighted_loglik(w.view(), &wins[..1], 0.37).unwrap();
        assert_eq!(one, per[0]);
        assert!(weighted_loglik(w.view(), &wins, 0.0).is_err());
        assert!(weighted_loglik(w.view(), &wins, 1.5).is_err());
    }

    #[test]
    fn design_rows_follow_definition() {
        // s_1 = a, s_2 = b; window k = 2 with W = 1 is t = 2.
        let stim = StimulusSequence::from_samples(vec![3.0, 5.0]).unwrap();
        let d = build_design(&stim, 3, 1, 2).unwrap();
        assert_eq!(d.matrix, array![[1.0, 5.0, 3.0]]);
        // t = 1 reaches s_0, which is zero padded.
        let d1 = build_design(&stim, 3, 1, 1).unwrap();
        assert_eq!(d1.matrix, array![[1.0, 3.0, 0.0]]);
        assert!(build_design(&stim, 3, 1, 3).is_err());
    }

    #[test]
    fn design_uses_prehistory() {
        let stim = StimulusSequence::new(vec![-1.0, -2.0, 7.0, 8.0], 2).unwrap();
        let d = build_design(&stim, 4, 2, 1).unwrap();
        assert_eq!(d.matrix, array![[1.0, 7.0, -2.0, -1.0], [1.0, 8.0, 7.0, -2.0]]);
    }

    #[test]
    fn stacked_windows_match_single_rows() {
        let vals: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let stim = StimulusSequence::new(vals, 4).unwrap();
        let m = 5;
        for k in 1..=7 {
            let wide = build_design(&stim, m, 2, k).unwrap();
            let a = build_design(&stim, m, 1, 2 * k - 1).unwrap();
            let b = build_design(&stim, m, 1, 2 * k).unwrap();
            assert_eq!(wide.matrix.row(0), a.matrix.row(0));
            assert_eq!(wide.matrix.row(1), b.matrix.row(0));
            // Shift structure between consecutive rows.
            for lag in 1..m - 1 {
                assert_eq!(wide.matrix[[1, lag + 1]], wide.matrix[[0, lag]]);
            }
        }
    }

    #[test]
    fn sigma_l_vanishes_on_sparse() {
        let w = ParamVector::new(0.0, &[0.0, 3.0, 0.0, -2.0]);
        assert_eq!(w.sigma_l(2), 0.0);
        assert_eq!(w.sigma_l(1), 2.0);
        assert_eq!(w.l0(), 2);
    }

    #[test]
    fn spike_train_validation() {
        assert!(SpikeTrain::new(vec![0, 1, 2], 0.001).is_err());
        assert!(SpikeTrain::new(vec![0, 1], 0.0).is_err());
        let st = SpikeTrain::new(vec![0, 1, 1, 0, 1], 0.001).unwrap();
        assert_eq!(st.spike_count(), 3);
        assert_eq!(st.num_windows(2), 2);
        assert_eq!(st.window(2, 2).unwrap(), array![1.0, 0.0]);
        assert!(st.window(2, 3).is_err());
    }
}
