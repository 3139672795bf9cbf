use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{check_window, cif_and_innovation, ensure_finite, PointProcessFilter};
use crate::error::{Error, Result};
use crate::linalg::{add_outer, is_positive_definite, symmetrize, to_array2, to_dmatrix};

/// Gaussian-approximation ("stochastic state") point process filter settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsppfConfig {
    pub dim: usize,
    /// Random-walk variance `q` added to every diagonal entry at prediction.
    pub q: f64,
    /// Covariance inflation `P ← P / β` at prediction; `1` disables it.
    pub forgetting: f64,
    /// Prior covariance `p0 · I`.
    pub prior_variance: f64,
    /// Full Cholesky check every this many windows (0 disables it).
    pub pd_check_stride: usize,
}

impl SsppfConfig {
    pub fn new(dim: usize, q: f64, forgetting: f64) -> Self {
        Self {
            dim,
            q,
            forgetting,
            prior_variance: 1.0,
            pd_check_stride: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        if !(self.q >= 0.0 && self.q.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "random-walk variance must be non-negative, got {}",
                self.q
            )));
        }
        if !(self.forgetting > 0.0 && self.forgetting <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "forgetting factor must lie in (0, 1], got {}",
                self.forgetting
            )));
        }
        if !(self.prior_variance > 0.0 && self.prior_variance.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "prior variance must be positive, got {}",
                self.prior_variance
            )));
        }
        Ok(())
    }
}

/// Recursive Gaussian approximation of the posterior of `ω_k`.
///
/// Prediction inflates the covariance (`P ← P/β + qI`); the update adds the
/// observed information `X'ΛX` to the precision and moves the mean along
/// `P_{k|k} X' ε` evaluated at the predicted mean.
#[derive(Debug, Clone)]
pub struct Ssppf {
    config: SsppfConfig,
    mean: Array1<f64>,
    cov: Array2<f64>,
    k: usize,
}

impl Ssppf {
    pub fn new(config: SsppfConfig) -> Result<Self> {
        config.validate()?;
        let m = config.dim;
        Ok(Self {
            mean: Array1::zeros(m),
            cov: Array2::eye(m) * config.prior_variance,
            config,
            k: 0,
        })
    }

    pub fn from_parts(config: SsppfConfig, mean: Array1<f64>, cov: Array2<f64>, k: usize) -> Result<Self> {
        config.validate()?;
        crate::error::check_dim("ssppf mean", config.dim, mean.len())?;
        crate::error::check_dim("ssppf covariance", config.dim, cov.nrows())?;
        crate::error::check_dim("ssppf covariance", config.dim, cov.ncols())?;
        Ok(Self { config, mean, cov, k })
    }

    pub fn config(&self) -> &SsppfConfig {
        &self.config
    }

    pub fn covariance(&self) -> &Array2<f64> {
        &self.cov
    }

    /// `(lo, hi)` of the Gaussian band `mean ± z·sd` for coordinate `m`.
    pub fn band(&self, m: usize, z: f64) -> (f64, f64) {
        let sd = self.cov[[m, m]].max(0.0).sqrt();
        (self.mean[m] - z * sd, self.mean[m] + z * sd)
    }

    fn predict(&mut self) {
        let SsppfConfig { q, forgetting, .. } = self.config;
        if forgetting != 1.0 {
            self.cov /= forgetting;
        }
        if q != 0.0 {
            self.cov.diag_mut().mapv_inplace(|v| v + q);
        }
    }

    fn diverged(&self, why: &str) -> Error {
        Error::Diverged(format!("ssppf covariance at window {}: {why}", self.k))
    }
}

impl PointProcessFilter for Ssppf {
    fn name(&self) -> &'static str {
        "ssppf"
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn update(&mut self, n: ArrayView1<f64>, x: ArrayView2<f64>) -> Result<()> {
        check_window(self.config.dim, n, x)?;
        self.predict();
        let (lam, eps) = cif_and_innovation(x, n, &self.mean);
        let h = lam.mapv(|p| p * (1.0 - p));
        if x.nrows() == 1 {
            let row = x.row(0);
            let px = self.cov.dot(&row);
            let denom = 1.0 + h[0] * row.dot(&px);
            if !(denom > 0.0) {
                return Err(self.diverged("non-positive innovation variance"));
            }
            add_outer(&mut self.cov, px.view(), -h[0] / denom);
            self.mean.scaled_add(eps[0] / denom, &px);
        } else {
            // Woodbury: P⁺ = P - P X' (I + Λ X P X')⁻¹ Λ X P.
            let pxt = self.cov.dot(&x.t());
            let mut s = x.dot(&pxt);
            for (mut row, &hj) in s.outer_iter_mut().zip(h.iter()) {
                row *= hj;
            }
            s.diag_mut().mapv_inplace(|v| v + 1.0);
            let mut rhs = pxt.t().to_owned();
            for (mut row, &hj) in rhs.outer_iter_mut().zip(h.iter()) {
                row *= hj;
            }
            let lu = to_dmatrix(s.view()).lu();
            let solved: DMatrix<f64> = lu
                .solve(&to_dmatrix(rhs.view()))
                .ok_or_else(|| self.diverged("singular innovation covariance"))?;
            self.cov -= &pxt.dot(&to_array2(&solved));
            let gain = self.cov.dot(&x.t().dot(&eps));
            self.mean += &gain;
        }
        symmetrize(&mut self.cov);
        self.k += 1;

        ensure_finite("ssppf mean", self.mean.iter())?;
        if self.cov.diag().iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(self.diverged("non-positive variance"));
        }
        let stride = self.config.pd_check_stride;
        if stride > 0 && self.k % stride == 0 && !is_positive_definite(self.cov.view()) {
            return Err(self.diverged("lost positive definiteness"));
        }
        Ok(())
    }

    fn estimate(&self) -> &Array1<f64> {
        &self.mean
    }

    fn windows_seen(&self) -> usize {
        self.k
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::logistic;
    use ndarray::array;

    #[test]
    fn zero_innovation_keeps_mean_and_shrinks_covariance() {
        let mut f = Ssppf::new(SsppfConfig::new(2, 0.0, 1.0)).unwrap();
        let before = f.covariance().clone();
        f.update(array![0.5].view(), array![[1.0, 0.4]].view()).unwrap();
        assert_eq!(f.estimate(), &array![0.0, 0.0]);
        let after = f.covariance();
        for i in 0..2 {
            assert!(after[[i, i]] <= before[[i, i]]);
        }
        // Information update: P⁻¹ increases by h x x'.
        let expect_prec = crate::linalg::spd_inverse(before.view()).unwrap()
            + array![[1.0, 0.4], [0.4, 0.16]] * 0.25;
        let prec = crate::linalg::spd_inverse(after.view()).unwrap();
        assert!((&prec - &expect_prec).mapv(f64::abs).sum() < 1e-12);
    }

    #[test]
    fn scalar_recursion_by_hand() {
        let (q, p0) = (0.1, 2.0);
        let mut cfg = SsppfConfig::new(1, q, 1.0);
        cfg.prior_variance = p0;
        let mut f = Ssppf::new(cfg).unwrap();
        f.update(array![1.0].view(), array![[2.0]].view()).unwrap();
        // Predict: P = 2.1. λ = 1/2, h = 1/4, x = 2: P⁺ = 1/(1/2.1 + 1).
        let p_post = 1.0 / (1.0 / 2.1 + 1.0);
        assert!((f.covariance()[[0, 0]] - p_post).abs() < 1e-15);
        assert!((f.estimate()[0] - p_post * 2.0 * 0.5).abs() < 1e-15);

        let m1 = f.estimate()[0];
        f.update(array![0.0].view(), array![[-1.0]].view()).unwrap();
        let pp = p_post + q;
        let lam = logistic(-m1);
        let p2 = 1.0 / (1.0 / pp + lam * (1.0 - lam));
        assert!((f.covariance()[[0, 0]] - p2).abs() < 1e-15);
        assert!((f.estimate()[0] - (m1 + p2 * -1.0 * (0.0 - lam))).abs() < 1e-15);
    }

    #[test]
    fn window_update_matches_sequential_information_form() {
        // With q = 0, β = 1, a W = 2 window equals the joint precision update.
        let mut f = Ssppf::new(SsppfConfig::new(3, 0.0, 1.0)).unwrap();
        let x = array![[1.0, 0.5, -0.2], [1.0, -0.1, 0.7]];
        f.update(array![1.0, 0.0].view(), x.view()).unwrap();
        let h = 0.25;
        let expect_prec = Array2::<f64>::eye(3) + x.t().dot(&x) * h;
        let prec = crate::linalg::spd_inverse(f.covariance().view()).unwrap();
        assert!((&prec - &expect_prec).mapv(f64::abs).sum() < 1e-12);
        let eps = array![0.5, -0.5];
        let expect_mean = f.covariance().dot(&x.t().dot(&eps));
        assert!((f.estimate() - &expect_mean).mapv(f64::abs).sum() < 1e-12);
    }

    #[test]
    fn covariance_stays_symmetric_over_long_runs() {
        let mut f = Ssppf::new(SsppfConfig::new(4, 1e-4, 0.999)).unwrap();
        for i in 0..10_000 {
            let t = i as f64;
            let x = array![[1.0, (0.3 * t).sin(), (0.7 * t).cos(), (1.1 * t).sin()]];
            let n = array![((i * 7919) % 9 == 0) as u8 as f64];
            f.update(n.view(), x.view()).unwrap();
        }
        let p = f.covariance();
        assert!((p - &p.t()).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b)) < 1e-12);
        assert!(is_positive_definite(p.view()));
    }

    #[test]
    fn rejects_indefinite_state() {
        let cfg = SsppfConfig::new(2, 0.0, 1.0);
        let mut f = Ssppf::from_parts(cfg, array![0.0, 0.0], array![[1.0, 0.0], [0.0, -1.0]], 0).unwrap();
        assert!(matches!(
            f.update(array![1.0].view(), array![[0.0, 1.0]].view()),
            Err(Error::Diverged(_))
        ));
    }
}
