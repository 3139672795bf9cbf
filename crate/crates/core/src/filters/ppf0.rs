use ndarray::{Array1, ArrayView1, ArrayView2};

use super::{
    check_window, cif_and_innovation, ensure_finite, FilterConfig, IterationSemantics,
    PointProcessFilter,
};
use crate::error::Result;
use crate::prox::prox_ascent_in_place;

/// Zeroth-order ℓ1-regularized point process filter.
///
/// Carries `g_k = β g_{k-1} + X_k' ε_k`, where each window's innovation is
/// frozen at the iterate it was evaluated with.
#[derive(Debug, Clone)]
pub struct Ppf0 {
    config: FilterConfig,
    g: Array1<f64>,
    w_hat: Array1<f64>,
    k: usize,
}

impl Ppf0 {
    /// Starts from `ω̂_0 = 0`, `g_0 = 0`.
    pub fn new(config: FilterConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            g: Array1::zeros(config.dim),
            w_hat: Array1::zeros(config.dim),
            config,
            k: 0,
        })
    }

    /// Rebuilds a filter from stored state.
    pub fn from_parts(config: FilterConfig, g: Array1<f64>, w_hat: Array1<f64>, k: usize) -> Result<Self> {
        config.validate()?;
        crate::error::check_dim("ppf0 gradient", config.dim, g.len())?;
        crate::error::check_dim("ppf0 estimate", config.dim, w_hat.len())?;
        Ok(Self { config, g, w_hat, k })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    /// Running gradient `g_k` from the last iteration of the last window.
    pub fn gradient(&self) -> &Array1<f64> {
        &self.g
    }
}

impl PointProcessFilter for Ppf0 {
    fn name(&self) -> &'static str {
        "l1-ppf0"
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn update(&mut self, n: ArrayView1<f64>, x: ArrayView2<f64>) -> Result<()> {
        check_window(self.config.dim, n, x)?;
        let FilterConfig {
            beta,
            hyper,
            semantics,
            ..
        } = self.config;
        let tau = hyper.threshold();
        let mut decayed = &self.g * beta;
        for ell in 0..hyper.iterations {
            let (_, eps) = cif_and_innovation(x, n, &self.w_hat);
            let contrib = x.t().dot(&eps);
            if semantics == IterationSemantics::Literal && ell > 0 {
                decayed = &self.g * beta;
            }
            self.g = &decayed + &contrib;
            prox_ascent_in_place(
                &mut self.w_hat,
                &self.g,
                hyper.step_size,
                tau,
                hyper.penalize_intercept,
            );
        }
        self.k += 1;
        ensure_finite("l1-ppf0 gradient", self.g.iter())?;
        ensure_finite("l1-ppf0 estimate", self.w_hat.iter())
    }

    fn estimate(&self) -> &Array1<f64> {
        &self.w_hat
    }

    fn windows_seen(&self) -> usize {
        self.k
    }
}
