//! Recursive estimators of the time-varying parameter vector.
//!
//! The two ℓ1-regularized filters track the maximizer of the exponentially
//! weighted, ℓ1-penalized log-likelihood with a few proximal-gradient
//! iterations per window. They differ in how the gradient contribution of
//! past windows is carried forward:
//!
//! * [`Ppf0`] freezes past innovations at the iterate they were computed
//!   with (zeroth-order expansion of the intensity), so it only stores the
//!   running gradient `g_k`. Cost per iteration is linear in `M`.
//! * [`Ppf1`] keeps a first-order expansion, which requires the running
//!   vector `u_k` and the running information matrix `B_k`. Cost per
//!   iteration is quadratic in `M`.
//!
//! [`Sdppf`] and [`Ssppf`] are the classical steepest-descent and
//! Gaussian-approximation point-process filters used as baselines; [`nrc`]
//! is the linear reverse-correlation fit and [`batch`] solves the penalized
//! objective to convergence for use as an oracle.

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub mod batch;
pub mod nrc;
mod ppf0;
mod ppf1;
mod sdppf;
pub mod snapshot;
mod ssppf;

pub use batch::{batch_solve, kkt_residual, BatchOptions, BatchSolution};
pub use nrc::{nrc_estimate, nrc_predict};
pub use ppf0::Ppf0;
pub use ppf1::Ppf1;
pub use sdppf::Sdppf;
pub use ssppf::{Ssppf, SsppfConfig};

/// How the forgetting factor interacts with several iterations per window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationSemantics {
    /// Past statistics decay once per window; the current window's
    /// contribution is recomputed at every inner iterate.
    #[default]
    OncePerWindow,
    /// Decay and accumulate at every inner iteration, as the pseudo-code
    /// loops read when taken literally.
    Literal,
}

/// Shared configuration of the ℓ1-regularized filters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub dim: usize,
    pub window_len: usize,
    pub beta: f64,
    pub hyper: crate::prox::ProxHyper,
    #[serde(default)]
    pub semantics: IterationSemantics,
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window_len == 0 {
            return Err(Error::InvalidParameter("M and W must be at least 1".into()));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "forgetting factor must lie in (0, 1], got {}",
                self.beta
            )));
        }
        self.hyper.validate()
    }
}

/// Common streaming interface: one call per window, in window order.
pub trait PointProcessFilter: Send {
    fn name(&self) -> &'static str;

    fn dim(&self) -> usize;

    /// Consumes window `k`'s spikes `n` (length `W`) and covariates `x` (`W × M`).
    fn update(&mut self, n: ArrayView1<f64>, x: ArrayView2<f64>) -> Result<()>;

    /// Current estimate `ω̂_k`.
    fn estimate(&self) -> &Array1<f64>;

    /// Number of windows consumed so far.
    fn windows_seen(&self) -> usize;
}

pub(crate) fn check_window(dim: usize, n: ArrayView1<f64>, x: ArrayView2<f64>) -> Result<()> {
    check_dim("design columns vs filter dimension", dim, x.ncols())?;
    check_dim("spikes vs design rows", x.nrows(), n.len())
}

pub(crate) fn ensure_finite<'a>(
    what: &'static str,
    mut values: impl Iterator<Item = &'a f64>,
) -> Result<()> {
    if values.all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Spiking probabilities and innovations of one window at `w`.
pub(crate) fn cif_and_innovation(
    x: ArrayView2<f64>,
    n: ArrayView1<f64>,
    w: &Array1<f64>,
) -> (Array1<f64>, Array1<f64>) {
    let lam = x.dot(w).mapv(|e| {
        let p = crate::model::logistic(e);
        crate::model::note_saturation(p);
        p
    });
    let eps = &n - &lam;
    (lam, eps)
}
