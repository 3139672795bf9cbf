//! Proximal-gradient building blocks for the ℓ1-penalized likelihood.

use ndarray::{Array1, ArrayView1, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::model::ParamVector;

/// Step size, penalty weight, iterations per window and step-size constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxHyper {
    pub step_size: f64,
    pub gamma: f64,
    pub iterations: usize,
    /// Constant `c ≥ 1/4` of the default step-size rule.
    pub c: f64,
    /// Shrink the baseline coordinate `μ` along with `θ`.
    pub penalize_intercept: bool,
}

impl ProxHyper {
    pub fn new(step_size: f64, gamma: f64, iterations: usize) -> Result<Self> {
        let h = Self {
            step_size,
            gamma,
            iterations,
            c: 0.25,
            penalize_intercept: true,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn with_intercept_penalty(mut self, penalize: bool) -> Self {
        self.penalize_intercept = penalize;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "regularization weight must be non-negative, got {}",
                self.gamma
            )));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidParameter(
                "at least one iteration per window is required".into(),
            ));
        }
        if self.c < 0.25 {
            return Err(Error::InvalidParameter(format!(
                "step-size constant must be at least 1/4, got {}",
                self.c
            )));
        }
        Ok(())
    }

    /// Shrinkage level `γα` applied by one proximal step.
    pub fn threshold(&self) -> f64 {
        self.gamma * self.step_size
    }
}

/// `sgn(x)(|x| - τ)₊`.
#[inline]
pub fn soft_threshold_scalar(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

/// Elementwise soft thresholding at level `tau`.
pub fn soft_threshold(x: ArrayView1<f64>, tau: f64) -> Result<Array1<f64>> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold must be non-negative, got {tau}"
        )));
    }
    Ok(x.mapv(|v| soft_threshold_scalar(v, tau)))
}

/// In-place `w ← S_{τ}(w + α g)`; coordinate 0 is left unshrunk when
/// `penalize_intercept` is false.
pub(crate) fn prox_ascent_in_place(
    w: &mut Array1<f64>,
    g: &Array1<f64>,
    step: f64,
    tau: f64,
    penalize_intercept: bool,
) {
    let intercept = w[0] + step * g[0];
    Zip::from(&mut *w).and(g).for_each(|wi, &gi| {
        *wi = soft_threshold_scalar(*wi + step * gi, tau);
    });
    if !penalize_intercept {
        w[0] = intercept;
    }
}

/// `S_{γα}(ω + α g)`: one ascent step on the log-likelihood followed by shrinkage.
pub fn proximal_step(w: &ParamVector, g: ArrayView1<f64>, hyper: &ProxHyper) -> Result<ParamVector> {
    check_dim("gradient vs parameter", w.dim(), g.len())?;
    let tau = hyper.threshold();
    let mut out = w.as_array() + &(&g * hyper.step_size);
    for (i, v) in out.iter_mut().enumerate() {
        if i > 0 || hyper.penalize_intercept {
            *v = soft_threshold_scalar(*v, tau);
        }
    }
    Ok(ParamVector::from_array(out))
}

/// `α = (1 - β) / (c M W σ̄²)`.
pub fn default_step_size(beta: f64, m: usize, w: usize, sigma_bar_sq: f64, c: f64) -> Result<f64> {
    if beta >= 1.0 {
        return Err(Error::InvalidParameter(
            "β = 1 has no finite effective window; supply the step size explicitly".into(),
        ));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "forgetting factor must lie in (0, 1), got {beta}"
        )));
    }
    if m == 0 || w == 0 {
        return Err(Error::InvalidParameter("M and W must be at least 1".into()));
    }
    if !(sigma_bar_sq > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "covariate variance must be positive, got {sigma_bar_sq}"
        )));
    }
    if c < 0.25 {
        return Err(Error::InvalidParameter(format!(
            "step-size constant must be at least 1/4, got {c}"
        )));
    }
    Ok((1.0 - beta) / (c * m as f64 * w as f64 * sigma_bar_sq))
}
