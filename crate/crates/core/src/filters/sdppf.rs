use ndarray::{Array1, ArrayView1, ArrayView2};

use super::{check_window, cif_and_innovation, ensure_finite, PointProcessFilter};
use crate::error::{Error, Result};

/// Steepest-descent point process filter: `ω̂_k = ω̂_{k-1} + ρ X_k' ε_k(ω̂_{k-1})`.
#[derive(Debug, Clone)]
pub struct Sdppf {
    rho: f64,
    w_hat: Array1<f64>,
    k: usize,
}

impl Sdppf {
    pub fn new(dim: usize, rho: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "step must be positive, got {rho}"
            )));
        }
        Ok(Self {
            rho,
            w_hat: Array1::zeros(dim),
            k: 0,
        })
    }

    pub fn step(&self) -> f64 {
        self.rho
    }
}

impl PointProcessFilter for Sdppf {
    fn name(&self) -> &'static str {
        "sdppf"
    }

    fn dim(&self) -> usize {
        self.w_hat.len()
    }

    fn update(&mut self, n: ArrayView1<f64>, x: ArrayView2<f64>) -> Result<()> {
        check_window(self.w_hat.len(), n, x)?;
        let (_, eps) = cif_and_innovation(x, n, &self.w_hat);
        self.w_hat.scaled_add(self.rho, &x.t().dot(&eps));
        self.k += 1;
        ensure_finite("sdppf estimate", self.w_hat.iter())
    }

    fn estimate(&self) -> &Array1<f64> {
        &self.w_hat
    }

    fn windows_seen(&self) -> usize {
        self.k
    }
}
