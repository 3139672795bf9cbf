use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::{
    check_window, cif_and_innovation, ensure_finite, FilterConfig, IterationSemantics,
    PointProcessFilter,
};
use crate::error::{check_dim, Result};
use crate::linalg::{add_weighted_gram, sym_matvec_sparse};
use crate::prox::prox_ascent_in_place;

/// First-order ℓ1-regularized point process filter.
///
/// Maintains
///
/// ```text
/// u_k = β u_{k-1} + X_k'(ε_k + Λ_k X_k ω̂)
/// B_k = β B_{k-1} + X_k' Λ_k X_k
/// ```
///
/// with `Λ_k = diag(λΔ(1 - λΔ))`, and takes proximal steps along
/// `g_k = u_k - B_k ω̂`.
#[derive(Debug, Clone)]
pub struct Ppf1 {
    config: FilterConfig,
    u: Array1<f64>,
    b: Array2<f64>,
    w_hat: Array1<f64>,
    k: usize,
}

/// Current-window terms, kept so that a later inner iterate can replace them.
struct Contribution {
    u: Array1<f64>,
    lam_var: Array1<f64>,
}

impl Ppf1 {
    /// Starts from `ω̂_0 = 0`, `u_0 = 0`, `B_0 = 0`.
    pub fn new(config: FilterConfig) -> Result<Self> {
        config.validate()?;
        let m = config.dim;
        Ok(Self {
            u: Array1::zeros(m),
            b: Array2::zeros((m, m)),
            w_hat: Array1::zeros(m),
            config,
            k: 0,
        })
    }

    pub fn from_parts(
        config: FilterConfig,
        u: Array1<f64>,
        b: Array2<f64>,
        w_hat: Array1<f64>,
        k: usize,
    ) -> Result<Self> {
        config.validate()?;
        check_dim("ppf1 u", config.dim, u.len())?;
        check_dim("ppf1 B rows", config.dim, b.nrows())?;
        check_dim("ppf1 B cols", config.dim, b.ncols())?;
        check_dim("ppf1 estimate", config.dim, w_hat.len())?;
        Ok(Self {
            config,
            u,
            b,
            w_hat,
            k,
        })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn u(&self) -> &Array1<f64> {
        &self.u
    }

    /// Running information matrix `B_k`.
    pub fn information(&self) -> &Array2<f64> {
        &self.b
    }

    /// `g_k = u_k - B_k ω̂_k` at the current estimate.
    pub fn gradient(&self) -> Array1<f64> {
        &self.u - &sym_matvec_sparse(&self.b, &self.w_hat)
    }

    fn contribution(
        x: ArrayView2<f64>,
        n: ArrayView1<f64>,
        w: &Array1<f64>,
    ) -> Contribution {
        let (lam, eps) = cif_and_innovation(x, n, w);
        let lam_var = lam.mapv(|p| p * (1.0 - p));
        let eta = x.dot(w);
        let resid = &eps + &(&lam_var * &eta);
        Contribution {
            u: x.t().dot(&resid),
            lam_var,
        }
    }
}

impl PointProcessFilter for Ppf1 {
    fn name(&self) -> &'static str {
        "l1-ppf1"
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
        let mut previous: Option<Contribution> = None;
        for _ in 0..hyper.iterations {
            let c = Self::contribution(x, n, &self.w_hat);
            match (semantics, previous.as_ref()) {
                (IterationSemantics::OncePerWindow, Some(prev)) => {
                    self.u += &(&c.u - &prev.u);
                    let delta = &c.lam_var - &prev.lam_var;
                    add_weighted_gram(&mut self.b, x, delta.view());
                }
                _ => {
                    if beta != 1.0 {
                        self.u *= beta;
                        self.b *= beta;
                    }
                    self.u += &c.u;
                    add_weighted_gram(&mut self.b, x, c.lam_var.view());
                }
            }
            let g = &self.u - &sym_matvec_sparse(&self.b, &self.w_hat);
            prox_ascent_in_place(
                &mut self.w_hat,
                &g,
                hyper.step_size,
                tau,
                hyper.penalize_intercept,
            );
            previous = Some(c);
        }
        self.k += 1;
        ensure_finite("l1-ppf1 u", self.u.iter())?;
        ensure_finite("l1-ppf1 estimate", self.w_hat.iter())?;
        // Diagonal of B suffices to catch overflow without an O(M²) scan.
        ensure_finite("l1-ppf1 B", self.b.diag().iter())
    }

    fn estimate(&self) -> &Array1<f64> {
        &self.w_hat
    }

    fn windows_seen(&self) -> usize {
        self.k
    }
}
