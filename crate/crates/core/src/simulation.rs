//! Synthetic scenarios, ensemble metrics and the two simulation studies.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confidence::{ConfidenceConfig, ConfidenceTracker, IntervalRecord};
use crate::crossval::{cross_validate_gamma, CvResult};
use crate::error::{check_dim, Error, Result};
use crate::filters::{
    nrc_estimate, FilterConfig, IterationSemantics, PointProcessFilter, Ppf0, Ppf1, Sdppf, Ssppf,
    SsppfConfig,
};
use crate::gof::{acf_test, burn_in_bins, ks_test, time_rescale, AcfResult, KsResult, Rescaling};
use crate::model::{fill_design, logistic, ParamVector, SpikeTrain, StimulusSequence};
use crate::prox::{default_step_size, ProxHyper};

/// `θ` with `L` nonzero entries on a uniformly random support, Gaussian
/// values scaled to `‖θ‖₂ = norm`; `μ = 0`.
pub fn gen_sparse_param<R: Rng + ?Sized>(m: usize, l: usize, norm: f64, rng: &mut R) -> Result<ParamVector> {
    if m == 0 || l >= m {
        return Err(Error::InvalidParameter(format!("sparsity L = {l} must be below M = {m}")));
    }
    let mut w = Array1::zeros(m);
    if l == 0 {
        return Ok(ParamVector::from_array(w));
    }
    let support = sample(rng, m - 1, l);
    let values: Vec<f64> = (0..l).map(|_| StandardNormal.sample(rng)).collect();
    let scale = norm / values.iter().map(|v| v * v).sum::<f64>().sqrt();
    for (idx, v) in support.iter().zip(values) {
        w[idx + 1] = v * scale;
    }
    Ok(ParamVector::from_array(w))
}

/// Indices (in `ω` coordinates, so `1..M`) of the nonzero entries of `θ`.
pub fn support_of(w: &ParamVector) -> Vec<usize> {
    (1..w.dim()).filter(|&j| w.as_array()[j] != 0.0).collect()
}

/// `n` i.i.d. `N(0, σ²)` samples without pre-history.
pub fn gen_stimulus<R: Rng + ?Sized>(n: usize, sigma_sq: f64, rng: &mut R) -> Result<StimulusSequence> {
    gen_stimulus_padded(n, 0, sigma_sq, rng)
}

/// `pad` pre-history samples followed by `n` samples, all i.i.d. `N(0, σ²)`.
pub fn gen_stimulus_padded<R: Rng + ?Sized>(
    n: usize,
    pad: usize,
    sigma_sq: f64,
    rng: &mut R,
) -> Result<StimulusSequence> {
    if n == 0 {
        return Err(Error::InvalidParameter("stimulus length must be at least 1".into()));
    }
    if !(sigma_sq >= 0.0 && sigma_sq.is_finite()) {
        return Err(Error::InvalidParameter(format!("variance must be non-negative, got {sigma_sq}")));
    }
    let normal = Normal::new(0.0, sigma_sq.sqrt()).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let values = (0..n + pad).map(|_| normal.sample(rng)).collect();
    StimulusSequence::new(values, pad)
}

/// Independent Bernoulli draws with success probabilities `lam`.
pub fn sample_spikes<R: Rng + ?Sized>(lam: &[f64], delta: f64, rng: &mut R) -> Result<SpikeTrain> {
    if let Some(p) = lam.iter().find(|p| !(**p >= 0.0 && **p <= 1.0)) {
        return Err(Error::InvalidParameter(format!("spiking probability {p} outside [0, 1]")));
    }
    let bins = lam.iter().map(|&p| (rng.random::<f64>() < p) as u8).collect();
    SpikeTrain::new(bins, delta)
}

/// `Ê‖ω̂ - ω‖² / Ê‖ω‖²` over an ensemble.
pub fn mse_metric(estimates: &[Array1<f64>], truths: &[Array1<f64>]) -> Result<f64> {
    check_dim("ensemble sizes", estimates.len(), truths.len())?;
    let mut err = 0.0;
    let mut energy = 0.0;
    for (e, t) in estimates.iter().zip(truths) {
        check_dim("estimate vs truth", t.len(), e.len())?;
        err += (e - t).mapv(|v| v * v).sum();
        energy += t.dot(t);
    }
    if energy == 0.0 {
        return Err(Error::Degenerate("true parameters have zero energy".into()));
    }
    Ok(err / energy)
}

/// `Ê‖θ̂ - (θ̂)_S‖² / Ê‖θ̂‖²`; estimates are full `ω̂` vectors and supports
/// use `ω` indices. Zero estimate energy gives 0.
pub fn spm_metric(estimates: &[Array1<f64>], supports: &[Vec<usize>]) -> Result<f64> {
    check_dim("ensemble sizes", estimates.len(), supports.len())?;
    let mut off = 0.0;
    let mut energy = 0.0;
    for (e, s) in estimates.iter().zip(supports) {
        let (o, en) = off_support_energy(e, s);
        off += o;
        energy += en;
    }
    Ok(if energy == 0.0 { 0.0 } else { off / energy })
}

fn off_support_energy(w: &Array1<f64>, support: &[usize]) -> (f64, f64) {
    let mut off = 0.0;
    let mut energy = 0.0;
    for (j, &v) in w.iter().enumerate().skip(1) {
        let e = v * v;
        energy += e;
        if !support.contains(&j) {
            off += e;
        }
    }
    (off, energy)
}

/// `10 log₁₀ x`; `-∞` for `x = 0`.
pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Baseline `μ` with `E[logistic(μ + sZ)] = target`, `Z ~ N(0, 1)`.
///
/// With an i.i.d. stimulus of variance `σ²`, `x'θ` has standard deviation
/// `s = σ ‖θ‖₂`.
pub fn calibrate_mu(s: f64, target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidParameter(format!("target rate must lie in (0, 1), got {target}")));
    }
    let mean_rate = |mu: f64| {
        if s == 0.0 {
            return logistic(mu);
        }
        let n = 4000;
        let h = 20.0 / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let z = -10.0 + i as f64 * h;
            let wgt = if i == 0 || i == n { 0.5 } else { 1.0 };
            acc += wgt * (-0.5 * z * z).exp() * logistic(mu + s * z);
        }
        acc * h / (2.0 * std::f64::consts::PI).sqrt()
    };
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_rate(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Piecewise-linear course of one coordinate over window index `k`;
/// constant before the first and after the last knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub coord: usize,
    pub knots: Vec<(usize, f64)>,
}

impl Trajectory {
    pub fn value(&self, k: usize) -> f64 {
        let first = self.knots[0];
        if k <= first.0 {
            return first.1;
        }
        for pair in self.knots.windows(2) {
            let ((k0, v0), (k1, v1)) = (pair[0], pair[1]);
            if k <= k1 {
                let frac = (k - k0) as f64 / (k1 - k0) as f64;
                return v0 + frac * (v1 - v0);
            }
        }
        self.knots[self.knots.len() - 1].1
    }
}

/// Generative setting of one simulated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub delta: f64,
    pub window_len: usize,
    pub windows: usize,
    pub stimulus_var: f64,
    /// Parameter at every window unless overridden by a trajectory.
    pub base: ParamVector,
    pub schedule: Vec<Trajectory>,
}

/// One realization: stimulus with pre-history, true per-bin probabilities and spikes.
#[derive(Debug, Clone)]
pub struct SimData {
    pub stimulus: StimulusSequence,
    pub lam: Vec<f64>,
    pub spikes: SpikeTrain,
}

impl Scenario {
    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn bins(&self) -> usize {
        self.windows * self.window_len
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.windows == 0 {
            return Err(Error::InvalidParameter("W and K must be at least 1".into()));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidParameter(format!("bin width must be positive, got {}", self.delta)));
        }
        for t in &self.schedule {
            if t.coord >= self.dim() || t.knots.is_empty() {
                return Err(Error::InvalidParameter(format!("bad trajectory for coordinate {}", t.coord)));
            }
            if t.knots.windows(2).any(|p| p[1].0 <= p[0].0) {
                return Err(Error::InvalidParameter("trajectory knots must increase".into()));
            }
        }
        Ok(())
    }

    /// True `ω_k`.
    pub fn truth(&self, k: usize) -> Array1<f64> {
        let mut w = self.base.as_array().clone();
        for t in &self.schedule {
            w[t.coord] = t.value(k);
        }
        w
    }

    pub fn simulate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SimData> {
        self.validate()?;
        let m = self.dim();
        let stimulus = gen_stimulus_padded(self.bins(), m.saturating_sub(1), self.stimulus_var, rng)?;
        let mut lam = Vec::with_capacity(self.bins());
        let mut x = Array2::zeros((self.window_len, m));
        for k in 1..=self.windows {
            fill_design(&stimulus, m, k, x.view_mut())?;
            let w = self.truth(k);
            lam.extend(x.dot(&w).iter().map(|&e| logistic(e)));
        }
        let spikes = sample_spikes(&lam, self.delta, rng)?;
        Ok(SimData { stimulus, lam, spikes })
    }
}

/// Filters compared in the studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    #[serde(rename = "l1_ppf1")]
    Ppf1,
    #[serde(rename = "l1_ppf0")]
    Ppf0,
    Ssppf,
    Sdppf,
}

impl FilterKind {
    pub const ALL: [FilterKind; 4] = [FilterKind::Ppf1, FilterKind::Ppf0, FilterKind::Ssppf, FilterKind::Sdppf];

    pub fn label(self) -> &'static str {
        match self {
            FilterKind::Ppf1 => "l1_ppf1",
            FilterKind::Ppf0 => "l1_ppf0",
            FilterKind::Ssppf => "ssppf",
            FilterKind::Sdppf => "sdppf",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "l1_ppf1" | "ppf1" => Ok(FilterKind::Ppf1),
            "l1_ppf0" | "ppf0" => Ok(FilterKind::Ppf0),
            "ssppf" => Ok(FilterKind::Ssppf),
            "sdppf" => Ok(FilterKind::Sdppf),
            other => Err(Error::InvalidParameter(format!("unknown filter {other:?}"))),
        }
    }
}

/// Settings of an ℓ1-regularized filter. A missing step size follows
/// `α = (1 - β) / (c M W σ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct L1Settings {
    pub beta: f64,
    pub gamma: f64,
    #[serde(default)]
    pub step_size: Option<f64>,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_true")]
    pub penalize_intercept: bool,
    #[serde(default)]
    pub semantics: IterationSemantics,
}

fn default_c() -> f64 {
    1.0
}

fn default_iterations() -> usize {
    1
}

fn default_true() -> bool {
    true
}

impl L1Settings {
    pub fn new(beta: f64, gamma: f64) -> Self {
        Self {
            beta,
            gamma,
            step_size: None,
            c: default_c(),
            iterations: 1,
            penalize_intercept: true,
            semantics: IterationSemantics::OncePerWindow,
        }
    }

    pub fn config(&self, dim: usize, window_len: usize, sigma_sq: f64) -> Result<FilterConfig> {
        let step = match self.step_size {
            Some(a) => a,
            None => default_step_size(self.beta, dim, window_len, sigma_sq, self.c)?,
        };
        let mut hyper = ProxHyper::new(step, self.gamma, self.iterations)?;
        hyper.c = self.c;
        hyper.penalize_intercept = self.penalize_intercept;
        let cfg = FilterConfig {
            dim,
            window_len,
            beta: self.beta,
            hyper,
            semantics: self.semantics,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsppfSettings {
    pub q: f64,
    #[serde(default = "one")]
    pub forgetting: f64,
    #[serde(default = "one")]
    pub prior_variance: f64,
}

fn one() -> f64 {
    1.0
}

/// Settings of every filter a study may run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSuite {
    pub ppf1: L1Settings,
    pub ppf0: L1Settings,
    pub ssppf: SsppfSettings,
    pub sdppf_step: f64,
}

impl FilterSuite {
    pub fn build(
        &self,
        kind: FilterKind,
        dim: usize,
        window_len: usize,
        sigma_sq: f64,
    ) -> Result<Box<dyn PointProcessFilter>> {
        Ok(match kind {
            FilterKind::Ppf1 => Box::new(Ppf1::new(self.ppf1.config(dim, window_len, sigma_sq)?)?),
            FilterKind::Ppf0 => Box::new(Ppf0::new(self.ppf0.config(dim, window_len, sigma_sq)?)?),
            FilterKind::Sdppf => Box::new(Sdppf::new(dim, self.sdppf_step)?),
            FilterKind::Ssppf => {
                let mut cfg = SsppfConfig::new(dim, self.ssppf.q, self.ssppf.forgetting);
                cfg.prior_variance = self.ssppf.prior_variance;
                Box::new(Ssppf::new(cfg)?)
            }
        })
    }
}

/// Per-window ensemble sums; ratios of these give MSE and SPM curves.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricSums {
    pub err: Vec<f64>,
    pub energy: Vec<f64>,
    pub off: Vec<f64>,
    pub est_energy: Vec<f64>,
    pub count: usize,
}

impl MetricSums {
    pub fn zeros(len: usize) -> Self {
        Self {
            err: vec![0.0; len],
            energy: vec![0.0; len],
            off: vec![0.0; len],
            est_energy: vec![0.0; len],
            count: 0,
        }
    }

    fn record(&mut self, idx: usize, est: &Array1<f64>, truth: &Array1<f64>, support: &[usize]) {
        self.err[idx] += (est - truth).mapv(|v| v * v).sum();
        self.energy[idx] += truth.dot(truth);
        let (off, en) = off_support_energy(est, support);
        self.off[idx] += off;
        self.est_energy[idx] += en;
    }

    pub fn merge(&mut self, other: &MetricSums) {
        for (a, b) in [
            (&mut self.err, &other.err),
            (&mut self.energy, &other.energy),
            (&mut self.off, &other.off),
            (&mut self.est_energy, &other.est_energy),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.count += other.count;
    }

    pub fn mse(&self) -> Vec<f64> {
        self.err.iter().zip(&self.energy).map(|(e, n)| e / n).collect()
    }

    pub fn spm(&self) -> Vec<f64> {
        self.off
            .iter()
            .zip(&self.est_energy)
            .map(|(o, e)| if *e == 0.0 { 0.0 } else { o / e })
            .collect()
    }
}

/// Study 1: stationary sparse parameter, ensemble learning curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Study1Config {
    pub delta: f64,
    pub window_len: usize,
    pub duration: f64,
    pub dim: usize,
    pub sparsity: usize,
    pub theta_norm: f64,
    pub stimulus_var: f64,
    /// Mean spiking probability per bin used to calibrate `μ`.
    pub target_rate: f64,
    pub realizations: usize,
    pub seed: u64,
    pub filters: Vec<FilterKind>,
    pub suite: FilterSuite,
    /// Curves are recorded at every `record_every`-th window.
    pub record_every: usize,
    /// Trailing fraction of windows averaged for steady-state values.
    pub steady_fraction: f64,
    /// Penalty grid; when non-empty each ℓ1 filter's `γ` is chosen by even/odd
    /// cross-validation on a separate pilot realization.
    #[serde(default)]
    pub cv_grid: Vec<f64>,
}

impl Default for Study1Config {
    fn default() -> Self {
        Self {
            delta: 0.001,
            window_len: 1,
            duration: 30.0,
            dim: 101,
            sparsity: 3,
            theta_norm: 10.0,
            stimulus_var: 0.01,
            target_rate: 0.13,
            realizations: 200,
            seed: 1,
            filters: FilterKind::ALL.to_vec(),
            suite: FilterSuite {
                ppf1: L1Settings::new(0.9975, 0.5),
                ppf0: L1Settings::new(0.9975, 0.75),
                ssppf: SsppfSettings {
                    q: 0.0,
                    forgetting: 0.999,
                    prior_variance: 1.0,
                },
                sdppf_step: 1.0,
            },
            record_every: 10,
            steady_fraction: 0.2,
            cv_grid: vec![0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0],
        }
    }
}

impl Study1Config {
    pub fn windows(&self) -> usize {
        (self.duration / (self.delta * self.window_len as f64)).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::InvalidParameter("at least one realization is required".into()));
        }
        if self.filters.is_empty() {
            return Err(Error::InvalidParameter("no filters selected".into()));
        }
        if self.windows() == 0 || self.record_every == 0 {
            return Err(Error::InvalidParameter("duration and record stride must be positive".into()));
        }
        if !(self.steady_fraction > 0.0 && self.steady_fraction <= 1.0) {
            return Err(Error::InvalidParameter("steady fraction must lie in (0, 1]".into()));
        }
        if self.sparsity >= self.dim {
            return Err(Error::InvalidParameter("sparsity must be below M".into()));
        }
        Ok(())
    }

    fn scenario<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Scenario> {
        let mut w = gen_sparse_param(self.dim, self.sparsity, self.theta_norm, rng)?;
        let s = (self.stimulus_var * w.theta().dot(&w.theta())).sqrt();
        w.as_array_mut()[0] = calibrate_mu(s, self.target_rate)?;
        Ok(Scenario {
            delta: self.delta,
            window_len: self.window_len,
            windows: self.windows(),
            stimulus_var: self.stimulus_var,
            base: w,
            schedule: Vec::new(),
        })
    }
}

/// Steady-state sums of one realization for one filter.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SteadyState {
    pub err: f64,
    pub energy: f64,
    pub off: f64,
    pub est_energy: f64,
}

impl SteadyState {
    pub fn mse(&self) -> f64 {
        self.err / self.energy
    }

    pub fn spm(&self) -> f64 {
        if self.est_energy == 0.0 {
            0.0
        } else {
            self.off / self.est_energy
        }
    }
}

#[derive(Debug, Clone)]
pub struct Study1Result {
    /// Window indices at which curves are recorded.
    pub windows: Vec<usize>,
    pub curves: BTreeMap<FilterKind, MetricSums>,
    /// `[realization][filter]` steady-state sums, in `filters` order.
    pub steady: Vec<Vec<SteadyState>>,
    pub filters: Vec<FilterKind>,
    pub mean_rate: f64,
    /// Settings actually used, after cross-validation.
    pub suite: FilterSuite,
    pub cv: Vec<(FilterKind, CvResult)>,
}

impl Study1Result {
    /// Ensemble steady-state MSE in dB over the given realizations.
    pub fn steady_mse_db(&self, filter: FilterKind, realizations: &[usize]) -> f64 {
        let i = self.filters.iter().position(|&f| f == filter).expect("filter in study");
        let (e, n) = realizations
            .iter()
            .fold((0.0, 0.0), |(e, n), &r| (e + self.steady[r][i].err, n + self.steady[r][i].energy));
        to_db(e / n)
    }

    /// Ensemble steady-state SPM (ratio of sums) over the given realizations.
    pub fn steady_spm(&self, filter: FilterKind, realizations: &[usize]) -> f64 {
        let i = self.filters.iter().position(|&f| f == filter).expect("filter in study");
        let (o, e) = realizations
            .iter()
            .fold((0.0, 0.0), |(o, e), &r| (o + self.steady[r][i].off, e + self.steady[r][i].est_energy));
        if e == 0.0 {
            0.0
        } else {
            o / e
        }
    }
}

/// Independent, reproducible generator for realization `r` of a study.
pub fn realization_rng(seed: u64, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((r as u64).wrapping_add(1));
    rng
}

/// Cross-validates `γ` of the ℓ1 filters in `filters` on one pilot realization.
pub fn select_gammas(
    scenario: &Scenario,
    data: &SimData,
    suite: &FilterSuite,
    filters: &[FilterKind],
    grid: &[f64],
) -> Result<(FilterSuite, Vec<(FilterKind, CvResult)>)> {
    let mut tuned = *suite;
    let mut out = Vec::new();
    for &kind in filters {
        let settings = match kind {
            FilterKind::Ppf1 => &mut tuned.ppf1,
            FilterKind::Ppf0 => &mut tuned.ppf0,
            _ => continue,
        };
        let base = *settings;
        let cv = cross_validate_gamma(&data.stimulus, &data.spikes, scenario.window_len, grid, |gamma| {
            let mut s = *suite;
            let l1 = L1Settings { gamma, ..base };
            match kind {
                FilterKind::Ppf1 => s.ppf1 = l1,
                _ => s.ppf0 = l1,
            }
            s.build(kind, scenario.dim(), scenario.window_len, scenario.stimulus_var)
        })?;
        settings.gamma = cv.best;
        out.push((kind, cv));
    }
    Ok((tuned, out))
}

pub fn study1(cfg: &Study1Config) -> Result<Study1Result> {
    cfg.validate()?;
    let (suite, cv) = if cfg.cv_grid.is_empty() {
        (cfg.suite, Vec::new())
    } else {
        let mut rng = realization_rng(cfg.seed, usize::MAX);
        let scenario = cfg.scenario(&mut rng)?;
        let data = scenario.simulate(&mut rng)?;
        select_gammas(&scenario, &data, &cfg.suite, &cfg.filters, &cfg.cv_grid)?
    };
    let k_total = cfg.windows();
    let recorded: Vec<usize> = (1..=k_total).filter(|k| k % cfg.record_every == 0).collect();
    let steady_from = k_total - ((k_total as f64 * cfg.steady_fraction).round() as usize).max(1) + 1;

    let runs: Vec<(Vec<MetricSums>, Vec<SteadyState>, f64)> = (0..cfg.realizations)
        .into_par_iter()
        .map(|r| -> Result<_> {
            let mut rng = realization_rng(cfg.seed, r);
            let scenario = cfg.scenario(&mut rng)?;
            let data = scenario.simulate(&mut rng)?;
            let support = support_of(&scenario.base);
            let truth = scenario.base.as_array().clone();
            let mut filters: Vec<Box<dyn PointProcessFilter>> = cfg
                .filters
                .iter()
                .map(|&f| suite.build(f, cfg.dim, cfg.window_len, cfg.stimulus_var))
                .collect::<Result<_>>()?;
            let mut sums = vec![MetricSums::zeros(recorded.len()); filters.len()];
            let mut steady = vec![SteadyState::default(); filters.len()];
            let mut x = Array2::zeros((cfg.window_len, cfg.dim));
            let mut slot = 0;
            for k in 1..=k_total {
                fill_design(&data.stimulus, cfg.dim, k, x.view_mut())?;
                let n = data.spikes.window(cfg.window_len, k)?;
                let record = slot < recorded.len() && recorded[slot] == k;
                for (i, f) in filters.iter_mut().enumerate() {
                    f.update(n.view(), x.view())?;
                    if record {
                        sums[i].record(slot, f.estimate(), &truth, &support);
                    }
                    if k >= steady_from {
                        let est = f.estimate();
                        let s = &mut steady[i];
                        s.err += (est - &truth).mapv(|v| v * v).sum();
                        s.energy += truth.dot(&truth);
                        let (off, en) = off_support_energy(est, &support);
                        s.off += off;
                        s.est_energy += en;
                    }
                }
                if record {
                    slot += 1;
                }
            }
            for s in &mut sums {
                s.count = 1;
            }
            let rate = data.spikes.spike_count() as f64 / data.spikes.len() as f64;
            Ok((sums, steady, rate))
        })
        .collect::<Result<_>>()?;

    let mut curves: BTreeMap<FilterKind, MetricSums> = cfg
        .filters
        .iter()
        .map(|&f| (f, MetricSums::zeros(recorded.len())))
        .collect();
    let mut steady = Vec::with_capacity(runs.len());
    let mut rate = 0.0;
    for (sums, st, r) in &runs {
        for (f, s) in cfg.filters.iter().zip(sums) {
            curves.get_mut(f).expect("filter present").merge(s);
        }
        steady.push(st.clone());
        rate += r;
    }
    Ok(Study1Result {
        windows: recorded,
        curves,
        steady,
        filters: cfg.filters.clone(),
        mean_rate: rate / runs.len() as f64,
        suite,
        cv,
    })
}

/// Study 2: fixed sparse parameter whose largest coordinate drops linearly
/// to zero over a short ramp at mid-run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Study2Config {
    pub delta: f64,
    pub window_len: usize,
    pub duration: f64,
    pub dim: usize,
    pub stimulus_var: f64,
    pub mu: f64,
    /// `ω` indices of the nonzero modulation coordinates.
    pub support: Vec<usize>,
    pub values: Vec<f64>,
    /// Which entry of `support` drops, and the ramp length in seconds.
    pub drop_index: usize,
    pub ramp_seconds: f64,
    pub seed: u64,
    pub filters: Vec<FilterKind>,
    pub suite: FilterSuite,
    /// Full estimates are recorded every `trace_every` windows.
    pub trace_every: usize,
    /// Penalty grid; when non-empty the ℓ1 filters' `γ` is chosen by even/odd
    /// cross-validation on the study data.
    #[serde(default)]
    pub cv_grid: Vec<f64>,
    /// Confidence settings for ℓ1-PPF1 (coordinates default to the support).
    pub ci_stride: usize,
    pub ci_level: f64,
    pub ci_iterations: usize,
    #[serde(default)]
    pub ci_gamma: Option<f64>,
    /// Leading fraction of bins excluded from the goodness-of-fit tests;
    /// defaults to the settling time of ℓ1-PPF1.
    #[serde(default)]
    pub gof_burn_in: Option<f64>,
    pub gof_max_lag: usize,
    #[serde(default)]
    pub rescaling: Rescaling,
    /// Time interval (seconds) of the emitted rate traces.
    pub rate_window: (f64, f64),
}

impl Default for Study2Config {
    fn default() -> Self {
        let mut ppf1 = L1Settings::new(0.9995, 0.5);
        ppf1.c = 2.0;
        Self {
            delta: 0.001,
            window_len: 1,
            duration: 60.0,
            dim: 101,
            stimulus_var: 0.01,
            mu: -2.51,
            support: vec![1, 10, 20],
            values: vec![10.0, -5.0, 5.0],
            drop_index: 0,
            ramp_seconds: 1.0,
            seed: 20_261_016,
            filters: FilterKind::ALL.to_vec(),
            suite: FilterSuite {
                ppf1,
                ppf0: L1Settings::new(0.995, 0.1),
                ssppf: SsppfSettings {
                    q: 0.0,
                    forgetting: 0.9995,
                    prior_variance: 1.0,
                },
                sdppf_step: 1.0,
            },
            trace_every: 50,
            cv_grid: Vec::new(),
            ci_stride: 10,
            ci_level: 0.95,
            ci_iterations: 20,
            ci_gamma: None,
            gof_burn_in: None,
            gof_max_lag: 50,
            rescaling: Rescaling::Jittered,
            rate_window: (34.2, 34.4),
        }
    }
}

impl Study2Config {
    pub fn windows(&self) -> usize {
        (self.duration / (self.delta * self.window_len as f64)).round() as usize
    }

    pub fn ramp_windows(&self) -> usize {
        ((self.ramp_seconds / (self.delta * self.window_len as f64)).round() as usize).max(1)
    }

    /// Windows after which the data before a change carries less than 1% of
    /// the ℓ1-PPF1 forgetting weight.
    pub fn settle_windows(&self) -> usize {
        (100f64.ln() / (1.0 - self.suite.ppf1.beta)).ceil() as usize
    }

    pub fn scenario(&self) -> Result<Scenario> {
        if self.support.len() != self.values.len() || self.drop_index >= self.support.len() {
            return Err(Error::InvalidParameter("support, values and drop index disagree".into()));
        }
        if self.support.iter().any(|&s| s == 0 || s >= self.dim) {
            return Err(Error::InvalidParameter("support indices must lie in 1..M-1".into()));
        }
        if self.filters.is_empty() || self.trace_every == 0 {
            return Err(Error::InvalidParameter("no filters selected or zero trace stride".into()));
        }
        let mut w = Array1::zeros(self.dim);
        w[0] = self.mu;
        for (&s, &v) in self.support.iter().zip(&self.values) {
            w[s] = v;
        }
        let half = self.windows() / 2;
        let coord = self.support[self.drop_index];
        let start = self.values[self.drop_index];
        let scenario = Scenario {
            delta: self.delta,
            window_len: self.window_len,
            windows: self.windows(),
            stimulus_var: self.stimulus_var,
            base: ParamVector::from_array(w),
            schedule: vec![Trajectory {
                coord,
                knots: vec![(half, start), (half + self.ramp_windows(), 0.0)],
            }],
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Per-filter outputs of study 2.
#[derive(Debug, Clone)]
pub struct FilterTrace {
    pub kind: FilterKind,
    /// Full `ω̂_k` at the trace windows.
    pub estimates: Vec<Array1<f64>>,
    /// One-step-ahead spiking probability per bin (estimate before the bin's window).
    pub lam_hat: Vec<f64>,
    pub ks: Option<KsResult>,
    pub acf: Option<AcfResult>,
    /// Gaussian bands of the Gaussian-approximation filter: `(window, coord, lo, hi)`.
    pub bands: Vec<(usize, usize, f64, f64)>,
    pub final_mse: f64,
}

#[derive(Debug, Clone)]
pub struct Study2Result {
    pub trace_windows: Vec<usize>,
    pub truth: Vec<Array1<f64>>,
    pub filters: Vec<FilterTrace>,
    /// ℓ1-PPF1 de-sparsified intervals.
    pub intervals: Vec<IntervalRecord>,
    pub suite: FilterSuite,
    pub cv: Vec<(FilterKind, CvResult)>,
    pub true_lam: Vec<f64>,
    pub spikes: SpikeTrain,
    pub nrc: ParamVector,
    pub nrc_lam: Vec<f64>,
    pub scenario: Scenario,
}

impl Study2Result {
    pub fn trace(&self, kind: FilterKind) -> Option<&FilterTrace> {
        self.filters.iter().find(|f| f.kind == kind)
    }

    /// Windows within `settle` windows of the start or of the end of the ramp,
    /// and the ramp itself, are transient.
    pub fn is_transient(&self, k: usize, settle: usize) -> bool {
        if k <= settle {
            return true;
        }
        self.scenario.schedule.iter().any(|t| {
            let start = t.knots[0].0;
            let end = t.knots[t.knots.len() - 1].0;
            k > start && k <= end + settle
        })
    }

    /// Fraction of non-transient intervals for `coord` that contain the truth.
    pub fn post_transient_coverage(&self, coord: usize, settle: usize) -> f64 {
        let hits: Vec<bool> = self
            .intervals
            .iter()
            .filter(|r| r.coord == coord && !self.is_transient(r.window, settle))
            .map(|r| r.covers(self.scenario.truth(r.window)[coord]))
            .collect();
        hits.iter().filter(|&&h| h).count() as f64 / hits.len().max(1) as f64
    }

    /// Fraction of intervals for `coord` after window `from` that contain the truth.
    pub fn coverage(&self, coord: usize, from: usize) -> f64 {
        let hits: Vec<bool> = self
            .intervals
            .iter()
            .filter(|r| r.coord == coord && r.window > from)
            .map(|r| r.covers(self.scenario.truth(r.window)[coord]))
            .collect();
        hits.iter().filter(|&&h| h).count() as f64 / hits.len().max(1) as f64
    }
}

/// Filters whose extra state feeds interval estimates.
enum Tracked {
    Ppf1(Ppf1),
    Ssppf(Ssppf),
    Other(Box<dyn PointProcessFilter>),
}

impl Tracked {
    fn filter(&self) -> &dyn PointProcessFilter {
        match self {
            Tracked::Ppf1(p) => p,
            Tracked::Ssppf(s) => s,
            Tracked::Other(f) => f.as_ref(),
        }
    }
}

pub fn study2(cfg: &Study2Config) -> Result<Study2Result> {
    let scenario = cfg.scenario()?;
    let mut rng = realization_rng(cfg.seed, 0);
    let data = scenario.simulate(&mut rng)?;
    let (suite, cv) = if cfg.cv_grid.is_empty() {
        (cfg.suite, Vec::new())
    } else {
        select_gammas(&scenario, &data, &cfg.suite, &cfg.filters, &cfg.cv_grid)?
    };
    let m = cfg.dim;
    let w_len = cfg.window_len;
    let k_total = scenario.windows;
    let trace_windows: Vec<usize> = (1..=k_total).filter(|k| k % cfg.trace_every == 0).collect();
    let truth = trace_windows.iter().map(|&k| scenario.truth(k)).collect();

    let runs: Vec<Result<(FilterTrace, Vec<IntervalRecord>)>> = cfg
        .filters
        .par_iter()
        .map(|&kind| {
            let mut runner = match kind {
                FilterKind::Ppf1 => Tracked::Ppf1(Ppf1::new(suite.ppf1.config(m, w_len, cfg.stimulus_var)?)?),
                FilterKind::Ssppf => {
                    let mut c = SsppfConfig::new(m, suite.ssppf.q, suite.ssppf.forgetting);
                    c.prior_variance = suite.ssppf.prior_variance;
                    Tracked::Ssppf(Ssppf::new(c)?)
                }
                _ => Tracked::Other(suite.build(kind, m, w_len, cfg.stimulus_var)?),
            };
            let mut tracker = match &runner {
                Tracked::Ppf1(p) => {
                    let mut c = ConfidenceConfig::new(cfg.support.clone(), cfg.ci_gamma.unwrap_or(p.config().hyper.gamma));
                    c.stride = cfg.ci_stride;
                    c.level = cfg.ci_level;
                    c.iterations = cfg.ci_iterations;
                    c.intercept_penalized = p.config().hyper.penalize_intercept;
                    Some(ConfidenceTracker::new(m, p.config().beta, c)?)
                }
                _ => None,
            };
            let z = crate::confidence::two_sided_z(cfg.ci_level)?;
            let mut estimates = Vec::with_capacity(trace_windows.len());
            let mut lam_hat = Vec::with_capacity(data.lam.len());
            let mut intervals = Vec::new();
            let mut bands = Vec::new();
            let mut x = Array2::zeros((w_len, m));
            let mut slot = 0;
            for k in 1..=k_total {
                fill_design(&data.stimulus, m, k, x.view_mut())?;
                let n = data.spikes.window(w_len, k)?;
                lam_hat.extend(x.dot(runner.filter().estimate()).iter().map(|&e| logistic(e)));
                match &mut runner {
                    Tracked::Ppf1(p) => {
                        p.update(n.view(), x.view())?;
                        if let Some(t) = tracker.as_mut() {
                            if let Some(rs) = t.observe(x.view(), n.view(), p.estimate(), &p.gradient(), p.information())? {
                                intervals.extend(rs);
                            }
                        }
                    }
                    Tracked::Ssppf(s) => {
                        s.update(n.view(), x.view())?;
                        if k % cfg.ci_stride == 0 {
                            for &c in &cfg.support {
                                let (lo, hi) = s.band(c, z);
                                bands.push((k, c, lo, hi));
                            }
                        }
                    }
                    Tracked::Other(f) => f.update(n.view(), x.view())?,
                }
                if slot < trace_windows.len() && trace_windows[slot] == k {
                    estimates.push(runner.filter().estimate().clone());
                    slot += 1;
                }
            }
            let final_est = estimates.last().cloned().unwrap_or_else(|| Array1::zeros(m));
            let final_mse = mse_metric(&[final_est], &[scenario.truth(k_total)])?;
            let burn = match cfg.gof_burn_in {
                Some(f) => burn_in_bins(lam_hat.len(), f),
                None => (cfg.settle_windows() * w_len).min(lam_hat.len()),
            };
            let mut gof_rng = realization_rng(cfg.seed ^ 0x9e37_79b9_7f4a_7c15, kind as usize);
            let clipped: Vec<f64> = lam_hat.iter().map(|p| p.clamp(1e-12, 1.0 - 1e-12)).collect();
            let (ks, acf) = match time_rescale(data.spikes.bins(), &clipped, cfg.rescaling, burn, &mut gof_rng) {
                Ok(t) => (ks_test(&t).ok(), acf_test(&t, cfg.gof_max_lag).ok()),
                Err(_) => (None, None),
            };
            Ok((
                FilterTrace {
                    kind,
                    estimates,
                    lam_hat,
                    ks,
                    acf,
                    bands,
                    final_mse,
                },
                intervals,
            ))
        })
        .collect();

    let mut filters = Vec::new();
    let mut intervals = Vec::new();
    for r in runs {
        let (t, iv) = r?;
        filters.push(t);
        intervals.extend(iv);
    }
    let nrc = nrc_estimate(&data.spikes, &data.stimulus, m)?;
    let mut nrc_lam = Vec::with_capacity(data.lam.len());
    let mut x = Array2::zeros((w_len, m));
    for k in 1..=k_total {
        fill_design(&data.stimulus, m, k, x.view_mut())?;
        nrc_lam.extend(x.dot(nrc.as_array()).iter());
    }
    Ok(Study2Result {
        trace_windows,
        truth,
        filters,
        intervals,
        suite,
        cv,
        true_lam: data.lam,
        spikes: data.spikes,
        nrc,
        nrc_lam,
        scenario,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_param_norm_and_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let w = gen_sparse_param(101, 3, 10.0, &mut rng).unwrap();
            assert_eq!(support_of(&w).len(), 3);
            assert!((w.theta().dot(&w.theta()).sqrt() - 10.0).abs() < 1e-12);
            assert_eq!(w.mu(), 0.0);
        }
        assert_eq!(gen_sparse_param(5, 0, 10.0, &mut rng).unwrap().l0(), 0);
        assert!(gen_sparse_param(5, 5, 1.0, &mut rng).is_err());
    }

    #[test]
    fn stimulus_variance_and_determinism() {
        let a = gen_stimulus(20_000, 0.01, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = gen_stimulus(20_000, 0.01, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!((a.variance() / 0.01 - 1.0).abs() < 0.05);
        let z = gen_stimulus(10, 0.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert!(z.raw().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn spike_sampling_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_spikes(&[0.0; 100], 0.001, &mut rng).unwrap().spike_count(), 0);
        assert_eq!(sample_spikes(&[1.0 - 1e-12; 100], 0.001, &mut rng).unwrap().spike_count(), 100);
        assert!(sample_spikes(&[1.5], 0.001, &mut rng).is_err());
    }

    #[test]
    fn metric_examples() {
        let w = Array1::from(vec![1.0, 2.0, 0.0, -1.0]);
        assert_eq!(mse_metric(&[w.clone()], &[w.clone()]).unwrap(), 0.0);
        assert_eq!(to_db(0.0), f64::NEG_INFINITY);
        assert_eq!(mse_metric(&[Array1::zeros(4)], &[w.clone()]).unwrap(), 1.0);
        assert_eq!(mse_metric(&[&w * 2.0], &[w.clone()]).unwrap(), 1.0);
        assert!(mse_metric(&[w.clone()], &[Array1::zeros(4)]).is_err());

        let s = vec![1, 3];
        assert_eq!(spm_metric(&[Array1::from(vec![5.0, 1.0, 0.0, 2.0])], &[s.clone()]).unwrap(), 0.0);
        assert_eq!(spm_metric(&[Array1::from(vec![5.0, 0.0, 1.0, 0.0])], &[s.clone()]).unwrap(), 1.0);
        assert_eq!(spm_metric(&[Array1::from(vec![0.0, 1.0, 1.0, 0.0])], &[s.clone()]).unwrap(), 0.5);
        assert_eq!(spm_metric(&[Array1::zeros(4)], &[s]).unwrap(), 0.0);
    }

    #[test]
    fn mu_calibration_hits_target() {
        let mu = calibrate_mu(1.0, 0.13).unwrap();
        // Monte-Carlo check of E logistic(μ + Z).
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 400_000;
        let mean: f64 = (0..n)
            .map(|_| { let z: f64 = StandardNormal.sample(&mut rng); logistic(mu + z) })
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.13).abs() < 1e-3, "{mean}");
        assert!((calibrate_mu(0.0, 0.5).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn study2_trajectory_pointwise() {
        let cfg = Study2Config::default();
        let sc = cfg.scenario().unwrap();
        let half = 30_000;
        assert_eq!(sc.truth(1)[1], 10.0);
        assert_eq!(sc.truth(half)[1], 10.0);
        assert!((sc.truth(half + 500)[1] - 5.0).abs() < 1e-12);
        assert!((sc.truth(half + 1)[1] - 10.0 * (1.0 - 1.0 / 1000.0)).abs() < 1e-12);
        assert_eq!(sc.truth(half + 1000)[1], 0.0);
        assert_eq!(sc.truth(60_000)[1], 0.0);
        assert_eq!(sc.truth(45_000)[10], -5.0);
        assert_eq!(sc.truth(45_000)[20], 5.0);
        assert_eq!(sc.truth(45_000)[0], -2.51);
    }

    #[test]
    fn zero_realizations_is_an_error() {
        let cfg = Study1Config {
            realizations: 0,
            ..Study1Config::default()
        };
        assert!(study1(&cfg).is_err());
    }

    #[test]
    fn small_study1_is_reproducible() {
        let cfg = Study1Config {
            duration: 0.5,
            dim: 11,
            realizations: 3,
            cv_grid: Vec::new(),
            record_every: 50,
            ..Study1Config::default()
        };
        let a = study1(&cfg).unwrap();
        let b = study1(&cfg).unwrap();
        for f in FilterKind::ALL {
            assert_eq!(a.curves[&f], b.curves[&f]);
            assert_eq!(a.curves[&f].count, 3);
        }
        assert_eq!(a.windows.len(), 10);
    }
}
