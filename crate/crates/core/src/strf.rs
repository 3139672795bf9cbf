//! Spectrotemporal receptive fields over a Gaussian time-frequency dictionary.
//!
//! The STRF is an `I × J` lag-by-frequency matrix; its row-major vectorization
//! (index `i·J + j` for lag `i`, band `j`) is `θ`. Writing `θ = F ξ` with a
//! dictionary `F` of separable Gaussian atoms and folding `F` into the
//! covariates turns STRF estimation into estimation of the sparse `ξ`.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayViewMut2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::filters::{FilterConfig, IterationSemantics, PointProcessFilter, Ppf1};
use crate::model::logistic;
use crate::prox::ProxHyper;
use crate::simulation::{realization_rng, sample_spikes};

/// Gaussian atoms on a regular `rows × cols` grid over the `I × J` plane.
///
/// Centers sit at the middle of equal cells of size `D_i = I / rows` and
/// `D_j = J / cols`; each atom has standard deviation `D / 2` per dimension,
/// is cut off beyond three standard deviations and has unit ℓ2 norm. Atoms
/// are separable, so only the one-dimensional profiles are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct GaborDictionary {
    lags: usize,
    bands: usize,
    grid: (usize, usize),
    /// `I × rows` lag profiles.
    lag_profiles: Array2<f64>,
    /// `J × cols` frequency profiles.
    band_profiles: Array2<f64>,
}

fn profiles(len: usize, count: usize) -> Result<Array2<f64>> {
    let spacing = len as f64 / count as f64;
    if count == 0 || spacing < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "{count} atoms do not fit on {len} bins with spacing of at least one bin"
        )));
    }
    let sd = spacing / 2.0;
    let mut p = Array2::zeros((len, count));
    for r in 0..count {
        let center = (r as f64 + 0.5) * spacing - 0.5;
        for i in 0..len {
            let d = i as f64 - center;
            if d.abs() <= 3.0 * sd {
                p[[i, r]] = (-d * d / (2.0 * sd * sd)).exp();
            }
        }
        let norm = p.column(r).dot(&p.column(r)).sqrt();
        p.column_mut(r).mapv_inplace(|v| v / norm);
    }
    Ok(p)
}

impl GaborDictionary {
    pub fn new(lags: usize, bands: usize, grid_rows: usize, grid_cols: usize) -> Result<Self> {
        Ok(Self {
            lags,
            bands,
            grid: (grid_rows, grid_cols),
            lag_profiles: profiles(lags, grid_rows)?,
            band_profiles: profiles(bands, grid_cols)?,
        })
    }

    pub fn lags(&self) -> usize {
        self.lags
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }

    /// Number of atoms `P`.
    pub fn atoms(&self) -> usize {
        self.grid.0 * self.grid.1
    }

    /// Grid position `(row, col)` of atom `p`.
    pub fn position(&self, p: usize) -> (usize, usize) {
        (p / self.grid.1, p % self.grid.1)
    }

    /// Atom spacing `(D_i, D_j)` in bins.
    pub fn spacing(&self) -> (f64, f64) {
        (self.lags as f64 / self.grid.0 as f64, self.bands as f64 / self.grid.1 as f64)
    }

    /// Explicit `(I·J) × P` dictionary matrix.
    pub fn matrix(&self) -> Array2<f64> {
        let (rows, cols) = self.grid;
        Array2::from_shape_fn((self.lags * self.bands, rows * cols), |(q, p)| {
            let (i, j) = (q / self.bands, q % self.bands);
            self.lag_profiles[[i, p / cols]] * self.band_profiles[[j, p % cols]]
        })
    }

    /// `F ξ` reshaped to the `I × J` lag-by-frequency matrix.
    pub fn reconstruct(&self, xi: ArrayView1<f64>) -> Result<Array2<f64>> {
        check_dim("dictionary coefficients", self.atoms(), xi.len())?;
        let c = xi.to_owned().into_shape_with_order(self.grid).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(self.lag_profiles.dot(&c).dot(&self.band_profiles.t()))
    }
}

/// `F ξ` as an `I × J` matrix.
pub fn strf_reconstruct(xi: ArrayView1<f64>, dict: &GaborDictionary) -> Result<Array2<f64>> {
    dict.reconstruct(xi)
}

/// `J × T` stimulus spectrogram; columns are time bins `1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    data: Array2<f64>,
    delta: f64,
    f_lo: f64,
    f_hi: f64,
}

impl Spectrogram {
    pub fn new(data: Array2<f64>, delta: f64, f_lo: f64, f_hi: f64) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidParameter("spectrogram needs J, T ≥ 1".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spectrogram entries"));
        }
        if !(delta > 0.0 && f_lo > 0.0 && f_hi > f_lo) {
            return Err(Error::InvalidParameter("need Δ > 0 and 0 < f_lo < f_hi".into()));
        }
        Ok(Self { data, delta, f_lo, f_hi })
    }

    pub fn bands(&self) -> usize {
        self.data.nrows()
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    /// Value of band `j` at bin `t` (1-based); zero for `t < 1` or `t > T`.
    pub fn get(&self, j: usize, t: i64) -> f64 {
        if t < 1 || t as usize > self.len() {
            0.0
        } else {
            self.data[[j, t as usize - 1]]
        }
    }

    /// Log-spaced band center frequencies.
    pub fn band_frequencies(&self) -> Vec<f64> {
        let j = self.bands();
        let ratio = self.f_hi / self.f_lo;
        (0..j)
            .map(|b| self.f_lo * ratio.powf(if j == 1 { 0.0 } else { b as f64 / (j - 1) as f64 }))
            .collect()
    }

    /// Average over bands of the per-band variance.
    pub fn mean_variance(&self) -> f64 {
        let t = self.len() as f64;
        self.data
            .outer_iter()
            .map(|row| {
                let m = row.sum() / t;
                row.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / t
            })
            .sum::<f64>()
            / self.bands() as f64
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# J={}", self.bands());
        let _ = writeln!(out, "# T={}", self.len());
        let _ = writeln!(out, "# delta={:?}", self.delta);
        let _ = writeln!(out, "# f_lo={:?}", self.f_lo);
        let _ = writeln!(out, "# f_hi={:?}", self.f_hi);
        let _ = writeln!(out, "# scale=log");
        for row in self.data.outer_iter() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut header = std::collections::HashMap::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                let (k, v) = h.trim().split_once('=').ok_or_else(|| Error::Parse {
                    line: no + 1,
                    message: format!("malformed header {line:?}"),
                })?;
                header.insert(k.trim().to_string(), (no + 1, v.trim().to_string()));
                continue;
            }
            let row = line
                .split(',')
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|_| Error::Parse {
                        line: no + 1,
                        message: format!("bad number {v:?}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let field = |k: &str| -> Result<f64> {
            let (line, v) = header.get(k).ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("missing header {k}"),
            })?;
            v.parse().map_err(|_| Error::Parse {
                line: *line,
                message: format!("bad value for {k}"),
            })
        };
        let (j, t) = (field("J")? as usize, field("T")? as usize);
        if let Some((line, scale)) = header.get("scale") {
            if scale != "log" {
                return Err(Error::Parse {
                    line: *line,
                    message: format!("unsupported frequency scale {scale:?}"),
                });
            }
        }
        if rows.len() != j || rows.iter().any(|r| r.len() != t) {
            return Err(Error::Parse {
                line: 0,
                message: format!("expected {j} rows of {t} values"),
            });
        }
        let data = Array2::from_shape_fn((j, t), |(a, b)| rows[a][b]);
        Self::new(data, field("delta")?, field("f_lo")?, field("f_hi")?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Raw covariates of bin `t`: `[1, vec(spec[:, t-I+1..=t])]`, lag-major.
pub fn raw_design_row(spec: &Spectrogram, lags: usize, t: i64) -> Array1<f64> {
    let j = spec.bands();
    let mut row = Array1::zeros(1 + lags * j);
    row[0] = 1.0;
    for i in 0..lags {
        for b in 0..j {
            row[1 + i * j + b] = spec.get(b, t - i as i64);
        }
    }
    row
}

/// Dictionary-domain covariates `[1, raw'F]` computed through the separable
/// atom profiles.
#[derive(Debug, Clone)]
pub struct StrfFeatures<'a> {
    dict: &'a GaborDictionary,
    /// `cols × T`: frequency profiles applied to every spectrogram column.
    projected: Array2<f64>,
    /// Nonzero lag range of every lag profile.
    lag_support: Vec<(usize, usize)>,
}

impl<'a> StrfFeatures<'a> {
    pub fn new(spec: &Spectrogram, dict: &'a GaborDictionary) -> Result<Self> {
        check_dim("spectrogram bands vs dictionary", dict.bands(), spec.bands())?;
        let projected = dict.band_profiles.t().dot(spec.data());
        let lag_support = dict
            .lag_profiles
            .columns()
            .into_iter()
            .map(|c| {
                let first = c.iter().position(|&v| v != 0.0).unwrap_or(0);
                let last = c.iter().rposition(|&v| v != 0.0).unwrap_or(0);
                (first, last)
            })
            .collect();
        Ok(Self {
            dict,
            projected,
            lag_support,
        })
    }

    /// Effective dimension `1 + P`.
    pub fn dim(&self) -> usize {
        1 + self.dict.atoms()
    }

    pub fn fill_row(&self, t: i64, row: &mut [f64]) {
        let (rows, cols) = self.dict.grid();
        let len = self.projected.ncols() as i64;
        row[0] = 1.0;
        for r in 0..rows {
            let (lo, hi) = self.lag_support[r];
            for c in 0..cols {
                let mut acc = 0.0;
                for i in lo..=hi {
                    let tau = t - i as i64;
                    if tau >= 1 && tau <= len {
                        acc += self.dict.lag_profiles[[i, r]] * self.projected[[c, tau as usize - 1]];
                    }
                }
                row[1 + r * cols + c] = acc;
            }
        }
    }

    /// Rows of window `k` (1-based) into `out` (`W × (1 + P)`).
    pub fn fill_window(&self, k: usize, mut out: ArrayViewMut2<f64>) -> Result<()> {
        check_dim("design columns", self.dim(), out.ncols())?;
        let w = out.nrows();
        for j in 0..w {
            let t = ((k - 1) * w + j + 1) as i64;
            let mut row = out.row_mut(j);
            let slice = row.as_slice_mut().ok_or(Error::InvalidParameter("design rows must be contiguous".into()))?;
            self.fill_row(t, slice);
        }
        Ok(())
    }
}

/// Dictionary-domain design of window `k`.
pub fn spectrogram_design(
    spec: &Spectrogram,
    dict: &GaborDictionary,
    window_len: usize,
    k: usize,
) -> Result<crate::model::DesignWindow> {
    if k == 0 || window_len == 0 {
        return Err(Error::InvalidParameter("need k ≥ 1 and W ≥ 1".into()));
    }
    let feats = StrfFeatures::new(spec, dict)?;
    let mut matrix = Array2::zeros((window_len, feats.dim()));
    feats.fill_window(k, matrix.view_mut())?;
    Ok(crate::model::DesignWindow { matrix, k })
}

/// Settings of the broadband ripple-sum stimulus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TorcConfig {
    pub bands: usize,
    pub f_lo: f64,
    pub f_hi: f64,
    /// Ripple parameters are redrawn every segment.
    pub segment_seconds: f64,
    pub ripples: usize,
    /// Temporal modulation rates are drawn from `±[min_velocity, max_velocity]` Hz.
    pub min_velocity: f64,
    pub max_velocity: f64,
    /// Spectral densities are drawn from `[0, max_density]` cycles per octave.
    pub max_density: f64,
}

impl Default for TorcConfig {
    fn default() -> Self {
        Self {
            bands: 50,
            f_lo: 500.0,
            f_hi: 16_000.0,
            segment_seconds: 1.0,
            ripples: 6,
            min_velocity: 4.0,
            max_velocity: 48.0,
            max_density: 1.4,
        }
    }
}

/// Sums of moving spectral ripples with random rate, density and phase;
/// every band has unit variance on average.
pub fn torc_like<R: Rng + ?Sized>(cfg: &TorcConfig, bins: usize, delta: f64, rng: &mut R) -> Result<Spectrogram> {
    if cfg.ripples == 0 || cfg.bands == 0 || bins == 0 || !(cfg.segment_seconds > 0.0) {
        return Err(Error::InvalidParameter("ripple stimulus needs positive sizes".into()));
    }
    let octaves = (cfg.f_hi / cfg.f_lo).log2();
    let x: Vec<f64> = (0..cfg.bands)
        .map(|j| if cfg.bands == 1 { 0.0 } else { octaves * j as f64 / (cfg.bands - 1) as f64 })
        .collect();
    let seg = ((cfg.segment_seconds / delta).round() as usize).max(1);
    let scale = (2.0 / cfg.ripples as f64).sqrt();
    let tau = std::f64::consts::TAU;
    let mut data = Array2::zeros((cfg.bands, bins));
    let mut start = 0;
    while start < bins {
        let end = (start + seg).min(bins);
        let ripples: Vec<(f64, f64, f64)> = (0..cfg.ripples)
            .map(|_| {
                let v = rng.random_range(cfg.min_velocity..=cfg.max_velocity);
                let v = if rng.random::<bool>() { v } else { -v };
                (v, rng.random_range(0.0..=cfg.max_density), rng.random_range(0.0..tau))
            })
            .collect();
        for t in start..end {
            let time = t as f64 * delta;
            for (j, &xj) in x.iter().enumerate() {
                data[[j, t]] = scale
                    * ripples
                        .iter()
                        .map(|&(v, d, ph)| (tau * (v * time + d * xj) + ph).cos())
                        .sum::<f64>();
            }
        }
        start = end;
    }
    Spectrogram::new(data, delta, cfg.f_lo, cfg.f_hi)
}

/// Step size `α = scale · (1 - β) / (M W σ̄²)` with `M = I·J + 1`.
pub fn strf_step_size(scale: f64, beta: f64, lags: usize, bands: usize, window_len: usize, sigma_bar_sq: f64) -> Result<f64> {
    let denom = (lags * bands + 1) as f64 * window_len as f64 * sigma_bar_sq;
    if !(denom > 0.0 && scale > 0.0 && beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParameter("step size needs β ∈ (0, 1), σ̄² > 0 and a positive scale".into()));
    }
    Ok(scale * (1.0 - beta) / denom)
}

/// Synthetic end-to-end check: spikes drawn from a planted sparse STRF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantedStrfConfig {
    pub lags: usize,
    pub grid: (usize, usize),
    pub torc: TorcConfig,
    /// `(atom index, coefficient)` pairs of the planted `ξ`.
    pub atoms: Vec<(usize, f64)>,
    pub mu: f64,
    pub duration: f64,
    pub delta: f64,
    pub window_len: usize,
    pub beta: f64,
    pub gamma: f64,
    /// Numerator constant of the step-size rule.
    pub step_scale: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Times (seconds) at which the STRF estimate is reconstructed.
    pub snapshot_times: Vec<f64>,
    /// `(lag, band)` points whose estimate is traced over time.
    pub trace_points: Vec<(usize, usize)>,
    /// Trace sampling interval in windows.
    pub trace_every: usize,
}

impl Default for PlantedStrfConfig {
    fn default() -> Self {
        Self {
            lags: 50,
            grid: (13, 13),
            torc: TorcConfig::default(),
            atoms: vec![(7 * 13 + 9, 0.3), (3 * 13 + 4, -0.21)],
            mu: -4.0,
            duration: 990.0,
            delta: 0.001,
            window_len: 10,
            beta: 0.9998,
            gamma: 40.0,
            step_scale: 4.0,
            iterations: 1,
            seed: 5,
            snapshot_times: vec![180.0, 360.0, 540.0, 630.0, 990.0],
            trace_points: vec![(28, 36), (12, 16), (28, 16), (40, 45)],
            trace_every: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedStrfResult {
    pub dictionary: GaborDictionary,
    pub xi_true: Array1<f64>,
    pub xi_hat: Array1<f64>,
    pub mu_hat: f64,
    pub planted: Array2<f64>,
    /// `(time in seconds, reconstructed STRF)`.
    pub snapshots: Vec<(f64, Array2<f64>)>,
    /// `(time in seconds, values at the trace points)`.
    pub traces: Vec<(f64, Vec<f64>)>,
    /// Atom indices ordered by decreasing `|ξ̂|`.
    pub ranking: Vec<usize>,
    /// Pearson correlation of the final reconstruction with the planted STRF.
    pub correlation: f64,
    pub spike_count: usize,
    pub step_size: f64,
    pub sigma_bar_sq: f64,
}

/// Pearson correlation of two equally shaped arrays.
pub fn correlation(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.sum() / n, b.sum() / n);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

pub fn planted_strf(cfg: &PlantedStrfConfig) -> Result<PlantedStrfResult> {
    let dict = GaborDictionary::new(cfg.lags, cfg.torc.bands, cfg.grid.0, cfg.grid.1)?;
    let p = dict.atoms();
    let mut xi_true = Array1::zeros(p);
    for &(a, v) in &cfg.atoms {
        if a >= p {
            return Err(Error::InvalidParameter(format!("atom {a} outside the {p}-atom dictionary")));
        }
        xi_true[a] = v;
    }
    let w_len = cfg.window_len;
    let windows = (cfg.duration / (cfg.delta * w_len as f64)).round() as usize;
    if windows == 0 {
        return Err(Error::InvalidParameter("duration shorter than one window".into()));
    }
    let mut rng = realization_rng(cfg.seed, 0);
    let spec = torc_like(&cfg.torc, windows * w_len, cfg.delta, &mut rng)?;
    let sigma_bar_sq = spec.mean_variance();
    let feats = StrfFeatures::new(&spec, &dict)?;
    let dim = feats.dim();
    let mut w_true = Array1::zeros(dim);
    w_true[0] = cfg.mu;
    w_true.slice_mut(ndarray::s![1..]).assign(&xi_true);

    let mut x = Array2::zeros((w_len, dim));
    let mut lam = Vec::with_capacity(windows * w_len);
    for k in 1..=windows {
        feats.fill_window(k, x.view_mut())?;
        lam.extend(x.dot(&w_true).iter().map(|&e| logistic(e)));
    }
    let spikes = sample_spikes(&lam, cfg.delta, &mut rng)?;

    let step_size = strf_step_size(cfg.step_scale, cfg.beta, cfg.lags, cfg.torc.bands, w_len, sigma_bar_sq)?;
    let fcfg = FilterConfig {
        dim,
        window_len: w_len,
        beta: cfg.beta,
        hyper: ProxHyper::new(step_size, cfg.gamma, cfg.iterations)?,
        semantics: IterationSemantics::OncePerWindow,
    };
    let mut filter = Ppf1::new(fcfg)?;
    let snap_windows: Vec<(f64, usize)> = cfg
        .snapshot_times
        .iter()
        .map(|&s| (s, ((s / (cfg.delta * w_len as f64)).round() as usize).clamp(1, windows)))
        .collect();
    if cfg.trace_points.iter().any(|&(i, j)| i >= cfg.lags || j >= cfg.torc.bands) || cfg.trace_every == 0 {
        return Err(Error::InvalidParameter("trace points must lie in the STRF and the trace stride be positive".into()));
    }
    let mut snapshots = Vec::new();
    let mut traces = Vec::new();
    for k in 1..=windows {
        feats.fill_window(k, x.view_mut())?;
        let n = spikes.window(w_len, k)?;
        filter.update(n.view(), x.view())?;
        for &(s, kw) in &snap_windows {
            if kw == k {
                let xi = filter.estimate().slice(ndarray::s![1..]).to_owned();
                snapshots.push((s, dict.reconstruct(xi.view())?));
            }
        }
        if k % cfg.trace_every == 0 && !cfg.trace_points.is_empty() {
            let xi = filter.estimate().slice(ndarray::s![1..]).to_owned();
            let img = dict.reconstruct(xi.view())?;
            let time = k as f64 * w_len as f64 * cfg.delta;
            traces.push((time, cfg.trace_points.iter().map(|&(i, j)| img[[i, j]]).collect()));
        }
    }
    let est = filter.estimate();
    let xi_hat = est.slice(ndarray::s![1..]).to_owned();
    let mut ranking: Vec<usize> = (0..p).collect();
    ranking.sort_by(|&a, &b| xi_hat[b].abs().total_cmp(&xi_hat[a].abs()));
    let planted = dict.reconstruct(xi_true.view())?;
    let correlation = correlation(&dict.reconstruct(xi_hat.view())?, &planted);
    Ok(PlantedStrfResult {
        mu_hat: est[0],
        xi_true,
        xi_hat,
        planted,
        snapshots,
        traces,
        ranking,
        correlation,
        spike_count: spikes.spike_count(),
        step_size,
        sigma_bar_sq,
        dictionary: dict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn full_size_dictionary() {
        let d = GaborDictionary::new(50, 50, 13, 13).unwrap();
        let f = d.matrix();
        assert_eq!(f.dim(), (2500, 169));
        for c in f.columns() {
            assert!((c.dot(&c) - 1.0).abs() < 1e-12);
        }
        assert!(GaborDictionary::new(10, 10, 11, 2).is_err());
    }

    #[test]
    fn single_atom_peaks_at_center() {
        let d = GaborDictionary::new(9, 7, 1, 1).unwrap();
        let img = d.reconstruct(Array1::from(vec![1.0]).view()).unwrap();
        let (mut best, mut arg) = (f64::MIN, (0, 0));
        for ((i, j), &v) in img.indexed_iter() {
            if v > best {
                best = v;
                arg = (i, j);
            }
        }
        assert_eq!(arg, (4, 3));
    }

    #[test]
    fn reconstruction_matches_explicit_product() {
        let d = GaborDictionary::new(12, 10, 4, 3).unwrap();
        let xi = Array1::from_shape_fn(12, |p| ((p * 7) % 5) as f64 - 2.0);
        let img = d.reconstruct(xi.view()).unwrap();
        let flat = d.matrix().dot(&xi);
        for ((i, j), &v) in img.indexed_iter() {
            assert!((v - flat[i * 10 + j]).abs() < 1e-12);
        }
        assert!(d.reconstruct(Array1::zeros(12).view()).unwrap().iter().all(|&v| v == 0.0));
        let e = Array1::from_shape_fn(12, |p| (p == 5) as u8 as f64);
        let atom = d.matrix().column(5).to_owned();
        let img = d.reconstruct(e.view()).unwrap();
        for ((i, j), &v) in img.indexed_iter() {
            assert_eq!(v, atom[i * 10 + j]);
        }
        assert!(d.reconstruct(Array1::zeros(11).view()).is_err());
    }

    fn toy_spec() -> Spectrogram {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cfg = TorcConfig {
            bands: 10,
            ..TorcConfig::default()
        };
        torc_like(&cfg, 60, 0.001, &mut rng).unwrap()
    }

    #[test]
    fn effective_design_matches_explicit_product() {
        let spec = toy_spec();
        let d = GaborDictionary::new(12, 10, 4, 3).unwrap();
        let f = d.matrix();
        let feats = StrfFeatures::new(&spec, &d).unwrap();
        let mut row = vec![0.0; feats.dim()];
        for t in [1i64, 5, 13, 40, 60, 65] {
            feats.fill_row(t, &mut row);
            let raw = raw_design_row(&spec, 12, t);
            let expect = raw.slice(ndarray::s![1..]).dot(&f);
            assert_eq!(row[0], 1.0);
            for p in 0..12 {
                assert!((row[p + 1] - expect[p]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn impulse_shift_structure() {
        let mut data = Array2::zeros((4, 30));
        data[[2, 9]] = 1.0;
        let spec = Spectrogram::new(data, 0.001, 500.0, 16_000.0).unwrap();
        for t in 1..=30i64 {
            let row = raw_design_row(&spec, 5, t);
            let nz: Vec<usize> = (1..row.len()).filter(|&q| row[q] != 0.0).collect();
            if (10..=14).contains(&t) {
                assert_eq!(nz, vec![1 + (t as usize - 10) * 4 + 2]);
            } else {
                assert!(nz.is_empty());
            }
        }
        let zero = Spectrogram::new(Array2::zeros((4, 5)), 0.001, 500.0, 16_000.0).unwrap();
        let d = GaborDictionary::new(5, 4, 2, 2).unwrap();
        let x = spectrogram_design(&zero, &d, 2, 1).unwrap();
        assert!(x.matrix.column(0).iter().all(|&v| v == 1.0));
        assert!(x.matrix.slice(ndarray::s![.., 1..]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn spectrogram_text_round_trip() {
        let spec = toy_spec();
        let back = Spectrogram::from_text(&spec.to_text()).unwrap();
        assert_eq!(back, spec);
        assert!(Spectrogram::from_text("# J=2\n# T=2\n# delta=0.001\n# f_lo=1\n# f_hi=2\n1,2\n").is_err());
        let f = spec.band_frequencies();
        assert!((f[0] - 500.0).abs() < 1e-9 && (f[9] - 16_000.0).abs() < 1e-6);
    }

    #[test]
    fn ripple_stimulus_has_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = torc_like(&TorcConfig::default(), 20_000, 0.001, &mut rng).unwrap();
        assert!((spec.mean_variance() - 1.0).abs() < 0.25, "{}", spec.mean_variance());
    }

    #[test]
    fn step_size_rule() {
        let a = strf_step_size(4.0, 0.9998, 50, 50, 10, 1.0).unwrap();
        assert!((a - 4.0 * 2e-4 / 25_010.0).abs() < 1e-18);
    }
}
