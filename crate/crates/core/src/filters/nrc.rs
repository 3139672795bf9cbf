//! Normalized reverse correlation: a linear (least-squares) fit of the spike
//! indicators on the lagged stimulus, `n_t ≈ x_t'θ`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{add_outer, spd_solve};
use crate::model::{fill_design, ParamVector, SpikeTrain, StimulusSequence};

/// Solves the normal equations `(Σ x_t x_t') θ = Σ x_t n_t` over every bin.
///
/// When the covariate autocorrelation matrix is singular the solve falls back
/// to a ridge term `δ I` with `δ = 10⁻⁶ · trace / M`.
pub fn nrc_estimate(spikes: &SpikeTrain, stimulus: &StimulusSequence, m: usize) -> Result<ParamVector> {
    if m == 0 {
        return Err(Error::InvalidParameter("M must be at least 1".into()));
    }
    if spikes.is_empty() {
        return Err(Error::InsufficientData("empty spike train".into()));
    }
    let mut gram = Array2::zeros((m, m));
    let mut cross = Array1::zeros(m);
    let mut row = Array2::zeros((1, m));
    for (t, &n) in spikes.bins().iter().enumerate() {
        fill_design(stimulus, m, t + 1, row.view_mut())?;
        add_outer(&mut gram, row.row(0), 1.0);
        if n == 1 {
            cross += &row.row(0);
        }
    }
    solve_normal_equations(gram.view(), cross.view()).map(ParamVector::from_array)
}

pub(crate) fn solve_normal_equations(gram: ArrayView2<f64>, cross: ArrayView1<f64>) -> Result<Array1<f64>> {
    if let Ok(sol) = spd_solve(gram, cross) {
        if sol.iter().all(|v| v.is_finite()) {
            return Ok(sol);
        }
    }
    let m = gram.nrows();
    let delta = 1e-6 * gram.diag().sum() / m as f64;
    if !(delta > 0.0) {
        return Err(Error::Degenerate("covariate autocorrelation has zero trace".into()));
    }
    log::debug!("normal equations singular, ridge δ = {delta:e}");
    let mut ridge = gram.to_owned();
    ridge.diag_mut().mapv_inplace(|v| v + delta);
    spd_solve(ridge.view(), cross)
}

/// Linear-model spiking probability `x_t'θ` per row; not clipped to `[0, 1]`.
pub fn nrc_predict(w: &ParamVector, x: ArrayView2<f64>) -> Result<Array1<f64>> {
    check_dim("design columns vs parameter", w.dim(), x.ncols())?;
    Ok(x.dot(w.as_array()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_spikes_give_zero_fit() {
        let stim = StimulusSequence::from_samples((0..50).map(|i| (i as f64).sin()).collect()).unwrap();
        let spikes = SpikeTrain::new(vec![0; 50], 0.001).unwrap();
        let w = nrc_estimate(&spikes, &stim, 4).unwrap();
        assert!(w.as_array().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn matches_direct_least_squares() {
        let vals: Vec<f64> = (0..40).map(|i| ((i * 37 % 11) as f64 - 5.0) / 5.0).collect();
        let bins: Vec<u8> = (0..40).map(|i| ((i * 13) % 7 < 2) as u8).collect();
        let stim = StimulusSequence::from_samples(vals.clone()).unwrap();
        let spikes = SpikeTrain::new(bins.clone(), 0.001).unwrap();
        let w = nrc_estimate(&spikes, &stim, 3).unwrap();

        // Explicit design with zero pre-history, normal equations via inverse.
        let x = Array2::from_shape_fn((40, 3), |(t, j)| match j {
            0 => 1.0,
            _ if t >= j - 1 => vals[t - (j - 1)],
            _ => 0.0,
        });
        let n = Array1::from_iter(bins.iter().map(|&b| b as f64));
        let inv = crate::linalg::spd_inverse(x.t().dot(&x).view()).unwrap();
        let expect = inv.dot(&x.t().dot(&n));
        assert!((w.as_array() - &expect).mapv(f64::abs).sum() < 1e-10);
    }

    #[test]
    fn singular_design_uses_ridge() {
        // A constant stimulus makes the lag columns collinear with the intercept.
        let stim = StimulusSequence::new(vec![1.0; 30], 2).unwrap();
        let spikes = SpikeTrain::new((0..28).map(|i| (i % 4 == 0) as u8).collect(), 0.001).unwrap();
        let w = nrc_estimate(&spikes, &stim, 3).unwrap();
        let pred = nrc_predict(&w, array![[1.0, 1.0, 1.0]].view()).unwrap();
        assert!((pred[0] - 0.25).abs() < 1e-4, "{}", pred[0]);
    }
}
