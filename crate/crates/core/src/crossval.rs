//! Two-fold (even/odd window) cross-validation of the sparsity penalty.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filters::PointProcessFilter;
use crate::model::{fill_design, window_loglik, SpikeTrain, StimulusSequence};

/// Held-out log-likelihood per candidate penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub grid: Vec<f64>,
    pub scores: Vec<f64>,
    pub best: f64,
}

/// Windows `1..=k` split into even (training) and odd (held-out) indices.
pub fn split_even_odd(k: usize) -> (Vec<usize>, Vec<usize>) {
    (1..=k).partition(|i| i % 2 == 0)
}

/// Held-out log-likelihood of a filter trained on the windows of one parity
/// (`train_even`) and scored, unweighted, on each window of the other parity
/// with the estimate available just before it. Retained training windows are
/// fed to the filter as if consecutive.
pub fn held_out_loglik(
    filter: &mut dyn PointProcessFilter,
    stimulus: &StimulusSequence,
    spikes: &SpikeTrain,
    window_len: usize,
    train_even: bool,
) -> Result<f64> {
    let m = filter.dim();
    let k_total = spikes.num_windows(window_len);
    let mut x = Array2::zeros((window_len, m));
    let mut score = 0.0;
    for k in 1..=k_total {
        fill_design(stimulus, m, k, x.view_mut())?;
        let n = spikes.window(window_len, k)?;
        if (k % 2 == 0) == train_even {
            filter.update(n.view(), x.view())?;
        } else {
            score += window_loglik(filter.estimate().view(), x.view(), n.view())?;
        }
    }
    Ok(score)
}

/// Picks the penalty in `grid` maximizing the held-out log-likelihood
/// averaged over both folds; ties go to the larger penalty.
pub fn cross_validate_gamma<F>(
    stimulus: &StimulusSequence,
    spikes: &SpikeTrain,
    window_len: usize,
    grid: &[f64],
    make: F,
) -> Result<CvResult>
where
    F: Fn(f64) -> Result<Box<dyn PointProcessFilter>> + Sync,
{
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty penalty grid".into()));
    }
    if spikes.num_windows(window_len) < 2 {
        return Err(Error::InsufficientData("cross-validation needs at least 2 windows".into()));
    }
    if spikes.spike_count() == 0 {
        return Err(Error::Degenerate("cross-validation data contain no spikes".into()));
    }
    let scores: Vec<f64> = grid
        .par_iter()
        .map(|&gamma| {
            let mut total = 0.0;
            for train_even in [true, false] {
                let mut f = make(gamma)?;
                total += held_out_loglik(f.as_mut(), stimulus, spikes, window_len, train_even)?;
            }
            Ok(0.5 * total)
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for i in 1..grid.len() {
        let better = scores[i] > scores[best] || (scores[i] == scores[best] && grid[i] > grid[best]);
        if better {
            best = i;
        }
    }
    Ok(CvResult {
        grid: grid.to_vec(),
        best: grid[best],
        scores,
    })
}
