//! Fit metrics and acquisition values.

use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::ard_lstm::{ArdLstmModel, ForwardOptions, Prediction, Propagation};
use crate::numerics::mix_seed;
use crate::data::SequenceDataset;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// `1 − SS_res/SS_tot`, where `SS_tot` measures each (step, output) column
/// against its mean over the batch.
pub fn r_squared(targets: &[Matrix], predictions: &[Matrix]) -> Result<f64> {
    if targets.len() != predictions.len() {
        return Err(Error::shape("r_squared steps", targets.len(), predictions.len()));
    }
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (y, p) in targets.iter().zip(predictions) {
        if y.shape() != p.shape() {
            return Err(Error::shape(
                "r_squared step",
                format!("{}x{}", y.rows(), y.cols()),
                format!("{}x{}", p.rows(), p.cols()),
            ));
        }
        let n_b = y.rows() as f64;
        for o in 0..y.cols() {
            let mean = (0..y.rows()).map(|b| y[(b, o)]).sum::<f64>() / n_b;
            for b in 0..y.rows() {
                ss_res += (y[(b, o)] - p[(b, o)]).powi(2);
                ss_tot += (y[(b, o)] - mean).powi(2);
            }
        }
    }
    if ss_tot == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// Direction in which a larger response counts as an improvement.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImprovementSense {
    #[default]
    Maximize,
    Minimize,
}

/// `(ȳ − y)Φ(u) + σφ(u)` with `u = (ȳ − y)/σ`; for `σ = 0` the positive
/// part of the gap.
pub fn expected_improvement(mean: f64, sigma: f64, best: f64, sense: ImprovementSense) -> f64 {
    let gap = match sense {
        ImprovementSense::Maximize => mean - best,
        ImprovementSense::Minimize => best - mean,
    };
    if sigma <= 0.0 {
        return gap.max(0.0);
    }
    let n = Normal::standard();
    let u = gap / sigma;
    (gap * n.cdf(u) + sigma * n.pdf(u)).max(0.0)
}

/// Response that each sweep point is compared against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EiReference {
    /// Training response linearly interpolated in the design parameter.
    #[default]
    Interpolated,
    /// Best training response over all designs.
    BestObserved,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub propagation: Propagation,
    pub mc_samples: usize,
    pub seed: u64,
    pub sense: ImprovementSense,
    pub reference: EiReference,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            propagation: Propagation::MeanBased,
            mc_samples: 100,
            seed: 0,
            sense: ImprovementSense::Maximize,
            reference: EiReference::Interpolated,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Strictly increasing design values in physical units.
    pub epsilon: Vec<f64>,
    /// Largest predictive standard deviation over steps and outputs, in
    /// normalized output units.
    pub sigma_norm: Vec<f64>,
    pub ei: Vec<f64>,
    /// Outside the range of training designs.
    pub extrapolation: Vec<bool>,
}

impl SweepResult {
    pub fn len(&self) -> usize {
        self.epsilon.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epsilon.is_empty()
    }

    /// Grid point with the largest EI (first one on ties).
    pub fn argmax_ei(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, v) in self.ei.iter().enumerate() {
            if best.is_none_or(|b| *v > self.ei[b]) {
                best = Some(i);
            }
        }
        best
    }

    /// Value at the grid point closest to `eps`.
    pub fn sigma_near(&self, eps: f64) -> Option<f64> {
        let i = (0..self.len()).min_by(|&a, &b| {
            (self.epsilon[a] - eps).abs().total_cmp(&(self.epsilon[b] - eps).abs())
        })?;
        Some(self.sigma_norm[i])
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epsilon", "sigma_norm", "ei", "extrapolation_flag"])?;
        for i in 0..self.len() {
            w.write_record([
                self.epsilon[i].to_string(),
                self.sigma_norm[i].to_string(),
                self.ei[i].to_string(),
                u8::from(self.extrapolation[i]).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sorted, de-duplicated copy of `grid`.
pub fn canonical_grid(grid: &[f64]) -> Vec<f64> {
    let mut g: Vec<f64> = grid.iter().copied().filter(|v| v.is_finite()).collect();
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

/// `n` evenly spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Normalized training targets of `data` linearly interpolated at `eps`
/// (clamped to the end designs), one matrix row per step.
fn interpolated_reference(data: &SequenceDataset, targets: &[Matrix], eps: f64) -> Vec<Vec<f64>> {
    let mut order: Vec<usize> = (0..data.n_designs()).collect();
    order.sort_by(|&a, &b| data.designs[a].total_cmp(&data.designs[b]));
    let (first, last) = (order[0], order[order.len() - 1]);
    let (lo, hi, w) = if eps <= data.designs[first] {
        (first, first, 0.0)
    } else if eps >= data.designs[last] {
        (last, last, 0.0)
    } else {
        let k = order.windows(2).position(|p| eps <= data.designs[p[1]]).unwrap_or(0);
        let (a, b) = (order[k], order[k + 1]);
        (a, b, (eps - data.designs[a]) / (data.designs[b] - data.designs[a]))
    };
    targets
        .iter()
        .map(|y| y.row(lo).iter().zip(y.row(hi)).map(|(a, b)| a + w * (b - a)).collect())
        .collect()
}

/// Normalized design inputs for `eps` built from `data`.
fn grid_inputs(data: &SequenceDataset, eps: &[f64]) -> Result<Vec<Matrix>> {
    data.design_inputs(eps)?
        .iter()
        .map(|x| data.normalizer.normalize_inputs(x))
        .collect()
}

fn training_range(data: &SequenceDataset) -> (f64, f64) {
    data.designs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), d| (l.min(*d), h.max(*d)))
}

/// Scores a prediction of the grid `eps`; `reference(r)` gives the response
/// to improve on at grid point `r`, one row per step.
fn score(
    data: &SequenceDataset,
    eps: &[f64],
    pred: &Prediction,
    sense: ImprovementSense,
    reference: impl Fn(usize) -> Vec<Vec<f64>>,
) -> SweepResult {
    let (lo, hi) = training_range(data);
    let mut out = SweepResult::default();
    for (r, &e) in eps.iter().enumerate() {
        let reference = reference(r);
        let mut sigma_max = 0.0f64;
        let mut ei_max = 0.0f64;
        for (i, (mean, var)) in pred.mean.iter().zip(&pred.variance).enumerate() {
            for o in 0..mean.cols() {
                let sigma = var[(r, o)].max(0.0).sqrt();
                sigma_max = sigma_max.max(sigma);
                ei_max = ei_max.max(expected_improvement(mean[(r, o)], sigma, reference[i][o], sense));
            }
        }
        out.epsilon.push(e);
        out.sigma_norm.push(sigma_max);
        out.ei.push(ei_max);
        out.extrapolation.push(e < lo || e > hi);
    }
    out
}

/// Predicts every grid point as one batch and summarizes the predictive
/// spread and EI per design value. `data` must be the training dataset.
pub fn uncertainty_sweep(model: &ArdLstmModel, data: &SequenceDataset, grid: &[f64], opts: &SweepOptions) -> Result<SweepResult> {
    if !model.is_trained() {
        return Err(Error::NotTrained);
    }
    let eps = canonical_grid(grid);
    if eps.is_empty() {
        return Ok(SweepResult::default());
    }
    let pred = model.predict(&grid_inputs(data, &eps)?, opts.propagation, opts.mc_samples, opts.seed)?;
    let targets = data.normalized_targets()?;
    let best_observed: Vec<Vec<f64>> = targets
        .iter()
        .map(|y| {
            (0..y.cols())
                .map(|o| {
                    let col = (0..y.rows()).map(|b| y[(b, o)]);
                    match opts.sense {
                        ImprovementSense::Maximize => col.fold(f64::NEG_INFINITY, f64::max),
                        ImprovementSense::Minimize => col.fold(f64::INFINITY, f64::min),
                    }
                })
                .collect()
        })
        .collect();
    Ok(score(data, &eps, &pred, opts.sense, |r| match opts.reference {
        EiReference::Interpolated => interpolated_reference(data, &targets, eps[r]),
        EiReference::BestObserved => best_observed.clone(),
    }))
}

/// Like [`uncertainty_sweep`], but EI measures the gap to the predictive
/// mean of a second model (typically one trained on more designs) instead
/// of a response derived from the training data. `opts.reference` is
/// ignored.
pub fn uncertainty_sweep_against(
    model: &ArdLstmModel,
    data: &SequenceDataset,
    reference: &ArdLstmModel,
    reference_data: &SequenceDataset,
    grid: &[f64],
    opts: &SweepOptions,
) -> Result<SweepResult> {
    if !model.is_trained() || !reference.is_trained() {
        return Err(Error::NotTrained);
    }
    let eps = canonical_grid(grid);
    if eps.is_empty() {
        return Ok(SweepResult::default());
    }
    let pred = model.predict(&grid_inputs(data, &eps)?, opts.propagation, opts.mc_samples, opts.seed)?;
    let ref_pred = reference.predict(&grid_inputs(reference_data, &eps)?, opts.propagation, opts.mc_samples, opts.seed)?;
    // the reference lives in its own normalization; express it in ours
    let ref_means: Vec<Matrix> = ref_pred
        .mean
        .iter()
        .map(|m| data.normalizer.normalize_targets(&reference_data.normalizer.denormalize_targets(m)?))
        .collect::<Result<_>>()?;
    if ref_means.len() != pred.mean.len() || ref_means.first().map(Matrix::shape) != pred.mean.first().map(Matrix::shape) {
        return Err(Error::shape("reference prediction", pred.mean.len(), ref_means.len()));
    }
    Ok(score(data, &eps, &pred, opts.sense, |r| {
        ref_means.iter().map(|m| m.row(r).to_vec()).collect()
    }))
}

/// How well mean-based propagation reproduces sampled propagation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub replicates: usize,
    /// Share of hidden states (per step, design and unit) whose mean-based
    /// value lies within three standard errors of the first sampled pass.
    /// The standard error is the spread of the sampled means over the
    /// replicates, which includes Monte-Carlo noise fed back through the
    /// recurrence.
    pub within_3se: f64,
    /// Same share with the per-step standard error `std/√K`, which ignores
    /// the noise carried over from earlier steps.
    pub within_3se_naive: f64,
    pub max_hidden_diff: f64,
    pub max_output_diff: f64,
}

/// Compares one mean-based pass with `replicates` independent sampled
/// passes of `k` samples each.
pub fn propagation_agreement(model: &ArdLstmModel, inputs: &[Matrix], k: usize, replicates: usize, seed: u64) -> Result<Agreement> {
    if replicates < 2 {
        return Err(Error::Config {
            field: "replicates".into(),
            message: format!("need at least 2 to estimate a standard error, got {replicates}"),
        });
    }
    let pass = |propagation, k, seed| {
        model.forward_epoch(
            inputs,
            ForwardOptions {
                propagation,
                mc_samples: k,
                keep_samples: false,
            },
            seed,
        )
    };
    let mean = pass(Propagation::MeanBased, 1, seed)?;
    let runs = (0..replicates)
        .map(|r| pass(Propagation::Sampled, k, mix_seed(seed, r as u64 + 1)))
        .collect::<Result<Vec<_>>>()?;
    let (mut inside, mut inside_naive, mut total) = (0usize, 0usize, 0usize);
    let (mut max_h, mut max_y) = (0.0f64, 0.0f64);
    for (i, step) in mean.steps.iter().enumerate() {
        let first = &runs[0].steps[i];
        for (j, hm) in step.hidden_mp.as_slice().iter().enumerate() {
            let values: Vec<f64> = runs.iter().map(|r| r.steps[i].hidden_mp.as_slice()[j]).collect();
            let avg = values.iter().sum::<f64>() / replicates as f64;
            let se = (values.iter().map(|v| (v - avg).powi(2)).sum::<f64>() / (replicates - 1) as f64).sqrt();
            let se_naive = first.hidden_std.as_slice()[j] / (k as f64).sqrt();
            let diff = (hm - first.hidden_mp.as_slice()[j]).abs();
            inside += usize::from(diff <= 3.0 * se);
            inside_naive += usize::from(diff <= 3.0 * se_naive);
            total += 1;
            max_h = max_h.max(diff);
        }
        max_y = max_y.max(step.output_mean.max_abs_diff(&first.output_mean));
    }
    Ok(Agreement {
        replicates,
        within_3se: inside as f64 / total.max(1) as f64,
        within_3se_naive: inside_naive as f64 / total.max(1) as f64,
        max_hidden_diff: max_h,
        max_output_diff: max_y,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Vec<Matrix> {
        vec![Matrix::column_vector(v)]
    }

    #[test]
    fn r_squared_examples() {
        let y = col(&[0.0, 2.0]);
        assert_eq!(r_squared(&y, &y).unwrap(), 1.0);
        assert_eq!(r_squared(&y, &col(&[1.0, 1.0])).unwrap(), 0.0);
        assert!((r_squared(&y, &col(&[0.5, 1.5])).unwrap() - 0.75).abs() < 1e-15);
        assert!(matches!(r_squared(&col(&[3.0, 3.0]), &col(&[3.0, 3.0])), Err(Error::ZeroVariance)));
        assert!(r_squared(&y, &col(&[5.0, -4.0])).unwrap() <= 1.0);
    }

    #[test]
    fn ei_examples() {
        let s = ImprovementSense::Maximize;
        assert!((expected_improvement(1.0, 1.0, 1.0, s) - 0.39894).abs() < 1e-5);
        assert_eq!(expected_improvement(0.5, 0.0, 1.0, s), 0.0);
        assert_eq!(expected_improvement(1.5, 0.0, 1.0, s), 0.5);
        assert_eq!(expected_improvement(0.5, 0.0, 1.0, ImprovementSense::Minimize), 0.5);
    }

    #[test]
    fn ei_is_monotone_in_sigma_and_continuous_at_zero() {
        for gap in [-2.0, -0.3, 0.0, 0.4, 3.0] {
            let mut prev = expected_improvement(gap, 0.0, 0.0, ImprovementSense::Maximize);
            for k in 1..=400 {
                let v = expected_improvement(gap, k as f64 * 0.01, 0.0, ImprovementSense::Maximize);
                assert!(v >= prev - 1e-15 && v >= 0.0);
                prev = v;
            }
            let near = expected_improvement(gap, 1e-12, 0.0, ImprovementSense::Maximize);
            assert!((near - gap.max(0.0)).abs() < 1e-11);
        }
    }

    #[test]
    fn grid_helpers() {
        assert_eq!(canonical_grid(&[3.0, -1.0, 3.0, 0.0]), vec![-1.0, 0.0, 3.0]);
        let g = linspace(-75.0, 75.0, 100);
        assert_eq!((g.len(), g[0], g[99]), (100, -75.0, 75.0));
        assert_eq!(linspace(-60.0, 60.0, 25)[1], -55.0);
    }
}
