use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{ArdLstmModel, Propagation, SpreadEstimator};
use crate::error::{Error, Result};
use crate::lstm::Gate;
use crate::numerics::{dot, shifted_mean, stream_rng, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ForwardOptions {
    pub propagation: Propagation,
    pub mc_samples: usize,
    /// Keep every sampled gate, cell and hidden value in the trace.
    pub keep_samples: bool,
}

/// Raw samples of one step, laid out `[k][b][l]`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepSamples {
    pub k: usize,
    pub gates: [Vec<f64>; 4],
    pub cell: Vec<f64>,
    pub hidden: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepTrace {
    /// `[1, x_i, h_{i-1,MP}]`, `n_b × D`.
    pub phi: Matrix,
    /// Gate predictive mean `Φμ` and weight-uncertainty variance `φᵀΣφ`.
    pub pre_mean: [Matrix; 4],
    pub pre_var: [Matrix; 4],
    /// Average of the sampled pre-activations.
    pub pre_sample_mean: [Matrix; 4],
    pub gate_mean: [Matrix; 4],
    pub gate_mad: [Matrix; 4],
    pub gate_std: [Matrix; 4],
    pub cell_mean: Matrix,
    pub hidden_mp: Matrix,
    pub hidden_mad: Matrix,
    pub hidden_std: Matrix,
    pub output_mean: Matrix,
    pub output_var: Matrix,
    pub samples: Option<StepSamples>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochTrace {
    pub propagation: Propagation,
    pub mc_samples: usize,
    pub steps: Vec<StepTrace>,
}

impl EpochTrace {
    pub fn output_means(&self) -> Vec<Matrix> {
        self.steps.iter().map(|s| s.output_mean.clone()).collect()
    }
}

/// Predictive moments per step.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub mean: Vec<Matrix>,
    pub variance: Vec<Matrix>,
    pub hidden_mean: Vec<Matrix>,
    /// Hidden spread with the configured estimator.
    pub hidden_spread: Vec<Matrix>,
    pub hidden_mad: Vec<Matrix>,
    pub hidden_std: Vec<Matrix>,
}

struct GateColumn {
    pre_mean: Vec<f64>,
    pre_var: Vec<f64>,
    /// `[k][b]`
    pre: Vec<f64>,
}

fn spread(values: &[f64], mean: f64) -> (f64, f64) {
    let n = values.len() as f64;
    let mad = values.iter().map(|v| (v - mean).abs()).sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mad, std)
}

impl ArdLstmModel {
    /// Propagates `inputs` through the cell. Gate pre-activations are drawn
    /// from `N(Φμ, φᵀΣφ)`; each gate unit owns one random stream derived
    /// from `seed`, so the result does not depend on thread scheduling.
    pub fn forward_epoch(&self, inputs: &[Matrix], opts: ForwardOptions, seed: u64) -> Result<EpochTrace> {
        let n_b = self.check_batch(inputs)?;
        let c = &self.config;
        let (n_f, n_m, n_out) = (c.n_features, c.n_units, c.n_outputs);
        let d = c.gate_dim();
        let k = match opts.propagation {
            Propagation::Sampled => opts.mc_samples,
            Propagation::MeanBased => 1,
        };
        if k == 0 {
            return Err(Error::Config {
                field: "mc_samples".into(),
                message: "must be at least 1".into(),
            });
        }
        let sampled = opts.propagation == Propagation::Sampled;
        let mut rngs: Vec<ChaCha8Rng> = (0..4 * n_m).map(|s| stream_rng(seed, s as u64)).collect();

        let mut steps = Vec::with_capacity(inputs.len());
        let mut h_prev = Matrix::zeros(n_b, n_m);
        // cell samples `[k][b][l]`
        let mut c_prev = vec![0.0; k * n_b * n_m];
        for (i, x) in inputs.iter().enumerate() {
            let mut phi = Matrix::zeros(n_b, d);
            for b in 0..n_b {
                let row = phi.row_mut(b);
                row[0] = 1.0;
                row[1..1 + n_f].copy_from_slice(x.row(b));
                row[1 + n_f..].copy_from_slice(h_prev.row(b));
            }
            let slot = self.gate_slot(i);
            let columns: Vec<GateColumn> = rngs
                .par_iter_mut()
                .enumerate()
                .map(|(task, rng)| {
                    let (g, l) = (task / n_m, task % n_m);
                    let reg = &self.gates[g][slot][l];
                    let mut col = GateColumn {
                        pre_mean: vec![0.0; n_b],
                        pre_var: vec![0.0; n_b],
                        pre: vec![0.0; k * n_b],
                    };
                    for b in 0..n_b {
                        let row = phi.row(b);
                        col.pre_mean[b] = dot(row, &reg.mean);
                        col.pre_var[b] = reg.cov.quad_form(row).max(0.0);
                    }
                    for kk in 0..k {
                        for b in 0..n_b {
                            let v = if sampled {
                                let xi: f64 = rng.sample(StandardNormal);
                                col.pre_mean[b] + col.pre_var[b].sqrt() * xi
                            } else {
                                col.pre_mean[b]
                            };
                            col.pre[kk * n_b + b] = v;
                        }
                    }
                    col
                })
                .collect();

            let mut gate_samples: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; k * n_b * n_m]);
            let mut pre_mean: [Matrix; 4] = std::array::from_fn(|_| Matrix::zeros(n_b, n_m));
            let mut pre_var: [Matrix; 4] = std::array::from_fn(|_| Matrix::zeros(n_b, n_m));
            let mut pre_sample_mean: [Matrix; 4] = std::array::from_fn(|_| Matrix::zeros(n_b, n_m));
            for g in Gate::ALL {
                let gi = g.index();
                for l in 0..n_m {
                    let col = &columns[gi * n_m + l];
                    for b in 0..n_b {
                        pre_mean[gi][(b, l)] = col.pre_mean[b];
                        pre_var[gi][(b, l)] = col.pre_var[b];
                        pre_sample_mean[gi][(b, l)] = shifted_mean((0..k).map(|kk| col.pre[kk * n_b + b]));
                        for kk in 0..k {
                            gate_samples[gi][(kk * n_b + b) * n_m + l] = g.activate(col.pre[kk * n_b + b]);
                        }
                    }
                }
            }

            let [f, z, cand, o] = &gate_samples;
            let mut cell = vec![0.0; k * n_b * n_m];
            let mut hidden = vec![0.0; k * n_b * n_m];
            for idx in 0..cell.len() {
                let cv = f[idx] * c_prev[idx] + z[idx] * cand[idx];
                cell[idx] = cv;
                hidden[idx] = o[idx] * cv.tanh();
            }

            let summarize = |samples: &[f64]| {
                let mut mean = Matrix::zeros(n_b, n_m);
                let mut mad = Matrix::zeros(n_b, n_m);
                let mut std = Matrix::zeros(n_b, n_m);
                let mut buf = vec![0.0; k];
                for b in 0..n_b {
                    for l in 0..n_m {
                        for (kk, v) in buf.iter_mut().enumerate() {
                            *v = samples[(kk * n_b + b) * n_m + l];
                        }
                        let m = shifted_mean(buf.iter().copied());
                        let (a, s) = spread(&buf, m);
                        mean[(b, l)] = m;
                        mad[(b, l)] = a;
                        std[(b, l)] = s;
                    }
                }
                (mean, mad, std)
            };
            let mut gate_mean: [Matrix; 4] = std::array::from_fn(|_| Matrix::zeros(0, 0));
            let mut gate_mad: [Matrix; 4] = std::array::from_fn(|_| Matrix::zeros(0, 0));
            let mut gate_std: [Matrix; 4] = std::array::from_fn(|_| Matrix::zeros(0, 0));
            for gi in 0..4 {
                let (m, a, s) = summarize(&gate_samples[gi]);
                gate_mean[gi] = m;
                gate_mad[gi] = a;
                gate_std[gi] = s;
            }
            let (cell_mean, _, _) = summarize(&cell);
            let (hidden_mp, hidden_mad, hidden_std) = summarize(&hidden);

            let rslot = self.readout_slot(i);
            let mut output_mean = Matrix::zeros(n_b, n_out);
            let mut output_var = Matrix::zeros(n_b, n_out);
            let mut psi = vec![0.0; 1 + n_m];
            for b in 0..n_b {
                psi[0] = 1.0;
                psi[1..].copy_from_slice(hidden_mp.row(b));
                for (oi, reg) in self.readout[rslot].iter().enumerate() {
                    let (m, v) = reg.predictive(&psi);
                    output_mean[(b, oi)] = m;
                    output_var[(b, oi)] = v;
                }
            }

            let samples = opts.keep_samples.then(|| StepSamples {
                k,
                gates: gate_samples.clone(),
                cell: cell.clone(),
                hidden: hidden.clone(),
            });
            steps.push(StepTrace {
                phi,
                pre_mean,
                pre_var,
                pre_sample_mean,
                gate_mean,
                gate_mad,
                gate_std,
                cell_mean,
                hidden_mp: hidden_mp.clone(),
                hidden_mad,
                hidden_std,
                output_mean,
                output_var,
                samples,
            });
            h_prev = hidden_mp;
            c_prev = cell;
        }
        Ok(EpochTrace {
            propagation: opts.propagation,
            mc_samples: k,
            steps,
        })
    }

    /// Predictive output moments for normalized `inputs`.
    pub fn predict(&self, inputs: &[Matrix], propagation: Propagation, mc_samples: usize, seed: u64) -> Result<Prediction> {
        if !self.is_trained() {
            return Err(Error::NotTrained);
        }
        let trace = self.forward_epoch(
            inputs,
            ForwardOptions {
                propagation,
                mc_samples,
                keep_samples: false,
            },
            seed,
        )?;
        let spread_of = |s: &StepTrace| match self.config.spread {
            SpreadEstimator::MeanAbsoluteDeviation => s.hidden_mad.clone(),
            SpreadEstimator::StandardDeviation => s.hidden_std.clone(),
        };
        Ok(Prediction {
            hidden_spread: trace.steps.iter().map(spread_of).collect(),
            mean: trace.steps.iter().map(|s| s.output_mean.clone()).collect(),
            variance: trace.steps.iter().map(|s| s.output_var.clone()).collect(),
            hidden_mean: trace.steps.iter().map(|s| s.hidden_mp.clone()).collect(),
            hidden_mad: trace.steps.iter().map(|s| s.hidden_mad.clone()).collect(),
            hidden_std: trace.steps.iter().map(|s| s.hidden_std.clone()).collect(),
        })
    }
}
