//! LSTM cell whose gate and readout weights are relevance-determination
//! regressions fitted to local gate targets.

mod backward;
mod forward;
mod train;

use serde::{Deserialize, Serialize};

use crate::ard::{prior_stream, ArdRegressorState, Bounds, HyperpriorConfig, LayerTag};
use crate::error::{Error, Result};
use crate::lstm::{Gate, GateWeights, LstmWeights};
use crate::numerics::{mix_seed, stream_rng, Matrix};
use crate::optim::{AdamConfig, AdamState};

pub use backward::{likelihood_grad_hidden, BackwardReport};
pub use forward::{EpochTrace, ForwardOptions, Prediction, StepSamples, StepTrace};
pub use train::{run_until_converged, ConvergenceMonitor, ConvergenceReport};

/// Hard target bounds for sigmoid gates.
pub const SIGMOID_CLIP: f64 = 9.0;
/// Hard target bounds for the tanh candidate gate.
pub const TANH_CLIP: f64 = 5.0;

pub fn target_clip(gate: Gate) -> f64 {
    if gate.is_tanh() {
        TANH_CLIP
    } else {
        SIGMOID_CLIP
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Propagation {
    /// Monte-Carlo gate samples, cell state carried in samples.
    Sampled,
    /// Posterior means pushed through the activations.
    MeanBased,
}

/// How the spread of sampled gate and hidden outputs is summarized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpreadEstimator {
    MeanAbsoluteDeviation,
    StandardDeviation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArdLstmConfig {
    pub n_features: usize,
    pub n_units: usize,
    pub n_outputs: usize,
    /// Monte-Carlo samples `K` per gate output.
    pub mc_samples: usize,
    /// Target-update rate `λ`.
    pub learning_rate: f64,
    /// Relevance threshold `τ`.
    pub tau: f64,
    pub max_epochs: usize,
    pub bounds: Bounds,
    pub hyperprior: HyperpriorConfig,
    pub adam: AdamConfig,
    /// One gate regression per unit for all time steps (otherwise one per step).
    pub share_weights_over_time: bool,
    /// One readout regression per output for all time steps.
    pub share_output_over_time: bool,
    pub propagation: Propagation,
    pub spread: SpreadEstimator,
    pub convergence_window: usize,
    pub convergence_tol: f64,
}

impl ArdLstmConfig {
    pub fn new(n_features: usize, n_units: usize, n_outputs: usize) -> Self {
        ArdLstmConfig {
            n_features,
            n_units,
            n_outputs,
            mc_samples: 100,
            learning_rate: 0.005,
            tau: 1e-4,
            max_epochs: 4000,
            bounds: Bounds::default(),
            hyperprior: HyperpriorConfig::default(),
            adam: AdamConfig::default(),
            share_weights_over_time: true,
            share_output_over_time: false,
            propagation: Propagation::Sampled,
            spread: SpreadEstimator::MeanAbsoluteDeviation,
            convergence_window: 20,
            convergence_tol: 2e-2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| Err(Error::Config {
            field: field.into(),
            message,
        });
        if self.n_features == 0 {
            return bad("n_features", "must be at least 1".into());
        }
        if self.n_units == 0 {
            return bad("units", "must be at least 1".into());
        }
        if self.n_outputs == 0 {
            return bad("n_outputs", "must be at least 1".into());
        }
        if self.mc_samples == 0 {
            return bad("mc_samples", "must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("lr", format!("must be positive, got {}", self.learning_rate));
        }
        if !(self.tau >= 0.0 && self.tau < 1.0) {
            return bad("tau", format!("must lie in [0, 1), got {}", self.tau));
        }
        if self.convergence_window == 0 || !(self.convergence_tol >= 0.0) {
            return bad("convergence", "window must be positive and tolerance non-negative".into());
        }
        self.bounds.validate()?;
        self.hyperprior.validate(&self.bounds)
    }

    pub fn gate_dim(&self) -> usize {
        1 + self.n_features + self.n_units
    }

    pub fn readout_dim(&self) -> usize {
        1 + self.n_units
    }
}

/// Pruned fractions of the non-bias weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    /// Per gate, in [`Gate::ALL`] order.
    pub gates: [f64; 4],
    pub readout: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Per-observation readout evidence `ℒ_y` after each epoch.
    pub likelihood: Vec<f64>,
    /// Entry 0 describes the freshly initialized model, entry `n` epoch `n`.
    pub sparsity: Vec<SparsityReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArdLstmModel {
    pub config: ArdLstmConfig,
    /// Sequence length the regressions were built for.
    pub n_steps: usize,
    /// `gates[g][slot][unit]`
    pub gates: [Vec<Vec<ArdRegressorState>>; 4],
    /// `readout[slot][output]`
    pub readout: Vec<Vec<ArdRegressorState>>,
    /// Latest gate targets `s_gi`, `targets[g][step]` of shape `n_b × n_m`.
    pub targets: Option<[Vec<Matrix>; 4]>,
    pub adam: Option<[AdamState; 4]>,
    pub history: TrainHistory,
    /// Seed the prior was drawn from; later epochs derive their streams from it.
    pub seed: u64,
}

impl ArdLstmModel {
    /// Fresh model with every regression drawn from the hyperprior.
    pub fn new(config: ArdLstmConfig, n_steps: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if n_steps == 0 {
            return Err(Error::Config {
                field: "n_steps".into(),
                message: "must be at least 1".into(),
            });
        }
        let gate_slots = if config.share_weights_over_time { 1 } else { n_steps };
        let readout_slots = if config.share_output_over_time { 1 } else { n_steps };
        let prior_seed = mix_seed(seed, 0);
        let gates = Gate::ALL.map(|g| {
            (0..gate_slots)
                .map(|slot| {
                    (0..config.n_units)
                        .map(|l| {
                            let mut rng = stream_rng(prior_seed, prior_stream(LayerTag::Gate(g), slot, l));
                            ArdRegressorState::from_prior(&config.hyperprior, config.gate_dim(), &mut rng)
                        })
                        .collect()
                })
                .collect()
        });
        let readout = (0..readout_slots)
            .map(|slot| {
                (0..config.n_outputs)
                    .map(|o| {
                        let mut rng = stream_rng(prior_seed, prior_stream(LayerTag::Readout, slot, o));
                        ArdRegressorState::from_prior(&config.hyperprior, config.readout_dim(), &mut rng)
                    })
                    .collect()
            })
            .collect();
        let mut model = ArdLstmModel {
            config,
            n_steps,
            gates,
            readout,
            targets: None,
            adam: None,
            history: TrainHistory::default(),
            seed,
        };
        model.history.sparsity.push(model.sparsity_report());
        Ok(model)
    }

    pub fn gate_slot(&self, step: usize) -> usize {
        if self.config.share_weights_over_time {
            0
        } else {
            step
        }
    }

    pub fn readout_slot(&self, step: usize) -> usize {
        if self.config.share_output_over_time {
            0
        } else {
            step
        }
    }

    pub fn epochs_trained(&self) -> usize {
        self.history.likelihood.len()
    }

    pub fn is_trained(&self) -> bool {
        self.epochs_trained() > 0
    }

    /// Posterior means of one gate slot laid out as baseline weights, plus
    /// the readout of the given slot.
    pub fn mean_weights(&self, gate_slot: usize, readout_slot: usize) -> LstmWeights {
        let c = &self.config;
        let gates = Gate::ALL.map(|g| {
            let regs = &self.gates[g.index()][gate_slot];
            let mut w = Matrix::zeros(c.n_features + c.n_units, c.n_units);
            let mut b = vec![0.0; c.n_units];
            for (l, reg) in regs.iter().enumerate() {
                b[l] = reg.mean[0];
                for j in 0..(c.n_features + c.n_units) {
                    w[(j, l)] = reg.mean[1 + j];
                }
            }
            GateWeights { w, b }
        });
        let mut output = Matrix::zeros(1 + c.n_units, c.n_outputs);
        for (o, reg) in self.readout[readout_slot].iter().enumerate() {
            for j in 0..=c.n_units {
                output[(j, o)] = reg.mean[j];
            }
        }
        LstmWeights {
            n_features: c.n_features,
            n_units: c.n_units,
            n_outputs: c.n_outputs,
            gates,
            output,
        }
    }

    /// Pruned fraction per gate, for the readout and in total. Bias weights
    /// are not counted.
    pub fn sparsity_report(&self) -> SparsityReport {
        let count = |regs: &[Vec<ArdRegressorState>]| {
            let mut pruned = 0usize;
            let mut total = 0usize;
            for reg in regs.iter().flatten() {
                pruned += reg.pruned[1..].iter().filter(|p| **p).count();
                total += reg.dim() - 1;
            }
            (pruned, total)
        };
        let mut gates = [0.0; 4];
        let mut all = (0usize, 0usize);
        for g in Gate::ALL {
            let (p, t) = count(&self.gates[g.index()]);
            gates[g.index()] = fraction(p, t);
            all.0 += p;
            all.1 += t;
        }
        let (p, t) = count(&self.readout);
        all.0 += p;
        all.1 += t;
        SparsityReport {
            gates,
            readout: fraction(p, t),
            total: fraction(all.0, all.1),
        }
    }

    fn check_batch(&self, inputs: &[Matrix]) -> Result<usize> {
        let n_b = crate::lstm::check_sequence(inputs, self.config.n_features)?;
        let needs_fixed_length = !self.config.share_weights_over_time || !self.config.share_output_over_time;
        if needs_fixed_length && inputs.len() != self.n_steps {
            return Err(Error::shape("sequence length", self.n_steps, inputs.len()));
        }
        Ok(n_b)
    }
}

fn fraction(part: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        part as f64 / total as f64
    }
}
