use serde::{Deserialize, Serialize};

use super::{ArdLstmModel, ForwardOptions, SparsityReport};
use crate::error::{Error, Result};
use crate::numerics::{mix_seed, Matrix};

/// Stops once `|ℒ_n − ℒ_{n−w}| ≤ tol` has held on two checks that are at
/// least `w` epochs apart.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceMonitor {
    window: usize,
    tol: f64,
    required_hits: usize,
    hits: usize,
    next_check: usize,
    history: Vec<f64>,
}

impl ConvergenceMonitor {
    pub fn new(window: usize, tol: f64) -> Self {
        ConvergenceMonitor {
            window,
            tol,
            required_hits: 2,
            hits: 0,
            next_check: window + 1,
            history: Vec::new(),
        }
    }

    /// Records the objective of the next epoch and reports whether training
    /// should stop.
    pub fn push(&mut self, value: f64) -> bool {
        self.history.push(value);
        let n = self.history.len();
        if n < self.next_check {
            return false;
        }
        if (self.history[n - 1] - self.history[n - 1 - self.window]).abs() <= self.tol {
            self.hits += 1;
            self.next_check = n + self.window;
        }
        self.hits >= self.required_hits
    }

    pub fn hits(&self) -> usize {
        self.hits
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }
}

/// Calls `epoch_fn(n)` for `n = 1, 2, …` until the monitor fires or
/// `max_epochs` is reached. Returns `(epochs run, converged)`.
pub fn run_until_converged(
    monitor: &mut ConvergenceMonitor,
    max_epochs: usize,
    mut epoch_fn: impl FnMut(usize) -> Result<f64>,
) -> Result<(usize, bool)> {
    for n in 1..=max_epochs {
        if monitor.push(epoch_fn(n)?) {
            return Ok((n, true));
        }
    }
    Ok((max_epochs, false))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub epochs: usize,
    pub converged: bool,
    pub final_likelihood: f64,
    pub likelihood: Vec<f64>,
    /// Entry 0 is the state before the first epoch.
    pub sparsity: Vec<SparsityReport>,
}

impl ArdLstmModel {
    /// Alternates forward and backward epochs on normalized data until the
    /// convergence rule fires or `config.max_epochs` is reached.
    pub fn fit(&mut self, inputs: &[Matrix], targets: &[Matrix]) -> Result<ConvergenceReport> {
        let max_epochs = self.config.max_epochs;
        if max_epochs <= self.config.convergence_window {
            return Err(Error::Config {
                field: "epochs".into(),
                message: format!("must exceed the convergence window {}, got {max_epochs}", self.config.convergence_window),
            });
        }
        let opts = ForwardOptions {
            propagation: self.config.propagation,
            mc_samples: self.config.mc_samples,
            keep_samples: false,
        };
        let mut monitor = ConvergenceMonitor::new(self.config.convergence_window, self.config.convergence_tol);
        let start = self.epochs_trained();
        let train_seed = mix_seed(self.seed, 1);
        let (epochs, converged) = run_until_converged(&mut monitor, max_epochs, |n| {
            let epoch = start + n;
            let trace = self.forward_epoch(inputs, opts, mix_seed(train_seed, epoch as u64))?;
            let report = self.backward_epoch(&trace, targets, epoch)?;
            self.history.likelihood.push(report.likelihood);
            self.history.sparsity.push(self.sparsity_report());
            Ok(report.likelihood)
        })?;
        Ok(ConvergenceReport {
            epochs,
            converged,
            final_likelihood: *monitor.history().last().unwrap_or(&f64::NAN),
            likelihood: monitor.history().to_vec(),
            sparsity: self.history.sparsity[start..].to_vec(),
        })
    }
}
