//! Point-estimate LSTM: forward pass, squared loss, backpropagation through
//! time and plain gradient updates.
//!
//! Gate order everywhere in this crate is forget, input, candidate, output.

use serde::{Deserialize, Serialize};

use crate::ard::{prior_stream, ArdRegressorState, HyperpriorConfig, LayerTag};
use crate::error::{Error, Result};
use crate::numerics::{mix_seed, stream_rng, Matrix};
use crate::optim::{AdamConfig, AdamState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gate {
    Forget,
    Input,
    Candidate,
    Output,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Forget, Gate::Input, Gate::Candidate, Gate::Output];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Gate::Forget => "forget",
            Gate::Input => "input",
            Gate::Candidate => "candidate",
            Gate::Output => "output",
        }
    }

    pub fn is_tanh(self) -> bool {
        matches!(self, Gate::Candidate)
    }

    #[inline]
    pub fn activate(self, x: f64) -> f64 {
        if self.is_tanh() {
            x.tanh()
        } else {
            sigmoid(x)
        }
    }

    /// Derivative expressed through the activation value.
    #[inline]
    pub fn slope_from_output(self, a: f64) -> f64 {
        if self.is_tanh() {
            1.0 - a * a
        } else {
            a * (1.0 - a)
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Weights of one gate: `w` is `(n_f + n_m) × n_m`, `b` has length `n_m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateWeights {
    pub w: Matrix,
    pub b: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmWeights {
    pub n_features: usize,
    pub n_units: usize,
    pub n_outputs: usize,
    pub gates: [GateWeights; 4],
    /// `(1 + n_m) × N`; row 0 is the output bias.
    pub output: Matrix,
}

impl LstmWeights {
    pub fn zeros(n_features: usize, n_units: usize, n_outputs: usize) -> Self {
        let gate = GateWeights {
            w: Matrix::zeros(n_features + n_units, n_units),
            b: vec![0.0; n_units],
        };
        LstmWeights {
            n_features,
            n_units,
            n_outputs,
            gates: [gate.clone(), gate.clone(), gate.clone(), gate],
            output: Matrix::zeros(1 + n_units, n_outputs),
        }
    }

    /// Means drawn from the same hyperprior samples that initialize an ARD
    /// model built with the same `seed`, so both start from equal weights.
    pub fn sample_prior(
        n_features: usize,
        n_units: usize,
        n_outputs: usize,
        hyper: &HyperpriorConfig,
        seed: u64,
    ) -> Self {
        let mut weights = Self::zeros(n_features, n_units, n_outputs);
        let d_gate = 1 + n_features + n_units;
        for gate in Gate::ALL {
            for unit in 0..n_units {
                let mut rng = stream_rng(mix_seed(seed, 0), prior_stream(LayerTag::Gate(gate), 0, unit));
                let reg = ArdRegressorState::from_prior(hyper, d_gate, &mut rng);
                let gw = &mut weights.gates[gate.index()];
                gw.b[unit] = reg.mean[0];
                for j in 0..(n_features + n_units) {
                    gw.w[(j, unit)] = reg.mean[1 + j];
                }
            }
        }
        for o in 0..n_outputs {
            let mut rng = stream_rng(mix_seed(seed, 0), prior_stream(LayerTag::Readout, 0, o));
            let reg = ArdRegressorState::from_prior(hyper, 1 + n_units, &mut rng);
            for j in 0..=n_units {
                weights.output[(j, o)] = reg.mean[j];
            }
        }
        weights
    }

    pub fn param_count(&self) -> usize {
        4 * ((self.n_features + self.n_units) * self.n_units + self.n_units) + (1 + self.n_units) * self.n_outputs
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for g in &self.gates {
            out.extend_from_slice(g.w.as_slice());
            out.extend_from_slice(&g.b);
        }
        out.extend_from_slice(self.output.as_slice());
        out
    }

    pub fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut at = 0;
        for g in &mut self.gates {
            let n = g.w.as_slice().len();
            g.w.as_mut_slice().copy_from_slice(&flat[at..at + n]);
            at += n;
            let n = g.b.len();
            g.b.copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        self.output.as_mut_slice().copy_from_slice(&flat[at..]);
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }

    fn check_shapes(&self) -> Result<()> {
        let rows = self.n_features + self.n_units;
        for g in &self.gates {
            if g.w.shape() != (rows, self.n_units) || g.b.len() != self.n_units {
                return Err(Error::shape(
                    "LstmWeights gate",
                    format!("{rows}x{}", self.n_units),
                    format!("{}x{}", g.w.rows(), g.w.cols()),
                ));
            }
        }
        if self.output.shape() != (1 + self.n_units, self.n_outputs) {
            return Err(Error::shape(
                "LstmWeights output",
                format!("{}x{}", 1 + self.n_units, self.n_outputs),
                format!("{}x{}", self.output.rows(), self.output.cols()),
            ));
        }
        Ok(())
    }
}

/// One time step of a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct CellStep {
    /// `[x_i, h_{i-1}]`, `n_b × (n_f + n_m)`.
    pub phi: Matrix,
    /// Gate activations in [`Gate::ALL`] order.
    pub gates: [Matrix; 4],
    pub cell_prev: Matrix,
    pub cell: Matrix,
    pub hidden: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellTrace {
    pub steps: Vec<CellStep>,
    pub predictions: Vec<Matrix>,
}

pub(crate) fn check_sequence(inputs: &[Matrix], n_features: usize) -> Result<usize> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::shape("input sequence", "at least one step", 0))?;
    let n_b = first.rows();
    for x in inputs {
        if x.shape() != (n_b, n_features) {
            return Err(Error::shape(
                "input sequence",
                format!("{n_b}x{n_features}"),
                format!("{}x{}", x.rows(), x.cols()),
            ));
        }
    }
    Ok(n_b)
}

/// Runs the cell over `inputs` (one `n_b × n_f` matrix per step).
pub fn lstm_forward(weights: &LstmWeights, inputs: &[Matrix], h0: &Matrix, c0: &Matrix) -> Result<CellTrace> {
    weights.check_shapes()?;
    let n_f = weights.n_features;
    let n_m = weights.n_units;
    let n_b = check_sequence(inputs, n_f)?;
    for (name, m) in [("h0", h0), ("c0", c0)] {
        if m.shape() != (n_b, n_m) {
            return Err(Error::shape(
                if name == "h0" { "initial hidden state" } else { "initial cell state" },
                format!("{n_b}x{n_m}"),
                format!("{}x{}", m.rows(), m.cols()),
            ));
        }
    }

    let mut steps = Vec::with_capacity(inputs.len());
    let mut predictions = Vec::with_capacity(inputs.len());
    let mut h_prev = h0.clone();
    let mut c_prev = c0.clone();
    for x in inputs {
        let mut phi = Matrix::zeros(n_b, n_f + n_m);
        for b in 0..n_b {
            let row = phi.row_mut(b);
            row[..n_f].copy_from_slice(x.row(b));
            row[n_f..].copy_from_slice(h_prev.row(b));
        }
        let gates: [Matrix; 4] = Gate::ALL.map(|g| {
            let gw = &weights.gates[g.index()];
            let mut act = Matrix::zeros(n_b, n_m);
            for b in 0..n_b {
                let phi_row = phi.row(b);
                for l in 0..n_m {
                    let mut acc = 0.0;
                    acc += gw.b[l];
                    for (j, p) in phi_row.iter().enumerate() {
                        acc += p * gw.w[(j, l)];
                    }
                    act[(b, l)] = g.activate(acc);
                }
            }
            act
        });
        let [f, z, cand, o] = &gates;
        let mut cell = Matrix::zeros(n_b, n_m);
        let mut hidden = Matrix::zeros(n_b, n_m);
        for b in 0..n_b {
            for l in 0..n_m {
                let c = f[(b, l)] * c_prev[(b, l)] + z[(b, l)] * cand[(b, l)];
                cell[(b, l)] = c;
                hidden[(b, l)] = o[(b, l)] * c.tanh();
            }
        }
        predictions.push(readout(&weights.output, &hidden));
        steps.push(CellStep {
            phi,
            gates,
            cell_prev: c_prev,
            cell: cell.clone(),
            hidden: hidden.clone(),
        });
        h_prev = hidden;
        c_prev = cell;
    }
    Ok(CellTrace { steps, predictions })
}

/// `[1, h] · w_y`
pub(crate) fn readout(output: &Matrix, hidden: &Matrix) -> Matrix {
    let n_b = hidden.rows();
    let n_out = output.cols();
    let mut y = Matrix::zeros(n_b, n_out);
    for b in 0..n_b {
        let h = hidden.row(b);
        for o in 0..n_out {
            let mut acc = 0.0;
            acc += output[(0, o)];
            for (j, hv) in h.iter().enumerate() {
                acc += hv * output[(1 + j, o)];
            }
            y[(b, o)] = acc;
        }
    }
    y
}

/// `Σ_i ½ ⟨y_i − ŷ_i, y_i − ŷ_i⟩`
pub fn mse_loss(targets: &[Matrix], predictions: &[Matrix]) -> Result<f64> {
    if targets.len() != predictions.len() {
        return Err(Error::shape("mse_loss steps", targets.len(), predictions.len()));
    }
    let mut total = 0.0;
    for (y, p) in targets.iter().zip(predictions) {
        if y.shape() != p.shape() {
            return Err(Error::shape(
                "mse_loss step",
                format!("{}x{}", y.rows(), y.cols()),
                format!("{}x{}", p.rows(), p.cols()),
            ));
        }
        total += 0.5 * y.as_slice().iter().zip(p.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total)
}

/// Per-step gate pre-activation gradients, as produced by the six
/// backpropagation equations. Exposed for inspection and testing.
#[derive(Clone, Debug, PartialEq)]
pub struct GateDeltas {
    pub steps: Vec<[Matrix; 4]>,
}

/// Gradients of [`mse_loss`] with respect to every weight.
pub fn lstm_backward(trace: &CellTrace, targets: &[Matrix], weights: &LstmWeights) -> Result<LstmWeights> {
    lstm_backward_with_deltas(trace, targets, weights).map(|(g, _)| g)
}

pub fn lstm_backward_with_deltas(
    trace: &CellTrace,
    targets: &[Matrix],
    weights: &LstmWeights,
) -> Result<(LstmWeights, GateDeltas)> {
    weights.check_shapes()?;
    let n_f = weights.n_features;
    let n_m = weights.n_units;
    let n_out = weights.n_outputs;
    let m = trace.steps.len();
    if trace.predictions.len() != m {
        return Err(Error::TraceStale("prediction count differs from step count".into()));
    }
    if targets.len() != m {
        return Err(Error::shape("lstm_backward targets", m, targets.len()));
    }
    let n_b = trace.steps.first().map_or(0, |s| s.phi.rows());
    for (s, (p, y)) in trace.steps.iter().zip(trace.predictions.iter().zip(targets)) {
        if s.phi.shape() != (n_b, n_f + n_m) || s.hidden.shape() != (n_b, n_m) {
            return Err(Error::TraceStale(format!(
                "step shape {}x{} does not match weights with n_f={n_f}, n_m={n_m}",
                s.phi.rows(),
                s.phi.cols()
            )));
        }
        if p.shape() != (n_b, n_out) {
            return Err(Error::TraceStale("prediction width differs from output layer".into()));
        }
        if y.shape() != (n_b, n_out) {
            return Err(Error::shape("lstm_backward target", format!("{n_b}x{n_out}"), format!("{}x{}", y.rows(), y.cols())));
        }
    }

    let mut grads = LstmWeights::zeros(n_f, n_m, n_out);
    let mut deltas = vec![Gate::ALL.map(|_| Matrix::zeros(n_b, n_m)); m];
    let mut dh_next = Matrix::zeros(n_b, n_m); // ∇h from step i+1
    let mut dc_next = Matrix::zeros(n_b, n_m);
    let mut f_next = Matrix::zeros(n_b, n_m);

    for i in (0..m).rev() {
        let step = &trace.steps[i];
        let resid = trace.predictions[i].sub(&targets[i]); // ∂J/∂ŷ
        // output layer
        for b in 0..n_b {
            for o in 0..n_out {
                let r = resid[(b, o)];
                grads.output[(0, o)] += r;
                for l in 0..n_m {
                    grads.output[(1 + l, o)] += step.hidden[(b, l)] * r;
                }
            }
        }
        let [f, z, cand, og] = &step.gates;
        let mut dgs = Gate::ALL.map(|_| Matrix::zeros(n_b, n_m));
        for b in 0..n_b {
            for l in 0..n_m {
                let mut dh = dh_next[(b, l)];
                for o in 0..n_out {
                    dh += resid[(b, o)] * weights.output[(1 + l, o)];
                }
                let tc = step.cell[(b, l)].tanh();
                let dc = dh * og[(b, l)] * (1.0 - tc * tc) + dc_next[(b, l)] * f_next[(b, l)];
                let (fv, zv, cv, ov) = (f[(b, l)], z[(b, l)], cand[(b, l)], og[(b, l)]);
                dgs[Gate::Candidate.index()][(b, l)] = dc * zv * (1.0 - cv * cv);
                dgs[Gate::Input.index()][(b, l)] = dc * cv * zv * (1.0 - zv);
                dgs[Gate::Forget.index()][(b, l)] = dc * step.cell_prev[(b, l)] * fv * (1.0 - fv);
                dgs[Gate::Output.index()][(b, l)] = dh * tc * ov * (1.0 - ov);
                dc_next[(b, l)] = dc;
            }
        }
        // weight gradients and the recurrent term for step i-1
        let mut dh_prev = Matrix::zeros(n_b, n_m);
        for g in Gate::ALL {
            let dg = &dgs[g.index()];
            let gw = &weights.gates[g.index()];
            let gg = &mut grads.gates[g.index()];
            let contrib = step.phi.t_matmul(dg);
            gg.w = gg.w.add(&contrib);
            for b in 0..n_b {
                for l in 0..n_m {
                    let d = dg[(b, l)];
                    gg.b[l] += d;
                    if d == 0.0 {
                        continue;
                    }
                    for j in 0..n_m {
                        dh_prev[(b, j)] += d * gw.w[(n_f + j, l)];
                    }
                }
            }
        }
        f_next = f.clone();
        dh_next = dh_prev;
        deltas[i] = dgs;
    }
    Ok((grads, GateDeltas { steps: deltas }))
}

/// `w ← w − λ ∂J/∂w` for every weight.
pub fn sgd_step(weights: &LstmWeights, gradients: &LstmWeights, learning_rate: f64) -> LstmWeights {
    assert!(learning_rate > 0.0, "learning rate must be positive");
    let w = weights.flatten();
    let g = gradients.flatten();
    let mut out = weights.clone();
    out.assign_flat(&w.iter().zip(&g).map(|(w, g)| w - learning_rate * g).collect::<Vec<_>>());
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineOptimizer {
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub n_units: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub optimizer: BaselineOptimizer,
    pub hyperprior: HyperpriorConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            n_units: 16,
            learning_rate: 0.005,
            epochs: 4000,
            optimizer: BaselineOptimizer::Adam,
            hyperprior: HyperpriorConfig::default(),
        }
    }
}

/// Point-estimate LSTM together with its training history.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineModel {
    pub config: BaselineConfig,
    pub weights: LstmWeights,
    /// Loss after each epoch.
    pub history: Vec<f64>,
}

impl BaselineModel {
    pub fn new(config: BaselineConfig, n_features: usize, n_outputs: usize, seed: u64) -> Self {
        let weights = LstmWeights::sample_prior(n_features, config.n_units, n_outputs, &config.hyperprior, seed);
        BaselineModel {
            config,
            weights,
            history: Vec::new(),
        }
    }

    /// Full-batch training on normalized `inputs`/`targets`.
    pub fn fit(&mut self, inputs: &[Matrix], targets: &[Matrix]) -> Result<()> {
        let n_b = check_sequence(inputs, self.weights.n_features)?;
        let zeros = Matrix::zeros(n_b, self.weights.n_units);
        let mut adam = AdamState::new(self.weights.param_count(), AdamConfig::default());
        for epoch in 0..self.config.epochs {
            let trace = lstm_forward(&self.weights, inputs, &zeros, &zeros)?;
            let loss = mse_loss(targets, &trace.predictions)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch: epoch + 1 });
            }
            self.history.push(loss);
            let grads = lstm_backward(&trace, targets, &self.weights)?;
            self.weights = match self.config.optimizer {
                BaselineOptimizer::Sgd => sgd_step(&self.weights, &grads, self.config.learning_rate),
                BaselineOptimizer::Adam => {
                    let dir = adam.direction(&grads.flatten());
                    let mut w = self.weights.flatten();
                    for (w, d) in w.iter_mut().zip(&dir) {
                        *w -= self.config.learning_rate * d;
                    }
                    let mut next = self.weights.clone();
                    next.assign_flat(&w);
                    next
                }
            };
        }
        Ok(())
    }

    pub fn predict(&self, inputs: &[Matrix]) -> Result<Vec<Matrix>> {
        let n_b = check_sequence(inputs, self.weights.n_features)?;
        let zeros = Matrix::zeros(n_b, self.weights.n_units);
        Ok(lstm_forward(&self.weights, inputs, &zeros, &zeros)?.predictions)
    }
}
