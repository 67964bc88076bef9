use rayon::prelude::*;

use super::{target_clip, ArdLstmModel, EpochTrace};
use crate::ard::{design_gradient, evidence_from_posterior, posterior_from_stats, ArdRegressorState, SuffStats};
use crate::error::{Error, Result};
use crate::lstm::Gate;
use crate::numerics::Matrix;
use crate::optim::AdamState;

/// Quantities produced by one backward epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct BackwardReport {
    /// Readout evidence per observation, evaluated with the updated
    /// hyperparameters.
    pub likelihood: f64,
    /// `∂ℒ_y/∂h_i` per step, `n_b × n_m`.
    pub hidden_grad: Vec<Matrix>,
    /// `∂ℒ/∂s_gi` per step and gate.
    pub target_grad: Vec<[Matrix; 4]>,
}

/// `Σ_o (C⁻¹yyᵀC⁻¹ − C⁻¹) Ψ A⁻¹` restricted to the hidden columns, where
/// `Ψ = [1, h]` and each output `o` is its own regression.
pub fn likelihood_grad_hidden(readout: &[ArdRegressorState], hidden: &Matrix, targets: &Matrix) -> Result<Matrix> {
    let (n, n_m) = hidden.shape();
    if targets.rows() != n || targets.cols() != readout.len() {
        return Err(Error::shape(
            "likelihood_grad_hidden targets",
            format!("{n}x{}", readout.len()),
            format!("{}x{}", targets.rows(), targets.cols()),
        ));
    }
    let psi = with_bias(hidden);
    let gram = psi.gram();
    let mut grad = Matrix::zeros(n, n_m);
    for (o, reg) in readout.iter().enumerate() {
        let y = targets.column(o);
        let stats = SuffStats::with_gram(gram.clone(), &psi, &y);
        let post = posterior_from_stats(&stats, &reg.alpha, reg.beta)?;
        add_hidden_columns(&mut grad, &design_gradient(&psi, &y, &post, reg.beta));
    }
    Ok(grad)
}

fn with_bias(hidden: &Matrix) -> Matrix {
    let (n, n_m) = hidden.shape();
    let mut psi = Matrix::zeros(n, 1 + n_m);
    for r in 0..n {
        let row = psi.row_mut(r);
        row[0] = 1.0;
        row[1..].copy_from_slice(hidden.row(r));
    }
    psi
}

fn add_hidden_columns(acc: &mut Matrix, design_grad: &Matrix) {
    for r in 0..acc.rows() {
        let src = &design_grad.row(r)[1..];
        for (a, g) in acc.row_mut(r).iter_mut().zip(src) {
            *a += g;
        }
    }
}

/// Rows of `parts` stacked in order.
fn stack<'a>(parts: impl Iterator<Item = &'a Matrix>) -> Matrix {
    let parts: Vec<&Matrix> = parts.collect();
    Matrix::vstack(&parts)
}

impl ArdLstmModel {
    fn slot_steps(&self, slot: usize, m: usize, shared: bool) -> Vec<usize> {
        if shared {
            (0..m).collect()
        } else {
            vec![slot]
        }
    }

    /// Re-estimates every regression from `trace` and the normalized
    /// `targets`, updates the gate targets and prunes. `epoch` is only used
    /// for error reporting.
    pub fn backward_epoch(&mut self, trace: &EpochTrace, targets: &[Matrix], epoch: usize) -> Result<BackwardReport> {
        let m = trace.steps.len();
        if targets.len() != m {
            return Err(Error::shape("backward targets", m, targets.len()));
        }
        let n_b = trace.steps.first().map_or(0, |s| s.phi.rows());
        let c = self.config.clone();
        let (n_f, n_m, n_out) = (c.n_features, c.n_units, c.n_outputs);
        for (s, y) in trace.steps.iter().zip(targets) {
            if s.phi.shape() != (n_b, c.gate_dim()) {
                return Err(Error::TraceStale("trace rows do not match the model".into()));
            }
            if y.shape() != (n_b, n_out) {
                return Err(Error::shape("backward targets", format!("{n_b}x{n_out}"), format!("{}x{}", y.rows(), y.cols())));
            }
        }
        if !c.share_weights_over_time && m != self.n_steps || !c.share_output_over_time && m != self.n_steps {
            return Err(Error::shape("sequence length", self.n_steps, m));
        }

        // 1. readout regressions and ∂ℒ_y/∂h
        let shared_out = c.share_output_over_time;
        let readout_slots = self.readout.len();
        let mut hidden_grad = vec![Matrix::zeros(n_b, n_m); m];
        let mut total_evidence = 0.0;
        for slot in 0..readout_slots {
            let steps = self.slot_steps(slot, m, shared_out);
            let psi = with_bias(&stack(steps.iter().map(|&i| &trace.steps[i].hidden_mp)));
            let y_all = stack(steps.iter().map(|&i| &targets[i]));
            let gram = psi.gram();
            let results: Vec<Result<(f64, Matrix)>> = self.readout[slot]
                .par_iter_mut()
                .enumerate()
                .map(|(o, reg)| {
                    let y = y_all.column(o);
                    let stats = SuffStats::with_gram(gram.clone(), &psi, &y);
                    let post = reg.sweep(&stats, &c.hyperprior, &c.bounds)?;
                    let ev = evidence_from_posterior(&stats, &post, &reg.alpha, reg.beta);
                    let grad = design_gradient(&psi, &y, &post, reg.beta);
                    reg.prune(c.tau);
                    Ok((ev, grad))
                })
                .collect();
            let mut grad = Matrix::zeros(psi.rows(), n_m);
            for r in results {
                let (ev, g) = r?;
                total_evidence += ev;
                add_hidden_columns(&mut grad, &g);
            }
            for (block, &i) in steps.iter().enumerate() {
                for b in 0..n_b {
                    hidden_grad[i].row_mut(b).copy_from_slice(grad.row(block * n_b + b));
                }
            }
        }
        let likelihood = total_evidence / (n_out * m * n_b) as f64;
        if !likelihood.is_finite() {
            return Err(Error::Divergence { epoch });
        }

        // 2. mean-based backpropagation through the cell
        let mut target_grad: Vec<[Matrix; 4]> = vec![std::array::from_fn(|_| Matrix::zeros(n_b, n_m)); m];
        let mut dh_next = Matrix::zeros(n_b, n_m);
        let mut dc_next = Matrix::zeros(n_b, n_m);
        let mut f_next = Matrix::zeros(n_b, n_m);
        let zeros = Matrix::zeros(n_b, n_m);
        for i in (0..m).rev() {
            let st = &trace.steps[i];
            let c_prev = if i > 0 { &trace.steps[i - 1].cell_mean } else { &zeros };
            let [f, z, cand, o] = &st.gate_mean;
            let dgs = &mut target_grad[i];
            for b in 0..n_b {
                for l in 0..n_m {
                    let dh = hidden_grad[i][(b, l)] + dh_next[(b, l)];
                    let tc = st.cell_mean[(b, l)].tanh();
                    let dc = dh * o[(b, l)] * (1.0 - tc * tc) + dc_next[(b, l)] * f_next[(b, l)];
                    let (fv, zv, cv, ov) = (f[(b, l)], z[(b, l)], cand[(b, l)], o[(b, l)]);
                    dgs[Gate::Candidate.index()][(b, l)] = dc * zv * (1.0 - cv * cv);
                    dgs[Gate::Input.index()][(b, l)] = dc * cv * zv * (1.0 - zv);
                    dgs[Gate::Forget.index()][(b, l)] = dc * c_prev[(b, l)] * fv * (1.0 - fv);
                    dgs[Gate::Output.index()][(b, l)] = dh * tc * ov * (1.0 - ov);
                    dc_next[(b, l)] = dc;
                }
            }
            let slot = self.gate_slot(i);
            let mut dh_prev = Matrix::zeros(n_b, n_m);
            for g in Gate::ALL {
                let dg = &dgs[g.index()];
                for (l, reg) in self.gates[g.index()][slot].iter().enumerate() {
                    let rec = &reg.mean[1 + n_f..];
                    for b in 0..n_b {
                        let d = dg[(b, l)];
                        if d == 0.0 {
                            continue;
                        }
                        for (j, r) in rec.iter().enumerate() {
                            dh_prev[(b, j)] += d * r;
                        }
                    }
                }
            }
            f_next = f.clone();
            dh_next = dh_prev;
        }

        // 3. target update: s = mean_K(ŝ) + λ·ADAM(∂ℒ/∂s), clipped
        let per_gate = m * n_b * n_m;
        let fresh = match &self.adam {
            Some(states) => states.iter().any(|s| s.len() != per_gate),
            None => true,
        };
        if fresh {
            self.adam = Some(std::array::from_fn(|_| AdamState::new(per_gate, c.adam)));
        }
        let adam = self.adam.as_mut().expect("adam state initialized above");
        let new_targets: [Vec<Matrix>; 4] = Gate::ALL.map(|g| {
            let gi = g.index();
            let flat: Vec<f64> = target_grad.iter().flat_map(|d| d[gi].as_slice().iter().copied()).collect();
            let dir = adam[gi].direction(&flat);
            let clip = target_clip(g);
            (0..m)
                .map(|i| {
                    let base = &trace.steps[i].pre_sample_mean[gi];
                    let mut s = Matrix::zeros(n_b, n_m);
                    for (idx, v) in s.as_mut_slice().iter_mut().enumerate() {
                        *v = (base.as_slice()[idx] + c.learning_rate * dir[i * n_b * n_m + idx]).clamp(-clip, clip);
                    }
                    s
                })
                .collect()
        });

        // 4. gate regressions on the new targets
        let shared_gates = c.share_weights_over_time;
        let gate_slots = self.gates[0].len();
        for slot in 0..gate_slots {
            let steps = self.slot_steps(slot, m, shared_gates);
            let phi = stack(steps.iter().map(|&i| &trace.steps[i].phi));
            let gram = phi.gram();
            for g in Gate::ALL {
                let s_all = stack(steps.iter().map(|&i| &new_targets[g.index()][i]));
                let results: Vec<Result<()>> = self.gates[g.index()][slot]
                    .par_iter_mut()
                    .enumerate()
                    .map(|(l, reg)| {
                        let s = s_all.column(l);
                        let stats = SuffStats::with_gram(gram.clone(), &phi, &s);
                        reg.sweep(&stats, &c.hyperprior, &c.bounds)?;
                        reg.prune(c.tau);
                        Ok(())
                    })
                    .collect();
                results.into_iter().collect::<Result<()>>()?;
            }
        }
        self.targets = Some(new_targets);

        Ok(BackwardReport {
            likelihood,
            hidden_grad,
            target_grad,
        })
    }
}
