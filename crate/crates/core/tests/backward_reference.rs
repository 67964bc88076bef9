//! One backward epoch of a single-unit cell against a straight-line
//! reimplementation built on nalgebra.

use ardlstm::ard::ArdRegressorState;
use ardlstm::ard_lstm::{ArdLstmConfig, ArdLstmModel, EpochTrace, ForwardOptions, Propagation};
use ardlstm::lstm::Gate;
use ardlstm::numerics::stream_rng;
use ardlstm::Matrix;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

struct RefReg {
    alpha: Vec<f64>,
    beta: f64,
    mean: Vec<f64>,
    cov: DMatrix<f64>,
    gamma: Vec<f64>,
    pruned: Vec<bool>,
    evidence: f64,
    /// `∂ℒ/∂Φ`
    design_grad: DMatrix<f64>,
}

fn posterior(phi: &DMatrix<f64>, s: &DVector<f64>, alpha: &[f64], beta: f64) -> (DVector<f64>, DMatrix<f64>) {
    let prec = phi.transpose() * phi * beta + DMatrix::from_diagonal(&DVector::from_column_slice(alpha));
    let cov = prec.try_inverse().expect("invertible");
    let mean = &cov * phi.transpose() * s * beta;
    (mean, cov)
}

fn reference_sweep(phi: &DMatrix<f64>, s: &DVector<f64>, reg: &ArdRegressorState, tau: f64) -> RefReg {
    let (n, d) = phi.shape();
    let (mu, sigma) = posterior(phi, s, &reg.alpha, reg.beta);
    let gamma_old: Vec<f64> = (0..d).map(|k| 1.0 - reg.alpha[k] * sigma[(k, k)]).collect();
    let alpha: Vec<f64> = (0..d).map(|k| (1.0 / (mu[k] * mu[k] + sigma[(k, k)])).clamp(1e1, 1e6)).collect();
    let resid = (s - phi * &mu).norm_squared();
    let beta = ((n as f64 - gamma_old.iter().sum::<f64>()) / resid).clamp(1e4, 1e6);

    let (mu, sigma) = posterior(phi, s, &alpha, beta);
    let a_inv = DMatrix::from_diagonal(&DVector::from_iterator(d, alpha.iter().map(|a| 1.0 / a)));
    let c = DMatrix::identity(n, n) / beta + phi * a_inv * phi.transpose();
    let c_inv = c.clone().try_inverse().expect("invertible");
    let evidence = -0.5 * (c.determinant().ln() + (s.transpose() * &c_inv * s)[(0, 0)]);
    let design_grad = (s - phi * &mu) * mu.transpose() * beta - phi * &sigma * beta;

    let gamma: Vec<f64> = (0..d).map(|k| 1.0 - alpha[k] * sigma[(k, k)]).collect();
    let pruned: Vec<bool> = gamma.iter().map(|g| *g <= tau).collect();
    let mean = (0..d).map(|k| if pruned[k] { 0.0 } else { mu[k] }).collect();
    RefReg {
        alpha,
        beta,
        mean,
        cov: sigma,
        gamma,
        pruned,
        evidence,
        design_grad,
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1.0)
}

fn assert_reg(name: &str, got: &ArdRegressorState, want: &RefReg) {
    let d = got.dim();
    assert!(close(got.beta, want.beta), "{name} beta {} vs {}", got.beta, want.beta);
    assert_eq!(got.pruned, want.pruned, "{name} mask");
    for k in 0..d {
        assert!(close(got.alpha[k], want.alpha[k]), "{name} alpha[{k}] {} vs {}", got.alpha[k], want.alpha[k]);
        assert!(close(got.mean[k], want.mean[k]), "{name} mean[{k}] {} vs {}", got.mean[k], want.mean[k]);
        assert!(close(got.gamma[k], want.gamma[k]), "{name} gamma[{k}]");
        for j in 0..d {
            assert!(close(got.cov[(k, j)], want.cov[(k, j)]), "{name} cov[{k},{j}]");
        }
    }
}

fn random_seq(m: usize, n_b: usize, w: usize, rng: &mut impl Rng) -> Vec<Matrix> {
    (0..m)
        .map(|_| {
            let mut x = Matrix::zeros(n_b, w);
            x.as_mut_slice().iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            x
        })
        .collect()
}

fn adam_first_step(g: f64) -> f64 {
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let m = (1.0 - b1) * g / (1.0 - b1);
    let v = (1.0 - b2) * g * g / (1.0 - b2);
    m / (v.sqrt() + eps)
}

fn check(seed: u64, propagation: Propagation) {
    let (m, n_b) = (2, 2);
    let mut cfg = ArdLstmConfig::new(1, 1, 1);
    cfg.mc_samples = 7;
    cfg.propagation = propagation;
    let before = ArdLstmModel::new(cfg.clone(), m, seed).unwrap();
    let mut rng = stream_rng(seed, 99);
    let x = random_seq(m, n_b, 1, &mut rng);
    let y = random_seq(m, n_b, 1, &mut rng);
    let opts = ForwardOptions {
        propagation,
        mc_samples: cfg.mc_samples,
        keep_samples: false,
    };
    let trace: EpochTrace = before.forward_epoch(&x, opts, seed + 1).unwrap();
    let mut model = before.clone();
    let report = model.backward_epoch(&trace, &y, 1).unwrap();
    let st = &trace.steps;

    // 1. per-step readout regressions on Ψ = [1, h_MP]
    let mut evidence = 0.0;
    let mut dh_out = [[0.0; 2]; 2];
    for i in 0..m {
        let psi = DMatrix::from_fn(n_b, 2, |b, k| if k == 0 { 1.0 } else { st[i].hidden_mp[(b, 0)] });
        let s = DVector::from_fn(n_b, |b, _| y[i][(b, 0)]);
        let r = reference_sweep(&psi, &s, &before.readout[i][0], cfg.tau);
        assert_reg(&format!("readout step {i}"), &model.readout[i][0], &r);
        evidence += r.evidence;
        for b in 0..n_b {
            dh_out[i][b] = r.design_grad[(b, 1)];
            assert!(close(report.hidden_grad[i][(b, 0)], dh_out[i][b]), "dL/dh step {i} design {b}");
        }
    }
    assert!(close(report.likelihood, evidence / (m * n_b) as f64), "likelihood");

    // 2. mean-based backpropagation, recurrent weight at index 2 of [1, x, h]
    let rec = |g: Gate| before.gates[g.index()][0][0].mean[2];
    let gm = |i: usize, g: Gate, b: usize| st[i].gate_mean[g.index()][(b, 0)];
    let mut dgate = [[[0.0; 2]; 4]; 2];
    for b in 0..n_b {
        let mut dh_next = 0.0;
        let mut dc_next = 0.0;
        let mut f_next = 0.0;
        for i in (0..m).rev() {
            let dh = dh_out[i][b] + dh_next;
            let c = st[i].cell_mean[(b, 0)];
            let c_prev = if i > 0 { st[i - 1].cell_mean[(b, 0)] } else { 0.0 };
            let (f, z, cand, o) = (gm(i, Gate::Forget, b), gm(i, Gate::Input, b), gm(i, Gate::Candidate, b), gm(i, Gate::Output, b));
            let dc = dh * o * (1.0 - c.tanh().powi(2)) + dc_next * f_next;
            dgate[i][Gate::Forget.index()][b] = dc * c_prev * f * (1.0 - f);
            dgate[i][Gate::Input.index()][b] = dc * cand * z * (1.0 - z);
            dgate[i][Gate::Candidate.index()][b] = dc * z * (1.0 - cand * cand);
            dgate[i][Gate::Output.index()][b] = dh * c.tanh() * o * (1.0 - o);
            dh_next = Gate::ALL.iter().map(|&g| dgate[i][g.index()][b] * rec(g)).sum();
            dc_next = dc;
            f_next = f;
        }
    }
    for i in 0..m {
        for g in Gate::ALL {
            for b in 0..n_b {
                assert!(close(report.target_grad[i][g.index()][(b, 0)], dgate[i][g.index()][b]), "dL/ds step {i} {g:?}");
            }
        }
    }

    // 3. targets: sampled pre-activation mean plus one ADAM step, clipped
    let targets = model.targets.as_ref().unwrap();
    for g in Gate::ALL {
        let clip = if g == Gate::Candidate { 5.0 } else { 9.0 };
        for i in 0..m {
            for b in 0..n_b {
                let raw = st[i].pre_sample_mean[g.index()][(b, 0)] + cfg.learning_rate * adam_first_step(dgate[i][g.index()][b]);
                let want = raw.clamp(-clip, clip);
                assert!(close(targets[g.index()][i][(b, 0)], want), "target {g:?} step {i}");
            }
        }
    }

    // 4. one shared regression per gate on all m·n_b rows of Φ = [1, x, h_prev]
    let phi = DMatrix::from_fn(m * n_b, 3, |r, k| st[r / n_b].phi[(r % n_b, k)]);
    for g in Gate::ALL {
        let s = DVector::from_fn(m * n_b, |r, _| targets[g.index()][r / n_b][(r % n_b, 0)]);
        let r = reference_sweep(&phi, &s, &before.gates[g.index()][0][0], cfg.tau);
        assert_reg(&format!("{g:?} gate"), &model.gates[g.index()][0][0], &r);
    }
}

#[test]
fn sampled_backward_epoch_matches_reference() {
    for seed in [1, 2, 3] {
        check(seed, Propagation::Sampled);
    }
}

#[test]
fn mean_based_backward_epoch_matches_reference() {
    for seed in [4, 5] {
        check(seed, Propagation::MeanBased);
    }
}
