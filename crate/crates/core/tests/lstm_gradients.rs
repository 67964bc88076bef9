//! Backpropagation through time for the point-estimate cell.

use ardlstm::lstm::{lstm_backward, lstm_forward, mse_loss, sgd_step, LstmWeights};
use ardlstm::Matrix;
use proptest::prelude::*;

fn build(n_f: usize, n_m: usize, n_out: usize, m: usize, n_b: usize, values: &[f64]) -> (LstmWeights, Vec<Matrix>, Vec<Matrix>) {
    let mut w = LstmWeights::zeros(n_f, n_m, n_out);
    let p = w.param_count();
    w.assign_flat(&values[..p]);
    let mut rest = values[p..].iter().copied();
    let mut seq = |cols: usize| -> Vec<Matrix> {
        (0..m)
            .map(|_| {
                let mut x = Matrix::zeros(n_b, cols);
                x.as_mut_slice().iter_mut().for_each(|v| *v = rest.next().unwrap());
                x
            })
            .collect()
    };
    let x = seq(n_f);
    let y = seq(n_out);
    (w, x, y)
}

fn max_rel_fd_error(w: &LstmWeights, x: &[Matrix], y: &[Matrix]) -> f64 {
    let z = Matrix::zeros(x[0].rows(), w.n_units);
    let loss = |w: &LstmWeights| mse_loss(y, &lstm_forward(w, x, &z, &z).unwrap().predictions).unwrap();
    let g = lstm_backward(&lstm_forward(w, x, &z, &z).unwrap(), y, w).unwrap().flatten();
    let flat = w.flatten();
    let h = 1e-6;
    let fd: Vec<f64> = (0..flat.len())
        .map(|i| {
            let mut p = w.clone();
            let mut q = w.clone();
            let mut fp = flat.clone();
            let mut fq = flat.clone();
            fp[i] += h;
            fq[i] -= h;
            p.assign_flat(&fp);
            q.assign_flat(&fq);
            (loss(&p) - loss(&q)) / (2.0 * h)
        })
        .collect();
    let diff = g.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    diff / fd.iter().map(|v| v.abs()).fold(1e-12, f64::max)
}

#[test]
fn scalar_two_step_gradient_matches_finite_differences() {
    let values: Vec<f64> = (0..64).map(|i| (i as f64 * 0.7).sin() * 0.8).collect();
    let (w, x, y) = build(1, 1, 1, 2, 1, &values);
    assert!(max_rel_fd_error(&w, &x, &y) <= 1e-5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gradient_matches_finite_differences(
        n_f in 1usize..=3,
        n_m in 1usize..=4,
        n_out in 1usize..=2,
        m in 1usize..=5,
        n_b in 1usize..=2,
        values in prop::collection::vec(-1.0f64..1.0, 200),
    ) {
        let (w, x, y) = build(n_f, n_m, n_out, m, n_b, &values);
        prop_assert!(max_rel_fd_error(&w, &x, &y) <= 1e-5);
    }
}

#[test]
fn small_sgd_steps_decrease_the_loss() {
    let values: Vec<f64> = (0..400).map(|i| (i as f64 * 1.3).cos() * 0.6).collect();
    let (mut w, x, y) = build(2, 3, 2, 4, 2, &values);
    let z = Matrix::zeros(2, 3);
    let mut last = f64::INFINITY;
    for _ in 0..50 {
        let trace = lstm_forward(&w, &x, &z, &z).unwrap();
        let loss = mse_loss(&y, &trace.predictions).unwrap();
        assert!(loss <= last, "{loss} > {last}");
        last = loss;
        let g = lstm_backward(&trace, &y, &w).unwrap();
        w = sgd_step(&w, &g, 0.01);
    }
}
