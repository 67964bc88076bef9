//! Sampled and mean-based propagation on a small trained model.

use ardlstm::ard_lstm::{ArdLstmConfig, ArdLstmModel, ForwardOptions, Propagation};
use ardlstm::data::{default_designs, generate_bending_like, BendingSurrogateConfig, SequenceDataset};
use ardlstm::eval::{linspace, propagation_agreement, uncertainty_sweep, SweepOptions};

fn trained() -> (ArdLstmModel, SequenceDataset) {
    let data = generate_bending_like(&BendingSurrogateConfig::default(), &default_designs(5), 12, 0).unwrap();
    let mut cfg = ArdLstmConfig::new(data.n_features(), 4, data.n_outputs());
    cfg.max_epochs = 40;
    cfg.mc_samples = 20;
    let mut model = ArdLstmModel::new(cfg, data.n_steps(), 2).unwrap();
    model.fit(&data.normalized_inputs().unwrap(), &data.normalized_targets().unwrap()).unwrap();
    (model, data)
}

#[test]
fn mean_based_hidden_states_lie_within_three_standard_errors() {
    let (model, data) = trained();
    let a = propagation_agreement(&model, &data.normalized_inputs().unwrap(), 1000, 6, 3).unwrap();
    assert!(a.within_3se >= 0.95, "{a:?}");
}

#[test]
fn single_sample_stays_within_single_draw_noise() {
    let (model, data) = trained();
    let x = data.normalized_inputs().unwrap();
    let opts = |propagation, k| ForwardOptions {
        propagation,
        mc_samples: k,
        keep_samples: false,
    };
    let mean = model.forward_epoch(&x, opts(Propagation::MeanBased, 1), 0).unwrap();
    let one = model.forward_epoch(&x, opts(Propagation::Sampled, 1), 5).unwrap();
    // tanh bounds every hidden state, so a single draw moves it by at most 2
    for (a, b) in mean.steps.iter().zip(&one.steps) {
        assert!(a.hidden_mp.max_abs_diff(&b.hidden_mp) <= 2.0);
    }
    // averaged over everything, one draw lands close to the mean path
    let n: usize = mean.steps.iter().map(|s| s.hidden_mp.as_slice().len()).sum();
    let avg: f64 = mean
        .steps
        .iter()
        .zip(&one.steps)
        .flat_map(|(a, b)| a.hidden_mp.as_slice().iter().zip(b.hidden_mp.as_slice()).map(|(p, q)| (p - q).abs()))
        .sum::<f64>()
        / n as f64;
    let spread: f64 = one.steps.iter().flat_map(|s| s.hidden_std.as_slice().iter().copied()).sum::<f64>() / n as f64;
    assert!(avg < 0.25, "mean absolute difference {avg}, spread {spread}");
}

#[test]
fn sweep_is_invariant_under_grid_order() {
    let (model, data) = trained();
    let grid = linspace(-70.0, 70.0, 9);
    let mut shuffled = grid.clone();
    shuffled.reverse();
    shuffled.swap(1, 5);
    let opts = SweepOptions::default();
    let a = uncertainty_sweep(&model, &data, &grid, &opts).unwrap();
    let b = uncertainty_sweep(&model, &data, &shuffled, &opts).unwrap();
    assert_eq!(a, b);
    assert!(a.extrapolation[0] && a.extrapolation[8]);
    assert!(!a.extrapolation[4]);
    assert!(a.ei.iter().all(|v| *v >= 0.0));
    assert!(uncertainty_sweep(&model, &data, &[], &opts).unwrap().is_empty());
}
