//! Sampled against mean-based propagation on a trained model: agreement of
//! the hidden states and time per epoch.

use std::time::Instant;

use ardlstm::ard_lstm::{ArdLstmConfig, ArdLstmModel, ForwardOptions, Propagation};
use ardlstm::data::{default_designs, generate_bending_like, BendingSurrogateConfig};
use ardlstm::eval::propagation_agreement;

fn main() -> ardlstm::Result<()> {
    let data = generate_bending_like(&BendingSurrogateConfig::default(), &default_designs(7), 41, 0)?;
    let x = data.normalized_inputs()?;
    let y = data.normalized_targets()?;
    let mut cfg = ArdLstmConfig::new(data.n_features(), 16, data.n_outputs());
    cfg.max_epochs = 100;
    let mut model = ArdLstmModel::new(cfg, data.n_steps(), 1)?;
    model.fit(&x, &y)?;

    for propagation in [Propagation::Sampled, Propagation::MeanBased] {
        let mut m = model.clone();
        let opts = ForwardOptions {
            propagation,
            mc_samples: 100,
            keep_samples: false,
        };
        let start = Instant::now();
        for seed in 0..5 {
            let epoch = m.epochs_trained() + 1;
            let trace = m.forward_epoch(&x, opts, seed)?;
            m.backward_epoch(&trace, &y, epoch)?;
        }
        println!("{propagation:?}: {:.1} ms per epoch", start.elapsed().as_secs_f64() * 200.0);
    }

    let a = propagation_agreement(&model, &x, 1000, 5, 42)?;
    println!(
        "hidden states within 3 standard errors: {:.1}% (naive per-step error: {:.1}%), largest hidden difference {:.2e}",
        100.0 * a.within_3se,
        100.0 * a.within_3se_naive,
        a.max_hidden_diff
    );
    Ok(())
}
