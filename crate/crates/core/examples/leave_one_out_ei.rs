//! Leave one design out, retrain, and look for it again with the expected
//! improvement measured against the model that saw every design.

use ardlstm::ard_lstm::{ArdLstmConfig, ArdLstmModel};
use ardlstm::data::{default_designs, generate_bending_like, BendingSurrogateConfig, SequenceDataset};
use ardlstm::eval::{linspace, uncertainty_sweep, uncertainty_sweep_against, SweepOptions};

fn train(data: &SequenceDataset, epochs: usize) -> ardlstm::Result<ArdLstmModel> {
    let mut cfg = ArdLstmConfig::new(data.n_features(), 16, data.n_outputs());
    cfg.max_epochs = epochs;
    let mut model = ArdLstmModel::new(cfg, data.n_steps(), 1)?;
    model.fit(&data.normalized_inputs()?, &data.normalized_targets()?)?;
    Ok(model)
}

fn main() -> ardlstm::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let holdout = 40.0;
    let data = generate_bending_like(&BendingSurrogateConfig::default(), &default_designs(7), 41, 0)?;
    let idx = data.designs.iter().position(|d| *d == holdout).expect("design present");
    let loo = data.without_design(idx)?;

    let full = train(&data, epochs)?;
    let partial = train(&loo, epochs)?;
    let grid = linspace(-60.0, 60.0, 25);
    let opts = SweepOptions::default();
    let before = uncertainty_sweep(&full, &data, &grid, &opts)?;
    let after = uncertainty_sweep_against(&partial, &loo, &full, &data, &grid, &opts)?;

    println!("   eps  sigma(all)  sigma(loo)        ei");
    for i in 0..grid.len() {
        println!(
            "{:>6.1}  {:>10.4}  {:>10.4}  {:>8.2e}",
            grid[i], before.sigma_norm[i], after.sigma_norm[i], after.ei[i]
        );
    }
    let best = after.argmax_ei().expect("non-empty grid");
    println!("held out {holdout}, largest EI at {}", after.epsilon[best]);
    Ok(())
}
