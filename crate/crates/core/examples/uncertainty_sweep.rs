//! Predictive uncertainty over a grid of designs, with the expected
//! improvement against the interpolated training response.

use ardlstm::ard_lstm::{ArdLstmConfig, ArdLstmModel};
use ardlstm::data::{default_designs, generate_bending_like, BendingSurrogateConfig};
use ardlstm::eval::{linspace, uncertainty_sweep, SweepOptions};

fn main() -> ardlstm::Result<()> {
    let data = generate_bending_like(&BendingSurrogateConfig::default(), &default_designs(7), 41, 0)?;
    let mut cfg = ArdLstmConfig::new(data.n_features(), 16, data.n_outputs());
    cfg.max_epochs = 100;
    let mut model = ArdLstmModel::new(cfg, data.n_steps(), 1)?;
    model.fit(&data.normalized_inputs()?, &data.normalized_targets()?)?;

    let sweep = uncertainty_sweep(&model, &data, &linspace(-75.0, 75.0, 31), &SweepOptions::default())?;
    println!("   eps   sigma      ei  extrapolated");
    for i in 0..sweep.len() {
        let marker = if data.designs.contains(&sweep.epsilon[i]) { "*" } else { " " };
        println!(
            "{:>6.1}{marker} {:.4}  {:.2e}  {}",
            sweep.epsilon[i], sweep.sigma_norm[i], sweep.ei[i], sweep.extrapolation[i]
        );
    }
    println!("(* marks a training design)");
    Ok(())
}
