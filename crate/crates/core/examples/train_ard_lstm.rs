//! Trains an ARD-LSTM and prints the evidence and sparsity trajectory.

use ardlstm::ard_lstm::{ArdLstmConfig, ArdLstmModel, Propagation};
use ardlstm::data::{default_designs, generate_bending_like, BendingSurrogateConfig};
use ardlstm::eval::r_squared;

fn main() -> ardlstm::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(150);
    let data = generate_bending_like(&BendingSurrogateConfig::default(), &default_designs(7), 41, 0)?;
    let x = data.normalized_inputs()?;
    let y = data.normalized_targets()?;

    let mut cfg = ArdLstmConfig::new(data.n_features(), 16, data.n_outputs());
    cfg.max_epochs = epochs;
    let mut model = ArdLstmModel::new(cfg, data.n_steps(), 1)?;
    let report = model.fit(&x, &y)?;

    println!("{} epochs, converged: {}", report.epochs, report.converged);
    println!("epoch  likelihood  gates%  readout%");
    for (n, sp) in report.sparsity.iter().enumerate().step_by((report.epochs / 10).max(1)) {
        let l = if n == 0 { f64::NAN } else { report.likelihood[n - 1] };
        let gates = 100.0 * sp.gates.iter().sum::<f64>() / 4.0;
        println!("{n:>5}  {l:>10.4}  {gates:>6.1}  {:>8.1}", 100.0 * sp.readout);
    }

    let pred = model.predict(&x, Propagation::MeanBased, 1, 0)?;
    let mean = pred
        .mean
        .iter()
        .map(|m| data.normalizer.denormalize_targets(m))
        .collect::<ardlstm::Result<Vec<_>>>()?;
    println!("R2 = {:.4}", r_squared(&data.targets, &mean)?);
    Ok(())
}
