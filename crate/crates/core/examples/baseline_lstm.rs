//! Point-estimate LSTM on the synthetic bending dataset.

use ardlstm::data::{default_designs, generate_bending_like, BendingSurrogateConfig};
use ardlstm::eval::r_squared;
use ardlstm::lstm::{BaselineConfig, BaselineModel};

fn main() -> ardlstm::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1500);
    let data = generate_bending_like(&BendingSurrogateConfig::default(), &default_designs(7), 41, 0)?;
    let x = data.normalized_inputs()?;
    let y = data.normalized_targets()?;

    let cfg = BaselineConfig {
        n_units: 16,
        epochs,
        ..BaselineConfig::default()
    };
    let mut model = BaselineModel::new(cfg, data.n_features(), data.n_outputs(), 7);
    model.fit(&x, &y)?;
    for (n, loss) in model.history.iter().enumerate().step_by((epochs / 10).max(1)) {
        println!("epoch {:>5}  loss {loss:.5}", n + 1);
    }

    let pred = model
        .predict(&x)?
        .iter()
        .map(|p| data.normalizer.denormalize_targets(p))
        .collect::<ardlstm::Result<Vec<_>>>()?;
    println!("R2 = {:.4}", r_squared(&data.targets, &pred)?);
    Ok(())
}
