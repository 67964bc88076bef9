//! Saves a trained model with its dataset and checks that the reloaded
//! copy predicts the same values.

use ardlstm::ard_lstm::{ArdLstmConfig, ArdLstmModel, Propagation};
use ardlstm::checkpoint::{self, Checkpoint, SavedModel};
use ardlstm::data::{default_designs, generate_bending_like, BendingSurrogateConfig};

fn main() -> ardlstm::Result<()> {
    let data = generate_bending_like(&BendingSurrogateConfig::default(), &default_designs(7), 41, 0)?;
    let x = data.normalized_inputs()?;
    let mut cfg = ArdLstmConfig::new(data.n_features(), 8, data.n_outputs());
    cfg.max_epochs = 30;
    let mut model = ArdLstmModel::new(cfg, data.n_steps(), 3)?;
    model.fit(&x, &data.normalized_targets()?)?;
    let before = model.predict(&x, Propagation::Sampled, 50, 9)?;

    let path = std::env::temp_dir().join("ardlstm_example_checkpoint.bin");
    checkpoint::save(
        &path,
        &Checkpoint {
            model: SavedModel::Ard(model),
            dataset: data,
        },
    )?;
    let loaded = checkpoint::load(&path)?;
    println!("{} bytes written to {}", std::fs::metadata(&path)?.len(), path.display());

    let SavedModel::Ard(model) = loaded.model else {
        unreachable!("saved an ard-lstm model")
    };
    let after = model.predict(&loaded.dataset.normalized_inputs()?, Propagation::Sampled, 50, 9)?;
    let diff = before
        .mean
        .iter()
        .zip(&after.mean)
        .map(|(a, b)| a.max_abs_diff(b))
        .fold(0.0, f64::max);
    println!("epochs trained {}, largest prediction difference {diff:e}", model.epochs_trained());
    std::fs::remove_file(&path)?;
    Ok(())
}
