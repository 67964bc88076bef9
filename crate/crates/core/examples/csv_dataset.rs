//! Writes the synthetic dataset to CSV and reads it back with an inferred
//! schema.

use ardlstm::data::{default_designs, generate_bending_like, load_csv, read_csv_header, BendingSurrogateConfig, CsvSchema};

fn main() -> ardlstm::Result<()> {
    let data = generate_bending_like(&BendingSurrogateConfig::default(), &default_designs(7), 41, 0)?;
    let path = std::env::temp_dir().join("ardlstm_example_dataset.csv");
    data.write_csv(&path)?;

    let header = read_csv_header(&path)?;
    println!("{} columns, first ones: {:?}", header.len(), &header[..6]);
    let schema = CsvSchema::infer(&header, 2)?;
    let back = load_csv(&path, &schema)?;
    println!(
        "{} designs x {} steps, {} features, {} outputs",
        back.n_designs(),
        back.n_steps(),
        back.n_features(),
        back.n_outputs()
    );
    println!("designs: {:?}", back.designs);
    let worst = data
        .targets
        .iter()
        .zip(&back.targets)
        .map(|(a, b)| a.max_abs_diff(b))
        .fold(0.0, f64::max);
    println!("largest target difference after the round trip: {worst:e}");
    std::fs::remove_file(&path)?;
    Ok(())
}
