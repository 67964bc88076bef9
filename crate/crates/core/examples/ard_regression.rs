//! Relevance determination on a plain linear regression: three of eight
//! features carry signal, the rest are noise.
//!
//! With the default bounds the noise weights end at the precision cap
//! (alpha = 1e6) and their means shrink towards zero, but gamma stays above
//! tau = 1e-4, so nothing is masked. Widen `Bounds::alpha` and run many more
//! sweeps to see the mask fill in.

use ardlstm::ard::{ArdRegressorState, Bounds, HyperpriorConfig, SuffStats};
use ardlstm::numerics::stream_rng;
use ardlstm::Matrix;
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> ardlstm::Result<()> {
    let (n, d) = (60, 8);
    let truth = [0.0, 1.2, 0.0, 0.0, -0.7, 0.0, 0.4, 0.0];
    let mut rng = stream_rng(11, 0);
    let mut phi = Matrix::zeros(n, d);
    phi.as_mut_slice().iter_mut().for_each(|v| *v = rng.sample::<f64, _>(StandardNormal));
    let s: Vec<f64> = phi
        .matvec(&truth)
        .iter()
        .map(|v| v + 0.01 * rng.sample::<f64, _>(StandardNormal))
        .collect();

    let stats = SuffStats::new(&phi, &s)?;
    let hyper = HyperpriorConfig::default();
    let bounds = Bounds::default();
    let mut reg = ArdRegressorState::from_prior(&hyper, d, &mut rng);
    for _ in 0..200 {
        reg.sweep(&stats, &hyper, &bounds)?;
    }
    reg.prune(1e-4);

    println!("beta = {:.3e}", reg.beta);
    println!("  k   truth     mean    alpha      gamma  pruned");
    for k in 0..d {
        println!(
            "{k:>3} {:>7.3} {:>8.4} {:>8.2e} {:>10.3e}  {}",
            truth[k], reg.mean[k], reg.alpha[k], reg.gamma[k], reg.pruned[k]
        );
    }
    // predictive moments at a new point
    let x: Vec<f64> = (0..d).map(|k| if k % 2 == 1 { 1.0 } else { 0.0 }).collect();
    let (mean, var) = reg.predictive(&x);
    println!("prediction at {x:?}: {mean:.4} +- {:.4}", var.sqrt());
    Ok(())
}
