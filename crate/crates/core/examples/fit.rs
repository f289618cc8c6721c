//! Fit dPlN to synthetic data with the Gibbs sampler and summarize the chain.
//!
//! cargo run --release --example fit

use dpln::distribution::{sample_dpln, DplnParams, Scale};
use dpln::gibbs::{default_init, predictive_density, run_gibbs, summarize, GibbsConfig, PriorSpec, PARAM_NAMES};
use dpln::rng;

fn main() -> dpln::Result<()> {
    let truth = DplnParams::new(3.0, 2.0, 0.0, 0.25)?;
    let data = sample_dpln(500, &truth, &mut rng::root(1))?;

    let cfg = GibbsConfig {
        iterations: 20_000,
        burn_in: 2_000,
        thin: 10,
        seed: 7,
        init: default_init(&data.to_log())?,
    };
    let chain = run_gibbs(&data, &PriorSpec::default(), &cfg)?;
    let s = summarize(chain.draws())?;

    println!("{} draws", s.n_draws);
    for (j, name) in PARAM_NAMES.iter().enumerate() {
        println!(
            "{name:>6}: truth {:>6.3}  mean {:>7.4}  95% [{:.4}, {:.4}]",
            truth.to_array()[j],
            s.mean[j],
            s.ci95[j][0],
            s.ci95[j][1]
        );
    }

    let grid = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let dens = predictive_density(chain.draws(), &grid, Scale::Log)?;
    for (y, d) in grid.iter().zip(dens) {
        println!("predictive f_Y({y}) = {d:.5}");
    }
    Ok(())
}
