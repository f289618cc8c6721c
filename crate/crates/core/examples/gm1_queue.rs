//! dPlN/M/1 queue: fixed parameters, then a posterior sweep over μ.
//!
//! cargo run --release --example gm1_queue

use dpln::distribution::{dpln_moment, sample_dpln, DplnParams};
use dpln::gibbs::{default_init, run_gibbs, GibbsConfig, PriorSpec};
use dpln::queueing::{gm1_solve, gm1_sweep, PosteriorOptions, TamSettings};
use dpln::rng;

fn main() -> dpln::Result<()> {
    let p = DplnParams::new(3.0, 2.0, 0.0, 0.25)?;
    let sol = gm1_solve(&p, 2.0 / dpln_moment(1.0, &p)?, &TamSettings::default())?;
    println!("rho = {:?}  r0 = {:.5}", sol.load, sol.r0);
    for n in 0..4 {
        println!("P(Q = {n}) = {:.5}", sol.queue_pmf(n));
    }
    println!("median sojourn = {:.4}", sol.w_quantile(0.5));

    // interarrival data, a short chain, then E(ρ|y) and P(Q=0|y) per μ
    let data = sample_dpln(400, &p, &mut rng::root(5))?;
    let cfg = GibbsConfig { iterations: 10_000, burn_in: 1_000, thin: 30, seed: 5, init: default_init(&data.to_log())? };
    let chain = run_gibbs(&data, &PriorSpec::default(), &cfg)?;
    let opts = PosteriorOptions { stride: 10, ..Default::default() };
    let mus = [4.0, 2.0, 1.5, 1.0];
    println!("{:>6} {:>10} {:>10} {:>10}", "mu", "P(rho<1)", "E(rho)", "P(Q=0)");
    for r in gm1_sweep(chain.draws(), &mus, &opts)? {
        println!(
            "{:>6} {:>10.4} {:>10.4} {:>10.4}",
            r.mu.unwrap_or(f64::NAN),
            r.stability_prob,
            r.rho_mean.unwrap_or(f64::NAN),
            r.queue_pmf.first().copied().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
