//! M/dPlN/1 waiting time and the ruin probability of the dual risk process.
//!
//! cargo run --release --example mg1_ruin

use dpln::distribution::DplnParams;
use dpln::laplace::EulerParams;
use dpln::queueing::{mg1_solve, ruin_surface, PosteriorOptions, TamSettings};

fn main() -> dpln::Result<()> {
    let p = DplnParams::new(3.0, 2.0, 0.0, 0.25)?;
    let grid: Vec<f64> = (0..=10).map(|i| i as f64).collect();
    let sol = mg1_solve(&p, 0.5, &TamSettings::default(), Some(&grid), &EulerParams::default())?;
    println!("rho = {:.5}  rho_tam = {:.5}", sol.rho, sol.rho_tam);
    for (t, c) in grid.iter().zip(&sol.wq.cdf) {
        println!("W_q({t:>4}) = {c:.6}   psi({t}) = {:.6}", 1.0 - c);
    }

    // a tiny "posterior": three draws, one of them with an infinite mean
    let draws = [
        p,
        DplnParams::new(2.5, 2.0, 0.1, 0.3)?,
        DplnParams::new(0.9, 2.0, 0.0, 0.25)?,
    ];
    let u = [0.0, 1.0, 5.0, 20.0];
    for rep in ruin_surface(&draws, &u, &[0.3, 0.6], &PosteriorOptions::default())? {
        println!("lambda = {}: E(psi(u)) = {:?}", rep.lambda, rep.psi_mean);
    }
    Ok(())
}
