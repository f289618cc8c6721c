//! Simulation as a check on the analytic G/M/1 and risk results.
//!
//! cargo run --release --example simulate

use dpln::distribution::{dpln_moment, DplnParams};
use dpln::queueing::{gm1_solve, TamSettings};
use dpln::sim::{geometric_chi_square, simulate, simulate_ruin, Law, SimConfig};

fn main() -> dpln::Result<()> {
    let p = DplnParams::new(3.0, 2.0, 0.0, 0.25)?;
    let mu = 2.0 / dpln_moment(1.0, &p)?;
    let r0 = gm1_solve(&p, mu, &TamSettings::default())?.r0;

    let cfg = SimConfig::new(1_000_000, 11, Law::Dpln { params: p }, Law::Exponential { rate: mu });
    let res = simulate(&cfg)?;
    println!("utilization {:.4} ± {:.4} (rho = 0.5)", res.utilization, res.utilization_se);
    // successive arrivals see correlated counts, so test every 25th
    let (stat, df, pval) = geometric_chi_square(&res.thinned_counts(25), r0)?;
    println!("r0 = {r0:.5}  chi2 = {stat:.2} on {df} df, p = {pval:.3}");

    let mm1 = simulate(&SimConfig::new(200_000, 3, Law::Exponential { rate: 1.0 }, Law::Exponential { rate: 2.0 }))?;
    println!("M/M/1 mean wait {:.4} ± {:.4} (exact 0.5)", mm1.mean_wait, mm1.mean_wait_se);

    // exponential claims: psi(u) = rho e^{-(1-rho)u/m}
    let rs = simulate_ruin(0.5, &Law::Exponential { rate: 1.0 }, &[0.0, 2.0], 20_000, 2_000.0, 4)?;
    for (u, f) in rs.u.iter().zip(&rs.frequency) {
        println!("psi({u}) ≈ {f:.4}  exact {:.4}", 0.5 * (-0.5 * u).exp());
    }
    Ok(())
}
