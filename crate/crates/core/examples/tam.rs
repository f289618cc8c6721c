//! Calibrate a transform approximation and compare it with Monte Carlo.
//!
//! cargo run --release --example tam

use dpln::distribution::{dpln_moment, sample_dpln, DplnParams};
use dpln::rng;
use dpln::tam::{calibrate, TamGrid};

fn main() -> dpln::Result<()> {
    let p = DplnParams::new(3.0, 2.0, 0.0, 0.25)?;
    let cal = calibrate(&p, 1000, &TamGrid::default())?;
    println!(
        "r = {}  q = {:.2}  residual = {:.2e}  target met: {}",
        cal.r, cal.q, cal.residual, cal.target_met
    );
    println!("TAM mean {:.6} vs E[X] {:.6}", cal.tam.mean(), dpln_moment(1.0, &p)?);

    let xs = sample_dpln(500_000, &p, &mut rng::root(3))?;
    for s in [0.01, 0.1, 1.0, 10.0, 100.0] {
        let mc = xs.values().iter().map(|x| (-s * x).exp()).sum::<f64>() / xs.len() as f64;
        let f = cal.tam.eval_transform(s)?;
        println!("s = {s:>6}: f*_N = {f:.6}  MC = {mc:.6}  diff = {:.1e}", (f - mc).abs());
    }
    Ok(())
}
