//! Evaluate, sample and invert the dPlN law.
//!
//! cargo run --example density

use dpln::distribution::{dpln_cdf, dpln_moment, dpln_pdf, nl_pdf, sample_dpln, DplnParams};
use dpln::quantile::dpln_quantile;
use dpln::rng;
use dpln::special::mills_ratio;

fn main() -> dpln::Result<()> {
    let p = DplnParams::new(3.0, 2.0, 0.5, 0.25)?;
    println!("R(0) = {:.10}  R(10) = {:.10}", mills_ratio(0.0)?, mills_ratio(10.0)?);

    println!("{:>8} {:>12} {:>12} {:>12}", "x", "pdf", "cdf", "nl_pdf(ln x)");
    for x in [0.1, 0.5, 1.0, 2.0, 5.0, 20.0] {
        println!("{x:>8} {:>12.6e} {:>12.6} {:>12.6e}", dpln_pdf(x, &p)?, dpln_cdf(x, &p)?, nl_pdf(x.ln(), &p));
    }

    for prob in [0.01, 0.5, 0.99, 1.0 - 1e-9] {
        let x = dpln_quantile(prob, &p, None)?;
        println!("q({prob}) = {x:.6}  cdf back = {:.12}", dpln_cdf(x, &p)?);
    }

    // moments exist only below alpha
    println!("E[X] = {:.6}", dpln_moment(1.0, &p)?);
    println!("E[X^3]: {}", dpln_moment(3.0, &p).unwrap_err());

    let mut r = rng::root(42);
    let xs = sample_dpln(200_000, &p, &mut r)?;
    let mean = xs.values().iter().sum::<f64>() / xs.len() as f64;
    println!("sample mean of {} draws = {mean:.6}", xs.len());
    Ok(())
}
