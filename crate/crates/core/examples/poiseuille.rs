//! Force-driven channel flow between bounce-back walls, compared with the
//! analytic parabola.
//!
//! `cargo run --example poiseuille -- [ny] [tau] [steps]`

use latentflow::lbm::{Lattice, LatticeConfig, ObstacleMask};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let ny: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(34);
    let tau: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.8);
    let steps: u64 = args
        .next()
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(20_000);
    let (nx, force) = (4, 1e-6);

    let walls = ObstacleMask::from_fn(nx, ny, |_, y| y == 0 || y == ny - 1);
    let config = LatticeConfig::enclosed(nx, ny, tau, walls)?.with_body_force([force, 0.0]);
    let mut lattice = Lattice::new(config)?;
    lattice.run(steps)?;
    let m = lattice.macroscopics()?;

    // Link bounce-back puts the no-slip plane halfway between solid and fluid rows.
    let nu = (tau - 0.5) / 3.0;
    let (lo, hi) = (0.5, ny as f64 - 1.5);
    let exact = |y: f64| force / (2.0 * nu) * (y - lo) * (hi - y);
    let peak = exact(0.5 * (lo + hi));
    let mut worst: f64 = 0.0;
    println!("{:>4} {:>14} {:>14}", "y", "simulated", "analytic");
    for y in 1..ny - 1 {
        let u = m.ux[y * nx];
        worst = worst.max((u - exact(y as f64)).abs() / peak);
        println!("{y:>4} {u:>14.6e} {:>14.6e}", exact(y as f64));
    }
    let mid = ny / 2;
    println!(
        "mid-channel relative error {:.3e}",
        (m.ux[mid * nx] - exact(mid as f64)).abs() / exact(mid as f64)
    );
    println!("max error relative to peak {worst:.3e}");
    Ok(())
}
