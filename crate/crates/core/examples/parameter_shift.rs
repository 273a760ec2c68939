//! Parameter-shift Jacobian of the layered ansatz against central finite
//! differences.

use latentflow::qsim::{parameter_shift_jacobian, LayeredAnsatz};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ansatz = LayeredAnsatz::new(8, 7)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let theta: Vec<f64> = (0..ansatz.n_params())
        .map(|_| rng.random_range(-3.0..3.0))
        .collect();
    let jac = parameter_shift_jacobian(&ansatz, &theta)?;
    let h = 1e-5;
    let mut worst = 0.0f64;
    for p in 0..ansatz.n_params() {
        let mut t = theta.clone();
        t[p] += h;
        let up = ansatz.probabilities(&t)?;
        t[p] -= 2.0 * h;
        let down = ansatz.probabilities(&t)?;
        for k in 0..up.len() {
            worst = worst.max((jac.get(k, p) - (up[k] - down[k]) / (2.0 * h)).abs());
        }
    }
    println!("{} parameters, {} outcomes", ansatz.n_params(), 1usize << 8);
    println!("max |parameter shift - finite difference| {worst:.3e}");
    Ok(())
}
