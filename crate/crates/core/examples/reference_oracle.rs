//! Exact KKT solutions for tiny instances, checked against random feasible points.

use netum::{generate_instance, reference_solution, InstanceSpec};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> netum::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..5 {
        let problem = generate_instance(&InstanceSpec::new(5, 3, seed).with_capacities(0.5, 1.5))?;
        let sol = reference_solution(&problem)?;
        let mut beaten = 0;
        for _ in 0..10_000 {
            let mut x: Vec<f64> = (0..problem.n())
                .map(|_| (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64)
                .collect();
            let load = (0..problem.m())
                .map(|j| problem.routing().row_dot(j, &x) / problem.capacities()[j])
                .fold(0.0, f64::max);
            x.iter_mut().for_each(|v| *v /= load.max(1.0));
            if x.iter().all(|v| *v > 0.0) && problem.total_utility(&x)? > sol.value {
                beaten += 1;
            }
        }
        println!(
            "seed {seed}: U* = {:.6}, active links = {}, random points beating it = {beaten}",
            sol.value,
            sol.lambda.iter().filter(|l| **l > 0.0).count()
        );
    }
    Ok(())
}
