//! The ellipsoid method on the dual, with the accuracy certificate and the
//! recovered primal point, for both direction rules.

use netum::{em_run, generate_instance, reference_solution, Direction, EmConfig, InstanceSpec};

fn main() -> netum::Result<()> {
    let problem = generate_instance(&InstanceSpec::new(6, 4, 5).with_capacities(0.5, 1.5))?;
    let exact = reference_solution(&problem)?;
    println!(
        "optimal U = {:.8}, lambda* = {:.5?}",
        exact.value, exact.lambda
    );

    for direction in [Direction::Standard, Direction::Verbatim] {
        let cfg = EmConfig::new(&problem, 1e-4).with_direction(direction);
        match em_run(&problem, &cfg) {
            Ok(r) => {
                println!("direction {}:", direction.as_str());
                println!(
                    "  budget {} iterations, used {} ({} productive)",
                    r.budget, r.iterations, r.productive_count
                );
                println!(
                    "  phi(lambda) = {:.8}, U(x) = {:.8}, gap = {:.2e}",
                    r.dual_value, r.primal_utility, r.gap
                );
                println!(
                    "  violation = {:.2e}, certificate support = {}",
                    r.violation_norm, r.certificate_support
                );
                println!("  lambda = {:.5?}", r.lambda_best);
            }
            Err(e) => println!("direction {}: {e}", direction.as_str()),
        }
    }
    Ok(())
}
