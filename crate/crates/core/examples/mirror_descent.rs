//! Both mirror-descent variants on a random instance, with a sampled trace.

use netum::{
    generate_instance, reference_solution, run_alg1, run_alg2, InstanceSpec, MdConfig, Mode,
};

fn main() -> netum::Result<()> {
    let problem = generate_instance(&InstanceSpec::new(4, 3, 11).with_capacities(0.5, 1.5))?;
    let best = reference_solution(&problem)?.value;
    println!(
        "n = {}, m = {}, optimal U = {best:.6}",
        problem.n(),
        problem.m()
    );

    let eps = 2e-2;
    let cfg = MdConfig::new(&problem, eps, Mode::LogShift);
    println!(
        "theta0 = {:.4}, floor = {}",
        cfg.theta0,
        cfg.floor(&problem)
    );

    let a1 = run_alg1(&problem, &cfg)?;
    println!(
        "A1: {} iterations ({} productive), U = {:.6}, U* - U = {:.2e}, violation = {:.2e}, {:?}",
        a1.total_iters,
        a1.productive_count,
        a1.utility(),
        best - a1.utility(),
        a1.max_violation,
        a1.wall_time
    );

    let a2 = run_alg2(
        &problem,
        &MdConfig::new(&problem, 2e-3, Mode::LogShift).with_trace_every(250_000),
    )?;
    println!(
        "A2: {} iterations ({} productive), U = {:.6}, U* - U = {:.2e}, violation = {:.2e}, {:?}",
        a2.total_iters,
        a2.productive_count,
        a2.utility(),
        best - a2.utility(),
        a2.max_violation,
        a2.wall_time
    );
    println!("unproductive steps per link: {:?}", a2.link_histogram);
    println!(
        "{:>8} {:>5} {:>12} {:>10}",
        "iter", "kind", "step", "stop sum"
    );
    for t in &a2.trace {
        let kind = match t.link {
            None => "f".to_string(),
            Some(j) => format!("g{j}"),
        };
        println!(
            "{:>8} {:>5} {:>12.3e} {:>10.1}",
            t.iteration, kind, t.step, t.stop_sum
        );
    }
    Ok(())
}
