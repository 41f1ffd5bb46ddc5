//! Two users sharing one unit link. The optimum is x = (1/2, 1/2) with
//! price 2 and utility -2 ln 2; every solver should land there.

use netum::{
    em_run, reference_solution, run_alg1, run_alg2, EmConfig, MdConfig, Mode, NumProblem,
    UtilitySpec,
};

fn main() -> netum::Result<()> {
    let problem = NumProblem::from_rows(2, vec![vec![0, 1]], vec![1.0], UtilitySpec::Log)?;
    let exact = -2.0 * 2f64.ln();

    let oracle = reference_solution(&problem)?;
    println!(
        "oracle  x = {:?}  lambda = {:?}  U = {:.6}",
        oracle.x, oracle.lambda, oracle.value
    );

    let cfg = MdConfig::new(&problem, 0.01, Mode::LogShift).with_theta0(1.0);
    let a1 = run_alg1(&problem, &cfg)?;
    let a2 = run_alg2(&problem, &cfg)?;
    for r in [&a1, &a2] {
        println!(
            "{}     x = [{:.4}, {:.4}]  U = {:.6}  iters = {}  violation = {:.2e}",
            r.algorithm.label(),
            r.solution[0],
            r.solution[1],
            r.utility(),
            r.total_iters,
            r.max_violation
        );
    }

    let em = em_run(&problem, &EmConfig::new(&problem, 1e-3))?;
    println!(
        "EM      x = [{:.6}, {:.6}]  lambda = {:.6}  U = {:.6}  gap = {:.1e}  iters = {}",
        em.recovered_x[0],
        em.recovered_x[1],
        em.lambda_best[0],
        em.primal_utility,
        em.gap,
        em.iterations
    );
    println!("exact   U = {exact:.6}");
    Ok(())
}
