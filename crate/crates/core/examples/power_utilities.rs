//! Alpha-fair utilities other than log.

use netum::{
    em_run, reference_solution, run_alg2, EmConfig, MdConfig, Mode, NumProblem, UtilitySpec,
};

fn main() -> netum::Result<()> {
    let rows = vec![vec![0, 1], vec![1, 2]];
    for alpha in [0.5, 2.0, 4.0] {
        let problem = NumProblem::from_rows(
            3,
            rows.clone(),
            vec![1.0, 1.0],
            UtilitySpec::Power { alpha },
        )?;
        let exact = reference_solution(&problem)?;
        let em = em_run(&problem, &EmConfig::new(&problem, 1e-6))?;
        let md = run_alg2(&problem, &MdConfig::new(&problem, 1e-2, Mode::LogShift))?;
        println!("alpha = {alpha}");
        println!("  exact x = {:.5?}", exact.x);
        println!("  EM    x = {:.5?}", em.recovered_x);
        println!("  A2    x = {:.5?}", md.solution);
    }
    Ok(())
}
