//! Writes a few seeded instances to a directory and reads them back.
//!
//! cargo run --example generate_instances -- [DIR]

use netum::{generate_instance, InstanceSpec, NumProblem};

fn main() -> netum::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| {
        std::env::temp_dir()
            .join("num-instances")
            .display()
            .to_string()
    });
    std::fs::create_dir_all(&dir)?;
    for (n, m) in [(10, 5), (50, 100), (100, 150)] {
        let spec = InstanceSpec::new(n, m, 2019);
        let problem = generate_instance(&spec)?;
        let path = format!("{dir}/n{n}_m{m}.json");
        problem.write(&path)?;
        let back = NumProblem::read(&path)?;
        assert_eq!(back, problem);
        let density = problem.routing().nnz() as f64 / (n * m) as f64;
        println!(
            "{path}: density {density:.3}, b in [{:.3}, {:.3}]",
            problem.min_capacity(),
            problem.max_capacity()
        );
    }
    Ok(())
}
